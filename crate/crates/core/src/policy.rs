//! Login policy: which credentials to ask for, which issuers to trust and
//! how their claims are carried into tokens.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::did::Did;
use crate::jsonpath::JsonPath;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("policy is not valid JSON: {0}")]
    Syntax(String),
    #[error("policy does not match the expected schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TokenKind {
    #[serde(rename = "id_token")]
    IdToken,
    #[default]
    #[serde(rename = "access_token")]
    AccessToken,
}

fn default_required() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ClaimEntry {
    pub claim_path: JsonPath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_path: Option<JsonPath>,
    #[serde(default)]
    pub token: TokenKind,
    #[serde(default = "default_required")]
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pattern {
    pub issuer: String,
    pub claims: Vec<ClaimEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedCredential {
    #[serde(rename = "credentialID")]
    pub credential_id: String,
    pub patterns: Vec<Pattern>,
}

/// A validated login policy. Construct with [`parse_policy`] or
/// [`LoginPolicy::new`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct LoginPolicy {
    expected: Vec<ExpectedCredential>,
}

impl LoginPolicy {
    pub fn new(expected: Vec<ExpectedCredential>) -> Result<Self, PolicyError> {
        let schema = |msg: String| Err(PolicyError::Schema(msg));
        if expected.is_empty() {
            return schema("policy lists no expected credentials".into());
        }
        let mut ids = BTreeSet::new();
        for ec in &expected {
            if ec.credential_id.is_empty() {
                return schema("empty credentialID".into());
            }
            if !ids.insert(ec.credential_id.as_str()) {
                return schema(alloc::format!("duplicate credentialID {:?}", ec.credential_id));
            }
            if ec.patterns.is_empty() {
                return schema(alloc::format!("credential {:?} has no patterns", ec.credential_id));
            }
            for p in &ec.patterns {
                if let Err(e) = Did::parse(&p.issuer) {
                    return schema(alloc::format!("issuer of {:?}: {e}", ec.credential_id));
                }
                for c in &p.claims {
                    if let Some(np) = &c.new_path {
                        if !np.is_definite() || np.segments().is_empty() {
                            return schema(alloc::format!("newPath {np} must address exactly one location"));
                        }
                        if np.segments().iter().any(|s| !matches!(s, crate::jsonpath::Segment::Name(_))) {
                            return schema(alloc::format!("newPath {np} may only contain member names"));
                        }
                    }
                }
            }
        }
        Ok(Self { expected })
    }

    pub fn expected_credentials(&self) -> &[ExpectedCredential] {
        &self.expected
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }
}

/// Parses and validates a login policy document. Defaults for `token` and
/// `required` are filled in; unknown fields are an error.
pub fn parse_policy(text: &str) -> Result<LoginPolicy, PolicyError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| PolicyError::Syntax(e.to_string()))?;
    let expected: Vec<ExpectedCredential> =
        serde_json::from_value(raw).map_err(|e| PolicyError::Schema(e.to_string()))?;
    LoginPolicy::new(expected)
}

/// Issuer of a decoded credential; either a string or an object with `id`.
pub fn credential_issuer(vc: &Value) -> Option<&str> {
    match vc.get("issuer")? {
        Value::String(s) => Some(s),
        Value::Object(o) => o.get("id")?.as_str(),
        _ => None,
    }
}

/// A credential matches a pattern when its issuer is the pattern's issuer
/// and every required claim path selects at least one value.
pub fn evaluate_pattern(vc: &Value, pattern: &Pattern) -> bool {
    credential_issuer(vc) == Some(pattern.issuer.as_str())
        && pattern.claims.iter().filter(|c| c.required).all(|c| c.claim_path.matches(vc))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub credential_id: String,
    pub vc_index: usize,
    pub pattern_index: usize,
}

/// Result of policy compliance: one entry per expected credential, in
/// policy order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyMatch {
    pub assignments: Vec<Assignment>,
}

impl PolicyMatch {
    pub fn get(&self, credential_id: &str) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.credential_id == credential_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("presented {presented} credentials, policy expects {expected}")]
    CountMismatch { expected: usize, presented: usize },
    #[error("the same credential was presented more than once")]
    DuplicateCredential,
    #[error("no assignment of presented credentials satisfies the login policy")]
    NoMatch,
}

/// Finds the bijection between expected and presented credentials.
///
/// Expected credentials are assigned in policy order, each to the
/// lowest-index unused credential that matches any of its patterns; the
/// first complete assignment found by this backtracking search is returned.
pub fn match_credentials(vcs: &[Value], policy: &LoginPolicy) -> Result<PolicyMatch, MatchError> {
    let expected = policy.expected_credentials();
    if vcs.len() != expected.len() {
        return Err(MatchError::CountMismatch { expected: expected.len(), presented: vcs.len() });
    }
    for (i, a) in vcs.iter().enumerate() {
        if vcs[..i].contains(a) {
            return Err(MatchError::DuplicateCredential);
        }
    }

    // table[e][v] = lowest matching pattern of expected credential e for vc v
    let table: Vec<Vec<Option<usize>>> = expected
        .iter()
        .map(|ec| vcs.iter().map(|vc| ec.patterns.iter().position(|p| evaluate_pattern(vc, p))).collect())
        .collect();

    let mut chosen = Vec::with_capacity(expected.len());
    let mut used = alloc::vec![false; vcs.len()];
    if !assign(&table, 0, &mut used, &mut chosen) {
        return Err(MatchError::NoMatch);
    }
    let assignments = chosen
        .into_iter()
        .enumerate()
        .map(|(e, (vc_index, pattern_index))| Assignment {
            credential_id: expected[e].credential_id.clone(),
            vc_index,
            pattern_index,
        })
        .collect();
    Ok(PolicyMatch { assignments })
}

fn assign(
    table: &[Vec<Option<usize>>],
    e: usize,
    used: &mut [bool],
    chosen: &mut Vec<(usize, usize)>,
) -> bool {
    if e == table.len() {
        return true;
    }
    for v in 0..used.len() {
        let Some(pattern) = table[e][v] else { continue };
        if used[v] {
            continue;
        }
        used[v] = true;
        chosen.push((v, pattern));
        if assign(table, e + 1, used, chosen) {
            return true;
        }
        chosen.pop();
        used[v] = false;
    }
    false
}
