//! Presentation Exchange definitions compiled from a login policy.
//!
//! Every pattern becomes one input descriptor asking for the presence of its
//! claims; all descriptors of one expected credential share a group and a
//! `pick 1` submission requirement. The definition only guides wallet-side
//! selection. Compliance is always re-checked against the policy.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::jsonpath::JsonPath;
use crate::policy::LoginPolicy;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DescriptorError {
    #[error("input descriptors are not valid JSON: {0}")]
    Syntax(String),
    #[error("invalid input descriptors: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub path: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optional: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<Value>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<Field>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDescriptor {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub group: Vec<String>,
    #[serde(default)]
    pub constraints: Constraints,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl InputDescriptor {
    /// True when every non-optional field has a path selecting something in
    /// `credential`. Filters are not evaluated.
    pub fn is_satisfied_by(&self, credential: &Value) -> bool {
        self.constraints.fields.iter().filter(|f| f.optional != Some(true)).all(|f| {
            f.path.iter().any(|p| JsonPath::parse(p).map(|p| p.matches(credential)).unwrap_or(false))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRequirement {
    pub rule: String,
    pub count: u32,
    pub from: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentationDefinition {
    pub id: String,
    pub input_descriptors: Vec<InputDescriptor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub submission_requirements: Vec<SubmissionRequirement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Value>,
}

pub fn descriptor_id(credential_id: &str, pattern_index: usize) -> String {
    alloc::format!("{credential_id}_pattern{pattern_index}")
}

fn jwt_format() -> Value {
    serde_json::json!({
        "jwt_vc_json": {"alg": ["EdDSA", "ES256"]},
        "jwt_vp_json": {"alg": ["EdDSA", "ES256"]}
    })
}

/// Compiles `policy` into a presentation definition with the given id.
pub fn generate_presentation_definition(policy: &LoginPolicy, id: &str) -> PresentationDefinition {
    let mut input_descriptors = Vec::new();
    let mut submission_requirements = Vec::new();
    for ec in policy.expected_credentials() {
        for (k, pattern) in ec.patterns.iter().enumerate() {
            let fields = pattern
                .claims
                .iter()
                .map(|c| Field {
                    path: alloc::vec![c.claim_path.as_str().to_string()],
                    optional: (!c.required).then_some(true),
                    filter: None,
                    extra: Map::new(),
                })
                .collect();
            input_descriptors.push(InputDescriptor {
                id: descriptor_id(&ec.credential_id, k),
                group: alloc::vec![ec.credential_id.clone()],
                constraints: Constraints { fields, extra: Map::new() },
                extra: Map::new(),
            });
        }
        submission_requirements.push(SubmissionRequirement {
            rule: "pick".into(),
            count: 1,
            from: ec.credential_id.clone(),
        });
    }
    PresentationDefinition { id: id.to_string(), input_descriptors, submission_requirements, format: Some(jwt_format()) }
}

/// A definition made of hand-written descriptors; no submission
/// requirements, so each descriptor asks for one credential.
pub fn override_definition(descriptors: Vec<InputDescriptor>, id: &str) -> PresentationDefinition {
    PresentationDefinition {
        id: id.to_string(),
        input_descriptors: descriptors,
        submission_requirements: Vec::new(),
        format: Some(jwt_format()),
    }
}

/// Parses a JSON array of input descriptors.
pub fn parse_descriptors(text: &str) -> Result<Vec<InputDescriptor>, DescriptorError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| DescriptorError::Syntax(e.to_string()))?;
    if !raw.is_array() {
        return Err(DescriptorError::Schema("expected a JSON array".into()));
    }
    let descriptors: Vec<InputDescriptor> =
        serde_json::from_value(raw).map_err(|e| DescriptorError::Schema(e.to_string()))?;
    if descriptors.is_empty() {
        return Err(DescriptorError::Schema("no input descriptors".into()));
    }
    for d in &descriptors {
        if d.id.is_empty() {
            return Err(DescriptorError::Schema("descriptor with empty id".into()));
        }
        for f in &d.constraints.fields {
            if f.path.is_empty() {
                return Err(DescriptorError::Schema(alloc::format!("descriptor {} has a field without paths", d.id)));
            }
        }
    }
    Ok(descriptors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;

    const RENAMING: &str = r#"[{"credentialID":"expected_credential_for_email","patterns":[
        {"issuer":"did:example:123","claims":[{"claimPath":"$.credentialSubject.e_mail","newPath":"$.email","token":"id_token"}]},
        {"issuer":"did:example:456","claims":[{"claimPath":"$.credentialSubject.email","token":"id_token"}]}]}]"#;
    const EMAIL: &str = r#"[{"credentialID":"one","patterns":[{"issuer":"did:web:app.altme.io:issuer",
        "claims":[{"claimPath":"$.credentialSubject.email","token":"id_token"}]}]}]"#;

    #[test]
    fn email_policy_compiles_to_one_group() {
        let pd = generate_presentation_definition(&parse_policy(RENAMING).unwrap(), "pd-1");
        let expected = serde_json::json!({
            "id": "pd-1",
            "input_descriptors": [
                {"id": "expected_credential_for_email_pattern0", "group": ["expected_credential_for_email"],
                 "constraints": {"fields": [{"path": ["$.credentialSubject.e_mail"]}]}},
                {"id": "expected_credential_for_email_pattern1", "group": ["expected_credential_for_email"],
                 "constraints": {"fields": [{"path": ["$.credentialSubject.email"]}]}}
            ],
            "submission_requirements": [{"rule": "pick", "count": 1, "from": "expected_credential_for_email"}],
            "format": jwt_format(),
        });
        assert_eq!(serde_json::to_value(&pd).unwrap(), expected);
    }

    #[test]
    fn altme_policy_compiles_to_one_descriptor() {
        let pd = generate_presentation_definition(&parse_policy(EMAIL).unwrap(), "x");
        assert_eq!(pd.input_descriptors.len(), 1);
        assert_eq!(pd.input_descriptors[0].constraints.fields[0].path, ["$.credentialSubject.email"]);
        assert_eq!(pd.submission_requirements, [SubmissionRequirement { rule: "pick".into(), count: 1, from: "one".into() }]);
        assert!(pd.input_descriptors.iter().flat_map(|d| &d.constraints.fields).all(|f| f.filter.is_none()));
    }

    #[test]
    fn two_expected_credentials_give_two_groups() {
        let policy = parse_policy(
            r#"[{"credentialID":"a","patterns":[{"issuer":"did:example:1","claims":[{"claimPath":"$.x"}]}]},
                {"credentialID":"b","patterns":[{"issuer":"did:example:2","claims":[{"claimPath":"$.y","required":false}]}]}]"#,
        )
        .unwrap();
        let pd = generate_presentation_definition(&policy, "x");
        assert_eq!(pd.submission_requirements.len(), 2);
        assert_eq!(pd.input_descriptors[1].group, ["b"]);
        assert_eq!(pd.input_descriptors[1].constraints.fields[0].optional, Some(true));
    }

    #[test]
    fn override_descriptors_keep_unknown_members() {
        let text = r#"[{"id":"email","name":"Proof of email","constraints":{"fields":[
            {"path":["$.credentialSubject.type"],"filter":{"type":"string","pattern":"EmailPass"}}]}}]"#;
        let ds = parse_descriptors(text).unwrap();
        assert_eq!(ds[0].extra["name"], "Proof of email");
        let round: Value = serde_json::to_value(&ds).unwrap();
        assert_eq!(round, serde_json::from_str::<Value>(text).unwrap());
        assert!(matches!(parse_descriptors("{}"), Err(DescriptorError::Schema(_))));
        assert!(matches!(parse_descriptors("[{\"constraints\":{}}]"), Err(DescriptorError::Schema(_))));
        assert!(matches!(parse_descriptors("[oops"), Err(DescriptorError::Syntax(_))));
    }

    #[test]
    fn descriptor_satisfaction_is_presence_only() {
        let pd = generate_presentation_definition(&parse_policy(EMAIL).unwrap(), "x");
        let d = &pd.input_descriptors[0];
        assert!(d.is_satisfied_by(&serde_json::json!({"credentialSubject": {"email": "e"}})));
        assert!(!d.is_satisfied_by(&serde_json::json!({"credentialSubject": {"mail": "e"}})));
    }
}
