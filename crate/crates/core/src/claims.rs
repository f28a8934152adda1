//! Turns the claims of matched credentials into `id_token` / `access_token`
//! payload fragments.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};

use crate::jsonpath::{InsertError, JsonPath, Segment};
use crate::policy::{ClaimEntry, Pattern, TokenKind};

/// Top-level token members owned by the provider.
pub const RESERVED_CLAIMS: [&str; 6] = ["iss", "sub", "aud", "exp", "iat", "nonce"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClaimError {
    #[error("claimPath {0} selects several values and needs a newPath")]
    MissingNewPath(String),
    #[error("conflicting values for {path} in the {token}")]
    PathConflict { token: &'static str, path: String },
    #[error("claimPath {path} selects two values named {key:?}")]
    AggregationCollision { path: String, key: String },
    #[error("required claim {0} is missing")]
    MissingClaim(String),
}

fn token_name(t: TokenKind) -> &'static str {
    match t {
        TokenKind::IdToken => "id_token",
        TokenKind::AccessToken => "access_token",
    }
}

/// Claim payloads destined for the two tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct TokenPair {
    pub id_token: Map<String, Value>,
    pub access_token: Map<String, Value>,
}

impl TokenPair {
    pub fn token(&self, kind: TokenKind) -> &Map<String, Value> {
        match kind {
            TokenKind::IdToken => &self.id_token,
            TokenKind::AccessToken => &self.access_token,
        }
    }

    fn token_mut(&mut self, kind: TokenKind) -> &mut Map<String, Value> {
        match kind {
            TokenKind::IdToken => &mut self.id_token,
            TokenKind::AccessToken => &mut self.access_token,
        }
    }

    pub fn contains_reserved(&self) -> bool {
        RESERVED_CLAIMS.iter().any(|k| self.id_token.contains_key(*k) || self.access_token.contains_key(*k))
    }
}

/// Where a claim ends up: `newPath` if given, else `$.<last element of
/// claimPath>`; the token defaults to the access token.
pub fn resolve_target(entry: &ClaimEntry) -> Result<(TokenKind, JsonPath), ClaimError> {
    if let Some(p) = &entry.new_path {
        return Ok((entry.token, p.clone()));
    }
    match entry.claim_path.last() {
        Some(Segment::Wildcard) | None => Err(ClaimError::MissingNewPath(entry.claim_path.to_string())),
        _ if entry.claim_path.has_wildcard() => Err(ClaimError::MissingNewPath(entry.claim_path.to_string())),
        Some(seg) => Ok((entry.token, JsonPath::child_of_root(&seg.key().expect("definite segment")))),
    }
}

/// Extracts the claims `pattern` names from a credential it matched.
///
/// A wildcard `claimPath` always aggregates its selection into one object
/// keyed by each node's last path element. Optional claims with no value
/// are skipped. Two entries landing on the same location conflict.
pub fn extract_claims(vc: &Value, pattern: &Pattern) -> Result<TokenPair, ClaimError> {
    let mut out = TokenPair::default();
    for entry in &pattern.claims {
        let (token, target) = resolve_target(entry)?;
        let selected = entry.claim_path.select(vc);
        if selected.is_empty() {
            if entry.required {
                return Err(ClaimError::MissingClaim(entry.claim_path.to_string()));
            }
            continue;
        }
        let value = if entry.claim_path.has_wildcard() {
            let mut aggregate = Map::new();
            for node in &selected {
                let key = node.ultimate_key().unwrap_or_default();
                if aggregate.insert(key.clone(), node.value.clone()).is_some() {
                    return Err(ClaimError::AggregationCollision { path: entry.claim_path.to_string(), key });
                }
            }
            Value::Object(aggregate)
        } else {
            selected[0].value.clone()
        };
        write(&mut out, token, &target, value)?;
    }
    Ok(out)
}

fn write(pair: &mut TokenPair, token: TokenKind, target: &JsonPath, value: Value) -> Result<(), ClaimError> {
    let conflict = || ClaimError::PathConflict { token: token_name(token), path: target.to_string() };
    if let Some(Segment::Name(first)) = target.segments().first() {
        if RESERVED_CLAIMS.contains(&first.as_str()) {
            return Err(conflict());
        }
    }
    target.insert(pair.token_mut(token), value).map_err(|e| match e {
        InsertError::Occupied | InsertError::NotWritable => conflict(),
    })
}

/// Deep-merges fragments. Equal values merge idempotently; differing
/// values at one location are a conflict.
pub fn merge_fragments(fragments: impl IntoIterator<Item = TokenPair>) -> Result<TokenPair, ClaimError> {
    let mut out = TokenPair::default();
    for frag in fragments {
        for kind in [TokenKind::IdToken, TokenKind::AccessToken] {
            let mut path = Vec::new();
            merge_into(out.token_mut(kind), frag.token(kind).clone(), &mut path)
                .map_err(|path| ClaimError::PathConflict { token: token_name(kind), path })?;
        }
    }
    Ok(out)
}

fn merge_into(dst: &mut Map<String, Value>, src: Map<String, Value>, path: &mut Vec<String>) -> Result<(), String> {
    for (k, v) in src {
        path.push(k.clone());
        match (dst.get_mut(&k), v) {
            (None, v) => {
                dst.insert(k, v);
            }
            (Some(Value::Object(d)), Value::Object(s)) => merge_into(d, s, path)?,
            (Some(existing), v) if *existing == v => {}
            _ => return Err(alloc::format!("$.{}", path.join("."))),
        }
        path.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;
    use serde_json::json;

    fn entry(json: &str) -> ClaimEntry {
        serde_json::from_str(json).unwrap()
    }

    fn pattern(claims: &str) -> Pattern {
        serde_json::from_str(&alloc::format!(r#"{{"issuer":"did:example:1","claims":{claims}}}"#)).unwrap()
    }

    fn obj(v: Value) -> Map<String, Value> {
        match v {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn targets_and_defaults() {
        let (t, p) =
            resolve_target(&entry(r#"{"claimPath":"$.credentialSubject.e_mail","newPath":"$.email","token":"id_token"}"#))
                .unwrap();
        assert_eq!((t, p.as_str()), (TokenKind::IdToken, "$.email"));
        let (t, p) = resolve_target(&entry(r#"{"claimPath":"$.credentialSubject.email"}"#)).unwrap();
        assert_eq!((t, p.as_str()), (TokenKind::AccessToken, "$.email"));
        assert_eq!(
            resolve_target(&entry(r#"{"claimPath":"$.credentialSubject.address.*"}"#)),
            Err(ClaimError::MissingNewPath("$.credentialSubject.address.*".into()))
        );
        assert!(resolve_target(&entry(r#"{"claimPath":"$.a[*].b"}"#)).is_err());
    }

    #[test]
    fn altme_email_goes_to_the_id_token() {
        let policy = parse_policy(
            r#"[{"credentialID":"one","patterns":[{"issuer":"did:web:app.altme.io:issuer",
                "claims":[{"claimPath":"$.credentialSubject.email","token":"id_token"}]}]}]"#,
        )
        .unwrap();
        let vc = json!({"issuer": "did:web:app.altme.io:issuer", "credentialSubject": {
            "id": "did:key:z6M", "email": "name@example.com", "type": "EmailPass", "issuedBy": {"name": "Altme"}}});
        let out = extract_claims(&vc, &policy.expected_credentials()[0].patterns[0]).unwrap();
        assert_eq!(out.id_token, obj(json!({"email": "name@example.com"})));
        assert!(out.access_token.is_empty());
    }

    #[test]
    fn rename_rule() {
        let p = pattern(r#"[{"claimPath":"$.credentialSubject.e_mail","newPath":"$.email","token":"id_token"}]"#);
        let out = extract_claims(&json!({"credentialSubject": {"e_mail": "a@b"}}), &p).unwrap();
        assert_eq!(out.id_token, obj(json!({"email": "a@b"})));
    }

    #[test]
    fn wildcard_aggregation() {
        let p = pattern(r#"[{"claimPath":"$.credentialSubject.address.*","newPath":"$.address"}]"#);
        let vc = json!({"credentialSubject": {"address": {"city": "X", "zip": "Y"}}});
        let out = extract_claims(&vc, &p).unwrap();
        assert_eq!(out.access_token, obj(json!({"address": {"city": "X", "zip": "Y"}})));
    }

    #[test]
    fn aggregation_key_ties_are_errors() {
        let p = pattern(r#"[{"claimPath":"$.credentialSubject.*.name","newPath":"$.names"}]"#);
        let vc = json!({"credentialSubject": {"a": {"name": 1}, "b": {"name": 2}}});
        assert!(matches!(extract_claims(&vc, &p), Err(ClaimError::AggregationCollision { .. })));
    }

    #[test]
    fn structured_values_are_copied_verbatim() {
        let p = pattern(r#"[{"claimPath":"$.credentialSubject.issuedBy"}]"#);
        let out = extract_claims(&json!({"credentialSubject": {"issuedBy": {"name": "Altme", "n": [1, 2]}}}), &p).unwrap();
        assert_eq!(out.access_token, obj(json!({"issuedBy": {"name": "Altme", "n": [1, 2]}})));
    }

    #[test]
    fn entries_colliding_on_one_target() {
        let p = pattern(r#"[{"claimPath":"$.credentialSubject.a","newPath":"$.x"},{"claimPath":"$.credentialSubject.b","newPath":"$.x"}]"#);
        let out = extract_claims(&json!({"credentialSubject": {"a": 1, "b": 1}}), &p);
        assert_eq!(out, Err(ClaimError::PathConflict { token: "access_token", path: "$.x".into() }));
    }

    #[test]
    fn reserved_members_cannot_be_written() {
        for name in RESERVED_CLAIMS {
            let p = pattern(&alloc::format!(r#"[{{"claimPath":"$.credentialSubject.{name}","token":"id_token"}}]"#));
            let vc = json!({"credentialSubject": {name: "forged"}});
            assert!(matches!(extract_claims(&vc, &p), Err(ClaimError::PathConflict { .. })), "{name}");
        }
    }

    #[test]
    fn optional_claims_are_skipped_when_absent() {
        let p = pattern(r#"[{"claimPath":"$.credentialSubject.a"},{"claimPath":"$.credentialSubject.b","required":false}]"#);
        let out = extract_claims(&json!({"credentialSubject": {"a": 1}}), &p).unwrap();
        assert_eq!(out.access_token, obj(json!({"a": 1})));
        let out = extract_claims(&json!({"credentialSubject": {"a": 1, "b": 2}}), &p).unwrap();
        assert_eq!(out.access_token, obj(json!({"a": 1, "b": 2})));
    }

    #[test]
    fn merging() {
        let id = |v: Value| TokenPair { id_token: obj(v), access_token: Map::new() };
        let access = |v: Value| TokenPair { id_token: Map::new(), access_token: obj(v) };

        let merged = merge_fragments([id(json!({"email": "e"})), access(json!({"role": "r"}))]).unwrap();
        assert_eq!(merged, TokenPair { id_token: obj(json!({"email": "e"})), access_token: obj(json!({"role": "r"})) });

        let merged = merge_fragments([id(json!({"email": "a"})), id(json!({"email": "a"}))]).unwrap();
        assert_eq!(merged.id_token, obj(json!({"email": "a"})));

        assert_eq!(
            merge_fragments([id(json!({"email": "a"})), id(json!({"email": "b"}))]),
            Err(ClaimError::PathConflict { token: "id_token", path: "$.email".into() })
        );

        let merged = merge_fragments([id(json!({"p": {"a": 1}})), id(json!({"p": {"b": 2}}))]).unwrap();
        assert_eq!(merged.id_token, obj(json!({"p": {"a": 1, "b": 2}})));
    }
}
