//! StatusList2021 revocation entries and the decoded status bitstring.
//!
//! Bit `k` of the list belongs to the credential with `statusListIndex` k;
//! index 0 is the most significant bit of the first byte. A set bit means
//! revoked. Compression and transport encoding live with the IO layer.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatusError {
    #[error("malformed credentialStatus: {0}")]
    MalformedEntry(String),
    #[error("status list index {index} out of range for {len} entries")]
    IndexOutOfRange { index: u64, len: u64 },
    #[error("malformed status list credential: {0}")]
    MalformedList(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CredentialStatus {
    Active,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusListReference {
    pub status_list_credential: String,
    pub status_list_index: u64,
    pub purpose: String,
}

/// Reads the `credentialStatus` entry of a decoded credential. Credentials
/// without one have no status to check.
pub fn status_reference(vc: &Value) -> Result<Option<StatusListReference>, StatusError> {
    let Some(entry) = vc.get("credentialStatus") else {
        return Ok(None);
    };
    let bad = |m: &str| StatusError::MalformedEntry(m.to_string());
    if entry.get("type").and_then(Value::as_str) != Some("StatusList2021Entry") {
        return Err(bad("only StatusList2021Entry is supported"));
    }
    let purpose = entry.get("statusPurpose").and_then(Value::as_str).ok_or_else(|| bad("missing statusPurpose"))?;
    if purpose != "revocation" {
        return Err(bad("only the revocation purpose is supported"));
    }
    let url = entry
        .get("statusListCredential")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing statusListCredential"))?;
    let index = match entry.get("statusListIndex") {
        Some(Value::String(s)) => s.parse::<u64>().map_err(|_| bad("statusListIndex is not a non-negative integer"))?,
        Some(Value::Number(n)) => n.as_u64().ok_or_else(|| bad("statusListIndex is not a non-negative integer"))?,
        _ => return Err(bad("missing statusListIndex")),
    };
    Ok(Some(StatusListReference {
        status_list_credential: url.to_string(),
        status_list_index: index,
        purpose: purpose.to_string(),
    }))
}

/// The `credentialStatus` object pointing at `index` of the list at `url`.
pub fn status_entry(url: &str, index: u64) -> Value {
    serde_json::json!({
        "id": alloc::format!("{url}#{index}"),
        "type": "StatusList2021Entry",
        "statusPurpose": "revocation",
        "statusListIndex": index.to_string(),
        "statusListCredential": url,
    })
}

/// An uncompressed status bitstring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusBits {
    bytes: Vec<u8>,
}

impl StatusBits {
    pub fn zeroed(len_bytes: usize) -> Self {
        Self { bytes: alloc::vec![0; len_bytes] }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn get(&self, index: u64) -> Result<bool, StatusError> {
        if index >= self.len() {
            return Err(StatusError::IndexOutOfRange { index, len: self.len() });
        }
        let byte = self.bytes[(index / 8) as usize];
        Ok(byte & (0x80 >> (index % 8)) != 0)
    }

    pub fn set(&mut self, index: u64, revoked: bool) -> Result<(), StatusError> {
        if index >= self.len() {
            return Err(StatusError::IndexOutOfRange { index, len: self.len() });
        }
        let mask = 0x80 >> (index % 8);
        let byte = &mut self.bytes[(index / 8) as usize];
        if revoked {
            *byte |= mask;
        } else {
            *byte &= !mask;
        }
        Ok(())
    }

    pub fn status(&self, index: u64) -> Result<CredentialStatus, StatusError> {
        Ok(if self.get(index)? { CredentialStatus::Revoked } else { CredentialStatus::Active })
    }
}

/// The encoded list of a decoded status list credential, checked to be a
/// revocation list.
pub fn encoded_list(status_list_vc: &Value) -> Result<&str, StatusError> {
    let subject = status_list_vc
        .get("credentialSubject")
        .ok_or_else(|| StatusError::MalformedList("missing credentialSubject".into()))?;
    if subject.get("type").and_then(Value::as_str) != Some("StatusList2021") {
        return Err(StatusError::MalformedList("credentialSubject.type is not StatusList2021".into()));
    }
    if subject.get("statusPurpose").and_then(Value::as_str) != Some("revocation") {
        return Err(StatusError::MalformedList("statusPurpose is not revocation".into()));
    }
    subject
        .get("encodedList")
        .and_then(Value::as_str)
        .ok_or_else(|| StatusError::MalformedList("missing encodedList".into()))
}

/// Body of a status list credential carrying `encoded`.
pub fn status_list_credential_body(url: &str, encoded: &str) -> Value {
    serde_json::json!({
        "@context": ["https://www.w3.org/2018/credentials/v1", "https://w3id.org/vc/status-list/2021/v1"],
        "id": url,
        "type": ["VerifiableCredential", "StatusList2021Credential"],
        "credentialSubject": {
            "id": alloc::format!("{url}#list"),
            "type": "StatusList2021",
            "statusPurpose": "revocation",
            "encodedList": encoded,
        }
    })
}
