//! Transport encoding of StatusList2021 bitstrings: GZIP, then base64url.

use std::io::{Read, Write};

use base64::engine::general_purpose::{STANDARD, URL_SAFE_NO_PAD};
use base64::Engine as _;
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use vcbridge_core::StatusBits;

/// Largest decompressed list accepted (16 Mi entries).
pub const MAX_LIST_BYTES: u64 = 2 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum EncodingError {
    #[error("encodedList is not base64url")]
    Base64,
    #[error("encodedList is not a GZIP stream: {0}")]
    Gzip(#[from] std::io::Error),
    #[error("decoded status list exceeds {MAX_LIST_BYTES} bytes")]
    TooLarge,
}

pub fn encode_list(bits: &StatusBits) -> String {
    let mut gz = GzEncoder::new(Vec::new(), Compression::default());
    gz.write_all(bits.as_bytes()).expect("writing to a Vec");
    URL_SAFE_NO_PAD.encode(gz.finish().expect("writing to a Vec"))
}

pub fn decode_list(encoded: &str) -> Result<StatusBits, EncodingError> {
    let trimmed = encoded.trim().trim_end_matches('=');
    let compressed = URL_SAFE_NO_PAD
        .decode(trimmed)
        .or_else(|_| STANDARD.decode(encoded.trim()))
        .map_err(|_| EncodingError::Base64)?;
    let mut out = Vec::new();
    GzDecoder::new(compressed.as_slice()).take(MAX_LIST_BYTES + 1).read_to_end(&mut out)?;
    if out.len() as u64 > MAX_LIST_BYTES {
        return Err(EncodingError::TooLarge);
    }
    Ok(StatusBits::from_bytes(out))
}
