//! Core logic of a bridge that signs users into OpenID Connect clients with
//! verifiable credentials.
//!
//! Everything here is pure and works without `std`: login policy parsing and
//! matching, presentation definition generation, claim remapping, compact
//! JWS, DID key handling, credential and presentation verification, and
//! status list bit lookups. Network access, storage and HTTP live in the
//! `vcbridge` crate.

#![no_std]

extern crate alloc;

pub mod claims;
pub mod credential;
pub mod did;
pub mod jsonpath;
pub mod jws;
pub mod pex;
pub mod policy;
pub mod status;

pub use claims::{extract_claims, merge_fragments, resolve_target, ClaimError, TokenPair};
pub use credential::{verify_vc, verify_vp, KeyResolver, PrefetchedResolver, VerifiedPresentation, VerifyError};
pub use did::{DidDocumentKey, DidError};
pub use jsonpath::JsonPath;
pub use pex::{generate_presentation_definition, InputDescriptor, PresentationDefinition};
pub use policy::{evaluate_pattern, match_credentials, parse_policy, LoginPolicy, PolicyMatch, TokenKind};
pub use status::{CredentialStatus, StatusBits, StatusListReference};
