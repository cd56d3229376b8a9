//! Software-simulated enclave boundary.
//!
//! Secrets held by [`Enclave`] stay behind its API: the victim private key
//! leaves only sealed, or in plaintext through a release decision. Anything a
//! host-side component handles in plaintext is appended to the shared
//! [`ExposureLedger`], which is what a memory-forensics capture would see.
//! Every entry point goes through a counted boundary transition with an
//! optional injected cost.

mod boundary;
mod escrow;
mod ledger;
mod seal;


use thiserror::Error;

pub use boundary::{
    BoundaryStats, Enclave, EnclaveConfig, EcallOp, FileHandle, InBoundary, LaunchToken, VictimRecord,
    LABEL_NONCE, LABEL_VK_PRV, LABEL_WALLET, NONCE_LEN,
};
pub use escrow::{EscrowFile, ESCROW_MAGIC, ESCROW_VERSION};
pub use ledger::{Exposure, ExposureLedger};
pub use seal::{derive_seal_key, seal, unseal, DeviceSecret, SealedBlob, DEVICE_SECRET_LEN};

#[derive(Debug, Error)]
pub enum EnclaveError {
    #[error("unknown boundary operation {0:?}")]
    UnknownOp(String),
    #[error("malformed payload for {0}")]
    BadPayload(&'static str),
    #[error("sealed data failed authentication")]
    Authentication,
    #[error("malformed sealed blob")]
    MalformedBlob,
    #[error("device secret must be 32 bytes, got {0}")]
    DeviceSecretLength(usize),
    #[error("enclave launch refused: {0}")]
    LaunchRefused(&'static str),
    #[error("enclave has no victim key material; run keygen or load a victim record first")]
    NotProvisioned,
    #[error("victim key has not been released")]
    NotReleased,
    #[error("unknown file handle {0}")]
    UnknownHandle(u32),
    #[error("malformed victim record: {0}")]
    MalformedRecord(&'static str),
    #[error("malformed escrow file: {0}")]
    MalformedEscrow(&'static str),
    #[error(transparent)]
    Key(#[from] crate::keys::KeyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for EnclaveError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}
