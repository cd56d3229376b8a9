//! Operator escrow file:
//!
//! ```text
//! magic   "ESCROWSIM-ESCROW\0" (17 bytes)
//! version u8 = 1
//! device  32 bytes
//! count   u8
//! count x SealedBlob serialization
//! ```

use super::{unseal, DeviceSecret, EnclaveError, SealedBlob, LABEL_VK_PRV};
use crate::keys::VictimSecretKey;

pub const ESCROW_MAGIC: &[u8; 17] = b"ESCROWSIM-ESCROW\0";
pub const ESCROW_VERSION: u8 = 1;

/// Out-of-band recovery material held by the operator: the device secret and
/// the blobs sealed under it.
#[derive(Debug)]
pub struct EscrowFile {
    pub device: DeviceSecret,
    pub blobs: Vec<SealedBlob>,
}

impl EscrowFile {
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = ESCROW_MAGIC.to_vec();
        out.push(ESCROW_VERSION);
        out.extend_from_slice(self.device.expose());
        out.push(self.blobs.len() as u8);
        for b in &self.blobs {
            out.extend_from_slice(&b.serialize());
        }
        out
    }

    pub fn deserialize(buf: &[u8]) -> Result<Self, EnclaveError> {
        let head = ESCROW_MAGIC.len();
        if buf.len() < head + 34 || &buf[..head] != ESCROW_MAGIC {
            return Err(EnclaveError::MalformedEscrow("bad magic"));
        }
        if buf[head] != ESCROW_VERSION {
            return Err(EnclaveError::MalformedEscrow("unsupported version"));
        }
        let device = DeviceSecret::from_bytes(buf[head + 1..head + 33].try_into().unwrap());
        let count = buf[head + 33];
        let mut pos = head + 34;
        let mut blobs = Vec::new();
        for _ in 0..count {
            let (b, used) = SealedBlob::deserialize_prefix(&buf[pos..])?;
            pos += used;
            blobs.push(b);
        }
        if pos != buf.len() {
            return Err(EnclaveError::MalformedEscrow("trailing bytes"));
        }
        Ok(EscrowFile { device, blobs })
    }

    /// Recovers the victim private key without any release decision.
    pub fn recover_victim_key(&self) -> Result<VictimSecretKey, EnclaveError> {
        let blob = self
            .blobs
            .iter()
            .find(|b| b.label == LABEL_VK_PRV)
            .ok_or(EnclaveError::MalformedEscrow("no sealed victim key"))?;
        let bytes = unseal(&self.device, blob)?;
        Ok(VictimSecretKey::from_bytes(&bytes)?)
    }
}
