use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::engine::{recover_file_key, EngineError, EngineMode, Encryptor};
use super::envelope::EnvelopeHeader;
use super::synth::file_contents;
use crate::enclave::{Enclave, ExposureLedger};
use crate::keys::{KeyError, VictimSecretKey};

/// What a memory-forensics capture taken before key release would have found.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaptureReport {
    pub mode: EngineMode,
    pub envelopes: usize,
    /// Envelopes whose true per-file key appears in the ledger.
    pub ek_exposed: usize,
    /// Ledger entries containing the victim private key.
    pub vk_exposed_before_release: usize,
}

impl CaptureReport {
    pub fn ek_exposure_pct(&self) -> f64 {
        if self.envelopes == 0 {
            0.0
        } else {
            100.0 * self.ek_exposed as f64 / self.envelopes as f64
        }
    }
}

/// Recovers each envelope's key with `vk_prv` and searches ledger entries
/// recorded before sequence number `release_mark`.
pub fn capture_experiment(
    ledger: &ExposureLedger,
    headers: &[EnvelopeHeader],
    vk_prv: &VictimSecretKey,
    mode: EngineMode,
    release_mark: u64,
) -> Result<CaptureReport, KeyError> {
    let mut ek_exposed = 0;
    for h in headers {
        let ek = recover_file_key(h, vk_prv)?;
        if ledger.occurrences_before(ek.as_ref(), release_mark) > 0 {
            ek_exposed += 1;
        }
    }
    Ok(CaptureReport {
        mode,
        envelopes: headers.len(),
        ek_exposed,
        vk_exposed_before_release: ledger.occurrences_before(&vk_prv.to_bytes(), release_mark),
    })
}

/// Encrypts synthetic files of `file_sizes` in one mode, then captures the
/// ledger as it stood just before the operator releases the victim key.
pub fn capture_run(mode: EngineMode, file_sizes: &[u64], seed: u64) -> Result<CaptureReport, EngineError> {
    let ledger = Arc::new(ExposureLedger::new());
    let (mut enclave, escrow) = Enclave::for_experiment(seed, Duration::ZERO, ledger.clone())?;
    let mut headers = Vec::with_capacity(file_sizes.len());
    {
        let mut enc = Encryptor::new(mode, &mut enclave, ChaCha20Rng::seed_from_u64(seed ^ 0x63617074))?;
        for (i, &len) in file_sizes.iter().enumerate() {
            headers.push(enc.encrypt_bytes(&file_contents(len, seed.wrapping_add(i as u64)))?.header);
        }
    }
    let mark = ledger.len() as u64;
    let vk = enclave.operator_release(&escrow)?;
    Ok(capture_experiment(&ledger, &headers, &vk, mode, mark)?)
}
