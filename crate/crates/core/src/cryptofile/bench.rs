use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::cipher::chunk_count;
use super::engine::{Decryptor, EngineError, EngineMode, Encryptor};
use super::synth::file_contents;
use crate::enclave::{Enclave, ExposureLedger};

/// Reference overheads measured on real enclave hardware. Printed for
/// context; a software boundary is not expected to reproduce them.
pub const REFERENCE_ENCRYPT_OVERHEAD_PCT: f64 = 12.76;
pub const REFERENCE_DECRYPT_OVERHEAD_PCT: f64 = 34.05;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub file_sizes: Vec<u64>,
    pub transition_cost: Duration,
    /// Each mode is timed this many times; the fastest run is kept.
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeTiming {
    pub mode: EngineMode,
    pub encrypt: Duration,
    pub decrypt: Duration,
    pub encrypt_crossings: u64,
    pub decrypt_crossings: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub files: usize,
    pub bytes: u64,
    pub chunks: u64,
    pub transition_cost: Duration,
    pub reactive: ModeTiming,
    pub proactive: ModeTiming,
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

impl BenchReport {
    /// Extra crossings times the injected cost, in seconds.
    pub fn predicted_encrypt_overhead(&self) -> f64 {
        (self.proactive.encrypt_crossings - self.reactive.encrypt_crossings) as f64 * secs(self.transition_cost)
    }

    pub fn predicted_decrypt_overhead(&self) -> f64 {
        (self.proactive.decrypt_crossings - self.reactive.decrypt_crossings) as f64 * secs(self.transition_cost)
    }

    /// Proactive minus reactive wall time, in seconds.
    pub fn measured_encrypt_overhead(&self) -> f64 {
        secs(self.proactive.encrypt) - secs(self.reactive.encrypt)
    }

    pub fn measured_decrypt_overhead(&self) -> f64 {
        secs(self.proactive.decrypt) - secs(self.reactive.decrypt)
    }

    pub fn encrypt_overhead_pct(&self) -> f64 {
        100.0 * self.measured_encrypt_overhead() / secs(self.reactive.encrypt)
    }

    pub fn decrypt_overhead_pct(&self) -> f64 {
        100.0 * self.measured_decrypt_overhead() / secs(self.reactive.decrypt)
    }
}

fn time_mode(
    mode: EngineMode,
    enclave: &mut Enclave,
    data: &[Vec<u8>],
    seed: u64,
) -> Result<ModeTiming, EngineError> {
    let vk = enclave.released_key().expect("bench enclave is released up front");
    let before = enclave.stats().enter_count;
    let started = Instant::now();
    let mut enc = Encryptor::new(mode, enclave, ChaCha20Rng::seed_from_u64(seed))?;
    let envelopes = data.iter().map(|d| enc.encrypt_bytes(d)).collect::<Result<Vec<_>, _>>()?;
    let encrypt = started.elapsed();
    let mid = enclave.stats().enter_count;
    let started = Instant::now();
    for (env, plain) in envelopes.iter().zip(data) {
        let out = match mode {
            EngineMode::Reactive => Decryptor::Host(&vk).decrypt_envelope(env)?,
            EngineMode::Proactive => Decryptor::Enclave(enclave).decrypt_envelope(env)?,
        };
        assert_eq!(out.len(), plain.len());
    }
    let decrypt = started.elapsed();
    let after = enclave.stats().enter_count;
    Ok(ModeTiming { mode, encrypt, decrypt, encrypt_crossings: mid - before, decrypt_crossings: after - mid })
}

/// Times encryption and decryption of an in-memory corpus in both modes.
pub fn bench(config: &BenchConfig) -> Result<BenchReport, EngineError> {
    let ledger = Arc::new(ExposureLedger::new());
    let (mut enclave, escrow) = Enclave::for_experiment(config.seed, config.transition_cost, ledger)?;
    enclave.operator_release(&escrow)?;
    let data: Vec<Vec<u8>> = config
        .file_sizes
        .iter()
        .enumerate()
        .map(|(i, &len)| file_contents(len, config.seed.wrapping_add(i as u64)))
        .collect();
    let mut best: [Option<ModeTiming>; 2] = [None, None];
    for r in 0..config.repeats.max(1) {
        for (slot, mode) in EngineMode::ALL.into_iter().enumerate() {
            let t = time_mode(mode, &mut enclave, &data, config.seed.wrapping_add(r as u64))?;
            let b = best[slot].get_or_insert_with(|| t.clone());
            b.encrypt = b.encrypt.min(t.encrypt);
            b.decrypt = b.decrypt.min(t.decrypt);
        }
    }
    let [reactive, proactive] = best.map(Option::unwrap);
    Ok(BenchReport {
        files: data.len(),
        bytes: config.file_sizes.iter().sum(),
        chunks: config.file_sizes.iter().map(|&s| chunk_count(s as usize) as u64).sum(),
        transition_cost: config.transition_cost,
        reactive,
        proactive,
    })
}
