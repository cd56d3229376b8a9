//! Hybrid per-file encryption.
//!
//! Every file gets a fresh 256-bit key (EK), used with AES-256-GCM over
//! 64 KiB chunks and wrapped under the victim public key. In reactive mode EK
//! is generated and used in host memory, so it is recorded in the exposure
//! ledger. In proactive mode key generation, wrapping and every chunk run
//! inside the boundary, one transition per chunk.

pub mod bench;
pub mod capture;
pub mod cipher;
pub mod corpus;
pub mod engine;
pub mod envelope;
pub mod synth;

pub use bench::{bench, BenchConfig, BenchReport, ModeTiming, REFERENCE_DECRYPT_OVERHEAD_PCT, REFERENCE_ENCRYPT_OVERHEAD_PCT};
pub use capture::{capture_experiment, capture_run, CaptureReport};
pub use cipher::{chunk_count, ChunkCipher, CHUNK_SIZE, TAG_LEN};
pub use corpus::{
    check_corpus_root, decrypt_corpus, encrypt_corpus, encrypt_file, envelope_path, read_envelope_headers,
    scan_corpus, scan_envelopes, CorpusError, CorpusOptions, CorpusReport, DecryptReport, FileRecord, PartialRun,
    ENVELOPE_SUFFIX, SENTINEL,
};
pub use engine::{decrypt_file, recover_file_key, Decryptor, EngineError, EngineMode, Encryptor, TAG_REACTIVE_EK};
pub use envelope::{EnvelopeError, EnvelopeHeader, FileEnvelope, Region, ENVELOPE_MAGIC, ENVELOPE_VERSION};
pub use synth::{file_contents, uniform_sizes, write_corpus, CorpusProfile};
