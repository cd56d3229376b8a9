use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use zeroize::Zeroizing;

use super::cipher::{ChunkCipher, TAG_LEN};
use super::envelope::{EnvelopeError, EnvelopeHeader, FileEnvelope, Region};
use crate::enclave::{Enclave, EnclaveError, FileHandle};
use crate::keys::{unwrap_key, wrap_key, KeyError, VictimPublicKey, VictimSecretKey};

/// Ledger tag for per-file keys that existed in host memory.
pub const TAG_REACTIVE_EK: &str = "reactive-ek";

/// Where symmetric key generation and file encryption happen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EngineMode {
    /// Outside the boundary; per-file keys live in host memory.
    Reactive,
    /// Inside the boundary; every chunk costs one transition.
    Proactive,
}

impl EngineMode {
    pub const ALL: [EngineMode; 2] = [EngineMode::Reactive, EngineMode::Proactive];

    pub fn as_str(self) -> &'static str {
        match self {
            EngineMode::Reactive => "reactive",
            EngineMode::Proactive => "proactive",
        }
    }
}

impl fmt::Display for EngineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EngineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reactive" => Ok(EngineMode::Reactive),
            "proactive" => Ok(EngineMode::Proactive),
            other => Err(format!("unknown engine mode {other:?} (expected reactive or proactive)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error("per-file key unwrap failed: {0}")]
    Key(#[from] KeyError),
    #[error("victim public key not available; run keygen first")]
    NoVictimKey,
}

impl From<io::Error> for EngineError {
    fn from(e: io::Error) -> Self {
        EngineError::Envelope(EnvelopeError::Io(e))
    }
}

fn read_chunk<R: Read>(r: &mut R, buf: &mut [u8], region: Region) -> Result<(), EngineError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => EnvelopeError::Truncated(region).into(),
        _ => e.into(),
    })
}

/// Per-file hybrid encryption in either engine mode.
pub struct Encryptor<'a> {
    mode: EngineMode,
    enclave: &'a mut Enclave,
    vk_pub: VictimPublicKey,
    rng: ChaCha20Rng,
}

impl<'a> Encryptor<'a> {
    /// `rng` drives host-side randomness (reactive keys and wrapping); the
    /// enclave has its own.
    pub fn new(mode: EngineMode, enclave: &'a mut Enclave, rng: ChaCha20Rng) -> Result<Self, EngineError> {
        let vk_pub = enclave.vk_pub().cloned().ok_or(EngineError::NoVictimKey)?;
        Ok(Encryptor { mode, enclave, vk_pub, rng })
    }

    pub fn mode(&self) -> EngineMode {
        self.mode
    }

    pub fn enclave(&self) -> &Enclave {
        self.enclave
    }

    /// Encrypts `plaintext_len` bytes from `src`, writing the full envelope to
    /// `dst`. Returns the envelope header.
    pub fn encrypt_stream<R: Read, W: Write>(
        &mut self,
        plaintext_len: u64,
        src: &mut R,
        dst: &mut W,
    ) -> Result<EnvelopeHeader, EngineError> {
        let mut data_nonce = [0u8; 12];
        match self.mode {
            EngineMode::Reactive => {
                let mut ek = Zeroizing::new([0u8; 32]);
                self.rng.fill_bytes(ek.as_mut());
                self.enclave.ledger().record(TAG_REACTIVE_EK, ek.as_ref());
                self.rng.fill_bytes(&mut data_nonce);
                let wrapped_key = wrap_key(&ek, &self.vk_pub, &mut self.rng);
                let header = EnvelopeHeader { wrapped_key, data_nonce, plaintext_len };
                let cipher = ChunkCipher::new(&ek, data_nonce);
                drop(ek);
                dst.write_all(&header.encode())?;
                for_each_chunk(&header, src, |i, last, pt| {
                    dst.write_all(&cipher.seal_chunk(i, last, pt))?;
                    Ok(())
                })?;
                Ok(header)
            }
            EngineMode::Proactive => {
                let (h, wrapped_key, data_nonce) = self.enclave.file_begin()?;
                let header = EnvelopeHeader { wrapped_key, data_nonce, plaintext_len };
                let enclave = &mut *self.enclave;
                let run = (|| {
                    dst.write_all(&header.encode())?;
                    for_each_chunk(&header, src, |i, last, pt| {
                        dst.write_all(&enclave.file_chunk(h, i, last, pt)?)?;
                        Ok(())
                    })
                })();
                self.enclave.file_end(h)?;
                run.map(|_| header)
            }
        }
    }

    pub fn encrypt_bytes(&mut self, plaintext: &[u8]) -> Result<FileEnvelope, EngineError> {
        let mut out = Vec::with_capacity(plaintext.len() + 256);
        let header = self.encrypt_stream(plaintext.len() as u64, &mut &plaintext[..], &mut out)?;
        let body = out.split_off(header.encoded_len());
        Ok(FileEnvelope { header, body })
    }
}

fn for_each_chunk<R: Read>(
    header: &EnvelopeHeader,
    src: &mut R,
    mut f: impl FnMut(u64, bool, &[u8]) -> Result<(), EngineError>,
) -> Result<(), EngineError> {
    let sizes: Vec<usize> = header.chunk_plain_sizes().collect();
    let mut buf = vec![0u8; sizes[0]];
    for (i, &size) in sizes.iter().enumerate() {
        buf.resize(size, 0);
        src.read_exact(&mut buf)?;
        f(i as u64, i + 1 == sizes.len(), &buf)?;
    }
    Ok(())
}

/// Opens envelopes with the released victim key, either host-side or inside
/// the boundary.
pub enum Decryptor<'a> {
    Host(&'a VictimSecretKey),
    Enclave(&'a mut Enclave),
}

impl Decryptor<'_> {
    /// Decrypts the body following `header` in `src` into `dst`. Nothing is
    /// written for a chunk that fails authentication, but earlier chunks may
    /// already be in `dst`; callers stage output and discard it on error.
    pub fn decrypt_stream<R: Read, W: Write>(
        &mut self,
        header: &EnvelopeHeader,
        src: &mut R,
        dst: &mut W,
    ) -> Result<(), EngineError> {
        let sizes: Vec<usize> = header.chunk_plain_sizes().collect();
        let n = sizes.len();
        let mut buf = Vec::new();
        match self {
            Decryptor::Host(vk) => {
                let ek = unwrap_key(&header.wrapped_key, vk).map_err(|_| EnvelopeError::Authentication)?;
                let cipher = ChunkCipher::new(&ek, header.data_nonce);
                for (i, &size) in sizes.iter().enumerate() {
                    buf.resize(size + TAG_LEN, 0);
                    read_chunk(src, &mut buf, Region::Body)?;
                    let pt = cipher
                        .open_chunk(i as u64, i + 1 == n, &buf)
                        .ok_or(EnvelopeError::Authentication)?;
                    dst.write_all(&pt)?;
                }
            }
            Decryptor::Enclave(enclave) => {
                let h: FileHandle = enclave.file_open(&header.wrapped_key, header.data_nonce).map_err(|e| match e {
                    EnclaveError::Key(_) => EngineError::Envelope(EnvelopeError::Authentication),
                    other => other.into(),
                })?;
                let run = (|| -> Result<(), EngineError> {
                    for (i, &size) in sizes.iter().enumerate() {
                        buf.resize(size + TAG_LEN, 0);
                        read_chunk(src, &mut buf, Region::Body)?;
                        let pt = enclave.file_decrypt_chunk(h, i as u64, i + 1 == n, &buf).map_err(|e| match e {
                            EnclaveError::Authentication => EngineError::Envelope(EnvelopeError::Authentication),
                            other => other.into(),
                        })?;
                        dst.write_all(&pt)?;
                    }
                    Ok(())
                })();
                enclave.file_end(h)?;
                run?;
            }
        }
        Ok(())
    }

    pub fn decrypt_envelope(&mut self, env: &FileEnvelope) -> Result<Vec<u8>, EngineError> {
        let mut out = Vec::with_capacity(env.header.plaintext_len as usize);
        self.decrypt_stream(&env.header, &mut &env.body[..], &mut out)?;
        Ok(out)
    }
}

/// Decrypts an in-memory envelope host-side with the victim key.
pub fn decrypt_file(env: &FileEnvelope, vk_prv: &VictimSecretKey) -> Result<Vec<u8>, EngineError> {
    Decryptor::Host(vk_prv).decrypt_envelope(env)
}

/// Recovers the true per-file key of an envelope.
pub fn recover_file_key(header: &EnvelopeHeader, vk_prv: &VictimSecretKey) -> Result<Zeroizing<[u8; 32]>, KeyError> {
    unwrap_key(&header.wrapped_key, vk_prv)
}
