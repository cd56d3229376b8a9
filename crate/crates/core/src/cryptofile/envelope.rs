//! On-disk envelope:
//!
//! ```text
//! magic        "ESCROWSIM-ENV\0"               14 bytes
//! version      u8 = 1
//! wrapped_len  u16le
//! wrapped_key  wrapped_len bytes (ephemeral point | nonce | sealed EK)
//! data_nonce   12 bytes
//! plain_len    u64le
//! body         chunk_count(plain_len) sealed chunks, each min(rest, 64 KiB) + 16 bytes
//! ```

use std::fmt;
use std::io::{self, Read};

use super::cipher::{chunk_count, CHUNK_SIZE, TAG_LEN};

pub const ENVELOPE_MAGIC: &[u8; 14] = b"ESCROWSIM-ENV\0";
pub const ENVELOPE_VERSION: u8 = 1;

/// Named byte ranges of an envelope, used in parse errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Magic,
    Version,
    WrappedKeyLength,
    WrappedKey,
    DataNonce,
    PlaintextLength,
    Body,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Magic => "magic",
            Region::Version => "version",
            Region::WrappedKeyLength => "wrapped-key length",
            Region::WrappedKey => "wrapped key",
            Region::DataNonce => "data nonce",
            Region::PlaintextLength => "plaintext length",
            Region::Body => "ciphertext body",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnvelopeError {
    #[error("envelope truncated in {0}")]
    Truncated(Region),
    #[error("not an envelope (bad magic)")]
    BadMagic,
    #[error("unsupported envelope version {0}")]
    UnsupportedVersion(u8),
    #[error("envelope body has {found} bytes, expected {expected}")]
    BodyLength { expected: u64, found: u64 },
    #[error("envelope failed authentication")]
    Authentication,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvelopeHeader {
    pub wrapped_key: Vec<u8>,
    pub data_nonce: [u8; 12],
    pub plaintext_len: u64,
}

impl EnvelopeHeader {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENVELOPE_MAGIC.len() + 3 + self.wrapped_key.len() + 20);
        out.extend_from_slice(ENVELOPE_MAGIC);
        out.push(ENVELOPE_VERSION);
        out.extend_from_slice(&(self.wrapped_key.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.wrapped_key);
        out.extend_from_slice(&self.data_nonce);
        out.extend_from_slice(&self.plaintext_len.to_le_bytes());
        out
    }

    pub fn encoded_len(&self) -> usize {
        ENVELOPE_MAGIC.len() + 1 + 2 + self.wrapped_key.len() + 12 + 8
    }

    /// Reads a header from the front of a stream, leaving it at the body.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, EnvelopeError> {
        let mut magic = [0u8; 14];
        read_region(r, &mut magic, Region::Magic)?;
        if &magic != ENVELOPE_MAGIC {
            return Err(EnvelopeError::BadMagic);
        }
        let mut version = [0u8; 1];
        read_region(r, &mut version, Region::Version)?;
        if version[0] != ENVELOPE_VERSION {
            return Err(EnvelopeError::UnsupportedVersion(version[0]));
        }
        let mut len = [0u8; 2];
        read_region(r, &mut len, Region::WrappedKeyLength)?;
        let mut wrapped_key = vec![0u8; u16::from_le_bytes(len) as usize];
        read_region(r, &mut wrapped_key, Region::WrappedKey)?;
        let mut data_nonce = [0u8; 12];
        read_region(r, &mut data_nonce, Region::DataNonce)?;
        let mut plain = [0u8; 8];
        read_region(r, &mut plain, Region::PlaintextLength)?;
        Ok(EnvelopeHeader { wrapped_key, data_nonce, plaintext_len: u64::from_le_bytes(plain) })
    }

    /// Exact body length implied by the plaintext length.
    pub fn body_len(&self) -> u64 {
        self.plaintext_len + (chunk_count(self.plaintext_len as usize) * TAG_LEN) as u64
    }

    /// Plaintext size of each chunk, in order.
    pub fn chunk_plain_sizes(&self) -> impl Iterator<Item = usize> {
        let len = self.plaintext_len as usize;
        let n = chunk_count(len);
        (0..n).map(move |i| if i + 1 < n { CHUNK_SIZE } else { len - i * CHUNK_SIZE })
    }
}

fn read_region<R: Read>(r: &mut R, buf: &mut [u8], region: Region) -> Result<(), EnvelopeError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => EnvelopeError::Truncated(region),
        _ => EnvelopeError::Io(e),
    })
}

/// A complete envelope held in memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileEnvelope {
    pub header: EnvelopeHeader,
    pub body: Vec<u8>,
}

impl FileEnvelope {
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = self.header.encode();
        out.extend_from_slice(&self.body);
        out
    }

    pub fn parse(buf: &[u8]) -> Result<Self, EnvelopeError> {
        let mut cursor = buf;
        let header = EnvelopeHeader::read_from(&mut cursor)?;
        let expected = header.body_len();
        let found = cursor.len() as u64;
        if found < expected {
            return Err(EnvelopeError::Truncated(Region::Body));
        }
        if found > expected {
            return Err(EnvelopeError::BodyLength { expected, found });
        }
        Ok(FileEnvelope { header, body: cursor.to_vec() })
    }

    /// Ciphertext slices, one per chunk.
    pub fn chunks(&self) -> Vec<&[u8]> {
        let mut out = Vec::new();
        let mut pos = 0;
        for size in self.header.chunk_plain_sizes() {
            out.push(&self.body[pos..pos + size + TAG_LEN]);
            pos += size + TAG_LEN;
        }
        out
    }
}
