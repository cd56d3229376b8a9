//! Canonical binary messages. Every message starts with a one-byte tag;
//! integers are little-endian.
//!
//! ```text
//! 0x01 GetHeaders      from_hash:32
//! 0x02 Headers         count:u32 | count x header:80
//! 0x03 GetMerkleBlock  txid:32
//! 0x04 MerkleBlock     header:80 | proof_len:u16 | proof | tx
//! 0x05 NotFound
//!
//! 0x11 Hello           challenge:32
//! 0x12 ServerHello     cert_len:u16 | certificate | sig:64
//! 0x13 GetTx           wallet:20 | txid:32
//! 0x14 TxInfo          confirmations:u64 | sig:64 | tx
//! 0x15 TxNotFound      sig:64
//! ```
//!
//! Explorer signatures are ECDSA by the endpoint key over
//! `"escrowsim-explorer-v1" | challenge | body`, where `body` is the message
//! bytes with the signature field removed. Binding the client's challenge
//! keeps responses from being replayed across sessions.

use std::fmt;

use crate::chainkit::{
    deserialize_header, serialize_header, Address, BlockHeader, Hash256, MerkleProof, Transaction, HEADER_LEN,
};

use super::identity::{Certificate, SIG_LEN};

const EXPLORER_DOMAIN: &[u8] = b"escrowsim-explorer-v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed message: {0}")]
pub struct DecodeError(pub &'static str);

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(DecodeError("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    fn finish(&self) -> Result<(), DecodeError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(DecodeError("trailing bytes"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PeerMessage {
    GetHeaders { from: Hash256 },
    Headers(Vec<BlockHeader>),
    GetMerkleBlock { txid: Hash256 },
    MerkleBlock { header: BlockHeader, proof: MerkleProof, tx: Transaction },
    NotFound,
}

impl PeerMessage {
    pub fn tag(&self) -> u8 {
        match self {
            PeerMessage::GetHeaders { .. } => 0x01,
            PeerMessage::Headers(_) => 0x02,
            PeerMessage::GetMerkleBlock { .. } => 0x03,
            PeerMessage::MerkleBlock { .. } => 0x04,
            PeerMessage::NotFound => 0x05,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PeerMessage::GetHeaders { .. } => "getheaders",
            PeerMessage::Headers(_) => "headers",
            PeerMessage::GetMerkleBlock { .. } => "getmerkleblock",
            PeerMessage::MerkleBlock { .. } => "merkleblock",
            PeerMessage::NotFound => "notfound",
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(self, PeerMessage::GetHeaders { .. } | PeerMessage::GetMerkleBlock { .. })
    }

    /// True when `self` is an acceptable response kind for `request`.
    pub fn answers(&self, request: &PeerMessage) -> bool {
        matches!(
            (request, self),
            (PeerMessage::GetHeaders { .. }, PeerMessage::Headers(_) | PeerMessage::NotFound)
                | (PeerMessage::GetMerkleBlock { .. }, PeerMessage::MerkleBlock { .. } | PeerMessage::NotFound)
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.tag()];
        match self {
            PeerMessage::GetHeaders { from } => out.extend_from_slice(&from.0),
            PeerMessage::Headers(hs) => {
                out.extend_from_slice(&(hs.len() as u32).to_le_bytes());
                for h in hs {
                    out.extend_from_slice(&serialize_header(h));
                }
            }
            PeerMessage::GetMerkleBlock { txid } => out.extend_from_slice(&txid.0),
            PeerMessage::MerkleBlock { header, proof, tx } => {
                out.extend_from_slice(&serialize_header(header));
                let p = proof.serialize();
                out.extend_from_slice(&(p.len() as u16).to_le_bytes());
                out.extend_from_slice(&p);
                out.extend_from_slice(&tx.serialize());
            }
            PeerMessage::NotFound => {}
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let msg = match r.array::<1>()?[0] {
            0x01 => PeerMessage::GetHeaders { from: Hash256(r.array()?) },
            0x02 => {
                let n = u32::from_le_bytes(r.array()?) as usize;
                if n > (buf.len() / HEADER_LEN) {
                    return Err(DecodeError("header count exceeds message"));
                }
                let mut hs = Vec::with_capacity(n);
                for _ in 0..n {
                    hs.push(deserialize_header(r.take(HEADER_LEN)?).map_err(|_| DecodeError("header"))?);
                }
                PeerMessage::Headers(hs)
            }
            0x03 => PeerMessage::GetMerkleBlock { txid: Hash256(r.array()?) },
            0x04 => {
                let header = deserialize_header(r.take(HEADER_LEN)?).map_err(|_| DecodeError("header"))?;
                let plen = u16::from_le_bytes(r.array()?) as usize;
                let proof = MerkleProof::deserialize(r.take(plen)?).map_err(|_| DecodeError("merkle proof"))?;
                let tx = Transaction::deserialize(r.rest()).map_err(|_| DecodeError("transaction"))?;
                PeerMessage::MerkleBlock { header, proof, tx }
            }
            0x05 => PeerMessage::NotFound,
            _ => return Err(DecodeError("unknown peer message tag")),
        };
        r.finish()?;
        Ok(msg)
    }
}

impl fmt::Display for PeerMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeerMessage::GetHeaders { from } => write!(f, "getheaders from={from}"),
            PeerMessage::Headers(hs) => write!(f, "headers count={}", hs.len()),
            PeerMessage::GetMerkleBlock { txid } => write!(f, "getmerkleblock txid={txid}"),
            PeerMessage::MerkleBlock { header, proof, .. } => {
                write!(f, "merkleblock block={} path={}", header.hash(), proof.siblings.len())
            }
            PeerMessage::NotFound => f.write_str("notfound"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExplorerMessage {
    Hello { challenge: [u8; 32] },
    ServerHello { certificate: Certificate, signature: [u8; SIG_LEN] },
    GetTx { wallet: Address, txid: Hash256 },
    TxInfo { tx: Transaction, confirmations: u64, signature: [u8; SIG_LEN] },
    TxNotFound { signature: [u8; SIG_LEN] },
}

impl ExplorerMessage {
    pub fn tag(&self) -> u8 {
        match self {
            ExplorerMessage::Hello { .. } => 0x11,
            ExplorerMessage::ServerHello { .. } => 0x12,
            ExplorerMessage::GetTx { .. } => 0x13,
            ExplorerMessage::TxInfo { .. } => 0x14,
            ExplorerMessage::TxNotFound { .. } => 0x15,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExplorerMessage::Hello { .. } => "hello",
            ExplorerMessage::ServerHello { .. } => "server-hello",
            ExplorerMessage::GetTx { .. } => "gettx",
            ExplorerMessage::TxInfo { .. } => "txinfo",
            ExplorerMessage::TxNotFound { .. } => "txnotfound",
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(self, ExplorerMessage::Hello { .. } | ExplorerMessage::GetTx { .. })
    }

    pub fn answers(&self, request: &ExplorerMessage) -> bool {
        matches!(
            (request, self),
            (ExplorerMessage::Hello { .. }, ExplorerMessage::ServerHello { .. })
                | (ExplorerMessage::GetTx { .. }, ExplorerMessage::TxInfo { .. } | ExplorerMessage::TxNotFound { .. })
        )
    }

    /// Bytes covered by the endpoint signature, before the domain and
    /// challenge are prefixed.
    pub fn signed_body(&self) -> Vec<u8> {
        let mut out = vec![self.tag()];
        match self {
            ExplorerMessage::ServerHello { certificate, .. } => out.extend_from_slice(&certificate.serialize()),
            ExplorerMessage::TxInfo { tx, confirmations, .. } => {
                out.extend_from_slice(&confirmations.to_le_bytes());
                out.extend_from_slice(&tx.serialize());
            }
            _ => {}
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.tag()];
        match self {
            ExplorerMessage::Hello { challenge } => out.extend_from_slice(challenge),
            ExplorerMessage::ServerHello { certificate, signature } => {
                let c = certificate.serialize();
                out.extend_from_slice(&(c.len() as u16).to_le_bytes());
                out.extend_from_slice(&c);
                out.extend_from_slice(signature);
            }
            ExplorerMessage::GetTx { wallet, txid } => {
                out.extend_from_slice(&wallet.0);
                out.extend_from_slice(&txid.0);
            }
            ExplorerMessage::TxInfo { tx, confirmations, signature } => {
                out.extend_from_slice(&confirmations.to_le_bytes());
                out.extend_from_slice(signature);
                out.extend_from_slice(&tx.serialize());
            }
            ExplorerMessage::TxNotFound { signature } => out.extend_from_slice(signature),
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let msg = match r.array::<1>()?[0] {
            0x11 => ExplorerMessage::Hello { challenge: r.array()? },
            0x12 => {
                let n = u16::from_le_bytes(r.array()?) as usize;
                let certificate = Certificate::deserialize(r.take(n)?).map_err(|_| DecodeError("certificate"))?;
                ExplorerMessage::ServerHello { certificate, signature: r.array()? }
            }
            0x13 => ExplorerMessage::GetTx { wallet: Address(r.array()?), txid: Hash256(r.array()?) },
            0x14 => {
                let confirmations = u64::from_le_bytes(r.array()?);
                let signature = r.array()?;
                let tx = Transaction::deserialize(r.rest()).map_err(|_| DecodeError("transaction"))?;
                ExplorerMessage::TxInfo { tx, confirmations, signature }
            }
            0x15 => ExplorerMessage::TxNotFound { signature: r.array()? },
            _ => return Err(DecodeError("unknown explorer message tag")),
        };
        r.finish()?;
        Ok(msg)
    }
}

/// Message an endpoint signs for a response within a session.
pub fn explorer_signing_input(challenge: &[u8; 32], response: &ExplorerMessage) -> Vec<u8> {
    let mut m = EXPLORER_DOMAIN.to_vec();
    m.extend_from_slice(challenge);
    m.extend_from_slice(&response.signed_body());
    m
}

impl fmt::Display for ExplorerMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExplorerMessage::Hello { challenge } => write!(f, "hello challenge={}", hex::encode(challenge)),
            ExplorerMessage::ServerHello { certificate, .. } => {
                write!(f, "server-hello subject={} issuer={}", certificate.subject, hex::encode(certificate.issuer))
            }
            ExplorerMessage::GetTx { wallet, txid } => write!(f, "gettx wallet={wallet} txid={txid}"),
            ExplorerMessage::TxInfo { tx, confirmations, .. } => {
                write!(f, "txinfo txid={} confirmations={confirmations}", tx.txid())
            }
            ExplorerMessage::TxNotFound { .. } => f.write_str("txnotfound"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainkit::{build_payment_tx, build_proof};

    fn sample_tx() -> Transaction {
        build_payment_tx(Address([2; 20]), 7, b"meta").unwrap()
    }

    #[test]
    fn peer_messages_round_trip() {
        let tx = sample_tx();
        let proof = build_proof(std::slice::from_ref(&tx), &tx.txid(), Hash256([5; 32])).unwrap();
        let msgs = vec![
            PeerMessage::GetHeaders { from: Hash256([1; 32]) },
            PeerMessage::Headers(vec![BlockHeader::default(), BlockHeader { pow_nonce: 4, ..Default::default() }]),
            PeerMessage::GetMerkleBlock { txid: tx.txid() },
            PeerMessage::MerkleBlock { header: BlockHeader::default(), proof, tx },
            PeerMessage::NotFound,
        ];
        for m in msgs {
            let enc = m.encode();
            assert_eq!(PeerMessage::decode(&enc).unwrap(), m);
            for cut in 0..enc.len() {
                assert!(PeerMessage::decode(&enc[..cut]).is_err() || cut == enc.len(), "{m} cut {cut}");
            }
        }
    }

    #[test]
    fn explorer_messages_round_trip() {
        let cert = Certificate { subject: "explorer".into(), public_key: [2; 33], issuer: [3; 33], signature: [4; 64] };
        let msgs = vec![
            ExplorerMessage::Hello { challenge: [9; 32] },
            ExplorerMessage::ServerHello { certificate: cert, signature: [1; 64] },
            ExplorerMessage::GetTx { wallet: Address([1; 20]), txid: Hash256([2; 32]) },
            ExplorerMessage::TxInfo { tx: sample_tx(), confirmations: 6, signature: [5; 64] },
            ExplorerMessage::TxNotFound { signature: [6; 64] },
        ];
        for m in msgs {
            assert_eq!(ExplorerMessage::decode(&m.encode()).unwrap(), m);
        }
    }

    #[test]
    fn tag_pairing() {
        let req = PeerMessage::GetHeaders { from: Hash256::ZERO };
        assert!(PeerMessage::Headers(vec![]).answers(&req));
        assert!(PeerMessage::NotFound.answers(&req));
        assert!(!PeerMessage::GetHeaders { from: Hash256::ZERO }.answers(&req));
        let req = PeerMessage::GetMerkleBlock { txid: Hash256::ZERO };
        assert!(!PeerMessage::Headers(vec![]).answers(&req));
    }
}
