use std::fmt;

use super::{sha256d, ChainError, Hash256};

/// Relay limit for OP_RETURN payloads.
pub const MAX_OP_RETURN: usize = 80;

const TX_VERSION: u32 = 1;
const SCRIPT_PAY_TO_ADDRESS: u8 = 0;
const SCRIPT_OP_RETURN: u8 = 1;

/// 20-byte payment address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        Some(Address(hex::decode(s.trim()).ok()?.try_into().ok()?))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Script {
    PayToAddress(Address),
    OpReturn(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Output {
    pub amount: u64,
    pub script: Script,
}

impl Output {
    pub fn pay(address: Address, amount: u64) -> Self {
        Output { amount, script: Script::PayToAddress(address) }
    }

    pub fn op_return(payload: Vec<u8>) -> Self {
        Output { amount: 0, script: Script::OpReturn(payload) }
    }
}

/// Output-only transaction. The txid is double-SHA-256 of the canonical
/// serialization and is cached at construction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    txid: Hash256,
    outputs: Vec<Output>,
}

impl Transaction {
    pub fn new(outputs: Vec<Output>) -> Result<Self, ChainError> {
        if outputs.is_empty() {
            return Err(ChainError::NoOutputs);
        }
        if outputs.len() > u8::MAX as usize {
            return Err(ChainError::Decode("more than 255 outputs"));
        }
        let mut op_returns = 0;
        for o in &outputs {
            if let Script::OpReturn(p) = &o.script {
                if p.len() > MAX_OP_RETURN {
                    return Err(ChainError::OpReturnTooLarge(p.len()));
                }
                op_returns += 1;
            }
        }
        if op_returns > 1 {
            return Err(ChainError::MultipleOpReturn);
        }
        let txid = sha256d(&encode_outputs(&outputs));
        Ok(Transaction { txid, outputs })
    }

    /// Coinbase-like transaction; the height commitment keeps txids unique
    /// across blocks.
    pub fn coinbase(miner: Address, height: u64, extra: &[u8]) -> Self {
        let mut tag = height.to_le_bytes().to_vec();
        tag.extend_from_slice(&extra[..extra.len().min(MAX_OP_RETURN - 8)]);
        Transaction::new(vec![Output::pay(miner, 50_0000_0000), Output::op_return(tag)])
            .expect("coinbase is well-formed")
    }

    pub fn txid(&self) -> Hash256 {
        self.txid
    }

    pub fn outputs(&self) -> &[Output] {
        &self.outputs
    }

    pub fn op_return(&self) -> Option<&[u8]> {
        self.outputs.iter().find_map(|o| match &o.script {
            Script::OpReturn(p) => Some(p.as_slice()),
            _ => None,
        })
    }

    pub fn amount_paid_to(&self, address: &Address) -> u64 {
        self.outputs
            .iter()
            .filter(|o| o.script == Script::PayToAddress(*address))
            .map(|o| o.amount)
            .sum()
    }

    pub fn pays(&self, address: &Address) -> bool {
        self.outputs.iter().any(|o| o.script == Script::PayToAddress(*address))
    }

    /// Canonical serialization:
    /// `version:u32le | count:u8 | { amount:u64le | kind:u8 | body }*`, where
    /// the body is a 20-byte address (kind 0) or `len:u8 | payload` (kind 1).
    pub fn serialize(&self) -> Vec<u8> {
        encode_outputs(&self.outputs)
    }

    /// Parses one transaction from the front of `buf`, returning it and the
    /// number of bytes consumed.
    pub fn deserialize_prefix(buf: &[u8]) -> Result<(Self, usize), ChainError> {
        let mut r = Reader { buf, pos: 0 };
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != TX_VERSION {
            return Err(ChainError::Decode("unsupported transaction version"));
        }
        let count = r.take(1)?[0];
        let mut outputs = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let amount = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
            let script = match r.take(1)?[0] {
                SCRIPT_PAY_TO_ADDRESS => Script::PayToAddress(Address(r.take(20)?.try_into().unwrap())),
                SCRIPT_OP_RETURN => {
                    let len = r.take(1)?[0] as usize;
                    Script::OpReturn(r.take(len)?.to_vec())
                }
                _ => return Err(ChainError::Decode("unknown script kind")),
            };
            outputs.push(Output { amount, script });
        }
        Ok((Transaction::new(outputs)?, r.pos))
    }

    pub fn deserialize(buf: &[u8]) -> Result<Self, ChainError> {
        let (tx, used) = Self::deserialize_prefix(buf)?;
        if used != buf.len() {
            return Err(ChainError::Decode("trailing bytes after transaction"));
        }
        Ok(tx)
    }
}

fn encode_outputs(outputs: &[Output]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + outputs.len() * 40);
    out.extend_from_slice(&TX_VERSION.to_le_bytes());
    out.push(outputs.len() as u8);
    for o in outputs {
        out.extend_from_slice(&o.amount.to_le_bytes());
        match &o.script {
            Script::PayToAddress(a) => {
                out.push(SCRIPT_PAY_TO_ADDRESS);
                out.extend_from_slice(&a.0);
            }
            Script::OpReturn(p) => {
                out.push(SCRIPT_OP_RETURN);
                out.push(p.len() as u8);
                out.extend_from_slice(p);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ChainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ChainError::Decode("truncated transaction")),
        }
    }
}

/// One payment output plus one OP_RETURN output carrying `metadata`.
pub fn build_payment_tx(
    address: Address,
    amount: u64,
    metadata: &[u8],
) -> Result<Transaction, ChainError> {
    if metadata.len() > MAX_OP_RETURN {
        return Err(ChainError::OpReturnTooLarge(metadata.len()));
    }
    Transaction::new(vec![Output::pay(address, amount), Output::op_return(metadata.to_vec())])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payment_tx_metadata_boundaries() {
        let addr = Address([7; 20]);
        let empty = build_payment_tx(addr, 10, &[]).unwrap();
        assert_eq!(empty.op_return(), Some(&[][..]));
        assert!(build_payment_tx(addr, 10, &[1; 80]).is_ok());
        assert_eq!(
            build_payment_tx(addr, 10, &[1; 81]),
            Err(ChainError::OpReturnTooLarge(81))
        );
    }

    #[test]
    fn txid_is_recomputable_from_serialization() {
        let tx = build_payment_tx(Address([1; 20]), 5000, b"hello").unwrap();
        let bytes = tx.serialize();
        assert_eq!(sha256d(&bytes), tx.txid());
        assert_eq!(Transaction::deserialize(&bytes).unwrap(), tx);
    }

    #[test]
    fn at_most_one_op_return() {
        let r = Transaction::new(vec![Output::op_return(vec![1]), Output::op_return(vec![2])]);
        assert_eq!(r, Err(ChainError::MultipleOpReturn));
        assert_eq!(Transaction::new(vec![]), Err(ChainError::NoOutputs));
    }

    #[test]
    fn truncated_tx_fails_to_parse() {
        let bytes = build_payment_tx(Address([1; 20]), 1, b"abc").unwrap().serialize();
        for cut in 0..bytes.len() {
            assert!(Transaction::deserialize(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn coinbases_differ_by_height() {
        let a = Transaction::coinbase(Address::default(), 1, b"");
        let b = Transaction::coinbase(Address::default(), 2, b"");
        assert_ne!(a.txid(), b.txid());
    }

    #[test]
    fn amount_paid_sums_matching_outputs() {
        let a = Address([3; 20]);
        let tx = Transaction::new(vec![Output::pay(a, 3), Output::pay(Address([4; 20]), 9), Output::pay(a, 4)])
            .unwrap();
        assert_eq!(tx.amount_paid_to(&a), 7);
        assert!(tx.pays(&a));
        assert!(!tx.pays(&Address([5; 20])));
    }
}
