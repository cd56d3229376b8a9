//! Chain file layout (all integers little-endian):
//!
//! ```text
//! magic    16 bytes  "ESCROWSIM-CHAIN\0"
//! version   1 byte   0x01
//! blocks    u32      number of blocks, genesis first
//! per block:
//!   header  80 bytes (raw serialized header)
//!   ntx     u32
//!   ntx x canonical transaction serialization (self-delimiting)
//! ```

use std::io::{self, Read, Write};

use super::{deserialize_header, serialize_header, Block, Chain, ChainError, Transaction, HEADER_LEN};

pub const CHAIN_MAGIC: &[u8; 16] = b"ESCROWSIM-CHAIN\0";
pub const CHAIN_VERSION: u8 = 1;

pub fn write_chain<W: Write>(chain: &Chain, mut w: W) -> io::Result<()> {
    w.write_all(CHAIN_MAGIC)?;
    w.write_all(&[CHAIN_VERSION])?;
    w.write_all(&((chain.height() + 1) as u32).to_le_bytes())?;
    for block in chain.blocks() {
        w.write_all(&serialize_header(&block.header))?;
        w.write_all(&(block.txs.len() as u32).to_le_bytes())?;
        for tx in &block.txs {
            w.write_all(&tx.serialize())?;
        }
    }
    w.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum ChainFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

pub fn read_chain<R: Read>(mut r: R) -> Result<Chain, ChainFileError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let bad = |m| ChainFileError::Chain(ChainError::Decode(m));
    if buf.len() < 21 || &buf[..16] != CHAIN_MAGIC {
        return Err(bad("not an escrowsim chain file"));
    }
    if buf[16] != CHAIN_VERSION {
        return Err(bad("unsupported chain file version"));
    }
    let count = u32::from_le_bytes(buf[17..21].try_into().unwrap());
    let mut pos = 21;
    let mut blocks = Vec::new();
    for _ in 0..count {
        let hdr = buf.get(pos..pos + HEADER_LEN).ok_or_else(|| bad("truncated header"))?;
        let header = deserialize_header(hdr)?;
        pos += HEADER_LEN;
        let ntx = buf.get(pos..pos + 4).ok_or_else(|| bad("truncated tx count"))?;
        let ntx = u32::from_le_bytes(ntx.try_into().unwrap());
        pos += 4;
        let mut txs = Vec::new();
        for _ in 0..ntx {
            let (tx, used) = Transaction::deserialize_prefix(&buf[pos..])?;
            pos += used;
            txs.push(tx);
        }
        blocks.push(Block { header, txs });
    }
    if pos != buf.len() {
        return Err(bad("trailing bytes in chain file"));
    }
    Ok(Chain::from_blocks(blocks)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainkit::{build_payment_tx, Address, SimClock, BITS_ALWAYS};

    #[test]
    fn chain_file_round_trip() {
        let mut clock = SimClock::default();
        let mut c = Chain::genesis(BITS_ALWAYS, &mut clock).unwrap();
        let tx = build_payment_tx(Address([3; 20]), 9, b"meta").unwrap();
        c.mine_block(vec![tx.clone()], Address([1; 20]), &mut clock, 1).unwrap();
        c.mine_empty(2, Address([1; 20]), &mut clock).unwrap();
        let mut bytes = Vec::new();
        write_chain(&c, &mut bytes).unwrap();
        assert_eq!(&bytes[..16], CHAIN_MAGIC);
        let back = read_chain(&bytes[..]).unwrap();
        assert_eq!(back.headers(), c.headers());
        assert_eq!(back.confirmations(&tx.txid()), 3);
    }

    #[test]
    fn corrupted_chain_file_is_rejected() {
        let mut clock = SimClock::default();
        let mut c = Chain::genesis(BITS_ALWAYS, &mut clock).unwrap();
        c.mine_empty(2, Address([1; 20]), &mut clock).unwrap();
        let mut bytes = Vec::new();
        write_chain(&c, &mut bytes).unwrap();
        // prev_hash of block 1 lives right after its 80-byte predecessor record
        let mut broken = bytes.clone();
        let first_block_len = 80 + 4 + c.block_at(0).unwrap().txs[0].serialize().len();
        broken[21 + first_block_len + 4] ^= 1;
        assert!(read_chain(&broken[..]).is_err());
        assert!(read_chain(&bytes[..bytes.len() - 1]).is_err());
    }
}
