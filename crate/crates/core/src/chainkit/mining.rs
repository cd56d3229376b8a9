use rand::RngCore;

use super::{merkle_root, Address, Block, BlockHeader, ChainError, Checkpoint, Hash256, SimClock, Target, Transaction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mined {
    pub header: BlockHeader,
    /// Number of header hashes evaluated, including the successful one.
    pub attempts: u64,
}

/// Proof-of-work search starting at `template.pow_nonce`. When the 32-bit
/// nonce space wraps, the timestamp is bumped and the search continues.
pub fn mine(template: BlockHeader, max_iters: u64) -> Result<Mined, ChainError> {
    let target = Target::from_compact(template.bits)?;
    let start = template.pow_nonce;
    let mut header = template;
    let mut attempts = 0u64;
    while attempts < max_iters {
        attempts += 1;
        if target.is_met_by(&header.hash()) {
            return Ok(Mined { header, attempts });
        }
        header.pow_nonce = header.pow_nonce.wrapping_add(1);
        if header.pow_nonce == start {
            header.timestamp = header.timestamp.wrapping_add(1);
        }
    }
    Err(ChainError::Exhausted { attempts })
}

/// Forged suffix produced by an adversarial miner.
#[derive(Clone, Debug)]
pub struct FakeChain {
    /// First block carries the payment; the rest are padding blocks.
    pub blocks: Vec<Block>,
    /// Total hash attempts across every block.
    pub attempts: u64,
}

impl FakeChain {
    pub fn headers(&self) -> Vec<BlockHeader> {
        self.blocks.iter().map(|b| b.header).collect()
    }
}

const FORGER: Address = Address([0xfe; 20]);

/// Mines `1 + n_extra` valid-work blocks on top of `checkpoint`, the first
/// containing `payment_tx`. Each block gets a random starting nonce and a
/// random coinbase tag so repeated runs are independent trials.
pub fn mine_fake_chain<R: RngCore>(
    checkpoint: &Checkpoint,
    payment_tx: &Transaction,
    n_extra: u64,
    bits: u32,
    clock: &mut SimClock,
    rng: &mut R,
    max_iters_per_block: u64,
) -> Result<FakeChain, ChainError> {
    let mut blocks = Vec::with_capacity(n_extra as usize + 1);
    let mut prev: Hash256 = checkpoint.hash;
    let mut attempts = 0u64;
    for i in 0..=n_extra {
        let height = checkpoint.height + 1 + i;
        let mut tag = [0u8; 8];
        rng.fill_bytes(&mut tag);
        let mut txs = vec![Transaction::coinbase(FORGER, height, &tag)];
        if i == 0 {
            txs.push(payment_tx.clone());
        }
        let ids: Vec<Hash256> = txs.iter().map(Transaction::txid).collect();
        let template = BlockHeader {
            version: 1,
            prev_hash: prev,
            merkle_root: merkle_root(&ids)?,
            timestamp: clock.tick(),
            bits,
            pow_nonce: rng.next_u32(),
        };
        let mined = match mine(template, max_iters_per_block) {
            Ok(m) => m,
            Err(ChainError::Exhausted { attempts: a }) => {
                return Err(ChainError::Exhausted { attempts: attempts + a })
            }
            Err(e) => return Err(e),
        };
        attempts += mined.attempts;
        prev = mined.header.hash();
        blocks.push(Block { header: mined.header, txs });
    }
    Ok(FakeChain { blocks, attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainkit::{build_payment_tx, BITS_ALWAYS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const BITS_2_240: u32 = 0x1f01_0000;

    fn template(bits: u32, nonce: u32) -> BlockHeader {
        BlockHeader { version: 1, bits, pow_nonce: nonce, timestamp: 1, ..Default::default() }
    }

    #[test]
    fn always_target_takes_one_attempt() {
        let m = mine(template(BITS_ALWAYS, 7), 10).unwrap();
        assert_eq!(m.attempts, 1);
        assert_eq!(m.header.pow_nonce, 7);
    }

    #[test]
    fn zero_budget_is_exhausted() {
        assert_eq!(mine(template(BITS_ALWAYS, 0), 0), Err(ChainError::Exhausted { attempts: 0 }));
    }

    #[test]
    fn mined_header_meets_2_240() {
        let m = mine(template(BITS_2_240, 0), u64::MAX).unwrap();
        assert!(m.header.meets_target());
        let mut le = m.header.hash().0;
        le.reverse();
        // big-endian view: the top 16 bits are zero (or the value is exactly 2^240)
        assert!(le[0] == 0 && (le[1] == 0 || (le[1] == 1 && le[2..].iter().all(|&b| b == 0))));
    }

    #[test]
    fn geometric_mean_attempts_at_2_240() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let runs = 50;
        let total: u64 = (0..runs)
            .map(|i| {
                let mut t = template(BITS_2_240, rng.next_u32());
                t.timestamp = i;
                mine(t, u64::MAX).unwrap().attempts
            })
            .sum();
        let mean = total as f64 / runs as f64;
        assert!(mean > 65536.0 / 3.0 && mean < 65536.0 * 3.0, "mean {mean}");
    }

    #[test]
    fn fake_chain_single_block_at_trivial_target() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let cp = Checkpoint { hash: Hash256([4; 32]), height: 10, bits: BITS_ALWAYS };
        let pay = build_payment_tx(Address([2; 20]), 5, b"n").unwrap();
        let fc = mine_fake_chain(&cp, &pay, 0, BITS_ALWAYS, &mut SimClock::default(), &mut rng, 5)
            .unwrap();
        assert_eq!(fc.blocks.len(), 1);
        assert_eq!(fc.attempts, 1);
        assert!(fc.blocks[0].txs.contains(&pay));
        assert_eq!(fc.blocks[0].header.prev_hash, cp.hash);
    }

    #[test]
    fn fake_chain_exhaustion_propagates() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let cp = Checkpoint { hash: Hash256::ZERO, height: 0, bits: BITS_2_240 };
        let pay = build_payment_tx(Address([2; 20]), 5, b"n").unwrap();
        let r = mine_fake_chain(&cp, &pay, 3, BITS_2_240, &mut SimClock::default(), &mut rng, 3);
        assert!(matches!(r, Err(ChainError::Exhausted { .. })));
    }
}
