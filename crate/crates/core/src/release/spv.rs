use super::{Refusal, RefusalReason, ReleaseDecision, ReleaseError, ReleaseMetadata, ReleasePolicy};
use crate::chainkit::{verify_proof_in_header, Address, BlockHeader, ChainError, Checkpoint, Hash256};
use crate::enclave::{EcallOp, Enclave, EnclaveError, InBoundary, NONCE_LEN};
use crate::nodesim::{PeerClient, PeerMessage, TransportError};

#[derive(Debug, thiserror::Error)]
pub enum SpvError {
    #[error("peer unreachable: {0}")]
    Unavailable(#[from] TransportError),
    #[error("peer does not know the checkpoint")]
    UnknownCheckpoint,
    #[error("invalid header chain: {0}")]
    Invalid(#[from] ChainError),
    #[error("unexpected {0} reply")]
    Unexpected(&'static str),
}

/// Checks that `headers` extend `checkpoint`: each links to its parent,
/// carries the checkpoint's bits and meets the target they encode.
pub fn validate_headers(checkpoint: &Checkpoint, headers: &[BlockHeader]) -> Result<(), ChainError> {
    let mut prev = checkpoint.hash;
    for (i, h) in headers.iter().enumerate() {
        let height = checkpoint.height + i as u64 + 1;
        if h.prev_hash != prev {
            return Err(ChainError::BrokenLink { height });
        }
        if h.bits != checkpoint.bits {
            return Err(ChainError::WrongBits { height, expected: checkpoint.bits, found: h.bits });
        }
        if !h.meets_target() {
            return Err(ChainError::InsufficientWork { height });
        }
        prev = h.hash();
    }
    Ok(())
}

/// Fetches and validates every header above the checkpoint.
pub fn spv_sync(peer: &mut dyn PeerClient, checkpoint: &Checkpoint) -> Result<Vec<BlockHeader>, SpvError> {
    match peer.request(&PeerMessage::GetHeaders { from: checkpoint.hash })? {
        PeerMessage::Headers(hs) => {
            validate_headers(checkpoint, &hs)?;
            Ok(hs)
        }
        PeerMessage::NotFound => Err(SpvError::UnknownCheckpoint),
        other => Err(SpvError::Unexpected(other.name())),
    }
}

/// Full SPV payment check for `txid` paying `wallet` with metadata carrying
/// `nonce`. Runs on either side of the boundary.
pub fn spv_verify_payment(
    peer: &mut dyn PeerClient,
    policy: &ReleasePolicy,
    wallet: &Address,
    nonce: &[u8; NONCE_LEN],
    txid: &Hash256,
) -> Result<(), Refusal> {
    let cp = &policy.checkpoint;
    let headers = spv_sync(peer, cp).map_err(|e| match e {
        SpvError::Unavailable(t) => Refusal::new(RefusalReason::EndpointUnavailable, t.to_string()),
        other => Refusal::new(RefusalReason::InvalidHeaderChain, other.to_string()),
    })?;
    let reply = peer
        .request(&PeerMessage::GetMerkleBlock { txid: *txid })
        .map_err(|t| Refusal::new(RefusalReason::EndpointUnavailable, t.to_string()))?;
    let (header, proof, tx) = match reply {
        PeerMessage::MerkleBlock { header, proof, tx } => (header, proof, tx),
        PeerMessage::NotFound => return Err(Refusal::new(RefusalReason::NoPayment, "peer has no such transaction")),
        other => return Err(Refusal::new(RefusalReason::BadProof, format!("unexpected {} reply", other.name()))),
    };
    let block_hash = header.hash();
    let Some(pos) = headers.iter().position(|h| h.hash() == block_hash) else {
        return Err(Refusal::new(RefusalReason::BadProof, "proof block is not on the validated header chain"));
    };
    if proof.leaf_txid != *txid || tx.txid() != *txid || !verify_proof_in_header(&header, &proof) {
        return Err(Refusal::new(RefusalReason::BadProof, "merkle proof does not commit the transaction"));
    }
    if tx.amount_paid_to(wallet) == 0 {
        return Err(Refusal::new(RefusalReason::NoPayment, "transaction does not pay the attacker wallet"));
    }
    match tx.op_return().and_then(ReleaseMetadata::parse) {
        Some(md) if md.nonce == *nonce => {}
        _ => return Err(Refusal::new(RefusalReason::NonceMismatch, "payment metadata names another nonce")),
    }
    let pay_height = cp.height + pos as u64 + 1;
    let tip_height = cp.height + headers.len() as u64;
    let confirmations = tip_height - pay_height + 1;
    let extra = tip_height - pay_height;
    if confirmations < policy.min_confirmations || extra < policy.n_extra_blocks {
        return Err(Refusal::new(
            RefusalReason::InsufficientConfirmations,
            format!(
                "{confirmations} confirmations and {extra} extra blocks, need {} and {}",
                policy.min_confirmations, policy.n_extra_blocks
            ),
        ));
    }
    Ok(())
}

/// [`spv_verify_payment`] against the wallet and nonce held in the boundary.
pub(crate) fn spv_check(
    b: &mut InBoundary,
    peer: &mut dyn PeerClient,
    policy: &ReleasePolicy,
    txid: &Hash256,
) -> Result<(), Refusal> {
    let wallet = b.wallet().expect("provisioned");
    let nonce = b.nonce().expect("provisioned");
    spv_verify_payment(peer, policy, &wallet, &nonce, txid)
}

/// Releases the victim key iff the peer proves, from the policy checkpoint,
/// that `txid` pays the embedded wallet with enough work on top.
pub fn scheme2_verify_and_release(
    enclave: &mut Enclave,
    policy: &ReleasePolicy,
    peer: &mut dyn PeerClient,
    txid: &Hash256,
) -> Result<ReleaseDecision, ReleaseError> {
    policy.validate()?;
    if enclave.vk_pub().is_none() {
        return Err(EnclaveError::NotProvisioned.into());
    }
    let gate = enclave.gated_release(EcallOp::ReleaseSpv, |b| spv_check(b, peer, policy, txid))?;
    Ok(ReleaseDecision::from_gate(gate))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::chainkit::{mine_fake_chain, Chain, SimClock};
    use crate::enclave::test_support::{test_attacker, test_enclave};
    use crate::nodesim::{PeerBehavior, PeerService};
    use crate::release::build_payment;

    const BITS: u32 = 0x2000_ffff;

    struct World {
        enclave: Enclave,
        chain: Chain,
        checkpoint: Checkpoint,
        txid: Hash256,
        clock: SimClock,
    }

    fn world(wallet_ok: bool, nonce_ok: bool) -> World {
        let mut enclave = test_enclave(5, 5);
        let rec = enclave.provision().unwrap();
        let ak = test_attacker().public_key();
        let mut clock = SimClock::default();
        let mut chain = Chain::genesis(BITS, &mut clock).unwrap();
        chain.mine_empty(2, Address::default(), &mut clock).unwrap();
        let checkpoint = chain.tip_checkpoint();
        let nonce = if nonce_ok { rec.nonce } else { [0xaa; 32] };
        let md = ReleaseMetadata::new(&ak, &rec.vk_pub, nonce);
        let wallet = if wallet_ok { ak.wallet_address() } else { Address([3; 20]) };
        let tx = build_payment(wallet, 50_000, &md).unwrap();
        chain.mine_block(vec![tx.clone()], Address::default(), &mut clock, u64::MAX).unwrap();
        World { enclave, chain, checkpoint, txid: tx.txid(), clock }
    }

    fn honest(chain: &Chain) -> PeerService {
        PeerService::new(PeerBehavior::Honest(Arc::new(chain.clone())))
    }

    #[test]
    fn confirmations_gate_release() {
        let mut w = world(true, true);
        let policy = ReleasePolicy::with(w.checkpoint, 6, 0);
        let d = scheme2_verify_and_release(&mut w.enclave, &policy, &mut honest(&w.chain), &w.txid).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::InsufficientConfirmations));
        w.chain.mine_empty(5, Address::default(), &mut w.clock).unwrap();
        let d = scheme2_verify_and_release(&mut w.enclave, &policy, &mut honest(&w.chain), &w.txid).unwrap();
        assert!(d.released(), "{d}");
    }

    #[test]
    fn extra_blocks_gate_release() {
        let mut w = world(true, true);
        w.chain.mine_empty(5, Address::default(), &mut w.clock).unwrap();
        let policy = ReleasePolicy::with(w.checkpoint, 1, 6);
        let d = scheme2_verify_and_release(&mut w.enclave, &policy, &mut honest(&w.chain), &w.txid).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::InsufficientConfirmations));
    }

    #[test]
    fn wrong_wallet_or_nonce_refused() {
        let mut w = world(false, true);
        let policy = ReleasePolicy::with(w.checkpoint, 1, 0);
        let d = scheme2_verify_and_release(&mut w.enclave, &policy, &mut honest(&w.chain), &w.txid).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::NoPayment));

        let mut w = world(true, false);
        let d = scheme2_verify_and_release(&mut w.enclave, &policy, &mut honest(&w.chain), &w.txid).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::NonceMismatch));
        assert!(!w.enclave.is_released());
    }

    #[test]
    fn unknown_tx_and_unavailable_peer() {
        let mut w = world(true, true);
        let policy = ReleasePolicy::with(w.checkpoint, 1, 0);
        let d = scheme2_verify_and_release(&mut w.enclave, &policy, &mut honest(&w.chain), &Hash256([9; 32])).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::NoPayment));
        let mut down = PeerService::new(PeerBehavior::Unavailable);
        let d = scheme2_verify_and_release(&mut w.enclave, &policy, &mut down, &w.txid).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::EndpointUnavailable));
    }

    #[test]
    fn tampered_headers_refused() {
        let w = world(true, true);
        let mut hs = w.chain.headers_after(&w.checkpoint.hash).unwrap().to_vec();
        hs[0].timestamp ^= 1;
        assert!(validate_headers(&w.checkpoint, &hs).is_err());
        let mut hs = w.chain.headers_after(&w.checkpoint.hash).unwrap().to_vec();
        hs[0].bits = 0x2100_ffff;
        assert!(matches!(validate_headers(&w.checkpoint, &hs), Err(ChainError::WrongBits { .. })));
    }

    #[test]
    fn forged_chain_from_checkpoint_is_accepted_when_work_is_paid() {
        // A fork mined at the checkpoint difficulty is indistinguishable.
        let mut w = world(true, true);
        let ak = test_attacker().public_key();
        let paid = w.chain.find_tx(&w.txid).unwrap().1.clone();
        let nonce = ReleaseMetadata::parse(paid.op_return().unwrap()).unwrap().nonce;
        let md = ReleaseMetadata::new(&ak, w.enclave.vk_pub().unwrap(), nonce);
        let forged_tx = build_payment(ak.wallet_address(), 1, &md).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let fake = mine_fake_chain(&w.checkpoint, &forged_tx, 5, BITS, &mut w.clock, &mut rng, u64::MAX).unwrap();
        let base = w.chain.truncated(w.checkpoint.height);
        let mut peer = PeerService::new(PeerBehavior::forked(&base, w.checkpoint.height, fake.blocks).unwrap());
        let policy = ReleasePolicy::with(w.checkpoint, 6, 0);
        let d = scheme2_verify_and_release(&mut w.enclave, &policy, &mut peer, &forged_tx.txid()).unwrap();
        assert!(d.released(), "{d}");
    }
}
