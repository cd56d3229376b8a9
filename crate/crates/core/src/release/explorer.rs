use rand::RngCore;

use super::spv::spv_check;
use super::{Refusal, RefusalReason, ReleaseDecision, ReleaseError, ReleaseMetadata, ReleasePolicy};
use crate::chainkit::Hash256;
use crate::enclave::{EcallOp, Enclave, EnclaveError, InBoundary};
use crate::nodesim::{
    explorer_signing_input, verify_signature, ExplorerClient, ExplorerMessage, PeerClient, SIG_LEN,
};

fn unavailable(e: impl ToString) -> Refusal {
    Refusal::new(RefusalReason::EndpointUnavailable, e.to_string())
}

fn check_signed(
    key: &[u8; 33],
    challenge: &[u8; 32],
    resp: &ExplorerMessage,
    sig: &[u8; SIG_LEN],
) -> Result<(), Refusal> {
    if verify_signature(key, &explorer_signing_input(challenge, resp), sig) {
        Ok(())
    } else {
        Err(Refusal::new(RefusalReason::UntrustedEndpoint, "response signature does not verify"))
    }
}

fn explorer_check(
    b: &mut InBoundary,
    explorer: &mut dyn ExplorerClient,
    policy: &ReleasePolicy,
    txid: &Hash256,
) -> Result<(), Refusal> {
    let mut challenge = [0u8; 32];
    b.rng().fill_bytes(&mut challenge);
    let hello = ExplorerMessage::Hello { challenge };
    let key = match explorer.exchange(&hello).map_err(unavailable)? {
        resp @ ExplorerMessage::ServerHello { .. } => {
            let ExplorerMessage::ServerHello { certificate, signature } = &resp else { unreachable!() };
            b.config()
                .anchors
                .verify(certificate)
                .map_err(|e| Refusal::new(RefusalReason::UntrustedEndpoint, e.to_string()))?;
            check_signed(&certificate.public_key, &challenge, &resp, signature)?;
            certificate.public_key
        }
        other => return Err(unavailable(format!("unexpected {} to hello", other.name()))),
    };

    let wallet = b.wallet().expect("provisioned");
    let resp = explorer.exchange(&ExplorerMessage::GetTx { wallet, txid: *txid }).map_err(unavailable)?;
    let (tx, confirmations) = match &resp {
        ExplorerMessage::TxInfo { tx, confirmations, signature } => {
            check_signed(&key, &challenge, &resp, signature)?;
            (tx, *confirmations)
        }
        ExplorerMessage::TxNotFound { signature } => {
            check_signed(&key, &challenge, &resp, signature)?;
            return Err(Refusal::new(RefusalReason::NoPayment, "explorer reports no such payment"));
        }
        other => return Err(unavailable(format!("unexpected {} to gettx", other.name()))),
    };
    if tx.txid() != *txid || tx.amount_paid_to(&wallet) == 0 {
        return Err(Refusal::new(RefusalReason::NoPayment, "reported transaction does not pay the attacker wallet"));
    }
    let nonce = b.nonce().expect("provisioned");
    match tx.op_return().and_then(ReleaseMetadata::parse) {
        Some(md) if md.nonce == nonce => {}
        _ => return Err(Refusal::new(RefusalReason::NonceMismatch, "payment metadata names another nonce")),
    }
    if confirmations < policy.min_confirmations {
        return Err(Refusal::new(
            RefusalReason::InsufficientConfirmations,
            format!("{confirmations} confirmations, need {}", policy.min_confirmations),
        ));
    }
    Ok(())
}

/// Releases the victim key iff an explorer authenticated by a pinned anchor
/// reports `txid` paying the embedded wallet with enough confirmations. In
/// combined mode the peer must also prove the payment through SPV.
pub fn scheme3_verify_and_release(
    enclave: &mut Enclave,
    policy: &ReleasePolicy,
    explorer: &mut dyn ExplorerClient,
    peer: Option<&mut dyn PeerClient>,
    txid: &Hash256,
) -> Result<ReleaseDecision, ReleaseError> {
    policy.validate()?;
    if policy.combined && peer.is_none() {
        return Err(ReleaseError::CombinedNeedsPeer);
    }
    if enclave.vk_pub().is_none() {
        return Err(EnclaveError::NotProvisioned.into());
    }
    let gate = enclave.gated_release(EcallOp::ReleaseExplorer, |b| {
        explorer_check(b, explorer, policy, txid)?;
        match peer {
            Some(p) if policy.combined => spv_check(b, p, policy, txid),
            _ => Ok(()),
        }
    })?;
    Ok(ReleaseDecision::from_gate(gate))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::time::Duration;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::chainkit::{Address, Chain, SimClock, Transaction};
    use crate::enclave::test_support::test_attacker;
    use crate::enclave::{DeviceSecret, EnclaveConfig, ExposureLedger, LaunchToken};
    use crate::nodesim::{AnchorKey, EndpointIdentity, ExplorerBehavior, ExplorerService, PeerBehavior, PeerService, TrustAnchors};
    use crate::release::build_payment;

    const BITS: u32 = 0x2000_ffff;

    struct World {
        enclave: Enclave,
        chain: Chain,
        policy: ReleasePolicy,
        identity: EndpointIdentity,
        rogue: EndpointIdentity,
        txid: Hash256,
        forged: Transaction,
    }

    fn world() -> World {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let anchor = AnchorKey::generate(&mut rng);
        let identity = anchor.issue("explorer.test", &mut rng);
        let rogue = AnchorKey::generate(&mut rng).issue("explorer.test", &mut rng);
        let config = EnclaveConfig {
            attacker_key: test_attacker().public_key(),
            anchors: TrustAnchors::new(vec![anchor.public()]),
            transition_cost: Duration::ZERO,
        };
        let mut enclave = Enclave::create(
            &LaunchToken("t".into()),
            DeviceSecret::from_bytes([4; 32]),
            config,
            Arc::new(ExposureLedger::new()),
            4,
        )
        .unwrap();
        let rec = enclave.provision().unwrap();
        let ak = test_attacker().public_key();
        let md = ReleaseMetadata::new(&ak, &rec.vk_pub, rec.nonce);
        let mut clock = SimClock::default();
        let mut chain = Chain::genesis(BITS, &mut clock).unwrap();
        let policy = ReleasePolicy::with(chain.tip_checkpoint(), 6, 0);
        let tx = build_payment(ak.wallet_address(), 10, &md).unwrap();
        chain.mine_block(vec![tx.clone()], Address::default(), &mut clock, u64::MAX).unwrap();
        chain.mine_empty(6, Address::default(), &mut clock).unwrap();
        let forged = build_payment(ak.wallet_address(), 1, &md).unwrap();
        World { enclave, chain, policy, identity, rogue, txid: tx.txid(), forged }
    }

    fn explorer(behavior: ExplorerBehavior, id: &EndpointIdentity) -> ExplorerService {
        ExplorerService::new(behavior, id.clone())
    }

    #[test]
    fn honest_explorer_releases() {
        let mut w = world();
        let mut ex = explorer(ExplorerBehavior::Honest(Arc::new(w.chain.clone())), &w.identity);
        let d = scheme3_verify_and_release(&mut w.enclave, &w.policy, &mut ex, None, &w.txid).unwrap();
        assert!(d.released(), "{d}");
    }

    #[test]
    fn unpinned_explorer_is_untrusted() {
        let mut w = world();
        let mut ex = explorer(ExplorerBehavior::Honest(Arc::new(w.chain.clone())), &w.rogue);
        let d = scheme3_verify_and_release(&mut w.enclave, &w.policy, &mut ex, None, &w.txid).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::UntrustedEndpoint));
    }

    #[test]
    fn lying_explorer_defeats_explorer_only_but_not_combined() {
        let mut w = world();
        let script = vec![(w.forged.clone(), 100)];
        let mut ex = explorer(ExplorerBehavior::Lying(script.clone()), &w.identity);
        let forged = w.forged.txid();
        let d = scheme3_verify_and_release(&mut w.enclave, &w.policy, &mut ex, None, &forged).unwrap();
        assert!(d.released(), "a pinned but lying explorer is trusted");

        let mut w = world();
        let mut ex = explorer(ExplorerBehavior::Lying(script), &w.identity);
        let mut peer = PeerService::new(PeerBehavior::Honest(Arc::new(w.chain.clone())));
        let mut policy = w.policy;
        policy.combined = true;
        let d = scheme3_verify_and_release(&mut w.enclave, &policy, &mut ex, Some(&mut peer), &forged).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::NoPayment));
        assert!(!w.enclave.is_released());
    }

    #[test]
    fn unavailable_and_missing() {
        let mut w = world();
        let mut ex = explorer(ExplorerBehavior::Unavailable, &w.identity);
        let d = scheme3_verify_and_release(&mut w.enclave, &w.policy, &mut ex, None, &w.txid).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::EndpointUnavailable));
        let mut ex = explorer(ExplorerBehavior::Honest(Arc::new(w.chain.clone())), &w.identity);
        let d = scheme3_verify_and_release(&mut w.enclave, &w.policy, &mut ex, None, &Hash256([1; 32])).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::NoPayment));
        let mut policy = w.policy;
        policy.combined = true;
        assert!(matches!(
            scheme3_verify_and_release(&mut w.enclave, &policy, &mut ex, None, &w.txid),
            Err(ReleaseError::CombinedNeedsPeer)
        ));
    }
}
