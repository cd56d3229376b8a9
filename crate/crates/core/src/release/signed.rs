use std::collections::BTreeMap;

use super::metadata::{parse_signature_part, signature_parts};
use super::{Refusal, RefusalReason, ReleaseDecision, ReleaseError, ReleaseMetadata};
use crate::chainkit::{Address, Chain, Hash256, Output, SimClock, Transaction};
use crate::enclave::{EcallOp, Enclave, EnclaveError};
use crate::keys::{AttackerKeyPair, AttackerPublicKey, Fingerprint};

/// Payments carrying metadata for `ak_pub` that also pay its wallet.
pub fn attacker_scan(chain: &Chain, ak_pub: &AttackerPublicKey) -> Vec<(Hash256, ReleaseMetadata)> {
    let ak_fp = ak_pub.fingerprint();
    let wallet = ak_pub.wallet_address();
    chain
        .blocks()
        .flat_map(|b| b.txs)
        .filter_map(|tx| {
            let md = ReleaseMetadata::parse(tx.op_return()?)?;
            (md.ak_fp == ak_fp && tx.amount_paid_to(&wallet) > 0).then(|| (tx.txid(), md))
        })
        .collect()
}

/// RSA signature over SHA-256 of the canonical metadata.
pub fn attacker_sign(md: &ReleaseMetadata, ak: &AttackerKeyPair) -> Vec<u8> {
    ak.sign(&md.serialize())
}

/// Mines one block carrying the signature parts for `vk_fp`. Returns the
/// part transactions in order.
pub fn publish_signature(
    chain: &mut Chain,
    signature: &[u8],
    vk_fp: &Fingerprint,
    miner: Address,
    clock: &mut SimClock,
) -> Result<Vec<Transaction>, ReleaseError> {
    let txs = signature_parts(signature, vk_fp)?
        .into_iter()
        .map(|p| Transaction::new(vec![Output::op_return(p)]))
        .collect::<Result<Vec<_>, _>>()?;
    chain.mine_block(txs.clone(), miner, clock, u64::MAX)?;
    Ok(txs)
}

/// Reassembles the most recent complete signature published for `vk_fp`.
pub fn victim_scan(chain: &Chain, vk_fp: &Fingerprint) -> Option<Vec<u8>> {
    let mut latest: Option<Vec<u8>> = None;
    let mut pending: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
    let mut expected = 0u8;
    for tx in chain.blocks().flat_map(|b| b.txs) {
        let Some((fp, index, count, bytes)) = tx.op_return().and_then(parse_signature_part) else { continue };
        if fp != *vk_fp {
            continue;
        }
        if index == 0 || count != expected {
            pending.clear();
            expected = count;
        }
        pending.insert(index, bytes.to_vec());
        if pending.len() == count as usize && pending.keys().copied().eq(0..count) {
            latest = Some(pending.values().flatten().copied().collect());
            pending.clear();
        }
    }
    latest
}

/// Releases the victim key iff the signature verifies under the embedded
/// attacker key and the metadata names this boundary's nonce and victim key.
pub fn scheme1_verify_and_release(
    enclave: &mut Enclave,
    md: &ReleaseMetadata,
    signature: &[u8],
) -> Result<ReleaseDecision, ReleaseError> {
    if enclave.vk_pub().is_none() {
        return Err(EnclaveError::NotProvisioned.into());
    }
    let gate = enclave.gated_release(EcallOp::ReleaseSigned, |b| {
        let ak = &b.config().attacker_key;
        if md.ak_fp != ak.fingerprint() {
            return Err(Refusal::new(RefusalReason::BadSignature, "metadata names a different attacker key"));
        }
        if !ak.verify(&md.serialize(), signature) {
            return Err(Refusal::new(RefusalReason::BadSignature, "signature does not verify under the embedded key"));
        }
        if md.nonce != b.nonce().expect("provisioned") {
            return Err(Refusal::new(RefusalReason::NonceMismatch, "signed nonce belongs to another enclave"));
        }
        if md.vk_fp != b.vk_pub().expect("provisioned").fingerprint() {
            return Err(Refusal::new(RefusalReason::NonceMismatch, "signed metadata names another victim key"));
        }
        Ok(())
    })?;
    Ok(ReleaseDecision::from_gate(gate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainkit::{BITS_ALWAYS};
    use crate::enclave::test_support::{test_attacker, test_enclave};
    use crate::release::build_payment;

    #[test]
    fn sign_verify_and_binding() {
        let ak = test_attacker();
        let md = ReleaseMetadata { ak_fp: ak.public_key().fingerprint(), vk_fp: [1; 20], nonce: [2; 32] };
        let sig = attacker_sign(&md, &ak);
        assert!(ak.public_key().verify(&md.serialize(), &sig));
        let other = AttackerKeyPair::from_seed(1234);
        assert!(!other.public_key().verify(&md.serialize(), &sig));
        let md_b = ReleaseMetadata { nonce: [3; 32], ..md };
        assert!(!ak.public_key().verify(&md_b.serialize(), &sig));
    }

    #[test]
    fn scan_requires_payment_and_metadata() {
        let ak = test_attacker().public_key();
        let mut clock = SimClock::default();
        let mut chain = Chain::genesis(BITS_ALWAYS, &mut clock).unwrap();
        assert!(attacker_scan(&chain, &ak).is_empty());
        let md = ReleaseMetadata { ak_fp: ak.fingerprint(), vk_fp: [1; 20], nonce: [2; 32] };
        let paid = build_payment(ak.wallet_address(), 1000, &md).unwrap();
        let unpaid = build_payment(Address([9; 20]), 1000, &md).unwrap();
        chain.mine_block(vec![paid.clone(), unpaid], Address::default(), &mut clock, 10).unwrap();
        assert_eq!(attacker_scan(&chain, &ak), vec![(paid.txid(), md)]);
    }

    #[test]
    fn publish_then_scan_per_victim() {
        let mut clock = SimClock::default();
        let mut chain = Chain::genesis(BITS_ALWAYS, &mut clock).unwrap();
        let a: Vec<u8> = (0..=255).collect();
        let b: Vec<u8> = (0..=255).rev().collect();
        publish_signature(&mut chain, &a, &[1; 20], Address::default(), &mut clock).unwrap();
        publish_signature(&mut chain, &b, &[2; 20], Address::default(), &mut clock).unwrap();
        assert_eq!(victim_scan(&chain, &[1; 20]), Some(a));
        assert_eq!(victim_scan(&chain, &[2; 20]), Some(b));
        assert_eq!(victim_scan(&chain, &[3; 20]), None);
    }

    #[test]
    fn honest_flow_replay_and_corruption() {
        let ak = test_attacker();
        let mut victim_a = test_enclave(1, 1);
        let rec_a = victim_a.provision().unwrap();
        let mut victim_b = test_enclave(2, 2);
        let rec_b = victim_b.provision().unwrap();
        let md_a = ReleaseMetadata::new(&ak.public_key(), &rec_a.vk_pub, rec_a.nonce);
        let sig_a = attacker_sign(&md_a, &ak);

        let mut bad = sig_a.clone();
        bad[17] ^= 0x40;
        let d = scheme1_verify_and_release(&mut victim_a, &md_a, &bad).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::BadSignature));
        assert!(!victim_a.is_released());

        let d = scheme1_verify_and_release(&mut victim_b, &md_a, &sig_a).unwrap();
        assert_eq!(d.reason(), Some(RefusalReason::NonceMismatch));
        assert!(!victim_b.is_released());
        assert!(victim_b.ledger().is_empty());
        let _ = rec_b;

        let d = scheme1_verify_and_release(&mut victim_a, &md_a, &sig_a).unwrap();
        assert!(d.released());
        assert_eq!(d.vk_prv().unwrap().public_key(), rec_a.vk_pub);
    }
}
