//! Scripted release scenarios with recorded message transcripts.

use std::cell::RefCell;
use std::fmt::{self, Write as _};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::identity::{AnchorKey, EndpointIdentity, TrustAnchors};
use super::messages::{ExplorerMessage, PeerMessage};
use super::services::{
    answer_from_chain, serve_explorer, serve_peer, ExplorerBehavior, ExplorerClient, ExplorerService, PeerBehavior,
    PeerClient, PeerService, RemoteExplorer, RemotePeer, ServiceHandle,
};
use super::transport::{Endpoint, TransportError};
use crate::chainkit::{mine_fake_chain, Address, Chain, ChainError, Checkpoint, Hash256, SimClock, Transaction};
use crate::enclave::{DeviceSecret, Enclave, EnclaveConfig, EnclaveError, ExposureLedger, LaunchToken, VictimRecord};
use crate::keys::AttackerKeyPair;
use crate::release::{
    build_payment, scheme2_verify_and_release, scheme3_verify_and_release, RefusalReason, ReleaseDecision,
    ReleaseError, ReleaseMetadata, ReleasePolicy,
};
use crate::stats::{linear_fit, mean, LinearFitF64};

/// Easy difficulty for scenario chains: about two attempts per block.
pub const SCENARIO_BITS: u32 = 0x2000_ffff;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
    #[error(transparent)]
    Release(#[from] ReleaseError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeerSetup {
    None,
    Honest,
    /// Victim-controlled peer serving a forged suffix with this many blocks
    /// above the forged payment.
    Forged { n_extra: u64 },
    Unavailable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExplorerSetup {
    None,
    Honest,
    /// Honest data behind a certificate from an unpinned anchor.
    Untrusted,
    /// Pinned channel, but claims a payment that is not on chain.
    Lying { claimed_confirmations: u64 },
    Unavailable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioScheme {
    Spv,
    Explorer,
    /// Explorer answer cross-checked by the SPV client.
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wiring {
    InProcess,
    Local,
    Tcp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioScript {
    pub seed: u64,
    pub bits: u32,
    /// Confirmations of the honest payment on the honest chain.
    pub depth: u64,
    pub min_confirmations: u64,
    pub n_extra_blocks: u64,
    pub scheme: ScenarioScheme,
    pub peer: PeerSetup,
    pub explorer: ExplorerSetup,
    pub wiring: Wiring,
}

impl Default for ScenarioScript {
    fn default() -> Self {
        ScenarioScript {
            seed: 0,
            bits: SCENARIO_BITS,
            depth: 6,
            min_confirmations: ReleasePolicy::DEFAULT_CONFIRMATIONS,
            n_extra_blocks: 0,
            scheme: ScenarioScheme::Spv,
            peer: PeerSetup::Honest,
            explorer: ExplorerSetup::None,
            wiring: Wiring::InProcess,
        }
    }
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.depth == 0 {
            return Err(ScenarioError::Invalid("depth must be at least 1"));
        }
        if self.min_confirmations == 0 {
            return Err(ScenarioError::Invalid("min_confirmations must be at least 1"));
        }
        let needs_peer = matches!(self.scheme, ScenarioScheme::Spv | ScenarioScheme::Combined);
        let needs_explorer = matches!(self.scheme, ScenarioScheme::Explorer | ScenarioScheme::Combined);
        if needs_peer && self.peer == PeerSetup::None {
            return Err(ScenarioError::Invalid("scheme needs a peer behavior"));
        }
        if needs_explorer && self.explorer == ExplorerSetup::None {
            return Err(ScenarioError::Invalid("scheme needs an explorer behavior"));
        }
        if matches!(self.peer, PeerSetup::Forged { .. })
            && matches!(self.explorer, ExplorerSetup::Lying { .. })
        {
            return Err(ScenarioError::Invalid("forged peer and lying explorer claim different payments"));
        }
        Ok(())
    }

    fn uses_forgery(&self) -> bool {
        matches!(self.peer, PeerSetup::Forged { .. }) || matches!(self.explorer, ExplorerSetup::Lying { .. })
    }
}

/// Everything a release scenario acts on: a provisioned victim boundary,
/// the honest chain with the victim's payment, and explorer identities.
pub struct World {
    pub enclave: Enclave,
    pub record: VictimRecord,
    pub attacker: AttackerKeyPair,
    pub chain: Chain,
    /// Last block before the payment, as embedded in the policy.
    pub checkpoint: Checkpoint,
    pub payment: Transaction,
    /// Same metadata as `payment`, never mined on the honest chain.
    pub forged_payment: Transaction,
    pub identity: EndpointIdentity,
    pub rogue: EndpointIdentity,
    pub clock: SimClock,
    pub rng: ChaCha20Rng,
}

impl World {
    /// Honest chain: genesis, two blocks, the checkpoint, then the payment
    /// buried under `depth - 1` blocks.
    pub fn build(seed: u64, bits: u32, depth: u64) -> Result<World, ScenarioError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let anchor = AnchorKey::generate(&mut rng);
        let identity = anchor.issue("explorer.sim", &mut rng);
        let rogue = AnchorKey::generate(&mut rng).issue("explorer.sim", &mut rng);
        let attacker = AttackerKeyPair::from_seed(seed);
        let config = EnclaveConfig {
            attacker_key: attacker.public_key(),
            anchors: TrustAnchors::new(vec![anchor.public()]),
            transition_cost: Duration::ZERO,
        };
        let mut enclave = Enclave::create(
            &LaunchToken("scenario".into()),
            DeviceSecret::from_bytes(rng.gen()),
            config,
            Arc::new(ExposureLedger::new()),
            rng.gen(),
        )?;
        let record = enclave.provision()?;

        let mut clock = SimClock::default();
        let mut chain = Chain::genesis(bits, &mut clock)?;
        chain.mine_empty(2, Address::default(), &mut clock)?;
        let checkpoint = chain.tip_checkpoint();
        let md = ReleaseMetadata::new(&attacker.public_key(), &record.vk_pub, record.nonce);
        let wallet = attacker.public_key().wallet_address();
        let payment = build_payment(wallet, 250_000, &md)?;
        let forged_payment = build_payment(wallet, 1, &md)?;
        chain.mine_block(vec![payment.clone()], Address::default(), &mut clock, u64::MAX)?;
        chain.mine_empty(depth.saturating_sub(1), Address::default(), &mut clock)?;
        Ok(World {
            enclave,
            record,
            attacker,
            chain,
            checkpoint,
            payment,
            forged_payment,
            identity,
            rogue,
            clock,
            rng,
        })
    }

    pub fn policy(&self, min_confirmations: u64, n_extra_blocks: u64) -> ReleasePolicy {
        ReleasePolicy::with(self.checkpoint, min_confirmations, n_extra_blocks)
    }

    pub fn honest_peer(&self) -> PeerBehavior {
        PeerBehavior::Honest(Arc::new(self.chain.clone()))
    }

    /// Mines a forged suffix on the checkpoint carrying `forged_payment`
    /// and `n_extra` blocks above it. Returns the serving behavior and the
    /// hash attempts spent.
    pub fn forge(&mut self, n_extra: u64) -> Result<(PeerBehavior, u64), ScenarioError> {
        let mut clock = self.clock.clone();
        let fake = mine_fake_chain(
            &self.checkpoint,
            &self.forged_payment,
            n_extra,
            self.checkpoint.bits,
            &mut clock,
            &mut self.rng,
            u64::MAX,
        )?;
        let base = self.chain.truncated(self.checkpoint.height);
        let behavior = PeerBehavior::forked(&base, self.checkpoint.height, fake.blocks)?;
        Ok((behavior, fake.attempts))
    }

    fn explorer(&self, setup: ExplorerSetup) -> Option<(ExplorerBehavior, EndpointIdentity)> {
        let honest = || ExplorerBehavior::Honest(Arc::new(self.chain.clone()));
        Some(match setup {
            ExplorerSetup::None => return None,
            ExplorerSetup::Honest => (honest(), self.identity.clone()),
            ExplorerSetup::Untrusted => (honest(), self.rogue.clone()),
            ExplorerSetup::Lying { claimed_confirmations } => (
                ExplorerBehavior::Lying(vec![(self.forged_payment.clone(), claimed_confirmations)]),
                self.identity.clone(),
            ),
            ExplorerSetup::Unavailable => (ExplorerBehavior::Unavailable, self.identity.clone()),
        })
    }
}

/// One request and what came back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exchange {
    Peer { request: PeerMessage, response: Result<PeerMessage, String> },
    Explorer { request: ExplorerMessage, response: Result<ExplorerMessage, String> },
}

impl Exchange {
    /// A delivered response must answer its request.
    pub fn paired(&self) -> bool {
        match self {
            Exchange::Peer { request, response } => response.as_ref().map_or(true, |r| r.answers(request)),
            Exchange::Explorer { request, response } => response.as_ref().map_or(true, |r| r.answers(request)),
        }
    }
}

impl fmt::Display for Exchange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn side<T: fmt::Display>(f: &mut fmt::Formatter<'_>, who: &str, req: &T, resp: &Result<T, String>) -> fmt::Result {
            writeln!(f, "{who}> {req}")?;
            match resp {
                Ok(r) => write!(f, "{who}< {r}"),
                Err(kind) => write!(f, "{who}< error {kind}"),
            }
        }
        match self {
            Exchange::Peer { request, response } => side(f, "peer", request, response),
            Exchange::Explorer { request, response } => side(f, "explorer", request, response),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Transcript {
    pub script: ScenarioScript,
    pub exchanges: Vec<Exchange>,
    pub released: bool,
    pub reason: Option<RefusalReason>,
    /// Chain honest services answered from.
    pub snapshot: Arc<Chain>,
}

impl Transcript {
    pub fn decision(&self) -> &'static str {
        match self.reason {
            None => "released",
            Some(r) => r.as_str(),
        }
    }

    pub fn tags_paired(&self) -> bool {
        self.exchanges.iter().all(Exchange::paired)
    }

    /// Replays honest-service answers against the snapshot.
    pub fn consistent_with_snapshot(&self) -> bool {
        let chain = &self.snapshot;
        self.exchanges.iter().all(|e| match e {
            Exchange::Peer { request, response: Ok(r) } if self.script.peer == PeerSetup::Honest => {
                *r == answer_from_chain(chain, request)
            }
            Exchange::Explorer { request: ExplorerMessage::GetTx { txid, .. }, response: Ok(r) }
                if self.script.explorer == ExplorerSetup::Honest =>
            {
                match (r, chain.find_tx(txid)) {
                    (ExplorerMessage::TxInfo { tx, confirmations, .. }, Some((_, t))) => {
                        tx == t && *confirmations == chain.confirmations(txid)
                    }
                    (ExplorerMessage::TxNotFound { .. }, None) => true,
                    _ => false,
                }
            }
            _ => true,
        })
    }

    pub fn to_text(&self) -> String {
        let s = &self.script;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario seed={} scheme={:?} peer={:?} explorer={:?} wiring={:?}",
            s.seed, s.scheme, s.peer, s.explorer, s.wiring
        );
        let _ = writeln!(out, "policy min_confirmations={} n_extra_blocks={} depth={}", s.min_confirmations, s.n_extra_blocks, s.depth);
        for e in &self.exchanges {
            let _ = writeln!(out, "{e}");
        }
        let _ = writeln!(out, "decision {}", self.decision());
        out
    }
}

struct Recorded<'a, C: ?Sized> {
    inner: &'a mut C,
    log: &'a RefCell<Vec<Exchange>>,
}

impl<C: PeerClient + ?Sized> PeerClient for Recorded<'_, C> {
    fn request(&mut self, msg: &PeerMessage) -> Result<PeerMessage, TransportError> {
        let r = self.inner.request(msg);
        let response = r.as_ref().map(Clone::clone).map_err(|e| e.kind().to_string());
        self.log.borrow_mut().push(Exchange::Peer { request: msg.clone(), response });
        r
    }
}

impl<C: ExplorerClient + ?Sized> ExplorerClient for Recorded<'_, C> {
    fn exchange(&mut self, msg: &ExplorerMessage) -> Result<ExplorerMessage, TransportError> {
        let r = self.inner.exchange(msg);
        let response = r.as_ref().map(Clone::clone).map_err(|e| e.kind().to_string());
        self.log.borrow_mut().push(Exchange::Explorer { request: msg.clone(), response });
        r
    }
}

static LOCAL_NAMES: AtomicU64 = AtomicU64::new(0);

fn endpoint_for(wiring: Wiring, role: &str) -> Endpoint {
    match wiring {
        Wiring::Tcp => Endpoint::Tcp(([127, 0, 0, 1], 0).into()),
        _ => Endpoint::Local(format!("scenario-{role}-{}", LOCAL_NAMES.fetch_add(1, Ordering::Relaxed))),
    }
}

fn peer_client(
    behavior: PeerBehavior,
    wiring: Wiring,
    handles: &mut Vec<ServiceHandle>,
) -> Result<Box<dyn PeerClient>, ScenarioError> {
    if wiring == Wiring::InProcess {
        return Ok(Box::new(PeerService::new(behavior)));
    }
    let h = serve_peer(behavior, &endpoint_for(wiring, "peer"))?;
    let client = RemotePeer::new(h.endpoint().clone());
    handles.push(h);
    Ok(Box::new(client))
}

fn explorer_client(
    behavior: ExplorerBehavior,
    identity: EndpointIdentity,
    wiring: Wiring,
    handles: &mut Vec<ServiceHandle>,
) -> Result<Box<dyn ExplorerClient>, ScenarioError> {
    if wiring == Wiring::InProcess {
        return Ok(Box::new(ExplorerService::new(behavior, identity)));
    }
    let h = serve_explorer(behavior, identity, &endpoint_for(wiring, "explorer"))?;
    let client = RemoteExplorer::new(h.endpoint().clone());
    handles.push(h);
    Ok(Box::new(client))
}

/// Builds the world for `script`, wires its services and runs one release
/// attempt, recording every message the boundary exchanged.
pub fn run_scenario(script: &ScenarioScript) -> Result<Transcript, ScenarioError> {
    script.validate()?;
    let mut world = World::build(script.seed, script.bits, script.depth)?;
    let mut handles = Vec::new();

    let peer_behavior = match script.peer {
        PeerSetup::None => None,
        PeerSetup::Honest => Some(world.honest_peer()),
        PeerSetup::Forged { n_extra } => Some(world.forge(n_extra)?.0),
        PeerSetup::Unavailable => Some(PeerBehavior::Unavailable),
    };
    let mut peer = peer_behavior.map(|b| peer_client(b, script.wiring, &mut handles)).transpose()?;
    let mut explorer = world
        .explorer(script.explorer)
        .map(|(b, id)| explorer_client(b, id, script.wiring, &mut handles))
        .transpose()?;

    let txid: Hash256 = if script.uses_forgery() { world.forged_payment.txid() } else { world.payment.txid() };
    let mut policy = world.policy(script.min_confirmations, script.n_extra_blocks);
    let log = RefCell::new(Vec::new());

    let decision: ReleaseDecision = match script.scheme {
        ScenarioScheme::Spv => {
            let p = peer.as_deref_mut().expect("validated");
            scheme2_verify_and_release(&mut world.enclave, &policy, &mut Recorded { inner: p, log: &log }, &txid)?
        }
        ScenarioScheme::Explorer | ScenarioScheme::Combined => {
            policy.combined = script.scheme == ScenarioScheme::Combined;
            let e = explorer.as_deref_mut().expect("validated");
            let mut rec_e = Recorded { inner: e, log: &log };
            let mut rec_p = peer.as_deref_mut().map(|p| Recorded { inner: p, log: &log });
            let peer_arg = rec_p.as_mut().map(|p| p as &mut dyn PeerClient);
            scheme3_verify_and_release(&mut world.enclave, &policy, &mut rec_e, peer_arg, &txid)?
        }
    };
    drop(handles);
    Ok(Transcript {
        script: *script,
        exchanges: log.into_inner(),
        released: decision.released(),
        reason: decision.reason(),
        snapshot: Arc::new(world.chain),
    })
}

/// Attempts spent forging chains with `n_extra` blocks above the payment.
#[derive(Clone, Debug, PartialEq)]
pub struct CostPoint {
    pub n_extra: u64,
    pub attempts: Vec<u64>,
    pub mean_attempts: f64,
    /// Every forged chain passed `policy(min_confirmations, n_extra)`.
    pub all_released: bool,
    /// A chain with one fewer block was refused (vacuous at `n_extra = 0`).
    pub shorter_refused: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FakeChainCost {
    pub bits: u32,
    pub min_confirmations: u64,
    pub trials: usize,
    pub points: Vec<CostPoint>,
    pub fit: Option<LinearFitF64>,
}

/// The adversarial-miner experiment: for each `n`, a victim mines forged
/// suffixes from the policy checkpoint until the SPV verifier accepts,
/// recording total hash attempts.
pub fn fake_chain_cost(
    bits: u32,
    n_values: &[u64],
    trials: usize,
    min_confirmations: u64,
    seed: u64,
) -> Result<FakeChainCost, ScenarioError> {
    let mut world = World::build(seed, bits, 1)?;
    let mut points = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let policy = world.policy(min_confirmations, n);
        let mut attempts = Vec::with_capacity(trials);
        let mut all_released = true;
        for _ in 0..trials {
            let (behavior, cost) = world.forge(n)?;
            let d = scheme2_verify_and_release(
                &mut world.enclave,
                &policy,
                &mut PeerService::new(behavior),
                &world.forged_payment.txid(),
            )?;
            all_released &= d.released();
            attempts.push(cost);
        }
        let shorter_refused = match n.checked_sub(1) {
            None => true,
            Some(short) => {
                let (behavior, _) = world.forge(short)?;
                let d = scheme2_verify_and_release(
                    &mut world.enclave,
                    &policy,
                    &mut PeerService::new(behavior),
                    &world.forged_payment.txid(),
                )?;
                d.reason() == Some(RefusalReason::InsufficientConfirmations)
            }
        };
        let as_f64: Vec<f64> = attempts.iter().map(|&a| a as f64).collect();
        points.push(CostPoint {
            n_extra: n,
            mean_attempts: mean(&as_f64).unwrap_or(0.0),
            attempts,
            all_released,
            shorter_refused,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.n_extra as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_attempts).collect();
    Ok(FakeChainCost { bits, min_confirmations, trials, fit: linear_fit(&xs, &ys), points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainkit::BITS_ALWAYS;

    fn script(f: impl FnOnce(&mut ScenarioScript)) -> ScenarioScript {
        let mut s = ScenarioScript { seed: 21, ..Default::default() };
        f(&mut s);
        s
    }

    #[test]
    fn happy_path_spv_releases() {
        let t = run_scenario(&script(|_| {})).unwrap();
        assert!(t.released, "{}", t.to_text());
        assert!(t.to_text().ends_with("decision released\n"));
        assert!(t.tags_paired() && t.consistent_with_snapshot());
    }

    #[test]
    fn forged_peer_follows_policy() {
        let t = run_scenario(&script(|s| {
            s.peer = PeerSetup::Forged { n_extra: 5 };
            s.n_extra_blocks = 6;
        }))
        .unwrap();
        assert_eq!(t.reason, Some(RefusalReason::InsufficientConfirmations));
        let t = run_scenario(&script(|s| {
            s.peer = PeerSetup::Forged { n_extra: 6 };
            s.n_extra_blocks = 6;
        }))
        .unwrap();
        assert!(t.released);
    }

    #[test]
    fn explorer_outage_is_unavailable() {
        let t = run_scenario(&script(|s| {
            s.scheme = ScenarioScheme::Explorer;
            s.peer = PeerSetup::None;
            s.explorer = ExplorerSetup::Unavailable;
        }))
        .unwrap();
        assert_eq!(t.reason, Some(RefusalReason::EndpointUnavailable));
    }

    #[test]
    fn transcripts_are_deterministic_across_wirings() {
        let base = script(|s| {
            s.scheme = ScenarioScheme::Combined;
            s.explorer = ExplorerSetup::Honest;
        });
        let a = run_scenario(&base).unwrap().to_text();
        let b = run_scenario(&base).unwrap().to_text();
        assert_eq!(a, b);
        let local = run_scenario(&ScenarioScript { wiring: Wiring::Local, ..base }).unwrap();
        let tcp = run_scenario(&ScenarioScript { wiring: Wiring::Tcp, ..base }).unwrap();
        assert!(local.released && tcp.released);
        assert_eq!(local.exchanges, tcp.exchanges);
    }

    #[test]
    fn validation_rejects_missing_behaviors() {
        assert!(run_scenario(&script(|s| s.peer = PeerSetup::None)).is_err());
        assert!(run_scenario(&script(|s| s.scheme = ScenarioScheme::Explorer)).is_err());
        assert!(run_scenario(&script(|s| s.min_confirmations = 0)).is_err());
    }

    #[test]
    fn always_target_costs_one_attempt_per_block() {
        let r = fake_chain_cost(BITS_ALWAYS, &[0, 2], 3, 1, 1).unwrap();
        assert_eq!(r.points[0].attempts, vec![1, 1, 1]);
        assert_eq!(r.points[1].attempts, vec![3, 3, 3]);
        assert!(r.points.iter().all(|p| p.all_released && p.shorter_refused));
        let fit = r.fit.unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-9 && (fit.r_squared - 1.0).abs() < 1e-9);
    }
}
