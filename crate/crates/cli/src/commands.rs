use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use escrowsim::chainkit::{Address, Chain, Hash256};
use escrowsim::cryptofile::{
    bench, capture_run, check_corpus_root, decrypt_corpus, encrypt_corpus, scan_corpus, uniform_sizes, write_corpus,
    BenchConfig, CorpusOptions, CorpusProfile, Decryptor, EngineMode, Encryptor, REFERENCE_DECRYPT_OVERHEAD_PCT,
    REFERENCE_ENCRYPT_OVERHEAD_PCT,
};
use escrowsim::enclave::{DeviceSecret, Enclave, EnclaveConfig, EscrowFile, ExposureLedger, LaunchToken};
use escrowsim::keys::{AttackerKeyPair, VictimSecretKey};
use escrowsim::nodesim::{
    fake_chain_cost, serve_explorer, serve_peer, AnchorKey, Endpoint, ExplorerBehavior, ExplorerClient,
    ExplorerService, PeerBehavior, PeerClient, PeerService, RemoteExplorer, RemotePeer, ServiceHandle, TrustAnchors,
    Wiring,
};
use escrowsim::release::{
    attacker_scan, attacker_sign, build_payment, publish_signature, scheme1_verify_and_release,
    scheme2_verify_and_release, scheme3_verify_and_release, victim_scan, ReleaseDecision, ReleaseMetadata,
    ReleasePolicy, Scheme,
};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExplorerChoice, PeerChoice};
use crate::error::{CliError, StageExt};
use crate::report::RunReport;
use crate::workspace::Workspace;

const EXPLORER_SUBJECT: &str = "explorer.sim";

/// A report plus whether it records a refusal decision.
pub struct Outcome {
    pub report: RunReport,
    pub refused: bool,
}

impl From<RunReport> for Outcome {
    fn from(report: RunReport) -> Self {
        Outcome { report, refused: false }
    }
}

fn corpus_root(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let root = cfg.corpus.as_ref().ok_or_else(|| CliError::Validation("a corpus root is required (--corpus)".into()))?;
    Ok(check_corpus_root(root)?)
}

fn chain_or_genesis(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Chain, CliError> {
    if ws.exists("chain.bin") {
        return ws.load_chain();
    }
    let mut clock = escrowsim::chainkit::SimClock::default();
    let chain = Chain::genesis(cfg.bits, &mut clock)?;
    ws.save_chain(&chain)?;
    Ok(chain)
}

pub fn chain_mine(cfg: &ExperimentConfig, ws: &Workspace, blocks: u64) -> Result<Outcome, CliError> {
    let mut chain = chain_or_genesis(cfg, ws)?;
    let mut clock = Workspace::clock_for(&chain);
    let attempts = chain.mine_empty(blocks, Address::default(), &mut clock)?;
    ws.save_chain(&chain)?;
    let mut r = RunReport::new("chain mine");
    r.push("chain.bits", format!("{:#010x}", chain.bits()));
    r.push("chain.mined_blocks", blocks);
    r.push("chain.attempts", attempts);
    r.push("chain.height", chain.height());
    r.push("chain.tip", chain.tip_hash());
    Ok(r.into())
}

pub fn keygen(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Outcome, CliError> {
    if ws.exists("victim.rec") {
        return Err(CliError::Validation(
            "work directory already holds a provisioned victim; use a fresh --work".into(),
        ));
    }
    let escrow_dir = cfg.escrow.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !escrow_dir.is_dir() {
        return Err(CliError::Validation(format!("escrow directory {} does not exist", escrow_dir.display())));
    }
    let mut rng = ws.rng(cfg.seed, "keygen")?;
    let attacker = AttackerKeyPair::generate(&mut rng)?;
    let device = DeviceSecret::generate(&mut rng);
    let anchor = AnchorKey::generate(&mut rng);
    let identity = anchor.issue(EXPLORER_SUBJECT, &mut rng);
    let anchors = TrustAnchors::new(vec![anchor.public()]);
    let chain = chain_or_genesis(cfg, ws)?;
    let policy = ReleasePolicy::with(chain.tip_checkpoint(), cfg.min_confirmations, cfg.n_extra_blocks);

    ws.write("attacker.der", &attacker.to_der())?;
    ws.write("attacker.pub", &attacker.public_key().to_der())?;
    ws.write("device.secret", device.expose())?;
    ws.write("anchors.txt", format!("# pinned explorer anchors\n{}\n", anchors.to_text()).as_bytes())?;
    ws.write("explorer.id", &identity.to_bytes())?;
    ws.save_build(&policy)?;

    let config = EnclaveConfig { attacker_key: attacker.public_key(), anchors, transition_cost: cfg.transition_cost };
    let ledger = Arc::new(ExposureLedger::new());
    let mut enclave = Enclave::create(&LaunchToken("escrowsim-cli".into()), device.clone(), config, ledger, rng.gen())?;
    let record = enclave.provision()?;
    ws.write("victim.rec", &record.serialize())?;
    let escrow = EscrowFile {
        device,
        blobs: vec![record.sealed_vk.clone(), record.sealed_wallet.clone(), record.sealed_nonce.clone()],
    };
    fs::write(&cfg.escrow, escrow.serialize()).map_err(|e| CliError::io(&cfg.escrow, e))?;

    let wallet = attacker.public_key().wallet_address();
    let note = ransom_note(&wallet, &record.nonce, &policy, &record.vk_pub.fingerprint(), &attacker);
    ws.write("ransom-note.txt", note.as_bytes())?;

    let mut r = RunReport::new("keygen");
    r.push("attacker.fingerprint", hex::encode(attacker.public_key().fingerprint()));
    r.push("attacker.wallet", wallet);
    r.push("victim.fingerprint", hex::encode(record.vk_pub.fingerprint()));
    r.push("victim.nonce", hex::encode(record.nonce));
    r.push("policy.checkpoint_height", policy.checkpoint.height);
    r.push("policy.checkpoint_hash", policy.checkpoint.hash);
    r.push("policy.min_confirmations", policy.min_confirmations);
    r.push("policy.n_extra_blocks", policy.n_extra_blocks);
    r.push("escrow.written", true);
    Ok(r.into())
}

fn ransom_note(
    wallet: &Address,
    nonce: &[u8; 32],
    policy: &ReleasePolicy,
    vk_fp: &[u8; 20],
    attacker: &AttackerKeyPair,
) -> String {
    format!(
        "escrowsim ransom note (simulation)\n\
         wallet = {wallet}\n\
         nonce = {}\n\
         victim_key = {}\n\
         attacker_key = {}\n\
         policy.checkpoint = {}@{}\n\
         policy.min_confirmations = {}\n\
         policy.n_extra_blocks = {}\n\
         pay = escrowsim pay --amount <satoshi>\n\
         scheme.signed = wait for the signature to appear on chain, then escrowsim release --scheme signed\n\
         scheme.spv = wait for {} confirmations, then escrowsim release --scheme spv\n\
         scheme.explorer = wait for {} confirmations, then escrowsim release --scheme explorer\n\
         decrypt = escrowsim decrypt\n",
        hex::encode(nonce),
        hex::encode(vk_fp),
        hex::encode(attacker.public_key().fingerprint()),
        policy.checkpoint.hash,
        policy.checkpoint.height,
        policy.min_confirmations,
        policy.n_extra_blocks,
        policy.min_confirmations,
        policy.min_confirmations,
    )
}

pub fn encrypt(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Outcome, CliError> {
    let root = corpus_root(cfg)?;
    let ledger = Arc::new(ExposureLedger::new());
    let mut enclave = ws.launch(cfg, ledger.clone())?;
    let rng = ws.rng(cfg.seed, "encrypt")?;
    let mut enc = Encryptor::new(cfg.mode, &mut enclave, rng)?;
    let report = encrypt_corpus(&root, &mut enc, CorpusOptions { replace: cfg.replace, stop_after: None })?;
    let mut r = RunReport::new("encrypt");
    r.push("mode", cfg.mode);
    r.push("replace", cfg.replace);
    r.push("files", report.files.len());
    r.push("bytes", report.total_bytes);
    r.push("boundary.enter", report.stats.enter_count);
    r.push("boundary.exit", report.stats.exit_count);
    r.push("exposure.entries", ledger.len());
    Ok(r.into())
}

pub fn pay(cfg: &ExperimentConfig, ws: &Workspace, amount: u64) -> Result<Outcome, CliError> {
    let _ = cfg;
    let record = ws.record()?;
    let ak = ws.attacker_pub()?;
    let md = ReleaseMetadata::new(&ak, &record.vk_pub, record.nonce);
    let tx = build_payment(ak.wallet_address(), amount, &md)?;
    let mut chain = ws.load_chain()?;
    let mut clock = Workspace::clock_for(&chain);
    let attempts = chain.mine_block(vec![tx.clone()], Address::default(), &mut clock, u64::MAX)?;
    ws.save_chain(&chain)?;
    ws.write("payment.txid", format!("{}\n", tx.txid()).as_bytes())?;
    let mut r = RunReport::new("pay");
    r.push("payment.txid", tx.txid());
    r.push("payment.amount", amount);
    r.push("payment.wallet", ak.wallet_address());
    r.push("payment.height", chain.height());
    r.push("payment.attempts", attempts);
    Ok(r.into())
}

pub fn sign(ws: &Workspace) -> Result<Outcome, CliError> {
    let ak = ws.attacker_key()?;
    let chain = ws.load_chain()?;
    let found = attacker_scan(&chain, &ak.public_key());
    for (_, md) in &found {
        let sig = attacker_sign(md, &ak);
        ws.write(&format!("signatures/{}.sig", hex::encode(md.vk_fp)), &sig)?;
    }
    let mut r = RunReport::new("sign");
    r.push("payments_found", found.len());
    for (i, (txid, md)) in found.iter().enumerate() {
        r.push(format!("payment.{i}.txid"), txid);
        r.push(format!("payment.{i}.victim"), hex::encode(md.vk_fp));
    }
    Ok(r.into())
}

pub fn publish(ws: &Workspace) -> Result<Outcome, CliError> {
    let dir = ws.path("signatures");
    let mut pending = Vec::new();
    if dir.is_dir() {
        for entry in fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))? {
            let p = entry.map_err(|e| CliError::io(&dir, e))?.path();
            if p.extension().is_some_and(|e| e == "sig") {
                pending.push(p);
            }
        }
    }
    pending.sort();
    let mut chain = ws.load_chain()?;
    let mut clock = Workspace::clock_for(&chain);
    let mut r = RunReport::new("publish");
    r.push("signatures", pending.len());
    for p in &pending {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let fp: [u8; 20] = hex::decode(stem)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| CliError::Validation(format!("bad signature file name {}", p.display())))?;
        let sig = fs::read(p).map_err(|e| CliError::io(p, e))?;
        let txs = publish_signature(&mut chain, &sig, &fp, Address::default(), &mut clock)?;
        r.push(format!("victim.{stem}.parts"), txs.len());
        r.push(format!("victim.{stem}.height"), chain.height());
        fs::rename(p, p.with_extension("published")).map_err(|e| CliError::io(p, e))?;
    }
    ws.save_chain(&chain)?;
    Ok(r.into())
}

fn endpoint(wiring: Wiring, role: &str, seed: u64) -> Endpoint {
    match wiring {
        Wiring::Tcp => Endpoint::Tcp(([127, 0, 0, 1], 0).into()),
        _ => Endpoint::Local(format!("cli-{role}-{seed}-{}", std::process::id())),
    }
}

/// Clients wired per configuration; remote services stop when dropped.
struct Services {
    peer: Box<dyn PeerClient>,
    explorer: Box<dyn ExplorerClient>,
    _handles: Vec<ServiceHandle>,
}

impl Services {
    fn start(cfg: &ExperimentConfig, ws: &Workspace, chain: &Chain) -> Result<Services, CliError> {
        let snapshot = Arc::new(chain.clone());
        let peer_behavior = match cfg.peer {
            PeerChoice::Honest => PeerBehavior::Honest(snapshot.clone()),
            PeerChoice::Unavailable => PeerBehavior::Unavailable,
        };
        let identity = match cfg.explorer {
            ExplorerChoice::Untrusted => {
                let mut rng = ws.rng(cfg.seed, "rogue-anchor")?;
                AnchorKey::generate(&mut rng).issue(EXPLORER_SUBJECT, &mut rng)
            }
            _ => ws.identity()?,
        };
        let explorer_behavior = match cfg.explorer {
            ExplorerChoice::Unavailable => ExplorerBehavior::Unavailable,
            _ => ExplorerBehavior::Honest(snapshot),
        };
        if cfg.wiring == Wiring::InProcess {
            return Ok(Services {
                peer: Box::new(PeerService::new(peer_behavior)),
                explorer: Box::new(ExplorerService::new(explorer_behavior, identity)),
                _handles: Vec::new(),
            });
        }
        let p = serve_peer(peer_behavior, &endpoint(cfg.wiring, "peer", cfg.seed))?;
        let e = serve_explorer(explorer_behavior, identity, &endpoint(cfg.wiring, "explorer", cfg.seed))?;
        Ok(Services {
            peer: Box::new(RemotePeer::new(p.endpoint().clone())),
            explorer: Box::new(RemoteExplorer::new(e.endpoint().clone())),
            _handles: vec![p, e],
        })
    }
}

fn payment_txid(ws: &Workspace, over: Option<&str>) -> Result<Hash256, CliError> {
    let text = match over {
        Some(t) => t.to_string(),
        None => String::from_utf8(ws.read("payment.txid")?).unwrap_or_default(),
    };
    Hash256::from_hex(text.trim()).ok_or_else(|| CliError::Validation(format!("malformed txid {:?}", text.trim())))
}

pub fn release(cfg: &ExperimentConfig, ws: &Workspace, txid: Option<&str>) -> Result<Outcome, CliError> {
    let mut policy = ws.load_build()?;
    policy.combined = cfg.combined;
    let ledger = Arc::new(ExposureLedger::new());
    let mut enclave = ws.launch(cfg, ledger.clone())?;
    let chain = ws.load_chain()?;
    let mut r = RunReport::new("release");
    r.push("scheme", cfg.scheme);
    let decision: ReleaseDecision = match cfg.scheme {
        Scheme::Signed => {
            let record = ws.record()?;
            let sig = victim_scan(&chain, &record.vk_pub.fingerprint()).ok_or_else(|| {
                CliError::Validation("no signature for this victim has been published on chain".into())
            })?;
            let md = ReleaseMetadata::new(&ws.attacker_pub()?, &record.vk_pub, record.nonce);
            scheme1_verify_and_release(&mut enclave, &md, &sig)?
        }
        Scheme::Spv => {
            let txid = payment_txid(ws, txid)?;
            r.push("peer", cfg.peer.as_str());
            let mut s = Services::start(cfg, ws, &chain)?;
            scheme2_verify_and_release(&mut enclave, &policy, s.peer.as_mut(), &txid)?
        }
        Scheme::Explorer => {
            let txid = payment_txid(ws, txid)?;
            r.push("explorer", cfg.explorer.as_str());
            r.push("combined", policy.combined);
            let mut s = Services::start(cfg, ws, &chain)?;
            let peer = if policy.combined { Some(s.peer.as_mut() as &mut dyn PeerClient) } else { None };
            scheme3_verify_and_release(&mut enclave, &policy, s.explorer.as_mut(), peer, &txid)?
        }
    };
    let refused = !decision.released();
    match &decision {
        ReleaseDecision::Released(vk) => {
            ws.write("released.vk", &vk.to_bytes())?;
            r.push("decision", "released");
        }
        ReleaseDecision::Refused(why) => {
            r.push("decision", "refused");
            r.push("reason", why.reason);
            r.push("detail", &why.detail);
        }
    }
    let stats = enclave.stats();
    r.push("boundary.enter", stats.enter_count);
    r.push("boundary.exit", stats.exit_count);
    let vk_leaked = match &decision {
        ReleaseDecision::Released(_) => None,
        ReleaseDecision::Refused(_) => Some(ledger.snapshot().iter().any(|e| e.tag == "released-vk")),
    };
    if let Some(leak) = vk_leaked {
        r.push("exposure.victim_key", if leak { "exposed" } else { "none" });
    }
    Ok(Outcome { report: r, refused })
}

fn decrypt_with(root: &Path, vk: &VictimSecretKey, remove: bool, r: &mut RunReport) -> Result<(), CliError> {
    let report = decrypt_corpus(root, &mut Decryptor::Host(vk), remove)?;
    r.push("decrypt.restored", report.restored.len());
    r.push("decrypt.verified", report.verified.len());
    r.push("decrypt.mismatched", report.mismatched.len());
    r.push("decrypt.envelopes_removed", remove);
    if !report.all_ok() {
        return Err(CliError::Validation(format!(
            "{} files decrypted to contents that differ from the originals on disk",
            report.mismatched.len()
        )));
    }
    Ok(())
}

pub fn decrypt(cfg: &ExperimentConfig, ws: &Workspace, remove: bool) -> Result<Outcome, CliError> {
    let root = corpus_root(cfg)?;
    let vk = ws.released_key()?;
    let mut r = RunReport::new("decrypt");
    decrypt_with(&root, &vk, remove, &mut r)?;
    Ok(r.into())
}

pub fn recover(cfg: &ExperimentConfig, ws: &Workspace, then_decrypt: bool, remove: bool) -> Result<Outcome, CliError> {
    let bytes = fs::read(&cfg.escrow).map_err(|e| CliError::io(&cfg.escrow, e))?;
    let escrow = EscrowFile::deserialize(&bytes)?;
    let mut enclave = ws.launch(cfg, Arc::new(ExposureLedger::new()))?;
    let vk = enclave.operator_release(&escrow)?;
    ws.write("released.vk", &vk.to_bytes())?;
    let mut r = RunReport::new("recover");
    r.push("recovered", "operator-escrow");
    r.push("victim.fingerprint", hex::encode(vk.public_key().fingerprint()));
    if then_decrypt {
        decrypt_with(&corpus_root(cfg)?, &vk, remove, &mut r)?;
    }
    Ok(r.into())
}

pub fn bench_cmd(
    cfg: &ExperimentConfig,
    profile: CorpusProfile,
    scale: u64,
    files: usize,
    repeats: usize,
) -> Result<Outcome, CliError> {
    let sizes: Vec<u64> = profile.sizes(scale, cfg.seed).into_iter().take(files).collect();
    let b = bench(&BenchConfig { file_sizes: sizes, transition_cost: cfg.transition_cost, repeats, seed: cfg.seed })?;
    let ms = |d: std::time::Duration| format!("{:.3}", d.as_secs_f64() * 1e3);
    let mut r = RunReport::new("bench");
    r.push("profile", profile);
    r.push("scale", scale);
    r.push("files", b.files);
    r.push("bytes", b.bytes);
    r.push("chunks", b.chunks);
    r.push("transition_cost_us", b.transition_cost.as_micros());
    for t in [&b.reactive, &b.proactive] {
        r.push(format!("{}.encrypt_ms", t.mode), ms(t.encrypt));
        r.push(format!("{}.decrypt_ms", t.mode), ms(t.decrypt));
        r.push(format!("{}.encrypt_crossings", t.mode), t.encrypt_crossings);
        r.push(format!("{}.decrypt_crossings", t.mode), t.decrypt_crossings);
    }
    r.push("overhead.encrypt_predicted_ms", format!("{:.3}", b.predicted_encrypt_overhead() * 1e3));
    r.push("overhead.encrypt_measured_ms", format!("{:.3}", b.measured_encrypt_overhead() * 1e3));
    r.push("overhead.decrypt_predicted_ms", format!("{:.3}", b.predicted_decrypt_overhead() * 1e3));
    r.push("overhead.decrypt_measured_ms", format!("{:.3}", b.measured_decrypt_overhead() * 1e3));
    r.push("overhead.encrypt_pct", format!("{:.2}", b.encrypt_overhead_pct()));
    r.push("overhead.decrypt_pct", format!("{:.2}", b.decrypt_overhead_pct()));
    r.push("reference.encrypt_pct", format!("{REFERENCE_ENCRYPT_OVERHEAD_PCT:.2} (hardware reference, not a target)"));
    r.push("reference.decrypt_pct", format!("{REFERENCE_DECRYPT_OVERHEAD_PCT:.2} (hardware reference, not a target)"));
    Ok(r.into())
}

pub fn capture(cfg: &ExperimentConfig, files: usize, max_bytes: u64) -> Result<Outcome, CliError> {
    let sizes = uniform_sizes(files, 1, max_bytes.max(1), cfg.seed);
    let mut r = RunReport::new("capture");
    r.push("files", files);
    for mode in EngineMode::ALL {
        let c = capture_run(mode, &sizes, cfg.seed)?;
        r.push(format!("{mode}.envelopes"), c.envelopes);
        r.push(format!("{mode}.ek_exposed"), c.ek_exposed);
        r.push(format!("{mode}.ek_exposure_pct"), format!("{:.1}", c.ek_exposure_pct()));
        r.push(format!("{mode}.vk_exposed_before_release"), c.vk_exposed_before_release);
    }
    Ok(r.into())
}

pub fn fake_chain_cost_cmd(
    cfg: &ExperimentConfig,
    bits: u32,
    ns: &[u64],
    trials: usize,
    min_confirmations: u64,
) -> Result<Outcome, CliError> {
    if trials == 0 || ns.is_empty() {
        return Err(CliError::Validation("need at least one n value and one trial".into()));
    }
    if min_confirmations == 0 {
        return Err(CliError::Validation("min_confirmations must be at least 1".into()));
    }
    let c = fake_chain_cost(bits, ns, trials, min_confirmations, cfg.seed)?;
    let mut r = RunReport::new("fake-chain-cost");
    r.push("bits", format!("{bits:#010x}"));
    r.push("trials", trials);
    r.push("policy.min_confirmations", min_confirmations);
    for p in &c.points {
        let n = p.n_extra;
        r.push(format!("n{n}.blocks"), n + 1);
        r.push(format!("n{n}.mean_attempts"), format!("{:.1}", p.mean_attempts));
        r.push(format!("n{n}.min_attempts"), p.attempts.iter().min().copied().unwrap_or(0));
        r.push(format!("n{n}.max_attempts"), p.attempts.iter().max().copied().unwrap_or(0));
        r.push(format!("n{n}.forged_released"), p.all_released);
        r.push(format!("n{n}.shorter_refused"), p.shorter_refused);
    }
    match c.fit {
        Some(f) => {
            r.push("fit.slope", format!("{:.2}", f.slope));
            r.push("fit.intercept", format!("{:.2}", f.intercept));
            r.push("fit.r_squared", format!("{:.4}", f.r_squared));
        }
        None => r.push("fit", "undefined (need two distinct n values)"),
    }
    Ok(r.into())
}

pub enum CorpusShape {
    Profile { profile: CorpusProfile, scale: u64 },
    Uniform { files: usize, min_bytes: u64, max_bytes: u64 },
}

pub fn corpus_gen(cfg: &ExperimentConfig, shape: CorpusShape) -> Result<Outcome, CliError> {
    let root = cfg.corpus.as_ref().ok_or_else(|| CliError::Validation("a corpus root is required (--corpus)".into()))?;
    let sizes = match shape {
        CorpusShape::Profile { profile, scale } => profile.sizes(scale, cfg.seed),
        CorpusShape::Uniform { files, min_bytes, max_bytes } => {
            if min_bytes > max_bytes {
                return Err(CliError::Validation("min-bytes exceeds max-bytes".into()));
            }
            uniform_sizes(files, min_bytes, max_bytes, cfg.seed)
        }
    };
    let written = write_corpus(root, &sizes, cfg.seed)?;
    let mut r = RunReport::new("corpus-gen");
    r.push("files", written.len());
    r.push("bytes", sizes.iter().sum::<u64>());
    Ok(r.into())
}

fn digests(root: &Path) -> Result<BTreeMap<PathBuf, [u8; 32]>, CliError> {
    let mut out = BTreeMap::new();
    for rel in scan_corpus(root)? {
        let p = root.join(&rel);
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        out.insert(rel, Sha256::digest(&bytes).into());
    }
    Ok(out)
}

/// keygen, encrypt, ransom note, payment, release by the chosen scheme, and
/// decryption. A refusal falls back to the operator escrow so the corpus is
/// always recovered.
pub fn lifecycle(cfg: &ExperimentConfig, ws: &Workspace, depth: Option<u64>, amount: u64) -> Result<Outcome, CliError> {
    let root = corpus_root(cfg).stage("validate")?;
    if ws.exists("victim.rec") {
        return Err(CliError::Validation("lifecycle needs a fresh work directory".into())).stage("validate");
    }
    let before = digests(&root).stage("validate")?;
    let depth = depth.unwrap_or(cfg.min_confirmations);
    if depth == 0 {
        return Err(CliError::Validation("depth must be at least 1".into())).stage("validate");
    }

    let mut r = RunReport::new("lifecycle");
    r.push("seed", cfg.seed);
    r.push("scheme", cfg.scheme);
    r.push("mode", cfg.mode);
    r.push("depth", depth);
    if !ws.exists("chain.bin") {
        chain_mine(cfg, ws, 2).stage("chain")?;
    }
    r.extend("keygen", &keygen(cfg, ws).stage("keygen")?.report);
    r.extend("encrypt", &encrypt(cfg, ws).stage("encrypt")?.report);
    r.push("ransom_note", "ransom-note.txt");
    r.extend("pay", &pay(cfg, ws, amount).stage("pay")?.report);
    if depth > 1 {
        r.extend("confirm", &chain_mine(cfg, ws, depth - 1).stage("confirm")?.report);
    }
    if cfg.scheme == Scheme::Signed {
        r.extend("sign", &sign(ws).stage("sign")?.report);
        r.extend("publish", &publish(ws).stage("publish")?.report);
    }
    let rel = release(cfg, ws, None).stage("release")?;
    r.extend("release", &rel.report);

    let vk = if rel.refused {
        let rec = recover(cfg, ws, false, false).stage("recover")?;
        r.extend("recover", &rec.report);
        ws.released_key().stage("recover")?
    } else {
        ws.released_key().stage("decrypt")?
    };
    let mut d = RunReport::new("decrypt");
    decrypt_with(&root, &vk, true, &mut d).stage("decrypt")?;
    r.extend("decrypt", &d);

    let after = digests(&root).stage("verify")?;
    let identical = after == before;
    r.push("verify.files", after.len());
    r.push("verify.identical", identical);
    if !identical {
        return Err(CliError::Validation("recovered corpus differs from the original".into())).stage("verify");
    }
    r.push("outcome", if rel.refused { "refused; recovered via operator escrow" } else { "released; recovered" });
    Ok(Outcome { report: r, refused: rel.refused })
}
