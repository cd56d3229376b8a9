//! Persistent state of a simulated deployment inside the work directory.
//!
//! ```text
//! device.secret       simulated hardware secret of the victim machine
//! attacker.der        attacker RSA key (attacker side only)
//! attacker.pub        attacker public key embedded in the enclave build
//! anchors.txt         pinned explorer anchors, one hex key per line
//! explorer.id         explorer endpoint identity
//! build.txt           checkpoint and policy fixed at keygen
//! victim.rec          sealed victim record
//! chain.bin           simulated blockchain
//! ransom-note.txt     payment instructions
//! payment.txid        txid of the victim's payment
//! signatures/         attacker signatures awaiting publication
//! released.vk         victim private key after release or recovery
//! reports/            run reports
//! rng.counter         per-invocation randomness counter
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use escrowsim::chainkit::{read_chain, write_chain, Chain, Checkpoint, Hash256, SimClock};
use escrowsim::enclave::{DeviceSecret, Enclave, EnclaveConfig, ExposureLedger, LaunchToken, VictimRecord};
use escrowsim::keys::{AttackerKeyPair, AttackerPublicKey, VictimSecretKey};
use escrowsim::nodesim::{EndpointIdentity, TrustAnchors};
use escrowsim::release::ReleasePolicy;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Opens (creating if needed) the work directory. It must not sit inside
    /// the corpus, and the escrow path must not either.
    pub fn open(cfg: &ExperimentConfig) -> Result<Workspace, CliError> {
        let root = cfg.work.clone();
        if root.exists() && !root.is_dir() {
            return Err(CliError::Validation(format!("work path {} is not a directory", root.display())));
        }
        if let Some(corpus) = cfg.corpus.as_ref().and_then(|c| c.canonicalize().ok()) {
            if resolve(&root).starts_with(&corpus) {
                return Err(CliError::Validation("work directory must not be inside the corpus".into()));
            }
            if resolve(&cfg.escrow).starts_with(&corpus) {
                return Err(CliError::Validation("escrow path must not be inside the corpus".into()));
            }
        }
        fs::create_dir_all(root.join("reports")).map_err(|e| CliError::io(&root, e))?;
        let root = root.canonicalize().map_err(|e| CliError::io(&cfg.work, e))?;
        Ok(Workspace { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn read(&self, name: &str) -> Result<Vec<u8>, CliError> {
        let p = self.path(name);
        fs::read(&p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                CliError::Validation(format!("{} is missing; run the step that creates it first", p.display()))
            }
            _ => CliError::io(&p, e),
        })
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    /// Fresh deterministic stream: seed, label and a counter persisted in
    /// the work directory, so repeated commands never reuse randomness.
    pub fn rng(&self, seed: u64, label: &str) -> Result<ChaCha20Rng, CliError> {
        let counter: u64 = match fs::read_to_string(self.path("rng.counter")) {
            Ok(s) => s.trim().parse().unwrap_or(0),
            Err(_) => 0,
        };
        self.write("rng.counter", format!("{}\n", counter + 1).as_bytes())?;
        let digest = Sha256::new()
            .chain_update(seed.to_le_bytes())
            .chain_update(counter.to_le_bytes())
            .chain_update(label.as_bytes())
            .finalize();
        Ok(ChaCha20Rng::from_seed(digest.into()))
    }

    pub fn load_chain(&self) -> Result<Chain, CliError> {
        Ok(read_chain(self.read("chain.bin")?.as_slice())?)
    }

    pub fn save_chain(&self, chain: &Chain) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write_chain(chain, &mut buf).map_err(|e| CliError::io(&self.path("chain.bin"), e))?;
        self.write("chain.bin", &buf)
    }

    /// Clock continuing from the chain tip.
    pub fn clock_for(chain: &Chain) -> SimClock {
        SimClock::new(chain.tip().timestamp, 600)
    }

    pub fn save_build(&self, policy: &ReleasePolicy) -> Result<(), CliError> {
        let cp = &policy.checkpoint;
        let text = format!(
            "checkpoint_hash = {}\ncheckpoint_height = {}\nbits = {:#010x}\nmin_confirmations = {}\nn_extra_blocks = {}\n",
            cp.hash, cp.height, cp.bits, policy.min_confirmations, policy.n_extra_blocks
        );
        self.write("build.txt", text.as_bytes())
    }

    pub fn load_build(&self) -> Result<ReleasePolicy, CliError> {
        let text = String::from_utf8(self.read("build.txt")?).map_err(|_| bad_build())?;
        let get = |key: &str| {
            text.lines()
                .filter_map(|l| l.split_once(" = "))
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v.trim().to_string())
                .ok_or_else(bad_build)
        };
        let hash = Hash256::from_hex(&get("checkpoint_hash")?).ok_or_else(bad_build)?;
        let height = get("checkpoint_height")?.parse().map_err(|_| bad_build())?;
        let bits = crate::config::parse_bits(&get("bits")?)?;
        let m = get("min_confirmations")?.parse().map_err(|_| bad_build())?;
        let n = get("n_extra_blocks")?.parse().map_err(|_| bad_build())?;
        let policy = ReleasePolicy::with(Checkpoint { hash, height, bits }, m, n);
        policy.validate()?;
        Ok(policy)
    }

    pub fn device(&self) -> Result<DeviceSecret, CliError> {
        let b = self.read("device.secret")?;
        let arr: [u8; 32] = b.as_slice().try_into().map_err(|_| CliError::Validation("device.secret must be 32 bytes".into()))?;
        Ok(DeviceSecret::from_bytes(arr))
    }

    pub fn attacker_pub(&self) -> Result<AttackerPublicKey, CliError> {
        Ok(AttackerPublicKey::from_der(&self.read("attacker.pub")?)?)
    }

    pub fn attacker_key(&self) -> Result<AttackerKeyPair, CliError> {
        Ok(AttackerKeyPair::from_der(&self.read("attacker.der")?)?)
    }

    pub fn anchors(&self) -> Result<TrustAnchors, CliError> {
        let text = String::from_utf8(self.read("anchors.txt")?)
            .map_err(|_| CliError::Validation("anchors.txt is not text".into()))?;
        Ok(TrustAnchors::parse(&text)?)
    }

    pub fn identity(&self) -> Result<EndpointIdentity, CliError> {
        Ok(EndpointIdentity::from_bytes(&self.read("explorer.id")?)?)
    }

    pub fn record(&self) -> Result<VictimRecord, CliError> {
        Ok(VictimRecord::deserialize(&self.read("victim.rec")?)?)
    }

    pub fn released_key(&self) -> Result<VictimSecretKey, CliError> {
        Ok(VictimSecretKey::from_bytes(&self.read("released.vk")?)?)
    }

    /// Launches the victim enclave with its sealed record loaded.
    pub fn launch(&self, cfg: &ExperimentConfig, ledger: Arc<ExposureLedger>) -> Result<Enclave, CliError> {
        let config = EnclaveConfig {
            attacker_key: self.attacker_pub()?,
            anchors: self.anchors()?,
            transition_cost: cfg.transition_cost,
        };
        let seed = rand::Rng::gen(&mut self.rng(cfg.seed, "enclave")?);
        let mut enclave = Enclave::create(&LaunchToken("escrowsim-cli".into()), self.device()?, config, ledger, seed)?;
        enclave.load(&self.record()?)?;
        Ok(enclave)
    }
}

/// Canonical form of a path that may not exist yet: the deepest existing
/// ancestor is canonicalized and the rest appended.
fn resolve(path: &Path) -> PathBuf {
    let abs = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let mut tail = Vec::new();
    let mut cur = abs.as_path();
    loop {
        if let Ok(c) = cur.canonicalize() {
            return tail.iter().rev().fold(c, |acc: PathBuf, part| acc.join(part));
        }
        match (cur.parent(), cur.file_name()) {
            (Some(parent), Some(name)) => {
                tail.push(name.to_os_string());
                cur = parent;
            }
            _ => return abs,
        }
    }
}

fn bad_build() -> CliError {
    CliError::Validation("build.txt is malformed".into())
}
