use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use zeroize::Zeroizing;

use super::{seal, unseal, DeviceSecret, EnclaveError, ExposureLedger, SealedBlob};
use super::EscrowFile;
use crate::chainkit::Address;
use crate::cryptofile::cipher::ChunkCipher;
use crate::keys::{unwrap_key, wrap_key, AttackerPublicKey, VictimPublicKey, VictimSecretKey};
use crate::nodesim::identity::TrustAnchors;

pub const NONCE_LEN: usize = 32;
pub const LABEL_VK_PRV: &[u8] = b"escrowsim/vk-prv/v1";
pub const LABEL_WALLET: &[u8] = b"escrowsim/wallet/v1";
pub const LABEL_NONCE: &[u8] = b"escrowsim/nonce/v1";

/// Opaque capability presented at launch. Only emptiness is checked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaunchToken(pub String);

/// Values compiled into the enclave image by its author.
#[derive(Clone, Debug)]
pub struct EnclaveConfig {
    pub attacker_key: AttackerPublicKey,
    pub anchors: TrustAnchors,
    pub transition_cost: Duration,
}

impl EnclaveConfig {
    pub fn wallet(&self) -> Address {
        self.attacker_key.wallet_address()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoundaryStats {
    pub enter_count: u64,
    pub exit_count: u64,
    pub transition_cost: Duration,
}

/// Registered in-boundary operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EcallOp {
    Noop,
    GenVictimKeypair,
    GenNonce,
    LoadState,
    FileBegin,
    FileChunk,
    FileEnd,
    FileOpen,
    FileDecryptChunk,
    ReleaseSigned,
    ReleaseSpv,
    ReleaseExplorer,
}

impl EcallOp {
    pub const ALL: [EcallOp; 12] = [
        EcallOp::Noop,
        EcallOp::GenVictimKeypair,
        EcallOp::GenNonce,
        EcallOp::LoadState,
        EcallOp::FileBegin,
        EcallOp::FileChunk,
        EcallOp::FileEnd,
        EcallOp::FileOpen,
        EcallOp::FileDecryptChunk,
        EcallOp::ReleaseSigned,
        EcallOp::ReleaseSpv,
        EcallOp::ReleaseExplorer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EcallOp::Noop => "noop",
            EcallOp::GenVictimKeypair => "gen_victim_keypair",
            EcallOp::GenNonce => "gen_nonce",
            EcallOp::LoadState => "load_state",
            EcallOp::FileBegin => "file_begin",
            EcallOp::FileChunk => "file_chunk",
            EcallOp::FileEnd => "file_end",
            EcallOp::FileOpen => "file_open",
            EcallOp::FileDecryptChunk => "file_decrypt_chunk",
            EcallOp::ReleaseSigned => "release_signed",
            EcallOp::ReleaseSpv => "release_spv",
            EcallOp::ReleaseExplorer => "release_explorer",
        }
    }
}

impl FromStr for EcallOp {
    type Err = EnclaveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EcallOp::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| EnclaveError::UnknownOp(s.to_string()))
    }
}

impl fmt::Display for EcallOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FileHandle(pub u32);

/// What the untrusted side stores after key generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VictimRecord {
    pub vk_pub: VictimPublicKey,
    pub sealed_vk: SealedBlob,
    pub sealed_wallet: SealedBlob,
    pub sealed_nonce: SealedBlob,
    /// Public copy for the payment note; the enclave trusts only the sealed one.
    pub nonce: [u8; NONCE_LEN],
}

const RECORD_MAGIC: &[u8; 14] = b"ESCROWSIM-VIC\0";
const RECORD_VERSION: u8 = 1;

impl VictimRecord {
    /// `magic | version | vk_pub:33 | nonce:32 | 3 x SealedBlob`
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = RECORD_MAGIC.to_vec();
        out.push(RECORD_VERSION);
        out.extend_from_slice(&self.vk_pub.to_bytes());
        out.extend_from_slice(&self.nonce);
        for b in [&self.sealed_vk, &self.sealed_wallet, &self.sealed_nonce] {
            out.extend_from_slice(&b.serialize());
        }
        out
    }

    pub fn deserialize(buf: &[u8]) -> Result<Self, EnclaveError> {
        let head = RECORD_MAGIC.len();
        if buf.len() < head + 1 + 33 + NONCE_LEN || &buf[..head] != RECORD_MAGIC {
            return Err(EnclaveError::MalformedRecord("bad magic"));
        }
        if buf[head] != RECORD_VERSION {
            return Err(EnclaveError::MalformedRecord("unsupported version"));
        }
        let mut pos = head + 1;
        let vk_pub = VictimPublicKey::from_bytes(&buf[pos..pos + 33])?;
        pos += 33;
        let nonce = buf[pos..pos + NONCE_LEN].try_into().unwrap();
        pos += NONCE_LEN;
        let mut blobs = Vec::with_capacity(3);
        for _ in 0..3 {
            let (b, used) = SealedBlob::deserialize_prefix(&buf[pos..])?;
            pos += used;
            blobs.push(b);
        }
        if pos != buf.len() {
            return Err(EnclaveError::MalformedRecord("trailing bytes"));
        }
        let sealed_nonce = blobs.pop().unwrap();
        let sealed_wallet = blobs.pop().unwrap();
        let sealed_vk = blobs.pop().unwrap();
        Ok(VictimRecord { vk_pub, sealed_vk, sealed_wallet, sealed_nonce, nonce })
    }
}

struct FileCtx {
    cipher: ChunkCipher,
}

/// State that only in-boundary code can touch.
pub struct InBoundary {
    device: DeviceSecret,
    config: EnclaveConfig,
    rng: ChaCha20Rng,
    vk_pub: Option<VictimPublicKey>,
    sealed_vk: Option<SealedBlob>,
    wallet: Option<Address>,
    nonce: Option<[u8; NONCE_LEN]>,
    released: Option<VictimSecretKey>,
    files: HashMap<u32, FileCtx>,
    next_handle: u32,
}

impl InBoundary {
    pub fn config(&self) -> &EnclaveConfig {
        &self.config
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn nonce(&self) -> Result<[u8; NONCE_LEN], EnclaveError> {
        self.nonce.ok_or(EnclaveError::NotProvisioned)
    }

    pub fn wallet(&self) -> Result<Address, EnclaveError> {
        self.wallet.ok_or(EnclaveError::NotProvisioned)
    }

    pub fn vk_pub(&self) -> Result<&VictimPublicKey, EnclaveError> {
        self.vk_pub.as_ref().ok_or(EnclaveError::NotProvisioned)
    }

    /// Unseals the victim private key. Only release paths call this, after a
    /// positive decision.
    pub(crate) fn unseal_for_release(&mut self) -> Result<VictimSecretKey, EnclaveError> {
        let blob = self.sealed_vk.as_ref().ok_or(EnclaveError::NotProvisioned)?;
        let bytes = unseal(&self.device, blob)?;
        let key = VictimSecretKey::from_bytes(&bytes)?;
        self.released = Some(key.clone());
        Ok(key)
    }

    fn gen_victim_keypair(&mut self) -> (SealedBlob, VictimPublicKey, SealedBlob) {
        let vk = VictimSecretKey::generate(&mut self.rng);
        let vk_pub = vk.public_key();
        let sealed_vk = seal(&self.device, LABEL_VK_PRV, &vk.to_bytes(), &mut self.rng);
        let wallet = self.config.wallet();
        let sealed_wallet = seal(&self.device, LABEL_WALLET, &wallet.0, &mut self.rng);
        self.vk_pub = Some(vk_pub.clone());
        self.sealed_vk = Some(sealed_vk.clone());
        self.wallet = Some(wallet);
        (sealed_vk, vk_pub, sealed_wallet)
    }

    fn gen_nonce(&mut self) -> ([u8; NONCE_LEN], SealedBlob) {
        let mut n = [0u8; NONCE_LEN];
        self.rng.fill_bytes(&mut n);
        self.nonce = Some(n);
        let sealed = seal(&self.device, LABEL_NONCE, &n, &mut self.rng);
        (n, sealed)
    }

    fn load(&mut self, record: &VictimRecord) -> Result<(), EnclaveError> {
        let wallet = unseal(&self.device, &record.sealed_wallet)?;
        let nonce = unseal(&self.device, &record.sealed_nonce)?;
        if record.sealed_vk.label != LABEL_VK_PRV
            || record.sealed_wallet.label != LABEL_WALLET
            || record.sealed_nonce.label != LABEL_NONCE
        {
            return Err(EnclaveError::MalformedRecord("unexpected seal labels"));
        }
        self.wallet = Some(Address(
            wallet.as_slice().try_into().map_err(|_| EnclaveError::MalformedRecord("wallet"))?,
        ));
        self.nonce = Some(nonce.as_slice().try_into().map_err(|_| EnclaveError::MalformedRecord("nonce"))?);
        self.vk_pub = Some(record.vk_pub.clone());
        self.sealed_vk = Some(record.sealed_vk.clone());
        Ok(())
    }

    fn file_begin(&mut self) -> Result<(FileHandle, Vec<u8>, [u8; 12]), EnclaveError> {
        let vk_pub = self.vk_pub.clone().ok_or(EnclaveError::NotProvisioned)?;
        let mut ek = Zeroizing::new([0u8; 32]);
        self.rng.fill_bytes(ek.as_mut());
        let mut base_nonce = [0u8; 12];
        self.rng.fill_bytes(&mut base_nonce);
        let wrapped = wrap_key(&ek, &vk_pub, &mut self.rng);
        let handle = self.insert_file(FileCtx { cipher: ChunkCipher::new(&ek, base_nonce) });
        Ok((handle, wrapped, base_nonce))
    }

    fn file_open(&mut self, wrapped: &[u8], base_nonce: [u8; 12]) -> Result<FileHandle, EnclaveError> {
        let vk = self.released.as_ref().ok_or(EnclaveError::NotReleased)?;
        let ek = unwrap_key(wrapped, vk)?;
        Ok(self.insert_file(FileCtx { cipher: ChunkCipher::new(&ek, base_nonce) }))
    }

    fn insert_file(&mut self, ctx: FileCtx) -> FileHandle {
        let h = self.next_handle;
        self.next_handle = self.next_handle.wrapping_add(1);
        self.files.insert(h, ctx);
        FileHandle(h)
    }

    fn file(&self, h: FileHandle) -> Result<&FileCtx, EnclaveError> {
        self.files.get(&h.0).ok_or(EnclaveError::UnknownHandle(h.0))
    }
}

/// Simulated enclave instance. Single-threaded: callers serialize access.
pub struct Enclave {
    inner: InBoundary,
    stats: BoundaryStats,
    ledger: Arc<ExposureLedger>,
}

impl fmt::Debug for Enclave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Enclave").field("stats", &self.stats).finish_non_exhaustive()
    }
}

fn spin_for(cost: Duration) {
    if cost.is_zero() {
        return;
    }
    let start = Instant::now();
    while start.elapsed() < cost {
        std::hint::spin_loop();
    }
}

impl Enclave {
    pub fn create(
        token: &LaunchToken,
        device: DeviceSecret,
        config: EnclaveConfig,
        ledger: Arc<ExposureLedger>,
        seed: u64,
    ) -> Result<Enclave, EnclaveError> {
        if token.0.is_empty() {
            return Err(EnclaveError::LaunchRefused("empty launch token"));
        }
        let stats = BoundaryStats { transition_cost: config.transition_cost, ..Default::default() };
        Ok(Enclave {
            inner: InBoundary {
                device,
                config,
                rng: ChaCha20Rng::seed_from_u64(seed),
                vk_pub: None,
                sealed_vk: None,
                wallet: None,
                nonce: None,
                released: None,
                files: HashMap::new(),
                next_handle: 0,
            },
            stats,
            ledger,
        })
    }

    /// Self-contained, provisioned enclave for experiments: device secret and
    /// attacker key are derived from `seed`. Returns the matching escrow.
    pub fn for_experiment(
        seed: u64,
        transition_cost: Duration,
        ledger: Arc<ExposureLedger>,
    ) -> Result<(Enclave, EscrowFile), EnclaveError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6465_7669_6365);
        let device = DeviceSecret::generate(&mut rng);
        let config = EnclaveConfig {
            attacker_key: crate::keys::AttackerKeyPair::from_seed(seed).public_key(),
            anchors: TrustAnchors::default(),
            transition_cost,
        };
        let mut enclave = Enclave::create(&LaunchToken("experiment".into()), device.clone(), config, ledger, seed)?;
        let record = enclave.provision()?;
        let escrow = EscrowFile { device, blobs: vec![record.sealed_vk, record.sealed_wallet, record.sealed_nonce] };
        Ok((enclave, escrow))
    }

    pub fn stats(&self) -> BoundaryStats {
        self.stats
    }

    pub fn ledger(&self) -> &Arc<ExposureLedger> {
        &self.ledger
    }

    pub fn config(&self) -> &EnclaveConfig {
        &self.inner.config
    }

    pub fn set_transition_cost(&mut self, cost: Duration) {
        self.stats.transition_cost = cost;
    }

    /// Runs `f` inside the boundary, accounting one enter/exit pair.
    pub fn ecall<T>(
        &mut self,
        op: EcallOp,
        f: impl FnOnce(&mut InBoundary) -> Result<T, EnclaveError>,
    ) -> Result<T, EnclaveError> {
        let _ = op;
        self.stats.enter_count += 1;
        spin_for(self.stats.transition_cost);
        let out = f(&mut self.inner);
        self.stats.exit_count += 1;
        out
    }

    /// Byte-level entry point for the registered data operations.
    ///
    /// Payload layouts (integers little-endian):
    /// - `noop`: anything, echoed back
    /// - `gen_victim_keypair`: empty -> serialized [`VictimRecord`] (also generates the nonce)
    /// - `gen_nonce`: empty -> nonce:32
    /// - `load_state`: serialized [`VictimRecord`] -> empty
    /// - `file_begin`: empty -> handle:u32 | base_nonce:12 | wrapped_key
    /// - `file_chunk` / `file_decrypt_chunk`: handle:u32 | index:u64 | last:u8 | data -> data
    /// - `file_end`: handle:u32 -> empty
    /// - `file_open`: base_nonce:12 | wrapped_key -> handle:u32
    ///
    /// Release operations need live transports and are reachable only through
    /// the typed verifiers in `release`.
    pub fn boundary_call(&mut self, tag: &str, payload: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        let op: EcallOp = tag.parse()?;
        match op {
            EcallOp::Noop => self.ecall(op, |_| Ok(payload.to_vec())),
            EcallOp::GenVictimKeypair => Ok(self.provision()?.serialize()),
            EcallOp::GenNonce => Ok(self.gen_nonce()?.to_vec()),
            EcallOp::LoadState => {
                self.load(&VictimRecord::deserialize(payload)?)?;
                Ok(Vec::new())
            }
            EcallOp::FileBegin => {
                let (h, wrapped, base) = self.file_begin()?;
                let mut out = h.0.to_le_bytes().to_vec();
                out.extend_from_slice(&base);
                out.extend_from_slice(&wrapped);
                Ok(out)
            }
            EcallOp::FileChunk | EcallOp::FileDecryptChunk => {
                if payload.len() < 13 {
                    return Err(EnclaveError::BadPayload(op.as_str()));
                }
                let h = FileHandle(u32::from_le_bytes(payload[0..4].try_into().unwrap()));
                let index = u64::from_le_bytes(payload[4..12].try_into().unwrap());
                let last = payload[12] != 0;
                if op == EcallOp::FileChunk {
                    self.file_chunk(h, index, last, &payload[13..])
                } else {
                    self.file_decrypt_chunk(h, index, last, &payload[13..])
                }
            }
            EcallOp::FileEnd => {
                let h: [u8; 4] = payload.try_into().map_err(|_| EnclaveError::BadPayload("file_end"))?;
                self.file_end(FileHandle(u32::from_le_bytes(h)))?;
                Ok(Vec::new())
            }
            EcallOp::FileOpen => {
                if payload.len() < 12 {
                    return Err(EnclaveError::BadPayload("file_open"));
                }
                let base: [u8; 12] = payload[..12].try_into().unwrap();
                Ok(self.file_open(&payload[12..], base)?.0.to_le_bytes().to_vec())
            }
            EcallOp::ReleaseSigned | EcallOp::ReleaseSpv | EcallOp::ReleaseExplorer => {
                Err(EnclaveError::BadPayload("release operations are typed-only"))
            }
        }
    }

    /// Generates the victim keypair inside the boundary and seals the private
    /// half together with the embedded wallet address.
    pub fn gen_victim_keypair(&mut self) -> Result<(SealedBlob, VictimPublicKey), EnclaveError> {
        self.ecall(EcallOp::GenVictimKeypair, |b| {
            let (sealed, vk_pub, _) = b.gen_victim_keypair();
            Ok((sealed, vk_pub))
        })
    }

    pub fn gen_nonce(&mut self) -> Result<[u8; NONCE_LEN], EnclaveError> {
        self.ecall(EcallOp::GenNonce, |b| Ok(b.gen_nonce().0))
    }

    /// Keypair, sealed wallet and nonce in one transition.
    pub fn provision(&mut self) -> Result<VictimRecord, EnclaveError> {
        self.ecall(EcallOp::GenVictimKeypair, |b| {
            let (sealed_vk, vk_pub, sealed_wallet) = b.gen_victim_keypair();
            let (nonce, sealed_nonce) = b.gen_nonce();
            Ok(VictimRecord { vk_pub, sealed_vk, sealed_wallet, sealed_nonce, nonce })
        })
    }

    /// Restores state from a record produced by an earlier launch on the same
    /// device.
    pub fn load(&mut self, record: &VictimRecord) -> Result<(), EnclaveError> {
        self.ecall(EcallOp::LoadState, |b| b.load(record))
    }

    pub fn vk_pub(&self) -> Option<&VictimPublicKey> {
        self.inner.vk_pub.as_ref()
    }

    pub fn file_begin(&mut self) -> Result<(FileHandle, Vec<u8>, [u8; 12]), EnclaveError> {
        self.ecall(EcallOp::FileBegin, |b| b.file_begin())
    }

    pub fn file_chunk(
        &mut self,
        h: FileHandle,
        index: u64,
        last: bool,
        plaintext: &[u8],
    ) -> Result<Vec<u8>, EnclaveError> {
        self.ecall(EcallOp::FileChunk, |b| Ok(b.file(h)?.cipher.seal_chunk(index, last, plaintext)))
    }

    /// Drops the per-file key.
    pub fn file_end(&mut self, h: FileHandle) -> Result<(), EnclaveError> {
        self.ecall(EcallOp::FileEnd, |b| {
            b.files.remove(&h.0).map(|_| ()).ok_or(EnclaveError::UnknownHandle(h.0))
        })
    }

    /// Opens an envelope key inside the boundary; requires a prior release.
    pub fn file_open(&mut self, wrapped: &[u8], base_nonce: [u8; 12]) -> Result<FileHandle, EnclaveError> {
        self.ecall(EcallOp::FileOpen, |b| b.file_open(wrapped, base_nonce))
    }

    pub fn file_decrypt_chunk(
        &mut self,
        h: FileHandle,
        index: u64,
        last: bool,
        ciphertext: &[u8],
    ) -> Result<Vec<u8>, EnclaveError> {
        self.ecall(EcallOp::FileDecryptChunk, |b| {
            b.file(h)?.cipher.open_chunk(index, last, ciphertext).ok_or(EnclaveError::Authentication)
        })
    }

    /// Runs a release check inside the boundary. The victim key is unsealed
    /// only when `check` succeeds; the released key is then host-visible and
    /// recorded in the ledger.
    pub(crate) fn gated_release<R>(
        &mut self,
        op: EcallOp,
        check: impl FnOnce(&mut InBoundary) -> Result<(), R>,
    ) -> Result<Result<VictimSecretKey, R>, EnclaveError> {
        let out = self.ecall(op, |b| match check(b) {
            Ok(()) => b.unseal_for_release().map(Ok),
            Err(r) => Ok(Err(r)),
        })?;
        if let Ok(vk) = &out {
            self.ledger.record("released-vk", &vk.to_bytes());
        }
        Ok(out)
    }

    /// Operator override: proves possession of this device's secret through
    /// the escrow file and releases the victim key without any payment check.
    pub fn operator_release(&mut self, escrow: &EscrowFile) -> Result<VictimSecretKey, EnclaveError> {
        if escrow.device.expose() != self.inner.device.expose() {
            return Err(EnclaveError::Authentication);
        }
        self.gated_release(EcallOp::LoadState, |_| Ok::<(), EnclaveError>(()))?
    }

    /// Number of per-file keys currently live inside the boundary.
    pub fn open_files(&self) -> usize {
        self.inner.files.len()
    }

    /// The victim key, once a release decision has handed it to the host.
    pub fn released_key(&self) -> Option<VictimSecretKey> {
        self.inner.released.clone()
    }

    pub fn is_released(&self) -> bool {
        self.inner.released.is_some()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::keys::AttackerKeyPair;

    pub(crate) fn test_attacker() -> AttackerKeyPair {
        AttackerKeyPair::from_seed(99)
    }

    pub(crate) fn test_enclave(device: u8, seed: u64) -> Enclave {
        let config = EnclaveConfig {
            attacker_key: test_attacker().public_key(),
            anchors: TrustAnchors::default(),
            transition_cost: Duration::ZERO,
        };
        Enclave::create(
            &LaunchToken("token".into()),
            DeviceSecret::from_bytes([device; 32]),
            config,
            Arc::new(ExposureLedger::new()),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn empty_launch_token_is_refused() {
        let e = test_enclave(1, 1);
        let r = Enclave::create(
            &LaunchToken(String::new()),
            DeviceSecret::from_bytes([1; 32]),
            e.config().clone(),
            Arc::new(ExposureLedger::new()),
            1,
        );
        assert!(matches!(r, Err(EnclaveError::LaunchRefused(_))));
    }

    #[test]
    fn keypairs_are_distinct_and_vk_not_in_ledger() {
        let mut e = test_enclave(1, 1);
        let (s1, p1) = e.gen_victim_keypair().unwrap();
        let (_, p2) = e.gen_victim_keypair().unwrap();
        assert_ne!(p1, p2);
        assert_eq!(p1.to_bytes().len(), 33);
        assert!(e.ledger().is_empty());
        let vk = VictimSecretKey::from_bytes(&unseal(&DeviceSecret::from_bytes([1; 32]), &s1).unwrap()).unwrap();
        assert_eq!(vk.public_key(), p1);
        assert_eq!(vk.to_bytes().len(), 32);
        let mut ek = [0u8; 32];
        ChaCha20Rng::seed_from_u64(5).fill_bytes(&mut ek);
        let w = wrap_key(&ek, &p1, &mut ChaCha20Rng::seed_from_u64(6));
        assert_eq!(*unwrap_key(&w, &vk).unwrap(), ek);
    }

    #[test]
    fn nonces_differ_across_boundaries() {
        let mut a = test_enclave(1, 1);
        let mut b = test_enclave(2, 2);
        let na = a.gen_nonce().unwrap();
        assert_eq!(na.len(), 32);
        assert_ne!(na, b.gen_nonce().unwrap());
    }

    #[test]
    fn counters_track_calls() {
        let mut e = test_enclave(1, 1);
        for _ in 0..100 {
            assert_eq!(e.boundary_call("noop", b"x").unwrap(), b"x");
        }
        assert_eq!(e.stats().enter_count, 100);
        assert_eq!(e.stats().exit_count, 100);
        assert!(matches!(e.boundary_call("format_disk", &[]), Err(EnclaveError::UnknownOp(_))));
        assert_eq!(e.stats().enter_count, 100);
    }

    #[test]
    fn transition_cost_is_injected() {
        let mut e = test_enclave(1, 1);
        e.set_transition_cost(Duration::from_millis(2));
        let t = Instant::now();
        for _ in 0..5 {
            e.boundary_call("noop", &[]).unwrap();
        }
        assert!(t.elapsed() >= Duration::from_millis(10));
    }

    #[test]
    fn record_survives_relaunch() {
        let mut e = test_enclave(4, 1);
        let rec = e.provision().unwrap();
        let bytes = rec.serialize();
        let back = VictimRecord::deserialize(&bytes).unwrap();
        assert_eq!(back, rec);
        let mut again = test_enclave(4, 2);
        again.boundary_call("load_state", &bytes).unwrap();
        assert_eq!(again.inner.nonce().unwrap(), rec.nonce);
        assert_eq!(again.inner.wallet().unwrap(), test_attacker().public_key().wallet_address());
        let mut foreign = test_enclave(5, 2);
        assert!(matches!(foreign.load(&rec), Err(EnclaveError::Authentication)));
    }

    #[test]
    fn byte_level_file_ops() {
        let mut e = test_enclave(1, 1);
        e.boundary_call("gen_victim_keypair", &[]).unwrap();
        let out = e.boundary_call("file_begin", &[]).unwrap();
        let handle = &out[..4];
        let mut payload = handle.to_vec();
        payload.extend_from_slice(&0u64.to_le_bytes());
        payload.push(1);
        payload.extend_from_slice(b"chunk");
        let ct = e.boundary_call("file_chunk", &payload).unwrap();
        assert_eq!(ct.len(), 5 + 16);
        e.boundary_call("file_end", handle).unwrap();
        assert_eq!(e.open_files(), 0);
        assert!(matches!(e.boundary_call("file_end", handle), Err(EnclaveError::UnknownHandle(0))));
        // decrypting inside requires a release first
        let mut open = out[4..16].to_vec();
        open.extend_from_slice(&out[16..]);
        assert!(matches!(e.boundary_call("file_open", &open), Err(EnclaveError::NotReleased)));
    }
}
