use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::corpus::{CorpusError, SENTINEL};

/// Canned corpus shapes standing in for differently provisioned machines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CorpusProfile {
    DocumentHeavy,
    MediaHeavy,
    Mixed,
    ManySmall,
}

impl CorpusProfile {
    pub const ALL: [CorpusProfile; 4] =
        [CorpusProfile::DocumentHeavy, CorpusProfile::MediaHeavy, CorpusProfile::Mixed, CorpusProfile::ManySmall];

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusProfile::DocumentHeavy => "document-heavy",
            CorpusProfile::MediaHeavy => "media-heavy",
            CorpusProfile::Mixed => "mixed",
            CorpusProfile::ManySmall => "many-small",
        }
    }

    /// File count and inclusive size range in bytes, before scaling.
    fn shape(self) -> (usize, u64, u64) {
        const MB: u64 = 1_000_000;
        match self {
            CorpusProfile::DocumentHeavy => (200, 15 * MB, 40 * MB),
            CorpusProfile::MediaHeavy => (200, 120 * MB, 250 * MB),
            CorpusProfile::Mixed => (200, 15 * MB, 250 * MB),
            CorpusProfile::ManySmall => (2000, 1_000, 200_000),
        }
    }

    /// File sizes for this profile, each divided by `scale`.
    pub fn sizes(self, scale: u64, seed: u64) -> Vec<u64> {
        let (count, lo, hi) = self.shape();
        let scale = scale.max(1);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..count).map(|_| rng.gen_range(lo..=hi) / scale).collect()
    }
}

impl fmt::Display for CorpusProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CorpusProfile::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown corpus profile {s:?}"))
    }
}

/// `count` sizes drawn uniformly from `lo..=hi`.
pub fn uniform_sizes(count: usize, lo: u64, hi: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// Deterministic pseudo-random contents.
pub fn file_contents(len: u64, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; len as usize];
    ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

/// Creates a marked corpus at `root` with one file per entry of `sizes`.
/// `root` must be absent, empty, or already marked.
pub fn write_corpus(root: &Path, sizes: &[u64], seed: u64) -> Result<Vec<PathBuf>, CorpusError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CorpusError::Io { path: p, source }
    };
    if root.exists() {
        let marked = root.join(SENTINEL).is_file();
        let empty = fs::read_dir(root).map_err(io(root))?.next().is_none();
        if !marked && !empty {
            return Err(CorpusError::MissingSentinel(root.to_path_buf()));
        }
    }
    fs::create_dir_all(root).map_err(io(root))?;
    fs::write(root.join(SENTINEL), b"escrowsim synthetic corpus\n").map_err(io(root))?;
    let mut out = Vec::with_capacity(sizes.len());
    for (i, &len) in sizes.iter().enumerate() {
        let rel = PathBuf::from(format!("d{:02}/file-{i:04}.bin", i % 8));
        let path = root.join(&rel);
        fs::create_dir_all(path.parent().unwrap()).map_err(io(&path))?;
        fs::write(&path, file_contents(len, seed.wrapping_add(i as u64))).map_err(io(&path))?;
        out.push(rel);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_deterministic_and_scaled() {
        for p in CorpusProfile::ALL {
            assert_eq!(p.sizes(10, 1), p.sizes(10, 1));
            assert_eq!(p.as_str().parse::<CorpusProfile>().unwrap(), p);
        }
        let mixed = CorpusProfile::Mixed.sizes(1, 3);
        assert_eq!(mixed.len(), 200);
        assert!(mixed.iter().all(|&s| (15_000_000..=250_000_000).contains(&s)));
    }

    #[test]
    fn refuses_unmarked_nonempty_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("precious.txt"), b"x").unwrap();
        assert!(matches!(write_corpus(dir.path(), &[1], 0), Err(CorpusError::MissingSentinel(_))));
    }
}
