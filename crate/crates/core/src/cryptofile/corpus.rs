use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Component, Path, PathBuf};
use std::time::Instant;

use walkdir::WalkDir;

use super::engine::{Decryptor, EngineError, EngineMode, Encryptor};
use super::envelope::EnvelopeHeader;
use crate::enclave::BoundaryStats;

/// Marker that must exist at the root of any directory the engine touches.
pub const SENTINEL: &str = ".escrowsim-corpus";
/// Suffix appended to a file's name to form its envelope's name.
pub const ENVELOPE_SUFFIX: &str = ".escrowsim";
const TEMP_SUFFIX: &str = ".escrowsim-tmp";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{0} is not a marked corpus (missing {SENTINEL}); refusing to touch it")]
    MissingSentinel(PathBuf),
    #[error("path {0} escapes the corpus root")]
    OutsideRoot(PathBuf),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: EngineError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

/// Checks the interlock and returns the canonical root.
pub fn check_corpus_root(root: &Path) -> Result<PathBuf, CorpusError> {
    let canon = root.canonicalize().map_err(io_err(root))?;
    if !canon.join(SENTINEL).is_file() {
        return Err(CorpusError::MissingSentinel(root.to_path_buf()));
    }
    Ok(canon)
}

/// Joins a relative path under `root`, rejecting absolute paths and `..`.
pub fn confined_join(root: &Path, rel: &Path) -> Result<PathBuf, CorpusError> {
    if rel.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(CorpusError::OutsideRoot(rel.to_path_buf()));
    }
    Ok(root.join(rel))
}

fn is_engine_artifact(name: &str) -> bool {
    name == SENTINEL || name.ends_with(ENVELOPE_SUFFIX) || name.ends_with(TEMP_SUFFIX)
}

fn walk(root: &Path) -> impl Iterator<Item = Result<walkdir::DirEntry, CorpusError>> + '_ {
    WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .map(move |e| {
            e.map_err(|e| CorpusError::Io {
                path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf()),
                source: e.into(),
            })
        })
}

/// Regular files under a marked root, relative to it, in a stable order.
/// Symlinks are never followed; the sentinel and engine artifacts are skipped.
pub fn scan_corpus(root: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let canon = check_corpus_root(root)?;
    let mut out = Vec::new();
    for entry in walk(&canon) {
        let entry = entry?;
        if !entry.file_type().is_file() || is_engine_artifact(&entry.file_name().to_string_lossy()) {
            continue;
        }
        out.push(entry.path().strip_prefix(&canon).expect("walk stays under root").to_path_buf());
    }
    Ok(out)
}

/// Envelopes under a marked root, relative to it.
pub fn scan_envelopes(root: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let canon = check_corpus_root(root)?;
    let mut out = Vec::new();
    for entry in walk(&canon) {
        let entry = entry?;
        if entry.file_type().is_file() && entry.file_name().to_string_lossy().ends_with(ENVELOPE_SUFFIX) {
            out.push(entry.path().strip_prefix(&canon).unwrap().to_path_buf());
        }
    }
    Ok(out)
}

pub fn envelope_path(original: &Path) -> PathBuf {
    let mut s = original.as_os_str().to_owned();
    s.push(ENVELOPE_SUFFIX);
    PathBuf::from(s)
}

fn temp_path(target: &Path) -> PathBuf {
    let mut s = target.as_os_str().to_owned();
    s.push(TEMP_SUFFIX);
    PathBuf::from(s)
}

/// Writes through a temp file in the target's directory and renames into
/// place only on success.
fn write_atomically<F>(target: &Path, f: F) -> Result<(), CorpusError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CorpusError>,
{
    let tmp = temp_path(target);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        f(&mut w)?;
        w.flush().map_err(io_err(&tmp))?;
        w.get_ref().sync_all().map_err(io_err(&tmp))?;
        Ok(())
    })();
    match result {
        Ok(()) => fs::rename(&tmp, target).map_err(io_err(target)),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileRecord {
    pub path: PathBuf,
    pub bytes: u64,
    pub micros: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusReport {
    pub mode: EngineMode,
    pub files: Vec<FileRecord>,
    pub total_bytes: u64,
    pub stats: BoundaryStats,
    /// Files found by the initial scan.
    pub scanned: usize,
}

/// A run that stopped early; completed envelopes stay valid.
#[derive(Debug, thiserror::Error)]
#[error("corpus run stopped after {} of {} files: {error}", report.files.len(), report.scanned)]
pub struct PartialRun {
    pub report: CorpusReport,
    pub error: CorpusError,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CorpusOptions {
    /// Unlink each original once its envelope is in place.
    pub replace: bool,
    /// Stop cleanly after this many files, as if interrupted.
    pub stop_after: Option<usize>,
}

/// Encrypts one file to `<path>.escrowsim`. The original is removed only when
/// `replace` is set.
pub fn encrypt_file(
    root: &Path,
    rel: &Path,
    encryptor: &mut Encryptor<'_>,
    replace: bool,
) -> Result<(EnvelopeHeader, u64), CorpusError> {
    let path = confined_join(root, rel)?;
    let file = File::open(&path).map_err(io_err(&path))?;
    let len = file.metadata().map_err(io_err(&path))?.len();
    let mut src = BufReader::new(file);
    let target = envelope_path(&path);
    let mut header = None;
    write_atomically(&target, |w| {
        let h = encryptor
            .encrypt_stream(len, &mut src, w)
            .map_err(|source| CorpusError::File { path: path.clone(), source })?;
        header = Some(h);
        Ok(())
    })?;
    if replace {
        fs::remove_file(&path).map_err(io_err(&path))?;
    }
    Ok((header.unwrap(), len))
}

/// Encrypts every regular file under a marked root.
pub fn encrypt_corpus(
    root: &Path,
    encryptor: &mut Encryptor<'_>,
    opts: CorpusOptions,
) -> Result<CorpusReport, PartialRun> {
    let mode = encryptor.mode();
    let empty = |error| PartialRun {
        report: CorpusReport { mode, files: vec![], total_bytes: 0, stats: encryptor.enclave().stats(), scanned: 0 },
        error,
    };
    let canon = match check_corpus_root(root) {
        Ok(c) => c,
        Err(e) => return Err(empty(e)),
    };
    let files = match scan_corpus(&canon) {
        Ok(f) => f,
        Err(e) => return Err(empty(e)),
    };
    let mut report = CorpusReport { mode, files: vec![], total_bytes: 0, stats: BoundaryStats::default(), scanned: files.len() };
    for rel in files.iter().take(opts.stop_after.unwrap_or(usize::MAX)) {
        let started = Instant::now();
        match encrypt_file(&canon, rel, encryptor, opts.replace) {
            Ok((_, bytes)) => {
                report.total_bytes += bytes;
                report.files.push(FileRecord { path: rel.clone(), bytes, micros: started.elapsed().as_micros() as u64 });
            }
            Err(error) => {
                report.stats = encryptor.enclave().stats();
                return Err(PartialRun { report, error });
            }
        }
    }
    report.stats = encryptor.enclave().stats();
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecryptReport {
    /// Originals written back from envelopes.
    pub restored: Vec<PathBuf>,
    /// Envelopes whose plaintext matched an original still on disk.
    pub verified: Vec<PathBuf>,
    /// Envelopes whose plaintext differed from the original on disk.
    pub mismatched: Vec<PathBuf>,
}

impl DecryptReport {
    pub fn all_ok(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Opens one envelope. When the original is absent it is restored (staged and
/// renamed, so a failed decryption leaves nothing behind); when present it is
/// compared byte for byte and left untouched.
pub fn decrypt_file_at(
    root: &Path,
    rel_envelope: &Path,
    decryptor: &mut Decryptor<'_>,
    report: &mut DecryptReport,
) -> Result<(), CorpusError> {
    let env_path = confined_join(root, rel_envelope)?;
    let name = env_path.to_string_lossy();
    let original = PathBuf::from(name.strip_suffix(ENVELOPE_SUFFIX).unwrap_or(&name).to_string());
    let rel_original = original.strip_prefix(root).unwrap_or(&original).to_path_buf();
    let mut src = BufReader::new(File::open(&env_path).map_err(io_err(&env_path))?);
    let wrap = |source| CorpusError::File { path: env_path.clone(), source };
    let header = EnvelopeHeader::read_from(&mut src).map_err(|e| wrap(e.into()))?;
    if original.exists() {
        let mut plain = Vec::with_capacity(header.plaintext_len as usize);
        decryptor.decrypt_stream(&header, &mut src, &mut plain).map_err(wrap)?;
        let mut on_disk = Vec::new();
        File::open(&original).and_then(|mut f| f.read_to_end(&mut on_disk)).map_err(io_err(&original))?;
        if on_disk == plain {
            report.verified.push(rel_original);
        } else {
            report.mismatched.push(rel_original);
        }
    } else {
        write_atomically(&original, |w| decryptor.decrypt_stream(&header, &mut src, w).map_err(wrap))?;
        report.restored.push(rel_original);
    }
    Ok(())
}

/// Decrypts every envelope under a marked root. With `remove_envelopes`, each
/// envelope is unlinked after its plaintext is verified or restored.
pub fn decrypt_corpus(
    root: &Path,
    decryptor: &mut Decryptor<'_>,
    remove_envelopes: bool,
) -> Result<DecryptReport, CorpusError> {
    let canon = check_corpus_root(root)?;
    let mut report = DecryptReport::default();
    for rel in scan_envelopes(&canon)? {
        decrypt_file_at(&canon, &rel, decryptor, &mut report)?;
        if remove_envelopes {
            let p = canon.join(&rel);
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    Ok(report)
}

/// Reads every envelope header under a marked root.
pub fn read_envelope_headers(root: &Path) -> Result<Vec<(PathBuf, EnvelopeHeader)>, CorpusError> {
    let canon = check_corpus_root(root)?;
    scan_envelopes(&canon)?
        .into_iter()
        .map(|rel| {
            let p = canon.join(&rel);
            let mut f = BufReader::new(File::open(&p).map_err(io_err(&p))?);
            let h = EnvelopeHeader::read_from(&mut f)
                .map_err(|e| CorpusError::File { path: p.clone(), source: e.into() })?;
            Ok((rel, h))
        })
        .collect()
}
