use std::sync::Mutex;

/// One plaintext secret observed outside the boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exposure {
    /// Position in the ledger's total order; doubles as the simulated
    /// capture time.
    pub seq: u64,
    pub tag: String,
    pub bytes: Vec<u8>,
}

/// Append-only record of every secret that existed in untrusted memory,
/// standing in for what a memory-forensics tool could capture.
#[derive(Debug, Default)]
pub struct ExposureLedger {
    entries: Mutex<Vec<Exposure>>,
}

impl ExposureLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, tag: &str, bytes: &[u8]) {
        let mut entries = self.entries.lock().unwrap();
        let seq = entries.len() as u64;
        entries.push(Exposure { seq, tag: tag.to_string(), bytes: bytes.to_vec() });
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<Exposure> {
        self.entries.lock().unwrap().clone()
    }

    /// Number of entries containing `needle` as a contiguous byte run.
    pub fn occurrences(&self, needle: &[u8]) -> usize {
        if needle.is_empty() {
            return 0;
        }
        self.entries
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.bytes.windows(needle.len()).any(|w| w == needle))
            .count()
    }

    pub fn contains(&self, needle: &[u8]) -> bool {
        self.occurrences(needle) > 0
    }

    /// Like [`occurrences`](Self::occurrences) but only over entries recorded
    /// before sequence number `before`.
    pub fn occurrences_before(&self, needle: &[u8], before: u64) -> usize {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.seq < before && e.bytes.windows(needle.len()).any(|w| w == needle))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn search_finds_subsequences() {
        let l = ExposureLedger::new();
        l.record("a", b"xxSECRETyy");
        l.record("b", b"nothing");
        assert_eq!(l.occurrences(b"SECRET"), 1);
        assert!(!l.contains(b"SECRETS"));
        assert_eq!(l.snapshot()[1].seq, 1);
    }

    #[test]
    fn concurrent_appends_get_a_total_order() {
        let l = Arc::new(ExposureLedger::new());
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let l = Arc::clone(&l);
                std::thread::spawn(move || {
                    for i in 0..100u32 {
                        l.record("t", &[t as u8, (i % 256) as u8]);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let snap = l.snapshot();
        assert_eq!(snap.len(), 800);
        assert!(snap.iter().enumerate().all(|(i, e)| e.seq == i as u64));
    }
}
