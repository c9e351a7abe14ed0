use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use super::{EvalError, Model, Query};

/// On-disk, content-addressed response cache around another model.
///
/// Entries live at `<dir>/<aa>/<sha256>.txt`, keyed on the prompt text and
/// a configuration key. Writes go through a temporary file and a rename, so
/// concurrent readers never see partial entries.
pub struct CachedModel<M> {
    inner: M,
    dir: PathBuf,
    config_key: String,
    hits: AtomicU64,
    misses: AtomicU64,
    temp_counter: AtomicU64,
}

impl<M: Model> CachedModel<M> {
    pub fn new(inner: M, dir: PathBuf, config_key: String) -> io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(CachedModel {
            inner,
            dir,
            config_key,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            temp_counter: AtomicU64::new(0),
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn path_for(&self, prompt: &str) -> PathBuf {
        let mut h = Sha256::new();
        h.update(self.config_key.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        let key = hex::encode(h.finalize());
        self.dir.join(&key[..2]).join(format!("{key}.txt"))
    }

    fn store(&self, path: &PathBuf, text: &str) -> io::Result<()> {
        let parent = path.parent().expect("entry has a parent");
        fs::create_dir_all(parent)?;
        let n = self.temp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = parent.join(format!(".{}.{n}.tmp", std::process::id()));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, path)
    }
}

impl<M: Model> Model for CachedModel<M> {
    fn tag(&self) -> String {
        self.inner.tag()
    }

    fn complete(&self, query: &Query<'_>) -> Result<String, EvalError> {
        let path = self.path_for(query.prompt);
        if let Ok(text) = fs::read_to_string(&path) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(text);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let text = self.inner.complete(query)?;
        // A failed write only costs a future cache miss.
        let _ = self.store(&path, &text);
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phenotype::Phenotype;
    use crate::tasks::TaskInstance;
    use std::sync::atomic::AtomicUsize;

    struct Counting(AtomicUsize);

    impl Model for Counting {
        fn tag(&self) -> String {
            "counting".into()
        }

        fn complete(&self, q: &Query<'_>) -> Result<String, EvalError> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{}-{n}", q.prompt.len()))
        }
    }

    #[test]
    fn hit_returns_identical_output_without_calling_inner() {
        let dir = tempfile::tempdir().unwrap();
        let model = CachedModel::new(Counting(AtomicUsize::new(0)), dir.path().into(), "k".into()).unwrap();
        let inst = TaskInstance {
            input: "i".into(),
            target: "t".into(),
        };
        let p = Phenotype::default();
        let q = Query {
            prompt: "some prompt",
            phenotype: &p,
            instance_index: 0,
            instance: &inst,
            choices: None,
        };
        let first = model.complete(&q).unwrap();
        let second = model.complete(&q).unwrap();
        assert_eq!(first, second);
        assert_eq!(model.inner.0.load(Ordering::SeqCst), 1);
        assert_eq!((model.hits(), model.misses()), (1, 1));

        let other = CachedModel::new(Counting(AtomicUsize::new(0)), dir.path().into(), "k2".into()).unwrap();
        other.complete(&q).unwrap();
        assert_eq!(other.misses(), 1, "config key separates entries");
    }
}
