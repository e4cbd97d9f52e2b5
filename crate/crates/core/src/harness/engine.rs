//! Chunked parallel runner with resumable checkpoints.
//!
//! Work items are indices `0..count`; item `i` must be a pure function of
//! `i` (it draws from its own random stream), so results do not depend on
//! the worker count or on where a run was interrupted.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint<T> {
    version: u32,
    crate_version: String,
    fingerprint: String,
    phase: String,
    count: usize,
    done: Vec<T>,
}

#[derive(Debug)]
pub struct Engine {
    dir: PathBuf,
    fingerprint: String,
    checkpoint_secs: f64,
    chunk: usize,
    stop_after_chunks: Option<usize>,
    chunks_run: usize,
    files: Vec<PathBuf>,
}

impl Engine {
    pub fn new(dir: &Path, fingerprint: String, checkpoint_secs: f64) -> Self {
        Self {
            dir: dir.to_path_buf(),
            fingerprint,
            checkpoint_secs,
            chunk: 32,
            stop_after_chunks: None,
            chunks_run: 0,
            files: Vec::new(),
        }
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }

    /// Abort with [`Error::Interrupted`] once this many chunks have run
    /// (after writing their checkpoint); simulates a killed process.
    pub fn with_stop_after(mut self, chunks: Option<usize>) -> Self {
        self.stop_after_chunks = chunks;
        self
    }

    fn path(&self, phase: &str) -> PathBuf {
        self.dir.join(format!("checkpoint-{phase}.json"))
    }

    fn load<T: DeserializeOwned>(&self, phase: &str, count: usize) -> Result<Vec<T>> {
        let path = self.path(phase);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let cp: Checkpoint<T> = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: unreadable ({e})", path.display())))?;
        if cp.version != CHECKPOINT_VERSION || cp.crate_version != env!("CARGO_PKG_VERSION") {
            return Err(Error::Checkpoint(format!("{}: written by a different version", path.display())));
        }
        if cp.fingerprint != self.fingerprint || cp.phase != phase || cp.count != count || cp.done.len() > count {
            return Err(Error::Checkpoint(format!("{}: belongs to a different configuration", path.display())));
        }
        Ok(cp.done)
    }

    fn save<T: Serialize>(&self, phase: &str, count: usize, done: &[T]) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a, T> {
            version: u32,
            crate_version: &'a str,
            fingerprint: &'a str,
            phase: &'a str,
            count: usize,
            done: &'a [T],
        }
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path(phase);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec(&Out {
            version: CHECKPOINT_VERSION,
            crate_version: env!("CARGO_PKG_VERSION"),
            fingerprint: &self.fingerprint,
            phase,
            count,
            done,
        })?;
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Run `f(i)` for `i in 0..count`, resuming from a checkpoint if one
    /// exists. Results come back in index order.
    pub fn run_phase<T, F>(&mut self, phase: &str, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Serialize + DeserializeOwned + Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        let mut done: Vec<T> = self.load(phase, count)?;
        let path = self.path(phase);
        if !self.files.contains(&path) {
            self.files.push(path);
        }
        let mut last = Instant::now();
        while done.len() < count {
            let start = done.len();
            let end = (start + self.chunk).min(count);
            let batch: Vec<T> = (start..end).into_par_iter().map(&f).collect::<Result<_>>()?;
            done.extend(batch);
            self.chunks_run += 1;
            let stop = self.stop_after_chunks.is_some_and(|s| self.chunks_run >= s);
            if stop || last.elapsed().as_secs_f64() >= self.checkpoint_secs {
                self.save(phase, count, &done)?;
                last = Instant::now();
            }
            if stop && done.len() < count {
                return Err(Error::Interrupted(self.chunks_run));
            }
        }
        Ok(done)
    }

    /// Remove every checkpoint this engine touched.
    pub fn finish(self) -> Result<()> {
        for p in &self.files {
            match std::fs::remove_file(p) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(i: usize) -> Result<u64> {
        Ok((i * i) as u64)
    }

    #[test]
    fn resume_gives_identical_results() {
        let dir = tempfile::tempdir().unwrap();
        let full = Engine::new(dir.path(), "cfg".into(), 0.0).with_chunk(3).run_phase("p", 20, square).unwrap();

        let mut e = Engine::new(dir.path(), "cfg".into(), 1e9).with_chunk(3).with_stop_after(Some(2));
        assert!(matches!(e.run_phase("q", 20, square), Err(Error::Interrupted(2))));
        assert!(dir.path().join("checkpoint-q.json").exists());
        let mut e = Engine::new(dir.path(), "cfg".into(), 1e9).with_chunk(3);
        let resumed = e.run_phase("q", 20, |i| {
            assert!(i >= 6, "item {i} recomputed");
            square(i)
        });
        assert_eq!(resumed.unwrap(), full);
        e.finish().unwrap();
        assert!(!dir.path().join("checkpoint-q.json").exists());
    }

    #[test]
    fn mismatched_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = Engine::new(dir.path(), "a".into(), 0.0).with_chunk(2).with_stop_after(Some(1));
        assert!(e.run_phase("p", 10, square).is_err());
        let mut other = Engine::new(dir.path(), "b".into(), 0.0);
        assert!(matches!(other.run_phase("p", 10, square), Err(Error::Checkpoint(_))));
        std::fs::write(dir.path().join("checkpoint-p.json"), "{not json").unwrap();
        let mut again = Engine::new(dir.path(), "a".into(), 0.0);
        assert!(matches!(again.run_phase("p", 10, square), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn worker_count_does_not_matter() {
        use rand::RngCore;
        let dir = tempfile::tempdir().unwrap();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                Engine::new(dir.path(), "x".into(), 1e9)
                    .run_phase("w", 100, |i| Ok(crate::rng::rng_stream(5, i as u64).next_u64()))
            })
            .unwrap()
        };
        assert_eq!(run(1), run(4));
    }
}
