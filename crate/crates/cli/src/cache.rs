//! Content-hash cache for pipeline stages.
//!
//! A stage's key is the SHA-256 of its name, its parameters and the bytes of
//! every input. The key is stored under `<output>/.cache/<stage>` once the
//! stage finishes; a later run with the same key and all outputs present
//! skips the stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Outcome};

pub struct KeyBuilder {
    hasher: Sha256,
}

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        let mut k = KeyBuilder {
            hasher: Sha256::new(),
        };
        k.chunk(b"stage", stage.as_bytes());
        k
    }

    fn chunk(&mut self, tag: &[u8], bytes: &[u8]) {
        self.hasher.update((tag.len() as u64).to_le_bytes());
        self.hasher.update(tag);
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn param<T: Serialize>(mut self, name: &str, value: &T) -> Self {
        let json = serde_json::to_vec(value).expect("parameters serialize");
        self.chunk(name.as_bytes(), &json);
        self
    }

    /// Hashes a file's bytes under `name`; the path itself is not part of
    /// the key, so moving an input does not invalidate the cache.
    pub fn file(mut self, name: &str, path: &Path) -> Outcome<Self> {
        let bytes =
            fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        self.chunk(name.as_bytes(), &bytes);
        Ok(self)
    }

    /// Hashes every file in `dir` ending in `suffix`, by name and content.
    pub fn files(mut self, dir: &Path, suffix: &str) -> Outcome<Self> {
        for p in crate::stages::files_with_suffix(dir, suffix)? {
            let name = p
                .file_name()
                .expect("listed files have names")
                .to_string_lossy()
                .into_owned();
            self = self.file(&name, &p)?;
        }
        Ok(self)
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(output: &Path) -> Self {
        Cache {
            dir: output.join(".cache"),
        }
    }

    fn entry(&self, stage: &str) -> PathBuf {
        self.dir.join(stage)
    }

    /// True when `stage` last finished with `key` and left every output.
    pub fn is_fresh(&self, stage: &str, key: &str, outputs: &[PathBuf]) -> bool {
        fs::read_to_string(self.entry(stage)).is_ok_and(|k| k.trim() == key)
            && outputs.iter().all(|p| p.exists())
    }

    /// Forgets `stage`, so an interrupted rerun is never mistaken for a
    /// finished one.
    pub fn invalidate(&self, stage: &str) -> Outcome<()> {
        match fs::remove_file(self.entry(stage)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Failure::stage(stage, e)),
            _ => Ok(()),
        }
    }

    pub fn record(&self, stage: &str, key: &str) -> Outcome<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Failure::stage(stage, e))?;
        fs::write(self.entry(stage), format!("{key}\n")).map_err(|e| Failure::stage(stage, e))
    }
}
