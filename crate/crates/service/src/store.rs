//! Append-only on-disk store.
//!
//! Layout under the data directory:
//!
//! ```text
//! index.jsonl                     one line per created session
//! write_log.jsonl                 path, length and sha256 of every write, logged before it
//! sessions/<id>/log.jsonl         one fsynced record per accepted API call
//! sessions/<id>/timeline.json     final timeline, written atomically at stop
//! users/<user>/refinements.jsonl  refinement notes carried across sessions
//! ```
//!
//! A crash can tear only the final line of a file. Opening a log truncates a
//! torn or unparseable final line; damage anywhere else is an error.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use attune_core::domain::{Millis, RefinementNote};
use attune_core::jsonl;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: corrupt record: {reason}")]
    Corrupt {
        path: String,
        line: usize,
        reason: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub user: String,
    pub stated_intention: String,
    pub created_at: Millis,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteLogEntry {
    pub path: String,
    pub len: usize,
    pub sha256: String,
}

/// Records read from a log, and how many torn bytes were cut off its end.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovered<T> {
    pub records: Vec<T>,
    pub truncated_bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Reads a JSONL file, truncating a torn final line in place.
pub fn read_repair<T: DeserializeOwned>(path: &Path) -> Result<Recovered<T>, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Ok(Recovered {
                records: Vec::new(),
                truncated_bytes: 0,
            })
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut records = Vec::new();
    let mut good_end = 0usize;
    let mut pos = 0usize;
    let mut line_no = 0usize;
    while pos < bytes.len() {
        line_no += 1;
        let rest = &bytes[pos..];
        let (line, next, complete) = match rest.iter().position(|&b| b == b'\n') {
            Some(i) => (&rest[..i], pos + i + 1, true),
            None => (rest, bytes.len(), false),
        };
        let is_last = next >= bytes.len();
        let text = std::str::from_utf8(line).ok();
        if text.is_some_and(|t| t.trim().is_empty()) {
            if complete {
                good_end = next;
            }
            pos = next;
            continue;
        }
        match text.map(serde_json::from_str::<T>) {
            Some(Ok(v)) if complete => {
                records.push(v);
                good_end = next;
            }
            // An unterminated or unparseable final line is a torn write.
            _ if is_last => break,
            Some(Err(e)) => {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: line_no,
                    reason: e.to_string(),
                })
            }
            _ => {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: line_no,
                    reason: "not utf-8".into(),
                })
            }
        }
        pos = next;
    }
    let truncated_bytes = (bytes.len() - good_end) as u64;
    if truncated_bytes > 0 {
        tracing::warn!(path = %path.display(), truncated_bytes, "repairing torn log tail");
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(io_err(path))?;
        f.set_len(good_end as u64).map_err(io_err(path))?;
        f.sync_all().map_err(io_err(path))?;
    }
    Ok(Recovered {
        records,
        truncated_bytes,
    })
}

pub struct Store {
    root: PathBuf,
    write_log: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in [root.join("sessions"), root.join("users")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        // Repair a torn write-log tail before appending to it.
        read_repair::<WriteLogEntry>(&root.join("write_log.jsonl"))?;
        read_repair::<IndexEntry>(&root.join("index.jsonl"))?;
        Ok(Self {
            root,
            write_log: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.session_dir(id).join("log.jsonl")
    }

    pub fn timeline_path(&self, id: &str) -> PathBuf {
        self.session_dir(id).join("timeline.json")
    }

    pub fn refinements_path(&self, user: &str) -> PathBuf {
        self.root.join("users").join(user).join("refinements.jsonl")
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.jsonl")
    }

    pub fn write_log_path(&self) -> PathBuf {
        self.root.join("write_log.jsonl")
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn note_write(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let entry = WriteLogEntry {
            path: self.relative(path),
            len: bytes.len(),
            sha256: sha256_hex(bytes),
        };
        let _guard = self.write_log.lock().unwrap_or_else(|e| e.into_inner());
        append_synced(&self.write_log_path(), jsonl::to_line(&entry).as_bytes())
    }

    /// Appends one line and fsyncs it before returning.
    pub fn append<T: Serialize>(&self, path: &Path, record: &T) -> Result<(), StoreError> {
        let line = jsonl::to_line(record);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        // The write log is appended first, so a crash between the two leaves
        // an entry without data, never data without an entry.
        self.note_write(path, line.as_bytes())?;
        append_synced(path, line.as_bytes())
    }

    pub fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        self.note_write(path, bytes)?;
        jsonl::write_bytes_atomic(path, bytes).map_err(|e| StoreError::Io {
            path: path.display().to_string(),
            source: io::Error::other(e.to_string()),
        })
    }

    pub fn read_index(&self) -> Result<Vec<IndexEntry>, StoreError> {
        Ok(read_repair(&self.index_path())?.records)
    }

    /// Session directories present on disk, sorted.
    pub fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            if entry.path().join("log.jsonl").exists() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn user_refinements(&self, user: &str) -> Result<Vec<RefinementNote>, StoreError> {
        Ok(read_repair(&self.refinements_path(user))?.records)
    }

    /// Checks that every line of every JSONL file and every timeline has a
    /// matching write-log entry. Returns the paths that do not.
    pub fn audit(&self) -> Result<Vec<String>, StoreError> {
        let logged: std::collections::HashSet<(String, String)> =
            read_repair::<WriteLogEntry>(&self.write_log_path())?
                .records
                .into_iter()
                .map(|e| (e.path, e.sha256))
                .collect();
        let mut missing = Vec::new();
        let mut check = |path: &Path, bytes: &[u8]| {
            let key = (self.relative(path), sha256_hex(bytes));
            if !logged.contains(&key) {
                missing.push(key.0);
            }
        };
        let mut files = vec![self.index_path()];
        for id in self.session_ids()? {
            files.push(self.log_path(&id));
            let t = self.timeline_path(&id);
            if t.exists() {
                check(&t, &fs::read(&t).map_err(io_err(&t))?);
            }
        }
        let users = self.root.join("users");
        for entry in fs::read_dir(&users).map_err(io_err(&users))? {
            let entry = entry.map_err(io_err(&users))?;
            files.push(entry.path().join("refinements.jsonl"));
        }
        for f in files.into_iter().filter(|f| f.exists()) {
            let text = fs::read(&f).map_err(io_err(&f))?;
            for line in text.split_inclusive(|&b| b == b'\n') {
                check(&f, line);
            }
        }
        Ok(missing)
    }
}

fn append_synced(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut f: File = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}
