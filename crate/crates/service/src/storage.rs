//! Session persistence: an append-only JSON-lines log plus a JSON snapshot
//! per session. [`MemoryStorage`] keeps the same data in memory.

use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use thiserror::Error;
use tokio::io::AsyncWriteExt;
use tokio::sync::Mutex;
use uuid::Uuid;

use crate::state::{Checkpoint, LogEntry};

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("storage I/O failed: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt checkpoint for session {session_id}: {reason}")]
    Corrupt { session_id: Uuid, reason: String },
}

#[async_trait]
pub trait Storage: Send + Sync {
    async fn append(&self, session_id: Uuid, entry: &LogEntry) -> Result<(), StorageError>;
    /// The full log, or `None` if the session was never created.
    async fn read_log(&self, session_id: Uuid) -> Result<Option<Vec<LogEntry>>, StorageError>;
    async fn write_checkpoint(&self, checkpoint: &Checkpoint) -> Result<(), StorageError>;
    async fn read_checkpoint(&self, session_id: Uuid) -> Result<Option<Checkpoint>, StorageError>;
    async fn index_response(&self, response_id: &str, session_id: Uuid) -> Result<(), StorageError>;
    async fn locate_response(&self, response_id: &str) -> Result<Option<Uuid>, StorageError>;
}

fn corrupt(session_id: Uuid, reason: impl ToString) -> StorageError {
    StorageError::Corrupt { session_id, reason: reason.to_string() }
}

fn parse_log(session_id: Uuid, text: &str) -> Result<Vec<LogEntry>, StorageError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| corrupt(session_id, format!("log line {}: {e}", i + 1)))
        })
        .collect()
}

/// Directory layout: `<root>/<session>/events.jsonl`,
/// `<root>/<session>/snapshot.json` and `<root>/responses.jsonl`.
pub struct FileStorage {
    root: PathBuf,
    index_lock: Mutex<()>,
}

impl FileStorage {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(FileStorage { root, index_lock: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, session_id: Uuid) -> PathBuf {
        self.root.join(session_id.to_string())
    }

    pub fn snapshot_path(&self, session_id: Uuid) -> PathBuf {
        self.session_dir(session_id).join("snapshot.json")
    }

    pub fn log_path(&self, session_id: Uuid) -> PathBuf {
        self.session_dir(session_id).join("events.jsonl")
    }

    async fn append_line(path: &Path, line: String) -> io::Result<()> {
        let mut file = tokio::fs::OpenOptions::new().create(true).append(true).open(path).await?;
        file.write_all(line.as_bytes()).await?;
        file.write_all(b"\n").await?;
        file.flush().await
    }
}

async fn read_optional(path: &Path) -> io::Result<Option<String>> {
    match tokio::fs::read_to_string(path).await {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

#[async_trait]
impl Storage for FileStorage {
    async fn append(&self, session_id: Uuid, entry: &LogEntry) -> Result<(), StorageError> {
        tokio::fs::create_dir_all(self.session_dir(session_id)).await?;
        let line = serde_json::to_string(entry).expect("log entry serializes");
        Ok(Self::append_line(&self.log_path(session_id), line).await?)
    }

    async fn read_log(&self, session_id: Uuid) -> Result<Option<Vec<LogEntry>>, StorageError> {
        match read_optional(&self.log_path(session_id)).await? {
            Some(text) => parse_log(session_id, &text).map(Some),
            None => Ok(None),
        }
    }

    async fn write_checkpoint(&self, checkpoint: &Checkpoint) -> Result<(), StorageError> {
        let dir = self.session_dir(checkpoint.session_id);
        tokio::fs::create_dir_all(&dir).await?;
        let tmp = dir.join("snapshot.json.tmp");
        let body = serde_json::to_vec_pretty(checkpoint).expect("checkpoint serializes");
        let mut file = tokio::fs::File::create(&tmp).await?;
        file.write_all(&body).await?;
        file.sync_all().await?;
        drop(file);
        tokio::fs::rename(&tmp, self.snapshot_path(checkpoint.session_id)).await?;
        Ok(())
    }

    async fn read_checkpoint(&self, session_id: Uuid) -> Result<Option<Checkpoint>, StorageError> {
        let Some(text) = read_optional(&self.snapshot_path(session_id)).await? else {
            return Ok(None);
        };
        let checkpoint: Checkpoint = serde_json::from_str(&text).map_err(|e| corrupt(session_id, e))?;
        if checkpoint.session_id != session_id || checkpoint.state.session_id != session_id {
            return Err(corrupt(session_id, "snapshot belongs to another session"));
        }
        Ok(Some(checkpoint))
    }

    async fn index_response(&self, response_id: &str, session_id: Uuid) -> Result<(), StorageError> {
        let _guard = self.index_lock.lock().await;
        let line = serde_json::json!({ "response_id": response_id, "session_id": session_id }).to_string();
        Ok(Self::append_line(&self.root.join("responses.jsonl"), line).await?)
    }

    async fn locate_response(&self, response_id: &str) -> Result<Option<Uuid>, StorageError> {
        let Some(text) = read_optional(&self.root.join("responses.jsonl")).await? else {
            return Ok(None);
        };
        #[derive(serde::Deserialize)]
        struct IndexLine {
            response_id: String,
            session_id: Uuid,
        }
        Ok(text
            .lines()
            .filter_map(|l| serde_json::from_str::<IndexLine>(l).ok())
            .find(|l| l.response_id == response_id)
            .map(|l| l.session_id))
    }
}

/// Volatile storage for tests and for running without a storage path.
#[derive(Default)]
pub struct MemoryStorage {
    logs: Mutex<HashMap<Uuid, Vec<LogEntry>>>,
    checkpoints: Mutex<HashMap<Uuid, Checkpoint>>,
    index: Mutex<HashMap<String, Uuid>>,
}

impl MemoryStorage {
    pub fn new() -> Self {
        Self::default()
    }
}

#[async_trait]
impl Storage for MemoryStorage {
    async fn append(&self, session_id: Uuid, entry: &LogEntry) -> Result<(), StorageError> {
        self.logs.lock().await.entry(session_id).or_default().push(entry.clone());
        Ok(())
    }

    async fn read_log(&self, session_id: Uuid) -> Result<Option<Vec<LogEntry>>, StorageError> {
        Ok(self.logs.lock().await.get(&session_id).cloned())
    }

    async fn write_checkpoint(&self, checkpoint: &Checkpoint) -> Result<(), StorageError> {
        self.checkpoints.lock().await.insert(checkpoint.session_id, checkpoint.clone());
        Ok(())
    }

    async fn read_checkpoint(&self, session_id: Uuid) -> Result<Option<Checkpoint>, StorageError> {
        Ok(self.checkpoints.lock().await.get(&session_id).cloned())
    }

    async fn index_response(&self, response_id: &str, session_id: Uuid) -> Result<(), StorageError> {
        self.index.lock().await.insert(response_id.to_owned(), session_id);
        Ok(())
    }

    async fn locate_response(&self, response_id: &str) -> Result<Option<Uuid>, StorageError> {
        Ok(self.index.lock().await.get(response_id).copied())
    }
}
