//! Replay archive: JSONL of `{digest, request, response}`.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{default_max_parallel, Backend, BackendError, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    /// Archive path, relative to the plan file when not absolute.
    pub archive: PathBuf,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub digest: String,
    pub request: CompletionRequest,
    pub response: CompletionResponse,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayArchive {
    entries: HashMap<String, CompletionResponse>,
}

impl ReplayArchive {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)
            .map_err(|e| BackendError::Config(format!("replay archive {}: {e}", path.display())))?;
        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line)
                .map_err(|e| BackendError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
            if entry.request.digest() != entry.digest {
                return Err(BackendError::Config(format!(
                    "{} line {}: digest does not match request",
                    path.display(),
                    i + 1
                )));
            }
            entries.insert(entry.digest, entry.response);
        }
        Ok(Self { entries })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (CompletionRequest, CompletionResponse)>) -> Self {
        Self {
            entries: entries.into_iter().map(|(q, r)| (q.digest(), r)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let digest = request.digest();
        self.entries
            .get(&digest)
            .cloned()
            .ok_or(BackendError::ReplayMiss { digest })
    }

    /// Appends one entry as a JSONL line.
    pub fn append(
        writer: &mut impl Write,
        request: &CompletionRequest,
        response: &CompletionResponse,
    ) -> std::io::Result<()> {
        let entry = ReplayEntry {
            digest: request.digest(),
            request: request.clone(),
            response: response.clone(),
        };
        serde_json::to_writer(&mut *writer, &entry)?;
        writer.write_all(b"\n")
    }
}

/// Serves responses from an archive; never touches the network.
pub struct ReplayBackend {
    archive: ReplayArchive,
    max_parallel: usize,
}

impl ReplayBackend {
    pub fn open(config: &ReplayConfig, base_dir: &Path) -> Result<Self, BackendError> {
        let path = if config.archive.is_absolute() {
            config.archive.clone()
        } else {
            base_dir.join(&config.archive)
        };
        Ok(Self::new(ReplayArchive::load(&path)?, config.max_parallel))
    }

    pub fn new(archive: ReplayArchive, max_parallel: usize) -> Self {
        Self {
            archive,
            max_parallel: max_parallel.max(1),
        }
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        self.archive.lookup(request).map(|r| r.normalised(request.max_tokens))
    }

    fn max_parallel(&self) -> usize {
        self.max_parallel
    }
}

/// Wraps a backend and appends every successful exchange to an archive,
/// producing a file [`ReplayBackend`] can serve later.
pub struct RecordingBackend<B> {
    inner: B,
    sink: Mutex<std::fs::File>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, archive: &Path) -> std::io::Result<Self> {
        let sink = OpenOptions::new().create(true).append(true).open(archive)?;
        Ok(Self {
            inner,
            sink: Mutex::new(sink),
        })
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let response = self.inner.complete(request)?;
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        ReplayArchive::append(&mut *sink, request, &response)
            .map_err(|e| BackendError::Permanent(format!("recording replay entry: {e}")))?;
        Ok(response)
    }

    fn max_parallel(&self) -> usize {
        self.inner.max_parallel()
    }
}
