//! Record types and the append-only JSONL log.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::TokenSource;

/// One (model, benchmark, ratio) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub benchmark: String,
    pub ratio: f64,
}

impl CellKey {
    pub fn new(model: impl Into<String>, benchmark: impl Into<String>, ratio: f64) -> Self {
        Self {
            model: model.into(),
            benchmark: benchmark.into(),
            ratio,
        }
    }

    fn ratio_key(&self) -> i64 {
        (self.ratio * 1e6).round() as i64
    }
}

impl PartialEq for CellKey {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model && self.benchmark == other.benchmark && self.ratio_key() == other.ratio_key()
    }
}

impl Eq for CellKey {}

impl Hash for CellKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.model.hash(state);
        self.benchmark.hash(state);
        self.ratio_key().hash(state);
    }
}

impl Ord for CellKey {
    /// Model, benchmark, then descending ratio (baseline first).
    fn cmp(&self, other: &Self) -> Ordering {
        self.model
            .cmp(&other.model)
            .then_with(|| self.benchmark.cmp(&other.benchmark))
            .then_with(|| other.ratio_key().cmp(&self.ratio_key()))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Identity of a single planned call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrialKey {
    pub cell: CellKey,
    pub prompt_id: String,
    pub replicate_index: u32,
}

/// Outcome of one model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model: String,
    pub benchmark: String,
    pub ratio: f64,
    pub prompt_id: String,
    pub replicate_index: u32,
    pub input_tokens: u32,
    pub output_tokens: u32,
    pub hit_ceiling: bool,
    #[serde(default)]
    pub pass1: Option<bool>,
    pub psi: f64,
    #[serde(default)]
    pub token_source: TokenSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl TrialRecord {
    pub fn cell(&self) -> CellKey {
        CellKey::new(&self.model, &self.benchmark, self.ratio)
    }

    pub fn key(&self) -> TrialKey {
        TrialKey {
            cell: self.cell(),
            prompt_id: self.prompt_id.clone(),
            replicate_index: self.replicate_index,
        }
    }
}

/// A trial that failed; kept in the same stream as records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialErrorEntry {
    pub model: String,
    pub benchmark: String,
    pub ratio: f64,
    pub prompt_id: String,
    pub replicate_index: u32,
    pub error_kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl TrialErrorEntry {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            cell: CellKey::new(&self.model, &self.benchmark, self.ratio),
            prompt_id: self.prompt_id.clone(),
            replicate_index: self.replicate_index,
        }
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Record(TrialRecord),
    Error(TrialErrorEntry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogContents {
    pub records: Vec<TrialRecord>,
    pub errors: Vec<TrialErrorEntry>,
    pub malformed: Vec<LineError>,
}

/// Parses a log. Lines without a `kind` tag are read as bare records;
/// unparseable lines are collected, not fatal.
pub fn parse_log(reader: impl BufRead) -> std::io::Result<LogContents> {
    let mut out = LogContents::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match serde_json::from_str::<LogEntry>(trimmed) {
            Ok(LogEntry::Record(r)) => out.records.push(r),
            Ok(LogEntry::Error(e)) => out.errors.push(e),
            Err(tagged) => match serde_json::from_str::<TrialRecord>(trimmed) {
                Ok(r) => out.records.push(r),
                Err(_) => out.malformed.push(LineError {
                    line: i + 1,
                    message: tagged.to_string(),
                }),
            },
        }
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> std::io::Result<LogContents> {
    parse_log(BufReader::new(File::open(path)?))
}

/// Exclusive appender for a run log.
pub struct RecordLog {
    file: File,
}

impl RecordLog {
    /// Opens for append, terminating a torn final line first.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        let len = file.metadata()?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1))?;
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok(Self { file })
    }

    pub fn append(&mut self, entry: &LogEntry) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

/// Replicate groups whose outputs disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchGroup {
    pub cell: CellKey,
    pub prompt_id: String,
    /// `(replicate_index, output_tokens)` sorted by replicate.
    pub outputs: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeterminismReport {
    pub groups_checked: usize,
    pub mismatches: Vec<MismatchGroup>,
}

impl DeterminismReport {
    pub fn is_deterministic(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Groups records by (cell, prompt) and flags groups whose replicates
/// report different output lengths.
pub fn verify_determinism(records: &[TrialRecord]) -> DeterminismReport {
    let mut groups: BTreeMap<(CellKey, String), Vec<(u32, u32)>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.cell(), r.prompt_id.clone()))
            .or_default()
            .push((r.replicate_index, r.output_tokens));
    }
    let groups_checked = groups.len();
    let mismatches = groups
        .into_iter()
        .filter(|(_, outs)| outs.iter().any(|o| o.1 != outs[0].1))
        .map(|((cell, prompt_id), mut outputs)| {
            outputs.sort();
            MismatchGroup {
                cell,
                prompt_id,
                outputs,
            }
        })
        .collect();
    DeterminismReport {
        groups_checked,
        mismatches,
    }
}
