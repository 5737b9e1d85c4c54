//! Append-only tuning history: one JSON object per line after a header line
//! that names the schema version and the spaces the records belong to.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::Measurement;
use crate::sampling::config_key;
use crate::spaces::{Configuration, ParameterSpace};
use crate::tuner::{Observation, Phase, TuningResult};

pub const SCHEMA: &str = "lcmtune-history";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryHeader {
    pub schema: String,
    pub version: u32,
    pub objective: String,
    pub task_space: String,
    pub task_space_hash: String,
    pub input_space: String,
    pub input_space_hash: String,
}

impl HistoryHeader {
    pub fn new(objective: &str, task_space: &ParameterSpace, input_space: &ParameterSpace) -> Self {
        HistoryHeader {
            schema: SCHEMA.into(),
            version: SCHEMA_VERSION,
            objective: objective.into(),
            task_space: task_space.name().into(),
            task_space_hash: task_space.hash(),
            input_space: input_space.name().into(),
            input_space_hash: input_space.hash(),
        }
    }

    /// Refuse records written for different spaces or another objective.
    pub fn check_compatible(&self, other: &HistoryHeader) -> Result<()> {
        if self.task_space_hash != other.task_space_hash {
            return Err(Error::SpaceMismatch(format!(
                "history task space `{}` ({}) differs from `{}` ({})",
                self.task_space, self.task_space_hash, other.task_space, other.task_space_hash
            )));
        }
        if self.input_space_hash != other.input_space_hash {
            return Err(Error::SpaceMismatch(format!(
                "history input space `{}` ({}) differs from `{}` ({})",
                self.input_space, self.input_space_hash, other.input_space, other.input_space_hash
            )));
        }
        if self.objective != other.objective {
            return Err(Error::SpaceMismatch(format!("history objective `{}` differs from `{}`", self.objective, other.objective)));
        }
        Ok(())
    }
}

/// One evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    /// RFC 3339, kept as written so reloads are exact.
    pub timestamp: String,
    pub run: String,
    pub method: String,
    pub seed: u64,
    pub phase: Phase,
    pub task: Configuration,
    pub config: Configuration,
    #[serde(flatten)]
    pub measurement: Measurement,
    /// Identifier of the model state that proposed this configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuningHistory {
    pub header: HistoryHeader,
    pub records: Vec<HistoryRecord>,
}

impl TuningHistory {
    pub fn new(header: HistoryHeader) -> Self {
        TuningHistory { header, records: Vec::new() }
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = serde_json::to_string(&self.header)?;
        s.push('\n');
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_reader(r: impl BufRead, path: &str) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| Error::Parse {
            path: path.into(),
            line: 1,
            field: "schema".into(),
            message: "empty history file".into(),
        })?;
        let header: HistoryHeader = serde_json::from_str(&first?).map_err(|e| Error::Parse {
            path: path.into(),
            line: 1,
            field: "schema".into(),
            message: e.to_string(),
        })?;
        if header.schema != SCHEMA || header.version != SCHEMA_VERSION {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                field: "version".into(),
                message: format!("unsupported history schema {} v{}", header.schema, header.version),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.into(),
                line: i + 1,
                field: "record".into(),
                message: e.to_string(),
            })?);
        }
        Ok(TuningHistory { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?), &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    /// Observations of `task`, one per distinct configuration (first wins).
    pub fn observations(&self, task: &Configuration) -> Vec<Observation> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|r| &r.task == task && seen.insert(config_key(&r.config)))
            .map(|r| Observation {
                config: r.config.clone(),
                measurement: r.measurement.clone(),
            })
            .collect()
    }

    /// Distinct tasks in order of first appearance.
    pub fn tasks(&self) -> Vec<Configuration> {
        let mut out: Vec<Configuration> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.task) {
                out.push(r.task.clone());
            }
        }
        out
    }
}

/// Records for every trace entry of `result`, stamped with the current time.
pub fn records_for(result: &TuningResult, run: &str, seed: u64) -> Vec<HistoryRecord> {
    let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true);
    result
        .trace
        .iter()
        .map(|e| HistoryRecord {
            timestamp: now.clone(),
            run: run.into(),
            method: result.method.clone(),
            seed,
            phase: e.phase,
            task: result.tasks[e.task_index].task.clone(),
            config: e.config.clone(),
            measurement: e.measurement.clone(),
            model: (e.phase == crate::tuner::Phase::Model).then(|| format!("{run}/{}", result.method)),
        })
        .collect()
}

/// Single-writer appender for a history file.
pub struct HistoryWriter {
    path: PathBuf,
    file: File,
}

impl HistoryWriter {
    /// Open `path` for appending, writing `header` if the file is new and
    /// refusing it if an existing file belongs to other spaces.
    pub fn open(path: &Path, header: &HistoryHeader) -> Result<Self> {
        if path.exists() && std::fs::metadata(path)?.len() > 0 {
            let existing = TuningHistory::from_reader(BufReader::new(File::open(path)?), &path.display().to_string())?;
            existing.header.check_compatible(header)?;
        } else {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let mut f = File::create(path)?;
            writeln!(f, "{}", serde_json::to_string(header)?)?;
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(HistoryWriter { path: path.into(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, records: &[HistoryRecord]) -> Result<()> {
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r)?);
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}
