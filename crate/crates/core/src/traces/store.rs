//! Append-only trace store persisted as one JSON record per line.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Scenario, Trace, TraceRecord};
use crate::error::{Error, Result};
use crate::stats::TrialOutcomes;

/// Source of append timestamps.
#[derive(Debug)]
pub enum Clock {
    /// Wall clock in epoch milliseconds.
    System,
    /// Counter starting at the given value, one tick per append.
    Logical(AtomicU64),
}

impl Clock {
    pub fn logical() -> Self {
        Clock::Logical(AtomicU64::new(1))
    }

    fn now(&self) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            Clock::Logical(c) => c.fetch_add(1, Ordering::SeqCst),
        }
    }
}

/// Single-writer, many-reader record log.
///
/// Readers always observe a committed prefix: a record becomes visible only
/// after its line has been written and flushed.
#[derive(Debug)]
pub struct TraceStore {
    path: Option<PathBuf>,
    records: RwLock<Vec<Arc<TraceRecord>>>,
    writer: Mutex<Option<File>>,
    clock: Clock,
}

impl TraceStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            records: RwLock::new(Vec::new()),
            writer: Mutex::new(None),
            clock: Clock::logical(),
        }
    }

    /// Open (creating if needed) a store file and load its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut records = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| {
                    Error::InvalidInput(format!("{}:{}: malformed record: {e}", path.display(), lineno + 1))
                })?;
                records.push(Arc::new(rec));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            records: RwLock::new(records),
            writer: Mutex::new(Some(file)),
            clock: Clock::System,
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Append a record, assigning its id and timestamp. Returns the id.
    pub fn append(&self, mut record: TraceRecord) -> Result<u64> {
        record.trace.validate()?;
        let mut writer = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let (last_id, last_ts) = {
            let recs = self.read();
            recs.last().map_or((0, 0), |r| (r.record_id, r.timestamp_ms))
        };
        record.record_id = last_id + 1;
        record.timestamp_ms = self.clock.now().max(last_ts);
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        let id = record.record_id;
        self.records
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .push(Arc::new(record));
        Ok(id)
    }

    pub fn append_trace(&self, version_id: &str, scenario_id: &str, input: &str, trace: Trace) -> Result<u64> {
        self.append(TraceRecord::pending(version_id, scenario_id, input, trace))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Vec<Arc<TraceRecord>>> {
        self.records.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of every record in append order.
    pub fn all(&self) -> Vec<Arc<TraceRecord>> {
        self.read().clone()
    }

    /// Records of `version_id`, restricted to `scenarios` unless it is empty,
    /// in timestamp order.
    pub fn query(&self, version_id: &str, scenarios: &[&str]) -> Vec<Arc<TraceRecord>> {
        let mut out: Vec<_> = self
            .read()
            .iter()
            .filter(|r| r.version_id == version_id && (scenarios.is_empty() || scenarios.contains(&r.scenario_id.as_str())))
            .cloned()
            .collect();
        out.sort_by_key(|r| (r.timestamp_ms, r.record_id));
        out
    }

    pub fn count(&self, version_id: &str, scenario_id: &str) -> usize {
        self.read()
            .iter()
            .filter(|r| r.version_id == version_id && r.scenario_id == scenario_id)
            .count()
    }

    /// `n` matching records drawn uniformly without replacement.
    pub fn sample(&self, version_id: &str, scenarios: &[&str], n: usize, seed: u64) -> Result<Vec<Arc<TraceRecord>>> {
        let pool = self.query(version_id, scenarios);
        if n > pool.len() {
            return Err(Error::InsufficientData {
                what: format!("stored traces for version {version_id:?}"),
                needed: n,
                available: pool.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(index::sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect())
    }

    pub fn versions(&self) -> Vec<String> {
        let mut v: Vec<String> = self.read().iter().map(|r| r.version_id.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// The whole store in its on-disk line format.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in self.read().iter() {
            s.push_str(&serde_json::to_string(r.as_ref())?);
            s.push('\n');
        }
        Ok(s)
    }
}

/// Evaluate every stored trace of one scenario, with no live executions.
pub fn replay_outcomes(store: &TraceStore, version_id: &str, scenario: &Scenario) -> Result<TrialOutcomes> {
    let records = store.query(version_id, &[scenario.scenario_id.as_str()]);
    if records.is_empty() {
        return Err(Error::InsufficientData {
            what: format!("stored traces for {version_id}/{}", scenario.scenario_id),
            needed: 1,
            available: 0,
        });
    }
    Ok(TrialOutcomes::new(
        scenario.scenario_id.clone(),
        version_id,
        records
            .iter()
            .map(|r| scenario.evaluator.evaluate(&r.input, &r.trace.final_output))
            .collect(),
    ))
}
