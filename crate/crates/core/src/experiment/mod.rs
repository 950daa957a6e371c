//! Factor sweeps: one SMC estimate per cell of a factor grid, written to a
//! versioned CSV, plus main-effects and plot-series post-processing.
//!
//! A sweep file is TOML:
//!
//! ```toml
//! output = "threads.csv"             # optional, relative to the sweep file
//! calibration = "profile.toml"     # optional, default: shipped profile
//!
//! [fixed]                          # SMC parameters and base FactorConfig
//! alpha = 0.1
//! delta_conf = 0.1
//! master_seed = 1
//! monitor = "all_satisfied"
//! send_interval = 1000
//! horizon = 10000000
//!
//! [factors]                        # each key lists the levels to sweep
//! n_forwarding_threads = [1, 2, 3, 4, 5, 6, 7, 8]
//! queue_capacity = [128, 4096]
//!
//! [model]                          # optional ModelOptions
//! rx_capacity = 4096
//! ```
//!
//! Cells are the cross product of the factor levels in the canonical factor
//! order of [`Factor::ALL`], first factor varying slowest, levels in the
//! order listed. Cell `i` uses master seed `derive_seed(master_seed, i)`.

mod analysis;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    emit_series, main_effects, write_effects, FactorEffect, LevelMean, MainEffectsTable, Response, SeriesPoint,
};

use crate::calibration::{CalibrationError, CalibrationProfile, Placement};
use crate::forwarder::{build_model_with, FactorConfig, ModelOptions};
use crate::rng::{derive_seed, fnv1a};
use crate::smc::{estimate_with, required_samples, sample_trace, Monitor, SmcError};

/// First line of every results CSV.
pub const RESULTS_SCHEMA: &str = "#schema=ndnsmc-results/1";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("sweep config: {0}")]
    Config(String),
    #[error("calibration: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("cell {cell} ({desc}): {source}")]
    Cell {
        cell: usize,
        desc: String,
        #[source]
        source: SmcError,
    },
    #[error("budget of {budget} traces exceeded: the sweep needs {projected}")]
    Budget { projected: u64, budget: u64 },
    #[error("journal {path}: {msg}")]
    Journal { path: PathBuf, msg: String },
    #[error("{path}: {msg}")]
    Results { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// True when the error comes from running the model rather than from
    /// the configuration or the file system.
    pub fn is_simulation_abort(&self) -> bool {
        matches!(self, ExperimentError::Cell { source: SmcError::Trace { .. }, .. })
    }

    pub fn is_config(&self) -> bool {
        match self {
            ExperimentError::Config(_) | ExperimentError::Calibration(_) | ExperimentError::Budget { .. } => true,
            ExperimentError::Cell { source, .. } => matches!(source, SmcError::Domain(_) | SmcError::Model(_)),
            _ => false,
        }
    }
}

/// A swept factor. The declaration order is the canonical sweep order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    NForwardingThreads,
    NameLength,
    PayloadLen,
    SendInterval,
    QueueCapacity,
    NumaPlacement,
}

impl Factor {
    pub const ALL: [Factor; 6] = [
        Factor::NForwardingThreads,
        Factor::NameLength,
        Factor::PayloadLen,
        Factor::SendInterval,
        Factor::QueueCapacity,
        Factor::NumaPlacement,
    ];

    /// Field name in [`FactorConfig`] and column name in result CSVs.
    pub fn name(self) -> &'static str {
        match self {
            Factor::NForwardingThreads => "n_forwarding_threads",
            Factor::NameLength => "name_length",
            Factor::PayloadLen => "payload_len",
            Factor::SendInterval => "send_interval",
            Factor::QueueCapacity => "queue_capacity",
            Factor::NumaPlacement => "numa_placement",
        }
    }

    pub fn parse(name: &str) -> Option<Factor> {
        Factor::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Level of this factor in `row`, as printed in CSVs.
    pub fn level(self, row: &ResultRow) -> String {
        match self {
            Factor::NForwardingThreads => row.n_forwarding_threads.to_string(),
            Factor::NameLength => row.name_length.to_string(),
            Factor::PayloadLen => row.payload_len.to_string(),
            Factor::SendInterval => row.send_interval.to_string(),
            Factor::QueueCapacity => row.queue_capacity.to_string(),
            Factor::NumaPlacement => row.numa_placement.to_string(),
        }
    }
}

/// One line of a results CSV. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n_forwarding_threads: u8,
    pub name_length: usize,
    pub payload_len: u32,
    pub send_interval: u64,
    pub queue_capacity: usize,
    pub numa_placement: Placement,
    /// Fraction of traces satisfying the monitor.
    pub p_hat: f64,
    pub mean_ratio: f64,
    pub stderr: f64,
    pub n_samples: u64,
    /// Drops summed over all traces of the cell.
    pub drops_total: u64,
    /// Simulated time summed over all traces of the cell.
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub base: FactorConfig,
    /// Swept factors in canonical order with their levels.
    pub factors: Vec<(Factor, Vec<toml::Value>)>,
    pub alpha: f64,
    pub delta_conf: f64,
    pub master_seed: u64,
    pub monitor: Monitor,
    pub calibration: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub model: ModelOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    output: Option<PathBuf>,
    calibration: Option<PathBuf>,
    #[serde(default)]
    fixed: toml::Table,
    #[serde(default)]
    factors: toml::Table,
    #[serde(default)]
    model: ModelOptions,
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

impl SweepSpec {
    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        let raw: RawSpec = toml::from_str(s).map_err(|e| config_err(e.to_string()))?;
        let mut fixed = raw.fixed;
        let mut take_f64 = |key: &str, default: f64| -> Result<f64, ExperimentError> {
            match fixed.remove(key) {
                None => Ok(default),
                Some(toml::Value::Float(x)) => Ok(x),
                Some(toml::Value::Integer(x)) => Ok(x as f64),
                Some(v) => Err(config_err(format!("fixed.{key} must be a number, got {v}"))),
            }
        };
        let alpha = take_f64("alpha", 0.1)?;
        let delta_conf = take_f64("delta_conf", 0.1)?;
        let master_seed = match fixed.remove("master_seed") {
            None => 0,
            Some(toml::Value::Integer(x)) if x >= 0 => x as u64,
            Some(v) => return Err(config_err(format!("fixed.master_seed must be a non-negative integer, got {v}"))),
        };
        let monitor = match fixed.remove("monitor") {
            None => Monitor::AllSatisfied,
            Some(v) => v.try_into().map_err(|e| config_err(format!("fixed.monitor: {e}")))?,
        };
        let base: FactorConfig = toml::Value::Table(fixed).try_into().map_err(|e| config_err(format!("fixed: {e}")))?;

        let mut factors = Vec::new();
        for (key, value) in raw.factors {
            let factor = Factor::parse(&key).ok_or_else(|| {
                let names: Vec<_> = Factor::ALL.iter().map(|f| f.name()).collect();
                config_err(format!("unknown factor {key:?}; expected one of {}", names.join(", ")))
            })?;
            let toml::Value::Array(levels) = value else {
                return Err(config_err(format!("factors.{key} must be a list of levels")));
            };
            if levels.is_empty() {
                return Err(config_err(format!("factors.{key} has no levels")));
            }
            for (i, l) in levels.iter().enumerate() {
                if levels[..i].contains(l) {
                    return Err(config_err(format!("factors.{key} lists {l} twice")));
                }
            }
            factors.push((factor, levels));
        }
        factors.sort_by_key(|(f, _)| *f);
        let spec = SweepSpec {
            base,
            factors,
            alpha,
            delta_conf,
            master_seed,
            monitor,
            calibration: raw.calibration,
            output: raw.output,
            model: raw.model,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a sweep file; relative `output` and `calibration` paths are
    /// taken relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut spec = Self::from_toml_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut spec.output, &mut spec.calibration].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        required_samples(self.alpha, self.delta_conf).map_err(|e| config_err(e.to_string()))?;
        for i in 0..self.cell_count() {
            self.cell(i)?.validate().map_err(|e| config_err(format!("cell {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.factors.iter().map(|(_, l)| l.len()).product()
    }

    /// Configuration of cell `index`.
    pub fn cell(&self, index: usize) -> Result<FactorConfig, ExperimentError> {
        let mut table = toml::Table::try_from(&self.base).map_err(|e| config_err(e.to_string()))?;
        let mut rest = index;
        for (factor, levels) in self.factors.iter().rev() {
            table.insert(factor.name().to_string(), levels[rest % levels.len()].clone());
            rest /= levels.len();
        }
        toml::Value::Table(table).try_into().map_err(|e| config_err(format!("cell {index}: {e}")))
    }

    pub fn cells(&self) -> Result<Vec<FactorConfig>, ExperimentError> {
        (0..self.cell_count()).map(|i| self.cell(i)).collect()
    }

    /// Traces needed for the whole grid.
    pub fn projected_traces(&self) -> Result<u64, ExperimentError> {
        let n = required_samples(self.alpha, self.delta_conf).map_err(|e| config_err(e.to_string()))?;
        Ok(n * self.cell_count() as u64)
    }

    /// Profile named by the spec, or the shipped one.
    pub fn load_calibration(&self) -> Result<CalibrationProfile, ExperimentError> {
        Ok(match &self.calibration {
            Some(p) => CalibrationProfile::load(p)?,
            None => CalibrationProfile::shipped(),
        })
    }

    /// Hash of everything that determines the results.
    fn fingerprint(&self, cal: &CalibrationProfile) -> Result<String, ExperimentError> {
        #[derive(Serialize)]
        struct Key<'a> {
            cells: Vec<FactorConfig>,
            alpha: f64,
            delta_conf: f64,
            master_seed: u64,
            monitor: &'a Monitor,
            model: &'a ModelOptions,
            calibration: &'a CalibrationProfile,
        }
        let key = Key {
            cells: self.cells()?,
            alpha: self.alpha,
            delta_conf: self.delta_conf,
            master_seed: self.master_seed,
            monitor: &self.monitor,
            model: &self.model,
            calibration: cal,
        };
        let json = serde_json::to_string(&key).map_err(|e| config_err(e.to_string()))?;
        Ok(format!("{:016x}", fnv1a(json.as_bytes())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepOptions {
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Maximum number of traces the sweep may run.
    pub budget: Option<u64>,
}

/// Runs one cell: `N` traces and their summary row.
pub fn run_cell(
    spec: &SweepSpec,
    cal: &CalibrationProfile,
    index: usize,
    cfg: &FactorConfig,
) -> Result<ResultRow, SmcError> {
    let model = build_model_with(cfg, cal, &spec.model)?;
    let drops = AtomicU64::new(0);
    let est = estimate_with(spec.alpha, spec.delta_conf, derive_seed(spec.master_seed, index as u64), 0, |seed| {
        let (sample, counters) = sample_trace(&model, &spec.monitor, seed)?;
        drops.fetch_add(counters.drops_total(), Ordering::Relaxed);
        Ok::<_, SmcError>(sample)
    })?;
    let mean_ratio = est.mean_ratio.ok_or_else(|| SmcError::Monitor("no satisfaction ratio".into()))?;
    Ok(ResultRow {
        n_forwarding_threads: cfg.n_forwarding_threads,
        name_length: cfg.name_length,
        payload_len: cfg.payload_len,
        send_interval: cfg.send_interval,
        queue_capacity: cfg.queue_capacity,
        numa_placement: cfg.numa_placement,
        p_hat: est.p_hat,
        mean_ratio,
        stderr: est.stderr.unwrap_or(0.0),
        n_samples: est.n,
        drops_total: drops.into_inner(),
        runtime_s: est.n as f64 * cfg.horizon as f64 * 1e-9,
    })
}

#[derive(Serialize, Deserialize)]
struct JournalHeader {
    fingerprint: String,
    cells: usize,
}

#[derive(Serialize, Deserialize)]
struct JournalEntry {
    cell: usize,
    row: ResultRow,
}

/// Journal kept next to `out` while a sweep is incomplete.
pub fn journal_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".journal");
    PathBuf::from(s)
}

/// Completed cells from an existing journal. A torn last line is ignored.
fn read_journal(path: &Path, header: &JournalHeader) -> Result<BTreeMap<usize, ResultRow>, ExperimentError> {
    let err = |msg: String| ExperimentError::Journal { path: path.to_path_buf(), msg };
    let mut done = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(e.into()),
    };
    let mut lines = BufReader::new(file).lines();
    let Some(first) = lines.next().transpose()? else { return Ok(done) };
    match serde_json::from_str::<JournalHeader>(&first) {
        Ok(h) if h.fingerprint == header.fingerprint && h.cells == header.cells => {}
        Ok(_) => return Err(err("belongs to a different sweep; delete it to start over".into())),
        Err(_) if !first.ends_with('}') => return Ok(done),
        Err(e) => return Err(err(e.to_string())),
    }
    for line in lines {
        let line = line?;
        match serde_json::from_str::<JournalEntry>(&line) {
            Ok(e) if e.cell < header.cells => {
                done.insert(e.cell, e.row);
            }
            Ok(e) => return Err(err(format!("cell {} out of range", e.cell))),
            // an interrupted write leaves at most one partial line
            Err(_) => break,
        }
    }
    Ok(done)
}

/// Runs every cell not yet in the journal, then writes the results CSV
/// atomically and removes the journal.
pub fn run_sweep(
    spec: &SweepSpec,
    cal: &CalibrationProfile,
    out: &Path,
    opts: &SweepOptions,
) -> Result<Vec<ResultRow>, ExperimentError> {
    spec.validate()?;
    let projected = spec.projected_traces()?;
    if let Some(budget) = opts.budget {
        if projected > budget {
            return Err(ExperimentError::Budget { projected, budget });
        }
    }
    let cells = spec.cells()?;
    for (i, cfg) in cells.iter().enumerate() {
        build_model_with(cfg, cal, &spec.model).map_err(|e| ExperimentError::Cell {
            cell: i,
            desc: describe(cfg),
            source: SmcError::Model(e),
        })?;
    }

    let header = JournalHeader { fingerprint: spec.fingerprint(cal)?, cells: cells.len() };
    let jpath = journal_path(out);
    let mut done = read_journal(&jpath, &header)?;
    // rewrite the journal without any torn tail before appending
    let mut journal = File::create(&jpath)?;
    writeln!(journal, "{}", serde_json::to_string(&header).expect("serialisable"))?;
    for (cell, row) in &done {
        writeln!(
            journal,
            "{}",
            serde_json::to_string(&JournalEntry { cell: *cell, row: row.clone() }).expect("serialisable")
        )?;
    }
    journal.sync_data()?;
    drop(journal);
    let journal = Mutex::new(OpenOptions::new().append(true).open(&jpath)?);

    let todo: Vec<usize> = (0..cells.len()).filter(|i| !done.contains_key(i)).collect();
    let work = || {
        todo.par_iter()
            .map(|&i| -> Result<(usize, ResultRow), ExperimentError> {
                let row = run_cell(spec, cal, i, &cells[i]).map_err(|source| ExperimentError::Cell {
                    cell: i,
                    desc: describe(&cells[i]),
                    source,
                })?;
                let line = serde_json::to_string(&JournalEntry { cell: i, row: row.clone() }).expect("serialisable");
                let mut j = journal.lock().expect("journal lock");
                writeln!(j, "{line}")?;
                j.flush()?;
                Ok((i, row))
            })
            .collect::<Vec<_>>()
    };
    let results = if opts.jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| config_err(e.to_string()))?
            .install(work)
    };
    // report the lowest failing cell so errors do not depend on scheduling
    for r in results {
        let (i, row) = r?;
        done.insert(i, row);
    }
    let rows: Vec<ResultRow> = done.into_values().collect();
    write_results(out, &rows)?;
    fs::remove_file(&jpath)?;
    Ok(rows)
}

fn describe(cfg: &FactorConfig) -> String {
    format!(
        "n_forwarding_threads={} name_length={} payload_len={} send_interval={} queue_capacity={} numa_placement={}",
        cfg.n_forwarding_threads,
        cfg.name_length,
        cfg.payload_len,
        cfg.send_interval,
        cfg.queue_capacity,
        cfg.numa_placement
    )
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_data()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Results CSV text: schema line, header, one line per row.
pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>, ExperimentError> {
    let mut buf = format!("{RESULTS_SCHEMA}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(result_columns())?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Column names of the results CSV.
pub fn result_columns() -> [&'static str; 12] {
    [
        "n_forwarding_threads",
        "name_length",
        "payload_len",
        "send_interval",
        "queue_capacity",
        "numa_placement",
        "p_hat",
        "mean_ratio",
        "stderr",
        "n_samples",
        "drops_total",
        "runtime_s",
    ]
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), ExperimentError> {
    write_atomic(path, &results_csv(rows)?)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    let text = fs::read_to_string(path)?;
    let err = |msg: String| ExperimentError::Results { path: path.to_path_buf(), msg };
    let body = text
        .strip_prefix(RESULTS_SCHEMA)
        .and_then(|b| b.strip_prefix('\n'))
        .ok_or_else(|| err(format!("missing schema line {RESULTS_SCHEMA:?}")))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    if r.headers()?.iter().ne(result_columns()) {
        return Err(err("unexpected columns".into()));
    }
    r.deserialize().map(|row| row.map_err(|e| err(e.to_string()))).collect()
}
