//! Reproducible experiment harness: one experiment per desk-verifiable
//! claim, each fully determined by `(experiment id, parameter grid, master
//! seed)`. Outputs are a CSV table (one row per grid cell or trial, each
//! carrying its own replay seed), a JSON summary, and a gnuplot script that
//! plots the CSV. Re-running with the same config reproduces the CSV byte
//! for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::instances::InstanceError;
use crate::oracle::OracleError;
use crate::polyapprox::ApproxError;
use crate::probes::ProbeError;
use crate::solvers::SolverError;

pub mod e1;
pub mod e2;
pub mod e3;
pub mod e4;
pub mod e5;
pub mod e6;
pub mod e7;
pub mod e8;
pub mod e9;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("bad configuration value for '{key}': {message}")]
    BadConfig { key: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
    E9,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 9] = [
        ExperimentId::E1,
        ExperimentId::E2,
        ExperimentId::E3,
        ExperimentId::E4,
        ExperimentId::E5,
        ExperimentId::E6,
        ExperimentId::E7,
        ExperimentId::E8,
        ExperimentId::E9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::E1 => "E1",
            ExperimentId::E2 => "E2",
            ExperimentId::E3 => "E3",
            ExperimentId::E4 => "E4",
            ExperimentId::E5 => "E5",
            ExperimentId::E6 => "E6",
            ExperimentId::E7 => "E7",
            ExperimentId::E8 => "E8",
            ExperimentId::E9 => "E9",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentId::E1 => "CGNE matvec scaling in kappa and log(1/eps)",
            ExperimentId::E2 => "GMRES residual wall on Haar orthogonal systems",
            ExperimentId::E3 => "inverse-function approximation gap on split intervals",
            ExperimentId::E4 => "moment-matched indistinguishable pair pipeline",
            ExperimentId::E5 => "trace-inverse estimation accuracy",
            ExperimentId::E6 => "sphere concentration constants",
            ExperimentId::E7 => "lazy hidden-Haar oracle vs explicit Haar sampling",
            ExperimentId::E8 => "iterative refinement residual halving",
            ExperimentId::E9 => "CGNE on outlier spectra",
        }
    }
}

impl FromStr for ExperimentId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "E1" => Ok(ExperimentId::E1),
            "E2" => Ok(ExperimentId::E2),
            "E3" => Ok(ExperimentId::E3),
            "E4" => Ok(ExperimentId::E4),
            "E5" => Ok(ExperimentId::E5),
            "E6" => Ok(ExperimentId::E6),
            "E7" => Ok(ExperimentId::E7),
            "E8" => Ok(ExperimentId::E8),
            "E9" => Ok(ExperimentId::E9),
            other => Err(format!("unknown experiment id '{other}'")),
        }
    }
}

/// Flat `key=value` configuration with a master seed. Unset keys fall back
/// to each experiment's defaults.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub master_seed: u64,
    params: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new(id: ExperimentId, master_seed: u64) -> Self {
        ExperimentConfig {
            id,
            master_seed,
            params: BTreeMap::new(),
        }
    }

    /// Parse a flat `key=value` file body (one pair per line; `#` comments
    /// and blank lines ignored).
    pub fn with_params_text(mut self, text: &str) -> Result<Self, ExperimentError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ExperimentError::BadConfig {
                    key: format!("line {}", lineno + 1),
                    message: format!("expected key=value, got '{line}'"),
                });
            };
            self.params
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    fn parse<T: FromStr>(&self, key: &str, raw: &str) -> Result<T, ExperimentError>
    where
        T::Err: std::fmt::Display,
    {
        raw.parse::<T>().map_err(|e| ExperimentError::BadConfig {
            key: key.to_string(),
            message: e.to_string(),
        })
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize, ExperimentError> {
        match self.params.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64, ExperimentError> {
        match self.params.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn get_usize_list(
        &self,
        key: &str,
        default: &[usize],
    ) -> Result<Vec<usize>, ExperimentError> {
        match self.params.get(key) {
            Some(raw) => raw.split(',').map(|p| self.parse(key, p.trim())).collect(),
            None => Ok(default.to_vec()),
        }
    }

    pub fn get_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ExperimentError> {
        match self.params.get(key) {
            Some(raw) => raw.split(',').map(|p| self.parse(key, p.trim())).collect(),
            None => Ok(default.to_vec()),
        }
    }
}

/// The files one experiment produces.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub id: ExperimentId,
    pub csv: String,
    pub summary_json: String,
    pub plot_script: String,
}

impl ExperimentOutput {
    fn assemble<S: Serialize>(
        id: ExperimentId,
        header: &str,
        rows: &[String],
        summary: &S,
        plot_script: String,
    ) -> Self {
        let mut csv = String::with_capacity(rows.len() * 64 + header.len() + 1);
        csv.push_str(header);
        csv.push('\n');
        for row in rows {
            csv.push_str(row);
            csv.push('\n');
        }
        ExperimentOutput {
            id,
            csv,
            summary_json: serde_json::to_string_pretty(summary)
                .expect("summary serialization cannot fail"),
            plot_script,
        }
    }

    /// Write `E{k}_results.csv`, `E{k}_summary.json`, `E{k}_plot.txt`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let name = self.id.name();
        std::fs::write(dir.join(format!("{name}_results.csv")), &self.csv)?;
        std::fs::write(dir.join(format!("{name}_summary.json")), &self.summary_json)?;
        std::fs::write(dir.join(format!("{name}_plot.txt")), &self.plot_script)?;
        Ok(())
    }
}

/// Dispatch an experiment run. Returns the output files' contents; callers
/// decide whether to write them.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    Ok(match config.id {
        ExperimentId::E1 => e1::run(config)?.0,
        ExperimentId::E2 => e2::run(config)?.0,
        ExperimentId::E3 => e3::run(config)?.0,
        ExperimentId::E4 => e4::run(config)?.0,
        ExperimentId::E5 => e5::run(config)?.0,
        ExperimentId::E6 => e6::run(config)?.0,
        ExperimentId::E7 => e7::run(config)?.0,
        ExperimentId::E8 => e8::run(config)?.0,
        ExperimentId::E9 => e9::run(config)?.0,
    })
}

/// Map a function over items on a couple of worker threads, preserving
/// input order in the output. Cells are independent; aggregation order is
/// by index, never completion time.
pub(crate) fn parallel_map<T, U, F>(items: Vec<T>, threads: usize, f: F) -> Vec<U>
where
    T: Send + Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    let threads = threads.max(1).min(n);
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<U>>> =
        (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(&items[i]);
                *slots[i].lock().unwrap() = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}

/// Worker count for grid cells.
pub(crate) fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

pub(crate) fn gnuplot_preamble(title: &str, csv_name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# gnuplot script; expects {csv_name} in the working directory"
    );
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title '{title}'");
    s
}
