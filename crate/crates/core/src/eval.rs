//! Benchmark harness: recovery metrics, log-spaced lambda grids, seeded
//! method sweeps, paired significance testing, and CSV export.
//!
//! A sweep is organized for paired comparisons: repeat k simulates one cloudy
//! stack with seed `base_seed + k` and hands that same stack to every
//! (method, lambda) combination, so per-repeat differences between pipelines
//! are attributable to the pipeline rather than to cloud luck. Recovery is
//! scored against the known ground truth with the relative Frobenius error,
//! and wall time is measured around the solve alone (plus masking and
//! completion for `+mc` variants), never around simulation or scoring.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::imageio::{self, GrayImage};
use crate::linalg::Mat;
use crate::sim::{self, CloudSimConfig};
use crate::solvers::{self, SolverConfig, DEFAULT_MASK_GAMMA, DEFAULT_MC_BETA};
use crate::{Error, Result};

/// Grid size used when the caller does not pick one.
pub const DEFAULT_GRID_COUNT: usize = 51;

// ===== Methods and pipelines =====

/// Decomposition backends a sweep can benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Rpca,
    Atm,
    Aatm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rpca => "rpca",
            Method::Atm => "atm",
            Method::Aatm => "aatm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One benchmarked pipeline: a decomposition, optionally refined by masking
/// the recovered cloud and completing the background over trusted pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodVariant {
    pub method: Method,
    pub with_mc: bool,
}

impl MethodVariant {
    pub fn new(method: Method, with_mc: bool) -> Self {
        MethodVariant { method, with_mc }
    }

    /// Short label used in CLI method lists: `rpca`, `aatm+mc`, ...
    pub fn label(self) -> String {
        if self.with_mc {
            format!("{}+mc", self.method)
        } else {
            self.method.to_string()
        }
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for MethodVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, with_mc) = match s.strip_suffix("+mc") {
            Some(base) => (base, true),
            None => (s, false),
        };
        let method = match name {
            "rpca" => Method::Rpca,
            "atm" => Method::Atm,
            "aatm" => Method::Aatm,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown method {s:?}; expected rpca, atm or aatm, optionally with a +mc suffix"
                )))
            }
        };
        Ok(MethodVariant { method, with_mc })
    }
}

// ===== Recovery metrics =====

/// Relative recovery error `||I_hat - I||_F / ||I||_F` against a reference
/// that must not be all zero. Shapes must match.
pub fn recovery_error(i_hat: &Mat, i: &Mat) -> Result<f64> {
    if i_hat.shape() != i.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: estimate is {:?}, reference is {:?}",
            i_hat.shape(),
            i.shape()
        )));
    }
    let denom = i.norm();
    if denom == 0.0 {
        return Err(Error::invalid("reference is all zero; relative error undefined"));
    }
    Ok((i_hat - i).norm() / denom)
}

/// Intersection over union of two binary cloud masks (1 marks cloud).
/// Two masks with no cloud at all agree perfectly and score 1.
pub fn mask_iou(a: &Mat, b: &Mat) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: masks are {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        if (x != 0.0 && x != 1.0) || (y != 0.0 && y != 1.0) {
            return Err(Error::invalid("masks must contain only 0 or 1 entries"));
        }
        let (x, y) = (x == 1.0, y == 1.0);
        intersection += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(intersection as f64 / union as f64)
    }
}

// ===== Lambda grids =====

/// Log-equispaced grid of `count` sparsity weights spanning `0.1/sqrt(d)` to
/// `10/sqrt(d)`, one decade on each side of the classic default `1/sqrt(d)`.
/// `count` must be odd and at least 3 so the default lands exactly on the
/// middle grid point; `d` is the pixel count per image.
pub fn default_lambda_grid(d: usize, count: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("pixel count d must be >= 1"));
    }
    if count < 3 || count % 2 == 0 {
        return Err(Error::invalid(format!(
            "grid count must be odd and >= 3, got {count}"
        )));
    }
    let mid = 1.0 / (d as f64).sqrt();
    let span = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            let exponent = -1.0 + 2.0 * i as f64 / span;
            10f64.powf(exponent) * mid
        })
        .collect())
}

// ===== Sweep specification =====

/// Everything needed to reproduce one benchmark sweep.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    /// Cloud-free reference image; every simulated observation derives from it.
    pub ground_truth: GrayImage,
    /// Stack depth: simulated observations per repeat.
    pub n: usize,
    /// Cloud generator knobs. Width, height and seed are overwritten per run.
    pub sim: CloudSimConfig,
    /// Pipelines to benchmark.
    pub methods: Vec<MethodVariant>,
    /// Sparsity weights to try, strictly increasing.
    pub lambda_grid: Vec<f64>,
    /// Fresh simulated stacks per pipeline/lambda combination (>= 1).
    pub repeats: usize,
    /// Repeat k simulates with seed `base_seed + k` (wrapping).
    pub base_seed: u64,
}

impl TrialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("stack size n must be >= 1"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::invalid("lambda grid must not be empty"));
        }
        for pair in self.lambda_grid.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::invalid("lambda grid must be strictly increasing"));
            }
        }
        if !self
            .lambda_grid
            .iter()
            .all(|l| l.is_finite() && *l > 0.0)
        {
            return Err(Error::invalid("lambda grid entries must be positive and finite"));
        }
        if self.ground_truth.pixels().iter().all(|&p| p == 0.0) {
            return Err(Error::invalid(
                "ground truth is all zero; relative recovery error is undefined",
            ));
        }
        let mut sim = self.sim.clone();
        sim.width = self.ground_truth.width();
        sim.height = self.ground_truth.height();
        sim.validate()
    }
}

/// One solver run inside a sweep. Field order mirrors the CSV columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: Method,
    pub with_mc: bool,
    pub lambda: f64,
    pub repeat: usize,
    /// Relative recovery error of the background estimate vs ground truth.
    pub r: f64,
    /// Wall time of the solve (plus mask and completion for `+mc`).
    pub seconds: f64,
    pub converged: bool,
}

/// Per (method, with_mc, lambda) summary across repeats. Standard deviations
/// are sample standard deviations; a single repeat reports 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub with_mc: bool,
    pub lambda: f64,
    pub r_mean: f64,
    pub r_std: f64,
    pub sec_mean: f64,
    pub sec_std: f64,
}

/// Sweep output: one record per (repeat, pipeline, lambda) plus aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepReport {
    /// Builds a report, grouping aggregates by (method, with_mc, lambda) in
    /// first-appearance order.
    pub fn from_records(records: Vec<SweepRecord>) -> Self {
        let aggregates = compute_aggregates(&records);
        SweepReport { records, aggregates }
    }

    /// Recovery errors of one pipeline at one grid value, ordered by repeat.
    /// `lambda` is matched exactly; pass the same value stored in the records.
    pub fn r_values(&self, method: Method, with_mc: bool, lambda: f64) -> Vec<f64> {
        let mut paired: Vec<(usize, f64)> = self
            .records
            .iter()
            .filter(|rec| rec.method == method && rec.with_mc == with_mc && rec.lambda == lambda)
            .map(|rec| (rec.repeat, rec.r))
            .collect();
        paired.sort_by_key(|&(repeat, _)| repeat);
        paired.into_iter().map(|(_, r)| r).collect()
    }

    pub fn aggregate_for(&self, method: Method, with_mc: bool, lambda: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.with_mc == with_mc && a.lambda == lambda)
    }
}

/// Groups records by (method, with_mc, lambda) in first-appearance order and
/// summarizes r and wall time. Exposed so callers can verify that stored
/// aggregates are recomputable from the records alone.
pub fn compute_aggregates(records: &[SweepRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(Method, bool, f64)> = Vec::new();
    for rec in records {
        let key = (rec.method, rec.with_mc, rec.lambda);
        if !keys.iter().any(|k| *k == key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, with_mc, lambda)| {
            let group: Vec<&SweepRecord> = records
                .iter()
                .filter(|rec| rec.method == method && rec.with_mc == with_mc && rec.lambda == lambda)
                .collect();
            let rs: Vec<f64> = group.iter().map(|rec| rec.r).collect();
            let secs: Vec<f64> = group.iter().map(|rec| rec.seconds).collect();
            Aggregate {
                method,
                with_mc,
                lambda,
                r_mean: mean(&rs),
                r_std: sample_std(&rs),
                sec_mean: mean(&secs),
                sec_std: sample_std(&secs),
            }
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

// ===== Running sweeps =====

/// Runs every (pipeline, lambda) combination against `repeats` freshly
/// simulated stacks and scores each run against the ground truth.
///
/// Repeat k seeds the simulator with `base_seed + k` and reuses the same
/// stack for every combination, pairing the comparisons. `+mc` pipelines
/// mask the recovered cloud (gamma 0.8), complete the background over the
/// trusted pixels, and are scored on the completed matrix. Non-convergence
/// is reported through the record's flag, never as an error.
pub fn run_sweep(spec: &TrialSpec) -> Result<SweepReport> {
    spec.validate()?;
    let truth_stack = vec![spec.ground_truth.clone(); spec.n];
    let truth = imageio::stack_to_matrix(&truth_stack)?;
    let alpha = solvers::default_mc_alpha(truth.nrows());

    let capacity = spec.methods.len() * spec.lambda_grid.len() * spec.repeats;
    let mut records = Vec::with_capacity(capacity);
    for repeat in 0..spec.repeats {
        let mut sim_cfg = spec.sim.clone();
        sim_cfg.seed = spec.base_seed.wrapping_add(repeat as u64);
        let stack = sim::simulate_stack(&spec.ground_truth, spec.n, &sim_cfg)?;
        for &variant in &spec.methods {
            for &lambda in &spec.lambda_grid {
                let cfg = SolverConfig::new(lambda);
                let start = Instant::now();
                let dec = match variant.method {
                    Method::Rpca => solvers::rpca(&stack.d, &cfg)?,
                    Method::Atm => solvers::atm(&stack.d, &cfg)?,
                    Method::Aatm => solvers::aatm(&stack.d, &cfg)?,
                };
                let mut converged = dec.converged;
                let recovered = if variant.with_mc {
                    let mask = solvers::cloud_mask(&dec.cloud(), DEFAULT_MASK_GAMMA);
                    let fill =
                        solvers::matrix_complete(&stack.d, &mask, alpha, DEFAULT_MC_BETA, &cfg)?;
                    converged &= fill.converged;
                    fill.b
                } else {
                    dec.l
                };
                let seconds = start.elapsed().as_secs_f64();
                let r = recovery_error(&recovered, &truth)?;
                records.push(SweepRecord {
                    method: variant.method,
                    with_mc: variant.with_mc,
                    lambda,
                    repeat,
                    r,
                    seconds,
                    converged,
                });
            }
        }
    }
    Ok(SweepReport::from_records(records))
}

// ===== Significance testing =====

/// Outcome of a one-sided paired comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestOutcome {
    /// One-sided p-value for the alternative `mean(x - y) > 0`.
    pub p_value: f64,
    /// Lower end of the one-sided (1 - alpha) confidence interval for the
    /// mean difference.
    pub ci_lower: f64,
    /// True when `p_value < alpha`.
    pub reject: bool,
}

/// Paired Student t-test of H0 `mean(x - y) <= 0` against H1 `mean(x - y) > 0`
/// with m - 1 degrees of freedom.
///
/// Zero-variance differences short-circuit: a strictly positive mean gives
/// p = 0, strictly negative gives p = 1, all-zero differences give p = 0.5,
/// and `ci_lower` collapses to the mean itself.
pub fn paired_t_test_onesided(x: &[f64], y: &[f64], alpha: f64) -> Result<TTestOutcome> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("need at least two paired samples"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("paired samples must be finite"));
    }
    let m = diffs.len() as f64;
    let mean_d = mean(&diffs);
    let s = sample_std(&diffs);
    if s == 0.0 {
        let p_value = if mean_d > 0.0 {
            0.0
        } else if mean_d < 0.0 {
            1.0
        } else {
            0.5
        };
        return Ok(TTestOutcome {
            p_value,
            ci_lower: mean_d,
            reject: p_value < alpha,
        });
    }
    let se = s / m.sqrt();
    let t = mean_d / se;
    let dist = StudentsT::new(0.0, 1.0, m - 1.0).expect("m >= 2 gives valid freedom");
    let p_value = 1.0 - dist.cdf(t);
    let t_crit = dist.inverse_cdf(1.0 - alpha);
    Ok(TTestOutcome {
        p_value,
        ci_lower: mean_d - t_crit * se,
        reject: p_value < alpha,
    })
}

// ===== CSV export =====

/// Sibling path holding the aggregate table: `out/sweep.csv` maps to
/// `out/sweep_agg.csv`.
pub fn aggregate_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_agg.csv"))
}

/// Writes the per-run records to `path` as CSV and the aggregates to the
/// sibling `<stem>_agg.csv`. Floats carry 9 significant digits. An empty
/// report produces header-only files.
pub fn export_report(report: &SweepReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_records_csv(&report.records, path)?;
    write_aggregates_csv(&report.aggregates, &aggregate_path(path))
}

fn write_records_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "method,with_mc,lambda,repeat,r,seconds,converged").map_err(io_err)?;
    for rec in records {
        writeln!(
            w,
            "{},{},{:.8e},{},{:.8e},{:.8e},{}",
            rec.method, rec.with_mc, rec.lambda, rec.repeat, rec.r, rec.seconds, rec.converged
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn write_aggregates_csv(aggregates: &[Aggregate], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "method,with_mc,lambda,r_mean,r_std,sec_mean,sec_std").map_err(io_err)?;
    for agg in aggregates {
        writeln!(
            w,
            "{},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            agg.method, agg.with_mc, agg.lambda, agg.r_mean, agg.r_std, agg.sec_mean, agg.sec_std
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

// ===== Tests =====
