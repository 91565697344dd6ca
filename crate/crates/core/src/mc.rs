//! Monte Carlo study harness: simulate, estimate and summarize over a grid of
//! true parameters.
//!
//! Replicate `r` of cell `c` draws from the sub-stream
//! `(seed, (c << 32) | r)`, so results do not depend on scheduling. Replicates
//! run in parallel; aggregation walks them in index order.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{ExactKernel, RunSpec};
use crate::error::{Error, Result};
use crate::infer::{lr_interval_with, mle_with, ConfidenceInterval, Likelihood, MleResult, Sample};
use crate::qcalculus::{ModelParams, QReal};
use crate::sim::{sample_run_counts, SeededRng};

pub const DEFAULT_REPLICATES: usize = 200;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 42;

/// Full-factorial grid of true parameters plus replicate settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub q: Vec<f64>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub theta: Vec<f64>,
    /// Sequences per sample.
    pub sample_size: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl StudyConfig {
    /// q in {0.6, 0.8}, n in {11, 15, 20, 25}, theta in {0.05, ..., 0.95},
    /// k in {3, 5}, N in {100, 1000}.
    pub fn paper_grid() -> Self {
        StudyConfig {
            q: vec![0.6, 0.8],
            n: vec![11, 15, 20, 25],
            k: vec![3, 5],
            theta: (1..=19).map(|i| i as f64 / 20.0).collect(),
            sample_size: vec![100, 1000],
            replicates: DEFAULT_REPLICATES,
            alpha: DEFAULT_ALPHA,
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::domain("at least 2 replicates are needed"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!(
                "alpha = {} outside (0, 1)",
                self.alpha
            )));
        }
        let axes = [
            ("q", self.q.len()),
            ("n", self.n.len()),
            ("k", self.k.len()),
            ("theta", self.theta.len()),
            ("sample_size", self.sample_size.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, len)| *len == 0) {
            return Err(Error::domain(format!("grid axis {name} is empty")));
        }
        for &q in &self.q {
            QReal::new(q)?;
        }
        for &theta in &self.theta {
            ModelParams::new(theta, 1.0)?;
        }
        for &k in &self.k {
            RunSpec::new(0, k)?;
        }
        if self.sample_size.contains(&0) {
            return Err(Error::domain("sample size must be at least 1"));
        }
        Ok(())
    }

    /// Cells in row-major order over `(q, n, k, theta, sample_size)`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &q in &self.q {
            for &n in &self.n {
                for &k in &self.k {
                    for &theta0 in &self.theta {
                        for &sample_size in &self.sample_size {
                            cells.push(Cell {
                                id: cells.len(),
                                q,
                                n,
                                k,
                                theta0,
                                sample_size,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

/// One combination of true parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub id: usize,
    pub q: f64,
    pub n: usize,
    pub k: usize,
    pub theta0: f64,
    pub sample_size: usize,
}

/// Estimate and interval from one replicate, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub cell_id: usize,
    pub replicate: usize,
    pub outcome: std::result::Result<(MleResult, ConfidenceInterval), String>,
}

impl ReplicateRecord {
    /// `|`-separated diagnostic flags; empty when nothing is notable.
    pub fn flags(&self) -> String {
        match &self.outcome {
            Err(msg) => format!("failed: {msg}"),
            Ok((m, ci)) => {
                let flags = [
                    (m.at_lower_boundary, "mle_lower"),
                    (m.at_upper_boundary, "mle_upper"),
                    (ci.lower_at_boundary, "ci_lower"),
                    (ci.upper_at_boundary, "ci_upper"),
                    (ci.disconnected, "ci_disconnected"),
                    (m.floored, "floored"),
                ];
                flags
                    .iter()
                    .filter(|(on, _)| *on)
                    .map(|(_, name)| *name)
                    .collect::<Vec<_>>()
                    .join("|")
            }
        }
    }

    fn boundary(&self) -> bool {
        matches!(&self.outcome, Ok((m, ci)) if m.at_boundary() || ci.at_boundary())
    }
}

/// Summary statistics of one cell over its successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McReport {
    pub cell: Cell,
    pub replicates: usize,
    /// Replicates excluded because inference failed.
    pub failures: usize,
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
    pub cp: f64,
    pub mw: f64,
    pub boundary_rate: f64,
}

/// `SE / RMSE`; `None` when the RMSE is zero or undefined.
pub fn se_rmse_ratio(report: &McReport) -> Option<f64> {
    (report.rmse > 0.0).then(|| report.se / report.rmse)
}

/// Bias, SE, RMSE (all with denominator `M`), coverage, mean width and
/// boundary rate of a cell's replicates.
pub fn summarize(cell: Cell, records: &[ReplicateRecord]) -> McReport {
    let ok: Vec<(&MleResult, &ConfidenceInterval)> = records
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|(m, ci)| (m, ci)))
        .collect();
    let m = ok.len() as f64;
    let mean_hat = ok.iter().map(|(e, _)| e.theta_hat).sum::<f64>() / m;
    let se = (ok
        .iter()
        .map(|(e, _)| (e.theta_hat - mean_hat).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    let rmse = (ok
        .iter()
        .map(|(e, _)| (e.theta_hat - cell.theta0).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    let cp = ok.iter().filter(|(_, ci)| ci.contains(cell.theta0)).count() as f64 / m;
    let mw = ok.iter().map(|(_, ci)| ci.width()).sum::<f64>() / m;
    let boundary_rate = records.iter().filter(|r| r.boundary()).count() as f64 / m;
    McReport {
        cell,
        replicates: records.len(),
        failures: records.len() - ok.len(),
        bias: mean_hat - cell.theta0,
        se,
        rmse,
        cp,
        mw,
        boundary_rate,
    }
}

/// Aggregates plus every replicate, both in cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub reports: Vec<McReport>,
    pub replicates: Vec<ReplicateRecord>,
}

fn run_replicate(
    cell: &Cell,
    kernel: &ExactKernel,
    replicate: usize,
    config: &StudyConfig,
) -> ReplicateRecord {
    let spec = kernel.spec();
    let params = ModelParams::with_q(cell.theta0, kernel.q()).expect("validated config");
    let stream = ((cell.id as u64) << 32) | replicate as u64;
    let mut rng = SeededRng::substream(config.seed, stream);
    let counts = sample_run_counts(cell.sample_size, spec, params, &mut rng);
    let sample =
        Sample::new(spec, kernel.q(), counts).expect("simulated counts lie in the support");
    let likelihood = Likelihood::with_kernel(kernel.clone(), &sample);
    let outcome = mle_with(&likelihood)
        .and_then(|m| lr_interval_with(&likelihood, &m, config.alpha).map(|ci| (m, ci)))
        .map_err(|e| e.to_string());
    ReplicateRecord {
        cell_id: cell.id,
        replicate,
        outcome,
    }
}

/// Runs every cell of the grid. Uses the ambient rayon pool.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let cells = config.cells();
    let kernels: Vec<ExactKernel> = cells
        .par_iter()
        .map(|c| {
            let spec = RunSpec::new(c.n, c.k).expect("validated config");
            ExactKernel::new(spec, QReal::new(c.q).expect("validated config"))
        })
        .collect();
    let m = config.replicates;
    let replicates: Vec<ReplicateRecord> = (0..cells.len() * m)
        .into_par_iter()
        .map(|idx| {
            let (c, r) = (idx / m, idx % m);
            run_replicate(&cells[c], &kernels[c], r, config)
        })
        .collect();
    let reports = cells
        .iter()
        .zip(replicates.chunks(m))
        .map(|(cell, records)| summarize(*cell, records))
        .collect();
    Ok(StudyResult {
        config: config.clone(),
        reports,
        replicates,
    })
}

/// Shortest round-trip decimal; empty for non-finite values.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

pub const REPORT_HEADER: &str = "q,n,k,theta0,N,M,bias,se,rmse,cp,mw,boundary_rate";
pub const REPLICATE_HEADER: &str = "cell_id,replicate,theta_hat,ci_lower,ci_upper,flags";
pub const PLOT_HEADER: &str = "measure,q,n,k,N,theta0,value";

pub fn write_report_csv(reports: &[McReport], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in reports {
        let c = &r.cell;
        let fields = [
            format_number(c.q),
            c.n.to_string(),
            c.k.to_string(),
            format_number(c.theta0),
            c.sample_size.to_string(),
            (r.replicates - r.failures).to_string(),
            format_number(r.bias),
            format_number(r.se),
            format_number(r.rmse),
            format_number(r.cp),
            format_number(r.mw),
            format_number(r.boundary_rate),
        ];
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn write_replicates_csv(records: &[ReplicateRecord], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{REPLICATE_HEADER}")?;
    for r in records {
        let (hat, lo, hi) = match &r.outcome {
            Ok((m, ci)) => (m.theta_hat, ci.lower, ci.upper),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        };
        let flags = r.flags().replace([',', '\n', '"'], " ");
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.cell_id,
            r.replicate,
            format_number(hat),
            format_number(lo),
            format_number(hi),
            flags
        )?;
    }
    Ok(())
}

/// Long-format table of SE/RMSE, CP and MW against `theta0`.
pub fn write_plot_csv(reports: &[McReport], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{PLOT_HEADER}")?;
    for (measure, value) in [
        (
            "se_rmse",
            (|r: &McReport| se_rmse_ratio(r).unwrap_or(f64::NAN)) as fn(&McReport) -> f64,
        ),
        ("cp", |r| r.cp),
        ("mw", |r| r.mw),
    ] {
        for r in reports {
            let c = &r.cell;
            writeln!(
                out,
                "{measure},{},{},{},{},{},{}",
                format_number(c.q),
                c.n,
                c.k,
                c.sample_size,
                format_number(c.theta0),
                format_number(value(r))
            )?;
        }
    }
    Ok(())
}
