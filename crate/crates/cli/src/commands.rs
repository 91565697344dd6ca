//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use qruns::dist::{pmf_full, Method, RunSpec};
use qruns::infer::{lr_interval_with, mle_with, Likelihood, Sample};
use qruns::mc::{
    run_study, se_rmse_ratio, write_plot_csv, write_replicates_csv, write_report_csv, StudyConfig,
};
use qruns::meanvar::{mean_closed, variance_closed, IndicatorTable};
use qruns::moments::{central_moments_and_shape, raw_moments};
use qruns::oracle::enumerate;
use qruns::sim::{count_exact_runs, generate_sequence, SeededRng};
use qruns::{Error, ModelParams};

use crate::output::{Field, Format, Report, Table};
use crate::ModelArgs;

/// Message and process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Self::usage(format!("{}: {err}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Parse { .. } | Error::EnumerationTooLarge(_) => 2,
            Error::Normalization { .. } | Error::Numerical(_) => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn model(args: &ModelArgs) -> CliResult<(RunSpec, ModelParams)> {
    Ok((
        RunSpec::new(args.n, args.k)?,
        ModelParams::new(args.theta, args.q)?,
    ))
}

fn parse_method(name: &str) -> CliResult<Vec<Method>> {
    if name == "all" {
        return Ok(vec![Method::Exact, Method::Recursive, Method::Corollary]);
    }
    name.parse::<Method>().map(|m| vec![m]).map_err(|_| {
        CliError::usage(format!(
            "unknown method {name:?}; expected exact, recursive, corollary, classical or all"
        ))
    })
}

pub fn pmf(args: &ModelArgs, method: &str) -> CliResult<Report> {
    let (spec, params) = model(args)?;
    let mut methods = parse_method(method)?;
    let classical_ok = params.q().is_classical();
    if methods == [Method::Classical] && !classical_ok {
        return Err(Error::Domain("the classical method requires q = 1".into()).into());
    }
    if methods.len() > 1 && classical_ok {
        methods.push(Method::Classical);
    }
    let pmfs = methods
        .iter()
        .map(|&m| pmf_full(spec, params, m))
        .collect::<Result<Vec<_>, _>>()?;
    let support = spec.support_max();
    let names: Vec<&'static str> = methods.iter().map(|m| m.name()).collect();
    let multi = methods.len() > 1;
    let mut header = vec!["x"];
    if multi {
        header.extend(&names);
        header.push("max_deviation");
    } else {
        header.push("p");
    }
    let mut table = Table::new(&header);
    let mut rows = Vec::new();
    let mut overall = 0.0f64;
    for x in 0..=support {
        let values: Vec<f64> = pmfs.iter().map(|p| p.get(x)).collect();
        let mut row: Vec<Field> = vec![x.into()];
        row.extend(values.iter().map(|&v| Field::from(v)));
        let mut obj = serde_json::Map::new();
        obj.insert("x".into(), json!(x));
        if multi {
            let hi = values.iter().cloned().fold(f64::MIN, f64::max);
            let lo = values.iter().cloned().fold(f64::MAX, f64::min);
            let dev = hi - lo;
            overall = overall.max(dev);
            row.push(dev.into());
            for (name, v) in names.iter().zip(&values) {
                obj.insert((*name).into(), json!(v));
            }
            obj.insert("max_deviation".into(), json!(dev));
        } else {
            obj.insert("p".into(), json!(values[0]));
        }
        table.push(row);
        rows.push(serde_json::Value::Object(obj));
    }
    let mut payload = json!({
        "n": spec.n(),
        "k": spec.k(),
        "theta": params.theta(),
        "q": params.q().value(),
        "methods": names,
        "rows": rows,
    });
    if multi {
        payload["max_deviation"] = json!(overall);
    }
    Ok(Report::new(payload, table))
}

pub fn moments(args: &ModelArgs, order: usize) -> CliResult<Report> {
    let (spec, params) = model(args)?;
    if order < 2 {
        return Err(Error::Domain(format!("moment order must be at least 2, got {order}")).into());
    }
    let ms = central_moments_and_shape(spec, params, order);
    let mean = mean_closed(spec, params);
    let var = variance_closed(spec, params);
    let mean_dev = (mean - ms.nu[1]).abs();
    let var_dev = (var - ms.xi[2]).abs();
    let degenerate = ms.degenerate_variance();
    let mut table = Table::new(&["quantity", "r", "value"]);
    for (name, values) in [("rho", &ms.rho), ("nu", &ms.nu), ("xi", &ms.xi)] {
        for (r, &v) in values.iter().enumerate() {
            table.push(vec![name.into(), r.into(), v.into()]);
        }
    }
    let scalars: [(&str, Field); 7] = [
        ("gamma1", ms.gamma1.into()),
        ("gamma2", ms.gamma2.into()),
        ("degenerate_variance", degenerate.into()),
        ("mean_closed", mean.into()),
        ("variance_closed", var.into()),
        ("mean_deviation", mean_dev.into()),
        ("variance_deviation", var_dev.into()),
    ];
    for (name, v) in scalars {
        table.push(vec![name.into(), Field::Empty, v]);
    }
    let payload = json!({
        "n": spec.n(),
        "k": spec.k(),
        "theta": params.theta(),
        "q": params.q().value(),
        "order": order,
        "rho": ms.rho,
        "nu": ms.nu,
        "xi": ms.xi,
        "gamma1": ms.gamma1,
        "gamma2": ms.gamma2,
        "degenerate_variance": degenerate,
        "mean_closed": mean,
        "variance_closed": var,
        "mean_deviation": mean_dev,
        "variance_deviation": var_dev,
    });
    Ok(Report::new(payload, table))
}

pub fn simulate(
    args: &ModelArgs,
    draws: usize,
    seed: u64,
    sequences: bool,
    save: Option<&Path>,
) -> CliResult<Report> {
    let (spec, params) = model(args)?;
    let mut rng = SeededRng::new(seed);
    let seqs: Vec<_> = (0..draws)
        .map(|_| generate_sequence(spec.n(), params, &mut rng))
        .collect();
    let counts: Vec<usize> = seqs.iter().map(|s| count_exact_runs(s, spec.k())).collect();
    if let Some(path) = save {
        let sample = Sample::new(spec, params.q(), counts.clone())?;
        fs::write(path, sample.to_text()).map_err(|e| CliError::io(path, e))?;
    }
    let mut payload = json!({
        "n": spec.n(),
        "k": spec.k(),
        "theta": params.theta(),
        "q": params.q().value(),
        "draws": draws,
        "rng": SeededRng::ALGORITHM,
        "counts": counts,
    });
    let table = if sequences {
        let strings: Vec<String> = seqs.iter().map(|s| s.to_string()).collect();
        let mut t = Table::new(&["draw", "sequence", "count"]);
        for (i, (s, c)) in strings.iter().zip(&counts).enumerate() {
            t.push(vec![i.into(), s.clone().into(), (*c).into()]);
        }
        payload["sequences"] = json!(strings);
        t
    } else {
        let mut t = Table::new(&["draw", "count"]);
        for (i, c) in counts.iter().enumerate() {
            t.push(vec![i.into(), (*c).into()]);
        }
        t
    };
    Ok(Report::new(payload, table).with_seed(seed))
}

pub fn mle(input: &Path, alpha: f64) -> CliResult<Report> {
    let text = fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let sample = Sample::parse(&text)?;
    if sample.is_empty() {
        return Err(Error::Domain("sample file holds no counts".into()).into());
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1)")).into());
    }
    let likelihood = Likelihood::new(&sample);
    let est = mle_with(&likelihood)?;
    let ci = lr_interval_with(&likelihood, &est, alpha)?;
    let header = [
        "n",
        "k",
        "q",
        "N",
        "theta_hat",
        "log_likelihood",
        "lower",
        "upper",
        "level",
        "mle_lower",
        "mle_upper",
        "ci_lower",
        "ci_upper",
        "ci_disconnected",
        "floored",
    ];
    let mut table = Table::new(&header);
    table.push(vec![
        sample.spec.n().into(),
        sample.spec.k().into(),
        sample.q.value().into(),
        sample.len().into(),
        est.theta_hat.into(),
        est.log_likelihood.into(),
        ci.lower.into(),
        ci.upper.into(),
        ci.level.into(),
        est.at_lower_boundary.into(),
        est.at_upper_boundary.into(),
        ci.lower_at_boundary.into(),
        ci.upper_at_boundary.into(),
        ci.disconnected.into(),
        est.floored.into(),
    ]);
    let payload = json!({
        "n": sample.spec.n(),
        "k": sample.spec.k(),
        "q": sample.q.value(),
        "N": sample.len(),
        "alpha": alpha,
        "estimate": est,
        "interval": ci,
    });
    Ok(Report::new(payload, table))
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Use the full published grid.
    #[arg(long)]
    paper_grid: bool,
    /// TOML file with q, n, k, theta, sample_size and optional replicates,
    /// alpha, seed.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    /// Sequences per sample (N).
    #[arg(long, value_delimiter = ',')]
    sample_size: Vec<usize>,
    /// Replicates per cell (M).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.csv, replicates.csv and plot.csv.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

impl StudyArgs {
    fn config(&self) -> CliResult<StudyConfig> {
        let grid_flags = !(self.q.is_empty()
            && self.n.is_empty()
            && self.k.is_empty()
            && self.theta.is_empty()
            && self.sample_size.is_empty());
        let sources = usize::from(self.paper_grid)
            + usize::from(self.config.is_some())
            + usize::from(grid_flags);
        if sources != 1 {
            return Err(CliError::usage(
                "give exactly one of --paper-grid, --config or the grid flags --q/--n/--k/--theta/--sample-size",
            ));
        }
        let mut config = if self.paper_grid {
            StudyConfig::paper_grid()
        } else if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str(&text).map_err(|e| CliError {
                code: 2,
                message: format!("{}: {e}", path.display()),
            })?
        } else {
            let missing: Vec<&str> = [
                ("--q", self.q.is_empty()),
                ("--n", self.n.is_empty()),
                ("--k", self.k.is_empty()),
                ("--theta", self.theta.is_empty()),
                ("--sample-size", self.sample_size.is_empty()),
            ]
            .iter()
            .filter(|(_, empty)| *empty)
            .map(|(name, _)| *name)
            .collect();
            if !missing.is_empty() {
                return Err(CliError::usage(format!(
                    "missing grid flags: {}",
                    missing.join(", ")
                )));
            }
            let mut c = StudyConfig::paper_grid();
            c.q = self.q.clone();
            c.n = self.n.clone();
            c.k = self.k.clone();
            c.theta = self.theta.clone();
            c.sample_size = self.sample_size.clone();
            c
        };
        if let Some(m) = self.m {
            config.replicates = m;
        }
        if let Some(a) = self.alpha {
            config.alpha = a;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

pub fn mcstudy(args: &StudyArgs, format: Format) -> CliResult<Report> {
    let config = args.config()?;
    let study = run_study(&config)?;
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| {
            let path = dir.join(name);
            let mut buf = Vec::new();
            f(&mut buf)
                .and_then(|_| fs::write(&path, buf))
                .map_err(|e| CliError::io(&path, e))
        };
        write("report.csv", &|b| write_report_csv(&study.reports, b))?;
        write("replicates.csv", &|b| {
            write_replicates_csv(&study.replicates, b)
        })?;
        write("plot.csv", &|b| write_plot_csv(&study.reports, b))?;
    }
    let header = [
        "q",
        "n",
        "k",
        "theta0",
        "N",
        "M",
        "bias",
        "se",
        "rmse",
        "cp",
        "mw",
        "boundary_rate",
    ];
    let mut table = Table::new(&header);
    let mut rows = Vec::new();
    for r in &study.reports {
        let c = &r.cell;
        let used = r.replicates - r.failures;
        table.push(vec![
            c.q.into(),
            c.n.into(),
            c.k.into(),
            c.theta0.into(),
            c.sample_size.into(),
            used.into(),
            r.bias.into(),
            r.se.into(),
            r.rmse.into(),
            r.cp.into(),
            r.mw.into(),
            r.boundary_rate.into(),
        ]);
        if format == Format::Json {
            rows.push(json!({
                "q": c.q, "n": c.n, "k": c.k, "theta0": c.theta0, "N": c.sample_size, "M": used,
                "failures": r.failures, "bias": r.bias, "se": r.se, "rmse": r.rmse,
                "se_rmse": se_rmse_ratio(r), "cp": r.cp, "mw": r.mw, "boundary_rate": r.boundary_rate,
            }));
        }
    }
    let payload = json!({ "config": config, "rng": SeededRng::ALGORITHM, "reports": rows });
    Ok(Report::new(payload, table).with_seed(config.seed))
}

pub fn verify(args: &ModelArgs, tolerance: f64) -> CliResult<(Report, bool)> {
    let (spec, params) = model(args)?;
    let oracle = enumerate(spec, params)?;
    let mut checks: Vec<(String, f64)> = Vec::new();
    let max_dev = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let mut methods = vec![Method::Exact, Method::Recursive, Method::Corollary];
    if params.q().is_classical() {
        methods.push(Method::Classical);
    }
    let support = spec.support_max();
    for m in methods {
        let pmf = pmf_full(spec, params, m)?;
        checks.push((
            format!("pmf_{}", m.name()),
            max_dev(pmf.probs(), &oracle.pmf[..=support]),
        ));
    }
    let oracle_mean = oracle.mean();
    let oracle_var: f64 = oracle
        .pmf
        .iter()
        .enumerate()
        .map(|(x, p)| (x as f64 - oracle_mean).powi(2) * p)
        .sum();
    checks.push((
        "mean_closed".into(),
        (mean_closed(spec, params) - oracle_mean).abs(),
    ));
    checks.push((
        "variance_closed".into(),
        (variance_closed(spec, params) - oracle_var).abs(),
    ));
    let nu = raw_moments(spec, params, 4);
    let oracle_nu: Vec<f64> = (0..=4)
        .map(|r| {
            oracle
                .pmf
                .iter()
                .enumerate()
                .map(|(x, p)| (x as f64).powi(r) * p)
                .sum()
        })
        .collect();
    checks.push(("raw_moments".into(), max_dev(&nu, &oracle_nu)));
    if spec.n() >= spec.k() {
        let table = IndicatorTable::new(spec, params);
        checks.push((
            "indicator_means".into(),
            max_dev(&table.mu, &oracle.indicator_means),
        ));
        let starts = oracle.starts();
        let mut dev = 0.0f64;
        for i in 1..=starts {
            for j in i + 1..=starts {
                let formula = table.mu2.get(&(i, j)).copied().unwrap_or(0.0);
                dev = dev.max((formula - oracle.indicator_product(i, j)).abs());
            }
        }
        checks.push(("indicator_products".into(), dev));
    }
    checks.push((
        "oracle_total_probability".into(),
        (oracle.total_probability - 1.0).abs(),
    ));
    let worst = checks.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let ok = worst <= tolerance;
    let mut table = Table::new(&["check", "max_deviation", "pass"]);
    for (name, d) in &checks {
        table.push(vec![
            name.as_str().into(),
            (*d).into(),
            (*d <= tolerance).into(),
        ]);
    }
    let rows: Vec<_> = checks
        .iter()
        .map(|(name, d)| json!({"check": name, "max_deviation": d, "pass": *d <= tolerance}))
        .collect();
    let payload = json!({
        "n": spec.n(),
        "k": spec.k(),
        "theta": params.theta(),
        "q": params.q().value(),
        "tolerance": tolerance,
        "checks": rows,
        "max_deviation": worst,
        "pass": ok,
    });
    Ok((Report::new(payload, table), ok))
}
