//! Seeded optimizer runs, learning-rate grid searches, comparisons and
//! CSV/JSON output.
//!
//! Row `k` of a run describes the iterate after `k` updates: its full training
//! objective and the norm of the oracle sample queried there. Oracle query
//! `k` is always issued at that iterate, so a run touches queries `0..=T`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{self, Baseline, BaselineConfig, BaselineKind};
use crate::cocob_backprop::{CocobBackprop, DEFAULT_ALPHA};
use crate::coin_betting::{suboptimality_bound, BoundCertificate, Cocob, IterateSelection, PermissiveCocob};
use crate::problems::{build_problem, Problem};
use crate::{Error, Optimizer, Result};

pub const OPTIMIZER_NAMES: [&str; 7] = ["cocob", "cocob-backprop", "sgd", "adagrad", "rmsprop", "adadelta", "adam"];

/// Seeds the random-index draw, independent of the problem's oracle streams.
const SELECTION_STREAM: u64 = 0x7365_6c65_6374;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Iterations(u64),
    /// Whole passes over the data; needs a problem that declares queries per epoch.
    Epochs(u64),
}

impl Budget {
    pub fn iterations(self, problem: &dyn Problem) -> Result<u64> {
        match self {
            Budget::Iterations(t) => Ok(t),
            Budget::Epochs(e) => problem
                .queries_per_epoch()
                .map(|q| e * q)
                .ok_or_else(|| Error::config(format!("{} has no notion of epochs", problem.name()))),
        }
    }

    fn count(self) -> u64 {
        match self {
            Budget::Iterations(t) | Budget::Epochs(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Problem name in the registry grammar, e.g. `logreg@n=200,dim=10`.
    pub problem: String,
    pub optimizer: String,
    pub learning_rate: Option<f64>,
    /// COCOB-Backprop's α.
    pub alpha: Option<f64>,
    pub budget: Budget,
    pub seed: u64,
    /// Record every `stride` steps; step 0 and the final step are always recorded.
    pub stride: u64,
    /// `None` picks average for convex problems, random index for other
    /// problems with a weak-quasi-convexity constant and last otherwise.
    pub selection: Option<IterateSelection>,
    /// Coordinates whose effective learning rate gets its own column.
    pub watch: Vec<usize>,
    /// When false every `wall_ms` is written as 0 so output is byte-reproducible.
    pub wall_clock: bool,
}

impl RunConfig {
    pub fn new(problem: &str, optimizer: &str, iterations: u64) -> Self {
        Self {
            problem: problem.to_string(),
            optimizer: optimizer.to_string(),
            learning_rate: None,
            alpha: None,
            budget: Budget::Iterations(iterations),
            seed: 0,
            stride: 1,
            selection: None,
            watch: Vec::new(),
            wall_clock: true,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = Some(lr);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget.count() == 0 {
            return Err(Error::config("budget must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::config("stride must be at least 1"));
        }
        if !OPTIMIZER_NAMES.contains(&self.optimizer.as_str()) {
            return Err(Error::UnknownOptimizer(self.optimizer.clone()));
        }
        Ok(())
    }
}

/// Instantiates `config.optimizer` at the problem's starting point.
///
/// COCOB takes the problem's per-coordinate gradient bounds. Problems without
/// bounds get the clamping variant with `L = 1`, which voids the certificate.
pub fn build_optimizer(config: &RunConfig, problem: &dyn Problem) -> Result<Box<dyn Optimizer>> {
    let w1 = problem.initial_point();
    let name = config.optimizer.as_str();
    if matches!(name, "cocob" | "cocob-backprop") && config.learning_rate.is_some() {
        return Err(Error::config(format!("{name} takes no learning rate")));
    }
    match name {
        "cocob" => match problem.lipschitz() {
            Some(bounds) => Ok(Box::new(Cocob::new(&w1, &bounds)?)),
            None => {
                log::warn!(
                    "{} declares no gradient bounds; running clamped COCOB with L = 1",
                    problem.name()
                );
                Ok(Box::new(PermissiveCocob::new(&w1, &vec![1.0; w1.len()])?))
            }
        },
        "cocob-backprop" => Ok(Box::new(CocobBackprop::new(&w1, config.alpha.unwrap_or(DEFAULT_ALPHA))?)),
        other => {
            let kind = BaselineKind::from_name(other).ok_or_else(|| Error::UnknownOptimizer(other.to_string()))?;
            let lr = config
                .learning_rate
                .ok_or_else(|| Error::config(format!("{other} needs a learning rate")))?;
            Ok(Box::new(Baseline::new(BaselineConfig::new(kind, lr), &w1)?))
        }
    }
}

pub fn default_selection(problem: &dyn Problem) -> IterateSelection {
    if problem.is_convex() {
        IterateSelection::Average
    } else if problem.tau().is_some() {
        IterateSelection::RandomIndex
    } else {
        IterateSelection::Last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
    /// `w_i √(Σ g_i²)` for each watched coordinate.
    pub eff_lr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub problem_name: String,
    pub problem_metadata: serde_json::Value,
    pub iterations: u64,
    pub rows: Vec<Row>,
    pub selection: IterateSelection,
    pub selected: Vec<f64>,
    pub selected_loss: f64,
    /// Training objective at the final iterate; `+∞` for a diverged run.
    pub final_loss: f64,
    /// First step at which the iterate or its objective stopped being finite.
    pub diverged_at: Option<u64>,
    pub certificate: Option<BoundCertificate>,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn learning_rate(&self) -> Option<f64> {
        self.config.learning_rate
    }

    /// Final loss with NaN mapped to `+∞`, for ranking.
    pub fn rank_loss(&self) -> f64 {
        if self.final_loss.is_nan() {
            f64::INFINITY
        } else {
            self.final_loss
        }
    }
}

pub fn run(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let problem = build_problem(&config.problem, config.seed)?;
    run_on(config, problem.as_ref())
}

/// [`run`] against an already-built problem; `config.problem` is only echoed.
pub fn run_on(config: &RunConfig, problem: &dyn Problem) -> Result<RunRecord> {
    config.validate()?;
    let dim = problem.dim();
    for &i in &config.watch {
        if i >= dim {
            return Err(Error::CoordinateOutOfRange { index: i, dim });
        }
    }
    let total = config.budget.iterations(problem)?;
    if total == 0 {
        return Err(Error::config("budget resolves to zero iterations"));
    }
    let mut optimizer = build_optimizer(config, problem)?;
    let w1 = optimizer.params().to_vec();
    let selection = config.selection.unwrap_or_else(|| default_selection(problem));
    let pick = ChaCha8Rng::seed_from_u64(config.seed ^ SELECTION_STREAM).random_range(1..=total);

    let certified = match (config.optimizer.as_str(), problem.optimum(), problem.lipschitz(), problem.tau()) {
        ("cocob", Some(opt), Some(bounds), Some(tau)) => Some((opt, bounds, tau)),
        _ => None,
    };
    let mut gap_sum = 0.0;
    let mut abs_sums = certified.as_ref().map(|(_, b, _)| b.clone());

    let clock = Instant::now();
    let elapsed = || {
        if config.wall_clock {
            clock.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let mut rows = Vec::new();
    let mut sum_sq = vec![0.0; config.watch.len()];
    let mut average = vec![0.0; dim];
    let mut picked = None;
    let mut diverged_at = None;

    for k in 0..=total {
        let w = optimizer.params();
        if w.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(k);
            break;
        }
        let g = problem.subgradient(w, k);
        let record = k % config.stride == 0 || k == total;
        let loss = if record || certified.is_some() {
            problem.evaluate(w)
        } else {
            0.0
        };
        if !loss.is_finite() || g.values.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(k);
            break;
        }
        for (s, &i) in sum_sq.iter_mut().zip(&config.watch) {
            *s += g.values[i] * g.values[i];
        }
        if record {
            rows.push(Row {
                step: k,
                loss,
                grad_norm: g.norm(),
                wall_ms: elapsed(),
                eff_lr: config.watch.iter().zip(&sum_sq).map(|(&i, s)| w[i] * s.sqrt()).collect(),
            });
        }
        if k == total {
            break;
        }
        // w is the query point w_{k+1}.
        average.iter_mut().zip(w).for_each(|(a, v)| *a += v);
        if k + 1 == pick {
            picked = Some(w.to_vec());
        }
        if let Some((opt, _, _)) = &certified {
            gap_sum += loss - opt.value;
            for (s, v) in abs_sums.iter_mut().flatten().zip(&g.values) {
                *s += v.abs();
            }
        }
        optimizer.step(&g).map_err(|e| e.at_step(k + 1))?;
    }

    let last = optimizer.params().to_vec();
    let (selected, selected_loss, final_loss) = if diverged_at.is_some() {
        (last, f64::INFINITY, f64::INFINITY)
    } else {
        let selected = match selection {
            IterateSelection::Last => last,
            IterateSelection::Average => average.iter().map(|a| a / total as f64).collect(),
            IterateSelection::RandomIndex => picked.expect("pick lies in 1..=total"),
        };
        let selected_loss = problem.evaluate(&selected);
        (selected, selected_loss, rows.last().expect("step 0 is recorded").loss)
    };

    let certificate = match (&certified, diverged_at) {
        (Some((opt, bounds, tau)), None) => {
            let rhs = suboptimality_bound(
                &opt.point,
                &w1,
                bounds,
                abs_sums.as_deref().expect("set with certified"),
                *tau,
                total,
            )?;
            let cert = BoundCertificate {
                rhs,
                observed_gap: gap_sum / total as f64,
                tau: *tau,
                iterations: total,
            };
            if !cert.holds() && problem.is_convex() && !problem.is_stochastic() {
                return Err(Error::CertificateViolation {
                    observed_gap: cert.observed_gap,
                    rhs: cert.rhs,
                });
            }
            Some(cert)
        }
        _ => None,
    };

    Ok(RunRecord {
        config: config.clone(),
        problem_name: problem.name(),
        problem_metadata: problem.metadata(),
        iterations: total,
        rows,
        selection,
        selected,
        selected_loss,
        final_loss,
        diverged_at,
        certificate,
        wall_ms: elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_index: usize,
    pub best_learning_rate: f64,
    /// One record per grid point, in grid order.
    pub records: Vec<RunRecord>,
}

impl GridResult {
    pub fn best(&self) -> &RunRecord {
        &self.records[self.best_index]
    }
}

/// Runs `template` once per learning rate, in parallel, and keeps the one with
/// the lowest final training cost. Diverged runs rank last; ties go to the
/// smaller rate.
pub fn grid_search(template: &RunConfig, grid: &[f64]) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::config("learning-rate grid is empty"));
    }
    if matches!(template.optimizer.as_str(), "cocob" | "cocob-backprop") {
        return Err(Error::config(format!("{} has no learning rate to tune", template.optimizer)));
    }
    template.validate()?;
    let problem = build_problem(&template.problem, template.seed)?;
    let records = grid
        .par_iter()
        .map(|&lr| {
            let mut config = template.clone();
            config.learning_rate = Some(lr);
            run_on(&config, problem.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let best_index = (0..records.len())
        .min_by(|&a, &b| {
            records[a]
                .rank_loss()
                .total_cmp(&records[b].rank_loss())
                .then(grid[a].total_cmp(&grid[b]))
        })
        .expect("grid is nonempty");
    Ok(GridResult {
        best_index,
        best_learning_rate: grid[best_index],
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::config(format!("unknown output format `{other}`"))),
        }
    }
}

/// Shortest decimal that parses back to the same `f64`, with an exponent for
/// very large or small magnitudes.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn csv_header(record: &RunRecord) -> Vec<String> {
    let mut header: Vec<String> = ["step", "loss", "grad_norm", "wall_ms"].map(String::from).into();
    header.extend(record.config.watch.iter().map(|i| format!("eff_lr_{i}")));
    header
}

pub fn write_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(csv_header(record))?;
    for row in &record.rows {
        let mut fields = vec![
            row.step.to_string(),
            format_float(row.loss),
            format_float(row.grad_norm),
            format_float(row.wall_ms),
        ];
        fields.extend(row.eff_lr.iter().map(|&v| format_float(v)));
        writer.write_record(fields)?;
    }
    writer.flush()?;
    Ok(())
}

fn environment() -> serde_json::Value {
    serde_json::json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
    })
}

fn baseline_defaults() -> serde_json::Value {
    serde_json::json!({
        "epsilon": baseline::DEFAULT_EPSILON,
        "rmsprop_decay": baseline::RMSPROP_DECAY,
        "adam_beta1": baseline::ADAM_BETA1,
        "adam_beta2": baseline::ADAM_BETA2,
        "adadelta_rho": baseline::ADADELTA_RHO,
        "cocob_backprop_alpha": DEFAULT_ALPHA,
    })
}

/// Everything in a record except the rows, plus the environment stamp.
pub fn sidecar(record: &RunRecord, with_rows: bool) -> serde_json::Value {
    let mut value = serde_json::json!({
        "config": record.config,
        "problem": record.problem_name,
        "problem_metadata": record.problem_metadata,
        "iterations": record.iterations,
        "learning_rate": record.learning_rate(),
        "selection": record.selection,
        "selected": record.selected,
        "selected_loss": record.selected_loss,
        "final_loss": record.final_loss,
        "diverged_at": record.diverged_at,
        "certificate": record.certificate,
        "wall_ms": record.wall_ms,
        "environment": environment(),
        "baseline_defaults": baseline_defaults(),
    });
    if with_rows {
        value["rows"] = serde_json::to_value(&record.rows).expect("rows serialize");
    }
    value
}

fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Writes `<stem>.csv` plus a `<stem>.json` sidecar, or a single `<stem>.json`
/// carrying the rows. Returns the written paths.
pub fn emit(record: &RunRecord, format: OutputFormat, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json_path = dir.join(format!("{stem}.json"));
    match format {
        OutputFormat::Csv => {
            let csv_path = dir.join(format!("{stem}.csv"));
            write_csv(record, &csv_path)?;
            write_json(&sidecar(record, false), &json_path)?;
            Ok(vec![csv_path, json_path])
        }
        OutputFormat::Json => {
            write_json(&sidecar(record, true), &json_path)?;
            Ok(vec![json_path])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub problem: String,
    pub budget: Budget,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub stride: u64,
    pub wall_clock: bool,
}

impl CompareConfig {
    pub fn new(problem: &str, budget: Budget, seed: u64) -> Self {
        Self {
            problem: problem.to_string(),
            budget,
            seed,
            grid: baseline::standard_lr_grid(),
            stride: 1,
            wall_clock: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub optimizer: String,
    pub final_loss: f64,
    /// `None` for the learning-rate-free optimizers.
    pub learning_rate: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub summary: Vec<SummaryRow>,
    /// The reported run of each optimizer, in summary order.
    pub records: Vec<RunRecord>,
    /// `(learning rate, final loss)` for every grid point, per tuned optimizer.
    pub grids: Vec<(String, Vec<(f64, f64)>)>,
}

impl Comparison {
    pub fn record(&self, optimizer: &str) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.config.optimizer == optimizer)
    }
}

/// Untuned COCOB and COCOB-Backprop against each baseline tuned on `config.grid`.
pub fn compare(config: &CompareConfig) -> Result<Comparison> {
    let template = |optimizer: &str| RunConfig {
        problem: config.problem.clone(),
        optimizer: optimizer.to_string(),
        learning_rate: None,
        alpha: None,
        budget: config.budget,
        seed: config.seed,
        stride: config.stride,
        selection: None,
        watch: Vec::new(),
        wall_clock: config.wall_clock,
    };
    let mut records = Vec::new();
    let mut grids = Vec::new();
    for name in OPTIMIZER_NAMES {
        if BaselineKind::from_name(name).is_some() {
            let result = grid_search(&template(name), &config.grid)?;
            grids.push((
                name.to_string(),
                config.grid.iter().zip(&result.records).map(|(&lr, r)| (lr, r.final_loss)).collect(),
            ));
            records.push(result.records[result.best_index].clone());
        } else {
            records.push(run(&template(name))?);
        }
    }
    let summary = records
        .iter()
        .map(|r| SummaryRow {
            optimizer: r.config.optimizer.clone(),
            final_loss: r.final_loss,
            learning_rate: r.learning_rate(),
            wall_ms: r.wall_ms,
        })
        .collect();
    Ok(Comparison {
        summary,
        records,
        grids,
    })
}

/// Writes `summary.csv`, one `<optimizer>.csv`/`.json` pair per reported run and
/// a `grid_<optimizer>.csv` per tuned baseline.
pub fn write_comparison(comparison: &Comparison, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary_path = dir.join("summary.csv");
    let mut writer = csv::Writer::from_path(&summary_path)?;
    writer.write_record(["optimizer", "final_loss", "learning_rate", "wall_ms"])?;
    for row in &comparison.summary {
        writer.write_record([
            row.optimizer.clone(),
            format_float(row.final_loss),
            row.learning_rate.map_or_else(|| "—".to_string(), format_float),
            format_float(row.wall_ms),
        ])?;
    }
    writer.flush()?;
    written.push(summary_path);
    for record in &comparison.records {
        written.extend(emit(record, OutputFormat::Csv, dir, &record.config.optimizer)?);
    }
    for (name, points) in &comparison.grids {
        let path = dir.join(format!("grid_{name}.csv"));
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(["learning_rate", "final_loss"])?;
        for &(lr, loss) in points {
            writer.write_record([format_float(lr), format_float(loss)])?;
        }
        writer.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_one_records_two_rows() {
        let record = run(&RunConfig::new("abs10", "cocob", 1)).unwrap();
        let steps: Vec<u64> = record.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, [0, 1]);
        assert_eq!(record.rows[0].loss, 10.0);
    }

    #[test]
    fn stride_keeps_first_and_last() {
        let record = run(&RunConfig::new("abs10", "cocob", 10).with_stride(4)).unwrap();
        let steps: Vec<u64> = record.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, [0, 4, 8, 10]);
    }

    #[test]
    fn registry_misses() {
        assert!(matches!(run(&RunConfig::new("abs10", "lbfgs", 5)), Err(Error::UnknownOptimizer(_))));
        assert!(matches!(run(&RunConfig::new("nope", "cocob", 5)), Err(Error::UnknownProblem(_))));
        assert!(run(&RunConfig::new("abs10", "sgd", 5)).is_err());
        assert!(run(&RunConfig::new("abs10", "cocob", 5).with_learning_rate(0.1)).is_err());
        assert!(run(&RunConfig::new("abs10", "cocob", 0)).is_err());
        assert!(run(&RunConfig::new("abs10", "cocob", 5).with_stride(0)).is_err());
    }

    #[test]
    fn default_selection_follows_problem_class() {
        let convex = build_problem("abs10", 0).unwrap();
        let wqc = build_problem("wqc", 0).unwrap();
        let net = build_problem("mlp-blobs@per_class=5,width=4", 0).unwrap();
        assert_eq!(default_selection(convex.as_ref()), IterateSelection::Average);
        assert_eq!(default_selection(wqc.as_ref()), IterateSelection::RandomIndex);
        assert_eq!(default_selection(net.as_ref()), IterateSelection::Last);
    }

    #[test]
    fn formats_round_trip() {
        for x in [0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-300, 6.02e23, 123456.789, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_float(1e-7), "1e-7");
        assert_eq!(format_float(0.5), "0.5");
    }

    #[test]
    fn diverged_sgd_ranks_last() {
        let template = RunConfig::new("quad@dim=2", "sgd", 50);
        let result = grid_search(&template, &[0.1, 1e6]).unwrap();
        assert!(result.records[1].diverged_at.is_some());
        assert_eq!(result.records[1].rank_loss(), f64::INFINITY);
        assert_eq!(result.best_learning_rate, 0.1);
    }
}
