//! Sweeps, lambda* search, validation reports and figure reproduction.
//!
//! Every sweep writes one CSV with the fixed header [`CSV_HEADER`] plus a JSON
//! manifest. Rows are sorted by (alpha, lambda, engine, N) and floats are
//! printed with 9 significant digits, so the same spec and seed always give
//! byte-identical CSVs. Unstable grid points are rows with `stable=false` and
//! empty numeric fields, never errors.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic_mg1::{self, Mg1TandemParams};
use crate::analytic_mm1::{self, Mm1TandemParams};
use crate::ctmc;
use crate::des::{self, MarkovTandemParams, ModelParams, SimConfig, SimModel, SimResult};
use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::lst_calculus::{pgf_coefficients, CalculusConfig};

pub const CSV_HEADER: [&str; 12] = [
    "model",
    "N",
    "lambda",
    "alpha",
    "gamma",
    "dist_kind",
    "engine",
    "aaoi",
    "aaoi_ci_half",
    "sojourn_mean",
    "stable",
    "runtime_sec",
];

pub const DEFAULT_ALPHAS: [f64; 4] = [0.0, 0.1, 0.5, 0.9];
pub const ALPHA_FAMILY_NOTE: &str =
    "alpha values other than 0.5 and the 0 -> 0.9 span are documented defaults, not printed values";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepModel {
    AnalyticMm1,
    AnalyticMg1,
    MarkovTandemGlobalFailure,
    Mg1SequentialStage,
    Mg1Overlap,
}

impl SweepModel {
    pub fn label(self) -> &'static str {
        match self {
            SweepModel::AnalyticMm1 => "analytic_mm1",
            SweepModel::AnalyticMg1 => "analytic_mg1",
            SweepModel::MarkovTandemGlobalFailure => "markov_tandem_global_failure",
            SweepModel::Mg1SequentialStage => "mg1_sequential_stage",
            SweepModel::Mg1Overlap => "mg1_overlap",
        }
    }

    fn is_markov(self) -> bool {
        matches!(self, SweepModel::AnalyticMm1 | SweepModel::MarkovTandemGlobalFailure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Analytic,
    Ctmc,
    Simulation,
}

impl Engine {
    pub fn label(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Ctmc => "ctmc",
            Engine::Simulation => "simulation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        // rounding keeps 0.1 + 2*0.1 from printing as 0.30000000000000004
        (0..=n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            start: 0.02,
            stop: 0.48,
            step: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub replications: usize,
    pub base_seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            horizon: 1e6,
            warmup_fraction: 0.1,
            replications: 20,
            base_seed: 1,
        }
    }
}

fn default_alphas() -> Vec<f64> {
    DEFAULT_ALPHAS.to_vec()
}
fn default_n() -> usize {
    2
}
fn default_stage() -> DistributionSpec {
    DistributionSpec::Exponential { rate: 1.0 }
}
fn default_gamma() -> f64 {
    1.0
}
fn default_engines() -> Vec<Engine> {
    vec![Engine::Analytic]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub model: SweepModel,
    #[serde(default)]
    pub lambda_grid: LambdaGrid,
    #[serde(default = "default_alphas")]
    pub alpha_values: Vec<f64>,
    #[serde(default = "default_n")]
    pub n_nodes: usize,
    /// Service law of every stage; Markov models need an exponential.
    #[serde(default = "default_stage")]
    pub stage: DistributionSpec,
    /// Exponential repair rate, used unless `repair` is given.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub repair: Option<DistributionSpec>,
    #[serde(default = "default_engines")]
    pub engines: Vec<Engine>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub sim: SimSettings,
    /// Wall-clock seconds per row; off by default so CSVs stay deterministic.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub calculus: CalculusConfig,
}

impl SweepSpec {
    pub fn new(model: SweepModel) -> Self {
        SweepSpec {
            model,
            lambda_grid: LambdaGrid::default(),
            alpha_values: default_alphas(),
            n_nodes: default_n(),
            stage: default_stage(),
            gamma: default_gamma(),
            repair: None,
            engines: default_engines(),
            output_path: None,
            sim: SimSettings::default(),
            record_runtime: false,
            calculus: CalculusConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn repair_spec(&self) -> Result<DistributionSpec> {
        match &self.repair {
            Some(r) => Ok(r.clone()),
            None => DistributionSpec::exponential(self.gamma).map_err(|e| Error::spec("gamma", e.to_string())),
        }
    }

    /// Repair rate reported in the `gamma` column.
    pub fn gamma_column(&self) -> f64 {
        match &self.repair {
            Some(r) => 1.0 / r.mean(),
            None => self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.lambda_grid;
        if !(g.start.is_finite() && g.start > 0.0) {
            return Err(Error::spec("lambda_grid.start", format!("must be positive, got {}", g.start)));
        }
        if !(g.step.is_finite() && g.step > 0.0) {
            return Err(Error::spec("lambda_grid.step", format!("must be positive, got {}", g.step)));
        }
        if !(g.stop.is_finite() && g.stop >= g.start) {
            return Err(Error::spec("lambda_grid.stop", format!("must be >= start, got {}", g.stop)));
        }
        if self.alpha_values.is_empty() {
            return Err(Error::spec("alpha_values", "must not be empty"));
        }
        for (i, &a) in self.alpha_values.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::spec(format!("alpha_values[{i}]"), format!("must be >= 0, got {a}")));
            }
        }
        if self.n_nodes < 1 {
            return Err(Error::spec("n_nodes", "must be >= 1"));
        }
        self.stage.validate().map_err(|e| Error::spec("stage", e.to_string()))?;
        self.repair_spec()?
            .validate()
            .map_err(|e| Error::spec("repair", e.to_string()))?;
        if self.engines.is_empty() {
            return Err(Error::spec("engines", "must not be empty"));
        }
        for (i, e) in self.engines.iter().enumerate() {
            let field = format!("engines[{i}]");
            match (self.model, e) {
                (SweepModel::Mg1Overlap, Engine::Analytic | Engine::Ctmc) => {
                    return Err(Error::spec(field, "mg1_overlap supports only the simulation engine"));
                }
                (m, Engine::Ctmc) if !m.is_markov() => {
                    return Err(Error::spec(field, "the ctmc engine needs a Markov model"));
                }
                (m, Engine::Analytic | Engine::Ctmc) if m.is_markov() && self.n_nodes != 2 => {
                    return Err(Error::spec(field, "closed form and ctmc exist only for N = 2"));
                }
                _ => {}
            }
        }
        if self.model.is_markov() && !matches!(self.stage, DistributionSpec::Exponential { .. }) {
            return Err(Error::spec("stage", "Markov models need exponential stages"));
        }
        if self.model.is_markov() && self.repair.is_some() {
            return Err(Error::spec("repair", "Markov models take an exponential repair rate via gamma"));
        }
        let s = &self.sim;
        if !(s.horizon.is_finite() && s.horizon > 0.0) {
            return Err(Error::spec("sim.horizon", "must be positive"));
        }
        if s.replications < 1 {
            return Err(Error::spec("sim.replications", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&s.warmup_fraction) {
            return Err(Error::spec("sim.warmup_fraction", "must be in [0, 1)"));
        }
        Ok(())
    }

    fn mu(&self) -> f64 {
        1.0 / self.stage.mean()
    }

    pub fn mm1_params(&self, lambda: f64, alpha: f64) -> Mm1TandemParams {
        let mu = self.mu();
        Mm1TandemParams {
            lambda,
            mu1: mu,
            mu2: mu,
            alpha,
            gamma: self.gamma,
        }
    }

    pub fn markov_params(&self, lambda: f64, alpha: f64) -> MarkovTandemParams {
        MarkovTandemParams {
            lambda,
            service_rates: vec![self.mu(); self.n_nodes],
            alpha,
            gamma: self.gamma,
        }
    }

    pub fn mg1_params(&self, lambda: f64, alpha: f64) -> Result<Mg1TandemParams> {
        Mg1TandemParams::new(lambda, vec![self.stage.clone(); self.n_nodes], alpha, self.repair_spec()?)
    }

    pub fn sim_config(&self, lambda: f64, alpha: f64) -> Result<SimConfig> {
        let (model, params) = if self.model.is_markov() {
            (
                SimModel::MarkovTandemGlobalFailure,
                ModelParams::Markov(self.markov_params(lambda, alpha)),
            )
        } else if self.model == SweepModel::Mg1Overlap {
            (SimModel::Mg1Overlap, ModelParams::Mg1(self.mg1_params(lambda, alpha)?))
        } else {
            (SimModel::Mg1SequentialStage, ModelParams::Mg1(self.mg1_params(lambda, alpha)?))
        };
        Ok(SimConfig {
            horizon: self.sim.horizon,
            warmup_fraction: self.sim.warmup_fraction,
            replications: self.sim.replications,
            base_seed: self.sim.base_seed,
            ..SimConfig::new(model, params)
        })
    }

    /// Stability as judged by the engine that evaluates the point. The
    /// closed-form M/M/1 condition is stricter than the per-node condition the
    /// simulator needs; the overlap model is flagged with the sequential
    /// condition, which is sufficient for it.
    pub fn is_stable(&self, lambda: f64, alpha: f64, engine: Engine) -> bool {
        if self.model.is_markov() {
            match engine {
                Engine::Simulation => self.markov_params(lambda, alpha).is_stable(),
                _ => self.mm1_params(lambda, alpha).is_stable(),
            }
        } else {
            self.mg1_params(lambda, alpha).map(|p| p.is_stable()).unwrap_or(false)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub dist_kind: String,
    pub engine: Engine,
    pub aaoi: Option<f64>,
    pub aaoi_ci_half: Option<f64>,
    pub sojourn_mean: Option<f64>,
    pub stable: bool,
    pub runtime_sec: Option<f64>,
    /// Why a stable point has no value; reported in the manifest, not the CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// One grid point. Failures at stable points become empty fields plus an
/// `error` note.
pub fn evaluate_point(spec: &SweepSpec, lambda: f64, alpha: f64, engine: Engine) -> SweepRow {
    evaluate_point_full(spec, lambda, alpha, engine).0
}

fn evaluate_point_full(spec: &SweepSpec, lambda: f64, alpha: f64, engine: Engine) -> (SweepRow, Option<SimResult>) {
    let started = Instant::now();
    let stable = spec.is_stable(lambda, alpha, engine);
    let mut row = SweepRow {
        model: spec.model.label().to_string(),
        n: spec.n_nodes,
        lambda,
        alpha,
        gamma: spec.gamma_column(),
        dist_kind: spec.stage.label(),
        engine,
        aaoi: None,
        aaoi_ci_half: None,
        sojourn_mean: None,
        stable,
        runtime_sec: None,
        error: None,
    };
    if !stable {
        return (row, None);
    }
    let mut sim = None;
    let outcome: Result<()> = (|| {
        match engine {
            Engine::Analytic if spec.model.is_markov() => {
                let p = spec.mm1_params(lambda, alpha);
                let soj = analytic_mm1::mean_sojourn(&p, &spec.calculus);
                row.sojourn_mean = soj.as_ref().ok().copied().and_then(finite);
                row.aaoi = Some(analytic_mm1::aaoi(&p, &spec.calculus)?);
                soj?;
            }
            Engine::Analytic => {
                let p = spec.mg1_params(lambda, alpha)?;
                row.sojourn_mean = Some(analytic_mg1::mean_sojourn(&p, &spec.calculus)?);
                row.aaoi = Some(analytic_mg1::aaoi(&p, &spec.calculus)?);
            }
            Engine::Ctmc => {
                let (_, dist) = ctmc::choose_cap(&spec.mm1_params(lambda, alpha), ctmc::DEFAULT_CAP_TOL)?;
                // Little's law; arrivals lost at the cap are below the tolerance
                row.sojourn_mean = Some(dist.mean_total() / lambda);
            }
            Engine::Simulation => {
                let r = des::run_replicated_parallel(&spec.sim_config(lambda, alpha)?)?;
                row.aaoi = finite(r.aaoi_mean);
                row.aaoi_ci_half = finite(r.aaoi_ci_half);
                row.sojourn_mean = finite(r.sojourn_mean);
                sim = Some(r);
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    if spec.record_runtime {
        row.runtime_sec = Some(started.elapsed().as_secs_f64());
    }
    (row, sim)
}

fn row_order(a: &SweepRow, b: &SweepRow) -> Ordering {
    a.alpha
        .total_cmp(&b.alpha)
        .then(a.lambda.total_cmp(&b.lambda))
        .then(a.engine.cmp(&b.engine))
        .then(a.n.cmp(&b.n))
        .then(a.dist_kind.cmp(&b.dist_kind))
        .then(a.model.cmp(&b.model))
}

/// All (alpha, lambda, engine) points, evaluated concurrently, sorted.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let lambdas = spec.lambda_grid.values();
    let points: Vec<(f64, f64, Engine)> = spec
        .alpha_values
        .iter()
        .flat_map(|&a| lambdas.iter().flat_map(move |&l| spec.engines.iter().map(move |&e| (a, l, e))))
        .collect();
    let mut rows: Vec<SweepRow> = points
        .into_par_iter()
        .map(|(a, l, e)| evaluate_point(spec, l, a, e))
        .collect();
    rows.sort_by(row_order);
    Ok(rows)
}

/// `%.9g`-style formatting; non-finite values become empty fields.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{x:.8e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed)
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

fn csv_record(r: &SweepRow) -> [String; 12] {
    [
        r.model.clone(),
        r.n.to_string(),
        fmt_sig(r.lambda),
        fmt_sig(r.alpha),
        fmt_sig(r.gamma),
        r.dist_kind.clone(),
        r.engine.label().to_string(),
        opt(r.aaoi),
        opt(r.aaoi_ci_half),
        opt(r.sojourn_mean),
        r.stable.to_string(),
        opt(r.runtime_sec),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(())
}

pub fn render_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(csv_record(r))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_jsonl(rows: &[SweepRow]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        let rec = csv_record(r);
        let mut obj = serde_json::Map::new();
        for (k, v) in CSV_HEADER.iter().zip(rec) {
            let value = match *k {
                "model" | "dist_kind" | "engine" => Value::String(v),
                "stable" => Value::Bool(r.stable),
                "N" => json!(r.n),
                _ if v.is_empty() => Value::Null,
                _ => v.parse::<f64>().map(|x| json!(x)).unwrap_or(Value::Null),
            };
            obj.insert((*k).to_string(), value);
        }
        out.push_str(&serde_json::to_string(&Value::Object(obj))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_rows(rows: &[SweepRow], path: &Path, format: OutputFormat) -> Result<()> {
    ensure_parent(path)?;
    let text = match format {
        OutputFormat::Csv => render_csv(rows)?,
        OutputFormat::Jsonl => render_jsonl(rows)?,
    };
    fs::write(path, text).map_err(io_err(path))
}

/// Reads a CSV written by [`write_rows`] back into rows (engine-level check
/// that the header schema round-trips).
pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::spec("csv header", format!("unexpected columns {header:?}")));
    }
    let parse = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>().map(Some).map_err(|e| Error::spec("csv value", format!("{s:?}: {e}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let engine = match &rec[6] {
            "analytic" => Engine::Analytic,
            "ctmc" => Engine::Ctmc,
            "simulation" => Engine::Simulation,
            other => return Err(Error::spec("engine", format!("unknown engine {other:?}"))),
        };
        rows.push(SweepRow {
            model: rec[0].to_string(),
            n: rec[1].parse().map_err(|e| Error::spec("N", format!("{e}")))?,
            lambda: parse(&rec[2])?.unwrap_or(f64::NAN),
            alpha: parse(&rec[3])?.unwrap_or(f64::NAN),
            gamma: parse(&rec[4])?.unwrap_or(f64::NAN),
            dist_kind: rec[5].to_string(),
            engine,
            aaoi: parse(&rec[7])?,
            aaoi_ci_half: parse(&rec[8])?,
            sojourn_mean: parse(&rec[9])?,
            stable: &rec[10] == "true",
            runtime_sec: parse(&rec[11])?,
            error: None,
        });
    }
    Ok(rows)
}

pub fn manifest(specs: &[&SweepSpec], rows: &[SweepRow], wall_time: f64, extra: Value) -> Value {
    let errors: Vec<Value> = rows
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| {
                json!({"N": r.n, "lambda": r.lambda, "alpha": r.alpha, "engine": r.engine, "error": e})
            })
        })
        .collect();
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "specs": specs,
        "seed": specs.first().map(|s| s.sim.base_seed),
        "alpha_family_note": ALPHA_FAMILY_NOTE,
        "rows": rows.len(),
        "point_errors": errors,
        "wall_time_sec": wall_time,
        "extra": extra,
    })
}

pub fn write_json(value: &Value, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Sweep and persist rows plus `<stem>.manifest.json` next to them.
pub fn run_sweep(spec: &SweepSpec, out: &Path, format: OutputFormat) -> Result<Vec<SweepRow>> {
    let started = Instant::now();
    let rows = sweep(spec)?;
    write_rows(&rows, out, format)?;
    let m = manifest(&[spec], &rows, started.elapsed().as_secs_f64(), Value::Null);
    write_json(&m, &manifest_path(out))?;
    Ok(rows)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    out.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaStar {
    pub lambda_star: f64,
    pub aaoi_min: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Coarse scan of `f` on `[lo, hi]` followed by golden-section refinement
/// around the best scan point until the bracket is shorter than `tol`.
/// Points where `f` is `None` (unstable or failed) count as `+inf`.
pub fn find_lambda_star<F>(f: F, lo: f64, hi: f64, coarse_step: f64, tol: f64) -> Result<LambdaStar>
where
    F: Fn(f64) -> Option<f64> + Sync,
{
    let grid = LambdaGrid {
        start: lo,
        stop: hi,
        step: coarse_step,
    }
    .values();
    let vals: Vec<f64> = grid
        .par_iter()
        .map(|&l| f(l).filter(|v| v.is_finite()).unwrap_or(f64::INFINITY))
        .collect();
    let (best, &best_val) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoInteriorMinimum { lo, hi })?;
    if !best_val.is_finite() || best == 0 || best + 1 == grid.len() {
        return Err(Error::NoInteriorMinimum { lo, hi });
    }
    let eval = |x: f64| f(x).filter(|v| v.is_finite()).unwrap_or(f64::INFINITY);
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    let mut champion = (grid[best], best_val);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = eval(d);
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if v < champion.1 {
                champion = (x, v);
            }
        }
    }
    Ok(LambdaStar {
        lambda_star: champion.0,
        aaoi_min: champion.1,
    })
}

/// lambda* of one alpha curve of a spec, on the spec's grid as bracket.
/// Simulation uses common random numbers (fixed seed) and a coarser
/// stopping resolution.
pub fn lambda_star_for(spec: &SweepSpec, alpha: f64, engine: Engine) -> Result<LambdaStar> {
    let g = spec.lambda_grid;
    let tol = if engine == Engine::Simulation { 1e-3 } else { 1e-4 };
    find_lambda_star(|l| evaluate_point(spec, l, alpha, engine).aaoi, g.start, g.stop, g.step, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaStarRow {
    pub alpha: f64,
    pub engine: Engine,
    pub lambda_star: Option<f64>,
    pub aaoi_min: Option<f64>,
    pub error: Option<String>,
}

pub fn lambda_star_table(spec: &SweepSpec) -> Result<Vec<LambdaStarRow>> {
    spec.validate()?;
    let mut out = Vec::new();
    for &alpha in &spec.alpha_values {
        for &engine in &spec.engines {
            let r = lambda_star_for(spec, alpha, engine);
            out.push(LambdaStarRow {
                alpha,
                engine,
                lambda_star: r.as_ref().ok().map(|s| s.lambda_star),
                aaoi_min: r.as_ref().ok().map(|s| s.aaoi_min),
                error: r.err().map(|e| e.to_string()),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub id: String,
    pub check: String,
    pub params: Value,
    pub computed: Option<f64>,
    pub reference: Option<f64>,
    pub reference_ci_half: Option<f64>,
    /// `computed - reference` (or the worst such gap for vector checks).
    pub measured_gap: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub suite: String,
    pub passed: usize,
    pub failed: usize,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn text(&self) -> String {
        let mut s = format!("validation suite `{}`: {} passed, {} failed\n", self.suite, self.passed, self.failed);
        for r in &self.rows {
            s.push_str(&format!(
                "{} {:<24} {} gap={} tol={} {}\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.id,
                r.params,
                r.measured_gap.map(|g| format!("{g:.3e}")).unwrap_or_else(|| "n/a".into()),
                format_args!("{:.3e}", r.tolerance),
                r.note
            ));
        }
        s
    }

    pub fn row(&self, id: &str) -> Option<&ValidationRow> {
        self.rows.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, Copy)]
struct SuiteSettings {
    horizon: f64,
    replications: usize,
}

fn suite_settings(suite: &str) -> Result<SuiteSettings> {
    match suite {
        "default" => Ok(SuiteSettings {
            horizon: 4e5,
            replications: 20,
        }),
        "quick" => Ok(SuiteSettings {
            horizon: 2e4,
            replications: 5,
        }),
        other => Err(Error::spec("suite", format!("unknown suite {other:?} (expected default or quick)"))),
    }
}

fn within(gap: Option<f64>, tol: f64) -> bool {
    gap.is_some_and(|g| g.abs() <= tol)
}

fn sim(model: SimModel, params: ModelParams, st: SuiteSettings, lst_points: Vec<f64>) -> Result<SimResult> {
    let cfg = SimConfig {
        horizon: st.horizon,
        replications: st.replications,
        age_lst_points: lst_points,
        ..SimConfig::new(model, params)
    };
    des::run_replicated_parallel(&cfg)
}

fn mm1_point(lambda: f64, alpha: f64) -> Mm1TandemParams {
    Mm1TandemParams {
        lambda,
        mu1: 1.0,
        mu2: 1.0,
        alpha,
        gamma: 1.0,
    }
}

fn failure_row(id: String, check: &str, params: Value, tol: f64, e: &Error) -> ValidationRow {
    ValidationRow {
        id,
        check: check.into(),
        params,
        computed: None,
        reference: None,
        reference_ci_half: None,
        measured_gap: None,
        tolerance: tol,
        pass: false,
        note: e.to_string(),
        details: Value::Null,
    }
}

/// Runs the fixed validation matrix. Check failures are report content;
/// only an unknown suite id is an error.
pub fn validate(suite: &str) -> Result<ValidationReport> {
    let st = suite_settings(suite)?;
    let cfg = CalculusConfig::default();
    let mut rows = Vec::new();

    // closed-form boundary probability and node-2 PGF against the chain
    for alpha in [0.0, 0.5] {
        let p = mm1_point(0.2, alpha);
        let params = json!({"lambda": 0.2, "mu1": 1.0, "mu2": 1.0, "alpha": alpha, "gamma": 1.0});
        let chain = ctmc::choose_cap(&p, ctmc::DEFAULT_CAP_TOL);
        let id = format!("eq7_boundary_a{alpha}");
        match &chain {
            Ok((cap, dist)) => {
                let computed = p.stability_slack();
                let reference = dist.q(false, 0, 0);
                let gap = computed - reference;
                rows.push(ValidationRow {
                    id,
                    check: "Pi0(0,0) closed form vs truncated chain q0(0,0)".into(),
                    params: params.clone(),
                    computed: Some(computed),
                    reference: Some(reference),
                    reference_ci_half: None,
                    measured_gap: Some(gap),
                    tolerance: 1e-5,
                    pass: gap.abs() <= 1e-5,
                    note: format!("cap K = {cap}"),
                    details: Value::Null,
                });
            }
            Err(e) => rows.push(failure_row(id, "Pi0(0,0) vs chain", params.clone(), 1e-5, e)),
        }
        let id = format!("eq6_node2_pgf_a{alpha}");
        let check = "P(z2) vs chain pgf_eval(0, f(z2), z2), z2 = 0.1..0.9";
        let res = (|| -> Result<ValidationRow> {
            let (cap, dist) = chain.as_ref().map_err(|e| Error::Solve(e.to_string()))?;
            let pz = analytic_mm1::marginal_pgf_node2(&p)?;
            let mut worst: f64 = 0.0;
            let mut pts = Vec::new();
            for k in 1..=9 {
                let z2 = k as f64 / 10.0;
                let f = analytic_mm1::f_curve(&p, z2.into())?.re;
                let a = pz.eval_real(z2)?;
                let o = dist.pgf_eval(false, f, z2);
                if (a - o).abs() > worst.abs() {
                    worst = a - o;
                }
                pts.push(json!({"z2": z2, "analytic": a, "oracle": o}));
            }
            Ok(ValidationRow {
                id: id.clone(),
                check: check.into(),
                params: params.clone(),
                computed: None,
                reference: None,
                reference_ci_half: None,
                measured_gap: Some(worst),
                tolerance: 1e-4,
                pass: worst.abs() <= 1e-4,
                note: format!("cap K = {cap}"),
                details: Value::Array(pts),
            })
        })();
        rows.push(res.unwrap_or_else(|e| failure_row(id, check, params, 1e-4, &e)));
    }

    // M/G/1 chain: system-size law and means against the simulator
    let exp1 = DistributionSpec::Exponential { rate: 1.0 };
    for alpha in [0.0, 0.5] {
        let id = format!("eq16_size_pmf_a{alpha}");
        let params = json!({"N": 2, "stage": "exp(1)", "lambda": 0.1, "alpha": alpha, "gamma": 1.0});
        let check = "system-size pmf (first 15) vs simulated time-average histogram";
        let res = (|| -> Result<ValidationRow> {
            let p = Mg1TandemParams::uniform(0.1, 2, exp1.clone(), alpha, 1.0)?;
            let coeffs = pgf_coefficients(&analytic_mg1::system_pgf(&p)?, 14, &cfg)?;
            let r = sim(SimModel::Mg1SequentialStage, ModelParams::Mg1(p), st, vec![])?;
            let mut worst_ratio: f64 = 0.0;
            let mut worst_gap: f64 = 0.0;
            let mut pass = true;
            let mut bins = Vec::new();
            // bins a replication would visit for under 100 time units cannot
            // carry a t-interval; they are listed but not judged
            let resolvable = |a: f64| a * st.horizon >= 100.0;
            for k in 0..15 {
                let (a, d, ci) = (coeffs[k], r.system_size_hist[k], r.system_size_hist_ci_half[k]);
                if !resolvable(a) {
                    bins.push(json!({"n": k, "analytic": a, "simulated": d, "ci_half": ci, "judged": false}));
                    continue;
                }
                let tol = 3.0 * ci;
                let ok = (a - d).abs() <= tol || (a - d).abs() < 1e-12;
                pass &= ok;
                if tol > 0.0 && (a - d).abs() / tol > worst_ratio {
                    worst_ratio = (a - d).abs() / tol;
                }
                worst_gap = worst_gap.max((a - d).abs());
                bins.push(json!({"n": k, "analytic": a, "simulated": d, "ci_half": ci, "pass": ok}));
            }
            Ok(ValidationRow {
                id: id.clone(),
                check: check.into(),
                params: params.clone(),
                computed: None,
                reference: None,
                reference_ci_half: None,
                measured_gap: Some(worst_gap),
                tolerance: 3.0,
                pass,
                note: format!(
                    "per-bin tolerance 3 CI over {} resolvable bins; worst |gap|/(3 CI) = {worst_ratio:.3}",
                    coeffs.iter().filter(|&&a| resolvable(a)).count()
                ),
                details: Value::Array(bins),
            })
        })();
        rows.push(res.unwrap_or_else(|e| failure_row(id, check, params, 3.0, &e)));

        let params = json!({"N": 2, "stage": "exp(1)", "lambda": 0.3, "alpha": alpha, "gamma": 1.0});
        let res = (|| -> Result<Vec<ValidationRow>> {
            let p = Mg1TandemParams::uniform(0.3, 2, exp1.clone(), alpha, 1.0)?;
            let soj = analytic_mg1::mean_sojourn(&p, &cfg)?;
            let age = analytic_mg1::aaoi(&p, &cfg)?;
            let r = sim(SimModel::Mg1SequentialStage, ModelParams::Mg1(p), st, vec![])?;
            let mk = |id: String, check: &str, a: f64, d: f64, ci: f64| ValidationRow {
                id,
                check: check.into(),
                params: params.clone(),
                computed: Some(a),
                reference: Some(d),
                reference_ci_half: Some(ci),
                measured_gap: Some(a - d),
                tolerance: 3.0 * ci,
                pass: (a - d).abs() <= 3.0 * ci,
                note: String::new(),
                details: Value::Null,
            };
            Ok(vec![
                mk(format!("eq17_sojourn_a{alpha}"), "mean sojourn vs simulation", soj, r.sojourn_mean, r.sojourn_ci_half),
                mk(format!("eq18_aaoi_a{alpha}"), "AAoI vs simulation", age, r.aaoi_mean, r.aaoi_ci_half),
            ])
        })();
        match res {
            Ok(v) => rows.extend(v),
            Err(e) => rows.push(failure_row(format!("eq17_18_a{alpha}"), "M/G/1 means", params, f64::NAN, &e)),
        }
    }

    // Markovian age LST and AAoI against the simulator, with the h*
    // prefactor measured separately
    const S_PROBE: f64 = 0.5;
    for alpha in [0.0, 0.1, 0.5] {
        let p = mm1_point(0.2, alpha);
        let params = json!({"lambda": 0.2, "mu1": 1.0, "mu2": 1.0, "alpha": alpha, "gamma": 1.0, "s": S_PROBE});
        let r = match sim(
            SimModel::MarkovTandemGlobalFailure,
            ModelParams::Markov(p.into()),
            st,
            vec![S_PROBE],
        ) {
            Ok(r) => r,
            Err(e) => {
                rows.push(failure_row(format!("eq9_age_lst_a{alpha}"), "age LST", params.clone(), f64::NAN, &e));
                rows.push(failure_row(format!("eq10_aaoi_a{alpha}"), "AAoI", params, f64::NAN, &e));
                continue;
            }
        };
        let est = r.age_lst[0];
        let tol = 3.0 * est.ci_half;
        let published = analytic_mm1::age_lst(&p).and_then(|g| g.eval_real(S_PROBE));
        let plain = analytic_mm1::age_lst_variant(&p, false).and_then(|g| g.eval_real(S_PROBE));
        let gap = published.as_ref().ok().map(|v| v - est.mean);
        let plain_gap = plain.as_ref().ok().map(|v| v - est.mean);
        rows.push(ValidationRow {
            id: format!("eq9_age_lst_a{alpha}"),
            check: "age LST at s = 0.5 vs simulated E[exp(-s age)]".into(),
            params: params.clone(),
            computed: published.as_ref().ok().copied(),
            reference: Some(est.mean),
            reference_ci_half: Some(est.ci_half),
            measured_gap: gap,
            tolerance: tol,
            pass: within(gap, tol),
            note: match &published {
                Ok(_) => String::new(),
                Err(e) => e.to_string(),
            },
            details: json!({
                "without_h_prefactor": plain.as_ref().ok(),
                "gap_without_h_prefactor": plain_gap,
            }),
        });
        let analytic = analytic_mm1::aaoi(&p, &cfg);
        let gap = analytic.as_ref().ok().map(|v| v - r.aaoi_mean);
        let tol = 3.0 * r.aaoi_ci_half;
        rows.push(ValidationRow {
            id: format!("eq10_aaoi_a{alpha}"),
            check: "AAoI from the age LST vs simulation".into(),
            params,
            computed: analytic.as_ref().ok().copied(),
            reference: Some(r.aaoi_mean),
            reference_ci_half: Some(r.aaoi_ci_half),
            measured_gap: gap,
            tolerance: tol,
            pass: within(gap, tol),
            note: match &analytic {
                Ok(_) => String::new(),
                Err(e) => e.to_string(),
            },
            details: Value::Null,
        });
    }

    let passed = rows.iter().filter(|r| r.pass).count();
    Ok(ValidationReport {
        suite: suite.to_string(),
        passed,
        failed: rows.len() - passed,
        rows,
    })
}

pub fn write_validation(report: &ValidationReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&serde_json::to_value(report)?, &dir.join("validation.json"))?;
    let txt = dir.join("validation.txt");
    fs::write(&txt, report.text()).map_err(io_err(&txt))
}

// ------------------------------------------------------------ reproduction

pub const FIGURES: [&str; 6] = ["fig3a", "fig3b", "fig3c", "fig4a", "fig4b", "fig4c"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureOutput {
    pub figure: String,
    pub rows: Vec<SweepRow>,
    /// fig3c only: `(lambda, node, wait, ci_half)`.
    pub per_node_wait: Vec<(f64, usize, f64, f64)>,
    pub summary: Value,
}

/// The canned specs behind a figure id.
pub fn figure_specs(figure: &str, sim: SimSettings) -> Result<Vec<SweepSpec>> {
    let exp1 = DistributionSpec::Exponential { rate: 1.0 };
    let base = |model| SweepSpec {
        sim,
        ..SweepSpec::new(model)
    };
    let specs = match figure {
        "fig3a" => vec![SweepSpec {
            engines: vec![Engine::Analytic, Engine::Simulation],
            ..base(SweepModel::AnalyticMm1)
        }],
        "fig3b" => (1..=4)
            .map(|n| SweepSpec {
                n_nodes: n,
                alpha_values: vec![0.5],
                engines: vec![Engine::Simulation],
                lambda_grid: LambdaGrid {
                    start: 0.02,
                    stop: 0.64,
                    step: 0.02,
                },
                ..base(SweepModel::MarkovTandemGlobalFailure)
            })
            .collect(),
        "fig3c" => vec![SweepSpec {
            n_nodes: 4,
            alpha_values: vec![0.5],
            engines: vec![Engine::Simulation],
            lambda_grid: LambdaGrid {
                start: 0.05,
                stop: 0.6,
                step: 0.05,
            },
            ..base(SweepModel::MarkovTandemGlobalFailure)
        }],
        "fig4a" => vec![SweepSpec {
            stage: exp1,
            engines: vec![Engine::Analytic, Engine::Simulation],
            ..base(SweepModel::AnalyticMg1)
        }],
        "fig4b" => vec![SweepSpec {
            stage: DistributionSpec::erlang_with_mean(2, 1.0)?,
            engines: vec![Engine::Analytic, Engine::Simulation],
            ..base(SweepModel::AnalyticMg1)
        }],
        "fig4c" => [exp1, DistributionSpec::erlang_with_mean(2, 1.0)?, DistributionSpec::hyper2_default()]
            .into_iter()
            .map(|stage| SweepSpec {
                stage,
                alpha_values: vec![0.5],
                engines: vec![Engine::Analytic, Engine::Simulation],
                ..base(SweepModel::AnalyticMg1)
            })
            .collect(),
        other => {
            return Err(Error::spec(
                "figure",
                format!("unknown figure {other:?}; expected one of {}", FIGURES.join(", ")),
            ))
        }
    };
    Ok(specs)
}

fn min_by_curve(rows: &[SweepRow], engine: Engine) -> Vec<Value> {
    let mut keys: Vec<(usize, String, f64)> = rows
        .iter()
        .filter(|r| r.engine == engine)
        .map(|r| (r.n, r.dist_kind.clone(), r.alpha))
        .collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    keys.dedup();
    keys.into_iter()
        .filter_map(|(n, kind, alpha)| {
            rows.iter()
                .filter(|r| r.engine == engine && r.n == n && r.dist_kind == kind && r.alpha == alpha)
                .filter_map(|r| r.aaoi.map(|a| (r.lambda, a)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(l, a)| json!({"N": n, "dist_kind": kind, "alpha": alpha, "lambda_at_min": l, "aaoi_min": a}))
        })
        .collect()
}

pub fn reproduce(figure: &str, sim: SimSettings) -> Result<FigureOutput> {
    let specs = figure_specs(figure, sim)?;
    let mut rows = Vec::new();
    let mut per_node_wait = Vec::new();
    for spec in &specs {
        if figure == "fig3c" {
            spec.validate()?;
            let lambdas = spec.lambda_grid.values();
            let results: Vec<(SweepRow, Option<SimResult>)> = lambdas
                .par_iter()
                .map(|&l| evaluate_point_full(spec, l, spec.alpha_values[0], Engine::Simulation))
                .collect();
            for (row, sim) in results {
                if let Some(r) = sim {
                    for (i, (&w, &ci)) in r.per_node_wait.iter().zip(&r.per_node_wait_ci_half).enumerate() {
                        per_node_wait.push((row.lambda, i + 1, w, ci));
                    }
                }
                rows.push(row);
            }
        } else {
            rows.extend(sweep(spec)?);
        }
    }
    rows.sort_by(row_order);
    let summary = json!({
        "analytic_minima": min_by_curve(&rows, Engine::Analytic),
        "simulation_minima": min_by_curve(&rows, Engine::Simulation),
    });
    Ok(FigureOutput {
        figure: figure.to_string(),
        rows,
        per_node_wait,
        summary,
    })
}

pub fn render_per_node_wait(data: &[(f64, usize, f64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "node", "wait", "wait_ci_half"])?;
    for &(l, node, wait, ci) in data {
        w.write_record([fmt_sig(l), node.to_string(), fmt_sig(wait), fmt_sig(ci)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `<fig>.<ext>`, `<fig>.manifest.json` and, for fig3c,
/// `fig3c_per_node_wait.csv` into `dir`.
pub fn write_figure(out: &FigureOutput, sim: SimSettings, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data = dir.join(format!("{}.{}", out.figure, format.extension()));
    write_rows(&out.rows, &data, format)?;
    let specs = figure_specs(&out.figure, sim)?;
    let spec_refs: Vec<&SweepSpec> = specs.iter().collect();
    let m = manifest(&spec_refs, &out.rows, 0.0, out.summary.clone());
    let mpath = manifest_path(&data);
    write_json(&m, &mpath)?;
    let mut paths = vec![data, mpath];
    if !out.per_node_wait.is_empty() {
        let p = dir.join(format!("{}_per_node_wait.csv", out.figure));
        fs::write(&p, render_per_node_wait(&out.per_node_wait)?).map_err(io_err(&p))?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_sim() -> SimSettings {
        SimSettings {
            horizon: 2e4,
            warmup_fraction: 0.1,
            replications: 3,
            base_seed: 7,
        }
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(3.5), "3.5");
        assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(123456.789123), "123456.789");
        assert_eq!(fmt_sig(2.0e-7), "2e-7");
        assert_eq!(fmt_sig(1.23456789012e12), "1.23456789e12");
        assert_eq!(fmt_sig(-0.25), "-0.25");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(f64::NAN), "");
        assert_eq!(fmt_sig(f64::INFINITY), "");
        for x in [0.1234567891234, 7.77e-3, 98765.4321] {
            let back: f64 = fmt_sig(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-8 * x.abs());
        }
    }

    #[test]
    fn grid_values_are_clean() {
        let g = LambdaGrid {
            start: 0.1,
            stop: 0.3,
            step: 0.1,
        };
        assert_eq!(g.values(), vec![0.1, 0.2, 0.3]);
        assert_eq!(LambdaGrid::default().values().len(), 24);
    }

    #[test]
    fn spec_errors_name_the_field() {
        let mut s = SweepSpec::new(SweepModel::AnalyticMg1);
        s.alpha_values = vec![0.0, -1.0];
        match s.validate() {
            Err(Error::Spec { field, .. }) => assert_eq!(field, "alpha_values[1]"),
            other => panic!("{other:?}"),
        }
        let mut s = SweepSpec::new(SweepModel::AnalyticMg1);
        s.engines = vec![Engine::Analytic, Engine::Ctmc];
        assert!(matches!(s.validate(), Err(Error::Spec { field, .. }) if field == "engines[1]"));
        let mut s = SweepSpec::new(SweepModel::MarkovTandemGlobalFailure);
        s.stage = DistributionSpec::erlang(2, 2.0).unwrap();
        assert!(matches!(s.validate(), Err(Error::Spec { field, .. }) if field == "stage"));
        let s = SweepSpec {
            n_nodes: 3,
            ..SweepSpec::new(SweepModel::AnalyticMm1)
        };
        assert!(matches!(s.validate(), Err(Error::Spec { field, .. }) if field == "engines[0]"));
    }

    #[test]
    fn spec_json_defaults() {
        let s = SweepSpec::from_json(r#"{"model": "analytic_mg1", "lambda_grid": {"start": 0.1, "stop": 0.4, "step": 0.1}}"#)
            .unwrap();
        assert_eq!(s.alpha_values, DEFAULT_ALPHAS.to_vec());
        assert_eq!(s.n_nodes, 2);
        assert_eq!(s.engines, vec![Engine::Analytic]);
        assert!(SweepSpec::from_json(r#"{"model": "nope"}"#).is_err());
    }

    #[test]
    fn unstable_points_are_flagged_rows() {
        let s = SweepSpec {
            lambda_grid: LambdaGrid {
                start: 0.3,
                stop: 0.7,
                step: 0.2,
            },
            alpha_values: vec![0.5],
            ..SweepSpec::new(SweepModel::AnalyticMg1)
        };
        let rows = sweep(&s).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].stable && rows[0].aaoi.is_some());
        for r in &rows[1..] {
            assert!(!r.stable);
            assert!(r.aaoi.is_none() && r.sojourn_mean.is_none());
        }
        let csv = render_csv(&rows).unwrap();
        assert!(!csv.contains("NaN") && !csv.contains("inf"));
        assert!(csv.lines().nth(2).unwrap().ends_with(",false,"));
    }

    #[test]
    fn rows_sorted_and_header_exact() {
        let s = SweepSpec {
            lambda_grid: LambdaGrid {
                start: 0.1,
                stop: 0.2,
                step: 0.1,
            },
            alpha_values: vec![0.5, 0.0],
            engines: vec![Engine::Simulation, Engine::Analytic],
            sim: quick_sim(),
            ..SweepSpec::new(SweepModel::AnalyticMg1)
        };
        let rows = sweep(&s).unwrap();
        let keys: Vec<(f64, f64, Engine)> = rows.iter().map(|r| (r.alpha, r.lambda, r.engine)).collect();
        assert_eq!(keys[0], (0.0, 0.1, Engine::Analytic));
        assert_eq!(keys[1], (0.0, 0.1, Engine::Simulation));
        assert_eq!(keys[7], (0.5, 0.2, Engine::Simulation));
        let csv = render_csv(&rows).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "model,N,lambda,alpha,gamma,dist_kind,engine,aaoi,aaoi_ci_half,sojourn_mean,stable,runtime_sec"
        );
        for r in rows.iter().filter(|r| r.engine == Engine::Analytic) {
            assert!(r.aaoi_ci_half.is_none());
        }
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let s = SweepSpec {
            lambda_grid: LambdaGrid {
                start: 0.1,
                stop: 0.5,
                step: 0.2,
            },
            alpha_values: vec![0.1],
            ..SweepSpec::new(SweepModel::AnalyticMg1)
        };
        let path = dir.path().join("out.csv");
        let rows = run_sweep(&s, &path, OutputFormat::Csv).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.stable, b.stable);
            assert_eq!(a.aaoi.is_some(), b.aaoi.is_some());
            if let (Some(x), Some(y)) = (a.aaoi, b.aaoi) {
                assert!((x - y).abs() <= 1e-8 * x);
            }
        }
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out.manifest.json")).unwrap()).unwrap();
        assert_eq!(m["rows"], json!(3));
        assert_eq!(m["specs"][0]["model"], json!("analytic_mg1"));
    }

    #[test]
    fn jsonl_uses_nulls() {
        let rows = vec![SweepRow {
            model: "analytic_mg1".into(),
            n: 2,
            lambda: 0.4,
            alpha: 0.9,
            gamma: 1.0,
            dist_kind: "exp".into(),
            engine: Engine::Analytic,
            aaoi: None,
            aaoi_ci_half: None,
            sojourn_mean: None,
            stable: false,
            runtime_sec: None,
            error: None,
        }];
        let text = render_jsonl(&rows).unwrap();
        let v: Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(v["aaoi"], Value::Null);
        assert_eq!(v["stable"], json!(false));
        assert_eq!(v["N"], json!(2));
    }

    #[test]
    fn lambda_star_of_single_mm1() {
        // classical M/M/1 AAoI, mu = 1: minimum near 0.531
        let f = |l: f64| (l < 1.0).then(|| 1.0 + 1.0 / l + l * l / (1.0 - l));
        let s = find_lambda_star(f, 0.02, 0.98, 0.02, 1e-4).unwrap();
        assert!((s.lambda_star - 0.5306).abs() < 2e-3, "{}", s.lambda_star);
    }

    #[test]
    fn lambda_star_single_stage_analytic() {
        let s = SweepSpec {
            n_nodes: 1,
            lambda_grid: LambdaGrid {
                start: 0.02,
                stop: 0.98,
                step: 0.02,
            },
            ..SweepSpec::new(SweepModel::AnalyticMg1)
        };
        let r = lambda_star_for(&s, 0.0, Engine::Analytic).unwrap();
        assert!((r.lambda_star - 0.531).abs() < 1e-3, "{}", r.lambda_star);
    }

    #[test]
    fn monotone_bracket_has_no_interior_minimum() {
        let f = |l: f64| Some(1.0 / (1.0 - l));
        assert!(matches!(
            find_lambda_star(f, 0.7, 0.9, 0.02, 1e-4),
            Err(Error::NoInteriorMinimum { .. })
        ));
        let s = SweepSpec {
            lambda_grid: LambdaGrid {
                start: 0.3,
                stop: 0.45,
                step: 0.02,
            },
            ..SweepSpec::new(SweepModel::AnalyticMg1)
        };
        assert!(matches!(
            lambda_star_for(&s, 0.0, Engine::Analytic),
            Err(Error::NoInteriorMinimum { .. })
        ));
    }

    #[test]
    fn lambda_star_shifts_left_with_failures() {
        let s = SweepSpec::new(SweepModel::AnalyticMg1);
        let a0 = lambda_star_for(&s, 0.0, Engine::Analytic).unwrap();
        let a5 = lambda_star_for(&s, 0.5, Engine::Analytic).unwrap();
        assert!(a5.lambda_star < a0.lambda_star);
        assert!(a5.aaoi_min > a0.aaoi_min);
    }

    #[test]
    fn unknown_ids_are_errors() {
        assert!(matches!(validate("bogus"), Err(Error::Spec { .. })));
        assert!(matches!(reproduce("fig9", quick_sim()), Err(Error::Spec { .. })));
    }

    #[test]
    fn fig3c_writes_per_node_waits() {
        let out = reproduce("fig3c", quick_sim()).unwrap();
        let n_lambda = out.rows.len();
        assert_eq!(out.per_node_wait.len(), 4 * out.rows.iter().filter(|r| r.stable).count());
        assert!(n_lambda > 0);
        let dir = tempfile::tempdir().unwrap();
        let paths = write_figure(&out, quick_sim(), dir.path(), OutputFormat::Csv).unwrap();
        assert_eq!(paths.len(), 3);
        let text = fs::read_to_string(&paths[2]).unwrap();
        assert!(text.starts_with("lambda,node,wait,wait_ci_half\n"));
    }
}
