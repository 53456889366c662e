//! Evaluation harness: per-UE spectral-efficiency reports with empirical
//! CDFs, runtime benchmarks and the Monte-Carlo channel-statistics check.

mod channel;
pub mod properties;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::apg::{apg_solve, ApgOptions};
use crate::config::{RadioConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::feasible::PowerMatrix;
use crate::gat::{forward, forward_batch, GatParams, PilotMode};
use crate::metrics::{Evaluator, SystemStats};
use crate::scenario::{sample_rng, ScenarioSample};
use crate::training::perturb_sample;
use crate::Mat;

pub use channel::{
    monte_carlo_channel_stats, simulate_trial, spread_instance, ChannelDraw, ChannelStatsReport, StatCheck,
};
pub use properties::{property_suite, PropertyCheck};

/// Seed offset separating input perturbations from every other stream.
const PERTURB_STREAM: u64 = 0x5eed_0fe5_7a7e;

/// A power-control method under evaluation.
#[derive(Clone, Debug)]
pub enum MethodKind<'a> {
    Apg(ApgOptions),
    Gat(&'a GatParams, PilotMode),
    /// All powers zero. A degenerate baseline.
    Zero,
}

#[derive(Clone, Debug)]
pub struct Method<'a> {
    pub name: String,
    pub kind: MethodKind<'a>,
}

impl<'a> Method<'a> {
    pub fn apg(opts: ApgOptions) -> Self {
        Self {
            name: "apg".into(),
            kind: MethodKind::Apg(opts),
        }
    }

    pub fn gat(params: &'a GatParams) -> Self {
        Self {
            name: "gat".into(),
            kind: MethodKind::Gat(params, PilotMode::Aware),
        }
    }

    pub fn gat_ablation(params: &'a GatParams) -> Self {
        Self {
            name: "gat_ablation".into(),
            kind: MethodKind::Gat(params, PilotMode::Ablated),
        }
    }

    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            kind: MethodKind::Zero,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Power matrices for `inputs`, computed as the method would in deployment.
    fn solve(&self, inputs: &[ScenarioSample], cfg: &RadioConfig) -> Result<Vec<PowerMatrix>> {
        match &self.kind {
            MethodKind::Apg(opts) => inputs
                .par_iter()
                .map(|s| {
                    let st = SystemStats::for_sample(s, cfg);
                    Ok(apg_solve(s, &st, cfg, opts)?.0)
                })
                .collect(),
            MethodKind::Gat(params, mode) => {
                let chunks: Vec<Vec<PowerMatrix>> = inputs
                    .par_chunks(32)
                    .map(|c| forward_batch(&c.iter().collect::<Vec<_>>(), params, cfg.n, *mode))
                    .collect::<Result<_>>()?;
                Ok(chunks.into_iter().flatten().collect())
            }
            MethodKind::Zero => inputs
                .iter()
                .map(|s| {
                    PowerMatrix::try_new(Mat::zeros(s.b.dim()), cfg.n, 0.0)
                        .map_err(|r| Error::Numeric(format!("zero powers infeasible: {r:?}")))
                })
                .collect(),
        }
    }
}

/// Sorted values with right-continuous empirical CDF ordinates `i / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cdf {
    pub values: Vec<f64>,
    pub ordinates: Vec<f64>,
}

impl Cdf {
    /// Smallest sample value `x` with `F(x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.values[idx]
    }
}

pub fn empirical_cdf(values: &[f64]) -> Result<Cdf> {
    if values.is_empty() {
        return Err(Error::Input("empirical CDF of an empty sample".into()));
    }
    if let Some(v) = values.iter().find(|v| v.is_nan()) {
        return Err(Error::Numeric(format!("empirical CDF input contains {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let ordinates = (1..=sorted.len()).map(|i| i as f64 / n).collect();
    Ok(Cdf {
        values: sorted,
        ordinates,
    })
}

/// Quantile levels listed in the summary.
pub const SUMMARY_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

/// Results of one method over a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub name: String,
    /// Active-UE spectral efficiencies of every sample.
    pub se: Vec<Vec<f64>>,
    pub min_se: Vec<f64>,
}

impl MethodReport {
    pub fn mean_min_se(&self) -> f64 {
        self.min_se.iter().sum::<f64>() / self.min_se.len() as f64
    }

    pub fn cdf(&self) -> Result<Cdf> {
        empirical_cdf(&self.se.concat())
    }

    pub fn quantiles(&self) -> Result<[f64; 3]> {
        let cdf = self.cdf()?;
        Ok(SUMMARY_QUANTILES.map(|p| cdf.quantile(p)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Input perturbation applied to `B` before the methods see it (dB).
    pub sigma_db: f64,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Long-format table `method,sample,ue,se`.
    pub fn write_se_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "method,sample,ue,se")?;
        for m in &self.methods {
            for (s, row) in m.se.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    writeln!(w, "{},{s},{k},{v}", m.name)?;
                }
            }
        }
        Ok(())
    }

    /// One row per method: quantiles of per-UE SE and the mean min-SE.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "method,sigma_db,samples,q05,q50,q95,mean_min_se")?;
        for m in &self.methods {
            let q = m.quantiles().map_err(std::io::Error::other)?;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.name,
                self.sigma_db,
                m.se.len(),
                q[0],
                q[1],
                q[2],
                m.mean_min_se()
            )?;
        }
        Ok(())
    }

    /// Write `<stem>_se.csv` and `<stem>_summary.csv` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let se = dir.join(format!("{stem}_se.csv"));
        let summary = dir.join(format!("{stem}_summary.csv"));
        write_new(&se, |w| self.write_se_csv(w))?;
        write_new(&summary, |w| self.write_summary_csv(w))?;
        Ok(vec![se, summary])
    }
}

/// Create `path` (which must not exist) and fill it through `f`.
pub(crate) fn write_new(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// File-name stem embedding the scenario preset and the config hash.
pub fn artifact_stem(cfg: &SystemConfig) -> String {
    let scenario = cfg.scenario.map_or_else(|| "custom".to_string(), |id| format!("s{id}"));
    format!("{scenario}_{}", &cfg.hash_hex()[..12])
}

/// Test-set inputs as the methods see them: `B` perturbed by `sigma_db`.
pub fn perturbed_inputs(testset: &[ScenarioSample], sigma_db: f64, seed: u64) -> Vec<ScenarioSample> {
    testset
        .iter()
        .enumerate()
        .map(|(i, s)| perturb_sample(s, sigma_db, &mut sample_rng(seed ^ PERTURB_STREAM, i as u64)))
        .collect()
}

/// Run every method on `testset` and score the outputs against the true `B`.
///
/// Methods see `B` perturbed by `sigma_db` (the same draw for all methods);
/// spectral efficiencies always use the unperturbed statistics.
pub fn evaluate_methods(
    testset: &[ScenarioSample],
    cfg: &RadioConfig,
    methods: &[Method<'_>],
    sigma_db: f64,
    seed: u64,
) -> Result<EvalReport> {
    if testset.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    for s in testset {
        if s.m() != cfg.m || s.k_max() != cfg.k_max {
            return Err(Error::shape(
                "test sample dimensions (M, K_max)",
                format!("({}, {})", cfg.m, cfg.k_max),
                format!("({}, {})", s.m(), s.k_max()),
            ));
        }
    }
    for m in methods {
        if let MethodKind::Gat(p, _) = m.kind {
            if p.m != cfg.m {
                return Err(Error::shape("number of APs for the network parameters", cfg.m, p.m));
            }
        }
    }
    let inputs = perturbed_inputs(testset, sigma_db, seed);
    let truth: Vec<SystemStats> = testset.par_iter().map(|s| SystemStats::for_sample(s, cfg)).collect();
    let methods = methods
        .iter()
        .map(|method| {
            let out = method.solve(&inputs, cfg)?;
            let mut se = Vec::with_capacity(testset.len());
            let mut min_se = Vec::with_capacity(testset.len());
            for ((s, st), mu) in testset.iter().zip(&truth).zip(&out) {
                let ev = Evaluator::new(st, cfg, s.k_act);
                let v = ev.se(mu);
                if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                    return Err(Error::Numeric(format!("method `{}` produced SE {bad}", method.name)));
                }
                min_se.push(ev.min_se(mu));
                se.push(v);
            }
            Ok(MethodReport {
                name: method.name.clone(),
                se,
                min_se,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport { sigma_db, methods })
}

/// Timing summary of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub samples: usize,
    pub repeats: usize,
    /// Per-sample wall time of each timed repeat (seconds).
    pub per_sample_s: Vec<f64>,
}

impl BenchRow {
    pub fn mean_s(&self) -> f64 {
        self.per_sample_s.iter().sum::<f64>() / self.per_sample_s.len() as f64
    }

    pub fn median_s(&self) -> f64 {
        let mut v = self.per_sample_s.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub environment: String,
}

impl BenchReport {
    pub fn row(&self, method: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "method,samples,repeats,mean_s_per_sample,median_s_per_sample,environment")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},\"{}\"",
                r.method,
                r.samples,
                r.repeats,
                r.mean_s(),
                r.median_s(),
                self.environment.replace('"', "'")
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_new(path, |w| self.write_csv(w))
    }
}

/// Short description of the machine the benchmark ran on.
pub fn environment_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{} {} | {cpu} | {threads} hardware threads | timed on 1 worker",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Time one method sample by sample, as it would run in deployment.
fn time_once(method: &Method<'_>, testset: &[ScenarioSample], cfg: &RadioConfig) -> Result<f64> {
    let start = Instant::now();
    for s in testset {
        let mu = match &method.kind {
            MethodKind::Apg(opts) => {
                let st = SystemStats::for_sample(s, cfg);
                apg_solve(s, &st, cfg, opts)?.0
            }
            MethodKind::Gat(p, mode) => forward(s, p, cfg.n, *mode)?,
            MethodKind::Zero => PowerMatrix::try_new(Mat::zeros(s.b.dim()), cfg.n, 0.0)
                .map_err(|r| Error::Numeric(format!("zero powers infeasible: {r:?}")))?,
        };
        std::hint::black_box(mu);
    }
    Ok(start.elapsed().as_secs_f64() / testset.len() as f64)
}

/// Median-of-repeats per-sample wall time of each method.
///
/// One untimed warmup pass precedes the `repeats` timed passes. Everything
/// runs on a single worker so methods do not contend for cores.
pub fn runtime_bench(
    methods: &[Method<'_>],
    testset: &[ScenarioSample],
    cfg: &RadioConfig,
    repeats: usize,
) -> Result<BenchReport> {
    if repeats < 3 {
        return Err(Error::Config(format!("benchmark needs at least 3 repeats, got {repeats}")));
    }
    if testset.is_empty() {
        return Err(Error::Input("empty benchmark set".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let rows = pool.install(|| {
        methods
            .iter()
            .map(|m| {
                time_once(m, testset, cfg)?;
                let per_sample_s = (0..repeats).map(|_| time_once(m, testset, cfg)).collect::<Result<_>>()?;
                Ok(BenchRow {
                    method: m.name.clone(),
                    samples: testset.len(),
                    repeats,
                    per_sample_s,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(BenchReport {
        rows,
        environment: environment_descriptor(),
    })
}

#[cfg(test)]
mod tests;
