//! Accelerated projected gradient ascent on the smoothed max-min utility.
//!
//! Nesterov extrapolation, Armijo backtracking that reuses the last accepted
//! step, and function-value restart. Gradients come from the autodiff tape;
//! utility values come from [`crate::metrics`].

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;

use crate::autodiff::{Tape, Var};
use crate::config::RadioConfig;
use crate::error::{Error, Result};
use crate::feasible::{project, PowerMatrix};
use crate::metrics::{Evaluator, SystemStats};
use crate::objective::{utility_on_tape, UtilityConsts};
use crate::scenario::ScenarioSample;
use crate::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct ApgOptions {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once the accepted utility changes by less than this.
    pub rel_tol: f64,
    pub initial_step: f64,
    /// Step multiplier on a rejected trial, in `(0, 1)`.
    pub shrink: f64,
    pub restart: bool,
}

impl Default for ApgOptions {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            max_iters: 300,
            rel_tol: 1e-6,
            initial_step: 1e-2,
            shrink: 0.5,
            restart: true,
        }
    }
}

impl ApgOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config(format!("initial step must be positive, got {}", self.initial_step)));
        }
        Ok(())
    }
}

/// Per-iteration record of one solve. Entry 0 is the initial point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    pub utility: Vec<f64>,
    pub min_se: Vec<f64>,
    pub step: Vec<f64>,
    pub restart: Vec<bool>,
    pub wall_time: Duration,
}

impl SolveTrace {
    fn record(&mut self, u: f64, min_se: f64, step: f64, restart: bool) {
        self.utility.push(u);
        self.min_se.push(min_se);
        self.step.push(step);
        self.restart.push(restart);
    }

    pub fn iterations(&self) -> usize {
        self.utility.len().saturating_sub(1)
    }

    pub fn is_monotone(&self) -> bool {
        self.utility.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,utility,min_se,step,restart")?;
        for i in 0..self.utility.len() {
            writeln!(
                w,
                "{i},{},{},{},{}",
                self.utility[i], self.min_se[i], self.step[i], self.restart[i] as u8
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}

/// Utility values and gradients on one instance.
struct Objective<'a> {
    eval: Evaluator<'a>,
    tape: Tape,
    mu: Var,
    root: Var,
    lambda: f64,
}

impl<'a> Objective<'a> {
    fn new(stats: &'a SystemStats, cfg: &'a RadioConfig, k_act: usize, x0: &Mat, lambda: f64) -> Result<Self> {
        let consts = UtilityConsts::new(stats, cfg, k_act);
        let mut tape = Tape::new();
        let mu = tape.input("mu", x0.clone());
        let root = utility_on_tape(&mut tape, mu, &consts, lambda)?;
        Ok(Self {
            eval: Evaluator::new(stats, cfg, k_act),
            tape,
            mu,
            root,
            lambda,
        })
    }

    fn value(&self, x: &Mat) -> f64 {
        self.eval.utility(x, self.lambda)
    }

    fn gradient(&mut self, x: &Mat, iteration: usize) -> Result<Mat> {
        self.tape.set_input("mu", x.clone())?;
        let g = self.tape.gradient(self.root)?.get(self.mu);
        if g.iter().all(|v| v.is_finite()) {
            return Ok(g);
        }
        let term = match self.tape.first_non_finite() {
            Some((node, op)) => format!("`{op}` (tape node {node})"),
            None => "the backward pass".to_string(),
        };
        Err(Error::Numeric(format!(
            "non-finite utility gradient at iteration {iteration}, first produced by {term}"
        )))
    }
}

/// `1/sqrt(N K_act)` on active columns, 0 on padded ones.
pub fn uniform_init(m: usize, k_max: usize, k_act: usize, antennas: usize) -> Mat {
    let v = 1.0 / ((antennas * k_act) as f64).sqrt();
    Array2::from_shape_fn((m, k_max), |(_, k)| if k < k_act { v } else { 0.0 })
}

fn check_inputs(sample: &ScenarioSample, stats: &SystemStats) -> Result<()> {
    if stats.gbar.dim() != sample.b.dim() {
        return Err(Error::shape(
            "statistics for this sample",
            format!("{:?}", sample.b.dim()),
            format!("{:?}", stats.gbar.dim()),
        ));
    }
    Ok(())
}

/// One projected ascent step from `y` with gradient `g`, backtracking from
/// `step`. Returns `(z, u(z), accepted step)` or `None` when the step
/// underflows before the sufficient-ascent test passes.
fn backtrack(obj: &Objective, y: &Mat, u_y: f64, g: &Mat, step: f64, shrink: f64, antennas: usize) -> Option<(Mat, f64, f64)> {
    let mut s = step;
    while s > 1e-300 {
        let z = project(&(y + &(g * s)), antennas).into_inner();
        let d = &z - y;
        let u_z = obj.value(&z);
        let lin = (g * &d).sum();
        let quad = d.iter().map(|v| v * v).sum::<f64>() / (2.0 * s);
        if u_z >= u_y + lin - quad {
            return Some((z, u_z, s));
        }
        s *= shrink;
    }
    None
}

/// Maximize the smoothed utility of `sample` over the feasible set.
pub fn apg_solve(
    sample: &ScenarioSample,
    stats: &SystemStats,
    cfg: &RadioConfig,
    opts: &ApgOptions,
) -> Result<(PowerMatrix, SolveTrace)> {
    let x0 = uniform_init(sample.m(), sample.k_max(), sample.k_act, cfg.n);
    apg_solve_from(sample, stats, cfg, opts, &x0)
}

/// [`apg_solve`] from a given starting point (projected first).
pub fn apg_solve_from(
    sample: &ScenarioSample,
    stats: &SystemStats,
    cfg: &RadioConfig,
    opts: &ApgOptions,
    init: &Mat,
) -> Result<(PowerMatrix, SolveTrace)> {
    opts.validate()?;
    check_inputs(sample, stats)?;
    let start = Instant::now();
    let n = cfg.n;
    let mut x = project(init, n).into_inner();
    let mut obj = Objective::new(stats, cfg, sample.k_act, &x, opts.lambda)?;
    let mut trace = SolveTrace::default();
    let mut u_x = obj.value(&x);
    trace.record(u_x, obj.eval.min_se(&x), 0.0, false);
    let mut x_prev = x.clone();
    let mut t = 1usize;
    let mut step = opts.initial_step;

    for iter in 1..=opts.max_iters {
        let beta = (t as f64 - 1.0) / (t as f64 + 2.0);
        let y = project(&(&x + &((&x - &x_prev) * beta)), n).into_inner();
        let u_y = obj.value(&y);
        let g = obj.gradient(&y, iter)?;
        let mut restarted = false;
        let mut next = backtrack(&obj, &y, u_y, &g, step, opts.shrink, n);
        let declined = match &next {
            Some((_, u_z, _)) => *u_z < u_x,
            None => true,
        };
        if opts.restart && declined && t > 1 {
            // momentum overshot: plain projected step from the current point
            restarted = true;
            t = 1;
            let g = obj.gradient(&x, iter)?;
            next = backtrack(&obj, &x, u_x, &g, step, opts.shrink, n);
        }
        let plain = restarted || t == 1;
        let Some((z, u_z, s)) = next else { break };
        if opts.restart && u_z < u_x {
            // only reachable without momentum through rounding; keep x
            break;
        }
        step = s / opts.shrink;
        let delta = (u_z - u_x).abs();
        x_prev = std::mem::replace(&mut x, z);
        u_x = u_z;
        t += 1;
        trace.record(u_x, obj.eval.min_se(&x), s, restarted);
        if delta < opts.rel_tol {
            if plain || !opts.restart {
                break;
            }
            // a stalled extrapolated step says little about stationarity;
            // drop the momentum and let a plain step decide
            t = 1;
        }
    }
    trace.wall_time = start.elapsed();
    let mu = PowerMatrix::try_new(x, n, 0.0).map_err(|r| Error::Numeric(format!("solver iterate infeasible: {r:?}")))?;
    Ok((mu, trace))
}

/// Plain projected gradient ascent with backtracking, no momentum. Used as a
/// slow reference solver.
pub fn reference_pgd(
    sample: &ScenarioSample,
    stats: &SystemStats,
    cfg: &RadioConfig,
    lambda: f64,
    iters: usize,
) -> Result<PowerMatrix> {
    let x0 = uniform_init(sample.m(), sample.k_max(), sample.k_act, cfg.n);
    reference_pgd_from(sample, stats, cfg, lambda, iters, &x0).map(|(mu, _)| mu)
}

/// [`reference_pgd`] from a given starting point; also returns the trace.
pub fn reference_pgd_from(
    sample: &ScenarioSample,
    stats: &SystemStats,
    cfg: &RadioConfig,
    lambda: f64,
    iters: usize,
    init: &Mat,
) -> Result<(PowerMatrix, SolveTrace)> {
    if iters == 0 {
        return Err(Error::Config("iters must be at least 1".into()));
    }
    check_inputs(sample, stats)?;
    let start = Instant::now();
    let n = cfg.n;
    let mut x = project(init, n).into_inner();
    let mut obj = Objective::new(stats, cfg, sample.k_act, &x, lambda)?;
    let mut trace = SolveTrace::default();
    let mut u_x = obj.value(&x);
    trace.record(u_x, obj.eval.min_se(&x), 0.0, false);
    let mut step = ApgOptions::default().initial_step;
    for iter in 1..=iters {
        let g = obj.gradient(&x, iter)?;
        let Some((z, u_z, s)) = backtrack(&obj, &x, u_x, &g, step, 0.5, n) else { break };
        if z == x {
            break;
        }
        step = 2.0 * s;
        x = z;
        u_x = u_z;
        trace.record(u_x, obj.eval.min_se(&x), s, false);
    }
    trace.wall_time = start.elapsed();
    let mu = PowerMatrix::try_new(x, n, 0.0).map_err(|r| Error::Numeric(format!("solver iterate infeasible: {r:?}")))?;
    Ok((mu, trace))
}
