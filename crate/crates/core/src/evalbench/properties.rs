//! Structural property checks shared by the `validate` command and the
//! acceptance harness.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::apg::{apg_solve, ApgOptions};
use crate::config::RadioConfig;
use crate::error::Result;
use crate::feasible::{is_feasible, project};
use crate::gat::{forward, init_params, GatParams, PilotMode};
use crate::metrics::{min_se, smoothed_utility, SystemStats};
use crate::scenario::{generate_scenario, sample_rng, ScenarioSample};
use crate::Mat;

/// Column `j` of the result is UE `perm[j]` of `s`.
pub fn permute_ues(s: &ScenarioSample, perm: &[usize]) -> Result<ScenarioSample> {
    let k = s.k_max();
    let b = Array2::from_shape_fn(s.b.dim(), |(m, j)| s.b[[m, perm[j]]]);
    let phi = Array2::from_shape_fn((k, k), |(i, j)| s.phi[[perm[i], perm[j]]]);
    ScenarioSample::from_parts(b, phi, s.k_act)
}

/// Row `m` of the result is AP `perm[m]` of `s`, with the per-AP input
/// affine parameters permuted alongside.
pub fn permute_aps(s: &ScenarioSample, p: &GatParams, perm: &[usize]) -> Result<(ScenarioSample, GatParams)> {
    let b = Array2::from_shape_fn(s.b.dim(), |(m, k)| s.b[[perm[m], k]]);
    let ps = ScenarioSample::from_parts(b, s.phi.clone(), s.k_act)?;
    let mut pp = p.clone();
    for name in ["pre.alpha", "pre.beta"] {
        let t = p.get(name);
        pp.tensors
            .insert(name.into(), Array2::from_shape_fn(t.dim(), |(m, c)| t[[perm[m], c]]));
    }
    Ok((ps, pp))
}

/// `s` with `extra` inactive UEs appended.
pub fn pad_ues(s: &ScenarioSample, extra: usize) -> Result<ScenarioSample> {
    let (m, k) = s.b.dim();
    let mut b = Array2::zeros((m, k + extra));
    b.slice_mut(s![.., ..k]).assign(&s.b);
    let mut phi = Array2::zeros((k + extra, k + extra));
    phi.slice_mut(s![..k, ..k]).assign(&s.phi);
    ScenarioSample::from_parts(b, phi, s.k_act)
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Initial parameters with every non-weight tensor randomized, so biases,
/// affine maps and norms all take part in the checks.
pub fn randomized_params(seed: u64, m: usize) -> GatParams {
    let mut p = init_params(seed, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (name, t) in p.tensors.iter_mut() {
        if !name.ends_with(".w") {
            t.mapv_inplace(|v| v + rng.random_range(-0.3..=0.3));
        }
    }
    p
}

/// Outcome of one property over all instances.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyCheck {
    pub name: String,
    pub cases: usize,
    /// Worst observed deviation (0 for exact checks that passed).
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PropertyCheck {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            cases,
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

/// Tolerance of the equivariance and padding checks.
pub const EQUIVARIANCE_TOL: f64 = 1e-9;

/// Equivariance, padding, feasibility and bound checks on `instances`
/// random samples of `cfg` (plus `10 * instances` random vectors for the
/// projection and the utility bound).
pub fn property_suite(cfg: &RadioConfig, instances: usize, seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ue_perm = 0.0f64;
    let mut ap_perm = 0.0f64;
    let mut padding = 0.0f64;
    let mut gat_infeasible = 0usize;
    let mut apg_infeasible = 0usize;
    let mut apg_nonmonotone = 0usize;
    for i in 0..instances {
        let k_act = rng.random_range(cfg.k_min..=cfg.k_max);
        let s = generate_scenario(cfg, k_act, &mut sample_rng(seed, i as u64))?;
        let p = randomized_params(seed.wrapping_add(i as u64), cfg.m);
        let base = forward(&s, &p, cfg.n, PilotMode::Aware)?;
        gat_infeasible += !is_feasible(&base, cfg.n, 0.0).feasible as usize;

        // shuffle active UEs among themselves and padded ones among themselves
        let mut perm: Vec<usize> = (0..k_act).collect();
        perm.shuffle(&mut rng);
        let mut tail: Vec<usize> = (k_act..cfg.k_max).collect();
        tail.shuffle(&mut rng);
        perm.extend(tail);
        let out = forward(&permute_ues(&s, &perm)?, &p, cfg.n, PilotMode::Aware)?;
        let want = Array2::from_shape_fn(base.dim(), |(m, j)| base[[m, perm[j]]]);
        ue_perm = ue_perm.max(max_abs_diff(&out, &want));

        let mut aps: Vec<usize> = (0..cfg.m).collect();
        aps.shuffle(&mut rng);
        let (ps, pp) = permute_aps(&s, &p, &aps)?;
        let out = forward(&ps, &pp, cfg.n, PilotMode::Aware)?;
        let want = Array2::from_shape_fn(base.dim(), |(m, k)| base[[aps[m], k]]);
        ap_perm = ap_perm.max(max_abs_diff(&out, &want));

        let extra = 1 + i % 4;
        let out = forward(&pad_ues(&s, extra)?, &p, cfg.n, PilotMode::Aware)?;
        let head = out.slice(s![.., ..cfg.k_max]).to_owned();
        let tail_max = out.slice(s![.., cfg.k_max..]).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        padding = padding.max(max_abs_diff(&head, &base)).max(tail_max);

        let st = SystemStats::for_sample(&s, cfg);
        let (mu, trace) = apg_solve(&s, &st, cfg, &ApgOptions::default())?;
        apg_infeasible += !is_feasible(&mu, cfg.n, 0.0).feasible as usize;
        apg_nonmonotone += !trace.is_monotone() as usize;
    }

    let vectors = 10 * instances.max(1);
    let mut proj_infeasible = 0usize;
    let mut proj_not_idempotent = 0usize;
    let mut sandwich = 0usize;
    for _ in 0..vectors {
        let (m, k) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let n = rng.random_range(1..=8);
        let x = Array2::from_shape_fn((m, k), |_| rng.random_range(-2.0..2.0));
        let once = project(&x, n);
        proj_infeasible += !is_feasible(&once, n, 0.0).feasible as usize;
        proj_not_idempotent += (*project(&once, n) != *once) as usize;

        let len = rng.random_range(1..=40);
        let se: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..10.0)).collect();
        let lambda = 10f64.powf(rng.random_range(-1.0..2.0));
        let u = smoothed_utility(&se, lambda, len);
        let lo = min_se(&se, len);
        let slack = 1e-12 * lo.abs().max(1.0);
        sandwich += !(u >= lo - slack && u <= lo + (len as f64).ln() / lambda + slack) as usize;
    }

    let count = |name: &str, cases: usize, bad: usize| PropertyCheck::new(name, cases, bad as f64, 0.0);
    Ok(vec![
        PropertyCheck::new("ue_permutation_equivariance", instances, ue_perm, EQUIVARIANCE_TOL),
        PropertyCheck::new("ap_permutation_equivariance", instances, ap_perm, EQUIVARIANCE_TOL),
        PropertyCheck::new("padding_invariance", instances, padding, EQUIVARIANCE_TOL),
        count("gat_output_feasible", instances, gat_infeasible),
        count("apg_output_feasible", instances, apg_infeasible),
        count("apg_utility_monotone", instances, apg_nonmonotone),
        count("projection_feasible", vectors, proj_infeasible),
        count("projection_idempotent", vectors, proj_not_idempotent),
        count("utility_sandwich_bound", vectors, sandwich),
    ])
}
