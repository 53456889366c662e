//! Closed-form downlink quantities under conjugate beamforming: channel
//! estimate statistics, coherent gains, SINR, spectral efficiency and the
//! log-sum-exp smoothed max-min utility.
//!
//! Everything here is plain `f64` arithmetic with no autodiff, so it doubles
//! as the reference value path for the differentiable utility in
//! [`crate::apg`] and [`crate::training`].

use ndarray::{Array2, Array3};

use crate::config::RadioConfig;
use crate::scenario::ScenarioSample;
use crate::Mat;

/// Per-instance statistics derived from `B` and `Phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemStats {
    /// `M x K` mean square of each estimate entry.
    pub gbar: Mat,
    /// `nu[[i, k, m]]`: coherent gain of UE `i`'s beam toward UE `k` at AP `m`.
    pub nu: Array3<f64>,
    /// `M x K` square roots of the fading coefficients.
    pub bsqrt: Mat,
}

impl SystemStats {
    pub fn new(b: &Mat, phi: &Mat, zeta_p: f64, t_p: usize) -> Self {
        let gbar = mean_square_estimate(b, phi, zeta_p, t_p);
        let nu = nu_tensor(b, &gbar, phi);
        Self {
            bsqrt: b.mapv(f64::sqrt),
            gbar,
            nu,
        }
    }

    pub fn for_sample(sample: &ScenarioSample, cfg: &RadioConfig) -> Self {
        Self::new(&sample.b, &sample.phi, cfg.zeta_p, cfg.t_p)
    }

    pub fn m(&self) -> usize {
        self.gbar.nrows()
    }

    pub fn k(&self) -> usize {
        self.gbar.ncols()
    }
}

/// Mean square of each entry of the MMSE channel estimate.
pub fn mean_square_estimate(b: &Mat, phi: &Mat, zeta_p: f64, t_p: usize) -> Mat {
    let (m, k) = b.dim();
    let snr = zeta_p * t_p as f64;
    Array2::from_shape_fn((m, k), |(mi, ki)| {
        let beta = b[[mi, ki]];
        if beta == 0.0 {
            return 0.0;
        }
        let contaminating: f64 = (0..k).map(|i| b[[mi, i]] * phi[[i, ki]] * phi[[i, ki]]).sum();
        snr * beta * beta / (1.0 + snr * contaminating)
    })
}

/// `nu[[i, k, m]] = Phi[i,k] sqrt(gbar[m,i]) beta[m,k] / beta[m,i]`, zero
/// wherever UE `i` has no fading (padding).
pub fn nu_tensor(b: &Mat, gbar: &Mat, phi: &Mat) -> Array3<f64> {
    let (m, k) = b.dim();
    Array3::from_shape_fn((k, k, m), |(i, ki, mi)| {
        let beta_i = b[[mi, i]];
        if beta_i == 0.0 || phi[[i, ki]] == 0.0 {
            0.0
        } else {
            phi[[i, ki]] * gbar[[mi, i]].sqrt() * b[[mi, ki]] / beta_i
        }
    })
}

/// Downlink SINR of the first `k_act` UEs under power coefficients `mu`.
pub fn sinr(mu: &Mat, stats: &SystemStats, zeta_d: f64, n: usize, k_act: usize) -> Vec<f64> {
    let m = stats.m();
    let nf = n as f64;
    // coherent[i][k] = mu_i^T nu_{i,k}
    let coherent = |i: usize, k: usize| -> f64 { (0..m).map(|mi| mu[[mi, i]] * stats.nu[[i, k, mi]]).sum() };
    let row_power: Vec<f64> = (0..m)
        .map(|mi| (0..k_act).map(|i| mu[[mi, i]] * mu[[mi, i]]).sum())
        .collect();
    (0..k_act)
        .map(|k| {
            let signal = zeta_d * coherent(k, k).powi(2);
            let pilot_interf: f64 = (0..k_act)
                .filter(|&i| i != k)
                .map(|i| zeta_d * coherent(i, k).powi(2))
                .sum();
            let uncorrelated: f64 = (0..m)
                .map(|mi| stats.bsqrt[[mi, k]].powi(2) * row_power[mi])
                .sum();
            signal / (pilot_interf + zeta_d / nf * uncorrelated + 1.0 / (nf * nf))
        })
        .collect()
}

/// Per-UE spectral efficiency in bit/s/Hz.
pub fn spectral_efficiency(gamma: &[f64], t_p: usize, t_c: usize) -> Vec<f64> {
    let prelog = 1.0 - t_p as f64 / t_c as f64;
    gamma.iter().map(|g| prelog * (1.0 + g).log2()).collect()
}

/// Minimum over the first `k_act` entries.
pub fn min_se(se: &[f64], k_act: usize) -> f64 {
    se[..k_act].iter().copied().fold(f64::INFINITY, f64::min)
}

/// `-(1/lambda) ln( mean_k exp(-lambda SE_k) )` over the first `k_act`
/// entries, evaluated with a max shift.
pub fn smoothed_utility(se: &[f64], lambda: f64, k_act: usize) -> f64 {
    let active = &se[..k_act];
    let shift = active.iter().map(|s| -lambda * s).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = active.iter().map(|s| (-lambda * s - shift).exp()).sum();
    -((sum / k_act as f64).ln() + shift) / lambda
}

/// Bundles the statistics and radio constants needed to score power
/// matrices on one instance.
#[derive(Clone, Debug)]
pub struct Evaluator<'a> {
    pub stats: &'a SystemStats,
    pub cfg: &'a RadioConfig,
    pub k_act: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(stats: &'a SystemStats, cfg: &'a RadioConfig, k_act: usize) -> Self {
        Self { stats, cfg, k_act }
    }

    pub fn se(&self, mu: &Mat) -> Vec<f64> {
        let gamma = sinr(mu, self.stats, self.cfg.zeta_d, self.cfg.n, self.k_act);
        spectral_efficiency(&gamma, self.cfg.t_p, self.cfg.t_c)
    }

    pub fn min_se(&self, mu: &Mat) -> f64 {
        min_se(&self.se(mu), self.k_act)
    }

    pub fn utility(&self, mu: &Mat, lambda: f64) -> f64 {
        smoothed_utility(&self.se(mu), lambda, self.k_act)
    }
}
