//! The smoothed max-min utility expressed on an autodiff [`Tape`].
//!
//! Mirrors [`crate::metrics`] operation for operation; the two paths are
//! cross-checked in tests.

use std::sync::Arc;

use ndarray::Array2;

use crate::autodiff::{AdResult, Tape, Var};
use crate::config::RadioConfig;
use crate::metrics::SystemStats;
use crate::Mat;

/// Per-instance constants of the utility, restricted to the active UEs.
#[derive(Clone, Debug)]
pub struct UtilityConsts {
    k_act: usize,
    /// Row `i * K + k` holds `nu_{i,k}` over the APs.
    nu_flat: Mat,
    /// `K x M` fading coefficients.
    beta_t: Mat,
    /// For row `i * K + k` of `nu_flat`: `i`.
    pair_src: Arc<[usize]>,
    /// For row `i * K + k`: `k`.
    pair_dst: Arc<[usize]>,
    /// Rows `k * K + k`.
    diag: Arc<[usize]>,
    active: Arc<[usize]>,
    zeta_d: f64,
    antennas: f64,
    prelog: f64,
}

impl UtilityConsts {
    pub fn new(stats: &SystemStats, cfg: &RadioConfig, k_act: usize) -> Self {
        let m = stats.m();
        let k = k_act;
        let nu_flat = Array2::from_shape_fn((k * k, m), |(r, mi)| stats.nu[[r / k, r % k, mi]]);
        let beta_t = Array2::from_shape_fn((k, m), |(ki, mi)| stats.bsqrt[[mi, ki]].powi(2));
        Self {
            k_act,
            nu_flat,
            beta_t,
            pair_src: (0..k * k).map(|r| r / k).collect(),
            pair_dst: (0..k * k).map(|r| r % k).collect(),
            diag: (0..k).map(|i| i * k + i).collect(),
            active: (0..k).collect(),
            zeta_d: cfg.zeta_d,
            antennas: cfg.n as f64,
            prelog: cfg.prelog(),
        }
    }

    pub fn k_act(&self) -> usize {
        self.k_act
    }
}

/// Per-UE SINR (`K_act x 1`) for the `M x K_max` power matrix `mu`.
pub fn sinr_on_tape(tape: &mut Tape, mu: Var, c: &UtilityConsts) -> AdResult<Var> {
    let k = c.k_act;
    let p_all = tape.transpose(mu)?;
    let p = tape.gather_rows(p_all, c.active.clone())?; // K x M
    // coherent[i,k] = mu_i . nu_{i,k}
    let p_pairs = tape.gather_rows(p, c.pair_src.clone())?;
    let nu = tape.constant(c.nu_flat.clone());
    let prod = tape.mul(p_pairs, nu)?;
    let coherent = tape.row_sum(prod)?;
    let coherent_sq = tape.square(coherent)?;
    let total = tape.segment_sum(coherent_sq, c.pair_dst.clone(), k)?;
    let signal = tape.gather_rows(coherent_sq, c.diag.clone())?;
    let interference = tape.sub(total, signal)?;
    // sum_i ||B_k mu_i||^2 = sum_m beta_{m,k} sum_i mu_{m,i}^2
    let p_sq = tape.square(p)?;
    let row_power = tape.col_sum(p_sq)?; // 1 x M
    let row_power = tape.transpose(row_power)?;
    let beta_t = tape.constant(c.beta_t.clone());
    let uncorrelated = tape.matmul(beta_t, row_power)?;

    let interference = tape.scale(interference, c.zeta_d)?;
    let uncorrelated = tape.scale(uncorrelated, c.zeta_d / c.antennas)?;
    let den = tape.add(interference, uncorrelated)?;
    let den = tape.offset(den, 1.0 / (c.antennas * c.antennas))?;
    let num = tape.scale(signal, c.zeta_d)?;
    tape.div(num, den)
}

/// Per-UE spectral efficiency (`K_act x 1`).
pub fn se_on_tape(tape: &mut Tape, mu: Var, c: &UtilityConsts) -> AdResult<Var> {
    let gamma = sinr_on_tape(tape, mu, c)?;
    let one_plus = tape.offset(gamma, 1.0)?;
    let ln = tape.log(one_plus)?;
    tape.scale(ln, c.prelog / std::f64::consts::LN_2)
}

/// Smoothed max-min utility (`1 x 1`).
pub fn utility_on_tape(tape: &mut Tape, mu: Var, c: &UtilityConsts, lambda: f64) -> AdResult<Var> {
    let se = se_on_tape(tape, mu, c)?;
    let scaled = tape.scale(se, -lambda)?;
    let lse = tape.log_sum_exp(scaled)?;
    let mean = tape.offset(lse, -(c.k_act as f64).ln())?;
    tape.scale(mean, -1.0 / lambda)
}
