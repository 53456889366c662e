//! Monte-Carlo check of the channel-estimate statistics.
//!
//! Each trial draws small-scale fading `g[m,k] ~ CN(0, beta[m,k] I_N)` and
//! receiver noise, forms the received pilot signal at every AP, projects it
//! on each UE's pilot and applies the MMSE coefficient. The empirical
//! moments are compared with the closed forms in [`crate::metrics`].

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::RadioConfig;
use crate::error::{Error, Result};
use crate::metrics::SystemStats;
use crate::scenario::ScenarioSample;

/// One simulated draw: true channels and their estimates, both `M x K x N`.
#[derive(Clone, Debug)]
pub struct ChannelDraw {
    pub g: Array3<Complex64>,
    pub g_hat: Array3<Complex64>,
}

fn complex_normal<R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Draw channels and MMSE estimates for the active UEs of `sample`.
///
/// Pilots are orthonormal basis vectors of length `T_p` picked by
/// `sample.pilot_index`. With `noise` off the received pilot signal carries
/// no thermal noise, while the estimator keeps its nominal coefficients.
pub fn simulate_trial<R: Rng + ?Sized>(sample: &ScenarioSample, cfg: &RadioConfig, noise: bool, rng: &mut R) -> ChannelDraw {
    let (m, n, k) = (sample.m(), cfg.n, sample.k_act);
    let tp = cfg.t_p;
    assert!(
        sample.pilot_index.iter().all(|&p| p < tp),
        "pilot labels must be below the pilot length {tp}"
    );
    let amp = (cfg.zeta_p * tp as f64).sqrt();
    let b = &sample.b;
    let mut g = Array3::zeros((m, k, n));
    let mut g_hat = Array3::zeros((m, k, n));
    // received pilot signal of one AP, N x T_p
    let mut y = Array2::<Complex64>::zeros((n, tp));
    for mi in 0..m {
        for ki in 0..k {
            for a in 0..n {
                g[[mi, ki, a]] = complex_normal(b[[mi, ki]], rng);
            }
        }
        y.fill(Complex64::new(0.0, 0.0));
        for ki in 0..k {
            let p = sample.pilot_index[ki];
            for a in 0..n {
                y[[a, p]] += g[[mi, ki, a]] * amp;
            }
        }
        if noise {
            y.mapv_inplace(|v| v + complex_normal(1.0, rng));
        }
        for ki in 0..k {
            let p = sample.pilot_index[ki];
            let contaminating: f64 = (0..k).filter(|&j| sample.pilot_index[j] == p).map(|j| b[[mi, j]]).sum();
            let c = amp * b[[mi, ki]] / (1.0 + amp * amp * contaminating);
            for a in 0..n {
                g_hat[[mi, ki, a]] = y[[a, p]] * c;
            }
        }
    }
    ChannelDraw { g, g_hat }
}

/// Empirical versus closed-form value of one statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct StatCheck {
    pub m: usize,
    /// UE whose true channel enters the statistic.
    pub k: usize,
    /// UE whose estimate enters the statistic (equal to `k` for the mean square).
    pub i: usize,
    pub empirical: f64,
    pub theory: f64,
    /// Standard error of the empirical value.
    pub std_err: f64,
}

impl StatCheck {
    pub fn rel_dev(&self) -> f64 {
        (self.empirical - self.theory).abs() / self.theory
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStatsReport {
    pub trials: usize,
    /// `E|g_hat[m,k][n]|^2` against the closed-form mean square, every active `(m, k)`.
    pub mean_square: Vec<StatCheck>,
    /// `|E[g[m,k]^H g_hat[m,i]]| / N` against `nu[i,k,m] sqrt(gbar[m,i])`, every
    /// active pair sharing a pilot (including `i = k`).
    pub cross: Vec<StatCheck>,
    /// Largest `|E[g_hat[m,k][n]]| / sqrt(gbar[m,k])` over all entries.
    pub max_normalized_mean: f64,
}

impl ChannelStatsReport {
    pub fn max_mean_square_dev(&self) -> f64 {
        self.mean_square.iter().map(StatCheck::rel_dev).fold(0.0, f64::max)
    }

    pub fn max_cross_dev(&self) -> f64 {
        self.cross.iter().map(StatCheck::rel_dev).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "statistic,m,k,i,empirical,theory,rel_dev,std_err")?;
        for (name, rows) in [("mean_square", &self.mean_square), ("cross", &self.cross)] {
            for c in rows {
                writeln!(
                    w,
                    "{name},{},{},{},{},{},{},{}",
                    c.m,
                    c.k,
                    c.i,
                    c.empirical,
                    c.theory,
                    c.rel_dev(),
                    c.std_err
                )?;
            }
        }
        Ok(())
    }
}

/// Running mean and variance of a real sequence.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n
    }

    fn std_err(&self) -> f64 {
        let mean = self.mean();
        ((self.sum_sq / self.n - mean * mean).max(0.0) / self.n).sqrt()
    }
}

/// Compare empirical estimate statistics of `sample` with the closed forms.
pub fn monte_carlo_channel_stats<R: Rng + ?Sized>(
    sample: &ScenarioSample,
    cfg: &RadioConfig,
    trials: usize,
    rng: &mut R,
) -> Result<ChannelStatsReport> {
    if trials == 0 {
        return Err(Error::Config("Monte-Carlo run needs at least one trial".into()));
    }
    sample.validate()?;
    if sample.m() != cfg.m || sample.k_max() != cfg.k_max {
        return Err(Error::shape(
            "sample dimensions (M, K_max)",
            format!("({}, {})", cfg.m, cfg.k_max),
            format!("({}, {})", sample.m(), sample.k_max()),
        ));
    }
    if let Some(p) = sample.pilot_index.iter().find(|&&p| p >= cfg.t_p) {
        return Err(Error::Input(format!(
            "sample uses pilot {p} but only {} orthogonal pilots exist",
            cfg.t_p
        )));
    }
    let (m, n, k) = (sample.m(), cfg.n, sample.k_act);
    let stats = SystemStats::for_sample(sample, cfg);
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|ki| (0..k).map(move |i| (ki, i)))
        .filter(|&(ki, i)| sample.pilot_index[ki] == sample.pilot_index[i])
        .collect();

    let mut power = vec![Moments::default(); m * k];
    let mut mean_re = vec![0.0; m * k * n];
    let mut mean_im = vec![0.0; m * k * n];
    // per (m, pair): real and imaginary parts of g^H g_hat / N
    let mut cross_re = vec![Moments::default(); m * pairs.len()];
    let mut cross_im = vec![Moments::default(); m * pairs.len()];
    for _ in 0..trials {
        let d = simulate_trial(sample, cfg, true, rng);
        for mi in 0..m {
            for ki in 0..k {
                for a in 0..n {
                    let v = d.g_hat[[mi, ki, a]];
                    power[mi * k + ki].push(v.norm_sqr());
                    mean_re[(mi * k + ki) * n + a] += v.re;
                    mean_im[(mi * k + ki) * n + a] += v.im;
                }
            }
            for (p, &(ki, i)) in pairs.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..n {
                    acc += d.g[[mi, ki, a]].conj() * d.g_hat[[mi, i, a]];
                }
                acc /= n as f64;
                cross_re[mi * pairs.len() + p].push(acc.re);
                cross_im[mi * pairs.len() + p].push(acc.im);
            }
        }
    }

    let mut mean_square = Vec::with_capacity(m * k);
    let mut max_normalized_mean: f64 = 0.0;
    for mi in 0..m {
        for ki in 0..k {
            let s = &power[mi * k + ki];
            let gbar = stats.gbar[[mi, ki]];
            mean_square.push(StatCheck {
                m: mi,
                k: ki,
                i: ki,
                empirical: s.mean(),
                theory: gbar,
                std_err: s.std_err(),
            });
            for a in 0..n {
                let idx = (mi * k + ki) * n + a;
                let mean = Complex64::new(mean_re[idx], mean_im[idx]) / trials as f64;
                max_normalized_mean = max_normalized_mean.max(mean.norm() / gbar.sqrt());
            }
        }
    }
    let mut cross = Vec::with_capacity(m * pairs.len());
    for mi in 0..m {
        for (p, &(ki, i)) in pairs.iter().enumerate() {
            let (re, im) = (&cross_re[mi * pairs.len() + p], &cross_im[mi * pairs.len() + p]);
            cross.push(StatCheck {
                m: mi,
                k: ki,
                i,
                empirical: re.mean().hypot(im.mean()),
                theory: stats.nu[[i, ki, mi]] * stats.gbar[[mi, i]].sqrt(),
                std_err: re.std_err().hypot(im.std_err()),
            });
        }
    }
    Ok(ChannelStatsReport {
        trials,
        mean_square,
        cross,
        max_normalized_mean,
    })
}

/// Contaminated instance with every active fading coefficient drawn
/// log-uniformly over one decade around `snr / (zeta_p T_p)`.
///
/// All `cfg.k_max` UEs are active and UE `k` uses pilot `k mod T_p`. The
/// narrow spread keeps every channel/estimate correlation large enough for
/// the Monte-Carlo moments to resolve a few percent.
pub fn spread_instance(cfg: &RadioConfig, snr: f64, seed: u64) -> Result<ScenarioSample> {
    let mut rng = crate::scenario::sample_rng(seed, 0);
    let base = snr / (cfg.zeta_p * cfg.t_p as f64);
    let b = Array2::from_shape_fn((cfg.m, cfg.k_max), |_| base * 10f64.powf(rng.random_range(-0.5..0.5)));
    let phi = Array2::from_shape_fn((cfg.k_max, cfg.k_max), |(i, j)| (i % cfg.t_p == j % cfg.t_p) as u8 as f64);
    ScenarioSample::from_parts(b, phi, cfg.k_max)
}
