//! Network instance synthesis: AP/UE placement, three-slope path loss with
//! log-normal shadowing, and random pilot reuse.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::config::{RadioConfig, ThreeSlopeParams};
use crate::error::{Error, Result};
use crate::Mat;

/// Random stream for sample `index` under master seed `seed`.
///
/// Streams are independent of generation order, so samples can be produced
/// in parallel and still match a sequential run.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Path loss in dB (a negative number) at distance `d_km`.
pub fn path_loss_db(d_km: f64, p: &ThreeSlopeParams) -> f64 {
    let d = d_km.max(p.d0_km);
    if d > p.d1_km {
        -p.loss_db - 35.0 * d.log10()
    } else {
        -p.loss_db - 15.0 * p.d1_km.log10() - 20.0 * d.log10()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub aps: Vec<[f64; 2]>,
    pub ues: Vec<[f64; 2]>,
}

/// One network instance, zero-padded to `k_max` UEs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSample {
    /// `M x K_max` large-scale fading coefficients (linear).
    pub b: Mat,
    /// `K_max x K_max` pilot Gram magnitudes `|phi_i^H phi_j|`.
    pub phi: Mat,
    pub k_act: usize,
    /// Pilot used by each active UE.
    pub pilot_index: Vec<usize>,
    /// Present for freshly generated samples, absent for ones read from disk.
    pub geometry: Option<Geometry>,
}

impl ScenarioSample {
    /// Build from matrices, recovering pilot labels from the Gram matrix.
    pub fn from_parts(b: Mat, phi: Mat, k_act: usize) -> Result<Self> {
        let mut pilot_index = Vec::with_capacity(k_act);
        let mut next = 0;
        for k in 0..k_act.min(phi.nrows()) {
            match (0..k).find(|&j| phi[[j, k]] == 1.0) {
                Some(j) => pilot_index.push(pilot_index[j]),
                None => {
                    pilot_index.push(next);
                    next += 1;
                }
            }
        }
        let s = Self {
            b,
            phi,
            k_act,
            pilot_index,
            geometry: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    pub fn k_max(&self) -> usize {
        self.b.ncols()
    }

    /// Per-UE activity indicator (the diagonal of the padded Gram matrix).
    pub fn active_mask(&self) -> Vec<f64> {
        (0..self.k_max()).map(|k| self.phi[[k, k]]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, k_max) = self.b.dim();
        if self.phi.dim() != (k_max, k_max) {
            return Err(Error::shape(
                "pilot Gram matrix",
                format!("{k_max}x{k_max}"),
                format!("{}x{}", self.phi.nrows(), self.phi.ncols()),
            ));
        }
        if self.k_act == 0 || self.k_act > k_max {
            return Err(Error::Input(format!("k_act {} outside 1..={k_max}", self.k_act)));
        }
        for mi in 0..m {
            for k in 0..k_max {
                let v = self.b[[mi, k]];
                let ok = if k < self.k_act { v > 0.0 && v.is_finite() } else { v == 0.0 };
                if !ok {
                    return Err(Error::Input(format!("invalid fading coefficient {v} at ({mi}, {k})")));
                }
            }
        }
        for i in 0..k_max {
            for j in 0..k_max {
                let v = self.phi[[i, j]];
                let expected_ok = if i >= self.k_act || j >= self.k_act {
                    v == 0.0
                } else if i == j {
                    v == 1.0
                } else {
                    v == 0.0 || v == 1.0
                };
                if !expected_ok || v != self.phi[[j, i]] {
                    return Err(Error::Input(format!("invalid pilot Gram entry {v} at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

/// Pilot labels for the active UEs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PilotAssignment {
    pub index: Vec<usize>,
}

impl PilotAssignment {
    /// Gram magnitudes padded to `k_max`; zero rows/columns for padded UEs.
    pub fn gram(&self, k_max: usize) -> Mat {
        let mut phi = Array2::zeros((k_max, k_max));
        for (i, &pi) in self.index.iter().enumerate() {
            for (j, &pj) in self.index.iter().enumerate() {
                if pi == pj {
                    phi[[i, j]] = 1.0;
                }
            }
        }
        phi
    }
}

/// The first `min(k_act, t_p)` UEs get distinct pilots; every further UE
/// reuses one drawn uniformly from the `t_p` available.
pub fn assign_pilots<R: Rng + ?Sized>(k_act: usize, t_p: usize, rng: &mut R) -> PilotAssignment {
    let index = (0..k_act)
        .map(|k| if k < t_p { k } else { rng.random_range(0..t_p) })
        .collect();
    PilotAssignment { index }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Draw one instance with `k_act` active UEs padded to `cfg.k_max`.
pub fn generate_scenario<R: Rng + ?Sized>(cfg: &RadioConfig, k_act: usize, rng: &mut R) -> Result<ScenarioSample> {
    if k_act < cfg.k_min || k_act > cfg.k_max {
        return Err(Error::Config(format!(
            "active UE count {k_act} outside [{}, {}]",
            cfg.k_min, cfg.k_max
        )));
    }
    let side = Uniform::new(0.0, cfg.area_side_km).map_err(|e| Error::Config(e.to_string()))?;
    let shadow = Normal::new(0.0, cfg.sigma_sh_db).map_err(|e| Error::Config(e.to_string()))?;
    let mut place = |n: usize| -> Vec<[f64; 2]> { (0..n).map(|_| [side.sample(rng), side.sample(rng)]).collect() };
    let aps = place(cfg.m);
    let ues = place(k_act);

    let mut b = Array2::zeros((cfg.m, cfg.k_max));
    for (mi, &ap) in aps.iter().enumerate() {
        for (k, &ue) in ues.iter().enumerate() {
            let d = distance(ap, ue);
            let z = shadow.sample(rng);
            let z = if d > cfg.path_loss.d1_km { z } else { 0.0 };
            b[[mi, k]] = 10f64.powf((path_loss_db(d, &cfg.path_loss) + z) / 10.0);
        }
    }
    let pilots = assign_pilots(k_act, cfg.t_p, rng);
    Ok(ScenarioSample {
        b,
        phi: pilots.gram(cfg.k_max),
        k_act,
        pilot_index: pilots.index,
        geometry: Some(Geometry { aps, ues }),
    })
}
