//! Per-AP power constraints: `mu >= 0` and `||mu_m||^2 <= 1/N` for every
//! AP row `m`.

use std::ops::Deref;

use crate::Mat;

/// An `M x K` power-control matrix that lies in the feasible set.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerMatrix(Mat);

impl PowerMatrix {
    /// Wrap a matrix that is already feasible at `tol`.
    pub fn try_new(mu: Mat, antennas: usize, tol: f64) -> Result<Self, FeasibilityReport> {
        let report = is_feasible(&mu, antennas, tol);
        if report.feasible {
            Ok(Self(mu))
        } else {
            Err(report)
        }
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

impl Deref for PowerMatrix {
    type Target = Mat;

    fn deref(&self) -> &Mat {
        &self.0
    }
}

/// Project one row in place onto `{x >= 0, ||x||^2 <= radius_sq}`.
pub fn project_row(row: &mut [f64], radius_sq: f64) {
    let mut norm_sq = 0.0;
    for v in row.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
        norm_sq += *v * *v;
    }
    if norm_sq > radius_sq {
        let scale = (radius_sq / norm_sq).sqrt();
        for v in row.iter_mut() {
            *v *= scale;
        }
        // rounding can leave the rescaled norm one ulp above the bound
        while row.iter().map(|v| v * v).sum::<f64>() > radius_sq {
            for v in row.iter_mut() {
                *v *= 1.0 - f64::EPSILON;
            }
        }
    }
}

/// Euclidean projection of every row onto the per-AP feasible set.
///
/// Clamping the negative entries and then rescaling onto the ball is the
/// exact projection onto the intersection of the orthant and the ball.
pub fn project(x: &Mat, antennas: usize) -> PowerMatrix {
    let radius_sq = 1.0 / antennas as f64;
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        match row.as_slice_mut() {
            Some(s) => project_row(s, radius_sq),
            None => {
                let mut tmp = row.to_vec();
                project_row(&mut tmp, radius_sq);
                row.iter_mut().zip(tmp).for_each(|(d, s)| *d = s);
            }
        }
    }
    PowerMatrix(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Negative,
    RowNorm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub row: usize,
    /// Column of the offending entry; `None` for row-norm violations.
    pub col: Option<usize>,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Largest violation found, if any entry or row breaks a constraint.
    pub worst: Option<Violation>,
}

pub fn is_feasible(x: &Mat, antennas: usize, tol: f64) -> FeasibilityReport {
    let radius_sq = 1.0 / antennas as f64;
    let mut worst: Option<Violation> = None;
    let mut consider = |v: Violation| {
        if worst.is_none_or(|w| v.magnitude > w.magnitude) {
            worst = Some(v);
        }
    };
    for (r, row) in x.rows().into_iter().enumerate() {
        let mut norm_sq = 0.0;
        for (c, &v) in row.iter().enumerate() {
            norm_sq += v * v;
            if v < -tol || v.is_nan() {
                consider(Violation {
                    kind: ViolationKind::Negative,
                    row: r,
                    col: Some(c),
                    magnitude: if v.is_nan() { f64::INFINITY } else { -v },
                });
            }
        }
        if norm_sq > radius_sq + tol || norm_sq.is_nan() {
            consider(Violation {
                kind: ViolationKind::RowNorm,
                row: r,
                col: None,
                magnitude: if norm_sq.is_nan() { f64::INFINITY } else { norm_sq - radius_sq },
            });
        }
    }
    FeasibilityReport {
        feasible: worst.is_none(),
        worst,
    }
}
