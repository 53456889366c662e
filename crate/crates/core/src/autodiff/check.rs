//! Central-difference gradient oracle.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{AdResult, Tape, Var};

/// Worst disagreement between analytic and numeric partials.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(input, row, col, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, usize, f64, f64)>,
}

/// Compare the backward pass of `root` against central differences on a
/// random subsample of at most `samples` coordinates of the named inputs.
///
/// Each coordinate `x` is perturbed by `step * max(1, |x|)`. The relative
/// error is `|a - n| / (|a| + |n| + 1e-12)`. Input values are restored
/// before returning.
pub fn finite_difference_check<R: Rng + ?Sized>(
    tape: &mut Tape,
    root: Var,
    wrt: &[&str],
    step: f64,
    samples: usize,
    rng: &mut R,
) -> AdResult<FdReport> {
    let grads = tape.gradient(root)?;
    let mut coords = Vec::new();
    let mut originals = HashMap::new();
    for &name in wrt {
        let value = tape.value(tape.input_var(name).ok_or_else(|| super::AdError::UnknownInput(name.into()))?).clone();
        for r in 0..value.nrows() {
            for c in 0..value.ncols() {
                coords.push((name, r, c));
            }
        }
        originals.insert(name.to_string(), value);
    }
    coords.shuffle(rng);
    coords.truncate(samples);

    let mut report = FdReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (name, r, c) in coords {
        let analytic = grads.by_name(name)?[[r, c]];
        let h = step * originals[name][[r, c]].abs().max(1.0);
        let mut eval_at = |delta: f64| -> AdResult<f64> {
            // rebind every input so earlier perturbations do not linger
            let mut b = originals.clone();
            b.get_mut(name).expect("collected above")[[r, c]] += delta;
            Ok(tape.evaluate(root, &b)?[[0, 0]])
        };
        let numeric = (eval_at(h)? - eval_at(-h)?) / (2.0 * h);
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((name.to_string(), r, c, analytic, numeric));
        }
    }
    tape.evaluate(root, &originals)?;
    Ok(report)
}
