//! Central finite-difference checks of analytic gradients.

use super::params::Params;
use super::tape::GradientSet;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
/// Lower bound on the denominator of the relative error, so entries with
/// tiny true gradients are compared absolutely.
pub const FD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Compares `grads` against central differences of `loss` for every entry
/// of every parameter of `params` (visited under `prefix`).
pub fn fd_check<P, F>(params: &P, prefix: &str, grads: &GradientSet, mut loss: F) -> Result<FdReport>
where
    P: Params + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    let mut names = Vec::new();
    params.visit(prefix, &mut |n, a| names.push((n, a.len())));
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (name, len) in names {
        let analytic = grads
            .get(&name)
            .ok_or_else(|| Error::Shape(format!("no gradient for `{name}`")))?;
        for idx in 0..len {
            let perturbed = |delta: f64| {
                let mut p = params.clone();
                p.visit_mut(prefix, &mut |n, a| {
                    if n == name {
                        a.as_slice_mut().expect("standard layout")[idx] += delta;
                    }
                });
                p
            };
            let plus = loss(&perturbed(FD_STEP))?;
            let minus = loss(&perturbed(-FD_STEP))?;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.as_slice().expect("standard layout")[idx];
            let err = relative_error(a, numeric);
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err;
                report.worst = format!("{name}[{idx}]");
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Linear;
    use crate::nn::tape::Tape;
    use ndarray::array;

    fn loss(l: &Linear, tape: &mut Tape) -> Result<crate::nn::tape::Var> {
        let b = l.bind(tape, "lin");
        let x = tape.constant(array![[1.0, -0.5], [0.3, 2.0]]);
        let y = b.forward(tape, x)?;
        let r = tape.relu(y);
        Ok(tape.sum_squares(r))
    }

    #[test]
    fn linear_relu_gradients_match() {
        let l = Linear {
            weight: array![[0.4, -0.2], [0.1, 0.7]],
            bias: array![[0.05, 0.3]],
        };
        let mut t = Tape::new();
        let out = loss(&l, &mut t).unwrap();
        let g = t.backward(out).unwrap();
        let rep = fd_check(&l, "lin", &g, |p| {
            let mut t = Tape::inference();
            let o = loss(p, &mut t)?;
            Ok(t.scalar(o))
        })
        .unwrap();
        assert_eq!(rep.checked, 6);
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let l = Linear {
            weight: array![[1.0]],
            bias: array![[0.0]],
        };
        let mut g = GradientSet::new();
        g.insert("weight".into(), array![[5.0]]);
        g.insert("bias".into(), array![[0.0]]);
        let rep = fd_check(&l, "", &g, |p| Ok(p.weight[[0, 0]].powi(2))).unwrap();
        assert!(rep.max_rel_error > 0.5);
        assert_eq!(rep.worst, "weight[0]");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-5).abs() < 1e-12);
    }
}
