//! Central finite-difference checks for tape gradients.
//!
//! Only the forward pass is used to form the numerical estimate, so a check
//! exercises every backward rule on the path independently.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative error below which an analytic/numeric pair is considered equal.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for the relative error. Gradients smaller than this are
/// compared on an absolute scale, where the difference quotient itself is
/// only accurate to roughly `1e-11`.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct InputReport {
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub inputs: Vec<InputReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.inputs
            .iter()
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Compares the tape gradient of `build` against central differences for
/// every entry of every input. `build` receives the inputs registered as
/// parameters and must return a scalar.
pub fn check<F>(inputs: &[Tensor], step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let evaluate = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut tape, &vars)?;
        tape.value(out)
            .item()
            .ok_or_else(|| Error::Usage("gradient check needs a scalar output".into()))
    };

    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.param(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut reports = Vec::with_capacity(inputs.len());
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("parameter gradient");
        let mut report = InputReport {
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for idx in 0..inputs[k].numel() {
            let orig = inputs[k].data()[idx];
            probe[k].data_mut()[idx] = orig + step;
            let plus = evaluate(&probe)?;
            probe[k].data_mut()[idx] = orig - step;
            let minus = evaluate(&probe)?;
            probe[k].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[idx];
            let err = relative_error(a, numeric);
            if err > report.max_rel_error {
                report = InputReport {
                    max_rel_error: err,
                    worst_index: idx,
                    analytic: a,
                    numeric,
                };
            }
        }
        reports.push(report);
    }
    Ok(GradCheckReport { inputs: reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes() {
        let x = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let report = check(&[x], DEFAULT_STEP, |tape, v| {
            let sq = tape.mul(v[0], v[0])?;
            tape.sum(sq)
        })
        .unwrap();
        assert!(report.passes(DEFAULT_TOLERANCE), "{report:?}");
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
    }
}
