use crate::error::Result;
use crate::params::ParameterSet;
use crate::tape::{Tape, Var};

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`
/// so that near-zero gradients are compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat element index of the worst discrepancy.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares reverse-mode gradients of a scalar graph against central finite
/// differences for every element of every parameter.
///
/// `build` must be a pure function of the parameter values: any randomness
/// (dropout masks) has to be re-seeded inside it.
pub fn grad_check<F>(params: &mut ParameterSet, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParameterSet) -> Result<Var>,
{
    params.zero_grads();
    let mut tape = Tape::new();
    let root = build(&mut tape, params)?;
    tape.backward(root, params)?;
    drop(tape);

    let eval = |params: &ParameterSet| -> Result<f64> {
        let mut tape = Tape::new();
        let root = build(&mut tape, params)?;
        Ok(tape.value(root).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let analytic = params.grad(id).clone();
        for i in 0..analytic.len() {
            let original = params.value(id).data()[i];
            params.value_mut(id).data_mut()[i] = original + GRAD_CHECK_STEP;
            let plus = eval(params)?;
            params.value_mut(id).data_mut()[i] = original - GRAD_CHECK_STEP;
            let minus = eval(params)?;
            params.value_mut(id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((params.get(id).name.clone(), i));
            }
        }
    }
    params.zero_grads();
    Ok(report)
}
