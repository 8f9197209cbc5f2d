//! Central finite-difference check of [`Tape::backward`].

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Denominator floor of the relative error, so entries whose true
/// gradient is zero are judged on absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub passed: bool,
    pub max_relative_error: f64,
    /// `(input index, flat entry index)` of the worst entry.
    pub worst_entry: Option<(usize, usize)>,
    pub entries_checked: usize,
}

/// Compares analytic gradients of `build` with central differences of step
/// `h` for every entry of every input. `build` receives one parameter node
/// per input and must return a 1×1 node.
pub fn finite_diff_check<T, F>(
    inputs: &[DenseMatrix<T>],
    h: T,
    tolerance: f64,
    build: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[DenseMatrix<T>]| -> Result<T> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.param(m.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        passed: true,
        max_relative_error: 0.0,
        worst_entry: None,
        entries_checked: 0,
    };
    let two_h = h + h;
    let mut work: Vec<DenseMatrix<T>> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let zero = DenseMatrix::zeros(inputs[which].rows(), inputs[which].cols());
        let analytic = grads.get(*var).unwrap_or(&zero);
        for k in 0..inputs[which].len() {
            let orig = work[which].as_slice()[k];
            work[which].as_mut_slice()[k] = orig + h;
            let plus = eval(&work)?;
            work[which].as_mut_slice()[k] = orig - h;
            let minus = eval(&work)?;
            work[which].as_mut_slice()[k] = orig;

            let numeric = ((plus - minus) / two_h).to_f64_lossy();
            let exact = analytic.as_slice()[k].to_f64_lossy();
            let denom = numeric.abs().max(exact.abs()).max(RELATIVE_ERROR_FLOOR);
            let rel = (numeric - exact).abs() / denom;
            report.entries_checked += 1;
            if rel > report.max_relative_error || report.worst_entry.is_none() {
                report.max_relative_error = rel;
                report.worst_entry = Some((which, k));
            }
        }
    }
    report.passed = report.max_relative_error <= tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_composition_is_exact() {
        let x = DenseMatrix::from_rows(&[vec![0.3, -0.2], vec![0.9, 0.1]]).unwrap();
        let r = finite_diff_check(&[x], 1e-4, 1e-12, |t, v| t.sum(v[0])).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.max_relative_error < 1e-10);
        assert_eq!(r.entries_checked, 4);
    }

    #[test]
    fn detects_wrong_gradient() {
        // relu has a kink: evaluate exactly at it with a tiny tolerance.
        let x = DenseMatrix::row_vector(vec![0.0]);
        let r = finite_diff_check(&[x], 1e-4, 1e-6, |t, v| {
            let r = t.relu(v[0])?;
            t.sum(r)
        })
        .unwrap();
        assert!(!r.passed);
    }
}
