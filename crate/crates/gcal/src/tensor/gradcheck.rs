//! Central-difference verification of tape gradients.

use super::matrix::DenseMatrix;
use super::params::ParamSet;
use super::tape::Gradients;

/// Worst observed disagreement between analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares analytic gradients against central differences of `loss_fn`.
///
/// For every scalar parameter entry, the entry is perturbed by `±eps`, the
/// loss re-evaluated, and `(f(x+eps) - f(x-eps)) / (2 eps)` compared to the
/// tape gradient. Relative error uses `max(|analytic|, |numeric|, 1e-8)` as
/// the denominator so near-zero gradients do not blow up the ratio.
///
/// `loss_fn` must be a pure function of the parameter values.
pub fn finite_difference_check<F>(
    params: &mut ParamSet,
    analytic: &Gradients,
    eps: f64,
    mut loss_fn: F,
) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };

    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let (rows, cols) = params.value(id).shape();
        let grad: DenseMatrix = analytic
            .get(id)
            .cloned()
            .unwrap_or_else(|| DenseMatrix::zeros(rows, cols));
        for r in 0..rows {
            for c in 0..cols {
                let original = params.value(id).get(r, c);

                params.value_mut(id).set(r, c, original + eps);
                let plus = loss_fn(params);
                params.value_mut(id).set(r, c, original - eps);
                let minus = loss_fn(params);
                params.value_mut(id).set(r, c, original);

                let numeric = (plus - minus) / (2.0 * eps);
                let a = grad.get(r, c);
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                let rel = (a - numeric).abs() / denom;
                report.checked += 1;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst_param = params.name(id).to_string();
                    report.worst_index = (r, c);
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
    }
    report
}
