use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Graph, NnError, NodeId, ParamStore};

/// Result for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose step had to shrink below `eps` to stay off a kink.
    pub refined: usize,
    /// Coordinates still straddling a ReLU or pooling kink at the smallest step.
    pub skipped_kinks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.max_rel_error < self.tolerance && p.checked > 0)
    }
}

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Smallest step tried when `eps` straddles a kink.
pub const MIN_STEP: f64 = 1e-7;

/// Relative error `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares analytic gradients with central differences.
///
/// `build` must construct a graph ending in a scalar node from the given
/// parameters. When either perturbed pass takes a different ReLU or pooling
/// branch than the unperturbed one, the step is divided by 10 (down to
/// [`MIN_STEP`]) until both sides stay on the same smooth piece; a coordinate
/// still crossing at the smallest step counts as stuck. At most `max_coords`
/// coordinates per tensor are checked, spread evenly over the tensor.
pub fn grad_check<F>(
    params: &ParamStore<f64>,
    build: F,
    eps: f64,
    tolerance: f64,
    max_coords: usize,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&ParamStore<f64>) -> Result<(Graph<f64>, NodeId), NnError>,
{
    let (graph, loss) = build(params)?;
    let fingerprint = graph.branch_fingerprint();
    let analytic = graph.backward(loss)?.for_params(&graph, params);
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for (idx, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let step = if max_coords == 0 || len <= max_coords {
            1
        } else {
            len.div_ceil(max_coords)
        };
        let mut check = ParamCheck {
            name: params.name(idx).to_string(),
            max_rel_error: 0.0,
            checked: 0,
            refined: 0,
            skipped_kinks: 0,
        };
        let mut coord = 0;
        while coord < len {
            let original = work.tensor(idx).data()[coord];
            let mut h = eps;
            loop {
                let mut eval = |value: f64| -> Result<(f64, u64), NnError> {
                    work.tensor_mut(idx).data_mut()[coord] = value;
                    let (g, l) = build(&work)?;
                    Ok((g.value(l).value(), g.branch_fingerprint()))
                };
                let (plus, fp_plus) = eval(original + h)?;
                let (minus, fp_minus) = eval(original - h)?;
                work.tensor_mut(idx).data_mut()[coord] = original;
                let numeric = (plus - minus) / (2.0 * h);
                let err = relative_error(grad.data()[coord], numeric);
                let crossed = fp_plus != fingerprint || fp_minus != fingerprint;
                if !crossed {
                    check.max_rel_error = check.max_rel_error.max(err);
                    check.checked += 1;
                    if h < eps {
                        check.refined += 1;
                    }
                    break;
                }
                if h <= MIN_STEP {
                    check.skipped_kinks += 1;
                    break;
                }
                h /= 10.0;
            }
            coord += step;
        }
        out.push(check);
    }
    Ok(GradCheckReport {
        params: out,
        tolerance,
    })
}
