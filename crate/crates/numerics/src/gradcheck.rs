//! Central finite-difference verification of [`Graph::backward`].

use rand::seq::index::sample;
use rand::SeedableRng;

use crate::error::{NumericsError, Result};
use crate::graph::{Graph, Var};
use crate::params::ParameterSet;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero compare on an absolute scale instead of dividing by zero.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares analytic gradients of the scalar built by `loss` against central
/// differences with step `h`, for every trainable parameter.
///
/// The difference quotient is the fourth-order central stencil
/// `(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`. Its truncation error
/// stays below the tolerance even for narrow layer-norm rows, where the
/// curvature is large.
///
/// `max_coords` caps how many coordinates of each parameter are probed
/// (chosen with `seed`); `None` probes all of them.
pub fn check_gradients<F>(
    params: &ParameterSet,
    h: f64,
    max_coords: Option<usize>,
    seed: u64,
    loss: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParameterSet) -> Result<Var>,
{
    let eval = |p: &ParameterSet| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss(&mut g, p)?;
        g.value(l).item()
    };
    let mut g = Graph::new();
    let l = loss(&mut g, params)?;
    let grads = g.backward(l)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates: 0,
    };
    for (name, value, trainable) in params.iter() {
        if !trainable {
            continue;
        }
        let analytic = grads.get(name).ok_or_else(|| {
            NumericsError::Contract(format!("no gradient for trainable `{name}`"))
        })?;
        let n = value.len();
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = value.data()[i];
            let mut at = |offset: f64| -> Result<f64> {
                probe.get_mut(name)?.data_mut()[i] = orig + offset;
                eval(&probe)
            };
            let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
            probe.get_mut(name)?.data_mut()[i] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let a = analytic.data()[i];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.to_string(), i));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}
