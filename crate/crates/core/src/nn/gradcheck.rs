use rand::seq::index::sample;
use rand::Rng;

use super::{Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// `(parameter, flat index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Relative error with a floor of `1e-6` on the denominator, so two
/// vanishing gradients compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

fn eval<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: for<'g> Fn(&mut Graph<'g>) -> Result<NodeId>,
{
    let mut g = Graph::new(store);
    let loss = f(&mut g)?;
    g.check_finite()?;
    let v = g.value(loss).item();
    if !v.is_finite() {
        return Err(Error::Numeric("grad_check: loss is not finite".into()));
    }
    Ok(v)
}

/// Compare analytic gradients of the scalar computation `f` against central
/// differences `(f(θ+eps) − f(θ−eps)) / 2eps`.
///
/// Each listed parameter is probed at `samples` random coordinates, or at
/// every coordinate when it has fewer. Parameters are restored exactly.
pub fn grad_check<F, R>(
    store: &mut ParamStore,
    params: &[ParamId],
    eps: f64,
    samples: usize,
    rng: &mut R,
    f: F,
) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g>) -> Result<NodeId>,
    R: Rng + ?Sized,
{
    let grads = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coordinates: 0,
        worst: None,
    };
    for &pid in params {
        let n = store.value(pid).len();
        let coords: Vec<usize> = if n <= samples {
            (0..n).collect()
        } else {
            let mut v = sample(rng, n, samples).into_vec();
            v.sort_unstable();
            v
        };
        for i in coords {
            let orig = store.value(pid).data()[i];
            store.get_mut(pid).tensor.data_mut()[i] = orig + eps;
            let plus = eval(store, &f);
            store.get_mut(pid).tensor.data_mut()[i] = orig - eps;
            let minus = eval(store, &f);
            store.get_mut(pid).tensor.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let analytic = grads.get(pid).map_or(0.0, |g| g.data()[i]);
            let err = relative_error(analytic, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((store.get(pid).name.clone(), i, analytic, numeric));
            }
        }
    }
    Ok(report)
}
