//! Central-difference verification of analytic gradients.

use super::graph::{Graph, Mode, NodeId};
use super::params::{Grads, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    /// Worst error among parameters whose name starts with `prefix`.
    pub fn max_for_prefix(&self, prefix: &str) -> f64 {
        self.per_param
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Compares the analytic gradient of the scalar built by `loss` against
/// central differences with step `h`, for every entry of every parameter.
/// The error per entry is `|analytic − numeric| / max(1, |numeric|)`.
///
/// `loss` must be deterministic; it receives an evaluation-mode graph.
pub fn grad_check<F>(params: &ParamSet, loss: F, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    grad_check_with(params, loss, h, |g, out, grads| g.backward(out, grads))
}

/// Like [`grad_check`], but with a caller-supplied backward pass. Used to
/// confirm that a corrupted backward is detected.
pub fn grad_check_with<F, B>(
    params: &ParamSet,
    loss: F,
    h: f64,
    backward: B,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
    B: Fn(&Graph, NodeId, &mut Grads) -> Result<()>,
{
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new(p, Mode::EVAL, 0);
        let out = loss(&mut g)?;
        let v = g.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check loss".into()));
        }
        Ok(v)
    };

    let mut analytic = Grads::zeros_like(params);
    {
        let mut g = Graph::new(params, Mode::EVAL, 0);
        let out = loss(&mut g)?;
        if !g.value(out).item().is_finite() {
            return Err(Error::NonFinite("grad_check loss".into()));
        }
        backward(&g, out, &mut analytic)?;
    }

    let mut probe = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    for (id, name, value) in params.iter() {
        let mut worst: f64 = 0.0;
        for k in 0..value.numel() {
            let orig = value.data()[k];
            let (up, down) = (orig + h, orig - h);
            probe.get_mut(id).data_mut()[k] = up;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = down;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;
            // divide by the realized step, not 2h, to avoid representation error
            let numeric = (plus - minus) / (up - down);
            let err = (analytic.get(id).data()[k] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
        per_param.push(ParamError {
            name: name.to_string(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport { per_param })
}
