//! Central finite-difference check of graph gradients.

use super::graph::{Graph, NodeId};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub node: NodeId,
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

/// Relative error with a floor on the denominator so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares reverse-mode gradients of `loss` against central differences,
/// perturbing every coordinate of every node in `params` by `±step` and
/// replaying the graph.
pub fn gradcheck(
    graph: &Graph,
    loss: NodeId,
    params: &[NodeId],
    step: f64,
    tolerance: f64,
) -> Result<GradcheckReport> {
    let grads = graph.backward(loss)?;
    let mut out = Vec::with_capacity(params.len());
    for &p in params {
        let analytic = grads.get_or_zeros(graph, p);
        let base = graph.value(p).clone();
        let mut worst = (0.0f64, 0usize);
        for j in 0..base.len() {
            let mut plus = base.clone();
            plus.data_mut()[j] += step;
            let mut minus = base.clone();
            minus.data_mut()[j] -= step;
            let fp = graph.replay(&[(p, plus)])?.value(loss).item();
            let fm = graph.replay(&[(p, minus)])?.value(loss).item();
            let numeric = (fp - fm) / (2.0 * step);
            let err = relative_error(analytic.data()[j], numeric);
            if err > worst.0 {
                worst = (err, j);
            }
        }
        out.push(ParamCheck {
            node: p,
            max_rel_error: worst.0,
            worst_index: worst.1,
        });
    }
    Ok(GradcheckReport {
        params: out,
        tolerance,
    })
}
