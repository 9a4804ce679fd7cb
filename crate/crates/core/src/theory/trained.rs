//! Gradient-trained discriminator on a discrete problem, for comparison with
//! the closed-form optimum.

use crate::autodiff::{AdamConfig, AdamState, Graph};
use crate::error::{Error, Result};
use crate::nets::{DiscriminatorConfig, Mlp};
use crate::tensor::Tensor;
use crate::trainer::OUTPUT_CLAMP;

use super::discrete::DiscreteDistribution;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteTrainingConfig {
    pub hidden_widths: Vec<usize>,
    pub iterations: usize,
    /// `adam.lr` is the initial rate; it decays linearly to `lr / 100`.
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for DiscreteTrainingConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![32, 32],
            iterations: 4000,
            adam: AdamConfig {
                lr: 1e-2,
                beta1: 0.9,
                ..AdamConfig::default()
            },
            seed: 0,
        }
    }
}

/// Minimizes the exact expected loss `−Σ Px log D − Σ Pg log(1 − D)` over the
/// whole grid with a small MLP and returns `D` at every grid point.
pub fn train_discrete_discriminator(
    px: &DiscreteDistribution,
    pg: &DiscreteDistribution,
    config: &DiscreteTrainingConfig,
) -> Result<Vec<f64>> {
    if !px.same_grid(pg) {
        return Err(Error::Contract("distributions must share one grid".into()));
    }
    let n = px.len();
    let d = px.dim();
    let x = Tensor::from_rows(px.points())?;
    let wx = Tensor::matrix(n, 1, px.probs().to_vec())?;
    let wg = Tensor::matrix(n, 1, pg.probs().to_vec())?;
    let mut model = Mlp::discriminator(&DiscriminatorConfig {
        input_dim: d,
        hidden_widths: config.hidden_widths.clone(),
        init_seed: config.seed,
    })?;
    let mut opt = AdamState::new(config.adam, model.params());
    let steps = config.iterations.max(1) as f64;
    for t in 0..config.iterations {
        opt.config.lr = config.adam.lr * (1.0 - 0.99 * t as f64 / steps);
        let mut g = Graph::new();
        let xi = g.constant(x.clone())?;
        let fwd = model.forward(&mut g, xi, true)?;
        let p = g.clamp(fwd.output, OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP)?;
        let lp = g.log(p)?;
        let q = g.scale(p, -1.0)?;
        let q = g.offset(q, 1.0)?;
        let lq = g.log(q)?;
        let wxi = g.constant(wx.clone())?;
        let wgi = g.constant(wg.clone())?;
        let a = g.mul(lp, wxi)?;
        let b = g.mul(lq, wgi)?;
        let s = g.add(a, b)?;
        let s = g.sum(s)?;
        let loss = g.scale(s, -1.0)?;
        let grads = g.backward(loss)?.for_nodes(&g, &fwd.params);
        opt.step(model.params_mut(), &grads)?;
    }
    Ok(model.predict(&x)?.into_data())
}

/// `max |D(y) − D*(y)|` over points where `D*` is defined.
pub fn sup_distance(trained: &[f64], optimal: &[Option<f64>]) -> f64 {
    trained
        .iter()
        .zip(optimal)
        .filter_map(|(t, o)| o.map(|o| (t - o).abs()))
        .fold(0.0, f64::max)
}
