//! Adversarial losses, both as graph builders (used by the trainer) and as
//! plain evaluations.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::nets::Mlp;
use crate::projection::{ProjectionBank, ProjectionOperator};
use crate::tensor::Tensor;

/// Discriminator outputs are clamped into `[c, 1 − c]` before any log.
pub const OUTPUT_CLAMP: f64 = 1e-7;

/// Nodes of one discriminator loss evaluation.
#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorTerms {
    pub loss: NodeId,
    pub real_output: NodeId,
    pub fake_output: NodeId,
}

fn mean_log(graph: &mut Graph, out: NodeId, clamp: f64, complement: bool) -> Result<NodeId> {
    let mut p = graph.clamp(out, clamp, 1.0 - clamp)?;
    if complement {
        p = graph.scale(p, -1.0)?;
        p = graph.offset(p, 1.0)?;
    }
    let l = graph.log(p)?;
    graph.mean(l)
}

fn require_rows(graph: &Graph, id: NodeId, what: &str) -> Result<()> {
    let shape = graph.value(id).shape();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::Contract(format!("{what} batch must be a non-empty matrix, got {shape:?}")));
    }
    Ok(())
}

/// `−[mean log D(real) + mean log(1 − D(fake))]` for already projected
/// inputs, with `params` bound by [`Mlp::bind`].
pub fn discriminator_terms(
    graph: &mut Graph,
    discriminator: &Mlp,
    params: &[NodeId],
    real: NodeId,
    fake: NodeId,
    clamp: f64,
) -> Result<DiscriminatorTerms> {
    require_rows(graph, real, "real")?;
    require_rows(graph, fake, "fake")?;
    let real_output = discriminator.forward_bound(graph, real, params)?;
    let fake_output = discriminator.forward_bound(graph, fake, params)?;
    let a = mean_log(graph, real_output, clamp, false)?;
    let b = mean_log(graph, fake_output, clamp, true)?;
    let sum = graph.add(a, b)?;
    let loss = graph.scale(sum, -1.0)?;
    Ok(DiscriminatorTerms {
        loss,
        real_output,
        fake_output,
    })
}

/// `−(1/K) Σ_k mean log D_k(y_k)` where `views[k]` is the (projected)
/// generator output seen by discriminator `k`. Discriminator parameters enter
/// as constants. Per-k terms are added in index order.
pub fn generator_terms(
    graph: &mut Graph,
    discriminators: &[Mlp],
    views: &[NodeId],
    clamp: f64,
) -> Result<(NodeId, Vec<NodeId>)> {
    if discriminators.is_empty() || discriminators.len() != views.len() {
        return Err(Error::Contract(format!(
            "generator loss needs one view per discriminator, got {} views for {}",
            views.len(),
            discriminators.len()
        )));
    }
    let mut outputs = Vec::with_capacity(views.len());
    let mut total: Option<NodeId> = None;
    for (d, &y) in discriminators.iter().zip(views) {
        require_rows(graph, y, "fake")?;
        let out = d.forward(graph, y, false)?.output;
        outputs.push(out);
        let term = mean_log(graph, out, clamp, false)?;
        total = Some(match total {
            None => term,
            Some(t) => graph.add(t, term)?,
        });
    }
    let total = total.expect("at least one discriminator");
    let loss = graph.scale(total, -1.0 / discriminators.len() as f64)?;
    Ok((loss, outputs))
}

fn view(projection: Option<&ProjectionOperator>, x: &Tensor) -> Result<Tensor> {
    match projection {
        Some(p) => p.apply(x),
        None => Ok(x.clone()),
    }
}

/// Discriminator loss value on raw batches; `projection` is `None` for the
/// single-discriminator baseline.
pub fn discriminator_loss(
    discriminator: &Mlp,
    real: &Tensor,
    fake: &Tensor,
    projection: Option<&ProjectionOperator>,
) -> Result<f64> {
    let mut g = Graph::new();
    let r = g.constant(view(projection, real)?)?;
    let f = g.constant(view(projection, fake)?)?;
    let params = discriminator.bind(&mut g, false)?;
    let t = discriminator_terms(&mut g, discriminator, &params, r, f, OUTPUT_CLAMP)?;
    Ok(g.value(t.loss).item())
}

/// Generator loss value for noise `z`; `bank` is `None` for the baseline, in
/// which case exactly one discriminator is expected.
pub fn generator_loss(
    generator: &Mlp,
    discriminators: &[Mlp],
    bank: Option<&ProjectionBank>,
    z: &Tensor,
) -> Result<f64> {
    let mut g = Graph::new();
    let zi = g.constant(z.clone())?;
    let x = generator.forward(&mut g, zi, false)?.output;
    let views = match bank {
        Some(b) => {
            if b.len() != discriminators.len() {
                return Err(Error::Contract(format!(
                    "bank has {} operators for {} discriminators",
                    b.len(),
                    discriminators.len()
                )));
            }
            b.operators()
                .iter()
                .map(|op| op.apply_node(&mut g, x))
                .collect::<Result<Vec<_>>>()?
        }
        None => vec![x],
    };
    let (loss, _) = generator_terms(&mut g, discriminators, &views, OUTPUT_CLAMP)?;
    Ok(g.value(loss).item())
}
