use std::fmt::Write as _;

use projgan::autodiff::{gradcheck, Graph, NodeId, DEFAULT_STEP};
use projgan::nets::{DiscriminatorConfig, GeneratorConfig, Mlp, OutputActivation};
use projgan::projection::sample_gaussian_projection;
use projgan::rng::{derive_seed, rng, Rng};
use projgan::tensor::Tensor;
use projgan::trainer::{discriminator_terms, generator_terms, OUTPUT_CLAMP};
use rand::Rng as _;

use super::{Check, SuiteOutcome};
use crate::config::RunConfig;
use crate::error::CliResult;

const GRADCHECK_STREAM: u64 = 16;
const BATCH: usize = 4;
const NOISE_DIM: usize = 8;
const DATA_DIM: usize = 16;
const PROJECTED_DIM: usize = 4;
const VIEWS: usize = 2;

/// Uniform entries in `[lo, hi]`, each at least `gap` away from every point in `avoid`.
fn uniform(r: &mut Rng, shape: &[usize], lo: f64, hi: f64, avoid: &[f64], gap: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = lo + (hi - lo) * r.random::<f64>();
            if avoid.iter().all(|a| (v - a).abs() > gap) {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// A named graph with its scalar loss and the leaves to perturb.
struct Case {
    name: String,
    graph: Graph,
    loss: NodeId,
    params: Vec<NodeId>,
}

/// `sum(c ⊙ f(x))` with a random weight `c`, so every output coordinate
/// contributes a distinct upstream gradient.
fn weighted_sum(graph: &mut Graph, y: NodeId, r: &mut Rng) -> CliResult<NodeId> {
    let shape = graph.value(y).shape().to_vec();
    let c = graph.constant(uniform(r, &shape, -1.0, 1.0, &[], 0.0))?;
    let p = graph.mul(y, c)?;
    Ok(graph.sum(p)?)
}

fn primitive_cases(r: &mut Rng) -> CliResult<Vec<Case>> {
    type Build = fn(&mut Graph, NodeId) -> projgan::Result<NodeId>;
    let unary: [(&str, f64, f64, &[f64], Build); 7] = [
        ("leaky_relu", -2.0, 2.0, &[0.0], |g, x| g.leaky_relu(x, 0.2)),
        ("tanh", -2.0, 2.0, &[], |g, x| g.tanh(x)),
        ("sigmoid", -4.0, 4.0, &[], |g, x| g.sigmoid(x)),
        ("log", 0.2, 3.0, &[], |g, x| g.log(x)),
        ("scale", -2.0, 2.0, &[], |g, x| g.scale(x, -1.7)),
        ("offset", -2.0, 2.0, &[], |g, x| g.offset(x, 0.3)),
        ("clamp", -1.0, 1.0, &[-0.5, 0.5], |g, x| g.clamp(x, -0.5, 0.5)),
    ];
    let mut cases = Vec::new();
    for (name, lo, hi, avoid, build) in unary {
        let mut g = Graph::new();
        let x = g.param(uniform(r, &[3, 5], lo, hi, avoid, 1e-3))?;
        let y = build(&mut g, x)?;
        let loss = weighted_sum(&mut g, y, r)?;
        cases.push(Case {
            name: name.into(),
            graph: g,
            loss,
            params: vec![x],
        });
    }

    type BuildPair = fn(&mut Graph, NodeId, NodeId) -> projgan::Result<NodeId>;
    let binary: [(&str, &[usize], &[usize], BuildPair); 4] = [
        ("add", &[3, 5], &[3, 5], |g, a, b| g.add(a, b)),
        ("mul", &[3, 5], &[3, 5], |g, a, b| g.mul(a, b)),
        ("matmul", &[3, 4], &[4, 6], |g, a, b| g.matmul(a, b)),
        ("add_row", &[3, 5], &[5], |g, a, b| g.add_row(a, b)),
    ];
    for (name, sa, sb, build) in binary {
        let mut g = Graph::new();
        let a = g.param(uniform(r, sa, -1.0, 1.0, &[], 0.0))?;
        let b = g.param(uniform(r, sb, -1.0, 1.0, &[], 0.0))?;
        let y = build(&mut g, a, b)?;
        let loss = weighted_sum(&mut g, y, r)?;
        cases.push(Case {
            name: name.into(),
            graph: g,
            loss,
            params: vec![a, b],
        });
    }

    for name in ["mean", "sum"] {
        let mut g = Graph::new();
        let x = g.param(uniform(r, &[3, 5], -1.0, 1.0, &[], 0.0))?;
        let t = g.tanh(x)?;
        let loss = if name == "mean" { g.mean(t)? } else { g.sum(t)? };
        cases.push(Case {
            name: name.into(),
            graph: g,
            loss,
            params: vec![x],
        });
    }
    Ok(cases)
}

fn network_cases(r: &mut Rng, seed: u64) -> CliResult<Vec<Case>> {
    let s = |i: u64| derive_seed(seed, 100 + i);
    let generator = Mlp::generator(&GeneratorConfig {
        noise_dim: NOISE_DIM,
        hidden_widths: vec![128, 32],
        output_dim: DATA_DIM,
        output_activation: OutputActivation::Tanh,
        init_seed: s(0),
    })?;
    let full = Mlp::discriminator(&DiscriminatorConfig {
        input_dim: DATA_DIM,
        hidden_widths: vec![128, 64],
        init_seed: s(1),
    })?;
    let projected: Vec<Mlp> = (0..VIEWS)
        .map(|k| {
            Mlp::discriminator(&DiscriminatorConfig {
                input_dim: PROJECTED_DIM,
                hidden_widths: vec![64, 64],
                init_seed: s(2 + k as u64),
            })
        })
        .collect::<projgan::Result<_>>()?;
    let bank = (0..VIEWS)
        .map(|k| sample_gaussian_projection(DATA_DIM, PROJECTED_DIM, s(10 + k as u64)))
        .collect::<projgan::Result<Vec<_>>>()?;
    let z = uniform(r, &[BATCH, NOISE_DIM], -1.0, 1.0, &[], 0.0);
    let real = uniform(r, &[BATCH, DATA_DIM], -1.0, 1.0, &[], 0.0);
    let fake = generator.predict(&z)?;
    let mut cases = Vec::new();

    // Generator through the full-view discriminator.
    let mut g = Graph::new();
    let zi = g.constant(z.clone())?;
    let fwd = generator.forward(&mut g, zi, true)?;
    let (loss, _) = generator_terms(&mut g, std::slice::from_ref(&full), &[fwd.output], OUTPUT_CLAMP)?;
    cases.push(Case {
        name: "generator_single".into(),
        graph: g,
        loss,
        params: fwd.params,
    });

    // Generator through projected discriminators.
    let mut g = Graph::new();
    let zi = g.constant(z)?;
    let fwd = generator.forward(&mut g, zi, true)?;
    let views = bank
        .iter()
        .map(|p| p.apply_node(&mut g, fwd.output))
        .collect::<projgan::Result<Vec<_>>>()?;
    let (loss, _) = generator_terms(&mut g, &projected, &views, OUTPUT_CLAMP)?;
    cases.push(Case {
        name: "generator_multi".into(),
        graph: g,
        loss,
        params: fwd.params,
    });

    // Full-view discriminator.
    let mut g = Graph::new();
    let params = full.bind(&mut g, true)?;
    let ri = g.constant(real.clone())?;
    let fi = g.constant(fake.clone())?;
    let terms = discriminator_terms(&mut g, &full, &params, ri, fi, OUTPUT_CLAMP)?;
    cases.push(Case {
        name: "discriminator_full".into(),
        graph: g,
        loss: terms.loss,
        params,
    });

    // Projected discriminator on projected batches.
    let mut g = Graph::new();
    let params = projected[0].bind(&mut g, true)?;
    let ri = g.constant(real)?;
    let fi = g.constant(fake)?;
    let rv = bank[0].apply_node(&mut g, ri)?;
    let fv = bank[0].apply_node(&mut g, fi)?;
    let terms = discriminator_terms(&mut g, &projected[0], &params, rv, fv, OUTPUT_CLAMP)?;
    cases.push(Case {
        name: "discriminator_projected".into(),
        graph: g,
        loss: terms.loss,
        params,
    });
    Ok(cases)
}

pub fn gradcheck_suite(cfg: &RunConfig) -> CliResult<SuiteOutcome> {
    let tolerance = cfg.real("gradcheck_tolerance");
    let seed = derive_seed(cfg.int("seed"), GRADCHECK_STREAM);
    let mut r = rng(seed);
    let mut cases = primitive_cases(&mut r)?;
    cases.extend(network_cases(&mut r, seed)?);

    let mut csv = String::from("graph,param,coordinates,max_rel_error,worst_index\n");
    let mut checks = Vec::new();
    for case in &cases {
        let report = gradcheck(&case.graph, case.loss, &case.params, DEFAULT_STEP, tolerance)?;
        for (i, p) in report.params.iter().enumerate() {
            let n = case.graph.value(p.node).len();
            writeln!(csv, "{},{i},{n},{},{}", case.name, p.max_rel_error, p.worst_index).expect("writing to String");
        }
        checks.push(Check::new(
            format!("gradcheck/{}", case.name),
            report.max_rel_error(),
            tolerance.to_string(),
            report.passed(),
        ));
    }
    Ok(SuiteOutcome {
        checks,
        files: vec![("gradcheck.csv".into(), csv)],
    })
}
