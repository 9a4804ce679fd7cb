use std::f64::consts::LN_2;

use projgan::autodiff::{AdamConfig, AdamState, Graph};
use projgan::data::{DataSource, EmbeddedRing};
use projgan::io::partial_path;
use projgan::linalg::{row_space_projector, to_dmatrix};
use projgan::nets::{sample_noise, DiscriminatorConfig, Mlp, NoiseDistribution};
use projgan::projection::{ProjectionBank, ProjectionOperator, ProjectionSpec};
use projgan::rng::derive_seed;
use projgan::trainer::{
    discriminator_loss, discriminator_terms, generator_loss, generator_terms, metrics_header, mode_coverage,
    parse_metrics_csv, run, streams, BankPlan, GanExperiment, Mode, Trainer, METRICS_FILE, OUTPUT_CLAMP,
};
use projgan::Tensor;

/// Discriminator `sigmoid(x · w + b)` with no hidden layer.
fn linear_discriminator(w: Vec<f64>, b: f64) -> Mlp {
    let d = w.len();
    let mut net = Mlp::discriminator(&DiscriminatorConfig {
        input_dim: d,
        hidden_widths: vec![],
        init_seed: 0,
    })
    .unwrap();
    net.set_params(vec![Tensor::matrix(d, 1, w).unwrap(), Tensor::vector(vec![b]).unwrap()])
        .unwrap();
    net
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn ring_source(d: usize) -> DataSource {
    DataSource::EmbeddedRing(EmbeddedRing::new(8, d, 0.02, 0).unwrap())
}

fn experiment(mode: Mode, d: usize, seed: u64) -> GanExperiment {
    let plan = BankPlan {
        spec: ProjectionSpec::Gaussian {
            input_dim: d,
            output_dim: 2,
        },
        orthonormalize: true,
    };
    let bank = matches!(mode, Mode::Multi { .. }).then_some(plan);
    let mut e = GanExperiment::desk(mode, d, bank, seed).unwrap();
    e.iterations = 20;
    e.batch_size = 16;
    e
}

#[test]
fn discriminator_loss_hand_values() {
    let x = Tensor::matrix(4, 2, vec![0.3, -0.1, 0.0, 0.5, 1.0, 1.0, -0.7, 0.2]).unwrap();
    let half = linear_discriminator(vec![0.0, 0.0], 0.0);
    assert!((discriminator_loss(&half, &x, &x, None).unwrap() - 2.0 * LN_2).abs() < 1e-12);

    let p = sigmoid(1.0);
    let biased = linear_discriminator(vec![0.0, 0.0], 1.0);
    let want = -(p.ln() + (1.0 - p).ln());
    assert!((discriminator_loss(&biased, &x, &x, None).unwrap() - want).abs() < 1e-12);

    // Saturated at 1: the fake term is clamped to log(1e-7).
    let saturated = linear_discriminator(vec![0.0, 0.0], 1000.0);
    let want = -((1.0 - OUTPUT_CLAMP).ln() + OUTPUT_CLAMP.ln());
    let got = discriminator_loss(&saturated, &x, &x, None).unwrap();
    assert!((got - want).abs() < 1e-9);
    assert!((got - 16.118).abs() < 1e-3);

    // Perfect separation drives the loss down to the clamp floor.
    let sharp = linear_discriminator(vec![50.0], 0.0);
    let real = Tensor::matrix(3, 1, vec![1.0; 3]).unwrap();
    let fake = Tensor::matrix(3, 1, vec![-1.0; 3]).unwrap();
    let floor = -2.0 * (1.0 - OUTPUT_CLAMP).ln();
    assert!((discriminator_loss(&sharp, &real, &fake, None).unwrap() - floor).abs() < 1e-15);
    assert!(floor < 3e-7);
}

#[test]
fn generator_loss_averages_views() {
    let g = Mlp::generator(&projgan::nets::GeneratorConfig::desk(3, 1)).unwrap();
    let z = sample_noise(NoiseDistribution::Uniform, 8, 32, 2).unwrap();
    let half = linear_discriminator(vec![0.0, 0.0], 0.0);
    let biased = linear_discriminator(vec![0.0, 0.0], 2.0);
    let ops = vec![
        ProjectionOperator::from_matrix(Tensor::matrix(2, 3, vec![1., 0., 0., 0., 1., 0.]).unwrap()).unwrap(),
        ProjectionOperator::from_matrix(Tensor::matrix(2, 3, vec![0., 1., 0., 0., 0., 1.]).unwrap()).unwrap(),
    ];
    let bank = ProjectionBank::from_operators(ops, 0).unwrap();
    let got = generator_loss(&g, &[half.clone(), biased], Some(&bank), &z).unwrap();
    let want = 0.5 * (LN_2 - sigmoid(2.0).ln());
    assert!((got - want).abs() < 1e-12);
    let single = linear_discriminator(vec![0.0, 0.0, 0.0], 0.0);
    assert!((generator_loss(&g, &[single], None, &z).unwrap() - LN_2).abs() < 1e-12);
}

#[test]
fn clamped_outputs_have_zero_gradient() {
    let mut g = Graph::new();
    let x = g.param(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap()).unwrap();
    let d = linear_discriminator(vec![1000.0], 0.0);
    let params = d.bind(&mut g, true).unwrap();
    let t = discriminator_terms(&mut g, &d, &params, x, x, OUTPUT_CLAMP).unwrap();
    let grads = g.backward(t.loss).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn per_view_gradient_lies_in_operator_row_space() {
    let d = 6;
    let bank = ProjectionBank::from_operators(
        (0..3)
            .map(|k| projgan::projection::sample_gaussian_projection(d, 2, k).unwrap())
            .collect(),
        0,
    )
    .unwrap();
    let discs: Vec<Mlp> = (0..3)
        .map(|k| Mlp::discriminator(&DiscriminatorConfig::desk_projected(2, 10 + k)).unwrap())
        .collect();
    for k in 0..3 {
        let mut g = Graph::new();
        let x = g
            .param(sample_noise(NoiseDistribution::Uniform, 5, d, 20 + k as u64).unwrap())
            .unwrap();
        let y = bank.get(k).apply_node(&mut g, x).unwrap();
        let (loss, _) = generator_terms(&mut g, &discs[k..=k], &[y], OUTPUT_CLAMP).unwrap();
        let grad = to_dmatrix(g.backward(loss).unwrap().get(x).unwrap()).unwrap();
        let p = row_space_projector(bank.get(k).dense_matrix()).unwrap();
        let residual = (&grad * &p - &grad).abs().max();
        assert!(residual <= 1e-10 * grad.abs().max().max(1.0));
        assert!(grad.abs().max() > 0.0);
    }
}

#[test]
fn frozen_generator_keeps_its_parameters() {
    let source = ring_source(4);
    let mut e = experiment(Mode::Multi { discriminators: 3 }, 4, 1);
    e.generator_adam.lr = 0.0;
    let mut t = Trainer::new(e, &source).unwrap();
    let before = t.generator().clone();
    let d_before = t.discriminators().to_vec();
    for _ in 0..10 {
        t.step().unwrap();
    }
    assert_eq!(t.generator(), &before);
    assert_ne!(t.discriminators(), &d_before[..]);
}

#[test]
fn zero_learning_rates_leave_all_state_unchanged() {
    let source = ring_source(4);
    let mut e = experiment(Mode::Multi { discriminators: 2 }, 4, 2);
    e.generator_adam.lr = 0.0;
    e.discriminator_adam.lr = 0.0;
    let mut t = Trainer::new(e, &source).unwrap();
    let g0 = t.generator().clone();
    let d0 = t.discriminators().to_vec();
    for _ in 0..5 {
        t.step().unwrap();
    }
    assert_eq!(t.generator(), &g0);
    assert_eq!(t.discriminators(), &d0[..]);
    assert_eq!(t.iteration(), 5);
}

#[test]
fn one_discriminator_step_lowers_its_loss_on_the_batch() {
    let source = ring_source(8);
    for seed in 0..10 {
        let mut stream = source.stream(seed);
        let real = stream.next_batch(64).unwrap();
        let fake = sample_noise(NoiseDistribution::Uniform, 64, 8, seed + 100).unwrap();
        let mut d = Mlp::discriminator(&DiscriminatorConfig::desk_full(8, seed)).unwrap();
        let before = discriminator_loss(&d, &real, &fake, None).unwrap();
        let mut g = Graph::new();
        let (r, f) = (g.constant(real.clone()).unwrap(), g.constant(fake.clone()).unwrap());
        let params = d.bind(&mut g, true).unwrap();
        let t = discriminator_terms(&mut g, &d, &params, r, f, OUTPUT_CLAMP).unwrap();
        let grads = g.backward(t.loss).unwrap().for_nodes(&g, &params);
        let mut opt = AdamState::new(AdamConfig::default(), d.params());
        opt.step(d.params_mut(), &grads).unwrap();
        let after = discriminator_loss(&d, &real, &fake, None).unwrap();
        assert!(after < before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn identical_real_and_fake_pull_discriminator_to_half() {
    let x = sample_noise(NoiseDistribution::Uniform, 32, 3, 5).unwrap();
    let mut d = linear_discriminator(vec![0.0, 0.0, 0.0], 2.0);
    let mut opt = AdamState::new(AdamConfig { lr: 1e-2, ..AdamConfig::default() }, d.params());
    let start = (d.predict(&x).unwrap().data()[0] - 0.5).abs();
    for _ in 0..500 {
        let mut g = Graph::new();
        let xi = g.constant(x.clone()).unwrap();
        let params = d.bind(&mut g, true).unwrap();
        let t = discriminator_terms(&mut g, &d, &params, xi, xi, OUTPUT_CLAMP).unwrap();
        let grads = g.backward(t.loss).unwrap().for_nodes(&g, &params);
        opt.step(d.params_mut(), &grads).unwrap();
    }
    let out = d.predict(&x).unwrap();
    let worst = out.data().iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    assert!(worst < 0.05 && worst < start / 5.0, "{start} -> {worst}");
    assert!((discriminator_loss(&d, &x, &x, None).unwrap() - 2.0 * LN_2).abs() < 1e-2);
}

#[test]
fn identity_projection_reproduces_single_mode() {
    let d = 4;
    let source = ring_source(d);
    let single = experiment(Mode::Single, d, 9);
    let mut multi = single.clone();
    multi.mode = Mode::Multi { discriminators: 1 };
    let eye = Tensor::matrix(d, d, (0..d * d).map(|i| f64::from(u8::from(i % (d + 1) == 0))).collect()).unwrap();
    multi.bank = Some(ProjectionBank::from_operators(vec![ProjectionOperator::invertible(eye).unwrap()], 0).unwrap());
    let a = run(&single, &source).unwrap();
    let b = run(&multi, &source).unwrap();
    assert_eq!(a.rows, b.rows);
}

#[test]
fn zero_budget_writes_header_and_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = experiment(Mode::Multi { discriminators: 2 }, 4, 3);
    e.iterations = 0;
    e.output_dir = Some(dir.path().to_path_buf());
    let summary = run(&e, &ring_source(4)).unwrap();
    assert!(summary.rows.is_empty());
    let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(text, format!("{}\n", metrics_header(2)));
    let ckpt = dir.path().join("checkpoints");
    for name in ["generator_00000000.ckpt", "discriminator_k0_00000000.ckpt", "discriminator_k1_00000000.ckpt"] {
        assert!(ckpt.join(name).is_file(), "{name}");
    }
}

#[test]
fn runs_are_deterministic_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = experiment(Mode::Multi { discriminators: 3 }, 8, 4);
    e.coverage_radius = Some(0.1);
    e.output_dir = Some(dir.path().to_path_buf());
    let source = ring_source(8);
    let a = run(&e, &source).unwrap();
    let logged = parse_metrics_csv(&std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap()).unwrap();
    assert_eq!(logged, a.rows);
    e.output_dir = None;
    let b = run(&e, &source).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.final_coverage, b.final_coverage);
    assert!(a.rows.iter().all(|r| r.discriminator_losses.len() == 3 && r.mode_coverage.is_some()));
    let c = run(&experiment(Mode::Multi { discriminators: 3 }, 8, 5), &source).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn checkpoint_failure_keeps_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    // A directory squatting on the iteration-2 checkpoint makes its write fail.
    std::fs::create_dir_all(dir.path().join("checkpoints/generator_00000002.ckpt")).unwrap();
    let mut e = experiment(Mode::Single, 4, 6);
    e.checkpoint_interval = 2;
    e.output_dir = Some(dir.path().to_path_buf());
    assert!(run(&e, &ring_source(4)).is_err());
    assert!(!dir.path().join(METRICS_FILE).exists());
    let partial = std::fs::read_to_string(partial_path(&dir.path().join(METRICS_FILE))).unwrap();
    let rows = parse_metrics_csv(&partial).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(dir.path().join("checkpoints/generator_00000000.ckpt").is_file());
}

#[test]
fn real_samples_cover_every_ring_mode() {
    let ring = EmbeddedRing::new(8, 32, 0.02, 0).unwrap();
    let x = ring.sample(10_000, derive_seed(0, streams::DATA)).unwrap();
    let radius = 3.0 * ring.effective_sigma();
    assert_eq!(mode_coverage(&x, ring.centers(), radius).unwrap(), 1.0);
}

#[test]
fn invalid_experiments_are_rejected() {
    let source = ring_source(4);
    let mut e = experiment(Mode::Multi { discriminators: 2 }, 4, 0);
    e.bank = None;
    assert!(Trainer::new(e, &source).is_err());
    let mut e = experiment(Mode::Single, 4, 0);
    e.batch_size = 1;
    assert!(Trainer::new(e, &source).is_err());
    assert!(Trainer::new(experiment(Mode::Single, 5, 0), &source).is_err());
}
