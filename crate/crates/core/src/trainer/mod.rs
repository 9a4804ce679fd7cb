//! Alternating adversarial training against one full-view discriminator or a
//! bank of projected discriminators.

mod losses;
mod metrics;

pub use losses::{
    discriminator_loss, discriminator_terms, generator_loss, generator_terms, DiscriminatorTerms, OUTPUT_CLAMP,
};
pub use metrics::{
    median, metrics_header, mode_coverage, parse_metrics_csv, saturation_diagnostics, MetricsRow,
    SaturationReport, MIN_DIAGNOSTIC_WINDOW,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::autodiff::{AdamConfig, AdamState, Graph, NodeId};
use crate::data::{dump_samples, DataSource, DataStream, DumpFormat};
use crate::error::{Error, Result};
use crate::io::partial_path;
use crate::nets::{sample_noise, sample_noise_with, DiscriminatorConfig, GeneratorConfig, Mlp, NoiseDistribution};
use crate::projection::{build_bank, ProjectionBank, ProjectionSpec};
use crate::rng::{derive_seed, rng, Rng};
use crate::tensor::Tensor;

/// Sub-seed streams derived from the experiment seed. Data and noise streams do
/// not depend on the mode, so both modes see identical real batches and noise.
pub mod streams {
    pub const GENERATOR_INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const BANK: u64 = 4;
    pub const EVAL_NOISE: u64 = 5;
    pub const DUMP_NOISE: u64 = 6;
    pub const DISCRIMINATOR_INIT: u64 = 100;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Single,
    Multi { discriminators: usize },
}

impl Mode {
    pub fn discriminator_count(self) -> usize {
        match self {
            Mode::Single => 1,
            Mode::Multi { discriminators } => discriminators,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GanExperiment {
    pub mode: Mode,
    pub generator: GeneratorConfig,
    /// One per discriminator (exactly one in single mode).
    pub discriminators: Vec<DiscriminatorConfig>,
    /// Required in multi mode, absent in single mode.
    pub bank: Option<ProjectionBank>,
    pub noise: NoiseDistribution,
    pub generator_adam: AdamConfig,
    pub discriminator_adam: AdamConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub discriminator_steps: usize,
    /// Draw a separate real batch for each discriminator instead of sharing one.
    pub fresh_real_per_discriminator: bool,
    pub seed: u64,
    pub output_clamp: f64,
    pub saturation_threshold: f64,
    pub coverage_radius: Option<f64>,
    /// Checkpoint every this many iterations; 0 keeps only the initial and final ones.
    pub checkpoint_interval: usize,
    /// Sample dump every this many iterations; 0 disables dumps.
    pub sample_interval: usize,
    pub eval_samples: usize,
    pub output_dir: Option<PathBuf>,
}

/// Projection used by the desk multi-discriminator setup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BankPlan {
    pub spec: ProjectionSpec,
    pub orthonormalize: bool,
}

impl GanExperiment {
    /// Desk-scale setup for `data_dim`-dimensional data: MLP generator
    /// 32→128→128→d, baseline discriminator [128, 64], projected discriminators
    /// [64, 64] (equal final feature length), Adam(2e-4, 0.5), batch 64.
    pub fn desk(mode: Mode, data_dim: usize, bank: Option<BankPlan>, seed: u64) -> Result<Self> {
        let k = mode.discriminator_count();
        let d_seed = |i: usize| derive_seed(seed, streams::DISCRIMINATOR_INIT + i as u64);
        let (discriminators, bank) = match mode {
            Mode::Single => (vec![DiscriminatorConfig::desk_full(data_dim, d_seed(0))], None),
            Mode::Multi { .. } => {
                let plan = bank.ok_or_else(|| Error::Config("multi mode needs a projection plan".into()))?;
                let bank = build_bank(k, plan.spec, plan.orthonormalize, derive_seed(seed, streams::BANK))?;
                let m = bank.get(0).output_dim();
                let ds = (0..k).map(|i| DiscriminatorConfig::desk_projected(m, d_seed(i))).collect();
                (ds, Some(bank))
            }
        };
        Ok(Self {
            mode,
            generator: GeneratorConfig::desk(data_dim, derive_seed(seed, streams::GENERATOR_INIT)),
            discriminators,
            bank,
            noise: NoiseDistribution::Uniform,
            generator_adam: AdamConfig::default(),
            discriminator_adam: AdamConfig::default(),
            batch_size: 64,
            iterations: 1000,
            discriminator_steps: 1,
            fresh_real_per_discriminator: false,
            seed,
            output_clamp: OUTPUT_CLAMP,
            saturation_threshold: 0.01,
            coverage_radius: None,
            checkpoint_interval: 0,
            sample_interval: 0,
            eval_samples: 10_000,
            output_dir: None,
        })
    }

    pub fn validate(&self, data_dim: usize) -> Result<()> {
        let k = self.mode.discriminator_count();
        if k == 0 {
            return Err(Error::Config("multi mode needs at least one discriminator".into()));
        }
        if self.discriminators.len() != k {
            return Err(Error::Config(format!(
                "mode expects {k} discriminators, config has {}",
                self.discriminators.len()
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size must be >= 2, got {}", self.batch_size)));
        }
        if self.discriminator_steps == 0 {
            return Err(Error::Config("discriminator_steps must be >= 1".into()));
        }
        if !(self.output_clamp > 0.0 && self.output_clamp < 0.5) {
            return Err(Error::Config(format!("output clamp {} outside (0, 0.5)", self.output_clamp)));
        }
        if self.generator.output_dim != data_dim {
            return Err(Error::Config(format!(
                "generator output dimension {} does not match data dimension {data_dim}",
                self.generator.output_dim
            )));
        }
        match (self.mode, &self.bank) {
            (Mode::Single, Some(_)) => {
                return Err(Error::Config("single mode takes no projection bank".into()));
            }
            (Mode::Multi { .. }, None) => {
                return Err(Error::Config("multi mode needs a projection bank".into()));
            }
            (Mode::Multi { discriminators }, Some(bank)) => {
                if bank.len() != discriminators {
                    return Err(Error::Config(format!(
                        "bank has {} operators but mode has {discriminators} discriminators",
                        bank.len()
                    )));
                }
                if bank.input_dim() != data_dim {
                    return Err(Error::Config(format!(
                        "bank input dimension {} does not match data dimension {data_dim}",
                        bank.input_dim()
                    )));
                }
            }
            (Mode::Single, None) => {}
        }
        for (i, dc) in self.discriminators.iter().enumerate() {
            let expected = match &self.bank {
                Some(b) => b.get(i).output_dim(),
                None => data_dim,
            };
            if dc.input_dim != expected {
                return Err(Error::Config(format!(
                    "discriminator {i} input dimension {} should be {expected}",
                    dc.input_dim
                )));
            }
        }
        Ok(())
    }
}

/// Live training state.
pub struct Trainer {
    experiment: GanExperiment,
    generator: Mlp,
    generator_opt: AdamState,
    discriminators: Vec<Mlp>,
    discriminator_opts: Vec<AdamState>,
    data: DataStream,
    noise_rng: Rng,
    centers: Option<Vec<Vec<f64>>>,
    iteration: usize,
}

impl Trainer {
    pub fn new(experiment: GanExperiment, source: &DataSource) -> Result<Self> {
        experiment.validate(source.sample_dim())?;
        let generator = Mlp::generator(&experiment.generator)?;
        let generator_opt = AdamState::new(experiment.generator_adam, generator.params());
        let discriminators = experiment
            .discriminators
            .iter()
            .map(Mlp::discriminator)
            .collect::<Result<Vec<_>>>()?;
        let discriminator_opts = discriminators
            .iter()
            .map(|d| AdamState::new(experiment.discriminator_adam, d.params()))
            .collect();
        let centers = match experiment.coverage_radius {
            Some(_) => source.mode_centers(),
            None => None,
        };
        Ok(Self {
            data: source.stream(derive_seed(experiment.seed, streams::DATA)),
            noise_rng: rng(derive_seed(experiment.seed, streams::NOISE)),
            experiment,
            generator,
            generator_opt,
            discriminators,
            discriminator_opts,
            centers,
            iteration: 0,
        })
    }

    pub fn experiment(&self) -> &GanExperiment {
        &self.experiment
    }

    pub fn generator(&self) -> &Mlp {
        &self.generator
    }

    pub fn generator_mut(&mut self) -> &mut Mlp {
        &mut self.generator
    }

    pub fn discriminators(&self) -> &[Mlp] {
        &self.discriminators
    }

    pub fn discriminators_mut(&mut self) -> &mut [Mlp] {
        &mut self.discriminators
    }

    pub fn generator_optimizer(&self) -> &AdamState {
        &self.generator_opt
    }

    pub fn discriminator_optimizers(&self) -> &[AdamState] {
        &self.discriminator_opts
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn bank(&self) -> Option<&ProjectionBank> {
        self.experiment.bank.as_ref()
    }

    fn view(&self, k: usize, x: &Tensor) -> Result<Tensor> {
        match &self.experiment.bank {
            Some(b) => b.get(k).apply(x),
            None => Ok(x.clone()),
        }
    }

    fn noise(&mut self) -> Result<Tensor> {
        let e = &self.experiment;
        sample_noise_with(e.noise, e.batch_size, e.generator.noise_dim, &mut self.noise_rng)
    }

    /// One iteration: every discriminator takes `discriminator_steps` updates on
    /// (real, fresh fake), then the generator takes one update on a second
    /// fresh fake batch.
    pub fn step(&mut self) -> Result<MetricsRow> {
        let k = self.discriminators.len();
        let clamp = self.experiment.output_clamp;
        let batch = self.experiment.batch_size;

        let mut d_losses = vec![0.0; k];
        let mut d_real = vec![0.0; k];
        let mut d_fake = vec![0.0; k];
        let mut coverage = None;
        for d_step in 0..self.experiment.discriminator_steps {
            let shared_real = if self.experiment.fresh_real_per_discriminator {
                None
            } else {
                Some(self.data.next_batch(batch)?)
            };
            let z = self.noise()?;
            let fake = self.generator.predict(&z)?;
            if d_step == 0 {
                if let (Some(centers), Some(radius)) = (&self.centers, self.experiment.coverage_radius) {
                    coverage = Some(mode_coverage(&fake, centers, radius)?);
                }
            }
            for i in 0..k {
                let real = match &shared_real {
                    Some(r) => r.clone(),
                    None => self.data.next_batch(batch)?,
                };
                let mut g = Graph::new();
                let r = g.constant(self.view(i, &real)?)?;
                let f = g.constant(self.view(i, &fake)?)?;
                let d = &self.discriminators[i];
                let params = d.bind(&mut g, true)?;
                let terms = discriminator_terms(&mut g, d, &params, r, f, clamp)?;
                d_losses[i] = g.value(terms.loss).item();
                d_real[i] = mean(g.value(terms.real_output).data());
                d_fake[i] = mean(g.value(terms.fake_output).data());
                let grads = g.backward(terms.loss)?.for_nodes(&g, &params);
                self.discriminator_opts[i].step(self.discriminators[i].params_mut(), &grads)?;
            }
        }

        let z = self.noise()?;
        let mut g = Graph::new();
        let zi = g.constant(z)?;
        let fwd = self.generator.forward(&mut g, zi, true)?;
        let views: Vec<NodeId> = match &self.experiment.bank {
            Some(b) => b
                .operators()
                .iter()
                .map(|op| op.apply_node(&mut g, fwd.output))
                .collect::<Result<_>>()?,
            None => vec![fwd.output],
        };
        let (loss, _) = generator_terms(&mut g, &self.discriminators, &views, clamp)?;
        let grads = g.backward(loss)?;
        let g_grads = grads.for_nodes(&g, &fwd.params);
        let grad_norm = g_grads
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let subspace = views
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let gy = grads.get_or_zeros(&g, y);
                match &self.experiment.bank {
                    Some(b) => Ok(gy.matmul(b.get(i).dense_matrix())?.norm()),
                    None => Ok(gy.norm()),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let generator_loss = g.value(loss).item();
        self.generator_opt.step(self.generator.params_mut(), &g_grads)?;

        let row = MetricsRow {
            iteration: self.iteration,
            generator_loss,
            discriminator_loss_mean: mean(&d_losses),
            discriminator_losses: d_losses,
            d_real_mean: mean(&d_real),
            d_fake_mean: mean(&d_fake),
            generator_grad_norm: grad_norm,
            subspace_grad_norms: subspace,
            mode_coverage: coverage,
        };
        self.iteration += 1;
        Ok(row)
    }

    /// `n` generator samples from a noise stream independent of training.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Tensor> {
        let z = sample_noise(self.experiment.noise, n, self.experiment.generator.noise_dim, seed)?;
        self.generator.predict(&z)
    }

    /// Coverage of `eval_samples` fresh generator samples, when the data has
    /// mode centers and a radius is configured.
    pub fn final_coverage(&self) -> Result<Option<f64>> {
        match (&self.centers, self.experiment.coverage_radius) {
            (Some(c), Some(r)) if self.experiment.eval_samples > 0 => {
                let s = self.generate(
                    self.experiment.eval_samples,
                    derive_seed(self.experiment.seed, streams::EVAL_NOISE),
                )?;
                Ok(Some(mode_coverage(&s, c, r)?))
            }
            _ => Ok(None),
        }
    }

    pub fn save_checkpoints(&self, dir: &Path) -> Result<()> {
        let tag = format!("{:08}", self.iteration);
        self.generator.save(&dir.join(format!("generator_{tag}.ckpt")))?;
        for (i, d) in self.discriminators.iter().enumerate() {
            d.save(&dir.join(format!("discriminator_k{i}_{tag}.ckpt")))?;
        }
        Ok(())
    }

    fn dump(&self, dir: &Path) -> Result<()> {
        let seed = derive_seed(self.experiment.seed, streams::DUMP_NOISE);
        let samples = self.generate(256, seed)?;
        let tag = format!("{:08}", self.iteration);
        let source = self.data.source();
        let (samples, format) = match source {
            DataSource::EmbeddedRing(ring) => (ring.plane_coordinates(&samples)?, DumpFormat::CsvPoints),
            DataSource::IdxImages(_) => {
                let (height, width) = source.image_shape().expect("image source");
                (samples, DumpFormat::PgmGrid { height, width })
            }
            DataSource::GaussianMixture(m) if m.dim() <= 3 => (samples, DumpFormat::CsvPoints),
            DataSource::GaussianMixture(_) => return Ok(()),
        };
        dump_samples(&dir.join(format!("samples_{tag}.{}", format.extension())), &samples, format)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub rows: Vec<MetricsRow>,
    pub final_coverage: Option<f64>,
    pub metrics_path: Option<PathBuf>,
}

impl RunSummary {
    pub fn tail(&self, n: usize) -> &[MetricsRow] {
        &self.rows[self.rows.len().saturating_sub(n)..]
    }
}

pub const METRICS_FILE: &str = "metrics.csv";

/// Trains for the full budget. With an output directory, streams
/// `metrics.csv` (renamed into place only once complete), writes checkpoints
/// under `checkpoints/` and sample dumps under `samples/`.
pub fn run(experiment: &GanExperiment, source: &DataSource) -> Result<RunSummary> {
    let mut trainer = Trainer::new(experiment.clone(), source)?;
    let k = trainer.discriminators.len();
    let out = experiment.output_dir.clone();
    let mut log = None;
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir.join("checkpoints"))?;
        if experiment.sample_interval > 0 {
            std::fs::create_dir_all(dir.join("samples"))?;
        }
        let mut w = BufWriter::new(File::create(partial_path(&dir.join(METRICS_FILE)))?);
        writeln!(w, "{}", metrics_header(k))?;
        log = Some(w);
        trainer.save_checkpoints(&dir.join("checkpoints"))?;
        if experiment.sample_interval > 0 {
            trainer.dump(&dir.join("samples"))?;
        }
    }

    let mut rows = Vec::with_capacity(experiment.iterations);
    for _ in 0..experiment.iterations {
        let row = match trainer.step() {
            Ok(r) => r,
            Err(e) => {
                if let Some(w) = log.as_mut() {
                    w.flush()?;
                }
                return Err(e);
            }
        };
        if let Some(w) = log.as_mut() {
            writeln!(w, "{}", row.to_csv())?;
        }
        rows.push(row);
        if let Some(dir) = &out {
            let it = trainer.iteration;
            let last = it == experiment.iterations;
            if experiment.checkpoint_interval > 0 && it % experiment.checkpoint_interval == 0 || last {
                trainer.save_checkpoints(&dir.join("checkpoints"))?;
            }
            if experiment.sample_interval > 0 && (it % experiment.sample_interval == 0 || last) {
                trainer.dump(&dir.join("samples"))?;
            }
        }
    }

    let final_coverage = trainer.final_coverage()?;
    let mut metrics_path = None;
    if let (Some(dir), Some(mut w)) = (&out, log) {
        w.flush()?;
        w.get_ref().sync_all()?;
        drop(w);
        let path = dir.join(METRICS_FILE);
        std::fs::rename(partial_path(&path), &path)?;
        metrics_path = Some(path);
    }
    Ok(RunSummary {
        rows,
        final_coverage,
        metrics_path,
    })
}
