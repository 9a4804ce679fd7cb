//! Builds library objects from a [`RunConfig`].

use projgan::autodiff::AdamConfig;
use projgan::data::{read_idx, DataSource, EmbeddedRing, GaussianMixture};
use projgan::nets::{NoiseDistribution, OutputActivation};
use projgan::projection::{build_bank, ImageShape, Padding, ProjectionBank, ProjectionSpec};
use projgan::rng::derive_seed;
use projgan::trainer::{streams, BankPlan, GanExperiment, Mode};

use crate::config::{ConfigError, RunConfig};
use crate::error::{setup, CliError, CliResult};

fn bad(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config(RunConfig::error(key, message))
}

fn parse_reals(key: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| RunConfig::error(key, format!("bad number {v:?}")))
        })
        .collect()
}

pub fn data_source(cfg: &RunConfig) -> CliResult<DataSource> {
    match cfg.choice("data", &["ring", "mixture", "idx"])? {
        "ring" => {
            let ring = EmbeddedRing::new(
                cfg.positive("ring_modes")?,
                cfg.positive("ring_dim")?,
                cfg.real("ring_sigma"),
                cfg.int("ring_embedding_seed"),
            )
            .map_err(|e| setup("ring_sigma", e))?;
            Ok(DataSource::EmbeddedRing(ring))
        }
        "mixture" => {
            let means = cfg
                .str("mixture_means")
                .split(';')
                .map(|c| parse_reals("mixture_means", c))
                .collect::<Result<Vec<_>, _>>()?;
            let weights = match cfg.str("mixture_weights") {
                "" => vec![1.0 / means.len() as f64; means.len()],
                w => parse_reals("mixture_weights", w)?,
            };
            let sigmas = vec![cfg.real("mixture_sigma"); means.len()];
            let mix = GaussianMixture::isotropic(weights, means, &sigmas).map_err(|e| setup("mixture_means", e))?;
            Ok(DataSource::GaussianMixture(mix))
        }
        _ => {
            let path = cfg.str("idx_path");
            if path.is_empty() {
                return Err(bad("idx_path", "required when data = idx"));
            }
            let set = read_idx(path.as_ref()).map_err(|e| bad("idx_path", e.to_string()))?;
            Ok(DataSource::IdxImages(set))
        }
    }
}

/// Standard deviation of one data mode, when the data has modes.
pub fn mode_sigma(cfg: &RunConfig, source: &DataSource) -> Option<f64> {
    match source {
        DataSource::EmbeddedRing(r) => Some(r.effective_sigma()),
        DataSource::GaussianMixture(_) => Some(cfg.real("mixture_sigma")),
        DataSource::IdxImages(_) => None,
    }
}

/// Input layout for convolution projections: explicit config values, else the
/// data's `(height, width)`.
fn image_shape(cfg: &RunConfig, data_image: Option<(usize, usize)>) -> CliResult<ImageShape> {
    let (h, w) = match (cfg.usize("image_height"), cfg.usize("image_width"), data_image) {
        (0, 0, Some(hw)) => hw,
        (0, _, _) | (_, 0, _) => return Err(bad("image_height", "conv projections need image_height and image_width")),
        (h, w, _) => (h, w),
    };
    Ok(ImageShape::new(cfg.positive("image_channels")?, h, w))
}

pub fn projection_spec(
    cfg: &RunConfig,
    input_dim: usize,
    data_image: Option<(usize, usize)>,
) -> CliResult<ProjectionSpec> {
    match cfg.choice("projection", &["gaussian", "conv"])? {
        "gaussian" => Ok(ProjectionSpec::Gaussian {
            input_dim,
            output_dim: cfg.positive("projection_dim")?,
        }),
        _ => {
            let input = image_shape(cfg, data_image)?;
            if input.len() != input_dim {
                return Err(bad(
                    "image_height",
                    format!("image shape holds {} values but samples have {input_dim}", input.len()),
                ));
            }
            let padding = Padding::parse(cfg.choice("padding", &["valid", "same"])?).map_err(|e| setup("padding", e))?;
            Ok(ProjectionSpec::Conv {
                input,
                filter_size: cfg.positive("filter_size")?,
                stride: cfg.positive("stride")?,
                padding,
            })
        }
    }
}

/// The bank a multi-mode run with this config would train against.
pub fn bank(cfg: &RunConfig, input_dim: usize, data_image: Option<(usize, usize)>) -> CliResult<ProjectionBank> {
    let spec = projection_spec(cfg, input_dim, data_image)?;
    let seed = derive_seed(cfg.int("seed"), streams::BANK);
    build_bank(cfg.positive("discriminators")?, spec, cfg.bool("orthonormalize"), seed)
        .map_err(|e| setup("projection", e))
}

pub fn experiment(cfg: &RunConfig, source: &DataSource) -> CliResult<GanExperiment> {
    let d = source.sample_dim();
    let mode = match cfg.choice("mode", &["single", "multi"])? {
        "single" => Mode::Single,
        _ => Mode::Multi {
            discriminators: cfg.positive("discriminators")?,
        },
    };
    let plan = match mode {
        Mode::Single => None,
        Mode::Multi { .. } => Some(BankPlan {
            spec: projection_spec(cfg, d, source.image_shape())?,
            orthonormalize: cfg.bool("orthonormalize"),
        }),
    };
    let mut exp = GanExperiment::desk(mode, d, plan, cfg.int("seed")).map_err(|e| setup("projection", e))?;

    exp.generator.noise_dim = cfg.positive("noise_dim")?;
    exp.generator.hidden_widths = cfg.int_list("generator_hidden");
    exp.generator.output_activation = match cfg.choice("generator_output", &["tanh", "identity"])? {
        "tanh" => OutputActivation::Tanh,
        _ => OutputActivation::Identity,
    };
    let hidden = match mode {
        Mode::Single => cfg.int_list("discriminator_hidden"),
        Mode::Multi { .. } => cfg.int_list("projected_discriminator_hidden"),
    };
    for dc in &mut exp.discriminators {
        dc.hidden_widths = hidden.clone();
    }
    exp.noise = match cfg.choice("noise", &["uniform", "normal"])? {
        "uniform" => NoiseDistribution::Uniform,
        _ => NoiseDistribution::StandardNormal,
    };
    let adam = |lr: f64| AdamConfig {
        lr,
        beta1: cfg.real("adam_beta1"),
        beta2: cfg.real("adam_beta2"),
        eps: cfg.real("adam_eps"),
    };
    exp.generator_adam = adam(cfg.real("lr_generator"));
    exp.discriminator_adam = adam(cfg.real("lr_discriminator"));
    exp.batch_size = cfg.usize("batch_size");
    exp.iterations = cfg.usize("iterations");
    exp.discriminator_steps = cfg.usize("discriminator_steps");
    exp.fresh_real_per_discriminator = cfg.bool("fresh_real_per_discriminator");
    exp.output_clamp = cfg.real("output_clamp");
    exp.saturation_threshold = cfg.real("saturation_threshold");
    exp.coverage_radius = mode_sigma(cfg, source).map(|s| cfg.real("coverage_radius_sigmas") * s);
    exp.checkpoint_interval = cfg.usize("checkpoint_interval");
    exp.sample_interval = cfg.usize("sample_interval");
    exp.eval_samples = cfg.usize("eval_samples");
    exp.validate(d).map_err(|e| setup("mode", e))?;
    Ok(exp)
}
