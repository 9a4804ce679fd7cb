//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Every key has a default (see [`KEYS`]) and unknown keys are rejected. The
//! canonical form lists every key in sorted order with normalized values.

use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Str,
    Int,
    Real,
    Bool,
    /// Comma-separated non-negative integers (possibly empty).
    IntList,
}

pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub doc: &'static str,
}

macro_rules! keys {
    ($($name:literal $kind:ident $default:literal $doc:literal;)*) => {
        &[$(KeySpec { name: $name, kind: Kind::$kind, default: $default, doc: $doc },)*]
    };
}

pub const KEYS: &[KeySpec] = keys! {
    "adam_beta1" Real "0.5" "Adam first-moment decay";
    "adam_beta2" Real "0.999" "Adam second-moment decay";
    "adam_eps" Real "1e-8" "Adam denominator offset";
    "batch_size" Int "64" "samples per batch";
    "checkpoint_interval" Int "0" "iterations between checkpoints (0: initial and final only)";
    "coverage_radius_sigmas" Real "3" "mode-coverage radius in units of the data's mode standard deviation";
    "data" Str "ring" "data source: ring | mixture | idx";
    "determinant_trials" Int "1000" "random trials in the determinant check";
    "discriminator_hidden" IntList "128,64" "hidden widths of the full-view discriminator";
    "discriminator_steps" Int "1" "discriminator updates per generator update";
    "discriminators" Int "8" "number of projected discriminators in multi mode";
    "eval_samples" Int "10000" "generator samples for the final coverage";
    "filter_size" Int "8" "conv projection filter size";
    "fresh_real_per_discriminator" Bool "false" "draw a separate real batch per discriminator";
    "generator_hidden" IntList "128,128" "generator hidden widths";
    "generator_output" Str "tanh" "generator head: tanh | identity";
    "gradcheck_tolerance" Real "1e-4" "maximum relative error in the gradcheck suite";
    "idx_path" Str "" "IDX3 image file for data = idx";
    "image_channels" Int "1" "input channels for conv projections of flat data";
    "image_height" Int "0" "input height for conv projections (0: from the data)";
    "image_width" Int "0" "input width for conv projections (0: from the data)";
    "iterations" Int "1000" "training iterations";
    "lr_discriminator" Real "2e-4" "discriminator learning rate";
    "lr_generator" Real "2e-4" "generator learning rate";
    "mixture_means" Str "0.5,0;-0.5,0" "mixture centers, ';' between components, ',' between coordinates";
    "mixture_sigma" Real "0.05" "isotropic standard deviation of every mixture component";
    "mixture_weights" Str "" "comma-separated mixture weights (empty: uniform)";
    "mode" Str "single" "single | multi";
    "noise" Str "uniform" "noise distribution: uniform | normal";
    "noise_dim" Int "32" "generator noise dimension";
    "orthonormalize" Bool "true" "orthonormalize projection rows";
    "output_clamp" Real "1e-7" "discriminator outputs are clamped to [c, 1 - c] before logs";
    "padding" Str "valid" "conv projection padding: valid | same";
    "project_apply" Str "dense" "project command path: dense | conv";
    "project_format" Str "csv" "project command output: csv | pgm";
    "projected_discriminator_hidden" IntList "64,64" "hidden widths of each projected discriminator";
    "projection" Str "gaussian" "projection kind: gaussian | conv";
    "projection_dim" Int "8" "output dimension of gaussian projections";
    "residual_bins" Int "4" "bins per projected axis in the residual suite";
    "residual_dim" Int "3" "grid dimension in the residual suite";
    "residual_gamma" Int "4" "grid points per axis in the residual suite";
    "residual_max_k" Int "12" "largest projection count in the residual suite";
    "ring_dim" Int "32" "ambient dimension of the embedded ring";
    "ring_embedding_seed" Int "0" "seed of the ring's random embedding";
    "ring_modes" Int "8" "number of ring modes";
    "ring_sigma" Real "0.02" "in-plane standard deviation of each ring mode";
    "sample_interval" Int "0" "iterations between sample dumps (0: none)";
    "saturation_threshold" Real "0.01" "mean D(fake) below this counts as saturated";
    "seed" Int "0" "experiment seed";
    "stride" Int "2" "conv projection stride";
    "thm1_fixtures" Int "5" "trained-discriminator fixtures in the thm1 suite";
    "thm1_pairs" Int "200" "random distribution pairs in the thm1 suite";
    "volume_dim" Int "16" "ambient dimension in the volume suite";
    "volume_eps" Real "1e-2" "density threshold defining the support";
    "volume_projected_dim" Int "2" "projected dimension in the volume suite";
    "volume_samples" Int "1000000" "Monte Carlo samples per volume estimate";
    "volume_sigma" Real "0.1" "standard deviation of the volume-suite Gaussian";
};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{}", describe(.key, .message))]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

fn describe(key: &Option<String>, message: &str) -> String {
    match key {
        Some(k) => format!("config key `{k}`: {message}"),
        None => format!("config: {message}"),
    }
}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: Some(key.to_string()),
        message: message.into(),
    }
}

fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == key)
}

/// Validates `raw` for `kind` and returns its canonical spelling.
fn normalize(key: &str, kind: Kind, raw: &str) -> Result<String, ConfigError> {
    let raw = raw.trim();
    match kind {
        Kind::Str => Ok(raw.to_string()),
        Kind::Int => raw
            .parse::<u64>()
            .map(|v| v.to_string())
            .map_err(|_| err(key, format!("expected a non-negative integer, got {raw:?}"))),
        Kind::Real => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(format!("{v:e}")),
            _ => Err(err(key, format!("expected a finite real, got {raw:?}"))),
        },
        Kind::Bool => match raw {
            "true" | "1" | "yes" => Ok("true".into()),
            "false" | "0" | "no" => Ok("false".into()),
            _ => Err(err(key, format!("expected true or false, got {raw:?}"))),
        },
        Kind::IntList => {
            if raw.is_empty() {
                return Ok(String::new());
            }
            raw.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<u64>()
                        .map(|v| v.to_string())
                        .map_err(|_| err(key, format!("expected comma-separated integers, got {raw:?}")))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(|v| v.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .map(|k| (k.name, normalize(k.name, k.kind, k.default).expect("valid default")))
            .collect();
        Self { values }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            };
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                key: None,
                message: format!("line {}: expected `key = value`", n + 1),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(key, format!("line {}: duplicate key", n + 1)));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let spec = spec(key).ok_or_else(|| err(key, "unknown key"))?;
        let v = normalize(key, spec.kind, value)?;
        self.values.insert(spec.name, v);
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError {
            key: None,
            message: format!("override {pair:?} is not key=value"),
        })?;
        self.set(k.trim(), v)
    }

    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("key {key} missing from the key table"))
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn int(&self, key: &str) -> u64 {
        self.raw(key).parse().expect("validated integer")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.int(key) as usize
    }

    pub fn real(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated real")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.raw(key) == "true"
    }

    pub fn int_list(&self, key: &str) -> Vec<usize> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Vec::new();
        }
        raw.split(',').map(|v| v.parse().expect("validated list")).collect()
    }

    /// One of `choices`, or a config error naming the key.
    pub fn choice(&self, key: &str, choices: &[&str]) -> Result<&str, ConfigError> {
        let v = self.str(key);
        if choices.contains(&v) {
            Ok(v)
        } else {
            Err(err(key, format!("expected one of {choices:?}, got {v:?}")))
        }
    }

    pub fn positive(&self, key: &str) -> Result<usize, ConfigError> {
        match self.usize(key) {
            0 => Err(err(key, "must be positive")),
            v => Ok(v),
        }
    }

    pub fn error(key: &str, message: impl Into<String>) -> ConfigError {
        err(key, message)
    }
}

/// Commented listing of every key and its default.
pub fn documented_defaults() -> String {
    let mut s = String::new();
    for k in KEYS {
        s.push_str(&format!("# {}\n{} = {}\n", k.doc, k.name, k.default));
    }
    s
}
