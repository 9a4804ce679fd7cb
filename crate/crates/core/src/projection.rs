//! Fixed random projections `y = Wᵀx` from ℝ^d to ℝ^m (m < d).
//!
//! Two families are supported:
//!
//! * **conv** – a single-output-channel strided cross-correlation over a
//!   `channels × height × width` input with one `f × f × c` filter whose entries
//!   are i.i.d. standard normal and rescaled to unit ℓ2 norm. The filter is
//!   larger than the stride, so neighbouring outputs share inputs and the dense
//!   form is block-Toeplitz.
//! * **gaussian** – a dense `m × d` matrix with i.i.d. standard normal entries.
//!
//! The dense `m × d` matrix is always materialized. Applying an operator inside
//! a [`Graph`] multiplies by that matrix, so the gradient reaching the input is
//! `upstream · W`, which lies in the row space of the operator.
//!
//! Input vectors are flattened channel-major (`c, y, x`), outputs row-major
//! (`oy, ox`). No kernel flip is applied.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::linalg;
use crate::rng::{derive_seed, rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Border handling for the strided convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// No padding: output side `⌊(H − f)/s⌋ + 1`.
    Valid,
    /// Zero padding to output side `⌈H/s⌉`, split as evenly as possible with
    /// the extra row/column after the input (64 → 32 for f = 8, s = 2).
    Same,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(Error::Config(format!("unknown padding `{other}`"))),
        }
    }

    /// `(output size, padding before)` along one axis.
    fn geometry(self, input: usize, filter: usize, stride: usize) -> Option<(usize, usize)> {
        match self {
            Padding::Valid => {
                if input < filter {
                    None
                } else {
                    Some(((input - filter) / stride + 1, 0))
                }
            }
            Padding::Same => {
                let out = input.div_ceil(stride);
                let total = ((out - 1) * stride + filter).saturating_sub(input);
                Some((out, total / 2))
            }
        }
    }
}

/// Recipe for sampling an operator; together with a seed it fully determines it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionSpec {
    Conv {
        input: ImageShape,
        filter_size: usize,
        stride: usize,
        padding: Padding,
    },
    Gaussian {
        input_dim: usize,
        output_dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProjectionKind {
    Conv {
        input: ImageShape,
        filter_size: usize,
        stride: usize,
        padding: Padding,
        out_height: usize,
        out_width: usize,
        pad_top: usize,
        pad_left: usize,
    },
    Gaussian,
    /// Explicit matrix, not reproducible from a seed.
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionOperator {
    kind: ProjectionKind,
    seed: u64,
    orthonormal: bool,
    filter: Option<Vec<f64>>,
    /// `m × d`, i.e. Wᵀ.
    dense: Tensor,
    /// `d × m`, the right operand when projecting a batch of row vectors.
    dense_t: Tensor,
}

impl ProjectionOperator {
    pub fn sample(spec: ProjectionSpec, seed: u64) -> Result<Self> {
        match spec {
            ProjectionSpec::Conv {
                input,
                filter_size,
                stride,
                padding,
            } => sample_conv_projection(input, filter_size, stride, padding, seed),
            ProjectionSpec::Gaussian {
                input_dim,
                output_dim,
            } => sample_gaussian_projection(input_dim, output_dim, seed),
        }
    }

    /// Operator from an explicit `m × d` matrix with `m < d` and full row rank.
    pub fn from_matrix(matrix: Tensor) -> Result<Self> {
        let (m, d) = matrix.as_matrix_dims("from_matrix")?;
        if m >= d {
            return Err(Error::Config(format!(
                "projection must reduce dimension, got {m} outputs for {d} inputs"
            )));
        }
        Self::explicit(matrix)
    }

    /// Square invertible operator. Only meaningful for degeneracy checks where
    /// a projected discriminator must reproduce a full-view one.
    pub fn invertible(matrix: Tensor) -> Result<Self> {
        let (m, d) = matrix.as_matrix_dims("invertible")?;
        if m != d {
            return Err(Error::dim("invertible", &[m, d], &[d, d]));
        }
        Self::explicit(matrix)
    }

    fn explicit(matrix: Tensor) -> Result<Self> {
        let m = matrix.rows();
        let rank = linalg::numeric_rank(&linalg::to_dmatrix(&matrix)?, 1e-12);
        if rank != m {
            return Err(Error::Rank {
                expected: m,
                found: rank,
            });
        }
        Ok(Self::with_dense(ProjectionKind::Explicit, 0, false, None, matrix))
    }

    fn with_dense(
        kind: ProjectionKind,
        seed: u64,
        orthonormal: bool,
        filter: Option<Vec<f64>>,
        dense: Tensor,
    ) -> Self {
        let dense_t = dense.transpose().expect("dense projection is a matrix");
        Self {
            kind,
            seed,
            orthonormal,
            filter,
            dense,
            dense_t,
        }
    }

    pub fn kind(&self) -> &ProjectionKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn filter(&self) -> Option<&[f64]> {
        self.filter.as_deref()
    }

    /// Wᵀ as an `m × d` matrix.
    pub fn dense_matrix(&self) -> &Tensor {
        &self.dense
    }

    pub fn input_dim(&self) -> usize {
        self.dense.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.dense.rows()
    }

    /// The recipe this operator was sampled from, if any.
    pub fn spec(&self) -> Option<ProjectionSpec> {
        match self.kind {
            ProjectionKind::Conv {
                input,
                filter_size,
                stride,
                padding,
                ..
            } => Some(ProjectionSpec::Conv {
                input,
                filter_size,
                stride,
                padding,
            }),
            ProjectionKind::Gaussian => Some(ProjectionSpec::Gaussian {
                input_dim: self.input_dim(),
                output_dim: self.output_dim(),
            }),
            ProjectionKind::Explicit => None,
        }
    }

    fn batch_rows(&self, x: &Tensor) -> Result<(usize, bool)> {
        let d = self.input_dim();
        match x.shape() {
            [n] if *n == d => Ok((1, true)),
            [b, rest @ ..] if !rest.is_empty() && rest.iter().product::<usize>() == d => Ok((*b, false)),
            s => Err(Error::dim("projection apply", s, &[d])),
        }
    }

    fn shape_output(&self, rows: usize, single: bool, data: Vec<f64>) -> Result<Tensor> {
        if single {
            Tensor::vector(data)
        } else {
            Tensor::matrix(rows, self.output_dim(), data)
        }
    }

    /// Projects a single vector (`[d]` → `[m]`) or a batch (`[b, …]` → `[b, m]`)
    /// by multiplying with the dense matrix.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (rows, single) = self.batch_rows(x)?;
        let (m, d) = (self.output_dim(), self.input_dim());
        let mut out = vec![0.0; rows * m];
        for (b, xrow) in x.data().chunks(d).enumerate() {
            for (i, o) in out[b * m..(b + 1) * m].iter_mut().enumerate() {
                *o = self.dense.row(i).iter().zip(xrow).map(|(w, v)| w * v).sum();
            }
        }
        self.shape_output(rows, single, out)
    }

    /// Direct strided convolution, independent of the dense matrix.
    pub fn apply_conv(&self, x: &Tensor) -> Result<Tensor> {
        let ProjectionKind::Conv {
            input,
            filter_size: f,
            stride,
            out_height,
            out_width,
            pad_top,
            pad_left,
            ..
        } = self.kind
        else {
            return Err(Error::Config("apply_conv on a non-convolution projection".into()));
        };
        if self.orthonormal {
            return Err(Error::Config(
                "orthonormalized operators have no convolution form".into(),
            ));
        }
        let filter = self.filter.as_deref().expect("conv operators carry a filter");
        let (rows, single) = self.batch_rows(x)?;
        let d = self.input_dim();
        let (h, w) = (input.height as isize, input.width as isize);
        let mut out = Vec::with_capacity(rows * out_height * out_width);
        for xs in x.data().chunks(d) {
            for oy in 0..out_height {
                for ox in 0..out_width {
                    let mut acc = 0.0;
                    for c in 0..input.channels {
                        for fy in 0..f {
                            let y = (oy * stride + fy) as isize - pad_top as isize;
                            if y < 0 || y >= h {
                                continue;
                            }
                            for fx in 0..f {
                                let xx = (ox * stride + fx) as isize - pad_left as isize;
                                if xx < 0 || xx >= w {
                                    continue;
                                }
                                let idx = c * input.height * input.width + y as usize * input.width + xx as usize;
                                acc += filter[(c * f + fy) * f + fx] * xs[idx];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        self.shape_output(rows, single, out)
    }

    /// Records `x · Wᵀᵀ` (batch of row vectors, `[b, d]` → `[b, m]`) on the graph.
    pub fn apply_node(&self, graph: &mut Graph, x: NodeId) -> Result<NodeId> {
        let shape = graph.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return Err(Error::dim("projection apply", &shape, &[shape[0], self.input_dim()]));
        }
        let w = graph.constant(self.dense_t.clone())?;
        graph.matmul(x, w)
    }

    /// Operator with orthonormal rows spanning the same row space.
    pub fn orthonormalize(&self) -> Result<Self> {
        let q = linalg::orthonormal_rows(&self.dense)?;
        Ok(Self::with_dense(self.kind.clone(), self.seed, true, self.filter.clone(), q))
    }
}

pub fn sample_conv_projection(
    input: ImageShape,
    filter_size: usize,
    stride: usize,
    padding: Padding,
    seed: u64,
) -> Result<ProjectionOperator> {
    if stride == 0 || filter_size <= stride {
        return Err(Error::Config(format!(
            "filter size {filter_size} must exceed stride {stride}"
        )));
    }
    if input.is_empty() {
        return Err(Error::Config("empty input shape".into()));
    }
    let mut r = rng(seed);
    let n = filter_size * filter_size * input.channels;
    let mut filter: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    let norm = filter.iter().map(|v| v * v).sum::<f64>().sqrt();
    filter.iter_mut().for_each(|v| *v /= norm);
    conv_from_filter(input, filter_size, stride, padding, filter, seed)
}

/// Builds the operator and its block-Toeplitz matrix for a given filter laid
/// out as `[channel][fy][fx]`.
fn conv_from_filter(
    input: ImageShape,
    f: usize,
    stride: usize,
    padding: Padding,
    filter: Vec<f64>,
    seed: u64,
) -> Result<ProjectionOperator> {
    let (Some((oh, pad_top)), Some((ow, pad_left))) = (
        padding.geometry(input.height, f, stride),
        padding.geometry(input.width, f, stride),
    ) else {
        return Err(Error::Config(format!(
            "filter {f} does not fit input {}x{} without padding",
            input.height, input.width
        )));
    };
    let m = oh * ow;
    let d = input.len();
    if m >= d {
        return Err(Error::Config(format!(
            "convolution output {oh}x{ow} does not reduce input dimension {d}"
        )));
    }

    let mut dense = vec![0.0; m * d];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut dense[(oy * ow + ox) * d..(oy * ow + ox + 1) * d];
            for c in 0..input.channels {
                for fy in 0..f {
                    let y = (oy * stride + fy) as isize - pad_top as isize;
                    if y < 0 || y >= input.height as isize {
                        continue;
                    }
                    for fx in 0..f {
                        let x = (ox * stride + fx) as isize - pad_left as isize;
                        if x < 0 || x >= input.width as isize {
                            continue;
                        }
                        row[c * input.height * input.width + y as usize * input.width + x as usize] =
                            filter[(c * f + fy) * f + fx];
                    }
                }
            }
        }
    }
    let kind = ProjectionKind::Conv {
        input,
        filter_size: f,
        stride,
        padding,
        out_height: oh,
        out_width: ow,
        pad_top,
        pad_left,
    };
    Ok(ProjectionOperator::with_dense(
        kind,
        seed,
        false,
        Some(filter),
        Tensor::matrix(m, d, dense)?,
    ))
}

pub fn sample_gaussian_projection(d: usize, m: usize, seed: u64) -> Result<ProjectionOperator> {
    if m == 0 || m >= d {
        return Err(Error::Config(format!(
            "gaussian projection needs 0 < m < d, got m = {m}, d = {d}"
        )));
    }
    let mut r = rng(seed);
    let data = (0..m * d).map(|_| StandardNormal.sample(&mut r)).collect();
    Ok(ProjectionOperator::with_dense(
        ProjectionKind::Gaussian,
        seed,
        false,
        None,
        Tensor::matrix(m, d, data)?,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionBank {
    operators: Vec<ProjectionOperator>,
    master_seed: u64,
}

/// Sub-seed of operator `k`.
pub fn operator_seed(master_seed: u64, k: usize) -> u64 {
    derive_seed(master_seed, k as u64)
}

/// `count` operators sampled from `spec` with sub-seeds derived from
/// `master_seed`, optionally orthonormalized.
pub fn build_bank(
    count: usize,
    spec: ProjectionSpec,
    orthonormalize: bool,
    master_seed: u64,
) -> Result<ProjectionBank> {
    if count == 0 {
        return Err(Error::Config("a projection bank needs at least one operator".into()));
    }
    let operators = (0..count)
        .map(|k| {
            let op = ProjectionOperator::sample(spec, operator_seed(master_seed, k))?;
            if orthonormalize {
                op.orthonormalize()
            } else {
                Ok(op)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionBank {
        operators,
        master_seed,
    })
}

const BANK_HEADER: &str = "projgan-bank v1";

impl ProjectionBank {
    /// Bank from explicit operators sharing one input dimension.
    pub fn from_operators(operators: Vec<ProjectionOperator>, master_seed: u64) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::Config("a projection bank needs at least one operator".into()))?;
        let d = first.input_dim();
        if let Some(op) = operators.iter().find(|op| op.input_dim() != d) {
            return Err(Error::dim("bank", &[d], &[op.input_dim()]));
        }
        Ok(Self {
            operators,
            master_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn operators(&self) -> &[ProjectionOperator] {
        &self.operators
    }

    pub fn get(&self, k: usize) -> &ProjectionOperator {
        &self.operators[k]
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn input_dim(&self) -> usize {
        self.operators[0].input_dim()
    }

    /// Text form: a header, the master seed, then one line per operator with
    /// its recipe and seed. Matrices are never stored; [`ProjectionBank::from_text`]
    /// re-samples them.
    ///
    /// ```text
    /// projgan-bank v1
    /// master_seed 42
    /// conv <seed> <orthonormal 0|1> <channels> <height> <width> <filter> <stride> <valid|same>
    /// gaussian <seed> <orthonormal 0|1> <d> <m>
    /// ```
    pub fn to_text(&self) -> Result<String> {
        let mut s = format!("{BANK_HEADER}\nmaster_seed {}\n", self.master_seed);
        for op in &self.operators {
            let orth = u8::from(op.orthonormal);
            match op.spec() {
                Some(ProjectionSpec::Conv {
                    input,
                    filter_size,
                    stride,
                    padding,
                }) => writeln!(
                    s,
                    "conv {} {orth} {} {} {} {filter_size} {stride} {}",
                    op.seed,
                    input.channels,
                    input.height,
                    input.width,
                    padding.as_str()
                ),
                Some(ProjectionSpec::Gaussian {
                    input_dim,
                    output_dim,
                }) => writeln!(s, "gaussian {} {orth} {input_dim} {output_dim}", op.seed),
                None => {
                    return Err(Error::Config(
                        "explicit-matrix operators cannot be serialized".into(),
                    ))
                }
            }
            .expect("writing to a String");
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some(BANK_HEADER) {
            return Err(Error::Format(format!("bank file must start with `{BANK_HEADER}`")));
        }
        let master_seed = lines
            .next()
            .and_then(|l| l.strip_prefix("master_seed "))
            .ok_or_else(|| Error::Format("missing master_seed line".into()))
            .and_then(|v| parse_field(v, "master_seed"))?;
        let mut operators = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let spec = match (f.first().copied(), f.len()) {
                (Some("conv"), 9) => ProjectionSpec::Conv {
                    input: ImageShape::new(
                        parse_field(f[3], "channels")?,
                        parse_field(f[4], "height")?,
                        parse_field(f[5], "width")?,
                    ),
                    filter_size: parse_field(f[6], "filter")?,
                    stride: parse_field(f[7], "stride")?,
                    padding: Padding::parse(f[8])?,
                },
                (Some("gaussian"), 5) => ProjectionSpec::Gaussian {
                    input_dim: parse_field(f[3], "d")?,
                    output_dim: parse_field(f[4], "m")?,
                },
                _ => return Err(Error::Format(format!("bad operator line `{line}`"))),
            };
            let seed = parse_field(f[1], "seed")?;
            let op = ProjectionOperator::sample(spec, seed)?;
            let op = match f[2] {
                "0" => op,
                "1" => op.orthonormalize()?,
                other => return Err(Error::Format(format!("bad orthonormal flag `{other}`"))),
            };
            operators.push(op);
        }
        Self::from_operators(operators, master_seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Format(format!("cannot parse {name} from `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_input(len: usize, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn full_scale_same_padding_geometry() {
        let op = sample_conv_projection(ImageShape::new(3, 64, 64), 8, 2, Padding::Same, 1).unwrap();
        assert_eq!(op.output_dim(), 32 * 32);
        assert_eq!(op.input_dim(), 12288);
        assert_eq!(op.input_dim() / op.output_dim(), 12);
        match op.kind() {
            ProjectionKind::Conv {
                out_height,
                out_width,
                pad_top,
                ..
            } => {
                assert_eq!((*out_height, *out_width, *pad_top), (32, 32, 3));
            }
            _ => unreachable!(),
        }
        let n: f64 = op.filter().unwrap().iter().map(|v| v * v).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn valid_padding_output_size() {
        let op = sample_conv_projection(ImageShape::new(1, 10, 12), 4, 2, Padding::Valid, 3).unwrap();
        assert_eq!(op.output_dim(), 4 * 5);
    }

    #[test]
    fn constant_filter_averages_blocks() {
        // Unit-norm constant 2x2 filter: every entry 0.5, so each output is
        // 0.5 * block sum = 2 * block mean.
        let op = conv_from_filter(ImageShape::new(1, 4, 4), 2, 2, Padding::Valid, vec![0.5; 4], 0).unwrap();
        assert_eq!(op.output_dim(), 4);
        let x = Tensor::vector((0..16).map(|v| v as f64).collect()).unwrap();
        let means = [2.5, 4.5, 10.5, 12.5];
        for y in [op.apply_conv(&x).unwrap(), op.apply(&x).unwrap()] {
            for (v, mean) in y.data().iter().zip(means) {
                assert!((v - 2.0 * mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stride_must_be_smaller_than_filter() {
        let r = sample_conv_projection(ImageShape::new(1, 4, 4), 2, 2, Padding::Valid, 0);
        assert!(matches!(r, Err(Error::Config(_))));
        let r = sample_conv_projection(ImageShape::new(1, 3, 3), 4, 2, Padding::Valid, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn conv_matches_dense_on_random_instance() {
        let op = sample_conv_projection(ImageShape::new(2, 9, 11), 4, 2, Padding::Same, 77).unwrap();
        let x = Tensor::matrix(3, op.input_dim(), random_input(3 * op.input_dim(), 5)).unwrap();
        let a = op.apply(&x).unwrap();
        let b = op.apply_conv(&x).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn gaussian_shapes_and_seeds() {
        let op = sample_gaussian_projection(3, 1, 4).unwrap();
        assert_eq!(op.dense_matrix().shape(), &[1, 3]);
        let other = sample_gaussian_projection(3, 1, 5).unwrap();
        assert_ne!(op.dense_matrix(), other.dense_matrix());
        assert!(sample_gaussian_projection(3, 3, 0).is_err());
    }

    #[test]
    fn zero_input_and_shape_errors() {
        let op = sample_gaussian_projection(6, 2, 1).unwrap();
        let y = op.apply(&Tensor::zeros(&[4, 6])).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
        assert!(matches!(op.apply(&Tensor::zeros(&[4, 5])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn orthonormalize_rejects_rank_deficiency() {
        let m = Tensor::matrix(2, 4, vec![1., 0., 0., 0., 2., 0., 0., 0.]).unwrap();
        assert!(ProjectionOperator::from_matrix(m).is_err());
    }

    #[test]
    fn bank_text_round_trip() {
        let spec = ProjectionSpec::Conv {
            input: ImageShape::new(1, 8, 8),
            filter_size: 4,
            stride: 2,
            padding: Padding::Same,
        };
        let bank = build_bank(3, spec, false, 11).unwrap();
        let back = ProjectionBank::from_text(&bank.to_text().unwrap()).unwrap();
        assert_eq!(bank, back);

        let g = build_bank(2, ProjectionSpec::Gaussian { input_dim: 5, output_dim: 2 }, true, 3).unwrap();
        assert_eq!(g, ProjectionBank::from_text(&g.to_text().unwrap()).unwrap());
    }
}
