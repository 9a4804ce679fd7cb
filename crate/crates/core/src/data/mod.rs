//! Training data sources.

mod dump;
mod idx;
mod mixture;
mod ring;

pub use dump::{csv_points, dump_samples, parse_csv_points, parse_pgm, pgm_grid, to_pixel, DumpFormat};
pub use idx::{parse_idx, read_idx, write_idx, IdxImageSet, IDX3_MAGIC};
pub use mixture::{gaussian_log_density, GaussianMixture, MixtureSample};
pub use ring::{embedded_ring, EmbeddedRing};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{rng, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub enum DataSource {
    /// Mixture samples are clipped into `[-1, 1]^d`.
    GaussianMixture(GaussianMixture),
    EmbeddedRing(EmbeddedRing),
    IdxImages(IdxImageSet),
}

impl DataSource {
    pub fn kind(&self) -> &'static str {
        match self {
            DataSource::GaussianMixture(_) => "gaussian-mixture",
            DataSource::EmbeddedRing(_) => "embedded-ring",
            DataSource::IdxImages(_) => "idx-images",
        }
    }

    pub fn sample_dim(&self) -> usize {
        match self {
            DataSource::GaussianMixture(m) => m.dim(),
            DataSource::EmbeddedRing(r) => r.ambient_dim(),
            DataSource::IdxImages(s) => s.image_len(),
        }
    }

    pub fn mode_centers(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            DataSource::GaussianMixture(m) => Some(m.means()),
            DataSource::EmbeddedRing(r) => Some(r.centers().to_vec()),
            DataSource::IdxImages(_) => None,
        }
    }

    /// `(height, width)` when samples are images.
    pub fn image_shape(&self) -> Option<(usize, usize)> {
        match self {
            DataSource::IdxImages(s) => Some((s.rows(), s.cols())),
            _ => None,
        }
    }

    pub fn stream(&self, seed: u64) -> DataStream {
        DataStream {
            source: self.clone(),
            rng: rng(seed),
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
        }
    }
}

/// Seeded batch iterator over a [`DataSource`]. Image sets are visited in a
/// fresh shuffled order each epoch; exhaustion wraps into the next epoch.
pub struct DataStream {
    source: DataSource,
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl DataStream {
    pub fn source(&self) -> &DataSource {
        &self.source
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self, batch: usize) -> Result<Tensor> {
        if batch == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        match &self.source {
            DataSource::GaussianMixture(m) => {
                let mut s = m.sample_with(batch, &mut self.rng)?.samples;
                s.data_mut().iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
                Ok(s)
            }
            DataSource::EmbeddedRing(r) => r.sample_with(batch, &mut self.rng),
            DataSource::IdxImages(set) => {
                let n = set.image_len();
                let mut data = Vec::with_capacity(batch * n);
                for _ in 0..batch {
                    if self.cursor == self.order.len() {
                        if !self.order.is_empty() {
                            self.epoch += 1;
                        }
                        self.order = (0..set.count()).collect();
                        self.order.shuffle(&mut self.rng);
                        self.cursor = 0;
                    }
                    data.extend(set.image(self.order[self.cursor]));
                    self.cursor += 1;
                }
                Tensor::matrix(batch, n, data)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_stream_wraps_into_next_epoch() {
        let set = IdxImageSet::new(3, 1, 2, vec![0, 0, 128, 128, 255, 255]).unwrap();
        let src = DataSource::IdxImages(set);
        let mut s = src.stream(4);
        let first = s.next_batch(3).unwrap();
        assert_eq!(s.epoch(), 0);
        let mut firsts: Vec<f64> = first.data().chunks(2).map(|r| r[0]).collect();
        firsts.sort_by(f64::total_cmp);
        assert_eq!(firsts, vec![-1.0, 2.0 * 128.0 / 255.0 - 1.0, 1.0]);
        s.next_batch(1).unwrap();
        assert_eq!(s.epoch(), 1);
    }
}
