//! Exact small-instance oracles for the optimal-discriminator identity, the
//! marginal-consistency argument, and support-volume growth.

mod consistency;
mod discrete;
pub mod simplex;
mod trained;
mod volume;

pub use consistency::{build_constraint_matrix, max_residual, ConstraintMatrix, ResidualEntry, ResidualReport};
pub use discrete::{
    kl_divergence, marginalize, optimal_discriminator, projected_value, regular_grid, value, value_decomposition,
    Binning, DiscreteDistribution, Marginal, ValueDecomposition, IDENTITY_TOLERANCE, MASS_TOLERANCE,
};
pub use trained::{sup_distance, train_discrete_discriminator, DiscreteTrainingConfig};
pub use volume::{
    determinant_inequality_check, random_determinant_instance, support_volume_ratio, uniform_in_ball,
    DeterminantCheck, RatioEstimate, VolumeReport, Z_99,
};
