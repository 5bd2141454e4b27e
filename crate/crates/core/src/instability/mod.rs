//! One-dimensional instability machinery: the weighted exterior basis, Γ tensors,
//! counting bounds, packed bump families and the minimal-pair experiment.

mod basis;
mod counting;
mod experiment;
mod family;
mod gamma;
pub mod quad;

pub use basis::{
    gram_schmidt_on_grid, gram_schmidt_weighted, poisson_extend_1d, poisson_series, poisson_value, ExteriorHarmonic, Normalization,
    WeightedBasis1D, MAX_K,
};
pub use counting::{
    delta_net_budget, ell_m, harmonic_indices, operator_norm, tuple_count, x_norm, x_prime_norm, HarmonicIndex,
    NetBudget, NetInputs,
};
pub use experiment::{instability_experiment, instability_sweep, InstabilityReport, InstabilityRow};
pub use family::{declared_mu, mandache_family, packing_constant, profile_lipschitz, DiscreteFamily};
pub use gamma::{
    gamma_tensor, pasted_basis, windowed_solution, windowed_solution_with, GammaContext, GammaTensor,
    WindowedSolution,
};

#[cfg(test)]
mod tests;
