//! Exact event probabilities for many-boson scattering with partially
//! distinguishable particles.
//!
//! `n` bosons enter an `m`-mode linear network described by a unitary `U`;
//! each boson carries an internal state that may make it partially
//! distinguishable from the others. The probability of detecting a given
//! output occupation is a permanent-type sum over double-sided many-particle
//! paths, weighted by the Gram matrix `S` of the internal states. The crate
//! provides
//!
//! * exact evaluation of those probabilities (generalized Ryser
//!   inclusion-exclusion, with brute-force and orthonormalization-based
//!   oracles for cross-checking),
//! * the limiting cases of ideal bosons and fully distinguishable particles,
//!   mixed-state inputs, and the exchange-process decomposition,
//! * distribution-level analysis: total variation distances, permanent-based
//!   deviation bounds, bunching enhancement, best classical-bosonic mixture
//!   fits, and the seeded experiment sweeps built on top of them.
//!
//! Everything is deterministic for a fixed seed; parallel paths reduce in a
//! fixed order and are bit-stable for any worker count.

pub mod analysis;
pub mod distinguishability;
pub mod error;
pub mod matrix;
pub mod permanent;
pub mod probability;
pub mod rng;
pub mod scattering;

pub use analysis::{
    best_mixture, bound_check, bunching_prediction, bunching_ratio, distribution, fourier_scan,
    mean_distance_id_dist, random_scan, sample_events, spearman_rank_correlation,
    suppressed_fraction, total_variation, transition_sweep, BoundKind, BoundReport, Coverage,
    EventDistribution, FourierScanConfig, MixtureFit, ProbKind, RandomScanConfig, ScanUnitary,
    SweepRecord, TransitionSweepConfig,
};
pub use distinguishability::{
    canonical_family, fourier_example_s, gram_matrix, gram_schmidt, j_function, j_function_direct,
    random_states, random_states_from_rng, w_id, DistinguishabilityMatrix,
    GramSchmidtDecomposition, GramSchmidtMode, InternalStateSet, MixedEnsemble,
    SingleParticleMixture,
};
pub use error::{Error, Result};
pub use matrix::ComplexMatrix;
pub use permanent::{
    build_w_tensor, permanent, permanent_naive, permuted_hadamard_permanent,
    tensor_probability_bruteforce, tensor_probability_ryser, tensor_probability_ryser_par,
    Permutation, WTensor,
};
pub use probability::{
    exchange_decomposition, prob_dist, prob_id, prob_mixed, prob_mixed_via_j, prob_partial,
    prob_partial_bruteforce, prob_via_orthonormalization, prob_via_orthonormalization_with_order,
    EventProbability, ExchangeTerm, InternalSpec, ProbMethod, ScatteringInstance,
};
pub use scattering::{
    effective_matrix, enumerate_events, event_count, fourier_unitary, fourier_unitary_zero_based,
    haar_random_unitary, haar_unitary_from_rng, mode_assignment, normalization_factor,
    occupation_from_assignment, ModeAssignment, ModeOccupation, UnitarySpec,
};
