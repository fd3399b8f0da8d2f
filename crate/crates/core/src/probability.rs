//! Event probabilities for a fixed scattering instance.
//!
//! An instance is a network unitary, an input occupation, and the internal
//! description of the particles (pure state set, explicit Gram matrix, or
//! mixed ensemble). Multiply occupied modes are handled by row/column
//! repetition in the effective matrix and in `S`, plus the factorial
//! normalization; no bosonic operator algebra is involved.
//!
//! Probability paths:
//! * [`prob_partial`] - generalized Ryser sum, the production path,
//! * [`prob_partial_bruteforce`] - the permutation-pair sum, an oracle,
//! * [`prob_via_orthonormalization`] - expansion over a Gram-Schmidt basis
//!   with explicit interference of same-configuration terms, an independent
//!   oracle (collision-free instances only),
//! * [`prob_id`] / [`prob_dist`] - ideal bosons / fully distinguishable
//!   particles,
//! * [`prob_mixed`] - ensemble average, with a J-function cross-check path,
//! * [`exchange_decomposition`] - the classical term plus exchange processes.

use num_complex::Complex64;

use crate::distinguishability::{
    gram_matrix, gram_schmidt, j_function, DistinguishabilityMatrix, GramSchmidtMode,
    InternalStateSet, MixedEnsemble,
};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::permanent::{
    permanent, permuted_hadamard_permanent, tensor_probability_bruteforce,
    tensor_probability_ryser, Permutation, NEG_TOL,
};
use crate::scattering::{
    effective_matrix, normalization_factor, ModeOccupation, UNITARITY_TOL,
};

/// Probabilities may exceed 1 by at most this much before clamping.
pub const PROB_UPPER_TOL: f64 = 1e-9;
/// Same-input-mode particles must have mutual overlap 1 within this tolerance.
pub const SAME_MODE_TOL: f64 = 1e-10;
/// Guard for the `n!^2` J-path of [`prob_mixed`].
pub const MAX_MIXED_DIM: usize = 6;
/// Guard for the `n! n^n`-ish orthonormalization expansion.
pub const MAX_ORTHONORMALIZATION_DIM: usize = 5;
/// Guard for the `n!` exchange decomposition.
pub const MAX_EXCHANGE_DIM: usize = 7;

/// Internal description of the particles of an instance.
#[derive(Debug, Clone)]
pub enum InternalSpec {
    /// One pure internal state per particle.
    Pure(InternalStateSet),
    /// An explicit per-particle Gram matrix (no state realization attached).
    Matrix(DistinguishabilityMatrix),
    /// A mixed ensemble of state sets.
    Mixed(MixedEnsemble),
}

/// A fixed scattering experiment: unitary, input occupation, internal states.
#[derive(Debug, Clone)]
pub struct ScatteringInstance {
    unitary: ComplexMatrix,
    input: ModeOccupation,
    internal: InternalSpec,
    /// Gram matrix for `Pure` / `Matrix` internals, `None` for ensembles.
    s: Option<DistinguishabilityMatrix>,
}

impl ScatteringInstance {
    pub fn new(
        unitary: ComplexMatrix,
        input: ModeOccupation,
        internal: InternalSpec,
    ) -> Result<Self> {
        if !unitary.is_square() || unitary.rows() != input.modes() {
            return Err(Error::Dimension(format!(
                "unitary is {}x{} but the input has {} modes",
                unitary.rows(),
                unitary.cols(),
                input.modes()
            )));
        }
        let defect = unitary.unitarity_defect();
        if defect > UNITARITY_TOL {
            return Err(Error::Validation(format!(
                "network matrix is not unitary: defect {defect:.3e}"
            )));
        }
        let n = input.particles();
        if n == 0 {
            return Err(Error::Validation("instance has no particles".into()));
        }
        let internal_n = match &internal {
            InternalSpec::Pure(states) => states.n(),
            InternalSpec::Matrix(s) => s.n(),
            InternalSpec::Mixed(ens) => ens.n(),
        };
        if internal_n != n {
            return Err(Error::Validation(format!(
                "input has {n} particles but the internal description covers {internal_n}"
            )));
        }
        let s = match &internal {
            InternalSpec::Pure(states) => Some(gram_matrix(states)?),
            InternalSpec::Matrix(s) => Some(s.clone()),
            InternalSpec::Mixed(_) => None,
        };
        let instance = Self { unitary, input, internal, s };
        instance.check_same_mode_overlaps()?;
        Ok(instance)
    }

    /// Particles sharing an input mode are physically identical, so the
    /// corresponding `S` entries must be 1; anything else cannot arise from a
    /// valid internal-state assignment and breaks normalization.
    fn check_same_mode_overlaps(&self) -> Result<()> {
        let assignment = crate::scattering::mode_assignment(&self.input);
        let n = self.input.particles();
        let check = |s: &DistinguishabilityMatrix| -> Result<()> {
            for a in 0..n {
                for b in a + 1..n {
                    if assignment.mode_of(a) == assignment.mode_of(b)
                        && (s.get(a, b) - Complex64::ONE).norm() > SAME_MODE_TOL
                    {
                        return Err(Error::Validation(format!(
                            "particles {a} and {b} share input mode {} but have overlap {}",
                            assignment.mode_of(a),
                            s.get(a, b)
                        )));
                    }
                }
            }
            Ok(())
        };
        match &self.internal {
            InternalSpec::Mixed(ens) => {
                for k in 0..ens.realizations().len() {
                    check(ens.gram(k))?;
                }
                Ok(())
            }
            _ => check(self.s.as_ref().expect("pure or matrix internal")),
        }
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    pub fn input(&self) -> &ModeOccupation {
        &self.input
    }

    pub fn internal(&self) -> &InternalSpec {
        &self.internal
    }

    pub fn modes(&self) -> usize {
        self.input.modes()
    }

    pub fn particles(&self) -> usize {
        self.input.particles()
    }

    /// The per-particle Gram matrix for pure / explicit-matrix internals.
    pub fn s_matrix(&self) -> Option<&DistinguishabilityMatrix> {
        self.s.as_ref()
    }

    pub fn states(&self) -> Option<&InternalStateSet> {
        match &self.internal {
            InternalSpec::Pure(states) => Some(states),
            _ => None,
        }
    }

    pub fn ensemble(&self) -> Option<&MixedEnsemble> {
        match &self.internal {
            InternalSpec::Mixed(ens) => Some(ens),
            _ => None,
        }
    }

    fn check_output(&self, output: &ModeOccupation) -> Result<()> {
        if output.modes() != self.modes() {
            return Err(Error::Dimension(format!(
                "output has {} modes, instance has {}",
                output.modes(),
                self.modes()
            )));
        }
        if output.particles() != self.particles() {
            return Err(Error::Validation(format!(
                "output carries {} particles, instance has {}",
                output.particles(),
                self.particles()
            )));
        }
        Ok(())
    }

    fn effective(&self, output: &ModeOccupation) -> Result<ComplexMatrix> {
        effective_matrix(&self.unitary, &self.input, output)
    }

    fn require_s(&self) -> Result<&DistinguishabilityMatrix> {
        self.s.as_ref().ok_or_else(|| {
            Error::Validation("instance holds a mixed ensemble; use prob_mixed".into())
        })
    }
}

/// Which computation produced an [`EventProbability`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbMethod {
    Ryser,
    BruteForce,
    Orthonormalization,
    Mixed,
}

impl ProbMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProbMethod::Ryser => "ryser",
            ProbMethod::BruteForce => "bruteforce",
            ProbMethod::Orthonormalization => "orthonormalization",
            ProbMethod::Mixed => "mixed",
        }
    }
}

/// A probability value for one output event, clamped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct EventProbability {
    pub event: ModeOccupation,
    pub value: f64,
    pub method: ProbMethod,
}

/// Clamps roundoff excursions into `[0, 1]`; anything beyond tolerance is a
/// numerical-consistency failure (or an invalid instance upstream).
fn finalize_probability(raw: f64, context: &str) -> Result<f64> {
    if raw < -NEG_TOL {
        return Err(Error::NumericalConsistency(format!(
            "{context}: probability {raw:.3e} below -{NEG_TOL:.0e}"
        )));
    }
    if raw > 1.0 + PROB_UPPER_TOL {
        return Err(Error::NumericalConsistency(format!(
            "{context}: probability {raw} above 1"
        )));
    }
    Ok(raw.clamp(0.0, 1.0))
}

fn event_probability(
    event: &ModeOccupation,
    raw: f64,
    method: ProbMethod,
    context: &str,
) -> Result<EventProbability> {
    Ok(EventProbability {
        event: event.clone(),
        value: finalize_probability(raw, context)?,
        method,
    })
}

/// Probability of `output` for partially distinguishable particles, via the
/// generalized Ryser sum.
pub fn prob_partial(inst: &ScatteringInstance, output: &ModeOccupation) -> Result<EventProbability> {
    inst.check_output(output)?;
    let s = inst.require_s()?;
    let m = inst.effective(output)?;
    let raw = normalization_factor(inst.input(), output) * tensor_probability_ryser(&m, s)?;
    event_probability(output, raw, ProbMethod::Ryser, "prob_partial")
}

/// Oracle variant of [`prob_partial`] using the `n!^2` permutation-pair sum.
pub fn prob_partial_bruteforce(
    inst: &ScatteringInstance,
    output: &ModeOccupation,
) -> Result<EventProbability> {
    inst.check_output(output)?;
    let s = inst.require_s()?;
    let m = inst.effective(output)?;
    let raw = normalization_factor(inst.input(), output) * tensor_probability_bruteforce(&m, s)?;
    event_probability(output, raw, ProbMethod::BruteForce, "prob_partial_bruteforce")
}

/// Probability for ideal (fully indistinguishable) bosons,
/// `N |perm(M)|^2`.
pub fn prob_id(inst: &ScatteringInstance, output: &ModeOccupation) -> Result<EventProbability> {
    inst.check_output(output)?;
    let m = inst.effective(output)?;
    let raw = normalization_factor(inst.input(), output) * permanent(&m)?.norm_sqr();
    event_probability(output, raw, ProbMethod::Ryser, "prob_id")
}

/// Probability for fully distinguishable particles,
/// `N perm(|M|^2)`.
pub fn prob_dist(inst: &ScatteringInstance, output: &ModeOccupation) -> Result<EventProbability> {
    inst.check_output(output)?;
    let m = inst.effective(output)?;
    let p = permanent(&m.abs_squared())?;
    let raw = normalization_factor(inst.input(), output) * p.re;
    event_probability(output, raw, ProbMethod::Ryser, "prob_dist")
}

/// Probability for a mixed-ensemble instance: the ensemble average of
/// [`prob_partial`] over the realizations.
pub fn prob_mixed(inst: &ScatteringInstance, output: &ModeOccupation) -> Result<EventProbability> {
    inst.check_output(output)?;
    let ens = inst
        .ensemble()
        .ok_or_else(|| Error::Validation("prob_mixed needs a mixed-ensemble instance".into()))?;
    let n = inst.particles();
    if n > MAX_MIXED_DIM {
        return Err(Error::Capacity(format!(
            "mixed-state path is guarded at n <= {MAX_MIXED_DIM}, got n = {n}"
        )));
    }
    let m = inst.effective(output)?;
    let norm = normalization_factor(inst.input(), output);
    let mut raw = 0.0;
    for (k, (p, _)) in ens.realizations().iter().enumerate() {
        raw += p * tensor_probability_ryser(&m, ens.gram(k))?;
    }
    event_probability(output, norm * raw, ProbMethod::Mixed, "prob_mixed")
}

/// Cross-check path for [`prob_mixed`]: the double permutation sum weighted by
/// the ensemble-averaged overlap products `J(sigma, rho)`.
pub fn prob_mixed_via_j(
    inst: &ScatteringInstance,
    output: &ModeOccupation,
) -> Result<EventProbability> {
    inst.check_output(output)?;
    let ens = inst
        .ensemble()
        .ok_or_else(|| Error::Validation("prob_mixed needs a mixed-ensemble instance".into()))?;
    let n = inst.particles();
    if n > MAX_MIXED_DIM {
        return Err(Error::Capacity(format!(
            "J path sums n!^2 terms; guarded at n <= {MAX_MIXED_DIM}, got n = {n}"
        )));
    }
    let m = inst.effective(output)?;
    let perms = Permutation::all(n);
    let mut total = Complex64::ZERO;
    for sigma in &perms {
        for rho in &perms {
            let j = j_function(ens, sigma, rho)?;
            let mut amp = Complex64::ONE;
            for l in 0..n {
                amp *= m.get(sigma.image(l), l) * m.get(rho.image(l), l).conj();
            }
            total += j * amp;
        }
    }
    if total.im.abs() > 1e-10 {
        return Err(Error::NumericalConsistency(format!(
            "J-path probability has imaginary residue {:.3e}",
            total.im
        )));
    }
    let raw = normalization_factor(inst.input(), output) * total.re;
    event_probability(output, raw, ProbMethod::Mixed, "prob_mixed_via_j")
}

/// [`prob_via_orthonormalization`] with an explicit Gram-Schmidt processing
/// order; event probabilities do not depend on it.
pub fn prob_via_orthonormalization_with_order(
    inst: &ScatteringInstance,
    output: &ModeOccupation,
    order: &Permutation,
) -> Result<EventProbability> {
    inst.check_output(output)?;
    let states = inst.states().ok_or_else(|| {
        Error::Validation("orthonormalization path needs pure internal states".into())
    })?;
    let n = inst.particles();
    if n > MAX_ORTHONORMALIZATION_DIM {
        return Err(Error::Capacity(format!(
            "orthonormalization path is guarded at n <= {MAX_ORTHONORMALIZATION_DIM}, got n = {n}"
        )));
    }
    if !inst.input().is_collision_free() || !output.is_collision_free() {
        return Err(Error::Validation(
            "orthonormalization path supports collision-free inputs and outputs only".into(),
        ));
    }
    let m = inst.effective(output)?;
    let dec = gram_schmidt(states, order, GramSchmidtMode::Permissive)?;
    let rank = dec.rank();

    // Rows reordered to the processing order; row p belongs to the state
    // processed at step p.
    let rows = ComplexMatrix::from_fn(n, n, |p, k| m.get(order.image(p), k));

    // For every assignment g of orthonormal internal labels to the output
    // slots, the amplitude is the permanent of M[p][k] c[p][g_k]; orthogonal
    // assignments add incoherently, equal ones interfere inside the permanent.
    let mut total = 0.0;
    let mut labels = vec![0usize; n];
    loop {
        let a = ComplexMatrix::from_fn(n, n, |p, k| rows.get(p, k) * dec.coefficient(p, labels[k]));
        total += permanent(&a)?.norm_sqr();

        let mut pos = n;
        loop {
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < rank {
                break;
            }
            labels[pos] = 0;
        }
        if pos == usize::MAX {
            break;
        }
    }
    event_probability(output, total, ProbMethod::Orthonormalization, "prob_via_orthonormalization")
}

/// Probability via expansion of the initial state over its Gram-Schmidt
/// orthonormal basis. Independent oracle for [`prob_partial`].
pub fn prob_via_orthonormalization(
    inst: &ScatteringInstance,
    output: &ModeOccupation,
) -> Result<EventProbability> {
    let n = inst.particles();
    prob_via_orthonormalization_with_order(inst, output, &Permutation::identity(n))
}

/// One exchange process: a permutation, its overlap weight
/// `prod_j S[sigma_j][j]`, and `perm(M o conj(M)_sigma)` with entries
/// `M[j][k] conj(M[sigma(j)][k])`.
///
/// With this pairing the weighted sum over all permutations equals the
/// tensor probability for every Hermitian `S`; the transposed weight
/// `prod_j S[j][sigma_j]` (its complex conjugate) does so only for real `S`.
#[derive(Debug, Clone)]
pub struct ExchangeTerm {
    pub permutation: Permutation,
    pub weight: Complex64,
    pub permanent: Complex64,
}

/// Decomposes the (unnormalized) event probability into the classical term
/// plus exchange processes: the identity entry is `perm(|M|^2)` with weight 1
/// and the full weighted sum over all permutations recovers
/// `prob_partial / N`.
pub fn exchange_decomposition(
    inst: &ScatteringInstance,
    output: &ModeOccupation,
) -> Result<Vec<ExchangeTerm>> {
    inst.check_output(output)?;
    let s = inst.require_s()?;
    let n = inst.particles();
    if n > MAX_EXCHANGE_DIM {
        return Err(Error::Capacity(format!(
            "exchange decomposition enumerates n! terms; guarded at n <= {MAX_EXCHANGE_DIM}, got n = {n}"
        )));
    }
    let m = inst.effective(output)?;
    Permutation::all(n)
        .into_iter()
        .map(|sigma| {
            let mut weight = Complex64::ONE;
            for j in 0..n {
                weight *= s.get(sigma.image(j), j);
            }
            let permanent = permuted_hadamard_permanent(&m, &sigma)?;
            Ok(ExchangeTerm { permutation: sigma, weight, permanent })
        })
        .collect()
}
