//! Internal single-particle states and their Gram matrices.
//!
//! Every particle carries an "internal" state pooling all degrees of freedom
//! that could distinguish it from the others (polarization, arrival time, ..).
//! The n x n Gram matrix `S[j][k] = <v_j, v_k>` of those states is the sole
//! interference descriptor for a pure input: `S = 1` means fully
//! distinguishable particles, `S = all-ones` ideal bosons. The inner product
//! is conjugate-linear in its first argument.
//!
//! Mixed inputs are weighted lists of such state sets; their interference
//! content is the ensemble-averaged overlap product `J`.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::permanent::{permanent, Permutation};
use crate::rng::{complex_gaussian, stream_rng};
use crate::scattering::{mode_assignment, ModeOccupation};

/// Unit-norm tolerance for internal state vectors.
pub const NORM_TOL: f64 = 1e-12;
/// Hermiticity / diagonal tolerance for distinguishability matrices.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Lower bound on the smallest eigenvalue of a valid distinguishability matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Residual norm below which a vector counts as linearly dependent.
pub const RANK_TOL: f64 = 1e-10;
/// Cap on the number of expanded realizations of a product ensemble.
pub const MAX_REALIZATIONS: usize = 1_000_000;

/// Permanent bounds `1 <= perm(S) <= n!` are validated up to this dimension;
/// beyond it the 2^n permanent loop would dominate construction.
const PERM_CHECK_MAX_DIM: usize = 16;

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// One internal state vector per particle, in mode-assignment order of the
/// occupied input modes. Particles sharing an input mode must carry the same
/// vector; [`InternalStateSet::replicate_for`] builds such sets from per-mode
/// states.
#[derive(Debug, Clone)]
pub struct InternalStateSet {
    dim: usize,
    vectors: Vec<Vec<Complex64>>,
}

impl InternalStateSet {
    pub fn new(dim: usize, vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        if dim == 0 || vectors.is_empty() {
            return Err(Error::Validation("state set must be non-empty with dim >= 1".into()));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Dimension(format!(
                    "state {i} has dimension {} but the set is {dim}-dimensional",
                    v.len()
                )));
            }
            let n2 = norm_sqr(v);
            if !n2.is_finite() || (n2.sqrt() - 1.0).abs() > NORM_TOL {
                return Err(Error::Validation(format!(
                    "state {i} is not unit-norm: |v| = {}",
                    n2.sqrt()
                )));
            }
        }
        Ok(Self { dim, vectors })
    }

    /// Expands one state per occupied mode into the per-particle list,
    /// repeating states according to the input multiplicities.
    pub fn replicate_for(input: &ModeOccupation, per_mode: Vec<Vec<Complex64>>) -> Result<Self> {
        let occupied: Vec<usize> = (0..input.modes()).filter(|&m| input.counts()[m] > 0).collect();
        if per_mode.len() != occupied.len() {
            return Err(Error::Validation(format!(
                "{} occupied modes but {} per-mode states",
                occupied.len(),
                per_mode.len()
            )));
        }
        let dim = per_mode.first().map_or(0, Vec::len);
        let mut vectors = Vec::with_capacity(input.particles());
        let assignment = mode_assignment(input);
        for &mode in assignment.modes() {
            let slot = occupied.iter().position(|&m| m == mode).expect("occupied");
            vectors.push(per_mode[slot].clone());
        }
        Self::new(dim, vectors)
    }

    /// Particle count.
    pub fn n(&self) -> usize {
        self.vectors.len()
    }

    /// Internal-space dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, j: usize) -> &[Complex64] {
        &self.vectors[j]
    }

    pub fn vectors(&self) -> &[Vec<Complex64>] {
        &self.vectors
    }

    /// Reorders the particles; used to exhibit the labeling dependence of the
    /// orthonormalization picture.
    pub fn permuted(&self, order: &Permutation) -> Result<Self> {
        if order.n() != self.n() {
            return Err(Error::Dimension(format!(
                "permutation on {} elements, set has {} states",
                order.n(),
                self.n()
            )));
        }
        let vectors = (0..self.n()).map(|j| self.vectors[order.image(j)].clone()).collect();
        Ok(Self { dim: self.dim, vectors })
    }
}

/// Hermitian, positive semidefinite matrix of mutual state overlaps with unit
/// diagonal. Stored exactly Hermitian: after validation the strict lower
/// triangle is mirrored from the upper and the diagonal snapped to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinguishabilityMatrix {
    entries: ComplexMatrix,
}

impl DistinguishabilityMatrix {
    pub fn new(candidate: ComplexMatrix) -> Result<Self> {
        if !candidate.is_square() || candidate.rows() == 0 {
            return Err(Error::Dimension(format!(
                "distinguishability matrix must be square and non-empty, got {}x{}",
                candidate.rows(),
                candidate.cols()
            )));
        }
        let n = candidate.rows();
        for j in 0..n {
            let d = candidate.get(j, j);
            if (d - Complex64::ONE).norm() > HERMITICITY_TOL {
                return Err(Error::Validation(format!(
                    "unit diagonal violated: S[{j}][{j}] = {d}"
                )));
            }
            for k in j + 1..n {
                let upper = candidate.get(j, k);
                if (upper - candidate.get(k, j).conj()).norm() > HERMITICITY_TOL {
                    return Err(Error::Validation(format!(
                        "not Hermitian at ({j},{k})"
                    )));
                }
                if upper.norm() > 1.0 + NORM_TOL {
                    return Err(Error::Validation(format!(
                        "|S[{j}][{k}]| = {} exceeds 1",
                        upper.norm()
                    )));
                }
            }
        }
        let entries = ComplexMatrix::from_fn(n, n, |j, k| {
            use std::cmp::Ordering::*;
            match j.cmp(&k) {
                Equal => Complex64::ONE,
                Less => candidate.get(j, k),
                Greater => candidate.get(k, j).conj(),
            }
        });
        let min_eig = min_eigenvalue(&entries);
        if min_eig < -PSD_TOL {
            return Err(Error::Validation(format!(
                "not positive semidefinite: smallest eigenvalue {min_eig:.3e}"
            )));
        }
        let out = Self { entries };
        if n <= PERM_CHECK_MAX_DIM {
            let p = out.permanent_value()?;
            let upper: f64 = (1..=n).map(|i| i as f64).product();
            if p < 1.0 - 1e-9 || p > upper * (1.0 + 1e-12) + 1e-9 {
                return Err(Error::Validation(format!(
                    "permanent {p} outside [1, {n}!]"
                )));
            }
        }
        Ok(out)
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: ComplexMatrix::identity(n) }
    }

    pub fn all_ones(n: usize) -> Self {
        Self { entries: ComplexMatrix::ones(n) }
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.entries.get(j, k)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.entries
    }

    pub fn is_identity(&self) -> bool {
        self.entries == ComplexMatrix::identity(self.n())
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.entries.entries().iter().all(|z| z.im.abs() <= tol)
    }

    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.entries.entries().iter().all(|z| z.im.abs() <= tol && z.re >= -tol)
    }

    /// `perm(S)`; real for Hermitian `S`.
    pub fn permanent_value(&self) -> Result<f64> {
        let p = permanent(&self.entries)?;
        if p.im.abs() > 1e-9 * (1.0 + p.re.abs()) {
            return Err(Error::NumericalConsistency(format!(
                "permanent of Hermitian matrix has imaginary part {:.3e}",
                p.im
            )));
        }
        Ok(p.re)
    }
}

fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    let eig = m.to_nalgebra().symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Gram matrix `S[j][k] = <v_j, v_k>` of an internal state set.
pub fn gram_matrix(states: &InternalStateSet) -> Result<DistinguishabilityMatrix> {
    let n = states.n();
    let mut entries = ComplexMatrix::identity(n);
    for j in 0..n {
        for k in j + 1..n {
            let s = inner(states.vector(j), states.vector(k));
            entries.set(j, k, s);
            entries.set(k, j, s.conj());
        }
    }
    DistinguishabilityMatrix::new(entries)
}

/// The one-parameter family with all off-diagonal overlaps equal to `x`,
/// realized in an (n+1)-dimensional space by
/// `v_k = sqrt(x) e_0 + sqrt(1-x) e_{k+1}`.
pub fn canonical_family(n: usize, x: f64) -> Result<(DistinguishabilityMatrix, InternalStateSet)> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Validation(format!("x = {x} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::Validation("need n >= 1".into()));
    }
    let shared = x.sqrt();
    let rest = (1.0 - x).sqrt();
    let vectors = (0..n)
        .map(|k| {
            let mut v = vec![Complex64::ZERO; n + 1];
            v[0] = shared.into();
            v[k + 1] = rest.into();
            v
        })
        .collect();
    let states = InternalStateSet::new(n + 1, vectors)?;
    let entries = ComplexMatrix::from_fn(n, n, |j, k| {
        if j == k {
            Complex64::ONE
        } else {
            x.into()
        }
    });
    Ok((DistinguishabilityMatrix::new(entries)?, states))
}

/// The 4x4 matrix of three mutually identical particles and a fourth with
/// overlap `x` to each of them.
pub fn fourier_example_s(x: f64) -> Result<DistinguishabilityMatrix> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Validation(format!("x = {x} outside [0, 1]")));
    }
    let entries = ComplexMatrix::from_fn(4, 4, |j, k| {
        if j == k {
            Complex64::ONE
        } else if j == 3 || k == 3 {
            x.into()
        } else {
            Complex64::ONE
        }
    });
    DistinguishabilityMatrix::new(entries)
}

/// `n` independent states uniform on the unit sphere of a `dim`-dimensional
/// complex space.
pub fn random_states_from_rng(n: usize, dim: usize, rng: &mut impl Rng) -> Result<InternalStateSet> {
    if n == 0 || dim == 0 {
        return Err(Error::Validation("need n >= 1 and dim >= 1".into()));
    }
    let vectors = (0..n)
        .map(|_| {
            let mut v: Vec<Complex64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
            let norm = norm_sqr(&v).sqrt();
            for z in &mut v {
                *z /= norm;
            }
            v
        })
        .collect();
    InternalStateSet::new(dim, vectors)
}

/// Seeded variant of [`random_states_from_rng`].
pub fn random_states(n: usize, dim: usize, seed: u64) -> Result<InternalStateSet> {
    random_states_from_rng(n, dim, &mut stream_rng(seed, 0))
}

/// Whether a linearly dependent vector aborts orthonormalization or is
/// expressed in the existing span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramSchmidtMode {
    Strict,
    Permissive,
}

/// Triangular expansion of a state set over its Gram-Schmidt basis:
/// `v_{order(j)} = sum_{k} c[j][k] basis[k]` with `c[j][k] = 0` for basis
/// vectors created after step `j`.
#[derive(Debug, Clone)]
pub struct GramSchmidtDecomposition {
    order: Permutation,
    coefficients: Vec<Vec<Complex64>>,
    basis: Vec<Vec<Complex64>>,
}

impl GramSchmidtDecomposition {
    /// Particle count.
    pub fn n(&self) -> usize {
        self.coefficients.len()
    }

    /// Number of orthonormal basis vectors (the rank of the state set).
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Coefficient of processed state `j` on basis vector `k`.
    #[inline]
    pub fn coefficient(&self, j: usize, k: usize) -> Complex64 {
        self.coefficients[j][k]
    }

    pub fn basis(&self) -> &[Vec<Complex64>] {
        &self.basis
    }

    /// The processing order that produced this decomposition.
    pub fn order(&self) -> &Permutation {
        &self.order
    }

    /// Reconstructs the `j`-th processed state from the expansion.
    pub fn reconstruct(&self, j: usize) -> Vec<Complex64> {
        let dim = self.basis.first().map_or(0, Vec::len);
        let mut out = vec![Complex64::ZERO; dim];
        for (k, b) in self.basis.iter().enumerate() {
            let c = self.coefficients[j][k];
            for (o, &bv) in out.iter_mut().zip(b) {
                *o += c * bv;
            }
        }
        out
    }
}

/// Gram-Schmidt orthonormalization of the states in the given processing
/// order. A vector whose residual after projection falls below [`RANK_TOL`]
/// is linearly dependent: in permissive mode it is expanded over the existing
/// basis, in strict mode it raises a degeneracy error.
pub fn gram_schmidt(
    states: &InternalStateSet,
    order: &Permutation,
    mode: GramSchmidtMode,
) -> Result<GramSchmidtDecomposition> {
    let n = states.n();
    if order.n() != n {
        return Err(Error::Dimension(format!(
            "processing order acts on {} elements, set has {n} states",
            order.n()
        )));
    }
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut coefficients: Vec<Vec<Complex64>> = Vec::new();
    for j in 0..n {
        let mut w = states.vector(order.image(j)).to_vec();
        let mut row = Vec::with_capacity(basis.len() + 1);
        for b in &basis {
            let c = inner(b, &w);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
            row.push(c);
        }
        let residual = norm_sqr(&w).sqrt();
        if residual < RANK_TOL {
            if mode == GramSchmidtMode::Strict {
                return Err(Error::Degeneracy(format!(
                    "state {} lies in the span of its predecessors (residual {residual:.3e})",
                    order.image(j)
                )));
            }
        } else {
            for wi in &mut w {
                *wi /= residual;
            }
            basis.push(w);
            row.push(residual.into());
        }
        coefficients.push(row);
    }
    let rank = basis.len();
    for row in &mut coefficients {
        row.resize(rank, Complex64::ZERO);
    }
    Ok(GramSchmidtDecomposition { order: order.clone(), coefficients, basis })
}

/// Weight of the fully indistinguishable component,
/// `prod_{j >= 2} |c[j][1]|^2` in the processing order of the decomposition.
pub fn w_id(dec: &GramSchmidtDecomposition) -> f64 {
    (1..dec.n()).map(|j| dec.coefficient(j, 0).norm_sqr()).product()
}

/// A per-particle mixture of internal states (one mixed state for one input
/// port).
#[derive(Debug, Clone)]
pub struct SingleParticleMixture {
    dim: usize,
    components: Vec<(f64, Vec<Complex64>)>,
}

impl SingleParticleMixture {
    pub fn new(dim: usize, components: Vec<(f64, Vec<Complex64>)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("mixture needs at least one component".into()));
        }
        let mut total = 0.0;
        for (p, v) in &components {
            if *p < 0.0 {
                return Err(Error::Validation(format!("negative weight {p}")));
            }
            if v.len() != dim {
                return Err(Error::Dimension("mixture component dimension mismatch".into()));
            }
            if (norm_sqr(v).sqrt() - 1.0).abs() > NORM_TOL {
                return Err(Error::Validation("mixture component is not unit-norm".into()));
            }
            total += p;
        }
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::Validation(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { dim, components })
    }

    pub fn components(&self) -> &[(f64, Vec<Complex64>)] {
        &self.components
    }

    /// Density matrix `sum_k p_k |v_k><v_k|`.
    fn density_matrix(&self) -> ComplexMatrix {
        let mut rho = ComplexMatrix::zeros(self.dim, self.dim);
        for (p, v) in &self.components {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let add = *p * v[i] * v[j].conj();
                    rho.set(i, j, rho.get(i, j) + add);
                }
            }
        }
        rho
    }
}

/// How a [`MixedEnsemble`] was constructed.
#[derive(Debug, Clone)]
enum EnsembleStructure {
    /// Independent per-particle mixtures; density matrices kept for the
    /// cycle-factorized J fast path.
    Product(Vec<ComplexMatrix>),
    Correlated,
}

/// A weighted list of internal-state-set realizations, each with its Gram
/// matrix precomputed.
#[derive(Debug, Clone)]
pub struct MixedEnsemble {
    realizations: Vec<(f64, InternalStateSet)>,
    grams: Vec<DistinguishabilityMatrix>,
    structure: EnsembleStructure,
}

impl MixedEnsemble {
    /// General (possibly correlated) ensemble from explicit realizations.
    pub fn new(realizations: Vec<(f64, InternalStateSet)>) -> Result<Self> {
        Self::with_structure(realizations, EnsembleStructure::Correlated)
    }

    fn with_structure(
        realizations: Vec<(f64, InternalStateSet)>,
        structure: EnsembleStructure,
    ) -> Result<Self> {
        if realizations.is_empty() {
            return Err(Error::Validation("ensemble needs at least one realization".into()));
        }
        let n = realizations[0].1.n();
        let dim = realizations[0].1.dim();
        let mut total = 0.0;
        for (p, states) in &realizations {
            if *p < 0.0 {
                return Err(Error::Validation(format!("negative ensemble weight {p}")));
            }
            if states.n() != n || states.dim() != dim {
                return Err(Error::Validation(
                    "all realizations must share particle count and dimension".into(),
                ));
            }
            total += p;
        }
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::Validation(format!("ensemble weights sum to {total}, not 1")));
        }
        let grams = realizations
            .iter()
            .map(|(_, states)| gram_matrix(states))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { realizations, grams, structure })
    }

    /// Product ensemble of independent per-particle mixtures; the tuple
    /// product is expanded into explicit realizations at construction.
    pub fn from_product(factors: Vec<SingleParticleMixture>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Validation("product ensemble needs at least one factor".into()));
        }
        let dim = factors[0].dim;
        if factors.iter().any(|f| f.dim != dim) {
            return Err(Error::Dimension("factors must share the internal dimension".into()));
        }
        let mut count: usize = 1;
        for f in &factors {
            count = count.saturating_mul(f.components.len());
            if count > MAX_REALIZATIONS {
                return Err(Error::Capacity(format!(
                    "product ensemble would expand into more than {MAX_REALIZATIONS} realizations"
                )));
            }
        }
        let mut realizations = Vec::with_capacity(count);
        let mut index = vec![0usize; factors.len()];
        loop {
            let mut weight = 1.0;
            let mut vectors = Vec::with_capacity(factors.len());
            for (f, &i) in factors.iter().zip(&index) {
                let (p, v) = &f.components[i];
                weight *= p;
                vectors.push(v.clone());
            }
            realizations.push((weight, InternalStateSet::new(dim, vectors)?));
            // odometer increment
            let mut pos = factors.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                index[pos] += 1;
                if index[pos] < factors[pos].components.len() {
                    break;
                }
                index[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
        let densities = factors.iter().map(|f| f.density_matrix()).collect();
        Self::with_structure(realizations, EnsembleStructure::Product(densities))
    }

    /// The correlated two-branch state that is ideal-bosonic with probability
    /// `1 - gamma` and fully distinguishable with probability `gamma`.
    pub fn bosonic_classical_mix(n: usize, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Validation(format!("gamma = {gamma} outside [0, 1]")));
        }
        let dim = n + 1;
        let basis_vec = |i: usize| {
            let mut v = vec![Complex64::ZERO; dim];
            v[i] = Complex64::ONE;
            v
        };
        let identical = InternalStateSet::new(dim, vec![basis_vec(0); n])?;
        let distinct = InternalStateSet::new(dim, (1..=n).map(basis_vec).collect())?;
        // degenerate weights are fine; keep both branches so the structure tag
        // stays meaningful for gamma in {0, 1}
        Self::with_structure(
            vec![(1.0 - gamma, identical), (gamma, distinct)],
            EnsembleStructure::Correlated,
        )
    }

    pub fn realizations(&self) -> &[(f64, InternalStateSet)] {
        &self.realizations
    }

    pub fn gram(&self, k: usize) -> &DistinguishabilityMatrix {
        &self.grams[k]
    }

    /// Particle count.
    pub fn n(&self) -> usize {
        self.realizations[0].1.n()
    }

    pub fn dim(&self) -> usize {
        self.realizations[0].1.dim()
    }

    pub fn is_product(&self) -> bool {
        matches!(self.structure, EnsembleStructure::Product(_))
    }

    pub fn structure_tag(&self) -> &'static str {
        match self.structure {
            EnsembleStructure::Product(_) => "product",
            EnsembleStructure::Correlated => "correlated",
        }
    }
}

/// Ensemble-averaged overlap product
/// `J(sigma, rho) = sum_k p_k prod_j S_k[rho_j][sigma_j]`.
///
/// Satisfies `J(sigma, rho) = J(sigma rho^{-1}, 1)` and
/// `J(sigma, 1) = conj(J(sigma^{-1}, 1))`. Product ensembles are evaluated by
/// the cycle-factorized fast path; [`j_function_direct`] is the defining sum.
pub fn j_function(
    ensemble: &MixedEnsemble,
    sigma: &Permutation,
    rho: &Permutation,
) -> Result<Complex64> {
    if let EnsembleStructure::Product(densities) = &ensemble.structure {
        return j_function_cycles(densities, ensemble.n(), sigma, rho);
    }
    j_function_direct(ensemble, sigma, rho)
}

/// The defining sum over realizations.
pub fn j_function_direct(
    ensemble: &MixedEnsemble,
    sigma: &Permutation,
    rho: &Permutation,
) -> Result<Complex64> {
    let n = ensemble.n();
    if sigma.n() != n || rho.n() != n {
        return Err(Error::Dimension(format!(
            "permutations act on {} / {} elements, ensemble has {n} particles",
            sigma.n(),
            rho.n()
        )));
    }
    let mut total = Complex64::ZERO;
    for (k, (p, _)) in ensemble.realizations.iter().enumerate() {
        let s = &ensemble.grams[k];
        let mut prod = Complex64::ONE;
        for j in 0..n {
            prod *= s.get(rho.image(j), sigma.image(j));
        }
        total += *p * prod;
    }
    Ok(total)
}

/// Cycle-factorized J for product ensembles: with `tau = rho sigma^{-1}`,
/// `J = prod_{cycles (a, tau(a), ..)} Tr(rho_last .. rho_tau(a) rho_a)`.
fn j_function_cycles(
    densities: &[ComplexMatrix],
    n: usize,
    sigma: &Permutation,
    rho: &Permutation,
) -> Result<Complex64> {
    if sigma.n() != n || rho.n() != n {
        return Err(Error::Dimension("permutation size mismatch".into()));
    }
    let tau = rho.compose(&sigma.inverse());
    let mut seen = vec![false; n];
    let mut total = Complex64::ONE;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut cur = start;
        while !seen[cur] {
            seen[cur] = true;
            cycle.push(cur);
            cur = tau.image(cur);
        }
        let mut prod = densities[*cycle.last().expect("non-empty cycle")].clone();
        for &p in cycle.iter().rev().skip(1) {
            prod = prod.matmul(&densities[p])?;
        }
        let trace: Complex64 = (0..prod.rows()).map(|i| prod.get(i, i)).sum();
        total *= trace;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn qubit(a: Complex64, b: Complex64) -> Vec<Complex64> {
        vec![a, b]
    }

    /// |0>, (|0>+|1>)/sqrt(2), (|0>-|1>)/sqrt(2)
    fn ambiguous_triple() -> InternalStateSet {
        let h = 1.0 / 2f64.sqrt();
        InternalStateSet::new(
            2,
            vec![
                qubit(Complex64::ONE, Complex64::ZERO),
                qubit(c(h, 0.0), c(h, 0.0)),
                qubit(c(h, 0.0), c(-h, 0.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn gram_matrix_extremes_and_triple() {
        let ortho = InternalStateSet::new(
            3,
            (0..3)
                .map(|i| {
                    let mut v = vec![Complex64::ZERO; 3];
                    v[i] = Complex64::ONE;
                    v
                })
                .collect(),
        )
        .unwrap();
        assert!(gram_matrix(&ortho).unwrap().is_identity());

        let same = InternalStateSet::new(2, vec![qubit(Complex64::ONE, Complex64::ZERO); 3]).unwrap();
        let s = gram_matrix(&same).unwrap();
        assert_eq!(s.matrix(), &ComplexMatrix::ones(3));

        let s = gram_matrix(&ambiguous_triple()).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(s.get(0, 1).re, h, epsilon = 1e-14);
        assert_abs_diff_eq!(s.get(0, 2).re, h, epsilon = 1e-14);
        assert_abs_diff_eq!(s.get(1, 2).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn gram_convention_is_conjugate_linear_in_first_slot() {
        let h = 1.0 / 2f64.sqrt();
        let states = InternalStateSet::new(
            2,
            vec![qubit(c(h, 0.0), c(0.0, h)), qubit(Complex64::ZERO, Complex64::ONE)],
        )
        .unwrap();
        let s = gram_matrix(&states).unwrap();
        // <v_1 | v_2> = conj(i/sqrt2) = -i/sqrt2
        assert_abs_diff_eq!(s.get(0, 1).re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.get(0, 1).im, -h, epsilon = 1e-14);
    }

    #[test]
    fn distinguishability_validation() {
        // bad diagonal
        let mut bad = ComplexMatrix::identity(2);
        bad.set(0, 0, c(0.9, 0.0));
        assert!(matches!(
            DistinguishabilityMatrix::new(bad),
            Err(Error::Validation(_))
        ));
        // non-Hermitian
        let mut bad = ComplexMatrix::identity(2);
        bad.set(0, 1, c(0.5, 0.0));
        bad.set(1, 0, c(0.4, 0.0));
        assert!(DistinguishabilityMatrix::new(bad).is_err());
        // entry above modulus 1
        let mut bad = ComplexMatrix::identity(2);
        bad.set(0, 1, c(1.5, 0.0));
        bad.set(1, 0, c(1.5, 0.0));
        assert!(DistinguishabilityMatrix::new(bad).is_err());
        // unit diagonal and Hermitian but indefinite
        let mut bad = ComplexMatrix::identity(3);
        for (j, k, v) in [(0, 1, 1.0), (0, 2, -1.0), (1, 2, 1.0)] {
            bad.set(j, k, c(v, 0.0));
            bad.set(k, j, c(v, 0.0));
        }
        assert!(matches!(
            DistinguishabilityMatrix::new(bad),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn canonical_family_examples() {
        let (s, _) = canonical_family(3, 0.0).unwrap();
        assert!(s.is_identity());
        let (s, _) = canonical_family(3, 1.0).unwrap();
        assert_eq!(s.matrix(), &ComplexMatrix::ones(3));
        let (s, states) = canonical_family(3, 0.5).unwrap();
        assert_abs_diff_eq!(s.permanent_value().unwrap(), 2.0, epsilon = 1e-12);
        let from_states = gram_matrix(&states).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                assert!((from_states.get(j, k) - s.get(j, k)).norm() < 1e-12);
            }
        }
        assert!(canonical_family(3, 1.2).is_err());
    }

    #[test]
    fn fourier_example_matrix() {
        let s = fourier_example_s(1.0).unwrap();
        assert_eq!(s.matrix(), &ComplexMatrix::ones(4));
        let s = fourier_example_s(0.0).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(s.get(j, k), Complex64::ONE);
            }
            assert_eq!(s.get(j, 3), Complex64::ZERO);
        }
        // PSD across the range is enforced by the constructor
        for k in 0..=10 {
            assert!(fourier_example_s(k as f64 / 10.0).is_ok());
        }
    }

    #[test]
    fn random_states_properties() {
        let states = random_states(3, 1, 5).unwrap();
        let s = gram_matrix(&states).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                assert_abs_diff_eq!(s.get(j, k).norm(), 1.0, epsilon = 1e-12);
            }
        }
        let a = random_states(4, 3, 9).unwrap();
        let b = random_states(4, 3, 9).unwrap();
        assert_eq!(a.vectors(), b.vectors());

        // E |<a,b>|^2 = 1/D on the sphere; 3 standard errors at 10^4 draws
        let dim = 4;
        let draws = 10_000;
        let mut rng = stream_rng(314, 7);
        let mut acc = 0.0;
        for _ in 0..draws {
            let pair = random_states_from_rng(2, dim, &mut rng).unwrap();
            acc += inner(pair.vector(0), pair.vector(1)).norm_sqr();
        }
        let mean = acc / draws as f64;
        let d = dim as f64;
        let se = ((d - 1.0) / (d * d * (d + 1.0)) / draws as f64).sqrt();
        assert!((mean - 1.0 / d).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn gram_schmidt_orthonormal_inputs_give_identity() {
        let ortho = InternalStateSet::new(
            3,
            (0..3)
                .map(|i| {
                    let mut v = vec![Complex64::ZERO; 3];
                    v[i] = Complex64::ONE;
                    v
                })
                .collect(),
        )
        .unwrap();
        let dec = gram_schmidt(&ortho, &Permutation::identity(3), GramSchmidtMode::Strict).unwrap();
        assert_eq!(dec.rank(), 3);
        for j in 0..3 {
            for k in 0..3 {
                let expect = if j == k { Complex64::ONE } else { Complex64::ZERO };
                assert!((dec.coefficient(j, k) - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn gram_schmidt_labeling_dependence() {
        let states = ambiguous_triple();
        let h = 1.0 / 2f64.sqrt();

        let dec = gram_schmidt(&states, &Permutation::identity(3), GramSchmidtMode::Permissive)
            .unwrap();
        assert_eq!(dec.rank(), 2);
        // basis {|0>, |1>}
        assert!((dec.basis()[0][0] - Complex64::ONE).norm() < 1e-14);
        assert!((dec.basis()[1][1] - Complex64::ONE).norm() < 1e-14);
        assert_abs_diff_eq!(w_id(&dec), 0.25, epsilon = 1e-12);

        let swapped = Permutation::from_images(vec![1, 0, 2]).unwrap();
        let dec = gram_schmidt(&states, &swapped, GramSchmidtMode::Permissive).unwrap();
        assert_eq!(dec.rank(), 2);
        // basis {(|0>+|1>)/sqrt2, (|0>-|1>)/sqrt2}
        assert_abs_diff_eq!(dec.basis()[0][0].re, h, epsilon = 1e-14);
        assert_abs_diff_eq!(dec.basis()[0][1].re, h, epsilon = 1e-14);
        assert_abs_diff_eq!(dec.basis()[1][0].re, h, epsilon = 1e-14);
        assert_abs_diff_eq!(dec.basis()[1][1].re, -h, epsilon = 1e-14);
        assert_abs_diff_eq!(w_id(&dec), 0.0, epsilon = 1e-15);

        // strict mode refuses the rank-deficient set
        assert!(matches!(
            gram_schmidt(&states, &Permutation::identity(3), GramSchmidtMode::Strict),
            Err(Error::Degeneracy(_))
        ));
    }

    #[test]
    fn gram_schmidt_reconstructs_random_sets() {
        for rep in 0..100 {
            let n = 2 + rep % 4;
            let dim = 1 + (rep % 6);
            let states = random_states(n, dim, 7000 + rep as u64).unwrap();
            let dec =
                gram_schmidt(&states, &Permutation::identity(n), GramSchmidtMode::Permissive)
                    .unwrap();
            assert!(dec.rank() <= dim.min(n));
            for j in 0..n {
                let rec = dec.reconstruct(j);
                let orig = states.vector(j);
                let err: f64 = rec
                    .iter()
                    .zip(orig)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(err < 1e-10, "rep={rep} j={j}: {err}");
            }
        }
    }

    #[test]
    fn w_id_identical_states_is_one() {
        let same =
            InternalStateSet::new(2, vec![qubit(Complex64::ONE, Complex64::ZERO); 4]).unwrap();
        let dec =
            gram_schmidt(&same, &Permutation::identity(4), GramSchmidtMode::Permissive).unwrap();
        assert_abs_diff_eq!(w_id(&dec), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn j_function_degenerate_and_diagonal() {
        let states = random_states(3, 3, 60).unwrap();
        let s = gram_matrix(&states).unwrap();
        let ens = MixedEnsemble::new(vec![(1.0, states)]).unwrap();
        let perms = Permutation::all(3);
        for sigma in &perms {
            for rho in &perms {
                let j = j_function(&ens, sigma, rho).unwrap();
                let mut expect = Complex64::ONE;
                for l in 0..3 {
                    expect *= s.get(rho.image(l), sigma.image(l));
                }
                assert!((j - expect).norm() < 1e-13);
                if sigma == rho {
                    assert!((j - Complex64::ONE).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn j_function_cycle_path_matches_direct_sum() {
        // product of per-particle mixtures with complex states
        let mut rng = stream_rng(61, 0);
        for _ in 0..10 {
            let n = 3;
            let dim = 2;
            let factors: Vec<SingleParticleMixture> = (0..n)
                .map(|_| {
                    let states = random_states_from_rng(2, dim, &mut rng).unwrap();
                    let p: f64 = 0.2 + 0.6 * rng.random::<f64>();
                    SingleParticleMixture::new(
                        dim,
                        vec![
                            (p, states.vector(0).to_vec()),
                            (1.0 - p, states.vector(1).to_vec()),
                        ],
                    )
                    .unwrap()
                })
                .collect();
            let ens = MixedEnsemble::from_product(factors).unwrap();
            assert!(ens.is_product());
            assert_eq!(ens.realizations().len(), 8);
            let perms = Permutation::all(n);
            for sigma in &perms {
                for rho in &perms {
                    let fast = j_function(&ens, sigma, rho).unwrap();
                    let direct = j_function_direct(&ens, sigma, rho).unwrap();
                    assert!(
                        (fast - direct).norm() < 1e-12,
                        "sigma={sigma:?} rho={rho:?}: {fast} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn j_function_constraints_hold() {
        // J(sigma, rho) = J(sigma rho^{-1}, 1) and J(sigma, 1) = conj(J(sigma^{-1}, 1))
        let mut rng = stream_rng(62, 0);
        for rep in 0..50 {
            let n = 2 + rep % 3;
            let reals: Vec<(f64, InternalStateSet)> = {
                let w: f64 = 0.3 + 0.4 * rng.random::<f64>();
                vec![
                    (w, random_states_from_rng(n, n, &mut rng).unwrap()),
                    (1.0 - w, random_states_from_rng(n, n, &mut rng).unwrap()),
                ]
            };
            let ens = MixedEnsemble::new(reals).unwrap();
            let id = Permutation::identity(n);
            let perms = Permutation::all(n);
            for sigma in &perms {
                let j1 = j_function(&ens, sigma, &id).unwrap();
                let j2 = j_function(&ens, &sigma.inverse(), &id).unwrap();
                assert!((j1 - j2.conj()).norm() < 1e-12);
                for rho in &perms {
                    let lhs = j_function(&ens, sigma, rho).unwrap();
                    let tau = sigma.compose(&rho.inverse());
                    let rhs = j_function(&ens, &tau, &id).unwrap();
                    assert!((lhs - rhs).norm() < 1e-12, "rep={rep}");
                }
            }
        }
    }

    #[test]
    fn bosonic_classical_mix_structure() {
        let ens = MixedEnsemble::bosonic_classical_mix(3, 0.25).unwrap();
        assert_eq!(ens.realizations().len(), 2);
        assert_eq!(ens.structure_tag(), "correlated");
        assert!(ens.gram(0).matrix() == &ComplexMatrix::ones(3));
        assert!(ens.gram(1).is_identity());
    }

    #[test]
    fn replicate_for_repeats_states() {
        let input = ModeOccupation::new(vec![2, 0, 1]).unwrap();
        let a = qubit(Complex64::ONE, Complex64::ZERO);
        let b = qubit(Complex64::ZERO, Complex64::ONE);
        let set = InternalStateSet::replicate_for(&input, vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(set.n(), 3);
        assert_eq!(set.vector(0), &a[..]);
        assert_eq!(set.vector(1), &a[..]);
        assert_eq!(set.vector(2), &b[..]);
        let s = gram_matrix(&set).unwrap();
        assert_eq!(s.get(0, 1), Complex64::ONE);
    }
}
