//! Permanent-type sums.
//!
//! Three layers live here:
//!
//! * the matrix permanent, evaluated by Ryser inclusion-exclusion over row
//!   subsets in Gray-code order (one row update between consecutive subsets),
//! * the event probability for partially distinguishable particles, which is
//!   a permanent of the 3-tensor `W[k][l][j] = M[k][j] conj(M[l][j]) S[l][k]`
//!   summed over two independent permutations, evaluated either by brute
//!   force over permutation pairs or by a generalized Ryser sum over ordered
//!   subset pairs,
//! * slow factorial-time oracles kept around for cross-checking.
//!
//! Subsets are encoded as bitmask integers; "S >= R" in the halved subset-pair
//! sum means integer comparison of the masks.

use itertools::Itertools;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::distinguishability::DistinguishabilityMatrix;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

/// Hard cap for the `2^n` subset loop of [`permanent`].
pub const MAX_PERMANENT_DIM: usize = 30;
/// Hard cap for the `n!` loop of [`permanent_naive`].
pub const MAX_NAIVE_DIM: usize = 9;
/// Hard cap for the `n!^2` loop of [`tensor_probability_bruteforce`].
pub const MAX_TENSOR_BRUTEFORCE_DIM: usize = 7;
/// Hard cap for the `2^(2n)` loop of [`tensor_probability_ryser`].
pub const MAX_TENSOR_RYSER_DIM: usize = 14;

/// Absolute tolerance on the imaginary residue of quantities that must be real.
pub const IMAG_TOL: f64 = 1e-10;
/// Small negative probabilities within this tolerance are clamped to zero.
pub const NEG_TOL: f64 = 1e-10;

/// A permutation of `{0, .., n-1}`, stored as its image list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self { images: (0..n).collect() }
    }

    /// Validates that `images` is a bijection on `{0, .., n-1}`.
    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n || seen[i] {
                return Err(Error::Validation(format!(
                    "not a permutation of 0..{n}: {images:?}"
                )));
            }
            seen[i] = true;
        }
        Ok(Self { images })
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    #[inline]
    pub fn image(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.images.len()];
        for (i, &v) in self.images.iter().enumerate() {
            inv[v] = i;
        }
        Self { images: inv }
    }

    /// Right-to-left composition: `(self.compose(other))(x) = self(other(x))`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.n(), other.n());
        Self { images: other.images.iter().map(|&x| self.images[x]).collect() }
    }

    /// All `n!` permutations in lexicographic order, identity first.
    pub fn all(n: usize) -> Vec<Permutation> {
        (0..n)
            .permutations(n)
            .map(|images| Permutation { images })
            .collect()
    }
}

/// The 3-tensor `W[k][l][j] = M[k][j] conj(M[l][j]) S[l][k]` whose permanent
/// (double permutation sum) is the event probability.
#[derive(Debug, Clone)]
pub struct WTensor {
    n: usize,
    entries: Vec<Complex64>,
}

impl WTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize, j: usize) -> Complex64 {
        self.entries[(k * self.n + l) * self.n + j]
    }
}

/// Builds the tensor `W[k][l][j] = M[k][j] conj(M[l][j]) S[l][k]`.
///
/// Since the stored `S` is exactly Hermitian, the conjugate symmetry
/// `W[k][l][j] = conj(W[l][k][j])` holds bit-exactly.
pub fn build_w_tensor(m: &ComplexMatrix, s: &DistinguishabilityMatrix) -> Result<WTensor> {
    let n = square_dim(m)?;
    if s.n() != n {
        return Err(Error::Dimension(format!(
            "distinguishability matrix is {}x{} but scattering matrix is {}x{}",
            s.n(),
            s.n(),
            n,
            n
        )));
    }
    let mut entries = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for l in 0..n {
            let slk = s.get(l, k);
            for j in 0..n {
                entries.push(m.get(k, j) * m.get(l, j).conj() * slk);
            }
        }
    }
    Ok(WTensor { n, entries })
}

fn square_dim(m: &ComplexMatrix) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() == 0 {
        return Err(Error::Dimension("matrix must have dimension >= 1".into()));
    }
    Ok(m.rows())
}

/// Matrix permanent `sum_sigma prod_j M[sigma_j][j]` in `O(2^n n)`.
///
/// Ryser inclusion-exclusion over row subsets; the subsets are visited in
/// binary-reflected Gray-code order so each step updates the per-column row
/// sums by a single row.
pub fn permanent(m: &ComplexMatrix) -> Result<Complex64> {
    let n = square_dim(m)?;
    if n > MAX_PERMANENT_DIM {
        return Err(Error::Capacity(format!(
            "permanent needs a 2^n subset loop; n = {n} exceeds the cap of {MAX_PERMANENT_DIM}"
        )));
    }
    let mut sums = vec![Complex64::ZERO; n];
    let mut total = Complex64::ZERO;
    for k in 1u64..(1u64 << n) {
        let gray = k ^ (k >> 1);
        let bit = k.trailing_zeros() as usize;
        let row = m.row(bit);
        if gray & (1 << bit) != 0 {
            for (sum, &a) in sums.iter_mut().zip(row) {
                *sum += a;
            }
        } else {
            for (sum, &a) in sums.iter_mut().zip(row) {
                *sum -= a;
            }
        }
        let prod: Complex64 = sums.iter().product();
        // overall sign (-1)^(n - |subset|)
        if (n as u32 - gray.count_ones()) % 2 == 1 {
            total -= prod;
        } else {
            total += prod;
        }
    }
    Ok(total)
}

/// `O(n! n)` permanent by direct summation over all permutations. Oracle only.
pub fn permanent_naive(m: &ComplexMatrix) -> Result<Complex64> {
    let n = square_dim(m)?;
    if n > MAX_NAIVE_DIM {
        return Err(Error::Capacity(format!(
            "naive permanent sums n! terms; n = {n} exceeds the cap of {MAX_NAIVE_DIM}"
        )));
    }
    let mut total = Complex64::ZERO;
    for sigma in (0..n).permutations(n) {
        let mut prod = Complex64::ONE;
        for (j, &sj) in sigma.iter().enumerate() {
            prod *= m.get(sj, j);
        }
        total += prod;
    }
    Ok(total)
}

/// Permanent of the matrix with entries `M[j][k] conj(M[sigma(j)][k])`.
///
/// For `sigma` = identity this is the permanent of the entrywise `|M|^2`,
/// which is real, nonnegative, and maximal in magnitude among all `sigma`.
pub fn permuted_hadamard_permanent(m: &ComplexMatrix, sigma: &Permutation) -> Result<Complex64> {
    let n = square_dim(m)?;
    if sigma.n() != n {
        return Err(Error::Dimension(format!(
            "permutation acts on {} elements but matrix is {}x{}",
            sigma.n(),
            n,
            n
        )));
    }
    let a = ComplexMatrix::from_fn(n, n, |j, k| m.get(j, k) * m.get(sigma.image(j), k).conj());
    permanent(&a)
}

fn check_tensor_dims(m: &ComplexMatrix, s: &DistinguishabilityMatrix) -> Result<usize> {
    let n = square_dim(m)?;
    if s.n() != n {
        return Err(Error::Dimension(format!(
            "distinguishability matrix is {}x{}, scattering matrix is {}x{}",
            s.n(),
            s.n(),
            n,
            n
        )));
    }
    Ok(n)
}

/// Extracts the real probability from a sum that is real up to roundoff.
fn realize_probability(total: Complex64, context: &str) -> Result<f64> {
    if total.im.abs() > IMAG_TOL {
        return Err(Error::NumericalConsistency(format!(
            "{context}: imaginary residue {:.3e} exceeds {IMAG_TOL:.0e}",
            total.im
        )));
    }
    Ok(clamp_small_negative(total.re))
}

fn clamp_small_negative(value: f64) -> f64 {
    if value < 0.0 && value >= -NEG_TOL {
        0.0
    } else {
        value
    }
}

/// Event probability `sum_{sigma,rho} prod_j M[sigma_j][j] conj(M[rho_j][j]) S[rho_j][sigma_j]`
/// by direct summation over all `n!^2` permutation pairs. Oracle only.
pub fn tensor_probability_bruteforce(
    m: &ComplexMatrix,
    s: &DistinguishabilityMatrix,
) -> Result<f64> {
    let n = check_tensor_dims(m, s)?;
    if n > MAX_TENSOR_BRUTEFORCE_DIM {
        return Err(Error::Capacity(format!(
            "brute-force tensor probability sums n!^2 terms; n = {n} exceeds the cap of {MAX_TENSOR_BRUTEFORCE_DIM}"
        )));
    }
    let w = build_w_tensor(m, s)?;
    let perms = Permutation::all(n);
    let mut total = Complex64::ZERO;
    for sigma in &perms {
        for rho in &perms {
            let mut prod = Complex64::ONE;
            for j in 0..n {
                prod *= w.get(sigma.image(j), rho.image(j), j);
            }
            total += prod;
        }
    }
    realize_probability(total, "tensor probability (brute force)")
}

/// Contribution of one fixed backward subset `R` (bitmask `r_mask`) to the
/// halved generalized Ryser sum: all forward subsets `S >= R` with weight
/// `(2 - delta_{S,R}) (-1)^(|S|+|R|) Re{prod_j sum_{r in R, s in S} ...}`.
///
/// The forward subsets are visited in Gray-code order with incremental
/// single-element updates of the per-column inner sums.
fn ryser_partial_for_backward_subset(
    m: &ComplexMatrix,
    s: &DistinguishabilityMatrix,
    n: usize,
    r_mask: u32,
) -> f64 {
    // g[j][t] = sum_{r in R} conj(M[r][j]) S[r][t]
    let mut g = vec![Complex64::ZERO; n * n];
    let mut rest = r_mask;
    while rest != 0 {
        let r = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        for j in 0..n {
            let mc = m.get(r, j).conj();
            for (t, slot) in g[j * n..(j + 1) * n].iter_mut().enumerate() {
                *slot += mc * s.get(r, t);
            }
        }
    }
    let r_pop = r_mask.count_ones();
    let mut sums = vec![Complex64::ZERO; n];
    let mut acc = 0.0f64;
    for k in 1u32..(1u32 << n) {
        let gray = k ^ (k >> 1);
        let bit = k.trailing_zeros() as usize;
        if gray & (1 << bit) != 0 {
            for (j, sum) in sums.iter_mut().enumerate() {
                *sum += m.get(bit, j) * g[j * n + bit];
            }
        } else {
            for (j, sum) in sums.iter_mut().enumerate() {
                *sum -= m.get(bit, j) * g[j * n + bit];
            }
        }
        if gray >= r_mask {
            let prod: Complex64 = sums.iter().product();
            let double = if gray == r_mask { 1.0 } else { 2.0 };
            let term = double * prod.re;
            if (gray.count_ones() + r_pop) % 2 == 1 {
                acc -= term;
            } else {
                acc += term;
            }
        }
    }
    acc
}

/// Deterministic pairwise tree sum; the reduction order is fixed by the slice
/// order, so results are bit-stable however the partials were produced.
fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        len => {
            let mid = len / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

fn ryser_guard(n: usize) -> Result<()> {
    if n > MAX_TENSOR_RYSER_DIM {
        return Err(Error::Capacity(format!(
            "generalized Ryser sums 2^(2n) terms; n = {n} exceeds the cap of {MAX_TENSOR_RYSER_DIM}"
        )));
    }
    Ok(())
}

/// Event probability via generalized Ryser inclusion-exclusion in `O(4^n n)`.
///
/// Uses the halved form over ordered subset pairs `S >= R` (bitmask-integer
/// order), exploiting `W[k][l][j] = conj(W[l][k][j])`; the result is real by
/// construction. Small negative roundoff is clamped to zero.
pub fn tensor_probability_ryser(m: &ComplexMatrix, s: &DistinguishabilityMatrix) -> Result<f64> {
    let n = check_tensor_dims(m, s)?;
    ryser_guard(n)?;
    let partials: Vec<f64> = (0..(1u32 << n))
        .map(|r_mask| ryser_partial_for_backward_subset(m, s, n, r_mask))
        .collect();
    Ok(clamp_small_negative(pairwise_sum(&partials)))
}

/// Multi-worker variant of [`tensor_probability_ryser`].
///
/// The backward-subset loop is partitioned across the current rayon pool; each
/// partial is produced by exactly one worker and the reduction is the same
/// pairwise tree sum as the sequential path, so the result is bit-identical to
/// the sequential one for any worker count.
pub fn tensor_probability_ryser_par(
    m: &ComplexMatrix,
    s: &DistinguishabilityMatrix,
) -> Result<f64> {
    let n = check_tensor_dims(m, s)?;
    ryser_guard(n)?;
    let partials: Vec<f64> = (0..(1u32 << n))
        .into_par_iter()
        .map(|r_mask| ryser_partial_for_backward_subset(m, s, n, r_mask))
        .collect();
    Ok(clamp_small_negative(pairwise_sum(&partials)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distinguishability::{gram_matrix, random_states};
    use crate::matrix::ComplexMatrix;
    use crate::rng::{complex_gaussian, stream_rng};
    use crate::scattering::haar_random_unitary;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = stream_rng(seed, 0);
        ComplexMatrix::from_fn(n, n, |_, _| complex_gaussian(&mut rng))
    }

    fn hom_beam_splitter() -> ComplexMatrix {
        let h = 1.0 / 2f64.sqrt();
        ComplexMatrix::new(2, 2, vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]).unwrap()
    }

    #[test]
    fn permanent_identity_and_ones() {
        assert_abs_diff_eq!(
            permanent(&ComplexMatrix::identity(3)).unwrap().re,
            1.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            permanent(&ComplexMatrix::ones(4)).unwrap().re,
            24.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn permanent_naive_small_cases() {
        assert_abs_diff_eq!(
            permanent_naive(&ComplexMatrix::identity(2)).unwrap().re,
            1.0,
            epsilon = 1e-15
        );
        let anti = ComplexMatrix::new(
            2,
            2,
            vec![Complex64::ZERO, Complex64::ONE, Complex64::ONE, Complex64::ZERO],
        )
        .unwrap();
        assert_abs_diff_eq!(permanent_naive(&anti).unwrap().re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            permanent_naive(&ComplexMatrix::ones(3)).unwrap().re,
            6.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn permanent_matches_naive_on_random_matrices() {
        // 100 random complex matrices per dimension
        for n in 1..=7 {
            for rep in 0..100 {
                let m = random_matrix(n, 1000 * n as u64 + rep);
                let fast = permanent(&m).unwrap();
                let slow = permanent_naive(&m).unwrap();
                let tol = 1e-10 * (1.0 + slow.norm());
                assert!(
                    (fast - slow).norm() <= tol,
                    "n={n} rep={rep}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn permanent_guards() {
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(permanent(&rect), Err(Error::Dimension(_))));
        let big = ComplexMatrix::identity(31);
        assert!(matches!(permanent(&big), Err(Error::Capacity(_))));
        let big_naive = ComplexMatrix::identity(10);
        assert!(matches!(permanent_naive(&big_naive), Err(Error::Capacity(_))));
    }

    #[test]
    fn w_tensor_structure() {
        // S = identity kills all k != l entries
        let m = random_matrix(3, 5);
        let s_id = DistinguishabilityMatrix::identity(3);
        let w = build_w_tensor(&m, &s_id).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                for j in 0..3 {
                    if k != l {
                        assert_eq!(w.get(k, l, j), Complex64::ZERO);
                    }
                }
            }
        }
        // S = all-ones with M = identity leaves only the k = l = j entries
        let s_ones = DistinguishabilityMatrix::all_ones(3);
        let w = build_w_tensor(&ComplexMatrix::identity(3), &s_ones).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                for j in 0..3 {
                    let expect = if k == j && l == j { Complex64::ONE } else { Complex64::ZERO };
                    assert_eq!(w.get(k, l, j), expect);
                }
            }
        }
    }

    #[test]
    fn w_tensor_hom_entry_and_exact_conjugate_symmetry() {
        let x = 0.37;
        let s = DistinguishabilityMatrix::new(ComplexMatrix::new(
            2,
            2,
            vec![Complex64::ONE, c(x, 0.0), c(x, 0.0), Complex64::ONE],
        )
        .unwrap())
        .unwrap();
        let w = build_w_tensor(&hom_beam_splitter(), &s).unwrap();
        assert_abs_diff_eq!(w.get(0, 1, 0).re, 0.5 * x, epsilon = 1e-15);

        let m = random_matrix(4, 9);
        let states = random_states(4, 3, 11).unwrap();
        let s = gram_matrix(&states).unwrap();
        let w = build_w_tensor(&m, &s).unwrap();
        for k in 0..4 {
            for l in 0..4 {
                for j in 0..4 {
                    assert_eq!(w.get(k, l, j), w.get(l, k, j).conj(), "exact symmetry");
                }
            }
        }
    }

    #[test]
    fn tensor_bruteforce_limits() {
        let m = random_matrix(4, 21);
        let ones = DistinguishabilityMatrix::all_ones(4);
        let id = DistinguishabilityMatrix::identity(4);
        let p_ones = tensor_probability_bruteforce(&m, &ones).unwrap();
        let p_id = tensor_probability_bruteforce(&m, &id).unwrap();
        assert_abs_diff_eq!(p_ones, permanent(&m).unwrap().norm_sqr(), epsilon = 1e-9);
        assert_abs_diff_eq!(
            p_id,
            permanent(&m.abs_squared()).unwrap().re,
            epsilon = 1e-9
        );
    }

    #[test]
    fn tensor_bruteforce_hom_curve() {
        let m = hom_beam_splitter();
        for k in 0..=10 {
            let x = k as f64 / 10.0;
            let s = DistinguishabilityMatrix::new(ComplexMatrix::new(
                2,
                2,
                vec![Complex64::ONE, c(x, 0.0), c(x, 0.0), Complex64::ONE],
            )
            .unwrap())
            .unwrap();
            let p = tensor_probability_bruteforce(&m, &s).unwrap();
            assert_abs_diff_eq!(p, (1.0 - x * x) / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ryser_matches_bruteforce_on_random_instances() {
        // 50 random (M, S) pairs per particle number
        for n in 2..=6 {
            for rep in 0..50 {
                let seed = 40_000 + 100 * n as u64 + rep;
                let m = haar_random_unitary(n, seed).unwrap();
                let states = random_states(n, n, seed + 1).unwrap();
                let s = gram_matrix(&states).unwrap();
                let brute = tensor_probability_bruteforce(&m, &s).unwrap();
                let ryser = tensor_probability_ryser(&m, &s).unwrap();
                assert!(
                    (ryser - brute).abs() <= 1e-9 * (1.0 + brute.abs()),
                    "n={n} rep={rep}: ryser {ryser} vs brute {brute}"
                );
            }
        }
    }

    #[test]
    fn ryser_all_ones_is_squared_permanent() {
        for n in 2..=6 {
            let m = haar_random_unitary(n, 77 + n as u64).unwrap();
            let s = DistinguishabilityMatrix::all_ones(n);
            let p = tensor_probability_ryser(&m, &s).unwrap();
            assert_abs_diff_eq!(p, permanent(&m).unwrap().norm_sqr(), epsilon = 1e-10);
        }
    }

    #[test]
    fn ryser_parallel_is_bit_identical() {
        let m = haar_random_unitary(8, 4242).unwrap();
        let states = random_states(8, 4, 4243).unwrap();
        let s = gram_matrix(&states).unwrap();
        let seq = tensor_probability_ryser(&m, &s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let par = pool.install(|| tensor_probability_ryser_par(&m, &s).unwrap());
        assert_eq!(seq.to_bits(), par.to_bits());
    }

    #[test]
    fn ryser_capacity_guard() {
        let m = ComplexMatrix::identity(15);
        let s = DistinguishabilityMatrix::identity(15);
        assert!(matches!(
            tensor_probability_ryser(&m, &s),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn permuted_hadamard_identity_is_classical() {
        let m = haar_random_unitary(4, 31).unwrap();
        let id = Permutation::identity(4);
        let p = permuted_hadamard_permanent(&m, &id).unwrap();
        assert!(p.im.abs() < 1e-12);
        assert!(p.re >= 0.0);
        assert_abs_diff_eq!(p.re, permanent(&m.abs_squared()).unwrap().re, epsilon = 1e-12);
    }

    #[test]
    fn permuted_hadamard_bounded_by_identity_term() {
        // 200 random (M, sigma) samples
        let mut rng = stream_rng(99, 0);
        for rep in 0..200 {
            let n = 2 + (rep % 4);
            let m = haar_random_unitary(n, 500 + rep as u64).unwrap();
            let mut images: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            images.shuffle(&mut rng);
            let sigma = Permutation::from_images(images).unwrap();
            let classical = permuted_hadamard_permanent(&m, &Permutation::identity(n))
                .unwrap()
                .re;
            let term = permuted_hadamard_permanent(&m, &sigma).unwrap();
            assert!(
                term.norm() <= classical + 1e-12,
                "rep={rep}: |{term}| > {classical}"
            );
        }
    }

    #[test]
    fn permutation_basics() {
        let p = Permutation::from_images(vec![2, 0, 1]).unwrap();
        assert_eq!(p.inverse().images(), &[1, 2, 0]);
        let q = Permutation::from_images(vec![1, 0, 2]).unwrap();
        assert_eq!(p.compose(&q).images(), &[0, 2, 1]);
        assert!(Permutation::from_images(vec![0, 0, 1]).is_err());
        assert!(Permutation::all(3)[0].is_identity());
    }
}
