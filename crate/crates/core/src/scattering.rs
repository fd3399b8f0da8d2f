//! Mode combinatorics and network unitaries.
//!
//! Events are described by per-mode occupation lists; the per-particle view is
//! the sorted mode assignment list. The effective scattering matrix of an
//! (input, output) pair is the submatrix of the network unitary on the
//! occupied rows and columns, with rows and columns repeated according to the
//! occupations. Mode indices are 0-based throughout.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::rng::{complex_gaussian, stream_rng};

/// Size guard for [`enumerate_events`].
pub const MAX_EVENT_COUNT: u128 = 10_000_000;
/// Entrywise tolerance for the `U^dagger U = 1` check.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Per-mode particle counts `(r_1, .., r_m)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModeOccupation {
    occupations: Vec<usize>,
}

impl ModeOccupation {
    pub fn new(occupations: Vec<usize>) -> Result<Self> {
        if occupations.is_empty() {
            return Err(Error::Validation("occupation list must be non-empty".into()));
        }
        Ok(Self { occupations })
    }

    /// Number of modes.
    pub fn modes(&self) -> usize {
        self.occupations.len()
    }

    /// Total particle number.
    pub fn particles(&self) -> usize {
        self.occupations.iter().sum()
    }

    pub fn counts(&self) -> &[usize] {
        &self.occupations
    }

    pub fn is_collision_free(&self) -> bool {
        self.occupations.iter().all(|&c| c <= 1)
    }

    /// Product of the per-mode factorials.
    pub fn factorial_product(&self) -> f64 {
        self.occupations.iter().map(|&c| factorial(c)).product()
    }
}

impl std::fmt::Display for ModeOccupation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.occupations.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Sorted per-particle mode indices; entry `j` is the mode of the `j`-th
/// particle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeAssignment {
    modes: Vec<usize>,
}

impl ModeAssignment {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    #[inline]
    pub fn mode_of(&self, particle: usize) -> usize {
        self.modes[particle]
    }
}

/// Expands an occupation list into the sorted per-particle mode list, e.g.
/// `(2,0,1) -> (0,0,2)`.
pub fn mode_assignment(occupation: &ModeOccupation) -> ModeAssignment {
    let mut modes = Vec::with_capacity(occupation.particles());
    for (mode, &count) in occupation.counts().iter().enumerate() {
        modes.extend(std::iter::repeat(mode).take(count));
    }
    ModeAssignment { modes }
}

/// Inverse of [`mode_assignment`].
pub fn occupation_from_assignment(modes: usize, assignment: &ModeAssignment) -> Result<ModeOccupation> {
    let mut counts = vec![0usize; modes];
    for &m in assignment.modes() {
        if m >= modes {
            return Err(Error::Validation(format!(
                "assignment references mode {m} but only {modes} modes exist"
            )));
        }
        counts[m] += 1;
    }
    ModeOccupation::new(counts)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `1 / (prod_j r_j! prod_j s_j!)`, the multiplicity normalization of event
/// probabilities for multiply occupied input and output modes.
pub fn normalization_factor(input: &ModeOccupation, output: &ModeOccupation) -> f64 {
    1.0 / (input.factorial_product() * output.factorial_product())
}

/// The effective scattering matrix `M[j][k] = U[d(r)_j][d(s)_k]`: the
/// submatrix of `U` on occupied input rows and output columns, with
/// multiplicity given by the occupations.
pub fn effective_matrix(
    unitary: &ComplexMatrix,
    input: &ModeOccupation,
    output: &ModeOccupation,
) -> Result<ComplexMatrix> {
    if !unitary.is_square() || unitary.rows() != input.modes() || unitary.rows() != output.modes() {
        return Err(Error::Dimension(format!(
            "unitary is {}x{}, input has {} modes, output has {} modes",
            unitary.rows(),
            unitary.cols(),
            input.modes(),
            output.modes()
        )));
    }
    let n = input.particles();
    if n != output.particles() {
        return Err(Error::Validation(format!(
            "particle number mismatch: input {} vs output {}",
            n,
            output.particles()
        )));
    }
    if n == 0 {
        return Err(Error::Validation("no particles".into()));
    }
    let rows = mode_assignment(input);
    let cols = mode_assignment(output);
    Ok(ComplexMatrix::from_fn(n, n, |j, k| {
        unitary.get(rows.mode_of(j), cols.mode_of(k))
    }))
}

/// The `m x m` Fourier matrix `U[j][k] = exp(i 2 pi (j+1)(k+1) / m) / sqrt(m)`
/// (indices effectively 1-based; downstream probabilities are invariant under
/// the 0-based variant, which differs only by row and column phases).
pub fn fourier_unitary(m: usize) -> Result<ComplexMatrix> {
    if m == 0 {
        return Err(Error::Validation("Fourier dimension must be >= 1".into()));
    }
    let norm = 1.0 / (m as f64).sqrt();
    Ok(ComplexMatrix::from_fn(m, m, |j, k| {
        let phase = 2.0 * std::f64::consts::PI * ((j + 1) * (k + 1)) as f64 / m as f64;
        Complex64::from_polar(norm, phase)
    }))
}

/// 0-based-index variant of [`fourier_unitary`], kept for the phase-invariance
/// cross-check.
pub fn fourier_unitary_zero_based(m: usize) -> Result<ComplexMatrix> {
    if m == 0 {
        return Err(Error::Validation("Fourier dimension must be >= 1".into()));
    }
    let norm = 1.0 / (m as f64).sqrt();
    Ok(ComplexMatrix::from_fn(m, m, |j, k| {
        let phase = 2.0 * std::f64::consts::PI * (j * k) as f64 / m as f64;
        Complex64::from_polar(norm, phase)
    }))
}

/// Haar-distributed `m x m` unitary from the given RNG: a complex Ginibre
/// matrix is QR-factored and each column of `Q` is rescaled by the phase of
/// the corresponding diagonal entry of `R`, which removes the non-uniformity
/// of the raw QR factorization.
pub fn haar_unitary_from_rng(m: usize, rng: &mut impl Rng) -> Result<ComplexMatrix> {
    if m == 0 {
        return Err(Error::Validation("unitary dimension must be >= 1".into()));
    }
    let ginibre = nalgebra::DMatrix::from_fn(m, m, |_, _| complex_gaussian(rng));
    let qr = ginibre.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::ONE };
        for i in 0..m {
            q[(i, j)] *= phase;
        }
    }
    Ok(ComplexMatrix::from_nalgebra(&q))
}

/// Haar-random unitary, deterministic per seed.
pub fn haar_random_unitary(m: usize, seed: u64) -> Result<ComplexMatrix> {
    haar_unitary_from_rng(m, &mut stream_rng(seed, 0))
}

/// How a network unitary is specified.
#[derive(Debug, Clone)]
pub enum UnitarySpec {
    Haar { m: usize, seed: u64 },
    Fourier { m: usize },
    Explicit(ComplexMatrix),
}

impl UnitarySpec {
    pub fn modes(&self) -> usize {
        match self {
            UnitarySpec::Haar { m, .. } | UnitarySpec::Fourier { m } => *m,
            UnitarySpec::Explicit(u) => u.rows(),
        }
    }

    /// Produces the matrix, checking unitarity to [`UNITARITY_TOL`].
    pub fn realize(&self) -> Result<ComplexMatrix> {
        let u = match self {
            UnitarySpec::Haar { m, seed } => haar_random_unitary(*m, *seed)?,
            UnitarySpec::Fourier { m } => fourier_unitary(*m)?,
            UnitarySpec::Explicit(u) => u.clone(),
        };
        let defect = u.unitarity_defect();
        if defect > UNITARITY_TOL {
            return Err(Error::Validation(format!(
                "matrix is not unitary: defect {defect:.3e} exceeds {UNITARITY_TOL:.0e}"
            )));
        }
        Ok(u)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of events `enumerate_events` would return.
pub fn event_count(modes: usize, particles: usize, collision_free: bool) -> u128 {
    if collision_free {
        binomial(modes as u128, particles as u128)
    } else {
        binomial((modes + particles - 1) as u128, particles as u128)
    }
}

/// All occupation lists of `particles` particles over `modes` modes, ordered
/// lexicographically with the first mode varying slowest from full to empty
/// (so `(n,0,..)` comes first and `(..,0,n)` last). With `collision_free`,
/// restricts to 0/1 occupations.
pub fn enumerate_events(
    modes: usize,
    particles: usize,
    collision_free: bool,
) -> Result<Vec<ModeOccupation>> {
    if modes == 0 || particles == 0 {
        return Err(Error::Validation("need at least one mode and one particle".into()));
    }
    let count = event_count(modes, particles, collision_free);
    if count > MAX_EVENT_COUNT {
        return Err(Error::Capacity(format!(
            "event list would hold {count} entries, cap is {MAX_EVENT_COUNT}"
        )));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut prefix = Vec::with_capacity(modes);
    fill_events(modes, particles, collision_free, &mut prefix, &mut out);
    Ok(out)
}

fn fill_events(
    modes: usize,
    remaining: usize,
    collision_free: bool,
    prefix: &mut Vec<usize>,
    out: &mut Vec<ModeOccupation>,
) {
    if modes == 1 {
        if !collision_free || remaining <= 1 {
            prefix.push(remaining);
            out.push(ModeOccupation { occupations: prefix.clone() });
            prefix.pop();
        }
        return;
    }
    let top = if collision_free { remaining.min(1) } else { remaining };
    for count in (0..=top).rev() {
        if collision_free && remaining - count > modes - 1 {
            continue;
        }
        prefix.push(count);
        fill_events(modes - 1, remaining - count, collision_free, prefix, out);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn occ(v: &[usize]) -> ModeOccupation {
        ModeOccupation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mode_assignment_examples() {
        // (1,0,1,0,1,0) -> particles in modes 0, 2, 4
        assert_eq!(mode_assignment(&occ(&[1, 0, 1, 0, 1, 0])).modes(), &[0, 2, 4]);
        assert_eq!(mode_assignment(&occ(&[2, 0, 1])).modes(), &[0, 0, 2]);
        assert_eq!(mode_assignment(&occ(&[0, 0, 3])).modes(), &[2, 2, 2]);
    }

    #[test]
    fn assignment_roundtrip() {
        for v in [&[1usize, 0, 1, 0, 1, 0][..], &[2, 0, 1], &[0, 4], &[1, 1, 1]] {
            let o = occ(v);
            let back = occupation_from_assignment(o.modes(), &mode_assignment(&o)).unwrap();
            assert_eq!(o, back);
        }
    }

    #[test]
    fn effective_matrix_submatrix_and_multiplicity() {
        let u = ComplexMatrix::from_fn(2, 2, |i, j| Complex64::new((2 * i + j) as f64, 1.0));
        // single occupancy: plain matrix
        let m = effective_matrix(&u, &occ(&[1, 1]), &occ(&[1, 1])).unwrap();
        assert_eq!(m, u);
        // doubly occupied input mode: repeated row
        let m = effective_matrix(&u, &occ(&[2, 0]), &occ(&[1, 1])).unwrap();
        assert_eq!(m.row(0), m.row(1));
        assert_eq!(m.get(0, 0), u.get(0, 0));
        assert_eq!(m.get(0, 1), u.get(0, 1));
        // particle number mismatch
        assert!(effective_matrix(&u, &occ(&[1, 0]), &occ(&[1, 1])).is_err());
    }

    #[test]
    fn effective_matrix_row_col_selection() {
        let u = ComplexMatrix::from_fn(6, 6, |i, j| Complex64::new(i as f64, j as f64));
        let m = effective_matrix(&u, &occ(&[1, 0, 1, 0, 1, 0]), &occ(&[1, 0, 1, 0, 0, 1])).unwrap();
        // rows {0,2,4}, columns {0,2,5}
        for (jj, &row) in [0usize, 2, 4].iter().enumerate() {
            for (kk, &col) in [0usize, 2, 5].iter().enumerate() {
                assert_eq!(m.get(jj, kk), u.get(row, col));
            }
        }
    }

    #[test]
    fn fourier_unitary_properties() {
        let u2 = fourier_unitary(2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(u2.get(i, j).norm(), 1.0 / 2f64.sqrt(), epsilon = 1e-12);
            }
        }
        for m in 2..=16 {
            assert!(fourier_unitary(m).unwrap().unitarity_defect() < 1e-12, "m={m}");
            assert!(fourier_unitary_zero_based(m).unwrap().unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn haar_unitary_is_unitary_and_deterministic() {
        for m in [1usize, 2, 5, 16, 64] {
            let u = haar_random_unitary(m, 11).unwrap();
            assert!(u.unitarity_defect() < 1e-10, "m={m}");
        }
        let a = haar_random_unitary(6, 3).unwrap();
        let b = haar_random_unitary(6, 3).unwrap();
        let c = haar_random_unitary(6, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn haar_first_entry_moment() {
        // E|U_00|^2 = 1/m for the Haar measure; 3 standard errors at 10^4 draws
        let m = 8;
        let draws = 10_000;
        let mut rng = stream_rng(2024, 1);
        let mut acc = 0.0;
        for _ in 0..draws {
            let u = haar_unitary_from_rng(m, &mut rng).unwrap();
            acc += u.get(0, 0).norm_sqr();
        }
        let mean = acc / draws as f64;
        // Var(|U_00|^2) = (m-1)/(m^2 (m+1)) for Beta(1, m-1)
        let se = ((m as f64 - 1.0) / ((m * m) as f64 * (m as f64 + 1.0)) / draws as f64).sqrt();
        assert!(
            (mean - 1.0 / m as f64).abs() <= 3.0 * se,
            "mean {mean} vs {} +- {}",
            1.0 / m as f64,
            3.0 * se
        );
    }

    #[test]
    fn enumerate_events_examples() {
        let ev = enumerate_events(2, 2, false).unwrap();
        assert_eq!(
            ev,
            vec![occ(&[2, 0]), occ(&[1, 1]), occ(&[0, 2])]
        );
        assert_eq!(enumerate_events(9, 4, false).unwrap().len(), 495);
        assert_eq!(enumerate_events(4, 2, true).unwrap().len(), 6);
    }

    #[test]
    fn enumerate_events_counts_match_binomials() {
        for m in 1..=12 {
            for n in 1..=6 {
                let full = enumerate_events(m, n, false).unwrap();
                assert_eq!(full.len() as u128, event_count(m, n, false), "m={m} n={n}");
                for e in &full {
                    assert_eq!(e.particles(), n);
                }
                if n <= m {
                    let cf = enumerate_events(m, n, true).unwrap();
                    assert_eq!(cf.len() as u128, event_count(m, n, true));
                    assert!(cf.iter().all(|e| e.is_collision_free()));
                }
            }
        }
    }

    #[test]
    fn enumerate_events_capacity_guard() {
        assert!(matches!(
            enumerate_events(60, 12, false),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn normalization_examples() {
        assert_abs_diff_eq!(
            normalization_factor(&occ(&[1, 1, 1]), &occ(&[1, 1, 1])),
            1.0
        );
        assert_abs_diff_eq!(normalization_factor(&occ(&[2, 0]), &occ(&[1, 1])), 0.5);
        assert_abs_diff_eq!(
            normalization_factor(&occ(&[1, 1, 1]), &occ(&[3, 0, 0])),
            1.0 / 6.0
        );
    }

    #[test]
    fn explicit_spec_rejects_nonunitary() {
        let spec = UnitarySpec::Explicit(ComplexMatrix::ones(2));
        assert!(matches!(spec.realize(), Err(Error::Validation(_))));
    }
}
