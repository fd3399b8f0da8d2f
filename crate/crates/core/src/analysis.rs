//! Distribution-level analysis and experiment sweeps.
//!
//! Total variation distances here follow the unhalved 1-norm convention
//! `d(p, q) = sum_s |p(s) - q(s)|`, so distances range up to 2. That is the
//! convention under which the deviation bounds and the `2(n-1)/n` Fourier
//! estimate are stated.
//!
//! Sweeps are deterministic: every (experiment, repetition) cell owns one RNG
//! stream derived from the base seed, cells are evaluated independently (in
//! parallel if a rayon pool is installed), and rows are emitted in cell order.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::distinguishability::{gram_matrix, random_states_from_rng, DistinguishabilityMatrix};
use crate::error::{Error, Result};
use crate::probability::{
    prob_dist, prob_id, prob_mixed, prob_partial, InternalSpec, ScatteringInstance,
};
use crate::rng::stream_rng;
use crate::scattering::{
    enumerate_events, event_count, fourier_unitary, haar_unitary_from_rng, ModeOccupation,
};

/// Full enumeration is used whenever the event count stays below this;
/// otherwise a sampled subset with a coverage tag.
pub const DEFAULT_COMPLETE_LIMIT: usize = 100_000;
/// Tolerance on `sum p = 1` for complete distributions.
pub const SUM_TOL: f64 = 1e-8;

/// Whether a distribution covers all events or a sampled subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    Complete,
    Sampled(usize),
}

impl Coverage {
    pub fn tag(&self) -> String {
        match self {
            Coverage::Complete => "complete".into(),
            Coverage::Sampled(k) => format!("sampled:{k}"),
        }
    }
}

impl Serialize for Coverage {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.tag())
    }
}

/// Which probability a distribution holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbKind {
    /// Partially distinguishable particles (ensemble-averaged for mixed
    /// instances).
    Partial,
    /// Ideal bosons.
    Id,
    /// Fully distinguishable particles.
    Dist,
}

/// Probabilities over an ordered event list.
#[derive(Debug, Clone)]
pub struct EventDistribution {
    events: Vec<ModeOccupation>,
    probabilities: Vec<f64>,
    coverage: Coverage,
}

impl EventDistribution {
    pub fn new(
        events: Vec<ModeOccupation>,
        probabilities: Vec<f64>,
        coverage: Coverage,
    ) -> Result<Self> {
        if events.len() != probabilities.len() || events.is_empty() {
            return Err(Error::Dimension(format!(
                "{} events with {} probabilities",
                events.len(),
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation("probabilities must lie in [0, 1]".into()));
        }
        let dist = Self { events, probabilities, coverage };
        if coverage == Coverage::Complete {
            let total = dist.sum();
            if (total - 1.0).abs() > SUM_TOL {
                return Err(Error::NumericalConsistency(format!(
                    "complete distribution sums to {total}, expected 1"
                )));
            }
        }
        Ok(dist)
    }

    pub fn events(&self) -> &[ModeOccupation] {
        &self.events
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn coverage(&self) -> Coverage {
        self.coverage
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Evaluates the chosen probability on the given events. The coverage tag is
/// `Complete` exactly when the list has the size of the full enumeration.
pub fn distribution(
    inst: &ScatteringInstance,
    events: &[ModeOccupation],
    kind: ProbKind,
) -> Result<EventDistribution> {
    let full = event_count(inst.modes(), inst.particles(), false);
    let coverage = if events.len() as u128 == full {
        Coverage::Complete
    } else {
        Coverage::Sampled(events.len())
    };
    let probabilities = events
        .iter()
        .map(|ev| {
            let p = match kind {
                ProbKind::Partial => match inst.internal() {
                    InternalSpec::Mixed(_) => prob_mixed(inst, ev)?,
                    _ => prob_partial(inst, ev)?,
                },
                ProbKind::Id => prob_id(inst, ev)?,
                ProbKind::Dist => prob_dist(inst, ev)?,
            };
            Ok(p.value)
        })
        .collect::<Result<Vec<_>>>()?;
    EventDistribution::new(events.to_vec(), probabilities, coverage)
}

/// Unhalved total variation distance `sum_s |p(s) - q(s)|` over a shared
/// event list.
pub fn total_variation(p: &EventDistribution, q: &EventDistribution) -> Result<f64> {
    if p.events != q.events {
        return Err(Error::Validation(
            "total variation distance needs identical event lists".into(),
        ));
    }
    Ok(p.probabilities
        .iter()
        .zip(&q.probabilities)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// The three permanent-based deviation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// `|P_dist - P_S| <= P_dist (perm(S) - 1)`, requires entrywise
    /// nonnegative `S`.
    NonnegativeFromDist,
    /// `|P_dist - P_S| <= P_dist (perm(|S|) - 1)`, unconditional.
    EntrywiseAbsFromDist,
    /// `|P_id - P_S| <= P_dist (n! - perm(S))`, requires real `S`.
    RealFromId,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::NonnegativeFromDist => "nonnegative-from-dist",
            BoundKind::EntrywiseAbsFromDist => "entrywise-abs-from-dist",
            BoundKind::RealFromId => "real-from-id",
        }
    }
}

/// Outcome of one bound evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

const BOUND_SLACK: f64 = 1e-10;

/// Evaluates one deviation bound on a single event. A kind whose assumption
/// the instance's `S` violates is an error, not a silent skip.
pub fn bound_check(
    inst: &ScatteringInstance,
    output: &ModeOccupation,
    kind: BoundKind,
) -> Result<BoundReport> {
    let s = inst.s_matrix().ok_or_else(|| {
        Error::Validation("bound check needs a pure or explicit-matrix instance".into())
    })?;
    let applicable = match kind {
        BoundKind::NonnegativeFromDist => s.is_nonnegative(1e-12),
        BoundKind::EntrywiseAbsFromDist => true,
        BoundKind::RealFromId => s.is_real(1e-12),
    };
    if !applicable {
        return Err(Error::Validation(format!(
            "bound {} does not apply to this S",
            kind.as_str()
        )));
    }
    let p_s = prob_partial(inst, output)?.value;
    let p_dist = prob_dist(inst, output)?.value;
    let n = inst.particles();
    let (lhs, rhs) = match kind {
        BoundKind::NonnegativeFromDist => {
            let perm_s = s.permanent_value()?;
            ((p_dist - p_s).abs(), p_dist * (perm_s - 1.0))
        }
        BoundKind::EntrywiseAbsFromDist => {
            let abs_perm = crate::permanent::permanent(&s.matrix().abs_entrywise())?.re;
            ((p_dist - p_s).abs(), p_dist * (abs_perm - 1.0))
        }
        BoundKind::RealFromId => {
            let perm_s = s.permanent_value()?;
            let factorial: f64 = (1..=n).map(|i| i as f64).product();
            let p_id = prob_id(inst, output)?.value;
            ((p_id - p_s).abs(), p_dist * (factorial - perm_s))
        }
    };
    Ok(BoundReport { kind, lhs, rhs, holds: lhs <= rhs + BOUND_SLACK })
}

/// Enhancement of the full-bunching event `(n, 0, .., 0)` over classically
/// distinguishable particles: `prob_partial / (prod_k r_k! prob_dist)`,
/// which equals `perm(S) / prod_k r_k!`.
pub fn bunching_ratio(inst: &ScatteringInstance) -> Result<f64> {
    let mut bunch = vec![0usize; inst.modes()];
    bunch[0] = inst.particles();
    let bunch = ModeOccupation::new(bunch)?;
    let p_dist = prob_dist(inst, &bunch)?.value;
    if p_dist == 0.0 {
        return Err(Error::UndefinedRatio(
            "classical bunching probability vanishes (zero column)".into(),
        ));
    }
    let p_s = prob_partial(inst, &bunch)?.value;
    Ok(p_s / (p_dist * inst.input().factorial_product()))
}

/// Best mixture `(1 - gamma) P_id + gamma P_dist` approximating `P_S`.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureFit {
    /// `None` when `P_id = P_dist` eventwise, which leaves gamma undefined.
    pub gamma_best: Option<f64>,
    /// 1-norm distance of `P_S` to the best mixture.
    pub delta: f64,
}

/// Exact minimizer of `gamma -> |P(gamma) - P_S|_1` over all real `gamma`.
///
/// The objective is convex piecewise-linear; its minimum is attained at one of
/// the breakpoints `gamma_s = (P_S(s) - P_id(s)) / (P_dist(s) - P_id(s))`, so
/// those are enumerated and evaluated. Ties resolve to the smallest gamma, and
/// gamma is allowed outside `[0, 1]`.
pub fn best_mixture(
    p_id: &EventDistribution,
    p_dist: &EventDistribution,
    p_s: &EventDistribution,
) -> Result<MixtureFit> {
    if p_id.events != p_dist.events || p_id.events != p_s.events {
        return Err(Error::Validation("mixture fit needs identical event lists".into()));
    }
    let objective = |gamma: f64| -> f64 {
        p_id.probabilities
            .iter()
            .zip(&p_dist.probabilities)
            .zip(&p_s.probabilities)
            .map(|((&id, &dist), &s)| (id + gamma * (dist - id) - s).abs())
            .sum()
    };
    let mut breakpoints: Vec<f64> = p_id
        .probabilities
        .iter()
        .zip(&p_dist.probabilities)
        .zip(&p_s.probabilities)
        .filter(|((&id, &dist), _)| dist != id)
        .map(|((&id, &dist), &s)| (s - id) / (dist - id))
        .collect();
    if breakpoints.is_empty() {
        return Ok(MixtureFit { gamma_best: None, delta: total_variation(p_id, p_s)? });
    }
    breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    let mut best_gamma = breakpoints[0];
    let mut best_value = objective(best_gamma);
    for &gamma in &breakpoints[1..] {
        let value = objective(gamma);
        if value < best_value {
            best_value = value;
            best_gamma = gamma;
        }
    }
    Ok(MixtureFit { gamma_best: Some(best_gamma), delta: best_value })
}

/// Draws `count` events i.i.d. from a complete distribution by inverse CDF.
pub fn sample_events(
    dist: &EventDistribution,
    count: usize,
    seed: u64,
) -> Result<Vec<ModeOccupation>> {
    if dist.coverage != Coverage::Complete {
        return Err(Error::Validation(
            "sampling needs a complete distribution, got a sampled subset".into(),
        ));
    }
    let mut cumulative = Vec::with_capacity(dist.len());
    let mut acc = 0.0;
    for &p in &dist.probabilities {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rand::Rng::random::<f64>(&mut rng) * total;
        let idx = cumulative.partition_point(|&c| c <= u).min(dist.len() - 1);
        out.push(dist.events[idx].clone());
    }
    Ok(out)
}

/// Fraction of events whose probability falls below `tol`.
pub fn suppressed_fraction(dist: &EventDistribution, tol: f64) -> f64 {
    let hits = dist.probabilities.iter().filter(|&&p| p < tol).count();
    hits as f64 / dist.len() as f64
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman_rank_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Validation("need two sequences of equal length >= 2".into()));
    }
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).expect("finite"));
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && vals[idx[j + 1]] == vals[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        vx += (a - mean).powi(2);
        vy += (b - mean).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedRatio("rank variance vanishes".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// One output row of a sweep; every row carries the stream id and coverage
/// tag needed to reproduce it.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    /// Which sweep produced the row.
    pub setting: String,
    pub n: usize,
    pub m: usize,
    /// RNG stream id of the cell within the run's base seed.
    pub seed: u64,
    /// Overlap parameter of the equal-overlap family, where applicable.
    pub x: Option<f64>,
    /// Internal dimension of random state draws, where applicable.
    pub d: Option<usize>,
    pub perm_s: Option<f64>,
    pub d_id: Option<f64>,
    pub d_dist: Option<f64>,
    pub d_id_dist: Option<f64>,
    pub gamma_best: Option<f64>,
    pub delta: Option<f64>,
    pub coverage: Coverage,
}

fn first_n_occupation(m: usize, n: usize) -> Result<ModeOccupation> {
    if n > m {
        return Err(Error::Validation(format!("{n} particles need at least {n} modes, got {m}")));
    }
    let mut r = vec![0usize; m];
    for slot in r.iter_mut().take(n) {
        *slot = 1;
    }
    ModeOccupation::new(r)
}

/// Cyclically symmetric occupation `(1, 0, .., 1, 0, ..)` of period `m / n`.
fn cyclic_occupation(m: usize, n: usize) -> Result<ModeOccupation> {
    if n == 0 || m % n != 0 {
        return Err(Error::Validation(format!(
            "cyclic input needs n | m, got n = {n}, m = {m}"
        )));
    }
    let period = m / n;
    let mut r = vec![0usize; m];
    for k in 0..n {
        r[k * period] = 1;
    }
    ModeOccupation::new(r)
}

/// Event list for a sweep cell: the full enumeration when it fits under
/// `complete_limit`, otherwise `sample_size` distinct events drawn uniformly
/// from the enumeration.
fn cell_events(
    m: usize,
    n: usize,
    complete_limit: usize,
    sample_size: usize,
    rng: &mut impl rand::Rng,
) -> Result<(Vec<ModeOccupation>, Coverage)> {
    let full = event_count(m, n, false);
    let mut events = enumerate_events(m, n, false)?;
    if full <= complete_limit as u128 {
        return Ok((events, Coverage::Complete));
    }
    // partial Fisher-Yates: the first `sample_size` entries become a uniform
    // sample without replacement
    let take = sample_size.min(events.len());
    for i in 0..take {
        let j = i + rng.random_range(0..events.len() - i);
        events.swap(i, j);
    }
    events.truncate(take);
    Ok((events, Coverage::Sampled(take)))
}

/// Shared per-cell computation: distances of `P_S` to both reference
/// distributions plus the best-mixture fit.
struct CellReferences {
    events: Vec<ModeOccupation>,
    coverage: Coverage,
    p_id: EventDistribution,
    p_dist: EventDistribution,
    d_id_dist: f64,
}

impl CellReferences {
    fn build(
        unitary: &crate::matrix::ComplexMatrix,
        input: &ModeOccupation,
        events: Vec<ModeOccupation>,
        coverage: Coverage,
    ) -> Result<Self> {
        let n = input.particles();
        let reference = ScatteringInstance::new(
            unitary.clone(),
            input.clone(),
            InternalSpec::Matrix(DistinguishabilityMatrix::identity(n)),
        )?;
        let p_id = distribution(&reference, &events, ProbKind::Id)?;
        let p_dist = distribution(&reference, &events, ProbKind::Dist)?;
        let d_id_dist = total_variation(&p_id, &p_dist)?;
        Ok(Self { events, coverage, p_id, p_dist, d_id_dist })
    }

    fn record_for(
        &self,
        setting: &str,
        stream: u64,
        inst: &ScatteringInstance,
        s: &DistinguishabilityMatrix,
    ) -> Result<SweepRecord> {
        let p_s = distribution(inst, &self.events, ProbKind::Partial)?;
        let d_id = total_variation(&self.p_id, &p_s)?;
        let d_dist = total_variation(&self.p_dist, &p_s)?;
        let fit = best_mixture(&self.p_id, &self.p_dist, &p_s)?;
        Ok(SweepRecord {
            setting: setting.into(),
            n: inst.particles(),
            m: inst.modes(),
            seed: stream,
            x: None,
            d: None,
            perm_s: Some(s.permanent_value()?),
            d_id: Some(d_id),
            d_dist: Some(d_dist),
            d_id_dist: Some(self.d_id_dist),
            gamma_best: fit.gamma_best,
            delta: Some(fit.delta),
            coverage: self.coverage,
        })
    }
}

/// Configuration of [`transition_sweep`].
#[derive(Debug, Clone)]
pub struct TransitionSweepConfig {
    pub n_values: Vec<usize>,
    /// Unitaries drawn per particle number.
    pub repetitions: usize,
    /// Number of equidistant overlap values on `[0, 1]`.
    pub x_grid: usize,
    pub seed: u64,
    pub complete_limit: usize,
    pub sample_size: usize,
}

impl Default for TransitionSweepConfig {
    fn default() -> Self {
        Self {
            n_values: (3..=7).collect(),
            repetitions: 160,
            x_grid: 15,
            seed: 0,
            complete_limit: DEFAULT_COMPLETE_LIMIT,
            sample_size: 100,
        }
    }
}

/// Equal-overlap transition: for each `(n, repetition)` cell one Haar unitary
/// at `m = 2n`, swept over the x grid.
pub fn transition_sweep(config: &TransitionSweepConfig) -> Result<Vec<SweepRecord>> {
    if config.x_grid < 2 || config.repetitions == 0 {
        return Err(Error::Validation("need x_grid >= 2 and repetitions >= 1".into()));
    }
    let mut cells = Vec::new();
    for &n in &config.n_values {
        if n < 2 {
            return Err(Error::Validation("transition sweep needs n >= 2".into()));
        }
        for rep in 0..config.repetitions {
            cells.push((n, rep));
        }
    }
    let rows: Result<Vec<Vec<SweepRecord>>> = cells
        .par_iter()
        .enumerate()
        .map(|(cell_idx, &(n, _rep))| {
            let stream = cell_idx as u64;
            let mut rng = stream_rng(config.seed, stream);
            let m = 2 * n;
            let unitary = haar_unitary_from_rng(m, &mut rng)?;
            let input = first_n_occupation(m, n)?;
            let (events, coverage) =
                cell_events(m, n, config.complete_limit, config.sample_size, &mut rng)?;
            let refs = CellReferences::build(&unitary, &input, events, coverage)?;
            let mut out = Vec::with_capacity(config.x_grid);
            for k in 0..config.x_grid {
                let x = k as f64 / (config.x_grid - 1) as f64;
                let (s, _) = crate::distinguishability::canonical_family(n, x)?;
                let inst = ScatteringInstance::new(
                    unitary.clone(),
                    input.clone(),
                    InternalSpec::Matrix(s.clone()),
                )?;
                let mut record = refs.record_for("transition", stream, &inst, &s)?;
                record.x = Some(x);
                out.push(record);
            }
            Ok(out)
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Which unitary a random-state scan runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanUnitary {
    /// One Haar unitary drawn from stream 0 of the scan seed.
    Haar,
    /// The Fourier matrix with a cyclically symmetric input.
    Fourier,
}

/// Configuration of [`random_scan`].
#[derive(Debug, Clone)]
pub struct RandomScanConfig {
    pub n: usize,
    /// Total draws; the internal dimension cycles over `d_values`.
    pub draws: usize,
    /// Defaults to `2..=n` when empty.
    pub d_values: Vec<usize>,
    pub seed: u64,
    pub unitary: ScanUnitary,
    pub complete_limit: usize,
    pub sample_size: usize,
}

impl RandomScanConfig {
    pub fn new(n: usize, draws: usize, seed: u64) -> Self {
        Self {
            n,
            draws,
            d_values: Vec::new(),
            seed,
            unitary: ScanUnitary::Haar,
            complete_limit: DEFAULT_COMPLETE_LIMIT,
            sample_size: 100,
        }
    }
}

/// Random internal states on a fixed unitary at `m = 2n`: one row per draw
/// with `(gamma_best, delta, perm S)` and the distances to both references.
pub fn random_scan(config: &RandomScanConfig) -> Result<Vec<SweepRecord>> {
    let n = config.n;
    if n < 2 || config.draws == 0 {
        return Err(Error::Validation("random scan needs n >= 2 and draws >= 1".into()));
    }
    let m = 2 * n;
    let d_values = if config.d_values.is_empty() {
        (2..=n).collect::<Vec<_>>()
    } else {
        config.d_values.clone()
    };
    if d_values.iter().any(|&d| d == 0) {
        return Err(Error::Validation("internal dimension must be >= 1".into()));
    }
    let (unitary, input, setting) = match config.unitary {
        ScanUnitary::Haar => (
            haar_unitary_from_rng(m, &mut stream_rng(config.seed, 0))?,
            first_n_occupation(m, n)?,
            "random-scan",
        ),
        ScanUnitary::Fourier => (fourier_unitary(m)?, cyclic_occupation(m, n)?, "fourier-scan"),
    };
    let (events, coverage) = cell_events(
        m,
        n,
        config.complete_limit,
        config.sample_size,
        &mut stream_rng(config.seed, 0),
    )?;
    let refs = CellReferences::build(&unitary, &input, events, coverage)?;
    let rows: Result<Vec<SweepRecord>> = (0..config.draws)
        .into_par_iter()
        .map(|draw| {
            let stream = 1 + draw as u64;
            let mut rng = stream_rng(config.seed, stream);
            let dim = d_values[draw % d_values.len()];
            let states = random_states_from_rng(n, dim, &mut rng)?;
            let s = gram_matrix(&states)?;
            let inst = ScatteringInstance::new(
                unitary.clone(),
                input.clone(),
                InternalSpec::Pure(states),
            )?;
            let mut record = refs.record_for(setting, stream, &inst, &s)?;
            record.d = Some(dim);
            Ok(record)
        })
        .collect();
    rows
}

/// Configuration of [`fourier_scan`].
#[derive(Debug, Clone)]
pub struct FourierScanConfig {
    pub n_values: Vec<usize>,
    pub seed: u64,
    /// Haar baseline: number of unitaries at `m = n^2`.
    pub baseline_unitaries: usize,
    /// Events sampled per baseline unitary.
    pub baseline_events: usize,
    /// Optional random-state draws on the Fourier setup (0 = skip).
    pub scatter_draws: usize,
    pub complete_limit: usize,
}

impl Default for FourierScanConfig {
    fn default() -> Self {
        Self {
            n_values: (2..=5).collect(),
            seed: 0,
            baseline_unitaries: 100,
            baseline_events: 300,
            scatter_draws: 0,
            complete_limit: DEFAULT_COMPLETE_LIMIT,
        }
    }
}

/// Fourier-versus-random comparison: for each `n` one row with the full
/// `d(P_id, P_dist)` of the Fourier network (cyclic input, `m = 2n`), a row
/// per Haar baseline unitary (`m = n^2`, sampled events), and optionally
/// random-state scatter rows on the Fourier setup.
pub fn fourier_scan(config: &FourierScanConfig) -> Result<Vec<SweepRecord>> {
    let mut records = Vec::new();
    for &n in &config.n_values {
        if n < 2 {
            return Err(Error::Validation("fourier scan needs n >= 2".into()));
        }
        // Fourier point: complete enumeration
        let m = 2 * n;
        let unitary = fourier_unitary(m)?;
        let input = cyclic_occupation(m, n)?;
        let events = enumerate_events(m, n, false)?;
        let refs = CellReferences::build(&unitary, &input, events, Coverage::Complete)?;
        records.push(SweepRecord {
            setting: "fourier".into(),
            n,
            m,
            seed: 0,
            x: None,
            d: None,
            perm_s: None,
            d_id: None,
            d_dist: None,
            d_id_dist: Some(refs.d_id_dist),
            gamma_best: None,
            delta: None,
            coverage: Coverage::Complete,
        });

        // Haar baseline at m = n^2 with the sampled-subset estimator
        let mb = n * n;
        let baseline: Result<Vec<SweepRecord>> = (0..config.baseline_unitaries)
            .into_par_iter()
            .map(|rep| {
                let stream = 1 + rep as u64;
                let mut rng = stream_rng(config.seed.wrapping_add(n as u64), stream);
                let u = haar_unitary_from_rng(mb, &mut rng)?;
                let input = first_n_occupation(mb, n)?;
                let (events, coverage) =
                    cell_events(mb, n, config.baseline_events, config.baseline_events, &mut rng)?;
                let refs = CellReferences::build(&u, &input, events, coverage)?;
                Ok(SweepRecord {
                    setting: "haar-baseline".into(),
                    n,
                    m: mb,
                    seed: stream,
                    x: None,
                    d: None,
                    perm_s: None,
                    d_id: None,
                    d_dist: None,
                    d_id_dist: Some(refs.d_id_dist),
                    gamma_best: None,
                    delta: None,
                    coverage: refs.coverage,
                })
            })
            .collect();
        records.extend(baseline?);

        if config.scatter_draws > 0 {
            let scatter = random_scan(&RandomScanConfig {
                n,
                draws: config.scatter_draws,
                d_values: Vec::new(),
                seed: config.seed.wrapping_add(n as u64),
                unitary: ScanUnitary::Fourier,
                complete_limit: config.complete_limit,
                sample_size: config.baseline_events,
            })?;
            records.extend(scatter);
        }
    }
    Ok(records)
}

/// Mean `d(P_id, P_dist)` over `count` Haar unitaries (full enumeration).
pub fn mean_distance_id_dist(n: usize, m: usize, count: usize, seed: u64) -> Result<f64> {
    if count == 0 {
        return Err(Error::Validation("need at least one unitary".into()));
    }
    let totals: Result<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep as u64);
            let unitary = haar_unitary_from_rng(m, &mut rng)?;
            let input = first_n_occupation(m, n)?;
            let events = enumerate_events(m, n, false)?;
            let refs = CellReferences::build(&unitary, &input, events, Coverage::Complete)?;
            Ok(refs.d_id_dist)
        })
        .collect();
    Ok(totals?.iter().sum::<f64>() / count as f64)
}

/// Builds a pure instance for the bunching law examples: helper shared by the
/// CLI and tests.
pub fn bunching_prediction(inst: &ScatteringInstance) -> Result<f64> {
    let s = inst.s_matrix().ok_or_else(|| {
        Error::Validation("bunching prediction needs a pure or matrix instance".into())
    })?;
    Ok(s.permanent_value()? / inst.input().factorial_product())
}
