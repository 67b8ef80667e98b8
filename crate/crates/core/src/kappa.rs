//! `K(ρ) = Σ_{|S| ≥ 2} Δ(ρ_S)`: full enumeration, the symmetry-reduced sum
//! for `W_n`, a Monte Carlo estimator, and qudit regrouping.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qstate::{self, CMatrix, DensityMatrix, QubitSubset, SubsystemLayout};
use crate::separability::{self, Bipartition, DeltaConfig, SepDistanceBounds};
use crate::wstates;

pub const MAX_ENUMERATED_QUBITS: usize = 8;
pub const MAX_SAMPLED_QUBITS: usize = 10;
pub const MAX_KMAX: usize = 10;
pub const MIN_SAMPLES: usize = 30;
pub const MAX_GROUP_DIM: usize = 16;
/// Largest trace-norm distance between two states.
pub const TRACE_NORM_DIAMETER: f64 = 2.0;

/// How `kappa_symmetric_w` evaluates each `Δ_k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricMode {
    /// Two-qubit compression of each cut `a|k−a` (exact, any `n`).
    #[default]
    Compressed,
    /// Dense `delta` on `w_reduced(n, k)` over one cut per size class.
    Dense,
}

impl SymmetricMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "compressed" => Ok(Self::Compressed),
            "dense" => Ok(Self::Dense),
            other => Err(Error::InvalidArgument(format!("unknown symmetric mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Compressed => "compressed",
            Self::Dense => "dense",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaConfig {
    pub delta: DeltaConfig,
    /// Largest subset size solved in `kappa_symmetric_w`; larger sizes use tail bounds.
    pub kmax: usize,
    /// Use `Δ_lower(kmax)` as the tail lower bound instead of 0.
    pub assume_monotone: bool,
    pub symmetric_mode: SymmetricMode,
}

impl Default for KappaConfig {
    fn default() -> Self {
        Self { delta: DeltaConfig::default(), kmax: 8, assume_monotone: true, symmetric_mode: SymmetricMode::Compressed }
    }
}

impl KappaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_KMAX).contains(&self.kmax) {
            return Err(Error::OutOfRange { name: "kmax", value: self.kmax as f64, range: "[2, 10]" });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KappaMethod {
    Enumerated,
    Symmetric,
    Sampled { samples: usize, seed: u64, ci_halfwidth: f64 },
}

impl KappaMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Enumerated => "enumerated",
            Self::Symmetric => "symmetric",
            Self::Sampled { .. } => "sampled",
        }
    }
}

/// Bounds for all subsets of one size `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeBounds {
    pub k: usize,
    pub count: u64,
    /// Per-subset `Δ` bounds (averages over the size class when subsets differ).
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub contribution_lower: f64,
    pub contribution_upper: f64,
    /// Set when `k > kmax` and the bounds are tail bounds rather than solves.
    pub tail: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsetBounds {
    /// 1-based subsystem labels.
    pub subset: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
    pub argmin: String,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaEstimate {
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub method: KappaMethod,
    pub per_size: Vec<SizeBounds>,
    /// Per-subset detail (enumeration only).
    pub subsets: Vec<SubsetBounds>,
    /// Symmetric method: `lower` with a zero tail and with the monotone tail.
    pub lower_zero_tail: Option<f64>,
    pub lower_monotone_tail: Option<f64>,
    pub flagged_subsets: usize,
    /// Largest `max(0, lower − upper)` over all `Δ` solves.
    pub max_sandwich_violation: f64,
    /// Largest deviation seen when re-verifying certificates.
    pub max_certificate_deviation: f64,
}

impl KappaEstimate {
    /// Per-size breakdown as CSV.
    pub fn per_size_csv(&self) -> String {
        let mut out = String::from("k,count,delta_lower,delta_upper,contribution_lower,contribution_upper,tail\n");
        for s in &self.per_size {
            let _ = writeln!(
                out,
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
                s.k, s.count, s.delta_lower, s.delta_upper, s.contribution_lower, s.contribution_upper, s.tail
            );
        }
        out
    }

    /// Total number of subsets accounted for in `per_size`.
    pub fn subset_count(&self) -> u64 {
        self.per_size.iter().map(|s| s.count).sum()
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Number of subsets with at least two elements.
pub fn nontrivial_subset_count(n: usize) -> u64 {
    (1u64 << n) - n as u64 - 1
}

struct Solved {
    bounds: SepDistanceBounds,
    violation: f64,
    deviation: f64,
}

fn solve_delta(rho: &DensityMatrix, bips: Option<&[Bipartition]>, cfg: &DeltaConfig, salt: u64) -> Result<Solved> {
    let mut cfg = cfg.clone();
    cfg.seesaw.seed = separability::derive_seed(cfg.seesaw.seed, salt);
    let bounds = match bips {
        Some(b) => separability::delta_over(rho, b, &cfg)?,
        None => separability::delta(rho, &cfg)?,
    };
    let check = bounds.verify(rho)?;
    Ok(Solved {
        violation: check.sandwich_violation,
        deviation: check.upper_deviation.max(check.lower_deviation),
        bounds,
    })
}

/// `K(ρ)` by solving `Δ` on every subset with at least two subsystems.
pub fn kappa_enumerated(rho: &DensityMatrix, cfg: &KappaConfig) -> Result<KappaEstimate> {
    let n = rho.layout().len();
    if n > MAX_ENUMERATED_QUBITS {
        return Err(Error::DimensionCap { dim: rho.dim(), cap: 1 << MAX_ENUMERATED_QUBITS });
    }
    let masks: Vec<u64> = (0..1u64 << n).filter(|m| m.count_ones() >= 2).collect();
    let solved: Vec<(QubitSubset, Solved)> = masks
        .par_iter()
        .map(|&mask| {
            let subset = QubitSubset::from_mask(mask, n)?;
            let reduced = qstate::partial_trace(rho, &subset)?;
            let s = solve_delta(&reduced, None, &cfg.delta, mask)?;
            Ok((subset, s))
        })
        .collect::<Result<_>>()?;

    let mut sizes: BTreeMap<usize, (u64, f64, f64)> = BTreeMap::new();
    let mut subsets = Vec::with_capacity(solved.len());
    let (mut violation, mut deviation, mut flagged) = (0.0f64, 0.0f64, 0);
    for (subset, s) in &solved {
        let entry = sizes.entry(subset.len()).or_insert((0, 0.0, 0.0));
        entry.0 += 1;
        entry.1 += s.bounds.lower;
        entry.2 += s.bounds.upper;
        violation = violation.max(s.violation);
        deviation = deviation.max(s.deviation);
        flagged += usize::from(s.bounds.flagged);
        subsets.push(SubsetBounds {
            subset: subset.to_one_based(),
            lower: s.bounds.lower,
            upper: s.bounds.upper,
            argmin: s.bounds.bipartition_argmin.to_string(),
            flagged: s.bounds.flagged,
        });
    }
    let per_size: Vec<SizeBounds> = sizes
        .into_iter()
        .map(|(k, (count, lo, up))| SizeBounds {
            k,
            count,
            delta_lower: lo / count as f64,
            delta_upper: up / count as f64,
            contribution_lower: lo,
            contribution_upper: up,
            tail: false,
        })
        .collect();
    Ok(KappaEstimate {
        n,
        lower: per_size.iter().map(|s| s.contribution_lower).sum(),
        upper: per_size.iter().map(|s| s.contribution_upper).sum(),
        method: KappaMethod::Enumerated,
        per_size,
        subsets,
        lower_zero_tail: None,
        lower_monotone_tail: None,
        flagged_subsets: flagged,
        max_sandwich_violation: violation,
        max_certificate_deviation: deviation,
    })
}

/// Two-qubit image of `w_reduced(n, k)` under the cut `a | k−a`:
/// `(1−q)|00⟩⟨00| + q|φ⟩⟨φ|` with `q = k/n`, `φ = √(a/k)|10⟩ + √(b/k)|01⟩`.
/// Local isometries `|1⟩ ↦ |W_a⟩`, `|0⟩ ↦ |0^a⟩` (and their left inverses)
/// map it to and from the reduced state, so both have the same `Δ` for this cut.
pub fn w_cut_compression(n: usize, k: usize, a: usize) -> Result<DensityMatrix> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("need 2 ≤ k ≤ n, got k = {k}, n = {n}")));
    }
    if a == 0 || a >= k {
        return Err(Error::InvalidArgument(format!("cut size {a} must lie in 1..{k}")));
    }
    let q = k as f64 / n as f64;
    let (x, y) = ((a as f64 / k as f64).sqrt(), ((k - a) as f64 / k as f64).sqrt());
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = Complex64::new(1.0 - q, 0.0);
    // basis |00⟩, |01⟩, |10⟩, |11⟩; φ has amplitude x on |10⟩ and y on |01⟩.
    let phi = [0.0, y, x, 0.0];
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] += Complex64::new(q * phi[i] * phi[j], 0.0);
        }
    }
    DensityMatrix::new(SubsystemLayout::qubits(2)?, m)
}


#[derive(Clone, Copy, Debug)]
struct Bracket {
    lower: f64,
    upper: f64,
    violation: f64,
    deviation: f64,
    flagged: bool,
}

impl From<&Solved> for Bracket {
    fn from(s: &Solved) -> Self {
        Self {
            lower: s.bounds.lower,
            upper: s.bounds.upper,
            violation: s.violation,
            deviation: s.deviation,
            flagged: s.bounds.flagged,
        }
    }
}

/// `Δ_k` for the `k`-qubit marginal of `W_n`.
fn symmetric_delta(n: usize, k: usize, cfg: &KappaConfig) -> Result<Bracket> {
    let salt = (n as u64) << 32 | k as u64;
    match cfg.symmetric_mode {
        SymmetricMode::Compressed => {
            let cuts: Vec<Bracket> = (1..=k / 2)
                .into_par_iter()
                .map(|a| {
                    let rho = w_cut_compression(n, k, a)?;
                    solve_delta(&rho, None, &cfg.delta, salt ^ ((a as u64) << 16)).map(|s| Bracket::from(&s))
                })
                .collect::<Result<_>>()?;
            Ok(cuts.iter().skip(1).fold(cuts[0], |acc, c| Bracket {
                lower: acc.lower.min(c.lower),
                upper: acc.upper.min(c.upper),
                violation: acc.violation.max(c.violation),
                deviation: acc.deviation.max(c.deviation),
                flagged: acc.flagged || c.flagged,
            }))
        }
        SymmetricMode::Dense => {
            if k > separability::MAX_SOLVER_QUBITS {
                return Err(Error::DimensionCap { dim: 1 << k, cap: 1 << separability::MAX_SOLVER_QUBITS });
            }
            let rho = wstates::w_reduced(n, k)?;
            let reps: Vec<Bipartition> = (1..=k / 2)
                .map(|a| Bipartition::new(QubitSubset::new((0..a).collect(), k)?, k))
                .collect::<Result<_>>()?;
            solve_delta(&rho, Some(&reps), &cfg.delta, salt).map(|s| Bracket::from(&s))
        }
    }
}

/// `K(W_n)` using that every size-`k` marginal equals `w_reduced(n, k)`.
///
/// Sizes above `cfg.kmax` get the per-subset bracket `[t, 2]`, where `t` is
/// `Δ_lower(kmax)` with `assume_monotone` and 0 otherwise. For a
/// permutation-invariant state, `Δ(ρ_S) ≤ Δ(ρ_{S'})` whenever `S ⊂ S'`
/// (discarding a subsystem on a side with at least two members is a local
/// operation), so the monotone tail is itself a valid bound here.
pub fn kappa_symmetric_w(n: usize, cfg: &KappaConfig) -> Result<KappaEstimate> {
    cfg.validate()?;
    if n < 2 {
        return Err(Error::SubsetTooSmall { size: n });
    }
    if n > 62 {
        return Err(Error::OutOfRange { name: "n", value: n as f64, range: "[2, 62]" });
    }
    let solved_max = n.min(cfg.kmax);
    let brackets: Vec<Bracket> = (2..=solved_max).into_par_iter().map(|k| symmetric_delta(n, k, cfg)).collect::<Result<_>>()?;
    let mut per_size = Vec::with_capacity(n - 1);
    for (i, b) in brackets.iter().enumerate() {
        let k = i + 2;
        let count = binomial(n, k);
        per_size.push(SizeBounds {
            k,
            count,
            delta_lower: b.lower,
            delta_upper: b.upper,
            contribution_lower: count as f64 * b.lower,
            contribution_upper: count as f64 * b.upper,
            tail: false,
        });
    }
    let tail_floor = brackets.last().map_or(0.0, |b| b.lower);
    let (mut zero_tail, mut monotone_tail) = (0.0, 0.0);
    for k in solved_max + 1..=n {
        let count = binomial(n, k);
        monotone_tail += count as f64 * tail_floor;
        let lower = if cfg.assume_monotone { tail_floor } else { 0.0 };
        zero_tail += 0.0;
        per_size.push(SizeBounds {
            k,
            count,
            delta_lower: lower,
            delta_upper: TRACE_NORM_DIAMETER,
            contribution_lower: count as f64 * lower,
            contribution_upper: count as f64 * TRACE_NORM_DIAMETER,
            tail: true,
        });
    }
    let solved_lower: f64 = per_size.iter().filter(|s| !s.tail).map(|s| s.contribution_lower).sum();
    Ok(KappaEstimate {
        n,
        lower: per_size.iter().map(|s| s.contribution_lower).sum(),
        upper: per_size.iter().map(|s| s.contribution_upper).sum(),
        method: KappaMethod::Symmetric,
        per_size,
        subsets: Vec::new(),
        lower_zero_tail: Some(solved_lower + zero_tail),
        lower_monotone_tail: Some(solved_lower + monotone_tail),
        flagged_subsets: brackets.iter().filter(|b| b.flagged).map(|_| 1).sum(),
        max_sandwich_violation: brackets.iter().map(|b| b.violation).fold(0.0, f64::max),
        max_certificate_deviation: brackets.iter().map(|b| b.deviation).fold(0.0, f64::max),
    })
}

/// Monte Carlo estimate of `K(ρ)` from `samples` subsets drawn uniformly
/// (with replacement) among those with at least two subsystems. The bracket
/// is widened by a 95% normal-approximation half-width.
pub fn kappa_sampled(rho: &DensityMatrix, samples: usize, seed: u64, cfg: &KappaConfig) -> Result<KappaEstimate> {
    let n = rho.layout().len();
    if n > MAX_SAMPLED_QUBITS {
        return Err(Error::DimensionCap { dim: rho.dim(), cap: 1 << MAX_SAMPLED_QUBITS });
    }
    if n < 2 {
        return Err(Error::SubsetTooSmall { size: n });
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("{samples} samples; at least {MIN_SAMPLES} are required")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = Vec::with_capacity(samples);
    while drawn.len() < samples {
        let mask: u64 = rng.random_range(0..1u64 << n);
        if mask.count_ones() >= 2 {
            drawn.push(mask);
        }
    }
    let mut unique = drawn.clone();
    unique.sort_unstable();
    unique.dedup();
    let solved: Vec<(u64, Bracket)> = unique
        .par_iter()
        .map(|&mask| {
            let subset = QubitSubset::from_mask(mask, n)?;
            let reduced = qstate::partial_trace(rho, &subset)?;
            let s = solve_delta(&reduced, None, &cfg.delta, mask ^ seed.rotate_left(17))?;
            Ok((mask, Bracket::from(&s)))
        })
        .collect::<Result<_>>()?;
    let lookup: BTreeMap<u64, Bracket> = solved.into_iter().collect();

    let total = nontrivial_subset_count(n) as f64;
    let m = samples as f64;
    let stats = |f: &dyn Fn(&Bracket) -> f64| {
        let xs: Vec<f64> = drawn.iter().map(|mask| f(&lookup[mask])).collect();
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, var.sqrt())
    };
    let (mean_lo, sd_lo) = stats(&|b| b.lower);
    let (mean_up, sd_up) = stats(&|b| b.upper);
    let ci = (1.96 * total * sd_lo.max(sd_up) / m.sqrt()).max(total * cfg.delta.solver.tol);

    let mut sizes: BTreeMap<usize, (u64, f64, f64)> = BTreeMap::new();
    for mask in &drawn {
        let b = lookup[mask];
        let e = sizes.entry(mask.count_ones() as usize).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 += b.lower;
        e.2 += b.upper;
    }
    let per_size = sizes
        .into_iter()
        .map(|(k, (hits, lo, up))| {
            let count = binomial(n, k);
            let (dl, du) = (lo / hits as f64, up / hits as f64);
            SizeBounds {
                k,
                count,
                delta_lower: dl,
                delta_upper: du,
                contribution_lower: count as f64 * dl,
                contribution_upper: count as f64 * du,
                tail: false,
            }
        })
        .collect();
    let brackets: Vec<&Bracket> = lookup.values().collect();
    Ok(KappaEstimate {
        n,
        lower: (total * mean_lo - ci).max(0.0),
        upper: total * mean_up + ci,
        method: KappaMethod::Sampled { samples, seed, ci_halfwidth: ci },
        per_size,
        subsets: Vec::new(),
        lower_zero_tail: None,
        lower_monotone_tail: None,
        flagged_subsets: brackets.iter().filter(|b| b.flagged).count(),
        max_sandwich_violation: brackets.iter().map(|b| b.violation).fold(0.0, f64::max),
        max_certificate_deviation: brackets.iter().map(|b| b.deviation).fold(0.0, f64::max),
    })
}

/// Merges consecutive subsystems into single qudits. `groups` lists 0-based
/// subsystem indices; together they must cover `0..n` in order.
pub fn regroup(rho: &DensityMatrix, groups: &[Vec<usize>]) -> Result<DensityMatrix> {
    let dims = rho.layout().dims();
    let mut next = 0;
    let mut merged = Vec::with_capacity(groups.len());
    for g in groups {
        if g.is_empty() {
            return Err(Error::InvalidGrouping("empty group".into()));
        }
        for (offset, &i) in g.iter().enumerate() {
            if i != next + offset {
                return Err(Error::InvalidGrouping(format!(
                    "group {g:?} is not the consecutive run starting at {next}; permute subsystems first"
                )));
            }
        }
        let dim: usize = g.iter().map(|&i| dims[i]).product();
        if dim > MAX_GROUP_DIM {
            return Err(Error::InvalidGrouping(format!("group {g:?} has dimension {dim} > {MAX_GROUP_DIM}")));
        }
        merged.push(dim);
        next += g.len();
    }
    if next != dims.len() {
        return Err(Error::InvalidGrouping(format!("groups cover {next} of {} subsystems", dims.len())));
    }
    rho.relayout(SubsystemLayout::new(merged)?)
}

/// Consecutive groups of the given sizes, e.g. `[3, 3]` → `[[0,1,2],[3,4,5]]`.
pub fn groups_from_sizes(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let g = (start..start + s).collect();
            start += s;
            g
        })
        .collect()
}

/// Relabels subsystems: new subsystem `i` is old subsystem `permutation[i]`.
pub fn permute_qubits(rho: &DensityMatrix, permutation: &[usize]) -> Result<DensityMatrix> {
    qstate::permute_subsystems(rho, permutation)
}

/// Seeded uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{partial_trace, tensor, trace_distance};
    use crate::wstates::{cat_pairs_state, product_random, w_state};

    #[test]
    fn binomials_and_counts() {
        assert_eq!(binomial(14, 7), 3432);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        for n in 2..12 {
            let s: u64 = (2..=n).map(|k| binomial(n, k)).sum();
            assert_eq!(s, nontrivial_subset_count(n));
        }
    }

    #[test]
    fn compression_matches_dense_marginal() {
        // Decompressing with |1⟩ ↦ |W_a⟩ reproduces the marginal, so the
        // marginal and its compression have equal spectra.
        for (n, k, a) in [(5, 3, 1), (6, 4, 2), (7, 5, 2)] {
            let small = w_cut_compression(n, k, a).unwrap();
            let big = wstates::w_reduced(n, k).unwrap();
            let mut ev_small = small.eigenvalues();
            let mut ev_big = big.eigenvalues();
            ev_small.retain(|x| x.abs() > 1e-12);
            ev_big.retain(|x| x.abs() > 1e-12);
            assert_eq!(ev_small.len(), ev_big.len());
            for (x, y) in ev_small.iter().zip(&ev_big) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(w_cut_compression(4, 2, 0).is_err());
        assert!(w_cut_compression(4, 5, 1).is_err());
    }

    #[test]
    fn compressed_and_dense_agree() {
        let dense = KappaConfig { symmetric_mode: SymmetricMode::Dense, ..Default::default() };
        let compressed = KappaConfig::default();
        for k in 2..=4 {
            let d = symmetric_delta(6, k, &dense).unwrap();
            let c = symmetric_delta(6, k, &compressed).unwrap();
            assert!(d.lower <= c.upper + 1e-6 && c.lower <= d.upper + 1e-6, "k={k} {d:?} {c:?}");
            assert!((c.upper - c.lower) < 2e-3);
        }
    }

    #[test]
    fn w2_symmetric_equals_enumerated() {
        let cfg = KappaConfig::default();
        let sym = kappa_symmetric_w(2, &cfg).unwrap();
        let en = kappa_enumerated(&w_state(2).unwrap().density(), &cfg).unwrap();
        assert!((sym.lower - en.lower).abs() < 1e-5);
        assert!((sym.upper - en.upper).abs() < 2e-3);
        assert_eq!(en.subset_count(), 1);
    }

    #[test]
    fn product_state_has_zero_kappa() {
        let rho = product_random(3, 7).unwrap().density();
        let est = kappa_enumerated(&rho, &KappaConfig::default()).unwrap();
        assert!(est.upper < 9.0 * 1e-6, "{est:?}");
        assert_eq!(est.subset_count(), nontrivial_subset_count(3));
    }

    #[test]
    fn cat_pairs_only_full_pairs_contribute() {
        let rho = cat_pairs_state(2).unwrap();
        let est = kappa_enumerated(&rho, &KappaConfig::default()).unwrap();
        assert_eq!(est.subsets.len(), 11);
        for s in &est.subsets {
            // Any larger subset splits off a pair or a lone qubit as a product factor.
            if s.subset == [1, 2] || s.subset == [3, 4] {
                assert!(s.lower > 0.99, "{s:?}");
            } else {
                assert!(s.upper < 1e-5, "{s:?}");
            }
        }
    }

    #[test]
    fn tail_bookkeeping() {
        let cfg = KappaConfig { kmax: 4, assume_monotone: false, ..Default::default() };
        let est = kappa_symmetric_w(7, &cfg).unwrap();
        assert_eq!(est.subset_count(), nontrivial_subset_count(7));
        let tail: Vec<_> = est.per_size.iter().filter(|s| s.tail).collect();
        assert_eq!(tail.len(), 3);
        assert!(tail.iter().all(|s| s.delta_lower == 0.0 && s.delta_upper == 2.0));
        assert_eq!(est.lower_zero_tail, Some(est.lower));
        assert!(est.lower_monotone_tail.unwrap() > est.lower);
        let full = kappa_symmetric_w(7, &KappaConfig { kmax: 7, ..Default::default() }).unwrap();
        assert!(est.lower <= full.lower + 1e-6 && full.upper <= est.upper + 1e-6);
        assert!(full.lower <= est.lower_monotone_tail.unwrap() + 1e-6 || full.lower >= est.lower_monotone_tail.unwrap() - 1e-6);
    }

    #[test]
    fn sampled_rejects_few_samples_and_is_seeded() {
        let rho = w_state(4).unwrap().density();
        let cfg = KappaConfig::default();
        assert!(kappa_sampled(&rho, 10, 0, &cfg).is_err());
        let a = kappa_sampled(&rho, 30, 3, &cfg).unwrap();
        let b = kappa_sampled(&rho, 30, 3, &cfg).unwrap();
        assert_eq!(a, b);
        let KappaMethod::Sampled { ci_halfwidth, .. } = a.method else { panic!() };
        assert!(ci_halfwidth > 0.0);
    }

    #[test]
    fn regroup_rules() {
        let rho = cat_pairs_state(2).unwrap();
        let same = regroup(&rho, &groups_from_sizes(&[1, 1, 1, 1])).unwrap();
        assert_eq!(same.layout(), rho.layout());
        let pairs = regroup(&rho, &groups_from_sizes(&[2, 2])).unwrap();
        assert_eq!(pairs.layout().dims(), &[4, 4]);
        assert!(regroup(&rho, &[vec![0, 2], vec![1, 3]]).is_err());
        assert!(regroup(&rho, &groups_from_sizes(&[2, 1])).is_err());
        assert!(regroup(&rho, &groups_from_sizes(&[4])).is_ok());
        let bell = cat_pairs_state(1).unwrap();
        let one = regroup(&bell, &groups_from_sizes(&[2])).unwrap();
        let est = kappa_enumerated(&one, &KappaConfig::default()).unwrap();
        assert_eq!((est.lower, est.upper, est.subsets.len()), (0.0, 0.0, 0));
    }

    #[test]
    fn aligned_pairs_have_zero_kappa() {
        let rho = regroup(&cat_pairs_state(2).unwrap(), &groups_from_sizes(&[2, 2])).unwrap();
        let est = kappa_enumerated(&rho, &KappaConfig::default()).unwrap();
        assert!(est.upper < 1e-4, "{est:?}");
    }

    #[test]
    fn permutation_swaps_product_factors() {
        let a = product_random(1, 1).unwrap().density();
        let b = product_random(1, 2).unwrap().density();
        let ab = tensor(&a, &b).unwrap();
        let ba = permute_qubits(&ab, &[1, 0]).unwrap();
        assert!(trace_distance(&ba, &tensor(&b, &a).unwrap()).unwrap() < 1e-14);
        assert_eq!(permute_qubits(&ab, &[0, 1]).unwrap(), ab);
        assert!(permute_qubits(&ab, &[0, 0]).is_err());
        let p = random_permutation(6, 5);
        assert_eq!(p, random_permutation(6, 5));
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        let marg = partial_trace(&ab, &QubitSubset::new(vec![1], 2).unwrap()).unwrap();
        assert!(trace_distance(&marg, &b).unwrap() < 1e-14);
    }
}
