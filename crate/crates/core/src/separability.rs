//! Certified brackets on the trace-norm distance from a state to the set of
//! states that are separable across some bipartition of its subsystems.
//!
//! Lower bounds come from the PPT relaxation (`Sep ⊆ PPT`), solved by a
//! three-block consensus ADMM whose dual iterates are turned into an explicit
//! witness pair `(W, Q)`: for `‖W‖_∞ ≤ 1` and `Q ⪰ 0`,
//!
//! ```text
//! ‖ρ − σ‖_tr ≥ Tr(Wρ) − λ_max(W + Q^Γ)   for every PPT state σ.
//! ```
//!
//! Upper bounds come from explicit product ensembles built by a see-saw:
//! conditional-gradient steps whose product-state oracle alternates
//! power-iteration updates of the two factors, fully corrective weight
//! solves on the simplex, and a smooth polish of all factors at once.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Scalar};
use crate::optim::{self, LbfgsOptions};
use crate::qstate::{self, random, CMatrix, CVector, DensityMatrix, QubitSubset, SubsystemLayout};

/// Largest subset the solvers accept, in qubits.
pub const MAX_SOLVER_QUBITS: usize = 10;
/// Largest total dimension the solvers accept.
pub const MAX_SOLVER_DIM: usize = 1 << MAX_SOLVER_QUBITS;
/// Residual below which an unconverged PPT run still certifies its bound.
pub const FEASIBILITY_RESIDUAL_TOL: f64 = 1e-6;
/// A bipartition whose lower bound is within this of the best upper bound
/// found so far cannot improve that upper bound by more than this amount.
const SEESAW_SKIP_SLACK: f64 = 1e-6;
/// Restarts stop once the see-saw value is this close to the certified lower bound.
const SEESAW_STOP_GAP: f64 = 5e-5;
const ARGMIN_TIE_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-7, max_iters: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeesawConfig {
    /// Ensemble size cap; `None` means `dim²`.
    pub rank: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        Self { rank: None, restarts: 8, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DeltaConfig {
    pub solver: SolverConfig,
    pub seesaw: SeesawConfig,
}

/// A split `(A, S∖A)` of the subsystems of a state. Canonical form keeps
/// subsystem 0 in `A`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Bipartition {
    a: QubitSubset,
    b: QubitSubset,
    n: usize,
}

impl Bipartition {
    pub fn new(a: QubitSubset, n: usize) -> Result<Self> {
        if a.indices().iter().any(|&i| i >= n) {
            return Err(Error::InvalidBipartition(format!("{a} is not inside {n} subsystems")));
        }
        if a.is_empty() || a.len() == n {
            return Err(Error::InvalidBipartition(format!("{a} leaves one side empty")));
        }
        let b = a.complement(n);
        Ok(if a.contains(0) { Self { a, b, n } } else { Self { a: b, b: a, n } })
    }

    pub fn from_mask(mask: u64, n: usize) -> Result<Self> {
        Self::new(QubitSubset::from_mask(mask, n)?, n)
    }

    /// All `2^{n−1} − 1` canonical bipartitions, ordered lexicographically by `A`.
    pub fn all(n: usize) -> Vec<Bipartition> {
        if n < 2 {
            return Vec::new();
        }
        let full = (1u64 << n) - 1;
        let mut out: Vec<Bipartition> =
            (0..full).filter(|m| m & 1 == 1).map(|m| Self::from_mask(m, n).expect("valid mask")).collect();
        out.sort_by(|x, y| x.a.indices().cmp(y.a.indices()));
        out
    }

    pub fn a(&self) -> &QubitSubset {
        &self.a
    }

    pub fn b(&self) -> &QubitSubset {
        &self.b
    }

    pub fn n_subsystems(&self) -> usize {
        self.n
    }

    /// Subsystem order with `A` first, then `B`.
    pub(crate) fn order(&self) -> Vec<usize> {
        self.a.indices().iter().chain(self.b.indices()).copied().collect()
    }

    fn check_layout(&self, layout: &SubsystemLayout) -> Result<()> {
        if layout.len() != self.n {
            return Err(Error::LayoutMismatch(format!(
                "bipartition of {} subsystems applied to a state with {}",
                self.n,
                layout.len()
            )));
        }
        Ok(())
    }

    fn side_dims(&self, layout: &SubsystemLayout) -> (usize, usize) {
        let d = |s: &QubitSubset| s.indices().iter().map(|&i| layout.dims()[i]).product();
        (d(&self.a), d(&self.b))
    }
}

impl fmt::Display for Bipartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.a, self.b)
    }
}

fn as_real(m: &CMatrix) -> Option<DMatrix<f64>> {
    if m.iter().all(|z| z.im.abs() <= 1e-14) {
        Some(m.map(|z| z.re))
    } else {
        None
    }
}

fn to_complex<T: Scalar>(m: &DMatrix<T>) -> CMatrix {
    m.map(|z| Complex64::new(z.real(), z.imaginary()))
}

// ---------------------------------------------------------------------------
// PPT lower bound
// ---------------------------------------------------------------------------

/// Output of the PPT relaxation for one bipartition.
#[derive(Clone, Debug, Serialize)]
pub struct PptSolution {
    pub bipartition: Bipartition,
    /// `‖ρ − σ‖_tr` at the returned feasible `sigma`.
    pub value: f64,
    /// Certified lower bound from the witness pair; never above `value`.
    pub lower_bound: f64,
    #[serde(skip)]
    pub sigma: CMatrix,
    #[serde(skip)]
    pub witness: CMatrix,
    #[serde(skip)]
    pub multiplier: CMatrix,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

impl PptSolution {
    pub fn gap(&self) -> f64 {
        self.value - self.lower_bound
    }
}

/// `Tr(Wρ) − λ_max(W + Q^Γ)` after clipping `W` into the unit operator-norm
/// ball and `Q` into the PSD cone. A valid lower bound on the distance from
/// `ρ` to every state that is PPT across `bip`.
pub fn ppt_dual_bound(rho: &DensityMatrix, bip: &Bipartition, witness: &CMatrix, multiplier: &CMatrix) -> Result<f64> {
    bip.check_layout(rho.layout())?;
    let (inp, outp) = linalg::split_index_table(rho.layout().dims(), bip.a().indices());
    Ok(dual_bound_with(rho.data(), witness, multiplier, &inp, &outp))
}

fn dual_bound_with<T: Scalar>(rho: &DMatrix<T>, w: &DMatrix<T>, q: &DMatrix<T>, inp: &[usize], outp: &[usize]) -> f64 {
    let (wl, wv) = linalg::eigh(w);
    let w = linalg::reconstruct(&wl, &wv, |x| x.clamp(-1.0, 1.0));
    let (ql, qv) = linalg::eigh(q);
    let q = linalg::reconstruct(&ql, &qv, |x| x.max(0.0));
    let shifted = &w + linalg::partial_transpose_with(&q, inp, outp);
    let top = linalg::eigvalsh(&shifted)[0];
    linalg::hs_inner(&w, rho) - top
}

struct PptCore<T: Scalar> {
    sigma: DMatrix<T>,
    witness: DMatrix<T>,
    multiplier: DMatrix<T>,
    value: f64,
    lower: f64,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    converged: bool,
}

/// Mixes `x` (PSD, unit trace) with the maximally mixed state just enough to
/// make its partial transpose PSD.
fn make_ppt_feasible<T: Scalar>(x: &DMatrix<T>, inp: &[usize], outp: &[usize]) -> DMatrix<T> {
    let d = x.nrows();
    let min_pt = *linalg::eigvalsh(&linalg::partial_transpose_with(x, inp, outp)).last().unwrap();
    if min_pt >= 0.0 {
        return x.clone();
    }
    let e = -min_pt * (1.0 + 1e-12) + 1e-16;
    let s = e * d as f64 / (1.0 + e * d as f64);
    let mut out = x * T::from_real(1.0 - s);
    for i in 0..d {
        out[(i, i)] += T::from_real(s / d as f64);
    }
    out
}

fn ppt_admm<T: Scalar>(rho: &DMatrix<T>, inp: &[usize], outp: &[usize], cfg: &SolverConfig) -> PptCore<T> {
    const CHECK_EVERY: usize = 10;
    let d = rho.nrows();
    let zero = DMatrix::<T>::zeros(d, d);
    let pt = |m: &DMatrix<T>| linalg::partial_transpose_with(m, inp, outp);

    let mut z = rho.clone();
    let (mut u1, mut u2, mut u3) = (zero.clone(), zero.clone(), zero.clone());
    let mut penalty = 4.0;

    let mut best_sigma = make_ppt_feasible(&linalg::hermitize(rho), inp, outp);
    let mut best_value = linalg::trace_norm_of(&(rho - &best_sigma));
    let mut best_lower = f64::NEG_INFINITY;
    let mut best_w = zero.clone();
    let mut best_q = zero.clone();
    let mut last_value = f64::INFINITY;
    let (mut primal_residual, mut dual_residual) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iters.max(1) {
        iterations = it;
        // Proximal step on ‖ρ − x‖_tr: soft-threshold the eigenvalues of ρ − v.
        let e = rho - (&z - &u1);
        let (el, ev) = linalg::eigh(&e);
        let thr = 1.0 / penalty;
        let x1 = rho - linalg::reconstruct(&el, &ev, |x| x.signum() * (x.abs() - thr).max(0.0));
        // Projection onto {σ ⪰ 0, Tr σ = 1}.
        let (vl, vv) = linalg::eigh(&(&z - &u2));
        let projected = linalg::project_simplex(&vl);
        let x2 = {
            let mut m = vv.clone();
            for (c, &p) in projected.iter().enumerate() {
                let s = T::from_real(p);
                m.column_mut(c).iter_mut().for_each(|x| *x *= s);
            }
            m * vv.adjoint()
        };
        // Projection onto {σ^Γ ⪰ 0}.
        let y = pt(&(&z - &u3));
        let (yl, yv) = linalg::eigh(&y);
        let x3 = pt(&linalg::reconstruct(&yl, &yv, |x| x.max(0.0)));

        let z_old = z.clone();
        z = (&x1 + &u1 + &x2 + &u2 + &x3 + &u3) * T::from_real(1.0 / 3.0);
        let r1 = &x1 - &z;
        let r2 = &x2 - &z;
        let r3 = &x3 - &z;
        u1 += &r1;
        u2 += &r2;
        u3 += &r3;
        primal_residual = (r1.norm_squared() + r2.norm_squared() + r3.norm_squared()).sqrt();
        dual_residual = penalty * 3f64.sqrt() * (&z - &z_old).norm();

        if it % CHECK_EVERY == 0 || it == cfg.max_iters {
            // Witness from the prox step, multiplier from the PPT projection.
            let w = linalg::reconstruct(&el, &ev, |x| (penalty * x).clamp(-1.0, 1.0));
            let q = linalg::reconstruct(&yl, &yv, |x| penalty * (-x).max(0.0));
            let lower = dual_bound_with(rho, &w, &q, inp, outp);
            if lower > best_lower {
                best_lower = lower;
                best_w = w;
                best_q = q;
            }
            let sigma = make_ppt_feasible(&x2, inp, outp);
            let value = linalg::trace_norm_of(&(rho - &sigma));
            if value < best_value {
                best_value = value;
                best_sigma = sigma;
            }
            let gap = best_value - best_lower;
            let stalled = (value - last_value).abs() < cfg.tol && primal_residual < FEASIBILITY_RESIDUAL_TOL;
            last_value = value;
            if gap <= cfg.tol || (stalled && gap <= cfg.tol.sqrt()) {
                converged = true;
                break;
            }
        }
        // Residual balancing, frozen late so the fixed-penalty iteration can settle.
        if it % 20 == 0 && it <= 2000 {
            let factor = if primal_residual > 10.0 * dual_residual && penalty < 1e6 {
                2.0
            } else if dual_residual > 10.0 * primal_residual && penalty > 1e-6 {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                penalty *= factor;
                let s = T::from_real(1.0 / factor);
                u1 *= s;
                u2 *= s;
                u3 *= s;
            }
        }
    }
    PptCore {
        sigma: best_sigma,
        witness: best_w,
        multiplier: best_q,
        value: best_value,
        lower: best_lower.max(0.0).min(best_value),
        iterations,
        primal_residual,
        dual_residual,
        converged,
    }
}

/// Minimum trace-norm distance from `rho` to the states that are PPT across
/// `bip`, bracketed by a feasible state and a dual witness.
pub fn ppt_distance(rho: &DensityMatrix, bip: &Bipartition, cfg: &SolverConfig) -> Result<PptSolution> {
    bip.check_layout(rho.layout())?;
    if rho.dim() > MAX_SOLVER_DIM {
        return Err(Error::DimensionCap { dim: rho.dim(), cap: MAX_SOLVER_DIM });
    }
    let (inp, outp) = linalg::split_index_table(rho.layout().dims(), bip.a().indices());
    let solution = match as_real(rho.data()) {
        Some(real) => package(bip, ppt_admm(&real, &inp, &outp, cfg)),
        None => package(bip, ppt_admm(rho.data(), &inp, &outp, cfg)),
    };
    if solution.converged {
        Ok(solution)
    } else {
        Err(Error::NotConverged(Box::new(solution)))
    }
}

fn package<T: Scalar>(bip: &Bipartition, core: PptCore<T>) -> PptSolution {
    PptSolution {
        bipartition: bip.clone(),
        value: core.value,
        lower_bound: core.lower,
        sigma: to_complex(&core.sigma),
        witness: to_complex(&core.witness),
        multiplier: to_complex(&core.multiplier),
        iterations: core.iterations,
        primal_residual: core.primal_residual,
        dual_residual: core.dual_residual,
        converged: core.converged,
    }
}

// ---------------------------------------------------------------------------
// See-saw upper bound
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ProductTerm {
    pub weight: f64,
    /// Unit vector on the `A` subsystems (increasing index order).
    #[serde(skip)]
    pub a: CVector,
    /// Unit vector on the `B` subsystems (increasing index order).
    #[serde(skip)]
    pub b: CVector,
}

/// Explicit separable state `Σ_i p_i |a_i⟩⟨a_i| ⊗ |b_i⟩⟨b_i|` across a bipartition.
#[derive(Clone, Debug, Serialize)]
pub struct SeparableEnsemble {
    pub bipartition: Bipartition,
    pub layout: SubsystemLayout,
    pub terms: Vec<ProductTerm>,
}

impl SeparableEnsemble {
    /// Checks weights form a distribution and every factor is a unit vector.
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.terms.iter().map(|t| t.weight).sum();
        if self.terms.iter().any(|t| t.weight < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("ensemble weights sum to {total}")));
        }
        for t in &self.terms {
            for v in [&t.a, &t.b] {
                let norm = v.norm();
                if (norm - 1.0).abs() > 1e-10 {
                    return Err(Error::NotNormalized { norm });
                }
            }
        }
        Ok(())
    }

    /// The ensemble state in the subsystem order of the original layout.
    pub fn density(&self) -> DensityMatrix {
        let table = linalg::reorder_table(self.layout.dims(), &self.bipartition.order());
        let d = self.layout.total_dim();
        let mut data = CMatrix::zeros(d, d);
        for t in &self.terms {
            let local = t.a.kronecker(&t.b);
            let mut v = CVector::zeros(d);
            for (new_idx, &old_idx) in table.iter().enumerate() {
                v[old_idx] = local[new_idx];
            }
            data += (&v * v.adjoint()).scale(t.weight);
        }
        DensityMatrix::from_parts(self.layout.clone(), data)
    }
}

/// Warm start for the see-saw: a PPT-feasible state to imitate and the
/// certified lower bound, used to stop early.
pub(crate) struct SeesawHint<'a> {
    pub target: &'a CMatrix,
    pub lower: f64,
}

#[derive(Clone)]
struct Atoms {
    da: usize,
    db: usize,
    weights: Vec<f64>,
    a: Vec<CVector>,
    b: Vec<CVector>,
}

impl Atoms {
    fn new(da: usize, db: usize) -> Self {
        Self { da, db, weights: Vec::new(), a: Vec::new(), b: Vec::new() }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn vector(&self, i: usize) -> CVector {
        self.a[i].kronecker(&self.b[i])
    }

    fn density(&self) -> CMatrix {
        let d = self.da * self.db;
        let mut v = CMatrix::zeros(d, self.len());
        for i in 0..self.len() {
            v.set_column(i, &self.vector(i).scale(self.weights[i].sqrt()));
        }
        &v * v.adjoint()
    }

    fn prune(&mut self, cap: usize) {
        let mut order: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 1e-14).collect();
        order.sort_by(|&i, &j| self.weights[j].total_cmp(&self.weights[i]));
        order.truncate(cap.max(1));
        order.sort_unstable();
        let total: f64 = order.iter().map(|&i| self.weights[i]).sum();
        self.weights = order.iter().map(|&i| self.weights[i] / total).collect();
        self.a = order.iter().map(|&i| self.a[i].clone()).collect();
        self.b = order.iter().map(|&i| self.b[i].clone()).collect();
    }
}

/// `(a† ⊗ I) G (a ⊗ I)`.
fn contract_a(g: &CMatrix, a: &CVector, db: usize) -> CMatrix {
    let da = a.len();
    CMatrix::from_fn(db, db, |k, l| {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..da {
            let ai = a[i].conj();
            if ai == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..da {
                acc += ai * a[j] * g[(i * db + k, j * db + l)];
            }
        }
        acc
    })
}

/// `(I ⊗ b†) G (I ⊗ b)`.
fn contract_b(g: &CMatrix, b: &CVector, da: usize) -> CMatrix {
    let db = b.len();
    CMatrix::from_fn(da, da, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..db {
            let bk = b[k].conj();
            if bk == Complex64::new(0.0, 0.0) {
                continue;
            }
            for l in 0..db {
                acc += bk * b[l] * g[(i * db + k, j * db + l)];
            }
        }
        acc
    })
}

fn expectation(g: &CMatrix, v: &CVector) -> f64 {
    (v.adjoint() * g * v)[(0, 0)].re
}

/// Product vector approximately maximizing `⟨a⊗b|G|a⊗b⟩` by alternating
/// top-eigenvector updates of each factor from several starts.
fn product_oracle(g: &CMatrix, da: usize, db: usize, rng: &mut ChaCha8Rng, random_starts: usize) -> (f64, CVector, CVector) {
    let mut starts = Vec::with_capacity(random_starts + 1);
    // Best rank-one approximation of the top eigenvector, reshaped to da × db.
    let (_, top) = linalg::top_eigvec(g);
    let reshaped = CMatrix::from_fn(da, db, |i, k| top[i * db + k]);
    let svd = reshaped.svd(true, false);
    let best_sv = (0..svd.singular_values.len()).max_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    if let (Some(u), Some(c)) = (svd.u.as_ref(), best_sv) {
        starts.push(u.column(c).into_owned());
    }
    for _ in 0..random_starts {
        starts.push(random::unit_vector(da, rng));
    }
    let mut best: Option<(f64, CVector, CVector)> = None;
    for mut a in starts {
        let norm = a.norm();
        if norm == 0.0 {
            continue;
        }
        a.unscale_mut(norm);
        let (value, a, b) = ascend_product(g, a, da, db, 60);
        if best.as_ref().is_none_or(|(bv, _, _)| value > *bv) {
            best = Some((value, a, b));
        }
    }
    best.expect("at least one oracle start")
}

fn ascend_product(g: &CMatrix, mut a: CVector, da: usize, db: usize, iters: usize) -> (f64, CVector, CVector) {
    let mut b = linalg::top_eigvec(&contract_a(g, &a, db)).1;
    let mut value = f64::NEG_INFINITY;
    for _ in 0..iters {
        a = linalg::top_eigvec(&contract_b(g, &b, da)).1;
        let (v, b_next) = linalg::top_eigvec(&contract_a(g, &a, db));
        b = b_next;
        if v - value < 1e-10 * v.abs().max(1e-3) {
            value = value.max(v);
            break;
        }
        value = v;
    }
    (value, a, b)
}

/// Product vectors lying in the range of a low-rank `target`, weighted by a
/// least-squares fit. For generic separable states these are the terms.
fn range_product_fit(target: &CMatrix, rank: usize, da: usize, db: usize, rng: &mut ChaCha8Rng) -> Option<Atoms> {
    let d = da * db;
    if rank >= d {
        return None;
    }
    let (_, vecs) = linalg::eigh(target);
    let span = vecs.columns(0, rank);
    let proj = &span * span.adjoint();
    let mut atoms = Atoms::new(da, db);
    for _ in 0..6 * rank + 6 {
        let (value, a, b) = ascend_product(&proj, random::unit_vector(da, rng), da, db, 500);
        if value < 1.0 - 1e-4 {
            continue;
        }
        let v = a.kronecker(&b);
        if (0..atoms.len()).any(|i| atoms.vector(i).dotc(&v).norm() > 1.0 - 1e-6) {
            continue;
        }
        atoms.a.push(a);
        atoms.b.push(b);
        atoms.weights.push(1.0);
    }
    if atoms.len() == 0 {
        return None;
    }
    let m = atoms.len();
    let vecs: Vec<CVector> = (0..m).map(|i| atoms.vector(i)).collect();
    let q: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| vecs[i].dotc(&vecs[j]).norm_sqr()).collect()).collect();
    let c: Vec<f64> = vecs.iter().map(|v| expectation(target, v)).collect();
    let mut w = vec![1.0 / m as f64; m];
    optim::simplex_qp(&q, &c, &mut w, 2000);
    atoms.weights = w;
    atoms.prune(m);
    Some(polish_hilbert_schmidt(target, &atoms))
}

/// Conditional-gradient fit of `target` in Hilbert–Schmidt norm.
fn fit_by_conditional_gradient(target: &CMatrix, atoms: &mut Atoms, rng: &mut ChaCha8Rng, cap: usize, iters: usize) {
    let (da, db) = (atoms.da, atoms.db);
    for _ in 0..iters {
        let sigma = if atoms.len() == 0 { CMatrix::zeros(da * db, da * db) } else { atoms.density() };
        let g = target - &sigma;
        if atoms.len() > 0 && g.norm() < 1e-11 {
            break;
        }
        let (value, a, b) = product_oracle(&g, da, db, rng, 1);
        let current: f64 = linalg::hs_inner(&sigma, &g);
        if atoms.len() > 0 && value - current < 1e-13 {
            break;
        }
        atoms.a.push(a);
        atoms.b.push(b);
        atoms.weights.push(if atoms.len() == 0 { 1.0 } else { 0.0 });
        // Fully corrective weights over the active set.
        let m = atoms.len();
        let vecs: Vec<CVector> = (0..m).map(|i| atoms.vector(i)).collect();
        let q: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| vecs[i].dotc(&vecs[j]).norm_sqr()).collect())
            .collect();
        let c: Vec<f64> = vecs.iter().map(|v| expectation(target, v)).collect();
        let mut w = atoms.weights.clone();
        optim::simplex_qp(&q, &c, &mut w, 200);
        atoms.weights = w;
        atoms.prune(cap);
    }
}

/// Packs atoms as unnormalized factors `x_i = √p_i a_i`, `y_i = b_i`.
fn pack(atoms: &Atoms) -> Vec<f64> {
    let mut p = Vec::with_capacity(2 * atoms.len() * (atoms.da + atoms.db));
    for i in 0..atoms.len() {
        let s = atoms.weights[i].sqrt();
        for z in atoms.a[i].iter() {
            p.push(z.re * s);
            p.push(z.im * s);
        }
        for z in atoms.b[i].iter() {
            p.push(z.re);
            p.push(z.im);
        }
    }
    p
}

fn unpack_vectors(p: &[f64], m: usize, da: usize, db: usize) -> Vec<(CVector, CVector)> {
    let stride = 2 * (da + db);
    (0..m)
        .map(|i| {
            let base = &p[i * stride..(i + 1) * stride];
            let x = CVector::from_fn(da, |j, _| Complex64::new(base[2 * j], base[2 * j + 1]));
            let y = CVector::from_fn(db, |k, _| Complex64::new(base[2 * da + 2 * k], base[2 * da + 2 * k + 1]));
            (x, y)
        })
        .collect()
}

fn unpack(p: &[f64], m: usize, da: usize, db: usize) -> Atoms {
    let mut atoms = Atoms::new(da, db);
    for (x, y) in unpack_vectors(p, m, da, db) {
        let (nx, ny) = (x.norm(), y.norm());
        let w = nx * nx * ny * ny;
        if w <= 0.0 || !w.is_finite() {
            continue;
        }
        atoms.weights.push(w);
        atoms.a.push(x.unscale(nx));
        atoms.b.push(y.unscale(ny));
    }
    let total: f64 = atoms.weights.iter().sum();
    atoms.weights.iter_mut().for_each(|w| *w /= total);
    atoms
}

/// `S = Σ (x_i x_i†) ⊗ (y_i y_i†)` and the stacked product vectors.
fn unnormalized_state(factors: &[(CVector, CVector)], d: usize) -> (CMatrix, CMatrix) {
    let mut v = CMatrix::zeros(d, factors.len());
    for (i, (x, y)) in factors.iter().enumerate() {
        v.set_column(i, &x.kronecker(y));
    }
    (&v * v.adjoint(), v)
}

/// Writes the parameter gradient of a smooth `f(S)` with `df = Re Tr(M dS)`.
fn factor_gradient(m: &CMatrix, v: &CMatrix, factors: &[(CVector, CVector)], grad: &mut [f64]) {
    let mv = m * v;
    let (da, db) = (factors[0].0.len(), factors[0].1.len());
    let stride = 2 * (da + db);
    for (i, (x, y)) in factors.iter().enumerate() {
        let w = mv.column(i);
        let g = &mut grad[i * stride..(i + 1) * stride];
        for j in 0..da {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..db {
                acc += y[k].conj() * w[j * db + k];
            }
            g[2 * j] = 2.0 * acc.re;
            g[2 * j + 1] = 2.0 * acc.im;
        }
        for k in 0..db {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..da {
                acc += x[j].conj() * w[j * db + k];
            }
            g[2 * da + 2 * k] = 2.0 * acc.re;
            g[2 * da + 2 * k + 1] = 2.0 * acc.im;
        }
    }
}

/// Joint least-squares polish of all factors against `target`.
fn polish_hilbert_schmidt(target: &CMatrix, atoms: &Atoms) -> Atoms {
    let (m, da, db) = (atoms.len(), atoms.da, atoms.db);
    let d = da * db;
    let mut p = pack(atoms);
    let opts = LbfgsOptions { max_iters: 400, ..Default::default() };
    optim::lbfgs(&mut p, &opts, |params, grad| {
        let factors = unpack_vectors(params, m, da, db);
        let (s, v) = unnormalized_state(&factors, d);
        let e = &s - target;
        factor_gradient(&(&e * Complex64::new(2.0, 0.0)), &v, &factors, grad);
        e.norm_squared()
    });
    unpack(&p, m, da, db)
}

/// Redundant atoms make the factor fit singular and slow. Retries with
/// `rank(target) + j` atoms, the heaviest ones and a few weight-sampled
/// subsets, and keeps the closest fit.
fn compact_fit(target: &CMatrix, atoms: Atoms, rng: &mut ChaCha8Rng) -> Atoms {
    let vals = linalg::eigvalsh(target);
    let top = vals.iter().copied().fold(0.0, f64::max);
    let rank = vals.iter().filter(|&&v| v > 1e-9 * top.max(1e-300)).count().max(1);
    let residual = |a: &Atoms| (target - a.density()).norm();
    let mut best_res = residual(&atoms);
    let mut best = atoms.clone();
    if let Some(fit) = range_product_fit(target, rank, atoms.da, atoms.db, rng) {
        let r = residual(&fit);
        if r < best_res {
            best_res = r;
            best = fit;
        }
    }
    for m in rank..(rank + 3).min(atoms.len()) {
        for attempt in 0..8 {
            if best_res < 1e-12 {
                return best;
            }
            let mut trial = atoms.clone();
            if attempt == 0 {
                trial.prune(m);
            } else {
                let mut keep: Vec<usize> = Vec::with_capacity(m);
                let dist = rand::distr::weighted::WeightedIndex::new(&atoms.weights).expect("positive weights");
                while keep.len() < m {
                    let i = rng.sample(&dist);
                    if !keep.contains(&i) {
                        keep.push(i);
                    }
                }
                keep.sort_unstable();
                trial.weights = keep.iter().map(|&i| atoms.weights[i]).collect();
                trial.a = keep.iter().map(|&i| atoms.a[i].clone()).collect();
                trial.b = keep.iter().map(|&i| atoms.b[i].clone()).collect();
            }
            let trial = polish_hilbert_schmidt(target, &trial);
            let r = residual(&trial);
            if r < best_res {
                best_res = r;
                best = trial;
            }
        }
    }
    best
}

/// Descends a smoothed trace norm `Σ √(λ² + μ²)` of `ρ − S/Tr S` over the factors.
fn refine_trace_norm(rho: &CMatrix, atoms: &Atoms, mu: f64, iters: usize) -> Atoms {
    let (m, da, db) = (atoms.len(), atoms.da, atoms.db);
    let d = da * db;
    let mut p = pack(atoms);
    let opts = LbfgsOptions { max_iters: iters, ..Default::default() };
    optim::lbfgs(&mut p, &opts, |params, grad| {
        let factors = unpack_vectors(params, m, da, db);
        let (s, v) = unnormalized_state(&factors, d);
        let t = linalg::trace_re(&s);
        if !(t > 0.0) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return f64::INFINITY;
        }
        let x = rho - s.unscale(t);
        let (vals, vecs) = linalg::eigh(&x);
        let value: f64 = vals.iter().map(|l| (l * l + mu * mu).sqrt() - mu).sum();
        let phi = linalg::reconstruct(&vals, &vecs, |l| l / (l * l + mu * mu).sqrt());
        let coupling = linalg::hs_inner(&phi, &s) / (t * t);
        let mut mgrad = phi.unscale(-t);
        for i in 0..d {
            mgrad[(i, i)] += Complex64::new(coupling, 0.0);
        }
        factor_gradient(&mgrad, &v, &factors, grad);
        value
    });
    unpack(&p, m, da, db)
}

fn objective(rho: &CMatrix, atoms: &Atoms) -> f64 {
    linalg::trace_norm_of(&(rho - atoms.density()))
}

/// Best separable approximation found by the see-saw, as
/// `(‖ρ − σ‖_tr, σ)` with `σ` an explicit product ensemble.
pub fn seesaw_upper(rho: &DensityMatrix, bip: &Bipartition, cfg: &SeesawConfig) -> Result<(f64, SeparableEnsemble)> {
    seesaw_with_hint(rho, bip, cfg, None)
}

pub(crate) fn seesaw_with_hint(
    rho: &DensityMatrix,
    bip: &Bipartition,
    cfg: &SeesawConfig,
    hint: Option<&SeesawHint<'_>>,
) -> Result<(f64, SeparableEnsemble)> {
    bip.check_layout(rho.layout())?;
    let layout = rho.layout();
    let (da, db) = bip.side_dims(layout);
    let d = da * db;
    let cap = cfg.rank.unwrap_or(d * d).max(1);
    let table = linalg::reorder_table(layout.dims(), &bip.order());
    let rho_p = linalg::permute_matrix(rho.data(), &table);
    let hint_p = hint.map(|h| (linalg::permute_matrix(h.target, &table), h.lower));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best: Option<(f64, Atoms)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let target = match &hint_p {
            Some((t, _)) if restart % 2 == 0 => t,
            _ => &rho_p,
        };
        let mut atoms = Atoms::new(da, db);
        let mut run_rng = ChaCha8Rng::seed_from_u64(rng.random());
        fit_by_conditional_gradient(target, &mut atoms, &mut run_rng, cap, 2 * d + 20);
        atoms = polish_hilbert_schmidt(target, &atoms);
        atoms.prune(cap);
        atoms = compact_fit(target, atoms, &mut run_rng);
        let mut value = objective(&rho_p, &atoms);
        let floor = hint_p.as_ref().map_or(0.0, |(_, l)| *l);
        if value > floor + 1e-9 {
            for mu in [1e-3, 1e-4, 1e-5, 1e-6] {
                let refined = refine_trace_norm(&rho_p, &atoms, mu, 300);
                let v = objective(&rho_p, &refined);
                if v < value {
                    value = v;
                    atoms = refined;
                }
            }
        }
        if best.as_ref().is_none_or(|(bv, _)| value < *bv) {
            best = Some((value, atoms));
        }
        let best_value = best.as_ref().map(|(v, _)| *v).unwrap();
        if best_value < 1e-12 || best_value <= floor + SEESAW_STOP_GAP {
            break;
        }
    }
    let (_, atoms) = best.expect("at least one restart");
    let terms = (0..atoms.len())
        .map(|i| ProductTerm { weight: atoms.weights[i], a: atoms.a[i].clone(), b: atoms.b[i].clone() })
        .collect();
    let ensemble = SeparableEnsemble { bipartition: bip.clone(), layout: layout.clone(), terms };
    // Report the distance exactly as a verifier would recompute it.
    let value = qstate::trace_distance(rho, &ensemble.density())?;
    Ok((value, ensemble))
}

// ---------------------------------------------------------------------------
// Δ: minimum over bipartitions
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct BipartitionBounds {
    pub bipartition: Bipartition,
    pub lower: f64,
    /// `None` when the see-saw was skipped because `lower` already exceeds
    /// the best upper bound of another bipartition.
    pub upper: Option<f64>,
    pub ppt_value: f64,
    pub iterations: usize,
    /// Set when the PPT solve neither converged nor reached a small
    /// feasibility residual. `lower` is still the certified dual bound.
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SepDistanceBounds {
    pub lower: f64,
    pub upper: f64,
    /// Bipartition attaining `upper` (ties: lexicographically smallest `A`).
    pub bipartition_argmin: Bipartition,
    pub lower_certificate: PptSolution,
    pub upper_certificate: SeparableEnsemble,
    pub per_bipartition: Vec<BipartitionBounds>,
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct CertificateCheck {
    /// `max(0, lower − upper)`.
    pub sandwich_violation: f64,
    /// `|‖ρ − σ_ens‖_tr − upper|`, recomputed.
    pub upper_deviation: f64,
    /// `|dual bound − lower|`, recomputed from the witness pair.
    pub lower_deviation: f64,
    /// Smallest eigenvalue of the partial transpose of the PPT certificate state.
    pub ppt_min_eigenvalue: f64,
}

impl CertificateCheck {
    pub fn passes(&self) -> bool {
        self.sandwich_violation <= 1e-6
            && self.upper_deviation <= 1e-8
            && self.lower_deviation <= 1e-8
            && self.ppt_min_eigenvalue >= -qstate::PSD_SLACK
    }
}

impl SepDistanceBounds {
    /// Recomputes both certificates against `rho` independently of the solvers.
    pub fn verify(&self, rho: &DensityMatrix) -> Result<CertificateCheck> {
        self.upper_certificate.validate()?;
        let sigma = self.upper_certificate.density();
        let upper_deviation = (qstate::trace_distance(rho, &sigma)? - self.upper).abs();
        let cert = &self.lower_certificate;
        let recomputed = ppt_dual_bound(rho, &cert.bipartition, &cert.witness, &cert.multiplier)?.max(0.0);
        let lower_deviation = (recomputed.min(cert.value) - self.lower).abs();
        let pt = qstate::partial_transpose(&cert.sigma, rho.layout(), cert.bipartition.a());
        let ppt_min_eigenvalue = *linalg::eigvalsh(&pt).last().unwrap_or(&0.0);
        Ok(CertificateCheck {
            sandwich_violation: (self.lower - self.upper).max(0.0),
            upper_deviation,
            lower_deviation,
            ppt_min_eigenvalue,
        })
    }
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix_seed(seed, salt)
}

/// An unconverged solve still carries a valid dual certificate, so its
/// lower bound is kept; the bipartition is flagged when the iterate is also
/// far from feasible.
fn ppt_with_policy(rho: &DensityMatrix, bip: &Bipartition, cfg: &SolverConfig) -> Result<(PptSolution, f64, bool)> {
    match ppt_distance(rho, bip, cfg) {
        Ok(sol) => {
            let lower = sol.lower_bound;
            Ok((sol, lower, false))
        }
        Err(Error::NotConverged(sol)) => {
            let flagged = sol.primal_residual >= FEASIBILITY_RESIDUAL_TOL;
            let lower = sol.lower_bound;
            Ok((*sol, lower, flagged))
        }
        Err(e) => Err(e),
    }
}

/// `Δ(ρ_S)`: brackets the minimum over all canonical bipartitions.
pub fn delta(rho_s: &DensityMatrix, cfg: &DeltaConfig) -> Result<SepDistanceBounds> {
    let n = rho_s.layout().len();
    if n < 2 {
        return Err(Error::SubsetTooSmall { size: n });
    }
    delta_over(rho_s, &Bipartition::all(n), cfg)
}

/// [`delta`] restricted to the given bipartitions (e.g. one representative per
/// symmetry class of a permutation-invariant state).
pub fn delta_over(rho_s: &DensityMatrix, bips: &[Bipartition], cfg: &DeltaConfig) -> Result<SepDistanceBounds> {
    let n = rho_s.layout().len();
    if n < 2 {
        return Err(Error::SubsetTooSmall { size: n });
    }
    if bips.is_empty() {
        return Err(Error::InvalidBipartition("no bipartitions given".into()));
    }
    if rho_s.dim() > MAX_SOLVER_DIM {
        return Err(Error::DimensionCap { dim: rho_s.dim(), cap: MAX_SOLVER_DIM });
    }
    let lowers: Vec<(PptSolution, f64, bool)> =
        bips.par_iter().map(|bip| ppt_with_policy(rho_s, bip, &cfg.solver)).collect::<Result<_>>()?;

    // See-saw in order of increasing lower bound; a bipartition whose lower
    // bound exceeds the best upper bound so far cannot attain the minimum.
    let mut visit: Vec<usize> = (0..bips.len()).collect();
    visit.sort_by(|&i, &j| lowers[i].1.total_cmp(&lowers[j].1).then(i.cmp(&j)));
    let mut uppers: Vec<Option<(f64, SeparableEnsemble)>> = vec![None; bips.len()];
    let mut best_upper = f64::INFINITY;
    let run_seesaw = |i: usize| {
        let seesaw = SeesawConfig { seed: mix_seed(cfg.seesaw.seed, bips[i].a().mask()), ..cfg.seesaw.clone() };
        let hint = SeesawHint { target: &lowers[i].0.sigma, lower: lowers[i].1 };
        seesaw_with_hint(rho_s, &bips[i], &seesaw, Some(&hint))
    };
    for &i in &visit {
        if lowers[i].1 > best_upper - SEESAW_SKIP_SLACK {
            continue;
        }
        let (value, ensemble) = run_seesaw(i)?;
        best_upper = best_upper.min(value);
        uppers[i] = Some((value, ensemble));
    }
    // An earlier bipartition skipped above may still tie with the best one.
    if let Some(j) = (0..bips.len()).find(|&j| lowers[j].1 <= best_upper + ARGMIN_TIE_TOL) {
        if uppers[j].is_none() {
            uppers[j] = Some(run_seesaw(j)?);
        }
    }

    // Near-equal values count as ties, resolved by canonical order.
    let upper_of = |i: usize| uppers[i].as_ref().map_or(f64::INFINITY, |u| u.0);
    let best = (0..bips.len()).map(upper_of).fold(f64::INFINITY, f64::min);
    let upper_idx = (0..bips.len()).find(|&i| upper_of(i) <= best + ARGMIN_TIE_TOL).expect("at least one see-saw run");
    let lower_idx =
        (0..bips.len()).min_by(|&i, &j| lowers[i].1.total_cmp(&lowers[j].1).then(i.cmp(&j))).expect("nonempty");

    let per_bipartition = bips
        .iter()
        .enumerate()
        .map(|(i, bip)| BipartitionBounds {
            bipartition: bip.clone(),
            lower: lowers[i].1,
            upper: uppers[i].as_ref().map(|u| u.0),
            ppt_value: lowers[i].0.value,
            iterations: lowers[i].0.iterations,
            flagged: lowers[i].2,
        })
        .collect();
    let flagged = lowers.iter().any(|l| l.2);
    let lower = lowers[lower_idx].1;
    let (upper, upper_certificate) = uppers[upper_idx].take().unwrap();
    let lower_certificate = lowers.into_iter().nth(lower_idx).unwrap().0;
    Ok(SepDistanceBounds {
        lower,
        upper,
        bipartition_argmin: bips[upper_idx].clone(),
        lower_certificate,
        upper_certificate,
        per_bipartition,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{tensor, PureState};
    use crate::wstates::{w_reduced, w_state};

    fn bell() -> DensityMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        let v = CVector::from_vec(vec![Complex64::new(s, 0.0), z, z, Complex64::new(s, 0.0)]);
        PureState::new(SubsystemLayout::qubits(2).unwrap(), v).unwrap().density()
    }

    #[test]
    fn canonical_bipartitions() {
        let all = Bipartition::all(3);
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|b| b.a().contains(0)));
        assert_eq!(all[0].to_string(), "{1}|{2,3}");
        assert_eq!(Bipartition::all(4).len(), 7);
        assert!(Bipartition::all(1).is_empty());
        let swapped = Bipartition::new(QubitSubset::new(vec![1, 2], 3).unwrap(), 3).unwrap();
        assert_eq!(swapped.a().indices(), &[0]);
        assert!(Bipartition::new(QubitSubset::all(3), 3).is_err());
        assert!(Bipartition::new(QubitSubset::new(vec![], 3).unwrap(), 3).is_err());
    }

    #[test]
    fn product_state_has_zero_ppt_distance() {
        let l = SubsystemLayout::qubits(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random::density_matrix(l.clone(), 2, &mut rng);
        let b = random::density_matrix(l, 2, &mut rng);
        let rho = tensor(&a, &b).unwrap();
        let bip = &Bipartition::all(2)[0];
        let sol = ppt_distance(&rho, bip, &SolverConfig::default()).unwrap();
        assert!(sol.value < 1e-6, "{}", sol.value);
        assert!(sol.lower_bound <= sol.value);
    }

    #[test]
    fn bell_distance_is_one() {
        // d(Φ_d, Sep) = 2(1 − 1/d) in the Tr|·| convention; d = 2 gives 1.
        let bip = &Bipartition::all(2)[0];
        let sol = ppt_distance(&bell(), bip, &SolverConfig::default()).unwrap();
        assert!((sol.lower_bound - 1.0).abs() < 1e-5, "{sol:?}");
        assert!((sol.value - 1.0).abs() < 1e-5);
        let (upper, ens) = seesaw_upper(&bell(), bip, &SeesawConfig::default()).unwrap();
        assert!((upper - 1.0).abs() < 2e-3, "{upper}");
        ens.validate().unwrap();
    }

    #[test]
    fn seesaw_recovers_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = SubsystemLayout::qubits(1).unwrap();
        let a = random::pure_state(l.clone(), &mut rng).density();
        let b = random::pure_state(l, &mut rng).density();
        let rho = tensor(&a, &b).unwrap();
        let (v, ens) = seesaw_upper(&rho, &Bipartition::all(2)[0], &SeesawConfig::default()).unwrap();
        assert!(v < 1e-7, "{v}");
        assert_eq!(ens.terms.len(), 1);
    }

    #[test]
    fn delta_rejects_single_subsystem() {
        let rho = DensityMatrix::maximally_mixed(SubsystemLayout::qubits(1).unwrap());
        assert!(matches!(delta(&rho, &DeltaConfig::default()), Err(Error::SubsetTooSmall { size: 1 })));
    }

    #[test]
    fn w_reduced_sandwich_and_certificates() {
        let rho = w_reduced(4, 2).unwrap();
        let bounds = delta(&rho, &DeltaConfig::default()).unwrap();
        assert!(bounds.lower > 0.0 && bounds.upper < 1.0);
        assert!(bounds.upper - bounds.lower < 2e-3);
        let check = bounds.verify(&rho).unwrap();
        assert!(check.passes(), "{check:?}");
    }

    #[test]
    fn w3_bounds_are_ordered() {
        let rho = w_state(3).unwrap().density();
        let bounds = delta(&rho, &DeltaConfig::default()).unwrap();
        assert!(bounds.lower <= bounds.upper + 1e-6);
        assert!(bounds.lower > 0.1);
        for b in &bounds.per_bipartition {
            if let Some(u) = b.upper {
                assert!(b.lower <= u + 1e-6);
            }
        }
    }
}
