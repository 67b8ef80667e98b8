//! Dense states over a declared subsystem layout.
//!
//! Subsystem indices are 0-based throughout the library. User-facing text
//! (CLI configs, `Display` of subsets) is 1-based.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default cap on the total Hilbert-space dimension (12 qubits).
pub const DEFAULT_DIM_CAP: usize = 4096;

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues down to `-PSD_SLACK` are accepted as numerical noise.
pub const PSD_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SubsystemLayout {
    dims: Vec<usize>,
}

impl SubsystemLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        Self::with_cap(dims, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(dims: Vec<usize>, cap: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidLayout("no subsystems".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidLayout(format!("local dimension {d} < 2")));
        }
        let mut total: usize = 1;
        for &d in &dims {
            total = total.saturating_mul(d);
        }
        if total > cap {
            return Err(Error::DimensionCap { dim: total, cap });
        }
        Ok(Self { dims })
    }

    pub fn qubits(n: usize) -> Result<Self> {
        if n > usize::BITS as usize - 2 {
            return Err(Error::DimensionCap { dim: usize::MAX, cap: DEFAULT_DIM_CAP });
        }
        Self::new(vec![2; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of subsystems.
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_qubits(&self) -> bool {
        self.dims.iter().all(|&d| d == 2)
    }

    pub fn restrict(&self, subset: &QubitSubset) -> SubsystemLayout {
        SubsystemLayout { dims: subset.indices().iter().map(|&i| self.dims[i]).collect() }
    }

    pub(crate) fn concat(&self, other: &SubsystemLayout) -> Result<SubsystemLayout> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        SubsystemLayout::new(dims)
    }
}

/// Strictly increasing set of subsystem indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct QubitSubset {
    indices: Vec<usize>,
}

impl QubitSubset {
    /// Builds a subset of `0..n_subsystems`. Input order does not matter.
    pub fn new(mut indices: Vec<usize>, n_subsystems: usize) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateIndex(w[0]));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= n_subsystems {
                return Err(Error::IndexOutOfRange { index: last, len: n_subsystems });
            }
        }
        Ok(Self { indices })
    }

    pub fn from_one_based(indices: &[usize], n_subsystems: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::IndexOutOfRange { index: 0, len: n_subsystems });
        }
        Self::new(indices.iter().map(|i| i - 1).collect(), n_subsystems)
    }

    /// Subset whose members are the set bits of `mask` (bit `i` is subsystem `i`).
    pub fn from_mask(mask: u64, n_subsystems: usize) -> Result<Self> {
        let indices = (0..64).filter(|b| mask >> b & 1 == 1).collect();
        Self::new(indices, n_subsystems)
    }

    pub fn all(n_subsystems: usize) -> Self {
        Self { indices: (0..n_subsystems).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn mask(&self) -> u64 {
        self.indices.iter().fold(0, |m, &i| m | 1 << i)
    }

    pub fn complement(&self, n_subsystems: usize) -> QubitSubset {
        QubitSubset { indices: (0..n_subsystems).filter(|&i| !self.contains(i)).collect() }
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }
}

impl fmt::Display for QubitSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_one_based().iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

#[derive(Clone, Debug)]
pub struct PureState {
    layout: SubsystemLayout,
    amplitudes: CVector,
}

impl PureState {
    pub fn new(layout: SubsystemLayout, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::LayoutMismatch(format!(
                "{} amplitudes for dimension {}",
                amplitudes.len(),
                layout.total_dim()
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { layout, amplitudes })
    }

    /// Normalizes `amplitudes` before validating.
    pub fn normalized(layout: SubsystemLayout, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::NotNormalized { norm });
        }
        Self::new(layout, amplitudes.unscale(norm))
    }

    pub fn basis(layout: SubsystemLayout, index: usize) -> Result<Self> {
        let dim = layout.total_dim();
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, len: dim });
        }
        let mut amplitudes = CVector::zeros(dim);
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, amplitudes })
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn density(&self) -> DensityMatrix {
        let data = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix::from_parts(self.layout.clone(), data)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    layout: SubsystemLayout,
    data: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity before accepting `data`.
    pub fn new(layout: SubsystemLayout, data: CMatrix) -> Result<Self> {
        let rho = Self { layout, data };
        rho.validate()?;
        Ok(rho)
    }

    /// For results of operations that preserve the invariants by construction.
    pub(crate) fn from_parts(layout: SubsystemLayout, data: CMatrix) -> Self {
        debug_assert_eq!(layout.total_dim(), data.nrows());
        Self { layout, data }
    }

    pub fn maximally_mixed(layout: SubsystemLayout) -> Self {
        let d = layout.total_dim();
        let data = CMatrix::identity(d, d).unscale(d as f64);
        Self { layout, data }
    }

    /// Convex combination `Σ w_i ρ_i` of states on the same layout.
    pub fn mixture(terms: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let layout = first.1.layout.clone();
        let d = layout.total_dim();
        let mut data = CMatrix::zeros(d, d);
        let mut total = 0.0;
        for (w, rho) in terms {
            if rho.layout != layout {
                return Err(Error::LayoutMismatch("mixture of states on different layouts".into()));
            }
            if *w < 0.0 {
                return Err(Error::OutOfRange { name: "mixture weight", value: *w, range: "[0, inf)" });
            }
            data += rho.data.scale(*w);
            total += w;
        }
        if (total - 1.0).abs() > TRACE_TOL {
            return Err(Error::BadTrace { trace: total });
        }
        Ok(Self { layout, data })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.layout.total_dim();
        if self.data.nrows() != d || self.data.ncols() != d {
            return Err(Error::LayoutMismatch(format!(
                "{}x{} matrix for dimension {d}",
                self.data.nrows(),
                self.data.ncols()
            )));
        }
        let deviation = linalg::hermitian_deviation(&self.data);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = linalg::trace_re(&self.data);
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::BadTrace { trace });
        }
        if !linalg::cholesky_psd(&self.data, PSD_SLACK) {
            let min_eigenvalue = *linalg::eigvalsh(&self.data).last().unwrap_or(&0.0);
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(())
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// True when every imaginary part is below `tol`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.data.iter().all(|z| z.im.abs() <= tol)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.data)
    }

    /// `U ρ U†` for a unitary on the full space.
    pub fn conjugate_by(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::LayoutMismatch("unitary dimension".into()));
        }
        Ok(Self::from_parts(self.layout.clone(), u * &self.data * u.adjoint()))
    }

    /// Same matrix data on a new layout with equal total dimension.
    pub(crate) fn relayout(&self, layout: SubsystemLayout) -> Result<Self> {
        if layout.total_dim() != self.dim() {
            return Err(Error::LayoutMismatch(format!(
                "cannot view dimension {} as {:?}",
                self.dim(),
                layout.dims()
            )));
        }
        Ok(Self { layout, data: self.data.clone() })
    }
}

/// Kronecker product; the layout of `a` precedes the layout of `b`.
pub fn tensor(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix> {
    let layout = a.layout.concat(&b.layout)?;
    Ok(DensityMatrix::from_parts(layout, a.data.kronecker(&b.data)))
}

/// Reduced state on `keep`, with kept subsystems in increasing order.
pub fn partial_trace(rho: &DensityMatrix, keep: &QubitSubset) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::EmptySubset);
    }
    let n = rho.layout.len();
    if let Some(&last) = keep.indices().last() {
        if last >= n {
            return Err(Error::IndexOutOfRange { index: last, len: n });
        }
    }
    let data = partial_trace_matrix(&rho.data, rho.layout.dims(), keep.indices());
    Ok(DensityMatrix::from_parts(rho.layout.restrict(keep), data))
}

pub(crate) fn partial_trace_matrix(m: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let kept_dims: Vec<usize> = keep.iter().map(|&i| dims[i]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let dk: usize = kept_dims.iter().product();
    let dt: usize = traced.iter().map(|&i| dims[i]).product();
    if dt == 1 && keep.windows(2).all(|w| w[0] < w[1]) {
        return m.clone();
    }
    // Reordering puts kept subsystems first, so full = kept * dt + traced.
    let mut order = keep.to_vec();
    order.extend_from_slice(&traced);
    let table = linalg::reorder_table(dims, &order);
    let mut out = CMatrix::zeros(dk, dk);
    for c in 0..dk {
        for r in 0..dk {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..dt {
                acc += m[(table[r * dt + t], table[c * dt + t])];
            }
            out[(r, c)] = acc;
        }
    }
    out
}

/// Reorders subsystems: new subsystem `i` is old subsystem `permutation[i]`.
pub fn permute_subsystems(rho: &DensityMatrix, permutation: &[usize]) -> Result<DensityMatrix> {
    let n = rho.layout.len();
    check_permutation(permutation, n)?;
    let table = linalg::reorder_table(rho.layout.dims(), permutation);
    let dims = permutation.iter().map(|&p| rho.layout.dims[p]).collect();
    Ok(DensityMatrix::from_parts(SubsystemLayout { dims }, linalg::permute_matrix(&rho.data, &table)))
}

pub(crate) fn check_permutation(permutation: &[usize], n: usize) -> Result<()> {
    if permutation.len() != n {
        return Err(Error::InvalidPermutation(format!("length {} for {n} subsystems", permutation.len())));
    }
    let mut seen = vec![false; n];
    for &p in permutation {
        if p >= n || seen[p] {
            return Err(Error::InvalidPermutation(format!("{permutation:?} is not a permutation of 0..{n}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Partial transpose on the subsystems in `subset`.
pub fn partial_transpose(rho: &CMatrix, layout: &SubsystemLayout, subset: &QubitSubset) -> CMatrix {
    let (inp, outp) = linalg::split_index_table(layout.dims(), subset.indices());
    linalg::partial_transpose_with(rho, &inp, &outp)
}

/// `Tr|X|`: sum of the absolute eigenvalues. No factor ½.
pub fn trace_norm(x: &CMatrix) -> Result<f64> {
    let deviation = linalg::hermitian_deviation(x);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(linalg::trace_norm_of(x))
}

/// Trace-norm distance `‖ρ − σ‖_tr` between two states on the same layout.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.layout != sigma.layout {
        return Err(Error::LayoutMismatch("trace distance between different layouts".into()));
    }
    trace_norm(&(&rho.data - &sigma.data))
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.layout != psi.layout {
        return Err(Error::LayoutMismatch("fidelity between different layouts".into()));
    }
    let v = &psi.amplitudes;
    let value = (v.adjoint() * &rho.data * v)[(0, 0)].re;
    Ok(value.clamp(0.0, 1.0))
}

/// Eigenvalues sorted descending with matching orthonormal eigenvectors (columns).
pub fn hermitian_eigen(x: &CMatrix) -> (Vec<f64>, CMatrix) {
    linalg::eigh(x)
}

/// Seeded random states and unitaries for experiments and tests.
pub mod random {
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn gaussian(rng: &mut impl Rng) -> Complex64 {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    /// Haar-random unit vector.
    pub fn unit_vector(dim: usize, rng: &mut impl Rng) -> CVector {
        let v = CVector::from_fn(dim, |_, _| gaussian(rng));
        let norm = v.norm();
        v.unscale(norm)
    }

    pub fn pure_state(layout: SubsystemLayout, rng: &mut impl Rng) -> PureState {
        let amplitudes = unit_vector(layout.total_dim(), rng);
        PureState { layout, amplitudes }
    }

    /// Induced-measure mixed state `G G† / Tr(G G†)` with `G` of size `d × rank`.
    pub fn density_matrix(layout: SubsystemLayout, rank: usize, rng: &mut impl Rng) -> DensityMatrix {
        let d = layout.total_dim();
        let g = CMatrix::from_fn(d, rank.max(1), |_, _| gaussian(rng));
        let m = &g * g.adjoint();
        let tr = linalg::trace_re(&m);
        DensityMatrix::from_parts(layout, linalg::hermitize(&m).unscale(tr))
    }

    /// Haar-random unitary via QR with phase correction.
    pub fn unitary(dim: usize, rng: &mut impl Rng) -> CMatrix {
        let g = CMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
        let qr = g.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for c in 0..dim {
            let d = r[(c, c)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
            for row in 0..dim {
                q[(row, c)] *= phase;
            }
        }
        q
    }
}
