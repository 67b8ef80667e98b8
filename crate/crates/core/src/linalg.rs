//! Dense Hermitian helpers shared by the state kernel and the solvers.
//!
//! Everything here is generic over the scalar so the separability solvers can
//! run on real symmetric matrices when the input has no imaginary part.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

/// Scalar field used by the solvers: `f64` or `Complex<f64>`.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}
impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

fn is_finite_eig<T: Scalar>(vals: &DVector<f64>, vecs: Option<&DMatrix<T>>) -> bool {
    vals.iter().all(|x| x.is_finite()) && vecs.is_none_or(|v| v.iter().all(|z| z.is_finite()))
}

/// Householder reflection `I − 2vvᵀ/‖v‖²` with a fixed, structure-breaking `v`.
fn scrambler<T: Scalar>(n: usize, attempt: usize) -> DMatrix<T> {
    let v = DVector::<f64>::from_fn(n, |i, _| 1.0 + ((i * (2 * attempt + 1)) % 7) as f64 / 7.0 + i as f64 / n as f64);
    let scale = 2.0 / v.norm_squared();
    DMatrix::from_fn(n, n, |r, c| T::from_real(if r == c { 1.0 } else { 0.0 } - scale * v[r] * v[c]))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
///
/// The QL iteration occasionally breaks down (NaN) on matrices with exact
/// zero patterns; those are retried after an orthogonal similarity.
pub(crate) fn eigh<T: Scalar>(m: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let n = m.nrows();
    assert!(m.iter().all(|z| z.is_finite()), "non-finite entry in Hermitian eigensolve");
    let h = hermitize(m);
    let mut eig = h.clone().symmetric_eigen();
    let mut attempt = 0;
    while !is_finite_eig(&eig.eigenvalues, Some(&eig.eigenvectors)) {
        attempt += 1;
        assert!(attempt <= 4, "Hermitian eigensolver failed");
        let q = scrambler::<T>(n, attempt);
        let mut e = hermitize(&(&q * &h * &q)).symmetric_eigen();
        e.eigenvectors = &q * e.eigenvectors;
        eig = e;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub(crate) fn eigvalsh<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    let n = m.nrows();
    let h = hermitize(m);
    let mut vals = h.clone().symmetric_eigenvalues();
    let mut attempt = 0;
    while !is_finite_eig::<T>(&vals, None) {
        attempt += 1;
        assert!(attempt <= 4, "Hermitian eigensolver failed");
        let q = scrambler::<T>(n, attempt);
        vals = hermitize(&(&q * &h * &q)).symmetric_eigenvalues();
    }
    let mut vals: Vec<f64> = vals.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Whether `λ_min(m) > −slack`, by a real Cholesky factorization of
/// `m + slack·I` (complex input is embedded as `[[Re, −Im], [Im, Re]]`).
pub(crate) fn cholesky_psd(m: &DMatrix<Complex64>, slack: f64) -> bool {
    let d = m.nrows();
    let h = hermitize(m);
    let real = if h.iter().all(|z| z.im == 0.0) {
        DMatrix::from_fn(d, d, |r, c| h[(r, c)].re)
    } else {
        DMatrix::from_fn(2 * d, 2 * d, |r, c| {
            let z = h[(r % d, c % d)];
            match (r < d, c < d) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
    };
    let n = real.nrows();
    (real + DMatrix::<f64>::identity(n, n) * slack).cholesky().is_some()
}

/// `V diag(f(λ)) V†`.
pub(crate) fn reconstruct<T: Scalar>(vals: &[f64], vecs: &DMatrix<T>, f: impl Fn(f64) -> f64) -> DMatrix<T> {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (c, &v) in vals.iter().enumerate() {
        let s = T::from_real(f(v));
        for r in 0..n {
            scaled[(r, c)] *= s;
        }
    }
    scaled * vecs.adjoint()
}

pub(crate) fn hermitize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::from_real(0.5);
    (m + m.adjoint()) * half
}

pub(crate) fn hermitian_deviation<T: Scalar>(m: &DMatrix<T>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[(r, c)] - m[(c, r)].conjugate()).modulus());
        }
    }
    worst
}

pub(crate) fn trace_re<T: Scalar>(m: &DMatrix<T>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].real()).sum()
}

/// Real part of the Hilbert–Schmidt inner product `Tr(A† B)`.
pub(crate) fn hs_inner<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conjugate() * *y).real()).sum()
}

pub(crate) fn trace_norm_of<T: Scalar>(m: &DMatrix<T>) -> f64 {
    eigvalsh(m).iter().map(|v| v.abs()).sum()
}

/// Euclidean projection of a vector onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    project_scaled_simplex(v, 1.0)
}

pub(crate) fn project_scaled_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - total) / (i as f64 + 1.0);
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Mixed-radix digit bookkeeping for subsystem layouts.
///
/// `first` is the most significant subsystem.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// For every basis index, the part of the index contributed by `subset`
/// digits and the part contributed by the remaining digits.
pub(crate) fn split_index_table(dims: &[usize], subset: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let total: usize = dims.iter().product();
    let st = strides(dims);
    let mut in_part = vec![0; total];
    let mut out_part = vec![0; total];
    let mut in_subset = vec![false; dims.len()];
    for &s in subset {
        in_subset[s] = true;
    }
    for idx in 0..total {
        for (k, &d) in dims.iter().enumerate() {
            let digit = (idx / st[k]) % d;
            if in_subset[k] {
                in_part[idx] += digit * st[k];
            } else {
                out_part[idx] += digit * st[k];
            }
        }
    }
    (in_part, out_part)
}

/// Permutation table that reorders basis indices: entry `new_idx` holds the
/// old index, where new subsystem `i` is old subsystem `order[i]`.
pub(crate) fn reorder_table(dims: &[usize], order: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let old_strides = strides(dims);
    let new_dims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    let new_strides = strides(&new_dims);
    (0..total)
        .map(|new_idx| {
            order
                .iter()
                .enumerate()
                .map(|(i, &o)| ((new_idx / new_strides[i]) % new_dims[i]) * old_strides[o])
                .sum()
        })
        .collect()
}

pub(crate) fn permute_matrix<T: Scalar>(m: &DMatrix<T>, table: &[usize]) -> DMatrix<T> {
    let n = table.len();
    DMatrix::from_fn(n, n, |r, c| m[(table[r], table[c])])
}

/// Partial transpose with respect to the subsystems described by a
/// precomputed [`split_index_table`].
pub(crate) fn partial_transpose_with<T: Scalar>(m: &DMatrix<T>, in_part: &[usize], out_part: &[usize]) -> DMatrix<T> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            let r2 = out_part[r] + in_part[c];
            let c2 = out_part[c] + in_part[r];
            out[(r2, c2)] = m[(r, c)];
        }
    }
    out
}

/// Dominant eigenvector of a small Hermitian matrix.
pub(crate) fn top_eigvec<T: Scalar>(m: &DMatrix<T>) -> (f64, DVector<T>) {
    let (vals, vecs) = eigh(m);
    (vals[0], vecs.column(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection_lands_on_simplex() {
        let p = project_simplex(&[0.5, 2.0, -1.0, 0.2]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert_eq!(project_simplex(&[0.25, 0.75]), vec![0.25, 0.75]);
    }

    #[test]
    fn reorder_table_swaps_two_qubits() {
        // new order (1, 0): new index |b a> reads old index |a b>
        let t = reorder_table(&[2, 2], &[1, 0]);
        assert_eq!(t, vec![0, 2, 1, 3]);
    }

    #[test]
    fn partial_transpose_is_an_involution() {
        let m = DMatrix::<f64>::from_fn(8, 8, |r, c| (r * 8 + c) as f64);
        let (i, o) = split_index_table(&[2, 2, 2], &[0, 2]);
        let t = partial_transpose_with(&m, &i, &o);
        assert_ne!(t, m);
        assert_eq!(partial_transpose_with(&t, &i, &o), m);
    }
}
