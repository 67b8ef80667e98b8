//! W, Dicke, cat-pair and product state families, plus W preparation circuits.

use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{Circuit, Gate};
use crate::qstate::{random, tensor, CMatrix, CVector, DensityMatrix, PureState, SubsystemLayout};

/// Largest register the dense generators materialize.
pub const MAX_DENSE_QUBITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FamilyKind {
    W,
    Dicke(usize),
    CatPairs,
    AllZero,
    ProductRandom(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StateFamily {
    pub kind: FamilyKind,
    pub n: usize,
}

impl FamilyKind {
    /// Parses the config spelling: `w`, `dicke:k`, `catpairs`, `zero`, `product:seed`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown state family '{s}'"));
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        match (head, arg) {
            ("w", None) => Ok(Self::W),
            ("catpairs", None) => Ok(Self::CatPairs),
            ("zero", None) => Ok(Self::AllZero),
            ("dicke", Some(k)) => k.parse().map(Self::Dicke).map_err(|_| bad()),
            ("product", Some(seed)) => seed.parse().map(Self::ProductRandom).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::W => write!(f, "w"),
            Self::Dicke(k) => write!(f, "dicke:{k}"),
            Self::CatPairs => write!(f, "catpairs"),
            Self::AllZero => write!(f, "zero"),
            Self::ProductRandom(seed) => write!(f, "product:{seed}"),
        }
    }
}

impl StateFamily {
    pub fn new(kind: FamilyKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("a state family needs n >= 1".into()));
        }
        if n > MAX_DENSE_QUBITS {
            return Err(Error::DimensionCap { dim: 1 << n.min(63), cap: 1 << MAX_DENSE_QUBITS });
        }
        match kind {
            FamilyKind::Dicke(k) if k > n => Err(Error::InvalidArgument(format!("dicke:{k} needs k <= n = {n}"))),
            FamilyKind::CatPairs if n % 2 != 0 => Err(Error::InvalidArgument(format!("catpairs needs even n, got {n}"))),
            _ => Ok(Self { kind, n }),
        }
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        match self.kind {
            FamilyKind::W => Ok(w_state(self.n)?.density()),
            FamilyKind::Dicke(k) => Ok(dicke_state(self.n, k)?.density()),
            FamilyKind::CatPairs => cat_pairs_state(self.n / 2),
            FamilyKind::AllZero => Ok(dicke_state(self.n, 0)?.density()),
            FamilyKind::ProductRandom(seed) => Ok(product_random(self.n, seed)?.density()),
        }
    }
}

fn check_dense(n: usize) -> Result<()> {
    if n > MAX_DENSE_QUBITS {
        return Err(Error::DimensionCap { dim: 1usize << n.min(63), cap: 1 << MAX_DENSE_QUBITS });
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `|W_n⟩ = n^{-1/2} Σ_k |0^{k-1} 1 0^{n-k}⟩`.
pub fn w_state(n: usize) -> Result<PureState> {
    if n == 0 {
        return Err(Error::InvalidArgument("W_n needs n >= 1".into()));
    }
    dicke_state(n, 1)
}

/// Uniform superposition over the `C(n, k)` basis strings of Hamming weight `k`.
pub fn dicke_state(n: usize, k: usize) -> Result<PureState> {
    check_dense(n)?;
    if k > n {
        return Err(Error::InvalidArgument(format!("Dicke weight {k} exceeds n = {n}")));
    }
    let layout = SubsystemLayout::qubits(n)?;
    let amp = Complex64::new(binomial(n, k).sqrt().recip(), 0.0);
    let amplitudes = CVector::from_fn(1 << n, |i, _| {
        if (i as u32).count_ones() as usize == k {
            amp
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    PureState::normalized(layout, amplitudes)
}

/// Reduced state of `W_n` on any `k` of its qubits:
/// `(k/n)|W_k⟩⟨W_k| + ((n−k)/n)|0^k⟩⟨0^k|`. Only `k` qubits are materialized,
/// so `n` may exceed the dense cap.
pub fn w_reduced(n: usize, k: usize) -> Result<DensityMatrix> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("w_reduced needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    check_dense(k)?;
    let w = w_state(k)?;
    let q = k as f64 / n as f64;
    let mut data: CMatrix = w.density().into_data().scale(q);
    data[(0, 0)] += Complex64::new(1.0 - q, 0.0);
    Ok(DensityMatrix::from_parts(w.layout().clone(), data))
}

/// `m` Bell pairs `(|00⟩+|11⟩)/√2` on qubits `(1,2), (3,4), …`.
pub fn cat_pairs_state(m: usize) -> Result<DensityMatrix> {
    if m == 0 {
        return Err(Error::InvalidArgument("cat_pairs needs m >= 1".into()));
    }
    check_dense(2 * m)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = Complex64::new(0.0, 0.0);
    let pair = PureState::new(
        SubsystemLayout::qubits(2)?,
        CVector::from_vec(vec![Complex64::new(s, 0.0), z, z, Complex64::new(s, 0.0)]),
    )?
    .density();
    let mut rho = pair.clone();
    for _ in 1..m {
        rho = tensor(&rho, &pair)?;
    }
    Ok(rho)
}

/// Tensor product of `n` Haar-random single-qubit pure states.
pub fn product_random(n: usize, seed: u64) -> Result<PureState> {
    check_dense(n)?;
    if n == 0 {
        return Err(Error::InvalidArgument("product state needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amps = random::unit_vector(2, &mut rng);
    for _ in 1..n {
        amps = amps.kronecker(&random::unit_vector(2, &mut rng));
    }
    PureState::normalized(SubsystemLayout::qubits(n)?, amps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CircuitStyle {
    /// Passes the excitation down the chain: depth `2(n−1)+1`.
    LinearCascade,
    /// Splits the excitation between halves recursively: `⌈log2 n⌉` blocks of two layers.
    LogDepthAttempt,
}

impl CircuitStyle {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear_cascade" => Ok(Self::LinearCascade),
            "logdepth" | "log_depth_attempt" => Ok(Self::LogDepthAttempt),
            _ => Err(Error::InvalidArgument(format!("unknown circuit style '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LinearCascade => "linear_cascade",
            Self::LogDepthAttempt => "log_depth_attempt",
        }
    }
}

/// Moves amplitude `sqrt(1 − keep)` of the excitation on `from` onto `to`
/// (which must hold |0⟩): CRy then CNOT back.
fn split_excitation(gates: &mut Vec<Gate>, from: usize, to: usize, keep: f64) -> Result<()> {
    let theta = 2.0 * keep.sqrt().acos();
    gates.push(Gate::cry(theta, from, to)?);
    gates.push(Gate::cnot(to, from)?);
    Ok(())
}

/// Circuit over {X, Ry, CRy, CNOT} mapping `|0^n⟩` to `|W_n⟩`.
pub fn w_circuit(n: usize, style: CircuitStyle) -> Result<Circuit> {
    check_dense(n)?;
    if n == 0 {
        return Err(Error::InvalidArgument("W circuit needs n >= 1".into()));
    }
    let mut gates = vec![Gate::x(0)];
    match style {
        CircuitStyle::LinearCascade => {
            for i in 0..n - 1 {
                split_excitation(&mut gates, i, i + 1, 1.0 / (n - i) as f64)?;
            }
        }
        CircuitStyle::LogDepthAttempt => {
            // Blocks (start, len) whose excitation sits on `start`; split level by level.
            let mut blocks = vec![(0usize, n)];
            while blocks.iter().any(|&(_, len)| len > 1) {
                let mut next = Vec::new();
                for (start, len) in blocks {
                    if len == 1 {
                        next.push((start, len));
                        continue;
                    }
                    let left = len.div_ceil(2);
                    split_excitation(&mut gates, start, start + left, left as f64 / len as f64)?;
                    next.push((start, left));
                    next.push((start + left, len - left));
                }
                blocks = next;
            }
        }
    }
    Circuit::new(n, gates)
}
