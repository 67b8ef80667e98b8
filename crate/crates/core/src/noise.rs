//! Density-matrix circuit simulation with Kraus-channel noise.
//!
//! Qubit 0 is the most significant bit of a basis index. Gates are grouped
//! into greedy left-to-right layers; after each gate its depolarizing channel
//! is applied, and after each layer every qubit receives amplitude damping and
//! dephasing. Channels are applied exactly, never sampled.

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kappa::{self, KappaConfig};
use crate::qstate::{fidelity, CMatrix, DensityMatrix, PureState, SubsystemLayout};
use crate::wstates::{self, CircuitStyle};

/// Largest register `simulate` accepts (density matrix of side 1024).
pub const MAX_SIM_QUBITS: usize = 10;
const KRAUS_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum GateKind {
    X,
    Ry(f64),
    Cnot,
    Cry(f64),
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::X | GateKind::Ry(_) => 1,
            GateKind::Cnot | GateKind::Cry(_) => 2,
        }
    }

    pub fn unitary(&self) -> CMatrix {
        let c = |x: f64| Complex64::new(x, 0.0);
        let ry = |theta: f64| {
            let (s, co) = (theta / 2.0).sin_cos();
            CMatrix::from_row_slice(2, 2, &[c(co), c(-s), c(s), c(co)])
        };
        let controlled = |u: CMatrix| {
            let mut m = CMatrix::identity(4, 4);
            m.view_mut((2, 2), (2, 2)).copy_from(&u);
            m
        };
        let x = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        match *self {
            GateKind::X => x,
            GateKind::Ry(theta) => ry(theta),
            GateKind::Cnot => controlled(x),
            GateKind::Cry(theta) => controlled(ry(theta)),
        }
    }
}

/// A gate and the qubits it acts on. Controlled gates list the control first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Gate {
    kind: GateKind,
    targets: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<usize>) -> Result<Self> {
        if targets.len() != kind.arity() {
            return Err(Error::InvalidGate(format!("{kind:?} expects {} targets, got {}", kind.arity(), targets.len())));
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::InvalidGate(format!("{kind:?} targets must be distinct")));
        }
        Ok(Self { kind, targets })
    }

    pub fn x(q: usize) -> Self {
        Self { kind: GateKind::X, targets: vec![q] }
    }

    pub fn ry(theta: f64, q: usize) -> Self {
        Self { kind: GateKind::Ry(theta), targets: vec![q] }
    }

    pub fn cnot(control: usize, target: usize) -> Result<Self> {
        Self::new(GateKind::Cnot, vec![control, target])
    }

    pub fn cry(theta: f64, control: usize, target: usize) -> Result<Self> {
        Self::new(GateKind::Cry(theta), vec![control, target])
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t: Vec<String> = self.targets.iter().map(|q| (q + 1).to_string()).collect();
        match self.kind {
            GateKind::X => write!(f, "X[{}]", t.join(",")),
            GateKind::Ry(th) => write!(f, "Ry({th:.6})[{}]", t.join(",")),
            GateKind::Cnot => write!(f, "CNOT[{}]", t.join(",")),
            GateKind::Cry(th) => write!(f, "CRy({th:.6})[{}]", t.join(",")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Self { n, gates: Vec::with_capacity(gates.len()) };
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if let Some(&q) = gate.targets.iter().find(|&&q| q >= self.n) {
            return Err(Error::IndexOutOfRange { index: q, len: self.n });
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Greedy left-to-right layering: each gate goes one layer after the
    /// latest layer touching any of its qubits. Returns gate indices per layer.
    pub fn layers(&self) -> Vec<Vec<usize>> {
        let mut frontier = vec![0usize; self.n];
        let mut layers: Vec<Vec<usize>> = Vec::new();
        for (i, g) in self.gates.iter().enumerate() {
            let layer = g.targets.iter().map(|&q| frontier[q]).max().unwrap_or(0);
            for &q in &g.targets {
                frontier[q] = layer + 1;
            }
            if layers.len() <= layer {
                layers.resize_with(layer + 1, Vec::new);
            }
            layers[layer].push(i);
        }
        layers
    }

    pub fn depth(&self) -> usize {
        self.layers().len()
    }

    pub fn two_qubit_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind.arity() == 2).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NoiseModel {
    pub depolarizing_1q: f64,
    pub depolarizing_2q: f64,
    pub amplitude_damping: f64,
    pub dephasing: f64,
    pub readout_flip: f64,
}

/// A single rate of a [`NoiseModel`], used to build sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NoiseKnob {
    Depolarizing1q,
    Depolarizing2q,
    /// Both depolarizing rates set to the same value.
    Depolarizing,
    AmplitudeDamping,
    Dephasing,
    ReadoutFlip,
}

impl NoiseKnob {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "depolarizing_1q" => Self::Depolarizing1q,
            "depolarizing_2q" => Self::Depolarizing2q,
            "depolarizing" => Self::Depolarizing,
            "amplitude_damping" => Self::AmplitudeDamping,
            "dephasing" => Self::Dephasing,
            "readout_flip" => Self::ReadoutFlip,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Depolarizing1q => "depolarizing_1q",
            Self::Depolarizing2q => "depolarizing_2q",
            Self::Depolarizing => "depolarizing",
            Self::AmplitudeDamping => "amplitude_damping",
            Self::Dephasing => "dephasing",
            Self::ReadoutFlip => "readout_flip",
        }
    }
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn with(mut self, knob: NoiseKnob, value: f64) -> Self {
        match knob {
            NoiseKnob::Depolarizing1q => self.depolarizing_1q = value,
            NoiseKnob::Depolarizing2q => self.depolarizing_2q = value,
            NoiseKnob::Depolarizing => {
                self.depolarizing_1q = value;
                self.depolarizing_2q = value;
            }
            NoiseKnob::AmplitudeDamping => self.amplitude_damping = value,
            NoiseKnob::Dephasing => self.dephasing = value,
            NoiseKnob::ReadoutFlip => self.readout_flip = value,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("depolarizing_1q", self.depolarizing_1q),
            ("depolarizing_2q", self.depolarizing_2q),
            ("amplitude_damping", self.amplitude_damping),
            ("dephasing", self.dephasing),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { name, value: v, range: "[0, 1]" });
            }
        }
        if !(0.0..=0.5).contains(&self.readout_flip) {
            return Err(Error::OutOfRange { name: "readout_flip", value: self.readout_flip, range: "[0, 1/2]" });
        }
        Ok(())
    }

    /// True when no channel acts on the state (readout flips excluded).
    pub fn is_noiseless(&self) -> bool {
        self.depolarizing_1q == 0.0 && self.depolarizing_2q == 0.0 && self.amplitude_damping == 0.0 && self.dephasing == 0.0
    }
}

fn paulis() -> [CMatrix; 4] {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    [
        CMatrix::identity(2, 2),
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    ]
}

/// Depolarizing channel on `k` qubits: `ρ → (1−p)ρ + p·Tr_k(ρ) ⊗ I/2^k`.
pub fn depolarizing_kraus(p: f64, k: usize) -> Vec<CMatrix> {
    let count = 4usize.pow(k as u32);
    let base = paulis();
    (0..count)
        .map(|code| {
            let mut op = CMatrix::identity(1, 1);
            for pos in (0..k).rev() {
                op = op.kronecker(&base[(code >> (2 * pos)) & 3]);
            }
            let weight = if code == 0 { 1.0 - p * (count as f64 - 1.0) / count as f64 } else { p / count as f64 };
            op.scale(weight.max(0.0).sqrt())
        })
        .collect()
}

pub fn amplitude_damping_kraus(gamma: f64) -> Vec<CMatrix> {
    let c = |x: f64| Complex64::new(x, 0.0);
    vec![
        CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c((1.0 - gamma).sqrt())]),
        CMatrix::from_row_slice(2, 2, &[c(0.0), c(gamma.sqrt()), c(0.0), c(0.0)]),
    ]
}

/// Phase damping: off-diagonal elements shrink by `1 − λ`.
pub fn dephasing_kraus(lambda: f64) -> Vec<CMatrix> {
    let z = &paulis()[3];
    vec![CMatrix::identity(2, 2).scale((1.0 - lambda / 2.0).sqrt()), z.scale((lambda / 2.0).sqrt())]
}

/// Indices of the basis states sharing every non-target bit with `base`,
/// ordered so the first target is the most significant bit of the position.
fn local_indices(n: usize, targets: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let k = targets.len();
    let offsets = (0..1usize << k)
        .map(|j| {
            (0..k).filter(|&t| j >> (k - 1 - t) & 1 == 1).fold(0, |acc, t| acc | 1 << (n - 1 - targets[t]))
        })
        .collect();
    let target_mask = targets.iter().fold(0, |acc, &q| acc | 1 << (n - 1 - q));
    let bases = (0..1usize << n).filter(|i| i & target_mask == 0).collect();
    (bases, offsets)
}

/// `op · m` where `op` acts on `targets` of an `n`-qubit register.
fn apply_left(m: &CMatrix, op: &CMatrix, n: usize, targets: &[usize]) -> CMatrix {
    let (bases, offsets) = local_indices(n, targets);
    let k = offsets.len();
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    for col in 0..m.ncols() {
        for &b in &bases {
            for (j, off) in offsets.iter().enumerate() {
                buf[j] = m[(b | off, col)];
            }
            for (i, off) in offsets.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, v) in buf.iter().enumerate() {
                    acc += op[(i, j)] * v;
                }
                out[(b | off, col)] = acc;
            }
        }
    }
    out
}

/// `op ρ op†` for Hermitian `ρ`, computed as `op (op ρ)†`.
fn conjugate_local(rho: &CMatrix, op: &CMatrix, n: usize, targets: &[usize]) -> CMatrix {
    let left = apply_left(rho, op, n, targets);
    apply_left(&left.adjoint(), op, n, targets)
}

fn check_targets(rho: &DensityMatrix, targets: &[usize]) -> Result<usize> {
    if !rho.layout().is_qubits() {
        return Err(Error::InvalidArgument("circuit operations need a qubit layout".into()));
    }
    let n = rho.layout().len();
    if let Some(&q) = targets.iter().find(|&&q| q >= n) {
        return Err(Error::IndexOutOfRange { index: q, len: n });
    }
    Ok(n)
}

pub fn apply_gate(rho: &DensityMatrix, gate: &Gate) -> Result<DensityMatrix> {
    let n = check_targets(rho, &gate.targets)?;
    let data = conjugate_local(rho.data(), &gate.kind.unitary(), n, &gate.targets);
    Ok(DensityMatrix::from_parts(rho.layout().clone(), data))
}

/// `Σ_i K_i ρ K_i†` with the Kraus operators acting on `targets`.
pub fn apply_channel(rho: &DensityMatrix, kraus: &[CMatrix], targets: &[usize]) -> Result<DensityMatrix> {
    let n = check_targets(rho, targets)?;
    let d = 1usize << targets.len();
    if kraus.iter().any(|k| k.nrows() != d || k.ncols() != d) {
        return Err(Error::InvalidArgument(format!("Kraus operators must be {d}x{d}")));
    }
    let mut completeness = CMatrix::zeros(d, d);
    for k in kraus {
        completeness += k.adjoint() * k;
    }
    let deviation = (completeness - CMatrix::identity(d, d)).camax();
    if deviation > KRAUS_TOL {
        return Err(Error::IncompleteKraus { deviation });
    }
    let mut out = CMatrix::zeros(rho.dim(), rho.dim());
    for k in kraus {
        if k.camax() == 0.0 {
            continue;
        }
        out += conjugate_local(rho.data(), k, n, targets);
    }
    Ok(DensityMatrix::from_parts(rho.layout().clone(), out))
}

/// Runs `circuit` from `|0^n⟩` under `noise`.
pub fn simulate(circuit: &Circuit, noise: &NoiseModel) -> Result<DensityMatrix> {
    noise.validate()?;
    let n = circuit.n;
    if n > MAX_SIM_QUBITS {
        return Err(Error::DimensionCap { dim: 1 << n, cap: 1 << MAX_SIM_QUBITS });
    }
    let layout = SubsystemLayout::qubits(n)?;
    let mut rho = PureState::basis(layout, 0)?.density();
    let dep1 = depolarizing_kraus(noise.depolarizing_1q, 1);
    let dep2 = depolarizing_kraus(noise.depolarizing_2q, 2);
    let damp = amplitude_damping_kraus(noise.amplitude_damping);
    let deph = dephasing_kraus(noise.dephasing);
    for layer in circuit.layers() {
        for &gi in &layer {
            let gate = &circuit.gates[gi];
            rho = apply_gate(&rho, gate)?;
            match gate.kind.arity() {
                1 if noise.depolarizing_1q > 0.0 => rho = apply_channel(&rho, &dep1, &gate.targets)?,
                2 if noise.depolarizing_2q > 0.0 => rho = apply_channel(&rho, &dep2, &gate.targets)?,
                _ => {}
            }
        }
        for q in 0..n {
            if noise.amplitude_damping > 0.0 {
                rho = apply_channel(&rho, &damp, &[q])?;
            }
            if noise.dephasing > 0.0 {
                rho = apply_channel(&rho, &deph, &[q])?;
            }
        }
    }
    Ok(rho)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub depth: usize,
    pub two_qubit_gates: usize,
    pub fidelity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FidelitySweep {
    pub style: CircuitStyle,
    pub noise: NoiseModel,
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of ln(fidelity) against n.
    pub log_fidelity_slope: f64,
    pub log_fidelity_intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, R²)`.
/// `R²` is 1 when `y` is constant.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

pub fn fidelity_sweep(ns: impl IntoIterator<Item = usize>, noise: &NoiseModel, style: CircuitStyle) -> Result<FidelitySweep> {
    let mut rows = Vec::new();
    for n in ns {
        let circuit = wstates::w_circuit(n, style)?;
        let rho = simulate(&circuit, noise)?;
        let f = fidelity(&rho, &wstates::w_state(n)?)?;
        rows.push(SweepRow { n, depth: circuit.depth(), two_qubit_gates: circuit.two_qubit_gate_count(), fidelity: f });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.fidelity.ln()).collect();
    let (log_fidelity_slope, log_fidelity_intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(FidelitySweep { style, noise: *noise, rows, log_fidelity_slope, log_fidelity_intercept, r_squared })
}

#[derive(Clone, Debug, Serialize)]
pub struct NoisyKappaRow {
    pub level: f64,
    pub noise: NoiseModel,
    pub fidelity: f64,
    pub k_lower: f64,
    pub k_upper: f64,
    pub flagged_subsets: usize,
    pub max_sandwich_violation: f64,
    pub max_certificate_deviation: f64,
}

/// Prepares `W_n` under each noise level (`knob` set to `level` on top of
/// `base`) and brackets `K` of the output by full subset enumeration.
pub fn noisy_kappa_experiment(
    n: usize,
    base: &NoiseModel,
    knob: NoiseKnob,
    levels: &[f64],
    style: CircuitStyle,
    cfg: &KappaConfig,
) -> Result<Vec<NoisyKappaRow>> {
    if n > kappa::MAX_ENUMERATED_QUBITS {
        return Err(Error::DimensionCap { dim: 1 << n, cap: 1 << kappa::MAX_ENUMERATED_QUBITS });
    }
    let circuit = wstates::w_circuit(n, style)?;
    let target = wstates::w_state(n)?;
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let noise = base.with(knob, level);
        let rho = simulate(&circuit, &noise)?;
        let f = fidelity(&rho, &target)?;
        let est = kappa::kappa_enumerated(&rho, cfg)?;
        rows.push(NoisyKappaRow {
            level,
            noise,
            fidelity: f,
            k_lower: est.lower,
            k_upper: est.upper,
            flagged_subsets: est.flagged_subsets,
            max_sandwich_violation: est.max_sandwich_violation,
            max_certificate_deviation: est.max_certificate_deviation,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{partial_trace, trace_distance, QubitSubset};

    fn basis(bits: &[usize]) -> DensityMatrix {
        let idx = bits.iter().fold(0, |a, &b| a * 2 + b);
        PureState::basis(SubsystemLayout::qubits(bits.len()).unwrap(), idx).unwrap().density()
    }

    #[test]
    fn x_flips_zero() {
        let out = apply_gate(&basis(&[0]), &Gate::x(0)).unwrap();
        assert!((out.data() - basis(&[1]).data()).camax() < 1e-15);
    }

    #[test]
    fn cnot_on_10() {
        let out = apply_gate(&basis(&[1, 0]), &Gate::cnot(0, 1).unwrap()).unwrap();
        assert!((out.data() - basis(&[1, 1]).data()).camax() < 1e-15);
        // control on the second qubit
        let out = apply_gate(&basis(&[0, 1]), &Gate::cnot(1, 0).unwrap()).unwrap();
        assert!((out.data() - basis(&[1, 1]).data()).camax() < 1e-15);
    }

    #[test]
    fn two_half_rotations_make_a_full_one() {
        let half = std::f64::consts::FRAC_PI_2;
        let twice = apply_gate(&apply_gate(&basis(&[0]), &Gate::ry(half, 0)).unwrap(), &Gate::ry(half, 0)).unwrap();
        let once = apply_gate(&basis(&[0]), &Gate::ry(2.0 * half, 0)).unwrap();
        assert!((twice.data() - once.data()).camax() < 1e-15);
        // Matrix-product oracle.
        let u = GateKind::Ry(half).unitary();
        let uu = &u * &u;
        assert!((uu - GateKind::Ry(2.0 * half).unitary()).camax() < 1e-15);
    }

    #[test]
    fn gate_validation() {
        assert!(Gate::cnot(1, 1).is_err());
        assert!(Gate::new(GateKind::X, vec![0, 1]).is_err());
        assert!(Circuit::new(2, vec![Gate::x(2)]).is_err());
        let rho = basis(&[0, 0]);
        assert!(matches!(apply_gate(&rho, &Gate::x(5)), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn depolarizing_limits() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        use rand::SeedableRng;
        let rho = crate::qstate::random::density_matrix(SubsystemLayout::qubits(2).unwrap(), 4, &mut rng);
        let same = apply_channel(&rho, &depolarizing_kraus(0.0, 1), &[1]).unwrap();
        assert!((same.data() - rho.data()).camax() < 1e-15);
        let mixed = apply_channel(&rho, &depolarizing_kraus(1.0, 1), &[1]).unwrap();
        let reduced = partial_trace(&rho, &QubitSubset::new(vec![0], 2).unwrap()).unwrap();
        let half = DensityMatrix::maximally_mixed(SubsystemLayout::qubits(1).unwrap());
        let expected = crate::qstate::tensor(&reduced, &half).unwrap();
        assert!((mixed.data() - expected.data()).camax() < 1e-14);
    }

    #[test]
    fn amplitude_damping_on_excited_state() {
        let gamma = 0.3;
        let out = apply_channel(&basis(&[1]), &amplitude_damping_kraus(gamma), &[0]).unwrap();
        assert!((out.data()[(0, 0)].re - gamma).abs() < 1e-15);
        assert!((out.data()[(1, 1)].re - (1.0 - gamma)).abs() < 1e-15);
        assert!(out.data()[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn incomplete_kraus_rejected() {
        let bad = vec![CMatrix::identity(2, 2).scale(0.9)];
        assert!(matches!(apply_channel(&basis(&[0]), &bad, &[0]), Err(Error::IncompleteKraus { .. })));
    }

    #[test]
    fn kraus_sets_are_complete() {
        for ops in [depolarizing_kraus(0.37, 1), depolarizing_kraus(0.9, 2), amplitude_damping_kraus(0.2), dephasing_kraus(0.6)] {
            let d = ops[0].nrows();
            let s = ops.iter().fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
            assert!((s - CMatrix::identity(d, d)).camax() < 1e-12);
        }
    }

    #[test]
    fn noise_model_ranges() {
        assert!(NoiseModel::ideal().validate().is_ok());
        assert!(NoiseModel { depolarizing_2q: -0.1, ..Default::default() }.validate().is_err());
        assert!(NoiseModel { readout_flip: 0.6, ..Default::default() }.validate().is_err());
        assert!(NoiseModel { dephasing: 1.0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn greedy_layering() {
        let gates = vec![Gate::x(0), Gate::x(1), Gate::cnot(0, 1).unwrap(), Gate::x(2), Gate::cnot(1, 2).unwrap()];
        let c = Circuit::new(3, gates).unwrap();
        assert_eq!(c.layers(), vec![vec![0, 1, 3], vec![2], vec![4]]);
        assert_eq!(c.depth(), 3);
    }

    #[test]
    fn full_depolarizing_reaches_maximally_mixed() {
        let noise = NoiseModel { depolarizing_1q: 1.0, depolarizing_2q: 1.0, ..Default::default() };
        let c = wstates::w_circuit(4, CircuitStyle::LinearCascade).unwrap();
        let out = simulate(&c, &noise).unwrap();
        let mixed = DensityMatrix::maximally_mixed(SubsystemLayout::qubits(4).unwrap());
        assert!(trace_distance(&out, &mixed).unwrap() < 1e-8);
    }

    #[test]
    fn noiseless_sweep_has_unit_fidelity() {
        let sweep = fidelity_sweep(1..=5, &NoiseModel::ideal(), CircuitStyle::LinearCascade).unwrap();
        assert!(sweep.rows.iter().all(|r| (r.fidelity - 1.0).abs() < 1e-10));
    }

    #[test]
    fn simulate_respects_cap() {
        let c = Circuit::new(11, vec![Gate::x(0)]).unwrap();
        assert!(matches!(simulate(&c, &NoiseModel::ideal()), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn fit_recovers_a_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 2.0 * x).collect();
        let (b, a, r2) = linear_fit(&xs, &ys);
        assert!((b + 2.0).abs() < 1e-12 && (a - 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
