//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use kappalab::ldp::{fourier_spectrum, low_degree_mass, measure_distribution};
use kappalab::noise::{simulate, NoiseModel};
use kappalab::qstate::{random, tensor, DensityMatrix, SubsystemLayout};
use kappalab::separability::{self, DeltaConfig};
use kappalab::wstates::{w_circuit, CircuitStyle};
use kappalab_cli::config::{resolve, Experiment, RawConfig};
use kappalab_cli::experiments;
use kappalab_cli::report::{Cell, Outcome, Table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn run(exp: Experiment, text: &str) -> Outcome {
    let (cfg, diags) = resolve(exp, &RawConfig::parse(text));
    assert!(diags.is_empty(), "{diags:?}");
    experiments::run(&cfg).expect("experiment runs")
}

fn bodies(out: &Outcome) -> Vec<String> {
    out.tables.iter().map(Table::body).collect()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// Worst sandwich violation and certificate deviation seen anywhere.
#[derive(Default)]
struct Integrity {
    violation: f64,
    deviation: f64,
    checks: usize,
}

impl Integrity {
    fn record(&mut self, violation: f64, deviation: f64) {
        self.violation = self.violation.max(violation);
        self.deviation = self.deviation.max(deviation);
        self.checks += 1;
    }

    fn record_bounds(&mut self, rho: &DensityMatrix, b: &separability::SepDistanceBounds) {
        let c = b.verify(rho).expect("certificates re-verify");
        self.record(c.sandwich_violation, c.upper_deviation.max(c.lower_deviation));
    }

    fn record_estimate(&mut self, est: &Value) {
        self.record(num(&est["max_sandwich_violation"]), num(&est["max_certificate_deviation"]));
    }
}

struct Verdict {
    id: u32,
    pass: bool,
    detail: String,
    secs: f64,
}

fn criterion1(integrity: &mut Integrity) -> (Verdict, Vec<String>) {
    let out = run(Experiment::KappaW, "sweep.n = [4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14]\nkappa.kmax = 8\n");
    let ests = out.results["estimates"].as_array().unwrap();
    for e in ests {
        integrity.record_estimate(e);
    }
    let at = |n: usize, key: &str| num(&ests.iter().find(|e| e["n"] == n).unwrap()[key]);
    let slope = |key: &str| (at(14, key).log2() - at(8, key).log2()) / 6.0;
    let s = slope("lower");
    let s0 = slope("lower_zero_tail");
    for line in out.results["comparison"].as_array().unwrap() {
        println!("    {}", line.as_str().unwrap());
    }
    let verdict = Verdict {
        id: 1,
        pass: s >= 0.8,
        detail: format!(
            "log2 K lower slope over n=8..14 = {s:.4} (>= 0.8); zero-tail lower gives {s0:.4}; K(W_14) in [{:.2}, {:.2}]",
            at(14, "lower"),
            at(14, "upper")
        ),
        secs: 0.0,
    };
    (verdict, bodies(&out))
}

fn criterion2(integrity: &mut Integrity, cases: usize) -> (Verdict, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = DeltaConfig::default();
    let mut table = Table::new("two_qubit", &["case", "rank", "lower", "upper"]);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let rank = rng.random_range(1..=4);
        let rho = random::density_matrix(SubsystemLayout::qubits(2).unwrap(), rank, &mut rng);
        let b = separability::delta(&rho, &cfg).expect("2-qubit delta");
        integrity.record_bounds(&rho, &b);
        worst = worst.max(b.upper - b.lower);
        table.push(vec![case.into(), rank.into(), Cell::Float(b.lower), Cell::Float(b.upper)]);
    }
    let verdict = Verdict {
        id: 2,
        pass: worst <= 2e-3,
        detail: format!("{cases} random 2-qubit states: max(upper - lower) = {worst:.3e} (<= 2e-3)"),
        secs: 0.0,
    };
    (verdict, vec![table.body()])
}

fn random_separable(rng: &mut ChaCha8Rng) -> DensityMatrix {
    let n = rng.random_range(2..=4);
    let terms = rng.random_range(1..=6);
    let mut weights: Vec<f64> = (0..terms).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let states: Vec<DensityMatrix> = (0..terms)
        .map(|_| {
            let mut rho = random::pure_state(SubsystemLayout::qubits(1).unwrap(), rng).density();
            for _ in 1..n {
                let q = random::pure_state(SubsystemLayout::qubits(1).unwrap(), rng).density();
                rho = tensor(&rho, &q).unwrap();
            }
            rho
        })
        .collect();
    let pairs: Vec<(f64, &DensityMatrix)> = weights.iter().copied().zip(states.iter()).collect();
    DensityMatrix::mixture(&pairs).unwrap()
}

fn criterion3(integrity: &mut Integrity) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = DeltaConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rho = random_separable(&mut rng);
        let b = separability::delta(&rho, &cfg).expect("delta on a separable mixture");
        integrity.record_bounds(&rho, &b);
        worst = worst.max(b.upper);
    }
    Verdict {
        id: 3,
        pass: worst < 1e-4,
        detail: format!("100 random separable mixtures on 2-4 qubits: max upper = {worst:.3e} (< 1e-4)"),
        secs: 0.0,
    }
}

fn criterion5(integrity: &mut Integrity) -> (Verdict, Vec<String>) {
    let split = run(
        Experiment::Regroup,
        "state.family = \"catpairs\"\nstate.n = 6\nstate.permutation = [1, 3, 5, 2, 4, 6]\nstate.groups = [3, 3]\n",
    );
    let aligned = run(Experiment::Regroup, "state.family = \"catpairs\"\nstate.n = 6\nstate.groups = [2, 2, 2]\n");
    for out in [&split, &aligned] {
        integrity.record_estimate(&out.results["grouped"]);
        integrity.record_estimate(&out.results["qubits"]);
    }
    let kd = num(&split.results["grouped"]["lower"]);
    let aligned_upper = num(&aligned.results["grouped"]["upper"]);
    let k_qubits = num(&split.results["qubits"]["upper"]);
    let verdict = Verdict {
        id: 5,
        pass: kd > 0.0 && aligned_upper <= 1e-4,
        detail: format!(
            "split-pair grouping into two dim-8 systems: K_d lower = {kd:.6} (> 0); aligned pairs: K upper = {aligned_upper:.3e} (<= 1e-4); qubit-level K upper = {k_qubits:.6}"
        ),
        secs: 0.0,
    };
    let mut b = bodies(&split);
    b.extend(bodies(&aligned));
    (verdict, b)
}

fn criterion6() -> (Verdict, Vec<String>) {
    let out = run(
        Experiment::FidelitySweep,
        "sweep.n = [2, 3, 4, 5, 6, 7, 8, 9, 10]\nnoise.depolarizing_2q = 0.01\ncircuit.style = \"linear_cascade\"\n",
    );
    let decreasing = out.results["strictly_decreasing"] == Value::Bool(true);
    let r2 = num(&out.results["r_squared"]);
    let verdict = Verdict {
        id: 6,
        pass: decreasing && r2 >= 0.95,
        detail: format!(
            "n=2..10 at depolarizing_2q=0.01: strictly decreasing = {decreasing}; log-fidelity slope = {:.5}, R^2 = {r2:.5} (>= 0.95)",
            num(&out.results["log_fidelity_slope"])
        ),
        secs: 0.0,
    };
    (verdict, bodies(&out))
}

fn criterion7(integrity: &mut Integrity) -> Verdict {
    let out = run(
        Experiment::NoisyKappa,
        "state.n = 6\nnoise.knob = \"depolarizing_2q\"\nnoise.levels = [0.0, 0.3]\n",
    );
    let rows = out.results["rows"].as_array().unwrap();
    for r in rows {
        integrity.record_estimate(r);
    }
    let (clean, noisy) = (&rows[0], &rows[1]);
    let lower0 = num(&clean["k_lower"]);
    let upper3 = num(&noisy["k_upper"]);
    Verdict {
        id: 7,
        pass: upper3 < lower0,
        detail: format!(
            "n=6: K upper at depolarizing_2q=0.3 = {upper3:.6} < K lower at 0 = {lower0:.6} (fidelity {:.4} -> {:.4})",
            num(&clean["fidelity"]),
            num(&noisy["fidelity"])
        ),
        secs: 0.0,
    }
}

fn criterion8() -> (Verdict, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut parseval: f64 = 0.0;
    let mut damping: f64 = 0.0;
    let mut check_parseval = |probs: &[f64], coeffs: &[f64]| {
        let lhs: f64 = coeffs.iter().map(|c| c * c).sum();
        let rhs = probs.len() as f64 * probs.iter().map(|p| p * p).sum::<f64>();
        parseval = parseval.max((lhs - rhs).abs());
    };
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let rank = rng.random_range(1..=3);
        let q = rng.random_range(0.0..=0.5);
        let rho = random::density_matrix(SubsystemLayout::qubits(n).unwrap(), rank, &mut rng);
        let clean = measure_distribution(&rho, 0.0).unwrap();
        let flipped = measure_distribution(&rho, q).unwrap();
        let (sc, sf) = (fourier_spectrum(&clean), fourier_spectrum(&flipped));
        check_parseval(clean.probs(), sc.coefficients());
        check_parseval(flipped.probs(), sf.coefficients());
        for (mask, (c, f)) in sc.coefficients().iter().zip(sf.coefficients()).enumerate() {
            let expected = (1.0 - 2.0 * q).powi(mask.count_ones() as i32) * c;
            damping = damping.max((f - expected).abs());
        }
    }
    let w4 = w_circuit(4, CircuitStyle::LinearCascade).unwrap();
    let mut mass = |p: f64| {
        let noise = NoiseModel { depolarizing_1q: p, depolarizing_2q: p, ..NoiseModel::ideal() };
        let dist = measure_distribution(&simulate(&w4, &noise).unwrap(), 0.0).unwrap();
        let spec = fourier_spectrum(&dist);
        check_parseval(dist.probs(), spec.coefficients());
        low_degree_mass(&spec, 2).unwrap().mass_fraction
    };
    let (m0, m2) = (mass(0.0), mass(0.2));
    let out = run(Experiment::Ldp, "state.n = 4\nnoise.knob = \"depolarizing\"\nnoise.levels = [0.0, 0.2]\nldp.degrees = [1, 2, 3, 4]\n");
    parseval = parseval.max(num(&out.results["max_parseval_deviation"]));
    let verdict = Verdict {
        id: 8,
        pass: parseval <= 1e-8 && damping <= 1e-9 && m2 > m0,
        detail: format!(
            "Parseval max deviation {parseval:.2e} (<= 1e-8); flip damping max deviation over 50 cases {damping:.2e} (<= 1e-9); W_4 mass_fraction(d=2): p=0.2 {m2:.6} > p=0 {m0:.6}"
        ),
        secs: 0.0,
    };
    (verdict, bodies(&out))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    // libtest-style flags (e.g. --nocapture, a name filter) are accepted and ignored.
    let mut integrity = Integrity::default();
    let mut verdicts = Vec::new();
    let mut report = |mut v: Verdict, secs: f64| {
        v.secs = secs;
        println!("criterion {} {}: {} [{:.1}s]", v.id, if v.pass { "PASS" } else { "FAIL" }, v.detail, v.secs);
        verdicts.push(v);
    };

    let ((v1, b1), t) = timed(|| criterion1(&mut integrity));
    report(v1, t);
    let ((v2, b2), t) = timed(|| criterion2(&mut integrity, 200));
    report(v2, t);
    let (v3, t) = timed(|| criterion3(&mut integrity));
    report(v3, t);
    let ((v5, b5), t5) = timed(|| criterion5(&mut integrity));
    let ((v6, b6), t6) = timed(criterion6);
    let (v7, t7) = timed(|| criterion7(&mut integrity));
    let ((v8, b8), t8) = timed(criterion8);

    let v4 = Verdict {
        id: 4,
        pass: integrity.violation <= 1e-6 && integrity.deviation <= 1e-8,
        detail: format!(
            "{} bound sets: max sandwich violation {:.2e} (<= 1e-6), max certificate deviation {:.2e} (<= 1e-8)",
            integrity.checks, integrity.violation, integrity.deviation
        ),
        secs: 0.0,
    };
    report(v4, 0.0);
    report(v5, t5);
    report(v6, t6);
    report(v7, t7);
    report(v8, t8);

    let (same, t9) = timed(|| {
        let mut scratch = Integrity::default();
        let again = [
            (b1, criterion1(&mut scratch).1),
            (b2, criterion2(&mut scratch, 200).1),
            (b5, criterion5(&mut scratch).1),
            (b6, criterion6().1),
            (b8, criterion8().1),
        ];
        again.iter().filter(|(a, b)| a == b).count()
    });
    report(
        Verdict {
            id: 9,
            pass: same == 5,
            detail: format!("{same}/5 repeated runs (criteria 1, 2, 5, 6, 8) gave byte-identical CSV bodies"),
            secs: 0.0,
        },
        t9,
    );

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    if failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
