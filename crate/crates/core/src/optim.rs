//! Small smooth optimizers used by the see-saw: L-BFGS and a simplex QP.

use std::collections::VecDeque;

pub(crate) struct LbfgsOptions {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop when the relative decrease over one iteration drops below this.
    pub rel_tol: f64,
    pub grad_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { max_iters: 300, memory: 12, rel_tol: 1e-14, grad_tol: 1e-12 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x`; `f` returns the value and writes the gradient.
/// Returns the final value.
pub(crate) fn lbfgs(x: &mut Vec<f64>, opts: &LbfgsOptions, mut f: impl FnMut(&[f64], &mut [f64]) -> f64) -> f64 {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    for _ in 0..opts.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if !fx.is_finite() || gnorm <= opts.grad_tol {
            break;
        }
        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        } else {
            d.iter_mut().for_each(|v| *v /= gnorm.max(1.0));
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|v| -v / gnorm.max(1.0)).collect();
            slope = dot(&g, &d);
            history.clear();
        }
        // Backtracking Armijo search.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            trial.iter_mut().zip(x.iter()).zip(&d).for_each(|((t, xi), di)| *t = xi + step * di);
            let ft = f(&trial, &mut g_trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(ft) = accepted else { break };
        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let decrease = fx - ft;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        fx = ft;
        if sy > 1e-300 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        if decrease <= opts.rel_tol * fx.abs().max(1e-300) {
            break;
        }
    }
    fx
}

/// Minimizes `wᵀQw − 2cᵀw` over the probability simplex with accelerated
/// projected gradient, warm-started from `w`.
pub(crate) fn simplex_qp(q: &[Vec<f64>], c: &[f64], w: &mut Vec<f64>, iters: usize) {
    let m = c.len();
    if m == 0 {
        return;
    }
    // Gershgorin bound on λ_max(Q).
    let lip = 2.0 * q.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if lip <= 0.0 {
        return;
    }
    let mut x = crate::linalg::project_simplex(w);
    let mut yv = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad: Vec<f64> = (0..m).map(|i| 2.0 * (dot(&q[i], &yv) - c[i])).collect();
        let step: Vec<f64> = yv.iter().zip(&grad).map(|(y, g)| y - g / lip).collect();
        let x_next = crate::linalg::project_simplex(&step);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        let change: f64 = x_next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        yv = x_next.iter().zip(&x).map(|(a, b)| a + momentum * (a - b)).collect();
        x = x_next;
        t = t_next;
        if change < 1e-15 {
            break;
        }
    }
    *w = x;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_minimizes_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let v = lbfgs(&mut x, &LbfgsOptions { max_iters: 500, ..Default::default() }, |p, g| {
            let (a, b) = (p[0], p[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        });
        assert!(v < 1e-12, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn simplex_qp_finds_interior_point() {
        // min ‖w − c‖² on the simplex with c inside it.
        let q = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let c = [0.2, 0.3, 0.5];
        let mut w = vec![1.0, 0.0, 0.0];
        simplex_qp(&q, &c, &mut w, 2000);
        for (a, b) in w.iter().zip(&c) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
