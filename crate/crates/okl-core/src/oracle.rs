//! Independent reference solvers used for verification.
//!
//! Everything here trades speed for transparency and is deliberately
//! decoupled from the production solver: this is the only module in the
//! repository that performs eigendecompositions, since the point of the
//! main solver is to avoid them.

use crate::dataio::{GramMatrix, MultiTaskDataset};
use crate::losses::{self, LossSpec};
use crate::mat::SquareMat;
use crate::regularizers::RegularizerSpec;

/// Jacobi eigendecomposition of a symmetric matrix.
/// Returns eigenvalues and the eigenvector matrix (columns).
pub fn sym_eigen(m: &SquareMat) -> (Vec<f64>, SquareMat) {
    let n = m.dim();
    let mut a = m.clone();
    a.symmetrize();
    let mut v = SquareMat::identity(n);
    let fro = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q) * a.get(p, q);
            }
        }
        if (2.0 * off).sqrt() <= 1e-14 * fro {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for j in 0..n {
                    let apj = a.get(p, j);
                    let aqj = a.get(q, j);
                    a.set(p, j, c * apj - s * aqj);
                    a.set(q, j, s * apj + c * aqj);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let eigs = (0..n).map(|i| a.get(i, i)).collect();
    (eigs, v)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &SquareMat) -> f64 {
    let (eigs, _) = sym_eigen(m);
    eigs.into_iter().fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto the PSD cone: symmetrize, eigendecompose, clip
/// negative eigenvalues to zero.
pub fn psd_project(m: &SquareMat) -> SquareMat {
    let n = m.dim();
    let (eigs, v) = sym_eigen(m);
    let mut out = SquareMat::zeros(n);
    for l in 0..n {
        let lam = eigs[l].max(0.0);
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let vil = v.get(i, l) * lam;
            if vil == 0.0 {
                continue;
            }
            for j in 0..n {
                out.add(i, j, vil * v.get(j, l));
            }
        }
    }
    out.symmetrize();
    out
}

/// Projected-gradient settings for [`maximize_over_psd_cone`].
#[derive(Debug, Clone, Copy)]
pub struct PGConfig {
    pub step0: f64,
    pub max_iter: usize,
    /// Stop once an accepted projected step moves less than this (Frobenius).
    pub tol_step: f64,
}

impl Default for PGConfig {
    fn default() -> Self {
        PGConfig {
            step0: 1.0,
            max_iter: 200_000,
            tol_step: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgResult {
    pub theta: SquareMat,
    pub value: f64,
    pub converged: bool,
    pub iters: usize,
}

/// Numeric root of the per-cell stationarity `rho = (p/2) sign(z) |z|^{p-1}`
/// by bracket doubling and bisection; no closed form involved.
fn stationary_cell(rho: f64, p: f64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    let slope = |z: f64| 0.5 * p * z.signum() * z.abs().powf(p - 1.0);
    let sign = rho.signum();
    let mut hi = sign;
    let mut guard = 0;
    while (rho - slope(hi)).signum() == sign && guard < 4000 {
        hi *= 2.0;
        guard += 1;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (rho - slope(mid)).signum() == sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Numerically maximizes `sum Theta_rs rho_rs - (1/2) sum |Theta_rs|^p` over
/// the PSD cone by projected gradient ascent with a backtracking step.
/// `rho` is already in the `rho` scale (inner products divided by 2 lambda).
///
/// The iteration is warm-started from a bisection solve of the separable
/// stationarity condition (projected onto the cone); for `p` close to 1 the
/// maximizer's entries span many orders of magnitude and cold-started
/// gradient ascent is hopelessly ill-conditioned. The gradient loop then
/// verifies and polishes the point.
pub fn maximize_over_psd_cone(rho: &SquareMat, k: u32, cfg: &PGConfig) -> PgResult {
    let t = rho.dim();
    let kf = k as f64;
    let p = 2.0 * kf / (2.0 * kf - 1.0);
    let objective = |m: &SquareMat| -> f64 {
        rho.dot(m) - 0.5 * m.as_slice().iter().map(|&x| x.abs().powf(p)).sum::<f64>()
    };
    let gradient = |m: &SquareMat| -> SquareMat {
        let mut g = SquareMat::zeros(t);
        for i in 0..t {
            for j in 0..t {
                let x = m.get(i, j);
                g.set(
                    i,
                    j,
                    rho.get(i, j) - 0.5 * p * x.signum() * x.abs().powf(p - 1.0),
                );
            }
        }
        g
    };

    let mut theta = psd_project(&rho.map(|v| stationary_cell(v, p)));
    let mut value = objective(&theta);
    let mut step = cfg.step0;
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iter {
        iters += 1;
        let g = gradient(&theta);
        let mut trial = theta.clone();
        for i in 0..t {
            for j in 0..t {
                trial.add(i, j, step * g.get(i, j));
            }
        }
        let cand = psd_project(&trial);
        let cand_value = objective(&cand);
        if cand_value >= value {
            let move_norm = cand.max_abs_diff(&theta);
            theta = cand;
            value = cand_value;
            step *= 1.2;
            if move_norm < cfg.tol_step {
                converged = true;
                break;
            }
        } else {
            step *= 0.5;
            if step < 1e-17 {
                converged = true;
                break;
            }
        }
    }
    PgResult {
        theta,
        value,
        converged,
        iters,
    }
}

/// Central finite differences, componentwise.
pub fn finite_diff_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut buf = x.to_vec();
    for i in 0..x.len() {
        buf[i] = x[i] + h;
        let up = f(&buf);
        buf[i] = x[i] - h;
        let down = f(&buf);
        buf[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

// ---- alternating reference solver ----------------------------------------

#[derive(Debug, Clone)]
pub struct PrimalNumericResult {
    pub theta: SquareMat,
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub outer_iters: usize,
}

/// Primal objective at the feasible pair `(Theta, beta = alpha Theta)`,
/// computed directly from `alpha` without any solver caches.
pub fn primal_value(
    data: &MultiTaskDataset,
    gram: &GramMatrix,
    loss: &LossSpec,
    reg: &RegularizerSpec,
    theta: &SquareMat,
    alpha: &[f64],
) -> f64 {
    let n = data.n();
    let t = data.num_tasks();
    let mut inner = SquareMat::zeros(t);
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            inner.add(
                data.task(i) - 1,
                data.task(j) - 1,
                alpha[i] * alpha[j] * gram.get(i, j),
            );
        }
    }
    inner.symmetrize();
    let mut loss_sum = 0.0;
    for i in 0..n {
        let mut f = 0.0;
        for j in 0..n {
            f += alpha[j] * theta.get(data.task(i) - 1, data.task(j) - 1) * gram.get(i, j);
        }
        loss_sum += losses::loss(loss, data.label(i), f).expect("labels validated on entry");
    }
    let theta_k =
        crate::model::OutputKernel::from_mat(theta.clone()).expect("oracle Theta must stay PSD");
    reg.c * loss_sum + 0.5 * theta.dot(&inner) + reg.lambda * reg.v_of_theta(&theta_k)
}

/// Adaptive damping state for the alternating `Theta` update. The plain
/// fixed-point iteration can cycle; whenever the update residual stops
/// contracting, the step factor is shrunk.
#[derive(Debug, Clone, Copy)]
pub struct ThetaDamping {
    tau: f64,
    prev_residual: f64,
}

impl Default for ThetaDamping {
    fn default() -> Self {
        ThetaDamping {
            tau: 1.0,
            prev_residual: f64::INFINITY,
        }
    }
}

impl ThetaDamping {
    /// Moves `theta` towards `theta_map` by the current factor and adapts
    /// the factor from the observed residual: shrink while the iteration is
    /// not contracting, recover slowly once it is. Returns the residual.
    pub fn step(&mut self, theta: &mut SquareMat, theta_map: &SquareMat) -> f64 {
        let residual = theta_map.max_abs_diff(theta);
        if residual > 0.95 * self.prev_residual {
            self.tau = (self.tau * 0.7).max(0.02);
        } else {
            self.tau = (self.tau * 1.05).min(1.0);
        }
        self.prev_residual = residual;
        let t = theta.dim();
        for i in 0..t {
            for j in 0..t {
                let v = theta.get(i, j) + self.tau * (theta_map.get(i, j) - theta.get(i, j));
                theta.set(i, j, v);
            }
        }
        residual
    }
}

/// Reference solver: alternates an exact fixed-`Theta` kernel-machine solve
/// (in its dual variables) with the damped analytic `Theta` update on the
/// induced inner products. Returns the best (lowest) feasible primal value
/// seen, which is always an upper bound on the optimum.
pub fn solve_primal_numeric(
    data: &MultiTaskDataset,
    gram: &GramMatrix,
    loss: &LossSpec,
    reg: &RegularizerSpec,
    max_outer: usize,
) -> PrimalNumericResult {
    let n = data.n();
    let t = data.num_tasks();
    let mut theta = SquareMat::identity(t);
    let mut best_obj = f64::INFINITY;
    let mut best_theta = theta.clone();
    let mut best_alpha = vec![0.0; n];
    let mut converged = false;
    let mut outer_iters = 0;
    let mut damping = ThetaDamping::default();

    for outer in 0..max_outer {
        outer_iters = outer + 1;
        let alpha = solve_fixed_theta(data, gram, loss, reg.c, &theta);

        let mut inner = SquareMat::zeros(t);
        for i in 0..n {
            if alpha[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                inner.add(
                    data.task(i) - 1,
                    data.task(j) - 1,
                    alpha[i] * alpha[j] * gram.get(i, j),
                );
            }
        }
        inner.symmetrize();
        let theta_map = reg
            .theta_from_rho(&inner)
            .expect("inner-product matrix is symmetric PSD")
            .mat()
            .clone();

        let obj = primal_value(data, gram, loss, reg, &theta_map, &alpha);
        if obj < best_obj {
            best_obj = obj;
            best_theta = theta_map.clone();
            best_alpha = alpha;
        }
        let residual = damping.step(&mut theta, &theta_map);
        if residual <= 1e-8 * (1.0 + theta.max_abs()) {
            converged = true;
            break;
        }
    }
    PrimalNumericResult {
        theta: best_theta,
        alpha: best_alpha,
        objective: best_obj,
        converged,
        outer_iters,
    }
}

/// Exactly solves `max_alpha -C sum L*(-alpha_i/C) - (1/2) alpha' Gt alpha`
/// where `Gt_ij = Theta[t_i][t_j] k_ij` (the fixed-`Theta` subproblem).
/// Squared loss uses a direct Cholesky solve; hinge and epsilon-SVR use
/// exact coordinate ascent.
pub fn solve_fixed_theta(
    data: &MultiTaskDataset,
    gram: &GramMatrix,
    loss: &LossSpec,
    c: f64,
    theta: &SquareMat,
) -> Vec<f64> {
    solve_fixed_theta_from(data, gram, loss, c, theta, None, 1e-12, 20_000)
}

/// [`solve_fixed_theta`] with a warm start and an explicit coordinate-step
/// tolerance; the bench harness trades inner precision for speed the way a
/// production alternating solver would.
#[allow(clippy::too_many_arguments)]
pub fn solve_fixed_theta_from(
    data: &MultiTaskDataset,
    gram: &GramMatrix,
    loss: &LossSpec,
    c: f64,
    theta: &SquareMat,
    warm_start: Option<&[f64]>,
    step_tol: f64,
    max_passes: usize,
) -> Vec<f64> {
    let n = data.n();
    let mut gt = SquareMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            gt.set(
                i,
                j,
                theta.get(data.task(i) - 1, data.task(j) - 1) * gram.get(i, j),
            );
        }
    }

    if matches!(loss, LossSpec::Squared) {
        // (Gt + I/(2C)) alpha = y
        let mut a = gt.clone();
        for i in 0..n {
            a.add(i, i, 1.0 / (2.0 * c));
        }
        return cholesky_solve(&a, data.labels());
    }

    let mut alpha = warm_start.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut w = vec![0.0; n]; // w = Gt alpha
    if warm_start.is_some() {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += gt.get(j, i) * alpha[i];
            }
            w[j] = acc;
        }
    }
    for _pass in 0..max_passes {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let y = data.label(i);
            let gii = gt.get(i, i);
            let (lo, hi) = match loss {
                LossSpec::Hinge => {
                    if y > 0.0 {
                        (-alpha[i], c - alpha[i])
                    } else {
                        (-c - alpha[i], -alpha[i])
                    }
                }
                LossSpec::EpsSvr { .. } => (-c - alpha[i], c - alpha[i]),
                LossSpec::Squared => unreachable!(),
            };
            // local objective: L*((-a-d)/C) + (gii d^2 + 2 w_i d) / (2C)
            let local = |d: f64| -> f64 {
                let lstar = match loss {
                    LossSpec::Hinge => -y * (alpha[i] + d) / c,
                    LossSpec::EpsSvr { epsilon } => {
                        (-y * (alpha[i] + d) + epsilon * (alpha[i] + d).abs()) / c
                    }
                    LossSpec::Squared => unreachable!(),
                };
                lstar + (gii * d * d + 2.0 * w[i] * d) / (2.0 * c)
            };
            let mut candidates: Vec<f64> = vec![lo, hi];
            match loss {
                LossSpec::Hinge => {
                    if gii > 0.0 {
                        candidates.push(((y - w[i]) / gii).clamp(lo, hi));
                    }
                }
                LossSpec::EpsSvr { epsilon } => {
                    if gii > 0.0 {
                        for s in [-1.0, 1.0] {
                            let d = ((y - w[i] - s * epsilon) / gii).clamp(lo, hi);
                            if (alpha[i] + d) * s >= 0.0 {
                                candidates.push(d);
                            }
                        }
                    }
                    let kink = (-alpha[i]).clamp(lo, hi);
                    candidates.push(kink);
                }
                LossSpec::Squared => unreachable!(),
            }
            let mut best = 0.0;
            let mut best_val = local(0.0);
            for &d in &candidates {
                let v = local(d);
                if v < best_val {
                    best_val = v;
                    best = d;
                }
            }
            if best != 0.0 {
                alpha[i] += best;
                for j in 0..n {
                    w[j] += best * gt.get(j, i);
                }
                max_step = max_step.max(best.abs());
            }
        }
        if max_step <= step_tol * (1.0 + c) {
            break;
        }
    }
    alpha
}

fn cholesky_solve(a: &SquareMat, b: &[f64]) -> Vec<f64> {
    let n = a.dim();
    let mut l = a.clone();
    for j in 0..n {
        let mut d = l.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        let d = d.max(f64::MIN_POSITIVE).sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = l.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    // forward then backward substitution
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let sub = l.get(i, k) * y[k];
            y[i] -= sub;
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let sub = l.get(k, i) * y[k];
            y[i] -= sub;
        }
        y[i] /= l.get(i, i);
    }
    y
}
