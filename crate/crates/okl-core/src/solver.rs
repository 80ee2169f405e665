//! Stochastic dual coordinate ascent on the unconstrained output-kernel dual.
//!
//! The dual objective is
//!
//! ```text
//! q(alpha) = -C sum_i L*_i(-alpha_i / C) - sum_{r,s} pen(<alpha^r, K_rs alpha^s>)
//! ```
//!
//! where `pen` is the regularizer's per-cell dual penalty. Each step exactly
//! maximizes `q` over one coordinate. Two caches make the per-coordinate
//! subproblem `O(T)`:
//!
//! - `B` (`n x T`): `B[i][s] = sum_{j: t_j = s} k_ij alpha_j`
//! - `c` (`T x T`): `c[s][z] = <alpha^s, K_sz alpha^z>`
//!
//! Updating a coordinate costs `O(n + T)` for cache maintenance. Training
//! stops once the relative duality gap `(P - D) / max(1, |P|)` falls below
//! the configured tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cubic;
use crate::dataio::{GramMatrix, MultiTaskDataset};
use crate::kernels::KernelSpec;
use crate::losses::{self, ConjugateTerm, LossSpec};
use crate::mat::SquareMat;
use crate::model::{ConvergenceReport, Model, OutputKernel};
use crate::regularizers::{RegKind, RegularizerSpec};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("gram has n={gram_n} but dataset has n={data_n}")]
    DimensionMismatch { gram_n: usize, data_n: usize },
    #[error("invalid label at sample {sample}: {source}")]
    Label {
        sample: usize,
        source: losses::LossError,
    },
    #[error("loss error: {0}")]
    Loss(#[from] losses::LossError),
    #[error("regularizer error: {0}")]
    Reg(#[from] crate::regularizers::RegError),
    #[error("regularizer C={reg_c} disagrees with solver C={config_c}")]
    InconsistentC { reg_c: f64, config_c: f64 },
    #[error("invalid solver config: {0}")]
    BadConfig(String),
    #[error("non-finite {what} encountered; solver state is corrupt")]
    NonFinite { what: &'static str },
    #[error("cubic subproblem requires pnorm k=1, got {0:?}")]
    CubicUnavailable(RegKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// A fresh random permutation every epoch.
    Permutation,
    /// Uniform with replacement, `n` draws per epoch.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubproblemMode {
    Newton,
    Cubic,
    /// Cubic when legal (pnorm `k = 1`), Newton otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub c: f64,
    /// Relative duality-gap target.
    pub gap_tol: f64,
    pub max_epochs: u64,
    /// Step-size tolerance of the one-dimensional subproblem solver.
    pub newton_tol: f64,
    pub newton_max_iter: u32,
    pub seed: u64,
    pub sampling: Sampling,
    /// Epochs between duality-gap evaluations.
    pub gap_check_every: u64,
    pub subproblem: SubproblemMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: 1.0,
            gap_tol: 1e-3,
            max_epochs: 1000,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            seed: 0,
            sampling: Sampling::Permutation,
            gap_check_every: 1,
            subproblem: SubproblemMode::Auto,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.c > 0.0) {
            return Err(SolverError::BadConfig(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.gap_tol > 0.0 && self.gap_tol < 1.0) {
            return Err(SolverError::BadConfig(format!(
                "gap_tol must lie in (0,1), got {}",
                self.gap_tol
            )));
        }
        if self.max_epochs == 0 || self.gap_check_every == 0 || self.newton_max_iter == 0 {
            return Err(SolverError::BadConfig(
                "max_epochs, gap_check_every and newton_max_iter must be positive".into(),
            ));
        }
        if !(self.newton_tol > 0.0) {
            return Err(SolverError::BadConfig(format!(
                "newton_tol must be positive, got {}",
                self.newton_tol
            )));
        }
        Ok(())
    }
}

/// Mutable optimizer state: the dual vector and its caches.
#[derive(Debug, Clone)]
pub struct DualState {
    alpha: Vec<f64>,
    /// `n x T` row-major: `b[i*T + s] = sum_{j: t_j = s+1} k_ij alpha_j`.
    b: Vec<f64>,
    /// `c[s][z] = <alpha^s, K_sz alpha^z>`.
    c: SquareMat,
    epoch: u64,
    rng: ChaCha8Rng,
}

impl DualState {
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn inner_products(&self) -> &SquareMat {
        &self.c
    }

    pub fn b_row(&self, i: usize, num_tasks: usize) -> &[f64] {
        &self.b[i * num_tasks..(i + 1) * num_tasks]
    }
}

/// Outcome of one coordinate subproblem.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemResult {
    pub delta: f64,
    pub iters: u32,
    /// Scalar penalty-cell evaluations performed; per-iteration work is
    /// `O(T)` exactly when this stays proportional to `T * iters`.
    pub cell_evals: u64,
}

/// Per-epoch diagnostics from [`fit_traced`].
#[derive(Debug, Clone, Copy)]
pub struct EpochStat {
    pub epoch: u64,
    pub dual: f64,
    /// `+inf` when the entropy primal is undefined at the iterate.
    pub primal: f64,
    pub gap: f64,
    /// Max-abs drift of the incremental `B` cache vs. a scratch recompute.
    pub drift_b: f64,
    pub drift_c: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    pub epochs: Vec<EpochStat>,
}

pub struct PrimalReport {
    pub value: f64,
    pub theta: OutputKernel,
}

pub struct Solver<'a> {
    data: &'a MultiTaskDataset,
    gram: &'a GramMatrix,
    loss: LossSpec,
    reg: RegularizerSpec,
    config: SolverConfig,
    state: DualState,
}

impl<'a> Solver<'a> {
    /// Validates inputs and initializes `alpha = 0` with zeroed caches.
    pub fn new(
        data: &'a MultiTaskDataset,
        gram: &'a GramMatrix,
        loss: LossSpec,
        reg: RegularizerSpec,
        config: SolverConfig,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        if gram.n() != data.n() {
            return Err(SolverError::DimensionMismatch {
                gram_n: gram.n(),
                data_n: data.n(),
            });
        }
        for i in 0..data.n() {
            loss.validate_label(data.label(i))
                .map_err(|source| SolverError::Label {
                    sample: i + 1,
                    source,
                })?;
        }
        if reg.c != config.c {
            return Err(SolverError::InconsistentC {
                reg_c: reg.c,
                config_c: config.c,
            });
        }
        let n = data.n();
        let t = data.num_tasks();
        Ok(Solver {
            data,
            gram,
            loss,
            reg,
            config,
            state: DualState {
                alpha: vec![0.0; n],
                b: vec![0.0; n * t],
                c: SquareMat::zeros(t),
                epoch: 0,
                rng: ChaCha8Rng::seed_from_u64(config.seed),
            },
        })
    }

    pub fn state(&self) -> &DualState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn num_tasks(&self) -> usize {
        self.data.num_tasks()
    }

    fn conjugate_term(&self, i: usize) -> ConjugateTerm {
        losses::conjugate_term(
            &self.loss,
            self.data.label(i),
            self.state.alpha[i],
            self.config.c,
        )
        .expect("alpha is kept inside the conjugate-domain box")
    }

    fn subproblem(&self, i: usize) -> Subproblem<'_> {
        let t = self.num_tasks();
        let r = self.data.task(i) - 1;
        Subproblem {
            reg: &self.reg,
            ct: self.conjugate_term(i),
            a: self.gram.get(i, i),
            r,
            brow: self.state.b_row(i, t),
            crow: self.state.c.row(r),
            inv_c: 1.0 / self.config.c,
            cells: std::cell::Cell::new(0),
        }
    }

    /// The one-dimensional subproblem objective, including the constant
    /// contribution of cells untouched by task `r` (so that
    /// `value(delta) - value(0)` equals `-(q(alpha + delta e_i) - q(alpha)) / C`).
    pub fn subproblem_value(&self, i: usize, delta: f64) -> f64 {
        let sub = self.subproblem(i);
        let local = sub.value(delta);
        let r = self.data.task(i) - 1;
        let mut rest = 0.0;
        let t = self.num_tasks();
        for s in 0..t {
            for z in 0..t {
                if s != r && z != r {
                    rest += self.reg.pen_cell(self.state.c.get(s, z));
                }
            }
        }
        local + rest * (1.0 / self.config.c)
    }

    /// Safeguarded Newton minimization of the coordinate subproblem.
    pub fn solve_subproblem_newton(&self, i: usize) -> SubproblemResult {
        let sub = self.subproblem(i);
        let (delta, iters) = sub.minimize(self.config.newton_tol, self.config.newton_max_iter);
        SubproblemResult {
            delta,
            iters,
            cell_evals: sub.cells.get(),
        }
    }

    /// Closed-form subproblem solve for pnorm `k = 1`: stationarity is a
    /// cubic whose real roots, the interval endpoints and any kink are the
    /// only candidates.
    pub fn solve_subproblem_cubic(&self, i: usize) -> Result<SubproblemResult, SolverError> {
        if self.reg.kind != (RegKind::PNorm { k: 1 }) {
            return Err(SolverError::CubicUnavailable(self.reg.kind));
        }
        let sub = self.subproblem(i);
        let eta = self.reg.eta().expect("checked pnorm");
        let (lo, hi) = sub.bracket();
        let c = self.config.c;
        let y = self.data.label(i);
        let alpha = self.state.alpha[i];

        let a = sub.a;
        let b_r = sub.brow[sub.r];
        let c_rr = sub.crow[sub.r];
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for s in 0..sub.brow.len() {
            if s != sub.r {
                s1 += sub.brow[s] * sub.crow[s];
                s2 += sub.brow[s] * sub.brow[s];
            }
        }

        let a3 = 4.0 * eta * a * a;
        let a2 = 12.0 * eta * a * b_r;
        let mut a1 = 4.0 * eta * (2.0 * b_r * b_r + a * c_rr + s2);
        let mut a0_base = 4.0 * eta * (b_r * c_rr + s1);
        // loss-term derivative: hinge and eps-SVR are linear in delta,
        // squared adds a linear term
        let mut pieces: Vec<(f64, f64, f64)> = Vec::new(); // (piece_lo, piece_hi, loss_const)
        match self.loss {
            LossSpec::Hinge => pieces.push((lo, hi, -y / c)),
            LossSpec::Squared => {
                a1 += 1.0 / (2.0 * c * c);
                a0_base += alpha / (2.0 * c * c) - y / c;
                pieces.push((lo, hi, 0.0));
            }
            LossSpec::EpsSvr { epsilon } => {
                let kink = -alpha;
                if lo < kink && kink < hi {
                    pieces.push((lo, kink, (-y - epsilon) / c));
                    pieces.push((kink, hi, (-y + epsilon) / c));
                } else if alpha + 0.5 * (lo + hi) >= 0.0 {
                    pieces.push((lo, hi, (-y + epsilon) / c));
                } else {
                    pieces.push((lo, hi, (-y - epsilon) / c));
                }
            }
        }

        let mut candidates: Vec<f64> = vec![lo, hi, 0.0];
        for &(p_lo, p_hi, loss_const) in &pieces {
            candidates.push(p_lo);
            candidates.push(p_hi);
            for root in cubic::real_roots(a3, a2, a1, a0_base + loss_const) {
                if root >= p_lo - 1e-12 && root <= p_hi + 1e-12 {
                    candidates.push(root.clamp(p_lo, p_hi));
                }
            }
        }

        let mut best = 0.0;
        let mut best_val = sub.value(0.0);
        for &d in &candidates {
            if !d.is_finite() {
                continue;
            }
            let v = sub.value(d);
            if v < best_val {
                best_val = v;
                best = d;
            }
        }
        Ok(SubproblemResult {
            delta: best,
            iters: 0,
            cell_evals: sub.cells.get(),
        })
    }

    fn solve_subproblem(&self, i: usize) -> f64 {
        let use_cubic = match self.config.subproblem {
            SubproblemMode::Newton => false,
            SubproblemMode::Cubic => true,
            SubproblemMode::Auto => self.reg.kind == (RegKind::PNorm { k: 1 }),
        };
        if use_cubic {
            self.solve_subproblem_cubic(i)
                .expect("cubic mode requires pnorm k=1")
                .delta
        } else {
            self.solve_subproblem_newton(i).delta
        }
    }

    /// Applies `alpha_i += delta` and maintains both caches in `O(n + T)`.
    /// The step is snapped so `alpha` stays exactly inside its box.
    pub fn apply_update(&mut self, i: usize, delta: f64) {
        let target = losses::clamp_alpha(
            &self.loss,
            self.data.label(i),
            self.state.alpha[i] + delta,
            self.config.c,
        );
        let d = target - self.state.alpha[i];
        if d == 0.0 {
            return;
        }
        let t = self.num_tasks();
        let r = self.data.task(i) - 1;
        let b_pre: Vec<f64> = self.state.b_row(i, t).to_vec();

        self.state
            .c
            .add(r, r, 2.0 * d * b_pre[r] + d * d * self.gram.get(i, i));
        for s in 0..t {
            if s != r {
                let inc = d * b_pre[s];
                self.state.c.add(r, s, inc);
                self.state.c.add(s, r, inc);
            }
        }
        let row = self.gram.row(i);
        for j in 0..self.data.n() {
            self.state.b[j * t + r] += d * row[j];
        }
        self.state.alpha[i] = target;
    }

    /// `q(alpha)`: minus the conjugate losses minus the dual penalty.
    pub fn dual_objective(&self) -> f64 {
        let mut lsum = 0.0;
        for i in 0..self.data.n() {
            lsum += self.conjugate_term(i).value(0.0);
        }
        -self.config.c * lsum - self.reg.dual_penalty(&self.state.c)
    }

    /// Gradient of the dual objective in coordinate `i`; equals `-C` times
    /// the subproblem derivative at zero.
    pub fn dual_grad(&self, i: usize) -> f64 {
        let sub = self.subproblem(i);
        -self.config.c * sub.deriv(0.0)
    }

    /// Feasible primal value at the current iterate, together with the
    /// recovered output kernel. The entropy primal is `+inf` whenever some
    /// `Theta` entry underflows to zero.
    pub fn primal_objective(&self) -> Result<PrimalReport, SolverError> {
        let theta = self.reg.theta_from_rho(&self.state.c)?;
        let t = self.num_tasks();
        let mut lsum = 0.0;
        for i in 0..self.data.n() {
            let r = self.data.task(i) - 1;
            let brow = self.state.b_row(i, t);
            let f: f64 = (0..t).map(|s| theta.get(r, s) * brow[s]).sum();
            lsum +=
                losses::loss(&self.loss, self.data.label(i), f).expect("labels validated at init");
        }
        let value = self.config.c * lsum
            + 0.5 * theta.mat().dot(&self.state.c)
            + self.reg.lambda * self.reg.v_of_theta(&theta);
        if value.is_nan() {
            return Err(SolverError::NonFinite {
                what: "primal objective",
            });
        }
        Ok(PrimalReport { value, theta })
    }

    /// Per-sample prediction `F(x_i, t_i)` at the current iterate.
    pub fn prediction(&self, i: usize) -> f64 {
        let theta = self
            .reg
            .theta_from_rho(&self.state.c)
            .expect("cache stays symmetric PSD");
        let t = self.num_tasks();
        let r = self.data.task(i) - 1;
        let brow = self.state.b_row(i, t);
        (0..t).map(|s| theta.get(r, s) * brow[s]).sum()
    }

    /// One full epoch of coordinate updates under the configured sampling.
    pub fn run_epoch(&mut self) {
        let n = self.data.n();
        match self.config.sampling {
            Sampling::Permutation => {
                let mut order: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    let j = self.state.rng.gen_range(0..=i);
                    order.swap(i, j);
                }
                for &i in &order {
                    let d = self.solve_subproblem(i);
                    self.apply_update(i, d);
                }
            }
            Sampling::Uniform => {
                for _ in 0..n {
                    let i = self.state.rng.gen_range(0..n);
                    let d = self.solve_subproblem(i);
                    self.apply_update(i, d);
                }
            }
        }
        self.state.epoch += 1;
    }

    /// Recomputes both caches from scratch, reports the max-abs drift of the
    /// incremental versions, and adopts the scratch values.
    pub fn refresh_caches(&mut self) -> (f64, f64) {
        let (b_scratch, c_scratch) = self.scratch_caches();
        let drift_b = self
            .state
            .b
            .iter()
            .zip(&b_scratch)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let drift_c = self.state.c.max_abs_diff(&c_scratch);
        self.state.b = b_scratch;
        self.state.c = c_scratch;
        (drift_b, drift_c)
    }

    /// Scratch recomputation of `B` and `c` from `alpha` alone.
    pub fn scratch_caches(&self) -> (Vec<f64>, SquareMat) {
        let n = self.data.n();
        let t = self.num_tasks();
        let mut b = vec![0.0; n * t];
        for j in 0..n {
            let row = self.gram.row(j);
            let dst = &mut b[j * t..(j + 1) * t];
            for j2 in 0..n {
                if self.state.alpha[j2] != 0.0 {
                    dst[self.data.task(j2) - 1] += row[j2] * self.state.alpha[j2];
                }
            }
        }
        let mut c = SquareMat::zeros(t);
        for i in 0..n {
            if self.state.alpha[i] != 0.0 {
                let r = self.data.task(i) - 1;
                for z in 0..t {
                    c.add(r, z, self.state.alpha[i] * b[i * t + z]);
                }
            }
        }
        c.symmetrize();
        (b, c)
    }

    /// Overwrites `alpha` (testing hook); caches are rebuilt from scratch.
    pub fn set_alpha(&mut self, alpha: &[f64]) -> Result<(), SolverError> {
        assert_eq!(alpha.len(), self.data.n());
        for (i, &a) in alpha.iter().enumerate() {
            losses::conjugate_term(&self.loss, self.data.label(i), a, self.config.c).map_err(
                |source| SolverError::Label {
                    sample: i + 1,
                    source,
                },
            )?;
        }
        self.state.alpha = alpha.to_vec();
        let (b, c) = self.scratch_caches();
        self.state.b = b;
        self.state.c = c;
        Ok(())
    }
}

/// View of one coordinate's subproblem. All evaluations walk the task
/// dimension only, so each is `O(T)`; `cells` counts the scalar penalty
/// evaluations as a structural witness.
struct Subproblem<'s> {
    reg: &'s RegularizerSpec,
    ct: ConjugateTerm,
    a: f64,
    r: usize,
    brow: &'s [f64],
    crow: &'s [f64],
    inv_c: f64,
    cells: std::cell::Cell<u64>,
}

impl Subproblem<'_> {
    fn bump(&self, by: u64) {
        self.cells.set(self.cells.get() + by);
    }

    fn quad(&self, delta: f64) -> f64 {
        self.a * delta * delta + 2.0 * self.brow[self.r] * delta + self.crow[self.r]
    }

    /// Subproblem objective without the constant far-cell term.
    fn value(&self, delta: f64) -> f64 {
        let lv = self.ct.value(delta);
        if !lv.is_finite() {
            return lv;
        }
        let mut pen = self.reg.pen_cell(self.quad(delta));
        self.bump(1);
        for s in 0..self.brow.len() {
            if s != self.r {
                pen += 2.0 * self.reg.pen_cell(self.crow[s] + self.brow[s] * delta);
                self.bump(1);
            }
        }
        lv + pen * self.inv_c
    }

    /// Right derivative of the subproblem objective.
    fn deriv(&self, delta: f64) -> f64 {
        let mut g = self.reg.pen_cell_prime(self.quad(delta))
            * (2.0 * self.a * delta + 2.0 * self.brow[self.r]);
        self.bump(1);
        for s in 0..self.brow.len() {
            if s != self.r {
                g += 2.0
                    * self.reg.pen_cell_prime(self.crow[s] + self.brow[s] * delta)
                    * self.brow[s];
                self.bump(1);
            }
        }
        self.ct.deriv(delta) + g * self.inv_c
    }

    fn deriv2(&self, delta: f64) -> f64 {
        let qp = 2.0 * self.a * delta + 2.0 * self.brow[self.r];
        let q = self.quad(delta);
        let mut h =
            self.reg.pen_cell_second(q) * qp * qp + self.reg.pen_cell_prime(q) * 2.0 * self.a;
        self.bump(2);
        for s in 0..self.brow.len() {
            if s != self.r {
                h += 2.0
                    * self
                        .reg
                        .pen_cell_second(self.crow[s] + self.brow[s] * delta)
                    * self.brow[s]
                    * self.brow[s];
                self.bump(1);
            }
        }
        self.ct.deriv2(delta) + h * self.inv_c
    }

    /// Largest step magnitude that keeps every penalty argument within the
    /// regularizer's finite range.
    fn delta_max(&self) -> f64 {
        let cap = self.reg.max_pen_arg();
        let mut dmax = f64::INFINITY;
        // |a d^2 + 2 b_r d + c_rr| <= cap
        let (a, b, c0) = (self.a, self.brow[self.r].abs(), self.crow[self.r].abs());
        let headroom = cap - c0;
        if headroom > 0.0 {
            let d = if a > 0.0 {
                (-b + (b * b + a * headroom).sqrt()) / a
            } else if b > 0.0 {
                headroom / (2.0 * b)
            } else {
                f64::INFINITY
            };
            dmax = dmax.min(d);
        } else {
            dmax = 0.0;
        }
        for s in 0..self.brow.len() {
            if s != self.r && self.brow[s] != 0.0 {
                let headroom = cap - self.crow[s].abs();
                dmax = dmax.min(if headroom > 0.0 {
                    headroom / self.brow[s].abs()
                } else {
                    0.0
                });
            }
        }
        dmax
    }

    /// Feasible interval intersected with the finite-penalty range.
    fn bracket(&self) -> (f64, f64) {
        let (lo, hi) = self.ct.interval();
        let dmax = self.delta_max();
        (lo.max(-dmax), hi.min(dmax))
    }

    /// Safeguarded Newton with a bisection bracket: a Newton step is taken
    /// only when it stays strictly inside the current sign-change bracket
    /// and the local curvature is usable; otherwise the bracket is bisected.
    /// A kink strictly inside the bracket is resolved by its subgradient
    /// condition first, and never crossed afterwards.
    fn minimize(&self, tol: f64, max_iter: u32) -> (f64, u32) {
        let (mut lo, mut hi) = self.bracket();
        if !(lo < hi) {
            return (0.0, 0);
        }
        if self.deriv(lo) >= 0.0 {
            return (self.guard(lo), 0);
        }
        if self.deriv(hi) <= 0.0 {
            return (self.guard(hi), 0);
        }
        // derivative changes sign inside (lo, hi)
        if let Some(kink) = self.ct.kink() {
            if lo < kink && kink < hi {
                let right = self.deriv(kink);
                // the penalty part is smooth; only the conjugate jumps here
                let left = right - self.ct.deriv(kink) + self.ct.deriv_left(kink);
                if left <= 0.0 && right >= 0.0 {
                    return (self.guard(kink), 0);
                }
                if right < 0.0 {
                    lo = kink;
                } else {
                    hi = kink;
                }
            }
        }
        let mut x = if lo < 0.0 && 0.0 < hi {
            0.0
        } else {
            0.5 * (lo + hi)
        };
        let mut iters = 0;
        while iters < max_iter {
            iters += 1;
            let g = self.deriv(x);
            if g.abs() <= 1e-12 * (1.0 + self.value(x).abs()) {
                break;
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let h = self.deriv2(x);
            let newton = if h.is_finite() && h > 0.0 {
                x - g / h
            } else {
                f64::NAN
            };
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= tol {
                x = next;
                break;
            }
            x = next;
        }
        (self.guard(x), iters)
    }

    /// Never returns a step that worsens the objective; exact coordinate
    /// maximization keeps the dual monotone.
    fn guard(&self, delta: f64) -> f64 {
        if delta != 0.0 && self.value(delta) <= self.value(0.0) {
            delta
        } else {
            0.0
        }
    }
}

/// Trains a model end to end; see [`fit_traced`] for per-epoch diagnostics.
pub fn fit(
    data: &MultiTaskDataset,
    gram: &GramMatrix,
    kernel: &KernelSpec,
    loss: LossSpec,
    reg: RegularizerSpec,
    config: SolverConfig,
) -> Result<Model, SolverError> {
    fit_traced(data, gram, kernel, loss, reg, config).map(|(m, _)| m)
}

/// Runs epochs of coordinate ascent until the relative duality gap reaches
/// `config.gap_tol` or `config.max_epochs` is exhausted (the model is then
/// returned with `converged = false`). Every `gap_check_every` epochs the
/// caches are verified against a scratch recompute and refreshed, and the
/// gap is evaluated. When the primal is `+inf` (entropy regularizer with an
/// underflowed `Theta` entry) the stopping rule falls back to absolute dual
/// progress below `1e-8 * (1 + |D|)`.
pub fn fit_traced(
    data: &MultiTaskDataset,
    gram: &GramMatrix,
    kernel: &KernelSpec,
    loss: LossSpec,
    reg: RegularizerSpec,
    config: SolverConfig,
) -> Result<(Model, FitTrace), SolverError> {
    let mut solver = Solver::new(data, gram, loss, reg, config)?;
    let mut trace = FitTrace::default();
    let mut converged = false;
    let mut final_gap = f64::INFINITY;
    let mut prev_dual = solver.dual_objective();

    while solver.state.epoch < config.max_epochs {
        solver.run_epoch();
        if solver.state.epoch % config.gap_check_every != 0
            && solver.state.epoch < config.max_epochs
        {
            continue;
        }
        let (drift_b, drift_c) = solver.refresh_caches();
        let dual = solver.dual_objective();
        if !dual.is_finite() {
            return Err(SolverError::NonFinite {
                what: "dual objective",
            });
        }
        let report = solver.primal_objective()?;
        let primal = report.value;
        let gap = if primal.is_finite() {
            (primal - dual) / primal.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        trace.epochs.push(EpochStat {
            epoch: solver.state.epoch,
            dual,
            primal,
            gap,
            drift_b,
            drift_c,
        });
        final_gap = gap;
        if primal.is_finite() {
            if gap <= config.gap_tol {
                converged = true;
                break;
            }
        } else if (dual - prev_dual).abs() < 1e-8 * (1.0 + dual.abs()) {
            converged = true;
            break;
        }
        prev_dual = dual;
    }

    let theta = solver.primal_objective()?.theta;
    // precomputed-kernel models predict from explicit rows, never features
    let features = if kernel.is_precomputed() {
        None
    } else {
        data.features().map(|f| f.to_vec())
    };
    let model = Model {
        alpha: solver.state.alpha.clone(),
        theta,
        loss,
        reg,
        kernel: *kernel,
        tasks: data.tasks().to_vec(),
        task_ids: data.task_ids().to_vec(),
        features,
        report: ConvergenceReport {
            epochs: solver.state.epoch,
            final_gap,
            converged,
        },
    };
    Ok((model, trace))
}
