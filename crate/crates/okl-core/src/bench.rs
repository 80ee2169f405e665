//! Time-to-target comparison between the coordinate-ascent solver and the
//! alternating reference solver.
//!
//! Protocol: the coordinate solver is run to the relative-gap target first
//! and its primal value becomes the target; each variant is then timed until
//! its primal objective reaches that target.

use std::time::Instant;

use thiserror::Error;

use crate::dataio;
use crate::kernels::{self, KernelSpec};
use crate::losses::LossSpec;
use crate::mat::SquareMat;
use crate::oracle;
use crate::regularizers::{RegKind, RegularizerSpec};
use crate::solver::{self, Sampling, Solver, SolverConfig, SubproblemMode};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("data generation failed: {0}")]
    Data(#[from] dataio::DataError),
    #[error("kernel failure: {0}")]
    Kernel(#[from] kernels::KernelError),
    #[error("solver failure: {0}")]
    Solver(#[from] solver::SolverError),
    #[error("regularizer failure: {0}")]
    Reg(#[from] crate::regularizers::RegError),
    #[error("variant {variant} is incompatible with this configuration: {reason}")]
    Incompatible {
        variant: &'static str,
        reason: String,
    },
    #[error("reference solve did not converge within {0} epochs")]
    ReferenceDiverged(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    SdcaNewton,
    SdcaCubic,
    OracleAlternating,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::SdcaNewton => "sdca-newton",
            Variant::SdcaCubic => "sdca-cubic",
            Variant::OracleAlternating => "oracle-alternating",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub tasks_list: Vec<usize>,
    pub samples_per_task: usize,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
    pub loss: LossSpec,
    pub reg_kind: RegKind,
    pub lambda: f64,
    pub c: f64,
    pub gap_tol: f64,
    pub max_epochs: u64,
    pub oracle_max_outer: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            tasks_list: vec![5, 10, 20],
            samples_per_task: 10,
            dim: 8,
            noise: 0.1,
            seed: 0,
            loss: LossSpec::Hinge,
            reg_kind: RegKind::PNorm { k: 1 },
            lambda: 1.0,
            c: 1.0,
            gap_tol: 1e-3,
            max_epochs: 4000,
            oracle_max_outer: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub tasks: usize,
    pub variant: &'static str,
    pub seconds: f64,
    pub reached_target: bool,
    pub target_primal: f64,
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("T,variant,seconds,reached_target,target_primal\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.tasks, r.variant, r.seconds, r.reached_target, r.target_primal
        ));
    }
    out
}

fn two_cluster_partition(num_tasks: usize) -> Vec<Vec<usize>> {
    if num_tasks < 2 {
        return vec![(1..=num_tasks).collect()];
    }
    let half = num_tasks / 2;
    vec![(1..=half).collect(), (half + 1..=num_tasks).collect()]
}

/// Runs the full sweep; one row per `(T, variant)`.
pub fn run(cfg: &BenchConfig, variants: &[Variant]) -> Result<Vec<BenchRow>, BenchError> {
    for v in variants {
        if *v == Variant::SdcaCubic && cfg.reg_kind != (RegKind::PNorm { k: 1 }) {
            return Err(BenchError::Incompatible {
                variant: v.name(),
                reason: format!(
                    "cubic subproblem requires pnorm k=1, got {:?}",
                    cfg.reg_kind
                ),
            });
        }
    }
    let mut rows = Vec::new();
    for &t in &cfg.tasks_list {
        let data = dataio::synth_clustered(
            t,
            &two_cluster_partition(t),
            cfg.samples_per_task,
            cfg.dim,
            cfg.noise,
            cfg.seed.wrapping_add(t as u64),
        )?;
        let gram = kernels::gram(&data, &KernelSpec::Linear)?;
        let reg = RegularizerSpec::new(cfg.reg_kind, cfg.lambda, cfg.c)?;
        let solver_cfg = SolverConfig {
            c: cfg.c,
            gap_tol: cfg.gap_tol,
            max_epochs: cfg.max_epochs,
            seed: cfg.seed,
            sampling: Sampling::Permutation,
            subproblem: SubproblemMode::Auto,
            ..SolverConfig::default()
        };

        // reference run fixes the primal target
        let (_, trace) =
            solver::fit_traced(&data, &gram, &KernelSpec::Linear, cfg.loss, reg, solver_cfg)?;
        let last = trace
            .epochs
            .last()
            .ok_or(BenchError::ReferenceDiverged(0))?;
        if last.gap > cfg.gap_tol {
            return Err(BenchError::ReferenceDiverged(cfg.max_epochs));
        }
        let target = last.primal;
        let target_tol = target + 1e-9 * (1.0 + target.abs());

        for v in variants {
            let row = match v {
                Variant::SdcaNewton | Variant::SdcaCubic => {
                    let mode = if *v == Variant::SdcaNewton {
                        SubproblemMode::Newton
                    } else {
                        SubproblemMode::Cubic
                    };
                    let mut run_cfg = solver_cfg;
                    run_cfg.subproblem = mode;
                    let mut s = Solver::new(&data, &gram, cfg.loss, reg, run_cfg)?;
                    let start = Instant::now();
                    let mut reached = false;
                    while s.state().epoch() < cfg.max_epochs {
                        s.run_epoch();
                        s.refresh_caches();
                        let p = s.primal_objective()?.value;
                        if p <= target_tol {
                            reached = true;
                            break;
                        }
                    }
                    BenchRow {
                        tasks: t,
                        variant: v.name(),
                        seconds: start.elapsed().as_secs_f64(),
                        reached_target: reached,
                        target_primal: target,
                    }
                }
                Variant::OracleAlternating => {
                    let start = Instant::now();
                    let mut theta = SquareMat::identity(t);
                    let mut best = f64::INFINITY;
                    let mut reached = false;
                    let mut damping = oracle::ThetaDamping::default();
                    let mut warm: Option<Vec<f64>> = None;
                    for _ in 0..cfg.oracle_max_outer {
                        let alpha = oracle::solve_fixed_theta_from(
                            &data,
                            &gram,
                            &cfg.loss,
                            cfg.c,
                            &theta,
                            warm.as_deref(),
                            1e-9,
                            5000,
                        );
                        // reduced objective at the current (damped) iterate
                        let h_obj =
                            oracle::primal_value(&data, &gram, &cfg.loss, &reg, &theta, &alpha);
                        let n = data.n();
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
                        let theta_map = reg.theta_from_rho(&inner)?.mat().clone();
                        let map_obj =
                            oracle::primal_value(&data, &gram, &cfg.loss, &reg, &theta_map, &alpha);
                        best = best.min(h_obj).min(map_obj);
                        if best <= target_tol {
                            reached = true;
                            break;
                        }
                        let residual = damping.step(&mut theta, &theta_map);
                        warm = Some(alpha);
                        if residual <= 1e-12 * (1.0 + theta.max_abs()) {
                            break;
                        }
                    }
                    BenchRow {
                        tasks: t,
                        variant: v.name(),
                        seconds: start.elapsed().as_secs_f64(),
                        reached_target: reached,
                        target_primal: target,
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}
