//! Trained models: prediction, serialization, and `Theta` export.
//!
//! The prediction function is `F(x, s) = sum_j alpha_j Theta[s][t_j] k(x_j, x)`,
//! which depends on all training points, so a model stores its support
//! samples (or, for precomputed kernels, expects kernel rows at predict
//! time).

use std::io::Write;

use thiserror::Error;

use crate::dataio::{MultiTaskDataset, SparseVec};
use crate::kernels::{self, KernelSpec};
use crate::losses::LossSpec;
use crate::mat::SquareMat;
use crate::regularizers::{RegKind, RegularizerSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("output kernel is not symmetric (violation {0:e})")]
    NotSymmetric(f64),
    #[error("output kernel failed the positive-semidefiniteness probe")]
    NotPsd,
    #[error("unknown task {task}; model has {num_tasks} tasks")]
    UnknownTask { task: usize, num_tasks: usize },
    #[error("kernel is precomputed; supply a kernel row instead of features")]
    NeedGramRow,
    #[error("kernel row has length {got}, expected {expected}")]
    RowLength { expected: usize, got: usize },
    #[error("model file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("model file: missing field \"{0}\"")]
    MissingField(&'static str),
    #[error("model file: unsupported format version \"{0}\"")]
    Version(String),
    #[error("model file: checksum mismatch (stored {stored}, computed {computed})")]
    Checksum { stored: String, computed: String },
    #[error("kernel error: {0}")]
    Kernel(#[from] kernels::KernelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Relative PSD tolerance for output kernels, scaled by `max(diag, 1)`.
pub const THETA_PSD_TOL: f64 = 1e-8;

/// The `T x T` symmetric positive semidefinite task-relationship matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputKernel {
    mat: SquareMat,
}

impl OutputKernel {
    /// Validates symmetry and probes positive semidefiniteness
    /// (shifted Cholesky, shift `THETA_PSD_TOL * max(diag, 1)`).
    pub fn from_mat(mat: SquareMat) -> Result<Self, ModelError> {
        let violation = mat.symmetry_violation();
        if violation > 1e-10 * mat.max_abs().max(1.0) {
            return Err(ModelError::NotSymmetric(violation));
        }
        let mut sym = mat;
        sym.symmetrize();
        let t = sym.dim();
        let max_diag = (0..t).fold(0.0f64, |m, i| m.max(sym.get(i, i)));
        let shift = THETA_PSD_TOL * max_diag.max(1.0);
        let mut probe = sym.clone();
        for i in 0..t {
            probe.add(i, i, shift);
        }
        if probe.cholesky_check().is_err() {
            return Err(ModelError::NotPsd);
        }
        Ok(OutputKernel { mat: sym })
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    #[inline]
    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.mat.get(r, s)
    }

    pub fn mat(&self) -> &SquareMat {
        &self.mat
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub epochs: u64,
    pub final_gap: f64,
    pub converged: bool,
}

/// A trained output-kernel model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub alpha: Vec<f64>,
    pub theta: OutputKernel,
    pub loss: LossSpec,
    pub reg: RegularizerSpec,
    pub kernel: KernelSpec,
    /// Per-sample internal task ids (`1..=T`) of the training data.
    pub tasks: Vec<usize>,
    /// Side map internal task id -> original task id.
    pub task_ids: Vec<i64>,
    /// Support samples; `None` when the kernel is precomputed.
    pub features: Option<Vec<SparseVec>>,
    pub report: ConvergenceReport,
}

impl Model {
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.theta.dim()
    }

    /// Task-aggregated kernel sums `g[s] = sum_{j: t_j = s+1} alpha_j row_j`.
    fn aggregate(&self, row: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.num_tasks()];
        for (j, &k) in row.iter().enumerate() {
            g[self.tasks[j] - 1] += self.alpha[j] * k;
        }
        g
    }

    fn scores_from_aggregate(&self, g: &[f64]) -> Vec<f64> {
        (0..self.num_tasks())
            .map(|s| (0..g.len()).map(|z| self.theta.get(s, z) * g[z]).sum())
            .collect()
    }

    /// Predicted score `F(x_new, task)`; `task` is an internal id in `1..=T`.
    pub fn predict(&self, x_new: &SparseVec, task: usize) -> Result<f64, ModelError> {
        let row = self.kernel_row_for(x_new)?;
        self.predict_gram_row(&row, task)
    }

    /// Score from explicit kernel evaluations `row[j] = k(x_j, x_new)`.
    pub fn predict_gram_row(&self, row: &[f64], task: usize) -> Result<f64, ModelError> {
        if row.len() != self.n() {
            return Err(ModelError::RowLength {
                expected: self.n(),
                got: row.len(),
            });
        }
        if task < 1 || task > self.num_tasks() {
            return Err(ModelError::UnknownTask {
                task,
                num_tasks: self.num_tasks(),
            });
        }
        let g = self.aggregate(row);
        Ok((0..g.len())
            .map(|z| self.theta.get(task - 1, z) * g[z])
            .sum())
    }

    /// Scores for every task at once (one aggregation pass).
    pub fn predict_all_tasks(&self, x_new: &SparseVec) -> Result<Vec<f64>, ModelError> {
        let row = self.kernel_row_for(x_new)?;
        self.predict_all_tasks_gram_row(&row)
    }

    pub fn predict_all_tasks_gram_row(&self, row: &[f64]) -> Result<Vec<f64>, ModelError> {
        if row.len() != self.n() {
            return Err(ModelError::RowLength {
                expected: self.n(),
                got: row.len(),
            });
        }
        Ok(self.scores_from_aggregate(&self.aggregate(row)))
    }

    /// One-vs-all prediction: the task with the highest score, ties broken
    /// by the lowest task index. Returns an internal task id in `1..=T`.
    pub fn predict_multiclass(&self, x_new: &SparseVec) -> Result<usize, ModelError> {
        Ok(argmax_lowest(&self.predict_all_tasks(x_new)?))
    }

    pub fn predict_multiclass_gram_row(&self, row: &[f64]) -> Result<usize, ModelError> {
        Ok(argmax_lowest(&self.predict_all_tasks_gram_row(row)?))
    }

    fn kernel_row_for(&self, x_new: &SparseVec) -> Result<Vec<f64>, ModelError> {
        let feats = self.features.as_ref().ok_or(ModelError::NeedGramRow)?;
        Ok(kernels::kernel_row(&self.kernel, feats, x_new)?)
    }

    /// Recomputes `Theta` from the stored dual variables and a Gram matrix
    /// over the support samples; used to audit a loaded model.
    pub fn rederive_theta(
        &self,
        gram: &crate::dataio::GramMatrix,
    ) -> Result<OutputKernel, ModelError> {
        let t = self.num_tasks();
        let n = self.n();
        let mut inner = SquareMat::zeros(t);
        for i in 0..n {
            if self.alpha[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                inner.add(
                    self.tasks[i] - 1,
                    self.tasks[j] - 1,
                    self.alpha[i] * self.alpha[j] * gram.get(i, j),
                );
            }
        }
        inner.symmetrize();
        self.reg
            .theta_from_rho(&inner)
            .map_err(|_| ModelError::NotPsd)
    }

    /// Gram matrix over the support samples (explicit-feature kernels only).
    pub fn support_gram(&self) -> Result<crate::dataio::GramMatrix, ModelError> {
        let feats = self.features.as_ref().ok_or(ModelError::NeedGramRow)?;
        let ds = MultiTaskDataset::new(
            self.tasks.clone(),
            vec![0.0; self.n()],
            Some(feats.clone()),
            self.num_tasks(),
            self.task_ids.clone(),
        )
        .map_err(|e| ModelError::Parse {
            line: 0,
            reason: e.to_string(),
        })?;
        Ok(kernels::gram(&ds, &self.kernel)?)
    }
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best + 1
}

// ---- serialization -------------------------------------------------------

const FORMAT_HEADER: &str = "okl model 1";

/// 17 significant digits; enough to reproduce any `f64` bit-for-bit.
fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Serializes the model as a versioned, checksummed text document.
pub fn save(model: &Model) -> String {
    let mut s = String::new();
    s.push_str(FORMAT_HEADER);
    s.push('\n');
    s.push_str(&format!("n {}\n", model.n()));
    s.push_str(&format!("T {}\n", model.num_tasks()));
    match model.loss {
        LossSpec::Hinge => s.push_str("loss hinge\n"),
        LossSpec::Squared => s.push_str("loss squared\n"),
        LossSpec::EpsSvr { epsilon } => s.push_str(&format!("loss eps-svr {}\n", fmt17(epsilon))),
    }
    match model.reg.kind {
        RegKind::PNorm { k } => s.push_str(&format!("reg pnorm {k}\n")),
        RegKind::Entropy => s.push_str("reg entropy\n"),
        RegKind::CoshGen => s.push_str("reg cosh\n"),
    }
    s.push_str(&format!("lambda {}\n", fmt17(model.reg.lambda)));
    s.push_str(&format!("C {}\n", fmt17(model.reg.c)));
    match model.kernel {
        KernelSpec::Linear => s.push_str("kernel linear\n"),
        KernelSpec::Rbf { gamma } => s.push_str(&format!("kernel rbf {}\n", fmt17(gamma))),
        KernelSpec::Precomputed => s.push_str("kernel precomputed\n"),
    }
    let ids: Vec<String> = model.task_ids.iter().map(|t| t.to_string()).collect();
    s.push_str(&format!("task_ids {}\n", ids.join(" ")));
    let tasks: Vec<String> = model.tasks.iter().map(|t| t.to_string()).collect();
    s.push_str(&format!("tasks {}\n", tasks.join(" ")));
    let alpha: Vec<String> = model.alpha.iter().map(|&a| fmt17(a)).collect();
    s.push_str(&format!("alpha {}\n", alpha.join(" ")));
    let theta: Vec<String> = model
        .theta
        .mat()
        .as_slice()
        .iter()
        .map(|&v| fmt17(v))
        .collect();
    s.push_str(&format!("theta {}\n", theta.join(" ")));
    s.push_str(&format!(
        "convergence {} {} {}\n",
        model.report.epochs,
        fmt17(model.report.final_gap),
        u8::from(model.report.converged)
    ));
    if let Some(feats) = &model.features {
        s.push_str("features\n");
        for f in feats {
            s.push('f');
            for &(idx, val) in f.pairs() {
                s.push_str(&format!(" {idx}:{}", fmt17(val)));
            }
            s.push('\n');
        }
    }
    s.push_str(&format!("checksum {:016x}\n", fnv1a64(s.as_bytes())));
    s
}

pub fn save_to(model: &Model, sink: &mut dyn Write) -> Result<(), ModelError> {
    sink.write_all(save(model).as_bytes())?;
    Ok(())
}

struct FieldReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> FieldReader<'a> {
    fn take(&mut self, key: &'static str) -> Result<&'a str, ModelError> {
        let (lineno, line) = *self
            .lines
            .get(self.pos)
            .ok_or(ModelError::MissingField(key))?;
        let rest = line
            .strip_prefix(key)
            .ok_or(ModelError::MissingField(key))?;
        if !(rest.is_empty() || rest.starts_with(' ')) {
            return Err(ModelError::Parse {
                line: lineno,
                reason: format!("expected field \"{key}\""),
            });
        }
        self.pos += 1;
        Ok(rest.trim_start())
    }

    fn lineno(&self) -> usize {
        self.lines.get(self.pos).map_or(0, |&(l, _)| l)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, ModelError> {
    s.parse().map_err(|_| ModelError::Parse {
        line,
        reason: format!("cannot parse {what} from \"{s}\""),
    })
}

fn parse_vec<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<Vec<T>, ModelError> {
    s.split_whitespace()
        .map(|f| parse_num(f, line, what))
        .collect()
}

/// Parses a model document produced by [`save`]. Verifies the version tag
/// and the trailing checksum.
pub fn load(text: &str) -> Result<Model, ModelError> {
    // split off and verify the checksum first
    let body_end = text
        .rfind("checksum ")
        .ok_or(ModelError::MissingField("checksum"))?;
    let (body, tail) = text.split_at(body_end);
    let stored = tail.trim_start_matches("checksum ").trim().to_string();
    let computed = format!("{:016x}", fnv1a64(body.as_bytes()));
    if stored != computed {
        return Err(ModelError::Checksum { stored, computed });
    }

    let lines: Vec<(usize, &str)> = body.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let mut r = FieldReader { lines, pos: 0 };

    let header = r
        .lines
        .first()
        .map(|&(_, l)| l)
        .ok_or(ModelError::MissingField("header"))?;
    if header != FORMAT_HEADER {
        return Err(ModelError::Version(header.to_string()));
    }
    r.pos = 1;

    let n: usize = parse_num(r.take("n")?, 2, "n")?;
    let t: usize = parse_num(r.take("T")?, 3, "T")?;

    let loss_line = r.take("loss")?;
    let mut loss_parts = loss_line.split_whitespace();
    let loss = match loss_parts.next() {
        Some("hinge") => LossSpec::Hinge,
        Some("squared") => LossSpec::Squared,
        Some("eps-svr") => {
            let eps: f64 = parse_num(
                loss_parts
                    .next()
                    .ok_or(ModelError::MissingField("loss epsilon"))?,
                r.lineno(),
                "epsilon",
            )?;
            LossSpec::EpsSvr { epsilon: eps }
        }
        other => {
            return Err(ModelError::Parse {
                line: r.lineno(),
                reason: format!("unknown loss {other:?}"),
            })
        }
    };

    let reg_line = r.take("reg")?;
    let mut reg_parts = reg_line.split_whitespace();
    let kind = match reg_parts.next() {
        Some("pnorm") => RegKind::PNorm {
            k: parse_num(
                reg_parts.next().ok_or(ModelError::MissingField("reg k"))?,
                r.lineno(),
                "k",
            )?,
        },
        Some("entropy") => RegKind::Entropy,
        Some("cosh") => RegKind::CoshGen,
        other => {
            return Err(ModelError::Parse {
                line: r.lineno(),
                reason: format!("unknown regularizer {other:?}"),
            })
        }
    };
    let lambda: f64 = parse_num(r.take("lambda")?, r.lineno(), "lambda")?;
    let c: f64 = parse_num(r.take("C")?, r.lineno(), "C")?;
    let reg = RegularizerSpec::new(kind, lambda, c).map_err(|e| ModelError::Parse {
        line: 0,
        reason: e.to_string(),
    })?;

    let kernel_line = r.take("kernel")?;
    let mut kp = kernel_line.split_whitespace();
    let kernel = match kp.next() {
        Some("linear") => KernelSpec::Linear,
        Some("rbf") => KernelSpec::Rbf {
            gamma: parse_num(
                kp.next().ok_or(ModelError::MissingField("kernel gamma"))?,
                r.lineno(),
                "gamma",
            )?,
        },
        Some("precomputed") => KernelSpec::Precomputed,
        other => {
            return Err(ModelError::Parse {
                line: r.lineno(),
                reason: format!("unknown kernel {other:?}"),
            })
        }
    };

    let task_ids: Vec<i64> = parse_vec(r.take("task_ids")?, r.lineno(), "task id")?;
    let tasks: Vec<usize> = parse_vec(r.take("tasks")?, r.lineno(), "task index")?;
    let alpha: Vec<f64> = parse_vec(r.take("alpha")?, r.lineno(), "alpha")?;
    let theta_flat: Vec<f64> = parse_vec(r.take("theta")?, r.lineno(), "theta entry")?;

    let conv_line = r.take("convergence")?;
    let conv: Vec<&str> = conv_line.split_whitespace().collect();
    if conv.len() != 3 {
        return Err(ModelError::Parse {
            line: r.lineno(),
            reason: "convergence needs: epochs gap converged".into(),
        });
    }
    let report = ConvergenceReport {
        epochs: parse_num(conv[0], r.lineno(), "epochs")?,
        final_gap: parse_num(conv[1], r.lineno(), "gap")?,
        converged: conv[2] == "1",
    };

    let features = if kernel.is_precomputed() {
        None
    } else {
        r.take("features")?;
        let mut feats = Vec::with_capacity(n);
        for _ in 0..n {
            let (lineno, line) = *r
                .lines
                .get(r.pos)
                .ok_or(ModelError::MissingField("feature row"))?;
            let rest = line
                .strip_prefix('f')
                .ok_or(ModelError::MissingField("feature row"))?;
            let mut pairs = Vec::new();
            for field in rest.split_whitespace() {
                let (is, vs) = field.split_once(':').ok_or(ModelError::Parse {
                    line: lineno,
                    reason: format!("bad feature field \"{field}\""),
                })?;
                pairs.push((
                    parse_num::<u32>(is, lineno, "feature index")?,
                    parse_num::<f64>(vs, lineno, "feature value")?,
                ));
            }
            feats.push(
                SparseVec::from_pairs(pairs).map_err(|idx| ModelError::Parse {
                    line: lineno,
                    reason: format!("duplicate feature index {idx}"),
                })?,
            );
            r.pos += 1;
        }
        Some(feats)
    };

    if tasks.len() != n || alpha.len() != n {
        return Err(ModelError::Parse {
            line: 0,
            reason: format!(
                "inconsistent lengths: n={n}, tasks={}, alpha={}",
                tasks.len(),
                alpha.len()
            ),
        });
    }
    if task_ids.len() != t || theta_flat.len() != t * t {
        return Err(ModelError::Parse {
            line: 0,
            reason: format!(
                "inconsistent task dimensions: T={t}, task_ids={}, theta={}",
                task_ids.len(),
                theta_flat.len()
            ),
        });
    }
    let theta = OutputKernel::from_mat(SquareMat::from_vec(t, theta_flat))?;

    Ok(Model {
        alpha,
        theta,
        loss,
        reg,
        kernel,
        tasks,
        task_ids,
        features,
        report,
    })
}

// ---- Theta export --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaTransform {
    Raw,
    Abs,
    /// `ln(1 + |x|)`, the Fig.-3 style compression for wide dynamic ranges.
    Log1pAbs,
}

impl ThetaTransform {
    fn apply(self, x: f64) -> f64 {
        match self {
            ThetaTransform::Raw => x,
            ThetaTransform::Abs => x.abs(),
            ThetaTransform::Log1pAbs => x.abs().ln_1p(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaFormat {
    Csv,
    Pgm,
}

/// Writes `Theta` after the elementwise transform. CSV holds the transformed
/// values; PGM is 8-bit grayscale after a min-max rescale to [0, 1].
/// With `drop_diagonal` the diagonal is zeroed and excluded from the rescale
/// range.
pub fn export_theta(
    theta: &OutputKernel,
    format: ThetaFormat,
    transform: ThetaTransform,
    drop_diagonal: bool,
    sink: &mut dyn Write,
) -> Result<(), ModelError> {
    let t = theta.dim();
    let mut vals = vec![0.0; t * t];
    for r in 0..t {
        for s in 0..t {
            vals[r * t + s] = if drop_diagonal && r == s {
                0.0
            } else {
                transform.apply(theta.get(r, s))
            };
        }
    }
    match format {
        ThetaFormat::Csv => {
            let mut out = String::new();
            for r in 0..t {
                let row: Vec<String> = (0..t).map(|s| fmt17(vals[r * t + s])).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            sink.write_all(out.as_bytes())?;
        }
        ThetaFormat::Pgm => {
            let range: Vec<f64> = (0..t * t)
                .filter(|&i| !(drop_diagonal && i / t == i % t))
                .map(|i| vals[i])
                .collect();
            let lo = range.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = range.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
            let mut out = format!("P2\n{t} {t}\n255\n");
            for r in 0..t {
                let row: Vec<String> = (0..t)
                    .map(|s| {
                        let v = if drop_diagonal && r == s {
                            0.0
                        } else {
                            ((vals[r * t + s] - lo) * scale).round()
                        };
                        format!("{}", v.clamp(0.0, 255.0) as u8)
                    })
                    .collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
            sink.write_all(out.as_bytes())?;
        }
    }
    Ok(())
}
