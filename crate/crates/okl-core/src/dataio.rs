//! Dataset and Gram-matrix I/O plus synthetic data generation.
//!
//! Dataset text format, one sample per line:
//!
//! ```text
//! <task:int> <label:float> <idx:int>:<val:float> ...
//! ```
//!
//! `#` starts a comment line, blank lines are ignored, feature indices are
//! 1-based. Task ids in files are arbitrary integers; internally tasks are
//! re-indexed to contiguous `1..=T` (dense task-by-task caches depend on
//! this) and the original ids are kept in a side map.
//!
//! Gram text format: first line `n`, then `n` lines of `n` comma-separated
//! reals.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mat::SquareMat;

/// Absolute tolerance for Gram symmetry.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-12;
/// Relative eigenvalue tolerance for the Gram PSD check, scaled by max diagonal.
pub const GRAM_PSD_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed field \"{field}\": {reason}")]
    Malformed {
        line: usize,
        field: String,
        reason: String,
    },
    #[error("line {line}: duplicate feature index {index}")]
    DuplicateIndex { line: usize, index: u32 },
    #[error("dataset is empty")]
    Empty,
    #[error("task {task} (internal id) has no samples")]
    EmptyTask { task: usize },
    #[error("sample {sample}: task index {task} outside [1, {num_tasks}]")]
    TaskOutOfRange {
        sample: usize,
        task: usize,
        num_tasks: usize,
    },
    #[error("field lengths disagree: {reason}")]
    LengthMismatch { reason: String },
    #[error("gram: expected {expected} rows/columns, found {found} at line {line}")]
    GramDimension {
        expected: usize,
        found: usize,
        line: usize,
    },
    #[error("gram: symmetry violation at ({i},{j}): |{a} - {b}| > {tol:e}")]
    GramAsymmetric {
        i: usize,
        j: usize,
        a: f64,
        b: f64,
        tol: f64,
    },
    #[error(
        "gram: not positive semidefinite (estimated most negative eigenvalue {min_eig_estimate})"
    )]
    GramNotPsd { min_eig_estimate: f64 },
    #[error("clusters do not partition the task set: {reason}")]
    BadClusters { reason: String },
    #[error("invalid synthetic-data parameter: {reason}")]
    BadSynthParam { reason: String },
}

/// Sparse feature vector with ascending 1-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    pairs: Vec<(u32, f64)>,
}

impl SparseVec {
    /// Sorts by index; rejects duplicates, returning the offending index.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Result<Self, u32> {
        pairs.sort_by_key(|&(i, _)| i);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(w[0].0);
            }
        }
        Ok(SparseVec { pairs })
    }

    pub fn dense(values: &[f64]) -> Self {
        SparseVec {
            pairs: values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as u32 + 1, v))
                .collect(),
        }
    }

    pub fn pairs(&self) -> &[(u32, f64)] {
        &self.pairs
    }

    /// Highest index present (1-based); 0 for the empty vector.
    pub fn max_index(&self) -> u32 {
        self.pairs.last().map_or(0, |&(i, _)| i)
    }

    /// Dot product; indices are merged in ascending order so the summation
    /// order is reproducible.
    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (a, b) = (&self.pairs, &other.pairs);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Squared Euclidean distance, merged in ascending index order.
    pub fn sq_dist(&self, other: &SparseVec) -> f64 {
        let (a, b) = (&self.pairs, &other.pairs);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < a.len() || j < b.len() {
            let d = match (a.get(i), b.get(j)) {
                (Some(&(ia, va)), Some(&(ib, vb))) => match ia.cmp(&ib) {
                    std::cmp::Ordering::Less => {
                        i += 1;
                        va
                    }
                    std::cmp::Ordering::Greater => {
                        j += 1;
                        -vb
                    }
                    std::cmp::Ordering::Equal => {
                        i += 1;
                        j += 1;
                        va - vb
                    }
                },
                (Some(&(_, va)), None) => {
                    i += 1;
                    va
                }
                (None, Some(&(_, vb))) => {
                    j += 1;
                    -vb
                }
                (None, None) => unreachable!(),
            };
            acc += d * d;
        }
        acc
    }
}

/// Training data for `T` tasks over a common input space.
///
/// Holds per-sample task assignments (internal ids `1..=T`), labels and,
/// unless the kernel is precomputed, sparse feature vectors. Immutable after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskDataset {
    tasks: Vec<usize>,
    labels: Vec<f64>,
    features: Option<Vec<SparseVec>>,
    num_tasks: usize,
    task_ids: Vec<i64>,
}

impl MultiTaskDataset {
    /// Validated constructor. `tasks` uses internal ids in `1..=num_tasks`;
    /// `task_ids` maps internal id `t` to `task_ids[t-1]` in the source data.
    pub fn new(
        tasks: Vec<usize>,
        labels: Vec<f64>,
        features: Option<Vec<SparseVec>>,
        num_tasks: usize,
        task_ids: Vec<i64>,
    ) -> Result<Self, DataError> {
        if tasks.is_empty() {
            return Err(DataError::Empty);
        }
        if labels.len() != tasks.len() {
            return Err(DataError::LengthMismatch {
                reason: format!("{} tasks vs {} labels", tasks.len(), labels.len()),
            });
        }
        if let Some(f) = &features {
            if f.len() != tasks.len() {
                return Err(DataError::LengthMismatch {
                    reason: format!("{} tasks vs {} feature rows", tasks.len(), f.len()),
                });
            }
        }
        if task_ids.len() != num_tasks {
            return Err(DataError::LengthMismatch {
                reason: format!("{} task ids vs T={}", task_ids.len(), num_tasks),
            });
        }
        let mut seen = vec![false; num_tasks];
        for (i, &t) in tasks.iter().enumerate() {
            if t < 1 || t > num_tasks {
                return Err(DataError::TaskOutOfRange {
                    sample: i + 1,
                    task: t,
                    num_tasks,
                });
            }
            seen[t - 1] = true;
        }
        // a task without samples has an empty dual block; reject at load
        if let Some(t) = seen.iter().position(|&s| !s) {
            return Err(DataError::EmptyTask { task: t + 1 });
        }
        Ok(MultiTaskDataset {
            tasks,
            labels,
            features,
            num_tasks,
            task_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.tasks.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    /// Internal task id of sample `i`, in `1..=T`.
    pub fn task(&self, i: usize) -> usize {
        self.tasks[i]
    }

    pub fn tasks(&self) -> &[usize] {
        &self.tasks
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> Option<&[SparseVec]> {
        self.features.as_deref()
    }

    /// Side map: original task id for internal id `t`.
    pub fn original_task_id(&self, t: usize) -> i64 {
        self.task_ids[t - 1]
    }

    pub fn task_ids(&self) -> &[i64] {
        &self.task_ids
    }

    /// Number of feature dimensions (max index over all samples).
    pub fn dim(&self) -> u32 {
        self.features
            .as_ref()
            .map_or(0, |f| f.iter().map(SparseVec::max_index).max().unwrap_or(0))
    }

    /// Restriction to `indices` (in the given order), with tasks re-indexed
    /// contiguously by first appearance. Returns the new dataset and the map
    /// from new internal task id (position, 1-based) to old internal id.
    pub fn subset(&self, indices: &[usize]) -> Result<(MultiTaskDataset, Vec<usize>), DataError> {
        let mut old_of_new: Vec<usize> = Vec::new();
        let mut new_of_old = vec![0usize; self.num_tasks + 1];
        let mut tasks = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        let mut feats = self
            .features
            .as_ref()
            .map(|_| Vec::with_capacity(indices.len()));
        for &i in indices {
            let old_t = self.tasks[i];
            if new_of_old[old_t] == 0 {
                old_of_new.push(old_t);
                new_of_old[old_t] = old_of_new.len();
            }
            tasks.push(new_of_old[old_t]);
            labels.push(self.labels[i]);
            if let (Some(dst), Some(src)) = (feats.as_mut(), self.features.as_ref()) {
                dst.push(src[i].clone());
            }
        }
        let task_ids = old_of_new.iter().map(|&t| self.task_ids[t - 1]).collect();
        let ds = MultiTaskDataset::new(tasks, labels, feats, old_of_new.len(), task_ids)?;
        Ok((ds, old_of_new))
    }
}

/// Parses the task-annotated sparse text format.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<MultiTaskDataset, DataError> {
    let mut raw_tasks: Vec<i64> = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| DataError::Malformed {
            line: lineno,
            field: String::new(),
            reason: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let task_field = fields.next().unwrap();
        let task: i64 = task_field.parse().map_err(|_| DataError::Malformed {
            line: lineno,
            field: task_field.to_string(),
            reason: "expected integer task id".into(),
        })?;
        let label_field = fields.next().ok_or_else(|| DataError::Malformed {
            line: lineno,
            field: trimmed.to_string(),
            reason: "missing label".into(),
        })?;
        let label: f64 = label_field.parse().map_err(|_| DataError::Malformed {
            line: lineno,
            field: label_field.to_string(),
            reason: "expected real label".into(),
        })?;
        let mut pairs = Vec::new();
        for field in fields {
            let (idx_s, val_s) = field.split_once(':').ok_or_else(|| DataError::Malformed {
                line: lineno,
                field: field.to_string(),
                reason: "expected idx:val".into(),
            })?;
            let idx: u32 = idx_s.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                field: field.to_string(),
                reason: "feature index must be a positive integer".into(),
            })?;
            if idx == 0 {
                return Err(DataError::Malformed {
                    line: lineno,
                    field: field.to_string(),
                    reason: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val_s.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                field: field.to_string(),
                reason: "feature value must be a real number".into(),
            })?;
            pairs.push((idx, val));
        }
        let sv = SparseVec::from_pairs(pairs).map_err(|index| DataError::DuplicateIndex {
            line: lineno,
            index,
        })?;
        raw_tasks.push(task);
        labels.push(label);
        features.push(sv);
    }

    if raw_tasks.is_empty() {
        return Err(DataError::Empty);
    }

    // re-index tasks to 1..=T by first appearance, keeping the side map
    let mut task_ids: Vec<i64> = Vec::new();
    let tasks = raw_tasks
        .iter()
        .map(|&raw| match task_ids.iter().position(|&t| t == raw) {
            Some(p) => p + 1,
            None => {
                task_ids.push(raw);
                task_ids.len()
            }
        })
        .collect();
    let num_tasks = task_ids.len();
    MultiTaskDataset::new(tasks, labels, Some(features), num_tasks, task_ids)
}

/// Writes the dataset in the same text format `parse_dataset` reads,
/// using original task ids from the side map.
pub fn serialize_dataset(ds: &MultiTaskDataset) -> String {
    let mut out = String::new();
    let feats = ds.features();
    for i in 0..ds.n() {
        out.push_str(&ds.original_task_id(ds.task(i)).to_string());
        out.push(' ');
        out.push_str(&format_f64(ds.label(i)));
        if let Some(f) = feats {
            for &(idx, val) in f[i].pairs() {
                out.push(' ');
                out.push_str(&idx.to_string());
                out.push(':');
                out.push_str(&format_f64(val));
            }
        }
        out.push('\n');
    }
    out
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x}")
}

/// Symmetric positive semidefinite matrix of scalar-kernel evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    mat: SquareMat,
}

impl GramMatrix {
    /// Validates symmetry and the PSD tolerance before accepting `mat`.
    ///
    /// The PSD check is a shifted Cholesky probe on
    /// `K + GRAM_PSD_TOL * max(diag) * I`; on failure the reported eigenvalue
    /// estimate comes from a few shifted power-iteration steps.
    pub fn from_mat(mat: SquareMat) -> Result<Self, DataError> {
        let n = mat.dim();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (mat.get(i, j), mat.get(j, i));
                if (a - b).abs() > GRAM_SYMMETRY_TOL {
                    return Err(DataError::GramAsymmetric {
                        i: i + 1,
                        j: j + 1,
                        a,
                        b,
                        tol: GRAM_SYMMETRY_TOL,
                    });
                }
            }
        }
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(mat.get(i, i)));
        let shift = GRAM_PSD_TOL * max_diag.max(0.0) + f64::MIN_POSITIVE;
        let mut probe = mat.clone();
        for i in 0..n {
            probe.add(i, i, shift);
        }
        if probe.cholesky_check().is_err() {
            return Err(DataError::GramNotPsd {
                min_eig_estimate: estimate_min_eigenvalue(&mat),
            });
        }
        Ok(GramMatrix { mat })
    }

    pub fn n(&self) -> usize {
        self.mat.dim()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.mat.row(i)
    }

    pub fn mat(&self) -> &SquareMat {
        &self.mat
    }

    /// Principal submatrix on `indices` (PSD by inheritance, not re-probed).
    pub fn submatrix(&self, indices: &[usize]) -> GramMatrix {
        let m = indices.len();
        let mut sub = SquareMat::zeros(m);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                sub.set(a, b, self.get(i, j));
            }
        }
        GramMatrix { mat: sub }
    }

    /// Kernel rows `k(x_j, x_i)` for `i` in `rows`, `j` in `cols`.
    pub fn cross_rows(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&i| cols.iter().map(|&j| self.get(i, j)).collect())
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let n = self.n();
        let mut out = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format_f64(self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Power-iteration estimate of the most negative eigenvalue, via the
/// dominant eigenvalue of `sigma*I - K` with `sigma` a Gershgorin bound.
fn estimate_min_eigenvalue(mat: &SquareMat) -> f64 {
    let n = mat.dim();
    let sigma = (0..n)
        .map(|i| (0..n).map(|j| mat.get(i, j).abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d69_6e65_6967);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mut lambda = 0.0;
    for _ in 0..100 {
        // w = (sigma I - K) v
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = sigma * v[i];
            for j in 0..n {
                acc -= mat.get(i, j) * v[j];
            }
            w[i] = acc;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for x in w.iter_mut() {
            *x /= norm;
        }
        lambda = norm;
        v = w;
    }
    sigma - lambda
}

/// Loads a Gram matrix from CSV text: first line `n`, then `n` rows.
pub fn load_gram<R: BufRead>(reader: R) -> Result<GramMatrix, DataError> {
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or(DataError::Empty)?;
    let first = first.map_err(|e| DataError::Malformed {
        line: 1,
        field: String::new(),
        reason: e.to_string(),
    })?;
    let n: usize = first.trim().parse().map_err(|_| DataError::Malformed {
        line: 1,
        field: first.trim().to_string(),
        reason: "expected matrix dimension n".into(),
    })?;
    if n == 0 {
        return Err(DataError::Empty);
    }
    let mut mat = SquareMat::zeros(n);
    let mut row = 0usize;
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let line = line.map_err(|e| DataError::Malformed {
            line: lineno,
            field: String::new(),
            reason: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if row >= n {
            return Err(DataError::GramDimension {
                expected: n,
                found: row + 1,
                line: lineno,
            });
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != n {
            return Err(DataError::GramDimension {
                expected: n,
                found: fields.len(),
                line: lineno,
            });
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| DataError::Malformed {
                line: lineno,
                field: f.trim().to_string(),
                reason: "expected real number".into(),
            })?;
            mat.set(row, j, v);
        }
        row += 1;
    }
    if row != n {
        return Err(DataError::GramDimension {
            expected: n,
            found: row,
            line: 0,
        });
    }
    GramMatrix::from_mat(mat)
}

/// Standard normal via Box-Muller; two uniform draws per sample keeps the
/// stream layout simple and seed-reproducible.
fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    (-2.0 * (1.0 - u).ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Synthetic clustered-task classification data.
///
/// Tasks in the same cluster share a weight vector (plus a per-task
/// perturbation scaled by `noise`); labels are `sign(<w_t, x>)`.
/// Deterministic given `seed`.
pub fn synth_clustered(
    num_tasks: usize,
    clusters: &[Vec<usize>],
    samples_per_task: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<MultiTaskDataset, DataError> {
    synth_clustered_with_weights(num_tasks, clusters, samples_per_task, dim, noise, seed)
        .map(|(ds, _)| ds)
}

/// Like [`synth_clustered`] but also returns the per-task weight vectors.
pub fn synth_clustered_with_weights(
    num_tasks: usize,
    clusters: &[Vec<usize>],
    samples_per_task: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<(MultiTaskDataset, Vec<Vec<f64>>), DataError> {
    if samples_per_task < 2 || dim < 2 {
        return Err(DataError::BadSynthParam {
            reason: format!("need m >= 2 and d >= 2, got m={samples_per_task}, d={dim}"),
        });
    }
    let mut owner = vec![usize::MAX; num_tasks + 1];
    for (ci, cluster) in clusters.iter().enumerate() {
        if cluster.is_empty() {
            return Err(DataError::BadClusters {
                reason: format!("cluster {} is empty", ci + 1),
            });
        }
        for &t in cluster {
            if t < 1 || t > num_tasks {
                return Err(DataError::BadClusters {
                    reason: format!("task {t} outside [1, {num_tasks}]"),
                });
            }
            if owner[t] != usize::MAX {
                return Err(DataError::BadClusters {
                    reason: format!("task {t} assigned to two clusters"),
                });
            }
            owner[t] = ci;
        }
    }
    if let Some(t) = (1..=num_tasks).find(|&t| owner[t] == usize::MAX) {
        return Err(DataError::BadClusters {
            reason: format!("task {t} not covered by any cluster"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..clusters.len())
        .map(|_| (0..dim).map(|_| gauss(&mut rng)).collect())
        .collect();
    let weights: Vec<Vec<f64>> = (1..=num_tasks)
        .map(|t| {
            let c = &centers[owner[t]];
            (0..dim).map(|j| c[j] + noise * gauss(&mut rng)).collect()
        })
        .collect();

    let n = num_tasks * samples_per_task;
    let mut tasks = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    for t in 1..=num_tasks {
        let w = &weights[t - 1];
        for _ in 0..samples_per_task {
            let (x, margin) = loop {
                let x: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
                let margin: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
                if margin.abs() > 1e-9 {
                    break (x, margin);
                }
            };
            tasks.push(t);
            labels.push(if margin > 0.0 { 1.0 } else { -1.0 });
            features.push(SparseVec::dense(&x));
        }
    }
    let task_ids = (1..=num_tasks as i64).collect();
    let ds = MultiTaskDataset::new(tasks, labels, Some(features), num_tasks, task_ids)?;
    Ok((ds, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<MultiTaskDataset, DataError> {
        parse_dataset(Cursor::new(text))
    }

    #[test]
    fn single_line_parse() {
        let ds = parse("1 +1 1:0.5 3:2.0").unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.num_tasks(), 1);
        assert_eq!(ds.label(0), 1.0);
        assert_eq!(ds.features().unwrap()[0].pairs(), &[(1, 0.5), (3, 2.0)]);
    }

    #[test]
    fn task_reindexing_keeps_side_map() {
        let ds = parse("7 +1 1:1.0\n9 -1 1:2.0").unwrap();
        assert_eq!(ds.num_tasks(), 2);
        assert_eq!(ds.task(0), 1);
        assert_eq!(ds.task(1), 2);
        assert_eq!(ds.original_task_id(1), 7);
        assert_eq!(ds.original_task_id(2), 9);
    }

    #[test]
    fn malformed_field_names_line_and_field() {
        let err = parse("1 +1 3:abc").unwrap_err();
        match err {
            DataError::Malformed { line, field, .. } => {
                assert_eq!(line, 1);
                assert_eq!(field, "3:abc");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_feature_index_rejected() {
        let err = parse("1 +1 2:1.0 2:3.0").unwrap_err();
        assert!(matches!(
            err,
            DataError::DuplicateIndex { line: 1, index: 2 }
        ));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let ds = parse("# header\n\n1 -1 1:1.0\n").unwrap();
        assert_eq!(ds.n(), 1);
    }

    #[test]
    fn serialize_parse_round_trips_exactly() {
        let text = "7 1 1:0.1234567890123456 5:-3.75\n9 -1 2:1e-300\n7 2.5 1:0.25 2:0.5\n";
        let ds = parse(text).unwrap();
        let out = serialize_dataset(&ds);
        let ds2 = parse(&out).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn identity_gram_loads() {
        let g = load_gram(Cursor::new("2\n1,0\n0,1\n")).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.get(0, 0), 1.0);
        assert_eq!(g.get(0, 1), 0.0);
    }

    #[test]
    fn indefinite_gram_rejected_with_eig_estimate() {
        // eigenvalues {3, -1}
        let err = load_gram(Cursor::new("2\n1,2\n2,1\n")).unwrap_err();
        match err {
            DataError::GramNotPsd { min_eig_estimate } => {
                assert!((min_eig_estimate + 1.0).abs() < 1e-6, "{min_eig_estimate}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn asymmetric_gram_rejected_at_position() {
        let err = load_gram(Cursor::new("2\n1,0.5\n0.4,1\n")).unwrap_err();
        match err {
            DataError::GramAsymmetric { i, j, .. } => {
                assert_eq!((i, j), (1, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn gram_dimension_mismatch_rejected() {
        assert!(matches!(
            load_gram(Cursor::new("3\n1,0\n0,1\n")).unwrap_err(),
            DataError::GramDimension { .. }
        ));
    }

    #[test]
    fn gram_csv_round_trip() {
        let g = load_gram(Cursor::new("2\n2,0.5\n0.5,1\n")).unwrap();
        let g2 = load_gram(Cursor::new(g.to_csv_string())).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn zero_gram_is_accepted() {
        let g = load_gram(Cursor::new("2\n0,0\n0,0\n")).unwrap();
        assert_eq!(g.get(1, 1), 0.0);
    }

    #[test]
    fn synth_two_singleton_clusters() {
        let ds = synth_clustered(2, &[vec![1], vec![2]], 5, 3, 0.0, 7).unwrap();
        assert_eq!(ds.n(), 10);
        assert_eq!(ds.num_tasks(), 2);
        for i in 0..ds.n() {
            assert!(ds.label(i) == 1.0 || ds.label(i) == -1.0);
        }
    }

    #[test]
    fn synth_shared_cluster_weights_identical_at_zero_noise() {
        let (_, w) =
            synth_clustered_with_weights(4, &[vec![1, 2], vec![3, 4]], 3, 4, 0.0, 11).unwrap();
        assert_eq!(w[0], w[1]);
        assert_eq!(w[2], w[3]);
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        assert!((cos(&w[0], &w[1]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn synth_same_seed_is_byte_identical() {
        let a = synth_clustered(3, &[vec![1, 2], vec![3]], 4, 3, 0.5, 42).unwrap();
        let b = synth_clustered(3, &[vec![1, 2], vec![3]], 4, 3, 0.5, 42).unwrap();
        assert_eq!(serialize_dataset(&a), serialize_dataset(&b));
    }

    #[test]
    fn synth_rejects_non_partition() {
        assert!(synth_clustered(3, &[vec![1, 2]], 3, 3, 0.0, 1).is_err());
        assert!(synth_clustered(3, &[vec![1, 2], vec![2, 3]], 3, 3, 0.0, 1).is_err());
        assert!(synth_clustered(3, &[vec![1, 2, 3], vec![]], 3, 3, 0.0, 1).is_err());
    }

    #[test]
    fn subset_remaps_tasks_contiguously() {
        let ds = parse("7 1 1:1\n9 -1 1:2\n7 1 1:3\n").unwrap();
        let (sub, old_of_new) = ds.subset(&[1, 2]).unwrap();
        assert_eq!(sub.num_tasks(), 2);
        assert_eq!(sub.task(0), 1); // old task 2 (id 9) appears first
        assert_eq!(old_of_new, vec![2, 1]);
        assert_eq!(sub.original_task_id(1), 9);
        assert_eq!(sub.original_task_id(2), 7);
    }

    #[test]
    fn empty_task_rejected() {
        let err = MultiTaskDataset::new(vec![1, 1], vec![1.0, -1.0], None, 2, vec![1, 2]);
        assert!(matches!(err.unwrap_err(), DataError::EmptyTask { task: 2 }));
    }
}
