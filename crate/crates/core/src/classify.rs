//! Data labeling by k-means and switching-logic identification by one-vs-one
//! linear SVMs.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::lp::{LinearProgram, Sense};
use crate::model::{all_pairs, Dataset, Hyperplane, LabelingMatrix, SwitchingLogic};
use crate::qp::{solve_qp, QpStatus, QuadraticProgram};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult<T> {
    pub centroids: DenseMatrix<T>,
    pub labels: LabelingMatrix,
    pub sse: T,
    /// Lloyd iterations of the winning restart.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansOptions {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 300,
        }
    }
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum()
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` by SSE.
///
/// Clusters on inputs only. Restart `r` draws from stream `r` of a ChaCha8
/// generator keyed by `seed`.
pub fn kmeans<T: Scalar>(data: &Dataset<T>, n_cl: usize, seed: u64, restarts: usize) -> Result<KmeansResult<T>> {
    kmeans_with(
        data,
        n_cl,
        seed,
        KmeansOptions {
            restarts,
            ..KmeansOptions::default()
        },
    )
}

pub fn kmeans_with<T: Scalar>(
    data: &Dataset<T>,
    n_cl: usize,
    seed: u64,
    options: KmeansOptions,
) -> Result<KmeansResult<T>> {
    let n = data.len();
    if n_cl == 0 {
        return Err(Error::Invalid("k-means needs at least one cluster".into()));
    }
    if n < n_cl {
        return Err(Error::Invalid(format!("{n} points cannot form {n_cl} clusters")));
    }
    let mut best: Option<KmeansResult<T>> = None;
    for restart in 0..options.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let run = lloyd(data, n_cl, &mut rng, options.max_iterations)?;
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus<T: Scalar, R: Rng>(data: &Dataset<T>, n_cl: usize, rng: &mut R) -> Vec<Vec<T>> {
    let n = data.len();
    let mut centroids = vec![data.input(rng.gen_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.input(i), &centroids[0]).to_f64_lossy())
        .collect();
    while centroids.len() < n_cl {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every remaining point coincides with a centroid
            Err(_) => rng.gen_range(0..n),
        };
        let c = data.input(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.input(i), &c).to_f64_lossy());
        }
        centroids.push(c);
    }
    centroids
}

fn nearest<T: Scalar>(x: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, sq_dist(x, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd<T: Scalar, R: Rng>(data: &Dataset<T>, n_cl: usize, rng: &mut R, max_iterations: usize) -> Result<KmeansResult<T>> {
    let n = data.len();
    let n_p = data.n_inputs();
    let mut centroids = plus_plus(data, n_cl, rng);
    let mut labels: Vec<usize> = vec![usize::MAX; n];
    let mut prev_sse = T::infinity();
    let mut iterations = 0;
    let slack = T::epsilon() * T::from_f64_lossy(64.0);

    loop {
        iterations += 1;
        let mut changed = false;
        let mut dist = vec![T::zero(); n];
        for i in 0..n {
            let (j, d) = nearest(data.input(i), &centroids);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
            dist[i] = d;
        }
        // empty cluster: move the farthest point of a shared cluster into it
        let mut sizes = vec![0usize; n_cl];
        for &l in &labels {
            sizes[l] += 1;
        }
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let far = (0..n)
                .filter(|&i| sizes[labels[i]] >= 2)
                .fold(None::<usize>, |acc, i| match acc {
                    Some(a) if dist[a] >= dist[i] => Some(a),
                    _ => Some(i),
                })
                .expect("n >= n_cl leaves a shared cluster");
            sizes[labels[far]] -= 1;
            sizes[empty] += 1;
            labels[far] = empty;
            centroids[empty] = data.input(far).to_vec();
            dist[far] = T::zero();
            changed = true;
        }
        for (j, c) in centroids.iter_mut().enumerate() {
            let mut sum = vec![T::zero(); n_p];
            for i in (0..n).filter(|&i| labels[i] == j) {
                for (s, &x) in sum.iter_mut().zip(data.input(i)) {
                    *s += x;
                }
            }
            let count = T::from_usize(sizes[j]).expect("count fits");
            *c = sum.into_iter().map(|s| s / count).collect();
        }
        let sse: T = (0..n).map(|i| sq_dist(data.input(i), &centroids[labels[i]])).sum();
        assert!(
            sse <= prev_sse + slack * (T::one() + prev_sse.abs().min(T::max_value())),
            "k-means SSE increased from {prev_sse} to {sse}"
        );
        prev_sse = sse;
        if !changed || iterations >= max_iterations {
            let flat: Vec<T> = centroids.iter().flatten().copied().collect();
            return Ok(KmeansResult {
                centroids: DenseMatrix::from_vec(n_cl, n_p, flat)?,
                labels: LabelingMatrix::new(labels, n_cl)?,
                sse,
                iterations,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Slack weight.
    pub gamma: f64,
    /// Required KKT residual of the QP solve.
    pub tolerance: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            tolerance: 1e-6,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Invalid(format!("gamma must be finite and positive, got {}", self.gamma)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Invalid(format!("svm tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Replaces a vanishing normal by a tiny one along the first axis so the
/// hyperplane stays valid. Returns whether a substitution happened.
pub(crate) fn nondegenerate(w: Vec<f64>, b: f64) -> (Hyperplane<f64>, bool) {
    match Hyperplane::new(w.clone(), b) {
        Ok(h) => (h, false),
        Err(_) => {
            let mut w = vec![0.0; w.len()];
            w[0] = 1e-9;
            (Hyperplane::new(w, b).expect("nonzero normal"), true)
        }
    }
}

/// Soft-margin linear SVM on the points of two classes.
///
/// `positive` points should satisfy `wᵀx + b ≥ 1 − e`, `negative` points
/// `wᵀx + b ≤ −1 + e`.
pub fn svm_on_points(positive: &[&[f64]], negative: &[&[f64]], cfg: &SvmConfig) -> Result<(Hyperplane<f64>, Vec<f64>)> {
    cfg.validate()?;
    if positive.is_empty() {
        return Err(Error::EmptyClass(0));
    }
    if negative.is_empty() {
        return Err(Error::EmptyClass(1));
    }
    let n_p = positive[0].len();
    let mut lp = LinearProgram::new();
    for _ in 0..n_p {
        lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
    }
    let b = lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
    let mut slacks = Vec::new();
    for (points, sign) in [(positive, 1.0), (negative, -1.0)] {
        for x in points.iter() {
            if x.len() != n_p {
                return Err(Error::Dimension("points of mixed dimension".into()));
            }
            let e = lp.add_var(cfg.gamma, 0.0, f64::INFINITY);
            slacks.push(e);
            let mut coeffs: Vec<(usize, f64)> = x.iter().enumerate().map(|(j, &v)| (j, sign * v)).collect();
            coeffs.push((b, sign));
            coeffs.push((e, 1.0));
            lp.add_constraint(coeffs, Sense::Ge, 1.0);
        }
    }
    let mut q = DenseMatrix::zeros(lp.n_vars(), lp.n_vars());
    for j in 0..n_p {
        q[(j, j)] = 1.0;
    }
    let sol = solve_qp(&QuadraticProgram::new(q, lp))?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::Invalid("svm QP reported infeasible".into()));
    }
    if sol.kkt_residual > cfg.tolerance {
        log::warn!("svm KKT residual {:.3e} above tolerance", sol.kkt_residual);
    }
    let (h, degenerate) = nondegenerate(sol.values[..n_p].to_vec(), sol.values[b]);
    if degenerate {
        log::warn!("svm returned a vanishing normal; substituted a tiny one");
    }
    Ok((h, slacks.iter().map(|&e| sol.values[e].max(0.0)).collect()))
}

/// Binary SVM with class 0 on the nonnegative side. Slacks are returned in
/// row order.
pub fn train_binary_svm(data: &Dataset<f64>, labels: &LabelingMatrix, cfg: &SvmConfig) -> Result<(Hyperplane<f64>, Vec<f64>)> {
    if labels.n_classes() != 2 {
        return Err(Error::Invalid(format!("binary svm needs 2 classes, got {}", labels.n_classes())));
    }
    check_rows(data, labels)?;
    labels.require_nonempty()?;
    let pos = labels.members(0);
    let neg = labels.members(1);
    let pos_x: Vec<&[f64]> = pos.iter().map(|&i| data.input(i)).collect();
    let neg_x: Vec<&[f64]> = neg.iter().map(|&i| data.input(i)).collect();
    let (h, e) = svm_on_points(&pos_x, &neg_x, cfg)?;
    let mut slacks = vec![0.0; data.len()];
    for (k, &i) in pos.iter().chain(&neg).enumerate() {
        slacks[i] = e[k];
    }
    Ok((h, slacks))
}

fn check_rows(data: &Dataset<f64>, labels: &LabelingMatrix) -> Result<()> {
    if labels.n_rows() != data.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            labels.n_rows(),
            data.len()
        )));
    }
    Ok(())
}

/// One-vs-one: hyperplane `k` separates the two classes of pair `k` using
/// only their points.
pub fn train_multiclass_svm(data: &Dataset<f64>, labels: &LabelingMatrix, cfg: &SvmConfig) -> Result<SwitchingLogic<f64>> {
    check_rows(data, labels)?;
    labels.require_nonempty()?;
    let n_cl = labels.n_classes();
    let members: Vec<Vec<&[f64]>> = (0..n_cl)
        .map(|c| labels.members(c).into_iter().map(|i| data.input(i)).collect())
        .collect();
    let planes = all_pairs(n_cl)
        .into_par_iter()
        .map(|(r, s)| svm_on_points(&members[r], &members[s], cfg).map(|(h, _)| h))
        .collect::<Result<Vec<_>>>()?;
    SwitchingLogic::new(planes, n_cl)
}
