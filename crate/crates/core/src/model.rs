//! Datasets, labelings, switching logic and the piecewise-affine sensor.
//!
//! Class indices are zero-based throughout the Rust API; file formats use
//! one-based labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::scalar::Scalar;

const NORMALIZED_TOL: f64 = 1e-12;
const MIN_NORMAL_NORM: f64 = 1e-12;

/// Tabular regression data: `n` rows of inputs `x ∈ ℝ^{n_p}` and output `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: DenseMatrix<T>,
    outputs: Vec<T>,
    ids: Vec<usize>,
    labels: Option<Vec<usize>>,
    normalized: bool,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: DenseMatrix<T>, outputs: Vec<T>) -> Result<Self> {
        let ids = (0..outputs.len()).collect();
        Self::with_ids(inputs, outputs, ids)
    }

    pub fn with_ids(inputs: DenseMatrix<T>, outputs: Vec<T>, ids: Vec<usize>) -> Result<Self> {
        let n = inputs.rows();
        if n == 0 || inputs.cols() == 0 {
            return Err(Error::Invalid("dataset needs at least one row and one input".into()));
        }
        if outputs.len() != n || ids.len() != n {
            return Err(Error::Dimension(format!(
                "{n} input rows, {} outputs, {} ids",
                outputs.len(),
                ids.len()
            )));
        }
        if let Some(k) = inputs.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite input at row {}",
                k / inputs.cols()
            )));
        }
        if let Some(i) = outputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite output at row {i}")));
        }
        Ok(Self {
            inputs,
            outputs,
            ids,
            labels: None,
            normalized: false,
        })
    }

    /// Builds a dataset from `(x, y)` rows.
    pub fn from_rows(rows: &[(Vec<T>, T)]) -> Result<Self> {
        let inputs: Vec<Vec<T>> = rows.iter().map(|(x, _)| x.clone()).collect();
        let outputs = rows.iter().map(|(_, y)| *y).collect();
        Self::new(DenseMatrix::from_rows(&inputs)?, outputs)
    }

    /// Flags the dataset as normalized after checking every entry lies in `[0, 1]`.
    pub fn into_normalized(mut self) -> Result<Self> {
        let tol = T::from_f64_lossy(NORMALIZED_TOL);
        let inside = |v: &T| *v >= -tol && *v <= T::one() + tol;
        if !self.inputs.as_slice().iter().all(inside) || !self.outputs.iter().all(inside) {
            return Err(Error::Invalid("normalized dataset has entries outside [0, 1]".into()));
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &DenseMatrix<T> {
        &self.inputs
    }

    pub fn input(&self, i: usize) -> &[T] {
        self.inputs.row(i)
    }

    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Rows selected by `indices`, keeping ids and labels.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let inputs = DenseMatrix::from_fn(indices.len(), self.n_inputs(), |i, j| {
            self.inputs[(indices[i], j)]
        });
        let outputs = indices.iter().map(|&i| self.outputs[i]).collect();
        let ids = indices.iter().map(|&i| self.ids[i]).collect();
        let mut out = Self::with_ids(inputs, outputs, ids)?;
        out.labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        out.normalized = self.normalized;
        Ok(out)
    }

    /// Replaces the outputs, e.g. after adding measurement noise.
    pub fn with_outputs(mut self, outputs: Vec<T>) -> Result<Self> {
        if outputs.len() != self.len() {
            return Err(Error::Dimension("output length changed".into()));
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite output".into()));
        }
        self.outputs = outputs;
        self.normalized = false;
        Ok(self)
    }
}

/// Binary assignment of `n` points to `n_cl` classes with unit row sums.
///
/// Stored as one class index per row, which makes the row-sum invariant hold
/// by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelingMatrix {
    classes: Vec<usize>,
    n_cl: usize,
}

impl LabelingMatrix {
    pub fn new(classes: Vec<usize>, n_cl: usize) -> Result<Self> {
        if n_cl == 0 {
            return Err(Error::Invalid("labeling needs at least one class".into()));
        }
        if let Some(i) = classes.iter().position(|&c| c >= n_cl) {
            return Err(Error::Invalid(format!(
                "row {i} labeled {} with only {n_cl} classes",
                classes[i]
            )));
        }
        Ok(Self { classes, n_cl })
    }

    /// Builds the labeling from an explicit binary matrix, checking that every
    /// entry is 0 or 1 and every row sums to exactly one.
    pub fn from_binary(entries: &[Vec<u8>]) -> Result<Self> {
        let n_cl = entries.first().map_or(0, Vec::len);
        let mut classes = Vec::with_capacity(entries.len());
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n_cl {
                return Err(Error::Dimension(format!("row {i} has {} columns", row.len())));
            }
            if row.iter().any(|&z| z > 1) {
                return Err(Error::Invalid(format!("row {i} is not binary")));
            }
            if row.iter().map(|&z| z as usize).sum::<usize>() != 1 {
                return Err(Error::Invalid(format!("row {i} does not sum to one")));
            }
            classes.push(row.iter().position(|&z| z == 1).unwrap_or(0));
        }
        Self::new(classes, n_cl)
    }

    pub fn n_rows(&self) -> usize {
        self.classes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_cl
    }

    pub fn class_of(&self, i: usize) -> usize {
        self.classes[i]
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    /// `z_{i,j}`.
    pub fn z(&self, i: usize, j: usize) -> u8 {
        u8::from(self.classes[i] == j)
    }

    pub fn to_binary(&self) -> Vec<Vec<u8>> {
        self.classes
            .iter()
            .map(|&c| (0..self.n_cl).map(|j| u8::from(j == c)).collect())
            .collect()
    }

    pub fn members(&self, class: usize) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&i| self.classes[i] == class)
            .collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_cl];
        for &c in &self.classes {
            sizes[c] += 1;
        }
        sizes
    }

    /// Errors with the first empty class.
    pub fn require_nonempty(&self) -> Result<()> {
        match self.class_sizes().iter().position(|&s| s == 0) {
            Some(c) => Err(Error::EmptyClass(c)),
            None => Ok(()),
        }
    }

    /// Relabels class `c` as `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(self.classes.iter().map(|&c| perm[c]).collect(), self.n_cl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane<T> {
    pub w: Vec<T>,
    pub b: T,
}

impl<T: Scalar> Hyperplane<T> {
    pub fn new(w: Vec<T>, b: T) -> Result<Self> {
        let norm = dot(&w, &w).sqrt();
        if !(norm > T::from_f64_lossy(MIN_NORMAL_NORM)) {
            return Err(Error::Invalid(format!("hyperplane normal has norm {norm}")));
        }
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite hyperplane".into()));
        }
        Ok(Self { w, b })
    }

    /// `wᵀx + b`.
    pub fn eval(&self, x: &[T]) -> T {
        dot(&self.w, x) + self.b
    }
}

/// Number of one-vs-one separators for `n_cl` classes.
pub fn n_separators(n_cl: usize) -> usize {
    n_cl * n_cl.saturating_sub(1) / 2
}

/// The `k`-th pair `(r, s)`, `r < s`, of `{0, …, n_cl − 1}` in lexicographic order.
pub fn combination(n_cl: usize, k: usize) -> Result<(usize, usize)> {
    let mut remaining = k;
    for r in 0..n_cl {
        let row = n_cl - r - 1;
        if remaining < row {
            return Ok((r, r + 1 + remaining));
        }
        remaining -= row;
    }
    Err(Error::Invalid(format!(
        "pair index {k} out of range for {n_cl} classes ({} pairs)",
        n_separators(n_cl)
    )))
}

pub fn all_pairs(n_cl: usize) -> Vec<(usize, usize)> {
    (0..n_separators(n_cl))
        .map(|k| combination(n_cl, k).expect("k in range"))
        .collect()
}

/// One-vs-one switching logic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingLogic<T> {
    hyperplanes: Vec<Hyperplane<T>>,
    pairs: Vec<(usize, usize)>,
    n_cl: usize,
}

impl<T: Scalar> SwitchingLogic<T> {
    pub fn new(hyperplanes: Vec<Hyperplane<T>>, n_cl: usize) -> Result<Self> {
        if n_cl < 2 {
            return Err(Error::Invalid("switching logic needs at least two classes".into()));
        }
        if hyperplanes.len() != n_separators(n_cl) {
            return Err(Error::Dimension(format!(
                "{} hyperplanes for {n_cl} classes",
                hyperplanes.len()
            )));
        }
        let dim = hyperplanes[0].w.len();
        if hyperplanes.iter().any(|h| h.w.len() != dim) {
            return Err(Error::Dimension("hyperplanes of mixed dimension".into()));
        }
        Ok(Self {
            hyperplanes,
            pairs: all_pairs(n_cl),
            n_cl,
        })
    }

    pub fn hyperplanes(&self) -> &[Hyperplane<T>] {
        &self.hyperplanes
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_classes(&self) -> usize {
        self.n_cl
    }

    pub fn dim(&self) -> usize {
        self.hyperplanes[0].w.len()
    }

    pub fn votes(&self, x: &[T]) -> Vec<usize> {
        tally_votes(
            self.n_cl,
            self.hyperplanes.iter().zip(&self.pairs).map(|(h, &p)| (h, p)),
            x,
        )
    }

    /// Pairwise vote: hyperplane `k` with pair `(r, s)` votes for `r` when
    /// `w_kᵀx + b_k ≥ 0` and for `s` otherwise. Most votes wins, ties go to the
    /// smallest class index.
    pub fn assign_region(&self, x: &[T]) -> usize {
        winner(&self.votes(x))
    }
}

pub(crate) fn tally_votes<'a, T: Scalar>(
    n_cl: usize,
    planes: impl Iterator<Item = (&'a Hyperplane<T>, (usize, usize))>,
    x: &[T],
) -> Vec<usize> {
    let mut votes = vec![0; n_cl];
    for (h, (r, s)) in planes {
        if h.eval(x) >= T::zero() {
            votes[r] += 1;
        } else {
            votes[s] += 1;
        }
    }
    votes
}

pub(crate) fn winner(votes: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineModel<T> {
    pub p: Vec<T>,
    pub b: T,
}

impl<T: Scalar> AffineModel<T> {
    pub fn new(p: Vec<T>, b: T) -> Self {
        Self { p, b }
    }

    pub fn eval(&self, x: &[T]) -> T {
        dot(&self.p, x) + self.b
    }
}

/// Per-column min-max normalization record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler<T> {
    pub input_min: Vec<T>,
    pub input_max: Vec<T>,
    pub output_min: T,
    pub output_max: T,
}

impl<T: Scalar> Scaler<T> {
    pub fn new(input_min: Vec<T>, input_max: Vec<T>, output_min: T, output_max: T) -> Result<Self> {
        if input_min.len() != input_max.len() {
            return Err(Error::Dimension("scaler min/max lengths differ".into()));
        }
        for (j, (lo, hi)) in input_min.iter().zip(&input_max).enumerate() {
            if !(hi > lo) {
                return Err(Error::Invalid(format!(
                    "degenerate range for input column {j}: [{lo}, {hi}]"
                )));
            }
        }
        if !(output_max > output_min) {
            return Err(Error::Invalid(format!(
                "degenerate output range [{output_min}, {output_max}]"
            )));
        }
        Ok(Self {
            input_min,
            input_max,
            output_min,
            output_max,
        })
    }

    pub fn identity(n_p: usize) -> Self {
        Self {
            input_min: vec![T::zero(); n_p],
            input_max: vec![T::one(); n_p],
            output_min: T::zero(),
            output_max: T::one(),
        }
    }

    /// Fits the column ranges of `raw`.
    pub fn fit(raw: &Dataset<T>) -> Result<Self> {
        let n_p = raw.n_inputs();
        let mut lo = vec![T::infinity(); n_p];
        let mut hi = vec![T::neg_infinity(); n_p];
        for i in 0..raw.len() {
            for (j, &v) in raw.input(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let ylo = raw.outputs().iter().fold(T::infinity(), |m, &v| m.min(v));
        let yhi = raw.outputs().iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        Self::new(lo, hi, ylo, yhi)
    }

    pub fn n_inputs(&self) -> usize {
        self.input_min.len()
    }

    pub fn normalize_input(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(&v, (&lo, &hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn denormalize_input(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(&v, (&lo, &hi))| lo + v * (hi - lo))
            .collect()
    }

    pub fn normalize_output(&self, y: T) -> T {
        (y - self.output_min) / (self.output_max - self.output_min)
    }

    pub fn denormalize_output(&self, y: T) -> T {
        self.output_min + y * (self.output_max - self.output_min)
    }

    pub fn apply(&self, raw: &Dataset<T>) -> Result<Dataset<T>> {
        self.map(raw, |s, x| s.normalize_input(x), |s, y| s.normalize_output(y))
    }

    pub fn invert(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        self.map(data, |s, x| s.denormalize_input(x), |s, y| s.denormalize_output(y))
    }

    fn map(
        &self,
        data: &Dataset<T>,
        fx: impl Fn(&Self, &[T]) -> Vec<T>,
        fy: impl Fn(&Self, T) -> T,
    ) -> Result<Dataset<T>> {
        if data.n_inputs() != self.n_inputs() {
            return Err(Error::Dimension(format!(
                "scaler for {} inputs applied to {}",
                self.n_inputs(),
                data.n_inputs()
            )));
        }
        let rows: Vec<Vec<T>> = (0..data.len()).map(|i| fx(self, data.input(i))).collect();
        let outputs = data.outputs().iter().map(|&y| fy(self, y)).collect();
        let mut out = Dataset::with_ids(DenseMatrix::from_rows(&rows)?, outputs, data.ids().to_vec())?;
        out.labels = data.labels.clone();
        Ok(out)
    }
}

/// Min-max normalizes every column of `raw` to `[0, 1]`.
pub fn normalize<T: Scalar>(raw: &Dataset<T>) -> Result<(Dataset<T>, Scaler<T>)> {
    let scaler = Scaler::fit(raw)?;
    let data = scaler.apply(raw)?;
    // rounding can leave entries a few ulps outside the unit interval
    let clamp = |v: T| v.max(T::zero()).min(T::one());
    let rows: Vec<Vec<T>> = (0..data.len())
        .map(|i| data.input(i).iter().map(|&v| clamp(v)).collect())
        .collect();
    let outputs = data.outputs().iter().map(|&v| clamp(v)).collect();
    let mut out = Dataset::with_ids(DenseMatrix::from_rows(&rows)?, outputs, data.ids().to_vec())?;
    out.labels = data.labels.clone();
    Ok((out.into_normalized()?, scaler))
}

pub fn denormalize<T: Scalar>(data: &Dataset<T>, scaler: &Scaler<T>) -> Result<Dataset<T>> {
    scaler.invert(data)
}

/// The deployable piecewise-affine sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel<T> {
    models: Vec<AffineModel<T>>,
    switching: Option<SwitchingLogic<T>>,
    scaler: Scaler<T>,
    pub metadata: BTreeMap<String, String>,
}

impl<T: Scalar> SensorModel<T> {
    pub fn new(
        models: Vec<AffineModel<T>>,
        switching: Option<SwitchingLogic<T>>,
        scaler: Scaler<T>,
    ) -> Result<Self> {
        let n_p = scaler.n_inputs();
        if models.is_empty() {
            return Err(Error::Invalid("sensor needs at least one model".into()));
        }
        if models.iter().any(|m| m.p.len() != n_p) {
            return Err(Error::Dimension(format!("models must have {n_p} coefficients")));
        }
        match &switching {
            Some(sw) => {
                if sw.n_classes() != models.len() {
                    return Err(Error::Dimension(format!(
                        "{} models for {} classes",
                        models.len(),
                        sw.n_classes()
                    )));
                }
                if sw.dim() != n_p {
                    return Err(Error::Dimension("switching logic dimension".into()));
                }
            }
            None if models.len() != 1 => {
                return Err(Error::Invalid("several models need a switching logic".into()));
            }
            None => {}
        }
        // re-validate the scaler ranges
        let scaler = Scaler::new(
            scaler.input_min,
            scaler.input_max,
            scaler.output_min,
            scaler.output_max,
        )?;
        Ok(Self {
            models,
            switching,
            scaler,
            metadata: BTreeMap::new(),
        })
    }

    pub fn single(model: AffineModel<T>, scaler: Scaler<T>) -> Result<Self> {
        Self::new(vec![model], None, scaler)
    }

    /// Replaces the scaler, e.g. to attach the one fitted on the raw data to a
    /// sensor designed in normalized units.
    pub fn with_scaler(mut self, scaler: Scaler<T>) -> Result<Self> {
        if scaler.n_inputs() != self.n_inputs() {
            return Err(Error::Dimension("scaler input count".into()));
        }
        self.scaler = scaler;
        Ok(self)
    }

    pub fn models(&self) -> &[AffineModel<T>] {
        &self.models
    }

    pub fn switching(&self) -> Option<&SwitchingLogic<T>> {
        self.switching.as_ref()
    }

    pub fn scaler(&self) -> &Scaler<T> {
        &self.scaler
    }

    pub fn n_classes(&self) -> usize {
        self.models.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.scaler.n_inputs()
    }

    pub fn region(&self, x: &[T]) -> usize {
        self.switching.as_ref().map_or(0, |sw| sw.assign_region(x))
    }

    /// Prediction in normalized units.
    pub fn predict(&self, x: &[T]) -> Result<T> {
        if x.len() != self.n_inputs() {
            return Err(Error::Dimension(format!(
                "input of length {} for a sensor with {} inputs",
                x.len(),
                self.n_inputs()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite input".into()));
        }
        Ok(self.models[self.region(x)].eval(x))
    }

    /// Prediction from raw engineering units, returned in raw units.
    pub fn predict_raw(&self, x_raw: &[T]) -> Result<T> {
        let x = self.scaler.normalize_input(x_raw);
        Ok(self.scaler.denormalize_output(self.predict(&x)?))
    }

    pub fn predict_all(&self, data: &Dataset<T>) -> Result<Vec<T>> {
        (0..data.len()).map(|i| self.predict(data.input(i))).collect()
    }

    /// RMSE of the sensor on `data` (normalized units).
    pub fn rmse_on(&self, data: &Dataset<T>) -> Result<T> {
        rmse(data.outputs(), &self.predict_all(data)?)
    }

    /// Largest jump `|f_r(x) − f_s(x)|` over the given points of hyperplane `k`.
    pub fn boundary_gap(&self, k: usize, points: &[Vec<T>]) -> T {
        let Some(sw) = &self.switching else {
            return T::zero();
        };
        let (r, s) = sw.pairs()[k];
        points.iter().fold(T::zero(), |m, x| {
            m.max((self.models[r].eval(x) - self.models[s].eval(x)).abs())
        })
    }
}

pub fn rmse<T: Scalar>(y_true: &[T], y_pred: &[T]) -> Result<T> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "rmse of vectors with lengths {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Invalid("rmse of empty vectors".into()));
    }
    let sse: T = y_true
        .iter()
        .zip(y_pred)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok((sse / T::from_usize(y_true.len()).unwrap()).sqrt())
}

/// Points on the hyperplane `wᵀx + b = 0` sampled around the unit box.
///
/// Each sample is a random point of `[−0.5, 1.5]^{n_p}` projected onto the plane.
pub fn sample_on_hyperplane<R: rand::Rng>(h: &Hyperplane<f64>, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let nn = dot(&h.w, &h.w);
    (0..count)
        .map(|_| {
            let x: Vec<f64> = h.w.iter().map(|_| rng.gen_range(-0.5..1.5)).collect();
            let t = h.eval(&x) / nn;
            x.iter().zip(&h.w).map(|(xi, wi)| xi - t * wi).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(w: &[f64], b: f64) -> Hyperplane<f64> {
        Hyperplane::new(w.to_vec(), b).unwrap()
    }

    #[test]
    fn two_class_region_follows_sign() {
        let sw = SwitchingLogic::new(vec![plane(&[1.0], -1.0)], 2).unwrap();
        assert_eq!(sw.assign_region(&[2.0]), 0);
        assert_eq!(sw.assign_region(&[0.0]), 1);
        // boundary votes for the lower index
        assert_eq!(sw.assign_region(&[1.0]), 0);
    }

    #[test]
    fn unanimous_vote() {
        // pairs (0,1), (0,2), (1,2): class 1 loses to nobody
        let sw = SwitchingLogic::new(
            vec![plane(&[1.0, 0.0], -10.0), plane(&[1.0, 0.0], 10.0), plane(&[0.0, 1.0], 10.0)],
            3,
        )
        .unwrap();
        // plane 0 votes class 1, plane 1 votes class 0, plane 2 votes class 1
        assert_eq!(sw.votes(&[0.0, 0.0]), vec![1, 2, 0]);
        assert_eq!(sw.assign_region(&[0.0, 0.0]), 1);
    }

    #[test]
    fn circular_vote_goes_to_first_class() {
        // Search random 2-D hyperplanes for a point with a 1-1-1 vote.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut found = false;
        for _ in 0..1000 {
            let hs: Vec<_> = (0..3)
                .map(|_| plane(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0)))
                .collect();
            let sw = SwitchingLogic::new(hs, 3).unwrap();
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            if sw.votes(&x) == vec![1, 1, 1] {
                assert_eq!(sw.assign_region(&x), 0);
                found = true;
                break;
            }
        }
        assert!(found, "no circular vote found");
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combination(3, 0).unwrap(), (0, 1));
        assert_eq!(combination(3, 2).unwrap(), (1, 2));
        // (2,4) in one-based numbering
        assert_eq!(combination(4, 4).unwrap(), (1, 3));
        assert!(combination(3, 3).is_err());
        assert_eq!(all_pairs(4), vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn predict_examples() {
        let s = SensorModel::single(AffineModel::new(vec![0.0, 0.0], 0.5), Scaler::identity(2)).unwrap();
        assert_eq!(s.predict(&[0.3, 0.9]).unwrap(), 0.5);
        assert!(s.predict(&[0.3]).is_err());

        let m = AffineModel::new(vec![1.0, -2.0], 0.25);
        let sw = SwitchingLogic::new(vec![plane(&[1.0, 1.0], -1.0)], 2).unwrap();
        let s = SensorModel::new(vec![m.clone(), m.clone()], Some(sw), Scaler::identity(2)).unwrap();
        for x in [[0.0, 0.0], [1.0, 1.0], [0.2, 0.9]] {
            assert_eq!(s.predict(&x).unwrap(), m.eval(&x));
        }
    }

    #[test]
    fn raw_prediction_uses_scaler() {
        let scaler = Scaler::new(vec![10.0], vec![20.0], 100.0, 300.0).unwrap();
        let s = SensorModel::single(AffineModel::new(vec![1.0], 0.0), scaler).unwrap();
        // x = 15 -> 0.5 -> y_norm 0.5 -> 200
        assert!((s.predict_raw(&[15.0]).unwrap() - 200.0f64).abs() < 1e-12);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.5);
        assert!(rmse(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let raw = Dataset::from_rows(&[
            (vec![2000.0], 1.0),
            (vec![11000.0], 2.0),
            (vec![20000.0], 3.0),
        ])
        .unwrap();
        let (n, scaler) = normalize(&raw).unwrap();
        assert_eq!(n.inputs().column(0), vec![0.0, 0.5, 1.0]);
        assert!(n.is_normalized());
        let back = denormalize(&n, &scaler).unwrap();
        assert_eq!(back.inputs().column(0), vec![2000.0, 11000.0, 20000.0]);

        let unit = Dataset::from_rows(&[(vec![0.0], 0.0), (vec![0.25], 0.5), (vec![1.0], 1.0)]).unwrap();
        let (n, _) = normalize(&unit).unwrap();
        assert_eq!(n.inputs(), unit.inputs());
        assert_eq!(n.outputs(), unit.outputs());

        let flat = Dataset::from_rows(&[(vec![1.0], 0.0), (vec![1.0], 1.0)]).unwrap();
        assert!(normalize(&flat).is_err());
    }

    #[test]
    fn labeling_from_binary_checks_rows() {
        let z = LabelingMatrix::from_binary(&[vec![1, 0], vec![0, 1]]).unwrap();
        assert_eq!(z.classes(), &[0, 1]);
        assert_eq!(z.to_binary(), vec![vec![1, 0], vec![0, 1]]);
        assert!(LabelingMatrix::from_binary(&[vec![1, 1]]).is_err());
        assert!(LabelingMatrix::from_binary(&[vec![0, 0]]).is_err());
        assert!(LabelingMatrix::from_binary(&[vec![2, 0]]).is_err());
    }

    #[test]
    fn zero_normal_rejected() {
        assert!(Hyperplane::new(vec![0.0, 0.0], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn normalize_roundtrip(rows in proptest::collection::vec((-1e4f64..1e4, -1e4f64..1e4, -1e3f64..1e3), 3..30)) {
            let data = Dataset::from_rows(
                &rows.iter().map(|&(a, b, y)| (vec![a, b], y)).collect::<Vec<_>>()
            ).unwrap();
            if let Ok((n, scaler)) = normalize(&data) {
                let back = denormalize(&n, &scaler).unwrap();
                for (u, v) in back.inputs().as_slice().iter().zip(data.inputs().as_slice()) {
                    prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0) * 1e4);
                }
                for (u, v) in back.outputs().iter().zip(data.outputs()) {
                    prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0) * 1e4);
                }
            }
        }

        #[test]
        fn vote_ignores_storage_order(seed in 0u64..500, shift in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_cl = 4;
            let planes: Vec<_> = (0..n_separators(n_cl))
                .map(|_| plane(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0)))
                .collect();
            let pairs = all_pairs(n_cl);
            let x = [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0)];
            let forward = tally_votes(n_cl, planes.iter().zip(pairs.iter().copied()), &x);
            let mut order: Vec<usize> = (0..planes.len()).collect();
            order.rotate_left(shift);
            order.reverse();
            let permuted = tally_votes(n_cl, order.iter().map(|&k| (&planes[k], pairs[k])), &x);
            prop_assert_eq!(winner(&forward), winner(&permuted));
        }

        #[test]
        fn rmse_permutation_invariant(v in proptest::collection::vec((-10f64..10.0, -10f64..10.0), 1..40), rot in 0usize..40) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.iter().copied().unzip();
            prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
            let k = rot % a.len();
            let mut a2 = a.clone();
            let mut b2 = b.clone();
            a2.rotate_left(k);
            b2.rotate_left(k);
            prop_assert!((rmse(&a, &b).unwrap() - rmse(&a2, &b2).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn prediction_affine_within_region(seed in 0u64..300, alpha in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let models: Vec<_> = (0..3)
                .map(|_| AffineModel::new(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0)))
                .collect();
            let sw = SwitchingLogic::new(
                (0..3).map(|_| plane(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(-0.5..0.5))).collect(),
                3,
            ).unwrap();
            let s = SensorModel::new(models, Some(sw), Scaler::identity(2)).unwrap();
            let x1 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let x2 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let xm = [alpha * x1[0] + (1.0 - alpha) * x2[0], alpha * x1[1] + (1.0 - alpha) * x2[1]];
            if s.region(&x1) == s.region(&x2) && s.region(&x2) == s.region(&xm) {
                let lhs = s.predict(&xm).unwrap();
                let rhs = alpha * s.predict(&x1).unwrap() + (1.0 - alpha) * s.predict(&x2).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }
}
