//! Regression data model: designs, responses, column normalization and the
//! objective functions shared by every solver.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients with magnitude at or below this are treated as zero.
pub const SUPPORT_TOL: f64 = 1e-9;

/// Tolerance within which a column already counts as normalized.
const UNIT_MOMENT_TOL: f64 = 1e-12;

/// Design matrix together with its normalization state.
///
/// The matrix is stored column-major so coordinate updates walk contiguous
/// memory.
#[derive(Debug, Clone)]
pub struct Design {
    x: Array2<f64>,
    column_scales: Array1<f64>,
    loadings: Array1<f64>,
    col_sq_means: Array1<f64>,
    column_means: Option<Array1<f64>>,
    names: Vec<String>,
    normalized: bool,
}

/// How raw regressors are turned into a [`Design`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub normalize: bool,
    pub center: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            normalize: true,
            center: false,
        }
    }
}

fn column_major(x: &Array2<f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut out = Array2::zeros((n, p).f());
    out.assign(x);
    out
}

fn check_finite(x: &Array2<f64>) -> Result<()> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Divides every column by the root of its empirical second moment so that
/// `E_n(x_j^2) = 1`. Returns the normalized matrix and the scale factors;
/// raw-unit coefficients are recovered as `beta_raw_j = beta_j / scale_j`.
///
/// Columns whose second moment is already 1 (to within 1e-12) are left
/// untouched with scale exactly 1, which makes the operation idempotent.
pub fn normalize_columns(raw_x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let (n, p) = raw_x.dim();
    if n == 0 || p == 0 {
        return Err(Error::Dimension(format!("empty design {n}x{p}")));
    }
    check_finite(raw_x)?;
    let mut x = column_major(raw_x);
    let mut scales = Array1::ones(p);
    for (j, mut col) in x.columns_mut().into_iter().enumerate() {
        let m2 = col.dot(&col) / n as f64;
        if m2 <= 0.0 {
            return Err(Error::DegenerateColumn(j));
        }
        if (m2 - 1.0).abs() <= UNIT_MOMENT_TOL {
            continue;
        }
        let scale = m2.sqrt();
        col.mapv_inplace(|v| v / scale);
        scales[j] = scale;
    }
    Ok((x, scales))
}

impl Design {
    /// Builds a normalized design; the default path for every estimator.
    pub fn new(raw_x: &Array2<f64>) -> Result<Self> {
        Self::with_options(raw_x, DesignOptions::default(), None)
    }

    /// Builds a design with explicit normalization/centering choices.
    ///
    /// With normalization disabled the penalty loadings become
    /// `gamma_j = sqrt(E_n x_j^2)` so the penalized problem stays equivalent
    /// to the normalized one.
    pub fn with_options(
        raw_x: &Array2<f64>,
        opts: DesignOptions,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, p) = raw_x.dim();
        if n == 0 || p == 0 {
            return Err(Error::Dimension(format!("empty design {n}x{p}")));
        }
        check_finite(raw_x)?;
        let mut x = column_major(raw_x);
        let column_means = if opts.center {
            let means = x.mean_axis(ndarray::Axis(0)).expect("n >= 1");
            for (mut col, m) in x.columns_mut().into_iter().zip(means.iter()) {
                col.mapv_inplace(|v| v - m);
            }
            Some(means)
        } else {
            None
        };
        let names = names.unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect());
        if names.len() != p {
            return Err(Error::Dimension(format!(
                "{} column names for {p} columns",
                names.len()
            )));
        }
        let (x, column_scales, loadings) = if opts.normalize {
            let (x, scales) = normalize_columns(&x)?;
            (x, scales, Array1::ones(p))
        } else {
            let mut loadings = Array1::zeros(p);
            for (j, col) in x.columns().into_iter().enumerate() {
                let m2 = col.dot(&col) / n as f64;
                if m2 <= 0.0 {
                    return Err(Error::DegenerateColumn(j));
                }
                loadings[j] = m2.sqrt();
            }
            (x, Array1::ones(p), loadings)
        };
        let col_sq_means = x
            .columns()
            .into_iter()
            .map(|c| c.dot(&c) / n as f64)
            .collect();
        Ok(Self {
            x,
            column_scales,
            loadings,
            col_sq_means,
            column_means,
            names,
            normalized: opts.normalize,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.x.column(j)
    }

    pub fn column_scales(&self) -> &Array1<f64> {
        &self.column_scales
    }

    /// Penalty loadings gamma_j (all ones for a normalized design).
    pub fn loadings(&self) -> &Array1<f64> {
        &self.loadings
    }

    /// `E_n(x_j^2)` for every column of the stored matrix.
    pub fn col_sq_means(&self) -> &Array1<f64> {
        &self.col_sq_means
    }

    pub fn column_means(&self) -> Option<&Array1<f64>> {
        self.column_means.as_ref()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Restricts the design to a subset of rows, keeping the column scaling
    /// and loadings of the parent (used by cross-validation).
    pub fn select_rows(&self, rows: &[usize]) -> Design {
        let sub = self.x.select(ndarray::Axis(0), rows);
        let x = column_major(&sub);
        let n = rows.len().max(1) as f64;
        let col_sq_means = x.columns().into_iter().map(|c| c.dot(&c) / n).collect();
        Design {
            x,
            column_scales: self.column_scales.clone(),
            loadings: self.loadings.clone(),
            col_sq_means,
            column_means: self.column_means.clone(),
            names: self.names.clone(),
            normalized: self.normalized,
        }
    }

    /// Pairs of columns that are exactly identical; the penalized problems
    /// have non-unique solutions when any exist.
    pub fn duplicate_columns(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.p() {
            for k in (j + 1)..self.p() {
                if self.x.column(j) == self.x.column(k) {
                    out.push((j, k));
                }
            }
        }
        out
    }

    pub fn predict(&self, beta: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_coef(beta)?;
        Ok(self.x.dot(beta))
    }

    /// Prediction norm `sqrt(delta' E_n(x x') delta)`.
    pub fn prediction_norm(&self, delta: &Array1<f64>) -> Result<f64> {
        let fitted = self.predict(delta)?;
        Ok((fitted.dot(&fitted) / self.n() as f64).sqrt())
    }

    /// Maps normalized-coordinate coefficients back to raw column units.
    pub fn to_raw_coefficients(&self, beta: &Array1<f64>) -> Array1<f64> {
        beta / &self.column_scales
    }

    /// Sum of `gamma_j |beta_j|`.
    pub fn weighted_l1(&self, beta: &Array1<f64>) -> f64 {
        beta.iter()
            .zip(self.loadings.iter())
            .map(|(b, g)| g * b.abs())
            .sum()
    }

    pub(crate) fn check_coef(&self, beta: &Array1<f64>) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::Dimension(format!(
                "coefficient length {} but design has {} columns",
                beta.len(),
                self.p()
            )));
        }
        Ok(())
    }
}

/// A response vector paired with a shared design.
#[derive(Debug, Clone)]
pub struct Dataset {
    design: Arc<Design>,
    y: Array1<f64>,
    y_mean: Option<f64>,
}

impl Dataset {
    /// Pairs `y` with an existing design. The response is centered when the
    /// design was centered.
    pub fn new(design: Arc<Design>, y: Array1<f64>) -> Result<Self> {
        if y.len() != design.n() {
            return Err(Error::Dimension(format!(
                "response length {} but design has {} rows",
                y.len(),
                design.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        let (y, y_mean) = if design.column_means().is_some() {
            let m = y.mean().expect("n >= 1");
            (y.mapv(|v| v - m), Some(m))
        } else {
            (y, None)
        };
        Ok(Self { design, y, y_mean })
    }

    /// Normalizes `raw_x` and pairs it with `y`.
    pub fn from_raw(raw_x: &Array2<f64>, y: Array1<f64>) -> Result<Self> {
        Self::new(Arc::new(Design::new(raw_x)?), y)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn shared_design(&self) -> Arc<Design> {
        Arc::clone(&self.design)
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn y_mean(&self) -> Option<f64> {
        self.y_mean
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    /// Same design, different response.
    pub fn with_response(&self, y: Array1<f64>) -> Result<Self> {
        Self::new(Arc::clone(&self.design), y)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            design: Arc::new(self.design.select_rows(rows)),
            y: self.y.select(ndarray::Axis(0), rows),
            y_mean: self.y_mean,
        }
    }

    pub fn residual(&self, beta: &Array1<f64>) -> Result<Array1<f64>> {
        Ok(&self.y - &self.design.predict(beta)?)
    }

    /// `Q(beta) = n^-1 sum (y_i - x_i' beta)^2`.
    pub fn qhat(&self, beta: &Array1<f64>) -> Result<f64> {
        let r = self.residual(beta)?;
        Ok(r.dot(&r) / self.n() as f64)
    }

    /// `sqrt(Q(beta)) + (lambda/n) sum gamma_j |beta_j|`.
    pub fn sqrt_lasso_objective(&self, beta: &Array1<f64>, lambda: f64) -> Result<f64> {
        ObjectiveKind::SqrtLasso.evaluate(self, beta, lambda)
    }

    /// `Q(beta) + (lambda/n) sum gamma_j |beta_j|`.
    pub fn lasso_objective(&self, beta: &Array1<f64>, lambda: f64) -> Result<f64> {
        ObjectiveKind::Lasso.evaluate(self, beta, lambda)
    }
}

/// Simulation ground truth: `y = X beta0 + sigma * eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub beta0: Array1<f64>,
    pub sigma: f64,
}

impl TrueModel {
    pub fn new(beta0: Array1<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { beta0, sigma })
    }

    /// `beta0 = (1, ..., 1, 0, ..., 0)` with `s` leading ones.
    pub fn leading_ones(p: usize, s: usize, sigma: f64) -> Result<Self> {
        if s > p {
            return Err(Error::InvalidArgument(format!("support size {s} exceeds p = {p}")));
        }
        let beta0 = Array1::from_shape_fn(p, |j| if j < s { 1.0 } else { 0.0 });
        Self::new(beta0, sigma)
    }

    pub fn support(&self) -> Vec<usize> {
        support_of(&self.beta0, 0.0)
    }

    pub fn sparsity(&self) -> usize {
        self.support().len()
    }
}

/// Indices with `|beta_j| > tol`.
pub fn support_of(beta: &Array1<f64>, tol: f64) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > tol)
        .map(|(j, _)| j)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `sqrt(Q) + (lambda/n) |beta|_1`
    SqrtLasso,
    /// `Q + (lambda/n) |beta|_1`
    Lasso,
}

impl ObjectiveKind {
    pub fn evaluate(self, data: &Dataset, beta: &Array1<f64>, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        let q = data.qhat(beta)?;
        Ok(self.combine(q, data.design().weighted_l1(beta), lambda, data.n()))
    }

    pub(crate) fn combine(self, qhat: f64, weighted_l1: f64, lambda: f64, n: usize) -> f64 {
        let loss = match self {
            ObjectiveKind::SqrtLasso => qhat.sqrt(),
            ObjectiveKind::Lasso => qhat,
        };
        loss + lambda / n as f64 * weighted_l1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Coordinate,
    FirstOrder,
}

/// Result of a penalized fit. Coefficients live in normalized-column
/// coordinates; use [`Design::to_raw_coefficients`] for raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFit {
    pub beta: Array1<f64>,
    pub support: Vec<usize>,
    pub lambda: f64,
    pub kind: ObjectiveKind,
    pub solver: SolverKind,
    pub objective: f64,
    pub qhat: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each sweep / outer iteration.
    pub trace: Vec<f64>,
}

impl SparseFit {
    pub(crate) fn assemble(
        data: &Dataset,
        beta: Array1<f64>,
        lambda: f64,
        kind: ObjectiveKind,
        solver: SolverKind,
        iterations: usize,
        converged: bool,
        trace: Vec<f64>,
    ) -> Result<Self> {
        let qhat = data.qhat(&beta)?;
        let objective = kind.combine(qhat, data.design().weighted_l1(&beta), lambda, data.n());
        let support = support_of(&beta, SUPPORT_TOL);
        Ok(Self {
            beta,
            support,
            lambda,
            kind,
            solver,
            objective,
            qhat,
            iterations,
            converged,
            trace,
        })
    }

    /// Coefficients with sub-tolerance entries set to exactly zero.
    pub fn thresholded_beta(&self) -> Array1<f64> {
        self.beta.mapv(|b| if b.abs() > SUPPORT_TOL { b } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn unit_column_is_unchanged() {
        let x = array![[1.0], [-1.0], [1.0], [-1.0]];
        let (xn, s) = normalize_columns(&x).unwrap();
        assert_eq!(xn, x);
        assert_eq!(s[0], 1.0);
    }

    #[test]
    fn constant_two_column_scales_by_two() {
        let x = array![[2.0], [2.0], [2.0]];
        let (xn, s) = normalize_columns(&x).unwrap();
        assert_eq!(s[0], 2.0);
        assert!(xn.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn zero_column_is_rejected() {
        let x = array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        assert_eq!(normalize_columns(&x).unwrap_err(), Error::DegenerateColumn(1));
    }

    #[test]
    fn non_finite_is_rejected() {
        let x = array![[1.0, f64::NAN], [2.0, 1.0]];
        assert!(matches!(normalize_columns(&x), Err(Error::NonFinite { row: 0, col: 1 })));
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = random_matrix(&mut rng, 17, 6);
            let (once, _) = normalize_columns(&x).unwrap();
            let (twice, scales) = normalize_columns(&once).unwrap();
            assert_eq!(once, twice);
            assert!(scales.iter().all(|&s| s == 1.0));
            for col in once.columns() {
                assert!((col.dot(&col) / 17.0 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn qhat_examples() {
        let data = Dataset::new(
            Arc::new(Design::new(&array![[1.0], [1.0]]).unwrap()),
            array![1.0, -1.0],
        )
        .unwrap();
        assert_eq!(data.qhat(&array![1.0]).unwrap(), 2.0);
        assert_eq!(data.qhat(&array![0.0]).unwrap(), 1.0);
        let exact = data.with_response(array![0.5, 0.5]).unwrap();
        assert_eq!(exact.qhat(&array![0.5]).unwrap(), 0.0);
        assert!(data.qhat(&array![1.0, 2.0]).is_err());
    }

    #[test]
    fn prediction_norm_examples() {
        // Gram [[1, .5], [.5, 1]] from four rows.
        let a = (0.75f64).sqrt();
        let x = array![[1.0, 0.5], [1.0, 0.5], [0.0, a], [0.0, a]];
        let x = &x * 2f64.sqrt();
        let design = Design::with_options(&x, DesignOptions { normalize: false, center: false }, None)
            .unwrap();
        let g = design.x().t().dot(design.x()) / 4.0;
        assert!((g[[0, 1]] - 0.5).abs() < 1e-12 && (g[[0, 0]] - 1.0).abs() < 1e-12);
        let v = design.prediction_norm(&array![1.0, 1.0]).unwrap();
        assert!((v - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(design.prediction_norm(&array![0.0, 0.0]).unwrap(), 0.0);
        let normed = Design::new(&x).unwrap();
        assert!((normed.prediction_norm(&array![0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn objective_examples() {
        let data = Dataset::from_raw(&array![[1.0], [1.0]], array![1.0, 1.0]).unwrap();
        assert!((data.sqrt_lasso_objective(&array![0.5], 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(data.sqrt_lasso_objective(&array![0.0], 3.0).unwrap(), 1.0);
        assert_eq!(
            data.sqrt_lasso_objective(&array![0.25], 0.0).unwrap(),
            data.qhat(&array![0.25]).unwrap().sqrt()
        );
        assert!(data.sqrt_lasso_objective(&array![0.0], -1.0).is_err());
    }

    #[test]
    fn duplicates_are_reported() {
        let x = array![[1.0, 1.0, 2.0], [2.0, 2.0, 0.0], [3.0, 3.0, 1.0]];
        let d = Design::new(&x).unwrap();
        assert_eq!(d.duplicate_columns(), vec![(0, 1)]);
    }

    #[test]
    fn unnormalized_design_uses_loadings() {
        let x = array![[2.0, 1.0], [2.0, -1.0]];
        let d = Design::with_options(&x, DesignOptions { normalize: false, center: false }, None)
            .unwrap();
        assert_eq!(d.loadings(), &array![2.0, 1.0]);
        assert_eq!(d.column_scales(), &array![1.0, 1.0]);
    }

    #[test]
    fn centering_removes_means() {
        let x = array![[1.0, 4.0], [3.0, 0.0], [5.0, 2.0]];
        let d = Arc::new(
            Design::with_options(&x, DesignOptions { normalize: true, center: true }, None).unwrap(),
        );
        for c in d.x().columns() {
            assert!(c.sum().abs() < 1e-12);
        }
        let data = Dataset::new(d, array![1.0, 2.0, 6.0]).unwrap();
        assert_eq!(data.y_mean(), Some(3.0));
        assert!(data.y().sum().abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn prediction_norm_bounded_by_spectral_norm(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, p) = (rng.random_range(2..12), rng.random_range(1..8));
            let design = Design::new(&random_matrix(&mut rng, n, p)).unwrap();
            let delta = Array1::from_shape_fn(p, |_| rng.random_range(-3.0..3.0));
            let gram = design.x().t().dot(design.x()) / n as f64;
            let g = nalgebra::DMatrix::from_fn(p, p, |i, j| gram[[i, j]]);
            let top = g.symmetric_eigenvalues().max();
            let lhs = design.prediction_norm(&delta).unwrap();
            prop_assert!(lhs <= top.max(0.0).sqrt() * delta.dot(&delta).sqrt() + 1e-10);
            let neg = design.prediction_norm(&delta.mapv(|v| -2.5 * v)).unwrap();
            prop_assert!((neg - 2.5 * lhs).abs() <= 1e-10 * (1.0 + lhs));
        }

        #[test]
        fn sqrt_lasso_objective_is_convex(seed in 0u64..1000, t in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, p) = (rng.random_range(1..10), rng.random_range(1..6));
            let x = random_matrix(&mut rng, n, p);
            let y = Array1::from_shape_fn(n, |_| rng.random_range(-3.0..3.0));
            let data = match Dataset::from_raw(&x, y) { Ok(d) => d, Err(_) => return Ok(()) };
            let lambda = rng.random_range(0.0..5.0);
            let b1 = Array1::from_shape_fn(p, |_| rng.random_range(-2.0..2.0));
            let b2 = Array1::from_shape_fn(p, |_| rng.random_range(-2.0..2.0));
            let mid = &b1 * t + &b2 * (1.0 - t);
            let f = |b: &Array1<f64>| data.sqrt_lasso_objective(b, lambda).unwrap();
            prop_assert!(f(&mid) <= t * f(&b1) + (1.0 - t) * f(&b2) + 1e-10);
        }

        #[test]
        fn raw_and_normalized_predictions_agree(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, p) = (rng.random_range(1..10), rng.random_range(1..6));
            let raw = random_matrix(&mut rng, n, p) * 7.0;
            let design = match Design::new(&raw) { Ok(d) => d, Err(_) => return Ok(()) };
            let beta = Array1::from_shape_fn(p, |_| rng.random_range(-2.0..2.0));
            let raw_beta = design.to_raw_coefficients(&beta);
            let a = raw.dot(&raw_beta);
            let b = design.predict(&beta).unwrap();
            for (u, v) in a.iter().zip(b.iter()) {
                prop_assert!((u - v).abs() <= 1e-10 * (1.0 + u.abs()));
            }
        }
    }
}
