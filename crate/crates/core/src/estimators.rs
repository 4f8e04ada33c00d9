//! Estimator facade: square-root lasso (full and half penalty), infeasible
//! lasso with known sigma, one- and two-step feasible lasso, cross-validated
//! lasso, post-selection least squares and the oracle.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{kkt_certificate, run_first_order, FirstOrderConfig, KktCertificate};
use crate::coordinate::{check_closed_form_domain, run_coordinate_descent, CoordinateConfig};
use crate::error::{Error, Result};
use crate::model::{Dataset, ObjectiveKind, SolverKind, SparseFit};
use crate::penalty::{calibrate, lambda_asymptotic, Calibration, PenaltySpec};
use crate::rng::substream;

pub const DEFAULT_FOLDS: usize = 5;
pub const CV_GRID_SIZE: usize = 100;
/// Ratio between the largest and smallest penalty in the default cv grid.
pub const CV_GRID_RANGE: f64 = 1e3;
/// A training path stops once `Q` drops below this fraction of `E_n y^2`;
/// smaller penalties on the grid reuse the last fit.
pub const CV_SATURATION: f64 = 1e-3;

/// Solver settings shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SolverSettings {
    pub coordinate: CoordinateConfig,
    pub first_order: FirstOrderConfig,
}

/// Square-root lasso fit at a resolved penalty, with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqrtLassoFit {
    pub fit: SparseFit,
    pub certificate: KktCertificate,
    pub warnings: Vec<String>,
}

/// Square-root lasso at a given `lambda`. The coordinate solver falls back
/// to the first-order solver when its closed-form update is undefined
/// (`lambda gamma_j >= n sqrt(E_n x_j^2)`).
pub fn fit_sqrt_lasso_at(
    data: &Dataset,
    lambda: f64,
    solver: SolverKind,
    settings: &SolverSettings,
) -> Result<SqrtLassoFit> {
    let mut warnings = Vec::new();
    let mut solver = solver;
    if solver == SolverKind::Coordinate {
        if let Err(Error::PenaltyTooLarge { coordinate, scaled, limit }) = check_closed_form_domain(data, lambda) {
            let msg = format!(
                "penalty {scaled} reaches the coordinate-update limit {limit} at column {coordinate}; using the first-order solver"
            );
            warn!("{msg}");
            warnings.push(msg);
            solver = SolverKind::FirstOrder;
        }
    }
    match solver {
        SolverKind::Coordinate => {
            let fit = run_coordinate_descent(data, lambda, ObjectiveKind::SqrtLasso, &settings.coordinate, None)?;
            let certificate = kkt_certificate(data, &fit.beta, lambda)?;
            let fo = &settings.first_order;
            if fit.converged && certificate.relative_gap <= fo.gap_tol && !certificate.degenerate {
                return Ok(SqrtLassoFit { fit, certificate, warnings });
            }
            // Near-interpolating fits can stall coordinate descent, and the
            // residual-based dual says nothing there, so confirm from the
            // conic side.
            let res = run_first_order(data, lambda, fo, Some(&fit.beta))?;
            if res.fit.objective <= fit.objective {
                let msg = format!(
                    "coordinate solution not certified (relative gap {:.3e}); refined with the first-order solver",
                    certificate.relative_gap
                );
                warn!("{msg}");
                warnings.push(msg);
                Ok(SqrtLassoFit {
                    fit: res.fit,
                    certificate: res.certificate,
                    warnings,
                })
            } else {
                Ok(SqrtLassoFit { fit, certificate, warnings })
            }
        }
        SolverKind::FirstOrder => {
            let res = run_first_order(data, lambda, &settings.first_order, None)?;
            Ok(SqrtLassoFit {
                fit: res.fit,
                certificate: res.certificate,
                warnings,
            })
        }
    }
}

/// Calibrates the penalty and fits the square-root lasso.
pub fn fit_sqrt_lasso(
    data: &Dataset,
    spec: &PenaltySpec,
    solver: SolverKind,
    settings: &SolverSettings,
) -> Result<(SqrtLassoFit, Calibration)> {
    let cal = calibrate(data.design(), spec)?;
    let fit = fit_sqrt_lasso_at(data, cal.lambda, solver, settings)?;
    Ok((fit, cal))
}

/// Square-root lasso with the calibrated penalty halved.
pub fn fit_sqrt_lasso_half(
    data: &Dataset,
    spec: &PenaltySpec,
    solver: SolverKind,
    settings: &SolverSettings,
) -> Result<(SqrtLassoFit, Calibration)> {
    let mut cal = calibrate(data.design(), spec)?;
    cal.lambda /= 2.0;
    let fit = fit_sqrt_lasso_at(data, cal.lambda, solver, settings)?;
    Ok((fit, cal))
}

/// Lasso penalty with known noise level: `sigma c 2 sqrt(n) Phi^-1(1 - alpha/2p)`.
pub fn infeasible_lasso_lambda(n: usize, p: usize, sigma: f64, alpha: f64, c: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(2.0 * sigma * lambda_asymptotic(n, p, alpha, c)?.lambda)
}

fn lasso_fit(data: &Dataset, lambda: f64, config: &CoordinateConfig, warm: Option<&Array1<f64>>) -> Result<SparseFit> {
    run_coordinate_descent(data, lambda, ObjectiveKind::Lasso, config, warm)
}

pub fn fit_infeasible_lasso(
    data: &Dataset,
    sigma: f64,
    alpha: f64,
    c: f64,
    settings: &SolverSettings,
) -> Result<SparseFit> {
    let lambda = infeasible_lasso_lambda(data.n(), data.p(), sigma, alpha, c)?;
    lasso_fit(data, lambda, &settings.coordinate, None)
}

/// Lasso with a plug-in noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleLassoFit {
    pub fit: SparseFit,
    pub sigma_hat: f64,
    /// Set when the plug-in noise level was zero and the fit is unpenalized.
    pub unpenalized: bool,
}

/// `sigma_hat = sqrt(E_n (y - ybar)^2)`, an upper bound on the noise level.
pub fn fit_one_step_lasso(data: &Dataset, alpha: f64, c: f64, settings: &SolverSettings) -> Result<FeasibleLassoFit> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidArgument("one-step lasso needs n >= 2".into()));
    }
    let y = data.y();
    let mean = y.mean().expect("n >= 2");
    let sigma_hat = (y.mapv(|v| (v - mean) * (v - mean)).sum() / n as f64).sqrt();
    if !(sigma_hat > 0.0) {
        return Err(Error::DegenerateScale("response is constant, so the one-step noise estimate is zero".into()));
    }
    let fit = fit_infeasible_lasso(data, sigma_hat, alpha, c, settings)?;
    Ok(FeasibleLassoFit {
        fit,
        sigma_hat,
        unpenalized: false,
    })
}

/// Refits the lasso with `sigma_hat = sqrt(Q(beta_one_step))`.
pub fn fit_two_step_lasso(data: &Dataset, alpha: f64, c: f64, settings: &SolverSettings) -> Result<FeasibleLassoFit> {
    let first = fit_one_step_lasso(data, alpha, c, settings)?;
    let sigma_hat = first.fit.qhat.sqrt();
    if sigma_hat > 0.0 {
        let fit = fit_infeasible_lasso(data, sigma_hat, alpha, c, settings)?;
        Ok(FeasibleLassoFit {
            fit,
            sigma_hat,
            unpenalized: false,
        })
    } else {
        warn!("one-step lasso interpolates the data; two-step fit is unpenalized");
        let fit = lasso_fit(data, 0.0, &settings.coordinate, Some(&first.fit.beta))?;
        Ok(FeasibleLassoFit {
            fit,
            sigma_hat: 0.0,
            unpenalized: true,
        })
    }
}

/// Shuffled contiguous blocks: the rows are permuted with the seeded stream
/// and cut into `folds` blocks whose sizes differ by at most one.
pub fn cv_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidArgument(format!("{folds} folds leave some fold empty with n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, 0));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Smallest lasso penalty giving the all-zero fit: `max_j 2 |x_j'y| / gamma_j`.
pub fn lasso_lambda_max(data: &Dataset) -> f64 {
    let corr = data.design().x().t().dot(data.y());
    corr.iter()
        .zip(data.design().loadings().iter())
        .fold(0.0f64, |m, (c, g)| m.max(2.0 * c.abs() / g))
}

/// Default cv grid: `CV_GRID_SIZE` log-spaced values from the lasso
/// `lambda_max` down by a factor `CV_GRID_RANGE`, in decreasing order.
pub fn cv_lambda_grid(data: &Dataset) -> Vec<f64> {
    let top = lasso_lambda_max(data);
    if !(top > 0.0) {
        return vec![0.0];
    }
    let m = CV_GRID_SIZE;
    (0..m)
        .map(|k| top * CV_GRID_RANGE.powf(-(k as f64) / (m - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFit {
    pub fit: SparseFit,
    pub lambda_grid: Vec<f64>,
    /// Mean out-of-fold squared error for each grid value.
    pub cv_error: Vec<f64>,
    pub folds: usize,
}

fn lasso_path(data: &Dataset, grid: &[f64], scale: f64, config: &CoordinateConfig) -> Result<Vec<Array1<f64>>> {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut out = vec![Array1::zeros(data.p()); grid.len()];
    let mut warm: Option<Array1<f64>> = None;
    let q0 = data.y().dot(data.y()) / data.n() as f64;
    let mut saturated = false;
    for k in order {
        if saturated {
            out[k] = warm.clone().expect("set before saturation");
            continue;
        }
        let fit = lasso_fit(data, grid[k] * scale, config, warm.as_ref())?;
        saturated = fit.qhat <= CV_SATURATION * q0;
        warm = Some(fit.beta.clone());
        out[k] = fit.beta;
    }
    Ok(out)
}

/// K-fold cross-validated lasso. Training fits use the penalty rescaled
/// by the training-set share so the per-observation penalty level is the
/// same as in the final full-data fit. Ties go to the larger penalty.
pub fn fit_cv_lasso(
    data: &Dataset,
    folds: usize,
    grid: Option<&[f64]>,
    seed: u64,
    settings: &SolverSettings,
) -> Result<CvFit> {
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => cv_lambda_grid(data),
    };
    if grid.is_empty() {
        return Err(Error::InvalidArgument("cross-validation grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid grid penalty {bad}")));
    }
    let n = data.n();
    let blocks = cv_folds(n, folds, seed)?;
    let per_fold: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|test| {
            let mut in_test = vec![false; n];
            for &i in test {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let train_data = data.select_rows(&train);
            let test_data = data.select_rows(test);
            let path = lasso_path(&train_data, &grid, train.len() as f64 / n as f64, &settings.coordinate)?;
            path.iter()
                .map(|b| {
                    let r = test_data.residual(b)?;
                    Ok(r.dot(&r))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let cv_error: Vec<f64> = (0..grid.len())
        .map(|k| per_fold.iter().map(|f| f[k]).sum::<f64>() / n as f64)
        .collect();
    let mut best = 0;
    for k in 1..grid.len() {
        let better = cv_error[k] < cv_error[best] || (cv_error[k] == cv_error[best] && grid[k] > grid[best]);
        if better {
            best = k;
        }
    }
    let fit = lasso_fit(data, grid[best], &settings.coordinate, None)?;
    Ok(CvFit {
        fit,
        lambda_grid: grid,
        cv_error,
        folds,
    })
}

/// Least-squares refit restricted to a support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostOls {
    pub beta: Array1<f64>,
    pub support: Vec<usize>,
    pub rank: usize,
    /// The support columns were linearly dependent; `beta` is the
    /// minimum-norm solution.
    pub rank_deficient: bool,
}

/// OLS on the columns in `support` (zeros elsewhere), solved through an
/// SVD so rank-deficient supports get the minimum-norm solution.
pub fn post_ols(data: &Dataset, support: &[usize]) -> Result<PostOls> {
    let (n, p) = (data.n(), data.p());
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return Err(Error::Dimension(format!("support index {j} out of range for p = {p}")));
    }
    if support.len() > n {
        return Err(Error::OverdeterminedSupport { support: support.len(), n });
    }
    let mut beta = Array1::zeros(p);
    if support.is_empty() {
        return Ok(PostOls {
            beta,
            support,
            rank: 0,
            rank_deficient: false,
        });
    }
    let k = support.len();
    let x = data.design().x();
    let a = DMatrix::from_fn(n, k, |i, c| x[[i, support[c]]]);
    let b = DVector::from_iterator(n, data.y().iter().copied());
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = n.max(k) as f64 * f64::EPSILON * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let sol = svd.solve(&b, eps).map_err(|e| Error::Factorization(e.to_string()))?;
    for (c, &j) in support.iter().enumerate() {
        beta[j] = sol[c];
    }
    Ok(PostOls {
        beta,
        support,
        rank,
        rank_deficient: rank < k,
    })
}

/// OLS on the true support.
pub fn oracle_fit(data: &Dataset, true_support: &[usize]) -> Result<PostOls> {
    post_ols(data, true_support)
}

/// Which estimator to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    SqrtLasso,
    SqrtLassoHalf,
    InfeasibleLasso { sigma: f64 },
    OneStepLasso,
    TwoStepLasso,
    CvLasso { folds: usize },
    Oracle { support: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub penalty: PenaltySpec,
    /// Refit OLS on the selected support.
    pub post: bool,
    pub solver: SolverKind,
    /// Seed for the cv fold assignment.
    pub seed: u64,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            penalty: PenaltySpec::default(),
            post: false,
            solver: SolverKind::Coordinate,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        match &self.kind {
            EstimatorKind::InfeasibleLasso { sigma } if !(*sigma > 0.0) => {
                Err(Error::InvalidArgument(format!("infeasible lasso needs sigma > 0, got {sigma}")))
            }
            EstimatorKind::CvLasso { folds } if *folds < 2 => {
                Err(Error::InvalidArgument(format!("cv lasso needs at least 2 folds, got {folds}")))
            }
            _ => Ok(()),
        }
    }
}

/// Output of [`fit_estimator`]. Refit coefficients are kept apart from the
/// penalized ones so risk computations cannot mix them up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Estimate {
    Penalized(SparseFit),
    Refit { penalized: SparseFit, refit: PostOls },
    Oracle(PostOls),
}

impl Estimate {
    /// The coefficients the estimator reports: the refit when there is one.
    pub fn coefficients(&self) -> &Array1<f64> {
        match self {
            Estimate::Penalized(f) => &f.beta,
            Estimate::Refit { refit, .. } => &refit.beta,
            Estimate::Oracle(o) => &o.beta,
        }
    }

    pub fn support(&self) -> &[usize] {
        match self {
            Estimate::Penalized(f) => &f.support,
            Estimate::Refit { refit, .. } => &refit.support,
            Estimate::Oracle(o) => &o.support,
        }
    }

    pub fn penalized(&self) -> Option<&SparseFit> {
        match self {
            Estimate::Penalized(f) | Estimate::Refit { penalized: f, .. } => Some(f),
            Estimate::Oracle(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutput {
    pub name: String,
    pub estimate: Estimate,
    pub calibration: Option<Calibration>,
    pub certificate: Option<KktCertificate>,
    pub sigma_hat: Option<f64>,
    pub unpenalized: bool,
    pub warnings: Vec<String>,
}

/// Runs one estimator. `calibration` may carry a precomputed penalty for
/// the square-root lasso kinds (it is pivotal, so it can be shared across
/// responses on the same design).
pub fn fit_estimator(
    data: &Dataset,
    spec: &EstimatorSpec,
    settings: &SolverSettings,
    calibration: Option<&Calibration>,
) -> Result<EstimatorOutput> {
    spec.validate()?;
    let name = Estimator { kind: spec.kind.clone(), post: spec.post }.to_string();
    let (alpha, c) = (spec.penalty.alpha, spec.penalty.c);
    let mut out = EstimatorOutput {
        name,
        estimate: Estimate::Oracle(post_ols(data, &[])?),
        calibration: None,
        certificate: None,
        sigma_hat: None,
        unpenalized: false,
        warnings: Vec::new(),
    };
    let penalized = match &spec.kind {
        EstimatorKind::Oracle { support } => {
            out.estimate = Estimate::Oracle(oracle_fit(data, support)?);
            return Ok(out);
        }
        EstimatorKind::SqrtLasso | EstimatorKind::SqrtLassoHalf => {
            let mut cal = match calibration {
                Some(c) => c.clone(),
                None => calibrate(data.design(), &spec.penalty)?,
            };
            if spec.kind == EstimatorKind::SqrtLassoHalf {
                cal.lambda /= 2.0;
            }
            let fit = fit_sqrt_lasso_at(data, cal.lambda, spec.solver, settings)?;
            out.calibration = Some(cal);
            out.certificate = Some(fit.certificate);
            out.warnings = fit.warnings;
            fit.fit
        }
        EstimatorKind::InfeasibleLasso { sigma } => fit_infeasible_lasso(data, *sigma, alpha, c, settings)?,
        EstimatorKind::OneStepLasso | EstimatorKind::TwoStepLasso => {
            let f = if spec.kind == EstimatorKind::OneStepLasso {
                fit_one_step_lasso(data, alpha, c, settings)?
            } else {
                fit_two_step_lasso(data, alpha, c, settings)?
            };
            out.sigma_hat = Some(f.sigma_hat);
            out.unpenalized = f.unpenalized;
            f.fit
        }
        EstimatorKind::CvLasso { folds } => fit_cv_lasso(data, *folds, None, spec.seed, settings)?.fit,
    };
    out.estimate = if spec.post {
        let refit = post_ols(data, &penalized.support)?;
        Estimate::Refit { penalized, refit }
    } else {
        Estimate::Penalized(penalized)
    };
    Ok(out)
}

/// Estimator names as used on the command line and in reports, e.g.
/// `sqrt-lasso`, `post-sqrt-lasso`, `cv-lasso`, `oracle`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub kind: EstimatorKind,
    pub post: bool,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            EstimatorKind::SqrtLasso => "sqrt-lasso",
            EstimatorKind::SqrtLassoHalf => "sqrt-lasso-half",
            EstimatorKind::InfeasibleLasso { .. } => "infeasible-lasso",
            EstimatorKind::OneStepLasso => "one-step-lasso",
            EstimatorKind::TwoStepLasso => "two-step-lasso",
            EstimatorKind::CvLasso { .. } => "cv-lasso",
            EstimatorKind::Oracle { .. } => "oracle",
        };
        if self.post && !matches!(self.kind, EstimatorKind::Oracle { .. }) {
            write!(f, "post-{base}")
        } else {
            f.write_str(base)
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    /// Parses a name. Parameters that depend on the data (sigma for the
    /// infeasible lasso, the support for the oracle) are left as
    /// placeholders to be filled by the caller.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (post, base) = match s.strip_prefix("post-") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let kind = match base {
            "sqrt-lasso" => EstimatorKind::SqrtLasso,
            "sqrt-lasso-half" => EstimatorKind::SqrtLassoHalf,
            "infeasible-lasso" => EstimatorKind::InfeasibleLasso { sigma: 1.0 },
            "one-step-lasso" => EstimatorKind::OneStepLasso,
            "two-step-lasso" => EstimatorKind::TwoStepLasso,
            "cv-lasso" => EstimatorKind::CvLasso { folds: DEFAULT_FOLDS },
            "oracle" if !post => EstimatorKind::Oracle { support: Vec::new() },
            _ => return Err(Error::InvalidArgument(format!("unknown estimator '{s}'"))),
        };
        Ok(Self { kind, post })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Design, TrueModel};
    use crate::penalty::PenaltyOption;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn gaussian_data(seed: u64, n: usize, p: usize, s: usize, sigma: f64) -> (Dataset, TrueModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let design = Arc::new(Design::new(&x).unwrap());
        let truth = TrueModel::leading_ones(p, s, sigma).unwrap();
        let eps = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let y = design.x().dot(&truth.beta0) + eps * sigma;
        (Dataset::new(design, y).unwrap(), truth)
    }

    fn asym() -> PenaltySpec {
        PenaltySpec::asymptotic(0.05, 1.1)
    }

    #[test]
    fn zero_response_gives_zero_fits() {
        let (data, _) = gaussian_data(1, 30, 10, 2, 1.0);
        let data = data.with_response(Array1::zeros(30)).unwrap();
        let s = SolverSettings::default();
        for solver in [SolverKind::Coordinate, SolverKind::FirstOrder] {
            let (fit, _) = fit_sqrt_lasso(&data, &asym(), solver, &s).unwrap();
            assert!(fit.fit.beta.iter().all(|&b| b == 0.0));
        }
        let lasso = fit_infeasible_lasso(&data, 1.0, 0.05, 1.1, &s).unwrap();
        assert!(lasso.beta.iter().all(|&b| b == 0.0));
        assert!(matches!(fit_one_step_lasso(&data, 0.05, 1.1, &s), Err(Error::DegenerateScale(_))));
    }

    #[test]
    fn tiny_instance_matches_grid_minimizer() {
        let x = array![[1.0, 0.3], [-0.5, 1.2], [2.0, -0.7], [0.1, 0.4], [-1.1, -1.5]];
        let data = Dataset::from_raw(&x, array![1.5, 0.2, 2.4, -0.3, -2.0]).unwrap();
        let lambda = 1.2;
        let (mut best, mut arg) = (f64::INFINITY, (0.0, 0.0));
        let step = 2e-3;
        for i in -1500..=1500 {
            for k in -1500..=1500 {
                let b = array![i as f64 * step, k as f64 * step];
                let v = data.sqrt_lasso_objective(&b, lambda).unwrap();
                if v < best {
                    best = v;
                    arg = (b[0], b[1]);
                }
            }
        }
        // refine around the coarse grid point
        let (c0, c1) = arg;
        let fine = 2e-5;
        for i in -150..=150 {
            for k in -150..=150 {
                let b = array![c0 + i as f64 * fine, c1 + k as f64 * fine];
                let v = data.sqrt_lasso_objective(&b, lambda).unwrap();
                if v < best {
                    best = v;
                    arg = (b[0], b[1]);
                }
            }
        }
        let fit = fit_sqrt_lasso_at(&data, lambda, SolverKind::Coordinate, &SolverSettings::default()).unwrap();
        assert!((fit.fit.beta[0] - arg.0).abs() < 1e-4, "{} vs {arg:?}", fit.fit.beta);
        assert!((fit.fit.beta[1] - arg.1).abs() < 1e-4, "{} vs {arg:?}", fit.fit.beta);
        assert!(fit.fit.objective <= best + 1e-12);
    }

    #[test]
    fn infeasible_lambda_values() {
        let l = infeasible_lasso_lambda(100, 500, 1.0, 0.05, 1.1).unwrap();
        assert!((l - 85.59).abs() < 0.01, "{l}");
        let l2 = infeasible_lasso_lambda(100, 500, 2.0, 0.05, 1.1).unwrap();
        assert!((l2 - 2.0 * l).abs() < 1e-12);
        assert!(infeasible_lasso_lambda(100, 500, 0.0, 0.05, 1.1).is_err());
    }

    #[test]
    fn post_ols_examples() {
        let x = array![[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let data = Dataset::from_raw(&x, array![1.0, 2.0, 3.0]).unwrap();
        let empty = post_ols(&data, &[]).unwrap();
        assert_eq!(empty.beta, array![0.0, 0.0]);
        let both = post_ols(&data, &[0, 1]).unwrap();
        let raw = data.design().to_raw_coefficients(&both.beta);
        assert!(raw[0].abs() < 1e-12 && (raw[1] - 1.0).abs() < 1e-12, "{raw}");
        assert!(!both.rank_deficient);
        // one column only: y onto (1,1,1) gives the mean 2
        let first = post_ols(&data, &[0]).unwrap();
        assert!((data.design().to_raw_coefficients(&first.beta)[0] - 2.0).abs() < 1e-12);
        assert!(matches!(
            post_ols(&Dataset::from_raw(&x.slice(ndarray::s![..1, ..]).to_owned(), array![1.0]).unwrap(), &[0, 1]),
            Err(Error::OverdeterminedSupport { support: 2, n: 1 })
        ));
    }

    #[test]
    fn post_ols_noiseless_recovery_and_rank_deficiency() {
        let (data, truth) = gaussian_data(2, 40, 12, 3, 0.0);
        let o = oracle_fit(&data, &truth.support()).unwrap();
        for (a, b) in o.beta.iter().zip(truth.beta0.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let x = array![[1.0, 1.0, 0.0], [2.0, 2.0, 1.0], [0.5, 0.5, -1.0], [1.0, 1.0, 3.0]];
        let dup = Dataset::from_raw(&x, array![2.0, 4.0, 1.0, 2.0]).unwrap();
        let r = post_ols(&dup, &[0, 1, 2]).unwrap();
        assert!(r.rank_deficient);
        assert_eq!(r.rank, 2);
        // minimum norm splits the weight evenly between the duplicates
        assert!((r.beta[0] - r.beta[1]).abs() < 1e-10);
    }

    #[test]
    fn one_step_penalty_scales_with_sd() {
        let (data, _) = gaussian_data(3, 50, 20, 2, 1.0);
        let y = data.y();
        let m = y.mean().unwrap();
        let sd = (y.mapv(|v| (v - m).powi(2)).sum() / 50.0).sqrt();
        let y2 = y.mapv(|v| 2.0 * (v - m) / sd);
        let d2 = data.with_response(y2).unwrap();
        let s = SolverSettings::default();
        let f = fit_one_step_lasso(&d2, 0.05, 1.1, &s).unwrap();
        assert!((f.sigma_hat - 2.0).abs() < 1e-12);
        let base = infeasible_lasso_lambda(50, 20, 1.0, 0.05, 1.1).unwrap();
        assert!((f.fit.lambda - 2.0 * base).abs() < 1e-9);
    }

    #[test]
    fn one_step_sigma_bounds_noise_and_two_step_is_smaller() {
        let s = SolverSettings::default();
        let mut above = 0;
        let reps = 60;
        for rep in 0..reps {
            let (data, _) = gaussian_data(100 + rep, 100, 200, 5, 1.0);
            let one = fit_one_step_lasso(&data, 0.05, 1.1, &s).unwrap();
            let two = fit_two_step_lasso(&data, 0.05, 1.1, &s).unwrap();
            above += usize::from(one.sigma_hat >= 1.0);
            // the lasso fit never does worse than beta = 0, so the two-step
            // estimate is bounded by the uncentered second moment of y
            let raw_sd = (data.y().dot(data.y()) / 100.0).sqrt();
            assert!(two.sigma_hat <= raw_sd + 1e-12);
        }
        assert!(above as f64 >= 0.99 * reps as f64);
    }

    #[test]
    fn cv_fold_bookkeeping() {
        let folds = cv_folds(7, 7, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        let folds = cv_folds(11, 3, 1).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 3]);
        assert!(cv_folds(3, 4, 1).is_err());
        assert!(cv_folds(3, 1, 1).is_err());
        assert_eq!(cv_folds(20, 5, 9).unwrap(), cv_folds(20, 5, 9).unwrap());
    }

    #[test]
    fn cv_with_single_grid_point_returns_it() {
        let (data, _) = gaussian_data(4, 40, 15, 3, 1.0);
        let cv = fit_cv_lasso(&data, 5, Some(&[12.5]), 3, &SolverSettings::default()).unwrap();
        assert_eq!(cv.fit.lambda, 12.5);
        let grid = cv_lambda_grid(&data);
        assert_eq!(grid.len(), CV_GRID_SIZE);
        assert!((grid[0] / grid[CV_GRID_SIZE - 1] - CV_GRID_RANGE).abs() < 1e-6);
        // lambda_max zeroes the lasso fit
        let top = lasso_fit(&data, grid[0] * (1.0 + 1e-12), &CoordinateConfig::default(), None).unwrap();
        assert!(top.beta.iter().all(|&b| b == 0.0));
        let below = lasso_fit(&data, grid[0] * 0.99, &CoordinateConfig::default(), None).unwrap();
        assert!(below.beta.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn half_penalty_fit_is_optimal_at_its_own_penalty() {
        let (data, _) = gaussian_data(5, 60, 80, 4, 1.0);
        let s = SolverSettings::default();
        let (full, cal) = fit_sqrt_lasso(&data, &asym(), SolverKind::Coordinate, &s).unwrap();
        let (half, cal_half) = fit_sqrt_lasso_half(&data, &asym(), SolverKind::Coordinate, &s).unwrap();
        assert_eq!(cal_half.lambda, cal.lambda / 2.0);
        let at_half = |b: &Array1<f64>| data.sqrt_lasso_objective(b, cal_half.lambda).unwrap();
        assert!(at_half(&half.fit.beta) <= at_half(&full.fit.beta) + 1e-12);
    }

    fn lasso_kkt_residual(data: &Dataset, fit: &SparseFit) -> f64 {
        let n = data.n() as f64;
        let r = data.residual(&fit.beta).unwrap();
        let grad = data.design().x().t().dot(&r) * (2.0 / n);
        let mut worst = 0.0f64;
        for (j, (&g, &b)) in grad.iter().zip(fit.beta.iter()).enumerate() {
            let k = fit.lambda * data.design().loadings()[j] / n;
            let v = if b == 0.0 { (g.abs() - k).max(0.0) } else { (g - k * b.signum()).abs() };
            worst = worst.max(v);
        }
        worst
    }

    #[test]
    fn every_estimator_satisfies_its_optimality_conditions() {
        let (data, truth) = gaussian_data(6, 80, 120, 5, 1.0);
        let s = SolverSettings::default();
        let kinds = [
            EstimatorKind::SqrtLasso,
            EstimatorKind::SqrtLassoHalf,
            EstimatorKind::InfeasibleLasso { sigma: 1.0 },
            EstimatorKind::OneStepLasso,
            EstimatorKind::TwoStepLasso,
            EstimatorKind::CvLasso { folds: 5 },
            EstimatorKind::Oracle { support: truth.support() },
        ];
        for kind in kinds {
            for post in [false, true] {
                let mut spec = EstimatorSpec::new(kind.clone());
                spec.penalty = asym();
                spec.post = post;
                let out = fit_estimator(&data, &spec, &s, None).unwrap();
                if let Some(fit) = out.estimate.penalized() {
                    match fit.kind {
                        ObjectiveKind::SqrtLasso => {
                            let cert = out.certificate.as_ref().unwrap();
                            assert!(cert.relative_gap <= 1e-5, "{} {}", out.name, cert.relative_gap);
                        }
                        ObjectiveKind::Lasso => {
                            assert!(lasso_kkt_residual(&data, fit) <= 1e-6, "{}", out.name);
                        }
                    }
                }
                if let Estimate::Refit { refit, penalized } = &out.estimate {
                    assert_eq!(refit.support, penalized.support);
                }
            }
        }
    }

    #[test]
    fn large_penalty_routes_to_first_order() {
        let (data, _) = gaussian_data(7, 20, 5, 1, 1.0);
        let out = fit_sqrt_lasso_at(&data, 25.0, SolverKind::Coordinate, &SolverSettings::default()).unwrap();
        assert_eq!(out.fit.solver, SolverKind::FirstOrder);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.fit.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn estimator_names_round_trip() {
        for name in [
            "sqrt-lasso",
            "post-sqrt-lasso",
            "sqrt-lasso-half",
            "post-sqrt-lasso-half",
            "infeasible-lasso",
            "post-infeasible-lasso",
            "one-step-lasso",
            "two-step-lasso",
            "cv-lasso",
            "post-cv-lasso",
            "oracle",
        ] {
            let e: Estimator = name.parse().unwrap();
            assert_eq!(e.to_string(), name);
        }
        assert!("post-oracle".parse::<Estimator>().is_err());
        assert!("ridge".parse::<Estimator>().is_err());
        let _ = PenaltyOption::Asymptotic;
    }
}
