//! Seeded Monte Carlo harness: correlated Gaussian designs, sparse linear
//! responses, estimator panels over a noise-level grid, and aggregation
//! relative to the oracle.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{score_statistic, support_metrics};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_estimator, Estimator, EstimatorKind, EstimatorSpec, SolverSettings, CV_GRID_RANGE, CV_GRID_SIZE,
    DEFAULT_FOLDS,
};
use crate::model::{Dataset, Design, SolverKind, TrueModel};
use crate::noise::NoiseFamily;
use crate::penalty::{calibrate, Calibration, PenaltySpec};
use crate::rng::{derive_seed, substream, Stream};

pub const DEFAULT_SIGMA_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 3.0];

const FIXED_DESIGN_TAG: u64 = 0x6669_7865_6400;
const PENALTY_TAG: u64 = 0x7065_6e00;
const CV_TAG: u64 = 0x6376_00;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Correlation {
    /// `Sigma_jk = rho^|j-k|`
    Toeplitz { rho: f64 },
    /// `Sigma_jk = rho` off the diagonal
    Equicorrelated { rho: f64 },
}

impl Correlation {
    pub fn rho(&self) -> f64 {
        match *self {
            Correlation::Toeplitz { rho } | Correlation::Equicorrelated { rho } => rho,
        }
    }

    pub fn matrix(&self, p: usize) -> Array2<f64> {
        Array2::from_shape_fn((p, p), |(j, k)| match *self {
            _ if j == k => 1.0,
            Correlation::Toeplitz { rho } => rho.powi((j as i32 - k as i32).abs()),
            Correlation::Equicorrelated { rho } => rho,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    /// `beta0` has ones in its first `s` entries and zeros elsewhere.
    pub s: usize,
    pub correlation: Correlation,
    pub sigma_grid: Vec<f64>,
    pub noise: NoiseFamily,
    pub reps: usize,
    pub seed: u64,
    /// Draw one design and keep it for every replication.
    pub fix_design: bool,
    /// Penalty for the square-root lasso kinds; its `alpha` and `c` are
    /// also used by the lasso variants.
    pub penalty: PenaltySpec,
    pub solver: SolverKind,
}

impl DesignSpec {
    /// The reference setting: n = 100, p = 500, s = 5, Toeplitz(1/2),
    /// normal noise and the asymptotic penalty with alpha = 0.05, c = 1.1.
    pub fn reference() -> Self {
        Self {
            n: 100,
            p: 500,
            s: 5,
            correlation: Correlation::Toeplitz { rho: 0.5 },
            sigma_grid: DEFAULT_SIGMA_GRID.to_vec(),
            noise: NoiseFamily::Normal,
            reps: 1000,
            seed: 0,
            fix_design: false,
            penalty: PenaltySpec::asymptotic(0.05, 1.1),
            solver: SolverKind::Coordinate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rho = self.correlation.rho();
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("correlation must lie in [0, 1), got {rho}")));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be >= 1".into()));
        }
        if self.n < 2 || self.p == 0 || self.s > self.p {
            return Err(Error::InvalidArgument(format!(
                "need n >= 2, p >= 1 and s <= p; got n={}, p={}, s={}",
                self.n, self.p, self.s
            )));
        }
        if self.sigma_grid.is_empty() || self.sigma_grid.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("sigma grid must be nonempty and nonnegative".into()));
        }
        self.penalty.validate()
    }

    pub fn true_model(&self, sigma: f64) -> Result<TrueModel> {
        TrueModel::leading_ones(self.p, self.s, sigma)
    }
}

/// Draws rows `x_i ~ N(0, Sigma)` through the Cholesky factor of `Sigma`.
#[derive(Debug, Clone)]
pub struct DesignGenerator {
    /// Transpose of the lower Cholesky factor.
    lt: Array2<f64>,
}

impl DesignGenerator {
    pub fn new(sigma: &Array2<f64>) -> Result<Self> {
        let p = sigma.nrows();
        if sigma.ncols() != p || p == 0 {
            return Err(Error::Dimension(format!("covariance must be square, got {:?}", sigma.dim())));
        }
        let m = DMatrix::from_fn(p, p, |i, j| sigma[[i, j]]);
        let chol = Cholesky::new(m).ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?;
        let l = chol.l();
        Ok(Self {
            lt: Array2::from_shape_fn((p, p), |(i, j)| l[(j, i)]),
        })
    }

    pub fn for_correlation(corr: Correlation, p: usize) -> Result<Self> {
        Self::new(&corr.matrix(p))
    }

    /// Lower Cholesky factor.
    pub fn factor(&self) -> Array2<f64> {
        self.lt.t().to_owned()
    }

    /// Raw (unnormalized) `n x p` draw.
    pub fn sample_raw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let p = self.lt.nrows();
        let z = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        z.dot(&self.lt)
    }

    /// Normalized design.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Design> {
        Design::new(&self.sample_raw(n, rng))
    }
}

/// Draws one normalized design for a replication.
pub fn gen_design(spec: &DesignSpec, rng: &mut Stream) -> Result<Design> {
    DesignGenerator::for_correlation(spec.correlation, spec.p)?.sample(spec.n, rng)
}

/// `y = X beta0 + sigma eps`.
pub fn response(design: &Design, truth: &TrueModel, eps: &Array1<f64>) -> Result<Array1<f64>> {
    if eps.len() != design.n() {
        return Err(Error::Dimension(format!("noise length {} for n = {}", eps.len(), design.n())));
    }
    Ok(design.predict(&truth.beta0)? + eps * truth.sigma)
}

/// Draws `eps` from `family` and returns `(y, eps)`.
pub fn gen_response<R: Rng + ?Sized>(
    design: &Design,
    truth: &TrueModel,
    family: NoiseFamily,
    rng: &mut R,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let eps = family.sample_vec(design.n(), rng);
    Ok((response(design, truth, &eps)?, eps))
}

/// One fit in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub rep: usize,
    pub estimator: String,
    pub sigma: f64,
    /// `||beta_hat - beta0||_{2,n}`; absent when the fit failed.
    pub risk: Option<f64>,
    pub missed: Option<usize>,
    pub extra: Option<usize>,
    /// `sqrt(Q(beta_hat)) / sigma`
    pub qhat_ratio: Option<f64>,
    /// Whether `lambda >= c Lambda` held for the replication's noise draw at
    /// the square-root lasso penalty.
    pub event: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub sigma: f64,
    pub fits: usize,
    pub failures: usize,
    pub mean_risk: f64,
    /// Monte Carlo standard error of `mean_risk`.
    pub se_risk: f64,
    /// `mean_risk / mean oracle risk`
    pub relative_risk: Option<f64>,
    pub mean_missed: f64,
    pub mean_extra: f64,
    pub mean_qhat_ratio: f64,
    pub event_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: DesignSpec,
    pub estimators: Vec<String>,
    pub rows: Vec<Row>,
    pub summary: Vec<SummaryRow>,
    /// Settings the method leaves open, recorded for the reader.
    pub implementation_choices: BTreeMap<String, String>,
}

fn rep_seed(spec: &DesignSpec, rep: usize) -> u64 {
    derive_seed(spec.seed, rep as u64)
}

fn fit_row(
    data: &Dataset,
    truth: &TrueModel,
    est: &Estimator,
    spec: &DesignSpec,
    settings: &SolverSettings,
    cal: &Calibration,
    rep: usize,
    event: bool,
) -> Row {
    let mut kind = est.kind.clone();
    match &mut kind {
        EstimatorKind::InfeasibleLasso { sigma } => *sigma = truth.sigma,
        EstimatorKind::Oracle { support } => *support = truth.support(),
        _ => {}
    }
    let espec = EstimatorSpec {
        kind,
        penalty: spec.penalty.clone(),
        post: est.post,
        solver: spec.solver,
        seed: derive_seed(rep_seed(spec, rep), CV_TAG),
    };
    let mut row = Row {
        rep,
        estimator: est.to_string(),
        sigma: truth.sigma,
        risk: None,
        missed: None,
        extra: None,
        qhat_ratio: None,
        event,
        error: None,
    };
    let result = fit_estimator(data, &espec, settings, Some(cal)).and_then(|out| {
        let beta = out.estimate.coefficients();
        let risk = data.design().prediction_norm(&(beta - &truth.beta0))?;
        let qhat = data.qhat(beta)?;
        Ok((risk, qhat, support_metrics(out.estimate.support(), &truth.support())))
    });
    match result {
        Ok((risk, qhat, (missed, extra))) => {
            row.risk = Some(risk);
            row.missed = Some(missed);
            row.extra = Some(extra);
            row.qhat_ratio = (truth.sigma > 0.0).then(|| qhat.sqrt() / truth.sigma);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs the panel over every replication and noise level. The oracle is
/// always included. The result depends only on `spec` and the panel, not
/// on the number of worker threads.
pub fn run_experiment(spec: &DesignSpec, panel: &[Estimator], settings: &SolverSettings) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut panel: Vec<Estimator> = panel.to_vec();
    if !panel.iter().any(|e| matches!(e.kind, EstimatorKind::Oracle { .. })) {
        panel.insert(0, Estimator { kind: EstimatorKind::Oracle { support: Vec::new() }, post: false });
    }
    let names: Vec<String> = panel.iter().map(|e| e.to_string()).collect();
    let generator = DesignGenerator::for_correlation(spec.correlation, spec.p)?;
    let fixed = if spec.fix_design {
        let mut rng = substream(derive_seed(spec.seed, FIXED_DESIGN_TAG), 0);
        let design = Arc::new(generator.sample(spec.n, &mut rng)?);
        let cal = calibrate(&design, &spec.penalty)?;
        Some((design, cal))
    } else {
        None
    };

    let per_rep: Vec<Result<Vec<Row>>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(spec.seed, rep as u64);
            let (design, cal) = match &fixed {
                Some((d, c)) => (Arc::clone(d), c.clone()),
                None => {
                    let d = Arc::new(generator.sample(spec.n, &mut rng)?);
                    let mut pen = spec.penalty.clone();
                    pen.seed = derive_seed(rep_seed(spec, rep), PENALTY_TAG);
                    let c = calibrate(&d, &pen)?;
                    (d, c)
                }
            };
            let eps = spec.noise.sample_vec(spec.n, &mut rng);
            let event = cal.lambda >= spec.penalty.c * score_statistic(&design, &eps)?;
            let mut rows = Vec::with_capacity(spec.sigma_grid.len() * panel.len());
            for &sigma in &spec.sigma_grid {
                let truth = spec.true_model(sigma)?;
                let data = Dataset::new(Arc::clone(&design), response(&design, &truth, &eps)?)?;
                for est in &panel {
                    rows.push(fit_row(&data, &truth, est, spec, settings, &cal, rep, event));
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::with_capacity(spec.reps * spec.sigma_grid.len() * panel.len());
    for r in per_rep {
        rows.extend(r?);
    }
    let summary = summarize(&rows, &names, &spec.sigma_grid);
    let mut choices = BTreeMap::new();
    choices.insert("cv_folds".into(), DEFAULT_FOLDS.to_string());
    choices.insert(
        "cv_grid".into(),
        format!("{CV_GRID_SIZE} log-spaced values from the lasso lambda_max down by {CV_GRID_RANGE}"),
    );
    choices.insert(
        "design".into(),
        if spec.fix_design { "fixed across replications" } else { "fresh per replication" }.into(),
    );
    choices.insert("noise_reuse".into(), "one noise draw per replication, scaled by each sigma".into());
    Ok(ExperimentReport {
        spec: spec.clone(),
        estimators: names,
        rows,
        summary,
        implementation_choices: choices,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn std_error(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

/// Per-(estimator, sigma) aggregates in panel and grid order.
pub fn summarize(rows: &[Row], estimators: &[String], sigma_grid: &[f64]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &sigma in sigma_grid {
        for name in estimators {
            let sel: Vec<&Row> = rows.iter().filter(|r| &r.estimator == name && r.sigma == sigma).collect();
            let ok: Vec<&Row> = sel.iter().copied().filter(|r| r.risk.is_some()).collect();
            let risks: Vec<f64> = ok.iter().filter_map(|r| r.risk).collect();
            let missed: Vec<f64> = ok.iter().filter_map(|r| r.missed.map(|m| m as f64)).collect();
            let extra: Vec<f64> = ok.iter().filter_map(|r| r.extra.map(|m| m as f64)).collect();
            let qr: Vec<f64> = ok.iter().filter_map(|r| r.qhat_ratio).collect();
            let events: Vec<f64> = sel.iter().map(|r| f64::from(u8::from(r.event))).collect();
            out.push(SummaryRow {
                estimator: name.clone(),
                sigma,
                fits: ok.len(),
                failures: sel.len() - ok.len(),
                mean_risk: mean(&risks),
                se_risk: std_error(&risks),
                relative_risk: relative_risk(rows, name, sigma).ok(),
                mean_missed: mean(&missed),
                mean_extra: mean(&extra),
                mean_qhat_ratio: mean(&qr),
                event_frequency: mean(&events),
            });
        }
    }
    out
}

/// Ratio of mean risks, estimator over oracle, at one noise level.
pub fn relative_risk(rows: &[Row], estimator: &str, sigma: f64) -> Result<f64> {
    let mean_of = |name: &str| -> Option<f64> {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.estimator == name && r.sigma == sigma)
            .filter_map(|r| r.risk)
            .collect();
        (!v.is_empty()).then(|| mean(&v))
    };
    let oracle = mean_of("oracle")
        .ok_or_else(|| Error::InvalidArgument(format!("no oracle rows at sigma = {sigma}")))?;
    let est = mean_of(estimator)
        .ok_or_else(|| Error::InvalidArgument(format!("no rows for {estimator} at sigma = {sigma}")))?;
    if !(oracle > 0.0) {
        return Err(Error::DegenerateScale(format!("oracle risk is zero at sigma = {sigma}")));
    }
    Ok(est / oracle)
}

fn opt_display<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format CSV: `rep,estimator,sigma,risk,missed,extra,qhat_ratio,event`.
/// Failed fits leave the metric fields empty.
pub fn write_rows_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rep", "estimator", "sigma", "risk", "missed", "extra", "qhat_ratio", "event", "error"])?;
    for r in rows {
        w.write_record([
            r.rep.to_string(),
            r.estimator.clone(),
            r.sigma.to_string(),
            opt_display(r.risk),
            opt_display(r.missed),
            opt_display(r.extra),
            opt_display(r.qhat_ratio),
            u8::from(r.event).to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
