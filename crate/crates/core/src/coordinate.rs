//! Coordinate descent with closed-form one-dimensional updates for the
//! square-root lasso and the lasso.

use ndarray::Array1;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ObjectiveKind, SolverKind, SparseFit};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "order", rename_all = "snake_case")]
pub enum CoordinateOrder {
    Cyclic,
    /// Fresh permutation every sweep.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateConfig {
    /// Stop once the largest coefficient change in a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub order: CoordinateOrder,
    /// Recompute the residual from scratch every this many sweeps.
    pub resync_every: usize,
    /// Between full sweeps, cycle over the nonzero coordinates only until
    /// they settle. Convergence is always confirmed by a full sweep.
    pub active_set: bool,
}

impl Default for CoordinateConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 10_000,
            order: CoordinateOrder::Cyclic,
            resync_every: 50,
            active_set: true,
        }
    }
}

impl CoordinateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_sweeps == 0 || self.resync_every == 0 {
            return Err(Error::InvalidArgument("max_sweeps and resync_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Closed-form minimizer over `b` of
/// `sqrt(q - 2 b corr + b^2 s) + (lambda/n) gamma |b|`, where `corr` is
/// `E_n{x_j (y - x' beta_{-j})}`, `q` is `Q(beta_{-j})` and `s` is `E_n x_j^2`.
pub fn sqrt_lasso_rule(corr: f64, q: f64, s: f64, lambda: f64, gamma: f64, n: usize, j: usize) -> Result<f64> {
    sqrt_lasso_rule_with(corr, q, s, (q.max(0.0) - corr * corr / s).max(0.0), lambda, gamma, n, j)
}

/// [`sqrt_lasso_rule`] with `radicand = q - corr^2 / s` supplied by the
/// caller, who may be able to compute it without cancellation.
#[allow(clippy::too_many_arguments)]
fn sqrt_lasso_rule_with(
    corr: f64,
    q: f64,
    s: f64,
    radicand: f64,
    lambda: f64,
    gamma: f64,
    n: usize,
    j: usize,
) -> Result<f64> {
    let nf = n as f64;
    let scaled = lambda * gamma;
    let limit = nf * s.sqrt();
    if !(scaled < limit) {
        return Err(Error::PenaltyTooLarge { coordinate: j, scaled, limit });
    }
    let q = q.max(0.0);
    let threshold = scaled / nf * q.sqrt();
    if corr.abs() <= threshold {
        return Ok(0.0);
    }
    let shrink = scaled / s * radicand.max(0.0).sqrt() / (nf * nf - scaled * scaled / s).sqrt();
    Ok(if corr > 0.0 { corr / s - shrink } else { corr / s + shrink })
}

/// Soft-threshold minimizer over `b` of
/// `q - 2 b corr + b^2 s + (lambda/n) gamma |b|`.
pub fn lasso_rule(corr: f64, s: f64, lambda: f64, gamma: f64, n: usize) -> f64 {
    let grad = 2.0 * corr;
    let threshold = lambda * gamma / n as f64;
    if grad.abs() <= threshold {
        0.0
    } else if grad > 0.0 {
        (grad - threshold) / (2.0 * s)
    } else {
        (grad + threshold) / (2.0 * s)
    }
}

/// Partial-residual statistics for coordinate `j` given `beta_minus_j`.
fn partial_stats(data: &Dataset, beta_minus_j: &Array1<f64>, j: usize) -> Result<(f64, f64, f64)> {
    let design = data.design();
    design.check_coef(beta_minus_j)?;
    if j >= design.p() {
        return Err(Error::Dimension(format!("coordinate {j} out of range for p = {}", design.p())));
    }
    if beta_minus_j[j] != 0.0 {
        return Err(Error::InvalidArgument(format!("beta_minus_j has nonzero entry at {j}")));
    }
    let r = data.residual(beta_minus_j)?;
    let n = data.n() as f64;
    Ok((design.column(j).dot(&r) / n, r.dot(&r) / n, design.col_sq_means()[j]))
}

/// Optimal `beta_j` for the square-root lasso with the other coordinates
/// held at `beta_minus_j` (whose `j`-th entry must be zero).
pub fn coord_update_sqrt_lasso(
    data: &Dataset,
    beta_minus_j: &Array1<f64>,
    j: usize,
    lambda: f64,
    gamma_j: f64,
) -> Result<f64> {
    let (corr, q, s) = partial_stats(data, beta_minus_j, j)?;
    sqrt_lasso_rule(corr, q, s, lambda, gamma_j, data.n(), j)
}

/// Optimal `beta_j` for the lasso objective `Q + (lambda/n) sum gamma |beta|`.
pub fn coord_update_lasso(
    data: &Dataset,
    beta_minus_j: &Array1<f64>,
    j: usize,
    lambda: f64,
    gamma_j: f64,
) -> Result<f64> {
    let (corr, _, s) = partial_stats(data, beta_minus_j, j)?;
    Ok(lasso_rule(corr, s, lambda, gamma_j, data.n()))
}

/// Rejects penalties for which the square-root lasso update has no real
/// closed form at some coordinate.
pub fn check_closed_form_domain(data: &Dataset, lambda: f64) -> Result<()> {
    let design = data.design();
    let nf = data.n() as f64;
    for (j, (g, s)) in design.loadings().iter().zip(design.col_sq_means().iter()).enumerate() {
        let scaled = lambda * g;
        let limit = nf * s.sqrt();
        if !(scaled < limit) {
            return Err(Error::PenaltyTooLarge { coordinate: j, scaled, limit });
        }
    }
    Ok(())
}

/// Relative size of `q - corr^2 / s` below which it is recomputed directly.
const RADICAND_RECOMPUTE: f64 = 1e-6;

/// Cyclic (or randomized) coordinate descent on the chosen objective.
///
/// The residual is maintained incrementally and resynchronized every
/// `resync_every` sweeps. Each coordinate update is an exact minimization,
/// so the objective never increases.
pub fn run_coordinate_descent(
    data: &Dataset,
    lambda: f64,
    kind: ObjectiveKind,
    config: &CoordinateConfig,
    warm_start: Option<&Array1<f64>>,
) -> Result<SparseFit> {
    config.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if kind == ObjectiveKind::SqrtLasso {
        check_closed_form_domain(data, lambda)?;
    }
    let design = data.design();
    let (n, p) = (data.n(), data.p());
    let nf = n as f64;
    let mut beta = match warm_start {
        Some(b) => {
            design.check_coef(b)?;
            b.clone()
        }
        None => Array1::zeros(p),
    };
    let mut resid = data.residual(&beta)?;
    let mut ssr = resid.dot(&resid);
    let mut order: Vec<usize> = (0..p).collect();
    let mut shuffler = match config.order {
        CoordinateOrder::Random { seed } => Some(substream(seed, 0)),
        CoordinateOrder::Cyclic => None,
    };
    let loadings = design.loadings();
    let sq = design.col_sq_means();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    let mut full_pass = true;
    let mut active: Vec<usize> = Vec::new();
    for sweep in 1..=config.max_sweeps {
        sweeps = sweep;
        if sweep % config.resync_every == 0 {
            resid = data.residual(&beta)?;
            ssr = resid.dot(&resid);
        }
        if full_pass || !config.active_set {
            if let Some(rng) = shuffler.as_mut() {
                order.shuffle(rng);
            }
        } else {
            active.clear();
            active.extend(order.iter().copied().filter(|&j| beta[j] != 0.0));
        }
        let pass: &[usize] = if full_pass || !config.active_set { &order } else { &active };
        let mut max_delta = 0.0f64;
        for &j in pass {
            let col = design.column(j);
            let (b, s) = (beta[j], sq[j]);
            let xr = col.dot(&resid);
            let corr = xr / nf + s * b;
            let ssr_minus = (ssr + 2.0 * b * xr + b * b * nf * s).max(0.0);
            let nb = match kind {
                ObjectiveKind::SqrtLasso => {
                    let q = ssr_minus / nf;
                    let mut radicand = q - corr * corr / s;
                    if radicand < RADICAND_RECOMPUTE * q {
                        // near interpolation: take the norm of the projected
                        // residual directly instead of differencing squares
                        let step = corr / s - b;
                        radicand = resid.iter().zip(col.iter()).map(|(r, x)| (r - step * x).powi(2)).sum::<f64>() / nf;
                    }
                    sqrt_lasso_rule_with(corr, q, s, radicand, lambda, loadings[j], n, j)?
                }
                ObjectiveKind::Lasso => lasso_rule(corr, s, lambda, loadings[j], n),
            };
            if nb != b {
                resid.scaled_add(b - nb, &col);
                ssr = resid.dot(&resid);
                beta[j] = nb;
                max_delta = max_delta.max((nb - b).abs());
            }
        }
        let objective = kind.combine(ssr / nf, design.weighted_l1(&beta), lambda, n);
        if !objective.is_finite() {
            return Err(Error::NonFiniteObjective { sweep });
        }
        trace.push(objective);
        let settled = max_delta < config.tol;
        if settled && (full_pass || !config.active_set) {
            converged = true;
            break;
        }
        // after a full sweep that moved, iterate on the active set; once the
        // active set settles, confirm with a full sweep
        full_pass = settled;
    }
    SparseFit::assemble(data, beta, lambda, kind, SolverKind::Coordinate, sweeps, converged, trace)
}
