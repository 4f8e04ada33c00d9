//! Second-order-cone formulation of the square-root lasso, its dual, a
//! first-order primal-dual solver and the duality certificate.
//!
//! Primal (variables `t, v, beta+, beta-`):
//!
//! ```text
//! min  t/sqrt(n) + (lambda/n) sum gamma_j (beta+_j + beta-_j)
//! s.t. v = y - X beta+ + X beta-,  (v, t) in Q^{n+1},  beta+, beta- >= 0
//! ```
//!
//! Dual:
//!
//! ```text
//! max  n^-1 sum y_i a_i
//! s.t. |sum_i x_ij a_i / n| <= lambda gamma_j / n,  ||a|| <= sqrt(n)
//! ```
//!
//! At an optimum with nonzero residual `v`, `a = sqrt(n) v / ||v||`.

use std::io::Write;

use ndarray::{Array1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Design, ObjectiveKind, SolverKind, SparseFit};

/// Standard-form problem `min c'w : A w = b, w in K` with
/// `K = Q^{n+1} x R^{2p}_+`.
///
/// Variable layout: index 0 is `t`, `1..=n` is `v`, then `p` entries of
/// `beta+` and `p` entries of `beta-`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub objective: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Constraint matrix in (row, column, value) triplet form.
    pub triplets: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    /// Second-order cone; the first listed index is the bound `t`.
    SecondOrder(Vec<usize>),
    NonNegative(Vec<usize>),
}

impl ConicProblem {
    pub fn num_variables(&self) -> usize {
        1 + self.n + 2 * self.p
    }

    pub fn num_constraints(&self) -> usize {
        self.n
    }

    fn plus(&self, j: usize) -> usize {
        1 + self.n + j
    }

    fn minus(&self, j: usize) -> usize {
        1 + self.n + self.p + j
    }

    pub fn cones(&self) -> Vec<Cone> {
        vec![
            Cone::SecondOrder((0..=self.n).collect()),
            Cone::NonNegative((1 + self.n..self.num_variables()).collect()),
        ]
    }

    pub fn objective_value(&self, w: &[f64]) -> f64 {
        self.objective.iter().zip(w).map(|(c, x)| c * x).sum()
    }

    /// Largest absolute violation of `A w = b`.
    pub fn equality_residual(&self, w: &[f64]) -> f64 {
        let mut aw = vec![0.0; self.n];
        for &(r, c, v) in &self.triplets {
            aw[r] += v * w[c];
        }
        aw.iter().zip(&self.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Largest violation of cone membership.
    pub fn cone_violation(&self, w: &[f64]) -> f64 {
        let norm_v = w[1..=self.n].iter().map(|v| v * v).sum::<f64>().sqrt();
        let soc = (norm_v - w[0]).max(0.0);
        let orthant = w[1 + self.n..].iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        soc.max(orthant)
    }

    /// A feasible point with `beta = beta+ - beta-`, `v` the residual and
    /// `t = ||v||`.
    pub fn feasible_point(&self, data: &Dataset, beta: &Array1<f64>) -> Result<Vec<f64>> {
        let r = data.residual(beta)?;
        let mut w = vec![0.0; self.num_variables()];
        w[0] = r.dot(&r).sqrt();
        w[1..=self.n].copy_from_slice(r.as_slice().expect("contiguous"));
        for (j, &b) in beta.iter().enumerate() {
            let (i, k) = (self.plus(j), self.minus(j));
            w[i] = b.max(0.0);
            w[k] = (-b).max(0.0);
        }
        Ok(w)
    }

    pub fn extract_beta(&self, w: &[f64]) -> Array1<f64> {
        Array1::from_shape_fn(self.p, |j| w[self.plus(j)] - w[self.minus(j)])
    }

    /// Plain-text dump (format described in `docs/conic-format.md`).
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "SQRTLASSO-CONIC 1")?;
        writeln!(out, "VARIABLES {}", self.num_variables())?;
        writeln!(out, "CONSTRAINTS {}", self.num_constraints())?;
        writeln!(out, "CONES 2")?;
        let soc: Vec<String> = (0..=self.n).map(|i| i.to_string()).collect();
        writeln!(out, "SOC {} {}", self.n + 1, soc.join(" "))?;
        writeln!(out, "NONNEG {} {} {}", 2 * self.p, 1 + self.n, self.num_variables() - 1)?;
        let nz: Vec<(usize, f64)> = self
            .objective
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, c)| *c != 0.0)
            .collect();
        writeln!(out, "OBJECTIVE {}", nz.len())?;
        for (i, c) in nz {
            writeln!(out, "{i} {c:e}")?;
        }
        writeln!(out, "RHS {}", self.rhs.len())?;
        for (i, b) in self.rhs.iter().enumerate() {
            writeln!(out, "{i} {b:e}")?;
        }
        writeln!(out, "MATRIX {}", self.triplets.len())?;
        for &(r, c, v) in &self.triplets {
            writeln!(out, "{r} {c} {v:e}")?;
        }
        writeln!(out, "END")
    }
}

/// Standard-form data for the conic primal at penalty `lambda`.
pub fn build_conic_primal(data: &Dataset, lambda: f64) -> Result<ConicProblem> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let design = data.design();
    let (n, p) = (data.n(), data.p());
    let mut objective = vec![0.0; 1 + n + 2 * p];
    objective[0] = 1.0 / (n as f64).sqrt();
    for (j, g) in design.loadings().iter().enumerate() {
        let w = lambda * g / n as f64;
        objective[1 + n + j] = w;
        objective[1 + n + p + j] = w;
    }
    let mut triplets = Vec::with_capacity(n * (1 + 2 * p));
    for i in 0..n {
        triplets.push((i, 1 + i, 1.0));
    }
    for j in 0..p {
        for (i, &x) in design.column(j).iter().enumerate() {
            if x != 0.0 {
                triplets.push((i, 1 + n + j, x));
                triplets.push((i, 1 + n + p + j, -x));
            }
        }
    }
    Ok(ConicProblem {
        n,
        p,
        lambda,
        objective,
        rhs: data.y().to_vec(),
        triplets,
    })
}

fn soft_threshold(v: f64, level: f64) -> f64 {
    if v > level {
        v - level
    } else if v < -level {
        v + level
    } else {
        0.0
    }
}

/// Prox step of the smoothed primal given `X'z`:
/// `beta_j = soft(beta_j^k + (X'z)_j / mu, lambda gamma_j / (n mu))`.
pub fn prox_from_correlation(
    design: &Design,
    center: &Array1<f64>,
    xtz: &Array1<f64>,
    lambda: f64,
    mu: f64,
) -> Array1<f64> {
    let level = lambda / (design.n() as f64 * mu);
    let mut out = Array1::zeros(center.len());
    Zip::from(&mut out)
        .and(center)
        .and(xtz)
        .and(design.loadings())
        .for_each(|o, &b, &c, &g| *o = soft_threshold(b + c / mu, level * g));
    out
}

/// Primal soft-threshold step at dual point `z`.
pub fn primal_prox_step(
    design: &Design,
    beta_k: &Array1<f64>,
    dual_z_k: &Array1<f64>,
    lambda: f64,
    mu: f64,
) -> Result<Array1<f64>> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("smoothing parameter mu must be positive, got {mu}")));
    }
    design.check_coef(beta_k)?;
    if dual_z_k.len() != design.n() {
        return Err(Error::Dimension(format!("dual length {} for n = {}", dual_z_k.len(), design.n())));
    }
    let xtz = design.x().t().dot(dual_z_k);
    Ok(prox_from_correlation(design, beta_k, &xtz, lambda, mu))
}

/// Euclidean projection onto the ball `||z|| <= radius`.
pub fn project_ball(w: Array1<f64>, radius: f64) -> Array1<f64> {
    let norm = w.dot(&w).sqrt();
    if norm <= radius {
        w
    } else {
        w * (radius / norm)
    }
}

/// Dual projection step
/// `z = P_{||z|| <= 1/sqrt(n)}(z_k + (t_k/theta_k)(y - X beta_k))`.
pub fn dual_projection_step(
    z_k: &Array1<f64>,
    beta_k: &Array1<f64>,
    data: &Dataset,
    theta_k: f64,
    t_k: f64,
) -> Result<Array1<f64>> {
    if !(theta_k > 0.0) {
        return Err(Error::InvalidArgument(format!("theta must be positive, got {theta_k}")));
    }
    let r = data.residual(beta_k)?;
    Ok(dual_ball_step(z_k, &r, t_k / theta_k, data.n()))
}

fn dual_ball_step(z_k: &Array1<f64>, grad: &Array1<f64>, step: f64, n: usize) -> Array1<f64> {
    let mut w = z_k.clone();
    w.scaled_add(step, grad);
    project_ball(w, 1.0 / (n as f64).sqrt())
}

/// A dual-feasible vector for the conic dual and its residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub a: Array1<f64>,
    /// `max_j (|sum_i x_ij a_i| / n - lambda gamma_j / n)`
    pub max_corr_residual: f64,
    /// `||a|| - sqrt(n)`
    pub norm_residual: f64,
    /// `n^-1 sum y_i a_i`
    pub objective: f64,
}

impl DualSolution {
    /// Evaluates `a` as given, without rescaling.
    pub fn evaluate(data: &Dataset, a: Array1<f64>, lambda: f64) -> Result<Self> {
        if a.len() != data.n() {
            return Err(Error::Dimension(format!("dual length {} for n = {}", a.len(), data.n())));
        }
        let nf = data.n() as f64;
        let corr = data.design().x().t().dot(&a);
        let max_corr_residual = corr
            .iter()
            .zip(data.design().loadings().iter())
            .map(|(c, g)| c.abs() / nf - lambda * g / nf)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            norm_residual: a.dot(&a).sqrt() - nf.sqrt(),
            objective: data.y().dot(&a) / nf,
            max_corr_residual,
            a,
        })
    }

    /// Shrinks `a` toward zero until both dual constraints hold, then
    /// evaluates it. Any rescaled vector is a valid lower bound on the
    /// primal optimum.
    pub fn feasible_from(data: &Dataset, a: Array1<f64>, lambda: f64) -> Result<Self> {
        let nf = data.n() as f64;
        let corr = data.design().x().t().dot(&a);
        let mut scale: f64 = 1.0;
        for (c, g) in corr.iter().zip(data.design().loadings().iter()) {
            let limit = lambda * g;
            if c.abs() > limit {
                scale = scale.min(limit / c.abs());
            }
        }
        let norm = a.dot(&a).sqrt();
        if norm > nf.sqrt() {
            scale = scale.min(nf.sqrt() / norm);
        }
        Self::evaluate(data, a * scale, lambda)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_corr_residual <= tol && self.norm_residual <= tol
    }
}

/// Optimality certificate for a square-root lasso fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Primal minus dual objective; nonnegative up to rounding.
    pub duality_gap: f64,
    /// `duality_gap / (1 + |primal_objective|)`
    pub relative_gap: f64,
    /// `||a - sqrt(n) v / ||v|| ||_inf`; absent when the residual vanishes.
    pub score_relation_residual: Option<f64>,
    /// Dual feasibility residuals of the certified dual vector.
    pub max_corr_residual: f64,
    pub norm_residual: f64,
    /// Per-coordinate stationarity residual of the residual-implied score.
    pub complementarity: Vec<f64>,
    /// Set when `y = X beta`; no score relation exists then.
    pub degenerate: bool,
}

impl KktCertificate {
    pub fn is_optimal(&self, gap_tol: f64, cert_tol: f64) -> bool {
        !self.degenerate
            && self.relative_gap <= gap_tol
            && self.score_relation_residual.is_some_and(|r| r <= cert_tol)
            && self.max_corr_residual <= cert_tol
            && self.norm_residual <= cert_tol
    }
}

/// Residual norms at or below this (relative to `||y||`) count as zero.
const DEGENERATE_RESIDUAL: f64 = 1e-14;

fn normalized_residual(data: &Dataset, beta: &Array1<f64>) -> Result<Option<Array1<f64>>> {
    let r = data.residual(beta)?;
    let norm = r.dot(&r).sqrt();
    let yn = data.y().dot(data.y()).sqrt();
    if norm <= DEGENERATE_RESIDUAL * yn.max(f64::MIN_POSITIVE) || norm == 0.0 {
        return Ok(None);
    }
    Ok(Some(r * ((data.n() as f64).sqrt() / norm)))
}

/// Certificate for `beta` against the given dual vector.
pub fn certificate_with_dual(
    data: &Dataset,
    beta: &Array1<f64>,
    lambda: f64,
    dual: &DualSolution,
) -> Result<KktCertificate> {
    let primal = data.sqrt_lasso_objective(beta, lambda)?;
    let implied = normalized_residual(data, beta)?;
    let nf = data.n() as f64;
    let loadings = data.design().loadings();
    let complementarity = match &implied {
        Some(a) => {
            let corr = data.design().x().t().dot(a) / nf;
            beta.iter()
                .zip(corr.iter())
                .zip(loadings.iter())
                .map(|((&b, &c), &g)| {
                    let k = lambda * g / nf;
                    if b == 0.0 {
                        (c.abs() - k).max(0.0)
                    } else {
                        (c - k * b.signum()).abs()
                    }
                })
                .collect()
        }
        None => vec![0.0; beta.len()],
    };
    let score_relation_residual = implied
        .as_ref()
        .map(|a| (a - &dual.a).iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let gap = primal - dual.objective;
    Ok(KktCertificate {
        primal_objective: primal,
        dual_objective: dual.objective,
        duality_gap: gap,
        relative_gap: gap / (1.0 + primal.abs()),
        score_relation_residual,
        max_corr_residual: dual.max_corr_residual,
        norm_residual: dual.norm_residual,
        complementarity,
        degenerate: implied.is_none(),
    })
}

/// The residual-implied dual vector `sqrt(n) r / ||r||`, shrunk to
/// feasibility; the zero vector when the residual vanishes.
pub fn residual_dual(data: &Dataset, beta: &Array1<f64>, lambda: f64) -> Result<DualSolution> {
    match normalized_residual(data, beta)? {
        Some(a) => DualSolution::feasible_from(data, a, lambda),
        None => DualSolution::evaluate(data, Array1::zeros(data.n()), lambda),
    }
}

/// Duality certificate for a fit produced by any solver, built from the
/// residual-implied dual vector.
pub fn kkt_certificate(data: &Dataset, beta: &Array1<f64>, lambda: f64) -> Result<KktCertificate> {
    let dual = residual_dual(data, beta, lambda)?;
    certificate_with_dual(data, beta, lambda, &dual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderConfig {
    /// Stop when `gap <= gap_tol (1 + |primal|)`.
    pub gap_tol: f64,
    /// Additionally require the score relation residual to be at most this.
    pub cert_tol: f64,
    /// Cap on inner (dual gradient) iterations, summed over restarts.
    pub max_iter: usize,
    /// Initial smoothing; `None` means `0.1 sqrt(n) / ||y||`, which makes the
    /// iterates equivariant under rescaling of `y`.
    pub mu0: Option<f64>,
    /// Factor applied to `mu` at each proximal-center update.
    pub mu_decay: f64,
    pub mu_min: f64,
    /// Inner iterations between gap evaluations.
    pub check_every: usize,
    /// Move the proximal center once the primal iterate moves less than this
    /// fraction of its distance from the center between two checks.
    pub inner_rel_tol: f64,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            cert_tol: 1e-6,
            max_iter: 50_000,
            mu0: None,
            mu_decay: 1.0,
            mu_min: 1e-12,
            check_every: 10,
            inner_rel_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderResult {
    pub fit: SparseFit,
    pub dual: DualSolution,
    pub certificate: KktCertificate,
    /// Dual objective at every gap evaluation, aligned with `fit.trace`.
    pub dual_trace: Vec<f64>,
}

/// Largest singular value of `X` by power iteration on `X'X`.
fn spectral_norm(design: &Design) -> f64 {
    let p = design.p();
    let mut v = Array1::from_shape_fn(p, |j| 1.0 + (j % 7) as f64 * 0.1);
    let mut est = 0.0;
    for _ in 0..200 {
        let nv = v.dot(&v).sqrt();
        if nv == 0.0 {
            break;
        }
        v /= nv;
        let xv = design.x().dot(&v);
        let w = design.x().t().dot(&xv);
        let next = w.dot(&w).sqrt();
        if (next - est).abs() <= 1e-10 * next {
            est = next;
            break;
        }
        est = next;
        v = w;
    }
    est.sqrt()
}

/// Smoothed-conic-dual solver.
///
/// The primal is regularized by `mu/2 ||beta - center||^2`; the resulting
/// smooth concave dual over the ball `||z|| <= 1/sqrt(n)` is maximized by an
/// accelerated projected-gradient scheme (alternating the primal prox and
/// dual projection steps) with gradient-based restarts. The proximal
/// center is moved to the current primal iterate whenever the inner solve
/// has settled, so the iterates converge to the unsmoothed optimum.
pub fn run_first_order(
    data: &Dataset,
    lambda: f64,
    config: &FirstOrderConfig,
    warm_start: Option<&Array1<f64>>,
) -> Result<FirstOrderResult> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if config.max_iter == 0 || config.check_every == 0 {
        return Err(Error::InvalidArgument("max_iter and check_every must be >= 1".into()));
    }
    let design = data.design();
    let (n, p) = (data.n(), data.p());
    let nf = n as f64;
    let y = data.y();
    let ynorm = y.dot(y).sqrt();
    let mut mu = config.mu0.unwrap_or(0.1 * nf.sqrt() / ynorm);
    if !(mu > 0.0) || !mu.is_finite() {
        mu = 1.0;
    }
    let sigma_max = spectral_norm(design).max(f64::MIN_POSITIVE);

    let mut center = match warm_start {
        Some(b) => {
            design.check_coef(b)?;
            b.clone()
        }
        None => Array1::zeros(p),
    };
    let mut x_dual: Array1<f64> = Array1::zeros(n);
    let mut z_bar = x_dual.clone();
    let mut theta = 1.0;
    let mut lipschitz = sigma_max * sigma_max / mu;

    let mut best: Option<(f64, Array1<f64>, DualSolution)> = None;
    let mut primal_trace = Vec::new();
    let mut dual_trace = Vec::new();
    let mut last_check_beta = center.clone();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        // accelerated ascent on the smoothed dual
        let mut y_pt = x_dual.clone() * (1.0 - theta);
        y_pt.scaled_add(theta, &z_bar);
        let beta_y = prox_from_correlation(design, &center, &design.x().t().dot(&y_pt), lambda, mu);
        let grad = y - &design.x().dot(&beta_y);
        z_bar = dual_ball_step(&z_bar, &grad, 1.0 / (theta * lipschitz), n);
        let mut x_next = x_dual.clone() * (1.0 - theta);
        x_next.scaled_add(theta, &z_bar);
        let ascent = grad.dot(&(&x_next - &x_dual));
        x_dual = x_next;
        theta = 2.0 / (1.0 + (1.0 + 4.0 / (theta * theta)).sqrt());
        if ascent < 0.0 {
            theta = 1.0;
            z_bar = x_dual.clone();
        }

        if iterations % config.check_every != 0 && iterations != 1 && iterations != config.max_iter {
            continue;
        }
        let xtz = design.x().t().dot(&x_dual);
        let beta = prox_from_correlation(design, &center, &xtz, lambda, mu);
        let primal = data.sqrt_lasso_objective(&beta, lambda)?;
        if !primal.is_finite() {
            return Err(Error::NonFiniteObjective { sweep: iterations });
        }
        let from_z = DualSolution::feasible_from(data, &x_dual * nf, lambda)?;
        let from_r = residual_dual(data, &beta, lambda)?;
        let dual = if from_r.objective >= from_z.objective { from_r } else { from_z };
        let best_dual = match &best {
            Some((_, _, d)) if d.objective > dual.objective => d.clone(),
            _ => dual,
        };
        primal_trace.push(primal);
        dual_trace.push(best_dual.objective);
        let keep = match &best {
            Some((obj, _, _)) => primal < *obj,
            None => true,
        };
        let (best_primal, best_beta) = if keep {
            (primal, beta.clone())
        } else {
            let (o, b, _) = best.take().expect("present");
            (o, b)
        };
        let gap = best_primal - best_dual.objective;
        let gap_ok = gap <= config.gap_tol * (1.0 + best_primal.abs());
        let cert_ok = gap_ok
            && certificate_with_dual(data, &best_beta, lambda, &best_dual)?
                .score_relation_residual
                .is_none_or(|r| r <= config.cert_tol);
        best = Some((best_primal, best_beta, best_dual));
        if cert_ok {
            converged = true;
            break;
        }
        // move the proximal center once the inner problem has settled
        let step = (&beta - &last_check_beta).mapv(|v| v * v).sum().sqrt();
        let dist = (&beta - &center).mapv(|v| v * v).sum().sqrt();
        last_check_beta = beta.clone();
        if step <= config.inner_rel_tol * dist || dist == 0.0 {
            center = beta;
            mu = (mu * config.mu_decay).max(config.mu_min);
            lipschitz = sigma_max * sigma_max / mu;
            theta = 1.0;
            z_bar = x_dual.clone();
        }
    }

    let (_, beta, dual) = best.expect("at least one gap evaluation");
    let certificate = certificate_with_dual(data, &beta, lambda, &dual)?;
    let fit = SparseFit::assemble(
        data,
        beta,
        lambda,
        ObjectiveKind::SqrtLasso,
        SolverKind::FirstOrder,
        iterations,
        converged,
        primal_trace,
    )?;
    Ok(FirstOrderResult {
        fit,
        dual,
        certificate,
        dual_trace,
    })
}
