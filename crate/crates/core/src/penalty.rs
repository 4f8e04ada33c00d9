//! Penalty-level calibration.
//!
//! The penalty is chosen so that `lambda >= c * Lambda` with probability at
//! least `1 - alpha`, where `Lambda = n ||E_n(x xi)||_inf / sqrt(E_n xi^2)`
//! is the maximal self-normalized score. The score does not depend on the
//! noise scale or on the true coefficients, so it can be simulated from the
//! design alone. Nothing in this module accepts either quantity.

use std::fmt;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Design;
use crate::noise::NoiseFamily;
use crate::quantile::normal_quantile_inv;
use crate::rng::substream;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_C: f64 = 1.1;
pub const DEFAULT_DRAWS: usize = 10_000;

/// Redraw cap for the probability-zero all-zero noise vector.
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "option", content = "families", rename_all = "snake_case")]
pub enum PenaltyOption {
    /// Simulated quantile under a known noise law.
    Exact(NoiseFamily),
    /// Largest simulated quantile over a family of laws.
    SemiExact(Vec<NoiseFamily>),
    /// `c sqrt(n) Phi^-1(1 - alpha/2p)`.
    Asymptotic,
}

impl fmt::Display for PenaltyOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyOption::Exact(_) => write!(f, "exact"),
            PenaltyOption::SemiExact(_) => write!(f, "semi-exact"),
            PenaltyOption::Asymptotic => write!(f, "asymptotic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub option: PenaltyOption,
    pub alpha: f64,
    pub c: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self {
            option: PenaltyOption::Exact(NoiseFamily::Normal),
            alpha: DEFAULT_ALPHA,
            c: DEFAULT_C,
            draws: DEFAULT_DRAWS,
            seed: 0,
        }
    }
}

impl PenaltySpec {
    pub fn asymptotic(alpha: f64, c: f64) -> Self {
        Self {
            option: PenaltyOption::Asymptotic,
            alpha,
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha_c(self.alpha, self.c)?;
        if self.draws == 0 && !matches!(self.option, PenaltyOption::Asymptotic) {
            return Err(Error::InvalidArgument("draw count R must be >= 1".into()));
        }
        if let PenaltyOption::SemiExact(f) = &self.option {
            if f.is_empty() {
                return Err(Error::InvalidArgument("semi-exact option needs at least one family".into()));
            }
        }
        Ok(())
    }
}

fn check_alpha_c(alpha: f64, c: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("c must exceed 1, got {c}")));
    }
    Ok(())
}

/// `n max_j |E_n(x_j xi)| / gamma_j / sqrt(E_n xi^2)` for a given noise
/// vector.
pub fn lambda_statistic(design: &Design, xi: &Array1<f64>) -> Result<f64> {
    if xi.len() != design.n() {
        return Err(Error::Dimension(format!(
            "noise length {} but design has {} rows",
            xi.len(),
            design.n()
        )));
    }
    let m2 = xi.dot(xi) / design.n() as f64;
    if !(m2 > 0.0) {
        return Err(Error::InvalidArgument("noise vector is identically zero".into()));
    }
    let corr = design.x().t().dot(xi);
    let max = corr
        .iter()
        .zip(design.loadings().iter())
        .fold(0.0f64, |acc, (v, g)| acc.max(v.abs() / g));
    Ok(max / m2.sqrt())
}

/// One simulated draw of the score statistic with `xi_i ~ F` i.i.d.
pub fn simulate_lambda_statistic<R: rand::Rng + ?Sized>(
    design: &Design,
    family: NoiseFamily,
    rng: &mut R,
) -> f64 {
    for _ in 0..MAX_REDRAWS {
        let xi = family.sample_vec(design.n(), rng);
        match lambda_statistic(design, &xi) {
            Ok(v) => return v,
            Err(_) => log::warn!("all-zero noise draw; redrawing"),
        }
    }
    unreachable!("noise sampler produced {MAX_REDRAWS} all-zero vectors")
}

/// `R` draws of the statistic, draw `r` taken from substream `r` of `seed`,
/// sorted ascending. Identical for any thread count.
pub fn simulated_statistics(design: &Design, family: NoiseFamily, draws: usize, seed: u64) -> Vec<f64> {
    let mut out: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|r| simulate_lambda_statistic(design, family, &mut substream(seed, r)))
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// 1-based rank `ceil((1 - alpha) R)` of the upper order statistic.
pub fn quantile_rank(alpha: f64, draws: usize) -> usize {
    let raw = (1.0 - alpha) * draws as f64;
    // absorb representation error such as 0.95 * 10000 = 9500.000000000002
    let rank = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    rank.clamp(1, draws)
}

/// Empirical `(1 - alpha)`-quantile of the simulated statistic.
pub fn simulated_quantile(design: &Design, family: NoiseFamily, alpha: f64, draws: usize, seed: u64) -> Result<f64> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draw count R must be >= 1".into()));
    }
    let stats = simulated_statistics(design, family, draws, seed);
    Ok(stats[quantile_rank(alpha, draws) - 1])
}

/// `c` times the simulated `(1 - alpha)`-quantile of the score statistic.
pub fn lambda_exact(design: &Design, family: NoiseFamily, alpha: f64, c: f64, draws: usize, seed: u64) -> Result<f64> {
    check_alpha_c(alpha, c)?;
    Ok(c * simulated_quantile(design, family, alpha, draws, seed)?)
}

/// Largest exact-option penalty across `families`; family `k` uses master
/// seed `seed + k`.
pub fn lambda_semi_exact(
    design: &Design,
    families: &[NoiseFamily],
    alpha: f64,
    c: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    Ok(semi_exact_components(design, families, alpha, c, draws, seed)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

fn semi_exact_components(
    design: &Design,
    families: &[NoiseFamily],
    alpha: f64,
    c: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if families.is_empty() {
        return Err(Error::InvalidArgument("semi-exact option needs at least one family".into()));
    }
    families
        .iter()
        .enumerate()
        .map(|(k, &f)| lambda_exact(design, f, alpha, c, draws, seed.wrapping_add(k as u64)))
        .collect()
}

/// Closed-form penalty and its sub-Gaussian upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPenalty {
    /// `c sqrt(n) Phi^-1(1 - alpha/2p)`
    pub lambda: f64,
    /// `sqrt(2 n log(2p/alpha))`, which bounds `lambda / c`.
    pub bound: f64,
}

pub fn lambda_asymptotic(n: usize, p: usize, alpha: f64, c: f64) -> Result<AsymptoticPenalty> {
    check_alpha_c(alpha, c)?;
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!("n and p must be positive, got n={n}, p={p}")));
    }
    let tail = alpha / (2.0 * p as f64);
    if tail >= 0.5 {
        return Err(Error::InvalidArgument(format!("alpha/(2p) = {tail} must be below 0.5")));
    }
    let nf = n as f64;
    Ok(AsymptoticPenalty {
        lambda: c * nf.sqrt() * normal_quantile_inv(1.0 - tail)?,
        bound: (2.0 * nf * (2.0 * p as f64 / alpha).ln()).sqrt(),
    })
}

/// Inflation factor `nu` bounding the Gaussian exact quantile by
/// `nu sqrt(n) Phi^-1(1 - alpha/2p)`. Defined when `p/alpha > 8` and
/// `n > 4 log(2/alpha)`.
pub fn nu_factor(n: usize, p: usize, alpha: f64) -> Option<f64> {
    let (nf, pf) = (n as f64, p as f64);
    if !(pf / alpha > 8.0 && nf > 4.0 * (2.0 / alpha).ln()) {
        return None;
    }
    let num = (1.0 + 2.0 / (2.0 * pf / alpha).ln()).sqrt();
    let den = 1.0 - 2.0 * ((2.0 / alpha).ln() / nf).sqrt();
    (den > 0.0).then(|| num / den)
}

/// Resolved penalty level plus the quantities reported alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub option: String,
    pub lambda: f64,
    pub alpha: f64,
    pub c: f64,
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    /// Exact-option penalty for each family (semi-exact only).
    pub per_family: Vec<(String, f64)>,
    pub asymptotic_lambda: f64,
    pub asymptotic_bound: f64,
    pub nu: Option<f64>,
}

pub fn calibrate(design: &Design, spec: &PenaltySpec) -> Result<Calibration> {
    spec.validate()?;
    let asym = lambda_asymptotic(design.n(), design.p(), spec.alpha, spec.c)?;
    let (lambda, per_family, sim) = match &spec.option {
        PenaltyOption::Asymptotic => (asym.lambda, Vec::new(), false),
        PenaltyOption::Exact(f) => (
            lambda_exact(design, *f, spec.alpha, spec.c, spec.draws, spec.seed)?,
            Vec::new(),
            true,
        ),
        PenaltyOption::SemiExact(fs) => {
            let parts = semi_exact_components(design, fs, spec.alpha, spec.c, spec.draws, spec.seed)?;
            let lambda = parts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let named = fs.iter().map(|f| f.to_string()).zip(parts).collect();
            (lambda, named, true)
        }
    };
    Ok(Calibration {
        option: spec.option.to_string(),
        lambda,
        alpha: spec.alpha,
        c: spec.c,
        draws: sim.then_some(spec.draws),
        seed: sim.then_some(spec.seed),
        per_family,
        asymptotic_lambda: asym.lambda,
        asymptotic_bound: asym.bound,
        nu: nu_factor(design.n(), design.p(), spec.alpha),
    })
}
