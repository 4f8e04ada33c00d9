//! Simulation-side checks of the theory: the score statistic, the
//! regularization event, restricted and sparse eigenvalues, and the
//! prediction-error bound report.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Design, TrueModel};
use crate::penalty::lambda_statistic;
use crate::rng::substream;

/// `Lambda = n ||E_n(x eps)||_inf / sqrt(E_n eps^2)` (columns weighted by
/// their loadings). Invariant to positive rescaling of `eps`.
pub fn score_statistic(design: &Design, eps: &Array1<f64>) -> Result<f64> {
    lambda_statistic(design, eps)
}

/// Whether `lambda >= c Lambda` (inclusive).
pub fn regularization_event(design: &Design, eps: &Array1<f64>, lambda: f64, c: f64) -> Result<bool> {
    Ok(lambda >= c * score_statistic(design, eps)?)
}

/// Cone constant `(c + 1)/(c - 1)`.
pub fn cbar(c: f64) -> Result<f64> {
    if !(c > 1.0) {
        return Err(Error::InvalidArgument(format!("c must exceed 1, got {c}")));
    }
    Ok((c + 1.0) / (c - 1.0))
}

/// `E_n(x x')` for a design.
pub fn gram_matrix(design: &Design) -> Array2<f64> {
    design.x().t().dot(design.x()) / design.n() as f64
}

fn check_gram(gram: &Array2<f64>) -> Result<usize> {
    let (p, q) = gram.dim();
    if p != q || p == 0 {
        return Err(Error::Dimension(format!("Gram matrix must be square and nonempty, got {p}x{q}")));
    }
    Ok(p)
}

fn check_support(support: &[usize], p: usize) -> Result<Vec<usize>> {
    let set: BTreeSet<usize> = support.iter().copied().collect();
    if let Some(&j) = set.iter().find(|&&j| j >= p) {
        return Err(Error::Dimension(format!("support index {j} out of range for p = {p}")));
    }
    Ok(set.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReSearchConfig {
    /// Random directions drawn on top of the structured ones.
    pub budget: usize,
    /// Random local perturbations applied to the best direction found.
    pub polish_steps: usize,
    pub seed: u64,
}

impl Default for ReSearchConfig {
    fn default() -> Self {
        Self {
            budget: 100_000,
            polish_steps: 2_000,
            seed: 0,
        }
    }
}

/// Sampled restricted-eigenvalue estimates. Both are minima over the
/// searched directions, hence upper bounds on the true constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedEigenvalues {
    /// `min sqrt(s) ||delta||_{2,n} / ||delta_T||_1`
    pub kappa: f64,
    /// `min ||delta||_{2,n} / ||delta||_2`
    pub kappa_tilde: f64,
    pub cbar: f64,
    pub directions: usize,
}

/// A direction shape: `delta_T = u`, `delta_{T^c} = m w` with
/// `||w||_1 = ||u||_1` and the mass `m` optimized over `[0, cbar]`.
struct Shape {
    u: Vec<f64>,
    w: Vec<f64>,
}

struct Quadratics {
    /// Coefficients of `||delta||_{2,n}^2 = a + 2 b m + c m^2`.
    a: f64,
    b: f64,
    c: f64,
    /// `||u||_2^2`, `||w||_2^2`, `||u||_1`.
    uu: f64,
    ww: f64,
    u1: f64,
}

fn quadratics(gram: &Array2<f64>, t: &[usize], tc: &[usize], shape: &Shape) -> Quadratics {
    let quad = |xi: &[usize], xv: &[f64], yi: &[usize], yv: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (&i, &a) in xi.iter().zip(xv) {
            if a == 0.0 {
                continue;
            }
            for (&j, &b) in yi.iter().zip(yv) {
                acc += a * gram[[i, j]] * b;
            }
        }
        acc
    };
    Quadratics {
        a: quad(t, &shape.u, t, &shape.u),
        b: quad(t, &shape.u, tc, &shape.w),
        c: quad(tc, &shape.w, tc, &shape.w),
        uu: shape.u.iter().map(|v| v * v).sum(),
        ww: shape.w.iter().map(|v| v * v).sum(),
        u1: shape.u.iter().map(|v| v.abs()).sum(),
    }
}

/// Minimum over `m in [0, cbar]` of both ratios for one shape.
fn shape_minima(q: &Quadratics, s: usize, cbar: f64) -> (f64, f64) {
    let pred = |m: f64| (q.a + 2.0 * q.b * m + q.c * m * m).max(0.0);
    // kappa: the l1 mass on T is fixed, so minimize the quadratic
    let mut cands = vec![0.0, cbar];
    if q.c > 0.0 {
        cands.push((-q.b / q.c).clamp(0.0, cbar));
    }
    let kappa = cands
        .iter()
        .map(|&m| (s as f64).sqrt() * pred(m).sqrt() / q.u1)
        .fold(f64::INFINITY, f64::min);
    // kappa tilde: ratio of quadratics; stationary points solve
    // -b e m^2 + (c d - a e) m + b d = 0 with d = ||u||^2, e = ||w||^2
    let (d, e) = (q.uu, q.ww);
    let ratio = |m: f64| pred(m) / (d + e * m * m);
    let qa = -q.b * e;
    let qb = q.c * d - q.a * e;
    let qc = q.b * d;
    let mut cands = vec![0.0, cbar];
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let r = disc.sqrt();
            cands.push(((-qb + r) / (2.0 * qa)).clamp(0.0, cbar));
            cands.push(((-qb - r) / (2.0 * qa)).clamp(0.0, cbar));
        }
    } else if qb.abs() > 1e-300 {
        cands.push((-qc / qb).clamp(0.0, cbar));
    }
    let kt = cands.iter().map(|&m| ratio(m)).fold(f64::INFINITY, f64::min);
    (kappa, kt.sqrt())
}

fn l1_scale(v: &mut [f64], target: f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 > 0.0 {
        v.iter_mut().for_each(|x| *x *= target / l1);
    }
}

fn structured_shapes(gram: &Array2<f64>, t: &[usize], tc: &[usize]) -> Vec<Shape> {
    let s = t.len();
    let mut us: Vec<Vec<f64>> = Vec::new();
    if s <= 12 {
        // constant-magnitude sign patterns, first sign fixed by symmetry
        for mask in 0..(1usize << (s - 1)) {
            us.push((0..s).map(|i| if i > 0 && mask >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 }).collect());
        }
    }
    for i in 0..s {
        let mut e = vec![0.0; s];
        e[i] = 1.0;
        us.push(e);
    }
    let mut out = Vec::new();
    for u in us {
        let u1: f64 = u.iter().map(|x| x.abs()).sum();
        if tc.is_empty() {
            out.push(Shape { u, w: Vec::new() });
            continue;
        }
        // off-support mass aligned against G_{T^c,T} u, plus each vertex
        let mut grad: Vec<f64> = tc
            .iter()
            .map(|&k| -t.iter().zip(&u).map(|(&i, &ui)| gram[[k, i]] * ui).sum::<f64>())
            .collect();
        if grad.iter().all(|&g| g == 0.0) {
            grad[0] = 1.0;
        }
        l1_scale(&mut grad, u1);
        out.push(Shape { u: u.clone(), w: grad.clone() });
        for (k, g) in grad.iter().enumerate() {
            let mut w = vec![0.0; tc.len()];
            w[k] = if *g < 0.0 { -u1 } else { u1 };
            out.push(Shape { u: u.clone(), w });
        }
    }
    out
}

fn random_shape<R: Rng>(rng: &mut R, s: usize, tc: usize) -> Shape {
    let mut u: Vec<f64> = (0..s).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    u.iter_mut().for_each(|v| *v /= norm);
    let u1: f64 = u.iter().map(|v| v.abs()).sum();
    let mut w: Vec<f64> = if tc == 0 {
        Vec::new()
    } else {
        // sparse-ish: a random number of active off-support coordinates
        let k = rng.random_range(1..=tc);
        let idx = sample(rng, tc, k);
        let mut w = vec![0.0; tc];
        for i in idx {
            w[i] = rng.sample(StandardNormal);
        }
        w
    };
    l1_scale(&mut w, u1);
    Shape { u, w }
}

/// Estimates the restricted eigenvalues over the cone
/// `||delta_{T^c}||_1 <= cbar ||delta_T||_1` by searching structured and
/// random directions, then polishing the best one. Intended for small `p`.
pub fn restricted_eigenvalues(
    gram: &Array2<f64>,
    support: &[usize],
    cbar: f64,
    config: &ReSearchConfig,
) -> Result<RestrictedEigenvalues> {
    let p = check_gram(gram)?;
    let t = check_support(support, p)?;
    if t.is_empty() {
        return Err(Error::InvalidArgument("restricted eigenvalues need a nonempty support".into()));
    }
    if !(cbar >= 0.0) {
        return Err(Error::InvalidArgument(format!("cbar must be >= 0, got {cbar}")));
    }
    if config.budget == 0 {
        return Err(Error::InvalidArgument("search budget must be positive".into()));
    }
    let tc: Vec<usize> = (0..p).filter(|j| t.binary_search(j).is_err()).collect();
    let s = t.len();
    let structured = structured_shapes(gram, &t, &tc);
    let eval = |shape: &Shape| shape_minima(&quadratics(gram, &t, &tc, shape), s, cbar);

    let fold = |acc: (f64, f64, usize), v: (f64, f64, usize)| {
        (acc.0.min(v.0), acc.1.min(v.1), if v.0 < acc.0 { v.2 } else { acc.2 })
    };
    let init = (f64::INFINITY, f64::INFINITY, usize::MAX);
    let from_structured = structured
        .iter()
        .enumerate()
        .map(|(i, sh)| {
            let (k, kt) = eval(sh);
            (k, kt, i)
        })
        .fold(init, fold);
    let from_random: Vec<(f64, f64)> = (0..config.budget)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.seed, i as u64);
            eval(&random_shape(&mut rng, s, tc.len()))
        })
        .collect();
    let (mut kappa, mut kappa_tilde) = from_random
        .iter()
        .fold((from_structured.0, from_structured.1), |a, v| (a.0.min(v.0), a.1.min(v.1)));

    if config.polish_steps > 0 {
        // random local search from the best structured direction
        let mut rng = substream(config.seed, u64::MAX);
        let mut best = match structured.into_iter().nth(from_structured.2) {
            Some(sh) => sh,
            None => random_shape(&mut rng, s, tc.len()),
        };
        let mut best_val = eval(&best);
        let mut step = 0.5;
        for _ in 0..config.polish_steps {
            let mut u = best.u.clone();
            let mut w = best.w.clone();
            u.iter_mut().for_each(|v| *v += step * rng.sample::<f64, _>(StandardNormal));
            w.iter_mut().for_each(|v| *v += step * rng.sample::<f64, _>(StandardNormal));
            let u1: f64 = u.iter().map(|v| v.abs()).sum();
            if u1 == 0.0 {
                continue;
            }
            l1_scale(&mut w, u1);
            let cand = Shape { u, w };
            let val = eval(&cand);
            kappa_tilde = kappa_tilde.min(val.1);
            if val.0 < best_val.0 {
                best = cand;
                best_val = val;
            } else {
                step = (step * 0.95).max(1e-4);
            }
        }
        kappa = kappa.min(best_val.0);
    }
    Ok(RestrictedEigenvalues {
        kappa,
        kappa_tilde,
        cbar,
        directions: config.budget,
    })
}

/// Smallest and largest eigenvalue of `E_n(x x')` over deviations with
/// `||delta_{T^c}||_0 <= m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseEigenvalues {
    pub min: f64,
    pub max: f64,
    pub supports_checked: usize,
    /// Every admissible support was examined.
    pub exhaustive: bool,
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Extreme eigenvalues of `E_n(x x')` restricted to `T` plus `m` further
/// columns. Supersets dominate, so only supports of the largest admissible
/// size are examined: all of them when there are at most `max_supports`,
/// otherwise a seeded sample of that many.
pub fn sparse_eigenvalue_check(
    gram: &Array2<f64>,
    support: &[usize],
    m: usize,
    max_supports: usize,
    seed: u64,
) -> Result<SparseEigenvalues> {
    let p = check_gram(gram)?;
    let t = check_support(support, p)?;
    let tc: Vec<usize> = (0..p).filter(|j| t.binary_search(j).is_err()).collect();
    let k = m.min(tc.len());
    if t.is_empty() && k == 0 {
        return Err(Error::InvalidArgument("sparse eigenvalues need m >= 1 or a nonempty support".into()));
    }
    let total = binomial(tc.len(), k);
    let exhaustive = total.is_some_and(|c| c <= max_supports.max(1));
    let picks: Vec<Vec<usize>> = if exhaustive {
        combinations(tc.len(), k)
    } else {
        (0..max_supports.max(1))
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                let mut v = sample(&mut rng, tc.len(), k).into_vec();
                v.sort_unstable();
                v
            })
            .collect()
    };
    let (min, max) = picks
        .par_iter()
        .map(|pick| {
            let cols: Vec<usize> = t.iter().copied().chain(pick.iter().map(|&i| tc[i])).collect();
            let sub = DMatrix::from_fn(cols.len(), cols.len(), |i, j| gram[[cols[i], cols[j]]]);
            let eig = SymmetricEigen::new(sub).eigenvalues;
            (eig.min(), eig.max())
        })
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    Ok(SparseEigenvalues {
        min,
        max,
        supports_checked: picks.len(),
        exhaustive,
    })
}

/// `2 (1 + 1/c) / (kappa (1 - rho^2))`; `None` when `rho >= 1`.
pub fn theorem1_constant(c: f64, kappa: f64, rho: f64) -> Option<f64> {
    (rho < 1.0).then(|| 2.0 * (1.0 + 1.0 / c) / (kappa * (1.0 - rho * rho)))
}

/// Prediction-error bound report for one simulated fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub c: f64,
    pub s: usize,
    pub cbar: f64,
    pub kappa_cbar: f64,
    /// `lambda sqrt(s) / (n kappa)`
    pub rho: f64,
    pub a_n: Option<f64>,
    /// `A_n sigma sqrt(E_n eps^2) lambda sqrt(s) / n`
    pub bound: Option<f64>,
    /// `lambda >= c Lambda`
    pub event_held: bool,
    /// `rho < 1`
    pub growth_ok: bool,
    /// `||beta_hat - beta0||_{2,n}`
    pub observed_prediction_error: f64,
}

impl BoundReport {
    /// Whether the bound's hypotheses hold.
    pub fn applies(&self) -> bool {
        self.event_held && self.growth_ok
    }

    /// Errors when the hypotheses hold but the observed error exceeds the
    /// bound.
    pub fn check(&self) -> Result<()> {
        match self.bound {
            Some(bound) if self.applies() && self.observed_prediction_error > bound => Err(Error::BoundViolated {
                observed: self.observed_prediction_error,
                bound,
            }),
            _ => Ok(()),
        }
    }
}

/// Builds the bound report for `beta_hat` fitted to `y = X beta0 + sigma eps`.
pub fn theorem1_report(
    truth: &TrueModel,
    data: &Dataset,
    beta_hat: &Array1<f64>,
    eps: &Array1<f64>,
    lambda: f64,
    c: f64,
    kappa_cbar: f64,
) -> Result<BoundReport> {
    if !(kappa_cbar > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa_cbar}")));
    }
    let design = data.design();
    let n = data.n() as f64;
    let s = truth.sparsity();
    let rho = lambda * (s as f64).sqrt() / (n * kappa_cbar);
    let a_n = theorem1_constant(c, kappa_cbar, rho);
    let eps_rms = (eps.dot(eps) / n).sqrt();
    let bound = a_n.map(|a| a * truth.sigma * eps_rms * lambda * (s as f64).sqrt() / n);
    let event_held = regularization_event(design, eps, lambda, c)?;
    let observed = design.prediction_norm(&(beta_hat - &truth.beta0))?;
    Ok(BoundReport {
        lambda,
        c,
        s,
        cbar: cbar(c)?,
        kappa_cbar,
        rho,
        a_n,
        bound,
        event_held,
        growth_ok: rho < 1.0,
        observed_prediction_error: observed,
    })
}

/// `(|T \ S|, |S \ T|)`: true regressors missed and extra ones selected.
pub fn support_metrics(fit_support: &[usize], true_support: &[usize]) -> (usize, usize) {
    let fit: BTreeSet<usize> = fit_support.iter().copied().collect();
    let truth: BTreeSet<usize> = true_support.iter().copied().collect();
    (truth.difference(&fit).count(), fit.difference(&truth).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn ones_design(n: usize) -> Design {
        Design::new(&Array2::ones((n, 1))).unwrap()
    }

    #[test]
    fn score_statistic_hand_values() {
        let d = ones_design(2);
        assert_eq!(score_statistic(&d, &array![1.0, -1.0]).unwrap(), 0.0);
        assert!((score_statistic(&d, &array![1.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(score_statistic(&d, &array![0.0, 0.0]).is_err());
    }

    #[test]
    fn event_boundary_is_inclusive() {
        let d = ones_design(2);
        let eps = array![1.0, 1.0];
        assert!(regularization_event(&d, &eps, 1.1 * 2.0, 1.1).unwrap());
        assert!(!regularization_event(&d, &eps, 2.0, 1.1).unwrap());
        assert!(!regularization_event(&d, &array![1.0, 0.5], 0.0, 1.1).unwrap());
    }

    proptest! {
        #[test]
        fn score_statistic_is_scale_invariant(seed in 0u64..500, scale in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((15, 6), |_| rng.sample::<f64, _>(StandardNormal));
            let d = Design::new(&x).unwrap();
            let eps = Array1::from_shape_fn(15, |_| rng.sample::<f64, _>(StandardNormal));
            let a = score_statistic(&d, &eps).unwrap();
            let b = score_statistic(&d, &(&eps * scale)).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }

    #[test]
    fn cbar_arithmetic() {
        assert!((cbar(1.1).unwrap() - 21.0).abs() < 1e-12);
        assert!(cbar(1.0).is_err());
    }

    fn quick() -> ReSearchConfig {
        ReSearchConfig { budget: 2_000, polish_steps: 200, seed: 1 }
    }

    #[test]
    fn identity_gram_has_unit_restricted_eigenvalues() {
        let g = Array2::eye(8);
        for (t, cb) in [(vec![0usize], 1.0), (vec![1, 4], 21.0), (vec![0, 2, 5, 7], 3.0)] {
            let re = restricted_eigenvalues(&g, &t, cb, &quick()).unwrap();
            assert!((re.kappa - 1.0).abs() < 1e-6, "{re:?}");
            assert!((re.kappa_tilde - 1.0).abs() < 1e-6, "{re:?}");
        }
        assert!(restricted_eigenvalues(&g, &[0], 1.0, &ReSearchConfig { budget: 0, ..quick() }).is_err());
    }

    fn toeplitz(p: usize, rho: f64) -> Array2<f64> {
        Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i32 - j as i32).abs()))
    }

    #[test]
    fn enlarging_cbar_never_increases_estimates() {
        let g = toeplitz(10, 0.6);
        let cfg = ReSearchConfig { polish_steps: 0, ..quick() };
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for cb in [0.0, 0.5, 1.0, 3.0, 10.0, 21.0] {
            let re = restricted_eigenvalues(&g, &[0, 1, 2], cb, &cfg).unwrap();
            assert!(re.kappa <= prev.0 + 1e-15 && re.kappa_tilde <= prev.1 + 1e-15);
            prev = (re.kappa, re.kappa_tilde);
        }
        // with cbar = 0 the cone is the T-subspace, where kappa_tilde is the
        // smallest eigenvalue of the T-block
        let zero = restricted_eigenvalues(&g, &[0, 1, 2], 0.0, &cfg).unwrap();
        let block = DMatrix::from_fn(3, 3, |i, j| g[[i, j]]);
        let lmin = SymmetricEigen::new(block).eigenvalues.min();
        assert!(zero.kappa_tilde >= lmin.sqrt() - 1e-12);
        assert!(zero.kappa_tilde <= lmin.sqrt() + 1e-2);
    }

    #[test]
    fn sparse_eigenvalue_examples() {
        let id = sparse_eigenvalue_check(&Array2::eye(5), &[], 2, 1000, 0).unwrap();
        assert!((id.min - 1.0).abs() < 1e-12 && (id.max - 1.0).abs() < 1e-12);
        assert!(id.exhaustive);
        assert_eq!(id.supports_checked, 10);

        let x = array![[1.0, 1.0, 0.0], [2.0, 2.0, 1.0], [0.5, 0.5, -1.0], [1.0, 1.0, 3.0]];
        let d = Design::new(&x).unwrap();
        let dup = sparse_eigenvalue_check(&gram_matrix(&d), &[0], 1, 1000, 0).unwrap();
        assert!(dup.min.abs() < 1e-12);

        // Toeplitz(1/2), p = 4, pairs: the 2x2 blocks have eigenvalues
        // 1 +- rho^|j-k|, so the extremes come from adjacent columns
        let t = sparse_eigenvalue_check(&toeplitz(4, 0.5), &[], 2, 1000, 0).unwrap();
        assert!((t.min - 0.5).abs() < 1e-12 && (t.max - 1.5).abs() < 1e-12);
        assert_eq!(t.supports_checked, 6);
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        for n in 1..7 {
            for k in 0..=n {
                let c = combinations(n, k);
                assert_eq!(Some(c.len()), binomial(n, k));
                let set: BTreeSet<Vec<usize>> = c.into_iter().collect();
                assert_eq!(Some(set.len()), binomial(n, k));
            }
        }
    }

    #[test]
    fn sampled_supports_are_bounded_by_exhaustive() {
        let g = toeplitz(12, 0.7);
        let full = sparse_eigenvalue_check(&g, &[0], 3, 1_000_000, 0).unwrap();
        let sampled = sparse_eigenvalue_check(&g, &[0], 3, 20, 5).unwrap();
        assert!(full.exhaustive && !sampled.exhaustive);
        assert!(sampled.min >= full.min - 1e-12 && sampled.max <= full.max + 1e-12);
    }

    #[test]
    fn theorem1_constant_example() {
        let a = theorem1_constant(1.1, 1.0, 0.5).unwrap();
        assert!((a - 2.0 * (1.0 + 1.0 / 1.1) / 0.75).abs() < 1e-12);
        assert!((a - 5.0909).abs() < 1e-4);
        assert_eq!(theorem1_constant(1.1, 1.0, 1.0), None);
    }

    #[test]
    fn bound_report_flags_growth_failure() {
        let x = Array2::from_shape_fn((4, 2), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + j as f64));
        let d = Arc::new(Design::new(&x).unwrap());
        let truth = TrueModel::leading_ones(2, 1, 1.0).unwrap();
        let eps = array![0.3, -0.2, 0.1, 0.5];
        let y = d.x().dot(&truth.beta0) + &eps;
        let data = Dataset::new(d, y).unwrap();
        let r = theorem1_report(&truth, &data, &Array1::zeros(2), &eps, 10.0, 1.1, 1.0).unwrap();
        assert!(!r.growth_ok && r.bound.is_none());
        assert!(r.check().is_ok());
        assert!(theorem1_report(&truth, &data, &Array1::zeros(2), &eps, 1.0, 1.1, 0.0).is_err());

        let small = theorem1_report(&truth, &data, &Array1::zeros(2), &eps, 1.0, 1.1, 1.0).unwrap();
        assert!(small.growth_ok);
        assert!((small.rho - 0.25).abs() < 1e-12);
    }

    #[test]
    fn support_metric_examples() {
        let t = [0, 1, 2, 3, 4];
        assert_eq!(support_metrics(&t, &t), (0, 0));
        assert_eq!(support_metrics(&[], &t), (5, 0));
        assert_eq!(support_metrics(&[0, 1, 5], &t), (3, 1));
    }
}
