//! The entropy-Hessian quadratic form `B(rho, psi)`, curvature lower bounds,
//! and their estimation.
//!
//! A chain has curvature at least `kappa` exactly when
//! `B(rho, psi) >= kappa * A(rho, psi)` for every interior density and
//! potential. Everything here evaluates, certifies, or probes that
//! inequality:
//!
//! - [`b_functional`] computes `B` (with a second algebraic route
//!   cross-checked in debug builds; the triple sums are the riskiest
//!   transcription in the crate);
//! - [`criterion_bound`] certifies bounds from commutation and rate
//!   invariance of a mapping representation;
//! - [`two_point_kappa`] evaluates the sharp two-point formula;
//! - [`combine_bounds`] and [`lazy_bound`] transport certified bounds through
//!   products and laziness;
//! - [`ricci_estimate`] minimizes `B/A` by multi-start projected gradient —
//!   an unverified upper estimate of the true infimum, never a certificate;
//! - [`sample_min_margin`] is the randomized falsification pass.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::chain::{Builtin, ChainError, Density, MarkovChain};
use crate::mapping::MappingRepresentation;
use crate::mean::{log_mean_d1, log_mean_d11, log_mean_value};
use crate::parallel;
use crate::sample::{gauge_potential, interior_density, stream_rng};
use crate::transport::{action, Potential};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurvatureError {
    #[error("BoundaryDensity: B is defined on strictly positive densities (min {0:e})")]
    BoundaryDensity(f64),
    #[error("OptFail: no restart converged")]
    OptFail,
    #[error("BadRate: rates must lie in (0, 1], got ({0}, {1})")]
    BadRate(f64, f64),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
}

/// How a certified bound was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Criterion,
    TwoPointFormula,
    Tensorisation,
    Laziness,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertifiedBound {
    pub kappa: f64,
    pub provenance: Provenance,
}

/// `B(rho, psi) = 1/2 <Dhat rho . grad psi, grad psi>_pi - <rho_hat . grad psi, grad Delta psi>_pi`
/// in the operator form (the summed-out kernel form). Requires an interior
/// density. In debug builds the mapping-representation route is evaluated as
/// a cross-check.
pub fn b_functional(
    chain: &MarkovChain,
    rho: &Density,
    psi: &Potential,
) -> Result<f64, CurvatureError> {
    let min = rho.min();
    if !(min > 0.0) {
        return Err(CurvatureError::BoundaryDensity(min));
    }
    if rho.len() != chain.n() || psi.len() != chain.n() {
        return Err(CurvatureError::ShapeMismatch(format!(
            "density {} / potential {} on {} states",
            rho.len(),
            psi.len(),
            chain.n()
        )));
    }
    let b = b_operator(chain, rho, psi);
    #[cfg(debug_assertions)]
    {
        let triple = b_triple_sum(chain, rho, psi);
        let rep = MappingRepresentation::transpositions(chain);
        let mapped = b_mapping(chain, &rep, rho, psi);
        let scale = b.abs().max(triple.abs()).max(mapped.abs()).max(1.0);
        debug_assert!(
            (b - triple).abs() <= 1e-9 * scale,
            "operator vs triple-sum form of B disagree: {b} vs {triple}"
        );
        debug_assert!(
            (b - mapped).abs() <= 1e-9 * scale,
            "operator vs mapping form of B disagree: {b} vs {mapped}"
        );
    }
    Ok(b)
}

fn b_operator(chain: &MarkovChain, rho: &Density, psi: &Potential) -> f64 {
    let n = chain.n();
    let r = rho.values();
    let p = psi.values();
    let drho = chain.kernel() * r - r;
    let dpsi = chain.kernel() * p - p;
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    for x in 0..n {
        for y in 0..n {
            let k = chain.k(x, y);
            if k <= 0.0 || x == y {
                continue;
            }
            let w = k * chain.pi()[x];
            let g = p[y] - p[x];
            t1 += 0.5 * g * (dpsi[y] - dpsi[x]) * log_mean_value(r[x], r[y]) * w;
            let hd = log_mean_d1(r[x], r[y]) * drho[x] + log_mean_d1(r[y], r[x]) * drho[y];
            t2 += 0.25 * g * g * hd * w;
        }
    }
    t2 - t1
}

/// Literal triple-sum transcription of the defining formula for `B`,
/// summing over state triples `(x, y, z)`. Kept as the high-fidelity
/// reference; `b_functional` uses the summed-out operator form.
pub fn b_triple_sum(chain: &MarkovChain, rho: &Density, psi: &Potential) -> f64 {
    let n = chain.n();
    let r = rho.values();
    let p = psi.values();
    let k = chain.kernel();
    let mut first = 0.0;
    let mut second = 0.0;
    for x in 0..n {
        for y in 0..n {
            if k[(x, y)] <= 0.0 || x == y {
                continue;
            }
            let w = k[(x, y)] * chain.pi()[x];
            let g = p[x] - p[y];
            let d1 = log_mean_d1(r[x], r[y]);
            let d2 = log_mean_d1(r[y], r[x]);
            let th = log_mean_value(r[x], r[y]);
            for z in 0..n {
                first += 0.25
                    * g
                    * g
                    * (d1 * (r[z] - r[x]) * k[(x, z)] + d2 * (r[z] - r[y]) * k[(y, z)])
                    * w;
                second += 0.5
                    * (k[(x, z)] * (p[z] - p[x]) - k[(y, z)] * (p[z] - p[y]))
                    * (p[x] - p[y])
                    * th
                    * w;
            }
        }
    }
    first - second
}

/// `B` through a mapping representation: sums over states and move pairs.
pub fn b_mapping(
    chain: &MarkovChain,
    rep: &MappingRepresentation,
    rho: &Density,
    psi: &Potential,
) -> f64 {
    let n = chain.n();
    let g = rep.n_moves();
    let r = rho.values();
    let p = psi.values();
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    for x in 0..n {
        let pix = chain.pi()[x];
        for d in 0..g {
            let cd = rep.rate(x, d);
            if cd <= 0.0 {
                continue;
            }
            let dx = rep.apply(d, x);
            let grad_d = p[dx] - p[x];
            let th = log_mean_value(r[x], r[dx]);
            let th1 = if dx == x { 0.5 } else { log_mean_d1(r[x], r[dx]) };
            let th2 = if dx == x { 0.5 } else { log_mean_d1(r[dx], r[x]) };
            let wxd = cd * pix;
            for e in 0..g {
                let edx = rep.apply(e, dx);
                let ex = rep.apply(e, x);
                t1 += 0.5
                    * grad_d
                    * ((p[edx] - p[dx]) * rep.rate(dx, e) - (p[ex] - p[x]) * rep.rate(x, e))
                    * th
                    * wxd;
                t2 += 0.25
                    * grad_d
                    * grad_d
                    * (th1 * (r[ex] - r[x]) * rep.rate(x, e)
                        + th2 * (r[edx] - r[dx]) * rep.rate(dx, e))
                    * wxd;
            }
        }
    }
    t2 - t1
}

/// `B`, `A`, and their analytic gradients in `rho` and `psi`, for the
/// estimator. Verified against central finite differences in the tests.
pub struct BAGradients {
    pub b: f64,
    pub a: f64,
    pub b_rho: DVector<f64>,
    pub b_psi: DVector<f64>,
    pub a_rho: DVector<f64>,
    pub a_psi: DVector<f64>,
}

pub fn b_a_with_gradients(chain: &MarkovChain, rho: &Density, psi: &Potential) -> BAGradients {
    let n = chain.n();
    let r = rho.values();
    let p = psi.values();
    let kernel = chain.kernel();
    let pi = chain.pi();
    let drho = kernel * r - r;
    let dpsi = kernel * p - p;

    let mut a = 0.0;
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    let mut a_rho = DVector::zeros(n);
    let mut a_psi = DVector::zeros(n);
    let mut b_rho = DVector::zeros(n);
    let mut b_psi = DVector::zeros(n);
    // m_rho psi(x) = sum_y theta(x,y) (psi(x) - psi(y)) K(x,y)
    let mut m_psi = DVector::zeros(n);
    let mut m_dpsi = DVector::zeros(n);
    // u(x) = 1/2 sum_y grad^2 d1theta(x,y) K(x,y) pi(x)
    let mut u = DVector::zeros(n);

    for x in 0..n {
        let pix = pi[x];
        let mut a_rho_x = 0.0;
        let mut a_psi_x = 0.0;
        let mut t1_rho_x = 0.0;
        let mut t2_psi_x = 0.0;
        let mut m_psi_x = 0.0;
        let mut m_dpsi_x = 0.0;
        let mut u_x = 0.0;
        for y in 0..n {
            let k = kernel[(x, y)];
            if k <= 0.0 || x == y {
                continue;
            }
            let w = k * pix;
            let g = p[y] - p[x];
            let th = log_mean_value(r[x], r[y]);
            let d1 = log_mean_d1(r[x], r[y]);
            let d2 = log_mean_d1(r[y], r[x]);
            let gd = dpsi[y] - dpsi[x];

            a += 0.5 * g * g * th * w;
            a_rho_x += g * g * d1 * k;
            a_psi_x += -g * th * k;

            t1 += 0.5 * g * gd * th * w;
            t1_rho_x += g * gd * d1 * k;
            let hd = d1 * drho[x] + d2 * drho[y];
            t2 += 0.25 * g * g * hd * w;
            t2_psi_x += -g * hd * k;

            m_psi_x += th * (p[x] - p[y]) * k;
            m_dpsi_x += th * (dpsi[x] - dpsi[y]) * k;
            u_x += 0.5 * g * g * d1 * k;
        }
        a_rho[x] = pix * a_rho_x;
        a_psi[x] = 2.0 * pix * a_psi_x;
        b_rho[x] += pix * t1_rho_x * (-1.0); // -grad_rho T1
        b_psi[x] += pix * t2_psi_x; // grad_psi T2 part
        m_psi[x] = m_psi_x;
        m_dpsi[x] = m_dpsi_x;
        u[x] = pix * u_x;
    }

    // grad_psi T1 = pi .* (M_rho Delta psi + Delta M_rho psi)
    let delta_m_psi = kernel * &m_psi - &m_psi;
    for x in 0..n {
        b_psi[x] -= pi[x] * (m_dpsi[x] + delta_m_psi[x]);
    }

    // grad_rho T2: curvature-of-theta part plus the linear Delta rho part
    for z in 0..n {
        let mut acc = 0.0;
        for y in 0..n {
            let k = kernel[(z, y)];
            if k <= 0.0 || z == y {
                continue;
            }
            let g = p[y] - p[z];
            // d11 at (rho_z, rho_y), weight pi(z)
            let d11 = log_mean_d11(r[z], r[y]);
            acc += 0.5 * g * g * d11 * drho[z] * k * pi[z];
            // d12 at (rho_y, rho_z) from the mirrored term, weight pi(y)
            let d11m = log_mean_d11(r[y], r[z]);
            let d12m = -(r[y] / r[z]) * d11m;
            let gm = p[z] - p[y];
            acc += 0.5 * gm * gm * d12m * drho[y] * kernel[(y, z)] * pi[y];
        }
        // (K^T u)(z) - u(z)
        let mut ktu = 0.0;
        for x in 0..n {
            ktu += kernel[(x, z)] * u[x];
        }
        b_rho[z] += acc + ktu - u[z];
    }

    BAGradients {
        b: t2 - t1,
        a,
        b_rho,
        b_psi,
        a_rho,
        a_psi,
    }
}

/// Certified bound from the commutation criterion. With a representation
/// satisfying (i) pairwise commutation and (ii) rate invariance
/// `c(delta x, eta) = c(x, eta)`, curvature is nonnegative; if every move is
/// additionally (iii) an involution, the bound improves to `2 C` with `C` the
/// smallest positive rate. Returns `None` when (i) or (ii) fails.
pub fn criterion_bound(
    chain: &MarkovChain,
    rep: &MappingRepresentation,
) -> Option<CertifiedBound> {
    let n = chain.n();
    let g = rep.n_moves();
    for d in 0..g {
        for e in 0..g {
            for x in 0..n {
                if rep.apply(d, rep.apply(e, x)) != rep.apply(e, rep.apply(d, x)) {
                    return None;
                }
            }
        }
    }
    for d in 0..g {
        for e in 0..g {
            for x in 0..n {
                if (rep.rate(rep.apply(d, x), e) - rep.rate(x, e)).abs() > 1e-14 {
                    return None;
                }
            }
        }
    }
    let involutive = (0..g).all(|d| (0..n).all(|x| rep.apply(d, rep.apply(d, x)) == x));
    if involutive {
        Some(CertifiedBound {
            kappa: 2.0 * rep.min_positive_rate(),
            provenance: Provenance::Criterion,
        })
    } else {
        Some(CertifiedBound {
            kappa: 0.0,
            provenance: Provenance::Criterion,
        })
    }
}

/// The sharp two-point curvature:
///
/// ```text
/// kappa(p, q) = (p+q)/2 + inf_{-1 < beta < 1} theta(q(1+beta), p(1-beta)) / (1 - beta^2)
/// ```
///
/// by coarse scan plus golden-section refinement (the objective diverges at
/// both endpoints, so the infimum is interior). Always at least
/// `(p+q)/2 + sqrt(pq)` by the logarithmic-geometric mean inequality; the
/// exact minimization is kept because the relaxation is not sharp for
/// `p != q`.
pub fn two_point_kappa(p: f64, q: f64) -> Result<f64, CurvatureError> {
    if !(p > 0.0 && p <= 1.0 && q > 0.0 && q <= 1.0) {
        return Err(CurvatureError::BadRate(p, q));
    }
    let g = |beta: f64| -> f64 {
        log_mean_value(q * (1.0 + beta), p * (1.0 - beta)) / (1.0 - beta * beta)
    };
    // coarse scan
    let scan = 4001;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..scan {
        let beta = -1.0 + 2.0 * (i as f64 + 0.5) / scan as f64;
        let v = g(beta);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let width = 2.0 / scan as f64;
    let mut lo = (-1.0 + 2.0 * (best_i as f64 - 0.5) / scan as f64).max(-1.0 + 1e-12);
    let mut hi = (lo + 3.0 * width).min(1.0 - 1e-12);
    // golden section
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c1 = hi - phi * (hi - lo);
    let mut c2 = lo + phi * (hi - lo);
    let mut f1 = g(c1);
    let mut f2 = g(c2);
    for _ in 0..200 {
        if f1 < f2 {
            hi = c2;
            c2 = c1;
            f2 = f1;
            c1 = hi - phi * (hi - lo);
            f1 = g(c1);
        } else {
            lo = c1;
            c1 = c2;
            f1 = f2;
            c2 = lo + phi * (hi - lo);
            f2 = g(c2);
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok((p + q) / 2.0 + f1.min(f2).min(best))
}

/// Tensorisation: a product with weights `alpha` inherits
/// `min_i alpha_i kappa_i`.
pub fn combine_bounds(parts: &[(f64, f64)]) -> Result<CertifiedBound, ChainError> {
    if parts.is_empty() {
        return Err(ChainError::EmptyProduct);
    }
    let wsum: f64 = parts.iter().map(|&(_, a)| a).sum();
    if (wsum - 1.0).abs() > 1e-12 || parts.iter().any(|&(_, a)| a < 0.0) {
        return Err(ChainError::WeightSum(wsum));
    }
    let kappa = parts
        .iter()
        .map(|&(k, a)| a * k)
        .fold(f64::INFINITY, f64::min);
    Ok(CertifiedBound {
        kappa,
        provenance: Provenance::Tensorisation,
    })
}

/// Laziness: `K_lambda = (1-lambda) I + lambda K` has curvature
/// `lambda * kappa`.
pub fn lazy_bound(kappa: f64, lambda: f64) -> Result<CertifiedBound, ChainError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(ChainError::BadLambda(lambda));
    }
    Ok(CertifiedBound {
        kappa: lambda * kappa,
        provenance: Provenance::Laziness,
    })
}

/// The best certified bound available for a built-in family: the
/// commutation criterion on the natural representation, the two-point
/// formula, or tensorisation of factor bounds, whichever is largest (all
/// are valid lower bounds). The complete graph has no certifier here; its
/// bound is only probed by sampling.
pub fn certify_builtin(b: &Builtin, chain: &MarkovChain) -> Option<CertifiedBound> {
    let mut best: Option<CertifiedBound> = None;
    let mut consider = |cand: Option<CertifiedBound>| {
        if let Some(c) = cand {
            match best {
                Some(b) if b.kappa >= c.kappa => {}
                _ => best = Some(c),
            }
        }
    };
    if let Ok(rep) = MappingRepresentation::natural(b, chain) {
        consider(criterion_bound(chain, &rep));
    }
    match b {
        Builtin::TwoPoint { p, q } => {
            if let Ok(k) = two_point_kappa(*p, *q) {
                consider(Some(CertifiedBound {
                    kappa: k,
                    provenance: Provenance::TwoPointFormula,
                }));
            }
        }
        Builtin::Hypercube(n) => {
            let parts: Vec<(f64, f64)> = (0..*n).map(|_| (2.0, 1.0 / *n as f64)).collect();
            consider(combine_bounds(&parts).ok());
        }
        Builtin::Torus(dims) => {
            let parts: Vec<(f64, f64)> =
                dims.iter().map(|_| (0.0, 1.0 / dims.len() as f64)).collect();
            consider(combine_bounds(&parts).ok());
        }
        _ => {}
    }
    best
}

#[derive(Debug, Clone)]
pub struct RicciConfig {
    pub restarts: usize,
    pub samples: usize,
    /// Interior floor for the optimizer's density iterates.
    pub floor: f64,
    pub seed: u64,
    pub max_iters: usize,
    /// Log-barrier weight keeping iterates off the floor.
    pub barrier: f64,
}

impl Default for RicciConfig {
    fn default() -> Self {
        RicciConfig {
            restarts: 64,
            samples: 100_000,
            floor: 1e-6,
            seed: 42,
            max_iters: 600,
            barrier: 1e-10,
        }
    }
}

/// Result of one multi-start minimization of `B/A`.
#[derive(Debug, Clone, Serialize)]
pub struct RicciEstimate {
    /// Best local minimum of `B/A` found: an UNVERIFIED upper estimate of the
    /// true curvature infimum.
    pub kappa: f64,
    pub restarts: usize,
    pub converged_restarts: usize,
    /// Max minus min over converged restart minima.
    pub spread: f64,
    pub argmin_rho: Vec<f64>,
    pub argmin_psi: Vec<f64>,
    /// Whether the argmin sits on the artificial interior floor, suggesting
    /// the true infimum may live at the boundary.
    pub on_floor: bool,
}

/// Randomized falsification pass over interior `(rho, psi)` pairs.
#[derive(Debug, Clone, Serialize)]
pub struct SamplingStats {
    pub samples: usize,
    pub kappa_tested: f64,
    /// Minimum of `B - kappa A` over the samples.
    pub min_margin: f64,
    pub violations: usize,
    pub worst_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub certified: Option<CertifiedBound>,
    pub estimated: Option<RicciEstimate>,
    pub sampled: Option<SamplingStats>,
}

/// Minimize `B/A` over interior densities and gauge-fixed potentials by
/// multi-start projected gradient with analytic gradients. Restarts run in
/// parallel and are merged deterministically by (value, index).
pub fn ricci_estimate(
    chain: &MarkovChain,
    config: &RicciConfig,
) -> Result<RicciEstimate, CurvatureError> {
    let restarts = config.restarts.max(1);
    let results = parallel::map_indexed(restarts, |i| {
        let mut rng = stream_rng(config.seed, i as u64);
        run_restart(chain, config, &mut rng)
    });
    let mut best: Option<(usize, &RestartOutcome)> = None;
    let mut converged = 0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, r) in results.iter().enumerate() {
        let Some(out) = r else { continue };
        converged += 1;
        lo = lo.min(out.value);
        hi = hi.max(out.value);
        match best {
            Some((_, b)) if b.value <= out.value => {}
            _ => best = Some((i, out)),
        }
    }
    let Some((_, winner)) = best else {
        return Err(CurvatureError::OptFail);
    };
    Ok(RicciEstimate {
        kappa: winner.value,
        restarts,
        converged_restarts: converged,
        spread: if converged > 0 { hi - lo } else { f64::NAN },
        argmin_rho: winner.rho.clone(),
        argmin_psi: winner.psi.clone(),
        on_floor: winner.rho.iter().any(|&v| v <= config.floor * 1.0001),
    })
}

struct RestartOutcome {
    value: f64,
    rho: Vec<f64>,
    psi: Vec<f64>,
}

fn run_restart(
    chain: &MarkovChain,
    config: &RicciConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Option<RestartOutcome> {
    let n = chain.n();
    let mut rho = interior_density(chain, rng, 1.0, config.floor).values().clone();
    let mut psi = gauge_potential(chain, rng).values().clone();

    let objective = |rho: &DVector<f64>, psi: &DVector<f64>| -> (f64, f64) {
        let g = b_a_with_gradients(
            chain,
            &Density::from_raw(rho.clone()),
            &Potential::new(psi.clone()),
        );
        let ratio = g.b / g.a;
        let barrier: f64 = -config.barrier * rho.iter().map(|&v| v.ln()).sum::<f64>();
        (ratio + barrier, ratio)
    };

    // normalize psi so A = 1 initially (scale invariance of the ratio)
    {
        let a0 = action(
            chain,
            &Density::from_raw(rho.clone()),
            &Potential::new(psi.clone()),
        );
        if !(a0 > 1e-300) {
            return None;
        }
        psi /= a0.sqrt();
    }

    let mut step = 0.1;
    let (mut f_cur, mut ratio_cur) = objective(&rho, &psi);
    if !f_cur.is_finite() {
        return None;
    }
    let mut stall = 0;
    for _ in 0..config.max_iters {
        let g = b_a_with_gradients(
            chain,
            &Density::from_raw(rho.clone()),
            &Potential::new(psi.clone()),
        );
        let ratio = g.b / g.a;
        // gradient of B/A plus barrier
        let mut grho = DVector::zeros(n);
        let mut gpsi = DVector::zeros(n);
        for x in 0..n {
            grho[x] = (g.b_rho[x] - ratio * g.a_rho[x]) / g.a - config.barrier / rho[x];
            gpsi[x] = (g.b_psi[x] - ratio * g.a_psi[x]) / g.a;
        }
        let gnorm = (grho.norm_squared() + gpsi.norm_squared()).sqrt();
        if gnorm < 1e-12 {
            break;
        }
        // backtracking projected step
        let mut accepted = false;
        let mut s = step;
        for _ in 0..40 {
            let cand_rho = project_density(chain, &(&rho - &grho * s), config.floor);
            let mut cand_psi = &psi - &gpsi * s;
            let mean = chain.pi().dot(&cand_psi);
            cand_psi.add_scalar_mut(-mean);
            let a = action(
                chain,
                &Density::from_raw(cand_rho.clone()),
                &Potential::new(cand_psi.clone()),
            );
            if a > 1e-300 {
                let cand_psi_n = &cand_psi / a.sqrt();
                let (f_new, ratio_new) = objective(&cand_rho, &cand_psi_n);
                if f_new.is_finite() && f_new < f_cur - 1e-14 * f_cur.abs() {
                    rho = cand_rho;
                    psi = cand_psi_n;
                    if (f_cur - f_new).abs() <= 1e-13 * (1.0 + f_new.abs()) {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    f_cur = f_new;
                    ratio_cur = ratio_new;
                    step = (s * 2.0).min(1.0);
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted || stall >= 3 {
            break;
        }
    }
    Some(RestartOutcome {
        value: ratio_cur,
        rho: rho.iter().cloned().collect(),
        psi: psi.iter().cloned().collect(),
    })
}

/// Euclidean projection onto `{ rho >= floor, sum pi rho = 1 }`: a shift
/// along `pi` with clamping, found by bisection on the mass.
fn project_density(chain: &MarkovChain, v: &DVector<f64>, floor: f64) -> DVector<f64> {
    let n = chain.n();
    let mass = |nu: f64| -> f64 {
        (0..n)
            .map(|x| chain.pi()[x] * (v[x] - nu * chain.pi()[x]).max(floor))
            .sum::<f64>()
    };
    let mut lo = -1.0;
    let mut hi = 1.0;
    while mass(lo) < 1.0 {
        lo *= 2.0;
        if lo < -1e18 {
            break;
        }
    }
    while mass(hi) > 1.0 {
        hi *= 2.0;
        if hi > 1e18 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 * (1.0 + hi.abs()) {
            break;
        }
    }
    let nu = 0.5 * (lo + hi);
    DVector::from_fn(n, |x, _| (v[x] - nu * chain.pi()[x]).max(floor))
}

/// Sample `min(B - kappa A)` over `count` interior pairs. Violations are
/// margins below `-1e-8`.
pub fn sample_min_margin(
    chain: &MarkovChain,
    kappa: f64,
    count: usize,
    seed: u64,
    floor: f64,
) -> SamplingStats {
    let margins = parallel::map_indexed(count, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let rho = interior_density(chain, &mut rng, 1.0, floor);
        let psi = gauge_potential(chain, &mut rng);
        let g = b_a_with_gradients(chain, &rho, &psi);
        g.b - kappa * g.a
    });
    let (worst_index, min_margin) =
        parallel::reduce_min(&margins).unwrap_or((0, f64::INFINITY));
    let violations = margins.iter().filter(|&&m| m < -1e-8).count();
    SamplingStats {
        samples: count,
        kappa_tested: kappa,
        min_margin,
        violations,
        worst_index,
    }
}
