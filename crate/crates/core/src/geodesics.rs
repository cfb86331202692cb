//! Geodesic equations on the interior of the density simplex: the coupled
//! ODE system for `(rho, psi)`, fixed-step Runge-Kutta integration, and a
//! two-point boundary-value solver by damped shooting.
//!
//! Shooting is a validation tool: it cross-checks the convex path solver on
//! interior endpoints, where the metric is Riemannian. The convex solver
//! remains authoritative for distances (the metric degenerates at the
//! boundary, where geodesics can leave the interior).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::chain::{Density, MarkovChain};
use crate::mean::{log_mean_d1, log_mean_value};
use crate::transport::{self, Potential, SolverConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesicError {
    #[error("BoundaryState: density touches the interior floor {floor:e} (min {min:e})")]
    BoundaryState { min: f64, floor: f64 },
    #[error("LeftInterior: trajectory hit the interior floor at t = {t}")]
    LeftInterior { t: f64 },
    #[error("StepRejected: mass drifted to {mass} at t = {t}")]
    StepRejected { mass: f64, t: f64 },
    #[error("NoConvergence: endpoint residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
}

/// A point of the flow: interior density, potential, and time.
#[derive(Debug, Clone)]
pub struct GeodesicState {
    pub rho: Density,
    pub psi: Potential,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct IntegrateConfig {
    /// Fixed RK4 steps per unit time.
    pub steps_per_unit: usize,
    /// Below this the density is treated as having left the interior.
    pub floor: f64,
    /// Allowed drift of the total mass per trajectory.
    pub mass_tol: f64,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        IntegrateConfig {
            steps_per_unit: 1000,
            floor: 1e-10,
            mass_tol: 1e-10,
        }
    }
}

/// Right-hand side of the geodesic system:
///
/// ```text
/// d rho(x)/dt = -sum_y (psi(y) - psi(x)) rho_hat(x,y) K(x,y)
/// d psi(x)/dt = -1/2 sum_y (psi(x) - psi(y))^2 d1 theta(rho(x), rho(y)) K(x,y)
/// ```
pub fn geodesic_rhs(
    chain: &MarkovChain,
    rho: &Density,
    psi: &Potential,
    floor: f64,
) -> Result<(DVector<f64>, DVector<f64>), GeodesicError> {
    let n = chain.n();
    if rho.len() != n || psi.len() != n {
        return Err(GeodesicError::ShapeMismatch(format!(
            "density {} / potential {} on {} states",
            rho.len(),
            psi.len(),
            n
        )));
    }
    let min = rho.min();
    if min <= floor {
        return Err(GeodesicError::BoundaryState { min, floor });
    }
    let r = rho.values();
    let p = psi.values();
    let mut drho = DVector::zeros(n);
    let mut dpsi = DVector::zeros(n);
    for x in 0..n {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for y in 0..n {
            let k = chain.k(x, y);
            if k > 0.0 && x != y {
                let g = p[y] - p[x];
                s1 += g * log_mean_value(r[x], r[y]) * k;
                s2 += g * g * log_mean_d1(r[x], r[y]) * k;
            }
        }
        drho[x] = -s1;
        dpsi[x] = -0.5 * s2;
    }
    Ok((drho, dpsi))
}

/// Fixed-step RK4 integration of the geodesic flow over `[0, t_final]`
/// (negative `t_final` integrates backwards). Returns the trajectory
/// including the initial state. The interior floor triggers failure rather
/// than clamping, which would silently break the constant-speed invariant.
pub fn integrate(
    chain: &MarkovChain,
    initial: &GeodesicState,
    t_final: f64,
    steps: usize,
    config: &IntegrateConfig,
) -> Result<Vec<GeodesicState>, GeodesicError> {
    if steps == 0 {
        return Err(GeodesicError::ShapeMismatch("steps must be >= 1".into()));
    }
    let h = t_final / steps as f64;
    let mut r = initial.rho.values().clone();
    let mut p = initial.psi.values().clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(GeodesicState {
        rho: Density::from_raw(r.clone()),
        psi: Potential::new(p.clone()),
        time: initial.time,
    });
    let rhs = |rv: &DVector<f64>, pv: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>), GeodesicError> {
        geodesic_rhs(
            chain,
            &Density::from_raw(rv.clone()),
            &Potential::new(pv.clone()),
            config.floor,
        )
    };
    for step in 0..steps {
        let t = initial.time + step as f64 * h;
        let (k1r, k1p) = rhs(&r, &p).map_err(|e| relabel(e, t))?;
        let (k2r, k2p) = rhs(&(&r + &k1r * (h / 2.0)), &(&p + &k1p * (h / 2.0)))
            .map_err(|e| relabel(e, t))?;
        let (k3r, k3p) = rhs(&(&r + &k2r * (h / 2.0)), &(&p + &k2p * (h / 2.0)))
            .map_err(|e| relabel(e, t))?;
        let (k4r, k4p) =
            rhs(&(&r + &k3r * h), &(&p + &k3p * h)).map_err(|e| relabel(e, t))?;
        r += (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (h / 6.0);
        p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
        let t_next = initial.time + (step + 1) as f64 * h;
        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= config.floor {
            return Err(GeodesicError::LeftInterior { t: t_next });
        }
        let mass = chain.pi_mass(&r);
        if (mass - 1.0).abs() > config.mass_tol {
            return Err(GeodesicError::StepRejected { mass, t: t_next });
        }
        out.push(GeodesicState {
            rho: Density::from_raw(r.clone()),
            psi: Potential::new(p.clone()),
            time: t_next,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum ShootInit {
    /// Start from `psi = 0`.
    Zero,
    /// Recover the initial potential from the convex path solver.
    Solver(SolverConfig),
    /// User-supplied initial potential.
    Given(Potential),
}

#[derive(Debug, Clone)]
pub struct ShootConfig {
    pub init: ShootInit,
    pub max_iters: usize,
    /// Target on the Euclidean endpoint residual.
    pub tol: f64,
    /// RK4 steps for each endpoint-map evaluation.
    pub steps: usize,
    pub integrate: IntegrateConfig,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            init: ShootInit::Solver(SolverConfig {
                grid: 16,
                ..Default::default()
            }),
            max_iters: 60,
            tol: 1e-8,
            steps: 400,
            integrate: IntegrateConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShootResult {
    pub trajectory: Vec<GeodesicState>,
    pub initial_potential: Potential,
    pub endpoint_error: f64,
    /// Action of the shot geodesic (constant along the flow).
    pub action: f64,
}

/// Two-point boundary-value solve on interior endpoints: find `psi_0` such
/// that the geodesic launched at `(rho_0, psi_0)` reaches `rho_1` at time 1.
/// Damped Gauss-Newton on the endpoint map, with the additive gauge removed
/// by pinning the last coordinate of `psi_0`.
///
/// There is no a-priori convergence radius; distant or near-boundary
/// endpoints return [`GeodesicError::NoConvergence`], and callers fall back
/// to the convex path solver.
pub fn shoot(
    chain: &MarkovChain,
    rho0: &Density,
    rho1: &Density,
    config: &ShootConfig,
) -> Result<ShootResult, GeodesicError> {
    let n = chain.n();
    if !rho0.is_interior() || !rho1.is_interior() {
        return Err(GeodesicError::BoundaryState {
            min: rho0.min().min(rho1.min()),
            floor: 0.0,
        });
    }
    let mut psi0 = match &config.init {
        ShootInit::Zero => DVector::zeros(n),
        ShootInit::Given(p) => p.values().clone(),
        ShootInit::Solver(cfg) => match transport::solve_w(chain, rho0, rho1, cfg) {
            Ok(path) => {
                let mid = &path.densities[0];
                transport::recover_potential(chain, mid, &path.momenta[0])
                    .map(|p| p.values().clone())
                    .unwrap_or_else(|| DVector::zeros(n))
            }
            Err(_) => DVector::zeros(n),
        },
    };
    // pin the gauge
    let pin = psi0[n - 1];
    for i in 0..n {
        psi0[i] -= pin;
    }

    let endpoint = |psi: &DVector<f64>| -> Result<DVector<f64>, GeodesicError> {
        let traj = integrate(
            chain,
            &GeodesicState {
                rho: rho0.clone(),
                psi: Potential::new(psi.clone()),
                time: 0.0,
            },
            1.0,
            config.steps,
            &config.integrate,
        )?;
        Ok(traj.last().unwrap().rho.values().clone())
    };

    let target = rho1.values();
    let mut residual = match endpoint(&psi0) {
        Ok(end) => end - target,
        Err(_) => DVector::from_element(n, f64::INFINITY),
    };
    let mut err = residual.norm();
    if !err.is_finite() {
        // a bad initial guess that leaves the interior: restart from zero
        psi0 = DVector::zeros(n);
        residual = endpoint(&psi0)? - target;
        err = residual.norm();
    }

    let mut iterations = 0;
    while err > config.tol && iterations < config.max_iters {
        iterations += 1;
        // forward-difference Jacobian on the n-1 free coordinates
        let mut jac = DMatrix::zeros(n, n - 1);
        let fd = 1e-6 * (1.0 + psi0.norm());
        for j in 0..n - 1 {
            let mut pp = psi0.clone();
            pp[j] += fd;
            let col = (endpoint(&pp)? - target - &residual) / fd;
            jac.set_column(j, &col);
        }
        // least-squares step: the endpoint map has rank n-1 (mass is conserved)
        let jt = jac.transpose();
        let mut normal = &jt * &jac;
        for i in 0..n - 1 {
            normal[(i, i)] += 1e-12;
        }
        let g = &jt * &residual;
        let step = normal
            .lu()
            .solve(&g)
            .ok_or(GeodesicError::NoConvergence {
                residual: err,
                iterations,
            })?;
        // damped update
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut cand = psi0.clone();
            for j in 0..n - 1 {
                cand[j] -= lambda * step[j];
            }
            if let Ok(end) = endpoint(&cand) {
                let cand_res = end - target;
                let cand_err = cand_res.norm();
                if cand_err < err {
                    psi0 = cand;
                    residual = cand_res;
                    err = cand_err;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            return Err(GeodesicError::NoConvergence {
                residual: err,
                iterations,
            });
        }
    }
    if err > config.tol {
        return Err(GeodesicError::NoConvergence {
            residual: err,
            iterations,
        });
    }
    let trajectory = integrate(
        chain,
        &GeodesicState {
            rho: rho0.clone(),
            psi: Potential::new(psi0.clone()),
            time: 0.0,
        },
        1.0,
        config.steps,
        &config.integrate,
    )?;
    let first = &trajectory[0];
    let action = transport::action(chain, &first.rho, &first.psi);
    Ok(ShootResult {
        trajectory,
        initial_potential: Potential::new(psi0).gauge_fixed(chain),
        endpoint_error: err,
        action,
    })
}

fn relabel(e: GeodesicError, t: f64) -> GeodesicError {
    match e {
        GeodesicError::BoundaryState { .. } => GeodesicError::LeftInterior { t },
        other => other,
    }
}

/// Serialized trajectory point for plotting.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub rho: Vec<f64>,
    pub psi: Vec<f64>,
    pub action: f64,
}

pub fn trajectory_json(chain: &MarkovChain, traj: &[GeodesicState]) -> Vec<TrajectoryPoint> {
    traj.iter()
        .map(|s| TrajectoryPoint {
            time: s.time,
            rho: s.rho.as_slice().to_vec(),
            psi: s.psi.as_slice().to_vec(),
            action: transport::action(chain, &s.rho, &s.psi),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::builtin;
    use crate::transport::action;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interior(chain: &MarkovChain, rng: &mut ChaCha8Rng) -> Density {
        let n = chain.n();
        let mut v = DVector::from_fn(n, |_, _| 0.2 + rng.random::<f64>());
        v /= chain.pi_mass(&v);
        chain.density(v).unwrap()
    }

    #[test]
    fn constant_potential_is_stationary() {
        let c = builtin("cycle:4").unwrap();
        let rho = c.stationary_density();
        let psi = Potential::from_slice(&[3.0, 3.0, 3.0, 3.0]);
        let (dr, dp) = geodesic_rhs(&c, &rho, &psi, 1e-10).unwrap();
        assert!(dr.iter().all(|&v| v == 0.0));
        assert!(dp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rhs_conserves_mass() {
        let c = builtin("cycle:4").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..8 {
            let rho = interior(&c, &mut rng);
            let psi = Potential::new(DVector::from_fn(4, |_, _| rng.random::<f64>() - 0.5));
            let (dr, _) = geodesic_rhs(&c, &rho, &psi, 1e-10).unwrap();
            assert_abs_diff_eq!(c.pi_mass(&dr), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn rhs_two_point_hand_values() {
        // twopoint:1,1 at rho = 1, psi = (0, a): theta(1,1) = 1 and
        // d1 theta(1,1) = 1/2, so the continuity equation gives
        // drho = (-a, a) and the potential equation dpsi = (-a^2/4, -a^2/4)
        let c = builtin("twopoint:1,1").unwrap();
        let a = 0.7;
        let (dr, dp) = geodesic_rhs(
            &c,
            &c.stationary_density(),
            &Potential::from_slice(&[0.0, a]),
            1e-10,
        )
        .unwrap();
        assert_abs_diff_eq!(dr[0], -a, epsilon = 1e-14);
        assert_abs_diff_eq!(dr[1], a, epsilon = 1e-14);
        assert_abs_diff_eq!(dp[0], -a * a / 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(dp[1], -a * a / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn boundary_state_rejected() {
        let c = builtin("twopoint:1,1").unwrap();
        let rho = c.dirac(0);
        assert!(matches!(
            geodesic_rhs(&c, &rho, &Potential::from_slice(&[0.0, 0.0]), 1e-10),
            Err(GeodesicError::BoundaryState { .. })
        ));
    }

    #[test]
    fn zero_potential_gives_constant_trajectory() {
        let c = builtin("hypercube:2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = interior(&c, &mut rng);
        let init = GeodesicState {
            rho: rho.clone(),
            psi: Potential::new(DVector::zeros(4)),
            time: 0.0,
        };
        let traj = integrate(&c, &init, 0.5, 100, &IntegrateConfig::default()).unwrap();
        for s in &traj {
            for x in 0..4 {
                assert_abs_diff_eq!(s.rho.values()[x], rho.values()[x], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn action_constant_and_mass_conserved_along_flow() {
        let c = builtin("hypercube:2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rho = interior(&c, &mut rng);
        let psi = Potential::new(DVector::from_fn(4, |_, _| 0.4 * (rng.random::<f64>() - 0.5)));
        let a0 = action(&c, &rho, &psi);
        let init = GeodesicState {
            rho,
            psi,
            time: 0.0,
        };
        let cfg = IntegrateConfig::default();
        let traj = integrate(&c, &init, 0.2, 200, &cfg).unwrap();
        // self-consistency oracle: rerun at double resolution
        let traj2 = integrate(&c, &init, 0.2, 400, &cfg).unwrap();
        let last = traj.last().unwrap();
        let last2 = traj2.last().unwrap();
        for x in 0..4 {
            assert_abs_diff_eq!(
                last.rho.values()[x],
                last2.rho.values()[x],
                epsilon = 1e-9
            );
        }
        for s in &traj {
            let a = action(&c, &s.rho, &s.psi);
            assert!((a - a0).abs() <= 1e-6 * a0.max(1e-12), "action drift {a} vs {a0}");
            assert_abs_diff_eq!(c.pi_mass(s.rho.values()), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let c = builtin("cycle:4").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = interior(&c, &mut rng);
        let psi = Potential::new(DVector::from_fn(4, |_, _| 0.3 * (rng.random::<f64>() - 0.5)));
        let init = GeodesicState {
            rho: rho.clone(),
            psi,
            time: 0.0,
        };
        let cfg = IntegrateConfig::default();
        let fwd = integrate(&c, &init, 0.3, 300, &cfg).unwrap();
        let end = fwd.last().unwrap();
        let back_init = GeodesicState {
            rho: end.rho.clone(),
            psi: Potential::new(-end.psi.values()),
            time: 0.0,
        };
        let back = integrate(&c, &back_init, 0.3, 300, &cfg).unwrap();
        let home = back.last().unwrap();
        for x in 0..4 {
            assert_abs_diff_eq!(home.rho.values()[x], rho.values()[x], epsilon = 1e-8);
        }
    }

    #[test]
    fn shoot_identical_endpoints_gives_zero_potential() {
        let c = builtin("twopoint:1,1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = interior(&c, &mut rng);
        let cfg = ShootConfig {
            init: ShootInit::Zero,
            ..Default::default()
        };
        let res = shoot(&c, &rho, &rho, &cfg).unwrap();
        assert!(res.action < 1e-12);
        // psi constant up to gauge
        let p = res.initial_potential.values();
        assert_abs_diff_eq!(p[0], p[1], epsilon = 1e-8);
    }

    #[test]
    fn shoot_symmetric_endpoints_on_two_point() {
        // between (1.2, 0.8) and (0.8, 1.2) the midpoint of the trajectory is
        // the uniform density, by the 0 <-> 1 swap symmetry of the ODE
        let c = builtin("twopoint:1,1").unwrap();
        let rho0 = c.density(DVector::from_vec(vec![1.2, 0.8])).unwrap();
        let rho1 = c.density(DVector::from_vec(vec![0.8, 1.2])).unwrap();
        let res = shoot(&c, &rho0, &rho1, &ShootConfig::default()).unwrap();
        assert!(res.endpoint_error <= 1e-8);
        let mid = &res.trajectory[res.trajectory.len() / 2];
        assert_abs_diff_eq!(mid.rho.values()[0], 1.0, epsilon = 1e-5);
        // cross-oracle: sqrt(action) matches the convex solver within 0.5%
        let (path, _) = transport::solve_w_refined(
            &c,
            &rho0,
            &rho1,
            &SolverConfig {
                grid: 32,
                ..Default::default()
            },
        )
        .unwrap();
        let w_ode = res.action.sqrt();
        let rel = (w_ode - path.w_est()).abs() / path.w_est();
        assert!(rel < 5e-3, "ode {w_ode} vs solver {} (rel {rel})", path.w_est());
    }
}
