//! Time-discretized convex solver for the transport metric.
//!
//! The metric is the infimal action over paths satisfying the discrete
//! continuity equation. On a uniform grid of `N` intervals with midpoint
//! densities the problem
//!
//! ```text
//! minimize   sum_k h * A'((rho_{k-1}+rho_k)/2, V_k)
//! subject to rho_k - rho_{k-1} + h * div V_k = 0,   rho_0, rho_N fixed
//! ```
//!
//! is a single convex program (the cost `alpha` is jointly convex). It is
//! solved by a primal-dual first-order scheme: the continuity constraints are
//! an affine projection (factored once per grid), and the nonsmooth cost is
//! handled through its proximal map, which splits per interval and edge and
//! reduces to a two-variable Newton solve after eliminating the flux.
//!
//! Boundary (Dirac) endpoints are admitted directly; minimizers exist for
//! arbitrary endpoints in this formulation. The reported `W` estimate carries
//! a grid-refinement gap instead of a certified error bound; empirically the
//! discrete optimum approaches the metric from below as `N` grows, because
//! the grid enforces continuity only at grid resolution.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::chain::{Density, MarkovChain};
use crate::mean::{alpha_cost, log_mean_d1, log_mean_d11, log_mean_value};
use crate::transport::{Momentum, TransportError};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Number of time intervals.
    pub grid: usize,
    /// Stopping threshold for the primal residual, dual residual, and
    /// relative action change.
    pub tol: f64,
    pub max_iters: usize,
    /// Residuals are evaluated every this many iterations.
    pub check_every: usize,
    /// Primal/dual step ratio; the product is fixed by the operator norm.
    pub step_ratio: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid: 32,
            tol: 1e-7,
            max_iters: 200_000,
            check_every: 50,
            step_ratio: 1.0,
        }
    }
}

/// A solved transport path: grid times, densities per grid point, momenta per
/// interval, the action value, and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct PathSolution {
    pub times: Vec<f64>,
    pub densities: Vec<Density>,
    pub momenta: Vec<Momentum>,
    /// Total action; `w_est = sqrt(action)`.
    pub action: f64,
    /// `h * A'` per interval; equal across intervals at a constant-speed
    /// optimum, up to discretization.
    pub interval_actions: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub action_change: f64,
    /// Raw primal/dual vectors for warm starts.
    warm: Option<WarmState>,
}

#[derive(Debug, Clone)]
struct WarmState {
    grid: usize,
    z: DVector<f64>,
    y: DVector<f64>,
}

impl PathSolution {
    pub fn w_est(&self) -> f64 {
        self.action.max(0.0).sqrt()
    }

    pub fn grid(&self) -> usize {
        self.times.len() - 1
    }

    /// Largest continuity-equation residual over intervals and states.
    pub fn continuity_residual(&self, chain: &MarkovChain) -> f64 {
        let n = chain.n();
        let ng = self.grid();
        let h = 1.0 / ng as f64;
        let mut worst: f64 = 0.0;
        for k in 1..=ng {
            let div = super::divergence(chain, self.momenta[k - 1].values()).unwrap();
            for x in 0..n {
                let r = self.densities[k].values()[x] - self.densities[k - 1].values()[x]
                    + h * div[x];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    pub fn to_json(&self) -> PathJson {
        PathJson {
            times: self.times.clone(),
            densities: self
                .densities
                .iter()
                .map(|d| d.as_slice().to_vec())
                .collect(),
            momenta: self
                .momenta
                .iter()
                .map(|m| {
                    let n = m.values().nrows();
                    let mut edges = Vec::new();
                    for x in 0..n {
                        for y in (x + 1)..n {
                            let v = m.get(x, y);
                            if v != 0.0 {
                                edges.push(EdgeFlux { x, y, v });
                            }
                        }
                    }
                    edges
                })
                .collect(),
            action: self.action,
            w_est: self.w_est(),
            interval_actions: self.interval_actions.clone(),
            converged: self.converged,
            iterations: self.iterations,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeFlux {
    pub x: usize,
    pub y: usize,
    pub v: f64,
}

/// Serialized form of a [`PathSolution`].
#[derive(Debug, Clone, Serialize)]
pub struct PathJson {
    pub times: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
    pub momenta: Vec<Vec<EdgeFlux>>,
    pub action: f64,
    pub w_est: f64,
    pub interval_actions: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// The transport solver for one chain and one grid size. Construction
/// factors the continuity projection; `solve` can then run repeatedly.
pub struct WSolver<'a> {
    chain: &'a MarkovChain,
    config: SolverConfig,
    edges: Vec<(usize, usize)>,
    /// `h * K(u,w) * pi(u)` per edge: the coefficient of `alpha` in the objective.
    edge_weight: Vec<f64>,
    n_p: usize,
    n_v: usize,
    h: f64,
    /// Cholesky factor of `L L^T + mu mu^T / (mu^T mu)`.
    proj: Cholesky<f64, Dyn>,
    /// Null vector of `L^T` (stationary measure tiled over constraint rows).
    mu: DVector<f64>,
    q_norm: f64,
}

impl<'a> WSolver<'a> {
    pub fn new(chain: &'a MarkovChain, config: SolverConfig) -> Result<Self, TransportError> {
        let n = chain.n();
        let ng = config.grid;
        if ng < 1 {
            return Err(TransportError::ShapeMismatch("grid must be >= 1".into()));
        }
        let edges = chain.edges();
        let ne = edges.len();
        let h = 1.0 / ng as f64;
        let edge_weight: Vec<f64> = edges
            .iter()
            .map(|&(u, w)| h * chain.k(u, w) * chain.pi()[u])
            .collect();
        let n_p = (ng - 1) * n;
        let n_v = ng * ne;

        // M = L L^T is block tridiagonal: diagonal blocks d_k I + h^2 G with
        // G the squared-rate graph matrix, off-diagonal blocks -I.
        let m_rows = ng * n;
        let mut m = DMatrix::<f64>::zeros(m_rows, m_rows);
        let mut g = DMatrix::<f64>::zeros(n, n);
        for &(u, w) in &edges {
            let (ku, kw) = (chain.k(u, w), chain.k(w, u));
            g[(u, u)] += ku * ku;
            g[(w, w)] += kw * kw;
            g[(u, w)] -= ku * kw;
            g[(w, u)] -= ku * kw;
        }
        for k in 1..=ng {
            let d = f64::from(u8::from(k <= ng - 1)) + f64::from(u8::from(k >= 2));
            for x in 0..n {
                for z in 0..n {
                    m[((k - 1) * n + x, (k - 1) * n + z)] =
                        h * h * g[(x, z)] + if x == z { d } else { 0.0 };
                }
            }
            if k >= 2 {
                for x in 0..n {
                    m[((k - 1) * n + x, (k - 2) * n + x)] = -1.0;
                    m[((k - 2) * n + x, (k - 1) * n + x)] = -1.0;
                }
            }
        }
        let mut mu = DVector::zeros(m_rows);
        for k in 0..ng {
            for x in 0..n {
                mu[k * n + x] = chain.pi()[x];
            }
        }
        let mu_norm2 = mu.dot(&mu);
        for i in 0..m_rows {
            for j in 0..m_rows {
                m[(i, j)] += mu[i] * mu[j] / mu_norm2;
            }
        }
        let proj = m.cholesky().ok_or(TransportError::Infeasible)?;

        let mut solver = WSolver {
            chain,
            config,
            edges,
            edge_weight,
            n_p,
            n_v,
            h,
            proj,
            mu,
            q_norm: 1.0,
        };
        solver.q_norm = solver.estimate_q_norm();
        Ok(solver)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    #[inline]
    fn p_idx(&self, k: usize, x: usize) -> usize {
        (k - 1) * self.chain.n() + x
    }

    #[inline]
    fn v_idx(&self, k: usize, e: usize) -> usize {
        self.n_p + (k - 1) * self.edges.len() + e
    }

    #[inline]
    fn c_idx(&self, k: usize, e: usize) -> usize {
        3 * ((k - 1) * self.edges.len() + e)
    }

    fn apply_l(&self, z: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.chain.n();
        let ng = self.config.grid;
        out.fill(0.0);
        for k in 1..=ng {
            for x in 0..n {
                let row = (k - 1) * n + x;
                let mut acc = 0.0;
                if k <= ng - 1 {
                    acc += z[self.p_idx(k, x)];
                }
                if k >= 2 {
                    acc -= z[self.p_idx(k - 1, x)];
                }
                out[row] = acc;
            }
            for (e, &(u, w)) in self.edges.iter().enumerate() {
                let v = z[self.v_idx(k, e)];
                out[(k - 1) * n + u] += self.h * self.chain.k(u, w) * v;
                out[(k - 1) * n + w] -= self.h * self.chain.k(w, u) * v;
            }
        }
    }

    fn apply_lt(&self, s: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.chain.n();
        let ng = self.config.grid;
        out.fill(0.0);
        for k in 1..=ng {
            for x in 0..n {
                let sv = s[(k - 1) * n + x];
                if k <= ng - 1 {
                    out[self.p_idx(k, x)] += sv;
                }
                if k >= 2 {
                    out[self.p_idx(k - 1, x)] -= sv;
                }
            }
            for (e, &(u, w)) in self.edges.iter().enumerate() {
                out[self.v_idx(k, e)] += self.h
                    * (self.chain.k(u, w) * s[(k - 1) * n + u]
                        - self.chain.k(w, u) * s[(k - 1) * n + w]);
            }
        }
    }

    /// Project onto the affine continuity set `L z = rhs`.
    fn project(&self, z: &mut DVector<f64>, rhs: &DVector<f64>, work: &mut ProjWork) {
        self.apply_l(z, &mut work.d);
        work.d -= rhs;
        let coef = self.mu.dot(&work.d) / self.mu.dot(&self.mu);
        work.d.axpy(-coef, &self.mu, 1.0);
        self.proj.solve_mut(&mut work.d);
        self.apply_lt(&work.d, &mut work.ltd);
        *z -= &work.ltd;
    }

    /// `c = Q z + q`: gather the centered copies (midpoint densities at both
    /// edge endpoints, plus the flux) per interval and edge.
    fn apply_q(&self, z: &DVector<f64>, rho0: &[f64], rho1: &[f64], out: &mut DVector<f64>) {
        let ng = self.config.grid;
        for k in 1..=ng {
            for (e, &(u, w)) in self.edges.iter().enumerate() {
                let mut a = 0.0;
                let mut b = 0.0;
                if k >= 2 {
                    a += 0.5 * z[self.p_idx(k - 1, u)];
                    b += 0.5 * z[self.p_idx(k - 1, w)];
                } else {
                    a += 0.5 * rho0[u];
                    b += 0.5 * rho0[w];
                }
                if k <= ng - 1 {
                    a += 0.5 * z[self.p_idx(k, u)];
                    b += 0.5 * z[self.p_idx(k, w)];
                } else {
                    a += 0.5 * rho1[u];
                    b += 0.5 * rho1[w];
                }
                let i = self.c_idx(k, e);
                out[i] = a;
                out[i + 1] = b;
                out[i + 2] = z[self.v_idx(k, e)];
            }
        }
    }

    fn apply_qt(&self, c: &DVector<f64>, out: &mut DVector<f64>) {
        let ng = self.config.grid;
        out.fill(0.0);
        for k in 1..=ng {
            for (e, &(u, w)) in self.edges.iter().enumerate() {
                let i = self.c_idx(k, e);
                if k >= 2 {
                    out[self.p_idx(k - 1, u)] += 0.5 * c[i];
                    out[self.p_idx(k - 1, w)] += 0.5 * c[i + 1];
                }
                if k <= ng - 1 {
                    out[self.p_idx(k, u)] += 0.5 * c[i];
                    out[self.p_idx(k, w)] += 0.5 * c[i + 1];
                }
                out[self.v_idx(k, e)] += c[i + 2];
            }
        }
    }

    fn estimate_q_norm(&self) -> f64 {
        let nz = self.n_p + self.n_v;
        let nc = 3 * self.config.grid * self.edges.len().max(1);
        let mut v = DVector::from_element(nz, 1.0);
        let zero0 = vec![0.0; self.chain.n()];
        let mut c = DVector::zeros(nc);
        let mut back = DVector::zeros(nz);
        let mut norm = 1.0;
        for _ in 0..80 {
            self.apply_q(&v, &zero0, &zero0, &mut c);
            self.apply_qt(&c, &mut back);
            norm = back.norm();
            if norm == 0.0 {
                return 1.0;
            }
            v = &back / norm;
        }
        norm.sqrt().max(1.0)
    }

    pub fn solve(&self, rho0: &Density, rho1: &Density) -> Result<PathSolution, TransportError> {
        self.solve_warm(rho0, rho1, None)
    }

    /// Solve, optionally warm-starting from a previous solution on the same
    /// chain (same or half the grid size).
    pub fn solve_warm(
        &self,
        rho0: &Density,
        rho1: &Density,
        warm: Option<&PathSolution>,
    ) -> Result<PathSolution, TransportError> {
        let n = self.chain.n();
        let ng = self.config.grid;
        let ne = self.edges.len();
        if rho0.len() != n || rho1.len() != n {
            return Err(TransportError::ShapeMismatch(
                "density length differs from state count".into(),
            ));
        }
        let r0: Vec<f64> = rho0.as_slice().to_vec();
        let r1: Vec<f64> = rho1.as_slice().to_vec();

        let mut rhs = DVector::zeros(ng * n);
        for x in 0..n {
            rhs[x] = r0[x];
            rhs[(ng - 1) * n + x] = -r1[x];
        }

        let nz = self.n_p + self.n_v;
        let nc = 3 * ng * ne;
        let mut z = DVector::zeros(nz);
        let mut y = DVector::zeros(nc);
        match warm {
            Some(prev) if prev.warm.is_some() => {
                let ws = prev.warm.as_ref().unwrap();
                if ws.grid == ng {
                    z.copy_from(&ws.z);
                    y.copy_from(&ws.y);
                } else {
                    self.lift_warm(prev, &mut z, &mut y);
                }
            }
            _ => {
                // linear interpolation between the endpoints
                for k in 1..ng {
                    let t = k as f64 / ng as f64;
                    for x in 0..n {
                        z[self.p_idx(k, x)] = (1.0 - t) * r0[x] + t * r1[x];
                    }
                }
            }
        }

        let mut work = ProjWork {
            d: DVector::zeros(ng * n),
            ltd: DVector::zeros(nz),
        };
        self.project(&mut z, &rhs, &mut work);

        let beta = self.config.step_ratio;
        let tau = 0.9 * beta / self.q_norm;
        let sigma = 0.9 / (beta * self.q_norm);
        let gamma = 1.0 / sigma;

        let mut zbar = z.clone();
        let mut u = DVector::zeros(nc);
        let mut c_prox = DVector::zeros(nc);
        let mut z_new = DVector::zeros(nz);
        let mut qty = DVector::zeros(nz);
        let mut c_check = DVector::zeros(nc);

        let mut last_action = f64::INFINITY;
        let mut interval_actions = vec![0.0; ng];
        let (mut pres, mut dres, mut dact) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut converged = false;
        let mut iterations = 0;

        for it in 0..self.config.max_iters {
            iterations = it + 1;
            // dual step through the Moreau identity
            self.apply_q(&zbar, &r0, &r1, &mut u);
            u *= sigma;
            u += &y;
            for k in 1..=ng {
                for e in 0..ne {
                    let i = self.c_idx(k, e);
                    let (a, b, v) = prox_edge(
                        self.edge_weight[e],
                        gamma,
                        u[i + 2] / sigma,
                        u[i] / sigma,
                        u[i + 1] / sigma,
                    );
                    c_prox[i] = a;
                    c_prox[i + 1] = b;
                    c_prox[i + 2] = v;
                }
            }
            // y_new = u - sigma * c_prox
            let mut y_new = u.clone();
            y_new.axpy(-sigma, &c_prox, 1.0);
            // primal step: z_new = proj(z - tau * Q^T y_new)
            self.apply_qt(&y_new, &mut qty);
            z_new.copy_from(&z);
            z_new.axpy(-tau, &qty, 1.0);
            self.project(&mut z_new, &rhs, &mut work);
            // over-relaxation
            zbar.copy_from(&z_new);
            zbar *= 2.0;
            zbar -= &z;

            if (it + 1) % self.config.check_every == 0 || it + 1 == self.config.max_iters {
                self.apply_q(&z_new, &r0, &r1, &mut c_check);
                pres = (&c_check - &c_prox).norm() / (nc.max(1) as f64).sqrt();
                // dual residual: (z - z_new)/tau - Q^T (y - y_new)
                let mut dz = &z - &z_new;
                dz /= tau;
                let mut dy = &y - &y_new;
                self.apply_qt(&dy, &mut qty);
                dz -= &qty;
                dres = dz.norm() / (nz.max(1) as f64).sqrt();
                dy.fill(0.0);
                // action from the prox copies (always finite, >= 0)
                let mut action = 0.0;
                for k in 1..=ng {
                    let mut ia = 0.0;
                    for e in 0..ne {
                        let i = self.c_idx(k, e);
                        ia += self.edge_weight[e]
                            * alpha_cost(c_prox[i + 2], c_prox[i].max(0.0), c_prox[i + 1].max(0.0));
                    }
                    interval_actions[k - 1] = ia;
                    action += ia;
                }
                dact = (action - last_action).abs() / action.abs().max(1e-15);
                last_action = action;
                if pres < self.config.tol && dres < self.config.tol && dact < self.config.tol {
                    converged = true;
                    z.copy_from(&z_new);
                    y = y_new;
                    break;
                }
            }
            z.copy_from(&z_new);
            y = y_new;
        }

        // assemble the path from the feasible primal point
        let mut times = Vec::with_capacity(ng + 1);
        let mut densities = Vec::with_capacity(ng + 1);
        densities.push(rho0.clone());
        times.push(0.0);
        for k in 1..ng {
            times.push(k as f64 * self.h);
            let vals = DVector::from_fn(n, |x, _| z[self.p_idx(k, x)]);
            densities.push(Density::from_raw(vals));
        }
        times.push(1.0);
        densities.push(rho1.clone());
        let momenta: Vec<Momentum> = (1..=ng)
            .map(|k| {
                let vals: Vec<f64> = (0..ne).map(|e| z[self.v_idx(k, e)]).collect();
                Momentum::from_edge_values(n, &self.edges, &vals)
            })
            .collect();

        let action: f64 = interval_actions.iter().sum();
        Ok(PathSolution {
            times,
            densities,
            momenta,
            action,
            interval_actions,
            converged,
            iterations,
            primal_residual: pres,
            dual_residual: dres,
            action_change: dact,
            warm: Some(WarmState { grid: ng, z, y }),
        })
    }

    /// Lift a coarse solution (grid `ng/2`) to this solver's grid.
    fn lift_warm(&self, prev: &PathSolution, z: &mut DVector<f64>, y: &mut DVector<f64>) {
        let n = self.chain.n();
        let ng = self.config.grid;
        let ne = self.edges.len();
        let coarse = prev.grid();
        for k in 1..ng {
            let t = k as f64 / ng as f64;
            // linear interpolation of the coarse path at time t
            let pos = t * coarse as f64;
            let j = (pos.floor() as usize).min(coarse - 1);
            let frac = pos - j as f64;
            for x in 0..n {
                let a = prev.densities[j].values()[x];
                let b = prev.densities[j + 1].values()[x];
                z[self.p_idx(k, x)] = (1.0 - frac) * a + frac * b;
            }
        }
        for k in 1..=ng {
            let j = ((k - 1) * coarse / ng).min(coarse - 1);
            for (e, &(u, w)) in self.edges.iter().enumerate() {
                z[self.v_idx(k, e)] = prev.momenta[j].get(u, w);
            }
        }
        if let Some(ws) = prev.warm.as_ref() {
            if ws.grid == coarse && ws.y.len() == 3 * coarse * ne {
                for k in 1..=ng {
                    let j = ((k - 1) * coarse / ng).min(coarse - 1);
                    for e in 0..ne {
                        let src = 3 * (j * ne + e);
                        let dst = self.c_idx(k, e);
                        y[dst] = ws.y[src];
                        y[dst + 1] = ws.y[src + 1];
                        y[dst + 2] = ws.y[src + 2];
                    }
                }
            }
        }
    }
}

struct ProjWork {
    d: DVector<f64>,
    ltd: DVector<f64>,
}

/// One-shot convenience wrapper.
pub fn solve_w(
    chain: &MarkovChain,
    rho0: &Density,
    rho1: &Density,
    config: &SolverConfig,
) -> Result<PathSolution, TransportError> {
    WSolver::new(chain, config.clone())?.solve(rho0, rho1)
}

/// Solve at half the grid, then warm-start the full grid. Returns the fine
/// solution together with the refinement gap `|W_N - W_{N/2}|`, the
/// discretization slack used by the metric comparison checks.
pub fn solve_w_refined(
    chain: &MarkovChain,
    rho0: &Density,
    rho1: &Density,
    config: &SolverConfig,
) -> Result<(PathSolution, f64), TransportError> {
    if config.grid < 4 {
        let sol = solve_w(chain, rho0, rho1, config)?;
        return Ok((sol, 0.0));
    }
    let coarse_cfg = SolverConfig {
        grid: config.grid / 2,
        ..config.clone()
    };
    let coarse = solve_w(chain, rho0, rho1, &coarse_cfg)?;
    let fine = WSolver::new(chain, config.clone())?.solve_warm(rho0, rho1, Some(&coarse))?;
    let gap = (fine.w_est() - coarse.w_est()).abs();
    Ok((fine, gap))
}

/// Proximal map of `(v, a, b) -> wt * alpha(v, a, b)` with parameter `gamma`:
///
/// ```text
/// argmin  wt * alpha(v, a, b) + (1/(2 gamma)) * |(v,a,b) - (v0,a0,b0)|^2
/// ```
///
/// The flux minimization is closed-form, `v = v0 theta / (theta + 2 wt gamma)`;
/// what remains is a two-variable convex problem in the densities solved by a
/// guarded Newton iteration, compared against the `v = 0` boundary candidate.
fn prox_edge(wt: f64, gamma: f64, v0: f64, a0: f64, b0: f64) -> (f64, f64, f64) {
    if v0 == 0.0 {
        return (a0.max(0.0), b0.max(0.0), 0.0);
    }
    let c2 = 2.0 * wt * gamma;
    let coef = wt * v0 * v0;
    let psi_val = |a: f64, b: f64| -> f64 {
        let th = log_mean_value(a.max(0.0), b.max(0.0));
        coef / (th + c2) + ((a - a0) * (a - a0) + (b - b0) * (b - b0)) / (2.0 * gamma)
    };
    // boundary candidate: zero flux
    let (ab, bb) = (a0.max(0.0), b0.max(0.0));
    let boundary_val =
        coef / c2 + ((ab - a0) * (ab - a0) + (bb - b0) * (bb - b0)) / (2.0 * gamma);

    let mut a = a0.max(1e-8);
    let mut b = b0.max(1e-8);
    for _ in 0..60 {
        let th = log_mean_value(a, b);
        let d1 = log_mean_d1(a, b);
        let d2 = log_mean_d1(b, a);
        let d11 = log_mean_d11(a, b);
        let d12 = -(a / b) * d11;
        let d22 = (a / b) * (a / b) * d11;
        let s = th + c2;
        let s2 = s * s;
        let s3 = s2 * s;
        let ga = -coef / s2 * d1 + (a - a0) / gamma;
        let gb = -coef / s2 * d2 + (b - b0) / gamma;
        let haa = coef * (2.0 * d1 * d1 / s3 - d11 / s2) + 1.0 / gamma;
        let hab = coef * (2.0 * d1 * d2 / s3 - d12 / s2);
        let hbb = coef * (2.0 * d2 * d2 / s3 - d22 / s2) + 1.0 / gamma;
        let det = haa * hbb - hab * hab;
        let mut da = -(hbb * ga - hab * gb) / det;
        let mut db = -(-hab * ga + haa * gb) / det;
        if !da.is_finite() || !db.is_finite() {
            break;
        }
        // backtrack to stay strictly positive
        let mut step = 1.0;
        while a + step * da <= 0.0 || b + step * db <= 0.0 {
            step *= 0.5;
            if step < 1e-14 {
                break;
            }
        }
        da *= step;
        db *= step;
        let f0 = psi_val(a, b);
        let slope = ga * da + gb * db;
        let mut an = a + da;
        let mut bn = b + db;
        let mut shrink = 1.0;
        for _ in 0..40 {
            if psi_val(an, bn) <= f0 + 1e-4 * shrink * slope {
                break;
            }
            shrink *= 0.5;
            an = a + shrink * da;
            bn = b + shrink * db;
        }
        let moved = (an - a).abs() + (bn - b).abs();
        a = an.max(1e-12);
        b = bn.max(1e-12);
        if moved < 1e-14 * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    if psi_val(a, b) <= boundary_val {
        let th = log_mean_value(a, b);
        (a, b, v0 * th / (th + c2))
    } else {
        (ab, bb, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::builtin;
    use crate::mean::LOG_MEAN_C;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    #[test]
    fn prox_edge_satisfies_optimality() {
        // check against a brute-force grid search
        let (wt, gamma, v0, a0, b0) = (0.03, 2.0, 0.7, 0.4, 1.1);
        let (a, b, v) = prox_edge(wt, gamma, v0, a0, b0);
        let obj = |v: f64, a: f64, b: f64| {
            wt * alpha_cost(v, a, b)
                + ((v - v0).powi(2) + (a - a0).powi(2) + (b - b0).powi(2)) / (2.0 * gamma)
        };
        let best = obj(v, a, b);
        for i in 0..40 {
            for j in 0..40 {
                for k in 0..40 {
                    let (vv, aa, bb) = (
                        -1.0 + 2.0 * i as f64 / 39.0,
                        2.0 * j as f64 / 39.0,
                        2.0 * k as f64 / 39.0,
                    );
                    assert!(obj(vv, aa, bb) >= best - 1e-6, "({vv},{aa},{bb})");
                }
            }
        }
    }

    #[test]
    fn prox_edge_boundary_case() {
        // strongly negative density targets force the zero-flux corner
        let (a, b, v) = prox_edge(0.1, 1.0, 0.5, -2.0, -3.0);
        assert_eq!((a, b, v), (0.0, 0.0, 0.0));
    }

    #[test]
    fn same_density_gives_zero_action() {
        let c = builtin("hypercube:2").unwrap();
        let rho = c
            .density(DVector::from_vec(vec![0.5, 1.5, 1.0, 1.0]))
            .unwrap();
        let cfg = SolverConfig {
            grid: 8,
            ..Default::default()
        };
        let sol = solve_w(&c, &rho, &rho, &cfg).unwrap();
        assert!(sol.converged);
        assert!(sol.action.abs() < 1e-10, "action {}", sol.action);
    }

    #[test]
    fn two_point_dirac_benchmark_coarse() {
        // W(dirac0, dirac1) = c / sqrt(p); at grid 16 the discretization sits
        // within ~0.6 percent
        let c = builtin("twopoint:0.5,0.5").unwrap();
        let cfg = SolverConfig {
            grid: 16,
            ..Default::default()
        };
        let sol = solve_w(&c, &c.dirac(0), &c.dirac(1), &cfg).unwrap();
        assert!(sol.converged, "residuals {} {}", sol.primal_residual, sol.dual_residual);
        let exact = LOG_MEAN_C / 0.5f64.sqrt();
        let rel = (sol.w_est() - exact).abs() / exact;
        assert!(rel < 0.01, "w_est {} vs {} (rel {rel})", sol.w_est(), exact);
    }

    #[test]
    fn solution_is_feasible_and_symmetric() {
        let c = builtin("cycle:4").unwrap();
        let rho0 = c
            .density(DVector::from_vec(vec![2.0, 0.8, 0.4, 0.8]))
            .unwrap();
        let rho1 = c
            .density(DVector::from_vec(vec![0.4, 0.8, 2.0, 0.8]))
            .unwrap();
        let cfg = SolverConfig {
            grid: 16,
            ..Default::default()
        };
        let solver = WSolver::new(&c, cfg).unwrap();
        let fwd = solver.solve(&rho0, &rho1).unwrap();
        let bwd = solver.solve(&rho1, &rho0).unwrap();
        assert!(fwd.continuity_residual(&c) < 1e-9);
        assert_abs_diff_eq!(fwd.w_est(), bwd.w_est(), epsilon = 1e-4);
    }

    #[test]
    fn refinement_reports_gap_and_warm_start_works() {
        let c = builtin("twopoint:1,1").unwrap();
        let cfg = SolverConfig {
            grid: 16,
            ..Default::default()
        };
        let (fine, gap) = solve_w_refined(&c, &c.dirac(0), &c.dirac(1), &cfg).unwrap();
        assert!(fine.converged);
        assert!(gap > 0.0 && gap < 0.05, "gap {gap}");
    }
}
