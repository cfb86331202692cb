//! Discrete calculus, the action functionals, the convex path solver for the
//! transport metric, and coupling-based Wasserstein distances.

mod solver;
mod wasserstein;

pub use solver::{solve_w, solve_w_refined, PathJson, PathSolution, SolverConfig, WSolver};
pub use wasserstein::{total_variation, wasserstein, Metric};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::chain::{Density, MarkovChain};
use crate::mean::{alpha_cost, log_mean_value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("SolverDiverged: residuals {primal:e}/{dual:e} above tolerance {tol:e} after {iterations} iterations")]
    SolverDiverged {
        primal: f64,
        dual: f64,
        tol: f64,
        iterations: usize,
    },
    #[error("Infeasible: continuity projection failed; this indicates a bug, not bad data")]
    Infeasible,
    #[error("LPFail: {0}")]
    LPFail(String),
    #[error("BadMomentum: {0}")]
    BadMomentum(String),
}

/// A function on states, the dual variable of the continuity equation.
/// Defined up to an additive constant; everything downstream is invariant
/// under `psi -> psi + const`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    values: DVector<f64>,
}

impl Potential {
    pub fn new(values: DVector<f64>) -> Self {
        Potential { values }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Potential {
            values: DVector::from_row_slice(values),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    /// Project out the additive gauge: `sum_x pi(x) psi(x) = 0`.
    pub fn gauge_fixed(&self, chain: &MarkovChain) -> Potential {
        let mean = chain.pi().dot(&self.values);
        Potential {
            values: self.values.add_scalar(-mean),
        }
    }
}

/// An antisymmetric edge field `V(x, y) = -V(y, x)`, zero off the support
/// graph: the flux variable of the convex continuity-equation formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    values: DMatrix<f64>,
}

impl Momentum {
    /// Validates antisymmetry and support.
    pub fn new(chain: &MarkovChain, values: DMatrix<f64>) -> Result<Self, TransportError> {
        let n = chain.n();
        if values.nrows() != n || values.ncols() != n {
            return Err(TransportError::ShapeMismatch(format!(
                "momentum is {}x{}, chain has {} states",
                values.nrows(),
                values.ncols(),
                n
            )));
        }
        for x in 0..n {
            for y in 0..n {
                let v = values[(x, y)];
                if (v + values[(y, x)]).abs() > 1e-12 {
                    return Err(TransportError::BadMomentum(format!(
                        "not antisymmetric at ({x}, {y})"
                    )));
                }
                if v != 0.0 && !chain.is_edge(x, y) {
                    return Err(TransportError::BadMomentum(format!(
                        "flux on dead edge ({x}, {y})"
                    )));
                }
            }
        }
        Ok(Momentum { values })
    }

    pub fn zeros(n: usize) -> Self {
        Momentum {
            values: DMatrix::zeros(n, n),
        }
    }

    /// Build from per-edge values on the undirected edge list `(x, y)`,
    /// `x < y`, filling the antisymmetric counterpart.
    pub fn from_edge_values(n: usize, edges: &[(usize, usize)], vals: &[f64]) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for (&(x, y), &v) in edges.iter().zip(vals) {
            m[(x, y)] = v;
            m[(y, x)] = -v;
        }
        Momentum { values: m }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }
}

/// `grad psi (x, y) = psi(y) - psi(x)`.
pub fn gradient(chain: &MarkovChain, psi: &Potential) -> Result<DMatrix<f64>, TransportError> {
    let n = chain.n();
    if psi.len() != n {
        return Err(TransportError::ShapeMismatch(format!(
            "potential length {} for {} states",
            psi.len(),
            n
        )));
    }
    Ok(DMatrix::from_fn(n, n, |x, y| {
        psi.values[y] - psi.values[x]
    }))
}

/// `(div Psi)(x) = 1/2 sum_y (Psi(x,y) - Psi(y,x)) K(x,y)`.
pub fn divergence(chain: &MarkovChain, field: &DMatrix<f64>) -> Result<DVector<f64>, TransportError> {
    let n = chain.n();
    if field.nrows() != n || field.ncols() != n {
        return Err(TransportError::ShapeMismatch(format!(
            "field is {}x{}, chain has {} states",
            field.nrows(),
            field.ncols(),
            n
        )));
    }
    let mut out = DVector::zeros(n);
    for x in 0..n {
        let mut acc = 0.0;
        for y in 0..n {
            acc += 0.5 * (field[(x, y)] - field[(y, x)]) * chain.k(x, y);
        }
        out[x] = acc;
    }
    Ok(out)
}

/// `Delta psi = (K - I) psi`, the generator. Equals `div(grad psi)`.
pub fn laplacian(chain: &MarkovChain, psi: &DVector<f64>) -> DVector<f64> {
    chain.kernel() * psi - psi
}

/// `<phi, psi>_pi = sum_x phi(x) psi(x) pi(x)`.
pub fn pi_inner(chain: &MarkovChain, phi: &DVector<f64>, psi: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for x in 0..chain.n() {
        acc += phi[x] * psi[x] * chain.pi()[x];
    }
    acc
}

/// `<Phi, Psi>_pi = 1/2 sum_{x,y} Phi(x,y) Psi(x,y) K(x,y) pi(x)` for edge fields.
pub fn pi_inner_field(chain: &MarkovChain, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = chain.n();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let k = chain.k(x, y);
            if k > 0.0 {
                acc += a[(x, y)] * b[(x, y)] * k * chain.pi()[x];
            }
        }
    }
    0.5 * acc
}

/// `<Phi, Psi>_rho`: the edge inner product additionally weighted by the
/// logarithmic mean of the endpoint densities.
pub fn rho_inner(
    chain: &MarkovChain,
    rho: &Density,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> f64 {
    let n = chain.n();
    let r = rho.values();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let k = chain.k(x, y);
            if k > 0.0 {
                acc += a[(x, y)] * b[(x, y)] * log_mean_value(r[x], r[y]) * k * chain.pi()[x];
            }
        }
    }
    0.5 * acc
}

/// The matrix of edge weights `rho_hat(x, y) = theta(rho(x), rho(y))`.
pub fn rho_hat(chain: &MarkovChain, rho: &Density) -> DMatrix<f64> {
    let n = chain.n();
    let r = rho.values();
    DMatrix::from_fn(n, n, |x, y| log_mean_value(r[x], r[y]))
}

/// Kinetic action `A(rho, psi) = ||grad psi||_rho^2`.
pub fn action(chain: &MarkovChain, rho: &Density, psi: &Potential) -> f64 {
    let n = chain.n();
    let r = rho.values();
    let p = psi.values();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let k = chain.k(x, y);
            if k > 0.0 && x != y {
                let g = p[y] - p[x];
                acc += g * g * log_mean_value(r[x], r[y]) * k * chain.pi()[x];
            }
        }
    }
    0.5 * acc
}

/// Convex flux action `A'(rho, V) = 1/2 sum alpha(V(x,y), rho(x), rho(y)) K(x,y) pi(x)`.
/// `+inf` when flux crosses an edge whose mean density vanishes.
pub fn action_prime(chain: &MarkovChain, rho: &Density, v: &Momentum) -> f64 {
    let n = chain.n();
    let r = rho.values();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let k = chain.k(x, y);
            if k > 0.0 && x != y {
                let a = alpha_cost(v.get(x, y), r[x], r[y]);
                if a.is_infinite() {
                    return f64::INFINITY;
                }
                acc += a * k * chain.pi()[x];
            }
        }
    }
    0.5 * acc
}

/// The momentum of a potential: `V = rho_hat * grad psi`. Satisfies
/// `action_prime(rho, V) = action(rho, psi)`.
pub fn momentum_of_potential(chain: &MarkovChain, rho: &Density, psi: &Potential) -> Momentum {
    let n = chain.n();
    let r = rho.values();
    let p = psi.values();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if chain.is_edge(x, y) {
                m[(x, y)] = (p[y] - p[x]) * log_mean_value(r[x], r[y]);
            }
        }
    }
    Momentum { values: m }
}

/// Recover a potential from a momentum in the `rho`-weighted sense: solve
/// `div(rho_hat grad psi) = div V` for `psi` with `sum pi psi = 0`.
///
/// Returns `None` when the weighted support graph is disconnected (the
/// potential is not unique off the interior).
pub fn recover_potential(
    chain: &MarkovChain,
    rho: &Density,
    v: &Momentum,
) -> Option<Potential> {
    let n = chain.n();
    let r = rho.values();
    // pi-symmetrized weighted Laplacian: A[x][y] = -theta K(x,y) pi(x),
    // diagonal = row sums; A psi = pi .* div V
    let mut a = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut diag = 0.0;
        for y in 0..n {
            if chain.is_edge(x, y) {
                let w = log_mean_value(r[x], r[y]) * chain.k(x, y) * chain.pi()[x];
                a[(x, y)] = -w;
                diag += w;
            }
        }
        a[(x, x)] = diag;
    }
    // connectivity of the weighted support
    if !positive_weight_connected(&a) {
        return None;
    }
    // pi .* div(theta grad psi) = -A psi, so the right-hand side is negated
    let div = divergence(chain, v.values()).ok()?;
    let mut rhs = DVector::zeros(n);
    for x in 0..n {
        rhs[x] = -div[x] * chain.pi()[x];
    }
    // kill the constant null space with a pi pi^T shift, then solve
    for x in 0..n {
        for y in 0..n {
            a[(x, y)] += chain.pi()[x] * chain.pi()[y];
        }
    }
    let psi = a.lu().solve(&rhs)?;
    Some(Potential { values: psi }.gauge_fixed(chain))
}

fn positive_weight_connected(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in 0..n {
            if !seen[y] && x != y && a[(x, y)] < -1e-300 {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.into_iter().all(|b| b)
}
