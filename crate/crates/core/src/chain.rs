//! Finite reversible Markov chains: validation, built-in families, laziness,
//! products, graph distances, and the `pi`-density type.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("NotStochastic: row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("NotIrreducible: support graph is disconnected")]
    NotIrreducible,
    #[error("NotReversible: detailed balance fails at ({x}, {y}) with residual {residual:e}")]
    NotReversible { x: usize, y: usize, residual: f64 },
    #[error("BadSpec: {0}")]
    BadSpec(String),
    #[error("BadLambda: laziness parameter {0} outside (0, 1)")]
    BadLambda(f64),
    #[error("WeightSum: weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("EmptyProduct: product of zero chains")]
    EmptyProduct,
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("BadDensity: {0}")]
    BadDensity(String),
    #[error("BadPi: {0}")]
    BadPi(String),
}

/// Numerical tolerances for chain validation. The underlying theory is exact;
/// these are the explicit slack each invariant gets under floating point.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Row sums of the kernel must be 1 within this.
    pub row_sum: f64,
    /// Stationary vector must be positive and sum to 1 within this.
    pub pi_sum: f64,
    /// `K(x,y) pi(x) = K(y,x) pi(y)` within this.
    pub detailed_balance: f64,
    /// `sum_x pi(x) rho(x) = 1` within this.
    pub density_mass: f64,
    /// Kernel entries at or below this are treated as structural zeros when
    /// building the support graph.
    pub structural_zero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            row_sum: 1e-12,
            pi_sum: 1e-12,
            detailed_balance: 1e-10,
            density_mass: 1e-10,
            structural_zero: 1e-15,
        }
    }
}

/// A probability density with respect to the stationary measure:
/// `sum_x pi(x) rho(x) = 1` with `rho >= 0`. The constant density `1` is the
/// stationary state.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    values: DVector<f64>,
}

impl Density {
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

    /// Strictly positive everywhere, i.e. in the interior where the metric is
    /// Riemannian.
    pub fn is_interior(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn from_raw(values: DVector<f64>) -> Self {
        Density { values }
    }
}

/// An irreducible, reversible Markov kernel together with its stationary
/// measure. Immutable after construction; every operation on it is a pure
/// function.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    states: Vec<String>,
    kernel: DMatrix<f64>,
    pi: DVector<f64>,
    tol: Tolerances,
}

impl MarkovChain {
    /// Validate a kernel and stationary vector. When `pi` is absent the
    /// unique stationary vector is computed by a dense linear solve of
    /// `pi K = pi`, `sum pi = 1`.
    pub fn new(kernel: DMatrix<f64>, pi: Option<DVector<f64>>) -> Result<Self, ChainError> {
        Self::with_options(None, kernel, pi, Tolerances::default())
    }

    pub fn with_options(
        states: Option<Vec<String>>,
        kernel: DMatrix<f64>,
        pi: Option<DVector<f64>>,
        tol: Tolerances,
    ) -> Result<Self, ChainError> {
        let n = kernel.nrows();
        if n == 0 || kernel.ncols() != n {
            return Err(ChainError::ShapeMismatch(format!(
                "kernel must be square and nonempty, got {}x{}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        for x in 0..n {
            let mut sum = 0.0;
            for y in 0..n {
                let k = kernel[(x, y)];
                if !k.is_finite() || k < 0.0 {
                    return Err(ChainError::NotStochastic { row: x, sum: k });
                }
                sum += k;
            }
            if (sum - 1.0).abs() > tol.row_sum {
                return Err(ChainError::NotStochastic { row: x, sum });
            }
        }
        if !support_connected(&kernel, tol.structural_zero) {
            return Err(ChainError::NotIrreducible);
        }
        let pi = match pi {
            Some(p) => {
                if p.len() != n {
                    return Err(ChainError::ShapeMismatch(format!(
                        "pi has length {}, kernel is {}x{}",
                        p.len(),
                        n,
                        n
                    )));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > tol.pi_sum {
                    return Err(ChainError::BadPi(format!("pi sums to {sum}")));
                }
                if p.iter().any(|&v| !(v > 0.0)) {
                    return Err(ChainError::BadPi("pi must be strictly positive".into()));
                }
                p
            }
            None => stationary_vector(&kernel)?,
        };
        for x in 0..n {
            for y in (x + 1)..n {
                let residual = kernel[(x, y)] * pi[x] - kernel[(y, x)] * pi[y];
                if residual.abs() > tol.detailed_balance {
                    return Err(ChainError::NotReversible {
                        x,
                        y,
                        residual,
                    });
                }
            }
        }
        let states = match states {
            Some(s) => {
                if s.len() != n {
                    return Err(ChainError::ShapeMismatch(format!(
                        "{} state labels for {} states",
                        s.len(),
                        n
                    )));
                }
                s
            }
            None => (0..n).map(|i| i.to_string()).collect(),
        };
        Ok(MarkovChain {
            states,
            kernel,
            pi,
            tol,
        })
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    #[inline]
    pub fn k(&self, x: usize, y: usize) -> f64 {
        self.kernel[(x, y)]
    }

    /// Whether `K(x, y)` is a structural edge (above the structural-zero
    /// cutoff, off the diagonal).
    #[inline]
    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        x != y && self.kernel[(x, y)] > self.tol.structural_zero
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    /// Undirected support edges `(x, y)` with `x < y`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for x in 0..n {
            for y in (x + 1)..n {
                if self.is_edge(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Smallest positive off-diagonal kernel entry (the constant `k` in the
    /// upper metric comparison bound).
    pub fn min_edge_rate(&self) -> f64 {
        let mut k = f64::INFINITY;
        for &(x, y) in &self.edges() {
            k = k.min(self.kernel[(x, y)]).min(self.kernel[(y, x)]);
        }
        k
    }

    /// Lazy kernel `(1 - lambda) I + lambda K`; same stationary measure.
    pub fn lazy(&self, lambda: f64) -> Result<Self, ChainError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ChainError::BadLambda(lambda));
        }
        let n = self.n();
        let mut kernel = self.kernel.clone() * lambda;
        for x in 0..n {
            kernel[(x, x)] += 1.0 - lambda;
        }
        Self::with_options(
            Some(self.states.clone()),
            kernel,
            Some(self.pi.clone()),
            self.tol,
        )
    }

    /// Weighted product chain on the lexicographically ordered product state
    /// set (first factor most significant). The stationary measure is the
    /// product measure.
    pub fn product(chains: &[&MarkovChain], alpha: &[f64]) -> Result<Self, ChainError> {
        if chains.is_empty() {
            return Err(ChainError::EmptyProduct);
        }
        if chains.len() != alpha.len() {
            return Err(ChainError::ShapeMismatch(format!(
                "{} chains, {} weights",
                chains.len(),
                alpha.len()
            )));
        }
        let wsum: f64 = alpha.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 || alpha.iter().any(|&a| a < 0.0) {
            return Err(ChainError::WeightSum(wsum));
        }
        let sizes: Vec<usize> = chains.iter().map(|c| c.n()).collect();
        let total: usize = sizes.iter().product();
        let m = chains.len();
        let unrank = |mut idx: usize| -> Vec<usize> {
            let mut coords = vec![0usize; m];
            for i in (0..m).rev() {
                coords[i] = idx % sizes[i];
                idx /= sizes[i];
            }
            coords
        };
        let mut kernel = DMatrix::zeros(total, total);
        let mut pi = DVector::from_element(total, 1.0);
        let mut states = Vec::with_capacity(total);
        for x in 0..total {
            let cx = unrank(x);
            states.push(
                cx.iter()
                    .enumerate()
                    .map(|(i, &c)| chains[i].states[c].clone())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            for (i, ci) in cx.iter().enumerate() {
                pi[x] *= chains[i].pi[*ci];
            }
            // diagonal: accumulated laziness of every factor
            let mut diag = 0.0;
            for (i, ci) in cx.iter().enumerate() {
                diag += alpha[i] * chains[i].kernel[(*ci, *ci)];
            }
            kernel[(x, x)] = diag;
            // single-coordinate moves
            let mut stride = total;
            for i in 0..m {
                stride /= sizes[i];
                for yi in 0..sizes[i] {
                    if yi == cx[i] {
                        continue;
                    }
                    let y = x - cx[i] * stride + yi * stride;
                    kernel[(x, y)] += alpha[i] * chains[i].kernel[(cx[i], yi)];
                }
            }
        }
        Self::with_options(Some(states), kernel, Some(pi), chains[0].tol)
    }

    /// Shortest-path distance over the support graph, by breadth-first
    /// search. Irreducibility guarantees finiteness.
    pub fn graph_distance(&self) -> DMatrix<u32> {
        let n = self.n();
        let mut d = DMatrix::from_element(n, n, u32::MAX);
        let mut queue = std::collections::VecDeque::new();
        for s in 0..n {
            d[(s, s)] = 0;
            queue.clear();
            queue.push_back(s);
            while let Some(x) = queue.pop_front() {
                for y in 0..n {
                    if self.is_edge(x, y) && d[(s, y)] == u32::MAX {
                        d[(s, y)] = d[(s, x)] + 1;
                        queue.push_back(y);
                    }
                }
            }
        }
        d
    }

    pub fn graph_distance_f64(&self) -> DMatrix<f64> {
        self.graph_distance().map(|v| v as f64)
    }

    pub fn diameter(&self) -> u32 {
        self.graph_distance().iter().cloned().max().unwrap_or(0)
    }

    /// Validate a `pi`-density on this chain.
    pub fn density(&self, values: DVector<f64>) -> Result<Density, ChainError> {
        if values.len() != self.n() {
            return Err(ChainError::ShapeMismatch(format!(
                "density length {} for {} states",
                values.len(),
                self.n()
            )));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(ChainError::BadDensity(
                "density must be nonnegative and finite".into(),
            ));
        }
        let mass = self.pi.dot(&values);
        if (mass - 1.0).abs() > self.tol.density_mass {
            return Err(ChainError::BadDensity(format!("pi-mass is {mass}")));
        }
        Ok(Density { values })
    }

    /// Validate a density given as a plain vector.
    pub fn density_from_vec(&self, values: Vec<f64>) -> Result<Density, ChainError> {
        self.density(DVector::from_vec(values))
    }

    /// The density of the Dirac measure at state `x`.
    pub fn dirac(&self, x: usize) -> Density {
        let mut v = DVector::zeros(self.n());
        v[x] = 1.0 / self.pi[x];
        Density { values: v }
    }

    /// The stationary density `1`.
    pub fn stationary_density(&self) -> Density {
        Density {
            values: DVector::from_element(self.n(), 1.0),
        }
    }

    /// `pi`-mass of an arbitrary vector.
    pub fn pi_mass(&self, values: &DVector<f64>) -> f64 {
        self.pi.dot(values)
    }

    pub fn to_json(&self) -> ChainJson {
        ChainJson {
            states: self.states.clone(),
            kernel: (0..self.n())
                .map(|x| (0..self.n()).map(|y| self.kernel[(x, y)]).collect())
                .collect(),
            pi: Some(self.pi.iter().cloned().collect()),
        }
    }

    pub fn from_json(json: &ChainJson) -> Result<Self, ChainError> {
        let n = json.kernel.len();
        if json.kernel.iter().any(|row| row.len() != n) {
            return Err(ChainError::ShapeMismatch("kernel rows differ in length".into()));
        }
        let kernel = DMatrix::from_fn(n, n, |x, y| json.kernel[x][y]);
        let pi = json.pi.as_ref().map(|p| DVector::from_vec(p.clone()));
        let states = if json.states.is_empty() {
            None
        } else {
            Some(json.states.clone())
        };
        Self::with_options(states, kernel, pi, Tolerances::default())
    }

    pub fn from_json_str(s: &str) -> Result<Self, ChainError> {
        let json: ChainJson =
            serde_json::from_str(s).map_err(|e| ChainError::BadSpec(e.to_string()))?;
        Self::from_json(&json)
    }

    /// Largest detailed-balance residual, for reporting.
    pub fn reversibility_residual(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in (x + 1)..n {
                worst = worst.max((self.kernel[(x, y)] * self.pi[x] - self.kernel[(y, x)] * self.pi[y]).abs());
            }
        }
        worst
    }
}

/// On-disk chain schema: `{ "states": [...], "kernel": [[...]], "pi": [...] }`
/// with `pi` optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainJson {
    #[serde(default)]
    pub states: Vec<String>,
    pub kernel: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
}

fn support_connected(kernel: &DMatrix<f64>, zero: f64) -> bool {
    let n = kernel.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in 0..n {
            // treat the support graph as undirected: for reversible chains
            // K(x,y) > 0 iff K(y,x) > 0, and validation will reject the rest
            if !seen[y] && x != y && (kernel[(x, y)] > zero || kernel[(y, x)] > zero) {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.into_iter().all(|b| b)
}

/// Unique stationary vector of an irreducible kernel: solve `(K^T - I) pi = 0`
/// with the last equation replaced by the normalisation `sum pi = 1`.
fn stationary_vector(kernel: &DMatrix<f64>) -> Result<DVector<f64>, ChainError> {
    let n = kernel.nrows();
    let mut a = kernel.transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or(ChainError::NotIrreducible)?;
    if pi.iter().any(|&v| !(v > 0.0)) {
        return Err(ChainError::NotIrreducible);
    }
    Ok(pi)
}

/// The chain families used throughout: complete graph, discrete circle,
/// hypercube, two-point chain, and the discrete torus.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    Complete(usize),
    Cycle(usize),
    Hypercube(usize),
    TwoPoint { p: f64, q: f64 },
    Torus(Vec<usize>),
}

impl Builtin {
    /// Parse a spec string: `complete:n`, `cycle:n`, `hypercube:n`,
    /// `twopoint:p,q`, `torus:c1xc2x...`.
    pub fn parse(spec: &str) -> Result<Self, ChainError> {
        let bad = |msg: &str| ChainError::BadSpec(format!("{msg} in {spec:?}"));
        let (family, arg) = spec
            .split_once(':')
            .ok_or_else(|| bad("missing ':'"))?;
        match family {
            "complete" | "cycle" | "hypercube" => {
                let n: usize = arg.parse().map_err(|_| bad("bad size"))?;
                if n < 1 {
                    return Err(bad("size must be >= 1"));
                }
                Ok(match family {
                    "complete" => Builtin::Complete(n),
                    "cycle" => Builtin::Cycle(n),
                    _ => Builtin::Hypercube(n),
                })
            }
            "twopoint" => {
                let (ps, qs) = arg.split_once(',').ok_or_else(|| bad("expected p,q"))?;
                let p: f64 = ps.trim().parse().map_err(|_| bad("bad p"))?;
                let q: f64 = qs.trim().parse().map_err(|_| bad("bad q"))?;
                if !(p > 0.0 && p <= 1.0 && q > 0.0 && q <= 1.0) {
                    return Err(bad("p, q must lie in (0, 1]"));
                }
                Ok(Builtin::TwoPoint { p, q })
            }
            "torus" => {
                let dims: Result<Vec<usize>, _> = arg
                    .split(['x', 'X', '\u{d7}'])
                    .map(|s| s.trim().parse::<usize>())
                    .collect();
                let dims = dims.map_err(|_| bad("bad torus dimensions"))?;
                if dims.is_empty() || dims.iter().any(|&c| c < 1) {
                    return Err(bad("torus dimensions must be >= 1"));
                }
                Ok(Builtin::Torus(dims))
            }
            _ => Err(bad("unknown family")),
        }
    }

    /// Construct the validated chain with the standard rates.
    pub fn chain(&self) -> Result<MarkovChain, ChainError> {
        match self {
            Builtin::Complete(n) => {
                let n = *n;
                let kernel = DMatrix::from_element(n, n, 1.0 / n as f64);
                MarkovChain::new(kernel, None)
            }
            Builtin::Cycle(n) => {
                let n = *n;
                let mut kernel = DMatrix::zeros(n, n);
                for m in 0..n {
                    kernel[(m, (m + 1) % n)] += 0.5;
                    kernel[(m, (m + n - 1) % n)] += 0.5;
                }
                MarkovChain::new(kernel, None)
            }
            Builtin::Hypercube(n) => {
                let n = *n;
                let size = 1usize << n;
                let mut kernel = DMatrix::zeros(size, size);
                for x in 0..size {
                    for i in 0..n {
                        kernel[(x, x ^ (1 << i))] = 1.0 / n as f64;
                    }
                }
                let states = (0..size).map(|x| format!("{x:0n$b}")).collect();
                MarkovChain::with_options(Some(states), kernel, None, Tolerances::default())
            }
            Builtin::TwoPoint { p, q } => {
                let kernel = DMatrix::from_row_slice(2, 2, &[1.0 - p, *p, *q, 1.0 - q]);
                let pi = DVector::from_vec(vec![q / (p + q), p / (p + q)]);
                MarkovChain::new(kernel, Some(pi))
            }
            Builtin::Torus(dims) => {
                let factors: Result<Vec<MarkovChain>, _> =
                    dims.iter().map(|&c| Builtin::Cycle(c).chain()).collect();
                let factors = factors?;
                let refs: Vec<&MarkovChain> = factors.iter().collect();
                let alpha = vec![1.0 / dims.len() as f64; dims.len()];
                MarkovChain::product(&refs, &alpha)
            }
        }
    }
}

/// Convenience: parse and build in one step.
pub fn builtin(spec: &str) -> Result<MarkovChain, ChainError> {
    Builtin::parse(spec)?.chain()
}
