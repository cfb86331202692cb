//! Mapping representations: a Markov generator written as a set of moves
//! `delta: X -> X` with jump rates `c(x, delta)`, instead of point-to-point
//! jumps. This is the algebraic form behind the commutation criterion for
//! curvature bounds and behind tensorisation.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::{Builtin, MarkovChain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("GeneratorMismatch: move sums disagree with the kernel at ({x}, {y}) by {residual:e}")]
    GeneratorMismatch { x: usize, y: usize, residual: f64 },
    #[error("NoInverse: move {m} has no valid inverse at state {x}")]
    NoInverse { m: usize, x: usize },
    #[error("ReversibilityFail: summation identity fails with residual {residual:e}")]
    ReversibilityFail { residual: f64 },
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
}

/// A validated mapping representation `(G, c)` of a chain's generator:
///
/// 1. `Delta psi(x) = sum_delta (psi(delta x) - psi(x)) c(x, delta)`;
/// 2. every move has a declared inverse with `inv(delta)(delta(x)) = x`
///    wherever `c(x, delta) > 0`;
/// 3. the reversibility summation identity
///    `sum F(x, delta) c(x, delta) pi(x) = sum F(delta x, inv delta) c(x, delta) pi(x)`.
#[derive(Debug, Clone)]
pub struct MappingRepresentation {
    /// `moves[m][x]` is the image of state `x` under move `m`.
    moves: Vec<Vec<usize>>,
    /// Index of the inverse move for each move.
    inverse: Vec<usize>,
    /// `rates[(x, m)] = c(x, delta_m) >= 0`.
    rates: DMatrix<f64>,
}

impl MappingRepresentation {
    pub fn new(
        chain: &MarkovChain,
        moves: Vec<Vec<usize>>,
        inverse: Vec<usize>,
        rates: DMatrix<f64>,
    ) -> Result<Self, MappingError> {
        let n = chain.n();
        let g = moves.len();
        if inverse.len() != g || rates.nrows() != n || rates.ncols() != g {
            return Err(MappingError::ShapeMismatch(format!(
                "{} moves, {} inverses, rates {}x{}",
                g,
                inverse.len(),
                rates.nrows(),
                rates.ncols()
            )));
        }
        for (m, mv) in moves.iter().enumerate() {
            if mv.len() != n || mv.iter().any(|&y| y >= n) {
                return Err(MappingError::ShapeMismatch(format!("move {m} is not a map on the state set")));
            }
        }
        let rep = MappingRepresentation { moves, inverse, rates };
        rep.check_generator(chain)?;
        rep.check_inverses()?;
        rep.check_reversibility(chain)?;
        Ok(rep)
    }

    /// Default construction: one transposition `t_{x,y}` per support edge with
    /// `c(x, t_{x,y}) = K(x, y)`. Every irreducible reversible chain has this
    /// representation.
    pub fn transpositions(chain: &MarkovChain) -> Self {
        let n = chain.n();
        let edges = chain.edges();
        let mut moves = Vec::with_capacity(edges.len());
        let mut rates = DMatrix::zeros(n, edges.len());
        for (m, &(x, y)) in edges.iter().enumerate() {
            let mut mv: Vec<usize> = (0..n).collect();
            mv.swap(x, y);
            moves.push(mv);
            rates[(x, m)] = chain.k(x, y);
            rates[(y, m)] = chain.k(y, x);
        }
        let inverse = (0..edges.len()).collect();
        let rep = MappingRepresentation { moves, inverse, rates };
        debug_assert!(rep.check_generator(chain).is_ok());
        debug_assert!(rep.check_reversibility(chain).is_ok());
        rep
    }

    /// The natural representation of a built-in family, when the family has
    /// one smaller than the transposition set: bit flips for the hypercube,
    /// `{+1, -1}` for the circle, the single swap for a two-point chain, and
    /// lifted factor moves for the torus. The complete graph has no
    /// distinguished small representation and falls back to transpositions.
    pub fn natural(builtin: &Builtin, chain: &MarkovChain) -> Result<Self, MappingError> {
        let n = chain.n();
        match builtin {
            Builtin::Hypercube(bits) => {
                let bits = *bits;
                let mut moves = Vec::with_capacity(bits);
                let rates = DMatrix::from_element(n, bits, 1.0 / bits as f64);
                for i in 0..bits {
                    moves.push((0..n).map(|x| x ^ (1 << i)).collect());
                }
                let inverse = (0..bits).collect();
                Self::new(chain, moves, inverse, rates)
            }
            Builtin::Cycle(len) => {
                let len = *len;
                if len <= 2 {
                    // +1 and -1 coincide (len 1, 2): a single involutive move
                    let mv: Vec<usize> = (0..n).map(|m| (m + 1) % len).collect();
                    let rates = DMatrix::from_element(n, 1, 1.0);
                    return Self::new(chain, vec![mv], vec![0], rates);
                }
                let plus: Vec<usize> = (0..n).map(|m| (m + 1) % len).collect();
                let minus: Vec<usize> = (0..n).map(|m| (m + len - 1) % len).collect();
                let rates = DMatrix::from_element(n, 2, 0.5);
                Self::new(chain, vec![plus, minus], vec![1, 0], rates)
            }
            Builtin::TwoPoint { p, q } => {
                let mv = vec![1usize, 0usize];
                let rates = DMatrix::from_row_slice(2, 1, &[*p, *q]);
                Self::new(chain, vec![mv], vec![0], rates)
            }
            Builtin::Torus(dims) => {
                let factors: Vec<(Builtin, MarkovChain)> = dims
                    .iter()
                    .map(|&c| {
                        let b = Builtin::Cycle(c);
                        let ch = b.chain().expect("cycle factors are valid");
                        (b, ch)
                    })
                    .collect();
                let reps: Result<Vec<MappingRepresentation>, _> = factors
                    .iter()
                    .map(|(b, ch)| Self::natural(b, ch))
                    .collect();
                let sizes: Vec<usize> = factors.iter().map(|(_, ch)| ch.n()).collect();
                let alpha = vec![1.0 / dims.len() as f64; dims.len()];
                Self::product(chain, &reps?, &sizes, &alpha)
            }
            Builtin::Complete(_) => Ok(Self::transpositions(chain)),
        }
    }

    /// Lift factor representations to the product chain: each factor move
    /// acts on its own coordinate with rate `alpha_i c_i(x_i, delta)`.
    pub fn product(
        product_chain: &MarkovChain,
        reps: &[MappingRepresentation],
        sizes: &[usize],
        alpha: &[f64],
    ) -> Result<Self, MappingError> {
        let n = product_chain.n();
        let m = reps.len();
        let total_moves: usize = reps.iter().map(|r| r.n_moves()).sum();
        let mut moves = Vec::with_capacity(total_moves);
        let mut inverse = Vec::with_capacity(total_moves);
        let mut rates = DMatrix::zeros(n, total_moves);
        let mut strides = vec![0usize; m];
        {
            let mut s = n;
            for i in 0..m {
                s /= sizes[i];
                strides[i] = s;
            }
        }
        let mut offset = 0;
        for (i, rep) in reps.iter().enumerate() {
            for local in 0..rep.n_moves() {
                let mv: Vec<usize> = (0..n)
                    .map(|x| {
                        let xi = (x / strides[i]) % sizes[i];
                        x - xi * strides[i] + rep.moves[local][xi] * strides[i]
                    })
                    .collect();
                for x in 0..n {
                    let xi = (x / strides[i]) % sizes[i];
                    rates[(x, offset + local)] = alpha[i] * rep.rates[(xi, local)];
                }
                moves.push(mv);
                inverse.push(offset + rep.inverse[local]);
            }
            offset += rep.n_moves();
        }
        Self::new(product_chain, moves, inverse, rates)
    }

    pub fn n_moves(&self) -> usize {
        self.moves.len()
    }

    #[inline]
    pub fn apply(&self, m: usize, x: usize) -> usize {
        self.moves[m][x]
    }

    #[inline]
    pub fn rate(&self, x: usize, m: usize) -> f64 {
        self.rates[(x, m)]
    }

    pub fn inverse_of(&self, m: usize) -> usize {
        self.inverse[m]
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Smallest strictly positive rate.
    pub fn min_positive_rate(&self) -> f64 {
        self.rates
            .iter()
            .cloned()
            .filter(|&c| c > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Condition (1): the moves reproduce the kernel. Testing against the
    /// basis `psi = 1_z` reduces to comparing, for every ordered pair,
    /// the total rate into a state with the kernel entry.
    fn check_generator(&self, chain: &MarkovChain) -> Result<(), MappingError> {
        let n = chain.n();
        let mut flow = DMatrix::<f64>::zeros(n, n);
        for m in 0..self.n_moves() {
            for x in 0..n {
                let y = self.moves[m][x];
                if y != x {
                    flow[(x, y)] += self.rates[(x, m)];
                }
            }
        }
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let residual = flow[(x, y)] - chain.k(x, y);
                if residual.abs() > 1e-12 {
                    return Err(MappingError::GeneratorMismatch { x, y, residual });
                }
            }
        }
        Ok(())
    }

    /// Condition (2): the declared inverse undoes the move wherever the rate
    /// is positive.
    fn check_inverses(&self) -> Result<(), MappingError> {
        for m in 0..self.n_moves() {
            let inv = self.inverse[m];
            if inv >= self.n_moves() {
                return Err(MappingError::NoInverse { m, x: 0 });
            }
            for x in 0..self.moves[m].len() {
                if self.rates[(x, m)] > 0.0 && self.moves[inv][self.moves[m][x]] != x {
                    return Err(MappingError::NoInverse { m, x });
                }
            }
        }
        Ok(())
    }

    /// Condition (3): the reversibility summation identity on randomly
    /// sampled test functions `F : X x G -> R` (fixed seed).
    fn check_reversibility(&self, chain: &MarkovChain) -> Result<(), MappingError> {
        let n = chain.n();
        let g = self.n_moves();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5e_ed);
        for _ in 0..16 {
            let f: Vec<f64> = (0..n * g).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for x in 0..n {
                for m in 0..g {
                    let c = self.rates[(x, m)];
                    if c == 0.0 {
                        continue;
                    }
                    let w = c * chain.pi()[x];
                    lhs += f[x * g + m] * w;
                    rhs += f[self.moves[m][x] * g + self.inverse[m]] * w;
                }
            }
            let residual = (lhs - rhs).abs();
            if residual > 1e-10 * (1.0 + lhs.abs()) {
                return Err(MappingError::ReversibilityFail { residual });
            }
        }
        Ok(())
    }

    /// Exhaustive form of the generator identity used by tests: apply the
    /// generator to an arbitrary function through the moves.
    pub fn generator_apply(&self, psi: &[f64]) -> Vec<f64> {
        let n = psi.len();
        let mut out = vec![0.0; n];
        for x in 0..n {
            let mut acc = 0.0;
            for m in 0..self.n_moves() {
                acc += (psi[self.moves[m][x]] - psi[x]) * self.rates[(x, m)];
            }
            out[x] = acc;
        }
        out
    }
}
