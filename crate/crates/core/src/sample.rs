//! Random densities and gauge-fixed potentials for sampling passes.
//!
//! Per-sample generators are seeded through independent ChaCha streams of a
//! root seed, so parallel sampling is reproducible and independent of worker
//! count.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::chain::{Density, MarkovChain};
use crate::transport::Potential;

/// RNG for sample `index` under `root` seed.
pub fn stream_rng(root: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index);
    rng
}

/// Symmetric Dirichlet draw over the probability weights, returned as a
/// density (`rho = weight / pi`). Concentration 1 is uniform on the simplex.
pub fn dirichlet_density(chain: &MarkovChain, rng: &mut ChaCha8Rng, concentration: f64) -> Density {
    let n = chain.n();
    let gamma = Gamma::new(concentration, 1.0).expect("valid concentration");
    let mut w = DVector::from_fn(n, |_, _| {
        let g: f64 = gamma.sample(rng);
        g.max(1e-300)
    });
    let total: f64 = w.iter().sum();
    w /= total;
    let rho = DVector::from_fn(n, |x, _| w[x] / chain.pi()[x]);
    Density::from_raw(rho)
}

/// Interior Dirichlet draw with every coordinate floored: rescale so that
/// `min rho >= floor` while keeping unit mass.
pub fn interior_density(
    chain: &MarkovChain,
    rng: &mut ChaCha8Rng,
    concentration: f64,
    floor: f64,
) -> Density {
    let d = dirichlet_density(chain, rng, concentration);
    let raw = d.values();
    // convex combination with the stationary density keeps the mass at 1
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= floor {
        return d;
    }
    let t = (floor - min) / (1.0 - min);
    let mixed = DVector::from_fn(chain.n(), |x, _| (1.0 - t) * raw[x] + t);
    Density::from_raw(mixed)
}

/// A deliberately near-boundary draw: one random coordinate pushed to
/// `floor`, the rest renormalized. Inequality extremizers often sit here.
pub fn near_boundary_density(chain: &MarkovChain, rng: &mut ChaCha8Rng, floor: f64) -> Density {
    let n = chain.n();
    let d = dirichlet_density(chain, rng, 1.0);
    let mut v = d.values().clone();
    let hit = rng.random_range(0..n);
    v[hit] = floor;
    let mass = chain.pi_mass(&v);
    // renormalize the other coordinates to restore unit mass
    let spare = 1.0 - chain.pi()[hit] * floor;
    let scale = spare / (mass - chain.pi()[hit] * floor);
    for x in 0..n {
        if x != hit {
            v[x] *= scale;
        }
    }
    Density::from_raw(v)
}

/// Standard Gaussian potential with the additive gauge projected out.
pub fn gauge_potential(chain: &MarkovChain, rng: &mut ChaCha8Rng) -> Potential {
    let n = chain.n();
    let v = DVector::from_fn(n, |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        g
    });
    Potential::new(v).gauge_fixed(chain)
}
