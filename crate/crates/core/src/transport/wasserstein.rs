//! Coupling-based Wasserstein distances, solved exactly as transportation
//! linear programs by successive shortest paths with Dijkstra potentials.
//! State counts here are tiny, so the dense bipartite formulation is enough.

use nalgebra::DMatrix;

use crate::chain::{Density, MarkovChain};
use crate::transport::TransportError;

/// Ground metric for the coupling problem.
#[derive(Debug, Clone)]
pub enum Metric {
    /// Shortest-path distance on the support graph.
    Graph,
    /// `d(x, y) = 1_{x != y}`; `total_variation` is `2 W_1` under this.
    Trivial,
    /// Any symmetric matrix with zero diagonal.
    Custom(DMatrix<f64>),
}

/// `W_p(rho0, rho1)` for `p` in `{1, 2}`: exact LP optimum over couplings of
/// `(sum d(x,y)^p q(x,y))^{1/p}`.
pub fn wasserstein(
    chain: &MarkovChain,
    rho0: &Density,
    rho1: &Density,
    metric: &Metric,
    p: u8,
) -> Result<f64, TransportError> {
    if !(p == 1 || p == 2) {
        return Err(TransportError::LPFail(format!("p must be 1 or 2, got {p}")));
    }
    let n = chain.n();
    if rho0.len() != n || rho1.len() != n {
        return Err(TransportError::ShapeMismatch(
            "density length differs from state count".into(),
        ));
    }
    let d = match metric {
        Metric::Graph => chain.graph_distance_f64(),
        Metric::Trivial => DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { 1.0 }),
        Metric::Custom(m) => {
            if m.nrows() != n || m.ncols() != n {
                return Err(TransportError::ShapeMismatch("metric matrix size".into()));
            }
            for x in 0..n {
                if m[(x, x)] != 0.0 {
                    return Err(TransportError::LPFail("metric diagonal must be zero".into()));
                }
                for y in 0..n {
                    if (m[(x, y)] - m[(y, x)]).abs() > 1e-12 || m[(x, y)] < 0.0 {
                        return Err(TransportError::LPFail(
                            "metric must be symmetric and nonnegative".into(),
                        ));
                    }
                }
            }
            m.clone()
        }
    };
    let cost = DMatrix::from_fn(n, n, |x, y| {
        let dv = d[(x, y)];
        if p == 1 {
            dv
        } else {
            dv * dv
        }
    });
    let supply: Vec<f64> = (0..n).map(|x| chain.pi()[x] * rho0.values()[x]).collect();
    let demand: Vec<f64> = (0..n).map(|y| chain.pi()[y] * rho1.values()[y]).collect();
    let total = transport_lp(&supply, &demand, &cost)?;
    Ok(if p == 1 { total } else { total.max(0.0).sqrt() })
}

/// `d_TV(rho0, rho1) = sum_x pi(x) |rho0(x) - rho1(x)|`. Equals twice the
/// `W_1` distance for the trivial metric.
pub fn total_variation(chain: &MarkovChain, rho0: &Density, rho1: &Density) -> f64 {
    (0..chain.n())
        .map(|x| chain.pi()[x] * (rho0.values()[x] - rho1.values()[x]).abs())
        .sum()
}

/// Exact transportation problem `min sum c_ij q_ij` over couplings, by
/// successive shortest augmenting paths on the bipartite graph with Johnson
/// potentials. Each augmentation saturates a source or a sink, so at most
/// `2n` Dijkstra passes run.
fn transport_lp(supply: &[f64], demand: &[f64], cost: &DMatrix<f64>) -> Result<f64, TransportError> {
    let n = supply.len();
    let s_total: f64 = supply.iter().sum();
    let d_total: f64 = demand.iter().sum();
    if (s_total - d_total).abs() > 1e-9 * (1.0 + s_total.abs()) {
        return Err(TransportError::LPFail(format!(
            "mass mismatch: supply {s_total}, demand {d_total}"
        )));
    }
    let mut remaining_s = supply.to_vec();
    let mut remaining_d = demand.to_vec();
    // flow on (i, j) pairs, for residual arcs backwards
    let mut flow = DMatrix::<f64>::zeros(n, n);
    // Johnson potentials for sources and sinks
    let mut pot_s = vec![0.0f64; n];
    let mut pot_d = vec![0.0f64; n];
    let mut objective = 0.0;
    let eps = 1e-15 * (1.0 + s_total);

    loop {
        let active_sources: Vec<usize> =
            (0..n).filter(|&i| remaining_s[i] > eps).collect();
        if active_sources.is_empty() {
            break;
        }
        // Dijkstra over 2n nodes: 0..n sources, n..2n sinks
        let inf = f64::INFINITY;
        let mut dist = vec![inf; 2 * n];
        let mut prev: Vec<Option<usize>> = vec![None; 2 * n];
        let mut done = vec![false; 2 * n];
        for &i in &active_sources {
            dist[i] = 0.0;
        }
        let mut reached_sink: Option<usize> = None;
        loop {
            let mut best = inf;
            let mut bu = usize::MAX;
            for u in 0..2 * n {
                if !done[u] && dist[u] < best {
                    best = dist[u];
                    bu = u;
                }
            }
            if bu == usize::MAX {
                break;
            }
            done[bu] = true;
            if bu >= n && remaining_d[bu - n] > eps {
                reached_sink = Some(bu - n);
                break;
            }
            if bu < n {
                let i = bu;
                for j in 0..n {
                    let rc = cost[(i, j)] + pot_s[i] - pot_d[j];
                    let nd = dist[bu] + rc.max(0.0);
                    if nd < dist[n + j] {
                        dist[n + j] = nd;
                        prev[n + j] = Some(bu);
                    }
                }
            } else {
                let j = bu - n;
                for i in 0..n {
                    if flow[(i, j)] > eps {
                        let rc = -(cost[(i, j)] + pot_s[i] - pot_d[j]);
                        let nd = dist[bu] + rc.max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = Some(bu);
                        }
                    }
                }
            }
        }
        let sink = reached_sink
            .ok_or_else(|| TransportError::LPFail("no augmenting path".into()))?;
        // update potentials with the found distances
        for u in 0..n {
            if dist[u].is_finite() {
                pot_s[u] += dist[u];
            }
        }
        for u in 0..n {
            if dist[n + u].is_finite() {
                pot_d[u] += dist[n + u];
            }
        }
        // trace the path back, find bottleneck
        let mut path = vec![n + sink];
        while let Some(p) = prev[*path.last().unwrap()] {
            path.push(p);
        }
        path.reverse(); // source, sink, source, ..., sink
        let src = path[0];
        let mut bottleneck = remaining_s[src].min(remaining_d[sink]);
        for w in path.windows(2) {
            if w[0] >= n {
                // residual arc sink -> source carries existing flow
                bottleneck = bottleneck.min(flow[(w[1], w[0] - n)]);
            }
        }
        if !(bottleneck > 0.0) {
            return Err(TransportError::LPFail("zero bottleneck".into()));
        }
        for w in path.windows(2) {
            if w[0] < n {
                flow[(w[0], w[1] - n)] += bottleneck;
                objective += bottleneck * cost[(w[0], w[1] - n)];
            } else {
                flow[(w[1], w[0] - n)] -= bottleneck;
                objective -= bottleneck * cost[(w[1], w[0] - n)];
            }
        }
        remaining_s[src] -= bottleneck;
        remaining_d[sink] -= bottleneck;
    }
    Ok(objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::builtin;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirac_pair_is_graph_distance() {
        let c = builtin("cycle:5").unwrap();
        let w = wasserstein(&c, &c.dirac(0), &c.dirac(3), &Metric::Graph, 1).unwrap();
        assert_abs_diff_eq!(w, 2.0, epsilon = 1e-12);
        let w2 = wasserstein(&c, &c.dirac(0), &c.dirac(3), &Metric::Graph, 2).unwrap();
        assert_abs_diff_eq!(w2, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_densities_have_zero_distance() {
        let c = builtin("hypercube:2").unwrap();
        let rho = c
            .density(DVector::from_vec(vec![0.4, 1.2, 1.6, 0.8]))
            .unwrap();
        let w = wasserstein(&c, &rho, &rho, &Metric::Graph, 1).unwrap();
        assert_abs_diff_eq!(w, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tv_on_two_point_diracs() {
        // sum_x pi |rho0 - rho1| = 1/2*2 + 1/2*2 = 2, hand evaluation
        let c = builtin("twopoint:1,1").unwrap();
        let tv = total_variation(&c, &c.dirac(0), &c.dirac(1));
        assert_abs_diff_eq!(tv, 2.0, epsilon = 1e-14);
        // and the trivial-metric LP gives half of it
        let w1 = wasserstein(&c, &c.dirac(0), &c.dirac(1), &Metric::Trivial, 1).unwrap();
        assert_abs_diff_eq!(2.0 * w1, tv, epsilon = 1e-12);
    }

    #[test]
    fn tv_equals_twice_trivial_w1_random() {
        let c = builtin("cycle:4").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut a = DVector::from_fn(4, |_, _| rng.random::<f64>());
            let mut b = DVector::from_fn(4, |_, _| rng.random::<f64>());
            a /= c.pi_mass(&a);
            b /= c.pi_mass(&b);
            let (ra, rb) = (c.density(a).unwrap(), c.density(b).unwrap());
            let tv = total_variation(&c, &ra, &rb);
            let w1 = wasserstein(&c, &ra, &rb, &Metric::Trivial, 1).unwrap();
            assert_abs_diff_eq!(tv, 2.0 * w1, epsilon = 1e-10);
        }
    }

    #[test]
    fn w1_moves_exactly_the_excess_mass() {
        // dirac at 0 vs stationary on twopoint:0.3,0.7: the unique optimal
        // coupling moves mass pi(1) = 0.3 across distance 1
        let c = builtin("twopoint:0.3,0.7").unwrap();
        let w1 = wasserstein(&c, &c.dirac(0), &c.stationary_density(), &Metric::Graph, 1).unwrap();
        assert_abs_diff_eq!(w1, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn triangle_inequality_w1_sampled() {
        let c = builtin("hypercube:2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let mk = |rng: &mut ChaCha8Rng| {
                let mut v = DVector::from_fn(4, |_, _| rng.random::<f64>() + 1e-3);
                v /= c.pi_mass(&v);
                c.density(v).unwrap()
            };
            let (a, b, m) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let ab = wasserstein(&c, &a, &b, &Metric::Graph, 1).unwrap();
            let am = wasserstein(&c, &a, &m, &Metric::Graph, 1).unwrap();
            let mb = wasserstein(&c, &m, &b, &Metric::Graph, 1).unwrap();
            assert!(ab <= am + mb + 1e-10);
        }
    }
}
