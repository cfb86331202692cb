//! Acceptance suite: every headline guarantee of the library, run end to end
//! at its stated tolerance. One pass/fail line prints per criterion (visible
//! with `--nocapture`); the asserts carry the same information.

use nalgebra::DVector;

use entropic_ricci::analysis::{self, entropy, fisher, poincare_lambda, LadderConfig};
use entropic_ricci::chain::{builtin, Builtin, Density, MarkovChain};
use entropic_ricci::curvature::{
    b_a_with_gradients, certify_builtin, combine_bounds, criterion_bound, ricci_estimate,
    sample_min_margin, two_point_kappa, RicciConfig,
};
use entropic_ricci::geodesics::{integrate, GeodesicState, IntegrateConfig};
use entropic_ricci::mapping::MappingRepresentation;
use entropic_ricci::mean::{theta_constant_c, LOG_MEAN_C};
use entropic_ricci::parallel::map_indexed;
use entropic_ricci::sample::{
    dirichlet_density, gauge_potential, interior_density, near_boundary_density, stream_rng,
};
use entropic_ricci::transport::{
    action, solve_w_refined, total_variation, wasserstein, Metric, Potential, SolverConfig,
    WSolver,
};

fn line(criterion: &str, passed: bool, detail: &str) {
    println!(
        "[acceptance] {criterion}: {} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "{criterion}: {detail}");
}

/// Criterion 1: the two-point metric closed form. `W(dirac0, dirac1)` on the
/// symmetric two-point chain equals `c / sqrt(p)`; the solver at grid 64
/// must land within 1%, and the quadrature constant within 1.56 +- 0.01.
#[test]
fn criterion_01_two_point_closed_form() {
    let c = theta_constant_c().expect("quadrature converges");
    assert!((c - 1.56).abs() <= 0.01, "c = {c}");
    assert!((c - LOG_MEAN_C).abs() <= 1e-8);
    let mut worst = 0.0f64;
    for p in [0.25, 0.5, 1.0] {
        let chain = Builtin::TwoPoint { p, q: p }.chain().unwrap();
        let cfg = SolverConfig {
            grid: 64,
            ..Default::default()
        };
        let (sol, _) = solve_w_refined(&chain, &chain.dirac(0), &chain.dirac(1), &cfg).unwrap();
        assert!(sol.converged, "solver converged at p = {p}");
        let exact = c / p.sqrt();
        let rel = (sol.w_est() - exact).abs() / exact;
        worst = worst.max(rel);
        assert!(rel <= 0.01, "p = {p}: {} vs {exact} (rel {rel:.4})", sol.w_est());
    }
    line(
        "criterion 1 (two-point closed form)",
        true,
        &format!("c = {c:.8}, worst relative error {worst:.2e}"),
    );
}

/// Criterion 2: hypercube curvature. The commutation criterion certifies
/// `2/n` for n = 1..4; sampling 1e5 interior pairs on the square finds no
/// violation of `B >= A`; and the estimator recovers the sharp constant 2 on
/// the two-point space.
#[test]
fn criterion_02_hypercube_curvature() {
    for n in 1..=4usize {
        let b = Builtin::Hypercube(n);
        let chain = b.chain().unwrap();
        let rep = MappingRepresentation::natural(&b, &chain).unwrap();
        let cb = criterion_bound(&chain, &rep).expect("criterion applies");
        assert!(
            (cb.kappa - 2.0 / n as f64).abs() <= 1e-15,
            "hypercube:{n} certified {}",
            cb.kappa
        );
    }
    let q2 = builtin("hypercube:2").unwrap();
    let stats = sample_min_margin(&q2, 1.0, 100_000, 42, 1e-6);
    assert!(
        stats.min_margin >= -1e-8,
        "min(B - A) = {}",
        stats.min_margin
    );
    assert_eq!(stats.violations, 0);

    let tp = builtin("twopoint:1,1").unwrap();
    let est = ricci_estimate(&tp, &RicciConfig::default()).unwrap();
    assert!(
        (est.kappa - 2.0).abs() <= 1e-3,
        "estimated {} (spread {})",
        est.kappa,
        est.spread
    );
    line(
        "criterion 2 (hypercube curvature)",
        true,
        &format!(
            "certified 2/n for n=1..4; sampled min margin {:.3e}; two-point estimate {:.6}",
            stats.min_margin, est.kappa
        ),
    );
}

/// Criterion 3: complete graph. Sampled `B - (1/2 + 1/(2n)) A >= -1e-8` on
/// three and five vertices over 1e5 pairs.
#[test]
fn criterion_03_complete_graph() {
    let mut details = String::new();
    for n in [3usize, 5] {
        let chain = builtin(&format!("complete:{n}")).unwrap();
        let kappa = 0.5 + 1.0 / (2.0 * n as f64);
        let stats = sample_min_margin(&chain, kappa, 100_000, 42, 1e-6);
        assert!(
            stats.min_margin >= -1e-8,
            "complete:{n}: min margin {}",
            stats.min_margin
        );
        assert_eq!(stats.violations, 0, "complete:{n}");
        details.push_str(&format!("complete:{n} min {:.3e}; ", stats.min_margin));
    }
    line("criterion 3 (complete graph)", true, &details);
}

/// Criterion 4: circle and torus nonnegativity. Sampled `B >= -1e-8`.
#[test]
fn criterion_04_circle_torus_nonnegative() {
    let mut details = String::new();
    for spec in ["cycle:5", "torus:3x3"] {
        let chain = builtin(spec).unwrap();
        let stats = sample_min_margin(&chain, 0.0, 100_000, 42, 1e-6);
        assert!(
            stats.min_margin >= -1e-8,
            "{spec}: min B = {}",
            stats.min_margin
        );
        details.push_str(&format!("{spec} min {:.3e}; ", stats.min_margin));
    }
    line("criterion 4 (circle/torus nonnegativity)", true, &details);
}

/// Criterion 5: the Hessian identity. The central finite difference of the
/// entropy along the geodesic flow matches `B(rho, psi)` within
/// `max(1e-4, 1e-3 |B|)` on 100 random interior pairs.
#[test]
fn criterion_05_hessian_identity() {
    let chains = [builtin("hypercube:2").unwrap(), builtin("cycle:4").unwrap()];
    let mut worst = 0.0f64;
    for (ci, chain) in chains.iter().enumerate() {
        for trial in 0..50u64 {
            let mut rng = stream_rng(1000 + ci as u64, trial);
            let rho = interior_density(chain, &mut rng, 1.0, 1e-4);
            let mut psi = gauge_potential(chain, &mut rng);
            let a = action(chain, &rho, &psi);
            psi = Potential::new(psi.values() / a.sqrt());
            let b = entropic_ricci::curvature::b_functional(chain, &rho, &psi).unwrap();

            let h_at = |delta: f64, steps: usize| -> f64 {
                let init = GeodesicState {
                    rho: rho.clone(),
                    psi: psi.clone(),
                    time: 0.0,
                };
                let traj =
                    integrate(chain, &init, delta, steps, &IntegrateConfig::default()).unwrap();
                entropy(chain, &traj.last().unwrap().rho)
            };
            let h0 = entropy(chain, &rho);
            let d = 1e-3;
            let fd = |delta: f64, steps: usize| {
                (h_at(delta, steps) - 2.0 * h0 + h_at(-delta, steps)) / (delta * delta)
            };
            let coarse = fd(d, 25);
            let fine = fd(d / 2.0, 13);
            let richardson = (4.0 * fine - coarse) / 3.0;
            let tol = 1e-4f64.max(1e-3 * b.abs());
            let err = (richardson - b).abs();
            worst = worst.max(err / tol);
            assert!(
                err <= tol,
                "chain {ci} trial {trial}: fd {richardson} vs B {b} (err {err:.2e}, tol {tol:.2e})"
            );
        }
    }
    line(
        "criterion 5 (Hessian identity)",
        true,
        &format!("100 pairs, worst error/tolerance ratio {worst:.3}"),
    );
}

fn sandwich_density(chain: &MarkovChain, seed: u64, index: u64) -> Density {
    let mut rng = stream_rng(seed, index);
    match index % 5 {
        3 => {
            // pure boundary: a Dirac at a pseudo-random state
            let x = (index as usize * 7 + 3) % chain.n();
            chain.dirac(x)
        }
        4 => near_boundary_density(chain, &mut rng, 1e-6),
        _ => dirichlet_density(chain, &mut rng, 1.0),
    }
}

/// Criterion 6: the metric sandwich
/// `d_TV/sqrt(2) <= sqrt(2) W_1g <= W_est + eps_N` and
/// `W_est <= (c/sqrt(k)) W_2g + eps_N` on 50 random pairs (interior and
/// boundary) per chain, with `eps_N` the 32 -> 64 refinement gap.
#[test]
fn criterion_06_metric_sandwich() {
    let c = theta_constant_c().unwrap();
    let mut details = String::new();
    for spec in ["twopoint:0.5,0.5", "hypercube:2", "cycle:4"] {
        let chain = builtin(spec).unwrap();
        let k = chain.min_edge_rate();
        let cfg = SolverConfig {
            grid: 64,
            ..Default::default()
        };
        let results: Vec<(f64, f64, f64, f64, f64)> = map_indexed(50, |i| {
            let rho0 = sandwich_density(&chain, 60, 2 * i as u64);
            let rho1 = sandwich_density(&chain, 61, 2 * i as u64 + 1);
            let (sol, eps) = solve_w_refined(&chain, &rho0, &rho1, &cfg).unwrap();
            let tv = total_variation(&chain, &rho0, &rho1);
            let w1 = wasserstein(&chain, &rho0, &rho1, &Metric::Graph, 1).unwrap();
            let w2 = wasserstein(&chain, &rho0, &rho1, &Metric::Graph, 2).unwrap();
            (sol.w_est(), eps, tv, w1, w2)
        });
        let mut worst_lower = f64::INFINITY;
        let mut worst_upper = f64::INFINITY;
        for (i, &(w, eps, tv, w1, w2)) in results.iter().enumerate() {
            let lower_tv = tv / std::f64::consts::SQRT_2;
            let lower_w1 = std::f64::consts::SQRT_2 * w1;
            assert!(lower_tv <= lower_w1 + 1e-12, "{spec} pair {i}");
            let lower_margin = (w + eps) - lower_w1;
            let upper_margin = (c / k.sqrt() * w2 + eps) - w;
            worst_lower = worst_lower.min(lower_margin);
            worst_upper = worst_upper.min(upper_margin);
            assert!(
                lower_margin >= -1e-9,
                "{spec} pair {i}: sqrt2 W1 {lower_w1} vs W {w} + eps {eps}"
            );
            assert!(
                upper_margin >= -1e-9,
                "{spec} pair {i}: W {w} vs (c/sqrt k) W2 {} + eps {eps}",
                c / k.sqrt() * w2
            );
        }
        details.push_str(&format!(
            "{spec}: lower slack {worst_lower:.2e}, upper slack {worst_upper:.2e}; "
        ));
    }
    line("criterion 6 (metric sandwich)", true, &details);
}

/// Criterion 7: entropy kappa-convexity along solver geodesics on the
/// square (certified kappa = 1). The solver estimate of `W^2` replaces the
/// exact one; its bound direction (it approaches from below as the grid
/// refines) only loosens the subtracted term, and the per-run slack 1e-5
/// absorbs path discretization.
#[test]
fn criterion_07_entropy_convexity_along_geodesics() {
    let chain = builtin("hypercube:2").unwrap();
    let kappa = 1.0;
    let solver = WSolver::new(
        &chain,
        SolverConfig {
            grid: 32,
            ..Default::default()
        },
    )
    .unwrap();
    let worst = map_indexed(20, |i| {
        let mut rng0 = stream_rng(70, i as u64);
        let mut rng1 = stream_rng(71, i as u64);
        let rho0 = dirichlet_density(&chain, &mut rng0, 1.0);
        let rho1 = dirichlet_density(&chain, &mut rng1, 1.0);
        let sol = solver.solve(&rho0, &rho1).unwrap();
        let w2 = sol.action;
        let h0 = entropy(&chain, &rho0);
        let h1 = entropy(&chain, &rho1);
        let mut worst = f64::INFINITY;
        for (k, t) in sol.times.iter().enumerate() {
            let ht = entropy(&chain, &sol.densities[k]);
            let bound = (1.0 - t) * h0 + t * h1 - 0.5 * kappa * t * (1.0 - t) * w2;
            worst = worst.min(bound + 1e-5 - ht);
        }
        worst
    })
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    assert!(worst >= 0.0, "worst convexity slack {worst:.3e}");
    line(
        "criterion 7 (entropy convexity)",
        true,
        &format!("20 pairs, worst slack {worst:.3e}"),
    );
}

/// Criterion 8: the spectral ladder. Exact gaps for the families, and the
/// gap dominates every certified curvature bound.
#[test]
fn criterion_08_spectral_ladder() {
    for n in 1..=4usize {
        let gap = poincare_lambda(&builtin(&format!("hypercube:{n}")).unwrap()).unwrap();
        assert!(
            (gap - 2.0 / n as f64).abs() <= 1e-12,
            "hypercube:{n} gap {gap}"
        );
    }
    for n in [2usize, 3, 5, 7] {
        let gap = poincare_lambda(&builtin(&format!("complete:{n}")).unwrap()).unwrap();
        assert!((gap - 1.0).abs() <= 1e-12, "complete:{n} gap {gap}");
    }
    // gap >= certified kappa on every builtin with a certificate
    let mut specs: Vec<String> = vec![
        "hypercube:1".into(),
        "hypercube:2".into(),
        "hypercube:3".into(),
        "hypercube:4".into(),
        "cycle:4".into(),
        "cycle:5".into(),
        "torus:3x3".into(),
        "torus:2x4".into(),
    ];
    for i in 1..=5 {
        for j in 1..=5 {
            specs.push(format!("twopoint:{},{}", i as f64 / 5.0, j as f64 / 5.0));
        }
    }
    for spec in &specs {
        let b = Builtin::parse(spec).unwrap();
        let chain = b.chain().unwrap();
        let Some(cb) = certify_builtin(&b, &chain) else {
            continue;
        };
        let gap = poincare_lambda(&chain).unwrap();
        assert!(
            gap >= cb.kappa - 1e-9,
            "{spec}: gap {gap} < certified {}",
            cb.kappa
        );
    }
    line(
        "criterion 8 (spectral ladder)",
        true,
        "exact gaps on families; gap >= certified kappa on all builtins",
    );
}

/// Criterion 9: modified log-Sobolev on hypercubes. Sampled
/// `inf I/(2H) >= 2/n - 1e-3` over 2000 densities, and no sample violates
/// `H <= I n/4` by more than 1e-9.
#[test]
fn criterion_09_mlsi_hypercube() {
    let mut details = String::new();
    for n in 1..=3usize {
        let chain = builtin(&format!("hypercube:{n}")).unwrap();
        let lambda = 2.0 / n as f64;
        let samples: Vec<(f64, f64)> = map_indexed(2000, |i| {
            let mut rng = stream_rng(900 + n as u64, i as u64);
            let rho = match i % 10 {
                9 => near_boundary_density(&chain, &mut rng, 1e-6),
                7 | 8 => dirichlet_density(&chain, &mut rng, 0.3),
                _ => dirichlet_density(&chain, &mut rng, 1.0),
            };
            (entropy(&chain, &rho), fisher(&chain, &rho))
        });
        let mut est = f64::INFINITY;
        for (i, &(h, inf)) in samples.iter().enumerate() {
            if h > 1e-8 && inf.is_finite() {
                est = est.min(inf / (2.0 * h));
            }
            let violation = h - inf / (2.0 * lambda);
            assert!(
                violation <= 1e-9,
                "hypercube:{n} sample {i}: H = {h}, I = {inf}"
            );
        }
        assert!(
            est >= lambda - 1e-3,
            "hypercube:{n}: sampled MLSI constant {est} < {lambda}"
        );
        details.push_str(&format!("n={n}: inf I/(2H) = {est:.6}; "));
    }
    line("criterion 9 (MLSI hypercube)", true, &details);
}

/// Criterion 10: the full inequality ladder on the square with kappa = 1:
/// Talagrand, HWI, EVI, contraction, metric-derivative, sub-Gaussian (200
/// Lipschitz samples plus the Hamming weight at t in {0.5, 1, 2, 4}), each
/// within its declared slack.
#[test]
fn criterion_10_ladder_hypercube2() {
    let chain = builtin("hypercube:2").unwrap();
    let report = analysis::verify_ladder(&chain, 1.0, &LadderConfig::default()).unwrap();
    let mut details = String::new();
    for check in &report.checks {
        details.push_str(&format!("{} {:.2e}; ", check.name, check.min_margin));
        assert!(
            check.passed,
            "{}: margin {} below -{} (err {:?})",
            check.name, check.min_margin, check.slack, check.error
        );
    }
    assert!(report.mlsi_lambda_est >= 1.0 - 1e-3);
    assert!(report.poincare_lambda >= report.kappa - 1e-9);
    line("criterion 10 (inequality ladder)", true, &details);
}

/// Criterion 11: constructors. Laziness rescales the functionals exactly
/// (`A_lambda = lambda A`, `B_lambda = lambda^2 B`); the two-point formula
/// dominates its closed-form relaxation on a 10x10 rate grid; and a product
/// of asymmetric two-point chains satisfies the tensorised bound on 1e5
/// samples.
#[test]
fn criterion_11_constructors() {
    let chain = builtin("hypercube:2").unwrap();
    let lambda = 0.35;
    let lazy = chain.lazy(lambda).unwrap();
    for i in 0..1000u64 {
        let mut rng = stream_rng(110, i);
        let rho = interior_density(&chain, &mut rng, 1.0, 1e-6);
        let psi = gauge_potential(&chain, &mut rng);
        let (a, b) = {
            let g = b_a_with_gradients(&chain, &rho, &psi);
            (g.a, g.b)
        };
        let (al, bl) = {
            let g = b_a_with_gradients(&lazy, &rho, &psi);
            (g.a, g.b)
        };
        assert!(
            (al - lambda * a).abs() <= 1e-12 * (1.0 + a.abs()),
            "A_lambda at sample {i}"
        );
        assert!(
            (bl - lambda * lambda * b).abs() <= 1e-12 * (1.0 + b.abs()),
            "B_lambda at sample {i}: {bl} vs {}",
            lambda * lambda * b
        );
    }
    for i in 1..=10 {
        for j in 1..=10 {
            let (p, q) = (i as f64 / 10.0, j as f64 / 10.0);
            let kappa = two_point_kappa(p, q).unwrap();
            assert!(kappa >= (p + q) / 2.0 + (p * q).sqrt() - 1e-9, "({p}, {q})");
        }
    }
    let f1 = builtin("twopoint:0.3,0.7").unwrap();
    let f2 = builtin("twopoint:0.5,0.5").unwrap();
    let product = MarkovChain::product(&[&f1, &f2], &[0.5, 0.5]).unwrap();
    let kappa_alpha = combine_bounds(&[
        (two_point_kappa(0.3, 0.7).unwrap(), 0.5),
        (two_point_kappa(0.5, 0.5).unwrap(), 0.5),
    ])
    .unwrap()
    .kappa;
    let stats = sample_min_margin(&product, kappa_alpha, 100_000, 42, 1e-6);
    assert!(
        stats.min_margin >= -1e-8,
        "product margin {}",
        stats.min_margin
    );
    line(
        "criterion 11 (constructors)",
        true,
        &format!(
            "laziness exact on 1e3 samples; grid ok; product kappa {kappa_alpha:.6}, min margin {:.3e}",
            stats.min_margin
        ),
    );
}

/// Criterion 12: convexity of the squared distance under linear
/// interpolation of the endpoints, within twice the refinement gap.
#[test]
fn criterion_12_squared_distance_convexity() {
    let chain = builtin("cycle:4").unwrap();
    let cfg = SolverConfig {
        grid: 32,
        ..Default::default()
    };
    let worst = map_indexed(30, |i| {
        let mut rng = stream_rng(120, i as u64);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| dirichlet_density(&chain, rng, 1.0);
        let (a0, b0, a1, b1) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let tau = 0.5;
        let mix = |x: &Density, y: &Density| {
            chain
                .density(DVector::from_fn(chain.n(), |s, _| {
                    (1.0 - tau) * x.values()[s] + tau * y.values()[s]
                }))
                .unwrap()
        };
        let (s0, e0) = solve_w_refined(&chain, &a0, &b0, &cfg).unwrap();
        let (s1, e1) = solve_w_refined(&chain, &a1, &b1, &cfg).unwrap();
        let (st, et) = solve_w_refined(&chain, &mix(&a0, &a1), &mix(&b0, &b1), &cfg).unwrap();
        // refinement gaps in squared-distance units
        let eps = (2.0 * s0.w_est() * e0 + e0 * e0)
            .max(2.0 * s1.w_est() * e1 + e1 * e1)
            .max(2.0 * st.w_est() * et + et * et);
        let rhs = (1.0 - tau) * s0.action + tau * s1.action + 2.0 * eps;
        rhs - st.action
    })
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    assert!(worst >= 0.0, "worst convexity margin {worst:.3e}");
    line(
        "criterion 12 (squared-distance convexity)",
        true,
        &format!("30 quadruples, worst margin {worst:.3e}"),
    );
}
