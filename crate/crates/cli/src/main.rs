//! Command-line front end: chain ingestion, computation dispatch, and
//! machine-readable report emission.
//!
//! Every headline number in a report is tagged with its provenance
//! (`certified`, `estimated`, `sampled`, `exact`, or `exact-spectral`).
//! JSON is the canonical output; CSV is a flat projection of the same data.
//! Output is byte-identical across runs for identical input, config, and
//! seed.
//!
//! Exit codes: 0 success; 1 validation error (the error name goes to
//! stderr); 2 solver non-convergence, with the partial artifact still
//! written and flagged.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

use entropic_ricci::analysis::{self, HeatKernel, InequalityReport, LadderConfig};
use entropic_ricci::chain::{Builtin, Density, MarkovChain};
use entropic_ricci::curvature::{self, certify_builtin, Provenance, RicciConfig};
use entropic_ricci::geodesics::{self, ShootConfig};
use entropic_ricci::mapping::MappingRepresentation;
use entropic_ricci::mean::theta_constant_c;
use entropic_ricci::transport::{
    solve_w_refined, total_variation, wasserstein, Metric, PathJson, SolverConfig,
};

#[derive(Parser)]
#[command(
    name = "entropic-ricci",
    about = "Transport metric, curvature bounds, and functional inequalities for finite reversible Markov chains",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ChainSource {
    /// Built-in family: complete:n | cycle:n | hypercube:n | twopoint:p,q | torus:c1xc2x...
    #[arg(long, conflicts_with = "input")]
    builtin: Option<String>,
    /// Chain JSON file: { "states": [...], "kernel": [[...]], "pi": [...] }
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct OutputOpts {
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json (canonical) or csv (flat projection).
    #[arg(long, default_value = "json")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, clap::ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a chain and print its summary.
    Chain {
        #[command(flatten)]
        source: ChainSource,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Transport distance between two densities, with the comparison table
    /// against total variation and the coupling distances.
    Distance {
        #[command(flatten)]
        source: ChainSource,
        /// dirac:<state>, uniform, inline JSON vector, or a file path.
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Time-grid intervals.
        #[arg(long, default_value_t = 32)]
        grid: usize,
        /// Solver stopping tolerance.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Geodesic between two densities: the convex-solver path, optionally
    /// cross-checked by ODE shooting on interior endpoints.
    Geodesic {
        #[command(flatten)]
        source: ChainSource,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// Also solve the boundary-value problem by shooting.
        #[arg(long)]
        shoot: bool,
        /// RK4 steps for the shot trajectory.
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Curvature report: certified bound first, optional estimation and
    /// sampling falsification.
    Curvature {
        #[command(flatten)]
        source: ChainSource,
        /// Run the multi-start minimization of B/A.
        #[arg(long)]
        estimate: bool,
        #[arg(long, default_value_t = 64)]
        restarts: usize,
        /// Random (rho, psi) samples for the falsification pass (0 disables).
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Curvature to test in the sampling pass (defaults to the certified
        /// bound, or the estimate when certification is unavailable).
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Functional-inequality ladder for a chain with certified curvature.
    Inequalities {
        #[command(flatten)]
        source: ChainSource,
        /// Certified curvature lower bound (used as the MLSI/Talagrand
        /// constant).
        #[arg(long)]
        kappa: f64,
        /// Density samples for the cheap checks.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Full pipeline: chain summary, curvature, spectral gap, inequalities,
    /// and (with --from/--to) a distance section.
    Report {
        #[command(flatten)]
        source: ChainSource,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// Density samples for the inequality checks.
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
}

/// A value with its provenance tag.
#[derive(Serialize)]
struct Tagged {
    value: f64,
    provenance: &'static str,
}

impl Tagged {
    fn certified(value: f64) -> Self {
        Tagged { value, provenance: "certified" }
    }
    fn estimated(value: f64) -> Self {
        Tagged { value, provenance: "estimated" }
    }
    fn sampled(value: f64) -> Self {
        Tagged { value, provenance: "sampled" }
    }
    fn exact(value: f64) -> Self {
        Tagged { value, provenance: "exact" }
    }
    fn spectral(value: f64) -> Self {
        Tagged { value, provenance: "exact-spectral" }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("ENTROPIC_RICCI_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            entropic_ricci::parallel::configure_threads(n.max(1));
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

fn load_chain(source: &ChainSource) -> Result<(MarkovChain, Option<Builtin>), String> {
    match (&source.builtin, &source.input) {
        (Some(spec), None) => {
            let b = Builtin::parse(spec).map_err(|e| e.to_string())?;
            let chain = b.chain().map_err(|e| e.to_string())?;
            Ok((chain, Some(b)))
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("BadSpec: cannot read {}: {e}", path.display()))?;
            let chain = MarkovChain::from_json_str(&text).map_err(|e| e.to_string())?;
            Ok((chain, None))
        }
        _ => Err("BadSpec: provide exactly one of --builtin or --input".into()),
    }
}

fn parse_density(chain: &MarkovChain, spec: &str) -> Result<Density, String> {
    if spec == "uniform" {
        return Ok(chain.stationary_density());
    }
    if let Some(state) = spec.strip_prefix("dirac:") {
        let idx = chain
            .index_of(state)
            .or_else(|| state.parse::<usize>().ok().filter(|&i| i < chain.n()))
            .ok_or_else(|| format!("BadSpec: unknown state {state:?}"))?;
        return Ok(chain.dirac(idx));
    }
    let text = if spec.trim_start().starts_with('[') {
        spec.to_string()
    } else {
        std::fs::read_to_string(spec).map_err(|e| format!("BadSpec: cannot read {spec}: {e}"))?
    };
    let values: Vec<f64> =
        serde_json::from_str(&text).map_err(|e| format!("BadSpec: density: {e}"))?;
    chain.density_from_vec(values).map_err(|e| e.to_string())
}

fn emit(output: &OutputOpts, json: String, csv: String) -> Result<(), String> {
    let body = match output.format {
        Format::Json => json,
        Format::Csv => csv,
    };
    match &output.out {
        Some(path) => std::fs::write(path, body).map_err(|e| format!("IoError: {e}")),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization")
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Chain { source, output } => cmd_chain(&source, &output),
        Command::Distance {
            source,
            from,
            to,
            grid,
            tol,
            seed,
            output,
        } => cmd_distance(&source, &from, &to, grid, tol, seed, &output),
        Command::Geodesic {
            source,
            from,
            to,
            grid,
            tol,
            shoot,
            steps,
            seed,
            output,
        } => cmd_geodesic(&source, &from, &to, grid, tol, shoot, steps, seed, &output),
        Command::Curvature {
            source,
            estimate,
            restarts,
            samples,
            kappa,
            seed,
            output,
        } => cmd_curvature(&source, estimate, restarts, samples, kappa, seed, &output),
        Command::Inequalities {
            source,
            kappa,
            samples,
            grid,
            tol,
            seed,
            output,
        } => cmd_inequalities(&source, kappa, samples, grid, tol, seed, &output),
        Command::Report {
            source,
            kappa,
            from,
            to,
            grid,
            tol,
            samples,
            seed,
            output,
        } => cmd_report(&source, kappa, from, to, grid, tol, samples, seed, &output),
    }
}

#[derive(Serialize)]
struct ChainSummary {
    states: usize,
    labels: Vec<String>,
    pi: Vec<f64>,
    reversibility_residual: f64,
    diameter: u32,
    min_edge_rate: f64,
    edges: usize,
}

fn chain_summary(chain: &MarkovChain) -> ChainSummary {
    ChainSummary {
        states: chain.n(),
        labels: chain.states().to_vec(),
        pi: chain.pi().iter().cloned().collect(),
        reversibility_residual: chain.reversibility_residual(),
        diameter: chain.diameter(),
        min_edge_rate: chain.min_edge_rate(),
        edges: chain.edges().len(),
    }
}

fn cmd_chain(source: &ChainSource, output: &OutputOpts) -> Result<ExitCode, String> {
    let (chain, _) = load_chain(source)?;
    let summary = chain_summary(&chain);
    let mut csv = String::from("key,value\n");
    csv.push_str(&format!("states,{}\n", summary.states));
    csv.push_str(&format!("edges,{}\n", summary.edges));
    csv.push_str(&format!("diameter,{}\n", summary.diameter));
    csv.push_str(&format!(
        "reversibility_residual,{:e}\n",
        summary.reversibility_residual
    ));
    csv.push_str(&format!("min_edge_rate,{}\n", summary.min_edge_rate));
    for (i, p) in summary.pi.iter().enumerate() {
        csv.push_str(&format!("pi[{i}],{p}\n"));
    }
    emit(output, to_json(&summary), csv)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DistanceReport {
    w_est: Tagged,
    w_est_coarse: Tagged,
    /// Refinement gap between the half grid and the full grid.
    eps_n: Tagged,
    d_tv: Tagged,
    w1_graph: Tagged,
    w2_graph: Tagged,
    /// Lower-bound chain: d_tv/sqrt(2) <= sqrt(2) w1 <= W.
    lower_tv: Tagged,
    lower_w1: Tagged,
    /// Upper bound (c/sqrt(k)) w2.
    upper_w2: Tagged,
    sandwich_ok: bool,
    constant_c: Tagged,
    min_edge_rate: f64,
    converged: bool,
    path: PathJson,
}

fn cmd_distance(
    source: &ChainSource,
    from: &str,
    to: &str,
    grid: usize,
    tol: f64,
    _seed: u64,
    output: &OutputOpts,
) -> Result<ExitCode, String> {
    let (chain, _) = load_chain(source)?;
    let rho0 = parse_density(&chain, from)?;
    let rho1 = parse_density(&chain, to)?;
    let config = SolverConfig {
        grid,
        tol,
        ..Default::default()
    };
    let (fine, eps_n) =
        solve_w_refined(&chain, &rho0, &rho1, &config).map_err(|e| e.to_string())?;
    let w = fine.w_est();
    let d_tv = total_variation(&chain, &rho0, &rho1);
    let w1 = wasserstein(&chain, &rho0, &rho1, &Metric::Graph, 1).map_err(|e| e.to_string())?;
    let w2 = wasserstein(&chain, &rho0, &rho1, &Metric::Graph, 2).map_err(|e| e.to_string())?;
    let c = theta_constant_c().map_err(|e| e.to_string())?;
    let k = chain.min_edge_rate();
    let lower_tv = d_tv / std::f64::consts::SQRT_2;
    let lower_w1 = std::f64::consts::SQRT_2 * w1;
    let upper_w2 = c / k.sqrt() * w2;
    let sandwich_ok = lower_tv <= lower_w1 + 1e-12
        && lower_w1 <= w + eps_n + 1e-12
        && w <= upper_w2 + eps_n + 1e-12;
    let report = DistanceReport {
        w_est: Tagged::estimated(w),
        w_est_coarse: Tagged::estimated((w - eps_n).max(0.0)),
        eps_n: Tagged::estimated(eps_n),
        d_tv: Tagged::exact(d_tv),
        w1_graph: Tagged::exact(w1),
        w2_graph: Tagged::exact(w2),
        lower_tv: Tagged::exact(lower_tv),
        lower_w1: Tagged::exact(lower_w1),
        upper_w2: Tagged::certified(upper_w2),
        sandwich_ok,
        constant_c: Tagged::exact(c),
        min_edge_rate: k,
        converged: fine.converged,
        path: fine.to_json(),
    };
    let mut csv = String::from("quantity,value,provenance\n");
    for (name, t) in [
        ("w_est", &report.w_est),
        ("eps_n", &report.eps_n),
        ("d_tv", &report.d_tv),
        ("w1_graph", &report.w1_graph),
        ("w2_graph", &report.w2_graph),
        ("lower_tv", &report.lower_tv),
        ("lower_w1", &report.lower_w1),
        ("upper_w2", &report.upper_w2),
        ("constant_c", &report.constant_c),
    ] {
        csv.push_str(&format!("{name},{},{}\n", t.value, t.provenance));
    }
    let converged = report.converged;
    emit(output, to_json(&report), csv)?;
    Ok(if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[derive(Serialize)]
struct GeodesicReport {
    path: PathJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    shot: Option<Vec<geodesics::TrajectoryPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shoot_w: Option<Tagged>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shoot_error: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_geodesic(
    source: &ChainSource,
    from: &str,
    to: &str,
    grid: usize,
    tol: f64,
    do_shoot: bool,
    steps: usize,
    _seed: u64,
    output: &OutputOpts,
) -> Result<ExitCode, String> {
    let (chain, _) = load_chain(source)?;
    let rho0 = parse_density(&chain, from)?;
    let rho1 = parse_density(&chain, to)?;
    let config = SolverConfig {
        grid,
        tol,
        ..Default::default()
    };
    let path =
        entropic_ricci::transport::solve_w(&chain, &rho0, &rho1, &config).map_err(|e| e.to_string())?;
    let mut shot = None;
    let mut shoot_w = None;
    let mut shoot_error = None;
    if do_shoot {
        let shoot_cfg = ShootConfig {
            steps,
            init: geodesics::ShootInit::Solver(config.clone()),
            ..Default::default()
        };
        // shooting failure falls back to the solver path, already reported
        match geodesics::shoot(&chain, &rho0, &rho1, &shoot_cfg) {
            Ok(res) => {
                shoot_w = Some(Tagged::estimated(res.action.sqrt()));
                shot = Some(geodesics::trajectory_json(&chain, &res.trajectory));
            }
            Err(e) => shoot_error = Some(e.to_string()),
        }
    }
    let mut csv = String::from("time,state,rho\n");
    for (k, t) in path.times.iter().enumerate() {
        for x in 0..chain.n() {
            csv.push_str(&format!("{t},{x},{}\n", path.densities[k].values()[x]));
        }
    }
    let converged = path.converged;
    let report = GeodesicReport {
        path: path.to_json(),
        shot,
        shoot_w,
        shoot_error,
    };
    emit(output, to_json(&report), csv)?;
    Ok(if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[derive(Serialize)]
struct CurvatureCli {
    #[serde(skip_serializing_if = "Option::is_none")]
    certified: Option<CertifiedJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimated: Option<EstimateJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampled: Option<SampledJson>,
}

#[derive(Serialize)]
struct CertifiedJson {
    kappa: Tagged,
    provenance: Provenance,
}

#[derive(Serialize)]
struct EstimateJson {
    kappa: Tagged,
    restarts: usize,
    converged_restarts: usize,
    spread: f64,
    on_floor: bool,
    argmin_rho: Vec<f64>,
    argmin_psi: Vec<f64>,
}

#[derive(Serialize)]
struct SampledJson {
    kappa_tested: Tagged,
    samples: usize,
    min_margin: Tagged,
    violations: usize,
}

fn cmd_curvature(
    source: &ChainSource,
    estimate: bool,
    restarts: usize,
    samples: usize,
    kappa_override: Option<f64>,
    seed: u64,
    output: &OutputOpts,
) -> Result<ExitCode, String> {
    let (chain, b) = load_chain(source)?;
    let certified = match &b {
        Some(b) => certify_builtin(b, &chain),
        None => {
            let rep = MappingRepresentation::transpositions(&chain);
            curvature::criterion_bound(&chain, &rep)
        }
    };
    let estimated = if estimate {
        let cfg = RicciConfig {
            restarts,
            seed,
            ..Default::default()
        };
        Some(curvature::ricci_estimate(&chain, &cfg).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let kappa_test = kappa_override
        .or(certified.map(|c| c.kappa))
        .or(estimated.as_ref().map(|e| e.kappa));
    let sampled = match kappa_test {
        Some(k) if samples > 0 => Some(curvature::sample_min_margin(
            &chain, k, samples, seed, 1e-6,
        )),
        _ => None,
    };
    if let (Some(c), Some(e)) = (&certified, &estimated) {
        // certified bounds can never exceed the estimated infimum
        if c.kappa > e.kappa + 1e-6 {
            eprintln!(
                "warning: certified {} exceeds estimated {}; optimizer likely stuck",
                c.kappa, e.kappa
            );
        }
    }
    let report = CurvatureCli {
        certified: certified.map(|c| CertifiedJson {
            kappa: Tagged::certified(c.kappa),
            provenance: c.provenance,
        }),
        estimated: estimated.map(|e| EstimateJson {
            kappa: Tagged::estimated(e.kappa),
            restarts: e.restarts,
            converged_restarts: e.converged_restarts,
            spread: e.spread,
            on_floor: e.on_floor,
            argmin_rho: e.argmin_rho,
            argmin_psi: e.argmin_psi,
        }),
        sampled: sampled.map(|s| SampledJson {
            kappa_tested: Tagged::sampled(s.kappa_tested),
            samples: s.samples,
            min_margin: Tagged::sampled(s.min_margin),
            violations: s.violations,
        }),
    };
    let mut csv = String::from("quantity,value,provenance\n");
    if let Some(c) = &report.certified {
        csv.push_str(&format!("kappa_certified,{},certified\n", c.kappa.value));
    }
    if let Some(e) = &report.estimated {
        csv.push_str(&format!("kappa_estimated,{},estimated\n", e.kappa.value));
    }
    if let Some(s) = &report.sampled {
        csv.push_str(&format!("sampled_min_margin,{},sampled\n", s.min_margin.value));
        csv.push_str(&format!("sampled_violations,{},sampled\n", s.violations));
    }
    emit(output, to_json(&report), csv)?;
    Ok(ExitCode::SUCCESS)
}

fn ladder_csv(report: &InequalityReport) -> String {
    let mut csv = String::from("check,sample,lhs,rhs,margin\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.check, row.sample, row.lhs, row.rhs, row.margin
        ));
    }
    csv
}

fn cmd_inequalities(
    source: &ChainSource,
    kappa: f64,
    samples: usize,
    grid: usize,
    tol: f64,
    seed: u64,
    output: &OutputOpts,
) -> Result<ExitCode, String> {
    let (chain, _) = load_chain(source)?;
    let config = LadderConfig {
        densities: samples,
        seed,
        solver: SolverConfig {
            grid,
            tol,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = analysis::verify_ladder(&chain, kappa, &config).map_err(|e| e.to_string())?;
    let failed = !report.all_passed();
    emit(output, to_json(&report), ladder_csv(&report))?;
    Ok(if failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Serialize)]
struct FullReport {
    chain: ChainSummary,
    constant_c: Tagged,
    poincare_lambda: Tagged,
    curvature: CurvatureCli,
    inequalities: Option<InequalityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<DistanceSection>,
}

#[derive(Serialize)]
struct DistanceSection {
    from: String,
    to: String,
    w_est: Tagged,
    eps_n: Tagged,
    d_tv: Tagged,
    w1_graph: Tagged,
    w2_graph: Tagged,
}

#[allow(clippy::too_many_arguments)]
fn cmd_report(
    source: &ChainSource,
    kappa_override: Option<f64>,
    from: Option<String>,
    to: Option<String>,
    grid: usize,
    tol: f64,
    samples: usize,
    seed: u64,
    output: &OutputOpts,
) -> Result<ExitCode, String> {
    let (chain, b) = load_chain(source)?;
    let certified = match &b {
        Some(b) => certify_builtin(b, &chain),
        None => curvature::criterion_bound(
            &chain,
            &MappingRepresentation::transpositions(&chain),
        ),
    };
    let heat = HeatKernel::new(&chain).map_err(|e| e.to_string())?;
    let gap = heat.poincare_lambda();
    let kappa = kappa_override.or(certified.map(|c| c.kappa));
    let sampled = kappa.map(|k| curvature::sample_min_margin(&chain, k, 20_000, seed, 1e-6));
    let inequalities = match kappa {
        Some(k) if k > 0.0 => {
            let config = LadderConfig {
                densities: samples,
                seed,
                w_pairs: 12,
                evi_pairs: 3,
                contraction_pairs: 3,
                metric_derivative_pairs: 3,
                lipschitz: 50,
                solver: SolverConfig {
                    grid,
                    tol,
                    ..Default::default()
                },
                keep_rows: false,
                ..Default::default()
            };
            Some(analysis::verify_ladder(&chain, k, &config).map_err(|e| e.to_string())?)
        }
        _ => None,
    };
    let distance = match (&from, &to) {
        (Some(f), Some(t)) => {
            let rho0 = parse_density(&chain, f)?;
            let rho1 = parse_density(&chain, t)?;
            let config = SolverConfig {
                grid,
                tol,
                ..Default::default()
            };
            let (fine, eps_n) =
                solve_w_refined(&chain, &rho0, &rho1, &config).map_err(|e| e.to_string())?;
            Some(DistanceSection {
                from: f.clone(),
                to: t.clone(),
                w_est: Tagged::estimated(fine.w_est()),
                eps_n: Tagged::estimated(eps_n),
                d_tv: Tagged::exact(total_variation(&chain, &rho0, &rho1)),
                w1_graph: Tagged::exact(
                    wasserstein(&chain, &rho0, &rho1, &Metric::Graph, 1)
                        .map_err(|e| e.to_string())?,
                ),
                w2_graph: Tagged::exact(
                    wasserstein(&chain, &rho0, &rho1, &Metric::Graph, 2)
                        .map_err(|e| e.to_string())?,
                ),
            })
        }
        _ => None,
    };
    let all_passed = inequalities.as_ref().map_or(true, |r| r.all_passed());
    let report = FullReport {
        chain: chain_summary(&chain),
        constant_c: Tagged::exact(theta_constant_c().map_err(|e| e.to_string())?),
        poincare_lambda: Tagged::spectral(gap),
        curvature: CurvatureCli {
            certified: certified.map(|c| CertifiedJson {
                kappa: Tagged::certified(c.kappa),
                provenance: c.provenance,
            }),
            estimated: None,
            sampled: sampled.map(|s| SampledJson {
                kappa_tested: Tagged::sampled(s.kappa_tested),
                samples: s.samples,
                min_margin: Tagged::sampled(s.min_margin),
                violations: s.violations,
            }),
        },
        inequalities,
        distance,
    };
    let mut csv = String::from("quantity,value,provenance\n");
    csv.push_str(&format!("constant_c,{},exact\n", report.constant_c.value));
    csv.push_str(&format!(
        "poincare_lambda,{},exact-spectral\n",
        report.poincare_lambda.value
    ));
    if let Some(c) = &report.curvature.certified {
        csv.push_str(&format!("kappa_certified,{},certified\n", c.kappa.value));
    }
    if let Some(ineq) = &report.inequalities {
        csv.push_str(&format!(
            "mlsi_lambda_est,{},sampled\n",
            ineq.mlsi_lambda_est
        ));
        for check in &ineq.checks {
            csv.push_str(&format!(
                "check_{}_min_margin,{},sampled\n",
                check.name, check.min_margin
            ));
        }
    }
    emit(output, to_json(&report), csv)?;
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
