//! `pclpv` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration or dimension error, 2 infeasible
//! synthesis, 3 numerical failure, 4 validation suite failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pclpv::benchmark::{certify, rerun, run_benchmark, standard_rows, synthesize, table_csv, table_text, Manifest, RowSpec};
use pclpv::config::{Config, Method};
use pclpv::sdp::sdpa;
use pclpv::simulate::{simulate_closed_loop, trajectory_csv};
use pclpv::synthesis::Gain;
use pclpv::validate::{run_suites, Suite, ValidateOptions};
use pclpv::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "pclpv", version, about = "Polynomial-chaos LPV regulator synthesis for the pitch-axis missile")]
struct Cli {
    /// Configuration JSON; the shipped reference configuration when omitted.
    /// `PCLPV_<SECTION>_<KEY>` environment variables override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (synth, simulate) or directory (benchmark).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise one controller and write its gain and manifest.
    Synth(SynthArgs),
    /// Simulate the nonlinear missile under a stored gain.
    Simulate(SimulateArgs),
    /// Build the controller comparison table.
    Benchmark(BenchmarkArgs),
    /// Run the numerical self-check suites.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Defaults to `synthesis.method` from the configuration.
    #[arg(long)]
    method: Option<Method>,
    /// Expansion degree N for pclpv and sclpv.
    #[arg(long)]
    order: Option<usize>,
    /// Sample count for lpv.
    #[arg(long)]
    samples: Option<usize>,
    /// Also write the SDP in SDPA sparse format.
    #[arg(long)]
    sdpa: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    gain: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Comma-separated subset of lti, lpv, pclpv, sclpv.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Re-run the rows and configuration embedded in a manifest.
    #[arg(long)]
    rerun: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Restrict to the named suites (repeatable).
    #[arg(long = "suite")]
    suites: Vec<Suite>,
    /// Monte Carlo samples of the galerkin_mc suite.
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    /// Test hook: relative error injected into the stored basis norms.
    #[arg(long, hide = true, default_value_t = 0.0)]
    perturb_norms: f64,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Infeasible(_) => 2,
        Error::Numerical(_) | Error::Singular { .. } => 3,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> pclpv::Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::parse(pclpv::config::REFERENCE_JSON, std::env::vars())?,
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write(path: &Path, text: &str) -> pclpv::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> pclpv::Result<()> {
    let config = load_config(cli)?;
    let method = args.method.unwrap_or(config.synthesis.method);
    let mut spec = RowSpec::from_config(&config, method);
    if let Some(n) = args.order {
        spec.order = spec.order.map(|_| n);
    }
    if let Some(k) = args.samples {
        spec.samples = spec.samples.map(|_| k);
    }
    let synthesis = synthesize(&config, &spec)?;
    let cert = certify(&config, &spec, &synthesis)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("gain.json"));
    write(&out, &synthesis.gain.to_json()?)?;
    let manifest = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "spec": spec,
        "label": spec.label(),
        "variables": synthesis.variable_count(),
        "solve_seconds": synthesis.solution.solve_seconds,
        "iterations": synthesis.solution.iterations,
        "reduced_accuracy": synthesis.solution.reduced_accuracy,
        "objective": synthesis.objective,
        "certification": cert,
    });
    let manifest_path = out.with_extension("manifest.json");
    write(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;
    if let Some(path) = &args.sdpa {
        write(path, &sdpa::write(&synthesis.problem))?;
    }
    println!("{}: objective {:.6}, {} variables, {:.3} s", spec.label(), synthesis.objective, synthesis.variable_count(), synthesis.solution.solve_seconds);
    println!(
        "certification: sdp residual {:.2e}, decay residual {}, certified {}",
        cert.sdp_residual,
        cert.decay_residual.map_or("inf".into(), |v| format!("{v:.2e}")),
        cert.certified
    );
    println!("wrote {} and {}", out.display(), manifest_path.display());
    Ok(())
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> pclpv::Result<()> {
    let config = load_config(cli)?;
    let text = fs::read_to_string(&args.gain).map_err(|e| Error::Config(format!("{}: {e}", args.gain.display())))?;
    let gain = Gain::from_json(&text)?;
    let sim = &config.simulation;
    let result = simulate_closed_loop(&config.model, &gain, sim.x0, sim.t_final, sim.dt, &config.weights()?, config.range())?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    write(&out, &trajectory_csv(&result))?;
    println!("x0 = [{}, {}], horizon {} s, dt {}", sim.x0[0], sim.x0[1], sim.t_final, sim.dt);
    println!("J = {:.6} diverged={} converged={}", result.j, result.diverged, result.converged);
    println!("wrote {}", out.display());
    Ok(())
}

fn benchmark(cli: &Cli, args: &BenchmarkArgs) -> pclpv::Result<()> {
    let manifest = match &args.rerun {
        Some(path) => {
            let previous = Manifest::from_json(&fs::read_to_string(path)?)?;
            let again = rerun(&previous);
            let drift = previous
                .records
                .iter()
                .zip(&again.records)
                .filter_map(|(a, b)| Some((a.objective? - b.objective?).abs()))
                .fold(0.0, f64::max);
            println!("rerun of {}: max objective drift {drift:.3e}", path.display());
            again
        }
        None => {
            let config = load_config(cli)?;
            let rows: Vec<RowSpec> =
                standard_rows().into_iter().filter(|r| args.methods.is_empty() || args.methods.contains(&r.method)).collect();
            run_benchmark(&config, &rows)
        }
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("benchmark"));
    fs::create_dir_all(dir.join("gains"))?;
    for r in &manifest.records {
        if let Some(g) = &r.gain {
            let name = r.label.split_whitespace().next().unwrap_or("gain").to_lowercase();
            let suffix = r.spec.order.or(r.spec.samples).map_or(String::new(), |v| format!("_{v}"));
            write(&dir.join("gains").join(format!("{name}{suffix}.json")), &g.to_json()?)?;
        }
    }
    let text = table_text(&manifest);
    write(&dir.join("table.txt"), &text)?;
    write(&dir.join("table.csv"), &table_csv(&manifest))?;
    write(&dir.join("manifest.json"), &manifest.to_json()?)?;
    print!("{text}");
    println!("wrote {}", dir.display());
    Ok(())
}

fn validate(cli: &Cli, args: &ValidateArgs) -> pclpv::Result<bool> {
    let seed = match cli.seed {
        Some(s) => s,
        None => load_config(cli)?.seed,
    };
    let options = ValidateOptions { seed, mc_samples: args.mc_samples, norm_perturbation: args.perturb_norms };
    let reports = run_suites(&args.suites, &options);
    for r in &reports {
        println!("{r}");
    }
    if let Some(out) = &cli.out {
        write(out, &serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn run(cli: &Cli) -> pclpv::Result<u8> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth(a) => synth(cli, a).map(|()| 0),
        Command::Simulate(a) => simulate(cli, a).map(|()| 0),
        Command::Benchmark(a) => benchmark(cli, a).map(|()| 0),
        Command::Validate(a) => validate(cli, a).map(|ok| if ok { 0 } else { 4 }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
