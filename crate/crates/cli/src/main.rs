//! Command-line front end: single runs, sweeps, rate tables, and preset
//! listings, with a TOML config file and flag overrides.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use qkdnet::postprocess::{base_rate, cad_rate, cad_throughput, optimize_cad, segmented_rate};
use qkdnet::sim::{run_with_progress, Policy, SimConfig};
use qkdnet::topology::{build_topology, PlacementPreset};
use qkdnet_cli::output::{write_results, Format, OutputRecord};

#[derive(Parser)]
#[command(name = "qkdnet", version, about = "Discrete-round simulator for repeater/trusted-node QKD networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation and print its key rate
    Run(RunArgs),
    /// Run a decoherence x policy x seed grid of simulations
    Sweep(SweepArgs),
    /// Print post-processing rate tables (one-way, segmented demo, CAD grid)
    Rates(RatesArgs),
    /// List placement presets with coordinates and distances
    Presets(PresetsArgs),
}

/// Flags shared by `run` and `sweep`; every flag overrides the config file.
#[derive(Args)]
struct CommonArgs {
    /// TOML config file; field names match the effective config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Placement preset (no-tn, 1tn-ideal, off-center, 2tn-ideal,
    /// 2tn-corner, diag-2-6-4, diag-4-2-6, off-diag, custom)
    #[arg(long)]
    preset: Option<String>,
    /// Inner lattice size S
    #[arg(long)]
    size: Option<u8>,
    /// Link length in km
    #[arg(long)]
    link_km: Option<f64>,
    /// Fiber loss coefficient in dB/km
    #[arg(long)]
    alpha: Option<f64>,
    /// Explicit link success probability (bypasses alpha)
    #[arg(long)]
    p: Option<f64>,
    /// Bell-state-measurement success probability R
    #[arg(long)]
    swap_prob: Option<f64>,
    /// Network rounds per run
    #[arg(long)]
    rounds: Option<u64>,
    /// Surplus tolerance sigma
    #[arg(long)]
    sigma: Option<f64>,
    /// Near-minimum tolerance delta
    #[arg(long)]
    delta: Option<f64>,
    /// Distance filter fraction theta
    #[arg(long)]
    theta: Option<f64>,
    /// Distill each path-length class separately
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    segmenting: Option<bool>,
    /// Apply CAD with the optimal block size
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    cad: Option<bool>,
    /// Largest CAD level searched
    #[arg(long)]
    cad_max: Option<u32>,
    /// Rounds between priority recomputations
    #[arg(long)]
    cadence: Option<u64>,
    /// Write result records to this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or json
    #[arg(long, default_value = "csv")]
    format: String,
    /// Log progress every thousand rounds
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Routing policy: static or dynamic
    #[arg(long)]
    policy: Option<String>,
    /// Per-link decoherence probability D
    #[arg(long)]
    decoherence: Option<f64>,
    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Decoherence grid (comma-separated)
    #[arg(long, value_delimiter = ',')]
    decoherence: Vec<f64>,
    /// Policies to sweep (comma-separated)
    #[arg(long, value_delimiter = ',', default_value = "static,dynamic")]
    policies: Vec<String>,
    /// Seeds to sweep (comma-separated)
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Parallel workers (default: all processors)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RatesArgs {
    /// Largest CAD level tabulated
    #[arg(long, default_value_t = 4)]
    cad_max: u32,
}

#[derive(Args)]
struct PresetsArgs {
    /// Inner lattice size S
    #[arg(long, default_value_t = 7)]
    size: u8,
}

enum CliError {
    /// Bad configuration: exit code 1.
    Config(String),
    /// I/O or execution failure: exit code 2.
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Rates(args) => cmd_rates(args),
        Command::Presets(args) => cmd_presets(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, CliError> {
    let Some(path) = path else {
        return Ok(SimConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))
}

fn apply_common(cfg: &mut SimConfig, args: &CommonArgs) -> Result<(), CliError> {
    if let Some(preset) = &args.preset {
        cfg.preset = preset.clone();
    }
    if let Some(size) = args.size {
        cfg.size = size;
    }
    if let Some(km) = args.link_km {
        cfg.link_km = km;
    }
    if let Some(alpha) = args.alpha {
        cfg.alpha = alpha;
    }
    if let Some(p) = args.p {
        cfg.p_override = Some(p);
    }
    if let Some(r) = args.swap_prob {
        cfg.swap_prob = r;
    }
    if let Some(rounds) = args.rounds {
        cfg.rounds = rounds;
    }
    if let Some(sigma) = args.sigma {
        cfg.sigma = sigma;
    }
    if let Some(delta) = args.delta {
        cfg.delta = delta;
    }
    if let Some(theta) = args.theta {
        cfg.theta = theta;
    }
    if let Some(seg) = args.segmenting {
        cfg.segmenting = seg;
    }
    if let Some(cad) = args.cad {
        cfg.cad = cad;
    }
    if let Some(cad_max) = args.cad_max {
        cfg.cad_max = cad_max;
    }
    if let Some(cadence) = args.cadence {
        cfg.priority_cadence = cadence;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

fn parse_policy(name: &str) -> Result<Policy, CliError> {
    name.parse::<Policy>().map_err(|e| CliError::Config(e.to_string()))
}

fn emit(records: &[OutputRecord], out: Option<&Path>, format: &str) -> Result<(), CliError> {
    let format: Format = format.parse().map_err(CliError::Config)?;
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .map_err(|e| CliError::Runtime(format!("output file {}: {e}", path.display())))?;
            write_results(records, &mut file, format)
                .map_err(|e| CliError::Runtime(format!("output file {}: {e}", path.display())))
        }
        None => {
            let stdout = std::io::stdout();
            write_results(records, &mut stdout.lock(), format)
                .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common)?;
    if let Some(policy) = &args.policy {
        cfg.policy = parse_policy(policy)?;
    }
    if let Some(d) = args.decoherence {
        cfg.decoherence = d;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let verbose = args.common.verbose;
    let total = cfg.rounds;
    let started = Instant::now();
    let result = run_with_progress(&cfg, |round| {
        if verbose {
            eprintln!("round {round}/{total}");
        }
    })
    .map_err(|e| CliError::Config(e.to_string()))?;
    let runtime_ms = started.elapsed().as_millis() as u64;

    println!("key_rate={}", result.key_rate);
    if args.common.out.is_some() {
        let records = vec![OutputRecord::new(&result, runtime_ms)];
        emit(&records, args.common.out.as_deref(), &args.common.format)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut base = load_config(args.common.config.as_deref())?;
    apply_common(&mut base, &args.common)?;
    let policies: Vec<Policy> = args
        .policies
        .iter()
        .map(|p| parse_policy(p))
        .collect::<Result<_, _>>()?;
    if policies.is_empty() || args.seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one policy and one seed".into()));
    }
    let d_values = if args.decoherence.is_empty() {
        qkdnet::sim::default_decoherence_grid()
    } else {
        args.decoherence.clone()
    };

    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
    }

    let mut configs = Vec::new();
    for &d in &d_values {
        for &policy in &policies {
            for &seed in &args.seeds {
                let mut cfg = base.clone();
                cfg.decoherence = d;
                cfg.policy = policy;
                cfg.seed = seed;
                cfg.validate().map_err(|e| {
                    CliError::Config(format!("D={d} policy={policy} seed={seed}: {e}"))
                })?;
                configs.push(cfg);
            }
        }
    }
    let records: Vec<OutputRecord> = configs
        .par_iter()
        .map(|cfg| {
            let started = Instant::now();
            qkdnet::sim::run(cfg).map(|result| {
                OutputRecord::new(&result, started.elapsed().as_millis() as u64)
            })
        })
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    emit(&records, args.common.out.as_deref(), &args.common.format)
}

fn cmd_rates(args: RatesArgs) -> Result<(), CliError> {
    if args.cad_max == 0 {
        return Err(CliError::Config("cad_max must be at least 1".into()));
    }
    println!("one-way and CAD rates per sifted bit (rate = per surviving bit, tput = per input bit)");
    let mut header = format!("{:>6} {:>9}", "Q", "base");
    for c in 1..=args.cad_max {
        header.push_str(&format!(" {:>9} {:>9}", format!("C={c} rate"), format!("C={c} tput")));
    }
    header.push_str(&format!(" {:>4}", "C*"));
    println!("{header}");
    for step in 0..=20 {
        let q = step as f64 * 0.01;
        let mut row = format!("{:>6.2} {:>9.4}", q, base_rate(q));
        for c in 1..=args.cad_max {
            row.push_str(&format!(" {:>9.4} {:>9.4}", cad_rate(q, c), cad_throughput(q, c)));
        }
        let (best, _) = optimize_cad(q, args.cad_max);
        row.push_str(&format!(" {:>4}", best));
        println!("{row}");
    }

    println!();
    println!("segmenting demo: 75% of a pool at Q=0.04 plus 25% at Q=0.10");
    let pooled = base_rate(0.055);
    let segmented = segmented_rate(&[(0.75, 0.04), (0.25, 0.10)])
        .expect("demo partition is valid");
    println!("  pooled (Q_avg=0.055): {pooled:.4}");
    println!("  segmented:            {segmented:.4} ({:+.1}%)", (segmented / pooled - 1.0) * 100.0);
    Ok(())
}

fn cmd_presets(args: PresetsArgs) -> Result<(), CliError> {
    println!("placement presets for S={} ({}x{} grid)", args.size, args.size + 2, args.size + 2);
    for preset in PlacementPreset::named() {
        match build_topology(args.size, &preset, 1.0) {
            Ok(topo) => {
                let n = topo.terminal_count() as u8;
                let tns: Vec<String> = (1..n - 1).map(|t| topo.terminal_pos(t).to_string()).collect();
                let chain: Vec<String> = (0..n - 1)
                    .map(|i| {
                        format!(
                            "{}-{}={}",
                            topo.terminal_label(i),
                            topo.terminal_label(i + 1),
                            topo.terminal_distance(i, i + 1)
                        )
                    })
                    .collect();
                println!(
                    "  {:<12} TNs: {:<18} {}",
                    preset.name(),
                    if tns.is_empty() { "-".to_string() } else { tns.join(" ") },
                    chain.join(" ")
                );
            }
            Err(e) => println!("  {:<12} unavailable: {e}", preset.name()),
        }
    }
    Ok(())
}
