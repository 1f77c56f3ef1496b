use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use slp_core::beamform::{db_to_linear, linear_to_db, optimal_beamforming};
use slp_core::channel::{colinearity, ChannelMatrix};
use slp_core::fixtures::{self, REFERENCE_SNR_DB};
use slp_core::modem::Constellation;
use slp_core::sim::{self, ExperimentConfig, Method, RunManifest};
use slp_core::{oracle, slp, slpro};

#[derive(Parser, Debug)]
#[command(name = "slp", version, about = "Symbol-level precoding with constellation rotation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Experiment configuration (JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for result files and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Relative gap at which the rotation search stops.
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct Problem {
    /// Channel file: rows of `[re, im]` pairs, one row per user.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Modulation per user; a single value applies to all users.
    #[arg(long = "mod", value_delimiter = ',')]
    modulations: Vec<String>,
    /// SINR target in dB, shared by all users.
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long = "node-cap")]
    node_cap: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a precoding lookup table and write it as JSON.
    Table {
        #[command(flatten)]
        problem: Problem,
        /// Skip the rotation search and use the unrotated constellations.
        #[arg(long)]
        no_rotate: bool,
    },
    /// Average transmit power against SNR for the configured methods.
    PowerSweep {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Symbol error rate of a lookup-table method under receiver noise.
    Ser {
        #[arg(long, default_value = "SLPRo-symmetry")]
        method: Method,
        #[arg(long = "noise-trials", default_value_t = 10)]
        noise_trials: usize,
        /// Noise standard deviation in units of sigma; 0 sends noiselessly.
        #[arg(long = "noise-scale", default_value_t = 1.0)]
        noise_scale: f64,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Joint rotation and precoding on one channel.
    Rotate {
        #[command(flatten)]
        problem: Problem,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Grid search over rotations on one channel.
    Oracle {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, default_value_t = 2.0)]
        resolution: f64,
        /// Also write the full power landscape as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Median runtime of each method per modulation.
    Bench,
    /// Write the fixed test channel and its reference powers.
    Fixtures {
        /// Recompute the reference powers and compare.
        #[arg(long)]
        check: bool,
        /// Restrict the check to these modulations.
        #[arg(long = "mod", value_delimiter = ',')]
        modulations: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use slp_core::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::Infeasible | E::Solver(_) | E::Factorization(_)) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let g = cli.global;
    match cli.command {
        Command::Table { problem, no_rotate } => table(&g, &problem, !no_rotate),
        Command::PowerSweep { trials } => power_sweep(&g, trials),
        Command::Ser {
            method,
            noise_trials,
            noise_scale,
            trials,
        } => ser(&g, method, noise_trials, noise_scale, trials),
        Command::Rotate { problem, json } => rotate(&g, &problem, json),
        Command::Oracle {
            problem,
            resolution,
            csv,
        } => run_oracle(&g, &problem, resolution, csv),
        Command::Bench => bench(&g),
        Command::Fixtures { check, modulations } => fixtures_cmd(&g, check, &modulations),
    }
}

fn load_config(g: &Global) -> anyhow::Result<Option<ExperimentConfig>> {
    let Some(path) = &g.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(eps) = g.eps {
        cfg.eps = eps;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(Some(cfg))
}

fn require_config(g: &Global) -> anyhow::Result<ExperimentConfig> {
    load_config(g)?.context("this command needs --config")
}

/// Single-channel problem assembled from flags, falling back to the config.
struct Instance {
    h: ChannelMatrix,
    constellations: Vec<Constellation>,
    gamma: Vec<f64>,
    sigma: f64,
    options: slpro::Options,
}

fn instance(g: &Global, p: &Problem) -> anyhow::Result<Instance> {
    let cfg = load_config(g)?;
    let h = match (&p.channel, &cfg) {
        (Some(path), _) => ChannelMatrix::load(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(c)) => c.channel.draw(c.users, c.antennas, c.trial_seed(0))?,
        (None, None) => bail!("give --channel or --config"),
    };
    let k = h.users();
    let names = match (&p.modulations[..], &cfg) {
        ([], Some(c)) => c.modulations.clone(),
        ([], None) => bail!("give --mod"),
        (m, _) => m.to_vec(),
    };
    let constellations: Vec<Constellation> = names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?;
    let constellations = match constellations.len() {
        1 => vec![constellations[0].clone(); k],
        n if n == k => constellations,
        n => bail!("{n} modulations for {k} users"),
    };
    let snr = match (p.snr_db, &cfg) {
        (Some(s), _) => s,
        (None, Some(c)) => c.snr_db[0],
        (None, None) => bail!("give --snr-db"),
    };
    let mut options = cfg.as_ref().map(ExperimentConfig::options).unwrap_or_default();
    if let Some(eps) = g.eps {
        options.eps = eps;
    }
    if let Some(cap) = p.node_cap {
        options.node_cap = cap;
    }
    if !(p.sigma > 0.0) {
        bail!("--sigma must be positive");
    }
    Ok(Instance {
        h,
        constellations,
        gamma: vec![db_to_linear(snr); k],
        sigma: p.sigma,
        options,
    })
}

fn write_out(g: &Global, name: &str, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = &g.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, ensure_newline(contents)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn ensure_newline(s: &str) -> String {
    if s.ends_with('\n') {
        s.to_string()
    } else {
        format!("{s}\n")
    }
}

fn write_manifest(g: &Global, command: &str, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let manifest = RunManifest::new(command, cfg);
    write_out(g, "manifest.json", &serde_json::to_string_pretty(&manifest)?)
}

fn table(g: &Global, p: &Problem, rotate: bool) -> anyhow::Result<ExitCode> {
    let inst = instance(g, p)?;
    let table = slp::lookup_table(&inst.h, &inst.constellations, &inst.gamma, inst.sigma, rotate, &inst.options)?;
    let json = table.to_json()?;
    if g.out.is_some() {
        write_out(g, "table.json", &json)?;
        eprintln!("{} entries, average power {:.4} dB", table.entries.len(), linear_to_db(table.average_power));
    } else {
        println!("{json}");
    }
    Ok(ExitCode::SUCCESS)
}

fn power_sweep(g: &Global, trials: Option<usize>) -> anyhow::Result<ExitCode> {
    let mut cfg = require_config(g)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let result = sim::run_power_sweep(&cfg)?;
    let csv = sim::power_sweep_csv(&result);
    print!("{csv}");
    for (m, s) in &result.timing {
        eprintln!("{m}: {s:.4} s/trial");
    }
    write_out(g, "power_sweep.csv", &csv)?;
    write_out(g, "trials.json", &serde_json::to_string(&result.records)?)?;
    write_manifest(g, "power-sweep", &cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn ser(
    g: &Global,
    method: Method,
    noise_trials: usize,
    noise_scale: f64,
    trials: Option<usize>,
) -> anyhow::Result<ExitCode> {
    let mut cfg = require_config(g)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let rows = sim::run_ser(&cfg, method, noise_trials, noise_scale)?;
    let csv = sim::ser_csv(&rows);
    print!("{csv}");
    write_out(g, "ser.csv", &csv)?;
    write_manifest(g, "ser", &cfg)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct RotateReport {
    theta_deg: Vec<f64>,
    power_db: f64,
    lower_db: f64,
    unrotated_db: f64,
    gap: f64,
    nodes: usize,
    certified: bool,
    rank_defect: f64,
    modulus_defect: f64,
}

fn rotate(g: &Global, p: &Problem, json: bool) -> anyhow::Result<ExitCode> {
    let inst = instance(g, p)?;
    let sol = slpro::solve(&inst.h, &inst.constellations, &inst.gamma, inst.sigma, &inst.options)?;
    let report = RotateReport {
        theta_deg: sol.theta.iter().map(|t| t.to_degrees()).collect(),
        power_db: linear_to_db(sol.upper),
        lower_db: linear_to_db(sol.lower),
        unrotated_db: linear_to_db(sol.unrotated_power),
        gap: sol.gap,
        nodes: sol.nodes,
        certified: sol.certified,
        rank_defect: sol.rank_defect,
        modulus_defect: sol.modulus_defect,
    };
    let text = serde_json::to_string_pretty(&report)?;
    if json {
        println!("{text}");
    } else {
        let angles: Vec<String> = report.theta_deg.iter().map(|t| format!("{t:.4}")).collect();
        println!("theta_deg   {}", angles.join(" "));
        println!("power_db    {:.4}", report.power_db);
        println!("lower_db    {:.4}", report.lower_db);
        println!("unrotated   {:.4}", report.unrotated_db);
        println!("gap         {:.3e}", report.gap);
        println!("nodes       {}", report.nodes);
        println!("certified   {}", report.certified);
    }
    write_out(g, "rotate.json", &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run_oracle(g: &Global, p: &Problem, resolution: f64, csv: bool) -> anyhow::Result<ExitCode> {
    let inst = instance(g, p)?;
    let res = oracle::grid_search(
        &inst.h,
        &inst.constellations,
        &inst.gamma,
        inst.sigma,
        resolution,
        &inst.options.tolerances,
    )?;
    let angles: Vec<String> = res.theta.iter().map(|t| format!("{:.4}", t.to_degrees())).collect();
    println!("theta_deg   {}", angles.join(" "));
    println!("power_db    {:.4}", linear_to_db(res.power));
    println!("points      {}", res.grid.len());
    if csv {
        if g.out.is_some() {
            write_out(g, "oracle.csv", &res.to_csv())?;
        } else {
            print!("{}", res.to_csv());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(g: &Global) -> anyhow::Result<ExitCode> {
    let cfg = require_config(g)?;
    let rows = sim::run_bench(&cfg)?;
    let csv = sim::bench_csv(&rows);
    print!("{csv}");
    write_out(g, "bench.csv", &csv)?;
    write_manifest(g, "bench", &cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn fixtures_cmd(g: &Global, check: bool, only: &[String]) -> anyhow::Result<ExitCode> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("fixtures"));
    let h = fixtures::h_test();
    if !check {
        std::fs::create_dir_all(&dir)?;
        h.save(&dir.join("h_test.json"))?;
        let refs = serde_json::to_string_pretty(&fixtures::reference_powers())?;
        std::fs::write(dir.join("reference_powers.json"), ensure_newline(&refs))?;
        println!("wrote {}", display(&dir));
        return Ok(ExitCode::SUCCESS);
    }

    let gamma = db_to_linear(REFERENCE_SNR_DB);
    let mut options = slpro::Options::default();
    if let Some(eps) = g.eps {
        options.eps = eps;
    }
    let mut mismatches = 0;
    let c = colinearity(h.row(0), h.row(1))?;
    println!("colinearity  {:.4}{:+.4}i", c.re, c.im);
    println!("modulation,method,power_db,reference_db,tolerance_db,ok");
    for r in fixtures::reference_powers() {
        if !only.is_empty() && !only.iter().any(|m| m.eq_ignore_ascii_case(&r.modulation)) {
            continue;
        }
        let k: Constellation = r.modulation.parse()?;
        let ks = [k.clone(), k];
        let power = match r.method.as_str() {
            "OB" => optimal_beamforming(&h, &[gamma; 2], 1.0, &options.tolerances)?.power,
            "SLP" => slp::solve_block_reduced(&h, &ks, &[gamma; 2], 1.0, None, &options.tolerances)?.average_power,
            "SLPRo" => slpro::solve(&h, &ks, &[gamma; 2], 1.0, &options)?.upper,
            other => bail!("unknown reference method {other}"),
        };
        let db = linear_to_db(power);
        let ok = (db - r.power_db).abs() <= r.tolerance_db;
        if !ok {
            mismatches += 1;
        }
        println!("{},{},{db:.4},{},{},{ok}", r.modulation, r.method, r.power_db, r.tolerance_db);
    }
    Ok(if mismatches == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
