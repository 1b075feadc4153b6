use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dfl::error::{Error, Result};
use dfl::geometry::{enumerate_links, trace_pathways, write_pathways_csv};
use dfl::harness::{run_scenario, run_sweep, Config, SweepSection, SweepVariable};
use dfl::protocol::{build_plan, build_switch_schedule, simulate_round};
use dfl::tune::tune_scenario;

/// Multipath radio tomographic imaging for device-free localization.
#[derive(Parser)]
#[command(name = "dfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace pathways of every link and write them as CSV.
    Trace(Common),
    /// Localize every configured target position.
    Run(Common),
    /// Repeat the run over the values of a sweep variable.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides the [sweep] variable: num_nodes, num_elements or max_order.
        #[arg(long, value_parser = parse_variable)]
        variable: Option<SweepVariable>,
        /// Overrides the [sweep] values, comma separated.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
    },
    /// Bayesian optimization of alpha and gamma on the calibration set.
    Tune(Common),
    /// Simulate one measurement round of the sounding protocol.
    Protocol(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Highest reflection order used for imaging.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["0", "2"]))]
    max_order: Option<String>,
}

fn parse_variable(s: &str) -> std::result::Result<SweepVariable, String> {
    match s {
        "num_nodes" => Ok(SweepVariable::NumNodes),
        "num_elements" => Ok(SweepVariable::NumElements),
        "max_order" => Ok(SweepVariable::MaxOrder),
        _ => Err(format!("unknown sweep variable {s:?}")),
    }
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
            cfg.tune.seed = seed;
        }
        if let Some(order) = &self.max_order {
            cfg.rti.max_order = Some(order.parse().expect("validated by clap"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(out: &Option<PathBuf>) -> Result<Option<&Path>> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    Ok(out.as_deref())
}

fn trace(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let scene = cfg.scene()?;
    let order = cfg.rti.max_order.unwrap_or(cfg.channel.max_order);
    let mut paths = Vec::new();
    for link in &enumerate_links(&scene)?.links {
        paths.extend(trace_pathways(&scene, link, order)?);
    }
    match output(&common.out)? {
        Some(dir) => {
            let mut f = BufWriter::new(fs::File::create(dir.join("pathways.csv"))?);
            write_pathways_csv(&mut f, &paths)?;
            f.flush()?;
            eprintln!("{} pathways written to {}", paths.len(), dir.join("pathways.csv").display());
        }
        None => write_pathways_csv(io::stdout().lock(), &paths)?,
    }
    Ok(())
}

fn run(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let result = run_scenario(&cfg, output(&common.out)?)?;
    println!(
        "positions {} errors {} mean {:.3} m median {:.3} m below 1 m {:.3}",
        result.outcomes.len(),
        result.errors.len(),
        result.mean(),
        result.median(),
        result.fraction_below(1.0)
    );
    Ok(())
}

fn sweep(common: &Common, variable: Option<SweepVariable>, values: Option<Vec<usize>>) -> Result<()> {
    let cfg = common.load()?;
    let mut spec = cfg.sweep.clone().unwrap_or(SweepSection { variable: SweepVariable::NumNodes, values: Vec::new() });
    if let Some(v) = variable {
        spec.variable = v;
    }
    if let Some(v) = values {
        spec.values = v;
    }
    let name = dfl::harness::variable_name(spec.variable);
    for (value, r) in run_sweep(&cfg, &spec, output(&common.out)?)? {
        println!("{name} {value}: mean {:.3} m median {:.3} m below 1 m {:.3}", r.mean(), r.median(), r.fraction_below(1.0));
    }
    Ok(())
}

fn tune(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let outcome = tune_scenario(&cfg, output(&common.out)?)?;
    println!(
        "evaluations {} best mean error {:.3} m at alpha {:.4} gamma {:.4} threshold {:.3}; configured parameters give {:.3} m",
        outcome.trace.len(),
        outcome.trace.best_value(),
        outcome.best.alpha,
        outcome.best.gamma,
        outcome.best.threshold,
        outcome.baseline
    );
    Ok(())
}

fn protocol(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let nodes = cfg.nodes()?;
    let elements = nodes.iter().map(|n| n.num_elements).max().unwrap_or(1);
    let schedule = build_switch_schedule(elements, elements, cfg.protocol.symbol_length)?;
    let plan = build_plan(nodes.len(), &cfg.protocol)?;
    let log = simulate_round(&plan, &schedule, &cfg.protocol.latency, cfg.run.seed)?;
    let violations = log.violations();
    if let Some(dir) = output(&common.out)? {
        fs::write(dir.join("plan.txt"), plan.to_text())?;
        let mut f = BufWriter::new(fs::File::create(dir.join("events.csv"))?);
        log.write_csv(&mut f)?;
        f.flush()?;
    } else {
        print!("{}", plan.to_text());
    }
    println!(
        "snapshot {:.2} us, {} phases, {} links, {} events, round {:.3} s",
        schedule.snapshot_duration() * 1e6,
        plan.phases.len(),
        plan.links().len(),
        log.events.len(),
        log.round_duration()
    );
    if !violations.is_empty() {
        return Err(Error::Contract(format!("event log violates {} invariants: {}", violations.len(), violations.join("; "))));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Trace(c) => trace(c),
        Command::Run(c) => run(c),
        Command::Sweep { common, variable, values } => sweep(common, *variable, values.clone()),
        Command::Tune(c) => tune(c),
        Command::Protocol(c) => protocol(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
