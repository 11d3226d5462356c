use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wfaudit_core::perspectives::{self, Agent, AssignmentRule, Perspective, PerspectiveError, Time};
use wfaudit_core::protocol::{
    InitialSpin, MonteCarloSummary, Protocol, ProtocolConfig, Record, Semantics, F, FBAR, R, S,
};
use wfaudit_core::reasoning::{self, RuleSetName};

mod output;

use output::{Document, Outputs};

#[derive(Parser, Debug)]
#[command(name = "wfaudit", version, about = "Extended Wigner's-friend simulator and reasoning auditor")]
struct Cli {
    /// Print the JSON document instead of a table.
    #[arg(long, global = true)]
    json: bool,

    /// Also write the JSON document, any CSV, and a manifest here.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact joint distribution of the two Wigners' outcomes.
    Exact(ProtocolArgs),
    /// Monte Carlo rounds: frequencies and halting-round histogram.
    Mc {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        rounds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// The density matrix an agent assigns, with Born predictions.
    Perspectives {
        #[arg(long, value_parser = parse_agent)]
        agent: Agent,
        #[arg(long, value_parser = parse_time)]
        time: Time,
        #[arg(long, value_parser = parse_rule)]
        rule: AssignmentRule,
        /// Record to condition on, e.g. `r=tails`; repeatable.
        #[arg(long = "cond", value_parser = Record::parse)]
        conditions: Vec<Record>,
        /// Comma-separated subsystems (default depends on the time).
        #[arg(long, value_delimiter = ',')]
        subsystems: Vec<String>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
    },
    /// Evaluate the statements under a rule set and chain them.
    Audit {
        #[arg(long, value_enum)]
        ruleset: RuleSetArg,
        #[command(flatten)]
        protocol: ProtocolArgs,
    },
}

#[derive(Args, Debug, Clone)]
struct ProtocolArgs {
    #[arg(long, value_enum, default_value_t = SemanticsArg::Unitary)]
    semantics: SemanticsArg,
    /// Relative phase of the tails amplitude, radians.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = SpinArg::Down)]
    initial_spin: SpinArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SemanticsArg {
    Unitary,
    Collapse,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SpinArg {
    Down,
    Up,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RuleSetArg {
    FrMixed,
    AllCollapse,
    AllUnitary,
}

impl ProtocolArgs {
    fn config(&self, seed: u64) -> anyhow::Result<ProtocolConfig> {
        if !self.theta.is_finite() {
            anyhow::bail!("theta must be finite");
        }
        Ok(ProtocolConfig {
            semantics: match self.semantics {
                SemanticsArg::Unitary => Semantics::Unitary,
                SemanticsArg::Collapse => Semantics::Collapse,
            },
            theta: self.theta,
            seed,
            initial_spin: match self.initial_spin {
                SpinArg::Down => InitialSpin::Down,
                SpinArg::Up => InitialSpin::Up,
            },
            ..ProtocolConfig::default()
        })
    }
}

fn parse_agent(s: &str) -> Result<Agent, String> {
    s.parse()
}

fn parse_time(s: &str) -> Result<Time, String> {
    s.parse()
}

fn parse_rule(s: &str) -> Result<AssignmentRule, String> {
    s.parse()
}

/// Bad user input detected after parsing; exits like a flag error.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let (doc, outputs) = match &cli.command {
        Command::Exact(args) => cmd_exact(args)?,
        Command::Mc { protocol, rounds, seed } => cmd_mc(protocol, *rounds, *seed)?,
        Command::Perspectives {
            agent,
            time,
            rule,
            conditions,
            subsystems,
            theta,
        } => cmd_perspectives(*agent, *time, *rule, conditions, subsystems, *theta)?,
        Command::Audit { ruleset, protocol } => cmd_audit(*ruleset, protocol)?,
    };
    if let Some(dir) = &cli.out_dir {
        write_outputs(dir, &doc, &outputs)?;
    }
    let text = if cli.json {
        serde_json::to_string_pretty(&doc.json)? + "\n"
    } else {
        doc.table
    };
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn write_outputs(dir: &Path, doc: &Document, outputs: &Outputs) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let name = format!("{}.json", doc.command);
    fs::write(dir.join(&name), serde_json::to_string_pretty(&doc.json)? + "\n")?;
    written.push(name);
    for (file, contents) in &outputs.extra {
        fs::write(dir.join(file), contents)?;
        written.push(file.clone());
    }
    written.push("manifest.json".into());
    let manifest = json!({
        "schema_version": output::SCHEMA_VERSION,
        "command": doc.command,
        "config": doc.config,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "outputs": written,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn cmd_exact(args: &ProtocolArgs) -> anyhow::Result<(Document, Outputs)> {
    let config = args.config(0)?;
    let joint = Protocol::new(&config)?.exact_joint()?;
    let doc = output::exact(&config, &joint);
    Ok((doc, Outputs::default()))
}

fn cmd_mc(args: &ProtocolArgs, rounds: u64, seed: u64) -> anyhow::Result<(Document, Outputs)> {
    let config = args.config(seed)?;
    let protocol = Protocol::new(&config)?;
    let records = protocol.run_rounds(rounds)?;
    let summary = MonteCarloSummary::from_records(&records);
    let doc = output::mc(&config, &summary);
    let outputs = Outputs {
        extra: vec![("halting_histogram.csv".into(), output::histogram_csv(&summary))],
    };
    Ok((doc, outputs))
}

fn default_subsystems(time: Time) -> Vec<&'static str> {
    match time {
        Time::T00 => vec![R],
        Time::T10 => vec![R, FBAR, S],
        Time::T20 | Time::T30 => vec![S, F],
    }
}

fn cmd_perspectives(
    agent: Agent,
    time: Time,
    rule: AssignmentRule,
    conditions: &[Record],
    subsystems: &[String],
    theta: f64,
) -> anyhow::Result<(Document, Outputs)> {
    if !theta.is_finite() {
        return Err(InputError("theta must be finite".into()).into());
    }
    let config = ProtocolConfig {
        theta,
        ..ProtocolConfig::default()
    };
    let protocol = Protocol::new(&config)?;
    let names: Vec<&str> = if subsystems.is_empty() {
        default_subsystems(time)
    } else {
        subsystems.iter().map(String::as_str).collect()
    };
    for n in &names {
        if !protocol.layout().contains(n) {
            return Err(InputError(format!("unknown subsystem `{n}` (expected R, Fbar, S, F)")).into());
        }
    }
    let view = Perspective::conditioned(agent, time, rule, conditions);
    let rho = match perspectives::assign(&protocol, &view, &names) {
        Ok(rho) => rho,
        Err(e @ (PerspectiveError::Unknowable { .. }
        | PerspectiveError::MissingOwnRecord { .. }
        | PerspectiveError::FutureCondition { .. }
        | PerspectiveError::ConditionImpossible { .. })) => {
            return Err(InputError(format!("not-evaluable: {e}")).into());
        }
        Err(e) => return Err(e.into()),
    };
    let predictions = output::predictions(&rho)?;
    let doc = output::perspective(&view, &names, &rho, &predictions, theta);
    Ok((doc, Outputs::default()))
}

fn cmd_audit(ruleset: RuleSetArg, args: &ProtocolArgs) -> anyhow::Result<(Document, Outputs)> {
    let config = args.config(0)?;
    let protocol = Protocol::new(&config)?;
    let name = match ruleset {
        RuleSetArg::FrMixed => RuleSetName::FrMixed,
        RuleSetArg::AllCollapse => RuleSetName::AllCollapse,
        RuleSetArg::AllUnitary => RuleSetName::AllUnitary,
    };
    let report = reasoning::audit(&protocol, name)?;
    Ok((output::audit(&config, &report), Outputs::default()))
}
