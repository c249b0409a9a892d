use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cpsseq::config::{parse_answers, parse_qod, Config, ObservationFile};
use cpsseq::harness::{run_scenario, HarnessError, RunReport};
use cpsseq::identification::{
    characterize, classify, confident_class, IdentityRegistry, ResolutionKind, DEFAULT_MATCH_THRESHOLD,
};
use cpsseq::ledger::{run_attack, AttackParams};
use cpsseq::proxy::{instantiate_proxy, Certification, DataProxy};

#[derive(Debug, Parser)]
#[command(name = "cpsseq", version, about = "Fingerprint, sequence and track physical assets")]
struct Cli {
    /// Seed overriding the scenario or experiment default.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory to write reports into.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Catalog file to use instead of the bundled one.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled scenario by name).
    Run { scenario: PathBuf },
    /// Classify an asset from a file of attribute answers.
    Classify {
        answers: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        min_confidence: f64,
    },
    /// Resolve an observation to an identity, minting one if it is new.
    Mint {
        observation: PathBuf,
        /// Identity registry (JSON), created if missing and updated in place.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Answers file used to classify when the observation has no class.
        #[arg(long)]
        answers: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD)]
        threshold: f64,
    },
    /// Ledger experiments.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Data proxy tools.
    Proxy {
        #[command(subcommand)]
        command: ProxyCommand,
    },
    /// Print the report of an earlier run.
    Report { run_dir: PathBuf },
}

#[derive(Debug, Subcommand)]
enum LedgerCommand {
    /// Simulate a parasite-chain double mint.
    Attack {
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 5000)]
        rounds: u64,
        #[arg(long, default_value_t = 10)]
        honest: usize,
    },
}

#[derive(Debug, Subcommand)]
enum ProxyCommand {
    /// Find the leanest sampling policy meeting a quality bound.
    Adapt {
        #[arg(long)]
        class: String,
        /// TOML file of `state = max_stddev` bounds.
        #[arg(long)]
        qod: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        None => Ok(Config::bundled()),
        Some(p) => Config::load(p).map_err(invalid),
    }
}

fn write_out(out: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_run(cli: &Cli, scenario: &Path) -> Result<String, Failure> {
    let report = run_scenario(scenario, cli.seed)?;
    if let Some(dir) = &cli.out {
        report.write(dir)?;
    }
    Ok(report.to_text())
}

fn cmd_classify(cli: &Cli, answers: &Path, min_confidence: f64) -> Result<String, Failure> {
    let config = load_config(cli.catalog.as_deref())?;
    let answers = parse_answers(&read(answers)?, &config.catalog).map_err(invalid)?;
    let posterior = classify(&answers, &config.catalog).map_err(invalid)?;
    let top = confident_class(&posterior, min_confidence).map_err(invalid)?;
    let mut s = format!("{top}\n");
    for (label, p) in posterior.entries() {
        let _ = writeln!(s, "  {label:<8} {p:.4}");
    }
    write_out(cli.out.as_deref(), "classify.txt", &s)?;
    Ok(s)
}

fn cmd_mint(
    cli: &Cli,
    observation: &Path,
    registry_path: Option<&Path>,
    answers: Option<&Path>,
    threshold: f64,
) -> Result<String, Failure> {
    let config = load_config(cli.catalog.as_deref())?;
    let obs = ObservationFile::from_toml_str(&read(observation)?).map_err(invalid)?;
    let class = match (&obs.class, answers) {
        (Some(c), _) => c.clone(),
        (None, Some(a)) => {
            let answers = parse_answers(&read(a)?, &config.catalog).map_err(invalid)?;
            let posterior = classify(&answers, &config.catalog).map_err(invalid)?;
            confident_class(&posterior, 0.5).map_err(invalid)?.to_string()
        }
        (None, None) => return Err(invalid("the observation names no class and no --answers file was given")),
    };
    let fv = characterize(&config.schemas, &class, &obs.observation()).map_err(invalid)?;
    let registry = match registry_path {
        Some(p) if p.exists() => IdentityRegistry::from_json(&read(p)?).map_err(invalid)?,
        _ => IdentityRegistry::default(),
    };
    let res = registry.mint_or_resolve(&fv, threshold, 0).map_err(invalid)?;
    if let Some(p) = registry_path {
        let json = registry.to_json().map_err(runtime)?;
        std::fs::write(p, json).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
    }
    let s = match res.kind {
        ResolutionKind::Minted => format!(
            "minted {}\nphysical_hash {}\n",
            res.identity.id(),
            res.identity.physical_hash().digest
        ),
        ResolutionKind::Resolved => format!(
            "resolved {}\ndistance {:.6}\n",
            res.identity.id(),
            res.distance.unwrap_or_default()
        ),
    };
    write_out(cli.out.as_deref(), "mint.txt", &s)?;
    Ok(s)
}

fn cmd_attack(cli: &Cli, fraction: f64, rounds: u64, honest: usize) -> Result<String, Failure> {
    let mut params = AttackParams::new(fraction, rounds, cli.seed.unwrap_or(1));
    params.honest_count = honest;
    let report = run_attack(&params).map_err(invalid)?;
    let s = report.to_text();
    write_out(cli.out.as_deref(), "attack.txt", &s)?;
    Ok(s)
}

fn describe(s: &mut String, label: &str, p: &DataProxy) -> Result<(), Failure> {
    let model = p.model();
    let channels: Vec<&str> = p
        .policy()
        .active_channels()
        .iter()
        .map(|&c| model.channels[c].as_str())
        .collect();
    let _ = write!(
        s,
        "{label} period={} channels=[{}] cost={:.6}",
        p.policy().period(),
        channels.join(","),
        p.policy().cost()
    );
    match p.certify().map_err(runtime)? {
        Certification::Certified { steady_stddevs } => {
            let sd: Vec<String> = model
                .states
                .iter()
                .zip(&steady_stddevs)
                .map(|(st, v)| format!("{}={v:.6}", st.name))
                .collect();
            let _ = writeln!(s, " certified {}", sd.join(" "));
        }
        Certification::Rejected(r) => {
            let _ = writeln!(s, " rejected {r:?}");
        }
    }
    Ok(())
}

fn cmd_adapt(cli: &Cli, class: &str, qod: &Path) -> Result<String, Failure> {
    let config = load_config(cli.catalog.as_deref())?;
    let mut proxy = instantiate_proxy(&config.models, class).map_err(invalid)?;
    let qod = parse_qod(&read(qod)?, proxy.model()).map_err(invalid)?;
    proxy
        .set_qod(qod)
        .map_err(|e| invalid(format!("the bound is not met even at full rate: {e}")))?;
    let adapted = proxy.adapt_model();
    let mut s = format!("class {class}\n");
    describe(&mut s, "input  ", &proxy)?;
    describe(&mut s, "adapted", &adapted)?;
    write_out(cli.out.as_deref(), "adapt.txt", &s)?;
    Ok(s)
}

fn cmd_report(run_dir: &Path) -> Result<String, Failure> {
    Ok(RunReport::read(run_dir)?.to_text())
}

fn dispatch(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Run { scenario } => cmd_run(cli, scenario),
        Command::Classify {
            answers,
            min_confidence,
        } => cmd_classify(cli, answers, *min_confidence),
        Command::Mint {
            observation,
            registry,
            answers,
            threshold,
        } => cmd_mint(cli, observation, registry.as_deref(), answers.as_deref(), *threshold),
        Command::Ledger {
            command: LedgerCommand::Attack {
                fraction,
                rounds,
                honest,
            },
        } => cmd_attack(cli, *fraction, *rounds, *honest),
        Command::Proxy {
            command: ProxyCommand::Adapt { class, qod },
        } => cmd_adapt(cli, class, qod),
        Command::Report { run_dir } => cmd_report(run_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            match &f {
                Failure::Validation(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("failure: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
