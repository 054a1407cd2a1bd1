use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isingcx::experiment::{run, write_report, ExperimentConfig, ExperimentKind};
use isingcx::Error;

#[derive(Parser)]
#[command(name = "isingcx", version, about = "Seeded Ising experiments with CSV and JSON output")]
struct Cli {
    #[command(subcommand)]
    kind: Kind,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Kind {
    /// Decay of the support of one site.
    SupDecay,
    /// Tail of the coarse killed update set.
    KupdTail,
    /// Bad-box domination by Bernoulli site percolation.
    Domination,
    /// Polymer representation identity on random encodings.
    PolymerIdentity,
    /// Cluster-expansion series for the pressure.
    PressureSeries,
    /// Magnetization relaxation under plus, free and minus boundary conditions.
    FkRelax,
    /// FK crossing probability under minus boundary condition.
    Crossing,
    /// Exact reference values.
    Oracle,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::SupDecay => ExperimentKind::SupDecay,
            Kind::KupdTail => ExperimentKind::KupdTail,
            Kind::Domination => ExperimentKind::Domination,
            Kind::PolymerIdentity => ExperimentKind::PolymerIdentity,
            Kind::PressureSeries => ExperimentKind::PressureSeries,
            Kind::FkRelax => ExperimentKind::FkRelax,
            Kind::Crossing => ExperimentKind::Crossing,
            Kind::Oracle => ExperimentKind::Oracle,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invariant(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = ExperimentKind::from(cli.kind);
    let mut config = match &cli.config {
        Some(path) => match std::fs::read_to_string(path).map_err(Error::from).and_then(|t| ExperimentConfig::from_toml(&t)) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::new(kind),
    };
    match config.kind {
        Some(k) if k != kind => {
            eprintln!("config error: config is for {} but the subcommand is {}", k.name(), kind.name());
            return ExitCode::from(2);
        }
        _ => config.kind = Some(kind),
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    if let Some(o) = &cli.out {
        config.output.dir = o.to_string_lossy().into_owned();
    }
    let report = match run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", kind.name());
            return ExitCode::from(exit_code(&e));
        }
    };
    let dir = PathBuf::from(&config.output.dir);
    match write_report(&config, &report, &dir) {
        Ok((csv, json)) => println!("wrote {} and {}", csv.display(), json.display()),
        Err(e) => {
            eprintln!("{}: {e}", kind.name());
            return ExitCode::from(exit_code(&e));
        }
    }
    for c in &report.checks {
        println!("{} {}", if c.holds { "ok  " } else { "FAIL" }, c.name);
    }
    let violated = report.violated();
    if !violated.is_empty() {
        for v in violated {
            eprintln!("invariant violated: {v}");
        }
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
