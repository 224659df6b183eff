use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nbmimo::experiment::config::{Command, ExperimentConfig};
use nbmimo::experiment::output::{self, Metadata};
use nbmimo::experiment::presets::{self, PRESET_NAMES};
use nbmimo::experiment::runner;

#[derive(Parser)]
#[command(name = "nbmimo", version, about = "Non-binary LDPC coded large-scale MIMO link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Coded BER/FER sweep.
    Ber(Common),
    /// Uncoded BER sweep with hard decisions.
    Uncoded(Common),
    /// Ergodic capacity, optionally under spatial correlation.
    Capacity(Common),
    /// Density-evolution decoding thresholds.
    Threshold(Common),
    /// Closed-form detection complexity.
    Flops(Common),
    /// Kolmogorov-Smirnov Gaussianity test of the matched-filter Δ_k.
    Ksdelta(Common),
    /// List built-in presets, or print one as TOML.
    Presets {
        /// Preset to print.
        name: Option<String>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (see `nbmimo presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Suppress progress lines on standard error.
    #[arg(long, short)]
    quiet: bool,
}

/// A rendered CSV body plus its sibling tables.
struct Table {
    main: String,
    siblings: Vec<(&'static str, String)>,
}

fn load(common: &Common, command: Command) -> Result<(ExperimentConfig, Option<&'static str>)> {
    let (mut cfg, preset) = match (&common.config, &common.preset) {
        (Some(path), None) => (ExperimentConfig::from_file(path)?, None),
        (None, Some(name)) => {
            let p = presets::preset(name)
                .with_context(|| format!("unknown preset `{name}`; available: {}", PRESET_NAMES.join(", ")))?;
            if p.command != command {
                bail!("preset `{name}` is for `nbmimo {}`, not `nbmimo {}`", p.command.name(), command.name());
            }
            (p.config, Some(p.name))
        }
        (None, None) if command == Command::Flops => (presets::preset("fig11").unwrap().config, Some("fig11")),
        (None, None) => bail!("give --config <path> or --preset <name>"),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate(command)?;
    Ok((cfg, preset))
}

fn run(command: Command, common: &Common) -> Result<()> {
    if let Some(n) = common.workers {
        if n == 0 {
            bail!("--workers must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    let (cfg, preset) = load(common, command)?;
    let quiet = common.quiet;
    let progress = move |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    let finish = |mut meta: Metadata| {
        meta.push("command", std::env::args().collect::<Vec<_>>().join(" "));
        if let Some(p) = preset {
            meta.push("preset", p);
        }
        meta
    };
    let table = match command {
        Command::Ber | Command::Uncoded => {
            let out = if command == Command::Ber { runner::run_ber(&cfg, &progress)? } else { runner::run_uncoded(&cfg, &progress)? };
            let meta = finish(out.metadata);
            let mut siblings = Vec::new();
            if command == Command::Ber {
                siblings.push(("errors", output::table_string(&meta, &out.error_histogram)));
            }
            Table { main: output::table_string(&meta, &out.records), siblings }
        }
        Command::Capacity => {
            let (meta, records) = runner::run_capacity(&cfg, &progress)?;
            Table { main: output::table_string(&finish(meta), &records), siblings: Vec::new() }
        }
        Command::Threshold => {
            let out = runner::run_threshold(&cfg, &progress)?;
            let meta = finish(out.metadata);
            Table {
                main: output::table_string(&meta, &out.records),
                siblings: vec![("trajectory", output::table_string(&meta, &out.trajectory))],
            }
        }
        Command::Flops => {
            let (meta, records) = runner::run_flops(&cfg)?;
            Table { main: output::table_string(&finish(meta), &records), siblings: Vec::new() }
        }
        Command::KsDelta => {
            let out = runner::run_ksdelta(&cfg, &progress)?;
            let meta = finish(out.metadata);
            Table {
                main: output::table_string(&meta, std::slice::from_ref(&out.record)),
                siblings: vec![("histogram", output::table_string(&meta, &out.histogram))],
            }
        }
    };
    emit(common.out.as_deref(), &table, quiet)
}

fn emit(out: Option<&Path>, table: &Table, quiet: bool) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, &table.main).with_context(|| format!("writing {}", path.display()))?;
            for (suffix, body) in &table.siblings {
                let p = output::sibling_path(path, suffix);
                std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
                if !quiet {
                    eprintln!("wrote {}", p.display());
                }
            }
            if !quiet {
                eprintln!("wrote {}", path.display());
            }
        }
        None => {
            std::io::stdout().lock().write_all(table.main.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Sub::Ber(c) => (Command::Ber, c),
        Sub::Uncoded(c) => (Command::Uncoded, c),
        Sub::Capacity(c) => (Command::Capacity, c),
        Sub::Threshold(c) => (Command::Threshold, c),
        Sub::Flops(c) => (Command::Flops, c),
        Sub::Ksdelta(c) => (Command::KsDelta, c),
        Sub::Presets { name: None } => {
            for name in PRESET_NAMES {
                let p = presets::preset(name).unwrap();
                println!("{:<18} {:<10} {}", p.name, p.command.name(), p.summary);
            }
            return Ok(());
        }
        Sub::Presets { name: Some(name) } => {
            let p = presets::preset(name).with_context(|| format!("unknown preset `{name}`"))?;
            println!("# nbmimo {} --preset {}", p.command.name(), p.name);
            print!("{}", p.config.to_toml());
            return Ok(());
        }
    };
    run(command, common)
}
