use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vgrow::campaign::{run_campaign, summarize, CampaignConfig};
use vgrow::diversity::diversity_report;
use vgrow::inject::{grow_design, InjectionConfig};
use vgrow::par::{map, Exec};
use vgrow::pipeline::check_text;
use vgrow::skeleton::{generate_skeleton, next_seed, GenLimits};
use vgrow::table::ProbabilityTable;
use vgrow::trainer::{gate_probability, load_corpus, train};

#[derive(Parser)]
#[command(name = "vgrow", version, about = "Grow random Verilog designs from a trained grammar")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a probability table from a directory of `.v` files.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Keep files that parse but fail scope or type checks.
        #[arg(long)]
        syntax_only: bool,
    },
    /// Print one placeholder skeleton.
    Skeleton {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
    },
    /// Grow designs and write them with a manifest.
    Generate(GenerateArgs),
    /// Parse, scope-check and type-check a file.
    Check {
        #[arg(long)]
        file: PathBuf,
    },
    /// Diversity report over a directory of `.v` files.
    Diversity {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_values_t = [4])]
        n: Vec<usize>,
    },
    /// Run an external tool over a grown population.
    Campaign {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 150)]
    min_tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Expected context length of the table.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Skip the per-step checks while growing.
    #[arg(long)]
    lenient: bool,
}

fn read_table(path: &Path) -> Result<ProbabilityTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ProbabilityTable::deserialize(&text).with_context(|| format!("loading table {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn generate(exec: Exec, args: GenerateArgs) -> Result<()> {
    let GenerateArgs { table, seed, count, min_tokens, tau, k, out_dir, lenient } = args;
    let out_dir = out_dir.as_path();
    let table = read_table(&table)?;
    if let Some(k) = k.filter(|&k| k != table.k()) {
        bail!("table was trained with K={} but --k {k} was given", table.k());
    }
    if !(tau > 0.0 && tau.is_finite()) {
        bail!("--tau must be positive");
    }
    let mut cfg = InjectionConfig { budget: min_tokens, gate_probability: gate_probability(&table), ..Default::default() };
    cfg.gen.tau = tau;
    cfg.gen.strict = !lenient;
    fs::create_dir_all(out_dir)?;
    let seeds: Vec<u64> = std::iter::successors(Some(seed), |s| Some(next_seed(*s))).take(count).collect();
    let grown = map(exec, &seeds, |&s| grow_design(&table, s, &cfg));
    let mut manifest = fs::File::create(out_dir.join("manifest.tsv"))?;
    let mut failed = 0;
    for (s, g) in seeds.iter().zip(grown) {
        match g {
            Ok(g) => {
                let text = g.text();
                fs::write(out_dir.join(format!("design_{s}.v")), &text)?;
                let valid = if check_text(&text).is_ok() { "valid" } else { "invalid" };
                writeln!(manifest, "{s}\t{}\t{valid}\t{}", g.token_count(), g.iterations)?;
            }
            Err(e) => {
                failed += 1;
                eprintln!("seed {s}: {e}");
            }
        }
    }
    eprintln!("wrote {} design(s) to {}", count - failed, out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.cmd {
        Cmd::Train { corpus, k, out, syntax_only } => {
            let files = load_corpus(&corpus).with_context(|| format!("reading {}", corpus.display()))?;
            let (table, report) = train(&files, k, !syntax_only, exec)?;
            fs::write(&out, table.serialize()).with_context(|| format!("writing {}", out.display()))?;
            print_json(&report)?;
        }
        Cmd::Skeleton { table, seed, tau } => {
            if !(tau > 0.0 && tau.is_finite()) {
                bail!("--tau must be positive");
            }
            let sk = generate_skeleton(&read_table(&table)?, seed, GenLimits::default(), tau)?;
            print!("{}", sk.text());
        }
        Cmd::Generate(args) => generate(exec, args)?,
        Cmd::Check { file } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            match check_text(&text) {
                Ok(typed) => {
                    let modules = typed.design.modules().count();
                    println!("ok: {modules} module(s), {} symbol(s)", typed.symbols.symbols.len());
                }
                Err(e) => {
                    println!("error: {e}");
                    return Ok(ExitCode::FAILURE);
                }
            }
        }
        Cmd::Diversity { dir, n } => {
            let files = load_corpus(&dir).with_context(|| format!("reading {}", dir.display()))?;
            print_json(&diversity_report(&files, &n, exec))?;
        }
        Cmd::Campaign { config } => {
            let cfg = CampaignConfig::load(&config)?;
            let result = run_campaign(&cfg)?;
            print!("{}", summarize(&result.outcomes));
            eprintln!("manifest: {}", result.manifest.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
