use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use oobr_core::derive::{rules_manifest, ruleset};
use oobr_core::pipeline::{run_build, run_validate, Format, RunConfig, DEFAULT_CHUNK_ROWS};
use oobr_core::synth::{generate, SynthConfig};
use oobr_core::tabulate::select_tables;
use oobr_core::{CodeBook, CurrentWeek, SnapshotSource, TextEncoding};

const EXIT_FATAL: u8 = 1;
const EXIT_STRICT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "oobr",
    version,
    about = "Obstetric SARI surveillance pipeline over SIVEP-Gripe snapshots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select the cohort, derive variables and write every artifact.
    Build(BuildArgs),
    /// Generate seeded synthetic snapshots plus a ground-truth manifest.
    Synth(SynthArgs),
    /// Run the data-quality checks only.
    Validate(ValidateArgs),
    /// Print the data dictionary.
    Dictionary {
        /// Print the recode rules instead.
        #[arg(long)]
        rules: bool,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Snapshot as YEAR=PATH; repeat for each year.
    #[arg(long = "in", value_name = "YEAR=PATH", required = true)]
    inputs: Vec<String>,
    /// Last epidemiological week of the current year to keep.
    #[arg(long, value_name = "N")]
    current_week: u8,
    /// Input text encoding.
    #[arg(long, default_value = "ISO-8859-2")]
    encoding: String,
    /// Input field delimiter (a single character, or "tab").
    #[arg(long, default_value = ";")]
    delimiter: String,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Exit with status 2 when any inconsistency is found.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Comma-separated list of csv, json, text.
    #[arg(long, default_value = "csv,json,text")]
    format: String,
    /// `all` or a comma-separated list of table names.
    #[arg(long, default_value = "all")]
    tables: String,
    /// English category labels in tables.
    #[arg(long)]
    translate: bool,
    #[arg(long, default_value_t = DEFAULT_CHUNK_ROWS, hide = true)]
    chunk_rows: usize,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// text or json.
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// JSON configuration; unspecified keys keep their defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Total rows across both years.
    #[arg(long)]
    rows: Option<u64>,
    #[arg(long)]
    rows_2020: Option<u64>,
    #[arg(long)]
    rows_2021: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_delimiter(text: &str) -> Result<u8> {
    match text {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        t if t.len() == 1 && t.is_ascii() => Ok(t.as_bytes()[0]),
        t => bail!("delimiter must be a single ASCII character, got {t:?}"),
    }
}

fn sources(args: &InputArgs) -> Result<Vec<SnapshotSource>> {
    let encoding: TextEncoding = args.encoding.parse()?;
    let delimiter = parse_delimiter(&args.delimiter)?;
    args.inputs
        .iter()
        .map(|spec| {
            let (year, path) = spec
                .split_once('=')
                .ok_or_else(|| anyhow!("--in expects YEAR=PATH, got {spec:?}"))?;
            let year: u16 = year
                .trim()
                .parse()
                .with_context(|| format!("bad year in {spec:?}"))?;
            Ok(SnapshotSource::new(path, year)?
                .with_encoding(encoding)
                .with_delimiter(delimiter))
        })
        .collect()
}

fn source_date_epoch() -> Result<Option<i64>> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => Ok(Some(
            v.trim()
                .parse()
                .context("SOURCE_DATE_EPOCH must be an integer")?,
        )),
        Err(_) => Ok(None),
    }
}

fn build(args: BuildArgs) -> Result<u8> {
    let mut cfg = RunConfig::new(
        sources(&args.input)?,
        CurrentWeek::new(args.input.current_week)?,
        args.out,
    );
    cfg.formats = args
        .format
        .split(',')
        .map(str::parse)
        .collect::<Result<Vec<Format>, _>>()?;
    cfg.formats.dedup();
    cfg.tables = select_tables(&args.tables)?;
    cfg.strict = args.input.strict;
    cfg.jobs = args.input.jobs;
    cfg.chunk_rows = args.chunk_rows;
    cfg.translate = args.translate;
    cfg.timestamp = source_date_epoch()?;

    let outcome = run_build(&cfg)?;
    let m = &outcome.manifest;
    for input in &m.inputs {
        log::info!(
            "{}: {} rows, {} malformed",
            input.path,
            input.rows,
            input.malformed
        );
    }
    println!(
        "cohort {} of {} records; {} inconsistencies; artifacts in {}",
        m.cohort_records,
        outcome.pass.funnel.input(),
        m.inconsistencies,
        cfg.out_dir.display()
    );
    if m.inconsistencies > 0 {
        log::warn!(
            "{} inconsistent records, see findings.txt",
            m.inconsistencies
        );
    }
    Ok(if outcome.strict_failure {
        EXIT_STRICT
    } else {
        0
    })
}

fn validate(args: ValidateArgs) -> Result<u8> {
    let json = match args.format.as_str() {
        "json" => true,
        "text" | "txt" => false,
        other => bail!("validate prints text or json, got {other:?}"),
    };
    let pass = run_validate(
        &sources(&args.input)?,
        CurrentWeek::new(args.input.current_week)?,
        args.input.jobs,
    )?;
    if json {
        println!("{}", pass.findings.render_json()?);
    } else {
        print!("{}", pass.findings.render_text());
    }
    Ok(
        if args.input.strict && pass.findings.inconsistencies() > 0 {
            EXIT_STRICT
        } else {
            0
        },
    )
}

fn synth(args: SynthArgs) -> Result<u8> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(rows) = args.rows {
        cfg = cfg.with_total_rows(rows);
    }
    if let Some(n) = args.rows_2020 {
        cfg.rows_2020 = n;
    }
    if let Some(n) = args.rows_2021 {
        cfg.rows_2021 = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let manifest = generate(&cfg, &args.out)?;
    for f in &manifest.files {
        println!("{} {} {} rows", f.sha256, f.path.display(), f.truth.rows);
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Build(a) => build(a),
        Command::Synth(a) => synth(a),
        Command::Validate(a) => validate(a),
        Command::Dictionary { rules } => {
            if rules {
                print!("{}", rules_manifest(ruleset()));
            } else {
                print!("{}", CodeBook::sivep().render_text());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_FATAL } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}
