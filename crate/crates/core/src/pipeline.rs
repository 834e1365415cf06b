//! End-to-end build: ingest every snapshot, screen, derive, tabulate and
//! validate in one streaming pass, then write the artifacts.

use std::borrow::Cow;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc::sync_channel;

use chrono::DateTime;
use csv::ByteRecord;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{screen, CurrentWeek, FunnelCounter, FunnelReport, SelectedCase, Stage};
use crate::derive::{derive_all, CohortRecord, DerivedVar};
use crate::error::{Error, Result};
use crate::ingest::{
    HeaderMap, IngestStats, Malformed, QuarantineWriter, RowDecoder, SnapshotReader, SnapshotSource,
};
use crate::schema::Column;
use crate::tabulate::{catalog, Population, RenderedTable, RowView, TableCounter, TableSpec};
use crate::validate::{FindingsReport, Validator};

/// Rows read per chunk before it is fanned out to workers.
pub const DEFAULT_CHUNK_ROWS: usize = 1 << 16;
/// Delimiter of every delimited artifact.
pub const OUTPUT_DELIMITER: u8 = b';';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Text,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Json, Format::Text];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Text => "txt",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Format> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "text" | "txt" => Ok(Format::Text),
            other => Err(Error::Config(format!(
                "unknown format {other:?}; expected csv, json or text"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<SnapshotSource>,
    pub current_week: CurrentWeek,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
    pub tables: Vec<TableSpec>,
    pub strict: bool,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub chunk_rows: usize,
    /// Render table labels in English.
    pub translate: bool,
    /// Seconds since the epoch for the manifest timestamp; `None` uses the clock.
    pub timestamp: Option<i64>,
}

impl RunConfig {
    pub fn new(
        inputs: Vec<SnapshotSource>,
        current_week: CurrentWeek,
        out_dir: impl Into<PathBuf>,
    ) -> RunConfig {
        RunConfig {
            inputs,
            current_week,
            out_dir: out_dir.into(),
            formats: Format::ALL.to_vec(),
            tables: catalog(),
            strict: false,
            jobs: 0,
            chunk_rows: DEFAULT_CHUNK_ROWS,
            translate: false,
            timestamp: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config(
                "at least one input snapshot is required".into(),
            ));
        }
        if self.formats.is_empty() {
            return Err(Error::Config(
                "at least one output format is required".into(),
            ));
        }
        if self.chunk_rows == 0 {
            return Err(Error::Config("chunk size must be positive".into()));
        }
        Ok(())
    }
}

/// Everything computed in one pass, before anything is written.
#[derive(Debug, Clone)]
pub struct PassResult {
    pub ingest: Vec<IngestStats>,
    pub funnel: FunnelReport,
    pub tables: Vec<(TableSpec, RenderedTable)>,
    pub findings: FindingsReport,
    pub cohort_records: u64,
}

/// Counters of one partition; merged in any order.
struct Partial {
    stats: IngestStats,
    funnel: FunnelCounter,
    tables: Vec<TableCounter>,
    validator: Validator,
    cohort: Vec<CohortRecord>,
    malformed: Vec<Malformed>,
}

impl Partial {
    fn new(source: &SnapshotSource, tables: &[TableSpec]) -> Partial {
        Partial {
            stats: IngestStats::new(source),
            funnel: FunnelCounter::default(),
            tables: tables.iter().map(TableSpec::counter).collect(),
            validator: Validator::new(),
            cohort: Vec::new(),
            malformed: Vec::new(),
        }
    }

    fn absorb(&mut self, other: Partial) {
        self.stats.merge(&other.stats);
        self.funnel.merge(&other.funnel);
        for (a, b) in self.tables.iter_mut().zip(other.tables) {
            a.merge(b);
        }
        self.validator.merge(&other.validator);
        self.cohort.extend(other.cohort);
        self.malformed.extend(other.malformed);
    }
}

fn process_rows(
    rows: &[(u64, ByteRecord)],
    decoder: &RowDecoder,
    source: &SnapshotSource,
    week: CurrentWeek,
    tables: &[TableSpec],
    keep_cohort: bool,
) -> Partial {
    let mut p = Partial::new(source, tables);
    for (row, raw) in rows {
        let decoded = match decoder.decode(raw, *row) {
            Ok(d) => d,
            Err(m) => {
                p.stats.observe_malformed();
                p.malformed.push(m);
                continue;
            }
        };
        p.stats.observe(&decoded);
        let record = decoded.record;
        let s = screen(&record, week);
        p.funnel.observe(&s);
        if s.passed(Stage::EpiWindow) {
            let view = RowView::raw(&record, s.stamp);
            for (spec, counter) in tables.iter().zip(p.tables.iter_mut()) {
                if spec.population == Population::Window {
                    counter.observe(spec, &view);
                }
            }
        }
        if s.passed(Stage::CurrentWeek) {
            let view = RowView::raw(&record, s.corrected);
            for (spec, counter) in tables.iter().zip(p.tables.iter_mut()) {
                if spec.population == Population::Current {
                    counter.observe(spec, &view);
                }
            }
            p.validator.observe_current(&record);
        }
        if s.selected() {
            let case = derive_all(SelectedCase {
                stamp: s.corrected.expect("selected records are stamped"),
                status: s.status.expect("selected records are classified"),
                record,
            });
            let view = RowView::cohort(&case);
            for (spec, counter) in tables.iter().zip(p.tables.iter_mut()) {
                if spec.population == Population::Cohort {
                    counter.observe(spec, &view);
                }
            }
            p.validator.observe_cohort(&case);
            if keep_cohort {
                p.cohort.push(case);
            }
        }
    }
    p
}

/// Receives cohort records and quarantined rows in input order.
pub trait PassSink {
    fn cohort(&mut self, file: u32, records: &[CohortRecord]) -> Result<()>;
    fn malformed(&mut self, file: u32, header: &HeaderMap, rows: &[Malformed]) -> Result<()>;
}

/// A sink that discards everything.
pub struct NullSink;

impl PassSink for NullSink {
    fn cohort(&mut self, _: u32, _: &[CohortRecord]) -> Result<()> {
        Ok(())
    }

    fn malformed(&mut self, _: u32, _: &HeaderMap, _: &[Malformed]) -> Result<()> {
        Ok(())
    }
}

/// Opens every input so that header problems surface before any work.
pub fn open_inputs(inputs: &[SnapshotSource]) -> Result<Vec<SnapshotReader>> {
    inputs.iter().map(SnapshotReader::open).collect()
}

/// Streams every input through the pipeline on the current rayon pool.
pub fn run_pass(
    readers: Vec<SnapshotReader>,
    week: CurrentWeek,
    tables: &[TableSpec],
    chunk_rows: usize,
    sink: &mut dyn PassSink,
    keep_cohort: bool,
) -> Result<PassResult> {
    let mut ingest = Vec::new();
    let mut funnel = FunnelCounter::default();
    let mut counters: Vec<TableCounter> = tables.iter().map(TableSpec::counter).collect();
    let mut validator = Validator::new();
    let mut cohort_records = 0u64;
    let workers = rayon::current_num_threads().max(1);

    for (file, mut reader) in readers.into_iter().enumerate() {
        let file = file as u32;
        let source = reader.source().clone();
        let header = reader.header().clone();
        let decoder = reader.decoder(file);
        let mut stats = IngestStats::new(&source);

        std::thread::scope(|scope| -> Result<()> {
            // Reading runs one chunk ahead of processing.
            let (tx, rx) = sync_channel::<Result<Vec<(u64, ByteRecord)>>>(2);
            scope.spawn(move || loop {
                let chunk = reader.next_chunk(chunk_rows);
                let done = matches!(&chunk, Ok(c) if c.is_empty()) || chunk.is_err();
                if tx.send(chunk).is_err() || done {
                    break;
                }
            });
            for chunk in rx {
                let chunk = chunk?;
                if chunk.is_empty() {
                    break;
                }
                let part_len = chunk.len().div_ceil(workers * 4).max(512);
                let parts: Vec<Partial> = chunk
                    .par_chunks(part_len)
                    .map(|rows| process_rows(rows, &decoder, &source, week, tables, keep_cohort))
                    .collect();
                let mut merged = Partial::new(&source, tables);
                for p in parts {
                    merged.absorb(p);
                }
                sink.cohort(file, &merged.cohort)?;
                if !merged.malformed.is_empty() {
                    sink.malformed(file, &header, &merged.malformed)?;
                }
                cohort_records += merged.cohort.len() as u64;
                stats.merge(&merged.stats);
                funnel.merge(&merged.funnel);
                for (a, b) in counters.iter_mut().zip(merged.tables) {
                    a.merge(b);
                }
                validator.merge(&merged.validator);
            }
            Ok(())
        })?;
        if !keep_cohort {
            cohort_records = funnel.report().output();
        }
        ingest.push(stats);
    }

    let tables = tables
        .iter()
        .zip(&counters)
        .map(|(spec, c)| (spec.clone(), spec.render(c)))
        .collect();
    Ok(PassResult {
        findings: validator.report(&ingest),
        funnel: funnel.report(),
        ingest,
        tables,
        cohort_records,
    })
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs the pass without writing any artifact.
pub fn run_validate(
    inputs: &[SnapshotSource],
    week: CurrentWeek,
    jobs: usize,
) -> Result<PassResult> {
    let readers = open_inputs(inputs)?;
    thread_pool(jobs)?
        .install(|| run_pass(readers, week, &[], DEFAULT_CHUNK_ROWS, &mut NullSink, false))
}

/// Column names of the cohort export.
pub fn cohort_header(extras: &[String]) -> Vec<String> {
    let mut h: Vec<String> = vec!["source_file".into(), "source_row".into()];
    h.extend(Column::all().map(|c| c.name().to_string()));
    h.extend(extras.iter().cloned());
    h.push("ano".into());
    h.extend(DerivedVar::all().into_iter().map(|v| v.name().to_string()));
    h
}

/// Union of unmodeled columns across inputs, in first-seen order.
fn extra_union(headers: &[&HeaderMap]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for h in headers {
        for n in h.extra_names() {
            if !out.iter().any(|o| o == &**n) {
                out.push(n.to_string());
            }
        }
    }
    out
}

struct ArtifactSink {
    out_dir: PathBuf,
    inputs: Vec<SnapshotSource>,
    cohort: csv::Writer<BufWriter<File>>,
    /// Per input file: union position to that file's extra column index.
    extra_maps: Vec<Vec<Option<usize>>>,
    quarantine: Vec<Option<QuarantineWriter<BufWriter<File>>>>,
    quarantine_paths: Vec<PathBuf>,
    cohort_path: PathBuf,
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Write {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(write_err(dir))?;
    }
    Ok(BufWriter::with_capacity(
        1 << 20,
        File::create(path).map_err(write_err(path))?,
    ))
}

impl ArtifactSink {
    fn new(
        out_dir: &Path,
        inputs: &[SnapshotSource],
        headers: &[&HeaderMap],
    ) -> Result<ArtifactSink> {
        let extras = extra_union(headers);
        let extra_maps = headers
            .iter()
            .map(|h| {
                extras
                    .iter()
                    .map(|name| h.extra_names().iter().position(|n| **n == **name))
                    .collect()
            })
            .collect();
        let cohort_path = out_dir.join("cohort.csv");
        let mut cohort = csv::WriterBuilder::new()
            .delimiter(OUTPUT_DELIMITER)
            .from_writer(create(&cohort_path)?);
        cohort.write_record(cohort_header(&extras))?;
        Ok(ArtifactSink {
            out_dir: out_dir.to_path_buf(),
            inputs: inputs.to_vec(),
            cohort,
            extra_maps,
            quarantine: inputs.iter().map(|_| None).collect(),
            quarantine_paths: Vec::new(),
            cohort_path,
        })
    }

    fn finish(mut self) -> Result<Vec<PathBuf>> {
        self.cohort.flush().map_err(write_err(&self.cohort_path))?;
        for q in self.quarantine.into_iter().flatten() {
            q.finish()?.flush().map_err(write_err(&self.out_dir))?;
        }
        let mut paths = vec![self.cohort_path];
        paths.extend(self.quarantine_paths);
        Ok(paths)
    }
}

impl PassSink for ArtifactSink {
    fn cohort(&mut self, file: u32, records: &[CohortRecord]) -> Result<()> {
        let map = &self.extra_maps[file as usize];
        let derived = DerivedVar::all();
        let mut fields: Vec<Cow<'_, str>> = Vec::new();
        for c in records {
            fields.clear();
            let r = &c.record;
            fields.push(Cow::Owned(file.to_string()));
            fields.push(Cow::Owned(r.origin.row.to_string()));
            for col in Column::all() {
                fields.push(r.column_text(col).unwrap_or(Cow::Borrowed("")));
            }
            let extras: Vec<Cow<'_, str>> = r.extra.iter().map(|(_, v)| v).collect();
            for slot in map {
                fields.push(slot.map_or(Cow::Borrowed(""), |i| extras[i].clone()));
            }
            fields.push(Cow::Owned(c.stamp.year.to_string()));
            for v in &derived {
                fields.push(Cow::Borrowed(v.value(c).unwrap_or("")));
            }
            self.cohort
                .write_record(fields.iter().map(|f| f.as_bytes()))?;
        }
        Ok(())
    }

    fn malformed(&mut self, file: u32, header: &HeaderMap, rows: &[Malformed]) -> Result<()> {
        let slot = &mut self.quarantine[file as usize];
        if slot.is_none() {
            let source = &self.inputs[file as usize];
            let path = self
                .out_dir
                .join("quarantine")
                .join(format!("{file}_{}.csv", source.year));
            *slot = Some(QuarantineWriter::new(
                create(&path)?,
                header,
                source.delimiter,
            )?);
            self.quarantine_paths.push(path);
        }
        let q = slot.as_mut().expect("opened above");
        for m in rows {
            q.write(m)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputEntry {
    pub path: String,
    pub year: u16,
    pub encoding: String,
    pub delimiter: String,
    pub sha256: String,
    pub rows: u64,
    pub records: u64,
    pub malformed: u64,
    pub date_warnings: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub current_week: u8,
    pub inputs: Vec<InputEntry>,
    pub cohort_records: u64,
    pub funnel: FunnelReport,
    pub tables: Vec<String>,
    pub formats: Vec<Format>,
    pub translated_labels: bool,
    pub strict: bool,
    pub inconsistencies: u64,
    pub artifacts: Vec<ArtifactEntry>,
    /// The only field that varies between identical runs.
    pub generated_at: String,
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub manifest: RunManifest,
    pub pass: PassResult,
    /// Strict mode was requested and an inconsistency was found.
    pub strict_failure: bool,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let f = File::open(path).map_err(|e| Error::Read {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut reader = BufReader::with_capacity(1 << 20, f);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = reader.read(&mut buf).map_err(|e| Error::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((total, hex::encode(hasher.finalize())))
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(write_err(path))?;
    w.flush().map_err(write_err(path))?;
    Ok(path.to_path_buf())
}

fn relative(out_dir: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(out_dir).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn timestamp(epoch: Option<i64>) -> String {
    let secs = epoch.unwrap_or_else(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs() as i64)
    });
    DateTime::from_timestamp(secs, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_default()
}

/// Full build: one pass over the inputs, then every artifact and the manifest.
pub fn run_build(cfg: &RunConfig) -> Result<BuildOutcome> {
    cfg.validate()?;
    let readers = open_inputs(&cfg.inputs)?;
    fs::create_dir_all(&cfg.out_dir).map_err(write_err(&cfg.out_dir))?;

    let (pass, digests) = std::thread::scope(|scope| {
        let hashing: Vec<_> = cfg
            .inputs
            .iter()
            .map(|s| scope.spawn(move || sha256_file(&s.path)))
            .collect();
        let headers: Vec<HeaderMap> = readers.iter().map(|r| (**r.header()).clone()).collect();
        let header_refs: Vec<&HeaderMap> = headers.iter().collect();
        let pass =
            ArtifactSink::new(&cfg.out_dir, &cfg.inputs, &header_refs).and_then(|mut sink| {
                let pool = thread_pool(cfg.jobs)?;
                let pass = pool.install(|| {
                    run_pass(
                        readers,
                        cfg.current_week,
                        &cfg.tables,
                        cfg.chunk_rows,
                        &mut sink,
                        true,
                    )
                })?;
                Ok((pass, sink.finish()?))
            });
        let digests: Vec<Result<(u64, String)>> = hashing
            .into_iter()
            .map(|h| h.join().expect("hashing thread"))
            .collect();
        (pass, digests)
    });
    let (pass, mut written) = pass?;

    for (spec, table) in &pass.tables {
        let table = if cfg.translate {
            table.clone().translated()
        } else {
            table.clone()
        };
        for &format in &cfg.formats {
            let path =
                cfg.out_dir
                    .join("tables")
                    .join(format!("{}.{}", spec.name, format.extension()));
            let body = match format {
                Format::Csv => table.render_dsv(OUTPUT_DELIMITER)?,
                Format::Json => table.render_json()? + "\n",
                Format::Text => table.render_text(),
            };
            written.push(write_text(&path, &body)?);
        }
    }
    for &format in &cfg.formats {
        let path = cfg.out_dir.join(format!("funnel.{}", format.extension()));
        let body = match format {
            Format::Csv => pass.funnel.render_csv(OUTPUT_DELIMITER)?,
            Format::Json => serde_json::to_string_pretty(&pass.funnel)? + "\n",
            Format::Text => pass.funnel.render_text(),
        };
        written.push(write_text(&path, &body)?);
    }
    written.push(write_text(
        &cfg.out_dir.join("findings.json"),
        &(pass.findings.render_json()? + "\n"),
    )?);
    written.push(write_text(
        &cfg.out_dir.join("findings.txt"),
        &pass.findings.render_text(),
    )?);

    let mut artifacts = Vec::with_capacity(written.len());
    for path in &written {
        let (bytes, sha256) = sha256_file(path)?;
        artifacts.push(ArtifactEntry {
            path: relative(&cfg.out_dir, path),
            bytes,
            sha256,
        });
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));

    let mut inputs = Vec::with_capacity(cfg.inputs.len());
    for ((source, stats), digest) in cfg.inputs.iter().zip(&pass.ingest).zip(digests) {
        let (_, sha256) = digest?;
        inputs.push(InputEntry {
            path: source.path.display().to_string(),
            year: source.year,
            encoding: source.encoding.name().to_string(),
            delimiter: (source.delimiter as char).to_string(),
            sha256,
            rows: stats.rows,
            records: stats.records,
            malformed: stats.malformed,
            date_warnings: stats.date_warnings,
        });
    }
    let inconsistencies = pass.findings.inconsistencies();
    let manifest = RunManifest {
        tool: "oobr".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        current_week: cfg.current_week.get(),
        inputs,
        cohort_records: pass.cohort_records,
        funnel: pass.funnel.clone(),
        tables: cfg.tables.iter().map(|t| t.name.clone()).collect(),
        formats: cfg.formats.clone(),
        translated_labels: cfg.translate,
        strict: cfg.strict,
        inconsistencies,
        artifacts,
        generated_at: timestamp(cfg.timestamp),
    };
    write_text(
        &cfg.out_dir.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    Ok(BuildOutcome {
        strict_failure: cfg.strict && inconsistencies > 0,
        manifest,
        pass,
    })
}
