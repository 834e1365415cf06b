//! Snapshot decoding: delimited text with a header row, single-byte encoded,
//! into [`SurveillanceRecord`]s.
//!
//! Rows that cannot be decoded are never dropped silently. Each one is
//! returned as a [`Malformed`] with its reason and can be written to a
//! quarantine sidecar in the input dialect with an extra `reason` column.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use csv::ByteRecord;
use serde::Serialize;

use crate::encoding::TextEncoding;
use crate::error::{Error, Result};
use crate::schema::{CodedField, Column, ExtraFields, RowOrigin, Sex, SurveillanceRecord};

pub const DEFAULT_DATE_FORMAT: &str = "%d/%m/%Y";

/// Years a snapshot may be declared as.
pub const SUPPORTED_YEARS: [u16; 2] = [2020, 2021];

/// One yearly snapshot file and its dialect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SnapshotSource {
    pub path: PathBuf,
    pub year: u16,
    pub delimiter: u8,
    pub encoding: TextEncoding,
    pub date_format: String,
}

impl SnapshotSource {
    pub fn new(path: impl Into<PathBuf>, year: u16) -> Result<SnapshotSource> {
        if !SUPPORTED_YEARS.contains(&year) {
            return Err(Error::Config(format!(
                "snapshot year must be 2020 or 2021, got {year}"
            )));
        }
        Ok(SnapshotSource {
            path: path.into(),
            year,
            delimiter: b';',
            encoding: TextEncoding::default(),
            date_format: DEFAULT_DATE_FORMAT.to_string(),
        })
    }

    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }

    pub fn with_encoding(mut self, encoding: TextEncoding) -> Self {
        self.encoding = encoding;
        self
    }
}

/// Outcome of parsing a `DT_SIN_PRI` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnsetDate {
    Date(NaiveDate),
    Missing,
    /// Present but not a valid calendar date in the expected layout.
    Invalid,
}

impl OnsetDate {
    pub fn date(self) -> Option<NaiveDate> {
        match self {
            OnsetDate::Date(d) => Some(d),
            _ => None,
        }
    }
}

pub fn parse_onset_date(text: &str, format: &str) -> OnsetDate {
    let text = text.trim();
    if is_missing_token(text.as_bytes()) {
        return OnsetDate::Missing;
    }
    match NaiveDate::parse_from_str(text, format) {
        Ok(d) => OnsetDate::Date(d),
        Err(_) => OnsetDate::Invalid,
    }
}

#[inline]
fn is_missing_token(b: &[u8]) -> bool {
    b.is_empty() || b == b"NA"
}

fn trim_ascii(b: &[u8]) -> &[u8] {
    b.trim_ascii()
}

/// A row that could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Malformed {
    pub origin: RowOrigin,
    pub reason: String,
    #[serde(skip)]
    pub raw: ByteRecord,
}

/// Column positions resolved from a header row.
#[derive(Debug, Clone)]
pub struct HeaderMap {
    names: Vec<String>,
    modeled: Vec<(Column, usize)>,
    coded: [Option<usize>; CodedField::COUNT],
    onset: Option<usize>,
    week: Option<usize>,
    sex: Option<usize>,
    age: Option<usize>,
    state: Option<usize>,
    mun_residence: Option<usize>,
    mun_hospital: Option<usize>,
    pcr_text: Option<usize>,
    antigen_text: Option<usize>,
    extra_idx: Vec<usize>,
    extra_names: Arc<[Box<str>]>,
    raw: ByteRecord,
}

impl HeaderMap {
    pub fn parse(raw: &ByteRecord, encoding: TextEncoding, path: &Path) -> Result<HeaderMap> {
        let mut names = Vec::with_capacity(raw.len());
        for (i, field) in raw.iter().enumerate() {
            let mut field = trim_ascii(field);
            if i == 0 {
                field = field.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(field);
            }
            let name = encoding.decode(field).into_owned();
            if names.contains(&name) {
                return Err(Error::BadHeader {
                    path: path.to_path_buf(),
                    message: format!("duplicate column {name}"),
                });
            }
            names.push(name);
        }
        let pos = |name: &str| names.iter().position(|n| n == name);
        for col in Column::REQUIRED {
            if pos(col.name()).is_none() {
                return Err(Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: col.name(),
                });
            }
        }
        let modeled: Vec<(Column, usize)> = Column::all()
            .filter_map(|c| pos(c.name()).map(|i| (c, i)))
            .collect();
        let extra_idx: Vec<usize> = (0..names.len())
            .filter(|i| !modeled.iter().any(|(_, m)| m == i))
            .collect();
        let extra_names: Arc<[Box<str>]> = extra_idx
            .iter()
            .map(|&i| names[i].clone().into_boxed_str())
            .collect();
        let mut coded = [None; CodedField::COUNT];
        for &f in CodedField::ALL {
            coded[f.index()] = pos(f.column());
        }
        Ok(HeaderMap {
            coded,
            onset: pos(Column::Onset.name()),
            week: pos(Column::Week.name()),
            sex: pos(Column::Sex.name()),
            age: pos(Column::Age.name()),
            state: pos(Column::State.name()),
            mun_residence: pos(Column::MunResidence.name()),
            mun_hospital: pos(Column::MunHospital.name()),
            pcr_text: pos(Column::PcrText.name()),
            antigen_text: pos(Column::AntigenText.name()),
            modeled,
            extra_idx,
            extra_names,
            names,
            raw: raw.clone(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn extra_names(&self) -> &[Box<str>] {
        &self.extra_names
    }

    pub fn has_column(&self, column: Column) -> bool {
        self.modeled.iter().any(|(c, _)| *c == column)
    }

    pub fn raw(&self) -> &ByteRecord {
        &self.raw
    }
}

/// Successfully decoded row.
#[derive(Debug, Clone)]
pub struct DecodedRow {
    pub record: SurveillanceRecord,
    /// `DT_SIN_PRI` was present but unparseable and is treated as missing.
    pub date_warning: bool,
}

/// Converts raw rows into records. Stateless and shareable across threads.
#[derive(Debug, Clone)]
pub struct RowDecoder {
    header: Arc<HeaderMap>,
    encoding: TextEncoding,
    date_format: String,
    file: u32,
}

impl RowDecoder {
    pub fn new(header: Arc<HeaderMap>, source: &SnapshotSource, file: u32) -> RowDecoder {
        RowDecoder {
            header,
            encoding: source.encoding,
            date_format: source.date_format.clone(),
            file,
        }
    }

    pub fn header(&self) -> &HeaderMap {
        &self.header
    }

    pub fn decode(&self, raw: &ByteRecord, row: u64) -> Result<DecodedRow, Malformed> {
        let origin = RowOrigin {
            file: self.file,
            row,
        };
        let bad = |reason: String| Malformed {
            origin,
            reason,
            raw: raw.clone(),
        };
        let h = &*self.header;
        if raw.len() != h.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                h.len(),
                raw.len()
            )));
        }
        let field = |idx: Option<usize>| -> Option<&[u8]> {
            let v = trim_ascii(raw.get(idx?)?);
            (!is_missing_token(v)).then_some(v)
        };

        let mut rec = SurveillanceRecord {
            origin,
            ..Default::default()
        };
        let mut date_warning = false;
        if let Some(v) = field(h.onset) {
            match parse_onset_date(&self.encoding.decode(v), &self.date_format) {
                OnsetDate::Date(d) => rec.onset = Some(d),
                _ => date_warning = true,
            }
        }
        if let Some(v) = field(h.week) {
            let week: u8 = parse_int(v).ok_or_else(|| bad(invalid("SEM_PRI", v)))?;
            if !(1..=53).contains(&week) {
                return Err(bad(format!("SEM_PRI {week} outside 1..53")));
            }
            rec.week = Some(week);
        }
        rec.sex = field(h.sex).map(|v| Sex::parse(&self.encoding.decode(v)));
        if let Some(v) = field(h.age) {
            rec.age = Some(parse_int(v).ok_or_else(|| bad(invalid("NU_IDADE_N", v)))?);
        }
        for &f in CodedField::ALL {
            if let Some(v) = field(h.coded[f.index()]) {
                rec.codes[f.index()] =
                    Some(parse_int(v).ok_or_else(|| bad(invalid(f.column(), v)))?);
            }
        }
        if let Some(v) = field(h.mun_residence) {
            rec.mun_residence = Some(parse_int(v).ok_or_else(|| bad(invalid("CO_MUN_RES", v)))?);
        }
        if let Some(v) = field(h.mun_hospital) {
            rec.mun_hospital = Some(parse_int(v).ok_or_else(|| bad(invalid("CO_MU_INTE", v)))?);
        }
        rec.state = field(h.state).map(|v| self.encoding.decode(v).into_owned());
        rec.pcr_text = field(h.pcr_text).map(|v| self.encoding.decode(v).into_owned());
        rec.antigen_text = field(h.antigen_text).map(|v| self.encoding.decode(v).into_owned());

        if !h.extra_idx.is_empty() {
            let values: Vec<&[u8]> = h.extra_idx.iter().map(|&i| trim_ascii(&raw[i])).collect();
            rec.extra = ExtraFields::new(h.extra_names.clone(), &values, self.encoding);
        }
        Ok(DecodedRow {
            record: rec,
            date_warning,
        })
    }
}

fn parse_int<T: std::str::FromStr>(v: &[u8]) -> Option<T> {
    std::str::from_utf8(v).ok()?.parse().ok()
}

fn invalid(column: &str, v: &[u8]) -> String {
    format!("{column}: invalid value {:?}", String::from_utf8_lossy(v))
}

/// Per-file ingest accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub path: PathBuf,
    pub year: u16,
    /// Data rows read (header excluded).
    pub rows: u64,
    pub records: u64,
    pub malformed: u64,
    /// Present but unparseable onset dates, treated as missing.
    pub date_warnings: u64,
    /// Missing values per modeled column over emitted records, in
    /// [`Column::all`] order.
    #[serde(serialize_with = "missing_by_name")]
    pub missing: Vec<u64>,
}

fn missing_by_name<S: serde::Serializer>(
    missing: &[u64],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_map(Column::all().map(Column::name).zip(missing.iter().copied()))
}

impl IngestStats {
    pub fn new(source: &SnapshotSource) -> IngestStats {
        IngestStats {
            path: source.path.clone(),
            year: source.year,
            missing: vec![0; Column::all().count()],
            ..Default::default()
        }
    }

    pub fn observe(&mut self, row: &DecodedRow) {
        self.rows += 1;
        self.records += 1;
        self.date_warnings += u64::from(row.date_warning);
        let rec = &row.record;
        for (i, col) in Column::all().enumerate() {
            let missing = match col {
                Column::Onset => rec.onset.is_none(),
                Column::Week => rec.week.is_none(),
                Column::Sex => rec.sex.is_none(),
                Column::Age => rec.age.is_none(),
                Column::State => rec.state.is_none(),
                Column::MunResidence => rec.mun_residence.is_none(),
                Column::MunHospital => rec.mun_hospital.is_none(),
                Column::PcrText => rec.pcr_text.is_none(),
                Column::AntigenText => rec.antigen_text.is_none(),
                Column::Coded(f) => rec.code(f).is_none(),
            };
            self.missing[i] += u64::from(missing);
        }
    }

    pub fn missing_count(&self, column: Column) -> u64 {
        Column::all()
            .position(|c| c == column)
            .map_or(0, |i| self.missing[i])
    }

    /// Adds counts from another partition of the same file.
    pub fn merge(&mut self, other: &IngestStats) {
        self.rows += other.rows;
        self.records += other.records;
        self.malformed += other.malformed;
        self.date_warnings += other.date_warnings;
        for (a, b) in self.missing.iter_mut().zip(&other.missing) {
            *a += b;
        }
    }

    pub fn observe_malformed(&mut self) {
        self.rows += 1;
        self.malformed += 1;
    }

    /// Every data row is either a record or quarantined.
    pub fn is_balanced(&self) -> bool {
        self.rows == self.records + self.malformed
    }
}

/// Sequential reader of raw rows. Decoding is separate so that chunks can be
/// decoded on worker threads.
pub struct SnapshotReader {
    source: SnapshotSource,
    reader: csv::Reader<Box<dyn Read + Send>>,
    header: Arc<HeaderMap>,
    next_row: u64,
}

impl SnapshotReader {
    pub fn open(source: &SnapshotSource) -> Result<SnapshotReader> {
        let file = File::open(&source.path).map_err(|e| Error::Read {
            path: source.path.clone(),
            source: e,
        })?;
        SnapshotReader::from_reader(source, Box::new(BufReader::with_capacity(1 << 20, file)))
    }

    pub fn from_reader(
        source: &SnapshotSource,
        input: Box<dyn Read + Send>,
    ) -> Result<SnapshotReader> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(source.delimiter)
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::None)
            .buffer_capacity(1 << 20)
            .from_reader(input);
        let mut raw = ByteRecord::new();
        let read = reader
            .read_byte_record(&mut raw)
            .map_err(|e| csv_to_read_error(e, &source.path))?;
        if !read {
            return Err(Error::BadHeader {
                path: source.path.clone(),
                message: "file is empty; a header row is required".into(),
            });
        }
        let header = Arc::new(HeaderMap::parse(&raw, source.encoding, &source.path)?);
        Ok(SnapshotReader {
            source: source.clone(),
            reader,
            header,
            next_row: 1,
        })
    }

    pub fn header(&self) -> &Arc<HeaderMap> {
        &self.header
    }

    pub fn source(&self) -> &SnapshotSource {
        &self.source
    }

    pub fn decoder(&self, file: u32) -> RowDecoder {
        RowDecoder::new(self.header.clone(), &self.source, file)
    }

    /// Reads up to `max` raw rows with their 1-based row numbers. An empty
    /// chunk means end of file.
    pub fn next_chunk(&mut self, max: usize) -> Result<Vec<(u64, ByteRecord)>> {
        let mut out = Vec::with_capacity(max.min(1 << 16));
        while out.len() < max {
            let mut rec = ByteRecord::new();
            let more = self
                .reader
                .read_byte_record(&mut rec)
                .map_err(|e| csv_to_read_error(e, &self.source.path))?;
            if !more {
                break;
            }
            out.push((self.next_row, rec));
            self.next_row += 1;
        }
        Ok(out)
    }
}

fn csv_to_read_error(e: csv::Error, path: &Path) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::Read {
                path: path.to_path_buf(),
                source: io,
            };
        }
        unreachable!("is_io_error checked");
    }
    Error::Csv(e)
}

/// Sequential record stream over one snapshot.
pub struct RecordStream {
    reader: SnapshotReader,
    decoder: RowDecoder,
    buffer: std::vec::IntoIter<(u64, ByteRecord)>,
    stats: IngestStats,
    malformed: Vec<Malformed>,
    failed: bool,
}

impl RecordStream {
    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn malformed(&self) -> &[Malformed] {
        &self.malformed
    }

    pub fn into_parts(self) -> (IngestStats, Vec<Malformed>) {
        (self.stats, self.malformed)
    }
}

impl Iterator for RecordStream {
    type Item = Result<SurveillanceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.failed {
                return None;
            }
            if let Some((row, raw)) = self.buffer.next() {
                match self.decoder.decode(&raw, row) {
                    Ok(decoded) => {
                        self.stats.observe(&decoded);
                        return Some(Ok(decoded.record));
                    }
                    Err(m) => {
                        self.stats.observe_malformed();
                        self.malformed.push(m);
                        continue;
                    }
                }
            }
            match self.reader.next_chunk(4096) {
                Ok(chunk) if chunk.is_empty() => return None,
                Ok(chunk) => self.buffer = chunk.into_iter(),
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

/// Opens a snapshot as a record stream. `file` is the index recorded in each
/// record's origin.
pub fn read_snapshot(source: &SnapshotSource, file: u32) -> Result<RecordStream> {
    let reader = SnapshotReader::open(source)?;
    Ok(stream_from(reader, file))
}

pub fn stream_from(reader: SnapshotReader, file: u32) -> RecordStream {
    let decoder = reader.decoder(file);
    let stats = IngestStats::new(reader.source());
    RecordStream {
        reader,
        decoder,
        buffer: Vec::new().into_iter(),
        stats,
        malformed: Vec::new(),
        failed: false,
    }
}

/// Concatenates two record streams: all of `a`, then all of `b`.
pub fn merge_snapshots<A, B, T>(a: A, b: B) -> std::iter::Chain<A::IntoIter, B::IntoIter>
where
    A: IntoIterator<Item = T>,
    B: IntoIterator<Item = T>,
{
    a.into_iter().chain(b)
}

/// Writes quarantined rows in the input dialect plus a trailing `reason`
/// column.
pub struct QuarantineWriter<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> QuarantineWriter<W> {
    pub fn new(out: W, header: &HeaderMap, delimiter: u8) -> Result<QuarantineWriter<W>> {
        let mut writer = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .flexible(true)
            .from_writer(out);
        let mut head = header.raw().clone();
        head.push_field(b"reason");
        writer.write_byte_record(&head)?;
        Ok(QuarantineWriter { writer })
    }

    pub fn write(&mut self, m: &Malformed) -> Result<()> {
        let mut rec = m.raw.clone();
        rec.push_field(format!("row {}: {}", m.origin.row, m.reason).as_bytes());
        self.writer.write_byte_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush().map_err(|e| Error::Write {
            path: PathBuf::new(),
            source: e,
        })?;
        self.writer.into_inner().map_err(|e| Error::Write {
            path: PathBuf::new(),
            source: e.into_error(),
        })
    }
}
