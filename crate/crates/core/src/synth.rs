//! Seeded generator of SIVEP-Gripe-shaped snapshots with a ground-truth
//! manifest of per-field counts and planted anomalies.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::TextEncoding;
use crate::epiweek::{week_dates, weeks_in_year};
use crate::error::{Error, Result};
use crate::schema::{CodeBook, CodedField, Column};

const BLOCK_ROWS: u64 = 8192;
const ENCODING: TextEncoding = TextEncoding::Iso8859_2;
/// Manifest key for missing values.
pub const MISSING_KEY: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgeDist {
    pub min: i32,
    pub max: i32,
    pub missing: f64,
}

impl Default for AgeDist {
    fn default() -> Self {
        AgeDist {
            min: 0,
            max: 99,
            missing: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyRates {
    /// `CS_SEXO=M` with `CS_GESTANT` in 1..4.
    pub male_pregnant: f64,
    /// `CS_SEXO=M` with `PUERPERA=1`.
    pub male_puerperal: f64,
    /// `CS_GESTANT=0`.
    pub out_of_dictionary: f64,
    pub malformed: f64,
    /// Onset on the first days of 2021 stamped week 53 (2021 file only).
    pub week53_2021: f64,
}

impl Default for AnomalyRates {
    fn default() -> Self {
        AnomalyRates {
            male_pregnant: 0.0,
            male_puerperal: 0.0,
            out_of_dictionary: 0.0002,
            malformed: 0.0,
            week53_2021: 0.015,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Municipality {
    pub code: u32,
    pub name: String,
}

/// Category weights per column; `""` stands for a missing value.
pub type Weights = Vec<(String, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub rows_2020: u64,
    pub rows_2021: u64,
    /// Inclusive week range for 2020 onsets.
    pub weeks_2020: (u8, u8),
    /// Inclusive week range for 2021 onsets.
    pub weeks_2021: (u8, u8),
    pub onset_missing: f64,
    /// Present but not a calendar date, e.g. `31/02/2020`.
    pub onset_invalid: f64,
    pub age: AgeDist,
    /// Categorical columns: CS_SEXO, SG_UF, DS_PCR_OUT, DS_AN_OUT and every
    /// coded field. Columns left out use the defaults.
    pub fields: BTreeMap<String, Weights>,
    pub municipalities: Vec<Municipality>,
    pub residence_missing: f64,
    pub hospital_missing: f64,
    pub hospital_same: f64,
    pub anomalies: AnomalyRates,
}

/// Yearly row counts of the April 2021 extract, used to split a total.
const EXTRACT_2020: u64 = 1_176_512;
const EXTRACT_TOTAL: u64 = 1_847_134;

pub const STATES: [&str; 27] = [
    "AC", "AL", "AM", "AP", "BA", "CE", "DF", "ES", "GO", "MA", "MG", "MS", "MT", "PA", "PB", "PE",
    "PI", "PR", "RJ", "RN", "RO", "RR", "RS", "SC", "SE", "SP", "TO",
];

fn w(items: &[(&str, f64)]) -> Weights {
    items.iter().map(|&(v, p)| (v.to_string(), p)).collect()
}

/// Documented codes uniformly, plus a missing share.
fn uniform_codes(field: CodedField, missing: f64) -> Weights {
    let dict = CodeBook::sivep()
        .field(field.column())
        .expect("every coded field has a dictionary");
    let n = dict.entries.len() as f64;
    let mut out: Weights = dict
        .entries
        .iter()
        .map(|e| (e.code.to_string(), (1.0 - missing) / n))
        .collect();
    out.push((String::new(), missing));
    out
}

pub fn default_weights(column: &str) -> Option<Weights> {
    Some(match column {
        "CS_SEXO" => w(&[("F", 0.47), ("M", 0.5285), ("I", 0.0005), ("", 0.001)]),
        "SG_UF" => {
            let mut out: Weights = STATES
                .iter()
                .map(|s| (s.to_string(), 0.998 / 27.0))
                .collect();
            out.push((String::new(), 0.002));
            out
        }
        "DS_PCR_OUT" => w(&[
            ("", 0.9),
            ("SARS-COV-2", 0.03),
            ("NOVO CORONAVIRUS", 0.01),
            ("COVID-19", 0.01),
            ("covid 19 detectável", 0.005),
            ("VIRUS SINCICIAL RESPIRATORIO", 0.02),
            ("INFLUENZA A; H1N1", 0.015),
            ("RINOVÍRUS", 0.01),
        ]),
        "DS_AN_OUT" => w(&[
            ("", 0.95),
            ("SARS-COV-2", 0.02),
            ("CONA", 0.005),
            ("coronavírus", 0.005),
            ("INFLUENZA B", 0.02),
        ]),
        "CS_GESTANT" => w(&[
            ("1", 0.03),
            ("2", 0.05),
            ("3", 0.1),
            ("4", 0.01),
            ("5", 0.3),
            ("6", 0.4),
            ("9", 0.08),
            ("", 0.03),
        ]),
        "PUERPERA" => w(&[("1", 0.06), ("2", 0.37), ("9", 0.02), ("", 0.55)]),
        "CLASSI_FIN" => w(&[
            ("1", 0.01),
            ("2", 0.01),
            ("3", 0.01),
            ("4", 0.35),
            ("5", 0.5),
            ("", 0.12),
        ]),
        "PCR_SARS2" => w(&[("1", 0.3), ("", 0.7)]),
        "AN_SARS2" => w(&[("1", 0.05), ("", 0.95)]),
        "RES_IGG" | "RES_IGM" | "RES_IGA" => w(&[
            ("1", 0.05),
            ("2", 0.1),
            ("3", 0.01),
            ("4", 0.1),
            ("5", 0.01),
            ("9", 0.03),
            ("", 0.7),
        ]),
        other => uniform_codes(CodedField::from_column(other)?, 0.15),
    })
}

/// Every categorical column the generator draws.
fn categorical_columns() -> Vec<Column> {
    [
        Column::Sex,
        Column::State,
        Column::PcrText,
        Column::AntigenText,
    ]
    .into_iter()
    .chain(CodedField::ALL.iter().map(|&f| Column::Coded(f)))
    .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        let fields = categorical_columns()
            .into_iter()
            .map(|c| {
                (
                    c.name().to_string(),
                    default_weights(c.name()).expect("default exists"),
                )
            })
            .collect();
        let municipalities = [
            (3304557, "RIO DE JANEIRO"),
            (5300108, "BRASÍLIA"),
            (2927408, "SALVADOR"),
            (2304400, "FORTALEZA"),
            (3106200, "BELO HORIZONTE"),
            (1302603, "MANAUS"),
            (4106902, "CURITIBA"),
            (2611606, "RECIFE"),
            (5208707, "GOIÂNIA"),
            (1501402, "BELÉM"),
            (4314902, "PORTO ALEGRE"),
            (2704302, "MACEIÓ"),
        ]
        .into_iter()
        .map(|(code, name)| Municipality {
            code,
            name: name.to_string(),
        })
        .collect();
        SynthConfig {
            seed: 0,
            rows_2020: 6000,
            rows_2021: 4000,
            weeks_2020: (1, 53),
            weeks_2021: (1, 17),
            onset_missing: 0.002,
            onset_invalid: 0.0005,
            age: AgeDist::default(),
            fields,
            municipalities,
            residence_missing: 0.01,
            hospital_missing: 0.1,
            hospital_same: 0.8,
            anomalies: AnomalyRates::default(),
        }
    }
}

impl SynthConfig {
    /// Splits `rows` between the two years in the April 2021 extract proportion.
    pub fn with_total_rows(mut self, rows: u64) -> Self {
        self.rows_2020 = ((u128::from(rows) * u128::from(EXTRACT_2020)
            + u128::from(EXTRACT_TOTAL) / 2)
            / u128::from(EXTRACT_TOTAL)) as u64;
        self.rows_2021 = rows - self.rows_2020;
        self
    }

    pub fn total_rows(&self) -> u64 {
        self.rows_2020 + self.rows_2021
    }

    pub fn rows_for(&self, year: u16) -> u64 {
        if year == 2020 {
            self.rows_2020
        } else {
            self.rows_2021
        }
    }

    /// Replaces one column's weights.
    pub fn set_field(&mut self, column: &str, weights: &[(&str, f64)]) {
        self.fields.insert(column.to_string(), w(weights));
    }

    pub fn validate(&self) -> Result<()> {
        compile(self).map(|_| ())
    }
}

fn rate(name: &str, p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::Config(format!("{name} must be in [0, 1], got {p}")))
    }
}

fn encoded(text: &str) -> Result<Vec<u8>> {
    ENCODING
        .encode(text)
        .map(|b| b.into_owned())
        .ok_or_else(|| Error::Config(format!("{text:?} cannot be written as {}", ENCODING.name())))
}

struct CatField {
    column: Column,
    /// Raw tokens; empty means missing.
    tokens: Vec<String>,
    bytes: Vec<Vec<u8>>,
    dist: WeightedIndex<f64>,
    /// Used for male rows on CS_GESTANT and PUERPERA.
    male_dist: Option<WeightedIndex<f64>>,
}

impl CatField {
    fn index_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }
}

struct Compiled {
    cats: Vec<CatField>,
    sex: usize,
    state: usize,
    gestant: usize,
    puerpera: usize,
    pcr_text: usize,
    antigen_text: usize,
    munis: Vec<(String, Vec<u8>)>,
}

fn weighted(name: &str, weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::Config(format!("{name}: {e}")))
}

fn compile(cfg: &SynthConfig) -> Result<Compiled> {
    for (name, p) in [
        ("onset_missing", cfg.onset_missing),
        ("onset_invalid", cfg.onset_invalid),
        ("age.missing", cfg.age.missing),
        ("residence_missing", cfg.residence_missing),
        ("hospital_missing", cfg.hospital_missing),
        ("hospital_same", cfg.hospital_same),
        ("anomalies.male_pregnant", cfg.anomalies.male_pregnant),
        ("anomalies.male_puerperal", cfg.anomalies.male_puerperal),
        (
            "anomalies.out_of_dictionary",
            cfg.anomalies.out_of_dictionary,
        ),
        ("anomalies.malformed", cfg.anomalies.malformed),
        ("anomalies.week53_2021", cfg.anomalies.week53_2021),
    ] {
        rate(name, p)?;
    }
    let a = &cfg.anomalies;
    if a.male_pregnant + a.male_puerperal + a.out_of_dictionary + a.malformed + a.week53_2021 > 1.0
    {
        return Err(Error::Config("anomaly rates sum to more than 1".into()));
    }
    if cfg.onset_missing + cfg.onset_invalid > 1.0 {
        return Err(Error::Config(
            "onset_missing + onset_invalid exceeds 1".into(),
        ));
    }
    if cfg.age.min > cfg.age.max {
        return Err(Error::Config(format!(
            "age range {}..{} is empty",
            cfg.age.min, cfg.age.max
        )));
    }
    for (year, (lo, hi)) in [(2020, cfg.weeks_2020), (2021, cfg.weeks_2021)] {
        if lo < 1 || lo > hi || hi > weeks_in_year(year) {
            return Err(Error::Config(format!(
                "weeks_{year} range {lo}..{hi} is not within 1..{}",
                weeks_in_year(year)
            )));
        }
    }
    if cfg.municipalities.is_empty() {
        return Err(Error::Config(
            "at least one municipality is required".into(),
        ));
    }
    let columns = categorical_columns();
    for name in cfg.fields.keys() {
        if !columns.iter().any(|c| c.name() == name) {
            return Err(Error::UndeclaredField(name.clone()));
        }
    }
    let male_possible = cfg
        .fields
        .get("CS_SEXO")
        .cloned()
        .or_else(|| default_weights("CS_SEXO"))
        .is_some_and(|w| w.iter().any(|(t, p)| t == "M" && *p > 0.0));
    let mut cats = Vec::with_capacity(columns.len());
    for column in columns {
        let name = column.name();
        let weights = match cfg.fields.get(name) {
            Some(w) => w.clone(),
            None => default_weights(name).expect("default exists"),
        };
        let sum: f64 = weights.iter().map(|(_, p)| *p).sum();
        if weights.iter().any(|(_, p)| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "{name}: probabilities must be in [0, 1] and sum to 1, sum is {sum}"
            )));
        }
        if let Column::Coded(_) = column {
            if let Some((t, _)) = weights
                .iter()
                .find(|(t, _)| !t.is_empty() && t.parse::<i16>().is_err())
            {
                return Err(Error::Config(format!(
                    "{name}: {t:?} is not an integer code"
                )));
            }
        }
        let tokens: Vec<String> = weights.iter().map(|(t, _)| t.clone()).collect();
        let bytes = tokens
            .iter()
            .map(|t| encoded(t))
            .collect::<Result<Vec<_>>>()?;
        let probs: Vec<f64> = weights.iter().map(|(_, p)| *p).collect();
        let male_excluded: Option<&[&str]> = match column {
            Column::Coded(CodedField::CsGestant) => Some(&["1", "2", "3", "4"]),
            Column::Coded(CodedField::Puerpera) => Some(&["1"]),
            _ => None,
        };
        let male_dist = match male_excluded {
            Some(excluded) => {
                let mut p: Vec<f64> = tokens
                    .iter()
                    .zip(&probs)
                    .map(|(t, &p)| {
                        if excluded.contains(&t.as_str()) {
                            0.0
                        } else {
                            p
                        }
                    })
                    .collect();
                if p.iter().all(|&x| x == 0.0) {
                    if male_possible {
                        return Err(Error::Config(format!(
                            "{name}: no category left for male rows"
                        )));
                    }
                    None
                } else {
                    p.iter_mut().for_each(|x| *x = x.max(0.0));
                    Some(weighted(name, &p)?)
                }
            }
            None => None,
        };
        cats.push(CatField {
            column,
            tokens,
            bytes,
            dist: weighted(name, &probs)?,
            male_dist,
        });
    }
    let find = |c: Column| {
        cats.iter()
            .position(|f| f.column == c)
            .expect("column compiled")
    };
    let munis = cfg
        .municipalities
        .iter()
        .map(|m| Ok((m.code.to_string(), encoded(&m.name)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Compiled {
        sex: find(Column::Sex),
        state: find(Column::State),
        gestant: find(Column::Coded(CodedField::CsGestant)),
        puerpera: find(Column::Coded(CodedField::Puerpera)),
        pcr_text: find(Column::PcrText),
        antigen_text: find(Column::AntigenText),
        cats,
        munis,
    })
}

/// Header written by the generator.
pub fn header() -> Vec<&'static str> {
    let mut h = vec![
        "NU_NOTIFIC",
        "DT_NOTIFIC",
        "DT_SIN_PRI",
        "SEM_PRI",
        "SG_UF",
        "ID_MUNICIP",
        "CO_MUN_RES",
        "CO_MU_INTE",
        "CS_SEXO",
        "NU_IDADE_N",
    ];
    h.extend(CodedField::ALL.iter().map(|f| f.column()));
    h.extend(["DS_PCR_OUT", "DS_AN_OUT"]);
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedRow {
    pub year: u16,
    /// 1-based data row number within the file.
    pub row: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Anomaly {
    None,
    MalePregnant,
    MalePuerperal,
    OutOfDictionary,
    Malformed,
    Week53,
}

impl Anomaly {
    fn key(self) -> &'static str {
        match self {
            Anomaly::None => "none",
            Anomaly::MalePregnant => "male_pregnant",
            Anomaly::MalePuerperal => "male_puerperal",
            Anomaly::OutOfDictionary => "out_of_dictionary",
            Anomaly::Malformed => "malformed",
            Anomaly::Week53 => "week53_2021",
        }
    }

    fn draw(rng: &mut ChaCha8Rng, rates: &AnomalyRates, year: u16) -> Anomaly {
        let u: f64 = rng.gen();
        let w53 = if year == 2021 { rates.week53_2021 } else { 0.0 };
        let mut acc = 0.0;
        for (p, kind) in [
            (rates.male_pregnant, Anomaly::MalePregnant),
            (rates.male_puerperal, Anomaly::MalePuerperal),
            (rates.out_of_dictionary, Anomaly::OutOfDictionary),
            (rates.malformed, Anomaly::Malformed),
            (w53, Anomaly::Week53),
        ] {
            acc += p;
            if u < acc {
                return kind;
            }
        }
        Anomaly::None
    }
}

/// Ground truth for one generated file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotTruth {
    pub rows: u64,
    pub malformed: u64,
    /// Per column, token (or `NA`) to count, over well-formed rows.
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
    /// `year-week` of the uncorrected stamp to count, rows with a valid onset.
    pub stamps: BTreeMap<String, u64>,
    pub onset_missing: u64,
    pub onset_invalid: u64,
    pub anomalies: BTreeMap<String, Vec<PlantedRow>>,
}

impl SnapshotTruth {
    fn merge(&mut self, other: SnapshotTruth) {
        self.rows += other.rows;
        self.malformed += other.malformed;
        for (col, m) in other.counts {
            let into = self.counts.entry(col).or_default();
            for (k, n) in m {
                *into.entry(k).or_insert(0) += n;
            }
        }
        for (k, n) in other.stamps {
            *self.stamps.entry(k).or_insert(0) += n;
        }
        self.onset_missing += other.onset_missing;
        self.onset_invalid += other.onset_invalid;
        for (k, rows) in other.anomalies {
            self.anomalies.entry(k).or_default().extend(rows);
        }
    }

    pub fn count(&self, column: &str, token: &str) -> u64 {
        self.counts
            .get(column)
            .and_then(|m| m.get(token))
            .copied()
            .unwrap_or(0)
    }

    pub fn planted(&self, kind: &str) -> &[PlantedRow] {
        self.anomalies.get(kind).map_or(&[], Vec::as_slice)
    }
}

/// Dense counters filled while generating one block.
struct BlockTally {
    cats: Vec<Vec<u64>>,
    /// Tokens forced by anomalies that are not among a column's categories.
    forced: BTreeMap<(usize, String), u64>,
    ages: Vec<u64>,
    age_missing: u64,
    stamps: BTreeMap<(i32, u8), u64>,
    onset_missing: u64,
    onset_invalid: u64,
    malformed: u64,
    anomalies: Vec<(Anomaly, u64)>,
}

impl BlockTally {
    fn new(c: &Compiled, cfg: &SynthConfig) -> BlockTally {
        BlockTally {
            cats: c.cats.iter().map(|f| vec![0; f.tokens.len()]).collect(),
            forced: BTreeMap::new(),
            ages: vec![0; (cfg.age.max - cfg.age.min + 1) as usize],
            age_missing: 0,
            stamps: BTreeMap::new(),
            onset_missing: 0,
            onset_invalid: 0,
            malformed: 0,
            anomalies: Vec::new(),
        }
    }
}

/// A categorical draw: an index into the column's tokens or a forced token.
enum Pick {
    Index(usize),
    Forced(&'static str),
}

struct RowGen<'a> {
    cfg: &'a SynthConfig,
    c: &'a Compiled,
    year: u16,
    days_2020: Vec<Vec<NaiveDate>>,
    days_2021: Vec<Vec<NaiveDate>>,
}

fn calendar_days(year: u16, weeks: (u8, u8)) -> Vec<Vec<NaiveDate>> {
    (weeks.0..=weeks.1)
        .map(|wk| {
            week_dates(i32::from(year), wk)
                .expect("week range validated")
                .into_iter()
                .filter(|d| d.year() == i32::from(year))
                .collect()
        })
        .collect()
}

impl RowGen<'_> {
    fn pick(&self, rng: &mut ChaCha8Rng, field: usize, male: bool) -> Pick {
        let f = &self.c.cats[field];
        let dist = match (&f.male_dist, male) {
            (Some(d), true) => d,
            _ => &f.dist,
        };
        Pick::Index(dist.sample(rng))
    }

    fn forced(&self, field: usize, token: &'static str) -> Pick {
        match self.c.cats[field].index_of(token) {
            Some(i) => Pick::Index(i),
            None => Pick::Forced(token),
        }
    }

    /// Fills `rec` with row number `row` and records it in `t`.
    fn row(&self, rng: &mut ChaCha8Rng, row: u64, rec: &mut csv::ByteRecord, t: &mut BlockTally) {
        let c = self.c;
        let anomaly = Anomaly::draw(rng, &self.cfg.anomalies, self.year);
        let mut picks: Vec<Pick> = (0..c.cats.len()).map(|_| Pick::Index(0)).collect();
        picks[c.sex] = match anomaly {
            Anomaly::MalePregnant | Anomaly::MalePuerperal => self.forced(c.sex, "M"),
            _ => self.pick(rng, c.sex, false),
        };
        let male = match &picks[c.sex] {
            Pick::Index(i) => c.cats[c.sex].tokens[*i] == "M",
            Pick::Forced(tok) => *tok == "M",
        };
        #[allow(clippy::needless_range_loop)]
        for i in 0..c.cats.len() {
            if i == c.sex {
                continue;
            }
            picks[i] = match (anomaly, i) {
                (Anomaly::MalePregnant, i) if i == c.gestant => {
                    self.forced(i, ["1", "2", "3", "4"][rng.gen_range(0..4)])
                }
                (Anomaly::OutOfDictionary, i) if i == c.gestant => self.forced(i, "0"),
                (Anomaly::MalePuerperal, i) if i == c.puerpera => self.forced(i, "1"),
                _ => self.pick(rng, i, male),
            };
        }

        // onset and week
        let (onset_text, week, stamp): (String, u8, Option<(i32, u8)>) =
            if anomaly == Anomaly::Week53 {
                let d = NaiveDate::from_ymd_opt(2021, 1, rng.gen_range(1..=2)).expect("valid date");
                (d.format("%d/%m/%Y").to_string(), 53, Some((2021, 53)))
            } else {
                let (days, (lo, _)) = if self.year == 2020 {
                    (&self.days_2020, self.cfg.weeks_2020)
                } else {
                    (&self.days_2021, self.cfg.weeks_2021)
                };
                let wi = rng.gen_range(0..days.len());
                let week = lo + wi as u8;
                let u: f64 = rng.gen();
                if u < self.cfg.onset_missing {
                    (String::new(), week, None)
                } else if u < self.cfg.onset_missing + self.cfg.onset_invalid {
                    (format!("31/02/{}", self.year), week, None)
                } else {
                    let d = days[wi][rng.gen_range(0..days[wi].len())];
                    (
                        d.format("%d/%m/%Y").to_string(),
                        week,
                        Some((d.year(), week)),
                    )
                }
            };
        let age = if rng.gen::<f64>() < self.cfg.age.missing {
            None
        } else {
            Some(rng.gen_range(self.cfg.age.min..=self.cfg.age.max))
        };
        let muni_pick = |rng: &mut ChaCha8Rng| rng.gen_range(0..c.munis.len());
        let residence = (rng.gen::<f64>() >= self.cfg.residence_missing).then(|| muni_pick(rng));
        let hospital = if rng.gen::<f64>() < self.cfg.hospital_missing {
            None
        } else if let (Some(r), true) = (residence, rng.gen::<f64>() < self.cfg.hospital_same) {
            Some(r)
        } else {
            Some(muni_pick(rng))
        };
        let notified = if onset_text.is_empty() || stamp.is_none() {
            String::new()
        } else {
            let d = NaiveDate::parse_from_str(&onset_text, "%d/%m/%Y").expect("generated date");
            (d + Duration::days(rng.gen_range(0..15)))
                .format("%d/%m/%Y")
                .to_string()
        };
        let malformed_kind = if anomaly == Anomaly::Malformed {
            rng.gen_range(0..3u8)
        } else {
            u8::MAX
        };

        let token = |p: &Pick, field: usize| -> &[u8] {
            match p {
                Pick::Index(i) => &c.cats[field].bytes[*i],
                Pick::Forced(tok) => tok.as_bytes(),
            }
        };
        rec.clear();
        rec.push_field(format!("{}{:09}", self.year, row).as_bytes());
        rec.push_field(notified.as_bytes());
        rec.push_field(onset_text.as_bytes());
        if malformed_kind == 0 {
            rec.push_field(b"60");
        } else {
            rec.push_field(week.to_string().as_bytes());
        }
        rec.push_field(token(&picks[c.state], c.state));
        rec.push_field(residence.map_or(&[][..], |i| &c.munis[i].1));
        rec.push_field(
            residence
                .map_or(String::new(), |i| c.munis[i].0.clone())
                .as_bytes(),
        );
        rec.push_field(
            hospital
                .map_or(String::new(), |i| c.munis[i].0.clone())
                .as_bytes(),
        );
        rec.push_field(token(&picks[c.sex], c.sex));
        match (malformed_kind, age) {
            (1, _) => rec.push_field(b"abc"),
            (_, Some(a)) => rec.push_field(a.to_string().as_bytes()),
            (_, None) => rec.push_field(b""),
        }
        for &f in CodedField::ALL {
            let i = c
                .cats
                .iter()
                .position(|x| x.column == Column::Coded(f))
                .expect("compiled");
            rec.push_field(token(&picks[i], i));
        }
        if malformed_kind == 2 {
            // truncated row: the two free-text columns are lost
        } else {
            rec.push_field(token(&picks[c.pcr_text], c.pcr_text));
            rec.push_field(token(&picks[c.antigen_text], c.antigen_text));
        }

        if anomaly != Anomaly::None {
            t.anomalies.push((anomaly, row));
        }
        if anomaly == Anomaly::Malformed {
            t.malformed += 1;
            return;
        }
        for (i, p) in picks.iter().enumerate() {
            match p {
                Pick::Index(k) => t.cats[i][*k] += 1,
                Pick::Forced(tok) => *t.forced.entry((i, tok.to_string())).or_insert(0) += 1,
            }
        }
        match age {
            Some(a) => t.ages[(a - self.cfg.age.min) as usize] += 1,
            None => t.age_missing += 1,
        }
        match (stamp, onset_text.is_empty()) {
            (Some(s), _) => *t.stamps.entry(s).or_insert(0) += 1,
            (None, true) => t.onset_missing += 1,
            (None, false) => t.onset_invalid += 1,
        }
    }
}

fn truth_from(
    c: &Compiled,
    cfg: &SynthConfig,
    year: u16,
    rows: u64,
    t: BlockTally,
) -> SnapshotTruth {
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (i, f) in c.cats.iter().enumerate() {
        let m = counts.entry(f.column.name().to_string()).or_default();
        for (k, &n) in t.cats[i].iter().enumerate() {
            if n > 0 {
                let key = if f.tokens[k].is_empty() {
                    MISSING_KEY
                } else {
                    &f.tokens[k]
                };
                *m.entry(key.to_string()).or_insert(0) += n;
            }
        }
    }
    for ((i, tok), n) in t.forced {
        *counts
            .entry(c.cats[i].column.name().to_string())
            .or_default()
            .entry(tok)
            .or_insert(0) += n;
    }
    let ages = counts.entry("NU_IDADE_N".to_string()).or_default();
    for (k, &n) in t.ages.iter().enumerate() {
        if n > 0 {
            ages.insert((cfg.age.min + k as i32).to_string(), n);
        }
    }
    if t.age_missing > 0 {
        ages.insert(MISSING_KEY.to_string(), t.age_missing);
    }
    let mut anomalies: BTreeMap<String, Vec<PlantedRow>> = BTreeMap::new();
    for (kind, row) in t.anomalies {
        anomalies
            .entry(kind.key().to_string())
            .or_default()
            .push(PlantedRow { year, row });
    }
    SnapshotTruth {
        rows,
        malformed: t.malformed,
        counts,
        stamps: t
            .stamps
            .into_iter()
            .map(|((y, w), n)| (format!("{y}-{w:02}"), n))
            .collect(),
        onset_missing: t.onset_missing,
        onset_invalid: t.onset_invalid,
        anomalies,
    }
}

/// Writes one year's snapshot to `out` and returns its ground truth.
pub fn write_snapshot<W: Write>(cfg: &SynthConfig, year: u16, out: W) -> Result<SnapshotTruth> {
    if year != 2020 && year != 2021 {
        return Err(Error::Config(format!(
            "synthetic snapshots cover 2020 and 2021, not {year}"
        )));
    }
    let c = compile(cfg)?;
    let gen = RowGen {
        cfg,
        c: &c,
        year,
        days_2020: calendar_days(2020, cfg.weeks_2020),
        days_2021: calendar_days(2021, cfg.weeks_2021),
    };
    let rows = cfg.rows_for(year);
    let mut out = out;
    let io = |e| Error::Write {
        path: PathBuf::new(),
        source: e,
    };
    let mut head = csv::WriterBuilder::new()
        .delimiter(b';')
        .from_writer(Vec::new());
    head.write_record(header())?;
    out.write_all(
        &head
            .into_inner()
            .map_err(|e| Error::Config(e.to_string()))?,
    )
    .map_err(io)?;
    let blocks = rows.div_ceil(BLOCK_ROWS);
    let batch = (rayon::current_num_threads() * 4) as u64;
    let mut truth = SnapshotTruth::default();
    let mut start = 0;
    while start < blocks {
        let end = (start + batch).min(blocks);
        let produced: Vec<Result<(Vec<u8>, SnapshotTruth)>> = (start..end)
            .into_par_iter()
            .map(|block| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((u64::from(year) << 40) | block);
                let first = block * BLOCK_ROWS + 1;
                let last = ((block + 1) * BLOCK_ROWS).min(rows);
                let mut tally = BlockTally::new(&c, cfg);
                let mut w = csv::WriterBuilder::new()
                    .delimiter(b';')
                    .flexible(true)
                    .has_headers(false)
                    .from_writer(Vec::with_capacity(((last - first + 1) * 256) as usize));
                let mut rec = csv::ByteRecord::new();
                for row in first..=last {
                    gen.row(&mut rng, row, &mut rec, &mut tally);
                    w.write_byte_record(&rec)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
                Ok((bytes, truth_from(&c, cfg, year, last - first + 1, tally)))
            })
            .collect();
        for item in produced {
            let (bytes, t) = item?;
            out.write_all(&bytes).map_err(io)?;
            truth.merge(t);
        }
        start = end;
    }
    out.flush().map_err(io)?;
    Ok(truth)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedFile {
    pub year: u16,
    pub path: PathBuf,
    pub sha256: String,
    pub truth: SnapshotTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub files: Vec<GeneratedFile>,
    /// Truth over both files combined.
    pub total: SnapshotTruth,
}

impl SynthManifest {
    pub fn file(&self, year: u16) -> Option<&GeneratedFile> {
        self.files.iter().find(|f| f.year == year)
    }
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn file_name(year: u16) -> String {
    format!("synth_{year}.csv")
}

/// Writes `synth_2020.csv`, `synth_2021.csv` and `manifest.json` into `dir`.
pub fn generate(cfg: &SynthConfig, dir: &Path) -> Result<SynthManifest> {
    compile(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Write {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files = Vec::new();
    let mut total = SnapshotTruth::default();
    for year in [2020u16, 2021] {
        let path = dir.join(file_name(year));
        let f = File::create(&path).map_err(|e| Error::Write {
            path: path.clone(),
            source: e,
        })?;
        let mut hw = HashingWriter {
            inner: BufWriter::with_capacity(1 << 20, f),
            hasher: Sha256::new(),
        };
        let truth = write_snapshot(cfg, year, &mut hw).map_err(|e| match e {
            Error::Write { source, .. } => Error::Write {
                path: path.clone(),
                source,
            },
            other => other,
        })?;
        hw.flush().map_err(|e| Error::Write {
            path: path.clone(),
            source: e,
        })?;
        let sha256 = hex::encode(hw.hasher.finalize());
        total.merge(truth.clone());
        files.push(GeneratedFile {
            year,
            path,
            sha256,
            truth,
        });
    }
    let manifest = SynthManifest {
        config: cfg.clone(),
        files,
        total,
    };
    let mpath = dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(&mpath, json).map_err(|e| Error::Write {
        path: mpath,
        source: e,
    })?;
    Ok(manifest)
}
