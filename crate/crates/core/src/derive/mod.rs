//! Analysis variables computed on cohort records: diagnostic basis, region
//! of residence and categorical recodes.

mod patterns;
mod rules;

use std::fmt;

use serde::Serialize;

pub use patterns::{PatternSet, TextMatch, ANTIGEN_PATTERNS, PCR_PATTERNS};
pub use rules::{apply_recode, rule, rules_manifest, ruleset, Guard, RecodeRule, RuleSource};

use crate::cohort::{EpiStamp, GestationalStatus, SelectedCase};
use crate::error::{Error, Result};
use crate::logic::Tri;
use crate::schema::{CodedField, SurveillanceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum YesNo {
    Sim,
    Nao,
}

impl YesNo {
    pub fn label(self) -> &'static str {
        match self {
            YesNo::Sim => "sim",
            YesNo::Nao => "não",
        }
    }

    fn from_tri(t: Tri) -> YesNo {
        if t.is_true() {
            YesNo::Sim
        } else {
            YesNo::Nao
        }
    }
}

/// `pcr_SN`: `PCR_SARS2 == 1` or a COVID-like `DS_PCR_OUT`.
pub fn detect_pcr_positive(pcr_sars2: Option<i16>, ds_pcr_out: Option<&str>) -> YesNo {
    YesNo::from_tri(Tri::eq(pcr_sars2, 1) | PCR_PATTERNS.matches(ds_pcr_out))
}

/// `antigeno_SN`: `AN_SARS2 == 1` or a COVID-like `DS_AN_OUT`.
pub fn detect_antigen_positive(an_sars2: Option<i16>, ds_an_out: Option<&str>) -> YesNo {
    YesNo::from_tri(Tri::eq(an_sars2, 1) | ANTIGEN_PATTERNS.matches(ds_an_out))
}

/// `sorologia_SN`: any of IgG, IgM, IgA positive, missing read as 0.
pub fn detect_serology_positive(igg: Option<i16>, igm: Option<i16>, iga: Option<i16>) -> YesNo {
    let positive = [igg, igm, iga].into_iter().any(|v| v.unwrap_or(0) == 1);
    if positive {
        YesNo::Sim
    } else {
        YesNo::Nao
    }
}

/// `classi_covid`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CovidClass {
    Pcr,
    Antigenio,
    Sorologia,
    Outro,
    Nao,
}

impl CovidClass {
    pub fn label(self) -> &'static str {
        match self {
            CovidClass::Pcr => "pcr",
            CovidClass::Antigenio => "antigenio",
            CovidClass::Sorologia => "sorologia",
            CovidClass::Outro => "outro",
            CovidClass::Nao => "não",
        }
    }
}

/// Diagnostic basis, precedence RT-PCR > antigen > serology, only for SARI
/// by COVID-19 (`CLASSI_FIN == 5`). A missing `CLASSI_FIN` falls to `outro`.
pub fn classify_covid_diagnosis(
    classi_fin: Option<i16>,
    pcr: YesNo,
    antigen: YesNo,
    serology: YesNo,
) -> CovidClass {
    let covid = Tri::eq(classi_fin, 5);
    let is = |v: YesNo, want: YesNo| Tri::from_bool(v == want);
    let guards = [
        (covid & is(pcr, YesNo::Sim), CovidClass::Pcr),
        (
            covid & is(pcr, YesNo::Nao) & is(antigen, YesNo::Sim),
            CovidClass::Antigenio,
        ),
        (
            covid & is(serology, YesNo::Sim) & is(antigen, YesNo::Nao) & is(pcr, YesNo::Nao),
            CovidClass::Sorologia,
        ),
        (Tri::ne(classi_fin, 5), CovidClass::Nao),
    ];
    guards
        .into_iter()
        .find_map(|(g, c)| g.is_true().then_some(c))
        .unwrap_or(CovidClass::Outro)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    Southeast,
    South,
    Central,
    Northeast,
    North,
    Unknown,
}

pub const SOUTHEAST: [&str; 4] = ["SP", "RJ", "ES", "MG"];
pub const SOUTH: [&str; 3] = ["PR", "SC", "RS"];
pub const CENTRAL: [&str; 4] = ["GO", "MT", "MS", "DF"];
pub const NORTHEAST: [&str; 9] = ["AL", "BA", "CE", "MA", "PB", "PE", "PI", "RN", "SE"];
pub const NORTH: [&str; 7] = ["AC", "AP", "AM", "PA", "RO", "RR", "TO"];

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Southeast => "southeast",
            Region::South => "south",
            Region::Central => "central",
            Region::Northeast => "northeast",
            Region::North => "north",
            Region::Unknown => "unknown",
        }
    }

    pub fn states(self) -> &'static [&'static str] {
        match self {
            Region::Southeast => &SOUTHEAST,
            Region::South => &SOUTH,
            Region::Central => &CENTRAL,
            Region::Northeast => &NORTHEAST,
            Region::North => &NORTH,
            Region::Unknown => &[],
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// True for the 27 federative unit codes.
pub fn is_known_state(state: &str) -> bool {
    [
        Region::Southeast,
        Region::South,
        Region::Central,
        Region::Northeast,
        Region::North,
    ]
    .iter()
    .any(|r| r.states().contains(&state))
}

/// Region of residence from `SG_UF`. Any unrecognized non-missing token
/// falls through to `North`, as the nested conditional this reproduces does.
pub fn map_region(state: Option<&str>) -> Region {
    let Some(state) = state else {
        return Region::Unknown;
    };
    for region in [
        Region::Southeast,
        Region::South,
        Region::Central,
        Region::Northeast,
    ] {
        if region.states().contains(&state) {
            return region;
        }
    }
    if !NORTH.contains(&state) {
        log::debug!("unrecognized state token {state:?} mapped to north");
    }
    Region::North
}

/// `mudou_muni`: residence and hospitalization municipality differ.
pub fn derive_municipality_change(residence: Option<u32>, hospital: Option<u32>) -> Option<YesNo> {
    match (residence, hospital) {
        (Some(a), Some(b)) if a == b => Some(YesNo::Nao),
        (Some(_), Some(_)) => Some(YesNo::Sim),
        _ => None,
    }
}

/// All derived values of one cohort record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derived {
    pub pcr: YesNo,
    pub antigen: YesNo,
    pub serology: YesNo,
    pub covid: CovidClass,
    pub region: Region,
    pub municipality_change: Option<YesNo>,
    /// One entry per rule in [`ruleset`], same order.
    pub recodes: Vec<Option<&'static str>>,
    /// Free-text matches that needed uppercasing.
    pub pcr_text_case_folded: bool,
    pub antigen_text_case_folded: bool,
}

/// A selected obstetric case with every analysis variable.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortRecord {
    pub record: SurveillanceRecord,
    pub stamp: EpiStamp,
    pub status: GestationalStatus,
    pub derived: Derived,
}

pub fn derive_record(r: &SurveillanceRecord) -> Derived {
    use CodedField::*;
    let pcr = detect_pcr_positive(r.code(PcrSars2), r.pcr_text.as_deref());
    let antigen = detect_antigen_positive(r.code(AnSars2), r.antigen_text.as_deref());
    let serology = detect_serology_positive(r.code(ResIgg), r.code(ResIgm), r.code(ResIga));
    Derived {
        pcr,
        antigen,
        serology,
        covid: classify_covid_diagnosis(r.code(ClassiFin), pcr, antigen, serology),
        region: map_region(r.state.as_deref()),
        municipality_change: derive_municipality_change(r.mun_residence, r.mun_hospital),
        recodes: ruleset().iter().map(|rule| rule.apply(r)).collect(),
        pcr_text_case_folded: PCR_PATTERNS.scan(r.pcr_text.as_deref())
            == TextMatch::CaseFoldedMatch,
        antigen_text_case_folded: ANTIGEN_PATTERNS.scan(r.antigen_text.as_deref())
            == TextMatch::CaseFoldedMatch,
    }
}

pub fn derive_all(case: SelectedCase) -> CohortRecord {
    let derived = derive_record(&case.record);
    CohortRecord {
        record: case.record,
        stamp: case.stamp,
        status: case.status,
        derived,
    }
}

/// Name-addressable derived variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DerivedVar {
    Status,
    Pcr,
    Antigen,
    Serology,
    Covid,
    Region,
    MunicipalityChange,
    Recode(usize),
}

impl DerivedVar {
    /// Every derived variable in export order.
    pub fn all() -> Vec<DerivedVar> {
        let mut v = vec![
            DerivedVar::Status,
            DerivedVar::Pcr,
            DerivedVar::Antigen,
            DerivedVar::Serology,
            DerivedVar::Covid,
            DerivedVar::Region,
        ];
        v.extend((0..ruleset().len()).map(DerivedVar::Recode));
        v.push(DerivedVar::MunicipalityChange);
        v
    }

    pub fn parse(name: &str) -> Result<DerivedVar> {
        DerivedVar::all()
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn name(self) -> &'static str {
        match self {
            DerivedVar::Status => "classi_gesta_puerp",
            DerivedVar::Pcr => "pcr_SN",
            DerivedVar::Antigen => "antigeno_SN",
            DerivedVar::Serology => "sorologia_SN",
            DerivedVar::Covid => "classi_covid",
            DerivedVar::Region => "region",
            DerivedVar::MunicipalityChange => "mudou_muni",
            DerivedVar::Recode(i) => ruleset()[i].name,
        }
    }

    #[inline]
    pub fn value(self, c: &CohortRecord) -> Option<&'static str> {
        let d = &c.derived;
        match self {
            DerivedVar::Status => Some(c.status.label()),
            DerivedVar::Pcr => Some(d.pcr.label()),
            DerivedVar::Antigen => Some(d.antigen.label()),
            DerivedVar::Serology => Some(d.serology.label()),
            DerivedVar::Covid => Some(d.covid.label()),
            DerivedVar::Region => Some(d.region.label()),
            DerivedVar::MunicipalityChange => d.municipality_change.map(YesNo::label),
            DerivedVar::Recode(i) => d.recodes[i],
        }
    }

    /// Category order used in tables.
    pub fn levels(self) -> Vec<&'static str> {
        match self {
            DerivedVar::Status => GestationalStatus::COHORT
                .iter()
                .map(|s| s.label())
                .collect(),
            DerivedVar::Pcr
            | DerivedVar::Antigen
            | DerivedVar::Serology
            | DerivedVar::MunicipalityChange => {
                vec!["não", "sim"]
            }
            DerivedVar::Covid => vec!["antigenio", "não", "outro", "pcr", "sorologia"],
            DerivedVar::Region => vec![
                "unknown",
                "central",
                "north",
                "northeast",
                "south",
                "southeast",
            ],
            DerivedVar::Recode(i) => ruleset()[i].table_order(),
        }
    }
}

/// English rendering of a canonical category label; unknown labels pass
/// through unchanged.
pub fn translate(label: &str) -> &str {
    match label {
        "sim" => "yes",
        "não" => "no",
        "Cura" => "cure",
        "Obito" => "death",
        "branca" => "white",
        "preta" => "black",
        "amarela" => "yellow",
        "parda" => "brown",
        "indigena" => "indigenous",
        "sem escol" => "no schooling",
        "fund1" => "elementary 1",
        "fund2" => "elementary 2",
        "medio" => "high school",
        "superior" => "higher education",
        "urbana" => "urban",
        "periurbana" => "periurban",
        "invasivo" => "invasive",
        "não invasivo" => "non-invasive",
        "antigenio" => "antigen",
        "sorologia" => "serology",
        "outro" => "other",
        "pcr" => "RT-PCR",
        "1tri" => "1st trimester",
        "2tri" => "2nd trimester",
        "3tri" => "3rd trimester",
        "IG_ig" => "ignored gestational age",
        "puerp" => "postpartum",
        other => other,
    }
}
