//! Case selection funnel: epidemiological window, week-53 year correction,
//! current-week cut, sex and age filters and obstetric classification.

use std::fmt;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::Tri;
use crate::schema::{CodedField, Sex, SurveillanceRecord};

/// Year of symptom onset paired with `SEM_PRI`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EpiStamp {
    /// `ano`: calendar year of the onset date, corrected for week 53.
    pub year: i32,
    pub week: u8,
}

impl EpiStamp {
    pub fn new(year: i32, week: u8) -> EpiStamp {
        EpiStamp { year, week }
    }
}

pub fn assign_epi_stamp(r: &SurveillanceRecord) -> Option<EpiStamp> {
    Some(EpiStamp {
        year: r.onset?.year(),
        week: r.week?,
    })
}

/// From week 8 of 2020 onwards.
pub fn in_epi_window(stamp: EpiStamp) -> bool {
    (stamp.year == 2020 && stamp.week >= 8) || stamp.year == 2021
}

/// Onsets on the first days of 2021 still belong to week 53 of 2020.
pub fn correct_week53(stamp: EpiStamp) -> EpiStamp {
    if stamp.year == 2021 && stamp.week == 53 {
        EpiStamp {
            year: 2020,
            ..stamp
        }
    } else {
        stamp
    }
}

/// The last epidemiological week of 2021 covered by the snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CurrentWeek(u8);

impl CurrentWeek {
    pub fn new(week: u8) -> Result<CurrentWeek> {
        if (1..=53).contains(&week) {
            Ok(CurrentWeek(week))
        } else {
            Err(Error::Config(format!(
                "current epidemiological week must be in 1..53, got {week}"
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for CurrentWeek {
    type Error = Error;
    fn try_from(w: u8) -> Result<Self> {
        CurrentWeek::new(w)
    }
}

impl From<CurrentWeek> for u8 {
    fn from(w: CurrentWeek) -> u8 {
        w.0
    }
}

pub fn within_current_week(stamp: EpiStamp, current: CurrentWeek) -> bool {
    stamp.year == 2020 || (stamp.year == 2021 && stamp.week <= current.0)
}

pub fn is_female(r: &SurveillanceRecord) -> bool {
    matches!(r.sex, Some(Sex::Female))
}

/// `NU_IDADE_N > 9 & NU_IDADE_N <= 55`; a missing age never passes.
pub fn age_eligible(r: &SurveillanceRecord) -> bool {
    Tri::test(r.age, |a| a > 9 && a <= 55).is_true()
}

/// `classi_gesta_puerp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum GestationalStatus {
    FirstTrimester,
    SecondTrimester,
    ThirdTrimester,
    IgnoredGestationalAge,
    Puerperal,
    /// Neither pregnant nor puerperal; excluded from the cohort.
    NotObstetric,
}

impl GestationalStatus {
    pub const COHORT: [GestationalStatus; 5] = [
        GestationalStatus::FirstTrimester,
        GestationalStatus::SecondTrimester,
        GestationalStatus::ThirdTrimester,
        GestationalStatus::IgnoredGestationalAge,
        GestationalStatus::Puerperal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GestationalStatus::FirstTrimester => "1tri",
            GestationalStatus::SecondTrimester => "2tri",
            GestationalStatus::ThirdTrimester => "3tri",
            GestationalStatus::IgnoredGestationalAge => "IG_ig",
            GestationalStatus::Puerperal => "puerp",
            GestationalStatus::NotObstetric => "não",
        }
    }
}

impl fmt::Display for GestationalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn classify_gestational_status(
    cs_gestant: Option<i16>,
    puerpera: Option<i16>,
) -> GestationalStatus {
    use GestationalStatus::*;
    let g = |code| Tri::eq(cs_gestant, code);
    let puerp = Tri::eq(puerpera, 1);
    let guards = [
        (g(1), FirstTrimester),
        (g(2), SecondTrimester),
        (g(3), ThirdTrimester),
        (g(4), IgnoredGestationalAge),
        (g(5) & puerp, Puerperal),
        (g(9) & puerp, Puerperal),
    ];
    guards
        .into_iter()
        .find_map(|(guard, status)| guard.is_true().then_some(status))
        .unwrap_or(NotObstetric)
}

/// Funnel stages in the order they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Stage {
    OnsetAvailable,
    EpiWindow,
    CurrentWeek,
    Female,
    Age,
    Obstetric,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::OnsetAvailable,
        Stage::EpiWindow,
        Stage::CurrentWeek,
        Stage::Female,
        Stage::Age,
        Stage::Obstetric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::OnsetAvailable => "symptom onset date and week available",
            Stage::EpiWindow => "onset from epidemiological week 8 of 2020",
            Stage::CurrentWeek => "onset up to the current epidemiological week of 2021",
            Stage::Female => "female",
            Stage::Age => "aged 10 to 55 years",
            Stage::Obstetric => "pregnant or postpartum",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Stage::OnsetAvailable => "onset_available",
            Stage::EpiWindow => "epi_window",
            Stage::CurrentWeek => "current_week",
            Stage::Female => "female",
            Stage::Age => "age_10_55",
            Stage::Obstetric => "obstetric",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Where a record left the funnel, with the stamps seen on the way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Screening {
    /// Stamp as derived from the onset date, before correction.
    pub stamp: Option<EpiStamp>,
    /// Stamp after the week-53 correction (only set past the window stage).
    pub corrected: Option<EpiStamp>,
    pub status: Option<GestationalStatus>,
    pub removed_at: Option<Stage>,
}

impl Screening {
    /// True if the record survived `stage`.
    pub fn passed(&self, stage: Stage) -> bool {
        self.removed_at.is_none_or(|r| r > stage)
    }

    pub fn selected(&self) -> bool {
        self.removed_at.is_none()
    }
}

/// Runs one record through every stage, stopping at the first that drops it.
pub fn screen(r: &SurveillanceRecord, current: CurrentWeek) -> Screening {
    let mut s = Screening {
        stamp: None,
        corrected: None,
        status: None,
        removed_at: None,
    };
    let drop = |mut s: Screening, stage| {
        s.removed_at = Some(stage);
        s
    };
    let Some(stamp) = assign_epi_stamp(r) else {
        return drop(s, Stage::OnsetAvailable);
    };
    s.stamp = Some(stamp);
    if !in_epi_window(stamp) {
        return drop(s, Stage::EpiWindow);
    }
    let corrected = correct_week53(stamp);
    s.corrected = Some(corrected);
    if !within_current_week(corrected, current) {
        return drop(s, Stage::CurrentWeek);
    }
    if !is_female(r) {
        return drop(s, Stage::Female);
    }
    if !age_eligible(r) {
        return drop(s, Stage::Age);
    }
    let status =
        classify_gestational_status(r.code(CodedField::CsGestant), r.code(CodedField::Puerpera));
    s.status = Some(status);
    if status == GestationalStatus::NotObstetric {
        return drop(s, Stage::Obstetric);
    }
    s
}

/// A record that passed every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedCase {
    pub record: SurveillanceRecord,
    /// Corrected stamp.
    pub stamp: EpiStamp,
    pub status: GestationalStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunnelStage {
    pub stage: &'static str,
    pub name: &'static str,
    pub records_in: u64,
    pub records_out: u64,
    pub removed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunnelReport {
    pub stages: Vec<FunnelStage>,
}

impl FunnelReport {
    pub fn input(&self) -> u64 {
        self.stages.first().map_or(0, |s| s.records_in)
    }

    pub fn output(&self) -> u64 {
        self.stages.last().map_or(0, |s| s.records_out)
    }

    /// Conservation within and between stages.
    pub fn is_conserved(&self) -> bool {
        self.stages
            .iter()
            .all(|s| s.records_out + s.removed == s.records_in)
            && self
                .stages
                .windows(2)
                .all(|w| w[0].records_out == w[1].records_in)
    }

    pub fn render_text(&self) -> String {
        let name_w = self
            .stages
            .iter()
            .map(|s| s.name.chars().count())
            .max()
            .unwrap_or(5)
            .max(5);
        let num_w = self
            .stages
            .first()
            .map_or(1, |s| s.records_in.to_string().len())
            .max(7);
        let mut out = format!(
            "{:<name_w$}  {:>num_w$}  {:>num_w$}  {:>num_w$}\n",
            "stage", "in", "out", "removed"
        );
        for s in &self.stages {
            out.push_str(&format!(
                "{:<name_w$}  {:>num_w$}  {:>num_w$}  {:>num_w$}\n",
                s.name, s.records_in, s.records_out, s.removed
            ));
        }
        out
    }

    pub fn render_csv(&self, delimiter: u8) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        w.write_record(["stage", "name", "in", "out", "removed"])?;
        for s in &self.stages {
            w.write_record([
                s.stage,
                s.name,
                &s.records_in.to_string(),
                &s.records_out.to_string(),
                &s.removed.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 input"))
    }
}

/// Additive funnel counters; merge order does not matter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FunnelCounter {
    pub input: u64,
    pub removed: [u64; 6],
}

impl FunnelCounter {
    pub fn observe(&mut self, s: &Screening) {
        self.input += 1;
        if let Some(stage) = s.removed_at {
            self.removed[stage.index()] += 1;
        }
    }

    pub fn merge(&mut self, other: &FunnelCounter) {
        self.input += other.input;
        for (a, b) in self.removed.iter_mut().zip(other.removed) {
            *a += b;
        }
    }

    pub fn report(&self) -> FunnelReport {
        let mut remaining = self.input;
        let stages = Stage::ALL
            .iter()
            .map(|&stage| {
                let removed = self.removed[stage.index()];
                let records_in = remaining;
                remaining -= removed;
                FunnelStage {
                    stage: stage.key(),
                    name: stage.name(),
                    records_in,
                    records_out: remaining,
                    removed,
                }
            })
            .collect();
        FunnelReport { stages }
    }
}

/// Applies the full funnel to a record stream.
pub fn select_obstetric_cohort<I>(
    records: I,
    current: CurrentWeek,
) -> (Vec<SelectedCase>, FunnelReport)
where
    I: IntoIterator<Item = SurveillanceRecord>,
{
    let mut counter = FunnelCounter::default();
    let mut cohort = Vec::new();
    for record in records {
        let s = screen(&record, current);
        counter.observe(&s);
        if s.selected() {
            cohort.push(SelectedCase {
                stamp: s.corrected.expect("selected records are stamped"),
                status: s.status.expect("selected records are classified"),
                record,
            });
        }
    }
    (cohort, counter.report())
}
