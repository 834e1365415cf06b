//! Consistency checks and data-quality audits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::derive::{is_known_state, CohortRecord};
use crate::ingest::IngestStats;
use crate::schema::{CodeBook, CodedField, RowOrigin, Sex, SurveillanceRecord};

/// Example rows kept per finding.
pub const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    /// Only for checks whose expected count is zero.
    Inconsistency,
}

impl Severity {
    pub fn name(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Inconsistency => "inconsistency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub check: String,
    pub severity: Severity,
    pub count: u64,
    pub description: String,
    /// Smallest row origins among the matching records.
    pub examples: Vec<RowOrigin>,
}

impl Finding {
    /// True if this finding should fail a strict run.
    pub fn is_inconsistency(&self) -> bool {
        self.severity == Severity::Inconsistency && self.count > 0
    }
}

/// A count plus the smallest few origins, mergeable in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally {
    count: u64,
    examples: Vec<RowOrigin>,
}

impl Tally {
    fn hit(&mut self, origin: RowOrigin) {
        self.count += 1;
        self.keep(origin);
    }

    fn keep(&mut self, origin: RowOrigin) {
        if self.examples.len() == MAX_EXAMPLES && origin >= self.examples[MAX_EXAMPLES - 1] {
            return;
        }
        let at = self.examples.partition_point(|&o| o < origin);
        self.examples.insert(at, origin);
        self.examples.truncate(MAX_EXAMPLES);
    }

    fn merge(&mut self, other: &Tally) {
        self.count += other.count;
        for &o in &other.examples {
            self.keep(o);
        }
    }
}

fn merge_map<K: Ord + Clone>(into: &mut BTreeMap<K, Tally>, from: &BTreeMap<K, Tally>) {
    for (k, t) in from {
        into.entry(k.clone()).or_default().merge(t);
    }
}

/// Accumulates every check. Feed the post-cut stream to
/// [`observe_current`](Validator::observe_current) and the cohort to
/// [`observe_cohort`](Validator::observe_cohort).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validator {
    current_records: u64,
    cohort_records: u64,
    male_pregnant: Tally,
    male_puerperal: Tally,
    out_of_dictionary: BTreeMap<(&'static str, String), Tally>,
    missing_region: Tally,
    region_fallback: BTreeMap<String, Tally>,
    case_folded_pcr: Tally,
    case_folded_antigen: Tally,
}

impl Validator {
    pub fn new() -> Validator {
        Validator::default()
    }

    pub fn observe_current(&mut self, r: &SurveillanceRecord) {
        self.current_records += 1;
        let male = matches!(r.sex, Some(Sex::Male));
        if male && matches!(r.code(CodedField::CsGestant), Some(1..=4)) {
            self.male_pregnant.hit(r.origin);
        }
        if male && r.code(CodedField::Puerpera) == Some(1) {
            self.male_puerperal.hit(r.origin);
        }
        let book = CodeBook::sivep();
        for &field in CodedField::ALL {
            if let Some(code) = r.code(field) {
                if !book.is_documented(field, code) {
                    self.out_of_dictionary
                        .entry((field.column(), code.to_string()))
                        .or_default()
                        .hit(r.origin);
                }
            }
        }
        if let Some(Sex::Other(token)) = &r.sex {
            self.out_of_dictionary
                .entry(("CS_SEXO", token.to_string()))
                .or_default()
                .hit(r.origin);
        }
    }

    pub fn observe_cohort(&mut self, c: &CohortRecord) {
        self.cohort_records += 1;
        let origin = c.record.origin;
        match c.record.state.as_deref() {
            None => self.missing_region.hit(origin),
            Some(s) if !is_known_state(s) => self
                .region_fallback
                .entry(s.to_string())
                .or_default()
                .hit(origin),
            Some(_) => {}
        }
        if c.derived.pcr_text_case_folded {
            self.case_folded_pcr.hit(origin);
        }
        if c.derived.antigen_text_case_folded {
            self.case_folded_antigen.hit(origin);
        }
    }

    pub fn merge(&mut self, other: &Validator) {
        self.current_records += other.current_records;
        self.cohort_records += other.cohort_records;
        self.male_pregnant.merge(&other.male_pregnant);
        self.male_puerperal.merge(&other.male_puerperal);
        merge_map(&mut self.out_of_dictionary, &other.out_of_dictionary);
        self.missing_region.merge(&other.missing_region);
        merge_map(&mut self.region_fallback, &other.region_fallback);
        self.case_folded_pcr.merge(&other.case_folded_pcr);
        self.case_folded_antigen.merge(&other.case_folded_antigen);
    }

    pub fn male_pregnant(&self) -> Finding {
        finding(
            "male_pregnant",
            Severity::Inconsistency,
            &self.male_pregnant,
            "records with CS_SEXO=M and CS_GESTANT in 1,2,3,4".to_string(),
        )
    }

    pub fn male_puerperal(&self) -> Finding {
        finding(
            "male_puerperal",
            Severity::Inconsistency,
            &self.male_puerperal,
            "records with CS_SEXO=M and PUERPERA=1".to_string(),
        )
    }

    /// One warning per (field, undocumented code) pair.
    pub fn out_of_dictionary(&self) -> Vec<Finding> {
        self.out_of_dictionary
            .iter()
            .map(|((field, code), t)| {
                finding(
                    &format!("out_of_dictionary:{field}={code}"),
                    Severity::Warning,
                    t,
                    format!("records with {field}={code}, a code with no dictionary entry"),
                )
            })
            .collect()
    }

    /// Audits that only report when something was seen.
    fn cohort_audits(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        if self.missing_region.count > 0 {
            out.push(finding(
                "missing_region",
                Severity::Info,
                &self.missing_region,
                "cohort records without state of residence (region unknown)".to_string(),
            ));
        }
        for (token, t) in &self.region_fallback {
            out.push(finding(
                &format!("region_fallback:{token}"),
                Severity::Warning,
                t,
                format!("cohort records with unrecognized SG_UF {token:?}, mapped to north"),
            ));
        }
        if self.case_folded_pcr.count > 0 {
            out.push(finding(
                "case_folded_match:DS_PCR_OUT",
                Severity::Info,
                &self.case_folded_pcr,
                "DS_PCR_OUT matched a COVID pattern only after uppercasing".to_string(),
            ));
        }
        if self.case_folded_antigen.count > 0 {
            out.push(finding(
                "case_folded_match:DS_AN_OUT",
                Severity::Info,
                &self.case_folded_antigen,
                "DS_AN_OUT matched a COVID pattern only after uppercasing".to_string(),
            ));
        }
        out
    }

    /// Every finding, with ingest-level counts from `ingest`.
    pub fn report(&self, ingest: &[IngestStats]) -> FindingsReport {
        let mut findings = vec![self.male_pregnant(), self.male_puerperal()];
        findings.extend(self.out_of_dictionary());
        findings.extend(self.cohort_audits());
        for stats in ingest {
            let file = stats.path.display();
            if stats.malformed > 0 {
                findings.push(Finding {
                    check: format!("malformed_rows:{}", stats.year),
                    severity: Severity::Warning,
                    count: stats.malformed,
                    description: format!("rows of {file} quarantined as malformed"),
                    examples: Vec::new(),
                });
            }
            if stats.date_warnings > 0 {
                findings.push(Finding {
                    check: format!("onset_date_unparsed:{}", stats.year),
                    severity: Severity::Warning,
                    count: stats.date_warnings,
                    description: format!(
                        "DT_SIN_PRI values in {file} that are not valid dates, read as missing"
                    ),
                    examples: Vec::new(),
                });
            }
        }
        FindingsReport {
            records_checked: self.current_records,
            cohort_records: self.cohort_records,
            findings,
        }
    }
}

fn finding(check: &str, severity: Severity, t: &Tally, description: String) -> Finding {
    Finding {
        check: check.to_string(),
        severity,
        count: t.count,
        description,
        examples: t.examples.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FindingsReport {
    pub records_checked: u64,
    pub cohort_records: u64,
    pub findings: Vec<Finding>,
}

impl FindingsReport {
    pub fn inconsistencies(&self) -> u64 {
        self.findings
            .iter()
            .filter(|f| f.is_inconsistency())
            .map(|f| f.count)
            .sum()
    }

    pub fn get(&self, check: &str) -> Option<&Finding> {
        self.findings.iter().find(|f| f.check == check)
    }

    pub fn render_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{} records checked, {} cohort records\n\n",
            self.records_checked, self.cohort_records
        );
        for f in &self.findings {
            let _ = write!(
                out,
                "[{}] {}: {} ({})",
                f.severity.name(),
                f.check,
                f.count,
                f.description
            );
            if !f.examples.is_empty() {
                let rows: Vec<String> = f
                    .examples
                    .iter()
                    .map(|o| format!("{}:{}", o.file, o.row))
                    .collect();
                let _ = write!(out, "; e.g. {}", rows.join(", "));
            }
            out.push('\n');
        }
        out
    }
}

/// Males coded as pregnant (CS_GESTANT 1 to 4).
pub fn check_male_pregnant<'a>(
    records: impl IntoIterator<Item = &'a SurveillanceRecord>,
) -> Finding {
    let mut v = Validator::new();
    records.into_iter().for_each(|r| v.observe_current(r));
    v.male_pregnant()
}

/// Males coded as puerperal.
pub fn check_male_puerperal<'a>(
    records: impl IntoIterator<Item = &'a SurveillanceRecord>,
) -> Finding {
    let mut v = Validator::new();
    records.into_iter().for_each(|r| v.observe_current(r));
    v.male_puerperal()
}

pub fn audit_out_of_dictionary<'a>(
    records: impl IntoIterator<Item = &'a SurveillanceRecord>,
) -> Vec<Finding> {
    let mut v = Validator::new();
    records.into_iter().for_each(|r| v.observe_current(r));
    v.out_of_dictionary()
}
