//! Ordered guard rules that recode one source column into labeled categories.

use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::logic::Tri;
use crate::schema::{CodedField, SurveillanceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RuleSource {
    Code(CodedField),
    /// `NU_IDADE_N`
    Age,
}

impl RuleSource {
    pub fn parse(column: &str) -> Result<RuleSource> {
        if column == "NU_IDADE_N" {
            return Ok(RuleSource::Age);
        }
        CodedField::from_column(column)
            .map(RuleSource::Code)
            .ok_or_else(|| Error::UndeclaredField(column.to_string()))
    }

    pub fn column(self) -> &'static str {
        match self {
            RuleSource::Code(f) => f.column(),
            RuleSource::Age => "NU_IDADE_N",
        }
    }

    #[inline]
    pub fn value(self, r: &SurveillanceRecord) -> Option<i32> {
        match self {
            RuleSource::Code(f) => r.code(f).map(i32::from),
            RuleSource::Age => r.age,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Guard {
    Eq(i32),
    AtMost(i32),
    AtLeast(i32),
    /// Inclusive on both ends.
    Between(i32, i32),
}

impl Guard {
    #[inline]
    pub fn test(self, value: Option<i32>) -> Tri {
        match self {
            Guard::Eq(c) => Tri::eq(value, c),
            Guard::AtMost(c) => Tri::test(value, |v| v <= c),
            Guard::AtLeast(c) => Tri::test(value, |v| v >= c),
            Guard::Between(lo, hi) => Tri::test(value, |v| v >= lo) & Tri::test(value, |v| v <= hi),
        }
    }

    fn describe(self, column: &str) -> String {
        match self {
            Guard::Eq(c) => format!("{column} == {c}"),
            Guard::AtMost(c) => format!("{column} <= {c}"),
            Guard::AtLeast(c) => format!("{column} >= {c}"),
            Guard::Between(lo, hi) => format!("{column} >= {lo} & {column} <= {hi}"),
        }
    }
}

/// First guard that evaluates to true wins; otherwise `default`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecodeRule {
    pub name: &'static str,
    pub source: RuleSource,
    pub guards: Vec<(Guard, &'static str)>,
    pub default: Option<&'static str>,
    /// Categories have an intrinsic order; tables list them in guard order
    /// rather than alphabetically.
    pub ordered: bool,
}

impl RecodeRule {
    pub fn new(
        name: &'static str,
        source: RuleSource,
        guards: Vec<(Guard, &'static str)>,
    ) -> RecodeRule {
        RecodeRule {
            name,
            source,
            guards,
            default: None,
            ordered: false,
        }
    }

    pub fn ordered(mut self) -> RecodeRule {
        self.ordered = true;
        self
    }

    #[inline]
    pub fn evaluate(&self, value: Option<i32>) -> Option<&'static str> {
        self.guards
            .iter()
            .find(|(g, _)| g.test(value).is_true())
            .map(|&(_, label)| label)
            .or(self.default)
    }

    #[inline]
    pub fn apply(&self, r: &SurveillanceRecord) -> Option<&'static str> {
        self.evaluate(self.source.value(r))
    }

    /// Output labels in guard order, without repeats.
    pub fn levels(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for &(_, label) in &self.guards {
            if !out.contains(&label) {
                out.push(label);
            }
        }
        if let Some(d) = self.default {
            if !out.contains(&d) {
                out.push(d);
            }
        }
        out
    }

    /// Category order used in tables.
    pub fn table_order(&self) -> Vec<&'static str> {
        let mut out = self.levels();
        if !self.ordered {
            out.sort_unstable();
        }
        out
    }
}

fn yes_no(name: &'static str, field: CodedField) -> RecodeRule {
    RecodeRule::new(
        name,
        RuleSource::Code(field),
        vec![(Guard::Eq(1), "sim"), (Guard::Eq(2), "não")],
    )
}

fn coded(name: &'static str, field: CodedField, map: &[(i32, &'static str)]) -> RecodeRule {
    RecodeRule::new(
        name,
        RuleSource::Code(field),
        map.iter().map(|&(c, l)| (Guard::Eq(c), l)).collect(),
    )
}

fn build_ruleset() -> Vec<RecodeRule> {
    use CodedField::*;
    vec![
        coded(
            "raca",
            CsRaca,
            &[
                (1, "branca"),
                (2, "preta"),
                (3, "amarela"),
                (4, "parda"),
                (5, "indigena"),
            ],
        ),
        coded(
            "escol",
            CsEscolN,
            &[
                (0, "sem escol"),
                (1, "fund1"),
                (2, "fund2"),
                (3, "medio"),
                (4, "superior"),
            ],
        ),
        RecodeRule::new(
            "faixa_et",
            RuleSource::Age,
            vec![
                (Guard::AtMost(19), "<20"),
                (Guard::Between(20, 34), "20-34"),
                (Guard::AtLeast(35), ">=35"),
            ],
        )
        .ordered(),
        yes_no("hospital", Hospital),
        yes_no("hist_viagem", HistoVgm),
        yes_no("sg_para_srag", SurtoSg),
        yes_no("inf_inter", Nosocomial),
        yes_no("cont_ave_suino", AveSuino),
        yes_no("vacina", Vacina),
        coded(
            "antiviral",
            Antiviral,
            &[(1, "Oseltamivir"), (2, "Zanamivir")],
        ),
        coded(
            "zona",
            CsZona,
            &[(1, "urbana"), (2, "rural"), (3, "periurbana")],
        ),
        yes_no("febre", Febre),
        yes_no("tosse", Tosse),
        yes_no("garganta", Garganta),
        yes_no("dispneia", Dispneia),
        yes_no("desc_resp", DescResp),
        yes_no("saturacao", Saturacao),
        yes_no("diarreia", Diarreia),
        yes_no("vomito", Vomito),
        yes_no("dor_abd", DorAbd),
        yes_no("fadiga", Fadiga),
        yes_no("perd_olft", PerdOlft),
        yes_no("perd_pala", PerdPala),
        yes_no("cardiopati", Cardiopati),
        yes_no("hematologi", Hematologi),
        yes_no("hepatica", Hepatica),
        yes_no("asma", Asma),
        yes_no("diabetes", Diabetes),
        yes_no("neuro", Neurologic),
        yes_no("pneumopati", Pneumopati),
        yes_no("imunodepre", Imunodepre),
        yes_no("renal", Renal),
        yes_no("obesidade", Obesidade),
        yes_no("uti", Uti),
        coded(
            "suport_ven",
            SuportVen,
            &[(1, "invasivo"), (2, "não invasivo"), (3, "não")],
        )
        .ordered(),
        coded(
            "evolucao",
            Evolucao,
            &[(1, "Cura"), (2, "Obito"), (3, "Obito")],
        ),
    ]
}

/// The shipped recode rules, in export order.
pub fn ruleset() -> &'static [RecodeRule] {
    static RULES: OnceLock<Vec<RecodeRule>> = OnceLock::new();
    RULES.get_or_init(build_ruleset)
}

pub fn rule(name: &str) -> Result<&'static RecodeRule> {
    ruleset()
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::UnknownVariable(name.to_string()))
}

/// Evaluates `rule` on `r`.
pub fn apply_recode(rule: &RecodeRule, r: &SurveillanceRecord) -> Option<&'static str> {
    rule.apply(r)
}

/// Human-readable listing of every rule: guards in order, then the default.
pub fn rules_manifest(rules: &[RecodeRule]) -> String {
    let mut out = String::new();
    for rule in rules {
        let ordered = if rule.ordered { " (ordered)" } else { "" };
        let _ = writeln!(out, "{} <- {}{ordered}", rule.name, rule.source.column());
        for (guard, label) in &rule.guards {
            let _ = writeln!(
                out,
                "    {} ~ {:?}",
                guard.describe(rule.source.column()),
                label
            );
        }
        match rule.default {
            Some(d) => {
                let _ = writeln!(out, "    otherwise ~ {d:?}");
            }
            None => out.push_str("    otherwise ~ NA\n"),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record_with(field: CodedField, v: Option<i16>) -> SurveillanceRecord {
        SurveillanceRecord::default().with_code(field, v)
    }

    #[test]
    fn shipped_examples() {
        let febre = rule("febre").unwrap();
        assert_eq!(febre.apply(&record_with(CodedField::Febre, Some(9))), None);
        assert_eq!(
            febre.apply(&record_with(CodedField::Febre, Some(1))),
            Some("sim")
        );
        let evol = rule("evolucao").unwrap();
        assert_eq!(
            evol.apply(&record_with(CodedField::Evolucao, Some(3))),
            Some("Obito")
        );
        assert_eq!(
            evol.apply(&record_with(CodedField::Evolucao, Some(9))),
            None
        );
        assert_eq!(evol.levels(), ["Cura", "Obito"]);
        let faixa = rule("faixa_et").unwrap();
        let mut r = SurveillanceRecord::default();
        for (age, want) in [
            (19, "<20"),
            (20, "20-34"),
            (34, "20-34"),
            (35, ">=35"),
            (55, ">=35"),
        ] {
            r.age = Some(age);
            assert_eq!(faixa.apply(&r), Some(want));
        }
        r.age = None;
        assert_eq!(faixa.apply(&r), None);
        assert_eq!(
            rule("zona")
                .unwrap()
                .apply(&record_with(CodedField::CsZona, Some(3))),
            Some("periurbana")
        );
        assert_eq!(
            rule("suport_ven").unwrap().levels(),
            ["invasivo", "não invasivo", "não"]
        );
    }

    #[test]
    fn names_and_counts() {
        let rules = ruleset();
        assert_eq!(rules.len(), 36);
        assert!(rule("nope").is_err());
        assert!(RuleSource::parse("FEBRE").is_ok());
        assert!(matches!(
            RuleSource::parse("XYZ"),
            Err(Error::UndeclaredField(_))
        ));
        let manifest = rules_manifest(rules);
        assert!(manifest.contains("evolucao <- EVOLUCAO\n    EVOLUCAO == 1 ~ \"Cura\""));
        assert!(manifest.contains("otherwise ~ NA"));
    }

    fn arb_guard() -> impl Strategy<Value = Guard> {
        prop_oneof![
            (-2i32..12).prop_map(Guard::Eq),
            (-2i32..12).prop_map(Guard::AtMost),
            (-2i32..12).prop_map(Guard::AtLeast),
            (-2i32..12, -2i32..12).prop_map(|(a, b)| Guard::Between(a.min(b), a.max(b))),
        ]
    }

    const LABELS: [&str; 4] = ["a", "b", "c", "d"];

    proptest! {
        /// Against a guard-sequence oracle with explicit null handling:
        /// a missing value never satisfies a guard.
        #[test]
        fn matches_guard_sequence_oracle(
            guards in prop::collection::vec((arb_guard(), 0usize..4), 0..6),
            default in prop::option::of(0usize..4),
            value in prop::option::of(-3i32..14),
        ) {
            let rule = RecodeRule {
                name: "t",
                source: RuleSource::Age,
                guards: guards.iter().map(|&(g, l)| (g, LABELS[l])).collect(),
                default: default.map(|d| LABELS[d]),
                ordered: false,
            };
            let mut oracle = default.map(|d| LABELS[d]);
            if let Some(v) = value {
                for &(g, l) in &guards {
                    let hit = match g {
                        Guard::Eq(c) => v == c,
                        Guard::AtMost(c) => v <= c,
                        Guard::AtLeast(c) => v >= c,
                        Guard::Between(lo, hi) => lo <= v && v <= hi,
                    };
                    if hit {
                        oracle = Some(LABELS[l]);
                        break;
                    }
                }
            }
            prop_assert_eq!(rule.evaluate(value), oracle);
            // Missing-logic law: blanking the compared value lands on the default.
            prop_assert_eq!(rule.evaluate(None), rule.default);
        }
    }
}
