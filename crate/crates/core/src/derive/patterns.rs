//! Substring pattern sets for free-text laboratory results.

use crate::logic::Tri;

/// Uppercase substrings; a subject matches when any of them occurs in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternSet {
    patterns: &'static [&'static str],
}

/// `DS_PCR_OUT` patterns. `CIVID` catches a common misspelling.
pub const PCR_PATTERNS: PatternSet = PatternSet::new(&["SARS", "COVID", "COV", "CORONA", "CIVID"]);

/// `DS_AN_OUT` patterns. Note `CONA` in place of `CIVID`.
pub const ANTIGEN_PATTERNS: PatternSet =
    PatternSet::new(&["SARS", "COVID", "COV", "CORONA", "CONA"]);

/// How a subject relates to a pattern set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextMatch {
    /// Subject missing.
    Missing,
    NoMatch,
    /// Matches as written.
    Match,
    /// Matches only after uppercasing.
    CaseFoldedMatch,
}

impl PatternSet {
    pub const fn new(patterns: &'static [&'static str]) -> PatternSet {
        PatternSet { patterns }
    }

    pub fn patterns(&self) -> &'static [&'static str] {
        self.patterns
    }

    fn any_in(&self, subject: &str) -> bool {
        self.patterns.iter().any(|p| subject.contains(p))
    }

    pub fn scan(&self, subject: Option<&str>) -> TextMatch {
        let Some(subject) = subject else {
            return TextMatch::Missing;
        };
        if self.any_in(subject) {
            TextMatch::Match
        } else if self.any_in(&subject.to_uppercase()) {
            TextMatch::CaseFoldedMatch
        } else {
            TextMatch::NoMatch
        }
    }

    /// Match after uppercasing; unknown for a missing subject.
    pub fn matches(&self, subject: Option<&str>) -> Tri {
        match self.scan(subject) {
            TextMatch::Missing => Tri::Unknown,
            TextMatch::NoMatch => Tri::False,
            TextMatch::Match | TextMatch::CaseFoldedMatch => Tri::True,
        }
    }
}
