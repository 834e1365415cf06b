//! Frequency tables and cross-tabulations with explicit missing rows.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::cohort::EpiStamp;
use crate::derive::{translate, CohortRecord, DerivedVar};
use crate::error::{Error, Result};
use crate::schema::{CodedField, Sex, SurveillanceRecord};

/// Missing label in frequency tables.
pub const FREQ_MISSING: &str = "NA";
/// Missing label in cross-tabulations.
pub const CROSS_MISSING: &str = "<NA>";

/// One category value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cat {
    Code(i64),
    Label(&'static str),
    Text(Box<str>),
}

impl Cat {
    pub fn render(&self) -> String {
        match self {
            Cat::Code(c) => c.to_string(),
            Cat::Label(l) => (*l).to_string(),
            Cat::Text(t) => t.to_string(),
        }
    }

    /// Codes ascending, then known levels in order, then anything else by text.
    fn rank<'a>(&'a self, levels: &[&str]) -> (u8, i64, &'a str) {
        match self {
            Cat::Code(c) => (0, *c, ""),
            Cat::Label(l) => match levels.iter().position(|x| x == l) {
                Some(i) => (1, i as i64, ""),
                None => (2, 0, l),
            },
            Cat::Text(t) => (2, 0, t),
        }
    }
}

fn sort_cats(cats: &mut [Cat], levels: &[&str]) {
    cats.sort_by(|a, b| a.rank(levels).cmp(&b.rank(levels)));
}

/// (row, column) category of a cross-table cell.
type CrossKey = (Option<Cat>, Option<Cat>);

/// What a table row is computed from.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    pub record: &'a SurveillanceRecord,
    pub stamp: Option<EpiStamp>,
    pub cohort: Option<&'a CohortRecord>,
}

impl<'a> RowView<'a> {
    pub fn raw(record: &'a SurveillanceRecord, stamp: Option<EpiStamp>) -> RowView<'a> {
        RowView {
            record,
            stamp,
            cohort: None,
        }
    }

    pub fn cohort(c: &'a CohortRecord) -> RowView<'a> {
        RowView {
            record: &c.record,
            stamp: Some(c.stamp),
            cohort: Some(c),
        }
    }
}

/// A variable that can be tabulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableVar {
    Code(CodedField),
    /// `SEM_PRI`
    Week,
    /// `ano`
    Year,
    /// `CS_SEXO`
    Sex,
    /// `NU_IDADE_N`
    Age,
    /// `SG_UF`
    State,
    Derived(DerivedVar),
}

impl TableVar {
    pub fn parse(name: &str) -> Result<TableVar> {
        Ok(match name {
            "SEM_PRI" => TableVar::Week,
            "ano" => TableVar::Year,
            "CS_SEXO" => TableVar::Sex,
            "NU_IDADE_N" => TableVar::Age,
            "SG_UF" => TableVar::State,
            _ => match CodedField::from_column(name) {
                Some(f) => TableVar::Code(f),
                None => TableVar::Derived(
                    DerivedVar::parse(name)
                        .map_err(|_| Error::UnknownVariable(name.to_string()))?,
                ),
            },
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TableVar::Code(f) => f.column(),
            TableVar::Week => "SEM_PRI",
            TableVar::Year => "ano",
            TableVar::Sex => "CS_SEXO",
            TableVar::Age => "NU_IDADE_N",
            TableVar::State => "SG_UF",
            TableVar::Derived(d) => d.name(),
        }
    }

    pub fn needs_cohort(self) -> bool {
        matches!(self, TableVar::Derived(_))
    }

    pub fn levels(self) -> Vec<&'static str> {
        match self {
            TableVar::Derived(d) => d.levels(),
            _ => Vec::new(),
        }
    }

    #[inline]
    pub fn value(self, row: &RowView<'_>) -> Option<Cat> {
        let r = row.record;
        match self {
            TableVar::Code(f) => r.code(f).map(|c| Cat::Code(c.into())),
            TableVar::Week => r.week.map(|w| Cat::Code(w.into())),
            TableVar::Year => row.stamp.map(|s| Cat::Code(s.year.into())),
            TableVar::Sex => r.sex.as_ref().map(|s| match s {
                Sex::Female => Cat::Label("F"),
                Sex::Male => Cat::Label("M"),
                Sex::Ignored => Cat::Label("I"),
                Sex::Other(t) => Cat::Text(t.clone()),
            }),
            TableVar::Age => r.age.map(|a| Cat::Code(a.into())),
            TableVar::State => r.state.as_deref().map(|s| Cat::Text(s.into())),
            TableVar::Derived(d) => row.cohort.and_then(|c| d.value(c)).map(Cat::Label),
        }
    }
}

/// Category counts of one variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreqCounter {
    counts: HashMap<Cat, u64>,
    missing: u64,
}

impl FreqCounter {
    #[inline]
    pub fn observe(&mut self, cat: Option<Cat>) {
        match cat {
            Some(c) => *self.counts.entry(c).or_insert(0) += 1,
            None => self.missing += 1,
        }
    }

    pub fn merge(&mut self, other: FreqCounter) {
        for (c, n) in other.counts {
            *self.counts.entry(c).or_insert(0) += n;
        }
        self.missing += other.missing;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.missing
    }

    pub fn count(&self, cat: &Cat) -> u64 {
        self.counts.get(cat).copied().unwrap_or(0)
    }

    pub fn missing(&self) -> u64 {
        self.missing
    }

    /// Rows in `levels` order, missing last, then the total.
    pub fn to_table(&self, title: &str, var: &str, levels: &[&str]) -> RenderedTable {
        let mut cats: Vec<Cat> = self.counts.keys().cloned().collect();
        sort_cats(&mut cats, levels);
        let mut rows: Vec<String> = cats.iter().map(Cat::render).collect();
        let mut counts: Vec<u64> = cats.iter().map(|c| self.counts[c]).collect();
        if self.missing > 0 {
            rows.push(FREQ_MISSING.to_string());
            counts.push(self.missing);
        }
        let total = self.total();
        let mut percents: Vec<String> = counts
            .iter()
            .map(|&n| percent_one_decimal(n, total))
            .collect();
        percents.push("100.0".to_string());
        RenderedTable {
            kind: TableKind::Frequency,
            title: title.to_string(),
            row_var: var.to_string(),
            col_var: None,
            rows,
            cols: vec!["n".to_string()],
            cells: counts.iter().map(|&n| vec![n]).collect(),
            row_totals: counts,
            col_totals: vec![total],
            total,
            percents: Some(percents),
        }
    }
}

/// Joint counts of two variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrossCounter {
    counts: HashMap<CrossKey, u64>,
}

impl CrossCounter {
    #[inline]
    pub fn observe(&mut self, row: Option<Cat>, col: Option<Cat>) {
        *self.counts.entry((row, col)).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: CrossCounter) {
        for (k, n) in other.counts {
            *self.counts.entry(k).or_insert(0) += n;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, row: Option<Cat>, col: Option<Cat>) -> u64 {
        self.counts.get(&(row, col)).copied().unwrap_or(0)
    }

    pub fn to_table(
        &self,
        title: &str,
        row_var: &str,
        col_var: &str,
        row_levels: &[&str],
        col_levels: &[&str],
    ) -> RenderedTable {
        let axis = |pick: fn(&CrossKey) -> &Option<Cat>, levels: &[&str]| {
            let mut seen: Vec<Cat> = Vec::new();
            let mut missing = false;
            for k in self.counts.keys() {
                match pick(k) {
                    Some(c) if !seen.contains(c) => seen.push(c.clone()),
                    Some(_) => {}
                    None => missing = true,
                }
            }
            sort_cats(&mut seen, levels);
            let mut axis: Vec<Option<Cat>> = seen.into_iter().map(Some).collect();
            if missing {
                axis.push(None);
            }
            axis
        };
        let row_axis = axis(|k| &k.0, row_levels);
        let col_axis = axis(|k| &k.1, col_levels);
        let label = |c: &Option<Cat>| {
            c.as_ref()
                .map_or_else(|| CROSS_MISSING.to_string(), Cat::render)
        };

        let mut index: HashMap<&Option<Cat>, usize> = HashMap::new();
        for (j, c) in col_axis.iter().enumerate() {
            index.insert(c, j);
        }
        let row_index: HashMap<&Option<Cat>, usize> =
            row_axis.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let mut cells = vec![vec![0u64; col_axis.len()]; row_axis.len()];
        for ((r, c), &n) in &self.counts {
            cells[row_index[r]][index[c]] += n;
        }
        let row_totals: Vec<u64> = cells.iter().map(|r| r.iter().sum()).collect();
        let col_totals: Vec<u64> = (0..col_axis.len())
            .map(|j| cells.iter().map(|r| r[j]).sum())
            .collect();
        RenderedTable {
            kind: TableKind::Cross,
            title: title.to_string(),
            row_var: row_var.to_string(),
            col_var: Some(col_var.to_string()),
            rows: row_axis.iter().map(label).collect(),
            cols: col_axis.iter().map(label).collect(),
            cells,
            row_totals,
            col_totals,
            total: self.total(),
            percents: None,
        }
    }
}

/// Percentage of `n` over `total`, rounded half-up to one decimal.
pub fn percent_one_decimal(n: u64, total: u64) -> String {
    if total == 0 {
        return "0.0".to_string();
    }
    let (n, total) = (u128::from(n), u128::from(total));
    // tenths of a percent = n * 1000 / total, half-up
    let tenths = (2 * n * 1000 + total) / (2 * total);
    format!("{}.{}", tenths / 10, tenths % 10)
}

pub fn frequency_table<'a, I>(rows: I, var: TableVar, title: &str) -> RenderedTable
where
    I: IntoIterator<Item = RowView<'a>>,
{
    let mut counter = FreqCounter::default();
    for row in rows {
        counter.observe(var.value(&row));
    }
    counter.to_table(title, var.name(), &var.levels())
}

pub fn cross_table<'a, I>(
    rows: I,
    row_var: TableVar,
    col_var: TableVar,
    title: &str,
) -> RenderedTable
where
    I: IntoIterator<Item = RowView<'a>>,
{
    let mut counter = CrossCounter::default();
    for row in rows {
        counter.observe(row_var.value(&row), col_var.value(&row));
    }
    counter.to_table(
        title,
        row_var.name(),
        col_var.name(),
        &row_var.levels(),
        &col_var.levels(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Frequency,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedTable {
    pub kind: TableKind,
    pub title: String,
    pub row_var: String,
    pub col_var: Option<String>,
    /// Row labels, the missing row last if present. The total row is implicit.
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<u64>>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    pub total: u64,
    /// Frequency tables only: one per row, then the total row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percents: Option<Vec<String>>,
}

impl RenderedTable {
    /// Cell, row and column sums agree.
    pub fn is_consistent(&self) -> bool {
        let rows_ok = self
            .cells
            .iter()
            .zip(&self.row_totals)
            .all(|(r, &t)| r.iter().sum::<u64>() == t);
        let cols_ok = (0..self.cols.len())
            .all(|j| self.cells.iter().map(|r| r[j]).sum::<u64>() == self.col_totals[j]);
        rows_ok
            && cols_ok
            && self.row_totals.iter().sum::<u64>() == self.total
            && self.col_totals.iter().sum::<u64>() == self.total
    }

    /// Labels passed through the English translation layer.
    pub fn translated(mut self) -> RenderedTable {
        for label in self.rows.iter_mut().chain(self.cols.iter_mut()) {
            *label = translate(label).to_string();
        }
        self
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        match self.kind {
            TableKind::Frequency => self.text_frequency(&mut out),
            TableKind::Cross => self.text_cross(&mut out),
        }
        out
    }

    fn text_frequency(&self, out: &mut String) {
        let percents = self.percents.as_deref().unwrap_or(&[]);
        let label_w = self
            .rows
            .iter()
            .map(|r| r.chars().count())
            .chain([5])
            .max()
            .unwrap_or(5);
        let n_w = self.total.to_string().len().max(1);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:label_w$}  {:>n_w$}  {:>5}", "", "n", "%");
        for (i, label) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}  {:>n_w$}  {:>5}",
                pad(label, label_w),
                self.row_totals[i],
                percents[i]
            );
        }
        let _ = writeln!(
            out,
            "{}  {:>n_w$}  {:>5}",
            pad("Total", label_w),
            self.total,
            "100.0"
        );
    }

    fn text_cross(&self, out: &mut String) {
        let col_var = self.col_var.as_deref().unwrap_or("");
        let _ = writeln!(out, "{} * {}", self.row_var, col_var);
        let _ = writeln!(out);
        let label_w = self
            .rows
            .iter()
            .map(|r| r.chars().count())
            .chain([5, self.row_var.chars().count() + 2])
            .max()
            .unwrap_or(5);
        let cell_w = self
            .cols
            .iter()
            .map(|c| c.chars().count())
            .chain([self.total.to_string().len(), 5])
            .max()
            .unwrap_or(5);
        let mut header = format!("{:>label_w$}", col_var);
        for c in self.cols.iter().map(String::as_str).chain(["Total"]) {
            let _ = write!(header, "  {}", lpad(c, cell_w));
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "  {}", self.row_var);
        let line = |label: &str, values: &mut dyn Iterator<Item = u64>| {
            let mut s = lpad(label, label_w);
            for v in values {
                let _ = write!(s, "  {v:>cell_w$}");
            }
            s
        };
        for (i, label) in self.rows.iter().enumerate() {
            let mut values = self.cells[i].iter().copied().chain([self.row_totals[i]]);
            let _ = writeln!(out, "{}", line(label, &mut values));
        }
        let mut totals = self.col_totals.iter().copied().chain([self.total]);
        let _ = writeln!(out, "{}", line("Total", &mut totals));
    }

    pub fn render_dsv(&self, delimiter: u8) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        match self.kind {
            TableKind::Frequency => {
                let percents = self.percents.as_deref().unwrap_or(&[]);
                w.write_record([self.row_var.as_str(), "n", "percent"])?;
                for (i, label) in self.rows.iter().enumerate() {
                    w.write_record([
                        label.as_str(),
                        &self.row_totals[i].to_string(),
                        &percents[i],
                    ])?;
                }
                w.write_record(["Total", &self.total.to_string(), "100.0"])?;
            }
            TableKind::Cross => {
                let mut header = vec![self.row_var.clone()];
                header.extend(self.cols.iter().cloned());
                header.push("Total".to_string());
                w.write_record(&header)?;
                for (i, label) in self.rows.iter().enumerate() {
                    let mut rec = vec![label.clone()];
                    rec.extend(self.cells[i].iter().map(u64::to_string));
                    rec.push(self.row_totals[i].to_string());
                    w.write_record(&rec)?;
                }
                let mut rec = vec!["Total".to_string()];
                rec.extend(self.col_totals.iter().map(u64::to_string));
                rec.push(self.total.to_string());
                w.write_record(&rec)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("table labels are utf-8"))
    }

    pub fn render_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn pad(s: &str, width: usize) -> String {
    let n = s.chars().count();
    format!("{s}{}", " ".repeat(width.saturating_sub(n)))
}

fn lpad(s: &str, width: usize) -> String {
    let n = s.chars().count();
    format!("{}{s}", " ".repeat(width.saturating_sub(n)))
}

/// Which stream a table is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// After the epidemiological-window filter, stamps uncorrected.
    Window,
    /// After the week-53 correction and the current-week cut.
    Current,
    /// Selected obstetric cases.
    Cohort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSpec {
    pub name: String,
    pub title: String,
    pub population: Population,
    pub row: TableVar,
    pub col: Option<TableVar>,
}

impl TableSpec {
    fn freq(name: &str, title: &str, population: Population, row: TableVar) -> TableSpec {
        TableSpec {
            name: name.into(),
            title: title.into(),
            population,
            row,
            col: None,
        }
    }

    fn cross(
        name: &str,
        title: &str,
        population: Population,
        row: TableVar,
        col: TableVar,
    ) -> TableSpec {
        TableSpec {
            name: name.into(),
            title: title.into(),
            population,
            row,
            col: Some(col),
        }
    }

    pub fn counter(&self) -> TableCounter {
        match self.col {
            None => TableCounter::Freq(FreqCounter::default()),
            Some(_) => TableCounter::Cross(CrossCounter::default()),
        }
    }

    pub fn render(&self, counter: &TableCounter) -> RenderedTable {
        match (counter, self.col) {
            (TableCounter::Freq(c), _) => {
                c.to_table(&self.title, self.row.name(), &self.row.levels())
            }
            (TableCounter::Cross(c), Some(col)) => c.to_table(
                &self.title,
                self.row.name(),
                col.name(),
                &self.row.levels(),
                &col.levels(),
            ),
            (TableCounter::Cross(c), None) => {
                c.to_table(&self.title, self.row.name(), "", &self.row.levels(), &[])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableCounter {
    Freq(FreqCounter),
    Cross(CrossCounter),
}

impl TableCounter {
    #[inline]
    pub fn observe(&mut self, spec: &TableSpec, row: &RowView<'_>) {
        match self {
            TableCounter::Freq(c) => c.observe(spec.row.value(row)),
            TableCounter::Cross(c) => {
                c.observe(spec.row.value(row), spec.col.and_then(|v| v.value(row)))
            }
        }
    }

    pub fn merge(&mut self, other: TableCounter) {
        match (self, other) {
            (TableCounter::Freq(a), TableCounter::Freq(b)) => a.merge(b),
            (TableCounter::Cross(a), TableCounter::Cross(b)) => a.merge(b),
            _ => panic!("merging counters of different table kinds"),
        }
    }
}

/// Every table the build can emit, in output order.
pub fn catalog() -> Vec<TableSpec> {
    use Population::*;
    let mut specs = vec![
        TableSpec::cross(
            "week_by_year_raw",
            "Cross table of epidemiological week and year",
            Window,
            TableVar::Week,
            TableVar::Year,
        ),
        TableSpec::cross(
            "week_by_year",
            "Cross table of epidemiological week and year after correction",
            Current,
            TableVar::Week,
            TableVar::Year,
        ),
        TableSpec::freq(
            "gestant",
            "Frequency table for variable about pregnancy",
            Current,
            TableVar::Code(CodedField::CsGestant),
        ),
        TableSpec::cross(
            "gestant_by_sex",
            "Cross table of gestation and sex",
            Current,
            TableVar::Code(CodedField::CsGestant),
            TableVar::Sex,
        ),
        TableSpec::freq(
            "puerpera",
            "Frequency table for puerperium",
            Current,
            TableVar::Code(CodedField::Puerpera),
        ),
        TableSpec::cross(
            "puerpera_by_sex",
            "Cross table of puerperium and sex",
            Current,
            TableVar::Code(CodedField::Puerpera),
            TableVar::Sex,
        ),
        TableSpec::freq(
            "classi_fin",
            "Frequency table for SARI diagnosis",
            Cohort,
            TableVar::Code(CodedField::ClassiFin),
        ),
    ];
    for var in DerivedVar::all() {
        let title = match var {
            DerivedVar::Status => {
                "Frequency table for gestational trimester or postpartum variable".to_string()
            }
            DerivedVar::Covid => "Frequency table for COVID-19 diagnostic type".to_string(),
            DerivedVar::Region => "Frequency table for the region of Brazil".to_string(),
            other => format!("Frequency table for {}", other.name()),
        };
        specs.push(TableSpec::freq(
            var.name(),
            &title,
            Cohort,
            TableVar::Derived(var),
        ));
    }
    specs
}

/// Resolves a comma-separated selection (`all` for everything).
pub fn select_tables(selection: &str) -> Result<Vec<TableSpec>> {
    let all = catalog();
    if selection.trim() == "all" {
        return Ok(all);
    }
    let mut out = Vec::new();
    for name in selection
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let spec = all
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
        if !out.contains(spec) {
            out.push(spec.clone());
        }
    }
    // keep catalog order regardless of how the selection was written
    out.sort_by_key(|s| all.iter().position(|a| a.name == s.name));
    Ok(out)
}
