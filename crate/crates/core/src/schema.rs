//! Typed view of the SIVEP-Gripe columns the pipeline reads, and the code
//! dictionaries for every coded column.

use std::borrow::Cow;
use std::fmt;
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use chrono::NaiveDate;
use serde::Serialize;

use crate::encoding::TextEncoding;
use crate::error::{Error, Result};

macro_rules! coded_fields {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// Integer-coded columns.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum CodedField {
            $($variant),+
        }

        impl CodedField {
            pub const ALL: &'static [CodedField] = &[$(CodedField::$variant),+];
            pub const COUNT: usize = CodedField::ALL.len();

            pub fn column(self) -> &'static str {
                match self {
                    $(CodedField::$variant => $name),+
                }
            }
        }

        impl Serialize for CodedField {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.column())
            }
        }
    };
}

coded_fields! {
    CsGestant => "CS_GESTANT",
    Puerpera => "PUERPERA",
    ClassiFin => "CLASSI_FIN",
    PcrSars2 => "PCR_SARS2",
    AnSars2 => "AN_SARS2",
    ResIgg => "RES_IGG",
    ResIgm => "RES_IGM",
    ResIga => "RES_IGA",
    CsRaca => "CS_RACA",
    CsEscolN => "CS_ESCOL_N",
    Hospital => "HOSPITAL",
    HistoVgm => "HISTO_VGM",
    SurtoSg => "SURTO_SG",
    Nosocomial => "NOSOCOMIAL",
    AveSuino => "AVE_SUINO",
    Vacina => "VACINA",
    Antiviral => "ANTIVIRAL",
    CsZona => "CS_ZONA",
    Febre => "FEBRE",
    Tosse => "TOSSE",
    Garganta => "GARGANTA",
    Dispneia => "DISPNEIA",
    DescResp => "DESC_RESP",
    Saturacao => "SATURACAO",
    Diarreia => "DIARREIA",
    Vomito => "VOMITO",
    DorAbd => "DOR_ABD",
    Fadiga => "FADIGA",
    PerdOlft => "PERD_OLFT",
    PerdPala => "PERD_PALA",
    Cardiopati => "CARDIOPATI",
    Hematologi => "HEMATOLOGI",
    Hepatica => "HEPATICA",
    Asma => "ASMA",
    Diabetes => "DIABETES",
    Neurologic => "NEUROLOGIC",
    Pneumopati => "PNEUMOPATI",
    Imunodepre => "IMUNODEPRE",
    Renal => "RENAL",
    Obesidade => "OBESIDADE",
    Uti => "UTI",
    SuportVen => "SUPORT_VEN",
    Evolucao => "EVOLUCAO",
}

impl CodedField {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_column(name: &str) -> Option<CodedField> {
        CodedField::ALL.iter().copied().find(|f| f.column() == name)
    }
}

impl fmt::Display for CodedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// Every modeled column, in the order used for exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    Onset,
    Week,
    Sex,
    Age,
    State,
    MunResidence,
    MunHospital,
    PcrText,
    AntigenText,
    Coded(CodedField),
}

impl Column {
    pub fn name(self) -> &'static str {
        match self {
            Column::Onset => "DT_SIN_PRI",
            Column::Week => "SEM_PRI",
            Column::Sex => "CS_SEXO",
            Column::Age => "NU_IDADE_N",
            Column::State => "SG_UF",
            Column::MunResidence => "CO_MUN_RES",
            Column::MunHospital => "CO_MU_INTE",
            Column::PcrText => "DS_PCR_OUT",
            Column::AntigenText => "DS_AN_OUT",
            Column::Coded(f) => f.column(),
        }
    }

    pub fn all() -> impl Iterator<Item = Column> {
        [
            Column::Onset,
            Column::Week,
            Column::Sex,
            Column::Age,
            Column::State,
            Column::MunResidence,
            Column::MunHospital,
            Column::PcrText,
            Column::AntigenText,
        ]
        .into_iter()
        .chain(CodedField::ALL.iter().map(|&f| Column::Coded(f)))
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::all().find(|c| c.name() == name)
    }

    /// Columns whose absence from a header is fatal.
    pub const REQUIRED: [Column; 6] = [
        Column::Onset,
        Column::Week,
        Column::Sex,
        Column::Age,
        Column::Coded(CodedField::CsGestant),
        Column::Coded(CodedField::Puerpera),
    ];
}

/// `CS_SEXO`. Tokens outside F/M/I are kept verbatim as out-of-dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sex {
    Female,
    Male,
    Ignored,
    Other(Box<str>),
}

impl Sex {
    pub fn parse(token: &str) -> Sex {
        match token {
            "F" => Sex::Female,
            "M" => Sex::Male,
            "I" => Sex::Ignored,
            other => Sex::Other(other.into()),
        }
    }

    pub fn code(&self) -> &str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
            Sex::Ignored => "I",
            Sex::Other(s) => s,
        }
    }
}

/// Position of a data row in its source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct RowOrigin {
    /// Index of the input file in merge order.
    pub file: u32,
    /// 1-based data row number (header excluded).
    pub row: u64,
}

impl fmt::Display for RowOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.row)
    }
}

/// Unmodeled columns carried through untouched. Values stay in their source
/// encoding until read.
#[derive(Clone, Default)]
pub struct ExtraFields {
    names: Arc<[Box<str>]>,
    raw: Box<[u8]>,
    ends: Box<[u32]>,
    encoding: TextEncoding,
}

impl ExtraFields {
    pub fn new(names: Arc<[Box<str>]>, values: &[&[u8]], encoding: TextEncoding) -> ExtraFields {
        assert_eq!(names.len(), values.len());
        let mut raw = Vec::with_capacity(values.iter().map(|v| v.len()).sum());
        let mut ends = Vec::with_capacity(values.len());
        for v in values {
            raw.extend_from_slice(v);
            ends.push(raw.len() as u32);
        }
        ExtraFields {
            names,
            raw: raw.into(),
            ends: ends.into(),
            encoding,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[Box<str>] {
        &self.names
    }

    fn raw_value(&self, idx: usize) -> &[u8] {
        let start = if idx == 0 {
            0
        } else {
            self.ends[idx - 1] as usize
        };
        &self.raw[start..self.ends[idx] as usize]
    }

    pub fn get(&self, name: &str) -> Option<Cow<'_, str>> {
        let idx = self.names.iter().position(|n| &**n == name)?;
        Some(self.encoding.decode(self.raw_value(idx)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Cow<'_, str>)> {
        (0..self.len()).map(|i| (&*self.names[i], self.encoding.decode(self.raw_value(i))))
    }
}

impl fmt::Debug for ExtraFields {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

impl PartialEq for ExtraFields {
    fn eq(&self, other: &Self) -> bool {
        self.iter().eq(other.iter())
    }
}

/// One notification row.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveillanceRecord {
    pub origin: RowOrigin,
    /// `DT_SIN_PRI`, date of first symptoms.
    pub onset: Option<NaiveDate>,
    /// `SEM_PRI`, epidemiological week of first symptoms (1..=53).
    pub week: Option<u8>,
    pub sex: Option<Sex>,
    /// `NU_IDADE_N`, read as years regardless of any unit column.
    pub age: Option<i32>,
    pub codes: [Option<i16>; CodedField::COUNT],
    /// `SG_UF`, state of residence.
    pub state: Option<String>,
    pub mun_residence: Option<u32>,
    pub mun_hospital: Option<u32>,
    /// `DS_PCR_OUT`
    pub pcr_text: Option<String>,
    /// `DS_AN_OUT`
    pub antigen_text: Option<String>,
    pub extra: ExtraFields,
}

impl Default for SurveillanceRecord {
    fn default() -> Self {
        SurveillanceRecord {
            origin: RowOrigin::default(),
            onset: None,
            week: None,
            sex: None,
            age: None,
            codes: [None; CodedField::COUNT],
            state: None,
            mun_residence: None,
            mun_hospital: None,
            pcr_text: None,
            antigen_text: None,
            extra: ExtraFields::default(),
        }
    }
}

impl SurveillanceRecord {
    #[inline]
    pub fn code(&self, field: CodedField) -> Option<i16> {
        self.codes[field.index()]
    }

    pub fn set_code(&mut self, field: CodedField, value: Option<i16>) {
        self.codes[field.index()] = value;
    }

    pub fn with_code(mut self, field: CodedField, value: impl Into<Option<i16>>) -> Self {
        self.set_code(field, value.into());
        self
    }

    /// Text rendering of a modeled column, `None` when missing.
    pub fn column_text(&self, column: Column) -> Option<Cow<'_, str>> {
        match column {
            Column::Onset => self
                .onset
                .map(|d| Cow::Owned(d.format("%d/%m/%Y").to_string())),
            Column::Week => self.week.map(|w| Cow::Owned(w.to_string())),
            Column::Sex => self.sex.as_ref().map(|s| Cow::Borrowed(s.code())),
            Column::Age => self.age.map(|a| Cow::Owned(a.to_string())),
            Column::State => self.state.as_deref().map(Cow::Borrowed),
            Column::MunResidence => self.mun_residence.map(|m| Cow::Owned(m.to_string())),
            Column::MunHospital => self.mun_hospital.map(|m| Cow::Owned(m.to_string())),
            Column::PcrText => self.pcr_text.as_deref().map(Cow::Borrowed),
            Column::AntigenText => self.antigen_text.as_deref().map(Cow::Borrowed),
            Column::Coded(f) => self.code(f).map(|c| Cow::Owned(c.to_string())),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CodeEntry {
    pub code: &'static str,
    pub label: &'static str,
    pub translation: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct UndocumentedCode {
    pub code: &'static str,
    pub note: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldDictionary {
    pub field: &'static str,
    pub description: &'static str,
    pub entries: Vec<CodeEntry>,
    pub undocumented: Vec<UndocumentedCode>,
}

impl FieldDictionary {
    fn entry(&self, code: &str) -> Option<&CodeEntry> {
        self.entries.iter().find(|e| e.code == code)
    }
}

/// Result of a dictionary lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup<'a> {
    Label(&'a str),
    /// A present code with no dictionary entry. `known` marks codes that are
    /// documented as occurring in the data despite having no entry.
    OutOfDictionary {
        code: String,
        known: bool,
    },
    Missing,
}

/// Per-field dictionaries. Immutable once built.
#[derive(Debug, Clone, Serialize)]
pub struct CodeBook {
    fields: Vec<FieldDictionary>,
    #[serde(skip)]
    int_codes: Vec<Vec<i16>>,
}

const YES_NO_IGNORED: &[(&str, &str, &str)] = &[
    ("1", "Yes", "Sim"),
    ("2", "No", "Não"),
    ("9", "Ignored", "Ignorado"),
];

const POSITIVE_MARK: &[(&str, &str, &str)] = &[("1", "Positive", "Positivo (marcado)")];

const SEROLOGY: &[(&str, &str, &str)] = &[
    ("1", "Positive", "Positivo"),
    ("2", "Negative", "Negativo"),
    ("3", "Inconclusive", "Inconclusivo"),
    ("4", "Not performed", "Não realizado"),
    ("5", "Awaiting result", "Aguardando resultado"),
    ("9", "Ignored", "Ignorado"),
];

fn coded_dictionary(
    field: CodedField,
) -> (
    &'static str,
    &'static [(&'static str, &'static str, &'static str)],
) {
    use CodedField::*;
    match field {
        CsGestant => (
            "Gestational age",
            &[
                ("1", "1st trimester", "1º Trimestre"),
                ("2", "2nd trimester", "2º Trimestre"),
                ("3", "3rd trimester", "3º Trimestre"),
                ("4", "Ignored gestational age", "Idade gestacional ignorada"),
                ("5", "No", "Não"),
                ("6", "Does not apply", "Não se aplica"),
                ("9", "Ignored", "Ignorado"),
            ],
        ),
        Puerpera => ("Puerperium", YES_NO_IGNORED),
        ClassiFin => (
            "Final SARI diagnosis",
            &[
                ("1", "SARI by influenza", "SRAG por influenza"),
                (
                    "2",
                    "SARI by another respiratory virus",
                    "SRAG por outro vírus respiratório",
                ),
                (
                    "3",
                    "SARI by another etiologic agent",
                    "SRAG por outro agente etiológico",
                ),
                ("4", "SARI not specified", "SRAG não especificado"),
                ("5", "SARI by COVID-19", "SRAG por COVID-19"),
            ],
        ),
        PcrSars2 => ("RT-PCR positive for SARS-CoV-2", POSITIVE_MARK),
        AnSars2 => ("Antigen test positive for SARS-CoV-2", POSITIVE_MARK),
        ResIgg => ("Serology IgG result", SEROLOGY),
        ResIgm => ("Serology IgM result", SEROLOGY),
        ResIga => ("Serology IgA result", SEROLOGY),
        CsRaca => (
            "Race",
            &[
                ("1", "White", "Branca"),
                ("2", "Black", "Preta"),
                ("3", "Yellow", "Amarela"),
                ("4", "Brown", "Parda"),
                ("5", "Indigenous", "Indígena"),
                ("9", "Ignored", "Ignorado"),
            ],
        ),
        CsEscolN => (
            "Education",
            &[
                ("0", "No schooling", "Sem escolaridade/Analfabeto"),
                ("1", "Elementary school, 1st cycle", "Fundamental 1º ciclo"),
                ("2", "Elementary school, 2nd cycle", "Fundamental 2º ciclo"),
                ("3", "High school", "Médio"),
                ("4", "Higher education", "Superior"),
                ("5", "Does not apply", "Não se aplica"),
                ("9", "Ignored", "Ignorado"),
            ],
        ),
        Hospital => ("Hospitalization", YES_NO_IGNORED),
        HistoVgm => ("Travel history", YES_NO_IGNORED),
        SurtoSg => ("Influenza syndrome evolved to SARI", YES_NO_IGNORED),
        Nosocomial => ("Hospital-acquired infection", YES_NO_IGNORED),
        AveSuino => ("Contact with poultry or swine", YES_NO_IGNORED),
        Vacina => ("Influenza vaccine", YES_NO_IGNORED),
        Antiviral => (
            "Antiviral",
            &[
                ("1", "Oseltamivir", "Oseltamivir"),
                ("2", "Zanamivir", "Zanamivir"),
                ("3", "Other", "Outro"),
                ("9", "Ignored", "Ignorado"),
            ],
        ),
        CsZona => (
            "Residence zone",
            &[
                ("1", "Urban", "Urbana"),
                ("2", "Rural", "Rural"),
                ("3", "Periurban", "Periurbana"),
                ("9", "Ignored", "Ignorado"),
            ],
        ),
        Febre => ("Fever", YES_NO_IGNORED),
        Tosse => ("Cough", YES_NO_IGNORED),
        Garganta => ("Sore throat", YES_NO_IGNORED),
        Dispneia => ("Dyspnoea", YES_NO_IGNORED),
        DescResp => ("Respiratory distress", YES_NO_IGNORED),
        Saturacao => ("O2 saturation below 95%", YES_NO_IGNORED),
        Diarreia => ("Diarrhea", YES_NO_IGNORED),
        Vomito => ("Vomiting", YES_NO_IGNORED),
        DorAbd => ("Abdominal pain", YES_NO_IGNORED),
        Fadiga => ("Fatigue", YES_NO_IGNORED),
        PerdOlft => ("Loss of smell", YES_NO_IGNORED),
        PerdPala => ("Loss of taste", YES_NO_IGNORED),
        Cardiopati => ("Cardiovascular disease", YES_NO_IGNORED),
        Hematologi => ("Hematological disease", YES_NO_IGNORED),
        Hepatica => ("Liver disease", YES_NO_IGNORED),
        Asma => ("Asthma", YES_NO_IGNORED),
        Diabetes => ("Diabetes", YES_NO_IGNORED),
        Neurologic => ("Neurological disease", YES_NO_IGNORED),
        Pneumopati => ("Pneumopathy", YES_NO_IGNORED),
        Imunodepre => ("Immunosuppression", YES_NO_IGNORED),
        Renal => ("Kidney disease", YES_NO_IGNORED),
        Obesidade => ("Obesity", YES_NO_IGNORED),
        Uti => ("ICU admission", YES_NO_IGNORED),
        SuportVen => (
            "Ventilatory support",
            &[
                ("1", "Yes, invasive", "Sim, invasivo"),
                ("2", "Yes, non-invasive", "Sim, não invasivo"),
                ("3", "No", "Não"),
                ("9", "Ignored", "Ignorado"),
            ],
        ),
        Evolucao => (
            "Case evolution",
            &[
                ("1", "Cure", "Cura"),
                ("2", "Death", "Óbito"),
                ("3", "Death from other causes", "Óbito por outras causas"),
                ("9", "Ignored", "Ignorado"),
            ],
        ),
    }
}

fn entries(list: &[(&'static str, &'static str, &'static str)]) -> Vec<CodeEntry> {
    list.iter()
        .map(|&(code, label, translation)| CodeEntry {
            code,
            label,
            translation,
        })
        .collect()
}

impl CodeBook {
    /// The compiled-in SIVEP-Gripe dictionary.
    pub fn sivep() -> &'static CodeBook {
        static BOOK: OnceLock<CodeBook> = OnceLock::new();
        BOOK.get_or_init(CodeBook::build)
    }

    fn build() -> CodeBook {
        let mut fields = vec![FieldDictionary {
            field: "CS_SEXO",
            description: "Sex",
            entries: entries(&[
                ("F", "Female", "Feminino"),
                ("M", "Male", "Masculino"),
                ("I", "Ignored", "Ignorado"),
            ]),
            undocumented: Vec::new(),
        }];
        let mut int_codes = Vec::with_capacity(CodedField::COUNT);
        for &field in CodedField::ALL {
            let (description, list) = coded_dictionary(field);
            let undocumented = if field == CodedField::CsGestant {
                vec![UndocumentedCode {
                    code: "0",
                    note: "occurs in snapshots but has no dictionary entry",
                }]
            } else {
                Vec::new()
            };
            int_codes.push(
                list.iter()
                    .map(|(c, _, _)| c.parse().expect("numeric code"))
                    .collect(),
            );
            fields.push(FieldDictionary {
                field: field.column(),
                description,
                entries: entries(list),
                undocumented,
            });
        }
        CodeBook { fields, int_codes }
    }

    pub fn fields(&self) -> &[FieldDictionary] {
        &self.fields
    }

    pub fn field(&self, name: &str) -> Result<&FieldDictionary> {
        self.fields
            .iter()
            .find(|f| f.field == name)
            .ok_or_else(|| Error::UndeclaredField(name.to_string()))
    }

    pub fn lookup(&self, field: &str, code: Option<&str>) -> Result<Lookup<'_>> {
        let dict = self.field(field)?;
        let Some(code) = code else {
            return Ok(Lookup::Missing);
        };
        Ok(match dict.entry(code) {
            Some(e) => Lookup::Label(e.label),
            None => Lookup::OutOfDictionary {
                code: code.to_string(),
                known: dict.undocumented.iter().any(|u| u.code == code),
            },
        })
    }

    /// Reverse lookup from a label to its code.
    pub fn code_for_label(&self, field: &str, label: &str) -> Result<Option<&'static str>> {
        Ok(self
            .field(field)?
            .entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| e.code))
    }

    /// Fast membership test for integer-coded columns.
    #[inline]
    pub fn is_documented(&self, field: CodedField, code: i16) -> bool {
        self.int_codes[field.index()].contains(&code)
    }

    /// Fails with the first field name that has no dictionary.
    pub fn check_covers<'a>(&self, fields: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for name in fields {
            self.field(name)?;
        }
        Ok(())
    }

    /// Human-readable data dictionary, one table per field.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for dict in &self.fields {
            let _ = writeln!(out, "{} - {}", dict.field, dict.description);
            let label_w = dict
                .entries
                .iter()
                .map(|e| e.label.chars().count())
                .max()
                .unwrap_or(0)
                .max(5);
            let _ = writeln!(out, "  {:<4}  {:<label_w$}  translation", "code", "label");
            for e in &dict.entries {
                let _ = writeln!(
                    out,
                    "  {:<4}  {:<label_w$}  {}",
                    e.code, e.label, e.translation
                );
            }
            for u in &dict.undocumented {
                let _ = writeln!(out, "  {:<4}  (no dictionary entry: {})", u.code, u.note);
            }
            out.push('\n');
        }
        out
    }
}
