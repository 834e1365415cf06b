//! Straight-line reference implementation of the selection and recoding
//! listing, written without any pipeline code. Slow and simple on purpose.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};

pub type Row = BTreeMap<String, Option<String>>;

const CODED: &[&str] = &[
    "CS_GESTANT",
    "PUERPERA",
    "CLASSI_FIN",
    "PCR_SARS2",
    "AN_SARS2",
    "RES_IGG",
    "RES_IGM",
    "RES_IGA",
    "CS_RACA",
    "CS_ESCOL_N",
    "HOSPITAL",
    "HISTO_VGM",
    "SURTO_SG",
    "NOSOCOMIAL",
    "AVE_SUINO",
    "VACINA",
    "ANTIVIRAL",
    "CS_ZONA",
    "FEBRE",
    "TOSSE",
    "GARGANTA",
    "DISPNEIA",
    "DESC_RESP",
    "SATURACAO",
    "DIARREIA",
    "VOMITO",
    "DOR_ABD",
    "FADIGA",
    "PERD_OLFT",
    "PERD_PALA",
    "CARDIOPATI",
    "HEMATOLOGI",
    "HEPATICA",
    "ASMA",
    "DIABETES",
    "NEUROLOGIC",
    "PNEUMOPATI",
    "IMUNODEPRE",
    "RENAL",
    "OBESIDADE",
    "UTI",
    "SUPORT_VEN",
    "EVOLUCAO",
];

/// (output name, source column) for every sim/não block.
const YES_NO: &[(&str, &str)] = &[
    ("hospital", "HOSPITAL"),
    ("hist_viagem", "HISTO_VGM"),
    ("sg_para_srag", "SURTO_SG"),
    ("inf_inter", "NOSOCOMIAL"),
    ("cont_ave_suino", "AVE_SUINO"),
    ("vacina", "VACINA"),
    ("febre", "FEBRE"),
    ("tosse", "TOSSE"),
    ("garganta", "GARGANTA"),
    ("dispneia", "DISPNEIA"),
    ("desc_resp", "DESC_RESP"),
    ("saturacao", "SATURACAO"),
    ("diarreia", "DIARREIA"),
    ("vomito", "VOMITO"),
    ("dor_abd", "DOR_ABD"),
    ("fadiga", "FADIGA"),
    ("perd_olft", "PERD_OLFT"),
    ("perd_pala", "PERD_PALA"),
    ("cardiopati", "CARDIOPATI"),
    ("hematologi", "HEMATOLOGI"),
    ("hepatica", "HEPATICA"),
    ("asma", "ASMA"),
    ("diabetes", "DIABETES"),
    ("neuro", "NEUROLOGIC"),
    ("pneumopati", "PNEUMOPATI"),
    ("imunodepre", "IMUNODEPRE"),
    ("renal", "RENAL"),
    ("obesidade", "OBESIDADE"),
    ("uti", "UTI"),
];

/// Derived variable names in export order.
pub fn derived_names() -> Vec<&'static str> {
    let mut v = vec![
        "classi_gesta_puerp",
        "pcr_SN",
        "antigeno_SN",
        "sorologia_SN",
        "classi_covid",
        "region",
    ];
    v.extend(["raca", "escol", "faixa_et"]);
    v.extend(YES_NO[..6].iter().map(|p| p.0));
    v.extend(["antiviral", "zona"]);
    v.extend(YES_NO[6..].iter().map(|p| p.0));
    v.extend(["suport_ven", "evolucao", "mudou_muni"]);
    v
}

/// One decoded input row.
#[derive(Debug, Clone)]
pub struct Rec {
    pub file: u32,
    pub row: u64,
    pub text: Row,
    pub ints: BTreeMap<String, Option<i64>>,
    pub onset: Option<NaiveDate>,
}

impl Rec {
    fn int(&self, col: &str) -> Option<i64> {
        self.ints.get(col).copied().flatten()
    }

    fn text(&self, col: &str) -> Option<&str> {
        self.text.get(col).and_then(|v| v.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub key: &'static str,
    pub records_in: u64,
    pub records_out: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: u64,
    pub malformed: Vec<(u32, u64)>,
    pub funnel: Vec<Stage>,
    /// (file, row) to derived values, including `ano`.
    pub cohort: BTreeMap<(u32, u64), Row>,
    /// Table name to `;`-separated rendering.
    pub tables: BTreeMap<String, String>,
    pub male_pregnant: u64,
    pub male_puerperal: u64,
    /// (field, code) to count, over the post-correction stream.
    pub undocumented: BTreeMap<(String, i64), u64>,
}

fn missing(v: &str) -> bool {
    v.is_empty() || v == "NA"
}

fn int_range(col: &str) -> (i64, i64) {
    match col {
        "SEM_PRI" => (1, 53),
        "NU_IDADE_N" => (i32::MIN as i64, i32::MAX as i64),
        "CO_MUN_RES" | "CO_MU_INTE" => (0, u32::MAX as i64),
        _ => (i16::MIN as i64, i16::MAX as i64),
    }
}

/// Reads one ISO-8859-2 `;` file.
pub fn read(path: &Path, file: u32) -> (Vec<Rec>, Vec<(u32, u64)>, u64) {
    let bytes = std::fs::read(path).expect("read snapshot");
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let mut records = rdr.byte_records();
    let decode = |b: &[u8]| {
        encoding_rs::ISO_8859_2
            .decode_without_bom_handling(b)
            .0
            .into_owned()
    };
    let header: Vec<String> = match records.next() {
        Some(h) => h
            .unwrap()
            .iter()
            .map(|f| decode(f).trim().to_string())
            .collect(),
        None => return (Vec::new(), Vec::new(), 0),
    };
    let mut int_cols: Vec<&str> = vec!["SEM_PRI", "NU_IDADE_N", "CO_MUN_RES", "CO_MU_INTE"];
    int_cols.extend(CODED);
    let mut out = Vec::new();
    let mut bad = Vec::new();
    let mut n = 0u64;
    'rows: for (i, rec) in records.enumerate() {
        let rec = rec.unwrap();
        let row = i as u64 + 1;
        n += 1;
        if rec.len() != header.len() {
            bad.push((file, row));
            continue;
        }
        let mut text = Row::new();
        for (name, raw) in header.iter().zip(rec.iter()) {
            let v = decode(raw)
                .trim_matches(|c: char| c.is_ascii_whitespace())
                .to_string();
            text.insert(name.clone(), if missing(&v) { None } else { Some(v) });
        }
        let mut ints = BTreeMap::new();
        for col in &int_cols {
            let v = text.get(*col).cloned().flatten();
            let parsed = match v {
                None => None,
                Some(s) => match s.parse::<i64>() {
                    Ok(x) if (int_range(col).0..=int_range(col).1).contains(&x) => Some(x),
                    _ => {
                        bad.push((file, row));
                        continue 'rows;
                    }
                },
            };
            ints.insert(col.to_string(), parsed);
        }
        let onset = text
            .get("DT_SIN_PRI")
            .cloned()
            .flatten()
            .and_then(|s| NaiveDate::parse_from_str(&s, "%d/%m/%Y").ok());
        out.push(Rec {
            file,
            row,
            text,
            ints,
            onset,
        });
    }
    (out, bad, n)
}

fn yes(b: bool) -> &'static str {
    if b {
        "sim"
    } else {
        "não"
    }
}

/// `classi_gesta_puerp`
pub fn gesta_puerp(gestant: Option<i64>, puerpera: Option<i64>) -> &'static str {
    match (gestant, puerpera) {
        (Some(1), _) => "1tri",
        (Some(2), _) => "2tri",
        (Some(3), _) => "3tri",
        (Some(4), _) => "IG_ig",
        (Some(5), Some(1)) => "puerp",
        (Some(9), Some(1)) => "puerp",
        _ => "não",
    }
}

/// `classi_covid` from the three indicator labels.
pub fn classi_covid(
    classi_fin: Option<i64>,
    pcr: &str,
    antigen: &str,
    serology: &str,
) -> &'static str {
    let five = classi_fin == Some(5);
    if five && pcr == "sim" {
        "pcr"
    } else if five && pcr == "não" && antigen == "sim" {
        "antigenio"
    } else if five && serology == "sim" && antigen == "não" && pcr == "não" {
        "sorologia"
    } else if classi_fin.is_some() && classi_fin != Some(5) {
        "não"
    } else {
        "outro"
    }
}

fn text_hit(text: Option<&str>, patterns: &[&str]) -> bool {
    match text {
        Some(t) => {
            let up = t.to_uppercase();
            patterns.iter().any(|p| up.contains(p))
        }
        None => false,
    }
}

pub fn pcr_sn(pcr_sars2: Option<i64>, text: Option<&str>) -> &'static str {
    yes(pcr_sars2 == Some(1) || text_hit(text, &["SARS", "COVID", "COV", "CORONA", "CIVID"]))
}

pub fn antigeno_sn(an_sars2: Option<i64>, text: Option<&str>) -> &'static str {
    yes(an_sars2 == Some(1) || text_hit(text, &["SARS", "COVID", "COV", "CORONA", "CONA"]))
}

pub fn sorologia_sn(igg: Option<i64>, igm: Option<i64>, iga: Option<i64>) -> &'static str {
    yes(igg.unwrap_or(0) == 1 || igm.unwrap_or(0) == 1 || iga.unwrap_or(0) == 1)
}

pub fn region(uf: Option<&str>) -> &'static str {
    let Some(uf) = uf else { return "unknown" };
    if ["SP", "RJ", "ES", "MG"].contains(&uf) {
        "southeast"
    } else if ["PR", "SC", "RS"].contains(&uf) {
        "south"
    } else if ["GO", "MT", "MS", "DF"].contains(&uf) {
        "central"
    } else if ["AL", "BA", "CE", "MA", "PB", "PE", "PI", "RN", "SE"].contains(&uf) {
        "northeast"
    } else {
        "north"
    }
}

fn lookup(v: Option<i64>, map: &[(i64, &'static str)]) -> Option<&'static str> {
    let v = v?;
    map.iter().find(|(c, _)| *c == v).map(|(_, l)| *l)
}

fn derive(r: &Rec, status: &'static str, ano: i64) -> Row {
    let mut d: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    let pcr = pcr_sn(r.int("PCR_SARS2"), r.text("DS_PCR_OUT"));
    let ant = antigeno_sn(r.int("AN_SARS2"), r.text("DS_AN_OUT"));
    let sor = sorologia_sn(r.int("RES_IGG"), r.int("RES_IGM"), r.int("RES_IGA"));
    d.insert("classi_gesta_puerp", Some(status));
    d.insert("pcr_SN", Some(pcr));
    d.insert("antigeno_SN", Some(ant));
    d.insert("sorologia_SN", Some(sor));
    d.insert(
        "classi_covid",
        Some(classi_covid(r.int("CLASSI_FIN"), pcr, ant, sor)),
    );
    d.insert("region", Some(region(r.text("SG_UF"))));
    d.insert(
        "raca",
        lookup(
            r.int("CS_RACA"),
            &[
                (1, "branca"),
                (2, "preta"),
                (3, "amarela"),
                (4, "parda"),
                (5, "indigena"),
            ],
        ),
    );
    d.insert(
        "escol",
        lookup(
            r.int("CS_ESCOL_N"),
            &[
                (0, "sem escol"),
                (1, "fund1"),
                (2, "fund2"),
                (3, "medio"),
                (4, "superior"),
            ],
        ),
    );
    d.insert(
        "faixa_et",
        r.int("NU_IDADE_N").map(|a| {
            if a <= 19 {
                "<20"
            } else if a <= 34 {
                "20-34"
            } else {
                ">=35"
            }
        }),
    );
    for (name, col) in YES_NO {
        d.insert(name, lookup(r.int(col), &[(1, "sim"), (2, "não")]));
    }
    d.insert(
        "antiviral",
        lookup(r.int("ANTIVIRAL"), &[(1, "Oseltamivir"), (2, "Zanamivir")]),
    );
    d.insert(
        "zona",
        lookup(
            r.int("CS_ZONA"),
            &[(1, "urbana"), (2, "rural"), (3, "periurbana")],
        ),
    );
    d.insert(
        "suport_ven",
        lookup(
            r.int("SUPORT_VEN"),
            &[(1, "invasivo"), (2, "não invasivo"), (3, "não")],
        ),
    );
    d.insert(
        "evolucao",
        lookup(
            r.int("EVOLUCAO"),
            &[(1, "Cura"), (2, "Obito"), (3, "Obito")],
        ),
    );
    let muni = match (r.int("CO_MUN_RES"), r.int("CO_MU_INTE")) {
        (Some(a), Some(b)) => Some(if a == b { "não" } else { "sim" }),
        _ => None,
    };
    d.insert("mudou_muni", muni);
    let mut out: Row = d
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.map(str::to_string)))
        .collect();
    out.insert("ano".into(), Some(ano.to_string()));
    out
}

/// Undocumented codes per field, mirroring the SIVEP dictionary.
fn documented(field: &str, code: i64) -> bool {
    let ok: &[i64] = match field {
        "CS_GESTANT" => &[1, 2, 3, 4, 5, 6, 9],
        "PCR_SARS2" | "AN_SARS2" => &[1],
        "CLASSI_FIN" => &[1, 2, 3, 4, 5],
        "RES_IGG" | "RES_IGM" | "RES_IGA" => &[1, 2, 3, 4, 5, 9],
        "CS_RACA" => &[1, 2, 3, 4, 5, 9],
        "CS_ESCOL_N" => &[0, 1, 2, 3, 4, 5, 9],
        "ANTIVIRAL" => &[1, 2, 3, 9],
        "CS_ZONA" => &[1, 2, 3, 9],
        "SUPORT_VEN" => &[1, 2, 3, 9],
        "EVOLUCAO" => &[1, 2, 3, 9],
        _ => &[1, 2, 9],
    };
    ok.contains(&code)
}

/// A category for tables: integer codes sort numerically, text by `rank`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Num(i64),
    Txt(usize, String),
}

fn text_rank(var: &str, label: &str) -> usize {
    let fixed: &[&str] = match var {
        "faixa_et" => &["<20", "20-34", ">=35"],
        "suport_ven" => &["invasivo", "não invasivo", "não"],
        "region" => &["unknown"],
        _ => &[],
    };
    fixed
        .iter()
        .position(|l| *l == label)
        .unwrap_or(fixed.len())
}

fn key(var: &str, v: &Option<String>) -> Option<Key> {
    let v = v.as_ref()?;
    Some(match v.parse::<i64>() {
        Ok(n) if !["CS_SEXO", "SG_UF"].contains(&var) && !derived_names().contains(&var) => {
            Key::Num(n)
        }
        _ => Key::Txt(text_rank(var, v), v.clone()),
    })
}

fn show(k: &Key) -> String {
    match k {
        Key::Num(n) => n.to_string(),
        Key::Txt(_, s) => s.clone(),
    }
}

pub fn percent(n: u64, total: u64) -> String {
    if total == 0 {
        return "0.0".into();
    }
    let num = n as u128 * 1000;
    let mut q = num / total as u128;
    if 2 * (num % total as u128) >= total as u128 {
        q += 1;
    }
    format!("{}.{}", q / 10, q % 10)
}

fn dsv(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b';')
        .from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn freq(var: &str, values: &[Option<String>]) -> String {
    let mut counts: BTreeMap<Key, u64> = BTreeMap::new();
    let mut na = 0u64;
    for v in values {
        match key(var, v) {
            Some(k) => *counts.entry(k).or_default() += 1,
            None => na += 1,
        }
    }
    let total = values.len() as u64;
    let mut rows = vec![vec![var.to_string(), "n".into(), "percent".into()]];
    for (k, n) in &counts {
        rows.push(vec![show(k), n.to_string(), percent(*n, total)]);
    }
    if na > 0 {
        rows.push(vec!["NA".into(), na.to_string(), percent(na, total)]);
    }
    rows.push(vec!["Total".into(), total.to_string(), "100.0".into()]);
    dsv(rows)
}

fn cross(rv: &str, cv: &str, pairs: &[(Option<String>, Option<String>)]) -> String {
    let rk: Vec<Option<Key>> = pairs.iter().map(|(r, _)| key(rv, r)).collect();
    let ck: Vec<Option<Key>> = pairs.iter().map(|(_, c)| key(cv, c)).collect();
    // Some(_) sorts after None, so flip to put the missing category last.
    let axis = |ks: &[Option<Key>]| -> Vec<Option<Key>> {
        let set: BTreeSet<Option<Key>> = ks.iter().cloned().collect();
        let mut v: Vec<Option<Key>> = set.iter().filter(|k| k.is_some()).cloned().collect();
        if set.contains(&None) {
            v.push(None);
        }
        v
    };
    let rows_axis = axis(&rk);
    let cols_axis = axis(&ck);
    let label = |k: &Option<Key>| k.as_ref().map_or("<NA>".to_string(), show);
    let mut header = vec![rv.to_string()];
    header.extend(cols_axis.iter().map(label));
    header.push("Total".into());
    let mut out = vec![header];
    let mut col_tot = vec![0u64; cols_axis.len()];
    for r in &rows_axis {
        let mut line = vec![label(r)];
        let mut t = 0;
        for (j, c) in cols_axis.iter().enumerate() {
            let n = rk
                .iter()
                .zip(&ck)
                .filter(|(a, b)| *a == r && *b == c)
                .count() as u64;
            line.push(n.to_string());
            t += n;
            col_tot[j] += n;
        }
        line.push(t.to_string());
        out.push(line);
    }
    let mut last = vec!["Total".to_string()];
    last.extend(col_tot.iter().map(u64::to_string));
    last.push(pairs.len().to_string());
    out.push(last);
    dsv(out)
}

fn num(v: Option<i64>) -> Option<String> {
    v.map(|x| x.to_string())
}

/// Runs the whole listing over the inputs, in order.
pub fn run(inputs: &[(u16, &Path)], current_week: i64) -> Outcome {
    let mut o = Outcome::default();
    let mut all = Vec::new();
    for (file, (_, path)) in inputs.iter().enumerate() {
        let (recs, bad, n) = read(path, file as u32);
        o.rows += n;
        o.malformed.extend(bad);
        all.extend(recs);
    }

    // dados1 with ano; onset and week both needed for a stamp
    let s0: Vec<(&Rec, i64)> = all
        .iter()
        .filter(|r| r.onset.is_some() && r.int("SEM_PRI").is_some())
        .map(|r| (r, r.onset.unwrap().year() as i64))
        .collect();
    // dados2: window
    let s1: Vec<(&Rec, i64)> = s0
        .iter()
        .copied()
        .filter(|(r, ano)| (*ano == 2020 && r.int("SEM_PRI").unwrap() >= 8) || *ano == 2021)
        .collect();
    // week-53 correction and current-week cut
    let s2: Vec<(&Rec, i64)> = s1
        .iter()
        .map(|&(r, ano)| {
            let w = r.int("SEM_PRI").unwrap();
            (r, if ano == 2021 && w == 53 { 2020 } else { ano })
        })
        .filter(|(r, ano)| {
            *ano == 2020 || (*ano == 2021 && r.int("SEM_PRI").unwrap() <= current_week)
        })
        .collect();
    let s3: Vec<(&Rec, i64)> = s2
        .iter()
        .copied()
        .filter(|(r, _)| r.text("CS_SEXO") == Some("F"))
        .collect();
    let s4: Vec<(&Rec, i64)> = s3
        .iter()
        .copied()
        .filter(|(r, _)| r.int("NU_IDADE_N").is_some_and(|a| a > 9 && a <= 55))
        .collect();
    let s5: Vec<(&Rec, i64, &'static str)> = s4
        .iter()
        .map(|&(r, ano)| (r, ano, gesta_puerp(r.int("CS_GESTANT"), r.int("PUERPERA"))))
        .filter(|x| x.2 != "não")
        .collect();

    let sizes = [
        all.len(),
        s0.len(),
        s1.len(),
        s2.len(),
        s3.len(),
        s4.len(),
        s5.len(),
    ];
    let keys = [
        "onset_available",
        "epi_window",
        "current_week",
        "female",
        "age_10_55",
        "obstetric",
    ];
    o.funnel = keys
        .iter()
        .enumerate()
        .map(|(i, k)| Stage {
            key: k,
            records_in: sizes[i] as u64,
            records_out: sizes[i + 1] as u64,
        })
        .collect();

    for (r, _) in &s2 {
        let male = r.text("CS_SEXO") == Some("M");
        if male && matches!(r.int("CS_GESTANT"), Some(1..=4)) {
            o.male_pregnant += 1;
        }
        if male && r.int("PUERPERA") == Some(1) {
            o.male_puerperal += 1;
        }
        for f in CODED {
            if let Some(c) = r.int(f) {
                if !documented(f, c) {
                    *o.undocumented.entry((f.to_string(), c)).or_default() += 1;
                }
            }
        }
    }

    for (r, ano, status) in &s5 {
        o.cohort.insert((r.file, r.row), derive(r, status, *ano));
    }

    let t = &mut o.tables;
    let wk = |r: &Rec| num(r.int("SEM_PRI"));
    t.insert(
        "week_by_year_raw".into(),
        cross(
            "SEM_PRI",
            "ano",
            &s1.iter()
                .map(|(r, a)| (wk(r), Some(a.to_string())))
                .collect::<Vec<_>>(),
        ),
    );
    t.insert(
        "week_by_year".into(),
        cross(
            "SEM_PRI",
            "ano",
            &s2.iter()
                .map(|(r, a)| (wk(r), Some(a.to_string())))
                .collect::<Vec<_>>(),
        ),
    );
    for (name, col) in [("gestant", "CS_GESTANT"), ("puerpera", "PUERPERA")] {
        let vals: Vec<Option<String>> = s2.iter().map(|(r, _)| num(r.int(col))).collect();
        t.insert(name.into(), freq(col, &vals));
        let pairs: Vec<_> = s2
            .iter()
            .map(|(r, _)| (num(r.int(col)), r.text("CS_SEXO").map(str::to_string)))
            .collect();
        t.insert(format!("{name}_by_sex"), cross(col, "CS_SEXO", &pairs));
    }
    let fin: Vec<Option<String>> = s5
        .iter()
        .map(|(r, _, _)| num(r.int("CLASSI_FIN")))
        .collect();
    t.insert("classi_fin".into(), freq("CLASSI_FIN", &fin));
    for var in derived_names() {
        let vals: Vec<Option<String>> = o.cohort.values().map(|d| d[var].clone()).collect();
        o.tables.insert(var.to_string(), freq(var, &vals));
    }
    o
}
