use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use oobr_core::pipeline::{run_build, Format, RunConfig};
use oobr_core::synth::header;
use oobr_core::{CurrentWeek, Error, SnapshotSource, TextEncoding};

/// One row from column overrides; everything else empty.
fn row(fields: &[(&str, &str)]) -> Vec<String> {
    let base: BTreeMap<&str, &str> = [
        ("CS_SEXO", "F"),
        ("NU_IDADE_N", "30"),
        ("SG_UF", "AL"),
        ("ID_MUNICIP", "MACEIÓ"),
        ("CO_MUN_RES", "270430"),
        ("CO_MU_INTE", "270430"),
        ("CLASSI_FIN", "5"),
        ("PCR_SARS2", "1"),
    ]
    .into_iter()
    .chain(fields.iter().copied())
    .collect();
    header()
        .iter()
        .map(|h| base.get(h).copied().unwrap_or("").to_string())
        .collect()
}

fn onset(date: &str, week: &str) -> [(&'static str, String); 2] {
    [
        ("DT_SIN_PRI", date.to_string()),
        ("SEM_PRI", week.to_string()),
    ]
}

fn write(
    path: &Path,
    rows: &[Vec<String>],
    delimiter: char,
    encoding: &'static encoding_rs::Encoding,
) {
    let d = delimiter.to_string();
    let mut text = header().join(&d);
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(&d));
        text.push('\n');
    }
    let (bytes, _, lossy) = encoding.encode(&text);
    assert!(!lossy);
    fs::write(path, bytes).unwrap();
}

fn with(base: [(&'static str, String); 2], extra: &[(&'static str, &'static str)]) -> Vec<String> {
    let mut f: Vec<(&str, &str)> = base.iter().map(|(k, v)| (*k, v.as_str())).collect();
    f.extend_from_slice(extra);
    row(&f)
}

/// Nine well-formed records, one for each way in or out of the cohort, and
/// one malformed row.
fn snapshot(dir: &Path, delimiter: char, encoding: &'static encoding_rs::Encoding) -> [PathBuf; 2] {
    let a = vec![
        with(onset("10/03/2020", "11"), &[("CS_GESTANT", "1")]),
        with(
            onset("10/03/2020", "11"),
            &[("CS_GESTANT", "5"), ("PUERPERA", "1")],
        ),
        with(onset("20/01/2020", "3"), &[("CS_GESTANT", "1")]),
        with(onset("", "11"), &[("CS_GESTANT", "1")]),
    ];
    let b = vec![
        with(
            onset("01/01/2021", "53"),
            &[("CS_GESTANT", "3"), ("SG_UF", "")],
        ),
        with(onset("01/05/2021", "17"), &[("CS_GESTANT", "1")]),
        with(
            onset("10/03/2021", "10"),
            &[("CS_GESTANT", "2"), ("CS_SEXO", "M")],
        ),
        with(
            onset("10/03/2021", "10"),
            &[("CS_GESTANT", "2"), ("NU_IDADE_N", "56")],
        ),
        with(
            onset("10/03/2021", "10"),
            &[("CS_GESTANT", "5"), ("PUERPERA", "2")],
        ),
        with(onset("10/03/2021", "99"), &[("CS_GESTANT", "1")]),
    ];
    let paths = [dir.join("a.csv"), dir.join("b.csv")];
    write(&paths[0], &a, delimiter, encoding);
    write(&paths[1], &b, delimiter, encoding);
    paths
}

fn config(paths: &[PathBuf; 2], out: &Path, delimiter: u8, encoding: TextEncoding) -> RunConfig {
    let sources = [(2020, &paths[0]), (2021, &paths[1])]
        .into_iter()
        .map(|(y, p)| {
            SnapshotSource::new(p, y)
                .unwrap()
                .with_delimiter(delimiter)
                .with_encoding(encoding)
        })
        .collect();
    let mut cfg = RunConfig::new(sources, CurrentWeek::new(16).unwrap(), out);
    cfg.timestamp = Some(0);
    cfg
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(false)
        .from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn hand_built_snapshot_funnel_and_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let paths = snapshot(dir.path(), ';', encoding_rs::ISO_8859_2);
    let out = dir.path().join("out");
    let outcome = run_build(&config(&paths, &out, b';', TextEncoding::Iso8859_2)).unwrap();

    let stages: Vec<(u64, u64)> = outcome
        .pass
        .funnel
        .stages
        .iter()
        .map(|s| (s.records_in, s.records_out))
        .collect();
    assert_eq!(stages, [(9, 8), (8, 7), (7, 6), (6, 5), (5, 4), (4, 3)]);
    assert_eq!(outcome.manifest.inputs[1].malformed, 1);

    let cohort = csv_rows(&out.join("cohort.csv"));
    let col = |name: &str| cohort[0].iter().position(|h| h == name).unwrap();
    let got: Vec<(String, String, String, String)> = cohort[1..]
        .iter()
        .map(|r| {
            (
                r[0].clone(),
                r[col("ano")].clone(),
                r[col("classi_gesta_puerp")].clone(),
                r[col("region")].clone(),
            )
        })
        .collect();
    let t = |a: &str, b: &str, c: &str, d: &str| {
        (a.to_string(), b.to_string(), c.to_string(), d.to_string())
    };
    assert_eq!(
        got,
        [
            t("0", "2020", "1tri", "northeast"),
            t("0", "2020", "puerp", "northeast"),
            t("1", "2020", "3tri", "unknown"),
        ]
    );
    assert_eq!(cohort[1][col("ID_MUNICIP")], "MACEIÓ");

    let gp = fs::read_to_string(out.join("tables/classi_gesta_puerp.csv")).unwrap();
    assert_eq!(
        gp,
        "classi_gesta_puerp;n;percent\n1tri;1;33.3\n3tri;1;33.3\npuerp;1;33.3\nTotal;3;100.0\n"
    );
}

#[test]
fn encoding_and_delimiter_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let latin = dir.path().join("latin");
    let utf = dir.path().join("utf");
    fs::create_dir_all(&latin).unwrap();
    fs::create_dir_all(&utf).unwrap();
    let pl = snapshot(&latin, ';', encoding_rs::ISO_8859_2);
    let pu = snapshot(&utf, '\t', encoding_rs::UTF_8);
    let mut a = config(&pl, &dir.path().join("o1"), b';', TextEncoding::Iso8859_2);
    let mut b = config(&pu, &dir.path().join("o2"), b'\t', TextEncoding::Utf8);
    a.formats = vec![Format::Csv];
    b.formats = vec![Format::Csv];
    run_build(&a).unwrap();
    run_build(&b).unwrap();
    for f in [
        "cohort.csv",
        "funnel.csv",
        "tables/region.csv",
        "tables/week_by_year.csv",
    ] {
        assert_eq!(
            fs::read(dir.path().join("o1").join(f)).unwrap(),
            fs::read(dir.path().join("o2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn chunking_and_threads_do_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let paths = snapshot(dir.path(), ';', encoding_rs::ISO_8859_2);
    let mut manifests = Vec::new();
    for (i, (chunk, jobs)) in [(1, 1), (2, 3), (5, 2), (1 << 16, 4)]
        .into_iter()
        .enumerate()
    {
        let mut cfg = config(
            &paths,
            &dir.path().join(format!("o{i}")),
            b';',
            TextEncoding::Iso8859_2,
        );
        cfg.chunk_rows = chunk;
        cfg.jobs = jobs;
        manifests.push(serde_json::to_string(&run_build(&cfg).unwrap().manifest).unwrap());
    }
    assert!(manifests.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn missing_required_column_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    fs::write(&path, "DT_SIN_PRI;SEM_PRI;CS_SEXO\n01/03/2020;10;F\n").unwrap();
    let cfg = RunConfig::new(
        vec![SnapshotSource::new(&path, 2020).unwrap()],
        CurrentWeek::new(16).unwrap(),
        dir.path().join("out"),
    );
    match run_build(&cfg) {
        Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "NU_IDADE_N"),
        other => panic!(
            "expected a missing column, got {:?}",
            other.map(|o| o.manifest.cohort_records)
        ),
    }
}

#[test]
fn strict_build_flags_inconsistencies() {
    let dir = tempfile::tempdir().unwrap();
    let paths = snapshot(dir.path(), ';', encoding_rs::ISO_8859_2);
    let mut cfg = config(
        &paths,
        &dir.path().join("out"),
        b';',
        TextEncoding::Iso8859_2,
    );
    cfg.strict = true;
    let outcome = run_build(&cfg).unwrap();
    // the male row with CS_GESTANT=2
    assert_eq!(outcome.manifest.inconsistencies, 1);
    assert!(outcome.strict_failure);
}
