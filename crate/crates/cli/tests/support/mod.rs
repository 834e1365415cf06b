#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_oobr")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Runs the CLI with a fixed manifest timestamp.
pub fn oobr(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .expect("run oobr")
}

pub fn read_dsv(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    rdr.byte_records()
        .map(|r| {
            r.unwrap()
                .iter()
                .map(|f| String::from_utf8_lossy(f).into_owned())
                .collect()
        })
        .collect()
}

/// Derived columns of cohort.csv keyed by (source_file, source_row).
pub fn cohort_derived(path: &Path) -> BTreeMap<(u32, u64), oracle::Row> {
    let rows = read_dsv(path);
    let header = &rows[0];
    let mut wanted = vec!["ano"];
    wanted.extend(oracle::derived_names());
    let idx: Vec<(String, usize)> = wanted
        .iter()
        .map(|w| {
            (
                w.to_string(),
                header
                    .iter()
                    .position(|h| h == w)
                    .unwrap_or_else(|| panic!("no column {w}")),
            )
        })
        .collect();
    rows[1..]
        .iter()
        .map(|r| {
            let key = (r[0].parse().unwrap(), r[1].parse().unwrap());
            let vals = idx
                .iter()
                .map(|(n, i)| (n.clone(), Some(r[*i].clone()).filter(|v| !v.is_empty())))
                .collect();
            (key, vals)
        })
        .collect()
}

/// Runs `oobr build` with csv output into `out`.
pub fn build(inputs: &[(u16, &Path)], week: u8, out: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<String> = vec!["build".into()];
    for (y, p) in inputs {
        args.push("--in".into());
        args.push(format!("{y}={}", p.display()));
    }
    args.extend([
        "--current-week".into(),
        week.to_string(),
        "--out".into(),
        out.display().to_string(),
    ]);
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    oobr(&refs)
}

/// Compares a finished build in `out` against the reference listing.
pub fn check_against_oracle(inputs: &[(u16, &Path)], week: u8, out: &Path) -> Result<(), String> {
    let want = oracle::run(inputs, week.into());

    let funnel = read_dsv(&out.join("funnel.csv"));
    let got: Vec<(String, u64, u64)> = funnel[1..]
        .iter()
        .map(|r| (r[0].clone(), r[2].parse().unwrap(), r[3].parse().unwrap()))
        .collect();
    let exp: Vec<(String, u64, u64)> = want
        .funnel
        .iter()
        .map(|s| (s.key.to_string(), s.records_in, s.records_out))
        .collect();
    if got != exp {
        return Err(format!("funnel {got:?} != {exp:?}"));
    }

    let cohort = cohort_derived(&out.join("cohort.csv"));
    if !cohort.keys().eq(want.cohort.keys()) {
        return Err(format!(
            "cohort membership: {} vs {} records",
            cohort.len(),
            want.cohort.len()
        ));
    }
    for (k, row) in &want.cohort {
        if &cohort[k] != row {
            return Err(format!("record {k:?}: {:?} != {row:?}", cohort[k]));
        }
    }

    for (name, text) in &want.tables {
        let got = std::fs::read_to_string(out.join("tables").join(format!("{name}.csv")))
            .map_err(|e| format!("{name}: {e}"))?;
        if &got != text {
            return Err(format!("table {name}:\n{got}\n!=\n{text}"));
        }
    }
    Ok(())
}
