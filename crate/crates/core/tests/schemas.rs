//! The shipped schema files parse, have the documented feature dimensions,
//! and load small files in the matching raw format.

use std::path::{Path, PathBuf};

use slide_core::data::{load_csv, ColumnSpec, SchemaConfig};

fn schema(name: &str) -> (PathBuf, SchemaConfig) {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(name);
    let s = SchemaConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    (p, s)
}

/// A raw table with `rows` records; row `i` uses level `i % len` of each
/// categorical column and alternates the label. `sens` gives the raw
/// sensitive value per row when the sensitive column is not a feature.
fn raw_table(s: &SchemaConfig, rows: usize, sens: &dyn Fn(usize) -> String) -> String {
    let delim = s.delimiter.to_string();
    let mut header: Vec<String> = s
        .columns
        .iter()
        .map(|c| match c {
            ColumnSpec::Continuous { name } => name.clone(),
            ColumnSpec::Categorical(c) => c.name.clone(),
        })
        .collect();
    header.push(s.label.column.clone());
    let sens_is_feature = header.contains(&s.sensitive.column);
    if !sens_is_feature {
        header.push(s.sensitive.column.clone());
    }
    let mut out = header.join(&delim) + "\n";
    for i in 0..rows {
        let mut rec: Vec<String> = s
            .columns
            .iter()
            .map(|c| match c {
                ColumnSpec::Continuous { name } if *name == s.sensitive.column => sens(i),
                ColumnSpec::Continuous { .. } => format!("{}", i as f64 * 0.5),
                ColumnSpec::Categorical(c) => c.levels[i % c.levels.len()].clone(),
            })
            .collect();
        rec.push(if i % 2 == 0 {
            s.label.positive[0].clone()
        } else {
            s.label.negative[0].clone()
        });
        if !sens_is_feature {
            rec.push(sens(i));
        }
        out += &(rec.join(&delim) + "\n");
    }
    out
}

fn load(s: &SchemaConfig, text: &str) -> slide_core::data::Dataset {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("raw.csv");
    std::fs::write(&f, text).unwrap();
    load_csv(&f, s).unwrap()
}

#[test]
fn adult_schema() {
    let (_, s) = schema("adult.toml");
    assert_eq!(s.dim(), 41);
    let ds = load(&s, &raw_table(&s, 12, &|_| String::new()));
    assert_eq!(ds.d(), 41);
    assert_eq!(ds.n(), 12);
    // `sex` cycles Female, Male; Male is group 1.
    assert_eq!(ds.z, (0..12).map(|i| (i % 2) as u8).collect::<Vec<_>>());
    assert_eq!(ds.y[0], 1);
    assert_eq!(ds.y[1], -1);
}

#[test]
fn adult_missing_rows_are_dropped() {
    let (_, s) = schema("adult.toml");
    let text = raw_table(&s, 6, &|_| String::new());
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<&str> = lines[3].split(',').collect();
    fields[5] = "?";
    lines[3] = fields.join(",");
    let ds = load(&s, &(lines.join("\n") + "\n"));
    assert_eq!(ds.n(), 5);
}

#[test]
fn bank_schema_median_split() {
    let (_, s) = schema("bank.toml");
    assert_eq!(s.dim(), 47);
    assert_eq!(s.delimiter, ';');
    let ages = [25, 60, 33, 47, 52, 29, 41, 38];
    let ds = load(&s, &raw_table(&s, 8, &|i| ages[i].to_string()));
    assert_eq!(ds.d(), 47);
    let mut sorted = ages;
    sorted.sort();
    let median = 0.5 * f64::from(sorted[3] + sorted[4]);
    let want: Vec<u8> = ages
        .iter()
        .map(|&a| u8::from(f64::from(a) >= median))
        .collect();
    assert_eq!(ds.z, want);
}

#[test]
fn law_schema() {
    let (_, s) = schema("law.toml");
    assert_eq!(s.dim(), 11);
    let races = ["White", "Black", "7", "Hisp"];
    let ds = load(&s, &raw_table(&s, 8, &|i| races[i % 4].to_string()));
    assert_eq!(ds.d(), 11);
    assert_eq!(ds.z, vec![1, 0, 1, 0, 1, 0, 1, 0]);
}
