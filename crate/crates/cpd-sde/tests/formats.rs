use std::path::Path;

use cpd_sde::config::RunConfig;
use cpd_sde::io::{load_csv, read_csv, save_csv, to_json_bytes, write_atomic};
use cpd_sde::report::{aggregate_csv, evaluate, per_dataset_csv};
use cpd_sde::CliError;
use cpd_sde_core::metrics::Metric;
use cpd_sde_core::{ChangePointLabels, ScoreSeries, TimeSeries};
use serde_json::Value;

fn parse(text: &str) -> Result<TimeSeries, CliError> {
    read_csv(text.as_bytes(), Path::new("inline.csv"))
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let values = vec![0.1, -2.5e-17, 1.0 / 3.0, 7.0, f64::MIN_POSITIVE, -1e300];
    let series = TimeSeries::new(values, vec!["a".into(), "b".into()]).unwrap();
    let path = dir.path().join("s.csv");
    save_csv(&path, &series).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!(back.values(), series.values());
    assert_eq!(back.channel_names(), series.channel_names());
}

#[test]
fn time_column_sets_spacing_and_is_dropped() {
    let s = parse("time,x\n0,1\n0.5,2\n1.0,3\n").unwrap();
    assert_eq!(s.dim(), 1);
    assert_eq!(s.column(0), vec![1.0, 2.0, 3.0]);
    assert!((s.dt() - 0.5).abs() < 1e-15);

    let err = parse("t,x\n0,1\n2,2\n1,3\n").unwrap_err();
    assert!(err.to_string().contains("line 4"), "{err}");
}

#[test]
fn non_finite_cells_name_line_and_column() {
    let err = parse("x,y\n1,2\n3,NaN\n").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3") && msg.contains("'y'"), "{msg}");
    assert_eq!(err.exit_code(), 2);
    assert!(parse("x\n1\ninf\n").is_err());
    assert!(parse("x\n1\nabc\n").is_err());
}

#[test]
fn labels_json_is_validated() {
    let ok: ChangePointLabels = serde_json::from_str(r#"{"series_length": 10, "positions": [3, 7]}"#).unwrap();
    assert_eq!(ok.positions(), &[3, 7]);
    for bad in [
        r#"{"series_length": 10, "positions": [7, 3]}"#,
        r#"{"series_length": 10, "positions": [0]}"#,
        r#"{"series_length": 10, "positions": [10]}"#,
    ] {
        assert!(serde_json::from_str::<ChangePointLabels>(bad).is_err(), "{bad}");
    }
}

#[test]
fn atomic_write_leaves_no_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/out.json");
    write_atomic(&path, b"{}\n").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"{}\n");
    let names: Vec<_> = std::fs::read_dir(path.parent().unwrap())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 1);
}

fn collect_keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            let path = format!("{prefix}/{k}");
            out.push(path.clone());
            collect_keys(child, &path, out);
        }
    }
}

fn schema_keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Some(Value::Object(props)) = v.get("properties") {
        for (k, child) in props {
            let path = format!("{prefix}/{k}");
            out.push(path.clone());
            schema_keys(child, &path, out);
        }
    }
}

#[test]
fn schema_matches_default_config() {
    let text = include_str!("../schema/run-config.schema.json");
    let schema: Value = serde_json::from_str(text).unwrap();
    let defaults = serde_json::to_value(RunConfig::default()).unwrap();

    let mut from_schema = Vec::new();
    schema_keys(&schema, "", &mut from_schema);
    let mut from_config = Vec::new();
    collect_keys(&defaults, "", &mut from_config);
    from_schema.sort();
    from_config.sort();
    assert_eq!(from_schema, from_config);

    // Documented defaults agree with the code.
    fn check(schema: &Value, value: &Value, path: &str) {
        if let Some(Value::Object(props)) = schema.get("properties") {
            for (k, child) in props {
                check(child, &value[k], &format!("{path}/{k}"));
            }
        } else if let Some(d) = schema.get("default") {
            assert_eq!(d, value, "default of {path}");
        }
    }
    check(&schema, &defaults, "");
}

#[test]
fn config_rejects_unknown_and_invalid_fields() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let partial = RunConfig::load(&write("a.json", r#"{"train": {"epochs": 3}}"#)).unwrap();
    assert_eq!(partial.train.epochs, 3);
    assert_eq!(partial.train.lr, RunConfig::default().train.lr);
    for (name, body) in [
        ("b.json", r#"{"trian": {}}"#),
        ("c.json", r#"{"train": {"lr": -1}}"#),
        ("d.json", r#"{"seeds": []}"#),
        ("e.json", r#"{"corpus": {"rows": [14]}}"#),
        ("f.json", r#"{"preprocess": {"n_pos_encodings": 3}}"#),
    ] {
        let err = RunConfig::load(&write(name, body)).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{body}: {err}");
    }
}

fn labels() -> ChangePointLabels {
    ChangePointLabels::new(vec![100, 250], 400).unwrap()
}

#[test]
fn perfect_and_null_detector_rows() {
    let cfg = RunConfig::default();
    let mut perfect = vec![0.0; 400];
    perfect[100] = 1.0;
    perfect[250] = 1.0;
    let row = evaluate("p", Some(0), &ScoreSeries::new(perfect).unwrap(), &labels(), &cfg).unwrap();
    assert_eq!(row.values, [100.0, 100.0, 100.0, 1.0, 1.0, 0.0]);

    let null = ScoreSeries::new(vec![0.0; 400]).unwrap();
    let row = evaluate("n", Some(0), &null, &labels(), &cfg).unwrap();
    // Covering of a single segment against [0,100), [100,250), [250,400).
    let cover = (100.0 * 100.0 / 400.0 + 150.0 * 150.0 / 400.0 + 150.0 * 150.0 / 400.0) / 400.0;
    assert_eq!(&row.values[..4], &[0.0, 0.0, 0.0, 0.0]);
    assert!((row.values[4] - cover).abs() < 1e-12);
    assert!(row.values[5].is_infinite());
}

#[test]
fn single_seed_aggregate_has_zero_spread() {
    let cfg = RunConfig::default();
    let mut s = vec![0.0; 400];
    s[103] = 2.0;
    let row = evaluate("only", Some(4), &ScoreSeries::new(s).unwrap(), &labels(), &cfg).unwrap();
    let agg = String::from_utf8(aggregate_csv(&[row.clone()])).unwrap();
    let std_line = agg.lines().find(|l| l.starts_with("std,")).unwrap();
    assert!(std_line.split(',').skip(1).all(|v| v == "0"), "{agg}");
    let table = String::from_utf8(per_dataset_csv(&[row], Metric::F1)).unwrap();
    assert_eq!(table.lines().nth(1).unwrap(), "only,0.6666666666666666,0");
}

#[test]
fn json_output_ends_with_newline() {
    let bytes = to_json_bytes(&labels());
    assert_eq!(bytes.last(), Some(&b'\n'));
}
