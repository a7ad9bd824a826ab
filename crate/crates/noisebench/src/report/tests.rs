use super::*;

use proptest::prelude::*;

fn fixture_row() -> SweepRow {
    SweepRow {
        model: "mlp8".to_string(),
        dataset: "synthetic2c4d".to_string(),
        learning_rate: 0.0005,
        optimizer: "sgd".to_string(),
        seed: 11,
        baseline_acc: 0.875,
        points: vec![
            RowPoint { eta: 0.0, trials: 1, mean_acc: 0.875, std_acc: 0.0 },
            RowPoint { eta: 0.1, trials: 2, mean_acc: 0.7, std_acc: 0.05 },
            RowPoint { eta: 0.4, trials: 2, mean_acc: 0.35, std_acc: 0.1 },
        ],
        normalized: vec![1.0, 0.8, 0.4],
        avg_normalized: Some(0.6),
    }
}

fn fixture() -> SweepReport {
    SweepReport { rows: vec![fixture_row()] }
}

fn two_row_fixture() -> SweepReport {
    let mut second = fixture_row();
    second.model = "resnet8".to_string();
    second.learning_rate = 0.00125;
    second.seed = 12;
    second.points = vec![RowPoint { eta: 0.0, trials: 1, mean_acc: 0.9122, std_acc: 0.0 }];
    second.normalized = vec![1.0];
    second.avg_normalized = None;
    SweepReport { rows: vec![fixture_row(), second] }
}

#[test]
fn six_significant_digit_formatting() {
    assert_eq!(format_sig(0.0), "0");
    assert_eq!(format_sig(-0.0), "0");
    assert_eq!(format_sig(1.0), "1");
    assert_eq!(format_sig(0.875), "0.875");
    assert_eq!(format_sig(0.0005), "0.0005");
    assert_eq!(format_sig(0.000625), "0.000625");
    assert_eq!(format_sig(59.8123), "59.8123");
    assert_eq!(format_sig(0.8533333333333334), "0.853333");
    assert_eq!(format_sig(123.456789), "123.457");
    assert_eq!(format_sig(-0.05), "-0.05");
    assert_eq!(format_sig(0.1 * 100.0), "10");
    assert_eq!(format_sig(0.4 * 100.0), "40");
    assert_eq!(format_sig(0.99999999), "1");
    assert_eq!(format_sig(1e-7), "0.0000001");
}

proptest! {
    #[test]
    fn formatting_keeps_six_digits_of_precision(
        negative in any::<bool>(),
        exponent in -8i32..6,
        mantissa in 1.0f64..10.0,
    ) {
        let x = if negative { -mantissa } else { mantissa } * 10f64.powi(exponent);
        let parsed: f64 = format_sig(x).parse().unwrap();
        let rel = ((parsed - x) / x).abs();
        prop_assert!(rel <= 5.01e-6, "{x} -> {} (rel {rel})", format_sig(x));
    }
}

#[test]
fn golden_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (csv_path, _) = emit_report(&fixture(), dir.path()).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let expected = "\
model,dataset,learning_rate,optimizer,seed,eta_percent,trials,baseline_acc,mean_acc,std_acc,normalized_acc
mlp8,synthetic2c4d,0.0005,sgd,11,0,1,0.875,0.875,0,1
mlp8,synthetic2c4d,0.0005,sgd,11,10,2,0.875,0.7,0.05,0.8
mlp8,synthetic2c4d,0.0005,sgd,11,40,2,0.875,0.35,0.1,0.4
";
    assert_eq!(text, expected);
}

#[test]
fn golden_summary_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (_, json_path) = emit_report(&fixture(), dir.path()).unwrap();
    let text = std::fs::read_to_string(&json_path).unwrap();
    let expected = r#"[
  {
    "avg_normalized_acc": 0.6,
    "baseline_acc": 0.875,
    "dataset": "synthetic2c4d",
    "learning_rate": 0.0005,
    "model": "mlp8",
    "optimizer": "sgd",
    "points": [
      {
        "eta_percent": 0.0,
        "mean_acc": 0.875,
        "normalized_acc": 1.0,
        "std_acc": 0.0,
        "trials": 1
      },
      {
        "eta_percent": 10.0,
        "mean_acc": 0.7,
        "normalized_acc": 0.8,
        "std_acc": 0.05,
        "trials": 2
      },
      {
        "eta_percent": 40.0,
        "mean_acc": 0.35,
        "normalized_acc": 0.4,
        "std_acc": 0.1,
        "trials": 2
      }
    ],
    "seed": 11
  }
]
"#;
    assert_eq!(text, expected);
}

#[test]
fn csv_round_trip_preserves_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = two_row_fixture();
    let (csv_path, _) = emit_report(&report, dir.path()).unwrap();
    let records = parse_results_csv(&csv_path).unwrap();

    let expected_lines: usize = report.rows.iter().map(|r| r.points.len()).sum();
    assert_eq!(records.len(), expected_lines);

    let mut cursor = records.iter();
    for row in &report.rows {
        for (point, normalized) in row.points.iter().zip(&row.normalized) {
            let rec = cursor.next().unwrap();
            assert_eq!(rec.model, row.model);
            assert_eq!(rec.dataset, row.dataset);
            assert_eq!(rec.optimizer, row.optimizer);
            assert_eq!(rec.seed, row.seed);
            assert_eq!(rec.trials, point.trials);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * b.abs().max(1.0);
            assert!(close(rec.learning_rate, row.learning_rate));
            assert!(close(rec.eta_percent, point.eta * 100.0));
            assert!(close(rec.baseline_acc, row.baseline_acc));
            assert!(close(rec.mean_acc, point.mean_acc));
            assert!(close(rec.std_acc, point.std_acc));
            assert!(close(rec.normalized_acc, *normalized));
        }
    }
}

#[test]
fn summary_rebuild_is_byte_identical() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let (csv_a, json_a) = emit_report(&two_row_fixture(), first.path()).unwrap();

    let rebuilt = load_summary(&json_a).unwrap();
    let (csv_b, json_b) = emit_report(&rebuilt, second.path()).unwrap();

    assert_eq!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_b).unwrap());
    assert_eq!(std::fs::read(&json_a).unwrap(), std::fs::read(&json_b).unwrap());
}

#[test]
fn degenerate_reports_are_rejected() {
    let dir = tempfile::tempdir().unwrap();

    let empty = SweepReport::default();
    assert!(matches!(emit_report(&empty, dir.path()), Err(Error::Report(_))));

    let mut skewed = fixture();
    skewed.rows[0].normalized.pop();
    assert!(matches!(emit_report(&skewed, dir.path()), Err(Error::Report(_))));

    let mut poisoned = fixture();
    poisoned.rows[0].baseline_acc = f64::NAN;
    assert!(matches!(emit_report(&poisoned, dir.path()), Err(Error::Report(_))));

    let mut comma = fixture();
    comma.rows[0].dataset = "a,b".to_string();
    assert!(matches!(emit_report(&comma, dir.path()), Err(Error::Report(_))));
}

#[test]
fn unwritable_destination_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("occupied");
    std::fs::write(&blocker, b"file, not a directory").unwrap();
    assert!(matches!(emit_report(&fixture(), &blocker), Err(Error::Io { .. })));
}

#[test]
fn malformed_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");

    std::fs::write(&path, "wrong,header\n").unwrap();
    assert!(matches!(parse_results_csv(&path), Err(Error::Report(_))));

    let mut valid = render_csv(&fixture());
    valid.push_str("mlp8,synthetic2c4d,0.0005,sgd,11,10\n");
    std::fs::write(&path, valid).unwrap();
    let err = parse_results_csv(&path).unwrap_err();
    assert!(err.to_string().contains("expected 11 fields"), "{err}");

    std::fs::write(&path, format!("{CSV_HEADER}\nmlp8,d,x,sgd,11,0,1,0.9,0.9,0,1\n")).unwrap();
    let err = parse_results_csv(&path).unwrap_err();
    assert!(err.to_string().contains("learning_rate"), "{err}");
}
