use tierguard::dataset::{self, CsvSchema, Dataset, DatasetError, Label};

fn custom_schema(d: &Dataset) -> CsvSchema {
    CsvSchema {
        features: d.schema.clone(),
        label: "label".into(),
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dataset::generate_synthetic(120, 15, 7, 4).unwrap();
    let p1 = dir.path().join("one.csv");
    dataset::write_csv(&d, &p1, "label").unwrap();
    let back = dataset::load_csv(&p1, &custom_schema(&d)).unwrap();
    assert_eq!(back, d);
    let p2 = dir.path().join("two.csv");
    dataset::write_csv(&back, &p2, "label").unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn wustl_profile_selects_its_columns_in_schema_order() {
    let dir = tempfile::tempdir().unwrap();
    let schema = CsvSchema::wustl_iiot();
    let mut header: Vec<&str> = vec!["StartTime", "SrcAddr", "Proto", "Sport"];
    header.extend(schema.features.iter().rev().map(String::as_str));
    header.extend(["Traffic", "Target"]);
    let values: Vec<String> = (0..40).rev().map(|j| format!("{}.5", j)).collect();
    let mut row: Vec<&str> = vec!["2019-01-01", "10.0.0.1", "tcp", "443"];
    row.extend(values.iter().map(String::as_str));
    row.extend(["normal", "0"]);
    let mut attack_row = row.clone();
    *attack_row.last_mut().unwrap() = "1";
    let p = dir.path().join("wustl.csv");
    dataset::write_rows(&p, &header, &[&row, &attack_row]).unwrap();

    let d = dataset::load_csv(&p, &schema).unwrap();
    assert_eq!(d.width(), 40);
    assert_eq!(d.records[0].features[0], 0.5);
    assert_eq!(d.records[0].features[39], 39.5);
    assert_eq!(d.records[0].label, Label::Normal);
    assert_eq!(d.records[1].label, Label::Attack);
}

#[test]
fn load_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let schema = CsvSchema {
        features: vec!["a".into(), "b".into()],
        label: "y".into(),
    };
    let missing = dir.path().join("nope.csv");
    assert!(matches!(dataset::load_csv(&missing, &schema), Err(DatasetError::NotFound(_))));

    let p = dir.path().join("no_b.csv");
    dataset::write_rows(&p, &["a", "y"], &[&["1", "0"]]).unwrap();
    match dataset::load_csv(&p, &schema) {
        Err(DatasetError::MissingColumn(c)) => assert_eq!(c, "b"),
        other => panic!("{other:?}"),
    }

    let p = dir.path().join("bad_value.csv");
    dataset::write_rows(&p, &["a", "b", "y"], &[&["1", "2", "0"], &["1", "x", "0"]]).unwrap();
    match dataset::load_csv(&p, &schema) {
        Err(DatasetError::Parse { row, column, value }) => {
            assert_eq!((row, column.as_str(), value.as_str()), (2, "b", "x"));
        }
        other => panic!("{other:?}"),
    }

    let p = dir.path().join("bad_label.csv");
    dataset::write_rows(&p, &["a", "b", "y"], &[&["1", "2", "3"]]).unwrap();
    assert!(matches!(dataset::load_csv(&p, &schema), Err(DatasetError::BadLabel { row: 1, .. })));
}

/// Least-squares linear fit to ±1 targets, solved by Gaussian elimination.
fn linear_oracle_accuracy(d: &Dataset) -> f64 {
    let k = d.width() + 1;
    let rows: Vec<Vec<f64>> = d
        .records
        .iter()
        .map(|r| {
            let mut x = r.features.clone();
            x.push(1.0);
            x
        })
        .collect();
    let y: Vec<f64> = d.records.iter().map(|r| if r.label == Label::Attack { 1.0 } else { -1.0 }).collect();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (x, t) in rows.iter().zip(&y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += x[i] * x[j];
            }
            a[i][k] += x[i] * t;
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let w: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    let correct = rows
        .iter()
        .zip(&y)
        .filter(|(x, t)| {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            (s >= 0.0) == (**t > 0.0)
        })
        .count();
    correct as f64 / rows.len() as f64
}

#[test]
fn synthetic_classes_are_linearly_separable() {
    let d = dataset::generate_synthetic(500, 500, 10, 123).unwrap();
    let acc = linear_oracle_accuracy(&d);
    assert!(acc >= 0.99, "linear oracle accuracy {acc}");
}

#[test]
fn partition_is_disjoint_and_complete() {
    let base = dataset::generate_synthetic(301, 40, 5, 8).unwrap();
    // tag each record with a unique id in an extra column
    let mut schema = base.schema.clone();
    schema.push("id".into());
    let records = base
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            r.features.push(i as f64);
            r
        })
        .collect();
    let d = Dataset::new(schema, records).unwrap();
    for n in [1, 2, 3, 7] {
        let parts = dataset::partition_local(&d, n, 99).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Dataset::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut ids: Vec<usize> = parts
            .iter()
            .flat_map(|p| p.records.iter().map(|r| *r.features.last().unwrap() as usize))
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..d.len()).collect::<Vec<_>>());
    }
}

#[test]
fn stratified_subsample_keeps_proportions() {
    let d = dataset::generate_synthetic(9000, 1000, 5, 3).unwrap();
    let s = dataset::stratified_subsample(&d, 2000, 1).unwrap();
    assert_eq!(s.len(), 2000);
    assert_eq!(s.count(Label::Attack), 200);
}
