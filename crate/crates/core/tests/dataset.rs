use glscv::dataset::read_long_csv;
use glscv::{
    build_design, write_long_csv, ColumnRoles, Error, LongDataset, ModelSpec, RegressionProblem,
};
use proptest::prelude::*;

fn spec() -> ModelSpec {
    ModelSpec {
        response: "response".into(),
        numeric_terms: vec!["dose".into()],
        categorical_terms: vec![("arm".into(), "A".into())],
        intercept: true,
    }
}

/// (subject, time, response, dose, arm) rows with unique (subject, time).
fn rows_strategy() -> impl Strategy<Value = Vec<(u8, u16, f64, f64, u8)>> {
    prop::collection::btree_map(
        (0u8..6, 0u16..40),
        (-1e3f64..1e3, -10f64..10.0, 0u8..3),
        8..60,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|((s, t), (y, d, a))| (s, t, y, d, a))
            .collect()
    })
}

fn to_csv(rows: &[(u8, u16, f64, f64, u8)]) -> String {
    let mut s = String::from("arm,subject,dose,time,response\n");
    for &(subj, t, y, d, a) in rows {
        let arm = ["A", "B", "C"][a as usize];
        s.push_str(&format!("{arm},id{subj},{d},{},{y}\n", t as f64 / 4.0));
    }
    s
}

fn load(text: &str) -> LongDataset {
    read_long_csv(text.as_bytes(), "mem", &ColumnRoles::default()).unwrap()
}

fn same_content(a: &LongDataset, b: &LongDataset) -> bool {
    a.covariate_names() == b.covariate_names()
        && a.rows().len() == b.rows().len()
        && a.rows().iter().zip(b.rows()).all(|(x, y)| {
            x.subject == y.subject
                && x.time == y.time
                && x.response == y.response
                && x.covariates == y.covariates
        })
}

proptest! {
    #[test]
    fn write_then_read_round_trips(rows in rows_strategy()) {
        let data = load(&to_csv(&rows));
        let mut buf = Vec::new();
        write_long_csv(&data, &mut buf).unwrap();
        let again = read_long_csv(buf.as_slice(), "mem", &ColumnRoles::default()).unwrap();
        prop_assert!(same_content(&data, &again));
    }

    #[test]
    fn design_ignores_file_row_order(rows in rows_strategy(), shift in 0usize..60) {
        let mut shuffled = rows.clone();
        shuffled.reverse();
        let k = shift % shuffled.len();
        shuffled.rotate_left(k);
        let a: std::result::Result<RegressionProblem<f64>, Error> = build_design(&load(&to_csv(&rows)), &spec());
        let b: std::result::Result<RegressionProblem<f64>, Error> = build_design(&load(&to_csv(&shuffled)), &spec());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "one order failed"),
        }
    }
}

#[test]
fn design_columns_and_dummies() {
    let text = "subject,time,response,dose,arm\nb,0,1,0.5,B\na,1,2,1.5,A\na,0,3,2.5,C\nb,2,4,3.5,A\nc,0,6,0.0,B\n";
    let p: RegressionProblem<f64> = build_design(&load(text), &spec()).unwrap();
    assert_eq!(
        p.column_names(),
        ["(Intercept)", "dose", "arm[B]", "arm[C]"]
    );
    // Sorted by subject then time: a@0, a@1, b@0, b@2, c@0.
    assert_eq!(p.y(), [3.0, 2.0, 1.0, 4.0, 6.0]);
    assert_eq!(p.x().row(0), [1.0, 2.5, 0.0, 1.0]);
    assert_eq!(p.x().row(2), [1.0, 0.5, 1.0, 0.0]);
    assert_eq!(p.groups().ids(), ["a", "b", "c"]);
    assert_eq!(p.positions(), [0, 1, 0, 1, 0]);
}

#[test]
fn load_errors_name_the_line() {
    let bad = "subject,time,response\na,0,1\na,1,NA\n";
    let err = read_long_csv(bad.as_bytes(), "f.csv", &ColumnRoles::default()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    let dup = "subject,time,response\na,0,1\na,0,2\n";
    assert!(
        read_long_csv(dup.as_bytes(), "f.csv", &ColumnRoles::default())
            .unwrap_err()
            .to_string()
            .contains("duplicate observation")
    );
    let missing = "subject,when,response\na,0,1\n";
    assert!(
        read_long_csv(missing.as_bytes(), "f.csv", &ColumnRoles::default())
            .unwrap_err()
            .to_string()
            .contains("missing column")
    );
}

#[test]
fn design_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.csv"), "1,0.5\n1,1.5\n1,2.5\n1,3.5\n").unwrap();
    std::fs::write(dir.path().join("y.csv"), "1\n2\n3\n5\n").unwrap();
    std::fs::write(
        dir.path().join("g.csv"),
        "subject_id,time\n7,0\n7,1\n8,0\n8,3\n",
    )
    .unwrap();
    let p: RegressionProblem<f64> = glscv::load_design_csv(
        dir.path().join("x.csv"),
        dir.path().join("y.csv"),
        dir.path().join("g.csv"),
    )
    .unwrap();
    assert_eq!(p.column_names(), ["x1", "x2"]);
    assert_eq!(p.groups().sizes(), [2, 2]);
    assert_eq!(p.times(), [0.0, 1.0, 0.0, 3.0]);
    std::fs::write(dir.path().join("y.csv"), "1\n2\n3\n").unwrap();
    let err = glscv::load_design_csv::<f64>(
        dir.path().join("x.csv"),
        dir.path().join("y.csv"),
        dir.path().join("g.csv"),
    )
    .unwrap_err();
    assert!(err.to_string().contains("dimension mismatch"), "{err}");
}
