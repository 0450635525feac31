use std::io::Write;

use tensorod::{load_csv, read_scores, run, Algorithm, DataSource, Precision, RunConfig};

#[test]
fn csv_in_scores_out() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let mut f = std::fs::File::create(&input).unwrap();
    writeln!(f, "a,b,label").unwrap();
    for i in 0..60 {
        let t = i as f64 * 0.1;
        writeln!(f, "{},{},0", t.sin(), t.cos()).unwrap();
    }
    writeln!(f, "5,5,1").unwrap();
    drop(f);
    let ds = load_csv(&input, Some("label")).unwrap();
    assert_eq!((ds.n(), ds.d()), (61, 2));

    for algo in Algorithm::ALL {
        let mut cfg = RunConfig::new(
            algo,
            DataSource::Csv {
                path: input.clone(),
                label_column: Some("label".into()),
            },
        );
        cfg.scores_path = Some(dir.path().join(format!("{algo}.csv")));
        cfg.summary_path = Some(dir.path().join(format!("{algo}.json")));
        let s = run(&cfg).unwrap();
        let back = read_scores(cfg.scores_path.as_ref().unwrap()).unwrap();
        assert_eq!(back.len(), 61);
        assert!(back.iter().zip(&s.scores).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(s.auc_train, Some(1.0), "{algo}");
    }
}

#[test]
fn precision_choice_is_respected() {
    let src = DataSource::Synthetic {
        n_train: 300,
        n_test: 0,
        d: 3,
        contamination: 0.05,
        seed: 2,
    };
    let mut cfg = RunConfig::new(Algorithm::Knn, src);
    let p64 = run(&cfg).unwrap();
    cfg.precision = Precision::P32;
    let p32 = run(&cfg).unwrap();
    assert_ne!(p64.scores, p32.scores);
    for (a, b) in p64.scores.iter().zip(&p32.scores) {
        assert!((a - b).abs() < 1e-5 * a.max(1.0));
    }
}
