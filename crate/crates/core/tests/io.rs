use absrank_core::absrank::{AbsRankFn, RoundsMode, SphereTail};
use absrank_core::{Error, Orientation, PerformanceMatrix};

fn every_kind() -> Vec<AbsRankFn> {
    // neighbouring knots one ulp apart survive only if parsing is exact
    let close: Vec<f64> = (0..200).map(|k| 1.0 + f64::EPSILON * k as f64).chain([0.3, 7.25e-9]).collect();
    let empirical = AbsRankFn::empirical(&close, Some(0.0), Some(2.0)).unwrap();
    vec![
        AbsRankFn::sphere(4, 0.7).unwrap(),
        AbsRankFn::sphere_with(3, 1.5, SphereTail::Formula, 10).unwrap(),
        AbsRankFn::cone(5, -1.0, 2.0).unwrap(),
        AbsRankFn::uniform(0.1, 0.9).unwrap(),
        AbsRankFn::gaussian(-0.3, 1.7).unwrap(),
        empirical.clone(),
        AbsRankFn::empirical(&[0.1, 0.2, 0.2, 0.9], None, None).unwrap(),
        empirical.compose_budget(17).unwrap(),
        empirical.compose_rounds(3, RoundsMode::Convolution, 512).unwrap(),
        AbsRankFn::gaussian(0.0, 1.0)
            .unwrap()
            .compose_rounds(5, RoundsMode::NormalApprox, 256)
            .unwrap()
            .with_problem("g"),
    ]
}

#[test]
fn every_kind_survives_save_and_load_bit_for_bit() {
    let dir = tempfile_dir("cdfs");
    for (k, f) in every_kind().into_iter().enumerate() {
        let path = dir.join(format!("{k}.absrank.json"));
        f.save(&path).unwrap();
        let back = AbsRankFn::load(&path).unwrap();
        assert_eq!(back.to_json(), f.to_json(), "{}", f.kind_name());
        for i in 0..=400 {
            let t = -1.0 + 4.0 * i as f64 / 400.0;
            match (f.evaluate(t), back.evaluate(t)) {
                (Ok(a), Ok(b)) => assert_eq!(a.to_bits(), b.to_bits(), "{} at {t}", f.kind_name()),
                (Err(_), Err(_)) => {}
                other => panic!("{} at {t}: {other:?}", f.kind_name()),
            }
        }
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

fn tempfile_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("absrank-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(text: &str) -> absrank_core::Result<PerformanceMatrix> {
    PerformanceMatrix::read_csv(text.as_bytes(), Orientation::LowerIsBetter)
}

#[test]
fn csv_errors_name_the_offending_cell() {
    match read("algorithm,p1,p2\nA,1,2\nB,3,NaN\n") {
        Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (3, 3)),
        other => panic!("{other:?}"),
    }
    match read("algorithm,p1\nA,x\n") {
        Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (2, 2)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(read("algorithm,p1,p2\nA,1\n"), Err(Error::Shape(_))));
    assert!(matches!(read("algorithm,p1\nA,1\nA,2\n"), Err(Error::Label(_))));
    assert!(matches!(read("algorithm,p1,p1\nA,1,2\n"), Err(Error::Label(_))));
}
