use absrank_core::absrank::AbsRankFn;
use absrank_core::bench::{BenchmarkProblem, ConeNorm, ProblemKind, ProblemParams};
use absrank_core::sampling::{sample_function, select_delta, Region, SampleSet};
use absrank_core::sobol::{sobol_points, SobolConfig, SobolStream};
use absrank_core::Error;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn cube(kind: ProblemKind, d: usize, w: f64, params: ProblemParams) -> BenchmarkProblem {
    BenchmarkProblem::cube("f", kind, d, -w, w, params).unwrap()
}

#[test]
fn sobol_matches_frozen_reference_points() {
    // unscrambled points from an independent Joe–Kuo implementation
    let expected_first = [
        [0.5, 0.5, 0.5, 0.5, 0.5],
        [0.75, 0.25, 0.25, 0.25, 0.75],
        [0.25, 0.75, 0.75, 0.75, 0.25],
        [0.375, 0.375, 0.625, 0.875, 0.375],
        [0.875, 0.875, 0.125, 0.375, 0.875],
        [0.625, 0.125, 0.875, 0.625, 0.625],
    ];
    let pts = sobol_points(&SobolConfig::new(5, 3)).unwrap();
    for (p, want) in pts.iter().zip(&expected_first) {
        assert_eq!(p[..], want[..]);
    }
    let dims = [0, 1, 2, 9, 99, 511, 1023];
    let expected = [
        (101, [0.9140625, 0.7578125, 0.2734375, 0.1953125, 0.3828125, 0.0234375, 0.4453125]),
        (555, [0.4873046875, 0.5791015625, 0.4384765625, 0.9619140625, 0.0908203125, 0.7568359375, 0.9423828125]),
        (1000, [0.2197265625, 0.0966796875, 0.5185546875, 0.0693359375, 0.1865234375, 0.3955078125, 0.7138671875]),
    ];
    for (index, want) in expected {
        let mut s = SobolStream::new(1024, index).unwrap();
        let mut p = vec![0.0; 1024];
        s.next_into(&mut p);
        for (k, &d) in dims.iter().enumerate() {
            assert_eq!(p[d], want[k], "point {index}, dimension {d}");
        }
    }
}

#[test]
fn sobol_runs_are_byte_identical() {
    let cfg = SobolConfig::new(13, 10).with_skip(7);
    let bytes = |pts: Vec<Vec<f64>>| -> Vec<u8> { pts.iter().flatten().flat_map(|x| x.to_le_bytes()).collect() };
    assert_eq!(bytes(sobol_points(&cfg).unwrap()), bytes(sobol_points(&cfg).unwrap()));
}

/// Exact star discrepancy of a 2-d point set: over all anchored boxes with
/// corners on point coordinates (or 1), the larger of the open and closed
/// count deviations.
fn star_discrepancy_2d(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len() as f64;
    let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).chain([1.0]).collect();
    let mut ys: Vec<f64> = pts.iter().map(|p| p[1]).chain([1.0]).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let mut worst: f64 = 0.0;
    for &x in &xs {
        let mut open: Vec<f64> = pts.iter().filter(|p| p[0] < x).map(|p| p[1]).collect();
        let mut closed: Vec<f64> = pts.iter().filter(|p| p[0] <= x).map(|p| p[1]).collect();
        open.sort_by(f64::total_cmp);
        closed.sort_by(f64::total_cmp);
        for &y in &ys {
            let o = open.partition_point(|&v| v < y) as f64;
            let c = closed.partition_point(|&v| v <= y) as f64;
            worst = worst.max(c / n - x * y).max(x * y - o / n);
        }
    }
    worst
}

#[test]
fn sobol_beats_pseudo_random_on_star_discrepancy() {
    let sobol: Vec<[f64; 2]> = sobol_points(&SobolConfig::new(2, 10))
        .unwrap()
        .into_iter()
        .map(|p| [p[0], p[1]])
        .collect();
    let mut rng = StdRng::seed_from_u64(20240601);
    let random: Vec<[f64; 2]> = (0..1024).map(|_| [rng.gen(), rng.gen()]).collect();
    let (ds, dr) = (star_discrepancy_2d(&sobol), star_discrepancy_2d(&random));
    assert!(ds < dr, "sobol {ds} vs random {dr}");
    assert!(ds < 0.01);
}

#[test]
fn sampled_values_do_not_depend_on_chunking() {
    let p = cube(ProblemKind::Rastrigin, 3, 5.12, ProblemParams::default());
    let cfg = SobolConfig::new(3, 14);
    let set = sample_function(&p, &Region::domain(&p), &cfg).unwrap();
    let mut direct: Vec<f64> = sobol_points(&cfg)
        .unwrap()
        .iter()
        .map(|u| p.evaluate(&u.iter().map(|x| -5.12 + 10.24 * x).collect::<Vec<_>>()).unwrap())
        .collect();
    direct.sort_by(f64::total_cmp);
    assert_eq!(set.values, direct);
}

#[test]
fn ten_dimensional_sphere_minimum_has_the_reported_order() {
    let p = cube(ProblemKind::Sphere, 10, 1e-4, ProblemParams::default());
    let set = sample_function(&p, &Region::domain(&p), &SobolConfig::new(10, 20)).unwrap();
    // the centre point lands exactly on the optimum; the next value is the
    // first informative one
    assert_eq!(set.values[0], 0.0);
    let second = set.values[1];
    assert!(second > 1e-9 && second < 1e-8, "{second}");
}

#[test]
fn degenerate_region_gives_constant_samples() {
    let p = cube(ProblemKind::Sphere, 4, 1.0, ProblemParams::default());
    let point = Region::new(vec![0.5; 4], vec![0.5; 4]).unwrap();
    let set = sample_function(&p, &point, &SobolConfig::new(4, 6)).unwrap();
    assert!(set.values.iter().all(|&v| v == 1.0));
    assert!(matches!(set.to_absrank(None, None), Err(Error::SampleSize(_))));
}

#[test]
fn mismatched_sampler_dimension_is_a_shape_error() {
    let p = cube(ProblemKind::Sphere, 3, 1.0, ProblemParams::default());
    assert!(matches!(
        sample_function(&p, &Region::domain(&p), &SobolConfig::new(2, 4)),
        Err(Error::Shape(_))
    ));
}

/// sup |F_N − F| over the region where the closed form is exact (t ≤ 1).
fn sphere_ks(log2n: u32) -> f64 {
    let p = cube(ProblemKind::Sphere, 2, 1.0, ProblemParams::default());
    let set = sample_function(&p, &Region::domain(&p), &SobolConfig::new(2, log2n)).unwrap();
    let emp = set.to_absrank(Some(0.0), Some(2.0)).unwrap();
    let exact = AbsRankFn::sphere(2, 1.0).unwrap();
    let mut probes: Vec<f64> = set.values.iter().cloned().filter(|&t| t <= 1.0).collect();
    probes.extend((0..=2000).map(|k| k as f64 / 2000.0));
    probes
        .iter()
        .map(|&t| (emp.evaluate(t).unwrap() - exact.evaluate(t).unwrap()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn empirical_cdf_converges_to_the_closed_form() {
    let ks: Vec<f64> = [10, 12, 14, 16, 18].iter().map(|&k| sphere_ks(k)).collect();
    assert!(ks[0] > ks[4] * 10.0, "{ks:?}");
    for w in ks.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{ks:?}");
    }
    assert!(ks[4] < 1e-3, "{ks:?}");
}

#[test]
fn delta_selection_prefers_the_range_covering_the_metrics() {
    // pyramid |x|_∞ on [-1,1]^2: the cube of half-width δ has CDF (t/δ)^2,
    // so the ranks of t = 0.05·k are (0.05k/δ)^2 while δ ≥ 0.25 and pile up
    // near one below that; the gaps are widest at δ = 0.25
    let params = ProblemParams { norm: ConeNorm::Chebyshev, ..ProblemParams::default() };
    let p = cube(ProblemKind::Cone, 2, 1.0, params);
    let metrics: Vec<f64> = (1..=5).map(|k| 0.05 * k as f64).collect();
    let deltas = [0.05, 0.1, 0.25, 0.5, 1.0];
    let sel = select_delta(&p, &[0.0, 0.0], &metrics, &deltas, &SobolConfig::new(2, 12)).unwrap();
    assert_eq!(sel.chosen, 0.25);
    let too_small = &sel.scores[0];
    assert!(too_small.score < 1e-6);
    assert!(sel.scores.iter().all(|s| !s.clipped));
}

#[test]
fn sample_set_round_trips_through_json() {
    let p = cube(ProblemKind::Sphere, 2, 1.0, ProblemParams::default());
    let set = sample_function(&p, &Region::domain(&p), &SobolConfig::new(2, 8)).unwrap();
    let dir = std::env::temp_dir().join(format!("absrank-samples-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("f.samples.json");
    set.save(&path).unwrap();
    assert_eq!(SampleSet::load(&path).unwrap(), set);
    std::fs::remove_dir_all(&dir).unwrap();
}
