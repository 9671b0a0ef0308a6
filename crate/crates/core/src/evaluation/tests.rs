use super::*;
use crate::datagen::SearchBox;
use crate::simulator::{base_alloy, swap};
use proptest::prelude::*;

fn alloy_2024() -> Composition {
    Composition::new([0.05, 4.35, 1.5, 0.05, 0.1, 0.0, 0.6, 0.1, 0.0, 93.25]).unwrap()
}

#[test]
fn composition_error_examples() {
    let x = alloy_2024();
    let e = composition_errors(&x.0, &x.0).unwrap();
    assert_eq!(e.relative, Some(0.0));
    assert_eq!(e.absolute, Some(0.0));
    assert_eq!((e.nonzero, e.zero), (8, 2));
    let e = composition_errors(&[2.0], &[2.2]).unwrap();
    assert!((e.relative.unwrap() - 0.10).abs() < 1e-9);
    assert_eq!(e.absolute, None);
    let e = composition_errors(&[0.0], &[0.01]).unwrap();
    assert!((e.absolute.unwrap() - 0.01).abs() < 1e-9);
    assert_eq!(e.relative, None);
    assert!(matches!(composition_errors(&[-1.0], &[0.0]), Err(Error::Domain(_))));
}

proptest! {
    #[test]
    fn errors_scale_with_composition(c in 0.1f64..10.0, p in prop::collection::vec(0.0f64..5.0, 4)) {
        let x = [1.0, 0.0, 3.0, 0.0];
        let e = composition_errors(&x, &p).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
        let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
        let s = composition_errors(&xs, &ps).unwrap();
        prop_assert!((e.relative.unwrap() - s.relative.unwrap()).abs() < 1e-9);
        prop_assert!((e.absolute.unwrap() * c - s.absolute.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn oracle_candidates_score_zero_and_triples_are_ordered() {
    let x = alloy_2024();
    let r = row_errors(0, &x.0, std::slice::from_ref(&x)).unwrap();
    assert_eq!(r.relative, Triple { min: 0.0, mean: 0.0, max: 0.0 });
    let other = base_alloy("7075").unwrap();
    let r = row_errors(0, &x.0, &[x.clone(), other]).unwrap();
    assert_eq!(r.relative.min, 0.0);
    assert!(r.relative.min <= r.relative.mean && r.relative.mean <= r.relative.max);
}

#[test]
fn summary_uses_sample_std() {
    let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s.mean, 2.5);
    assert!((s.std - 1.2909944487358056).abs() < 1e-12);
}

#[test]
fn closed_loop_is_zero_for_truth_and_swap() {
    let spec = SimulatorSpec::generate(7, 8).unwrap();
    let x = alloy_2024();
    let y = spec.simulate(&x).unwrap().values;
    let hidden = vec![false; y.len()];
    let c = closed_loop_verify(&spec, std::slice::from_ref(&x), &hidden, &y).unwrap();
    assert_eq!(c.average, 0.0);
    let s = swap(&x, spec.symmetric_pair);
    let c = closed_loop_verify(&spec, &[s], &hidden, &y).unwrap();
    assert_eq!(c.average, 0.0);
    let far = base_alloy("7075").unwrap();
    assert!(closed_loop_verify(&spec, &[far], &hidden, &y).unwrap().average > 0.0);
}

#[test]
fn phase_errors_skip_hidden_cells() {
    let y = [0.5, 0.5, 0.0, 0.0];
    let p = [0.5, 0.4, 1.0, 0.0];
    let e = phase_errors(&p, &y, &[false; 4], 2).unwrap();
    assert!((e[0].unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(e[1], None);
    let e = phase_errors(&p, &y, &[false, true, false, false], 2).unwrap();
    assert_eq!(e[0], Some(0.0));
}

fn search_target() -> (SimulatorSpec, Vec<f64>, Composition) {
    let spec = SimulatorSpec::generate(7, 8).unwrap();
    let x = alloy_2024();
    (spec.clone(), spec.simulate(&x).unwrap().values, x)
}

#[test]
fn search_traces_are_monotone_and_within_budget() {
    let (spec, y, _) = search_target();
    let hidden = vec![false; y.len()];
    for m in [SearchMethod::Random, SearchMethod::Ga, SearchMethod::Bo] {
        let t = search_baseline(m, &spec, &y, &hidden, 12, 3).unwrap();
        assert_eq!(t.steps.len(), 12);
        assert!(t.steps.windows(2).all(|w| w[1].best_error <= w[0].best_error));
        assert_eq!(t.steps.last().unwrap().calls, 12);
        let empty = search_baseline(m, &spec, &y, &hidden, 0, 3).unwrap();
        assert!(empty.steps.is_empty());
    }
}

#[test]
fn ga_seeded_with_truth_stays_at_zero() {
    let (spec, y, x) = search_target();
    let hidden = vec![false; y.len()];
    let mut rng = stream(1, "ga");
    let t = ga_search(&spec, &y, &hidden, 60, &GaConfig::default(), &[x.aux().to_vec()], &mut rng).unwrap();
    assert_eq!(t.steps[0].error, 0.0);
    assert!(t.steps.iter().all(|s| s.best_error == 0.0));
    assert!(SearchBox::alloy_default().contains(t.best.unwrap().aux()));
}

#[test]
fn pca_examples() {
    let line: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
    let p = pca_project(&line, 1).unwrap();
    assert!(p.explained[0] >= 0.999);

    let mut rng = stream(2, "pca");
    let pts: Vec<Vec<f64>> = (0..30)
        .map(|_| {
            use rand::Rng as _;
            vec![rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)]
        })
        .collect();
    let p = pca_project(&pts, 2).unwrap();
    for q in &pts {
        let back = p.reconstruct(&p.project(q));
        assert!(back.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-9));
    }
    assert!(p.project(&p.mean).iter().all(|v| v.abs() < 1e-12));
    assert!(matches!(pca_project(&pts, 3), Err(Error::Domain(_))));
}

#[test]
fn report_files_are_stable() {
    let folds = vec![FoldErrors {
        fold: 0,
        rows: 3,
        relative: Triple { min: 0.01, mean: 0.02, max: 0.04 },
        absolute: None,
    }];
    let (spec, y, _) = search_target();
    let hidden = vec![false; y.len()];
    let results = vec![
        ResultFile::Errors(ErrorReport::from_folds("MDN", 0.0, folds.clone())),
        ResultFile::Errors(ErrorReport::from_folds("CVAE-MDN", 0.5, folds)),
        ResultFile::Search(search_baseline(SearchMethod::Random, &spec, &y, &hidden, 5, 1).unwrap()),
        ResultFile::Sweep(SweepCurve {
            method: "CVAE-MDN".into(),
            points: vec![
                SweepPoint { mask_ratio: 0.1, relative_min: 0.01, relative_mean: 0.02 },
                SweepPoint { mask_ratio: 0.5, relative_min: 0.03, relative_mean: 0.05 },
            ],
        }),
        ResultFile::Pca(PcaReport {
            explained: vec![0.7, 0.2],
            dataset: vec![vec![0.0, 1.0], vec![1.0, -1.0]],
            candidates: vec![vec![0.5, 0.5]],
        }),
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let names = emit_report(&results, a.path()).unwrap();
    emit_report(&results, b.path()).unwrap();
    for n in names.iter().chain([&REPORT_MANIFEST.to_string()]) {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap(), "{n}");
    }
    let table = std::fs::read_to_string(a.path().join("tableA.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "method,relative_mean,relative_std,absolute_mean,absolute_std");
    assert_eq!(table.lines().nth(1).unwrap(), "MDN,0.010000,0.000000,0.000000,0.000000");

    let dir = tempfile::tempdir().unwrap();
    for (i, r) in results.iter().enumerate() {
        r.save(&dir.path().join(format!("{i}.json"))).unwrap();
    }
    assert_eq!(ResultFile::load_dir(dir.path()).unwrap(), results);
}

#[test]
fn sweep_monotonicity_check() {
    let c = SweepCurve {
        method: "m".into(),
        points: [0.01, 0.02, 0.015, 0.05]
            .iter()
            .enumerate()
            .map(|(i, v)| SweepPoint { mask_ratio: i as f64, relative_min: *v, relative_mean: *v })
            .collect(),
    };
    assert!(c.is_non_decreasing(0.01));
    assert!(!c.is_non_decreasing(0.001));
}
