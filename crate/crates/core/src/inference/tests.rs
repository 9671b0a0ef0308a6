use super::*;
use crate::datagen::{build_dataset, BuildOptions, Dataset, Provenance};
use crate::models::ForestConfig;
use crate::simulator::SimulatorSpec;
use crate::training::{train_excluding_fold, ModelKind, TrainConfig};
use rand::Rng as _;
use std::sync::OnceLock;

fn tiny() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        let spec = SimulatorSpec::generate(7, 8).unwrap();
        build_dataset(&spec, &BuildOptions::new(Provenance::Neighborhood, 60, 3)).unwrap()
    })
}

fn ckpt(kind: ModelKind) -> Checkpoint {
    let cfg = TrainConfig {
        hidden: vec![8],
        latent_dim: 3,
        components: 3,
        batch: 16,
        epochs: 2,
        seed: 2,
        forest: ForestConfig {
            n_trees: 2,
            ..ForestConfig::default()
        },
        ..TrainConfig::new(kind)
    };
    train_excluding_fold(&cfg, tiny(), 0).unwrap()
}

fn half_hidden(w: usize) -> Vec<bool> {
    (0..w).map(|j| j < w / 2).collect()
}

#[test]
fn gumbel_zero_noise_is_argmax() {
    let mix = MixtureDensity::new(vec![0.2, 0.5, 0.3], vec![vec![0.0]; 3], vec![1.0; 3]).unwrap();
    assert_eq!(gumbel_select(&mix, &[0.0; 3]).unwrap(), 1);
    let one = MixtureDensity::new(vec![1.0, 0.0, 0.0], vec![vec![0.0]; 3], vec![1.0; 3]).unwrap();
    assert_eq!(gumbel_select(&one, &[-5.0, 40.0, 300.0]).unwrap(), 0);
    let zero = MixtureDensity {
        weights: vec![0.0, 0.0],
        means: vec![vec![0.0]; 2],
        variances: vec![1.0; 2],
    };
    assert!(matches!(gumbel_select(&zero, &[0.0, 0.0]), Err(Error::Contract(_))));
}

#[test]
fn gumbel_frequencies_match_weights() {
    let w = [0.1, 0.6, 0.3];
    let mix = MixtureDensity::new(w.to_vec(), vec![vec![0.0]; 3], vec![1.0; 3]).unwrap();
    let mut rng = stream(9, "gumbel-test");
    let mut counts = [0usize; 3];
    let draws = 100_000;
    for _ in 0..draws {
        let noise: Vec<f64> = (0..3)
            .map(|_| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                -(-u.ln()).ln()
            })
            .collect();
        counts[gumbel_select(&mix, &noise).unwrap()] += 1;
    }
    for k in 0..3 {
        assert!((counts[k] as f64 / draws as f64 - w[k]).abs() < 0.01);
    }
}

#[test]
fn conditional_records_and_weights() {
    let ck = ckpt(ModelKind::CvaeMdn);
    let ds = tiny();
    let hidden = half_hidden(ds.width());
    let one = predict_conditional(&ck, &ds.targets[0], &hidden, &InferenceConfig { n: 1, ..Default::default() }).unwrap();
    assert_eq!(one.records.len(), 1);
    let set = predict_conditional(&ck, &ds.targets[0], &hidden, &InferenceConfig::default()).unwrap();
    assert_eq!(set.records.len(), 20);
    for r in &set.records {
        assert!((r.mixture.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.imputed.len(), ds.width() / 2);
    }
    for (i, c) in set.candidates().enumerate() {
        assert_eq!(set.sources[i].0, c.z_index);
    }
}

#[test]
fn designs_are_valid_bounded_and_deterministic() {
    let ds = tiny();
    let hidden = half_hidden(ds.width());
    for kind in [ModelKind::CvaeMdn, ModelKind::CganMlp] {
        let ck = ckpt(kind);
        let cfg = InferenceConfig { seed: 4, ..Default::default() };
        let a = predict_designs(&ck, &ds.targets[3], &hidden, &cfg).unwrap();
        let b = predict_designs(&ck, &ds.targets[3], &hidden, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty() && a.len() <= 20);
        for c in &a {
            c.composition.validate().unwrap();
        }
        assert!(a.windows(2).all(|p| p[0].log_density >= p[1].log_density));
    }
}

#[test]
fn plain_model_rejects_partial_queries_unless_mean_filled() {
    let ck = ckpt(ModelKind::Mdn);
    let ds = tiny();
    let hidden = half_hidden(ds.width());
    let err = predict_designs(&ck, &ds.targets[0], &hidden, &InferenceConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Contract(ref m) if m.contains("hybrid")), "{err}");
    let cfg = InferenceConfig {
        mean_fill_plain: true,
        ..Default::default()
    };
    assert!(!predict_designs(&ck, &ds.targets[0], &hidden, &cfg).unwrap().is_empty());
    let z = vec![0.0; 3];
    assert!(matches!(impute(&ck, &ds.targets[0], &hidden, &z), Err(Error::Contract(_))));
}

#[test]
fn mlp_on_full_input_gives_its_output() {
    let ck = ckpt(ModelKind::Mlp);
    let ds = tiny();
    let full = vec![false; ds.width()];
    let out = predict_designs(&ck, &ds.targets[5], &full, &InferenceConfig::default()).unwrap();
    assert_eq!(out.len(), 1);
    let ModelBody::Net { predictor, .. } = &ck.body else { panic!() };
    let direct = predictor.distributions(&ck.encode_inputs(&ds.targets[5], &full).unwrap()).unwrap();
    let expected = Composition::normalized(&ck.decode_output(&direct[0].means[0])).unwrap();
    assert_eq!(out[0].composition, expected);
    assert!(is_point_predictor(&ck));
}

#[test]
fn forest_predicts_through_the_same_pipeline() {
    let ck = ckpt(ModelKind::Rf);
    let ds = tiny();
    let out = predict_designs(&ck, &ds.targets[1], &vec![false; ds.width()], &InferenceConfig::default()).unwrap();
    assert_eq!(out.len(), 1);
}

#[test]
fn impute_is_empty_without_mask_and_repeatable() {
    let ck = ckpt(ModelKind::CvaeMlp);
    let ds = tiny();
    let z = vec![0.0; 3];
    assert!(impute(&ck, &ds.targets[0], &vec![false; ds.width()], &z).unwrap().is_empty());
    let hidden = half_hidden(ds.width());
    let a = impute(&ck, &ds.targets[0], &hidden, &z).unwrap();
    let b = impute(&ck, &ds.targets[0], &hidden, &z).unwrap();
    assert_eq!(a.len(), ds.width() / 2);
    assert_eq!(a, b);
    assert!(matches!(impute(&ck, &ds.targets[0][1..], &hidden, &z), Err(Error::Dimension { .. })));
}

#[test]
fn ranking_ignores_component_order() {
    let a = MixtureDensity::new(vec![0.7, 0.3], vec![vec![0.0, 1.0], vec![2.0, -1.0]], vec![0.5, 2.0]).unwrap();
    let b = MixtureDensity::new(vec![0.3, 0.7], vec![vec![2.0, -1.0], vec![0.0, 1.0]], vec![2.0, 0.5]).unwrap();
    for t in [[0.1, 0.9], [1.5, -0.5], [3.0, 3.0]] {
        let da = averaged_log_density(std::slice::from_ref(&a), &t);
        let db = averaged_log_density(std::slice::from_ref(&b), &t);
        assert!((da - db).abs() < 1e-12);
    }
}

#[test]
fn query_round_trip_and_unknown_keys() {
    let ck = ckpt(ModelKind::CvaeMdn);
    let ds = tiny();
    let hidden = half_hidden(ds.width());
    let q = Query::from_row(&ck.schema.inputs, &ds.targets[2], &hidden);
    let (y, h) = q.resolve(&ck).unwrap();
    assert_eq!(h, hidden);
    for j in 0..y.len() {
        if !h[j] {
            assert_eq!(y[j], ds.targets[2][j]);
        }
    }
    let mut bad = q.clone();
    bad.observed.insert("NOPE@1".into(), 0.1);
    assert!(matches!(bad.resolve(&ck), Err(Error::Schema { .. })));
    let items = response(&predict_designs(&ck, &y, &h, &InferenceConfig::default()).unwrap());
    assert_eq!(items[0].composition.len(), 10);
}
