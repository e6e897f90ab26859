use feduaa_core::data::{generate, ClientSpec, GenSpec};
use feduaa_core::evidential::LossConfig;
use feduaa_core::{
    run_experiment, AggregationMode, FederatedDataset, Federation, HeadVariant, RunConfig,
};

fn data(seed: u64) -> FederatedDataset {
    generate(&GenSpec {
        clients: [("north", 3, 120, 0.0), ("south", 4, 160, 0.8)]
            .into_iter()
            .map(|(id, classes, samples, shift)| ClientSpec {
                client_id: id.into(),
                classes,
                samples,
                skew: 3.0,
                shift,
                label_noise: 0.0,
            })
            .collect(),
        input_dim: 8,
        separation: 3.0,
        seed,
    })
    .unwrap()
}

fn cfg(mode: AggregationMode) -> RunConfig {
    RunConfig {
        rounds: 4,
        hidden: vec![12, 6],
        aggregation: mode,
        seed: 21,
        ..RunConfig::default()
    }
}

#[test]
fn singleset_equals_independent_single_client_runs() {
    let full = run_experiment(&cfg(AggregationMode::None), data(1)).unwrap();
    for (i, partition) in data(1).partitions.into_iter().enumerate() {
        let solo = run_experiment(
            &cfg(AggregationMode::None),
            FederatedDataset::new(vec![partition]).unwrap(),
        )
        .unwrap();
        assert_eq!(solo.clients[0].params, full.clients[i].params);
        for (a, b) in solo.history().iter().zip(full.history()) {
            assert_eq!(a.clients[0], b.clients[i]);
        }
        assert_eq!(solo.final_eval.clients[0], full.final_eval.clients[i]);
    }
}

#[test]
fn singleset_never_synchronises_encoders() {
    let res = run_experiment(&cfg(AggregationMode::None), data(2)).unwrap();
    assert_ne!(
        res.clients[0].params.encoder(),
        res.clients[1].params.encoder()
    );
}

#[test]
fn same_config_gives_identical_logs() {
    let a = run_experiment(&cfg(AggregationMode::Uaw), data(3)).unwrap();
    let b = run_experiment(&cfg(AggregationMode::Uaw), data(3)).unwrap();
    assert_eq!(a.round_log_csv(), b.round_log_csv());
    assert_eq!(a.final_eval.to_csv(), b.final_eval.to_csv());
}

#[test]
fn modes_share_the_first_broadcast_then_diverge() {
    let mut uaw = Federation::new(cfg(AggregationMode::Uaw), data(4)).unwrap();
    let mut uniform = Federation::new(cfg(AggregationMode::StaticUniform), data(4)).unwrap();
    assert_eq!(uaw.server().global_encoder, uniform.server().global_encoder);
    uaw.run_round().unwrap();
    uniform.run_round().unwrap();
    assert_ne!(uaw.server().global_encoder, uniform.server().global_encoder);
}

#[test]
fn every_broadcast_synchronises_clients() {
    let mut fed = Federation::new(cfg(AggregationMode::StaticSampleCount), data(5)).unwrap();
    for _ in 0..3 {
        fed.run_round().unwrap();
        fed.broadcast().unwrap();
        for c in fed.clients() {
            assert_eq!(c.params.encoder(), fed.server().global_encoder.as_slice());
        }
    }
    let weights = fed.server().history[0].weights().unwrap();
    assert_eq!(weights.len(), 2);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn tweu_loss_is_eu_loss_plus_tce_at_round_zero() {
    let fed = Federation::new(cfg(AggregationMode::Uaw), data(6)).unwrap();
    let client = &fed.clients()[1];
    let logits =
        feduaa_core::numerics::mlp_forward(&client.params, &client.data.train_features()).unwrap();
    let labels = client.data.train_labels();
    let loss_cfg = LossConfig::default();
    let (tweu, _) = HeadVariant::Tweu
        .loss_and_grad(&logits, labels, &loss_cfg, 0)
        .unwrap();
    let (eu, _) = HeadVariant::Eu
        .loss_and_grad(&logits, labels, &loss_cfg, 0)
        .unwrap();
    assert_eq!(eu.l_tce, 0.0);
    assert!((tweu.total - (eu.total + tweu.l_tce)).abs() < 1e-12);
    assert!((eu.total - eu.l_ice).abs() < 1e-12);
}

#[test]
fn softmax_baseline_trains_with_static_weights() {
    let c = RunConfig {
        head: HeadVariant::SoftmaxCe,
        ..cfg(AggregationMode::StaticUniform)
    };
    let res = run_experiment(&c, data(7)).unwrap();
    assert!(res.final_eval.average_auc.is_finite());
    assert!(res
        .history()
        .iter()
        .all(|r| r.clients.iter().all(|c| c.loss.is_finite())));
}

#[test]
fn divergent_learning_rate_reports_the_client() {
    let c = RunConfig {
        lr: f64::MAX,
        ..cfg(AggregationMode::Uaw)
    };
    let err = run_experiment(&c, data(8)).unwrap_err();
    assert!(
        matches!(err, feduaa_core::Error::NonFiniteLoss { round: 0, .. }),
        "{err}"
    );
}
