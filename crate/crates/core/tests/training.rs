mod common;

use ivsnet_core::data::{generate_synthetic_dataset, Dataset, SyntheticDatasetSpec, Split};
use ivsnet_core::net::{save_checkpoint, NetworkConfig, SiameseModel};
use ivsnet_core::losses::{identification_loss, overall_loss, verification_loss, VerificationSignal};
use ivsnet_core::train::{
    batch_for_iteration, batch_objective, pair_inputs, train, Objective, PairTerm, TrainConfig,
};

fn setup(seed: u64) -> (SiameseModel, Dataset) {
    let spec = SyntheticDatasetSpec {
        seed,
        ..Default::default()
    };
    let ds = generate_synthetic_dataset(&spec).unwrap();
    let model = SiameseModel::build(NetworkConfig::tiny(spec.model_classes()).with_seed(seed)).unwrap();
    (model, ds)
}

#[test]
fn joint_loss_halves_within_200_iterations() {
    let (model, ds) = setup(7);
    let cfg = TrainConfig {
        iterations: 200,
        seed: 7,
        ..Default::default()
    };
    let out = train(model, &ds, &cfg).unwrap();
    let first = out.log.rows.first().unwrap().total;
    let last = out.log.rows.last().unwrap().total;
    assert!(last < 0.5 * first, "initial {first}, final {last}");
}

#[test]
fn same_seed_gives_identical_checkpoint_files() {
    let cfg = TrainConfig {
        iterations: 20,
        seed: 3,
        ..Default::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let (model, ds) = setup(3);
        let out = train(model, &ds, &cfg).unwrap();
        save_checkpoint(d.path(), &out.model).unwrap();
    }
    let files = common::walk_files(dirs[0].path());
    assert!(files.len() > 10);
    for f in files {
        assert_eq!(
            std::fs::read(dirs[0].path().join(&f)).unwrap(),
            std::fs::read(dirs[1].path().join(&f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

/// Recomputes logged losses from snapshots with the plain (tape-free)
/// forward pass and the scalar loss functions.
#[test]
fn logged_losses_match_recomputation() {
    let (model, ds) = setup(1);
    let cfg = TrainConfig {
        iterations: 30,
        seed: 1,
        lambda: 0.7,
        snapshot_iterations: vec![0, 11, 29],
        ..Default::default()
    };
    let out = train(model, &ds, &cfg).unwrap();
    let train_clips = ds.split(Split::Train);
    assert_eq!(out.snapshots.len(), 3);
    for (it, snap) in &out.snapshots {
        let pairs = batch_for_iteration(&train_clips, &cfg, *it).unwrap();
        let (mut l1, mut l2, mut lv) = (0.0, 0.0, 0.0);
        for p in &pairs {
            let (a, b) = (train_clips[p.first], train_clips[p.second]);
            let o = snap.siamese_forward(&a.tensor, &b.tensor).unwrap();
            l1 += identification_loss(&o.ident_1, a.label).unwrap();
            l2 += identification_loss(&o.ident_2, b.label).unwrap();
            lv += verification_loss(&o.verif, VerificationSignal::from_labels(a.label, b.label)).unwrap();
        }
        let n = pairs.len() as f64;
        let row = &out.log.rows[*it];
        assert!((row.ident_1 - l1 / n).abs() < 1e-10, "iteration {it}");
        assert!((row.ident_2 - l2 / n).abs() < 1e-10, "iteration {it}");
        assert!((row.pair - lv / n).abs() < 1e-10, "iteration {it}");
        let total = overall_loss(l1 / n, l2 / n, lv / n, cfg.weights());
        assert!((row.total - total).abs() < 1e-10, "iteration {it}");
    }
}

#[test]
fn zero_lambda_backbone_gradient_ignores_verification_head() {
    let (model, ds) = setup(2);
    let cfg = TrainConfig {
        lambda: 0.0,
        ..Default::default()
    };
    let train_clips = ds.split(Split::Train);
    for it in 0..3 {
        let pairs = batch_for_iteration(&train_clips, &cfg, it).unwrap();
        let batch = pair_inputs(&train_clips, &pairs);
        let weighted = Objective::from_config(&cfg);
        let detached = Objective {
            pair_term: PairTerm::Detached,
            ..weighted
        };
        let (_, gw) = batch_objective(&model, &batch, &weighted).unwrap();
        let (_, gd) = batch_objective(&model, &batch, &detached).unwrap();
        for id in model.backbone_ids() {
            let (a, b) = (gw.param(id).unwrap(), gd.param(id).unwrap());
            assert!(a.max_abs_diff(&b) <= 1e-12, "{}", model.parameter_names()[id]);
        }
        for id in model.verification_head_ids() {
            assert!(gw.param(id).unwrap().data().iter().all(|&g| g == 0.0));
        }
    }
}

#[test]
fn pair_batches_respect_the_mix() {
    let (_, ds) = setup(0);
    let train_clips = ds.split(Split::Train);
    for (batch_size, ratio, same) in [(5, 0.5, 3), (4, 0.5, 2), (6, 0.0, 0), (6, 1.0, 6), (10, 0.3, 3)] {
        let cfg = TrainConfig {
            batch_size,
            same_ratio: ratio,
            ..Default::default()
        };
        for it in 0..20 {
            let pairs = batch_for_iteration(&train_clips, &cfg, it).unwrap();
            assert_eq!(pairs.len(), batch_size);
            assert_eq!(pairs.iter().filter(|p| p.signal.is_same()).count(), same);
            for p in &pairs {
                let (a, b) = (train_clips[p.first], train_clips[p.second]);
                assert_eq!(p.signal, VerificationSignal::from_labels(a.label, b.label));
                assert_eq!(a.split, Split::Train);
            }
        }
    }
}

#[test]
fn generator_counts_clips_per_class() {
    let ds = generate_synthetic_dataset(&SyntheticDatasetSpec {
        background_clips: 0,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(ds.clips.len(), 80);
    for c in 1..=4 {
        assert_eq!(ds.clips.iter().filter(|x| x.label == c).count(), 20);
    }
}
