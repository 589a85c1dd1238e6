//! Full training runs on the default synthetic world.

use milco_core::training::{evaluate_params, initial_params, run_sap, train, SynthWorld, TrainConfig};

#[test]
fn contrastive_stage_improves_retrieval_over_pretraining_alone() {
    let cfg = TrainConfig::default();
    let world = SynthWorld::generate(&cfg).unwrap();
    let sap = run_sap(&world.bitext, initial_params(&cfg), &world.encoder, &world.teacher, &cfg).unwrap();
    let before = evaluate_params(&sap.0, &world).unwrap();
    let after = evaluate_params(&train(&world, &cfg, Some(sap)).unwrap().params, &world).unwrap();
    println!("ndcg@10 after pretraining {:.4}, after contrastive stage {:.4}", before.ndcg_at_10, after.ndcg_at_10);
    assert!(after.ndcg_at_10 > before.ndcg_at_10);
}
