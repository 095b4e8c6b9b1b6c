use hgl_core::training::*;
use hgl_core::synthetic::*;

fn link_cfg(l2: bool, residual: bool) -> RunConfig {
    RunConfig::from_value(serde_json::json!({
        "task": "link",
        "dataset": "unused",
        "model": {"kind": "simple-hgn", "dim": 32, "edge_dim": 16, "layers": 2, "heads": 2,
                   "beta": 0.0, "slope": 0.01, "dropout": 0.3, "feat": 0,
                   "decoder": "dot", "l2_output": l2, "node_residual": residual},
        "optimizer": {"lr": 0.01, "weight_decay": 1e-4},
        "training": {"patience": 30, "max_epochs": 150, "seeds": [0], "split_seed": 1}
    })).unwrap()
}

#[test]
fn link_experiment() {
    let g = toy_link_graph(1);
    println!("graph: {} nodes {} edges", g.node_count(), g.edge_count());
    let cfg = link_cfg(true, true);
    let t0 = std::time::Instant::now();
    let ctx = prepare_link(&cfg, &g).unwrap();
    println!("prepare: {:?}", t0.elapsed());
    for seed in [0u64, 1] {
        let t0 = std::time::Instant::now();
        let trained = train_link(&cfg, &ctx, seed).unwrap();
        println!("seed={seed} epochs={} best_val={:.4} test={:?} elapsed={:?}",
            trained.outcome.history.len(), trained.outcome.best_val,
            trained.outcome.test_metrics, t0.elapsed());
    }
}

#[test]
fn link_regime_gap_experiment() {
    let g = toy_link_graph(1);
    let cfg = link_cfg(true, true);
    let ctx2 = prepare_link_with_regime(&cfg, &g, NegativeRegime::TwoHop).unwrap();
    let ctxr = prepare_link_with_regime(&cfg, &g, NegativeRegime::Random).unwrap();
    let trained = train_link(&cfg, &ctx2, 0).unwrap();
    // evaluate the SAME trained model under both regimes
    let (hgl_core::graph::SplitSpec::Link { test, test_neg, .. }, hgl_core::graph::SplitSpec::Link { test: test_r, test_neg: test_neg_r, .. }) = (&ctx2.split, &ctxr.split) else { panic!() };
    let scorer = trained.link_scorer.as_ref().unwrap();
    let (auc2, _) = eval_link_metrics(&trained.encoder, &trained.store, &ctx2.prepared, scorer, test, test_neg).unwrap();
    let (aucr, _) = eval_link_metrics(&trained.encoder, &trained.store, &ctxr.prepared, scorer, test_r, test_neg_r).unwrap();
    println!("two_hop AUC={auc2:.4} random AUC={aucr:.4} gap={:.4}", aucr - auc2);
}

#[test]
fn link_ablation_directionality() {
    let g = toy_link_graph(1);
    for (name, l2, res) in [("full", true, true), ("no_l2", false, true), ("no_res", true, false)] {
        let cfg = link_cfg(l2, res);
        let ctx = prepare_link(&cfg, &g).unwrap();
        let mut vals = vec![];
        for seed in 0..5u64 {
            let trained = train_link(&cfg, &ctx, seed).unwrap();
            vals.push(trained.outcome.best_val);
        }
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        println!("{name}: mean_val_auc={mean:.4} vals={vals:?}");
    }
}
