use hgl_core::training::*;
use hgl_core::synthetic::*;

fn cfg(l2: bool, residual: bool, feat: u8, layers: usize, lr: f64, dim: usize) -> RunConfig {
    RunConfig::from_value(serde_json::json!({
        "task": "link",
        "dataset": "unused",
        "model": {"kind": "simple-hgn", "dim": dim, "edge_dim": 16, "layers": layers, "heads": 2,
                   "beta": 0.0, "slope": 0.01, "dropout": 0.3, "feat": feat,
                   "decoder": "dot", "l2_output": l2, "node_residual": residual},
        "optimizer": {"lr": lr, "weight_decay": 1e-4},
        "training": {"patience": 20, "max_epochs": 120, "seeds": [0], "split_seed": 1}
    })).unwrap()
}

#[test]
fn ablation_grid() {
    let g = toy_link_graph(1);
    for (feat, layers, lr, dim) in [(0u8, 4usize, 0.02, 16usize), (0, 5, 0.01, 16), (0, 6, 0.01, 16)] {
        println!("--- feat={feat} layers={layers} lr={lr} dim={dim}");
        for (name, l2, res) in [("full ", true, true), ("no_l2", false, true), ("no_res", true, false)] {
            let c = cfg(l2, res, feat, layers, lr, dim);
            let ctx = prepare_link(&c, &g).unwrap();
            let mut vals = vec![];
            for seed in 0..5u64 {
                let trained = train_link(&c, &ctx, seed).unwrap();
                vals.push(trained.outcome.best_val);
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let vs: Vec<String> = vals.iter().map(|v| format!("{v:.3}")).collect();
            println!("{name}: mean={mean:.4} {vs:?}");
        }
    }
}

#[test]
fn regime_gap() {
    let g = toy_link_graph(1);
    let c = cfg(true, true, 0, 4, 0.01, 16);
    let ctx2 = prepare_link_with_regime(&c, &g, NegativeRegime::TwoHop).unwrap();
    let ctxr = prepare_link_with_regime(&c, &g, NegativeRegime::Random).unwrap();
    let trained = train_link(&c, &ctx2, 0).unwrap();
    let (hgl_core::graph::SplitSpec::Link { test, test_neg, .. }, hgl_core::graph::SplitSpec::Link { test: tr, test_neg: tnr, .. }) = (&ctx2.split, &ctxr.split) else { panic!() };
    let scorer = trained.link_scorer.as_ref().unwrap();
    let (auc2, _) = eval_link_metrics(&trained.encoder, &trained.store, &ctx2.prepared, scorer, test, test_neg).unwrap();
    let (aucr, _) = eval_link_metrics(&trained.encoder, &trained.store, &ctxr.prepared, scorer, tr, tnr).unwrap();
    println!("two_hop AUC={auc2:.4} random AUC={aucr:.4} gap={:.4}", aucr - auc2);
}

#[test]
fn score_distributions() {
    use hgl_core::models::Mode;
    use hgl_core::tensor::Tape;
    let g = toy_link_graph(1);
    let c = cfg(true, true, 0, 4, 0.01, 16);
    let ctx2 = prepare_link_with_regime(&c, &g, NegativeRegime::TwoHop).unwrap();
    let ctxr = prepare_link_with_regime(&c, &g, NegativeRegime::Random).unwrap();
    let trained = train_link(&c, &ctx2, 0).unwrap();
    let (hgl_core::graph::SplitSpec::Link { test, test_neg, .. }, hgl_core::graph::SplitSpec::Link { test_neg: tnr, .. }) = (&ctx2.split, &ctxr.split) else { panic!() };
    let scorer = trained.link_scorer.as_ref().unwrap();
    let mut tape = Tape::new();
    let emb = trained.encoder.forward(&mut tape, &trained.store, &ctx2.prepared, &mut Mode::Eval).unwrap();
    let show = |name: &str, pairs: &[(usize,usize)], tape: &mut Tape, emb| {
        let v = scorer.pair_logits(tape, &trained.store, emb, pairs).unwrap();
        let d = tape.value(v).data().to_vec();
        let mean: f64 = d.iter().sum::<f64>() / d.len() as f64;
        let mn = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{name}: n={} mean={mean:.3} min={mn:.3} max={mx:.3}", d.len());
    };
    show("test_pos  ", test, &mut tape, emb);
    show("twohop_neg", test_neg, &mut tape, emb);
    show("random_neg", tnr, &mut tape, emb);
    // how many random negatives are same-cluster?
    let same = tnr.iter().filter(|&&(u, w)| {
        let cu = u / 7; // users_per = 7
        let cw = (w - 56) / 12; // items_per = 12
        cu == cw
    }).count();
    println!("random negs same-cluster: {same}/{}", tnr.len());
}

#[test]
fn sampler_diagnostics() {
    let g = toy_link_graph(1);
    let c = cfg(true, true, 0, 4, 0.01, 16);
    let ctx = prepare_link(&c, &g).unwrap();
    let hgl_core::graph::SplitSpec::Link { train, test, test_neg, .. } = &ctx.split else { panic!() };
    let heads: std::collections::BTreeSet<usize> = train.iter().map(|&(u, _)| u).collect();
    let fallback = heads.iter().filter(|&&u| ctx.sampler.used_fallback(u)).count();
    println!("train heads={} fallback={}", heads.len(), fallback);
    let test_heads: std::collections::BTreeSet<usize> = test.iter().map(|&(u,_)| u).collect();
    println!("test pairs={} test_neg={} heads={}", test.len(), test_neg.len(), test_heads.len());
    // distances of test negatives
    let mut d2 = 0; let mut other = 0;
    for &(u, w) in test_neg {
        let dist = {
            let adj = g.undirected_adjacency();
            let mut dq = std::collections::VecDeque::from([(u, 0usize)]);
            let mut vis = vec![false; g.node_count()]; vis[u] = true;
            let mut found = None;
            while let Some((x, dx)) = dq.pop_front() {
                if x == w { found = Some(dx); break; }
                if dx > 3 { continue; }
                for &y in &adj[x] { if !vis[y] { vis[y] = true; dq.push_back((y, dx+1)); } }
            }
            found
        };
        if dist == Some(2) { d2 += 1 } else { other += 1 }
    }
    println!("test_neg at distance 2: {d2}, other: {other}");
    let trained = train_link(&c, &ctx, 0).unwrap();
    for rec in trained.outcome.history.iter().step_by(10) {
        println!("epoch {} loss {:.4} val {:.4}", rec.epoch, rec.train_loss, rec.val_score);
    }
}
