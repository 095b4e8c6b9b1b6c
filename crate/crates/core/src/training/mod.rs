//! Full-graph training loops per task, seed management, the five-seed
//! benchmark protocol, and the test-leakage audit.

pub mod config;
pub mod early_stop;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::decoders::{
    bpr_loss, bpr_mf_pretrain, classification_loss, DecoderKind, LabelBatch, LinkScorer,
    MfEmbeddings, MfTrainConfig, RecScorer,
};
use crate::error::{Error, Result};
use crate::graph::{
    random_negatives, split_edges, split_interactions, split_nodes, two_hop_negatives,
    HeteroGraph, Labels, SplitSpec, TwoHopSampler,
};
use crate::metrics::{macro_micro_f1_multi, macro_micro_f1_single, mrr_by_head, ndcg_at_k, recall_at_k, roc_auc, RankedHead};
use crate::models::{Encoder, EncoderSpec, Mode, ModelKind, Task};
use crate::report::{aggregate, EvalReport};
use crate::tensor::{Adam, DenseMatrix, ParamStore, Tape};

pub use config::{ModelConfig, OptimizerConfig, PretrainConfig, RunConfig, TrainingConfig};
pub use early_stop::EarlyStop;

/// Negative regime for fixed evaluation pairs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativeRegime {
    #[default]
    TwoHop,
    Random,
}

/// Ids touched by the loss during training, kept for the leakage audit.
/// Positive supervision pairs and sampled negative pairs are tracked
/// separately: a uniform negative draw colliding with a held-out pair is
/// noise, not information flow, and excluding such draws would itself
/// require reading the test set.
#[derive(Clone, Debug, Default)]
pub struct LeakAudit {
    pub nodes: BTreeSet<usize>,
    pub positive_pairs: BTreeSet<(usize, usize)>,
    pub negative_pairs: BTreeSet<(usize, usize)>,
}

impl LeakAudit {
    pub fn record_nodes(&mut self, ids: impl IntoIterator<Item = usize>) {
        self.nodes.extend(ids);
    }

    pub fn record_positive_pairs(&mut self, pairs: impl IntoIterator<Item = (usize, usize)>) {
        self.positive_pairs.extend(pairs);
    }

    pub fn record_negative_pairs(&mut self, pairs: impl IntoIterator<Item = (usize, usize)>) {
        self.negative_pairs.extend(pairs);
    }

    /// Error when any test node id was reachable from the loss.
    pub fn check_nodes_disjoint(&self, test_ids: &[usize]) -> Result<()> {
        let overlap: Vec<usize> = test_ids
            .iter()
            .copied()
            .filter(|v| self.nodes.contains(v))
            .collect();
        if overlap.is_empty() {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "test leakage: {} test node ids touched by the loss (first: {})",
                overlap.len(),
                overlap[0]
            )))
        }
    }

    /// Error when any test positive pair carried supervision; sampled
    /// negative collisions are logged, not fatal.
    pub fn check_pairs_disjoint(&self, test_pairs: &[(usize, usize)]) -> Result<()> {
        let overlap: Vec<(usize, usize)> = test_pairs
            .iter()
            .copied()
            .filter(|p| self.positive_pairs.contains(p))
            .collect();
        if !overlap.is_empty() {
            return Err(Error::contract(format!(
                "test leakage: {} test pairs used as training positives (first: {:?})",
                overlap.len(),
                overlap[0]
            )));
        }
        let noise = test_pairs
            .iter()
            .filter(|p| self.negative_pairs.contains(p))
            .count();
        if noise > 0 {
            log::warn!("{noise} uniform negative draws coincided with test pairs (noise, not leakage)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_score: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_val: f64,
    pub best_epoch: usize,
    pub test_metrics: BTreeMap<String, f64>,
    pub diverged: bool,
    pub audit: LeakAudit,
}

/// Trained parameters plus the encoder bound to the training graph.
pub struct Trained {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub link_scorer: Option<LinkScorer>,
    pub decoder_used: Option<DecoderKind>,
    pub outcome: TrainOutcome,
}

fn encoder_spec(cfg: &RunConfig, graph: &HeteroGraph, classes: Option<usize>) -> Result<EncoderSpec> {
    Ok(EncoderSpec {
        kind: cfg.model.kind,
        task: cfg.task,
        input_dim: cfg.model.dim,
        layer_dims: cfg.layer_dims(classes)?,
        heads: cfg.model.heads,
        edge_dim: cfg.model.edge_dim,
        beta: cfg.model.beta,
        slope: cfg.model.slope,
        feature_mode: cfg.feature_mode(graph)?,
        l2_output: cfg.model.l2_output,
        node_residual: cfg.model.node_residual,
        type_embedding: cfg.model.type_embedding,
    })
}

/// Final embedding dimension the encoder will produce for `spec`.
pub fn encoder_output_dim(spec: &EncoderSpec) -> usize {
    let last = *spec.layer_dims.last().expect("non-empty dims");
    match (spec.kind, spec.task) {
        (ModelKind::SimpleHgn, Task::Link) => {
            let hidden: usize = spec.layer_dims[..spec.layer_dims.len() - 1]
                .iter()
                .map(|d| d * spec.heads)
                .sum();
            spec.input_dim + hidden + last
        }
        _ => last,
    }
}

// ---------------------------------------------------------------------------
// Node classification
// ---------------------------------------------------------------------------

fn node_label_batch(graph: &HeteroGraph, ids: &[usize]) -> Result<LabelBatch> {
    let labels = graph
        .labels()
        .ok_or_else(|| Error::contract("node task requires labels"))?;
    match labels {
        Labels::Single { by_node, .. } => {
            let ys = ids
                .iter()
                .map(|v| {
                    by_node
                        .get(v)
                        .copied()
                        .ok_or_else(|| Error::contract(format!("node {v} has no label")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LabelBatch::Single(Arc::new(ys)))
        }
        Labels::Multi { classes, by_node } => {
            let mut target = DenseMatrix::zeros(ids.len(), *classes);
            for (r, v) in ids.iter().enumerate() {
                let cs = by_node
                    .get(v)
                    .ok_or_else(|| Error::contract(format!("node {v} has no label")))?;
                for &c in cs {
                    target.set(r, c, 1.0);
                }
            }
            Ok(LabelBatch::Multi(Arc::new(target)))
        }
    }
}

/// Predict classes for `ids` from eval-mode logits; returns (macro, micro).
fn eval_node_f1(
    encoder: &Encoder,
    store: &ParamStore,
    graph: &HeteroGraph,
    ids: &[usize],
) -> Result<(f64, f64)> {
    let labels = graph.labels().expect("checked by caller");
    let mut tape = Tape::new();
    let h = encoder.forward(&mut tape, store, graph, &mut Mode::Eval)?;
    let logits = tape.gather_rows(h, Arc::new(ids.to_vec()))?;
    let logits = tape.value(logits);
    match labels {
        Labels::Single { by_node, .. } => {
            let pred: Vec<usize> = (0..ids.len())
                .map(|r| {
                    let row = logits.row(r);
                    row.iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                        .map(|(c, _)| c)
                        .expect("non-empty row")
                })
                .collect();
            let truth: Vec<usize> = ids.iter().map(|v| by_node[v]).collect();
            macro_micro_f1_single(&pred, &truth, labels.classes())
        }
        Labels::Multi { classes, by_node } => {
            let pred: Vec<Vec<bool>> = (0..ids.len())
                .map(|r| logits.row(r).iter().map(|&z| z > 0.0).collect())
                .collect();
            let truth: Vec<Vec<bool>> = ids
                .iter()
                .map(|v| {
                    let mut row = vec![false; *classes];
                    for &c in &by_node[v] {
                        row[c] = true;
                    }
                    row
                })
                .collect();
            macro_micro_f1_multi(&pred, &truth)
        }
    }
}

fn eval_node_accuracy(
    encoder: &Encoder,
    store: &ParamStore,
    graph: &HeteroGraph,
    ids: &[usize],
) -> Result<f64> {
    let labels = graph.labels().expect("checked by caller");
    match labels {
        Labels::Single { by_node, .. } => {
            let mut tape = Tape::new();
            let h = encoder.forward(&mut tape, store, graph, &mut Mode::Eval)?;
            let logits = tape.gather_rows(h, Arc::new(ids.to_vec()))?;
            let logits = tape.value(logits);
            let correct = ids
                .iter()
                .enumerate()
                .filter(|(r, v)| {
                    let row = logits.row(*r);
                    let pred = row
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                        .map(|(c, _)| c)
                        .expect("non-empty row");
                    pred == by_node[*v]
                })
                .count();
            Ok(correct as f64 / ids.len().max(1) as f64)
        }
        Labels::Multi { .. } => Ok(eval_node_f1(encoder, store, graph, ids)?.1),
    }
}

/// Prepared node task: the encoding graph (reverses materialized) and the
/// label split. Shared by every seed.
pub struct NodeContext {
    pub prepared: HeteroGraph,
    pub split: SplitSpec,
}

pub fn prepare_node(cfg: &RunConfig, graph: &HeteroGraph) -> Result<NodeContext> {
    let split = split_nodes(graph, (0.24, 0.06, 0.70), cfg.training.split_seed)?;
    Ok(NodeContext {
        prepared: graph.materialize_reverses(),
        split,
    })
}

pub fn train_node(cfg: &RunConfig, ctx: &NodeContext, seed: u64) -> Result<Trained> {
    let SplitSpec::Node { train, valid, test, .. } = &ctx.split else {
        return Err(Error::contract("train_node needs a node split"));
    };
    let graph = &ctx.prepared;
    let classes = graph
        .labels()
        .ok_or_else(|| Error::contract("node task requires labels"))?
        .classes();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let spec = encoder_spec(cfg, graph, Some(classes))?;
    let encoder = Encoder::build(&mut store, graph, &spec, &mut rng)?;
    let mut adam = Adam::new(cfg.optimizer.lr, cfg.optimizer.weight_decay)?;
    let mut early = EarlyStop::new(cfg.training.patience);
    let mut audit = LeakAudit::default();
    audit.record_nodes(train.iter().copied());

    let train_ids = Arc::new(train.clone());
    let batch = node_label_batch(graph, train)?;
    let mut history = Vec::new();
    let mut diverged = false;

    for epoch in 0..cfg.training.max_epochs {
        let loss_val = {
            let mut tape = Tape::new();
            let mut mode = Mode::Train {
                dropout: cfg.model.dropout,
                rng: &mut rng,
            };
            let h = encoder.forward(&mut tape, &store, graph, &mut mode)?;
            let logits = tape.gather_rows(h, Arc::clone(&train_ids))?;
            let loss = classification_loss(&mut tape, logits, &batch)?;
            let loss_val = tape.value(loss).scalar_value();
            if loss_val.is_finite() {
                let grads = tape.backward(loss)?;
                adam.step(&mut store, &grads)?;
            }
            loss_val
        };
        if !loss_val.is_finite() {
            log::warn!("epoch {epoch}: non-finite loss, stopping with last-good snapshot");
            diverged = true;
            break;
        }
        let val_score = if valid.is_empty() {
            -loss_val
        } else {
            eval_node_f1(&encoder, &store, graph, valid)?.1
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_val,
            val_score,
        });
        if early.observe(epoch, val_score, &store) {
            break;
        }
    }
    early.restore(&mut store);

    let mut test_metrics = BTreeMap::new();
    test_metrics.insert(
        "train_accuracy".to_string(),
        eval_node_accuracy(&encoder, &store, graph, train)?,
    );
    if !test.is_empty() {
        let (macro_f1, micro_f1) = eval_node_f1(&encoder, &store, graph, test)?;
        test_metrics.insert("macro_f1".to_string(), macro_f1);
        test_metrics.insert("micro_f1".to_string(), micro_f1);
    }
    audit.check_nodes_disjoint(test)?;

    Ok(Trained {
        store,
        encoder,
        link_scorer: None,
        decoder_used: None,
        outcome: TrainOutcome {
            best_val: early.best_score(),
            best_epoch: early.best_epoch(),
            history,
            test_metrics,
            diverged,
            audit,
        },
    })
}

// ---------------------------------------------------------------------------
// Link prediction
// ---------------------------------------------------------------------------

/// Prepared link task, shared across seeds: the training graph with
/// reverses, the split with fixed evaluation negatives, and the 2-hop
/// sampler (built on the full graph) for per-epoch training negatives.
pub struct LinkContext {
    pub prepared: HeteroGraph,
    pub split: SplitSpec,
    pub sampler: TwoHopSampler,
    pub target_etype: usize,
}

pub fn prepare_link(cfg: &RunConfig, graph: &HeteroGraph) -> Result<LinkContext> {
    prepare_link_with_regime(cfg, graph, NegativeRegime::TwoHop)
}

pub fn prepare_link_with_regime(
    cfg: &RunConfig,
    graph: &HeteroGraph,
    regime: NegativeRegime,
) -> Result<LinkContext> {
    let etype_name = graph
        .task()
        .and_then(|t| t.target_edge_type.clone())
        .ok_or_else(|| Error::contract("link task needs a target_edge_type in the dataset meta"))?;
    let target_etype = graph
        .edge_type_id(&etype_name)
        .ok_or_else(|| Error::contract(format!("unknown target edge type '{etype_name}'")))?;
    let (train_graph, split) = split_edges(
        graph,
        target_etype,
        (0.81, 0.09, 0.10),
        cfg.training.split_seed,
    )?;
    let SplitSpec::Link {
        seed,
        target_etype,
        train,
        valid,
        test,
        ..
    } = split
    else {
        unreachable!("split_edges returns a link split")
    };
    // Validation negatives mirror the test regime.
    let (valid_neg, test_neg) = match regime {
        NegativeRegime::TwoHop => (
            two_hop_negatives(graph, &valid, 1, seed ^ 0x1001)?,
            two_hop_negatives(graph, &test, 1, seed ^ 0x1002)?,
        ),
        NegativeRegime::Random => (
            random_negatives(graph, &valid, seed ^ 0x1001)?,
            random_negatives(graph, &test, seed ^ 0x1002)?,
        ),
    };
    let sampler = TwoHopSampler::build(graph, &train)?;
    Ok(LinkContext {
        prepared: train_graph.materialize_reverses(),
        split: SplitSpec::Link {
            seed,
            target_etype,
            train,
            valid,
            test,
            valid_neg,
            test_neg,
        },
        sampler,
        target_etype,
    })
}

/// Scores for fixed pairs in eval mode.
fn eval_pair_scores(
    encoder: &Encoder,
    store: &ParamStore,
    graph: &HeteroGraph,
    scorer: &LinkScorer,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let emb = encoder.forward(&mut tape, store, graph, &mut Mode::Eval)?;
    let logits = scorer.pair_logits(&mut tape, store, emb, pairs)?;
    Ok(tape.value(logits).data().to_vec())
}

/// ROC-AUC over pos+neg pairs and MRR clustered by head.
pub fn eval_link_metrics(
    encoder: &Encoder,
    store: &ParamStore,
    graph: &HeteroGraph,
    scorer: &LinkScorer,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<(f64, f64)> {
    let mut all_pairs: Vec<(usize, usize)> = positives.to_vec();
    all_pairs.extend_from_slice(negatives);
    let scores = eval_pair_scores(encoder, store, graph, scorer, &all_pairs)?;
    let labels: Vec<bool> = (0..all_pairs.len()).map(|i| i < positives.len()).collect();
    let auc = roc_auc(&scores, &labels)?;

    let mut by_head: BTreeMap<usize, RankedHead> = BTreeMap::new();
    for (i, &(u, _)) in all_pairs.iter().enumerate() {
        let entry = by_head.entry(u).or_insert_with(|| RankedHead {
            scores: Vec::new(),
            positive: Vec::new(),
        });
        entry.scores.push(scores[i]);
        entry.positive.push(labels[i]);
    }
    // Heads whose negatives all landed elsewhere still need a positive;
    // heads with only negatives cannot be ranked and are dropped.
    let heads: Vec<RankedHead> = by_head
        .into_values()
        .filter(|h| h.positive.iter().any(|&p| p))
        .collect();
    let mrr = mrr_by_head(&heads)?;
    Ok((auc, mrr))
}

fn train_link_one(
    cfg: &RunConfig,
    ctx: &LinkContext,
    decoder: DecoderKind,
    seed: u64,
) -> Result<Trained> {
    let SplitSpec::Link {
        train,
        valid,
        test,
        valid_neg,
        test_neg,
        ..
    } = &ctx.split
    else {
        return Err(Error::contract("train_link needs a link split"));
    };
    let graph = &ctx.prepared;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let spec = encoder_spec(cfg, graph, None)?;
    let encoder = Encoder::build(&mut store, graph, &spec, &mut rng)?;
    let etype_name = graph.edge_types()[ctx.target_etype].name.clone();
    let scorer = match decoder {
        DecoderKind::Dot => LinkScorer::new_dot(),
        DecoderKind::Distmult => {
            LinkScorer::new_distmult(&mut store, encoder_output_dim(&spec), &etype_name)
        }
        DecoderKind::Auto => return Err(Error::contract("auto decoder resolved by caller")),
    };
    let mut adam = Adam::new(cfg.optimizer.lr, cfg.optimizer.weight_decay)?;
    let mut early = EarlyStop::new(cfg.training.patience);
    let mut audit = LeakAudit::default();
    audit.record_positive_pairs(train.iter().copied());

    let mut history = Vec::new();
    let mut diverged = false;
    for epoch in 0..cfg.training.max_epochs {
        // fresh 2-hop training negatives every epoch, seed-derived
        let negatives = ctx.sampler.sample(train, 1, &mut rng)?;
        audit.record_negative_pairs(negatives.iter().copied());
        let loss_val = {
            let mut tape = Tape::new();
            let mut mode = Mode::Train {
                dropout: cfg.model.dropout,
                rng: &mut rng,
            };
            let emb = encoder.forward(&mut tape, &store, graph, &mut mode)?;
            let mut pairs: Vec<(usize, usize)> = train.clone();
            pairs.extend_from_slice(&negatives);
            let logits = scorer.pair_logits(&mut tape, &store, emb, &pairs)?;
            let mut targets = DenseMatrix::zeros(pairs.len(), 1);
            for r in 0..train.len() {
                targets.set(r, 0, 1.0);
            }
            let loss = tape.bce_with_logits(logits, Arc::new(targets))?;
            let loss_val = tape.value(loss).scalar_value();
            if loss_val.is_finite() {
                let grads = tape.backward(loss)?;
                adam.step(&mut store, &grads)?;
            }
            loss_val
        };
        if !loss_val.is_finite() {
            log::warn!("epoch {epoch}: non-finite loss, stopping with last-good snapshot");
            diverged = true;
            break;
        }
        let val_score = if valid.is_empty() {
            -loss_val
        } else {
            eval_link_metrics(&encoder, &store, graph, &scorer, valid, valid_neg)?.0
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_val,
            val_score,
        });
        if early.observe(epoch, val_score, &store) {
            break;
        }
    }
    early.restore(&mut store);

    let mut test_metrics = BTreeMap::new();
    if !test.is_empty() {
        let (auc, mrr) = eval_link_metrics(&encoder, &store, graph, &scorer, test, test_neg)?;
        test_metrics.insert("roc_auc".to_string(), auc);
        test_metrics.insert("mrr".to_string(), mrr);
    }
    audit.check_pairs_disjoint(test)?;

    Ok(Trained {
        store,
        encoder,
        link_scorer: Some(scorer),
        decoder_used: Some(decoder),
        outcome: TrainOutcome {
            best_val: early.best_score(),
            best_epoch: early.best_epoch(),
            history,
            test_metrics,
            diverged,
            audit,
        },
    })
}

/// Train a link model. `decoder: auto` trains both dot and DistMult and
/// keeps the one with the better validation score.
pub fn train_link(cfg: &RunConfig, ctx: &LinkContext, seed: u64) -> Result<Trained> {
    match cfg.model.decoder {
        DecoderKind::Auto => {
            let dot = train_link_one(cfg, ctx, DecoderKind::Dot, seed)?;
            let dm = train_link_one(cfg, ctx, DecoderKind::Distmult, seed)?;
            Ok(if dm.outcome.best_val >= dot.outcome.best_val {
                dm
            } else {
                dot
            })
        }
        d => train_link_one(cfg, ctx, d, seed),
    }
}

// ---------------------------------------------------------------------------
// Recommendation
// ---------------------------------------------------------------------------

/// Prepared recommendation task: graph rebuilt from training interactions
/// only, the train/heldout/test interaction split, and the frozen
/// pretrained bias scorer.
pub struct RecContext {
    pub prepared: HeteroGraph,
    /// Training interactions (heldout removed).
    pub train: Vec<(usize, usize)>,
    /// Heldout slice of train driving early stopping.
    pub heldout: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub scorer: RecScorer,
    pub user_nodes: Vec<usize>,
    pub item_nodes: Vec<usize>,
}

pub fn prepare_rec(cfg: &RunConfig, graph: &HeteroGraph) -> Result<RecContext> {
    let task = graph
        .task()
        .ok_or_else(|| Error::contract("rec task needs task metadata in the dataset"))?;
    let etype_name = task
        .target_edge_type
        .clone()
        .ok_or_else(|| Error::contract("rec task needs a target_edge_type in the dataset meta"))?;
    let etype = graph
        .edge_type_id(&etype_name)
        .ok_or_else(|| Error::contract(format!("unknown target edge type '{etype_name}'")))?;
    let user_type = graph.edge_types()[etype]
        .src_type
        .ok_or_else(|| Error::contract("target edge type must declare endpoint types"))?;
    let item_type = graph.edge_types()[etype]
        .dst_type
        .ok_or_else(|| Error::contract("target edge type must declare endpoint types"))?;

    let pairs = graph.edges_of_type(etype);
    let SplitSpec::Rec { train: train_all, test, .. } =
        split_interactions(&pairs, 0.2, cfg.training.split_seed)?
    else {
        unreachable!("split_interactions returns a rec split")
    };
    let SplitSpec::Rec { train, test: heldout, .. } = split_interactions(
        &train_all,
        cfg.training.rec_valid_fraction,
        cfg.training.split_seed.wrapping_add(1),
    )?
    else {
        unreachable!("split_interactions returns a rec split")
    };

    // Rebuild the graph from training interactions only: test and heldout
    // pairs must not be visible to message passing.
    let keep: BTreeSet<(usize, usize)> = train.iter().copied().collect();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut et = Vec::new();
    for (s, d, t) in graph.edges().iter() {
        if t == etype && !keep.contains(&(s, d)) {
            continue;
        }
        src.push(s);
        dst.push(d);
        et.push(t);
    }
    let prepared = graph
        .with_edges(crate::tensor::EdgeIndex::new(src, dst, et)?)?
        .materialize_reverses();

    let user_nodes = graph.nodes_of_type(user_type);
    let item_nodes = graph.nodes_of_type(item_type);

    // Frozen bias embeddings: load, or pretrain on the training slice.
    let mf = match &cfg.pretrain.path {
        Some(path) => MfEmbeddings::load(path)?,
        None => {
            let rows: Vec<(usize, usize)> = train
                .iter()
                .map(|&(u, v)| (graph.row_in_type(u), graph.row_in_type(v)))
                .collect();
            let (mf, _) = bpr_mf_pretrain(
                &rows,
                user_nodes.len(),
                item_nodes.len(),
                &MfTrainConfig {
                    dim: cfg.pretrain.dim,
                    epochs: cfg.pretrain.epochs,
                    lr: cfg.pretrain.lr,
                    reg: cfg.pretrain.reg,
                    seed: cfg.training.split_seed,
                },
            )?;
            mf
        }
    };
    let scorer = RecScorer::new(mf, &user_nodes, &item_nodes)?;
    Ok(RecContext {
        prepared,
        train,
        heldout,
        test,
        scorer,
        user_nodes,
        item_nodes,
    })
}

/// Ranked item ids per user (descending score, ties by item id), excluding
/// each user's `exclude` items from the candidates.
fn rec_rankings(
    encoder: &Encoder,
    store: &ParamStore,
    graph: &HeteroGraph,
    scorer: &RecScorer,
    users: &[usize],
    item_nodes: &[usize],
    exclude: &BTreeMap<usize, BTreeSet<usize>>,
) -> Result<Vec<Vec<usize>>> {
    let mut tape = Tape::new();
    let emb = encoder.forward(&mut tape, store, graph, &mut Mode::Eval)?;
    let emb = tape.value(emb);
    let mut out = Vec::with_capacity(users.len());
    for &u in users {
        let skip = exclude.get(&u);
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(item_nodes.len());
        for &v in item_nodes {
            if skip.is_some_and(|s| s.contains(&v)) {
                continue;
            }
            let s = crate::decoders::dot_score(emb.row(u), emb.row(v)) + scorer.bias(u, v)?;
            scored.push((s, v));
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores").then(a.1.cmp(&b.1)));
        out.push(scored.into_iter().map(|(_, v)| v).collect());
    }
    Ok(out)
}

fn rec_eval(
    encoder: &Encoder,
    store: &ParamStore,
    graph: &HeteroGraph,
    scorer: &RecScorer,
    item_nodes: &[usize],
    relevant_pairs: &[(usize, usize)],
    exclude_pairs: &[&[(usize, usize)]],
    k: usize,
) -> Result<(f64, f64)> {
    let mut relevant: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(u, v) in relevant_pairs {
        relevant.entry(u).or_default().insert(v);
    }
    let mut exclude: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for list in exclude_pairs {
        for &(u, v) in *list {
            exclude.entry(u).or_default().insert(v);
        }
    }
    let users: Vec<usize> = relevant.keys().copied().collect();
    let rankings = rec_rankings(encoder, store, graph, scorer, &users, item_nodes, &exclude)?;
    let rel_sets: Vec<BTreeSet<usize>> = users.iter().map(|u| relevant[u].clone()).collect();
    Ok((
        recall_at_k(&rankings, &rel_sets, k)?,
        ndcg_at_k(&rankings, &rel_sets, k)?,
    ))
}

pub fn train_rec(cfg: &RunConfig, ctx: &RecContext, seed: u64) -> Result<Trained> {
    let graph = &ctx.prepared;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let spec = encoder_spec(cfg, graph, None)?;
    let encoder = Encoder::build(&mut store, graph, &spec, &mut rng)?;
    let mut adam = Adam::new(cfg.optimizer.lr, cfg.optimizer.weight_decay)?;
    let mut early = EarlyStop::new(cfg.training.patience);
    let mut audit = LeakAudit::default();
    audit.record_positive_pairs(ctx.train.iter().copied());

    // Items each user is known to interact with during training (train +
    // heldout): the negative pool excludes them.
    let mut known: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(u, v) in ctx.train.iter().chain(&ctx.heldout) {
        known.entry(u).or_default().insert(v);
    }

    let mut order: Vec<usize> = (0..ctx.train.len()).collect();
    let mut history = Vec::new();
    let mut diverged = false;
    'outer: for epoch in 0..cfg.training.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.training.batch_size.max(1)) {
            let pos: Vec<(usize, usize)> = chunk.iter().map(|&i| ctx.train[i]).collect();
            let neg: Vec<(usize, usize)> = pos
                .iter()
                .map(|&(u, _)| {
                    let banned = &known[&u];
                    if banned.len() >= ctx.item_nodes.len() {
                        return Err(Error::contract(format!(
                            "user {u} interacted with every item; cannot sample a negative"
                        )));
                    }
                    let w = loop {
                        let cand = ctx.item_nodes[rng.gen_range(0..ctx.item_nodes.len())];
                        if !banned.contains(&cand) {
                            break cand;
                        }
                    };
                    Ok((u, w))
                })
                .collect::<Result<_>>()?;
            audit.record_negative_pairs(neg.iter().copied());
            let mut tape = Tape::new();
            let mut mode = Mode::Train {
                dropout: cfg.model.dropout,
                rng: &mut rng,
            };
            let emb = encoder.forward(&mut tape, &store, graph, &mut mode)?;
            let f_pos = ctx.scorer.pair_scores(&mut tape, emb, &pos)?;
            let f_neg = ctx.scorer.pair_scores(&mut tape, emb, &neg)?;
            let loss = bpr_loss(&mut tape, f_pos, f_neg)?;
            let loss_val = tape.value(loss).scalar_value();
            if !loss_val.is_finite() {
                log::warn!("epoch {epoch}: non-finite loss, stopping with last-good snapshot");
                diverged = true;
                break 'outer;
            }
            let grads = tape.backward(loss)?;
            adam.step(&mut store, &grads)?;
            epoch_loss += loss_val;
            batches += 1;
        }
        let train_loss = epoch_loss / batches.max(1) as f64;
        let val_score = if ctx.heldout.is_empty() {
            -train_loss
        } else {
            // candidates exclude the training items still in the graph
            rec_eval(
                &encoder,
                &store,
                graph,
                &ctx.scorer,
                &ctx.item_nodes,
                &ctx.heldout,
                &[&ctx.train],
                20,
            )?
            .0
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_score,
        });
        if early.observe(epoch, val_score, &store) {
            break;
        }
    }
    early.restore(&mut store);

    let mut test_metrics = BTreeMap::new();
    if !ctx.test.is_empty() {
        let (recall, ndcg) = rec_eval(
            &encoder,
            &store,
            graph,
            &ctx.scorer,
            &ctx.item_nodes,
            &ctx.test,
            &[&ctx.train, &ctx.heldout],
            20,
        )?;
        test_metrics.insert("recall@20".to_string(), recall);
        test_metrics.insert("ndcg@20".to_string(), ndcg);
    }
    audit.check_pairs_disjoint(&ctx.test)?;

    Ok(Trained {
        store,
        encoder,
        link_scorer: None,
        decoder_used: None,
        outcome: TrainOutcome {
            best_val: early.best_score(),
            best_epoch: early.best_epoch(),
            history,
            test_metrics,
            diverged,
            audit,
        },
    })
}

// ---------------------------------------------------------------------------
// Benchmark protocol
// ---------------------------------------------------------------------------

/// Task context prepared once and shared by every seed.
pub enum TaskContext {
    Node(NodeContext),
    Link(LinkContext),
    Rec(RecContext),
}

pub fn prepare_task(cfg: &RunConfig, graph: &HeteroGraph) -> Result<TaskContext> {
    match cfg.task {
        Task::Node => Ok(TaskContext::Node(prepare_node(cfg, graph)?)),
        Task::Link => Ok(TaskContext::Link(prepare_link(cfg, graph)?)),
        Task::Rec => Ok(TaskContext::Rec(prepare_rec(cfg, graph)?)),
    }
}

pub fn train_task(cfg: &RunConfig, ctx: &TaskContext, seed: u64) -> Result<Trained> {
    match ctx {
        TaskContext::Node(c) => train_node(cfg, c, seed),
        TaskContext::Link(c) => train_link(cfg, c, seed),
        TaskContext::Rec(c) => train_rec(cfg, c, seed),
    }
}

fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Gcn => "gcn",
        ModelKind::Gat => "gat",
        ModelKind::Rgcn => "rgcn",
        ModelKind::SimpleHgn => "simple-hgn",
    }
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Node => "node",
        Task::Link => "link",
        Task::Rec => "rec",
    }
}

/// Execute train+test once per seed and aggregate mean and standard
/// deviation. `parallel` > 1 fans seeds out over threads with a
/// deterministic merge in seed order.
pub fn run_benchmark(cfg: &RunConfig, graph: &HeteroGraph, parallel: usize) -> Result<EvalReport> {
    let started = Instant::now();
    let ctx = prepare_task(cfg, graph)?;
    let seeds = cfg.training.seeds.clone();
    let mut per_seed: Vec<BTreeMap<String, f64>> = Vec::with_capacity(seeds.len());

    if parallel <= 1 || seeds.len() <= 1 {
        for &seed in &seeds {
            per_seed.push(train_task(cfg, &ctx, seed)?.outcome.test_metrics);
        }
    } else {
        let mut results: Vec<Option<Result<BTreeMap<String, f64>>>> =
            (0..seeds.len()).map(|_| None).collect();
        let ctx_ref = &ctx;
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (i, &seed) in seeds.iter().enumerate() {
                let cfg = cfg.clone();
                handles.push((
                    i,
                    scope.spawn(move || train_task(&cfg, ctx_ref, seed).map(|t| t.outcome.test_metrics)),
                ));
            }
            for (i, h) in handles {
                results[i] = Some(h.join().expect("training thread panicked"));
            }
        });
        for r in results {
            per_seed.push(r.expect("all seeds joined")?);
        }
    }

    let report = aggregate(
        task_name(cfg.task),
        &cfg.dataset.display().to_string(),
        model_name(cfg.model.kind),
        &seeds,
        &per_seed,
        serde_json::to_value(cfg)?,
        started.elapsed().as_secs_f64(),
    )?;
    if let Some(dir) = &cfg.output {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json()?)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SavedParam {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Trained parameters plus the exact config and seed that produced them.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    params: Vec<SavedParam>,
}

impl Checkpoint {
    pub fn from_store(config: &RunConfig, seed: u64, store: &ParamStore) -> Checkpoint {
        let params = store
            .ids()
            .map(|id| {
                let v = store.value(id);
                SavedParam {
                    name: store.name(id).to_string(),
                    rows: v.rows(),
                    cols: v.cols(),
                    data: v.data().to_vec(),
                }
            })
            .collect();
        Checkpoint {
            config: config.clone(),
            seed,
            params,
        }
    }

    /// Overwrite matching parameters in `store`; every name must exist with
    /// the same shape on both sides.
    pub fn apply_to(&self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.params.len() {
            return Err(Error::contract(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for p in &self.params {
            let id = store
                .find(&p.name)
                .ok_or_else(|| Error::contract(format!("checkpoint parameter '{}' not in model", p.name)))?;
            let m = DenseMatrix::from_vec(p.rows, p.cols, p.data.clone())?;
            if m.shape() != store.value(id).shape() {
                return Err(Error::contract(format!(
                    "checkpoint parameter '{}' has shape {}x{}, model expects {}x{}",
                    p.name,
                    p.rows,
                    p.cols,
                    store.value(id).rows(),
                    store.value(id).cols()
                )));
            }
            *store.value_mut(id) = m;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Dataset {
            path: path.as_ref().display().to_string(),
            msg: format!("cannot read checkpoint: {e}"),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}
