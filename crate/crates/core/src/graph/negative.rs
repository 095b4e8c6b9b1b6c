use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

/// Pairs that must never be emitted as negatives: every stored edge whose
/// endpoint types match the positives' head/tail types, plus the provided
/// positives themselves.
fn positive_pair_set(
    graph: &HeteroGraph,
    positives: &[(usize, usize)],
    head_type: usize,
    tail_type: usize,
) -> BTreeSet<(usize, usize)> {
    let mut set: BTreeSet<(usize, usize)> = positives.iter().copied().collect();
    for (s, d, _) in graph.edges().iter() {
        if graph.node_type_of(s) == head_type && graph.node_type_of(d) == tail_type {
            set.insert((s, d));
        }
    }
    set
}

fn infer_endpoint_types(graph: &HeteroGraph, positives: &[(usize, usize)]) -> Result<(usize, usize)> {
    let (u0, v0) = *positives
        .first()
        .ok_or_else(|| Error::contract("negative sampling: positives must be non-empty"))?;
    let head = graph.node_type_of(u0);
    let tail = graph.node_type_of(v0);
    for &(u, v) in positives {
        if graph.node_type_of(u) != head || graph.node_type_of(v) != tail {
            return Err(Error::contract(
                "negative sampling: positives mix endpoint node types",
            ));
        }
    }
    Ok((head, tail))
}

/// Reusable 2-hop candidate index for one graph and tail type.
///
/// Candidates for a head `u` are nodes at undirected distance exactly two
/// that carry the tail type and are not positives. Heads without candidates
/// fall back to uniform sampling over eligible tail nodes (logged once per
/// sampler build).
pub struct TwoHopSampler {
    candidates: Vec<Vec<usize>>,
    tail_pool: Vec<usize>,
    positives: BTreeSet<(usize, usize)>,
    fallback_heads: BTreeSet<usize>,
}

impl TwoHopSampler {
    pub fn build(
        graph: &HeteroGraph,
        positives: &[(usize, usize)],
    ) -> Result<TwoHopSampler> {
        let (head_type, tail_type) = infer_endpoint_types(graph, positives)?;
        let positive_set = positive_pair_set(graph, positives, head_type, tail_type);
        let adj = graph.undirected_adjacency();
        let heads: BTreeSet<usize> = positives.iter().map(|&(u, _)| u).collect();
        let tail_pool: Vec<usize> = (0..graph.node_count())
            .filter(|&v| graph.node_type_of(v) == tail_type)
            .collect();
        if tail_pool.is_empty() {
            return Err(Error::contract(
                "negative sampling: no nodes of the tail type",
            ));
        }

        let mut candidates = vec![Vec::new(); graph.node_count()];
        let mut fallback_heads = BTreeSet::new();
        for &u in &heads {
            let direct: BTreeSet<usize> = adj[u].iter().copied().collect();
            let mut two_hop: BTreeSet<usize> = BTreeSet::new();
            for &mid in &adj[u] {
                for &w in &adj[mid] {
                    if w != u && !direct.contains(&w) {
                        two_hop.insert(w);
                    }
                }
            }
            let eligible: Vec<usize> = two_hop
                .into_iter()
                .filter(|&w| {
                    graph.node_type_of(w) == tail_type && !positive_set.contains(&(u, w))
                })
                .collect();
            if eligible.is_empty() {
                fallback_heads.insert(u);
            }
            candidates[u] = eligible;
        }
        if !fallback_heads.is_empty() {
            log::warn!(
                "two_hop_negatives: {} of {} heads have no 2-hop candidates, falling back to uniform tails",
                fallback_heads.len(),
                heads.len()
            );
        }
        Ok(TwoHopSampler {
            candidates,
            tail_pool,
            positives: positive_set,
            fallback_heads,
        })
    }

    pub fn used_fallback(&self, head: usize) -> bool {
        self.fallback_heads.contains(&head)
    }

    /// One negative pair per positive (times `count_per_positive`), sampled
    /// with the provided rng.
    pub fn sample(
        &self,
        positives: &[(usize, usize)],
        count_per_positive: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(positives.len() * count_per_positive);
        for &(u, _) in positives {
            for _ in 0..count_per_positive {
                let w = if self.candidates[u].is_empty() {
                    self.sample_uniform_tail(u, rng)?
                } else {
                    *self.candidates[u].choose(rng).expect("non-empty")
                };
                out.push((u, w));
            }
        }
        Ok(out)
    }

    fn sample_uniform_tail(&self, u: usize, rng: &mut impl Rng) -> Result<usize> {
        let eligible: Vec<usize> = self
            .tail_pool
            .iter()
            .copied()
            .filter(|&w| w != u && !self.positives.contains(&(u, w)))
            .collect();
        eligible.choose(rng).copied().ok_or_else(|| {
            Error::contract(format!("negative sampling: no eligible tail nodes for head {u}"))
        })
    }
}

/// Hard negatives: for each positive (u, .) emit (u, w) with w at undirected
/// distance exactly two from u, matching the tail type and excluded from the
/// positive set; 1:1 with `count_per_positive = 1`.
pub fn two_hop_negatives(
    graph: &HeteroGraph,
    positives: &[(usize, usize)],
    count_per_positive: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let sampler = TwoHopSampler::build(graph, positives)?;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    sampler.sample(positives, count_per_positive, &mut rng)
}

/// Easy negatives: uniform over tail-type nodes with positive-exclusion, 1:1.
pub fn random_negatives(
    graph: &HeteroGraph,
    positives: &[(usize, usize)],
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let (head_type, tail_type) = infer_endpoint_types(graph, positives)?;
    let positive_set = positive_pair_set(graph, positives, head_type, tail_type);
    let tail_pool: Vec<usize> = (0..graph.node_count())
        .filter(|&v| graph.node_type_of(v) == tail_type)
        .collect();
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(positives.len());
    for &(u, _) in positives {
        let eligible: Vec<usize> = tail_pool
            .iter()
            .copied()
            .filter(|&w| w != u && !positive_set.contains(&(u, w)))
            .collect();
        let w = eligible.choose(&mut rng).copied().ok_or_else(|| {
            Error::contract(format!("negative sampling: no eligible tail nodes for head {u}"))
        })?;
        out.push((u, w));
    }
    Ok(out)
}
