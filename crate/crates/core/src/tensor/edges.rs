use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Directed typed edges as parallel arrays, one entry per edge.
///
/// Shared by the graph data model and the tape kernels; cloning is cheap
/// (the arrays sit behind `Arc`s).
#[derive(Clone, Debug)]
pub struct EdgeIndex {
    src: Arc<Vec<usize>>,
    dst: Arc<Vec<usize>>,
    etype: Arc<Vec<usize>>,
    by_dst: OnceLock<Arc<Vec<usize>>>,
}

impl EdgeIndex {
    pub fn new(src: Vec<usize>, dst: Vec<usize>, etype: Vec<usize>) -> Result<Self> {
        if src.len() != dst.len() || src.len() != etype.len() {
            return Err(Error::contract(format!(
                "edge arrays must have equal lengths, got src={} dst={} etype={}",
                src.len(),
                dst.len(),
                etype.len()
            )));
        }
        Ok(EdgeIndex {
            src: Arc::new(src),
            dst: Arc::new(dst),
            etype: Arc::new(etype),
            by_dst: OnceLock::new(),
        })
    }

    pub fn empty() -> Self {
        EdgeIndex::new(Vec::new(), Vec::new(), Vec::new()).expect("empty arrays")
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &[usize] {
        &self.src
    }

    pub fn dst(&self) -> &[usize] {
        &self.dst
    }

    pub fn etype(&self) -> &[usize] {
        &self.etype
    }

    pub fn src_arc(&self) -> Arc<Vec<usize>> {
        Arc::clone(&self.src)
    }

    pub fn dst_arc(&self) -> Arc<Vec<usize>> {
        Arc::clone(&self.dst)
    }

    pub fn etype_arc(&self) -> Arc<Vec<usize>> {
        Arc::clone(&self.etype)
    }

    /// Edge positions stably sorted by destination, computed once on demand.
    /// This is the deterministic reduction order used by the kernels.
    pub fn order_by_dst(&self) -> Arc<Vec<usize>> {
        Arc::clone(self.by_dst.get_or_init(|| {
            let mut order: Vec<usize> = (0..self.dst.len()).collect();
            order.sort_by_key(|&e| self.dst[e]);
            Arc::new(order)
        }))
    }

    /// Largest node id referenced plus one, or zero for an empty index.
    pub fn max_node_bound(&self) -> usize {
        self.src
            .iter()
            .chain(self.dst.iter())
            .map(|&v| v + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.len()).map(move |e| (self.src[e], self.dst[e], self.etype[e]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_mismatch_rejected() {
        assert!(EdgeIndex::new(vec![0, 1], vec![1], vec![0, 0]).is_err());
    }

    #[test]
    fn order_by_dst_is_stable() {
        let e = EdgeIndex::new(vec![0, 1, 2, 3], vec![2, 0, 2, 0], vec![0; 4]).unwrap();
        assert_eq!(e.order_by_dst().as_slice(), &[1, 3, 0, 2]);
    }
}
