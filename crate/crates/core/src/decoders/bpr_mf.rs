//! Minimal BPR matrix-factorization pretrainer. Its only job is to supply
//! the frozen bias embeddings consumed by the recommendation scorer.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, DenseMatrix};

const MAGIC: &[u8; 8] = b"HGLBPRMF";

/// Factor tables from BPR-MF pretraining, indexed by within-type row.
#[derive(Clone, Debug, PartialEq)]
pub struct MfEmbeddings {
    pub dim: usize,
    pub users: DenseMatrix,
    pub items: DenseMatrix,
}

pub struct MfTrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub reg: f64,
    pub seed: u64,
}

impl Default for MfTrainConfig {
    fn default() -> Self {
        MfTrainConfig {
            dim: 64,
            epochs: 50,
            lr: 0.05,
            reg: 1e-4,
            seed: 0,
        }
    }
}

/// Train user/item factors on the training interactions with SGD over BPR
/// triples (one uniform negative per positive per epoch, resampled every
/// epoch). Deterministic given the seed. Users or items that never appear
/// in the interactions end with zero rows (warned).
///
/// Returns the embeddings and the per-epoch mean loss curve.
pub fn bpr_mf_pretrain(
    interactions: &[(usize, usize)],
    num_users: usize,
    num_items: usize,
    config: &MfTrainConfig,
) -> Result<(MfEmbeddings, Vec<f64>)> {
    if interactions.is_empty() {
        return Err(Error::contract("bpr_mf_pretrain: empty interaction list"));
    }
    for &(u, i) in interactions {
        if u >= num_users {
            return Err(Error::Index {
                op: "bpr_mf_pretrain user",
                index: u,
                bound: num_users,
            });
        }
        if i >= num_items {
            return Err(Error::Index {
                op: "bpr_mf_pretrain item",
                index: i,
                bound: num_items,
            });
        }
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(config.seed);
    let scale = 0.1;
    let mut users = DenseMatrix::zeros(num_users, config.dim);
    let mut items = DenseMatrix::zeros(num_items, config.dim);
    for v in users.data_mut() {
        *v = rng.gen_range(-scale..scale);
    }
    for v in items.data_mut() {
        *v = rng.gen_range(-scale..scale);
    }

    let mut seen: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_users];
    for &(u, i) in interactions {
        seen[u].insert(i);
    }

    let mut order: Vec<usize> = (0..interactions.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &t in &order {
            let (u, pos) = interactions[t];
            // uniform negative over items the user has not interacted with
            let neg = if seen[u].len() >= num_items {
                continue; // user saw everything; nothing to contrast
            } else {
                loop {
                    let cand = rng.gen_range(0..num_items);
                    if !seen[u].contains(&cand) {
                        break cand;
                    }
                }
            };
            let x: f64 = (0..config.dim)
                .map(|d| users.get(u, d) * (items.get(pos, d) - items.get(neg, d)))
                .sum();
            epoch_loss += softplus_neg(x);
            let coeff = sigmoid(-x);
            for d in 0..config.dim {
                let uu = users.get(u, d);
                let vp = items.get(pos, d);
                let vn = items.get(neg, d);
                users.set(u, d, uu + config.lr * (coeff * (vp - vn) - config.reg * uu));
                items.set(pos, d, vp + config.lr * (coeff * uu - config.reg * vp));
                items.set(neg, d, vn + config.lr * (-coeff * uu - config.reg * vn));
            }
        }
        curve.push(epoch_loss / interactions.len() as f64);
    }

    let mut cold_users = 0;
    for u in 0..num_users {
        if seen[u].is_empty() {
            users.row_mut(u).fill(0.0);
            cold_users += 1;
        }
    }
    let mut item_seen = vec![false; num_items];
    for &(_, i) in interactions {
        item_seen[i] = true;
    }
    let mut cold_items = 0;
    for (i, &s) in item_seen.iter().enumerate() {
        if !s {
            items.row_mut(i).fill(0.0);
            cold_items += 1;
        }
    }
    if cold_users > 0 || cold_items > 0 {
        log::warn!(
            "bpr_mf_pretrain: {cold_users} users and {cold_items} items missing from training interactions; their rows are zero"
        );
    }

    Ok((
        MfEmbeddings {
            dim: config.dim,
            users,
            items,
        },
        curve,
    ))
}

// -log sigmoid(x) = softplus(-x)
fn softplus_neg(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

impl MfEmbeddings {
    /// Binary form: magic, then dim / user count / item count as u64 LE,
    /// then both tables row-major as f64 LE bits. Bit-exact round trip.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(MAGIC)?;
        for v in [self.dim as u64, self.users.rows() as u64, self.items.rows() as u64] {
            f.write_all(&v.to_le_bytes())?;
        }
        for v in self.users.data().iter().chain(self.items.data()) {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MfEmbeddings> {
        let mut f = std::fs::File::open(path.as_ref())?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Dataset {
                path: path.as_ref().display().to_string(),
                msg: "not a pretrained embedding file (bad magic)".into(),
            });
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |f: &mut std::fs::File| -> Result<u64> {
            f.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let dim = read_u64(&mut f)? as usize;
        let n_users = read_u64(&mut f)? as usize;
        let n_items = read_u64(&mut f)? as usize;
        let read_table = |f: &mut std::fs::File, rows: usize| -> Result<DenseMatrix> {
            let mut buf = vec![0u8; rows * dim * 8];
            f.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            DenseMatrix::from_vec(rows, dim, data)
        };
        let users = read_table(&mut f, n_users)?;
        let items = read_table(&mut f, n_items)?;
        Ok(MfEmbeddings { dim, users, items })
    }

    /// Debug TSV: one `u|i <row> <floats>` line per embedding row.
    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for (tag, table) in [("u", &self.users), ("i", &self.items)] {
            for r in 0..table.rows() {
                let floats = table
                    .row(r)
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                out.push_str(&format!("{tag}\t{r}\t{floats}\n"));
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
