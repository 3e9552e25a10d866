//! RANDOM and COPY data distribution across K workers.
//!
//! Plans hold row indices only; [`shard_view`] materialises a shard when a
//! worker needs it. Both strategies are deterministic functions of
//! `(data, k, seed)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Every row goes to exactly one shard.
    Random,
    /// Every shard holds all positives plus a disjoint share of negatives.
    Copy,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Strategy::Random),
            "copy" => Ok(Strategy::Copy),
            other => Err(Error::InvalidArgument(format!("unknown strategy '{other}'"))),
        }
    }
}

/// How RANDOM assigns rows to shards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomAssignment {
    /// Contiguous blocks of one permutation; shard sizes differ by at most one.
    #[default]
    Balanced,
    /// Independent uniform draw of a shard per row; sizes are multinomial.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
    /// Row indices per shard, each list ascending.
    pub shards: Vec<Vec<usize>>,
    /// Shards that lack positives or negatives.
    pub degenerate: Vec<usize>,
}

/// Audit form of a plan; `shards` is only filled when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
    pub shard_sizes: Vec<usize>,
    pub checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shards: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardCounts {
    pub positives: usize,
    pub negatives: usize,
}

impl PartitionPlan {
    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    /// SHA-256 over strategy, k, seed and every shard's index list.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(match self.strategy {
            Strategy::Random => b"random",
            Strategy::Copy => b"copy__",
        });
        h.update((self.k as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        for shard in &self.shards {
            h.update((shard.len() as u64).to_le_bytes());
            for &i in shard {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn summary(&self, include_indices: bool) -> PlanSummary {
        PlanSummary {
            strategy: self.strategy,
            k: self.k,
            seed: self.seed,
            shard_sizes: self.shard_sizes(),
            checksum: self.checksum(),
            shards: include_indices.then(|| self.shards.clone()),
        }
    }

    pub fn counts(&self, data: &Dataset) -> Vec<ShardCounts> {
        self.shards
            .iter()
            .map(|s| {
                let positives = s.iter().filter(|&&i| data.label(i) == 1).count();
                ShardCounts { positives, negatives: s.len() - positives }
            })
            .collect()
    }

    /// COPY shards where negatives number fewer than a tenth of the positives.
    pub fn sparse_negative_shards(&self, data: &Dataset) -> Vec<usize> {
        if self.strategy != Strategy::Copy {
            return Vec::new();
        }
        self.counts(data)
            .iter()
            .enumerate()
            .filter(|(_, c)| c.negatives * 10 < c.positives)
            .map(|(k, _)| k)
            .collect()
    }

    /// Rows each worker is the owner of when a full-data sum is split across
    /// workers: the whole shard under RANDOM, the shard's negatives under COPY,
    /// with the shared positives owned by worker 0.
    pub fn owned_rows(&self, data: &Dataset) -> Vec<Vec<usize>> {
        match self.strategy {
            Strategy::Random => self.shards.clone(),
            Strategy::Copy => self
                .shards
                .iter()
                .enumerate()
                .map(|(k, s)| s.iter().copied().filter(|&i| k == 0 || data.label(i) == 0).collect())
                .collect(),
        }
    }
}

pub fn partition_random(data: &Dataset, k: usize, seed: u64) -> Result<PartitionPlan> {
    partition_random_with(data, k, seed, RandomAssignment::Balanced)
}

pub fn partition_random_with(
    data: &Dataset,
    k: usize,
    seed: u64,
    assignment: RandomAssignment,
) -> Result<PartitionPlan> {
    let n = data.n_rows();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!("random strategy needs 1 <= k <= N = {n}, got {k}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut shards = match assignment {
        RandomAssignment::Balanced => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            split_blocks(&perm, k)
        }
        RandomAssignment::Bernoulli => {
            let mut shards = vec![Vec::new(); k];
            for i in 0..n {
                shards[rng.random_range(0..k)].push(i);
            }
            shards
        }
    };
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(finish(data, Strategy::Random, k, seed, shards))
}

pub fn partition_copy(data: &Dataset, k: usize, seed: u64) -> Result<PartitionPlan> {
    let positives = data.positive_indices();
    let mut negatives = data.negative_indices();
    if positives.is_empty() {
        return Err(Error::Precondition("copy strategy needs at least one positive".into()));
    }
    if k == 0 || k > negatives.len() {
        return Err(Error::Precondition(format!(
            "copy strategy needs 1 <= k <= N0 = {}, got {k}",
            negatives.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    negatives.shuffle(&mut rng);
    let shards = split_blocks(&negatives, k)
        .into_iter()
        .map(|block| {
            let mut s = positives.clone();
            s.extend(block);
            s.sort_unstable();
            s
        })
        .collect();
    Ok(finish(data, Strategy::Copy, k, seed, shards))
}

pub fn partition(data: &Dataset, strategy: Strategy, k: usize, seed: u64) -> Result<PartitionPlan> {
    match strategy {
        Strategy::Random => partition_random(data, k, seed),
        Strategy::Copy => partition_copy(data, k, seed),
    }
}

/// Rows of shard `k_index`, in ascending original order.
pub fn shard_view(data: &Dataset, plan: &PartitionPlan, k_index: usize) -> Result<Dataset> {
    let shard = plan.shards.get(k_index).ok_or_else(|| {
        Error::InvalidArgument(format!("shard {k_index} out of range for k = {}", plan.k))
    })?;
    data.subset(shard)
}

/// Contiguous blocks; the first `len % k` blocks take one extra element.
fn split_blocks(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let base = items.len() / k;
    let extra = items.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let len = base + usize::from(j < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

fn finish(
    data: &Dataset,
    strategy: Strategy,
    k: usize,
    seed: u64,
    shards: Vec<Vec<usize>>,
) -> PartitionPlan {
    let degenerate = shards
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let pos = s.iter().filter(|&&i| data.label(i) == 1).count();
            pos == 0 || pos == s.len()
        })
        .map(|(j, _)| j)
        .collect();
    PartitionPlan { strategy, k, seed, shards, degenerate }
}
