use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::migration::{migration_cost, MigrationCost};
use super::Residence;
use crate::error::{Error, Result};
use crate::hardware::{DramChipletSpec, PlatformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HotnessPolicy {
    /// Hotness is the block's largest token index.
    Recency,
}

impl HotnessPolicy {
    pub fn hotness(self, block: &KvBlock) -> f64 {
        match self {
            HotnessPolicy::Recency => block.token_range[1].saturating_sub(1) as f64,
        }
    }
}

/// Keys and values of one layer for a run of consecutive tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvBlock {
    pub id: u32,
    pub layer_index: u32,
    /// Half-open `[start, end)`.
    pub token_range: [u32; 2],
    /// Storage reserved for the block (full capacity, even while filling).
    pub bytes: u64,
    pub hotness: f64,
    pub residence: Residence,
    /// Number of times the block was written into RRAM.
    pub write_count: u32,
}

impl KvBlock {
    pub fn tokens(&self) -> u32 {
        self.token_range[1] - self.token_range[0]
    }
}

/// Bytes available to the KV cache in each DRAM tier and in RRAM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvBudget {
    pub tiers: Vec<u64>,
    pub rram: u64,
}

impl KvBudget {
    /// Whole tiers, no RRAM.
    pub fn from_dram(dram: &DramChipletSpec) -> Self {
        KvBudget {
            tiers: vec![dram.tier_capacity_bytes; dram.tiers as usize],
            rram: 0,
        }
    }
}

/// Places blocks hottest-first into Tier-0, Tier-1, ... and spills the
/// coldest to RRAM. Blocks already in RRAM stay there untouched.
pub fn assign_kv(
    blocks: &[KvBlock],
    budget: &KvBudget,
    policy: HotnessPolicy,
) -> Result<Vec<KvBlock>> {
    let mut out = blocks.to_vec();
    for b in &mut out {
        b.hotness = policy.hotness(b);
    }
    let mut rram_used: u64 = out
        .iter()
        .filter(|b| b.residence == Residence::Rram)
        .map(|b| b.bytes)
        .sum();
    let mut order: Vec<usize> = (0..out.len())
        .filter(|&i| out[i].residence != Residence::Rram)
        .collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&out[a], &out[b]);
        y.hotness
            .total_cmp(&x.hotness)
            .then(x.layer_index.cmp(&y.layer_index))
            .then(x.token_range[0].cmp(&y.token_range[0]))
            .then(x.id.cmp(&y.id))
    });
    let mut used = vec![0u64; budget.tiers.len()];
    let mut tier = 0usize;
    let mut overflow = 0u64;
    for i in order {
        let b = &mut out[i];
        while tier < used.len() && used[tier] + b.bytes > budget.tiers[tier] {
            tier += 1;
        }
        if tier < used.len() {
            used[tier] += b.bytes;
            b.residence = Residence::DramTier(tier as u8);
        } else if rram_used + b.bytes <= budget.rram {
            if b.write_count > 0 {
                return Err(Error::Endurance { block: b.id });
            }
            rram_used += b.bytes;
            b.residence = Residence::Rram;
            b.write_count += 1;
        } else {
            overflow += b.bytes;
        }
    }
    if overflow > 0 {
        return Err(Error::Capacity {
            what: "KV cache (DRAM tiers + RRAM)".into(),
            overflow_bytes: overflow,
        });
    }
    Ok(out)
}

/// Blocks in a higher DRAM tier that are hotter than some block in a lower tier.
pub fn tier_inversions(blocks: &[KvBlock]) -> usize {
    let tiers = blocks
        .iter()
        .filter_map(|b| match b.residence {
            Residence::DramTier(t) => Some(t as usize + 1),
            Residence::Rram => None,
        })
        .max()
        .unwrap_or(0);
    let mut min_hot = vec![f64::INFINITY; tiers];
    for b in blocks {
        if let Residence::DramTier(t) = b.residence {
            min_hot[t as usize] = min_hot[t as usize].min(b.hotness);
        }
    }
    let mut below = vec![f64::INFINITY; tiers];
    for t in 1..tiers {
        below[t] = below[t - 1].min(min_hot[t - 1]);
    }
    blocks
        .iter()
        .filter(|b| matches!(b.residence, Residence::DramTier(t) if b.hotness > below[t as usize]))
        .count()
}

/// Bytes written or read per residence.
pub type Traffic = SmallVec<[(Residence, u64); 2]>;

fn add(traffic: &mut Traffic, r: Residence, bytes: u64) {
    if bytes == 0 {
        return;
    }
    match traffic.iter_mut().find(|(x, _)| *x == r) {
        Some((_, b)) => *b += bytes,
        None => traffic.push((r, bytes)),
    }
}

#[derive(Debug, Clone, Default)]
pub struct AppendOutcome {
    pub writes: Traffic,
    /// Cold blocks pushed to RRAM to make room.
    pub eviction: Option<MigrationCost>,
}

/// Live KV cache during simulation.
#[derive(Debug, Clone)]
pub struct KvCacheState {
    pub blocks: Vec<KvBlock>,
    per_layer: Vec<Vec<u32>>,
    tokens: Vec<u32>,
    block_tokens: u32,
    bytes_per_token: u64,
    budget: KvBudget,
    policy: HotnessPolicy,
}

impl KvCacheState {
    pub fn new(
        num_layers: u32,
        block_tokens: u32,
        bytes_per_token: u64,
        budget: KvBudget,
        policy: HotnessPolicy,
    ) -> Self {
        KvCacheState {
            blocks: Vec::new(),
            per_layer: vec![Vec::new(); num_layers as usize],
            tokens: vec![0; num_layers as usize],
            block_tokens,
            bytes_per_token,
            budget,
            policy,
        }
    }

    pub fn tokens(&self, layer: u32) -> u32 {
        self.tokens[layer as usize]
    }

    fn block_bytes(&self) -> u64 {
        self.block_tokens as u64 * self.bytes_per_token
    }

    fn used(&self) -> (Vec<u64>, u64) {
        let mut tiers = vec![0u64; self.budget.tiers.len()];
        let mut rram = 0;
        for b in &self.blocks {
            match b.residence {
                Residence::DramTier(t) => tiers[t as usize] += b.bytes,
                Residence::Rram => rram += b.bytes,
            }
        }
        (tiers, rram)
    }

    /// Lowest tier with room for one more block.
    fn free_tier(&self) -> Option<u8> {
        let (used, _) = self.used();
        let need = self.block_bytes();
        (0..used.len())
            .find(|&t| used[t] + need <= self.budget.tiers[t])
            .map(|t| t as u8)
    }

    /// Moves the coldest full DRAM block to RRAM.
    fn evict_coldest(&mut self, platform: &PlatformSpec) -> Result<MigrationCost> {
        let (_, rram_used) = self.used();
        let need = self.block_bytes();
        if rram_used + need > self.budget.rram {
            return Err(Error::Capacity {
                what: "KV cache (DRAM tiers + RRAM)".into(),
                overflow_bytes: rram_used + need - self.budget.rram,
            });
        }
        let policy = self.policy;
        let victim = self
            .blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.residence != Residence::Rram && b.tokens() == self.block_tokens)
            .min_by(|(_, a), (_, b)| {
                policy
                    .hotness(a)
                    .total_cmp(&policy.hotness(b))
                    .then(b.layer_index.cmp(&a.layer_index))
                    .then(b.id.cmp(&a.id))
            })
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Capacity {
                what: "KV cache (no full block to offload)".into(),
                overflow_bytes: need,
            })?;
        let before = [self.blocks[victim].clone()];
        let b = &mut self.blocks[victim];
        if b.write_count > 0 {
            return Err(Error::Endurance { block: b.id });
        }
        b.residence = Residence::Rram;
        b.write_count += 1;
        Ok(migration_cost(&before, std::slice::from_ref(b), platform))
    }

    /// Appends `n` tokens to `layer`, opening blocks as needed.
    pub fn append(&mut self, layer: u32, n: u32, platform: &PlatformSpec) -> Result<AppendOutcome> {
        let mut out = AppendOutcome::default();
        let mut left = n;
        while left > 0 {
            let l = layer as usize;
            let open = self.per_layer[l]
                .last()
                .copied()
                .filter(|&i| self.blocks[i as usize].tokens() < self.block_tokens);
            let idx = match open {
                Some(i) => i as usize,
                None => {
                    let tier = match self.free_tier() {
                        Some(t) => t,
                        None => {
                            let cost = self.evict_coldest(platform)?;
                            let merged = match out.eviction.take() {
                                Some(prev) => prev.combine(&cost),
                                None => cost,
                            };
                            out.eviction = Some(merged);
                            self.free_tier().ok_or_else(|| Error::Capacity {
                                what: "KV cache (DRAM tiers)".into(),
                                overflow_bytes: self.block_bytes(),
                            })?
                        }
                    };
                    let start = self.tokens[l];
                    let id = self.blocks.len() as u32;
                    self.blocks.push(KvBlock {
                        id,
                        layer_index: layer,
                        token_range: [start, start],
                        bytes: self.block_bytes(),
                        hotness: 0.0,
                        residence: Residence::DramTier(tier),
                        write_count: 0,
                    });
                    self.per_layer[l].push(id);
                    id as usize
                }
            };
            let block = &mut self.blocks[idx];
            if block.residence == Residence::Rram {
                return Err(Error::Endurance { block: block.id });
            }
            let take = left.min(self.block_tokens - block.tokens());
            block.token_range[1] += take;
            block.hotness = self.policy.hotness(block);
            add(
                &mut out.writes,
                block.residence,
                take as u64 * self.bytes_per_token,
            );
            self.tokens[l] += take;
            left -= take;
        }
        Ok(out)
    }

    /// Bytes of the first `ctx` cached tokens of `layer`, grouped by residence.
    pub fn read(&self, layer: u32, ctx: u32) -> Traffic {
        let mut out = Traffic::new();
        for &i in &self.per_layer[layer as usize] {
            let b = &self.blocks[i as usize];
            if b.token_range[0] >= ctx {
                break;
            }
            let toks = b.token_range[1].min(ctx) - b.token_range[0];
            add(&mut out, b.residence, toks as u64 * self.bytes_per_token);
        }
        out
    }

    /// Re-runs tier assignment over the whole cache and reports what moved.
    pub fn rebalance(&mut self, platform: &PlatformSpec) -> Result<MigrationCost> {
        let after = assign_kv(&self.blocks, &self.budget, self.policy)?;
        let cost = migration_cost(&self.blocks, &after, platform);
        self.blocks = after;
        Ok(cost)
    }

    pub fn max_rram_write_count(&self) -> u32 {
        self.blocks.iter().map(|b| b.write_count).max().unwrap_or(0)
    }

    pub fn offloaded_blocks(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.residence == Residence::Rram)
            .count()
    }
}

/// Static KV blocks covering `tokens` tokens of every layer, before assignment.
pub fn plan_blocks(
    num_layers: u32,
    tokens: u32,
    block_tokens: u32,
    bytes_per_token: u64,
) -> Vec<KvBlock> {
    let mut out = Vec::new();
    for layer in 0..num_layers {
        let mut start = 0;
        while start < tokens {
            let end = (start + block_tokens).min(tokens);
            out.push(KvBlock {
                id: out.len() as u32,
                layer_index: layer,
                token_range: [start, end],
                bytes: block_tokens as u64 * bytes_per_token,
                hotness: 0.0,
                residence: Residence::DramTier(0),
                write_count: 0,
            });
            start = end;
        }
    }
    out
}
