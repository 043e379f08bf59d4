//! Deterministic synthetic-chain generator.
//!
//! Produces a chain plus ground truth so attacks can be scored against known
//! real spends. Spend ages are drawn from a configurable spend-time model,
//! snapped to the nearest earlier block; chaff references come from one of
//! the mixin-selection policies. Identical config and seed yield
//! byte-identical output files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    Block, Chain, ChainError, ChainIndex, Denom, GlobalIdx, GroundTruth, Output, RingInput,
    Transaction,
};
use crate::sampling::{BinAssigner, Policy, PolicyParseError, SampleError};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyParseError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Model for the age of an output at the time it is really spent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpendTimeModel {
    /// Gamma distribution over ln(seconds); the fitted empirical model uses
    /// shape 19.28 and rate 1.61.
    GammaLogSeconds { shape: f64, rate: f64 },
    /// Exponential over seconds with the given rate.
    Exponential { rate: f64 },
    /// Resample uniformly from observed spend times (seconds).
    Empirical { samples: Vec<f64> },
}

impl SpendTimeModel {
    fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: &str| Err(GenError::InvalidConfig(msg.to_string()));
        match self {
            SpendTimeModel::GammaLogSeconds { shape, rate } => {
                if !(*shape > 0.0) || !(*rate > 0.0) {
                    return bad("gamma shape and rate must be positive");
                }
            }
            SpendTimeModel::Exponential { rate } => {
                if !(*rate > 0.0) {
                    return bad("exponential rate must be positive");
                }
            }
            SpendTimeModel::Empirical { samples } => {
                if samples.is_empty() || samples.iter().any(|&s| !(s > 0.0)) {
                    return bad("empirical samples must be non-empty and positive");
                }
            }
        }
        Ok(())
    }

    /// Draw a spend age in seconds.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            SpendTimeModel::GammaLogSeconds { shape, rate } => {
                let g = Gamma::new(*shape, 1.0 / rate).expect("validated parameters");
                g.sample(rng).exp()
            }
            SpendTimeModel::Exponential { rate } => {
                Exp::new(*rate).expect("validated parameters").sample(rng)
            }
            SpendTimeModel::Empirical { samples } => {
                samples[rng.random_range(0..samples.len())]
            }
        }
    }

    /// CDF over seconds.
    pub fn cdf(&self, t_seconds: f64) -> f64 {
        use statrs::distribution::ContinuousCDF;
        if t_seconds <= 0.0 {
            return 0.0;
        }
        match self {
            SpendTimeModel::GammaLogSeconds { shape, rate } => {
                let g = statrs::distribution::Gamma::new(*shape, *rate)
                    .expect("validated parameters");
                if t_seconds <= 1.0 {
                    0.0
                } else {
                    g.cdf(t_seconds.ln())
                }
            }
            SpendTimeModel::Exponential { rate } => 1.0 - (-rate * t_seconds).exp(),
            SpendTimeModel::Empirical { samples } => {
                samples.iter().filter(|&&s| s <= t_seconds).count() as f64
                    / samples.len() as f64
            }
        }
    }

    /// Median spend age in seconds.
    pub fn median(&self) -> f64 {
        use statrs::distribution::ContinuousCDF;
        match self {
            SpendTimeModel::GammaLogSeconds { shape, rate } => {
                let g = statrs::distribution::Gamma::new(*shape, *rate)
                    .expect("validated parameters");
                g.inverse_cdf(0.5).exp()
            }
            SpendTimeModel::Exponential { rate } => std::f64::consts::LN_2 / rate,
            SpendTimeModel::Empirical { samples } => {
                let mut s = samples.clone();
                s.sort_by(|a, b| a.total_cmp(b));
                s[s.len() / 2]
            }
        }
    }
}

fn default_coinbase_outputs() -> u64 {
    1
}

/// Generator configuration; JSON config files mirror these field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_blocks: u64,
    pub block_interval_s: u64,
    /// Mean of the Poisson draw for non-coinbase transactions per block.
    pub txs_per_block: f64,
    /// Map from mixin count M (including 0) to probability.
    pub mixin_count_distribution: HashMap<u64, f64>,
    pub spend_time_model: SpendTimeModel,
    /// Denominations in circulation; `[0]` for concealed-amount chains.
    pub denominations: Vec<Denom>,
    /// Policy spec string for the chaff references, e.g. `v0_10_1`.
    pub mixin_policy: String,
    pub seed: u64,
    /// Outputs minted per denomination in every block's coinbase.
    #[serde(default = "default_coinbase_outputs")]
    pub coinbase_outputs: u64,
}

impl GenConfig {
    pub fn read_json<P: AsRef<Path>>(path: P) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path).map_err(ChainError::Io)?;
        serde_json::from_str(&text).map_err(|e| GenError::InvalidConfig(e.to_string()))
    }

    fn validate(&self) -> Result<Policy, GenError> {
        let bad = |msg: String| GenError::InvalidConfig(msg);
        if self.num_blocks < 1 {
            return Err(bad("num_blocks must be >= 1".into()));
        }
        if self.block_interval_s < 1 {
            return Err(bad("block_interval_s must be >= 1".into()));
        }
        if !(self.txs_per_block >= 0.0) {
            return Err(bad("txs_per_block must be >= 0".into()));
        }
        if self.denominations.is_empty() {
            return Err(bad("at least one denomination required".into()));
        }
        let mut denoms = self.denominations.clone();
        denoms.sort_unstable();
        denoms.dedup();
        if denoms.len() != self.denominations.len() {
            return Err(bad("duplicate denominations".into()));
        }
        if self.mixin_count_distribution.is_empty() {
            return Err(bad("mixin_count_distribution must be non-empty".into()));
        }
        let total: f64 = self.mixin_count_distribution.values().sum();
        if self.mixin_count_distribution.values().any(|&p| p < 0.0)
            || (total - 1.0).abs() > 1e-9
        {
            return Err(bad(format!(
                "mixin count probabilities must be >= 0 and sum to 1 (sum = {total})"
            )));
        }
        self.spend_time_model.validate()?;
        Ok(self.mixin_policy.parse()?)
    }
}

/// Cumulative table for drawing mixin counts.
struct MixinTable {
    entries: Vec<(u64, f64)>,
}

impl MixinTable {
    fn new(dist: &HashMap<u64, f64>) -> Self {
        let mut entries: Vec<(u64, f64)> = dist.iter().map(|(&m, &p)| (m, p)).collect();
        entries.sort_unstable_by_key(|&(m, _)| m);
        let mut acc = 0.0;
        for e in &mut entries {
            acc += e.1;
            e.1 = acc;
        }
        MixinTable { entries }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        for &(m, c) in &self.entries {
            if u < c {
                return m;
            }
        }
        self.entries.last().unwrap().0
    }
}

/// Nearest block height in `0..h` (by timestamp distance to `target_ts`)
/// holding at least one unspent output; ties break toward the older block.
fn nearest_unspent_height(
    unspent_by_height: &[Vec<GlobalIdx>],
    h: u64,
    interval: u64,
    target_ts: f64,
) -> Option<u64> {
    if h == 0 {
        return None;
    }
    let k = (target_ts / interval as f64).floor().clamp(0.0, (h - 1) as f64) as i64;
    let mut lo = k;
    let mut hi = k + 1;
    loop {
        let d_lo = if lo >= 0 {
            (target_ts - (lo as f64) * interval as f64).abs()
        } else {
            f64::INFINITY
        };
        let d_hi = if (hi as u64) < h {
            ((hi as f64) * interval as f64 - target_ts).abs()
        } else {
            f64::INFINITY
        };
        if d_lo.is_infinite() && d_hi.is_infinite() {
            return None;
        }
        if d_lo <= d_hi {
            if !unspent_by_height[lo as usize].is_empty() {
                return Some(lo as u64);
            }
            lo -= 1;
        } else {
            if !unspent_by_height[hi as usize].is_empty() {
                return Some(hi as u64);
            }
            hi += 1;
        }
    }
}

/// Generate a chain and its ground truth. Deterministic in `config.seed`.
///
/// Spends that cannot be realized in their block (no matching unspent
/// output, or the policy cannot assemble a ring yet) are deferred and
/// logged, never silently shrunk. A config whose every requested spend
/// defers is infeasible.
pub fn generate_chain(config: &GenConfig) -> Result<(Chain, GroundTruth), GenError> {
    let policy = config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut index = ChainIndex::new();
    let mut blocks: Vec<Block> = Vec::with_capacity(config.num_blocks as usize);
    let mut gt = GroundTruth::new();
    let mixin_table = MixinTable::new(&config.mixin_count_distribution);
    let poisson = if config.txs_per_block > 0.0 {
        Some(Poisson::new(config.txs_per_block).expect("validated mean"))
    } else {
        None
    };

    // Per denomination: unspent output indices grouped by creation height.
    let mut unspent: HashMap<Denom, Vec<Vec<GlobalIdx>>> = config
        .denominations
        .iter()
        .map(|&d| (d, Vec::new()))
        .collect();
    let mut assigners: Option<HashMap<Denom, BinAssigner>> = policy.bin_size().map(|s| {
        config
            .denominations
            .iter()
            .map(|&d| (d, BinAssigner::new(s)))
            .collect()
    });

    let mut spends = 0u64;
    let mut deferred = 0u64;

    for h in 0..config.num_blocks {
        let ts = h * config.block_interval_s;
        let header_seed: [u8; 32] = rng.random();
        index.push_block(ts, header_seed);
        for per_height in unspent.values_mut() {
            per_height.push(Vec::new());
        }
        let mut txs = Vec::new();

        let mut coinbase_outs = Vec::new();
        for &d in &config.denominations {
            for _ in 0..config.coinbase_outputs {
                let g = index.push_output(d, true);
                unspent.get_mut(&d).unwrap()[h as usize].push(g);
                coinbase_outs.push(Output {
                    denom: d,
                    global_idx: g,
                    block_height: h,
                    is_coinbase: true,
                });
            }
        }
        txs.push(Transaction {
            tx_id: format!("cb-{h}"),
            is_coinbase: true,
            inputs: vec![],
            outputs: coinbase_outs,
        });

        let n_txs = match (&poisson, h) {
            (Some(p), h) if h > 0 => p.sample(&mut rng) as u64,
            _ => 0,
        };
        for j in 0..n_txs {
            let mut inputs = Vec::new();
            for &d in &config.denominations {
                let num_mixins = mixin_table.draw(&mut rng);
                // Draw a spend age; redraw ages exceeding the chain history,
                // clamping if the model keeps overshooting a young chain.
                let mut age = config.spend_time_model.draw(&mut rng);
                let chain_age = ts as f64;
                for _ in 0..100 {
                    if age <= chain_age {
                        break;
                    }
                    age = config.spend_time_model.draw(&mut rng);
                }
                age = age.min(chain_age);
                let target_ts = ts as f64 - age;
                let pool = unspent.get_mut(&d).unwrap();
                let Some(real_h) =
                    nearest_unspent_height(pool, h, config.block_interval_s, target_ts)
                else {
                    deferred += 1;
                    continue;
                };
                let slot = rng.random_range(0..pool[real_h as usize].len());
                let real = pool[real_h as usize][slot];
                let binmap = assigners.as_ref().map(|a| a[&d].binmap());
                match policy.sample(&index, binmap, d, real, num_mixins, h - 1, &mut rng) {
                    Ok(refs) => {
                        pool[real_h as usize].swap_remove(slot);
                        let input_id = format!("in-{h}-{j}-{d}");
                        gt.insert(input_id.clone(), real);
                        inputs.push(RingInput {
                            input_id,
                            denom: d,
                            refs,
                        });
                        spends += 1;
                    }
                    Err(e @ (SampleError::InsufficientOutputs { .. }
                    | SampleError::RealOutNotBinned { .. }
                    | SampleError::InsufficientBins { .. })) => {
                        log::debug!("deferring spend at height {h}: {e}");
                        deferred += 1;
                    }
                    Err(e) => {
                        return Err(GenError::InfeasibleConfig(format!(
                            "policy failed at height {h}: {e}"
                        )))
                    }
                }
            }
            if inputs.is_empty() {
                continue;
            }
            let mut outs = Vec::new();
            for &d in &config.denominations {
                let g = index.push_output(d, false);
                unspent.get_mut(&d).unwrap()[h as usize].push(g);
                outs.push(Output {
                    denom: d,
                    global_idx: g,
                    block_height: h,
                    is_coinbase: false,
                });
            }
            txs.push(Transaction {
                tx_id: format!("tx-{h}-{j}"),
                is_coinbase: false,
                inputs,
                outputs: outs,
            });
        }

        if let Some(assigners) = assigners.as_mut() {
            for &d in &config.denominations {
                // Outputs created this block are exactly the unspent entries
                // in this height's slot (spends only touch older heights).
                let created = unspent[&d][h as usize].clone();
                assigners
                    .get_mut(&d)
                    .unwrap()
                    .push_block(h, &header_seed, &created);
            }
        }

        blocks.push(Block {
            height: h,
            timestamp: ts,
            header_seed,
            txs,
        });
    }

    if spends == 0 && deferred > 0 {
        return Err(GenError::InfeasibleConfig(format!(
            "all {deferred} requested spends deferred; no spendable outputs"
        )));
    }
    if deferred > 0 {
        log::warn!("deferred {deferred} spends ({spends} realized)");
    }

    let chain = Chain::from_blocks(blocks)?;
    chain.validate_ground_truth(&gt)?;
    Ok((chain, gt))
}

/// Write `{prefix}.chain.jsonl` and `{prefix}.truth.jsonl`.
pub fn write_chain<P: AsRef<Path>>(
    chain: &Chain,
    gt: &GroundTruth,
    path_prefix: P,
) -> Result<(PathBuf, PathBuf), ChainError> {
    let prefix = path_prefix.as_ref();
    let chain_path = prefix.with_extension("chain.jsonl");
    let truth_path = prefix.with_extension("truth.jsonl");
    chain.write_jsonl(&chain_path)?;
    gt.write_jsonl(&truth_path)?;
    Ok((chain_path, truth_path))
}

pub fn read_chain<P: AsRef<Path>>(path: P) -> Result<Chain, ChainError> {
    Chain::read_jsonl(path)
}
