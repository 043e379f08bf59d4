//! Core transaction-graph data model.
//!
//! A [`Chain`] is an append-only sequence of timestamped blocks. Every
//! transaction output is indexed by its denomination: outputs of one
//! denomination form a dense, ordered list and are addressed by their
//! position in that list (the "global index"). Ring inputs reference
//! candidate outputs by global index; exactly one reference is the real
//! spend, recorded separately in [`GroundTruth`] so that analyses cannot
//! read it by accident.
//!
//! Denomination `0` is reserved for concealed-amount (RingCT-style)
//! outputs, which all live in a single shared index.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denomination in atomic currency units. `0` means concealed amount.
pub type Denom = u64;
/// Position of an output within its denomination's ordered list.
pub type GlobalIdx = u64;

/// Reserved denomination for concealed-amount outputs.
pub const CONCEALED_DENOM: Denom = 0;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("denomination {denom} has no outputs at or below height {height}")]
    NoSuchDenomination { denom: Denom, height: u64 },
    #[error("no ground truth recorded for input {input_id}")]
    MissingGroundTruth { input_id: String },
    #[error("input {input_id} does not exist in the chain")]
    UnknownInput { input_id: String },
    #[error("invalid chain: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error on line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// A transaction output, with its global index assigned at chain build time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub denom: Denom,
    pub global_idx: GlobalIdx,
    pub block_height: u64,
    pub is_coinbase: bool,
}

/// One transaction input: an ordered ring of referenced output indices,
/// all of the same denomination, exactly one of which is the real spend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingInput {
    pub input_id: String,
    pub denom: Denom,
    /// Referenced global indices, strictly ascending.
    pub refs: Vec<GlobalIdx>,
}

impl RingInput {
    /// Number of mixins (ring size minus the real spend).
    pub fn num_mixins(&self) -> usize {
        self.refs.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tx_id: String,
    pub is_coinbase: bool,
    pub inputs: Vec<RingInput>,
    pub outputs: Vec<Output>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub timestamp: u64,
    /// Stand-in for the block header hash; seeds the bin-assignment shuffle.
    pub header_seed: [u8; 32],
    pub txs: Vec<Transaction>,
}

/// Location and metadata of a single output inside the per-denomination index.
#[derive(Debug, Clone, Copy)]
pub struct OutInfo {
    pub height: u64,
    pub timestamp: u64,
    pub is_coinbase: bool,
}

/// Contiguous run of outputs of one denomination inside a single block.
#[derive(Debug, Clone, Copy)]
pub struct BlockSpan {
    pub height: u64,
    pub timestamp: u64,
    pub first: GlobalIdx,
    pub count: u64,
}

impl BlockSpan {
    pub fn last(&self) -> GlobalIdx {
        self.first + self.count - 1
    }
}

#[derive(Debug, Default, Clone)]
pub struct DenomIndex {
    outs: Vec<OutInfo>,
    spans: Vec<BlockSpan>,
}

impl DenomIndex {
    pub fn len(&self) -> u64 {
        self.outs.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.outs.is_empty()
    }

    pub fn out(&self, gidx: GlobalIdx) -> Option<&OutInfo> {
        self.outs.get(gidx as usize)
    }

    pub fn spans(&self) -> &[BlockSpan] {
        &self.spans
    }

    /// Largest global index among blocks `0..=height`, if any.
    pub fn top_at(&self, height: u64) -> Option<GlobalIdx> {
        let n = self.spans.partition_point(|s| s.height <= height);
        if n == 0 {
            None
        } else {
            Some(self.spans[n - 1].last())
        }
    }

    /// Span of the block whose timestamp is closest to `target_ts`, among
    /// blocks `0..=max_height` that hold outputs of this denomination.
    /// Ties break toward the older block.
    pub fn nearest_span_by_time(&self, target_ts: u64, max_height: u64) -> Option<&BlockSpan> {
        let n = self.spans.partition_point(|s| s.height <= max_height);
        if n == 0 {
            return None;
        }
        let spans = &self.spans[..n];
        let i = spans.partition_point(|s| s.timestamp < target_ts);
        if i == 0 {
            return Some(&spans[0]);
        }
        if i == spans.len() {
            return Some(&spans[n - 1]);
        }
        let below = &spans[i - 1];
        let above = &spans[i];
        if target_ts - below.timestamp <= above.timestamp - target_ts {
            Some(below)
        } else {
            Some(above)
        }
    }
}

/// Per-denomination output index plus block timestamps and header seeds.
///
/// This is the read surface the samplers and the binning machinery work
/// against; both a finished [`Chain`] and the generator's chain-in-progress
/// expose one.
#[derive(Debug, Default, Clone)]
pub struct ChainIndex {
    denoms: HashMap<Denom, DenomIndex>,
    block_times: Vec<u64>,
    header_seeds: Vec<[u8; 32]>,
}

impl ChainIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the next block's metadata. Heights must arrive consecutively.
    pub fn push_block(&mut self, timestamp: u64, header_seed: [u8; 32]) {
        self.block_times.push(timestamp);
        self.header_seeds.push(header_seed);
    }

    /// Register an output in the current (last pushed) block, returning its
    /// assigned global index.
    pub fn push_output(&mut self, denom: Denom, is_coinbase: bool) -> GlobalIdx {
        let height = (self.block_times.len() - 1) as u64;
        let timestamp = *self.block_times.last().unwrap();
        let idx = self.denoms.entry(denom).or_default();
        let gidx = idx.outs.len() as u64;
        idx.outs.push(OutInfo {
            height,
            timestamp,
            is_coinbase,
        });
        match idx.spans.last_mut() {
            Some(span) if span.height == height => span.count += 1,
            _ => idx.spans.push(BlockSpan {
                height,
                timestamp,
                first: gidx,
                count: 1,
            }),
        }
        gidx
    }

    pub fn num_blocks(&self) -> u64 {
        self.block_times.len() as u64
    }

    pub fn tip_height(&self) -> u64 {
        self.block_times.len() as u64 - 1
    }

    pub fn block_time(&self, height: u64) -> u64 {
        self.block_times[height as usize]
    }

    pub fn header_seed(&self, height: u64) -> &[u8; 32] {
        &self.header_seeds[height as usize]
    }

    pub fn denom_index(&self, denom: Denom) -> Option<&DenomIndex> {
        self.denoms.get(&denom)
    }

    pub fn denominations(&self) -> impl Iterator<Item = Denom> + '_ {
        self.denoms.keys().copied()
    }

    pub fn out_info(&self, denom: Denom, gidx: GlobalIdx) -> Option<&OutInfo> {
        self.denoms.get(&denom).and_then(|d| d.out(gidx))
    }

    /// Largest global index of `denom` among blocks `0..=height`.
    pub fn top_global_index(&self, denom: Denom, height: u64) -> Result<GlobalIdx, ChainError> {
        self.denoms
            .get(&denom)
            .and_then(|d| d.top_at(height))
            .ok_or(ChainError::NoSuchDenomination { denom, height })
    }

    /// Global index of the most recent output of `denom` whose block
    /// timestamp is at least `window_seconds` old relative to `height`.
    /// Returns -1 when the entire history is "recent".
    pub fn recent_zone_boundary(
        &self,
        denom: Denom,
        height: u64,
        window_seconds: u64,
    ) -> Result<i64, ChainError> {
        let idx = self
            .denoms
            .get(&denom)
            .filter(|d| d.top_at(height).is_some())
            .ok_or(ChainError::NoSuchDenomination { denom, height })?;
        let Some(cutoff) = self.block_time(height).checked_sub(window_seconds) else {
            return Ok(-1);
        };
        let n = idx.spans.partition_point(|s| s.height <= height);
        let m = idx.spans[..n].partition_point(|s| s.timestamp <= cutoff);
        if m == 0 {
            Ok(-1)
        } else {
            Ok(idx.spans[m - 1].last() as i64)
        }
    }
}

/// Private mapping from each input to its real spend.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    real: HashMap<String, GlobalIdx>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, input_id: String, real_ref: GlobalIdx) {
        self.real.insert(input_id, real_ref);
    }

    pub fn real_spend(&self, input_id: &str) -> Option<GlobalIdx> {
        self.real.get(input_id).copied()
    }

    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, GlobalIdx)> {
        self.real.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn write_jsonl<P: AsRef<Path>>(&self, path: P) -> Result<(), ChainError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let mut entries: Vec<_> = self.real.iter().collect();
        entries.sort();
        for (input_id, real_ref) in entries {
            let line = serde_json::to_string(&FileTruth {
                input_id: input_id.clone(),
                real_ref: *real_ref,
            })
            .expect("ground truth serializes");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<P: AsRef<Path>>(path: P) -> Result<Self, ChainError> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut gt = GroundTruth::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FileTruth =
                serde_json::from_str(&line).map_err(|e| ChainError::Parse {
                    line: i + 1,
                    source: e,
                })?;
            gt.insert(entry.input_id, entry.real_ref);
        }
        Ok(gt)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InputLoc {
    pub height: u64,
    pub denom: Denom,
}

/// An immutable, validated chain with its per-denomination index.
#[derive(Debug, Clone)]
pub struct Chain {
    blocks: Vec<Block>,
    index: ChainIndex,
    input_locs: HashMap<String, InputLoc>,
}

impl Chain {
    /// Build and validate a chain from raw blocks. Global indices are
    /// (re)assigned in block order; output `global_idx` fields on the way in
    /// are ignored.
    pub fn from_blocks(mut blocks: Vec<Block>) -> Result<Self, ChainError> {
        let mut index = ChainIndex::new();
        let mut input_locs = HashMap::new();
        let mut last_ts = 0u64;
        for (h, block) in blocks.iter_mut().enumerate() {
            if block.height != h as u64 {
                return Err(ChainError::Invalid(format!(
                    "expected height {h}, found {}",
                    block.height
                )));
            }
            if block.timestamp < last_ts {
                return Err(ChainError::Invalid(format!(
                    "timestamp decreases at height {h}"
                )));
            }
            last_ts = block.timestamp;
            index.push_block(block.timestamp, block.header_seed);
            for tx in &mut block.txs {
                if tx.is_coinbase && !tx.inputs.is_empty() {
                    return Err(ChainError::Invalid(format!(
                        "coinbase tx {} has inputs",
                        tx.tx_id
                    )));
                }
                if !tx.is_coinbase && tx.inputs.is_empty() {
                    return Err(ChainError::Invalid(format!(
                        "non-coinbase tx {} has no inputs",
                        tx.tx_id
                    )));
                }
                for input in &tx.inputs {
                    if input.refs.is_empty() {
                        return Err(ChainError::Invalid(format!(
                            "input {} has no references",
                            input.input_id
                        )));
                    }
                    if !input.refs.windows(2).all(|w| w[0] < w[1]) {
                        return Err(ChainError::Invalid(format!(
                            "input {} refs are not strictly ascending",
                            input.input_id
                        )));
                    }
                    if input_locs
                        .insert(
                            input.input_id.clone(),
                            InputLoc {
                                height: h as u64,
                                denom: input.denom,
                            },
                        )
                        .is_some()
                    {
                        return Err(ChainError::Invalid(format!(
                            "duplicate input id {}",
                            input.input_id
                        )));
                    }
                }
                for out in &mut tx.outputs {
                    out.global_idx = index.push_output(out.denom, tx.is_coinbase);
                    out.block_height = h as u64;
                    out.is_coinbase = tx.is_coinbase;
                }
            }
        }
        // References must not point past the end of their own block.
        for block in &blocks {
            for tx in &block.txs {
                for input in &tx.inputs {
                    let top = index
                        .top_global_index(input.denom, block.height)
                        .map_err(|_| {
                            ChainError::Invalid(format!(
                                "input {} references denomination {} with no outputs",
                                input.input_id, input.denom
                            ))
                        })?;
                    if *input.refs.last().unwrap() > top {
                        return Err(ChainError::Invalid(format!(
                            "input {} references a future output",
                            input.input_id
                        )));
                    }
                }
            }
        }
        Ok(Chain {
            blocks,
            index,
            input_locs,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn index(&self) -> &ChainIndex {
        &self.index
    }

    pub fn tip_height(&self) -> u64 {
        self.index.tip_height()
    }

    pub fn input_loc(&self, input_id: &str) -> Option<&InputLoc> {
        self.input_locs.get(input_id)
    }

    /// Iterate over every ring input together with the height of its block.
    pub fn ring_inputs(&self) -> impl Iterator<Item = (&RingInput, u64)> {
        self.blocks.iter().flat_map(|b| {
            b.txs
                .iter()
                .flat_map(move |tx| tx.inputs.iter().map(move |i| (i, b.height)))
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.input_locs.len()
    }

    pub fn top_global_index(&self, denom: Denom, height: u64) -> Result<GlobalIdx, ChainError> {
        self.index.top_global_index(denom, height)
    }

    pub fn recent_zone_boundary(
        &self,
        denom: Denom,
        height: u64,
        window_seconds: u64,
    ) -> Result<i64, ChainError> {
        self.index.recent_zone_boundary(denom, height, window_seconds)
    }

    /// Block-timestamp difference between an input's spending transaction
    /// and its real referenced output.
    pub fn spend_time(&self, input_id: &str, gt: &GroundTruth) -> Result<u64, ChainError> {
        let loc = self
            .input_locs
            .get(input_id)
            .ok_or_else(|| ChainError::UnknownInput {
                input_id: input_id.to_string(),
            })?;
        let real = gt
            .real_spend(input_id)
            .ok_or_else(|| ChainError::MissingGroundTruth {
                input_id: input_id.to_string(),
            })?;
        let out = self
            .index
            .out_info(loc.denom, real)
            .ok_or_else(|| ChainError::Invalid(format!(
                "ground truth for {input_id} names a nonexistent output"
            )))?;
        Ok(self.index.block_time(loc.height) - out.timestamp)
    }

    /// Check ground truth consistency: every real spend is a member of its
    /// input's ring, and no output is spent twice.
    pub fn validate_ground_truth(&self, gt: &GroundTruth) -> Result<(), ChainError> {
        let mut spent: HashMap<(Denom, GlobalIdx), &str> = HashMap::new();
        for (input, _) in self.ring_inputs() {
            let Some(real) = gt.real_spend(&input.input_id) else {
                continue;
            };
            if !input.refs.contains(&real) {
                return Err(ChainError::Invalid(format!(
                    "real spend of {} is not in its ring",
                    input.input_id
                )));
            }
            if let Some(prev) = spent.insert((input.denom, real), &input.input_id) {
                return Err(ChainError::Invalid(format!(
                    "output ({}, {real}) spent by both {prev} and {}",
                    input.denom, input.input_id
                )));
            }
        }
        Ok(())
    }

    pub fn write_jsonl<P: AsRef<Path>>(&self, path: P) -> Result<(), ChainError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for block in &self.blocks {
            let line = serde_json::to_string(&FileBlock::from(block)).expect("block serializes");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<P: AsRef<Path>>(path: P) -> Result<Self, ChainError> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut blocks = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fb: FileBlock = serde_json::from_str(&line).map_err(|e| ChainError::Parse {
                line: i + 1,
                source: e,
            })?;
            blocks.push(fb.into_block(i + 1)?);
        }
        Chain::from_blocks(blocks)
    }
}

// --- JSON Lines file schema ---

#[derive(Serialize, Deserialize)]
struct FileBlock {
    height: u64,
    timestamp: u64,
    header_seed: String,
    txs: Vec<FileTx>,
}

#[derive(Serialize, Deserialize)]
struct FileTx {
    tx_id: String,
    coinbase: bool,
    inputs: Vec<FileInput>,
    outputs: Vec<FileOutput>,
}

#[derive(Serialize, Deserialize)]
struct FileInput {
    input_id: String,
    denom: Denom,
    refs: Vec<GlobalIdx>,
}

#[derive(Serialize, Deserialize)]
struct FileOutput {
    denom: Denom,
}

#[derive(Serialize, Deserialize)]
struct FileTruth {
    input_id: String,
    real_ref: GlobalIdx,
}

impl From<&Block> for FileBlock {
    fn from(b: &Block) -> Self {
        FileBlock {
            height: b.height,
            timestamp: b.timestamp,
            header_seed: hex::encode(b.header_seed),
            txs: b
                .txs
                .iter()
                .map(|tx| FileTx {
                    tx_id: tx.tx_id.clone(),
                    coinbase: tx.is_coinbase,
                    inputs: tx
                        .inputs
                        .iter()
                        .map(|i| FileInput {
                            input_id: i.input_id.clone(),
                            denom: i.denom,
                            refs: i.refs.clone(),
                        })
                        .collect(),
                    outputs: tx.outputs.iter().map(|o| FileOutput { denom: o.denom }).collect(),
                })
                .collect(),
        }
    }
}

impl FileBlock {
    fn into_block(self, line: usize) -> Result<Block, ChainError> {
        let seed_bytes = hex::decode(&self.header_seed).map_err(|_| {
            ChainError::Invalid(format!("line {line}: header_seed is not valid hex"))
        })?;
        let header_seed: [u8; 32] = seed_bytes.try_into().map_err(|_| {
            ChainError::Invalid(format!("line {line}: header_seed must be 32 bytes"))
        })?;
        Ok(Block {
            height: self.height,
            timestamp: self.timestamp,
            header_seed,
            txs: self
                .txs
                .into_iter()
                .map(|tx| Transaction {
                    tx_id: tx.tx_id,
                    is_coinbase: tx.coinbase,
                    inputs: tx
                        .inputs
                        .into_iter()
                        .map(|i| RingInput {
                            input_id: i.input_id,
                            denom: i.denom,
                            refs: i.refs,
                        })
                        .collect(),
                    outputs: tx
                        .outputs
                        .into_iter()
                        .map(|o| Output {
                            denom: o.denom,
                            global_idx: 0,
                            block_height: self.height,
                            is_coinbase: tx.coinbase,
                        })
                        .collect(),
                })
                .collect(),
        })
    }
}
