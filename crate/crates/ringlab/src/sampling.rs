//! Mixin-selection policies.
//!
//! Four historical client models (`pre_0_9`, `v0_9`, `v0_10_1`, `v0_11_0`),
//! the gamma-fitted age sampler, and binned sampling. Every sampler is a pure
//! function of (chain index, real output, mixin count, height, rng seed) and
//! returns a sorted, duplicate-free ring that contains the real output.
//!
//! Policies never shrink rings silently: when the chain cannot supply enough
//! distinct outputs the sampler fails with [`SampleError::InsufficientOutputs`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::chain::{ChainError, ChainIndex, Denom, GlobalIdx};

/// 5-day recent zone used by the v0.10.1 policy.
pub const RECENT_WINDOW_V0_10_1: u64 = 432_000;
/// 1.8-day recent zone used by the v0.11.0 policy.
pub const RECENT_WINDOW_V0_11_0: u64 = 155_520;
/// Fraction of the candidate pool drawn from the recent zone.
pub const RECENT_RATIO_DEFAULT: f64 = 0.25;
/// Fitted spend-time model over log-seconds: gamma shape.
pub const GAMMA_SHAPE_DEFAULT: f64 = 19.28;
/// Fitted spend-time model over log-seconds: gamma rate.
pub const GAMMA_RATE_DEFAULT: f64 = 1.61;

const MAX_DRAW_ATTEMPTS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("denomination {denom} has only {available} candidate outputs at height {height}, need {needed}")]
    InsufficientOutputs {
        denom: Denom,
        height: u64,
        available: u64,
        needed: u64,
    },
    #[error("sampler exceeded {MAX_DRAW_ATTEMPTS} rejected draws")]
    NonTerminating,
    #[error("ring size {ring_size} is not divisible by bin size {bin_size}")]
    IndivisibleRing { ring_size: u64, bin_size: u64 },
    #[error("not enough complete bins: need {needed}, have {available}")]
    InsufficientBins { needed: u64, available: u64 },
    #[error("real output {gidx} is not a member of a complete bin")]
    RealOutNotBinned { gidx: GlobalIdx },
    #[error("policy {0} requires a bin map")]
    MissingBinMap(String),
    #[error("binned sampling cannot nest another binned policy")]
    NestedBinned,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Error)]
#[error("invalid policy spec {spec:?}: {reason}")]
pub struct PolicyParseError {
    pub spec: String,
    pub reason: String,
}

/// A mixin-selection policy with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Uniform selection over all prior outputs of the denomination.
    Pre09,
    /// Triangular selection favoring newer outputs.
    V09,
    /// Triangular selection plus a uniform quota from the 5-day recent zone.
    V0101 { recent_window_s: u64, recent_ratio: f64 },
    /// Triangular selection everywhere, 1.8-day recent zone, shared index.
    V0110 { recent_window_s: u64, recent_ratio: f64 },
    /// Age-targeted sampling from a gamma model over log-seconds.
    GammaFit { shape: f64, rate: f64 },
    /// Whole-bin sampling around an inner single-output policy.
    Binned { bin_size: u64, inner: Box<Policy> },
}

impl Policy {
    pub fn v0_10_1() -> Self {
        Policy::V0101 {
            recent_window_s: RECENT_WINDOW_V0_10_1,
            recent_ratio: RECENT_RATIO_DEFAULT,
        }
    }

    pub fn v0_11_0() -> Self {
        Policy::V0110 {
            recent_window_s: RECENT_WINDOW_V0_11_0,
            recent_ratio: RECENT_RATIO_DEFAULT,
        }
    }

    pub fn gamma_fit() -> Self {
        Policy::GammaFit {
            shape: GAMMA_SHAPE_DEFAULT,
            rate: GAMMA_RATE_DEFAULT,
        }
    }

    /// Sample a full ring. `binmap` is required for (and only used by) the
    /// binned policy; it must have been assigned at `height`.
    pub fn sample<R: Rng>(
        &self,
        index: &ChainIndex,
        binmap: Option<&BinMap>,
        denom: Denom,
        real: GlobalIdx,
        num_mixins: u64,
        height: u64,
        rng: &mut R,
    ) -> Result<Vec<GlobalIdx>, SampleError> {
        match self {
            Policy::Pre09 => sample_pre_0_9(index, denom, real, num_mixins, height, rng),
            Policy::V09 => sample_v0_9(index, denom, real, num_mixins, height, rng),
            Policy::V0101 {
                recent_window_s,
                recent_ratio,
            } => sample_v0_10_1(
                index,
                denom,
                real,
                num_mixins,
                height,
                rng,
                *recent_window_s,
                *recent_ratio,
            ),
            Policy::V0110 {
                recent_window_s,
                recent_ratio,
            } => sample_v0_11_0(
                index,
                denom,
                real,
                num_mixins,
                height,
                rng,
                *recent_window_s,
                *recent_ratio,
            ),
            Policy::GammaFit { shape, rate } => {
                sample_gamma(index, denom, real, num_mixins, height, rng, *shape, *rate)
            }
            Policy::Binned { bin_size, inner } => {
                let binmap =
                    binmap.ok_or_else(|| SampleError::MissingBinMap(self.to_string()))?;
                sample_binned(
                    index, binmap, denom, real, num_mixins, *bin_size, inner, height, rng,
                )
            }
        }
    }

    pub fn bin_size(&self) -> Option<u64> {
        match self {
            Policy::Binned { bin_size, .. } => Some(*bin_size),
            _ => None,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Pre09 => write!(f, "pre_0_9"),
            Policy::V09 => write!(f, "v0_9"),
            Policy::V0101 { .. } => write!(f, "v0_10_1"),
            Policy::V0110 { .. } => write!(f, "v0_11_0"),
            Policy::GammaFit { shape, rate } => write!(f, "gamma:{shape},{rate}"),
            Policy::Binned { bin_size, inner } => write!(f, "binned:{bin_size},{inner}"),
        }
    }
}

impl FromStr for Policy {
    type Err = PolicyParseError;

    /// Parse a policy spec string, e.g. `v0_10_1`, `gamma:19.28,1.61` or
    /// `binned:2,gamma`.
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| PolicyParseError {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let (head, args) = match spec.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (spec, None),
        };
        match (head, args) {
            ("pre_0_9", None) => Ok(Policy::Pre09),
            ("v0_9", None) => Ok(Policy::V09),
            ("v0_10_1", None) => Ok(Policy::v0_10_1()),
            ("v0_11_0", None) => Ok(Policy::v0_11_0()),
            ("gamma" | "gamma_fit", None) => Ok(Policy::gamma_fit()),
            ("gamma" | "gamma_fit", Some(a)) => {
                let (shape, rate) = a
                    .split_once(',')
                    .ok_or_else(|| err("expected gamma:<shape>,<rate>"))?;
                let shape: f64 = shape.trim().parse().map_err(|_| err("bad shape"))?;
                let rate: f64 = rate.trim().parse().map_err(|_| err("bad rate"))?;
                if shape <= 0.0 || rate <= 0.0 {
                    return Err(err("shape and rate must be positive"));
                }
                Ok(Policy::GammaFit { shape, rate })
            }
            ("binned", Some(a)) => {
                let (size, inner) = a
                    .split_once(',')
                    .ok_or_else(|| err("expected binned:<bin_size>,<inner policy>"))?;
                let bin_size: u64 = size.trim().parse().map_err(|_| err("bad bin size"))?;
                if bin_size == 0 {
                    return Err(err("bin size must be >= 1"));
                }
                let inner: Policy = inner.parse()?;
                if matches!(inner, Policy::Binned { .. }) {
                    return Err(err("binned policy cannot nest"));
                }
                Ok(Policy::Binned {
                    bin_size,
                    inner: Box::new(inner),
                })
            }
            _ => Err(err("unknown policy")),
        }
    }
}

/// `BaseReqMixCount = floor((num_mixins + 1) * 1.5 + 1)`.
pub fn base_req_mix_count(num_mixins: u64) -> u64 {
    (num_mixins + 1) * 3 / 2 + 1
}

/// Draw an index in `[lo, hi]` with probability density increasing linearly
/// with the index (the inverse-CDF of a triangular density via sqrt).
pub fn triangle_select<R: Rng>(lo: GlobalIdx, hi: GlobalIdx, rng: &mut R) -> GlobalIdx {
    debug_assert!(lo <= hi);
    let span = (hi - lo + 1) as f64;
    let u: f64 = rng.random();
    (lo + (span * u.sqrt()) as u64).min(hi)
}

fn check_pool(
    index: &ChainIndex,
    denom: Denom,
    num_mixins: u64,
    height: u64,
) -> Result<GlobalIdx, SampleError> {
    let top = index.top_global_index(denom, height)?;
    // `top` candidates remain once the real output is excluded.
    if num_mixins > top {
        return Err(SampleError::InsufficientOutputs {
            denom,
            height,
            available: top,
            needed: num_mixins,
        });
    }
    Ok(top)
}

/// Rejection-sample distinct candidates (never the real output) until `acc`
/// holds `target_len` entries.
fn gather_distinct<R: Rng>(
    acc: &mut Vec<GlobalIdx>,
    target_len: u64,
    real: GlobalIdx,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> GlobalIdx,
) -> Result<(), SampleError> {
    let mut attempts = 0u64;
    while (acc.len() as u64) < target_len {
        let i = draw(rng);
        if i != real && !acc.contains(&i) {
            acc.push(i);
        }
        attempts += 1;
        if attempts > MAX_DRAW_ATTEMPTS {
            return Err(SampleError::NonTerminating);
        }
    }
    Ok(())
}

/// Uniformly subsample `num_mixins` candidates, append the real output and
/// sort ascending.
fn finish_ring<R: Rng>(
    candidates: Vec<GlobalIdx>,
    num_mixins: u64,
    real: GlobalIdx,
    rng: &mut R,
) -> Vec<GlobalIdx> {
    debug_assert!(candidates.len() as u64 >= num_mixins);
    let chosen = rand::seq::index::sample(rng, candidates.len(), num_mixins as usize);
    let mut ring: Vec<GlobalIdx> = chosen.iter().map(|i| candidates[i]).collect();
    ring.push(real);
    ring.sort_unstable();
    ring
}

/// Uniform candidate selection over all prior outputs of the denomination.
pub fn sample_pre_0_9<R: Rng>(
    index: &ChainIndex,
    denom: Denom,
    real: GlobalIdx,
    num_mixins: u64,
    height: u64,
    rng: &mut R,
) -> Result<Vec<GlobalIdx>, SampleError> {
    let top = check_pool(index, denom, num_mixins, height)?;
    let base = base_req_mix_count(num_mixins).min(top);
    let mut cand = Vec::with_capacity(base as usize);
    gather_distinct(&mut cand, base, real, rng, |r| r.random_range(0..=top))?;
    Ok(finish_ring(cand, num_mixins, real, rng))
}

/// Triangular candidate selection favoring newer outputs.
pub fn sample_v0_9<R: Rng>(
    index: &ChainIndex,
    denom: Denom,
    real: GlobalIdx,
    num_mixins: u64,
    height: u64,
    rng: &mut R,
) -> Result<Vec<GlobalIdx>, SampleError> {
    let top = check_pool(index, denom, num_mixins, height)?;
    let base = base_req_mix_count(num_mixins).min(top);
    let mut cand = Vec::with_capacity(base as usize);
    gather_distinct(&mut cand, base, real, rng, |r| triangle_select(0, top, r))?;
    Ok(finish_ring(cand, num_mixins, real, rng))
}

#[allow(clippy::too_many_arguments)]
fn sample_recent_zone<R: Rng>(
    index: &ChainIndex,
    denom: Denom,
    real: GlobalIdx,
    num_mixins: u64,
    height: u64,
    rng: &mut R,
    recent_window_s: u64,
    recent_ratio: f64,
    triangle_in_zone: bool,
) -> Result<Vec<GlobalIdx>, SampleError> {
    let top = check_pool(index, denom, num_mixins, height)?;
    let boundary = index.recent_zone_boundary(denom, height, recent_window_s)?;
    let zone_lo = boundary.max(0) as u64;
    let base_nominal = base_req_mix_count(num_mixins);
    let base = base_nominal.min(top);

    let zone_span = (top as i64 - boundary + 1) as u64;
    let mut quota = zone_span
        .min((base_nominal as f64 * recent_ratio).floor() as u64)
        .max(1);
    if real as i64 > boundary {
        // The real output is itself recent and occupies one recent slot.
        quota = quota.saturating_sub(1);
    }
    // Never ask the zone for more distinct candidates than it holds.
    let zone_avail = (top - zone_lo + 1) - u64::from(real >= zone_lo);
    quota = quota.min(zone_avail).min(base);

    let mut cand = Vec::with_capacity(base as usize);
    gather_distinct(&mut cand, quota, real, rng, |r| {
        if triangle_in_zone {
            triangle_select(zone_lo, top, r)
        } else {
            r.random_range(zone_lo..=top)
        }
    })?;
    gather_distinct(&mut cand, base, real, rng, |r| triangle_select(0, top, r))?;
    Ok(finish_ring(cand, num_mixins, real, rng))
}

/// v0.10.1: uniform quota from the 5-day recent zone, triangle elsewhere.
#[allow(clippy::too_many_arguments)]
pub fn sample_v0_10_1<R: Rng>(
    index: &ChainIndex,
    denom: Denom,
    real: GlobalIdx,
    num_mixins: u64,
    height: u64,
    rng: &mut R,
    recent_window_s: u64,
    recent_ratio: f64,
) -> Result<Vec<GlobalIdx>, SampleError> {
    sample_recent_zone(
        index,
        denom,
        real,
        num_mixins,
        height,
        rng,
        recent_window_s,
        recent_ratio,
        false,
    )
}

/// v0.11.0: triangular selection inside a 1.8-day recent zone as well.
///
/// The denomination qualifier is dropped in this era (one shared RingCT
/// index); callers pass the shared denomination.
#[allow(clippy::too_many_arguments)]
pub fn sample_v0_11_0<R: Rng>(
    index: &ChainIndex,
    denom: Denom,
    real: GlobalIdx,
    num_mixins: u64,
    height: u64,
    rng: &mut R,
    recent_window_s: u64,
    recent_ratio: f64,
) -> Result<Vec<GlobalIdx>, SampleError> {
    sample_recent_zone(
        index,
        denom,
        real,
        num_mixins,
        height,
        rng,
        recent_window_s,
        recent_ratio,
        true,
    )
}

fn gamma_draw_one<R: Rng>(
    index: &ChainIndex,
    denom: Denom,
    height: u64,
    dist: &Gamma<f64>,
    rng: &mut R,
    attempts: &mut u64,
) -> Result<GlobalIdx, SampleError> {
    let di = index
        .denom_index(denom)
        .ok_or(ChainError::NoSuchDenomination { denom, height })?;
    let now = index.block_time(height);
    let chain_age = now - index.block_time(0);
    loop {
        *attempts += 1;
        if *attempts > MAX_DRAW_ATTEMPTS {
            return Err(SampleError::NonTerminating);
        }
        let age = dist.sample(rng).exp();
        if chain_age > 0 && age > chain_age as f64 {
            continue;
        }
        let target = (now as f64 - age).max(0.0) as u64;
        let span = di
            .nearest_span_by_time(target, height)
            .ok_or(ChainError::NoSuchDenomination { denom, height })?;
        return Ok(span.first + rng.random_range(0..span.count));
    }
}

/// Sample mixins whose ages follow a gamma model over log-seconds: draw a
/// target age, locate the closest block holding outputs of the denomination
/// (ties toward the older block) and pick uniformly within it.
#[allow(clippy::too_many_arguments)]
pub fn sample_gamma<R: Rng>(
    index: &ChainIndex,
    denom: Denom,
    real: GlobalIdx,
    num_mixins: u64,
    height: u64,
    rng: &mut R,
    shape: f64,
    rate: f64,
) -> Result<Vec<GlobalIdx>, SampleError> {
    check_pool(index, denom, num_mixins, height)?;
    let dist = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
    let mut ring = Vec::with_capacity(num_mixins as usize + 1);
    let mut attempts = 0u64;
    while (ring.len() as u64) < num_mixins {
        let i = gamma_draw_one(index, denom, height, &dist, rng, &mut attempts)?;
        if i != real && !ring.contains(&i) {
            ring.push(i);
        }
    }
    ring.push(real);
    ring.sort_unstable();
    Ok(ring)
}

// --- Binned sampling ---

/// Assignment of outputs to fixed-size bins of near-simultaneous outputs.
#[derive(Debug, Clone)]
pub struct BinMap {
    bin_size: u64,
    out_to_bin: HashMap<GlobalIdx, u32>,
    bins: Vec<Vec<GlobalIdx>>,
    last_complete: Option<u32>,
    irregular: bool,
}

impl BinMap {
    pub fn bin_size(&self) -> u64 {
        self.bin_size
    }

    pub fn bin_of(&self, gidx: GlobalIdx) -> Option<u32> {
        self.out_to_bin.get(&gidx).copied()
    }

    pub fn members(&self, bin: u32) -> &[GlobalIdx] {
        &self.bins[bin as usize]
    }

    pub fn num_bins(&self) -> u32 {
        self.bins.len() as u32
    }

    /// A complete bin holds exactly `bin_size` members; merged or undersized
    /// bins are not complete.
    pub fn is_complete(&self, bin: u32) -> bool {
        self.bins[bin as usize].len() as u64 == self.bin_size
    }

    pub fn complete_bin_count(&self) -> u64 {
        self.bins
            .iter()
            .filter(|b| b.len() as u64 == self.bin_size)
            .count() as u64
    }

    pub fn last_complete_bin(&self) -> Option<u32> {
        self.last_complete
    }

    /// True when the map contains merged-leftover or undersized bins.
    pub fn irregular(&self) -> bool {
        self.irregular
    }
}

/// Incremental bin construction: blocks are fed in order, each block's
/// outputs are shuffled by a PRNG seeded from its header, chunked into bins
/// of `bin_size`, and leftovers pair with the neighboring block. Leftovers
/// that cannot pair with a neighbor are merged into the last complete bin.
#[derive(Debug)]
pub struct BinAssigner {
    bin_size: u64,
    map: BinMap,
    pending: Vec<(GlobalIdx, u64)>,
}

impl BinAssigner {
    pub fn new(bin_size: u64) -> Self {
        assert!(bin_size >= 1, "bin_size must be >= 1");
        BinAssigner {
            bin_size,
            map: BinMap {
                bin_size,
                out_to_bin: HashMap::new(),
                bins: Vec::new(),
                last_complete: None,
                irregular: false,
            },
            pending: Vec::new(),
        }
    }

    fn commit_bin(&mut self, members: Vec<GlobalIdx>, heights_span: u64) {
        let id = self.map.bins.len() as u32;
        for &g in &members {
            self.map.out_to_bin.insert(g, id);
        }
        if members.len() as u64 == self.bin_size && heights_span <= 1 {
            self.map.last_complete = Some(id);
        } else {
            self.map.irregular = true;
        }
        self.map.bins.push(members);
    }

    fn merge_pending(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        match self.map.last_complete {
            Some(last) => {
                // Stragglers join the last complete bin, which stops being a
                // regular bin of exactly bin_size members.
                let members: Vec<GlobalIdx> = self.pending.drain(..).map(|(g, _)| g).collect();
                for &g in &members {
                    self.map.out_to_bin.insert(g, last);
                }
                self.map.bins[last as usize].extend(members);
                self.map.irregular = true;
                // That bin is no longer complete; walk back to the previous one.
                self.map.last_complete = self
                    .map
                    .bins
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(_, b)| b.len() as u64 == self.bin_size)
                    .map(|(i, _)| i as u32);
            }
            None => {
                // No complete bin exists yet; keep accumulating. The first
                // bin formed from this backlog is flagged irregular if it
                // spans more than neighboring blocks.
            }
        }
    }

    /// Feed the next block. Must be called for every height in order, even
    /// for blocks holding no outputs of this denomination.
    pub fn push_block(&mut self, height: u64, header_seed: &[u8; 32], outputs: &[GlobalIdx]) {
        if let Some(&(_, h0)) = self.pending.first() {
            if h0 + 1 < height && self.map.last_complete.is_some() {
                self.merge_pending();
            }
        }
        if outputs.is_empty() {
            return;
        }
        let mut perm = outputs.to_vec();
        let mut prng = ChaCha12Rng::from_seed(*header_seed);
        perm.shuffle(&mut prng);
        self.pending.extend(perm.into_iter().map(|g| (g, height)));
        while self.pending.len() as u64 >= self.bin_size {
            let rest = self.pending.split_off(self.bin_size as usize);
            let bin = std::mem::replace(&mut self.pending, rest);
            let span = bin.last().unwrap().1 - bin.first().unwrap().1;
            self.commit_bin(bin.into_iter().map(|(g, _)| g).collect(), span);
        }
    }

    /// Read access to the bins assigned so far (pending outputs are unbinned).
    pub fn binmap(&self) -> &BinMap {
        &self.map
    }

    /// Finalize: remaining stragglers merge into the last complete bin, or
    /// form one undersized flagged bin when no complete bin exists.
    pub fn finish(mut self) -> BinMap {
        if !self.pending.is_empty() {
            if self.map.last_complete.is_some() {
                self.merge_pending();
            } else {
                let members: Vec<GlobalIdx> = self.pending.drain(..).map(|(g, _)| g).collect();
                self.commit_bin(members, u64::MAX);
            }
        }
        self.map
    }
}

/// Deterministically assign every output of `denom` in blocks `0..=height`
/// to a bin.
pub fn assign_bins(index: &ChainIndex, denom: Denom, bin_size: u64, height: u64) -> BinMap {
    let mut assigner = BinAssigner::new(bin_size);
    let spans = index.denom_index(denom).map(|d| d.spans()).unwrap_or(&[]);
    let mut si = 0;
    for h in 0..=height.min(index.tip_height()) {
        let outs: Vec<GlobalIdx> = if si < spans.len() && spans[si].height == h {
            let s = &spans[si];
            si += 1;
            (s.first..=s.last()).collect()
        } else {
            Vec::new()
        };
        assigner.push_block(h, index.header_seed(h), &outs);
    }
    assigner.finish()
}

/// Draw one candidate output index the way `policy` draws its candidates.
fn draw_single<R: Rng>(
    policy: &Policy,
    index: &ChainIndex,
    denom: Denom,
    height: u64,
    rng: &mut R,
    attempts: &mut u64,
) -> Result<GlobalIdx, SampleError> {
    let top = index.top_global_index(denom, height)?;
    match policy {
        Policy::Pre09 => Ok(rng.random_range(0..=top)),
        // The recent-zone policies' quota phase has no single-draw analogue;
        // their base candidate stream is triangular.
        Policy::V09 | Policy::V0101 { .. } | Policy::V0110 { .. } => {
            Ok(triangle_select(0, top, rng))
        }
        Policy::GammaFit { shape, rate } => {
            let dist = Gamma::new(*shape, 1.0 / rate).expect("valid gamma parameters");
            gamma_draw_one(index, denom, height, &dist, rng, attempts)
        }
        Policy::Binned { .. } => Err(SampleError::NestedBinned),
    }
}

/// Binned sampling: the ring is the real output's whole bin plus further
/// whole bins located by single draws from the inner policy.
#[allow(clippy::too_many_arguments)]
pub fn sample_binned<R: Rng>(
    index: &ChainIndex,
    binmap: &BinMap,
    denom: Denom,
    real: GlobalIdx,
    num_mixins: u64,
    bin_size: u64,
    inner: &Policy,
    height: u64,
    rng: &mut R,
) -> Result<Vec<GlobalIdx>, SampleError> {
    let ring_size = num_mixins + 1;
    if ring_size % bin_size != 0 {
        return Err(SampleError::IndivisibleRing {
            ring_size,
            bin_size,
        });
    }
    let needed_bins = ring_size / bin_size;
    let available = binmap.complete_bin_count();
    if available < needed_bins {
        return Err(SampleError::InsufficientBins {
            needed: needed_bins,
            available,
        });
    }
    let real_bin = binmap
        .bin_of(real)
        .filter(|&b| binmap.is_complete(b))
        .ok_or(SampleError::RealOutNotBinned { gidx: real })?;

    let mut ring: Vec<GlobalIdx> = binmap.members(real_bin).to_vec();
    let mut used = vec![real_bin];
    let mut attempts = 0u64;
    while (ring.len() as u64) < ring_size {
        attempts += 1;
        if attempts > MAX_DRAW_ATTEMPTS {
            return Err(SampleError::InsufficientBins {
                needed: needed_bins,
                available,
            });
        }
        let candidate = draw_single(inner, index, denom, height, rng, &mut attempts)?;
        let Some(bin) = binmap.bin_of(candidate) else {
            continue;
        };
        if used.contains(&bin) || !binmap.is_complete(bin) {
            continue;
        }
        ring.extend_from_slice(binmap.members(bin));
        used.push(bin);
    }
    ring.sort_unstable();
    Ok(ring)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::chi_square_pvalue;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// A chain index with `per_block` outputs of `denom` in each of
    /// `num_blocks` blocks, `interval` seconds apart.
    fn dense_index(denom: Denom, num_blocks: u64, per_block: u64, interval: u64) -> ChainIndex {
        let mut ix = ChainIndex::new();
        for h in 0..num_blocks {
            let mut seed = [0u8; 32];
            seed[..8].copy_from_slice(&(h + 1).to_le_bytes());
            ix.push_block(h * interval, seed);
            for _ in 0..per_block {
                ix.push_output(denom, false);
            }
        }
        ix
    }

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn base_req_examples() {
        assert_eq!(base_req_mix_count(4), 8);
        assert_eq!(base_req_mix_count(0), 2);
    }

    #[test]
    fn triangle_singleton() {
        let mut r = rng(1);
        assert_eq!(triangle_select(7, 7, &mut r), 7);
    }

    #[test]
    fn triangle_decile_ratio_and_mean() {
        // Linear density over [0,999]: P(top decile)/P(bottom decile) is
        // (19/100)/(1/100) = 19, and the mean is 2N/3.
        let mut r = rng(2);
        let n = 1_000_000u64;
        let mut deciles = [0u64; 10];
        let mut sum = 0u64;
        for _ in 0..n {
            let v = triangle_select(0, 999, &mut r);
            deciles[(v / 100) as usize] += 1;
            sum += v;
        }
        let ratio = deciles[9] as f64 / deciles[0] as f64;
        assert!((ratio - 19.0).abs() < 1.0, "ratio = {ratio}");
        let mean = sum as f64 / n as f64;
        let expect = 2.0 * 999.0 / 3.0;
        assert!((mean - expect).abs() / expect < 0.01, "mean = {mean}");
    }

    #[test]
    fn pre_0_9_zero_mixins_is_real_only() {
        let ix = dense_index(100, 10, 3, 120);
        let ring = sample_pre_0_9(&ix, 100, 5, 0, 9, &mut rng(3)).unwrap();
        assert_eq!(ring, vec![5]);
    }

    #[test]
    fn rings_sorted_and_contain_real() {
        let ix = dense_index(100, 50, 4, 120);
        for seed in 0..50 {
            let mut r = rng(seed);
            for policy in [
                Policy::Pre09,
                Policy::V09,
                Policy::v0_10_1(),
                Policy::v0_11_0(),
                Policy::gamma_fit(),
            ] {
                let ring = policy.sample(&ix, None, 100, 17, 4, 49, &mut r).unwrap();
                assert_eq!(ring.len(), 5, "{policy}");
                assert!(ring.contains(&17), "{policy}");
                assert!(ring.windows(2).all(|w| w[0] < w[1]), "{policy}");
                let top = ix.top_global_index(100, 49).unwrap();
                assert!(*ring.last().unwrap() <= top, "{policy}");
            }
        }
    }

    #[test]
    fn same_seed_same_ring() {
        let ix = dense_index(0, 40, 3, 120);
        let p = Policy::v0_10_1();
        let a = p.sample(&ix, None, 0, 30, 4, 39, &mut rng(9)).unwrap();
        let b = p.sample(&ix, None, 0, 30, 4, 39, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn insufficient_outputs_is_an_error() {
        let ix = dense_index(100, 1, 3, 120);
        let err = sample_pre_0_9(&ix, 100, 0, 5, 0, &mut rng(4)).unwrap_err();
        assert!(matches!(err, SampleError::InsufficientOutputs { .. }));
    }

    #[test]
    fn v0_9_mixin_indices_fit_linear_density() {
        let ix = dense_index(100, 100, 10, 120);
        let top = ix.top_global_index(100, 99).unwrap();
        let real = 500;
        let mut r = rng(5);
        let mut counts = vec![0u64; 10];
        let mut total = 0u64;
        for _ in 0..20_000 {
            let ring = sample_v0_9(&ix, 100, real, 4, 99, &mut r).unwrap();
            for &g in &ring {
                if g != real {
                    counts[(g * 10 / (top + 1)) as usize] += 1;
                    total += 1;
                }
            }
        }
        // Expected decile mass under the linear density: (2j+1)/100.
        let expected: Vec<f64> = (0..10)
            .map(|j| total as f64 * (2 * j + 1) as f64 / 100.0)
            .collect();
        let p = chi_square_pvalue(&counts, &expected);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn v0_10_1_young_chain_degenerates() {
        // Whole history younger than 5 days: boundary is -1 and sampling
        // still works over the full range.
        let ix = dense_index(100, 20, 5, 120);
        assert_eq!(ix.recent_zone_boundary(100, 19, RECENT_WINDOW_V0_10_1).unwrap(), -1);
        let ring = sample_v0_10_1(
            &ix,
            100,
            50,
            4,
            19,
            &mut rng(6),
            RECENT_WINDOW_V0_10_1,
            RECENT_RATIO_DEFAULT,
        )
        .unwrap();
        assert_eq!(ring.len(), 5);
    }

    #[test]
    fn v0_10_1_recent_fraction_meets_quota() {
        // 30 days of blocks, one output per block, 5-day recent zone.
        let ix = dense_index(100, 30 * 24 * 30, 1, 120);
        let h = ix.tip_height();
        let boundary = ix.recent_zone_boundary(100, h, RECENT_WINDOW_V0_10_1).unwrap();
        assert!(boundary >= 0);
        let real = 10; // old output, no quota decrement
        let mut r = rng(7);
        let mut recent = 0u64;
        let mut total = 0u64;
        let trials = 20_000;
        for _ in 0..trials {
            let ring = sample_v0_10_1(
                &ix,
                100,
                real,
                4,
                h,
                &mut r,
                RECENT_WINDOW_V0_10_1,
                RECENT_RATIO_DEFAULT,
            )
            .unwrap();
            for &g in &ring {
                if g != real {
                    total += 1;
                    if g as i64 > boundary {
                        recent += 1;
                    }
                }
            }
        }
        // Quota is 2 of 8 candidates; after uniform subsampling the mixin
        // recent fraction must be at least quota/base minus slack (triangle
        // fills add more recent hits, never fewer).
        let frac = recent as f64 / total as f64;
        assert!(frac >= 0.25 - 0.05, "recent fraction {frac}");
    }

    #[test]
    fn v0_11_0_recent_zone_draws_fit_triangle() {
        let ix = dense_index(0, 5000, 1, 120);
        let h = ix.tip_height();
        let boundary = ix.recent_zone_boundary(0, h, RECENT_WINDOW_V0_11_0).unwrap();
        assert!(boundary >= 0);
        let zone_lo = boundary.max(0) as u64;
        let top = ix.top_global_index(0, h).unwrap();
        let real = 3;
        let mut r = rng(8);
        let mut zone_counts = vec![0u64; 10];
        let mut zone_total = 0u64;
        // recent_ratio 1.0 makes every candidate a recent-zone draw, so the
        // sampled mixins show the zone phase's distribution undiluted.
        for _ in 0..30_000 {
            let ring =
                sample_v0_11_0(&ix, 0, real, 4, h, &mut r, RECENT_WINDOW_V0_11_0, 1.0).unwrap();
            for &g in &ring {
                if g != real {
                    assert!(g >= zone_lo, "mixin {g} outside the recent zone");
                    let decile = ((g - zone_lo) * 10 / (top - zone_lo + 1)) as usize;
                    zone_counts[decile] += 1;
                    zone_total += 1;
                }
            }
        }
        // Zone draws are triangular over the zone: linear decile profile.
        let expected: Vec<f64> = (0..10)
            .map(|j| zone_total as f64 * (2 * j + 1) as f64 / 100.0)
            .collect();
        let p = chi_square_pvalue(&zone_counts, &expected);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn gamma_single_block_chain() {
        let ix = dense_index(0, 1, 8, 120);
        let ring = sample_gamma(&ix, 0, 2, 4, 0, &mut rng(10), 19.28, 1.61).unwrap();
        assert_eq!(ring.len(), 5);
        assert!(ring.iter().all(|&g| g < 8));
    }

    #[test]
    fn bin_size_one_is_identity() {
        let ix = dense_index(0, 5, 3, 120);
        let bm = assign_bins(&ix, 0, 1, 4);
        assert_eq!(bm.num_bins(), 15);
        for g in 0..15u64 {
            let b = bm.bin_of(g).unwrap();
            assert_eq!(bm.members(b), &[g]);
        }
        assert!(!bm.irregular());
    }

    #[test]
    fn bins_chunk_and_pair_with_neighbors() {
        // Block 0 holds 7 outputs, block 1 holds 3: bin size 2 gives three
        // bins inside block 0, one bin spanning blocks 0-1, one inside
        // block 1, and no bin spans a gap of more than one block.
        let mut ix = ChainIndex::new();
        ix.push_block(0, [1u8; 32]);
        for _ in 0..7 {
            ix.push_output(0, false);
        }
        ix.push_block(120, [2u8; 32]);
        for _ in 0..3 {
            ix.push_output(0, false);
        }
        let bm = assign_bins(&ix, 0, 2, 1);
        assert_eq!(bm.num_bins(), 5);
        assert_eq!(bm.complete_bin_count(), 5);
        for b in 0..bm.num_bins() {
            let hs: Vec<u64> = bm
                .members(b)
                .iter()
                .map(|&g| ix.out_info(0, g).unwrap().height)
                .collect();
            let span = hs.iter().max().unwrap() - hs.iter().min().unwrap();
            assert!(span <= 1, "bin {b} spans {span} blocks");
        }
        // Exactly one bin crosses the block boundary.
        let crossing = (0..bm.num_bins())
            .filter(|&b| {
                let hs: Vec<u64> = bm
                    .members(b)
                    .iter()
                    .map(|&g| ix.out_info(0, g).unwrap().height)
                    .collect();
                hs.iter().min() != hs.iter().max()
            })
            .count();
        assert_eq!(crossing, 1);
    }

    #[test]
    fn header_seed_locality() {
        let ix1 = dense_index(0, 6, 4, 120);
        let ix2 = {
            let mut ix = ChainIndex::new();
            for h in 0..6u64 {
                let mut seed = [0u8; 32];
                seed[..8].copy_from_slice(&(h + 1).to_le_bytes());
                if h == 3 {
                    seed[31] = 0xFF; // perturb block 3 only
                }
                ix.push_block(h * 120, seed);
                for _ in 0..4 {
                    ix.push_output(0, false);
                }
            }
            ix
        };
        let a = assign_bins(&ix1, 0, 2, 5);
        let b = assign_bins(&ix2, 0, 2, 5);
        let block3: Vec<GlobalIdx> = (12..16).collect();
        for bin in 0..a.num_bins() {
            let ma = a.members(bin);
            if ma.iter().all(|g| !block3.contains(g)) {
                assert_eq!(ma, b.members(bin));
            }
        }
    }

    #[test]
    fn binned_ring_references_exact_bin_count() {
        let ix = dense_index(0, 200, 4, 120);
        let bm = assign_bins(&ix, 0, 2, 199);
        let mut r = rng(11);
        for _ in 0..50 {
            let ring = sample_binned(&ix, &bm, 0, 100, 5, 2, &Policy::V09, 199, &mut r).unwrap();
            assert_eq!(ring.len(), 6);
            let bins: std::collections::HashSet<u32> =
                ring.iter().map(|&g| bm.bin_of(g).unwrap()).collect();
            assert_eq!(bins.len(), 3);
            // The real output's whole bin is present.
            let rb = bm.bin_of(100).unwrap();
            for &g in bm.members(rb) {
                assert!(ring.contains(&g));
            }
        }
    }

    #[test]
    fn binned_rejects_indivisible_ring() {
        let ix = dense_index(0, 10, 4, 120);
        let bm = assign_bins(&ix, 0, 2, 9);
        let err =
            sample_binned(&ix, &bm, 0, 4, 4, 2, &Policy::Pre09, 9, &mut rng(12)).unwrap_err();
        assert!(matches!(err, SampleError::IndivisibleRing { .. }));
    }

    #[test]
    fn policy_spec_round_trip() {
        for spec in ["pre_0_9", "v0_9", "v0_10_1", "v0_11_0", "gamma:19.28,1.61", "binned:2,gamma:19.28,1.61"] {
            let p: Policy = spec.parse().unwrap();
            assert_eq!(p.to_string(), spec);
        }
        assert!("nonsense".parse::<Policy>().is_err());
        assert!("binned:2,binned:2,v0_9".parse::<Policy>().is_err());
        assert_eq!("gamma".parse::<Policy>().unwrap(), Policy::gamma_fit());
    }
}
