//! Small constructors for hand-written chain fixtures in tests, plus a
//! couple of statistical oracles shared by unit and integration tests.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::chain::{Block, Chain, Denom, GlobalIdx, Output, RingInput, Transaction};

/// Brute-force all-solutions oracle for forced spends: per denomination,
/// enumerate every assignment of inputs to referenced outputs (one output
/// per input, outputs distinct) and report an input's spend only when every
/// assignment agrees. Returns `None` when some denomination has no valid
/// assignment at all. Exponential — for small fixtures only.
pub fn forced_assignments_oracle(chain: &Chain) -> Option<BTreeMap<String, GlobalIdx>> {
    fn enumerate(
        inputs: &[(String, Vec<GlobalIdx>)],
        i: usize,
        used: &mut HashSet<GlobalIdx>,
        current: &mut Vec<GlobalIdx>,
        seen: &mut Vec<HashSet<GlobalIdx>>,
        any: &mut bool,
    ) {
        if i == inputs.len() {
            *any = true;
            for (j, &v) in current.iter().enumerate() {
                seen[j].insert(v);
            }
            return;
        }
        for &c in &inputs[i].1 {
            if used.insert(c) {
                current.push(c);
                enumerate(inputs, i + 1, used, current, seen, any);
                current.pop();
                used.remove(&c);
            }
        }
    }

    let mut by_denom: HashMap<Denom, Vec<(String, Vec<GlobalIdx>)>> = HashMap::new();
    for (input, _) in chain.ring_inputs() {
        by_denom
            .entry(input.denom)
            .or_default()
            .push((input.input_id.clone(), input.refs.clone()));
    }
    let mut forced = BTreeMap::new();
    for inputs in by_denom.values() {
        let mut seen = vec![HashSet::new(); inputs.len()];
        let mut any = false;
        enumerate(
            inputs,
            0,
            &mut HashSet::new(),
            &mut Vec::new(),
            &mut seen,
            &mut any,
        );
        if !any {
            return None;
        }
        for ((id, _), seen) in inputs.iter().zip(&seen) {
            if seen.len() == 1 {
                forced.insert(id.clone(), *seen.iter().next().unwrap());
            }
        }
    }
    Some(forced)
}

/// Pearson chi-square goodness-of-fit p-value for observed counts against
/// expected counts (degrees of freedom = cells - 1).
pub fn chi_square_pvalue(observed: &[u64], expected: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    assert_eq!(observed.len(), expected.len());
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            assert!(e > 0.0, "expected counts must be positive");
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let df = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

pub fn coinbase_tx(tx_id: &str, out_denoms: &[Denom]) -> Transaction {
    Transaction {
        tx_id: tx_id.to_string(),
        is_coinbase: true,
        inputs: vec![],
        outputs: out_denoms
            .iter()
            .map(|&d| Output {
                denom: d,
                global_idx: 0,
                block_height: 0,
                is_coinbase: true,
            })
            .collect(),
    }
}

pub fn tx(tx_id: &str, inputs: &[(&str, Denom, &[GlobalIdx])], out_denoms: &[Denom]) -> Transaction {
    Transaction {
        tx_id: tx_id.to_string(),
        is_coinbase: false,
        inputs: inputs
            .iter()
            .map(|(id, denom, refs)| RingInput {
                input_id: id.to_string(),
                denom: *denom,
                refs: refs.to_vec(),
            })
            .collect(),
        outputs: out_denoms
            .iter()
            .map(|&d| Output {
                denom: d,
                global_idx: 0,
                block_height: 0,
                is_coinbase: false,
            })
            .collect(),
    }
}

pub fn block(height: u64, timestamp: u64, txs: Vec<Transaction>) -> Block {
    let mut header_seed = [0u8; 32];
    header_seed[..8].copy_from_slice(&(height + 1).to_le_bytes());
    Block {
        height,
        timestamp,
        header_seed,
        txs,
    }
}
