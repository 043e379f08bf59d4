//! Temporal-analysis metrics.
//!
//! Guess-Newest, guessing entropy `Ge = Σ i·p_i` (probabilities sorted
//! descending, i from 0), effective untraceability `1 + 2·Ge`, the Bayes
//! posterior over ring members given spend-age and mixin-age densities, and
//! the closed-form worst-case (`ge_min` / `bge_min`) math for binned rings
//! under a bounded divergence ε between the two densities.

use std::io::Write;

use thiserror::Error;

use crate::chain::GlobalIdx;

#[derive(Debug, Error)]
pub enum TemporalError {
    #[error("probabilities sum to {0}, not 1")]
    NonNormalized(f64),
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("degenerate ring: {0}")]
    DegenerateRing(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Posterior probability that each ring member is the real spend, aligned
/// with the ring's refs.
#[derive(Debug, Clone, PartialEq)]
pub struct RingPosterior {
    pub probs: Vec<f64>,
}

/// Maximum percent error ε between the spend-time and mixin-sampling
/// distributions; the admissible density ratio lies in [r_min, r_max].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    pub epsilon: f64,
}

impl ErrorModel {
    pub fn new(epsilon: f64) -> Self {
        assert!((0.0..=1.0).contains(&epsilon), "epsilon must be in [0,1]");
        ErrorModel { epsilon }
    }

    pub fn r_min(&self) -> f64 {
        1.0 - self.epsilon
    }

    pub fn r_max(&self) -> f64 {
        1.0 / (1.0 - self.epsilon)
    }
}

/// The newest ring member (largest global index — blockchain order).
pub fn guess_newest(refs: &[GlobalIdx]) -> GlobalIdx {
    *refs.iter().max().expect("ring must be non-empty")
}

fn check_probs(probs: &[f64]) -> Result<(), TemporalError> {
    if let Some(&p) = probs.iter().find(|&&p| p < 0.0) {
        return Err(TemporalError::NegativeProbability(p));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(TemporalError::NonNormalized(sum));
    }
    Ok(())
}

/// Expected number of additional guesses, beyond the first, to hit the real
/// spend when guessing in descending-probability order.
pub fn guessing_entropy(probs: &[f64]) -> Result<f64, TemporalError> {
    check_probs(probs)?;
    let mut sorted = probs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| i as f64 * p)
        .sum())
}

/// Effective anonymity-set size: `1 + 2·Ge`. Equals the ring size when all
/// members are equiprobable.
pub fn effective_untraceability(probs: &[f64]) -> Result<f64, TemporalError> {
    Ok(1.0 + 2.0 * guessing_entropy(probs)?)
}

/// Bayes posterior over ring members: `p_i ∝ D_S(x_i) / D_M(x_i)` where
/// `x_i` is member i's age, `D_S` the spend-age density and `D_M` the mixin
/// density. A member with positive spend density but zero mixin density has
/// an infinite ratio and takes all the mass (the limit, not an error) —
/// unless two members do, which is degenerate.
pub fn posterior_real_spend(
    ages: &[f64],
    spend_density: impl Fn(f64) -> f64,
    mixin_density: impl Fn(f64) -> f64,
) -> Result<RingPosterior, TemporalError> {
    if ages.is_empty() {
        return Err(TemporalError::DegenerateRing("empty ring".into()));
    }
    let mut ratios = Vec::with_capacity(ages.len());
    let mut infinite = Vec::new();
    for (i, &x) in ages.iter().enumerate() {
        let ds = spend_density(x);
        let dm = mixin_density(x);
        if ds < 0.0 || dm < 0.0 {
            return Err(TemporalError::DegenerateRing(format!(
                "negative density at age {x}"
            )));
        }
        if dm == 0.0 {
            if ds > 0.0 {
                infinite.push(i);
            }
            ratios.push(0.0);
        } else {
            ratios.push(ds / dm);
        }
    }
    match infinite.len() {
        0 => {}
        1 => {
            let mut probs = vec![0.0; ages.len()];
            probs[infinite[0]] = 1.0;
            return Ok(RingPosterior { probs });
        }
        _ => {
            return Err(TemporalError::DegenerateRing(
                "multiple members have positive spend density but zero mixin density".into(),
            ))
        }
    }
    let total: f64 = ratios.iter().sum();
    if total <= 0.0 {
        return Err(TemporalError::DegenerateRing(
            "all density ratios are zero".into(),
        ));
    }
    Ok(RingPosterior {
        probs: ratios.into_iter().map(|r| r / total).collect(),
    })
}

/// Worst-case guessing entropy of an (m+1)-ring when the analyst's density
/// ratio is bounded by ε: `½·m·(m+1) / (1/(1−ε)² + m)`; ε = 1 gives 0 in
/// the limit (the real spend is fully exposed).
pub fn ge_min(m: u64, epsilon: f64) -> f64 {
    assert!((0.0..=1.0).contains(&epsilon), "epsilon must be in [0,1]");
    if epsilon >= 1.0 {
        return 0.0;
    }
    let m = m as f64;
    0.5 * m * (m + 1.0) / ((1.0 / (1.0 - epsilon)).powi(2) + m)
}

/// Worst-case guessing entropy of a binned ring of `num_bins` bins of
/// `bin_size` members: `s·Ge_min(n−1, ε) + (s−1)/2`. With bin size 1 this
/// reduces to plain `ge_min`. Min-untraceability is `1 + 2·BGe_min`.
pub fn bge_min(bin_size: u64, num_bins: u64, epsilon: f64) -> f64 {
    assert!(bin_size >= 1 && num_bins >= 1);
    bin_size as f64 * ge_min(num_bins - 1, epsilon) + (bin_size as f64 - 1.0) / 2.0
}

/// ε grid used by the min-untraceability table.
pub const EPSILONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// The (mixins, bin_size) configurations of the min-untraceability table.
pub const TABLE_CONFIGS: [(u64, u64); 8] = [
    (5, 1),
    (5, 2),
    (5, 3),
    (7, 1),
    (7, 2),
    (7, 4),
    (8, 1),
    (8, 3),
];

/// One table row: a ring configuration and its min-untraceability
/// (`1 + 2·BGe_min`) at each ε.
#[derive(Debug, Clone, PartialEq)]
pub struct MinUntraceabilityRow {
    pub mixins: u64,
    pub bin_size: u64,
    pub values: [f64; 5],
}

/// Min-untraceability for every standard (mixins, bin size) configuration
/// across ε ∈ {0, 0.25, 0.5, 0.75, 1}.
pub fn min_untraceability_table() -> Vec<MinUntraceabilityRow> {
    TABLE_CONFIGS
        .iter()
        .map(|&(mixins, bin_size)| {
            let num_bins = (mixins + 1) / bin_size;
            debug_assert_eq!(num_bins * bin_size, mixins + 1);
            let mut values = [0.0; 5];
            for (v, &eps) in values.iter_mut().zip(&EPSILONS) {
                *v = 1.0 + 2.0 * bge_min(bin_size, num_bins, eps);
            }
            MinUntraceabilityRow {
                mixins,
                bin_size,
                values,
            }
        })
        .collect()
}

/// Emit the min-untraceability table as CSV, values rounded to 2 decimals.
pub fn write_min_untraceability_csv<W: Write>(w: W) -> Result<(), TemporalError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "mixins", "bin_size", "eps_0", "eps_25", "eps_50", "eps_75", "eps_100",
    ])
    .map_err(|e| TemporalError::Io(std::io::Error::other(e)))?;
    for row in min_untraceability_table() {
        let mut rec = vec![row.mixins.to_string(), row.bin_size.to_string()];
        rec.extend(row.values.iter().map(|v| format!("{v:.2}")));
        wtr.write_record(&rec)
            .map_err(|e| TemporalError::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    #[test]
    fn guess_newest_is_max() {
        assert_eq!(guess_newest(&[3, 17, 42]), 42);
        assert_eq!(guess_newest(&[7]), 7);
    }

    #[test]
    fn guessing_entropy_worked_examples() {
        assert_abs_diff_eq!(
            guessing_entropy(&[0.25, 0.25, 0.25, 0.25]).unwrap(),
            1.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(guessing_entropy(&[1.0]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            guessing_entropy(&[0.80, 0.17, 0.02, 0.01]).unwrap(),
            0.24,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            effective_untraceability(&[0.80, 0.17, 0.02, 0.01]).unwrap(),
            1.48,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            effective_untraceability(&[0.25; 4]).unwrap(),
            4.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            effective_untraceability(&[1.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_rejects_bad_inputs() {
        assert!(matches!(
            guessing_entropy(&[0.5, 0.4]),
            Err(TemporalError::NonNormalized(_))
        ));
        assert!(matches!(
            guessing_entropy(&[1.5, -0.5]),
            Err(TemporalError::NegativeProbability(_))
        ));
    }

    #[test]
    fn entropy_permutation_invariant_and_uniform_maximal() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        let base = [0.4, 0.3, 0.2, 0.1];
        let want = guessing_entropy(&base).unwrap();
        let mut v = base.to_vec();
        for _ in 0..20 {
            v.shuffle(&mut rng);
            assert_abs_diff_eq!(guessing_entropy(&v).unwrap(), want, epsilon = 1e-12);
        }
        // Uniform over M+1 refs maximizes Ge at M/2.
        let uniform = guessing_entropy(&[0.25; 4]).unwrap();
        assert_abs_diff_eq!(uniform, 1.5, epsilon = 1e-12);
        assert!(want < uniform);
    }

    #[test]
    fn posterior_examples() {
        let ages = [10.0, 20.0, 30.0];
        // Identical densities -> uniform.
        let p = posterior_real_spend(&ages, |_| 0.3, |_| 0.3).unwrap();
        for &pi in &p.probs {
            assert_abs_diff_eq!(pi, 1.0 / 3.0, epsilon = 1e-12);
        }
        // Zero spend density -> zero posterior there.
        let p = posterior_real_spend(
            &ages,
            |x| if x == 20.0 { 0.0 } else { 1.0 },
            |_| 1.0,
        )
        .unwrap();
        assert_eq!(p.probs[1], 0.0);
        // Ratios [4,1,1] -> [2/3, 1/6, 1/6].
        let p = posterior_real_spend(
            &ages,
            |x| if x == 10.0 { 4.0 } else { 1.0 },
            |_| 1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(p.probs[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.probs[1], 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.probs[2], 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_infinite_ratio_limit() {
        let ages = [10.0, 20.0];
        let p = posterior_real_spend(
            &ages,
            |_| 1.0,
            |x| if x == 10.0 { 0.0 } else { 1.0 },
        )
        .unwrap();
        assert_eq!(p.probs, vec![1.0, 0.0]);
        // Two infinite ratios are degenerate.
        assert!(matches!(
            posterior_real_spend(&ages, |_| 1.0, |_| 0.0),
            Err(TemporalError::DegenerateRing(_))
        ));
        // All ratios zero are degenerate too.
        assert!(matches!(
            posterior_real_spend(&ages, |_| 0.0, |_| 1.0),
            Err(TemporalError::DegenerateRing(_))
        ));
    }

    #[test]
    fn posterior_scale_invariant() {
        let ages = [5.0, 50.0, 500.0];
        let ds = |x: f64| (-x / 100.0).exp();
        let dm = |x: f64| 1.0 / (1.0 + x);
        let a = posterior_real_spend(&ages, ds, dm).unwrap();
        let b = posterior_real_spend(&ages, |x| 7.5 * ds(x), |x| 0.2 * dm(x)).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn ge_min_values_and_monotonicity() {
        assert_abs_diff_eq!(ge_min(5, 0.0), 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ge_min(5, 0.5), 15.0 / 9.0, epsilon = 1e-12);
        assert_eq!(ge_min(5, 1.0), 0.0);
        assert_eq!(ge_min(12, 1.0), 0.0);
        for m in 0..10u64 {
            let mut prev = f64::INFINITY;
            for eps in [0.0, 0.1, 0.3, 0.6, 0.9, 1.0] {
                let v = ge_min(m, eps);
                assert!(v <= prev + 1e-12, "not non-increasing in eps");
                prev = v;
            }
        }
        for eps in [0.0, 0.25, 0.5] {
            for m in 1..10u64 {
                assert!(ge_min(m, eps) >= ge_min(m - 1, eps) - 1e-12);
            }
        }
    }

    #[test]
    fn bge_min_values() {
        assert_abs_diff_eq!(bge_min(2, 3, 0.5), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            1.0 + 2.0 * bge_min(2, 3, 0.5),
            4.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(bge_min(2, 3, 1.0), 0.5, epsilon = 1e-12);
        // Bin size 1 reduces to plain ge_min.
        for eps in [0.0, 0.25, 0.75] {
            assert_abs_diff_eq!(bge_min(1, 6, eps), ge_min(5, eps), epsilon = 1e-12);
        }
    }

    #[test]
    fn table_spot_values() {
        let table = min_untraceability_table();
        let cell = |m: u64, s: u64, col: usize| {
            table
                .iter()
                .find(|r| r.mixins == m && r.bin_size == s)
                .unwrap()
                .values[col]
        };
        assert_abs_diff_eq!(cell(5, 1, 0), 6.00, epsilon = 0.005);
        assert_abs_diff_eq!(cell(5, 2, 2), 4.00, epsilon = 0.005);
        assert_abs_diff_eq!(cell(7, 4, 3), 4.47, epsilon = 0.005);
        assert_abs_diff_eq!(cell(8, 3, 2), 6.00, epsilon = 0.005);
        // Every eps=0 cell is the full ring size.
        for row in &table {
            assert_abs_diff_eq!(row.values[0], (row.mixins + 1) as f64, epsilon = 0.005);
        }
        // eps=1, bin size 1 rows floor at 1.0.
        for row in table.iter().filter(|r| r.bin_size == 1) {
            assert_abs_diff_eq!(row.values[4], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn table_csv_layout() {
        let mut buf = Vec::new();
        write_min_untraceability_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "mixins,bin_size,eps_0,eps_25,eps_50,eps_75,eps_100"
        );
        assert_eq!(lines.next().unwrap(), "5,1,6.00,5.43,4.33,2.43,1.00");
        assert_eq!(text.lines().count(), 9);
    }

    proptest::proptest! {
        #[test]
        fn guessing_entropy_invariants(raw in proptest::collection::vec(1e-6f64..1.0, 1..12)) {
            let total: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let n = probs.len();
            let ge = guessing_entropy(&probs).unwrap();
            // Bounded by the uniform worst case, permutation invariant.
            proptest::prop_assert!(ge >= -1e-12);
            proptest::prop_assert!(ge <= (n as f64 - 1.0) / 2.0 + 1e-9);
            let mut rev = probs.clone();
            rev.reverse();
            proptest::prop_assert!((ge - guessing_entropy(&rev).unwrap()).abs() < 1e-9);
            let eu = effective_untraceability(&probs).unwrap();
            proptest::prop_assert!((eu - (1.0 + 2.0 * ge)).abs() < 1e-9);
        }

        #[test]
        fn worst_case_entropy_monotone_in_error(m in 1u64..9, lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            // More model error can only lower the worst-case entropy.
            proptest::prop_assert!(ge_min(m, hi) <= ge_min(m, lo) + 1e-12);
            proptest::prop_assert!((ge_min(m, 0.0) - m as f64 / 2.0).abs() < 1e-12);
        }
    }
}
