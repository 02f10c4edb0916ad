use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{FmtlError, Result};

/// Largest sample size that gets the exact null distribution.
pub const WILCOXON_EXACT_MAX: usize = 25;
pub const WILCOXON_MIN_N: usize = 5;

/// Average ranks (1-based) of `values` in ascending order.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Rank sum of positive differences `y − x`.
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub exact: bool,
    /// All differences were zero.
    pub degenerate: bool,
}

/// Two-sided Wilcoxon signed-rank test on the paired differences `y − x`.
/// Zero differences are dropped and tied magnitudes share average ranks.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(FmtlError::shape("wilcoxon pairs", x.len(), y.len()));
    }
    let d: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - a)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            w_minus: 0.0,
            p_value: 1.0,
            n: 0,
            exact: true,
            degenerate: true,
        });
    }
    if n < WILCOXON_MIN_N {
        return Err(FmtlError::Argument(format!(
            "wilcoxon needs at least {WILCOXON_MIN_N} non-zero differences, got {n}"
        )));
    }
    let magnitudes: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let (p_value, exact) = if n <= WILCOXON_EXACT_MAX {
        (exact_two_sided(&ranks, w_plus), true)
    } else {
        (normal_two_sided(&magnitudes, n, w_plus), false)
    };
    Ok(WilcoxonResult {
        w_plus,
        w_minus,
        p_value,
        n,
        exact,
        degenerate: false,
    })
}

/// Exact null distribution of `W+` over all `2^n` sign patterns. Ranks are
/// doubled so tied (half-integer) ranks stay integral.
fn exact_two_sided(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0f64; max + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let total: f64 = counts.iter().sum();
    let w = (w_plus * 2.0).round() as usize;
    let lower: f64 = counts[..=w].iter().sum();
    let upper: f64 = counts[w..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

fn normal_two_sided(magnitudes: &[f64], n: usize, w_plus: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// `min(1, p·m)` for each raw p-value.
pub fn bonferroni(raw: &[f64], m: usize) -> Vec<f64> {
    raw.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

/// Two-tailed Nemenyi critical values `q_α` for k = 2..=20 groups: the
/// studentized range quantile at infinite degrees of freedom divided by √2.
/// k ≤ 10 from the standard published table; k > 10 computed from the same
/// definition.
const NEMENYI_Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354,
    3.391, 3.426, 3.458, 3.489, 3.517, 3.544,
];
const NEMENYI_Q_10: [f64; 19] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978, 3.030, 3.077, 3.120,
    3.159, 3.196, 3.230, 3.261, 3.291, 3.319,
];

pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &NEMENYI_Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &NEMENYI_Q_10
    } else {
        return Err(FmtlError::Config(format!(
            "no Nemenyi table for alpha = {alpha}; use 0.05 or 0.10"
        )));
    };
    if !(2..=20).contains(&k) {
        return Err(FmtlError::Config(format!(
            "Nemenyi table covers 2 to 20 baselines, got {k}"
        )));
    }
    Ok(table[k - 2])
}

pub fn critical_difference(k: usize, n_blocks: usize, alpha: f64) -> Result<f64> {
    let q = nemenyi_q(k, alpha)?;
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n_blocks as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdReport {
    pub baselines: Vec<String>,
    pub average_ranks: Vec<f64>,
    pub n_blocks: usize,
    pub k: usize,
    pub friedman_chi2: f64,
    pub friedman_p: f64,
    pub alpha: f64,
    pub critical_difference: f64,
    /// Groups of baselines (indices into `baselines`, best rank first) whose
    /// average ranks all lie within one critical difference.
    pub cliques: Vec<Vec<usize>>,
}

/// Friedman test over `scores` (one row per block, one column per baseline)
/// followed by the Nemenyi critical difference. Rank 1 is best in each block,
/// with `lower_is_better[block]` giving the direction.
pub fn friedman_nemenyi(
    baselines: &[String],
    scores: &[Vec<f64>],
    lower_is_better: &[bool],
    alpha: f64,
) -> Result<CdReport> {
    let k = baselines.len();
    let n = scores.len();
    if n < 2 || k < 2 {
        return Err(FmtlError::Argument(format!(
            "friedman needs at least 2 blocks and 2 baselines, got {n} × {k}"
        )));
    }
    if lower_is_better.len() != n {
        return Err(FmtlError::shape(
            "block directions",
            n,
            lower_is_better.len(),
        ));
    }
    let mut sums = vec![0.0; k];
    for (row, lower) in scores.iter().zip(lower_is_better) {
        if row.len() != k {
            return Err(FmtlError::shape("score row", k, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(FmtlError::Argument("scores must be finite".into()));
        }
        let keyed: Vec<f64> = if *lower {
            row.clone()
        } else {
            row.iter().map(|v| -v).collect()
        };
        for (s, r) in sums.iter_mut().zip(average_ranks(&keyed)) {
            *s += r;
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let average_ranks: Vec<f64> = sums.iter().map(|s| s / nf).collect();
    let sq: f64 = average_ranks.iter().map(|r| r * r).sum();
    let chi2 = (12.0 * nf / (kf * (kf + 1.0)) * (sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    let dist = ChiSquared::new(kf - 1.0).map_err(|e| FmtlError::Argument(e.to_string()))?;
    let friedman_p = if chi2 == 0.0 {
        1.0
    } else {
        1.0 - dist.cdf(chi2)
    };
    let cd = critical_difference(k, n, alpha)?;
    Ok(CdReport {
        baselines: baselines.to_vec(),
        cliques: cliques(&average_ranks, cd),
        average_ranks,
        n_blocks: n,
        k,
        friedman_chi2: chi2,
        friedman_p,
        alpha,
        critical_difference: cd,
    })
}

/// Maximal runs (size ≥ 2) of rank-sorted baselines spanning at most `cd`.
fn cliques(ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by(|a, b| ranks[*a].total_cmp(&ranks[*b]).then(a.cmp(b)));
    let mut out = Vec::new();
    let mut last_end = 0;
    for i in 0..order.len() {
        let mut j = i;
        while j + 1 < order.len() && ranks[order[j + 1]] - ranks[order[i]] <= cd {
            j += 1;
        }
        if j > i && (out.is_empty() || j > last_end) {
            out.push(order[i..=j].to_vec());
            last_end = j;
        }
    }
    out
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over every sign pattern of the ranks.
    fn enumeration_p(x: &[f64], y: &[f64]) -> f64 {
        let d: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(a, b)| b - a)
            .filter(|v| *v != 0.0)
            .collect();
        let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let observed: f64 = d
            .iter()
            .zip(&ranks)
            .filter(|(v, _)| **v > 0.0)
            .map(|(_, r)| r)
            .sum();
        let n = d.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            if w <= observed + 1e-9 {
                le += 1;
            }
            if w >= observed - 1e-9 {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn all_positive_five() {
        let x = [0.0; 5];
        let y = [1.0, 1.0, 1.0, 1.0, 2.0];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.p_value, 0.0625);
        assert_eq!(enumeration_p(&x, &y), 0.0625);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[0.0; 3], &[1.0, 2.0, 3.0]).is_err());
        assert!(wilcoxon_signed_rank(&[0.0; 3], &[1.0]).is_err());
    }

    #[test]
    fn large_n_uses_normal_approximation() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..40)
            .map(|i| {
                i as f64
                    + if i % 3 == 0 {
                        -0.5
                    } else {
                        1.0 + i as f64 * 0.01
                    }
            })
            .collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(!r.exact);
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn bonferroni_examples() {
        let adj = bonferroni(&[0.01, 0.5], 10);
        assert!((adj[0] - 0.10).abs() < 1e-15);
        assert_eq!(adj[1], 1.0);
        assert!((bonferroni(&[0.004], 36)[0] - 0.144).abs() < 1e-15);
    }

    #[test]
    fn friedman_full_ties() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let scores = vec![vec![1.0, 1.0, 1.0]; 6];
        let r = friedman_nemenyi(&names, &scores, &[true; 6], 0.05).unwrap();
        assert_eq!(r.friedman_chi2, 0.0);
        assert!(r.average_ranks.iter().all(|v| *v == 2.0));
        assert_eq!(r.cliques, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn critical_difference_k3_n10() {
        let cd = critical_difference(3, 10, 0.05).unwrap();
        assert!((cd - 1.048).abs() < 1e-3);
        assert!(critical_difference(21, 10, 0.05).is_err());
        assert!(critical_difference(3, 10, 0.01).is_err());
    }

    #[test]
    fn dominant_baseline_ranks_first() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let scores: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![10.0 + i as f64, 1.0, 2.0 + (i % 2) as f64, 2.5])
            .collect();
        let r = friedman_nemenyi(&names, &scores, &[false; 12], 0.05).unwrap();
        assert_eq!(r.average_ranks[0], 1.0);
        assert!(r.friedman_p < 0.05);
        // Higher-is-better flips when the block direction flips.
        let r = friedman_nemenyi(&names, &scores, &[true; 12], 0.05).unwrap();
        assert_eq!(r.average_ranks[0], 4.0);
    }

    #[test]
    fn cliques_are_maximal_runs() {
        assert_eq!(
            cliques(&[1.0, 1.5, 2.6, 4.0], 1.2),
            vec![vec![0, 1], vec![1, 2]]
        );
        assert_eq!(cliques(&[1.0, 3.0, 5.0], 1.0), Vec::<Vec<usize>>::new());
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration(
            pairs in prop::collection::vec((-3i32..4, -3i32..4), 5..=12),
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            match wilcoxon_signed_rank(&x, &y) {
                Ok(r) if !r.degenerate => prop_assert!((r.p_value - enumeration_p(&x, &y)).abs() < 1e-12),
                _ => {}
            }
        }

        #[test]
        fn swap_mirrors_statistic(x in prop::collection::vec(-5.0f64..5.0, 6..30), shift in prop::collection::vec(-2.0f64..2.0, 30)) {
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let a = wilcoxon_signed_rank(&x, &y).unwrap();
            let b = wilcoxon_signed_rank(&y, &x).unwrap();
            prop_assert_eq!(a.p_value, b.p_value);
            prop_assert_eq!(a.w_plus, b.w_minus);
        }

        #[test]
        fn block_rank_sums(row in prop::collection::vec(-3i32..3, 2..10)) {
            let vals: Vec<f64> = row.iter().map(|v| *v as f64).collect();
            let k = vals.len() as f64;
            prop_assert_eq!(average_ranks(&vals).iter().sum::<f64>(), k * (k + 1.0) / 2.0);
        }
    }
}
