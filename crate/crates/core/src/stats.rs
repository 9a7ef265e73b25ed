//! Cohort comparison statistics: Mann-Whitney U with midrank ties (exact
//! enumeration for small samples, tie-corrected normal approximation with
//! continuity correction otherwise), Bonferroni adjustment, and the summary
//! metrics reported per cohort (mean, population std, top-10, % solved).

use statrs::distribution::{ContinuousCDF, Normal};

use crate::envs::is_solved;
use crate::error::{Error, Result};

/// Midranks (1-based, ties averaged) of the pooled samples, in pooled input
/// order: first all of `a`, then all of `b`.
fn midranks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).unwrap());
    let mut ranks = vec![0.0; pooled.len()];
    let mut pos = 0;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[pos]] {
            end += 1;
        }
        // positions pos..end are tied; their 1-based ranks average
        let midrank = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            ranks[idx] = midrank;
        }
        pos = end;
    }
    ranks
}

fn validate_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("both samples must be nonempty".into()));
    }
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    Ok(())
}

/// U statistic for sample `a` from rank sums with midrank tie handling.
pub fn mwu_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    validate_samples(a, b)?;
    let ranks = midranks(a, b);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    Ok(rank_sum_a - (a.len() * (a.len() + 1)) as f64 / 2.0)
}

/// Exact two-sided p-value by enumerating the null distribution of U over all
/// C(n_a + n_b, k) placements of the smaller sample, via a count DP over
/// doubled midranks (exact for ties). p = min(1, 2 min(P(U <= u), P(U >= u))).
pub fn mwu_exact_p(a: &[f64], b: &[f64]) -> Result<f64> {
    validate_samples(a, b)?;
    let ranks = midranks(a, b);
    // work with the smaller sample; two-sided p is side-symmetric
    let k = a.len().min(b.len());
    let n = ranks.len();
    // doubled midranks are exact integers (midranks are multiples of 1/2)
    let doubled: Vec<usize> = ranks.iter().map(|&r| (2.0 * r).round() as usize).collect();
    let small_doubled = if a.len() <= b.len() { &doubled[..a.len()] } else { &doubled[a.len()..] };
    let observed: usize = small_doubled.iter().sum();

    // ways[j][s] = number of j-subsets of the pooled ranks with doubled rank sum s
    let max_sum = n * (n + 1);
    let mut ways = vec![vec![0u128; max_sum + 1]; k + 1];
    ways[0][0] = 1;
    for &d in &doubled {
        for j in (0..k).rev() {
            for s in 0..=max_sum.saturating_sub(d) {
                if ways[j][s] > 0 {
                    let add = ways[j][s];
                    ways[j + 1][s + d] += add;
                }
            }
        }
    }
    let total: u128 = ways[k].iter().sum();
    let le: u128 = ways[k][..=observed.min(max_sum)].iter().sum();
    let ge: u128 = ways[k][observed.min(max_sum)..].iter().sum();
    let p = 2.0 * (le.min(ge) as f64) / total as f64;
    Ok(p.min(1.0))
}

/// Two-sided p-value from the normal approximation with tie-corrected
/// variance and a 0.5 continuity correction. Zero variance (all values tied)
/// gives p = 1.
pub fn mwu_normal_p(a: &[f64], b: &[f64]) -> Result<f64> {
    validate_samples(a, b)?;
    let u = mwu_statistic(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    // tie correction: sum t^3 - t over tie groups of the pooled sample
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut pos = 0;
    while pos < pooled.len() {
        let mut end = pos + 1;
        while end < pooled.len() && pooled[end] == pooled[pos] {
            end += 1;
        }
        let t = (end - pos) as f64;
        tie_term += t * t * t - t;
        pos = end;
    }
    let mean = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}

/// Mann-Whitney U test: returns (U for `a`, two-sided p). Uses exact
/// enumeration when the smaller sample has <= 8 values, the tie-corrected
/// normal approximation otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let u = mwu_statistic(a, b)?;
    let p = if a.len().min(b.len()) <= 8 { mwu_exact_p(a, b)? } else { mwu_normal_p(a, b)? };
    Ok((u, p))
}

/// Bonferroni adjustment for k comparisons: p' = min(1, k p).
pub fn bonferroni(p: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("bonferroni needs k >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p-value {p} outside [0, 1]")));
    }
    Ok((k as f64 * p).min(1.0))
}

/// Summary metrics for one cohort of per-agent scores.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation (declared: not the sample estimator).
    pub std: f64,
    /// Mean over the 10 largest scores; absent when fewer than 10 scores.
    pub top10_mean: Option<f64>,
    pub top10_std: Option<f64>,
    pub solved_percent: f64,
}

fn mean_and_pop_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean, population std, top-10 statistics, and % solved under the
/// environment's threshold rule.
pub fn summarize(env_id: &str, scores: &[f64]) -> Result<SummaryRow> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("cannot summarize an empty score list".into()));
    }
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    // canonical descending order makes every statistic exactly
    // permutation-invariant despite non-associative float summation
    let mut sorted = scores.to_vec();
    sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let (mean, std) = mean_and_pop_std(&sorted);
    let (top10_mean, top10_std) = if sorted.len() >= 10 {
        let (m, s) = mean_and_pop_std(&sorted[..10]);
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    let solved = sorted
        .iter()
        .map(|&s| is_solved(env_id, s).map(u32::from))
        .sum::<Result<u32>>()?;
    Ok(SummaryRow {
        n: scores.len(),
        mean,
        std,
        top10_mean,
        top10_std,
        solved_percent: 100.0 * solved as f64 / scores.len() as f64,
    })
}
