//! Stochastic synaptogenesis: realizing integer synapse counts and concrete
//! weight matrices from a genotype.
//!
//! For every gene pair `(i, j)` the number of candidate contacts between
//! neurons `u` and `v` is `round(α · x_{u,i} · y_{v,j})` (ties away from
//! zero), each forming a synapse independently with probability `O_ij`. The
//! realized counts accumulate into `B̃` and the weights are `W = B̃ ⊙ (Ḡ/α)`.
//! The degree-correction factor α scales candidate counts without moving the
//! mean weight, because `Ḡ/α` cancels it exactly.
//!
//! Sampling is deterministic given `(genotype, α, seed)`: the agent seed is
//! split per layer, and each layer seed fans out into one independent RNG
//! stream per gene pair, so gene-pair loops can run in any order (or in
//! parallel) without changing the draw.

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{Genotype, MappedFactors};
use crate::rng::{derive_seed, pair_stream};

/// Largest candidate count we accept; `round` output at or beyond 2⁶³ is an
/// overflow error rather than a silent wrap.
const MAX_COUNT: f64 = 9.223_372_036_854_776e18;

/// A concrete network realized from a genotype.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledAgent {
    pub alpha: f64,
    pub seed: u64,
    /// Per-layer synapse counts.
    pub b_tilde: Vec<Mat<u64>>,
    /// Per-layer weights, `W_l = B̃_l ⊙ (Ḡ_l / α)`.
    pub w: Vec<Mat<f64>>,
    /// Identifier of the checkpoint the agent was sampled from, when known.
    pub provenance: Option<String>,
}

/// Draws Bin(n, p) exactly: inversion for n ≤ 64, BTPE-class rejection above.
pub fn binomial_draw<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "binomial probability {p} outside [0, 1]"
        )));
    }
    if n == 0 || p == 0.0 {
        return Ok(0);
    }
    if p == 1.0 {
        return Ok(n);
    }
    if n <= 64 {
        // Inversion on the smaller tail; q^n cannot underflow for n ≤ 64.
        return Ok(if p <= 0.5 {
            binv(rng, n, p)
        } else {
            n - binv(rng, n, 1.0 - p)
        });
    }
    let dist = rand_distr::Binomial::new(n, p)
        .map_err(|e| Error::InvalidArgument(format!("binomial parameters rejected: {e}")))?;
    Ok(dist.sample(rng))
}

fn binv<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    let q = 1.0 - p;
    let s = p / q;
    let mut r = q.powi(n as i32);
    let mut u: f64 = rng.random();
    let mut x = 0u64;
    while u > r && x < n {
        u -= r;
        x += 1;
        r *= (n - x + 1) as f64 / x as f64 * s;
    }
    x
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "alpha must be a positive finite real, got {alpha}"
        )));
    }
    Ok(())
}

fn candidate_count(alpha: f64, x: f64, y: f64) -> Result<u64> {
    let m = (alpha * x * y).round();
    if m >= MAX_COUNT {
        return Err(Error::InvalidArgument(format!(
            "candidate synapse count {m:.3e} overflows 63 bits"
        )));
    }
    Ok(m as u64)
}

/// Samples one weight layer. `seed` is the layer seed; each gene pair `(i, j)`
/// draws from its own stream `i·G + j`.
pub fn sample_layer(
    x_pre: &Mat<f64>,
    x_post: &Mat<f64>,
    o: &Mat<f64>,
    g_bar: &Mat<f64>,
    alpha: f64,
    seed: u64,
) -> Result<(Mat<u64>, Mat<f64>)> {
    check_alpha(alpha)?;
    let genes = o.rows();
    if x_pre.cols() != genes || x_post.cols() != genes || o.cols() != genes {
        return Err(Error::Shape(format!(
            "expression/rules mismatch: X_pre {}x{}, X_post {}x{}, O {}x{}",
            x_pre.rows(),
            x_pre.cols(),
            x_post.rows(),
            x_post.cols(),
            o.rows(),
            o.cols()
        )));
    }
    if g_bar.shape() != (x_pre.rows(), x_post.rows()) {
        return Err(Error::Shape(format!(
            "conductance expectation is {}x{}, expected {}x{}",
            g_bar.rows(),
            g_bar.cols(),
            x_pre.rows(),
            x_post.rows()
        )));
    }
    let mut b_tilde = Mat::<u64>::filled(x_pre.rows(), x_post.rows(), 0);
    for i in 0..genes {
        for j in 0..genes {
            let p = o[(i, j)];
            let mut rng = pair_stream(seed, (i * genes + j) as u64);
            for u in 0..x_pre.rows() {
                for v in 0..x_post.rows() {
                    let n = candidate_count(alpha, x_pre[(u, i)], x_post[(v, j)])?;
                    if n > 0 {
                        b_tilde[(u, v)] += binomial_draw(&mut rng, n, p)?;
                    }
                }
            }
        }
    }
    let w = Mat::from_fn(b_tilde.rows(), b_tilde.cols(), |u, v| {
        b_tilde[(u, v)] as f64 * (g_bar[(u, v)] / alpha)
    });
    Ok((b_tilde, w))
}

/// Realizes a full agent. Layer `l` samples under seed `derive_seed(seed, l)`.
pub fn sample_agent(genotype: &Genotype<f64>, alpha: f64, seed: u64) -> Result<SampledAgent> {
    check_alpha(alpha)?;
    let factors = genotype.map_params()?;
    sample_from_factors(&factors, alpha, seed)
}

/// As [`sample_agent`], reusing already-mapped factors.
pub fn sample_from_factors(
    factors: &MappedFactors<f64>,
    alpha: f64,
    seed: u64,
) -> Result<SampledAgent> {
    check_alpha(alpha)?;
    let depth = factors.dims.depth();
    let mut b_tilde = Vec::with_capacity(depth);
    let mut w = Vec::with_capacity(depth);
    for l in 0..depth {
        let g_bar = factors.conductance_expectation(l)?;
        let (b, wl) = sample_layer(
            &factors.x[l],
            &factors.x[l + 1],
            &factors.o,
            &g_bar,
            alpha,
            derive_seed(seed, l as u64),
        )?;
        b_tilde.push(b);
        w.push(wl);
    }
    Ok(SampledAgent {
        alpha,
        seed,
        b_tilde,
        w,
        provenance: None,
    })
}

/// Exact mean and variance of each `B̃_uv` entry under the sampling scheme
/// (sums of independent binomials over gene pairs). Serves as the oracle for
/// unbiasedness checks.
pub fn expected_count_moments(
    x_pre: &Mat<f64>,
    x_post: &Mat<f64>,
    o: &Mat<f64>,
    alpha: f64,
) -> Result<(Mat<f64>, Mat<f64>)> {
    check_alpha(alpha)?;
    let genes = o.rows();
    let mut mean = Mat::zeros(x_pre.rows(), x_post.rows());
    let mut var = Mat::zeros(x_pre.rows(), x_post.rows());
    for i in 0..genes {
        for j in 0..genes {
            let p = o[(i, j)];
            for u in 0..x_pre.rows() {
                for v in 0..x_post.rows() {
                    let n = candidate_count(alpha, x_pre[(u, i)], x_post[(v, j)])? as f64;
                    mean[(u, v)] += n * p;
                    var[(u, v)] += n * p * (1.0 - p);
                }
            }
        }
    }
    Ok((mean, var))
}

/// Max entrywise deviation of the α-corrected mean from the uncorrected mean
/// weights: `((√α X_pre) O (√α X_post)ᵀ) ⊙ (Ḡ/α)` versus `W̄`. The correction
/// is an algebraic identity, so this stays at rounding-noise level.
pub fn corrected_mean_invariance(factors: &MappedFactors<f64>, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let root = alpha.sqrt();
    let mut worst = 0.0f64;
    for l in 0..factors.dims.depth() {
        let scaled_pre = factors.x[l].scale(root);
        let scaled_post = factors.x[l + 1].scale(root);
        let g_bar = factors.conductance_expectation(l)?;
        let corrected = scaled_pre
            .matmul(&factors.o)
            .matmul_nt(&scaled_post)
            .hadamard(&g_bar.scale(1.0 / alpha));
        let reference = factors.mean_weight_matrix(l)?;
        worst = worst.max(corrected.max_abs_diff(&reference));
    }
    Ok(worst)
}

/// Upper bound on the per-pair mean-weight error introduced by integer
/// rounding of candidate counts and of the resulting expected count:
/// `|g|·(p + 1)/(2α)`. `n` does not enter the bound; it is accepted so the
/// signature mirrors [`realized_quantization_error`].
pub fn quantization_bound(_n: f64, p: f64, g: f64, alpha: f64) -> f64 {
    g.abs() * (p + 1.0) / (2.0 * alpha)
}

/// The realized per-pair error the bound covers:
/// `|n·p·g − round(round(α·n)·p)·g/α|`.
pub fn realized_quantization_error(n: f64, p: f64, g: f64, alpha: f64) -> f64 {
    let quantized = ((alpha * n).round() * p).round() * g / alpha;
    (n * p * g - quantized).abs()
}

/// Expected mean node degree of the uncorrected model: every expected synapse
/// contributes one out-degree and one in-degree.
pub fn uncorrected_mean_degree(factors: &MappedFactors<f64>) -> Result<f64> {
    let mut total = 0.0;
    for l in 0..factors.dims.depth() {
        total += factors.synapse_expectation(l)?.sum();
    }
    Ok(2.0 * total / factors.dims.total_neurons() as f64)
}

/// Mean node degree of one realized agent.
pub fn sampled_mean_degree(agent: &SampledAgent) -> f64 {
    let mut total = 0.0;
    let mut neurons = 0usize;
    for (l, b) in agent.b_tilde.iter().enumerate() {
        total += b.data().iter().map(|&v| v as f64).sum::<f64>();
        if l == 0 {
            neurons += b.rows();
        }
        neurons += b.cols();
    }
    2.0 * total / neurons as f64
}

/// Picks α so the expected mean degree of the corrected model hits
/// `target_mean_degree`; candidate counts scale linearly in α, so this is a
/// single division.
pub fn choose_alpha(factors: &MappedFactors<f64>, target_mean_degree: f64) -> Result<f64> {
    if !(target_mean_degree > 0.0) || !target_mean_degree.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target mean degree must be positive, got {target_mean_degree}"
        )));
    }
    let d0 = uncorrected_mean_degree(factors)?;
    if d0 <= 0.0 {
        return Err(Error::Degenerate(
            "expected synapse count is zero; no alpha reaches a positive degree".into(),
        ));
    }
    Ok(target_mean_degree / d0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use rand::Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// X̂ value whose softplus image is the integer `c` (to rounding).
    fn inv_softplus(c: f64) -> f64 {
        (c.exp() - 1.0).ln()
    }

    fn small_genotype(seed: u64) -> Genotype<f64> {
        let dims = ModelDims::new(vec![4, 8, 2], 3, 2).unwrap();
        Genotype::random(dims, None, 1.0, seed).unwrap()
    }

    #[test]
    fn binomial_edge_cases() {
        let mut rng = crate::rng::chacha(1);
        assert_eq!(binomial_draw(&mut rng, 0, 0.5).unwrap(), 0);
        assert_eq!(binomial_draw(&mut rng, 17, 0.0).unwrap(), 0);
        assert_eq!(binomial_draw(&mut rng, 17, 1.0).unwrap(), 17);
        assert!(binomial_draw(&mut rng, 5, 1.5).is_err());
        assert!(binomial_draw(&mut rng, 5, -0.1).is_err());
        for _ in 0..1000 {
            let v = binomial_draw(&mut rng, 7, 0.9).unwrap();
            assert!(v <= 7);
        }
    }

    #[test]
    fn binomial_moments_small_n() {
        let mut rng = crate::rng::chacha(2);
        let (n, p, draws) = (12u64, 0.35, 40_000);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let v = binomial_draw(&mut rng, n, p).unwrap() as f64;
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / draws as f64;
        let var = sumsq / draws as f64 - mean * mean;
        let exact_mean = n as f64 * p;
        let exact_var = n as f64 * p * (1.0 - p);
        let se = (exact_var / draws as f64).sqrt();
        assert!((mean - exact_mean).abs() < 5.0 * se, "mean {mean}");
        assert!((var - exact_var).abs() < 0.15 * exact_var, "var {var}");
    }

    fn chi_square_gof(n: u64, p: f64, draws: usize, seed: u64) {
        let mut rng = crate::rng::chacha(seed);
        let mut counts = vec![0u64; n as usize + 1];
        for _ in 0..draws {
            counts[binomial_draw(&mut rng, n, p).unwrap() as usize] += 1;
        }
        // Closed-form pmf via the multiplicative recurrence.
        let mut pmf = vec![0.0f64; n as usize + 1];
        pmf[0] = (1.0 - p).powi(n as i32);
        for k in 1..=n as usize {
            pmf[k] = pmf[k - 1] * (n as f64 - k as f64 + 1.0) / k as f64 * (p / (1.0 - p));
        }
        // Merge adjacent cells until every expected count is at least 5.
        let mut cells: Vec<(f64, f64)> = Vec::new();
        let mut acc = (0.0f64, 0.0f64);
        for k in 0..=n as usize {
            acc.0 += counts[k] as f64;
            acc.1 += pmf[k] * draws as f64;
            if acc.1 >= 5.0 {
                cells.push(acc);
                acc = (0.0, 0.0);
            }
        }
        if acc.1 > 0.0 {
            match cells.last_mut() {
                Some(last) => {
                    last.0 += acc.0;
                    last.1 += acc.1;
                }
                None => cells.push(acc),
            }
        }
        assert!(cells.len() >= 3, "degenerate binning");
        let stat: f64 = cells
            .iter()
            .map(|&(obs, exp)| (obs - exp) * (obs - exp) / exp)
            .sum();
        let dof = (cells.len() - 1) as f64;
        let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.999);
        assert!(
            stat < critical,
            "chi-square {stat:.2} over {dof} dof exceeds {critical:.2} (n={n}, p={p})"
        );
    }

    #[test]
    fn binomial_pmf_matches_inversion_path() {
        chi_square_gof(20, 0.3, 1_000_000, 3);
    }

    #[test]
    fn binomial_pmf_matches_rejection_path() {
        chi_square_gof(100, 0.3, 200_000, 4);
    }

    #[test]
    fn zero_rules_give_empty_network() {
        let x = Mat::from_nested(&[vec![2.0f64, 1.0], vec![1.0, 3.0]]).unwrap();
        let o = Mat::zeros(2, 2);
        let g = Mat::filled(2, 2, 0.5f64);
        let (b, w) = sample_layer(&x, &x, &o, &g, 1.0, 9).unwrap();
        assert!(b.data().iter().all(|&v| v == 0));
        assert!(w.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn certain_rules_are_deterministic_counts() {
        let x_pre = Mat::from_nested(&[vec![2.0f64, 1.0], vec![1.0, 3.0], vec![0.5, 0.5]]).unwrap();
        let x_post = Mat::from_nested(&[vec![1.5f64, 2.5], vec![3.0, 0.0]]).unwrap();
        let o = Mat::filled(2, 2, 1.0f64);
        let g = Mat::filled(3, 2, 1.0f64);
        let alpha = 2.0;
        let (b, _) = sample_layer(&x_pre, &x_post, &o, &g, alpha, 11).unwrap();
        for u in 0..3 {
            for v in 0..2 {
                let mut expect = 0u64;
                for i in 0..2 {
                    for j in 0..2 {
                        expect += (alpha * x_pre[(u, i)] * x_post[(v, j)]).round() as u64;
                    }
                }
                assert_eq!(b[(u, v)], expect, "entry ({u},{v})");
            }
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let g = small_genotype(31);
        let a1 = sample_agent(&g, 3.0, 77).unwrap();
        let a2 = sample_agent(&g, 3.0, 77).unwrap();
        assert_eq!(a1, a2);
        let a3 = sample_agent(&g, 3.0, 78).unwrap();
        assert_ne!(a1.b_tilde, a3.b_tilde);
    }

    #[test]
    fn overflow_is_rejected() {
        let x = Mat::filled(1, 1, 1e10f64);
        let o = Mat::filled(1, 1, 0.5f64);
        let g = Mat::filled(1, 1, 1.0f64);
        assert!(sample_layer(&x, &x, &o, &g, 1.0, 0).is_err());
        assert!(sample_layer(&x, &x, &o, &g, -1.0, 0).is_err());
    }

    #[test]
    fn empirical_mean_matches_exact_moments() {
        let g = small_genotype(32);
        let f = g.map_params().unwrap();
        let alpha = 4.0;
        let (mean, var) = expected_count_moments(&f.x[0], &f.x[1], &f.o, alpha).unwrap();
        let samples = 10_000usize;
        let mut acc: Mat<f64> = Mat::zeros(4, 8);
        for s in 0..samples {
            let g_bar = f.conductance_expectation(0).unwrap();
            let (b, _) =
                sample_layer(&f.x[0], &f.x[1], &f.o, &g_bar, alpha, derive_seed(900, s as u64))
                    .unwrap();
            for u in 0..4 {
                for v in 0..8 {
                    acc[(u, v)] += b[(u, v)] as f64;
                }
            }
        }
        for u in 0..4 {
            for v in 0..8 {
                let m = acc[(u, v)] / samples as f64;
                let se = (var[(u, v)] / samples as f64).sqrt();
                assert!(
                    (m - mean[(u, v)]).abs() <= 5.0 * se.max(1e-12),
                    "entry ({u},{v}): {m} vs {} (se {se})",
                    mean[(u, v)]
                );
            }
        }
    }

    #[test]
    fn integer_expression_mean_matches_model_expectation() {
        // Integer expression levels and α = 1 make rounding a no-op, so the
        // empirical mean of B̃ must match the model's B̄ directly.
        let dims = ModelDims::new(vec![3, 4], 2, 1).unwrap();
        let mut genotype = Genotype::random(dims, None, 1.0, 33).unwrap();
        let mut rng = crate::rng::chacha(34);
        for m in &mut genotype.x_hat {
            for v in m.data_mut() {
                *v = inv_softplus(rng.random_range(1..5) as f64);
            }
        }
        let f = genotype.map_params().unwrap();
        let b_bar = f.synapse_expectation(0).unwrap();
        let g_bar = f.conductance_expectation(0).unwrap();
        let (_, var) = expected_count_moments(&f.x[0], &f.x[1], &f.o, 1.0).unwrap();
        let samples = 10_000usize;
        let mut acc: Mat<f64> = Mat::zeros(3, 4);
        for s in 0..samples {
            let (b, _) =
                sample_layer(&f.x[0], &f.x[1], &f.o, &g_bar, 1.0, derive_seed(901, s as u64))
                    .unwrap();
            for u in 0..3 {
                for v in 0..4 {
                    acc[(u, v)] += b[(u, v)] as f64;
                }
            }
        }
        for u in 0..3 {
            for v in 0..4 {
                let m = acc[(u, v)] / samples as f64;
                let se = (var[(u, v)] / samples as f64).sqrt();
                assert!(
                    (m - b_bar[(u, v)]).abs() <= 5.0 * se.max(1e-12),
                    "entry ({u},{v}): {m} vs {}",
                    b_bar[(u, v)]
                );
            }
        }
    }

    #[test]
    fn corrected_mean_is_invariant_in_alpha() {
        let g = small_genotype(35);
        let f = g.map_params().unwrap();
        assert!(corrected_mean_invariance(&f, 1.0).unwrap() <= 1e-15);
        for alpha in [0.5, 10.0, 1e4] {
            let dev = corrected_mean_invariance(&f, alpha).unwrap();
            assert!(dev <= 1e-10, "alpha {alpha}: deviation {dev}");
        }
    }

    #[test]
    fn quantization_bound_plug_ins() {
        assert_eq!(quantization_bound(3.0, 0.0, 4.0, 2.0), 1.0);
        assert_eq!(quantization_bound(9.0, 1.0, 2.0, 1.0), 2.0);
    }

    #[test]
    fn quantization_bound_never_violated() {
        let mut rng = crate::rng::chacha(36);
        for _ in 0..10_000 {
            let n = rng.random_range(0.0..50.0f64);
            let p = rng.random_range(0.0..=1.0f64);
            let g = rng.random_range(-3.0..3.0f64);
            let alpha = 10f64.powf(rng.random_range(-1.0..4.0));
            let err = realized_quantization_error(n, p, g, alpha);
            let bound = quantization_bound(n, p, g, alpha);
            assert!(
                err <= bound + 1e-12,
                "violated: n={n} p={p} g={g} alpha={alpha}: {err} > {bound}"
            );
        }
    }

    #[test]
    fn choose_alpha_scales_linearly() {
        let g = small_genotype(37);
        let f = g.map_params().unwrap();
        let d0 = uncorrected_mean_degree(&f).unwrap();
        assert!((choose_alpha(&f, d0).unwrap() - 1.0).abs() < 1e-12);
        assert!((choose_alpha(&f, 10.0 * d0).unwrap() - 10.0).abs() < 1e-9);
        assert!(choose_alpha(&f, 0.0).is_err());
    }

    #[test]
    fn chosen_alpha_hits_target_degree_in_samples() {
        let g = small_genotype(38);
        let f = g.map_params().unwrap();
        let target = 1e4;
        let alpha = choose_alpha(&f, target).unwrap();
        let mut mean = 0.0;
        let agents = 100;
        for s in 0..agents {
            let agent = sample_from_factors(&f, alpha, derive_seed(903, s)).unwrap();
            mean += sampled_mean_degree(&agent);
        }
        mean /= agents as f64;
        assert!(
            (mean - target).abs() / target < 0.05,
            "sampled mean degree {mean} misses target {target}"
        );
    }

    #[test]
    fn weights_are_counts_times_scaled_conductance() {
        let g = small_genotype(39);
        let f = g.map_params().unwrap();
        let alpha = 7.5;
        let agent = sample_from_factors(&f, alpha, 904).unwrap();
        for l in 0..f.dims.depth() {
            let g_bar = f.conductance_expectation(l).unwrap();
            for u in 0..agent.w[l].rows() {
                for v in 0..agent.w[l].cols() {
                    let expect = agent.b_tilde[l][(u, v)] as f64 * (g_bar[(u, v)] / alpha);
                    assert_eq!(agent.w[l][(u, v)], expect);
                }
            }
        }
    }
}
