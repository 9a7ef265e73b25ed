//! Lineal mitosis baseline: per-neuron expression profiles grown on a binary
//! lineage tree instead of being trained. Each division adds an independent
//! unit-normal differential expression vector to the parent profile, so a
//! depth-d leaf is the zygote plus d unit-normal increments and two leaves
//! covary by the length of their shared path from the zygote.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Genotype;
use crate::rng::{chacha, derive_seed};
use crate::scalar::Scalar;

/// A fully grown lineage tree: the zygote profile, the number of doubling
/// rounds, and the leaf profiles in generation order (children of cell i are
/// leaves 2i and 2i+1 of the next round).
#[derive(Clone, Debug)]
pub struct LineageTree {
    pub zygote: Vec<f64>,
    pub depth: usize,
    pub leaves: Vec<Vec<f64>>,
}

impl LineageTree {
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }
}

/// Grow a lineage tree by doubling the population until it reaches at least
/// `n` cells. Every child is its parent plus a fresh N(0, I) delta, drawn in
/// cell order (first child then second child).
pub fn grow_lineage<R: Rng + ?Sized>(profile_len: usize, n: usize, rng: &mut R) -> Result<LineageTree> {
    if n == 0 {
        return Err(Error::InvalidArgument("lineage needs at least one cell".into()));
    }
    if profile_len == 0 {
        return Err(Error::InvalidArgument("profile length must be >= 1".into()));
    }
    let zygote: Vec<f64> = (0..profile_len)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut cells = vec![zygote.clone()];
    let mut depth = 0;
    while cells.len() < n {
        let mut next = Vec::with_capacity(cells.len() * 2);
        for parent in &cells {
            for _ in 0..2 {
                let child: Vec<f64> = parent
                    .iter()
                    .map(|&c| c + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                next.push(child);
            }
        }
        cells = next;
        depth += 1;
    }
    Ok(LineageTree { zygote, depth, leaves: cells })
}

/// Circularly roll a sequence of profiles: output j is input (j + offset) mod n.
/// Preserves the multiset of profiles exactly.
pub fn circular_roll<T: Clone>(items: &[T], offset: usize) -> Vec<T> {
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    (0..n).map(|j| items[(j + offset) % n].clone()).collect()
}

/// Generate `n` raw profiles of length `profile_len`: grow the tree, truncate
/// to the first `n` leaves, then apply a random circular roll. Truncation can
/// cut across a complete subtree; the subsequent contiguous layer partition is
/// the closest faithful reading of assigning "leaves from the same complete
/// subtree" to each layer.
pub fn lineal_profiles(n: usize, profile_len: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = chacha(seed);
    let tree = grow_lineage(profile_len, n, &mut rng)?;
    let truncated = &tree.leaves[..n];
    let offset = rng.random_range(0..n);
    Ok(circular_roll(truncated, offset))
}

/// Contiguous index ranges assigning the rolled profiles to neuron layers in
/// order (input block first, output block last).
pub fn layer_partition(layer_sizes: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    layer_sizes
        .iter()
        .map(|&sz| {
            let r = start..start + sz;
            start += sz;
            r
        })
        .collect()
}

/// Build a bio-baseline genotype: X-hat/Q-hat/R-hat rows come from lineal
/// profiles (split as [genes | neurotransmitters | receptors] per neuron),
/// while the rules O-hat / conductances K-hat, the co-expression mask, and the
/// temperature are copied from a trained donor. The raw profiles are pre-map
/// parameters; `map_params` applies the usual nonnegativity/normalization maps.
pub fn bio_genotype<F: Scalar>(donor: &Genotype<F>, seed: u64) -> Result<Genotype<F>> {
    donor.validate()?;
    let dims = donor.dims.clone();
    let (genes, nts, recs) = (dims.genes, dims.neurotransmitters, dims.receptors);
    let profile_len = genes + nts + recs;
    let total = dims.total_neurons();
    let profiles = lineal_profiles(total, profile_len, seed)?;
    let ranges = layer_partition(&dims.layer_sizes);

    let mut x_hat = Vec::with_capacity(dims.layer_sizes.len());
    let mut q_hat = Vec::with_capacity(dims.layer_sizes.len());
    let mut r_hat = Vec::with_capacity(dims.layer_sizes.len());
    for range in &ranges {
        let rows = range.len();
        let mut x = crate::mat::Mat::zeros(rows, genes);
        let mut q = crate::mat::Mat::zeros(rows, nts);
        let mut r = crate::mat::Mat::zeros(rows, recs);
        for (local, neuron) in range.clone().enumerate() {
            let p = &profiles[neuron];
            for g in 0..genes {
                x[(local, g)] = F::c(p[g]);
            }
            for t in 0..nts {
                q[(local, t)] = F::c(p[genes + t]);
            }
            for m in 0..recs {
                r[(local, m)] = F::c(p[genes + nts + m]);
            }
        }
        x_hat.push(x);
        q_hat.push(q);
        r_hat.push(r);
    }

    let genotype = Genotype {
        dims,
        x_hat,
        o_hat: donor.o_hat.clone(),
        q_hat,
        r_hat,
        k_hat: donor.k_hat.clone(),
        polarity: donor.polarity.clone(),
        coexpression_mask: donor.coexpression_mask.clone(),
        temperature: donor.temperature,
        seed,
    };
    genotype.validate()?;
    Ok(genotype)
}

/// Independent bio-baseline genotypes from one donor, seeded per agent.
pub fn bio_cohort<F: Scalar>(donor: &Genotype<F>, agents: usize, seed: u64) -> Result<Vec<Genotype<F>>> {
    (0..agents)
        .map(|a| bio_genotype(donor, derive_seed(seed, a as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    fn variance(xs: &[f64]) -> f64 {
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn single_cell_is_the_zygote() {
        let mut rng = chacha(7);
        let tree = grow_lineage(5, 1, &mut rng).unwrap();
        assert_eq!(tree.depth, 0);
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.leaves[0], tree.zygote);
    }

    #[test]
    fn doubling_reaches_next_power_of_two() {
        let mut rng = chacha(3);
        for (n, expected_leaves, expected_depth) in
            [(2usize, 2usize, 1usize), (3, 4, 2), (4, 4, 2), (5, 8, 3), (16, 16, 4), (17, 32, 5)]
        {
            let tree = grow_lineage(3, n, &mut rng).unwrap();
            assert_eq!(tree.leaf_count(), expected_leaves, "n={n}");
            assert_eq!(tree.depth, expected_depth, "n={n}");
            assert_eq!(tree.leaf_count(), 1 << tree.depth);
        }
    }

    #[test]
    fn rejects_degenerate_requests() {
        let mut rng = chacha(0);
        assert!(grow_lineage(4, 0, &mut rng).is_err());
        assert!(grow_lineage(0, 4, &mut rng).is_err());
        assert!(lineal_profiles(0, 4, 1).is_err());
    }

    #[test]
    fn roll_preserves_the_multiset() {
        let profiles = lineal_profiles(7, 4, 11).unwrap();
        let mut rng = chacha(11);
        let tree = grow_lineage(4, 7, &mut rng).unwrap();
        let mut expected: Vec<Vec<u64>> = tree.leaves[..7]
            .iter()
            .map(|p| p.iter().map(|x| x.to_bits()).collect())
            .collect();
        let mut got: Vec<Vec<u64>> =
            profiles.iter().map(|p| p.iter().map(|x| x.to_bits()).collect()).collect();
        expected.sort();
        got.sort();
        assert_eq!(expected, got);
    }

    #[test]
    fn roll_is_circular() {
        let items: Vec<i32> = (0..6).collect();
        assert_eq!(circular_roll(&items, 0), items);
        assert_eq!(circular_roll(&items, 2), vec![2, 3, 4, 5, 0, 1]);
        assert_eq!(circular_roll(&items, 6), items);
        // adjacency is preserved cyclically
        let rolled = circular_roll(&items, 4);
        for w in rolled.windows(2) {
            assert_eq!((w[0] + 1) % 6, w[1] % 6);
        }
    }

    #[test]
    fn profiles_deterministic_per_seed() {
        let a = lineal_profiles(10, 6, 42).unwrap();
        let b = lineal_profiles(10, 6, 42).unwrap();
        let c = lineal_profiles(10, 6, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    /// Two siblings differ by the difference of two independent unit normals,
    /// so each component of (u - v) has variance 2.
    #[test]
    fn sibling_difference_has_variance_two() {
        let trees = 10_000;
        let len = 8;
        let mut diffs = Vec::with_capacity(trees * len);
        for t in 0..trees {
            let mut rng = chacha(derive_seed(100, t as u64));
            let tree = grow_lineage(len, 2, &mut rng).unwrap();
            for k in 0..len {
                diffs.push(tree.leaves[0][k] - tree.leaves[1][k]);
            }
        }
        let m = mean(&diffs);
        let v = variance(&diffs);
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((v - 2.0).abs() < 0.05 * 2.0, "variance {v}");
    }

    /// A depth-d leaf is the zygote plus d independent unit-normal increments,
    /// so each component of (leaf - zygote) has variance d.
    #[test]
    fn leaf_deviation_variance_matches_depth() {
        let trees = 10_000;
        let len = 8;
        let depth = 4; // 16 leaves
        let mut devs = Vec::with_capacity(trees * len);
        for t in 0..trees {
            let mut rng = chacha(derive_seed(200, t as u64));
            let tree = grow_lineage(len, 1 << depth, &mut rng).unwrap();
            assert_eq!(tree.depth, depth);
            for k in 0..len {
                devs.push(tree.leaves[0][k] - tree.zygote[k]);
            }
        }
        let v = variance(&devs);
        let d = depth as f64;
        assert!((v - d).abs() < 0.05 * d, "variance {v}, expected {d}");
    }

    /// Covariance of two leaf deviations equals the number of increments on
    /// their shared path from the zygote: d-1 for siblings, d-2 for cousins.
    #[test]
    fn shared_path_sets_leaf_covariance() {
        let trees = 10_000;
        let len = 8;
        let depth = 4;
        let mut sib = Vec::with_capacity(trees * len);
        let mut cous = Vec::with_capacity(trees * len);
        for t in 0..trees {
            let mut rng = chacha(derive_seed(300, t as u64));
            let tree = grow_lineage(len, 1 << depth, &mut rng).unwrap();
            for k in 0..len {
                let a = tree.leaves[0][k] - tree.zygote[k];
                let b = tree.leaves[1][k] - tree.zygote[k]; // sibling of leaf 0
                let c = tree.leaves[2][k] - tree.zygote[k]; // cousin of leaf 0
                sib.push(a * b);
                cous.push(a * c);
            }
        }
        // deviations have zero mean, so E[a*b] estimates the covariance
        let cov_sib = mean(&sib);
        let cov_cous = mean(&cous);
        let d = depth as f64;
        assert!((cov_sib - (d - 1.0)).abs() < 0.10 * (d - 1.0), "sibling cov {cov_sib}");
        assert!((cov_cous - (d - 2.0)).abs() < 0.10 * (d - 2.0), "cousin cov {cov_cous}");
        assert!(cov_sib > cov_cous, "shared path is longer for siblings");
    }

    #[test]
    fn layer_partition_is_contiguous_and_exhaustive() {
        let ranges = layer_partition(&[4, 16, 2]);
        assert_eq!(ranges, vec![0..4, 4..20, 20..22]);
        let total: usize = ranges.iter().map(|r| r.len()).sum();
        assert_eq!(total, 22);
    }

    #[test]
    fn bio_genotype_splits_profiles_and_copies_rules() {
        let dims = ModelDims::new(vec![3, 5, 2], 4, 3).unwrap();
        let donor = Genotype::<f64>::random(dims.clone(), None, 1.0, 99).unwrap();
        let bio = bio_genotype(&donor, 7).unwrap();

        assert_eq!(bio.o_hat, donor.o_hat);
        assert_eq!(bio.k_hat, donor.k_hat);
        assert_eq!(bio.polarity, donor.polarity);
        assert_eq!(bio.temperature, donor.temperature);
        assert_eq!(bio.seed, 7);

        // profile rows land in layer order: [genes | nts | receptors]
        let profiles = lineal_profiles(10, 4 + 3 + 6, 7).unwrap();
        let ranges = layer_partition(&dims.layer_sizes);
        for (l, range) in ranges.iter().enumerate() {
            for (local, neuron) in range.clone().enumerate() {
                for g in 0..4 {
                    assert_eq!(bio.x_hat[l][(local, g)], profiles[neuron][g]);
                }
                for t in 0..3 {
                    assert_eq!(bio.q_hat[l][(local, t)], profiles[neuron][4 + t]);
                }
                for m in 0..6 {
                    assert_eq!(bio.r_hat[l][(local, m)], profiles[neuron][4 + 3 + m]);
                }
            }
        }

        // the assembled genotype maps cleanly
        let factors = bio.map_params().unwrap();
        assert_eq!(factors.dims, dims);
    }

    #[test]
    fn bio_genotype_preserves_constrained_mask() {
        let dims = ModelDims::new(vec![2, 3, 2], 3, 2).unwrap();
        let mask = crate::mat::Mat::filled(3, 3, 1u8);
        let donor = Genotype::<f64>::random(dims, Some(mask.clone()), 0.5, 5).unwrap();
        let bio = bio_genotype(&donor, 8).unwrap();
        assert_eq!(bio.coexpression_mask.as_ref(), Some(&mask));
        assert_eq!(bio.temperature, 0.5);
        bio.map_params().unwrap();
    }

    #[test]
    fn bio_cohort_gives_distinct_agents() {
        let dims = ModelDims::new(vec![2, 4, 2], 3, 2).unwrap();
        let donor = Genotype::<f64>::random(dims, None, 1.0, 1).unwrap();
        let cohort = bio_cohort(&donor, 3, 50).unwrap();
        assert_eq!(cohort.len(), 3);
        assert_ne!(cohort[0].x_hat[0], cohort[1].x_hat[0]);
        assert_ne!(cohort[1].x_hat[0], cohort[2].x_hat[0]);
        for agent in &cohort {
            assert_eq!(agent.o_hat, donor.o_hat);
        }
    }
}
