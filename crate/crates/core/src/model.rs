//! Genetic parameterization of network weights.
//!
//! A genotype holds raw (unconstrained) parameter matrices per neuron layer:
//! gene expression `X̂`, neurotransmitter distribution `Q̂`, receptor
//! distribution `R̂`, plus two shared matrices: pairwise genetic rules `Ô`
//! (G×G) and neurotransmitter/receptor conductances `K̂` (L×M). Mapping them
//! into their domains (softplus, row-softmax, sigmoid) yields the factors of
//! the mean weight matrix for consecutive layers `l -> l+1`:
//!
//! ```text
//! W̄_l = (X_l O X_{l+1}ᵀ) ⊙ (Q_l (A ⊙ K) R_{l+1}ᵀ)
//! ```
//!
//! where the first factor is the expected synapse count per neuron pair, the
//! second the expected conductance per synapse, and `A` the fixed polarity
//! matrix pairing each neurotransmitter with one excitatory (+1) and one
//! inhibitory (-1) receptor.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::scalar::{Scalar, sigmoid, softplus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintMode {
    #[serde(rename = "free")]
    Free,
    #[serde(rename = "coexpression-constrained")]
    CoexpressionConstrained,
}

impl std::fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintMode::Free => write!(f, "free"),
            ConstraintMode::CoexpressionConstrained => write!(f, "coexpression-constrained"),
        }
    }
}

/// Layer sizes and factor dimensions. `receptors` is always
/// `2 * neurotransmitters` because the polarity matrix is built from 1x2
/// blocks (one excitatory and one inhibitory receptor per transmitter).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub layer_sizes: Vec<usize>,
    pub genes: usize,
    pub neurotransmitters: usize,
    pub receptors: usize,
}

impl ModelDims {
    pub fn new(layer_sizes: Vec<usize>, genes: usize, neurotransmitters: usize) -> Result<Self> {
        let dims = ModelDims {
            layer_sizes,
            genes,
            neurotransmitters,
            receptors: 2 * neurotransmitters,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least an input and an output layer".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument("all layer sizes must be >= 1".into()));
        }
        if self.genes == 0 || self.neurotransmitters == 0 {
            return Err(Error::InvalidArgument(
                "gene and neurotransmitter counts must be >= 1".into(),
            ));
        }
        if self.receptors != 2 * self.neurotransmitters {
            return Err(Error::InvalidArgument(format!(
                "receptor count must be 2*neurotransmitters, got {} vs {}",
                self.receptors, self.neurotransmitters
            )));
        }
        Ok(())
    }

    /// Number of weight layers (connections between consecutive neuron layers).
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn total_neurons(&self) -> usize {
        self.layer_sizes.iter().sum()
    }
}

/// Fixed polarity matrix: row i has +1 at column 2i and -1 at column 2i+1.
/// Entries are not learnable.
pub fn build_polarity_matrix(neurotransmitters: usize) -> Result<Mat<i8>> {
    if neurotransmitters == 0 {
        return Err(Error::InvalidArgument(
            "polarity matrix needs at least one neurotransmitter".into(),
        ));
    }
    let mut a = Mat::filled(neurotransmitters, 2 * neurotransmitters, 0i8);
    for i in 0..neurotransmitters {
        a[(i, 2 * i)] = 1;
        a[(i, 2 * i + 1)] = -1;
    }
    Ok(a)
}

/// Raw (pre-map) parameters plus the fixed polarity structure.
#[derive(Clone, Debug, PartialEq)]
pub struct Genotype<F> {
    pub dims: ModelDims,
    /// Per neuron layer, `N_l x G`.
    pub x_hat: Vec<Mat<F>>,
    /// Shared genetic rules, `G x G`.
    pub o_hat: Mat<F>,
    /// Per neuron layer, `N_l x L`.
    pub q_hat: Vec<Mat<F>>,
    /// Per neuron layer, `N_l x M`.
    pub r_hat: Vec<Mat<F>>,
    /// Shared conductances, `L x M`.
    pub k_hat: Mat<F>,
    /// Fixed polarity, `L x M`, entries in {-1, 0, 1}.
    pub polarity: Mat<i8>,
    /// Present iff the rules map runs in coexpression-constrained mode.
    pub coexpression_mask: Option<Mat<u8>>,
    pub temperature: F,
    pub seed: u64,
}

impl<F: Scalar> Genotype<F> {
    /// Seeded random initialization: `Ô`, `K̂` standard normal; `X̂`, `Q̂`,
    /// `R̂` Kaiming-style normal with fan equal to the gene count. Draw order
    /// is fixed (X̂ per layer, then Ô, Q̂ per layer, R̂ per layer, K̂) so a
    /// seed pins the genotype bit-exactly.
    pub fn random(
        dims: ModelDims,
        coexpression_mask: Option<Mat<u8>>,
        temperature: F,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        let mut rng = crate::rng::chacha(seed);
        let draw = |rows: usize, cols: usize, std: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            Mat::from_fn(rows, cols, |_, _| {
                F::c(std * rng.sample::<f64, _>(StandardNormal))
            })
        };
        let kaiming = (2.0 / dims.genes as f64).sqrt();
        let (g, l, m) = (dims.genes, dims.neurotransmitters, dims.receptors);

        let x_hat = dims
            .layer_sizes
            .iter()
            .map(|&n| draw(n, g, kaiming, &mut rng))
            .collect();
        let o_hat = draw(g, g, 1.0, &mut rng);
        let q_hat = dims
            .layer_sizes
            .iter()
            .map(|&n| draw(n, l, kaiming, &mut rng))
            .collect();
        let r_hat = dims
            .layer_sizes
            .iter()
            .map(|&n| draw(n, m, kaiming, &mut rng))
            .collect();
        let k_hat = draw(l, m, 1.0, &mut rng);

        let genotype = Genotype {
            polarity: build_polarity_matrix(l)?,
            dims,
            x_hat,
            o_hat,
            q_hat,
            r_hat,
            k_hat,
            coexpression_mask,
            temperature,
            seed,
        };
        genotype.validate()?;
        Ok(genotype)
    }

    pub fn constraint_mode(&self) -> ConstraintMode {
        if self.coexpression_mask.is_some() {
            ConstraintMode::CoexpressionConstrained
        } else {
            ConstraintMode::Free
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let (g, l, m) = (
            self.dims.genes,
            self.dims.neurotransmitters,
            self.dims.receptors,
        );
        let layers = self.dims.layer_sizes.len();
        if self.x_hat.len() != layers || self.q_hat.len() != layers || self.r_hat.len() != layers {
            return Err(Error::Shape("per-layer matrix count != layer count".into()));
        }
        for (idx, &n) in self.dims.layer_sizes.iter().enumerate() {
            if self.x_hat[idx].shape() != (n, g) {
                return Err(Error::Shape(format!("X_hat[{idx}] must be {n}x{g}")));
            }
            if self.q_hat[idx].shape() != (n, l) {
                return Err(Error::Shape(format!("Q_hat[{idx}] must be {n}x{l}")));
            }
            if self.r_hat[idx].shape() != (n, m) {
                return Err(Error::Shape(format!("R_hat[{idx}] must be {n}x{m}")));
            }
        }
        if self.o_hat.shape() != (g, g) {
            return Err(Error::Shape(format!("O_hat must be {g}x{g}")));
        }
        if self.k_hat.shape() != (l, m) {
            return Err(Error::Shape(format!("K_hat must be {l}x{m}")));
        }
        if self.polarity != build_polarity_matrix(l)? {
            return Err(Error::InvalidArgument(
                "polarity matrix must be the canonical block-diagonal [1,-1] form".into(),
            ));
        }
        if let Some(mask) = &self.coexpression_mask {
            if mask.shape() != (g, g) {
                return Err(Error::Shape(format!("coexpression mask must be {g}x{g}")));
            }
            if mask.data().iter().any(|&b| b > 1) {
                return Err(Error::InvalidArgument(
                    "coexpression mask entries must be 0 or 1".into(),
                ));
            }
        }
        if !(self.temperature > F::zero()) || !self.temperature.is_finite() {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        Ok(())
    }

    /// Maps raw parameters into their domains. Rejects non-finite raw entries,
    /// naming the offending matrix and index.
    pub fn map_params(&self) -> Result<MappedFactors<F>> {
        self.validate()?;
        let check = |mat: &Mat<F>, what: String| -> Result<()> {
            match mat.first_non_finite() {
                Some((row, col)) => Err(Error::NonFinite { what, row, col }),
                None => Ok(()),
            }
        };
        for (i, xh) in self.x_hat.iter().enumerate() {
            check(xh, format!("X_hat[{i}]"))?;
        }
        check(&self.o_hat, "O_hat".into())?;
        for (i, qh) in self.q_hat.iter().enumerate() {
            check(qh, format!("Q_hat[{i}]"))?;
        }
        for (i, rh) in self.r_hat.iter().enumerate() {
            check(rh, format!("R_hat[{i}]"))?;
        }
        check(&self.k_hat, "K_hat".into())?;

        let o = match &self.coexpression_mask {
            None => self.o_hat.map(sigmoid),
            Some(mask) => constrained_rules(&self.o_hat, mask, self.temperature)?,
        };
        Ok(MappedFactors {
            dims: self.dims.clone(),
            x: self.x_hat.iter().map(|m| m.map(softplus)).collect(),
            o,
            q: self.q_hat.iter().map(softmax_rows).collect(),
            r: self.r_hat.iter().map(softmax_rows).collect(),
            k: self.k_hat.map(softplus),
            polarity: self.polarity.clone(),
        })
    }

    /// Total raw parameter count (excludes the fixed polarity matrix and mask).
    pub fn param_count(&self) -> usize {
        let per_layer: usize = self
            .dims
            .layer_sizes
            .iter()
            .map(|&n| n * (self.dims.genes + self.dims.neurotransmitters + self.dims.receptors))
            .sum();
        per_layer + self.dims.genes * self.dims.genes
            + self.dims.neurotransmitters * self.dims.receptors
    }

    /// Flattens raw parameters in the fixed order X̂ layers, Ô, Q̂ layers,
    /// R̂ layers, K̂ (row-major within each matrix).
    pub fn flatten(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in &self.x_hat {
            out.extend_from_slice(m.data());
        }
        out.extend_from_slice(self.o_hat.data());
        for m in &self.q_hat {
            out.extend_from_slice(m.data());
        }
        for m in &self.r_hat {
            out.extend_from_slice(m.data());
        }
        out.extend_from_slice(self.k_hat.data());
        out
    }

    /// Writes a flat parameter vector (same order as [`Genotype::flatten`])
    /// back into the raw matrices.
    pub fn set_from_flat(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        let take = |mat: &mut Mat<F>, offset: &mut usize| {
            let n = mat.rows() * mat.cols();
            mat.data_mut().copy_from_slice(&flat[*offset..*offset + n]);
            *offset += n;
        };
        for m in &mut self.x_hat {
            take(m, &mut offset);
        }
        take(&mut self.o_hat, &mut offset);
        for m in &mut self.q_hat {
            take(m, &mut offset);
        }
        for m in &mut self.r_hat {
            take(m, &mut offset);
        }
        take(&mut self.k_hat, &mut offset);
        Ok(())
    }
}

/// Domain-mapped factors: `X` and `K` nonnegative, `Q`/`R` row-stochastic,
/// `O` entrywise in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MappedFactors<F> {
    pub dims: ModelDims,
    pub x: Vec<Mat<F>>,
    pub o: Mat<F>,
    pub q: Vec<Mat<F>>,
    pub r: Vec<Mat<F>>,
    pub k: Mat<F>,
    pub polarity: Mat<i8>,
}

impl<F: Scalar> MappedFactors<F> {
    /// Signed conductance table `A ⊙ K`.
    pub fn signed_conductances(&self) -> Mat<F> {
        signed_conductances(&self.polarity, &self.k)
    }

    /// Expected synapse counts `B̄_l = X_l O X_{l+1}ᵀ` for weight layer `l`.
    pub fn synapse_expectation(&self, layer: usize) -> Result<Mat<F>> {
        self.check_layer(layer)?;
        Ok(self.x[layer].matmul(&self.o).matmul_nt(&self.x[layer + 1]))
    }

    /// Expected conductances `Ḡ_l = Q_l (A ⊙ K) R_{l+1}ᵀ` for weight layer `l`.
    pub fn conductance_expectation(&self, layer: usize) -> Result<Mat<F>> {
        self.check_layer(layer)?;
        let s = self.signed_conductances();
        Ok(self.q[layer].matmul(&s).matmul_nt(&self.r[layer + 1]))
    }

    /// Mean weight matrix `W̄_l = B̄_l ⊙ Ḡ_l`.
    pub fn mean_weight_matrix(&self, layer: usize) -> Result<Mat<F>> {
        Ok(self
            .synapse_expectation(layer)?
            .hadamard(&self.conductance_expectation(layer)?))
    }

    /// Mean weight matrices for every layer.
    pub fn mean_weights(&self) -> Result<Vec<Mat<F>>> {
        (0..self.dims.depth()).map(|l| self.mean_weight_matrix(l)).collect()
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.dims.depth() {
            return Err(Error::InvalidArgument(format!(
                "layer {layer} out of range (depth {})",
                self.dims.depth()
            )));
        }
        Ok(())
    }
}

pub fn signed_conductances<F: Scalar>(polarity: &Mat<i8>, k: &Mat<F>) -> Mat<F> {
    assert_eq!(polarity.shape(), k.shape(), "polarity/conductance shapes");
    Mat::from_fn(k.rows(), k.cols(), |r, c| {
        F::c(polarity[(r, c)] as f64) * k[(r, c)]
    })
}

/// Row-wise softmax with the max-subtraction trick; rows sum to 1 exactly up
/// to division rounding.
pub fn softmax_rows<F: Scalar>(raw: &Mat<F>) -> Mat<F> {
    let mut out = raw.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
        let mut sum = F::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
    out
}

/// Coexpression-constrained rules map. With `σ` the population standard
/// deviation over all entries of `Ô`:
///
/// ```text
/// O_ij = 0.5·sigmoid((Ô_ij + 3σ)/T) + 0.5   if g_ij = 1
/// O_ij = 0.5·sigmoid((Ô_ij − 3σ)/T)          if g_ij = 0
/// ```
///
/// which pins masked-in pairs above 0.5 and masked-out pairs below 0.5 while
/// keeping the map differentiable in every entry (σ is part of the graph).
pub fn constrained_rules<F: Scalar>(o_hat: &Mat<F>, mask: &Mat<u8>, temperature: F) -> Result<Mat<F>> {
    if o_hat.shape() != mask.shape() || o_hat.rows() != o_hat.cols() {
        return Err(Error::Shape(format!(
            "rules {:?} and mask {:?} must be square and equal",
            o_hat.shape(),
            mask.shape()
        )));
    }
    if !(temperature > F::zero()) || !temperature.is_finite() {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    let sigma = population_std(o_hat);
    Ok(Mat::from_fn(o_hat.rows(), o_hat.cols(), |r, c| {
        constrained_entry(o_hat[(r, c)], sigma, temperature, mask[(r, c)] == 1)
    }))
}

/// Per-entry rule of the constrained map, exposed for direct testing.
pub fn constrained_entry<F: Scalar>(o_hat: F, sigma: F, temperature: F, masked_in: bool) -> F {
    let half = F::c(0.5);
    let three = F::c(3.0);
    if masked_in {
        half * sigmoid((o_hat + three * sigma) / temperature) + half
    } else {
        half * sigmoid((o_hat - three * sigma) / temperature)
    }
}

/// Population (divide-by-n) standard deviation over all entries.
pub fn population_std<F: Scalar>(m: &Mat<F>) -> F {
    let n = F::c((m.rows() * m.cols()) as f64);
    let mean = m.sum() / n;
    let mut ss = F::zero();
    for &x in m.data() {
        let d = x - mean;
        ss += d * d;
    }
    (ss / n).sqrt()
}

fn check_nonneg_finite<F: Scalar>(v: &[F], what: &str) -> Result<()> {
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() || x < F::zero() {
            return Err(Error::InvalidArgument(format!(
                "{what}[{i}] must be finite and nonnegative, got {x}"
            )));
        }
    }
    Ok(())
}

fn check_probability_matrix<F: Scalar>(o: &Mat<F>, what: &str) -> Result<()> {
    for r in 0..o.rows() {
        for c in 0..o.cols() {
            let x = o[(r, c)];
            if !x.is_finite() || x < F::zero() || x > F::one() {
                return Err(Error::InvalidArgument(format!(
                    "{what}[{r},{c}] must lie in [0,1], got {x}"
                )));
            }
        }
    }
    Ok(())
}

fn check_stochastic_row<F: Scalar>(v: &[F], what: &str) -> Result<()> {
    let tol = F::c(1e-9);
    let mut sum = F::zero();
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() || x < -tol {
            return Err(Error::InvalidArgument(format!(
                "{what}[{i}] must be a probability, got {x}"
            )));
        }
        sum += x;
    }
    if (sum - F::one()).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "{what} must sum to 1 (got {sum})"
        )));
    }
    Ok(())
}

/// Expected number of synapses between a pre-synaptic neuron with expression
/// `x` and a post-synaptic neuron with expression `y`: `xᵀ O y`.
pub fn expected_synapse_count<F: Scalar>(x: &[F], y: &[F], o: &Mat<F>) -> Result<F> {
    if o.shape() != (x.len(), y.len()) {
        return Err(Error::Shape(format!(
            "rules must be {}x{}, got {:?}",
            x.len(),
            y.len(),
            o.shape()
        )));
    }
    check_nonneg_finite(x, "x")?;
    check_nonneg_finite(y, "y")?;
    check_probability_matrix(o, "O")?;
    let mut acc = F::zero();
    for (i, &xi) in x.iter().enumerate() {
        let mut row_acc = F::zero();
        for (&oij, &yj) in o.row(i).iter().zip(y) {
            row_acc += oij * yj;
        }
        acc += xi * row_acc;
    }
    Ok(acc)
}

/// Expected synapse counts for every neuron pair across two layers:
/// `X_pre O X_postᵀ`.
pub fn expected_connectome<F: Scalar>(x_pre: &Mat<F>, x_post: &Mat<F>, o: &Mat<F>) -> Result<Mat<F>> {
    if o.shape() != (x_pre.cols(), x_post.cols()) {
        return Err(Error::Shape(format!(
            "rules must be {}x{}, got {:?}",
            x_pre.cols(),
            x_post.cols(),
            o.shape()
        )));
    }
    Ok(x_pre.matmul(o).matmul_nt(x_post))
}

/// Expected conductance of a random synapse between neurons with
/// neurotransmitter distribution `q` and receptor distribution `r`:
/// `qᵀ (A ⊙ K) r`. May be negative when inhibitory pairings dominate.
pub fn expected_conductance<F: Scalar>(
    q: &[F],
    r: &[F],
    polarity: &Mat<i8>,
    k: &Mat<F>,
) -> Result<F> {
    if polarity.shape() != (q.len(), r.len()) || k.shape() != polarity.shape() {
        return Err(Error::Shape(format!(
            "polarity/conductances must be {}x{}, got {:?} and {:?}",
            q.len(),
            r.len(),
            polarity.shape(),
            k.shape()
        )));
    }
    check_stochastic_row(q, "q")?;
    check_stochastic_row(r, "r")?;
    let mut acc = F::zero();
    for (i, &qi) in q.iter().enumerate() {
        for (j, &rj) in r.iter().enumerate() {
            acc += qi * rj * F::c(polarity[(i, j)] as f64) * k[(i, j)];
        }
    }
    Ok(acc)
}

/// Expected conductances for every neuron pair: `Q (A ⊙ K) Rᵀ`.
pub fn expected_conductance_matrix<F: Scalar>(
    q: &Mat<F>,
    r: &Mat<F>,
    polarity: &Mat<i8>,
    k: &Mat<F>,
) -> Result<Mat<F>> {
    if polarity.shape() != (q.cols(), r.cols()) || k.shape() != polarity.shape() {
        return Err(Error::Shape(format!(
            "polarity/conductances must be {}x{}, got {:?} and {:?}",
            q.cols(),
            r.cols(),
            polarity.shape(),
            k.shape()
        )));
    }
    for row in 0..q.rows() {
        check_stochastic_row(q.row(row), "Q row")?;
    }
    for row in 0..r.rows() {
        check_stochastic_row(r.row(row), "R row")?;
    }
    Ok(q.matmul(&signed_conductances(polarity, k)).matmul_nt(r))
}
