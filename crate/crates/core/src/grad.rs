//! Forward pass and reverse-mode gradients through the mean-weight model.
//!
//! The network is a bias-free MLP whose weight matrices are the mean weights
//! `W̄_l = B̄_l ⊙ Ḡ_l` (ReLU hidden activations, identity output). The
//! backward pass splits the Hadamard product (`∂L/∂B̄ = ∂L/∂W̄ ⊙ Ḡ`,
//! `∂L/∂Ḡ = ∂L/∂W̄ ⊙ B̄`), pushes through the three-factor matrix products,
//! and finally through the parameter maps (softplus, row-softmax, sigmoid or
//! the constrained rules map). Gradients of the shared `Ô` and `K̂` accumulate
//! across layers; the polarity matrix is fixed and never receives a gradient.
//!
//! Because `W̄` depends only on the parameters, the factor-level products are
//! computed once per parameter snapshot ([`NetworkCache`]) and shared by every
//! forward/backward in a minibatch: per-sample passes only touch the MLP part
//! ([`accumulate_weight_grads`]), and [`factor_backward`] folds the summed
//! `∂L/∂W̄` into raw-parameter gradients in one sweep.

use std::sync::Arc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{Genotype, MappedFactors, ModelDims, population_std, signed_conductances};
use crate::scalar::{Scalar, sigmoid};

/// Scalar loss on the network output, with its gradient.
#[derive(Clone, Debug)]
pub enum Loss<F> {
    /// `Σ (o_i − t_i)²`
    SquaredError { target: Vec<F> },
    /// Elementwise Huber with threshold `delta`, summed.
    Huber { target: Vec<F>, delta: F },
}

impl<F: Scalar> Loss<F> {
    pub fn target_len(&self) -> usize {
        match self {
            Loss::SquaredError { target } | Loss::Huber { target, .. } => target.len(),
        }
    }

    pub fn value(&self, output: &[F]) -> F {
        match self {
            Loss::SquaredError { target } => {
                let mut acc = F::zero();
                for (&o, &t) in output.iter().zip(target) {
                    let e = o - t;
                    acc += e * e;
                }
                acc
            }
            Loss::Huber { target, delta } => {
                let mut acc = F::zero();
                let half = F::c(0.5);
                for (&o, &t) in output.iter().zip(target) {
                    let e = (o - t).abs();
                    acc += if e <= *delta {
                        half * e * e
                    } else {
                        *delta * (e - half * *delta)
                    };
                }
                acc
            }
        }
    }

    pub fn grad(&self, output: &[F]) -> Vec<F> {
        match self {
            Loss::SquaredError { target } => output
                .iter()
                .zip(target)
                .map(|(&o, &t)| F::c(2.0) * (o - t))
                .collect(),
            Loss::Huber { target, delta } => output
                .iter()
                .zip(target)
                .map(|(&o, &t)| (o - t).max(-*delta).min(*delta))
                .collect(),
        }
    }
}

/// Jacobian data of the rules map `Ô -> O`.
#[derive(Clone, Debug)]
enum RulesJacobian<F> {
    /// Free mode `O = sigmoid(Ô)`: stores `O(1−O)`.
    Free { dsig: Mat<F> },
    /// Constrained mode: `c = ∂O/∂u = 0.5·σ'(u)`, the mask sign `s`, the
    /// centered `Ô − μ`, and `σ`; the population std couples every entry.
    Constrained {
        half_sig_prime: Mat<F>,
        sign: Mat<F>,
        centered: Mat<F>,
        sigma: F,
        temperature: F,
    },
}

static CACHE_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Factor products and map Jacobians for one parameter snapshot.
#[derive(Debug)]
pub struct NetworkCache<F> {
    pub dims: ModelDims,
    pub factors: MappedFactors<F>,
    /// Expected synapse counts per weight layer.
    pub b_bar: Vec<Mat<F>>,
    /// Expected conductances per weight layer.
    pub g_bar: Vec<Mat<F>>,
    /// Mean weights per weight layer.
    pub w_bar: Vec<Mat<F>>,
    sig_x: Vec<Mat<F>>,
    sig_k: Mat<F>,
    rules_jac: RulesJacobian<F>,
    id: u64,
}

impl<F: Scalar> NetworkCache<F> {
    pub fn build(genotype: &Genotype<F>) -> Result<Arc<Self>> {
        let factors = genotype.map_params()?;
        let depth = factors.dims.depth();
        let mut b_bar = Vec::with_capacity(depth);
        let mut g_bar = Vec::with_capacity(depth);
        let mut w_bar = Vec::with_capacity(depth);
        for l in 0..depth {
            let b = factors.synapse_expectation(l)?;
            let g = factors.conductance_expectation(l)?;
            w_bar.push(b.hadamard(&g));
            b_bar.push(b);
            g_bar.push(g);
        }
        let sig_x = genotype.x_hat.iter().map(|m| m.map(sigmoid)).collect();
        let sig_k = genotype.k_hat.map(sigmoid);
        let rules_jac = match &genotype.coexpression_mask {
            None => RulesJacobian::Free {
                dsig: factors.o.map(|o| o * (F::one() - o)),
            },
            Some(mask) => {
                let sigma = population_std(&genotype.o_hat);
                let n = F::c((genotype.o_hat.rows() * genotype.o_hat.cols()) as f64);
                let mu = genotype.o_hat.sum() / n;
                let t = genotype.temperature;
                let three = F::c(3.0);
                let half = F::c(0.5);
                let sign = mask.map(|b| if b == 1 { F::one() } else { -F::one() });
                let half_sig_prime = Mat::from_fn(mask.rows(), mask.cols(), |r, c| {
                    let u = (genotype.o_hat[(r, c)] + sign[(r, c)] * three * sigma) / t;
                    let s = sigmoid(u);
                    half * s * (F::one() - s)
                });
                RulesJacobian::Constrained {
                    half_sig_prime,
                    sign,
                    centered: genotype.o_hat.map(|v| v - mu),
                    sigma,
                    temperature: t,
                }
            }
        };
        Ok(Arc::new(NetworkCache {
            dims: factors.dims.clone(),
            b_bar,
            g_bar,
            w_bar,
            sig_x,
            sig_k,
            rules_jac,
            factors,
            id: CACHE_COUNTER.fetch_add(1, Ordering::Relaxed),
        }))
    }

    /// Runs the MLP on `input`, recording activations for the backward pass.
    pub fn forward(self: &Arc<Self>, input: &[F]) -> Result<(Vec<F>, ForwardTrace<F>)> {
        if input.len() != self.dims.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} != input layer size {}",
                input.len(),
                self.dims.input_dim()
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input".into()));
        }
        let depth = self.dims.depth();
        let mut acts: Vec<Vec<F>> = Vec::with_capacity(depth + 1);
        let mut pre: Vec<Vec<F>> = Vec::with_capacity(depth);
        acts.push(input.to_vec());
        for l in 0..depth {
            let z = self.w_bar[l].matvec_t(acts.last().unwrap());
            let a = if l != depth - 1 {
                z.iter().map(|&v| v.max(F::zero())).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        let output = acts.last().unwrap().clone();
        Ok((
            output,
            ForwardTrace {
                cache: Arc::clone(self),
                acts,
                pre,
            },
        ))
    }

    /// Fast inference without trace recording.
    pub fn infer(&self, input: &[F]) -> Result<Vec<F>> {
        if input.len() != self.dims.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} != input layer size {}",
                input.len(),
                self.dims.input_dim()
            )));
        }
        let depth = self.dims.depth();
        let mut a = input.to_vec();
        for l in 0..depth {
            let mut z = self.w_bar[l].matvec_t(&a);
            if l != depth - 1 {
                for v in &mut z {
                    *v = v.max(F::zero());
                }
            }
            a = z;
        }
        Ok(a)
    }
}

/// Activations recorded by one forward pass, tied to its cache.
pub struct ForwardTrace<F> {
    cache: Arc<NetworkCache<F>>,
    /// `a_0..a_D` (input through output).
    acts: Vec<Vec<F>>,
    /// `z_1..z_D` pre-activations.
    pre: Vec<Vec<F>>,
}

impl<F: Scalar> ForwardTrace<F> {
    pub fn output(&self) -> &[F] {
        self.acts.last().unwrap()
    }

    pub fn cache(&self) -> &Arc<NetworkCache<F>> {
        &self.cache
    }
}

/// Gradients for every raw parameter matrix; same block layout as
/// [`Genotype::flatten`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<F> {
    pub x_hat: Vec<Mat<F>>,
    pub o_hat: Mat<F>,
    pub q_hat: Vec<Mat<F>>,
    pub r_hat: Vec<Mat<F>>,
    pub k_hat: Mat<F>,
}

impl<F: Scalar> GradientSet<F> {
    pub fn zeros(dims: &ModelDims) -> Self {
        let (g, l, m) = (dims.genes, dims.neurotransmitters, dims.receptors);
        GradientSet {
            x_hat: dims.layer_sizes.iter().map(|&n| Mat::zeros(n, g)).collect(),
            o_hat: Mat::zeros(g, g),
            q_hat: dims.layer_sizes.iter().map(|&n| Mat::zeros(n, l)).collect(),
            r_hat: dims.layer_sizes.iter().map(|&n| Mat::zeros(n, m)).collect(),
            k_hat: Mat::zeros(l, m),
        }
    }

    /// Named parameter blocks in flatten order.
    pub fn blocks(&self) -> Vec<(String, &Mat<F>)> {
        let mut out = Vec::new();
        for (i, m) in self.x_hat.iter().enumerate() {
            out.push((format!("X_hat[{i}]"), m));
        }
        out.push(("O_hat".to_string(), &self.o_hat));
        for (i, m) in self.q_hat.iter().enumerate() {
            out.push((format!("Q_hat[{i}]"), m));
        }
        for (i, m) in self.r_hat.iter().enumerate() {
            out.push((format!("R_hat[{i}]"), m));
        }
        out.push(("K_hat".to_string(), &self.k_hat));
        out
    }

    pub fn flatten(&self) -> Vec<F> {
        let mut out = Vec::new();
        for (_, m) in self.blocks() {
            out.extend_from_slice(m.data());
        }
        out
    }

    pub fn from_flat(dims: &ModelDims, flat: &[F]) -> Result<Self> {
        let mut set = GradientSet::zeros(dims);
        let expected: usize = set
            .blocks()
            .iter()
            .map(|(_, m)| m.rows() * m.cols())
            .sum();
        if flat.len() != expected {
            return Err(Error::Shape(format!(
                "flat gradient has {} entries, expected {expected}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut fill = |m: &mut Mat<F>| {
            let n = m.rows() * m.cols();
            m.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        };
        for m in &mut set.x_hat {
            fill(m);
        }
        fill(&mut set.o_hat);
        for m in &mut set.q_hat {
            fill(m);
        }
        for m in &mut set.r_hat {
            fill(m);
        }
        fill(&mut set.k_hat);
        Ok(set)
    }

    pub fn add_assign(&mut self, other: &GradientSet<F>) {
        for (a, b) in self.x_hat.iter_mut().zip(&other.x_hat) {
            a.add_scaled(b, F::one());
        }
        self.o_hat.add_scaled(&other.o_hat, F::one());
        for (a, b) in self.q_hat.iter_mut().zip(&other.q_hat) {
            a.add_scaled(b, F::one());
        }
        for (a, b) in self.r_hat.iter_mut().zip(&other.r_hat) {
            a.add_scaled(b, F::one());
        }
        self.k_hat.add_scaled(&other.k_hat, F::one());
    }

    pub fn scale(&mut self, s: F) {
        for m in &mut self.x_hat {
            *m = m.scale(s);
        }
        self.o_hat = self.o_hat.scale(s);
        for m in &mut self.q_hat {
            *m = m.scale(s);
        }
        for m in &mut self.r_hat {
            *m = m.scale(s);
        }
        self.k_hat = self.k_hat.scale(s);
    }

    pub fn max_abs(&self) -> F {
        self.blocks()
            .iter()
            .fold(F::zero(), |m, (_, b)| m.max(b.max_abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|(_, m)| m.all_finite())
    }
}

/// Accumulator for `∂L/∂W̄_l` over a minibatch, tied to one cache.
pub struct WeightGrads<F> {
    cache_id: u64,
    pub dw: Vec<Mat<F>>,
}

impl<F: Scalar> WeightGrads<F> {
    pub fn zeros(cache: &NetworkCache<F>) -> Self {
        WeightGrads {
            cache_id: cache.id,
            dw: cache
                .w_bar
                .iter()
                .map(|w| Mat::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }
}

/// Builds a cache and runs one traced forward pass.
pub fn forward<F: Scalar>(genotype: &Genotype<F>, input: &[F]) -> Result<(Vec<F>, ForwardTrace<F>)> {
    NetworkCache::build(genotype)?.forward(input)
}

/// Backpropagates `loss_grad = ∂L/∂output` through the MLP portion only,
/// accumulating `∂L/∂W̄_l` into `weight_grads`.
pub fn accumulate_weight_grads<F: Scalar>(
    trace: &ForwardTrace<F>,
    loss_grad: &[F],
    weight_grads: &mut WeightGrads<F>,
) -> Result<()> {
    let cache = &trace.cache;
    if weight_grads.cache_id != cache.id {
        return Err(Error::InvalidArgument(
            "weight-gradient accumulator belongs to a different parameter snapshot".into(),
        ));
    }
    if loss_grad.len() != cache.dims.output_dim() {
        return Err(Error::Shape(format!(
            "loss gradient length {} != output size {}",
            loss_grad.len(),
            cache.dims.output_dim()
        )));
    }
    let depth = cache.dims.depth();
    let mut dz = loss_grad.to_vec();
    for l in (0..depth).rev() {
        weight_grads.dw[l].add_outer(&trace.acts[l], &dz);
        if l > 0 {
            let da = cache.w_bar[l].matvec(&dz);
            // trace.pre[l-1] holds z_l; ReLU subgradient 0 at the kink.
            dz = da
                .iter()
                .zip(&trace.pre[l - 1])
                .map(|(&d, &z)| if z > F::zero() { d } else { F::zero() })
                .collect();
        }
    }
    Ok(())
}

/// Folds accumulated `∂L/∂W̄` into gradients of the raw parameters.
pub fn factor_backward<F: Scalar>(
    cache: &NetworkCache<F>,
    weight_grads: &WeightGrads<F>,
) -> Result<GradientSet<F>> {
    if weight_grads.cache_id != cache.id {
        return Err(Error::InvalidArgument(
            "weight-gradient accumulator belongs to a different parameter snapshot".into(),
        ));
    }
    let dims = &cache.dims;
    let depth = dims.depth();
    let f = &cache.factors;
    let s = signed_conductances(&f.polarity, &f.k);

    // Gradients in the mapped domain, accumulated across layers.
    let mut dx: Vec<Mat<F>> = dims
        .layer_sizes
        .iter()
        .map(|&n| Mat::zeros(n, dims.genes))
        .collect();
    let mut dq: Vec<Mat<F>> = dims
        .layer_sizes
        .iter()
        .map(|&n| Mat::zeros(n, dims.neurotransmitters))
        .collect();
    let mut dr: Vec<Mat<F>> = dims
        .layer_sizes
        .iter()
        .map(|&n| Mat::zeros(n, dims.receptors))
        .collect();
    let mut do_ = Mat::<F>::zeros(dims.genes, dims.genes);
    let mut dk = Mat::<F>::zeros(dims.neurotransmitters, dims.receptors);

    for l in 0..depth {
        let dw = &weight_grads.dw[l];
        let db = dw.hadamard(&cache.g_bar[l]);
        let dg = dw.hadamard(&cache.b_bar[l]);

        // B̄ = X_l O X_{l+1}ᵀ
        dx[l].add_scaled(&db.matmul(&f.x[l + 1]).matmul_nt(&f.o), F::one());
        dx[l + 1].add_scaled(&db.matmul_tn(&f.x[l]).matmul(&f.o), F::one());
        do_.add_scaled(&f.x[l].matmul_tn(&db).matmul(&f.x[l + 1]), F::one());

        // Ḡ = Q_l (A⊙K) R_{l+1}ᵀ
        dq[l].add_scaled(&dg.matmul(&f.r[l + 1]).matmul_nt(&s), F::one());
        dr[l + 1].add_scaled(&dg.matmul_tn(&f.q[l]).matmul(&s), F::one());
        let ds = f.q[l].matmul_tn(&dg).matmul(&f.r[l + 1]);
        // K enters through A ⊙ K; A is fixed and gets no gradient.
        dk.add_scaled(
            &Mat::from_fn(ds.rows(), ds.cols(), |r, c| {
                ds[(r, c)] * F::c(f.polarity[(r, c)] as f64)
            }),
            F::one(),
        );
    }

    // Through the parameter maps.
    let mut grads = GradientSet::zeros(dims);
    for l in 0..dims.layer_sizes.len() {
        grads.x_hat[l] = dx[l].hadamard(&cache.sig_x[l]);
        grads.q_hat[l] = softmax_backward_rows(&f.q[l], &dq[l]);
        grads.r_hat[l] = softmax_backward_rows(&f.r[l], &dr[l]);
    }
    grads.k_hat = dk.hadamard(&cache.sig_k);
    grads.o_hat = match &cache.rules_jac {
        RulesJacobian::Free { dsig } => do_.hadamard(dsig),
        RulesJacobian::Constrained {
            half_sig_prime,
            sign,
            centered,
            sigma,
            temperature,
        } => {
            let c = do_.hadamard(half_sig_prime);
            let n = F::c((c.rows() * c.cols()) as f64);
            let mut out = c.scale(F::one() / *temperature);
            if *sigma > F::zero() {
                // σ depends on every entry: dσ/dÔ_kl = (Ô_kl − μ)/(nσ).
                let coupled = c.hadamard(sign).sum() * F::c(3.0) / (*temperature * n * *sigma);
                out.add_scaled(centered, coupled);
            }
            out
        }
    };
    Ok(grads)
}

/// Reverse-mode gradients of a single sample's loss.
pub fn backward<F: Scalar>(trace: &ForwardTrace<F>, loss_grad: &[F]) -> Result<GradientSet<F>> {
    let mut wg = WeightGrads::zeros(&trace.cache);
    accumulate_weight_grads(trace, loss_grad, &mut wg)?;
    factor_backward(&trace.cache, &wg)
}

fn softmax_backward_rows<F: Scalar>(softmax_out: &Mat<F>, upstream: &Mat<F>) -> Mat<F> {
    let mut out = Mat::zeros(softmax_out.rows(), softmax_out.cols());
    for r in 0..softmax_out.rows() {
        let q = softmax_out.row(r);
        let dq = upstream.row(r);
        let mut dot = F::zero();
        for (&a, &b) in dq.iter().zip(q) {
            dot += a * b;
        }
        let orow = out.row_mut(r);
        for ((o, &qv), &dqv) in orow.iter_mut().zip(q).zip(dq) {
            *o = qv * (dqv - dot);
        }
    }
    out
}

/// Central-difference gradient oracle over every raw parameter.
pub fn finite_diff_gradients<F: Scalar>(
    genotype: &Genotype<F>,
    input: &[F],
    loss: &Loss<F>,
    step: F,
) -> Result<GradientSet<F>> {
    let mut probe = genotype.clone();
    let base = probe.flatten();
    let mut grads = vec![F::zero(); base.len()];
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + step;
        probe.set_from_flat(&flat)?;
        let plus = loss.value(&NetworkCache::build(&probe)?.infer(input)?);
        flat[i] = base[i] - step;
        probe.set_from_flat(&flat)?;
        let minus = loss.value(&NetworkCache::build(&probe)?.infer(input)?);
        flat[i] = base[i];
        grads[i] = (plus - minus) / (F::c(2.0) * step);
    }
    GradientSet::from_flat(&genotype.dims, &grads)
}

/// Per-block worst relative error between two gradient sets.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<(String, f64)>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<12} {:>14}", "block", "max_rel_err")?;
        for (name, err) in &self.blocks {
            writeln!(f, "{name:<12} {err:>14.3e}")?;
        }
        write!(f, "{:<12} {:>14.3e}", "overall", self.max_rel_err)
    }
}

/// Compares gradient sets entrywise with `|a−f| / max(|a|, |f|, 1e-6)`.
pub fn compare_gradients<F: Scalar>(
    analytic: &GradientSet<F>,
    numeric: &GradientSet<F>,
) -> GradCheckReport {
    let mut blocks = Vec::new();
    let mut overall = 0.0f64;
    for ((name, a), (_, n)) in analytic.blocks().into_iter().zip(numeric.blocks()) {
        let mut worst = 0.0f64;
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            let av = av.to_f64().unwrap_or(f64::NAN);
            let nv = nv.to_f64().unwrap_or(f64::NAN);
            let denom = av.abs().max(nv.abs()).max(1e-6);
            let err = (av - nv).abs() / denom;
            if !(err <= worst) {
                worst = err;
            }
        }
        overall = overall.max(worst);
        blocks.push((name, worst));
    }
    GradCheckReport {
        blocks,
        max_rel_err: overall,
    }
}

/// Analytic-vs-central-difference check for one (genotype, input, loss).
pub fn finite_diff_check<F: Scalar>(
    genotype: &Genotype<F>,
    input: &[F],
    loss: &Loss<F>,
    step: F,
) -> Result<GradCheckReport> {
    let (output, trace) = forward(genotype, input)?;
    let analytic = backward(&trace, &loss.grad(&output))?;
    let numeric = finite_diff_gradients(genotype, input, loss, step)?;
    Ok(compare_gradients(&analytic, &numeric))
}
