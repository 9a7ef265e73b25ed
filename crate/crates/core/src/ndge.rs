//! Global network differential gene expression (nDGE): contrast gene
//! co-expression between connected neuron pairs and contact-only neuron pairs
//! to produce the binary gene-pair mask consumed by the constrained rules map.
//!
//! For each ordered gene pair (i, j) the co-expression value on a neuron pair
//! (u, v) is ln(1 + C_iu * C_jv). A two-sample Welch t-test compares the value
//! collections over synapse-bearing pairs vs contact-only pairs; Bonferroni
//! correction over all G^2 tests yields the mask.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Expression, connectome, and contactome matrices for one analysis.
/// Expression is gene-by-neuron; connectome/contactome are neuron-by-neuron
/// binary with synapses only where contact exists.
#[derive(Clone, Debug)]
pub struct CoexpressionInput {
    pub expression: Mat<f64>,
    pub connectome: Mat<u8>,
    pub contactome: Mat<u8>,
}

impl CoexpressionInput {
    pub fn new(expression: Mat<f64>, connectome: Mat<u8>, contactome: Mat<u8>) -> Result<Self> {
        let input = CoexpressionInput { expression, connectome, contactome };
        input.validate()?;
        Ok(input)
    }

    pub fn gene_count(&self) -> usize {
        self.expression.rows()
    }

    pub fn neuron_count(&self) -> usize {
        self.expression.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.expression.cols();
        if self.expression.rows() == 0 || n == 0 {
            return Err(Error::InvalidArgument("expression matrix must be nonempty".into()));
        }
        if self.connectome.rows() != n || self.connectome.cols() != n {
            return Err(Error::Shape(format!(
                "connectome must be {n}x{n}, got {}x{}",
                self.connectome.rows(),
                self.connectome.cols()
            )));
        }
        if self.contactome.rows() != n || self.contactome.cols() != n {
            return Err(Error::Shape(format!(
                "contactome must be {n}x{n}, got {}x{}",
                self.contactome.rows(),
                self.contactome.cols()
            )));
        }
        for r in 0..self.expression.rows() {
            for c in 0..n {
                let v = self.expression[(r, c)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "expression[{r}][{c}] = {v} must be finite and nonnegative"
                    )));
                }
            }
        }
        for u in 0..n {
            for v in 0..n {
                let b = self.connectome[(u, v)];
                let cc = self.contactome[(u, v)];
                if b > 1 || cc > 1 {
                    return Err(Error::InvalidArgument(format!(
                        "connectome/contactome entries must be 0/1, got {b}/{cc} at ({u},{v})"
                    )));
                }
                if b == 1 && cc == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "synapse without contact at ({u},{v})"
                    )));
                }
            }
            if self.connectome[(u, u)] != 0 {
                return Err(Error::InvalidArgument(format!(
                    "connectome diagonal must be zero (self-synapse at {u})"
                )));
            }
        }
        Ok(())
    }

    /// Ordered neuron pairs carrying at least one synapse.
    pub fn with_synapses(&self) -> Vec<(usize, usize)> {
        let n = self.neuron_count();
        let mut pairs = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if self.connectome[(u, v)] == 1 {
                    pairs.push((u, v));
                }
            }
        }
        pairs
    }

    /// Ordered neuron pairs with physical contact but no synapse (Cc XOR B).
    pub fn contact_only(&self) -> Vec<(usize, usize)> {
        let n = self.neuron_count();
        let mut pairs = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if self.contactome[(u, v)] == 1 && self.connectome[(u, v)] == 0 {
                    pairs.push((u, v));
                }
            }
        }
        pairs
    }
}

/// Mask, per-pair p-values and t-statistics, and the sizes of the two pair
/// sets that fed every test.
#[derive(Clone, Debug)]
pub struct CoexpressionResult {
    pub g: Mat<u8>,
    pub p_values: Mat<f64>,
    pub t_values: Mat<f64>,
    pub with_synapses_count: usize,
    pub contact_only_count: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct NdgeOptions {
    /// Family-wise significance level applied after Bonferroni scaling.
    pub significance: f64,
    /// Test the one-sided greater-in-connected alternative instead of the
    /// two-sided default.
    pub one_sided: bool,
}

impl Default for NdgeOptions {
    fn default() -> Self {
        NdgeOptions { significance: 0.05, one_sided: false }
    }
}

/// Welch two-sample t-test. Returns (t, p) with Welch-Satterthwaite degrees
/// of freedom. Degenerate zero-variance-in-both inputs fall back to the
/// documented convention: equal means give p = 1, unequal means give p = 0
/// (one-sided: 0 only when the difference matches the alternative).
pub fn welch_ttest(a: &[f64], b: &[f64], one_sided: bool) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "welch t-test needs >= 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mean_a = a.iter().sum::<f64>() / na;
    let mean_b = b.iter().sum::<f64>() / nb;
    let var_a = a.iter().map(|x| (x - mean_a).powi(2)).sum::<f64>() / (na - 1.0);
    let var_b = b.iter().map(|x| (x - mean_b).powi(2)).sum::<f64>() / (nb - 1.0);

    if var_a == 0.0 && var_b == 0.0 {
        return Ok(if mean_a == mean_b {
            (0.0, 1.0)
        } else {
            let t = if mean_a > mean_b { f64::INFINITY } else { f64::NEG_INFINITY };
            let p = if one_sided && mean_a < mean_b { 1.0 } else { 0.0 };
            (t, p)
        });
    }

    let sa = var_a / na;
    let sb = var_b / nb;
    let se = (sa + sb).sqrt();
    let t = (mean_a - mean_b) / se;
    let nu = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, nu)
        .map_err(|e| Error::InvalidArgument(format!("t distribution with nu={nu}: {e}")))?;
    let p = if one_sided { 1.0 - dist.cdf(t) } else { 2.0 * (1.0 - dist.cdf(t.abs())) };
    Ok((t, p.clamp(0.0, 1.0)))
}

/// Run the global nDGE analysis: one Welch test per ordered gene pair,
/// Bonferroni factor G^2, mask entry g_ij = 1 iff G^2 * p_ij < significance.
pub fn global_ndge(input: &CoexpressionInput, opts: &NdgeOptions) -> Result<CoexpressionResult> {
    input.validate()?;
    if !(opts.significance > 0.0 && opts.significance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance must lie in (0, 1), got {}",
            opts.significance
        )));
    }
    let connected = input.with_synapses();
    let contact = input.contact_only();
    if connected.len() < 2 {
        return Err(Error::Degenerate(format!(
            "with-synapses pair set has {} pairs; need >= 2 for the t-test",
            connected.len()
        )));
    }
    if contact.len() < 2 {
        return Err(Error::Degenerate(format!(
            "contact-only pair set has {} pairs; need >= 2 for the t-test",
            contact.len()
        )));
    }

    let genes = input.gene_count();
    let bonferroni = (genes * genes) as f64;
    let mut g = Mat::filled(genes, genes, 0u8);
    let mut p_values: Mat<f64> = Mat::zeros(genes, genes);
    let mut t_values: Mat<f64> = Mat::zeros(genes, genes);
    let coexp = |i: usize, j: usize, pairs: &[(usize, usize)]| -> Vec<f64> {
        pairs
            .iter()
            .map(|&(u, v)| (input.expression[(i, u)] * input.expression[(j, v)]).ln_1p())
            .collect()
    };
    for i in 0..genes {
        for j in 0..genes {
            let values_conn = coexp(i, j, &connected);
            let values_cont = coexp(i, j, &contact);
            let (t, p) = welch_ttest(&values_conn, &values_cont, opts.one_sided)?;
            t_values[(i, j)] = t;
            p_values[(i, j)] = p;
            g[(i, j)] = u8::from(bonferroni * p < opts.significance);
        }
    }
    Ok(CoexpressionResult {
        g,
        p_values,
        t_values,
        with_synapses_count: connected.len(),
        contact_only_count: contact.len(),
    })
}
