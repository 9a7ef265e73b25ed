//! Executable policies: a plain weight-matrix chain with greedy action
//! selection, built either from a genotype's mean weights ("average agent"),
//! from a sampled agent, or from free-standing dense weights.

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::Genotype;
use crate::sampler::SampledAgent;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicySource {
    MeanAgent,
    SampledAgent,
    DenseBaseline,
}

/// Feed-forward Q-network (ReLU hidden layers, identity output) acting
/// greedily over its output vector. Immutable after construction.
#[derive(Clone, Debug)]
pub struct PolicyNetwork {
    weights: Vec<Mat<f64>>,
    source: PolicySource,
}

impl PolicyNetwork {
    pub fn new(weights: Vec<Mat<f64>>, source: PolicySource) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Shape("policy needs at least one weight layer".into()));
        }
        for pair in weights.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::Shape(format!(
                    "weight chain not conformal: {}x{} feeds {}x{}",
                    pair[0].rows(),
                    pair[0].cols(),
                    pair[1].rows(),
                    pair[1].cols()
                )));
            }
        }
        for (l, w) in weights.iter().enumerate() {
            if let Some((r, c)) = w.first_non_finite() {
                return Err(Error::NonFinite {
                    what: format!("policy layer {l}"),
                    row: r,
                    col: c,
                });
            }
        }
        Ok(PolicyNetwork { weights, source })
    }

    /// The "average agent": exact mean weight matrices of the genotype.
    pub fn mean_agent(genotype: &Genotype<f64>) -> Result<Self> {
        let weights = genotype.map_params()?.mean_weights()?;
        PolicyNetwork::new(weights, PolicySource::MeanAgent)
    }

    pub fn from_sampled(agent: &SampledAgent) -> Result<Self> {
        PolicyNetwork::new(agent.w.clone(), PolicySource::SampledAgent)
    }

    pub fn source(&self) -> PolicySource {
        self.source
    }

    pub fn weights(&self) -> &[Mat<f64>] {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().unwrap().cols()
    }

    pub fn forward(&self, observation: &[f64]) -> Result<Vec<f64>> {
        if observation.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "observation length {} != input size {}",
                observation.len(),
                self.input_dim()
            )));
        }
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite observation".into()));
        }
        let depth = self.weights.len();
        let mut a = observation.to_vec();
        for (l, w) in self.weights.iter().enumerate() {
            let mut z = w.matvec_t(&a);
            if l != depth - 1 {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        Ok(a)
    }

    /// Greedy action: argmax over Q-values, lowest index on ties.
    pub fn act(&self, observation: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(observation)?))
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
