//! Genetically wired neural networks: a generative model in which network
//! weights arise from gene expression, pairwise genetic rules, and
//! neurotransmitter/receptor conductances.
//!
//! The crate provides:
//!
//! * the closed-form expectation model and its gradients ([`model`], [`grad`]),
//! * stochastic synaptogenesis to realize concrete agents ([`sampler`]),
//! * self-contained classic-control environments ([`envs`]) and policy
//!   execution ([`policy`]),
//! * DQN and SNES trainers over the genetic parameterization ([`dqn`],
//!   [`snes`]), a cell-lineage baseline initializer ([`lineage`]),
//! * co-expression mask inference ([`ndge`]), cohort evaluation with
//!   rank statistics ([`stats`], [`cohort`]),
//! * checkpoint/report serialization ([`checkpoint`], [`report`]) and the
//!   experiment pipeline ([`experiment`]).
//!
//! The math core is generic over the scalar type via [`scalar::Scalar`];
//! aliases below pin the rest of the crate to `f64`.

pub mod checkpoint;
pub mod cohort;
pub mod dqn;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod lineage;
pub mod mat;
pub mod model;
pub mod ndge;
pub mod policy;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod snes;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};

/// Scalar type used by everything outside the generic math core.
pub type Real = f64;
pub type Matrix = mat::Mat<Real>;
pub type Genotype = model::Genotype<Real>;
pub type MappedFactors = model::MappedFactors<Real>;
