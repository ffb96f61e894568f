//! Kernel principal component analysis with an exponential power kernel,
//! followed by clustering of the extracted components and validation of the
//! result.
//!
//! The pieces, roughly in pipeline order:
//!
//! * [`kernels`]: kernel functions and Gram matrices.
//! * [`kpca`]: centering, eigendecomposition, training scores and projection.
//! * [`clustering`]: Hartigan–Wong k-means and average-linkage trees.
//! * [`validation`]: gap statistic, Dunn index, silhouette, k-NN error, ARI.
//! * [`bootstrap`]: BCa intervals used to pick the kernel scale.
//! * [`pipeline`]: the grid search over kernels and component counts.
//! * [`data`]: catalog ingestion, derived quantities and simulation data.
//! * [`cli`]: the `kpcluster` binary.
//!
//! Parallel loops go through [`par`]; building without the default
//! `parallel` feature runs them sequentially with identical results. Every
//! random draw comes from a stream derived in [`rng`] from one user seed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod cli;
pub mod clustering;
pub mod data;
pub mod kernels;
pub mod kpca;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod validation;
