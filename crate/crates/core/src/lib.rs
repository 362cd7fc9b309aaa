//! Kernel graph convolutional networks.
//!
//! The pipeline has four stages:
//!
//! 1. [`community`] splits every graph into Louvain communities, which become
//!    the graph's patches.
//! 2. [`kernels`] maps every patch to an explicit shortest-path or
//!    Weisfeiler-Lehman feature histogram.
//! 3. [`embed`] factorizes the patch kernel matrix with the Nystrom method so
//!    each patch becomes a fixed-length vector, and projects unseen patches
//!    into the same space.
//! 4. [`neural`] convolves learned filters with the patch vectors, max-pools
//!    per graph and classifies with a dense softmax head.
//!
//! [`harness`] wires these together under stratified k-fold cross-validation.

pub mod cli;
pub mod community;
pub mod embed;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kernels;
pub mod neural;
pub mod seed;

pub use error::{Error, Result};
