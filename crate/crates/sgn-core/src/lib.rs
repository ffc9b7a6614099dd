//! Spiking graph network engine for skeleton sequences: spike encoding,
//! graph convolution over learnable adjacency powers, topology-guided sparse
//! attention with channel shifts, joint-spectrum convolution, Legendre
//! multiwavelet feature fusion, surrogate-gradient training, and a synaptic
//! operation / energy cost model.

pub mod attention;
pub mod error;
pub mod frequency;
pub mod fusion;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod sgc;
pub mod lif;
pub mod model;
pub mod profile;
pub mod data;
pub mod tensor;
pub mod wavelet;

pub use error::{Result, SgnError};
pub use graph::{AdjacencyPowers, SkeletonGraph, TopologyScore};
pub use lif::{LifParams, LifState};
pub use tensor::{BnMode, ComplexPair, DenseTensor, Mat, Param, SpikeTensor};
