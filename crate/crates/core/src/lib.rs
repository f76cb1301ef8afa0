//! Average consensus over packet-erasure networks.
//!
//! Simulators for the uncoded, repetition-coded and tree-coded protocols,
//! exact mean-square analysis of the uncoded recursion, the tail bounds for
//! the coded protocols, and executable versions of the witness arguments
//! used to prove them.

pub mod analysis;
pub mod anytime;
pub mod bounds;
pub mod erasure;
pub mod gf2;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod oracles;
pub mod protocols;
pub mod rng;
pub mod spectral;

pub use analysis::{AnalysisError, GammaAnalysis, GammaReport};
pub use anytime::{AnytimeDecoder, CodeError, CodeParams, Encoder, TreeCode};
pub use bounds::{BoundReport, CodingGainReport, Theorem};
pub use erasure::{ErasureMode, ErasureModel, ErasureSource, RoundErasures, ScriptedErasures, SeededErasures};
pub use gf2::{BitMatrix, BitVector, Gf2Error, IncrementalSolver};
pub use graph::{GeneratorSpec, Graph, GraphError};
pub use harness::{ExperimentConfig, ExperimentReport, HarnessError};
pub use oracles::{OracleError, Witness};
pub use protocols::{Protocol, ProtocolError, ProtocolRun, Symbol, Transmission};
pub use spectral::{SpectralError, SpectralSummary};
