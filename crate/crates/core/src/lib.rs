//! Interference-based decoupling and swapping for multimode Gaussian systems.
//!
//! Given one symplectic scattering matrix `S` (the coupler), the builders
//! in [`protocols`] find single-mode layers `L_i` such that products like
//! `S L_1 S L_2 S L_3 S` decouple a mode from the rest, route one mode
//! onto another, or swap two modes. Every result is certified by an entry
//! pattern check and can be cross-checked with the Gaussian simulator in
//! [`sim`].
//!
//! ```
//! use modeswap::{decouple_mode, random_generic_symplectic, BuildOptions};
//!
//! let s = random_generic_symplectic::<f64>(3, 7).unwrap();
//! let seq = decouple_mode(&s, 0, &BuildOptions::default()).unwrap();
//! assert_eq!(seq.coupler_count(), 4);
//! assert!(seq.report().passed());
//! ```
//!
//! Quadratures are interleaved `(q1, p1, q2, p2, ...)` and mode indices
//! are zero-based throughout the library.

pub mod error;
pub mod export;
pub mod local;
pub mod matrix;
pub mod protocols;
pub mod scalar;
pub mod sim;
pub mod symplectic;

pub use error::{Error, Result};
pub use local::{
    align_one, align_pair, align_pair_with, euler_decompose, squeezing_cost, LocalOpDecomposition,
    PairOptions, ScalePolicy,
};
pub use matrix::Mat;
pub use protocols::{
    build_asymmetric_transducer, build_swap, build_transducer, check_pattern, decouple_all,
    decouple_mode, decouple_q, decouple_q_two_mode, decouple_two_mode, genericize, relax_squeezing,
    transduce_two_mode, BuildOptions, Builder, LayerStrategy, ProtocolSequence, StructurePattern,
};
pub use scalar::Real;
pub use sim::GaussianState;
pub use symplectic::{
    genericity_report, is_symplectic, layer_to_matrix, omega_form, random_generic_symplectic,
    rotation, squeeze, GenericityReport, LocalLayer, ModePermutation, SymplecticForm,
    SymplecticMatrix,
};

pub type Mat64 = Mat<f64>;
pub type SymplecticMatrix64 = SymplecticMatrix<f64>;
pub type LocalLayer64 = LocalLayer<f64>;
pub type ProtocolSequence64 = ProtocolSequence<f64>;
pub type GaussianState64 = GaussianState<f64>;
pub type BuildOptions64 = BuildOptions<f64>;

pub type Mat32 = Mat<f32>;
pub type SymplecticMatrix32 = SymplecticMatrix<f32>;
pub type LocalLayer32 = LocalLayer<f32>;
pub type ProtocolSequence32 = ProtocolSequence<f32>;
pub type GaussianState32 = GaussianState<f32>;
pub type BuildOptions32 = BuildOptions<f32>;
