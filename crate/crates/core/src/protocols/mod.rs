//! Decoupling, transduction and swap protocols.

mod builders;
mod closed_form;
mod genericize;
mod pattern;
mod sandwich;
mod sequence;

pub use builders::{
    build_asymmetric_transducer, build_swap, build_transducer, decouple_all, decouple_mode,
    decouple_q, decouple_q_two_mode, decouple_two_mode, relax_squeezing, transduce_two_mode,
    Builder, DecouplingCascade,
};
pub use genericize::{genericize, genericize_with, max_power, Genericized};
pub use pattern::{
    check_pattern, Expectation, PatternKind, PatternReport, PatternViolation, StructurePattern,
};
pub use sandwich::{BuildOptions, LayerStrategy, BALANCE_CANDIDATES};
pub use sequence::{replay, ProtocolSequence, Step};
