//! Information-flow security for recursive choreographies.
//!
//! The crate bundles everything needed to reason about a choreographic
//! program against a lattice flow policy:
//!
//! * [`lattice`]: finite security lattices, policies and low-equivalence.
//! * [`syntax`] and [`parser`]: the AST, structural operations and the
//!   `.chor` concrete syntax.
//! * [`runtime`]: expression evaluation, the labelled transition system,
//!   schedulers and whole-program execution.
//! * [`typecheck`]: the security type system with a program counter.
//! * [`infer`]: procedure-context reconstruction by constraint generation
//!   and Kleene iteration.
//! * [`harness`]: differential non-interference testing.
//! * [`cli`]: batch commands used by the `chorsec` binary.

pub mod cli;
pub mod harness;
pub mod infer;
pub mod lattice;
pub mod parser;
pub mod rng;
pub mod runtime;
pub mod syntax;
pub mod typecheck;

pub use infer::{lfp, DeltaContext};
pub use lattice::{parse_policy, Label, Lattice, Policy};
pub use parser::{parse_program, pretty_print};
pub use runtime::{CStore, Value};
pub use syntax::{Choreography, Instr, InstrKind, LocVar, Program};
