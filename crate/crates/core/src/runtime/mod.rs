//! Execution of choreographies: values and stores, expression evaluation,
//! the labelled transition system, schedulers and whole runs.

mod eval;
mod exec;
mod schedule;
mod semantics;
mod store;
mod value;

pub use eval::{eval_expr, EvalError, Extern, FunEnv, Function};
pub use exec::{derives, run, Outcome};
pub use schedule::{make_scheduler, scheduler_names, Deterministic, RandomScheduler, Scheduler};
pub use semantics::{enabled, enabled_labels, pn_label, step, Configuration, RuntimeError, TransitionLabel};
pub use store::{parse_store, CStore, PStore, StoreParseError};
pub use value::{escape, parse_value, Value, ValueType};
