//! Schedulers resolve the nondeterminism of the transition system by
//! picking one of the enabled transitions. They are registered by name and
//! built at runtime from configuration.

use super::semantics::RuntimeError;
use crate::rng::SplitMix64;

pub trait Scheduler: Send {
    fn name(&self) -> &'static str;
    /// Index into an enabled list of length `n > 0`.
    fn choose(&mut self, n: usize) -> usize;
}

/// Always takes the first transition in canonical order.
#[derive(Debug, Default, Clone)]
pub struct Deterministic;

impl Scheduler for Deterministic {
    fn name(&self) -> &'static str {
        "det"
    }

    fn choose(&mut self, _n: usize) -> usize {
        0
    }
}

/// Uniform choice from a SplitMix64 stream: `next() mod n`, one draw per step.
#[derive(Debug, Clone)]
pub struct RandomScheduler {
    rng: SplitMix64,
}

impl RandomScheduler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SplitMix64::new(seed),
        }
    }
}

impl Scheduler for RandomScheduler {
    fn name(&self) -> &'static str {
        "rand"
    }

    fn choose(&mut self, n: usize) -> usize {
        self.rng.below(n as u64) as usize
    }
}

type Factory = fn(u64) -> Box<dyn Scheduler>;

const REGISTRY: &[(&str, Factory)] = &[
    ("det", |_| Box::new(Deterministic)),
    ("deterministic", |_| Box::new(Deterministic)),
    ("rand", |seed| Box::new(RandomScheduler::new(seed))),
    ("random", |seed| Box::new(RandomScheduler::new(seed))),
];

pub fn scheduler_names() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(n, _)| *n)
}

pub fn make_scheduler(kind: &str, seed: u64) -> Result<Box<dyn Scheduler>, RuntimeError> {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == kind)
        .map(|(_, make)| make(seed))
        .ok_or_else(|| RuntimeError::UnknownScheduler(kind.to_string()))
}
