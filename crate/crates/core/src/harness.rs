//! Differential non-interference testing.
//!
//! Each trial builds two low-equivalent stores, runs main from both under
//! independent random schedulers with one shared extern seed, and compares
//! the low parts of the final stores. Runs that hit the step budget or get
//! stuck make the trial inconclusive: divergence is not observable.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::infer::DeltaContext;
use crate::lattice::{Policy, PolicyError};
use crate::rng::{derive, SplitMix64};
use crate::runtime::{run, CStore, Configuration, EvalError, FunEnv, Outcome, RandomScheduler, TransitionLabel, Value};
use crate::syntax::{located_vars, Program};
use crate::typecheck::check_program;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("extern table: {0}")]
    Externs(#[from] EvalError),
}

/// The seeds of one trial, all derived from the trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub trial: u64,
    pub stores: u64,
    pub sched1: u64,
    pub sched2: u64,
    pub functions: u64,
}

impl TrialSeeds {
    pub fn for_trial(base: u64, index: usize) -> Self {
        let trial = derive(base, index as u64);
        Self {
            trial,
            stores: derive(trial, 0),
            sched1: derive(trial, 1),
            sched2: derive(trial, 2),
            functions: derive(trial, 3),
        }
    }
}

fn random_value(rng: &mut SplitMix64) -> Value {
    match rng.below(3) {
        0 => Value::Int(rng.below(8) as i64),
        1 => Value::Bool(rng.below(2) == 1),
        _ => Value::Str((0..4).map(|_| (b'a' + rng.below(26) as u8) as char).collect()),
    }
}

/// Two stores over every located variable of `prog`. Observable variables
/// get one shared value; the rest get independent values per side.
pub fn gen_store_pair(prog: &Program, pol: &Policy, seed: u64) -> Result<(CStore, CStore), PolicyError> {
    let mut rng = SplitMix64::new(seed);
    let mut s1 = CStore::new();
    let mut s2 = CStore::new();
    for lv in located_vars(prog) {
        let observable = pol.is_observable(pol.label_of(&lv.proc, &lv.var)?);
        let v1 = random_value(&mut rng);
        let v2 = if observable { v1.clone() } else { random_value(&mut rng) };
        s1.set(&lv.proc, &lv.var, v1);
        s2.set(&lv.proc, &lv.var, v2);
    }
    Ok((s1, s2))
}

/// Both sides of a trial in which the low parts of the final stores differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub index: usize,
    pub seeds: TrialSeeds,
    pub initial: (CStore, CStore),
    pub finals: (CStore, CStore),
    pub traces: (Vec<TransitionLabel>, Vec<TransitionLabel>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrialOutcome {
    Pass,
    Violation(Box<Witness>),
    Inconclusive(String),
}

#[derive(Debug, Clone)]
pub struct NiReport {
    pub trials: usize,
    pub passes: usize,
    pub violations: Vec<Witness>,
    /// Trial index and the reason, for cutoff or stuck runs.
    pub inconclusive: Vec<(usize, String)>,
    pub elapsed: Duration,
    /// Whether main checked at ⊥ under the supplied context.
    pub well_typed: bool,
}

impl NiReport {
    /// A violation on a well-typed program contradicts soundness.
    pub fn hard_failure(&self) -> bool {
        self.well_typed && !self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "trials={} passes={} violations={} inconclusive={} well-typed={}",
            self.trials,
            self.passes,
            self.violations.len(),
            self.inconclusive.len(),
            self.well_typed
        )
    }
}

fn dump(f: &mut fmt::Formatter<'_>, title: &str, store: &CStore) -> fmt::Result {
    writeln!(f, "--- {title}")?;
    write!(f, "{store}")
}

fn dump_trace(f: &mut fmt::Formatter<'_>, title: &str, trace: &[TransitionLabel]) -> fmt::Result {
    writeln!(f, "--- {title}")?;
    trace.iter().try_for_each(|l| writeln!(f, "{l}"))
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.seeds;
        writeln!(f, "VIOLATION trial={} seed={}", self.index, s.trial)?;
        writeln!(
            f,
            "stores={} sched1={} sched2={} functions={}",
            s.stores, s.sched1, s.sched2, s.functions
        )?;
        dump(f, "initial 1", &self.initial.0)?;
        dump(f, "initial 2", &self.initial.1)?;
        dump(f, "final 1", &self.finals.0)?;
        dump(f, "final 2", &self.finals.1)?;
        dump_trace(f, "trace 1", &self.traces.0)?;
        dump_trace(f, "trace 2", &self.traces.1)
    }
}

/// Summary line, then one block per violation. Wall-clock is left out so
/// that reports are reproducible.
impl fmt::Display for NiReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary())?;
        if self.hard_failure() {
            writeln!(f, "HARD FAILURE: violation on a well-typed program")?;
        }
        self.violations.iter().try_for_each(|w| write!(f, "{w}"))
    }
}

fn run_side(prog: &Program, procs: &Arc<crate::syntax::Procs>, store: CStore, fe: &FunEnv, sched_seed: u64, max_steps: usize) -> Outcome {
    let cfg = Configuration::new(prog.main.clone(), store, Arc::clone(procs));
    run(cfg, fe, &mut RandomScheduler::new(sched_seed), max_steps)
}

fn describe(side: usize, o: &Outcome) -> Option<String> {
    match o {
        Outcome::Terminated { .. } => None,
        Outcome::Cutoff { trace, .. } => Some(format!("side {side}: cutoff after {} steps", trace.len())),
        Outcome::Stuck { reason, .. } => Some(format!("side {side}: stuck: {reason}")),
    }
}

fn run_trial(
    prog: &Program,
    procs: &Arc<crate::syntax::Procs>,
    pol: &Policy,
    index: usize,
    base: u64,
    max_steps: usize,
) -> Result<TrialOutcome, HarnessError> {
    let seeds = TrialSeeds::for_trial(base, index);
    let (s1, s2) = gen_store_pair(prog, pol, seeds.stores)?;
    let fe = FunEnv::new(&prog.externs, seeds.functions)?;
    let o1 = run_side(prog, procs, s1.clone(), &fe, seeds.sched1, max_steps);
    if let Some(r) = describe(1, &o1) {
        return Ok(TrialOutcome::Inconclusive(r));
    }
    let o2 = run_side(prog, procs, s2.clone(), &fe, seeds.sched2, max_steps);
    if let Some(r) = describe(2, &o2) {
        return Ok(TrialOutcome::Inconclusive(r));
    }
    if pol.low_equiv(o1.store(), o2.store())? {
        return Ok(TrialOutcome::Pass);
    }
    Ok(TrialOutcome::Violation(Box::new(Witness {
        index,
        seeds,
        initial: (s1, s2),
        finals: (o1.store().clone(), o2.store().clone()),
        traces: (o1.trace().to_vec(), o2.trace().to_vec()),
    })))
}

/// Runs `trials` trials from `seed`. Trials run in parallel; results are
/// gathered in trial order.
pub fn nitest(
    prog: &Program,
    pol: &Policy,
    delta: &DeltaContext,
    trials: usize,
    seed: u64,
    max_steps: usize,
) -> Result<NiReport, HarnessError> {
    let start = Instant::now();
    let well_typed = check_program(prog, pol, delta).is_ok_and(|r| r.accepted());
    let procs = Arc::new(prog.procs.clone());
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(prog, &procs, pol, i, seed, max_steps))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = NiReport {
        trials,
        passes: 0,
        violations: Vec::new(),
        inconclusive: Vec::new(),
        elapsed: Duration::ZERO,
        well_typed,
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            TrialOutcome::Pass => report.passes += 1,
            TrialOutcome::Violation(w) => report.violations.push(*w),
            TrialOutcome::Inconclusive(r) => report.inconclusive.push((i, r)),
        }
    }
    report.elapsed = start.elapsed();
    Ok(report)
}

/// Re-executes both sides of a witness from its recorded seeds and stores.
pub fn replay(prog: &Program, w: &Witness, max_steps: usize) -> Result<(Outcome, Outcome), HarnessError> {
    let procs = Arc::new(prog.procs.clone());
    let fe = FunEnv::new(&prog.externs, w.seeds.functions)?;
    Ok((
        run_side(prog, &procs, w.initial.0.clone(), &fe, w.seeds.sched1, max_steps),
        run_side(prog, &procs, w.initial.1.clone(), &fe, w.seeds.sched2, max_steps),
    ))
}
