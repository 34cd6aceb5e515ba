//! Whole executions: the big-step relation `⟨C, Σ, 𝒞⟩ ⇓^M Σ′` realised by
//! iterating scheduler-chosen steps.

use super::eval::FunEnv;
use super::schedule::Scheduler;
use super::semantics::{enabled, step_with, Configuration, RuntimeError, TransitionLabel};
use super::store::CStore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Reached the terminated choreography.
    Terminated {
        store: CStore,
        trace: Vec<TransitionLabel>,
    },
    /// The step budget ran out first.
    Cutoff {
        store: CStore,
        trace: Vec<TransitionLabel>,
    },
    /// No transition could be taken (an evaluation error, typically).
    Stuck {
        reason: String,
        store: CStore,
        trace: Vec<TransitionLabel>,
    },
}

impl Outcome {
    pub fn trace(&self) -> &[TransitionLabel] {
        match self {
            Outcome::Terminated { trace, .. }
            | Outcome::Cutoff { trace, .. }
            | Outcome::Stuck { trace, .. } => trace,
        }
    }

    pub fn store(&self) -> &CStore {
        match self {
            Outcome::Terminated { store, .. }
            | Outcome::Cutoff { store, .. }
            | Outcome::Stuck { store, .. } => store,
        }
    }

    pub fn is_terminated(&self) -> bool {
        matches!(self, Outcome::Terminated { .. })
    }
}

pub fn run(
    cfg: Configuration,
    fe: &FunEnv,
    sched: &mut dyn Scheduler,
    max_steps: usize,
) -> Outcome {
    let mut cfg = cfg;
    let mut trace = Vec::new();
    loop {
        if cfg.is_terminated() {
            return Outcome::Terminated {
                store: cfg.store,
                trace,
            };
        }
        if trace.len() >= max_steps {
            return Outcome::Cutoff {
                store: cfg.store,
                trace,
            };
        }
        match step_with(&cfg, fe, |n| Ok(sched.choose(n).min(n - 1))) {
            Ok((label, next)) => {
                trace.push(label);
                cfg = next;
            }
            Err(e) => {
                return Outcome::Stuck {
                    reason: e.to_string(),
                    store: cfg.store,
                    trace,
                }
            }
        }
    }
}

/// Whether `⟨C, Σ, 𝒞⟩ ⇓^M Σ′` is derivable for the given trace and final
/// store, searching every successor carrying the expected label.
pub fn derives(
    cfg: &Configuration,
    fe: &FunEnv,
    trace: &[TransitionLabel],
    final_store: &CStore,
) -> Result<bool, RuntimeError> {
    match trace.split_first() {
        None => Ok(cfg.is_terminated() && cfg.store == *final_store),
        Some((mu, rest)) => {
            for (label, next) in enabled(cfg, fe)? {
                if label == *mu && derives(&next, fe, rest, final_store)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::parser::parse_program;
    use crate::runtime::{make_scheduler, Deterministic, Value};

    fn start(src: &str, store: CStore) -> Configuration {
        let prog = parse_program(src).unwrap();
        Configuration::new(prog.main, store, Arc::new(prog.procs))
    }

    #[test]
    fn two_step_program() {
        let out = run(
            start("main { p.x := 5; p.x -> q.y }", CStore::new()),
            &FunEnv::builtins_only(),
            &mut Deterministic,
            100,
        );
        let Outcome::Terminated { store, trace } = &out else {
            panic!("{out:?}");
        };
        let t: Vec<String> = trace.iter().map(|l| l.to_string()).collect();
        assert_eq!(t, vec!["tau@p", "com@p->q:5"]);
        assert_eq!(store.get("q", "y"), Some(&Value::Int(5)));
    }

    #[test]
    fn empty_main_terminates_immediately() {
        let s = CStore::new().with("p", "x", 1);
        let out = run(start("main { }", s.clone()), &FunEnv::builtins_only(), &mut Deterministic, 0);
        assert_eq!(out, Outcome::Terminated { store: s, trace: vec![] });
    }

    #[test]
    fn divergence_is_cut_off() {
        let out = run(
            start("proc L(p) { p.x := 0; L(p) } main { L(p) }", CStore::new()),
            &FunEnv::builtins_only(),
            &mut Deterministic,
            10,
        );
        assert!(matches!(out, Outcome::Cutoff { ref trace, .. } if trace.len() == 10));
    }

    #[test]
    fn evaluation_errors_get_stuck() {
        let out = run(start("main { p.x := y }", CStore::new()), &FunEnv::builtins_only(), &mut Deterministic, 10);
        assert!(matches!(out, Outcome::Stuck { ref reason, .. } if reason.contains("unbound")));
    }

    #[test]
    fn random_runs_replay_through_derives() {
        let src = "proc X(p, q) { p.x -> q.y; q.y -> p.z } main { a.x := 1; b.w := 2; X(a, b); c.k := 3 }";
        for seed in 0..20 {
            let cfg = start(src, CStore::new());
            let fe = FunEnv::builtins_only();
            let mut s = make_scheduler("rand", seed).unwrap();
            let out = run(cfg.clone(), &fe, s.as_mut(), 1000);
            let Outcome::Terminated { store, trace } = out else {
                panic!("did not terminate");
            };
            assert!(derives(&cfg, &fe, &trace, &store).unwrap());
            let mut wrong = store.clone();
            wrong.set("c", "k", Value::Int(4));
            assert!(!derives(&cfg, &fe, &trace, &wrong).unwrap());
        }
    }
}
