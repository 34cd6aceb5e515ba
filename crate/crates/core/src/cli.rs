//! Batch commands behind the `chorsec` binary. Each returns its exit code
//! and the text destined for stdout and stderr, so the commands can be
//! tested without spawning a process.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::harness::nitest;
use crate::infer::{gen_constraints, lfp, Bound};
use crate::lattice::{parse_policy, Policy};
use crate::parser::parse_program;
use crate::runtime::{make_scheduler, parse_store, run, Configuration, FunEnv, Outcome};
use crate::syntax::{validate_program, Program};
use crate::typecheck::check_program;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CmdOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CmdOutput {
    fn usage(msg: impl Into<String>) -> Self {
        let mut stderr = msg.into();
        if !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        Self {
            code: 2,
            stdout: String::new(),
            stderr,
        }
    }
}

type Step<T> = Result<T, CmdOutput>;

fn read(path: &Path) -> Step<String> {
    fs::read_to_string(path).map_err(|e| CmdOutput::usage(format!("error: cannot read {}: {e}", path.display())))
}

fn load_policy(path: &Path) -> Step<Policy> {
    parse_policy(&read(path)?).map_err(|e| CmdOutput::usage(format!("error {}: {e}", path.display())))
}

/// Parses and validates a program. Extern declarations from the policy are
/// merged in; a clash with a declaration in the source is an error.
fn load_program(path: &Path, pol: Option<&Policy>) -> Step<Program> {
    let file = path.display();
    let mut prog = parse_program(&read(path)?).map_err(|e| CmdOutput::usage(format!("error {file}:{e}")))?;
    for ext in pol.map(Policy::externs).unwrap_or_default() {
        match prog.externs.iter().find(|d| d.name == ext.name) {
            Some(d) if d == ext => {}
            Some(d) => {
                return Err(CmdOutput::usage(format!(
                    "error {file}: extern `{}` declared as {} {} in the source but {} {} in the policy",
                    ext.name, d.arity, d.ret, ext.arity, ext.ret
                )))
            }
            None => prog.externs.push(ext.clone()),
        }
    }
    validate_program(&prog).map_err(|diags| {
        let mut msg = String::new();
        for d in diags {
            let _ = writeln!(msg, "error {file}:{d}");
        }
        CmdOutput::usage(msg)
    })?;
    Ok(prog)
}

fn finish(r: Step<CmdOutput>) -> CmdOutput {
    r.unwrap_or_else(|e| e)
}

/// Exit 0 if main is accepted at ⊥ under the inferred context, 1 if not.
pub fn cmd_check(src: &Path, policy: &Path) -> CmdOutput {
    finish((|| {
        let pol = load_policy(policy)?;
        let prog = load_program(src, Some(&pol))?;
        let fix = lfp(&prog).map_err(|e| CmdOutput::usage(format!("error: {e}")))?;
        let report = check_program(&prog, &pol, &fix.delta)
            .map_err(|e| CmdOutput::usage(format!("error {}: {e}", src.display())))?;
        let mut out = CmdOutput::default();
        let file = src.display().to_string();
        for e in &report.errors {
            let _ = writeln!(out.stdout, "{}", e.render(&file));
        }
        if !report.delta_consistent {
            let _ = writeln!(out.stdout, "error {file}: procedure context is not a fixed point");
        }
        if report.accepted() {
            out.stdout.push_str("accepted\n");
        } else {
            let _ = writeln!(out.stdout, "rejected: {} error(s)", report.errors.len());
            out.code = 1;
        }
        Ok(out)
    })())
}

/// Prints the least fixed point, one constraint per line, and the number
/// of rounds. `show_constraints` adds the constraints generated for main.
pub fn cmd_infer(src: &Path, policy: &Path, show_constraints: bool) -> CmdOutput {
    finish((|| {
        let pol = load_policy(policy)?;
        let prog = load_program(src, Some(&pol))?;
        let fix = lfp(&prog).map_err(|e| CmdOutput::usage(format!("error: {e}")))?;
        let mut out = CmdOutput::default();
        for (name, pc) in fix.delta.iter() {
            if pc.constraints.is_empty() {
                let _ = writeln!(out.stdout, "{name}: (no constraints)");
            }
            for c in &pc.constraints {
                let _ = writeln!(out.stdout, "{name}: {}", c.to_infer_line());
            }
        }
        if show_constraints {
            let main = gen_constraints(&prog.main, &Bound::eta(), &fix.delta)
                .map_err(|e| CmdOutput::usage(format!("error: {e}")))?;
            for c in &main {
                let _ = writeln!(out.stdout, "main: {}", c.to_infer_line());
            }
        }
        let _ = writeln!(out.stdout, "iterations={}", fix.iterations);
        Ok(out)
    })())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    /// Seeds both the random scheduler and the extern functions.
    pub seed: u64,
    pub sched: String,
    pub max_steps: usize,
    pub trace: bool,
    pub strict: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            sched: "det".into(),
            max_steps: DEFAULT_MAX_STEPS,
            trace: false,
            strict: false,
        }
    }
}

/// Runs main from the store file. Exit 0 terminated, 1 stuck, 3 cutoff.
pub fn cmd_run(src: &Path, store: &Path, opts: &RunOptions) -> CmdOutput {
    finish((|| {
        let prog = load_program(src, None)?;
        let sigma = parse_store(&read(store)?).map_err(|e| CmdOutput::usage(format!("error {}: {e}", store.display())))?;
        let mut sched = make_scheduler(&opts.sched, opts.seed).map_err(|e| CmdOutput::usage(format!("error: {e}")))?;
        let fe = FunEnv::new(&prog.externs, opts.seed)
            .map_err(|e| CmdOutput::usage(format!("error: {e}")))?
            .strict(opts.strict);
        let cfg = Configuration::new(prog.main, sigma, Arc::new(prog.procs));
        let outcome = run(cfg, &fe, sched.as_mut(), opts.max_steps);
        let mut out = CmdOutput {
            stdout: outcome.store().to_string(),
            ..CmdOutput::default()
        };
        if opts.trace {
            for l in outcome.trace() {
                let _ = writeln!(out.stdout, "{l}");
            }
        }
        match &outcome {
            Outcome::Terminated { .. } => {}
            Outcome::Stuck { reason, trace, .. } => {
                out.code = 1;
                let _ = writeln!(out.stderr, "stuck after {} step(s): {reason}", trace.len());
            }
            Outcome::Cutoff { trace, .. } => {
                out.code = 3;
                let _ = writeln!(out.stderr, "cutoff after {} step(s)", trace.len());
            }
        }
        Ok(out)
    })())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NiOptions {
    pub trials: usize,
    pub seed: u64,
    pub max_steps: usize,
}

impl Default for NiOptions {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Differential non-interference test. Exit 0 without violations, 1 with.
/// Wall-clock goes to stderr so stdout is reproducible.
pub fn cmd_nitest(src: &Path, policy: &Path, opts: &NiOptions) -> CmdOutput {
    finish((|| {
        let pol = load_policy(policy)?;
        let prog = load_program(src, Some(&pol))?;
        let fix = lfp(&prog).map_err(|e| CmdOutput::usage(format!("error: {e}")))?;
        let report = nitest(&prog, &pol, &fix.delta, opts.trials, opts.seed, opts.max_steps)
            .map_err(|e| CmdOutput::usage(format!("error: {e}")))?;
        Ok(CmdOutput {
            code: i32::from(!report.violations.is_empty()),
            stdout: report.to_string(),
            stderr: format!("elapsed {:.3}s\n", report.elapsed.as_secs_f64()),
        })
    })())
}
