//! The labelled transition system over configurations `⟨C, Σ, 𝒞⟩`.
//!
//! [`enabled`] enumerates every transition derivable from a configuration,
//! in a fixed order: by the position path of the instruction that fires
//! (counted from the head of the sequence; transitions found inside the
//! branches of a conditional extend the path with the branch positions),
//! then by the position of the entering process for procedure entry, then
//! by the canonical label text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::eval::{eval_expr, EvalError, FunEnv};
use super::store::CStore;
use super::value::Value;
use crate::syntax::{pn_instr_each, pn_instr_refs, rename_processes, Choreography, Instr, InstrKind, Procs, RenameError, Seq, Span};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TransitionLabel {
    Tau(String),
    Com { from: String, value: Value, to: String },
    Sel { from: String, to: String, label: String },
    Then(String),
    Else(String),
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionLabel::Tau(p) => write!(f, "tau@{p}"),
            TransitionLabel::Com { from, value, to } => write!(f, "com@{from}->{to}:{value}"),
            TransitionLabel::Sel { from, to, label } => write!(f, "sel@{from}->{to}:{label}"),
            TransitionLabel::Then(p) => write!(f, "then@{p}"),
            TransitionLabel::Else(p) => write!(f, "else@{p}"),
        }
    }
}

/// Processes involved in a transition.
pub fn pn_label(mu: &TransitionLabel) -> BTreeSet<String> {
    label_procs(mu).into_iter().map(str::to_string).collect()
}

fn label_procs(mu: &TransitionLabel) -> Vec<&str> {
    match mu {
        TransitionLabel::Tau(p) | TransitionLabel::Then(p) | TransitionLabel::Else(p) => vec![p],
        TransitionLabel::Com { from, to, .. } | TransitionLabel::Sel { from, to, .. } => {
            vec![from, to]
        }
    }
}

#[derive(Debug, Clone)]
pub struct Configuration {
    chor: Seq,
    pub store: CStore,
    pub procs: Arc<Procs>,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.chor == other.chor && self.store == other.store && self.procs == other.procs
    }
}

impl Eq for Configuration {}

impl Configuration {
    pub fn new(chor: Choreography, store: CStore, procs: Arc<Procs>) -> Self {
        Self {
            chor: Seq::from_slice(&chor),
            store,
            procs,
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.chor.is_empty()
    }

    /// The remaining choreography.
    pub fn chor(&self) -> Choreography {
        self.chor.to_vec()
    }

    pub fn seq(&self) -> &Seq {
        &self.chor
    }

    fn successor(&self, c: Candidate) -> Result<(TransitionLabel, Configuration), RuntimeError> {
        let chor = c.splice(&self.chor, &self.procs)?;
        Ok((
            c.label,
            Configuration {
                chor,
                store: updated(&self.store, &c.write),
                procs: Arc::clone(&self.procs),
            },
        ))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("evaluating at {proc}: {source}")]
    Eval { proc: String, source: EvalError },
    #[error("call to undefined procedure {0}")]
    UndefinedProcedure(String),
    #[error("call to {name}: {source}")]
    Rename { name: String, source: RenameError },
    #[error("choreography is terminated")]
    Terminated,
    #[error("stuck: no transition enabled for `{0}`")]
    Stuck(String),
    #[error("transition index {index} out of range ({len} enabled)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),
}

struct Candidate {
    path: Vec<usize>,
    rank: usize,
    label: TransitionLabel,
    /// The instruction at `pos` is replaced by `replacement`.
    pos: usize,
    replacement: Replacement,
    write: Option<Write>,
}

/// The single store update a transition makes.
#[derive(Clone, PartialEq)]
struct Write {
    proc: String,
    var: String,
    value: Value,
}

fn updated(store: &CStore, w: &Option<Write>) -> CStore {
    let mut s = store.clone();
    if let Some(w) = w {
        s.set(&w.proc, &w.var, w.value.clone());
    }
    s
}

/// What a firing instruction turns into. Entering a call is built only for
/// the transition actually taken.
enum Replacement {
    Chor(Choreography),
    Enter {
        name: String,
        args: Vec<String>,
        entering: usize,
        cont: Seq,
        span: Span,
    },
}

impl Replacement {
    fn instructions(&self, procs: &Procs) -> Result<Choreography, RuntimeError> {
        let (name, args, entering, cont, span) = match self {
            Replacement::Chor(c) => return Ok(c.clone()),
            Replacement::Enter {
                name,
                args,
                entering,
                cont,
                span,
            } => (name, args, *entering, cont, *span),
        };
        let def = procs
            .get(name)
            .ok_or_else(|| RuntimeError::UndefinedProcedure(name.clone()))?;
        let map: BTreeMap<String, String> = def.formals.iter().cloned().zip(args.iter().cloned()).collect();
        let body = rename_processes(&def.body, &map).map_err(|source| RuntimeError::Rename {
            name: name.clone(),
            source,
        })?;
        let mut out: Choreography = args
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != entering)
            .map(|(_, r)| Instr {
                kind: InstrKind::RtCall {
                    proc: r.clone(),
                    name: name.clone(),
                    args: args.clone(),
                    cont: cont.clone(),
                },
                span,
            })
            .collect();
        out.extend(body);
        Ok(out)
    }
}

impl Candidate {
    /// Rebuilds the instructions before `pos`; the tail after it is shared.
    fn splice(&self, chor: &Seq, procs: &Procs) -> Result<Seq, RuntimeError> {
        let mut prefix = Vec::with_capacity(self.pos);
        let mut cur = chor;
        for _ in 0..self.pos {
            let (i, rest) = cur.split_shared().expect("candidate position is in range");
            prefix.push(i);
            cur = rest;
        }
        let (_, after) = cur.split().expect("candidate position is in range");
        let mut out = after.clone();
        for i in self.replacement.instructions(procs)?.into_iter().rev() {
            out = Seq::cons(i, out);
        }
        for i in prefix.into_iter().rev() {
            out = Seq::cons_shared(Arc::clone(i), out);
        }
        Ok(out)
    }

    fn splice_slice(&self, chor: &[Instr], procs: &Procs) -> Result<Choreography, RuntimeError> {
        let mut out = chor[..self.pos].to_vec();
        out.extend(self.replacement.instructions(procs)?);
        out.extend_from_slice(&chor[self.pos + 1..]);
        Ok(out)
    }
}

/// The instructions after the one being looked at. Conditional branches
/// are walked in place and only become a [`Seq`] when a call needs them.
#[derive(Clone, Copy)]
enum Rest<'a> {
    Seq(&'a Seq),
    Slice(&'a [Instr]),
}

impl Rest<'_> {
    fn to_seq(self) -> Seq {
        match self {
            Rest::Seq(s) => s.clone(),
            Rest::Slice(c) => Seq::from_slice(c),
        }
    }

    fn all_blocked(self, blocked: &BTreeSet<&str>) -> bool {
        match self {
            Rest::Seq(s) => s
                .processes()
                .is_none_or(|ps| ps.iter().all(|p| blocked.contains(p.as_str()))),
            Rest::Slice(c) => c.is_empty(),
        }
    }
}

fn is_blocked(blocked: &BTreeSet<&str>, procs: &[&str]) -> bool {
    procs.iter().any(|p| blocked.contains(p))
}

/// Every transition of `cfg`, in the canonical order.
pub fn enabled(
    cfg: &Configuration,
    fe: &FunEnv,
) -> Result<Vec<(TransitionLabel, Configuration)>, RuntimeError> {
    let cands = candidates(&cfg.chor, &cfg.store, &cfg.procs, fe)?;
    cands.into_iter().map(|c| cfg.successor(c)).collect()
}

/// Labels of the enabled transitions, in the canonical order, without
/// building the successors.
pub fn enabled_labels(cfg: &Configuration, fe: &FunEnv) -> Result<Vec<TransitionLabel>, RuntimeError> {
    let cands = candidates(&cfg.chor, &cfg.store, &cfg.procs, fe)?;
    Ok(cands.into_iter().map(|c| c.label).collect())
}

/// The `index`-th enabled transition.
pub fn step(
    cfg: &Configuration,
    fe: &FunEnv,
    index: usize,
) -> Result<(TransitionLabel, Configuration), RuntimeError> {
    step_with(cfg, fe, |_| Ok(index))
}

/// Takes the transition picked by `choose`, which receives the number of
/// enabled transitions. Only the chosen successor is built.
pub(crate) fn step_with(
    cfg: &Configuration,
    fe: &FunEnv,
    choose: impl FnOnce(usize) -> Result<usize, RuntimeError>,
) -> Result<(TransitionLabel, Configuration), RuntimeError> {
    if cfg.is_terminated() {
        return Err(RuntimeError::Terminated);
    }
    let mut all = candidates(&cfg.chor, &cfg.store, &cfg.procs, fe)?;
    if all.is_empty() {
        return Err(RuntimeError::Stuck(describe(&cfg.chor)));
    }
    let index = choose(all.len())?;
    if index >= all.len() {
        return Err(RuntimeError::IndexOutOfRange {
            index,
            len: all.len(),
        });
    }
    cfg.successor(all.swap_remove(index))
}

fn describe(c: &Seq) -> String {
    match c.first() {
        Some(i) => format!("{:?} at {}", i.kind, i.span),
        None => "0".into(),
    }
}

fn candidates(chor: &Seq, store: &CStore, procs: &Procs, fe: &FunEnv) -> Result<Vec<Candidate>, RuntimeError> {
    walk(chor.nodes().map(|(i, r)| (i, Rest::Seq(r))), BTreeSet::new(), store, procs, fe)
}

/// Transitions of a branch that avoid the processes in `excluded`.
fn branch_candidates<'a>(
    c: &'a [Instr],
    excluded: BTreeSet<&'a str>,
    store: &CStore,
    procs: &Procs,
    fe: &FunEnv,
) -> Result<Vec<Candidate>, RuntimeError> {
    walk(c.iter().enumerate().map(|(k, i)| (i, Rest::Slice(&c[k + 1..]))), excluded, store, procs, fe)
}

fn walk<'a>(
    chor: impl Iterator<Item = (&'a Instr, Rest<'a>)>,
    // Processes of the instructions already passed over (rule delay).
    mut blocked: BTreeSet<&'a str>,
    store: &CStore,
    procs: &Procs,
    fe: &FunEnv,
) -> Result<Vec<Candidate>, RuntimeError> {
    let mut out = Vec::new();
    for (pos, (instr, rest)) in chor.enumerate() {
        // every rule needs one of the instruction's processes to be free
        let mut free = false;
        pn_instr_each(instr, &mut |p| free |= !blocked.contains(p));
        let heads = if free {
            head_transitions(instr, rest, store, procs, fe, &blocked)?
        } else {
            vec![]
        };
        for head in heads {
            let mut path = Vec::with_capacity(1 + head.subpath.len());
            path.push(pos);
            path.extend(head.subpath);
            out.push(Candidate {
                path,
                rank: head.rank,
                label: head.label,
                pos,
                replacement: head.replacement,
                write: head.write,
            });
        }
        pn_instr_refs(instr, &mut blocked);
        // nothing later can move once every process in it is blocked
        if rest.all_blocked(&blocked) {
            break;
        }
    }
    if out.len() > 1 {
        out.sort_by_cached_key(|c| (c.path.clone(), c.rank, c.label.to_string()));
    }
    Ok(out)
}

struct Head {
    subpath: Vec<usize>,
    rank: usize,
    label: TransitionLabel,
    /// Instructions that replace the firing one.
    replacement: Replacement,
    write: Option<Write>,
}

fn eval_at(store: &CStore, p: &str, e: &crate::syntax::Expr, fe: &FunEnv) -> Result<Value, RuntimeError> {
    eval_expr(store.process(p), e, fe).map_err(|source| RuntimeError::Eval {
        proc: p.to_string(),
        source,
    })
}

fn head_transitions(
    instr: &Instr,
    rest: Rest<'_>,
    store: &CStore,
    procs: &Procs,
    fe: &FunEnv,
    blocked: &BTreeSet<&str>,
) -> Result<Vec<Head>, RuntimeError> {
    let single = |label, write| {
        Ok(vec![Head {
            subpath: vec![],
            rank: 0,
            label,
            replacement: Replacement::Chor(vec![]),
            write,
        }])
    };
    let write = |p: &str, x: &str, value| {
        Some(Write {
            proc: p.to_string(),
            var: x.to_string(),
            value,
        })
    };
    match &instr.kind {
        InstrKind::Assign { proc, var, expr } => {
            if is_blocked(blocked, &[proc]) {
                return Ok(vec![]);
            }
            let v = eval_at(store, proc, expr, fe)?;
            single(TransitionLabel::Tau(proc.clone()), write(proc, var, v))
        }
        InstrKind::Com { from, expr, to, var } => {
            if is_blocked(blocked, &[from, to]) {
                return Ok(vec![]);
            }
            let v = eval_at(store, from, expr, fe)?;
            let w = write(to, var, v.clone());
            single(
                TransitionLabel::Com {
                    from: from.clone(),
                    value: v,
                    to: to.clone(),
                },
                w,
            )
        }
        InstrKind::Sel { from, to, label } => {
            if is_blocked(blocked, &[from, to]) {
                return Ok(vec![]);
            }
            single(
                TransitionLabel::Sel {
                    from: from.clone(),
                    to: to.clone(),
                    label: label.clone(),
                },
                None,
            )
        }
        InstrKind::Cond {
            proc,
            guard,
            then_branch,
            else_branch,
        } => {
            let mut out = Vec::new();
            if !is_blocked(blocked, &[proc]) {
                let v = eval_at(store, proc, guard, fe)?;
                let (label, branch) = if v == Value::Bool(true) {
                    (TransitionLabel::Then(proc.clone()), then_branch)
                } else {
                    (TransitionLabel::Else(proc.clone()), else_branch)
                };
                out.push(Head {
                    subpath: vec![],
                    rank: 0,
                    label,
                    replacement: Replacement::Chor(branch.clone()),
                    write: None,
                });
            }
            // delay-cond: both branches make the same step, not involving the guard's owner.
            let mut excluded = blocked.clone();
            excluded.insert(proc.as_str());
            let thens = branch_candidates(then_branch, excluded.clone(), store, procs, fe)?;
            if thens.is_empty() {
                return Ok(out);
            }
            let elses = branch_candidates(else_branch, excluded, store, procs, fe)?;
            for a in &thens {
                let lp = label_procs(&a.label);
                if lp.contains(&proc.as_str()) || is_blocked(blocked, &lp) {
                    continue;
                }
                let same_store = |b: &Candidate| a.write == b.write || updated(store, &a.write) == updated(store, &b.write);
                for b in elses.iter().filter(|b| b.label == a.label && same_store(b)) {
                    let mut subpath = a.path.clone();
                    subpath.extend_from_slice(&b.path);
                    out.push(Head {
                        subpath,
                        rank: 0,
                        label: a.label.clone(),
                        replacement: Replacement::Chor(vec![Instr {
                            kind: InstrKind::Cond {
                                proc: proc.clone(),
                                guard: guard.clone(),
                                then_branch: a.splice_slice(then_branch, procs)?,
                                else_branch: b.splice_slice(else_branch, procs)?,
                            },
                            span: instr.span,
                        }]),
                        write: a.write.clone(),
                    });
                }
            }
            Ok(out)
        }
        InstrKind::Call { name, args } => {
            if !procs.contains_key(name) {
                return Err(RuntimeError::UndefinedProcedure(name.clone()));
            }
            let mut out = Vec::new();
            for (rank, entering) in args.iter().enumerate() {
                if blocked.contains(entering.as_str()) {
                    continue;
                }
                out.push(Head {
                    subpath: vec![],
                    rank,
                    label: TransitionLabel::Tau(entering.clone()),
                    replacement: Replacement::Enter {
                        name: name.clone(),
                        args: args.clone(),
                        entering: rank,
                        cont: rest.to_seq(),
                        span: instr.span,
                    },
                    write: None,
                });
            }
            Ok(out)
        }
        InstrKind::RtCall { proc, .. } => {
            if is_blocked(blocked, &[proc]) {
                return Ok(vec![]);
            }
            single(TransitionLabel::Tau(proc.clone()), None)
        }
    }
}
