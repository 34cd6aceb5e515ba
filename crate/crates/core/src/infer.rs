//! Reconstruction of the procedure context by constraint generation.
//!
//! Each procedure body is walked once per round, emitting flow constraints
//! `Ψ ⊑ p.x` where the bound `Ψ` is a join of located variables and the
//! program-counter placeholder η. Calls import the callee's current
//! constraint set (η instantiated to the caller's symbolic pc, formals
//! renamed to actuals). Rounds are iterated from the empty context until
//! nothing changes; the result denotes, for every procedure and pc, the set
//! of labellings satisfying all of that procedure's constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::lattice::{Label, Policy, PolicyError};
use crate::syntax::{contains_call, proc_located_vars, Expr, Instr, InstrKind, LocVar, Program};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Var(LocVar),
    /// Placeholder for the program counter at procedure entry.
    Eta,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Var(lv) => write!(f, "{lv}"),
            Atom::Eta => f.write_str("η"),
        }
    }
}

/// A join of atoms; the empty bound is ⊥. Atoms are kept sorted with η last.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bound(BTreeSet<Atom>);

impl Bound {
    pub fn bottom() -> Self {
        Self::default()
    }

    pub fn eta() -> Self {
        Self(BTreeSet::from([Atom::Eta]))
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = Atom>) -> Self {
        Self(atoms.into_iter().collect())
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.0.iter()
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.0.contains(a)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self, other: &Bound) -> Bound {
        Bound(self.0.union(&other.0).cloned().collect())
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ⊔ ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("}")
    }
}

/// `bound ⊑ target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Constraint {
    pub bound: Bound,
    pub target: LocVar,
}

impl Constraint {
    pub fn new(bound: Bound, target: LocVar) -> Self {
        Self { bound, target }
    }

    /// The `infer` output form: `a1 | ... | ak <= p.x`, with `pc` for η
    /// listed first and `bot` for the empty bound.
    pub fn to_infer_line(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if self.bound.contains(&Atom::Eta) {
            parts.push("pc".into());
        }
        parts.extend(self.bound.atoms().filter_map(|a| match a {
            Atom::Var(lv) => Some(lv.to_string()),
            Atom::Eta => None,
        }));
        if parts.is_empty() {
            parts.push("bot".into());
        }
        format!("{} <= {}", parts.join(" | "), self.target)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ⊑ {}", self.bound, self.target)
    }
}

pub type ConstraintSet = BTreeSet<Constraint>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcConstraints {
    pub formals: Vec<String>,
    pub constraints: ConstraintSet,
}

/// Procedure name to its formals and constraint set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeltaContext {
    procs: BTreeMap<String, ProcConstraints>,
}

impl DeltaContext {
    /// Every procedure of `prog` mapped to the empty set.
    pub fn empty(prog: &Program) -> Self {
        Self {
            procs: prog
                .procs
                .iter()
                .map(|(n, d)| {
                    (
                        n.clone(),
                        ProcConstraints {
                            formals: d.formals.clone(),
                            constraints: ConstraintSet::new(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&ProcConstraints> {
        self.procs.get(name)
    }

    pub fn constraints(&self, name: &str) -> Option<&ConstraintSet> {
        self.procs.get(name).map(|p| &p.constraints)
    }

    pub fn set_constraints(&mut self, name: &str, cs: ConstraintSet) {
        if let Some(p) = self.procs.get_mut(name) {
            p.constraints = cs;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ProcConstraints)> {
        self.procs.iter()
    }

    pub fn len(&self) -> usize {
        self.procs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.procs.is_empty()
    }

    /// Pointwise inclusion.
    pub fn is_subset_of(&self, other: &DeltaContext) -> bool {
        self.procs.iter().all(|(n, p)| {
            other
                .procs
                .get(n)
                .is_some_and(|q| p.constraints.is_subset(&q.constraints))
        })
    }

    pub fn total_constraints(&self) -> usize {
        self.procs.values().map(|p| p.constraints.len()).sum()
    }

    /// One `X: ... <= p.x` line per constraint, procedures in name order.
    pub fn to_infer_lines(&self) -> Vec<String> {
        self.procs
            .iter()
            .flat_map(|(n, p)| {
                p.constraints
                    .iter()
                    .map(move |c| format!("{n}: {}", c.to_infer_line()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum InferError {
    #[error("call to {0}, which has no entry in the constraint context")]
    UnknownProcedure(String),
    #[error("call to {name} with {got} process(es), expected {expected}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("constraint of {name} mentions process {proc}, which is not a formal")]
    NotFormal { name: String, proc: String },
    #[error("runtime call marker in constraint generation")]
    RuntimeTerm,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MemberError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

/// Symbolic level of `e` evaluated at process `p`.
pub fn bound_of_expr(p: &str, e: &Expr) -> Bound {
    Bound(e.vars().into_iter().map(|x| Atom::Var(LocVar::new(p, x))).collect())
}

/// `[[Ψ]] Γ pc`.
pub fn eval_bound(b: &Bound, pol: &Policy, pc: Label) -> Result<Label, PolicyError> {
    let lat = pol.lattice();
    let mut acc = lat.bottom();
    for a in b.atoms() {
        let l = match a {
            Atom::Var(lv) => pol.label_of(&lv.proc, &lv.var)?,
            Atom::Eta => pc,
        };
        acc = lat.join(acc, l);
    }
    Ok(acc)
}

/// Instantiates a callee constraint at a call site: η becomes the caller's
/// symbolic pc and the callee's formals become the actuals. The caller's
/// atoms are not renamed.
pub fn import_constraint(
    c: &Constraint,
    name: &str,
    renaming: &BTreeMap<&str, &str>,
    pcb: &Bound,
) -> Result<Constraint, InferError> {
    let rename = |lv: &LocVar| {
        renaming
            .get(lv.proc.as_str())
            .map(|p| LocVar::new(*p, lv.var.as_str()))
            .ok_or_else(|| InferError::NotFormal {
                name: name.to_string(),
                proc: lv.proc.clone(),
            })
    };
    let mut atoms = BTreeSet::new();
    for a in c.bound.atoms() {
        match a {
            Atom::Var(lv) => {
                atoms.insert(Atom::Var(rename(lv)?));
            }
            Atom::Eta => atoms.extend(pcb.atoms().cloned()),
        }
    }
    Ok(Constraint {
        bound: Bound(atoms),
        target: rename(&c.target)?,
    })
}

fn renaming_for<'a>(
    delta: &'a DeltaContext,
    name: &str,
    args: &'a [String],
) -> Result<(&'a ProcConstraints, BTreeMap<&'a str, &'a str>), InferError> {
    let callee = delta
        .get(name)
        .ok_or_else(|| InferError::UnknownProcedure(name.to_string()))?;
    if callee.formals.len() != args.len() {
        return Err(InferError::Arity {
            name: name.to_string(),
            expected: callee.formals.len(),
            got: args.len(),
        });
    }
    let map = callee
        .formals
        .iter()
        .map(String::as_str)
        .zip(args.iter().map(String::as_str))
        .collect();
    Ok((callee, map))
}

/// `δ, pcb ⊢ C ▷ E`.
pub fn gen_constraints(
    c: &[Instr],
    pcb: &Bound,
    delta: &DeltaContext,
) -> Result<ConstraintSet, InferError> {
    let mut out = ConstraintSet::new();
    gen_into(c, pcb, delta, &mut out)?;
    Ok(out)
}

fn gen_into(
    c: &[Instr],
    pcb: &Bound,
    delta: &DeltaContext,
    out: &mut ConstraintSet,
) -> Result<(), InferError> {
    for i in c {
        match &i.kind {
            InstrKind::Assign { proc, var, expr } => {
                out.insert(Constraint::new(
                    bound_of_expr(proc, expr).join(pcb),
                    LocVar::new(proc.as_str(), var.as_str()),
                ));
            }
            InstrKind::Com { from, expr, to, var } => {
                out.insert(Constraint::new(
                    bound_of_expr(from, expr).join(pcb),
                    LocVar::new(to.as_str(), var.as_str()),
                ));
            }
            InstrKind::Sel { .. } => {}
            InstrKind::Cond {
                proc,
                guard,
                then_branch,
                else_branch,
            } => {
                let inner = pcb.join(&bound_of_expr(proc, guard));
                gen_into(then_branch, &inner, delta, out)?;
                gen_into(else_branch, &inner, delta, out)?;
            }
            InstrKind::Call { name, args } => {
                let (callee, map) = renaming_for(delta, name, args)?;
                for k in &callee.constraints {
                    out.insert(import_constraint(k, name, &map, pcb)?);
                }
            }
            InstrKind::RtCall { .. } => return Err(InferError::RuntimeTerm),
        }
    }
    Ok(())
}

/// One round: regenerate every procedure body's constraints under `delta`.
pub fn phi(prog: &Program, delta: &DeltaContext) -> Result<DeltaContext, InferError> {
    let mut next = DeltaContext::empty(prog);
    for (name, def) in &prog.procs {
        next.set_constraints(name, gen_constraints(&def.body, &Bound::eta(), delta)?);
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixpoint {
    pub delta: DeltaContext,
    /// Rounds of `phi` performed.
    pub iterations: usize,
}

/// Upper bound on the rounds Kleene iteration can take: one per constraint
/// that could ever be added, plus the confirming round.
pub fn universe_bound(prog: &Program) -> u128 {
    let vars = proc_located_vars(prog);
    let mut total: u128 = 1;
    for name in prog.procs.keys() {
        let n = vars.get(name).map_or(0, BTreeSet::len) as u32;
        // bounds range over subsets of (variables ∪ {η}); targets over variables
        let per = 1u128
            .checked_shl(n + 1)
            .unwrap_or(u128::MAX)
            .saturating_mul(u128::from(n));
        total = total.saturating_add(per);
    }
    total
}

/// Least fixed point of [`phi`] by Kleene iteration from the empty context.
/// When no body contains a call, `phi` ignores its argument and a single
/// round is already the fixed point.
pub fn lfp(prog: &Program) -> Result<Fixpoint, InferError> {
    let start = DeltaContext::empty(prog);
    let first = phi(prog, &start)?;
    if !prog.procs.values().any(|d| contains_call(&d.body)) {
        return Ok(Fixpoint {
            delta: first,
            iterations: 1,
        });
    }
    let bound = universe_bound(prog);
    let mut delta = first;
    let mut iterations = 1usize;
    loop {
        let next = phi(prog, &delta)?;
        iterations += 1;
        assert!(
            iterations as u128 <= bound,
            "Kleene iteration exceeded the constraint universe"
        );
        if next == delta {
            return Ok(Fixpoint { delta, iterations });
        }
        delta = next;
    }
}

/// The constraints of `name` that `pol` violates at `pc` once formals are
/// renamed to `actuals`, with the computed and target labels.
pub fn violated_constraints(
    delta: &DeltaContext,
    name: &str,
    pc: Label,
    pol: &Policy,
    actuals: &[String],
) -> Result<Vec<(Constraint, Label, Label)>, MemberError> {
    let (callee, map) = renaming_for(delta, name, actuals)?;
    let mut out = Vec::new();
    for c in &callee.constraints {
        let c = import_constraint(c, name, &map, &Bound::eta())?;
        let lhs = eval_bound(&c.bound, pol, pc)?;
        let rhs = pol.label_of(&c.target.proc, &c.target.var)?;
        if !pol.lattice().leq(lhs, rhs) {
            out.push((c, lhs, rhs));
        }
    }
    Ok(out)
}

/// `Γ ∈ Δ(X, pc)` where Δ is denoted by `delta`: every constraint of `X`,
/// renamed to the call's actuals, holds under `pol` at `pc`.
pub fn delta_member(
    delta: &DeltaContext,
    name: &str,
    pc: Label,
    pol: &Policy,
    actuals: &[String],
) -> Result<bool, MemberError> {
    Ok(violated_constraints(delta, name, pc, pol, actuals)?.is_empty())
}
