//! The flow judgement `Δ;Γ;pc ⊢ C` and program-level checks.

use std::fmt;

use thiserror::Error;

use crate::infer::{gen_constraints, violated_constraints, Bound, DeltaContext, InferError, MemberError};
use crate::lattice::{Label, Policy, PolicyError};
use crate::syntax::{Expr, Instr, InstrKind, LocVar, Program, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    Const,
    Var,
    Lfun,
    Local,
    Com,
    Sel,
    Cond,
    Proc,
    Seq,
    Nil,
}

impl Rule {
    pub const ALL: [Rule; 10] = [
        Rule::Const,
        Rule::Var,
        Rule::Lfun,
        Rule::Local,
        Rule::Com,
        Rule::Sel,
        Rule::Cond,
        Rule::Proc,
        Rule::Seq,
        Rule::Nil,
    ];
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Const => "t-const",
            Rule::Var => "t-var",
            Rule::Lfun => "t-lfun",
            Rule::Local => "t-local",
            Rule::Com => "t-com",
            Rule::Sel => "t-sel",
            Rule::Cond => "t-cond",
            Rule::Proc => "t-proc",
            Rule::Seq => "t-seq",
            Rule::Nil => "t-nil",
        })
    }
}

/// A failed inequality `lhs ⋢ rhs` guarding a write to `target`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowError {
    pub span: Span,
    pub rule: Rule,
    /// Computed level, already joined with the pc.
    pub lhs: String,
    pub pc: String,
    pub rhs: String,
    pub target: LocVar,
    pub message: String,
}

impl FlowError {
    /// `error FILE:line:col RULE: lhs ⋢ rhs writing p.x`
    pub fn render(&self, file: &str) -> String {
        format!("error {file}:{} {self}", self.span)
    }
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ⋢ {} writing {}", self.rule, self.lhs, self.rhs, self.target)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{0}")]
    Infer(#[from] InferError),
    #[error("runtime call marker at {0} is not source syntax")]
    RuntimeTerm(Span),
}

impl From<MemberError> for TypeError {
    fn from(e: MemberError) -> Self {
        match e {
            MemberError::Policy(p) => TypeError::Policy(p),
            MemberError::Infer(i) => TypeError::Infer(i),
        }
    }
}

/// One rule application seen by the checker. Expression rules carry no pc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleEvent {
    pub rule: Rule,
    pub pc: Option<Label>,
    /// The pc at which each choreography premise was checked.
    pub premise_pcs: Vec<Label>,
}

struct Checker<'a> {
    pol: &'a Policy,
    delta: &'a DeltaContext,
    errors: Vec<FlowError>,
    events: Option<Vec<RuleEvent>>,
}

impl Checker<'_> {
    fn event(&mut self, rule: Rule, pc: Option<Label>, premise_pcs: Vec<Label>) {
        if let Some(ev) = &mut self.events {
            ev.push(RuleEvent { rule, pc, premise_pcs });
        }
    }

    fn expr(&mut self, p: &str, e: &Expr) -> Result<Label, TypeError> {
        let lat = self.pol.lattice();
        Ok(match e {
            Expr::Const(_) => {
                self.event(Rule::Const, None, vec![]);
                lat.bottom()
            }
            Expr::Var(x) => {
                self.event(Rule::Var, None, vec![]);
                self.pol.label_of(p, x)?
            }
            Expr::Call(_, args) => {
                self.event(Rule::Lfun, None, vec![]);
                let mut acc = lat.bottom();
                for a in args {
                    let l = self.expr(p, a)?;
                    acc = lat.join(acc, l);
                }
                acc
            }
        })
    }

    fn flow(&mut self, span: Span, rule: Rule, level: Label, pc: Label, target: LocVar) -> Result<(), TypeError> {
        let lat = self.pol.lattice();
        let lhs = lat.join(level, pc);
        let rhs = self.pol.label_of(&target.proc, &target.var)?;
        if !lat.leq(lhs, rhs) {
            self.errors.push(FlowError {
                span,
                rule,
                lhs: lat.name(lhs).to_string(),
                pc: lat.name(pc).to_string(),
                rhs: lat.name(rhs).to_string(),
                message: format!("{} flows into {target} labelled {}", lat.name(lhs), lat.name(rhs)),
                target,
            });
        }
        Ok(())
    }

    fn chor(&mut self, c: &[Instr], pc: Label) -> Result<(), TypeError> {
        match c.split_first() {
            None => {
                self.event(Rule::Nil, Some(pc), vec![]);
                Ok(())
            }
            Some((i, rest)) => {
                self.event(Rule::Seq, Some(pc), vec![pc, pc]);
                self.instr(i, pc)?;
                self.chor(rest, pc)
            }
        }
    }

    fn instr(&mut self, i: &Instr, pc: Label) -> Result<(), TypeError> {
        match &i.kind {
            InstrKind::Assign { proc, var, expr } => {
                self.event(Rule::Local, Some(pc), vec![]);
                let l = self.expr(proc, expr)?;
                self.flow(i.span, Rule::Local, l, pc, LocVar::new(proc.as_str(), var.as_str()))
            }
            InstrKind::Com { from, expr, to, var } => {
                self.event(Rule::Com, Some(pc), vec![]);
                let l = self.expr(from, expr)?;
                self.flow(i.span, Rule::Com, l, pc, LocVar::new(to.as_str(), var.as_str()))
            }
            InstrKind::Sel { .. } => {
                self.event(Rule::Sel, Some(pc), vec![]);
                Ok(())
            }
            InstrKind::Cond {
                proc,
                guard,
                then_branch,
                else_branch,
            } => {
                let g = self.expr(proc, guard)?;
                let inner = self.pol.lattice().join(g, pc);
                self.event(Rule::Cond, Some(pc), vec![inner, inner]);
                self.chor(then_branch, inner)?;
                self.chor(else_branch, inner)
            }
            InstrKind::Call { name, args } => {
                self.event(Rule::Proc, Some(pc), vec![]);
                let lat = self.pol.lattice();
                for (c, lhs, rhs) in violated_constraints(self.delta, name, pc, self.pol, args)? {
                    self.errors.push(FlowError {
                        span: i.span,
                        rule: Rule::Proc,
                        lhs: lat.name(lhs).to_string(),
                        pc: lat.name(pc).to_string(),
                        rhs: lat.name(rhs).to_string(),
                        message: format!("call to {name} violates {}", c.to_infer_line()),
                        target: c.target,
                    });
                }
                Ok(())
            }
            InstrKind::RtCall { .. } => Err(TypeError::RuntimeTerm(i.span)),
        }
    }
}

/// Type of `e` evaluated at process `p`: ⊥ for constants, Γ p.x for
/// variables, the join of the arguments for function calls.
pub fn type_expr(pol: &Policy, p: &str, e: &Expr) -> Result<Label, PolicyError> {
    let mut ck = Checker {
        pol,
        delta: &DeltaContext::default(),
        errors: vec![],
        events: None,
    };
    ck.expr(p, e).map_err(|e| match e {
        TypeError::Policy(p) => p,
        _ => unreachable!("expressions only fail on labels"),
    })
}

/// Checks `c` at `pc`, collecting every failed inequality. An empty list
/// means the judgement holds.
pub fn check_chor(pol: &Policy, delta: &DeltaContext, pc: Label, c: &[Instr]) -> Result<Vec<FlowError>, TypeError> {
    let mut ck = Checker {
        pol,
        delta,
        errors: vec![],
        events: None,
    };
    ck.chor(c, pc)?;
    Ok(ck.errors)
}

/// As [`check_chor`], also returning every rule application in visit order.
pub fn check_chor_traced(
    pol: &Policy,
    delta: &DeltaContext,
    pc: Label,
    c: &[Instr],
) -> Result<(Vec<FlowError>, Vec<RuleEvent>), TypeError> {
    let mut ck = Checker {
        pol,
        delta,
        errors: vec![],
        events: Some(vec![]),
    };
    ck.chor(c, pc)?;
    Ok((ck.errors, ck.events.unwrap_or_default()))
}

/// True iff `delta` is a pre-fixed point: regenerating each body under it
/// adds nothing.
pub fn verify_delta(prog: &Program, delta: &DeltaContext) -> bool {
    prog.procs.iter().all(|(name, def)| {
        match (gen_constraints(&def.body, &Bound::eta(), delta), delta.constraints(name)) {
            (Ok(cs), Some(have)) => cs.is_subset(have),
            _ => false,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub errors: Vec<FlowError>,
    pub delta_consistent: bool,
}

impl Report {
    pub fn accepted(&self) -> bool {
        self.errors.is_empty() && self.delta_consistent
    }
}

/// Checks main at ⊥ under `delta` and verifies `delta` itself.
pub fn check_program(prog: &Program, pol: &Policy, delta: &DeltaContext) -> Result<Report, TypeError> {
    let errors = check_chor(pol, delta, pol.lattice().bottom(), &prog.main)?;
    Ok(Report {
        errors,
        delta_consistent: verify_delta(prog, delta),
    })
}
