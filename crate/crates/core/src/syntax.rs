//! Abstract syntax of recursive choreographies.
//!
//! A choreography is a flat sequence of instructions; the empty sequence is
//! the terminated choreography. Sequential composition (grafting) is plain
//! concatenation of sequences.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

use crate::runtime::{Value, ValueType};

/// A variable `x` owned by process `p`, written `p.x`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocVar {
    pub proc: String,
    pub var: String,
}

impl LocVar {
    pub fn new(proc: impl Into<String>, var: impl Into<String>) -> Self {
        Self {
            proc: proc.into(),
            var: var.into(),
        }
    }
}

impl fmt::Display for LocVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.proc, self.var)
    }
}

/// Source position (1-based). Not part of structural equality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Local expression, evaluated against a single process store.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(Value),
    Var(String),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn int(n: i64) -> Self {
        Expr::Const(Value::Int(n))
    }

    pub fn var(x: &str) -> Self {
        Expr::Var(x.to_string())
    }

    pub fn call(f: &str, args: Vec<Expr>) -> Self {
        Expr::Call(f.to_string(), args)
    }

    /// Free variables in left-to-right order, with repetitions.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(x) => out.push(x),
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    fn collect_calls<'a>(&'a self, out: &mut Vec<(&'a str, usize)>) {
        if let Expr::Call(f, args) = self {
            out.push((f, args.len()));
            args.iter().for_each(|a| a.collect_calls(out));
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Var(x) => f.write_str(x),
            Expr::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

pub type Choreography = Vec<Instr>;

/// An immutable instruction list with shared tails. Executions keep the
/// running choreography in this form so that a step copies only the
/// instructions before the one that fires. Every node also caches the
/// processes of the list it starts.
#[derive(Clone, Default)]
pub struct Seq(Option<Arc<SeqNode>>);

struct SeqNode {
    head: Arc<Instr>,
    tail: Seq,
    procs: Arc<BTreeSet<String>>,
}

impl Seq {
    pub fn new() -> Self {
        Self(None)
    }

    pub fn cons(head: Instr, tail: Seq) -> Self {
        Self::cons_shared(Arc::new(head), tail)
    }

    pub(crate) fn cons_shared(head: Arc<Instr>, tail: Seq) -> Self {
        let mut known = true;
        if let Some(t) = &tail.0 {
            pn_instr_each(&head, &mut |p| known &= t.procs.contains(p));
        }
        let procs = match &tail.0 {
            Some(t) if known => Arc::clone(&t.procs),
            _ => {
                let mut all = tail.processes().cloned().unwrap_or_default();
                pn_instr_each(&head, &mut |p| {
                    all.insert(p.to_string());
                });
                Arc::new(all)
            }
        };
        Self(Some(Arc::new(SeqNode { head, tail, procs })))
    }

    /// Processes mentioned anywhere in the list.
    pub fn processes(&self) -> Option<&BTreeSet<String>> {
        self.0.as_deref().map(|n| &*n.procs)
    }

    pub fn from_slice(c: &[Instr]) -> Self {
        c.iter().rev().fold(Seq::new(), |tail, i| Seq::cons(i.clone(), tail))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn split(&self) -> Option<(&Instr, &Seq)> {
        self.0.as_deref().map(|n| (&*n.head, &n.tail))
    }

    pub(crate) fn split_shared(&self) -> Option<(&Arc<Instr>, &Seq)> {
        self.0.as_deref().map(|n| (&n.head, &n.tail))
    }

    pub fn first(&self) -> Option<&Instr> {
        self.split().map(|(h, _)| h)
    }

    pub fn iter(&self) -> SeqIter<'_> {
        SeqIter(self)
    }

    /// Each instruction paired with the list that follows it.
    pub fn nodes(&self) -> impl Iterator<Item = (&Instr, &Seq)> {
        let mut cur = self;
        std::iter::from_fn(move || {
            let (h, t) = cur.split()?;
            cur = t;
            Some((h, t))
        })
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn to_vec(&self) -> Choreography {
        self.iter().cloned().collect()
    }
}

pub struct SeqIter<'a>(&'a Seq);

impl<'a> Iterator for SeqIter<'a> {
    type Item = &'a Instr;

    fn next(&mut self) -> Option<&'a Instr> {
        let (h, t) = self.0.split()?;
        self.0 = t;
        Some(h)
    }
}

impl From<&[Instr]> for Seq {
    fn from(c: &[Instr]) -> Self {
        Seq::from_slice(c)
    }
}

impl PartialEq for Seq {
    fn eq(&self, other: &Self) -> bool {
        self.iter().eq(other.iter())
    }
}

impl Eq for Seq {}

impl Hash for Seq {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for i in self.iter() {
            i.hash(state);
        }
        self.len().hash(state);
    }
}

impl fmt::Debug for Seq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

// Long lists would otherwise be dropped recursively.
impl Drop for Seq {
    fn drop(&mut self) {
        let mut cur = self.0.take();
        while let Some(node) = cur {
            match Arc::try_unwrap(node) {
                Ok(mut n) => cur = n.tail.0.take(),
                Err(_) => break,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InstrKind {
    /// `from.expr -> to.var`
    Com {
        from: String,
        expr: Expr,
        to: String,
        var: String,
    },
    /// `from -> to[label]`
    Sel {
        from: String,
        to: String,
        label: String,
    },
    /// `proc.var := expr`
    Assign {
        proc: String,
        var: String,
        expr: Expr,
    },
    /// `if proc.guard then { .. } else { .. }`
    Cond {
        proc: String,
        guard: Expr,
        then_branch: Choreography,
        else_branch: Choreography,
    },
    /// `name(args)`
    Call { name: String, args: Vec<String> },
    /// Runtime marker `proc : name(args).cont`: `proc` has yet to enter the call.
    RtCall {
        proc: String,
        name: String,
        args: Vec<String>,
        cont: Seq,
    },
}

#[derive(Debug, Clone, Eq)]
pub struct Instr {
    pub kind: InstrKind,
    pub span: Span,
}

// Spans are not part of an instruction's identity.
impl PartialEq for Instr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Hash for Instr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.kind.hash(state);
    }
}

impl From<InstrKind> for Instr {
    fn from(kind: InstrKind) -> Self {
        Instr {
            kind,
            span: Span::default(),
        }
    }
}

impl Instr {
    pub fn at(mut self, span: Span) -> Self {
        self.span = span;
        self
    }

    pub fn com(from: &str, expr: Expr, to: &str, var: &str) -> Self {
        InstrKind::Com {
            from: from.into(),
            expr,
            to: to.into(),
            var: var.into(),
        }
        .into()
    }

    pub fn sel(from: &str, to: &str, label: &str) -> Self {
        InstrKind::Sel {
            from: from.into(),
            to: to.into(),
            label: label.into(),
        }
        .into()
    }

    pub fn assign(proc: &str, var: &str, expr: Expr) -> Self {
        InstrKind::Assign {
            proc: proc.into(),
            var: var.into(),
            expr,
        }
        .into()
    }

    pub fn cond(proc: &str, guard: Expr, then_branch: Choreography, else_branch: Choreography) -> Self {
        InstrKind::Cond {
            proc: proc.into(),
            guard,
            then_branch,
            else_branch,
        }
        .into()
    }

    pub fn call(name: &str, args: &[&str]) -> Self {
        InstrKind::Call {
            name: name.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
        .into()
    }
}

#[derive(Debug, Clone, Eq)]
pub struct ProcDef {
    pub formals: Vec<String>,
    pub body: Choreography,
    pub span: Span,
}

impl PartialEq for ProcDef {
    fn eq(&self, other: &Self) -> bool {
        self.formals == other.formals && self.body == other.body
    }
}

impl ProcDef {
    pub fn new(formals: &[&str], body: Choreography) -> Self {
        Self {
            formals: formals.iter().map(|s| s.to_string()).collect(),
            body,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExternDecl {
    pub name: String,
    pub arity: usize,
    pub ret: ValueType,
}

pub type Procs = BTreeMap<String, ProcDef>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub externs: Vec<ExternDecl>,
    pub procs: Procs,
    pub main: Choreography,
}

// ---------------------------------------------------------------------------
// process names

/// Process names occurring in an instruction. A conditional includes the
/// processes of both branches; a runtime call marker only blocks its process.
pub fn pn_instr(i: &Instr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    pn_instr_into(i, &mut out);
    out
}

pub fn pn_chor(c: &[Instr]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for i in c {
        pn_instr_into(i, &mut out);
    }
    out
}

pub(crate) fn pn_instr_into(i: &Instr, out: &mut BTreeSet<String>) {
    let mut refs = BTreeSet::new();
    pn_instr_refs(i, &mut refs);
    out.extend(refs.into_iter().map(str::to_string));
}

pub(crate) fn pn_instr_refs<'a>(i: &'a Instr, out: &mut BTreeSet<&'a str>) {
    pn_instr_each(i, &mut |p| {
        out.insert(p);
    });
}

/// Calls `f` on every process name of `i`, repeats included.
pub(crate) fn pn_instr_each<'a>(i: &'a Instr, f: &mut impl FnMut(&'a str)) {
    match &i.kind {
        InstrKind::Com { from, to, .. } | InstrKind::Sel { from, to, .. } => {
            f(from);
            f(to);
        }
        InstrKind::Assign { proc, .. } | InstrKind::RtCall { proc, .. } => f(proc),
        InstrKind::Cond {
            proc,
            then_branch,
            else_branch,
            ..
        } => {
            f(proc);
            for j in then_branch.iter().chain(else_branch) {
                pn_instr_each(j, f);
            }
        }
        InstrKind::Call { args, .. } => args.iter().for_each(|a| f(a)),
    }
}

/// `c ⨟ k`: the continuation replaces the terminal of `c`.
pub fn graft(c: &[Instr], k: &[Instr]) -> Choreography {
    let mut out = Vec::with_capacity(c.len() + k.len());
    out.extend_from_slice(c);
    out.extend_from_slice(k);
    out
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RenameError {
    #[error("renaming is not injective: {0} and {1} both map to {2}")]
    NotInjective(String, String, String),
    #[error("renaming has no image for process {0}")]
    NotTotal(String),
}

/// Simultaneous renaming of every process-name occurrence in `c`.
/// The map must be injective and defined on every process of `c`.
pub fn rename_processes(
    c: &[Instr],
    map: &BTreeMap<String, String>,
) -> Result<Choreography, RenameError> {
    check_injective(map)?;
    c.iter().map(|i| rename_instr(i, map)).collect()
}

pub(crate) fn check_injective(map: &BTreeMap<String, String>) -> Result<(), RenameError> {
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, v) in map {
        if let Some(prev) = seen.insert(v, k) {
            return Err(RenameError::NotInjective(prev.into(), k.clone(), v.clone()));
        }
    }
    Ok(())
}

fn rename_instr(i: &Instr, map: &BTreeMap<String, String>) -> Result<Instr, RenameError> {
    let r = |p: &String| {
        map.get(p)
            .cloned()
            .ok_or_else(|| RenameError::NotTotal(p.clone()))
    };
    let kind = match &i.kind {
        InstrKind::Com { from, expr, to, var } => InstrKind::Com {
            from: r(from)?,
            expr: expr.clone(),
            to: r(to)?,
            var: var.clone(),
        },
        InstrKind::Sel { from, to, label } => InstrKind::Sel {
            from: r(from)?,
            to: r(to)?,
            label: label.clone(),
        },
        InstrKind::Assign { proc, var, expr } => InstrKind::Assign {
            proc: r(proc)?,
            var: var.clone(),
            expr: expr.clone(),
        },
        InstrKind::Cond {
            proc,
            guard,
            then_branch,
            else_branch,
        } => InstrKind::Cond {
            proc: r(proc)?,
            guard: guard.clone(),
            then_branch: rename_processes(then_branch, map)?,
            else_branch: rename_processes(else_branch, map)?,
        },
        InstrKind::Call { name, args } => InstrKind::Call {
            name: name.clone(),
            args: args.iter().map(r).collect::<Result<_, _>>()?,
        },
        InstrKind::RtCall {
            proc,
            name,
            args,
            cont,
        } => InstrKind::RtCall {
            proc: r(proc)?,
            name: name.clone(),
            args: args.iter().map(r).collect::<Result<_, _>>()?,
            cont: Seq::from_slice(&rename_processes(&cont.to_vec(), map)?),
        },
    };
    Ok(Instr { kind, span: i.span })
}

// ---------------------------------------------------------------------------
// well-formedness

pub const BUILTINS: &[(&str, usize)] = &[
    ("add", 2),
    ("sub", 2),
    ("mul", 2),
    ("div", 2),
    ("eq", 2),
    ("lt", 2),
    ("le", 2),
    ("and", 2),
    ("or", 2),
    ("not", 1),
    ("concat", 2),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

/// Checks the structural invariants a program must satisfy before it can be
/// typed or executed: procedure bodies only mention their formals, calls
/// target defined procedures with matching arity, formals and actuals are
/// pairwise distinct, communications have distinct endpoints, functions are
/// builtins or declared externs, and no runtime marker appears in source.
pub fn validate_program(prog: &Program) -> Result<(), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut functions: BTreeMap<&str, usize> = BUILTINS.iter().copied().collect();
    for e in &prog.externs {
        match functions.get(e.name.as_str()) {
            Some(&a) if BUILTINS.iter().any(|(b, _)| *b == e.name) => diags.push(Diagnostic {
                span: Span::default(),
                message: format!("extern `{}` shadows a builtin of arity {a}", e.name),
            }),
            Some(&a) if a != e.arity => diags.push(Diagnostic {
                span: Span::default(),
                message: format!("extern `{}` declared twice with different arity", e.name),
            }),
            _ => {
                functions.insert(&e.name, e.arity);
            }
        }
    }
    let v = Validator {
        prog,
        functions,
        diags: &mut diags,
    };
    v.run();
    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}

struct Validator<'a> {
    prog: &'a Program,
    functions: BTreeMap<&'a str, usize>,
    diags: &'a mut Vec<Diagnostic>,
}

impl<'a> Validator<'a> {
    fn run(mut self) {
        for (name, def) in &self.prog.procs {
            let mut seen = BTreeSet::new();
            for f in &def.formals {
                if !seen.insert(f.as_str()) {
                    self.err(def.span, format!("procedure {name}: duplicate formal `{f}`"));
                }
            }
            if def.formals.is_empty() {
                self.err(def.span, format!("procedure {name} has no process parameters"));
            }
            let formals: BTreeSet<String> = def.formals.iter().cloned().collect();
            self.chor(&def.body, Some((name, &formals)));
        }
        self.chor(&self.prog.main, None);
    }

    fn err(&mut self, span: Span, message: String) {
        self.diags.push(Diagnostic { span, message });
    }

    fn chor(&mut self, c: &[Instr], scope: Option<(&String, &BTreeSet<String>)>) {
        for i in c {
            self.instr(i, scope);
        }
    }

    fn instr(&mut self, i: &Instr, scope: Option<(&String, &BTreeSet<String>)>) {
        if let Some((name, formals)) = scope {
            // Conditionals are checked branch by branch below.
            if !matches!(i.kind, InstrKind::Cond { .. }) {
                for p in pn_instr(i) {
                    if !formals.contains(&p) {
                        self.err(
                            i.span,
                            format!("procedure {name} mentions process `{p}` which is not a formal parameter"),
                        );
                    }
                }
            }
        }
        match &i.kind {
            InstrKind::Com { from, expr, to, .. } => {
                if from == to {
                    self.err(i.span, format!("communication from `{from}` to itself"));
                }
                self.expr(i.span, expr);
            }
            InstrKind::Sel { from, to, .. } => {
                if from == to {
                    self.err(i.span, format!("selection from `{from}` to itself"));
                }
            }
            InstrKind::Assign { expr, .. } => self.expr(i.span, expr),
            InstrKind::Cond {
                proc,
                guard,
                then_branch,
                else_branch,
            } => {
                if let Some((name, formals)) = scope {
                    if !formals.contains(proc) {
                        self.err(
                            i.span,
                            format!("procedure {name} mentions process `{proc}` which is not a formal parameter"),
                        );
                    }
                }
                self.expr(i.span, guard);
                self.chor(then_branch, scope);
                self.chor(else_branch, scope);
            }
            InstrKind::Call { name, args } => {
                match self.prog.procs.get(name) {
                    None => self.err(i.span, format!("call to undefined procedure {name}")),
                    Some(def) if def.formals.len() != args.len() => self.err(
                        i.span,
                        format!(
                            "procedure {name} expects {} process(es), got {}",
                            def.formals.len(),
                            args.len()
                        ),
                    ),
                    Some(_) => {}
                }
                let mut seen = BTreeSet::new();
                for a in args {
                    if !seen.insert(a) {
                        self.err(i.span, format!("call to {name}: process `{a}` passed twice"));
                    }
                }
            }
            InstrKind::RtCall { .. } => {
                self.err(i.span, "runtime call marker in source program".into())
            }
        }
    }

    fn expr(&mut self, span: Span, e: &Expr) {
        let mut calls = Vec::new();
        e.collect_calls(&mut calls);
        for (f, n) in calls {
            match self.functions.get(f) {
                None => self.err(span, format!("unknown function `{f}`")),
                Some(&a) if a != n => self.err(
                    span,
                    format!("function `{f}` expects {a} argument(s), got {n}"),
                ),
                Some(_) => {}
            }
        }
    }
}

// ---------------------------------------------------------------------------
// located variables

fn direct_locvars(c: &[Instr], out: &mut BTreeSet<LocVar>, calls: &mut Vec<(String, Vec<String>)>) {
    for i in c {
        match &i.kind {
            InstrKind::Com { from, expr, to, var } => {
                out.extend(expr.vars().into_iter().map(|x| LocVar::new(from.as_str(), x)));
                out.insert(LocVar::new(to.as_str(), var.as_str()));
            }
            InstrKind::Sel { .. } => {}
            InstrKind::Assign { proc, var, expr } => {
                out.extend(expr.vars().into_iter().map(|x| LocVar::new(proc.as_str(), x)));
                out.insert(LocVar::new(proc.as_str(), var.as_str()));
            }
            InstrKind::Cond {
                proc,
                guard,
                then_branch,
                else_branch,
            } => {
                out.extend(guard.vars().into_iter().map(|x| LocVar::new(proc.as_str(), x)));
                direct_locvars(then_branch, out, calls);
                direct_locvars(else_branch, out, calls);
            }
            InstrKind::Call { name, args } => calls.push((name.clone(), args.clone())),
            InstrKind::RtCall { cont, .. } => direct_locvars(&cont.to_vec(), out, calls),
        }
    }
}

fn rename_locvars<'a>(
    vars: impl IntoIterator<Item = &'a LocVar>,
    formals: &[String],
    actuals: &[String],
) -> impl Iterator<Item = LocVar> {
    let map: BTreeMap<&str, &str> = formals
        .iter()
        .map(String::as_str)
        .zip(actuals.iter().map(String::as_str))
        .collect();
    vars.into_iter()
        .filter_map(move |lv| map.get(lv.proc.as_str()).map(|p| LocVar::new(*p, lv.var.as_str())))
        .collect::<Vec<_>>()
        .into_iter()
}

/// Located variables reachable from each procedure body, in terms of that
/// procedure's formals, closed over calls.
pub fn proc_located_vars(prog: &Program) -> BTreeMap<String, BTreeSet<LocVar>> {
    let mut direct = BTreeMap::new();
    let mut calls = BTreeMap::new();
    for (name, def) in &prog.procs {
        let mut vars = BTreeSet::new();
        let mut cs = Vec::new();
        direct_locvars(&def.body, &mut vars, &mut cs);
        direct.insert(name.clone(), vars);
        calls.insert(name.clone(), cs);
    }
    let mut acc = direct;
    loop {
        let mut changed = false;
        for (name, cs) in &calls {
            let mut add = Vec::new();
            for (callee, args) in cs {
                if let (Some(def), Some(vars)) = (prog.procs.get(callee), acc.get(callee)) {
                    add.extend(rename_locvars(vars, &def.formals, args));
                }
            }
            let set = acc.get_mut(name).expect("every procedure has an entry");
            for lv in add {
                changed |= set.insert(lv);
            }
        }
        if !changed {
            return acc;
        }
    }
}

/// Every located variable that the main choreography can touch, including
/// those reached through procedure calls.
pub fn located_vars(prog: &Program) -> BTreeSet<LocVar> {
    let per_proc = proc_located_vars(prog);
    let mut out = BTreeSet::new();
    let mut calls = Vec::new();
    direct_locvars(&prog.main, &mut out, &mut calls);
    for (callee, args) in calls {
        if let (Some(def), Some(vars)) = (prog.procs.get(&callee), per_proc.get(&callee)) {
            out.extend(rename_locvars(vars, &def.formals, &args));
        }
    }
    out
}

/// True if any instruction of `c` (including nested branches) is a call.
pub fn contains_call(c: &[Instr]) -> bool {
    c.iter().any(|i| match &i.kind {
        InstrKind::Call { .. } | InstrKind::RtCall { .. } => true,
        InstrKind::Cond {
            then_branch,
            else_branch,
            ..
        } => contains_call(then_branch) || contains_call(else_branch),
        _ => false,
    })
}
