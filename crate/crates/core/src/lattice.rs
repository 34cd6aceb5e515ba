//! Finite security lattices, flow policies and low-equivalence of stores.
//!
//! A lattice here is a finite partial order with a bottom element in which
//! every pair of elements has a unique least upper bound. That is all the
//! type system and the constraint solver ever use.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::runtime::{CStore, ValueType};
use crate::syntax::{ExternDecl, LocVar};

/// An element of a particular [`Lattice`], by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(usize);

impl Label {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice has no elements")]
    Empty,
    #[error("duplicate element {0}")]
    DuplicateElement(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("order has a cycle between distinct elements {0} and {1}")]
    Cycle(String, String),
    #[error("missing bottom")]
    MissingBottom,
    #[error("bottom not below {0}")]
    BottomNotBelow(String),
    #[error("no unique join for {0} and {1}")]
    NoJoin(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    names: Vec<String>,
    index: HashMap<String, usize>,
    bottom: usize,
    leq: Vec<Vec<bool>>,
    join: Vec<Vec<usize>>,
}

impl Lattice {
    /// Builds a lattice from its elements, bottom and the covering `leq`
    /// edges; the order is the reflexive-transitive closure of the edges.
    pub fn new<S: AsRef<str>>(
        elements: &[S],
        bottom: &str,
        edges: &[(S, S)],
    ) -> Result<Self, LatticeError> {
        if elements.is_empty() {
            return Err(LatticeError::Empty);
        }
        let mut names = Vec::with_capacity(elements.len());
        let mut index = HashMap::new();
        for e in elements {
            let e = e.as_ref();
            if index.insert(e.to_string(), names.len()).is_some() {
                return Err(LatticeError::DuplicateElement(e.to_string()));
            }
            names.push(e.to_string());
        }
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| LatticeError::UnknownLabel(n.to_string()))
        };
        let n = names.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for (a, b) in edges {
            leq[lookup(a.as_ref())?][lookup(b.as_ref())?] = true;
        }
        // Floyd-Warshall closure.
        for k in 0..n {
            let via = leq[k].clone();
            for row in leq.iter_mut().filter(|row| row[k]) {
                for (cell, &v) in row.iter_mut().zip(&via) {
                    *cell |= v;
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if leq[i][j] && leq[j][i] {
                    return Err(LatticeError::Cycle(names[i].clone(), names[j].clone()));
                }
            }
        }
        let bottom = lookup(bottom)?;
        if let Some(j) = (0..n).find(|&j| !leq[bottom][j]) {
            return Err(LatticeError::BottomNotBelow(names[j].clone()));
        }
        let mut join = vec![vec![0; n]; n];
        for a in 0..n {
            for b in a..n {
                let ub: Vec<usize> = (0..n).filter(|&u| leq[a][u] && leq[b][u]).collect();
                let minimal: Vec<usize> = ub
                    .iter()
                    .copied()
                    .filter(|&u| !ub.iter().any(|&v| v != u && leq[v][u]))
                    .collect();
                match minimal.as_slice() {
                    [j] => {
                        join[a][b] = *j;
                        join[b][a] = *j;
                    }
                    _ => return Err(LatticeError::NoJoin(names[a].clone(), names[b].clone())),
                }
            }
        }
        Ok(Self {
            names,
            index,
            bottom,
            leq,
            join,
        })
    }

    /// A totally ordered lattice, least element first.
    pub fn chain<S: AsRef<str>>(elements: &[S]) -> Result<Self, LatticeError> {
        let edges: Vec<(&str, &str)> = elements
            .windows(2)
            .map(|w| (w[0].as_ref(), w[1].as_ref()))
            .collect();
        let elems: Vec<&str> = elements.iter().map(AsRef::as_ref).collect();
        let bottom = elems.first().copied().ok_or(LatticeError::Empty)?;
        Lattice::new(&elems, bottom, &edges)
    }

    /// `Low ⊑ High`.
    pub fn two_point() -> Self {
        Lattice::chain(&["Low", "High"]).expect("two-point chain is a lattice")
    }

    /// `Low ⊑ A, Low ⊑ B, A ⊑ Top, B ⊑ Top`.
    pub fn diamond() -> Self {
        Lattice::new(
            &["Low", "A", "B", "Top"],
            "Low",
            &[("Low", "A"), ("Low", "B"), ("A", "Top"), ("B", "Top")],
        )
        .expect("diamond is a lattice")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.names.len()).map(Label)
    }

    pub fn bottom(&self) -> Label {
        Label(self.bottom)
    }

    pub fn label(&self, name: &str) -> Result<Label, LatticeError> {
        self.index
            .get(name)
            .map(|&i| Label(i))
            .ok_or_else(|| LatticeError::UnknownLabel(name.to_string()))
    }

    pub fn name(&self, l: Label) -> &str {
        &self.names[l.0]
    }

    pub fn leq(&self, a: Label, b: Label) -> bool {
        self.leq[a.0][b.0]
    }

    pub fn join(&self, a: Label, b: Label) -> Label {
        Label(self.join[a.0][b.0])
    }

    /// Join of any number of labels; the empty join is bottom.
    pub fn join_all(&self, labels: impl IntoIterator<Item = Label>) -> Label {
        labels
            .into_iter()
            .fold(self.bottom(), |acc, l| self.join(acc, l))
    }

    pub fn leq_named(&self, a: &str, b: &str) -> Result<bool, LatticeError> {
        Ok(self.leq(self.label(a)?, self.label(b)?))
    }

    pub fn join_named(&self, a: &str, b: &str) -> Result<&str, LatticeError> {
        Ok(self.name(self.join(self.label(a)?, self.label(b)?)))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("policy line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("policy line {line}: {source}")]
    Lattice { line: usize, source: LatticeError },
    #[error(transparent)]
    Invalid(#[from] LatticeError),
    #[error("policy: {0}")]
    Missing(&'static str),
    #[error("unlabelled variable {0} and no default label")]
    Unlabelled(LocVar),
    #[error("stores have different domains")]
    DomainMismatch,
}

/// A flow policy: lattice, observation level `low` and the labelling Γ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    lattice: Lattice,
    low: Label,
    labels: BTreeMap<LocVar, Label>,
    default: Option<Label>,
    externs: Vec<ExternDecl>,
}

impl Policy {
    pub fn new(
        lattice: Lattice,
        low: Label,
        labels: BTreeMap<LocVar, Label>,
        default: Option<Label>,
    ) -> Self {
        Self {
            lattice,
            low,
            labels,
            default,
            externs: Vec::new(),
        }
    }

    /// Builds a policy from label names; handy in tests.
    pub fn from_names(
        lattice: Lattice,
        low: &str,
        labels: &[(&str, &str, &str)],
        default: Option<&str>,
    ) -> Result<Self, LatticeError> {
        let low = lattice.label(low)?;
        let mut map = BTreeMap::new();
        for (p, x, l) in labels {
            map.insert(LocVar::new(*p, *x), lattice.label(l)?);
        }
        let default = default.map(|d| lattice.label(d)).transpose()?;
        Ok(Self::new(lattice, low, map, default))
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn low(&self) -> Label {
        self.low
    }

    pub fn labels(&self) -> &BTreeMap<LocVar, Label> {
        &self.labels
    }

    pub fn default_label(&self) -> Option<Label> {
        self.default
    }

    pub fn externs(&self) -> &[ExternDecl] {
        &self.externs
    }

    /// The same policy with a different labelling.
    pub fn with_labels(&self, labels: BTreeMap<LocVar, Label>) -> Self {
        Self {
            labels,
            ..self.clone()
        }
    }

    /// Γ p.x: the declared label, else the default, else an error.
    pub fn label_of(&self, p: &str, x: &str) -> Result<Label, PolicyError> {
        let lv = LocVar::new(p, x);
        match self.labels.get(&lv) {
            Some(&l) => Ok(l),
            None => self.default.ok_or(PolicyError::Unlabelled(lv)),
        }
    }

    pub fn is_observable(&self, l: Label) -> bool {
        self.lattice.leq(l, self.low)
    }

    /// `Σ₁ ≡_low Σ₂`: agreement on every located variable labelled ⊑ low.
    pub fn low_equiv(&self, s1: &CStore, s2: &CStore) -> Result<bool, PolicyError> {
        if s1.len() != s2.len() {
            return Err(PolicyError::DomainMismatch);
        }
        for ((lv1, v1), (lv2, v2)) in s1.iter().zip(s2.iter()) {
            if lv1 != lv2 {
                return Err(PolicyError::DomainMismatch);
            }
            if self.is_observable(self.label_of(&lv1.proc, &lv1.var)?) && v1 != v2 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Parses the line-oriented policy format:
///
/// ```text
/// element Low
/// element High
/// bottom Low
/// leq Low High
/// low Low
/// label s.email High
/// default Low
/// extern exists 1 bool
/// ```
pub fn parse_policy(text: &str) -> Result<Policy, PolicyError> {
    let mut elements: Vec<(usize, String)> = Vec::new();
    let mut edges: Vec<(usize, String, String)> = Vec::new();
    let mut bottom: Option<(usize, String)> = None;
    let mut low: Option<(usize, String)> = None;
    let mut default: Option<(usize, String)> = None;
    let mut labels: Vec<(usize, LocVar, String)> = Vec::new();
    let mut externs = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let syntax = |message: String| PolicyError::Syntax { line, message };
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some((&kw, args)) = toks.split_first() else {
            continue;
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(format!("`{kw}` takes {n} argument(s), got {}", args.len())))
            }
        };
        let once = |slot: &Option<(usize, String)>| match slot {
            Some((prev, _)) => Err(syntax(format!("duplicate `{kw}` (first on line {prev})"))),
            None => Ok(()),
        };
        match kw {
            "element" => {
                arity(1)?;
                elements.push((line, args[0].to_string()));
            }
            "bottom" => {
                arity(1)?;
                once(&bottom)?;
                bottom = Some((line, args[0].to_string()));
            }
            "leq" => {
                arity(2)?;
                edges.push((line, args[0].to_string(), args[1].to_string()));
            }
            "low" => {
                arity(1)?;
                once(&low)?;
                low = Some((line, args[0].to_string()));
            }
            "default" => {
                arity(1)?;
                once(&default)?;
                default = Some((line, args[0].to_string()));
            }
            "label" => {
                arity(2)?;
                let (p, x) = args[0]
                    .split_once('.')
                    .filter(|(p, x)| !p.is_empty() && !x.is_empty())
                    .ok_or_else(|| syntax(format!("expected PROC.VAR, found `{}`", args[0])))?;
                let lv = LocVar::new(p, x);
                if labels.iter().any(|(_, l, _)| *l == lv) {
                    return Err(syntax(format!("duplicate label for {lv}")));
                }
                labels.push((line, lv, args[1].to_string()));
            }
            "extern" => {
                arity(3)?;
                let arity: usize = args[1]
                    .parse()
                    .map_err(|_| syntax(format!("invalid arity `{}`", args[1])))?;
                let ret: ValueType = args[2].parse().map_err(syntax)?;
                externs.push(ExternDecl {
                    name: args[0].to_string(),
                    arity,
                    ret,
                });
            }
            other => return Err(syntax(format!("unknown directive `{other}`"))),
        }
    }

    for (k, (line, e)) in elements.iter().enumerate() {
        if elements[..k].iter().any(|(_, f)| f == e) {
            return Err(PolicyError::Lattice {
                line: *line,
                source: LatticeError::DuplicateElement(e.clone()),
            });
        }
    }
    let known = |line: usize, name: &str| {
        if elements.iter().any(|(_, e)| e == name) {
            Ok(())
        } else {
            Err(PolicyError::Lattice {
                line,
                source: LatticeError::UnknownLabel(name.to_string()),
            })
        }
    };
    for (line, a, b) in &edges {
        known(*line, a)?;
        known(*line, b)?;
    }
    let (bline, bname) = bottom.ok_or(PolicyError::Invalid(LatticeError::MissingBottom))?;
    known(bline, &bname)?;
    let names: Vec<&str> = elements.iter().map(|(_, e)| e.as_str()).collect();
    let edge_names: Vec<(&str, &str)> = edges
        .iter()
        .map(|(_, a, b)| (a.as_str(), b.as_str()))
        .collect();
    let lattice = Lattice::new(&names, &bname, &edge_names)?;

    let (lline, lname) = low.ok_or(PolicyError::Missing("missing `low`"))?;
    known(lline, &lname)?;
    let low = lattice.label(&lname)?;
    let mut map = BTreeMap::new();
    for (line, lv, l) in labels {
        known(line, &l)?;
        map.insert(lv, lattice.label(&l)?);
    }
    let default = match default {
        Some((line, d)) => {
            known(line, &d)?;
            Some(lattice.label(&d)?)
        }
        None => None,
    };
    let mut policy = Policy::new(lattice, low, map, default);
    policy.externs = externs;
    Ok(policy)
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lat = &self.lattice;
        for l in lat.elements() {
            writeln!(f, "element {}", lat.name(l))?;
        }
        writeln!(f, "bottom {}", lat.name(lat.bottom()))?;
        for a in lat.elements() {
            for b in lat.elements() {
                if a != b && lat.leq(a, b) {
                    writeln!(f, "leq {} {}", lat.name(a), lat.name(b))?;
                }
            }
        }
        writeln!(f, "low {}", lat.name(self.low))?;
        for (lv, l) in &self.labels {
            writeln!(f, "label {lv} {}", lat.name(*l))?;
        }
        if let Some(d) = self.default {
            writeln!(f, "default {}", lat.name(d))?;
        }
        for e in &self.externs {
            writeln!(f, "extern {} {} {}", e.name, e.arity, e.ret)?;
        }
        Ok(())
    }
}
