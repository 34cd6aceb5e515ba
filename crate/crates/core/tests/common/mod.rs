//! Random programs and policies shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use chorsec_core::lattice::{Lattice, Policy};
use chorsec_core::runtime::Value;
use chorsec_core::syntax::{located_vars, validate_program, Choreography, Expr, Instr, LocVar, ProcDef, Program};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_PROCS: usize = 3;
pub const MAX_INSTRS: usize = 12;

const PROC_NAMES: [&str; 3] = ["X", "Y", "Z"];
const FORMALS: [&str; 3] = ["p", "q", "r"];
const MAIN_PROCS: [&str; 4] = ["a", "b", "c", "d"];
const VARS: [&str; 4] = ["x", "y", "z", "n"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn value(rng: &mut ChaCha8Rng) -> Value {
    match rng.gen_range(0..3) {
        0 => Value::Int(rng.gen_range(0..8)),
        1 => Value::Bool(rng.gen()),
        _ => Value::str(["ok", "no", "a b"].choose(rng).unwrap().to_string()),
    }
}

fn var(rng: &mut ChaCha8Rng) -> Expr {
    Expr::var(VARS.choose(rng).unwrap())
}

fn expr(rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    match rng.gen_range(0..if depth == 0 { 2 } else { 5 }) {
        0 => Expr::Const(value(rng)),
        1 => var(rng),
        2 => Expr::call("not", vec![expr(rng, depth - 1)]),
        _ => {
            let f = ["add", "sub", "eq", "lt", "and", "concat"].choose(rng).unwrap();
            Expr::call(f, vec![expr(rng, depth - 1), expr(rng, depth - 1)])
        }
    }
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    budget: usize,
    /// Procedure names with their arity.
    callees: Vec<(&'static str, usize)>,
    in_proc: bool,
}

impl Gen<'_> {
    fn chor(&mut self, procs: &[&str], len: usize, depth: usize) -> Choreography {
        let mut out = Vec::new();
        for _ in 0..len {
            if self.budget == 0 {
                break;
            }
            if let Some(i) = self.instr(procs, depth) {
                out.push(i);
            }
        }
        out
    }

    fn pick<'b>(&mut self, procs: &[&'b str]) -> &'b str {
        procs.choose(self.rng).unwrap()
    }

    fn two<'b>(&mut self, procs: &[&'b str]) -> Option<(&'b str, &'b str)> {
        if procs.len() < 2 {
            return None;
        }
        let mut v = procs.to_vec();
        v.shuffle(self.rng);
        Some((v[0], v[1]))
    }

    fn call(&mut self, procs: &[&str]) -> Option<Instr> {
        let usable: Vec<_> = self.callees.iter().filter(|(_, a)| *a <= procs.len()).copied().collect();
        let (name, arity) = *usable.choose(self.rng)?;
        let mut v = procs.to_vec();
        v.shuffle(self.rng);
        Some(Instr::call(name, &v[..arity]))
    }

    fn instr(&mut self, procs: &[&str], depth: usize) -> Option<Instr> {
        self.budget -= 1;
        let kind = self.rng.gen_range(0..11);
        let i = match kind {
            0..=2 => {
                let p = self.pick(procs);
                let e = expr(self.rng, 2);
                Instr::assign(p, VARS.choose(self.rng).unwrap(), e)
            }
            3..=5 => match self.two(procs) {
                Some((p, q)) => {
                    let e = expr(self.rng, 1);
                    Instr::com(p, e, q, VARS.choose(self.rng).unwrap())
                }
                None => Instr::assign(procs[0], "x", var(self.rng)),
            },
            6 => match self.two(procs) {
                Some((p, q)) => Instr::sel(p, q, ["L", "R"].choose(self.rng).unwrap()),
                None => Instr::assign(procs[0], "y", Expr::int(1)),
            },
            7 | 8 if depth < 2 && self.budget > 0 => {
                let p = self.pick(procs);
                let g = expr(self.rng, 1);
                let t = self.rng.gen_range(0..3);
                let e = self.rng.gen_range(0..2);
                let tb = self.chor(procs, t, depth + 1);
                let eb = self.chor(procs, e, depth + 1);
                Instr::cond(p, g, tb, eb)
            }
            _ => {
                let call = self.call(procs)?;
                if self.in_proc && self.budget >= 2 && self.rng.gen_bool(0.7) {
                    // counter-guarded so that most recursion terminates
                    self.budget -= 1;
                    let p = self.pick(procs);
                    Instr::cond(
                        p,
                        Expr::call("lt", vec![Expr::int(0), Expr::var("n")]),
                        vec![Instr::assign(p, "n", Expr::call("sub", vec![Expr::var("n"), Expr::int(1)])), call],
                        vec![],
                    )
                } else {
                    call
                }
            }
        };
        Some(i)
    }
}

/// A valid program with at most [`MAX_PROCS`] procedures and
/// [`MAX_INSTRS`] instructions in total, recursion allowed.
pub fn random_program(rng: &mut ChaCha8Rng) -> Program {
    loop {
        let n_procs = rng.gen_range(0..=MAX_PROCS);
        let arities: Vec<usize> = (0..n_procs).map(|_| rng.gen_range(1..=3)).collect();
        let callees: Vec<_> = PROC_NAMES.iter().copied().zip(arities.iter().copied()).collect();
        let mut g = Gen {
            rng,
            budget: MAX_INSTRS,
            callees,
            in_proc: true,
        };
        let mut procs = BTreeMap::new();
        for (name, arity) in g.callees.clone() {
            let formals = &FORMALS[..arity];
            let len = g.rng.gen_range(1..=4);
            let body = g.chor(formals, len, 0);
            procs.insert(name.to_string(), ProcDef::new(formals, body));
        }
        g.in_proc = false;
        let len = g.rng.gen_range(1..=4).min(g.budget.max(1));
        let main = g.chor(&MAIN_PROCS, len, 0);
        let prog = Program {
            externs: vec![],
            procs,
            main,
        };
        if validate_program(&prog).is_ok() {
            return prog;
        }
    }
}

pub fn corpus(n: usize, seed: u64) -> Vec<Program> {
    let mut r = rng(seed);
    (0..n).map(|_| random_program(&mut r)).collect()
}

pub fn lattices() -> Vec<Lattice> {
    vec![Lattice::two_point(), Lattice::diamond()]
}

/// Labels every located variable of `prog` uniformly at random; the
/// observation level is a random non-top element.
pub fn random_policy(prog: &Program, lat: &Lattice, rng: &mut ChaCha8Rng) -> Policy {
    let elems: Vec<_> = lat.elements().collect();
    let mut labels = BTreeMap::new();
    for lv in located_vars(prog) {
        labels.insert(lv, *elems.choose(rng).unwrap());
    }
    let low = elems[rng.gen_range(0..elems.len() - 1)];
    Policy::new(lat.clone(), low, labels, None)
}

/// Random labels over the given variables.
pub fn random_labels(vars: impl IntoIterator<Item = LocVar>, lat: &Lattice, rng: &mut ChaCha8Rng) -> BTreeMap<LocVar, chorsec_core::Label> {
    let elems: Vec<_> = lat.elements().collect();
    vars.into_iter().map(|lv| (lv, *elems.choose(rng).unwrap())).collect()
}
