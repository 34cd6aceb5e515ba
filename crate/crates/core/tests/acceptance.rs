//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N [PASS|FAIL] ...` line straight to stderr so the verdicts
//! show up even when libtest captures output.

mod common;

use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chorsec_core::cli::{cmd_check, cmd_infer, cmd_nitest, cmd_run, NiOptions, RunOptions};
use chorsec_core::harness::{nitest, replay};
use chorsec_core::infer::{delta_member, eval_bound, lfp, phi, universe_bound, Atom, Bound, Constraint, DeltaContext};
use chorsec_core::lattice::{Label, Lattice, Policy};
use chorsec_core::parser::{parse_chor, parse_program, pretty_print};
use chorsec_core::runtime::{enabled, run, step, CStore, Configuration, Deterministic, FunEnv, Outcome, RandomScheduler};
use chorsec_core::syntax::{contains_call, proc_located_vars, LocVar, Program};
use chorsec_core::typecheck::{check_chor, check_chor_traced, check_program, Rule};
use rand::seq::SliceRandom;
use rand::Rng;

const CRIT1_MAX: Duration = Duration::from_secs(1);
const CRIT4_PROGRAMS: usize = 200;
const CRIT4_SAMPLES: usize = 20;
const CRIT4_MAX: Duration = Duration::from_secs(60);
const NI_TRIALS: usize = 200;
const NI_MAX_STEPS: usize = 10_000;
const NI_SEED: u64 = 0;
const LFP_MAX: Duration = Duration::from_secs(1);
const MONOTONICITY_PAIRS: usize = 1000;
const CORPUS_SEED: u64 = 0x5EED;
const MAX_LATTICE: usize = 6;

fn verdict(n: u32, title: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    // one write so that parallel tests do not interleave lines
    let line = format!("criterion {n} [{tag}] {title}: {detail}\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(data(name)).unwrap()
}

fn corpus() -> Vec<Program> {
    common::corpus(CRIT4_PROGRAMS, CORPUS_SEED)
}

#[test]
fn criterion_1_password_recovery_end_to_end() {
    let start = Instant::now();
    let insecure = cmd_check(&data("insecure.chor"), &data("pwreset.policy"));
    let secure = cmd_check(&data("secure.chor"), &data("pwreset.policy"));
    let elapsed = start.elapsed();
    // line 7 is `s."email sent" -> r.msg` inside the then-branch
    let diag = "insecure.chor:7:5 t-com: High ⋢ Low writing r.msg";
    let ok = insecure.code == 1 && insecure.stdout.contains(diag) && secure.code == 0 && elapsed < CRIT1_MAX;
    verdict(
        1,
        "insecure rejected at the response, secure accepted",
        ok,
        &format!(
            "insecure exit={} secure exit={} elapsed={elapsed:?} (max {CRIT1_MAX:?}); {}",
            insecure.code,
            secure.code,
            insecure.stdout.trim_end().replace('\n', " | ")
        ),
    );
}

struct RuleCase {
    rule: Rule,
    src: &'static str,
    high_pc: bool,
    accept: bool,
    /// Rule blamed by the first error, for rejecting variants.
    blamed: Option<Rule>,
}

fn rule_cases() -> Vec<RuleCase> {
    use Rule::*;
    let case = |rule, src, high_pc, accept, blamed| RuleCase {
        rule,
        src,
        high_pc,
        accept,
        blamed,
    };
    vec![
        case(Const, "main { p.l := 5 }", false, true, None),
        case(Const, "main { if p.h then { p.l := 5 } else { } }", false, false, Some(Local)),
        case(Var, "main { p.h := l }", false, true, None),
        case(Var, "main { p.l := h }", false, false, Some(Local)),
        case(Lfun, "main { p.l := add(l, 1) }", false, true, None),
        case(Lfun, "main { p.l := add(l, h) }", false, false, Some(Local)),
        case(Local, "main { p.h := 1 }", true, true, None),
        case(Local, "main { p.l := 1 }", true, false, Some(Local)),
        case(Com, "main { p.l -> q.h }", false, true, None),
        case(Com, "main { p.h -> q.l }", false, false, Some(Com)),
        case(Sel, "main { p -> q[L] }", true, true, None),
        case(Sel, "main { if p.h then { p -> q[L]; q.l := 1 } else { } }", false, false, Some(Local)),
        case(Cond, "main { if p.h then { q.h := 1 } else { p.h := 2 } }", false, true, None),
        case(Cond, "main { if p.h then { q.h := 1 } else { q.l := 2 } }", false, false, Some(Local)),
        case(Proc, "proc W(r) { r.l := 1 } main { W(p) }", false, true, None),
        case(Proc, "proc W(r) { r.l := 1 } main { if p.h then { W(p) } else { } }", false, false, Some(Proc)),
        case(Seq, "main { p.l := 1; p.h := l }", false, true, None),
        case(Seq, "main { p.l := 1; p.l := h }", false, false, Some(Local)),
        case(Nil, "main { }", true, true, None),
        case(Nil, "main { if p.h then { } else { p.l := 1 } }", false, false, Some(Local)),
    ]
}

#[test]
fn criterion_2_rule_coverage() {
    let pol = Policy::from_names(
        Lattice::two_point(),
        "Low",
        &[("p", "h", "High"), ("p", "l", "Low"), ("q", "h", "High"), ("q", "l", "Low")],
        None,
    )
    .unwrap();
    let high = pol.lattice().label("High").unwrap();
    let mut mismatches = Vec::new();
    let cases = rule_cases();
    for c in &cases {
        let prog = parse_program(c.src).unwrap();
        let delta = lfp(&prog).unwrap().delta;
        let pc = if c.high_pc { high } else { pol.lattice().bottom() };
        let (errors, events) = check_chor_traced(&pol, &delta, pc, &prog.main).unwrap();
        let used = events.iter().any(|e| e.rule == c.rule);
        let blamed = errors.first().map(|e| e.rule);
        if !used || errors.is_empty() != c.accept || blamed != c.blamed {
            mismatches.push(format!("{} `{}`: used={used} errors={errors:?}", c.rule, c.src));
        }
    }
    let covered: std::collections::BTreeSet<_> = cases.iter().map(|c| c.rule).collect();
    let ok = mismatches.is_empty() && covered.len() == Rule::ALL.len() && cases.len() == 20;
    verdict(
        2,
        "one accepting and one rejecting program per typing rule",
        ok,
        &format!("{} verdicts, {} mismatches {mismatches:?}", cases.len(), mismatches.len()),
    );
}

struct Micro {
    name: &'static str,
    src: &'static str,
    store: CStore,
    /// Labels offered at the first step, in order.
    first_enabled: Vec<&'static str>,
    /// Deterministic trace and final store.
    det_trace: Vec<&'static str>,
    det_final: CStore,
    /// An alternative path by enabled-index, with its labels and final store.
    alt_path: Vec<usize>,
    alt_trace: Vec<&'static str>,
    alt_final: CStore,
}

fn micros() -> Vec<Micro> {
    vec![
        Micro {
            name: "local, com, sel with delay blocking",
            src: "main { p.x := add(x, 1); p.x -> q.y; p -> q[L]; r.k := 0 }",
            store: CStore::new().with("p", "x", 1),
            first_enabled: vec!["tau@p", "tau@r"],
            det_trace: vec!["tau@p", "com@p->q:2", "sel@p->q:L", "tau@r"],
            det_final: CStore::new().with("p", "x", 2).with("q", "y", 2).with("r", "k", 0),
            alt_path: vec![1, 0, 0, 0],
            alt_trace: vec!["tau@r", "tau@p", "com@p->q:2", "sel@p->q:L"],
            alt_final: CStore::new().with("p", "x", 2).with("q", "y", 2).with("r", "k", 0),
        },
        Micro {
            name: "cond-then, cond-else and delay past a conditional",
            src: "main { if p.b then { q.z := 1 } else { q.z := 2 }; r.w := 7; if r.w then { r.v := 1 } else { r.v := 2 } }",
            store: CStore::new().with("p", "b", true),
            first_enabled: vec!["then@p", "tau@r"],
            det_trace: vec!["then@p", "tau@q", "tau@r", "else@r", "tau@r"],
            det_final: CStore::new().with("p", "b", true).with("q", "z", 1).with("r", "w", 7).with("r", "v", 2),
            alt_path: vec![1, 1, 0, 0, 0],
            alt_trace: vec!["tau@r", "else@r", "then@p", "tau@q", "tau@r"],
            alt_final: CStore::new().with("p", "b", true).with("q", "z", 1).with("r", "w", 7).with("r", "v", 2),
        },
        Micro {
            name: "call-first and call-enter with two participants",
            src: "proc X(p, q) { p.v -> q.w } main { X(a, b) }",
            store: CStore::new().with("a", "v", 3),
            first_enabled: vec!["tau@a", "tau@b"],
            det_trace: vec!["tau@a", "tau@b", "com@a->b:3"],
            det_final: CStore::new().with("a", "v", 3).with("b", "w", 3),
            alt_path: vec![1, 0, 0],
            alt_trace: vec!["tau@b", "tau@a", "com@a->b:3"],
            alt_final: CStore::new().with("a", "v", 3).with("b", "w", 3),
        },
        Micro {
            name: "three-party call with markers and delay",
            src: "proc Y(p, q, r) { p.v -> q.w; r.k := 1 } main { Y(a, b, c) }",
            store: CStore::new().with("a", "v", 4),
            first_enabled: vec!["tau@a", "tau@b", "tau@c"],
            det_trace: vec!["tau@a", "tau@b", "tau@c", "com@a->b:4", "tau@c"],
            det_final: CStore::new().with("a", "v", 4).with("b", "w", 4).with("c", "k", 1),
            // c enters first; its own write may then overtake the others' entry
            alt_path: vec![2, 2, 0, 0, 0],
            alt_trace: vec!["tau@c", "tau@c", "tau@a", "tau@b", "com@a->b:4"],
            alt_final: CStore::new().with("a", "v", 4).with("b", "w", 4).with("c", "k", 1),
        },
        Micro {
            name: "delay-cond on identical branch prefixes",
            src: "main { if p.b then { q.x := 1; q.y := 1 } else { q.x := 1; q.y := 2 } }",
            store: CStore::new().with("p", "b", false),
            first_enabled: vec!["else@p", "tau@q"],
            det_trace: vec!["else@p", "tau@q", "tau@q"],
            det_final: CStore::new().with("p", "b", false).with("q", "x", 1).with("q", "y", 2),
            // after delay-cond the remaining heads differ, so only the guard can fire
            alt_path: vec![1, 0, 0],
            alt_trace: vec!["tau@q", "else@p", "tau@q"],
            alt_final: CStore::new().with("p", "b", false).with("q", "x", 1).with("q", "y", 2),
        },
    ]
}

fn walk(mut cfg: Configuration, fe: &FunEnv, path: &[usize]) -> (Vec<String>, Configuration) {
    let mut labels = Vec::new();
    for &i in path {
        let (l, next) = step(&cfg, fe, i).unwrap();
        labels.push(l.to_string());
        cfg = next;
    }
    (labels, cfg)
}

#[test]
fn criterion_3_semantics_fidelity() {
    let fe = FunEnv::builtins_only();
    let mut failures = Vec::new();
    let ms = micros();
    for m in &ms {
        let prog = parse_program(m.src).unwrap();
        let cfg = Configuration::new(prog.main, m.store.clone(), Arc::new(prog.procs));
        let first: Vec<String> = enabled(&cfg, &fe).unwrap().iter().map(|(l, _)| l.to_string()).collect();
        if first != m.first_enabled {
            failures.push(format!("{}: first enabled {first:?}", m.name));
        }
        match run(cfg.clone(), &fe, &mut Deterministic, 100) {
            Outcome::Terminated { store, trace } => {
                let t: Vec<String> = trace.iter().map(ToString::to_string).collect();
                if t != m.det_trace || store != m.det_final {
                    failures.push(format!("{}: det trace {t:?} store {store}", m.name));
                }
            }
            o => failures.push(format!("{}: det run {o:?}", m.name)),
        }
        let (t, end) = walk(cfg, &fe, &m.alt_path);
        if t != m.alt_trace || !end.is_terminated() || end.store != m.alt_final {
            failures.push(format!("{}: alt trace {t:?} store {}", m.name, end.store));
        }
    }
    // the else-branch variant of the delay-cond program must not offer tau@q early
    let diverging = Configuration::new(
        parse_chor("if p.b then { q.x := 1 } else { q.x := 2 }").unwrap(),
        CStore::new().with("p", "b", true),
        Arc::default(),
    );
    let offered: Vec<String> = enabled(&diverging, &fe).unwrap().iter().map(|(l, _)| l.to_string()).collect();
    if offered != ["then@p"] {
        failures.push(format!("differing branches offered {offered:?}"));
    }
    verdict(
        3,
        "hand-derived traces of five micro-programs",
        failures.is_empty(),
        &format!("{} programs, failures {failures:?}", ms.len()),
    );
}

/// Raises targets until every constraint of `name` holds at `pc`.
fn repair(delta: &DeltaContext, name: &str, pc: Label, pol: &Policy) -> Policy {
    let lat = pol.lattice();
    let mut labels = pol.labels().clone();
    loop {
        let cur = pol.with_labels(labels.clone());
        let mut changed = false;
        for c in delta.constraints(name).unwrap() {
            let l = eval_bound(&c.bound, &cur, pc).unwrap();
            let t = labels[&c.target];
            let j = lat.join(t, l);
            if j != t {
                labels.insert(c.target.clone(), j);
                changed = true;
            }
        }
        if !changed {
            return pol.with_labels(labels);
        }
    }
}

#[test]
fn criterion_4_generated_context_is_well_typed() {
    let start = Instant::now();
    let progs = corpus();
    let mut rng = common::rng(4);
    let mut checked = 0usize;
    let mut min_per_slot = usize::MAX;
    let mut failures = Vec::new();
    for (pi, prog) in progs.iter().enumerate() {
        let fix = lfp(prog).unwrap();
        let universe = proc_located_vars(prog);
        for lat in common::lattices() {
            for (name, def) in &prog.procs {
                let args = def.formals.clone();
                for pc in lat.elements() {
                    let mut members = 0;
                    let mut tries = 0;
                    while members < CRIT4_SAMPLES || tries < 2 * CRIT4_SAMPLES {
                        tries += 1;
                        let labels = common::random_labels(universe[name].iter().cloned(), &lat, &mut rng);
                        let raw = Policy::new(lat.clone(), lat.bottom(), labels, None);
                        // alternate repaired samples (always members) with raw ones
                        let pol = if tries % 2 == 0 { repair(&fix.delta, name, pc, &raw) } else { raw };
                        if !delta_member(&fix.delta, name, pc, &pol, &args).unwrap() {
                            continue;
                        }
                        members += 1;
                        checked += 1;
                        let errs = check_chor(&pol, &fix.delta, pc, &def.body).unwrap();
                        if !errs.is_empty() && failures.len() < 5 {
                            failures.push(format!("program {pi} {name} pc={}: {errs:?}", lat.name(pc)));
                        }
                    }
                    min_per_slot = min_per_slot.min(members);
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && progs.len() >= CRIT4_PROGRAMS && min_per_slot >= CRIT4_SAMPLES && elapsed < CRIT4_MAX;
    verdict(
        4,
        "bodies type under the inferred context for every member labelling",
        ok,
        &format!(
            "{} programs, {checked} (procedure, pc, labelling) checks, min {min_per_slot} per slot, elapsed {elapsed:?} (max {CRIT4_MAX:?}), failures {failures:?}",
            progs.len()
        ),
    );
}

fn load(name: &str, policy: &str) -> (Program, Policy) {
    let pol = chorsec_core::parse_policy(&read(policy)).unwrap();
    let mut prog = parse_program(&read(name)).unwrap();
    for e in pol.externs() {
        if !prog.externs.contains(e) {
            prog.externs.push(e.clone());
        }
    }
    (prog, pol)
}

#[test]
fn criterion_5_differential_non_interference() {
    let mut rng = common::rng(5);
    let mut well_typed = 0;
    let mut violations = Vec::new();
    let mut inconclusive = 0;
    for prog in corpus() {
        let fix = lfp(&prog).unwrap();
        for lat in common::lattices() {
            let pol = common::random_policy(&prog, &lat, &mut rng);
            if !check_program(&prog, &pol, &fix.delta).unwrap().accepted() {
                continue;
            }
            well_typed += 1;
            let rep = nitest(&prog, &pol, &fix.delta, NI_TRIALS, NI_SEED, NI_MAX_STEPS).unwrap();
            inconclusive += rep.inconclusive.len();
            if !rep.violations.is_empty() {
                violations.push(pretty_print(&prog).unwrap());
            }
        }
    }
    let (secure, pol) = load("secure.chor", "pwreset.policy");
    let fix = lfp(&secure).unwrap();
    let secure_rep = nitest(&secure, &pol, &fix.delta, NI_TRIALS, NI_SEED, NI_MAX_STEPS).unwrap();

    let (insecure, pol) = load("insecure.chor", "pwreset.policy");
    let fix = lfp(&insecure).unwrap();
    let insecure_rep = nitest(&insecure, &pol, &fix.delta, NI_TRIALS, NI_SEED, NI_MAX_STEPS).unwrap();
    let replays = insecure_rep.violations.iter().all(|w| {
        let (a, b) = replay(&insecure, w, NI_MAX_STEPS).unwrap();
        a.trace() == w.traces.0 && b.trace() == w.traces.1
    });

    let ok = violations.is_empty()
        && secure_rep.violations.is_empty()
        && !insecure_rep.violations.is_empty()
        && replays;
    verdict(
        5,
        "no violations on well-typed programs, at least one on the insecure example",
        ok,
        &format!(
            "{well_typed} well-typed corpus cases, {} with violations, {inconclusive} inconclusive trials; secure: {}; insecure: {}",
            violations.len(),
            secure_rep.summary(),
            insecure_rep.summary()
        ),
    );
}

fn random_delta_pair(prog: &Program, rng: &mut rand_chacha::ChaCha8Rng) -> (DeltaContext, DeltaContext) {
    let universe = proc_located_vars(prog);
    let mut small = DeltaContext::empty(prog);
    let mut big = DeltaContext::empty(prog);
    for (name, vars) in &universe {
        let vars: Vec<LocVar> = vars.iter().cloned().collect();
        if vars.is_empty() {
            continue;
        }
        let mut all = std::collections::BTreeSet::new();
        let mut some = std::collections::BTreeSet::new();
        for _ in 0..rng.gen_range(0..6) {
            let mut atoms: Vec<Atom> = vars
                .iter()
                .filter(|_| rng.gen_bool(0.3))
                .cloned()
                .map(Atom::Var)
                .collect();
            if rng.gen_bool(0.5) {
                atoms.push(Atom::Eta);
            }
            let c = Constraint::new(Bound::from_atoms(atoms), vars.choose(rng).unwrap().clone());
            if rng.gen_bool(0.5) {
                some.insert(c.clone());
            }
            all.insert(c);
        }
        small.set_constraints(name, some);
        big.set_constraints(name, all);
    }
    (small, big)
}

#[test]
fn criterion_6_fixed_point_behaviour() {
    let mut notes = Vec::new();
    let rec = parse_program(&read("recursive.chor")).unwrap();
    let rec_iters = lfp(&rec).unwrap().iterations;
    if rec_iters != 2 {
        notes.push(format!("recursive example took {rec_iters} rounds"));
    }
    let mut call_free = 0;
    let mut slowest = Duration::ZERO;
    let progs = corpus();
    for (i, prog) in progs.iter().enumerate() {
        let start = Instant::now();
        let fix = lfp(prog).unwrap();
        slowest = slowest.max(start.elapsed());
        if fix.iterations as u128 > universe_bound(prog) {
            notes.push(format!("program {i}: {} rounds above the bound", fix.iterations));
        }
        if phi(prog, &fix.delta).unwrap() != fix.delta {
            notes.push(format!("program {i}: not a fixed point"));
        }
        if !prog.procs.values().any(|d| contains_call(&d.body)) {
            call_free += 1;
            if fix.iterations != 1 {
                notes.push(format!("program {i}: call-free but {} rounds", fix.iterations));
            }
        }
    }
    if slowest >= LFP_MAX {
        notes.push(format!("slowest lfp {slowest:?}"));
    }
    let mut rng = common::rng(6);
    let mut pairs = 0;
    while pairs < MONOTONICITY_PAIRS {
        let prog = &progs[rng.gen_range(0..progs.len())];
        if prog.procs.is_empty() {
            continue;
        }
        let (small, big) = random_delta_pair(prog, &mut rng);
        assert!(small.is_subset_of(&big));
        if !phi(prog, &small).unwrap().is_subset_of(&phi(prog, &big).unwrap()) {
            notes.push(format!("monotonicity failed on {}", pretty_print(prog).unwrap()));
            break;
        }
        pairs += 1;
    }
    verdict(
        6,
        "iteration counts, universe bound, speed and monotonicity",
        notes.is_empty(),
        &format!(
            "recursive example {rec_iters} rounds, {call_free} call-free programs, slowest lfp {slowest:?} (max {LFP_MAX:?}), {pairs} monotone pairs, problems {notes:?}"
        ),
    );
}

/// Every order on `n` elements, up to isomorphism, as edge sets between
/// `i < j` (each finite poset has a linear extension).
fn edge_sets(n: usize) -> impl Iterator<Item = Vec<(String, String)>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    (0u64..1 << pairs.len()).map(move |mask| {
        pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, (i, j))| (i.to_string(), j.to_string()))
            .collect()
    })
}

/// Least upper bounds by brute force over the reachability relation.
fn oracle_join(n: usize, edges: &[(String, String)]) -> Option<Vec<Vec<usize>>> {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![i];
        while let Some(x) = stack.pop() {
            if row[x] {
                continue;
            }
            row[x] = true;
            for (a, b) in edges {
                if a.parse::<usize>().unwrap() == x {
                    stack.push(b.parse().unwrap());
                }
            }
        }
    }
    if !(0..n).all(|j| reach[0][j]) {
        return None;
    }
    let mut join = vec![vec![0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let ub: Vec<usize> = (0..n).filter(|&u| reach[a][u] && reach[b][u]).collect();
            let least: Vec<usize> = ub.iter().copied().filter(|&u| ub.iter().all(|&v| reach[u][v])).collect();
            match least.as_slice() {
                [l] => join[a][b] = *l,
                _ => return None,
            }
        }
    }
    Some(join)
}

fn lattice_laws(lat: &Lattice) -> Result<(), String> {
    let es: Vec<Label> = lat.elements().collect();
    for &a in &es {
        if lat.join(a, a) != a || lat.join(lat.bottom(), a) != a {
            return Err(format!("idempotence or bottom identity at {}", lat.name(a)));
        }
        for &b in &es {
            if lat.join(a, b) != lat.join(b, a) {
                return Err("commutativity".into());
            }
            if lat.leq(a, b) != (lat.join(a, b) == b) {
                return Err("leq vs join".into());
            }
            for &c in &es {
                if lat.join(a, lat.join(b, c)) != lat.join(lat.join(a, b), c) {
                    return Err("associativity".into());
                }
            }
        }
    }
    Ok(())
}

#[test]
fn criterion_7_determinism_round_trip_and_lattice_laws() {
    let mut problems = Vec::new();

    // identical invocations, identical bytes
    let pw = data("pwreset.policy");
    let rand_run = RunOptions {
        sched: "rand".into(),
        seed: 11,
        trace: true,
        ..RunOptions::default()
    };
    let twice = [
        ("check", Box::new(|| cmd_check(&data("insecure.chor"), &pw)) as Box<dyn Fn() -> _>),
        ("infer", Box::new(|| cmd_infer(&data("recursive.chor"), &data("recursive.policy"), true))),
        ("run", Box::new(|| cmd_run(&data("two_step.chor"), &data("two_step.store"), &rand_run))),
        ("nitest", Box::new(|| cmd_nitest(&data("insecure.chor"), &pw, &NiOptions::default()))),
    ];
    for (name, f) in &twice {
        let (a, b) = (f(), f());
        if a.code != b.code || a.stdout != b.stdout {
            problems.push(format!("{name} differs between runs"));
        }
    }
    let progs = corpus();
    let mut rng = common::rng(7);
    for prog in progs.iter().take(40) {
        let pol = common::random_policy(prog, &Lattice::diamond(), &mut rng);
        let delta = lfp(prog).unwrap().delta;
        let a = nitest(prog, &pol, &delta, 20, 3, 500).unwrap().to_string();
        let b = nitest(prog, &pol, &delta, 20, 3, 500).unwrap().to_string();
        let (s, _) = chorsec_core::harness::gen_store_pair(prog, &pol, 1).unwrap();
        let cfg = Configuration::new(prog.main.clone(), s, Arc::new(prog.procs.clone()));
        let fe = FunEnv::new(&prog.externs, 5).unwrap();
        let r1 = run(cfg.clone(), &fe, &mut RandomScheduler::new(9), 500);
        let r2 = run(cfg, &fe, &mut RandomScheduler::new(9), 500);
        if a != b || r1 != r2 {
            problems.push(format!("nondeterminism on {}", pretty_print(prog).unwrap()));
        }
    }

    // parse after print is the identity
    let mut round_trips = 0;
    for prog in &progs {
        match pretty_print(prog).map(|t| parse_program(&t)) {
            Ok(Ok(back)) if back == *prog => round_trips += 1,
            other => problems.push(format!("round trip failed: {other:?}")),
        }
    }

    // lattice laws, exhaustively over every order on up to MAX_LATTICE elements
    let mut lattices = 0;
    let mut rejected = 0;
    for n in 1..=MAX_LATTICE {
        let names: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        for edges in edge_sets(n) {
            let built = Lattice::new(&names, "0", &edges);
            let oracle = oracle_join(n, &edges);
            match (built, oracle) {
                (Ok(lat), Some(join)) => {
                    lattices += 1;
                    if let Err(e) = lattice_laws(&lat) {
                        problems.push(format!("{edges:?}: {e}"));
                    }
                    let agree = (0..n).all(|a| {
                        (0..n).all(|b| {
                            let (la, lb) = (lat.label(&names[a]).unwrap(), lat.label(&names[b]).unwrap());
                            lat.name(lat.join(la, lb)) == names[join[a][b]]
                        })
                    });
                    if !agree {
                        problems.push(format!("{edges:?}: join table disagrees with brute force"));
                    }
                }
                (Err(_), None) => rejected += 1,
                (b, o) => problems.push(format!("{edges:?}: built={} oracle={}", b.is_ok(), o.is_some())),
            }
            if problems.len() > 10 {
                break;
            }
        }
    }

    verdict(
        7,
        "determinism, print/parse round trip, lattice laws",
        problems.is_empty(),
        &format!(
            "{round_trips}/{} round trips, {lattices} lattices checked and {rejected} non-lattices rejected on <= {MAX_LATTICE} elements, problems {problems:?}",
            progs.len()
        ),
    );
}

/// Not a numbered criterion: the harness does catch a leak whose secret
/// actually reaches the branch, and its witness replays exactly.
#[test]
fn leak_through_a_secret_store_is_detected() {
    let (prog, pol) = load("insecure_db.chor", "pwreset_db.policy");
    let fix = lfp(&prog).unwrap();
    assert!(!check_program(&prog, &pol, &fix.delta).unwrap().accepted());
    let rep = nitest(&prog, &pol, &fix.delta, NI_TRIALS, NI_SEED, NI_MAX_STEPS).unwrap();
    assert!(!rep.violations.is_empty(), "{}", rep.summary());
    for w in &rep.violations {
        let (a, b) = replay(&prog, w, NI_MAX_STEPS).unwrap();
        assert_eq!((a.trace(), b.trace()), (&w.traces.0[..], &w.traces.1[..]));
        assert_eq!((a.store(), b.store()), (&w.finals.0, &w.finals.1));
    }
}
