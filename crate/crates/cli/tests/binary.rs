use std::path::PathBuf;
use std::process::Command;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn chorsec(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_chorsec"))
        .args(args.iter().map(|a| {
            if a.contains('.') && !a.starts_with('-') {
                data(a).into_os_string()
            } else {
                a.into()
            }
        }))
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

#[test]
fn check_rejects_the_leaky_response() {
    let r = chorsec(&["check", "insecure.chor", "--policy", "pwreset.policy"]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stdout.contains("insecure.chor:7:5 t-com: High ⋢ Low writing r.msg"), "{}", r.stdout);
    assert!(r.stdout.ends_with("rejected: 2 error(s)\n"), "{}", r.stdout);
}

#[test]
fn check_accepts_the_uniform_response() {
    let r = chorsec(&["check", "secure.chor", "--policy", "pwreset.policy"]);
    assert_eq!((r.code, r.stdout.as_str()), (0, "accepted\n"));
}

#[test]
fn infer_prints_constraints_and_rounds() {
    let r = chorsec(&["infer", "recursive.chor", "--policy", "recursive.policy"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, "X: pc | p.c <= q.z\niterations=2\n");
    let r = chorsec(&["infer", "recursive.chor", "--policy", "recursive.policy", "--show-constraints"]);
    assert!(r.stdout.lines().any(|l| l.starts_with("main: ")), "{}", r.stdout);
}

#[test]
fn run_prints_store_then_trace() {
    let r = chorsec(&["run", "two_step.chor", "--store", "two_step.store", "--trace"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<_> = r.stdout.lines().collect();
    assert_eq!(&lines[lines.len() - 2..], ["tau@p", "com@p->q:5"]);
    assert!(r.stdout.contains("q.y = 5"), "{}", r.stdout);
}

#[test]
fn run_reports_cutoff() {
    let r = chorsec(&["run", "two_step.chor", "--store", "two_step.store", "--max-steps", "1"]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("cutoff after 1 step(s)"), "{}", r.stderr);
}

#[test]
fn nitest_is_reproducible_and_finds_the_table_leak() {
    let args = ["nitest", "insecure_db.chor", "--policy", "pwreset_db.policy", "--trials", "40", "--seed", "7"];
    let a = chorsec(&args);
    let b = chorsec(&args);
    assert_eq!(a.code, 1, "{}", a.stdout);
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.contains("VIOLATION trial="), "{}", a.stdout);
    assert!(a.stderr.starts_with("elapsed "));

    let r = chorsec(&["nitest", "secure.chor", "--policy", "pwreset.policy", "--trials", "40"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.starts_with("trials=40 passes=40 violations=0"), "{}", r.stdout);
}

#[test]
fn bad_input_exits_with_2() {
    assert_eq!(chorsec(&["check", "missing.chor", "--policy", "pwreset.policy"]).code, 2);
    assert_eq!(chorsec(&["run", "two_step.chor", "--store", "two_step.store", "--sched", "nope"]).code, 2);
    assert_eq!(chorsec(&["frobnicate"]).code, 2);
}
