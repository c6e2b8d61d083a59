//! Runs the criteria suite through the CLI twice, prints one PASS/FAIL line
//! per criterion and checks that every CSV is bit-identical across runs.
//!
//! Positivity of the second variation (criterion 5) is known not to hold
//! on full-turn data; it is reported as FAIL and does not fail the target.
//! Any other failure does.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus};

const BIN: &str = env!("CARGO_BIN_EXE_wfvar");
const KNOWN_FAILURES: [usize; 1] = [5];
const RUNTIME_LIMITS: [Option<f64>; 9] =
    [Some(1.0), Some(10.0), Some(120.0), Some(120.0), Some(600.0), Some(60.0), Some(300.0), Some(600.0), None];

fn wfvar(args: &[&str], out: &Path) -> ExitStatus {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env("WFVAR_THREADS", "4")
        .status()
        .expect("run wfvar")
}

/// Small configurations of every command; each list is one CLI call.
fn command_runs() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("circular", vec!["circular", "--r12", "100", "--arc", "6.2832", "--nodes_per_turn", "64"]),
        ("action", vec!["action", "--nodes_per_turn", "64"]),
        ("residual", vec!["residual", "--nodes_per_turn", "64"]),
        ("grid", vec!["grid", "--nodes_per_turn", "64"]),
        ("hessian", vec!["hessian", "--nodes_per_turn", "64", "--arc", "3.14159"]),
        ("scan", vec!["scan", "--nodes_per_turn", "64", "--scan_r", "1000,100"]),
        ("solve", vec!["solve", "--nodes_per_turn", "64", "--arc", "2.5", "--perturb", "1e-3", "--seed", "4"]),
        ("invariants", vec!["invariants", "--nodes_per_turn", "128"]),
    ]
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).expect("read output dir").flatten() {
        let p = e.path();
        if p.extension().is_some_and(|x| x == "csv") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
        }
    }
    out
}

fn manifest(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn run_all(root: &Path) -> (Vec<PathBuf>, Vec<String>) {
    let mut dirs = Vec::new();
    let mut problems = Vec::new();
    let accept = root.join("accept");
    let st = wfvar(&["accept", "--seed", "1"], &accept);
    // criteria failures give exit 1; anything else is a crash
    if !matches!(st.code(), Some(0 | 1)) {
        problems.push(format!("accept exited with {st}"));
    }
    dirs.push(accept);
    for (name, args) in command_runs() {
        let d = root.join(name);
        let st = wfvar(&args, &d);
        if !st.success() {
            problems.push(format!("{name} exited with {st}"));
        }
        dirs.push(d);
    }
    (dirs, problems)
}

fn main() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = fs::remove_dir_all(&root);
    let (first, mut problems) = run_all(&root.join("run1"));
    let (second, p2) = run_all(&root.join("run2"));
    problems.extend(p2);

    // forced non-convergence maps to exit code 3
    let st = wfvar(&["solve", "--nodes_per_turn", "64", "--arc", "2.5", "--perturb", "1e-3", "--max_iters", "0"], &root.join("forced"));
    if st.code() != Some(3) {
        problems.push(format!("solve with max_iters 0 exited with {st}, expected 3"));
    }

    let status: BTreeMap<usize, String> = fs::read_to_string(first[0].join("criteria.csv"))
        .unwrap_or_default()
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Some((f.first()?.parse().ok()?, f.get(2)?.to_string()))
        })
        .collect();
    let times = manifest(&first[0].join("manifest_accept.txt"));
    let mut lines = Vec::new();
    for id in 1..=9 {
        let numeric = status.get(&id).map(String::as_str) == Some("PASS");
        let secs: f64 = times.get(&format!("criterion_{id}.seconds")).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN);
        let in_time = RUNTIME_LIMITS[id - 1].is_none_or(|lim| secs < lim);
        let pass = numeric && in_time;
        let detail = if numeric && !in_time { " (over runtime limit)" } else { "" };
        lines.push((id, pass, format!("{secs:.1} s{detail}")));
    }

    let mut mismatched = Vec::new();
    let mut compared = 0;
    for (a, b) in first.iter().zip(&second) {
        let (fa, fb) = (csv_files(a), csv_files(b));
        if fa.keys().ne(fb.keys()) {
            mismatched.push(format!("{}: different file sets", a.display()));
        }
        for (name, bytes) in &fa {
            compared += 1;
            if fb.get(name) != Some(bytes) {
                mismatched.push(format!("{}/{name}", a.file_name().unwrap().to_string_lossy()));
            }
        }
    }
    let det = mismatched.is_empty() && problems.is_empty() && compared > 0;
    lines.push((10, det, format!("{compared} CSV files compared")));

    let mut unexpected = Vec::new();
    for (id, pass, detail) in &lines {
        println!("criterion {id:>2}: {} [{detail}]", if *pass { "PASS" } else { "FAIL" });
        if !pass && !KNOWN_FAILURES.contains(id) {
            unexpected.push(*id);
        }
    }
    for p in problems.iter().chain(&mismatched) {
        println!("  problem: {p}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
    let known: Vec<usize> = lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    if !known.is_empty() {
        println!("known failures (documented): {known:?}");
    }
}
