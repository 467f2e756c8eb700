use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn biolab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biolab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = biolab(dir, args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn enrolled_alice() -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen-fp", "--out", "alice.btm", "--seed", "11"]);
    ok(dir.path(), &["enroll", "--db", "db", "--user", "alice", "--template", "alice.btm"]);
    dir
}

#[test]
fn match_identity() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen-fp", "--out", "a.btm", "--seed", "1"]);
    let out = ok(dir.path(), &["match", "a.btm", "a.btm"]);
    assert_eq!(out.trim(), "score=1.000000 decision=Accept");
}

#[test]
fn attack_fp_trace_best_is_nondecreasing() {
    let dir = enrolled_alice();
    let out = ok(
        dir.path(),
        &["attack-fp", "--db", "db", "--target", "alice", "--seed", "42", "--budget", "20000", "--trace", "t.csv"],
    );
    assert!(out.starts_with("outcome="), "{out}");
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("call,score,best,accepted"));
    let mut prev = 0.0;
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 4);
        assert_eq!(f[0].parse::<usize>().unwrap(), i + 1);
        let best: f64 = f[2].parse().unwrap();
        assert!(best >= prev);
        assert_eq!(f[2].split('.').nth(1).map(str::len), Some(6));
        prev = best;
        rows += 1;
    }
    assert!(rows > 0 && rows <= 20000);
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = biolab(dir.path(), &["match", "a.btm", "b.btm", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(biolab(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(biolab(dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let dir = TempDir::new().unwrap();
    assert_eq!(biolab(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_3() {
    let dir = enrolled_alice();
    let p = dir.path();
    fs::write(p.join("junk.btm"), b"BTM1\x01").unwrap();
    assert_eq!(biolab(p, &["match", "junk.btm", "alice.btm"]).status.code(), Some(3));
    assert_eq!(biolab(p, &["match", "missing.btm", "alice.btm"]).status.code(), Some(3));
    assert_eq!(biolab(p, &["attack-fp", "--db", "db", "--target", "bob"]).status.code(), Some(3));
    fs::write(p.join("bad.cfg"), "match.tau=1.5\n").unwrap();
    assert_eq!(biolab(p, &["--config", "bad.cfg", "match", "alice.btm", "alice.btm"]).status.code(), Some(3));
    fs::write(p.join("junk.pgm"), b"P6\n1 1\n255\n\0\0\0").unwrap();
    assert_eq!(biolab(p, &["extract", "--image", "junk.pgm", "--out", "x.btm"]).status.code(), Some(3));
}

#[test]
fn rate_limited_attack_exits_4() {
    let dir = enrolled_alice();
    let out = biolab(
        dir.path(),
        &["attack-fp", "--db", "db", "--target", "alice", "--policy", "full+limit(50/1)", "--trace", "t.csv"],
    );
    assert_eq!(out.status.code(), Some(4));
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 51);
    assert!(text.lines().last().unwrap().starts_with("51,,"));
}

#[test]
fn config_file_drives_defaults() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.cfg"), "# small\nseed=9\ntarget.minutiae=5\n").unwrap();
    let out = ok(dir.path(), &["--config", "c.cfg", "gen-fp", "--out", "a.btm"]);
    assert!(out.starts_with("wrote 5 minutiae"), "{out}");
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

/// Every subcommand, run in a fresh directory.
fn session(dir: &Path) -> Vec<String> {
    let steps: &[&[&str]] = &[
        &["gen-fp", "--out", "a.btm", "--seed", "5", "--image", "a.pgm"],
        &["gen-faces", "--out-dir", "faces", "--count", "6", "--seed", "5"],
        &["enroll", "--db", "db", "--user", "alice", "--template", "a.btm"],
        &["enroll", "--db", "db", "--user", "bob", "--image", "a.pgm"],
        &["match", "a.btm", "db/bob.btm"],
        &["match", "faces/face_0000.pgm", "faces/face_0001.pgm", "--faces", "faces"],
        &["reconstruct", "--template", "a.btm", "--out", "r.pgm", "--seed", "2"],
        &["attack-fp", "--db", "db", "--target", "alice", "--seed", "3", "--trace", "fp.csv", "--out", "fp.btm"],
        &["attack-timing", "--db", "db", "--target", "alice", "--seed", "3", "--budget", "2000", "--trace", "tm.csv"],
        &["attack-face", "--seed", "3", "--i-max", "200", "--policy", "quantized(0.05)", "--trace", "fa.csv", "--out", "fa.pgm"],
        &["eval-defenses", "--out", "report.csv", "--trials", "2", "--seed", "4", "--attacks", "fingerprint", "--policies", "full,jittered"],
        &["extract", "--image", "r.pgm", "--out", "x.btm"],
        &["obliterate", "--image", "r.pgm", "--out", "o.pgm", "--seed", "6", "--scar", "120,140,25,scramble", "--scar", "60,60,10,erase"],
    ];
    steps.iter().map(|s| ok(dir, s)).collect()
}

#[test]
fn fixed_seed_runs_are_bit_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let out_a = session(a.path());
    let out_b = session(b.path());
    assert_eq!(out_a, out_b);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(sa.len() >= 19, "{} files", sa.len());
    assert_eq!(sa, sb);
}
