//! Acceptance criteria. Prints one PASS/FAIL line per criterion and a tally.
//! The binary exits 0 either way so the rest of the suite still runs; the
//! printed lines are the verdict.

use std::f64::consts::{FRAC_PI_8, PI, TAU};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use biolab::analysis::{crossing_number, extract_minutiae, ExtractParams};
use biolab::attack::{attack_face, attack_fp, AttackTrace, FaceAttackConfig, FaceOracle, FpAttackConfig, FpOracle};
use biolab::defense::{
    evaluate_defenses, jitter_score, AttackKind, Defended, DefensePolicy, FaceSetup, RateLimit, Scenario, Visibility,
};
use biolab::face::FaceCoefficients;
use biolab::generate::random_template;
use biolab::harness::{decode_pgm, encode_pgm};
use biolab::matcher::{compare_minutiae, pair_minutiae, MatchParams};
use biolab::model::{decide, ridge_angle_diff, GrayImage, MatchScore, Minutia, MinutiaKind, MinutiaeTemplate, Seed};
use biolab::par;
use biolab::sidechannel::{spearman, timed_compare, TimingModel};
use biolab::synthesis::{reconstruct, SynthesisParams};
use biolab::template_io::{parse_template, quantized, serialize_template};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

const DIMS: (u32, u32) = (256, 288);
const MASTER: Seed = Seed(42);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(t0: Instant, secs: f64) -> (bool, String) {
    let e = t0.elapsed().as_secs_f64();
    (e <= secs, format!("{e:.1}s of {secs:.0}s"))
}

fn ac1_face_quantization() -> Verdict {
    let t0 = Instant::now();
    let sc = Scenario::default();
    let setup = FaceSetup::new(&sc, Seed(1)).expect("face setup");
    let policies = [
        DefensePolicy::FULL,
        DefensePolicy::visible(Visibility::Quantized(0.05)),
        DefensePolicy::visible(Visibility::Quantized(0.1)),
    ];
    let cfg = FaceAttackConfig::default();
    let finals = par::map_range(30, |j| {
        let (p, i) = (policies[j / 10], (j % 10) as u64);
        let trial = Seed(9).derive(i);
        let target = setup.target(trial.derive(0));
        let inner = FaceOracle::new(&setup.model, &target, sc.face_tau).unwrap();
        let mut o = Defended::new(inner, p, sc.face_tau, trial.derive(2)).unwrap();
        let (img, _) = attack_face(&mut o, &setup.db, &setup.model, &cfg, trial.derive(1)).unwrap();
        setup.model.compare(&img, &target).unwrap().value()
    });
    let count = |k: usize, bar: f64| finals[10 * k..10 * (k + 1)].iter().filter(|&&s| s >= bar).count();
    let (full, q05, q10) = (count(0, 0.95), count(1, 0.85), count(2, 0.85));
    let range = |k: usize| {
        let s = &finals[10 * k..10 * (k + 1)];
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(0.0, f64::max);
        format!("{lo:.3}..{hi:.3}")
    };
    let (fast, time) = within(t0, 60.0);
    verdict(
        full >= 9 && q05 >= 7 && q10 >= 7 && fast,
        format!(
            "full {full}/10 >= 0.95 [{}], quantized(0.05) {q05}/10 >= 0.85 [{}], quantized(0.1) {q10}/10 >= 0.85 [{}], {time}",
            range(0),
            range(1),
            range(2)
        ),
    )
}

fn fp_cell(policy: DefensePolicy, attack: AttackKind) -> biolab::defense::ReportCell {
    let r = evaluate_defenses(&[attack], &[policy], 20, &Scenario::default(), MASTER).expect("evaluation");
    r.cells.into_iter().next().expect("one cell")
}

fn median_text(c: &biolab::defense::ReportCell) -> String {
    c.median_calls.map_or("-".into(), |m| format!("{m}"))
}

fn ac2_minutiae_climb() -> Verdict {
    let t0 = Instant::now();
    let c = fp_cell(DefensePolicy::FULL, AttackKind::Fingerprint(FpAttackConfig::default()));
    let (fast, time) = within(t0, 60.0);
    verdict(
        c.successes >= 16 && fast,
        format!("succeeded {}/20, median calls {}, {time}", c.successes, median_text(&c)),
    )
}

/// Share of `source` minutiae with an extracted minutia within 8 px and π/8 of direction.
fn recovery(source: &MinutiaeTemplate, found: &MinutiaeTemplate) -> f64 {
    let hit = |m: &Minutia| {
        found.minutiae().iter().any(|f| {
            let d = ((m.x as f64 - f.x as f64).powi(2) + (m.y as f64 - f.y as f64).powi(2)).sqrt();
            let dt = (m.theta - f.theta).rem_euclid(TAU);
            d <= 8.0 && dt.min(TAU - dt) <= FRAC_PI_8
        })
    };
    source.minutiae().iter().filter(|m| hit(m)).count() as f64 / source.len() as f64
}

fn ac3_reconstruction_loop() -> Verdict {
    let t0 = Instant::now();
    let results = par::map_range(10, |i| {
        let t = random_template(Seed(300 + i as u64), 25, DIMS.0, DIMS.1);
        let img = reconstruct(&t, &SynthesisParams::default(), Seed(400 + i as u64)).unwrap();
        let found = extract_minutiae(&img, &ExtractParams::default()).unwrap();
        (compare_minutiae(&found, &t, &MatchParams::default()).value(), recovery(&t, &found))
    });
    let scores = results.iter().filter(|r| r.0 >= 0.6).count();
    let recovered = results.iter().filter(|r| r.1 >= 0.6).count();
    let mean = results.iter().map(|r| r.0).sum::<f64>() / 10.0;
    let rec_lo = results.iter().map(|r| r.1).fold(1.0, f64::min);
    let (fast, time) = within(t0, 100.0);
    verdict(
        scores >= 7 && recovered >= 7 && fast,
        format!("compare >= 0.6 on {scores}/10 (mean {mean:.3}), recovery >= 60% on {recovered}/10 (min {:.0}%), {time}", rec_lo * 100.0),
    )
}

fn ac4_rate_limit() -> Verdict {
    let policy = DefensePolicy {
        visibility: Visibility::Full,
        rate_limit: Some(RateLimit { budget: 500, epoch: 1 }),
    };
    let c = fp_cell(policy, AttackKind::Fingerprint(FpAttackConfig::default()));
    verdict(
        c.successes == 0,
        format!("succeeded {}/20 under {policy}, blocked {}/20", c.successes, c.histogram[3]),
    )
}

fn ac5_jitter() -> Verdict {
    let mut rng = Seed(5).rng();
    let mut flips = 0;
    for _ in 0..10_000 {
        let (s, tau) = (MatchScore::new(rng.random_range(0.0..=1.0)), rng.random_range(0.0..=1.0));
        if decide(jitter_score(s, tau, &mut rng), tau) != decide(s, tau) {
            flips += 1;
        }
    }
    let attack = || AttackKind::Fingerprint(FpAttackConfig::default());
    let full = fp_cell(DefensePolicy::FULL, attack());
    let jit = fp_cell(DefensePolicy::visible(Visibility::Jittered), attack());
    let dropped = jit.successes as f64 <= 0.5 * full.successes as f64;
    verdict(
        flips == 0 && dropped && full.successes > 0,
        format!("{flips} flips in 10^4 pairs; success full {}/20 vs jittered {}/20", full.successes, jit.successes),
    )
}

/// A noisy impression of `t`: jittered positions and angles, dropped and extra minutiae.
fn probe_of(t: &MinutiaeTemplate, rng: &mut biolab::model::Rng) -> MinutiaeTemplate {
    let sigma: f64 = rng.random_range(0.0..24.0);
    let pos = Normal::new(0.0, sigma.max(1e-9)).unwrap();
    let ang = Normal::new(0.0, (sigma / 24.0 * PI / 4.0).max(1e-9)).unwrap();
    let drop = rng.random_range(0.0..0.5);
    let mut out = MinutiaeTemplate::new(t.width(), t.height(), t.resolution());
    for m in t.minutiae() {
        if rng.random_bool(drop) {
            continue;
        }
        let x = (m.x as f64 + pos.sample(rng)).round().clamp(0.0, t.width() as f64 - 1.0) as u32;
        let y = (m.y as f64 + pos.sample(rng)).round().clamp(0.0, t.height() as f64 - 1.0) as u32;
        let theta = (m.theta + ang.sample(rng)).rem_euclid(TAU) % TAU;
        out.push(Minutia::new(x, y, theta, m.kind)).unwrap();
    }
    for _ in 0..rng.random_range(0..=6) {
        let kind = if rng.random_bool(0.5) { MinutiaKind::Termination } else { MinutiaKind::Bifurcation };
        let m = Minutia::new(
            rng.random_range(0..t.width()),
            rng.random_range(0..t.height()),
            rng.random_range(0.0..TAU),
            kind,
        );
        out.push(m).unwrap();
    }
    out
}

fn ac6_timing() -> Verdict {
    let p = MatchParams::default();
    let model = TimingModel::default();
    let t = random_template(Seed(600), 12, DIMS.0, DIMS.1);
    let mut rng = Seed(601).rng();
    let (mut work, mut hidden) = (Vec::new(), Vec::new());
    for i in 0..1000 {
        let probe = probe_of(&t, &mut rng);
        work.push(timed_compare(&probe, &t, &p, &model, Seed(602).derive(i as u64)).work_units as f64);
        hidden.push(compare_minutiae(&probe, &t, &p).value());
    }
    let rho = spearman(&work, &hidden).unwrap_or(0.0);
    let hidden_policy = DefensePolicy::visible(Visibility::Hidden);
    let leaky = fp_cell(hidden_policy, AttackKind::Timing(Default::default(), model));
    let hardened = fp_cell(hidden_policy, AttackKind::Timing(Default::default(), model.hardened()));
    verdict(
        rho >= 0.8 && leaky.successes >= 10 && hardened.successes <= 2,
        format!(
            "spearman {rho:.3} over 1000 probes of one target; timing attack {}/20 (outcomes {:?}); constant-time {}/20",
            leaky.successes, leaky.histogram, hardened.successes
        ),
    )
}

fn monotone(t: &AttackTrace) -> bool {
    t.entries.windows(2).all(|w| w[1].best >= w[0].best && w[1].call == w[0].call + 1)
}

/// Best total weight over every one-to-one assignment, by recursion over `a`.
fn optimal_weight(a: &[Minutia], b: &[Minutia], used: &mut Vec<bool>, p: &MatchParams) -> f64 {
    let Some((first, rest)) = a.split_first() else {
        return 0.0;
    };
    let mut best = optimal_weight(rest, b, used, p);
    for j in 0..b.len() {
        if used[j] {
            continue;
        }
        if let Some((d, dt)) = p.eligible(first, &b[j]) {
            used[j] = true;
            best = best.max(p.weight(d, dt) + optimal_weight(rest, b, used, p));
            used[j] = false;
        }
    }
    best
}

fn small_template(rng: &mut biolab::model::Rng, n: usize) -> MinutiaeTemplate {
    let ms = (0..n)
        .map(|_| {
            let kind = if rng.random_bool(0.5) { MinutiaKind::Termination } else { MinutiaKind::Bifurcation };
            Minutia::new(rng.random_range(0..30), rng.random_range(0..30), rng.random_range(0.0..TAU), kind)
        })
        .collect();
    MinutiaeTemplate::with_minutiae(30, 30, 500, ms).unwrap()
}

fn ac7_invariants() -> Verdict {
    let mut failed = Vec::new();
    let p = MatchParams::default();

    let cfg = FpAttackConfig {
        max_oracle_calls: 1000,
        ..FpAttackConfig::default()
    };
    let runs = par::map_range(100, |i| {
        let t = random_template(Seed(700 + i as u64), 12, DIMS.0, DIMS.1);
        let mut o = FpOracle::new(t, p);
        let (_, tr) = attack_fp(&mut o, &cfg, DIMS, Seed(800 + i as u64)).unwrap();
        monotone(&tr) && tr.len() as u64 == biolab::attack::ScoreOracle::calls(&o)
    });
    if !runs.iter().all(|&ok| ok) {
        failed.push("trace monotonicity");
    }

    let mut rng = Seed(71).rng();
    let pairs_ok = (0..500).all(|_| {
        let (na, nb) = (rng.random_range(1..25), rng.random_range(0..25));
        let a = random_template(Seed(rng.random()), na, 128, 128);
        let b = random_template(Seed(rng.random()), nb, 128, 128);
        let ab = compare_minutiae(&a, &b, &p).value();
        let ba = compare_minutiae(&b, &a, &p).value();
        (ab - ba).abs() < 1e-12 && (0.0..=1.0).contains(&ab) && compare_minutiae(&a, &a, &p).value() == 1.0
    });
    if !pairs_ok {
        failed.push("matcher symmetry/identity/bounds");
    }

    let mut rng = Seed(72).rng();
    let mut gap: f64 = 0.0;
    let greedy_ok = (0..300).all(|_| {
        let (na, nb) = (rng.random_range(0..=6), rng.random_range(0..=6));
        let (a, b) = (small_template(&mut rng, na), small_template(&mut rng, nb));
        let greedy = pair_minutiae(&a, &b, &p).total_weight(&p);
        let opt = optimal_weight(a.minutiae(), b.minutiae(), &mut vec![false; nb], &p);
        gap = gap.max((opt - greedy) / na.max(nb).max(1) as f64);
        greedy <= opt + 1e-9
    });
    if !greedy_ok || gap > 0.15 {
        failed.push("greedy vs exhaustive");
    }

    let cn_ok = (0..256u32).all(|bits| {
        let ring: [bool; 8] = std::array::from_fn(|k| bits >> k & 1 == 1);
        // count runs of set bits around the ring
        let runs = (0..8).filter(|&k| ring[k] && !ring[(k + 7) % 8]).count();
        crossing_number(&ring) as usize == runs
    });
    if !cn_ok {
        failed.push("crossing number");
    }

    let setup = FaceSetup::new(&Scenario::default(), Seed(73)).unwrap();
    let ef = setup.model.eigenfaces();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let ortho = (0..ef.len()).all(|i| (0..ef.len()).all(|j| (dot(&ef[i], &ef[j]) - f64::from(i == j)).abs() < 1e-9));
    let mut rng = Seed(74).rng();
    let bessel = (0..100).all(|_| {
        let img = GrayImage::from_fn(32, 32, |_, _| rng.random());
        let c = setup.model.project(&img).unwrap();
        let norm: f64 = img.pixels().iter().zip(setup.model.mean()).map(|(&x, m)| (x as f64 - m).powi(2)).sum();
        dot(&c.0, &c.0) <= norm * (1.0 + 1e-12)
    });
    let axis = {
        let mut c = vec![0.0; ef.len()];
        c[0] = 2.0;
        let back = setup.model.project_values(&setup.model.synthesize(&FaceCoefficients(c.clone())));
        back.0.iter().zip(&c).all(|(x, y)| (x - y).abs() < 1e-3)
    };
    if !(ortho && bessel && axis) {
        failed.push("eigenfaces");
    }

    let mut rng = Seed(75).rng();
    let angles_ok = (0..2000).all(|_| {
        let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let d = ridge_angle_diff(a, b);
        let folded = (a - b).rem_euclid(PI);
        let want = folded.min(PI - folded);
        (0.0..=PI / 2.0 + 1e-12).contains(&d)
            && (d - want).abs() < 1e-9
            && (ridge_angle_diff(a + PI, b) - d).abs() < 1e-9
            && (ridge_angle_diff(b, a) - d).abs() < 1e-12
    });
    if !angles_ok {
        failed.push("pi-periodic angles");
    }

    let detail = if failed.is_empty() {
        format!("all six suites pass (greedy gap {gap:.3})")
    } else {
        format!("failing: {}", failed.join(", "))
    };
    verdict(failed.is_empty(), detail)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn cli_session(dir: &Path) -> Option<Vec<Vec<u8>>> {
    let steps: &[&[&str]] = &[
        &["gen-fp", "--out", "a.btm", "--seed", "8", "--image", "a.pgm"],
        &["gen-faces", "--out-dir", "faces", "--count", "8", "--seed", "8"],
        &["enroll", "--db", "db", "--user", "alice", "--template", "a.btm"],
        &["match", "a.btm", "a.btm"],
        &["reconstruct", "--template", "a.btm", "--out", "r.pgm", "--seed", "8"],
        &["extract", "--image", "r.pgm", "--out", "x.btm"],
        &["obliterate", "--image", "r.pgm", "--out", "o.pgm", "--seed", "8"],
        &["attack-fp", "--db", "db", "--target", "alice", "--seed", "8", "--trace", "fp.csv"],
        &["attack-timing", "--db", "db", "--target", "alice", "--seed", "8", "--budget", "3000", "--trace", "tm.csv"],
        &["attack-face", "--seed", "8", "--i-max", "300", "--trace", "fa.csv"],
        &["eval-defenses", "--out", "rep.csv", "--trials", "2", "--seed", "8", "--policies", "full,hidden"],
    ];
    let mut outs = Vec::new();
    for s in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_biolab")).current_dir(dir).args(*s).output().ok()?;
        if !out.status.success() {
            return None;
        }
        outs.push(out.stdout);
    }
    Some(outs)
}

fn ac8_formats() -> Verdict {
    let btm_ok = (0..1000u64).all(|i| {
        let t = random_template(Seed(i), (i % 60) as usize, DIMS.0, DIMS.1);
        let bytes = serialize_template(&t).unwrap();
        let back = parse_template(&bytes).unwrap();
        back == quantized(&t) && serialize_template(&back).unwrap() == bytes
    });
    let mut rng = Seed(81).rng();
    let pgm_ok = (0..50).all(|k| {
        let img = GrayImage::from_fn(1 + k * 7, 1 + k * 3, |_, _| rng.random());
        decode_pgm(&encode_pgm(&img)).unwrap() == img
    });
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cli_ok = match (cli_session(a.path()), cli_session(b.path())) {
        (Some(x), Some(y)) => x == y && snapshot(a.path()) == snapshot(b.path()),
        _ => false,
    };
    verdict(
        btm_ok && pgm_ok && cli_ok,
        format!("btm 1000 round-trips {btm_ok}, pgm round-trips {pgm_ok}, cli reproducible {cli_ok}"),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("face attack vs quantization", ac1_face_quantization),
        ("minutiae hill climb", ac2_minutiae_climb),
        ("reconstruction loop", ac3_reconstruction_loop),
        ("rate limiting", ac4_rate_limit),
        ("jitter defense", ac5_jitter),
        ("timing side channel", ac6_timing),
        ("invariant suites", ac7_invariants),
        ("formats", ac8_formats),
    ];
    let mut passed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        passed += usize::from(v.pass);
        println!("AC{} {} {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {passed}/8 criteria pass");
}
