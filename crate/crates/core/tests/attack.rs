use biolab::attack::{
    attack_face, attack_fp, timing_attack, AttackTrace, FaceAttackConfig, FaceOracle, FpAttackConfig, FpOracle,
    MoveWeights, Outcome, Response, ScoreOracle, TimedOracle, TimingAttackConfig,
};
use biolab::defense::rate_limited;
use biolab::face::{gen_face_db, train_eigenfaces, FaceCoefficients};
use biolab::generate::random_template;
use biolab::harness::{attack_fp_targets, random_targets};
use biolab::matcher::MatchParams;
use biolab::model::{GrayImage, MinutiaeTemplate, Seed};
use biolab::par::{set_execution, Execution};
use biolab::sidechannel::TimingModel;

const DIMS: (u32, u32) = (256, 288);

fn target(seed: u64) -> MinutiaeTemplate {
    random_template(Seed(seed), 12, DIMS.0, DIMS.1)
}

fn small_budget() -> FpAttackConfig {
    FpAttackConfig {
        max_oracle_calls: 1500,
        ..FpAttackConfig::default()
    }
}

fn check_trace(t: &AttackTrace) {
    let mut prev = f64::NEG_INFINITY;
    for (i, e) in t.entries.iter().enumerate() {
        assert_eq!(e.call, i as u64 + 1);
        assert!(e.best >= prev, "best fell at call {}", e.call);
        if let Some(s) = e.observed {
            assert!(s <= e.best + 1e-12);
        }
        prev = e.best;
    }
}

/// Counts calls on top of a counter that does not start at zero.
struct Offset<O>(O, u64);

impl<C: ?Sized, O: ScoreOracle<C>> ScoreOracle<C> for Offset<O> {
    fn query(&mut self, c: &C) -> Response {
        self.1 += 1;
        self.0.query(c)
    }
    fn calls(&self) -> u64 {
        self.1
    }
}

#[test]
fn fp_traces_are_monotone_over_100_runs() {
    let p = MatchParams::default();
    for i in 0..100 {
        let mut o = Offset(FpOracle::new(target(i), p), 17);
        let before = o.calls();
        let (best, t) = attack_fp(&mut o, &small_budget(), DIMS, Seed(1000 + i)).unwrap();
        check_trace(&t);
        assert_eq!(t.len() as u64, o.calls() - before);
        assert!(t.len() as u64 <= small_budget().max_oracle_calls);
        assert!(!best.is_empty());
        if t.outcome == Outcome::Succeeded {
            assert_eq!(t.first_accept(), Some(t.len() as u64));
        }
    }
}

#[test]
fn attacks_are_deterministic() {
    let p = MatchParams::default();
    let run = || attack_fp(&mut FpOracle::new(target(3), p), &small_budget(), DIMS, Seed(4)).unwrap();
    assert_eq!(run(), run());
    let cfg = TimingAttackConfig {
        fp: small_budget(),
        ..TimingAttackConfig::default()
    };
    let timed = || {
        let mut o = TimedOracle::new(target(3), p, TimingModel::default(), Seed(5));
        timing_attack(&mut o, &cfg, DIMS, Seed(6)).unwrap()
    };
    assert_eq!(timed(), timed());
}

#[test]
fn timing_trace_accounts_every_call() {
    let cfg = TimingAttackConfig {
        fp: small_budget(),
        ..TimingAttackConfig::default()
    };
    let mut o = TimedOracle::new(target(8), MatchParams::default(), TimingModel::default(), Seed(1));
    let (_, t) = timing_attack(&mut o, &cfg, DIMS, Seed(2)).unwrap();
    check_trace(&t);
    assert_eq!(t.len() as u64, o.calls());
    assert!(t.entries.iter().all(|e| e.observed.is_some_and(|s| (0.0..=1.0).contains(&s))));
}

#[test]
fn parallel_targets_equal_sequential_runs() {
    let targets = random_targets(Seed(12), 6, 12, DIMS);
    let seeds: Vec<Seed> = (0..6).map(|i| Seed(500 + i)).collect();
    let p = MatchParams::default();
    set_execution(Execution::Parallel);
    let par = attack_fp_targets(&targets, p, &small_budget(), DIMS, &seeds).unwrap();
    set_execution(Execution::Sequential);
    let seq = attack_fp_targets(&targets, p, &small_budget(), DIMS, &seeds).unwrap();
    set_execution(Execution::Parallel);
    assert_eq!(par, seq);
    for (t, (s, got)) in targets.iter().zip(seeds.iter().zip(&par)) {
        let alone = attack_fp(&mut FpOracle::new(t.clone(), p), &small_budget(), DIMS, *s).unwrap();
        assert_eq!(&alone, got);
    }
}

#[test]
fn degenerate_config_stalls() {
    let cfg = FpAttackConfig {
        population: 1,
        weights: MoveWeights {
            perturb: 1.0,
            add: 0.0,
            delete: 0.0,
        },
        perturb_radius: 0.0,
        perturb_angle: 0.0,
        relocate: 0.0,
        max_moves: 1,
        stall_limit: 50,
        ..FpAttackConfig::default()
    };
    let mut o = FpOracle::new(target(1), MatchParams::default());
    let (_, t) = attack_fp(&mut o, &cfg, DIMS, Seed(1)).unwrap();
    assert_eq!(t.outcome, Outcome::Stalled);
    assert_eq!(t.len(), 1 + 50);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut o = FpOracle::new(target(1), MatchParams::default());
    for cfg in [
        FpAttackConfig {
            population: 0,
            ..FpAttackConfig::default()
        },
        FpAttackConfig {
            minutiae_init: (5, 4),
            ..FpAttackConfig::default()
        },
        FpAttackConfig {
            weights: MoveWeights {
                perturb: 0.5,
                add: 0.2,
                delete: 0.2,
            },
            ..FpAttackConfig::default()
        },
    ] {
        assert!(attack_fp(&mut o, &cfg, DIMS, Seed(1)).is_err());
    }
    assert_eq!(o.calls(), 0);
}

#[test]
fn rate_limit_ends_in_blocked() {
    let mut o = rate_limited(FpOracle::new(target(2), MatchParams::default()), 40, 1).unwrap();
    let (_, t) = attack_fp(&mut o, &FpAttackConfig::default(), DIMS, Seed(3)).unwrap();
    assert_eq!(t.outcome, Outcome::Blocked);
    assert_eq!(t.len(), 41);
    assert_eq!(t.entries.last().unwrap().observed, None);
    check_trace(&t);
}

fn face_setup(seed: u64, k: usize) -> (biolab::face::FaceDb, biolab::face::FaceModel) {
    let db = gen_face_db(Seed(seed), 64, 32, 32).unwrap();
    let m = train_eigenfaces(&db, k).unwrap();
    (db, m)
}

#[test]
fn enrolled_database_face_is_accepted_immediately() {
    let (db, m) = face_setup(2, 16);
    let target = db.images()[5].clone();
    let mut o = FaceOracle::new(&m, &target, 0.7).unwrap();
    let (_, t) = attack_face(&mut o, &db, &m, &FaceAttackConfig::default(), Seed(1)).unwrap();
    assert!(t.entries[..64].iter().any(|e| e.accepted));
    assert_eq!(t.first_accept(), Some(6));
    assert_eq!(t.outcome, Outcome::Succeeded);
}

#[test]
fn in_span_face_target_is_reached() {
    let (db, m) = face_setup(9, 8);
    let mut c = vec![0.0; 8];
    c[1] = 3.0;
    let target = m.render(&FaceCoefficients(c));
    let mut o = FaceOracle::new(&m, &target, 0.7).unwrap();
    let (img, t) = attack_face(&mut o, &db, &m, &FaceAttackConfig::default(), Seed(9)).unwrap();
    let score = m.compare(&img, &target).unwrap().value();
    assert!(score >= 0.95, "{score}");
    check_trace(&t);
    assert_eq!(t.len() as u64, o.calls());
    assert!(t.len() <= 64 + 6 * 3000);
}

#[test]
fn face_attack_respects_pixel_range_and_is_deterministic() {
    let (db, m) = face_setup(3, 16);
    let target = GrayImage::filled(32, 32, 255);
    let cfg = FaceAttackConfig {
        steps: vec![-400.0, -40.0, 40.0, 400.0],
        i_max: 300,
        ..FaceAttackConfig::default()
    };
    let run = || {
        let mut o = FaceOracle::new(&m, &target, 0.7).unwrap();
        attack_face(&mut o, &db, &m, &cfg, Seed(4)).unwrap()
    };
    let (img, t) = run();
    assert_eq!((img.width(), img.height()), (32, 32));
    // steps this large drive pixels into the upper clamp
    assert!(img.pixels().contains(&255));
    check_trace(&t);
    assert_eq!(run(), (img, t));
}
