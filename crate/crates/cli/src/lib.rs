//! Command-line front end: datasets, enrollment, matching, attacks and
//! defense evaluation, with PGM, `.btm` and CSV files on disk.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use biolab::analysis::extract_minutiae;
use biolab::attack::{
    attack_face, attack_fp, timing_attack, AttackTrace, FaceOracle, FpOracle, Outcome, TimedOracle,
};
use biolab::defense::{evaluate_defenses, Defended, DefensePolicy, FaceSetup};
use biolab::face::{gen_face_db, train_eigenfaces, FaceDb};
use biolab::generate::random_template;
use biolab::harness::{export_report_csv, export_trace_csv, read_pgm, write_pgm, ExperimentConfig};
use biolab::matcher::verify;
use biolab::model::{GrayImage, MinutiaeTemplate, Seed};
use biolab::synthesis::{obliterate, reconstruct, Scar, ScarStyle};
use biolab::template_io::{read_template_file, write_template_file, TemplateStore};
use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_BLOCKED: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "biolab", version, about = "Biometric attack and defense laboratory")]
struct Cli {
    /// key=value experiment configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random minutiae template, optionally reconstructed to an image.
    GenFp {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        minutiae: Option<usize>,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        /// Also write the reconstructed fingerprint here.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Face database as numbered PGM files.
    GenFaces {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
    },
    /// Store a template (or the minutiae extracted from an image) under a user id.
    Enroll {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long, conflicts_with = "image", required_unless_present = "image")]
        template: Option<PathBuf>,
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Compare two templates, or two images, and print score and decision.
    Match {
        a: PathBuf,
        b: PathBuf,
        /// Compare images as faces with an eigenface model trained on this directory.
        #[arg(long)]
        faces: Option<PathBuf>,
    },
    /// Fingerprint image from a template.
    Reconstruct {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hill-climb a minutiae template against an enrolled user.
    AttackFp(FpAttackArgs),
    /// Same attack, steered by comparison time instead of scores.
    AttackTiming {
        #[command(flatten)]
        common: FpAttackArgs,
        /// Attack the constant-time matcher instead.
        #[arg(long)]
        constant_time: bool,
    },
    /// Hill-climb a face image in eigenface space.
    AttackFace {
        #[arg(long)]
        seed: Option<u64>,
        /// Enrolled face; an in-span synthetic face when omitted.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Face database directory; generated from the seed when omitted.
        #[arg(long)]
        faces: Option<PathBuf>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        i_max: Option<usize>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every attack against every policy; writes the report CSV.
    EvalDefenses {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated subset of fingerprint, timing, face.
        #[arg(long)]
        attacks: Option<String>,
        /// Comma-separated policies, e.g. `full,quantized(0.1),hidden+limit(500/1)`.
        #[arg(long)]
        policies: Option<String>,
    },
    /// Minutiae template from a fingerprint image.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Erase or scramble disks of a fingerprint image.
    Obliterate {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// `x,y,radius[,erase|scramble]`; repeatable. Defaults to one
        /// scrambled disk of radius 20 at the image centre.
        #[arg(long = "scar")]
        scars: Vec<String>,
    },
}

#[derive(Args, Debug)]
struct FpAttackArgs {
    /// Enrolled user id.
    #[arg(long)]
    target: String,
    /// Enrollment directory; defaults to `<output_dir>/db`.
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    policy: Option<String>,
    /// Trace CSV; defaults to `<output_dir>/trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the final template here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures that map to a nonzero exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn data(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                CliError::Usage(m) | CliError::Data(m) => eprintln!("biolab: {m}"),
            }
            e.code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
            ExperimentConfig::parse(&text).map_err(|e| data(format!("{}: {e}", p.display())))
        }
    }
}

fn override_seed(cfg: &mut ExperimentConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.seed = Seed(s);
    }
}

fn parse_policy(text: Option<&str>) -> Result<DefensePolicy, CliError> {
    let p = match text {
        None => DefensePolicy::FULL,
        Some(t) => t.parse().map_err(|e| CliError::Usage(format!("{e}")))?,
    };
    p.validate().map_err(data)?;
    Ok(p)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

fn save_template(path: &Path, t: &MinutiaeTemplate) -> Result<(), CliError> {
    ensure_parent(path)?;
    write_template_file(path, t).map_err(data)
}

fn save_image(path: &Path, img: &GrayImage) -> Result<(), CliError> {
    ensure_parent(path)?;
    write_pgm(path, img).map_err(data)
}

fn is_image(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// `*.pgm` files of a directory in name order.
fn load_faces(dir: &Path) -> Result<Vec<GrayImage>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_pgm(p).map_err(data)).collect()
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenFp {
            out,
            seed,
            minutiae,
            width,
            height,
            image,
        } => {
            override_seed(&mut cfg, seed);
            let sc = &mut cfg.scenario;
            sc.target_minutiae = minutiae.unwrap_or(sc.target_minutiae);
            sc.fp_dims = (width.unwrap_or(sc.fp_dims.0), height.unwrap_or(sc.fp_dims.1));
            cfg.validate().map_err(data)?;
            let (w, h) = cfg.scenario.fp_dims;
            let t = random_template(cfg.seed, cfg.scenario.target_minutiae, w, h);
            save_template(&out, &t)?;
            if let Some(path) = image {
                let img = reconstruct(&t, &cfg.synthesis, cfg.seed.derive(1)).map_err(data)?;
                save_image(&path, &img)?;
            }
            println!("wrote {} minutiae to {}", t.len(), out.display());
        }
        Command::GenFaces {
            out_dir,
            seed,
            count,
            width,
            height,
        } => {
            override_seed(&mut cfg, seed);
            let sc = &mut cfg.scenario;
            sc.face_db_size = count.unwrap_or(sc.face_db_size);
            sc.face_dims = (width.unwrap_or(sc.face_dims.0), height.unwrap_or(sc.face_dims.1));
            // k only matters for training; keep it legal for small databases
            sc.face_k = sc.face_k.min(sc.face_db_size.saturating_sub(1)).max(1);
            cfg.validate().map_err(data)?;
            let (w, h) = cfg.scenario.face_dims;
            let db = gen_face_db(cfg.seed, cfg.scenario.face_db_size, w, h).map_err(data)?;
            fs::create_dir_all(&out_dir).map_err(|e| data(format!("{}: {e}", out_dir.display())))?;
            for (i, img) in db.images().iter().enumerate() {
                write_pgm(&out_dir.join(format!("face_{i:04}.pgm")), img).map_err(data)?;
            }
            println!("wrote {} faces to {}", db.images().len(), out_dir.display());
        }
        Command::Enroll {
            db,
            user,
            template,
            image,
        } => {
            let t = match (template, image) {
                (Some(p), _) => read_template_file(&p).map_err(data)?,
                (None, Some(p)) => extract_minutiae(&read_pgm(&p).map_err(data)?, &cfg.extract).map_err(data)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let store = TemplateStore::open(&db).map_err(data)?;
            store.enroll(&user, &t).map_err(data)?;
            println!("enrolled {user} with {} minutiae", t.len());
        }
        Command::Match { a, b, faces } => {
            let params = cfg.scenario.match_params;
            let (score, decision) = match (is_image(&a), is_image(&b)) {
                (false, false) => {
                    let ta = read_template_file(&a).map_err(data)?;
                    let tb = read_template_file(&b).map_err(data)?;
                    verify(&ta, &tb, &params)
                }
                (true, true) => {
                    let ia = read_pgm(&a).map_err(data)?;
                    let ib = read_pgm(&b).map_err(data)?;
                    match faces {
                        Some(dir) => {
                            let db = FaceDb::new(load_faces(&dir)?, cfg.seed).map_err(data)?;
                            let k = cfg.scenario.face_k.min(db.images().len() - 1);
                            let model = train_eigenfaces(&db, k).map_err(data)?;
                            let s = model.compare(&ia, &ib).map_err(data)?;
                            (s, biolab::model::decide(s, cfg.scenario.face_tau))
                        }
                        None => {
                            let ta = extract_minutiae(&ia, &cfg.extract).map_err(data)?;
                            let tb = extract_minutiae(&ib, &cfg.extract).map_err(data)?;
                            verify(&ta, &tb, &params)
                        }
                    }
                }
                _ => return Err(CliError::Usage("compare two templates or two images, not one of each".into())),
            };
            println!("score={:.6} decision={decision:?}", score.value());
        }
        Command::Reconstruct { template, out, seed } => {
            override_seed(&mut cfg, seed);
            let t = read_template_file(&template).map_err(data)?;
            let img = reconstruct(&t, &cfg.synthesis, cfg.seed).map_err(data)?;
            save_image(&out, &img)?;
            println!("wrote {}x{} image to {}", img.width(), img.height(), out.display());
        }
        Command::AttackFp(args) => return fp_attack(cfg, args, None),
        Command::AttackTiming { common, constant_time } => {
            let mut model = cfg.timing;
            model.constant_time |= constant_time;
            return fp_attack(cfg, common, Some(model));
        }
        Command::AttackFace {
            seed,
            target,
            faces,
            policy,
            i_max,
            trace,
            out,
        } => {
            override_seed(&mut cfg, seed);
            cfg.face_attack.i_max = i_max.unwrap_or(cfg.face_attack.i_max);
            cfg.validate().map_err(data)?;
            let policy = parse_policy(policy.as_deref())?;
            let setup = match faces {
                None => FaceSetup::new(&cfg.scenario, cfg.seed.derive(0)).map_err(data)?,
                Some(dir) => {
                    let db = FaceDb::new(load_faces(&dir)?, cfg.seed).map_err(data)?;
                    let k = cfg.scenario.face_k.min(db.images().len() - 1);
                    let model = train_eigenfaces(&db, k).map_err(data)?;
                    FaceSetup { db, model }
                }
            };
            let target = match target {
                Some(p) => read_pgm(&p).map_err(data)?,
                None => setup.target(cfg.seed.derive(1)),
            };
            let tau = cfg.scenario.face_tau;
            let inner = FaceOracle::new(&setup.model, &target, tau).map_err(data)?;
            let mut oracle = Defended::new(inner, policy, tau, cfg.seed.derive(2)).map_err(data)?;
            let (img, tr) = attack_face(&mut oracle, &setup.db, &setup.model, &cfg.face_attack, cfg.seed.derive(3))
                .map_err(data)?;
            let truth = setup.model.compare(&img, &target).map_err(data)?;
            finish_attack(&cfg, &tr, trace.as_deref(), Some(truth.value()))?;
            if let Some(p) = out {
                save_image(&p, &img)?;
            }
            return Ok(exit_for(&tr));
        }
        Command::EvalDefenses {
            out,
            seed,
            trials,
            attacks,
            policies,
        } => {
            override_seed(&mut cfg, seed);
            cfg.trials = trials.unwrap_or(cfg.trials);
            if let Some(a) = attacks {
                cfg.set("eval.attacks", &a).ok_or_else(|| CliError::Usage(format!("bad attack list {a:?}")))?;
            }
            if let Some(p) = policies {
                cfg.set("eval.policies", &p).ok_or_else(|| CliError::Usage(format!("bad policy list {p:?}")))?;
            }
            cfg.validate().map_err(data)?;
            let report =
                evaluate_defenses(&cfg.attack_kinds(), &cfg.policies, cfg.trials, &cfg.scenario, cfg.seed).map_err(data)?;
            ensure_parent(&out)?;
            export_report_csv(&report, &out).map_err(data)?;
            for c in &report.cells {
                let median = c.median_calls.map_or("-".to_string(), |m| m.to_string());
                println!("{} {}: {}/{} median_calls={median}", c.attack, c.policy, c.successes, c.trials);
            }
        }
        Command::Extract { image, out } => {
            let img = read_pgm(&image).map_err(data)?;
            let t = extract_minutiae(&img, &cfg.extract).map_err(data)?;
            save_template(&out, &t)?;
            println!("extracted {} minutiae to {}", t.len(), out.display());
        }
        Command::Obliterate {
            image,
            out,
            seed,
            scars,
        } => {
            override_seed(&mut cfg, seed);
            let img = read_pgm(&image).map_err(data)?;
            let scars = if scars.is_empty() {
                vec![Scar {
                    center: (img.width() as f64 / 2.0, img.height() as f64 / 2.0),
                    radius: 20.0,
                    style: ScarStyle::Scramble,
                }]
            } else {
                scars.iter().map(|s| parse_scar(s)).collect::<Result<_, _>>()?
            };
            let altered = obliterate(&img, &scars, cfg.seed);
            save_image(&out, &altered)?;
            println!("applied {} scars to {}", scars.len(), out.display());
        }
    }
    Ok(EXIT_OK)
}

fn parse_scar(s: &str) -> Result<Scar, CliError> {
    let bad = || CliError::Usage(format!("scar {s:?}: expected x,y,radius[,erase|scramble]"));
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(bad());
    }
    let num = |i: usize| parts[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let (x, y, radius) = (num(0)?, num(1)?, num(2)?);
    let style = match parts.get(3).copied() {
        None | Some("scramble") => ScarStyle::Scramble,
        Some("erase") => ScarStyle::Erase,
        Some(_) => return Err(bad()),
    };
    if radius < 0.0 {
        return Err(CliError::Data(format!("scar {s:?}: negative radius")));
    }
    Ok(Scar {
        center: (x, y),
        radius,
        style,
    })
}

fn fp_attack(
    mut cfg: ExperimentConfig,
    args: FpAttackArgs,
    timing: Option<biolab::sidechannel::TimingModel>,
) -> Result<i32, CliError> {
    override_seed(&mut cfg, args.seed);
    cfg.fp_attack.max_oracle_calls = args.budget.unwrap_or(cfg.fp_attack.max_oracle_calls);
    cfg.validate().map_err(data)?;
    let policy = parse_policy(args.policy.as_deref())?;
    let db = args.db.unwrap_or_else(|| cfg.output_dir.join("db"));
    let store = TemplateStore::open(&db).map_err(data)?;
    let target = store.lookup(&args.target).map_err(data)?;
    let dims = (target.width(), target.height());
    let params = cfg.scenario.match_params;
    let (best, tr) = match timing {
        None => {
            let inner = FpOracle::new(target.clone(), params);
            let mut o = Defended::new(inner, policy, params.tau, cfg.seed.derive(2)).map_err(data)?;
            attack_fp(&mut o, &cfg.fp_attack, dims, cfg.seed.derive(1)).map_err(data)?
        }
        Some(model) => {
            model.validate().map_err(data)?;
            let inner = TimedOracle::new(target.clone(), params, model, cfg.seed.derive(3));
            let mut o = Defended::new(inner, policy, params.tau, cfg.seed.derive(2)).map_err(data)?;
            timing_attack(&mut o, &cfg.timing_attack(), dims, cfg.seed.derive(1)).map_err(data)?
        }
    };
    let truth = verify(&best, &target, &params).0;
    finish_attack(&cfg, &tr, args.trace.as_deref(), Some(truth.value()))?;
    if let Some(p) = args.out {
        save_template(&p, &best)?;
    }
    Ok(exit_for(&tr))
}

fn finish_attack(cfg: &ExperimentConfig, tr: &AttackTrace, trace: Option<&Path>, truth: Option<f64>) -> Result<(), CliError> {
    let path = trace.map_or_else(|| cfg.output_dir.join("trace.csv"), Path::to_path_buf);
    ensure_parent(&path)?;
    export_trace_csv(tr, &path).map_err(data)?;
    let first = tr.first_accept().map_or("-".to_string(), |c| c.to_string());
    print!("outcome={} calls={} first_accept={first}", tr.outcome.name(), tr.len());
    if let Some(s) = truth {
        print!(" final_score={s:.6}");
    }
    println!(" trace={}", path.display());
    Ok(())
}

fn exit_for(tr: &AttackTrace) -> i32 {
    if tr.outcome == Outcome::Blocked {
        EXIT_BLOCKED
    } else {
        EXIT_OK
    }
}
