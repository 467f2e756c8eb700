use rand::Rng as _;

use super::{response_key, AttackTrace, Outcome, Recorder, Response, ScoreOracle, Summarize};
use crate::face::{to_image, FaceCoefficients, FaceDb, FaceError, FaceModel};
use crate::model::{decide, GrayImage, Seed};

#[derive(Debug, Clone, PartialEq)]
pub struct FaceAttackConfig {
    /// Step sizes tried along the chosen eigenface each iteration.
    pub steps: Vec<f64>,
    pub i_max: usize,
    /// Iterations without improvement before stopping.
    pub stall_limit: usize,
}

impl Default for FaceAttackConfig {
    fn default() -> Self {
        FaceAttackConfig {
            steps: vec![-4.0, -2.0, -1.0, 1.0, 2.0, 4.0],
            i_max: 3000,
            stall_limit: 200,
        }
    }
}

impl FaceAttackConfig {
    pub fn is_valid(&self) -> bool {
        self.steps.iter().any(|&c| c > 0.0) && self.steps.iter().any(|&c| c < 0.0) && self.steps.iter().all(|c| c.is_finite())
    }
}

/// Face verification against one enrolled image.
pub struct FaceOracle<'a> {
    model: &'a FaceModel,
    target: FaceCoefficients,
    tau: f64,
    calls: u64,
}

impl<'a> FaceOracle<'a> {
    pub fn new(model: &'a FaceModel, target: &GrayImage, tau: f64) -> Result<Self, FaceError> {
        Ok(FaceOracle {
            model,
            target: model.project(target)?,
            tau,
            calls: 0,
        })
    }
}

impl ScoreOracle<GrayImage> for FaceOracle<'_> {
    fn query(&mut self, img: &GrayImage) -> Response {
        self.calls += 1;
        let score = match self.model.project(img) {
            Ok(c) => self.model.similarity(&c, &self.target),
            Err(_) => crate::model::MatchScore::new(0.0),
        };
        Response::Scored {
            score,
            decision: decide(score, self.tau),
        }
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// Eigenface-space hill climb.
///
/// Starts from the database image the endpoint scores highest, then each
/// iteration picks a random eigenface and tries every step along it, keeping
/// the best step if it strictly improves. The iterate is kept in real pixel
/// values truncated to `0..=255`; each query sends it rounded to an image.
pub fn attack_face<O>(
    oracle: &mut O,
    db: &FaceDb,
    model: &FaceModel,
    cfg: &FaceAttackConfig,
    seed: Seed,
) -> Result<(GrayImage, AttackTrace), FaceError>
where
    O: ScoreOracle<GrayImage> + ?Sized,
{
    assert!(cfg.is_valid(), "steps need a positive and a negative value");
    let (w, h) = model.dims();
    if db.dims() != (w, h) {
        return Err(FaceError::DimensionMismatch {
            got: db.dims(),
            want: (w, h),
        });
    }
    let mut rng = seed.rng();
    let mut rec = Recorder::new();
    let mut best_key = f64::NEG_INFINITY;
    let mut best_idx = 0;
    let mut best_accepted = false;
    for (i, img) in db.images().iter().enumerate() {
        let r = oracle.query(img);
        let k = rec.record(img.summary(), &r, response_key(&r));
        if r.is_blocked() {
            return Ok((db.images()[best_idx].clone(), rec.finish(Outcome::Blocked)));
        }
        if k > best_key {
            best_key = k;
            best_idx = i;
            best_accepted = r.accepted();
        }
    }
    let mut state: Vec<f64> = db.images()[best_idx].pixels().iter().map(|&p| p as f64).collect();
    let mut best_img = db.images()[best_idx].clone();
    let mut stall = 0;
    let mut stalled = false;
    for _ in 0..cfg.i_max {
        let k = rng.random_range(0..model.k());
        let ef = &model.eigenfaces()[k];
        let mut round_best: Option<(f64, Vec<f64>, GrayImage, Response)> = None;
        for &c in &cfg.steps {
            let cand: Vec<f64> = state.iter().zip(ef).map(|(s, e)| (s + c * e).clamp(0.0, 255.0)).collect();
            let img = to_image(w, h, &cand);
            let r = oracle.query(&img);
            let key = rec.record(img.summary(), &r, response_key(&r));
            if r.is_blocked() {
                return Ok((best_img, rec.finish(Outcome::Blocked)));
            }
            if round_best.as_ref().is_none_or(|b| key > b.0) {
                round_best = Some((key, cand, img, r));
            }
        }
        let (key, cand, img, r) = round_best.expect("steps are nonempty");
        if key > best_key {
            best_key = key;
            state = cand;
            best_img = img;
            best_accepted = r.accepted();
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_limit {
                stalled = true;
                break;
            }
        }
    }
    let outcome = if best_accepted {
        Outcome::Succeeded
    } else if stalled {
        Outcome::Stalled
    } else {
        Outcome::ExhaustedBudget
    };
    Ok((best_img, rec.finish(outcome)))
}

