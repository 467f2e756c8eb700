use crate::analysis::OrientationField;
use crate::model::{fold_pi, MinutiaeTemplate};

use super::SynthesisError;

const EPS: f64 = 1.0;
const CANCEL: f64 = 1e-9;

/// Ridge orientation interpolated from minutiae directions.
///
/// Each cell centre averages the doubled minutia angles with weights
/// `1 / (d² + 1)`. When the weighted vector cancels exactly, the nearest
/// minutia's angle is used (lowest index on ties).
pub fn orientation_from_minutiae(t: &MinutiaeTemplate, cell: usize) -> Result<OrientationField, SynthesisError> {
    let ms = t.minutiae();
    if ms.is_empty() {
        return Err(SynthesisError::EmptyTemplate);
    }
    let cell = cell.max(1);
    let (cols, rows) = OrientationField::grid_for(t.width() as usize, t.height() as usize, cell);
    let doubled: Vec<(f64, f64)> = ms.iter().map(|m| ((2.0 * m.theta).cos(), (2.0 * m.theta).sin())).collect();
    let mut angles = Vec::with_capacity(cols * rows);
    let mut coherence = Vec::with_capacity(cols * rows);
    let half = cell as f64 / 2.0;
    for r in 0..rows {
        for c in 0..cols {
            let (px, py) = (c as f64 * cell as f64 + half, r as f64 * cell as f64 + half);
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            let mut nearest = (f64::INFINITY, 0usize);
            for (i, m) in ms.iter().enumerate() {
                let d2 = (m.x as f64 - px).powi(2) + (m.y as f64 - py).powi(2);
                let w = 1.0 / (d2 + EPS);
                sx += w * doubled[i].0;
                sy += w * doubled[i].1;
                sw += w;
                if d2 < nearest.0 {
                    nearest = (d2, i);
                }
            }
            let mag = sx.hypot(sy);
            if mag < CANCEL {
                angles.push(fold_pi(ms[nearest.1].theta));
                coherence.push(0.0);
            } else {
                angles.push(fold_pi(0.5 * sy.atan2(sx)));
                coherence.push((mag / sw).clamp(0.0, 1.0));
            }
        }
    }
    Ok(OrientationField {
        cols,
        rows,
        cell,
        angles,
        coherence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ridge_angle_diff, Minutia, MinutiaKind, Seed};
    use std::f64::consts::PI;

    fn tpl(ms: &[(u32, u32, f64)]) -> MinutiaeTemplate {
        let ms = ms.iter().map(|&(x, y, t)| Minutia::new(x, y, t, MinutiaKind::Termination)).collect();
        MinutiaeTemplate::with_minutiae(64, 64, 500, ms).unwrap()
    }

    #[test]
    fn single_minutia_everywhere() {
        let f = orientation_from_minutiae(&tpl(&[(10, 50, PI / 4.0)]), 8).unwrap();
        for (a, c) in f.angles.iter().zip(&f.coherence) {
            assert!((a - PI / 4.0).abs() < 1e-12);
            assert!((c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_of_two_minutiae() {
        // cell (3, 3) has centre (28, 28); both minutiae are 8 px away
        let f = orientation_from_minutiae(&tpl(&[(20, 28, 0.0), (36, 28, PI / 4.0)]), 8).unwrap();
        assert!((f.angle(3, 3) - PI / 8.0).abs() < 1e-12);
    }

    #[test]
    fn antipodal_cancellation_falls_back_to_lowest_index() {
        let f = orientation_from_minutiae(&tpl(&[(20, 28, 0.0), (36, 28, PI / 2.0)]), 8).unwrap();
        assert_eq!(f.angle(3, 3), 0.0);
        let f = orientation_from_minutiae(&tpl(&[(20, 28, PI / 2.0), (36, 28, 0.0)]), 8).unwrap();
        assert!((f.angle(3, 3) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn field_is_smooth_on_seeded_templates() {
        let (mut ok, mut total) = (0usize, 0usize);
        for s in 0..10 {
            let t = crate::generate::random_template(Seed(s), 25, 256, 288);
            let f = orientation_from_minutiae(&t, 8).unwrap();
            assert!(f.angles.iter().all(|a| (0.0..PI).contains(a)));
            for r in 0..f.rows {
                for c in 0..f.cols {
                    for (cc, rr) in [(c + 1, r), (c, r + 1)] {
                        if cc < f.cols && rr < f.rows {
                            total += 1;
                            let d = 2.0 * ridge_angle_diff(f.angle(c, r), f.angle(cc, rr));
                            if d <= 0.5 {
                                ok += 1;
                            }
                        }
                    }
                }
            }
        }
        assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total}");
    }
}
