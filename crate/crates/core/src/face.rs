//! Eigenface recognition over procedurally generated faces.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::model::{clamp_pixel, GrayImage, MatchScore, Seed};

pub const MIN_FACE_SIDE: usize = 16;
/// Basis functions per axis in the per-face variation.
const DCT_SIDE: usize = 8;
/// Gray-level amplitude of the lowest-frequency variation.
const VARIATION: f64 = 6.0;
const PIXEL_NOISE: f64 = 2.0;
/// Per-dimension scale of the default distance-to-similarity map.
pub const D0_PER_DIM: f64 = 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaceError {
    #[error("face images need at least 2 images of at least {MIN_FACE_SIDE}x{MIN_FACE_SIDE} px")]
    BadDimensions,
    #[error("k = {k} outside 1..={max}")]
    KTooLarge { k: usize, max: usize },
    #[error("training images carry too few independent directions")]
    DegenerateData,
    #[error("image is {got:?}, model expects {want:?}")]
    DimensionMismatch { got: (usize, usize), want: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceDb {
    images: Vec<GrayImage>,
    seed: Seed,
}

impl FaceDb {
    pub fn new(images: Vec<GrayImage>, seed: Seed) -> Result<Self, FaceError> {
        let Some(first) = images.first() else {
            return Err(FaceError::BadDimensions);
        };
        let dims = (first.width(), first.height());
        if images.len() < 2 || images.iter().any(|im| (im.width(), im.height()) != dims) {
            return Err(FaceError::BadDimensions);
        }
        Ok(FaceDb { images, seed })
    }

    pub fn images(&self) -> &[GrayImage] {
        &self.images
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.images[0].width(), self.images[0].height())
    }
}

/// The shared face everything varies around: a bright oval with dark eyes and mouth.
pub fn mean_face(width: usize, height: usize) -> Vec<f64> {
    let (w, h) = (width as f64, height as f64);
    let eye_r = 0.07 * w.min(h);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let oval = ((fx - 0.5 * w) / (0.36 * w)).powi(2) + ((fy - 0.5 * h) / (0.46 * h)).powi(2);
            let mut v = if oval <= 1.0 { 180.0 } else { 40.0 };
            for ex in [0.35, 0.65] {
                if (fx - ex * w).hypot(fy - 0.4 * h) <= eye_r {
                    v = 90.0;
                }
            }
            if (fx - 0.5 * w).abs() <= 0.12 * w && (fy - 0.7 * h).abs() <= 0.03 * h + 0.5 {
                v = 100.0;
            }
            out.push(v);
        }
    }
    out
}

/// `count` faces: [`mean_face`] plus a seeded low-frequency cosine mix and pixel noise.
pub fn gen_face_db(seed: Seed, count: usize, width: usize, height: usize) -> Result<FaceDb, FaceError> {
    if count < 2 || width < MIN_FACE_SIDE || height < MIN_FACE_SIDE {
        return Err(FaceError::BadDimensions);
    }
    let base = mean_face(width, height);
    let cos_x = cosine_table(width);
    let cos_y = cosine_table(height);
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("positive deviation");
    let images = (0..count)
        .map(|i| {
            let mut rng = seed.derive(i as u64).rng();
            let mut amp = [[0.0; DCT_SIDE]; DCT_SIDE];
            for (v, row) in amp.iter_mut().enumerate() {
                for (u, a) in row.iter_mut().enumerate() {
                    *a = rng.random_range(-1.0..1.0) * VARIATION / (1 + u + v) as f64;
                }
            }
            GrayImage::from_fn(width, height, |x, y| {
                let mut val = base[y * width + x];
                for (v, row) in amp.iter().enumerate() {
                    for (u, a) in row.iter().enumerate() {
                        val += a * cos_x[u][x] * cos_y[v][y];
                    }
                }
                clamp_pixel(val + noise.sample(&mut rng))
            })
        })
        .collect();
    Ok(FaceDb { images, seed })
}

fn cosine_table(n: usize) -> Vec<Vec<f64>> {
    (0..DCT_SIDE)
        .map(|u| (0..n).map(|x| (PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64).cos()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel {
    width: usize,
    height: usize,
    mean: Vec<f64>,
    eigenfaces: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    d0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceCoefficients(pub Vec<f64>);

impl FaceCoefficients {
    pub fn distance(&self, other: &FaceCoefficients) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

/// Top-`k` principal components of the database via its Gram matrix.
pub fn train_eigenfaces(db: &FaceDb, k: usize) -> Result<FaceModel, FaceError> {
    let n = db.images.len();
    if k == 0 || k > n - 1 {
        return Err(FaceError::KTooLarge { k, max: n - 1 });
    }
    let (width, height) = db.dims();
    let px = width * height;
    let mut mean = vec![0.0; px];
    for im in &db.images {
        for (m, &p) in mean.iter_mut().zip(im.pixels()) {
            *m += p as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = db
        .images
        .iter()
        .map(|im| im.pixels().iter().zip(&mean).map(|(&p, m)| p as f64 - m).collect())
        .collect();
    let gram = DMatrix::from_fn(n, n, |i, j| dot(&centered[i], &centered[j]));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let mut eigenfaces = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in &order[..k] {
        let lambda = eig.eigenvalues[idx];
        if !(lambda > 1e-9 * top.max(f64::MIN_POSITIVE)) {
            return Err(FaceError::DegenerateData);
        }
        let v = eig.eigenvectors.column(idx);
        let mut ef = vec![0.0; px];
        for (i, c) in centered.iter().enumerate() {
            for (e, x) in ef.iter_mut().zip(c) {
                *e += v[i] * x;
            }
        }
        let norm = dot(&ef, &ef).sqrt();
        ef.iter_mut().for_each(|e| *e /= norm);
        // largest-magnitude pixel positive; the first one wins ties
        let peak = ef.iter().enumerate().fold(0, |best, (i, e)| if e.abs() > ef[best].abs() { i } else { best });
        if ef[peak] < 0.0 {
            ef.iter_mut().for_each(|e| *e = -*e);
        }
        eigenfaces.push(ef);
        eigenvalues.push(lambda / (n - 1) as f64);
    }
    Ok(FaceModel {
        width,
        height,
        mean,
        eigenfaces,
        eigenvalues,
        d0: (k as f64).sqrt() * D0_PER_DIM,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl FaceModel {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn k(&self) -> usize {
        self.eigenfaces.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenfaces(&self) -> &[Vec<f64>] {
        &self.eigenfaces
    }

    /// Variances along each eigenface, nonincreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn with_d0(mut self, d0: f64) -> Self {
        assert!(d0 > 0.0, "d0 must be positive");
        self.d0 = d0;
        self
    }

    fn check(&self, img: &GrayImage) -> Result<(), FaceError> {
        let got = (img.width(), img.height());
        if got != (self.width, self.height) {
            return Err(FaceError::DimensionMismatch {
                got,
                want: (self.width, self.height),
            });
        }
        Ok(())
    }

    pub fn project(&self, img: &GrayImage) -> Result<FaceCoefficients, FaceError> {
        self.check(img)?;
        let values: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
        Ok(self.project_values(&values))
    }

    /// Projection of real pixel values, row-major at the model's size.
    pub fn project_values(&self, values: &[f64]) -> FaceCoefficients {
        assert_eq!(values.len(), self.mean.len(), "pixel count must match the model");
        let centered: Vec<f64> = values.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        FaceCoefficients(self.eigenfaces.iter().map(|ef| dot(&centered, ef)).collect())
    }

    /// `mean + Σ c_i·EF_i` as real pixel values, unclamped.
    pub fn synthesize(&self, c: &FaceCoefficients) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (ci, ef) in c.0.iter().zip(&self.eigenfaces) {
            for (o, e) in out.iter_mut().zip(ef) {
                *o += ci * e;
            }
        }
        out
    }

    /// [`FaceModel::synthesize`] rounded into an image.
    pub fn render(&self, c: &FaceCoefficients) -> GrayImage {
        to_image(self.width, self.height, &self.synthesize(c))
    }

    pub fn similarity(&self, a: &FaceCoefficients, b: &FaceCoefficients) -> MatchScore {
        MatchScore::new(1.0 / (1.0 + a.distance(b) / self.d0))
    }

    pub fn compare(&self, a: &GrayImage, b: &GrayImage) -> Result<MatchScore, FaceError> {
        Ok(self.similarity(&self.project(a)?, &self.project(b)?))
    }
}

pub fn to_image(width: usize, height: usize, values: &[f64]) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| clamp_pixel(values[y * width + x]))
}

pub fn project(model: &FaceModel, img: &GrayImage) -> Result<FaceCoefficients, FaceError> {
    model.project(img)
}

/// `1 / (1 + ‖project(a) − project(b)‖ / d0)`.
pub fn compare_faces(model: &FaceModel, a: &GrayImage, b: &GrayImage) -> Result<MatchScore, FaceError> {
    model.compare(a, b)
}
