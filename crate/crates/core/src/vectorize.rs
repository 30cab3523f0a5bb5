//! Persistence images over birth/persistence space and pixel-wise comparison.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persistence::PersistenceDiagram;

#[derive(Debug, Error, PartialEq)]
pub enum VectorizeError {
    #[error("weight scale must be positive, got {0}")]
    DegenerateScale(f64),
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(usize, usize),
    #[error("invalid image parameters: {0}")]
    InvalidParams(String),
}

/// How each Gaussian contributes to a pixel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageMode {
    /// Exact Gaussian mass over the pixel box.
    #[default]
    Integrate,
    /// Density at the pixel center times pixel area.
    Sample,
}

/// Source of the weight normalizer `b`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum WeightScale {
    /// Each diagram's own largest persistence.
    #[default]
    PerDiagram,
    /// A fixed value shared by the whole corpus.
    Global(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageParams {
    pub resolution: usize,
    pub sigma: f64,
    pub mode: ImageMode,
    pub scale: WeightScale,
}

impl Default for ImageParams {
    fn default() -> Self {
        Self {
            resolution: 10,
            sigma: 0.01,
            mode: ImageMode::Integrate,
            scale: WeightScale::PerDiagram,
        }
    }
}

impl ImageParams {
    pub fn validate(&self) -> Result<(), VectorizeError> {
        if self.resolution == 0 {
            return Err(VectorizeError::InvalidParams(
                "resolution must be >= 1".into(),
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(VectorizeError::InvalidParams(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if let WeightScale::Global(b) = self.scale {
            if !(b > 0.0 && b.is_finite()) {
                return Err(VectorizeError::DegenerateScale(b));
            }
        }
        Ok(())
    }
}

/// `resolution x resolution` raster over `[0,1]^2`; pixel `iy * n + ix`
/// covers birth bin `ix` and persistence bin `iy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceImage {
    pub item_id: String,
    pub resolution: usize,
    pub pixels: Vec<f64>,
}

/// `(birth, persistence)` for every dim-1 pair.
pub fn birth_persistence_transform(diagram: &PersistenceDiagram) -> Vec<(f64, f64)> {
    diagram
        .pairs_of_dim(1)
        .map(|p| (p.birth, p.death - p.birth))
        .collect()
}

/// Piecewise-linear ramp: 0 at or below 0, `y / b` in between, 1 from `b` on.
pub fn weight(y: f64, b: f64) -> Result<f64, VectorizeError> {
    if b.is_nan() || b <= 0.0 {
        return Err(VectorizeError::DegenerateScale(b));
    }
    Ok(if y <= 0.0 {
        0.0
    } else if y < b {
        y / b
    } else {
        1.0
    })
}

/// Isotropic Gaussian density with mean `(ux, uy)`.
pub fn gaussian_density(x: f64, y: f64, ux: f64, uy: f64, sigma: f64) -> f64 {
    let r2 = (x - ux).powi(2) + (y - uy).powi(2);
    (-r2 / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

/// Standard normal mass of `[lo, hi]` (in standard units), evaluated on the
/// tail that keeps precision.
fn normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        0.5 * (libm::erfc(lo * FRAC_1_SQRT_2) - libm::erfc(hi * FRAC_1_SQRT_2))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi * FRAC_1_SQRT_2) - libm::erfc(-lo * FRAC_1_SQRT_2))
    } else {
        1.0 - 0.5 * (libm::erfc(-lo * FRAC_1_SQRT_2) + libm::erfc(hi * FRAC_1_SQRT_2))
    }
}

/// Largest dim-1 persistence over a set of diagrams (0 when there is none).
pub fn max_persistence<'a>(diagrams: impl IntoIterator<Item = &'a PersistenceDiagram>) -> f64 {
    diagrams
        .into_iter()
        .flat_map(|d| d.pairs_of_dim(1).map(|p| p.persistence))
        .fold(0.0, f64::max)
}

pub fn persistence_image(
    diagram: &PersistenceDiagram,
    params: &ImageParams,
) -> Result<PersistenceImage, VectorizeError> {
    params.validate()?;
    let n = params.resolution;
    let mut pixels = vec![0.0; n * n];
    let points = birth_persistence_transform(diagram);
    let b = match params.scale {
        WeightScale::PerDiagram => points.iter().map(|p| p.1).fold(0.0, f64::max),
        WeightScale::Global(b) => b,
    };
    if points.is_empty() || b <= 0.0 {
        return Ok(PersistenceImage {
            item_id: diagram.item_id.clone(),
            resolution: n,
            pixels,
        });
    }

    let width = 1.0 / n as f64;
    let sigma = params.sigma;
    let edge = |k: usize| k as f64 * width;
    let mut x_mass = vec![0.0; n];
    let mut y_mass = vec![0.0; n];
    for &(ux, uy) in &points {
        let w = weight(uy, b)?;
        if w == 0.0 {
            continue;
        }
        match params.mode {
            ImageMode::Integrate => {
                for k in 0..n {
                    x_mass[k] = normal_mass((edge(k) - ux) / sigma, (edge(k + 1) - ux) / sigma);
                    y_mass[k] = normal_mass((edge(k) - uy) / sigma, (edge(k + 1) - uy) / sigma);
                }
                for iy in 0..n {
                    for ix in 0..n {
                        pixels[iy * n + ix] += w * x_mass[ix] * y_mass[iy];
                    }
                }
            }
            ImageMode::Sample => {
                let area = width * width;
                for iy in 0..n {
                    for ix in 0..n {
                        let cx = (ix as f64 + 0.5) * width;
                        let cy = (iy as f64 + 0.5) * width;
                        pixels[iy * n + ix] += w * gaussian_density(cx, cy, ux, uy, sigma) * area;
                    }
                }
            }
        }
    }
    Ok(PersistenceImage {
        item_id: diagram.item_id.clone(),
        resolution: n,
        pixels,
    })
}

/// Absolute pixel differences sorted ascending, ties by pixel index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SortedDiff {
    pub entries: Vec<(usize, f64)>,
}

impl SortedDiff {
    pub fn max_diff(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.1)
    }
}

pub fn pixel_diff(
    a: &PersistenceImage,
    b: &PersistenceImage,
) -> Result<SortedDiff, VectorizeError> {
    if a.resolution != b.resolution || a.pixels.len() != b.pixels.len() {
        return Err(VectorizeError::ResolutionMismatch(
            a.resolution,
            b.resolution,
        ));
    }
    let mut entries: Vec<(usize, f64)> = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (p - q).abs())
        .enumerate()
        .collect();
    entries.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    Ok(SortedDiff { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persistence::PersistencePair;
    use proptest::prelude::*;

    fn diagram(points: &[(f64, f64)]) -> PersistenceDiagram {
        PersistenceDiagram {
            item_id: "d".into(),
            pairs: points
                .iter()
                .map(|&(birth, death)| PersistencePair {
                    dim: 1,
                    birth,
                    death,
                    persistence: death - birth,
                    birth_simplex: 0,
                    death_simplex: 1,
                })
                .collect(),
            essential: Vec::new(),
        }
    }

    /// Midpoint-rule integral of one Gaussian over a pixel box; independent
    /// of the CDF path.
    fn quadrature(ux: f64, uy: f64, sigma: f64, x0: f64, y0: f64, side: f64, steps: usize) -> f64 {
        let h = side / steps as f64;
        let mut total = 0.0;
        for i in 0..steps {
            for j in 0..steps {
                let x = x0 + (i as f64 + 0.5) * h;
                let y = y0 + (j as f64 + 0.5) * h;
                total += gaussian_density(x, y, ux, uy, sigma);
            }
        }
        total * h * h
    }

    #[test]
    fn transform_keeps_dim_one_only() {
        let mut d = diagram(&[(0.2, 0.9)]);
        let pts = birth_persistence_transform(&d);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].0, 0.2);
        assert!((pts[0].1 - 0.7).abs() < 1e-15);
        d.pairs[0].dim = 0;
        assert!(birth_persistence_transform(&d).is_empty());
        assert!(birth_persistence_transform(&PersistenceDiagram::default()).is_empty());
    }

    #[test]
    fn weight_ramp() {
        assert_eq!(weight(0.4, 0.4), Ok(1.0));
        assert_eq!(weight(0.2, 0.4), Ok(0.5));
        assert_eq!(weight(-0.1, 0.4), Ok(0.0));
        assert_eq!(weight(0.0, 0.4), Ok(0.0));
        assert_eq!(weight(0.9, 0.4), Ok(1.0));
        assert_eq!(weight(0.1, 0.0), Err(VectorizeError::DegenerateScale(0.0)));
    }

    #[test]
    fn density_peak() {
        let peak = gaussian_density(0.5, 0.5, 0.5, 0.5, 0.01);
        assert!((peak - 1591.549430918953).abs() < 1e-9);
    }

    #[test]
    fn empty_diagram_is_zero_image() {
        let img =
            persistence_image(&PersistenceDiagram::default(), &ImageParams::default()).unwrap();
        assert_eq!(img.pixels, vec![0.0; 100]);
    }

    #[test]
    fn pixel_interior_point_matches_quadrature() {
        // birth 0.25, persistence 0.75
        let img = persistence_image(&diagram(&[(0.25, 1.0)]), &ImageParams::default()).unwrap();
        let target = 7 * 10 + 2;
        for (k, &p) in img.pixels.iter().enumerate() {
            let (ix, iy) = (k % 10, k / 10);
            let oracle = quadrature(
                0.25,
                0.75,
                0.01,
                ix as f64 / 10.0,
                iy as f64 / 10.0,
                0.1,
                400,
            );
            assert!((p - oracle).abs() < 1e-8, "pixel {k}: {p} vs {oracle}");
        }
        // a 5-sigma margin leaves about 2.9e-7 of mass in each edge neighbour
        assert!((img.pixels[target] - 1.0).abs() < 2e-6);
        assert!((img.pixels[target + 1] - 2.8665157e-7).abs() < 1e-12);
        assert!(img.pixels[0] < 1e-12);
    }

    #[test]
    fn corner_point_splits_into_quarters() {
        let img = persistence_image(&diagram(&[(0.3, 1.0)]), &ImageParams::default()).unwrap();
        for k in [6 * 10 + 2, 6 * 10 + 3, 7 * 10 + 2, 7 * 10 + 3] {
            assert!((img.pixels[k] - 0.25).abs() < 1e-12, "{}", img.pixels[k]);
            let (ix, iy) = (k % 10, k / 10);
            let oracle = quadrature(0.3, 0.7, 0.01, ix as f64 / 10.0, iy as f64 / 10.0, 0.1, 400);
            assert!((img.pixels[k] - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn sample_mode_matches_integration_for_wide_kernels() {
        let d = diagram(&[(0.4, 0.9), (0.5, 0.8)]);
        let wide = ImageParams {
            sigma: 0.15,
            ..ImageParams::default()
        };
        let int = persistence_image(&d, &wide).unwrap();
        let sam = persistence_image(
            &d,
            &ImageParams {
                mode: ImageMode::Sample,
                ..wide
            },
        )
        .unwrap();
        let (a, b): (f64, f64) = (int.pixels.iter().sum(), sam.pixels.iter().sum());
        assert!((a - b).abs() / a < 0.10, "{a} vs {b}");

        // at the default width point sampling misses most of the mass
        let narrow = persistence_image(
            &diagram(&[(0.33, 0.96)]),
            &ImageParams {
                mode: ImageMode::Sample,
                ..ImageParams::default()
            },
        )
        .unwrap();
        assert!(narrow.pixels.iter().sum::<f64>() < 0.5);
    }

    #[test]
    fn global_scale_and_params() {
        let d = diagram(&[(0.25, 0.45)]);
        let img = persistence_image(
            &d,
            &ImageParams {
                scale: WeightScale::Global(0.4),
                ..ImageParams::default()
            },
        )
        .unwrap();
        assert!((img.pixels.iter().sum::<f64>() - 0.5).abs() < 1e-6);
        assert!(persistence_image(
            &d,
            &ImageParams {
                resolution: 0,
                ..ImageParams::default()
            }
        )
        .is_err());
        assert!(persistence_image(
            &d,
            &ImageParams {
                sigma: 0.0,
                ..ImageParams::default()
            }
        )
        .is_err());
    }

    #[test]
    fn diff_contract() {
        let zero = PersistenceImage {
            item_id: "a".into(),
            resolution: 10,
            pixels: vec![0.0; 100],
        };
        let same = pixel_diff(&zero, &zero).unwrap();
        assert!(same.entries.iter().enumerate().all(|(i, e)| *e == (i, 0.0)));

        let mut a = zero.clone();
        let mut b = zero.clone();
        a.pixels[7] = 0.5;
        b.pixels[7] = 0.2;
        let d = pixel_diff(&a, &b).unwrap();
        assert_eq!(d.entries.last().unwrap().0, 7);
        assert!((d.max_diff() - 0.3).abs() < 1e-15);

        let mut c = zero.clone();
        c.pixels[4] = 0.1;
        c.pixels[2] = 0.1;
        let d = pixel_diff(&c, &zero).unwrap();
        assert_eq!(&d.entries[98..], &[(2, 0.1), (4, 0.1)]);

        let small = PersistenceImage {
            item_id: "s".into(),
            resolution: 5,
            pixels: vec![0.0; 25],
        };
        assert_eq!(
            pixel_diff(&zero, &small),
            Err(VectorizeError::ResolutionMismatch(10, 5))
        );
    }

    fn interior_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((0.03f64..0.97, 0.03f64..0.5), 1..6)
            .prop_map(|v| v.into_iter().map(|(b, p)| (b, (b + p).min(1.0))).collect())
    }

    proptest! {
        #[test]
        fn adding_a_pair_never_decreases_pixels(points in interior_points(), extra in (0.0f64..1.0, 0.0f64..1.0)) {
            let params = ImageParams { scale: WeightScale::Global(0.5), ..ImageParams::default() };
            let base = persistence_image(&diagram(&points), &params).unwrap();
            let mut more = points.clone();
            more.push((extra.0, extra.0 + extra.1));
            let bigger = persistence_image(&diagram(&more), &params).unwrap();
            for (a, b) in base.pixels.iter().zip(&bigger.pixels) {
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn mass_never_exceeds_total_weight(points in interior_points()) {
            let img = persistence_image(&diagram(&points), &ImageParams::default()).unwrap();
            let b = points.iter().map(|p| p.1 - p.0).fold(0.0, f64::max);
            let total: f64 = points.iter().map(|p| weight(p.1 - p.0, b).unwrap()).sum();
            let mass: f64 = img.pixels.iter().sum();
            prop_assert!(img.pixels.iter().all(|p| *p >= 0.0 && p.is_finite()));
            prop_assert!(mass <= total + 1e-12);
        }

        #[test]
        fn mass_equals_total_weight_six_sigma_inside(
            points in proptest::collection::vec((0.06f64..0.94, 0.06f64..0.94), 1..8)
        ) {
            let d = diagram(&points.iter().map(|&(b, p)| (b, b + p)).collect::<Vec<_>>());
            let uv = birth_persistence_transform(&d);
            let b = uv.iter().map(|p| p.1).fold(0.0, f64::max);
            let total: f64 = uv.iter().map(|p| weight(p.1, b).unwrap()).sum();
            let mass: f64 = persistence_image(&d, &ImageParams::default()).unwrap().pixels.iter().sum();
            prop_assert!((mass - total).abs() <= 1e-6, "{} vs {}", mass, total);
        }

        #[test]
        fn sorted_diff_is_permutation(a in proptest::collection::vec(0.0f64..1.0, 16), b in proptest::collection::vec(0.0f64..1.0, 16)) {
            let mk = |p: Vec<f64>| PersistenceImage { item_id: String::new(), resolution: 4, pixels: p };
            let d = pixel_diff(&mk(a.clone()), &mk(b.clone())).unwrap();
            let r = pixel_diff(&mk(b), &mk(a)).unwrap();
            prop_assert_eq!(&d, &r);
            prop_assert!(d.entries.windows(2).all(|w| w[0].1 <= w[1].1));
            let mut idx: Vec<usize> = d.entries.iter().map(|e| e.0).collect();
            idx.sort_unstable();
            prop_assert_eq!(idx, (0..16).collect::<Vec<_>>());
        }
    }
}
