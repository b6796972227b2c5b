//! Per-tile noise profiles, signal-to-noise diagnostics and matcher weights.

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::geometry::{grid_tile_areas, CameraRig};
use crate::scene::TileGrid;

/// Intrinsic variance shared by all tiles plus the geometry-dependent sensor
/// variance `n0 / area` of every tile.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    sigma_i2: f64,
    n0: f64,
    areas: Array2<f64>,
    sigma_s2: Array2<f64>,
}

impl NoiseProfile {
    pub fn build(rig: &CameraRig, grid: &TileGrid, n0: f64, sigma_i2: f64) -> Result<Self> {
        Self::from_areas(grid_tile_areas(grid, rig), n0, sigma_i2)
    }

    /// Profile over explicit focal-plane areas.
    pub fn from_areas(areas: Array2<f64>, n0: f64, sigma_i2: f64) -> Result<Self> {
        if !(n0.is_finite() && n0 >= 0.0) {
            return Err(invalid("n0", format!("must be >= 0, got {n0}")));
        }
        if !(sigma_i2.is_finite() && sigma_i2 >= 0.0) {
            return Err(invalid("sigma_i2", format!("must be >= 0, got {sigma_i2}")));
        }
        if let Some(((k, j), _)) = areas.indexed_iter().find(|(_, a)| !(**a > 0.0)) {
            return Err(Error::ZeroTileArea { k, j });
        }
        let sigma_s2 = areas.mapv(|a| n0 / a);
        Ok(Self {
            sigma_i2,
            n0,
            areas,
            sigma_s2,
        })
    }

    pub fn sigma_i2(&self) -> f64 {
        self.sigma_i2
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn areas(&self) -> &Array2<f64> {
        &self.areas
    }

    pub fn sigma_s2(&self) -> &Array2<f64> {
        &self.sigma_s2
    }

    pub fn dim(&self) -> (usize, usize) {
        self.areas.dim()
    }

    /// Posterior variance of the underlying capture signal at tile `(k, j)`.
    pub fn capture_variance(&self, k: usize, j: usize) -> f64 {
        self.sigma_i2 + self.sigma_s2[[k, j]]
    }
}

pub fn ratio_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

pub fn db_to_ratio(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Intrinsic variance realizing a signal-to-intrinsic-noise ratio given in dB.
pub fn sigma_i2_for_sinr_db(sigma2: f64, sinr_db: f64) -> f64 {
    sigma2 / db_to_ratio(sinr_db)
}

/// Sensor spectral density realizing `sigma2 / n0` given in dB.
pub fn n0_for_signal_to_sensor_db(sigma2: f64, db: f64) -> f64 {
    sigma2 / db_to_ratio(db)
}

/// Signal-to-sensor-noise ratio `sigma2 * area / n0` of tile `(k, j)`.
/// Returns `f64::INFINITY` when the profile has no sensor noise.
pub fn ssnr(profile: &NoiseProfile, sigma2: f64, k: usize, j: usize) -> f64 {
    if profile.n0 == 0.0 {
        return f64::INFINITY;
    }
    sigma2 * profile.areas[[k, j]] / profile.n0
}

/// Expanded SSNR of depth row `j` (zero-based), written directly in terms of the rig.
pub fn ssnr_closed_form(rig: &CameraRig, s: f64, sigma2: f64, n0: f64, j: usize) -> f64 {
    if n0 == 0.0 {
        return f64::INFINITY;
    }
    let (h, th, f) = (rig.height(), rig.theta(), rig.focal_length());
    let (sin, cos) = th.sin_cos();
    let lead = sigma2 * f * f * h / (2.0 * n0 * cos);
    let near = j as f64 * s * cos + h * sin;
    let far = (j + 1) as f64 * s * cos + h * sin;
    lead * (s / (near * near) - s / (far * far))
}

/// Signal-to-intrinsic-noise ratio; `f64::INFINITY` for a noiseless scene.
pub fn sinr(sigma2: f64, sigma_i2: f64) -> f64 {
    if sigma_i2 == 0.0 {
        return f64::INFINITY;
    }
    sigma2 / sigma_i2
}

/// Diagonal of a weighted inner product, laid out as a tile matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Array2<f64>);

impl WeightMatrix {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights", "entries must be finite and non-negative"));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        Ok(Self(weights))
    }

    /// All-ones weights (the Euclidean norm).
    pub fn uniform(dim: (usize, usize)) -> Self {
        Self(Array2::ones(dim))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.0 * c)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// Full maximum-likelihood weights `1 / (2 sigma_i^2 + n0 / area)`.
pub fn gip2d_weights(profile: &NoiseProfile) -> Result<WeightMatrix> {
    let denom = profile.sigma_s2.mapv(|s2| 2.0 * profile.sigma_i2 + s2);
    if denom.iter().any(|d| *d == 0.0) {
        return Err(invalid(
            "profile",
            "2 sigma_i^2 + sigma_s^2 vanishes; weights are undefined without any noise",
        ));
    }
    WeightMatrix::new(denom.mapv(f64::recip))
}

/// Noiseless-map weights `area / n0`.
pub fn gip1d_weights(profile: &NoiseProfile) -> Result<WeightMatrix> {
    if profile.n0 == 0.0 {
        return Err(invalid("n0", "must be > 0 for area-proportional weights"));
    }
    WeightMatrix::new(profile.areas.mapv(|a| a / profile.n0))
}
