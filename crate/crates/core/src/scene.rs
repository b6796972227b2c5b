//! Road-surface scenes, noisy acquisitions and value quantization.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::NoiseProfile;

/// Tessellation of the visible road into `n_w x n_d` square tiles of side `s` (cm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    n_w: usize,
    n_d: usize,
    s: f64,
}

impl TileGrid {
    pub fn new(n_w: usize, n_d: usize, s: f64) -> Result<Self> {
        if n_w == 0 {
            return Err(invalid("n_w", "must be >= 1"));
        }
        if n_d == 0 {
            return Err(invalid("n_d", "must be >= 1"));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(invalid("s", format!("must be > 0, got {s}")));
        }
        Ok(Self { n_w, n_d, s })
    }

    /// Builds the grid covering a road of width `w` and depth `d`.
    pub fn covering(w: f64, d: f64, s: f64) -> Result<Self> {
        Self::new((w / s).ceil() as usize, (d / s).ceil() as usize, s)
    }

    /// 6 tiles across, 11 along, 20 cm sides.
    pub fn reference() -> Self {
        Self { n_w: 6, n_d: 11, s: 20.0 }
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.n_w, self.n_d)
    }

    pub fn tile_count(&self) -> usize {
        self.n_w * self.n_d
    }
}

/// Underlying surface amplitudes `a[k, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMatrix(Array2<f64>);

impl SceneMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// An observed tile matrix: a capture `Y` or a stored map section `Y^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledImage(Array2<f64>);

impl TiledImage {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(((k, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid("values", format!("non-finite value {v} at tile ({k}, {j})")));
        }
        Ok(Self(values))
    }

    pub fn from_shape_vec(shape: (usize, usize), data: Vec<f64>) -> Result<Self> {
        let arr = Array2::from_shape_vec(shape, data)
            .map_err(|e| invalid("values", e.to_string()))?;
        Self::new(arr)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.mapv(f))
    }

    pub(crate) fn ensure_dim(&self, expected: (usize, usize)) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

impl From<SceneMatrix> for TiledImage {
    fn from(a: SceneMatrix) -> Self {
        Self(a.0)
    }
}

/// Integer value levels `0..m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueAlphabet {
    levels: usize,
}

impl ValueAlphabet {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(invalid("levels", format!("need at least 2 levels, got {levels}")));
        }
        Ok(Self { levels })
    }

    /// Eight-bit grey levels.
    pub fn eight_bit() -> Self {
        Self { levels: 256 }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn max_level(&self) -> usize {
        self.levels - 1
    }

    /// Nearest level, halves rounded away from zero, clamped into range.
    pub fn quantize_value(&self, v: f64) -> f64 {
        v.round().clamp(0.0, self.max_level() as f64)
    }
}

impl Default for ValueAlphabet {
    fn default() -> Self {
        Self::eight_bit()
    }
}

/// Statistics of the surface generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePrior {
    pub mu: f64,
    pub sigma_a: f64,
    pub alpha: f64,
}

impl ScenePrior {
    pub fn new(mu: f64, sigma_a: f64, alpha: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(invalid("mu", "must be finite"));
        }
        if !(sigma_a.is_finite() && sigma_a >= 0.0) {
            return Err(invalid("sigma_a", format!("must be >= 0, got {sigma_a}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(invalid("alpha", format!("must lie in [0, 1), got {alpha}")));
        }
        Ok(Self { mu, sigma_a, alpha })
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Self::new(self.mu, self.sigma_a, alpha)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws a surface. Each row `k` is an independent stationary AR(1) sequence
/// along the depth index `j` with mean `mu` and variance `sigma_a^2`;
/// `alpha = 0` consumes the same draws as (and equals) the i.i.d. case.
pub fn generate_scene<R: Rng + ?Sized>(grid: &TileGrid, prior: &ScenePrior, rng: &mut R) -> SceneMatrix {
    let (n_w, n_d) = grid.dim();
    let innovation = (1.0 - prior.alpha * prior.alpha).sqrt();
    let mut values = Array2::zeros((n_w, n_d));
    for k in 0..n_w {
        let mut dev = prior.sigma_a * normal(rng);
        values[[k, 0]] = prior.mu + dev;
        for j in 1..n_d {
            dev = prior.alpha * dev + innovation * prior.sigma_a * normal(rng);
            values[[k, j]] = prior.mu + dev;
        }
    }
    SceneMatrix(values)
}

/// Stored map section `Y^l = A + N^i`.
pub fn make_map_section<R: Rng + ?Sized>(a: &SceneMatrix, sigma_i: f64, rng: &mut R) -> TiledImage {
    if sigma_i == 0.0 {
        return TiledImage(a.0.clone());
    }
    TiledImage(a.0.mapv(|v| v + sigma_i * normal(rng)))
}

/// Fresh capture `Y = A + N^i + N^s` with per-tile sensor variance from `profile`.
pub fn sense_capture<R: Rng + ?Sized>(
    a: &SceneMatrix,
    profile: &NoiseProfile,
    rng: &mut R,
) -> Result<TiledImage> {
    let (intrinsic, sensor) = capture_noise(profile, a.dim(), rng)?;
    Ok(TiledImage(&a.0 + &intrinsic + &sensor))
}

/// Intrinsic and sensor noise matrices of one capture. Draws are interleaved
/// per tile in row-major order; a zero variance consumes no draw.
pub(crate) fn capture_noise<R: Rng + ?Sized>(
    profile: &NoiseProfile,
    dim: (usize, usize),
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if dim != profile.dim() {
        return Err(Error::DimensionMismatch {
            expected: profile.dim(),
            actual: dim,
        });
    }
    let sigma_i = profile.sigma_i2().sqrt();
    let mut intrinsic = Array2::zeros(dim);
    let mut sensor = Array2::zeros(dim);
    for ((ni, ns), s2) in intrinsic.iter_mut().zip(sensor.iter_mut()).zip(profile.sigma_s2().iter()) {
        if sigma_i > 0.0 {
            *ni = sigma_i * normal(rng);
        }
        if *s2 > 0.0 {
            *ns = s2.sqrt() * normal(rng);
        }
    }
    Ok((intrinsic, sensor))
}

pub fn quantize(img: &TiledImage, v: &ValueAlphabet) -> TiledImage {
    img.map(|x| v.quantize_value(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraRig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn grid_validation() {
        assert!(TileGrid::new(0, 1, 1.0).is_err());
        assert!(TileGrid::new(1, 0, 1.0).is_err());
        assert!(TileGrid::new(1, 1, 0.0).is_err());
        assert_eq!(TileGrid::covering(110.0, 220.0, 20.0).unwrap().dim(), (6, 11));
        assert!(ScenePrior::new(128.0, -1.0, 0.0).is_err());
        assert!(ScenePrior::new(128.0, 5.0, 1.0).is_err());
        assert!(ValueAlphabet::new(1).is_err());
    }

    #[test]
    fn zero_variance_scene_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prior = ScenePrior::new(128.0, 0.0, 0.7).unwrap();
        let a = generate_scene(&TileGrid::reference(), &prior, &mut rng);
        assert!(a.values().iter().all(|&v| v == 128.0));
    }

    #[test]
    fn scene_is_deterministic() {
        let grid = TileGrid::reference();
        let prior = ScenePrior::new(128.0, 5.0, 0.3).unwrap();
        let a = generate_scene(&grid, &prior, &mut ChaCha8Rng::seed_from_u64(9));
        let b = generate_scene(&grid, &prior, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn ar1_alpha_zero_is_iid_path() {
        let grid = TileGrid::reference();
        let ar = generate_scene(&grid, &ScenePrior::new(128.0, 5.0, 0.0).unwrap(), &mut ChaCha8Rng::seed_from_u64(4));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let iid = Array2::from_shape_fn(grid.dim(), |_| 128.0 + 5.0 * normal(&mut rng));
        assert_eq!(ar.values(), &iid);
    }

    #[test]
    fn ar1_moments() {
        let grid = TileGrid::new(1, 2, 1.0).unwrap();
        for &alpha in &[0.0, 0.5, 0.99] {
            let prior = ScenePrior::new(128.0, 5.0, alpha).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let rows: Vec<SceneMatrix> = (0..100_000).map(|_| generate_scene(&grid, &prior, &mut rng)).collect();
            let second: Vec<f64> = rows.iter().map(|a| a.values()[[0, 1]]).collect();
            let (m, v) = mean_var(&second);
            assert!((m - 128.0).abs() < 0.1, "alpha {alpha}: mean {m}");
            assert!((v / 25.0 - 1.0).abs() < 0.02, "alpha {alpha}: var {v}");
            let first: Vec<f64> = rows.iter().map(|a| a.values()[[0, 0]]).collect();
            let (m0, v0) = mean_var(&first);
            let cov = first.iter().zip(&second).map(|(x, y)| (x - m0) * (y - m)).sum::<f64>()
                / (first.len() as f64 - 1.0);
            let rho = cov / (v0 * v).sqrt();
            assert!((rho - alpha).abs() < 0.01, "alpha {alpha}: rho {rho}");
        }
    }

    #[test]
    fn map_section_noise() {
        let grid = TileGrid::new(100, 1000, 1.0).unwrap();
        let prior = ScenePrior::new(128.0, 5.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = generate_scene(&grid, &prior, &mut rng);
        assert_eq!(make_map_section(&a, 0.0, &mut rng).values(), a.values());

        let y = make_map_section(&a, 5.0, &mut ChaCha8Rng::seed_from_u64(11));
        let again = make_map_section(&a, 5.0, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(y, again);
        let diff: Vec<f64> = (y.values() - a.values()).iter().copied().collect();
        let (m, v) = mean_var(&diff);
        assert!(m.abs() < 0.05, "{m}");
        assert!((v / 25.0 - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn capture_noise_levels() {
        let rig = CameraRig::reference();
        let grid = TileGrid::reference();
        let prior = ScenePrior::new(128.0, 5.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = generate_scene(&grid, &prior, &mut rng);

        let quiet = NoiseProfile::build(&rig, &grid, 0.0, 0.0).unwrap();
        assert_eq!(sense_capture(&a, &quiet, &mut rng).unwrap().values(), a.values());

        let profile = NoiseProfile::build(&rig, &grid, 2.5e-5, 0.0).unwrap();
        let y1 = sense_capture(&a, &profile, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let y2 = sense_capture(&a, &profile, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(y1, y2);

        // sensor component of the nearest row
        let mut near = Vec::new();
        for _ in 0..20_000 {
            let y = sense_capture(&a, &profile, &mut rng).unwrap();
            for k in 0..grid.n_w() {
                near.push(y.values()[[k, 0]] - a.values()[[k, 0]]);
            }
        }
        let (_, v) = mean_var(&near);
        assert!((v / 0.0587 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn intrinsic_and_sensor_are_uncorrelated() {
        let rig = CameraRig::reference();
        let grid = TileGrid::reference();
        let profile = NoiseProfile::build(&rig, &grid, 1e-4, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut xi, mut xs) = (Vec::new(), Vec::new());
        while xi.len() < 100_000 {
            let (ni, ns) = capture_noise(&profile, grid.dim(), &mut rng).unwrap();
            xi.extend(ni.iter().copied());
            // standardize so every tile contributes on the same scale
            xs.extend(ns.iter().zip(profile.sigma_s2().iter()).map(|(x, v)| x / v.sqrt()));
        }
        let (mi, vi) = mean_var(&xi);
        let (ms, vs) = mean_var(&xs);
        let n = xi.len() as f64;
        let cov = xi.iter().zip(&xs).map(|(a, b)| (a - mi) * (b - ms)).sum::<f64>() / n;
        let se = (vi * vs / n).sqrt();
        assert!(cov.abs() < 3.0 * se, "cov {cov}, se {se}");
    }

    #[test]
    fn quantize_examples() {
        let v = ValueAlphabet::eight_bit();
        let img = TiledImage::from_shape_vec((1, 6), vec![127.4, 127.5, -3.2, 300.0, 0.49, 254.6]).unwrap();
        let q = quantize(&img, &v);
        assert_eq!(q.values().as_slice().unwrap(), &[127.0, 128.0, 0.0, 255.0, 0.0, 255.0]);
        assert!(TiledImage::from_shape_vec((1, 1), vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn quantize_idempotent_and_in_range(xs in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let v = ValueAlphabet::eight_bit();
            let img = TiledImage::from_shape_vec((1, xs.len()), xs).unwrap();
            let q = quantize(&img, &v);
            prop_assert_eq!(&quantize(&q, &v), &q);
            prop_assert!(q.values().iter().all(|&x| (0.0..=255.0).contains(&x) && x.fract() == 0.0));
        }
    }
}
