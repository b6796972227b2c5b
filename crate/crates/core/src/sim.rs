//! Monte Carlo estimation of misclassification probabilities.
//!
//! A trial draws `L` independent surfaces, stores a noisy map section of
//! each, captures a fresh noisy image of one of them (chosen uniformly) and
//! asks every configured matcher which section it came from. All matchers
//! see the same realization.
//!
//! Every trial owns a ChaCha8 stream keyed by the master seed and selected by
//! `(sweep point, trial)`, so results do not depend on how trials are
//! scheduled across threads.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::CameraRig;
use crate::match_ip::{argmin_weighted, IpVariant};
use crate::match_mi::{classify_mi, MiVariant};
use crate::noise::{NoiseProfile, WeightMatrix};
use crate::scene::{
    generate_scene, make_map_section, quantize, sense_capture, SceneMatrix, ScenePrior, TileGrid, TiledImage,
    ValueAlphabet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ip(IpVariant),
    Mi(MiVariant),
}

impl Algorithm {
    pub const IP: [Algorithm; 3] = [
        Algorithm::Ip(IpVariant::Sip),
        Algorithm::Ip(IpVariant::Gip1d),
        Algorithm::Ip(IpVariant::Gip2d),
    ];
    pub const MI: [Algorithm; 3] = [
        Algorithm::Mi(MiVariant::Nmi),
        Algorithm::Mi(MiVariant::Enmi1d),
        Algorithm::Mi(MiVariant::Enmi2d),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ip(v) => v.name(),
            Algorithm::Mi(v) => v.name(),
        }
    }

    pub fn is_mi(&self) -> bool {
        matches!(self, Algorithm::Mi(_))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        s.parse::<IpVariant>()
            .map(Algorithm::Ip)
            .or_else(|_| s.parse::<MiVariant>().map(Algorithm::Mi))
            .map_err(|_| invalid("algorithms", format!("unknown algorithm `{s}`")))
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which parameter a curve varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    N0,
    Alpha,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::N0 => "n0",
            SweepParam::Alpha => "alpha",
        }
    }
}

/// Everything a sweep needs. `n0` and `alpha` are grids: a noise sweep
/// walks `n0` with the single `alpha` entry, an AR(1) sweep walks `alpha`
/// with the single `n0` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rig: CameraRig,
    pub grid: TileGrid,
    pub prior: ScenePrior,
    pub alphabet: ValueAlphabet,
    pub l_count: usize,
    pub sigma_i2: f64,
    pub n0: Vec<f64>,
    pub alpha: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub quantize_ip: bool,
    /// Width of the value bins used by the MI family (1 = full alphabet).
    pub mi_bin_width: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_count < 2 {
            return Err(invalid("l_count", format!("need at least 2 candidate sections, got {}", self.l_count)));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be >= 1"));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("algorithms", "at least one algorithm is required"));
        }
        if !(self.sigma_i2.is_finite() && self.sigma_i2 >= 0.0) {
            return Err(invalid("sigma_i2", format!("must be >= 0, got {}", self.sigma_i2)));
        }
        if self.n0.is_empty() || self.n0.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(invalid("n0", "need a non-empty list of values >= 0"));
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(0.0..1.0).contains(a)) {
            return Err(invalid("alpha", "need a non-empty list of values in [0, 1)"));
        }
        if !(self.mi_bin_width.is_finite() && self.mi_bin_width >= 1.0) {
            return Err(invalid("mi_bin_width", format!("must be >= 1, got {}", self.mi_bin_width)));
        }
        Ok(())
    }

    fn single(values: &[f64], name: &'static str) -> Result<f64> {
        match values {
            [v] => Ok(*v),
            _ => Err(invalid(name, format!("expected a single value for this sweep, got {}", values.len()))),
        }
    }
}

/// Parameters of one point on a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointParams {
    pub n0: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub true_index: usize,
    /// Chosen index per configured algorithm.
    pub chosen: Vec<usize>,
}

impl TrialOutcome {
    pub fn errors(&self) -> impl Iterator<Item = bool> + '_ {
        self.chosen.iter().map(move |c| *c != self.true_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sweep: SweepParam,
    pub value: f64,
    pub algorithms: Vec<Algorithm>,
    pub errors: Vec<u64>,
    pub trials: u64,
}

impl CurvePoint {
    pub fn rate(&self, algorithm: Algorithm) -> Option<f64> {
        let idx = self.algorithms.iter().position(|a| *a == algorithm)?;
        Some(self.errors[idx] as f64 / self.trials as f64)
    }

    pub fn rates(&self) -> impl Iterator<Item = (Algorithm, f64)> + '_ {
        self.algorithms
            .iter()
            .zip(&self.errors)
            .map(|(a, e)| (*a, *e as f64 / self.trials as f64))
    }
}

/// Random stream of trial `trial` at sweep point `point`.
pub fn trial_rng(seed: u64, point: u32, trial: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

enum Matcher {
    Weighted(WeightMatrix),
    Mi(MiVariant),
}

/// Per-point state shared by all trials: noise profile, prior and matcher weights.
pub struct PointContext<'a> {
    cfg: &'a SimConfig,
    prior: ScenePrior,
    profile: NoiseProfile,
    mi_profile: NoiseProfile,
    mi_alphabet: ValueAlphabet,
    matchers: Vec<Matcher>,
}

impl<'a> PointContext<'a> {
    pub fn new(cfg: &'a SimConfig, point: PointParams) -> Result<Self> {
        cfg.validate()?;
        let prior = cfg.prior.with_alpha(point.alpha)?;
        let profile = NoiseProfile::build(&cfg.rig, &cfg.grid, point.n0, cfg.sigma_i2)?;
        // coarser MI bins: work in units of the bin width
        let w2 = cfg.mi_bin_width * cfg.mi_bin_width;
        let mi_profile = NoiseProfile::from_areas(profile.areas().clone(), point.n0 / w2, cfg.sigma_i2 / w2)?;
        let mi_alphabet = ValueAlphabet::new((cfg.alphabet.levels() as f64 / cfg.mi_bin_width).ceil() as usize)?;
        let matchers = cfg
            .algorithms
            .iter()
            .map(|a| match a {
                Algorithm::Ip(v) => v.weights(&profile).map(Matcher::Weighted),
                Algorithm::Mi(v) => Ok(Matcher::Mi(*v)),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg,
            prior,
            profile,
            mi_profile,
            mi_alphabet,
            matchers,
        })
    }

    pub fn profile(&self) -> &NoiseProfile {
        &self.profile
    }

    /// Runs one trial on freshly drawn surfaces.
    pub fn run_trial<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TrialOutcome> {
        let scenes: Vec<SceneMatrix> = (0..self.cfg.l_count)
            .map(|_| generate_scene(&self.cfg.grid, &self.prior, rng))
            .collect();
        self.run_with_scenes(&scenes, rng)
    }

    /// Runs one trial on the given surfaces (one per candidate section).
    pub fn run_with_scenes<R: Rng + ?Sized>(&self, scenes: &[SceneMatrix], rng: &mut R) -> Result<TrialOutcome> {
        if scenes.is_empty() {
            return Err(Error::NoCandidates);
        }
        let true_index = rng.random_range(0..scenes.len());
        let sigma_i = self.cfg.sigma_i2.sqrt();
        let sections: Vec<TiledImage> = scenes.iter().map(|a| make_map_section(a, sigma_i, rng)).collect();
        let capture = sense_capture(&scenes[true_index], &self.profile, rng)?;

        let ip_inputs = if self.cfg.quantize_ip {
            let v = &self.cfg.alphabet;
            Some((quantize(&capture, v), sections.iter().map(|s| quantize(s, v)).collect::<Vec<_>>()))
        } else {
            None
        };
        let mi_inputs = if self.cfg.mi_bin_width != 1.0 {
            let w = self.cfg.mi_bin_width;
            Some((capture.map(|x| x / w), sections.iter().map(|s| s.map(|x| x / w)).collect::<Vec<_>>()))
        } else {
            None
        };

        let chosen = self
            .matchers
            .iter()
            .map(|m| match m {
                Matcher::Weighted(w) => {
                    let (y, c) = ip_inputs.as_ref().map_or((&capture, &sections), |(y, c)| (y, c));
                    argmin_weighted(y, c, w)
                }
                Matcher::Mi(v) => {
                    let (y, c) = mi_inputs.as_ref().map_or((&capture, &sections), |(y, c)| (y, c));
                    classify_mi(y, c, *v, &self.mi_profile, &self.mi_alphabet)
                }
            })
            .collect::<Result<_>>()?;
        Ok(TrialOutcome { true_index, chosen })
    }
}

/// Convenience wrapper building the point context for a single trial.
pub fn run_trial<R: Rng + ?Sized>(cfg: &SimConfig, point: PointParams, rng: &mut R) -> Result<TrialOutcome> {
    PointContext::new(cfg, point)?.run_trial(rng)
}

/// Error counts of every algorithm over `cfg.trials` trials at one point.
/// `point_index` selects the family of random streams.
pub fn estimate_pe(cfg: &SimConfig, point: PointParams, point_index: u32, sweep: SweepParam) -> Result<CurvePoint> {
    let ctx = PointContext::new(cfg, point)?;
    let n_alg = cfg.algorithms.len();
    let trials = u32::try_from(cfg.trials).map_err(|_| invalid("trials", "too many trials"))?;
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| {
            let outcome = ctx.run_trial(&mut trial_rng(cfg.seed, point_index, t))?;
            Ok(outcome.errors().map(u64::from).collect::<Vec<_>>())
        })
        .try_reduce(
            || vec![0u64; n_alg],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    Ok(CurvePoint {
        sweep,
        value: match sweep {
            SweepParam::N0 => point.n0,
            SweepParam::Alpha => point.alpha,
        },
        algorithms: cfg.algorithms.clone(),
        errors,
        trials: cfg.trials as u64,
    })
}

/// One curve point per entry of `cfg.n0`, at the single configured `alpha`.
pub fn sweep_noise(cfg: &SimConfig) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let alpha = SimConfig::single(&cfg.alpha, "alpha")?;
    cfg.n0
        .iter()
        .enumerate()
        .map(|(i, &n0)| estimate_pe(cfg, PointParams { n0, alpha }, i as u32, SweepParam::N0))
        .collect()
}

/// One curve point per entry of `cfg.alpha`, at the single configured `n0`.
pub fn sweep_alpha(cfg: &SimConfig) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let n0 = SimConfig::single(&cfg.n0, "n0")?;
    cfg.alpha
        .iter()
        .enumerate()
        .map(|(i, &alpha)| estimate_pe(cfg, PointParams { n0, alpha }, i as u32, SweepParam::Alpha))
        .collect()
}

/// `count` points `start * 10^(k / per_decade)`, `k = 0..count`.
pub fn log_grid(start: f64, per_decade: u32, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| start * 10f64.powf(k as f64 / per_decade as f64))
        .collect()
}

/// `0.05, 0.10, ..., 0.95, 0.96, 0.97, 0.98, 0.99`.
pub fn ar1_alpha_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (1..=19).map(|i| i as f64 * 0.05).collect();
    g.extend([0.96, 0.97, 0.98, 0.99]);
    g
}

/// Noise grid of the inner-product experiments: 2.5e-5 up to ~1.58, five points per decade.
pub fn ip_noise_grid() -> Vec<f64> {
    log_grid(2.5e-5, 5, 25)
}

/// Noise grid of the mutual-information experiments: 2.5e-7 up to ~1.58.
pub fn mi_noise_grid() -> Vec<f64> {
    log_grid(2.5e-7, 5, 35)
}

impl SimConfig {
    /// Reference parameters with the given matchers, one noise value and `alpha = 0`.
    pub fn reference(algorithms: Vec<Algorithm>, sigma_i2: f64, n0: f64) -> Self {
        Self {
            rig: CameraRig::reference(),
            grid: TileGrid::reference(),
            prior: ScenePrior::new(128.0, 5.0, 0.0).expect("valid prior"),
            alphabet: ValueAlphabet::eight_bit(),
            l_count: 2,
            sigma_i2,
            n0: vec![n0],
            alpha: vec![0.0],
            trials: 10_000,
            seed: 42,
            algorithms,
            quantize_ip: false,
            mi_bin_width: 1.0,
        }
    }
}

/// Copies of one scene, for trials where the candidates are indistinguishable.
pub fn identical_scenes(a: &SceneMatrix, count: usize) -> Vec<SceneMatrix> {
    vec![SceneMatrix::new(Array2::clone(a.values())); count]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(algorithms: Vec<Algorithm>, sigma_i2: f64, n0: f64, trials: usize) -> SimConfig {
        SimConfig {
            trials,
            ..SimConfig::reference(algorithms, sigma_i2, n0)
        }
    }

    fn all() -> Vec<Algorithm> {
        Algorithm::IP.into_iter().chain(Algorithm::MI).collect()
    }

    #[test]
    fn algorithm_names() {
        for a in all() {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("foo".parse::<Algorithm>().is_err());
        assert_eq!(" gip2d".parse::<Algorithm>().unwrap(), Algorithm::Ip(IpVariant::Gip2d));
    }

    #[test]
    fn validation() {
        let mut c = cfg(all(), 1.0, 1e-5, 10);
        assert!(c.validate().is_ok());
        c.l_count = 1;
        assert!(c.validate().is_err());
        let mut c = cfg(all(), 1.0, 1e-5, 0);
        assert!(c.validate().is_err());
        c.trials = 1;
        c.alpha = vec![1.0];
        assert!(c.validate().is_err());
        let c = SimConfig { alpha: vec![0.1, 0.2], ..cfg(all(), 1.0, 1e-5, 1) };
        assert!(sweep_noise(&c).is_err());
        let c = SimConfig { n0: vec![0.1, 0.2], ..cfg(all(), 1.0, 1e-5, 1) };
        assert!(sweep_alpha(&c).is_err());
    }

    #[test]
    fn noiseless_trials_are_correct() {
        let c = cfg(all(), 0.0, 1e-12, 1);
        let ctx = PointContext::new(&c, PointParams { n0: 1e-12, alpha: 0.0 }).unwrap();
        for t in 0..50 {
            let o = ctx.run_trial(&mut trial_rng(7, 0, t)).unwrap();
            assert!(o.errors().all(|e| !e), "{o:?}");
        }
        let p = estimate_pe(&c, PointParams { n0: 1e-12, alpha: 0.0 }, 0, SweepParam::N0).unwrap();
        assert!(p.rates().all(|(_, r)| r == 0.0));
    }

    #[test]
    fn identical_candidates_give_coin_flips() {
        let c = cfg(Algorithm::IP.to_vec(), 12.53, 2.5e-3, 1);
        let ctx = PointContext::new(&c, PointParams { n0: 2.5e-3, alpha: 0.0 }).unwrap();
        let n = 4000;
        let mut errs = vec![0u32; 3];
        for t in 0..n {
            let mut rng = trial_rng(3, 0, t);
            let a = generate_scene(&c.grid, &c.prior, &mut rng);
            let o = ctx.run_with_scenes(&identical_scenes(&a, 2), &mut rng).unwrap();
            o.errors().zip(errs.iter_mut()).for_each(|(e, n)| *n += e as u32);
        }
        for e in errs {
            let rate = e as f64 / n as f64;
            assert!((rate - 0.5).abs() < 0.03, "{rate}");
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let c = cfg(all(), 2.5, 1e-4, 1);
        let p = PointParams { n0: 1e-4, alpha: 0.3 };
        let a = run_trial(&c, p, &mut trial_rng(5, 1, 2)).unwrap();
        let b = run_trial(&c, p, &mut trial_rng(5, 1, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chosen.len(), 6);
    }

    #[test]
    fn streams_differ_across_points_and_trials() {
        let x = trial_rng(1, 0, 0).random::<u64>();
        assert_ne!(x, trial_rng(1, 0, 1).random::<u64>());
        assert_ne!(x, trial_rng(1, 1, 0).random::<u64>());
        assert_ne!(x, trial_rng(2, 0, 0).random::<u64>());
    }

    #[test]
    fn estimate_independent_of_thread_count() {
        let c = cfg(all(), 2.5, 2.5e-4, 200);
        let p = PointParams { n0: 2.5e-4, alpha: 0.0 };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_pe(&c, p, 3, SweepParam::N0).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn sweeps_produce_one_point_per_value() {
        let c = SimConfig { n0: vec![1e-4], ..cfg(Algorithm::IP.to_vec(), 12.53, 1e-4, 20) };
        assert_eq!(sweep_noise(&c).unwrap().len(), 1);
        let c = SimConfig { alpha: vec![0.0, 0.5, 0.9], ..c };
        let pts = sweep_alpha(&c).unwrap();
        assert_eq!(pts.iter().map(|p| p.value).collect::<Vec<_>>(), vec![0.0, 0.5, 0.9]);
        assert!(pts.iter().all(|p| p.sweep == SweepParam::Alpha && p.trials == 20));
    }

    #[test]
    fn coarse_mi_bins_run() {
        let c = SimConfig { mi_bin_width: 4.0, ..cfg(Algorithm::MI.to_vec(), 2.5, 1e-5, 50) };
        let p = estimate_pe(&c, PointParams { n0: 1e-5, alpha: 0.0 }, 0, SweepParam::N0).unwrap();
        assert!(p.rates().all(|(_, r)| (0.0..=1.0).contains(&r)));
    }

    #[test]
    fn grids() {
        let g = ip_noise_grid();
        assert_eq!(g.len(), 25);
        assert!((g[1] - 3.962_232_981_152_785_5e-5).abs() < 1e-18);
        assert!((g[24] - 1.577_393_361_200_483).abs() < 1e-12);
        let g = mi_noise_grid();
        assert_eq!(g.len(), 35);
        assert!((g[10] - 2.5e-5).abs() < 1e-17);
        let a = ar1_alpha_grid();
        assert_eq!(a.len(), 23);
        assert_eq!(a[9], 0.5);
    }
}
