//! Mutual-information matchers over a discrete value alphabet.
//!
//! All three variants build an empirical joint distribution over
//! `V x V` (first axis: captured image, second axis: map section) and score
//! it with `(H[first] + H[second]) / H[joint]`.
//!
//! * `NMI` adds unit mass at the pair of quantized tile values.
//! * `ENMI1D` spreads the capture's unit mass over the Gaussian posterior of
//!   the underlying signal and keeps the map value fixed.
//! * `ENMI2D` spreads along both axes (outer product of the two posteriors).
//!
//! Joints are stored as a dense window over the occupied part of `V x V`;
//! cells outside the window are zero.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::NoiseProfile;
use crate::scene::{quantize, TiledImage, ValueAlphabet};

/// Posterior support extends this many standard deviations around the mean.
pub const POSTERIOR_SPAN_SIGMAS: f64 = 6.0;

/// Tolerance on the total mass of a normalized distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MiVariant {
    Nmi,
    Enmi1d,
    Enmi2d,
}

impl MiVariant {
    pub const ALL: [MiVariant; 3] = [MiVariant::Nmi, MiVariant::Enmi1d, MiVariant::Enmi2d];

    pub fn name(&self) -> &'static str {
        match self {
            MiVariant::Nmi => "NMI",
            MiVariant::Enmi1d => "ENMI1D",
            MiVariant::Enmi2d => "ENMI2D",
        }
    }
}

impl fmt::Display for MiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MiVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NMI" => Ok(MiVariant::Nmi),
            "ENMI1D" => Ok(MiVariant::Enmi1d),
            "ENMI2D" => Ok(MiVariant::Enmi2d),
            _ => Err(invalid("variant", format!("unknown mutual-information variant `{s}`"))),
        }
    }
}

/// Discrete posterior of one tile's underlying value, stored as a window
/// `[offset, offset + probs.len())` of the alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePosterior {
    offset: usize,
    probs: Vec<f64>,
    levels: usize,
}

impl TilePosterior {
    pub fn point(level: usize, levels: usize) -> Self {
        Self {
            offset: level,
            probs: vec![1.0],
            levels,
        }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Probabilities of the support window.
    pub fn window(&self) -> &[f64] {
        &self.probs
    }

    /// Last level of the support window (inclusive).
    pub fn last(&self) -> usize {
        self.offset + self.probs.len() - 1
    }

    pub fn mass(&self, level: usize) -> f64 {
        level
            .checked_sub(self.offset)
            .and_then(|i| self.probs.get(i).copied())
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.levels];
        out[self.offset..=self.last()].copy_from_slice(&self.probs);
        out
    }
}

/// Upper tail `P(Z > z)` of the standard normal.
fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Smaller tail at `z`: `P(Z > z)` for `z >= 0`, `P(Z <= z)` otherwise.
fn edge_tail(z: f64) -> f64 {
    upper_tail(z.abs())
}

/// `P(a < Z <= b)` from the edge tails, avoiding cancellation.
fn bin_mass(a: f64, b: f64, tail_a: f64, tail_b: f64) -> f64 {
    if a >= 0.0 {
        tail_a - tail_b
    } else if b <= 0.0 {
        tail_b - tail_a
    } else {
        (1.0 - tail_a - tail_b).max(0.0)
    }
}

/// Gaussian `N(mean, variance)` integrated over the unit bins of the alphabet.
///
/// Level `i` receives the mass of `[i - 0.5, i + 0.5)`; the first and last
/// levels absorb the tails. The support is restricted to levels within six
/// standard deviations of the mean (always including the nearest level) and
/// renormalized. Zero variance gives a point mass at the quantized mean.
pub fn discretize_gaussian(mean: f64, variance: f64, v: &ValueAlphabet) -> TilePosterior {
    let levels = v.levels();
    let nearest = v.quantize_value(mean) as usize;
    if !(variance > 0.0) {
        return TilePosterior::point(nearest, levels);
    }
    let sigma = variance.sqrt();
    let top = v.max_level() as f64;
    let lo = (mean - POSTERIOR_SPAN_SIGMAS * sigma).ceil().clamp(0.0, top) as usize;
    let hi = (mean + POSTERIOR_SPAN_SIGMAS * sigma).floor().clamp(0.0, top) as usize;
    let (lo, hi) = (lo.min(nearest), hi.max(nearest));

    let edge = |i: usize| -> f64 {
        // z-score of the lower edge of bin i
        if i == 0 {
            f64::NEG_INFINITY
        } else if i == levels {
            f64::INFINITY
        } else {
            (i as f64 - 0.5 - mean) / sigma
        }
    };
    // one tail evaluation per edge, shared by neighbouring bins
    let tails: Vec<f64> = (lo..=hi + 1).map(|i| edge_tail(edge(i))).collect();
    let mut probs: Vec<f64> = (lo..=hi)
        .map(|i| bin_mass(edge(i), edge(i + 1), tails[i - lo], tails[i + 1 - lo]))
        .collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        probs.iter_mut().for_each(|p| *p /= total);
    } else {
        // the whole window sits beyond floating-point reach of the tails
        probs.iter_mut().for_each(|p| *p = 0.0);
        probs[nearest - lo] = 1.0;
    }
    TilePosterior {
        offset: lo,
        probs,
        levels,
    }
}

/// Non-negative mass over `V x V`, held as a dense window.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalJoint {
    levels: usize,
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
    normalized: bool,
}

impl EmpiricalJoint {
    /// Empty joint over the window `[row_lo, row_hi] x [col_lo, col_hi]`.
    fn with_window(levels: usize, (row_lo, row_hi): (usize, usize), (col_lo, col_hi): (usize, usize)) -> Self {
        let rows = row_hi - row_lo + 1;
        let cols = col_hi - col_lo + 1;
        Self {
            levels,
            row0: row_lo,
            col0: col_lo,
            rows,
            cols,
            mass: vec![0.0; rows * cols],
            normalized: false,
        }
    }

    /// Joint from a full `m x m` mass table.
    pub fn from_dense(mass: Array2<f64>, normalized: bool) -> Result<Self> {
        let (r, c) = mass.dim();
        if r != c || r < 2 {
            return Err(invalid("mass", format!("need a square table with >= 2 levels, got {r}x{c}")));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(invalid("mass", "entries must be finite and non-negative"));
        }
        let total: f64 = mass.sum();
        if normalized && (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { total });
        }
        Ok(Self {
            levels: r,
            row0: 0,
            col0: 0,
            rows: r,
            cols: c,
            mass: mass.iter().copied().collect(),
            normalized,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    fn add(&mut self, row: usize, col: usize, m: f64) {
        self.mass[(row - self.row0) * self.cols + (col - self.col0)] += m;
    }

    fn add_outer(&mut self, capture: &TilePosterior, map: &TilePosterior) {
        let c = map.offset - self.col0;
        let width = map.probs.len();
        for (i, &p) in capture.probs.iter().enumerate() {
            let start = (capture.offset + i - self.row0) * self.cols + c;
            let row = &mut self.mass[start..start + width];
            for (cell, &q) in row.iter_mut().zip(&map.probs) {
                *cell += p * q;
            }
        }
    }

    fn add_column(&mut self, capture: &TilePosterior, col: usize) {
        for (i, &p) in capture.probs.iter().enumerate() {
            self.add(capture.offset + i, col, p);
        }
    }

    fn normalize_by(&mut self, count: usize) {
        let n = count as f64;
        self.mass.iter_mut().for_each(|m| *m /= n);
        self.normalized = true;
    }

    /// Mass at `(capture value, map value)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row < self.row0 || col < self.col0 || row >= self.row0 + self.rows || col >= self.col0 + self.cols {
            return 0.0;
        }
        self.mass[(row - self.row0) * self.cols + (col - self.col0)]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.levels, self.levels), |(r, c)| self.get(r, c))
    }

    pub fn transpose(&self) -> Self {
        let mut mass = vec![0.0; self.mass.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                mass[c * self.rows + r] = self.mass[r * self.cols + c];
            }
        }
        Self {
            levels: self.levels,
            row0: self.col0,
            col0: self.row0,
            rows: self.cols,
            cols: self.rows,
            mass,
            normalized: self.normalized,
        }
    }

    /// Marginal over the captured-image axis (length `m`).
    pub fn capture_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.levels];
        for (r, row) in self.mass.chunks_exact(self.cols).enumerate() {
            out[self.row0 + r] = row.iter().sum();
        }
        out
    }

    /// Marginal over the map axis (length `m`).
    pub fn map_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.levels];
        for row in self.mass.chunks_exact(self.cols) {
            for (c, m) in row.iter().enumerate() {
                out[self.col0 + c] += m;
            }
        }
        out
    }

    fn cells(&self) -> &[f64] {
        &self.mass
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`. The masses must sum to one.
pub fn entropy(masses: &[f64]) -> Result<f64> {
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL || masses.iter().any(|m| *m < 0.0) {
        return Err(Error::NotNormalized { total });
    }
    Ok(entropy_unchecked(masses))
}

fn entropy_unchecked(masses: &[f64]) -> f64 {
    let h: f64 = masses.iter().filter(|p| **p > 0.0).map(|&p| -p * p.log2()).sum();
    h.max(0.0)
}

/// Joint entropies below this are treated as a single occupied cell.
const ZERO_ENTROPY: f64 = 1e-12;

/// `(H[capture] + H[map]) / H[joint]`, or 2 when the joint is a point mass.
pub fn mi_score(joint: &EmpiricalJoint) -> Result<f64> {
    if !joint.normalized {
        return Err(Error::NotNormalized { total: joint.total() });
    }
    let h12 = entropy(joint.cells())?;
    if h12 < ZERO_ENTROPY {
        return Ok(2.0);
    }
    let h1 = entropy_unchecked(&joint.capture_marginal());
    let h2 = entropy_unchecked(&joint.map_marginal());
    Ok((h1 + h2) / h12)
}

fn alphabet_levels(img: &TiledImage, v: &ValueAlphabet) -> Result<Vec<usize>> {
    img.values()
        .indexed_iter()
        .map(|((k, j), &x)| {
            if x.fract() != 0.0 || x < 0.0 || x > v.max_level() as f64 {
                Err(Error::OutOfAlphabet {
                    value: x,
                    k,
                    j,
                    levels: v.levels(),
                })
            } else {
                Ok(x as usize)
            }
        })
        .collect()
}

fn span(levels: impl Iterator<Item = (usize, usize)>) -> (usize, usize) {
    levels.fold((usize::MAX, 0), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
}

/// Pair-counting joint of two quantized images.
pub fn joint_nmi(yq: &TiledImage, ylq: &TiledImage, v: &ValueAlphabet) -> Result<EmpiricalJoint> {
    ylq.ensure_dim(yq.dim())?;
    let a = alphabet_levels(yq, v)?;
    let b = alphabet_levels(ylq, v)?;
    let mut joint = EmpiricalJoint::with_window(
        v.levels(),
        span(a.iter().map(|&x| (x, x))),
        span(b.iter().map(|&x| (x, x))),
    );
    for (&r, &c) in a.iter().zip(&b) {
        joint.add(r, c, 1.0);
    }
    joint.normalize_by(a.len());
    Ok(joint)
}

/// Posteriors of the captured image's underlying values, one per tile in
/// row-major order. Variance `sigma_i^2 + sigma_s^2(k, j)`.
pub fn capture_posteriors(y: &TiledImage, profile: &NoiseProfile, v: &ValueAlphabet) -> Result<Vec<TilePosterior>> {
    y.ensure_dim(profile.dim())?;
    Ok(y.values()
        .indexed_iter()
        .map(|((k, j), &x)| discretize_gaussian(x, profile.capture_variance(k, j), v))
        .collect())
}

/// Posteriors of a stored map section's underlying values (variance `sigma_i^2`).
pub fn map_posteriors(y_l: &TiledImage, profile: &NoiseProfile, v: &ValueAlphabet) -> Result<Vec<TilePosterior>> {
    y_l.ensure_dim(profile.dim())?;
    Ok(y_l
        .values()
        .iter()
        .map(|&x| discretize_gaussian(x, profile.sigma_i2(), v))
        .collect())
}

fn posterior_span(ps: &[TilePosterior]) -> (usize, usize) {
    span(ps.iter().map(|p| (p.offset, p.last())))
}

fn joint_from_posteriors(capture: &[TilePosterior], map: &[TilePosterior], levels: usize) -> EmpiricalJoint {
    let mut joint = EmpiricalJoint::with_window(levels, posterior_span(capture), posterior_span(map));
    for (p, q) in capture.iter().zip(map) {
        joint.add_outer(p, q);
    }
    joint.normalize_by(capture.len());
    joint
}

fn joint_from_capture_posteriors(capture: &[TilePosterior], map_levels: &[usize], levels: usize) -> EmpiricalJoint {
    let mut joint = EmpiricalJoint::with_window(
        levels,
        posterior_span(capture),
        span(map_levels.iter().map(|&x| (x, x))),
    );
    for (p, &c) in capture.iter().zip(map_levels) {
        joint.add_column(p, c);
    }
    joint.normalize_by(capture.len());
    joint
}

/// Joint of the posterior-spread capture and posterior-spread map section.
pub fn joint_enmi2d(y: &TiledImage, y_l: &TiledImage, profile: &NoiseProfile, v: &ValueAlphabet) -> Result<EmpiricalJoint> {
    let capture = capture_posteriors(y, profile, v)?;
    let map = map_posteriors(y_l, profile, v)?;
    Ok(joint_from_posteriors(&capture, &map, v.levels()))
}

/// Joint of the posterior-spread capture against a quantized (noiseless) map.
pub fn joint_enmi1d(y: &TiledImage, ylq: &TiledImage, profile: &NoiseProfile, v: &ValueAlphabet) -> Result<EmpiricalJoint> {
    let capture = capture_posteriors(y, profile, v)?;
    ylq.ensure_dim(y.dim())?;
    let cols = alphabet_levels(ylq, v)?;
    Ok(joint_from_capture_posteriors(&capture, &cols, v.levels()))
}

/// Scores of every candidate under `variant`. The capture-side work is done once.
pub fn mi_scores(
    y: &TiledImage,
    candidates: &[TiledImage],
    variant: MiVariant,
    profile: &NoiseProfile,
    v: &ValueAlphabet,
) -> Result<Vec<f64>> {
    match variant {
        MiVariant::Nmi => {
            let yq = quantize(y, v);
            candidates
                .iter()
                .map(|c| mi_score(&joint_nmi(&yq, &quantize(c, v), v)?))
                .collect()
        }
        MiVariant::Enmi1d => {
            let capture = capture_posteriors(y, profile, v)?;
            candidates
                .iter()
                .map(|c| {
                    c.ensure_dim(y.dim())?;
                    let cols = alphabet_levels(&quantize(c, v), v)?;
                    mi_score(&joint_from_capture_posteriors(&capture, &cols, v.levels()))
                })
                .collect()
        }
        MiVariant::Enmi2d => {
            let capture = capture_posteriors(y, profile, v)?;
            candidates
                .iter()
                .map(|c| {
                    let map = map_posteriors(c, profile, v)?;
                    mi_score(&joint_from_posteriors(&capture, &map, v.levels()))
                })
                .collect()
        }
    }
}

/// Zero-based index of the candidate with the highest score; ties go to the lowest index.
pub fn classify_mi(
    y: &TiledImage,
    candidates: &[TiledImage],
    variant: MiVariant,
    profile: &NoiseProfile,
    v: &ValueAlphabet,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let scores = mi_scores(y, candidates, variant, profile, v)?;
    Ok((1..scores.len()).fold(0, |best, i| if scores[i] > scores[best] { i } else { best }))
}
