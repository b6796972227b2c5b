//! Inner-product matchers: Euclidean (SIP) and the two weighted norms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{gip1d_weights, gip2d_weights, NoiseProfile, WeightMatrix};
use crate::scene::TiledImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IpVariant {
    /// Unit weights.
    Sip,
    /// `area / n0` weights, ignores intrinsic noise.
    Gip1d,
    /// `1 / (2 sigma_i^2 + n0 / area)` weights.
    Gip2d,
}

impl IpVariant {
    pub const ALL: [IpVariant; 3] = [IpVariant::Sip, IpVariant::Gip1d, IpVariant::Gip2d];

    pub fn name(&self) -> &'static str {
        match self {
            IpVariant::Sip => "SIP",
            IpVariant::Gip1d => "GIP1D",
            IpVariant::Gip2d => "GIP2D",
        }
    }

    pub fn weights(&self, profile: &NoiseProfile) -> Result<WeightMatrix> {
        match self {
            IpVariant::Sip => Ok(WeightMatrix::uniform(profile.dim())),
            IpVariant::Gip1d => gip1d_weights(profile),
            IpVariant::Gip2d => gip2d_weights(profile),
        }
    }
}

impl fmt::Display for IpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SIP" => Ok(IpVariant::Sip),
            "GIP1D" => Ok(IpVariant::Gip1d),
            "GIP2D" => Ok(IpVariant::Gip2d),
            _ => Err(invalid("variant", format!("unknown inner-product variant `{s}`"))),
        }
    }
}

/// `sum w[k, j] (y[k, j] - y_l[k, j])^2`.
pub fn weighted_distance_sq(y: &TiledImage, y_l: &TiledImage, w: &WeightMatrix) -> Result<f64> {
    y_l.ensure_dim(y.dim())?;
    if w.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: y.dim(),
            actual: w.dim(),
        });
    }
    Ok(y.values()
        .iter()
        .zip(y_l.values().iter())
        .zip(w.values().iter())
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum())
}

/// Index of the candidate with the smallest weighted distance; ties go to the lowest index.
pub fn argmin_weighted(y: &TiledImage, candidates: &[TiledImage], w: &WeightMatrix) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut best = (0, f64::INFINITY);
    for (idx, c) in candidates.iter().enumerate() {
        let d = weighted_distance_sq(y, c, w)?;
        if d < best.1 {
            best = (idx, d);
        }
    }
    Ok(best.0)
}

/// Zero-based index of the best-matching candidate under `variant`.
pub fn classify_ip(
    y: &TiledImage,
    candidates: &[TiledImage],
    variant: IpVariant,
    profile: &NoiseProfile,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    argmin_weighted(y, candidates, &variant.weights(profile)?)
}
