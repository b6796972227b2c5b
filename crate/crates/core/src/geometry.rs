//! Road-plane to focal-plane geometry for a forward-facing pinhole camera.
//!
//! Lengths are in centimetres. The road origin sits directly below the
//! pinhole, `y_bar` grows with distance ahead of the vehicle and `x_bar` is
//! the lateral offset. Angles are stored in radians.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scene::TileGrid;

/// Mount geometry and optics of the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    h: f64,
    theta: f64,
    f: f64,
}

impl CameraRig {
    /// `h` camera height (cm), `theta` depression angle (rad), `f` focal length (cm).
    pub fn new(h: f64, theta: f64, f: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(invalid("h", format!("must be > 0, got {h}")));
        }
        if !(f.is_finite() && f > 0.0) {
            return Err(invalid("f", format!("must be > 0, got {f}")));
        }
        if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
            return Err(invalid("theta", format!("must lie in (0, pi/2), got {theta}")));
        }
        Ok(Self { h, theta, f })
    }

    pub fn from_degrees(h: f64, theta_deg: f64, f: f64) -> Result<Self> {
        Self::new(h, theta_deg.to_radians(), f)
    }

    /// The rig used throughout the reference experiments: 60 cm, 36°, 0.0367 cm.
    pub fn reference() -> Self {
        Self::from_degrees(60.0, 36.0, 0.0367).expect("reference rig is valid")
    }

    pub fn height(&self) -> f64 {
        self.h
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn focal_length(&self) -> f64 {
        self.f
    }

    /// Depth along the optical axis of a road point at distance `y_bar`:
    /// `y_bar cos(theta) + h sin(theta)`.
    fn axial_depth(&self, y_bar: f64) -> f64 {
        y_bar * self.theta.cos() + self.h * self.theta.sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadPoint {
    pub x_bar: f64,
    pub y_bar: f64,
}

impl RoadPoint {
    pub fn new(x_bar: f64, y_bar: f64) -> Result<Self> {
        if !(y_bar >= 0.0) || !x_bar.is_finite() || !y_bar.is_finite() {
            return Err(invalid("y_bar", format!("road point must have finite y_bar >= 0, got ({x_bar}, {y_bar})")));
        }
        Ok(Self { x_bar, y_bar })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalPoint {
    pub x_tilde: f64,
    pub y_tilde: f64,
}

/// A point in the 3D pinhole frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Axis-aligned rectangle on the road plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileRect {
    pub x_lower: f64,
    pub x_upper: f64,
    pub y_lower: f64,
    pub y_upper: f64,
}

impl TileRect {
    pub fn new(x_lower: f64, x_upper: f64, y_lower: f64, y_upper: f64) -> Result<Self> {
        if !(x_lower <= x_upper) {
            return Err(invalid("x_upper", format!("{x_upper} < {x_lower}")));
        }
        if !(0.0 <= y_lower && y_lower <= y_upper) {
            return Err(invalid(
                "y_lower",
                format!("need 0 <= y_lower <= y_upper, got [{y_lower}, {y_upper}]"),
            ));
        }
        Ok(Self {
            x_lower,
            x_upper,
            y_lower,
            y_upper,
        })
    }

    pub fn road_area(&self) -> f64 {
        (self.x_upper - self.x_lower) * (self.y_upper - self.y_lower)
    }
}

/// Central projection onto the focal plane: `(f x / z, f y / z)`.
pub fn project_pinhole(p: SpacePoint, f: f64) -> Result<FocalPoint> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok(FocalPoint {
        x_tilde: f * p.x / p.z,
        y_tilde: f * p.y / p.z,
    })
}

/// Focal-plane image of a point on the road surface.
pub fn project_road(p: RoadPoint, rig: &CameraRig) -> FocalPoint {
    let (sin, cos) = rig.theta.sin_cos();
    let depth = rig.axial_depth(p.y_bar);
    FocalPoint {
        x_tilde: rig.f * p.x_bar / depth,
        y_tilde: rig.f * (p.y_bar * sin - rig.h * cos) / depth,
    }
}

/// Determinant of the road-to-focal-plane Jacobian, `f^2 h / depth^3`.
///
/// Independent of `x_bar`; strictly positive and decreasing in `y_bar`.
pub fn jacobian_det(y_bar: f64, rig: &CameraRig) -> f64 {
    rig.f * rig.f * rig.h / rig.axial_depth(y_bar).powi(3)
}

/// Closed-form focal-plane area of a road rectangle (integral of `det J`).
pub fn tile_area_focal(t: &TileRect, rig: &CameraRig) -> f64 {
    let width = t.x_upper - t.x_lower;
    if width == 0.0 || t.y_upper == t.y_lower {
        return 0.0;
    }
    let scale = rig.f * rig.f * rig.h;
    let near = rig.axial_depth(t.y_lower);
    let far = rig.axial_depth(t.y_upper);
    // 1/near^2 - 1/far^2 factored to avoid cancellation for thin tiles.
    let diff = (far - near) * (far + near) / (near * near * far * far);
    width / (2.0 * rig.theta.cos()) * scale * diff
}

/// Road rectangle covered by tile `(k, j)` (zero-based) of a laterally centred grid.
pub fn grid_tile_rect(grid: &TileGrid, k: usize, j: usize) -> TileRect {
    let s = grid.s();
    let x0 = -(grid.n_w() as f64) * s / 2.0;
    TileRect {
        x_lower: x0 + k as f64 * s,
        x_upper: x0 + (k + 1) as f64 * s,
        y_lower: j as f64 * s,
        y_upper: (j + 1) as f64 * s,
    }
}

/// Focal-plane areas of every tile, shape `(n_w, n_d)`.
pub fn grid_tile_areas(grid: &TileGrid, rig: &CameraRig) -> Array2<f64> {
    // The area only depends on the row extent, so compute one value per depth index.
    let per_row: Vec<f64> = (0..grid.n_d())
        .map(|j| tile_area_focal(&grid_tile_rect(grid, 0, j), rig))
        .collect();
    Array2::from_shape_fn((grid.n_w(), grid.n_d()), |(_, j)| per_row[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    /// 3D construction: camera at height h pitched down by theta, world axes
    /// (lateral, forward, up). Optical axis (0, cos, -sin), image up (0, sin, cos).
    fn road_to_space(p: RoadPoint, rig: &CameraRig) -> SpacePoint {
        let (sin, cos) = rig.theta().sin_cos();
        let v = [p.x_bar, p.y_bar, -rig.height()];
        SpacePoint {
            x: v[0],
            y: v[1] * sin + v[2] * cos,
            z: v[1] * cos - v[2] * sin,
        }
    }

    /// Composite 5-point Gauss-Legendre over a rectangle.
    fn quad2d(t: &TileRect, rig: &CameraRig, panels: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let gl = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| -> f64 {
            let h = (b - a) / panels as f64;
            (0..panels)
                .map(|i| {
                    let lo = a + i as f64 * h;
                    let mid = lo + h / 2.0;
                    X.iter().zip(W).map(|(x, w)| w * g(mid + x * h / 2.0)).sum::<f64>() * h / 2.0
                })
                .sum()
        };
        gl(t.x_lower, t.x_upper, &|_x| {
            gl(t.y_lower, t.y_upper, &|y| jacobian_det(y, rig).abs())
        })
    }

    #[test]
    fn pinhole_examples() {
        let p = project_pinhole(SpacePoint { x: 0.0, y: 0.0, z: 5.0 }, 2.0).unwrap();
        assert_eq!((p.x_tilde, p.y_tilde), (0.0, 0.0));
        let p = project_pinhole(SpacePoint { x: 1.0, y: 2.0, z: 4.0 }, 2.0).unwrap();
        assert_eq!((p.x_tilde, p.y_tilde), (0.5, 1.0));
        assert_eq!(
            project_pinhole(SpacePoint { x: 1.0, y: 1.0, z: 0.0 }, 2.0),
            Err(Error::BehindCamera { z: 0.0 })
        );
        assert!(project_pinhole(SpacePoint { x: 1.0, y: 1.0, z: -3.0 }, 2.0).is_err());
    }

    #[test]
    fn rig_validation() {
        assert!(CameraRig::new(0.0, 0.5, 1.0).is_err());
        assert!(CameraRig::new(1.0, 0.5, -1.0).is_err());
        assert!(CameraRig::from_degrees(1.0, 91.0, 1.0).is_err());
        assert!(CameraRig::from_degrees(1.0, 0.0, 1.0).is_err());
        assert!(CameraRig::from_degrees(1.0, 90.0, 1.0).is_err());
        assert!(RoadPoint::new(0.0, -1.0).is_err());
        assert!(TileRect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(TileRect::new(0.0, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn road_projection_examples() {
        let rig = CameraRig::reference();
        assert_eq!(project_road(RoadPoint { x_bar: 0.0, y_bar: 73.0 }, &rig).x_tilde, 0.0);
        let y_axis = rig.height() / rig.theta().tan();
        let p = project_road(RoadPoint { x_bar: 12.0, y_bar: y_axis }, &rig);
        assert!(p.y_tilde.abs() < 1e-15);

        let road = RoadPoint { x_bar: 20.0, y_bar: 100.0 };
        let p = project_road(road, &rig);
        let oracle = project_pinhole(road_to_space(road, &rig), rig.focal_length()).unwrap();
        assert!(rel(p.x_tilde, oracle.x_tilde) < 1e-12);
        assert!(rel(p.y_tilde, oracle.y_tilde) < 1e-12);
        assert!(rel(p.x_tilde, 6.318_4e-3) < 1e-4, "{}", p.x_tilde);
        assert!(rel(p.y_tilde, 3.234_2e-3) < 1e-4, "{}", p.y_tilde);
    }

    #[test]
    fn jacobian_examples() {
        let rig = CameraRig::reference();
        let (h, th, f) = (rig.height(), rig.theta(), rig.focal_length());
        assert!(rel(jacobian_det(0.0, &rig), f * f / (h * h * th.sin().powi(3))) < 1e-14);
        let unit = CameraRig::new(1.0, std::f64::consts::FRAC_PI_2 - 1e-12, 1.0).unwrap();
        assert!((jacobian_det(7.0, &unit) - 1.0).abs() < 1e-9);

        let det = jacobian_det(100.0, &rig);
        assert!(rel(det, 5.155e-8) < 1e-3, "{det}");

        // finite-difference Jacobian of the road map
        let (x, y, eps) = (20.0, 100.0, 1e-4);
        let at = |x, y| project_road(RoadPoint { x_bar: x, y_bar: y }, &rig);
        let dx = |g: fn(FocalPoint) -> f64| (g(at(x + eps, y)) - g(at(x - eps, y))) / (2.0 * eps);
        let dy = |g: fn(FocalPoint) -> f64| (g(at(x, y + eps)) - g(at(x, y - eps))) / (2.0 * eps);
        let gx: fn(FocalPoint) -> f64 = |p| p.x_tilde;
        let gy: fn(FocalPoint) -> f64 = |p| p.y_tilde;
        let fd = dx(gx) * dy(gy) - dx(gy) * dy(gx);
        assert!(rel(fd, det) < 1e-6, "{fd} vs {det}");
    }

    #[test]
    fn tile_area_examples() {
        let rig = CameraRig::reference();
        assert_eq!(tile_area_focal(&TileRect::new(3.0, 3.0, 0.0, 20.0).unwrap(), &rig), 0.0);

        let near = TileRect::new(0.0, 20.0, 0.0, 20.0).unwrap();
        let far = TileRect::new(0.0, 20.0, 200.0, 220.0).unwrap();
        let (a_near, a_far) = (tile_area_focal(&near, &rig), tile_area_focal(&far, &rig));
        assert!(rel(a_near, quad2d(&near, &rig, 64)) < 1e-6);
        assert!(rel(a_far, quad2d(&far, &rig, 64)) < 1e-6);
        assert!(rel(a_near, 4.257e-4) < 1e-3, "{a_near}");
        assert!(rel(a_far, 3.755e-6) < 1e-3, "{a_far}");
    }

    #[test]
    fn grid_areas() {
        let rig = CameraRig::reference();
        let one = TileGrid::new(1, 1, 20.0).unwrap();
        let a = grid_tile_areas(&one, &rig);
        assert_eq!(a.dim(), (1, 1));
        let single = tile_area_focal(&TileRect::new(0.0, 20.0, 0.0, 20.0).unwrap(), &rig);
        assert!(rel(a[[0, 0]], single) < 1e-14);

        let grid = TileGrid::reference();
        let a = grid_tile_areas(&grid, &rig);
        assert_eq!(a.dim(), (6, 11));
        for k in 0..6 {
            for j in 0..11 {
                assert_eq!(a[[k, j]], a[[0, j]]);
                if j > 0 {
                    assert!(a[[k, j]] < a[[k, j - 1]]);
                }
            }
            let column: f64 = a.row(k).sum();
            let whole = tile_area_focal(&TileRect::new(0.0, 20.0, 0.0, 220.0).unwrap(), &rig);
            assert!(rel(column, whole) < 1e-12);
        }
        let ratio = a[[0, 0]] / a[[0, 10]];
        assert!((ratio - 113.4).abs() < 0.5, "{ratio}");
    }

    fn rigs() -> impl Strategy<Value = CameraRig> {
        (1.0f64..500.0, 0.01f64..1.56, 1e-3f64..10.0)
            .prop_map(|(h, th, f)| CameraRig::new(h, th, f).unwrap())
    }

    proptest! {
        #[test]
        fn det_positive_and_decreasing(rig in rigs(), y in 0.0f64..1e4, dy in 1e-3f64..100.0) {
            let (a, b) = (jacobian_det(y, &rig), jacobian_det(y + dy, &rig));
            prop_assert!(a > 0.0 && b > 0.0);
            prop_assert!(b < a);
        }

        #[test]
        fn area_is_additive(rig in rigs(), x in -50.0f64..50.0, w in 0.1f64..50.0,
                            y0 in 0.0f64..500.0, d1 in 0.1f64..100.0, d2 in 0.1f64..100.0) {
            let whole = tile_area_focal(&TileRect::new(x, x + w, y0, y0 + d1 + d2).unwrap(), &rig);
            let lo = tile_area_focal(&TileRect::new(x, x + w, y0, y0 + d1).unwrap(), &rig);
            let hi = tile_area_focal(&TileRect::new(x, x + w, y0 + d1, y0 + d1 + d2).unwrap(), &rig);
            prop_assert!(rel(lo + hi, whole) < 1e-12);
        }

        #[test]
        fn area_matches_quadrature(rig in rigs(), x in -50.0f64..50.0, w in 0.1f64..50.0,
                                   y0 in 0.0f64..500.0, d in 0.1f64..100.0) {
            let t = TileRect::new(x, x + w, y0, y0 + d).unwrap();
            prop_assert!(rel(tile_area_focal(&t, &rig), quad2d(&t, &rig, 32)) < 1e-6);
        }

        #[test]
        fn road_projection_symmetry(rig in rigs(), y in 0.0f64..1e3, dy in 1e-2f64..100.0) {
            prop_assert_eq!(project_road(RoadPoint { x_bar: 0.0, y_bar: y }, &rig).x_tilde, 0.0);
            let a = project_road(RoadPoint { x_bar: 1.0, y_bar: y }, &rig).y_tilde;
            let b = project_road(RoadPoint { x_bar: 1.0, y_bar: y + dy }, &rig).y_tilde;
            prop_assert!(b > a);
        }
    }
}
