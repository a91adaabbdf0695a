//! Projection mathematics for circular fisheye cameras.
//!
//! Radii are measured from the image centre in pixels, incident angles θ from
//! the optical axis in radians. Every projection model maps θ to a radius
//! through a strictly increasing function `r(θ)`; the fisheye-to-perspective
//! transform is `f·tan(r⁻¹(r_f))` and its inverse is `r(arctan(r_p / f))`.
//! Angles φ pass through both transforms untouched.

mod calibration;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::blockmatch::MotionVector;

pub use calibration::{load_calibration, CalibrationError, CalibrationTable, CALIBRATION_HEADER};

/// Half-width of the band around θ = π/2 where the tangent pole is reported
/// as singular instead of evaluated.
pub const POLE_EPSILON: f64 = 1e-12;

/// Relative slack allowed on `r <= r_max` checks to absorb rounding.
const RADIUS_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid camera geometry: {0}")]
    InvalidGeometry(String),
    #[error("incident angle {theta} rad is outside the domain of the {model} projection")]
    ThetaDomain { model: &'static str, theta: f64 },
    #[error("radius {r} px is outside the image circle (r_max = {r_max} px)")]
    RadiusRange { r: f64, r_max: f64 },
    #[error("negative radius {0} px")]
    NegativeRadius(f64),
    #[error("fisheye-to-perspective transform hit the tangent pole at theta = pi/2")]
    Singular,
    #[error("ultra wide-angle compensation needs a field of view above 180 degrees")]
    NoCriticalCircle,
}

/// Physical camera description. The sensor is square with side `sensor_mm`
/// and maps onto `width_px` pixels horizontally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraGeometry {
    pub focal_mm: f64,
    pub fov_deg: f64,
    pub sensor_mm: f64,
    pub width_px: usize,
    pub height_px: usize,
}

impl CameraGeometry {
    pub fn new(
        focal_mm: f64,
        fov_deg: f64,
        sensor_mm: f64,
        width_px: usize,
        height_px: usize,
    ) -> Result<Self, GeometryError> {
        let geom = Self {
            focal_mm,
            fov_deg,
            sensor_mm,
            width_px,
            height_px,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// 1.8 mm focal length, 185° field of view and a 5.2 mm sensor, the
    /// configuration of the reference capture rig.
    pub fn reference_rig(width_px: usize, height_px: usize) -> Self {
        Self {
            focal_mm: 1.8,
            fov_deg: 185.0,
            sensor_mm: 5.2,
            width_px,
            height_px,
        }
    }

    pub fn with_fov(self, fov_deg: f64) -> Self {
        Self { fov_deg, ..self }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidGeometry(msg.to_owned()));
        if !(self.focal_mm > 0.0 && self.focal_mm.is_finite()) {
            return bad("focal length must be positive");
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 360.0) {
            return bad("field of view must lie in (0, 360] degrees");
        }
        if !(self.sensor_mm > 0.0 && self.sensor_mm.is_finite()) {
            return bad("sensor size must be positive");
        }
        if self.width_px == 0 || self.height_px == 0 {
            return bad("resolution must be positive");
        }
        Ok(())
    }

    pub fn px_per_mm(&self) -> f64 {
        self.width_px as f64 / self.sensor_mm
    }

    pub fn focal_px(&self) -> f64 {
        self.focal_mm * self.px_per_mm()
    }

    /// Half the field of view in radians.
    pub fn theta_max(&self) -> f64 {
        (self.fov_deg / 2.0).to_radians()
    }
}

/// Radial projection function of a lens.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionModel {
    /// `r = f·tan θ`
    Pinhole,
    /// `r = f·θ`
    Equidistant,
    /// `r = 2f·sin(θ/2)`
    Equisolid,
    /// `r = f·sin θ`
    Orthographic,
    /// `r = 2f·tan(θ/2)`
    Stereographic,
    /// Sampled calibration table, radii in millimetres on the sensor.
    Calibrated(Arc<CalibrationTable>),
}

impl ProjectionModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Pinhole => "pinhole",
            Self::Equidistant => "equidistant",
            Self::Equisolid => "equisolid",
            Self::Orthographic => "orthographic",
            Self::Stereographic => "stereographic",
            Self::Calibrated(_) => "calibrated",
        }
    }

    /// Whether `theta` lies in the model's valid domain.
    pub fn accepts_theta(&self, theta: f64) -> bool {
        if !(theta >= 0.0) {
            return false;
        }
        match self {
            Self::Pinhole => theta < FRAC_PI_2,
            Self::Equidistant => theta.is_finite(),
            Self::Equisolid => theta <= PI,
            Self::Orthographic => theta <= FRAC_PI_2,
            Self::Stereographic => theta < PI,
            Self::Calibrated(t) => theta.to_degrees() <= t.max_theta_deg() + 1e-9,
        }
    }

    /// Projected radius in pixels for incident angle `theta`.
    pub fn radius_px(&self, theta: f64, geom: &CameraGeometry) -> Result<f64, GeometryError> {
        if !self.accepts_theta(theta) {
            return Err(GeometryError::ThetaDomain {
                model: self.name(),
                theta,
            });
        }
        let f = geom.focal_px();
        let r = match self {
            Self::Pinhole => f * theta.tan(),
            Self::Equidistant => f * theta,
            Self::Equisolid => 2.0 * f * (theta / 2.0).sin(),
            Self::Orthographic => f * theta.sin(),
            Self::Stereographic => 2.0 * f * (theta / 2.0).tan(),
            Self::Calibrated(t) => {
                t.radius_mm(theta.to_degrees())
                    .ok_or(GeometryError::ThetaDomain {
                        model: "calibrated",
                        theta,
                    })?
                    * geom.px_per_mm()
            }
        };
        Ok(r)
    }

    /// Incident angle for radius `r_px`, without any image-circle check.
    pub fn theta_px(&self, r_px: f64, geom: &CameraGeometry) -> Result<f64, GeometryError> {
        if !(r_px >= 0.0) {
            return Err(GeometryError::NegativeRadius(r_px));
        }
        let u = r_px / geom.focal_px();
        let out_of_range = |limit: f64| GeometryError::RadiusRange {
            r: r_px,
            r_max: limit * geom.focal_px(),
        };
        let theta = match self {
            Self::Pinhole => u.atan(),
            Self::Equidistant => u,
            Self::Equisolid => {
                if u > 2.0 * (1.0 + RADIUS_SLACK) {
                    return Err(out_of_range(2.0));
                }
                2.0 * (u / 2.0).min(1.0).asin()
            }
            Self::Orthographic => {
                if u > 1.0 + RADIUS_SLACK {
                    return Err(out_of_range(1.0));
                }
                u.min(1.0).asin()
            }
            Self::Stereographic => 2.0 * (u / 2.0).atan(),
            Self::Calibrated(t) => {
                let r_mm = r_px / geom.px_per_mm();
                t.theta_deg(r_mm)
                    .ok_or(GeometryError::RadiusRange {
                        r: r_px,
                        r_max: t.max_radius_mm() * geom.px_per_mm(),
                    })?
                    .to_radians()
            }
        };
        Ok(theta)
    }
}

impl fmt::Display for ProjectionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cartesian pixel coordinates relative to the image centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartCoord {
    pub x: f64,
    pub y: f64,
}

impl CartCoord {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Polar coordinates. `r` is negative only as the raw output of
/// [`fisheye_to_perspective`] for incident angles beyond 90°.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarCoord {
    pub r: f64,
    pub phi: f64,
}

impl PolarCoord {
    pub fn new(r: f64, phi: f64) -> Self {
        Self { r, phi }
    }
}

/// Cartesian to polar conversion with the sign-dependent angle cases; the
/// angle at the origin is defined as zero.
pub fn cart_to_polar(c: CartCoord) -> PolarCoord {
    let CartCoord { x, y } = c;
    let r = (x * x + y * y).sqrt();
    let phi = if x > 0.0 {
        (y / x).atan()
    } else if x < 0.0 && y >= 0.0 {
        (y / x).atan() + PI
    } else if x < 0.0 {
        (y / x).atan() - PI
    } else if y != 0.0 {
        FRAC_PI_2 * y.signum()
    } else {
        0.0
    };
    PolarCoord { r, phi }
}

pub fn polar_to_cart(p: PolarCoord) -> CartCoord {
    let (s, c) = p.phi.sin_cos();
    CartCoord {
        x: p.r * c,
        y: p.r * s,
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(mut phi: f64) -> f64 {
    while phi <= -PI {
        phi += 2.0 * PI;
    }
    while phi > PI {
        phi -= 2.0 * PI;
    }
    phi
}

/// Radius mapping between the fisheye image and the virtual perspective
/// plane. Implemented by [`Lens`]; [`IdentityMap`] is the degenerate case.
pub trait RadialMap: Sync {
    /// Signed perspective radius for a fisheye radius. Negative for incident
    /// angles beyond 90°.
    fn to_perspective(&self, r_f: f64) -> Result<f64, GeometryError>;
    /// Fisheye radius for a non-negative perspective radius.
    fn to_fisheye(&self, r_p: f64) -> Result<f64, GeometryError>;
    /// Image radius at θ = 90° when the field of view exceeds 180°.
    fn critical_radius(&self) -> Option<f64>;
    /// Radius of the image circle, `None` if unbounded.
    fn max_radius(&self) -> Option<f64>;
}

/// `r_p = r_f`: turns projected block matching into plain block matching.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMap;

impl RadialMap for IdentityMap {
    fn to_perspective(&self, r_f: f64) -> Result<f64, GeometryError> {
        Ok(r_f)
    }

    fn to_fisheye(&self, r_p: f64) -> Result<f64, GeometryError> {
        Ok(r_p)
    }

    fn critical_radius(&self) -> Option<f64> {
        None
    }

    fn max_radius(&self) -> Option<f64> {
        None
    }
}

/// A projection model bound to a camera geometry, with the derived radii
/// cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Lens {
    model: ProjectionModel,
    geom: CameraGeometry,
    focal_px: f64,
    r_max: f64,
    r_180: Option<f64>,
}

impl Lens {
    pub fn new(model: ProjectionModel, geom: CameraGeometry) -> Result<Self, GeometryError> {
        geom.validate()?;
        let r_max = model.radius_px(geom.theta_max(), &geom)?;
        let r_180 = if geom.fov_deg > 180.0 {
            Some(model.radius_px(FRAC_PI_2, &geom)?)
        } else {
            None
        };
        Ok(Self {
            focal_px: geom.focal_px(),
            model,
            geom,
            r_max,
            r_180,
        })
    }

    pub fn equisolid(geom: CameraGeometry) -> Result<Self, GeometryError> {
        Self::new(ProjectionModel::Equisolid, geom)
    }

    pub fn model(&self) -> &ProjectionModel {
        &self.model
    }

    pub fn geometry(&self) -> &CameraGeometry {
        &self.geom
    }

    pub fn focal_px(&self) -> f64 {
        self.focal_px
    }

    /// Radius of the image circle (θ = FOV/2).
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Radius of the 180° circle, present only for FOV > 180°.
    pub fn r_180(&self) -> Option<f64> {
        self.r_180
    }

    pub fn project_theta(&self, theta: f64) -> Result<f64, GeometryError> {
        self.model.radius_px(theta, &self.geom)
    }

    pub fn unproject_radius(&self, r: f64) -> Result<f64, GeometryError> {
        if !(r >= 0.0) {
            return Err(GeometryError::NegativeRadius(r));
        }
        if r > self.r_max * (1.0 + RADIUS_SLACK) {
            return Err(GeometryError::RadiusRange {
                r,
                r_max: self.r_max,
            });
        }
        self.model.theta_px(r, &self.geom)
    }

    pub fn fisheye_to_perspective(&self, p: PolarCoord) -> Result<PolarCoord, GeometryError> {
        Ok(PolarCoord {
            r: self.to_perspective(p.r)?,
            phi: p.phi,
        })
    }

    pub fn perspective_to_fisheye(&self, p: PolarCoord) -> Result<PolarCoord, GeometryError> {
        Ok(PolarCoord {
            r: self.to_fisheye(p.r)?,
            phi: p.phi,
        })
    }
}

impl RadialMap for Lens {
    fn to_perspective(&self, r_f: f64) -> Result<f64, GeometryError> {
        let theta = self.unproject_radius(r_f)?;
        if (theta - FRAC_PI_2).abs() < POLE_EPSILON {
            return Err(GeometryError::Singular);
        }
        Ok(self.focal_px * theta.tan())
    }

    fn to_fisheye(&self, r_p: f64) -> Result<f64, GeometryError> {
        if !(r_p >= 0.0) {
            return Err(GeometryError::NegativeRadius(r_p));
        }
        self.project_theta((r_p / self.focal_px).atan())
    }

    fn critical_radius(&self) -> Option<f64> {
        self.r_180
    }

    fn max_radius(&self) -> Option<f64> {
        Some(self.r_max)
    }
}

/// Projected radius in pixels for incident angle `theta`.
pub fn project_theta(
    model: &ProjectionModel,
    geom: &CameraGeometry,
    theta: f64,
) -> Result<f64, GeometryError> {
    model.radius_px(theta, geom)
}

/// Incident angle for an image radius inside the image circle.
pub fn unproject_radius(
    model: &ProjectionModel,
    geom: &CameraGeometry,
    r: f64,
) -> Result<f64, GeometryError> {
    Lens::new(model.clone(), *geom)?.unproject_radius(r)
}

pub fn fisheye_to_perspective(
    p: PolarCoord,
    model: &ProjectionModel,
    geom: &CameraGeometry,
) -> Result<PolarCoord, GeometryError> {
    Lens::new(model.clone(), *geom)?.fisheye_to_perspective(p)
}

pub fn perspective_to_fisheye(
    p: PolarCoord,
    model: &ProjectionModel,
    geom: &CameraGeometry,
) -> Result<PolarCoord, GeometryError> {
    Lens::new(model.clone(), *geom)?.perspective_to_fisheye(p)
}

/// Candidate vector applied to a coordinate: inverted when the coordinate's
/// perspective radius was negative.
pub fn compensate_vector(candidate: MotionVector, flagged: bool) -> (f64, f64) {
    let (dx, dy) = (candidate.dx as f64, candidate.dy as f64);
    if flagged {
        (-dx, -dy)
    } else {
        (dx, dy)
    }
}

/// Angle after candidate addition, turned by half a revolution for flagged
/// coordinates.
pub fn compensate_phase(phi: f64, flagged: bool) -> f64 {
    if flagged {
        normalize_angle(phi - PI)
    } else {
        phi
    }
}

/// Re-projected radius, mirrored across the 180° circle for flagged
/// coordinates.
pub fn compensate_radius(r: f64, r_180: f64, flagged: bool) -> f64 {
    if flagged {
        r + 2.0 * (r_180 - r)
    } else {
        r
    }
}

/// One coordinate after candidate addition and ultra wide-angle compensation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatedCoord {
    /// Vector actually added in the perspective domain.
    pub vector: (f64, f64),
    /// Shifted perspective coordinate after the phase adjustment.
    pub perspective: PolarCoord,
    /// Final fisheye coordinate after re-projection and radial mirroring.
    pub fisheye: PolarCoord,
}

/// Adds `candidate` to perspective coordinates and re-projects them, applying
/// ultra wide-angle compensation to coordinates whose flag is set. This is the
/// step-by-step polar formulation; [`PerspectiveRay::displaced`] computes the
/// same mapping in Cartesian form for the search loops.
pub fn ultra_wide_compensate<M: RadialMap + ?Sized>(
    candidate: MotionVector,
    coords: &[(PolarCoord, bool)],
    map: &M,
) -> Result<Vec<CompensatedCoord>, GeometryError> {
    let r_180 = map.critical_radius();
    if r_180.is_none() && coords.iter().any(|&(_, flagged)| flagged) {
        return Err(GeometryError::NoCriticalCircle);
    }
    coords
        .iter()
        .map(|&(p, flagged)| {
            let vector = compensate_vector(candidate, flagged);
            let c = polar_to_cart(p);
            let shifted = cart_to_polar(CartCoord::new(c.x + vector.0, c.y + vector.1));
            let perspective = PolarCoord::new(shifted.r, compensate_phase(shifted.phi, flagged));
            let r_f = map.to_fisheye(perspective.r)?;
            let r_f = compensate_radius(r_f, r_180.unwrap_or(0.0), flagged);
            Ok(CompensatedCoord {
                vector,
                perspective,
                fisheye: PolarCoord::new(r_f, perspective.phi),
            })
        })
        .collect()
}

/// A fisheye pixel expressed on the perspective plane, ready to be displaced
/// by motion vector candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveRay {
    pub x: f64,
    pub y: f64,
    /// Set when the perspective radius came out negative (θ > 90°).
    pub flagged: bool,
}

impl PerspectiveRay {
    /// Projects a centred fisheye coordinate onto the perspective plane.
    /// Returns `None` for coordinates outside the image circle. Coordinates
    /// on the tangent pole are treated as lying just beyond 90°.
    pub fn from_fisheye<M: RadialMap + ?Sized>(
        c: CartCoord,
        map: &M,
    ) -> Result<Option<Self>, GeometryError> {
        let polar = cart_to_polar(c);
        if let Some(r_max) = map.max_radius() {
            if polar.r > r_max * (1.0 + RADIUS_SLACK) {
                return Ok(None);
            }
        }
        let r_p = match map.to_perspective(polar.r) {
            Ok(r) => r,
            Err(GeometryError::Singular) => -polar.r.max(1.0) / POLE_EPSILON,
            Err(e) => return Err(e),
        };
        let p = polar_to_cart(PolarCoord::new(r_p, polar.phi));
        Ok(Some(Self {
            x: p.x,
            y: p.y,
            flagged: r_p < 0.0,
        }))
    }

    /// Fisheye position reached by displacing this ray by `(dx, dy)` on the
    /// perspective plane, with ultra wide-angle compensation for flagged rays.
    /// `None` when the re-projection leaves the model's domain.
    ///
    /// Equivalent to [`ultra_wide_compensate`]: the half-turn of the angle is
    /// a negation of the direction, and re-projection scales the direction by
    /// `r_f / r_p`.
    #[inline]
    pub fn displaced<M: RadialMap + ?Sized>(&self, dx: f64, dy: f64, map: &M) -> Option<CartCoord> {
        let (x, y) = if self.flagged {
            (self.x - dx, self.y - dy)
        } else {
            (self.x + dx, self.y + dy)
        };
        let r_p = (x * x + y * y).sqrt();
        let r_f = map.to_fisheye(r_p).ok()?;
        if self.flagged {
            let r_f = compensate_radius(r_f, map.critical_radius()?, true);
            if r_p == 0.0 {
                // the angle of the origin is zero; half a turn points along −x
                return Some(CartCoord::new(-r_f, 0.0));
            }
            let s = r_f / r_p;
            Some(CartCoord::new(-x * s, -y * s))
        } else {
            if r_p == 0.0 {
                return Some(CartCoord::new(0.0, 0.0));
            }
            let s = r_f / r_p;
            Some(CartCoord::new(x * s, y * s))
        }
    }
}
