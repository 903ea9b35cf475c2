//! Planar geometry: points, distances, and the two uncertainty-region
//! shapes reported by the positioning emulator.
//!
//! Coordinates are meters in a local Cartesian frame, `x` east and `y`
//! north. Azimuths are degrees clockwise from north, so the azimuth of
//! `(1, 0)` seen from the origin is 90. All regions are closed: boundary
//! points count as contained.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Planar position in meters (`x` east, `y` north).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Euclidean distance in meters.
pub fn distance(a: GeoPoint, b: GeoPoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Azimuth of `to` as seen from `from`, in degrees clockwise from north,
/// normalized to `[0, 360)`. Returns 0 when the points coincide.
pub fn azimuth_deg(from: GeoPoint, to: GeoPoint) -> f64 {
    (to.x - from.x).atan2(to.y - from.y).to_degrees().rem_euclid(360.0)
}

/// Point at `radius` meters from `origin` along `azimuth` degrees.
pub fn point_at(origin: GeoPoint, radius: f64, azimuth: f64) -> GeoPoint {
    let rad = azimuth.to_radians();
    GeoPoint {
        x: origin.x + radius * rad.sin(),
        y: origin.y + radius * rad.cos(),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("coordinates must be finite")]
    NonFiniteCoordinate,
    #[error("circle radius must be finite and >= 0, got {0}")]
    InvalidRadius(f64),
    #[error("annular sector requires 0 <= inner < outer, got inner {inner}, outer {outer}")]
    InvalidRadii { inner: f64, outer: f64 },
    #[error("arc width must be in (0, 360], got {0}")]
    InvalidArcWidth(f64),
    #[error("start azimuth must be in [0, 360), got {0}")]
    InvalidAzimuth(f64),
}

/// Region a location fix may lie in: a circle around the reported point,
/// or a cell sector band (annulus slice) anchored at a base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UncertaintyRegion {
    Circle {
        center: GeoPoint,
        radius: f64,
    },
    AnnularSector {
        origin: GeoPoint,
        inner_radius: f64,
        outer_radius: f64,
        start_azimuth: f64,
        arc_width: f64,
    },
}

impl UncertaintyRegion {
    pub fn validate(&self) -> Result<(), GeoError> {
        match *self {
            UncertaintyRegion::Circle { center, radius } => {
                if !center.is_finite() {
                    return Err(GeoError::NonFiniteCoordinate);
                }
                if !radius.is_finite() || radius < 0.0 {
                    return Err(GeoError::InvalidRadius(radius));
                }
            }
            UncertaintyRegion::AnnularSector {
                origin,
                inner_radius,
                outer_radius,
                start_azimuth,
                arc_width,
            } => {
                if !origin.is_finite() {
                    return Err(GeoError::NonFiniteCoordinate);
                }
                if !inner_radius.is_finite()
                    || !outer_radius.is_finite()
                    || inner_radius < 0.0
                    || inner_radius >= outer_radius
                {
                    return Err(GeoError::InvalidRadii {
                        inner: inner_radius,
                        outer: outer_radius,
                    });
                }
                if !arc_width.is_finite() || arc_width <= 0.0 || arc_width > 360.0 {
                    return Err(GeoError::InvalidArcWidth(arc_width));
                }
                if !start_azimuth.is_finite() || !(0.0..360.0).contains(&start_azimuth) {
                    return Err(GeoError::InvalidAzimuth(start_azimuth));
                }
            }
        }
        Ok(())
    }

    /// True iff `p` lies inside or on the boundary.
    pub fn contains(&self, p: GeoPoint) -> bool {
        match *self {
            UncertaintyRegion::Circle { center, radius } => distance(center, p) <= radius,
            UncertaintyRegion::AnnularSector {
                origin,
                inner_radius,
                outer_radius,
                start_azimuth,
                arc_width,
            } => {
                let d = distance(origin, p);
                if d == 0.0 {
                    // The apex belongs to the sector exactly when the
                    // annulus starts at radius zero.
                    return inner_radius == 0.0;
                }
                if d < inner_radius || d > outer_radius {
                    return false;
                }
                let rel = (azimuth_deg(origin, p) - start_azimuth).rem_euclid(360.0);
                rel <= arc_width
            }
        }
    }

    /// A single representative point of the region, used as the reported
    /// position: the center for circles, the radial/angular midpoint for
    /// annular sectors. Always contained in the region.
    pub fn anchor(&self) -> GeoPoint {
        match *self {
            UncertaintyRegion::Circle { center, .. } => center,
            UncertaintyRegion::AnnularSector {
                origin,
                inner_radius,
                outer_radius,
                start_azimuth,
                arc_width,
            } => point_at(
                origin,
                (inner_radius + outer_radius) / 2.0,
                start_azimuth + arc_width / 2.0,
            ),
        }
    }

    /// Greatest lower bound of the distance from `p` to the region;
    /// 0 when `p` is contained.
    pub fn min_distance_to(&self, p: GeoPoint) -> f64 {
        match *self {
            UncertaintyRegion::Circle { center, radius } => {
                (distance(center, p) - radius).max(0.0)
            }
            UncertaintyRegion::AnnularSector {
                origin,
                inner_radius,
                outer_radius,
                start_azimuth,
                arc_width,
            } => {
                let d = distance(origin, p);
                let rel = (azimuth_deg(origin, p) - start_azimuth).rem_euclid(360.0);
                if d > 0.0 && rel <= arc_width {
                    // Within the angular span: nearest point is the radial clamp.
                    if d < inner_radius {
                        inner_radius - d
                    } else if d > outer_radius {
                        d - outer_radius
                    } else {
                        0.0
                    }
                } else {
                    // Outside the span (or at the apex) the nearest region
                    // point lies on one of the two radial edge segments;
                    // the arc endpoints are covered as segment endpoints.
                    let edge = |az: f64| {
                        point_segment_distance(
                            p,
                            point_at(origin, inner_radius, az),
                            point_at(origin, outer_radius, az),
                        )
                    };
                    edge(start_azimuth).min(edge(start_azimuth + arc_width))
                }
            }
        }
    }
}

fn point_segment_distance(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    let (abx, aby) = (b.x - a.x, b.y - a.y);
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0)
    };
    distance(p, GeoPoint::new(a.x + t * abx, a.y + t * aby))
}
