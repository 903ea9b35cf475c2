//! Location-determination emulation.
//!
//! Each technique turns a true position into a reported point plus an
//! uncertainty region that is guaranteed to cover the true position. The
//! cell-id method derives an annular sector from the serving base station;
//! the other four displace the true position by a random error drawn from
//! the method's urban accuracy range and report a circle with the range
//! maximum as radius, so the region never leaks the secret draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{azimuth_deg, distance, GeoPoint, UncertaintyRegion};

/// Timing-advance band depth in meters used by the cell-id method.
pub const TA_BAND_M: f64 = 550.0;

/// Sector width assumed for base stations that do not specify one.
pub const DEFAULT_SECTOR_WIDTH_DEG: f64 = 120.0;

/// The five emulated positioning techniques.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LdtMethod {
    CgiTa,
    Ecgi,
    Toa,
    Eotd,
    Agps,
}

impl LdtMethod {
    pub const ALL: [LdtMethod; 5] = [
        LdtMethod::CgiTa,
        LdtMethod::Ecgi,
        LdtMethod::Toa,
        LdtMethod::Eotd,
        LdtMethod::Agps,
    ];

    /// Urban accuracy range (min, max) in meters.
    pub fn accuracy_range(self) -> (f64, f64) {
        match self {
            LdtMethod::CgiTa => (100.0, 1100.0),
            LdtMethod::Ecgi => (50.0, 550.0),
            LdtMethod::Toa => (125.0, 200.0),
            LdtMethod::Eotd => (50.0, 150.0),
            LdtMethod::Agps => (5.0, 40.0),
        }
    }
}

/// A cell site with sectorized antennas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub id: String,
    pub position: GeoPoint,
    #[serde(default = "default_sector_width")]
    pub sector_width: f64,
}

fn default_sector_width() -> f64 {
    DEFAULT_SECTOR_WIDTH_DEG
}

impl BaseStation {
    pub fn new(id: impl Into<String>, position: GeoPoint) -> Self {
        Self {
            id: id.into(),
            position,
            sector_width: DEFAULT_SECTOR_WIDTH_DEG,
        }
    }
}

/// A measured position: the reported point, the region it was constrained
/// to, and the technique that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationFix {
    pub reported: GeoPoint,
    pub region: UncertaintyRegion,
    pub method: LdtMethod,
}

/// Deterministic random stream seeded from a 64-bit value. Identical seed
/// and draw order give identical outputs on every platform.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform draw from the closed interval `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..=hi)
    }

    /// Uniform azimuth in `[0, 360)`.
    pub fn azimuth(&mut self) -> f64 {
        self.rng.gen_range(0.0..360.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LdtError {
    #[error("EmptyNetwork: cell-id positioning needs at least one base station")]
    EmptyNetwork,
}

/// The station closest to `true_pos`; distance ties break toward the
/// lexicographically smallest id.
pub fn serving_cell(
    true_pos: GeoPoint,
    network: &[BaseStation],
) -> Result<&BaseStation, LdtError> {
    network
        .iter()
        .min_by(|a, b| {
            distance(a.position, true_pos)
                .total_cmp(&distance(b.position, true_pos))
                .then_with(|| a.id.cmp(&b.id))
        })
        .ok_or(LdtError::EmptyNetwork)
}

/// Measure `true_pos` with `method`, consuming randomness from `rng` for
/// the displacement-based methods. The cell-id method is fully determined
/// by geometry and draws nothing.
pub fn measure(
    true_pos: GeoPoint,
    method: LdtMethod,
    network: &[BaseStation],
    rng: &mut RandomStream,
) -> Result<LocationFix, LdtError> {
    let region = match method {
        LdtMethod::CgiTa => {
            let bs = serving_cell(true_pos, network)?;
            let range = distance(bs.position, true_pos);
            let band = (range / TA_BAND_M).floor();
            let sector = (azimuth_deg(bs.position, true_pos) / bs.sector_width).floor();
            UncertaintyRegion::AnnularSector {
                origin: bs.position,
                inner_radius: band * TA_BAND_M,
                outer_radius: (band + 1.0) * TA_BAND_M,
                start_azimuth: sector * bs.sector_width,
                arc_width: bs.sector_width,
            }
        }
        _ => {
            let (min, max) = method.accuracy_range();
            let magnitude = rng.uniform(min, max);
            let direction = rng.azimuth();
            let reported = crate::geo::point_at(true_pos, magnitude, direction);
            UncertaintyRegion::Circle {
                center: reported,
                radius: max,
            }
        }
    };
    Ok(LocationFix {
        reported: region.anchor(),
        region,
        method,
    })
}
