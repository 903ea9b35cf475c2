//! Spatial-trigger engine: constant queries of drained location reports
//! against the advertiser registry, plus MS-to-MS proximity detection.
//!
//! Triggers are edge-detected per (user, advertiser) pair: an Enter fires
//! when the distance first drops under the limit, an Exit when it later
//! exceeds the limit inflated by the hysteresis fraction. The deadband
//! between the two thresholds keeps the state from flapping under
//! measurement noise. Proximity pairs follow the same scheme but never
//! produce Exit events, only a silent re-arm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::LocationReport;
use crate::store::{Advertiser, Database};

/// Engine tuning: the default trigger distance, the exit hysteresis, the
/// distance semantics, and the MS-to-MS proximity threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerConfig {
    pub default_limit: f64,
    pub hysteresis_fraction: f64,
    /// When set, distances are measured to the closest point of the fix's
    /// uncertainty region instead of to the reported point, so an Enter
    /// guarantees the user may actually be within reach.
    pub conservative_mode: bool,
    pub proximity_threshold: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            default_limit: 500.0,
            hysteresis_fraction: 0.10,
            conservative_mode: false,
            proximity_threshold: 200.0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.default_limit.is_finite() || self.default_limit <= 0.0 {
            return Err(format!("default_limit must be > 0, got {}", self.default_limit));
        }
        if !self.hysteresis_fraction.is_finite()
            || !(0.0..1.0).contains(&self.hysteresis_fraction)
        {
            return Err(format!(
                "hysteresis_fraction must be in [0, 1), got {}",
                self.hysteresis_fraction
            ));
        }
        if !self.proximity_threshold.is_finite() || self.proximity_threshold <= 0.0 {
            return Err(format!(
                "proximity_threshold must be > 0, got {}",
                self.proximity_threshold
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZoneState {
    Inside,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProximityState {
    Near,
    Apart,
}

/// Edge-detection memory. Entries exist only for pairs that have been
/// observed at least once.
#[derive(Debug, Clone, Default)]
pub struct PairState {
    zones: BTreeMap<(String, String), ZoneState>,
    proximity: BTreeMap<(String, String), ProximityState>,
}

impl PairState {
    pub fn new() -> Self {
        Self::default()
    }

    /// State of a (msisdn, advertiser) pair, if it has been observed.
    pub fn zone(&self, msisdn: &str, advertiser_id: &str) -> Option<ZoneState> {
        self.zones.get(&(msisdn.to_string(), advertiser_id.to_string())).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TriggerKind {
    Enter,
    Exit,
    Proximity,
}

/// A detected trigger. Enter/Exit carry an advertiser id as counterpart,
/// Proximity the other user's MSISDN.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerEvent {
    pub kind: TriggerKind,
    pub msisdn: String,
    pub counterpart: String,
    pub distance: f64,
    pub timestamp: u64,
}

/// The advertiser's own trigger distance when set, otherwise the engine
/// default.
pub fn effective_limit(adv: &Advertiser, cfg: &TriggerConfig) -> f64 {
    adv.trigger_limit.unwrap_or(cfg.default_limit)
}

/// Evaluate one drained batch of reports against every advertiser whose
/// service type the user subscribes to. Reports must arrive in canonical
/// `(timestamp, msisdn)` order; events then come out ordered by
/// `(timestamp, msisdn, advertiser_id)`.
pub fn evaluate_batch(
    reports: &[LocationReport],
    db: &Database,
    state: &mut PairState,
    cfg: &TriggerConfig,
) -> Vec<TriggerEvent> {
    let mut events = Vec::new();
    for report in reports {
        let Some(user) = db.users().get(&report.msisdn) else {
            // Stale entry for a user no longer subscribed; skip it.
            continue;
        };
        for (advertiser_id, adv) in db.advertisers() {
            if !user.subscriptions.contains(&adv.service_type) {
                continue;
            }
            let d = if cfg.conservative_mode {
                report.fix.region.min_distance_to(adv.position)
            } else {
                crate::geo::distance(report.fix.reported, adv.position)
            };
            let limit = effective_limit(adv, cfg);
            let key = (report.msisdn.clone(), advertiser_id.clone());
            let prior = state.zones.get(&key).copied().unwrap_or(ZoneState::Outside);
            let next = match prior {
                ZoneState::Outside if d < limit => {
                    events.push(TriggerEvent {
                        kind: TriggerKind::Enter,
                        msisdn: report.msisdn.clone(),
                        counterpart: advertiser_id.clone(),
                        distance: d,
                        timestamp: report.timestamp,
                    });
                    ZoneState::Inside
                }
                ZoneState::Inside if d > limit * (1.0 + cfg.hysteresis_fraction) => {
                    events.push(TriggerEvent {
                        kind: TriggerKind::Exit,
                        msisdn: report.msisdn.clone(),
                        counterpart: advertiser_id.clone(),
                        distance: d,
                        timestamp: report.timestamp,
                    });
                    ZoneState::Outside
                }
                unchanged => unchanged,
            };
            state.zones.insert(key, next);
        }
    }
    events
}

/// Detect MS-to-MS proximity over the unordered pairs of one batch. A pair
/// becomes Near (one event) when the reported distance drops under the
/// threshold, and silently re-arms once it exceeds the threshold plus
/// hysteresis.
pub fn proximity_batch(
    reports: &[LocationReport],
    state: &mut PairState,
    cfg: &TriggerConfig,
) -> Vec<TriggerEvent> {
    let mut events = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            if a.msisdn == b.msisdn {
                continue;
            }
            let (first, second) = if a.msisdn <= b.msisdn { (a, b) } else { (b, a) };
            let d = crate::geo::distance(a.fix.reported, b.fix.reported);
            let key = (first.msisdn.clone(), second.msisdn.clone());
            let prior = state
                .proximity
                .get(&key)
                .copied()
                .unwrap_or(ProximityState::Apart);
            let next = match prior {
                ProximityState::Apart if d < cfg.proximity_threshold => {
                    events.push(TriggerEvent {
                        kind: TriggerKind::Proximity,
                        msisdn: first.msisdn.clone(),
                        counterpart: second.msisdn.clone(),
                        distance: d,
                        timestamp: a.timestamp.max(b.timestamp),
                    });
                    ProximityState::Near
                }
                ProximityState::Near
                    if d >= cfg.proximity_threshold * (1.0 + cfg.hysteresis_fraction) =>
                {
                    ProximityState::Apart
                }
                unchanged => unchanged,
            };
            state.proximity.insert(key, next);
        }
    }
    events
}
