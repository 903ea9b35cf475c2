//! Deterministic simulator for location-triggered mobile advertising.
//!
//! The pipeline mirrors a cellular location-services stack: route playback
//! feeds an emulated positioning layer ([`ldt`]), subscribers report their
//! position through mobile-originated location requests ([`protocol`]),
//! reports land in a volatile info-log ([`store`]), a constant-query
//! trigger engine detects geofence entries, exits, and MS-to-MS proximity
//! ([`trigger`]), and Enter events are rendered into advertisement
//! messages and delivered to an SMSC stand-in ([`dispatch`]). The [`sim`]
//! module wires the loop and owns the on-disk formats.
//!
//! Everything is driven by a single seeded random stream consumed in a
//! fixed order, so a scenario's output files are byte-identical across
//! runs.

pub mod dispatch;
pub mod geo;
pub mod ldt;
pub mod protocol;
pub mod sim;
pub mod store;
pub mod trigger;

pub use dispatch::{AdMessage, MessageFormat, MessageSink};
pub use geo::{GeoPoint, UncertaintyRegion};
pub use ldt::{BaseStation, LdtMethod, LocationFix, RandomStream};
pub use protocol::{LcsClient, LocationReport, MoLrRequest, MtLrRequest};
pub use sim::{Route, SimConfig, SimReport, Waypoint};
pub use store::{Advertiser, Database, InfoLogEntry, UserClass, UserProfile};
pub use trigger::{PairState, TriggerConfig, TriggerEvent, TriggerKind};
