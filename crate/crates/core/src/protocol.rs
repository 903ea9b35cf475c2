//! Location-request handling.
//!
//! MO-LR: a subscriber asks for its own position; the resulting report is
//! returned to the handset and appended to the server info-log, which is
//! what feeds the advertising pipeline. MT-LR: an external LCS client asks
//! for a subscriber's position through the gateway, which first verifies
//! that an agreement with the client exists; the report goes back to the
//! client only and never touches the info-log.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::ldt::{measure, BaseStation, LdtError, LdtMethod, LocationFix, RandomStream};
use crate::store::{Database, InfoLogEntry, UserClass};

/// A subscriber's own location request. `true_position` is the emulator's
/// ground truth and is never exposed past the measurement step.
#[derive(Debug, Clone, PartialEq)]
pub struct MoLrRequest {
    pub msisdn: String,
    pub timestamp: u64,
    pub true_position: GeoPoint,
}

/// A measured position attributed to a subscriber at a tick.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationReport {
    pub msisdn: String,
    pub fix: LocationFix,
    pub timestamp: u64,
}

impl From<InfoLogEntry> for LocationReport {
    fn from(entry: InfoLogEntry) -> Self {
        LocationReport {
            msisdn: entry.msisdn,
            fix: entry.fix,
            timestamp: entry.timestamp,
        }
    }
}

/// External client known to the gateway, with or without a standing
/// agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcsClient {
    pub client_id: String,
    pub agreement: bool,
}

/// An external client's request for a subscriber's position.
#[derive(Debug, Clone, PartialEq)]
pub struct MtLrRequest {
    pub client_id: String,
    pub msisdn: String,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("UnknownUser: {0:?} is not subscribed")]
    UnknownUser(String),
    #[error("UnknownClient: no LCS client {0:?}")]
    UnknownClient(String),
    #[error("AgreementMissing: no agreement with LCS client {0:?}")]
    AgreementMissing(String),
    #[error(transparent)]
    Ldt(#[from] LdtError),
}

/// Positioning technique used for each subscriber class: the classes span
/// the accuracy spectrum from plain cell-id up to assisted GPS.
pub fn class_method(user_class: UserClass) -> LdtMethod {
    match user_class {
        UserClass::Common => LdtMethod::CgiTa,
        UserClass::Gprs => LdtMethod::Eotd,
        UserClass::GprsGps => LdtMethod::Agps,
    }
}

/// Handle a mobile-originated request: measure, append to the info-log,
/// and return the same report to the handset.
pub fn handle_mo_lr(
    req: &MoLrRequest,
    network: &[BaseStation],
    db: &mut Database,
    rng: &mut RandomStream,
) -> Result<LocationReport, ProtocolError> {
    let user = db
        .users()
        .get(&req.msisdn)
        .ok_or_else(|| ProtocolError::UnknownUser(req.msisdn.clone()))?;
    let fix = measure(req.true_position, class_method(user.user_class), network, rng)?;
    db.append_infolog(InfoLogEntry {
        msisdn: req.msisdn.clone(),
        fix: fix.clone(),
        timestamp: req.timestamp,
    });
    Ok(LocationReport {
        msisdn: req.msisdn.clone(),
        fix,
        timestamp: req.timestamp,
    })
}

/// Handle a mobile-terminated request on behalf of an external client.
/// The gateway rejects clients it does not know or that lack an agreement.
/// The report is returned to the caller only; the info-log is not touched,
/// so MT-LR traffic never feeds the advertising pipeline.
pub fn handle_mt_lr(
    req: &MtLrRequest,
    true_position: GeoPoint,
    timestamp: u64,
    clients: &[LcsClient],
    network: &[BaseStation],
    db: &Database,
    rng: &mut RandomStream,
) -> Result<LocationReport, ProtocolError> {
    let client = clients
        .iter()
        .find(|c| c.client_id == req.client_id)
        .ok_or_else(|| ProtocolError::UnknownClient(req.client_id.clone()))?;
    if !client.agreement {
        return Err(ProtocolError::AgreementMissing(req.client_id.clone()));
    }
    let user = db
        .users()
        .get(&req.msisdn)
        .ok_or_else(|| ProtocolError::UnknownUser(req.msisdn.clone()))?;
    let fix = measure(true_position, class_method(user.user_class), network, rng)?;
    Ok(LocationReport {
        msisdn: req.msisdn.clone(),
        fix,
        timestamp,
    })
}
