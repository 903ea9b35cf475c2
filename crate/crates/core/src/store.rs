//! Server-side database: user profiles, the advertiser registry, and the
//! volatile info-log of recent location reports.
//!
//! The info-log is drained (and thereby purged) each time it is processed;
//! the users and advertisements sections persist through JSON snapshots.
//! Advertiser records can only be changed with the matching shared secret.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::ldt::LocationFix;

/// Subscriber capability classes, from coarsest to finest positioning tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserClass {
    Common,
    Gprs,
    GprsGps,
}

/// A subscribed user keyed by MSISDN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    pub msisdn: String,
    pub user_class: UserClass,
    pub subscriptions: BTreeSet<String>,
    pub app_active: bool,
}

/// An advertiser record: position, offered service type, promo payload,
/// and an optional per-advertiser trigger distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Advertiser {
    pub advertiser_id: String,
    pub secret: String,
    pub position: GeoPoint,
    pub service_type: String,
    pub promo_text: String,
    pub trigger_limit: Option<f64>,
}

/// Field changes applied by [`Database::update_advertiser`]; `None` leaves
/// the stored value untouched.
#[derive(Debug, Clone, Default)]
pub struct AdvertiserUpdate {
    pub position: Option<GeoPoint>,
    pub service_type: Option<String>,
    pub promo_text: Option<String>,
    pub trigger_limit: Option<f64>,
}

/// One pending location report, purged when the infolog is drained.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoLogEntry {
    pub msisdn: String,
    pub fix: LocationFix,
    pub timestamp: u64,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("DuplicateId: advertiser {0:?} already registered")]
    DuplicateId(String),
    #[error("UnknownId: no advertiser {0:?}")]
    UnknownId(String),
    #[error("BadCredential: secret does not match")]
    BadCredential,
    #[error("EmptySubscription: at least one service type is required")]
    EmptySubscription,
    #[error("InvalidMsisdn: {0:?} must be a non-empty digit string")]
    InvalidMsisdn(String),
    #[error("UnknownUser: no subscriber {0:?}")]
    UnknownUser(String),
    #[error("InvalidRecord: {0}")]
    InvalidRecord(String),
    #[error("IoError: {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("MalformedSnapshot: {0}")]
    MalformedSnapshot(String),
}

/// The three database sections. Users and advertisements are keyed maps;
/// the infolog is an append-only list until drained.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    users: BTreeMap<String, UserProfile>,
    advertisements: BTreeMap<String, Advertiser>,
    infolog: Vec<InfoLogEntry>,
}

#[derive(Serialize)]
struct SnapshotRef<'a> {
    users: &'a BTreeMap<String, UserProfile>,
    advertisements: &'a BTreeMap<String, Advertiser>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    #[serde(default)]
    users: BTreeMap<String, UserProfile>,
    #[serde(default)]
    advertisements: BTreeMap<String, Advertiser>,
}

fn valid_msisdn(msisdn: &str) -> bool {
    !msisdn.is_empty() && msisdn.bytes().all(|b| b.is_ascii_digit())
}

// Length-independent comparison so lookups cannot time-probe the secret.
fn secrets_match(a: &str, b: &str) -> bool {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut diff = a.len() ^ b.len();
    for i in 0..a.len().max(b.len()) {
        diff |= (*a.get(i).unwrap_or(&0) ^ *b.get(i).unwrap_or(&0)) as usize;
    }
    diff == 0
}

fn check_advertiser_fields(adv: &Advertiser) -> Result<(), StoreError> {
    if adv.advertiser_id.is_empty() {
        return Err(StoreError::InvalidRecord("advertiser_id must be non-empty".into()));
    }
    if !adv.position.is_finite() {
        return Err(StoreError::InvalidRecord(format!(
            "advertiser {:?}: position must be finite",
            adv.advertiser_id
        )));
    }
    if let Some(limit) = adv.trigger_limit {
        if !limit.is_finite() || limit <= 0.0 {
            return Err(StoreError::InvalidRecord(format!(
                "advertiser {:?}: trigger_limit must be > 0, got {limit}",
                adv.advertiser_id
            )));
        }
    }
    Ok(())
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn users(&self) -> &BTreeMap<String, UserProfile> {
        &self.users
    }

    pub fn advertisers(&self) -> &BTreeMap<String, Advertiser> {
        &self.advertisements
    }

    pub fn infolog_len(&self) -> usize {
        self.infolog.len()
    }

    pub fn register_advertiser(&mut self, adv: Advertiser) -> Result<(), StoreError> {
        check_advertiser_fields(&adv)?;
        if self.advertisements.contains_key(&adv.advertiser_id) {
            return Err(StoreError::DuplicateId(adv.advertiser_id));
        }
        self.advertisements.insert(adv.advertiser_id.clone(), adv);
        Ok(())
    }

    pub fn update_advertiser(
        &mut self,
        id: &str,
        secret: &str,
        changes: AdvertiserUpdate,
    ) -> Result<(), StoreError> {
        let current = self
            .advertisements
            .get(id)
            .ok_or_else(|| StoreError::UnknownId(id.to_string()))?;
        if !secrets_match(secret, &current.secret) {
            return Err(StoreError::BadCredential);
        }
        let mut updated = current.clone();
        if let Some(position) = changes.position {
            updated.position = position;
        }
        if let Some(service_type) = changes.service_type {
            updated.service_type = service_type;
        }
        if let Some(promo_text) = changes.promo_text {
            updated.promo_text = promo_text;
        }
        if let Some(limit) = changes.trigger_limit {
            updated.trigger_limit = Some(limit);
        }
        check_advertiser_fields(&updated)?;
        self.advertisements.insert(id.to_string(), updated);
        Ok(())
    }

    pub fn remove_advertiser(&mut self, id: &str, secret: &str) -> Result<(), StoreError> {
        let current = self
            .advertisements
            .get(id)
            .ok_or_else(|| StoreError::UnknownId(id.to_string()))?;
        if !secrets_match(secret, &current.secret) {
            return Err(StoreError::BadCredential);
        }
        self.advertisements.remove(id);
        Ok(())
    }

    /// Store or fully replace a subscription. `app_active` starts false;
    /// flip it with [`Database::set_app_active`].
    pub fn subscribe_user(
        &mut self,
        msisdn: &str,
        user_class: UserClass,
        subscriptions: BTreeSet<String>,
    ) -> Result<(), StoreError> {
        if !valid_msisdn(msisdn) {
            return Err(StoreError::InvalidMsisdn(msisdn.to_string()));
        }
        if subscriptions.is_empty() {
            return Err(StoreError::EmptySubscription);
        }
        self.users.insert(
            msisdn.to_string(),
            UserProfile {
                msisdn: msisdn.to_string(),
                user_class,
                subscriptions,
                app_active: false,
            },
        );
        Ok(())
    }

    pub fn unsubscribe_user(&mut self, msisdn: &str) -> Result<(), StoreError> {
        self.users
            .remove(msisdn)
            .map(|_| ())
            .ok_or_else(|| StoreError::UnknownUser(msisdn.to_string()))
    }

    pub fn set_app_active(&mut self, msisdn: &str, active: bool) -> Result<(), StoreError> {
        let user = self
            .users
            .get_mut(msisdn)
            .ok_or_else(|| StoreError::UnknownUser(msisdn.to_string()))?;
        user.app_active = active;
        Ok(())
    }

    /// Append a location report. A second report for the same MSISDN in the
    /// same tick replaces the first: the infolog keeps only the most recent
    /// location per user per tick.
    pub fn append_infolog(&mut self, entry: InfoLogEntry) {
        if let Some(existing) = self
            .infolog
            .iter_mut()
            .find(|e| e.msisdn == entry.msisdn && e.timestamp == entry.timestamp)
        {
            *existing = entry;
        } else {
            self.infolog.push(entry);
        }
    }

    /// Take every pending entry in `(timestamp, msisdn)` order, leaving the
    /// infolog empty.
    pub fn drain_infolog(&mut self) -> Vec<InfoLogEntry> {
        let mut entries = std::mem::take(&mut self.infolog);
        entries.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.msisdn.cmp(&b.msisdn))
        });
        entries
    }

    /// Write the users and advertisements sections as one JSON document.
    /// The infolog is volatile and never persisted.
    pub fn save_snapshot(&self, path: &Path) -> Result<(), StoreError> {
        let doc = SnapshotRef {
            users: &self.users,
            advertisements: &self.advertisements,
        };
        let body = serde_json::to_string_pretty(&doc)
            .map_err(|e| StoreError::MalformedSnapshot(e.to_string()))?;
        fs::write(path, body + "\n").map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_snapshot(path: &Path) -> Result<Database, StoreError> {
        let body = fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let doc: SnapshotDoc = serde_json::from_str(&body).map_err(|e| {
            StoreError::MalformedSnapshot(format!("{}: {e}", path.display()))
        })?;
        for (key, user) in &doc.users {
            if key != &user.msisdn {
                return Err(StoreError::MalformedSnapshot(format!(
                    "users key {key:?} does not match msisdn {:?}",
                    user.msisdn
                )));
            }
            if !valid_msisdn(&user.msisdn) {
                return Err(StoreError::MalformedSnapshot(format!(
                    "users[{key:?}]: msisdn must be a non-empty digit string"
                )));
            }
            if user.subscriptions.is_empty() {
                return Err(StoreError::MalformedSnapshot(format!(
                    "users[{key:?}]: subscriptions must be non-empty"
                )));
            }
        }
        for (key, adv) in &doc.advertisements {
            if key != &adv.advertiser_id {
                return Err(StoreError::MalformedSnapshot(format!(
                    "advertisements key {key:?} does not match advertiser_id {:?}",
                    adv.advertiser_id
                )));
            }
            check_advertiser_fields(adv)
                .map_err(|e| StoreError::MalformedSnapshot(format!("advertisements[{key:?}]: {e}")))?;
        }
        Ok(Database {
            users: doc.users,
            advertisements: doc.advertisements,
            infolog: Vec::new(),
        })
    }
}
