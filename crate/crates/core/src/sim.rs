//! Scenario ingestion and the deterministic tick loop.
//!
//! Each tick, every routed subscriber is positioned by linear waypoint
//! interpolation and issues an MO-LR; the info-log is then drained and fed
//! to the trigger engine, Enter events are rendered and delivered to the
//! message sink, and every event is appended to the events stream. With a
//! fixed seed the output files are byte-identical across runs.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::dispatch::{deliver, render, DispatchError, MessageSink};
use crate::geo::GeoPoint;
use crate::ldt::{BaseStation, RandomStream};
use crate::protocol::{handle_mo_lr, LcsClient, MoLrRequest, ProtocolError};
use crate::store::{Database, StoreError, UserClass};
use crate::trigger::{evaluate_batch, proximity_batch, PairState, TriggerConfig, TriggerEvent, TriggerKind};

/// A timed waypoint of a route file.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: i64,
    pub x: f64,
    pub y: f64,
}

/// One mobile's scripted trajectory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub msisdn: String,
    pub waypoints: Vec<Waypoint>,
}

impl Route {
    pub fn validate(&self) -> Result<(), String> {
        if self.msisdn.is_empty() {
            return Err("msisdn must be non-empty".into());
        }
        if self.waypoints.is_empty() {
            return Err("route needs at least one waypoint".into());
        }
        for w in &self.waypoints {
            if !w.x.is_finite() || !w.y.is_finite() {
                return Err(format!("waypoint at t={} has non-finite coordinates", w.t));
            }
        }
        for pair in self.waypoints.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(format!(
                    "waypoint timestamps must strictly increase, got {} then {}",
                    pair[0].t, pair[1].t
                ));
            }
        }
        Ok(())
    }
}

/// Position along a route at tick `t`: linear interpolation between the
/// bracketing waypoints, clamped to the route ends.
pub fn position_at(route: &Route, t: i64) -> GeoPoint {
    let wps = &route.waypoints;
    let first = &wps[0];
    if t <= first.t {
        return GeoPoint::new(first.x, first.y);
    }
    let last = &wps[wps.len() - 1];
    if t >= last.t {
        return GeoPoint::new(last.x, last.y);
    }
    let idx = wps.partition_point(|w| w.t <= t);
    let (a, b) = (&wps[idx - 1], &wps[idx]);
    let frac = (t - a.t) as f64 / (b.t - a.t) as f64;
    GeoPoint::new(a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y))
}

/// Full scenario description loaded from the config file. Relative paths
/// are resolved against the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub ticks: u64,
    #[serde(default)]
    pub base_stations: Vec<BaseStation>,
    #[serde(default)]
    pub lcs_clients: Vec<LcsClient>,
    #[serde(default)]
    pub trigger: TriggerConfig,
    pub routes_path: PathBuf,
    pub snapshot_path: PathBuf,
    pub out_dir: PathBuf,
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let body = fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: SimConfig = serde_json::from_str(&body)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.routes_path = resolve(dir, &cfg.routes_path);
            cfg.snapshot_path = resolve(dir, &cfg.snapshot_path);
            cfg.out_dir = resolve(dir, &cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.ticks < 1 {
            return Err(SimError::Config("ticks must be >= 1".into()));
        }
        self.trigger
            .validate()
            .map_err(|e| SimError::Config(format!("trigger: {e}")))?;
        let mut ids = BTreeSet::new();
        for bs in &self.base_stations {
            if bs.id.is_empty() {
                return Err(SimError::Config("base station id must be non-empty".into()));
            }
            if !ids.insert(&bs.id) {
                return Err(SimError::Config(format!("duplicate base station id {:?}", bs.id)));
            }
            if !bs.position.is_finite() {
                return Err(SimError::Config(format!(
                    "base station {:?}: position must be finite",
                    bs.id
                )));
            }
            if !(0.0..=360.0).contains(&bs.sector_width) || bs.sector_width == 0.0 {
                return Err(SimError::Config(format!(
                    "base station {:?}: sector_width must be in (0, 360], got {}",
                    bs.id, bs.sector_width
                )));
            }
        }
        let mut client_ids = BTreeSet::new();
        for client in &self.lcs_clients {
            if !client_ids.insert(&client.client_id) {
                return Err(SimError::Config(format!(
                    "duplicate LCS client id {:?}",
                    client.client_id
                )));
            }
        }
        Ok(())
    }
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// Counters and output locations from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub reports: u64,
    pub enters: u64,
    pub exits: u64,
    pub proximities: u64,
    pub messages: u64,
    pub per_advertiser_messages: std::collections::BTreeMap<String, u64>,
    pub events_path: PathBuf,
    pub messages_path: PathBuf,
    pub skipped_routes: Vec<String>,
}

impl SimReport {
    /// Human-readable run summary for standard output.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("reports: {}\n", self.reports));
        out.push_str(&format!("enter events: {}\n", self.enters));
        out.push_str(&format!("exit events: {}\n", self.exits));
        out.push_str(&format!("proximity events: {}\n", self.proximities));
        out.push_str(&format!("messages: {}\n", self.messages));
        if !self.per_advertiser_messages.is_empty() {
            out.push_str("per-advertiser messages:\n");
            for (id, n) in &self.per_advertiser_messages {
                out.push_str(&format!("  {id}: {n}\n"));
            }
        }
        out.push_str(&format!("events: {}\n", self.events_path.display()));
        out.push_str(&format!("messages file: {}\n", self.messages_path.display()));
        out
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error("IoError: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("MalformedRoute: {path}: {reason}")]
    MalformedRoute { path: PathBuf, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

/// Load one route file.
pub fn load_route_file(path: &Path) -> Result<Route, SimError> {
    let body = fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let route: Route = serde_json::from_str(&body).map_err(|e| SimError::MalformedRoute {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    route.validate().map_err(|reason| SimError::MalformedRoute {
        path: path.to_path_buf(),
        reason,
    })?;
    Ok(route)
}

/// Load every `.json` route in a directory, in filename order; a file path
/// loads that single route.
pub fn load_routes(path: &Path) -> Result<Vec<Route>, SimError> {
    if path.is_file() {
        return Ok(vec![load_route_file(path)?]);
    }
    let entries = fs::read_dir(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    files.iter().map(|f| load_route_file(f)).collect()
}

/// One JSON line of the events stream. Distances are fixed to three
/// decimal places so byte-exact reproducibility is well-defined.
pub fn event_line(e: &TriggerEvent) -> String {
    let kind = match e.kind {
        TriggerKind::Enter => "Enter",
        TriggerKind::Exit => "Exit",
        TriggerKind::Proximity => "Proximity",
    };
    format!(
        r#"{{"kind":{},"msisdn":{},"counterpart":{},"distance":{:.3},"timestamp":{}}}"#,
        json_str(kind),
        json_str(&e.msisdn),
        json_str(&e.counterpart),
        e.distance,
        e.timestamp
    )
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

/// Run the scenario: load the snapshot and routes, execute the tick loop,
/// and write `events.jsonl` and `messages.jsonl` under `out_dir`.
pub fn run(cfg: &SimConfig) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let mut db = Database::load_snapshot(&cfg.snapshot_path)?;
    if cfg.base_stations.is_empty()
        && db.users().values().any(|u| u.user_class == UserClass::Common)
    {
        return Err(SimError::Config(
            "config declares no base stations but the snapshot has Common-class users".into(),
        ));
    }

    let mut routes = Vec::new();
    let mut skipped_routes = Vec::new();
    for route in load_routes(&cfg.routes_path)? {
        if db.users().contains_key(&route.msisdn) {
            routes.push(route);
        } else {
            skipped_routes.push(route.msisdn.clone());
        }
    }
    routes.sort_by(|a, b| a.msisdn.cmp(&b.msisdn));
    for pair in routes.windows(2) {
        if pair[0].msisdn == pair[1].msisdn {
            return Err(SimError::Config(format!(
                "multiple routes for msisdn {:?}",
                pair[0].msisdn
            )));
        }
    }

    fs::create_dir_all(&cfg.out_dir).map_err(|source| SimError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let events_path = cfg.out_dir.join("events.jsonl");
    let messages_path = cfg.out_dir.join("messages.jsonl");
    let mut events_out = BufWriter::new(File::create(&events_path).map_err(|source| {
        SimError::Io {
            path: events_path.clone(),
            source,
        }
    })?);
    let mut sink = MessageSink::to_file(&messages_path).map_err(|source| SimError::Io {
        path: messages_path.clone(),
        source,
    })?;

    let mut rng = RandomStream::from_seed(cfg.seed);
    let mut state = PairState::new();
    let mut report = SimReport {
        reports: 0,
        enters: 0,
        exits: 0,
        proximities: 0,
        messages: 0,
        per_advertiser_messages: Default::default(),
        events_path: events_path.clone(),
        messages_path: messages_path.clone(),
        skipped_routes,
    };

    for t in 0..cfg.ticks {
        for route in &routes {
            let req = MoLrRequest {
                msisdn: route.msisdn.clone(),
                timestamp: t,
                true_position: position_at(route, t as i64),
            };
            handle_mo_lr(&req, &cfg.base_stations, &mut db, &mut rng)?;
            report.reports += 1;
        }
        let batch: Vec<crate::protocol::LocationReport> =
            db.drain_infolog().into_iter().map(Into::into).collect();
        debug_assert_eq!(db.infolog_len(), 0);

        let mut events = evaluate_batch(&batch, &db, &mut state, &cfg.trigger);
        for event in &events {
            match event.kind {
                TriggerKind::Enter => {
                    report.enters += 1;
                    // Both lookups are guaranteed by the event's provenance.
                    let user = &db.users()[&event.msisdn];
                    let adv = &db.advertisers()[&event.counterpart];
                    let msg = render(event, user, adv)?;
                    deliver(&msg, &mut sink)?;
                    report.messages += 1;
                    *report
                        .per_advertiser_messages
                        .entry(adv.advertiser_id.clone())
                        .or_insert(0) += 1;
                }
                TriggerKind::Exit => report.exits += 1,
                TriggerKind::Proximity => unreachable!("evaluate_batch never emits Proximity"),
            }
        }
        let prox = proximity_batch(&batch, &mut state, &cfg.trigger);
        report.proximities += prox.len() as u64;
        events.extend(prox);
        for event in &events {
            writeln!(events_out, "{}", event_line(event)).map_err(|source| SimError::Io {
                path: events_path.clone(),
                source,
            })?;
        }
    }

    events_out.flush().map_err(|source| SimError::Io {
        path: events_path.clone(),
        source,
    })?;
    sink.flush().map_err(|source| SimError::Io {
        path: messages_path.clone(),
        source,
    })?;
    debug_assert_eq!(report.messages, report.enters, "one message per Enter");
    Ok(report)
}
