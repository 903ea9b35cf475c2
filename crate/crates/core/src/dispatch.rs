//! Advertisement rendering and delivery to the emulated SMSC sink.
//!
//! Enter events become one message each. Common users receive Flash text
//! with the distance coarsened to 50 m steps; app users with an active
//! app get a push payload with meter precision; app users whose app is
//! inactive fall back to Flash so a paid advertisement is never dropped.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::store::{Advertiser, UserClass, UserProfile};
use crate::trigger::{TriggerEvent, TriggerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MessageFormat {
    Flash,
    AppPush,
}

/// The rendered advertisement. Field order here is the jsonl key order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdMessage {
    pub msisdn: String,
    pub advertiser_id: String,
    pub approx_distance_m: u64,
    pub promo_text: String,
    pub format: MessageFormat,
    pub timestamp: u64,
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("NotAnEnterEvent: only Enter events are dispatched, got {0:?}")]
    NotAnEnterEvent(TriggerKind),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

/// Render an Enter event for a user/advertiser pair.
pub fn render(
    event: &TriggerEvent,
    user: &UserProfile,
    adv: &Advertiser,
) -> Result<AdMessage, DispatchError> {
    if event.kind != TriggerKind::Enter {
        return Err(DispatchError::NotAnEnterEvent(event.kind));
    }
    let (format, approx_distance_m) = match user.user_class {
        UserClass::Common => (MessageFormat::Flash, round_to_50(event.distance)),
        UserClass::Gprs | UserClass::GprsGps => {
            if user.app_active {
                (MessageFormat::AppPush, event.distance.floor() as u64)
            } else {
                (MessageFormat::Flash, round_to_50(event.distance))
            }
        }
    };
    Ok(AdMessage {
        msisdn: event.msisdn.clone(),
        advertiser_id: adv.advertiser_id.clone(),
        approx_distance_m,
        promo_text: adv.promo_text.clone(),
        format,
        timestamp: event.timestamp,
    })
}

// Nearest multiple of 50, halves rounding up.
fn round_to_50(d: f64) -> u64 {
    ((d / 50.0).round() as u64) * 50
}

/// Append-only destination standing in for the SMSC: a jsonl file or an
/// in-memory buffer for tests.
#[derive(Debug)]
pub struct MessageSink {
    inner: SinkInner,
}

#[derive(Debug)]
enum SinkInner {
    File(BufWriter<File>),
    Memory(Vec<u8>),
}

impl MessageSink {
    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            inner: SinkInner::File(BufWriter::new(File::create(path)?)),
        })
    }

    pub fn in_memory() -> Self {
        Self {
            inner: SinkInner::Memory(Vec::new()),
        }
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        match &mut self.inner {
            SinkInner::File(w) => w.flush(),
            SinkInner::Memory(_) => Ok(()),
        }
    }

    /// Buffered lines of an in-memory sink; `None` for file sinks.
    pub fn lines(&self) -> Option<Vec<String>> {
        match &self.inner {
            SinkInner::Memory(buf) => Some(
                String::from_utf8_lossy(buf)
                    .lines()
                    .map(|l| l.to_string())
                    .collect(),
            ),
            SinkInner::File(_) => None,
        }
    }
}

/// Append one serialized message line; delivery order is call order.
pub fn deliver(msg: &AdMessage, sink: &mut MessageSink) -> Result<(), DispatchError> {
    let line = serde_json::to_string(msg).expect("AdMessage serialization cannot fail");
    match &mut sink.inner {
        SinkInner::File(w) => {
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        SinkInner::Memory(buf) => {
            buf.extend_from_slice(line.as_bytes());
            buf.push(b'\n');
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use std::collections::BTreeSet;

    fn user(class: UserClass, app_active: bool) -> UserProfile {
        UserProfile {
            msisdn: "1000".into(),
            user_class: class,
            subscriptions: BTreeSet::from(["food".to_string()]),
            app_active,
        }
    }

    fn advertiser() -> Advertiser {
        Advertiser {
            advertiser_id: "shop-01".into(),
            secret: "s".into(),
            position: GeoPoint::new(0.0, 0.0),
            service_type: "food".into(),
            promo_text: "two for one".into(),
            trigger_limit: None,
        }
    }

    fn enter(distance: f64) -> TriggerEvent {
        TriggerEvent {
            kind: TriggerKind::Enter,
            msisdn: "1000".into(),
            counterpart: "shop-01".into(),
            distance,
            timestamp: 3,
        }
    }

    #[test]
    fn class_format_matrix() {
        let cases = [
            (UserClass::Common, false, MessageFormat::Flash, 450),
            (UserClass::Common, true, MessageFormat::Flash, 450),
            (UserClass::Gprs, false, MessageFormat::Flash, 450),
            (UserClass::Gprs, true, MessageFormat::AppPush, 437),
            (UserClass::GprsGps, false, MessageFormat::Flash, 450),
            (UserClass::GprsGps, true, MessageFormat::AppPush, 437),
        ];
        for (class, active, format, distance) in cases {
            let msg = render(&enter(437.2), &user(class, active), &advertiser()).unwrap();
            assert_eq!(msg.format, format, "{class:?} active={active}");
            assert_eq!(msg.approx_distance_m, distance, "{class:?} active={active}");
        }
    }

    #[test]
    fn flash_rounds_half_up() {
        let msg = render(&enter(437.0), &user(UserClass::Common, false), &advertiser()).unwrap();
        assert_eq!(msg.approx_distance_m, 450);
        let msg = render(&enter(425.0), &user(UserClass::Common, false), &advertiser()).unwrap();
        assert_eq!(msg.approx_distance_m, 450, "halves round up");
        let msg = render(&enter(424.9), &user(UserClass::Common, false), &advertiser()).unwrap();
        assert_eq!(msg.approx_distance_m, 400);
        let msg = render(&enter(12.0), &user(UserClass::Common, false), &advertiser()).unwrap();
        assert_eq!(msg.approx_distance_m, 0);
    }

    #[test]
    fn app_push_truncates_to_meters() {
        let msg = render(&enter(437.9), &user(UserClass::GprsGps, true), &advertiser()).unwrap();
        assert_eq!(msg.approx_distance_m, 437);
    }

    #[test]
    fn non_enter_events_rejected() {
        let mut event = enter(10.0);
        event.kind = TriggerKind::Exit;
        assert!(matches!(
            render(&event, &user(UserClass::Common, false), &advertiser()),
            Err(DispatchError::NotAnEnterEvent(TriggerKind::Exit))
        ));
        event.kind = TriggerKind::Proximity;
        assert!(render(&event, &user(UserClass::Common, false), &advertiser()).is_err());
    }

    #[test]
    fn message_line_format_is_stable() {
        let msg = render(&enter(437.0), &user(UserClass::Common, false), &advertiser()).unwrap();
        let mut sink = MessageSink::in_memory();
        deliver(&msg, &mut sink).unwrap();
        assert_eq!(
            sink.lines().unwrap(),
            vec![
                r#"{"msisdn":"1000","advertiser_id":"shop-01","approx_distance_m":450,"promo_text":"two for one","format":"Flash","timestamp":3}"#
            ]
        );
    }

    #[test]
    fn delivery_preserves_order() {
        let mut sink = MessageSink::in_memory();
        for d in [100.0, 200.0, 300.0] {
            let msg = render(&enter(d), &user(UserClass::GprsGps, true), &advertiser()).unwrap();
            deliver(&msg, &mut sink).unwrap();
        }
        let lines = sink.lines().unwrap();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains(":100,"));
        assert!(lines[1].contains(":200,"));
        assert!(lines[2].contains(":300,"));
    }

    #[test]
    fn empty_sink_has_no_lines() {
        let sink = MessageSink::in_memory();
        assert!(sink.lines().unwrap().is_empty());
    }

    #[test]
    fn file_sink_rewrites_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("messages.jsonl");
        let write_once = || {
            let mut sink = MessageSink::to_file(&path).unwrap();
            for d in [120.0, 380.5] {
                let msg = render(&enter(d), &user(UserClass::Gprs, true), &advertiser()).unwrap();
                deliver(&msg, &mut sink).unwrap();
            }
            sink.flush().unwrap();
            std::fs::read(&path).unwrap()
        };
        assert_eq!(write_once(), write_once());
    }
}
