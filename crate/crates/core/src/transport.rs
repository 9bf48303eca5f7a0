//! Band → server wire formats and a FIFO latency channel.
//!
//! Binary tap message, 24 bytes, little-endian:
//!
//! | bytes  | field                      |
//! |--------|----------------------------|
//! | 0      | version (1)                |
//! | 1      | message type (0x01)        |
//! | 2..4   | seq (u16)                  |
//! | 4..12  | timestamp, µs (u64)        |
//! | 12..16 | intensity, g (f32)         |
//! | 16     | level                      |
//! | 17     | movement flag (0/1)        |
//! | 18..24 | zero                       |
//!
//! Raw acceleration message: ASCII `A,<t>,<ax>,<ay>,<az>` with four
//! decimals, right-padded with spaces to 62 bytes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localize::LogNormalLatency;
use crate::types::{ImuSample, Micros, TapEvent, MAX_PLAUSIBLE_ACCEL_G};

pub const TAP_MESSAGE_LEN: usize = 24;
pub const RAW_MESSAGE_LEN: usize = 62;
pub const WIRE_VERSION: u8 = 1;
pub const MSG_TYPE_TAP: u8 = 0x01;

pub const BINARY_MEAN_MS: f64 = 100.3;
pub const RAW_MEAN_MS: f64 = 110.87;
/// Log-space sigma giving a 40 ms 5th–95th percentile spread at 100.3 ms.
pub const DEFAULT_JITTER_SIGMA: f64 = 0.121_316_341_840_678_6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapMessage {
    pub version: u8,
    pub seq: u16,
    pub t: Micros,
    pub intensity: f32,
    pub level: u8,
    pub movement_flag: bool,
}

impl From<&TapEvent> for TapMessage {
    fn from(tap: &TapEvent) -> Self {
        Self {
            version: WIRE_VERSION,
            seq: tap.seq as u16,
            t: tap.t,
            intensity: tap.intensity as f32,
            level: tap.level,
            movement_flag: tap.movement_flag,
        }
    }
}

pub fn encode_tap(msg: &TapMessage) -> [u8; TAP_MESSAGE_LEN] {
    let mut b = [0u8; TAP_MESSAGE_LEN];
    b[0] = msg.version;
    b[1] = MSG_TYPE_TAP;
    b[2..4].copy_from_slice(&msg.seq.to_le_bytes());
    b[4..12].copy_from_slice(&msg.t.to_le_bytes());
    b[12..16].copy_from_slice(&msg.intensity.to_le_bytes());
    b[16] = msg.level;
    b[17] = u8::from(msg.movement_flag);
    b
}

pub fn decode_tap(buf: &[u8]) -> Result<TapMessage> {
    let b: &[u8; TAP_MESSAGE_LEN] =
        buf.try_into().map_err(|_| Error::Decode(format!("tap message is {} bytes, expected 24", buf.len())))?;
    if b[0] != WIRE_VERSION {
        return Err(Error::Decode(format!("unsupported version {}", b[0])));
    }
    if b[1] != MSG_TYPE_TAP {
        return Err(Error::Decode(format!("unexpected message type {:#04x}", b[1])));
    }
    let movement_flag = match b[17] {
        0 => false,
        1 => true,
        v => return Err(Error::Decode(format!("movement flag byte {v}"))),
    };
    if b[18..].iter().any(|&x| x != 0) {
        return Err(Error::Decode("non-zero padding".into()));
    }
    Ok(TapMessage {
        version: b[0],
        seq: u16::from_le_bytes([b[2], b[3]]),
        t: u64::from_le_bytes(b[4..12].try_into().expect("8 bytes")),
        intensity: f32::from_le_bytes(b[12..16].try_into().expect("4 bytes")),
        level: b[16],
        movement_flag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawAccelMessage {
    pub t: Micros,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl From<&ImuSample> for RawAccelMessage {
    fn from(s: &ImuSample) -> Self {
        Self { t: s.t, ax: s.ax, ay: s.ay, az: s.az }
    }
}

pub fn encode_raw(msg: &RawAccelMessage) -> Result<[u8; RAW_MESSAGE_LEN]> {
    for v in [msg.ax, msg.ay, msg.az] {
        if !v.is_finite() || v.abs() >= MAX_PLAUSIBLE_ACCEL_G {
            return Err(Error::EncodingOverflow(format!("acceleration {v} does not fit")));
        }
    }
    let text = format!("A,{},{:.4},{:.4},{:.4}", msg.t, msg.ax, msg.ay, msg.az);
    if text.len() > RAW_MESSAGE_LEN {
        return Err(Error::EncodingOverflow(format!("{} bytes > {RAW_MESSAGE_LEN}", text.len())));
    }
    let mut b = [b' '; RAW_MESSAGE_LEN];
    b[..text.len()].copy_from_slice(text.as_bytes());
    Ok(b)
}

pub fn decode_raw(buf: &[u8]) -> Result<RawAccelMessage> {
    if buf.len() != RAW_MESSAGE_LEN {
        return Err(Error::Decode(format!("raw message is {} bytes, expected 62", buf.len())));
    }
    let text = std::str::from_utf8(buf).map_err(|e| Error::Decode(e.to_string()))?.trim_end_matches(' ');
    let mut parts = text.split(',');
    if parts.next() != Some("A") {
        return Err(Error::Decode("missing 'A' tag".into()));
    }
    let mut field = |name: &str| {
        parts.next().ok_or_else(|| Error::Decode(format!("missing field {name}")))
    };
    let t = field("t")?.parse().map_err(|e| Error::Decode(format!("t: {e}")))?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Decode(format!("{s}: {e}")));
    let ax = num(field("ax")?)?;
    let ay = num(field("ay")?)?;
    let az = num(field("az")?)?;
    if parts.next().is_some() {
        return Err(Error::Decode("trailing fields".into()));
    }
    Ok(RawAccelMessage { t, ax, ay, az })
}

/// Which band→server encoding a run uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadMode {
    /// 24-byte discretized tap events.
    #[default]
    Binary,
    /// 62-byte text of the raw sample that triggered the tap.
    Raw,
}

impl PayloadMode {
    pub fn size(&self) -> usize {
        match self {
            PayloadMode::Binary => TAP_MESSAGE_LEN,
            PayloadMode::Raw => RAW_MESSAGE_LEN,
        }
    }
}

/// Payload-size–dependent BLE latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub binary: LogNormalLatency,
    pub raw: LogNormalLatency,
    /// Probability that a message is lost.
    pub drop_rate: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            binary: LogNormalLatency { mean_ms: BINARY_MEAN_MS, sigma: DEFAULT_JITTER_SIGMA },
            raw: LogNormalLatency { mean_ms: RAW_MEAN_MS, sigma: DEFAULT_JITTER_SIGMA },
            drop_rate: 0.0,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        self.binary.validate()?;
        self.raw.validate()?;
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::InvalidConfig("drop rate must be in [0, 1)".into()));
        }
        if self.for_size(0).is_err() || self.for_size(255).is_err() {
            return Err(Error::InvalidConfig("latency interpolation leaves the positive range".into()));
        }
        Ok(())
    }

    /// Distribution for a payload size; linear in size through the two
    /// configured points.
    pub fn for_size(&self, bytes: usize) -> Result<LogNormalLatency> {
        match bytes {
            TAP_MESSAGE_LEN => Ok(self.binary),
            RAW_MESSAGE_LEN => Ok(self.raw),
            _ => {
                let f = (bytes as f64 - TAP_MESSAGE_LEN as f64) / (RAW_MESSAGE_LEN - TAP_MESSAGE_LEN) as f64;
                LogNormalLatency::new(
                    self.binary.mean_ms + f * (self.raw.mean_ms - self.binary.mean_ms),
                    (self.binary.sigma + f * (self.raw.sigma - self.binary.sigma)).max(0.0),
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub send_t: Micros,
    pub deliver_t: Micros,
    pub comm_ms: f64,
    pub bytes: usize,
}

/// One band's ordered channel. Deliveries never overtake each other.
#[derive(Debug, Clone)]
pub struct Channel {
    model: LatencyModel,
    last_delivery: Option<Micros>,
}

impl Channel {
    pub fn new(model: LatencyModel) -> Result<Self> {
        model.validate()?;
        Ok(Self { model, last_delivery: None })
    }

    pub fn model(&self) -> &LatencyModel {
        &self.model
    }

    /// Queue `payload` at `send_t`. Returns `None` if the message is lost.
    /// Draw order: loss first (only when `drop_rate > 0`), then latency.
    pub fn send<R: Rng + ?Sized>(&mut self, payload: &[u8], send_t: Micros, rng: &mut R) -> Option<Delivery> {
        if self.model.drop_rate > 0.0 && rng.random::<f64>() < self.model.drop_rate {
            return None;
        }
        let dist = self.model.for_size(payload.len()).expect("validated model");
        let latency_us = (dist.sample(rng) * 1000.0).round().max(1.0) as Micros;
        let mut deliver_t = send_t + latency_us;
        if let Some(last) = self.last_delivery {
            deliver_t = deliver_t.max(last);
        }
        self.last_delivery = Some(deliver_t);
        Some(Delivery {
            send_t,
            deliver_t,
            comm_ms: (deliver_t - send_t) as f64 / 1000.0,
            bytes: payload.len(),
        })
    }
}

/// Stateless one-off send: a fresh channel seeded from `seed`.
pub fn send(payload: &[u8], model: &LatencyModel, send_t: Micros, seed: u64) -> Result<Option<Delivery>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok(Channel::new(*model)?.send(payload, send_t, &mut rng))
}
