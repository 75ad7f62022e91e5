//! Byte layout of a broadcast, used for airtime.
//!
//! A point addressed to several neighbors goes on the air once, followed
//! by a bitmask over the recipient table.
//!
//! Header, 16 bytes: magic `b"WO"`, version, feature count, sender (u16),
//! recipient count (u16), payload length (u32), point count (u16), 2
//! reserved zero bytes. Then the recipient table (u16 each), then each
//! distinct point: origin (u16), epoch (u32), timestamp (f32), hop (u8),
//! features (f32 each), recipient mask (one bit per table slot, rounded
//! up to whole bytes). All integers big-endian.

use thiserror::Error;

use crate::protocol::{Packet, PacketEntry};
use crate::rating::DataPoint;

pub const HEADER_BYTES: usize = 16;
pub const RECIPIENT_BYTES: usize = 2;
const MAGIC: &[u8; 2] = b"WO";
const VERSION: u8 = 2;

pub const fn point_bytes(dim: usize) -> usize {
    2 + 4 + 4 + 1 + 4 * dim
}

pub const fn mask_bytes(recipients: usize) -> usize {
    recipients.div_ceil(8)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("{what} {value} does not fit the wire format")]
    Overflow { what: &'static str, value: u64 },
    #[error("points in one packet must share a feature count")]
    MixedDimensions,
    #[error("truncated packet")]
    Truncated,
    #[error("bad header: {0}")]
    BadHeader(&'static str),
    #[error("decoded point is invalid: {0}")]
    BadPoint(String),
}

/// Distinct point records of `packet`, first-seen order, each with the
/// entry indexes it is addressed to.
fn distinct(packet: &Packet) -> Vec<(&DataPoint, Vec<usize>)> {
    let mut out: Vec<(&DataPoint, Vec<usize>)> = Vec::new();
    let mut at = std::collections::HashMap::new();
    for (i, e) in packet.entries.iter().enumerate() {
        for p in &e.points {
            let slot = *at.entry((p.key(), p.hop)).or_insert_with(|| {
                out.push((p, Vec::new()));
                out.len() - 1
            });
            out[slot].1.push(i);
        }
    }
    out
}

/// Number of point records that go on the air for `packet`.
pub fn distinct_points(packet: &Packet) -> usize {
    distinct(packet).len()
}

/// Encoded size of `packet` in bytes.
pub fn encoded_len(packet: &Packet) -> usize {
    let r = packet.entries.len();
    HEADER_BYTES
        + RECIPIENT_BYTES * r
        + distinct(packet)
            .iter()
            .map(|(p, _)| point_bytes(p.rest.dim()) + mask_bytes(r))
            .sum::<usize>()
}

fn fit<T: TryFrom<u64>>(what: &'static str, value: u64) -> Result<T, WireError> {
    T::try_from(value).map_err(|_| WireError::Overflow { what, value })
}

pub fn encode(packet: &Packet) -> Result<Vec<u8>, WireError> {
    let points = distinct(packet);
    let mut dims = points.iter().map(|(p, _)| p.rest.dim());
    let dim = dims.next().unwrap_or(0);
    if dims.any(|d| d != dim) {
        return Err(WireError::MixedDimensions);
    }
    let r = packet.entries.len();
    let len = encoded_len(packet);
    let mut b = Vec::with_capacity(len);
    b.extend_from_slice(MAGIC);
    b.push(VERSION);
    b.push(fit::<u8>("feature count", dim as u64)?);
    b.extend_from_slice(&fit::<u16>("sender", packet.sender.into())?.to_be_bytes());
    b.extend_from_slice(&fit::<u16>("recipient count", r as u64)?.to_be_bytes());
    b.extend_from_slice(&fit::<u32>("payload length", (len - HEADER_BYTES) as u64)?.to_be_bytes());
    b.extend_from_slice(&fit::<u16>("point count", points.len() as u64)?.to_be_bytes());
    b.extend_from_slice(&[0; 2]);
    for e in &packet.entries {
        b.extend_from_slice(&fit::<u16>("recipient", e.recipient.into())?.to_be_bytes());
    }
    for (p, to) in &points {
        b.extend_from_slice(&fit::<u16>("origin", p.origin.into())?.to_be_bytes());
        b.extend_from_slice(&fit::<u32>("epoch", p.epoch)?.to_be_bytes());
        b.extend_from_slice(&(p.timestamp as f32).to_be_bytes());
        b.push(fit::<u8>("hop", p.hop.into())?);
        for v in p.values() {
            b.extend_from_slice(&(*v as f32).to_be_bytes());
        }
        let mut mask = vec![0u8; mask_bytes(r)];
        for &i in to {
            mask[i / 8] |= 1 << (i % 8);
        }
        b.extend_from_slice(&mask);
    }
    debug_assert_eq!(b.len(), len);
    Ok(b)
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        if self.0.len() < N {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.0.split_at(N);
        self.0 = tail;
        Ok(head.try_into().expect("length checked"))
    }

    fn take_vec(&mut self, n: usize) -> Result<Vec<u8>, WireError> {
        if self.0.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head.to_vec())
    }
}

/// Inverse of [`encode`]. Timestamps and features come back as the nearest
/// `f32` values; each entry lists its points in on-air order.
pub fn decode(bytes: &[u8]) -> Result<Packet, WireError> {
    let mut r = Reader(bytes);
    if &r.take::<2>()? != MAGIC {
        return Err(WireError::BadHeader("magic"));
    }
    if r.take::<1>()?[0] != VERSION {
        return Err(WireError::BadHeader("version"));
    }
    let dim = r.take::<1>()?[0] as usize;
    let sender = u16::from_be_bytes(r.take()?);
    let recipients = u16::from_be_bytes(r.take()?) as usize;
    let payload = u32::from_be_bytes(r.take()?) as usize;
    let count = u16::from_be_bytes(r.take()?);
    r.take::<2>()?;
    if r.0.len() != payload {
        return Err(WireError::BadHeader("payload length"));
    }
    let mut out = Packet {
        sender: sender.into(),
        entries: Vec::with_capacity(recipients),
    };
    for _ in 0..recipients {
        out.entries.push(PacketEntry {
            recipient: u16::from_be_bytes(r.take()?).into(),
            points: Vec::new(),
        });
    }
    for _ in 0..count {
        let origin = u16::from_be_bytes(r.take()?);
        let epoch = u32::from_be_bytes(r.take()?);
        let ts = f32::from_be_bytes(r.take()?);
        let hop = r.take::<1>()?[0];
        let mut vals = Vec::with_capacity(dim);
        for _ in 0..dim {
            vals.push(f64::from(f32::from_be_bytes(r.take()?)));
        }
        let p = DataPoint::new(origin.into(), epoch.into(), f64::from(ts), vals)
            .map_err(|e| WireError::BadPoint(e.to_string()))?
            .with_hop(hop.into());
        let mask = r.take_vec(mask_bytes(recipients))?;
        for (i, e) in out.entries.iter_mut().enumerate() {
            if mask[i / 8] & (1 << (i % 8)) != 0 {
                e.points.push(p.clone());
            }
        }
    }
    if !r.0.is_empty() {
        return Err(WireError::BadHeader("trailing bytes"));
    }
    Ok(out)
}
