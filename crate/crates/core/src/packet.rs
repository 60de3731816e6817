//! Wire-level Skype message representation, stream classification,
//! duplicate detection and UDP checksum maintenance.
//!
//! A UDP-borne Skype message starts with an unencrypted 3-byte Start of
//! Message (SoM) header: a 2-byte ID and a 1-byte Fun type. Everything
//! after the SoM is opaque payload.

use crate::{Error, Result};

/// Length of the SoM header (2-byte ID + 1-byte Fun).
pub const SOM_LEN: usize = 3;

/// Fun value marking a DATA message (voice, video, chat, file fragments).
pub const FUN_DATA: u8 = 0x0d;

/// Fun values used for signalling messages.
pub const FUN_SIGNALLING: [u8; 4] = [0x02, 0x03, 0x07, 0x0f];

/// Total size of a NAT keepalive message.
pub const KEEPALIVE_SIZE: usize = 31;

/// DATA messages up to this total size belong to the audio stream;
/// anything larger is video.
pub const AUDIO_MAX_SIZE: usize = 180;

/// Upper bound on video message size observed in practice.
pub const VIDEO_MAX_SIZE: usize = 1400;

/// Maximum gap between a packet and its replica, in microseconds.
/// Replicas arrive a few milliseconds after the original, far below the
/// nominal 66.6 ms video frame spacing.
pub const DUP_MAX_GAP_US: u64 = 10_000;

/// Maximum size difference between a packet and its replica, in bytes.
pub const DUP_MAX_SIZE_DELTA: i64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToCallee,
    ToCaller,
}

impl Direction {
    pub fn to_byte(self) -> u8 {
        match self {
            Direction::ToCallee => 0,
            Direction::ToCaller => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Direction::ToCallee),
            1 => Ok(Direction::ToCaller),
            other => Err(Error::Capture(format!("unknown direction byte {other}"))),
        }
    }
}

/// One UDP-borne Skype message plus capture metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkypePacket {
    /// Microseconds since capture start.
    pub timestamp_us: u64,
    /// SoM ID field.
    pub id: u16,
    /// SoM Fun field.
    pub fun: u8,
    /// Everything after the 3-byte SoM.
    pub payload: Vec<u8>,
    pub flow_id: u32,
    pub direction: Direction,
}

impl SkypePacket {
    /// Total message size in bytes: 3-byte SoM plus payload.
    pub fn total_size(&self) -> usize {
        SOM_LEN + self.payload.len()
    }

    /// SoM header plus payload as raw bytes (ID big-endian).
    pub fn message_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_size());
        out.extend_from_slice(&self.id.to_be_bytes());
        out.push(self.fun);
        out.extend_from_slice(&self.payload);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamClass {
    Signalling,
    Keepalive,
    Audio,
    Video,
}

/// Classify a message by its Fun byte and total size.
///
/// Non-DATA messages are signalling. DATA messages of exactly 31 bytes
/// are NAT keepalives, up to 180 bytes audio, and anything larger video.
pub fn classify_packet(pkt: &SkypePacket) -> StreamClass {
    if pkt.fun != FUN_DATA {
        return StreamClass::Signalling;
    }
    let size = pkt.total_size();
    if size == KEEPALIVE_SIZE {
        StreamClass::Keepalive
    } else if size <= AUDIO_MAX_SIZE {
        StreamClass::Audio
    } else {
        StreamClass::Video
    }
}

/// A probable duplicate: an (original, replica) pair of video packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DuplicatePair {
    /// Index of the original within the flow's packet sequence.
    pub first_index: usize,
    /// Index of the replica within the flow's packet sequence.
    pub second_index: usize,
    /// Inter-arrival time, microseconds.
    pub delta_t_us: u64,
    /// Replica size minus original size, bytes.
    pub delta_size: i64,
}

/// Find probable duplicates among the video packets of a flow.
///
/// Adjacent video packets closer than [`DUP_MAX_GAP_US`] with a size
/// difference of at most [`DUP_MAX_SIZE_DELTA`] bytes form a pair.
/// Pairing is greedy left-to-right and disjoint: a packet belongs to at
/// most one pair. The flow must be sorted by timestamp.
pub fn detect_duplicates(flow: &[SkypePacket]) -> Vec<DuplicatePair> {
    let video: Vec<usize> = flow
        .iter()
        .enumerate()
        .filter(|(_, p)| classify_packet(p) == StreamClass::Video)
        .map(|(i, _)| i)
        .collect();

    let mut pairs = Vec::new();
    let mut i = 0;
    while i + 1 < video.len() {
        let (a, b) = (video[i], video[i + 1]);
        let delta_t = flow[b].timestamp_us.saturating_sub(flow[a].timestamp_us);
        let delta_size = flow[b].total_size() as i64 - flow[a].total_size() as i64;
        if delta_t <= DUP_MAX_GAP_US && delta_size.abs() <= DUP_MAX_SIZE_DELTA {
            pairs.push(DuplicatePair {
                first_index: a,
                second_index: b,
                delta_t_us: delta_t,
                delta_size,
            });
            i += 2;
        } else {
            i += 1;
        }
    }
    pairs
}

/// Standard UDP checksum: ones'-complement of the ones'-complement sum
/// over pseudo-header and datagram. A computed value of 0x0000 is
/// transmitted as 0xFFFF.
pub fn udp_checksum(pseudo_header: &[u8], datagram: &[u8]) -> Result<u16> {
    if datagram.len() < 8 {
        return Err(Error::MalformedDatagram(datagram.len()));
    }
    let mut sum: u32 = 0;
    let mut bytes = pseudo_header.iter().chain(datagram.iter());
    loop {
        let hi = match bytes.next() {
            Some(&b) => b,
            None => break,
        };
        let lo = bytes.next().copied().unwrap_or(0);
        sum += u32::from(u16::from_be_bytes([hi, lo]));
        sum = (sum & 0xffff) + (sum >> 16);
    }
    let csum = !(sum as u16);
    Ok(if csum == 0 { 0xffff } else { csum })
}

/// Synthetic source/destination used when rebuilding a datagram around a
/// captured Skype message. Captures store only the message bytes; the
/// UDP/IP framing is reconstructed deterministically from the flow id.
fn synthetic_endpoints(pkt: &SkypePacket) -> ([u8; 4], [u8; 4], u16, u16) {
    let f = pkt.flow_id.to_be_bytes();
    let src = [10, 0, f[2], f[3]];
    let dst = [10, 1, f[2], f[3]];
    match pkt.direction {
        Direction::ToCallee => (src, dst, 40_000, 40_001),
        Direction::ToCaller => (dst, src, 40_001, 40_000),
    }
}

/// IPv4 pseudo-header for the synthetic datagram of a packet.
pub fn synthetic_pseudo_header(pkt: &SkypePacket, udp_len: u16) -> [u8; 12] {
    let (src, dst, _, _) = synthetic_endpoints(pkt);
    let mut ph = [0u8; 12];
    ph[..4].copy_from_slice(&src);
    ph[4..8].copy_from_slice(&dst);
    ph[9] = 17; // UDP
    ph[10..12].copy_from_slice(&udp_len.to_be_bytes());
    ph
}

/// Rebuild a full UDP datagram (header + SoM + payload) around a packet,
/// with the checksum recomputed over the synthetic framing.
pub fn synthetic_datagram(pkt: &SkypePacket) -> Result<Vec<u8>> {
    let msg = pkt.message_bytes();
    let udp_len = (8 + msg.len()) as u16;
    let (_, _, sport, dport) = synthetic_endpoints(pkt);
    let mut dgram = Vec::with_capacity(udp_len as usize);
    dgram.extend_from_slice(&sport.to_be_bytes());
    dgram.extend_from_slice(&dport.to_be_bytes());
    dgram.extend_from_slice(&udp_len.to_be_bytes());
    dgram.extend_from_slice(&[0, 0]);
    dgram.extend_from_slice(&msg);
    let ph = synthetic_pseudo_header(pkt, udp_len);
    let csum = udp_checksum(&ph, &dgram)?;
    dgram[6..8].copy_from_slice(&csum.to_be_bytes());
    Ok(dgram)
}

/// Verify a datagram's checksum: the ones'-complement sum over
/// pseudo-header and datagram (checksum field included) must be 0xFFFF.
pub fn verify_datagram_checksum(pseudo_header: &[u8], datagram: &[u8]) -> Result<bool> {
    if datagram.len() < 8 {
        return Err(Error::MalformedDatagram(datagram.len()));
    }
    let mut sum: u32 = 0;
    let mut bytes = pseudo_header.iter().chain(datagram.iter());
    loop {
        let hi = match bytes.next() {
            Some(&b) => b,
            None => break,
        };
        let lo = bytes.next().copied().unwrap_or(0);
        sum += u32::from(u16::from_be_bytes([hi, lo]));
        sum = (sum & 0xffff) + (sum >> 16);
    }
    Ok(sum as u16 == 0xffff)
}
