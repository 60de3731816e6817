//! Receiving side: decrypt-then-PID carrier authentication, START/STOP
//! detection, fragment collection keyed by SMI, reassembly and
//! missing-fragment reporting.

use std::collections::BTreeMap;

use crate::crypto::{compute_pid, decrypt_fragment, SharedSecret, MAX_CARRIER_SIZE};
use crate::packet::{classify_packet, SkypePacket, StreamClass};
use crate::sender::{FIRST_DATA_SMI, LENGTH_PREFIX_LEN, START_SMI};

/// Default flow-silence window after which an active session is forced
/// closed, covering a lost STOP.
pub const DEFAULT_SILENCE_TIMEOUT_US: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Listening,
    Active,
    Done,
}

/// What one packet meant to the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    NotCarrier,
    Start,
    Fragment(u16),
    /// A carrier whose SMI was already stored; first write wins.
    DuplicateFragment(u16),
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryStatus {
    /// START never seen.
    NoSession,
    /// Fragments lost, STOP lost, or the length-bearing first fragment
    /// missing.
    Partial,
    Complete,
}

/// Outcome of a session: recovered bytes plus loss accounting.
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub recovered: Vec<u8>,
    pub missing_smis: Vec<u16>,
    pub delivered_fragments: usize,
    pub duration_s: f64,
    pub goodput_kbps: f64,
    pub status: RecoveryStatus,
}

/// Receiver state machine. One per flow; feed packets in timestamp
/// order through [`Receiver::step`], then call [`Receiver::reassemble`].
#[derive(Debug)]
pub struct Receiver {
    secret: SharedSecret,
    phase: Phase,
    fragments: BTreeMap<u16, Vec<u8>>,
    start_seen: bool,
    stop_smi: Option<u16>,
    first_ts: Option<u64>,
    last_ts: Option<u64>,
    silence_timeout_us: u64,
}

impl Receiver {
    pub fn new(secret: SharedSecret) -> Self {
        Receiver {
            secret,
            phase: Phase::Listening,
            fragments: BTreeMap::new(),
            start_seen: false,
            stop_smi: None,
            first_ts: None,
            last_ts: None,
            silence_timeout_us: DEFAULT_SILENCE_TIMEOUT_US,
        }
    }

    pub fn with_silence_timeout(mut self, timeout_us: u64) -> Self {
        self.silence_timeout_us = timeout_us;
        self
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Process one packet of the flow.
    pub fn step(&mut self, pkt: &SkypePacket) -> Event {
        self.first_ts.get_or_insert(pkt.timestamp_us);

        // A lost STOP must not keep the session open forever: a gap in
        // the flow itself (call teardown and restart) closes it.
        if self.phase == Phase::Active {
            if let Some(last) = self.last_ts {
                if pkt.timestamp_us.saturating_sub(last) > self.silence_timeout_us {
                    self.phase = Phase::Done;
                }
            }
        }
        self.last_ts = Some(pkt.timestamp_us);
        if self.phase == Phase::Done {
            return Event::NotCarrier;
        }
        if classify_packet(pkt) != StreamClass::Video || pkt.total_size() > MAX_CARRIER_SIZE {
            return Event::NotCarrier;
        }
        let plain = match decrypt_fragment(&pkt.payload, &self.secret, pkt.total_size()) {
            Ok(p) => p,
            Err(_) => return Event::NotCarrier,
        };
        if compute_pid(&plain).0 != pkt.id {
            return Event::NotCarrier;
        }
        let smi = u16::from_be_bytes([plain[0], plain[1]]);
        let chunk = &plain[2..];

        if smi == START_SMI && chunk.iter().all(|&b| b == 0xff) {
            self.start_seen = true;
            self.phase = Phase::Active;
            return Event::Start;
        }
        if self.phase == Phase::Active
            && self.stop_smi.is_none()
            && chunk.iter().all(|&b| b == 0x00)
        {
            // The session stays open: fragments reordered past STOP are
            // still collected until the flow ends or goes silent.
            self.stop_smi = Some(smi);
            return Event::Stop;
        }
        if self.phase != Phase::Active {
            // PID-matching fragment before START: reported but not
            // stored, fragments only accumulate while active.
            return Event::Fragment(smi);
        }
        if let Some(stop) = self.stop_smi {
            if smi >= stop {
                return Event::Fragment(smi);
            }
        }
        if self.fragments.contains_key(&smi) {
            return Event::DuplicateFragment(smi);
        }
        self.fragments.insert(smi, chunk.to_vec());
        Event::Fragment(smi)
    }

    /// Reassemble whatever arrived. Valid in any phase: calling before
    /// STOP (or after flow end) is the forced finalization path.
    pub fn reassemble(&self) -> RecoveryReport {
        let duration_s = match (self.first_ts, self.last_ts) {
            (Some(a), Some(b)) if b > a => (b - a) as f64 / 1e6,
            _ => 0.0,
        };
        if !self.start_seen {
            return RecoveryReport {
                recovered: Vec::new(),
                missing_smis: Vec::new(),
                delivered_fragments: 0,
                duration_s,
                goodput_kbps: 0.0,
                status: RecoveryStatus::NoSession,
            };
        }
        let last_expected = match self.stop_smi {
            Some(stop) => stop.saturating_sub(1),
            None => self.fragments.keys().next_back().copied().unwrap_or(0),
        };
        let mut missing = Vec::new();
        if last_expected >= FIRST_DATA_SMI {
            for smi in FIRST_DATA_SMI..=last_expected {
                if !self.fragments.contains_key(&smi) {
                    missing.push(smi);
                }
            }
        }

        let mut stream: Vec<u8> = Vec::new();
        for chunk in self.fragments.values() {
            stream.extend_from_slice(chunk);
        }
        let declared_len = if self.fragments.contains_key(&FIRST_DATA_SMI)
            && stream.len() >= LENGTH_PREFIX_LEN
        {
            Some(u32::from_be_bytes(stream[..LENGTH_PREFIX_LEN].try_into().unwrap()) as usize)
        } else {
            None
        };
        let recovered = match declared_len {
            Some(len) => {
                let body = &stream[LENGTH_PREFIX_LEN..];
                body[..len.min(body.len())].to_vec()
            }
            None => stream,
        };
        let complete = self.stop_smi.is_some()
            && missing.is_empty()
            && (last_expected < FIRST_DATA_SMI || declared_len.is_some());
        let goodput_kbps = if duration_s > 0.0 {
            8.0 * recovered.len() as f64 / duration_s / 1000.0
        } else {
            0.0
        };
        RecoveryReport {
            recovered,
            missing_smis: missing,
            delivered_fragments: self.fragments.len(),
            duration_s,
            goodput_kbps,
            status: if complete {
                RecoveryStatus::Complete
            } else {
                RecoveryStatus::Partial
            },
        }
    }
}
