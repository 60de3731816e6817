//! Transmitting side: carrier selection per variant, loss-budget
//! enforcement, START/STOP signalling, fragmentation with SMI,
//! encryption, PID injection into the SoM ID field and checksum repair.
//!
//! Only the SoM ID and the payload of a selected packet change; size,
//! timing and the Fun byte are untouched. The covertness of the whole
//! method rests on exactly that invariance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

use crate::crypto::{compute_pid, encrypt_fragment, SharedSecret};
use crate::packet::{classify_packet, synthetic_datagram, SkypePacket, StreamClass};
use crate::{Error, Result};

/// SMI reserved for the START message.
pub const START_SMI: u16 = 1;
/// First SMI used by data fragments.
pub const FIRST_DATA_SMI: u16 = 2;
/// Big-endian length prefix carried in the first data fragment, so the
/// receiver can tell trailing zero padding from data.
pub const LENGTH_PREFIX_LEN: usize = 4;

/// Number of video-packet decisions the loss budget remembers.
const BUDGET_WINDOW: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Ysv1,
    Ysv2,
    Ysv3,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Ysv1 => f.write_str("ysv1"),
            Variant::Ysv2 => f.write_str("ysv2"),
            Variant::Ysv3 => f.write_str("ysv3"),
        }
    }
}

/// Carrier-selection policy.
///
/// Ysv1 converts a fixed 45% of video packets, Ysv2 only probable
/// duplicates, Ysv3 a small configurable fraction (at most 2%).
#[derive(Debug, Clone, Copy)]
pub struct VariantConfig {
    pub variant: Variant,
    /// Target fraction of video packets to convert. Ignored by Ysv2.
    pub target_fraction: f64,
    /// Forbid selecting two consecutive video packets.
    pub alternation_guard: bool,
}

impl VariantConfig {
    pub fn ysv1() -> Self {
        VariantConfig {
            variant: Variant::Ysv1,
            target_fraction: 0.45,
            alternation_guard: true,
        }
    }

    pub fn ysv2() -> Self {
        VariantConfig {
            variant: Variant::Ysv2,
            target_fraction: 0.0,
            alternation_guard: true,
        }
    }

    pub fn ysv3(target_fraction: f64) -> Result<Self> {
        let cfg = VariantConfig {
            variant: Variant::Ysv3,
            target_fraction,
            alternation_guard: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            Variant::Ysv1 => {
                if (self.target_fraction - 0.45).abs() > 1e-9 {
                    return Err(Error::Config(
                        "ysv1 target fraction is fixed at 0.45".into(),
                    ));
                }
            }
            Variant::Ysv3 => {
                if !(self.target_fraction > 0.0 && self.target_fraction <= 0.02) {
                    return Err(Error::Config(format!(
                        "ysv3 target fraction {} outside (0, 0.02]",
                        self.target_fraction
                    )));
                }
            }
            Variant::Ysv2 => {}
        }
        Ok(())
    }

    /// Ceiling on the introduced-loss fraction enforced by the budget.
    /// Headroom above the target so the budget acts as a rail, not the
    /// regulator; Ysv2 is naturally limited by the duplicate supply.
    fn budget_cap(&self) -> f64 {
        match self.variant {
            Variant::Ysv1 => 0.50,
            Variant::Ysv2 => 1.0,
            Variant::Ysv3 => 3.0 * self.target_fraction,
        }
    }

    /// Per-packet selection probability. With the alternation guard on,
    /// only packets following an unselected one are candidates, so the
    /// raw probability is inflated to t/(1-t) to land on the target.
    fn selection_probability(&self) -> f64 {
        let t = self.target_fraction;
        if self.alternation_guard {
            (t / (1.0 - t)).min(1.0)
        } else {
            t
        }
    }
}

/// A 2-byte SMI plus a plaintext chunk; the unit of embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretFragment {
    pub smi: u16,
    pub chunk: Vec<u8>,
}

impl SecretFragment {
    /// Plaintext exactly as it sits in the carrier payload: SMI || chunk.
    pub fn plaintext(&self) -> Vec<u8> {
        let mut out = self.smi.to_be_bytes().to_vec();
        out.extend_from_slice(&self.chunk);
        out
    }
}

fn check_capacity(capacity: usize) -> Result<()> {
    if capacity < 3 {
        return Err(Error::InvalidCapacity(capacity));
    }
    Ok(())
}

/// START message: SMI 1, chunk all binary ones.
pub fn build_start(capacity: usize) -> Result<SecretFragment> {
    check_capacity(capacity)?;
    Ok(SecretFragment {
        smi: START_SMI,
        chunk: vec![0xff; capacity - 2],
    })
}

/// STOP message: next sequential SMI, chunk all binary zeros.
pub fn build_stop(smi: u16, capacity: usize) -> Result<SecretFragment> {
    check_capacity(capacity)?;
    Ok(SecretFragment {
        smi,
        chunk: vec![0x00; capacity - 2],
    })
}

/// Split secret data into fragments for a uniform carrier payload
/// capacity. A 4-byte big-endian length prefix leads the stream and the
/// final chunk is zero-padded. Empty input yields no data fragments
/// (START and STOP are still exchanged by the sender).
pub fn fragment_secret(data: &[u8], capacity: usize) -> Result<Vec<SecretFragment>> {
    check_capacity(capacity)?;
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let mut stream = (data.len() as u32).to_be_bytes().to_vec();
    stream.extend_from_slice(data);
    let chunk_len = capacity - 2;
    let count = stream.len().div_ceil(chunk_len);
    if count > (u16::MAX as usize) - 2 {
        return Err(Error::Config(format!(
            "secret needs {count} fragments, more than the SMI space allows in one session"
        )));
    }
    let mut fragments = Vec::with_capacity(count);
    for (i, chunk) in stream.chunks(chunk_len).enumerate() {
        let mut padded = chunk.to_vec();
        padded.resize(chunk_len, 0);
        fragments.push(SecretFragment {
            smi: FIRST_DATA_SMI + i as u16,
            chunk: padded,
        });
    }
    Ok(fragments)
}

/// Replace a selected carrier's payload with the encrypted fragment and
/// its SoM ID with the fragment's PID. Size, timestamp and Fun byte are
/// preserved; the UDP checksum is recomputed over the rebuilt datagram.
pub fn embed(pkt: &SkypePacket, frag: &SecretFragment, secret: &SharedSecret) -> Result<SkypePacket> {
    let plain = frag.plaintext();
    if plain.len() != pkt.payload.len() {
        return Err(Error::Framing {
            have: plain.len(),
            need: pkt.payload.len(),
        });
    }
    let payload = encrypt_fragment(&plain, secret, pkt.total_size())?;
    let mut out = pkt.clone();
    out.payload = payload;
    out.id = compute_pid(&plain).0;
    let _datagram = synthetic_datagram(&out)?; // checksum repair
    Ok(out)
}

/// Sliding window over recent video-packet decisions, capping the
/// fraction of introduced losses.
#[derive(Debug, Clone)]
pub struct LossBudget {
    window: VecDeque<bool>,
    used: usize,
    cap: f64,
}

impl LossBudget {
    pub fn new(cap: f64) -> Self {
        LossBudget {
            window: VecDeque::with_capacity(BUDGET_WINDOW),
            used: 0,
            cap,
        }
    }

    pub fn permits(&self) -> bool {
        (self.used as f64) <= self.cap * BUDGET_WINDOW as f64
    }

    pub fn record(&mut self, selected: bool) {
        self.window.push_back(selected);
        if selected {
            self.used += 1;
        }
        if self.window.len() > BUDGET_WINDOW {
            if self.window.pop_front() == Some(true) {
                self.used -= 1;
            }
        }
    }

    pub fn used_fraction(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.used as f64 / self.window.len() as f64
        }
    }
}

/// Carrier selection shared by the sender and the capacity pre-scan.
/// Given identical seeds and packet streams, two selectors consume the
/// RNG identically up to the point one of them is deactivated.
#[derive(Debug, Clone)]
pub struct CarrierSelector {
    cfg: VariantConfig,
    budget: LossBudget,
    prev_video_selected: bool,
    rng: ChaCha8Rng,
    active: bool,
    video_seen: usize,
    selected: usize,
}

impl CarrierSelector {
    pub fn new(cfg: VariantConfig, seed: u64) -> Self {
        CarrierSelector {
            budget: LossBudget::new(cfg.budget_cap()),
            cfg,
            prev_video_selected: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            active: true,
            video_seen: 0,
            selected: 0,
        }
    }

    /// Stop selecting carriers (after STOP has been emitted).
    pub fn deactivate(&mut self) {
        self.active = false;
    }

    /// Decide whether this packet becomes a carrier. Every video packet
    /// counts as one budget decision, selected or not.
    pub fn offer(&mut self, pkt: &SkypePacket, dup_flag: bool) -> bool {
        if classify_packet(pkt) != StreamClass::Video {
            return false;
        }
        self.video_seen += 1;
        let decision = self.decide(dup_flag);
        self.budget.record(decision);
        self.prev_video_selected = decision;
        if decision {
            self.selected += 1;
        }
        decision
    }

    fn decide(&mut self, dup_flag: bool) -> bool {
        if !self.active {
            return false;
        }
        match self.cfg.variant {
            Variant::Ysv2 => dup_flag && self.budget.permits(),
            Variant::Ysv1 | Variant::Ysv3 => {
                if self.cfg.alternation_guard && self.prev_video_selected {
                    return false;
                }
                if !self.budget.permits() {
                    return false;
                }
                self.rng.gen::<f64>() < self.cfg.selection_probability()
            }
        }
    }

    pub fn video_seen(&self) -> usize {
        self.video_seen
    }

    pub fn selected(&self) -> usize {
        self.selected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Started,
    Stopped,
}

/// Transmitter state machine. One per flow; feed every packet of the
/// flow through [`Sender::step`] in timestamp order.
#[derive(Debug)]
pub struct Sender {
    secret: SharedSecret,
    selector: CarrierSelector,
    phase: Phase,
    next_smi: u16,
    queue: Vec<u8>,
    offset: usize,
    fragments_sent: usize,
}

impl Sender {
    /// `data` is the secret message; a 4-byte length prefix is added
    /// internally. `seed` drives the carrier-selection randomness.
    pub fn new(cfg: VariantConfig, secret: SharedSecret, data: &[u8], seed: u64) -> Result<Self> {
        cfg.validate()?;
        let queue = if data.is_empty() {
            Vec::new()
        } else {
            let mut q = (data.len() as u32).to_be_bytes().to_vec();
            q.extend_from_slice(data);
            q
        };
        Ok(Sender {
            secret,
            selector: CarrierSelector::new(cfg, seed),
            phase: Phase::Idle,
            next_smi: FIRST_DATA_SMI,
            queue,
            offset: 0,
            fragments_sent: 0,
        })
    }

    /// Process one packet: emit it unmodified, or converted into a
    /// carrier. The first carrier becomes START; once the queue drains,
    /// the next carrier becomes STOP and selection ceases.
    pub fn step(&mut self, pkt: SkypePacket, dup_flag: bool) -> Result<SkypePacket> {
        if !self.selector.offer(&pkt, dup_flag) {
            return Ok(pkt);
        }
        let capacity = pkt.payload.len();
        let frag = match self.phase {
            Phase::Idle => {
                self.phase = Phase::Started;
                build_start(capacity)?
            }
            Phase::Started => {
                // SMI space exhaustion forces STOP; the rest of the
                // message would need a new session.
                if self.offset < self.queue.len() && self.next_smi < u16::MAX {
                    let take = (capacity - 2).min(self.queue.len() - self.offset);
                    let mut chunk = self.queue[self.offset..self.offset + take].to_vec();
                    chunk.resize(capacity - 2, 0);
                    self.offset += take;
                    let smi = self.next_smi;
                    self.next_smi += 1;
                    SecretFragment { smi, chunk }
                } else {
                    self.phase = Phase::Stopped;
                    self.selector.deactivate();
                    build_stop(self.next_smi, capacity)?
                }
            }
            Phase::Stopped => unreachable!("selector is deactivated after STOP"),
        };
        self.fragments_sent += 1;
        embed(&pkt, &frag, &self.secret)
    }

    /// Whether STOP has been emitted.
    pub fn finished(&self) -> bool {
        self.phase == Phase::Stopped
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn fragments_sent(&self) -> usize {
        self.fragments_sent
    }

    /// Secret bytes embedded so far, excluding the length prefix.
    pub fn data_bytes_embedded(&self) -> usize {
        self.offset.saturating_sub(LENGTH_PREFIX_LEN)
    }

    pub fn carriers_used(&self) -> usize {
        self.selector.selected()
    }

    /// Fraction of video packets converted so far.
    pub fn introduced_loss_fraction(&self) -> f64 {
        if self.selector.video_seen() == 0 {
            0.0
        } else {
            self.selector.selected() as f64 / self.selector.video_seen() as f64
        }
    }
}

/// Maximum secret size (in bytes) a session over these packets can
/// carry, for the given selection config and seed. Runs the same
/// selection the sender would, reserving the first carrier for START
/// and the last for STOP, and accounting for the length prefix.
///
/// `dup_flags[i]` marks packets that are the replica of a duplicate
/// pair, as required by Ysv2.
pub fn session_capacity(packets: &[SkypePacket], dup_flags: &[bool], cfg: VariantConfig, seed: u64) -> usize {
    let mut selector = CarrierSelector::new(cfg, seed);
    let mut carrier_payloads: Vec<usize> = Vec::new();
    for (pkt, &dup) in packets.iter().zip(dup_flags.iter()) {
        if selector.offer(pkt, dup) {
            carrier_payloads.push(pkt.payload.len());
        }
    }
    if carrier_payloads.len() < 3 {
        return 0;
    }
    let data_bytes: usize = carrier_payloads[1..carrier_payloads.len() - 1]
        .iter()
        .map(|len| len - 2)
        .sum();
    data_bytes.saturating_sub(LENGTH_PREFIX_LEN)
}

/// Mark, for every packet of a flow, whether it is the replica half of
/// a probable duplicate pair. Ysv2 consumes the replica so the original
/// content still arrives once.
pub fn duplicate_flags(flow: &[SkypePacket]) -> Vec<bool> {
    let mut flags = vec![false; flow.len()];
    for pair in crate::packet::detect_duplicates(flow) {
        flags[pair.second_index] = true;
    }
    flags
}
