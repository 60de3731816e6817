//! Packet-loss covert channel for Skype-style UDP video traffic.
//!
//! The crate contains the full pipeline: a calibrated videoconference
//! traffic generator ([`sim`]), a steganographic sender that hides
//! encrypted data in the payloads of intentionally "lost" video packets
//! ([`sender`]), the matching receiver ([`receiver`]), and a warden
//! toolkit for detectability analysis ([`warden`]). Captures are
//! persisted in a compact binary format ([`capture`]).

pub mod capture;
pub mod crypto;
pub mod harness;
pub mod packet;
pub mod receiver;
pub mod sender;
pub mod sim;
pub mod warden;

pub use crypto::SharedSecret;
pub use packet::{Direction, SkypePacket, StreamClass};
pub use receiver::{Receiver, RecoveryReport, RecoveryStatus};
pub use sender::{Sender, Variant, VariantConfig};
pub use sim::{CallProfile, ChannelConfig, DropPattern};
pub use warden::{FlowStats, KsResult, Verdict};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("packet size {0} is outside the video carrier range 181..=1400")]
    InvalidCarrier(usize),
    #[error("carrier capacity {0} too small (need 2-byte SMI plus at least 1 data byte)")]
    InvalidCapacity(usize),
    #[error("fragment does not fill carrier payload: have {have} bytes, need {need}")]
    Framing { have: usize, need: usize },
    #[error("datagram of {0} bytes is shorter than the 8-byte UDP header")]
    MalformedDatagram(usize),
    #[error("secret of {secret} bytes exceeds session capacity of {capacity} bytes")]
    CapacityExceeded { secret: usize, capacity: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid capture: {0}")]
    Capture(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
