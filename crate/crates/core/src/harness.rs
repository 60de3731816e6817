//! Experiment orchestration: full generator -> sender -> channel ->
//! receiver -> warden runs, and the reference figures each variant is
//! measured against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::SharedSecret;
use crate::receiver::{Receiver, RecoveryReport, RecoveryStatus};
use crate::sender::{duplicate_flags, session_capacity, Sender, VariantConfig};
use crate::sim::{generate_call, CallProfile};
use crate::warden::{fingerprint, FlowStats};
use crate::{Error, Result};

/// Payload-content sampling protocol: packets taken per connection.
pub const KS_PACKETS_PER_CONNECTION: usize = 1000;

/// One benchmarked variant: its selection config, the loss level the
/// overt endpoint compensates for, and the reference figures.
#[derive(Debug, Clone, Copy)]
pub struct VariantBench {
    pub label: &'static str,
    pub config: VariantConfig,
    /// Loss level driving the generator's compensation and duplication.
    pub observed_loss: f64,
    pub expected_bandwidth_kbps: f64,
    /// Relative tolerance on the mean bandwidth.
    pub bandwidth_tolerance: f64,
    pub expected_rate_pps: f64,
    pub rate_tolerance_pps: f64,
    pub expected_dup_percent: f64,
    pub dup_tolerance_pp: f64,
}

/// The four benchmarked variants with their reference figures.
pub fn variant_benches() -> Vec<VariantBench> {
    vec![
        VariantBench {
            label: "ysv1",
            config: VariantConfig::ysv1(),
            observed_loss: 0.45,
            expected_bandwidth_kbps: 80.5,
            bandwidth_tolerance: 0.10,
            expected_rate_pps: 30.13,
            rate_tolerance_pps: 1.0,
            expected_dup_percent: 24.04,
            dup_tolerance_pp: 3.0,
        },
        VariantBench {
            label: "ysv2",
            config: VariantConfig::ysv2(),
            observed_loss: 0.0,
            expected_bandwidth_kbps: 0.7,
            bandwidth_tolerance: 0.25,
            expected_rate_pps: 15.4,
            rate_tolerance_pps: 0.5,
            expected_dup_percent: 0.77,
            dup_tolerance_pp: 0.3,
        },
        VariantBench {
            label: "ysv3_1",
            config: VariantConfig::ysv3(0.005).expect("valid preset"),
            observed_loss: 0.005,
            expected_bandwidth_kbps: 0.45,
            bandwidth_tolerance: 0.25,
            expected_rate_pps: 15.4,
            rate_tolerance_pps: 0.5,
            expected_dup_percent: 0.78,
            dup_tolerance_pp: 0.3,
        },
        VariantBench {
            label: "ysv3_2",
            config: VariantConfig::ysv3(0.01).expect("valid preset"),
            observed_loss: 0.01,
            expected_bandwidth_kbps: 0.93,
            bandwidth_tolerance: 0.15,
            expected_rate_pps: 15.4,
            rate_tolerance_pps: 0.5,
            expected_dup_percent: 0.83,
            dup_tolerance_pp: 0.3,
        },
    ]
}

/// Outcome of one full end-to-end run over a lossless channel.
#[derive(Debug)]
pub struct FullRun {
    pub stego: Vec<crate::SkypePacket>,
    pub secret: Vec<u8>,
    pub report: RecoveryReport,
    pub stego_stats: FlowStats,
    /// Delivered secret bits per second over the call duration.
    pub bandwidth_kbps: f64,
    pub introduced_loss: f64,
    pub recovered_ok: bool,
}

/// Selection seed derived from the run seed so generator and selector
/// draw from independent streams.
pub fn selection_seed(seed: u64) -> u64 {
    seed ^ 0x5e1e_c705_u64
}

/// Deterministic secret payload sized to the session's capacity.
pub fn secret_for_capacity(capacity: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0dde_d5ec);
    let mut data = vec![0u8; capacity];
    rng.fill(data.as_mut_slice());
    data
}

/// Run one variant end to end over a lossless channel: generate the
/// call at the variant's loss point, fill the session to capacity,
/// embed, receive, and fingerprint the stego stream.
pub fn full_run(
    profile: &CallProfile,
    duration_s: f64,
    bench: &VariantBench,
    seed: u64,
    secret_key: &SharedSecret,
) -> Result<FullRun> {
    let clean = generate_call(profile, duration_s, bench.observed_loss, seed, 1)?;
    let dup_flags = duplicate_flags(&clean);
    let sel_seed = selection_seed(seed);
    let capacity = session_capacity(&clean, &dup_flags, bench.config, sel_seed);
    if capacity == 0 {
        return Err(Error::InsufficientData(
            "no carrier capacity in the generated call".into(),
        ));
    }
    let secret = secret_for_capacity(capacity, seed);

    let mut sender = Sender::new(bench.config, secret_key.clone(), &secret, sel_seed)?;
    let mut stego = Vec::with_capacity(clean.len());
    for (pkt, &dup) in clean.iter().zip(&dup_flags) {
        stego.push(sender.step(pkt.clone(), dup)?);
    }
    if !sender.finished() {
        return Err(Error::CapacityExceeded {
            secret: secret.len(),
            capacity,
        });
    }

    let mut receiver = Receiver::new(secret_key.clone());
    for pkt in &stego {
        receiver.step(pkt);
    }
    let report = receiver.reassemble();
    let recovered_ok = report.status == RecoveryStatus::Complete && report.recovered == secret;
    let bandwidth_kbps = 8.0 * report.recovered.len() as f64 / duration_s / 1000.0;
    let introduced_loss = sender.introduced_loss_fraction();
    let stego_stats = fingerprint(&stego)?;
    Ok(FullRun {
        stego,
        secret,
        report,
        stego_stats,
        bandwidth_kbps,
        introduced_loss,
        recovered_ok,
    })
}

/// Fingerprints and pooled payload sample of clean reference calls.
pub fn clean_baseline(
    profile: &CallProfile,
    duration_s: f64,
    seeds: &[u64],
) -> Result<(FlowStats, Vec<u8>)> {
    let mut stats = Vec::with_capacity(seeds.len());
    let mut pooled = Vec::new();
    for &seed in seeds {
        let call = generate_call(profile, duration_s, 0.0, seed, 1)?;
        stats.push(fingerprint(&call)?);
        pooled.extend(crate::warden::payload_sample(&call, KS_PACKETS_PER_CONNECTION));
    }
    Ok((crate::warden::aggregate_baseline(&stats)?, pooled))
}
