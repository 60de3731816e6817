//! Synthetic Skype-videoconference traffic calibrated to measured
//! baselines, the loss-compensation and duplication behaviour, and the
//! lossy channel connecting sender and receiver.
//!
//! A clean 5-minute call reproduces the reference fingerprint: video at
//! 15.24 pkt/s, mean video size 741 bytes, about 0.8% probable
//! duplicates, audio at 50 pkt/s and a 31-byte keepalive every 20 s.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::packet::{Direction, SkypePacket};
use crate::{Error, Result};

/// Generator parameters calibrated to a measured Skype video call.
#[derive(Debug, Clone)]
pub struct CallProfile {
    /// Nominal total video packet rate at zero loss.
    pub video_rate_pps: f64,
    pub video_size_mean: f64,
    pub video_size_std: f64,
    pub video_size_min: usize,
    pub video_size_max: usize,
    pub audio_rate_pps: f64,
    pub audio_size_mean: f64,
    pub audio_size_std: f64,
    pub audio_size_max: usize,
    pub keepalive_period_s: f64,
    pub keepalive_size: usize,
    pub baseline_dup_fraction: f64,
    /// Uniform inter-arrival jitter, as a fraction of nominal spacing.
    pub jitter: f64,
    /// (loss, total video pps) knots for the loss-compensation curve.
    pub compensation_knots: Vec<(f64, f64)>,
    /// (loss, duplicate fraction) knots. The value at 0.80 is an
    /// extrapolation beyond the measured range.
    pub dup_knots: Vec<(f64, f64)>,
}

impl Default for CallProfile {
    fn default() -> Self {
        CallProfile {
            video_rate_pps: 15.24,
            video_size_mean: 741.0,
            video_size_std: 19.0,
            video_size_min: 200,
            video_size_max: 1400,
            audio_rate_pps: 50.0,
            audio_size_mean: 100.0,
            audio_size_std: 15.0,
            audio_size_max: 180,
            keepalive_period_s: 20.0,
            keepalive_size: 31,
            baseline_dup_fraction: 0.008,
            jitter: 0.10,
            compensation_knots: vec![
                (0.0, 15.24),
                (0.01, 15.4),
                (0.20, 20.0),
                (0.45, 30.1),
                (0.80, 30.0),
                (1.0, 20.0),
            ],
            dup_knots: vec![(0.0, 0.008), (0.15, 0.03), (0.45, 0.24), (0.80, 0.35)],
        }
    }
}

fn knots_monotone(knots: &[(f64, f64)]) -> bool {
    knots.windows(2).all(|w| w[0].0 < w[1].0)
}

impl CallProfile {
    pub fn validate(&self) -> Result<()> {
        if self.video_rate_pps <= 0.0 || self.audio_rate_pps <= 0.0 {
            return Err(Error::Config("packet rates must be positive".into()));
        }
        if self.video_size_min >= self.video_size_max || self.video_size_min < 181 {
            return Err(Error::Config("video size range must be ordered and > 180".into()));
        }
        if self.audio_size_max > 180 || self.audio_size_max < 4 {
            return Err(Error::Config("audio sizes must stay in (3, 180]".into()));
        }
        if self.compensation_knots.is_empty() || self.dup_knots.is_empty() {
            return Err(Error::Config("curves need at least one knot".into()));
        }
        if !knots_monotone(&self.compensation_knots) || !knots_monotone(&self.dup_knots) {
            return Err(Error::Config("curve knots must be strictly increasing in loss".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config("jitter must be in [0, 0.5)".into()));
        }
        Ok(())
    }

    /// Total video packet rate Skype settles on at a given observed loss.
    /// Piecewise-linear over the calibrated knots, clamped at the ends.
    pub fn compensation_curve(&self, loss: f64) -> f64 {
        interpolate(&self.compensation_knots, loss)
    }

    /// Fraction of video packets that are probable duplicates at a given
    /// observed loss.
    pub fn dup_curve(&self, loss: f64) -> f64 {
        interpolate(&self.dup_knots, loss)
    }

    /// Parse a plain-text `key = value` profile. Unknown keys are
    /// rejected; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut profile = CallProfile::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("profile line {}: missing '='", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::Config(format!("profile line {}: bad {what}", lineno + 1));
            match key {
                "video_rate_pps" => profile.video_rate_pps = value.parse().map_err(|_| bad("number"))?,
                "video_size_mean" => profile.video_size_mean = value.parse().map_err(|_| bad("number"))?,
                "video_size_std" => profile.video_size_std = value.parse().map_err(|_| bad("number"))?,
                "video_size_min" => profile.video_size_min = value.parse().map_err(|_| bad("number"))?,
                "video_size_max" => profile.video_size_max = value.parse().map_err(|_| bad("number"))?,
                "audio_rate_pps" => profile.audio_rate_pps = value.parse().map_err(|_| bad("number"))?,
                "audio_size_mean" => profile.audio_size_mean = value.parse().map_err(|_| bad("number"))?,
                "audio_size_std" => profile.audio_size_std = value.parse().map_err(|_| bad("number"))?,
                "audio_size_max" => profile.audio_size_max = value.parse().map_err(|_| bad("number"))?,
                "keepalive_period_s" => profile.keepalive_period_s = value.parse().map_err(|_| bad("number"))?,
                "keepalive_size" => profile.keepalive_size = value.parse().map_err(|_| bad("number"))?,
                "baseline_dup_fraction" => profile.baseline_dup_fraction = value.parse().map_err(|_| bad("number"))?,
                "jitter" => profile.jitter = value.parse().map_err(|_| bad("number"))?,
                "compensation_knots" => profile.compensation_knots = parse_knots(value).ok_or_else(|| bad("knot list"))?,
                "dup_knots" => profile.dup_knots = parse_knots(value).ok_or_else(|| bad("knot list"))?,
                other => return Err(Error::Config(format!("unknown profile key '{other}'"))),
            }
        }
        profile.validate()?;
        Ok(profile)
    }
}

fn parse_knots(value: &str) -> Option<Vec<(f64, f64)>> {
    let mut knots = Vec::new();
    for part in value.split(',') {
        let (x, y) = part.trim().split_once(':')?;
        knots.push((x.trim().parse().ok()?, y.trim().parse().ok()?));
    }
    Some(knots)
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    if x <= knots[0].0 {
        return knots[0].1;
    }
    if let Some(&(last_x, last_y)) = knots.last() {
        if x >= last_x {
            return last_y;
        }
    }
    for w in knots.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    unreachable!("knots cover the interpolation range");
}

/// How the lossy channel picks victims.
#[derive(Debug, Clone, PartialEq)]
pub enum DropPattern {
    /// Drop each packet independently at `loss_probability`.
    Bernoulli,
    /// Drop exactly these stream indices.
    Deterministic(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct ChannelConfig {
    pub loss_probability: f64,
    pub pattern: DropPattern,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn bernoulli(loss_probability: f64, seed: u64) -> Result<Self> {
        let cfg = ChannelConfig {
            loss_probability,
            pattern: DropPattern::Bernoulli,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn deterministic(indices: Vec<usize>) -> Self {
        ChannelConfig {
            loss_probability: 0.0,
            pattern: DropPattern::Deterministic(indices),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(Error::Config(format!(
                "loss probability {} outside [0, 1)",
                self.loss_probability
            )));
        }
        Ok(())
    }
}

/// Pass a stream through the lossy channel. Returns the delivered
/// packets (order and timestamps preserved) and the dropped indices.
pub fn apply_channel(stream: &[SkypePacket], cfg: &ChannelConfig) -> (Vec<SkypePacket>, Vec<usize>) {
    match &cfg.pattern {
        DropPattern::Bernoulli => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut delivered = Vec::with_capacity(stream.len());
            let mut dropped = Vec::new();
            for (i, pkt) in stream.iter().enumerate() {
                if rng.gen::<f64>() < cfg.loss_probability {
                    dropped.push(i);
                } else {
                    delivered.push(pkt.clone());
                }
            }
            (delivered, dropped)
        }
        DropPattern::Deterministic(indices) => {
            let drop_set: std::collections::HashSet<usize> = indices.iter().copied().collect();
            let delivered = stream
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop_set.contains(i))
                .map(|(_, p)| p.clone())
                .collect();
            let mut dropped: Vec<usize> = drop_set.into_iter().filter(|&i| i < stream.len()).collect();
            dropped.sort_unstable();
            (delivered, dropped)
        }
    }
}

fn sample_truncated_normal(rng: &mut ChaCha8Rng, mean: f64, std: f64, min: f64, max: f64) -> f64 {
    let dist = Normal::new(mean, std).expect("valid normal parameters");
    loop {
        let v = dist.sample(rng);
        if v >= min && v <= max {
            return v;
        }
    }
}

/// Generate one synthetic videoconference flow.
///
/// `observed_loss` is the loss level the generated endpoint believes it
/// is seeing; it drives the compensation and duplication curves. The
/// stream is deterministic in (profile, duration, loss, seed).
pub fn generate_call(
    profile: &CallProfile,
    duration_s: f64,
    observed_loss: f64,
    seed: u64,
    flow_id: u32,
) -> Result<Vec<SkypePacket>> {
    profile.validate()?;
    if !(60.0..=600.0).contains(&duration_s) {
        return Err(Error::Config(format!(
            "call duration {duration_s} s outside the supported 60..=600 s"
        )));
    }
    if !(0.0..1.0).contains(&observed_loss) {
        return Err(Error::Config(format!("observed loss {observed_loss} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration_us = (duration_s * 1e6) as u64;
    let jitter_dist = Uniform::new_inclusive(1.0 - profile.jitter, 1.0 + profile.jitter);
    let mut packets: Vec<SkypePacket> = Vec::new();

    let push = |packets: &mut Vec<SkypePacket>, rng: &mut ChaCha8Rng, ts: u64, fun: u8, total: usize| {
        let mut payload = vec![0u8; total - 3];
        rng.fill(payload.as_mut_slice());
        packets.push(SkypePacket {
            timestamp_us: ts,
            id: rng.gen(),
            fun,
            payload,
            flow_id,
            direction: Direction::ToCallee,
        });
    };

    // A short signalling exchange opens the call.
    for (i, fun) in [0x02u8, 0x03, 0x07, 0x0f].iter().enumerate() {
        let size = rng.gen_range(40..90);
        push(&mut packets, &mut rng, 20_000 * (i as u64 + 1), *fun, size);
    }

    // Video: originals at the compensated rate, replicas a few
    // milliseconds behind at +5 or +6 bytes. The replica fraction of
    // the total equals the duplication curve.
    let total_pps = profile.compensation_curve(observed_loss);
    let dup_fraction = profile.dup_curve(observed_loss);
    let original_pps = total_pps * (1.0 - dup_fraction);
    let dup_prob = dup_fraction / (1.0 - dup_fraction);
    let nominal_ivl = 1e6 / original_pps;
    let mut t = rng.gen_range(0.0..nominal_ivl);
    while (t as u64) < duration_us {
        let ts = t as u64;
        let size = sample_truncated_normal(
            &mut rng,
            profile.video_size_mean,
            profile.video_size_std,
            profile.video_size_min as f64,
            profile.video_size_max as f64,
        )
        .round() as usize;
        push(&mut packets, &mut rng, ts, 0x0d, size);
        if rng.gen::<f64>() < dup_prob {
            // The larger replica carries bookkeeping about the
            // replicated content.
            let delta = if rng.gen::<bool>() { 5 } else { 6 };
            let rep_ts = ts + rng.gen_range(2_000..=5_000);
            let rep_size = (size + delta).min(profile.video_size_max);
            // replica payload repeats the original content plus extras
            let mut payload = packets.last().expect("original just pushed").payload.clone();
            let mut extra = vec![0u8; (rep_size - 3).saturating_sub(payload.len())];
            rng.fill(extra.as_mut_slice());
            payload.extend_from_slice(&extra);
            payload.truncate(rep_size - 3);
            packets.push(SkypePacket {
                timestamp_us: rep_ts,
                id: rng.gen(),
                fun: 0x0d,
                payload,
                flow_id,
                direction: Direction::ToCallee,
            });
        }
        t += nominal_ivl * jitter_dist.sample(&mut rng);
    }

    // Audio at its own cadence.
    let audio_ivl = 1e6 / profile.audio_rate_pps;
    let mut t = rng.gen_range(0.0..audio_ivl);
    while (t as u64) < duration_us {
        let size = sample_truncated_normal(
            &mut rng,
            profile.audio_size_mean,
            profile.audio_size_std,
            20.0,
            profile.audio_size_max as f64,
        )
        .round() as usize;
        push(&mut packets, &mut rng, t as u64, 0x0d, size);
        t += audio_ivl * jitter_dist.sample(&mut rng);
    }

    // NAT keepalives on a fixed period.
    let mut t = (profile.keepalive_period_s * 1e6) as u64;
    while t < duration_us {
        push(&mut packets, &mut rng, t, 0x0d, profile.keepalive_size);
        t += (profile.keepalive_period_s * 1e6) as u64;
    }

    packets.sort_by_key(|p| p.timestamp_us);
    Ok(packets)
}
