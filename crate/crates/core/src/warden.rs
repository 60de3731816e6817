//! Detection side: per-flow traffic fingerprints, comparison against a
//! clean baseline, and the two-sample Kolmogorov-Smirnov payload test.

use crate::packet::{classify_packet, detect_duplicates, SkypePacket, StreamClass};
use crate::{Error, Result};

/// Per-flow fingerprint over the video stream.
#[derive(Debug, Clone, Copy)]
pub struct FlowStats {
    /// Mean video packet rate over 1-second buckets.
    pub video_rate_mean: f64,
    /// Standard deviation of the bucket rates.
    pub video_rate_std: f64,
    pub mean_video_size: f64,
    /// Probable-duplicate pairs as a fraction of video packets.
    pub dup_fraction: f64,
    /// Video packets observed.
    pub packet_count: usize,
}

/// Fingerprint a flow: rate statistics over 1-second buckets, mean video
/// size and duplicate fraction. Needs at least 60 s of traffic.
pub fn fingerprint(flow: &[SkypePacket]) -> Result<FlowStats> {
    let (first, last) = match (flow.first(), flow.last()) {
        (Some(f), Some(l)) => (f.timestamp_us, l.timestamp_us),
        _ => return Err(Error::InsufficientData("empty flow".into())),
    };
    let span_s = (last.saturating_sub(first)) as f64 / 1e6;
    if span_s < 60.0 {
        return Err(Error::InsufficientData(format!(
            "flow spans {span_s:.1} s, need at least 60"
        )));
    }
    let buckets = span_s.floor() as usize;
    let mut counts = vec![0usize; buckets];
    let mut video_count = 0usize;
    let mut size_sum = 0f64;
    for pkt in flow {
        if classify_packet(pkt) != StreamClass::Video {
            continue;
        }
        video_count += 1;
        size_sum += pkt.total_size() as f64;
        let b = ((pkt.timestamp_us - first) / 1_000_000) as usize;
        if b < buckets {
            counts[b] += 1;
        }
    }
    if video_count == 0 {
        return Err(Error::InsufficientData("no video packets in flow".into()));
    }
    let n = buckets as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let var = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let dup_pairs = detect_duplicates(flow).len();
    Ok(FlowStats {
        video_rate_mean: mean,
        video_rate_std: var.sqrt(),
        mean_video_size: size_sum / video_count as f64,
        dup_fraction: dup_pairs as f64 / video_count as f64,
        packet_count: video_count,
    })
}

/// Combine per-call fingerprints of clean traffic into a baseline.
pub fn aggregate_baseline(stats: &[FlowStats]) -> Result<FlowStats> {
    if stats.is_empty() {
        return Err(Error::InsufficientData("no baseline flows".into()));
    }
    let n = stats.len() as f64;
    Ok(FlowStats {
        video_rate_mean: stats.iter().map(|s| s.video_rate_mean).sum::<f64>() / n,
        video_rate_std: stats.iter().map(|s| s.video_rate_std).sum::<f64>() / n,
        mean_video_size: stats.iter().map(|s| s.mean_video_size).sum::<f64>() / n,
        dup_fraction: stats.iter().map(|s| s.dup_fraction).sum::<f64>() / n,
        packet_count: stats.iter().map(|s| s.packet_count).sum(),
    })
}

/// Pool the payload bytes of the first `max_packets` video packets of a
/// flow, the sampling unit of the payload-content test.
pub fn payload_sample(flow: &[SkypePacket], max_packets: usize) -> Vec<u8> {
    let mut out = Vec::new();
    let mut taken = 0;
    for pkt in flow {
        if classify_packet(pkt) != StreamClass::Video {
            continue;
        }
        out.extend_from_slice(&pkt.payload);
        taken += 1;
        if taken == max_packets {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    /// Supremum distance between the two empirical CDFs.
    pub statistic_d: f64,
    /// Asymptotic p-value from the Kolmogorov distribution.
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Survival function of the Kolmogorov distribution,
/// Q(x) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2).
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100u32 {
        let term = (-2.0 * (k as f64).powi(2) * x * x).exp();
        if k % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample K-S test over byte-value multisets. The statistic is the
/// exact empirical-CDF supremum distance; the p-value uses the
/// asymptotic Kolmogorov distribution with effective n = n1*n2/(n1+n2).
pub fn ks_two_sample(sample_a: &[u8], sample_b: &[u8]) -> Result<KsResult> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::InsufficientData("empty K-S sample".into()));
    }
    let mut hist_a = [0u64; 256];
    let mut hist_b = [0u64; 256];
    for &b in sample_a {
        hist_a[b as usize] += 1;
    }
    for &b in sample_b {
        hist_b[b as usize] += 1;
    }
    let (n1, n2) = (sample_a.len(), sample_b.len());
    let mut cum_a = 0u64;
    let mut cum_b = 0u64;
    let mut d = 0f64;
    for v in 0..256 {
        cum_a += hist_a[v];
        cum_b += hist_b[v];
        let diff = (cum_a as f64 / n1 as f64 - cum_b as f64 / n2 as f64).abs();
        if diff > d {
            d = diff;
        }
    }
    let ne = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    Ok(KsResult {
        statistic_d: d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
        n1,
        n2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    ElevatedRate,
    ElevatedDuplicates,
    PayloadDistribution,
}

impl std::fmt::Display for Reason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reason::ElevatedRate => f.write_str("rate"),
            Reason::ElevatedDuplicates => f.write_str("duplicates"),
            Reason::PayloadDistribution => f.write_str("payload-distribution"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Clean,
    Suspicious(Vec<Reason>),
}

/// Compare a flow against the clean baseline. Suspicious when the rate
/// exceeds baseline mean + 3 sigma, the duplicate fraction exceeds 3x
/// baseline, or the payload K-S p-value drops below 0.01.
pub fn verdict(stats: &FlowStats, baseline: &FlowStats, ks: &KsResult) -> Verdict {
    let mut reasons = Vec::new();
    if stats.video_rate_mean > baseline.video_rate_mean + 3.0 * baseline.video_rate_std {
        reasons.push(Reason::ElevatedRate);
    }
    if stats.dup_fraction > 3.0 * baseline.dup_fraction {
        reasons.push(Reason::ElevatedDuplicates);
    }
    if ks.p_value < 0.01 {
        reasons.push(Reason::PayloadDistribution);
    }
    if reasons.is_empty() {
        Verdict::Clean
    } else {
        Verdict::Suspicious(reasons)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_samples_d_zero_p_one() {
        let s: Vec<u8> = (0..=255).collect();
        let r = ks_two_sample(&s, &s).unwrap();
        assert_eq!(r.statistic_d, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_supports_d_one() {
        let a = vec![0x00u8; 500];
        let b = vec![0xffu8; 500];
        let r = ks_two_sample(&a, &b).unwrap();
        assert_eq!(r.statistic_d, 1.0);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn symmetric_in_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<u8> = (0..5000).map(|_| rng.gen()).collect();
        let b: Vec<u8> = (0..3000).map(|_| rng.gen_range(0..200)).collect();
        let r1 = ks_two_sample(&a, &b).unwrap();
        let r2 = ks_two_sample(&b, &a).unwrap();
        assert_eq!(r1.statistic_d, r2.statistic_d);
        assert_eq!(r1.p_value, r2.p_value);
    }

    #[test]
    fn statistic_matches_brute_force_oracle() {
        // Double-loop supremum over every evaluation point.
        fn brute_force_d(a: &[u8], b: &[u8]) -> f64 {
            let mut d: f64 = 0.0;
            for t in 0..=255u16 {
                let fa = a.iter().filter(|&&x| (x as u16) <= t).count() as f64 / a.len() as f64;
                let fb = b.iter().filter(|&&x| (x as u16) <= t).count() as f64 / b.len() as f64;
                d = d.max((fa - fb).abs());
            }
            d
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [1usize, 7, 50, 100] {
            let a: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            let b: Vec<u8> = (0..n).map(|_| rng.gen_range(0..64)).collect();
            let r = ks_two_sample(&a, &b).unwrap();
            assert!((r.statistic_d - brute_force_d(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_byte_samples_give_moderate_p() {
        // Two independent uniform samples the size of 1000 packets'
        // payloads: p should behave like a uniform draw; its mean over
        // 10 trials sits well inside (0.3, 0.7).
        let mut mean_p = 0.0;
        for trial in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let a: Vec<u8> = (0..738_000).map(|_| rng.gen()).collect();
            let b: Vec<u8> = (0..738_000).map(|_| rng.gen()).collect();
            mean_p += ks_two_sample(&a, &b).unwrap().p_value;
        }
        mean_p /= 10.0;
        assert!((0.3..=0.7).contains(&mean_p), "mean p {mean_p}");
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(ks_two_sample(&[], &[1]).is_err());
    }

    #[test]
    fn verdict_triggers_and_monotonicity() {
        let baseline = FlowStats {
            video_rate_mean: 15.24,
            video_rate_std: 0.28,
            mean_video_size: 741.0,
            dup_fraction: 0.008,
            packet_count: 4500,
        };
        let ks_ok = KsResult {
            statistic_d: 0.001,
            p_value: 0.5,
            n1: 1000,
            n2: 1000,
        };
        let clean = baseline;
        assert_eq!(verdict(&clean, &baseline, &ks_ok), Verdict::Clean);

        let mut stats = baseline;
        stats.video_rate_mean = 30.1;
        stats.dup_fraction = 0.24;
        match verdict(&stats, &baseline, &ks_ok) {
            Verdict::Suspicious(reasons) => {
                assert!(reasons.contains(&Reason::ElevatedRate));
                assert!(reasons.contains(&Reason::ElevatedDuplicates));
            }
            Verdict::Clean => panic!("ysv1-like stats must be flagged"),
        }

        // monotone: raising dup_fraction never flips Suspicious -> Clean
        let mut prev_suspicious = false;
        for dup in [0.0, 0.01, 0.02, 0.03, 0.1, 0.3] {
            let mut s = baseline;
            s.dup_fraction = dup;
            let flagged = verdict(&s, &baseline, &ks_ok) != Verdict::Clean;
            assert!(!prev_suspicious || flagged);
            prev_suspicious = flagged;
        }
    }

    #[test]
    fn fingerprint_requires_a_minute() {
        use crate::packet::Direction;
        let flow: Vec<SkypePacket> = (0..100u64)
            .map(|i| SkypePacket {
                timestamp_us: i * 66_000,
                id: 0,
                fun: 0x0d,
                payload: vec![0; 738],
                flow_id: 1,
                direction: Direction::ToCallee,
            })
            .collect();
        assert!(matches!(
            fingerprint(&flow),
            Err(Error::InsufficientData(_))
        ));
    }
}
