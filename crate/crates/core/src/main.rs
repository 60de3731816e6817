//! Command-line front end: generate / embed / extract / analyze /
//! reproduce. All reports are line-delimited `key=value` text.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use skystego::capture::{read_capture, write_capture};
use skystego::crypto::derive_key;
use skystego::harness::{
    clean_baseline, full_run, selection_seed, variant_benches, KS_PACKETS_PER_CONNECTION,
};
use skystego::receiver::Receiver;
use skystego::sender::{duplicate_flags, session_capacity, Sender, VariantConfig};
use skystego::sim::{apply_channel, generate_call, CallProfile, ChannelConfig};
use skystego::warden::{fingerprint, ks_two_sample, payload_sample, verdict, Verdict};
use skystego::{Error, RecoveryStatus};

#[derive(Parser)]
#[command(name = "skystego", version, about = "Packet-loss covert channel toolkit for Skype-style video traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Ysv1,
    Ysv2,
    Ysv3,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Table2,
    Table3,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic videoconference capture.
    Generate {
        /// Call duration in seconds (60..=600).
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Loss level the generated endpoint compensates for.
        #[arg(long, default_value_t = 0.0)]
        observed_loss: f64,
        /// Plain-text key=value profile; defaults are built in.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hide a secret file in the video packets of a capture.
    Embed {
        /// Input capture.
        input: PathBuf,
        /// File with the secret message.
        #[arg(long)]
        secret: PathBuf,
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Target fraction of converted video packets (ysv3 only).
        #[arg(long, default_value_t = 0.01)]
        loss_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = "SKYSTEGO_PASSWORD")]
        password: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a secret message from a capture.
    Extract {
        /// Input capture (stego traffic).
        input: PathBuf,
        #[arg(long, env = "SKYSTEGO_PASSWORD")]
        password: String,
        /// Pass the capture through a lossy channel first.
        #[arg(long)]
        channel_loss: Option<f64>,
        /// Channel seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to write the recovered bytes.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fingerprint a capture and compare it against a clean baseline.
    Analyze {
        input: PathBuf,
        /// Clean baseline captures; without any, an internal seeded
        /// baseline of 10 clean calls is generated.
        #[arg(long)]
        baseline: Vec<PathBuf>,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Re-run the benchmark experiments and print measured vs reference
    /// values with a pass/fail per tolerance.
    Reproduce {
        #[arg(long, value_enum)]
        table: TableArg,
        /// Comma-separated seeds, one full run each.
        #[arg(long, default_value = "1,2,3,4,5,6,7,8,9,10")]
        seeds: String,
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
    },
}

fn load_profile(path: &Option<PathBuf>) -> Result<CallProfile, Error> {
    match path {
        Some(p) => CallProfile::parse(&std::fs::read_to_string(p)?),
        None => Ok(CallProfile::default()),
    }
}

fn variant_config(variant: VariantArg, loss_fraction: f64) -> Result<VariantConfig, Error> {
    match variant {
        VariantArg::Ysv1 => Ok(VariantConfig::ysv1()),
        VariantArg::Ysv2 => Ok(VariantConfig::ysv2()),
        VariantArg::Ysv3 => VariantConfig::ysv3(loss_fraction),
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed '{p}'")))
        })
        .collect()
}

fn cmd_generate(
    duration: f64,
    seed: u64,
    observed_loss: f64,
    profile: &Option<PathBuf>,
    out: &PathBuf,
) -> Result<(), Error> {
    let profile = load_profile(profile)?;
    let call = generate_call(&profile, duration, observed_loss, seed, 1)?;
    write_capture(out, &call)?;
    let stats = fingerprint(&call)?;
    println!("capture={}", out.display());
    println!("packets={}", call.len());
    println!("video_rate_pps={:.2}", stats.video_rate_mean);
    println!("video_rate_std={:.2}", stats.video_rate_std);
    println!("mean_video_size={:.1}", stats.mean_video_size);
    println!("dup_percent={:.2}", 100.0 * stats.dup_fraction);
    Ok(())
}

fn cmd_embed(
    input: &PathBuf,
    secret_path: &PathBuf,
    variant: VariantArg,
    loss_fraction: f64,
    seed: u64,
    password: &str,
    out: &PathBuf,
) -> Result<(), Error> {
    let cfg = variant_config(variant, loss_fraction)?;
    let key = derive_key(password.as_bytes())?;
    let packets = read_capture(input)?;
    let secret = std::fs::read(secret_path)?;
    let dup_flags = duplicate_flags(&packets);
    let sel_seed = selection_seed(seed);
    let capacity = session_capacity(&packets, &dup_flags, cfg, sel_seed);
    if secret.len() > capacity {
        return Err(Error::CapacityExceeded {
            secret: secret.len(),
            capacity,
        });
    }
    let mut sender = Sender::new(cfg, key, &secret, sel_seed)?;
    let mut stego = Vec::with_capacity(packets.len());
    for (pkt, &dup) in packets.iter().zip(&dup_flags) {
        stego.push(sender.step(pkt.clone(), dup)?);
    }
    if !sender.finished() {
        return Err(Error::CapacityExceeded {
            secret: secret.len(),
            capacity,
        });
    }
    write_capture(out, &stego)?;
    println!("capture={}", out.display());
    println!("variant={}", cfg.variant);
    println!("session_capacity={capacity}");
    println!("carriers_used={}", sender.carriers_used());
    println!("bytes_embedded={}", sender.data_bytes_embedded());
    println!(
        "introduced_loss_fraction={:.4}",
        sender.introduced_loss_fraction()
    );
    Ok(())
}

fn cmd_extract(
    input: &PathBuf,
    password: &str,
    channel_loss: Option<f64>,
    seed: u64,
    out: &PathBuf,
) -> Result<(), Error> {
    let key = derive_key(password.as_bytes())?;
    let mut packets = read_capture(input)?;
    if let Some(loss) = channel_loss {
        let channel = ChannelConfig::bernoulli(loss, seed)?;
        let (delivered, dropped) = apply_channel(&packets, &channel);
        packets = delivered;
        println!("channel_dropped={}", dropped.len());
    }
    let mut receiver = Receiver::new(key);
    for pkt in &packets {
        receiver.step(pkt);
    }
    let report = receiver.reassemble();
    std::fs::write(out, &report.recovered)?;
    println!("recovered={}", out.display());
    println!("recovered_bytes={}", report.recovered.len());
    println!(
        "status={}",
        match report.status {
            RecoveryStatus::NoSession => "no-session",
            RecoveryStatus::Partial => "partial",
            RecoveryStatus::Complete => "complete",
        }
    );
    println!("delivered_fragments={}", report.delivered_fragments);
    println!(
        "missing_smis={}",
        report
            .missing_smis
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    println!("duration_s={:.1}", report.duration_s);
    println!("goodput_kbps={:.3}", report.goodput_kbps);
    Ok(())
}

fn cmd_analyze(
    input: &PathBuf,
    baseline_paths: &[PathBuf],
    profile: &Option<PathBuf>,
) -> Result<(), Error> {
    let packets = read_capture(input)?;
    let stats = fingerprint(&packets)?;
    let (baseline, baseline_sample) = if baseline_paths.is_empty() {
        let profile = load_profile(profile)?;
        let seeds: Vec<u64> = (1000..1010).collect();
        clean_baseline(&profile, 300.0, &seeds)?
    } else {
        let mut all = Vec::new();
        let mut pooled = Vec::new();
        for path in baseline_paths {
            let call = read_capture(path)?;
            all.push(fingerprint(&call)?);
            pooled.extend(payload_sample(&call, KS_PACKETS_PER_CONNECTION));
        }
        (skystego::warden::aggregate_baseline(&all)?, pooled)
    };
    let sample = payload_sample(&packets, KS_PACKETS_PER_CONNECTION);
    let ks = ks_two_sample(&sample, &baseline_sample)?;
    let v = verdict(&stats, &baseline, &ks);
    println!("flow=1");
    println!("video_rate_pps={:.2}", stats.video_rate_mean);
    println!("mean_video_size={:.1}", stats.mean_video_size);
    println!("dup_percent={:.2}", 100.0 * stats.dup_fraction);
    println!("baseline_rate_pps={:.2}", baseline.video_rate_mean);
    println!("baseline_dup_percent={:.2}", 100.0 * baseline.dup_fraction);
    println!("ks_d={:.5}", ks.statistic_d);
    println!("ks_p={:.4}", ks.p_value);
    match v {
        Verdict::Clean => println!("verdict=clean"),
        Verdict::Suspicious(reasons) => {
            println!("verdict=suspicious");
            println!(
                "reasons={}",
                reasons
                    .iter()
                    .map(|r| r.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            );
        }
    }
    Ok(())
}

fn cmd_reproduce(table: TableArg, seeds: &[u64], duration: f64) -> Result<(), Error> {
    let profile = CallProfile::default();
    let key = derive_key(b"reproduce-password")?;
    let benches = variant_benches();
    let mut all_pass = true;
    for bench in &benches {
        let mut bandwidths = Vec::new();
        let mut rates = Vec::new();
        let mut dups = Vec::new();
        for &seed in seeds {
            let run = full_run(&profile, duration, bench, seed, &key)?;
            if !run.recovered_ok {
                return Err(Error::Config(format!(
                    "end-to-end recovery failed for {} seed {seed}",
                    bench.label
                )));
            }
            bandwidths.push(run.bandwidth_kbps);
            rates.push(run.stego_stats.video_rate_mean);
            dups.push(100.0 * run.stego_stats.dup_fraction);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        match table {
            TableArg::Table2 => {
                let bw = mean(&bandwidths);
                let lo = bench.expected_bandwidth_kbps * (1.0 - bench.bandwidth_tolerance);
                let hi = bench.expected_bandwidth_kbps * (1.0 + bench.bandwidth_tolerance);
                let pass = (lo..=hi).contains(&bw);
                all_pass &= pass;
                println!(
                    "variant={} bandwidth_kbps={:.3} reference={} tolerance={:.0}% pass={}",
                    bench.label,
                    bw,
                    bench.expected_bandwidth_kbps,
                    100.0 * bench.bandwidth_tolerance,
                    pass
                );
            }
            TableArg::Table3 => {
                let rate = mean(&rates);
                let dup = mean(&dups);
                let rate_pass =
                    (rate - bench.expected_rate_pps).abs() <= bench.rate_tolerance_pps;
                let dup_pass =
                    (dup - bench.expected_dup_percent).abs() <= bench.dup_tolerance_pp;
                all_pass &= rate_pass && dup_pass;
                println!(
                    "variant={} rate_pps={:.2} reference_rate={} rate_pass={} dup_percent={:.2} reference_dup={} dup_pass={}",
                    bench.label,
                    rate,
                    bench.expected_rate_pps,
                    rate_pass,
                    dup,
                    bench.expected_dup_percent,
                    dup_pass
                );
            }
        }
    }
    println!("all_pass={all_pass}");
    if all_pass {
        Ok(())
    } else {
        Err(Error::Config("reproduction outside tolerances".into()))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Generate {
            duration,
            seed,
            observed_loss,
            profile,
            out,
        } => cmd_generate(*duration, *seed, *observed_loss, profile, out),
        Command::Embed {
            input,
            secret,
            variant,
            loss_fraction,
            seed,
            password,
            out,
        } => cmd_embed(input, secret, *variant, *loss_fraction, *seed, password, out),
        Command::Extract {
            input,
            password,
            channel_loss,
            seed,
            out,
        } => cmd_extract(input, password, *channel_loss, *seed, out),
        Command::Analyze {
            input,
            baseline,
            profile,
        } => cmd_analyze(input, baseline, profile),
        Command::Reproduce {
            table,
            seeds,
            duration,
        } => cmd_reproduce(*table, &parse_seeds(seeds)?, *duration),
    }
}

/// Exit codes by error category: 2 configuration, 3 I/O, 4 capacity,
/// 5 capture format, 6 insufficient data, 1 anything else.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::EmptyPassword => 2,
        Error::Io(_) => 3,
        Error::CapacityExceeded { .. } => 4,
        Error::Capture(_) => 5,
        Error::InsufficientData(_) => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
