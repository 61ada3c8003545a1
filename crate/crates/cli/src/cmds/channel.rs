//! Capacity and transmit latency of a channel.

use anyhow::Result;
use clap::Args as ClapArgs;
use edgeplan_core::channel::{bsc_capacity, effective_rate_bps, transmit_latency, ChannelSpec};

use super::Ctx;

#[derive(ClapArgs)]
pub struct Args {
    /// Channel family.
    #[arg(long, value_parser = ["awgn", "bsc", "fixed"])]
    kind: String,

    /// Bandwidth in Hz (awgn).
    #[arg(long, required_if_eq("kind", "awgn"))]
    bandwidth: Option<f64>,

    /// Signal-to-noise ratio in dB (awgn).
    #[arg(long, required_if_eq("kind", "awgn"), allow_hyphen_values = true)]
    snr_db: Option<f64>,

    /// Crossover probability (bsc).
    #[arg(long, required_if_eq("kind", "bsc"))]
    flip_prob: Option<f64>,

    /// Channel uses per second (bsc).
    #[arg(long, default_value_t = 1.0)]
    symbol_rate: f64,

    /// Link rate in bit/s (fixed).
    #[arg(long, required_if_eq("kind", "fixed"))]
    rate: Option<f64>,

    /// Also print the transmit latency of a payload this large.
    #[arg(long)]
    bits: Option<u64>,
}

pub fn run(_ctx: &Ctx, args: Args) -> Result<()> {
    let spec = match args.kind.as_str() {
        "awgn" => ChannelSpec::Awgn {
            bandwidth_hz: args.bandwidth.expect("clap enforces --bandwidth"),
            snr_db: args.snr_db.expect("clap enforces --snr-db"),
        },
        "bsc" => ChannelSpec::Bsc {
            flip_prob: args.flip_prob.expect("clap enforces --flip-prob"),
            symbol_rate: args.symbol_rate,
        },
        _ => ChannelSpec::FixedRate {
            rate_bps: args.rate.expect("clap enforces --rate"),
        },
    };
    spec.validate()?;

    match spec {
        ChannelSpec::Awgn {
            bandwidth_hz,
            snr_db,
        } => println!("awgn: bandwidth {bandwidth_hz} Hz | snr {snr_db} dB"),
        ChannelSpec::Bsc {
            flip_prob,
            symbol_rate,
        } => {
            println!("bsc: flip probability {flip_prob} | {symbol_rate} uses/s");
            println!("capacity per use: {} bit", bsc_capacity(flip_prob)?);
        }
        ChannelSpec::FixedRate { rate_bps } => println!("fixed: {rate_bps} bit/s"),
    }
    println!("capacity: {} bit/s", effective_rate_bps(&spec)?);
    if let Some(bits) = args.bits {
        println!("latency for {bits} bits: {} s", transmit_latency(bits, &spec)?);
    }
    Ok(())
}
