//! Bandwidth/latency traces.
//!
//! A trace is a step function: the sample with the greatest timestamp not
//! after `t` is in effect at `t`, and the last sample holds forever.
//!
//! On disk a trace is CSV with the header `time_s,bandwidth_bps,latency_s`.
//!
//! Generated traces use a uniform multiplicative fluctuation around the mean
//! bandwidth, `bandwidth_i = mean * (1 + u_i)` with `u_i` uniform in
//! `[-f, f]`. This is a stand-in for real measurements. The generator is
//! xoshiro256++ seeded through SplitMix64 (`seed_from_u64`); each `u_i` takes
//! one 64-bit output `x` and maps it as `f * (2 * (x >> 11) * 2^-53 - 1)`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Name of the generator used by [`gen_trace`], recorded in run metadata.
pub const TRACE_PRNG: &str = "xoshiro256++/splitmix64-seeded/v1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSample {
    #[serde(rename = "time_s")]
    pub time: f64,
    #[serde(rename = "bandwidth_bps")]
    pub bandwidth: f64,
    #[serde(rename = "latency_s")]
    pub latency: f64,
}

impl NetworkSample {
    fn validate(&self) -> Result<()> {
        if !(self.time.is_finite() && self.bandwidth.is_finite() && self.latency.is_finite()) {
            return Err(Error::NonFinite("network sample"));
        }
        if self.time < 0.0 {
            return Err(Error::InvalidTrace(format!("negative timestamp {}", self.time)));
        }
        if self.bandwidth <= 0.0 {
            return Err(Error::InvalidTrace(format!("bandwidth {} must be > 0", self.bandwidth)));
        }
        if self.latency < 0.0 {
            return Err(Error::InvalidTrace(format!("latency {} must be >= 0", self.latency)));
        }
        Ok(())
    }
}

/// Time-ordered, non-empty sequence of samples starting at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTrace {
    samples: Vec<NetworkSample>,
}

impl NetworkTrace {
    pub fn new(samples: Vec<NetworkSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidTrace("trace has no samples".into()))?;
        if first.time != 0.0 {
            return Err(Error::InvalidTrace(format!(
                "first timestamp is {}, expected 0",
                first.time
            )));
        }
        for s in &samples {
            s.validate()?;
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].time <= w[0].time) {
            return Err(Error::InvalidTrace(format!(
                "timestamps not strictly increasing at {} -> {}",
                w[0].time, w[1].time
            )));
        }
        Ok(Self { samples })
    }

    pub fn constant(bandwidth: f64, latency: f64) -> Result<Self> {
        Self::new(vec![NetworkSample {
            time: 0.0,
            bandwidth,
            latency,
        }])
    }

    pub fn samples(&self) -> &[NetworkSample] {
        &self.samples
    }

    /// Sample in effect at time `t` (step hold; last sample beyond the end).
    pub fn sample_at(&self, t: f64) -> NetworkSample {
        let idx = self.samples.partition_point(|s| s.time <= t);
        self.samples[idx.saturating_sub(1)]
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time_s", "bandwidth_bps", "latency_s"] {
            return Err(Error::InvalidTrace(format!(
                "expected header time_s,bandwidth_bps,latency_s, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let samples = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<NetworkSample>, _>>()?;
        Self::new(samples)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for s in &self.samples {
            wtr.serialize(s)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Parameters of a generated trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceGenParams {
    pub seed: u64,
    /// Mean bandwidth, bits/s.
    pub mean_bandwidth: f64,
    /// Relative fluctuation `f` in `[0, 1)`.
    pub fluctuation: f64,
    /// Constant latency, seconds.
    pub latency: f64,
    /// Trace length, seconds.
    pub duration: f64,
    /// Spacing between samples, seconds.
    pub interval: f64,
}

fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic fluctuating-bandwidth trace with constant latency.
pub fn gen_trace(p: &TraceGenParams) -> Result<NetworkTrace> {
    if !(p.mean_bandwidth.is_finite() && p.mean_bandwidth > 0.0) {
        return Err(invalid("mean_bandwidth", "must be finite and > 0"));
    }
    if !(0.0..1.0).contains(&p.fluctuation) {
        return Err(invalid("fluctuation", "must lie in [0, 1)"));
    }
    if !(p.latency.is_finite() && p.latency >= 0.0) {
        return Err(invalid("latency", "must be finite and >= 0"));
    }
    if !(p.interval.is_finite() && p.interval > 0.0) {
        return Err(invalid("interval", "must be finite and > 0"));
    }
    if !(p.duration.is_finite() && p.duration >= 0.0) {
        return Err(invalid("duration", "must be finite and >= 0"));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(p.seed);
    let count = ((p.duration / p.interval).floor() as usize).max(1);
    let samples = (0..count)
        .map(|i| {
            let u = p.fluctuation * (2.0 * unit_interval(rng.next_u64()) - 1.0);
            NetworkSample {
                time: i as f64 * p.interval,
                bandwidth: p.mean_bandwidth * (1.0 + u),
                latency: p.latency,
            }
        })
        .collect();
    NetworkTrace::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(time: f64, bandwidth: f64) -> NetworkSample {
        NetworkSample {
            time,
            bandwidth,
            latency: 0.1,
        }
    }

    #[test]
    fn step_hold_lookup() {
        let single = NetworkTrace::new(vec![sample(0.0, 5e7)]).unwrap();
        for t in [0.0, 3.0, 1e9] {
            assert_eq!(single.sample_at(t).bandwidth, 5e7);
        }

        let trace = NetworkTrace::new(vec![sample(0.0, 1e8), sample(10.0, 5e8)]).unwrap();
        assert_eq!(trace.sample_at(9.99).bandwidth, 1e8);
        assert_eq!(trace.sample_at(10.0).bandwidth, 5e8);
        assert_eq!(trace.sample_at(1e6).bandwidth, 5e8);
    }

    #[test]
    fn rejects_malformed_traces() {
        assert!(NetworkTrace::new(vec![]).is_err());
        assert!(NetworkTrace::new(vec![sample(1.0, 1e8)]).is_err());
        assert!(NetworkTrace::new(vec![sample(0.0, 1e8), sample(0.0, 1e8)]).is_err());
        assert!(NetworkTrace::new(vec![sample(0.0, 0.0)]).is_err());
        assert!(NetworkTrace::new(vec![sample(0.0, f64::NAN)]).is_err());
    }

    fn params(seed: u64, fluctuation: f64) -> TraceGenParams {
        TraceGenParams {
            seed,
            mean_bandwidth: 1e8,
            fluctuation,
            latency: 0.2,
            duration: 600.0,
            interval: 1.0,
        }
    }

    #[test]
    fn generator_examples() {
        let flat = gen_trace(&params(3, 0.0)).unwrap();
        assert!(flat.samples().iter().all(|s| s.bandwidth == 1e8 && s.latency == 0.2));
        assert_eq!(flat.samples().len(), 600);

        assert_eq!(gen_trace(&params(9, 0.3)).unwrap(), gen_trace(&params(9, 0.3)).unwrap());
        assert_ne!(
            gen_trace(&params(9, 0.3)).unwrap(),
            gen_trace(&params(10, 0.3)).unwrap()
        );

        let noisy = gen_trace(&params(1, 0.3)).unwrap();
        assert!(noisy.samples().iter().all(|s| (7e7..=1.3e8).contains(&s.bandwidth)));
        let spread = noisy.samples().iter().fold((f64::MAX, f64::MIN), |(lo, hi), s| {
            (lo.min(s.bandwidth), hi.max(s.bandwidth))
        });
        assert!(spread.0 < 8e7 && spread.1 > 1.2e8);
    }

    #[test]
    fn generator_rejects_bad_ranges() {
        assert!(gen_trace(&params(1, 1.0)).is_err());
        assert!(gen_trace(&params(1, -0.1)).is_err());
        let mut p = params(1, 0.1);
        p.mean_bandwidth = 0.0;
        assert!(gen_trace(&p).is_err());
        p = params(1, 0.1);
        p.interval = 0.0;
        assert!(gen_trace(&p).is_err());
    }

    #[test]
    fn csv_header_is_checked() {
        let bad = "t,bw,lat\n0,1,0\n";
        assert!(NetworkTrace::read_csv(bad.as_bytes()).is_err());
        let good = "time_s,bandwidth_bps,latency_s\n0,100000000,0.1\n5.5,200000000,0.2\n";
        let trace = NetworkTrace::read_csv(good.as_bytes()).unwrap();
        assert_eq!(trace.sample_at(6.0).bandwidth, 2e8);
    }
}
