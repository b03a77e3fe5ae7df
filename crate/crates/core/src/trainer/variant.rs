use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compressor::CompressionRatio;
use crate::error::{invalid, Result};

/// Training algorithm. The first four are fixed-parameter special cases of
/// delayed, compressed, error-feedback SGD; the DeCo variants pick
/// `(tau, delta)` from the network with the planner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgoVariant {
    /// Synchronous SGD: `tau = 0`, `delta = 1`.
    DSgd,
    /// Compressed with error feedback, no delay.
    DEfSgd {
        delta: f64,
    },
    /// Delayed aggregation, no compression.
    DdSgd {
        tau: usize,
    },
    DdEfSgd {
        tau: usize,
        delta: f64,
    },
    /// DeCo plan computed once at the first iteration (`E = infinity`).
    DecoStatic,
    /// DeCo re-planned every `period` iterations.
    DecoAdaptive {
        period: usize,
    },
}

/// Where `(tau, delta)` come from during a run.
#[derive(Clone, Debug, PartialEq)]
pub enum PlanSource {
    Fixed {
        tau: usize,
        delta: CompressionRatio<f64>,
    },
    /// Re-plan every `period` iterations; `None` plans once.
    Adaptive {
        period: Option<usize>,
    },
}

impl AlgoVariant {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::DEfSgd { delta } | Self::DdEfSgd { delta, .. } => {
                CompressionRatio::new(*delta)?;
            }
            Self::DecoAdaptive { period: 0 } => return Err(invalid("period", "must be at least 1")),
            _ => {}
        }
        Ok(())
    }

    /// Whether workers keep an error-feedback residual.
    pub fn error_feedback(&self) -> bool {
        !matches!(self, Self::DSgd | Self::DdSgd { .. })
    }

    pub fn plan_source(&self) -> Result<PlanSource> {
        self.validate()?;
        let fixed = |tau: usize, delta: f64| -> Result<PlanSource> {
            Ok(PlanSource::Fixed {
                tau,
                delta: CompressionRatio::new(delta)?,
            })
        };
        match *self {
            Self::DSgd => fixed(0, 1.0),
            Self::DEfSgd { delta } => fixed(0, delta),
            Self::DdSgd { tau } => fixed(tau, 1.0),
            Self::DdEfSgd { tau, delta } => fixed(tau, delta),
            Self::DecoStatic => Ok(PlanSource::Adaptive { period: None }),
            Self::DecoAdaptive { period } => Ok(PlanSource::Adaptive { period: Some(period) }),
        }
    }
}

impl fmt::Display for AlgoVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DSgd => write!(f, "D-SGD"),
            Self::DEfSgd { delta } => write!(f, "D-EF-SGD(delta={delta})"),
            Self::DdSgd { tau } => write!(f, "DD-SGD(tau={tau})"),
            Self::DdEfSgd { tau, delta } => write!(f, "DD-EF-SGD(tau={tau},delta={delta})"),
            Self::DecoStatic => write!(f, "DeCo-SGD(static)"),
            Self::DecoAdaptive { period } => write!(f, "DeCo-SGD(E={period})"),
        }
    }
}
