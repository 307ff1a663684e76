//! Evaluation metrics over a window `[t_lo, t_hi]` of 1-based time steps.
//! Sequences are indexed so that element `t - 1` belongs to step `t`.

use std::fmt;
use std::io;

use nalgebra::DVector;
use thiserror::Error;

use crate::geometry::{self, Orthotope};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("window [{lo}, {hi}] invalid for a sequence of length {len}")]
    Window { lo: usize, hi: usize, len: usize },
    #[error("isolated posterior volume is zero at step {0}")]
    ZeroVolume(usize),
    #[error("estimate and truth differ in dimension at step {0}")]
    Dimension(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub lo: usize,
    pub hi: usize,
}

impl Window {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    /// Number of steps in the window.
    pub fn len(&self) -> usize {
        (self.hi + 1).saturating_sub(self.lo)
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    fn check(&self, len: usize) -> Result<std::ops::RangeInclusive<usize>, MetricsError> {
        if self.lo < 1 || self.lo > self.hi || self.hi > len {
            return Err(MetricsError::Window {
                lo: self.lo,
                hi: self.hi,
                len,
            });
        }
        Ok(self.lo - 1..=self.hi - 1)
    }
}

/// Total squared estimation error, summed over the window.
pub fn tnse(
    estimates: &[DVector<f64>],
    truths: &[DVector<f64>],
    window: Window,
) -> Result<f64, MetricsError> {
    let range = window.check(estimates.len().min(truths.len()))?;
    let mut total = 0.0;
    for i in range {
        if estimates[i].len() != truths[i].len() {
            return Err(MetricsError::Dimension(i + 1));
        }
        total += (&estimates[i] - &truths[i]).norm_squared();
    }
    Ok(total)
}

/// Midpoint estimates of a posterior sequence.
pub fn midpoints(posteriors: &[Orthotope]) -> Vec<DVector<f64>> {
    posteriors.iter().map(Orthotope::midpoint).collect()
}

pub fn volumes(posteriors: &[Orthotope]) -> Vec<f64> {
    posteriors.iter().map(geometry::volume).collect()
}

/// Mean posterior volume.
pub fn av(posteriors: &[Orthotope], window: Window) -> Result<f64, MetricsError> {
    let range = window.check(posteriors.len())?;
    let sum: f64 = posteriors[range].iter().map(geometry::volume).sum();
    Ok(sum / window.len() as f64)
}

/// Time mean of the per-step volume ratio `with_transfer / isolated`.
pub fn avr(with_transfer: &[f64], isolated: &[f64], window: Window) -> Result<f64, MetricsError> {
    let range = window.check(with_transfer.len().min(isolated.len()))?;
    let mut sum = 0.0;
    for i in range {
        if isolated[i] == 0.0 {
            return Err(MetricsError::ZeroVolume(i + 1));
        }
        sum += with_transfer[i] / isolated[i];
    }
    Ok(sum / window.len() as f64)
}

/// Fraction of window steps whose posterior contains the true state.
pub fn containment(
    posteriors: &[Orthotope],
    truths: &[DVector<f64>],
    window: Window,
) -> Result<f64, MetricsError> {
    let range = window.check(posteriors.len().min(truths.len()))?;
    let mut hits = 0usize;
    for i in range {
        match geometry::contains(&posteriors[i], &truths[i]) {
            Ok(true) => hits += 1,
            Ok(false) => {}
            Err(_) => return Err(MetricsError::Dimension(i + 1)),
        }
    }
    Ok(hits as f64 / window.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Isolated,
    Btl,
    Bcm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Isolated, Method::Btl, Method::Bcm];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Isolated => "isolated",
            Method::Btl => "btl",
            Method::Bcm => "bcm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Metrics for one (method, ratio, seed) cell. Discarded runs carry NaN
/// metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub method: Method,
    pub ratio: f64,
    pub seed: u64,
    pub window: Window,
    pub tnse: f64,
    pub av: f64,
    pub avr: f64,
    pub p_c: f64,
    pub discarded: bool,
    pub empty_data_updates: usize,
    pub empty_transfers: usize,
}

pub const CSV_HEADER: [&str; 12] = [
    "method",
    "ratio",
    "seed",
    "t_lo",
    "t_hi",
    "tnse",
    "av",
    "avr",
    "p_c",
    "discarded",
    "empty_data_updates",
    "empty_transfers",
];

impl MetricsRecord {
    pub fn discarded(method: Method, ratio: f64, seed: u64, window: Window) -> Self {
        Self {
            method,
            ratio,
            seed,
            window,
            tnse: f64::NAN,
            av: f64::NAN,
            avr: f64::NAN,
            p_c: f64::NAN,
            discarded: true,
            empty_data_updates: 0,
            empty_transfers: 0,
        }
    }

    pub fn to_csv_row(&self) -> Vec<String> {
        vec![
            self.method.label().to_string(),
            format_float(self.ratio),
            self.seed.to_string(),
            self.window.lo.to_string(),
            self.window.hi.to_string(),
            format_float(self.tnse),
            format_float(self.av),
            format_float(self.avr),
            format_float(self.p_c),
            self.discarded.to_string(),
            self.empty_data_updates.to_string(),
            self.empty_transfers.to_string(),
        ]
    }
}

/// Shortest round-trip representation; NaN is written as `NaN`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn write_records<W: io::Write>(records: &[MetricsRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.to_csv_row())?;
    }
    w.flush()?;
    Ok(())
}
