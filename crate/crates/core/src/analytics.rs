//! Inter-event timing, burst/dormancy fractions and weekday×hour activity
//! heatmaps. All calendar arithmetic is UTC.

use std::fmt::Write as _;

use chrono::{DateTime, Datelike, Timelike};
use serde::Serialize;

use crate::error::{Error, Result};

/// Gaps strictly below this count as bursts.
pub const BURST_SECONDS: i64 = 60;
/// Gaps strictly above this (72 h) count as dormancy.
pub const DORMANCY_SECONDS: i64 = 259_200;

pub const HISTOGRAM_BINS: usize = 50;
pub const HISTOGRAM_MIN: f64 = 1.0;
pub const HISTOGRAM_MAX: f64 = 1e7;

pub fn inter_event_deltas(timestamps: &[i64]) -> Result<Vec<i64>> {
    if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Unsorted(i + 1));
    }
    Ok(timestamps.windows(2).map(|w| w[1] - w[0]).collect())
}

/// (fraction of deltas < 60 s, fraction > 72 h).
pub fn burst_dormancy(deltas: &[i64]) -> Result<(f64, f64)> {
    if deltas.is_empty() {
        return Err(Error::EmptyDeltas);
    }
    let n = deltas.len() as f64;
    let burst = deltas.iter().filter(|d| **d < BURST_SECONDS).count() as f64 / n;
    let dormant = deltas.iter().filter(|d| **d > DORMANCY_SECONDS).count() as f64 / n;
    Ok((burst, dormant))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogHistogram {
    /// `counts.len() + 1` edges, log-spaced.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Deltas below the first edge land in the first bin, those above the last
/// edge in the last bin.
pub fn log_histogram(deltas: &[i64], bins: usize, lo: f64, hi: f64) -> Result<LogHistogram> {
    if bins == 0 || !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidConfig(format!("histogram needs bins > 0 and 0 < lo < hi, got {bins}, {lo}, {hi}")));
    }
    let (llo, lhi) = (lo.log10(), hi.log10());
    let step = (lhi - llo) / bins as f64;
    let edges = (0..=bins).map(|i| 10f64.powf(llo + step * i as f64)).collect();
    let mut counts = vec![0u64; bins];
    for &d in deltas {
        let x = (d as f64).max(lo);
        let b = (((x.log10() - llo) / step).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(LogHistogram { edges, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalSummary {
    pub deltas: Vec<i64>,
    pub frac_under_60s: f64,
    pub frac_over_72h: f64,
    pub histogram: LogHistogram,
}

pub fn temporal_summary(timestamps: &[i64]) -> Result<TemporalSummary> {
    let deltas = inter_event_deltas(timestamps)?;
    let (frac_under_60s, frac_over_72h) = burst_dormancy(&deltas)?;
    let histogram = log_histogram(&deltas, HISTOGRAM_BINS, HISTOGRAM_MIN, HISTOGRAM_MAX)?;
    Ok(TemporalSummary { deltas, frac_under_60s, frac_over_72h, histogram })
}

/// Event counts by UTC weekday (Monday = row 0) and hour.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapMatrix {
    pub counts: [[u64; 24]; 7],
    /// 100·counts / max count; all zero when there are no events.
    pub normalized: [[f64; 24]; 7],
}

impl HeatmapMatrix {
    pub fn from_counts(counts: [[u64; 24]; 7]) -> Self {
        let max = counts.iter().flatten().copied().max().unwrap_or(0);
        let normalized = counts.map(|row| row.map(|c| if max == 0 { 0.0 } else { 100.0 * c as f64 / max as f64 }));
        HeatmapMatrix { counts, normalized }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Cell-wise sum of two heatmaps, renormalized.
    pub fn merge(&self, other: &HeatmapMatrix) -> HeatmapMatrix {
        let mut counts = self.counts;
        for (row, orow) in counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        HeatmapMatrix::from_counts(counts)
    }

    /// 7 lines of 24 comma-separated normalized values, preceded by a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("weekday");
        for h in 0..24 {
            let _ = write!(out, ",h{h:02}");
        }
        out.push('\n');
        for (d, row) in self.normalized.iter().enumerate() {
            out.push_str(WEEKDAYS[d]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Timestamps outside the representable calendar range are skipped.
pub fn weekday_hour_heatmap(timestamps: &[i64]) -> HeatmapMatrix {
    let mut counts = [[0u64; 24]; 7];
    for &ts in timestamps {
        match DateTime::from_timestamp(ts, 0) {
            Some(t) => counts[t.weekday().num_days_from_monday() as usize][t.hour() as usize] += 1,
            None => log::warn!("timestamp {ts} is outside the calendar range; skipped"),
        }
    }
    HeatmapMatrix::from_counts(counts)
}
