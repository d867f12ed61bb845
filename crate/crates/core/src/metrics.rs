//! Statistics over seeded run ensembles: running minima, success rates,
//! convergence counts, confidence intervals, and cross-instance frequency
//! tables.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bbo::RunTrace;
use crate::error::{Error, Result};

/// z-value of the two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Decimal rounding at the 17th fractional digit.
pub fn round17(v: f64) -> String {
    format!("{v:.17}")
}

/// Equality after rounding both sides to 17 decimal places.
pub fn round17_eq(a: f64, b: f64) -> bool {
    a == b || round17(a) == round17(b)
}

/// An exact success fraction `num/den`.
#[derive(Clone, Copy, Debug, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub num: usize,
    pub den: usize,
}

impl Rate {
    pub fn new(num: usize, den: usize) -> Self {
        assert!(den > 0 && num <= den, "invalid rate {num}/{den}");
        Self { num, den }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `self >= 1/2`, exactly.
    pub fn at_least_half(&self) -> bool {
        2 * self.num >= self.den
    }
}

impl PartialEq for Rate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Ord for Rate {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Best value found after `a` queries, for `a = 0 ..= n_ite`.
pub fn running_min(trace: &RunTrace) -> Vec<f64> {
    let mut best = trace.initial.min_y().unwrap_or(f64::INFINITY);
    let mut out = Vec::with_capacity(trace.queries.len() + 1);
    out.push(best);
    for q in &trace.queries {
        best = best.min(q.y);
        out.push(best);
    }
    out
}

pub struct TraceEnsemble<'a> {
    pub traces: &'a [RunTrace],
    pub y_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    /// `|D_0|`; entry `a` of every series corresponds to `|D| = n0 + a`.
    pub n0: usize,
    pub y_star: f64,
    pub mean_min: Vec<f64>,
    pub success_rate: Vec<Rate>,
    pub variance: Vec<f64>,
    pub ci95_half_width: Vec<f64>,
    pub n_conv: Option<usize>,
    pub final_success_rate: Rate,
}

impl BenchmarkSummary {
    pub fn n_ite(&self) -> usize {
        self.mean_min.len() - 1
    }

    /// CSV columns `a, dataset_size, mean_min, success_num, success_den, variance, ci95`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "dataset_size", "mean_min", "success_num", "success_den", "variance", "ci95"])?;
        for a in 0..self.mean_min.len() {
            let rate = self.success_rate[a];
            w.write_record([
                a.to_string(),
                (self.n0 + a).to_string(),
                format!("{:?}", self.mean_min[a]),
                rate.num.to_string(),
                rate.den.to_string(),
                format!("{:?}", self.variance[a]),
                format!("{:?}", self.ci95_half_width[a]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn aggregate(ensemble: &TraceEnsemble<'_>) -> Result<BenchmarkSummary> {
    let traces = ensemble.traces;
    let first = traces.first().ok_or_else(|| Error::InvalidEnsemble("no traces".into()))?;
    let len = first.queries.len();
    let n0 = first.initial.len();
    if let Some(bad) = traces.iter().find(|t| t.queries.len() != len || t.initial.len() != n0) {
        return Err(Error::InvalidEnsemble(format!(
            "trace shape ({}, {}) differs from ({n0}, {len})",
            bad.initial.len(),
            bad.queries.len()
        )));
    }
    let minima: Vec<Vec<f64>> = traces.iter().map(running_min).collect();
    let n_samp = traces.len();
    let count = n_samp as f64;

    let mut mean_min = Vec::with_capacity(len + 1);
    let mut success_rate = Vec::with_capacity(len + 1);
    let mut variance = Vec::with_capacity(len + 1);
    let mut ci = Vec::with_capacity(len + 1);
    for a in 0..=len {
        let column = minima.iter().map(|m| m[a]);
        let mean = column.clone().sum::<f64>() / count;
        let var = column.clone().map(|y| (y - mean).powi(2)).sum::<f64>() / count;
        let hits = column.filter(|&y| round17_eq(y, ensemble.y_star)).count();
        mean_min.push(mean);
        variance.push(var);
        ci.push(Z_95 * (var / count).sqrt());
        success_rate.push(Rate::new(hits, n_samp));
    }
    let n_conv = n_conv(&success_rate[1..]);
    let final_success_rate = *success_rate.last().expect("series is never empty");
    Ok(BenchmarkSummary {
        n0,
        y_star: ensemble.y_star,
        mean_min,
        success_rate,
        variance,
        ci95_half_width: ci,
        n_conv,
        final_success_rate,
    })
}

/// Smallest loop count `a` (1-based position in `rates`) whose rate reaches one half.
pub fn n_conv(rates: &[Rate]) -> Option<usize> {
    rates.iter().position(Rate::at_least_half).map(|i| i + 1)
}

pub fn final_success_rate(summary: &BenchmarkSummary) -> Rate {
    summary.final_success_rate
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Better {
    Smaller,
    Larger,
}

/// A metric that can appear in a frequency table.
pub trait FrequencyMetric: Ord + Copy {
    /// Whether this value may win its column at all.
    fn eligible(&self) -> bool;
}

impl FrequencyMetric for usize {
    fn eligible(&self) -> bool {
        true
    }
}

impl FrequencyMetric for Rate {
    fn eligible(&self) -> bool {
        self.num > 0
    }
}

/// Per instance, every algorithm tied for the best eligible value receives
/// `1/n_tied`; totals are summed over instances.
pub fn frequency_table<T: FrequencyMetric>(
    per_instance: &BTreeMap<String, BTreeMap<String, Option<T>>>,
    better: Better,
) -> BTreeMap<String, f64> {
    let mut freq: BTreeMap<String, f64> = BTreeMap::new();
    for row in per_instance.values() {
        for alg in row.keys() {
            freq.entry(alg.clone()).or_insert(0.0);
        }
        let candidates = row.iter().filter_map(|(alg, v)| v.filter(FrequencyMetric::eligible).map(|v| (alg, v)));
        let best = match better {
            Better::Smaller => candidates.clone().map(|(_, v)| v).min(),
            Better::Larger => candidates.clone().map(|(_, v)| v).max(),
        };
        let Some(best) = best else { continue };
        let winners: Vec<&String> = candidates.filter(|(_, v)| *v == best).map(|(a, _)| a).collect();
        let share = 1.0 / winners.len() as f64;
        for alg in winners {
            *freq.get_mut(alg).expect("inserted above") += share;
        }
    }
    freq
}

/// Algorithms as rows, instances as columns, frequency last.
pub fn write_frequency_csv<T, W>(
    per_instance: &BTreeMap<String, BTreeMap<String, Option<T>>>,
    freq: &BTreeMap<String, f64>,
    out: W,
) -> Result<()>
where
    T: FrequencyMetric + fmt::Display,
    W: Write,
{
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["algorithm".to_string()];
    header.extend(per_instance.keys().cloned());
    header.push("frequency".into());
    w.write_record(&header)?;
    for (alg, total) in freq {
        let mut row = vec![alg.clone()];
        for metrics in per_instance.values() {
            row.push(match metrics.get(alg).copied().flatten() {
                Some(v) => v.to_string(),
                None => "None".into(),
            });
        }
        row.push(format!("{total}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
