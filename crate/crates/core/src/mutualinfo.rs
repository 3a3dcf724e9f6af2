//! Histogram mutual information between sensor series.
//!
//! Readings are discretized per sensor, then entropy and mutual information
//! are evaluated on the empirical (plug-in) frequencies in nats. The plug-in
//! estimator is biased upward by roughly `(B - 1)^2 / (2T)` for independent
//! series; no correction is applied.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::eigenphase::square_from_rows;
use crate::error::{contract, Error, Result};
use crate::ingest::TimeSeriesMatrix;

pub const DEFAULT_BINS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStrategy {
    #[default]
    EqualWidth,
    EqualFrequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSeries {
    pub symbols: Vec<u32>,
    /// Strictly increasing; `bin_edges.len() - 1` bins.
    pub bin_edges: Vec<f64>,
    pub strategy: BinStrategy,
    /// The input was constant and collapsed to a single symbol.
    pub degenerate: bool,
}

impl DiscreteSeries {
    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

pub fn discretize(x: ArrayView1<'_, f64>, bins: usize, strategy: BinStrategy) -> Result<DiscreteSeries> {
    let t = x.len();
    if bins < 2 || t < bins {
        return Err(contract(format!("discretize needs T >= B >= 2 (T = {t}, B = {bins})")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series passed to discretize".into()));
    }
    let (min, max) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if min == max {
        log::warn!("constant series discretized to a single symbol");
        let edges = (0..=bins).map(|i| min + i as f64 / bins as f64).collect();
        return Ok(DiscreteSeries { symbols: vec![0; t], bin_edges: edges, strategy, degenerate: true });
    }
    match strategy {
        BinStrategy::EqualWidth => {
            let width = (max - min) / bins as f64;
            let mut edges: Vec<f64> = (0..bins).map(|i| min + i as f64 * width).collect();
            edges.push(max);
            let symbols = x
                .iter()
                .map(|&v| (((v - min) / width).floor() as usize).min(bins - 1) as u32)
                .collect();
            Ok(DiscreteSeries { symbols, bin_edges: edges, strategy, degenerate: false })
        }
        BinStrategy::EqualFrequency => {
            let mut sorted = x.to_vec();
            sorted.sort_by(f64::total_cmp);
            // interior cuts sit between neighbouring order statistics; a run of
            // ties straddling a cut stays whole in the lower bin
            let mut cuts: Vec<f64> = Vec::with_capacity(bins - 1);
            for i in 1..bins {
                let mut k = (i * t).div_ceil(bins);
                while k < t && sorted[k] == sorted[k - 1] {
                    k += 1;
                }
                if k >= t {
                    break;
                }
                let cut = 0.5 * (sorted[k - 1] + sorted[k]);
                if cuts.last().is_none_or(|&c| c < cut) {
                    cuts.push(cut);
                }
            }
            let symbols = x.iter().map(|&v| cuts.partition_point(|&c| c < v) as u32).collect();
            let mut edges = Vec::with_capacity(cuts.len() + 2);
            edges.push(min);
            edges.extend(&cuts);
            edges.push(max);
            Ok(DiscreteSeries { symbols, bin_edges: edges, strategy, degenerate: false })
        }
    }
}

/// Shannon entropy (nats) of symbol frequencies.
pub fn entropy(x: &DiscreteSeries) -> Result<f64> {
    if x.is_empty() {
        return Err(contract("entropy of an empty series"));
    }
    let mut counts = vec![0u64; x.n_bins()];
    for &s in &x.symbols {
        counts[s as usize] += 1;
    }
    Ok(entropy_from_counts(&counts))
}

pub fn entropy_from_counts(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut terms: Vec<f64> = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Joint symbol counts, `table[a][b]`.
pub fn joint_counts(x: &DiscreteSeries, y: &DiscreteSeries) -> Result<Vec<Vec<u64>>> {
    if x.len() != y.len() {
        return Err(contract(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let mut table = vec![vec![0u64; y.n_bins()]; x.n_bins()];
    for (&a, &b) in x.symbols.iter().zip(&y.symbols) {
        table[a as usize][b as usize] += 1;
    }
    Ok(table)
}

/// Plug-in mutual information of a contingency table, in nats.
///
/// Each cell ratio `c * T / (r_a * s_b)` is formed from exact integer
/// products, so a table that factorizes exactly scores exactly zero. Terms
/// are summed in sorted order, which makes the result invariant under
/// transposition bit for bit.
pub fn mi_from_counts(table: &[Vec<u64>]) -> f64 {
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let ncols = table.first().map_or(0, Vec::len);
    let cols: Vec<u64> = (0..ncols).map(|b| table.iter().map(|r| r[b]).sum()).collect();
    let total: u64 = rows.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut terms = Vec::new();
    for (a, row) in table.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let num = c as u128 * total as u128;
            let den = rows[a] as u128 * cols[b] as u128;
            let ratio = num as f64 / den as f64;
            terms.push(c as f64 / total as f64 * ratio.ln());
        }
    }
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

pub fn mutual_information(x: &DiscreteSeries, y: &DiscreteSeries) -> Result<f64> {
    Ok(mi_from_counts(&joint_counts(x, y)?))
}

/// Pairwise mutual information; the diagonal holds each sensor's entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct MiField {
    pub sensor_ids: Vec<String>,
    pub matrix: Array2<f64>,
    pub bins: usize,
    pub strategy: BinStrategy,
}

pub fn mi_field(matrix: &TimeSeriesMatrix, bins: usize, strategy: BinStrategy) -> Result<MiField> {
    let n = matrix.n_sensors();
    if n < 2 {
        return Err(Error::InsufficientData(format!("MI field needs 2 sensors, got {n}")));
    }
    let series = (0..n)
        .map(|j| discretize(matrix.column(j), bins, strategy))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        out[[i, i]] = entropy(&series[i])?;
        for j in (i + 1)..n {
            let g = mutual_information(&series[i], &series[j])?;
            out[[i, j]] = g;
            out[[j, i]] = g;
        }
    }
    Ok(MiField { sensor_ids: matrix.sensor_ids().to_vec(), matrix: out, bins, strategy })
}

pub const MI_MEASURE: &str = "mutual_information_nats";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiFieldJson {
    pub sensor_ids: Vec<String>,
    pub measure: String,
    pub bins: usize,
    pub strategy: BinStrategy,
    pub matrix: Vec<Vec<f64>>,
}

impl MiField {
    pub fn to_json(&self) -> MiFieldJson {
        MiFieldJson {
            sensor_ids: self.sensor_ids.clone(),
            measure: MI_MEASURE.into(),
            bins: self.bins,
            strategy: self.strategy,
            matrix: self.matrix.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn from_json(j: &MiFieldJson) -> Result<Self> {
        if j.measure != MI_MEASURE {
            return Err(Error::Schema(format!("expected measure `{MI_MEASURE}`, got `{}`", j.measure)));
        }
        Ok(Self {
            sensor_ids: j.sensor_ids.clone(),
            matrix: square_from_rows(&j.matrix)?,
            bins: j.bins,
            strategy: j.strategy,
        })
    }

    /// Long form: `sensor_a,sensor_b,gamma_nats` for every cell.
    pub fn write_long_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["sensor_a", "sensor_b", "gamma_nats"])?;
        for (i, a) in self.sensor_ids.iter().enumerate() {
            for (j, b) in self.sensor_ids.iter().enumerate() {
                w.write_record([a.as_str(), b.as_str(), &self.matrix[[i, j]].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
