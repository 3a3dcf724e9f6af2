//! Error metrics for virtual sensor estimates.
//!
//! NMAE divides MAE by one range constant per modality: by default the
//! `max - min` of the true readings over every evaluated sensor, so sensors
//! of the same modality share a denominator.

use std::io::Write;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

fn check_pair(y: ArrayView1<'_, f64>, yhat: ArrayView1<'_, f64>) -> Result<()> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(contract(format!("metric inputs have lengths {} and {}", y.len(), yhat.len())));
    }
    Ok(())
}

pub fn mae(y: ArrayView1<'_, f64>, yhat: ArrayView1<'_, f64>) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn nmae(mae_value: f64, denominator: f64) -> Result<f64> {
    if !(denominator > 0.0) {
        return Err(Error::Degenerate(format!("NMAE denominator {denominator} is not positive")));
    }
    Ok(mae_value / denominator)
}

/// Coefficient of determination; `None` when `y` is constant.
pub fn r2(y: ArrayView1<'_, f64>, yhat: ArrayView1<'_, f64>) -> Result<Option<f64>> {
    check_pair(y, yhat)?;
    let mean = y.sum() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// One range over all evaluated sensors.
    #[default]
    GlobalRange,
    /// Each sensor's own range.
    PerSensorRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub sensor_id: String,
    pub mae: f64,
    pub nmae: f64,
    pub r2: Option<f64>,
    pub denominator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAverage {
    pub mae: f64,
    pub nmae: f64,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub physical_ids: Vec<String>,
    pub rows: Vec<EvalRow>,
    pub average: EvalAverage,
    pub denominator_mode: Denominator,
}

fn range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Scores each column of `estimate` against `truth`.
pub fn evaluate(
    truth: ArrayView2<'_, f64>,
    estimate: ArrayView2<'_, f64>,
    virtual_ids: &[String],
    physical_ids: &[String],
    mode: Denominator,
) -> Result<EvalReport> {
    evaluate_with_range(truth, estimate, virtual_ids, physical_ids, mode, range(truth.iter().copied()))
}

/// Like [`evaluate`], but with the global range supplied by the caller,
/// typically the range of every sensor of the modality, not just the
/// evaluated ones. Ignored in per-sensor mode.
pub fn evaluate_with_range(
    truth: ArrayView2<'_, f64>,
    estimate: ArrayView2<'_, f64>,
    virtual_ids: &[String],
    physical_ids: &[String],
    mode: Denominator,
    global: f64,
) -> Result<EvalReport> {
    if truth.dim() != estimate.dim() || truth.ncols() != virtual_ids.len() {
        return Err(contract(format!(
            "truth {:?}, estimate {:?}, {} sensor ids",
            truth.dim(),
            estimate.dim(),
            virtual_ids.len()
        )));
    }
    if truth.is_empty() {
        return Err(contract("nothing to evaluate"));
    }
    let mut rows = Vec::with_capacity(virtual_ids.len());
    for (j, id) in virtual_ids.iter().enumerate() {
        let (y, yhat) = (truth.column(j), estimate.column(j));
        let denominator = match mode {
            Denominator::GlobalRange => global,
            Denominator::PerSensorRange => range(y.iter().copied()),
        };
        let m = mae(y, yhat)?;
        rows.push(EvalRow { sensor_id: id.clone(), mae: m, nmae: nmae(m, denominator)?, r2: r2(y, yhat)?, denominator });
    }
    let n = rows.len() as f64;
    let r2s: Vec<f64> = rows.iter().filter_map(|r| r.r2).collect();
    let average = EvalAverage {
        mae: rows.iter().map(|r| r.mae).sum::<f64>() / n,
        nmae: rows.iter().map(|r| r.nmae).sum::<f64>() / n,
        r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
    };
    Ok(EvalReport { physical_ids: physical_ids.to_vec(), rows, average, denominator_mode: mode })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    /// One row per virtual sensor in the layout
    /// `virtual_sensor_id,physical_sensor_id,mae,r2,nmae`, physical ids
    /// listed down their own column, then an `Average Performance` row.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["virtual_sensor_id", "physical_sensor_id", "mae", "r2", "nmae"])?;
        let n = self.rows.len().max(self.physical_ids.len());
        for i in 0..n {
            let phys = self.physical_ids.get(i).map_or("-", String::as_str);
            match self.rows.get(i) {
                Some(r) => w.write_record([
                    r.sensor_id.as_str(),
                    phys,
                    &format!("{:.6}", r.mae),
                    &fmt_opt(r.r2),
                    &format!("{:.6}", r.nmae),
                ])?,
                None => w.write_record(["-", phys, "-", "-", "-"])?,
            }
        }
        w.write_record([
            "Average Performance",
            "-",
            &format!("{:.6}", self.average.mae),
            &fmt_opt(self.average.r2),
            &format!("{:.6}", self.average.nmae),
        ])?;
        w.flush()?;
        Ok(())
    }
}
