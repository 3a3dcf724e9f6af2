//! Sensor ranking and selection.
//!
//! The two information-density rankings keep the `k` sensors with the
//! lowest mean eigen-phase angle, or the highest mean mutual information, to
//! every other sensor. Random, variance and correlation rankings are
//! provided as baselines. Ties are always broken by ascending sensor id.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigenphase::{self, AngleField, PrincipalComponent};
use crate::error::{contract, Error, Result};
use crate::ingest::{mean_std, normalize, FrameSet, Normalization, TimeSeriesMatrix, VARIANCE_TOLERANCE};
use crate::mutualinfo::{self, BinStrategy, MiField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EigenAngle,
    MutualInfo,
    Random,
    Variance,
    Correlation,
}

impl std::str::FromStr for Method {
    type Err = Error;

    /// Accepts the short command-line names as well as the serialized ones.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angle" | "eigen_angle" => Ok(Method::EigenAngle),
            "mi" | "mutual_info" => Ok(Method::MutualInfo),
            "random" => Ok(Method::Random),
            "variance" => Ok(Method::Variance),
            "correlation" => Ok(Method::Correlation),
            other => Err(Error::Config(format!("unknown selection method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorScore {
    pub sensor_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    /// Every sensor, best first.
    pub ranked_ids: Vec<String>,
    /// Per-sensor statistic, in ranking order.
    pub scores: Vec<SensorScore>,
    pub k: usize,
    pub selected: Vec<String>,
}

impl SelectionResult {
    /// The `k` worst-ranked sensors, worst first.
    pub fn bottom(&self, k: usize) -> Result<Vec<String>> {
        check_k(k, self.ranked_ids.len())?;
        Ok(self.ranked_ids.iter().rev().take(k).cloned().collect())
    }

    /// Sensors not selected, in ranking order.
    pub fn unselected(&self) -> Vec<String> {
        self.ranked_ids[self.k..].to_vec()
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(contract(format!("k = {k} outside 1..={n}")));
    }
    Ok(())
}

/// Mean computed over sorted values, so it does not depend on input order.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn off_diagonal_means(matrix: &Array2<f64>) -> Vec<f64> {
    let n = matrix.nrows();
    (0..n)
        .map(|m| order_free_mean((0..n).filter(|&j| j != m).map(|j| matrix[[m, j]]).collect()))
        .collect()
}

fn rank(method: Method, ids: &[String], scores: Vec<f64>, ascending: bool, k: usize) -> Result<SelectionResult> {
    check_k(k, ids.len())?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = if ascending {
            scores[a].total_cmp(&scores[b])
        } else {
            scores[b].total_cmp(&scores[a])
        };
        by_score.then_with(|| ids[a].cmp(&ids[b]))
    });
    let ranked_ids: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
    Ok(SelectionResult {
        method,
        scores: order
            .iter()
            .map(|&i| SensorScore { sensor_id: ids[i].clone(), score: scores[i] })
            .collect(),
        selected: ranked_ids[..k].to_vec(),
        ranked_ids,
        k,
    })
}

/// Lowest mean angle first.
pub fn rank_by_angle(field: &AngleField, k: usize) -> Result<SelectionResult> {
    rank(Method::EigenAngle, &field.sensor_ids, off_diagonal_means(&field.matrix), true, k)
}

/// Highest mean mutual information first.
pub fn rank_by_mi(field: &MiField, k: usize) -> Result<SelectionResult> {
    rank(Method::MutualInfo, &field.sensor_ids, off_diagonal_means(&field.matrix), false, k)
}

/// Uniform sample without replacement; the ranking is the seeded shuffle.
pub fn baseline_random(ids: &[String], k: usize, seed: u64) -> Result<SelectionResult> {
    check_k(k, ids.len())?;
    // sorted first so the draw does not depend on the input order
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(SelectionResult {
        method: Method::Random,
        scores: shuffled
            .iter()
            .enumerate()
            .map(|(i, id)| SensorScore { sensor_id: id.clone(), score: i as f64 })
            .collect(),
        selected: shuffled[..k].to_vec(),
        ranked_ids: shuffled,
        k,
    })
}

/// Highest raw sample variance first.
pub fn baseline_variance(matrix: &TimeSeriesMatrix, k: usize) -> Result<SelectionResult> {
    let scores = (0..matrix.n_sensors())
        .map(|j| mean_std(matrix.column(j)).1.powi(2))
        .collect();
    rank(Method::Variance, matrix.sensor_ids(), scores, false, k)
}

/// Highest mean absolute Pearson correlation with the other sensors first.
pub fn baseline_correlation(matrix: &TimeSeriesMatrix, k: usize) -> Result<SelectionResult> {
    let n = matrix.n_sensors();
    if n < 2 {
        return Err(Error::InsufficientData("correlation ranking needs 2 sensors".into()));
    }
    let z = normalize(matrix)?;
    let t = z.n_rows() as f64;
    let mut r = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (z.column(i).dot(&z.column(j)) / (t - 1.0)).clamp(-1.0, 1.0).abs();
            r[[i, j]] = v;
            r[[j, i]] = v;
        }
    }
    rank(Method::Correlation, matrix.sensor_ids(), off_diagonal_means(&r), false, k)
}

/// Pearson correlation of two series.
pub fn pearson(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(contract("pearson needs two series of equal length >= 2"));
    }
    let (mx, sx) = mean_std(x);
    let (my, sy) = mean_std(y);
    if sx * sx <= VARIANCE_TOLERANCE || sy * sy <= VARIANCE_TOLERANCE {
        return Err(Error::Degenerate("pearson of a constant series".into()));
    }
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0);
    Ok((cov / (sx * sy)).clamp(-1.0, 1.0))
}

/// How mutual information between two multi-channel modalities is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossMiMode {
    /// MI between the scalar surrogates.
    #[default]
    Surrogate,
    /// Mean MI over every channel pair.
    MeanPerChannel,
}

/// One modality reduced to what the cross-modality measures need.
///
/// A multi-channel block (e.g. several pollutant species) is z-scored and
/// projected onto its own principal direction, giving one scalar surrogate
/// series; a single column is simply z-scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalitySignal {
    pub name: String,
    pub frames: FrameSet,
    pub surrogate: Vec<f64>,
    pub channels: Vec<Vec<f64>>,
    /// Channel loadings of the surrogate (`[1.0]` for a single column).
    pub loadings: Vec<f64>,
}

impl ModalitySignal {
    pub fn from_block(name: &str, block: &TimeSeriesMatrix, frame_len: usize, stride: usize) -> Result<Self> {
        if block.n_sensors() == 0 {
            return Err(contract(format!("modality `{name}` has no columns")));
        }
        let z = normalize(block)?;
        let channels: Vec<Vec<f64>> = (0..z.n_sensors()).map(|j| block.column(j).to_vec()).collect();
        let (surrogate, loadings) = if z.n_sensors() == 1 {
            (z.column(0).to_vec(), vec![1.0])
        } else {
            let rows = FrameSet::from_frames(name, z.values().clone(), Normalization::Zscore)?;
            let pc = eigenphase::principal_component(&rows)?;
            let v = ndarray::Array1::from(pc.vector.clone());
            (z.values().dot(&v).to_vec(), pc.vector)
        };
        let frames = FrameSet::from_series(name, ArrayView1::from(&surrogate), frame_len, stride, Normalization::Zscore)?;
        Ok(Self { name: name.to_string(), frames, surrogate, channels, loadings })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityIdReport {
    pub modality_a: String,
    pub modality_b: String,
    pub omega_deg: f64,
    pub tau: f64,
    pub gamma_nats: f64,
}

/// Eigen-phase angle, similarity score and mutual information between two
/// modalities.
pub fn modality_id(
    a: &ModalitySignal,
    b: &ModalitySignal,
    bins: usize,
    strategy: BinStrategy,
    mode: CrossMiMode,
) -> Result<ModalityIdReport> {
    if a.frames.frame_len != b.frames.frame_len {
        return Err(contract(format!(
            "frame lengths differ: {} vs {}",
            a.frames.frame_len, b.frames.frame_len
        )));
    }
    if a.surrogate.len() != b.surrogate.len() {
        return Err(contract("modalities are not aligned to the same rows"));
    }
    let pa: PrincipalComponent = eigenphase::principal_component(&a.frames)?;
    let pb = eigenphase::principal_component(&b.frames)?;
    let omega_deg = eigenphase::angle(&pa, &pb)?;
    let tau = eigenphase::similarity_score(omega_deg)?;
    let mi = |x: &[f64], y: &[f64]| -> Result<f64> {
        let dx = mutualinfo::discretize(ArrayView1::from(x), bins, strategy)?;
        let dy = mutualinfo::discretize(ArrayView1::from(y), bins, strategy)?;
        mutualinfo::mutual_information(&dx, &dy)
    };
    let gamma_nats = match mode {
        CrossMiMode::Surrogate => mi(&a.surrogate, &b.surrogate)?,
        CrossMiMode::MeanPerChannel => {
            let mut all = Vec::new();
            for x in &a.channels {
                for y in &b.channels {
                    all.push(mi(x, y)?);
                }
            }
            order_free_mean(all)
        }
    };
    Ok(ModalityIdReport {
        modality_a: a.name.clone(),
        modality_b: b.name.clone(),
        omega_deg,
        tau,
        gamma_nats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub sufficient: bool,
    pub epsilon: f64,
    pub max_divergence: f64,
    /// The configurations that diverge most.
    pub worst_pair: (String, String),
}

/// Whether inference quality is stable across configurations: true iff the
/// largest pairwise NMAE difference is below `epsilon`.
pub fn sufficiency_check(errors_by_config: &BTreeMap<String, f64>, epsilon: f64) -> Result<SufficiencyReport> {
    if errors_by_config.len() < 2 {
        return Err(contract("sufficiency check needs at least two configurations"));
    }
    if !(epsilon > 0.0) {
        return Err(contract("epsilon must be positive"));
    }
    let entries: Vec<(&String, &f64)> = errors_by_config.iter().collect();
    let mut worst = (0.0, 0, 1);
    for i in 0..entries.len() {
        for j in (i + 1)..entries.len() {
            let d = (entries[i].1 - entries[j].1).abs();
            if d > worst.0 {
                worst = (d, i, j);
            }
        }
    }
    Ok(SufficiencyReport {
        sufficient: worst.0 < epsilon,
        epsilon,
        max_divergence: worst.0,
        worst_pair: (entries[worst.1].0.clone(), entries[worst.2].0.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn angle_ranking_hand_case() {
        let field = AngleField {
            sensor_ids: ids(3),
            matrix: array![[0.0, 10.0, 80.0], [10.0, 0.0, 70.0], [80.0, 70.0, 0.0]],
        };
        let r = rank_by_angle(&field, 1).unwrap();
        assert_eq!(r.selected, vec!["s2"]);
        assert_eq!(r.ranked_ids, vec!["s2", "s1", "s3"]);
        let scores: Vec<f64> = r.scores.iter().map(|s| s.score).collect();
        assert_eq!(scores, vec![40.0, 45.0, 75.0]);
        assert_eq!(rank_by_angle(&field, 3).unwrap().selected.len(), 3);
        assert!(rank_by_angle(&field, 0).is_err());
        assert!(rank_by_angle(&field, 4).is_err());
        assert_eq!(r.bottom(1).unwrap(), vec!["s3"]);
    }

    #[test]
    fn angle_ties_fall_back_to_id_order() {
        let mut m = Array2::from_elem((4, 4), 60.0);
        m.diag_mut().fill(0.0);
        let field = AngleField { sensor_ids: vec!["d".into(), "b".into(), "a".into(), "c".into()], matrix: m };
        assert_eq!(rank_by_angle(&field, 2).unwrap().ranked_ids, vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn mi_ranking_hand_case() {
        // row means over off-diagonal entries: 0.5, 0.55, 0.15
        let field = MiField {
            sensor_ids: ids(3),
            matrix: array![[2.0, 0.9, 0.1], [0.9, 2.0, 0.2], [0.1, 0.2, 2.0]],
            bins: 8,
            strategy: BinStrategy::EqualWidth,
        };
        let r = rank_by_mi(&field, 1).unwrap();
        assert_eq!(r.selected, vec!["s2"]);
        let scaled = MiField { matrix: &field.matrix * 7.5, ..field.clone() };
        assert_eq!(rank_by_mi(&scaled, 3).unwrap().ranked_ids, r.ranked_ids);
        assert_eq!(rank_by_mi(&field, 3).unwrap().selected.len(), 3);
    }

    #[test]
    fn random_baseline() {
        let all = ids(10);
        let a = baseline_random(&all, 3, 7).unwrap();
        assert_eq!(a, baseline_random(&all, 3, 7).unwrap());
        assert_eq!(a.selected.len(), 3);
        let mut full = baseline_random(&all, 10, 1).unwrap().selected;
        full.sort();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(full, sorted);
        assert!(baseline_random(&all, 11, 1).is_err());
    }

    fn matrix(cols: Vec<Vec<f64>>) -> TimeSeriesMatrix {
        let t = cols[0].len();
        let n = cols.len();
        let v = Array2::from_shape_fn((t, n), |(i, j)| cols[j][i]);
        TimeSeriesMatrix::from_columns(ids(n), v, 900).unwrap()
    }

    #[test]
    fn variance_baseline() {
        // sample variances 4, 1, 9
        let m = matrix(vec![vec![0.0, 2.0, 4.0], vec![0.0, 1.0, 2.0], vec![0.0, 3.0, 6.0]]);
        let r = baseline_variance(&m, 1).unwrap();
        assert_eq!(r.selected, vec!["s3"]);
        assert!((r.scores[0].score - 9.0).abs() < 1e-12);

        let eq = matrix(vec![vec![1.0, 2.0], vec![5.0, 6.0]]);
        assert_eq!(baseline_variance(&eq, 2).unwrap().ranked_ids, vec!["s1", "s2"]);

        let boosted = matrix(vec![vec![0.0, 2.0, 4.0], vec![0.0, 10.0, 20.0], vec![0.0, 3.0, 6.0]]);
        assert_eq!(baseline_variance(&boosted, 1).unwrap().selected, vec!["s2"]);
    }

    #[test]
    fn correlation_baseline() {
        let t = 500;
        let x: Vec<f64> = (0..t).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let z: Vec<f64> = (0..t).map(|i| ((i * 7919) % 997) as f64).collect();
        let m = matrix(vec![x.clone(), y, z]);
        let r = baseline_correlation(&m, 1).unwrap();
        assert_eq!(r.ranked_ids[2], "s3");
        assert!(r.selected == vec!["s1"] || r.selected == vec!["s2"]);

        let flat = matrix(vec![x, vec![1.0; t]]);
        assert!(matches!(baseline_correlation(&flat, 1), Err(Error::DegenerateSensor(_))));
    }

    #[test]
    fn sufficiency_cases() {
        let cfg = |v: &[f64]| -> BTreeMap<String, f64> {
            v.iter().enumerate().map(|(i, x)| (format!("c{i}"), *x)).collect()
        };
        let r = sufficiency_check(&cfg(&[0.0321, 0.0258, 0.0259]), 0.01).unwrap();
        assert!(r.sufficient);
        assert!((r.max_divergence - 0.0063).abs() < 1e-12);
        assert!(sufficiency_check(&cfg(&[0.05, 0.05, 0.05]), 1e-9).unwrap().sufficient);
        assert!(!sufficiency_check(&cfg(&[0.01, 0.20]), 0.05).unwrap().sufficient);
        assert!(sufficiency_check(&cfg(&[0.01]), 0.05).is_err());
    }

    #[test]
    fn modality_against_itself() {
        let t = 24 * 60;
        let col: Vec<f64> = (0..t)
            .map(|i| (i as f64 * std::f64::consts::TAU / 24.0).sin() * (1.0 + 0.4 * (i as f64 / 97.0).sin()))
            .collect();
        let m = matrix(vec![col]);
        let s = ModalitySignal::from_block("temp", &m, 24, 24).unwrap();
        let r = modality_id(&s, &s, 16, BinStrategy::EqualWidth, CrossMiMode::Surrogate).unwrap();
        assert!(r.omega_deg.abs() < 1e-6);
        assert!((r.tau - 1.0).abs() < 1e-12);
        let d = mutualinfo::discretize(ArrayView1::from(&s.surrogate), 16, BinStrategy::EqualWidth).unwrap();
        assert!((r.gamma_nats - mutualinfo::entropy(&d).unwrap()).abs() < 1e-12);
    }
}
