//! Phase in eigen space.
//!
//! Each sensor's frames give a `d x d` sample covariance; its dominant
//! eigenvector describes the sensor's main direction of variation. The angle
//! between two such vectors is small when the sensors vary the same way
//! (redundant) and near 90 degrees when they carry complementary
//! information.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::ingest::FrameSet;

/// Above this dimension the dominant pair comes from power iteration.
pub const DENSE_EIGEN_MAX_DIM: usize = 512;
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 10_000;
/// Relative spectral gap under which the dominant direction is flagged unstable.
pub const GAP_WARNING: f64 = 0.05;

const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub sensor_id: String,
    pub matrix: Array2<f64>,
}

impl CovMatrix {
    /// Wraps an existing matrix after checking it is square and symmetric.
    pub fn new(sensor_id: &str, matrix: Array2<f64>) -> Result<Self> {
        check_symmetric(matrix.view())?;
        Ok(Self { sensor_id: sensor_id.to_string(), matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_symmetric(m: ArrayView2<'_, f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(contract(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[[i, j]] - m[[j, i]]).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(contract(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Sample covariance of the frames, `(X - mean)^T (X - mean) / (n - 1)`.
pub fn covariance(frames: &FrameSet) -> Result<CovMatrix> {
    let x = &frames.frames;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "sensor `{}` has {n} frame(s); covariance needs 2",
            frames.sensor_id
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty frames");
    let centered = x - &mean;
    let mut c = centered.t().dot(&centered) / (n as f64 - 1.0);
    // exact symmetry
    let d = c.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (c[[i, j]] + c[[j, i]]);
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(CovMatrix { sensor_id: frames.sensor_id.clone(), matrix: c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalComponent {
    pub sensor_id: String,
    /// Unit-norm dominant eigenvector; its largest-magnitude entry is positive.
    pub vector: Vec<f64>,
    pub eigenvalue: f64,
    /// `(lambda_1 - lambda_2) / lambda_1`.
    pub spectral_gap: f64,
    /// Set when the gap is below [`GAP_WARNING`].
    pub gap_warning: bool,
}

impl PrincipalComponent {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Flips `v` so its largest-magnitude entry (first one, on ties) is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() >= max - 1e-12 * max.max(1.0)) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Dominant eigenpair of a covariance matrix.
///
/// A zero gap is not an error: the convention-determined vector is returned
/// with `gap_warning` set.
pub fn principal_eigenvector(c: &CovMatrix) -> Result<PrincipalComponent> {
    let m = c.matrix.view();
    check_symmetric(m)?;
    let d = m.nrows();
    if d < 2 {
        return Err(contract("covariance must be at least 2x2"));
    }
    if m.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate(format!(
            "covariance of `{}` is identically zero",
            c.sensor_id
        )));
    }
    let (mut vector, lambda1, lambda2) = if d <= DENSE_EIGEN_MAX_DIM {
        dense_top_two(m)
    } else {
        let (v, l1) = power_iteration(m, None)?;
        let (_, l2) = power_iteration(m, Some((&v, l1)))?;
        (v, l1, l2)
    };
    if lambda1 <= 0.0 {
        return Err(Error::Degenerate(format!(
            "covariance of `{}` has no positive eigenvalue",
            c.sensor_id
        )));
    }
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    vector.iter_mut().for_each(|x| *x /= norm);
    canonical_sign(&mut vector);
    let spectral_gap = ((lambda1 - lambda2) / lambda1).max(0.0);
    let gap_warning = spectral_gap < GAP_WARNING;
    if gap_warning {
        log::warn!(
            "sensor `{}`: spectral gap {spectral_gap:.4} below {GAP_WARNING}; dominant direction is unstable",
            c.sensor_id
        );
    }
    Ok(PrincipalComponent {
        sensor_id: c.sensor_id.clone(),
        vector,
        eigenvalue: lambda1,
        spectral_gap,
        gap_warning,
    })
}

/// Top eigenvector plus the two largest eigenvalues from a full decomposition.
/// Among equal top eigenvalues the lowest-index one is taken.
fn dense_top_two(m: ArrayView2<'_, f64>) -> (Vec<f64>, f64, f64) {
    let d = m.nrows();
    let dm = DMatrix::from_fn(d, d, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = order[0];
    let vector = eig.eigenvectors.column(top).iter().copied().collect();
    (vector, eig.eigenvalues[top], eig.eigenvalues[order[1]])
}

/// Power iteration on `m`, or on `m - lambda v v^T` when a known pair is
/// passed to deflate.
pub fn power_iteration(
    m: ArrayView2<'_, f64>,
    deflate: Option<(&[f64], f64)>,
) -> Result<(Vec<f64>, f64)> {
    let d = m.nrows();
    let apply = |x: &Array1<f64>| -> Array1<f64> {
        let mut y = m.dot(x);
        if let Some((v, l)) = deflate {
            let v = Array1::from(v.to_vec());
            let proj = v.dot(x);
            y.scaled_add(-l * proj, &v);
        }
        y
    };
    // fixed, non-symmetric start so no eigenvector is orthogonal to it by construction
    let mut x = Array1::from_iter((0..d).map(|i| 1.0 + (i as f64 + 1.0).sqrt().fract()));
    x /= x.dot(&x).sqrt();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERATIONS {
        let y = apply(&x);
        let norm = y.dot(&y).sqrt();
        if norm == 0.0 {
            return Ok((x.to_vec(), 0.0));
        }
        let next = &y / norm;
        let new_lambda = next.dot(&apply(&next));
        let diff = (&next - &x).mapv(f64::abs).sum().min((&next + &x).mapv(f64::abs).sum());
        x = next;
        let converged = (new_lambda - lambda).abs() <= POWER_TOLERANCE * new_lambda.abs().max(1.0)
            && diff <= POWER_TOLERANCE;
        lambda = new_lambda;
        if converged {
            return Ok((x.to_vec(), lambda));
        }
    }
    log::warn!("power iteration hit {POWER_MAX_ITERATIONS} iterations without converging");
    Ok((x.to_vec(), lambda))
}

/// Principal component of a frame set (covariance, then dominant eigenpair).
pub fn principal_component(frames: &FrameSet) -> Result<PrincipalComponent> {
    principal_eigenvector(&covariance(frames)?)
}

/// Angle in degrees between two vectors, in `[0, 180]`.
pub fn vector_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(contract(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("zero vector has no direction".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees())
}

pub fn angle(a: &PrincipalComponent, b: &PrincipalComponent) -> Result<f64> {
    vector_angle(&a.vector, &b.vector)
}

/// Pairwise angles between principal components, in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleField {
    pub sensor_ids: Vec<String>,
    pub matrix: Array2<f64>,
}

pub fn angle_field(components: &[PrincipalComponent]) -> Result<AngleField> {
    let n = components.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("angle field needs 2 sensors, got {n}")));
    }
    let d = components[0].dim();
    if let Some(c) = components.iter().find(|c| c.dim() != d) {
        return Err(contract(format!(
            "sensor `{}` has dimension {}, expected {d}",
            c.sensor_id,
            c.dim()
        )));
    }
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let w = angle(&components[i], &components[j])?;
            matrix[[i, j]] = w;
            matrix[[j, i]] = w;
        }
    }
    Ok(AngleField {
        sensor_ids: components.iter().map(|c| c.sensor_id.clone()).collect(),
        matrix,
    })
}

/// Cross-modality similarity `|cos omega|`.
pub fn similarity_score(omega_deg: f64) -> Result<f64> {
    if !(0.0..=180.0).contains(&omega_deg) {
        return Err(contract(format!("angle {omega_deg} outside [0, 180]")));
    }
    Ok(omega_deg.to_radians().cos().abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleFieldJson {
    pub sensor_ids: Vec<String>,
    pub measure: String,
    pub matrix: Vec<Vec<f64>>,
}

pub const ANGLE_MEASURE: &str = "eigen_phase_deg";

impl AngleField {
    pub fn to_json(&self) -> AngleFieldJson {
        AngleFieldJson {
            sensor_ids: self.sensor_ids.clone(),
            measure: ANGLE_MEASURE.into(),
            matrix: self.matrix.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn from_json(j: &AngleFieldJson) -> Result<Self> {
        if j.measure != ANGLE_MEASURE {
            return Err(Error::Schema(format!("expected measure `{ANGLE_MEASURE}`, got `{}`", j.measure)));
        }
        Ok(Self { sensor_ids: j.sensor_ids.clone(), matrix: square_from_rows(&j.matrix)? })
    }

    /// Heatmap-ready long form: `sensor_a,sensor_b,omega_deg,tau` for every cell.
    pub fn write_long_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["sensor_a", "sensor_b", "omega_deg", "tau"])?;
        for (i, a) in self.sensor_ids.iter().enumerate() {
            for (j, b) in self.sensor_ids.iter().enumerate() {
                let omega = self.matrix[[i, j]];
                let tau = similarity_score(omega)?;
                w.write_record([a.as_str(), b.as_str(), &omega.to_string(), &tau.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn square_from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Schema("field matrix is not square".into()));
    }
    Ok(Array2::from_shape_vec((n, n), rows.concat()).expect("checked square"))
}
