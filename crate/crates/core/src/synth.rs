//! Synthetic sensor fields with planted cluster structure, plus brute-force
//! reference implementations used to cross-check the estimators.
//!
//! Each cluster `j` has one latent signal `z_j(t)`; sensor `s` in that cluster
//! reports `gain_s * z_j(t) + offset_s + noise`. With the default
//! sinusoid-mix waveform, `z_j` is a Gaussian-windowed cosine at its own
//! position within each frame, scaled by a slow sinusoidal envelope whose
//! period is incommensurate with the frame. The windows barely overlap and
//! each has zero mean, so latents of different clusters are nearly
//! uncorrelated and their principal eigenvectors close to perpendicular. Each
//! has a single dominant entry, which keeps its sign stable under noise.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::ingest::TimeSeriesMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    #[default]
    SinusoidMix,
    /// Independent Gaussian noise per cluster, moving-average smoothed.
    SmoothedNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_clusters: usize,
    pub sensors_per_cluster: usize,
    pub samples: usize,
    pub frame_len: usize,
    pub waveform: Waveform,
    pub gain_range: (f64, f64),
    pub offset_range: (f64, f64),
    pub noise_sigma: f64,
    pub interval_secs: i64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_clusters: 3,
            sensors_per_cluster: 4,
            samples: 5_000,
            frame_len: 96,
            waveform: Waveform::SinusoidMix,
            gain_range: (0.5, 2.0),
            offset_range: (0.0, 2.0),
            noise_sigma: 0.1,
            interval_secs: 900,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.sensors_per_cluster == 0 {
            return Err(contract("need at least one cluster with one sensor"));
        }
        if self.frame_len < 2 || self.samples < self.frame_len {
            return Err(contract("samples must cover at least one frame of length >= 2"));
        }
        if self.waveform == Waveform::SinusoidMix && 12 * self.n_clusters > self.frame_len {
            return Err(contract("windowed latents need frame_len >= 12 * n_clusters"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(contract("noise sigma must be finite and >= 0"));
        }
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(self.gain_range) || !ok(self.offset_range) || self.gain_range.0 <= 0.0 {
            return Err(contract("gain range must be positive and ordered; offset range ordered"));
        }
        if self.interval_secs <= 0 {
            return Err(contract("interval must be positive"));
        }
        Ok(())
    }

    pub fn n_sensors(&self) -> usize {
        self.n_clusters * self.sensors_per_cluster
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cluster_of: BTreeMap<String, usize>,
    pub gains: BTreeMap<String, f64>,
    pub offsets: BTreeMap<String, f64>,
    pub latents: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn write_json<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer_pretty(sink, self)?;
        Ok(())
    }

    /// Sensors of each cluster, in id order.
    pub fn members(&self) -> Vec<Vec<String>> {
        let n = self.latents.len();
        let mut out = vec![Vec::new(); n];
        for (id, &c) in &self.cluster_of {
            out[c].push(id.clone());
        }
        out
    }
}

fn sensor_name(i: usize, total: usize) -> String {
    let width = total.to_string().len().max(2);
    format!("s{:0width$}", i + 1)
}

fn latent(spec: &SynthSpec, cluster: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = spec.samples;
    match spec.waveform {
        Waveform::SinusoidMix => {
            let d = spec.frame_len as f64;
            let c = spec.n_clusters as f64;
            let center = d * (cluster as f64 + 0.5) / c;
            let width = d / (6.0 * c);
            let mod_phase = rng.gen_range(0.0..TAU);
            let mod_period = d * (2.0 + std::f64::consts::SQRT_2);
            (0..t)
                .map(|i| {
                    let pos = (i % spec.frame_len) as f64;
                    // windowed cosine: zero mean over the frame and nearly disjoint
                    // support across clusters, so latents are close to orthogonal
                    let x = (pos - center) / width;
                    let wavelet = (-0.5 * x * x).exp() * (std::f64::consts::PI * x).cos();
                    let envelope = 1.0 + 0.5 * (TAU * i as f64 / mod_period + mod_phase).sin();
                    wavelet * envelope / 1.5
                })
                .collect()
        }
        Waveform::SmoothedNoise => {
            let normal = Normal::new(0.0, 1.0).unwrap();
            let width = (spec.frame_len / 8).max(2);
            let raw: Vec<f64> = (0..t + width).map(|_| normal.sample(rng)).collect();
            let smooth: Vec<f64> = (0..t).map(|i| raw[i..i + width].iter().sum::<f64>() / width as f64).collect();
            let mean = smooth.iter().sum::<f64>() / t as f64;
            let sd = (smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64).sqrt();
            smooth.iter().map(|v| (v - mean) / sd).collect()
        }
    }
}

/// Planted-cluster field. Sensors are numbered cluster by cluster.
pub fn generate(spec: &SynthSpec) -> Result<(TimeSeriesMatrix, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latents: Vec<Vec<f64>> = (0..spec.n_clusters).map(|c| latent(spec, c, &mut rng)).collect();
    let n = spec.n_sensors();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut values = Array2::zeros((spec.samples, n));
    let mut truth = GroundTruth {
        cluster_of: BTreeMap::new(),
        gains: BTreeMap::new(),
        offsets: BTreeMap::new(),
        latents: latents.clone(),
    };
    let mut ids = Vec::with_capacity(n);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..hi) };
    // Gains are stratified: every cluster gets one draw from each of
    // `sensors_per_cluster` equal slices of the gain range, in shuffled order,
    // so no cluster is systematically cleaner than another.
    let p = spec.sensors_per_cluster;
    let mut strata = Vec::with_capacity(n);
    for _ in 0..spec.n_clusters {
        let mut slots: Vec<usize> = (0..p).collect();
        slots.shuffle(&mut rng);
        strata.extend(slots);
    }
    for s in 0..n {
        let cluster = s / p;
        let id = sensor_name(s, n);
        let (lo, hi) = spec.gain_range;
        let width = (hi - lo) / p as f64;
        let slot_lo = lo + width * strata[s] as f64;
        let gain = draw(&mut rng, (slot_lo, slot_lo + width));
        let offset = draw(&mut rng, spec.offset_range);
        for (t, z) in latents[cluster].iter().enumerate() {
            let eps = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            values[[t, s]] = gain * z + offset + eps;
        }
        truth.cluster_of.insert(id.clone(), cluster);
        truth.gains.insert(id.clone(), gain);
        truth.offsets.insert(id.clone(), offset);
        ids.push(id);
    }
    let matrix = TimeSeriesMatrix::from_columns(ids, values, spec.interval_secs)?;
    Ok((matrix, truth))
}

/// Multi-modality field for cross-modality tests.
///
/// A shared driver (daily bump with a slow envelope plus smoothed noise)
/// feeds a `pollutant` block of `species` affine channels. `temperature` is a
/// saturating monotone function of the same driver, and `random` is seeded
/// uniform noise unrelated to either.
pub fn generate_modalities(
    samples: usize,
    frame_len: usize,
    species: usize,
    seed: u64,
) -> Result<(TimeSeriesMatrix, BTreeMap<String, Vec<String>>)> {
    if species == 0 {
        return Err(contract("need at least one pollutant species"));
    }
    let base = SynthSpec { n_clusters: 1, sensors_per_cluster: 1, samples, frame_len, seed, ..SynthSpec::default() };
    base.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let daily = latent(&base, 0, &mut rng);
    let wander = latent(&SynthSpec { waveform: Waveform::SmoothedNoise, ..base.clone() }, 0, &mut rng);
    let driver: Vec<f64> = daily.iter().zip(&wander).map(|(d, w)| 2.0 * d + 0.2 * w).collect();
    let noise = Normal::new(0.0, 1.0).unwrap();

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for i in 0..species {
        let id = format!("pollutant_{}", i + 1);
        let gain = rng.gen_range(0.5..2.0);
        let offset = rng.gen_range(0.0..5.0);
        let col = driver.iter().map(|z| gain * z + offset + 0.05 * noise.sample(&mut rng)).collect();
        groups.entry("pollutant".into()).or_default().push(id.clone());
        columns.push((id, col));
    }
    let temp = driver.iter().map(|z| 15.0 + 8.0 * (z - 0.5).tanh() + 0.1 * noise.sample(&mut rng)).collect();
    columns.push(("temperature".into(), temp));
    groups.insert("temperature".into(), vec!["temperature".into()]);
    let random = (0..samples).map(|_| rng.gen_range(0.0..1.0)).collect();
    columns.push(("random".into(), random));
    groups.insert("random".into(), vec!["random".into()]);

    let ids: Vec<String> = columns.iter().map(|(id, _)| id.clone()).collect();
    let values = Array2::from_shape_fn((samples, columns.len()), |(t, j)| columns[j].1[t]);
    Ok((TimeSeriesMatrix::from_columns(ids, values, base.interval_secs)?, groups))
}

/// Mutual information of a contingency table by direct summation over
/// normalized probabilities.
pub fn oracle_mi(joint_counts: &[Vec<u64>]) -> f64 {
    let total: f64 = joint_counts.iter().flatten().map(|&c| c as f64).sum();
    if total == 0.0 {
        return 0.0;
    }
    let rows = joint_counts.len();
    let cols = joint_counts.first().map_or(0, Vec::len);
    let p = |a: usize, b: usize| joint_counts[a][b] as f64 / total;
    let mut pa = vec![0.0; rows];
    let mut pb = vec![0.0; cols];
    for a in 0..rows {
        for b in 0..cols {
            pa[a] += p(a, b);
            pb[b] += p(a, b);
        }
    }
    let mut mi = 0.0;
    for a in 0..rows {
        for b in 0..cols {
            let pab = p(a, b);
            if pab > 0.0 {
                mi += pab * (pab / (pa[a] * pb[b])).ln();
            }
        }
    }
    mi
}

/// Dominant eigenpair of a symmetric 2x2 (closed form) or 3x3 (grid search
/// over the sphere, polished from the resulting eigenvalue) matrix. The
/// vector is unit length with its largest-magnitude entry positive.
pub fn oracle_eigen(c: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let (mut v, l) = match c.len() {
        2 if c.iter().all(|r| r.len() == 2) => eigen2(c[0][0], c[0][1], c[1][1]),
        3 if c.iter().all(|r| r.len() == 3) => eigen3(c),
        _ => return Err(contract("oracle_eigen handles 2x2 and 3x3 only")),
    };
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if v.iter().find(|x| x.abs() >= max - 1e-12).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((v, l))
}

fn eigen2(a: f64, b: f64, d: f64) -> (Vec<f64>, f64) {
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let l = mid + rad;
    if b == 0.0 {
        return if a >= d { (vec![1.0, 0.0], a) } else { (vec![0.0, 1.0], d) };
    }
    // two candidate forms; keep the better conditioned
    let u = [l - d, b];
    let w = [b, l - a];
    let nu = u[0].hypot(u[1]);
    let nw = w[0].hypot(w[1]);
    (if nu >= nw { u.to_vec() } else { w.to_vec() }, l)
}

fn rayleigh(c: &[Vec<f64>], v: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += v[i] * c[i][j] * v[j];
        }
    }
    s
}

fn sphere(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Maximizes the Rayleigh quotient on a shrinking (theta, phi) grid.
pub fn rayleigh_grid_search(c: &[Vec<f64>]) -> [f64; 3] {
    let (mut best_t, mut best_p, mut best) = (0.0, 0.0, f64::NEG_INFINITY);
    let (nt, np) = (90, 180);
    for i in 0..=nt {
        for j in 0..np {
            let (t, p) = (std::f64::consts::PI * i as f64 / nt as f64, TAU * j as f64 / np as f64);
            let r = rayleigh(c, &sphere(t, p));
            if r > best {
                (best_t, best_p, best) = (t, p, r);
            }
        }
    }
    let mut half = std::f64::consts::PI / nt as f64;
    while half > 1e-9 {
        let (ct, cp) = (best_t, best_p);
        for i in -10..=10 {
            for j in -10..=10 {
                let t = ct + half * i as f64 / 10.0;
                let p = cp + half * j as f64 / 10.0;
                let r = rayleigh(c, &sphere(t, p));
                if r > best {
                    (best_t, best_p, best) = (t, p, r);
                }
            }
        }
        half /= 4.0;
    }
    sphere(best_t, best_p)
}

fn eigen3(c: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let g = rayleigh_grid_search(c);
    let l = rayleigh(c, &g);
    // rows of (C - l I); the eigenvector is orthogonal to all of them
    let r: Vec<[f64; 3]> = (0..3)
        .map(|i| {
            let mut row = [c[i][0], c[i][1], c[i][2]];
            row[i] -= l;
            row
        })
        .collect();
    let cross = |a: &[f64; 3], b: &[f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let candidates = [cross(&r[0], &r[1]), cross(&r[0], &r[2]), cross(&r[1], &r[2])];
    let norm = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let best = candidates.iter().max_by(|a, b| norm(a).total_cmp(&norm(b))).unwrap();
    let scale = c.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    // a near-zero cross product means a repeated top eigenvalue: keep the grid vector
    let v = if norm(best) > 1e-6 * scale * scale { *best } else { g };
    (v.to_vec(), l)
}
