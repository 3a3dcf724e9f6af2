//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero when a
//! gating criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use infodensity::cli::{self, RunConfig};
use infodensity::eigenphase::{principal_eigenvector, similarity_score, CovMatrix};
use infodensity::ingest::write_wide_csv;
use infodensity::metrics::Denominator;
use infodensity::mutualinfo::{discretize, mi_from_counts, mutual_information, BinStrategy};
use infodensity::regress::{adam_step, AdamConfig, AdamState, MlpModel};
use infodensity::select::{sufficiency_check, Method};
use infodensity::synth::{generate, oracle_eigen, oracle_mi, SynthSpec};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/scenario1_errors.csv");
const MADRID_ENV: &str = "INFODENSITY_MADRID_CONFIG";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let pass = o.pass && took <= budget;
    println!(
        "[{}] {id:>2} {name}: {} ({:.2}s of {:.0}s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        budget.as_secs_f64()
    );
    pass
}

fn similarity_table() -> Outcome {
    let rows = [
        ("wind", 119.81, 0.496205),
        ("temperature", 108.22, 0.311757),
        ("humidity", 102.60, 0.217257),
        ("radiation", 102.71, 0.219130),
        ("traffic", 78.51, 0.199878),
    ];
    let mut worst: f64 = 0.0;
    for (_, omega, score) in rows {
        worst = worst.max((similarity_score(omega).unwrap() - score).abs());
    }
    // the published random row does not follow |cos| as closely as the others
    let random = (similarity_score(89.625).unwrap() - 0.007338).abs();
    let random_ok = (7e-4..=9e-4).contains(&random);
    outcome(
        worst < 1e-3 && random_ok,
        format!("max |tau - score| over real rows {worst:.2e}; random row off by {random:.3e} (expected about 8e-4)"),
    )
}

fn random_table(rng: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
    let (r, c) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
    (0..r).map(|_| (0..c).map(|_| if rng.gen_bool(0.2) { 0 } else { rng.gen_range(0..50) }).collect()).collect()
}

fn mi_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst, mut asym, mut min_mi, mut n) = (0.0f64, 0usize, f64::INFINITY, 0);
    while n < 2000 {
        let t = random_table(&mut rng);
        if t.iter().flatten().sum::<u64>() == 0 {
            continue;
        }
        n += 1;
        let mi = mi_from_counts(&t);
        worst = worst.max((mi - oracle_mi(&t)).abs());
        let transposed: Vec<Vec<u64>> = (0..t[0].len()).map(|j| t.iter().map(|row| row[j]).collect()).collect();
        if mi.to_bits() != mi_from_counts(&transposed).to_bits() {
            asym += 1;
        }
        min_mi = min_mi.min(mi);
    }
    outcome(
        worst < 1e-10 && asym == 0 && min_mi >= -1e-12,
        format!("{n} tables: max |mi - oracle| {worst:.2e}, asymmetric {asym}, min mi {min_mi:.2e}"),
    )
}

fn independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut nonzero = 0;
    for _ in 0..500 {
        let r: Vec<u64> = (0..rng.gen_range(1..=8)).map(|_| rng.gen_range(0..20)).collect();
        let c: Vec<u64> = (0..rng.gen_range(1..=8)).map(|_| rng.gen_range(0..20)).collect();
        let t: Vec<Vec<u64>> = r.iter().map(|a| c.iter().map(|b| a * b).collect()).collect();
        if t.iter().flatten().sum::<u64>() > 0 && mi_from_counts(&t) != 0.0 {
            nonzero += 1;
        }
    }
    let t = 10_000;
    let x: Array1<f64> = (0..t).map(|_| rng.gen::<f64>()).collect();
    let y: Array1<f64> = (0..t).map(|_| rng.gen::<f64>()).collect();
    let dx = discretize(x.view(), 16, BinStrategy::EqualWidth).unwrap();
    let dy = discretize(y.view(), 16, BinStrategy::EqualWidth).unwrap();
    let mi = mutual_information(&dx, &dy).unwrap();
    let bias = 15.0f64.powi(2) / (2.0 * t as f64);
    outcome(
        nonzero == 0 && mi < 0.05,
        format!("product tables with nonzero MI: {nonzero}; sampled MI {mi:.4} nats (bias about {bias:.4})"),
    )
}

fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let b = Array2::from_shape_fn((d, d), |_| rng.gen_range(-1.0..1.0));
    b.dot(&b.t())
}

fn eigen_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut vec_err, mut val_err) = (0.0f64, 0.0f64);
    let mut cases = 0;
    for d in [2, 3] {
        for _ in 0..200 {
            let m = random_psd(&mut rng, d);
            let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
            let (v, l) = oracle_eigen(&rows).unwrap();
            let pc = principal_eigenvector(&CovMatrix::new("m", m).unwrap()).unwrap();
            let same: f64 = v.iter().zip(&pc.vector).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let flipped: f64 = v.iter().zip(&pc.vector).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            vec_err = vec_err.max(same.min(flipped));
            val_err = val_err.max((l - pc.eigenvalue).abs() / l.max(1.0));
            cases += 1;
        }
    }

    // planted axis: frames a_i u + noise, signal energy 10x the noise energy
    let (d, n, snr) = (8, 20_000, 10.0);
    let mut u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= norm);
    let noise = Normal::new(0.0, (1.0 / (snr * d as f64)).sqrt()).unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut frames = Array2::zeros((n, d));
    for mut row in frames.rows_mut() {
        let a = std.sample(&mut rng);
        for (j, x) in row.iter_mut().enumerate() {
            *x = a * u[j] + noise.sample(&mut rng);
        }
    }
    let mean = frames.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = &frames - &mean;
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let pc = principal_eigenvector(&CovMatrix::new("planted", cov).unwrap()).unwrap();
    let dot: f64 = pc.vector.iter().zip(&u).map(|(a, b)| a * b).sum();
    let axis_deg = dot.abs().min(1.0).acos().to_degrees();

    outcome(
        vec_err < 1e-8 && val_err < 1e-8 && axis_deg < 1.0,
        format!("{cases} matrices: max vector err {vec_err:.2e}, eigenvalue rel err {val_err:.2e}; planted axis off by {axis_deg:.3} deg at SNR {snr}"),
    )
}

fn finite_difference_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [3usize, 6, 5, 2];
    let mut model = MlpModel::new(&sizes, seed).unwrap();
    // keep pre-activations off the ReLU kink
    for (i, slice) in model.param_slices_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            slice.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
    }
    let x = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-1.0..1.0));
    let up = Array2::from_shape_fn((8, 2), |_| rng.gen_range(-1.0..1.0));
    let loss = |m: &MlpModel| (m.forward(x.view()).unwrap() * &up).sum();
    let analytic = model.backward(x.view(), up.view()).unwrap().slices().concat();
    let h = 1e-6;
    let numeric: Vec<f64> = (0..model.n_params())
        .map(|p| {
            let bump = |delta: f64| {
                let mut m = model.clone();
                let mut k = p;
                for slice in m.param_slices_mut() {
                    if k < slice.len() {
                        slice[k] += delta;
                        break;
                    }
                    k -= slice.len();
                }
                loss(&m)
            };
            (bump(h) - bump(-h)) / (2.0 * h)
        })
        .collect();
    let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

fn gradients_and_adam() -> Outcome {
    let fd = (0..50).map(finite_difference_error).fold(0.0, f64::max);

    let mut state = AdamState::new(AdamConfig::default(), &[1]);
    let mut theta = [0.0f64];
    adam_step(&mut [&mut theta[..]], &[&[1.0][..]], &mut state).unwrap();
    let first = theta[0];

    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let grads: Vec<f64> = (0..10).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut state = AdamState::new(AdamConfig::default(), &[1]);
    let (mut theta, mut m, mut v, mut expected, mut seq_err) = ([0.0f64], 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (k, g) in grads.iter().enumerate() {
        adam_step(&mut [&mut theta[..]], &[&[*g][..]], &mut state).unwrap();
        let t = (k + 1) as i32;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        expected -= 0.001 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        seq_err = seq_err.max((theta[0] - expected).abs());
    }
    outcome(
        fd < 1e-4 && (first - -0.000999999990).abs() < 1e-12 && seq_err < 1e-12,
        format!("finite-difference rel err {fd:.2e} over 50 models; theta1 {first:.12}; 10-step err {seq_err:.2e}"),
    )
}

fn synth_input(dir: &Path, seed: u64) -> std::path::PathBuf {
    let (m, _) = generate(&SynthSpec { seed, ..SynthSpec::default() }).unwrap();
    let path = dir.join(format!("synth_{seed}.csv"));
    write_wide_csv(&m, fs::File::create(&path).unwrap()).unwrap();
    path
}

/// Bounded training budget used for the end-to-end criteria.
fn e2e_config(input: &Path, out: &Path, seed: u64) -> RunConfig {
    let mut c = RunConfig { input: Some(input.to_path_buf()), output_dir: out.to_path_buf(), seed, k: 3, ..RunConfig::default() };
    c.train.max_epochs = 40;
    c.train.patience = 15;
    c
}

fn top_vs_bottom(tmp: &Path) -> Outcome {
    let (mut top, mut bottom, mut worst_top) = (Vec::new(), Vec::new(), 0.0f64);
    for seed in 0..3 {
        let c = e2e_config(&synth_input(tmp, seed), &tmp.join(format!("c6_{seed}")), seed);
        assert_eq!(c.method, Method::EigenAngle);
        let matrix = infodensity::ingest::read_wide_csv(fs::File::open(c.input.as_ref().unwrap()).unwrap()).unwrap();
        let (fit, test) = cli::split_holdout(&matrix, c.test_fraction).unwrap();
        let selection = cli::select_sensors(&c, &fit, 3).unwrap();
        let nmae = |ids: &[String]| {
            let (model, _) = cli::fit_imvs(&c, &fit, ids).unwrap();
            cli::evaluate_model(&model, &test, Denominator::GlobalRange).unwrap().average.nmae
        };
        let t = nmae(&selection.selected);
        let b = nmae(&selection.bottom(3).unwrap());
        worst_top = worst_top.max(t);
        top.push(t);
        bottom.push(b);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mt, mb) = (mean(&top), mean(&bottom));
    outcome(
        worst_top < 0.10 && mt < mb,
        format!("top-3 NMAE {top:.4?} (mean {mt:.4}), bottom-3 {bottom:.4?} (mean {mb:.4})"),
    )
}

fn k_sweep(tmp: &Path) -> Outcome {
    let c = RunConfig { k_sweep: vec![1, 3, 5], ..e2e_config(&synth_input(tmp, 0), &tmp.join("c7"), 0) };
    let report = cli::cmd_pipeline(&c).unwrap();
    let nmae: Vec<f64> = report.sweep.iter().map(|p| p.mean_nmae).collect();
    let monotone = nmae.windows(2).all(|w| w[1] <= w[0] + 0.005);
    let fixture: BTreeMap<String, f64> =
        [("scenario1", 0.0321), ("scenario2", 0.0258), ("scenario3", 0.0259)].map(|(k, v)| (k.to_string(), v)).into();
    let s = sufficiency_check(&fixture, 0.01).unwrap();
    outcome(
        monotone && s.sufficient,
        format!("NMAE at k=1,3,5: {nmae:.4?}; fixture sufficiency {} (max divergence {:.4})", s.sufficient, s.max_divergence),
    )
}

fn fixture_ratios() -> Outcome {
    let mut reader = csv::Reader::from_path(FIXTURE).unwrap();
    let (mut lo, mut hi, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for record in reader.records() {
        let r = record.unwrap();
        let ratio = r[2].parse::<f64>().unwrap() / r[4].parse::<f64>().unwrap();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        n += 1;
    }
    outcome(n > 0 && lo >= 1130.0 && hi <= 1180.0, format!("{n} rows, MAE/NMAE in [{lo:.2}, {hi:.2}]"))
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism(tmp: &Path) -> Outcome {
    let input = synth_input(tmp, 1);
    let a = e2e_config(&input, &tmp.join("c9_a"), 1);
    let b = e2e_config(&input, &tmp.join("c9_b"), 1);
    cli::cmd_pipeline(&a).unwrap();
    cli::cmd_pipeline(&b).unwrap();
    let (fa, fb) = (dir_bytes(&a.output_dir), dir_bytes(&b.output_dir));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    outcome(
        fa.len() == fb.len() && differing.is_empty(),
        format!("{} output files, differing: {differing:?}", fa.len()),
    )
}

fn madrid() -> Option<Outcome> {
    let path = std::env::var_os(MADRID_ENV)?;
    let mut c = RunConfig::from_json_file(Path::new(&path)).unwrap();
    c.k = 1;
    c.k_sweep.clear();
    let o = match cli::cmd_pipeline(&c) {
        Ok(r) => {
            let nmae = r.sweep[0].mean_nmae;
            outcome((nmae - 0.0321).abs() <= 0.03, format!("k=1 NMAE {nmae:.4} against 0.0321 +/- 0.03"))
        }
        Err(e) => outcome(false, format!("pipeline failed: {e}")),
    };
    Some(o)
}

fn main() {
    // the harness flags cargo passes through are not used
    let tmp = TempDir::new().unwrap();
    let secs = Duration::from_secs;
    let results = [
        run(1, "similarity table", secs(1), similarity_table),
        run(2, "MI oracle", secs(10), mi_oracle),
        run(3, "independence", secs(5), independence),
        run(4, "eigen oracle", secs(10), eigen_oracle),
        run(5, "gradients and Adam", secs(10), gradients_and_adam),
        run(6, "planted clusters top vs bottom", secs(300), || top_vs_bottom(tmp.path())),
        run(7, "k sweep", secs(600), || k_sweep(tmp.path())),
        run(8, "fixture ratios", secs(1), fixture_ratios),
        run(9, "determinism", secs(600), || determinism(tmp.path())),
    ];
    match madrid() {
        Some(o) => println!("[{}] 10 real traffic data (non-gating): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail),
        None => println!("[SKIP] 10 real traffic data (non-gating): set {MADRID_ENV} to a run config to enable"),
    }
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} gating criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
