//! Pairwise mutual information, and how the bin count moves the estimate
//! for independent data.
//!
//!     cargo run --release --example mutual_info_field

use infodensity::mutualinfo::{discretize, mi_field, mutual_information, BinStrategy};
use infodensity::synth::{generate, SynthSpec};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> infodensity::Result<()> {
    let (m, truth) = generate(&SynthSpec { n_clusters: 2, sensors_per_cluster: 3, ..SynthSpec::default() })?;
    let field = mi_field(&m, 32, BinStrategy::EqualWidth)?;
    for (i, a) in field.sensor_ids.iter().enumerate() {
        let row: Vec<String> = (0..field.sensor_ids.len()).map(|j| format!("{:.3}", field.matrix[[i, j]])).collect();
        println!("{a} (cluster {}): {}", truth.cluster_of[a], row.join(" "));
    }

    // independent uniforms: the plug-in estimate is biased upward by about (B-1)^2 / 2T
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = 10_000;
    let x: Array1<f64> = (0..t).map(|_| rng.gen()).collect();
    let y: Array1<f64> = (0..t).map(|_| rng.gen()).collect();
    for bins in [4, 8, 16, 32] {
        let mi = mutual_information(
            &discretize(x.view(), bins, BinStrategy::EqualWidth)?,
            &discretize(y.view(), bins, BinStrategy::EqualWidth)?,
        )?;
        let bias = ((bins - 1) * (bins - 1)) as f64 / (2.0 * t as f64);
        println!("B={bins:>2}: MI {mi:.4} nats, bias estimate {bias:.4}");
    }
    Ok(())
}
