//! Generates a planted field and writes it with its ground truth.
//!
//!     cargo run --example synthetic_field -- out_dir

use std::fs::{self, File};
use std::path::PathBuf;

use infodensity::ingest::write_wide_csv;
use infodensity::synth::{generate, SynthSpec, Waveform};

fn main() -> infodensity::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_out".into()));
    fs::create_dir_all(&dir)?;
    let spec = SynthSpec { n_clusters: 4, sensors_per_cluster: 3, waveform: Waveform::SmoothedNoise, noise_sigma: 0.2, seed: 9, ..SynthSpec::default() };
    let (m, truth) = generate(&spec)?;
    write_wide_csv(&m, File::create(dir.join("field.csv"))?)?;
    truth.write_json(File::create(dir.join("ground_truth.json"))?)?;
    for (c, members) in truth.members().iter().enumerate() {
        println!("cluster {c}: {members:?}");
    }
    println!("{} rows written to {}", m.n_rows(), dir.display());
    Ok(())
}
