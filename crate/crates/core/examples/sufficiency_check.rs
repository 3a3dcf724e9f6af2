//! Sweeps k and asks whether adding sensors still changes the error.
//!
//!     cargo run --release --example sufficiency_check

use std::collections::BTreeMap;

use infodensity::cli::{cmd_pipeline, RunConfig};
use infodensity::ingest::write_wide_csv;
use infodensity::select::sufficiency_check;
use infodensity::synth::{generate, SynthSpec};

fn main() -> infodensity::Result<()> {
    // average NMAE of three published deployment scenarios
    let published: BTreeMap<String, f64> =
        [("scenario 1", 0.0321), ("scenario 2", 0.0258), ("scenario 3", 0.0259)].map(|(k, v)| (k.into(), v)).into();
    let s = sufficiency_check(&published, 0.01)?;
    println!("published scenarios: sufficient {} (max gap {:.4} between {:?})", s.sufficient, s.max_divergence, s.worst_pair);

    let dir = tempfile::tempdir()?;
    let input = dir.path().join("field.csv");
    write_wide_csv(&generate(&SynthSpec::default())?.0, std::fs::File::create(&input)?)?;
    let mut config = RunConfig { input: Some(input), output_dir: dir.path().join("out"), k_sweep: vec![1, 3, 5], ..RunConfig::default() };
    config.train.max_epochs = 40;
    config.train.patience = 15;

    let report = cmd_pipeline(&config)?;
    for p in &report.sweep {
        println!("k={} mean NMAE {:.4}", p.k, p.mean_nmae);
    }
    if let Some(s) = report.sufficiency {
        println!("sweep: sufficient {} at epsilon {} (max gap {:.4})", s.sufficient, s.epsilon, s.max_divergence);
    }
    Ok(())
}
