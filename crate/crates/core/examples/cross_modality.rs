//! Pollutant species against temperature and an unrelated random channel:
//! similarity, mutual information and a temperature estimate from the
//! pollutants alone.
//!
//!     cargo run --release --example cross_modality

use infodensity::cli::{cmd_cmi, RunConfig};
use infodensity::ingest::write_wide_csv;
use infodensity::synth::generate_modalities;

fn main() -> infodensity::Result<()> {
    let (m, groups) = generate_modalities(5000, 96, 4, 0)?;
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("modalities.csv");
    write_wide_csv(&m, std::fs::File::create(&input)?)?;

    let mut config = RunConfig { input: Some(input), output_dir: dir.path().join("out"), bins: 8, ..RunConfig::default() };
    config.cmi.source = "pollutant".into();
    config.cmi.modalities = groups;
    config.train.max_epochs = 40;
    config.train.patience = 15;

    let report = cmd_cmi(&config)?;
    for r in &report.measures {
        println!("{:>9} vs {:<11} omega {:6.2}  tau {:.4}  gamma {:.4}", r.modality_a, r.modality_b, r.omega_deg, r.tau, r.gamma_nats);
    }
    for e in &report.estimates {
        println!("estimate {} ({}): NMAE {:.4}", e.sensor_id, e.modality, e.nmae);
    }
    Ok(())
}
