//! Eigen-phase angles between sensors of a planted three-cluster field.
//! Sensors that share a latent waveform sit at small angles.
//!
//!     cargo run --release --example eigen_phase_field

use infodensity::cli::angle_field_of;
use infodensity::eigenphase::principal_component;
use infodensity::ingest::{FrameSet, Normalization};
use infodensity::synth::{generate, SynthSpec};

fn main() -> infodensity::Result<()> {
    let (m, truth) = generate(&SynthSpec::default())?;

    let pc = principal_component(&FrameSet::from_series("s01", m.column(0), 96, 96, Normalization::Zscore)?)?;
    println!("s01: lambda1 {:.3}, spectral gap {:.3}", pc.eigenvalue, pc.spectral_gap);

    let field = angle_field_of(&m, 96, 96)?;
    print!("      ");
    for id in &field.sensor_ids {
        print!("{id:>6}");
    }
    println!();
    for (i, id) in field.sensor_ids.iter().enumerate() {
        print!("{id} c{}", truth.cluster_of[id]);
        for j in 0..field.sensor_ids.len() {
            print!("{:6.1}", field.matrix[[i, j]]);
        }
        println!();
    }
    Ok(())
}
