//! Every ranking method on the same planted field, with the clusters each
//! top-3 pick lands in.
//!
//!     cargo run --release --example select_sensors

use infodensity::cli::angle_field_of;
use infodensity::mutualinfo::{mi_field, BinStrategy};
use infodensity::select;
use infodensity::synth::{generate, SynthSpec};

fn main() -> infodensity::Result<()> {
    let (m, truth) = generate(&SynthSpec { seed: 2, ..SynthSpec::default() })?;
    let k = 3;
    let picks = [
        ("angle", select::rank_by_angle(&angle_field_of(&m, 96, 96)?, k)?),
        ("mi", select::rank_by_mi(&mi_field(&m, 32, BinStrategy::EqualWidth)?, k)?),
        ("random", select::baseline_random(m.sensor_ids(), k, 7)?),
        ("variance", select::baseline_variance(&m, k)?),
        ("correlation", select::baseline_correlation(&m, k)?),
    ];
    for (name, sel) in &picks {
        let clusters: Vec<usize> = sel.selected.iter().map(|id| truth.cluster_of[id]).collect();
        println!("{name:<12} {:?} clusters {clusters:?}", sel.selected);
    }
    let angle = &picks[0].1;
    println!("angle scores (mean angle to the rest, lower is denser):");
    for s in &angle.scores {
        println!("  {} {:.2}", s.sensor_id, s.score);
    }
    println!("bottom {k}: {:?}", angle.bottom(k)?);
    Ok(())
}
