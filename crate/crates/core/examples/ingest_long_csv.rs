//! Long-format readings with gaps and junk rows, aligned to a 15-minute grid
//! and z-scored.
//!
//!     cargo run --example ingest_long_csv

use std::fmt::Write;

use infodensity::ingest::{align, load_long_csv, modality_map, normalize, AlignPolicy, CsvSchema};

fn main() -> infodensity::Result<()> {
    let mut text = String::from("timestamp,sensor_id,modality,value\n");
    for step in 0..12 {
        let ts = format!("2024-03-01T{:02}:{:02}:00Z", step / 4, (step % 4) * 15);
        for (id, modality, base) in [("3695", "traffic", 120.0), ("6506", "traffic", 80.0), ("no2_a", "no2", 30.0)] {
            let value = base + 10.0 * (step as f64 * 0.7).sin();
            // a missing reading and an unparseable one
            let cell = match (id, step) {
                ("6506", 4) => "NaN".to_string(),
                ("no2_a", 7) => "n/a".to_string(),
                _ => format!("{value:.2}"),
            };
            writeln!(text, "{ts},{id},{modality},{cell}").unwrap();
        }
    }

    let loaded = load_long_csv(text.as_bytes(), &CsvSchema::default())?;
    println!("{} rows read, {} rejected", loaded.rows_read, loaded.rejected);
    println!("modalities: {:?}", modality_map(&loaded.records));

    for policy in [AlignPolicy::DropIncomplete, AlignPolicy::ForwardFill] {
        let m = align(&loaded.records, 900, policy, None)?;
        println!("{policy:?}: {} rows x {} sensors", m.n_rows(), m.n_sensors());
    }

    let m = align(&loaded.records, 900, AlignPolicy::ForwardFill, None)?;
    let z = normalize(&m)?;
    println!("first z-scored row: {:.3}", z.values().row(0));
    Ok(())
}
