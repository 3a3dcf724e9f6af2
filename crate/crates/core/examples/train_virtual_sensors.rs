//! Selects three physical sensors, trains the estimator for the other nine
//! and scores it on held-out rows.
//!
//!     cargo run --release --example train_virtual_sensors

use infodensity::cli::{evaluate_model, fit_imvs, select_sensors, split_holdout, RunConfig};
use infodensity::metrics::Denominator;
use infodensity::synth::{generate, SynthSpec};

fn main() -> infodensity::Result<()> {
    let (m, _) = generate(&SynthSpec::default())?;
    let mut config = RunConfig::default();
    config.train.max_epochs = 40;
    config.train.patience = 15;

    let (fit, test) = split_holdout(&m, config.test_fraction)?;
    let selection = select_sensors(&config, &fit, 3)?;
    println!("physical: {:?}", selection.selected);

    let (model, report) = fit_imvs(&config, &fit, &selection.selected)?;
    println!(
        "stopped after {} epochs, best validation MSE {:.4} at epoch {:?}",
        report.stopping_epoch,
        report.best_val_mse.unwrap_or(f64::NAN),
        report.best_epoch
    );

    let eval = evaluate_model(&model, &test, Denominator::GlobalRange)?;
    eval.write_csv(std::io::stdout())?;
    Ok(())
}
