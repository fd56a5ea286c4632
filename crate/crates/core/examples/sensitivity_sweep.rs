//! Sweeps the upper learning-rate bound on a reduced protocol.

use asap_lab::harness::{sensitivity_sweep, MatrixOptions, RunConfig, SweepTarget};

fn main() -> asap_lab::Result<()> {
    let mut config = RunConfig::default_protocol();
    config.seeds = vec![1, 2];
    config.shifts.truncate(2);
    config.horizon = 200;
    let values = [1e-5, 1e-4, 1e-3, 1e-2];
    let rows = sensitivity_sweep(
        &config,
        SweepTarget::EtaMax,
        &values,
        MatrixOptions::default(),
    )?;
    println!("eta_min fixed at {:e}", SweepTarget::EtaMax.fixed_value());
    for row in rows {
        match row.mean_acc {
            Some(m) => println!(
                "eta_max {:>7.0e}: {m:6.2} ± {:.2}",
                row.value,
                row.std_acc.unwrap_or(0.0)
            ),
            None => println!(
                "eta_max {:>7.0e}: {}",
                row.value,
                row.error.unwrap_or_default()
            ),
        }
    }
    Ok(())
}
