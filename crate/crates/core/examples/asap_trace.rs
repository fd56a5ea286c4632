//! One ASAP run on a square-wave stream: per-step shift estimate, learning
//! rate and accuracy, with block boundaries flagged.

use asap_lab::harness::{Lab, RunConfig};
use asap_lab::shift::{square_block_len, ShiftKind};

fn main() -> asap_lab::Result<()> {
    let mut config = RunConfig::default_protocol();
    config.seeds = vec![1];
    config.horizon = 100;
    let lab = Lab::new(config)?;
    let records = lab.lr_trace(ShiftKind::Squ, 1)?;
    let block = square_block_len(lab.config.horizon);

    println!("   t  shift_e        eta  acc");
    for r in &records {
        let mark = if r.t % block == 0 {
            "  <- block switch"
        } else {
            ""
        };
        println!(
            "{:>4}  {:.4}  {:.3e}  {:.3}{mark}",
            r.t,
            r.shift_e.unwrap_or(f64::NAN),
            r.eta.unwrap_or(f64::NAN),
            r.accuracy
        );
    }
    Ok(())
}
