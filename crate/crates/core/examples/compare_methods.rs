//! All methods on every shift pattern for one seed, printed as a table.
//!
//!     cargo run --release --example compare_methods -- 3

use asap_lab::harness::{Lab, RunConfig};
use asap_lab::methods::mean_accuracy;

fn main() -> asap_lab::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let mut config = RunConfig::default_protocol();
    config.seeds = vec![seed];
    let lab = Lab::new(config)?;
    println!(
        "pretrained accuracy {:.2}%",
        100.0 * lab.setup(seed)?.train_accuracy
    );

    print!("{:>6}", "shift");
    for m in &lab.config.methods {
        print!(" {:>10}", m.label());
    }
    println!();
    for &shift in &lab.config.shifts {
        let stream = lab.stream(shift, seed)?;
        print!("{:>6}", shift.name());
        for m in &lab.config.methods {
            let records = lab.run_on(&lab.config.scaled_method(m), seed, &stream)?;
            print!(" {:>10.2}", 100.0 * mean_accuracy(&records));
        }
        println!();
    }
    Ok(())
}
