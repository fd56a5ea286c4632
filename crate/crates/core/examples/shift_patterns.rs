//! Prints the mixing coefficient of each shift pattern over a short horizon.
//!
//!     cargo run --example shift_patterns -- 64

use asap_lab::shift::{default_endpoints, ShiftKind, ShiftSchedule};

fn main() -> asap_lab::Result<()> {
    let horizon: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(36);
    let (p0, pt) = default_endpoints(4, 7)?;
    println!("start  {:?}\ntarget {:?}\n", p0.as_slice(), pt.as_slice());

    for kind in ShiftKind::ALL {
        let schedule = ShiftSchedule::new(kind, horizon, p0.clone(), pt.clone(), 7)?;
        let alphas: Vec<f64> = (1..=horizon)
            .map(|t| schedule.alpha(t))
            .collect::<Result<_, _>>()?;
        let strip: String = alphas
            .iter()
            .map(|a| match (a * 4.0).round() as u8 {
                0 => '_',
                1 => '.',
                2 => ':',
                3 => '=',
                _ => '#',
            })
            .collect();
        println!("{:>4} {strip}", kind.name());
    }

    let schedule = ShiftSchedule::new(ShiftKind::Sin, horizon, p0, pt, 7)?;
    let mid = schedule.distribution(horizon / 4)?;
    println!("\nsin prior at t = {}: {:.3?}", horizon / 4, mid.as_slice());
    Ok(())
}
