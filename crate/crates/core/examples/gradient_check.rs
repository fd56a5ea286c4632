//! Compares the analytic gradient of the unsupervised risk against central
//! finite differences on a small random problem.

use asap_lab::data::DatasetSpec;
use asap_lab::estimator::{unsupervised_risk_grad, RiskWeights};
use asap_lab::model::ModelParams;
use asap_lab::shift::LabelDistribution;

fn main() -> asap_lab::Result<()> {
    let (classes, dim) = (4, 6);
    let holdout = DatasetSpec::synthetic(classes, dim, 10, 2.0, 5).build()?;
    let params = ModelParams::init(classes, dim, 5);
    let weights = RiskWeights(LabelDistribution::new(vec![0.4, 0.3, 0.2, 0.1])?);

    let (_, grad) = unsupervised_risk_grad(&params, &holdout, &weights)?;
    let analytic = grad.flatten();
    let flat = params.flatten();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        let (rp, _) = unsupervised_risk_grad(
            &ModelParams::from_flat(classes, dim, &plus)?,
            &holdout,
            &weights,
        )?;
        let (rm, _) = unsupervised_risk_grad(
            &ModelParams::from_flat(classes, dim, &minus)?,
            &holdout,
            &weights,
        )?;
        let numeric = (rp - rm) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / analytic[i].abs().max(1e-8);
        worst = worst.max(rel);
    }
    println!(
        "{} parameters, worst relative error {worst:.2e}",
        flat.len()
    );
    Ok(())
}
