//! Pretrains a classifier, measures its confusion matrix on a holdout, and
//! recovers shifted label distributions from unlabeled batches.

use asap_lab::data::{split_pool, DatasetSpec};
use asap_lab::estimator::{estimate_confusion, pseudo_label_distribution, ShiftEstimator};
use asap_lab::model::{pretrain, PretrainConfig};
use asap_lab::shift::{interpolate, sample_batch, LabelDistribution};

fn main() -> asap_lab::Result<()> {
    let pool = DatasetSpec::synthetic(5, 10, 400, 8.0, 3).build()?;
    let (train, holdout) = split_pool(&pool, 0.25, 3)?;
    let model = pretrain(&train, &PretrainConfig::default(), 3)?.params;
    println!(
        "holdout accuracy {:.3}",
        model.accuracy(holdout.inputs(), holdout.labels())?
    );

    let confusion = estimate_confusion(&model, &holdout)?;
    let estimator = ShiftEstimator::new(&confusion, None)?;

    let start = LabelDistribution::uniform(5);
    let target = LabelDistribution::new(vec![0.6, 0.25, 0.1, 0.05, 0.0])?;
    for (i, alpha) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let truth = interpolate(&start, &target, alpha)?;
        let batch = sample_batch(&pool, &truth, 512, 11, i + 1)?;
        let pseudo = pseudo_label_distribution(&model, &batch.inputs)?;
        let estimate = estimator.estimate(&pseudo)?;
        println!(
            "alpha {alpha:.1}: true {:.3?}\n           est  {:.3?}  (L1 {:.3})",
            truth.as_slice(),
            estimate.as_slice(),
            estimate.distribution().l1_distance(&truth)
        );
    }
    Ok(())
}
