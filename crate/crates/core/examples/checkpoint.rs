//! Pretrains a model, saves it as a JSON checkpoint and reloads it.

use asap_lab::data::DatasetSpec;
use asap_lab::model::{pretrain, Checkpoint, PretrainConfig};

fn main() -> asap_lab::Result<()> {
    let pool = DatasetSpec::synthetic(3, 4, 100, 4.0, 1).build()?;
    let pre = pretrain(
        &pool,
        &PretrainConfig {
            epochs: 10,
            ..Default::default()
        },
        1,
    )?;
    let path = std::env::temp_dir().join(format!("asap-lab-ckpt-{}.json", std::process::id()));
    Checkpoint::new(&pre.params, 1).save(&path)?;
    let back = Checkpoint::load(&path)?.params()?;
    println!(
        "train accuracy {:.3}; reloaded identical: {}",
        pre.train_accuracy,
        back == pre.params
    );
    std::fs::remove_file(&path).ok();
    Ok(())
}
