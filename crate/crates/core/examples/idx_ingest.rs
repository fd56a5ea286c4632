//! Writes a tiny IDX image/label pair to a temp directory, loads it back as a
//! labeled pool, and shows what a malformed file reports.

use asap_lab::data::{load_idx_pool, parse_idx, IdxTensor};

fn main() -> asap_lab::Result<()> {
    let n = 12;
    let images = IdxTensor {
        dims: vec![n, 2, 2],
        data: (0..n * 4).map(|i| (i * 7 % 256) as u8).collect(),
    };
    let labels = IdxTensor {
        dims: vec![n],
        data: (0..n).map(|i| (i % 3) as u8).collect(),
    };

    let dir = std::env::temp_dir().join(format!("asap-lab-idx-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let (img_path, lbl_path) = (dir.join("images.idx"), dir.join("labels.idx"));
    std::fs::write(&img_path, images.to_bytes()).expect("write images");
    std::fs::write(&lbl_path, labels.to_bytes()).expect("write labels");

    let pool = load_idx_pool(&img_path, &lbl_path, 3, 3)?;
    println!(
        "{} rows, dim {}, class counts {:?}",
        pool.len(),
        pool.dim(),
        pool.class_counts()
    );
    println!("first row {:.3?}", pool.input(0));

    let mut broken = labels.to_bytes();
    broken.pop();
    match parse_idx(&broken) {
        Err(e) => println!("truncated file: {e}"),
        Ok(_) => println!("truncated file parsed?"),
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
