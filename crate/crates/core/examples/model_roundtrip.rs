//! Save a model to the versioned JSON format, load it back, and show that a
//! file with mismatched shapes is refused.
//!
//! `cargo run --example model_roundtrip`

use fallwatch::network::{predict, Architecture, LstmModel};
use fallwatch::pruning::magnitude_prune;
use fallwatch::runtime::{load_model, save_model, ModelFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let model = LstmModel::new(Architecture::default(), 0.2, 42)?;
    let compressed = magnitude_prune(&model, 0.5)?;

    let path = dir.path().join("pruned.fwm.json");
    let file = ModelFile {
        mask: Some(compressed.mask.clone()),
        provenance: Some(compressed.provenance.clone()),
        ..ModelFile::new(compressed.model.clone())
    };
    save_model(&file, &path)?;
    let bytes = std::fs::metadata(&path)?.len();
    let loaded = load_model(&path)?;
    println!("saved {bytes} bytes, provenance: {}", loaded.provenance.as_deref().unwrap_or("-"));

    let window = vec![[0.5; 6]; model.arch.window];
    let before = predict(&compressed.model, &window)?;
    let after = predict(&loaded.model, &window)?;
    println!("p(fall) before {:.17}, after {:.17}", before[1], after[1]);

    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    doc["architecture"]["units"] = serde_json::json!([64, 31]);
    let bad = dir.path().join("bad.fwm.json");
    std::fs::write(&bad, doc.to_string())?;
    match load_model(&bad) {
        Ok(_) => println!("unexpectedly loaded"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
