//! Regenerates the toy transformer golden file:
//! `cargo run -p eagle-core --example regen_golden`

use std::path::PathBuf;

use eagle_core::toy::{ToyConfig, ToyTransformer};
use eagle_core::CandidateScoreSet;

fn main() -> eagle_core::Result<()> {
    let model = ToyTransformer::new(ToyConfig::with_seed(42))?;
    let tokens = [11usize, 12, 13];
    let logits = model.forward_with_layers(&tokens, &CandidateScoreSet::digits(9)?)?;
    let golden = serde_json::json!({
        "seed": 42,
        "tokens": tokens,
        "layer_logits": logits.to_rows(),
    });
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/toy_seed42.json");
    std::fs::write(&path, serde_json::to_string_pretty(&golden).unwrap() + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}
