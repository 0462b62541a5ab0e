//! Assemble models, write them as matrix-market text with a metadata header
//! and read them back.
//!
//! ```text
//! cargo run --example assemble_models -- /tmp/models
//! ```

use std::path::PathBuf;

use piezolab::analysis::{assemble, spectrum_values};
use piezolab::io::{model_to_text, read_model, write_atomic};
use piezolab::params::CompositeParams;
use piezolab::{Scheme, Variant};

fn main() -> piezolab::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("piezolab-models"));
    std::fs::create_dir_all(&dir)?;
    let params = CompositeParams::reference();

    for (scheme, variant, n) in [
        (Scheme::Fem, Variant::Standard, 12),
        (Scheme::Fem, Variant::Paper, 12),
        (Scheme::Mfem, Variant::Standard, 12),
    ] {
        let model = assemble(&params, scheme, n, variant)?;
        let path = dir.join(format!("model_{}.mtx", model.label()));
        write_atomic(&path, model_to_text(&model)?.as_bytes())?;

        let back = read_model(&path)?;
        assert_eq!(back.a, model.a);
        let first = spectrum_values(&back)?.first_modes(2);
        println!(
            "{:<24} dim {:>3}  skewness {:.1e}  Im λ1,2 = {:.4}, {:.4}  -> {}",
            model.label(),
            model.dim(),
            model.skewness_residual(),
            first[0],
            first[1],
            path.display()
        );
    }
    Ok(())
}
