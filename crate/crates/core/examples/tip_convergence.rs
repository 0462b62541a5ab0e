//! Tip deflections under the current burst for increasing mesh orders.
//!
//! Writes one CSV per scheme with `t` and `w(ℓ, t)` for every order and an SVG
//! overlay of the curves.

use std::path::PathBuf;

use nalgebra::DVector;
use piezolab::analysis::assemble;
use piezolab::io::write_atomic;
use piezolab::params::CompositeParams;
use piezolab::plot::{Figure, Style};
use piezolab::simulation::{integrate, Input, IntegrationSpec};
use piezolab::{Scheme, Variant};

fn main() -> piezolab::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("piezolab-tips"));
    std::fs::create_dir_all(&dir)?;
    let params = CompositeParams::reference();
    let ns = [12, 16, 20, 24];

    for scheme in [Scheme::Fem, Scheme::Mfem] {
        let mut runs = Vec::new();
        for n in ns {
            let model = assemble(&params, scheme, n, Variant::Standard)?;
            let spec = IntegrationSpec::new(0.0, 40.0, 5e-3).recording_every(10);
            runs.push(integrate(&model, &Input::default_burst(), &DVector::zeros(model.dim()), spec)?);
        }
        for pair in runs.windows(2) {
            let diff = pair[0].w_tip.iter().zip(&pair[1].w_tip).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            println!("{scheme} N={} -> N={}: max |Δw(l)| = {diff:.3e}", pair[0].n_elements, pair[1].n_elements);
        }

        let mut csv = String::from("t");
        for n in ns {
            csv.push_str(&format!(",w_tip_N{n}"));
        }
        csv.push('\n');
        for i in 0..runs[0].times.len() {
            csv.push_str(&runs[0].times[i].to_string());
            for r in &runs {
                csv.push_str(&format!(",{}", r.w_tip[i]));
            }
            csv.push('\n');
        }
        write_atomic(&dir.join(format!("tip_{scheme}.csv")), csv.as_bytes())?;

        let mut fig = Figure::new(&format!("{scheme} tip deflection"), "t", "w(l, t)");
        for r in &runs {
            let pts = r.times.iter().copied().zip(r.w_tip.iter().copied()).collect();
            fig = fig.with_series(&format!("N = {}", r.n_elements), pts, Style::Line);
        }
        write_atomic(&dir.join(format!("tip_{scheme}.svg")), fig.to_svg().as_bytes())?;
    }
    println!("written to {}", dir.display());
    Ok(())
}
