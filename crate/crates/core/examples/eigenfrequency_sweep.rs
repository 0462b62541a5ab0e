//! First four eigenfrequencies of the FEM and MFEM models as the mesh is refined.
//!
//! Prints one row per order with both schemes side by side, then the
//! extrapolated limits next to the closed-form wave frequencies of the flux
//! field.
//!
//! ```text
//! cargo run --release --example eigenfrequency_sweep
//! ```

use piezolab::analysis::{convergence_sweep, electromagnetic_limit, richardson};
use piezolab::params::CompositeParams;
use piezolab::{Scheme, Variant};

fn main() -> piezolab::Result<()> {
    let params = CompositeParams::reference();
    let ns = [12, 16, 20, 24, 28, 32, 36, 40, 100];
    let rows = convergence_sweep(&[Scheme::Fem, Scheme::Mfem], &ns, Variant::Standard, &params)?;
    let im = |scheme: Scheme, n: usize, k: usize| {
        rows.iter().find(|r| r.scheme == scheme && r.n == n && r.k == k).map(|r| r.im_lambda).unwrap()
    };

    println!("{:>5} {:>20} {:>20} {:>20} {:>20}", "N", "Im λ1 fem/mfem", "Im λ2", "Im λ3", "Im λ4");
    for n in ns {
        print!("{n:>5}");
        for k in 1..=4 {
            print!(" {:>9.4} / {:<8.4}", im(Scheme::Fem, n, k), im(Scheme::Mfem, n, k));
        }
        println!();
    }

    println!("\nlimits (N = 40, 100 extrapolated, O(h²))");
    for k in 1..=4 {
        let exact = electromagnetic_limit(&params, k);
        let fem = richardson(40, im(Scheme::Fem, 40, k), 100, im(Scheme::Fem, 100, k));
        let mfem = richardson(40, im(Scheme::Mfem, 40, k), 100, im(Scheme::Mfem, 100, k));
        println!(
            "  k={k}: exact {exact:.5}  fem {fem:.5} ({:+.1e})  mfem {mfem:.5} ({:+.1e})",
            fem / exact - 1.0,
            mfem / exact - 1.0
        );
    }
    Ok(())
}
