//! Excite the beam with a current burst, save a snapshot, then switch on
//! collocated feedback `u = −κ y` and watch the tip vibrations decay.
//!
//! ```text
//! cargo run --release --example closed_loop_snapshot -- [fem|mfem] [N] [gain]
//! ```

use piezolab::analysis::{assemble, closed_loop, rayleigh_damping, spectrum_values};
use piezolab::params::CompositeParams;
use piezolab::simulation::{run_snapshot_protocol, Snapshot, SnapshotProtocol, Trajectory};
use piezolab::{Scheme, Variant};

fn main() -> piezolab::Result<()> {
    let mut args = std::env::args().skip(1);
    let scheme: Scheme = args.next().as_deref().unwrap_or("fem").parse()?;
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let gain: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-6);

    let model = assemble(&CompositeParams::reference(), scheme, n, Variant::Standard)?;
    let protocol = SnapshotProtocol { gain, ..SnapshotProtocol::default() };
    let run = run_snapshot_protocol(&model, &protocol)?;

    let text = run.snapshot.to_text();
    assert_eq!(Snapshot::from_text(&text)?, run.snapshot);
    println!("snapshot at t = {} ({} values, provenance {})", run.snapshot.t, run.snapshot.state.len(), run.snapshot.provenance);

    let closed = &run.closed_loop;
    let env_v = Trajectory::envelope(&closed.v_tip, 10);
    let env_w = Trajectory::envelope(&closed.w_tip, 10);
    println!("\n{:>10} {:>12} {:>12} {:>12}", "window", "max |v(l)|", "max |w(l)|", "H");
    let stride = closed.energy.len() / 10;
    for i in 0..10 {
        println!("{i:>10} {:>12.4e} {:>12.4e} {:>12.4e}", env_v[i], env_w[i], closed.energy[i * stride]);
    }
    let (rv, rw) = run.envelope_ratios();
    println!("\nenvelope last/first: v {rv:.3e}, w {rw:.3e}");
    println!(
        "energy non-increasing: {}, worst per-step balance residual {:.2e}",
        closed.energy_monotone(1e-9),
        closed.diagnostics.max_balance_residual
    );

    let cl = closed_loop(&model, gain)?;
    let rep = spectrum_values(&cl)?;
    let damping = rayleigh_damping(&cl)?;
    println!(
        "closed-loop spectrum: max Re {:.2e} (ρ = {:.2e}), from eigenvectors {:.2e}",
        rep.max_re(),
        rep.spectral_radius,
        damping.max_re
    );
    Ok(())
}
