//! The MFEM co-energy matrix obtained from the Legendre map, compared with
//! the closed-form entries of the printed form.

use piezolab::io::q_report_text;
use piezolab::mfem::{derive_q, element_port, q_matrix_report};
use piezolab::params::CompositeParams;

fn main() -> piezolab::Result<()> {
    let params = CompositeParams::reference();
    let report = q_matrix_report(&params)?;
    print!("{}", q_report_text(&report));

    let q = derive_q(&params)?;
    println!("\nQ1 (strain block)\n{:.6e}", q.q1());
    println!("Q4 (momentum block)\n{:.6e}", q.q4());

    let port = element_port(&params, params.length / 10.0)?;
    println!("element input column b_e = {:?}", port.b_e.as_slice());
    for m in report.mismatches() {
        println!("differs: {} printed {:e} derived {:e}", m.entry, m.printed, m.derived);
    }
    Ok(())
}
