//! Time-domain behaviour under refinement, deflection reconstruction and
//! long open-loop runs.

use std::f64::consts::PI;

use nalgebra::DVector;
use piezolab::analysis::assemble;
use piezolab::params::CompositeParams;
use piezolab::simulation::{integrate, reconstruct_state, Input, IntegrationSpec};
use piezolab::{Scheme, StateSpaceModel, Variant};

fn model(scheme: Scheme, n: usize) -> StateSpaceModel {
    assemble(&CompositeParams::reference(), scheme, n, Variant::Standard).unwrap()
}

/// Tip trajectories `(v(ℓ, t), w(ℓ, t))` under the default burst.
fn driven_tips(scheme: Scheme, n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = model(scheme, n);
    let traj = integrate(&m, &Input::default_burst(), &DVector::zeros(m.dim()), IntegrationSpec::new(0.0, 30.0, 5e-3))
        .unwrap();
    (traj.v_tip, traj.w_tip)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn tip_response_converges_under_refinement() {
    for scheme in [Scheme::Fem, Scheme::Mfem] {
        let runs: Vec<(Vec<f64>, Vec<f64>)> = [12, 16, 20, 24].iter().map(|&n| driven_tips(scheme, n)).collect();
        let scale_v = runs[3].0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let scale_w = runs[3].1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(scale_v > 0.0 && scale_w > 0.0);
        let dv: Vec<f64> = runs.windows(2).map(|w| max_diff(&w[0].0, &w[1].0) / scale_v).collect();
        let dw: Vec<f64> = runs.windows(2).map(|w| max_diff(&w[0].1, &w[1].1) / scale_w).collect();
        for d in [&dv, &dw] {
            assert!(d[1] < d[0] && d[2] < d[1], "{scheme}: successive differences {d:?}");
        }
        assert!(dv[2] < 0.05 && dw[2] < 0.05, "{scheme}: {dv:?} {dw:?}");
    }
}

#[test]
fn schemes_agree_at_moderate_order() {
    let (fv, fw) = driven_tips(Scheme::Fem, 24);
    let (mv, mw) = driven_tips(Scheme::Mfem, 24);
    let scale = |s: &[f64]| s.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(max_diff(&fv, &mv) / scale(&fv) < 0.05);
    assert!(max_diff(&fw, &mw) / scale(&fw) < 0.05);
}

/// State whose slope field is `w_z = sin(πz/2ℓ)` and `v = z²`.
fn smooth_state(m: &StateSpaceModel) -> DVector<f64> {
    let n = m.n_elements;
    let l = m.params.length;
    let h = l / n as f64;
    let slope = |z: f64| (PI * z / (2.0 * l)).sin();
    let v = |z: f64| z * z;
    let mut x = DVector::zeros(m.dim());
    for k in 0..n {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        match m.scheme {
            Scheme::Fem => {
                x[m.ordering.index(n, 0, k)] = v(b);
                x[m.ordering.index(n, 1, k)] = slope(b);
            }
            Scheme::Mfem => {
                x[m.ordering.index(n, 0, k)] = v(b) - v(a);
                x[m.ordering.index(n, 1, k)] = slope(b) - slope(a);
            }
        }
    }
    x
}

#[test]
fn reconstructed_deflection_matches_exact_profile() {
    for scheme in [Scheme::Fem, Scheme::Mfem] {
        let mut errors = Vec::new();
        for n in [8, 16, 32] {
            let m = model(scheme, n);
            let d = reconstruct_state(&m, &smooth_state(&m)).unwrap();
            let l = m.params.length;
            let exact_w = |z: f64| 2.0 * l / PI * (1.0 - (PI * z / (2.0 * l)).cos());
            let err = d.z.iter().zip(&d.w).map(|(z, w)| (w - exact_w(*z)).abs()).fold(0.0, f64::max);
            errors.push(err);
            for (z, v) in d.z.iter().zip(&d.v) {
                assert!((v - z * z).abs() < 1e-14);
            }
            // finite differences of w recover the slope to first order
            let h = l / n as f64;
            for k in 0..n {
                let fd = (d.w[k + 1] - d.w[k]) / h;
                assert!((fd - d.w_z[k]).abs() <= 2.0 * h, "{scheme} N={n} k={k}");
            }
        }
        // second-order trapezium: halving h divides the error by about 4
        assert!(errors[0] / errors[1] > 3.5 && errors[1] / errors[2] > 3.5, "{scheme}: {errors:?}");
    }
}

#[test]
fn open_loop_energy_is_conserved() {
    for scheme in [Scheme::Fem, Scheme::Mfem] {
        let m = model(scheme, 20);
        let x0 = smooth_state(&m);
        let traj = integrate(&m, &Input::Zero, &x0, IntegrationSpec::new(0.0, 100.0, 1e-2).recording_every(50)).unwrap();
        assert_eq!(traj.diagnostics.steps, 10_000);
        let h0 = m.hamiltonian(&x0);
        let worst = traj.states.iter().map(|x| (m.hamiltonian(x) - h0).abs() / h0).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{scheme}: {worst:e}");
        assert!(traj.diagnostics.energy_drift <= 1e-10);
    }
}

#[test]
fn driven_energy_follows_supplied_power() {
    // with y = Bᵀ E x the supplied power is u·y; the midpoint rule balances it per step
    let m = model(Scheme::Mfem, 10);
    let traj = integrate(&m, &Input::default_burst(), &DVector::zeros(m.dim()), IntegrationSpec::new(0.0, 20.0, 1e-2))
        .unwrap();
    assert!(traj.diagnostics.max_balance_residual < 1e-8, "{}", traj.diagnostics.max_balance_residual);
    let input = Input::default_burst();
    let mut supplied = 0.0;
    for k in 1..traj.times.len() {
        let tm = 0.5 * (traj.times[k - 1] + traj.times[k]);
        let ym = 0.5 * (traj.outputs[k - 1] + traj.outputs[k]);
        supplied += (traj.times[k] - traj.times[k - 1]) * input.value(tm) * ym;
    }
    let gained = traj.energy.last().unwrap() - traj.energy[0];
    assert!((gained - supplied).abs() <= 1e-8 * gained.abs().max(supplied.abs()), "{gained} vs {supplied}");
}
