//! Mixed finite-element (port-Hamiltonian) approximation.
//!
//! The beam is rewritten in canonical coordinates `x = (q_z, p)` with
//! `q_z = (v_z, w_zz, Φ_z)` and momenta `p` from the Legendre transformation,
//! so that `ẋ = J ∂_z (Q x) + B^e u` with a constant co-energy matrix `Q`.
//! Each element `[a, b]` keeps the integral of `x` as its state, represents
//! efforts linearly and exposes boundary flows and efforts as ports. The
//! elements are then interconnected by equating flows and efforts at shared
//! nodes, and the clamped/free ends close the chain.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{OutputMap, Scheme, StateSpaceModel, Variant};
use crate::params::{CompositeParams, PointState};

/// Canonical momenta for the given strains and velocities.
///
/// `p₁ = ρ_A v̇ − ρ_{I0} ẇ_z`, `p₂ = ρ_I ẇ_z − ρ_{I0} v̇`, and
/// `p₃ = (A_p/β) Φ̇ + γ (A_p v_z − I_0 w_zz)`, where the magnetic momentum
/// carries the strain coupling of the Lagrangian.
pub fn legendre_momenta(params: &CompositeParams, x: &PointState) -> [f64; 3] {
    let p = params;
    let [vz, wzz, _] = x.strain;
    let [vt, wzt, phit] = x.velocity;
    [
        p.rho_a * vt - p.rho_i0 * wzt,
        p.rho_i * wzt - p.rho_i0 * vt,
        p.area_p / p.beta * phit + p.gamma * (p.area_p * vz - p.i0 * wzz),
    ]
}

/// Symmetric positive definite `Q` with `H(q_z, p) = ½ xᵀ Q x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoenergyMatrix {
    pub q: Matrix6<f64>,
}

impl CoenergyMatrix {
    pub fn q1(&self) -> Matrix3<f64> {
        self.q.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn q2(&self) -> Matrix3<f64> {
        self.q.fixed_view::<3, 3>(0, 3).into_owned()
    }

    pub fn q4(&self) -> Matrix3<f64> {
        self.q.fixed_view::<3, 3>(3, 3).into_owned()
    }
}

/// Derives `Q` from the Legendre map instead of transcribing it.
///
/// Columns of the velocity-to-momentum map `M` and the strain-to-momentum
/// map `Γ` are read off [`legendre_momenta`]; then `q̇ = M⁻¹(p − Γ q_z)` and
/// the energy `½ q_zᵀ K q_z + ½ q̇ᵀ M q̇` becomes `½ xᵀ Tᵀ diag(K, M) T x`.
pub fn derive_q(params: &CompositeParams) -> Result<CoenergyMatrix> {
    params.validate()?;
    let p = params;
    let mut mass = Matrix3::zeros();
    let mut gamma_map = Matrix3::zeros();
    for j in 0..3 {
        let mut velocity = [0.0; 3];
        velocity[j] = 1.0;
        let col = legendre_momenta(p, &PointState { strain: [0.0; 3], velocity });
        mass.set_column(j, &col.into());
        let mut strain = [0.0; 3];
        strain[j] = 1.0;
        let col = legendre_momenta(p, &PointState { strain, velocity: [0.0; 3] });
        gamma_map.set_column(j, &col.into());
    }
    let mass_inv = mass.try_inverse().ok_or(Error::NotPositiveDefinite {
        form: "velocity-to-momentum",
        value: mass.determinant(),
    })?;
    let stiffness = Matrix3::new(
        p.c_a, -p.c_i0, 0.0, //
        -p.c_i0, p.c_i, 0.0, //
        0.0, 0.0, p.area_p / p.mu,
    );
    let mut t = Matrix6::zeros();
    t.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
    t.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-mass_inv * gamma_map));
    t.fixed_view_mut::<3, 3>(3, 3).copy_from(&mass_inv);
    let mut hd = Matrix6::zeros();
    hd.fixed_view_mut::<3, 3>(0, 0).copy_from(&stiffness);
    hd.fixed_view_mut::<3, 3>(3, 3).copy_from(&mass);
    let q = t.transpose() * hd * t;
    Ok(CoenergyMatrix { q: 0.5 * (q + q.transpose()) })
}

/// One printed entry of the co-energy blocks next to the derived value.
#[derive(Clone, Debug, Serialize)]
pub struct EntryCheck {
    pub entry: String,
    pub printed: f64,
    pub derived: f64,
    pub relative_difference: f64,
    pub matches: bool,
    /// Whether the printed expression is unambiguous (consistent with a symmetric `Q`).
    pub unambiguous: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct QMatrixReport {
    pub derived: Vec<Vec<f64>>,
    /// Cholesky factorisation succeeded.
    pub positive_definite: bool,
    pub eigenvalues: Vec<f64>,
    pub checks: Vec<EntryCheck>,
}

impl QMatrixReport {
    pub fn unambiguous_all_match(&self) -> bool {
        self.checks.iter().filter(|c| c.unambiguous).all(|c| c.matches)
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &EntryCheck> {
        self.checks.iter().filter(|c| !c.matches)
    }
}

/// Compares the derived `Q` with the printed block expressions entry by entry.
pub fn q_matrix_report(params: &CompositeParams) -> Result<QMatrixReport> {
    let q = derive_q(params)?;
    let p = params;
    let (g, b) = (p.gamma, p.beta);
    let det = p.mass_determinant();
    // (block, row, col, printed value, unambiguous)
    let printed: Vec<(&str, usize, usize, f64, bool)> = vec![
        ("Q1", 0, 0, p.c_a + g * g * b * p.area_p, true),
        ("Q1", 0, 1, -(p.c_i + g * g * b * p.i0), false),
        ("Q1", 0, 2, 0.0, true),
        ("Q1", 1, 0, -(p.c_i + g * g * b * p.i0), false),
        ("Q1", 1, 1, p.c_i + g * g * b * p.i0 * p.i0 / p.area_p, true),
        ("Q1", 1, 2, 0.0, true),
        ("Q1", 2, 0, 0.0, true),
        ("Q1", 2, 1, 0.0, true),
        ("Q1", 2, 2, p.area_p / p.mu, true),
        ("Q2", 0, 0, 0.0, true),
        ("Q2", 0, 1, 0.0, true),
        ("Q2", 0, 2, -g * b, true),
        ("Q2", 1, 0, 0.0, true),
        ("Q2", 1, 1, 0.0, true),
        ("Q2", 1, 2, g * b * p.i0 / p.area_p, true),
        ("Q2", 2, 0, 0.0, true),
        ("Q2", 2, 1, 0.0, true),
        ("Q2", 2, 2, 0.0, true),
        ("Q4", 0, 0, p.rho_i / det, true),
        ("Q4", 0, 1, p.rho_i / det, false),
        ("Q4", 0, 2, 0.0, true),
        ("Q4", 1, 0, p.rho_i / (p.rho_i0 * p.rho_i - p.rho_i0 * p.rho_i0), false),
        ("Q4", 1, 1, p.rho_a / det, true),
        ("Q4", 1, 2, 0.0, true),
        ("Q4", 2, 0, 0.0, true),
        ("Q4", 2, 1, 0.0, true),
        ("Q4", 2, 2, b / p.area_p, true),
    ];
    let checks = printed
        .into_iter()
        .map(|(block, i, j, value, unambiguous)| {
            let derived = match block {
                "Q1" => q.q[(i, j)],
                "Q2" => q.q[(i, j + 3)],
                _ => q.q[(i + 3, j + 3)],
            };
            let scale = value.abs().max(derived.abs());
            let rel = if scale == 0.0 { 0.0 } else { (value - derived).abs() / scale };
            EntryCheck {
                entry: format!("{block}({},{})", i + 1, j + 1),
                printed: value,
                derived,
                relative_difference: rel,
                matches: rel <= 1e-12,
                unambiguous,
            }
        })
        .collect();
    let mut eigenvalues: Vec<f64> = q.q.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(QMatrixReport {
        positive_definite: q.q.cholesky().is_some(),
        derived: (0..6).map(|i| (0..6).map(|j| q.q[(i, j)]).collect()).collect(),
        eigenvalues,
        checks,
    })
}

/// Constant matrices of one element `[a, b]`.
///
/// Local dynamics: `ẋ = J_ab ē + B_ab u + (b−a) B^e u_in`,
/// `y = B_abᵀ ē + D_ab u`, with `ē = Q_ab x` the effort average,
/// port inputs `u = (e_b, f_a)` and outputs `y = (f_b, −e_a)`.
#[derive(Clone, Debug)]
pub struct ElementPort {
    pub j_ab: Matrix6<f64>,
    pub q_ab: Matrix6<f64>,
    pub b_ab: Matrix6<f64>,
    pub d_ab: Matrix6<f64>,
    pub b_e: Vector6<f64>,
    pub length: f64,
}

fn skew_blocks(scale: f64, upper_sign: f64) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        m[(i, i + 3)] = upper_sign * scale;
        m[(i + 3, i)] = -upper_sign * scale;
    }
    m
}

pub fn element_port(params: &CompositeParams, h: f64) -> Result<ElementPort> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("element length {h} must be > 0")));
    }
    let q = derive_q(params)?;
    let mut b_e = Vector6::zeros();
    b_e[5] = -params.piezo_thickness;
    Ok(ElementPort {
        j_ab: skew_blocks(2.0, 1.0),
        q_ab: q.q / h,
        b_ab: skew_blocks(2.0, -1.0),
        d_ab: skew_blocks(1.0, -1.0),
        b_e,
        length: h,
    })
}

/// Homogeneous boundary closure of the cantilever.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryPortSpec {
    /// `f^{B1,B2,B3}_0 = 0` at the clamped end.
    pub clamped_flows: [bool; 3],
    /// `e^{B1,B2,B3}_ℓ = 0` at the free end.
    pub free_efforts: [bool; 3],
}

impl Default for BoundaryPortSpec {
    fn default() -> Self {
        Self { clamped_flows: [true; 3], free_efforts: [true; 3] }
    }
}

impl BoundaryPortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clamped_flows.iter().all(|&c| c) && self.free_efforts.iter().all(|&c| c) {
            Ok(())
        } else {
            Err(Error::Assembly(
                "boundary closure needs all three clamped-end flows and all three free-end efforts".into(),
            ))
        }
    }
}

/// Port interconnection matrix `P` with `u = P y` over all elements.
///
/// `e_b` of element `j` is the `e_a` of element `j+1`; `f_a` of element `j`
/// is the `f_b` of element `j−1`. The closure supplies zero for `e_b` of the
/// last element and `f_a` of the first one. `P` is skew, so the
/// interconnection exchanges power without producing or absorbing any.
pub fn interconnection_matrix(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(6 * n, 6 * n);
    for j in 0..n {
        for i in 0..3 {
            if j + 1 < n {
                // u_j.e_b = e_a(j+1) = −y_{j+1}[3 + i]
                p[(6 * j + i, 6 * (j + 1) + 3 + i)] = -1.0;
            }
            if j > 0 {
                // u_j.f_a = f_b(j−1) = y_{j−1}[i]
                p[(6 * j + 3 + i, 6 * (j - 1) + i)] = 1.0;
            }
        }
    }
    p
}

/// Global assembly.
///
/// `Variant::Standard` solves the interconnection exactly,
/// `u = (I − P D)⁻¹ P Bᵀ ē`. `Variant::Paper` keeps only the first two terms
/// of that Neumann series, `(I + P D) P`, which is the nearest plus
/// second-neighbour stencil of the printed global matrix.
pub fn assemble_mfem(params: &CompositeParams, n: usize, variant: Variant) -> Result<StateSpaceModel> {
    assemble_mfem_with(params, n, variant, &BoundaryPortSpec::default())
}

pub fn assemble_mfem_with(
    params: &CompositeParams,
    n: usize,
    variant: Variant,
    boundary: &BoundaryPortSpec,
) -> Result<StateSpaceModel> {
    if n == 0 {
        return Err(Error::InvalidOrder(n));
    }
    boundary.validate()?;
    let h = params.length / n as f64;
    let port = element_port(params, h)?;
    let dim = 6 * n;
    let mut j_blk = DMatrix::zeros(dim, dim);
    let mut b_blk = DMatrix::zeros(dim, dim);
    let mut d_blk = DMatrix::zeros(dim, dim);
    let mut q_blk = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    for k in 0..n {
        let o = 6 * k;
        j_blk.view_mut((o, o), (6, 6)).copy_from(&port.j_ab);
        b_blk.view_mut((o, o), (6, 6)).copy_from(&port.b_ab);
        d_blk.view_mut((o, o), (6, 6)).copy_from(&port.d_ab);
        q_blk.view_mut((o, o), (6, 6)).copy_from(&port.q_ab);
        b.rows_mut(o, 6).copy_from(&(port.b_e * h));
    }
    let p = interconnection_matrix(n);
    let pd = &p * &d_blk;
    let resolvent = match variant {
        Variant::Standard => {
            let m = DMatrix::identity(dim, dim) - &pd;
            m.lu().solve(&p).ok_or_else(|| {
                Error::Assembly("port elimination is rank deficient (I − P D singular)".into())
            })?
        }
        Variant::Paper => (DMatrix::identity(dim, dim) + &pd) * &p,
    };
    let j_global = &j_blk + &b_blk * resolvent * b_blk.transpose();
    let a = &j_global * &q_blk;
    StateSpaceModel::new(a, b, q_blk, Scheme::Mfem, variant, n, OutputMap::default(), *params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::skewness_residual;
    use crate::params::continuous_energy_density;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> CompositeParams {
        CompositeParams::reference()
    }

    #[test]
    fn momenta_examples() {
        let params = p();
        assert_eq!(legendre_momenta(&params, &PointState::default()), [0.0; 3]);
        let phi = PointState { velocity: [0.0, 0.0, 1.0], ..Default::default() };
        assert_eq!(legendre_momenta(&params.with_gamma(0.0), &phi)[2], params.area_p / params.beta);
        let v = PointState { velocity: [1.0, 0.0, 0.0], ..Default::default() };
        let m = legendre_momenta(&params, &v);
        assert_relative_eq!(m[0], 25.2, max_relative = 1e-14);
        assert_relative_eq!(m[1], -0.076, max_relative = 1e-14);
        assert_eq!(m[2], 0.0);
        let vz = PointState { strain: [1.0, 0.0, 0.0], ..Default::default() };
        assert_relative_eq!(legendre_momenta(&params, &vz)[2], 2e-6, max_relative = 1e-12);
    }

    #[test]
    fn q_reference_properties() {
        let q = derive_q(&p()).unwrap();
        assert_eq!(q.q, q.q.transpose());
        assert!(q.q.cholesky().is_some());
        assert!(q.q.symmetric_eigenvalues().iter().all(|&l| l > 0.0));
        assert_relative_eq!(q.q[(2, 2)], p().area_p / p().mu, max_relative = 1e-14);
    }

    #[test]
    fn q_gamma_zero() {
        let params = p().with_gamma(0.0);
        let q = derive_q(&params).unwrap();
        assert_eq!(q.q2(), Matrix3::zeros());
        let d = params.mass_determinant();
        let q4 = q.q4();
        assert_relative_eq!(q4[(0, 0)], params.rho_i / d, max_relative = 1e-13);
        assert_relative_eq!(q4[(0, 1)], params.rho_i0 / d, max_relative = 1e-13);
        assert_relative_eq!(q4[(1, 1)], params.rho_a / d, max_relative = 1e-13);
        assert_relative_eq!(q4[(2, 2)], params.beta / params.area_p, max_relative = 1e-13);
        assert_eq!(q4[(0, 2)], 0.0);
    }

    #[test]
    fn printed_unambiguous_entries_match() {
        let report = q_matrix_report(&p()).unwrap();
        assert!(report.unambiguous_all_match());
        let flagged: Vec<_> = report.mismatches().map(|c| c.entry.clone()).collect();
        assert_eq!(flagged, ["Q1(1,2)", "Q1(2,1)", "Q4(1,2)", "Q4(2,1)"]);
    }

    #[test]
    fn q_reproduces_energy_density() {
        let params = p();
        let q = derive_q(&params).unwrap();
        let s = PointState { strain: [0.3, -2.0, 5.0], velocity: [1.5, 0.7, -40.0] };
        let m = legendre_momenta(&params, &s);
        let x = Vector6::new(s.strain[0], s.strain[1], s.strain[2], m[0], m[1], m[2]);
        let h = 0.5 * x.dot(&(q.q * x));
        assert_relative_eq!(h, continuous_energy_density(&s, &params), max_relative = 1e-10);
    }

    #[test]
    fn port_examples() {
        let port = element_port(&p(), 1.0).unwrap();
        assert_eq!(port.q_ab, derive_q(&p()).unwrap().q);
        assert_eq!(port.j_ab + port.j_ab.transpose(), Matrix6::zeros());
        assert_eq!(port.b_e[5], -0.01);
        assert!(element_port(&p(), 0.0).is_err());
    }

    #[test]
    fn interconnection_is_skew_and_interfaces_cancel() {
        let n = 5;
        let pm = interconnection_matrix(n);
        assert_eq!(&pm + pm.transpose(), DMatrix::zeros(6 * n, 6 * n));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = DVector::from_fn(6 * n, |_, _| rng.gen_range(-1.0..1.0));
        let u = &pm * &y;
        for j in 0..n - 1 {
            let mut s = 0.0;
            for i in 0..3 {
                s += u[6 * j + i] * y[6 * j + i] + u[6 * (j + 1) + 3 + i] * y[6 * (j + 1) + 3 + i];
            }
            assert!(s.abs() < 1e-15, "interface {j}: {s}");
        }
    }

    #[test]
    fn gamma_zero_blocks_decouple() {
        let m = assemble_mfem(&p().with_gamma(0.0), 3, Variant::Standard).unwrap();
        let mech = [0, 1, 3, 4];
        let em = [2, 5];
        for ej in 0..3 {
            for ek in 0..3 {
                for &r in &em {
                    for &c in &mech {
                        assert_eq!(m.a[(6 * ej + r, 6 * ek + c)], 0.0);
                        assert_eq!(m.a[(6 * ej + c, 6 * ek + r)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn resolved_interconnection_is_energy_skew() {
        for n in [1, 2, 3, 7, 16] {
            let m = assemble_mfem(&p(), n, Variant::Standard).unwrap();
            let r = skewness_residual(&m.e, &m.a);
            assert!(r < 1e-10, "N={n}: {r:e}");
        }
    }

    #[test]
    fn incomplete_boundary_rejected() {
        let spec = BoundaryPortSpec { clamped_flows: [true, false, true], ..Default::default() };
        assert!(matches!(assemble_mfem_with(&p(), 3, Variant::Standard, &spec), Err(Error::Assembly(_))));
    }

    proptest! {
        #[test]
        fn q_positive_definite_for_valid_params(gamma in 0.0f64..1e-2, beta in 1e5f64..1e7, mu in 1e5f64..1e7) {
            let mut params = p();
            params.gamma = gamma;
            params.beta = beta;
            params.mu = mu;
            let q = derive_q(&params).unwrap();
            prop_assert!(q.q.cholesky().is_some());
        }
    }
}
