//! Galerkin finite-element approximation with piecewise-linear hat functions.
//!
//! The mesh is uniform with `N` segments, nodes `z_k = kℓ/N`. The clamped
//! node `z = 0` is eliminated, so every field carries `N` nodal values. The
//! state is `(c¹, …, c⁶)` for `(v, w_z, Φ, v̇, ẇ_z, Φ̇)`.
//!
//! Two element-matrix sets are available, see [`Variant`]. The standard set
//! integrates the hat functions exactly (consistent mass, free-end boundary
//! row retained); the paper set reproduces the printed banded matrices entry
//! for entry.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{OutputMap, Scheme, StateSpaceModel, Variant};
use crate::params::{operator_coefficients, CompositeParams};

/// Global one-field matrices over the `N` free nodes.
#[derive(Clone, Debug)]
pub struct ElementMatrices {
    /// Mass, `∫ φ_i φ_j`.
    pub m1: DMatrix<f64>,
    /// First-derivative coupling, `∫ φ_i' φ_j`.
    pub k1: DMatrix<f64>,
    /// Stiffness, `∫ φ_i' φ_j'`.
    pub k2: DMatrix<f64>,
    /// Input column for the `Φ̇` block. Standard: load vector
    /// `−β/(2g_b) ∫ φ_i` (mapped through `M1⁻¹` on assembly). Paper: the
    /// constant `−β/(2g_b)` used directly.
    pub b1: DVector<f64>,
    pub h: f64,
    pub variant: Variant,
}

pub fn element_matrices(n: usize, params: &CompositeParams, variant: Variant) -> Result<ElementMatrices> {
    if n == 0 {
        return Err(Error::InvalidOrder(n));
    }
    let h = params.length / n as f64;
    let load = -params.beta / (2.0 * params.half_width);
    Ok(match variant {
        Variant::Standard => standard_matrices(n, h, load),
        Variant::Paper => paper_matrices(n, h, load),
    })
}

fn standard_matrices(n: usize, h: f64, load: f64) -> ElementMatrices {
    let me = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
    let ke = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
    // ∫ φ_a' φ_b over one element
    let k1e = [[-0.5, -0.5], [0.5, 0.5]];
    let mut m1 = DMatrix::zeros(n, n);
    let mut k1 = DMatrix::zeros(n, n);
    let mut k2 = DMatrix::zeros(n, n);
    let mut b1 = DVector::zeros(n);
    for e in 0..n {
        // element e spans nodes e and e+1; node 0 is eliminated, so free index = node − 1
        let nodes = [e.checked_sub(1), Some(e)];
        for (a, ia) in nodes.iter().enumerate() {
            let Some(i) = *ia else { continue };
            b1[i] += load * h / 2.0;
            for (b, ib) in nodes.iter().enumerate() {
                let Some(j) = *ib else { continue };
                m1[(i, j)] += me[a][b];
                k1[(i, j)] += k1e[a][b];
                k2[(i, j)] += ke[a][b];
            }
        }
    }
    ElementMatrices { m1, k1, k2, b1, h, variant: Variant::Standard }
}

fn paper_matrices(n: usize, h: f64, load: f64) -> ElementMatrices {
    let mut m1 = DMatrix::zeros(n, n);
    let mut k1 = DMatrix::zeros(n, n);
    let mut k2 = DMatrix::zeros(n, n);
    for i in 0..n {
        m1[(i, i)] = 4.0;
        k2[(i, i)] = 2.0;
        if i + 1 < n {
            m1[(i, i + 1)] = 1.0;
            m1[(i + 1, i)] = 1.0;
            k1[(i, i + 1)] = -1.0;
            k1[(i + 1, i)] = 1.0;
            k2[(i, i + 1)] = -1.0;
            k2[(i + 1, i)] = -1.0;
        }
    }
    // printed boundary rows "2, 4, 2 / 2, 4"
    if n >= 2 {
        m1[(n - 1, n - 2)] = 2.0;
    }
    if n >= 3 {
        m1[(n - 2, n - 3)] = 2.0;
        m1[(n - 2, n - 1)] = 2.0;
    }
    m1 *= h / 6.0;
    k1 *= 0.5;
    k2 /= h;
    let b1 = DVector::from_element(n, load);
    ElementMatrices { m1, k1, k2, b1, h, variant: Variant::Paper }
}

fn place(target: &mut DMatrix<f64>, bi: usize, bj: usize, n: usize, block: &DMatrix<f64>, scale: f64) {
    if scale == 0.0 {
        return;
    }
    let mut view = target.view_mut((bi * n, bj * n), (n, n));
    view.zip_apply(block, |t, s| *t += scale * s);
}

/// Energy Gram `E = blockdiag(K_f, M_f)` such that `H_N = ½ xᵀ E x`.
///
/// For the paper variant the nonsymmetric printed `M1` and `K2` are
/// symmetrised first.
pub fn energy_gram_fem(params: &CompositeParams, n: usize, variant: Variant) -> Result<DMatrix<f64>> {
    let em = element_matrices(n, params, variant)?;
    Ok(energy_gram_from(&em, params))
}

fn energy_gram_from(em: &ElementMatrices, p: &CompositeParams) -> DMatrix<f64> {
    let n = em.m1.nrows();
    let m = 0.5 * (&em.m1 + em.m1.transpose());
    let k = 0.5 * (&em.k2 + em.k2.transpose());
    let mut e = DMatrix::zeros(6 * n, 6 * n);
    place(&mut e, 0, 0, n, &k, p.c_a);
    place(&mut e, 0, 1, n, &k, -p.c_i0);
    place(&mut e, 1, 0, n, &k, -p.c_i0);
    place(&mut e, 1, 1, n, &k, p.c_i);
    place(&mut e, 2, 2, n, &k, p.area_p / p.mu);
    place(&mut e, 3, 3, n, &m, p.rho_a);
    place(&mut e, 3, 4, n, &m, -p.rho_i0);
    place(&mut e, 4, 3, n, &m, -p.rho_i0);
    place(&mut e, 4, 4, n, &m, p.rho_i);
    place(&mut e, 5, 5, n, &m, p.area_p / p.beta);
    e
}

/// `ẋ_N = A_N x_N + B_N u` in the block form
///
/// ```text
/// [    0          0        0        I         0       0     ]
/// [    0          0        0        0         I       0     ]
/// [    0          0        0        0         0       I     ]
/// [ −a41 M⁻¹K2   a42 M⁻¹K2  0       0         0    a46 M⁻¹K1 ]
/// [  a51 M⁻¹K2  −a52 M⁻¹K2  0       0         0   −a56 M⁻¹K1 ]
/// [    0          0  −a63 M⁻¹K2 −a64 M⁻¹K1ᵀ  a65 M⁻¹K1ᵀ  0     ]
/// ```
///
/// For the antisymmetric paper `K1`, `−K1ᵀ = K1` and the last row is the printed one.
pub fn assemble_fem(params: &CompositeParams, n: usize, variant: Variant) -> Result<StateSpaceModel> {
    let em = element_matrices(n, params, variant)?;
    let a_ij = operator_coefficients(params)?;
    let lu = em.m1.clone().lu();
    let solve = |rhs: &DMatrix<f64>| {
        lu.solve(rhs).ok_or_else(|| Error::Assembly("singular mass matrix M1".into()))
    };
    let mk2 = solve(&em.k2)?;
    let mk1 = solve(&em.k1)?;
    let mk1t = solve(&em.k1.transpose())?;

    let mut a = DMatrix::zeros(6 * n, 6 * n);
    let eye = DMatrix::identity(n, n);
    for f in 0..3 {
        place(&mut a, f, f + 3, n, &eye, 1.0);
    }
    place(&mut a, 3, 0, n, &mk2, -a_ij.a41);
    place(&mut a, 3, 1, n, &mk2, a_ij.a42);
    place(&mut a, 3, 5, n, &mk1, a_ij.a46);
    place(&mut a, 4, 0, n, &mk2, a_ij.a51);
    place(&mut a, 4, 1, n, &mk2, -a_ij.a52);
    place(&mut a, 4, 5, n, &mk1, -a_ij.a56);
    place(&mut a, 5, 2, n, &mk2, -a_ij.a63);
    place(&mut a, 5, 3, n, &mk1t, -a_ij.a64);
    place(&mut a, 5, 4, n, &mk1t, a_ij.a65);

    let b6 = match variant {
        Variant::Standard => lu
            .solve(&em.b1)
            .ok_or_else(|| Error::Assembly("singular mass matrix M1".into()))?,
        Variant::Paper => em.b1.clone(),
    };
    let mut b = DVector::zeros(6 * n);
    b.rows_mut(5 * n, n).copy_from(&b6);
    let e = energy_gram_from(&em, params);
    StateSpaceModel::new(a, b, e, Scheme::Fem, variant, n, OutputMap::default(), *params)
}
