//! Dense linear-algebra kernels shared by the analysis and simulation layers.
//!
//! All routines work on `nalgebra::DMatrix<f64>`. The eigensolver runs the
//! real Schur factorisation (Hessenberg reduction + shifted QR) from nalgebra
//! and recovers eigenvectors by back-substitution on the quasi-triangular
//! factor. Models are badly scaled in SI units (input entries of order 1e6,
//! mass entries of order 1e-5), so most callers first move to energy-balanced
//! coordinates with [`Balancing`].

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Diagonal similarity `x̃ = S x` with `S = diag(E)^{1/2}`.
///
/// In these coordinates the energy is `½ x̃ᵀ Ẽ x̃` with `Ẽ` having a unit
/// diagonal, which keeps every entry of `Ã = S A S⁻¹` at a comparable scale.
#[derive(Clone, Debug)]
pub struct Balancing {
    pub scale: DVector<f64>,
}

impl Balancing {
    pub fn from_gram(e: &DMatrix<f64>) -> Result<Self> {
        let d = e.diagonal();
        if let Some(i) = d.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NotPositiveDefinite { form: "energy Gram", value: d[i] });
        }
        Ok(Self { scale: d.map(f64::sqrt) })
    }

    pub fn identity(n: usize) -> Self {
        Self { scale: DVector::from_element(n, 1.0) }
    }

    /// `S A S⁻¹`
    pub fn similarity(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| self.scale[i] * a[(i, j)] / self.scale[j])
    }

    /// `S⁻¹ E S⁻¹`, the Gram matrix in balanced coordinates.
    pub fn congruence(&self, e: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(e.nrows(), e.ncols(), |i, j| e[(i, j)] / (self.scale[i] * self.scale[j]))
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.scale)
    }

    pub fn backward(&self, y: &DVector<f64>) -> DVector<f64> {
        y.component_div(&self.scale)
    }
}

/// `‖E A + Aᵀ E‖_F / (2 ‖E A‖_F)`, zero for skew `E A` and one for symmetric.
pub fn skewness_residual(e: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let ea = e * a;
    let s = &ea + ea.transpose();
    let scale = 2.0 * ea.norm();
    if scale == 0.0 {
        0.0
    } else {
        s.norm() / scale
    }
}

/// Infinity-norm condition estimate from an explicit inverse; only used to
/// decorate error messages, so accuracy is secondary.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let inf_norm = |x: &DMatrix<f64>| {
        (0..x.nrows())
            .map(|i| x.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match m.clone().try_inverse() {
        Some(inv) => inf_norm(m) * inf_norm(&inv),
        None => f64::INFINITY,
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: C64,
    pub vector: DVector<C64>,
    /// `‖A v − λ v‖ / (‖A‖_F ‖v‖)`
    pub residual: f64,
}

fn schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    let max_iterations = 200 * n.max(1);
    let s = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, max_iterations)
        .ok_or(Error::EigenNoConvergence { n, max_iterations })?;
    Ok(s.unpack())
}

/// Diagonal blocks of a real quasi-triangular matrix as `(start, size)`.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_eigenvalues(t: &DMatrix<f64>, (k, size): (usize, usize)) -> Vec<C64> {
    if size == 1 {
        return vec![C64::new(t[(k, k)], 0.0)];
    }
    let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let half_trace = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        vec![C64::new(half_trace - r, 0.0), C64::new(half_trace + r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        vec![C64::new(half_trace, r), C64::new(half_trace, -r)]
    }
}

/// Eigenvalues of a square matrix, in Schur-block order.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    let (_, t) = schur(a)?;
    Ok(schur_blocks(&t).into_iter().flat_map(|b| block_eigenvalues(&t, b)).collect())
}

fn solve2(m: [[C64; 2]; 2], r: [C64; 2], smin: f64) -> [C64; 2] {
    let mut det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.norm() < smin * smin {
        det = C64::new(smin * smin, 0.0);
    }
    [
        (r[0] * m[1][1] - m[0][1] * r[1]) / det,
        (m[0][0] * r[1] - m[1][0] * r[0]) / det,
    ]
}

/// Eigenvector of quasi-triangular `t` for eigenvalue `lambda` of block `blocks[bi]`.
fn quasi_triangular_eigenvector(
    t: &DMatrix<f64>,
    blocks: &[(usize, usize)],
    bi: usize,
    lambda: C64,
    smin: f64,
) -> DVector<C64> {
    let n = t.nrows();
    let (k, size) = blocks[bi];
    let mut y = DVector::from_element(n, C64::new(0.0, 0.0));
    if size == 1 {
        y[k] = C64::new(1.0, 0.0);
    } else {
        // null vector of the singular 2x2 block T_kk - λI
        let a = C64::new(t[(k, k)], 0.0) - lambda;
        let b = C64::new(t[(k, k + 1)], 0.0);
        let c = C64::new(t[(k + 1, k)], 0.0);
        let d = C64::new(t[(k + 1, k + 1)], 0.0) - lambda;
        if a.norm() + b.norm() >= c.norm() + d.norm() {
            y[k] = -b;
            y[k + 1] = a;
        } else {
            y[k] = -d;
            y[k + 1] = c;
        }
    }
    let end = k + size;
    for &(i, s) in blocks[..bi].iter().rev() {
        let rhs = |row: usize, y: &DVector<C64>| {
            let mut acc = C64::new(0.0, 0.0);
            for j in (i + s)..end {
                acc -= y[j] * t[(row, j)];
            }
            acc
        };
        if s == 1 {
            let mut d = C64::new(t[(i, i)], 0.0) - lambda;
            if d.norm() < smin {
                d = C64::new(smin, 0.0);
            }
            y[i] = rhs(i, &y) / d;
        } else {
            let m = [
                [C64::new(t[(i, i)], 0.0) - lambda, C64::new(t[(i, i + 1)], 0.0)],
                [C64::new(t[(i + 1, i)], 0.0), C64::new(t[(i + 1, i + 1)], 0.0) - lambda],
            ];
            let r = [rhs(i, &y), rhs(i + 1, &y)];
            let sol = solve2(m, r, smin);
            y[i] = sol[0];
            y[i + 1] = sol[1];
        }
        let norm = y.norm();
        if norm > 1e100 {
            y /= C64::new(norm, 0.0);
        }
    }
    y
}

/// All eigenpairs with residuals.
pub fn eigen_decomposition(a: &DMatrix<f64>) -> Result<Vec<EigenPair>> {
    let (z, t) = schur(a)?;
    let blocks = schur_blocks(&t);
    let a_norm = a.norm();
    let smin = f64::EPSILON * t.norm().max(f64::MIN_POSITIVE);
    let zc = z.map(|v| C64::new(v, 0.0));
    let ac = a.map(|v| C64::new(v, 0.0));
    let mut pairs = Vec::with_capacity(a.nrows());
    for (bi, &block) in blocks.iter().enumerate() {
        for lambda in block_eigenvalues(&t, block) {
            let y = quasi_triangular_eigenvector(&t, &blocks, bi, lambda, smin);
            let mut v = &zc * y;
            let norm = v.norm();
            if norm > 0.0 {
                v /= C64::new(norm, 0.0);
            }
            let r = &ac * &v - &v * lambda;
            let residual = if a_norm > 0.0 { r.norm() / a_norm } else { 0.0 };
            pairs.push(EigenPair { value: lambda, vector: v, residual });
        }
    }
    Ok(pairs)
}

/// Rank decision from singular values with threshold `tol · σ_max · max(m, n)`.
#[derive(Clone, Debug)]
pub struct RankDecision {
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// `σ_rank / σ_{rank+1}`; infinite when nothing was cut or the cut value is zero.
    pub gap: f64,
}

impl RankDecision {
    pub fn from_values(mut values: Vec<f64>, tol: f64, dim: usize) -> Self {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let max = values.first().copied().unwrap_or(0.0);
        let threshold = tol * max * dim as f64;
        let rank = values.iter().filter(|&&s| s > threshold && s > 0.0).count();
        let gap = match (rank, values.get(rank)) {
            (0, _) => f64::INFINITY,
            (_, None) => f64::INFINITY,
            (r, Some(&next)) if next > 0.0 => values[r - 1] / next,
            _ => f64::INFINITY,
        };
        Self { rank, singular_values: values, threshold, gap }
    }
}

pub fn numeric_rank(m: &DMatrix<f64>, tol: f64) -> RankDecision {
    if m.nrows() == 0 || m.ncols() == 0 {
        return RankDecision { rank: 0, singular_values: vec![], threshold: 0.0, gap: f64::INFINITY };
    }
    let sv = m.clone().svd(false, false).singular_values;
    RankDecision::from_values(sv.iter().copied().collect(), tol, m.nrows().max(m.ncols()))
}

/// Largest dimension accepted by the Krylov routines.
pub const KRYLOV_LIMIT: usize = 600;

/// `[b, Ab, …, A^{n−1}b]` with every column normalised to unit length before
/// the next multiplication.
pub fn normalized_krylov(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n > KRYLOV_LIMIT {
        return Err(Error::TooLarge { n, limit: KRYLOV_LIMIT });
    }
    let mut k = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        let norm = col.norm();
        if !norm.is_finite() {
            return Err(Error::KrylovOverflow { column: j });
        }
        if norm > 0.0 {
            col /= norm;
        }
        k.set_column(j, &col);
        col = a * &col;
    }
    Ok(k)
}

/// Orthonormal basis of the Krylov space of `(A, b)` built by Arnoldi with
/// two passes of modified Gram–Schmidt.
#[derive(Clone, Debug)]
pub struct KrylovBasis {
    /// `n × r` with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Relative new-direction norms: `‖b‖/‖b‖ = 1` first, then `h_{j+1,j}/‖A‖_F`.
    /// Includes the norm that triggered deflation, if any.
    pub residuals: Vec<f64>,
    pub threshold: f64,
}

impl KrylovBasis {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Smallest accepted residual over the first rejected one.
    pub fn gap(&self) -> f64 {
        let r = self.rank();
        match self.residuals.get(r) {
            Some(&cut) if cut > 0.0 && r > 0 => {
                self.residuals[..r].iter().copied().fold(f64::INFINITY, f64::min) / cut
            }
            _ => f64::INFINITY,
        }
    }
}

pub fn arnoldi(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<KrylovBasis> {
    let n = a.nrows();
    if n > KRYLOV_LIMIT {
        return Err(Error::TooLarge { n, limit: KRYLOV_LIMIT });
    }
    let a_norm = a.norm();
    let threshold = tol * n as f64;
    let mut residuals = Vec::new();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let b_norm = b.norm();
    if !b_norm.is_finite() {
        return Err(Error::KrylovOverflow { column: 0 });
    }
    if b_norm == 0.0 || n == 0 {
        residuals.push(0.0);
        return Ok(KrylovBasis { basis: DMatrix::zeros(n, 0), residuals, threshold });
    }
    residuals.push(1.0);
    cols.push(b / b_norm);
    while cols.len() < n {
        let mut w = a * cols.last().unwrap();
        for _ in 0..2 {
            for q in &cols {
                let h = q.dot(&w);
                w.axpy(-h, q, 1.0);
            }
        }
        let norm = w.norm();
        if !norm.is_finite() {
            return Err(Error::KrylovOverflow { column: cols.len() });
        }
        let rel = if a_norm > 0.0 { norm / a_norm } else { 0.0 };
        residuals.push(rel);
        if rel <= threshold {
            break;
        }
        cols.push(w / norm);
    }
    let basis = DMatrix::from_columns(&cols);
    Ok(KrylovBasis { basis, residuals, threshold })
}

/// Completes orthonormal columns `v` (n × r) to an orthogonal n × n matrix `[v, w]`.
pub fn orthogonal_completion(v: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = (v.nrows(), v.ncols());
    if r == n {
        return v.clone();
    }
    let mut aug = DMatrix::zeros(n, r + n);
    aug.view_mut((0, 0), (n, r)).copy_from(v);
    aug.view_mut((0, r), (n, n)).fill_with_identity();
    let q = aug.qr().q();
    let mut t = DMatrix::zeros(n, n);
    t.view_mut((0, 0), (n, r)).copy_from(v);
    t.view_mut((0, r), (n, n - r)).copy_from(&q.view((0, r), (n, n - r)));
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn rotation_generator_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        let mut ev = eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert_relative_eq!(ev[0].im, -2.0, epsilon = 1e-14);
        assert_relative_eq!(ev[1].im, 2.0, epsilon = 1e-14);
        assert!(ev.iter().all(|l| l.re.abs() < 1e-14));
    }

    #[test]
    fn triangular_eigenvalues_are_diagonal() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 5.0, -2.0, 0.0, 3.0, 7.0, 0.0, 0.0, -4.0]);
        let mut ev: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|l| l.re).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_relative_eq!(ev[0], -4.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ev[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenpairs_of_random_matrices_have_small_residuals() {
        for seed in 0..5 {
            let a = random_matrix(40, seed);
            let pairs = eigen_decomposition(&a).unwrap();
            assert_eq!(pairs.len(), 40);
            for p in &pairs {
                assert!(p.residual < 1e-12, "residual {}", p.residual);
            }
            let trace: f64 = pairs.iter().map(|p| p.value.re).sum();
            assert_relative_eq!(trace, a.trace(), epsilon = 1e-10);
        }
    }

    #[test]
    fn non_finite_matrix_rejected() {
        let mut a = DMatrix::<f64>::identity(3, 3);
        a[(0, 1)] = f64::NAN;
        assert!(eigenvalues(&a).is_err());
    }

    #[test]
    fn rank_of_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        let d = numeric_rank(&m, 1e-10);
        assert_eq!(d.rank, 1);
        assert!(d.gap > 1e10);
        assert_eq!(numeric_rank(&DMatrix::zeros(3, 4), 1e-10).rank, 0);
    }

    #[test]
    fn arnoldi_finds_invariant_subspace() {
        // block diagonal with b only in the first block: Krylov space is 2-dimensional
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -1.0;
        a[(2, 3)] = 3.0;
        a[(3, 2)] = -3.0;
        let b = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let k = arnoldi(&a, &b, 1e-10).unwrap();
        assert_eq!(k.rank(), 2);
        assert!(k.gap() > 1e10);
        let t = orthogonal_completion(&k.basis);
        let err = (t.transpose() * &t - DMatrix::identity(4, 4)).norm();
        assert!(err < 1e-14);
    }

    #[test]
    fn balancing_round_trip() {
        let e = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1e-6, 9e6]));
        let bal = Balancing::from_gram(&e).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(bal.backward(&bal.forward(&x)), x);
        let eb = bal.congruence(&e);
        for i in 0..3 {
            assert_relative_eq!(eb[(i, i)], 1.0, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn eigenvalues_invariant_under_balancing(seed in 0u64..1000, logs in prop::collection::vec(-1.0f64..1.0, 8)) {
            let a = random_matrix(8, seed);
            let bal = Balancing { scale: DVector::from_iterator(8, logs.iter().map(|l| 10f64.powf(*l))) };
            let e0 = eigenvalues(&a).unwrap();
            let e1 = eigenvalues(&bal.similarity(&a)).unwrap();
            for x in &e0 {
                let nearest = e1.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(nearest < 1e-9 * (1.0 + x.norm()));
            }
        }

        #[test]
        fn spectra_are_conjugate_symmetric(seed in 0u64..1000) {
            let a = random_matrix(12, seed);
            let ev = eigenvalues(&a).unwrap();
            for l in &ev {
                let found = ev.iter().any(|m| (m - l.conj()).norm() < 1e-9 * (1.0 + l.norm()));
                prop_assert!(found);
            }
        }
    }
}
