//! Spectra, convergence sweeps and controllability audits.
//!
//! Everything here runs in the energy-balanced coordinates of the model
//! (see [`crate::linalg::Balancing`]). Eigenvalues and ranks are invariant
//! under that diagonal similarity; residuals and singular values are
//! reported for the balanced matrices.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::assemble_fem;
use crate::linalg::{self, RankDecision, C64};
use crate::mfem::assemble_mfem;
use crate::model::{OutputMap, Scheme, StateSpaceModel, Variant};
use crate::params::CompositeParams;

/// Default relative rank tolerance.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Modes with `|Im λ|` below this are treated as static content and skipped
/// when counting oscillatory modes.
pub const ZERO_MODE_CUTOFF: f64 = 1e-6;

pub fn assemble(params: &CompositeParams, scheme: Scheme, n: usize, variant: Variant) -> Result<StateSpaceModel> {
    match scheme {
        Scheme::Fem => assemble_fem(params, n, variant),
        Scheme::Mfem => assemble_mfem(params, n, variant),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub scheme: Scheme,
    pub n_elements: usize,
    pub variant: Variant,
    pub gain: f64,
    /// `(Re, Im)`, sorted by `|Im|` ascending, then `Im`, then `Re`.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Per-eigenpair residual `‖Ãv − λv‖/(‖Ã‖_F‖v‖)`; empty when eigenvectors were not requested.
    pub residuals: Vec<f64>,
    pub spectral_radius: f64,
}

impl SpectrumReport {
    /// Imaginary parts of the first `k` oscillatory modes (`Im λ > 0`).
    pub fn first_modes(&self, k: usize) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .filter(|(_, im)| *im >= ZERO_MODE_CUTOFF)
            .take(k)
            .map(|(_, im)| *im)
            .collect()
    }

    pub fn max_abs_re(&self) -> f64 {
        self.eigenvalues.iter().map(|(re, _)| re.abs()).fold(0.0, f64::max)
    }

    pub fn max_re(&self) -> f64 {
        self.eigenvalues.iter().map(|(re, _)| *re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Every non-real eigenvalue has its conjugate within `1e-9 ρ(A)`.
    pub fn conjugate_symmetric(&self) -> bool {
        let tol = 1e-9 * self.spectral_radius.max(f64::MIN_POSITIVE);
        self.eigenvalues.iter().all(|&(re, im)| {
            im == 0.0
                || self
                    .eigenvalues
                    .iter()
                    .any(|&(r2, i2)| ((r2 - re).powi(2) + (i2 + im).powi(2)).sqrt() <= tol)
        })
    }

    /// Number of eigenvalues with `|λ| < 1e-9 ρ(A)`.
    pub fn zero_count(&self) -> usize {
        let tol = 1e-9 * self.spectral_radius;
        self.eigenvalues.iter().filter(|(re, im)| re.hypot(*im) < tol).count()
    }
}

fn sort_spectrum(pairs: &mut [(C64, f64)]) {
    pairs.sort_by(|(a, _), (b, _)| {
        (a.im.abs(), a.im, a.re)
            .partial_cmp(&(b.im.abs(), b.im, b.re))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

fn report(model: &StateSpaceModel, mut pairs: Vec<(C64, f64)>, with_residuals: bool) -> SpectrumReport {
    sort_spectrum(&mut pairs);
    let spectral_radius = pairs.iter().map(|(l, _)| l.norm()).fold(0.0, f64::max);
    SpectrumReport {
        scheme: model.scheme,
        n_elements: model.n_elements,
        variant: model.variant,
        gain: model.gain,
        eigenvalues: pairs.iter().map(|(l, _)| (l.re, l.im)).collect(),
        residuals: if with_residuals { pairs.iter().map(|(_, r)| *r).collect() } else { vec![] },
        spectral_radius,
    }
}

/// All eigenpairs with residuals.
pub fn spectrum(model: &StateSpaceModel) -> Result<SpectrumReport> {
    let a = model.balancing()?.similarity(&model.a);
    let pairs = linalg::eigen_decomposition(&a)?
        .into_iter()
        .map(|p| (p.value, p.residual))
        .collect();
    Ok(report(model, pairs, true))
}

/// Eigenvalues only, without eigenvectors; used by sweeps.
pub fn spectrum_values(model: &StateSpaceModel) -> Result<SpectrumReport> {
    let a = model.balancing()?.similarity(&model.a);
    let pairs = linalg::eigenvalues(&a)?.into_iter().map(|l| (l, f64::NAN)).collect();
    Ok(report(model, pairs, false))
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub n: usize,
    pub variant: Variant,
    /// 1-based mode index.
    pub k: usize,
    pub im_lambda: f64,
}

/// First four modes for every `(scheme, N)`, computed in parallel and
/// returned ordered by `(scheme, N, k)`. `on_item` runs as soon as a
/// `(scheme, N)` pair is finished, from a worker thread.
pub fn convergence_sweep_with<F>(
    schemes: &[Scheme],
    ns: &[usize],
    variant: Variant,
    params: &CompositeParams,
    on_item: F,
) -> Result<Vec<SweepRow>>
where
    F: Fn(&[SweepRow]) -> Result<()> + Sync,
{
    if ns.is_empty() || schemes.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one scheme and one N".into()));
    }
    let jobs: Vec<(Scheme, usize)> =
        schemes.iter().flat_map(|&s| ns.iter().map(move |&n| (s, n))).collect();
    let mut per_item: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(scheme, n)| {
            let model = assemble(params, scheme, n, variant)?;
            let rep = spectrum_values(&model)?;
            let rows: Vec<SweepRow> = rep
                .first_modes(4)
                .into_iter()
                .enumerate()
                .map(|(i, im_lambda)| SweepRow { scheme, n, variant, k: i + 1, im_lambda })
                .collect();
            on_item(&rows)?;
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    per_item.sort_by_key(|rows| rows.first().map(|r| (r.scheme, r.n)));
    Ok(per_item.into_iter().flatten().collect())
}

pub fn convergence_sweep(
    schemes: &[Scheme],
    ns: &[usize],
    variant: Variant,
    params: &CompositeParams,
) -> Result<Vec<SweepRow>> {
    convergence_sweep_with(schemes, ns, variant, params, |_| Ok(()))
}

/// `(2k − 1)(π/2)√(β/μ)/ℓ`, the fixed–free wave frequencies of the flux field.
pub fn electromagnetic_limit(params: &CompositeParams, k: usize) -> f64 {
    (2 * k - 1) as f64 * std::f64::consts::FRAC_PI_2 * (params.beta / params.mu).sqrt() / params.length
}

/// Richardson extrapolation assuming an `O(h²)` error: `(n₂² λ₂ − n₁² λ₁)/(n₂² − n₁²)`.
pub fn richardson(n1: usize, l1: f64, n2: usize, l2: f64) -> f64 {
    let (a, b) = ((n1 * n1) as f64, (n2 * n2) as f64);
    (b * l2 - a * l1) / (b - a)
}

/// Krylov rank of `(Ã, b̃)` from an Arnoldi basis with double Gram–Schmidt.
#[derive(Clone, Debug, Serialize)]
pub struct KalmanRank {
    pub rank: usize,
    pub n: usize,
    pub tol: f64,
    /// Smallest accepted new-direction norm over the first rejected one.
    pub sv_gap: f64,
    /// Same decision at `tol × 10` and `tol / 10`.
    pub stable: bool,
    pub residuals: Vec<f64>,
}

fn balanced_pair(model: &StateSpaceModel) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let bal = model.balancing()?;
    Ok((bal.similarity(&model.a), bal.forward(&model.b)))
}

pub fn kalman_rank(model: &StateSpaceModel, tol: f64) -> Result<KalmanRank> {
    let (a, b) = balanced_pair(model)?;
    let basis = linalg::arnoldi(&a, &b, tol)?;
    let looser = linalg::arnoldi(&a, &b, tol * 10.0)?.rank();
    let tighter = linalg::arnoldi(&a, &b, tol / 10.0)?.rank();
    Ok(KalmanRank {
        rank: basis.rank(),
        n: a.nrows(),
        tol,
        sv_gap: basis.gap(),
        stable: looser == basis.rank() && tighter == basis.rank(),
        residuals: basis.residuals.clone(),
    })
}

/// Rank of the column-normalised controllability matrix `[b, Ab, …]` by SVD.
///
/// This is the textbook test; it is only well conditioned for small `n`
/// (the Krylov columns align quickly), which is why [`kalman_rank`] uses an
/// orthogonalised basis.
pub fn kalman_rank_svd(model: &StateSpaceModel, tol: f64) -> Result<RankDecision> {
    let (a, b) = balanced_pair(model)?;
    Ok(linalg::numeric_rank(&linalg::normalized_krylov(&a, &b)?, tol))
}

/// Orthogonal similarity to the controllable/uncontrollable block-triangular form
///
/// ```text
/// T ᵀ Ã T = [ A_c  A_12 ]    T ᵀ b̃ = [ b_c ]
///           [  0   A_u  ]            [  0  ]
/// ```
#[derive(Clone, Debug)]
pub struct Staircase {
    pub t: DMatrix<f64>,
    pub a_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    /// Stair steps of the controllable part (all 1 for a single input),
    /// followed by the uncontrollable block size when nonzero.
    pub block_sizes: Vec<usize>,
    pub controllable_dim: usize,
    pub uncontrollable_eigenvalues: Vec<C64>,
    /// `‖A_21‖_F / ‖Ã‖_F`
    pub lower_left_residual: f64,
    /// `‖TᵀT − I‖_F`
    pub orthogonality_error: f64,
}

impl Staircase {
    pub fn uncontrollable_dim(&self) -> usize {
        self.t.nrows() - self.controllable_dim
    }
}

pub fn staircase_decomposition(model: &StateSpaceModel, tol: f64) -> Result<Staircase> {
    let (a, b) = balanced_pair(model)?;
    staircase_of(&a, &b, tol)
}

pub fn staircase_of(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<Staircase> {
    let n = a.nrows();
    let basis = linalg::arnoldi(a, b, tol)?;
    let r = basis.rank();
    let t = linalg::orthogonal_completion(&basis.basis);
    let a_bar = t.transpose() * a * &t;
    let b_bar = t.transpose() * b;
    let mut block_sizes = vec![1; r];
    if n > r {
        block_sizes.push(n - r);
    }
    let uncontrollable_eigenvalues = if n > r {
        linalg::eigenvalues(&a_bar.view((r, r), (n - r, n - r)).clone_owned())?
    } else {
        vec![]
    };
    let lower_left = a_bar.view((r, 0), (n - r, r)).norm();
    let a_norm = a.norm();
    Ok(Staircase {
        orthogonality_error: (t.transpose() * &t - DMatrix::identity(n, n)).norm(),
        t,
        a_bar,
        b_bar,
        block_sizes,
        controllable_dim: r,
        uncontrollable_eigenvalues,
        lower_left_residual: if a_norm > 0.0 { lower_left / a_norm } else { 0.0 },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BrockettResult {
    pub rank: usize,
    pub n: usize,
    pub pass: bool,
    pub sv_gap: f64,
}

/// Full row rank of `[A B]`.
pub fn brockett_check(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> BrockettResult {
    let n = a.nrows();
    let mut ab = DMatrix::zeros(n, n + 1);
    ab.view_mut((0, 0), (n, n)).copy_from(a);
    ab.set_column(n, b);
    let d = linalg::numeric_rank(&ab, tol);
    BrockettResult { rank: d.rank, n, pass: d.rank == n, sv_gap: d.gap }
}

pub fn brockett_check_model(model: &StateSpaceModel, tol: f64) -> Result<BrockettResult> {
    let (a, b) = balanced_pair(model)?;
    Ok(brockett_check(&a, &b, tol))
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlReport {
    pub scheme: Scheme,
    pub n_elements: usize,
    pub n: usize,
    pub kalman_rank: usize,
    pub brockett_rank: usize,
    pub brockett_pass: bool,
    pub tol: f64,
    pub sv_gap: f64,
    pub rank_stable: bool,
    pub staircase_block_sizes: Vec<usize>,
    pub uncontrollable_eigenvalues: Vec<(f64, f64)>,
}

pub fn control_report(model: &StateSpaceModel, tol: f64) -> Result<ControlReport> {
    let kalman = kalman_rank(model, tol)?;
    let brockett = brockett_check_model(model, tol)?;
    let stair = staircase_decomposition(model, tol)?;
    Ok(ControlReport {
        scheme: model.scheme,
        n_elements: model.n_elements,
        n: model.dim(),
        kalman_rank: kalman.rank,
        brockett_rank: brockett.rank,
        brockett_pass: brockett.pass,
        tol,
        sv_gap: kalman.sv_gap,
        rank_stable: kalman.stable,
        staircase_block_sizes: stair.block_sizes,
        uncontrollable_eigenvalues: stair.uncontrollable_eigenvalues.iter().map(|l| (l.re, l.im)).collect(),
    })
}

/// `A_cl = A − κ B C`, with `C` the model's output row.
pub fn closed_loop(model: &StateSpaceModel, gain: f64) -> Result<StateSpaceModel> {
    if !(gain.is_finite() && gain >= 0.0) {
        return Err(Error::InvalidArgument(format!("feedback gain {gain} must be >= 0")));
    }
    let mut cl = model.clone();
    cl.a = &model.a - (&model.b * &model.c) * gain;
    cl.gain = model.gain + gain;
    Ok(cl)
}

/// `‖ẼÃ + ÃᵀẼ + 2κ (Ẽb̃)(Ẽb̃)ᵀ‖_F / (2‖ẼÃ‖_F + 2κ‖Ẽb̃‖²)` in balanced
/// coordinates; zero when the closed loop dissipates exactly `κ y²`.
pub fn dissipation_residual(model: &StateSpaceModel) -> f64 {
    let Ok(bal) = model.balancing() else { return f64::INFINITY };
    let e = bal.congruence(&model.e);
    let ea = &e * bal.similarity(&model.a);
    let eb = &e * bal.forward(&model.b);
    let s = &ea + ea.transpose() + (&eb * eb.transpose()) * (2.0 * model.gain);
    let scale = 2.0 * ea.norm() + 2.0 * model.gain * eb.norm_squared();
    if scale == 0.0 {
        0.0
    } else {
        s.norm() / scale
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityCheck {
    pub max_re: f64,
    pub spectral_radius: f64,
    /// `max Re λ ≤ 1e-8 ρ(A)`
    pub spectral_ok: bool,
    pub dissipation_residual: f64,
    /// Only meaningful for the energy-adjoint output.
    pub dissipative: bool,
    pub holds: bool,
}

pub fn stability_check(model: &StateSpaceModel, spectrum: &SpectrumReport) -> StabilityCheck {
    let max_re = spectrum.max_re();
    let spectral_ok = max_re <= 1e-8 * spectrum.spectral_radius;
    let dissipation_residual = dissipation_residual(model);
    let dissipative = model.output == OutputMap::EnergyAdjoint && dissipation_residual <= 1e-10;
    StabilityCheck {
        max_re,
        spectral_radius: spectrum.spectral_radius,
        spectral_ok,
        dissipation_residual,
        dissipative,
        holds: spectral_ok && dissipative,
    }
}

/// Real parts of the closed-loop spectrum recomputed from the eigenvectors.
///
/// For `A = E⁻¹(J − κ Cᵀ C)` with skew `J`, every eigenpair satisfies
/// `Re λ = −κ |C v|² / (v* E v)`. The quotient is negative exactly when
/// `C v ≠ 0`, and `|C v|` is resolved far above rounding even when the
/// eigenvalue itself is not.
#[derive(Clone, Debug, Serialize)]
pub struct RayleighDamping {
    /// Largest `−κ |C v|² / (v* E v)` over all eigenpairs.
    pub max_re: f64,
    /// Smallest `|C v| / (ε ‖C‖ ‖v‖)`.
    pub min_signal_to_noise: f64,
    /// Every `|C v|` is at least `1e3` times its rounding level.
    pub strictly_negative: bool,
}

pub fn rayleigh_damping(model: &StateSpaceModel) -> Result<RayleighDamping> {
    let gain = model.gain;
    let bal = model.balancing()?;
    let a = bal.similarity(&model.a);
    let e = bal.congruence(&model.e);
    let c = (&e * bal.forward(&model.b)).transpose();
    let cc = c.map(|x| C64::new(x, 0.0));
    let ec = e.map(|x| C64::new(x, 0.0));
    let mut max_re = f64::NEG_INFINITY;
    let mut min_snr = f64::INFINITY;
    for pair in linalg::eigen_decomposition(&a)? {
        let v = &pair.vector;
        let cv = (&cc * v)[0].norm();
        let vev = v.dotc(&(&ec * v)).re;
        max_re = max_re.max(-gain * cv * cv / vev);
        min_snr = min_snr.min(cv / (f64::EPSILON * c.norm() * v.norm()));
    }
    Ok(RayleighDamping {
        max_re,
        min_signal_to_noise: min_snr,
        strictly_negative: gain > 0.0 && max_re < 0.0 && min_snr >= 1e3,
    })
}

/// Damping of the high-frequency end compared with the low-frequency end.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoteCheck {
    pub top_decile_max_re: f64,
    pub bottom_decile_median_abs_re: f64,
    pub holds: bool,
}

/// Holds when the largest real part among the top decile (by `|Im|`) of the
/// oscillatory eigenvalues exceeds `−10×` the median `|Re|` of the bottom decile.
pub fn imaginary_axis_asymptote(spectrum: &SpectrumReport) -> AsymptoteCheck {
    let modes: Vec<(f64, f64)> =
        spectrum.eigenvalues.iter().copied().filter(|(_, im)| *im >= ZERO_MODE_CUTOFF).collect();
    let decile = (modes.len() / 10).max(1);
    let top_decile_max_re =
        modes[modes.len().saturating_sub(decile)..].iter().map(|(re, _)| *re).fold(f64::NEG_INFINITY, f64::max);
    let mut bottom: Vec<f64> = modes[..decile.min(modes.len())].iter().map(|(re, _)| re.abs()).collect();
    bottom.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = if bottom.is_empty() { 0.0 } else { bottom[bottom.len() / 2] };
    AsymptoteCheck {
        top_decile_max_re,
        bottom_decile_median_abs_re: median,
        holds: top_decile_max_re > -10.0 * median,
    }
}
