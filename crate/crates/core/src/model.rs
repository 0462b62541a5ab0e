//! The dense state-space container produced by both assemblers.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, Balancing};
use crate::params::CompositeParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fem,
    Mfem,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Fem => "fem",
            Scheme::Mfem => "mfem",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fem" => Ok(Scheme::Fem),
            "mfem" => Ok(Scheme::Mfem),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}` (fem|mfem)"))),
        }
    }
}

/// Which set of discrete operators to build.
///
/// `Standard` is the self-consistent Galerkin / resolved-port construction.
/// `Paper` uses the printed forms verbatim: the banded element matrices with
/// their nonstandard boundary rows for FEM, and the nearest plus
/// second-neighbour port stencil for MFEM.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Standard,
    Paper,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Standard => "standard",
            Variant::Paper => "paper",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(Variant::Standard),
            "paper" => Ok(Variant::Paper),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}` (standard|paper)"))),
        }
    }
}

/// Layout of the state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateOrdering {
    /// Field-major nodal values `(c¹, …, c⁶)`, `cʲ_k` at `z_k = kℓ/N`, `k = 1…N`,
    /// fields `(v, w_z, Φ, v̇, ẇ_z, Φ̇)`.
    FemNodal,
    /// Element-major integrated values, element `j` holding
    /// `(v_z, w_zz, Φ_z, p₁, p₂, p₃)` integrated over `[(j−1)h, jh]`.
    MfemElement,
}

impl StateOrdering {
    pub fn for_scheme(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Fem => StateOrdering::FemNodal,
            Scheme::Mfem => StateOrdering::MfemElement,
        }
    }

    /// Index of field `field` (0..6) at node/element `k` (0-based).
    pub fn index(&self, n_elements: usize, field: usize, k: usize) -> usize {
        match self {
            StateOrdering::FemNodal => field * n_elements + k,
            StateOrdering::MfemElement => 6 * k + field,
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            StateOrdering::FemNodal => "fem-nodal: field-major (v, w_z, Phi, v_t, w_z_t, Phi_t) at z_k = k*ell/N, k=1..N",
            StateOrdering::MfemElement => "mfem-element: element-major (v_z, w_zz, Phi_z, p1, p2, p3) integrated per element",
        }
    }
}

/// How the scalar output is formed from the state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMap {
    /// `C = Bᵀ E`: the adjoint of `B` in the energy inner product, so that
    /// `dH/dt = y u` holds exactly.
    #[default]
    EnergyAdjoint,
    /// `C = Bᵀ` literally, in the coordinates of the state vector.
    Transpose,
}

impl fmt::Display for OutputMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputMap::EnergyAdjoint => "energy-adjoint",
            OutputMap::Transpose => "transpose",
        })
    }
}

impl FromStr for OutputMap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "energy-adjoint" | "energy_adjoint" => Ok(OutputMap::EnergyAdjoint),
            "transpose" => Ok(OutputMap::Transpose),
            other => Err(Error::InvalidArgument(format!(
                "unknown output map `{other}` (energy-adjoint|transpose)"
            ))),
        }
    }
}

/// Dense single-input single-output model `ẋ = A x + B u`, `y = C x`, with
/// energy `H = ½ xᵀ E x`.
#[derive(Clone, Debug)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub e: DMatrix<f64>,
    pub scheme: Scheme,
    pub variant: Variant,
    pub n_elements: usize,
    pub ordering: StateOrdering,
    pub output: OutputMap,
    /// Feedback gain already folded into `a`; zero for an open-loop model.
    pub gain: f64,
    pub params: CompositeParams,
}

impl StateSpaceModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        e: DMatrix<f64>,
        scheme: Scheme,
        variant: Variant,
        n_elements: usize,
        output: OutputMap,
        params: CompositeParams,
    ) -> Result<Self> {
        let n = 6 * n_elements;
        if a.shape() != (n, n) || b.len() != n || e.shape() != (n, n) {
            return Err(Error::Assembly(format!(
                "inconsistent dimensions: A {:?}, B {}, E {:?}, expected n = {n}",
                a.shape(),
                b.len(),
                e.shape()
            )));
        }
        let asym = (&e - e.transpose()).norm();
        if asym > 1e-12 * e.norm() {
            return Err(Error::Assembly(format!("energy Gram not symmetric (‖E − Eᵀ‖ = {asym:e})")));
        }
        let c = output_row(&b, &e, output);
        Ok(Self {
            a,
            b,
            c,
            e,
            scheme,
            variant,
            n_elements,
            ordering: StateOrdering::for_scheme(scheme),
            output,
            gain: 0.0,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Same plant with a different output map.
    pub fn with_output(mut self, output: OutputMap) -> Self {
        self.c = output_row(&self.b, &self.e, output);
        self.output = output;
        self
    }

    pub fn hamiltonian(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.e * x))
    }

    pub fn output_of(&self, x: &DVector<f64>) -> f64 {
        (&self.c * x)[0]
    }

    /// [`linalg::skewness_residual`] of `(Ẽ, Ã)` in balanced coordinates.
    pub fn skewness_residual(&self) -> f64 {
        match self.balancing() {
            Ok(bal) => linalg::skewness_residual(&bal.congruence(&self.e), &bal.similarity(&self.a)),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn balancing(&self) -> Result<Balancing> {
        Balancing::from_gram(&self.e)
    }

    /// Hash of everything that defines the open-loop plant: scheme, variant,
    /// order, output map and the composite parameters. The feedback gain is
    /// excluded so that snapshots taken open loop restore into closed loop.
    pub fn provenance(&self) -> String {
        plant_hash(self.scheme, self.variant, self.n_elements, self.output, &self.params)
    }

    pub fn label(&self) -> String {
        format!("{}-{}-N{}", self.scheme, self.variant, self.n_elements)
    }
}

fn output_row(b: &DVector<f64>, e: &DMatrix<f64>, output: OutputMap) -> RowDVector<f64> {
    match output {
        OutputMap::EnergyAdjoint => (e * b).transpose(),
        OutputMap::Transpose => b.transpose(),
    }
}

pub fn plant_hash(
    scheme: Scheme,
    variant: Variant,
    n_elements: usize,
    output: OutputMap,
    params: &CompositeParams,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("{scheme}|{variant}|{n_elements}|{output}|").as_bytes());
    let fields = [
        params.rho_a,
        params.rho_i,
        params.rho_i0,
        params.c_a,
        params.c_i,
        params.c_i0,
        params.area_p,
        params.i0,
        params.beta,
        params.mu,
        params.gamma,
        params.half_width,
        params.length,
        params.piezo_thickness,
    ];
    for v in fields {
        hasher.update(v.to_bits().to_le_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
}
