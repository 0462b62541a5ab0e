//! Physical inputs of the composite and everything derived from them.
//!
//! Raw inputs are a [`MaterialParams`] set and one [`LayerGeometry`] per layer
//! (piezoelectric actuator on top, mechanical substrate below). From these we
//! derive the cross-section properties of each layer, the composite mass and
//! stiffness coefficients, and the coefficients of the first-order operator
//! acting on `(v, w_z, Φ, v̇, ẇ_z, Φ̇)`.
//!
//! Everything is SI. Defaults are the reference coefficient set used
//! throughout the crate: a 1 m long, 0.2 m wide cantilever with a 10 mm piezo
//! layer on `z3 ∈ [0, 0.01]` and a 10 mm substrate on `z3 ∈ [-0.01, 0]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular layer cross-section `[-g_b, g_b] × [h_a, h_b]` over a beam of length `ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerGeometry {
    #[serde(rename = "ell", default = "default_length")]
    pub length: f64,
    #[serde(rename = "g_b", default = "default_half_width")]
    pub half_width: f64,
    #[serde(rename = "h_a")]
    pub lower: f64,
    #[serde(rename = "h_b")]
    pub upper: f64,
}

fn default_length() -> f64 {
    1.0
}

fn default_half_width() -> f64 {
    0.1
}

impl LayerGeometry {
    pub fn new(length: f64, half_width: f64, lower: f64, upper: f64) -> Result<Self> {
        let g = Self { length, half_width, lower, upper };
        g.validate()?;
        Ok(g)
    }

    /// Reference piezo layer, `z3 ∈ [0, 0.01]`.
    pub fn reference_piezo() -> Self {
        Self { length: 1.0, half_width: 0.1, lower: 0.0, upper: 0.01 }
    }

    /// Reference substrate layer, `z3 ∈ [-0.01, 0]`.
    pub fn reference_substrate() -> Self {
        Self { length: 1.0, half_width: 0.1, lower: -0.01, upper: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.length, self.half_width, self.lower, self.upper]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidGeometry("non-finite value".into()));
        }
        if self.length <= 0.0 {
            return Err(Error::InvalidGeometry(format!("ell = {} must be > 0", self.length)));
        }
        if self.half_width <= 0.0 {
            return Err(Error::InvalidGeometry(format!("g_b = {} must be > 0", self.half_width)));
        }
        if self.upper <= self.lower {
            return Err(Error::InvalidGeometry(format!(
                "h_b = {} must exceed h_a = {}",
                self.upper, self.lower
            )));
        }
        Ok(())
    }

    pub fn thickness(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Material coefficients of both layers and the electromagnetic constants of the piezo layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    pub rho_s: f64,
    #[serde(rename = "C11_s", alias = "c11_s")]
    pub c11_s: f64,
    pub rho_p: f64,
    #[serde(rename = "C11_p", alias = "c11_p")]
    pub c11_p: f64,
    pub gamma: f64,
    pub beta: f64,
    pub mu: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            rho_s: 5000.0,
            c11_s: 1e5,
            rho_p: 7600.0,
            c11_p: 140e5,
            gamma: 1e-3,
            beta: 1e6,
            mu: 1.2e6,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_s", self.rho_s),
            ("c11_s", self.c11_s),
            ("rho_p", self.rho_p),
            ("c11_p", self.c11_p),
            ("beta", self.beta),
            ("mu", self.mu),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidMaterial(format!("{name} = {value} must be > 0")));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidMaterial(format!("gamma = {} must be >= 0", self.gamma)));
        }
        Ok(())
    }
}

/// Area, second moment and first moment of a layer cross-section about `z3 = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SectionProps {
    pub area: f64,
    pub inertia: f64,
    pub first_moment: f64,
}

pub fn section_props(geom: &LayerGeometry) -> Result<SectionProps> {
    geom.validate()?;
    let LayerGeometry { half_width: g, lower: a, upper: b, .. } = *geom;
    Ok(SectionProps {
        area: 2.0 * g * (b - a),
        inertia: 2.0 / 3.0 * g * (b.powi(3) - a.powi(3)),
        first_moment: g * (b * b - a * a),
    })
}

/// Composite coefficients of the coupled beam PDE.
///
/// Mass and stiffness couplings (`rho_i0`, `c_i0`) come from the piezo layer
/// only, since the substrate carries no first-moment coupling in the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeParams {
    pub rho_a: f64,
    pub rho_i: f64,
    pub rho_i0: f64,
    pub c_a: f64,
    pub c_i: f64,
    pub c_i0: f64,
    /// Piezo layer area `A_p`.
    pub area_p: f64,
    /// Piezo layer first moment `I_0`.
    pub i0: f64,
    pub beta: f64,
    pub mu: f64,
    pub gamma: f64,
    pub half_width: f64,
    pub length: f64,
    /// Piezo layer thickness `h_b - h_a`, the weight of the current input.
    pub piezo_thickness: f64,
}

impl CompositeParams {
    pub fn mass_determinant(&self) -> f64 {
        self.rho_a * self.rho_i - self.rho_i0 * self.rho_i0
    }

    pub fn stiffness_determinant(&self) -> f64 {
        self.c_a * self.c_i - self.c_i0 * self.c_i0
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mass_determinant();
        if !(m > 0.0 && self.rho_a > 0.0) {
            return Err(Error::NotPositiveDefinite { form: "mass", value: m });
        }
        let k = self.stiffness_determinant();
        if !(k > 0.0 && self.c_a > 0.0) {
            return Err(Error::NotPositiveDefinite { form: "stiffness", value: k });
        }
        Ok(())
    }

    /// Copy with a different piezoelectric coupling; everything else is independent of γ.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Reference coefficient set.
    pub fn reference() -> Self {
        composite_params(
            &MaterialParams::default(),
            &LayerGeometry::reference_piezo(),
            &LayerGeometry::reference_substrate(),
        )
        .expect("reference parameters are valid")
    }
}

pub fn composite_params(
    materials: &MaterialParams,
    piezo: &LayerGeometry,
    substrate: &LayerGeometry,
) -> Result<CompositeParams> {
    materials.validate()?;
    let p = section_props(piezo)?;
    let s = section_props(substrate)?;
    if piezo.length != substrate.length {
        return Err(Error::InvalidGeometry(format!(
            "layers must share ell (piezo {}, substrate {})",
            piezo.length, substrate.length
        )));
    }
    if piezo.half_width != substrate.half_width {
        return Err(Error::InvalidGeometry(format!(
            "layers must share g_b (piezo {}, substrate {})",
            piezo.half_width, substrate.half_width
        )));
    }
    let params = CompositeParams {
        rho_a: materials.rho_p * p.area + materials.rho_s * s.area,
        rho_i: materials.rho_p * p.inertia + materials.rho_s * s.inertia,
        rho_i0: materials.rho_p * p.first_moment,
        c_a: materials.c11_p * p.area + materials.c11_s * s.area,
        c_i: materials.c11_p * p.inertia + materials.c11_s * s.inertia,
        c_i0: materials.c11_p * p.first_moment,
        area_p: p.area,
        i0: p.first_moment,
        beta: materials.beta,
        mu: materials.mu,
        gamma: materials.gamma,
        half_width: piezo.half_width,
        length: piezo.length,
        piezo_thickness: piezo.thickness(),
    };
    params.validate()?;
    Ok(params)
}

/// Coefficients `a_ij` of the operator acting on `(v, w_z, Φ, v̇, ẇ_z, Φ̇)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorCoefficients {
    pub a41: f64,
    pub a42: f64,
    pub a46: f64,
    pub a51: f64,
    pub a52: f64,
    pub a56: f64,
    pub a63: f64,
    pub a64: f64,
    pub a65: f64,
}

pub fn operator_coefficients(p: &CompositeParams) -> Result<OperatorCoefficients> {
    p.validate()?;
    let det = p.mass_determinant();
    Ok(OperatorCoefficients {
        a41: (p.rho_i * p.c_a - p.rho_i0 * p.c_i0) / det,
        a42: (p.rho_i * p.c_i0 - p.rho_i0 * p.c_i) / det,
        a46: p.gamma * (p.rho_i * p.area_p - p.rho_i0 * p.i0) / det,
        a51: (p.rho_a * p.c_i0 - p.rho_i0 * p.c_a) / det,
        a52: (p.rho_a * p.c_i - p.rho_i0 * p.c_i0) / det,
        a56: p.gamma * (p.rho_a * p.i0 - p.rho_i0 * p.area_p) / det,
        a63: p.beta / p.mu,
        a64: p.gamma * p.beta,
        a65: p.gamma * p.beta * p.i0 / p.area_p,
    })
}

/// Field values at one point of the beam: strains `(v_z, w_zz, Φ_z)` and
/// velocities `(v̇, ẇ_z, Φ̇)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointState {
    pub strain: [f64; 3],
    pub velocity: [f64; 3],
}

/// Integrand of the total energy, in J/m.
pub fn continuous_energy_density(x: &PointState, p: &CompositeParams) -> f64 {
    let [vz, wzz, phiz] = x.strain;
    let [vt, wzt, phit] = x.velocity;
    let kinetic = p.rho_a * vt * vt + p.rho_i * wzt * wzt - 2.0 * p.rho_i0 * vt * wzt
        + p.area_p / p.beta * phit * phit;
    let potential = p.c_a * vz * vz + p.c_i * wzz * wzz - 2.0 * p.c_i0 * vz * wzz
        + p.area_p / p.mu * phiz * phiz;
    0.5 * (kinetic + potential)
}
