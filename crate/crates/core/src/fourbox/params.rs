use serde::{Deserialize, Serialize};

use super::FourBoxError;

/// Cubic meters per second in one Sverdrup.
pub const SV: f64 = 1.0e6;
/// Julian year in seconds.
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;
const GRAVITY: f64 = 9.81;

/// Sampling bounds for the three perturbed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub m_ek: (f64, f64),
    pub fw_n: (f64, f64),
    pub d_low0: (f64, f64),
}

/// The exploration box: M_ek in Sv, F_w^n in Sv, D_low0 in m.
pub const TABLE1_BOUNDS: ParamBounds = ParamBounds {
    m_ek: (15.0, 35.0),
    fw_n: (0.05, 1.55),
    d_low0: (100.0, 400.0),
};

impl ParamBounds {
    pub fn contains(&self, m_ek: f64, fw_n: f64, d_low0: f64) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(m_ek, self.m_ek) && within(fw_n, self.fw_n) && within(d_low0, self.d_low0)
    }
}

/// Linear equation of state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Eos {
    /// Reference density, kg/m³.
    pub rho0: f64,
    /// Thermal expansion coefficient, 1/K.
    pub alpha: f64,
    /// Haline contraction coefficient, 1/psu.
    pub beta: f64,
    /// Reference temperature, °C.
    pub t0: f64,
    /// Reference salinity, psu.
    pub s0: f64,
}

impl Default for Eos {
    fn default() -> Self {
        Self { rho0: 1027.0, alpha: 2.0e-4, beta: 8.0e-4, t0: 10.0, s0: 35.0 }
    }
}

impl Eos {
    pub fn density(&self, t: f64, s: f64) -> f64 {
        self.rho0 * (1.0 - self.alpha * (t - self.t0) + self.beta * (s - self.s0))
    }
}

/// Horizontal extent of each box, m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxAreas {
    pub north: f64,
    pub south: f64,
    pub low: f64,
    /// Footprint of the deep box, which underlies the whole basin.
    pub deep: f64,
}

impl Default for BoxAreas {
    fn default() -> Self {
        Self { north: 0.5e14, south: 1.0e14, low: 2.0e14, deep: 3.5e14 }
    }
}

/// Fixed thicknesses, m. The low-latitude box thickness is the prognostic D_low.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxDepths {
    pub north: f64,
    pub south: f64,
    /// Full ocean depth; the deep box fills whatever the surface boxes leave.
    pub total: f64,
}

impl Default for BoxDepths {
    fn default() -> Self {
        Self { north: 100.0, south: 100.0, total: 4000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportCoeffs {
    /// Overturning coefficient g/(ρ0·ε), m³/s per (kg/m³) per m².
    pub c_mn: f64,
    /// Diapycnal diffusivity driving low-latitude upwelling, m²/s.
    pub k_v: f64,
    /// Eddy return-flow coefficient (eddy diffusivity times Lx/Ly), m²/s.
    pub a_i: f64,
    /// Lateral mixing exchange between the low-latitude and northern boxes, Sv.
    pub mixing_ln: f64,
}

impl Default for TransportCoeffs {
    fn default() -> Self {
        Self { c_mn: GRAVITY / (1027.0 * 1.2e-4), k_v: 1.0e-5, a_i: 3.0e4, mixing_ln: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Restoring {
    /// Atmospheric target temperatures, °C.
    pub t_north: f64,
    pub t_south: f64,
    pub t_low: f64,
    /// Restoring timescale of a `mixed_layer`-thick column, years.
    pub timescale_years: f64,
    /// Depth over which the surface heat flux acts, m.
    pub mixed_layer: f64,
}

impl Default for Restoring {
    fn default() -> Self {
        Self { t_north: 2.0, t_south: 4.0, t_low: 16.0, timescale_years: 1.0, mixed_layer: 100.0 }
    }
}

impl Restoring {
    /// Piston velocity of the surface heat exchange, m/s.
    pub fn piston_velocity(&self) -> f64 {
        self.mixed_layer / (self.timescale_years * SECONDS_PER_YEAR)
    }
}

/// Full surrogate configuration. Public fluxes are in Sv, lengths in m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub m_ek: f64,
    pub fw_n: f64,
    pub fw_s: f64,
    pub d_low0: f64,
    /// Reference salinity used to turn freshwater into virtual salt fluxes.
    pub s_ref: f64,
    pub areas: BoxAreas,
    pub box_depths: BoxDepths,
    pub eos: Eos,
    pub transport_coeffs: TransportCoeffs,
    pub restoring: Restoring,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            m_ek: 25.0,
            fw_n: 0.05,
            fw_s: 0.5,
            d_low0: 400.0,
            s_ref: 35.0,
            areas: BoxAreas::default(),
            box_depths: BoxDepths::default(),
            eos: Eos::default(),
            transport_coeffs: TransportCoeffs::default(),
            restoring: Restoring::default(),
        }
    }
}

impl ModelParams {
    pub fn with_perturbation(mut self, m_ek: f64, fw_n: f64, d_low0: f64) -> Self {
        self.m_ek = m_ek;
        self.fw_n = fw_n;
        self.d_low0 = d_low0;
        self
    }

    /// Whether the three perturbed parameters sit inside the exploration box.
    pub fn within_bounds(&self) -> bool {
        TABLE1_BOUNDS.contains(self.m_ek, self.fw_n, self.d_low0)
    }

    pub fn validate(&self) -> Result<(), FourBoxError> {
        let positive = [
            ("areas.north", self.areas.north),
            ("areas.south", self.areas.south),
            ("areas.low", self.areas.low),
            ("areas.deep", self.areas.deep),
            ("box_depths.north", self.box_depths.north),
            ("box_depths.south", self.box_depths.south),
            ("box_depths.total", self.box_depths.total),
            ("eos.rho0", self.eos.rho0),
            ("restoring.timescale_years", self.restoring.timescale_years),
            ("restoring.mixed_layer", self.restoring.mixed_layer),
            ("d_low0", self.d_low0),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(FourBoxError::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        let finite = [
            ("m_ek", self.m_ek),
            ("fw_n", self.fw_n),
            ("fw_s", self.fw_s),
            ("s_ref", self.s_ref),
            ("eos.alpha", self.eos.alpha),
            ("eos.beta", self.eos.beta),
            ("eos.t0", self.eos.t0),
            ("eos.s0", self.eos.s0),
            ("transport_coeffs.c_mn", self.transport_coeffs.c_mn),
            ("transport_coeffs.k_v", self.transport_coeffs.k_v),
            ("transport_coeffs.a_i", self.transport_coeffs.a_i),
            ("transport_coeffs.mixing_ln", self.transport_coeffs.mixing_ln),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(FourBoxError::InvalidParams(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Volume of everything except the low-latitude and deep boxes, m³.
    pub(crate) fn fixed_surface_volume(&self) -> f64 {
        self.areas.north * self.box_depths.north + self.areas.south * self.box_depths.south
    }

    pub fn total_volume(&self) -> f64 {
        self.areas.deep * self.box_depths.total
    }

    /// Parse a TOML document; any key left out keeps its default.
    pub fn from_toml_str(text: &str) -> Result<Self, FourBoxError> {
        let params: ModelParams =
            toml::from_str(text).map_err(|e| FourBoxError::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model parameters always serialize")
    }
}
