//! Right-hand side of the nine prognostic equations and the RK4 stepper.
//!
//! Tracers are carried internally as box inventories (volume times
//! concentration) so that the advective and virtual-salt fluxes cancel
//! exactly in the sums and RK4 preserves total salt to rounding.

use serde::{Deserialize, Serialize};

use super::params::{ModelParams, SECONDS_PER_YEAR, SV};
use super::FourBoxError;

/// Prognostic state: temperatures (°C), salinities (psu) and pycnocline depth (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxState {
    pub t_n: f64,
    pub t_s: f64,
    pub t_l: f64,
    pub t_d: f64,
    pub s_n: f64,
    pub s_s: f64,
    pub s_l: f64,
    pub s_d: f64,
    pub d_low: f64,
}

impl BoxState {
    pub const COMPONENTS: usize = 9;

    /// Standard AMOC-on initialization with the pycnocline at `d_low0`.
    pub fn initial(d_low0: f64) -> Self {
        Self {
            t_n: 2.0,
            t_s: 4.0,
            t_l: 17.0,
            t_d: 3.0,
            s_n: 35.0,
            s_s: 34.0,
            s_l: 36.0,
            s_d: 34.7,
            d_low: d_low0,
        }
    }

    pub fn to_array(&self) -> [f64; 9] {
        [self.t_n, self.t_s, self.t_l, self.t_d, self.s_n, self.s_s, self.s_l, self.s_d, self.d_low]
    }

    pub fn from_array(a: [f64; 9]) -> Self {
        Self {
            t_n: a[0],
            t_s: a[1],
            t_l: a[2],
            t_d: a[3],
            s_n: a[4],
            s_s: a[5],
            s_l: a[6],
            s_d: a[7],
            d_low: a[8],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<(), FourBoxError> {
        if !self.is_finite() {
            return Err(FourBoxError::DegenerateState("non-finite component".into()));
        }
        if self.d_low <= 0.0 {
            return Err(FourBoxError::DegenerateState(format!("d_low = {} m", self.d_low)));
        }
        for s in [self.s_n, self.s_s, self.s_l, self.s_d] {
            if s <= 0.0 {
                return Err(FourBoxError::DegenerateState(format!("salinity {s} psu")));
            }
        }
        Ok(())
    }

    /// Box volumes (north, south, low, deep), m³.
    pub fn volumes(&self, params: &ModelParams) -> [f64; 4] {
        box_volumes(params, self.d_low)
    }

    /// Total salt content ∑ V·S, psu·m³.
    pub fn salt_content(&self, params: &ModelParams) -> f64 {
        let v = self.volumes(params);
        v[0] * self.s_n + v[1] * self.s_s + v[2] * self.s_l + v[3] * self.s_d
    }
}

/// Diagnostic transports (Sv) and box densities (kg/m³).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub m_n: f64,
    pub m_upw: f64,
    pub m_eddy: f64,
    pub rho_n: f64,
    pub rho_l: f64,
    pub rho_s: f64,
    pub rho_d: f64,
}

pub fn density(t: f64, s: f64, eos: &super::params::Eos) -> f64 {
    eos.density(t, s)
}

fn box_volumes(params: &ModelParams, d_low: f64) -> [f64; 4] {
    let v_n = params.areas.north * params.box_depths.north;
    let v_s = params.areas.south * params.box_depths.south;
    let v_l = params.areas.low * d_low;
    let v_d = params.total_volume() - params.fixed_surface_volume() - v_l;
    [v_n, v_s, v_l, v_d]
}

/// Transports in m³/s, before conversion to Sv.
#[derive(Debug, Clone, Copy)]
struct Transports {
    m_n: f64,
    m_upw: f64,
    m_eddy: f64,
    m_mix: f64,
    rho: [f64; 4],
}

fn transports(params: &ModelParams, t: [f64; 4], s: [f64; 4], d_low: f64) -> Transports {
    let eos = &params.eos;
    let rho = [
        eos.density(t[0], s[0]),
        eos.density(t[1], s[1]),
        eos.density(t[2], s[2]),
        eos.density(t[3], s[3]),
    ];
    let c = &params.transport_coeffs;
    Transports {
        m_n: c.c_mn * (rho[0] - rho[2]) * d_low * d_low,
        m_upw: c.k_v * params.areas.low / d_low,
        m_eddy: c.a_i * d_low,
        m_mix: c.mixing_ln * SV,
        rho,
    }
}

/// Diagnostic transports for `state`.
pub fn overturning(state: &BoxState, params: &ModelParams) -> Result<Diagnostics, FourBoxError> {
    if !(state.d_low > 0.0) {
        return Err(FourBoxError::DegenerateState(format!("d_low = {} m", state.d_low)));
    }
    let tr = transports(
        params,
        [state.t_n, state.t_s, state.t_l, state.t_d],
        [state.s_n, state.s_s, state.s_l, state.s_d],
        state.d_low,
    );
    Ok(Diagnostics {
        m_n: tr.m_n / SV,
        m_upw: tr.m_upw / SV,
        m_eddy: tr.m_eddy / SV,
        rho_n: tr.rho[0],
        rho_l: tr.rho[2],
        rho_s: tr.rho[1],
        rho_d: tr.rho[3],
    })
}

/// Inventory form of the state: [D_low, V·T for n,s,l,d, V·S for n,s,l,d].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Inventory(pub [f64; 9]);

impl Inventory {
    pub fn from_state(state: &BoxState, params: &ModelParams) -> Self {
        let v = box_volumes(params, state.d_low);
        Self([
            state.d_low,
            v[0] * state.t_n,
            v[1] * state.t_s,
            v[2] * state.t_l,
            v[3] * state.t_d,
            v[0] * state.s_n,
            v[1] * state.s_s,
            v[2] * state.s_l,
            v[3] * state.s_d,
        ])
    }

    pub fn to_state(&self, params: &ModelParams) -> BoxState {
        let x = &self.0;
        let v = box_volumes(params, x[0]);
        BoxState {
            t_n: x[1] / v[0],
            t_s: x[2] / v[1],
            t_l: x[3] / v[2],
            t_d: x[4] / v[3],
            s_n: x[5] / v[0],
            s_s: x[6] / v[1],
            s_l: x[7] / v[2],
            s_d: x[8] / v[3],
            d_low: x[0],
        }
    }

    fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Net advective tendency of one tracer in each box (n, s, l, d), tracer·m³/s.
fn advect(c: [f64; 4], m_ek: f64, tr: &Transports) -> [f64; 4] {
    let [cn, cs, cl, cd] = c;
    let mut out = [0.0; 4];
    // Ekman: deep water upwells in the south and is pushed north into the low box.
    out[1] += m_ek * (cd - cs);
    out[2] += m_ek * cs;
    out[3] -= m_ek * cd;
    // Eddy return flow: low-latitude water carried south, then subducted.
    out[2] -= tr.m_eddy * cl;
    out[1] += tr.m_eddy * (cl - cs);
    out[3] += tr.m_eddy * cs;
    // Diffusive upwelling through the low-latitude pycnocline.
    out[2] += tr.m_upw * cd;
    out[3] -= tr.m_upw * cd;
    // Two-way lateral exchange; moves no volume.
    let mix = tr.m_mix * (cl - cn);
    out[0] += mix;
    out[2] -= mix;
    if tr.m_n > 0.0 {
        // On: low-latitude water is carried north and sinks.
        let m = tr.m_n;
        out[2] -= m * cl;
        out[0] += m * (cl - cn);
        out[3] += m * cn;
    } else {
        // Off: deep water upwells in the north and is recycled to the low box.
        let m = -tr.m_n;
        out[3] -= m * cd;
        out[0] += m * (cd - cn);
        out[2] += m * cn;
    }
    out
}

/// Time derivative of the inventory, per year.
pub(crate) fn tendency(inv: &Inventory, params: &ModelParams) -> Inventory {
    let x = &inv.0;
    let d_low = x[0];
    let v = box_volumes(params, d_low);
    let t = [x[1] / v[0], x[2] / v[1], x[3] / v[2], x[4] / v[3]];
    let s = [x[5] / v[0], x[6] / v[1], x[7] / v[2], x[8] / v[3]];
    let tr = transports(params, t, s, d_low);
    let m_ek = params.m_ek * SV;

    let dd = (m_ek + tr.m_upw - tr.m_eddy - tr.m_n) / params.areas.low;

    let mut heat = advect(t, m_ek, &tr);
    let w = params.restoring.piston_velocity();
    let r = &params.restoring;
    heat[0] += params.areas.north * w * (r.t_north - t[0]);
    heat[1] += params.areas.south * w * (r.t_south - t[1]);
    heat[2] += params.areas.low * w * (r.t_low - t[2]);

    let mut salt = advect(s, m_ek, &tr);
    let fw_n = params.fw_n * SV * params.s_ref;
    let fw_s = params.fw_s * SV * params.s_ref;
    salt[0] -= fw_n;
    salt[1] -= fw_s;
    salt[2] += fw_n + fw_s;

    let k = SECONDS_PER_YEAR;
    Inventory([
        dd * k,
        heat[0] * k,
        heat[1] * k,
        heat[2] * k,
        heat[3] * k,
        salt[0] * k,
        salt[1] * k,
        salt[2] * k,
        salt[3] * k,
    ])
}

fn axpy(base: &Inventory, h: f64, k: &Inventory) -> Inventory {
    let mut out = base.0;
    for (o, ki) in out.iter_mut().zip(k.0.iter()) {
        *o += h * ki;
    }
    Inventory(out)
}

/// One classical RK4 step of length `dt` years in inventory space.
pub(crate) fn rk4(inv: &Inventory, params: &ModelParams, dt: f64) -> Result<Inventory, FourBoxError> {
    let k1 = tendency(inv, params);
    let k2 = tendency(&axpy(inv, 0.5 * dt, &k1), params);
    let k3 = tendency(&axpy(inv, 0.5 * dt, &k2), params);
    let k4 = tendency(&axpy(inv, dt, &k3), params);
    let mut out = inv.0;
    for i in 0..9 {
        out[i] += dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
    }
    let next = Inventory(out);
    if !next.is_finite() || next.0[0] <= 0.0 {
        return Err(FourBoxError::NumericalBlowup { time_years: None });
    }
    Ok(next)
}

/// Advance `state` by one step of `dt` years.
pub fn step(state: &BoxState, params: &ModelParams, dt: f64) -> Result<BoxState, FourBoxError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FourBoxError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    state.validate()?;
    let next = rk4(&Inventory::from_state(state, params), params, dt)?;
    let out = next.to_state(params);
    if !out.is_finite() {
        return Err(FourBoxError::NumericalBlowup { time_years: None });
    }
    Ok(out)
}

/// Time derivative of the concentration-form state, per year.
pub fn rhs(state: &BoxState, params: &ModelParams) -> Result<BoxState, FourBoxError> {
    state.validate()?;
    let inv = Inventory::from_state(state, params);
    let d = tendency(&inv, params);
    let v = box_volumes(params, state.d_low);
    let dv_l = params.areas.low * d.0[0];
    let dv_d = -dv_l;
    // d(C)/dt = (d(VC)/dt - C dV/dt) / V
    Ok(BoxState {
        t_n: d.0[1] / v[0],
        t_s: d.0[2] / v[1],
        t_l: (d.0[3] - state.t_l * dv_l) / v[2],
        t_d: (d.0[4] - state.t_d * dv_d) / v[3],
        s_n: d.0[5] / v[0],
        s_s: d.0[6] / v[1],
        s_l: (d.0[7] - state.s_l * dv_l) / v[2],
        s_d: (d.0[8] - state.s_d * dv_d) / v[3],
        d_low: d.0[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourbox::params::{Eos, TransportCoeffs};

    #[test]
    fn density_reference_point() {
        let eos = Eos::default();
        assert_eq!(density(eos.t0, eos.s0, &eos), eos.rho0);
        assert!(density(eos.t0 + 1.0, eos.s0, &eos) < eos.rho0);
    }

    #[test]
    fn density_hand_evaluated() {
        // 1027 * (1 - 2e-4 * (4 - 10) + 8e-4 * (35 - 35)) = 1027 * 1.0012
        let rho = density(4.0, 35.0, &Eos::default());
        assert!((rho - 1028.2324).abs() < 1e-9);
    }

    #[test]
    fn zero_density_difference_gives_no_overturning() {
        let mut s = BoxState::initial(300.0);
        s.t_n = s.t_l;
        s.s_n = s.s_l;
        let d = overturning(&s, &ModelParams::default()).unwrap();
        assert_eq!(d.m_n, 0.0);
    }

    #[test]
    fn overturning_is_quadratic_in_depth() {
        let p = ModelParams::default();
        let a = overturning(&BoxState::initial(150.0), &p).unwrap();
        let b = overturning(&BoxState::initial(300.0), &p).unwrap();
        assert!((b.m_n / a.m_n - 4.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_depth_is_rejected() {
        let mut s = BoxState::initial(300.0);
        s.d_low = 0.0;
        assert!(matches!(
            overturning(&s, &ModelParams::default()),
            Err(FourBoxError::DegenerateState(_))
        ));
    }

    #[test]
    fn relaxation_fixed_point_is_stationary() {
        let mut p = ModelParams::default();
        p.m_ek = 0.0;
        p.fw_n = 0.0;
        p.fw_s = 0.0;
        p.transport_coeffs = TransportCoeffs { c_mn: 0.0, k_v: 0.0, a_i: 0.0, mixing_ln: 0.0 };
        let mut s = BoxState::initial(300.0);
        s.t_n = p.restoring.t_north;
        s.t_s = p.restoring.t_south;
        s.t_l = p.restoring.t_low;
        let next = step(&s, &p, 0.05).unwrap();
        for (a, b) in s.to_array().iter().zip(next.to_array().iter()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn single_step_conserves_salt() {
        let p = ModelParams::default().with_perturbation(20.0, 0.8, 150.0);
        let s = BoxState::initial(150.0);
        let next = step(&s, &p, 0.05).unwrap();
        let before = s.salt_content(&p);
        let after = next.salt_content(&p);
        assert!(((after - before) / before).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_dt_is_rejected() {
        let p = ModelParams::default();
        assert!(step(&BoxState::initial(300.0), &p, 0.0).is_err());
    }
}
