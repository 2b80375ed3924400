//! Hysteresis sweeps over the northern freshwater flux and location of the
//! collapse and recovery thresholds.
//!
//! The upward and downward branches are traced by continuation: every point
//! is equilibrated starting from the previous point's equilibrium. The collapse
//! threshold is the freshwater flux at which a run started from the standard
//! on-state with pycnocline depth `d_low0` stops holding the overturning on;
//! this is the quantity that depends on `d_low0`. The recovery threshold is the
//! point at which the downward (off) branch turns back on.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourbox::{
    collapse_verdict, overturning, simulate, BoxState, Diagnostics, FourBoxError, IntegrationConfig, ModelParams,
    DEFAULT_DT_YEARS, DEFAULT_HORIZON_YEARS, TABLE1_BOUNDS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BifurcationError {
    #[error("no convergence after {years} y (max relative change {residual:e} per century)")]
    NoConvergence { state: Box<BoxState>, diagnostics: Box<Diagnostics>, years: f64, residual: f64 },
    #[error("collapse indicator agrees at both ends of [{lo}, {hi}] Sv")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] FourBoxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquilibrationConfig {
    pub dt_years: f64,
    /// Spacing of convergence checks.
    pub check_every_years: f64,
    /// Largest tolerated relative change of any component between checks.
    pub rel_tol: f64,
    pub max_years: f64,
}

impl Default for EquilibrationConfig {
    fn default() -> Self {
        Self { dt_years: DEFAULT_DT_YEARS, check_every_years: 100.0, rel_tol: 1e-6, max_years: 20_000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: BoxState,
    pub diagnostics: Diagnostics,
    pub years: f64,
}

fn max_relative_change(a: &BoxState, b: &BoxState) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array().iter())
        .map(|(x, y)| (y - x).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Integrate until no component moves by more than `rel_tol` per check interval.
pub fn equilibrate(
    params: &ModelParams,
    init: &BoxState,
    cfg: &EquilibrationConfig,
) -> Result<Equilibrium, BifurcationError> {
    if !(cfg.check_every_years > 0.0 && cfg.max_years >= cfg.check_every_years) {
        return Err(BifurcationError::InvalidArgument("equilibration window".into()));
    }
    let chunk = IntegrationConfig {
        horizon_years: cfg.check_every_years,
        dt_years: cfg.dt_years,
        output_every_years: cfg.check_every_years,
    };
    let mut state = *init;
    let mut years = 0.0;
    let mut residual = f64::INFINITY;
    while years + cfg.check_every_years <= cfg.max_years + 1e-9 {
        let run = simulate(params, &state, &chunk)?;
        years += cfg.check_every_years;
        residual = max_relative_change(&state, &run.final_state);
        state = run.final_state;
        if residual < cfg.rel_tol {
            return Ok(Equilibrium { state, diagnostics: run.final_diagnostics, years });
        }
    }
    let diagnostics = overturning(&state, params)?;
    Err(BifurcationError::NoConvergence { state: Box::new(state), diagnostics: Box::new(diagnostics), years, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Parameters other than M_ek, F_w^n and D_low0.
    pub base: ModelParams,
    pub equilibration: EquilibrationConfig,
    /// Horizon of the cold-start collapse indicator.
    pub horizon_years: f64,
    /// Width to which thresholds are bisected, Sv.
    pub tol: f64,
    /// Permit sweep ranges outside the exploration box.
    pub allow_out_of_bounds: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: ModelParams::default(),
            equilibration: EquilibrationConfig::default(),
            horizon_years: DEFAULT_HORIZON_YEARS,
            tol: 1e-3,
            allow_out_of_bounds: false,
        }
    }
}

impl SweepConfig {
    fn params(&self, m_ek: f64, fw_n: f64, d_low0: f64) -> ModelParams {
        self.base.with_perturbation(m_ek, fw_n, d_low0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub fw_n: f64,
    pub m_n: f64,
    /// False when equilibration hit its horizon cap; `m_n` is then the last value reached.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub m_ek: f64,
    pub d_low0: f64,
    pub upward_branch: Vec<BranchPoint>,
    pub downward_branch: Vec<BranchPoint>,
    /// First F_w^n at which the standard on-state run collapses.
    pub critical_collapse_fwn: Option<f64>,
    /// F_w^n below which the off branch no longer exists.
    pub critical_recovery_fwn: Option<f64>,
    /// Midpoint of the grid interval where the upward branch changes sign.
    pub branch_collapse_fwn: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramSummary {
    pub m_ek: f64,
    pub d_low0: f64,
    pub critical_collapse_fwn: Option<f64>,
    pub critical_recovery_fwn: Option<f64>,
}

/// Cold-start collapse indicator: does the run from the standard on-state collapse?
pub fn collapses(m_ek: f64, fw_n: f64, d_low0: f64, cfg: &SweepConfig) -> Result<bool, BifurcationError> {
    Ok(collapse_verdict(&cfg.params(m_ek, fw_n, d_low0), cfg.horizon_years)?.collapsed)
}

/// Bisect the collapse indicator on `bracket` until its width is at most `tol`.
pub fn locate_critical(
    m_ek: f64,
    d_low0: f64,
    bracket: (f64, f64),
    tol: f64,
    cfg: &SweepConfig,
) -> Result<f64, BifurcationError> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi && tol > 0.0) {
        return Err(BifurcationError::InvalidArgument(format!("bracket [{lo}, {hi}] with tol {tol}")));
    }
    let c_lo = collapses(m_ek, lo, d_low0, cfg)?;
    let c_hi = collapses(m_ek, hi, d_low0, cfg)?;
    if c_lo == c_hi {
        return Err(BifurcationError::NoSignChange { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if collapses(m_ek, mid, d_low0, cfg)? == c_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn branch_point(params: &ModelParams, state: &BoxState, cfg: &EquilibrationConfig) -> Result<(BranchPoint, BoxState), BifurcationError> {
    match equilibrate(params, state, cfg) {
        Ok(eq) => Ok((BranchPoint { fw_n: params.fw_n, m_n: eq.diagnostics.m_n, converged: true }, eq.state)),
        Err(BifurcationError::NoConvergence { state, diagnostics, .. }) => {
            Ok((BranchPoint { fw_n: params.fw_n, m_n: diagnostics.m_n, converged: false }, *state))
        }
        Err(e) => Err(e),
    }
}

/// Trace both hysteresis branches over `fwn_range` and locate the thresholds.
pub fn sweep_freshwater(
    m_ek: f64,
    d_low0: f64,
    fwn_range: (f64, f64),
    steps: usize,
    cfg: &SweepConfig,
) -> Result<BifurcationDiagram, BifurcationError> {
    let (lo, hi) = fwn_range;
    if steps < 2 || !(lo < hi) {
        return Err(BifurcationError::InvalidArgument(format!("{steps} steps over [{lo}, {hi}]")));
    }
    if !cfg.allow_out_of_bounds {
        let (blo, bhi) = TABLE1_BOUNDS.fw_n;
        if lo < blo - 1e-12 || hi > bhi + 1e-12 {
            return Err(BifurcationError::InvalidArgument(format!(
                "range [{lo}, {hi}] Sv outside [{blo}, {bhi}] Sv"
            )));
        }
    }
    let grid = linspace(lo, hi, steps);

    let mut state = BoxState::initial(d_low0);
    let mut upward_branch = Vec::with_capacity(steps);
    for &fw in &grid {
        let (point, next) = branch_point(&cfg.params(m_ek, fw, d_low0), &state, &cfg.equilibration)?;
        upward_branch.push(point);
        state = next;
    }
    let mut downward_branch = Vec::with_capacity(steps);
    let mut down_states = Vec::with_capacity(steps);
    for &fw in grid.iter().rev() {
        let (point, next) = branch_point(&cfg.params(m_ek, fw, d_low0), &state, &cfg.equilibration)?;
        downward_branch.push(point);
        down_states.push(next);
        state = next;
    }

    let branch_collapse_fwn = upward_branch
        .windows(2)
        .find(|w| w[0].m_n > 0.0 && w[1].m_n <= 0.0)
        .map(|w| 0.5 * (w[0].fw_n + w[1].fw_n));

    let indicator: Vec<bool> = grid
        .iter()
        .map(|&fw| collapses(m_ek, fw, d_low0, cfg))
        .collect::<Result<_, _>>()?;
    let critical_collapse_fwn = match indicator.windows(2).position(|w| !w[0] && w[1]) {
        Some(i) => Some(locate_critical(m_ek, d_low0, (grid[i], grid[i + 1]), cfg.tol, cfg)?),
        None if indicator[0] => Some(grid[0]),
        None => None,
    };

    let critical_recovery_fwn = match downward_branch.windows(2).position(|w| w[0].m_n <= 0.0 && w[1].m_n > 0.0) {
        Some(i) => Some(refine_recovery(
            m_ek,
            d_low0,
            (downward_branch[i + 1].fw_n, downward_branch[i].fw_n),
            &down_states[i],
            cfg,
        )?),
        None => None,
    };

    Ok(BifurcationDiagram {
        m_ek,
        d_low0,
        upward_branch,
        downward_branch,
        critical_collapse_fwn,
        critical_recovery_fwn,
        branch_collapse_fwn,
    })
}

/// Bisect the end of the off branch, continuing from the off equilibrium at `bracket.1`.
fn refine_recovery(
    m_ek: f64,
    d_low0: f64,
    bracket: (f64, f64),
    off_state: &BoxState,
    cfg: &SweepConfig,
) -> Result<f64, BifurcationError> {
    let (mut lo, mut hi) = bracket;
    let mut off = *off_state;
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        let (point, next) = branch_point(&cfg.params(m_ek, mid, d_low0), &off, &cfg.equilibration)?;
        if point.m_n <= 0.0 {
            hi = mid;
            off = next;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sweep several (M_ek, D_low0) pairs; results keep the input order.
pub fn sweep_family(
    pairs: &[(f64, f64)],
    fwn_range: (f64, f64),
    steps: usize,
    cfg: &SweepConfig,
) -> Vec<Result<BifurcationDiagram, BifurcationError>> {
    pairs
        .par_iter()
        .map(|&(m_ek, d_low0)| sweep_freshwater(m_ek, d_low0, fwn_range, steps, cfg))
        .collect()
}

impl BifurcationDiagram {
    pub fn summary(&self) -> DiagramSummary {
        DiagramSummary {
            m_ek: self.m_ek,
            d_low0: self.d_low0,
            critical_collapse_fwn: self.critical_collapse_fwn,
            critical_recovery_fwn: self.critical_recovery_fwn,
        }
    }

    pub fn branch_csv(branch: &[BranchPoint]) -> String {
        let mut out = String::from("fw_n_sv,m_n_sv,converged\n");
        for p in branch {
            let _ = writeln!(out, "{},{},{}", p.fw_n, p.m_n, p.converged);
        }
        out
    }

    /// M_n against F_w^n with both branches and the threshold markers.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 420.0;
        const PAD: f64 = 56.0;
        let points = self.upward_branch.iter().chain(&self.downward_branch);
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.fw_n);
            x1 = x1.max(p.fw_n);
            y0 = y0.min(p.m_n);
            y1 = y1.max(p.m_n);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, -1.0, 1.0);
        }
        y0 = y0.min(0.0);
        y1 = y1.max(0.0);
        let (x1, y1) = (if x1 > x0 { x1 } else { x0 + 1.0 }, if y1 > y0 { y1 } else { y0 + 1.0 });
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
            b = H - PAD,
            r = W - PAD
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{PAD}" y1="{z}" x2="{r}" y2="{z}" stroke="#999" stroke-dasharray="2,3"/>"##,
            z = sy(0.0),
            r = W - PAD
        );
        for (branch, color, label) in
            [(&self.upward_branch, "#c0392b", "increasing F_w^n"), (&self.downward_branch, "#2471a3", "decreasing F_w^n")]
        {
            let pts: Vec<String> = branch.iter().map(|p| format!("{:.2},{:.2}", sx(p.fw_n), sy(p.m_n))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{label}</title></polyline>"#,
                pts.join(" ")
            );
        }
        for (value, color) in [(self.critical_collapse_fwn, "#c0392b"), (self.critical_recovery_fwn, "#2471a3")] {
            if let Some(v) = value {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x}" y1="{PAD}" x2="{x}" y2="{b}" stroke="{color}" stroke-dasharray="6,4"/>"#,
                    x = sx(v),
                    b = H - PAD
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">F_w^n (Sv)</text>"#,
            W / 2.0,
            H - 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">M_n (Sv)</text>"#,
            H / 2.0,
            H / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle">M_ek = {} Sv, D_low0 = {} m</text>"#,
            W / 2.0,
            self.m_ek,
            self.d_low0
        );
        for (v, anchor, y) in [(x0, "start", H - PAD + 16.0), (x1, "end", H - PAD + 16.0)] {
            let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="{anchor}">{v:.2}</text>"#, sx(v));
        }
        for v in [y0, y1] {
            let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, PAD - 4.0, sy(v) + 4.0);
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Resolution of the region grid over the exploration box (nodes per axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub m_ek: usize,
    pub fw_n: usize,
    pub d_low0: usize,
}

impl RegionGrid {
    pub fn uniform(n: usize) -> Self {
        Self { m_ek: n, fw_n: n, d_low0: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionNode {
    pub m_ek: f64,
    pub fw_n: f64,
    pub d_low0: f64,
    /// None when the node failed to integrate; see `error`.
    pub collapsed: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub grid: RegionGrid,
    /// Nodes ordered with d_low0 varying fastest, then fw_n, then m_ek.
    pub nodes: Vec<RegionNode>,
}

impl RegionMap {
    pub fn collapse_fraction(&self) -> f64 {
        let labeled: Vec<bool> = self.nodes.iter().filter_map(|n| n.collapsed).collect();
        if labeled.is_empty() {
            return 0.0;
        }
        labeled.iter().filter(|&&c| c).count() as f64 / labeled.len() as f64
    }

    pub fn node(&self, i_mek: usize, i_fw: usize, i_d: usize) -> &RegionNode {
        &self.nodes[(i_mek * self.grid.fw_n + i_fw) * self.grid.d_low0 + i_d]
    }
}

/// Label every node of a uniform grid over the exploration box.
pub fn collapse_region_map(grid: RegionGrid, cfg: &SweepConfig) -> Result<RegionMap, BifurcationError> {
    if grid.m_ek < 2 || grid.fw_n < 2 || grid.d_low0 < 2 {
        return Err(BifurcationError::InvalidArgument("grid needs at least 2 nodes per axis".into()));
    }
    let b = TABLE1_BOUNDS;
    let mek = linspace(b.m_ek.0, b.m_ek.1, grid.m_ek);
    let fw = linspace(b.fw_n.0, b.fw_n.1, grid.fw_n);
    let d = linspace(b.d_low0.0, b.d_low0.1, grid.d_low0);
    let mut coords = Vec::with_capacity(mek.len() * fw.len() * d.len());
    for &m in &mek {
        for &f in &fw {
            for &z in &d {
                coords.push((m, f, z));
            }
        }
    }
    let nodes = coords
        .par_iter()
        .map(|&(m_ek, fw_n, d_low0)| match collapses(m_ek, fw_n, d_low0, cfg) {
            Ok(c) => RegionNode { m_ek, fw_n, d_low0, collapsed: Some(c), error: None },
            Err(e) => RegionNode { m_ek, fw_n, d_low0, collapsed: None, error: Some(e.to_string()) },
        })
        .collect();
    Ok(RegionMap { grid, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_rejects_degenerate_grid() {
        let cfg = SweepConfig::default();
        assert!(sweep_freshwater(25.0, 400.0, (0.05, 1.55), 1, &cfg).is_err());
        assert!(sweep_freshwater(25.0, 400.0, (0.05, 3.0), 5, &cfg).is_err());
    }

    #[test]
    fn region_map_rejects_single_node_axis() {
        let grid = RegionGrid { m_ek: 1, fw_n: 2, d_low0: 2 };
        assert!(collapse_region_map(grid, &SweepConfig::default()).is_err());
    }

    #[test]
    fn equilibrium_start_returns_after_one_check() {
        let cfg = EquilibrationConfig::default();
        let p = ModelParams::default();
        let eq = equilibrate(&p, &BoxState::initial(400.0), &cfg).unwrap();
        let again = equilibrate(&p, &eq.state, &cfg).unwrap();
        assert_eq!(again.years, cfg.check_every_years);
        assert!((again.diagnostics.m_n - eq.diagnostics.m_n).abs() < 1e-4);
    }

    #[test]
    fn tol_equal_to_width_returns_midpoint() {
        let cfg = SweepConfig::default();
        let x = locate_critical(15.0, 100.0, (0.05, 1.55), 1.5, &cfg).unwrap();
        assert_eq!(x, 0.8);
    }

    #[test]
    fn svg_has_both_branches() {
        let d = BifurcationDiagram {
            m_ek: 25.0,
            d_low0: 400.0,
            upward_branch: vec![
                BranchPoint { fw_n: 0.1, m_n: 10.0, converged: true },
                BranchPoint { fw_n: 0.2, m_n: -3.0, converged: true },
            ],
            downward_branch: vec![
                BranchPoint { fw_n: 0.2, m_n: -3.0, converged: true },
                BranchPoint { fw_n: 0.1, m_n: -1.0, converged: false },
            ],
            critical_collapse_fwn: Some(0.15),
            critical_recovery_fwn: None,
            branch_collapse_fwn: Some(0.15),
        };
        let svg = d.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(BifurcationDiagram::branch_csv(&d.downward_branch).contains("0.1,-1,false"));
    }
}
