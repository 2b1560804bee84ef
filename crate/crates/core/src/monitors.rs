//! Runtime checks of the a priori bounds: non-negativity, the u_A and u_V
//! ceilings, the induced zero normal derivative of u_V and the u_N mass
//! identity.
//!
//! Monitors only read state. Every finite state produces a verdict.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::{boundary_normal_difference, Field};
use crate::model::{reaction, BoundCertificates, ModelParams, Species};
use crate::stepper::StateFields;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonitorMode {
    Hard,
    Warn,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    Nonnegativity,
    Ceiling,
    UvBoundary,
    L1Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorModes {
    pub nonnegativity: MonitorMode,
    pub ceilings: MonitorMode,
    pub uv_boundary: MonitorMode,
    pub l1_identity: MonitorMode,
}

impl Default for MonitorModes {
    fn default() -> Self {
        MonitorModes { nonnegativity: MonitorMode::Hard, ceilings: MonitorMode::Hard, uv_boundary: MonitorMode::Warn, l1_identity: MonitorMode::Warn }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub negativity_tolerance: f64,
    /// Relative tolerance on the ceilings.
    pub ceiling_tolerance: f64,
    pub boundary_tolerance: f64,
    /// The mass-identity tolerance is this factor times dt times the magnitude of the terms.
    pub l1_identity_factor: f64,
    pub modes: MonitorModes,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            negativity_tolerance: 1e-12,
            ceiling_tolerance: 1e-10,
            boundary_tolerance: 1e-10,
            l1_identity_factor: 10.0,
            modes: MonitorModes::default(),
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("negativity_tolerance", self.negativity_tolerance),
            ("ceiling_tolerance", self.ceiling_tolerance),
            ("boundary_tolerance", self.boundary_tolerance),
            ("l1_identity_factor", self.l1_identity_factor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("monitor {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub monitor: MonitorKind,
    pub step: usize,
    pub species: Species,
    /// Worst cell (for boundary checks, the cell adjacent to the worst face).
    pub cell: usize,
    pub magnitude: f64,
    pub tolerance: f64,
    pub mode: MonitorMode,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} violation for u_{} at step {} cell {}: magnitude {:e} > tolerance {:e} ({:?})",
            self.monitor, self.species, self.step, self.cell, self.magnitude, self.tolerance, self.mode
        )
    }
}

/// One violation per species whose minimum lies below `-negativity_tolerance`.
pub fn check_nonnegativity(state: &StateFields, cfg: &MonitorConfig, step: usize) -> Vec<Violation> {
    let mode = cfg.modes.nonnegativity;
    if mode == MonitorMode::Off {
        return Vec::new();
    }
    Species::ALL
        .into_iter()
        .filter_map(|s| {
            let (cell, min) = argmin(state.get(s))?;
            (min < -cfg.negativity_tolerance).then(|| Violation {
                monitor: MonitorKind::Nonnegativity,
                step,
                species: s,
                cell,
                magnitude: -min,
                tolerance: cfg.negativity_tolerance,
                mode,
            })
        })
        .collect()
}

/// Cells where u_A > M_A (1 + tol) or u_V > M_V (1 + tol); magnitude is the relative excess.
pub fn check_ceilings(state: &StateFields, certs: &BoundCertificates, cfg: &MonitorConfig, step: usize) -> Vec<Violation> {
    let mode = cfg.modes.ceilings;
    if mode == MonitorMode::Off {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (s, ceiling) in [(Species::A, certs.m_a), (Species::V, certs.m_v)] {
        let Some(m) = ceiling else { continue };
        let Some((cell, max)) = argmax(state.get(s)) else { continue };
        if max > m * (1.0 + cfg.ceiling_tolerance) {
            let magnitude = if m > 0.0 { (max - m) / m } else { max };
            out.push(Violation { monitor: MonitorKind::Ceiling, step, species: s, cell, magnitude, tolerance: cfg.ceiling_tolerance, mode });
        }
    }
    out
}

/// Largest boundary normal difference of u_V above `boundary_tolerance`.
pub fn check_uv_boundary(state: &StateFields, cfg: &MonitorConfig, step: usize) -> Vec<Violation> {
    let mode = cfg.modes.uv_boundary;
    if mode == MonitorMode::Off {
        return Vec::new();
    }
    let worst = boundary_normal_difference(state.get(Species::V)).into_iter().max_by(|a, b| a.value.abs().total_cmp(&b.value.abs()));
    match worst {
        Some(b) if b.value.abs() > cfg.boundary_tolerance => vec![Violation {
            monitor: MonitorKind::UvBoundary,
            step,
            species: Species::V,
            cell: b.face.cell,
            magnitude: b.value.abs(),
            tolerance: cfg.boundary_tolerance,
            mode,
        }],
        _ => Vec::new(),
    }
}

/// Largest absolute boundary normal difference of u_V.
pub fn max_uv_boundary_difference(state: &StateFields) -> f64 {
    boundary_normal_difference(state.get(Species::V)).iter().fold(0.0, |m, b| m.max(b.value.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Check {
    pub step: usize,
    /// `(M_next - M_prev)/dt - (R_prev + R_next)/2` with `M = int u_N` and `R = int r_N`.
    pub residual: f64,
    pub tolerance: f64,
    pub violation: Option<Violation>,
}

/// Integral of the u_N reaction term over the domain.
pub fn integrated_reaction_n(state: &StateFields, params: &ModelParams) -> f64 {
    let n = state.grid().total_cells();
    let sum: f64 = (0..n).map(|k| reaction(Species::N, &state.at(k), params)).sum();
    sum * state.grid().cell_volume()
}

/// Discrete residual of `d/dt int u_N + int (a21 u_N u_C + mu_N/K_N u_N^2) = (mu_N - delta_N) int u_N`.
///
/// Diffusion and taxis integrate to zero under zero flux, so the identity
/// only involves the reaction term; its integral is averaged over the two
/// time levels.
pub fn check_l1_identity(prev: &StateFields, next: &StateFields, params: &ModelParams, dt: f64, cfg: &MonitorConfig, step: usize) -> L1Check {
    let mass_prev = prev.get(Species::N).integral();
    let mass_next = next.get(Species::N).integral();
    let r_prev = integrated_reaction_n(prev, params);
    let r_next = integrated_reaction_n(next, params);
    let residual = (mass_next - mass_prev) / dt - 0.5 * (r_prev + r_next);
    let magnitude = 1.0f64.max(mass_prev.abs()).max(r_prev.abs()).max(r_next.abs());
    let tolerance = cfg.l1_identity_factor * dt * magnitude;
    let mode = cfg.modes.l1_identity;
    let violation = (mode != MonitorMode::Off && !(residual.abs() <= tolerance)).then(|| Violation {
        monitor: MonitorKind::L1Identity,
        step,
        species: Species::N,
        cell: 0,
        magnitude: residual.abs(),
        tolerance,
        mode,
    });
    L1Check { step, residual, tolerance, violation }
}

fn argmin(f: &Field) -> Option<(usize, f64)> {
    f.values().iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1))
}

fn argmax(f: &Field) -> Option<(usize, f64)> {
    f.values().iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, Grid};
    use crate::model::Regime;

    fn grid() -> Grid {
        Grid::new(1, &[1.0], &[10]).unwrap()
    }

    fn certs(m_a: Option<f64>, m_v: Option<f64>) -> BoundCertificates {
        BoundCertificates { m_a, m_v, h4_margin: 1.0, chi_margin: 1.0, regime: Regime::Strict, warnings: vec![] }
    }

    #[test]
    fn zero_state_passes_everything() {
        let s = StateFields::uniform(grid(), [0.0; 6], 0.0);
        let cfg = MonitorConfig::default();
        assert!(check_nonnegativity(&s, &cfg, 0).is_empty());
        assert!(check_ceilings(&s, &certs(Some(0.0), Some(0.0)), &cfg, 0).is_empty());
        assert!(check_uv_boundary(&s, &cfg, 0).is_empty());
        let l1 = check_l1_identity(&s, &s, &ModelParams::inert(), 0.1, &cfg, 1);
        assert_eq!(l1.residual, 0.0);
        assert!(l1.violation.is_none());
    }

    #[test]
    fn single_negative_cell_is_reported() {
        let mut s = StateFields::uniform(grid(), [0.5; 6], 0.0);
        s.get_mut(Species::P).values_mut()[7] = -1e-6;
        let v = check_nonnegativity(&s, &MonitorConfig::default(), 3);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].species, v[0].cell, v[0].step), (Species::P, 7, 3));
        assert!((v[0].magnitude - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn ceiling_is_closed() {
        let mut s = StateFields::uniform(grid(), [0.0, 0.0, 0.3, 0.5, 0.0, 0.0], 0.0);
        let c = certs(Some(0.5), Some(0.3));
        assert!(check_ceilings(&s, &c, &MonitorConfig::default(), 0).is_empty());
        s.get_mut(Species::A).values_mut()[4] = 0.505;
        let v = check_ceilings(&s, &c, &MonitorConfig::default(), 0);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].cell, 4);
        assert!(check_ceilings(&s, &certs(None, Some(0.3)), &MonitorConfig::default(), 0).is_empty());
    }

    #[test]
    fn sloped_uv_is_flagged() {
        let g = grid();
        let mut s = StateFields::uniform(g, [0.1; 6], 0.0);
        *s.get_mut(Species::V) = sample(&g, |x| 0.5 + 0.2 * x[0]).unwrap();
        let v = check_uv_boundary(&s, &MonitorConfig::default(), 0);
        assert_eq!(v.len(), 1);
        assert!((v[0].magnitude - 0.2).abs() < 1e-12);
        assert_eq!(v[0].mode, MonitorMode::Warn);
    }

    #[test]
    fn off_mode_is_silent() {
        let mut s = StateFields::uniform(grid(), [0.5; 6], 0.0);
        s.get_mut(Species::C).values_mut()[0] = -1.0;
        let mut cfg = MonitorConfig::default();
        cfg.modes.nonnegativity = MonitorMode::Off;
        assert!(check_nonnegativity(&s, &cfg, 0).is_empty());
    }
}
