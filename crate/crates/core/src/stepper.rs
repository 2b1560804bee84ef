//! IMEX time stepping of the coupled system.
//!
//! Each parabolic species is advanced by one backward-Euler diffusion solve
//! whose right-hand side carries the explicit taxis and reaction terms; u_V is
//! advanced cell by cell with classical RK4 while its drivers stay frozen.
//! An outer Picard loop re-evaluates the coupling terms at the freshest
//! iterate until successive iterates agree.

use std::path::PathBuf;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{FunctionalSeries, SeriesRecorder};
use crate::grid::{Field, Grid, TimeWindow};
use crate::linalg::{conjugate_gradient, CsrMatrix};
use crate::model::{drift_vector, reaction, BoundCertificates, ModelParams, Regime, Species};
use crate::monitors::{self, L1Check, MonitorConfig, MonitorMode, Violation};
use crate::operators::{assemble_diffusion_matrix, face_gradient, taxis_divergence, TaxisScheme};

/// Relative residual target for the diffusion solves.
pub const CG_REL_TOL: f64 = 1e-10;

/// The six concentrations at one time level, in [`Species::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFields {
    fields: [Field; 6],
    t: f64,
}

impl StateFields {
    pub fn new(fields: [Field; 6], t: f64) -> Result<Self> {
        for f in &fields[1..] {
            fields[0].same_grid(f)?;
        }
        Ok(StateFields { fields, t })
    }

    /// Spatially constant state with one value per species.
    pub fn uniform(grid: Grid, values: [f64; 6], t: f64) -> Self {
        StateFields { fields: values.map(|v| Field::constant(grid, v)), t }
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    pub fn get(&self, s: Species) -> &Field {
        &self.fields[s.index()]
    }

    pub fn get_mut(&mut self, s: Species) -> &mut Field {
        &mut self.fields[s.index()]
    }

    pub fn fields(&self) -> &[Field; 6] {
        &self.fields
    }

    /// All six values at one cell.
    #[inline]
    pub fn at(&self, cell: usize) -> [f64; 6] {
        std::array::from_fn(|i| self.fields[i].values()[cell])
    }

    /// Grid L2 norm of the difference over all species.
    pub fn distance(&self, other: &StateFields) -> f64 {
        let vol = self.grid().cell_volume();
        let mut acc = 0.0;
        for (a, b) in self.fields.iter().zip(&other.fields) {
            for (x, y) in a.values().iter().zip(b.values()) {
                acc += (x - y) * (x - y);
            }
        }
        (acc * vol).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub taxis: TaxisScheme,
    pub picard_max: usize,
    pub picard_tol: f64,
    pub regime: Regime,
    /// Clip negative values to zero after each step.
    pub clip_negative: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig { taxis: TaxisScheme::Central, picard_max: 5, picard_tol: 1e-10, regime: Regime::Strict, clip_negative: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub dt_used: f64,
    pub picard_iterations: usize,
    pub picard_residual_history: Vec<f64>,
    pub picard_converged: bool,
    pub non_contraction: bool,
    /// CG iterations per parabolic species (C, N, A, I, P), summed over Picard iterates.
    pub linear_solver_iterations: [usize; 5],
    /// Explicit taxis stability numbers `max|W| dt / h` for C and N.
    pub stability_numbers: [f64; 2],
    pub clipped_cells: usize,
}

impl StepReport {
    pub fn max_stability_number(&self) -> f64 {
        self.stability_numbers[0].max(self.stability_numbers[1])
    }
}

/// Extra source terms appended to the equations, used by manufactured-solution studies.
pub trait Forcing {
    /// Cell-wise source for `species` at time `t`, or `None` when absent.
    fn source(&self, species: Species, grid: &Grid, t: f64) -> Option<Vec<f64>>;
}

/// Species order inside one Picard iterate.
pub const SWEEP_ORDER: [Species; 6] = [Species::A, Species::I, Species::P, Species::V, Species::C, Species::N];

fn parabolic_slot(s: Species) -> usize {
    match s {
        Species::C => 0,
        Species::N => 1,
        Species::A => 2,
        Species::I => 3,
        Species::P => 4,
        Species::V => unreachable!("u_V has no diffusion solve"),
    }
}

/// One RK4 step of the u_V equation per cell with u_P, u_I, u_A frozen.
pub fn ode_advance_v(u_v: &Field, u_p: &Field, u_i: &Field, u_a: &Field, params: &ModelParams, dt: f64) -> Result<Field> {
    ode_advance_v_with_source(u_v, u_p, u_i, u_a, params, dt, None)
}

pub(crate) fn ode_advance_v_with_source(
    u_v: &Field,
    u_p: &Field,
    u_i: &Field,
    u_a: &Field,
    params: &ModelParams,
    dt: f64,
    source: Option<&[f64]>,
) -> Result<Field> {
    for f in [u_p, u_i, u_a] {
        u_v.same_grid(f)?;
    }
    let (p, i, a) = (u_p.values(), u_i.values(), u_a.values());
    let out: Vec<f64> = u_v
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v0)| {
            let s = source.map_or(0.0, |s| s[k]);
            let f = |v: f64| reaction(Species::V, &[0.0, 0.0, v, a[k], i[k], p[k]], params) + s;
            let k1 = f(v0);
            let k2 = f(v0 + 0.5 * dt * k1);
            let k3 = f(v0 + 0.5 * dt * k2);
            let k4 = f(v0 + dt * k3);
            v0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        })
        .collect();
    Field::new(*u_v.grid(), out)
}

/// Steps the coupled system with fixed coefficients and scheme flags.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    scheme: SchemeConfig,
}

impl Stepper {
    pub fn new(params: ModelParams, scheme: SchemeConfig) -> Self {
        Stepper { params, scheme }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn scheme(&self) -> &SchemeConfig {
        &self.scheme
    }

    pub fn step(&self, state: &StateFields, dt: f64) -> Result<(StateFields, StepReport)> {
        self.step_forced(state, dt, None)
    }

    pub fn step_forced(&self, state: &StateFields, dt: f64, forcing: Option<&dyn Forcing>) -> Result<(StateFields, StepReport)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let grid = *state.grid();
        let n = grid.total_cells();
        let t_new = state.time() + dt;

        let mut systems: Vec<CsrMatrix> = Vec::with_capacity(5);
        for s in [Species::C, Species::N, Species::A, Species::I, Species::P] {
            let d = self.params.diffusion(s).expect("parabolic");
            systems.push(assemble_diffusion_matrix(d, s, t_new, &grid)?.identity_minus_scaled(dt));
        }
        let sources: [Option<Vec<f64>>; 6] = std::array::from_fn(|i| {
            let s = Species::ALL[i];
            let t_src = if s == Species::V { state.time() + 0.5 * dt } else { t_new };
            forcing.and_then(|f| f.source(s, &grid, t_src))
        });

        let mut report = StepReport {
            dt_used: dt,
            picard_iterations: 0,
            picard_residual_history: Vec::new(),
            picard_converged: false,
            non_contraction: false,
            linear_solver_iterations: [0; 5],
            stability_numbers: [0.0; 2],
            clipped_cells: 0,
        };
        let max_iter = 10 * n;
        let mut work = state.clone();
        let mut increases = 0usize;

        for _ in 0..self.scheme.picard_max.max(1) {
            let previous = work.clone();
            for s in SWEEP_ORDER {
                if s == Species::V {
                    let v = ode_advance_v_with_source(
                        state.get(Species::V),
                        work.get(Species::P),
                        work.get(Species::I),
                        work.get(Species::A),
                        &self.params,
                        dt,
                        sources[Species::V.index()].as_deref(),
                    )?;
                    *work.get_mut(Species::V) = v;
                    continue;
                }
                let taxis = self.taxis_term(s, &work, dt, &mut report)?;
                let old = state.get(s).values();
                let src = sources[s.index()].as_deref();
                let rhs: Vec<f64> = (0..n)
                    .map(|k| {
                        let mut r = reaction(s, &work.at(k), &self.params);
                        if let Some(t) = &taxis {
                            r -= t[k];
                        }
                        if let Some(src) = src {
                            r += src[k];
                        }
                        old[k] + dt * r
                    })
                    .collect();
                let slot = parabolic_slot(s);
                let x = work.get_mut(s).values_mut();
                let out = conjugate_gradient(&systems[slot], &rhs, x, CG_REL_TOL, max_iter);
                report.linear_solver_iterations[slot] += out.iterations;
                if !out.converged {
                    return Err(Error::LinearSolver { species: s, iterations: out.iterations, residual: out.relative_residual });
                }
            }
            for s in Species::ALL {
                if let Some(cell) = work.get(s).first_non_finite() {
                    return Err(Error::NonFinite { species: s, cell });
                }
            }

            let residual = work.distance(&previous);
            report.picard_iterations += 1;
            if let Some(&last) = report.picard_residual_history.last() {
                increases = if residual > last { increases + 1 } else { 0 };
            }
            report.picard_residual_history.push(residual);
            if residual <= self.scheme.picard_tol {
                report.picard_converged = true;
                break;
            }
            if increases >= 3 {
                report.non_contraction = true;
                warn!("Picard residual increased on 3 consecutive iterates: {:?}", report.picard_residual_history);
                return Err(Error::NonContraction { history: report.picard_residual_history });
            }
        }

        if self.scheme.clip_negative {
            for s in Species::ALL {
                for v in work.get_mut(s).values_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                        report.clipped_cells += 1;
                    }
                }
            }
        }
        work.t = t_new;
        Ok((work, report))
    }

    /// `div(B(u) W)` for the cell populations, `None` for species without taxis
    /// or when every relevant chi vanishes.
    fn taxis_term(&self, s: Species, work: &StateFields, dt: f64, report: &mut StepReport) -> Result<Option<Vec<f64>>> {
        let (chi, partner, slot) = match s {
            Species::C => (&self.params.chi_c, Species::N, 0),
            Species::N => (&self.params.chi_n, Species::C, 1),
            _ => return Ok(None),
        };
        if chi.iter().all(|&c| c == 0.0) {
            return Ok(None);
        }
        let grads = [partner, Species::A, Species::I, Species::V].map(|p| face_gradient(work.get(p)));
        let drift = drift_vector(s, [&grads[0], &grads[1], &grads[2], &grads[3]], &self.params)?;
        let number = drift.max_abs_over_spacing() * dt;
        report.stability_numbers[slot] = report.stability_numbers[slot].max(number);
        Ok(Some(taxis_divergence(work.get(s), &drift, self.scheme.taxis)?.into_values()))
    }
}

/// Receives committed states from [`Simulation::run`].
pub trait OutputSink {
    fn record(&mut self, step: usize, state: &StateFields, report: Option<&StepReport>) -> Result<()>;

    /// Persists the state that triggered a halt; returns where it went.
    fn dump_failure(&mut self, _step: usize, _state: &StateFields) -> Result<Option<PathBuf>> {
        Ok(None)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub series: FunctionalSeries,
    pub reports: Vec<StepReport>,
    /// Violations raised in warn mode.
    pub warnings: Vec<Violation>,
    /// Mass-identity checks of u_N, one per step.
    pub l1_checks: Vec<L1Check>,
    pub final_state: StateFields,
    pub positivity_enforced: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Error,
        dump: Option<PathBuf>,
    },
    #[error("monitor hard failure at step {step}: {violations:?}")]
    MonitorHalt { step: usize, violations: Vec<Violation>, dump: Option<PathBuf>, series: FunctionalSeries },
    #[error(transparent)]
    Sink(Error),
}

/// A configured simulation: coefficients, scheme, certificates and monitors.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub stepper: Stepper,
    pub certificates: BoundCertificates,
    pub monitors: MonitorConfig,
}

impl Simulation {
    pub fn new(params: ModelParams, scheme: SchemeConfig, certificates: BoundCertificates, monitors: MonitorConfig) -> Self {
        Simulation { stepper: Stepper::new(params, scheme), certificates, monitors }
    }

    pub fn run(&self, initial: StateFields, window: &TimeWindow, sinks: &mut [&mut dyn OutputSink]) -> Result<RunSummary, RunError> {
        self.run_forced(initial, window, sinks, None)
    }

    pub fn run_forced(
        &self,
        initial: StateFields,
        window: &TimeWindow,
        sinks: &mut [&mut dyn OutputSink],
        forcing: Option<&dyn Forcing>,
    ) -> Result<RunSummary, RunError> {
        let params = self.stepper.params();
        let mut recorder = SeriesRecorder::new(&self.certificates);
        recorder.record(&initial);
        let mut warnings = Vec::new();

        let initial_violations = self.state_violations(&initial, 0);
        self.dispatch(0, &initial, initial_violations, &mut warnings, &recorder, sinks)?;
        for sink in sinks.iter_mut() {
            sink.record(0, &initial, None).map_err(RunError::Sink)?;
        }

        let mut reports = Vec::with_capacity(window.steps());
        let mut l1_checks = Vec::with_capacity(window.steps());
        let mut state = initial;
        for k in 0..window.steps() {
            let step = k + 1;
            let dt = window.step_size(k);
            let (mut next, report) = match self.stepper.step_forced(&state, dt, forcing) {
                Ok(r) => r,
                Err(source) => {
                    let dump = dump_all(sinks, step, &state);
                    return Err(RunError::Step { step, source, dump });
                }
            };
            // pin the clock to the window so the final time is exact
            next.t = window.time_at(step);
            if report.max_stability_number() > 0.5 {
                warn!("step {step}: explicit taxis stability number {:.3} exceeds 0.5", report.max_stability_number());
            }

            let mut violations = self.state_violations(&next, step);
            let l1 = monitors::check_l1_identity(&state, &next, params, dt, &self.monitors, step);
            if let Some(v) = &l1.violation {
                violations.push(v.clone());
            }
            l1_checks.push(l1);
            recorder.record(&next);
            self.dispatch(step, &next, violations, &mut warnings, &recorder, sinks)?;
            for sink in sinks.iter_mut() {
                sink.record(step, &next, Some(&report)).map_err(RunError::Sink)?;
            }
            reports.push(report);
            state = next;
        }

        Ok(RunSummary {
            series: recorder.into_series(),
            reports,
            warnings,
            l1_checks,
            final_state: state,
            positivity_enforced: self.stepper.scheme().clip_negative,
        })
    }

    fn state_violations(&self, state: &StateFields, step: usize) -> Vec<Violation> {
        let mut v = monitors::check_nonnegativity(state, &self.monitors, step);
        v.extend(monitors::check_ceilings(state, &self.certificates, &self.monitors, step));
        v.extend(monitors::check_uv_boundary(state, &self.monitors, step));
        v
    }

    fn dispatch(
        &self,
        step: usize,
        state: &StateFields,
        violations: Vec<Violation>,
        warnings: &mut Vec<Violation>,
        recorder: &SeriesRecorder,
        sinks: &mut [&mut dyn OutputSink],
    ) -> Result<(), RunError> {
        let (hard, soft): (Vec<_>, Vec<_>) = violations.into_iter().partition(|v| v.mode == MonitorMode::Hard);
        for v in &soft {
            warn!("{v}");
        }
        warnings.extend(soft);
        if !hard.is_empty() {
            let dump = dump_all(sinks, step, state);
            return Err(RunError::MonitorHalt { step, violations: hard, dump, series: recorder.series().clone() });
        }
        Ok(())
    }
}

fn dump_all(sinks: &mut [&mut dyn OutputSink], step: usize, state: &StateFields) -> Option<PathBuf> {
    let mut path = None;
    for sink in sinks.iter_mut() {
        match sink.dump_failure(step, state) {
            Ok(Some(p)) => path = path.or(Some(p)),
            Ok(None) => {}
            Err(e) => warn!("failed to write diagnostic snapshot: {e}"),
        }
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample;
    use crate::model::{validate, DiffusionCoefficient};
    use std::f64::consts::PI;

    fn line(n: usize) -> Grid {
        Grid::new(1, &[1.0], &[n]).unwrap()
    }

    #[test]
    fn decoupled_step_is_a_heat_step() {
        let g = line(16);
        let params = ModelParams::inert();
        let u0 = sample(&g, |x| 1.0 + (PI * x[0]).cos()).unwrap();
        let fields: [Field; 6] = std::array::from_fn(|_| u0.clone());
        let state = StateFields::new(fields, 0.0).unwrap();
        let (next, report) = Stepper::new(params, SchemeConfig::default()).step(&state, 0.01).unwrap();
        assert_eq!(next.get(Species::V), state.get(Species::V));
        assert!(report.picard_converged);

        let m = assemble_diffusion_matrix(&DiffusionCoefficient::constant(1.0), Species::C, 0.0, &g).unwrap();
        let a = m.identity_minus_scaled(0.01);
        let lhs = a.matvec(next.get(Species::C).values());
        for (x, y) in lhs.iter().zip(u0.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rk4_keeps_rest_states() {
        let g = line(5);
        let mut p = ModelParams::inert();
        p.mu.v = 2.0;
        p.capacity.v = 0.7;
        p.alpha.a31 = 0.3;
        let zero = Field::zeros(g);
        let v = ode_advance_v(&zero, &Field::constant(g, 0.4), &zero, &Field::constant(g, 1.0), &p, 0.1).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
        let kv = Field::constant(g, 0.7);
        let v = ode_advance_v(&kv, &zero, &zero, &zero, &p, 0.1).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.7));
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        let g = line(3);
        let mut p = ModelParams::inert();
        p.mu.v = 1.1;
        p.capacity.v = 1.5;
        p.alpha.a31 = 0.4;
        p.alpha.a32 = 0.3;
        p.alpha.a33 = 0.8;
        let v0 = Field::new(g, vec![0.2, 0.5, 0.9]).unwrap();
        let (pp, ii, aa) = (Field::constant(g, 0.3), Field::constant(g, 0.6), Field::constant(g, 0.5));
        let local_error = |dt: f64| {
            let one = ode_advance_v(&v0, &pp, &ii, &aa, &p, dt).unwrap();
            let mut two = v0.clone();
            for _ in 0..2 {
                two = ode_advance_v(&two, &pp, &ii, &aa, &p, dt / 2.0).unwrap();
            }
            one.values().iter().zip(two.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = local_error(0.2) / local_error(0.1);
        assert!(ratio > 25.0 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn zero_run_stays_zero() {
        let g = line(8);
        let mut params = ModelParams::inert();
        params.alpha.a21 = 1.0;
        params.mu.c = 1.0;
        let init: [Field; 6] = std::array::from_fn(|_| Field::zeros(g));
        let certs = validate(&params, &init, Regime::Strict).unwrap();
        let sim = Simulation::new(params, SchemeConfig::default(), certs, MonitorConfig::default());
        let window = TimeWindow::new(0.1, 0.01).unwrap();
        let out = sim.run(StateFields::new(init, 0.0).unwrap(), &window, &mut []).unwrap();
        assert_eq!(out.series.len(), window.steps() + 1);
        for s in Species::ALL {
            assert!(out.final_state.get(s).values().iter().all(|&v| v == 0.0));
        }
        assert_eq!(out.final_state.time(), 0.1);
    }
}
