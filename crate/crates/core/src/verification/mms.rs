//! Manufactured-solution convergence studies.
//!
//! Each species gets an analytic profile
//! `u(x,t) = base + amplitude * exp(-decay t) * prod_a cos(k_a pi (x_a - o_a) / L_a)`
//! whose normal derivative vanishes on every box face. The source appended to
//! each equation is the residual of that profile in the continuous equation.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample, Field, Grid, TimeWindow, MAX_DIM};
use crate::model::{
    clamp_b, reaction, Capacities, DegradationRates, DiffusionCoefficient, Diffusivities, InteractionRates, ModelParams, ProliferationRates,
    SeparableProfile, Species,
};
use crate::stepper::{Forcing, SchemeConfig, StateFields, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedField {
    pub base: f64,
    pub amplitude: f64,
    /// Cosine mode per axis (0 means constant along that axis).
    pub modes: [u32; MAX_DIM],
    pub decay: f64,
}

impl ManufacturedField {
    pub fn constant(value: f64) -> Self {
        ManufacturedField { base: value, amplitude: 0.0, modes: [0; MAX_DIM], decay: 0.0 }
    }
}

/// Analytic fields for all six species plus the coefficients they are manufactured for.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedCase {
    pub name: String,
    pub params: ModelParams,
    pub scheme: SchemeConfig,
    pub dim: usize,
    pub extents: [f64; MAX_DIM],
    /// In [`Species::ALL`] order.
    pub fields: [ManufacturedField; 6],
}

/// Value, time derivative, gradient and Laplacian of one profile at one point.
struct Jet {
    value: f64,
    dt: f64,
    grad: [f64; MAX_DIM],
    lap: f64,
}

impl ManufacturedCase {
    fn wavenumber(&self, f: &ManufacturedField, a: usize) -> f64 {
        f.modes[a] as f64 * PI / self.extents[a]
    }

    fn jet(&self, s: Species, x: &[f64], t: f64) -> Jet {
        let f = &self.fields[s.index()];
        let e = f.amplitude * (-f.decay * t).exp();
        let cos: Vec<f64> = (0..self.dim).map(|a| (self.wavenumber(f, a) * x[a]).cos()).collect();
        let prod: f64 = cos.iter().product();
        let mut grad = [0.0; MAX_DIM];
        let mut lap = 0.0;
        for a in 0..self.dim {
            let k = self.wavenumber(f, a);
            let others: f64 = (0..self.dim).filter(|&b| b != a).map(|b| cos[b]).product();
            grad[a] = -e * k * (k * x[a]).sin() * others;
            lap -= k * k * e * prod;
        }
        Jet { value: f.base + e * prod, dt: -f.decay * e * prod, grad, lap }
    }

    /// Exact value of species `s` at point `x` (grid coordinates with zero origin).
    pub fn exact(&self, s: Species, x: &[f64], t: f64) -> f64 {
        self.jet(s, x, t).value
    }

    pub fn exact_field(&self, s: Species, grid: &Grid, t: f64) -> Result<Field> {
        sample(grid, |x| self.exact(s, x, t))
    }

    pub fn exact_state(&self, grid: &Grid, t: f64) -> Result<StateFields> {
        let fields = std::array::from_fn(|i| self.exact_field(Species::ALL[i], grid, t));
        let [c, n, v, a, i, p] = fields;
        StateFields::new([c?, n?, v?, a?, i?, p?], t)
    }

    /// Continuous residual `d_t u - RHS(u)` of species `s` at `(x, t)`.
    pub fn source_at(&self, s: Species, x: &[f64], t: f64) -> f64 {
        let jets: Vec<Jet> = Species::ALL.iter().map(|&q| self.jet(q, x, t)).collect();
        let u: [f64; 6] = std::array::from_fn(|i| jets[i].value);
        let me = &jets[s.index()];
        let mut rhs = reaction(s, &u, &self.params);
        if let Some(d) = self.params.diffusion(s) {
            let dv = d.value(x, t);
            let dg = d.gradient(x, t);
            rhs += dv * me.lap + (0..self.dim).map(|a| dg[a] * me.grad[a]).sum::<f64>();
        }
        let taxis = match s {
            Species::C => Some((&self.params.chi_c, Species::N)),
            Species::N => Some((&self.params.chi_n, Species::C)),
            _ => None,
        };
        if let Some((chi, partner)) = taxis {
            let drivers = [partner, Species::A, Species::I, Species::V];
            let mut w = [0.0; MAX_DIM];
            let mut div_w = 0.0;
            for (j, q) in drivers.iter().enumerate() {
                let jq = &jets[q.index()];
                for a in 0..self.dim {
                    w[a] += chi[j] * jq.grad[a];
                }
                div_w += chi[j] * jq.lap;
            }
            let slope = if me.value > 0.0 && me.value < 1.0 { 1.0 } else { 0.0 };
            let grad_dot_w: f64 = (0..self.dim).map(|a| me.grad[a] * w[a]).sum();
            rhs -= slope * grad_dot_w + clamp_b(me.value) * div_w;
        }
        me.dt - rhs
    }

    /// Samples the profiles on a lattice and checks non-negativity, and that
    /// taxis carriers stay inside the unsaturated range (0, 1).
    pub fn check_invariants(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(Error::Harness(format!("manufactured case dimension {} out of range", self.dim)));
        }
        let cells = [17usize; MAX_DIM];
        let grid = Grid::new(self.dim, &self.extents[..self.dim], &cells[..self.dim])?;
        let taxis_c = self.params.chi_c.iter().any(|&c| c != 0.0);
        let taxis_n = self.params.chi_n.iter().any(|&c| c != 0.0);
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for k in 0..grid.total_cells() {
                let x = grid.center(k);
                for s in Species::ALL {
                    let v = self.exact(s, &x[..self.dim], t);
                    if !(v >= 0.0) {
                        return Err(Error::Harness(format!("manufactured u_{s} is negative ({v}) at {x:?}, t = {t}")));
                    }
                    let carrier = (s == Species::C && taxis_c) || (s == Species::N && taxis_n);
                    if carrier && !(v > 0.0 && v < 1.0) {
                        return Err(Error::Harness(format!("manufactured u_{s} = {v} leaves (0, 1) where taxis is active")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self, cells_per_axis: usize) -> Result<Grid> {
        let cells = [cells_per_axis; MAX_DIM];
        Grid::new(self.dim, &self.extents[..self.dim], &cells[..self.dim])
    }
}

impl Forcing for ManufacturedCase {
    fn source(&self, species: Species, grid: &Grid, t: f64) -> Option<Vec<f64>> {
        let out = (0..grid.total_cells()).map(|k| self.source_at(species, &grid.center(k)[..grid.dim()], t)).collect();
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub h: f64,
    pub dt: f64,
    /// Largest grid-L2 error over the six species at the final time.
    pub error: f64,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub case: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn min_order(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.order).reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cells,h,dt,error,order\n");
        for r in &self.rows {
            let order = r.order.map_or(String::new(), |o| format!("{o:.6}"));
            let _ = writeln!(s, "{},{:e},{:e},{:e},{}", r.cells, r.h, r.dt, r.error, order);
        }
        s
    }
}

/// Runs the forced stepper from the exact initial state to `t_end`.
///
/// Returns the final state; `forcing` off gives the plain solver.
pub fn run_case(case: &ManufacturedCase, grid: &Grid, window: &TimeWindow, forcing: bool) -> Result<StateFields> {
    let stepper = Stepper::new(case.params, case.scheme);
    let mut state = case.exact_state(grid, 0.0)?;
    for k in 0..window.steps() {
        let f: Option<&dyn Forcing> = if forcing { Some(case) } else { None };
        let (mut next, _) = stepper.step_forced(&state, window.step_size(k), f)?;
        next.set_time(window.time_at(k + 1));
        state = next;
    }
    Ok(state)
}

/// Grid-L2 error of every species against the exact profiles at the state's time.
pub fn species_errors(case: &ManufacturedCase, state: &StateFields) -> Result<[f64; 6]> {
    let grid = *state.grid();
    let mut out = [0.0; 6];
    for s in Species::ALL {
        let exact = case.exact_field(s, &grid, state.time())?;
        let sq: f64 = state.get(s).values().iter().zip(exact.values()).map(|(a, b)| (a - b) * (a - b)).sum();
        out[s.index()] = (sq * grid.cell_volume()).sqrt();
    }
    Ok(out)
}

/// Convergence study over `ladder` (cells per axis) with `dt = dt_factor * h^2`.
pub fn mms_run(case: &ManufacturedCase, ladder: &[usize], t_end: f64, dt_factor: f64) -> Result<ConvergenceTable> {
    if ladder.len() < 3 {
        return Err(Error::Harness("a convergence ladder needs at least three grids".into()));
    }
    case.check_invariants()?;
    let mut table = ConvergenceTable { case: case.name.clone(), rows: Vec::new() };
    for &n in ladder {
        let grid = case.grid(n)?;
        let h = grid.min_spacing();
        let dt = dt_factor * h * h;
        let window = TimeWindow::new(t_end, dt)?;
        let state = run_case(case, &grid, &window, true)?;
        let error = species_errors(case, &state)?.into_iter().fold(0.0, f64::max);
        let order = table.rows.last().map(|p: &ConvergenceRow| (p.error / error).ln() / (p.h / h).ln());
        table.rows.push(ConvergenceRow { cells: n, h, dt, error, order });
    }
    let monotone = table.rows.windows(2).all(|w| w[1].error < w[0].error);
    if !monotone || table.rows.iter().any(|r| !r.error.is_finite()) {
        return Err(Error::Harness(format!("error is not decreasing across the ladder:\n{}", table.to_csv())));
    }
    Ok(table)
}

fn strict_params() -> ModelParams {
    ModelParams {
        diffusion: Diffusivities {
            c: DiffusionCoefficient::constant(1.0),
            n: DiffusionCoefficient::constant(0.8),
            a: DiffusionCoefficient::separable(
                SeparableProfile { base: 1.0, space_amplitude: 0.3, wavenumbers: [PI, 0.0, 0.0], time_amplitude: 0.1, frequency: 2.0 },
                0.5,
                1.5,
            ),
            i: DiffusionCoefficient::constant(0.6),
            p: DiffusionCoefficient::constant(1.2),
        },
        chi_c: [0.3, 0.2, 0.1, 0.2],
        chi_n: [0.2, 0.1, 0.1, 0.1],
        alpha: InteractionRates { a11: 0.5, a21: 0.5, a31: 0.3, a32: 0.4, a33: 0.2, a41: 0.3, a42: 0.5, a51: 0.2, a52: 0.3, a61: 0.4, a62: 0.3 },
        mu: ProliferationRates { c: 1.0, n: 0.5, v: 0.2, a: 0.3, i: 0.2 },
        capacity: Capacities { c: 1.0, n: 1.0, v: 1.0 },
        delta: DegradationRates { c: 0.1, n: 0.1, p: 0.2 },
        epsilon_reg: 0.0,
    }
}

/// Constant profiles under full coupling: the discrete state never moves.
pub fn constant_case() -> ManufacturedCase {
    ManufacturedCase {
        name: "constant".into(),
        params: strict_params(),
        scheme: SchemeConfig::default(),
        dim: 1,
        extents: [1.0; MAX_DIM],
        fields: [0.4, 0.6, 0.5, 0.3, 0.2, 0.1].map(ManufacturedField::constant),
    }
}

/// Pure diffusion with `1 + cos(pi x) exp(-t)`-type profiles.
pub fn diffusion_case() -> ManufacturedCase {
    let mut params = ModelParams::inert();
    params.diffusion.n = DiffusionCoefficient::constant(0.5);
    params.diffusion.p = strict_params().diffusion.a;
    let f = |modes: u32, decay: f64| ManufacturedField { base: 1.0, amplitude: 1.0, modes: [modes, 0, 0], decay };
    ManufacturedCase {
        name: "diffusion".into(),
        params,
        scheme: SchemeConfig::default(),
        dim: 1,
        extents: [1.0; MAX_DIM],
        fields: [f(1, 1.0), f(2, 1.0), f(1, 1.0), f(1, 0.5), f(3, 1.0), f(1, 1.0)],
    }
}

/// Every coupling active in the strict regime, carriers kept inside (0, 1).
pub fn coupled_case() -> ManufacturedCase {
    let f = |base: f64, amplitude: f64, modes: u32, decay: f64| ManufacturedField { base, amplitude, modes: [modes, 0, 0], decay };
    ManufacturedCase {
        name: "coupled".into(),
        params: strict_params(),
        scheme: SchemeConfig::default(),
        dim: 1,
        extents: [1.0; MAX_DIM],
        fields: [f(0.5, 0.2, 1, 0.5), f(0.5, 0.2, 2, 0.3), f(0.6, 0.2, 1, 0.4), f(0.4, 0.2, 2, 0.5), f(0.3, 0.1, 1, 0.2), f(0.3, 0.1, 2, 0.6)],
    }
}

/// Builtin case by name.
pub fn case_by_name(name: &str) -> Option<ManufacturedCase> {
    match name {
        "constant" => Some(constant_case()),
        "diffusion" => Some(diffusion_case()),
        "coupled" => Some(coupled_case()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_case_is_exact() {
        let case = constant_case();
        let grid = case.grid(12).unwrap();
        let state = run_case(&case, &grid, &TimeWindow::new(0.2, 0.01).unwrap(), true).unwrap();
        let err = species_errors(&case, &state).unwrap();
        assert!(err.iter().all(|e| *e < 1e-14), "{err:?}");
    }

    #[test]
    fn sources_vanish_for_exact_steady_reaction_free_state() {
        let case = diffusion_case();
        // time derivative plus diffusion: for u = 1 + cos(pi x) e^{-t}, d = 1,
        // S = -cos e^{-t} + pi^2 cos e^{-t}
        let x = [0.3];
        let s = case.source_at(Species::C, &x, 0.2);
        let expected = (PI * PI - 1.0) * (PI * 0.3).cos() * (-0.2f64).exp();
        assert!((s - expected).abs() < 1e-13);
    }

    #[test]
    fn cases_satisfy_invariants() {
        for c in [constant_case(), diffusion_case(), coupled_case()] {
            c.check_invariants().unwrap();
        }
    }

    #[test]
    fn short_ladder_is_rejected() {
        assert!(matches!(mms_run(&diffusion_case(), &[8, 16], 0.1, 1.0), Err(Error::Harness(_))));
    }
}
