//! Discrete weak-form residuals of the six equations against smooth test
//! functions `phi(x,t) = sum_j c_j prod_a cos(k_a pi x_a / L_a) q_j(t)`.
//!
//! Space integrals are cell sums, time integrals use the trapezoid rule on the
//! stored samples, and gradient terms pair face gradients of the solution with
//! face differences of the sampled test function.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::FieldHistory;
use crate::grid::{sample, Field, Grid, MAX_DIM};
use crate::model::{drift_vector, reaction, ModelParams, Species};
use crate::operators::{cell_diffusivities, face_diffusivities, face_gradient, taxis_flux, FaceVector, TaxisScheme};

/// Test functions must vanish at the final time to this accuracy.
pub const FINAL_TIME_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeFactor {
    /// `1 - t/T`
    Linear,
    /// `(1 - t/T)^2`
    Quadratic,
    /// `(t/T)(1 - t/T)`
    Bubble,
    /// `1`, only admissible with the final-trace form.
    One,
}

impl TimeFactor {
    fn value(self, t: f64, t_end: f64) -> f64 {
        let s = t / t_end;
        match self {
            TimeFactor::Linear => 1.0 - s,
            TimeFactor::Quadratic => (1.0 - s) * (1.0 - s),
            TimeFactor::Bubble => s * (1.0 - s),
            TimeFactor::One => 1.0,
        }
    }

    fn derivative(self, t: f64, t_end: f64) -> f64 {
        let s = t / t_end;
        match self {
            TimeFactor::Linear => -1.0 / t_end,
            TimeFactor::Quadratic => -2.0 * (1.0 - s) / t_end,
            TimeFactor::Bubble => (1.0 - 2.0 * s) / t_end,
            TimeFactor::One => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestTerm {
    pub coefficient: f64,
    pub modes: [u32; MAX_DIM],
    pub time: TimeFactor,
}

/// A finite combination of tensor-cosine terms on the box `[0, L]^d` and `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub terms: Vec<TestTerm>,
    pub t_end: f64,
}

impl TestFunction {
    pub fn single(modes: [u32; MAX_DIM], time: TimeFactor, t_end: f64) -> Self {
        TestFunction { terms: vec![TestTerm { coefficient: 1.0, modes, time }], t_end }
    }

    /// `phi = 1` on the whole cylinder.
    pub fn one(t_end: f64) -> Self {
        Self::single([0; MAX_DIM], TimeFactor::One, t_end)
    }

    /// `a self + b other`.
    pub fn combine(&self, a: f64, other: &TestFunction, b: f64) -> TestFunction {
        let mut terms: Vec<TestTerm> = self.terms.iter().map(|t| TestTerm { coefficient: a * t.coefficient, ..*t }).collect();
        terms.extend(other.terms.iter().map(|t| TestTerm { coefficient: b * t.coefficient, ..*t }));
        TestFunction { terms, t_end: self.t_end }
    }

    fn space(term: &TestTerm, grid: &Grid, x: &[f64]) -> f64 {
        (0..grid.dim()).map(|a| (term.modes[a] as f64 * PI * (x[a] - grid.origin()[a]) / grid.extents()[a]).cos()).product()
    }

    pub fn value(&self, grid: &Grid, x: &[f64], t: f64) -> f64 {
        self.terms.iter().map(|tt| tt.coefficient * Self::space(tt, grid, x) * tt.time.value(t, self.t_end)).sum()
    }

    pub fn time_derivative(&self, grid: &Grid, x: &[f64], t: f64) -> f64 {
        self.terms.iter().map(|tt| tt.coefficient * Self::space(tt, grid, x) * tt.time.derivative(t, self.t_end)).sum()
    }

    /// Largest `|phi(x, T)|` over cell centers.
    pub fn final_trace(&self, grid: &Grid) -> f64 {
        (0..grid.total_cells()).map(|k| self.value(grid, &grid.center(k)[..grid.dim()], self.t_end).abs()).fold(0.0, f64::max)
    }
}

/// Tensor cosines with every mode `<= 3` per axis, times each vanishing time factor.
pub fn test_bank(dim: usize, t_end: f64) -> Vec<TestFunction> {
    let mut modes = vec![[0u32; MAX_DIM]];
    for a in 0..dim {
        modes = modes
            .into_iter()
            .flat_map(|m| {
                (0..=3).map(move |k| {
                    let mut m = m;
                    m[a] = k;
                    m
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for m in modes {
        for time in [TimeFactor::Linear, TimeFactor::Quadratic, TimeFactor::Bubble] {
            out.push(TestFunction::single(m, time, t_end));
        }
    }
    out
}

/// Per-sample quantities that do not depend on the test function.
struct SampleTerms {
    t: f64,
    values: [Vec<f64>; 6],
    /// `d grad u` at faces, per parabolic species (zero for u_V).
    diffusive_flux: [Option<FaceVector>; 6],
    /// `B(u) W` at faces for u_C and u_N.
    taxis_flux: [Option<FaceVector>; 6],
    reaction: [Vec<f64>; 6],
}

fn sample_terms(history: &FieldHistory, n: usize, params: &ModelParams, scheme: TaxisScheme) -> Result<SampleTerms> {
    let grid = *history.grid();
    let t = history.times()[n];
    let fields: Vec<Field> = Species::ALL.iter().map(|&s| history.field(s, n)).collect::<Result<_>>()?;
    let values: [Vec<f64>; 6] = std::array::from_fn(|i| fields[i].values().to_vec());
    let grads: Vec<FaceVector> = fields.iter().map(face_gradient).collect();
    let mut diffusive_flux: [Option<FaceVector>; 6] = Default::default();
    for s in Species::PARABOLIC {
        let d = params.diffusion(s).expect("parabolic");
        let fd = face_diffusivities(&grid, &cell_diffusivities(&grid, d, s, t)?);
        let mut flux = grads[s.index()].clone();
        for a in 0..grid.dim() {
            for (g, dd) in flux.axis_mut(a).iter_mut().zip(fd.axis(a)) {
                *g *= dd;
            }
        }
        diffusive_flux[s.index()] = Some(flux);
    }
    let mut taxis: [Option<FaceVector>; 6] = Default::default();
    for (s, partner) in [(Species::C, Species::N), (Species::N, Species::C)] {
        let g = |q: Species| &grads[q.index()];
        let drift = drift_vector(s, [g(partner), g(Species::A), g(Species::I), g(Species::V)], params)?;
        taxis[s.index()] = Some(taxis_flux(&fields[s.index()], &drift, scheme)?);
    }
    let cells = grid.total_cells();
    let reaction: [Vec<f64>; 6] = std::array::from_fn(|i| {
        (0..cells)
            .map(|k| {
                let u: [f64; 6] = std::array::from_fn(|j| values[j][k]);
                reaction(Species::ALL[i], &u, params)
            })
            .collect()
    });
    Ok(SampleTerms { t, values, diffusive_flux, taxis_flux: taxis, reaction })
}

fn face_dot(a: &FaceVector, b: &FaceVector) -> f64 {
    (0..a.grid().dim()).map(|ax| a.axis(ax).iter().zip(b.axis(ax)).map(|(x, y)| x * y).sum::<f64>()).sum()
}

/// Signed residuals, one row per test function, six columns in [`Species::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakResiduals {
    pub rows: Vec<[f64; 6]>,
}

impl WeakResiduals {
    /// Largest `|residual|` per equation over the bank.
    pub fn max_per_equation(&self) -> [f64; 6] {
        let mut out = [0.0f64; 6];
        for r in &self.rows {
            for i in 0..6 {
                out[i] = out[i].max(r[i].abs());
            }
        }
        out
    }

    pub fn max(&self) -> f64 {
        self.max_per_equation().into_iter().fold(0.0, f64::max)
    }
}

/// Residual of the weak form for test functions vanishing at the final time.
pub fn weak_residual(history: &FieldHistory, params: &ModelParams, scheme: TaxisScheme, bank: &[TestFunction]) -> Result<WeakResiduals> {
    for (j, phi) in bank.iter().enumerate() {
        let trace = phi.final_trace(history.grid());
        if trace > FINAL_TIME_TOL {
            return Err(Error::Harness(format!("test function {j} does not vanish at the final time (|phi(T)| = {trace:e})")));
        }
    }
    residual_impl(history, params, scheme, bank, false)
}

/// Weak residual with the final-time trace `+ int u(T) phi(T)` added, which
/// admits test functions that do not vanish at T.
pub fn weak_residual_with_final_trace(
    history: &FieldHistory,
    params: &ModelParams,
    scheme: TaxisScheme,
    bank: &[TestFunction],
) -> Result<WeakResiduals> {
    residual_impl(history, params, scheme, bank, true)
}

fn residual_impl(
    history: &FieldHistory,
    params: &ModelParams,
    scheme: TaxisScheme,
    bank: &[TestFunction],
    final_trace: bool,
) -> Result<WeakResiduals> {
    if history.len() < 2 {
        return Err(Error::Harness("weak residual needs at least two stored times".into()));
    }
    if history.species().count() != 6 {
        return Err(Error::Harness("weak residual needs every species in the history".into()));
    }
    let grid = *history.grid();
    let t_end = *history.times().last().expect("non-empty");
    for phi in bank {
        if (phi.t_end - t_end).abs() > 1e-12 * t_end.max(1.0) {
            return Err(Error::Harness(format!("test function final time {} differs from history end {t_end}", phi.t_end)));
        }
    }
    let vol = grid.cell_volume();
    let times = history.times();
    let m = times.len();
    let weights: Vec<f64> = (0..m)
        .map(|n| {
            let left = if n > 0 { times[n] - times[n - 1] } else { 0.0 };
            let right = if n + 1 < m { times[n + 1] - times[n] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();

    let mut rows = vec![[0.0f64; 6]; bank.len()];
    for n in 0..m {
        let terms = sample_terms(history, n, params, scheme)?;
        let w = weights[n];
        for (phi, row) in bank.iter().zip(rows.iter_mut()) {
            let phi_cells = sample(&grid, |x| phi.value(&grid, x, terms.t))?;
            let dphi_dt = sample(&grid, |x| phi.time_derivative(&grid, x, terms.t))?;
            let grad_phi = face_gradient(&phi_cells);
            for s in Species::ALL {
                let i = s.index();
                let u = &terms.values[i];
                let mut integrand = 0.0;
                for k in 0..u.len() {
                    integrand += (-u[k] * dphi_dt.values()[k] - terms.reaction[i][k] * phi_cells.values()[k]) * vol;
                }
                if let Some(f) = &terms.diffusive_flux[i] {
                    integrand += face_dot(f, &grad_phi) * vol;
                }
                if let Some(f) = &terms.taxis_flux[i] {
                    integrand -= face_dot(f, &grad_phi) * vol;
                }
                row[i] += w * integrand;
                if n == 0 {
                    row[i] -= u.iter().zip(phi_cells.values()).map(|(a, b)| a * b).sum::<f64>() * vol;
                }
                if final_trace && n + 1 == m {
                    row[i] += u.iter().zip(phi_cells.values()).map(|(a, b)| a * b).sum::<f64>() * vol;
                }
            }
        }
    }
    Ok(WeakResiduals { rows })
}
