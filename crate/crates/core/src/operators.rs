//! Discrete spatial operators on the cell-centered grid.
//!
//! Fluxes live on faces. Boundary faces always carry zero flux, which is the
//! discrete form of the homogeneous Neumann condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Side, MAX_DIM};
use crate::linalg::CsrMatrix;
use crate::model::{clamp_b, DiffusionCoefficient, Species};

/// Normal components of a vector field on the faces of a grid, one array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVector {
    grid: Grid,
    axes: Vec<Vec<f64>>,
}

/// Face gradients share the layout of any other face vector field.
pub type FaceGradient = FaceVector;

impl FaceVector {
    pub fn zeros(grid: Grid) -> Self {
        let axes = (0..grid.dim()).map(|a| vec![0.0; grid.face_count(a)]).collect();
        FaceVector { grid, axes }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn axis_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.axes[axis]
    }

    /// Largest absolute face value over all axes.
    pub fn max_abs(&self) -> f64 {
        self.axes.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|value| / h_axis` over all faces.
    pub fn max_abs_over_spacing(&self) -> f64 {
        let mut m = 0.0f64;
        for (a, vals) in self.axes.iter().enumerate() {
            let h = self.grid.spacing()[a];
            m = vals.iter().fold(m, |m, v| m.max(v.abs() / h));
        }
        m
    }
}

/// Cells on either side of an interior face, or `None` for boundary faces.
#[inline]
pub(crate) fn face_cells(grid: &Grid, axis: usize, face: usize) -> Option<(usize, usize)> {
    let mut c = grid.face_coords(axis, face);
    if c[axis] == 0 || c[axis] == grid.cells()[axis] {
        return None;
    }
    let right = grid.index(c);
    c[axis] -= 1;
    Some((grid.index(c), right))
}

pub fn face_gradient(u: &Field) -> FaceGradient {
    let grid = *u.grid();
    let vals = u.values();
    let mut out = FaceVector::zeros(grid);
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        for (f, g) in out.axes[axis].iter_mut().enumerate() {
            if let Some((l, r)) = face_cells(&grid, axis, f) {
                *g = (vals[r] - vals[l]) / h;
            }
        }
    }
    out
}

/// Diffusivity at every cell center at time `t`, spot-checked against its bounds.
pub fn cell_diffusivities(grid: &Grid, d: &DiffusionCoefficient, species: Species, t: f64) -> Result<Vec<f64>> {
    (0..grid.total_cells())
        .map(|k| {
            let x = grid.center(k);
            d.eval(species, &x[..grid.dim()], t)
        })
        .collect()
}

#[inline]
pub(crate) fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Harmonic-mean diffusivities on faces; boundary faces get zero.
pub fn face_diffusivities(grid: &Grid, cell_d: &[f64]) -> FaceVector {
    let mut out = FaceVector::zeros(*grid);
    for axis in 0..grid.dim() {
        for (f, v) in out.axes[axis].iter_mut().enumerate() {
            if let Some((l, r)) = face_cells(grid, axis, f) {
                *v = harmonic_mean(cell_d[l], cell_d[r]);
            }
        }
    }
    out
}

/// Cell-wise divergence of face fluxes.
pub fn divergence(flux: &FaceVector) -> Field {
    let grid = *flux.grid();
    let mut out = vec![0.0; grid.total_cells()];
    for (k, o) in out.iter_mut().enumerate() {
        let c = grid.coords(k);
        let mut acc = 0.0;
        for axis in 0..grid.dim() {
            let mut hi = c;
            hi[axis] += 1;
            let f_lo = flux.axes[axis][grid.face_index(axis, c)];
            let f_hi = flux.axes[axis][grid.face_index(axis, hi)];
            acc += (f_hi - f_lo) / grid.spacing()[axis];
        }
        *o = acc;
    }
    Field::new(grid, out).expect("divergence output matches grid")
}

/// `div(d grad u)` at time `t` with zero-flux boundaries.
pub fn diffusion_apply(u: &Field, d: &DiffusionCoefficient, species: Species, t: f64) -> Result<Field> {
    let grid = *u.grid();
    let cell_d = cell_diffusivities(&grid, d, species, t)?;
    let face_d = face_diffusivities(&grid, &cell_d);
    let mut flux = face_gradient(u);
    for axis in 0..grid.dim() {
        for (g, dd) in flux.axes[axis].iter_mut().zip(&face_d.axes[axis]) {
            *g *= dd;
        }
    }
    Ok(divergence(&flux))
}

/// Sparse form of [`diffusion_apply`]: `M u == diffusion_apply(u)`.
pub fn assemble_diffusion_matrix(d: &DiffusionCoefficient, species: Species, t: f64, grid: &Grid) -> Result<CsrMatrix> {
    let cell_d = cell_diffusivities(grid, d, species, t)?;
    Ok(assemble_from_cell_diffusivities(grid, &cell_d))
}

pub(crate) fn assemble_from_cell_diffusivities(grid: &Grid, cell_d: &[f64]) -> CsrMatrix {
    let n = grid.total_cells();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(n * (2 * grid.dim() + 1));
    let mut vals = Vec::with_capacity(n * (2 * grid.dim() + 1));
    row_ptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * MAX_DIM + 1);
    for k in 0..n {
        row.clear();
        let mut diag = 0.0;
        for axis in 0..grid.dim() {
            let h2 = grid.spacing()[axis] * grid.spacing()[axis];
            for side in [Side::Low, Side::High] {
                if let Some(j) = grid.neighbor(k, axis, side) {
                    let w = harmonic_mean(cell_d[k], cell_d[j]) / h2;
                    row.push((j, w));
                    diag -= w;
                }
            }
        }
        row.push((k, diag));
        row.sort_by_key(|e| e.0);
        for &(j, w) in &row {
            cols.push(j);
            vals.push(w);
        }
        row_ptr.push(cols.len());
    }
    CsrMatrix::from_parts(n, row_ptr, cols, vals, true)
}

/// Carrier evaluation for the taxis flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaxisScheme {
    /// Clamp of the arithmetic mean of the two adjacent cells.
    #[default]
    Central,
    /// Clamp of the upstream cell value relative to the drift direction.
    Upwind,
}

/// Face flux `B(carrier)_face * drift`; zero on boundary faces.
pub fn taxis_flux(carrier: &Field, drift: &FaceVector, scheme: TaxisScheme) -> Result<FaceVector> {
    let grid = *carrier.grid();
    if *drift.grid() != grid {
        return Err(Error::Shape("taxis drift and carrier live on different grids".into()));
    }
    let u = carrier.values();
    let mut flux = FaceVector::zeros(grid);
    for axis in 0..grid.dim() {
        let w = &drift.axes[axis];
        for (f, out) in flux.axes[axis].iter_mut().enumerate() {
            if let Some((l, r)) = face_cells(&grid, axis, f) {
                let b = match scheme {
                    TaxisScheme::Central => clamp_b(0.5 * (u[l] + u[r])),
                    TaxisScheme::Upwind if w[f] >= 0.0 => clamp_b(u[l]),
                    TaxisScheme::Upwind => clamp_b(u[r]),
                };
                *out = b * w[f];
            }
        }
    }
    Ok(flux)
}

/// `div(B(carrier) drift)` with zero flux through the boundary.
pub fn taxis_divergence(carrier: &Field, drift: &FaceVector, scheme: TaxisScheme) -> Result<Field> {
    Ok(divergence(&taxis_flux(carrier, drift, scheme)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample;
    use crate::model::SeparableProfile;
    use std::f64::consts::PI;

    fn line(n: usize) -> Grid {
        Grid::new(1, &[1.0], &[n]).unwrap()
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = line(10);
        let c = Field::constant(g, 4.0);
        assert_eq!(face_gradient(&c).max_abs(), 0.0);
        let lin = sample(&g, |x| x[0]).unwrap();
        let grad = face_gradient(&lin);
        let a = grad.axis(0);
        assert_eq!(a[0], 0.0);
        assert_eq!(a[10], 0.0);
        for v in &a[1..10] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn three_cell_stencil() {
        let g = Grid::new(1, &[3.0], &[3]).unwrap();
        let m = assemble_diffusion_matrix(&DiffusionCoefficient::constant(1.0), Species::C, 0.0, &g).unwrap();
        let dense = m.to_dense();
        assert_eq!(dense, vec![vec![-1.0, 1.0, 0.0], vec![1.0, -2.0, 1.0], vec![0.0, 1.0, -1.0]]);
    }

    #[test]
    fn diffusion_of_constant_is_zero() {
        let g = Grid::new(2, &[1.0, 2.0], &[5, 7]).unwrap();
        let out = diffusion_apply(&Field::constant(g, 3.0), &DiffusionCoefficient::constant(0.7), Species::A, 0.0).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_cosine_is_second_order() {
        let errs: Vec<f64> = [32usize, 64, 128]
            .iter()
            .map(|&n| {
                let g = line(n);
                let u = sample(&g, |x| (PI * x[0]).cos()).unwrap();
                let lap = diffusion_apply(&u, &DiffusionCoefficient::constant(1.0), Species::C, 0.0).unwrap();
                let exact = sample(&g, |x| -PI * PI * (PI * x[0]).cos()).unwrap();
                lap.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9, "{errs:?}");
        }
    }

    #[test]
    fn variable_coefficient_matrix_matches_apply() {
        let g = Grid::new(2, &[1.0, 1.0], &[9, 6]).unwrap();
        let d = DiffusionCoefficient::separable(
            SeparableProfile { base: 0.5, space_amplitude: 0.4, wavenumbers: [3.0, 5.0, 0.0], time_amplitude: 0.0, frequency: 0.0 },
            0.1,
            1.0,
        );
        let m = assemble_diffusion_matrix(&d, Species::P, 0.0, &g).unwrap();
        assert!(m.is_symmetric(0.0));
        let u = sample(&g, |x| (x[0] * 7.0).sin() + x[1] * x[1]).unwrap();
        let a = diffusion_apply(&u, &d, Species::P, 0.0).unwrap();
        let b = m.matvec(u.values());
        for (x, y) in a.values().iter().zip(&b) {
            assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn out_of_bounds_diffusivity_is_rejected() {
        let g = line(5);
        let d = DiffusionCoefficient { profile: crate::model::DiffusionProfile::Constant(2.0), lo: 0.5, hi: 1.0 };
        assert!(matches!(diffusion_apply(&Field::zeros(g), &d, Species::N, 0.0), Err(Error::DiffusionOutOfBounds { species: Species::N, .. })));
    }

    #[test]
    fn saturated_carrier_gives_divergence_of_drift() {
        let g = line(8);
        let carrier = Field::constant(g, 1.5);
        let mut drift = FaceVector::zeros(g);
        for (f, w) in drift.axis_mut(0).iter_mut().enumerate() {
            if f > 0 && f < 8 {
                *w = (f as f64 * 0.37).sin();
            }
        }
        for scheme in [TaxisScheme::Central, TaxisScheme::Upwind] {
            let out = taxis_divergence(&carrier, &drift, scheme).unwrap();
            let direct = divergence(&drift);
            assert_eq!(out.values(), direct.values());
        }
        let zero = taxis_divergence(&carrier, &FaceVector::zeros(g), TaxisScheme::Central).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upwind_takes_upstream_cell() {
        let g = line(3);
        let carrier = Field::new(g, vec![0.2, 0.6, 0.9]).unwrap();
        let mut drift = FaceVector::zeros(g);
        drift.axis_mut(0)[1] = 1.0;
        drift.axis_mut(0)[2] = -2.0;
        let flux = taxis_flux(&carrier, &drift, TaxisScheme::Upwind).unwrap();
        assert_eq!(flux.axis(0), &[0.0, 0.2, -1.8, 0.0]);
    }
}
