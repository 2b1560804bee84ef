//! Rectangular cell-centered grids, time windows and scalar fields.
//!
//! Cells are ordered with axis 0 fastest. Zero-flux boundaries are encoded by
//! reflecting ghost cells: the ghost value beyond a boundary face equals the
//! adjacent interior value, so every boundary face carries zero flux.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [f64; MAX_DIM],
    cells: [usize; MAX_DIM],
    spacing: [f64; MAX_DIM],
    origin: [f64; MAX_DIM],
}

impl Grid {
    pub fn new(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Self> {
        Self::with_origin(dim, extents, cells, &vec![0.0; dim])
    }

    pub fn with_origin(dim: usize, extents: &[f64], cells: &[usize], origin: &[f64]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Config(format!("grid dimension must be 1, 2 or 3, got {dim}")));
        }
        if extents.len() != dim || cells.len() != dim || origin.len() != dim {
            return Err(Error::Config(format!(
                "grid of dimension {dim} needs {dim} extents, cells and origin entries (got {}, {}, {})",
                extents.len(),
                cells.len(),
                origin.len()
            )));
        }
        let mut g = Grid { dim, extents: [1.0; MAX_DIM], cells: [1; MAX_DIM], spacing: [1.0; MAX_DIM], origin: [0.0; MAX_DIM] };
        for a in 0..dim {
            if !(extents[a].is_finite() && extents[a] > 0.0) {
                return Err(Error::Config(format!("extent along axis {a} must be positive and finite, got {}", extents[a])));
            }
            if cells[a] < 3 {
                return Err(Error::Config(format!("axis {a} needs at least 3 cells, got {}", cells[a])));
            }
            if !origin[a].is_finite() {
                return Err(Error::Config(format!("origin along axis {a} is not finite")));
            }
            g.extents[a] = extents[a];
            g.cells[a] = cells[a];
            g.spacing[a] = extents[a] / cells[a] as f64;
            g.origin[a] = origin[a];
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn total_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extents().iter().product()
    }

    /// Smallest cell width over the active axes.
    pub fn min_spacing(&self) -> f64 {
        self.spacing().iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn index(&self, coords: [usize; MAX_DIM]) -> usize {
        coords[0] + self.cells[0] * (coords[1] + self.cells[1] * coords[2])
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; MAX_DIM] {
        let i0 = index % self.cells[0];
        let rest = index / self.cells[0];
        [i0, rest % self.cells[1], rest / self.cells[1]]
    }

    pub fn center(&self, index: usize) -> [f64; MAX_DIM] {
        let c = self.coords(index);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.origin[a] + (c[a] as f64 + 0.5) * self.spacing[a];
        }
        x
    }

    /// Neighbor across the face on `side` along `axis`, or `None` at the boundary.
    #[inline]
    pub fn neighbor(&self, index: usize, axis: usize, side: Side) -> Option<usize> {
        let mut c = self.coords(index);
        match side {
            Side::Low if c[axis] == 0 => None,
            Side::Low => {
                c[axis] -= 1;
                Some(self.index(c))
            }
            Side::High if c[axis] + 1 == self.cells[axis] => None,
            Side::High => {
                c[axis] += 1;
                Some(self.index(c))
            }
        }
    }

    /// Number of faces normal to `axis`, boundary faces included.
    pub fn face_count(&self, axis: usize) -> usize {
        self.total_cells() / self.cells[axis] * (self.cells[axis] + 1)
    }

    /// Linear index of the face normal to `axis` whose `axis` coordinate is
    /// `coords[axis]` (0..=cells[axis]); face arrays use axis-0-fastest order
    /// with `cells[axis] + 1` entries along `axis`.
    #[inline]
    pub fn face_index(&self, axis: usize, coords: [usize; MAX_DIM]) -> usize {
        let mut n = self.cells;
        n[axis] += 1;
        coords[0] + n[0] * (coords[1] + n[1] * coords[2])
    }

    #[inline]
    pub fn face_coords(&self, axis: usize, face: usize) -> [usize; MAX_DIM] {
        let mut n = self.cells;
        n[axis] += 1;
        let i0 = face % n[0];
        let rest = face / n[0];
        [i0, rest % n[1], rest / n[1]]
    }

    pub fn is_boundary_face(&self, axis: usize, face: usize) -> bool {
        let c = self.face_coords(axis, face);
        c[axis] == 0 || c[axis] == self.cells[axis]
    }

    /// Measure associated with a face normal to `axis`: cross-section times normal spacing.
    pub fn face_volume(&self, _axis: usize) -> f64 {
        self.cell_volume()
    }

    /// Boundary faces in a fixed order: axis, then low before high side, then
    /// the adjacent cell in canonical order.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let mut out = Vec::new();
        for axis in 0..self.dim {
            for side in [Side::Low, Side::High] {
                for k in 0..self.total_cells() {
                    let c = self.coords(k);
                    let on_side = match side {
                        Side::Low => c[axis] == 0,
                        Side::High => c[axis] + 1 == self.cells[axis],
                    };
                    if on_side {
                        out.push(BoundaryFace { axis, side, cell: k });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFace {
    pub axis: usize,
    pub side: Side,
    /// Interior cell adjacent to the face.
    pub cell: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    t_end: f64,
    dt: f64,
    steps: usize,
}

impl TimeWindow {
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && t_end.is_finite() && dt > 0.0 && dt <= t_end) {
            return Err(Error::Config(format!("time window needs 0 < dt <= t_end, got dt={dt}, t_end={t_end}")));
        }
        let ratio = t_end / dt;
        let nearest = ratio.round();
        let steps = if (ratio - nearest).abs() <= 1e-9 * nearest { nearest } else { ratio.ceil() } as usize;
        Ok(TimeWindow { t_end, dt, steps: steps.max(1) })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Time after `k` completed steps; exact `t_end` after the last one.
    pub fn time_at(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }

    /// Length of step `k` (0-based); the final step absorbs the remainder.
    pub fn step_size(&self, k: usize) -> f64 {
        self.time_at(k + 1) - self.time_at(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_cells() {
            return Err(Error::Shape(format!("field has {} values but the grid has {} cells", values.len(), grid.total_cells())));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field { grid, values: vec![value; grid.total_cells()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cell sum times cell volume.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// Samples `f` at every cell center.
pub fn sample(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Result<Field> {
    let mut values = Vec::with_capacity(grid.total_cells());
    for k in 0..grid.total_cells() {
        let x = grid.center(k);
        let v = f(&x[..grid.dim()]);
        if !v.is_finite() {
            return Err(Error::Initialization { cell: k, value: v });
        }
        values.push(v);
    }
    Field::new(*grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryValue {
    pub face: BoundaryFace,
    pub value: f64,
}

/// One-sided second-order estimate of the outward normal derivative at every
/// boundary face, built from the three interior cells nearest to the face.
pub fn boundary_normal_difference(field: &Field) -> Vec<BoundaryValue> {
    let grid = field.grid();
    let u = field.values();
    grid.boundary_faces()
        .into_iter()
        .map(|face| {
            let h = grid.spacing()[face.axis];
            let inward = match face.side {
                Side::Low => Side::High,
                Side::High => Side::Low,
            };
            let k0 = face.cell;
            let k1 = grid.neighbor(k0, face.axis, inward).expect("axis has at least 3 cells");
            let k2 = grid.neighbor(k1, face.axis, inward).expect("axis has at least 3 cells");
            // outward derivative: (2 u0 - 3 u1 + u2) / h on either side
            let value = (2.0 * u[k0] - 3.0 * u[k1] + u[k2]) / h;
            BoundaryValue { face, value }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn spacing_and_counts() {
        let g = Grid::new(1, &[1.0], &[10]).unwrap();
        assert_eq!(g.spacing(), &[0.1]);
        let g = Grid::new(2, &[2.0, 1.0], &[20, 10]).unwrap();
        assert_eq!(g.spacing(), &[0.1, 0.1]);
        assert_eq!(g.total_cells(), 200);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(Grid::new(1, &[1.0], &[2]), Err(Error::Config(_))));
        assert!(matches!(Grid::new(1, &[0.0], &[5]), Err(Error::Config(_))));
        assert!(matches!(Grid::new(2, &[1.0, -1.0], &[5, 5]), Err(Error::Config(_))));
        assert!(matches!(Grid::new(4, &[1.0; 4], &[5; 4]), Err(Error::Config(_))));
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(3, &[1.0, 2.0, 3.0], &[4, 3, 5]).unwrap();
        for k in 0..g.total_cells() {
            assert_eq!(g.index(g.coords(k)), k);
        }
        assert_eq!(g.index([1, 0, 0]), 1);
        assert_eq!(g.index([0, 1, 0]), 4);
        let axis = 1;
        for f in 0..g.face_count(axis) {
            assert_eq!(g.face_index(axis, g.face_coords(axis, f)), f);
        }
    }

    #[test]
    fn sample_linear_and_zero() {
        let g = Grid::new(1, &[1.0], &[10]).unwrap();
        let z = sample(&g, |_| 0.0).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let f = sample(&g, |x| x[0]).unwrap();
        for (k, v) in f.values().iter().enumerate() {
            assert!((v - (0.05 + 0.1 * k as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_reports_non_finite_cell() {
        let g = Grid::new(1, &[1.0], &[10]).unwrap();
        let err = sample(&g, |x| if x[0] > 0.5 { f64::NAN } else { 1.0 }).unwrap_err();
        assert!(matches!(err, Error::Initialization { cell: 5, .. }));
    }

    #[test]
    fn constant_integrates_to_volume() {
        let g = Grid::new(2, &[2.0, 0.5], &[7, 9]).unwrap();
        let f = Field::constant(g, 3.0);
        assert!((f.integral() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn normal_difference_of_constant_and_linear() {
        let g = Grid::new(1, &[1.0], &[10]).unwrap();
        let c = Field::constant(g, 2.5);
        assert!(boundary_normal_difference(&c).iter().all(|b| b.value == 0.0));
        let lin = sample(&g, |x| x[0]).unwrap();
        let b = boundary_normal_difference(&lin);
        assert_eq!(b.len(), 2);
        assert!((b[0].value + 1.0).abs() < 1e-12);
        assert!((b[1].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_difference_of_cosine_converges() {
        // cos(pi x) has zero end slopes and vanishing third derivative there,
        // so the one-sided estimate decays at least like h^2.
        let errs: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let g = Grid::new(1, &[1.0], &[n]).unwrap();
                let f = sample(&g, |x| (PI * x[0]).cos()).unwrap();
                boundary_normal_difference(&f).iter().map(|b| b.value.abs()).fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9, "{errs:?}");
        }
    }

    #[test]
    fn reflected_boundary_layers_have_zero_difference() {
        // a field that is flat across the three cells next to each boundary
        let g = Grid::new(2, &[1.0, 1.0], &[8, 6]).unwrap();
        let f = sample(&g, |x| {
            let s = |t: f64| (t.clamp(0.45, 0.55) * PI).sin();
            s(x[0]) * s(x[1])
        })
        .unwrap();
        assert!(boundary_normal_difference(&f).iter().all(|b| b.value.abs() < 1e-13));
    }

    #[test]
    fn time_window_shortens_final_step() {
        let w = TimeWindow::new(1.0, 0.3).unwrap();
        assert_eq!(w.steps(), 4);
        assert!((w.step_size(3) - 0.1).abs() < 1e-12);
        assert_eq!(w.time_at(4), 1.0);
        let w = TimeWindow::new(1.0, 1e-3).unwrap();
        assert_eq!(w.steps(), 1000);
        assert!(TimeWindow::new(1.0, 2.0).is_err());
        assert!(TimeWindow::new(1.0, 0.0).is_err());
    }
}
