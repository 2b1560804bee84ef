//! Discrete function-space diagnostics: L^p norms, the V2 energy norm, and
//! Campanato and Hölder seminorms over stored space-time samples.
//!
//! The seminorms are suprema over a finite lattice of centers and radii, so
//! they are lower bounds of their continuum counterparts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{BoundCertificates, Species};
use crate::operators::face_gradient;
use crate::stepper::StateFields;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpNorm {
    L1,
    L2,
    L3,
    Inf,
}

/// Cell-volume weighted p-norm.
pub fn lp_norm(u: &Field, p: LpNorm) -> f64 {
    let vol = u.grid().cell_volume();
    let v = u.values();
    match p {
        LpNorm::L1 => v.iter().map(|x| x.abs()).sum::<f64>() * vol,
        LpNorm::L2 => (v.iter().map(|x| x * x).sum::<f64>() * vol).sqrt(),
        LpNorm::L3 => (v.iter().map(|x| x.abs().powi(3)).sum::<f64>() * vol).cbrt(),
        LpNorm::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// `||grad u||^2` over interior faces, each weighted by one cell volume.
pub fn gradient_energy(u: &Field) -> f64 {
    let g = face_gradient(u);
    let vol = u.grid().cell_volume();
    (0..u.grid().dim()).map(|a| g.axis(a).iter().map(|x| x * x).sum::<f64>()).sum::<f64>() * vol
}

/// Stored samples of selected species on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHistory {
    grid: Grid,
    times: Vec<f64>,
    data: BTreeMap<Species, Vec<Vec<f64>>>,
}

impl FieldHistory {
    pub fn new(grid: Grid, species: &[Species]) -> Self {
        FieldHistory { grid, times: Vec::new(), data: species.iter().map(|&s| (s, Vec::new())).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn species(&self) -> impl Iterator<Item = Species> + '_ {
        self.data.keys().copied()
    }

    /// Appends one sample; times must increase strictly.
    pub fn push(&mut self, t: f64, fields: &[(Species, &[f64])]) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Diagnostic(format!("history times must increase: {t} after {last}")));
            }
        }
        if fields.len() != self.data.len() {
            return Err(Error::Diagnostic("sample must provide every tracked species".into()));
        }
        for (s, v) in fields {
            if v.len() != self.grid.total_cells() {
                return Err(Error::Shape(format!("sample of {s} has {} values, grid has {}", v.len(), self.grid.total_cells())));
            }
            if !self.data.contains_key(s) {
                return Err(Error::Diagnostic(format!("species {s} is not tracked by this history")));
            }
        }
        for (s, v) in fields {
            self.data.get_mut(s).expect("checked").push(v.to_vec());
        }
        self.times.push(t);
        Ok(())
    }

    pub fn push_state(&mut self, state: &StateFields) -> Result<()> {
        let tracked: Vec<Species> = self.data.keys().copied().collect();
        let fields: Vec<(Species, &[f64])> = tracked.iter().map(|&s| (s, state.get(s).values())).collect();
        self.push(state.time(), &fields)
    }

    pub fn samples(&self, s: Species) -> Result<&[Vec<f64>]> {
        self.data.get(&s).map(|v| v.as_slice()).ok_or_else(|| Error::Diagnostic(format!("species {s} is not stored in this history")))
    }

    pub fn field(&self, s: Species, n: usize) -> Result<Field> {
        Field::new(self.grid, self.samples(s)?[n].clone())
    }

    /// Storage cadence, if uniform to 1e-9 relative.
    pub fn uniform_dt(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::Diagnostic("need at least two stored times".into()));
        }
        let dt = (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                return Err(Error::Diagnostic("storage cadence is not uniform".into()));
            }
        }
        Ok(dt)
    }

    /// Keeps every `stride`-th sample (always including the first).
    pub fn thinned(&self, stride: usize) -> FieldHistory {
        let stride = stride.max(1);
        FieldHistory {
            grid: self.grid,
            times: self.times.iter().copied().step_by(stride).collect(),
            data: self.data.iter().map(|(s, v)| (*s, v.iter().step_by(stride).cloned().collect())).collect(),
        }
    }
}

/// `sup_t ||u||_{L2} + (int_0^T ||grad u||^2 dt)^{1/2}` with trapezoid time integration.
pub fn v2_norm(history: &FieldHistory, s: Species) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::Diagnostic("V2 norm needs at least two samples".into()));
    }
    let grid = *history.grid();
    let samples = history.samples(s)?;
    let mut sup = 0.0f64;
    let mut energy = Vec::with_capacity(samples.len());
    for v in samples {
        let f = Field::new(grid, v.clone())?;
        sup = sup.max(lp_norm(&f, LpNorm::L2));
        energy.push(gradient_energy(&f));
    }
    let t = history.times();
    let integral: f64 = (1..t.len()).map(|n| 0.5 * (t[n] - t[n - 1]) * (energy[n] + energy[n - 1])).sum();
    Ok(sup + integral.sqrt())
}

fn require_finite_param(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Diagnostic(format!("{name} must be finite")));
    }
    Ok(())
}

/// Cells of `grid` whose centers lie within Euclidean distance `< r` of cell
/// `center`, in canonical order; distances use integer offsets times spacing.
fn ball(grid: &Grid, center: usize, r: f64) -> Vec<usize> {
    let c = grid.coords(center);
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        if a < grid.dim() {
            let reach = (r / grid.spacing()[a]).ceil() as usize;
            lo[a] = c[a].saturating_sub(reach);
            hi[a] = (c[a] + reach).min(grid.cells()[a] - 1);
        }
    }
    let mut out = Vec::new();
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let p = [i, j, k];
                let mut d2 = 0.0;
                for a in 0..grid.dim() {
                    let off = (p[a] as f64 - c[a] as f64) * grid.spacing()[a];
                    d2 += off * off;
                }
                if d2 < r * r {
                    out.push(grid.index(p));
                }
            }
        }
    }
    out
}

/// Lattice Campanato seminorm (squared form):
/// `max over stored (x0, t0) and r in radii of r^-mu * sum_A |u - mean_A u|^2 * vol * dt_store`
/// with `A` the stored samples inside `B_r(x0) x (t0 - r^2, t0]`.
/// Cylinders holding a single sample are skipped.
pub fn campanato_seminorm(history: &FieldHistory, s: Species, mu: f64, radii: &[f64]) -> Result<f64> {
    require_finite_param("mu", mu)?;
    if mu < 0.0 {
        return Err(Error::Diagnostic("mu must be non-negative".into()));
    }
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Diagnostic("radii must be positive".into()));
    }
    let dt = history.uniform_dt()?;
    let grid = *history.grid();
    let samples = history.samples(s)?;
    let weight = grid.cell_volume() * dt;
    let mut best: Option<f64> = None;
    for &r in radii {
        let scale = r.powf(-mu);
        let window = |n0: usize| (0..=n0).filter(move |&n| ((n0 - n) as f64) * dt < r * r);
        for n0 in 0..samples.len() {
            let times: Vec<usize> = window(n0).collect();
            for k0 in 0..grid.total_cells() {
                let cells = ball(&grid, k0, r);
                let count = times.len() * cells.len();
                if count < 2 {
                    continue;
                }
                // deviations are taken about the first sample before averaging,
                // so constant data gives exactly zero
                let shift = samples[times[0]][cells[0]];
                let mut sum = 0.0;
                for &n in &times {
                    for &k in &cells {
                        sum += samples[n][k] - shift;
                    }
                }
                let mean = sum / count as f64;
                let mut dev = 0.0;
                for &n in &times {
                    for &k in &cells {
                        let e = (samples[n][k] - shift) - mean;
                        dev += e * e;
                    }
                }
                let value = scale * dev * weight;
                best = Some(best.map_or(value, |b: f64| b.max(value)));
            }
        }
    }
    best.ok_or_else(|| Error::Diagnostic("every cylinder holds a single sample; radii are below grid resolution".into()))
}

/// Lattice Hölder seminorm with parabolic distance `|dx|^alpha + |dt|^(alpha/2)`.
pub fn holder_seminorm(history: &FieldHistory, s: Species, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Diagnostic(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let grid = *history.grid();
    let samples = history.samples(s)?;
    let total = samples.len() * grid.total_cells();
    if total < 2 {
        return Err(Error::Diagnostic("Hölder seminorm needs at least two space-time samples".into()));
    }
    let centers: Vec<[f64; 3]> = (0..grid.total_cells()).map(|k| grid.center(k)).collect();
    let times = history.times();
    let mut best = 0.0f64;
    for n1 in 0..samples.len() {
        for k1 in 0..grid.total_cells() {
            for n2 in n1..samples.len() {
                let start = if n2 == n1 { k1 + 1 } else { 0 };
                let dt = (times[n2] - times[n1]).abs();
                let tpart = dt.powf(alpha / 2.0);
                for k2 in start..grid.total_cells() {
                    let mut d2 = 0.0;
                    for a in 0..grid.dim() {
                        let d = centers[k1][a] - centers[k2][a];
                        d2 += d * d;
                    }
                    let denom = d2.sqrt().powf(alpha) + tpart;
                    if denom == 0.0 {
                        continue;
                    }
                    let ratio = (samples[n1][k1] - samples[n2][k2]).abs() / denom;
                    best = best.max(ratio);
                }
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpeciesNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub min: f64,
    /// Running `sup_t ||u||_{L2}`.
    pub sup_l2: f64,
    /// Running `int_0^t ||grad u||^2`.
    pub grad_sq_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub t: f64,
    /// In [`Species::ALL`] order.
    pub species: [SpeciesNorms; 6],
    /// `M_A - max u_A` when the ceiling exists.
    pub ceiling_margin_a: Option<f64>,
    /// `M_V - max u_V` when the ceiling exists.
    pub ceiling_margin_v: Option<f64>,
}

/// Time-indexed norms and invariant margins of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub records: Vec<SeriesRecord>,
}

impl FunctionalSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&SeriesRecord> {
        self.records.last()
    }
}

/// Builds a [`FunctionalSeries`] one committed state at a time.
#[derive(Debug, Clone)]
pub struct SeriesRecorder {
    m_a: Option<f64>,
    m_v: Option<f64>,
    series: FunctionalSeries,
    last_energy: [f64; 6],
}

impl SeriesRecorder {
    pub fn new(certs: &BoundCertificates) -> Self {
        SeriesRecorder { m_a: certs.m_a, m_v: certs.m_v, series: FunctionalSeries::default(), last_energy: [0.0; 6] }
    }

    pub fn record(&mut self, state: &StateFields) {
        let prev = self.series.records.last().cloned();
        let mut norms = [SpeciesNorms::default(); 6];
        let mut energy = [0.0; 6];
        for s in Species::ALL {
            let f = state.get(s);
            let i = s.index();
            energy[i] = gradient_energy(f);
            let l2 = lp_norm(f, LpNorm::L2);
            let (sup_l2, grad_sq_integral) = match &prev {
                Some(p) => {
                    (p.species[i].sup_l2.max(l2), p.species[i].grad_sq_integral + 0.5 * (state.time() - p.t) * (energy[i] + self.last_energy[i]))
                }
                None => (l2, 0.0),
            };
            norms[i] = SpeciesNorms { l1: lp_norm(f, LpNorm::L1), l2, linf: lp_norm(f, LpNorm::Inf), min: f.min(), sup_l2, grad_sq_integral };
        }
        self.last_energy = energy;
        self.series.records.push(SeriesRecord {
            t: state.time(),
            species: norms,
            ceiling_margin_a: self.m_a.map(|m| m - state.get(Species::A).max()),
            ceiling_margin_v: self.m_v.map(|m| m - state.get(Species::V).max()),
        });
    }

    pub fn series(&self) -> &FunctionalSeries {
        &self.series
    }

    pub fn into_series(self) -> FunctionalSeries {
        self.series
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample;

    fn line(n: usize) -> Grid {
        Grid::new(1, &[1.0], &[n]).unwrap()
    }

    fn frozen(grid: Grid, f: &Field, times: &[f64]) -> FieldHistory {
        let mut h = FieldHistory::new(grid, &[Species::C]);
        for &t in times {
            h.push(t, &[(Species::C, f.values())]).unwrap();
        }
        h
    }

    #[test]
    fn constant_norms() {
        let f = Field::constant(line(10), -3.0);
        for p in [LpNorm::L1, LpNorm::L2, LpNorm::L3, LpNorm::Inf] {
            assert!((lp_norm(&f, p) - 3.0).abs() < 1e-14);
        }
        let half = sample(&line(10), |x| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        assert!((lp_norm(&half, LpNorm::L1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn v2_of_constant_and_linear() {
        let g = line(16);
        let h = frozen(g, &Field::constant(g, 2.0), &[0.0, 0.5, 1.0]);
        assert!((v2_norm(&h, Species::C).unwrap() - 2.0).abs() < 1e-14);

        // the gradient term misses the half-cells next to each boundary face,
        // so it converges like h rather than h^2
        for n in [32usize, 64, 128] {
            let g = line(n);
            let hist = frozen(g, &sample(&g, |x| x[0]).unwrap(), &[0.0, 0.5, 1.0]);
            let v = v2_norm(&hist, Species::C).unwrap();
            let exact = 1.0 + 3f64.sqrt().recip();
            assert!((v - exact).abs() <= 1.0 / n as f64, "n={n} v={v}");
        }
    }

    #[test]
    fn v2_needs_two_samples() {
        let g = line(4);
        let h = frozen(g, &Field::zeros(g), &[0.0]);
        assert!(matches!(v2_norm(&h, Species::C), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn constant_history_has_zero_seminorms() {
        let g = line(8);
        let h = frozen(g, &Field::constant(g, 0.3), &[0.0, 0.1, 0.2, 0.3]);
        assert_eq!(campanato_seminorm(&h, Species::C, 1.5, &[0.25, 0.5]).unwrap(), 0.0);
        assert_eq!(holder_seminorm(&h, Species::C, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn holder_of_linear_profile() {
        let g = line(10);
        let alpha = 0.4;
        let h = frozen(g, &sample(&g, |x| x[0]).unwrap(), &[0.0, 0.1]);
        let v = holder_seminorm(&h, Species::C, alpha).unwrap();
        let expected = (0.9f64).powf(1.0 - alpha);
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn campanato_mu_zero_is_bounded_by_l2() {
        let g = line(8);
        let mut h = FieldHistory::new(g, &[Species::C]);
        let mut total = 0.0;
        for n in 0..6 {
            let v: Vec<f64> = (0..8).map(|k| ((k * 7 + n * 3) % 5) as f64 - 1.7).collect();
            total += v.iter().map(|x| x * x).sum::<f64>() * g.cell_volume() * 0.1;
            h.push(n as f64 * 0.1, &[(Species::C, &v)]).unwrap();
        }
        let c = campanato_seminorm(&h, Species::C, 0.0, &[0.25, 0.5]).unwrap();
        assert!(c <= 4.0 * total);
    }

    #[test]
    fn single_sample_cylinders_are_an_error() {
        let g = line(8);
        let h = frozen(g, &Field::constant(g, 1.0), &[0.0, 1.0]);
        assert!(matches!(campanato_seminorm(&h, Species::C, 1.0, &[0.01]), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn history_rejects_non_increasing_times() {
        let g = line(4);
        let mut h = FieldHistory::new(g, &[Species::C]);
        let z = vec![0.0; 4];
        h.push(0.0, &[(Species::C, &z)]).unwrap();
        assert!(h.push(0.0, &[(Species::C, &z)]).is_err());
    }
}
