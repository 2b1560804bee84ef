//! Model coefficients, hypothesis validation and pointwise reaction terms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, HypothesisError, Result};
use crate::grid::{Field, MAX_DIM};
use crate::operators::FaceVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    C,
    N,
    V,
    A,
    I,
    P,
}

impl Species {
    /// State order used for storage and output.
    pub const ALL: [Species; 6] = [Species::C, Species::N, Species::V, Species::A, Species::I, Species::P];
    /// Species governed by a parabolic equation (everything except u_V).
    pub const PARABOLIC: [Species; 5] = [Species::C, Species::N, Species::A, Species::I, Species::P];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Species::C => 'C',
            Species::N => 'N',
            Species::V => 'V',
            Species::A => 'A',
            Species::I => 'I',
            Species::P => 'P',
        }
    }

    pub fn from_letter(c: char) -> Option<Species> {
        Species::ALL.into_iter().find(|s| s.letter() == c)
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Whether the taxis smallness condition is a hard requirement or only a warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Strict,
    Exploratory,
}

/// `d(x,t) = base (1 + space_amplitude prod_a cos(k_a x_a)) (1 + time_amplitude sin(frequency t))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableProfile {
    pub base: f64,
    pub space_amplitude: f64,
    pub wavenumbers: [f64; MAX_DIM],
    pub time_amplitude: f64,
    pub frequency: f64,
}

impl SeparableProfile {
    fn space_factor(&self, x: &[f64]) -> f64 {
        let prod: f64 = x.iter().zip(&self.wavenumbers).map(|(xa, k)| (k * xa).cos()).product();
        1.0 + self.space_amplitude * prod
    }

    fn time_factor(&self, t: f64) -> f64 {
        1.0 + self.time_amplitude * (self.frequency * t).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiffusionProfile {
    Constant(f64),
    Separable(SeparableProfile),
}

/// A diffusivity with declared ellipticity bounds `lo <= d(x,t) <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCoefficient {
    pub profile: DiffusionProfile,
    pub lo: f64,
    pub hi: f64,
}

impl DiffusionCoefficient {
    pub fn constant(value: f64) -> Self {
        DiffusionCoefficient { profile: DiffusionProfile::Constant(value), lo: value, hi: value }
    }

    pub fn separable(profile: SeparableProfile, lo: f64, hi: f64) -> Self {
        DiffusionCoefficient { profile: DiffusionProfile::Separable(profile), lo, hi }
    }

    /// Unchecked evaluation.
    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        match &self.profile {
            DiffusionProfile::Constant(v) => *v,
            DiffusionProfile::Separable(p) => p.base * p.space_factor(x) * p.time_factor(t),
        }
    }

    /// Evaluation with the ellipticity spot check.
    pub fn eval(&self, species: Species, x: &[f64], t: f64) -> Result<f64> {
        let value = self.value(x, t);
        if !(value >= self.lo && value <= self.hi) {
            let mut xx = [0.0; MAX_DIM];
            xx[..x.len()].copy_from_slice(x);
            return Err(Error::DiffusionOutOfBounds { species, x: xx, t, value, lo: self.lo, hi: self.hi });
        }
        Ok(value)
    }

    /// Analytic spatial gradient.
    pub fn gradient(&self, x: &[f64], t: f64) -> [f64; MAX_DIM] {
        let mut g = [0.0; MAX_DIM];
        if let DiffusionProfile::Separable(p) = &self.profile {
            let scale = p.base * p.space_amplitude * p.time_factor(t);
            for a in 0..x.len() {
                let mut prod = -p.wavenumbers[a] * (p.wavenumbers[a] * x[a]).sin();
                for b in 0..x.len() {
                    if b != a {
                        prod *= (p.wavenumbers[b] * x[b]).cos();
                    }
                }
                g[a] = scale * prod;
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diffusivities {
    pub c: DiffusionCoefficient,
    pub n: DiffusionCoefficient,
    pub a: DiffusionCoefficient,
    pub i: DiffusionCoefficient,
    pub p: DiffusionCoefficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InteractionRates {
    pub a11: f64,
    pub a21: f64,
    pub a31: f64,
    pub a32: f64,
    pub a33: f64,
    pub a41: f64,
    pub a42: f64,
    pub a51: f64,
    pub a52: f64,
    pub a61: f64,
    pub a62: f64,
}

impl InteractionRates {
    fn named(&self) -> [(&'static str, f64); 11] {
        [
            ("alpha_11", self.a11),
            ("alpha_21", self.a21),
            ("alpha_31", self.a31),
            ("alpha_32", self.a32),
            ("alpha_33", self.a33),
            ("alpha_41", self.a41),
            ("alpha_42", self.a42),
            ("alpha_51", self.a51),
            ("alpha_52", self.a52),
            ("alpha_61", self.a61),
            ("alpha_62", self.a62),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProliferationRates {
    pub c: f64,
    pub n: f64,
    pub v: f64,
    pub a: f64,
    pub i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capacities {
    pub c: f64,
    pub n: f64,
    pub v: f64,
}

impl Default for Capacities {
    fn default() -> Self {
        Capacities { c: 1.0, n: 1.0, v: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DegradationRates {
    pub c: f64,
    pub n: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub diffusion: Diffusivities,
    /// chi_11..chi_14: cancer-cell taxis toward u_N, u_A, u_I, u_V.
    pub chi_c: [f64; 4],
    /// chi_21..chi_24: normal-cell taxis toward u_C, u_A, u_I, u_V.
    pub chi_n: [f64; 4],
    pub alpha: InteractionRates,
    pub mu: ProliferationRates,
    pub capacity: Capacities,
    pub delta: DegradationRates,
    /// Regularization of the recruitment products, 0 disables it.
    pub epsilon_reg: f64,
}

impl ModelParams {
    /// Every coefficient zero, unit diffusivities and capacities.
    pub fn inert() -> Self {
        let d = DiffusionCoefficient::constant(1.0);
        ModelParams {
            diffusion: Diffusivities { c: d, n: d, a: d, i: d, p: d },
            chi_c: [0.0; 4],
            chi_n: [0.0; 4],
            alpha: InteractionRates::default(),
            mu: ProliferationRates::default(),
            capacity: Capacities::default(),
            delta: DegradationRates::default(),
            epsilon_reg: 0.0,
        }
    }

    pub fn diffusion(&self, species: Species) -> Option<&DiffusionCoefficient> {
        match species {
            Species::C => Some(&self.diffusion.c),
            Species::N => Some(&self.diffusion.n),
            Species::V => None,
            Species::A => Some(&self.diffusion.a),
            Species::I => Some(&self.diffusion.i),
            Species::P => Some(&self.diffusion.p),
        }
    }

    pub fn h4_margin(&self) -> f64 {
        4.0 * self.alpha.a21 * self.mu.c / self.capacity.c - self.alpha.a11 * self.alpha.a11
    }

    pub fn chi_margin(&self) -> f64 {
        let s = self.chi_c[0] + self.chi_n[0];
        4.0 * self.diffusion.c.lo * self.diffusion.n.lo - s * s
    }

    /// Regularized cancer-cell factor `u_C / (1 + eps u_C)` used in the recruitment products.
    #[inline]
    pub fn recruited(&self, u_c: f64) -> f64 {
        if self.epsilon_reg == 0.0 {
            u_c
        } else {
            u_c / (1.0 + self.epsilon_reg * u_c)
        }
    }

    fn check_coefficients(&self) -> std::result::Result<(), HypothesisError> {
        let nonneg = |name: &'static str, v: f64| -> std::result::Result<(), HypothesisError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(HypothesisError::Coefficient { name, value: v, requirement: "finite and >= 0" })
            }
        };
        for (name, v) in self.alpha.named() {
            nonneg(name, v)?;
        }
        for (name, v) in [
            ("mu_C", self.mu.c),
            ("mu_N", self.mu.n),
            ("mu_V", self.mu.v),
            ("mu_A", self.mu.a),
            ("mu_I", self.mu.i),
            ("delta_C", self.delta.c),
            ("delta_N", self.delta.n),
            ("delta_P", self.delta.p),
        ] {
            nonneg(name, v)?;
        }
        for (name, v) in [("K_C", self.capacity.c), ("K_N", self.capacity.n), ("K_V", self.capacity.v)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HypothesisError::Coefficient { name, value: v, requirement: "finite and > 0" });
            }
        }
        for (i, v) in self.chi_c.iter().chain(&self.chi_n).enumerate() {
            if !v.is_finite() {
                const NAMES: [&str; 8] = ["chi_11", "chi_12", "chi_13", "chi_14", "chi_21", "chi_22", "chi_23", "chi_24"];
                return Err(HypothesisError::Coefficient { name: NAMES[i], value: *v, requirement: "finite" });
            }
        }
        if !(self.epsilon_reg.is_finite() && (0.0..1.0).contains(&self.epsilon_reg)) {
            return Err(HypothesisError::Coefficient { name: "epsilon_reg", value: self.epsilon_reg, requirement: "in [0, 1)" });
        }
        Ok(())
    }
}

/// Computed L-infinity ceilings and hypothesis margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificates {
    /// Ceiling for u_A; `None` when alpha_42 = 0 (no bound from this argument).
    pub m_a: Option<f64>,
    /// Ceiling for u_V; `None` when alpha_32 = 0 or u_A is unbounded.
    pub m_v: Option<f64>,
    pub h4_margin: f64,
    pub chi_margin: f64,
    pub regime: Regime,
    pub warnings: Vec<String>,
}

/// Initial data for all six species, in [`Species::ALL`] order.
pub type InitialFields = [Field; 6];

/// Checks H1-H4 (and the taxis smallness condition in the strict regime)
/// and computes the ceilings M_A and M_V.
pub fn validate(params: &ModelParams, init: &InitialFields, regime: Regime) -> Result<BoundCertificates> {
    for f in &init[1..] {
        init[0].same_grid(f)?;
    }
    params.check_coefficients()?;

    for s in Species::PARABOLIC {
        let d = params.diffusion(s).expect("parabolic species has a diffusivity");
        if !(d.lo > 0.0 && d.lo <= d.hi && d.hi.is_finite()) {
            return Err(HypothesisError::Ellipticity { species: s, lo: d.lo, hi: d.hi }.into());
        }
        if let DiffusionProfile::Constant(v) = d.profile {
            if !(v >= d.lo && v <= d.hi) {
                return Err(HypothesisError::Ellipticity { species: s, lo: d.lo, hi: d.hi }.into());
            }
        }
    }

    for s in Species::ALL {
        let f = &init[s.index()];
        if let Some(cell) = f.first_non_finite() {
            return Err(Error::Initialization { cell, value: f.values()[cell] });
        }
        if let Some((cell, &value)) = f.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(HypothesisError::NegativeInitial { species: s, cell, value }.into());
        }
    }

    let h4_margin = params.h4_margin();
    if !(h4_margin > 0.0) {
        return Err(HypothesisError::ReactionBalance { margin: h4_margin }.into());
    }

    let chi_margin = params.chi_margin();
    let mut warnings = Vec::new();
    if !(chi_margin > 0.0) {
        match regime {
            Regime::Strict => return Err(HypothesisError::TaxisSmallness { margin: chi_margin }.into()),
            Regime::Exploratory => warnings.push(format!("taxis smallness condition fails (margin {chi_margin}); continuing in exploratory regime")),
        }
    }

    let sup = |s: Species| init[s.index()].values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let m_a = (params.alpha.a42 > 0.0).then(|| sup(Species::A).max(params.mu.a / params.alpha.a42));
    let m_v = match m_a {
        Some(m_a) if params.alpha.a32 > 0.0 => Some(sup(Species::V).max(params.alpha.a33 / params.alpha.a32 * m_a)),
        _ => None,
    };
    if m_a.is_none() {
        warnings.push("alpha_42 = 0: u_A is unbounded by this argument, its ceiling monitor is disabled".into());
    }
    if m_v.is_none() {
        warnings.push("u_V ceiling unavailable (alpha_32 = 0 or no u_A ceiling), its ceiling monitor is disabled".into());
    }
    if let Some(m_v) = m_v {
        if params.mu.v > 0.0 && m_v < params.capacity.v {
            warnings.push(format!("M_V = {m_v} is below K_V = {}: logistic growth of u_V can exceed this ceiling", params.capacity.v));
        }
    }

    Ok(BoundCertificates { m_a, m_v, h4_margin, chi_margin, regime, warnings })
}

/// Saturating taxis carrier `max(0, min(u, 1))`.
#[inline]
pub fn clamp_b(u: f64) -> f64 {
    0.0f64.max(u.min(1.0))
}

/// Zeroth-order right-hand side of `species`' equation. `u` is in [`Species::ALL`] order.
pub fn reaction(species: Species, u: &[f64; 6], params: &ModelParams) -> f64 {
    let [c, n, v, a, i, p] = *u;
    let al = &params.alpha;
    let mu = &params.mu;
    let k = &params.capacity;
    let de = &params.delta;
    match species {
        Species::C => al.a11 * n * params.recruited(c) + mu.c * c * (1.0 - c / k.c) - de.c * c,
        Species::N => -al.a21 * n * params.recruited(c) + mu.n * n * (1.0 - n / k.n) - de.n * n,
        Species::V => -al.a31 * v * p - al.a32 * v * i + al.a33 * a * i + mu.v * v * (1.0 - v / k.v),
        Species::A => -al.a41 * a * i - al.a42 * a * c + mu.a * c,
        Species::I => -al.a51 * i * a - al.a52 * i * v + mu.i * p,
        Species::P => al.a61 * c * a + al.a62 * v * i - de.p * p,
    }
}

/// Drifting vector of the cancer (`C`) or normal (`N`) cells at faces.
///
/// `gradients` are the face gradients of the partner cell population, u_A,
/// u_I and u_V, in that order.
pub fn drift_vector(species: Species, gradients: [&FaceVector; 4], params: &ModelParams) -> Result<FaceVector> {
    let chi = match species {
        Species::C => &params.chi_c,
        Species::N => &params.chi_n,
        other => return Err(Error::Shape(format!("species {other} has no drifting vector"))),
    };
    let grid = *gradients[0].grid();
    for g in &gradients[1..] {
        if *g.grid() != grid {
            return Err(Error::Shape("drift gradients live on different grids".into()));
        }
    }
    let mut out = FaceVector::zeros(grid);
    for axis in 0..grid.dim() {
        let dst = out.axis_mut(axis);
        for (j, g) in gradients.iter().enumerate() {
            if chi[j] == 0.0 {
                continue;
            }
            for (d, s) in dst.iter_mut().zip(g.axis(axis)) {
                *d += chi[j] * s;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn init_on(grid: Grid, value: f64) -> InitialFields {
        std::array::from_fn(|_| Field::constant(grid, value))
    }

    fn base_params() -> ModelParams {
        let mut p = ModelParams::inert();
        p.alpha.a11 = 0.1;
        p.alpha.a21 = 0.5;
        p.mu.c = 1.0;
        p.capacity.c = 1.0;
        p.chi_c[0] = 0.1;
        p.chi_n[0] = 0.1;
        p
    }

    #[test]
    fn margins_by_substitution() {
        let g = Grid::new(1, &[1.0], &[4]).unwrap();
        let certs = validate(&base_params(), &init_on(g, 0.0), Regime::Strict).unwrap();
        assert!((certs.h4_margin - 1.99).abs() < 1e-15);
        assert!((certs.chi_margin - 3.96).abs() < 1e-15);
    }

    #[test]
    fn m_a_from_formula() {
        let g = Grid::new(1, &[1.0], &[4]).unwrap();
        let mut p = base_params();
        p.mu.a = 0.1;
        p.alpha.a42 = 0.2;
        let mut init = init_on(g, 0.0);
        init[Species::A.index()] = Field::constant(g, 0.5);
        let certs = validate(&p, &init, Regime::Strict).unwrap();
        assert_eq!(certs.m_a, Some(0.5));
        assert_eq!(certs.m_v, None);
    }

    #[test]
    fn negative_initial_value_is_h2() {
        let g = Grid::new(1, &[1.0], &[4]).unwrap();
        let mut init = init_on(g, 0.0);
        init[Species::I.index()].values_mut()[2] = -1e-9;
        let err = validate(&base_params(), &init, Regime::Strict).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(HypothesisError::NegativeInitial { species: Species::I, cell: 2, .. })));
    }

    #[test]
    fn h4_and_chi_failures() {
        let g = Grid::new(1, &[1.0], &[4]).unwrap();
        let mut p = base_params();
        p.alpha.a11 = 2.0;
        assert!(matches!(validate(&p, &init_on(g, 0.0), Regime::Strict), Err(Error::Hypothesis(HypothesisError::ReactionBalance { .. }))));
        let mut p = base_params();
        p.chi_c[0] = 2.0;
        assert!(matches!(validate(&p, &init_on(g, 0.0), Regime::Strict), Err(Error::Hypothesis(HypothesisError::TaxisSmallness { .. }))));
        let certs = validate(&p, &init_on(g, 0.0), Regime::Exploratory).unwrap();
        assert!(certs.chi_margin < 0.0);
        assert!(!certs.warnings.is_empty());
    }

    #[test]
    fn ellipticity_failure() {
        let g = Grid::new(1, &[1.0], &[4]).unwrap();
        let mut p = base_params();
        p.diffusion.a = DiffusionCoefficient { profile: DiffusionProfile::Constant(1.0), lo: 0.0, hi: 2.0 };
        assert!(matches!(
            validate(&p, &init_on(g, 0.0), Regime::Strict),
            Err(Error::Hypothesis(HypothesisError::Ellipticity { species: Species::A, .. }))
        ));
    }

    #[test]
    fn clamp_regions() {
        assert_eq!(clamp_b(-0.5), 0.0);
        assert_eq!(clamp_b(0.3), 0.3);
        assert_eq!(clamp_b(2.0), 1.0);
    }

    #[test]
    fn reaction_by_substitution() {
        let mut p = ModelParams::inert();
        p.mu.v = 0.7;
        p.capacity.v = 2.0;
        let v = 0.4;
        let r = reaction(Species::V, &[0.3, 0.2, v, 0.0, 0.0, 0.0], &p);
        assert_eq!(r, 0.7 * v * (1.0 - v / 2.0));
        assert_eq!(reaction(Species::A, &[0.0; 6], &base_params()), 0.0);

        let mut p = ModelParams::inert();
        p.alpha.a61 = 0.5;
        p.delta.p = 0.1;
        let r = reaction(Species::P, &[1.0, 0.0, 0.0, 2.0, 0.0, 3.0], &p);
        assert!((r - 0.7).abs() < 1e-15);

        let mut p = ModelParams::inert();
        p.alpha.a21 = 1.0;
        p.epsilon_reg = 0.5;
        assert_eq!(reaction(Species::N, &[2.0, 1.0, 0.0, 0.0, 0.0, 0.0], &p), -1.0);
    }

    #[test]
    fn logistic_fixed_points_of_v() {
        let mut p = ModelParams::inert();
        p.mu.v = 1.3;
        p.capacity.v = 0.8;
        p.alpha.a31 = 0.4;
        p.alpha.a32 = 0.6;
        p.alpha.a33 = 0.9;
        assert_eq!(reaction(Species::V, &[0.2, 0.1, 0.0, 0.5, 0.0, 0.3], &p), 0.0);
        assert_eq!(reaction(Species::V, &[0.2, 0.1, 0.8, 0.5, 0.0, 0.0], &p), 0.0);
    }

    #[test]
    fn separable_gradient_matches_finite_difference() {
        let d = DiffusionCoefficient::separable(
            SeparableProfile { base: 1.0, space_amplitude: 0.3, wavenumbers: [2.0, 1.5, 0.0], time_amplitude: 0.2, frequency: 3.0 },
            0.1,
            2.0,
        );
        let x = [0.31, 0.77];
        let t = 0.4;
        let g = d.gradient(&x, t);
        let h = 1e-6;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (d.value(&xp, t) - d.value(&xm, t)) / (2.0 * h);
            assert!((fd - g[a]).abs() < 1e-8);
        }
    }
}
