//! Adaptive Dormand-Prince 5(4) integration of the spatially homogeneous
//! reaction system. The right-hand side is written out here on its own so the
//! oracle shares no arithmetic with the stepper.

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const ORACLE_REL_TOL: f64 = 1e-10;
const ORACLE_ABS_TOL: f64 = 1e-14;

/// Reaction right-hand side, state order C N V A I P.
fn rhs(y: &[f64; 6], p: &ModelParams) -> [f64; 6] {
    let (c, n, v, a, i, pl) = (y[0], y[1], y[2], y[3], y[4], y[5]);
    let al = &p.alpha;
    let cr = if p.epsilon_reg > 0.0 { c / (1.0 + p.epsilon_reg * c) } else { c };
    [
        al.a11 * n * cr + p.mu.c * c * (1.0 - c / p.capacity.c) - p.delta.c * c,
        -al.a21 * n * cr + p.mu.n * n * (1.0 - n / p.capacity.n) - p.delta.n * n,
        -al.a31 * v * pl - al.a32 * v * i + al.a33 * a * i + p.mu.v * v * (1.0 - v / p.capacity.v),
        -al.a41 * a * i - al.a42 * a * c + p.mu.a * c,
        -al.a51 * i * a - al.a52 * i * v + p.mu.i * pl,
        al.a61 * c * a + al.a62 * v * i - p.delta.p * pl,
    ]
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine(y: &[f64; 6], h: f64, terms: &[(f64, &[f64; 6])]) -> [f64; 6] {
    let mut out = *y;
    for (w, k) in terms {
        for j in 0..6 {
            out[j] += h * w * k[j];
        }
    }
    out
}

/// Integrates the homogeneous reaction system from `y0` over `[0, t_end]`.
pub fn ode_oracle(y0: [f64; 6], params: &ModelParams, t_end: f64) -> Result<[f64; 6]> {
    if y0.iter().any(|v| !v.is_finite()) || !t_end.is_finite() || t_end < 0.0 {
        return Err(Error::Oracle("ODE oracle needs finite data and t_end >= 0".into()));
    }
    let mut y = y0;
    let mut t = 0.0;
    let mut h = (t_end * 1e-3).max(1e-8).min(t_end);
    let mut k1 = rhs(&y, params);
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::Oracle(format!("ODE oracle step size underflow at t = {t}")));
        }
        let k2 = rhs(&combine(&y, h, &[(A21, &k1)]), params);
        let k3 = rhs(&combine(&y, h, &[(A31, &k1), (A32, &k2)]), params);
        let k4 = rhs(&combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]), params);
        let k5 = rhs(&combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]), params);
        let k6 = rhs(&combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]), params);
        let y_new = combine(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs(&y_new, params);
        let mut err = 0.0f64;
        for j in 0..6 {
            let e = h * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
            let scale = ORACLE_ABS_TOL + ORACLE_REL_TOL * y[j].abs().max(y_new[j].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            return Err(Error::Oracle(format!("ODE oracle produced a non-finite state at t = {t}")));
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            k1 = k7;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_stay_zero() {
        let mut p = ModelParams::inert();
        p.alpha.a11 = 1.0;
        p.mu.c = 2.0;
        assert_eq!(ode_oracle([0.0; 6], &p, 1.0).unwrap(), [0.0; 6]);
    }

    #[test]
    fn logistic_v_matches_closed_form() {
        let mut p = ModelParams::inert();
        p.mu.v = 1.5;
        p.capacity.v = 2.0;
        let v0 = 0.1;
        let y = ode_oracle([0.0, 0.0, v0, 0.0, 0.0, 0.0], &p, 1.0).unwrap();
        let e = (1.5f64).exp();
        let exact = 2.0 * v0 * e / (2.0 + v0 * (e - 1.0));
        assert!((y[2] - exact).abs() < 1e-9, "{} vs {exact}", y[2]);
    }

    #[test]
    fn shifted_logistic_for_cancer_cells() {
        let mut p = ModelParams::inert();
        p.mu.c = 2.0;
        p.delta.c = 0.5;
        p.capacity.c = 1.5;
        let c0 = 0.2;
        let y = ode_oracle([c0, 0.3, 0.0, 0.0, 0.0, 0.0], &p, 1.0).unwrap();
        // u' = r u (1 - u/K') with r = mu - delta, K' = K r / mu
        let r = 1.5;
        let k = 1.5 * r / 2.0;
        let e = (r * 1.0f64).exp();
        let exact = k * c0 * e / (k + c0 * (e - 1.0));
        assert!((y[0] - exact).abs() < 1e-9);
        assert!((y[1] - 0.3).abs() < 1e-15);
    }
}
