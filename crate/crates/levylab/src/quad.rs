//! Adaptive quadrature used throughout the crate.
//!
//! The workhorse is a 15-point Gauss–Kronrod rule with recursive bisection.
//! Half-line integrals of peaked integrands (Gaussian subordination,
//! Laplace transforms of Levy densities) go through [`integrate_log_halfline`],
//! which works in `u = ln t` coordinates: it scans a wide window for the
//! support of the integrand and then refines adaptively, so sharply peaked
//! and slowly decaying integrands are both handled without caller-side
//! tuning.

use crate::error::{LabError, Result};

/// Result of a quadrature: value, error bound and evaluation count.
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evals: u64,
}

// QUADPACK qk15 abscissae/weights (positive half of [-1,1]).
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// One 15-point Gauss–Kronrod panel on `[a, b]`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = WGK[7] * f(c);
    let mut gauss = WG[3] * f(c);
    for i in 0..7 {
        let x = h * XGK[i];
        let fs = f(c - x) + f(c + x);
        kronrod += WGK[i] * fs;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fs;
        }
    }
    let value = kronrod * h;
    let err = ((kronrod - gauss) * h).abs().max(f64::EPSILON * value.abs());
    (value, err)
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quad> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(LabError::Parameter(format!("bad interval [{a}, {b}]")));
    }
    // Work-list of panels, worst error first.
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(f, a, b);
    panels.push((a, b, v, e));
    let mut evals: u64 = 15;
    const MAX_EVALS: u64 = 4_000_000;
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let toterr: f64 = panels.iter().map(|p| p.3).sum();
        let tol = abs_tol.max(rel_tol * total.abs());
        if toterr <= tol {
            return Ok(Quad { value: total, error: toterr, evals });
        }
        if evals >= MAX_EVALS {
            return Err(LabError::Numeric(format!(
                "adaptive quadrature did not converge on [{a}, {b}]: \
                 error {toterr:.3e} > tol {tol:.3e} after {evals} evaluations"
            )));
        }
        // Split the worst panel.
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(LabError::Numeric(format!(
                "interval [{pa}, {pb}] cannot be refined further"
            )));
        }
        let (v1, e1) = gk15(f, pa, mid);
        let (v2, e2) = gk15(f, mid, pb);
        evals += 30;
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
}

/// Integrates `f` over `(0, infinity)` in log coordinates.
///
/// The substitution `t = e^u` turns both sharply peaked integrands
/// (Gaussian factors) and power-law tails into rapidly decaying functions
/// of `u`. The support is located by a coarse scan of `u` in
/// `[-60, 60]` (`t` from ~1e-26 to ~1e26) and the surviving window is
/// integrated adaptively.
pub fn integrate_log_halfline<F: Fn(f64) -> f64>(
    f: &F,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quad> {
    let g = |u: f64| {
        let t = u.exp();
        let v = f(t) * t;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    const U_LO: f64 = -60.0;
    const U_HI: f64 = 60.0;
    const NSCAN: usize = 961;
    let du = (U_HI - U_LO) / (NSCAN - 1) as f64;
    let mut peak = 0.0f64;
    let mut lo = None;
    let mut hi = None;
    let mut samples = [0.0f64; NSCAN];
    for (i, s) in samples.iter_mut().enumerate() {
        *s = g(U_LO + du * i as f64).abs();
        peak = peak.max(*s);
    }
    if peak == 0.0 {
        return Ok(Quad { value: 0.0, error: 0.0, evals: NSCAN as u64 });
    }
    let cutoff = peak * 1e-18;
    for (i, s) in samples.iter().enumerate() {
        if *s > cutoff {
            if lo.is_none() {
                lo = Some(i);
            }
            hi = Some(i);
        }
    }
    let lo = lo.unwrap().saturating_sub(2);
    let hi = (hi.unwrap() + 2).min(NSCAN - 1);
    let (ua, ub) = (U_LO + du * lo as f64, U_LO + du * hi as f64);
    let mut q = adaptive(&g, ua, ub, abs_tol, rel_tol)?;
    q.evals += NSCAN as u64;
    Ok(q)
}

/// Integrates `f` over `(t_lo, t_hi)` in log coordinates; `t_lo` may be 0
/// (replaced by an underflow-safe floor).
pub fn integrate_log_interval<F: Fn(f64) -> f64>(
    f: &F,
    t_lo: f64,
    t_hi: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quad> {
    if t_hi <= 0.0 || t_lo < 0.0 || t_hi <= t_lo {
        return Err(LabError::Parameter(format!("bad interval ({t_lo}, {t_hi})")));
    }
    let g = |u: f64| {
        let t = u.exp();
        let v = f(t) * t;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let ua = t_lo.max(1e-26).ln();
    let ub = t_hi.min(1e26).ln();
    if ub <= ua {
        return Ok(Quad { value: 0.0, error: 0.0, evals: 0 });
    }
    adaptive(&g, ua, ub, abs_tol, rel_tol)
}

/// Piecewise-linear interpolation in log-log coordinates, with slope
/// extrapolation beyond the table. Exact on power laws; used to cache
/// expensive positive, smooth radial profiles.
#[derive(Debug, Clone)]
pub struct LogLogInterp {
    ln_x: Vec<f64>,
    ln_y: Vec<f64>,
}

impl LogLogInterp {
    /// Tabulates `f` (which must be positive) on a log grid over `[lo, hi]`.
    pub fn build<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let grid = log_grid(lo, hi, n.max(8));
        let mut ln_x = Vec::with_capacity(grid.len());
        let mut ln_y = Vec::with_capacity(grid.len());
        for &x in &grid {
            let v = f(x);
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::Numeric(format!(
                    "log-log table needs positive finite values, got {v} at {x}"
                )));
            }
            ln_x.push(x.ln());
            ln_y.push(v.ln());
        }
        Ok(Self { ln_x, ln_y })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let lx = x.ln();
        let n = self.ln_x.len();
        let i = if lx <= self.ln_x[0] {
            1
        } else if lx >= self.ln_x[n - 1] {
            n - 1
        } else {
            self.ln_x.partition_point(|&v| v < lx).max(1)
        };
        let (x0, x1) = (self.ln_x[i - 1], self.ln_x[i]);
        let (y0, y1) = (self.ln_y[i - 1], self.ln_y[i]);
        (y0 + (y1 - y0) * (lx - x0) / (x1 - x0)).exp()
    }
}

/// Log-spaced grid of `n` points over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "log_grid needs 0 < lo < hi, n >= 2");
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_exact_on_polynomials() {
        let q = adaptive(&|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12, 1e-12).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12, "{}", q.value);
    }

    #[test]
    fn adaptive_handles_sqrt_singularity() {
        let q = adaptive(&|x: f64| x.sqrt().recip(), 1e-300, 1.0, 1e-10, 1e-12).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8, "{}", q.value);
    }

    #[test]
    fn halfline_gaussian() {
        // int_0^inf e^{-t^2} dt = sqrt(pi)/2
        let q = integrate_log_halfline(&|t: f64| (-t * t).exp(), 1e-12, 1e-12).unwrap();
        assert!((q.value - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn halfline_shifted_peak() {
        // int_0^inf e^{-(ln t - 10)^2} dt/t = sqrt(pi); peak far from t = 1.
        let q = integrate_log_halfline(
            &|t: f64| (-(t.ln() - 10.0).powi(2)).exp() / t,
            1e-12,
            1e-12,
        )
        .unwrap();
        assert!((q.value - std::f64::consts::PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn halfline_power_tail() {
        // int_0^inf (1 - e^{-t}) * 0.5 t^{-1.5} dt = sqrt(pi)  (stable beta = 1/2)
        let q = integrate_log_halfline(
            &|t: f64| -(-t).exp_m1() * 0.5 * t.powf(-1.5),
            1e-10,
            1e-10,
        )
        .unwrap();
        assert!((q.value - std::f64::consts::PI.sqrt()).abs() < 1e-8, "{}", q.value);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1e3, 400);
        assert_eq!(g.len(), 400);
        assert!((g[0] - 1e-3).abs() < 1e-12);
        assert!((g[399] - 1e3).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
