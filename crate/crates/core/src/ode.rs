//! Adaptive Dormand–Prince 5(4) integrator for complex-valued systems.
//!
//! Output times are hit exactly by shortening the step that would cross
//! them; the accepted step size is then restored.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on the step size (µs); `None` leaves it unbounded.
    pub max_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 50_000_000,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates y' = f(t, y) from `t0`, calling `on_output` at every entry of
/// `outputs` (non-decreasing, each ≥ t0). `f` writes the derivative into its
/// third argument.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[Complex64],
    outputs: &[f64],
    opts: &OdeOptions,
    mut on_output: O,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(f64, &[Complex64]) -> Result<()>,
{
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|&t| t < t0) {
        return Err(Error::param("outputs", "output times must be non-decreasing and start at or after t0"));
    }
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let zero = Complex64::new(0.0, 0.0);
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut y_new = vec![zero; n];

    f(t, &y, &mut k1);
    stats.evaluations += 1;

    let t_end = outputs.last().copied().unwrap_or(t0);
    let mut h = initial_step(&mut f, t, &y, &k1, opts, t_end - t0, &mut stats);
    let mut out_idx = 0;

    while out_idx < outputs.len() && outputs[out_idx] <= t {
        on_output(t, &y)?;
        out_idx += 1;
    }

    let mut steps = 0usize;
    let mut last_rejected = false;
    while out_idx < outputs.len() {
        let target = outputs[out_idx];
        if let Some(max) = opts.max_step {
            h = h.min(max);
        }
        let mut step = h;
        let mut clamped = false;
        if t + step >= target {
            step = target - t;
            clamped = true;
        }
        if step < 1e-14 * t.abs().max(1.0) && !clamped {
            return Err(Error::StepUnderflow { t, h: step });
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::NotConverged(format!(
                "integrator exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }

        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (step * A21);
        }
        f(t + C2 * step, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * step;
        }
        f(t + C3 * step, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * step;
        }
        f(t + C4 * step, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * step;
        }
        f(t + C5 * step, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i]
                + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * step;
        }
        f(t + step, &tmp, &mut k6);
        for i in 0..n {
            y_new[i] = y[i]
                + (k1[i] * B1 + k3[i] * B3 + k4[i] * B4 + k5[i] * B5 + k6[i] * B6) * step;
        }
        f(t + step, &y_new, &mut k7);
        stats.evaluations += 6;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                * step;
            let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err_sq += (e.norm() / scale).powi(2);
        }
        let err = (err_sq / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            h = step * 0.2;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            t = if clamped { target } else { t + step };
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            // a clamped step says nothing about how large the next one may be
            let proposal = step * fac;
            h = if clamped { h.max(proposal) } else { proposal };
            last_rejected = false;
            while out_idx < outputs.len() && outputs[out_idx] <= t {
                on_output(t, &y)?;
                out_idx += 1;
            }
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h = step * (0.9 * err.powf(-0.2)).max(0.1);
        }
    }
    Ok(stats)
}

fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[Complex64],
    dy: &[Complex64],
    opts: &OdeOptions,
    span: f64,
    stats: &mut OdeStats,
) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y.len().max(1) as f64;
    let scale: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.norm()).collect();
    let d0 = (y.iter().zip(&scale).map(|(v, s)| (v.norm() / s).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (dy.iter().zip(&scale).map(|(v, s)| (v.norm() / s).powi(2)).sum::<f64>() / n).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    if span > 0.0 {
        h0 = h0.min(span);
    }
    let y1: Vec<Complex64> = y.iter().zip(dy).map(|(v, d)| v + d * h0).collect();
    let mut dy1 = vec![Complex64::new(0.0, 0.0); y.len()];
    f(t + h0, &y1, &mut dy1);
    stats.evaluations += 1;
    let d2 = (dy1
        .iter()
        .zip(dy)
        .zip(&scale)
        .map(|((a, b), s)| ((a - b).norm() / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let mut h = (100.0 * h0).min(h1);
    if let Some(max) = opts.max_step {
        h = h.min(max);
    }
    if span > 0.0 {
        h = h.min(span);
    }
    h.max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_rotation() {
        // y' = (−0.5 + 3i) y
        let lambda = Complex64::new(-0.5, 3.0);
        let outputs: Vec<f64> = (0..=20).map(|k| 0.25 * k as f64).collect();
        let mut seen = Vec::new();
        integrate(
            |_, y, dy| dy[0] = lambda * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &outputs,
            &OdeOptions::default(),
            |t, y| {
                seen.push((t, y[0]));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen.len(), outputs.len());
        for (t, y) in seen {
            let exact = (lambda * t).exp();
            assert!((y - exact).norm() < 1e-7, "t = {t}");
        }
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = cos(t) y → y = exp(sin t)
        let mut last = Complex64::new(0.0, 0.0);
        integrate(
            |t, y, dy| dy[0] = y[0] * t.cos(),
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &[3.0],
            &OdeOptions::default(),
            |_, y| {
                last = y[0];
                Ok(())
            },
        )
        .unwrap();
        assert!((last.re - 3f64.sin().exp()).abs() < 1e-7);
    }

    #[test]
    fn rejects_decreasing_outputs() {
        let r = integrate(
            |_, y, dy| dy[0] = y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &[1.0, 0.5],
            &OdeOptions::default(),
            |_, _| Ok(()),
        );
        assert!(r.is_err());
    }
}
