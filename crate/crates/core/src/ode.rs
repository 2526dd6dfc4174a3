//! Explicit Runge–Kutta drivers for autonomous systems.
//!
//! Two methods: classical RK4 on a fixed grid (bit-reproducible), and the
//! Dormand–Prince 5(4) embedded pair with standard step control.

use crate::error::{Error, Result};
use crate::flow::{IntegratorConfig, Method};

pub(crate) trait System {
    fn rhs(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Runs after each accepted step; may re-express the state (chart
    /// switches). Returns whether `y` changed.
    fn after_step(&mut self, _y: &mut [f64]) -> Result<bool> {
        Ok(false)
    }
}

fn diverged(t: f64, reason: impl Into<String>) -> Error {
    Error::FlowDivergence {
        last_good_time: t,
        reason: reason.into(),
    }
}

fn all_finite(y: &[f64]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Integrates from `0` to `t_end`, overwriting `y`. Returns the step count.
pub(crate) fn integrate<S: System>(
    sys: &mut S,
    y: &mut [f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<usize> {
    if t_end == 0.0 {
        return Ok(0);
    }
    match cfg.method {
        Method::Rk4Fixed { step } => rk4(sys, y, t_end, step, cfg.max_steps),
        Method::Rk45Adaptive { abs_tol, rel_tol } => {
            dopri5(sys, y, t_end, abs_tol, rel_tol, cfg.max_steps)
        }
    }
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn rk4<S: System>(sys: &mut S, y: &mut [f64], t_end: f64, step: f64, max_steps: usize) -> Result<usize> {
    let steps = (t_end.abs() / step).ceil().max(1.0) as usize;
    if steps > max_steps {
        return Err(diverged(0.0, format!("fixed grid needs {steps} steps, limit is {max_steps}")));
    }
    let h = t_end / steps as f64;
    let m = y.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for s in 0..steps {
        let t = s as f64 * h;
        let fail = |e: Error| diverged(t, e.to_string());
        sys.rhs(y, &mut k1).map_err(fail)?;
        axpy(&mut tmp, y, h, &[(0.5, &k1)]);
        sys.rhs(&tmp, &mut k2).map_err(fail)?;
        axpy(&mut tmp, y, h, &[(0.5, &k2)]);
        sys.rhs(&tmp, &mut k3).map_err(fail)?;
        axpy(&mut tmp, y, h, &[(1.0, &k3)]);
        sys.rhs(&tmp, &mut k4).map_err(fail)?;
        axpy(&mut tmp, y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
        if !all_finite(&tmp) {
            return Err(diverged(t, "non-finite state"));
        }
        y.copy_from_slice(&tmp);
        sys.after_step(y).map_err(fail)?;
    }
    Ok(steps)
}

// Dormand–Prince 5(4) tableau; nodes are not needed for autonomous systems.
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
// 5th minus 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], atol: f64, rtol: f64) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step<S: System>(sys: &mut S, y: &[f64], f0: &[f64], t_end: f64, atol: f64, rtol: f64) -> f64 {
    let sc: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let (d0, d1) = (rms(y), rms(f0));
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(t_end.abs());
    let mut y1 = vec![0.0; y.len()];
    let mut f1 = vec![0.0; y.len()];
    axpy(&mut y1, y, h0 * t_end.signum(), &[(1.0, f0)]);
    let d2 = match sys.rhs(&y1, &mut f1) {
        Ok(()) => {
            let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
            rms(&diff) / h0
        }
        Err(_) => return h0 * 1e-3,
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(t_end.abs())
}

fn dopri5<S: System>(
    sys: &mut S,
    y: &mut [f64],
    t_end: f64,
    atol: f64,
    rtol: f64,
    max_steps: usize,
) -> Result<usize> {
    let m = y.len();
    let dir = t_end.signum();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 7];
    let mut tmp = vec![0.0; m];
    let mut ynew = vec![0.0; m];
    let mut err = vec![0.0; m];

    sys.rhs(y, &mut k[0]).map_err(|e| diverged(0.0, e.to_string()))?;
    let mut h = initial_step(sys, y, &k[0], t_end, atol, rtol);
    let mut t = 0.0f64;
    let mut steps = 0usize;
    let mut fsal_valid = true;
    let mut rejected_last = false;

    while (t_end - t) * dir > 0.0 {
        if steps >= max_steps {
            return Err(diverged(t, format!("step count exceeded ({max_steps})")));
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(diverged(t, "step size underflow"));
        }
        let last = (t + dir * h - t_end) * dir >= 0.0;
        let hs = if last { t_end - t } else { dir * h };
        if !fsal_valid {
            sys.rhs(y, &mut k[0]).map_err(|e| diverged(t, e.to_string()))?;
            fsal_valid = true;
        }

        let stages = (|| -> Result<()> {
            let (k0, rest) = k.split_at_mut(1);
            let k1 = &k0[0];
            axpy(&mut tmp, y, hs, &[(A21, k1)]);
            sys.rhs(&tmp, &mut rest[0])?;
            axpy(&mut tmp, y, hs, &[(A31, k1), (A32, &rest[0])]);
            sys.rhs(&tmp, &mut rest[1])?;
            axpy(&mut tmp, y, hs, &[(A41, k1), (A42, &rest[0]), (A43, &rest[1])]);
            sys.rhs(&tmp, &mut rest[2])?;
            axpy(&mut tmp, y, hs, &[(A51, k1), (A52, &rest[0]), (A53, &rest[1]), (A54, &rest[2])]);
            sys.rhs(&tmp, &mut rest[3])?;
            axpy(
                &mut tmp,
                y,
                hs,
                &[(A61, k1), (A62, &rest[0]), (A63, &rest[1]), (A64, &rest[2]), (A65, &rest[3])],
            );
            sys.rhs(&tmp, &mut rest[4])?;
            axpy(
                &mut ynew,
                y,
                hs,
                &[(B1, k1), (B3, &rest[1]), (B4, &rest[2]), (B5, &rest[3]), (B6, &rest[4])],
            );
            if !all_finite(&ynew) {
                return Err(Error::Domain("non-finite stage".into()));
            }
            sys.rhs(&ynew, &mut rest[5])?;
            Ok(())
        })();

        if stages.is_err() {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        for i in 0..m {
            err[i] = hs
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        }
        let en = error_norm(&err, y, &ynew, atol, rtol);
        if !en.is_finite() {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        if en <= 1.0 {
            steps += 1;
            t = if last { t_end } else { t + hs };
            y.copy_from_slice(&ynew);
            let (first, rest) = k.split_at_mut(6);
            first[0].copy_from_slice(&rest[0]);
            if sys.after_step(y).map_err(|e| diverged(t, e.to_string()))? {
                fsal_valid = false;
            }
            let mut factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if rejected_last {
                factor = factor.min(1.0);
            }
            h = hs.abs() * factor;
            rejected_last = false;
        } else {
            h = hs.abs() * (0.9 * en.powf(-0.2)).max(0.2);
            rejected_last = true;
        }
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;
    impl System for Oscillator {
        fn rhs(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
    }

    struct Blowup;
    impl System for Blowup {
        fn rhs(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[0] * y[0];
            Ok(())
        }
    }

    #[test]
    fn dopri_solves_oscillator() {
        let cfg = IntegratorConfig::adaptive(1e-12, 1e-12);
        let mut y = [1.0, 0.0];
        integrate(&mut Oscillator, &mut y, 2.0, &cfg).unwrap();
        assert!((y[0] - 2f64.cos()).abs() < 1e-10);
        assert!((y[1] + 2f64.sin()).abs() < 1e-10);
        let mut back = y;
        integrate(&mut Oscillator, &mut back, -2.0, &cfg).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-10 && back[1].abs() < 1e-10);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let run = |step: f64| {
            let cfg = IntegratorConfig::fixed(step);
            let mut y = [1.0, 0.0];
            integrate(&mut Oscillator, &mut y, 1.0, &cfg).unwrap();
            (y[0] - 1f64.cos()).abs()
        };
        let ratio = run(0.02) / run(0.01);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn blowup_reports_last_good_time() {
        // y' = y², y(0) = 1 blows up at t = 1.
        let cfg = IntegratorConfig::adaptive(1e-10, 1e-10);
        let mut y = [1.0];
        let err = integrate(&mut Blowup, &mut y, 1.5, &cfg).unwrap_err();
        let t = err.last_good_time().unwrap();
        assert!(t.is_finite() && t < 1.0 && t > 0.9, "t = {t}");
    }
}
