//! Fixed-step classical Runge–Kutta integration.

use crate::error::{Error, Result};

/// Number of steps of size `step` covering `horizon`, if it divides evenly.
pub fn step_count(horizon: f64, step: f64) -> Result<usize> {
    if !(horizon > 0.0 && step > 0.0 && horizon.is_finite() && step.is_finite()) {
        return Err(Error::Config(format!(
            "horizon {horizon} and step {step} must be positive"
        )));
    }
    let n = (horizon / step).round();
    if (n * step - horizon).abs() > 1e-9 * horizon || n < 1.0 {
        return Err(Error::Config(format!("step {step} does not divide horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Integrates `dx/dt = f(t, x)` from `t0` over `horizon`, returning every
/// step including the initial state.
///
/// `after_step` runs on each new state and may adjust it or reject it.
pub fn rk4<F, G>(
    f: F,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    step: f64,
    mut after_step: G,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    F: Fn(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &mut [f64]) -> Result<()>,
{
    let n = step_count(horizon, step)?;
    let dim = x0.len();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(t0);
    states.push(x0.to_vec());

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut x = x0.to_vec();
    for i in 0..n {
        let t = t0 + i as f64 * step;
        let h = step;
        f(t, &x, &mut k1);
        for d in 0..dim {
            tmp[d] = x[d] + 0.5 * h * k1[d];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for d in 0..dim {
            tmp[d] = x[d] + 0.5 * h * k2[d];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for d in 0..dim {
            tmp[d] = x[d] + h * k3[d];
        }
        f(t + h, &tmp, &mut k4);
        for d in 0..dim {
            x[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        let t_next = t0 + (i + 1) as f64 * step;
        if let Some(d) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Integration {
                time: t_next,
                reason: format!("state component {d} is not finite"),
            });
        }
        after_step(t_next, &mut x)?;
        times.push(t_next);
        states.push(x.clone());
    }
    Ok((times, states))
}
