use crate::error::{PmmError, Result};
use crate::linalg::RngStream;

/// Output of a random-walk Metropolis run.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub states: Vec<Vec<f64>>,
    pub log_target: Vec<f64>,
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
}

/// Random-walk Metropolis with independent Gaussian increments
/// `step_scales[i] · N(0, 1)` per coordinate. Records one state per step.
pub fn rw_metropolis(
    mut logtarget: impl FnMut(&[f64]) -> f64,
    init: &[f64],
    step_scales: &[f64],
    n_steps: usize,
    rng: &mut RngStream,
) -> Result<Chain> {
    if init.len() != step_scales.len() {
        return Err(PmmError::DimensionMismatch(format!(
            "{} initial coordinates, {} step scales",
            init.len(),
            step_scales.len()
        )));
    }
    if step_scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(PmmError::InvalidArgument("step scales must be positive".into()));
    }
    let mut x = init.to_vec();
    let mut lp = logtarget(&x);
    if !lp.is_finite() {
        return Err(PmmError::InvalidArgument("log target is not finite at the initial state".into()));
    }
    let mut chain = Chain {
        states: Vec::with_capacity(n_steps),
        log_target: Vec::with_capacity(n_steps),
        accepted: Vec::with_capacity(n_steps),
        acceptance_rate: 0.0,
    };
    let mut n_acc = 0usize;
    for _ in 0..n_steps {
        let prop: Vec<f64> = x.iter().zip(step_scales).map(|(v, s)| v + s * rng.standard_normal()).collect();
        let lq = logtarget(&prop);
        let u = rng.uniform();
        let accept = lq.is_finite() && u.ln() < lq - lp;
        if accept {
            x = prop;
            lp = lq;
            n_acc += 1;
        }
        chain.states.push(x.clone());
        chain.log_target.push(lp);
        chain.accepted.push(accept);
    }
    chain.acceptance_rate = if n_steps == 0 { 0.0 } else { n_acc as f64 / n_steps as f64 };
    Ok(chain)
}
