use crate::error::{Error, Result};

/// Generalized advantage estimates, computed backward over a trajectory.
///
/// `values[t]` estimates `V(s_t)`; `dones[t]` marks that the episode ended
/// after step `t`, which cuts the bootstrap. `last_value` is `V(s_T)` for a
/// trajectory that was cut off while still running.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::contract(format!(
            "gae inputs have lengths {n}, {}, {}",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// Discounted reward-to-go with the same bootstrap convention as
/// [`gae_advantages`].
pub fn discounted_returns(rewards: &[f64], dones: &[bool], last_value: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut running = last_value;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            running = 0.0;
        }
        running = rewards[t] + gamma * running;
        out[t] = running;
    }
    out
}

/// Shifts and scales to zero mean and unit variance. Constant inputs map to
/// zeros.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = if std > 1e-12 { (*x - mean) / std } else { 0.0 };
    }
}
