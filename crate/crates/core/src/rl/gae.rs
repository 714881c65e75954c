use super::RlError;

/// Generalized advantage estimation with per-transition discount `gamma^k`.
///
/// `values` has one more entry than `rewards`: the last is the bootstrap
/// value of the state following the final transition.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    segment_lengths: &[usize],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n || segment_lengths.len() != n {
        return Err(RlError::Length(format!(
            "rewards {n}, values {}, dones {}, lengths {}",
            values.len(),
            dones.len(),
            segment_lengths.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let g = gamma.powi(segment_lengths[t] as i32);
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + g * values[t + 1] * live - values[t];
        next = delta + g * lambda * live * next;
        adv[t] = next;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [1.0, 0.5, 0.0];
        let v = [0.2, 0.4, 0.1, 0.3];
        let k = [1, 3, 2];
        let (a, _) = compute_gae(&r, &v, &[false; 3], &k, 0.9, 0.0).unwrap();
        for t in 0..3 {
            let td = r[t] + 0.9f64.powi(k[t] as i32) * v[t + 1] - v[t];
            assert!((a[t] - td).abs() < 1e-15);
        }
    }

    #[test]
    fn terminal_blocks_bootstrap() {
        let (a, ret) = compute_gae(&[1.0, 1.0], &[0.0, 5.0, 7.0], &[true, false], &[1, 1], 0.99, 0.95).unwrap();
        assert_eq!(a[0], 1.0);
        assert_eq!(ret[0], 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[1.0], &[0.0], &[false], &[1], 0.9, 0.9).is_err());
    }
}
