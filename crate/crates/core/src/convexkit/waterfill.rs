//! Water-filling over parallel channels under a sum-power budget.

use crate::error::{Error, Result};

/// Maximizes `sum_j log2(1 + p_j g_j / noise)` subject to
/// `sum_j p_j = p_max`, `p >= 0`. Returns the powers and the water level.
pub fn water_filling(gains: &[f64], p_max: f64, noise: f64) -> Result<(Vec<f64>, f64)> {
    if !(p_max > 0.0) || !p_max.is_finite() {
        return Err(Error::Domain(format!("power budget must be positive, got {p_max}")));
    }
    if !(noise > 0.0) {
        return Err(Error::Domain(format!("noise power must be positive, got {noise}")));
    }
    if gains.is_empty() {
        return Err(Error::Precondition("water-filling needs at least one slot".into()));
    }
    if let Some(g) = gains.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(Error::Domain(format!("gains must be positive and finite, got {g}")));
    }
    let floors: Vec<f64> = gains.iter().map(|g| noise / g).collect();
    let fill = |mu: f64| floors.iter().map(|f| (mu - f).max(0.0)).sum::<f64>();
    let mut lo = floors.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = lo + p_max;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fill(mid) < p_max {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    // Exact level for the active set found by bisection.
    let mid = 0.5 * (lo + hi);
    let active: Vec<usize> = (0..floors.len()).filter(|&j| floors[j] < mid).collect();
    let mu = (p_max + active.iter().map(|&j| floors[j]).sum::<f64>()) / active.len() as f64;
    let mut powers = vec![0.0; floors.len()];
    for &j in &active {
        powers[j] = (mu - floors[j]).max(0.0);
    }
    Ok((powers, mu))
}
