use crate::error::{invalid, Result};

/// Benjamini-Hochberg step-up procedure at level `q`.
///
/// With the p-values sorted ascending as P(1) ≤ … ≤ P(k), finds
/// r = max{i : P(i) ≤ i·q/k} and rejects the hypotheses holding the r
/// smallest p-values. Returns their original indices in ascending order.
/// Equal p-values straddling position r are always rejected together, so
/// the rejected set does not depend on input order.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("FDR level q must lie in (0, 1), got {q}")));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("p-value {p} outside [0, 1]")));
    }
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let r = order
        .iter()
        .enumerate()
        .rev()
        .find(|(i, &idx)| p_values[idx] <= (*i + 1) as f64 * q / k as f64)
        .map_or(0, |(i, _)| i + 1);

    let mut rejected = order[..r].to_vec();
    rejected.sort_unstable();
    Ok(rejected)
}
