//! Model evaluation on perturbed rows.
//!
//! Rows are perturbed one at a time into a reusable chunk and sent to the
//! model in batches. A row that no part of the perturbation changes keeps
//! its unperturbed output; with per-part outputs at hand, a row only one
//! part changes takes that part's output.

use crate::data::Matrix;
use crate::error::Result;
use crate::model::{evaluate, Model, Output};
use crate::perturb::Part;

/// Rows per model call.
pub(crate) const CHUNK_ROWS: usize = 512;

pub(crate) fn perturbed_outputs(
    model: &dyn Model,
    output: Output,
    data: &Matrix,
    parts: &[Part<'_>],
    baseline: &[f64],
    singles: Option<&[&[f64]]>,
) -> Result<Vec<f64>> {
    debug_assert_eq!(baseline.len(), data.rows());
    let mut out = baseline.to_vec();
    let mut chunk = Matrix::with_capacity(CHUNK_ROWS, data.cols());
    let mut pending: Vec<usize> = Vec::with_capacity(CHUNK_ROWS);
    let mut buf = vec![0.0; data.cols()];

    let flush = |chunk: &mut Matrix, pending: &mut Vec<usize>, out: &mut [f64]| -> Result<()> {
        if pending.is_empty() {
            return Ok(());
        }
        let values = evaluate(model, chunk, output)?;
        for (&i, v) in pending.iter().zip(values) {
            out[i] = v;
        }
        chunk.clear_rows();
        pending.clear();
        Ok(())
    };

    for i in 0..data.rows() {
        let mut n_changed = 0;
        let mut which = 0;
        for (k, part) in parts.iter().enumerate() {
            if part.changes(data, i) {
                n_changed += 1;
                which = k;
            }
        }
        if n_changed == 0 {
            continue;
        }
        if let (1, Some(singles)) = (n_changed, singles) {
            out[i] = singles[which][i];
            continue;
        }
        buf.copy_from_slice(data.row(i));
        for part in parts {
            part.apply_row(data, i, &mut buf);
        }
        chunk.push_row(&buf);
        pending.push(i);
        if pending.len() == CHUNK_ROWS {
            flush(&mut chunk, &mut pending, &mut out)?;
        }
    }
    flush(&mut chunk, &mut pending, &mut out)?;
    Ok(out)
}
