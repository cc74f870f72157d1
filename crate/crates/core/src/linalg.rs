use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::FitError;

/// Cholesky factorisation with escalating diagonal jitter.
///
/// The plain matrix is tried first; on failure a jitter of
/// `1e-9 * trace / n` is added and multiplied by ten up to `1e-3 * trace / n`.
/// Returns the factor and the jitter that was used.
pub fn cholesky_with_jitter(
    k: &DMatrix<f64>,
) -> Result<(Cholesky<f64, Dyn>, f64), FitError> {
    let n = k.nrows();
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let scale = (k.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut factor = 1e-9;
    while factor <= 1e-3 * (1.0 + 1e-12) {
        let jitter = factor * scale;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        factor *= 10.0;
    }
    Err(FitError::NotPositiveDefinite {
        n,
        max_jitter: 1e-3 * scale,
    })
}

/// `log det` from a Cholesky factor.
pub fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
