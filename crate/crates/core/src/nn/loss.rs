use crate::error::{Error, Result};

/// Lower/upper clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy `−[y·ln p + (1−y)·ln(1−p)]` and its derivative with
/// respect to `p`, both evaluated at `p` clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(prediction: f64, label: u8) -> Result<(f64, f64)> {
    if label > 1 {
        return Err(Error::InvalidLabel(label));
    }
    if !prediction.is_finite() {
        return Err(Error::NonFinite(format!("prediction {prediction}")));
    }
    let p = prediction.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        Ok((-p.ln(), -1.0 / p))
    } else {
        Ok((-(1.0 - p).ln(), 1.0 / (1.0 - p)))
    }
}
