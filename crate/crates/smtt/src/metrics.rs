//! Center-error precision and overlap success metrics.

use crate::error::{Result, SmttError};
use crate::particles::TargetBox;

/// Intersection over union of two boxes, using half-open rectangles
/// [x, x+w) x [y, y+h) in the top-left corner convention.
pub fn iou(a: &TargetBox, b: &TargetBox) -> f64 {
    let (ax, ay, aw, ah) = a.to_corner();
    let (bx, by, bw, bh) = b.to_corner();
    let ix = (ax + aw).min(bx + bw) - ax.max(bx);
    let iy = (ay + ah).min(by + bh) - ay.max(by);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = aw * ah + bw * bh - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Evaluation report for a (result, truth) box pair sequence.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// precision_curve[theta] = fraction of frames with center error <= theta,
    /// for theta = 0..=50 px.
    pub precision_curve: Vec<f64>,
    /// success_curve[i] = fraction of frames with IoU >= i/100, for
    /// i = 0..=100.
    pub success_curve: Vec<f64>,
    pub mean_center_error: f64,
    pub mean_iou: f64,
}

impl EvalReport {
    /// Precision at the conventional 20 px threshold.
    pub fn precision_at_20(&self) -> f64 {
        self.precision_curve[20]
    }

    pub fn precision_at(&self, theta: usize) -> f64 {
        self.precision_curve[theta.min(50)]
    }

    /// Area under the success curve: mean over the IoU threshold grid.
    pub fn success_auc(&self) -> f64 {
        self.success_curve.iter().sum::<f64>() / self.success_curve.len() as f64
    }
}

pub fn evaluate(results: &[TargetBox], truth: &[TargetBox]) -> Result<EvalReport> {
    if results.len() != truth.len() {
        return Err(SmttError::Shape(format!(
            "result has {} boxes but truth has {}",
            results.len(),
            truth.len()
        )));
    }
    if results.is_empty() {
        return Err(SmttError::Parameter("nothing to evaluate".into()));
    }
    let n = results.len() as f64;
    let errors: Vec<f64> = results
        .iter()
        .zip(truth)
        .map(|(r, t)| r.center_distance(t))
        .collect();
    let ious: Vec<f64> = results.iter().zip(truth).map(|(r, t)| iou(r, t)).collect();

    let precision_curve = (0..=50)
        .map(|theta| errors.iter().filter(|&&e| e <= theta as f64).count() as f64 / n)
        .collect();
    let success_curve = (0..=100)
        .map(|i| {
            let u = i as f64 / 100.0;
            ious.iter().filter(|&&v| v >= u).count() as f64 / n
        })
        .collect();
    Ok(EvalReport {
        precision_curve,
        success_curve,
        mean_center_error: errors.iter().sum::<f64>() / n,
        mean_iou: ious.iter().sum::<f64>() / n,
    })
}
