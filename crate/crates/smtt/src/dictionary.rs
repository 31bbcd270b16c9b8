//! Appearance template dictionary with an implicit identity occlusion block.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Result, SmttError};
use crate::image::GrayImage;
use crate::particles::TargetBox;

#[derive(Debug, Clone)]
pub struct DictionaryConfig {
    /// Appearance template count m.
    pub m: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    /// Frames between template replacements.
    pub update_period: usize,
    /// Uniform positional jitter (pixels) for the initial template set.
    pub jitter_px: f64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            m: 10,
            patch_h: 16,
            patch_w: 16,
            update_period: 5,
            jitter_px: 1.5,
        }
    }
}

/// The appearance template set D_a (d x m, unit columns). The occlusion block
/// is the d x d identity; `combined` materializes [D_a | I].
#[derive(Debug, Clone)]
pub struct TemplateDictionary {
    templates: Array2<f64>,
    patch_h: usize,
    patch_w: usize,
    frames_since_update: usize,
    update_period: usize,
}

fn normalize(v: &mut [f64]) -> f64 {
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm > 0.0 {
        for x in v.iter_mut() {
            *x /= nrm;
        }
    }
    nrm
}

impl TemplateDictionary {
    /// Build the initial template set from a frame: column 0 is the exact
    /// init patch, the rest are jittered copies.
    pub fn init_from_frame(
        frame: &GrayImage,
        bbox: &TargetBox,
        cfg: &DictionaryConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if cfg.m < 1 {
            return Err(SmttError::Parameter("template count must be >= 1".into()));
        }
        let (left, top) = (bbox.cx - bbox.w / 2.0, bbox.cy - bbox.h / 2.0);
        if left < 0.0
            || top < 0.0
            || left + bbox.w > frame.width as f64
            || top + bbox.h > frame.height as f64
        {
            return Err(SmttError::Geometry(format!(
                "init box ({:.1},{:.1},{:.1},{:.1}) not inside {}x{} frame",
                left, top, bbox.w, bbox.h, frame.width, frame.height
            )));
        }
        let d = cfg.patch_h * cfg.patch_w;
        let mut anchor = frame.extract_patch(left, top, bbox.w, bbox.h, cfg.patch_h, cfg.patch_w);
        let (lo, hi) = anchor
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi - lo < 1e-12 {
            return Err(SmttError::Degenerate(
                "init patch has zero intensity variance".into(),
            ));
        }
        normalize(&mut anchor);

        let mut templates = Array2::zeros((d, cfg.m));
        templates.column_mut(0).assign(&Array1::from(anchor.clone()));
        for col in 1..cfg.m {
            let dx = rng.random_range(-cfg.jitter_px..=cfg.jitter_px);
            let dy = rng.random_range(-cfg.jitter_px..=cfg.jitter_px);
            let mut patch = frame.extract_patch(
                left + dx,
                top + dy,
                bbox.w,
                bbox.h,
                cfg.patch_h,
                cfg.patch_w,
            );
            if normalize(&mut patch) == 0.0 {
                patch = anchor.clone();
            }
            templates.column_mut(col).assign(&Array1::from(patch));
        }
        Ok(TemplateDictionary {
            templates,
            patch_h: cfg.patch_h,
            patch_w: cfg.patch_w,
            frames_since_update: 0,
            update_period: cfg.update_period.max(1),
        })
    }

    pub fn d(&self) -> usize {
        self.templates.nrows()
    }

    pub fn m(&self) -> usize {
        self.templates.ncols()
    }

    pub fn patch_dims(&self) -> (usize, usize) {
        (self.patch_h, self.patch_w)
    }

    pub fn templates(&self) -> &Array2<f64> {
        &self.templates
    }

    /// Materialize the combined dictionary [D_a | I_d].
    pub fn combined(&self) -> Array2<f64> {
        let d = self.d();
        let m = self.m();
        let mut a = Array2::zeros((d, m + d));
        a.slice_mut(ndarray::s![.., ..m]).assign(&self.templates);
        for i in 0..d {
            a[[i, m + i]] = 1.0;
        }
        a
    }

    /// Advance the update counter; every `update_period` frames, replace the
    /// template with the smallest-|coefficient| appearance code by the given
    /// patch. Column 0 (the init template) is never evicted. Returns whether
    /// an update fired.
    pub fn maybe_update(&mut self, best_patch: &[f64], best_coeffs: &[f64]) -> bool {
        self.frames_since_update += 1;
        if self.frames_since_update < self.update_period {
            return false;
        }
        self.frames_since_update = 0;
        if self.m() > 1 && best_patch.len() == self.d() && best_coeffs.len() == self.m() {
            let mut victim = 1;
            for i in 2..self.m() {
                if best_coeffs[i].abs() < best_coeffs[victim].abs() {
                    victim = i;
                }
            }
            let mut patch = best_patch.to_vec();
            if normalize(&mut patch) > 0.0 {
                self.templates
                    .column_mut(victim)
                    .assign(&Array1::from(patch));
            }
        }
        true
    }
}
