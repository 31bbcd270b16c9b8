//! Deterministic synthetic grayscale sequences with ground truth and
//! scripted challenge events (noise, occlusion, abrupt motion).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SmttError};
use crate::image::GrayImage;
use crate::particles::TargetBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionEvent {
    pub start_frame: usize,
    pub end_frame: usize,
    /// Fraction of the target area covered, in (0, 1).
    pub fraction: f64,
    pub occluder_intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub frame: usize,
    pub dx: f64,
    pub dy: f64,
}

/// Scripted scenario: a soft-edged rectangular blob moving with constant
/// velocity over a flat background, with optional noise, occlusion, and a
/// one-off displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub frame_w: usize,
    pub frame_h: usize,
    pub num_frames: usize,
    pub init: TargetBox,
    pub velocity: (f64, f64),
    pub target_intensity: f64,
    pub background_intensity: f64,
    pub noise_sigma: f64,
    pub occlusion: Option<OcclusionEvent>,
    pub jump: Option<JumpEvent>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 1 || self.frame_w < 4 || self.frame_h < 4 {
            return Err(SmttError::Parameter(
                "scenario needs at least 1 frame and a 4x4 canvas".into(),
            ));
        }
        if !(self.init.w > 0.0 && self.init.h > 0.0) {
            return Err(SmttError::Parameter("target box must have positive size".into()));
        }
        if let Some(o) = &self.occlusion {
            if !(o.fraction > 0.0 && o.fraction < 1.0) {
                return Err(SmttError::Parameter(
                    "occlusion fraction must lie in (0, 1)".into(),
                ));
            }
            if o.end_frame < o.start_frame {
                return Err(SmttError::Parameter("occlusion ends before it starts".into()));
            }
        }
        for t in 0..self.num_frames {
            let b = self.truth_box(t);
            let (left, top, w, h) = b.to_corner();
            if left < 1.0
                || top < 1.0
                || left + w > self.frame_w as f64 - 1.0
                || top + h > self.frame_h as f64 - 1.0
            {
                return Err(SmttError::Geometry(format!(
                    "target leaves the frame at frame {t}"
                )));
            }
        }
        Ok(())
    }

    /// Ground-truth box at frame t.
    pub fn truth_box(&self, t: usize) -> TargetBox {
        let mut cx = self.init.cx + self.velocity.0 * t as f64;
        let mut cy = self.init.cy + self.velocity.1 * t as f64;
        if let Some(j) = &self.jump {
            if t >= j.frame {
                cx += j.dx;
                cy += j.dy;
            }
        }
        TargetBox {
            cx,
            cy,
            w: self.init.w,
            h: self.init.h,
        }
    }

    /// Pixels painted by the occluder at frame t (empty when none). The
    /// occluder is a horizontal band through the middle of the target's
    /// pixel footprint, filled row-major until exactly
    /// round(fraction * w * h) pixels are covered; centering it keeps a
    /// shifted window from escaping the occluder without importing
    /// background.
    pub fn occlusion_pixels(&self, t: usize) -> Vec<(usize, usize)> {
        let Some(o) = &self.occlusion else {
            return Vec::new();
        };
        if t < o.start_frame || t > o.end_frame {
            return Vec::new();
        }
        let b = self.truth_box(t);
        let (left, top, w, h) = b.to_corner();
        let x0 = left.ceil() as usize;
        let y0 = top.ceil() as usize;
        let x1 = ((left + w).floor() as usize).min(self.frame_w);
        let y1 = ((top + h).floor() as usize).min(self.frame_h);
        if x1 <= x0 || y1 <= y0 {
            return Vec::new();
        }
        let budget = (o.fraction * w * h).round() as usize;
        let cols = x1 - x0;
        let rows_needed = budget.div_ceil(cols).min(y1 - y0);
        let y_start = y0 + (y1 - y0 - rows_needed) / 2;
        let mut out = Vec::with_capacity(budget);
        'fill: for y in y_start..y1 {
            for x in x0..x1 {
                if out.len() >= budget {
                    break 'fill;
                }
                out.push((x, y));
            }
        }
        out
    }

    /// Render the noiseless frame at t (blob plus optional occluder).
    fn clean_frame(&self, t: usize) -> GrayImage {
        let b = self.truth_box(t);
        let (left, top, w, h) = b.to_corner();
        let (right, bottom) = (left + w, top + h);
        let bg = self.background_intensity;
        let tgt = self.target_intensity;
        let mut frame = GrayImage::from_fn(self.frame_w, self.frame_h, |x, y| {
            let px = x as f64;
            let py = y as f64;
            // signed distance inside the box; 2 px linear ramp across the edge
            let din = (px - left).min(right - px).min(py - top).min(bottom - py);
            let ramp = (din / 2.0 + 0.5).clamp(0.0, 1.0);
            bg + (tgt - bg) * ramp
        });
        for (x, y) in self.occlusion_pixels(t) {
            frame.set(x, y, self.occlusion.as_ref().unwrap().occluder_intensity);
        }
        frame
    }

    /// Flat key=value serialization (one key per line, LF endings).
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("frame_w", self.frame_w.to_string());
        kv("frame_h", self.frame_h.to_string());
        kv("num_frames", self.num_frames.to_string());
        kv("cx", format!("{}", self.init.cx));
        kv("cy", format!("{}", self.init.cy));
        kv("w", format!("{}", self.init.w));
        kv("h", format!("{}", self.init.h));
        kv("vx", format!("{}", self.velocity.0));
        kv("vy", format!("{}", self.velocity.1));
        kv("target_intensity", format!("{}", self.target_intensity));
        kv("background_intensity", format!("{}", self.background_intensity));
        kv("noise_sigma", format!("{}", self.noise_sigma));
        if let Some(o) = &self.occlusion {
            kv("occlusion_start", o.start_frame.to_string());
            kv("occlusion_end", o.end_frame.to_string());
            kv("occlusion_fraction", format!("{}", o.fraction));
            kv("occluder_intensity", format!("{}", o.occluder_intensity));
        }
        if let Some(j) = &self.jump {
            kv("jump_frame", j.frame.to_string());
            kv("jump_dx", format!("{}", j.dx));
            kv("jump_dy", format!("{}", j.dy));
        }
        kv("seed", self.seed.to_string());
        s
    }

    /// Parse the flat key=value format ('#' starts a comment).
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                SmttError::Parse(format!("line {}: expected key=value", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get_f = |k: &str| -> Result<f64> {
            map.get(k)
                .ok_or_else(|| SmttError::Parse(format!("missing key {k}")))?
                .parse()
                .map_err(|_| SmttError::Parse(format!("bad value for {k}")))
        };
        let get_u = |k: &str| -> Result<usize> {
            map.get(k)
                .ok_or_else(|| SmttError::Parse(format!("missing key {k}")))?
                .parse()
                .map_err(|_| SmttError::Parse(format!("bad value for {k}")))
        };
        let occlusion = if map.contains_key("occlusion_start") {
            Some(OcclusionEvent {
                start_frame: get_u("occlusion_start")?,
                end_frame: get_u("occlusion_end")?,
                fraction: get_f("occlusion_fraction")?,
                occluder_intensity: get_f("occluder_intensity")?,
            })
        } else {
            None
        };
        let jump = if map.contains_key("jump_frame") {
            Some(JumpEvent {
                frame: get_u("jump_frame")?,
                dx: get_f("jump_dx")?,
                dy: get_f("jump_dy")?,
            })
        } else {
            None
        };
        let spec = ScenarioSpec {
            frame_w: get_u("frame_w")?,
            frame_h: get_u("frame_h")?,
            num_frames: get_u("num_frames")?,
            init: TargetBox {
                cx: get_f("cx")?,
                cy: get_f("cy")?,
                w: get_f("w")?,
                h: get_f("h")?,
            },
            velocity: (get_f("vx")?, get_f("vy")?),
            target_intensity: get_f("target_intensity")?,
            background_intensity: get_f("background_intensity")?,
            noise_sigma: get_f("noise_sigma")?,
            occlusion,
            jump,
            seed: get_u("seed")? as u64,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Generate all frames and ground-truth boxes. Fully deterministic in the
/// spec (noise stream seeded by `spec.seed`).
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<GrayImage>, Vec<TargetBox>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).unwrap();
    let mut frames = Vec::with_capacity(spec.num_frames);
    let mut truth = Vec::with_capacity(spec.num_frames);
    for t in 0..spec.num_frames {
        let mut frame = spec.clean_frame(t);
        if spec.noise_sigma > 0.0 {
            for v in frame.data_mut() {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        frames.push(frame);
        truth.push(spec.truth_box(t));
    }
    Ok((frames, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> ScenarioSpec {
        ScenarioSpec {
            frame_w: 96,
            frame_h: 96,
            num_frames: 20,
            init: TargetBox {
                cx: 30.0,
                cy: 40.0,
                w: 16.0,
                h: 16.0,
            },
            velocity: (0.0, 0.0),
            target_intensity: 0.85,
            background_intensity: 0.15,
            noise_sigma: 0.0,
            occlusion: None,
            jump: None,
            seed: 7,
        }
    }

    #[test]
    fn static_noiseless_scene_repeats_one_frame() {
        let (frames, truth) = generate(&base_spec()).unwrap();
        for f in &frames[1..] {
            assert_eq!(f, &frames[0]);
        }
        assert_eq!(truth[0], truth[19]);
    }

    #[test]
    fn kinematics_are_exact() {
        let mut spec = base_spec();
        spec.velocity = (2.0, 0.0);
        spec.num_frames = 21;
        spec.frame_w = 128;
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth[20].cx - truth[0].cx, 40.0);
    }

    #[test]
    fn noise_std_matches_monte_carlo() {
        let mut spec = base_spec();
        spec.noise_sigma = 0.05;
        spec.target_intensity = 0.6;
        spec.background_intensity = 0.4;
        let clean = spec.clean_frame(0);
        let (frames, _) = generate(&spec).unwrap();
        let mut diffs = Vec::new();
        for f in &frames {
            for (a, b) in f.data().iter().zip(clean.data()) {
                // skip samples that could have clipped
                if *b > 0.2 && *b < 0.8 {
                    diffs.push(a - b);
                }
            }
        }
        let mean: f64 = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var: f64 =
            diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.05).abs() / 0.05 < 0.10, "noise std {std}");
    }

    #[test]
    fn generation_is_bitwise_deterministic() {
        let mut spec = base_spec();
        spec.noise_sigma = 0.03;
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_exit_is_rejected() {
        let mut spec = base_spec();
        spec.velocity = (10.0, 0.0);
        assert!(matches!(generate(&spec), Err(SmttError::Geometry(_))));
    }

    #[test]
    fn occluder_covers_requested_fraction() {
        let mut spec = base_spec();
        spec.occlusion = Some(OcclusionEvent {
            start_frame: 5,
            end_frame: 10,
            fraction: 0.3,
            occluder_intensity: 0.5,
        });
        assert!(spec.occlusion_pixels(4).is_empty());
        assert!(spec.occlusion_pixels(11).is_empty());
        let pix = spec.occlusion_pixels(7);
        let area = spec.init.w * spec.init.h;
        assert!((pix.len() as f64 - 0.3 * area).abs() <= 1.0);
        // all occluded pixels lie inside the truth box
        let (left, top, w, h) = spec.truth_box(7).to_corner();
        for &(x, y) in &pix {
            assert!(x as f64 >= left && (x as f64) < left + w);
            assert!(y as f64 >= top && (y as f64) < top + h);
        }
    }

    #[test]
    fn jump_displaces_from_its_frame_onward() {
        let mut spec = base_spec();
        spec.jump = Some(JumpEvent {
            frame: 10,
            dx: 8.0,
            dy: -4.0,
        });
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth[9].cx, 30.0);
        assert_eq!(truth[10].cx, 38.0);
        assert_eq!(truth[10].cy, 36.0);
        assert_eq!(truth[19].cx, 38.0);
    }

    #[test]
    fn key_value_roundtrip() {
        let mut spec = base_spec();
        spec.occlusion = Some(OcclusionEvent {
            start_frame: 3,
            end_frame: 8,
            fraction: 0.25,
            occluder_intensity: 0.4,
        });
        spec.jump = Some(JumpEvent {
            frame: 12,
            dx: 5.0,
            dy: 5.0,
        });
        let text = spec.to_key_values();
        let back = ScenarioSpec::from_key_values(&text).unwrap();
        assert_eq!(spec, back);
        assert!(ScenarioSpec::from_key_values("frame_w=abc").is_err());
    }
}
