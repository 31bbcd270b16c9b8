//! Particle sampling, observation extraction, and likelihood weighting.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dictionary::TemplateDictionary;
use crate::error::{Result, SmttError};
use crate::image::GrayImage;
use crate::solver::CoefficientMatrix;

/// A target state: center position plus box size in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl TargetBox {
    /// From the on-disk top-left convention (x, y, w, h).
    pub fn from_corner(x: f64, y: f64, w: f64, h: f64) -> Self {
        TargetBox {
            cx: x + w / 2.0,
            cy: y + h / 2.0,
            w,
            h,
        }
    }

    /// To the on-disk top-left convention (x, y, w, h).
    pub fn to_corner(&self) -> (f64, f64, f64, f64) {
        (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)
    }

    pub fn center_distance(&self, other: &TargetBox) -> f64 {
        ((self.cx - other.cx).powi(2) + (self.cy - other.cy).powi(2)).sqrt()
    }
}

/// Candidate states with normalized weights.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    pub boxes: Vec<TargetBox>,
    pub weights: Vec<f64>,
}

/// Observation columns plus per-particle degeneracy flags (set when a
/// particle box has no overlap with the frame).
#[derive(Debug, Clone)]
pub struct Observations {
    pub x: Array2<f64>,
    pub degenerate: Vec<bool>,
}

/// Gaussian sampling around the current state: centers are perturbed
/// additively, box size multiplicatively through a log-scale component.
/// Particle 0 is always the unperturbed state; weights start uniform.
pub fn sample(
    state: &TargetBox,
    stds: (f64, f64, f64),
    n: usize,
    rng: &mut impl Rng,
) -> ParticleSet {
    assert!(n >= 1, "need at least one particle");
    let (sx, sy, ss) = stds;
    let mut boxes = Vec::with_capacity(n);
    boxes.push(*state);
    let nx = Normal::new(0.0, sx.max(0.0)).unwrap();
    let ny = Normal::new(0.0, sy.max(0.0)).unwrap();
    let ns = Normal::new(0.0, ss.max(0.0)).unwrap();
    for _ in 1..n {
        let ex: f64 = nx.sample(rng);
        let ey: f64 = ny.sample(rng);
        let es: f64 = ns.sample(rng);
        let scale = es.exp();
        boxes.push(TargetBox {
            cx: state.cx + ex,
            cy: state.cy + ey,
            w: state.w * scale,
            h: state.h * scale,
        });
    }
    ParticleSet {
        boxes,
        weights: vec![1.0 / n as f64; n],
    }
}

/// Extract one l2-normalized, bilinearly resampled patch column per particle.
/// Sampling clamps to the frame; boxes fully outside are flagged degenerate
/// and produce a zero column.
pub fn observe(
    frame: &GrayImage,
    particles: &ParticleSet,
    patch_h: usize,
    patch_w: usize,
) -> Observations {
    let d = patch_h * patch_w;
    let n = particles.boxes.len();
    let mut x = Array2::zeros((d, n));
    let mut degenerate = vec![false; n];
    for (i, b) in particles.boxes.iter().enumerate() {
        let (left, top, w, h) = b.to_corner();
        let outside = left + w <= 0.0
            || top + h <= 0.0
            || left >= frame.width as f64
            || top >= frame.height as f64;
        if outside {
            degenerate[i] = true;
            continue;
        }
        let mut patch = frame.extract_patch(left, top, w, h, patch_h, patch_w);
        let nrm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for v in patch.iter_mut() {
                *v /= nrm;
            }
        }
        for (r, v) in patch.into_iter().enumerate() {
            x[[r, i]] = v;
        }
    }
    Observations { x, degenerate }
}

/// Particle weights from the appearance-only residual:
/// w_i proportional to exp(-alpha ||x_i - D_a z_i||^2). The occlusion block E
/// is deliberately excluded so occluded pixels do not reward a particle.
/// Degenerate particles get weight 0. If every weight underflows, falls back
/// to uniform with a logged warning.
pub fn likelihoods(
    obs: &Observations,
    dict: &TemplateDictionary,
    c: &CoefficientMatrix,
    alpha: f64,
) -> Result<Vec<f64>> {
    let n = obs.x.ncols();
    if c.matrix().ncols() != n {
        return Err(SmttError::Shape(format!(
            "coefficients cover {} particles but observations have {}",
            c.matrix().ncols(),
            n
        )));
    }
    if c.appearance_rows() != dict.m() || obs.x.nrows() != dict.d() {
        return Err(SmttError::Shape(
            "dictionary does not match coefficients/observations".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(SmttError::Parameter("alpha must be positive".into()));
    }
    let recon = dict.templates().dot(&c.appearance());
    let mut weights = Vec::with_capacity(n);
    // subtract the per-set minimum residual before exponentiating so the
    // best particle never underflows on its own
    let mut residuals = Vec::with_capacity(n);
    let mut min_r = f64::INFINITY;
    for i in 0..n {
        let mut r2 = 0.0;
        for k in 0..obs.x.nrows() {
            let diff = obs.x[[k, i]] - recon[[k, i]];
            r2 += diff * diff;
        }
        if !obs.degenerate[i] {
            min_r = min_r.min(r2);
        }
        residuals.push(r2);
    }
    if !min_r.is_finite() {
        min_r = 0.0;
    }
    for i in 0..n {
        if obs.degenerate[i] {
            weights.push(0.0);
        } else {
            weights.push((-alpha * (residuals[i] - min_r)).exp());
        }
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        log::warn!("all particle weights underflowed; falling back to uniform");
        return Ok(vec![1.0 / n as f64; n]);
    }
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Ok(weights)
}

/// MAP estimate: the maximum-weight particle, ties broken by lowest index.
pub fn estimate(particles: &ParticleSet) -> TargetBox {
    let mut best = 0;
    for (i, &w) in particles.weights.iter().enumerate() {
        if w > particles.weights[best] {
            best = i;
        }
    }
    particles.boxes[best]
}

/// Index of the maximum-weight particle (same tie rule as `estimate`).
pub fn map_index(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{DictionaryConfig, TemplateDictionary};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state() -> TargetBox {
        TargetBox {
            cx: 30.0,
            cy: 30.0,
            w: 12.0,
            h: 12.0,
        }
    }

    #[test]
    fn zero_stds_degenerate_to_input_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps = sample(&state(), (0.0, 0.0, 0.0), 7, &mut rng);
        for b in &ps.boxes {
            assert_eq!(*b, state());
        }
        assert!((ps.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample(
            &state(),
            (3.0, 3.0, 0.02),
            50,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        let b = sample(
            &state(),
            (3.0, 3.0, 0.02),
            50,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        assert_eq!(a.boxes, b.boxes);
    }

    #[test]
    fn sample_std_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ps = sample(&state(), (4.0, 4.0, 0.0), 10_000, &mut rng);
        let mean: f64 =
            ps.boxes.iter().map(|b| b.cx - state().cx).sum::<f64>() / ps.boxes.len() as f64;
        let var: f64 = ps
            .boxes
            .iter()
            .map(|b| (b.cx - state().cx - mean).powi(2))
            .sum::<f64>()
            / (ps.boxes.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - 4.0).abs() / 4.0 < 0.05, "sample std {std}");
    }

    #[test]
    fn observe_normalizes_columns() {
        let frame = GrayImage::from_fn(64, 64, |x, y| ((x * 7 + y * 3) % 11) as f64 / 11.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ps = sample(&state(), (5.0, 5.0, 0.05), 20, &mut rng);
        let obs = observe(&frame, &ps, 8, 8);
        for i in 0..20 {
            let nrm: f64 = obs.x.column(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(nrm.abs() < 1e-9 || (nrm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_frame_gives_identical_columns() {
        let frame = GrayImage::from_fn(64, 64, |_, _| 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ps = sample(&state(), (5.0, 5.0, 0.05), 10, &mut rng);
        let obs = observe(&frame, &ps, 8, 8);
        for i in 1..10 {
            for r in 0..64 {
                assert!((obs.x[[r, i]] - obs.x[[r, 0]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fully_outside_particle_is_degenerate() {
        let frame = GrayImage::from_fn(32, 32, |_, _| 0.5);
        let ps = ParticleSet {
            boxes: vec![
                state(),
                TargetBox {
                    cx: 500.0,
                    cy: 500.0,
                    w: 10.0,
                    h: 10.0,
                },
            ],
            weights: vec![0.5, 0.5],
        };
        let obs = observe(&frame, &ps, 4, 4);
        assert!(!obs.degenerate[0]);
        assert!(obs.degenerate[1]);
        assert!(obs.x.column(1).iter().all(|&v| v == 0.0));
    }

    fn toy_dict(frame: &GrayImage) -> TemplateDictionary {
        let cfg = DictionaryConfig {
            m: 3,
            patch_h: 8,
            patch_w: 8,
            update_period: 5,
            jitter_px: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        TemplateDictionary::init_from_frame(
            frame,
            &TargetBox {
                cx: 30.0,
                cy: 30.0,
                w: 12.0,
                h: 12.0,
            },
            &cfg,
            &mut rng,
        )
        .unwrap()
    }

    fn textured_frame() -> GrayImage {
        GrayImage::from_fn(64, 64, |x, y| {
            if (24..36).contains(&x) && (24..36).contains(&y) {
                0.8 + 0.02 * ((x * 3 + y) % 5) as f64
            } else {
                0.15 + 0.01 * ((x + y * 2) % 7) as f64
            }
        })
    }

    #[test]
    fn weights_form_a_simplex_and_rank_by_residual() {
        let frame = textured_frame();
        let dict = toy_dict(&frame);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ps = sample(&state(), (6.0, 6.0, 0.0), 15, &mut rng);
        let obs = observe(&frame, &ps, 8, 8);
        // arbitrary but fixed coefficients
        let c = Array2::from_shape_fn((3 + 64, 15), |(r, i)| {
            0.05 * (((r * 13 + i * 7) % 17) as f64 / 17.0 - 0.5)
        });
        let cm = CoefficientMatrix::new(c, 3).unwrap();
        let w = likelihoods(&obs, &dict, &cm, 20.0).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|&v| v >= 0.0));
        // independent residual loop: weight order must match residual order
        let recon = dict.templates().dot(&cm.appearance());
        let mut residuals = Vec::new();
        for i in 0..15 {
            let mut r2 = 0.0;
            for k in 0..64 {
                r2 += (obs.x[[k, i]] - recon[[k, i]]).powi(2);
            }
            residuals.push(r2);
        }
        for i in 0..15 {
            for j in 0..15 {
                if residuals[i] < residuals[j] - 1e-12 {
                    assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn perfect_reconstruction_dominates_with_large_alpha() {
        let frame = textured_frame();
        let dict = toy_dict(&frame);
        let d = dict.d();
        let n = 5;
        // particle 2's observation equals D_a z exactly; others are far off
        let mut x = Array2::from_elem((d, n), 1.0 / (d as f64).sqrt());
        let mut c = Array2::zeros((dict.m() + d, n));
        c[[0, 2]] = 1.0;
        let col = dict.templates().column(0).to_owned();
        x.column_mut(2).assign(&col);
        let obs = Observations {
            x,
            degenerate: vec![false; n],
        };
        let cm = CoefficientMatrix::new(c, dict.m()).unwrap();
        let w = likelihoods(&obs, &dict, &cm, 500.0).unwrap();
        assert!(w[2] > 0.99, "weights {w:?}");
    }

    #[test]
    fn identical_particles_get_uniform_weights() {
        let frame = textured_frame();
        let dict = toy_dict(&frame);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ps = sample(&state(), (0.0, 0.0, 0.0), 6, &mut rng);
        let obs = observe(&frame, &ps, 8, 8);
        let c = Array2::zeros((dict.m() + dict.d(), 6));
        let cm = CoefficientMatrix::new(c, dict.m()).unwrap();
        let w = likelihoods(&obs, &dict, &cm, 20.0).unwrap();
        for &v in &w {
            assert!((v - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_argmax_and_tie_break() {
        let ps = ParticleSet {
            boxes: (0..3)
                .map(|i| TargetBox {
                    cx: i as f64,
                    cy: 0.0,
                    w: 1.0,
                    h: 1.0,
                })
                .collect(),
            weights: vec![0.1, 0.7, 0.2],
        };
        assert_eq!(estimate(&ps).cx, 1.0);
        let uniform = ParticleSet {
            weights: vec![1.0 / 3.0; 3],
            ..ps
        };
        assert_eq!(estimate(&uniform).cx, 0.0);
    }

    #[test]
    fn alpha_scaling_never_changes_the_argmax() {
        let frame = textured_frame();
        let dict = toy_dict(&frame);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ps = sample(&state(), (6.0, 6.0, 0.02), 12, &mut rng);
        let obs = observe(&frame, &ps, 8, 8);
        let c = Array2::from_shape_fn((dict.m() + dict.d(), 12), |(r, i)| {
            0.03 * (((r * 5 + i * 11) % 13) as f64 / 13.0 - 0.5)
        });
        let cm = CoefficientMatrix::new(c, dict.m()).unwrap();
        let w1 = likelihoods(&obs, &dict, &cm, 5.0).unwrap();
        let w2 = likelihoods(&obs, &dict, &cm, 50.0).unwrap();
        assert_eq!(map_index(&w1), map_index(&w2));
    }
}
