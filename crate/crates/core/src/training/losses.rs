//! The three training losses and their weighted sum.
//!
//! Reduction conventions are fixed: color is the mean absolute difference
//! over all pixels and channels, eikonal and curvature are means over all
//! sampled points.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct LossWeights<T> {
    pub w_eik: T,
    /// Peak curvature weight reached at the end of the warmup ramp.
    pub w_curv_peak: T,
    /// Schedule-controlled current curvature weight.
    pub w_curv_current: T,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts<T> {
    pub rgb: T,
    pub eikonal: T,
    pub curvature: T,
}

/// Mean absolute color difference over all pixels and channels.
pub fn loss_rgb<T: Real>(rendered: &[[T; 3]], target: &[[T; 3]]) -> Result<T> {
    if rendered.len() != target.len() {
        return Err(Error::invalid(format!(
            "color loss shape mismatch: {} rendered vs {} target pixels",
            rendered.len(),
            target.len()
        )));
    }
    if rendered.is_empty() {
        return Ok(T::zero());
    }
    let mut acc = T::zero();
    for (r, t) in rendered.iter().zip(target) {
        for ch in 0..3 {
            acc += (r[ch] - t[ch]).abs();
        }
    }
    Ok(acc / T::from_usize(rendered.len() * 3).unwrap())
}

/// `mean((|grad| - 1)^2)` over the supplied spatial gradients.
pub fn loss_eikonal<T: Real>(gradients: &[Vec3<T>]) -> T {
    if gradients.is_empty() {
        return T::zero();
    }
    let mut acc = T::zero();
    for g in gradients {
        let d = g.norm() - T::one();
        acc += d * d;
    }
    acc / T::from_usize(gradients.len()).unwrap()
}

/// `mean(|laplacian|)` over the supplied discrete Laplacians.
pub fn loss_curvature<T: Real>(laplacians: &[T]) -> T {
    if laplacians.is_empty() {
        return T::zero();
    }
    let mut acc = T::zero();
    for l in laplacians {
        acc += l.abs();
    }
    acc / T::from_usize(laplacians.len()).unwrap()
}

/// `L = L_rgb + w_eik L_eik + w_curv L_curv`. A non-finite part aborts with
/// diagnostics naming it.
pub fn total_loss<T: Real>(
    parts: &LossParts<T>,
    weights: &LossWeights<T>,
    iteration: u64,
) -> Result<T> {
    for (name, v) in [
        ("rgb loss", parts.rgb),
        ("eikonal loss", parts.eikonal),
        ("curvature loss", parts.curvature),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: name.to_string(),
                iteration,
            });
        }
    }
    Ok(parts.rgb + weights.w_eik * parts.eikonal + weights.w_curv_current * parts.curvature)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_identical_is_zero() {
        let batch = vec![[0.3f64, 0.5, 0.7]; 10];
        assert_eq!(loss_rgb(&batch, &batch).unwrap(), 0.0);
    }

    #[test]
    fn rgb_maximal_unit_difference() {
        let a = vec![[0.0f64; 3]; 4];
        let b = vec![[1.0f64; 3]; 4];
        assert_eq!(loss_rgb(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn rgb_single_channel_mean_convention() {
        let a = vec![[0.2f64, 0.2, 0.2]];
        let b = vec![[0.5f64, 0.2, 0.2]];
        let l = loss_rgb(&a, &b).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rgb_shape_mismatch_rejected() {
        let a = vec![[0.0f64; 3]; 2];
        let b = vec![[0.0f64; 3]; 3];
        assert!(loss_rgb(&a, &b).is_err());
    }

    #[test]
    fn eikonal_cases() {
        let unit = vec![Vec3::new(1.0f64, 0.0, 0.0), Vec3::new(0.0, 0.6, 0.8)];
        assert!(loss_eikonal(&unit).abs() < 1e-12);
        let zeros = vec![Vec3::<f64>::zero(); 5];
        assert_eq!(loss_eikonal(&zeros), 1.0);
        let double = vec![Vec3::new(0.0f64, 2.0, 0.0)];
        assert!((loss_eikonal(&double) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curvature_cases() {
        assert_eq!(loss_curvature(&[0.0f64; 8]), 0.0);
        assert_eq!(loss_curvature(&[3.0f64, -3.0]), 3.0);
    }

    #[test]
    fn total_loss_paper_weights() {
        let parts = LossParts {
            rgb: 0.5f64,
            eikonal: 0.2,
            curvature: 0.1,
        };
        let weights = LossWeights {
            w_eik: 0.1,
            w_curv_peak: 5e-4,
            w_curv_current: 5e-4,
        };
        let total = total_loss(&parts, &weights, 0).unwrap();
        assert!((total - 0.52005).abs() < 1e-12);
    }

    #[test]
    fn total_loss_rgb_only() {
        let parts = LossParts {
            rgb: 1.0f64,
            eikonal: 0.0,
            curvature: 0.0,
        };
        let weights = LossWeights {
            w_eik: 123.0,
            w_curv_peak: 9.0,
            w_curv_current: 9.0,
        };
        assert_eq!(total_loss(&parts, &weights, 0).unwrap(), 1.0);
    }

    #[test]
    fn zero_curvature_weight_during_warmup_start() {
        let parts = LossParts {
            rgb: 0.25f64,
            eikonal: 0.0,
            curvature: 10.0,
        };
        let weights = LossWeights {
            w_eik: 0.1,
            w_curv_peak: 5e-4,
            w_curv_current: 0.0,
        };
        assert_eq!(total_loss(&parts, &weights, 0).unwrap(), 0.25);
    }

    #[test]
    fn non_finite_part_identified() {
        let parts = LossParts {
            rgb: 0.1f64,
            eikonal: f64::NAN,
            curvature: 0.0,
        };
        let weights = LossWeights {
            w_eik: 0.1,
            w_curv_peak: 0.0,
            w_curv_current: 0.0,
        };
        let err = total_loss(&parts, &weights, 7).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("eikonal"), "diagnostic must name the part: {msg}");
        assert!(msg.contains('7'));
    }
}
