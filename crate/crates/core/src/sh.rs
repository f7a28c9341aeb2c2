//! Real spherical harmonics basis up to degree 4, used to encode view
//! directions for the color network.

use crate::geometry::Vec3;
use crate::scalar::Real;

pub const SH_DEG4_LEN: usize = 25;

/// Evaluates the 25 real SH basis functions of degrees 0..=4 at a unit
/// direction. Constants follow the standard real-SH normalization.
pub fn sh_basis_deg4<T: Real>(d: Vec3<T>) -> [T; SH_DEG4_LEN] {
    let (x, y, z) = (d.x.to_f64(), d.y.to_f64(), d.z.to_f64());
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let mut out = [0.0f64; SH_DEG4_LEN];

    out[0] = 0.28209479177387814;

    out[1] = -0.48860251190291987 * y;
    out[2] = 0.48860251190291987 * z;
    out[3] = -0.48860251190291987 * x;

    out[4] = 1.0925484305920792 * xy;
    out[5] = -1.0925484305920792 * yz;
    out[6] = 0.31539156525252005 * (2.0 * zz - xx - yy);
    out[7] = -1.0925484305920792 * xz;
    out[8] = 0.5462742152960396 * (xx - yy);

    out[9] = -0.5900435899266435 * y * (3.0 * xx - yy);
    out[10] = 2.890611442640554 * xy * z;
    out[11] = -0.4570457994644658 * y * (4.0 * zz - xx - yy);
    out[12] = 0.3731763325901154 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = -0.4570457994644658 * x * (4.0 * zz - xx - yy);
    out[14] = 1.445305721320277 * z * (xx - yy);
    out[15] = -0.5900435899266435 * x * (xx - 3.0 * yy);

    out[16] = 2.5033429417967046 * xy * (xx - yy);
    out[17] = -1.7701307697799304 * yz * (3.0 * xx - yy);
    out[18] = 0.9461746957575601 * xy * (7.0 * zz - 1.0);
    out[19] = -0.6690465435572892 * yz * (7.0 * zz - 3.0);
    out[20] = 0.10578554691520431 * (zz * (35.0 * zz - 30.0) + 3.0);
    out[21] = -0.6690465435572892 * xz * (7.0 * zz - 3.0);
    out[22] = 0.47308734787878004 * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = -1.7701307697799304 * xz * (xx - 3.0 * yy);
    out[24] = 0.6258357354491761 * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));

    let mut typed = [T::zero(); SH_DEG4_LEN];
    for (t, v) in typed.iter_mut().zip(out) {
        *t = T::lit(v);
    }
    typed
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Real SH are orthonormal over the sphere; Monte Carlo integration of
    /// the Gram matrix is an independent check on every constant above.
    #[test]
    fn basis_is_orthonormal_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 400_000;
        let mut gram = [[0.0f64; SH_DEG4_LEN]; SH_DEG4_LEN];
        for _ in 0..n {
            // uniform direction via normalized gaussian triple
            let mut v;
            loop {
                v = Vec3::new(
                    rng.gen_range(-1.0f64..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let s = v.norm_squared();
                if s > 1e-4 && s <= 1.0 {
                    break;
                }
            }
            let d = v.normalized();
            let b = sh_basis_deg4(d);
            for i in 0..SH_DEG4_LEN {
                for j in i..SH_DEG4_LEN {
                    gram[i][j] += b[i] * b[j];
                }
            }
        }
        let scale = 4.0 * std::f64::consts::PI / n as f64;
        for i in 0..SH_DEG4_LEN {
            for j in i..SH_DEG4_LEN {
                let v = gram[i][j] * scale;
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (v - expect).abs() < 0.03,
                    "gram[{i}][{j}] = {v}, expected {expect}"
                );
            }
        }
    }
}
