//! Minimal dense layers with explicit reverse-mode backward passes.
//!
//! Weights are stored column-major (`w[d * out_dim + h]` connects input `d`
//! to output `h`) so the forward pass is a sequence of length-`out_dim`
//! axpy updates, which vectorizes well at the small widths used here.

use crate::scalar::Real;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Column-major weights, length `in_dim * out_dim`.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            w: vec![T::zero(); in_dim * out_dim],
            b: vec![T::zero(); out_dim],
        }
    }

    /// Xavier-uniform initialization.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        for w in layer.w.iter_mut() {
            *w = T::lit(rng.gen_range(-bound..bound));
        }
        layer
    }

    /// `out = W input + b`
    pub fn forward(&self, input: &[T], out: &mut [T]) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        out.copy_from_slice(&self.b);
        for (d, &x) in input.iter().enumerate() {
            let col = &self.w[d * self.out_dim..(d + 1) * self.out_dim];
            for (o, &w) in out.iter_mut().zip(col) {
                *o += w * x;
            }
        }
    }

    /// Accumulates `dW += dout x^T`, `db += dout`, and optionally
    /// `dinput += W^T dout`.
    pub fn backward(
        &self,
        input: &[T],
        dout: &[T],
        gw: &mut [T],
        gb: &mut [T],
        dinput: Option<&mut [T]>,
    ) {
        debug_assert_eq!(gw.len(), self.w.len());
        debug_assert_eq!(gb.len(), self.out_dim);
        for (g, &d) in gb.iter_mut().zip(dout) {
            *g += d;
        }
        for (d, &x) in input.iter().enumerate() {
            let gcol = &mut gw[d * self.out_dim..(d + 1) * self.out_dim];
            for (g, &dz) in gcol.iter_mut().zip(dout) {
                *g += dz * x;
            }
        }
        if let Some(dinput) = dinput {
            self.input_grad(dout, dinput);
        }
    }

    /// `dinput += W^T dout` without touching weight gradients.
    pub fn input_grad(&self, dout: &[T], dinput: &mut [T]) {
        debug_assert_eq!(dinput.len(), self.in_dim);
        for (d, di) in dinput.iter_mut().enumerate() {
            let col = &self.w[d * self.out_dim..(d + 1) * self.out_dim];
            let mut acc = T::zero();
            for (&w, &dz) in col.iter().zip(dout) {
                acc += w * dz;
            }
            *di += acc;
        }
    }

    /// `out += W input` applied to a vector that is mostly structural (used
    /// by the second-order path): returns `W input` into `out` (accumulating).
    pub fn mat_vec_accum(&self, input: &[T], out: &mut [T]) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (d, &x) in input.iter().enumerate() {
            let col = &self.w[d * self.out_dim..(d + 1) * self.out_dim];
            for (o, &w) in out.iter_mut().zip(col) {
                *o += w * x;
            }
        }
    }
}

/// Numerically stable `softplus_beta(z) = ln(1 + exp(beta z)) / beta`.
#[inline]
pub fn softplus<T: Real>(z: T, beta: T) -> T {
    let bz = beta * z;
    z.max(T::zero()) + (-bz.abs()).exp().ln_1p() / beta
}

/// `(softplus_beta(z), sigmoid(beta z))` with saturation fast paths: beyond
/// `|beta z| > 20` the pair is `(max(z, 0), step(z))` to within 2e-9, which
/// skips the transcendentals for most units at large `beta`.
#[inline]
pub fn softplus_and_sigmoid<T: Real>(z: T, beta: T) -> (T, T) {
    let bz = beta * z;
    let cutoff = T::lit(20.0);
    if bz > cutoff {
        (z, T::one())
    } else if bz < -cutoff {
        (T::zero(), T::zero())
    } else {
        let e = (-bz.abs()).exp();
        let sp = z.max(T::zero()) + e.ln_1p() / beta;
        let sig = if bz >= T::zero() {
            T::one() / (T::one() + e)
        } else {
            e / (T::one() + e)
        };
        (sp, sig)
    }
}

/// Derivative of `softplus_beta`: the logistic `sigmoid(beta z)`.
#[inline]
pub fn sigmoid<T: Real>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn relu<T: Real>(z: T) -> T {
    z.max(T::zero())
}
