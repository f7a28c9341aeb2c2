//! The neural SDF: hash-encoded features through a shallow SDF MLP, a color
//! MLP conditioned on numerically differenced surface normals, per-image
//! appearance embeddings, and the learnable opacity sharpness.
//!
//! Every forward pass here has a matching hand-written reverse-mode backward
//! that accumulates into [`ParamBuf`]; gradient-check tests pin them against
//! central finite differences in `f64`. The analytic-gradient path
//! additionally supports back-propagation *through* the spatial gradient
//! (a second-order term), which the AG training modes require.

use rand::Rng;

use crate::encoding::{EncodingConfig, HashGrid, LevelCell};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::mlp::{relu, sigmoid, softplus_and_sigmoid, Linear};
use crate::scalar::Real;
use crate::sh::{sh_basis_deg4, SH_DEG4_LEN};

/// Sharpness of the softplus activation in the SDF MLP. Large enough to act
/// like a rectifier while keeping the field twice differentiable for the
/// analytic-gradient modes.
pub const SOFTPLUS_BETA: f64 = 100.0;

/// Initial value of the logistic sharpness `s`.
pub const S_INIT: f64 = 64.0;

/// Magnitude of the uniform init for W1 columns that read hash features.
const FEATURE_WEIGHT_INIT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FieldConfig {
    /// Hidden width of the one-hidden-layer SDF MLP.
    pub sdf_hidden: usize,
    /// Width of the geometric feature vector fed to the color network.
    pub geo_features: usize,
    /// Hidden width of the color MLP.
    pub color_hidden: usize,
    /// Number of hidden layers in the color MLP.
    pub color_layers: usize,
    /// Per-image appearance embedding length; 0 disables embeddings.
    pub embed_dim: usize,
    /// Number of training images (embedding table rows).
    pub n_images: usize,
}

impl FieldConfig {
    pub fn color_input_len(&self) -> usize {
        3 + 3 + SH_DEG4_LEN + self.geo_features + self.embed_dim
    }
}

/// One learnable vector per training image; zeros at novel views.
#[derive(Debug, Clone)]
pub struct Embeddings<T> {
    pub dim: usize,
    pub table: Vec<T>,
}

impl<T: Real> Embeddings<T> {
    fn zeros(dim: usize, n_images: usize) -> Self {
        Embeddings {
            dim,
            table: vec![T::zero(); dim * n_images],
        }
    }

    /// Embedding row for an image, or zeros when the index is absent or out
    /// of range (the novel-view path).
    pub fn lookup(&self, image: Option<usize>) -> Option<&[T]> {
        let idx = image?;
        let start = idx.checked_mul(self.dim)?;
        self.table.get(start..start + self.dim)
    }
}

/// Logistic sharpness of the SDF-to-opacity conversion, stored as `log s`.
#[derive(Debug, Clone, Copy)]
pub struct VarianceParam<T> {
    pub log_s: T,
}

impl<T: Real> VarianceParam<T> {
    pub fn s(&self) -> T {
        self.log_s.exp()
    }
}

/// SDF value, surface normal, discrete Laplacian, and geometric features at
/// one point.
#[derive(Debug, Clone)]
pub struct FieldSample<T> {
    pub sdf: T,
    pub normal: Vec3<T>,
    pub laplacian: T,
    pub features: Vec<T>,
}

/// One-hidden-layer SDF MLP: `[features; position] -> (sdf, geo features)`.
#[derive(Debug, Clone)]
pub struct SdfNetwork<T> {
    pub hidden: Linear<T>,
    pub out: Linear<T>,
}

/// Four-hidden-layer color MLP with rectified hiddens and sigmoid output.
#[derive(Debug, Clone)]
pub struct ColorNetwork<T> {
    pub layers: Vec<Linear<T>>,
}

#[derive(Debug, Clone)]
pub struct NeuralField<T> {
    pub config: FieldConfig,
    pub grid: HashGrid<T>,
    pub sdf: SdfNetwork<T>,
    pub color: ColorNetwork<T>,
    pub embeddings: Embeddings<T>,
    pub variance: VarianceParam<T>,
}

/// Cached intermediates of one SDF MLP evaluation, reused by the backward
/// pass and the analytic-gradient path.
#[derive(Debug, Clone, Default)]
pub struct SdfEvalCache<T> {
    pub x: Vec3<T>,
    pub active_levels: usize,
    pub clamped: bool,
    pub cells: Vec<LevelCell<T>>,
    /// MLP input `[gamma(x); x]`.
    pub u: Vec<T>,
    /// Hidden pre-activation.
    pub z: Vec<T>,
    /// Hidden activation `softplus(z)`.
    pub h: Vec<T>,
    /// `sigmoid(beta z)`, the activation derivative.
    pub s: Vec<T>,
    /// Outputs: `y[0]` is the SDF, the rest are geometric features.
    pub y: Vec<T>,
}

impl<T: Real> SdfEvalCache<T> {
    pub fn sdf(&self) -> T {
        self.y[0]
    }

    pub fn features(&self) -> &[T] {
        &self.y[1..]
    }
}

/// Cached intermediates of one analytic-gradient evaluation.
#[derive(Debug, Clone, Default)]
pub struct AgCache<T> {
    /// Encoding Jacobian, `(c*L) x 3` row-major.
    pub jgamma: Vec<[T; 3]>,
    /// `p = a .* sigmoid(beta z)` where `a` is the SDF output row.
    pub p: Vec<T>,
    /// `q = W1^T p`.
    pub q: Vec<T>,
    pub on_face: bool,
}

/// Cached intermediates of one color MLP evaluation.
#[derive(Debug, Clone, Default)]
pub struct ColorEvalCache<T> {
    pub input: Vec<T>,
    /// Post-relu activations per hidden layer.
    pub acts: Vec<Vec<T>>,
    /// Pre-sigmoid output.
    pub pre: [T; 3],
    pub rgb: [T; 3],
    /// Smallest |pre-activation| seen across hidden units; finite-difference
    /// oracles use it to stay away from rectifier kinks.
    pub min_abs_pre: T,
}

/// Gradient (or moment) buffer shaped exactly like the learnable parameters.
///
/// `slices_mut` yields the buffers in the same order as
/// [`NeuralField::param_slices_mut`]; optimizers rely on that pairing.
#[derive(Debug, Clone)]
pub struct ParamBuf<T> {
    pub tables: Vec<Vec<T>>,
    pub sdf_hidden_w: Vec<T>,
    pub sdf_hidden_b: Vec<T>,
    pub sdf_out_w: Vec<T>,
    pub sdf_out_b: Vec<T>,
    pub color_w: Vec<Vec<T>>,
    pub color_b: Vec<Vec<T>>,
    pub embeddings: Vec<T>,
    pub log_s: T,
}

impl<T: Real> ParamBuf<T> {
    pub fn zeros_like(field: &NeuralField<T>) -> Self {
        ParamBuf {
            tables: field.grid.tables.iter().map(|t| vec![T::zero(); t.len()]).collect(),
            sdf_hidden_w: vec![T::zero(); field.sdf.hidden.w.len()],
            sdf_hidden_b: vec![T::zero(); field.sdf.hidden.b.len()],
            sdf_out_w: vec![T::zero(); field.sdf.out.w.len()],
            sdf_out_b: vec![T::zero(); field.sdf.out.b.len()],
            color_w: field.color.layers.iter().map(|l| vec![T::zero(); l.w.len()]).collect(),
            color_b: field.color.layers.iter().map(|l| vec![T::zero(); l.b.len()]).collect(),
            embeddings: vec![T::zero(); field.embeddings.table.len()],
            log_s: T::zero(),
        }
    }

    pub fn zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(T::zero());
        }
    }

    /// Accumulates `other` into `self` (deterministic chunk reduction).
    pub fn add_from(&mut self, other: &ParamBuf<T>) {
        let mut o = other.slices();
        for (dst, src) in self.slices_mut().into_iter().zip(o.drain(..)) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = Vec::new();
        for t in &self.tables {
            v.push(t);
        }
        v.push(&self.sdf_hidden_w);
        v.push(&self.sdf_hidden_b);
        v.push(&self.sdf_out_w);
        v.push(&self.sdf_out_b);
        for (w, b) in self.color_w.iter().zip(&self.color_b) {
            v.push(w);
            v.push(b);
        }
        v.push(&self.embeddings);
        v.push(std::slice::from_ref(&self.log_s));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = Vec::new();
        for t in &mut self.tables {
            v.push(t);
        }
        v.push(&mut self.sdf_hidden_w);
        v.push(&mut self.sdf_hidden_b);
        v.push(&mut self.sdf_out_w);
        v.push(&mut self.sdf_out_b);
        for (w, b) in self.color_w.iter_mut().zip(&mut self.color_b) {
            v.push(w);
            v.push(b);
        }
        v.push(&mut self.embeddings);
        v.push(std::slice::from_mut(&mut self.log_s));
        v
    }
}

impl<T: Real> NeuralField<T> {
    /// Builds a field with randomly initialized tables and color network and
    /// the SDF MLP set to approximate `|x| - sphere_radius`.
    pub fn init<R: Rng>(
        encoding: EncodingConfig,
        config: FieldConfig,
        sphere_radius: T,
        rng: &mut R,
    ) -> Result<Self> {
        let grid = HashGrid::init(encoding, rng)?;
        let d_in = encoding.feature_len() + 3;
        let sdf = SdfNetwork {
            hidden: Linear::zeros(d_in, config.sdf_hidden),
            out: Linear::zeros(config.sdf_hidden, 1 + config.geo_features),
        };
        let mut layers = Vec::with_capacity(config.color_layers + 1);
        let mut prev = config.color_input_len();
        for _ in 0..config.color_layers {
            layers.push(Linear::init(prev, config.color_hidden, rng));
            prev = config.color_hidden;
        }
        layers.push(Linear::init(prev, 3, rng));
        let mut field = NeuralField {
            config,
            grid,
            sdf,
            color: ColorNetwork { layers },
            embeddings: Embeddings::zeros(config.embed_dim, config.n_images),
            variance: VarianceParam {
                log_s: T::lit(S_INIT.ln()),
            },
        };
        field.init_sphere(sphere_radius, rng);
        Ok(field)
    }

    /// Sets the SDF MLP so that `f(x) ~ |x| - radius` while the hash grid is
    /// near zero: hidden units compute `softplus(v_h . x)` for directions
    /// `v_h` spread over the sphere, and the output row averages them with
    /// the `E[relu(v . x)] = |x|/4` identity.
    pub fn init_sphere<R: Rng>(&mut self, radius: T, rng: &mut R) {
        let h_dim = self.config.sdf_hidden;
        let feat_len = self.grid.config.feature_len();
        let dirs = fibonacci_sphere::<T>(h_dim);
        for w in self.sdf.hidden.w.iter_mut() {
            *w = T::lit(rng.gen_range(-FEATURE_WEIGHT_INIT..FEATURE_WEIGHT_INIT));
        }
        for ax in 0..3 {
            let col = &mut self.sdf.hidden.w[(feat_len + ax) * h_dim..(feat_len + ax + 1) * h_dim];
            for (w, dir) in col.iter_mut().zip(&dirs) {
                *w = dir[ax];
            }
        }
        self.sdf.hidden.b.fill(T::zero());
        let out_dim = 1 + self.config.geo_features;
        let bound = (1.0 / h_dim as f64).sqrt();
        for w in self.sdf.out.w.iter_mut() {
            *w = T::lit(rng.gen_range(-bound..bound));
        }
        let gain = T::lit(4.0) / T::from_usize(h_dim).unwrap();
        for h in 0..h_dim {
            self.sdf.out.w[h * out_dim] = gain;
        }
        self.sdf.out.b.fill(T::zero());
        self.sdf.out.b[0] = -radius;
    }

    pub fn feature_len(&self) -> usize {
        self.grid.config.feature_len()
    }

    pub fn levels(&self) -> usize {
        self.grid.config.levels
    }

    /// Gathers the encoding into `cache.u = [gamma(x); x]`.
    fn encode_input(&self, x: Vec3<T>, active_levels: usize, cache: &mut SdfEvalCache<T>) {
        let cfg = &self.grid.config;
        let (xc, clamped) = HashGrid::clamp_to_domain(x);
        let active = active_levels.min(cfg.levels);
        cache.x = xc;
        cache.active_levels = active;
        cache.clamped = clamped;
        cache.cells.clear();
        let c = cfg.channels;
        let d_in = cfg.feature_len() + 3;
        cache.u.clear();
        cache.u.resize(d_in, T::zero());
        for level in 0..active {
            let cell = self.grid.level_cell(xc, level);
            let table = &self.grid.tables[level];
            let dst = &mut cache.u[level * c..(level + 1) * c];
            for k in 0..8 {
                let w = cell.weight(k);
                let row = cell.corners[k] as usize * c;
                for (d, &t) in dst.iter_mut().zip(&table[row..row + c]) {
                    *d += w * t;
                }
            }
            cache.cells.push(cell);
        }
        cache.u[cfg.feature_len()] = xc.x;
        cache.u[cfg.feature_len() + 1] = xc.y;
        cache.u[cfg.feature_len() + 2] = xc.z;
    }

    /// Evaluates the SDF MLP at `x`, filling `cache` for reuse by backward
    /// passes. Returns the SDF value; geometric features are `cache.features()`.
    pub fn sdf_forward(&self, x: Vec3<T>, active_levels: usize, cache: &mut SdfEvalCache<T>) -> T {
        self.encode_input(x, active_levels, cache);
        let h_dim = self.config.sdf_hidden;
        cache.z.resize(h_dim, T::zero());
        self.sdf.hidden.forward(&cache.u, &mut cache.z);
        cache.h.resize(h_dim, T::zero());
        cache.s.resize(h_dim, T::zero());
        let beta = T::lit(SOFTPLUS_BETA);
        for i in 0..h_dim {
            let (sp, sig) = softplus_and_sigmoid(cache.z[i], beta);
            cache.h[i] = sp;
            cache.s[i] = sig;
        }
        cache.y.resize(1 + self.config.geo_features, T::zero());
        self.sdf.out.forward(&cache.h, &mut cache.y);
        cache.y[0]
    }

    /// Like [`Self::sdf_forward`] but computes only the SDF scalar, skipping
    /// the geometric-feature output rows. Used for the six offset probes,
    /// whose features are never read.
    pub fn sdf_forward_value(
        &self,
        x: Vec3<T>,
        active_levels: usize,
        cache: &mut SdfEvalCache<T>,
    ) -> T {
        self.encode_input(x, active_levels, cache);
        let h_dim = self.config.sdf_hidden;
        cache.z.resize(h_dim, T::zero());
        self.sdf.hidden.forward(&cache.u, &mut cache.z);
        cache.h.resize(h_dim, T::zero());
        cache.s.resize(h_dim, T::zero());
        let beta = T::lit(SOFTPLUS_BETA);
        let out_dim = 1 + self.config.geo_features;
        let mut f = self.sdf.out.b[0];
        for i in 0..h_dim {
            let (sp, sig) = softplus_and_sigmoid(cache.z[i], beta);
            cache.h[i] = sp;
            cache.s[i] = sig;
            f += self.sdf.out.w[i * out_dim] * sp;
        }
        cache.y.clear();
        cache.y.push(f);
        f
    }

    /// Convenience allocating evaluation: `(sdf, geometric features)`.
    pub fn sdf_eval(&self, x: Vec3<T>, active_levels: usize) -> (T, Vec<T>) {
        let mut cache = SdfEvalCache::default();
        let f = self.sdf_forward(x, active_levels, &mut cache);
        (f, cache.features().to_vec())
    }

    /// First-order backward through the SDF MLP and the hash encoding.
    /// `df` is the upstream derivative of the SDF output, `dfeat` of the
    /// geometric features (when they fed the color network).
    pub fn sdf_backward(
        &self,
        cache: &SdfEvalCache<T>,
        df: T,
        dfeat: Option<&[T]>,
        grads: &mut ParamBuf<T>,
        scratch: &mut BackwardScratch<T>,
    ) {
        let out_dim = 1 + self.config.geo_features;
        let h_dim = self.config.sdf_hidden;
        scratch.dh.clear();
        scratch.dh.resize(h_dim, T::zero());
        if cache.y.len() == 1 {
            // value-only evaluation: only the SDF output row participates
            debug_assert!(dfeat.is_none());
            grads.sdf_out_b[0] += df;
            for h in 0..h_dim {
                grads.sdf_out_w[h * out_dim] += df * cache.h[h];
                scratch.dh[h] = self.sdf.out.w[h * out_dim] * df;
            }
        } else {
            scratch.dy.clear();
            scratch.dy.resize(out_dim, T::zero());
            scratch.dy[0] = df;
            if let Some(dfeat) = dfeat {
                for (d, &g) in scratch.dy[1..].iter_mut().zip(dfeat) {
                    *d = g;
                }
            }
            self.sdf.out.backward(
                &cache.h,
                &scratch.dy,
                &mut grads.sdf_out_w,
                &mut grads.sdf_out_b,
                Some(&mut scratch.dh),
            );
        }
        // softplus' = sigmoid(beta z)
        scratch.dz.clear();
        scratch.dz.resize(h_dim, T::zero());
        for i in 0..h_dim {
            scratch.dz[i] = scratch.dh[i] * cache.s[i];
        }
        scratch.du.clear();
        scratch.du.resize(cache.u.len(), T::zero());
        self.sdf.hidden.backward(
            &cache.u,
            &scratch.dz,
            &mut grads.sdf_hidden_w,
            &mut grads.sdf_hidden_b,
            Some(&mut scratch.du),
        );
        self.scatter_feature_grads(cache, &scratch.du, grads);
    }

    /// Scatters `d(loss)/d(feature)` into the table gradients through the
    /// trilinear weights of the cached cells.
    fn scatter_feature_grads(&self, cache: &SdfEvalCache<T>, du: &[T], grads: &mut ParamBuf<T>) {
        let c = self.grid.config.channels;
        for (level, cell) in cache.cells.iter().enumerate() {
            let dfeat = &du[level * c..(level + 1) * c];
            let gtable = &mut grads.tables[level];
            for k in 0..8 {
                let w = cell.weight(k);
                let row = cell.corners[k] as usize * c;
                for (g, &d) in gtable[row..row + c].iter_mut().zip(dfeat) {
                    *g += w * d;
                }
            }
        }
    }

    /// Analytic spatial gradient of the SDF at the cached evaluation point:
    /// `g = J_u^T W1^T (a .* sigmoid(beta z))` with `J_u = [J_gamma; I]`.
    pub fn analytic_grad_forward(&self, cache: &SdfEvalCache<T>, ag: &mut AgCache<T>) -> Vec3<T> {
        let feat_len = self.grid.config.feature_len();
        ag.jgamma.clear();
        ag.jgamma.resize(feat_len, [T::zero(); 3]);
        ag.on_face = self
            .grid
            .encode_grad_into(cache.x, cache.active_levels, &mut ag.jgamma);
        let h_dim = self.config.sdf_hidden;
        let out_dim = 1 + self.config.geo_features;
        ag.p.clear();
        ag.p.resize(h_dim, T::zero());
        for h in 0..h_dim {
            ag.p[h] = self.sdf.out.w[h * out_dim] * cache.s[h];
        }
        ag.q.clear();
        ag.q.resize(cache.u.len(), T::zero());
        self.sdf.hidden.input_grad(&ag.p, &mut ag.q);
        let mut g = Vec3::new(ag.q[feat_len], ag.q[feat_len + 1], ag.q[feat_len + 2]);
        for d in 0..feat_len {
            let j = ag.jgamma[d];
            let qd = ag.q[d];
            g.x += j[0] * qd;
            g.y += j[1] * qd;
            g.z += j[2] * qd;
        }
        g
    }

    /// Convenience analytic gradient (forward only).
    pub fn analytical_gradient(&self, x: Vec3<T>, active_levels: usize) -> Vec3<T> {
        let mut cache = SdfEvalCache::default();
        self.sdf_forward(x, active_levels, &mut cache);
        let mut ag = AgCache::default();
        self.analytic_grad_forward(&cache, &mut ag)
    }

    /// Back-propagates an upstream derivative `r = dL/dg` through the
    /// analytic spatial gradient into the parameters. This is the
    /// second-order path: it differentiates `g` w.r.t. tables, `W1`, `b1`,
    /// and the SDF output row.
    pub fn analytic_grad_backward(
        &self,
        cache: &SdfEvalCache<T>,
        ag: &AgCache<T>,
        r: Vec3<T>,
        grads: &mut ParamBuf<T>,
        scratch: &mut BackwardScratch<T>,
    ) {
        let feat_len = self.grid.config.feature_len();
        let c = self.grid.config.channels;
        let h_dim = self.config.sdf_hidden;
        let out_dim = 1 + self.config.geo_features;
        let resolutions = self.grid.resolutions();

        // t = J_u r
        scratch.du.clear();
        scratch.du.resize(cache.u.len(), T::zero());
        let t = &mut scratch.du;
        for d in 0..feat_len {
            let j = ag.jgamma[d];
            t[d] = j[0] * r.x + j[1] * r.y + j[2] * r.z;
        }
        t[feat_len] = r.x;
        t[feat_len + 1] = r.y;
        t[feat_len + 2] = r.z;

        // dL/dJ_gamma[d][k] = q_d r_k, scattered through the weight
        // derivatives of the containing cells.
        for (level, cell) in cache.cells.iter().enumerate() {
            let scale = T::from_u32(resolutions[level]).unwrap() * T::lit(0.5);
            let gtable = &mut grads.tables[level];
            let q_level = &ag.q[level * c..(level + 1) * c];
            for k in 0..8 {
                let coef = cell.weight_grad(k, 0, scale) * r.x
                    + cell.weight_grad(k, 1, scale) * r.y
                    + cell.weight_grad(k, 2, scale) * r.z;
                let row = cell.corners[k] as usize * c;
                for (g, &q) in gtable[row..row + c].iter_mut().zip(q_level) {
                    *g += coef * q;
                }
            }
        }

        // q = W1^T p: dW1 += p t^T, dp = W1 t
        scratch.dh.clear();
        scratch.dh.resize(h_dim, T::zero());
        self.sdf.hidden.mat_vec_accum(t, &mut scratch.dh);
        let wt = &scratch.dh;
        for (d, &td) in t.iter().enumerate() {
            let gcol = &mut grads.sdf_hidden_w[d * h_dim..(d + 1) * h_dim];
            for (g, &p) in gcol.iter_mut().zip(&ag.p) {
                *g += p * td;
            }
        }
        // p = a .* s: da += s .* wt, dz = a .* wt .* beta s (1 - s)
        let beta = T::lit(SOFTPLUS_BETA);
        scratch.dz.clear();
        scratch.dz.resize(h_dim, T::zero());
        for h in 0..h_dim {
            let a = self.sdf.out.w[h * out_dim];
            grads.sdf_out_w[h * out_dim] += cache.s[h] * wt[h];
            scratch.dz[h] = a * wt[h] * beta * cache.s[h] * (T::one() - cache.s[h]);
        }
        // z = W1 u + b1
        scratch.du2.clear();
        scratch.du2.resize(cache.u.len(), T::zero());
        self.sdf.hidden.backward(
            &cache.u,
            &scratch.dz,
            &mut grads.sdf_hidden_w,
            &mut grads.sdf_hidden_b,
            Some(&mut scratch.du2),
        );
        let du2 = std::mem::take(&mut scratch.du2);
        self.scatter_feature_grads(cache, &du2, grads);
        scratch.du2 = du2;
    }

    /// Builds the color-network input vector.
    pub fn color_input(
        &self,
        x: Vec3<T>,
        normal: Vec3<T>,
        view_dir: Vec3<T>,
        features: &[T],
        image: Option<usize>,
        out: &mut Vec<T>,
    ) {
        debug_assert_eq!(features.len(), self.config.geo_features);
        out.clear();
        out.extend_from_slice(&x.to_array());
        out.extend_from_slice(&normal.to_array());
        out.extend_from_slice(&sh_basis_deg4(view_dir));
        out.extend_from_slice(features);
        if self.config.embed_dim > 0 {
            match self.embeddings.lookup(image) {
                Some(e) => out.extend_from_slice(e),
                None => out.resize(out.len() + self.config.embed_dim, T::zero()),
            }
        }
    }

    /// Color MLP forward over a prepared input (stored in `cache.input`).
    pub fn color_forward(&self, cache: &mut ColorEvalCache<T>) -> [T; 3] {
        let n_hidden = self.color.layers.len() - 1;
        cache.acts.resize(n_hidden, Vec::new());
        cache.min_abs_pre = T::infinity();
        let mut min_abs = T::infinity();
        for i in 0..n_hidden {
            let layer = &self.color.layers[i];
            let (before, rest) = cache.acts.split_at_mut(i);
            let act = &mut rest[0];
            act.resize(layer.out_dim, T::zero());
            let prev: &[T] = if i == 0 { &cache.input } else { &before[i - 1] };
            layer.forward(prev, act);
            for v in act.iter_mut() {
                min_abs = min_abs.min(v.abs());
                *v = relu(*v);
            }
        }
        cache.min_abs_pre = min_abs;
        let prev: &[T] = if n_hidden == 0 {
            &cache.input
        } else {
            &cache.acts[n_hidden - 1]
        };
        let mut pre = [T::zero(); 3];
        self.color.layers[n_hidden].forward(prev, &mut pre);
        cache.pre = pre;
        for j in 0..3 {
            cache.rgb[j] = sigmoid(pre[j]);
        }
        cache.rgb
    }

    /// Convenience radiance evaluation.
    pub fn color_eval(
        &self,
        x: Vec3<T>,
        normal: Vec3<T>,
        view_dir: Vec3<T>,
        features: &[T],
        image: Option<usize>,
    ) -> [T; 3] {
        let mut cache = ColorEvalCache::default();
        self.color_input(x, normal, view_dir, features, image, &mut cache.input);
        self.color_forward(&mut cache)
    }

    /// Backward through the color MLP. Accumulates weight gradients and
    /// returns the input gradient in `dinput` (zeroed here), from which the
    /// caller extracts the normal/feature/embedding components.
    pub fn color_backward(
        &self,
        cache: &ColorEvalCache<T>,
        drgb: [T; 3],
        grads: &mut ParamBuf<T>,
        dinput: &mut Vec<T>,
        scratch: &mut BackwardScratch<T>,
    ) {
        let n_hidden = self.color.layers.len() - 1;
        // sigmoid output squash
        let mut dpre = [T::zero(); 3];
        for j in 0..3 {
            dpre[j] = drgb[j] * cache.rgb[j] * (T::one() - cache.rgb[j]);
        }
        dinput.clear();
        dinput.resize(cache.input.len(), T::zero());
        if n_hidden == 0 {
            self.color.layers[0].backward(
                &cache.input,
                &dpre,
                &mut grads.color_w[0],
                &mut grads.color_b[0],
                Some(&mut dinput[..]),
            );
            return;
        }
        // dL/d(activation of layer i), walked backwards
        let mut dact = std::mem::take(&mut scratch.dh);
        let mut next = std::mem::take(&mut scratch.dz);
        dact.clear();
        dact.resize(self.color.layers[n_hidden].in_dim, T::zero());
        self.color.layers[n_hidden].backward(
            &cache.acts[n_hidden - 1],
            &dpre,
            &mut grads.color_w[n_hidden],
            &mut grads.color_b[n_hidden],
            Some(&mut dact[..]),
        );
        for i in (0..n_hidden).rev() {
            // relu mask: activation is zero exactly where the unit was off
            for (d, &a) in dact.iter_mut().zip(&cache.acts[i]) {
                if a == T::zero() {
                    *d = T::zero();
                }
            }
            if i == 0 {
                self.color.layers[0].backward(
                    &cache.input,
                    &dact,
                    &mut grads.color_w[0],
                    &mut grads.color_b[0],
                    Some(&mut dinput[..]),
                );
            } else {
                next.clear();
                next.resize(self.color.layers[i].in_dim, T::zero());
                self.color.layers[i].backward(
                    &cache.acts[i - 1],
                    &dact,
                    &mut grads.color_w[i],
                    &mut grads.color_b[i],
                    Some(&mut next[..]),
                );
                std::mem::swap(&mut dact, &mut next);
            }
        }
        scratch.dh = dact;
        scratch.dz = next;
    }

    /// Splits a color-input gradient into its normal, feature, and embedding
    /// parts (positions and view directions are not differentiated through).
    pub fn split_color_input_grad<'a>(
        &self,
        dinput: &'a [T],
    ) -> (Vec3<T>, &'a [T], Option<&'a [T]>) {
        let normal = Vec3::new(dinput[3], dinput[4], dinput[5]);
        let feat_start = 6 + SH_DEG4_LEN;
        let feat_end = feat_start + self.config.geo_features;
        let dfeat = &dinput[feat_start..feat_end];
        let dembed = if self.config.embed_dim > 0 {
            Some(&dinput[feat_end..feat_end + self.config.embed_dim])
        } else {
            None
        };
        (normal, dfeat, dembed)
    }

    /// Parameter slices in the canonical order shared with [`ParamBuf`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = Vec::new();
        for t in &mut self.grid.tables {
            v.push(t);
        }
        v.push(&mut self.sdf.hidden.w);
        v.push(&mut self.sdf.hidden.b);
        v.push(&mut self.sdf.out.w);
        v.push(&mut self.sdf.out.b);
        for l in &mut self.color.layers {
            v.push(&mut l.w);
            v.push(&mut l.b);
        }
        v.push(&mut self.embeddings.table);
        v.push(std::slice::from_mut(&mut self.variance.log_s));
        v
    }

    pub fn param_count(&mut self) -> usize {
        self.param_slices_mut().iter().map(|s| s.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> NeuralField<U> {
        let cast_vec = |v: &Vec<T>| v.iter().map(|&x| U::lit(x.to_f64())).collect::<Vec<U>>();
        let cast_linear = |l: &Linear<T>| Linear {
            in_dim: l.in_dim,
            out_dim: l.out_dim,
            w: cast_vec(&l.w),
            b: cast_vec(&l.b),
        };
        let mut grid = HashGrid::zeros(self.grid.config).expect("valid config");
        for (dst, src) in grid.tables.iter_mut().zip(&self.grid.tables) {
            *dst = cast_vec(src);
        }
        NeuralField {
            config: self.config,
            grid,
            sdf: SdfNetwork {
                hidden: cast_linear(&self.sdf.hidden),
                out: cast_linear(&self.sdf.out),
            },
            color: ColorNetwork {
                layers: self.color.layers.iter().map(cast_linear).collect(),
            },
            embeddings: Embeddings {
                dim: self.embeddings.dim,
                table: cast_vec(&self.embeddings.table),
            },
            variance: VarianceParam {
                log_s: U::lit(self.variance.log_s.to_f64()),
            },
        }
    }
}

/// Reusable temporaries for the backward passes.
#[derive(Debug, Clone, Default)]
pub struct BackwardScratch<T> {
    dy: Vec<T>,
    dh: Vec<T>,
    dz: Vec<T>,
    du: Vec<T>,
    du2: Vec<T>,
}

/// Central-difference surface normal: six additional field evaluations, two
/// per canonical axis. Returns the gradient estimate and the six offset
/// values (order `[+x, -x, +y, -y, +z, -z]`) for reuse by the Laplacian.
pub fn numerical_gradient<T: Real>(
    mut f: impl FnMut(Vec3<T>) -> T,
    x: Vec3<T>,
    eps: T,
) -> (Vec3<T>, [T; 6]) {
    let mut offsets = [T::zero(); 6];
    let mut grad = Vec3::zero();
    let two = T::lit(2.0);
    for ax in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[ax] += eps;
        xm[ax] -= eps;
        let fp = f(xp);
        let fm = f(xm);
        offsets[2 * ax] = fp;
        offsets[2 * ax + 1] = fm;
        grad[ax] = (fp - fm) / (two * eps);
    }
    (grad, offsets)
}

/// Discrete Laplacian from the six samples of [`numerical_gradient`] plus the
/// center value; performs no further field evaluations.
pub fn numerical_laplacian<T: Real>(center: T, offsets: &[T; 6], eps: T) -> T {
    let two = T::lit(2.0);
    let mut acc = T::zero();
    for ax in 0..3 {
        acc += offsets[2 * ax] + offsets[2 * ax + 1] - two * center;
    }
    acc / (eps * eps)
}

/// Evenly spread unit directions (Fibonacci sphere), used by the sphere
/// initialization.
fn fibonacci_sphere<T: Real>(n: usize) -> Vec<[T; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [
                T::lit(r * phi.cos()),
                T::lit(r * phi.sin()),
                T::lit(z),
            ]
        })
        .collect()
}
