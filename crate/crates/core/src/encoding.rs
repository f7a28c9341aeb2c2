//! Multi-resolution hash-grid positional encoding.
//!
//! Each level `l` overlays the domain cube `[-1, 1]^3` with a grid of
//! resolution `V_l` (cell size `2 / V_l`). Grid corners map to rows of a
//! per-level feature table, densely below the table-size threshold and via a
//! spatial hash above it. Point features are the trilinear blend of the 8
//! corner rows, concatenated across levels; levels at or above the active
//! count contribute exact zeros.
//!
//! The analytic spatial derivative of this encoding is discontinuous across
//! cell faces and only touches the containing cell's corners; both facts are
//! asserted by tests here and drive the numerical-gradient design elsewhere.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;
use rand::Rng;

/// Primes of the spatial hash (the first coordinate is left unmultiplied).
pub const HASH_PRIME_Y: u32 = 2_654_435_761;
pub const HASH_PRIME_Z: u32 = 805_459_861;

/// Magnitude of the uniform table initialization. Near-zero so the
/// sphere-initialized MLP dominates the field early in training.
pub const TABLE_INIT_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingConfig {
    /// Number of levels `L`.
    pub levels: usize,
    /// Coarsest grid resolution (cells per domain-cube edge).
    pub v_min: u32,
    /// Finest grid resolution.
    pub v_max: u32,
    /// Feature channels per level `c`.
    pub channels: usize,
    /// Maximum hash-table entries per level `T` (power of two).
    pub max_table_entries: usize,
}

/// Desk-scale default: 6 levels spanning 16..64 cells, 4 channels,
/// 2^16-entry tables (the paper-scale setting is 16 levels spanning
/// 2^5..2^11, 8 channels, 2^22 entries).
impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            levels: 6,
            v_min: 16,
            v_max: 64,
            channels: 4,
            max_table_entries: 1 << 16,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::invalid("encoding needs at least one level"));
        }
        if self.v_min < 1 || self.v_min > self.v_max {
            return Err(Error::invalid("need 1 <= v_min <= v_max"));
        }
        if self.levels == 1 && self.v_min != self.v_max {
            return Err(Error::invalid("single-level encoding needs v_min == v_max"));
        }
        if self.channels < 1 {
            return Err(Error::invalid("encoding needs at least one channel"));
        }
        if !self.max_table_entries.is_power_of_two() {
            return Err(Error::invalid("max_table_entries must be a power of two"));
        }
        Ok(())
    }

    /// Per-level growth factor `b`.
    pub fn growth_factor(&self) -> f64 {
        if self.levels <= 1 {
            1.0
        } else {
            (((self.v_max as f64).ln() - (self.v_min as f64).ln()) / (self.levels as f64 - 1.0))
                .exp()
        }
    }

    /// Grid resolutions `V_l = floor(v_min * b^(l-1))`, with the endpoints
    /// pinned to `v_min`/`v_max` (floating floor can undershoot the last).
    pub fn level_resolutions(&self) -> Vec<u32> {
        let b = self.growth_factor();
        let mut out: Vec<u32> = (0..self.levels)
            .map(|l| (self.v_min as f64 * b.powi(l as i32)).floor() as u32)
            .collect();
        out[0] = self.v_min;
        *out.last_mut().unwrap() = self.v_max;
        for l in 1..out.len() {
            debug_assert!(out[l] >= out[l - 1], "resolutions must be non-decreasing");
        }
        out
    }

    /// Rows of the level-`l` table: dense `(V_l+1)^3` when it fits, else `T`.
    pub fn table_rows(&self, resolution: u32) -> usize {
        let dense = ((resolution as usize) + 1).pow(3);
        dense.min(self.max_table_entries)
    }

    /// Length of the concatenated feature vector `c * L`.
    pub fn feature_len(&self) -> usize {
        self.channels * self.levels
    }

    /// Cell edge length of level `l` (0-based) in scene units.
    pub fn cell_size(&self, level: usize) -> f64 {
        2.0 / self.level_resolutions()[level] as f64
    }
}

/// Maps a grid corner to a table row: dense row-major when the level fits in
/// the table, spatial hash otherwise. Corner components must lie in `[0, V]`.
pub fn hash_index(corner: [u32; 3], resolution: u32, max_table_entries: usize) -> usize {
    let side = resolution as usize + 1;
    if side * side * side <= max_table_entries {
        corner[0] as usize + side * (corner[1] as usize + side * corner[2] as usize)
    } else {
        let h = corner[0]
            ^ corner[1].wrapping_mul(HASH_PRIME_Y)
            ^ corner[2].wrapping_mul(HASH_PRIME_Z);
        (h as usize) & (max_table_entries - 1)
    }
}

/// Interpolation context of one point in one level: the 8 corner table rows
/// (order: x fastest, then y, then z) and the fractional coordinate.
#[derive(Debug, Clone, Copy)]
pub struct LevelCell<T> {
    pub corners: [u32; 8],
    pub beta: Vec3<T>,
}

impl<T: Real> LevelCell<T> {
    /// Trilinear weight of corner `k` (bit 0 = x, bit 1 = y, bit 2 = z).
    #[inline]
    pub fn weight(&self, k: usize) -> T {
        let bx = if k & 1 != 0 {
            self.beta.x
        } else {
            T::one() - self.beta.x
        };
        let by = if k & 2 != 0 {
            self.beta.y
        } else {
            T::one() - self.beta.y
        };
        let bz = if k & 4 != 0 {
            self.beta.z
        } else {
            T::one() - self.beta.z
        };
        bx * by * bz
    }

    /// Derivative of corner `k`'s weight w.r.t. scene coordinate `axis`,
    /// where `scale = V_l / 2` converts cube units to grid units.
    #[inline]
    pub fn weight_grad(&self, k: usize, axis: usize, scale: T) -> T {
        let mut g = scale;
        for (ax, bit) in [(0usize, 1usize), (1, 2), (2, 4)] {
            let b = self.beta[ax];
            if ax == axis {
                if k & bit == 0 {
                    g = -g;
                }
            } else {
                g = g * if k & bit != 0 { b } else { T::one() - b };
            }
        }
        g
    }
}

/// The learnable multi-level feature tables and their resolution geometry.
#[derive(Debug, Clone)]
pub struct HashGrid<T> {
    pub config: EncodingConfig,
    resolutions: Vec<u32>,
    /// Per level: flattened `rows * channels` feature scalars.
    pub tables: Vec<Vec<T>>,
}

impl<T: Real> HashGrid<T> {
    /// Builds a grid with all features zero.
    pub fn zeros(config: EncodingConfig) -> Result<Self> {
        config.validate()?;
        let resolutions = config.level_resolutions();
        let tables = resolutions
            .iter()
            .map(|&v| vec![T::zero(); config.table_rows(v) * config.channels])
            .collect();
        Ok(HashGrid {
            config,
            resolutions,
            tables,
        })
    }

    /// Builds a grid with features uniform in `[-TABLE_INIT_SCALE, +TABLE_INIT_SCALE]`.
    pub fn init<R: Rng>(config: EncodingConfig, rng: &mut R) -> Result<Self> {
        let mut grid = Self::zeros(config)?;
        for table in &mut grid.tables {
            for w in table.iter_mut() {
                *w = T::lit(rng.gen_range(-TABLE_INIT_SCALE..TABLE_INIT_SCALE));
            }
        }
        Ok(grid)
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn param_count(&self) -> usize {
        self.tables.iter().map(Vec::len).sum()
    }

    /// Clamps `x` into the domain cube; second value reports whether any
    /// component was clamped.
    pub fn clamp_to_domain(x: Vec3<T>) -> (Vec3<T>, bool) {
        let one = T::one();
        let c = Vec3::new(
            x.x.max(-one).min(one),
            x.y.max(-one).min(one),
            x.z.max(-one).min(one),
        );
        (c, c != x)
    }

    /// Locates `x` in level `level`'s grid. Points exactly on the upper
    /// domain face fold into the last cell with `beta = 1` so corners stay
    /// in `[0, V]`.
    pub fn level_cell(&self, x: Vec3<T>, level: usize) -> LevelCell<T> {
        let v = self.resolutions[level];
        let scale = T::from_u32(v).unwrap() * T::lit(0.5);
        let max_cell = T::from_u32(v - 1).unwrap();
        let mut base = [0u32; 3];
        let mut beta = Vec3::zero();
        for ax in 0..3 {
            let g = (x[ax] + T::one()) * scale;
            let cell = g.floor().max(T::zero()).min(max_cell);
            base[ax] = cell.to_f64() as u32;
            beta[ax] = g - cell;
        }
        let mut corners = [0u32; 8];
        for (k, c) in corners.iter_mut().enumerate() {
            let corner = [
                base[0] + (k as u32 & 1),
                base[1] + ((k as u32 >> 1) & 1),
                base[2] + ((k as u32 >> 2) & 1),
            ];
            *c = hash_index(corner, v, self.config.max_table_entries) as u32;
        }
        LevelCell { corners, beta }
    }

    /// Encodes `x` into `out` (length `c * L`). Levels `>= active_levels`
    /// are exact zeros. Returns true when `x` had to be clamped into the
    /// domain cube.
    pub fn encode_into(&self, x: Vec3<T>, active_levels: usize, out: &mut [T]) -> bool {
        debug_assert_eq!(out.len(), self.config.feature_len());
        let (x, clamped) = Self::clamp_to_domain(x);
        let c = self.config.channels;
        out.fill(T::zero());
        for level in 0..active_levels.min(self.config.levels) {
            let cell = self.level_cell(x, level);
            let table = &self.tables[level];
            let dst = &mut out[level * c..(level + 1) * c];
            for k in 0..8 {
                let w = cell.weight(k);
                let row = cell.corners[k] as usize * c;
                for (d, &t) in dst.iter_mut().zip(&table[row..row + c]) {
                    *d += w * t;
                }
            }
        }
        clamped
    }

    pub fn encode(&self, x: Vec3<T>, active_levels: usize) -> (Vec<T>, bool) {
        let mut out = vec![T::zero(); self.config.feature_len()];
        let clamped = self.encode_into(x, active_levels, &mut out);
        (out, clamped)
    }

    /// Analytic derivative of the encoding w.r.t. position: a `(c*L) x 3`
    /// matrix stored row-major in `out`. Rows of inactive levels are zero.
    /// Returns true when `x` sits exactly on a cell face at some active
    /// level (the one-sided derivative of the containing cell is used).
    pub fn encode_grad_into(&self, x: Vec3<T>, active_levels: usize, out: &mut [[T; 3]]) -> bool {
        debug_assert_eq!(out.len(), self.config.feature_len());
        let (x, _) = Self::clamp_to_domain(x);
        let c = self.config.channels;
        for row in out.iter_mut() {
            *row = [T::zero(); 3];
        }
        let mut on_face = false;
        for level in 0..active_levels.min(self.config.levels) {
            let cell = self.level_cell(x, level);
            for ax in 0..3 {
                if cell.beta[ax] == T::zero() || cell.beta[ax] == T::one() {
                    on_face = true;
                }
            }
            let scale = T::from_u32(self.resolutions[level]).unwrap() * T::lit(0.5);
            let table = &self.tables[level];
            for k in 0..8 {
                let row = cell.corners[k] as usize * c;
                for ax in 0..3 {
                    let dw = cell.weight_grad(k, ax, scale);
                    for ch in 0..c {
                        out[level * c + ch][ax] += dw * table[row + ch];
                    }
                }
            }
        }
        on_face
    }

    pub fn encode_grad(&self, x: Vec3<T>, active_levels: usize) -> (Vec<[T; 3]>, bool) {
        let mut out = vec![[T::zero(); 3]; self.config.feature_len()];
        let flag = self.encode_grad_into(x, active_levels, &mut out);
        (out, flag)
    }
}

/// Fourier frequency encoding `(sin(2^l pi x), cos(2^l pi x))` per axis and
/// its analytic spatial derivative. Output layout per frequency block `l`:
/// `[sin_x, sin_y, sin_z, cos_x, cos_y, cos_z]`; the derivative matrix has
/// one row per output in the same order.
pub fn fourier_encode<T: Real>(x: Vec3<T>, l_freq: usize) -> (Vec<T>, Vec<[T; 3]>) {
    let mut values = vec![T::zero(); 6 * l_freq];
    let mut grads = vec![[T::zero(); 3]; 6 * l_freq];
    let pi = T::lit(std::f64::consts::PI);
    for l in 0..l_freq {
        let freq = T::lit((1u64 << l) as f64) * pi;
        for ax in 0..3 {
            let arg = freq * x[ax];
            let (s, c) = (arg.sin(), arg.cos());
            values[6 * l + ax] = s;
            values[6 * l + 3 + ax] = c;
            grads[6 * l + ax][ax] = freq * c;
            grads[6 * l + 3 + ax][ax] = -freq * s;
        }
    }
    (values, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn paper_config() -> EncodingConfig {
        EncodingConfig {
            levels: 16,
            v_min: 32,
            v_max: 2048,
            channels: 8,
            max_table_entries: 1 << 22,
        }
    }

    fn small_config() -> EncodingConfig {
        EncodingConfig {
            levels: 2,
            v_min: 4,
            v_max: 8,
            channels: 2,
            max_table_entries: 1 << 14,
        }
    }

    fn random_grid(config: EncodingConfig, seed: u64) -> HashGrid<f64> {
        let mut grid = HashGrid::zeros(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for table in &mut grid.tables {
            for w in table.iter_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
        }
        grid
    }

    #[test]
    fn single_level_resolutions() {
        let cfg = EncodingConfig {
            levels: 1,
            v_min: 32,
            v_max: 32,
            channels: 2,
            max_table_entries: 1 << 16,
        };
        assert_eq!(cfg.level_resolutions(), vec![32]);
        assert_eq!(cfg.growth_factor(), 1.0);
    }

    #[test]
    fn two_level_endpoints_forced() {
        let cfg = EncodingConfig {
            levels: 2,
            v_min: 32,
            v_max: 2048,
            channels: 2,
            max_table_entries: 1 << 16,
        };
        assert_eq!(cfg.level_resolutions(), vec![32, 2048]);
    }

    #[test]
    fn paper_resolutions_follow_growth_formula() {
        let cfg = paper_config();
        let b = cfg.growth_factor();
        assert!((b - 1.3195079107728942).abs() < 1e-12);
        let res = cfg.level_resolutions();
        assert_eq!(res[0], 32);
        assert_eq!(res[1], 42); // floor(32 * 1.31951)
        assert_eq!(res[15], 2048); // pinned endpoint
        for l in 1..16 {
            assert!(res[l] >= res[l - 1]);
        }
    }

    #[test]
    fn dense_indexing_row_major_x_fastest() {
        assert_eq!(hash_index([0, 0, 0], 31, 1 << 16), 0);
        assert_eq!(hash_index([1, 0, 0], 31, 1 << 16), 1);
        assert_eq!(hash_index([0, 1, 0], 31, 1 << 16), 32);
        assert_eq!(hash_index([0, 0, 1], 31, 1 << 16), 32 * 32);
    }

    #[test]
    fn spatial_hash_matches_frozen_oracle() {
        // (5 XOR 7*2654435761 XOR 11*805459861) mod 2^14, u32 wrapping,
        // computed independently and frozen.
        assert_eq!(hash_index([5, 7, 11], 30, 1 << 14), 4277);
    }

    #[test]
    fn hash_is_deterministic_and_in_range() {
        for corner in [[0u32, 0, 0], [100, 200, 300], [2048, 2048, 2048]] {
            let a = hash_index(corner, 2048, 1 << 10);
            let b = hash_index(corner, 2048, 1 << 10);
            assert_eq!(a, b);
            assert!(a < 1 << 10);
        }
    }

    #[test]
    fn encode_at_grid_corner_returns_stored_feature() {
        let cfg = EncodingConfig {
            levels: 1,
            v_min: 4,
            v_max: 4,
            channels: 2,
            max_table_entries: 1 << 14,
        };
        let mut grid = random_grid(cfg, 1);
        // corner (1,2,3) of the 4^3 grid is at x = corner*cell - 1
        let row = hash_index([1, 2, 3], 4, 1 << 14);
        grid.tables[0][row * 2] = 7.5;
        grid.tables[0][row * 2 + 1] = -3.25;
        let x = Vec3::new(1.0 * 0.5 - 1.0, 2.0 * 0.5 - 1.0, 3.0 * 0.5 - 1.0);
        let (f, clamped) = grid.encode(x, 1);
        assert!(!clamped);
        assert!((f[0] - 7.5).abs() < 1e-12);
        assert!((f[1] + 3.25).abs() < 1e-12);
    }

    #[test]
    fn encode_at_cell_center_is_corner_mean() {
        let cfg = EncodingConfig {
            levels: 1,
            v_min: 4,
            v_max: 4,
            channels: 1,
            max_table_entries: 1 << 14,
        };
        let grid = random_grid(cfg, 2);
        // center of cell (0,0,0): grid coords (0.5, 0.5, 0.5)
        let x = Vec3::new(0.5 * 0.5 - 1.0, 0.5 * 0.5 - 1.0, 0.5 * 0.5 - 1.0);
        let (f, _) = grid.encode(x, 1);
        let mut mean = 0.0;
        for k in 0..8 {
            let corner = [k as u32 & 1, (k as u32 >> 1) & 1, (k as u32 >> 2) & 1];
            mean += grid.tables[0][hash_index(corner, 4, 1 << 14)];
        }
        mean /= 8.0;
        assert!((f[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn zero_active_levels_gives_zero_vector() {
        let grid = random_grid(small_config(), 3);
        let (f, _) = grid.encode(Vec3::new(0.3, -0.2, 0.7), 0);
        assert_eq!(f.len(), small_config().feature_len());
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inactive_levels_are_exact_zeros() {
        let grid = random_grid(small_config(), 4);
        let (f, _) = grid.encode(Vec3::new(0.3, -0.2, 0.7), 1);
        let c = small_config().channels;
        assert!(f[..c].iter().any(|&v| v != 0.0));
        assert!(f[c..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_domain_clamps_and_flags() {
        let grid = random_grid(small_config(), 5);
        let (f_out, clamped) = grid.encode(Vec3::new(1.5, 0.0, 0.0), 2);
        assert!(clamped);
        let (f_edge, edge_clamped) = grid.encode(Vec3::new(1.0, 0.0, 0.0), 2);
        assert!(!edge_clamped);
        assert_eq!(f_out, f_edge);
    }

    #[test]
    fn continuity_across_cell_faces() {
        let grid = random_grid(small_config(), 6);
        // face of the coarse level at x = -1 + 2/4 * 1 = -0.5
        let eps = 5e-8;
        let (a, _) = grid.encode(Vec3::new(-0.5 - eps, 0.13, 0.29), 2);
        let (b, _) = grid.encode(Vec3::new(-0.5 + eps, 0.13, 0.29), 2);
        let diff: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-4, "encode discontinuous across face: {diff}");
    }

    /// Adjacent corner rows for a point: the containing cell's corners at
    /// every level.
    fn containing_rows(grid: &HashGrid<f64>, x: Vec3<f64>) -> Vec<(usize, usize)> {
        let mut rows = Vec::new();
        for level in 0..grid.config.levels {
            let cell = grid.level_cell(x, level);
            for k in 0..8 {
                rows.push((level, cell.corners[k] as usize));
            }
        }
        rows
    }

    #[test]
    fn encode_locality_under_table_perturbation() {
        let grid = random_grid(small_config(), 7);
        let x = Vec3::new(0.21, -0.37, 0.55);
        let (base, _) = grid.encode(x, 2);
        let adjacent = containing_rows(&grid, x);
        for level in 0..2 {
            let rows = grid.tables[level].len() / grid.config.channels;
            for row in 0..rows {
                let mut perturbed = grid.clone();
                perturbed.tables[level][row * grid.config.channels] += 10.0;
                let (f, _) = perturbed.encode(x, 2);
                if adjacent.contains(&(level, row)) {
                    assert_ne!(f, base, "adjacent corner must affect encode");
                } else {
                    assert_eq!(f, base, "non-adjacent corner must not affect encode");
                }
            }
        }
    }

    #[test]
    fn grad_locality_under_table_perturbation() {
        let grid = random_grid(small_config(), 8);
        let x = Vec3::new(-0.13, 0.41, -0.72);
        let (base, _) = grid.encode_grad(x, 2);
        let adjacent = containing_rows(&grid, x);
        let rows = grid.tables[1].len() / grid.config.channels;
        let mut checked_far = false;
        for row in 0..rows {
            if adjacent.contains(&(1, row)) {
                continue;
            }
            let mut perturbed = grid.clone();
            perturbed.tables[1][row * grid.config.channels] += 10.0;
            let (g, _) = perturbed.encode_grad(x, 2);
            assert_eq!(g, base, "non-adjacent corner must not affect gradient");
            checked_far = true;
        }
        assert!(checked_far);
    }

    #[test]
    fn constant_tables_have_zero_gradient() {
        let cfg = small_config();
        let mut grid = HashGrid::<f64>::zeros(cfg).unwrap();
        for table in &mut grid.tables {
            table.fill(3.7);
        }
        let (g, _) = grid.encode_grad(Vec3::new(0.3, 0.1, -0.4), 2);
        for row in g {
            for v in row {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_in_x_field_reproduces_slope() {
        // features equal to the corner's x-index: interpolation is linear in
        // grid-x, so d/dx = V/2 exactly.
        let cfg = EncodingConfig {
            levels: 1,
            v_min: 4,
            v_max: 4,
            channels: 1,
            max_table_entries: 1 << 14,
        };
        let mut grid = HashGrid::<f64>::zeros(cfg).unwrap();
        for xi in 0..=4u32 {
            for yi in 0..=4u32 {
                for zi in 0..=4u32 {
                    grid.tables[0][hash_index([xi, yi, zi], 4, 1 << 14)] = xi as f64;
                }
            }
        }
        let (g, _) = grid.encode_grad(Vec3::new(0.23, -0.17, 0.61), 1);
        assert!((g[0][0] - 2.0).abs() < 1e-12); // V/2 = 2
        assert!(g[0][1].abs() < 1e-12);
        assert!(g[0][2].abs() < 1e-12);
    }

    #[test]
    fn grad_matches_central_differences() {
        let grid = random_grid(small_config(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;
        let mut tested = 0;
        while tested < 20 {
            let x = Vec3::new(
                rng.gen_range(-0.9..0.9),
                rng.gen_range(-0.9..0.9),
                rng.gen_range(-0.9..0.9),
            );
            // keep the probe inside one cell at the finest level
            let cell = grid.level_cell(x, 1);
            let margin = 4.0 * h * 4.0; // h in grid units at V=8
            if [cell.beta.x, cell.beta.y, cell.beta.z]
                .iter()
                .any(|&b| b < margin || b > 1.0 - margin)
            {
                continue;
            }
            tested += 1;
            let (g, _) = grid.encode_grad(x, 2);
            for ax in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[ax] += h;
                xm[ax] -= h;
                let (fp, _) = grid.encode(xp, 2);
                let (fm, _) = grid.encode(xm, 2);
                for (i, (p, m)) in fp.iter().zip(&fm).enumerate() {
                    let fd = (p - m) / (2.0 * h);
                    let an = g[i][ax];
                    let denom = fd.abs().max(an.abs()).max(1e-9);
                    assert!(
                        ((fd - an) / denom).abs() < 1e-4,
                        "fd {fd} vs analytic {an} at row {i} axis {ax}"
                    );
                }
            }
        }
    }

    #[test]
    fn axis_restriction_is_affine_within_cell() {
        // central differences with both probes in the same cell equal the
        // analytic derivative up to rounding, and the pure-axis second
        // difference vanishes.
        let grid = random_grid(small_config(), 10);
        let x = Vec3::new(0.155, -0.23, 0.48);
        let h = 0.01; // stays inside the V=8 cell (size 0.25)
        let (g, _) = grid.encode_grad(x, 2);
        for ax in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[ax] += h;
            xm[ax] -= h;
            let (fp, _) = grid.encode(xp, 2);
            let (fm, _) = grid.encode(xm, 2);
            let (f0, _) = grid.encode(x, 2);
            for i in 0..fp.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(
                    (fd - g[i][ax]).abs() < 1e-9,
                    "within-cell central diff must be exact"
                );
                let second = (fp[i] + fm[i] - 2.0 * f0[i]) / (h * h);
                assert!(
                    second.abs() < 1e-7,
                    "pure-axis second difference must vanish, got {second}"
                );
            }
        }
    }

    #[test]
    fn fourier_encode_at_origin() {
        let (f, _) = fourier_encode(Vec3::<f64>::zero(), 3);
        for l in 0..3 {
            for ax in 0..3 {
                assert_eq!(f[6 * l + ax], 0.0); // sin
                assert_eq!(f[6 * l + 3 + ax], 1.0); // cos
            }
        }
    }

    #[test]
    fn fourier_derivative_at_origin_level_zero() {
        let (_, g) = fourier_encode(Vec3::<f64>::zero(), 1);
        // d sin(pi x)/dx at 0 = pi
        assert!((g[0][0] - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(g[0][1], 0.0);
    }

    #[test]
    fn fourier_derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..10 {
            let x = Vec3::new(
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let (_, g) = fourier_encode(x, 4);
            for ax in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[ax] += h;
                xm[ax] -= h;
                let (fp, _) = fourier_encode(xp, 4);
                let (fm, _) = fourier_encode(xm, 4);
                for i in 0..fp.len() {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!(
                        (fd - g[i][ax]).abs() < 1e-5,
                        "fourier fd {fd} vs analytic {}",
                        g[i][ax]
                    );
                }
            }
        }
    }

    #[test]
    fn table_rows_dense_vs_hashed() {
        let cfg = paper_config();
        assert_eq!(cfg.table_rows(32), 33 * 33 * 33);
        assert_eq!(cfg.table_rows(2048), 1 << 22);
    }
}
