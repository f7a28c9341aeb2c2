//! Quantitative metrics: Chamfer distance, F1 score, and PSNR, plus
//! area-weighted surface sampling of meshes.
//!
//! Nearest-neighbor queries run through a uniform-grid index whose expanding
//! ring search terminates only once no closer cell can exist, so results are
//! identical to brute force.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct PointSet<T> {
    pub points: Vec<Vec3<T>>,
}

impl<T: Real> PointSet<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Self {
        PointSet { points }
    }
}

/// Uniform-grid nearest-neighbor index with an exact ring search.
struct GridIndex<T> {
    points: Vec<Vec3<T>>,
    cell: f64,
    min: Vec3<f64>,
    dims: [usize; 3],
    /// Flattened cell -> point indices.
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl<T: Real> GridIndex<T> {
    fn build(points: &[Vec3<T>]) -> Self {
        let pts64: Vec<Vec3<f64>> = points.iter().map(|p| p.cast()).collect();
        let mut min = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &pts64 {
            min = min.min_elementwise(*p);
            max = max.max_elementwise(*p);
        }
        let extent = (max - min).max_component().max(1e-9);
        // aim for a handful of points per cell
        let target = (points.len() as f64 / 4.0).cbrt().ceil().max(1.0) as usize;
        let dims_n = target.min(64).max(1);
        let cell = extent / dims_n as f64 * (1.0 + 1e-12) + 1e-300;
        let dim_of = |lo: f64, hi: f64| (((hi - lo) / cell).floor() as usize + 1).max(1);
        let dims = [
            dim_of(min.x, max.x),
            dim_of(min.y, max.y),
            dim_of(min.z, max.z),
        ];
        let cell_of = |p: &Vec3<f64>| -> [usize; 3] {
            [
                (((p.x - min.x) / cell) as usize).min(dims[0] - 1),
                (((p.y - min.y) / cell) as usize).min(dims[1] - 1),
                (((p.z - min.z) / cell) as usize).min(dims[2] - 1),
            ]
        };
        let flat = |c: [usize; 3]| (c[2] * dims[1] + c[1]) * dims[0] + c[0];
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; n_cells + 1];
        for p in &pts64 {
            counts[flat(cell_of(p)) + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut entries = vec![0u32; points.len()];
        let mut cursor = counts.clone();
        for (i, p) in pts64.iter().enumerate() {
            let c = flat(cell_of(p));
            entries[cursor[c] as usize] = i as u32;
            cursor[c] += 1;
        }
        GridIndex {
            points: points.to_vec(),
            cell,
            min,
            dims,
            starts: counts,
            entries,
        }
    }

    /// Exact nearest-neighbor distance from `query` to the indexed set.
    fn nearest_distance(&self, query: Vec3<T>) -> T {
        let q = query.cast::<f64>();
        let center = [
            (((q.x - self.min.x) / self.cell).floor() as i64).clamp(0, self.dims[0] as i64 - 1),
            (((q.y - self.min.y) / self.cell).floor() as i64).clamp(0, self.dims[1] as i64 - 1),
            (((q.z - self.min.z) / self.cell).floor() as i64).clamp(0, self.dims[2] as i64 - 1),
        ];
        let mut best = T::infinity();
        let max_ring = *self.dims.iter().max().unwrap() as i64;
        for ring in 0..=max_ring {
            // smallest possible distance from the query to any cell at this
            // ring or beyond; once that exceeds the best hit, stop
            if ring > 0 && T::lit(self.ring_lower_bound(q, center, ring)) > best {
                break;
            }
            let mut any_cell = false;
            self.for_ring_cells(center, ring, |cell_idx| {
                any_cell = true;
                let (s, e) = (
                    self.starts[cell_idx] as usize,
                    self.starts[cell_idx + 1] as usize,
                );
                for &pi in &self.entries[s..e] {
                    let d = (self.points[pi as usize] - query).norm();
                    if d < best {
                        best = d;
                    }
                }
            });
            if !any_cell && best < T::infinity() {
                break;
            }
        }
        best
    }

    /// Lower bound on the distance from `q` to any cell at Chebyshev ring
    /// `ring` or farther: the distance from `q` to the boundary of the box
    /// of cells within `ring - 1` (zero if `q` already lies outside it).
    fn ring_lower_bound(&self, q: Vec3<f64>, center: [i64; 3], ring: i64) -> f64 {
        let mut nearest_face = f64::INFINITY;
        for ax in 0..3 {
            let coord = [q.x, q.y, q.z][ax];
            let lo = self.min[ax] + (center[ax] - ring + 1) as f64 * self.cell;
            let hi = self.min[ax] + (center[ax] + ring) as f64 * self.cell;
            if coord < lo || coord > hi {
                return 0.0;
            }
            nearest_face = nearest_face.min(coord - lo).min(hi - coord);
        }
        nearest_face.max(0.0)
    }

    fn for_ring_cells(&self, center: [i64; 3], ring: i64, mut f: impl FnMut(usize)) {
        let flat = |c: [i64; 3]| -> Option<usize> {
            for ax in 0..3 {
                if c[ax] < 0 || c[ax] >= self.dims[ax] as i64 {
                    return None;
                }
            }
            Some(((c[2] as usize * self.dims[1]) + c[1] as usize) * self.dims[0] + c[0] as usize)
        };
        if ring == 0 {
            if let Some(idx) = flat(center) {
                f(idx);
            }
            return;
        }
        for dz in -ring..=ring {
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    if let Some(idx) = flat([center[0] + dx, center[1] + dy, center[2] + dz]) {
                        f(idx);
                    }
                }
            }
        }
    }
}

fn validate_nonempty<T: Real>(a: &PointSet<T>, b: &PointSet<T>) -> Result<()> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(Error::invalid("point sets must be non-empty"));
    }
    Ok(())
}

fn mean_nearest<T: Real>(from: &[Vec3<T>], index: &GridIndex<T>) -> T {
    let dists: Vec<T> = from
        .par_iter()
        .map(|&p| index.nearest_distance(p))
        .collect();
    let mut acc = T::zero();
    for d in &dists {
        acc += *d;
    }
    acc / T::from_usize(from.len()).unwrap()
}

/// Symmetric Chamfer distance: mean of the two directed mean
/// nearest-neighbor distances.
pub fn chamfer<T: Real>(a: &PointSet<T>, b: &PointSet<T>) -> Result<T> {
    validate_nonempty(a, b)?;
    let index_b = GridIndex::build(&b.points);
    let index_a = GridIndex::build(&a.points);
    let ab = mean_nearest(&a.points, &index_b);
    let ba = mean_nearest(&b.points, &index_a);
    Ok((ab + ba) * T::lit(0.5))
}

/// Precision/recall/F1 at distance threshold `tau`.
pub fn f1_score<T: Real>(
    pred: &PointSet<T>,
    gt: &PointSet<T>,
    tau: T,
) -> Result<(T, T, T)> {
    validate_nonempty(pred, gt)?;
    if tau <= T::zero() {
        return Err(Error::invalid("tau must be positive"));
    }
    let index_gt = GridIndex::build(&gt.points);
    let index_pred = GridIndex::build(&pred.points);
    let within = |from: &[Vec3<T>], index: &GridIndex<T>| -> T {
        let hits = from
            .par_iter()
            .filter(|&&p| index.nearest_distance(p) <= tau)
            .count();
        T::from_usize(hits).unwrap() / T::from_usize(from.len()).unwrap()
    };
    let precision = within(&pred.points, &index_gt);
    let recall = within(&gt.points, &index_pred);
    let f1 = if precision + recall > T::zero() {
        T::lit(2.0) * precision * recall / (precision + recall)
    } else {
        T::zero()
    };
    Ok((precision, recall, f1))
}

/// `10 log10(1 / MSE)` over masked pixels (all pixels when no mask). Equal
/// images report `+inf`.
pub fn psnr<T: Real>(img_a: &[[T; 3]], img_b: &[[T; 3]], mask: Option<&[bool]>) -> Result<T> {
    if img_a.len() != img_b.len() {
        return Err(Error::invalid("psnr image shape mismatch"));
    }
    if let Some(mask) = mask {
        if mask.len() != img_a.len() {
            return Err(Error::invalid("psnr mask shape mismatch"));
        }
    }
    let mut acc = T::zero();
    let mut count = 0usize;
    for (idx, (a, b)) in img_a.iter().zip(img_b).enumerate() {
        if let Some(mask) = mask {
            if !mask[idx] {
                continue;
            }
        }
        for ch in 0..3 {
            let d = a[ch] - b[ch];
            acc += d * d;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("psnr mask selects no pixels"));
    }
    let mse = acc / T::from_usize(count * 3).unwrap();
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (T::one() / mse).log10())
}

/// Uniform area-weighted point sampling of a mesh surface.
pub fn sample_mesh_points<T: Real>(
    mesh: &TriangleMesh<T>,
    n: usize,
    seed: u64,
) -> Result<PointSet<T>> {
    if mesh.triangles.is_empty() {
        return Err(Error::invalid("cannot sample an empty mesh"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0f64;
    for &t in &mesh.triangles {
        total += mesh.triangle_area(t).to_f64();
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::invalid("mesh has zero surface area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.gen_range(0.0..total);
        let ti = cumulative.partition_point(|&c| c < u).min(mesh.triangles.len() - 1);
        let [ia, ib, ic] = mesh.triangles[ti];
        let (a, b, c) = (
            mesh.vertices[ia as usize],
            mesh.vertices[ib as usize],
            mesh.vertices[ic as usize],
        );
        // sqrt trick for uniform barycentric samples
        let r1 = rng.gen_range(0.0f64..1.0).sqrt();
        let r2 = rng.gen_range(0.0f64..1.0);
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push(a * T::lit(wa) + b * T::lit(wb) + c * T::lit(wc));
    }
    Ok(PointSet::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[[f64; 3]]) -> PointSet<f64> {
        PointSet::new(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    #[test]
    fn chamfer_identical_sets_zero() {
        let a = set(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [-1.0, 0.5, 0.25]]);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_singletons() {
        let a = set(&[[0.0, 0.0, 0.0]]);
        let b = set(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn chamfer_enumerated_by_hand() {
        // a->b: both points at distance 1 to (1,0,0); b->a: distance 1
        let a = set(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let b = set(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn chamfer_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rand_set = |rng: &mut ChaCha8Rng, n: usize| {
            PointSet::new(
                (0..n)
                    .map(|_| {
                        Vec3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect(),
            )
        };
        let a = rand_set(&mut rng, 137);
        let b = rand_set(&mut rng, 251);
        let ab: f64 = chamfer(&a, &b).unwrap();
        let ba = chamfer(&b, &a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn grid_index_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vec3<f64>> = (0..1000)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let queries: Vec<Vec3<f64>> = (0..1000)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.2..1.2),
                    rng.gen_range(-1.2..1.2),
                    rng.gen_range(-1.2..1.2),
                )
            })
            .collect();
        let index = GridIndex::build(&points);
        for q in queries {
            let brute = points
                .iter()
                .map(|p| (*p - q).norm())
                .fold(f64::INFINITY, f64::min);
            let fast = index.nearest_distance(q);
            assert_eq!(fast, brute, "grid NN must equal brute force bitwise");
        }
    }

    #[test]
    fn f1_identical_sets() {
        let a = set(&[[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]]);
        let (p, r, f) = f1_score(&a, &a, 0.01).unwrap();
        assert_eq!((p, r, f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn f1_disjoint_far_sets() {
        let a = set(&[[0.0, 0.0, 0.0]]);
        let b = set(&[[5.0, 0.0, 0.0]]);
        let (p, r, f) = f1_score(&a, &b, 1.0).unwrap();
        assert_eq!((p, r, f), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_enumerated_case() {
        let pred = set(&[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let gt = set(&[[0.0, 0.0, 0.0]]);
        let (p, r, f) = f1_score(&pred, &gt, 1.0).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(r, 1.0);
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_monotone_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rand_set = |rng: &mut ChaCha8Rng, n: usize| {
            PointSet::new(
                (0..n)
                    .map(|_| {
                        Vec3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect(),
            )
        };
        let pred = rand_set(&mut rng, 200);
        let gt = rand_set(&mut rng, 200);
        let mut prev = 0.0;
        for tau in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let (_, _, f) = f1_score(&pred, &gt, tau).unwrap();
            assert!(f >= prev, "f1 must grow with tau");
            prev = f;
        }
    }

    #[test]
    fn psnr_cases() {
        let a = vec![[0.5f64, 0.5, 0.5]; 16];
        assert!(psnr(&a, &a, None).unwrap().is_infinite());
        let b: Vec<[f64; 3]> = a.iter().map(|p| [p[0] + 0.1, p[1] + 0.1, p[2] + 0.1]).collect();
        let db = psnr(&a, &b, None).unwrap();
        assert!((db - 20.0).abs() < 1e-9, "uniform 0.1 difference = 20 dB");
        // full-true mask equals unmasked
        let mask = vec![true; 16];
        assert_eq!(psnr(&a, &b, Some(&mask)).unwrap(), db);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let clean: Vec<[f64; 3]> = (0..256)
            .map(|_| {
                [
                    rng.gen_range(0.2..0.8),
                    rng.gen_range(0.2..0.8),
                    rng.gen_range(0.2..0.8),
                ]
            })
            .collect();
        let mut prev = f64::INFINITY;
        for amp in [0.01, 0.05, 0.1] {
            let noisy: Vec<[f64; 3]> = clean
                .iter()
                .map(|p| {
                    [
                        (p[0] + rng.gen_range(-amp..amp)).clamp(0.0, 1.0),
                        (p[1] + rng.gen_range(-amp..amp)).clamp(0.0, 1.0),
                        (p[2] + rng.gen_range(-amp..amp)).clamp(0.0, 1.0),
                    ]
                })
                .collect();
            let db = psnr(&clean, &noisy, None).unwrap();
            assert!(db < prev, "psnr must fall as noise grows");
            prev = db;
        }
    }

    #[test]
    fn psnr_shape_mismatch_rejected() {
        let a = vec![[0.0f64; 3]; 4];
        let b = vec![[0.0f64; 3]; 5];
        assert!(psnr(&a, &b, None).is_err());
    }

    #[test]
    fn mesh_sampling_density_tracks_area() {
        // two triangles, one 4x the area of the other
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::new(0.0f64, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(12.0, 0.0, 0.0),
                Vec3::new(10.0, 2.0, 0.0),
            ],
            triangles: vec![[0, 1, 2], [3, 4, 5]],
            normals: None,
        };
        let points = sample_mesh_points(&mesh, 10_000, 3).unwrap();
        let near_big = points.points.iter().filter(|p| p.x > 5.0).count();
        let frac = near_big as f64 / 10_000.0;
        assert!((frac - 0.8).abs() < 0.03, "area weighting off: {frac}");
    }

    #[test]
    fn empty_inputs_rejected() {
        let empty = PointSet::<f64>::new(vec![]);
        let a = set(&[[0.0; 3]]);
        assert!(chamfer(&a, &empty).is_err());
        assert!(f1_score(&empty, &a, 0.1).is_err());
    }
}
