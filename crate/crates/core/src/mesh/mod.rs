//! Isosurface extraction via marching cubes, plus OBJ/PLY export.

mod tables;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;
use tables::{EDGE_TABLE, TRIANGLE_TABLE};

/// Triangles below this area are dropped as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vec3<T>>>,
}

impl<T: Real> TriangleMesh<T> {
    pub fn empty() -> Self {
        TriangleMesh {
            vertices: Vec::new(),
            triangles: Vec::new(),
            normals: None,
        }
    }

    pub fn triangle_area(&self, tri: [u32; 3]) -> T {
        let a = self.vertices[tri[0] as usize];
        let b = self.vertices[tri[1] as usize];
        let c = self.vertices[tri[2] as usize];
        (b - a).cross(c - a).norm() * T::lit(0.5)
    }

    pub fn surface_area(&self) -> T {
        self.triangles
            .iter()
            .fold(T::zero(), |acc, &t| acc + self.triangle_area(t))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for t in &self.triangles {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::invalid("triangle index out of range"));
            }
        }
        if self.vertices.is_empty() != self.triangles.is_empty() {
            return Err(Error::invalid(
                "mesh must have vertices iff it has triangles",
            ));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.vertices.len() {
                return Err(Error::invalid("normal count must match vertex count"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MarchingCubesConfig {
    pub resolution: u32,
    pub bounds: f64,
    /// One bisection refinement of each crossing edge against the field.
    pub refine: bool,
}

impl Default for MarchingCubesConfig {
    fn default() -> Self {
        MarchingCubesConfig {
            resolution: 128,
            bounds: 1.0,
            refine: false,
        }
    }
}

/// Cube-edge geometry in the standard shared layout: endpoints as corner
/// indices, and the canonical lattice key as (corner offset, axis).
const EDGE_ENDPOINTS: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Corner offsets within a cube (standard layout: 0..3 bottom ring, 4..7 top).
const CORNER_OFFSETS: [[u32; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Weld-key axis tag for vertices that land exactly on a lattice corner.
const CORNER_KEY: u8 = 3;

/// Crossings this close (relative) to a lattice corner snap onto it. The
/// rule is symmetric in the edge endpoints so both cubes sharing an edge
/// make the same decision.
const CORNER_SNAP: f64 = 1e-6;

/// Canonical (base-corner offset, axis) of each cube edge, used to weld
/// vertices shared between neighboring cubes.
const EDGE_CANONICAL: [([u32; 3], u8); 12] = [
    ([0, 0, 0], 0),
    ([1, 0, 0], 1),
    ([0, 1, 0], 0),
    ([0, 0, 0], 1),
    ([0, 0, 1], 0),
    ([1, 0, 1], 1),
    ([0, 1, 1], 0),
    ([0, 0, 1], 1),
    ([0, 0, 0], 2),
    ([1, 0, 0], 2),
    ([1, 1, 0], 2),
    ([0, 1, 0], 2),
];

/// Extracts the zero level set of `field` over a `resolution^3` lattice in
/// the cube `[-bounds, bounds]^3`.
///
/// Lattice planes are evaluated in parallel; the cube sweep and vertex
/// welding are serial in a fixed order, so identical inputs produce
/// bit-identical meshes. A field positive everywhere yields an empty mesh.
pub fn marching_cubes<T, F>(field: F, config: &MarchingCubesConfig) -> TriangleMesh<T>
where
    T: Real,
    F: Fn(Vec3<T>) -> T + Sync,
{
    let res = config.resolution as usize;
    assert!(config.resolution >= 8, "resolution must be at least 8");
    let side = res + 1;
    let lo = -config.bounds;
    let cell = 2.0 * config.bounds / res as f64;
    let lattice_point = |ix: u32, iy: u32, iz: u32| {
        Vec3::new(
            T::lit(lo + ix as f64 * cell),
            T::lit(lo + iy as f64 * cell),
            T::lit(lo + iz as f64 * cell),
        )
    };
    let eval_plane = |iz: u32| -> Vec<T> {
        (0..side * side)
            .into_par_iter()
            .map(|idx| {
                let (ix, iy) = ((idx % side) as u32, (idx / side) as u32);
                field(lattice_point(ix, iy, iz))
            })
            .collect()
    };

    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // welded vertices of edges based in the current / next lattice plane
    let mut weld_curr: HashMap<(u32, u32, u8), u32> = HashMap::new();
    let mut weld_next: HashMap<(u32, u32, u8), u32> = HashMap::new();

    let mut plane_lo = eval_plane(0);
    for z in 0..res as u32 {
        let plane_hi = eval_plane(z + 1);
        for y in 0..res as u32 {
            for x in 0..res as u32 {
                let mut values = [T::zero(); 8];
                for (k, off) in CORNER_OFFSETS.iter().enumerate() {
                    let (cx, cy, cz) = (x + off[0], y + off[1], off[2]);
                    let plane = if cz == 0 { &plane_lo } else { &plane_hi };
                    values[k] = plane[cy as usize * side + cx as usize];
                }
                let mut case = 0usize;
                for (k, &v) in values.iter().enumerate() {
                    if v < T::zero() {
                        case |= 1 << k;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                for (e, endpoints) in EDGE_ENDPOINTS.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let (v0, v1) = (values[endpoints[0]], values[endpoints[1]]);
                    // A corner (numerically) on the surface gets welded by
                    // its lattice coordinate: every incident edge then
                    // shares one vertex and the resulting slivers collapse
                    // to repeated indices instead of opening holes.
                    let snap = T::lit(CORNER_SNAP) * (v0.abs() + v1.abs());
                    let (key_off, key_axis) = if v0.abs() <= snap {
                        (CORNER_OFFSETS[endpoints[0]], CORNER_KEY)
                    } else if v1.abs() <= snap {
                        (CORNER_OFFSETS[endpoints[1]], CORNER_KEY)
                    } else {
                        let (off, axis) = EDGE_CANONICAL[e];
                        (off, axis)
                    };
                    let key = (x + key_off[0], y + key_off[1], key_axis);
                    let weld = if key_off[2] == 0 { &mut weld_curr } else { &mut weld_next };
                    let idx = *weld.entry(key).or_insert_with(|| {
                        let p0 = lattice_point(
                            x + CORNER_OFFSETS[endpoints[0]][0],
                            y + CORNER_OFFSETS[endpoints[0]][1],
                            z + CORNER_OFFSETS[endpoints[0]][2],
                        );
                        let p1 = lattice_point(
                            x + CORNER_OFFSETS[endpoints[1]][0],
                            y + CORNER_OFFSETS[endpoints[1]][1],
                            z + CORNER_OFFSETS[endpoints[1]][2],
                        );
                        let p = if key_axis == CORNER_KEY {
                            if v0.abs() <= snap {
                                p0
                            } else {
                                p1
                            }
                        } else {
                            place_vertex(&field, p0, p1, v0, v1, config.refine)
                        };
                        vertices.push(p);
                        (vertices.len() - 1) as u32
                    });
                    edge_vertex[e] = idx;
                }
                let tri_row = &TRIANGLE_TABLE[case];
                let mut i = 0;
                while tri_row[i] >= 0 {
                    // table winding is outward for sign convention
                    // "inside = negative" when emitted in reverse order
                    let a = edge_vertex[tri_row[i] as usize];
                    let b = edge_vertex[tri_row[i + 1] as usize];
                    let c = edge_vertex[tri_row[i + 2] as usize];
                    triangles.push([a, c, b]);
                    i += 3;
                }
            }
        }
        plane_lo = plane_hi;
        weld_curr = std::mem::take(&mut weld_next);
    }

    let mut mesh = TriangleMesh {
        vertices,
        triangles,
        normals: None,
    };
    drop_degenerate_triangles(&mut mesh);
    if mesh.triangles.is_empty() {
        return TriangleMesh::empty();
    }
    mesh
}

fn place_vertex<T, F>(field: &F, p0: Vec3<T>, p1: Vec3<T>, v0: T, v1: T, refine: bool) -> Vec3<T>
where
    T: Real,
    F: Fn(Vec3<T>) -> T + Sync,
{
    let lerp = |a: Vec3<T>, b: Vec3<T>, va: T, vb: T| {
        let denom = vb - va;
        let t = if denom.abs() < T::lit(1e-30) {
            T::lit(0.5)
        } else {
            (-va / denom).max(T::zero()).min(T::one())
        };
        a + (b - a) * t
    };
    if !refine {
        return lerp(p0, p1, v0, v1);
    }
    // one bisection of the bracketing edge before the final interpolation
    let mid = (p0 + p1) * T::lit(0.5);
    let vm = field(mid);
    if (v0 < T::zero()) != (vm < T::zero()) {
        lerp(p0, mid, v0, vm)
    } else {
        lerp(mid, p1, vm, v1)
    }
}

fn drop_degenerate_triangles<T: Real>(mesh: &mut TriangleMesh<T>) {
    let threshold = T::lit(DEGENERATE_AREA);
    let verts = &mesh.vertices;
    mesh.triangles.retain(|&t| {
        let a = verts[t[0] as usize];
        let b = verts[t[1] as usize];
        let c = verts[t[2] as usize];
        t[0] != t[1]
            && t[1] != t[2]
            && t[0] != t[2]
            && (b - a).cross(c - a).norm() * T::lit(0.5) > threshold
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    PlyBinary,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::PlyBinary),
            other => Err(Error::invalid(format!(
                "unknown mesh extension {other:?} (expected .obj or .ply)"
            ))),
        }
    }
}

/// Writes a mesh as text OBJ (`v`/`f` records, 1-based indices) or binary
/// little-endian PLY. OBJ floats use the shortest round-trip formatting, so
/// an export/import cycle reproduces the arrays exactly.
pub fn export_mesh<T: Real>(mesh: &TriangleMesh<T>, path: &Path, format: MeshFormat) -> Result<()> {
    mesh.validate()?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        MeshFormat::Obj => {
            for v in &mesh.vertices {
                writeln!(w, "v {} {} {}", v.x, v.y, v.z).map_err(|e| Error::io(path, e))?;
            }
            for t in &mesh.triangles {
                writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)
                    .map_err(|e| Error::io(path, e))?;
            }
        }
        MeshFormat::PlyBinary => {
            write!(
                w,
                "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
                mesh.vertices.len(),
                mesh.triangles.len()
            )
            .map_err(|e| Error::io(path, e))?;
            for v in &mesh.vertices {
                for c in [v.x, v.y, v.z] {
                    w.write_all(&(c.to_f64() as f32).to_le_bytes())
                        .map_err(|e| Error::io(path, e))?;
                }
            }
            for t in &mesh.triangles {
                w.write_all(&[3u8]).map_err(|e| Error::io(path, e))?;
                for &i in t {
                    w.write_all(&i.to_le_bytes()).map_err(|e| Error::io(path, e))?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Companion importer for [`export_mesh`] output.
pub fn import_mesh<T: Real>(path: &Path) -> Result<TriangleMesh<T>> {
    match MeshFormat::from_path(path)? {
        MeshFormat::Obj => import_obj(path),
        MeshFormat::PlyBinary => import_ply(path),
    }
}

fn import_obj<T: Real>(path: &Path) -> Result<TriangleMesh<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut mesh = TriangleMesh::empty();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coords = [T::zero(); 3];
                for c in coords.iter_mut() {
                    let tok = parts
                        .next()
                        .ok_or_else(|| Error::parse(path, format!("line {}: short v", ln + 1)))?;
                    *c = T::lit(tok.parse::<f64>().map_err(|e| {
                        Error::parse(path, format!("line {}: {e}", ln + 1))
                    })?);
                }
                mesh.vertices.push(Vec3::from_array(coords));
            }
            Some("f") => {
                let mut idx = [0u32; 3];
                for i in idx.iter_mut() {
                    let tok = parts
                        .next()
                        .ok_or_else(|| Error::parse(path, format!("line {}: short f", ln + 1)))?;
                    let one_based: u32 = tok
                        .split('/')
                        .next()
                        .unwrap_or("")
                        .parse()
                        .map_err(|e| Error::parse(path, format!("line {}: {e}", ln + 1)))?;
                    if one_based == 0 {
                        return Err(Error::parse(path, format!("line {}: 0 index", ln + 1)));
                    }
                    *i = one_based - 1;
                }
                mesh.triangles.push(idx);
            }
            _ => {}
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

fn import_ply<T: Real>(path: &Path) -> Result<TriangleMesh<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let header_end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| Error::parse(path, "missing PLY header terminator"))?
        + 11;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::parse(path, "non-utf8 PLY header"))?;
    let mut n_verts = None;
    let mut n_faces = None;
    for line in header.lines() {
        let mut parts = line.split_whitespace();
        if parts.next() == Some("element") {
            match (parts.next(), parts.next()) {
                (Some("vertex"), Some(n)) => {
                    n_verts = Some(n.parse::<usize>().map_err(|e| Error::parse(path, e.to_string()))?)
                }
                (Some("face"), Some(n)) => {
                    n_faces = Some(n.parse::<usize>().map_err(|e| Error::parse(path, e.to_string()))?)
                }
                _ => {}
            }
        }
    }
    let (n_verts, n_faces) = (
        n_verts.ok_or_else(|| Error::parse(path, "missing vertex element"))?,
        n_faces.ok_or_else(|| Error::parse(path, "missing face element"))?,
    );
    let mut cursor = header_end;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        let slice = bytes
            .get(*cursor..*cursor + n)
            .ok_or_else(|| Error::parse(path, "truncated PLY body"))?;
        *cursor += n;
        Ok(slice)
    };
    let mut mesh = TriangleMesh::empty();
    for _ in 0..n_verts {
        let mut coords = [T::zero(); 3];
        for c in coords.iter_mut() {
            let raw = take(&mut cursor, 4)?;
            *c = T::lit(f32::from_le_bytes(raw.try_into().unwrap()) as f64);
        }
        mesh.vertices.push(Vec3::from_array(coords));
    }
    for _ in 0..n_faces {
        let count = take(&mut cursor, 1)?[0];
        if count != 3 {
            return Err(Error::parse(path, "non-triangle PLY face"));
        }
        let mut idx = [0u32; 3];
        for i in idx.iter_mut() {
            let raw = take(&mut cursor, 4)?;
            *i = u32::from_le_bytes(raw.try_into().unwrap());
        }
        mesh.triangles.push(idx);
    }
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn sphere_field(r: f64) -> impl Fn(Vec3<f64>) -> f64 + Sync {
        move |x: Vec3<f64>| x.norm() - r
    }

    #[test]
    fn sphere_vertices_on_surface() {
        let cfg = MarchingCubesConfig {
            resolution: 64,
            bounds: 1.0,
            refine: false,
        };
        let mesh = marching_cubes(sphere_field(0.5), &cfg);
        assert!(!mesh.vertices.is_empty());
        let cell_diag = 2.0 * 3f64.sqrt() / 64.0;
        for v in &mesh.vertices {
            assert!(
                (v.norm() - 0.5).abs() < cell_diag,
                "vertex {v:?} off the sphere"
            );
        }
    }

    #[test]
    fn plane_stub_is_exact() {
        let cfg = MarchingCubesConfig {
            resolution: 16,
            bounds: 1.0,
            refine: false,
        };
        let mesh = marching_cubes(|x: Vec3<f64>| x.z, &cfg);
        assert!(!mesh.vertices.is_empty());
        for v in &mesh.vertices {
            assert!(v.z.abs() < 1e-6, "plane vertex off z=0: {v:?}");
        }
        for &t in &mesh.triangles {
            let a = mesh.vertices[t[0] as usize];
            let b = mesh.vertices[t[1] as usize];
            let c = mesh.vertices[t[2] as usize];
            let n = (b - a).cross(c - a).normalized();
            assert!(n.z.abs() > 1.0 - 1e-3, "triangle normal {n:?} not +-z");
        }
    }

    #[test]
    fn positive_field_gives_empty_mesh() {
        let cfg = MarchingCubesConfig {
            resolution: 16,
            bounds: 1.0,
            refine: false,
        };
        let mesh = marching_cubes(|_: Vec3<f64>| 1.0, &cfg);
        assert!(mesh.vertices.is_empty());
        assert!(mesh.triangles.is_empty());
    }

    #[test]
    fn sphere_area_converges() {
        let cfg = MarchingCubesConfig {
            resolution: 128,
            bounds: 1.0,
            refine: false,
        };
        let mesh = marching_cubes(sphere_field(0.5), &cfg);
        let area = mesh.surface_area();
        let expect = 4.0 * std::f64::consts::PI * 0.25;
        assert!(
            (area - expect).abs() / expect < 0.02,
            "area {area} vs {expect}"
        );
    }

    #[test]
    fn sphere_mesh_is_watertight() {
        let cfg = MarchingCubesConfig {
            resolution: 48,
            bounds: 1.0,
            refine: false,
        };
        let mesh = marching_cubes(sphere_field(0.5), &cfg);
        let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &mesh.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        for (&edge, &count) in &edge_count {
            assert_eq!(count, 2, "edge {edge:?} shared by {count} triangles");
        }
    }

    #[test]
    fn triangles_wind_outward_on_sphere() {
        let cfg = MarchingCubesConfig {
            resolution: 32,
            bounds: 1.0,
            refine: false,
        };
        let mesh = marching_cubes(sphere_field(0.5), &cfg);
        let mut outward = 0usize;
        for t in &mesh.triangles {
            let a = mesh.vertices[t[0] as usize];
            let b = mesh.vertices[t[1] as usize];
            let c = mesh.vertices[t[2] as usize];
            let n = (b - a).cross(c - a);
            let centroid = (a + b + c) / 3.0;
            if n.dot(centroid) > 0.0 {
                outward += 1;
            }
        }
        assert_eq!(
            outward,
            mesh.triangles.len(),
            "all sphere triangles must face outward"
        );
    }

    #[test]
    fn extraction_is_deterministic() {
        let cfg = MarchingCubesConfig {
            resolution: 24,
            bounds: 1.0,
            refine: false,
        };
        let a = marching_cubes(sphere_field(0.4), &cfg);
        let b = marching_cubes(sphere_field(0.4), &cfg);
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.triangles, b.triangles);
    }

    #[test]
    fn bisection_refinement_tightens_vertices() {
        let cfg = |refine| MarchingCubesConfig {
            resolution: 24,
            bounds: 1.0,
            refine,
        };
        let coarse = marching_cubes(sphere_field(0.5), &cfg(false));
        let refined = marching_cubes(sphere_field(0.5), &cfg(true));
        let err = |mesh: &TriangleMesh<f64>| {
            mesh.vertices
                .iter()
                .map(|v| (v.norm() - 0.5).abs())
                .fold(0.0f64, f64::max)
        };
        assert!(err(&refined) <= err(&coarse));
    }

    #[test]
    fn obj_round_trip_is_exact() {
        let cfg = MarchingCubesConfig {
            resolution: 16,
            bounds: 1.0,
            refine: false,
        };
        let mesh = marching_cubes(sphere_field(0.5), &cfg);
        let dir = std::env::temp_dir().join(format!("carve_mesh_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sphere.obj");
        export_mesh(&mesh, &path, MeshFormat::Obj).unwrap();
        let back: TriangleMesh<f64> = import_mesh(&path).unwrap();
        assert_eq!(mesh.vertices, back.vertices);
        assert_eq!(mesh.triangles, back.triangles);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn ply_round_trip_is_exact_in_f32() {
        let cfg = MarchingCubesConfig {
            resolution: 12,
            bounds: 1.0,
            refine: false,
        };
        let mesh = marching_cubes(|x: Vec3<f32>| x.norm() - 0.5f32, &cfg);
        let dir = std::env::temp_dir().join(format!("carve_ply_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sphere.ply");
        export_mesh(&mesh, &path, MeshFormat::PlyBinary).unwrap();
        let back: TriangleMesh<f32> = import_mesh(&path).unwrap();
        assert_eq!(mesh.vertices, back.vertices);
        assert_eq!(mesh.triangles, back.triangles);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_mesh_exports_valid_files() {
        let mesh = TriangleMesh::<f64>::empty();
        let dir = std::env::temp_dir().join(format!("carve_empty_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for (name, fmt) in [("e.obj", MeshFormat::Obj), ("e.ply", MeshFormat::PlyBinary)] {
            let path = dir.join(name);
            export_mesh(&mesh, &path, fmt).unwrap();
            let back: TriangleMesh<f64> = import_mesh(&path).unwrap();
            assert!(back.vertices.is_empty());
            assert!(back.triangles.is_empty());
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn single_triangle_obj_layout() {
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::new(0.0f64, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            triangles: vec![[0, 1, 2]],
            normals: None,
        };
        let dir = std::env::temp_dir().join(format!("carve_tri_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tri.obj");
        export_mesh(&mesh, &path, MeshFormat::Obj).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v_lines = text.lines().filter(|l| l.starts_with("v ")).count();
        let f_lines = text.lines().filter(|l| l.starts_with("f ")).count();
        assert_eq!(v_lines, 3);
        assert_eq!(f_lines, 1);
        assert!(text.contains("f 1 2 3"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
