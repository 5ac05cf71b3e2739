use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{add, scale, Vec3};
use crate::losses::SceneGeometry;
use crate::mesh::TriMesh;
use crate::spatial::{Aabb, BoxPrimitive, PointIndex, SdfField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Room size along x and y, meters. The floor spans `[0, extent]`.
    pub extent: [f64; 2],
    pub furniture_count: usize,
    /// Vertex pitch of the floor and furniture surfaces.
    pub spacing: f64,
    /// Minimum free gap between furniture and to the room edge.
    pub clearance: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            extent: [6.0, 6.0],
            furniture_count: 4,
            spacing: 0.05,
            clearance: 0.6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FurnitureKind {
    Seat,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Furniture {
    pub kind: FurnitureKind,
    pub bounds: Aabb,
    /// Horizontal unit axis a sitter faces (seats only meaningful).
    pub front: [f64; 2],
}

impl Furniture {
    pub fn height(&self) -> f64 {
        self.bounds.max[2]
    }
}

/// Where a body may rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Floor { min: [f64; 2], max: [f64; 2] },
    Seat { furniture: usize, height: f64 },
}

#[derive(Clone, Debug)]
pub struct SynthScene {
    pub seed: u64,
    pub params: SceneParams,
    pub mesh: TriMesh,
    pub sdf: SdfField,
    pub furniture: Vec<Furniture>,
    pub supports: Vec<Support>,
}

impl SynthScene {
    pub fn seats(&self) -> impl Iterator<Item = (usize, &Furniture)> {
        self.furniture
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FurnitureKind::Seat)
    }

    pub fn geometry(&self) -> Result<SceneGeometry> {
        Ok(SceneGeometry {
            sdf: self.sdf.clone(),
            vertices: PointIndex::build(self.mesh.vertices.clone())?,
        })
    }
}

/// Grid over the parallelogram `origin + [0,1]·u + [0,1]·v`.
fn surface_grid(origin: Vec3, u: Vec3, v: Vec3, spacing: f64) -> TriMesh {
    let len = |a: Vec3| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nu = ((len(u) / spacing).ceil() as usize).max(1);
    let nv = ((len(v) / spacing).ceil() as usize).max(1);
    let mut vertices = Vec::with_capacity((nu + 1) * (nv + 1));
    for i in 0..=nu {
        for j in 0..=nv {
            let a = i as f64 / nu as f64;
            let b = j as f64 / nv as f64;
            vertices.push(add(origin, add(scale(u, a), scale(v, b))));
        }
    }
    let id = |i: usize, j: usize| (i * (nv + 1) + j) as u32;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh {
        vertices,
        faces,
        quality: None,
    }
}

/// Top and four sides of a box standing on the floor.
fn box_surface(b: &Aabb, spacing: f64) -> TriMesh {
    let (lo, hi) = (b.min, b.max);
    let dx = [hi[0] - lo[0], 0.0, 0.0];
    let dy = [0.0, hi[1] - lo[1], 0.0];
    let dz = [0.0, 0.0, hi[2] - lo[2]];
    let mut m = surface_grid([lo[0], lo[1], hi[2]], dx, dy, spacing);
    m.append(&surface_grid(lo, dx, dz, spacing));
    m.append(&surface_grid([lo[0], hi[1], lo[2]], dx, dz, spacing));
    m.append(&surface_grid(lo, dy, dz, spacing));
    m.append(&surface_grid([hi[0], lo[1], lo[2]], dy, dz, spacing));
    m
}

/// Floor plus non-overlapping box furniture; even indices are seats, odd
/// indices tables.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<SynthScene> {
    let [ex, ey] = params.extent;
    if !(ex >= 3.0 && ey >= 3.0) {
        return Err(Error::InvalidArgument(format!(
            "room extent {ex}×{ey} m is below 3 m per side"
        )));
    }
    if !(params.spacing > 0.0) {
        return Err(Error::InvalidArgument(
            "surface spacing must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut furniture: Vec<Furniture> = Vec::new();
    let c = params.clearance;
    for i in 0..params.furniture_count {
        let kind = if i % 2 == 0 {
            FurnitureKind::Seat
        } else {
            FurnitureKind::Table
        };
        let mut placed = None;
        for _ in 0..500 {
            let (w, d, h) = match kind {
                FurnitureKind::Seat => (
                    rng.gen_range(0.45..0.6),
                    rng.gen_range(0.40..0.45),
                    rng.gen_range(0.4..0.5),
                ),
                FurnitureKind::Table => (
                    rng.gen_range(0.8..1.4),
                    rng.gen_range(0.6..0.9),
                    rng.gen_range(0.7..0.8),
                ),
            };
            // the depth axis of a seat is the one it faces along
            let axis = rng.gen_range(0..2);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let (sx, sy) = if axis == 0 { (d, w) } else { (w, d) };
            if sx + 2.0 * c >= ex || sy + 2.0 * c >= ey {
                continue;
            }
            let x0 = rng.gen_range(c..ex - c - sx);
            let y0 = rng.gen_range(c..ey - c - sy);
            let bounds = Aabb {
                min: [x0, y0, 0.0],
                max: [x0 + sx, y0 + sy, h],
            };
            let grown = Aabb {
                min: [x0 - c, y0 - c, -1.0],
                max: [x0 + sx + c, y0 + sy + c, 10.0],
            };
            if furniture.iter().any(|f| f.bounds.overlaps(&grown)) {
                continue;
            }
            let front = if axis == 0 { [sign, 0.0] } else { [0.0, sign] };
            placed = Some(Furniture {
                kind,
                bounds,
                front,
            });
            break;
        }
        furniture.push(placed.ok_or_else(|| {
            Error::Placement(format!(
                "could not place furniture {i} without overlap (scene seed {seed})"
            ))
        })?);
    }

    let mut floor = surface_grid(
        [0.0, 0.0, 0.0],
        [ex, 0.0, 0.0],
        [0.0, ey, 0.0],
        params.spacing,
    );
    let keep: Vec<bool> = floor
        .vertices
        .iter()
        .map(|p| {
            !furniture.iter().any(|f| {
                p[0] > f.bounds.min[0]
                    && p[0] < f.bounds.max[0]
                    && p[1] > f.bounds.min[1]
                    && p[1] < f.bounds.max[1]
            })
        })
        .collect();
    floor = floor.filter_vertices(&keep);
    let mut mesh = floor;
    for f in &furniture {
        mesh.append(&box_surface(&f.bounds, params.spacing));
    }
    let sdf = SdfField::Analytic {
        floor: Some(0.0),
        boxes: furniture
            .iter()
            .map(|f| BoxPrimitive::axis_aligned(f.bounds.min, f.bounds.max))
            .collect(),
    };
    let mut supports = vec![Support::Floor {
        min: [0.0, 0.0],
        max: [ex, ey],
    }];
    for (i, f) in furniture.iter().enumerate() {
        if f.kind == FurnitureKind::Seat {
            supports.push(Support::Seat {
                furniture: i,
                height: f.height(),
            });
        }
    }
    Ok(SynthScene {
        seed,
        params: params.clone(),
        mesh,
        sdf,
        furniture,
        supports,
    })
}
