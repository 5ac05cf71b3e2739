//! Indexed triangle meshes, mesh file I/O and the virtual-cage local scene.

mod cage;
mod io;

pub use cage::{cage_wall_points, crop_local_scene, to_unit_sphere, CageTransform, LocalScene};
pub use io::{load_mesh, read_obj, read_ply, save_mesh, write_obj, write_ply, MeshFormat};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Optional per-vertex scalar, exported as the PLY `quality` channel.
    pub quality: Option<Vec<f32>>,
}

impl TriMesh {
    /// Builds a mesh and checks its invariants.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriMesh {
            vertices,
            faces,
            quality: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn point_cloud(vertices: Vec<Vec3>) -> Result<Self> {
        Self::new(vertices, Vec::new())
    }

    pub fn with_quality(mut self, quality: Vec<f32>) -> Result<Self> {
        if quality.len() != self.vertices.len() {
            return Err(Error::Dimension {
                what: "per-vertex quality",
                expected: self.vertices.len(),
                got: quality.len(),
            });
        }
        self.quality = Some(quality);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            if let Some(bad) = f.iter().find(|&&ix| ix as usize >= n) {
                return Err(Error::Validation(format!(
                    "face {i} references vertex {bad} but mesh has {n} vertices"
                )));
            }
        }
        if let Some(i) = self.vertices.iter().position(|p| !geom::is_finite(*p)) {
            return Err(Error::Validation(format!("vertex {i} is not finite")));
        }
        if let Some(q) = &self.quality {
            if q.len() != n {
                return Err(Error::Validation(format!(
                    "quality channel has {} entries for {n} vertices",
                    q.len()
                )));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn translated(&self, offset: Vec3) -> TriMesh {
        self.map_vertices(|p| geom::add(p, offset))
    }

    pub fn rotated_z(&self, angle: f64) -> TriMesh {
        self.map_vertices(|p| geom::rot_z(p, angle))
    }

    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&p| f(p)).collect(),
            faces: self.faces.clone(),
            quality: self.quality.clone(),
        }
    }

    /// Appends `other`, re-basing its face indices.
    pub fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + base, f[1] + base, f[2] + base]),
        );
        self.quality = None;
    }

    /// Keeps the vertices selected by `keep`, re-indexing faces and dropping
    /// every face that touches a removed vertex.
    pub fn filter_vertices(&self, keep: &[bool]) -> TriMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut quality = self.quality.as_ref().map(|_| Vec::new());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = vertices.len() as u32;
                vertices.push(self.vertices[i]);
                if let (Some(q), Some(src)) = (quality.as_mut(), self.quality.as_ref()) {
                    q.push(src[i]);
                }
            }
        }
        let faces = self
            .faces
            .iter()
            .filter_map(|f| {
                let g = [
                    remap[f[0] as usize],
                    remap[f[1] as usize],
                    remap[f[2] as usize],
                ];
                g.iter().all(|&ix| ix != u32::MAX).then_some(g)
            })
            .collect();
        TriMesh {
            vertices,
            faces,
            quality,
        }
    }

    /// Counts how many faces use each undirected edge; a closed 2-manifold
    /// has every count equal to two.
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !counts.is_empty() && counts.values().all(|&c| c == 2)
    }
}
