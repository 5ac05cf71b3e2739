use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] < other.max[k] && other.min[k] < self.max[k])
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// Box with a yaw pose about its own center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPrimitive {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub yaw: f64,
}

impl BoxPrimitive {
    pub fn axis_aligned(min: Vec3, max: Vec3) -> Self {
        BoxPrimitive {
            center: geom::scale(geom::add(min, max), 0.5),
            half_extents: geom::scale(geom::sub(max, min), 0.5),
            yaw: 0.0,
        }
    }

    fn local(&self, p: Vec3) -> Vec3 {
        geom::rot_z(geom::sub(p, self.center), -self.yaw)
    }

    pub fn distance(&self, p: Vec3) -> f64 {
        let l = self.local(p);
        let q = [
            l[0].abs() - self.half_extents[0],
            l[1].abs() - self.half_extents[1],
            l[2].abs() - self.half_extents[2],
        ];
        let outside = geom::norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
        let inside = q[0].max(q[1]).max(q[2]).min(0.0);
        outside + inside
    }

    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let l = self.local(p);
        let sign = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
        let q = [
            l[0].abs() - self.half_extents[0],
            l[1].abs() - self.half_extents[1],
            l[2].abs() - self.half_extents[2],
        ];
        let pos = [q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)];
        let n = geom::norm(pos);
        let g = if n > 0.0 {
            [
                pos[0] / n * sign(l[0]),
                pos[1] / n * sign(l[1]),
                pos[2] / n * sign(l[2]),
            ]
        } else {
            // inside: the face with the largest q; lowest axis on ties
            let mut axis = 0;
            for k in 1..3 {
                if q[k] > q[axis] {
                    axis = k;
                }
            }
            let mut g = [0.0; 3];
            g[axis] = sign(l[axis]);
            g
        };
        geom::rot_z(g, self.yaw)
    }

    /// World-space bounds of the (possibly rotated) box.
    pub fn bounds(&self) -> Aabb {
        let (s, c) = self.yaw.sin_cos();
        let hx = (c * self.half_extents[0]).abs() + (s * self.half_extents[1]).abs();
        let hy = (s * self.half_extents[0]).abs() + (c * self.half_extents[1]).abs();
        let h = [hx, hy, self.half_extents[2]];
        Aabb {
            min: geom::sub(self.center, h),
            max: geom::add(self.center, h),
        }
    }
}

/// Regular lattice of signed distances with trilinear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSdf {
    pub origin: Vec3,
    pub cell: Vec3,
    pub resolution: [usize; 3],
    /// Node values, x fastest.
    pub values: Vec<f32>,
}

impl GridSdf {
    pub fn node(&self, i: usize, j: usize, k: usize) -> f64 {
        let [nx, ny, _] = self.resolution;
        self.values[i + nx * (j + ny * k)] as f64
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.cell[0],
            self.origin[1] + j as f64 * self.cell[1],
            self.origin[2] + k as f64 * self.cell[2],
        ]
    }

    /// Cell index and local coordinate in [0, 1] along each axis.
    fn locate(&self, p: Vec3) -> Result<([usize; 3], Vec3)> {
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let mut t = (p[a] - self.origin[a]) / self.cell[a];
            let r = t.round();
            if (t - r).abs() < 1e-9 {
                t = r;
            }
            let last = (self.resolution[a] - 1) as f64;
            if !(t >= 0.0 && t <= last) {
                return Err(Error::OutOfBounds { point: p });
            }
            let i = (t.floor() as usize).min(self.resolution[a] - 2);
            idx[a] = i;
            frac[a] = t - i as f64;
        }
        Ok((idx, frac))
    }

    fn corners(&self, idx: [usize; 3]) -> [f64; 8] {
        let mut c = [0.0; 8];
        for (n, v) in c.iter_mut().enumerate() {
            *v = self.node(
                idx[0] + (n & 1),
                idx[1] + ((n >> 1) & 1),
                idx[2] + ((n >> 2) & 1),
            );
        }
        c
    }

    pub fn eval(&self, p: Vec3) -> Result<f64> {
        let (idx, [u, v, w]) = self.locate(p)?;
        let c = self.corners(idx);
        let x00 = c[0] * (1.0 - u) + c[1] * u;
        let x10 = c[2] * (1.0 - u) + c[3] * u;
        let x01 = c[4] * (1.0 - u) + c[5] * u;
        let x11 = c[6] * (1.0 - u) + c[7] * u;
        let y0 = x00 * (1.0 - v) + x10 * v;
        let y1 = x01 * (1.0 - v) + x11 * v;
        Ok(y0 * (1.0 - w) + y1 * w)
    }

    pub fn gradient(&self, p: Vec3) -> Result<Vec3> {
        let (idx, [u, v, w]) = self.locate(p)?;
        let c = self.corners(idx);
        let lerp = |a: f64, b: f64, t: f64| a * (1.0 - t) + b * t;
        let dx = lerp(
            lerp(c[1] - c[0], c[3] - c[2], v),
            lerp(c[5] - c[4], c[7] - c[6], v),
            w,
        );
        let dy = lerp(
            lerp(c[2] - c[0], c[3] - c[1], u),
            lerp(c[6] - c[4], c[7] - c[5], u),
            w,
        );
        let dz = lerp(
            lerp(c[4] - c[0], c[5] - c[1], u),
            lerp(c[6] - c[2], c[7] - c[3], u),
            v,
        );
        Ok([dx / self.cell[0], dy / self.cell[1], dz / self.cell[2]])
    }
}

/// Scene signed distance: negative inside geometry.
#[derive(Clone, Debug, PartialEq)]
pub enum SdfField {
    /// Union of an optional horizontal floor half-space (`z < height` is
    /// inside) and posed boxes. Primitive order for tie-breaking is the floor
    /// first, then boxes in storage order.
    Analytic {
        floor: Option<f64>,
        boxes: Vec<BoxPrimitive>,
    },
    Grid(GridSdf),
}

impl SdfField {
    pub fn floor_only(height: f64) -> Self {
        SdfField::Analytic {
            floor: Some(height),
            boxes: Vec::new(),
        }
    }

    /// Index of the first primitive achieving the minimum and that minimum.
    fn closest_primitive(floor: Option<f64>, boxes: &[BoxPrimitive], p: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        if let Some(h) = floor {
            best = (0, p[2] - h);
        }
        for (i, b) in boxes.iter().enumerate() {
            let d = b.distance(p);
            if d < best.1 {
                best = (i + 1, d);
            }
        }
        best
    }

    pub fn eval(&self, p: Vec3) -> Result<f64> {
        match self {
            SdfField::Analytic { floor, boxes } => {
                let (i, d) = Self::closest_primitive(*floor, boxes, p);
                if i == usize::MAX {
                    return Err(Error::Empty("analytic SDF has no primitives"));
                }
                Ok(d)
            }
            SdfField::Grid(g) => g.eval(p),
        }
    }

    pub fn gradient(&self, p: Vec3) -> Result<Vec3> {
        match self {
            SdfField::Analytic { floor, boxes } => {
                match Self::closest_primitive(*floor, boxes, p).0 {
                    usize::MAX => Err(Error::Empty("analytic SDF has no primitives")),
                    0 if floor.is_some() => Ok([0.0, 0.0, 1.0]),
                    i => Ok(boxes[i - 1].gradient(p)),
                }
            }
            SdfField::Grid(g) => g.gradient(p),
        }
    }

    /// Samples an analytic field on a lattice spanning `bounds`.
    pub fn bake_grid(&self, bounds: Aabb, resolution: [usize; 3]) -> Result<SdfField> {
        if matches!(self, SdfField::Grid(_)) {
            return Err(Error::InvalidArgument(
                "only analytic fields can be baked".into(),
            ));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::InvalidArgument(format!(
                "grid resolution {resolution:?} needs at least 2 nodes per axis"
            )));
        }
        if (0..3).any(|k| !(bounds.max[k] > bounds.min[k])) {
            return Err(Error::InvalidArgument(format!(
                "degenerate bounds {bounds:?}"
            )));
        }
        let cell = [
            (bounds.max[0] - bounds.min[0]) / (resolution[0] - 1) as f64,
            (bounds.max[1] - bounds.min[1]) / (resolution[1] - 1) as f64,
            (bounds.max[2] - bounds.min[2]) / (resolution[2] - 1) as f64,
        ];
        let mut grid = GridSdf {
            origin: bounds.min,
            cell,
            resolution,
            values: Vec::with_capacity(resolution.iter().product()),
        };
        for k in 0..resolution[2] {
            for j in 0..resolution[1] {
                for i in 0..resolution[0] {
                    let v = self.eval(grid.node_position(i, j, k))?;
                    grid.values.push(v as f32);
                }
            }
        }
        Ok(SdfField::Grid(grid))
    }
}

const GRID_MAGIC: &[u8; 4] = b"PXSG";
const GRID_VERSION: u32 = 1;

/// Header: magic, version (u32), origin (3×f64), cell size (3×f64),
/// resolution (3×u32); then node values as f32, x fastest. All little-endian.
pub fn write_grid(grid: &GridSdf, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(GRID_MAGIC)?;
    w.write_all(&GRID_VERSION.to_le_bytes())?;
    for v in grid.origin.iter().chain(grid.cell.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    for r in grid.resolution {
        w.write_all(&(r as u32).to_le_bytes())?;
    }
    for v in &grid.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid(mut r: impl Read) -> Result<GridSdf> {
    let io = |e| Error::io("<grid sdf>", e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != GRID_MAGIC {
        return Err(Error::InvalidArgument("not a grid SDF file".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(io)?;
    let version = u32::from_le_bytes(b4);
    if version != GRID_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported grid SDF version {version}"
        )));
    }
    let mut f = [0.0f64; 6];
    for v in &mut f {
        r.read_exact(&mut b8).map_err(io)?;
        *v = f64::from_le_bytes(b8);
    }
    let mut resolution = [0usize; 3];
    for v in &mut resolution {
        r.read_exact(&mut b4).map_err(io)?;
        *v = u32::from_le_bytes(b4) as usize;
    }
    if resolution.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument(format!(
            "bad grid resolution {resolution:?}"
        )));
    }
    let n: usize = resolution.iter().product();
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b4).map_err(io)?;
        values.push(f32::from_le_bytes(b4));
    }
    Ok(GridSdf {
        origin: [f[0], f[1], f[2]],
        cell: [f[3], f[4], f[5]],
        resolution,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene() -> SdfField {
        SdfField::Analytic {
            floor: Some(0.0),
            boxes: vec![
                BoxPrimitive::axis_aligned([0.0, 0.0, 0.0], [1.0, 0.6, 0.75]),
                BoxPrimitive {
                    center: [-1.2, 0.8, 0.225],
                    half_extents: [0.25, 0.2, 0.225],
                    yaw: 0.7,
                },
            ],
        }
    }

    #[test]
    fn floor_and_box_values() {
        assert!((SdfField::floor_only(0.0).eval([3.0, -2.0, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(
            SdfField::floor_only(0.0).gradient([0.0, 0.0, 0.3]).unwrap(),
            [0.0, 0.0, 1.0]
        );
        let cube = SdfField::Analytic {
            floor: None,
            boxes: vec![BoxPrimitive::axis_aligned([0.0; 3], [1.0; 3])],
        };
        assert_eq!(cube.eval([0.5; 3]).unwrap(), -0.5);
        // tie at the center resolves to the first axis
        assert_eq!(cube.gradient([0.5; 3]).unwrap(), [1.0, 0.0, 0.0]);
    }

    /// Independent reference: distance to a box as the minimum over a dense
    /// sampling of its surface, signed by an explicit inside test.
    fn dense_box_distance(b: &BoxPrimitive, p: Vec3) -> f64 {
        let l = geom::rot_z(geom::sub(p, b.center), -b.yaw);
        let h = b.half_extents;
        let inside = (0..3).all(|k| l[k].abs() < h[k]);
        if inside {
            -(0..3)
                .map(|k| h[k] - l[k].abs())
                .fold(f64::INFINITY, f64::min)
        } else {
            let c = [
                l[0].clamp(-h[0], h[0]),
                l[1].clamp(-h[1], h[1]),
                l[2].clamp(-h[2], h[2]),
            ];
            geom::dist(l, c)
        }
    }

    #[test]
    fn analytic_matches_reference() {
        let f = scene();
        let SdfField::Analytic { boxes, .. } = &f else {
            unreachable!()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let p = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-0.5..1.5),
            ];
            let reference = boxes
                .iter()
                .map(|b| dense_box_distance(b, p))
                .fold(p[2], f64::min);
            assert!((f.eval(p).unwrap() - reference).abs() < 1e-9);
        }
    }

    #[test]
    fn one_lipschitz_and_sign() {
        let f = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let p = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-0.5..1.5),
            ];
            let q = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-0.5..1.5),
            ];
            let (a, b) = (f.eval(p).unwrap(), f.eval(q).unwrap());
            assert!((a - b).abs() <= geom::dist(p, q) + 1e-12);
        }
        assert!(f.eval([0.5, 0.3, 0.4]).unwrap() < 0.0);
        assert!(f.eval([0.5, 0.3, 0.9]).unwrap() > 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let f = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-5;
        let mut checked = 0;
        while checked < 100 {
            let p = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-0.5..1.5),
            ];
            let g = f.gradient(p).unwrap();
            let mut fd = [0.0; 3];
            for k in 0..3 {
                let mut a = p;
                let mut b = p;
                a[k] += h;
                b[k] -= h;
                fd[k] = (f.eval(a).unwrap() - f.eval(b).unwrap()) / (2.0 * h);
            }
            // skip points within a step of a medial tie or a primitive switch
            let err = geom::norm(geom::sub(g, fd));
            let fd_len = geom::norm(fd);
            if (fd_len - 1.0).abs() > 1e-3 {
                continue;
            }
            assert!(err / fd_len.max(1e-12) < 1e-4, "p={p:?} g={g:?} fd={fd:?}");
            checked += 1;
        }
    }

    #[test]
    fn grid_reproduces_nodes_and_stays_within_lipschitz_bound() {
        let f = SdfField::floor_only(0.0);
        let bounds = Aabb {
            min: [-1.3, -1.0, -0.4],
            max: [1.7, 1.0, 1.6],
        };
        let SdfField::Grid(g) = f.bake_grid(bounds, [32, 32, 32]).unwrap() else {
            unreachable!()
        };
        for k in (0..32).step_by(5) {
            for j in (0..32).step_by(3) {
                for i in (0..32).step_by(7) {
                    let p = g.node_position(i, j, k);
                    let expect = f.eval(p).unwrap() as f32 as f64;
                    assert_eq!(g.eval(p).unwrap(), expect);
                }
            }
        }
        let diag = geom::norm(g.cell);
        for k in 0..31 {
            let p = geom::add(g.node_position(10, 20, k), geom::scale(g.cell, 0.5));
            assert!((g.eval(p).unwrap() - f.eval(p).unwrap()).abs() <= diag);
        }
        assert!(matches!(
            g.eval([5.0, 0.0, 0.0]),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn grid_gradient_matches_interpolant_differences() {
        let f = scene();
        let bounds = Aabb {
            min: [-2.0, -2.0, -0.5],
            max: [2.0, 2.0, 1.5],
        };
        let SdfField::Grid(g) = f.bake_grid(bounds, [20, 20, 10]).unwrap() else {
            unreachable!()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let p = [
                rng.gen_range(-1.9..1.9),
                rng.gen_range(-1.9..1.9),
                rng.gen_range(-0.4..1.4),
            ];
            let grad = g.gradient(p).unwrap();
            let h = 1e-7;
            for k in 0..3 {
                let mut a = p;
                let mut b = p;
                a[k] += h;
                b[k] -= h;
                let fd = (g.eval(a).unwrap() - g.eval(b).unwrap()) / (2.0 * h);
                assert!((fd - grad[k]).abs() <= 1e-4 * grad[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn bake_rejects_bad_input() {
        let f = SdfField::floor_only(0.0);
        let b = Aabb {
            min: [0.0; 3],
            max: [1.0; 3],
        };
        assert!(f.bake_grid(b, [1, 4, 4]).is_err());
        let flat = Aabb {
            min: [0.0; 3],
            max: [1.0, 1.0, 0.0],
        };
        assert!(f.bake_grid(flat, [4, 4, 4]).is_err());
    }

    #[test]
    fn grid_file_round_trip() {
        let SdfField::Grid(g) = scene()
            .bake_grid(
                Aabb {
                    min: [-1.0; 3],
                    max: [1.0; 3],
                },
                [5, 6, 7],
            )
            .unwrap()
        else {
            unreachable!()
        };
        let mut buf = Vec::new();
        write_grid(&g, &mut buf).unwrap();
        assert_eq!(read_grid(buf.as_slice()).unwrap(), g);
    }
}
