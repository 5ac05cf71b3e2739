//! The fixed body template: segment geometry, kinematic tree and topology.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use super::jet::{axis_rotation, mat_mul, mat_vec, Mat3, Scalar};
use super::{joint, JOINTS, SHAPE};
use crate::geom::Vec3;

/// Which shape scale multiplies a length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sel {
    One,
    Height,
    Girth,
    Limb,
}

#[derive(Clone, Copy, Debug)]
struct Dim(f64, Sel);

const fn h(v: f64) -> Dim {
    Dim(v, Sel::Height)
}
const fn g(v: f64) -> Dim {
    Dim(v, Sel::Girth)
}
const fn l(v: f64) -> Dim {
    Dim(v, Sel::Limb)
}
const Z: Dim = Dim(0.0, Sel::One);

#[derive(Clone, Copy, Debug)]
struct JointRot {
    axis: usize,
    slot: usize,
    sign: f64,
}

const fn rot(axis: usize, slot: usize, sign: f64) -> JointRot {
    JointRot { axis, slot, sign }
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub name: &'static str,
    parent: Option<usize>,
    offset: [Dim; 3],
    rotations: Vec<JointRot>,
    center: [Dim; 3],
    radii: [Dim; 3],
    pole_axis: usize,
    rings: usize,
    slices: usize,
    pub first_vertex: usize,
    pub vertex_count: usize,
}

#[derive(Clone, Debug)]
pub struct Template {
    pub segments: Vec<Segment>,
    /// Unit-sphere direction of each vertex in its segment's local frame.
    dirs: Vec<Vec3>,
    seg_of: Vec<usize>,
    pub faces: Arc<Vec<[u32; 3]>>,
    pub feet_mask: Arc<Vec<bool>>,
    /// Proximal pole vertices of the left and right upper arms.
    pub shoulder_landmarks: (usize, usize),
}

impl Template {
    #[allow(clippy::too_many_arguments)]
    fn seg(
        name: &'static str,
        parent: Option<usize>,
        offset: [Dim; 3],
        rotations: Vec<JointRot>,
        center: [Dim; 3],
        radii: [Dim; 3],
        pole_axis: usize,
        rings: usize,
        slices: usize,
    ) -> Segment {
        Segment {
            name,
            parent,
            offset,
            rotations,
            center,
            radii,
            pole_axis,
            rings,
            slices,
            first_vertex: 0,
            vertex_count: 2 + rings * slices,
        }
    }

    pub fn standard() -> Self {
        use joint::*;
        let x = 0;
        let y = 1;
        let zz = 2;
        let segments = vec![
            Self::seg(
                "pelvis",
                None,
                [Z, Z, Z],
                vec![],
                [Z, Z, h(0.02)],
                [g(0.16), g(0.11), h(0.08)],
                zz,
                6,
                8,
            ),
            Self::seg(
                "torso",
                Some(0),
                [Z, Z, h(0.08)],
                vec![rot(x, SPINE_FLEX, -1.0), rot(y, SPINE_LATERAL, 1.0)],
                [Z, Z, h(0.24)],
                [g(0.17), g(0.11), h(0.26)],
                zz,
                8,
                10,
            ),
            Self::seg(
                "head",
                Some(1),
                [Z, Z, h(0.50)],
                vec![],
                [Z, Z, h(0.12)],
                [g(0.085), g(0.10), h(0.115)],
                zz,
                6,
                8,
            ),
            Self::seg(
                "l_thigh",
                Some(0),
                [g(-0.09), Z, Z],
                vec![rot(x, L_HIP_FLEX, 1.0), rot(y, L_HIP_ABD, 1.0)],
                [Z, Z, l(-0.215)],
                [g(0.07), g(0.07), l(0.25)],
                zz,
                6,
                8,
            ),
            Self::seg(
                "l_shin",
                Some(3),
                [Z, Z, l(-0.43)],
                vec![rot(x, L_KNEE, -1.0)],
                [Z, Z, l(-0.235)],
                [g(0.055), g(0.055), l(0.26)],
                zz,
                6,
                8,
            ),
            Self::seg(
                "l_foot",
                Some(4),
                [Z, Z, l(-0.47)],
                vec![rot(x, L_ANKLE, 1.0)],
                [Z, l(0.06), l(-0.04)],
                [g(0.045), l(0.125), l(0.035)],
                zz,
                8,
                8,
            ),
            Self::seg(
                "r_thigh",
                Some(0),
                [g(0.09), Z, Z],
                vec![rot(x, R_HIP_FLEX, 1.0), rot(y, R_HIP_ABD, -1.0)],
                [Z, Z, l(-0.215)],
                [g(0.07), g(0.07), l(0.25)],
                zz,
                6,
                8,
            ),
            Self::seg(
                "r_shin",
                Some(6),
                [Z, Z, l(-0.43)],
                vec![rot(x, R_KNEE, -1.0)],
                [Z, Z, l(-0.235)],
                [g(0.055), g(0.055), l(0.26)],
                zz,
                6,
                8,
            ),
            Self::seg(
                "r_foot",
                Some(7),
                [Z, Z, l(-0.47)],
                vec![rot(x, R_ANKLE, 1.0)],
                [Z, l(0.06), l(-0.04)],
                [g(0.045), l(0.125), l(0.035)],
                zz,
                8,
                8,
            ),
            Self::seg(
                "l_upper_arm",
                Some(1),
                [g(-0.19), Z, h(0.44)],
                vec![rot(x, L_SHOULDER_FLEX, 1.0), rot(y, L_SHOULDER_ABD, -1.0)],
                [l(-0.14), Z, Z],
                [l(0.16), g(0.045), g(0.045)],
                x,
                5,
                6,
            ),
            Self::seg(
                "l_forearm",
                Some(9),
                [l(-0.28), Z, Z],
                vec![rot(zz, L_ELBOW, -1.0)],
                [l(-0.15), Z, Z],
                [l(0.17), g(0.04), g(0.04)],
                x,
                5,
                6,
            ),
            Self::seg(
                "r_upper_arm",
                Some(1),
                [g(0.19), Z, h(0.44)],
                vec![rot(x, R_SHOULDER_FLEX, 1.0), rot(y, R_SHOULDER_ABD, 1.0)],
                [l(0.14), Z, Z],
                [l(0.16), g(0.045), g(0.045)],
                x,
                5,
                6,
            ),
            Self::seg(
                "r_forearm",
                Some(11),
                [l(0.28), Z, Z],
                vec![rot(zz, R_ELBOW, 1.0)],
                [l(0.15), Z, Z],
                [l(0.17), g(0.04), g(0.04)],
                x,
                5,
                6,
            ),
        ];
        Self::build(segments)
    }

    fn build(mut segments: Vec<Segment>) -> Self {
        let mut dirs = Vec::new();
        let mut seg_of = Vec::new();
        let mut faces = Vec::new();
        let mut feet_mask = Vec::new();
        for (si, seg) in segments.iter_mut().enumerate() {
            seg.first_vertex = dirs.len();
            let (sd, sf) = uv_sphere(seg.pole_axis, seg.rings, seg.slices);
            let base = dirs.len() as u32;
            let is_foot = seg.name.ends_with("_foot");
            for d in &sd {
                // sole and heel
                feet_mask.push(is_foot && d[2] < -0.9);
            }
            dirs.extend_from_slice(&sd);
            seg_of.extend(std::iter::repeat_n(si, sd.len()));
            faces.extend(sf.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
            debug_assert_eq!(sd.len(), seg.vertex_count);
        }
        let landmark = |name: &str, proximal_sign: f64| {
            let s = segments.iter().find(|s| s.name == name).unwrap();
            (s.first_vertex..s.first_vertex + s.vertex_count)
                .find(|&i| dirs[i][0] * proximal_sign > 0.999)
                .unwrap()
        };
        let shoulder_landmarks = (landmark("l_upper_arm", 1.0), landmark("r_upper_arm", -1.0));
        Template {
            segments,
            dirs,
            seg_of,
            faces: Arc::new(faces),
            feet_mask: Arc::new(feet_mask),
            shoulder_landmarks,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.dirs.len()
    }

    pub fn segment_range(&self, name: &str) -> Option<Range<usize>> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.first_vertex..s.first_vertex + s.vertex_count)
    }

    pub fn foot_ranges(&self) -> (Range<usize>, Range<usize>) {
        (
            self.segment_range("l_foot").unwrap(),
            self.segment_range("r_foot").unwrap(),
        )
    }

    pub fn segment_of(&self, vertex: usize) -> usize {
        self.seg_of[vertex]
    }

    /// Pelvis joint to sole distance in the rest pose.
    pub fn leg_length(&self, scales: &[f64; 3]) -> f64 {
        // thigh + shin + ankle-to-sole, all limb-scaled
        (0.43 + 0.47 + 0.04 + 0.035) * scales[2]
    }

    /// Posed vertex positions for a parameter vector lifted into `S`.
    pub fn pose<S: Scalar>(
        &self,
        params: &[f64; super::PARAM_DIM],
        lift: impl Fn(f64, usize) -> S,
    ) -> Vec<[S; 3]> {
        let p: Vec<S> = params
            .iter()
            .enumerate()
            .map(|(i, &v)| lift(v, i))
            .collect();
        let scale = |sel: Sel| match sel {
            Sel::One => S::cst(1.0),
            Sel::Height => p[SHAPE],
            Sel::Girth => p[SHAPE + 1],
            Sel::Limb => p[SHAPE + 2],
        };
        let dim = |d: Dim| scale(d.1).scale(d.0);
        let mut frames: Vec<([S; 3], Mat3<S>)> = Vec::with_capacity(self.segments.len());
        for seg in &self.segments {
            let (origin, mut r) = match seg.parent {
                None => ([p[0], p[1], p[2]], axis_rotation(2, p[super::YAW])),
                Some(pi) => {
                    let (po, pr) = &frames[pi];
                    let off = mat_vec(
                        pr,
                        &[dim(seg.offset[0]), dim(seg.offset[1]), dim(seg.offset[2])],
                    );
                    ([po[0] + off[0], po[1] + off[1], po[2] + off[2]], *pr)
                }
            };
            for jr in &seg.rotations {
                r = mat_mul(
                    &r,
                    &axis_rotation(jr.axis, p[JOINTS + jr.slot].scale(jr.sign)),
                );
            }
            frames.push((origin, r));
        }
        let mut out = Vec::with_capacity(self.dirs.len());
        for seg_i in 0..self.segments.len() {
            let seg = &self.segments[seg_i];
            let (o, r) = &frames[seg_i];
            let c = [dim(seg.center[0]), dim(seg.center[1]), dim(seg.center[2])];
            let rad = [dim(seg.radii[0]), dim(seg.radii[1]), dim(seg.radii[2])];
            for vi in seg.first_vertex..seg.first_vertex + seg.vertex_count {
                let d = self.dirs[vi];
                let local = [
                    c[0] + rad[0].scale(d[0]),
                    c[1] + rad[1].scale(d[1]),
                    c[2] + rad[2].scale(d[2]),
                ];
                let w = mat_vec(r, &local);
                out.push([o[0] + w[0], o[1] + w[1], o[2] + w[2]]);
            }
        }
        out
    }
}

/// Closed UV sphere with `rings` latitude rings between the two poles, as
/// unit directions. Pole `+axis` first, pole `-axis` last.
fn uv_sphere(axis: usize, rings: usize, slices: usize) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let a = axis;
    let b = (axis + 1) % 3;
    let c = (axis + 2) % 3;
    let mut dirs = Vec::with_capacity(2 + rings * slices);
    let mut top = [0.0; 3];
    top[a] = 1.0;
    dirs.push(top);
    for r in 1..=rings {
        let phi = PI * r as f64 / (rings + 1) as f64;
        for s in 0..slices {
            let theta = 2.0 * PI * s as f64 / slices as f64;
            let mut d = [0.0; 3];
            d[a] = phi.cos();
            d[b] = phi.sin() * theta.cos();
            d[c] = phi.sin() * theta.sin();
            dirs.push(d);
        }
    }
    let mut bottom = [0.0; 3];
    bottom[a] = -1.0;
    dirs.push(bottom);

    let ring = |r: usize, s: usize| (1 + r * slices + s % slices) as u32;
    let last = (dirs.len() - 1) as u32;
    let mut faces = Vec::new();
    for s in 0..slices {
        faces.push([0, ring(0, s), ring(0, s + 1)]);
    }
    for r in 0..rings - 1 {
        for s in 0..slices {
            let (p, q) = (ring(r, s), ring(r, s + 1));
            let (u, v) = (ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([p, u, q]);
            faces.push([q, u, v]);
        }
    }
    for s in 0..slices {
        faces.push([last, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    (dirs, faces)
}
