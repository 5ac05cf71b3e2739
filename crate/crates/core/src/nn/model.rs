//! Scene autoencoder E, scene-BPS encoder F, conditional VAE G and vertex
//! regressor H.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{kl_per_row, NodeId, ParamId, ParamStore, Tape, LEAKY_SLOPE};
use super::tensor::{Mat, Real};
use crate::error::{Error, Result};
use crate::losses::{collision_loss, contact_loss, SceneGeometry, CONTACT_SIGMA};
use crate::mesh::CageTransform;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Basis point count.
    pub n: usize,
    /// Body vertex count.
    pub vertices: usize,
    pub d_z: usize,
    /// Wide and narrow hidden widths.
    pub widths: [usize; 2],
}

impl ArchConfig {
    pub fn desk(n: usize, vertices: usize) -> Self {
        ArchConfig {
            n,
            vertices,
            d_z: 32,
            widths: [512, 256],
        }
    }

    /// Number of E decoder activations fed to G's decoder.
    pub const SKIP_LAYERS: usize = 2;
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Res {
    a: Linear,
    b: Linear,
}

#[derive(Clone, Debug)]
struct Layers {
    e_enc0: Linear,
    e_enc_res: Res,
    e_enc1: Linear,
    e_dec0: Linear,
    e_dec1: Linear,
    e_dec_res: Res,
    e_out: Linear,
    g_enc0: Linear,
    g_enc_res: Res,
    g_enc1: Linear,
    g_mu: Linear,
    g_log_var: Linear,
    g_dec0: Linear,
    g_dec_res0: Res,
    g_dec1: Linear,
    g_dec_res1: Res,
    g_dec2: Linear,
    g_out: Linear,
    f_enc0: Linear,
    f_enc1: Linear,
    h_in: Linear,
    h_res0: Res,
    h_res1: Res,
    h_out: Linear,
}

struct Builder<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> Builder<'_, T> {
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, gain: f64) -> Linear {
        // He-uniform for leaky ReLU
        let a = gain * (6.0 / (fan_in as f64 * (1.0 + LEAKY_SLOPE * LEAKY_SLOPE))).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| T::lit(self.rng.gen_range(-a..a)))
            .collect();
        let w = self
            .store
            .add(format!("{name}.weight"), Mat::from_vec(fan_in, fan_out, w));
        let b = self
            .store
            .add(format!("{name}.bias"), Mat::zeros(1, fan_out));
        Linear { w, b }
    }

    fn res(&mut self, name: &str, width: usize) -> Res {
        Res {
            a: self.linear(&format!("{name}.fc1"), width, width, 1.0),
            b: self.linear(&format!("{name}.fc2"), width, width, 0.5),
        }
    }
}

/// All four networks and their parameters.
#[derive(Clone, Debug)]
pub struct Networks<T> {
    pub arch: ArchConfig,
    pub basis_seed: u64,
    pub params: ParamStore<T>,
    layers: Layers,
}

/// Encoder posterior and the latent drawn from it.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample<T> {
    pub mu: Mat<T>,
    pub log_var: Mat<T>,
    pub z: Mat<T>,
    pub eps: Mat<T>,
}

/// Node ids of one full training pass.
#[derive(Clone, Debug)]
pub struct Pass {
    pub xs_rec: NodeId,
    pub skips: Vec<NodeId>,
    pub mu: NodeId,
    pub log_var: NodeId,
    pub xb_rec: NodeId,
    pub vertices: NodeId,
    pub delta: NodeId,
}

impl<T: Real> Networks<T> {
    pub fn new(arch: ArchConfig, basis_seed: u64, seed: u64) -> Self {
        let mut store = ParamStore::default();
        let (n, v, dz) = (arch.n, arch.vertices, arch.d_z);
        let [w1, w2] = arch.widths;
        let mut b = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let layers = Layers {
            e_enc0: b.linear("E.enc0", n, w1, 1.0),
            e_enc_res: b.res("E.enc_res", w1),
            e_enc1: b.linear("E.enc1", w1, w2, 1.0),
            e_dec0: b.linear("E.dec0", w2, w2, 1.0),
            e_dec1: b.linear("E.dec1", w2, w1, 1.0),
            e_dec_res: b.res("E.dec_res", w1),
            e_out: b.linear("E.out", w1, n, 0.5),
            g_enc0: b.linear("G.enc0", n + w2, w1, 1.0),
            g_enc_res: b.res("G.enc_res", w1),
            g_enc1: b.linear("G.enc1", w1, w2, 1.0),
            g_mu: b.linear("G.mu", w2, dz, 0.5),
            g_log_var: b.linear("G.log_var", w2, dz, 0.1),
            g_dec0: b.linear("G.dec0", dz + w2, w2, 1.0),
            g_dec_res0: b.res("G.dec_res0", w2),
            g_dec1: b.linear("G.dec1", w2 + w2, w1, 1.0),
            g_dec_res1: b.res("G.dec_res1", w1),
            g_dec2: b.linear("G.dec2", w1 + w1, w1, 1.0),
            g_out: b.linear("G.out", w1, n, 0.5),
            f_enc0: b.linear("F.enc0", 3 * n, w1, 1.0),
            f_enc1: b.linear("F.enc1", w1, w2, 1.0),
            h_in: b.linear("H.in", w2 + n, w1, 1.0),
            h_res0: b.res("H.res0", w1),
            h_res1: b.res("H.res1", w1),
            h_out: b.linear("H.out", w1, 3 * v + 3, 0.5),
        };
        Networks {
            arch,
            basis_seed,
            params: store,
            layers,
        }
    }

    /// FNV-1a over the architecture and every parameter name and shape.
    pub fn arch_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        let a = &self.arch;
        eat(format!(
            "n={} v={} dz={} w={:?} skips={}",
            a.n,
            a.vertices,
            a.d_z,
            a.widths,
            ArchConfig::SKIP_LAYERS
        )
        .as_bytes());
        for (name, m) in self.params.names.iter().zip(&self.params.values) {
            eat(format!("{name}:{}x{};", m.rows, m.cols).as_bytes());
        }
        h
    }

    pub fn cast<U: Real>(&self) -> Networks<U> {
        Networks {
            arch: self.arch.clone(),
            basis_seed: self.basis_seed,
            params: self.params.cast(),
            layers: self.layers.clone(),
        }
    }

    fn lin(&self, t: &mut Tape<T>, x: NodeId, l: Linear) -> NodeId {
        t.linear(x, l.w, l.b)
    }

    fn lin_act(&self, t: &mut Tape<T>, x: NodeId, l: Linear) -> NodeId {
        let y = t.linear(x, l.w, l.b);
        t.leaky_relu(y)
    }

    fn res(&self, t: &mut Tape<T>, x: NodeId, r: Res) -> NodeId {
        let h = self.lin_act(t, x, r.a);
        let h = self.lin(t, h, r.b);
        let s = t.add(x, h);
        t.leaky_relu(s)
    }

    /// E: returns (scene code, decoder activations, reconstruction).
    pub fn scene_branch(&self, t: &mut Tape<T>, xs: NodeId) -> (NodeId, Vec<NodeId>, NodeId) {
        let l = &self.layers;
        let h = self.lin_act(t, xs, l.e_enc0);
        let h = self.res(t, h, l.e_enc_res);
        let code = self.lin_act(t, h, l.e_enc1);
        let d0 = self.lin_act(t, code, l.e_dec0);
        let d1 = self.lin_act(t, d0, l.e_dec1);
        let d1 = self.res(t, d1, l.e_dec_res);
        let rec = self.lin(t, d1, l.e_out);
        (code, vec![d0, d1], rec)
    }

    pub fn g_encode(&self, t: &mut Tape<T>, xb: NodeId, code: NodeId) -> (NodeId, NodeId) {
        let l = &self.layers;
        let c = t.concat(&[xb, code]);
        let h = self.lin_act(t, c, l.g_enc0);
        let h = self.res(t, h, l.g_enc_res);
        let h = self.lin_act(t, h, l.g_enc1);
        (self.lin(t, h, l.g_mu), self.lin(t, h, l.g_log_var))
    }

    pub fn g_decode(&self, t: &mut Tape<T>, z: NodeId, code: NodeId, skips: &[NodeId]) -> NodeId {
        let l = &self.layers;
        let c = t.concat(&[z, code]);
        let h = self.lin_act(t, c, l.g_dec0);
        let h = self.res(t, h, l.g_dec_res0);
        let c = t.concat(&[h, skips[0]]);
        let h = self.lin_act(t, c, l.g_dec1);
        let h = self.res(t, h, l.g_dec_res1);
        let c = t.concat(&[h, skips[1]]);
        let h = self.lin_act(t, c, l.g_dec2);
        let o = self.lin(t, h, l.g_out);
        t.softplus(o)
    }

    pub fn f_encode(&self, t: &mut Tape<T>, vs: NodeId) -> NodeId {
        let h = self.lin_act(t, vs, self.layers.f_enc0);
        self.lin_act(t, h, self.layers.f_enc1)
    }

    /// H: returns (vertices with the translation applied, translation).
    pub fn regress(&self, t: &mut Tape<T>, f_code: NodeId, xb: NodeId) -> (NodeId, NodeId) {
        let l = &self.layers;
        let c = t.concat(&[f_code, xb]);
        let h = self.lin_act(t, c, l.h_in);
        let h = self.res(t, h, l.h_res0);
        let h = self.res(t, h, l.h_res1);
        let o = self.lin(t, h, l.h_out);
        let nv = 3 * self.arch.vertices;
        let offsets = t.columns(o, 0, nv);
        let delta = t.columns(o, nv, 3);
        (t.add_delta(offsets, delta), delta)
    }

    /// The whole training graph for one batch.
    pub fn pass(&self, t: &mut Tape<T>, xs: Mat<T>, xb: Mat<T>, vs: Mat<T>, eps: Mat<T>) -> Pass {
        let xs = t.input(xs);
        let xb = t.input(xb);
        let vs = t.input(vs);
        let (code, skips, xs_rec) = self.scene_branch(t, xs);
        let (mu, log_var) = self.g_encode(t, xb, code);
        let z = t.reparam(mu, log_var, eps);
        let xb_rec = self.g_decode(t, z, code, &skips);
        let f = self.f_encode(t, vs);
        let (vertices, delta) = self.regress(t, f, xb_rec);
        Pass {
            xs_rec,
            skips,
            mu,
            log_var,
            xb_rec,
            vertices,
            delta,
        }
    }

    fn check(&self, what: &'static str, m: &Mat<T>, cols: usize) -> Result<()> {
        if m.cols != cols {
            return Err(Error::Dimension {
                what,
                expected: cols,
                got: m.cols,
            });
        }
        Ok(())
    }

    /// Autoencodes scene features; returns reconstruction and the decoder
    /// activations that condition G.
    pub fn encode_decode_scene(&self, x_s: &Mat<T>) -> Result<(Mat<T>, Vec<Mat<T>>)> {
        self.check("scene feature", x_s, self.arch.n)?;
        let mut t = Tape::new(&self.params);
        let xs = t.input(x_s.clone());
        let (_, skips, rec) = self.scene_branch(&mut t, xs);
        Ok((
            t.value(rec).clone(),
            skips.iter().map(|&s| t.value(s).clone()).collect(),
        ))
    }

    pub fn cvae_forward(
        &self,
        x_b: &Mat<T>,
        x_s: &Mat<T>,
        eps: &Mat<T>,
    ) -> Result<(Mat<T>, LatentSample<T>)> {
        self.check("body feature", x_b, self.arch.n)?;
        self.check("scene feature", x_s, self.arch.n)?;
        self.check("latent noise", eps, self.arch.d_z)?;
        let mut t = Tape::new(&self.params);
        let xs = t.input(x_s.clone());
        let xb = t.input(x_b.clone());
        let (code, skips, _) = self.scene_branch(&mut t, xs);
        let (mu, lv) = self.g_encode(&mut t, xb, code);
        let z = t.reparam(mu, lv, eps.clone());
        let rec = self.g_decode(&mut t, z, code, &skips);
        let latent = LatentSample {
            mu: t.value(mu).clone(),
            log_var: t.value(lv).clone(),
            z: t.value(z).clone(),
            eps: eps.clone(),
        };
        Ok((t.value(rec).clone(), latent))
    }

    /// Decoder-only generation from latent `z`.
    pub fn cvae_sample(&self, x_s: &Mat<T>, z: &Mat<T>) -> Result<Mat<T>> {
        self.check("scene feature", x_s, self.arch.n)?;
        self.check("latent", z, self.arch.d_z)?;
        let mut t = Tape::new(&self.params);
        let xs = t.input(x_s.clone());
        let zi = t.input(z.clone());
        let (code, skips, _) = self.scene_branch(&mut t, xs);
        let out = self.g_decode(&mut t, zi, code, &skips);
        Ok(t.value(out).clone())
    }

    /// Cage-frame vertices (rows of 3V) and the global translation.
    pub fn regress_body(&self, v_s: &Mat<T>, x_b: &Mat<T>) -> Result<(Mat<T>, Mat<T>)> {
        self.check("scene BPS", v_s, 3 * self.arch.n)?;
        self.check("body feature", x_b, self.arch.n)?;
        let mut t = Tape::new(&self.params);
        let vs = t.input(v_s.clone());
        let xb = t.input(x_b.clone());
        let f = self.f_encode(&mut t, vs);
        let (v, d) = self.regress(&mut t, f, xb);
        Ok((t.value(v).clone(), t.value(d).clone()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub kl: f64,
    pub collision: f64,
    pub contact: f64,
    /// Epoch fraction from which collision and contact are active.
    pub late_start: f64,
    pub contact_sigma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            kl: 0.5,
            collision: 0.001,
            contact: 0.001,
            late_start: 0.75,
            contact_sigma: CONTACT_SIGMA,
        }
    }
}

/// One batch, rows aligned across all tensors.
pub struct Batch<'a, T> {
    pub x_s: Mat<T>,
    pub x_b: Mat<T>,
    /// Cage-frame scene BPS, flattened xyz.
    pub v_s: Mat<T>,
    /// Cage-frame body vertices, flattened xyz.
    pub v_b: Mat<T>,
    pub eps: Mat<T>,
    pub transforms: Vec<CageTransform>,
    pub scenes: Vec<Option<&'a SceneGeometry>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub rec_scene: f64,
    pub rec_body_feature: f64,
    pub rec_vertices: f64,
    /// Batch-mean analytic KL in nats, before Ψ.
    pub kl: f64,
    pub kl_charbonnier: f64,
    pub collision: f64,
    pub contact: f64,
}

/// Collision and contact of cage-frame vertex rows mapped to the world, with
/// gradients pulled back to the cage frame. Losses are batch means.
fn geometry_terms<T: Real>(
    verts: &Mat<T>,
    batch: &Batch<T>,
    feet_mask: &[bool],
    sigma: f64,
) -> Result<((f64, Mat<T>), (f64, Mat<T>))> {
    let b = verts.rows as f64;
    let mut gc = Mat::zeros(verts.rows, verts.cols);
    let mut gt = Mat::zeros(verts.rows, verts.cols);
    let (mut lc, mut lt) = (0.0, 0.0);
    for r in 0..verts.rows {
        let scene = batch.scenes[r].ok_or_else(|| {
            Error::InvalidArgument(format!(
                "batch row {r} has no scene geometry for collision/contact"
            ))
        })?;
        let tf = &batch.transforms[r];
        let world: Vec<_> = verts
            .row(r)
            .chunks(3)
            .map(|c| tf.cage_to_world([c[0].as_f64(), c[1].as_f64(), c[2].as_f64()]))
            .collect();
        let (c, cg) = collision_loss(&world, &scene.sdf)?;
        let (k, kg) = contact_loss(&world, feet_mask, &scene.vertices, sigma)?;
        lc += c / b;
        lt += k / b;
        for (i, (a, bb)) in cg.iter().zip(&kg).enumerate() {
            let a = tf.world_dir_to_cage(*a);
            let bb = tf.world_dir_to_cage(*bb);
            for k in 0..3 {
                gc.row_mut(r)[3 * i + k] = T::lit(a[k] / b);
                gt.row_mut(r)[3 * i + k] = T::lit(bb[k] / b);
            }
        }
    }
    Ok(((lc, gc), (lt, gt)))
}

/// Composite training loss and its parameter gradients.
pub fn loss_total<T: Real>(
    nets: &Networks<T>,
    batch: &Batch<T>,
    weights: &LossWeights,
    epoch_fraction: f64,
    feet_mask: &[bool],
) -> Result<(LossTerms, Vec<Mat<T>>)> {
    let mut t = Tape::new(&nets.params);
    let p = nets.pass(
        &mut t,
        batch.x_s.clone(),
        batch.x_b.clone(),
        batch.v_s.clone(),
        batch.eps.clone(),
    );
    let l_xs = t.l1_mean(p.xs_rec, batch.x_s.clone());
    let l_xb = t.l1_mean(p.xb_rec, batch.x_b.clone());
    let l_vb = t.l1_mean(p.vertices, batch.v_b.clone());
    let l_kl = t.kl_charbonnier(p.mu, p.log_var);
    let mut terms = vec![
        (l_xs, T::one()),
        (l_xb, T::one()),
        (l_vb, T::one()),
        (l_kl, T::lit(weights.kl)),
    ];
    let kl = kl_per_row(t.value(p.mu), t.value(p.log_var));
    let mut out = LossTerms {
        rec_scene: t.scalar(l_xs).as_f64(),
        rec_body_feature: t.scalar(l_xb).as_f64(),
        rec_vertices: t.scalar(l_vb).as_f64(),
        kl: kl.iter().map(|k| k.as_f64()).sum::<f64>() / kl.len() as f64,
        kl_charbonnier: t.scalar(l_kl).as_f64(),
        ..Default::default()
    };
    if epoch_fraction >= weights.late_start && (weights.collision > 0.0 || weights.contact > 0.0) {
        let ((lc, gc), (lt, gt)) =
            geometry_terms(t.value(p.vertices), batch, feet_mask, weights.contact_sigma)?;
        let nc = t.external(p.vertices, T::lit(lc), gc);
        let nt = t.external(p.vertices, T::lit(lt), gt);
        terms.push((nc, T::lit(weights.collision)));
        terms.push((nt, T::lit(weights.contact)));
        out.collision = lc;
        out.contact = lt;
    }
    let total = t.weighted_sum(&terms);
    out.total = t.scalar(total).as_f64();
    if !out.total.is_finite() {
        return Err(Error::NonFinite(format!("training loss {out:?}")));
    }
    Ok((out, t.backward(total)))
}
