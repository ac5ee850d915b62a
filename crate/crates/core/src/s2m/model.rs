use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::PEConfig;
use crate::error::{Error, Result};
use crate::hand::{
    recover_mesh, BonePatches, DecompositionSpec, HandSkeleton, KinematicTree, NUM_BONES,
    NUM_JOINTS,
};
use crate::numeric::{Matrix, Mlp, MlpCache, MlpGrads, DEFAULT_LEAKY_SLOPE};

pub const AXES: [&str; 3] = ["x", "y", "z"];
pub const MIN_DEPTH: usize = 2;
pub const MAX_DEPTH: usize = 5;

/// Architecture of the skeleton-to-mesh model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct S2MConfig {
    /// Dense layers per axis stack.
    pub depth: usize,
    pub hidden: usize,
    /// Output slots per bone; every patch must fit.
    pub output_width: usize,
    pub gsd_hidden: usize,
    pub gsd_width: usize,
    pub use_gsd: bool,
    pub pe: PEConfig,
    pub leaky_slope: f64,
}

impl Default for S2MConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            hidden: 256,
            output_width: 100,
            gsd_hidden: 256,
            gsd_width: 100,
            use_gsd: true,
            pe: PEConfig::default(),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl S2MConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&self.depth) {
            return Err(Error::InvalidArgument(format!(
                "depth must be in {MIN_DEPTH}..={MAX_DEPTH}, got {}",
                self.depth
            )));
        }
        if self.hidden == 0
            || self.output_width == 0
            || (self.use_gsd && (self.gsd_hidden == 0 || self.gsd_width == 0))
        {
            return Err(Error::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        if !(self.pe.pre_scale_mm > 0.0) {
            return Err(Error::InvalidArgument("pre-scale must be positive".into()));
        }
        Ok(())
    }

    /// Width of one order-encoded bone row.
    pub fn oe_dim(&self) -> usize {
        self.pe.output_dim() + if self.use_gsd { self.gsd_width } else { 0 }
    }

    pub fn axis_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.oe_dim()];
        dims.extend(std::iter::repeat_n(self.hidden, self.depth - 1));
        dims.push(self.output_width);
        dims
    }

    pub fn gsd_dims(&self) -> [usize; 3] {
        [3 * NUM_JOINTS, self.gsd_hidden, self.gsd_width]
    }
}

/// Per-bone, per-axis MLP regressor from a hand skeleton to mesh vertices.
///
/// Every bone row of the order encoding goes through the same three stacks,
/// one per output coordinate. Slot `i` of bone `k`'s output is the offset of
/// the `i`-th patch vertex from the bone midpoint, in units of
/// `pe.pre_scale_mm`.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton2Mesh {
    config: S2MConfig,
    tree: KinematicTree,
    spec: DecompositionSpec,
    gsd: Option<Mlp>,
    axes: [Mlp; 3],
}

/// Forward intermediates of a batch, for backpropagation.
pub struct S2MCache {
    batch: usize,
    gsd: Option<MlpCache>,
    axes: Vec<MlpCache>,
}

impl S2MCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradients, laid out like [`Skeleton2Mesh::tensors_mut`].
pub struct S2MGrads {
    pub gsd: Option<MlpGrads>,
    pub axes: Vec<MlpGrads>,
}

impl S2MGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(g) = &self.gsd {
            out.extend(g.tensors());
        }
        for a in &self.axes {
            out.extend(a.tensors());
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        if let Some(g) = &mut self.gsd {
            g.scale(s);
        }
        self.axes.iter_mut().for_each(|a| a.scale(s));
    }
}

impl Skeleton2Mesh {
    /// A randomly initialized model; the same seed gives the same weights.
    pub fn new(
        config: S2MConfig,
        tree: KinematicTree,
        spec: DecompositionSpec,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gsd = config
            .use_gsd
            .then(|| Mlp::uniform(&config.gsd_dims(), config.leaky_slope, &mut rng));
        let dims = config.axis_dims();
        let axes = std::array::from_fn(|_| Mlp::uniform(&dims, config.leaky_slope, &mut rng));
        Self::from_parts(config, tree, spec, gsd, axes)
    }

    /// Assembles a model from existing stacks, checking every dimension.
    pub fn from_parts(
        config: S2MConfig,
        tree: KinematicTree,
        spec: DecompositionSpec,
        gsd: Option<Mlp>,
        axes: [Mlp; 3],
    ) -> Result<Self> {
        config.validate()?;
        let dims = config.axis_dims();
        for a in &axes {
            let got: Vec<usize> = std::iter::once(a.input_dim())
                .chain(a.layers().iter().map(|l| l.out_dim()))
                .collect();
            if got != dims {
                return Err(Error::InvalidArgument(format!(
                    "axis stack dims {got:?}, expected {dims:?}"
                )));
            }
        }
        match (&gsd, config.use_gsd) {
            (Some(g), true) => {
                let got: Vec<usize> = std::iter::once(g.input_dim())
                    .chain(g.layers().iter().map(|l| l.out_dim()))
                    .collect();
                if got != config.gsd_dims() {
                    return Err(Error::InvalidArgument(format!(
                        "GSD dims {got:?}, expected {:?}",
                        config.gsd_dims()
                    )));
                }
            }
            (None, false) => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "GSD presence does not match the config".into(),
                ))
            }
        }
        if let Some((k, &n)) = spec
            .per_bone_counts()
            .iter()
            .enumerate()
            .find(|(_, &n)| n > config.output_width)
        {
            return Err(Error::Capacity {
                bone: k,
                count: n,
                capacity: config.output_width,
            });
        }
        Ok(Self {
            config,
            tree,
            spec,
            gsd,
            axes,
        })
    }

    pub fn config(&self) -> &S2MConfig {
        &self.config
    }

    pub fn tree(&self) -> &KinematicTree {
        &self.tree
    }

    pub fn spec(&self) -> &DecompositionSpec {
        &self.spec
    }

    pub fn gsd(&self) -> Option<&Mlp> {
        self.gsd.as_ref()
    }

    pub fn axes(&self) -> &[Mlp; 3] {
        &self.axes
    }

    pub fn axes_mut(&mut self) -> &mut [Mlp; 3] {
        &mut self.axes
    }

    pub fn param_count(&self) -> usize {
        self.gsd.as_ref().map_or(0, Mlp::param_count)
            + self.axes.iter().map(Mlp::param_count).sum::<usize>()
    }

    /// Multiply-adds to map one skeleton: the three stacks run once per bone,
    /// the descriptor once per skeleton.
    pub fn mac_count(&self) -> usize {
        NUM_BONES * self.axes.iter().map(Mlp::mac_count).sum::<usize>()
            + self.gsd.as_ref().map_or(0, Mlp::mac_count)
    }

    /// Parameter tensors with their container names and shapes.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        if let Some(g) = &self.gsd {
            for (j, l) in g.layers().iter().enumerate() {
                out.push((
                    format!("gsd.w{j}"),
                    vec![l.out_dim(), l.in_dim()],
                    l.weight().as_slice(),
                ));
                out.push((format!("gsd.b{j}"), vec![l.out_dim()], l.bias()));
            }
        }
        for (a, name) in self.axes.iter().zip(AXES) {
            out.extend(a.named_tensors(&format!("axis_{name}")));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(g) = &mut self.gsd {
            out.extend(g.tensors_mut());
        }
        for a in &mut self.axes {
            out.extend(a.tensors_mut());
        }
        out
    }

    pub fn zero_grads(&self) -> S2MGrads {
        S2MGrads {
            gsd: self.gsd.as_ref().map(Mlp::zero_grads),
            axes: self.axes.iter().map(Mlp::zero_grads).collect(),
        }
    }

    /// Order encoding of a batch: row `b·20 + k` is bone `k` of skeleton `b`,
    /// `[PE(b_k, o_k), g]` with `g` shared by the skeleton's 20 rows.
    pub fn order_encode_batch(&self, xs: &[HandSkeleton]) -> Result<(Matrix, Option<MlpCache>)> {
        let pe = &self.config.pe;
        let pe_dim = pe.output_dim();
        let oe_dim = self.config.oe_dim();
        let mut oe = Matrix::zeros(xs.len() * NUM_BONES, oe_dim);
        let gsd = match &self.gsd {
            Some(g) => {
                let mut input = Matrix::zeros(xs.len(), 3 * NUM_JOINTS);
                for (b, x) in xs.iter().enumerate() {
                    input.row_mut(b).copy_from_slice(&pe.normalized_joints(x));
                }
                Some(g.forward_batch(input)?)
            }
            None => None,
        };
        for (b, x) in xs.iter().enumerate() {
            for (k, bone) in pe.normalized_bones(x, &self.tree).iter().enumerate() {
                let row = oe.row_mut(b * NUM_BONES + k);
                pe.encode_row(bone, k, &mut row[..pe_dim]);
                if let Some((g, _)) = &gsd {
                    row[pe_dim..].copy_from_slice(g.row(b));
                }
            }
        }
        Ok((oe, gsd.map(|(_, c)| c)))
    }

    /// `20 × oe_dim` order encoding of one skeleton.
    pub fn order_encode(&self, x: &HandSkeleton) -> Result<Matrix> {
        Ok(self.order_encode_batch(std::slice::from_ref(x))?.0)
    }

    /// Places per-axis outputs (`B·20 × width`) around the bone midpoints and
    /// trims each bone to its patch size.
    pub fn assemble_patches(&self, xs: &[HandSkeleton], outs: [&Matrix; 3]) -> Vec<BonePatches> {
        let scale = self.config.pe.pre_scale_mm;
        xs.iter()
            .enumerate()
            .map(|(b, x)| {
                let mut patches = Vec::with_capacity(self.spec.patch_count());
                for (k, &(p, c)) in self.tree.bones().iter().enumerate() {
                    let mid = (x.joints[p] + x.joints[c]) * 0.5;
                    let r = b * NUM_BONES + k;
                    let (ox, oy, oz) = (outs[0].row(r), outs[1].row(r), outs[2].row(r));
                    for i in 0..self.spec.patch(k).len() {
                        patches.push(mid + scale * Vector3::new(ox[i], oy[i], oz[i]));
                    }
                }
                patches
            })
            .collect()
    }

    /// Adjoint of [`assemble_patches`](Self::assemble_patches) w.r.t. the axis
    /// outputs; untrimmed slots receive zero gradient.
    pub fn scatter_patch_grads(&self, d_patches: &[Vec<Vector3<f64>>]) -> [Matrix; 3] {
        let scale = self.config.pe.pre_scale_mm;
        let width = self.config.output_width;
        let mut out: [Matrix; 3] =
            std::array::from_fn(|_| Matrix::zeros(d_patches.len() * NUM_BONES, width));
        let offsets = self.spec.patch_offsets();
        for (b, d) in d_patches.iter().enumerate() {
            for k in 0..NUM_BONES {
                let r = b * NUM_BONES + k;
                for (i, g) in d[offsets[k]..offsets[k + 1]].iter().enumerate() {
                    for a in 0..3 {
                        out[a].row_mut(r)[i] = scale * g[a];
                    }
                }
            }
        }
        out
    }

    pub fn forward_batch(&self, xs: &[HandSkeleton]) -> Result<(Vec<BonePatches>, S2MCache)> {
        let (oe, gsd) = self.order_encode_batch(xs)?;
        let mut outs = Vec::with_capacity(3);
        let mut caches = Vec::with_capacity(3);
        for a in &self.axes {
            let (y, cache) = a.forward_batch(oe.clone())?;
            outs.push(y);
            caches.push(cache);
        }
        let patches = self.assemble_patches(xs, [&outs[0], &outs[1], &outs[2]]);
        Ok((
            patches,
            S2MCache {
                batch: xs.len(),
                gsd,
                axes: caches,
            },
        ))
    }

    /// Patches for a batch without keeping intermediates.
    pub fn predict_batch(&self, xs: &[HandSkeleton]) -> Result<Vec<BonePatches>> {
        let (oe, _) = self.order_encode_batch(xs)?;
        let outs: Vec<Matrix> = self
            .axes
            .iter()
            .map(|a| a.infer_batch(&oe))
            .collect::<Result<_>>()?;
        Ok(self.assemble_patches(xs, [&outs[0], &outs[1], &outs[2]]))
    }

    /// Accumulates parameter gradients given per-sample patch gradients.
    pub fn backward_batch(
        &self,
        cache: &S2MCache,
        d_patches: &[Vec<Vector3<f64>>],
        grads: &mut S2MGrads,
    ) -> Result<()> {
        if d_patches.len() != cache.batch {
            return Err(Error::shape(
                "patch gradient batch",
                cache.batch,
                d_patches.len(),
            ));
        }
        if let Some(d) = d_patches
            .iter()
            .find(|d| d.len() != self.spec.patch_count())
        {
            return Err(Error::shape(
                "patch gradient rows",
                self.spec.patch_count(),
                d.len(),
            ));
        }
        let d_out = self.scatter_patch_grads(d_patches);
        let want_input = self.gsd.is_some();
        let mut d_oe: Option<Matrix> = None;
        for a in 0..3 {
            let d_in = self.axes[a].backward_batch(
                &cache.axes[a],
                &d_out[a],
                Some(&mut grads.axes[a]),
                want_input,
            )?;
            if let Some(d_in) = d_in {
                match &mut d_oe {
                    None => d_oe = Some(d_in),
                    Some(acc) => acc
                        .as_mut_slice()
                        .iter_mut()
                        .zip(d_in.as_slice())
                        .for_each(|(s, v)| *s += v),
                }
            }
        }
        if let (Some(g), Some(gc), Some(d_oe)) = (&self.gsd, &cache.gsd, d_oe) {
            let pe_dim = self.config.pe.output_dim();
            let mut d_g = Matrix::zeros(cache.batch, self.config.gsd_width);
            for b in 0..cache.batch {
                let acc = d_g.row_mut(b);
                for k in 0..NUM_BONES {
                    for (s, v) in acc.iter_mut().zip(&d_oe.row(b * NUM_BONES + k)[pe_dim..]) {
                        *s += v;
                    }
                }
            }
            g.backward_batch(gc, &d_g, grads.gsd.as_mut(), false)?;
        }
        Ok(())
    }
}

/// Patches and the recovered mesh for one skeleton.
pub fn s2m_forward(
    model: &Skeleton2Mesh,
    x: &HandSkeleton,
) -> Result<(BonePatches, Vec<Vector3<f64>>)> {
    let patches = model.predict_batch(std::slice::from_ref(x))?.pop().unwrap();
    let mesh = recover_mesh(model.spec(), &patches)?;
    Ok((patches, mesh))
}

pub fn count_params(model: &Skeleton2Mesh) -> usize {
    model.param_count()
}

pub fn count_macs(model: &Skeleton2Mesh) -> usize {
    model.mac_count()
}
