use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::hand::{recover_mesh, BonePatches, HandSkeleton, NUM_BONES};
use crate::numeric::{Activation, Dense, DenseGrads, Matrix, Mlp, MlpGrads};
use crate::s2m::{Skeleton2Mesh, AXES};

/// Trainable side of the fusion model: a copy of each axis stack plus the
/// zero-initialized linear layers that feed features in and results out.
#[derive(Debug, Clone, PartialEq)]
pub struct MfiParams {
    /// One per axis, initialized from the locked stacks.
    pub copies: Vec<Mlp>,
    /// Per axis, `depth + 1` layers: the input map from bone features to the
    /// encoding width, then one square map per copied layer output.
    pub zero: Vec<Vec<Dense>>,
}

/// A locked skeleton-to-mesh model refined by multi-view image features.
#[derive(Debug, Clone, PartialEq)]
pub struct MgfpModel {
    locked: Skeleton2Mesh,
    mfi: MfiParams,
    n_views: usize,
    channels: usize,
}

pub struct MfiCache {
    batch: usize,
    axes: Vec<AxisCache>,
}

struct AxisCache {
    /// Bone features, `B·20 × 2NC`.
    features: Matrix,
    /// `z_0 … z_{d−1}`: inputs of the copied layers.
    z_in: Vec<Matrix>,
    copy_pre: Vec<Matrix>,
    copy_out: Vec<Matrix>,
    /// `e_0 … e_{d−1}`: inputs of the locked layers.
    e_in: Vec<Matrix>,
    locked_pre: Vec<Matrix>,
}

/// Gradients of the trainable parameters, laid out like
/// [`MgfpModel::tensors_mut`].
pub struct MfiGrads {
    pub copies: Vec<MlpGrads>,
    pub zero: Vec<Vec<DenseGrads>>,
}

impl MfiGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (c, z) in self.copies.iter().zip(&self.zero) {
            out.extend(c.tensors());
            for g in z {
                out.push(g.weight.as_slice());
                out.push(g.bias.as_slice());
            }
        }
        out
    }
}

impl MgfpModel {
    /// Wraps a trained model; copies start equal to the locked stacks and
    /// every zero layer starts with zero weights and biases.
    pub fn new(locked: Skeleton2Mesh, n_views: usize, channels: usize) -> Result<Self> {
        if n_views == 0 || channels == 0 {
            return Err(Error::InvalidArgument(
                "view and channel counts must be positive".into(),
            ));
        }
        let feature_dim = 2 * n_views * channels;
        let copies: Vec<Mlp> = locked.axes().to_vec();
        let zero = copies
            .iter()
            .map(|c| {
                let mut z = vec![Dense::zeros(
                    feature_dim,
                    c.input_dim(),
                    Activation::Identity,
                )];
                z.extend(
                    c.layers()
                        .iter()
                        .map(|l| Dense::zeros(l.out_dim(), l.out_dim(), Activation::Identity)),
                );
                z
            })
            .collect();
        Self::from_parts(locked, MfiParams { copies, zero }, n_views, channels)
    }

    pub fn from_parts(
        locked: Skeleton2Mesh,
        mfi: MfiParams,
        n_views: usize,
        channels: usize,
    ) -> Result<Self> {
        let feature_dim = 2 * n_views * channels;
        if mfi.copies.len() != 3 || mfi.zero.len() != 3 {
            return Err(Error::InvalidArgument(
                "fusion parameters need one entry per axis".into(),
            ));
        }
        for (a, (copy, z)) in mfi.copies.iter().zip(&mfi.zero).enumerate() {
            let lock = &locked.axes()[a];
            let same = copy.layers().len() == lock.layers().len()
                && copy.layers().iter().zip(lock.layers()).all(|(c, l)| {
                    c.in_dim() == l.in_dim()
                        && c.out_dim() == l.out_dim()
                        && c.activation() == l.activation()
                });
            if !same {
                return Err(Error::InvalidArgument(format!(
                    "copied axis {} differs in shape from the locked stack",
                    AXES[a]
                )));
            }
            if z.len() != copy.depth() + 1 {
                return Err(Error::shape(
                    "zero layers per axis",
                    copy.depth() + 1,
                    z.len(),
                ));
            }
            if z[0].in_dim() != feature_dim || z[0].out_dim() != copy.input_dim() {
                return Err(Error::InvalidArgument(format!(
                    "input zero layer of axis {} must map {feature_dim} to {}",
                    AXES[a],
                    copy.input_dim()
                )));
            }
            for (zl, cl) in z[1..].iter().zip(copy.layers()) {
                if zl.in_dim() != cl.out_dim() || zl.out_dim() != cl.out_dim() {
                    return Err(Error::InvalidArgument(
                        "zero layers must be square on the copied outputs".into(),
                    ));
                }
            }
        }
        Ok(Self {
            locked,
            mfi,
            n_views,
            channels,
        })
    }

    pub fn locked(&self) -> &Skeleton2Mesh {
        &self.locked
    }

    pub fn mfi(&self) -> &MfiParams {
        &self.mfi
    }

    pub fn mfi_mut(&mut self) -> &mut MfiParams {
        &mut self.mfi
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Width of one bone feature row, `2·N·C`.
    pub fn feature_dim(&self) -> usize {
        2 * self.n_views * self.channels
    }

    fn mfi_param_count(&self) -> usize {
        self.mfi
            .copies
            .iter()
            .zip(&self.mfi.zero)
            .map(|(c, z)| c.param_count() + z.iter().map(Dense::param_count).sum::<usize>())
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.locked.param_count() + self.mfi_param_count()
    }

    /// Locked chain, copies and zero layers for all 20 bones, plus the
    /// descriptor once.
    pub fn mac_count(&self) -> usize {
        self.locked.mac_count() + NUM_BONES * self.mfi_param_count()
    }

    /// Trainable tensors with container names.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for ((copy, z), axis) in self.mfi.copies.iter().zip(&self.mfi.zero).zip(AXES) {
            out.extend(copy.named_tensors(&format!("mfi.copy_{axis}")));
            for (j, l) in z.iter().enumerate() {
                out.push((
                    format!("mfi.zero_{axis}.{j}.w"),
                    vec![l.out_dim(), l.in_dim()],
                    l.weight().as_slice(),
                ));
                out.push((
                    format!("mfi.zero_{axis}.{j}.b"),
                    vec![l.out_dim()],
                    l.bias(),
                ));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (copy, z) in self.mfi.copies.iter_mut().zip(self.mfi.zero.iter_mut()) {
            out.extend(copy.tensors_mut());
            for l in z.iter_mut() {
                out.extend(l.params_mut());
            }
        }
        out
    }

    pub fn zero_grads(&self) -> MfiGrads {
        MfiGrads {
            copies: self.mfi.copies.iter().map(Mlp::zero_grads).collect(),
            zero: self
                .mfi
                .zero
                .iter()
                .map(|z| z.iter().map(Dense::zero_grads).collect())
                .collect(),
        }
    }

    fn stack_features(&self, features: &[&Matrix]) -> Result<Matrix> {
        let width = self.feature_dim();
        let mut g = Matrix::zeros(features.len() * NUM_BONES, width);
        for (b, f) in features.iter().enumerate() {
            if f.rows() != NUM_BONES || f.cols() != width {
                return Err(Error::shape(
                    "bone feature matrix",
                    NUM_BONES * width,
                    f.rows() * f.cols(),
                ));
            }
            g.as_mut_slice()[b * NUM_BONES * width..(b + 1) * NUM_BONES * width]
                .copy_from_slice(f.as_slice());
        }
        Ok(g)
    }

    /// Fused forward pass for a batch of reference skeletons and their
    /// `20 × 2NC` bone features.
    pub fn forward_batch(
        &self,
        xbars: &[HandSkeleton],
        features: &[&Matrix],
    ) -> Result<(Vec<BonePatches>, MfiCache)> {
        if xbars.len() != features.len() {
            return Err(Error::shape("feature sets", xbars.len(), features.len()));
        }
        let (oe, _) = self.locked.order_encode_batch(xbars)?;
        let g = self.stack_features(features)?;
        let mut outs = Vec::with_capacity(3);
        let mut caches = Vec::with_capacity(3);
        for a in 0..3 {
            let lock = &self.locked.axes()[a];
            let copy = &self.mfi.copies[a];
            let zero = &self.mfi.zero[a];
            let mut cache = AxisCache {
                features: g.clone(),
                z_in: Vec::new(),
                copy_pre: Vec::new(),
                copy_out: Vec::new(),
                e_in: Vec::new(),
                locked_pre: Vec::new(),
            };
            let mut z = zero[0].forward_batch(&g)?.out;
            let mut e = oe.clone();
            for j in 0..lock.depth() {
                let c = copy.layers()[j].forward_batch(&z)?;
                let z_next = zero[j + 1].forward_batch(&c.out)?.out;
                let l = lock.layers()[j].forward_batch(&e)?;
                let mut e_next = l.out;
                e_next
                    .as_mut_slice()
                    .iter_mut()
                    .zip(z_next.as_slice())
                    .for_each(|(s, v)| *s += v);
                cache.z_in.push(std::mem::replace(&mut z, z_next));
                cache.copy_pre.push(c.pre);
                cache.copy_out.push(c.out);
                cache.e_in.push(std::mem::replace(&mut e, e_next));
                cache.locked_pre.push(l.pre);
            }
            outs.push(e);
            caches.push(cache);
        }
        let patches = self
            .locked
            .assemble_patches(xbars, [&outs[0], &outs[1], &outs[2]]);
        Ok((
            patches,
            MfiCache {
                batch: xbars.len(),
                axes: caches,
            },
        ))
    }

    /// Accumulates gradients of the trainable parameters. Locked parameters
    /// receive none.
    pub fn backward_batch(
        &self,
        cache: &MfiCache,
        d_patches: &[Vec<Vector3<f64>>],
        grads: &mut MfiGrads,
    ) -> Result<()> {
        if d_patches.len() != cache.batch {
            return Err(Error::shape(
                "patch gradient batch",
                cache.batch,
                d_patches.len(),
            ));
        }
        let d_out = self.locked.scatter_patch_grads(d_patches);
        for a in 0..3 {
            let lock = &self.locked.axes()[a];
            let copy = &self.mfi.copies[a];
            let zero = &self.mfi.zero[a];
            let c = &cache.axes[a];
            let depth = lock.depth();
            // Gradient w.r.t. e_j, and the copy-chain gradient reaching z_j.
            let mut d_e = d_out[a].clone();
            let mut d_z_copy: Option<Matrix> = None;
            for j in (0..depth).rev() {
                let mut d_z = d_e.clone();
                if let Some(extra) = d_z_copy.take() {
                    d_z.as_mut_slice()
                        .iter_mut()
                        .zip(extra.as_slice())
                        .for_each(|(s, v)| *s += v);
                }
                // z_{j+1} = Z_{j+1}(c_j). Zero layers are linear, so the
                // pre-activation argument is only shape-checked.
                let d_c = zero[j + 1]
                    .backward_batch(
                        &c.copy_out[j],
                        &d_z,
                        &d_z,
                        Some(&mut grads.zero[a][j + 1]),
                        true,
                    )?
                    .expect("input gradient requested");
                d_z_copy = copy.layers()[j].backward_batch(
                    &c.z_in[j],
                    &c.copy_pre[j],
                    &d_c,
                    Some(&mut grads.copies[a].layers[j]),
                    true,
                )?;
                if j > 0 {
                    d_e = lock.layers()[j]
                        .backward_batch(&c.e_in[j], &c.locked_pre[j], &d_e, None, true)?
                        .expect("input gradient requested");
                }
            }
            let d_z0 = d_z_copy.expect("at least one layer");
            zero[0].backward_batch(
                &c.features,
                &d_z0,
                &d_z0,
                Some(&mut grads.zero[a][0]),
                false,
            )?;
        }
        Ok(())
    }

    pub fn predict_batch(
        &self,
        xbars: &[HandSkeleton],
        features: &[&Matrix],
    ) -> Result<Vec<BonePatches>> {
        Ok(self.forward_batch(xbars, features)?.0)
    }
}

/// Fused patches and recovered mesh for one reference skeleton.
pub fn mfi_forward(
    model: &MgfpModel,
    xbar: &HandSkeleton,
    bone_features: &Matrix,
) -> Result<(BonePatches, Vec<Vector3<f64>>)> {
    let patches = model
        .predict_batch(std::slice::from_ref(xbar), &[bone_features])?
        .pop()
        .unwrap();
    let mesh = recover_mesh(model.locked().spec(), &patches)?;
    Ok((patches, mesh))
}

pub fn count_params_mgfp(model: &MgfpModel) -> usize {
    model.param_count()
}

pub fn count_macs_mgfp(model: &MgfpModel) -> usize {
    model.mac_count()
}
