use crate::camera::heatmap::grid_sample_into;
use crate::camera::{image_to_grid, CameraRig, FeatureMap};
use crate::error::{Error, Result};
use crate::hand::{HandSkeleton, KinematicTree, NUM_BONES, NUM_JOINTS};
use crate::numeric::Matrix;

/// Multi-view features sampled at the reprojected keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneFeatureSet {
    /// `21 × N·C`: per keypoint, the C-vectors of every view in rig order.
    pub keypoint: Matrix,
    /// `20 × 2·N·C`: per bone, parent keypoint row then child keypoint row.
    pub bone: Matrix,
}

/// Projects `xbar` into every view and bilinearly samples the feature maps.
/// A keypoint behind a camera contributes zeros for that view.
pub fn gather_bone_features(
    feature_maps: &[FeatureMap],
    xbar: &HandSkeleton,
    rig: &CameraRig,
    tree: &KinematicTree,
) -> Result<BoneFeatureSet> {
    if rig.len() < 2 {
        return Err(Error::TooFewViews {
            required: 2,
            actual: rig.len(),
        });
    }
    if feature_maps.len() != rig.len() {
        return Err(Error::shape(
            "feature maps per view",
            rig.len(),
            feature_maps.len(),
        ));
    }
    let c = feature_maps[0].channels();
    if let Some(bad) = feature_maps.iter().find(|f| f.channels() != c) {
        return Err(Error::shape("feature channels", c, bad.channels()));
    }
    let n = rig.len();
    let mut keypoint = Matrix::zeros(NUM_JOINTS, n * c);
    for (v, (view, fm)) in rig.views.iter().zip(feature_maps).enumerate() {
        for j in 0..NUM_JOINTS {
            if let Ok(uv) = view.project(&xbar.joints[j]) {
                grid_sample_into(
                    fm,
                    image_to_grid(uv),
                    &mut keypoint.row_mut(j)[v * c..(v + 1) * c],
                );
            }
        }
    }
    let width = n * c;
    let mut bone = Matrix::zeros(NUM_BONES, 2 * width);
    for (k, &(p, ch)) in tree.bones().iter().enumerate() {
        let row = bone.row_mut(k);
        row[..width].copy_from_slice(keypoint.row(p));
        row[width..].copy_from_slice(keypoint.row(ch));
    }
    Ok(BoneFeatureSet { keypoint, bone })
}
