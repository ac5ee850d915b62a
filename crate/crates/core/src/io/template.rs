use std::path::Path;

use nalgebra::Vector3;
use serde_json::json;

use super::container::{meta_field, meta_str, Container, TensorData};
use crate::error::{Error, Result};
use crate::hand::{HandSkeleton, HandTemplate, NUM_BONES, NUM_JOINTS};

pub const KIND_TEMPLATE: &str = "template";

fn points(values: &[f64]) -> Vec<Vector3<f64>> {
    values
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect()
}

pub fn save_template(t: &HandTemplate, path: impl AsRef<Path>) -> Result<()> {
    let mut c =
        Container::new(json!({"kind": KIND_TEMPLATE, "joint_regressor": t.joint_regressor}));
    let v = t.vertex_count();
    c.push_f32(
        "rest_skeleton",
        vec![NUM_JOINTS, 3],
        &t.rest_skeleton.flatten(),
    )?;
    c.push_f32(
        "vertices",
        vec![v, 3],
        &t.vertices
            .iter()
            .flat_map(|p| [p.x, p.y, p.z])
            .collect::<Vec<_>>(),
    )?;
    c.push(
        "faces",
        vec![t.faces.len(), 3],
        TensorData::U32(t.faces.iter().flatten().copied().collect()),
    )?;
    c.push_f32(
        "skin_weights",
        vec![v, NUM_BONES],
        &t.skin_weights.iter().flatten().copied().collect::<Vec<_>>(),
    )?;
    c.write(path)
}

/// Loads a template. Skin weight rows are renormalized after the f32 round
/// trip so they sum to one in f64.
pub fn load_template(path: impl AsRef<Path>) -> Result<HandTemplate> {
    let c = Container::read(path)?;
    let kind = meta_str(&c.metadata, "kind")?;
    if kind != KIND_TEMPLATE {
        return Err(Error::format(
            "kind",
            format!("expected `{KIND_TEMPLATE}`, found `{kind}`"),
        ));
    }
    let rest = c
        .get("rest_skeleton")?
        .expect_shape(&[NUM_JOINTS, 3])?
        .to_f64()?;
    let vt = c.get("vertices")?;
    let v = vt.shape.first().copied().unwrap_or(0);
    let vertices = points(&vt.expect_shape(&[v, 3])?.to_f64()?);
    let ft = c.get("faces")?;
    let nf = ft.shape.first().copied().unwrap_or(0);
    let faces = ft
        .expect_shape(&[nf, 3])?
        .to_u32()?
        .chunks_exact(3)
        .map(|f| [f[0], f[1], f[2]])
        .collect();
    let skin_weights = c
        .get("skin_weights")?
        .expect_shape(&[v, NUM_BONES])?
        .to_f64()?
        .chunks_exact(NUM_BONES)
        .map(|row| {
            let s: f64 = row.iter().sum();
            let mut w = [0.0; NUM_BONES];
            for (d, x) in w.iter_mut().zip(row) {
                *d = if s > 0.0 { x / s } else { *x };
            }
            w
        })
        .collect();
    HandTemplate::new(
        HandSkeleton::from_slice(&points(&rest))?,
        vertices,
        faces,
        skin_weights,
        meta_field(&c.metadata, "joint_regressor")?,
    )
}
