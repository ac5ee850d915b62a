//! Model weights in the tensor container. Parameters are stored as f32, so a
//! round trip is bitwise only after quantization.

use std::path::Path;

use serde_json::{json, Value};

use super::container::{meta_field, meta_str, Container};
use crate::error::{Error, Result};
use crate::fusion::MgfpModel;
use crate::hand::{DecompositionSpec, KinematicTree};
use crate::s2m::{S2MConfig, Skeleton2Mesh};

pub const KIND_S2M: &str = "s2m";
pub const KIND_MGFP: &str = "mgfp";

fn s2m_metadata(model: &Skeleton2Mesh, kind: &str) -> Value {
    let c = model.config();
    json!({
        "kind": kind,
        "depth": c.depth,
        "config": c,
        "pe": c.pe,
        "pre_scale_mm": c.pe.pre_scale_mm,
        "bone_order": model.tree(),
        "vertex_count": model.spec().vertex_count(),
        "patches": model.spec().patches(),
    })
}

fn push_tensors(c: &mut Container, tensors: Vec<(String, Vec<usize>, &[f64])>) -> Result<()> {
    for (name, shape, data) in tensors {
        c.push_f32(name, shape, data)?;
    }
    Ok(())
}

fn fill_tensors(
    c: &Container,
    names: Vec<(String, Vec<usize>)>,
    dst: Vec<&mut [f64]>,
) -> Result<()> {
    for ((name, shape), dst) in names.into_iter().zip(dst) {
        let values = c.get(&name)?.expect_shape(&shape)?.to_f64()?;
        dst.copy_from_slice(&values);
    }
    Ok(())
}

fn shapes(tensors: Vec<(String, Vec<usize>, &[f64])>) -> Vec<(String, Vec<usize>)> {
    tensors.into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Checks the architecture fields a caller asked for against the stored ones.
fn check_compatible(stored: &S2MConfig, expected: &S2MConfig) -> Result<()> {
    let mismatch = |field: &str, e: String, f: String| Error::Incompatible {
        field: field.into(),
        expected: e,
        found: f,
    };
    if stored.depth != expected.depth {
        return Err(mismatch(
            "depth",
            expected.depth.to_string(),
            stored.depth.to_string(),
        ));
    }
    if stored.hidden != expected.hidden {
        return Err(mismatch(
            "hidden",
            expected.hidden.to_string(),
            stored.hidden.to_string(),
        ));
    }
    if stored.use_gsd != expected.use_gsd {
        return Err(mismatch(
            "use_gsd",
            expected.use_gsd.to_string(),
            stored.use_gsd.to_string(),
        ));
    }
    if stored.pe != expected.pe {
        return Err(mismatch(
            "pe",
            format!("{:?}", expected.pe),
            format!("{:?}", stored.pe),
        ));
    }
    Ok(())
}

fn s2m_from_container(c: &Container, expected: Option<&S2MConfig>) -> Result<Skeleton2Mesh> {
    let meta = &c.metadata;
    let config: S2MConfig = meta_field(meta, "config")?;
    if let Some(e) = expected {
        check_compatible(&config, e)?;
    }
    let tree: KinematicTree = meta_field(meta, "bone_order")?;
    let tree = KinematicTree::with_bone_order(tree.parents().to_vec(), tree.bones().to_vec())?;
    let spec = DecompositionSpec::from_patches(
        meta_field(meta, "vertex_count")?,
        meta_field(meta, "patches")?,
    )?;
    let mut model = Skeleton2Mesh::new(config, tree, spec, 0)?;
    let names = shapes(model.named_tensors());
    fill_tensors(c, names, model.tensors_mut())?;
    Ok(model)
}

fn expect_kind(c: &Container, kind: &str) -> Result<()> {
    let found = meta_str(&c.metadata, "kind")?;
    if found != kind {
        return Err(Error::Incompatible {
            field: "kind".into(),
            expected: kind.into(),
            found: found.into(),
        });
    }
    Ok(())
}

pub fn s2m_to_container(model: &Skeleton2Mesh) -> Result<Container> {
    let mut c = Container::new(s2m_metadata(model, KIND_S2M));
    push_tensors(&mut c, model.named_tensors())?;
    Ok(c)
}

pub fn save_s2m(model: &Skeleton2Mesh, path: impl AsRef<Path>) -> Result<()> {
    s2m_to_container(model)?.write(path)
}

/// Loads a skeleton-to-mesh model. With `expected`, the stored architecture
/// must match it.
pub fn load_s2m(path: impl AsRef<Path>, expected: Option<&S2MConfig>) -> Result<Skeleton2Mesh> {
    let c = Container::read(path)?;
    expect_kind(&c, KIND_S2M)?;
    s2m_from_container(&c, expected)
}

pub fn mgfp_to_container(model: &MgfpModel) -> Result<Container> {
    let mut meta = s2m_metadata(model.locked(), KIND_MGFP);
    meta["n_views"] = json!(model.n_views());
    meta["channels"] = json!(model.channels());
    let mut c = Container::new(meta);
    push_tensors(&mut c, model.locked().named_tensors())?;
    push_tensors(&mut c, model.named_tensors())?;
    Ok(c)
}

pub fn save_mgfp(model: &MgfpModel, path: impl AsRef<Path>) -> Result<()> {
    mgfp_to_container(model)?.write(path)
}

pub fn load_mgfp(path: impl AsRef<Path>, expected: Option<&S2MConfig>) -> Result<MgfpModel> {
    let c = Container::read(path)?;
    expect_kind(&c, KIND_MGFP)?;
    let locked = s2m_from_container(&c, expected)?;
    let mut model = MgfpModel::new(
        locked,
        meta_field(&c.metadata, "n_views")?,
        meta_field(&c.metadata, "channels")?,
    )?;
    let names = shapes(model.named_tensors());
    fill_tensors(&c, names, model.tensors_mut())?;
    Ok(model)
}

/// Either kind of stored model.
#[derive(Debug, Clone)]
pub enum StoredModel {
    S2M(Skeleton2Mesh),
    Mgfp(MgfpModel),
}

pub fn load_model(path: impl AsRef<Path>, expected: Option<&S2MConfig>) -> Result<StoredModel> {
    let c = Container::read(path)?;
    match meta_str(&c.metadata, "kind")? {
        KIND_S2M => Ok(StoredModel::S2M(s2m_from_container(&c, expected)?)),
        KIND_MGFP => {
            let locked = s2m_from_container(&c, expected)?;
            let mut model = MgfpModel::new(
                locked,
                meta_field(&c.metadata, "n_views")?,
                meta_field(&c.metadata, "channels")?,
            )?;
            let names = shapes(model.named_tensors());
            fill_tensors(&c, names, model.tensors_mut())?;
            Ok(StoredModel::Mgfp(model))
        }
        other => Err(Error::format("kind", format!("`{other}` is not a model"))),
    }
}
