use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// ASCII OBJ: `v` lines with six decimals, then 1-indexed `f` lines.
pub fn write_obj<W: Write>(mesh: &[Vector3<f64>], faces: &[[u32; 3]], mut w: W) -> Result<()> {
    if let Some(f) = faces
        .iter()
        .find(|f| f.iter().any(|&i| i as usize >= mesh.len()))
    {
        return Err(Error::InvalidArgument(format!(
            "face {f:?} indexes past {} vertices",
            mesh.len()
        )));
    }
    for p in mesh {
        writeln!(w, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
    }
    for f in faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn export_obj(mesh: &[Vector3<f64>], faces: &[[u32; 3]], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_obj(mesh, faces, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
