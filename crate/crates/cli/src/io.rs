use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sni_core::{Mesh, ProblemSpec, Result, SniError};

fn read_value(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn io_context(path: &Path, e: std::io::Error) -> SniError {
    SniError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// A bare mesh, or any object with a `mesh` field (shape files, records).
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let mut v = read_value(path)?;
    if v.get("vertices").is_none() {
        v = v
            .get_mut("mesh")
            .map(Value::take)
            .ok_or_else(|| SniError::InvalidMesh(format!("{}: no mesh found", path.display())))?;
    }
    let mesh: Mesh = serde_json::from_value(v)?;
    mesh.validate()?;
    Ok(mesh)
}

/// A bare problem, or any object with a `spec` field.
pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let mut v = read_value(path)?;
    if v.get("equation").is_none() {
        v = v
            .get_mut("spec")
            .map(Value::take)
            .ok_or_else(|| SniError::Specification(format!("{}: no problem found", path.display())))?;
    }
    Ok(serde_json::from_value(v)?)
}

/// A bare array, or an object with a `u` or `solution` array.
pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    let mut v = read_value(path)?;
    if !v.is_array() {
        v = ["u", "solution"]
            .iter()
            .find_map(|k| v.get_mut(*k).map(Value::take))
            .ok_or_else(|| SniError::Config(format!("{}: expected an array or a u/solution field", path.display())))?;
    }
    Ok(serde_json::from_value(v)?)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string(value)?;
    fs::write(path, text).map_err(|e| io_context(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_context(path, e))
}
