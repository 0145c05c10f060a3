//! Grid functions on disk: 8-byte little-endian header length, a JSON
//! header, then the values as little-endian `f64`.

use super::grid::Grid;
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub grid: Grid,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

pub fn write_grid_function<W: Write>(mut out: W, grid: &Grid, values: &[f64], name: Option<&str>) -> Result<()> {
    if values.len() != grid.len() {
        return invalid(format!("grid function has {} values, grid has {} nodes", values.len(), grid.len()));
    }
    let header = GridHeader { grid: grid.clone(), dtype: "f64le".into(), name: name.map(str::to_owned) };
    let json = serde_json::to_vec(&header)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(8 * values.len());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_grid_function<R: Read>(mut input: R) -> Result<(GridHeader, Vec<f64>)> {
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return invalid(format!("header length {len} is implausible"));
    }
    let mut json = vec![0u8; len as usize];
    input.read_exact(&mut json)?;
    let header: GridHeader = serde_json::from_slice(&json)?;
    if header.dtype != "f64le" {
        return invalid(format!("unsupported dtype {}", header.dtype));
    }
    let grid = Grid::new(header.grid.center.clone(), header.grid.spacing, header.grid.counts.clone())?;
    let mut raw = vec![0u8; 8 * grid.len()];
    input.read_exact(&mut raw)?;
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((header, values))
}
