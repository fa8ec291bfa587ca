//! `DW1` weight files.
//!
//! Layout, little-endian: magic `DW1\n`, `u32` section count, then per section a
//! `u32` name length, the UTF-8 parameter path, a `u64` blob length and a DT1
//! tensor blob.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::params::Parameterized;
use crate::tensor::{read_dt1, write_dt1, Tensor};

pub const DW1_MAGIC: &[u8; 4] = b"DW1\n";

pub fn save_weights<W: Write>(model: &dyn Parameterized, mut out: W) -> Result<()> {
    let params = model.named_params("");
    out.write_all(DW1_MAGIC)?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in &params {
        let mut blob = Vec::new();
        write_dt1(t, &mut blob)?;
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(blob.len() as u64).to_le_bytes())?;
        out.write_all(&blob)?;
    }
    Ok(())
}

pub fn read_sections<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>> {
    let fail = |msg: String| Error::WeightFile(msg);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| fail("file too short for the DW1 magic".into()))?;
    if &magic != DW1_MAGIC {
        return Err(fail("bad magic, not a DW1 weight file".into()));
    }
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf).map_err(|_| fail("missing section count".into()))?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut sections = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        input.read_exact(&mut u32buf).map_err(|_| fail(format!("section {i}: truncated name length")))?;
        let len = u32::from_le_bytes(u32buf) as usize;
        if len > 4096 {
            return Err(fail(format!("section {i}: implausible name length {len}")));
        }
        let mut name = vec![0u8; len];
        input.read_exact(&mut name).map_err(|_| fail(format!("section {i}: truncated name")))?;
        let name = String::from_utf8(name).map_err(|_| fail(format!("section {i}: name is not UTF-8")))?;
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf).map_err(|_| fail(format!("section `{name}`: truncated blob length")))?;
        let blob_len = u64::from_le_bytes(u64buf);
        let mut blob = Vec::new();
        (&mut input).take(blob_len).read_to_end(&mut blob)?;
        if blob.len() as u64 != blob_len {
            return Err(fail(format!("section `{name}`: blob truncated")));
        }
        let t = read_dt1(&blob[..]).map_err(|e| fail(format!("section `{name}`: {e}")))?;
        sections.push((name, t));
    }
    Ok(sections)
}

/// Replaces every parameter of `model`; all sections must be present with matching shapes.
pub fn load_weights<R: Read>(model: &mut dyn Parameterized, input: R) -> Result<()> {
    let sections = read_sections(input)?;
    let mut by_name: HashMap<String, Tensor> = HashMap::with_capacity(sections.len());
    for (name, t) in sections {
        if by_name.insert(name.clone(), t).is_some() {
            return Err(Error::WeightFile(format!("section `{name}` appears twice")));
        }
    }
    let mut problem = None;
    model.visit_params("", &mut |name, t| {
        if problem.is_some() {
            return;
        }
        match by_name.get(name) {
            None => problem = Some(format!("section `{name}` is missing")),
            Some(s) if s.shape() != t.shape() => {
                problem = Some(format!("section `{name}` has shape {:?}, the graph expects {:?}", s.shape(), t.shape()))
            }
            Some(s) if !s.is_finite() => problem = Some(format!("section `{name}` holds non-finite values")),
            Some(_) => {}
        }
    });
    if let Some(p) = problem {
        return Err(Error::WeightFile(p));
    }
    let mut known = 0;
    model.visit_params_mut("", &mut |name, t| {
        if let Some(s) = by_name.remove(name) {
            *t = s;
            known += 1;
        }
    });
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::WeightFile(format!("section `{extra}` does not belong to the graph")));
    }
    debug_assert!(known > 0);
    Ok(())
}
