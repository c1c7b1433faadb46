//! Plain-text block exchange format used between pipeline stages.
//!
//! ```text
//! ni nj mapping_degree
//! x y                          # (g*ni+1)*(g*nj+1) lines, j-major rows
//! tags: south east north west
//! override i j face tag        # optional per-face tags
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use super::{BoundaryTag, MeshError, StructuredBlock};

pub fn write_block(block: &StructuredBlock, path: &Path) -> Result<(), MeshError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{} {} {}", block.ni, block.nj, block.mapping_degree)?;
    for p in &block.geom {
        writeln!(w, "{:.17e} {:.17e}", p[0], p[1])?;
    }
    writeln!(
        w,
        "tags: {} {} {} {}",
        block.side_tags[0].as_str(),
        block.side_tags[1].as_str(),
        block.side_tags[2].as_str(),
        block.side_tags[3].as_str()
    )?;
    for (&(e, f), tag) in &block.face_tag_overrides {
        let (i, j) = block.elem_ij(e);
        writeln!(w, "override {i} {j} {f} {}", tag.as_str())?;
    }
    Ok(())
}

pub fn read_block(path: &Path, id: usize) -> Result<StructuredBlock, MeshError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();

    let header = lines
        .next()
        .ok_or_else(|| MeshError::Parse("empty block file".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| MeshError::Parse(format!("bad header `{header}`"))))
        .collect::<Result<_, _>>()?;
    if dims.len() != 3 {
        return Err(MeshError::Parse(format!("bad header `{header}`")));
    }
    let (ni, nj, g) = (dims[0], dims[1], dims[2]);
    let npts = (g * ni + 1) * (g * nj + 1);

    let mut geom = Vec::with_capacity(npts);
    for _ in 0..npts {
        let line = lines
            .next()
            .ok_or_else(|| MeshError::Parse("truncated vertex list".into()))??;
        let mut it = line.split_whitespace();
        let x: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| MeshError::Parse(format!("bad vertex line `{line}`")))?;
        let y: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| MeshError::Parse(format!("bad vertex line `{line}`")))?;
        geom.push([x, y]);
    }

    let tag_line = lines
        .next()
        .ok_or_else(|| MeshError::Parse("missing tags line".into()))??;
    let rest = tag_line
        .strip_prefix("tags:")
        .ok_or_else(|| MeshError::Parse(format!("expected `tags:` line, got `{tag_line}`")))?;
    let tags: Vec<BoundaryTag> = rest
        .split_whitespace()
        .map(BoundaryTag::parse)
        .collect::<Result<_, _>>()?;
    if tags.len() != 4 {
        return Err(MeshError::Parse("expected four side tags".into()));
    }

    let mut overrides = BTreeMap::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 || tokens[0] != "override" {
            return Err(MeshError::Parse(format!("bad override line `{line}`")));
        }
        let i: usize = tokens[1]
            .parse()
            .map_err(|_| MeshError::Parse(format!("bad override line `{line}`")))?;
        let j: usize = tokens[2]
            .parse()
            .map_err(|_| MeshError::Parse(format!("bad override line `{line}`")))?;
        let f: usize = tokens[3]
            .parse()
            .map_err(|_| MeshError::Parse(format!("bad override line `{line}`")))?;
        let tag = BoundaryTag::parse(tokens[4])?;
        overrides.insert((j * ni + i, f), tag);
    }

    Ok(StructuredBlock {
        id,
        ni,
        nj,
        mapping_degree: g,
        geom,
        side_tags: [tags[0], tags[1], tags[2], tags[3]],
        face_tag_overrides: overrides,
        active: vec![true; ni * nj],
    })
}
