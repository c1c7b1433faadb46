//! Output writers: legacy-ASCII VTK per grid, centerline CSV, run-summary
//! text, the convergence table, and the nodal field save/restart format.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::basis::NodalBasis;
use crate::dg::Field;
use crate::euler::GasModel;
use crate::mesh::StructuredBlock;

use super::vortex::ConvergenceTable;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("field file parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Legacy-ASCII VTK unstructured grid with cell-vertex rho, u, v, p, M.
/// Each element contributes its four corners (fields are discontinuous, so
/// points are duplicated per element).
pub fn write_vtk(
    block: &StructuredBlock,
    field: &Field,
    basis: &NodalBasis,
    gas: GasModel,
    path: &Path,
) -> Result<(), OutputError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let active: Vec<usize> = (0..block.num_elems()).filter(|&e| block.active[e]).collect();
    let npts = active.len() * 4;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "overdg solution grid {}", block.id)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {npts} double")?;
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    for &e in &active {
        for &(r, s) in &corners {
            let p = block.map_eval(e, r, s);
            writeln!(w, "{:.9e} {:.9e} 0.0", p[0], p[1])?;
        }
    }
    writeln!(w, "CELLS {} {}", active.len(), active.len() * 5)?;
    for (k, _) in active.iter().enumerate() {
        let b = 4 * k;
        writeln!(w, "4 {} {} {} {}", b, b + 1, b + 2, b + 3)?;
    }
    writeln!(w, "CELL_TYPES {}", active.len())?;
    for _ in &active {
        writeln!(w, "9")?; // VTK_QUAD
    }
    writeln!(w, "POINT_DATA {npts}")?;
    let mut values = vec![[0.0f64; 5]; npts];
    for (k, &e) in active.iter().enumerate() {
        for (c, &(r, s)) in corners.iter().enumerate() {
            let q = field.eval(basis, e, r, s);
            let prim = q.to_prim(gas).unwrap_or(crate::euler::PrimState::new(
                q.rho,
                q.u(),
                q.v(),
                0.0,
            ));
            let mach = if prim.p > 0.0 { prim.mach(gas) } else { 0.0 };
            values[4 * k + c] = [prim.rho, prim.u, prim.v, prim.p, mach];
        }
    }
    for (name, idx) in [("rho", 0), ("u", 1), ("v", 2), ("p", 3), ("mach", 4)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in &values {
            writeln!(w, "{:.9e}", v[idx])?;
        }
    }
    Ok(())
}

/// Centerline CSV: `x,mach,rho,p` rows.
pub fn write_centerline_csv(samples: &[super::measure::LineSample], path: &Path) -> Result<(), OutputError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "x,mach,rho,p")?;
    for s in samples {
        writeln!(w, "{:.12e},{:.12e},{:.12e},{:.12e}", s.x, s.mach, s.rho, s.p)?;
    }
    Ok(())
}

/// Run summary as `key: value` lines, measurements sorted by key.
pub fn write_summary(
    entries: &[(String, String)],
    path: &Path,
) -> Result<(), OutputError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for (k, v) in entries {
        writeln!(w, "{k}: {v}")?;
    }
    Ok(())
}

/// Convergence results as an aligned text table.
pub fn format_convergence_table(table: &ConvergenceTable) -> String {
    let mut s = String::new();
    use std::fmt::Write;
    let _ = writeln!(
        s,
        "P{}   {:>8} {:>13} {:>7} {:>13} {:>7}",
        table.degree, "grid", "L2 plain", "order", "L2 overset", "order"
    );
    for row in &table.rows {
        let fmt_ord = |o: Option<f64>| o.map_or("    -".to_string(), |v| format!("{v:5.2}"));
        let _ = writeln!(
            s,
            "     {:>8} {:>13.3e} {:>7} {:>13.3e} {:>7}",
            format!("1/{}", row.inv_h / 2),
            row.error_plain,
            fmt_ord(row.order_plain),
            row.error_overset,
            fmt_ord(row.order_overset),
        );
    }
    s
}

/// Save nodal coefficients: header `field <grid_id> <degree> <ni> <nj>`, then
/// one `%.17e`-formatted line of 4 values per node in element-major order
/// (inactive elements included as stored).
pub fn write_field(
    field: &Field,
    block: &StructuredBlock,
    path: &Path,
) -> Result<(), OutputError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "field {} {} {} {}",
        field.grid_id, field.degree, block.ni, block.nj
    )?;
    for chunk in field.data.chunks(4) {
        writeln!(
            w,
            "{:.17e} {:.17e} {:.17e} {:.17e}",
            chunk[0], chunk[1], chunk[2], chunk[3]
        )?;
    }
    Ok(())
}

pub fn read_field(path: &Path, block: &StructuredBlock) -> Result<Field, OutputError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| OutputError::Parse("empty field file".into()))??;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != "field" {
        return Err(OutputError::Parse(format!("bad header `{header}`")));
    }
    let grid_id: usize = toks[1].parse().map_err(|_| OutputError::Parse(header.clone()))?;
    let degree: usize = toks[2].parse().map_err(|_| OutputError::Parse(header.clone()))?;
    let ni: usize = toks[3].parse().map_err(|_| OutputError::Parse(header.clone()))?;
    let nj: usize = toks[4].parse().map_err(|_| OutputError::Parse(header.clone()))?;
    if (ni, nj) != (block.ni, block.nj) {
        return Err(OutputError::Parse(format!(
            "field dimensions {ni}x{nj} do not match block {}x{}",
            block.ni, block.nj
        )));
    }
    let mut field = Field::new(grid_id, degree, ni * nj);
    let mut cursor = 0;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split_whitespace() {
            if cursor >= field.data.len() {
                return Err(OutputError::Parse("too many values".into()));
            }
            field.data[cursor] = tok
                .parse()
                .map_err(|_| OutputError::Parse(format!("bad value `{tok}`")))?;
            cursor += 1;
        }
    }
    if cursor != field.data.len() {
        return Err(OutputError::Parse(format!(
            "expected {} values, got {cursor}",
            field.data.len()
        )));
    }
    Ok(field)
}

/// Standard artifact paths inside an output directory.
pub fn artifact_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
