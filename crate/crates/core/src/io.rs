//! Flat binary layout and CSV dumps for grid fields.
//!
//! Binary layout: magic `RDLF`, dim (u32), points per axis (u32), half width
//! (f64), collar width (f64), components per node (u32), time tag flag (u8)
//! plus value (f64), then the row-major payload as little-endian f64.

use std::io::{Read, Write};

use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField, Sym2Field};
use crate::grid::GridSpec;

const MAGIC: &[u8; 4] = b"RDLF";

pub fn write_raw(
    w: &mut impl Write,
    grid: &GridSpec,
    ncomp: usize,
    time_tag: Option<f64>,
    data: &[f64],
) -> Result<()> {
    debug_assert_eq!(data.len(), grid.n_nodes() * ncomp);
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim as u32).to_le_bytes())?;
    w.write_all(&(grid.points_per_axis as u32).to_le_bytes())?;
    w.write_all(&grid.half_width.to_le_bytes())?;
    w.write_all(&grid.collar_width.to_le_bytes())?;
    w.write_all(&(ncomp as u32).to_le_bytes())?;
    w.write_all(&[time_tag.is_some() as u8])?;
    w.write_all(&time_tag.unwrap_or(0.0).to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_raw(r: &mut impl Read) -> Result<(GridSpec, usize, Option<f64>, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let npts = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let half_width = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let collar = f64::from_le_bytes(b8);
    r.read_exact(&mut b4)?;
    let ncomp = u32::from_le_bytes(b4) as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    r.read_exact(&mut b8)?;
    let time = f64::from_le_bytes(b8);
    let grid = GridSpec::new(dim, half_width, npts, collar)?;
    let len = grid.n_nodes() * ncomp;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    Ok((grid, ncomp, (flag[0] != 0).then_some(time), data))
}

pub fn write_metric(w: &mut impl Write, g: &MetricField) -> Result<()> {
    write_raw(w, g.grid(), g.grid().sym_comps(), g.time_tag, &g.field.data)
}

pub fn read_metric(r: &mut impl Read) -> Result<MetricField> {
    let (grid, ncomp, time, data) = read_raw(r)?;
    if ncomp != grid.sym_comps() {
        return Err(CoreError::Format(format!(
            "expected {} components, file has {ncomp}",
            grid.sym_comps()
        )));
    }
    Ok(MetricField::from_sym2(Sym2Field { grid, data }, time))
}

pub fn write_scalar(w: &mut impl Write, f: &ScalarField) -> Result<()> {
    write_raw(w, &f.grid, 1, None, &f.data)
}

pub fn read_scalar(r: &mut impl Read) -> Result<ScalarField> {
    let (grid, ncomp, _, data) = read_raw(r)?;
    if ncomp != 1 {
        return Err(CoreError::Format(format!("expected scalar, got {ncomp} comps")));
    }
    Ok(ScalarField { grid, data })
}

/// Node-per-row CSV with coordinates followed by the components.
pub fn write_csv(
    w: &mut impl Write,
    grid: &GridSpec,
    ncomp: usize,
    data: &[f64],
    comp_names: &[&str],
) -> Result<()> {
    debug_assert_eq!(comp_names.len(), ncomp);
    let mut header = String::new();
    for a in 0..grid.dim {
        header.push_str(&format!("x{a},"));
    }
    header.push_str(&comp_names.join(","));
    writeln!(w, "{header}")?;
    for node in 0..grid.n_nodes() {
        let x = grid.node_coords(node);
        let mut row = String::new();
        for a in 0..grid.dim {
            row.push_str(&format!("{:.12e},", x[a]));
        }
        let comps: Vec<String> = (0..ncomp)
            .map(|c| format!("{:.12e}", data[node * ncomp + c]))
            .collect();
        row.push_str(&comps.join(","));
        writeln!(w, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_roundtrip() {
        let grid = GridSpec::new(2, 1.0, 17, 0.5).unwrap();
        let mut g = MetricField::flat(grid);
        g.field.set(12, 0, 1, 0.25);
        g.time_tag = Some(0.125);
        let mut buf = Vec::new();
        write_metric(&mut buf, &g).unwrap();
        let back = read_metric(&mut buf.as_slice()).unwrap();
        assert_eq!(back.time_tag, Some(0.125));
        assert_eq!(back.field.data, g.field.data);
    }

    #[test]
    fn scalar_roundtrip() {
        let grid = GridSpec::new(3, 2.0, 16, 1.1).unwrap();
        let f = ScalarField::from_fn(grid, |x| x[0] + 2.0 * x[1] - x[2]);
        let mut buf = Vec::new();
        write_scalar(&mut buf, &f).unwrap();
        let back = read_scalar(&mut buf.as_slice()).unwrap();
        assert_eq!(back.data, f.data);
    }

    #[test]
    fn rejects_garbage() {
        let buf = b"NOPE".to_vec();
        assert!(read_metric(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let grid = GridSpec::new(2, 1.0, 17, 0.5).unwrap();
        let f = ScalarField::zeros(grid);
        let mut buf = Vec::new();
        write_csv(&mut buf, &grid, 1, &f.data, &["v"]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), grid.n_nodes() + 1);
        assert!(text.starts_with("x0,x1,v"));
    }
}
