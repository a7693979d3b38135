//! Field serialization.
//!
//! CSV: one row per grid point with columns `i0..i{n-1}, x0..x{n-1}, v0..v{d-1}`.
//!
//! Binary (little-endian):
//! ```text
//! magic   b"ABFT"
//! version u32 (= 1)
//! n       u32
//! m       u32
//! res     n x u32
//! dim     u32           number of components
//! data    dim x len x f64, component-major, each block row-major
//! ```

use std::io::{Read, Write};

use super::field::{ScalarField, VectorField};
use super::grid::TorusGrid;
use crate::error::{contract, Result};

pub const MAGIC: &[u8; 4] = b"ABFT";
pub const VERSION: u32 = 1;

pub fn write_csv<W: Write>(field: &VectorField, out: W) -> Result<()> {
    let grid = field.grid();
    let n = grid.n();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..n).map(|a| format!("i{a}")).collect();
    header.extend((0..n).map(|a| format!("x{a}")));
    header.extend((0..field.dim()).map(|c| format!("v{c}")));
    w.write_record(&header)?;
    for flat in 0..grid.len() {
        let mut row: Vec<String> = grid.multi_index(flat).iter().map(|i| i.to_string()).collect();
        row.extend(grid.coords(flat).iter().map(|x| format!("{x:.17e}")));
        row.extend(field.at(flat).iter().map(|v| format!("{v:.17e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scalar_csv<W: Write>(field: &ScalarField, out: W) -> Result<()> {
    write_csv(&VectorField::from_scalars(vec![field.clone()])?, out)
}

pub fn write_binary<W: Write>(field: &VectorField, mut out: W) -> Result<()> {
    let grid = field.grid();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(grid.n() as u32).to_le_bytes())?;
    out.write_all(&(grid.m() as u32).to_le_bytes())?;
    for &r in grid.resolution() {
        out.write_all(&(r as u32).to_le_bytes())?;
    }
    out.write_all(&(field.dim() as u32).to_le_bytes())?;
    for comp in field.components() {
        for v in comp {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut input: R) -> Result<VectorField> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return contract("not an ABFT field file");
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return contract(format!("unsupported field file version {version}"));
    }
    let n = read_u32(&mut input)? as usize;
    let m = read_u32(&mut input)? as usize;
    if n == 0 || n > 8 {
        return contract(format!("implausible dimension {n} in field header"));
    }
    let res = (0..n)
        .map(|_| read_u32(&mut input).map(|r| r as usize))
        .collect::<Result<Vec<_>>>()?;
    let grid = TorusGrid::new(&res, m)?;
    let dim = read_u32(&mut input)? as usize;
    let mut comps = vec![vec![0.0; grid.len()]; dim];
    let mut b = [0u8; 8];
    for comp in &mut comps {
        for v in comp.iter_mut() {
            input.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
    }
    VectorField::new(grid, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e6f64..1e6, 24)) {
            let g = TorusGrid::new(&[4, 3], 1).unwrap();
            let f = VectorField::new(g, vec![vals[..12].to_vec(), vals[12..].to_vec()]).unwrap();
            let mut buf = Vec::new();
            write_binary(&f, &mut buf).unwrap();
            let back = read_binary(buf.as_slice()).unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn header_layout() {
        let g = TorusGrid::new(&[4, 2], 1).unwrap();
        let f = VectorField::zeros(&g, 1);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(&buf[0..4], b"ABFT");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 28 + 8 * 8);
        assert!(read_binary(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn csv_has_header_and_one_row_per_point() {
        let g = TorusGrid::new(&[4, 2], 1).unwrap();
        let f = ScalarField::from_fn(&g, |p| p[0] + p[1]);
        let mut buf = Vec::new();
        write_scalar_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i0,i1,x0,x1,v0");
        assert_eq!(lines.len(), 9);
    }
}
