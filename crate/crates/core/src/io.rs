//! File formats: slip-system JSON, field CSVs and table CSVs.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::crystal::{SlipPlane, SlipSystemSet};
use crate::error::{Error, Result};
use crate::grid::{DisplacementField, FieldKind, GridSpec, SlipField};
use crate::linalg::Vec3;
use crate::scalar::{lit, to_f64, Real};

/// Serialises non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn ser_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneDoc {
    pub m: [f64; 3],
    pub burgers: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemsDoc {
    pub planes: Vec<PlaneDoc>,
}

impl SystemsDoc {
    pub fn to_systems<T: Real>(&self) -> SlipSystemSet<T> {
        SlipSystemSet::new(
            self.planes
                .iter()
                .map(|p| SlipPlane {
                    normal: Vec3::from_f64(p.m),
                    burgers: p.burgers.iter().map(|b| Vec3::from_f64(*b)).collect(),
                })
                .collect(),
        )
    }

    pub fn from_systems<T: Real>(set: &SlipSystemSet<T>) -> Self {
        Self {
            planes: set
                .planes
                .iter()
                .map(|p| PlaneDoc { m: p.normal.to_f64(), burgers: p.burgers.iter().map(|b| b.to_f64()).collect() })
                .collect(),
        }
    }
}

pub fn parse_systems<T: Real>(json: &str) -> Result<SlipSystemSet<T>> {
    let doc: SystemsDoc = serde_json::from_str(json)?;
    Ok(doc.to_systems())
}

pub fn systems_to_json<T: Real>(set: &SlipSystemSet<T>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SystemsDoc::from_systems(set))?)
}

#[derive(Debug, Serialize, Deserialize)]
struct SlipRow {
    x: f64,
    y: f64,
    z: f64,
    plane: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DispRow {
    x: f64,
    y: f64,
    z: f64,
    ux: f64,
    uy: f64,
    uz: f64,
}

fn locate<T: Real>(grid: &GridSpec<T>, x: [f64; 3]) -> Result<usize> {
    let mut idx = [0usize; 3];
    for k in 0..3 {
        let h = to_f64(grid.h(k));
        let xi = (x[k] - to_f64(grid.origin[k])) / h;
        let r = xi.round();
        if (xi - r).abs() > 1e-6 || r < 0.0 || r as usize >= grid.nodes[k] {
            return Err(Error::Parse(format!("point {x:?} is not a grid node")));
        }
        idx[k] = r as usize;
    }
    Ok(grid.index(idx))
}

/// Writes rows `x,y,z,plane,sx,sy,sz` for every nonzero slip (planes 0-based).
pub fn write_slip_csv<T: Real, W: Write>(sf: &SlipField<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for n in 0..sf.grid.len() {
        let x = sf.grid.position(n).to_f64();
        for (j, s) in sf.slips.iter().enumerate() {
            if s[n].norm_sq() != T::zero() {
                let v = s[n].to_f64();
                w.serialize(SlipRow { x: x[0], y: x[1], z: x[2], plane: j, sx: v[0], sy: v[1], sz: v[2] })?;
            }
        }
    }
    if sf.slips.iter().all(|s| s.iter().all(|v| v.norm_sq() == T::zero())) {
        w.write_record(["x", "y", "z", "plane", "sx", "sy", "sz"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_slip_csv<T: Real, R: Read>(grid: &GridSpec<T>, systems: &SlipSystemSet<T>, input: R) -> Result<SlipField<T>> {
    let mut r = csv::Reader::from_reader(input);
    let mut slips = vec![vec![Vec3::zero(); grid.len()]; systems.len()];
    for row in r.deserialize() {
        let row: SlipRow = row?;
        if row.plane >= systems.len() {
            return Err(Error::Parse(format!("plane index {} out of range", row.plane)));
        }
        let n = locate(grid, [row.x, row.y, row.z])?;
        slips[row.plane][n] = Vec3::new(lit(row.sx), lit(row.sy), lit(row.sz));
    }
    SlipField::new(grid.clone(), systems.clone(), slips)
}

/// Writes `x,y,z,ux,uy,uz` for every node (a displacement; deformations are
/// converted).
pub fn write_displacement_csv<T: Real, W: Write>(u: &DisplacementField<T>, out: W) -> Result<()> {
    let u = u.to_displacement();
    let mut w = csv::Writer::from_writer(out);
    for n in 0..u.grid.len() {
        let x = u.grid.position(n).to_f64();
        let v = u.values[n].to_f64();
        w.serialize(DispRow { x: x[0], y: x[1], z: x[2], ux: v[0], uy: v[1], uz: v[2] })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_displacement_csv<T: Real, R: Read>(grid: &GridSpec<T>, input: R) -> Result<DisplacementField<T>> {
    let mut r = csv::Reader::from_reader(input);
    let mut values = vec![Vec3::zero(); grid.len()];
    let mut seen = vec![false; grid.len()];
    for row in r.deserialize() {
        let row: DispRow = row?;
        let n = locate(grid, [row.x, row.y, row.z])?;
        values[n] = Vec3::new(lit(row.ux), lit(row.uy), lit(row.uz));
        seen[n] = true;
    }
    if let Some(n) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("displacement missing at node {n}")));
    }
    DisplacementField::new(grid.clone(), FieldKind::Displacement, values)
}

/// Serialises rows (with a header from the field names) as CSV.
pub fn write_table<S: Serialize, W: Write>(rows: &[S], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn systems_json_roundtrip() {
        let set = SlipSystemSet::<f64>::fcc4();
        let js = systems_to_json(&set).unwrap();
        let back: SlipSystemSet<f64> = parse_systems(&js).unwrap();
        assert_eq!(back, set);
        let inline: SlipSystemSet<f64> =
            parse_systems(r#"{"planes":[{"m":[0,0,1],"burgers":[[1,0,0],[0,1,0]]}]}"#).unwrap();
        assert_eq!(inline.len(), 1);
    }

    #[test]
    fn slip_csv_roundtrip() {
        let g = GridSpec::<f64>::new([0.0, -1.0, 0.5], [1.0, 2.0, 1.0], [3, 4, 2]).unwrap();
        let sys = SlipSystemSet::<f64>::ortho2();
        let sf = SlipField::from_fn(&g, &sys, |j, x| if (j == 0) == (x[0] < 0.6) { Vec3::new(x[1], 0.5, 0.0) } else { Vec3::zero() });
        let mut buf = Vec::new();
        write_slip_csv(&sf, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x,y,z,plane,sx,sy,sz\n"));
        let back = read_slip_csv(&g, &sys, buf.as_slice()).unwrap();
        assert_eq!(back, sf);
    }

    #[test]
    fn displacement_csv_roundtrip() {
        let g = GridSpec::<f64>::unit_cube(3).unwrap();
        let u = DisplacementField::from_fn(&g, FieldKind::Displacement, |x| Vec3::new(x[1], -x[0], 0.25));
        let mut buf = Vec::new();
        write_displacement_csv(&u, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x,y,z,ux,uy,uz\n"));
        assert_eq!(read_displacement_csv(&g, buf.as_slice()).unwrap(), u);
    }

    #[test]
    fn off_grid_points_rejected() {
        let g = GridSpec::<f64>::unit_cube(3).unwrap();
        let csv = "x,y,z,ux,uy,uz\n0.1,0,0,0,0,0\n";
        assert!(read_displacement_csv(&g, csv.as_bytes()).is_err());
    }
}
