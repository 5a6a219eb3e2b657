use serde::Serialize;

use super::curl::FrameTransform;
use crate::error::{Error, Result};
use crate::grid::{check_single_plane, GridSpec, SlipField};
use crate::linalg::Vec3;
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Parallelepipeds `C_i`, given as coordinate ranges in the adapted
/// coordinates of `transform`, plus the in-plane extent bound `l` and the
/// mixing threshold `δ`.
#[derive(Clone, Debug, Serialize)]
pub struct BoxCover<T> {
    pub transform: FrameTransform<T>,
    pub boxes: Vec<[[T; 2]; 3]>,
    pub l: T,
    pub delta: T,
}

impl<T: Real> BoxCover<T> {
    /// Tiles the coordinate bounding box of the domain with boxes of side `l`
    /// and keeps those lying inside the domain.
    pub fn uniform(grid: &GridSpec<T>, transform: FrameTransform<T>, l: T, delta: T) -> Result<Self> {
        if !(l > T::zero()) {
            return Err(Error::InvalidCover("l must be > 0".into()));
        }
        let corners: Vec<Vec3<T>> = (0..8)
            .map(|c| {
                let mut x = Vec3::zero();
                for k in 0..3 {
                    x[k] = grid.origin[k] + if c & (1 << k) != 0 { grid.extents[k] } else { T::zero() };
                }
                x
            })
            .collect();
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for x in &corners {
            let c = transform.coords(*x);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        let count = |a: usize| ((hi[a] - lo[a]) / l - lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
        let (n1, n2, n3) = (count(0), count(1), count(2));
        let slack = lit::<T>(1e-9) * grid.extents.iter().fold(T::zero(), |a, b| a.max(*b));
        let inside = |x: Vec3<T>| (0..3).all(|k| x[k] >= grid.origin[k] - slack && x[k] <= grid.origin[k] + grid.extents[k] + slack);
        let mut boxes = Vec::new();
        for i3 in 0..n3 {
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    let idx = [i1, i2, i3];
                    let b: [[T; 2]; 3] = std::array::from_fn(|a| {
                        let s = lo[a] + from_usize::<T>(idx[a]) * l;
                        [s, (s + l).min(hi[a])]
                    });
                    let all_in = (0..8).all(|c| {
                        let p = transform.point(std::array::from_fn(|a| b[a][(c >> a) & 1]));
                        inside(p)
                    });
                    if all_in {
                        boxes.push(b);
                    }
                }
            }
        }
        let cover = Self { transform, boxes, l, delta };
        cover.validate()?;
        Ok(cover)
    }

    pub fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() {
            return Err(Error::InvalidCover("no box fits inside the domain".into()));
        }
        if !(self.delta > T::zero()) {
            return Err(Error::InvalidCover("delta must be > 0".into()));
        }
        let slack = self.l * lit(1e-12);
        for (i, b) in self.boxes.iter().enumerate() {
            if b.iter().any(|r| !(r[1] > r[0])) {
                return Err(Error::InvalidCover(format!("box {i} is empty")));
            }
            if b[0][1] - b[0][0] > self.l + slack || b[1][1] - b[1][0] > self.l + slack {
                return Err(Error::InvalidCover(format!("box {i} exceeds the in-plane extent l")));
            }
        }
        for i in 0..self.boxes.len() {
            for j in i + 1..self.boxes.len() {
                let (a, b) = (&self.boxes[i], &self.boxes[j]);
                if (0..3).all(|k| a[k][0].max(b[k][0]) < a[k][1].min(b[k][1]) - slack) {
                    return Err(Error::InvalidCover(format!("boxes {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SliceRecord {
    pub cell: usize,
    pub slice: usize,
    pub omega1_empty: bool,
    pub omega2_empty: bool,
    /// `∬_Q |s1|`, `∬_Q |s2|`.
    pub mass1: f64,
    pub mass2: f64,
    /// `∬_Q |∂_{x2}|s1||`, `∬_Q |∂_{x1}|s2||`.
    pub var1: f64,
    pub var2: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExclusionReport {
    pub slices: usize,
    pub failed_slices: usize,
    /// Slices where neither ω set is empty (impossible for feasible fields).
    pub omega_violations: usize,
    pub mixing_cells: usize,
    /// `∫_V |∂_{x1}|s2|| + |∂_{x2}|s1||`.
    pub lhs: f64,
    /// `(1/l) ∫ Σ_i min(a_i(t), b_i(t)) dt` over mixing cells.
    pub rhs_sliced: f64,
    /// `Σ_i min(∫a_i, ∫b_i)` over mixing cells.
    pub min_sum: f64,
    /// `∫ Σ_i min(a_i, b_i) / Σ_i min(∫a_i, ∫b_i)` (1 when the latter is 0).
    pub c_empirical: f64,
    pub l: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<SliceRecord>,
}

fn nearest<T: Real>(grid: &GridSpec<T>, x: Vec3<T>) -> usize {
    let idx: [usize; 3] = std::array::from_fn(|k| {
        let r = ((x[k] - grid.origin[k]) / grid.h(k)).round().max(T::zero());
        r.to_usize().unwrap_or(0).min(grid.nodes[k] - 1)
    });
    grid.index(idx)
}

/// Slice-by-slice exclusion inequality for planes `planes = [i, j]` of a
/// feasible field. Samples are nearest-node values on a cell-centred
/// lattice of lab spacing at most `min h` per box, so the single-plane
/// condition carries over to the samples exactly.
pub fn exclusion_check<T: Real>(
    sf: &SlipField<T>,
    planes: [usize; 2],
    cover: &BoxCover<T>,
    keep_records: bool,
) -> Result<ExclusionReport> {
    let feas = check_single_plane(sf, None);
    if !feas.feasible {
        return Err(feas.infeasible_error());
    }
    cover.validate()?;
    let [pi, pj] = planes;
    if pi == pj || pi >= sf.planes() || pj >= sf.planes() {
        return Err(Error::Shape(format!("plane pair {planes:?} invalid")));
    }
    let tr = &cover.transform;
    let tol = lit::<T>(1e-12);
    if (sf.systems.normal(pi) - tr.basis[0]).norm() > tol || (sf.systems.normal(pj) - tr.basis[1]).norm() > tol {
        return Err(Error::Config("cover was not built from the field's normals".into()));
    }
    let grid = &sf.grid;
    let hmin = grid.spacings().into_iter().fold(T::infinity(), T::min);
    let l = cover.l;
    let inv_l = l.recip();
    let mut rep = ExclusionReport {
        slices: 0,
        failed_slices: 0,
        omega_violations: 0,
        mixing_cells: 0,
        lhs: 0.0,
        rhs_sliced: 0.0,
        min_sum: 0.0,
        c_empirical: 1.0,
        l: to_f64(l),
        pass: true,
        records: Vec::new(),
    };
    let mut lhs = T::zero();
    let mut rhs_sliced = T::zero();
    let mut min_sum = T::zero();
    let mut sliced_min = T::zero();
    for (ci, b) in cover.boxes.iter().enumerate() {
        let n: [usize; 3] = std::array::from_fn(|a| {
            let ext = (b[a][1] - b[a][0]) * tr.dual[a].norm();
            (ext / hmin).ceil().to_usize().unwrap_or(1).max(2)
        });
        let d: [T; 3] = std::array::from_fn(|a| (b[a][1] - b[a][0]) / from_usize(n[a]));
        let (mut a_t, mut b_t) = (Vec::with_capacity(n[2]), Vec::with_capacity(n[2]));
        let (mut var_box, mut m1_box, mut m2_box) = (T::zero(), T::zero(), T::zero());
        for k3 in 0..n[2] {
            let x3 = b[2][0] + (from_usize::<T>(k3) + lit(0.5)) * d[2];
            let mut s1 = vec![T::zero(); n[0] * n[1]];
            let mut s2 = vec![T::zero(); n[0] * n[1]];
            for k2 in 0..n[1] {
                let x2 = b[1][0] + (from_usize::<T>(k2) + lit(0.5)) * d[1];
                for k1 in 0..n[0] {
                    let x1 = b[0][0] + (from_usize::<T>(k1) + lit(0.5)) * d[0];
                    let node = nearest(grid, tr.point([x1, x2, x3]));
                    s1[k2 * n[0] + k1] = sf.slips[pi][node].norm();
                    s2[k2 * n[0] + k1] = sf.slips[pj][node].norm();
                }
            }
            let at = |v: &[T], k1: usize, k2: usize| v[k2 * n[0] + k1];
            let omega1 = (0..n[0]).any(|k1| (0..n[1]).all(|k2| at(&s1, k1, k2) > T::zero()));
            let omega2 = (0..n[1]).any(|k2| (0..n[0]).all(|k1| at(&s2, k1, k2) > T::zero()));
            let area = d[0] * d[1];
            let mass1 = s1.iter().fold(T::zero(), |a, v| a + *v) * area;
            let mass2 = s2.iter().fold(T::zero(), |a, v| a + *v) * area;
            let mut var1 = T::zero();
            for k1 in 0..n[0] {
                for k2 in 0..n[1] - 1 {
                    var1 += (at(&s1, k1, k2 + 1) - at(&s1, k1, k2)).abs();
                }
            }
            var1 = var1 * d[0];
            let mut var2 = T::zero();
            for k2 in 0..n[1] {
                for k1 in 0..n[0] - 1 {
                    var2 += (at(&s2, k1 + 1, k2) - at(&s2, k1, k2)).abs();
                }
            }
            var2 = var2 * d[1];
            let slack = tol * (mass1 + mass2).max(T::min_positive_value());
            let holds = var2 >= mass2 * inv_l - slack || var1 >= mass1 * inv_l - slack;
            rep.slices += 1;
            if !holds {
                rep.failed_slices += 1;
            }
            if omega1 && omega2 {
                rep.omega_violations += 1;
            }
            if keep_records {
                rep.records.push(SliceRecord {
                    cell: ci,
                    slice: k3,
                    omega1_empty: !omega1,
                    omega2_empty: !omega2,
                    mass1: to_f64(mass1),
                    mass2: to_f64(mass2),
                    var1: to_f64(var1),
                    var2: to_f64(var2),
                    holds,
                });
            }
            var_box += (var1 + var2) * d[2];
            m1_box += mass1 * d[2];
            m2_box += mass2 * d[2];
            a_t.push(mass1);
            b_t.push(mass2);
        }
        lhs += var_box;
        let vol = (b[0][1] - b[0][0]) * (b[1][1] - b[1][0]) * (b[2][1] - b[2][0]);
        // S' ∩ C_i: the whole cell when both mean slip magnitudes reach δ
        if m1_box / vol >= cover.delta && m2_box / vol >= cover.delta {
            rep.mixing_cells += 1;
            let s = a_t.iter().zip(&b_t).fold(T::zero(), |acc, (a, b)| acc + a.min(*b)) * d[2];
            sliced_min += s;
            rhs_sliced += s * inv_l;
            min_sum += m1_box.min(m2_box);
        }
    }
    rep.lhs = to_f64(lhs);
    rep.rhs_sliced = to_f64(rhs_sliced);
    rep.min_sum = to_f64(min_sum);
    rep.c_empirical = if min_sum > T::zero() { to_f64(sliced_min / min_sum) } else { 1.0 };
    let global = lhs >= rhs_sliced - tol * lhs.max(T::one());
    rep.pass = rep.failed_slices == 0 && rep.omega_violations == 0 && global;
    Ok(rep)
}
