use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{planar_gradient, SlipField};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::{lit, to_f64, Real};

/// Oblique coordinates adapted to `(m1, m2, m1×m2)`.
///
/// The coordinates of a point are `x_i = a_i · x` with `a = (m1, m2, m̂3)`, so
/// `∂/∂x_i` is the derivative along the dual vector `d_i` (`d_i · a_k = δ_ik`).
/// `d1` and `d3` lie in `m2⊥`, `d2` and `d3` in `m1⊥`, which is what lets the
/// planar gradients control the coordinate derivatives.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameTransform<T> {
    pub theta: T,
    pub phi: T,
    pub psi: T,
    /// Columns: `m1`, `m2`, `m̂3` in the orthonormal frame obtained by
    /// shearing `m2` perpendicular to `m1`.
    pub m: Mat3<T>,
    pub basis: [Vec3<T>; 3],
    pub dual: [Vec3<T>; 3],
    /// Sharp per-plane constants: `1 / max_{|g|=1} (|d_a·g| + |d3·g|)` over
    /// `g` in the plane, with `a = 2` for plane 1 and `a = 1` for plane 2.
    pub c_planes: [T; 2],
    /// `min(c_planes)`: the constant used in the inequality.
    pub c: T,
    /// The cruder constant `1 / max(|d1| + |d3|, |d2| + |d3|)` from the plain
    /// triangle-inequality cascade.
    pub c_cascade: T,
}

impl<T: Real> FrameTransform<T> {
    pub fn from_normals(m1: Vec3<T>, m2: Vec3<T>) -> Result<Self> {
        let cross = m1.cross(m2);
        let sin = cross.norm();
        if sin < lit(1e-8) {
            return Err(Error::DegenerateNormals);
        }
        let cos = m1.dot(m2).max(-T::one()).min(T::one());
        let theta = cos.acos();
        // m̂3 is already perpendicular to the (m1, m2)-plane: no second shear.
        let (phi, psi) = (T::zero(), T::zero());
        let shear = Mat3([
            [T::one(), T::zero(), phi.sin() * psi.cos()],
            [T::zero(), T::one(), phi.sin() * psi.sin()],
            [T::zero(), T::zero(), phi.cos()],
        ]);
        let plane = Mat3([[T::one(), theta.cos(), T::zero()], [T::zero(), theta.sin(), T::zero()], [T::zero(), T::zero(), T::one()]]);
        let m = shear * plane;
        let minv = m.inverse().ok_or(Error::DegenerateNormals)?;
        // orthonormal frame in lab coordinates
        let o1 = m1;
        let o2 = (m2 - m1 * cos).normalized().ok_or(Error::DegenerateNormals)?;
        let o3 = cross * sin.recip();
        let to_lab = |v: [T; 3]| o1 * v[0] + o2 * v[1] + o3 * v[2];
        let basis = [to_lab(m.col(0).0), to_lab(m.col(1).0), to_lab(m.col(2).0)];
        let dual = [to_lab(minv.row(0).0), to_lab(minv.row(1).0), to_lab(minv.row(2).0)];
        let sharp = |a: Vec3<T>, b: Vec3<T>| ((a + b).norm().max((a - b).norm())).recip();
        let c_planes = [sharp(dual[1], dual[2]), sharp(dual[0], dual[2])];
        let c = c_planes[0].min(c_planes[1]);
        let c_cascade = ((dual[0].norm() + dual[2].norm()).max(dual[1].norm() + dual[2].norm())).recip();
        Ok(Self { theta, phi, psi, m, basis, dual, c_planes, c, c_cascade })
    }

    /// Adapted coordinates `(a_i · x)` of a lab point.
    pub fn coords(&self, x: Vec3<T>) -> [T; 3] {
        [self.basis[0].dot(x), self.basis[1].dot(x), self.basis[2].dot(x)]
    }

    pub fn point(&self, c: [T; 3]) -> Vec3<T> {
        self.dual[0] * c[0] + self.dual[1] * c[1] + self.dual[2] * c[2]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CurlBound {
    /// `∫ |∇_{m1⊥} s1| + |∇_{m2⊥} s2|`.
    pub lhs: f64,
    /// `∫ |∂_{x1} s2| + |∂_{x2} s1| + |∂_{x3} s2| + |∂_{x3} s1|`, which
    /// dominates the same sum with `|s_j|` in place of `s_j`.
    pub rhs: f64,
    pub terms: [f64; 4],
    pub c: f64,
    pub c_planes: [f64; 2],
    pub c_cascade: f64,
    /// `lhs − c·rhs`.
    pub margin: f64,
    pub pass: bool,
}

/// Evaluates both sides of the adapted-frame curl bound for planes
/// `planes = [i, j]` of `sf` (playing the roles of 1 and 2).
pub fn curl_lower_bound_check<T: Real>(sf: &SlipField<T>, planes: [usize; 2], tr: &FrameTransform<T>) -> Result<CurlBound> {
    let [i, j] = planes;
    if i == j || i >= sf.planes() || j >= sf.planes() {
        return Err(Error::Shape(format!("plane pair {planes:?} invalid")));
    }
    let tol = lit::<T>(1e-12);
    if (sf.systems.normal(i) - tr.basis[0]).norm() > tol || (sf.systems.normal(j) - tr.basis[1]).norm() > tol {
        return Err(Error::Config("transform was not built from the field's normals".into()));
    }
    let g = &sf.grid;
    let p1 = planar_gradient(sf, i)?;
    let p2 = planar_gradient(sf, j)?;
    // in-plane directional derivative from the planar gradient
    let along = |pg: &crate::grid::PlanarGradient<T>, d: Vec3<T>, n: usize| {
        (pg.d1[n] * d.dot(pg.frame.e1) + pg.d2[n] * d.dot(pg.frame.e2)).norm()
    };
    let lhs = g.integrate_cell(|n| p1.norm[n] + p2.norm[n]);
    let [d1, d2, d3] = tr.dual;
    let terms = [
        g.integrate_cell(|n| along(&p2, d1, n)),
        g.integrate_cell(|n| along(&p1, d2, n)),
        g.integrate_cell(|n| along(&p2, d3, n)),
        g.integrate_cell(|n| along(&p1, d3, n)),
    ];
    let rhs = terms.iter().copied().fold(T::zero(), |a, b| a + b);
    let margin = lhs - tr.c * rhs;
    let pass = margin >= -lit::<T>(1e-10) * lhs.max(T::one());
    Ok(CurlBound {
        lhs: to_f64(lhs),
        rhs: to_f64(rhs),
        terms: terms.map(to_f64),
        c: to_f64(tr.c),
        c_planes: tr.c_planes.map(to_f64),
        c_cascade: to_f64(tr.c_cascade),
        margin: to_f64(margin),
        pass,
    })
}
