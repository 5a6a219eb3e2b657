//! Slip-system geometry: validation, adapted frames, and the decomposition of
//! a plastic distortion into per-plane slips.

use crate::error::{Error, Result};
use crate::linalg::{least_squares, smallest_singular_value, Mat3, Vec3};
use crate::scalar::{lit, tol, to_f64, Real};

/// One slip plane: unit normal `m` and in-plane unit Burgers directions.
#[derive(Clone, Debug, PartialEq)]
pub struct SlipPlane<T> {
    pub normal: Vec3<T>,
    pub burgers: Vec<Vec3<T>>,
}

/// Ordered set of slip planes.
#[derive(Clone, Debug, PartialEq)]
pub struct SlipSystemSet<T> {
    pub planes: Vec<SlipPlane<T>>,
}

impl<T: Real> SlipSystemSet<T> {
    pub fn new(planes: Vec<SlipPlane<T>>) -> Self {
        Self { planes }
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn normal(&self, j: usize) -> Vec3<T> {
        self.planes[j].normal
    }

    pub fn normals(&self) -> Vec<Vec3<T>> {
        self.planes.iter().map(|p| p.normal).collect()
    }

    /// The four {111} planes of the f.c.c. lattice, two <110> directions each.
    pub fn fcc4() -> Self {
        let r3 = lit::<T>(3.0).sqrt().recip();
        let r2 = lit::<T>(2.0).sqrt().recip();
        let n = |a: [f64; 3]| Vec3::from_f64(a) * r3;
        let b = |a: [f64; 3]| Vec3::from_f64(a) * r2;
        Self::new(vec![
            SlipPlane {
                normal: n([1.0, 1.0, 1.0]),
                burgers: vec![b([1.0, -1.0, 0.0]), b([0.0, 1.0, -1.0])],
            },
            SlipPlane {
                normal: n([1.0, -1.0, 1.0]),
                burgers: vec![b([1.0, 1.0, 0.0]), b([0.0, 1.0, 1.0])],
            },
            SlipPlane {
                normal: n([-1.0, 1.0, 1.0]),
                burgers: vec![b([1.0, 1.0, 0.0]), b([1.0, 0.0, 1.0])],
            },
            SlipPlane {
                normal: n([1.0, 1.0, -1.0]),
                burgers: vec![b([1.0, -1.0, 0.0]), b([1.0, 0.0, 1.0])],
            },
        ])
    }

    /// Two orthogonal planes, `m1 = e3` and `m2 = e2`.
    pub fn ortho2() -> Self {
        let e = Vec3::<T>::axis;
        Self::new(vec![
            SlipPlane { normal: e(2), burgers: vec![e(0), e(1)] },
            SlipPlane { normal: e(1), burgers: vec![e(0), e(2)] },
        ])
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fcc4" => Some(Self::fcc4()),
            "ortho2" => Some(Self::ortho2()),
            _ => None,
        }
    }

    /// The first two Burgers directions of every plane.
    pub fn default_pairs(&self) -> Result<Vec<BurgersPair<T>>> {
        self.planes
            .iter()
            .map(|p| match p.burgers.as_slice() {
                [b1, b2, ..] => BurgersPair::new(*b1, *b2),
                _ => Err(Error::MissingPairs),
            })
            .collect()
    }
}

/// Outcome of [`validate_systems`]; each list holds the offending indices.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub non_unit_normals: Vec<usize>,
    /// `(plane, burgers)` pairs with `b · m != 0`.
    pub non_orthogonal_burgers: Vec<(usize, usize)>,
    pub dependent_subsets: Vec<Vec<usize>>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.non_unit_normals.is_empty()
            && self.non_orthogonal_burgers.is_empty()
            && self.dependent_subsets.is_empty()
    }
}

pub fn validate_systems<T: Real>(set: &SlipSystemSet<T>) -> ValidationReport {
    let eps = tol::<T>(1e-12);
    let mut report = ValidationReport::default();
    for (j, plane) in set.planes.iter().enumerate() {
        if (plane.normal.norm() - T::one()).abs() > eps {
            report.non_unit_normals.push(j);
        }
        for (i, b) in plane.burgers.iter().enumerate() {
            if b.dot(plane.normal).abs() > eps {
                report.non_orthogonal_burgers.push((j, i));
            }
        }
    }
    report.dependent_subsets = dependent_subsets(&set.normals());
    report
}

/// Subsets of at most three normals whose stacked matrix is (numerically)
/// singular. Only meaningful for `N <= 4`; larger sets return no subsets.
fn dependent_subsets<T: Real>(normals: &[Vec3<T>]) -> Vec<Vec<usize>> {
    let n = normals.len();
    if n > 4 {
        return Vec::new();
    }
    let floor = lit::<T>(1e-8);
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        if mask.count_ones() > 3 {
            continue;
        }
        let idx: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let vs: Vec<Vec3<T>> = idx.iter().map(|&j| normals[j]).collect();
        if smallest_singular_value(&vs) <= floor {
            out.push(idx);
        }
    }
    out
}

/// Right-handed orthonormal triple `(m, e1, e2)` with `e1 × e2 = m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptedFrame<T> {
    pub m: Vec3<T>,
    pub e1: Vec3<T>,
    pub e2: Vec3<T>,
}

impl<T: Real> AdaptedFrame<T> {
    /// In-plane coordinates `(s · e1, s · e2)`.
    pub fn in_plane_coords(&self, s: Vec3<T>) -> (T, T) {
        (s.dot(self.e1), s.dot(self.e2))
    }

    pub fn from_in_plane(&self, a: T, b: T) -> Vec3<T> {
        self.e1 * a + self.e2 * b
    }

    /// Removes the component of `v` along `m`.
    pub fn project(&self, v: Vec3<T>) -> Vec3<T> {
        v - self.m * v.dot(self.m)
    }
}

/// Deterministic frame for a unit normal: `e1` is the projection onto `m⊥` of
/// the coordinate axis least aligned with `m` (lowest index on ties), and
/// `e2 = m × e1`.
pub fn adapted_frame<T: Real>(m: Vec3<T>) -> Result<AdaptedFrame<T>> {
    let n = m.norm();
    if !n.is_finite() || (n - T::one()).abs() > tol::<T>(1e-12) {
        return Err(Error::NonUnitNormal { norm: to_f64(n) });
    }
    let mut best = 0;
    for k in 1..3 {
        if m[k].abs() < m[best].abs() {
            best = k;
        }
    }
    let a = Vec3::axis(best);
    let e1 = (a - m * a.dot(m)).normalized().expect("least-aligned axis is never parallel to m");
    let e2 = m.cross(e1);
    Ok(AdaptedFrame { m, e1, e2 })
}

/// Unique slips `s_j ⊥ m_j` with `Σ_j s_j ⊗ m_j = beta`.
pub fn decompose_beta<T: Real>(beta: &Mat3<T>, set: &SlipSystemSet<T>) -> Result<Vec<Vec3<T>>> {
    let n = set.len();
    if n > 4 {
        return Err(Error::TooManyPlanes { planes: n });
    }
    if let Some(idx) = dependent_subsets(&set.normals()).into_iter().next() {
        return Err(Error::DependentNormals { indices: idx });
    }
    let frames = set
        .planes
        .iter()
        .map(|p| adapted_frame(p.normal))
        .collect::<Result<Vec<_>>>()?;
    let beta_norm = beta.norm();
    if n == 0 {
        return if beta_norm == T::zero() {
            Ok(Vec::new())
        } else {
            Err(Error::NotRepresentable { residual: f64::INFINITY })
        };
    }
    // columns: vec(e1_j ⊗ m_j), vec(e2_j ⊗ m_j)
    let basis: Vec<Mat3<T>> = frames
        .iter()
        .flat_map(|f| [f.e1.outer(f.m), f.e2.outer(f.m)])
        .collect();
    let rows: Vec<Vec<T>> = (0..9)
        .map(|r| basis.iter().map(|b| b.0[r / 3][r % 3]).collect())
        .collect();
    let rhs: Vec<T> = (0..9).map(|r| beta.0[r / 3][r % 3]).collect();
    let (x, resid) = least_squares(&rows, &rhs).ok_or(Error::DependentNormals {
        indices: (0..n).collect(),
    })?;
    let rel = if beta_norm > T::zero() { resid / beta_norm } else { resid };
    if rel > tol::<T>(1e-10) || !rel.is_finite() {
        return Err(Error::NotRepresentable { residual: to_f64(rel) });
    }
    Ok(frames
        .iter()
        .enumerate()
        .map(|(j, f)| f.from_in_plane(x[2 * j], x[2 * j + 1]))
        .collect())
}

/// Two linearly independent in-plane Burgers directions of one plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurgersPair<T> {
    pub b1: Vec3<T>,
    pub b2: Vec3<T>,
}

impl<T: Real> BurgersPair<T> {
    pub fn new(b1: Vec3<T>, b2: Vec3<T>) -> Result<Self> {
        let n1 = b1.norm();
        let n2 = b2.norm();
        if n1 == T::zero() || n2 == T::zero() {
            return Err(Error::NearParallelBurgers { angle: 0.0 });
        }
        let sin = b1.cross(b2).norm() / (n1 * n2);
        let angle = sin.min(T::one()).asin();
        if angle < lit(1e-6) {
            return Err(Error::NearParallelBurgers { angle: to_f64(angle) });
        }
        Ok(Self { b1, b2 })
    }

    pub fn coeffs(&self, s: Vec3<T>) -> Result<(T, T)> {
        slip_to_coeffs(s, self.b1, self.b2)
    }

    pub fn slip(&self, c1: T, c2: T) -> Vec3<T> {
        coeffs_to_slip(c1, c2, self.b1, self.b2)
    }
}

/// Coefficients `(c1, c2)` with `c1 b1 + c2 b2 = s`.
pub fn slip_to_coeffs<T: Real>(s: Vec3<T>, b1: Vec3<T>, b2: Vec3<T>) -> Result<(T, T)> {
    let g11 = b1.dot(b1);
    let g12 = b1.dot(b2);
    let g22 = b2.dot(b2);
    let det = g11 * g22 - g12 * g12;
    let sin2 = det / (g11 * g22);
    if !(sin2 > lit::<T>(1e-12)) {
        return Err(Error::NearParallelBurgers {
            angle: to_f64(sin2.max(T::zero()).sqrt().asin()),
        });
    }
    let r1 = b1.dot(s);
    let r2 = b2.dot(s);
    let c1 = (g22 * r1 - g12 * r2) / det;
    let c2 = (g11 * r2 - g12 * r1) / det;
    let residual = (coeffs_to_slip(c1, c2, b1, b2) - s).norm();
    if residual > tol::<T>(1e-10) * s.norm().max(T::one()) {
        return Err(Error::NotInPairSpan { residual: to_f64(residual) });
    }
    Ok((c1, c2))
}

pub fn coeffs_to_slip<T: Real>(c1: T, c2: T, b1: Vec3<T>, b2: Vec3<T>) -> Vec3<T> {
    b1 * c1 + b2 * c2
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type V = Vec3<f64>;

    #[test]
    fn fcc_and_ortho_presets_validate() {
        assert!(validate_systems(&SlipSystemSet::<f64>::fcc4()).passed());
        assert!(validate_systems(&SlipSystemSet::<f64>::ortho2()).passed());
    }

    #[test]
    fn repeated_normal_fails_independence() {
        let e = V::axis;
        let set = SlipSystemSet::new(vec![
            SlipPlane { normal: e(0), burgers: vec![e(1)] },
            SlipPlane { normal: e(0), burgers: vec![e(2)] },
        ]);
        let r = validate_systems(&set);
        assert!(!r.passed());
        assert_eq!(r.dependent_subsets, vec![vec![0, 1]]);
    }

    #[test]
    fn burgers_along_normal_fails_orthogonality() {
        let m = V::axis(2);
        let set = SlipSystemSet::new(vec![SlipPlane { normal: m, burgers: vec![V::axis(0), m] }]);
        let r = validate_systems(&set);
        assert_eq!(r.non_orthogonal_burgers, vec![(0, 1)]);
        assert!(!r.passed());
    }

    #[test]
    fn axis_aligned_frames() {
        let f = adapted_frame(V::axis(2)).unwrap();
        assert_eq!(f.e1, V::axis(0));
        assert_eq!(f.e2, V::axis(1));
        let f = adapted_frame(V::axis(0)).unwrap();
        assert_eq!(f.e1, V::axis(1));
        assert_eq!(f.e2, V::axis(2));
    }

    fn frame_residual(f: &AdaptedFrame<f64>) -> f64 {
        let v = [f.m, f.e1, f.e2];
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for k in 0..3 {
                let target = if i == k { 1.0 } else { 0.0 };
                worst = worst.max((v[i].dot(v[k]) - target).abs());
            }
        }
        worst.max((f.e1.cross(f.e2) - f.m).norm())
    }

    #[test]
    fn diagonal_frame_is_orthonormal() {
        let m = V::new(1.0, 1.0, 1.0) * (1.0 / 3f64.sqrt());
        let f = adapted_frame(m).unwrap();
        assert!(frame_residual(&f) < 1e-12);
        assert_eq!(f, adapted_frame(m).unwrap());
    }

    #[test]
    fn frame_rejects_non_unit() {
        assert!(matches!(adapted_frame(V::new(1.0, 1.0, 0.0)), Err(Error::NonUnitNormal { .. })));
    }

    #[test]
    fn decompose_zero_and_single_term() {
        let set = SlipSystemSet::<f64>::fcc4();
        let s = decompose_beta(&Mat3::zero(), &set).unwrap();
        assert!(s.iter().all(|v| v.norm() == 0.0));

        let slip = V::new(1.0, -1.0, 0.0) * (1.0 / 2f64.sqrt());
        let beta = slip.outer(set.normal(0));
        let s = decompose_beta(&beta, &set).unwrap();
        assert!((s[0] - slip).norm() < 1e-12);
        for v in &s[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn decompose_rejects_non_traceless() {
        let set = SlipSystemSet::<f64>::fcc4();
        let err = decompose_beta(&Mat3::identity(), &set).unwrap_err();
        assert!(matches!(err, Error::NotRepresentable { .. }));
    }

    #[test]
    fn decompose_rejects_more_than_four_planes() {
        let mut set = SlipSystemSet::<f64>::fcc4();
        set.planes.push(set.planes[0].clone());
        assert!(matches!(decompose_beta(&Mat3::zero(), &set), Err(Error::TooManyPlanes { planes: 5 })));
    }

    #[test]
    fn decompose_roundtrip_random_fcc() {
        let set = SlipSystemSet::<f64>::fcc4();
        let frames: Vec<_> = set.planes.iter().map(|p| adapted_frame(p.normal).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let slips: Vec<V> = frames
                .iter()
                .map(|f| f.from_in_plane(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            let mut beta = Mat3::zero();
            for (s, p) in slips.iter().zip(&set.planes) {
                beta += s.outer(p.normal);
            }
            let got = decompose_beta(&beta, &set).unwrap();
            for (a, b) in got.iter().zip(&slips) {
                assert!((*a - *b).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn coeffs_basis_and_sum() {
        let b1 = V::axis(0);
        let b2 = V::new(1.0, 1.0, 0.0) * (1.0 / 2f64.sqrt());
        assert_eq!(slip_to_coeffs(b1, b1, b2).unwrap(), (1.0, 0.0));
        let (c1, c2) = slip_to_coeffs(b1 + b2, b1, b2).unwrap();
        assert!((c1 - 1.0).abs() < 1e-14 && (c2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coeffs_reject_parallel_and_out_of_plane() {
        let b1 = V::axis(0);
        let nearly = V::new(1.0, 1e-8, 0.0).normalized().unwrap();
        assert!(matches!(slip_to_coeffs(b1, b1, nearly), Err(Error::NearParallelBurgers { .. })));
        assert!(BurgersPair::new(b1, nearly).is_err());
        assert!(matches!(
            slip_to_coeffs(V::axis(2), b1, V::axis(1)),
            Err(Error::NotInPairSpan { .. })
        ));
    }

    #[test]
    fn coeffs_roundtrip_random_in_plane() {
        let set = SlipSystemSet::<f64>::fcc4();
        let pairs = set.default_pairs().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for pair in &pairs {
            for _ in 0..100 {
                let s = pair.slip(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                let (c1, c2) = pair.coeffs(s).unwrap();
                assert!((pair.slip(c1, c2) - s).norm() <= 1e-12);
            }
        }
    }
}
