//! Fixed-size 3-vectors and 3x3 matrices, plus the two small dense routines
//! the crystallography needs (Householder least squares, Jacobi eigenvalues).

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T>(pub [T; 3]);

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    pub fn zero() -> Self {
        Vec3([T::zero(); 3])
    }

    /// Unit vector along axis `k`.
    pub fn axis(k: usize) -> Self {
        let mut v = Self::zero();
        v.0[k] = T::one();
        v
    }

    pub fn from_f64(a: [f64; 3]) -> Self {
        Vec3([lit(a[0]), lit(a[1]), lit(a[2])])
    }

    pub fn to_f64(self) -> [f64; 3] {
        self.0.map(crate::scalar::to_f64)
    }

    pub fn dot(self, o: Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(self, o: Self) -> Self {
        let [a, b, c] = self.0;
        let [x, y, z] = o.0;
        Vec3([b * z - c * y, c * x - a * z, a * y - b * x])
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    /// `self` scaled to unit length; `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > T::zero()).then(|| self * n.recip())
    }

    /// Dyad `self ⊗ o`, entries `self_i * o_k`.
    pub fn outer(self, o: Self) -> Mat3<T> {
        let mut m = Mat3::zero();
        for i in 0..3 {
            for k in 0..3 {
                m.0[i][k] = self.0[i] * o.0[k];
            }
        }
        m
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3(self.0.map(|x| -x))
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Vec3(self.0.map(|x| x * s))
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Mat3([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = T::one();
        }
        m
    }

    pub fn from_rows(r: [Vec3<T>; 3]) -> Self {
        Mat3([r[0].0, r[1].0, r[2].0])
    }

    pub fn from_cols(c: [Vec3<T>; 3]) -> Self {
        Self::from_rows(c).transpose()
    }

    pub fn row(&self, i: usize) -> Vec3<T> {
        Vec3(self.0[i])
    }

    pub fn col(&self, k: usize) -> Vec3<T> {
        Vec3([self.0[0][k], self.0[1][k], self.0[2][k]])
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zero();
        for i in 0..3 {
            for k in 0..3 {
                t.0[k][i] = self.0[i][k];
            }
        }
        t
    }

    pub fn sym(&self) -> Self {
        let half = lit::<T>(0.5);
        let mut s = Self::zero();
        for i in 0..3 {
            for k in 0..3 {
                s.0[i][k] = half * (self.0[i][k] + self.0[k][i]);
            }
        }
        s
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Cofactor matrix from signed 2x2 minors; equals `det(A) A^{-T}` when invertible.
    pub fn cofactor(&self) -> Self {
        let m = &self.0;
        let mut c = Self::zero();
        for i in 0..3 {
            for k in 0..3 {
                let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
                // cyclic index order folds the checkerboard sign into the minor
                c.0[i][k] = m[i1][k1] * m[i2][k2] - m[i1][k2] * m[i2][k1];
            }
        }
        c
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == T::zero() || !d.is_finite() {
            return None;
        }
        Some(self.cofactor().transpose() * d.recip())
    }

    /// Frobenius inner product `A : B`.
    pub fn ddot(&self, o: &Self) -> T {
        let mut acc = T::zero();
        for i in 0..3 {
            for k in 0..3 {
                acc += self.0[i][k] * o.0[i][k];
            }
        }
        acc
    }

    pub fn norm(&self) -> T {
        self.ddot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for k in 0..3 {
                r.0[i][k] += o.0[i][k];
            }
        }
        r
    }
}

impl<T: Real> AddAssign for Mat3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for k in 0..3 {
                r.0[i][k] -= o.0[i][k];
            }
        }
        r
    }
}

impl<T: Real> Mul<T> for Mat3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Mat3(self.0.map(|r| r.map(|x| x * s)))
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            for k in 0..3 {
                let mut acc = T::zero();
                for l in 0..3 {
                    acc += self.0[i][l] * o.0[l][k];
                }
                r.0[i][k] = acc;
            }
        }
        r
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        Vec3([self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v)])
    }
}

/// Least-squares solution of the dense system `a x ≈ b` (`a` given as rows,
/// `rows >= cols`, full column rank) by Householder QR. Returns the solution
/// and the Euclidean norm of the residual.
pub fn least_squares<T: Real>(a: &[Vec<T>], b: &[T]) -> Option<(Vec<T>, T)> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if m < n || b.len() != m {
        return None;
    }
    let mut r: Vec<Vec<T>> = a.to_vec();
    let mut y: Vec<T> = b.to_vec();
    for k in 0..n {
        let alpha = (k..m).map(|i| r[i][k] * r[i][k]).sum::<T>().sqrt();
        if alpha == T::zero() {
            return None;
        }
        let alpha = if r[k][k] > T::zero() { -alpha } else { alpha };
        let mut v: Vec<T> = (k..m).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|x| *x * *x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let two = lit::<T>(2.0);
        for j in k..n {
            let proj: T = (k..m).map(|i| v[i - k] * r[i][j]).sum::<T>() * two / vnorm2;
            for i in k..m {
                r[i][j] -= proj * v[i - k];
            }
        }
        let proj: T = (k..m).map(|i| v[i - k] * y[i]).sum::<T>() * two / vnorm2;
        for i in k..m {
            y[i] -= proj * v[i - k];
        }
    }
    let scale = (0..n).map(|k| r[k][k].abs()).fold(T::zero(), T::max);
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        if r[k][k].abs() <= scale * T::epsilon() * lit(16.0) {
            return None;
        }
        let mut acc = y[k];
        for j in k + 1..n {
            acc -= r[k][j] * x[j];
        }
        x[k] = acc / r[k][k];
    }
    let resid = (0..m)
        .map(|i| {
            let ax: T = (0..n).map(|j| a[i][j] * x[j]).sum();
            (ax - b[i]) * (ax - b[i])
        })
        .sum::<T>()
        .sqrt();
    Some((x, resid))
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Real>(mut a: Vec<Vec<T>>) -> Vec<T> {
    let n = a.len();
    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: T = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (lit::<T>(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Smallest singular value of the matrix whose columns are `vs`.
pub fn smallest_singular_value<T: Real>(vs: &[Vec3<T>]) -> T {
    let gram: Vec<Vec<T>> = vs
        .iter()
        .map(|a| vs.iter().map(|b| a.dot(*b)).collect())
        .collect();
    symmetric_eigenvalues(gram)
        .first()
        .map_or(T::zero(), |l| l.max(T::zero()).sqrt())
}
