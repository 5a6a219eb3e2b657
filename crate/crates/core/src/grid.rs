//! Node-centred structured grids, finite-difference operators and the
//! single-plane side condition.
//!
//! Storage is flat, x-fastest. Two quadratures are used: a trapezoidal rule
//! for integrands built from nodal values, and a cell rule (weight `h1 h2 h3`
//! on every node that owns a cell, zero on the top faces) for integrands that
//! contain the forward-difference stencil. The cell rule pairs each node with
//! the cell its forward differences live on, so the discrete total variation
//! of a mesh-aligned step is exactly jump × area and affine fields are exact
//! discrete minimisers of quadratic gradient energies.

use std::ops::{Mul, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal::{adapted_frame, AdaptedFrame, SlipSystemSet};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::{fixed_max, fixed_sum, from_usize, lit, tol, to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub origin: [T; 3],
    pub extents: [T; 3],
    pub nodes: [usize; 3],
}

impl<T: Real> GridSpec<T> {
    pub fn new(origin: [T; 3], extents: [T; 3], nodes: [usize; 3]) -> Result<Self> {
        let g = Self { origin, extents, nodes };
        g.validate()?;
        Ok(g)
    }

    pub fn unit_cube(n: usize) -> Result<Self> {
        Self::new([T::zero(); 3], [T::one(); 3], [n; 3])
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if self.nodes[k] < 2 {
                return Err(Error::InvalidGrid(format!("axis {k} needs at least 2 nodes")));
            }
            if !(self.extents[k] > T::zero()) || !self.extents[k].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {k} extent must be positive")));
            }
            if !self.origin[k].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {k} origin is not finite")));
            }
        }
        if !(self.cell_volume() > T::zero()) {
            return Err(Error::InvalidGrid("cell volume underflows".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn h(&self, k: usize) -> T {
        self.extents[k] / from_usize::<T>(self.nodes[k] - 1)
    }

    pub fn spacings(&self) -> [T; 3] {
        [self.h(0), self.h(1), self.h(2)]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes[0] * self.nodes[1] * self.nodes[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn stride(&self, k: usize) -> usize {
        match k {
            0 => 1,
            1 => self.nodes[0],
            _ => self.nodes[0] * self.nodes[1],
        }
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        i[0] + self.nodes[0] * (i[1] + self.nodes[1] * i[2])
    }

    #[inline]
    pub fn coords(&self, n: usize) -> [usize; 3] {
        let i0 = n % self.nodes[0];
        let r = n / self.nodes[0];
        [i0, r % self.nodes[1], r / self.nodes[1]]
    }

    #[inline]
    pub fn position(&self, n: usize) -> Vec3<T> {
        let c = self.coords(n);
        Vec3::new(
            self.origin[0] + from_usize::<T>(c[0]) * self.h(0),
            self.origin[1] + from_usize::<T>(c[1]) * self.h(1),
            self.origin[2] + from_usize::<T>(c[2]) * self.h(2),
        )
    }

    pub fn cell_volume(&self) -> T {
        self.h(0) * self.h(1) * self.h(2)
    }

    pub fn volume(&self) -> T {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    pub fn is_boundary(&self, n: usize) -> bool {
        let c = self.coords(n);
        (0..3).any(|k| c[k] == 0 || c[k] + 1 == self.nodes[k])
    }

    /// Trapezoidal weight: cell volume halved once per boundary-touching axis.
    #[inline]
    pub fn trap_weight(&self, n: usize) -> T {
        let c = self.coords(n);
        let mut w = self.cell_volume();
        for k in 0..3 {
            if c[k] == 0 || c[k] + 1 == self.nodes[k] {
                w = w * lit(0.5);
            }
        }
        w
    }

    /// Cell-rule weight used for stencil integrands.
    #[inline]
    pub fn cell_weight(&self, n: usize) -> T {
        let c = self.coords(n);
        if (0..3).all(|k| c[k] + 1 < self.nodes[k]) {
            self.cell_volume()
        } else {
            T::zero()
        }
    }

    pub fn integrate_trap<F: Fn(usize) -> T + Sync + Send>(&self, f: F) -> T {
        fixed_sum(self.len(), |n| {
            let v = f(n);
            if v == T::zero() {
                T::zero()
            } else {
                self.trap_weight(n) * v
            }
        })
    }

    pub fn integrate_cell<F: Fn(usize) -> T + Sync + Send>(&self, f: F) -> T {
        fixed_sum(self.len(), |n| {
            let w = self.cell_weight(n);
            if w == T::zero() {
                T::zero()
            } else {
                w * f(n)
            }
        })
    }
}

/// Forward difference along `axis` at node `n` (backward on the top node).
#[inline]
pub fn partial<T, V>(grid: &GridSpec<T>, values: &[V], n: usize, axis: usize) -> V
where
    T: Real,
    V: Copy + Sub<Output = V> + Mul<T, Output = V>,
{
    let s = grid.stride(axis);
    let inv_h = grid.h(axis).recip();
    let i = grid.coords(n)[axis];
    if i + 1 < grid.nodes[axis] {
        (values[n + s] - values[n]) * inv_h
    } else {
        (values[n] - values[n - s]) * inv_h
    }
}

/// Row `n` of `Dᵀ g` for the stencil of [`partial`] along `axis`.
#[inline]
pub fn partial_adjoint<T, V>(grid: &GridSpec<T>, g: &[V], n: usize, axis: usize) -> V
where
    T: Real,
    V: Copy + Sub<Output = V> + Mul<T, Output = V> + std::ops::Add<Output = V> + std::ops::Neg<Output = V>,
{
    let s = grid.stride(axis);
    let inv_h = grid.h(axis).recip();
    let top = grid.nodes[axis] - 1;
    let i = grid.coords(n)[axis];
    let mut acc = if i < top { -g[n] } else { g[n] };
    if i >= 1 {
        acc = acc + g[n - s];
    }
    if i + 1 == top {
        acc = acc - g[n + s];
    }
    acc * inv_h
}

/// Directional derivative `d · ∇` using the shared stencil.
#[inline]
pub fn directional<T, V>(grid: &GridSpec<T>, values: &[V], n: usize, d: Vec3<T>) -> V
where
    T: Real,
    V: Copy + Sub<Output = V> + Mul<T, Output = V> + std::ops::Add<Output = V>,
{
    let mut acc = partial(grid, values, n, 0) * d[0];
    for k in 1..3 {
        acc = acc + partial(grid, values, n, k) * d[k];
    }
    acc
}

/// Gradient of a scalar nodal field, `[∂1 f, ∂2 f, ∂3 f]` per node.
pub fn scalar_gradient<T: Real>(grid: &GridSpec<T>, f: &[T]) -> Vec<Vec3<T>> {
    (0..grid.len())
        .into_par_iter()
        .map(|n| Vec3::new(partial(grid, f, n, 0), partial(grid, f, n, 1), partial(grid, f, n, 2)))
        .collect()
}

/// In-plane derivatives `(∂_{e1} f, ∂_{e2} f)` of a scalar field.
pub fn planar_gradient_scalar<T: Real>(grid: &GridSpec<T>, f: &[T], frame: &AdaptedFrame<T>) -> Vec<[T; 2]> {
    (0..grid.len())
        .into_par_iter()
        .map(|n| [directional(grid, f, n, frame.e1), directional(grid, f, n, frame.e2)])
        .collect()
}

/// Trilinear interpolation of a nodal scalar field; `None` outside the box.
pub fn interpolate<T: Real>(grid: &GridSpec<T>, f: &[T], x: Vec3<T>) -> Option<T> {
    let slack = lit::<T>(1e-9);
    let mut base = [0usize; 3];
    let mut frac = [T::zero(); 3];
    for k in 0..3 {
        let top = from_usize::<T>(grid.nodes[k] - 1);
        let xi = (x[k] - grid.origin[k]) / grid.h(k);
        if !(xi >= -slack && xi <= top + slack) {
            return None;
        }
        let xi = xi.max(T::zero()).min(top);
        let i = xi.floor().to_usize().unwrap_or(0).min(grid.nodes[k] - 2);
        base[k] = i;
        frac[k] = xi - from_usize::<T>(i);
    }
    let mut acc = T::zero();
    for corner in 0..8 {
        let mut w = T::one();
        let mut idx = base;
        for k in 0..3 {
            if corner & (1 << k) != 0 {
                idx[k] += 1;
                w = w * frac[k];
            } else {
                w = w * (T::one() - frac[k]);
            }
        }
        if w != T::zero() {
            acc = acc + w * f[grid.index(idx)];
        }
    }
    Some(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    #[default]
    Displacement,
    Deformation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField<T> {
    pub grid: GridSpec<T>,
    pub kind: FieldKind,
    pub values: Vec<Vec3<T>>,
}

impl<T: Real> DisplacementField<T> {
    pub fn new(grid: GridSpec<T>, kind: FieldKind, values: Vec<Vec3<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if let Some(n) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value at node {n}")));
        }
        Ok(Self { grid, kind, values })
    }

    pub fn zeros(grid: &GridSpec<T>) -> Self {
        Self { grid: grid.clone(), kind: FieldKind::Displacement, values: vec![Vec3::zero(); grid.len()] }
    }

    pub fn from_fn<F>(grid: &GridSpec<T>, kind: FieldKind, f: F) -> Self
    where
        F: Fn(Vec3<T>) -> Vec3<T> + Sync + Send,
    {
        let values = (0..grid.len()).into_par_iter().map(|n| f(grid.position(n))).collect();
        Self { grid: grid.clone(), kind, values }
    }

    /// The deformation `y = x`.
    pub fn identity(grid: &GridSpec<T>) -> Self {
        Self::from_fn(grid, FieldKind::Deformation, |x| x)
    }

    /// `∇y` for a deformation, `Id + ∇u` for a displacement.
    pub fn deformation_gradient(&self) -> TensorField<T> {
        let mut g = gradient(self);
        if self.kind == FieldKind::Displacement {
            g.values.par_iter_mut().for_each(|m| *m += Mat3::identity());
        }
        g
    }

    /// The same state expressed as a displacement (`u = y − x`).
    pub fn to_displacement(&self) -> Self {
        match self.kind {
            FieldKind::Displacement => self.clone(),
            FieldKind::Deformation => Self {
                grid: self.grid.clone(),
                kind: FieldKind::Displacement,
                values: (0..self.grid.len()).map(|n| self.values[n] - self.grid.position(n)).collect(),
            },
        }
    }

    pub fn to_deformation(&self) -> Self {
        match self.kind {
            FieldKind::Deformation => self.clone(),
            FieldKind::Displacement => Self {
                grid: self.grid.clone(),
                kind: FieldKind::Deformation,
                values: (0..self.grid.len()).map(|n| self.values[n] + self.grid.position(n)).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorField<T> {
    pub grid: GridSpec<T>,
    pub values: Vec<Mat3<T>>,
}

/// Nodal gradient `(∇f)_{ik} = ∂_k f_i` of a vector field.
pub fn gradient<T: Real>(f: &DisplacementField<T>) -> TensorField<T> {
    let grid = &f.grid;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let cols = [partial(grid, &f.values, n, 0), partial(grid, &f.values, n, 1), partial(grid, &f.values, n, 2)];
            Mat3::from_cols(cols)
        })
        .collect();
    TensorField { grid: grid.clone(), values }
}

/// Per-plane slip vectors `slips[j][node]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlipField<T> {
    pub grid: GridSpec<T>,
    pub systems: SlipSystemSet<T>,
    pub slips: Vec<Vec<Vec3<T>>>,
}

impl<T: Real> SlipField<T> {
    pub fn new(grid: GridSpec<T>, systems: SlipSystemSet<T>, slips: Vec<Vec<Vec3<T>>>) -> Result<Self> {
        if slips.len() != systems.len() {
            return Err(Error::Shape(format!("{} slip planes for {} systems", slips.len(), systems.len())));
        }
        let eps = tol::<T>(1e-10);
        for (j, s) in slips.iter().enumerate() {
            if s.len() != grid.len() {
                return Err(Error::Shape(format!("plane {j}: {} values for {} nodes", s.len(), grid.len())));
            }
            let m = systems.normal(j);
            if let Some(n) = s.iter().position(|v| !v.is_finite() || v.dot(m).abs() > eps * v.norm().max(T::one())) {
                return Err(Error::Shape(format!("plane {j}: slip at node {n} is not in the plane")));
            }
        }
        Ok(Self { grid, systems, slips })
    }

    pub fn zeros(grid: &GridSpec<T>, systems: &SlipSystemSet<T>) -> Self {
        Self {
            grid: grid.clone(),
            systems: systems.clone(),
            slips: vec![vec![Vec3::zero(); grid.len()]; systems.len()],
        }
    }

    /// Builds `s_j(x) = f(j, x)`, projected onto `m_j⊥`.
    pub fn from_fn<F>(grid: &GridSpec<T>, systems: &SlipSystemSet<T>, f: F) -> Self
    where
        F: Fn(usize, Vec3<T>) -> Vec3<T> + Sync + Send,
    {
        let slips = (0..systems.len())
            .map(|j| {
                let m = systems.normal(j);
                (0..grid.len())
                    .into_par_iter()
                    .map(|n| {
                        let s = f(j, grid.position(n));
                        s - m * s.dot(m)
                    })
                    .collect()
            })
            .collect();
        Self { grid: grid.clone(), systems: systems.clone(), slips }
    }

    pub fn planes(&self) -> usize {
        self.slips.len()
    }

    pub fn max_norm(&self) -> T {
        self.slips
            .iter()
            .map(|s| fixed_max(s.len(), |n| s[n].norm()))
            .fold(T::zero(), T::max)
    }

    /// Default feasibility tolerance `1e-12 · max(max |s|, 1)`.
    pub fn default_tol_feas(&self) -> T {
        tol::<T>(1e-12) * self.max_norm().max(T::one())
    }

    /// `β = Σ_j s_j ⊗ m_j` at node `n`.
    #[inline]
    pub fn beta_at(&self, n: usize) -> Mat3<T> {
        let mut b = Mat3::zero();
        for (j, s) in self.slips.iter().enumerate() {
            b += s[n].outer(self.systems.normal(j));
        }
        b
    }

    pub fn beta(&self) -> TensorField<T> {
        let values = (0..self.grid.len()).into_par_iter().map(|n| self.beta_at(n)).collect();
        TensorField { grid: self.grid.clone(), values }
    }
}

/// Planar gradient of one plane's slip in its adapted frame.
#[derive(Clone, Debug)]
pub struct PlanarGradient<T> {
    pub frame: AdaptedFrame<T>,
    /// `∂_{e1} s_j`
    pub d1: Vec<Vec3<T>>,
    /// `∂_{e2} s_j`
    pub d2: Vec<Vec3<T>>,
    /// `|∇_{m⊥} s_j|`, the Frobenius norm of the 3×2 array `(d1, d2)`.
    pub norm: Vec<T>,
}

pub fn planar_gradient<T: Real>(sf: &SlipField<T>, j: usize) -> Result<PlanarGradient<T>> {
    if j >= sf.planes() {
        return Err(Error::Shape(format!("plane index {j} out of range")));
    }
    let frame = adapted_frame(sf.systems.normal(j))?;
    let grid = &sf.grid;
    let s = &sf.slips[j];
    let (d1, d2): (Vec<_>, Vec<_>) = (0..grid.len())
        .into_par_iter()
        .map(|n| (directional(grid, s, n, frame.e1), directional(grid, s, n, frame.e2)))
        .unzip();
    let norm = d1.par_iter().zip(&d2).map(|(a, b)| (a.norm_sq() + b.norm_sq()).sqrt()).collect();
    Ok(PlanarGradient { frame, d1, d2, norm })
}

/// `F_pl = Id + Σ_j s_j ⊗ m_j`.
pub fn assemble_fpl<T: Real>(sf: &SlipField<T>) -> TensorField<T> {
    let mut b = sf.beta();
    b.values.par_iter_mut().for_each(|m| *m += Mat3::identity());
    b
}

/// `F_pl⁻¹ = Id − Σ_j s_j ⊗ m_j`, valid under the single-plane condition.
pub fn invert_fpl<T: Real>(sf: &SlipField<T>) -> Result<TensorField<T>> {
    let rep = check_single_plane(sf, None);
    if !rep.feasible {
        return Err(rep.infeasible_error());
    }
    let mut b = sf.beta();
    b.values.par_iter_mut().for_each(|m| *m = Mat3::identity() - *m);
    Ok(b)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violating_nodes: usize,
    pub violating_fraction: f64,
    /// `max_{i≠j} |s_i||s_j|` over all nodes.
    pub worst_product: f64,
    pub worst_node: usize,
    /// Volume fraction `|Ω_j| / |Ω|` of nodes where plane `j` is active.
    pub active_fractions: Vec<f64>,
    pub tol_feas: f64,
}

impl FeasibilityReport {
    pub fn infeasible_error(&self) -> Error {
        Error::Infeasible { node: self.worst_node, product: self.worst_product }
    }
}

pub fn check_single_plane<T: Real>(sf: &SlipField<T>, tol_feas: Option<T>) -> FeasibilityReport {
    let tol_feas = tol_feas.unwrap_or_else(|| sf.default_tol_feas());
    let grid = &sf.grid;
    let np = sf.planes();
    let per_node: Vec<(usize, T)> = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let mut active = 0;
            let mut best = T::zero();
            for i in 0..np {
                let a = sf.slips[i][n].norm();
                if a > tol_feas {
                    active += 1;
                }
                for k in i + 1..np {
                    best = best.max(a * sf.slips[k][n].norm());
                }
            }
            (active, best)
        })
        .collect();
    let violating_nodes = per_node.iter().filter(|(a, _)| *a > 1).count();
    let (mut worst_node, mut worst) = (0, T::zero());
    for (n, (_, p)) in per_node.iter().enumerate() {
        if *p > worst {
            worst = *p;
            worst_node = n;
        }
    }
    let vol = grid.volume();
    let active_fractions = (0..np)
        .map(|j| to_f64(grid.integrate_trap(|n| if sf.slips[j][n].norm() > tol_feas { T::one() } else { T::zero() }) / vol))
        .collect();
    FeasibilityReport {
        feasible: violating_nodes == 0,
        violating_nodes,
        violating_fraction: violating_nodes as f64 / grid.len() as f64,
        worst_product: to_f64(worst),
        worst_node,
        active_fractions,
        tol_feas: to_f64(tol_feas),
    }
}

/// Nodes whose active slip is not parallel to one of its plane's Burgers
/// directions (the single-slip condition), assuming single-plane input.
pub fn count_multi_slip<T: Real>(sf: &SlipField<T>, tol_feas: Option<T>) -> usize {
    let tol_feas = tol_feas.unwrap_or_else(|| sf.default_tol_feas());
    let dirs: Vec<Vec<Vec3<T>>> = sf
        .systems
        .planes
        .iter()
        .map(|p| p.burgers.iter().filter_map(|b| b.normalized()).collect())
        .collect();
    (0..sf.grid.len())
        .into_par_iter()
        .filter(|&n| {
            (0..sf.planes()).any(|j| {
                let s = sf.slips[j][n];
                s.norm() > tol_feas && !dirs[j].iter().any(|b| s.cross(*b).norm() <= tol_feas)
            })
        })
        .count()
}

/// Keeps, at each node, only the plane with the largest `|s_j|` (lowest index
/// on ties).
pub fn project_single_plane<T: Real>(sf: &SlipField<T>) -> SlipField<T> {
    let mut out = sf.clone();
    project_single_plane_in_place(&mut out);
    out
}

pub fn project_single_plane_in_place<T: Real>(sf: &mut SlipField<T>) {
    let np = sf.planes();
    if np < 2 {
        return;
    }
    let len = sf.grid.len();
    let keep: Vec<usize> = (0..len)
        .into_par_iter()
        .map(|n| {
            let mut best = 0;
            let mut best_norm = sf.slips[0][n].norm_sq();
            for j in 1..np {
                let v = sf.slips[j][n].norm_sq();
                if v > best_norm {
                    best = j;
                    best_norm = v;
                }
            }
            best
        })
        .collect();
    for (j, s) in sf.slips.iter_mut().enumerate() {
        s.par_iter_mut().zip(&keep).for_each(|(v, &k)| {
            if k != j {
                *v = Vec3::zero();
            }
        });
    }
}
