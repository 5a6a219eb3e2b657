//! Energy functionals: elastic densities, hardening, the GND measure, the
//! laminated terms and the relaxation bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal::{adapted_frame, AdaptedFrame, BurgersPair};
use crate::error::{Error, Result};
use crate::grid::{
    check_single_plane, count_multi_slip, interpolate, planar_gradient, planar_gradient_scalar,
    DisplacementField, FeasibilityReport, FieldKind, GridSpec, SlipField,
};
use crate::io::ser_f64;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Lower clamp for lamination weights.
pub const LAMBDA_MIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    /// `W(F) = c2 |F|^q − c1`
    #[default]
    Power,
    /// `W(F) = c2 |sym(F − Id)|² − c1`
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct ElasticDensity<T> {
    pub kind: DensityKind,
    pub c1: T,
    pub c2: T,
    pub q: T,
    /// Integrand value at nodes with `det F_el <= 0`; `1e6 · c2` if absent.
    #[serde(default)]
    pub det_penalty: Option<T>,
}

impl<T: Real> Default for ElasticDensity<T> {
    fn default() -> Self {
        Self::power(T::zero(), T::one(), lit(4.0))
    }
}

impl<T: Real> ElasticDensity<T> {
    pub fn power(c1: T, c2: T, q: T) -> Self {
        Self { kind: DensityKind::Power, c1, c2, q, det_penalty: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= T::zero() && self.c2 >= T::zero()) || !self.c1.is_finite() || !self.c2.is_finite() {
            return Err(Error::Config("density constants c1, c2 must be finite and >= 0".into()));
        }
        if self.kind == DensityKind::Power && !(self.q > T::one()) {
            return Err(Error::Config("density exponent q must exceed 1".into()));
        }
        Ok(())
    }

    pub fn penalty(&self) -> T {
        self.det_penalty.unwrap_or(lit::<T>(1e6) * self.c2)
    }

    /// Density without the determinant guard.
    pub fn raw(&self, f: &Mat3<T>) -> T {
        match self.kind {
            DensityKind::Power => self.c2 * f.norm().powf(self.q) - self.c1,
            DensityKind::Quadratic => {
                let e = (*f - Mat3::identity()).sym();
                self.c2 * e.ddot(&e) - self.c1
            }
        }
    }

    pub fn eval(&self, f: &Mat3<T>) -> T {
        if f.det() <= T::zero() {
            self.penalty()
        } else {
            self.raw(f)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct ModelParams<T> {
    pub p: T,
    pub sigma: T,
    pub tau: T,
    pub eps_reg: T,
    pub tol_feas: Option<T>,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self { p: lit(4.0), sigma: T::one(), tau: T::one(), eps_reg: T::zero(), tol_feas: None }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: T| x.is_finite() && x >= T::zero();
        if !(self.p >= T::one()) || !self.p.is_finite() {
            return Err(Error::Config("hardening exponent p must be >= 1".into()));
        }
        if !ok(self.sigma) || !ok(self.tau) || !ok(self.eps_reg) {
            return Err(Error::Config("weights sigma, tau, eps_reg must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardeningMode {
    /// `Σ_j Σ_i ∫ |c_ij|^p`
    PerCoeff,
    /// `Σ_j ∫ (|c_1j| + |c_2j|)^p`
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Nonlinear,
    Linear,
    Relaxed,
    Regularized,
    #[serde(rename = "lb")]
    LowerBound,
    #[serde(rename = "ub1")]
    UpperBoundFlat,
    /// Linearised elasticity with single-plane slips, `Σ|s_j|^p` hardening and
    /// the ε-penalty; the objective of the minimiser.
    SinglePlaneLinear,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Nonlinear => "nonlinear",
            Model::Linear => "linear",
            Model::Relaxed => "relaxed",
            Model::Regularized => "regularized",
            Model::LowerBound => "lb",
            Model::UpperBoundFlat => "ub1",
            Model::SinglePlaneLinear => "single-plane-linear",
        }
    }

    /// Whether the model requires single slip (one Burgers direction) per node.
    pub fn single_slip(self) -> bool {
        matches!(self, Model::Nonlinear | Model::Linear)
    }
}

/// Elastic term used by the relaxed and bound functionals.
#[derive(Clone, Debug, PartialEq)]
pub enum ElasticModel<T> {
    Nonlinear(ElasticDensity<T>),
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Default)]
pub struct PlaneEnergy {
    #[serde(serialize_with = "ser_f64")]
    pub hardening: f64,
    #[serde(serialize_with = "ser_f64")]
    pub gnd: f64,
    #[serde(serialize_with = "ser_f64")]
    pub regularization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub model: String,
    #[serde(serialize_with = "ser_f64")]
    pub elastic: f64,
    #[serde(serialize_with = "ser_f64")]
    pub hardening: f64,
    #[serde(serialize_with = "ser_f64")]
    pub gnd: f64,
    #[serde(serialize_with = "ser_f64")]
    pub regularization: f64,
    #[serde(serialize_with = "ser_f64")]
    pub total: f64,
    pub feasible: bool,
    pub per_plane: Vec<PlaneEnergy>,
    pub feasibility: FeasibilityReport,
    /// Nodes violating the single-slip condition (single-slip models only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_slip_nodes: Option<usize>,
}

impl EnergyReport {
    /// `σ·gnd + τ·hardening + ε·regularization`.
    pub fn plastic(&self, sigma: f64, tau: f64, eps_reg: f64) -> f64 {
        sigma * self.gnd + tau * self.hardening + eps_reg * self.regularization
    }
}

/// Per-plane coefficient fields `[c_1j, c_2j]` in the given Burgers pairs.
pub fn coefficients<T: Real>(sf: &SlipField<T>, pairs: &[BurgersPair<T>]) -> Result<Vec<[Vec<T>; 2]>> {
    if pairs.len() != sf.planes() {
        return Err(Error::MissingPairs);
    }
    sf.slips
        .iter()
        .zip(pairs)
        .map(|(s, pair)| {
            let cs = s
                .par_iter()
                .map(|v| if v.norm_sq() == T::zero() { Ok((T::zero(), T::zero())) } else { pair.coeffs(*v) })
                .collect::<Result<Vec<_>>>()?;
            let (c1, c2): (Vec<T>, Vec<T>) = cs.into_iter().unzip();
            Ok([c1, c2])
        })
        .collect()
}

pub fn gnd_per_plane<T: Real>(sf: &SlipField<T>) -> Result<Vec<T>> {
    (0..sf.planes())
        .map(|j| {
            let pg = planar_gradient(sf, j)?;
            Ok(sf.grid.integrate_cell(|n| pg.norm[n]))
        })
        .collect()
}

/// `G = Σ_j ∫ |∇_{m_j⊥} s_j|`.
pub fn gnd_energy<T: Real>(sf: &SlipField<T>) -> Result<T> {
    Ok(gnd_per_plane(sf)?.into_iter().fold(T::zero(), |a, b| a + b))
}

fn scalar_tv<T: Real>(grid: &GridSpec<T>, c: &[T], frame: &AdaptedFrame<T>) -> T {
    let d = planar_gradient_scalar(grid, c, frame);
    grid.integrate_cell(|n| (d[n][0] * d[n][0] + d[n][1] * d[n][1]).sqrt())
}

fn frames<T: Real>(sf: &SlipField<T>) -> Result<Vec<AdaptedFrame<T>>> {
    (0..sf.planes()).map(|j| adapted_frame(sf.systems.normal(j))).collect()
}

pub fn gnd_laminated_per_plane<T: Real>(sf: &SlipField<T>, pairs: &[BurgersPair<T>]) -> Result<Vec<T>> {
    let coeffs = coefficients(sf, pairs)?;
    let frames = frames(sf)?;
    Ok(coeffs
        .iter()
        .zip(&frames)
        .map(|(c, f)| scalar_tv(&sf.grid, &c[0], f) + scalar_tv(&sf.grid, &c[1], f))
        .collect())
}

/// `G_lam = Σ_j Σ_i ∫ |∇_{m_j⊥} c_ij|`.
pub fn gnd_laminated<T: Real>(sf: &SlipField<T>, pairs: &[BurgersPair<T>]) -> Result<T> {
    Ok(gnd_laminated_per_plane(sf, pairs)?.into_iter().fold(T::zero(), |a, b| a + b))
}

fn hardening_of<T: Real>(grid: &GridSpec<T>, c: &[Vec<T>; 2], p: T, mode: HardeningMode) -> T {
    match mode {
        HardeningMode::PerCoeff => grid.integrate_trap(|n| c[0][n].abs().powf(p) + c[1][n].abs().powf(p)),
        HardeningMode::Combined => grid.integrate_trap(|n| (c[0][n].abs() + c[1][n].abs()).powf(p)),
    }
}

pub fn hardening_per_plane<T: Real>(
    sf: &SlipField<T>,
    pairs: &[BurgersPair<T>],
    p: T,
    mode: HardeningMode,
) -> Result<Vec<T>> {
    let coeffs = coefficients(sf, pairs)?;
    Ok(coeffs.iter().map(|c| hardening_of(&sf.grid, c, p, mode)).collect())
}

pub fn hardening<T: Real>(sf: &SlipField<T>, pairs: &[BurgersPair<T>], p: T, mode: HardeningMode) -> Result<T> {
    Ok(hardening_per_plane(sf, pairs, p, mode)?.into_iter().fold(T::zero(), |a, b| a + b))
}

/// `∫ |s_j|^p` per plane.
pub fn slip_power_per_plane<T: Real>(sf: &SlipField<T>, p: T) -> Vec<T> {
    sf.slips.iter().map(|s| sf.grid.integrate_trap(|n| s[n].norm().powf(p))).collect()
}

/// `∫ W(∇y F_pl⁻¹)`; `y` may be a deformation or a displacement.
pub fn elastic_nonlinear<T: Real>(y: &DisplacementField<T>, sf: &SlipField<T>, w: &ElasticDensity<T>) -> Result<T> {
    let rep = check_single_plane(sf, None);
    if !rep.feasible {
        return Err(rep.infeasible_error());
    }
    Ok(elastic_nonlinear_unchecked(y, sf, w))
}

fn elastic_nonlinear_unchecked<T: Real>(y: &DisplacementField<T>, sf: &SlipField<T>, w: &ElasticDensity<T>) -> T {
    let f = y.deformation_gradient();
    let grid = &sf.grid;
    grid.integrate_cell(|n| {
        let fpl_inv = Mat3::identity() - sf.beta_at(n);
        w.eval(&(f.values[n] * fpl_inv))
    })
}

/// `∫ |sym(∇u − β)|²`.
pub fn elastic_linear<T: Real>(u: &DisplacementField<T>, sf: &SlipField<T>) -> T {
    let mut g = crate::grid::gradient(u);
    if u.kind == FieldKind::Deformation {
        g.values.par_iter_mut().for_each(|m| *m = *m - Mat3::identity());
    }
    sf.grid.integrate_cell(|n| {
        let e = (g.values[n] - sf.beta_at(n)).sym();
        e.ddot(&e)
    })
}

fn elastic_term<T: Real>(state: &DisplacementField<T>, sf: &SlipField<T>, elastic: &ElasticModel<T>, feasible: bool) -> T {
    match elastic {
        ElasticModel::Linear => elastic_linear(state, sf),
        ElasticModel::Nonlinear(w) if feasible => elastic_nonlinear_unchecked(state, sf, w),
        ElasticModel::Nonlinear(_) => T::infinity(),
    }
}

/// Slice data perpendicular to one normal: levels `t`, quadrature weights
/// `dt`, and the slice `L^p` norms of both coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Slices<T> {
    pub t: Vec<T>,
    pub dt: Vec<T>,
    pub norm1: Vec<T>,
    pub norm2: Vec<T>,
    /// Grid axis when `m` is axis-aligned (slices are exact grid planes).
    pub axis: Option<usize>,
    pub t0: T,
    pub h_t: T,
}

fn aligned_axis<T: Real>(m: Vec3<T>) -> Option<usize> {
    (0..3).find(|&k| m[k].abs() >= T::one() - lit(1e-12))
}

pub fn slices<T: Real>(grid: &GridSpec<T>, c: &[Vec<T>; 2], m: Vec3<T>, p: T) -> Result<Slices<T>> {
    let frame = adapted_frame(m)?;
    let inv_p = p.recip();
    if let Some(k) = aligned_axis(m) {
        let (a, b) = match k {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let nk = grid.nodes[k];
        let hk = grid.h(k);
        let sign = m[k].signum();
        let rows: Vec<(T, T, T, T)> = (0..nk)
            .into_par_iter()
            .map(|ik| {
                let mut s1 = T::zero();
                let mut s2 = T::zero();
                for ib in 0..grid.nodes[b] {
                    for ia in 0..grid.nodes[a] {
                        let mut idx = [0; 3];
                        idx[k] = ik;
                        idx[a] = ia;
                        idx[b] = ib;
                        let n = grid.index(idx);
                        let mut w = grid.h(a) * grid.h(b);
                        if ia == 0 || ia + 1 == grid.nodes[a] {
                            w = w * lit(0.5);
                        }
                        if ib == 0 || ib + 1 == grid.nodes[b] {
                            w = w * lit(0.5);
                        }
                        s1 += w * c[0][n].abs().powf(p);
                        s2 += w * c[1][n].abs().powf(p);
                    }
                }
                let t = sign * (grid.origin[k] + from_usize::<T>(ik) * hk);
                let dt = if ik == 0 || ik + 1 == nk { hk * lit(0.5) } else { hk };
                (t, dt, s1.powf(inv_p), s2.powf(inv_p))
            })
            .collect();
        let t0 = rows[0].0;
        return Ok(Slices {
            t: rows.iter().map(|r| r.0).collect(),
            dt: rows.iter().map(|r| r.1).collect(),
            norm1: rows.iter().map(|r| r.2).collect(),
            norm2: rows.iter().map(|r| r.3).collect(),
            axis: Some(k),
            t0,
            h_t: hk * sign,
        });
    }

    // General normal: resample on planes t = x·m at spacing min h.
    let h_t = grid.spacings().into_iter().fold(T::infinity(), T::min);
    let corners: Vec<Vec3<T>> = (0..8)
        .map(|c| {
            Vec3::new(
                grid.origin[0] + if c & 1 != 0 { grid.extents[0] } else { T::zero() },
                grid.origin[1] + if c & 2 != 0 { grid.extents[1] } else { T::zero() },
                grid.origin[2] + if c & 4 != 0 { grid.extents[2] } else { T::zero() },
            )
        })
        .collect();
    let range = |d: Vec3<T>| {
        corners.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), x| {
            let v = x.dot(d);
            (lo.min(v), hi.max(v))
        })
    };
    let (t_lo, t_hi) = range(m);
    let (a_lo, a_hi) = range(frame.e1);
    let (b_lo, b_hi) = range(frame.e2);
    let nt = ((t_hi - t_lo) / h_t).ceil().to_usize().unwrap_or(0) + 1;
    let na = ((a_hi - a_lo) / h_t).ceil().to_usize().unwrap_or(0).max(1);
    let nb = ((b_hi - b_lo) / h_t).ceil().to_usize().unwrap_or(0).max(1);
    let area = h_t * h_t;
    let rows: Vec<(T, T, T, T)> = (0..nt)
        .into_par_iter()
        .map(|it| {
            let t = t_lo + from_usize::<T>(it) * h_t;
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for ib in 0..nb {
                let bb = b_lo + (from_usize::<T>(ib) + lit(0.5)) * h_t;
                for ia in 0..na {
                    let aa = a_lo + (from_usize::<T>(ia) + lit(0.5)) * h_t;
                    let x = m * t + frame.e1 * aa + frame.e2 * bb;
                    if let (Some(v1), Some(v2)) = (interpolate(grid, &c[0], x), interpolate(grid, &c[1], x)) {
                        s1 += area * v1.abs().powf(p);
                        s2 += area * v2.abs().powf(p);
                    }
                }
            }
            let dt = if it == 0 || it + 1 == nt { h_t * lit(0.5) } else { h_t };
            (t, dt, s1.powf(inv_p), s2.powf(inv_p))
        })
        .collect();
    Ok(Slices {
        t: rows.iter().map(|r| r.0).collect(),
        dt: rows.iter().map(|r| r.1).collect(),
        norm1: rows.iter().map(|r| r.2).collect(),
        norm2: rows.iter().map(|r| r.3).collect(),
        axis: None,
        t0: t_lo,
        h_t,
    })
}

impl<T: Real> Slices<T> {
    /// Index of the slice through node `n`.
    pub fn slice_of(&self, grid: &GridSpec<T>, m: Vec3<T>, n: usize) -> usize {
        match self.axis {
            Some(k) => grid.coords(n)[k],
            None => {
                let t = grid.position(n).dot(m);
                ((t - self.t0) / self.h_t).round().to_usize().unwrap_or(0).min(self.t.len() - 1)
            }
        }
    }
}

/// Clamps a lamination weight into `[λ_min, 1 − λ_min]`.
pub fn clamp_lambda<T: Real>(l: T) -> T {
    let lo = lit::<T>(LAMBDA_MIN);
    l.max(lo).min(T::one() - lo)
}

/// Per-slice optimal weights `‖c_1j‖ / (‖c_1j‖ + ‖c_2j‖)`, clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceWeights<T> {
    pub slices: Slices<T>,
    pub lambda: Vec<T>,
}

impl<T: Real> SliceWeights<T> {
    /// The weight of each node's slice, as a nodal field.
    pub fn to_field(&self, grid: &GridSpec<T>, m: Vec3<T>) -> Vec<T> {
        (0..grid.len()).map(|n| self.lambda[self.slices.slice_of(grid, m, n)]).collect()
    }
}

pub fn lambda_opt<T: Real>(sf: &SlipField<T>, j: usize, pairs: &[BurgersPair<T>], p: T) -> Result<SliceWeights<T>> {
    if j >= sf.planes() {
        return Err(Error::Shape(format!("plane index {j} out of range")));
    }
    let coeffs = coefficients(sf, pairs)?;
    let slices = slices(&sf.grid, &coeffs[j], sf.systems.normal(j), p)?;
    let lambda = slices
        .norm1
        .iter()
        .zip(&slices.norm2)
        .map(|(&a, &b)| if a + b == T::zero() { lit(0.5) } else { clamp_lambda(a / (a + b)) })
        .collect();
    Ok(SliceWeights { slices, lambda })
}

/// `Σ_j ∫ (‖c_1j‖_{L^p(slice)} + ‖c_2j‖_{L^p(slice)})^p dt_j` per plane.
pub fn flat_hardening_per_plane<T: Real>(sf: &SlipField<T>, pairs: &[BurgersPair<T>], p: T) -> Result<Vec<T>> {
    let coeffs = coefficients(sf, pairs)?;
    coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let s = slices(&sf.grid, c, sf.systems.normal(j), p)?;
            Ok((0..s.t.len()).map(|i| s.dt[i] * (s.norm1[i] + s.norm2[i]).powf(p)).fold(T::zero(), |a, b| a + b))
        })
        .collect()
}

fn sum<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b)
}

fn to_f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|&x| to_f64(x)).collect()
}

#[allow(clippy::too_many_arguments)]
fn assemble<T: Real>(
    model: &str,
    elastic: T,
    hard: &[T],
    gnd: &[T],
    reg: &[T],
    params: &ModelParams<T>,
    feasible: bool,
    feasibility: FeasibilityReport,
    multi_slip_nodes: Option<usize>,
) -> EnergyReport {
    let (h, g, r) = (sum(hard), sum(gnd), sum(reg));
    let total = if feasible {
        elastic + params.sigma * g + params.tau * h + params.eps_reg * r
    } else {
        T::infinity()
    };
    let np = hard.len().max(gnd.len());
    let per_plane = (0..np)
        .map(|j| PlaneEnergy {
            hardening: hard.get(j).map_or(0.0, |&x| to_f64(x)),
            gnd: gnd.get(j).map_or(0.0, |&x| to_f64(x)),
            regularization: reg.get(j).map_or(0.0, |&x| to_f64(x)),
        })
        .collect();
    EnergyReport {
        model: model.to_string(),
        elastic: to_f64(elastic),
        hardening: to_f64(h),
        gnd: to_f64(g),
        regularization: to_f64(r),
        total: to_f64(total),
        feasible,
        per_plane,
        feasibility,
        multi_slip_nodes,
    }
}

/// Evaluates one of the model functionals on a state. `pairs` is required by
/// every laminated term; `elastic` picks the elastic part of the relaxed and
/// bound functionals (and must carry a density for [`Model::Nonlinear`]).
pub fn evaluate<T: Real>(
    model: Model,
    state: &DisplacementField<T>,
    sf: &SlipField<T>,
    pairs: Option<&[BurgersPair<T>]>,
    params: &ModelParams<T>,
    elastic: &ElasticModel<T>,
) -> Result<EnergyReport> {
    params.validate()?;
    let feas = check_single_plane(sf, params.tol_feas);
    let mut feasible = feas.feasible;
    let zeros = vec![T::zero(); sf.planes()];
    let need_pairs = || pairs.ok_or(Error::MissingPairs);
    match model {
        Model::Nonlinear | Model::Linear => {
            let multi = if feasible { count_multi_slip(sf, params.tol_feas) } else { 0 };
            feasible = feasible && multi == 0;
            let el = match (model, elastic) {
                (Model::Linear, _) => elastic_linear(state, sf),
                (_, ElasticModel::Nonlinear(w)) => {
                    if feas.feasible {
                        elastic_nonlinear_unchecked(state, sf, w)
                    } else {
                        T::infinity()
                    }
                }
                (_, ElasticModel::Linear) => {
                    return Err(Error::Config("the nonlinear model needs an elastic density".into()))
                }
            };
            let hard = slip_power_per_plane(sf, params.p);
            let gnd = gnd_per_plane(sf)?;
            Ok(assemble(model.name(), el, &hard, &gnd, &zeros, params, feasible, feas, Some(multi)))
        }
        Model::Relaxed | Model::Regularized => {
            let pairs = need_pairs()?;
            let el = elastic_term(state, sf, elastic, feasible);
            let hard = hardening_per_plane(sf, pairs, T::one(), HardeningMode::PerCoeff)?;
            let gnd = gnd_laminated_per_plane(sf, pairs)?;
            let reg = if model == Model::Regularized { slip_power_per_plane(sf, params.p) } else { zeros.clone() };
            Ok(assemble(model.name(), el, &hard, &gnd, &reg, params, feasible, feas, None))
        }
        Model::LowerBound => {
            let pairs = need_pairs()?;
            let el = elastic_term(state, sf, elastic, feasible);
            let hard = hardening_per_plane(sf, pairs, params.p, HardeningMode::Combined)?;
            let gnd = gnd_laminated_per_plane(sf, pairs)?;
            Ok(assemble(model.name(), el, &hard, &gnd, &zeros, params, feasible, feas, None))
        }
        Model::UpperBoundFlat => {
            let pairs = need_pairs()?;
            let el = elastic_term(state, sf, elastic, feasible);
            let hard = flat_hardening_per_plane(sf, pairs, params.p)?;
            let gnd = gnd_laminated_per_plane(sf, pairs)?;
            Ok(assemble(model.name(), el, &hard, &gnd, &zeros, params, feasible, feas, None))
        }
        Model::SinglePlaneLinear => {
            let el = elastic_linear(state, sf);
            let hard = slip_power_per_plane(sf, params.p);
            let gnd = gnd_per_plane(sf)?;
            let reg = hard.clone();
            Ok(assemble(model.name(), el, &hard, &gnd, &reg, params, feasible, feas, None))
        }
    }
}

/// `E_ub⁽¹⁾`: flat laminates with per-slice optimal weights.
pub fn upper_bound_flat<T: Real>(
    state: &DisplacementField<T>,
    sf: &SlipField<T>,
    pairs: &[BurgersPair<T>],
    params: &ModelParams<T>,
    elastic: &ElasticModel<T>,
) -> Result<EnergyReport> {
    let feas = check_single_plane(sf, params.tol_feas);
    if !feas.feasible {
        return Err(feas.infeasible_error());
    }
    evaluate(Model::UpperBoundFlat, state, sf, Some(pairs), params, elastic)
}

/// Per-plane nodal lamination weights `λ_j(x)`.
pub type WeightField<T> = Vec<Vec<T>>;

/// Parts of the undulating-laminate functional `I` beyond the totals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UndulatingParts {
    /// `∫ |∇c_1 − c_1∇ln λ| + |∇c_2 − c_2∇ln(1−λ)|`, per plane.
    pub curl_interface: Vec<f64>,
    /// `∫ |c_1∇ln λ| + |c_2∇ln(1−λ)|`, per plane.
    pub curl_weight: Vec<f64>,
}

pub fn undulating_energy<T: Real>(
    state: &DisplacementField<T>,
    sf: &SlipField<T>,
    pairs: &[BurgersPair<T>],
    lambda: &WeightField<T>,
    params: &ModelParams<T>,
    elastic: &ElasticModel<T>,
) -> Result<(EnergyReport, UndulatingParts)> {
    params.validate()?;
    let grid = &sf.grid;
    if lambda.len() != sf.planes() || lambda.iter().any(|l| l.len() != grid.len()) {
        return Err(Error::Shape("weight field must hold one value per node per plane".into()));
    }
    let lo = lit::<T>(LAMBDA_MIN);
    let hi = T::one() - lo;
    let slack = lit::<T>(1e-12);
    for l in lambda {
        if let Some(&bad) = l.iter().find(|&&v| !(v >= lo - slack && v <= hi + slack)) {
            return Err(Error::WeightOutOfRange { value: to_f64(bad), min: LAMBDA_MIN, max: 1.0 - LAMBDA_MIN });
        }
    }
    let feas = check_single_plane(sf, params.tol_feas);
    let feasible = feas.feasible;
    let coeffs = coefficients(sf, pairs)?;
    let frames = frames(sf)?;
    let p = params.p;
    let pm1 = p - T::one();
    let mut hard = Vec::new();
    let mut interface = Vec::new();
    let mut weight = Vec::new();
    for j in 0..sf.planes() {
        let (c1, c2) = (&coeffs[j][0], &coeffs[j][1]);
        let l = &lambda[j];
        hard.push(grid.integrate_trap(|n| {
            c1[n].abs().powf(p) / l[n].powf(pm1) + c2[n].abs().powf(p) / (T::one() - l[n]).powf(pm1)
        }));
        let ln1: Vec<T> = l.iter().map(|v| v.ln()).collect();
        let ln2: Vec<T> = l.iter().map(|v| (T::one() - *v).ln()).collect();
        let f = &frames[j];
        let dc1 = planar_gradient_scalar(grid, c1, f);
        let dc2 = planar_gradient_scalar(grid, c2, f);
        let dl1 = planar_gradient_scalar(grid, &ln1, f);
        let dl2 = planar_gradient_scalar(grid, &ln2, f);
        let norm2 = |a: T, b: T| (a * a + b * b).sqrt();
        interface.push(grid.integrate_cell(|n| {
            norm2(dc1[n][0] - c1[n] * dl1[n][0], dc1[n][1] - c1[n] * dl1[n][1])
                + norm2(dc2[n][0] - c2[n] * dl2[n][0], dc2[n][1] - c2[n] * dl2[n][1])
        }));
        weight.push(grid.integrate_cell(|n| {
            c1[n].abs() * norm2(dl1[n][0], dl1[n][1]) + c2[n].abs() * norm2(dl2[n][0], dl2[n][1])
        }));
    }
    let gnd: Vec<T> = interface.iter().zip(&weight).map(|(a, b)| *a + *b).collect();
    let el = elastic_term(state, sf, elastic, feasible);
    let zeros = vec![T::zero(); sf.planes()];
    let report = assemble("undulating", el, &hard, &gnd, &zeros, params, feasible, feas, None);
    Ok((report, UndulatingParts { curl_interface: to_f64s(&interface), curl_weight: to_f64s(&weight) }))
}

/// A constant weight field.
pub fn constant_weights<T: Real>(sf: &SlipField<T>, lambda: T) -> WeightField<T> {
    vec![vec![lambda; sf.grid.len()]; sf.planes()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{SlipPlane, SlipSystemSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type V = Vec3<f64>;

    fn single() -> SlipSystemSet<f64> {
        SlipSystemSet::new(vec![SlipPlane { normal: V::axis(2), burgers: vec![V::axis(0), V::axis(1)] }])
    }

    fn pairs(s: &SlipSystemSet<f64>) -> Vec<BurgersPair<f64>> {
        s.default_pairs().unwrap()
    }

    fn params(p: f64) -> ModelParams<f64> {
        ModelParams { p, sigma: 1.0, tau: 1.0, eps_reg: 0.0, tol_feas: None }
    }

    #[test]
    fn gnd_examples() {
        let g = GridSpec::<f64>::unit_cube(9).unwrap();
        let sys = single();
        assert_eq!(gnd_energy(&SlipField::from_fn(&g, &sys, |_, _| V::new(1.0, 2.0, 0.0))).unwrap(), 0.0);
        let lin = SlipField::from_fn(&g, &sys, |_, x| V::new(x[0], 0.0, 0.0));
        assert!((gnd_energy(&lin).unwrap() - 1.0).abs() < 1e-12);
        let step = SlipField::from_fn(&g, &sys, |_, x| V::new(if x[0] > 0.5 { 1.0 } else { 0.0 }, 0.0, 0.0));
        assert!((gnd_energy(&step).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laminated_gnd_examples() {
        let g = GridSpec::<f64>::unit_cube(6).unwrap();
        let sys = single();
        let pr = pairs(&sys);
        let lin = SlipField::from_fn(&g, &sys, |_, x| V::new(x[0], 0.0, 0.0));
        assert!((gnd_laminated(&lin, &pr).unwrap() - gnd_energy(&lin).unwrap()).abs() < 1e-12);
        let opp = SlipField::from_fn(&g, &sys, |_, x| V::new(x[0], -x[0], 0.0));
        assert!(gnd_laminated(&opp, &pr).unwrap() > gnd_energy(&opp).unwrap() + 0.5);
        let c = SlipField::from_fn(&g, &sys, |_, _| V::new(0.5, 1.0, 0.0));
        assert_eq!(gnd_laminated(&c, &pr).unwrap(), 0.0);
    }

    #[test]
    fn hardening_examples() {
        let g = GridSpec::<f64>::unit_cube(5).unwrap();
        let sys = single();
        let pr = pairs(&sys);
        let a = SlipField::from_fn(&g, &sys, |_, _| V::new(1.5, 0.0, 0.0));
        for mode in [HardeningMode::PerCoeff, HardeningMode::Combined] {
            assert!((hardening(&a, &pr, 2.0, mode).unwrap() - 2.25).abs() < 1e-12);
        }
        let both = SlipField::from_fn(&g, &sys, |_, _| V::new(1.0, 1.0, 0.0));
        assert!((hardening(&both, &pr, 2.0, HardeningMode::PerCoeff).unwrap() - 2.0).abs() < 1e-12);
        assert!((hardening(&both, &pr, 2.0, HardeningMode::Combined).unwrap() - 4.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<(f64, f64)> = (0..g.len()).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let r = SlipField::new(g.clone(), sys.clone(), vec![vals.iter().map(|&(a, b)| V::new(a, b, 0.0)).collect()]).unwrap();
        let pc = hardening(&r, &pr, 1.0, HardeningMode::PerCoeff).unwrap();
        let cb = hardening(&r, &pr, 1.0, HardeningMode::Combined).unwrap();
        assert!((pc - cb).abs() < 1e-12);
    }

    #[test]
    fn hardening_rejects_out_of_span() {
        let g = GridSpec::<f64>::unit_cube(3).unwrap();
        let sys = SlipSystemSet::new(vec![SlipPlane {
            normal: V::axis(2),
            burgers: vec![V::axis(0), V::axis(1)],
        }]);
        let sf = SlipField::from_fn(&g, &sys, |_, _| V::new(1.0, 1.0, 0.0));
        let bad = vec![BurgersPair { b1: V::axis(0), b2: V::axis(2) }];
        assert!(matches!(hardening(&sf, &bad, 2.0, HardeningMode::PerCoeff), Err(Error::NotInPairSpan { .. })));
    }

    #[test]
    fn elastic_examples() {
        let g = GridSpec::<f64>::unit_cube(4).unwrap();
        let sys = single();
        let w = ElasticDensity::power(0.0, 1.0, 2.0);
        let y = DisplacementField::identity(&g);
        let zero = SlipField::zeros(&g, &sys);
        assert!((elastic_nonlinear(&y, &zero, &w).unwrap() - 3.0).abs() < 1e-12);

        let s = V::new(0.7, 0.0, 0.0);
        let sf = SlipField::from_fn(&g, &sys, |_, _| s);
        let fpl = Mat3::identity() + s.outer(V::axis(2));
        let yp = DisplacementField::from_fn(&g, FieldKind::Deformation, |x| fpl * x);
        assert!((elastic_nonlinear(&yp, &sf, &w).unwrap() - 3.0).abs() < 1e-12);

        let shear = DisplacementField::from_fn(&g, FieldKind::Displacement, |x| V::new(x[1], 0.0, 0.0));
        let acc = SlipField::new(g.clone(), SlipSystemSet::new(vec![SlipPlane { normal: V::axis(1), burgers: vec![V::axis(0), V::axis(2)] }]), vec![vec![V::axis(0); g.len()]]).unwrap();
        assert!(elastic_linear(&shear, &acc).abs() < 1e-12);
        assert!((elastic_linear(&shear, &zero) - 0.5).abs() < 1e-12);
        let one = SlipField::from_fn(&g, &sys, |_, _| V::axis(0));
        assert!((elastic_linear(&DisplacementField::zeros(&g), &one) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn elastic_matches_node_loop() {
        let g = GridSpec::<f64>::new([0.0; 3], [1.0, 0.5, 2.0], [4, 3, 5]).unwrap();
        let sys = SlipSystemSet::<f64>::fcc4();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Mat3([[1.1, 0.2, -0.1], [0.05, 0.9, 0.3], [0.0, -0.2, 1.2]]);
        let y = DisplacementField::from_fn(&g, FieldKind::Deformation, |x| a * x);
        let j = 2;
        let s = sys.planes[j].burgers[0] * rng.gen_range(-0.5..0.5) + sys.planes[j].burgers[1] * rng.gen_range(-0.5..0.5);
        let sf = SlipField::from_fn(&g, &sys, |k, _| if k == j { s } else { V::zero() });
        let w = ElasticDensity::power(0.3, 1.0, 4.0);
        let fe = a * (Mat3::identity() + s.outer(sys.normal(j))).inverse().unwrap();
        let brute = (fe.norm().powi(4) - 0.3) * 1.0;
        assert!((elastic_nonlinear(&y, &sf, &w).unwrap() - brute).abs() < 1e-10);
    }

    #[test]
    fn det_guard_replaces_integrand() {
        let g = GridSpec::<f64>::unit_cube(2).unwrap();
        let sys = single();
        let flip = DisplacementField::from_fn(&g, FieldKind::Deformation, |x| V::new(-x[0], x[1], x[2]));
        let w = ElasticDensity::power(0.0, 2.0, 2.0);
        let e = elastic_nonlinear(&flip, &SlipField::zeros(&g, &sys), &w).unwrap();
        assert_eq!(e, 2e6);
    }

    #[test]
    fn evaluate_side_conditions() {
        let g = GridSpec::<f64>::unit_cube(4).unwrap();
        let sys = single();
        let pr = pairs(&sys);
        let w = ElasticModel::Nonlinear(ElasticDensity::power(0.0, 1.0, 2.0));
        let y = DisplacementField::identity(&g);
        let zero = SlipField::zeros(&g, &sys);
        let r = evaluate(Model::Nonlinear, &y, &zero, None, &params(4.0), &w).unwrap();
        assert!((r.total - 3.0).abs() < 1e-12);

        let ss = SlipField::from_fn(&g, &sys, |_, x| V::new(x[0], 0.0, 0.0));
        let r = evaluate(Model::Nonlinear, &y, &ss, None, &params(4.0), &w).unwrap();
        assert!(r.feasible);
        assert!((r.total - (r.elastic + r.gnd + r.hardening)).abs() < 1e-12);

        let mixed = SlipField::from_fn(&g, &sys, |_, _| V::new(1.0, 1.0, 0.0));
        let r = evaluate(Model::Nonlinear, &y, &mixed, None, &params(4.0), &w).unwrap();
        assert!(r.total.is_infinite() && !r.feasible);
        let r = evaluate(Model::Relaxed, &y, &mixed, Some(&pr), &params(4.0), &w).unwrap();
        assert!(r.total.is_finite());
        assert!(matches!(evaluate(Model::LowerBound, &y, &mixed, None, &params(2.0), &w), Err(Error::MissingPairs)));
    }

    #[test]
    fn lambda_opt_examples() {
        let g = GridSpec::<f64>::unit_cube(5).unwrap();
        let sys = single();
        let pr = pairs(&sys);
        let eq = SlipField::from_fn(&g, &sys, |_, x| V::new(1.0 + x[2], 1.0 + x[2], 0.0));
        assert!(lambda_opt(&eq, 0, &pr, 2.0).unwrap().lambda.iter().all(|l| (l - 0.5).abs() < 1e-14));
        let two = SlipField::from_fn(&g, &sys, |_, _| V::new(2.0, 1.0, 0.0));
        for p in [1.5, 2.0, 4.0] {
            assert!(lambda_opt(&two, 0, &pr, p).unwrap().lambda.iter().all(|l| (l - 2.0 / 3.0).abs() < 1e-12));
        }
        let only = SlipField::from_fn(&g, &sys, |_, _| V::new(1.0, 0.0, 0.0));
        assert!(lambda_opt(&only, 0, &pr, 2.0).unwrap().lambda.iter().all(|l| *l == 1.0 - LAMBDA_MIN));
    }

    #[test]
    fn lambda_opt_oblique_normal() {
        let g = GridSpec::<f64>::unit_cube(9).unwrap();
        let sys = SlipSystemSet::<f64>::fcc4();
        let pr = pairs(&sys);
        let (b1, b2) = (sys.planes[0].burgers[0], sys.planes[0].burgers[1]);
        let sf = SlipField::from_fn(&g, &sys, |j, _| if j == 0 { b1 * 2.0 + b2 } else { V::zero() });
        let w = lambda_opt(&sf, 0, &pr, 2.0).unwrap();
        let inside: Vec<_> = w.lambda.iter().zip(&w.slices.norm1).filter(|(_, n)| **n > 0.0).collect();
        assert!(!inside.is_empty());
        for (l, _) in inside {
            assert!((l - 2.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ub1_reduces_to_lb_for_proportional_coefficients() {
        let g = GridSpec::<f64>::unit_cube(7).unwrap();
        let sys = single();
        let pr = pairs(&sys);
        let u = DisplacementField::zeros(&g);
        let sf = SlipField::from_fn(&g, &sys, |_, x| {
            let c = (x[0] * 3.0).sin() + x[2];
            V::new(c, 0.5 * c, 0.0)
        });
        let lb = evaluate(Model::LowerBound, &u, &sf, Some(&pr), &params(2.0), &ElasticModel::Linear).unwrap();
        let ub = evaluate(Model::UpperBoundFlat, &u, &sf, Some(&pr), &params(2.0), &ElasticModel::Linear).unwrap();
        assert!((lb.total - ub.total).abs() < 1e-10);
        let single_dir = SlipField::from_fn(&g, &sys, |_, x| V::new(x[0] + x[1], 0.0, 0.0));
        let flat = flat_hardening_per_plane(&single_dir, &pr, 2.0).unwrap()[0];
        let pc = hardening(&single_dir, &pr, 2.0, HardeningMode::PerCoeff).unwrap();
        assert!((flat - pc).abs() < 1e-12);
    }

    #[test]
    fn undulating_examples() {
        let g = GridSpec::<f64>::unit_cube(5).unwrap();
        let sys = single();
        let pr = pairs(&sys);
        let u = DisplacementField::zeros(&g);
        let ones = SlipField::from_fn(&g, &sys, |_, _| V::new(1.0, 1.0, 0.0));
        let (r, _) = undulating_energy(&u, &ones, &pr, &constant_weights(&ones, 0.5), &params(2.0), &ElasticModel::Linear).unwrap();
        assert!((r.hardening - 4.0).abs() < 1e-12);

        let sf = SlipField::from_fn(&g, &sys, |_, x| V::new(x[0] * x[1], (2.0 * x[1]).cos(), 0.0));
        let (r, parts) = undulating_energy(&u, &sf, &pr, &constant_weights(&sf, 0.3), &params(2.0), &ElasticModel::Linear).unwrap();
        assert!((r.gnd - gnd_laminated(&sf, &pr).unwrap()).abs() < 1e-12);
        assert_eq!(parts.curl_weight[0], 0.0);

        let bad = constant_weights(&sf, 0.0);
        assert!(matches!(
            undulating_energy(&u, &sf, &pr, &bad, &params(2.0), &ElasticModel::Linear),
            Err(Error::WeightOutOfRange { .. })
        ));
    }

    #[test]
    fn report_serializes_infinity_as_string() {
        let g = GridSpec::<f64>::unit_cube(2).unwrap();
        let sys = SlipSystemSet::<f64>::ortho2();
        let sf = SlipField::from_fn(&g, &sys, |_, _| V::axis(0));
        let pr = pairs(&sys);
        let r = evaluate(Model::Relaxed, &DisplacementField::zeros(&g), &sf, Some(&pr), &params(2.0), &ElasticModel::Linear).unwrap();
        let js = serde_json::to_value(&r).unwrap();
        assert_eq!(js["total"], "inf");
        assert_eq!(js["feasible"], false);
    }
}
