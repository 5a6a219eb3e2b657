//! Alternating minimisation of the linearised single-plane energy: exact
//! displacement solves (preconditioned CG) and proximal slip steps with a
//! hard single-plane projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal::adapted_frame;
use crate::energy::{evaluate, ElasticModel, EnergyReport, Model, ModelParams};
use crate::error::{Error, Result};
use crate::grid::{
    check_single_plane, directional, partial, partial_adjoint, project_single_plane_in_place, DisplacementField,
    FieldKind, GridSpec, SlipField,
};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::{fixed_sum, lit, to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Boundary<T> {
    /// `u = γ x_k e_i` on every boundary node (`axes = [i, k]`).
    Shear {
        gamma: T,
        #[serde(default = "defaults::shear_axes")]
        axes: [usize; 2],
    },
    /// Prescribed displacements on the listed nodes.
    Mask { nodes: Vec<usize>, values: Vec<[T; 3]> },
}

impl<T: Real> Boundary<T> {
    pub fn shear(gamma: T) -> Self {
        Boundary::Shear { gamma, axes: [0, 1] }
    }

    /// Fixed-node mask and prescribed values, plus the initial guess.
    fn resolve(&self, grid: &GridSpec<T>) -> Result<(Vec<bool>, DisplacementField<T>)> {
        match self {
            Boundary::Shear { gamma, axes } => {
                let [i, k] = *axes;
                if i > 2 || k > 2 {
                    return Err(Error::Config("shear axes must be in 0..3".into()));
                }
                let fixed = (0..grid.len()).map(|n| grid.is_boundary(n)).collect();
                let u = DisplacementField::from_fn(grid, FieldKind::Displacement, |x| {
                    let mut v = Vec3::zero();
                    v[i] = *gamma * (x[k] - grid.origin[k]);
                    v
                });
                Ok((fixed, u))
            }
            Boundary::Mask { nodes, values } => {
                if nodes.is_empty() {
                    return Err(Error::Config("boundary mask constrains no node".into()));
                }
                if nodes.len() != values.len() {
                    return Err(Error::Config("boundary mask needs one value per node".into()));
                }
                let mut fixed = vec![false; grid.len()];
                let mut u = DisplacementField::zeros(grid);
                for (&n, v) in nodes.iter().zip(values) {
                    if n >= grid.len() {
                        return Err(Error::Config(format!("boundary node {n} out of range")));
                    }
                    fixed[n] = true;
                    u.values[n] = Vec3(*v);
                }
                Ok((fixed, u))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Initial<T> {
    /// `s ≡ 0`.
    #[default]
    Cold,
    /// Uniform random in-plane slips of the given amplitude, projected to a
    /// single plane per node.
    Random { amplitude: T },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize"), deny_unknown_fields)]
pub struct SolverConfig<T> {
    #[serde(default)]
    pub params: ModelParams<T>,
    pub boundary: Boundary<T>,
    #[serde(default = "defaults::max_outer")]
    pub max_outer: usize,
    #[serde(default = "defaults::tol_energy")]
    pub tol_energy: T,
    #[serde(default = "defaults::step0")]
    pub step0: T,
    /// TV smoothing width; `1e-3 · max(max|s|, 1)` when absent.
    #[serde(default)]
    pub huber_delta: Option<T>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::tol_lin")]
    pub tol_lin: T,
    #[serde(default = "defaults::max_cg")]
    pub max_cg: usize,
    #[serde(default)]
    pub initial: Initial<T>,
}

mod defaults {
    use crate::scalar::{lit, Real};
    pub fn max_outer() -> usize {
        200
    }
    pub fn tol_energy<T: Real>() -> T {
        lit(1e-6)
    }
    pub fn step0<T: Real>() -> T {
        lit(0.25)
    }
    pub fn tol_lin<T: Real>() -> T {
        lit(1e-9)
    }
    pub fn max_cg() -> usize {
        20_000
    }
    pub fn shear_axes() -> [usize; 2] {
        [0, 1]
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn new(params: ModelParams<T>, boundary: Boundary<T>) -> Self {
        Self {
            params,
            boundary,
            max_outer: defaults::max_outer(),
            tol_energy: defaults::tol_energy(),
            step0: defaults::step0(),
            huber_delta: None,
            seed: 0,
            tol_lin: defaults::tol_lin(),
            max_cg: defaults::max_cg(),
            initial: Initial::Cold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.max_outer < 1 {
            return Err(Error::Config("max_outer must be >= 1".into()));
        }
        if !(self.tol_energy > T::zero()) || !(self.step0 > T::zero()) || !(self.tol_lin > T::zero()) {
            return Err(Error::Config("tol_energy, step0 and tol_lin must be > 0".into()));
        }
        if let Some(d) = self.huber_delta {
            if !(d > T::zero()) {
                return Err(Error::Config("huber_delta must be > 0".into()));
            }
        }
        if self.params.eps_reg > T::zero() && !(self.params.p > T::one()) {
            return Err(Error::Config("the regularised objective requires p > 1".into()));
        }
        Ok(())
    }
}

fn dot<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    fixed_sum(a.len(), |n| a[n].dot(b[n]))
}

/// `w_n sym(∇v)_n` per node.
fn weighted_strain<T: Real>(grid: &GridSpec<T>, v: &[Vec3<T>], shift: Option<&[Mat3<T>]>) -> Vec<Mat3<T>> {
    (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let w = grid.cell_weight(n);
            if w == T::zero() {
                return Mat3::zero();
            }
            let g = Mat3::from_cols([partial(grid, v, n, 0), partial(grid, v, n, 1), partial(grid, v, n, 2)]);
            let mut e = g.sym();
            if let Some(b) = shift {
                e = e - b[n];
            }
            e * w
        })
        .collect()
}

/// `Gᵀ S` with `G` the nodal gradient.
fn divergence_adjoint<T: Real>(grid: &GridSpec<T>, s: &[Mat3<T>]) -> Vec<Vec3<T>> {
    let cols: Vec<Vec<Vec3<T>>> = (0..3).map(|k| s.par_iter().map(|m| m.col(k)).collect()).collect();
    (0..grid.len())
        .into_par_iter()
        .map(|n| partial_adjoint(grid, &cols[0], n, 0) + partial_adjoint(grid, &cols[1], n, 1) + partial_adjoint(grid, &cols[2], n, 2))
        .collect()
}

fn apply<T: Real>(grid: &GridSpec<T>, v: &[Vec3<T>], fixed: &[bool]) -> Vec<Vec3<T>> {
    let s = weighted_strain(grid, v, None);
    let mut out = divergence_adjoint(grid, &s);
    out.par_iter_mut().zip(fixed).for_each(|(o, &f)| {
        if f {
            *o = Vec3::zero();
        }
    });
    out
}

fn jacobi<T: Real>(grid: &GridSpec<T>, fixed: &[bool]) -> Vec<Vec3<T>> {
    let half = lit::<T>(0.5);
    (0..grid.len())
        .into_par_iter()
        .map(|m| {
            if fixed[m] {
                return Vec3::zero();
            }
            let c = grid.coords(m);
            let mut sk = [T::zero(); 3];
            for k in 0..3 {
                let s = grid.stride(k);
                let top = grid.nodes[k] - 1;
                let mut acc = grid.cell_weight(m);
                if c[k] >= 1 {
                    acc += grid.cell_weight(m - s);
                }
                if c[k] + 1 == top {
                    acc += grid.cell_weight(m + s);
                }
                let h = grid.h(k);
                sk[k] = acc / (h * h);
            }
            let mut d = Vec3::zero();
            for i in 0..3 {
                let mut v = T::zero();
                for k in 0..3 {
                    v += if i == k { sk[k] } else { half * sk[k] };
                }
                d[i] = if v > T::zero() { v.recip() } else { T::zero() };
            }
            d
        })
        .collect()
}

/// Statistics of the last elastic solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LinearStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Minimises `∫|sym(∇u − β)|²` subject to the boundary constraint.
pub fn solve_elastic<T: Real>(sf: &SlipField<T>, boundary: &Boundary<T>, tol_lin: T) -> Result<DisplacementField<T>> {
    solve_elastic_from(sf, boundary, tol_lin, None, defaults::max_cg()).map(|(u, _)| u)
}

/// As [`solve_elastic`], warm-started from `guess` (its values on fixed nodes
/// are replaced by the boundary data).
pub fn solve_elastic_from<T: Real>(
    sf: &SlipField<T>,
    boundary: &Boundary<T>,
    tol_lin: T,
    guess: Option<&DisplacementField<T>>,
    max_iter: usize,
) -> Result<(DisplacementField<T>, LinearStats)> {
    let grid = &sf.grid;
    let (fixed, bc) = boundary.resolve(grid)?;
    if !fixed.iter().any(|f| *f) {
        return Err(Error::Config("boundary constrains no node".into()));
    }
    let beta: Vec<Mat3<T>> = (0..grid.len()).into_par_iter().map(|n| sf.beta_at(n).sym()).collect();
    // Reference residual: interior at zero, boundary at the prescribed data.
    let mut base = bc.values.clone();
    base.par_iter_mut().zip(&fixed).for_each(|(v, &f)| {
        if !f {
            *v = Vec3::zero();
        }
    });
    let residual_at = |u: &[Vec3<T>]| -> Vec<Vec3<T>> {
        let s = weighted_strain(grid, u, Some(&beta));
        let mut r = divergence_adjoint(grid, &s);
        r.par_iter_mut().zip(&fixed).for_each(|(v, &f)| *v = if f { Vec3::zero() } else { -*v });
        r
    };
    let r_ref = residual_at(&base).iter().map(|v| v.norm_sq()).fold(T::zero(), |a, b| a + b).sqrt();

    let mut u: Vec<Vec3<T>> = match guess {
        Some(g) => {
            let g = g.to_displacement();
            g.values.iter().zip(&bc.values).zip(&fixed).map(|((a, b), &f)| if f { *b } else { *a }).collect()
        }
        None => bc.values.clone(),
    };
    let mut r = residual_at(&u);
    let target = tol_lin * r_ref;
    let norm = |v: &[Vec3<T>]| dot(v, v).sqrt();
    let mut rn = norm(&r);
    let done = |u: Vec<Vec3<T>>, it: usize, rn: T| {
        let res = if r_ref > T::zero() { to_f64(rn / r_ref) } else { 0.0 };
        Ok((
            DisplacementField { grid: grid.clone(), kind: FieldKind::Displacement, values: u },
            LinearStats { iterations: it, residual: res },
        ))
    };
    if rn <= target || r_ref == T::zero() {
        return done(u, 0, rn);
    }
    let dinv = jacobi(grid, &fixed);
    let precond = |r: &[Vec3<T>]| -> Vec<Vec3<T>> {
        r.par_iter().zip(&dinv).map(|(a, d)| Vec3::new(a[0] * d[0], a[1] * d[1], a[2] * d[2])).collect()
    };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(grid, &p, &fixed);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return done(u, it, rn);
        }
        let alpha = rz / pap;
        u.par_iter_mut().zip(&p).for_each(|(a, b)| *a += *b * alpha);
        r.par_iter_mut().zip(&ap).for_each(|(a, b)| *a -= *b * alpha);
        rn = norm(&r);
        if rn <= target {
            return done(u, it, rn);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta_cg = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(a, b)| *a = *b + *a * beta_cg);
    }
    Err(Error::SolverDiverged { residual: to_f64(rn / r_ref), iterations: max_iter })
}

/// Radial proximal map of `κ |s|^p`.
fn prox_radial<T: Real>(v: Vec3<T>, kappa: T, p: T) -> Vec3<T> {
    let r0 = v.norm();
    if r0 == T::zero() || kappa == T::zero() {
        return v;
    }
    let two = lit::<T>(2.0);
    let r = if p == two {
        r0 / (T::one() + two * kappa)
    } else if p == T::one() {
        (r0 - kappa).max(T::zero())
    } else {
        // solve r − r0 + κ p r^{p−1} = 0 on [0, r0]
        let f = |r: T| r - r0 + kappa * p * r.powf(p - T::one());
        let (mut lo, mut hi) = (T::zero(), r0);
        let mut r = r0 / (T::one() + kappa * p * r0.powf(p - two).min(lit(1e300)));
        for _ in 0..100 {
            let fr = f(r);
            if fr > T::zero() {
                hi = r;
            } else {
                lo = r;
            }
            let df = T::one() + kappa * p * (p - T::one()) * r.powf(p - two);
            let mut next = r - fr / df;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = (lo + hi) * lit(0.5);
            }
            if (next - r).abs() <= lit::<T>(1e-15) * r0 {
                r = next;
                break;
            }
            r = next;
        }
        r
    };
    v * (r / r0)
}

/// `L²`-metric gradient of `∫|sym(∇u − β)|² + σ·G_δ` with respect to each
/// slip, projected onto its plane (`G_δ` is the Huber-smoothed GND).
fn smooth_gradient<T: Real>(u: &DisplacementField<T>, sf: &SlipField<T>, sigma: T, delta: T) -> Result<Vec<Vec<Vec3<T>>>> {
    let grid = &sf.grid;
    let u = u.to_displacement();
    let strain = weighted_strain(grid, &u.values, None);
    let resid: Vec<Mat3<T>> = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let w = grid.cell_weight(n);
            if w == T::zero() {
                Mat3::zero()
            } else {
                strain[n] - sf.beta_at(n).sym() * w
            }
        })
        .collect();
    let two = lit::<T>(2.0);
    (0..sf.planes())
        .map(|j| {
            let frame = adapted_frame(sf.systems.normal(j))?;
            let m = frame.m;
            let s = &sf.slips[j];
            let mut g: Vec<Vec3<T>> = resid.par_iter().map(|r| -(*r * m) * two).collect();
            if sigma > T::zero() {
                let (q1, q2): (Vec<Vec3<T>>, Vec<Vec3<T>>) = (0..grid.len())
                    .into_par_iter()
                    .map(|n| {
                        let w = grid.cell_weight(n);
                        if w == T::zero() {
                            return (Vec3::zero(), Vec3::zero());
                        }
                        let d1 = directional(grid, s, n, frame.e1);
                        let d2 = directional(grid, s, n, frame.e2);
                        let r = (d1.norm_sq() + d2.norm_sq()).sqrt();
                        let k = sigma * w / if r <= delta { delta } else { r };
                        (d1 * k, d2 * k)
                    })
                    .unzip();
                g.par_iter_mut().enumerate().for_each(|(n, gn)| {
                    let mut acc = Vec3::zero();
                    for k in 0..3 {
                        acc += partial_adjoint(grid, &q1, n, k) * frame.e1[k] + partial_adjoint(grid, &q2, n, k) * frame.e2[k];
                    }
                    *gn += acc;
                });
            }
            Ok(g
                .into_par_iter()
                .enumerate()
                .map(|(n, v)| {
                    let v = v * grid.trap_weight(n).recip();
                    v - m * v.dot(m)
                })
                .collect())
        })
        .collect()
}

fn huber_width<T: Real>(cfg: &SolverConfig<T>, sf: &SlipField<T>) -> T {
    cfg.huber_delta.unwrap_or_else(|| lit::<T>(1e-3) * sf.max_norm().max(T::one()))
}

/// One forward-backward step of length `step`, followed by the single-plane
/// projection.
pub fn update_slips_with_step<T: Real>(
    u: &DisplacementField<T>,
    sf: &SlipField<T>,
    cfg: &SolverConfig<T>,
    step: T,
) -> Result<SlipField<T>> {
    let delta = huber_width(cfg, sf);
    let grad = smooth_gradient(u, sf, cfg.params.sigma, delta)?;
    let kappa = step * (cfg.params.tau + cfg.params.eps_reg);
    let p = cfg.params.p;
    let mut out = sf.clone();
    for j in 0..sf.planes() {
        let m = sf.systems.normal(j);
        out.slips[j].par_iter_mut().zip(&grad[j]).for_each(|(s, g)| {
            let v = *s - *g * step;
            let v = v - m * v.dot(m);
            *s = prox_radial(v, kappa, p);
        });
    }
    project_single_plane_in_place(&mut out);
    Ok(out)
}

pub fn update_slips<T: Real>(u: &DisplacementField<T>, sf: &SlipField<T>, cfg: &SolverConfig<T>) -> Result<SlipField<T>> {
    update_slips_with_step(u, sf, cfg, cfg.step0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    ZeroEnergy,
    MaxOuter,
    /// No step length among 40 halvings decreased the energy.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct SolveTrace<T> {
    /// Reports of the accepted iterates; entry 0 is the initial state.
    pub reports: Vec<EnergyReport>,
    /// Per outer iteration: whether a step was accepted, and its length.
    pub accepted: Vec<bool>,
    pub steps: Vec<f64>,
    pub rejections: Vec<usize>,
    pub feasible: Vec<bool>,
    pub linear: Vec<LinearStats>,
    pub stop: StopReason,
    pub u: DisplacementField<T>,
    pub s: SlipField<T>,
}

/// One row of the trace CSV.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub elastic: f64,
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub hardening: f64,
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub gnd: f64,
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub reg: f64,
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub total: f64,
    pub feasible: bool,
}

impl<T: Real> SolveTrace<T> {
    pub fn rows(&self) -> Vec<TraceRow> {
        self.reports
            .iter()
            .enumerate()
            .map(|(i, r)| TraceRow {
                iter: i,
                elastic: r.elastic,
                hardening: r.hardening,
                gnd: r.gnd,
                reg: r.regularization,
                total: r.total,
                feasible: r.feasible,
            })
            .collect()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.total).collect()
    }
}

fn objective<T: Real>(u: &DisplacementField<T>, sf: &SlipField<T>, params: &ModelParams<T>) -> Result<EnergyReport> {
    evaluate(Model::SinglePlaneLinear, u, sf, None, params, &ElasticModel::Linear)
}

/// Runs the alternating minimiser on the grid and slip systems of `template`
/// (its values are used only for [`Initial`] states other than cold).
pub fn minimize<T: Real>(cfg: &SolverConfig<T>, template: &SlipField<T>) -> Result<SolveTrace<T>> {
    cfg.validate()?;
    let grid = template.grid.clone();
    let mut s = match &cfg.initial {
        Initial::Cold => SlipField::zeros(&grid, &template.systems),
        Initial::Random { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut sf = SlipField::zeros(&grid, &template.systems);
            for j in 0..sf.planes() {
                let f = adapted_frame(sf.systems.normal(j))?;
                for n in 0..grid.len() {
                    let a = lit::<T>(rng.gen_range(-1.0..1.0)) * *amplitude;
                    let b = lit::<T>(rng.gen_range(-1.0..1.0)) * *amplitude;
                    sf.slips[j][n] = f.from_in_plane(a, b);
                }
            }
            project_single_plane_in_place(&mut sf);
            sf
        }
    };
    let (mut u, stats) = solve_elastic_from(&s, &cfg.boundary, cfg.tol_lin, None, cfg.max_cg)?;
    let mut report = objective(&u, &s, &cfg.params)?;
    let mut trace = SolveTrace {
        feasible: vec![report.feasible],
        reports: vec![report.clone()],
        accepted: Vec::new(),
        steps: Vec::new(),
        rejections: Vec::new(),
        linear: vec![stats],
        stop: StopReason::MaxOuter,
        u: u.clone(),
        s: s.clone(),
    };
    if report.total == 0.0 {
        trace.stop = StopReason::ZeroEnergy;
        return Ok(trace);
    }
    let mut step = cfg.step0;
    for _ in 0..cfg.max_outer {
        let mut trial_step = step;
        let mut found = None;
        let mut rejected = 0;
        for _ in 0..=40 {
            let cand = update_slips_with_step(&u, &s, cfg, trial_step)?;
            let r = objective(&u, &cand, &cfg.params)?;
            if r.total <= report.total {
                found = Some(cand);
                break;
            }
            rejected += 1;
            trial_step = trial_step * lit(0.5);
        }
        trace.rejections.push(rejected);
        let Some(cand) = found else {
            trace.accepted.push(false);
            trace.steps.push(to_f64(trial_step));
            trace.stop = StopReason::Stalled;
            break;
        };
        trace.accepted.push(true);
        trace.steps.push(to_f64(trial_step));
        step = (trial_step * lit(2.0)).min(cfg.step0);
        s = cand;
        let (un, st) = solve_elastic_from(&s, &cfg.boundary, cfg.tol_lin, Some(&u), cfg.max_cg)?;
        let r_solved = objective(&un, &s, &cfg.params)?;
        // CG iterates decrease the quadratic monotonically; keep the warm start
        // if round-off says otherwise.
        let new_report = if r_solved.total <= objective(&u, &s, &cfg.params)?.total {
            u = un;
            r_solved
        } else {
            objective(&u, &s, &cfg.params)?
        };
        trace.linear.push(st);
        let prev = report.total;
        report = new_report;
        trace.feasible.push(check_single_plane(&s, cfg.params.tol_feas).feasible);
        trace.reports.push(report.clone());
        if report.total == 0.0 {
            trace.stop = StopReason::ZeroEnergy;
            break;
        }
        let decrease = (prev - report.total) / prev.abs().max(f64::MIN_POSITIVE);
        if decrease < to_f64(cfg.tol_energy) {
            trace.stop = StopReason::Converged;
            break;
        }
    }
    trace.u = u;
    trace.s = s;
    Ok(trace)
}
