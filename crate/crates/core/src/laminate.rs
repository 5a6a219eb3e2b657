//! Single-slip bi-layer laminates of single-plane slips and their energy
//! convergence towards the laminated limit.

use rayon::prelude::*;
use serde::Serialize;

use crate::crystal::BurgersPair;
use crate::energy::{coefficients, elastic_linear, gnd_energy, gnd_laminated, ModelParams, WeightField, LAMBDA_MIN};
use crate::error::{Error, Result};
use crate::grid::{check_single_plane, interpolate, DisplacementField, FieldKind, GridSpec, SlipField};
use crate::io::ser_f64;
use crate::linalg::Vec3;
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Weight `λ_j` of the `b_1j` sub-layer.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight<T> {
    Constant(T),
    /// Piecewise-linear table `λ(t)` in the coordinate `t = x · m`, clamped
    /// at both ends.
    Table { t: Vec<T>, lambda: Vec<T> },
    /// Nodal field `λ(x)`.
    Field(Vec<T>),
}

impl<T: Real> Weight<T> {
    fn values(&self) -> Box<dyn Iterator<Item = T> + '_> {
        match self {
            Weight::Constant(l) => Box::new(std::iter::once(*l)),
            Weight::Table { lambda, .. } => Box::new(lambda.iter().copied()),
            Weight::Field(f) => Box::new(f.iter().copied()),
        }
    }

    fn at_t(&self, t: T) -> Option<T> {
        match self {
            Weight::Constant(l) => Some(*l),
            Weight::Table { t: ts, lambda } => Some(table_lookup(ts, lambda, t)),
            Weight::Field(_) => None,
        }
    }
}

fn table_lookup<T: Real>(ts: &[T], ls: &[T], t: T) -> T {
    if t <= ts[0] {
        return ls[0];
    }
    let last = ts.len() - 1;
    if t >= ts[last] {
        return ls[last];
    }
    let i = ts.partition_point(|&x| x <= t) - 1;
    let f = (t - ts[i]) / (ts[i + 1] - ts[i]);
    ls[i] + (ls[i + 1] - ls[i]) * f
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaminationPlan<T> {
    /// Bi-layer thickness is `2^-level` along `m_j`.
    pub level: u32,
    pub pairs: Vec<BurgersPair<T>>,
    pub weights: Vec<Weight<T>>,
}

impl<T: Real> LaminationPlan<T> {
    pub fn new(level: u32, pairs: Vec<BurgersPair<T>>, weights: Vec<Weight<T>>) -> Result<Self> {
        let plan = Self { level, pairs, weights };
        plan.validate()?;
        Ok(plan)
    }

    pub fn uniform(level: u32, pairs: Vec<BurgersPair<T>>, lambda: T) -> Result<Self> {
        let weights = vec![Weight::Constant(lambda); pairs.len()];
        Self::new(level, pairs, weights)
    }

    pub fn with_level(&self, level: u32) -> Self {
        Self { level, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.level < 1 {
            return Err(Error::Config("lamination level must be >= 1".into()));
        }
        if self.weights.len() != self.pairs.len() {
            return Err(Error::Shape("one weight per plane required".into()));
        }
        let lo = lit::<T>(LAMBDA_MIN);
        let hi = T::one() - lo;
        let slack = lit::<T>(1e-12);
        for w in &self.weights {
            if let Weight::Table { t, lambda } = w {
                if t.is_empty() || t.len() != lambda.len() || t.windows(2).any(|p| !(p[1] > p[0])) {
                    return Err(Error::Config("weight table needs increasing t and matching λ values".into()));
                }
            }
            if let Some(bad) = w.values().find(|&v| !(v >= lo - slack && v <= hi + slack)) {
                return Err(Error::WeightOutOfRange { value: to_f64(bad), min: LAMBDA_MIN, max: 1.0 - LAMBDA_MIN });
            }
        }
        Ok(())
    }

    pub fn thickness(&self) -> T {
        lit::<T>(2.0).powi(-(self.level as i32))
    }

    /// Nodal weights `λ_j(x)` (tables evaluated at `t = x · m_j`).
    pub fn nodal_weights(&self, sf: &SlipField<T>) -> Result<WeightField<T>> {
        if self.weights.len() != sf.planes() {
            return Err(Error::Shape("one weight per plane required".into()));
        }
        let grid = &sf.grid;
        Ok(self
            .weights
            .iter()
            .enumerate()
            .map(|(j, w)| match w {
                Weight::Field(f) => f.clone(),
                _ => {
                    let m = sf.systems.normal(j);
                    (0..grid.len()).map(|n| w.at_t(grid.position(n).dot(m)).unwrap()).collect()
                }
            })
            .collect())
    }
}

/// Largest stencil step along `m`: `max_k h_k |m_k|`.
fn step_along<T: Real>(grid: &GridSpec<T>, m: Vec3<T>) -> T {
    (0..3).map(|k| grid.h(k) * m[k].abs()).fold(T::zero(), T::max)
}

/// Checks that every sub-layer carrying slip spans at least `min_nodes`
/// stencil steps along its normal.
pub fn check_resolution<T: Real>(sf: &SlipField<T>, plan: &LaminationPlan<T>, min_nodes: usize) -> Result<()> {
    plan.validate()?;
    if plan.pairs.len() != sf.planes() {
        return Err(Error::MissingPairs);
    }
    let coeffs = coefficients(sf, &plan.pairs)?;
    let d = plan.thickness();
    let need = from_usize::<T>(min_nodes);
    let slack = lit::<T>(1e-9);
    for j in 0..sf.planes() {
        let h = step_along(&sf.grid, sf.systems.normal(j));
        let lmin = plan.weights[j].values().fold(T::one(), T::min);
        let lmax = plan.weights[j].values().fold(T::zero(), T::max);
        let uses1 = coeffs[j][0].iter().any(|c| *c != T::zero());
        let uses2 = coeffs[j][1].iter().any(|c| *c != T::zero());
        for (used, frac, which) in [(uses1, lmin, 1), (uses2, T::one() - lmax, 2)] {
            if used && frac * d / h < need - slack {
                return Err(Error::Resolution(format!(
                    "plane {j}: sub-layer {which} at level {} spans {:.3} steps, need {min_nodes}",
                    plan.level,
                    to_f64(frac * d / h)
                )));
            }
        }
    }
    Ok(())
}

/// Per-node placement of a node inside its bi-layer.
struct Placement<T> {
    top: bool,
    lambda: T,
    divider: Vec3<T>,
}

fn clamp_into<T: Real>(grid: &GridSpec<T>, x: Vec3<T>) -> Vec3<T> {
    let mut y = x;
    for k in 0..3 {
        y[k] = y[k].max(grid.origin[k]).min(grid.origin[k] + grid.extents[k]);
    }
    y
}

fn place<T: Real>(grid: &GridSpec<T>, m: Vec3<T>, weight: &Weight<T>, level: u32, n: usize) -> Placement<T> {
    let scale = lit::<T>(2.0).powi(level as i32);
    let x = grid.position(n);
    let t = x.dot(m);
    let k = (t * scale).floor();
    let local = t * scale - k;
    let lambda = match weight {
        Weight::Field(f) => f[n],
        w => w.at_t((k + lit(0.5)) / scale).unwrap(),
    };
    let t_div = (k + lambda) / scale;
    Placement { top: local < lambda, lambda, divider: clamp_into(grid, x + m * (t_div - t)) }
}

/// The single-slip bi-layer laminate of a single-plane field. Within each
/// bi-layer `[k, k+1)·2^-n` of `t = x · m_j`, the first fraction `λ_j` carries
/// `c_1j/λ_j · b_1j` and the rest `c_2j/(1−λ_j) · b_2j`, with the
/// coefficients interpolated on the dividing plane `t = (k + λ_j)·2^-n`.
pub fn build_laminate<T: Real>(sf: &SlipField<T>, plan: &LaminationPlan<T>) -> Result<SlipField<T>> {
    build_with_mean(sf, plan, 2).map(|(lam, _)| lam)
}

/// Also returns the dividing-plane slip `c_1j b_1j + c_2j b_2j` at each
/// active node (the single-plane field the laminate averages to).
fn build_with_mean<T: Real>(
    sf: &SlipField<T>,
    plan: &LaminationPlan<T>,
    min_nodes: usize,
) -> Result<(SlipField<T>, Vec<Vec<Vec3<T>>>)> {
    let feas = check_single_plane(sf, None);
    if !feas.feasible {
        return Err(feas.infeasible_error());
    }
    check_resolution(sf, plan, min_nodes)?;
    let coeffs = coefficients(sf, &plan.pairs)?;
    let grid = &sf.grid;
    let tol = feas.tol_feas;
    let mut slips = Vec::with_capacity(sf.planes());
    let mut means = Vec::with_capacity(sf.planes());
    for j in 0..sf.planes() {
        let m = sf.systems.normal(j);
        let pair = plan.pairs[j];
        let (c1, c2) = (&coeffs[j][0], &coeffs[j][1]);
        let (s, mean): (Vec<_>, Vec<_>) = (0..grid.len())
            .into_par_iter()
            .map(|n| {
                if to_f64(sf.slips[j][n].norm()) <= tol {
                    return (Vec3::zero(), Vec3::zero());
                }
                let p = place(grid, m, &plan.weights[j], plan.level, n);
                let a = interpolate(grid, c1, p.divider).unwrap_or(c1[n]);
                let b = interpolate(grid, c2, p.divider).unwrap_or(c2[n]);
                let slip = if p.top { pair.b1 * (a / p.lambda) } else { pair.b2 * (b / (T::one() - p.lambda)) };
                (slip, pair.slip(a, b))
            })
            .unzip();
        slips.push(s);
        means.push(mean);
    }
    Ok((SlipField { grid: grid.clone(), systems: sf.systems.clone(), slips }, means))
}

/// Plastic part of the laminated limit:
/// `τ Σ_j ∫ |c_1j|^p/λ^{p−1} + |c_2j|^p/(1−λ)^{p−1} + σ G_lam`.
pub fn laminate_limit<T: Real>(
    sf: &SlipField<T>,
    pairs: &[BurgersPair<T>],
    lambda: &WeightField<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    let coeffs = coefficients(sf, pairs)?;
    if lambda.len() != sf.planes() {
        return Err(Error::Shape("one weight field per plane required".into()));
    }
    let p = params.p;
    let pm1 = p - T::one();
    let grid = &sf.grid;
    let mut hard = T::zero();
    for j in 0..sf.planes() {
        let (c1, c2, l) = (&coeffs[j][0], &coeffs[j][1], &lambda[j]);
        hard += grid.integrate_trap(|n| {
            c1[n].abs().powf(p) / l[n].powf(pm1) + c2[n].abs().powf(p) / (T::one() - l[n]).powf(pm1)
        });
    }
    Ok(params.tau * hard + params.sigma * gnd_laminated(sf, pairs)?)
}

/// Displacement perturbation accommodating a flat, mesh-aligned laminate:
/// along every grid line parallel to `m_j` the corrector's forward difference
/// equals the laminate slip minus the dividing-plane slip, so `∇u − β` stays
/// bounded across layers. `None` if some active normal is not a grid axis.
fn corrector<T: Real>(lam: &SlipField<T>, means: &[Vec<Vec3<T>>]) -> Option<Vec<Vec3<T>>> {
    let grid = &lam.grid;
    let mut v = vec![Vec3::zero(); grid.len()];
    for j in 0..lam.planes() {
        if lam.slips[j].iter().all(|s| s.norm_sq() == T::zero()) {
            continue;
        }
        let m = lam.systems.normal(j);
        let k = (0..3).find(|&k| m[k].abs() >= T::one() - lit(1e-12))?;
        let sign = m[k].signum();
        let h = grid.h(k);
        let stride = grid.stride(k);
        for n in 0..grid.len() {
            if grid.coords(n)[k] != 0 {
                continue;
            }
            let mut acc = Vec3::zero();
            for i in 0..grid.nodes[k] {
                let node = n + i * stride;
                v[node] += acc;
                acc += (lam.slips[j][node] - means[j][node]) * (h * sign);
            }
        }
    }
    Some(v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u32,
    #[serde(serialize_with = "ser_f64")]
    pub hardening: f64,
    #[serde(serialize_with = "ser_f64")]
    pub gnd: f64,
    /// Linearised elastic energy with the layer corrector; NaN when the
    /// corrector is unavailable (oblique normals).
    #[serde(serialize_with = "ser_f64")]
    pub elastic: f64,
    #[serde(serialize_with = "ser_f64")]
    pub predicted: f64,
    #[serde(serialize_with = "ser_f64")]
    pub error: f64,
}

pub type ConvergenceTable = Vec<ConvergenceRow>;

/// Builds laminates for each level in `levels` and compares `τ·hardening +
/// σ·gnd` with [`laminate_limit`]. The laminate hardening uses the cell rule,
/// which integrates fields that are constant on each cell's span along `m`
/// exactly. `u` is the displacement the corrector perturbs.
pub fn convergence_study<T: Real>(
    sf: &SlipField<T>,
    u: &DisplacementField<T>,
    plan: &LaminationPlan<T>,
    levels: std::ops::RangeInclusive<u32>,
    params: &ModelParams<T>,
) -> Result<ConvergenceTable> {
    let finest = plan.with_level(*levels.end());
    check_resolution(sf, &finest, 4)?;
    let lambda = plan.nodal_weights(sf)?;
    let predicted = laminate_limit(sf, &plan.pairs, &lambda, params)?;
    let u = u.to_displacement();
    levels
        .map(|n| {
            let (lam, means) = build_with_mean(sf, &plan.with_level(n), 4)?;
            let grid = &lam.grid;
            let hard = lam
                .slips
                .iter()
                .map(|s| grid.integrate_cell(|i| s[i].norm().powf(params.p)))
                .fold(T::zero(), |a, b| a + b);
            let gnd = gnd_energy(&lam)?;
            let elastic = match corrector(&lam, &means) {
                Some(v) => {
                    let values = u.values.iter().zip(&v).map(|(a, b)| *a + *b).collect();
                    let un = DisplacementField { grid: grid.clone(), kind: FieldKind::Displacement, values };
                    to_f64(elastic_linear(&un, &lam))
                }
                None => f64::NAN,
            };
            let plastic = params.tau * hard + params.sigma * gnd;
            Ok(ConvergenceRow {
                n,
                hardening: to_f64(hard),
                gnd: to_f64(gnd),
                elastic,
                predicted: to_f64(predicted),
                error: to_f64((plastic - predicted).abs()),
            })
        })
        .collect()
}

/// Least-squares slope of `log2(error)` against `n`, negated (so first-order
/// convergence gives ≈ 1).
pub fn fitted_rate(table: &ConvergenceTable) -> f64 {
    let pts: Vec<(f64, f64)> = table.iter().filter(|r| r.error > 0.0).map(|r| (r.n as f64, r.error.log2())).collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    -sxy / sxx
}

/// Largest difference between box averages of two slip fields over a
/// partition into boxes of side `window` (weak-convergence proxy).
pub fn windowed_deviation<T: Real>(a: &SlipField<T>, b: &SlipField<T>, window: T) -> f64 {
    let grid = &a.grid;
    let counts: Vec<usize> = (0..3).map(|k| (grid.extents[k] / window).ceil().to_usize().unwrap_or(1).max(1)).collect();
    let nbox = counts[0] * counts[1] * counts[2];
    let mut sums = vec![(T::zero(), vec![Vec3::<T>::zero(); a.planes()]); nbox];
    for n in 0..grid.len() {
        let w = grid.cell_weight(n);
        if w == T::zero() {
            continue;
        }
        let c = grid.coords(n);
        let mut bi = [0usize; 3];
        for k in 0..3 {
            let x = from_usize::<T>(c[k]) * grid.h(k);
            bi[k] = (x / window).floor().to_usize().unwrap_or(0).min(counts[k] - 1);
        }
        let id = bi[0] + counts[0] * (bi[1] + counts[1] * bi[2]);
        sums[id].0 += w;
        for j in 0..a.planes() {
            sums[id].1[j] += (a.slips[j][n] - b.slips[j][n]) * w;
        }
    }
    sums.iter()
        .filter(|(w, _)| *w > T::zero())
        .flat_map(|(w, d)| d.iter().map(move |v| to_f64(v.norm() / *w)))
        .fold(0.0, f64::max)
}
