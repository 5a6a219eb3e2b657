use serde::{Deserialize, Serialize};

use crate::crystal::{BurgersPair, SlipPlane, SlipSystemSet};
use crate::energy::{evaluate, gnd_per_plane, slip_power_per_plane, undulating_energy, upper_bound_flat, ElasticModel, Model, ModelParams};
use crate::error::{Error, Result};
use crate::grid::{check_single_plane, DisplacementField, GridSpec, SlipField};
use crate::linalg::Vec3;
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ex41Options {
    /// Half-length `X` of the domain along `x2`.
    pub x: f64,
    pub eps: f64,
    /// Nodes along `x2` (odd, so that `x2 = 0` is a node); by default the
    /// spacing is held at `10/256`.
    #[serde(default)]
    pub nodes: Option<usize>,
}

impl Ex41Options {
    pub fn new(x: f64, eps: f64) -> Self {
        Self { x, eps, nodes: None }
    }

    pub fn nodes(&self) -> usize {
        self.nodes.unwrap_or_else(|| 2 * (self.x * 25.6).round().max(1.0) as usize + 1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Ex41Report {
    pub x: f64,
    pub eps: f64,
    pub nodes: usize,
    /// Plastic part of the flat upper bound (`λ = ½` by symmetry).
    pub flat_plastic: f64,
    pub flat_hardening: f64,
    pub flat_curl: f64,
    /// `2(2X(1+ε)² + (1−ε))` as printed in the paper.
    pub flat_paper_formula: f64,
    /// `2(2X(1+ε²) + (1−ε))`, the value the construction actually yields.
    pub flat_closed_form: f64,
    pub lambda_opt_range: [f64; 2],
    /// `L²` (hardening) part of the sigmoidal laminate.
    pub sigmoid_hardening: f64,
    pub sigmoid_bracket: [f64; 2],
    /// Curl part of the sigmoidal laminate (`H₂(ε)`).
    pub sigmoid_curl: f64,
    pub sigmoid_plastic: f64,
    pub lower_bound_plastic: f64,
    /// `sigmoid_plastic / flat_plastic`.
    pub ratio: f64,
}

/// The essentially one-dimensional example on `(0,1)×(−X,X)×(0,1)` with a
/// swap of dominant Burgers direction at `x2 = 0`.
pub fn example_41<T: Real>(opts: &Ex41Options) -> Result<Ex41Report> {
    let (x, eps) = (opts.x, opts.eps);
    if !(x > 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config("example 4.1 needs X > 1 and 0 < eps < 1".into()));
    }
    let n2 = opts.nodes();
    if n2 % 2 == 0 {
        return Err(Error::Config("x2 node count must be odd".into()));
    }
    let grid = GridSpec::<T>::new([T::zero(), lit(-x), T::zero()], [T::one(), lit(2.0 * x), T::one()], [2, n2, 2])?;
    let h = 2.0 * x / (n2 - 1) as f64;
    let inner = (2.0 / h).ceil() as usize - 1;
    if inner < 8 {
        return Err(Error::Resolution(format!("only {inner} nodes in the affine zone -1 < x2 < 1 (need 8)")));
    }
    let mid = (n2 - 1) / 2;
    let sys = SlipSystemSet::new(vec![SlipPlane { normal: Vec3::axis(2), burgers: vec![Vec3::axis(0), Vec3::axis(1)] }]);
    let pairs = vec![BurgersPair::new(Vec3::axis(0), Vec3::axis(1))?];
    let e: T = lit(eps);
    let mut sf = SlipField::zeros(&grid, &sys);
    for n in 0..grid.len() {
        let below = grid.coords(n)[1] < mid;
        sf.slips[0][n] = if below { Vec3::new(T::one(), e, T::zero()) } else { Vec3::new(e, T::one(), T::zero()) };
    }
    let params = ModelParams { p: lit(2.0), sigma: T::one(), tau: T::one(), eps_reg: T::zero(), tol_feas: None };
    let u = DisplacementField::zeros(&grid);
    let flat = upper_bound_flat(&u, &sf, &pairs, &params, &ElasticModel::Linear)?;
    let lo = crate::energy::lambda_opt(&sf, 0, &pairs, params.p)?;
    let lam_range = lo.lambda.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |r, l| [r[0].min(to_f64(*l)), r[1].max(to_f64(*l))]);
    let (a, b) = (1.0 / (1.0 + eps), eps / (1.0 + eps));
    let profile = |x2: f64| {
        if x2 <= -1.0 {
            a
        } else if x2 >= 1.0 {
            b
        } else {
            a + (b - a) * (x2 + 1.0) / 2.0
        }
    };
    let weights = vec![(0..grid.len())
        .map(|n| lit::<T>(profile(-x + grid.coords(n)[1] as f64 * h)))
        .collect::<Vec<T>>()];
    let (und, _) = undulating_energy(&u, &sf, &pairs, &weights, &params, &ElasticModel::Linear)?;
    let lb = evaluate(Model::LowerBound, &u, &sf, Some(&pairs), &params, &ElasticModel::Linear)?;
    let base = (x - 1.0) * (1.0 + eps).powi(2);
    let flat_plastic = flat.plastic(1.0, 1.0, 0.0);
    let sigmoid_plastic = und.plastic(1.0, 1.0, 0.0);
    Ok(Ex41Report {
        x,
        eps,
        nodes: n2,
        flat_plastic,
        flat_hardening: flat.hardening,
        flat_curl: flat.gnd,
        flat_paper_formula: 2.0 * (2.0 * x * (1.0 + eps).powi(2) + (1.0 - eps)),
        flat_closed_form: 2.0 * (2.0 * x * (1.0 + eps * eps) + (1.0 - eps)),
        lambda_opt_range: lam_range,
        sigmoid_hardening: und.hardening,
        sigmoid_bracket: [2.0 * (base + 1.0 + eps + 2.0 * eps * eps), 2.0 * (base + 2.0 + eps * (1.0 + eps))],
        sigmoid_curl: und.gnd,
        sigmoid_plastic,
        lower_bound_plastic: lb.plastic(1.0, 1.0, 0.0),
        ratio: sigmoid_plastic / flat_plastic,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ex52Options {
    pub p: f64,
    pub widths: Vec<f64>,
    /// Side of the square cross-section.
    #[serde(default = "ex52_side")]
    pub side: f64,
    /// Grid spacing in the cross-section.
    #[serde(default = "ex52_h")]
    pub h: f64,
    /// Total shear carried by each band.
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "one")]
    pub tau: f64,
}

fn ex52_side() -> f64 {
    2.0
}
fn ex52_h() -> f64 {
    1.0 / 256.0
}
fn one() -> f64 {
    1.0
}

impl Ex52Options {
    pub fn new(p: f64) -> Self {
        Self { p, widths: vec![0.125, 0.0625, 0.03125, 0.015625], side: ex52_side(), h: ex52_h(), gamma: 1.0, sigma: 1.0, tau: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Ex52Row {
    pub width: f64,
    pub hardening: f64,
    pub gnd: f64,
    /// GND of the cut-off band alone.
    pub gnd_cut: f64,
    pub plastic: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Ex52Report {
    pub p: f64,
    pub gamma: f64,
    pub rows: Vec<Ex52Row>,
    /// Least-squares slope of `ln hardening` against `ln width`.
    pub growth_exponent: f64,
    /// `(max − min) / min` of the plastic energy over the widths.
    pub variation: f64,
    /// Worst `|gnd_cut / (2γ) − 1|`.
    pub gnd_cut_deviation: f64,
}

/// Trapezoidal unit-mass profile on `|ξ| ≤ ½` with plateau `|ξ| ≤ ¼`.
fn trapezoid(xi: f64) -> f64 {
    let a = xi.abs();
    let top = 4.0 / 3.0;
    if a <= 0.25 {
        top
    } else if a < 0.5 {
        top * (0.5 - a) / 0.25
    } else {
        0.0
    }
}

/// Two crossing shear bands of width `w` in the `(x, y)` cross-section: band
/// A (normal `e2`, shear along `e1`) intact, band B (normal `e1`, shear along
/// `e2`) switched off across A with linear ramps of length `w`.
pub fn crossing_bands<T: Real>(grid: &GridSpec<T>, w: f64, gamma: f64) -> SlipField<T> {
    let sys = ex52_systems::<T>();
    SlipField::from_fn(grid, &sys, |j, x| {
        let (px, py) = (to_f64(x[0]), to_f64(x[1]));
        let amp = gamma / w;
        if j == 0 {
            Vec3::new(lit(amp * trapezoid(py / w)), T::zero(), T::zero())
        } else {
            let cut = ((py.abs() - 0.5 * w) / w).clamp(0.0, 1.0);
            Vec3::new(T::zero(), lit(amp * trapezoid(px / w) * cut), T::zero())
        }
    })
}

fn ex52_systems<T: Real>() -> SlipSystemSet<T> {
    SlipSystemSet::new(vec![
        SlipPlane { normal: Vec3::axis(1), burgers: vec![Vec3::axis(0), Vec3::axis(2)] },
        SlipPlane { normal: Vec3::axis(0), burgers: vec![Vec3::axis(1), Vec3::axis(2)] },
    ])
}

pub fn example_52<T: Real>(opts: &Ex52Options) -> Result<Ex52Report> {
    if !(opts.p >= 1.0) || opts.widths.is_empty() || !(opts.h > 0.0) || !(opts.side > 0.0) {
        return Err(Error::Config("example 5.2 needs p >= 1, a width list, h > 0 and side > 0".into()));
    }
    let cells = (opts.side / opts.h).round() as usize;
    if cells % 2 != 0 || ((cells as f64) * opts.h - opts.side).abs() > 1e-9 * opts.side {
        return Err(Error::Config("side must be an even multiple of h".into()));
    }
    let half = lit::<T>(opts.side / 2.0);
    let grid = GridSpec::<T>::new([-half, -half, T::zero()], [lit(opts.side), lit(opts.side), T::one()], [cells + 1, cells + 1, 2])?;
    let mut rows = Vec::new();
    for &w in &opts.widths {
        if w / opts.h < 4.0 - 1e-9 {
            return Err(Error::Resolution(format!("band width {w} spans fewer than 4 cells of size {}", opts.h)));
        }
        if 1.5 * w >= opts.side / 2.0 {
            return Err(Error::Resolution(format!("band width {w} too large for the cross-section")));
        }
        let sf = crossing_bands::<T>(&grid, w, opts.gamma);
        let hard: f64 = slip_power_per_plane(&sf, lit(opts.p)).into_iter().map(to_f64).sum();
        let gnd = gnd_per_plane(&sf)?;
        let gnd_total: f64 = gnd.iter().map(|v| to_f64(*v)).sum();
        rows.push(Ex52Row {
            width: w,
            hardening: hard,
            gnd: gnd_total,
            gnd_cut: to_f64(gnd[1]),
            plastic: opts.tau * hard + opts.sigma * gnd_total,
            feasible: check_single_plane(&sf, None).feasible,
        });
    }
    let growth_exponent = fit_slope(&rows.iter().map(|r| (r.width.ln(), r.hardening.ln())).collect::<Vec<_>>());
    let (mn, mx) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.plastic), b.max(r.plastic)));
    let gnd_cut_deviation = rows.iter().map(|r| (r.gnd_cut / (2.0 * opts.gamma) - 1.0).abs()).fold(0.0, f64::max);
    Ok(Ex52Report { p: opts.p, gamma: opts.gamma, rows, growth_exponent, variation: (mx - mn) / mn, gnd_cut_deviation })
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
