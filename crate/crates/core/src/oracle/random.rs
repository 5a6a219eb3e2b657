//! Seeded generators for the randomized oracle suites.

use rand::Rng;

use crate::crystal::{adapted_frame, SlipSystemSet};
use crate::grid::{DisplacementField, FieldKind, GridSpec, SlipField};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::{lit, Real};

fn uniform<T: Real, R: Rng>(rng: &mut R, lo: f64, hi: f64) -> T {
    lit(rng.gen_range(lo..hi))
}

/// `y = A x + c` with `A = I + U(−½, ½)` entries.
pub fn affine_deformation<T: Real, R: Rng>(rng: &mut R, grid: &GridSpec<T>) -> DisplacementField<T> {
    let mut a = Mat3::identity();
    for i in 0..3 {
        for k in 0..3 {
            a.0[i][k] += uniform(rng, -0.5, 0.5);
        }
    }
    let c = Vec3::new(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    DisplacementField::from_fn(grid, FieldKind::Deformation, |x| a * x + c)
}

/// Per node: one uniformly chosen plane (or none with probability
/// `zero_fraction`) carrying a uniform random in-plane slip in `[−1, 1]²`.
pub fn single_plane_field<T: Real, R: Rng>(
    rng: &mut R,
    grid: &GridSpec<T>,
    systems: &SlipSystemSet<T>,
    zero_fraction: f64,
) -> SlipField<T> {
    let frames: Vec<_> = systems.normals().into_iter().map(|m| adapted_frame(m).expect("unit normals")).collect();
    let mut sf = SlipField::zeros(grid, systems);
    for n in 0..grid.len() {
        if rng.gen_bool(zero_fraction.clamp(0.0, 1.0)) {
            continue;
        }
        let j = rng.gen_range(0..systems.len());
        sf.slips[j][n] = frames[j].from_in_plane(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    }
    sf
}

/// Every plane active everywhere with independent random in-plane values.
pub fn in_plane_field<T: Real, R: Rng>(rng: &mut R, grid: &GridSpec<T>, systems: &SlipSystemSet<T>) -> SlipField<T> {
    let frames: Vec<_> = systems.normals().into_iter().map(|m| adapted_frame(m).expect("unit normals")).collect();
    let mut sf = SlipField::zeros(grid, systems);
    for (j, f) in frames.iter().enumerate() {
        for n in 0..grid.len() {
            sf.slips[j][n] = f.from_in_plane(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        }
    }
    sf
}

/// A smooth random scalar: constant plus three low-frequency sine modes.
#[derive(Clone, Debug)]
pub struct SmoothScalar {
    offset: f64,
    modes: Vec<(f64, [f64; 3], f64)>,
}

impl SmoothScalar {
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let offset = rng.gen_range(-1.0..1.0);
        let modes = (0..3)
            .map(|_| {
                let w = [rng.gen_range(-2i32..=2) as f64, rng.gen_range(-2i32..=2) as f64, rng.gen_range(-2i32..=2) as f64];
                (rng.gen_range(-0.5..0.5), w, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Self { offset, modes }
    }

    pub fn eval<T: Real>(&self, x: Vec3<T>) -> T {
        let x = x.to_f64();
        let v = self.modes.iter().fold(self.offset, |acc, (a, w, ph)| {
            acc + a * (std::f64::consts::TAU * (w[0] * x[0] + w[1] * x[1] + w[2] * x[2]) + ph).sin()
        });
        lit(v)
    }
}

/// Two planes, feasible by construction: the active plane alternates in
/// stripes of random width along a random grid axis, with random amplitudes
/// and a random fraction of empty nodes.
pub fn two_plane_feasible<T: Real, R: Rng>(rng: &mut R, grid: &GridSpec<T>, systems: &SlipSystemSet<T>) -> SlipField<T> {
    assert!(systems.len() >= 2, "two planes required");
    let frames: Vec<_> = (0..2).map(|j| adapted_frame(systems.normal(j)).expect("unit normals")).collect();
    let axis = rng.gen_range(0..3);
    let mut owner = Vec::with_capacity(grid.nodes[axis]);
    let mut j = rng.gen_range(0..2usize);
    while owner.len() < grid.nodes[axis] {
        let width = rng.gen_range(1..=4);
        owner.extend(std::iter::repeat(j).take(width));
        j = 1 - j;
    }
    let hole = rng.gen_range(0.0..0.3);
    let mut sf = SlipField::zeros(grid, systems);
    for n in 0..grid.len() {
        if rng.gen_bool(hole) {
            continue;
        }
        let j = owner[grid.coords(n)[axis]];
        sf.slips[j][n] = frames[j].from_in_plane(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    }
    sf
}

/// A feasible two-plane field with both planes switched on at `count`
/// random nodes.
pub fn two_plane_infeasible<T: Real, R: Rng>(
    rng: &mut R,
    grid: &GridSpec<T>,
    systems: &SlipSystemSet<T>,
    count: usize,
) -> SlipField<T> {
    let mut sf = two_plane_feasible(rng, grid, systems);
    let frames: Vec<_> = (0..2).map(|j| adapted_frame(systems.normal(j)).expect("unit normals")).collect();
    for _ in 0..count.max(1) {
        let n = rng.gen_range(0..grid.len());
        for (j, f) in frames.iter().enumerate() {
            sf.slips[j][n] = f.from_in_plane(uniform(rng, 0.5, 1.0), uniform(rng, 0.5, 1.0));
        }
    }
    sf
}
