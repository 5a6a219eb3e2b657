use rayon::prelude::*;
use serde::Serialize;

use crate::crystal::adapted_frame;
use crate::error::Result;
use crate::grid::{gradient, invert_fpl, planar_gradient, DisplacementField, SlipField};
use crate::scalar::{fixed_max, to_f64, Real};

/// Worst relative Frobenius deviation of `cof(∇y F_pl⁻¹)` from
/// `cof(∇y) F_plᵀ` over all nodes.
pub fn cofactor_identity_check<T: Real>(y: &DisplacementField<T>, sf: &SlipField<T>) -> Result<f64> {
    let finv = invert_fpl(sf)?;
    let f = gradient(&y.to_deformation());
    let worst = fixed_max(sf.grid.len(), |n| {
        let fpl_t = (crate::linalg::Mat3::identity() + sf.beta_at(n)).transpose();
        let lhs = (f.values[n] * finv.values[n]).cofactor();
        let rhs = f.values[n].cofactor() * fpl_t;
        let scale = rhs.norm().max(T::min_positive_value());
        (lhs - rhs).norm() / scale
    });
    Ok(to_f64(worst))
}

#[derive(Clone, Debug, Serialize)]
pub struct DivBound {
    /// `max_n |div s_j| − 2|∇_{m⊥} s_j|`.
    pub violation: f64,
    pub div: Vec<f64>,
    pub bound: Vec<f64>,
}

/// In-plane divergence of `s_j` in its adapted frame against twice its
/// planar-gradient norm, with the stencils of `planar_gradient`.
pub fn div_bound_check<T: Real>(sf: &SlipField<T>, j: usize) -> Result<DivBound> {
    let frame = adapted_frame(sf.systems.normal(j))?;
    let pg = planar_gradient(sf, j)?;
    let two = T::one() + T::one();
    let (div, bound): (Vec<f64>, Vec<f64>) = (0..sf.grid.len())
        .into_par_iter()
        .map(|n| {
            let d = frame.e1.dot(pg.d1[n]) + frame.e2.dot(pg.d2[n]);
            (to_f64(d), to_f64(two * pg.norm[n]))
        })
        .unzip();
    let violation = div.iter().zip(&bound).map(|(d, b)| d.abs() - b).fold(f64::NEG_INFINITY, f64::max);
    Ok(DivBound { violation, div, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{SlipPlane, SlipSystemSet};
    use crate::grid::{FieldKind, GridSpec};
    use crate::linalg::Vec3;
    use crate::oracle::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_deformation_and_zero_slip() {
        let g = GridSpec::<f64>::unit_cube(4).unwrap();
        let sys = SlipSystemSet::fcc4();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sf = random::single_plane_field(&mut rng, &g, &sys, 0.2);
        assert!(cofactor_identity_check(&DisplacementField::identity(&g), &sf).unwrap() <= 1e-12);
        let y = random::affine_deformation(&mut rng, &g);
        assert_eq!(cofactor_identity_check(&y, &SlipField::zeros(&g, &sys)).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_slip_is_rejected() {
        let g = GridSpec::<f64>::unit_cube(3).unwrap();
        let sys = SlipSystemSet::<f64>::ortho2();
        let sf = SlipField::from_fn(&g, &sys, |j, _| if j == 0 { Vec3::axis(0) } else { Vec3::axis(0) });
        assert!(cofactor_identity_check(&DisplacementField::identity(&g), &sf).is_err());
    }

    #[test]
    fn linear_field_divergence() {
        let g = GridSpec::<f64>::unit_cube(5).unwrap();
        let sys = SlipSystemSet::new(vec![SlipPlane { normal: Vec3::axis(2), burgers: vec![Vec3::axis(0), Vec3::axis(1)] }]);
        let sf = SlipField::from_fn(&g, &sys, |_, x| Vec3::new(x[0], 0.0, 0.0));
        let r = div_bound_check(&sf, 0).unwrap();
        assert!(r.div.iter().all(|d| (d - 1.0).abs() < 1e-12));
        assert!(r.bound.iter().all(|b| (b - 2.0).abs() < 1e-12));
        assert!(r.violation <= 0.0);
        let c = SlipField::from_fn(&g, &sys, |_, _| Vec3::new(0.3, -0.7, 0.0));
        let r = div_bound_check(&c, 0).unwrap();
        assert!(r.div.iter().chain(&r.bound).all(|v| *v == 0.0));
    }

    #[test]
    fn random_displacement_kind_is_accepted() {
        let g = GridSpec::<f64>::unit_cube(3).unwrap();
        let u = DisplacementField::from_fn(&g, FieldKind::Displacement, |x| x * 0.1);
        let sf = SlipField::zeros(&g, &SlipSystemSet::ortho2());
        assert_eq!(cofactor_identity_check(&u, &sf).unwrap(), 0.0);
    }
}
