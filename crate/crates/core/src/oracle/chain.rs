use serde::Serialize;

use crate::crystal::BurgersPair;
use crate::energy::{
    clamp_lambda, coefficients, evaluate, lambda_opt, undulating_energy, upper_bound_flat, ElasticModel, Model,
    ModelParams,
};
use crate::error::Result;
use crate::grid::{DisplacementField, SlipField};
use crate::scalar::{fixed_sum, to_f64, Real};

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub lower: f64,
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub upper_flat: f64,
    /// Undulating functional at the flat optimal weights; equals the flat
    /// upper bound whenever the weights are constant on slip planes.
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub undulating_at_flat_opt: f64,
    /// `lower − upper_flat` (≤ 0 when the chain holds).
    pub gap: f64,
    /// `|c1| ∝ |c2|` on every plane (to 1e-12 in the Cauchy–Schwarz sense).
    pub proportional: bool,
    pub pass: bool,
}

fn proportional<T: Real>(c: &[Vec<T>; 2]) -> bool {
    let n = c[0].len();
    let aa = fixed_sum(n, |i| c[0][i] * c[0][i]);
    let bb = fixed_sum(n, |i| c[1][i] * c[1][i]);
    let ab = fixed_sum(n, |i| c[0][i].abs() * c[1][i].abs());
    let lhs = to_f64(ab) * to_f64(ab);
    let rhs = to_f64(aa) * to_f64(bb);
    rhs == 0.0 || lhs >= rhs * (1.0 - 1e-12)
}

/// `E_lb ≤ E_ub⁽¹⁾`, plus `I` at the flat optimal weights.
pub fn chain_check<T: Real>(
    u: &DisplacementField<T>,
    sf: &SlipField<T>,
    pairs: &[BurgersPair<T>],
    params: &ModelParams<T>,
    elastic: &ElasticModel<T>,
) -> Result<ChainReport> {
    let lb = evaluate(Model::LowerBound, u, sf, Some(pairs), params, elastic)?;
    let ub = upper_bound_flat(u, sf, pairs, params, elastic)?;
    let weights = (0..sf.planes())
        .map(|j| {
            let w = lambda_opt(sf, j, pairs, params.p)?;
            Ok(w.to_field(&sf.grid, sf.systems.normal(j)).into_iter().map(clamp_lambda).collect())
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    let (und, _) = undulating_energy(u, sf, pairs, &weights, params, elastic)?;
    let coeffs = coefficients(sf, pairs)?;
    let gap = lb.total - ub.total;
    let pass = gap <= 1e-10 * ub.total.abs().max(1.0);
    Ok(ChainReport {
        lower: lb.total,
        upper_flat: ub.total,
        undulating_at_flat_opt: und.total,
        gap,
        proportional: coeffs.iter().all(proportional),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{SlipPlane, SlipSystemSet};
    use crate::grid::GridSpec;
    use crate::linalg::Vec3;
    use crate::oracle::random::SmoothScalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type V = Vec3<f64>;

    #[test]
    fn lower_bound_below_flat_upper_bound() {
        let g = GridSpec::<f64>::unit_cube(9).unwrap();
        let sys = SlipSystemSet::new(vec![SlipPlane { normal: V::axis(2), burgers: vec![V::axis(0), V::axis(1)] }]);
        let pairs = sys.default_pairs().unwrap();
        let params = ModelParams { p: 2.0, ..Default::default() };
        let u = DisplacementField::zeros(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let (f1, f2) = (SmoothScalar::sample(&mut rng), SmoothScalar::sample(&mut rng));
            let sf = SlipField::from_fn(&g, &sys, |_, x| V::new(f1.eval(x), f2.eval(x), 0.0));
            let r = chain_check(&u, &sf, &pairs, &params, &ElasticModel::Linear).unwrap();
            assert!(r.pass, "{r:?}");
            assert!((r.undulating_at_flat_opt - r.upper_flat).abs() <= 1e-6 * r.upper_flat.max(1.0), "{r:?}");
        }
        let f = SmoothScalar::sample(&mut rng);
        let sf = SlipField::from_fn(&g, &sys, |_, x| V::new(f.eval(x), -2.5 * f.eval(x), 0.0));
        let r = chain_check(&u, &sf, &pairs, &params, &ElasticModel::Linear).unwrap();
        assert!(r.proportional);
        assert!(r.gap.abs() <= 1e-8 * r.upper_flat, "{r:?}");
    }
}
