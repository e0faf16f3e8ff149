use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::grid::{sup_distance, PartitionScheme, SampledPath, TimeGrid};
use crate::lift::{bracket, rie_lift, RoughPath};
use crate::noise::{generate, NoiseSpec};

fn brownian(dim: usize, level: u32, seed: u64) -> Arc<RoughPath> {
    Arc::new(rie_lift(&generate(&NoiseSpec::brownian(dim, 1.0, level, seed)).unwrap()))
}

fn walk_lift(steps: &[f64]) -> Arc<RoughPath> {
    let grid = TimeGrid::from_times((0..=steps.len()).map(|i| i as f64 / steps.len() as f64).collect()).unwrap();
    let mut v = vec![0.0];
    for s in steps {
        v.push(v.last().unwrap() + s);
    }
    Arc::new(rie_lift(&SampledPath::new(grid, 1, v).unwrap()))
}

/// `Σ a_k X^k` with derivative `Σ k a_k X^{k−1}` on a scalar reference.
fn polynomial(rp: &Arc<RoughPath>, coeffs: &[f64]) -> ControlledPath {
    let x = rp.base().values();
    let values = x.iter().map(|&x| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)).collect();
    let deriv = x
        .iter()
        .map(|&x| {
            coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
        })
        .collect();
    ControlledPath::new(rp.clone(), 1, 1, values, deriv).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn reference_and_constant_norms() {
    let rp = walk_lift(&[0.5, -0.25, 1.0, -2.0]);
    let x = ControlledPath::reference_path(rp.clone());
    let n = controlled_norm(&x, 2.5, None).unwrap();
    assert_eq!(n, 1.0);
    for s in 0..rp.len() {
        for t in s..rp.len() {
            assert!(x.remainder(s, t)[0].abs() < 1e-15);
        }
    }
    let c = ControlledPath::constant(rp, 1, 1, &[-3.0]).unwrap();
    assert_eq!(controlled_norm(&c, 2.5, None).unwrap(), 3.0);
}

#[test]
fn square_of_reference() {
    let rp = brownian(1, 6, 3);
    let x = ControlledPath::reference_path(rp.clone());
    let sq = product(&x, &x).unwrap();
    let explicit = polynomial(&rp, &[0.0, 0.0, 1.0]);
    assert!(max_abs_diff(sq.values().values(), explicit.values().values()) < 1e-15);
    assert!(max_abs_diff(sq.derivatives().values(), explicit.derivatives().values()) < 1e-15);
    let anchors: Vec<usize> = (0..rp.len()).step_by(8).collect();
    for &s in &anchors {
        for &t in &anchors {
            if s < t {
                let inc = rp.base().increment(s, t)[0];
                assert!((sq.remainder(s, t)[0] - inc * inc).abs() < 1e-13);
            }
        }
    }
    let rnorm = crate::grid::two_param_p_variation(|s, t| sq.remainder(s, t)[0].abs(), 1.25, &anchors).unwrap();
    let direct =
        crate::grid::two_param_p_variation(|s, t| rp.base().increment(s, t)[0].powi(2), 1.25, &anchors).unwrap();
    assert!((rnorm - direct).abs() < 1e-12);
}

#[test]
fn product_with_constant() {
    let rp = brownian(2, 5, 1);
    let g = ControlledPath::reference_path(rp.clone());
    let c = ControlledPath::constant(rp, 1, 1, &[2.5]).unwrap();
    let pg = product(&c, &g).unwrap();
    assert_eq!(pg.shape(), (2, 1));
    assert_eq!(pg.values().values(), g.scale(2.5).values().values());
    assert_eq!(pg.derivatives().values(), g.scale(2.5).derivatives().values());
}

#[test]
fn product_rejects_incompatible_shapes() {
    let rp = brownian(2, 3, 1);
    let x = ControlledPath::reference_path(rp);
    assert!(product(&x, &x).is_err());
    assert!(product(&x.transpose(), &x).is_ok());
}

#[test]
fn matrix_product_remainder_identity() {
    let rp = brownian(2, 8, 11);
    let x = ControlledPath::reference_path(rp.clone());
    let x1 = x.entry(0, 0).unwrap();
    let x2 = x.entry(1, 0).unwrap();
    let f = ControlledPath::concat_cols(&[&product(&x1, &x2).unwrap(), &x1.shift(&[1.0]).unwrap()]).unwrap();
    let g = ControlledPath::stack_rows(&[&compose_smooth(&x2, &Exp).unwrap(), &x1]).unwrap();
    let fg = product(&f, &g).unwrap();
    assert_eq!(fg.shape(), (1, 1));
    let mut worst = 0.0f64;
    for k in 0..1000u64 {
        let a = (k * 7919 % 257) as usize;
        let b = (k * 104_729 % 257) as usize;
        let (s, t) = (a.min(b), a.max(b));
        let rf = f.remainder(s, t);
        let rg = g.remainder(s, t);
        let df: Vec<f64> = f.value(t).iter().zip(f.value(s)).map(|(x, y)| x - y).collect();
        let dg: Vec<f64> = g.value(t).iter().zip(g.value(s)).map(|(x, y)| x - y).collect();
        let mut expect = 0.0;
        for j in 0..2 {
            expect += rf[j] * g.value(s)[j] + f.value(s)[j] * rg[j] + df[j] * dg[j];
        }
        worst = worst.max((fg.remainder(s, t)[0] - expect).abs());
    }
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn compose_examples() {
    let rp = brownian(1, 8, 5);
    let x = ControlledPath::reference_path(rp.clone());
    let id = compose_smooth(&x, &Identity { rows: 1, cols: 1 }).unwrap();
    assert_eq!(id.values().values(), x.values().values());
    assert_eq!(id.derivatives().values(), x.derivatives().values());
    let sq = compose_smooth(&x, &Square).unwrap();
    let pr = product(&x, &x).unwrap();
    assert!(max_abs_diff(sq.values().values(), pr.values().values()) < 1e-15);
    assert!(max_abs_diff(sq.derivatives().values(), pr.derivatives().values()) < 1e-15);
    // Y in [1, 2]
    let y = compose_smooth(&x, &FnMap::new(1, (1, 1), |x, v, j| {
        v[0] = 1.5 + 0.5 * x[0].sin();
        j[0] = 0.5 * x[0].cos();
        Ok(())
    }))
    .unwrap();
    let inv = compose_smooth(&y, &Reciprocal { floor: 1e-8 }).unwrap();
    for i in 0..y.len() {
        assert!((inv.value(i)[0] * y.value(i)[0] - 1.0).abs() < 1e-15);
    }
}

#[test]
fn compose_rejects_singularity() {
    let rp = walk_lift(&[1.0, -1.0]);
    let x = ControlledPath::reference_path(rp);
    assert!(matches!(compose_smooth(&x, &Reciprocal { floor: 1e-8 }), Err(crate::Error::Singular { .. })));
}

#[test]
fn compose_chain_rule() {
    let rp = brownian(1, 8, 9);
    let x = ControlledPath::reference_path(rp);
    let g = FnMap::new(1, (1, 1), |x, v, j| {
        v[0] = x[0].sin();
        j[0] = x[0].cos();
        Ok(())
    });
    let f = FnMap::new(1, (1, 1), |x, v, j| {
        v[0] = x[0] * x[0] * x[0];
        j[0] = 3.0 * x[0] * x[0];
        Ok(())
    });
    let fg = FnMap::new(1, (1, 1), |x, v, j| {
        let s = x[0].sin();
        v[0] = s * s * s;
        j[0] = 3.0 * s * s * x[0].cos();
        Ok(())
    });
    let two_step = compose_smooth(&compose_smooth(&x, &g).unwrap(), &f).unwrap();
    let one_step = compose_smooth(&x, &fg).unwrap();
    assert!(max_abs_diff(two_step.values().values(), one_step.values().values()) < 1e-15);
    assert!(max_abs_diff(two_step.derivatives().values(), one_step.derivatives().values()) < 1e-14);
}

#[test]
fn matrix_inverse_jacobian_matches_finite_differences() {
    let map = MatrixInverse { n: 2, det_floor: 1e-8 };
    let a = [2.0, 0.3, -0.4, 1.5];
    let mut v = [0.0; 4];
    let mut jac = [0.0; 16];
    map.eval(&a, &mut v, &mut jac).unwrap();
    let h = 1e-6;
    for k in 0..4 {
        let mut ap = a;
        let mut am = a;
        ap[k] += h;
        am[k] -= h;
        let (mut vp, mut vm, mut scratch) = ([0.0; 4], [0.0; 4], [0.0; 16]);
        map.eval(&ap, &mut vp, &mut scratch).unwrap();
        map.eval(&am, &mut vm, &mut scratch).unwrap();
        for o in 0..4 {
            assert!(((vp[o] - vm[o]) / (2.0 * h) - jac[o * 4 + k]).abs() < 1e-8);
        }
    }
    assert!(map.eval(&[1.0, 2.0, 2.0, 4.0], &mut v, &mut jac).is_err());
}

#[test]
fn integral_of_one_telescopes() {
    let rp = brownian(2, 8, 2);
    let g = ControlledPath::reference_path(rp.clone());
    let one = ControlledPath::constant(rp, 1, 2, &[1.0, 1.0]).unwrap();
    let z = rough_integral(&one, &g).unwrap();
    for i in 0..g.len() {
        let expect = g.value(i)[0] - g.value(0)[0] + g.value(i)[1] - g.value(0)[1];
        assert!((z.value(i)[0] - expect).abs() < 1e-13);
    }
}

#[test]
fn integral_of_reference_is_the_lift() {
    let rp = brownian(1, 10, 4);
    let x = ControlledPath::reference_path(rp.clone());
    let z = rough_integral(&x, &x).unwrap();
    let n = rp.len() - 1;
    assert!((z.value(n)[0] - rp.iterated_at(n)[0]).abs() < 1e-13);
}

#[test]
fn polarization_on_brownian() {
    let rp = brownian(1, 16, 21);
    let x = ControlledPath::reference_path(rp.clone());
    let z = rough_integral(&x, &x).unwrap();
    let n = rp.len() - 1;
    let br = bracket(&rp).last()[0];
    let w = rp.base().value(n)[0];
    assert!((2.0 * z.value(n)[0] + br - (w * w - 0.0)).abs() <= 1e-9);
}

#[test]
fn integral_is_linear() {
    let rp = brownian(1, 10, 8);
    let x = ControlledPath::reference_path(rp.clone());
    let f1 = polynomial(&rp, &[0.3, -1.0, 0.5]);
    let f2 = compose_smooth(&x, &Exp).unwrap();
    let lhs = rough_integral(&f1.linear_combination(2.0, &f2, -0.5).unwrap(), &x).unwrap();
    let a = rough_integral(&f1, &x).unwrap();
    let b = rough_integral(&f2, &x).unwrap();
    let rhs = a.linear_combination(2.0, &b, -0.5).unwrap();
    assert!(sup_distance(lhs.values(), rhs.values()).unwrap() < 1e-12);
}

#[test]
fn riemann_sums() {
    let rp = brownian(1, 12, 13);
    let x = ControlledPath::reference_path(rp.clone());
    let one = ControlledPath::constant(rp.clone(), 1, 1, &[1.0]).unwrap();
    for n in [1, 3, 7] {
        let r = riemann_sum_integral(&one, &x, &PartitionScheme::dyadic(1.0), n).unwrap();
        assert!(r.sup_distance < 1e-13);
    }
    let errs: Vec<f64> = (6..=12)
        .map(|n| riemann_sum_integral(&x, &x, &PartitionScheme::dyadic(1.0), n).unwrap().sup_distance)
        .collect();
    assert!(errs[6] < 1e-12);
    let pts: Vec<(f64, f64)> = (6..12).map(|n| (n as f64, errs[n - 6].log2())).collect();
    let fit = crate::lab::rate_fit(&pts).unwrap();
    assert!(fit.slope <= -0.3, "{fit:?}");
}

#[test]
fn riemann_sum_for_smooth_integrand() {
    let grid = TimeGrid::dyadic(10, 1.0).unwrap();
    let rp = Arc::new(rie_lift(&SampledPath::identity(grid)));
    let g = ControlledPath::reference_path(rp);
    for n in [2usize, 4, 8, 16, 64] {
        let r = riemann_sum_integral(&g, &g, &PartitionScheme::uniform(1.0), n).unwrap();
        assert!(r.sup_distance <= 1.0 / n as f64, "{n}: {}", r.sup_distance);
    }
}

#[test]
fn canonical_lift_examples() {
    let rp = brownian(2, 10, 17);
    let x = ControlledPath::reference_path(rp.clone());
    let lifted = canonical_lift(&x).unwrap();
    let worst = (0..rp.len())
        .map(|i| max_abs_diff(lifted.iterated_at(i), rp.iterated_at(i)))
        .fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst}");
    let c = ControlledPath::constant(rp.clone(), 2, 1, &[1.0, -4.0]).unwrap();
    let cl = canonical_lift(&c).unwrap();
    assert!((0..rp.len()).all(|i| cl.iterated_at(i).iter().all(|&v| v == 0.0)));
    assert!(canonical_lift(&x.transpose()).is_err());
}

#[test]
fn associativity_trivial_cases() {
    let rp = brownian(1, 10, 3);
    let x = ControlledPath::reference_path(rp.clone());
    let f = polynomial(&rp, &[1.0, 0.5, -0.2]);
    let one = ControlledPath::constant(rp.clone(), 1, 1, &[1.0]).unwrap();
    assert!(associativity_residual(&one, &f, &x).unwrap().residual < 1e-13);
    assert!(associativity_residual(&f, &one, &x).unwrap().residual < 1e-13);
}

#[test]
fn associativity_on_random_polynomials() {
    let rp = brownian(1, 12, 77);
    let x = ControlledPath::reference_path(rp.clone());
    let y = polynomial(&rp, &[0.2, -1.0, 0.7, 0.1]);
    let f = polynomial(&rp, &[1.0, 0.4, -0.3]);
    let g = product(&x, &polynomial(&rp, &[0.5, 0.5])).unwrap();
    let rep = associativity_residual(&y, &f, &g).unwrap();
    assert!(rep.residual <= 1e-8 * rep.scale, "{rep:?}");
}

#[test]
fn sewing_bounds_dominate_defects() {
    let rp = brownian(1, 10, 5);
    let x = ControlledPath::reference_path(rp.clone());
    let f = polynomial(&rp, &[0.1, 1.0, -0.5]);
    let idx = PartitionScheme::dyadic(1.0).indices(4, rp.grid()).unwrap();
    let rep = sewing_report(&f, &x, &idx, 2.5, DEFAULT_SEWING_CONSTANT).unwrap();
    assert_eq!(rep.len(), 16);
    for r in &rep {
        assert!(r.defect <= r.bound, "{r:?}");
    }
}

#[test]
fn integral_stability_is_monotone_in_perturbation() {
    let rp = brownian(1, 10, 19);
    let x = ControlledPath::reference_path(rp.clone());
    let f = polynomial(&rp, &[0.0, 1.0, 0.3]);
    let bump = polynomial(&rp, &[1.0, -0.5]);
    let base = rough_integral(&f, &x).unwrap();
    let anchors: Vec<usize> = (0..rp.len()).step_by(16).collect();
    let mut prev = f64::INFINITY;
    for k in 1..=8 {
        let delta = 2f64.powi(-k);
        let ft = f.linear_combination(1.0, &bump, delta).unwrap();
        let it = rough_integral(&ft, &x).unwrap();
        let diff = SampledPath::new(
            rp.grid().clone(),
            1,
            it.values().values().iter().zip(base.values().values()).map(|(a, b)| a - b).collect(),
        )
        .unwrap();
        let err = crate::grid::p_variation(&diff, 2.5, Some(&anchors)).unwrap();
        let dist = controlled_distance(&ft, &f, 2.5, Some(&anchors)).unwrap();
        assert!(err <= 10.0 * dist, "{err} vs {dist}");
        assert!(err < prev);
        prev = err;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn product_norm_bound(a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4), steps in prop::collection::vec(-0.5f64..0.5, 11)) {
        let rp = walk_lift(&steps);
        let (f, g) = (polynomial(&rp, &a), polynomial(&rp, &b));
        let anchors: Vec<usize> = (0..12).collect();
        let nf = controlled_norm(&f, 2.5, Some(&anchors)).unwrap();
        let ng = controlled_norm(&g, 2.5, Some(&anchors)).unwrap();
        let nfg = controlled_norm(&product(&f, &g).unwrap(), 2.5, Some(&anchors)).unwrap();
        let x = crate::grid::p_variation(rp.base(), 2.5, Some(&anchors)).unwrap();
        prop_assert!(nfg <= 10.0 * (1.0 + x).powi(2) * nf * ng + 1e-12);
    }

    #[test]
    fn sup_norm_bound(a in prop::collection::vec(-1.0f64..1.0, 4), steps in prop::collection::vec(-0.5f64..0.5, 20)) {
        let rp = walk_lift(&steps);
        let y = polynomial(&rp, &a);
        let x = crate::grid::p_variation(rp.base(), 2.5, None).unwrap();
        prop_assert!(y.sup_norm() <= (1.0 + x) * controlled_norm(&y, 2.5, None).unwrap() + 1e-12);
    }

    #[test]
    fn distance_to_self_is_zero(a in prop::collection::vec(-1.0f64..1.0, 3), steps in prop::collection::vec(-0.5f64..0.5, 15)) {
        let rp = walk_lift(&steps);
        let y = polynomial(&rp, &a);
        prop_assert_eq!(controlled_distance(&y, &y, 2.5, None).unwrap(), 0.0);
    }
}
