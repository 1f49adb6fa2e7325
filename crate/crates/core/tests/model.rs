use arcsearch::model::{
    check_derivatives, check_derivatives_with, d3_lagrangian_dir, eval_lagrangian_hessian, Affine, Analytic,
    CheckTolerances, ComposedProblem, GradientFault, ModelError,
};
use arcsearch::problems;
use arcsearch::NlpProblem;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

/// Points near the interior start at which every oracle is defined.
fn sample_points(entry: &arcsearch::BenchmarkEntry, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = &entry.interior_start;
    let mut out = Vec::new();
    while out.len() < count {
        let x = DVector::from_iterator(x0.len(), x0.iter().map(|&xi| xi + 0.05 * xi.abs().max(0.1) * rng.gen_range(-1.0..1.0)));
        let p = entry.problem.as_ref();
        let finite = p.f(&x).is_finite() && p.g(&x).iter().all(|c| c.is_finite()) && p.h(&x).iter().all(|c| c.is_finite());
        if finite {
            out.push(x);
        }
    }
    out
}

fn quadratic() -> ComposedProblem {
    let f = Analytic {
        value: |x| 3.0 * x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[1] + x[0],
        gradient: |x| vec![6.0 * x[0] - x[1] + 1.0, -x[0] + x[1]],
        hessian: |_| vec![6.0, -1.0, -1.0, 1.0],
        third: |_, _| vec![0.0, 0.0],
    };
    ComposedProblem::new("quadratic", 2, f).inequality(Affine { coeffs: dv(&[1.0, 1.0]), constant: 1.0 })
}

#[test]
fn quadratic_passes_checker() {
    let report = check_derivatives(&quadratic(), &dv(&[0.3, -1.2]), 1e-6).unwrap();
    assert!(report.passed, "{:?}", report.failures().collect::<Vec<_>>());
}

#[test]
fn hs71_passes_checker_at_standard_start() {
    let entry = problems::get_problem("HS71").unwrap();
    let report = check_derivatives(entry.problem.as_ref(), &dv(&[1.0, 5.0, 5.0, 1.0]), 1e-5).unwrap();
    assert!(report.passed, "{:?}", report.failures().collect::<Vec<_>>());
}

#[test]
fn injected_gradient_fault_is_located() {
    let entry = problems::get_problem("HS71").unwrap();
    let faulty = GradientFault { inner: entry.problem.clone(), index: 2, offset: 1e-2 };
    let report = check_derivatives(&faulty, &dv(&[1.0, 5.0, 5.0, 1.0]), 1e-5).unwrap();
    assert!(!report.passed);
    let failed: Vec<_> = report.failures().map(|c| c.callback.clone()).collect();
    assert_eq!(failed, vec!["grad_f".to_string()]);
    assert_eq!(report.get("grad_f").unwrap().worst_entry, Some((2, 0)));
}

#[test]
fn checker_rejects_wrong_dimension() {
    let err = check_derivatives(&quadratic(), &dv(&[1.0]), 1e-6).unwrap_err();
    assert!(matches!(err, ModelError::Dimension { .. }));
}

#[test]
fn every_problem_passes_checker_at_random_points() {
    let tol = CheckTolerances { first: 1e-5, second: 1e-5, third: 1e-4 };
    for entry in problems::all() {
        for (k, x) in sample_points(entry, 10, 7).into_iter().enumerate() {
            let report = check_derivatives_with(entry.problem.as_ref(), &x, tol).unwrap();
            assert!(
                report.passed,
                "{} point {k}: {:?}",
                entry.name,
                report.failures().collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn third_order_contraction_is_even_in_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for entry in problems::all() {
        let p = entry.problem.as_ref();
        let x = &entry.interior_start;
        let y = DVector::from_fn(p.m(), |_, _| rng.gen_range(-1.0..1.0));
        let w = DVector::from_fn(p.p(), |_, _| rng.gen_range(0.1..2.0));
        let d = DVector::from_fn(p.n(), |_, _| rng.gen_range(-1.0..1.0));
        let plus = d3_lagrangian_dir(p, x, &y, &w, &d).unwrap().value;
        let minus = d3_lagrangian_dir(p, x, &y, &w, &(-&d)).unwrap().value;
        let scale = plus.amax().max(1.0);
        assert!((&plus - &minus).amax() <= 1e-8 * scale, "{}", entry.name);
    }
}

#[test]
fn lagrangian_hessian_without_multipliers_is_objective_hessian() {
    for entry in problems::all() {
        let p = entry.problem.as_ref();
        let x = &entry.interior_start;
        let hl = eval_lagrangian_hessian(p, x, &DVector::zeros(p.m()), &DVector::zeros(p.p())).unwrap();
        assert_eq!(hl, p.hess_f(x), "{}", entry.name);
    }
}

#[test]
fn hessians_are_symmetric() {
    for entry in problems::all() {
        let p = entry.problem.as_ref();
        for x in sample_points(entry, 3, 19) {
            let mut mats = vec![p.hess_f(&x)];
            mats.extend((0..p.m()).map(|i| p.hess_h(&x, i)));
            mats.extend((0..p.p()).map(|i| p.hess_g(&x, i)));
            for h in mats {
                let scale = h.amax().max(1.0);
                assert!((&h - h.transpose()).amax() <= 1e-12 * scale, "{}", entry.name);
            }
        }
    }
}

#[test]
fn oracles_are_pure() {
    for entry in problems::all() {
        let p = entry.problem.as_ref();
        let x = &entry.interior_start;
        let d = DVector::from_element(p.n(), 0.5);
        for _ in 0..2 {
            assert_eq!(p.f(x).to_bits(), p.f(x).to_bits());
        }
        assert_eq!(p.grad_f(x), p.grad_f(x));
        assert_eq!(p.hess_f(x), p.hess_f(x));
        assert_eq!(p.g(x), p.g(x));
        assert_eq!(p.jac_g(x), p.jac_g(x));
        assert_eq!(p.h(x), p.h(x));
        assert_eq!(p.jac_h(x), p.jac_h(x));
        assert_eq!(p.d3f(x, &d), p.d3f(x, &d));
    }
}

#[test]
fn composed_bounds_add_inequality_rows() {
    let prob = quadratic().bounds(0, Some(-1.0), Some(2.0)).validated().unwrap();
    assert_eq!(prob.p(), 3);
    let g = prob.g(&dv(&[0.5, 0.0]));
    assert_eq!(g, dv(&[1.5, 1.5, 1.5]));
}

#[test]
fn shape_validation_rejects_missing_inequalities() {
    let f = Affine { coeffs: dv(&[1.0, 0.0]), constant: 0.0 };
    assert!(ComposedProblem::new("bare", 2, f).validated().is_err());
}
