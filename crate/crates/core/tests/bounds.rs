mod common;

use common::*;
use proptest::prelude::*;
use utail::bounds::*;
use utail::kernels::{kernel_second_moment, kernel_tail_i, KernelFamily};
use utail::mc_engine::{clopper_pearson, estimate_tail_curve};
use utail::numeric::ln_binomial;
use utail::rng::StreamFamily;
use utail::tail_models::DistributionModel;

#[test]
fn v_estimate_is_monotone_in_eta_under_common_numbers() {
    let model = weib();
    let kernel = centered(KernelFamily::MaxAbs { m: 2 }, &model);
    let fam = StreamFamily::new(3, "v-monotone");
    for l in [5.0, 50.0] {
        let etas = [0.0, 0.05, 0.1, 0.2];
        let est: Vec<VEstimate> =
            etas.iter().map(|&e| estimate_v(&kernel, &model, l, e, 200_000, &fam).unwrap()).collect();
        for w in est.windows(2) {
            assert!(w[0].value <= w[1].value + 3.0 * w[1].std_error, "L={l}: {est:?}");
        }
    }
}

// At k = 1e4 the bulk term eta E h^3 / E h^2 is still about 0.35 for Weibull(1, 0.5); the limit
// is reached near k = 1e5. Kernels with alpha = 4 have too heavy an h^2 for a 1e6-draw estimate.
const ALPHA2_FAMILIES: [KernelFamily; 3] =
    [KernelFamily::AbsDiff, KernelFamily::MaxAbs { m: 2 }, KernelFamily::MaxAbs { m: 3 }];

#[test]
fn v_approaches_variance_for_subweibull_configs() {
    let model = weib();
    let (t, beta) = (1.0, 0.9);
    for family in ALPHA2_FAMILIES {
        let kernel = centered(family, &model);
        let tail = kernel_tail_i(&kernel, &model).unwrap();
        let fam = StreamFamily::new(5, &format!("v-var-{family}"));
        // Var-hat on the same draws: eta = 0 with L beyond every draw.
        let var = estimate_v(&kernel, &model, 1e300, 0.0, 1_000_000, &fam).unwrap().value;
        let rels: Vec<f64> = [1e4, 3e4, 1e5, 3e5]
            .iter()
            .map(|&k| {
                let l = k * t;
                let v = estimate_v(&kernel, &model, l, beta * tail.eval(l) / l, 1_000_000, &fam).unwrap();
                (v.value - var).abs() / var
            })
            .collect();
        for w in rels.windows(2) {
            assert!(w[1] < w[0], "{family}: {rels:?}");
        }
        assert!(rels[3] <= 0.1, "{family}: {rels:?}");
    }
}

#[test]
fn subweibull_cap_dominates_estimate() {
    let model = weib();
    for family in [KernelFamily::MaxAbs { m: 2 }, KernelFamily::AbsDiff] {
        let kernel = centered(family, &model);
        let tail = kernel_tail_i(&kernel, &model).unwrap();
        let (alpha, c) = tail.subweibull().unwrap();
        let beta = 0.9;
        let cap = subweibull_v_cap(alpha, c, beta, kernel_second_moment(&kernel, &model).unwrap()).unwrap();
        let fam = StreamFamily::new(7, "cap");
        for l in [2.0, 10.0, 100.0] {
            let eta = beta * tail.eval(l) / l;
            let v = estimate_v(&kernel, &model, l, eta, 200_000, &fam).unwrap();
            assert!(cap >= v.value, "{family} L={l}: cap {cap} < v {}", v.value);
        }
    }
}

#[test]
fn subweibull_cap_second_example() {
    // 2 + Gamma(5)/0.5^4 + 0.5 Gamma(7)/(3 0.5^6) = 2 + 384 + 7680
    let got = subweibull_v_cap(2.0, 1.0, 0.5, 2.0).unwrap();
    assert!((got - 8066.0).abs() < 1e-9, "{got}");
    assert!(subweibull_v_cap(2.0, 1.0, 1.0, 2.0).is_err());
}

#[test]
fn calibrated_polynomial_cap_dominates_on_pareto() {
    let model = DistributionModel::pareto(1.0, 3.0).unwrap();
    let kernel = centered(KernelFamily::Identity, &model);
    let tail = kernel_tail_i(&kernel, &model).unwrap();
    let beta = default_beta(&tail);
    let gamma = tail.polynomial_index().unwrap();
    let fam = StreamFamily::new(9, "poly-cal");
    let scale = calibrate_polynomial_scale(&tail, beta, &[2.0, 5.0, 20.0, 200.0, 2000.0], 200_000, &fam).unwrap();
    let check = StreamFamily::new(10, "poly-check");
    for l in [10.0, 100.0, 1000.0] {
        let eta = beta * tail.eval(l) / l;
        let v = estimate_v(&kernel, &model, l, eta, 200_000, &check).unwrap();
        let cap = polynomial_v_cap(gamma, beta, l, scale).unwrap();
        assert!(cap >= v.value - 3.0 * v.std_error, "L={l}: cap {cap} < v {}", v.value);
    }
}

#[test]
fn c_factor_tends_to_one_for_subweibull_configs() {
    let model = weib();
    for family in ALPHA2_FAMILIES {
        let kernel = centered(family, &model);
        let eval = BoundEvaluator::new(&kernel, &model, 0.9, VMode::McEstimate { reps: 1_000_000, seed: 1 }).unwrap();
        let m = family.order() as u64;
        let b = eval.evaluate(300_000 * m, 1.0).unwrap();
        assert!((b.c_factor - 1.0).abs() <= 0.05, "{family}: c = {}", b.c_factor);
    }
}

#[test]
fn maxabs_bound_dominates_simulation_at_t2() {
    let model = exp1();
    let kernel = centered(KernelFamily::MaxAbs { m: 2 }, &model);
    let input = BoundInput::new(kernel, model.clone(), 100, 2.0, 0.9, VMode::SubweibullCap);
    let bound = evaluate_upper_bound(&input).unwrap();
    let fam = StreamFamily::new(13, "maxabs-t2");
    let curve = estimate_tail_curve(&kernel, &model, 100, &[2.0], 1_000_000, 0.99, &fam).unwrap();
    assert!(bound.total >= curve.points[0].ci_high, "{} < {}", bound.total, curve.points[0].ci_high);
}

#[test]
fn bound_validity_small_matrix() {
    for model in [exp1(), weib()] {
        for family in [KernelFamily::AbsDiff, KernelFamily::MaxAbs { m: 2 }] {
            let kernel = centered(family, &model);
            let eval = BoundEvaluator::new(&kernel, &model, 0.9, default_v_mode(&kernel_tail_i(&kernel, &model).unwrap(), 0)).unwrap();
            let fam = StreamFamily::new(19, &format!("small-{family}-{model}"));
            let grid = [0.1, 0.3, 0.5, 1.0, 1.5];
            let curve = estimate_tail_curve(&kernel, &model, 20, &grid, 100_000, 0.99, &fam).unwrap();
            for p in &curve.points {
                if p.exceedances >= 50 {
                    let b = eval.evaluate(20, p.t).unwrap();
                    assert!(b.total >= p.ci_low, "{family}/{model} t={}: {} < {}", p.t, b.total, p.ci_low);
                }
            }
        }
    }
}

#[test]
fn mgf_chain_identity_is_equality() {
    let model = exp1();
    let kernel = centered(KernelFamily::Identity, &model);
    let r = mgf_chain_check(&kernel, &model, 5, 3.0, 0.5, 200_000, 23).unwrap();
    assert!(r.gap1.abs() <= 4.0 * r.gap1_se + 1e-12, "{r:?}");
}

#[test]
fn binomial_lower_limit_sanity() {
    let (lo, hi) = clopper_pearson(50, 1000, 0.99);
    assert!(lo < 0.05 && hi > 0.05);
}

fn any_config() -> impl Strategy<Value = (KernelFamily, bool, u64, f64, f64)> {
    (0usize..5, any::<bool>(), 2u64..5000, 0.01f64..20.0, 0.05f64..0.99)
        .prop_map(|(f, e, n, t, b)| (MATRIX_FAMILIES[f], e, n.max(3), t, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn breakdown_invariants((family, is_exp, n, t, beta) in any_config()) {
        let model = if is_exp { exp1() } else { weib() };
        let kernel = centered(family, &model);
        let tail = kernel_tail_i(&kernel, &model).unwrap();
        let mode = if tail.subweibull().is_some() && beta < 1.0 { VMode::SubweibullCap } else { VMode::McEstimate { reps: 100_000, seed: 2 } };
        let eval = BoundEvaluator::new(&kernel, &model, beta, mode).unwrap();
        let b = eval.evaluate(n, t).unwrap();
        for term in [b.gaussian_term, b.intermediate_term, b.union_term] {
            prop_assert!((0.0..=1.0).contains(&term));
            prop_assert!(b.total >= term);
        }
        prop_assert!(b.total <= 1.0);
        prop_assert_eq!(b.k, n / family.order() as u64);
        let ln_c = ln_binomial(n, family.order() as u64);
        prop_assert!((b.ln_union + b.i_kt - ln_c).abs() <= 1e-12 * ln_c.abs().max(1.0));
    }

    #[test]
    fn c_factor_linear_in_v(t in 0.1f64..10.0, beta in 0.0f64..1.0, k in 1u64..10_000, i in 0.0f64..100.0, v in 0.0f64..100.0) {
        let c1 = c_factor(t, beta, k, i, v);
        let c2 = c_factor(t, beta, k, i, 2.0 * v);
        prop_assert!(((1.0 - c2) - 2.0 * (1.0 - c1)).abs() <= 1e-9 * (1.0 - c2).abs().max(1.0));
    }

    #[test]
    fn subweibull_boundary_decreases_in_k(alpha in 1.01f64..5.0, k in 1u64..1_000_000) {
        let a = gaussian_boundary(alpha, k).unwrap();
        let b = gaussian_boundary(alpha, k * 2).unwrap();
        prop_assert!(b < a);
    }
}
