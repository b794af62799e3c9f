mod common;

use common::*;
use proptest::prelude::*;
use utail::kernels::*;
use utail::mc_engine::{clopper_pearson, mc_mean};
use utail::rng::derive_stream;
use utail::tail_models::DistributionModel;

#[test]
fn fast_path_matches_enumeration() {
    for family in ALL_FAMILIES {
        let kernel = KernelSpec::new(family, 0.37);
        let m = family.order();
        let mut worst: f64 = 0.0;
        for r in 0..1000u64 {
            let mut s = derive_stream(17, &format!("oracle-{family}"), r);
            let n = m + (s.next_u64() % (13 - m as u64)) as usize;
            let sample = mixed_sample(&mut s, n);
            let fast = kernel.u_statistic(&sample).unwrap();
            let brute = kernel.u_statistic_bruteforce(&sample).unwrap();
            worst = worst.max(rel_err(&kernel, &sample, fast, brute));
        }
        assert!(worst <= 1e-10, "{family}: {worst:e}");
    }
}

#[test]
fn kernels_are_symmetric() {
    for family in ALL_FAMILIES {
        let kernel = KernelSpec::raw(family);
        let m = family.order();
        for r in 0..1000u64 {
            let mut s = derive_stream(23, "perm", r);
            let mut args = mixed_sample(&mut s, m);
            let base = kernel.eval_kernel(&args).unwrap();
            for i in (1..m).rev() {
                let j = (s.next_u64() % (i as u64 + 1)) as usize;
                args.swap(i, j);
            }
            assert_eq!(kernel.eval_kernel(&args).unwrap(), base, "{family}");
        }
    }
}

#[test]
fn arity_is_checked() {
    let kernel = KernelSpec::raw(KernelFamily::AbsDiff);
    assert!(kernel.eval_kernel(&[1.0]).is_err());
    assert!(kernel.u_statistic(&[1.0]).is_err());
}

fn tail_pairs() -> Vec<(KernelSpec, DistributionModel)> {
    let mut pairs = Vec::new();
    for model in DistributionModel::catalog() {
        for family in MATRIX_FAMILIES {
            if let Ok(kernel) = KernelSpec::centered(family, &model) {
                if kernel_tail_i(&kernel, &model).is_ok() {
                    pairs.push((kernel, model.clone()));
                }
            }
        }
    }
    let sw = DistributionModel::signed(weib()).unwrap();
    pairs.push((centered(KernelFamily::Product, &sw), sw.clone()));
    pairs.push((centered(KernelFamily::AbsDiff, &sw), sw.clone()));
    pairs.push((centered(KernelFamily::SquaredDiff, &sw), sw));
    pairs
}

#[test]
fn tail_function_is_empirically_valid() {
    for (kernel, model) in tail_pairs() {
        let tail = kernel_tail_i(&kernel, &model).unwrap();
        let mut draws = kernel_draws(&kernel, &model, 1_000_000, 29);
        draws.sort_by(f64::total_cmp);
        let count = draws.len();
        let mut prev = f64::NEG_INFINITY;
        for q in 0..20 {
            let frac = 1.0 - 0.5 * (1e-5f64 / 0.5).powf(q as f64 / 19.0);
            let t = draws[((frac * count as f64) as usize).min(count - 1)].max(0.0);
            let exceed = (count - draws.partition_point(|&h| h <= t)) as u64;
            let (lo, _) = clopper_pearson(exceed, count as u64, 0.99);
            let i = tail.eval(t);
            assert!(i >= prev - 1e-12, "{kernel}/{model}: I not monotone");
            prev = i;
            assert!(lo <= (-i).exp(), "{kernel}/{model} t={t}: lower CI {lo} > exp(-I) {}", (-i).exp());
        }
    }
}

#[test]
fn phi_minorizes_kernel_on_box() {
    let n = 1000;
    for model in [exp1(), weib()] {
        let r = model.j_inverse((2.0 * n as f64).ln());
        for family in MATRIX_FAMILIES {
            let kernel = centered(family, &model);
            let m = family.order();
            let mut s = derive_stream(31, &format!("minor-{family}"), 0);
            let mut args = vec![0.0; m];
            for _ in 0..100_000 {
                for a in args.iter_mut().take(m - 1) {
                    *a = loop {
                        let v = model.draw(&mut s);
                        if v.abs() <= r {
                            break v;
                        }
                    };
                }
                let x = 3.0 * r * s.uniform();
                args[m - 1] = x;
                let h = kernel.eval_kernel(&args).unwrap();
                let phi = phi_value(&kernel, &model, n, x).unwrap();
                assert!(h >= phi - 1e-9, "{family}/{model}: h {h} < phi {phi} at {args:?}");
            }
        }
    }
}

#[test]
fn centered_kernels_have_zero_mean() {
    let mut cases = Vec::new();
    for model in [exp1(), weib()] {
        for family in MATRIX_FAMILIES {
            cases.push((centered(family, &model), model.clone()));
        }
    }
    let sw = DistributionModel::signed(weib()).unwrap();
    cases.push((centered(KernelFamily::Product, &sw), sw));
    let p = DistributionModel::pareto(1.0, 3.0).unwrap();
    cases.push((centered(KernelFamily::AbsDiff, &p), p.clone()));
    cases.push((centered(KernelFamily::MaxAbs { m: 2 }, &p), p));
    for (kernel, model) in cases {
        let (mean, se) = mc_mean(10_000_000, 37, &format!("centering-{kernel}-{model}"), |s| {
            let mut buf = [0.0; 3];
            let h = kernel.draw(&model, s, &mut buf[..kernel.order()]);
            (h, h * h)
        });
        assert!(mean.abs() <= 4.0 * se, "{kernel}/{model}: mean {mean} se {se}");
    }
}

#[test]
fn absdiff_phi_tail_matches_simulation() {
    let model = exp1();
    let kernel = centered(KernelFamily::AbsDiff, &model);
    let (n, t) = (4u64, 1.0);
    let level = n as f64 * t / 2.0;
    let exact = phi_tail(&kernel, &model, n, t).unwrap();
    let mut s = derive_stream(41, "phi-mc", 0);
    let reps = 1_000_000u64;
    let hits = (0..reps)
        .filter(|_| phi_value(&kernel, &model, n, model.draw(&mut s)).unwrap() >= level)
        .count() as u64;
    let (lo, hi) = clopper_pearson(hits, reps, 0.999);
    assert!(lo <= exact && exact <= hi, "{exact} not in [{lo}, {hi}]");
}

#[test]
fn absdiff_phi_tail_closed_form_example() {
    let model = exp1();
    let kernel = centered(KernelFamily::AbsDiff, &model);
    let got = ln_phi_tail(&kernel, &model, 100, 1.0).unwrap();
    let want = -(50.0 + 200f64.ln() + 1.0);
    assert!((got - want).abs() < 1e-9 * want.abs(), "{got} vs {want}");
}

#[test]
fn product_is_unsupported_for_phi() {
    let sw = DistributionModel::signed(weib()).unwrap();
    let kernel = centered(KernelFamily::Product, &sw);
    assert!(phi_value(&kernel, &sw, 100, 1.0).is_err());
}

proptest! {
    #[test]
    fn truncated_bruteforce_never_exceeds_plain(seed in 0u64..1000, l in 0.1f64..20.0) {
        let kernel = centered(KernelFamily::AbsDiff, &exp1());
        let sample = exp1().sample(&mut derive_stream(seed, "trunc", 0), 8);
        let plain = kernel.u_statistic_bruteforce(&sample).unwrap();
        let trunc = kernel.u_statistic_truncated_bruteforce(&sample, l).unwrap();
        // h_L = h 1(h <= L) only removes values above L > 0.
        prop_assert!(trunc <= plain + 1e-12);
    }

    #[test]
    fn u_statistic_is_permutation_invariant(seed in 0u64..10_000, fam in 0usize..7) {
        let family = ALL_FAMILIES[fam];
        let kernel = KernelSpec::raw(family);
        let mut s = derive_stream(seed, "uperm", 0);
        let n = family.order() + 5;
        let sample = mixed_sample(&mut s, n);
        let mut rev = sample.clone();
        rev.reverse();
        let a = kernel.u_statistic(&sample).unwrap();
        let b = kernel.u_statistic(&rev).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn kernel_tail_is_nonnegative_and_monotone(u in 0.0f64..1e4, d in 0.0f64..1e3) {
        let pairs = [
            (centered(KernelFamily::AbsDiff, &exp1()), exp1()),
            (centered(KernelFamily::OmegaSq, &weib()), weib()),
            (centered(KernelFamily::MaxAbs { m: 3 }, &weib()), weib()),
        ];
        for (kernel, model) in pairs {
            let tail = kernel_tail_i(&kernel, &model).unwrap();
            prop_assert!(tail.eval(u) >= 0.0);
            prop_assert!(tail.eval(u + d) >= tail.eval(u) - 1e-9);
        }
    }
}
