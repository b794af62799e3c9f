#![allow(dead_code)]

use utail::kernels::{KernelFamily, KernelSpec};
use utail::rng::RngStream;
use utail::tail_models::DistributionModel;

pub const PHI_FAMILIES: [KernelFamily; 4] =
    [KernelFamily::AbsDiff, KernelFamily::SquaredDiff, KernelFamily::MaxAbs { m: 2 }, KernelFamily::OmegaSq];

pub const MATRIX_FAMILIES: [KernelFamily; 5] = [
    KernelFamily::AbsDiff,
    KernelFamily::SquaredDiff,
    KernelFamily::MaxAbs { m: 2 },
    KernelFamily::MaxAbs { m: 3 },
    KernelFamily::OmegaSq,
];

pub const ALL_FAMILIES: [KernelFamily; 7] = [
    KernelFamily::AbsDiff,
    KernelFamily::SquaredDiff,
    KernelFamily::MaxAbs { m: 2 },
    KernelFamily::MaxAbs { m: 4 },
    KernelFamily::OmegaSq,
    KernelFamily::Product,
    KernelFamily::Identity,
];

pub fn exp1() -> DistributionModel {
    DistributionModel::exponential(1.0).unwrap()
}

pub fn weib() -> DistributionModel {
    DistributionModel::weibull(1.0, 0.5).unwrap()
}

pub fn centered(family: KernelFamily, model: &DistributionModel) -> KernelSpec {
    KernelSpec::centered(family, model).unwrap()
}

/// Error relative to the larger of |value| and the mean |h| over all subsets, so that
/// cancellation in signed kernels is measured against the scale of the summands.
pub fn rel_err(kernel: &KernelSpec, sample: &[f64], fast: f64, brute: f64) -> f64 {
    let m = kernel.order();
    let mut scale = 0.0;
    let mut count = 0.0;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let args: Vec<f64> = idx.iter().map(|&i| sample[i]).collect();
        scale += kernel.eval_kernel(&args).unwrap().abs();
        count += 1.0;
        let mut j = m;
        loop {
            if j == 0 {
                let denom = brute.abs().max(scale / count).max(f64::MIN_POSITIVE);
                return (fast - brute).abs() / denom;
            }
            j -= 1;
            if idx[j] < sample.len() - m + j {
                idx[j] += 1;
                for q in j + 1..m {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
        }
    }
}

/// A random sample mixing magnitudes and signs.
pub fn mixed_sample(stream: &mut RngStream, n: usize) -> Vec<f64> {
    let models = [
        exp1(),
        weib(),
        DistributionModel::pareto(1.0, 3.0).unwrap(),
        DistributionModel::signed(weib()).unwrap(),
    ];
    let pick = (stream.next_u64() % models.len() as u64) as usize;
    models[pick].sample(stream, n)
}
