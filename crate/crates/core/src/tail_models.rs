//! Heavy-tailed distribution catalog: tail functions J, inverses, shifts, samplers.

use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numeric::{ln_erfc, ln_normal_sf, ln_one_minus_exp_neg, normal_isf_ln, normal_quantile, LN_2};
use crate::rng::RngStream;

/// Coarse tail classification used to pick bound settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailClass {
    /// J(t) grows like t^{1/alpha}.
    SubWeibull { alpha: f64 },
    /// P(|X| > t) decays like t^{-gamma}.
    Polynomial { gamma: f64 },
    /// Faster than any polynomial, slower than any stretched exponential.
    Intermediate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionModel {
    Exponential { rate: f64 },
    Weibull { scale: f64, shape: f64 },
    Pareto { scale: f64, index: f64 },
    LogNormal,
    LogLogistic { scale: f64, shape: f64 },
    /// |N(0,1)|^a.
    AbsNormalPower { exponent: f64 },
    /// Base law multiplied by an independent Rademacher sign.
    Signed(Box<DistributionModel>),
}

pub const FAMILY_NAMES: [&str; 7] = [
    "exponential",
    "weibull",
    "pareto",
    "lognormal",
    "loglogistic",
    "absnormalpower",
    "signed",
];

fn domain(msg: impl Into<String>) -> Error {
    Error::ParameterDomain(msg.into())
}

fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl DistributionModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::Exponential { rate }.validated()
    }
    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Self::Weibull { scale, shape }.validated()
    }
    pub fn pareto(scale: f64, index: f64) -> Result<Self> {
        Self::Pareto { scale, index }.validated()
    }
    pub fn lognormal() -> Self {
        Self::LogNormal
    }
    pub fn loglogistic(scale: f64, shape: f64) -> Result<Self> {
        Self::LogLogistic { scale, shape }.validated()
    }
    pub fn abs_normal_power(exponent: f64) -> Result<Self> {
        Self::AbsNormalPower { exponent }.validated()
    }
    pub fn signed(base: DistributionModel) -> Result<Self> {
        Self::Signed(Box::new(base)).validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Exponential { rate } if !positive_finite(rate) => {
                Err(domain(format!("exponential rate must be > 0, got {rate}")))
            }
            Self::Weibull { scale, shape } if !positive_finite(scale) || !(shape > 0.0 && shape <= 1.0) => {
                Err(domain(format!(
                    "weibull needs scale > 0 and shape in (0, 1], got scale={scale}, shape={shape}"
                )))
            }
            Self::Pareto { scale, index } if !positive_finite(scale) || !(index > 2.0 && index.is_finite()) => {
                Err(domain(format!(
                    "pareto needs scale > 0 and index > 2, got scale={scale}, index={index}"
                )))
            }
            Self::LogLogistic { scale, shape } if !positive_finite(scale) || !(shape > 2.0 && shape.is_finite()) => {
                Err(domain(format!(
                    "loglogistic needs scale > 0 and shape > 2, got scale={scale}, shape={shape}"
                )))
            }
            Self::AbsNormalPower { exponent } if !(exponent >= 2.0 && exponent.is_finite()) => {
                Err(domain(format!("absnormalpower exponent must be >= 2, got {exponent}")))
            }
            Self::Signed(ref base) => {
                if matches!(**base, Self::Signed(_)) {
                    return Err(domain("nested signed variants are not supported"));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// The law of |X|.
    pub fn base(&self) -> &DistributionModel {
        match self {
            Self::Signed(b) => b,
            other => other,
        }
    }

    pub fn is_signed(&self) -> bool {
        matches!(self, Self::Signed(_))
    }

    /// Symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        self.is_signed()
    }

    /// Tail function J: exp(-J(t)) >= P(|X| > t), concave-ified where needed and clamped at 0.
    pub fn j_value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let v = match *self.base() {
            Self::Exponential { rate } => rate * t,
            Self::Weibull { scale, shape } => (t / scale).powf(shape),
            Self::Pareto { scale, index } => {
                if t >= scale {
                    index * (t / scale).ln()
                } else {
                    // tangent at the left endpoint, negative there, so clamped
                    index * (t / scale - 1.0)
                }
            }
            Self::LogNormal => {
                let e = std::f64::consts::E;
                if t > e {
                    let l = t.ln();
                    0.5 * l * l
                } else {
                    t / e - 0.5
                }
            }
            Self::LogLogistic { scale, shape } => ln_one_plus_exp(shape * (t / scale).ln()),
            Self::AbsNormalPower { exponent } => 0.5 * t.powf(2.0 / exponent) - LN_2,
            Self::Signed(_) => unreachable!(),
        };
        v.max(0.0)
    }

    /// Generalized inverse inf{t >= 0 : J(t) >= y}.
    pub fn j_inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match *self.base() {
            Self::Exponential { rate } => y / rate,
            Self::Weibull { scale, shape } => scale * y.powf(1.0 / shape),
            Self::Pareto { scale, index } => scale * (y / index).exp(),
            Self::LogNormal => {
                let e = std::f64::consts::E;
                if y <= 0.5 {
                    e * (y + 0.5)
                } else {
                    (2.0 * y).sqrt().exp()
                }
            }
            Self::LogLogistic { scale, shape } => scale * (ln_exp_m1(y) / shape).exp(),
            Self::AbsNormalPower { exponent } => (2.0 * (y + LN_2)).powf(0.5 * exponent),
            Self::Signed(_) => unreachable!(),
        }
    }

    /// Shift b with J(t1 + t2) <= J(t1) + J(t2) + b on [0, inf).
    ///
    /// For the clamped concave families this is minus the unclamped value at 0.
    pub fn subadditivity_shift(&self) -> f64 {
        match *self.base() {
            Self::Exponential { .. } | Self::Weibull { .. } => 0.0,
            Self::Pareto { index, .. } => index,
            Self::LogNormal => 0.5,
            Self::LogLogistic { shape, .. } => shape * LN_2,
            Self::AbsNormalPower { .. } => LN_2,
            Self::Signed(_) => unreachable!(),
        }
    }

    /// (alpha, c) with J(t) >= c t^{1/alpha} for all t >= 0, when such a pair exists.
    pub fn subweibull_params(&self) -> Option<(f64, f64)> {
        match *self.base() {
            Self::Exponential { rate } => Some((1.0, rate)),
            Self::Weibull { scale, shape } => Some((1.0 / shape, scale.powf(-shape))),
            _ => None,
        }
    }

    pub fn tail_class(&self) -> TailClass {
        match *self.base() {
            Self::Exponential { .. } => TailClass::SubWeibull { alpha: 1.0 },
            Self::Weibull { shape, .. } => TailClass::SubWeibull { alpha: 1.0 / shape },
            Self::AbsNormalPower { exponent } => TailClass::SubWeibull { alpha: exponent / 2.0 },
            Self::Pareto { index, .. } => TailClass::Polynomial { gamma: index },
            Self::LogLogistic { shape, .. } => TailClass::Polynomial { gamma: shape },
            Self::LogNormal => TailClass::Intermediate,
            Self::Signed(_) => unreachable!(),
        }
    }

    /// Exact P(|X| > t).
    pub fn true_tail(&self, t: f64) -> f64 {
        self.ln_true_tail(t).exp()
    }

    /// ln P(|X| > t).
    pub fn ln_true_tail(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self.base() {
            Self::Exponential { rate } => -rate * t,
            Self::Weibull { scale, shape } => -(t / scale).powf(shape),
            Self::Pareto { scale, index } => {
                if t <= scale {
                    0.0
                } else {
                    -index * (t / scale).ln()
                }
            }
            Self::LogNormal => {
                if t <= 0.0 {
                    0.0
                } else {
                    ln_normal_sf(t.ln())
                }
            }
            Self::LogLogistic { scale, shape } => -ln_one_plus_exp(shape * (t / scale).ln()),
            Self::AbsNormalPower { exponent } => {
                let z = t.powf(1.0 / exponent);
                ln_erfc(z / std::f64::consts::SQRT_2)
            }
            Self::Signed(_) => unreachable!(),
        }
    }

    /// x >= 0 with -ln P(|X| > x) = y.
    pub fn abs_quantile_ln_tail(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return match *self.base() {
                Self::Pareto { scale, .. } => scale,
                _ => 0.0,
            };
        }
        match *self.base() {
            Self::Exponential { rate } => y / rate,
            Self::Weibull { scale, shape } => scale * y.powf(1.0 / shape),
            Self::Pareto { scale, index } => scale * (y / index).exp(),
            Self::LogNormal => normal_isf_ln(y).exp(),
            Self::LogLogistic { scale, shape } => scale * (ln_exp_m1(y) / shape).exp(),
            Self::AbsNormalPower { exponent } => normal_isf_ln(y + LN_2).max(0.0).powf(exponent),
            Self::Signed(_) => unreachable!(),
        }
    }

    /// |X| = F^{-1}(u) for u in [0, 1).
    pub fn abs_from_uniform(&self, u: f64) -> f64 {
        match *self.base() {
            Self::Exponential { rate } => -(-u).ln_1p() / rate,
            Self::Weibull { scale, shape } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            Self::Pareto { scale, index } => scale * (-(-u).ln_1p() / index).exp(),
            Self::LogNormal => normal_quantile(u).exp(),
            Self::LogLogistic { scale, shape } => scale * (u / (1.0 - u)).powf(1.0 / shape),
            Self::AbsNormalPower { exponent } => normal_quantile(0.5 + 0.5 * u).max(0.0).powf(exponent),
            Self::Signed(_) => unreachable!(),
        }
    }

    /// One draw.
    #[inline]
    pub fn draw(&self, stream: &mut RngStream) -> f64 {
        match self {
            Self::Signed(base) => {
                let bits = stream.next_u64();
                let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                let x = base.abs_from_uniform(u);
                if bits & 1 == 0 {
                    x
                } else {
                    -x
                }
            }
            m => m.abs_from_uniform(stream.uniform()),
        }
    }

    /// `count` i.i.d. draws.
    pub fn sample(&self, stream: &mut RngStream, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        self.sample_into(stream, &mut out);
        out
    }

    pub fn sample_into(&self, stream: &mut RngStream, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.draw(stream);
        }
    }

    /// P(X <= x) of the (possibly signed) law.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Signed(base) => {
                if x >= 0.0 {
                    1.0 - 0.5 * base.true_tail(x)
                } else {
                    0.5 * base.true_tail(-x)
                }
            }
            m => {
                if x < 0.0 {
                    0.0
                } else {
                    1.0 - m.true_tail(x)
                }
            }
        }
    }

    /// P(X > x) of the (possibly signed) law.
    pub fn sf(&self, x: f64) -> f64 {
        match self {
            Self::Signed(base) => {
                if x >= 0.0 {
                    0.5 * base.true_tail(x)
                } else {
                    1.0 - 0.5 * base.true_tail(-x)
                }
            }
            m => {
                if x < 0.0 {
                    1.0
                } else {
                    m.true_tail(x)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Signed(_) => 0.0,
            _ => self.abs_moment(1.0),
        }
    }

    pub fn second_moment(&self) -> f64 {
        self.abs_moment(2.0)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    /// E|X|^p for p in {1, 2, 3, 4}; infinite where the moment does not exist.
    pub fn abs_moment(&self, p: f64) -> f64 {
        let pi = std::f64::consts::PI;
        match *self.base() {
            Self::Exponential { rate } => gamma(1.0 + p) / rate.powf(p),
            Self::Weibull { scale, shape } => scale.powf(p) * gamma(1.0 + p / shape),
            Self::Pareto { scale, index } => {
                if index > p {
                    index * scale.powf(p) / (index - p)
                } else {
                    f64::INFINITY
                }
            }
            Self::LogNormal => (0.5 * p * p).exp(),
            Self::LogLogistic { scale, shape } => {
                if shape > p {
                    let b = p * pi / shape;
                    scale.powf(p) * b / b.sin()
                } else {
                    f64::INFINITY
                }
            }
            Self::AbsNormalPower { exponent } => {
                let q = p * exponent;
                2f64.powf(q / 2.0) * gamma((q + 1.0) / 2.0) / pi.sqrt()
            }
            Self::Signed(_) => unreachable!(),
        }
    }

    /// Machine-readable family name.
    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Weibull { .. } => "weibull",
            Self::Pareto { .. } => "pareto",
            Self::LogNormal => "lognormal",
            Self::LogLogistic { .. } => "loglogistic",
            Self::AbsNormalPower { .. } => "absnormalpower",
            Self::Signed(_) => "signed",
        }
    }

    /// One representative of each base family, for catalog listings and batteries.
    pub fn catalog() -> Vec<DistributionModel> {
        vec![
            Self::Exponential { rate: 1.0 },
            Self::Weibull { scale: 1.0, shape: 0.5 },
            Self::Pareto { scale: 1.0, index: 3.0 },
            Self::LogNormal,
            Self::LogLogistic { scale: 1.0, shape: 3.0 },
            Self::AbsNormalPower { exponent: 2.0 },
        ]
    }
}

impl fmt::Display for DistributionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { rate } => write!(f, "exponential{{rate={rate:?}}}"),
            Self::Weibull { scale, shape } => write!(f, "weibull{{scale={scale:?},shape={shape:?}}}"),
            Self::Pareto { scale, index } => write!(f, "pareto{{scale={scale:?},index={index:?}}}"),
            Self::LogNormal => write!(f, "lognormal"),
            Self::LogLogistic { scale, shape } => write!(f, "loglogistic{{scale={scale:?},shape={shape:?}}}"),
            Self::AbsNormalPower { exponent } => write!(f, "absnormalpower{{exponent={exponent:?}}}"),
            Self::Signed(b) => write!(f, "signed({b})"),
        }
    }
}

impl FromStr for DistributionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("signed(").and_then(|r| r.strip_suffix(')')) {
            let base: DistributionModel = inner.parse()?;
            return DistributionModel::signed(base);
        }
        let (name, params) = crate::token::split_token(s)?;
        let mut p = crate::token::Params::new(name, params)?;
        let model = match name {
            "exponential" => Self::Exponential { rate: p.take("rate", Some(1.0))? },
            "weibull" => Self::Weibull {
                scale: p.take("scale", Some(1.0))?,
                shape: p.take("shape", None)?,
            },
            "pareto" => Self::Pareto {
                scale: p.take("scale", Some(1.0))?,
                index: p.take("index", None)?,
            },
            "lognormal" => Self::LogNormal,
            "loglogistic" => Self::LogLogistic {
                scale: p.take("scale", Some(1.0))?,
                shape: p.take("shape", None)?,
            },
            "absnormalpower" => Self::AbsNormalPower { exponent: p.take("exponent", None)? },
            _ => return Err(crate::token::unknown(name, &FAMILY_NAMES)),
        };
        p.finish()?;
        model.validated()
    }
}

/// ln(1 + e^z) without overflow.
fn ln_one_plus_exp(z: f64) -> f64 {
    if z < 0.0 {
        z.exp().ln_1p()
    } else {
        z + (-z).exp().ln_1p()
    }
}

/// ln(e^y - 1) for y >= 0 without overflow.
fn ln_exp_m1(y: f64) -> f64 {
    if y < 30.0 {
        y.exp_m1().ln()
    } else {
        y + ln_one_minus_exp_neg(y)
    }
}
