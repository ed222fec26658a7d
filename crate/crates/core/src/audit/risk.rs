//! Sequential risk measurement.
//!
//! The default risk function is the with-replacement Kaplan-Markov
//! product. For a stream `x_1..x_n` of assorter values with null mean at
//! most 1/2,
//!
//! ```text
//! M_j = prod_{i <= j} (x_i + g) / (1/2 + g)
//! p   = min(1, 1 / max_{j <= n} M_j)
//! ```
//!
//! is a test supermartingale for any padding `g >= 0`, so by Ville's
//! inequality the chance that `p` ever reaches `alpha` is at most `alpha`.
//! With `g = 0` a single zero absorbs the product.
//!
//! The product is tracked exactly (unreduced numerator and denominator)
//! for the first `exact_terms` observations and then in the log domain,
//! where every rounding step moves toward a larger p-value.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Factory for sequential tests of "mean <= 1/2".
pub trait RiskFunction: Clone + Send + Sync {
    type Process: RiskProcess;

    /// Starts a fresh test for a stream bounded above by `upper`.
    fn start(&self, upper: BigRational) -> Self::Process;

    /// Expected contribution of `x` to the log of the test statistic, if
    /// the function has one. Planning uses it to stop early on streams
    /// that drift away from rejection.
    fn log_growth(&self, _x: &BigRational) -> Option<f64> {
        None
    }
}

pub trait RiskProcess: Clone + Send + Sync {
    fn observe(&mut self, x: &BigRational) -> Result<()>;

    /// Current p-value, never below the exact value.
    fn p_value(&self) -> f64;

    fn observations(&self) -> usize;

    /// True once no continuation can lower the p-value.
    fn is_exhausted(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KaplanMarkov {
    /// Non-negative padding added to each value and to the null mean.
    #[serde(with = "ratio_text")]
    pub padding: BigRational,
    pub exact_terms: usize,
}

pub const DEFAULT_EXACT_TERMS: usize = 256;

impl Default for KaplanMarkov {
    fn default() -> Self {
        KaplanMarkov {
            padding: BigRational::zero(),
            exact_terms: DEFAULT_EXACT_TERMS,
        }
    }
}

impl KaplanMarkov {
    pub fn with_padding(padding: BigRational) -> Result<Self> {
        if padding.is_negative() {
            return Err(Error::Domain("padding must be non-negative".into()));
        }
        Ok(KaplanMarkov {
            padding,
            ..Self::default()
        })
    }
}

impl RiskFunction for KaplanMarkov {
    type Process = KaplanMarkovProcess;

    fn start(&self, upper: BigRational) -> KaplanMarkovProcess {
        KaplanMarkovProcess {
            two_g: &self.padding * BigInt::from(2),
            exact_terms: self.exact_terms,
            upper,
            n: 0,
            phase: Phase::Exact {
                num: BigUint::one(),
                den: BigUint::one(),
                max_num: BigUint::one(),
                max_den: BigUint::one(),
            },
            ln_cache: Vec::new(),
        }
    }

    fn log_growth(&self, x: &BigRational) -> Option<f64> {
        let two_g = &self.padding * BigInt::from(2);
        let f = (x * BigInt::from(2) + &two_g) / (BigRational::one() + two_g);
        Some(f.to_f64()?.ln())
    }
}

#[derive(Clone, Debug)]
enum Phase {
    Exact {
        num: BigUint,
        den: BigUint,
        max_num: BigUint,
        max_den: BigUint,
    },
    Log {
        /// Lower bound on ln M; `-inf` once absorbed at zero.
        log_m: f64,
        /// Lower bound on ln max M over the log phase and before.
        max_log: f64,
        /// Conservative p-value reached during the exact phase.
        p_exact: f64,
    },
}

#[derive(Clone, Debug)]
pub struct KaplanMarkovProcess {
    two_g: BigRational,
    exact_terms: usize,
    upper: BigRational,
    n: usize,
    phase: Phase,
    ln_cache: Vec<(BigRational, f64)>,
}

impl KaplanMarkovProcess {
    /// `(2x + 2g) / (1 + 2g)`, the per-step factor.
    fn factor(&self, x: &BigRational) -> BigRational {
        (x * BigInt::from(2) + &self.two_g) / (BigRational::one() + &self.two_g)
    }

    fn ln_factor_down(&mut self, x: &BigRational) -> f64 {
        if let Some((_, l)) = self.ln_cache.iter().find(|(v, _)| v == x) {
            return *l;
        }
        let f = self.factor(x);
        let l = if f.is_zero() {
            f64::NEG_INFINITY
        } else {
            ln_ratio_down(&to_biguint(f.numer()), &to_biguint(f.denom()))
        };
        if self.ln_cache.len() < 16 {
            self.ln_cache.push((x.clone(), l));
        }
        l
    }

    pub fn is_absorbed(&self) -> bool {
        match &self.phase {
            Phase::Exact { num, .. } => num.is_zero(),
            Phase::Log { log_m, .. } => *log_m == f64::NEG_INFINITY,
        }
    }
}

impl RiskProcess for KaplanMarkovProcess {
    fn observe(&mut self, x: &BigRational) -> Result<()> {
        if x.is_negative() {
            return Err(Error::Domain(format!("stream value {x} is negative")));
        }
        if *x > self.upper {
            return Err(Error::Domain(format!(
                "stream value {x} exceeds the upper bound {}",
                self.upper
            )));
        }
        self.n += 1;
        if self.n > self.exact_terms {
            if let Phase::Exact {
                num,
                den,
                max_num,
                max_den,
            } = &self.phase
            {
                self.phase = Phase::Log {
                    log_m: if num.is_zero() {
                        f64::NEG_INFINITY
                    } else {
                        ln_ratio_down(num, den)
                    },
                    max_log: ln_ratio_down(max_num, max_den),
                    p_exact: ratio_to_f64_up(max_den, max_num),
                };
            }
        }
        match &self.phase {
            Phase::Exact { .. } => {
                let f = self.factor(x);
                let (fnum, fden) = (to_biguint(f.numer()), to_biguint(f.denom()));
                let grows = fnum > fden;
                if let Phase::Exact {
                    num,
                    den,
                    max_num,
                    max_den,
                } = &mut self.phase
                {
                    if fnum.is_zero() {
                        *num = BigUint::zero();
                        *den = BigUint::one();
                    } else if !num.is_zero() {
                        *num *= &fnum;
                        *den *= &fden;
                        if grows && &*num * &*max_den > &*max_num * &*den {
                            *max_num = num.clone();
                            *max_den = den.clone();
                        }
                    }
                }
            }
            Phase::Log { log_m, .. } => {
                if *log_m != f64::NEG_INFINITY {
                    let step = self.ln_factor_down(x);
                    if let Phase::Log { log_m, max_log, .. } = &mut self.phase {
                        *log_m = if step == f64::NEG_INFINITY {
                            f64::NEG_INFINITY
                        } else {
                            down(*log_m + step)
                        };
                        if *log_m > *max_log {
                            *max_log = *log_m;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn p_value(&self) -> f64 {
        match &self.phase {
            Phase::Exact { max_num, max_den, .. } => ratio_to_f64_up(max_den, max_num).min(1.0),
            Phase::Log { max_log, p_exact, .. } => p_exact.min(up((-max_log).exp())).min(1.0),
        }
    }

    fn observations(&self) -> usize {
        self.n
    }

    fn is_exhausted(&self) -> bool {
        self.is_absorbed()
    }
}

/// p-value of a whole stream under the default risk function.
pub fn risk_pvalue(stream: &[BigRational], upper: &BigRational) -> Result<f64> {
    let mut process = KaplanMarkov::default().start(upper.clone());
    for x in stream {
        process.observe(x)?;
    }
    Ok(process.p_value())
}

/// p-value after each observation.
pub fn risk_trajectory<R: RiskFunction>(risk: &R, stream: &[BigRational], upper: &BigRational) -> Result<Vec<f64>> {
    let mut process = risk.start(upper.clone());
    stream
        .iter()
        .map(|x| {
            process.observe(x)?;
            Ok(process.p_value())
        })
        .collect()
}

fn to_biguint(x: &BigInt) -> BigUint {
    x.magnitude().clone()
}

const SLACK: f64 = 1e-12;

fn down(x: f64) -> f64 {
    x - SLACK * (1.0 + x.abs())
}

/// Relative bump for positive values such as `exp` results.
fn up(x: f64) -> f64 {
    (x * (1.0 + SLACK)).next_up()
}

/// Upper bound on `num / den` as an f64. Requires `num <= den` and both positive.
pub(crate) fn ratio_to_f64_up(num: &BigUint, den: &BigUint) -> f64 {
    if num >= den {
        return 1.0;
    }
    // Scale so the quotient has 52 or 53 significant bits.
    let shift = 52 + den.bits() as i64 - num.bits() as i64;
    let scaled = num << shift as usize;
    let (q, r) = (&scaled / den, &scaled % den);
    let q = if r.is_zero() { q } else { q + 1u32 };
    let mantissa = q.to_u64().expect("quotient fits in 54 bits") as f64;
    if shift <= 1000 {
        mantissa * 2f64.powi(-(shift as i32))
    } else {
        // The value is below 2^(53 - shift); report that bound, clamped.
        let e = (shift - 53).min(1022) as i32;
        2f64.powi(-e)
    }
}

/// Lower bound on `ln(num / den)` for positive `num`, `den`.
pub(crate) fn ln_ratio_down(num: &BigUint, den: &BigUint) -> f64 {
    let shift = 52 + den.bits() as i64 - num.bits() as i64;
    let q = if shift >= 0 {
        (num << shift as usize) / den
    } else {
        num / (den << (-shift) as usize)
    };
    let mantissa = q.to_u64().expect("quotient fits in 54 bits") as f64;
    down(mantissa.ln() - shift as f64 * std::f64::consts::LN_2)
}

/// Serializes a rational as `n/d` text.
pub(crate) mod ratio_text {
    use num_rational::BigRational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", x.numer(), x.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_ratio(&text).map_err(D::Error::custom)
    }
}

/// Parses `n/d`, an integer, or a finite decimal such as `0.05`.
pub fn parse_ratio(text: &str) -> Result<BigRational> {
    let bad = || Error::Validation(format!("not a rational number: {text:?}"));
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if frac.chars().any(|c| !c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    Ok(BigRational::new(n, BigInt::from(10).pow(frac.len() as u32)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn all_ones_closed_form() {
        let ones = vec![r(1, 1); 5];
        assert_eq!(risk_pvalue(&ones, &r(1, 1)).unwrap(), 1.0 / 32.0);
    }

    #[test]
    fn zero_absorbs() {
        let stream = vec![r(1, 1), r(1, 1), r(0, 1), r(1, 1), r(1, 1), r(1, 1)];
        let traj = risk_trajectory(&KaplanMarkov::default(), &stream, &r(1, 1)).unwrap();
        assert_eq!(traj, vec![0.5, 0.25, 0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn halves_are_uninformative() {
        let stream = vec![r(1, 2); 50];
        assert_eq!(risk_pvalue(&stream, &r(1, 1)).unwrap(), 1.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(risk_pvalue(&[r(-1, 2)], &r(1, 1)).is_err());
        assert!(risk_pvalue(&[r(3, 2)], &r(1, 1)).is_err());
    }

    #[test]
    fn padding_softens_zero() {
        let km = KaplanMarkov::with_padding(r(1, 2)).unwrap();
        let stream = vec![r(1, 1), r(0, 1), r(1, 1), r(1, 1), r(1, 1)];
        let traj = risk_trajectory(&km, &stream, &r(1, 1)).unwrap();
        // factors 3/2, 1/2, 3/2, 3/2, 3/2 -> M = 1.5, .75, 1.125, 1.6875, 2.53125
        assert!(BigRational::from_float(traj[0]).unwrap() >= r(2, 3));
        assert!(traj[0] - 2.0 / 3.0 < 1e-15);
        assert!((traj[4] - 1.0 / 2.53125).abs() < 1e-15);
        assert!(traj[4] >= 1.0 / 2.53125);
        assert!(KaplanMarkov::with_padding(r(-1, 2)).is_err());
    }

    #[test]
    fn log_phase_is_conservative_and_close() {
        let exact = KaplanMarkov {
            padding: r(0, 1),
            exact_terms: 10_000,
        };
        let logged = KaplanMarkov {
            padding: r(0, 1),
            exact_terms: 3,
        };
        let stream: Vec<BigRational> = (0..120)
            .map(|i| if i % 7 == 3 { r(1, 4) } else { r(53, 100) })
            .collect();
        let a = risk_trajectory(&exact, &stream, &r(1, 1)).unwrap();
        let b = risk_trajectory(&logged, &stream, &r(1, 1)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(y >= x, "log phase went below exact: {y} < {x}");
            assert!((y - x) / x < 1e-9);
        }
    }

    #[test]
    fn conversions_bound_correctly() {
        let third = ratio_to_f64_up(&BigUint::from(1u32), &BigUint::from(3u32));
        assert!(BigRational::from_float(third).unwrap() >= r(1, 3));
        assert!(third - 1.0 / 3.0 < 1e-16);
        let l = ln_ratio_down(&BigUint::from(3u32), &BigUint::from(1u32));
        assert!(l < 3f64.ln() && 3f64.ln() - l < 1e-10);
    }

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_ratio("0.05").unwrap(), r(1, 20));
        assert_eq!(parse_ratio("3/4").unwrap(), r(3, 4));
        assert_eq!(parse_ratio("2").unwrap(), r(2, 1));
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("abc").is_err());
    }
}
