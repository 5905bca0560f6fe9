//! Temperature-scaled soft-max numerics in log-domain form.
//!
//! At temperature `t` the soft-max of a table `v` is `t * log(sum_i exp(v_i / t))`.
//! It tends to `max v` as `t -> 0+`, which is the value returned for `t == 0`.
//! Negative temperatures arise from negative counting numbers; they use the same
//! formula, shifted by the minimum instead of the maximum.

use crate::error::NumericsError;

/// Absolute tolerance defining the tied-maximum set at zero temperature.
pub const ARGMAX_TOL: f64 = 1e-9;

/// A (possibly scaled) temperature `eps` or `eps * c_r`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub const ZERO: Temperature = Temperature(0.0);
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(value: f64) -> Result<Self, NumericsError> {
        if value.is_finite() {
            Ok(Temperature(value))
        } else {
            Err(NumericsError::NonFiniteTemperature(value))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `eps * c`, the temperature of a region with counting number `c`.
    #[inline]
    pub fn scaled(self, c: f64) -> Temperature {
        Temperature(self.0 * c)
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

/// `t * log(sum exp(v / t))`, or `max v` when `t == 0`.
pub fn eps_log_sum_exp(values: &[f64], t: Temperature) -> Result<f64, NumericsError> {
    if values.is_empty() {
        return Err(NumericsError::EmptyTable);
    }
    Ok(lse_nonempty(values, t.0))
}

#[inline]
pub(crate) fn lse_nonempty(values: &[f64], t: f64) -> f64 {
    if t == 0.0 {
        return max_of(values);
    }
    let m = if t > 0.0 {
        max_of(values)
    } else {
        min_of(values)
    };
    let s: f64 = values.iter().map(|&v| ((v - m) / t).exp()).sum();
    m + t * s.ln()
}

/// Gibbs distribution `b_i ∝ exp(v_i / t)`.
///
/// At `t == 0` this is the uniform distribution over the entries within
/// [`ARGMAX_TOL`] of the maximum, a deterministic element of the subdifferential
/// of the max-function.
pub fn gibbs_normalize(values: &[f64], t: Temperature) -> Result<Vec<f64>, NumericsError> {
    if values.is_empty() {
        return Err(NumericsError::EmptyTable);
    }
    let mut out = vec![0.0; values.len()];
    gibbs_into(values, t.0, &mut out);
    Ok(out)
}

pub(crate) fn gibbs_into(values: &[f64], t: f64, out: &mut [f64]) {
    debug_assert_eq!(values.len(), out.len());
    if t == 0.0 {
        let m = max_of(values);
        let mut count = 0usize;
        for (o, &v) in out.iter_mut().zip(values) {
            if v >= m - ARGMAX_TOL {
                *o = 1.0;
                count += 1;
            } else {
                *o = 0.0;
            }
        }
        let inv = 1.0 / count as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        return;
    }
    let m = if t > 0.0 {
        max_of(values)
    } else {
        min_of(values)
    };
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(values) {
        *o = ((v - m) / t).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// Shannon entropy `-sum b log b`, with `0 log 0 = 0`.
pub fn entropy(b: &[f64]) -> Result<f64, NumericsError> {
    let mut h = 0.0;
    for (index, &value) in b.iter().enumerate() {
        if value < 0.0 {
            return Err(NumericsError::NegativeProbability { index, value });
        }
        if value > 0.0 {
            h -= value * value.ln();
        }
    }
    Ok(h)
}

#[inline]
fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[inline]
fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: f64) -> Temperature {
        Temperature::new(v).unwrap()
    }

    #[test]
    fn lse_equal_entries() {
        let v = eps_log_sum_exp(&[1.0, 1.0], t(1.0)).unwrap();
        assert!((v - (1.0 + 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn lse_zero_temperature_is_max() {
        assert_eq!(eps_log_sum_exp(&[3.0, 0.0], Temperature::ZERO).unwrap(), 3.0);
    }

    #[test]
    fn lse_matches_high_precision_value() {
        // 50-digit reference: 0.3 * ln(e^{0.7/0.3} + e^{-0.2/0.3} + e^{1.1/0.3})
        let reference = 1.173_288_490_423_120_054_748_766_484_690_897_256;
        let v = eps_log_sum_exp(&[0.7, -0.2, 1.1], t(0.3)).unwrap();
        assert!((v - reference).abs() < 1e-14, "{v}");
    }

    #[test]
    fn lse_rejects_empty() {
        assert_eq!(
            eps_log_sum_exp(&[], t(1.0)),
            Err(NumericsError::EmptyTable)
        );
        assert!(gibbs_normalize(&[], t(1.0)).is_err());
    }

    #[test]
    fn lse_survives_large_entries() {
        let v = eps_log_sum_exp(&[1e300, 1e300], t(1e-3)).unwrap();
        assert!(v.is_finite());
        let v = eps_log_sum_exp(&[800.0, 0.0], t(1.0)).unwrap();
        assert!((v - 800.0).abs() < 1e-12);
    }

    #[test]
    fn negative_temperature_is_soft_min() {
        let v = eps_log_sum_exp(&[2.0, 5.0], t(-1e-6)).unwrap();
        assert!((v - 2.0).abs() < 1e-5);
        let b = gibbs_normalize(&[2.0, 5.0], t(-0.1)).unwrap();
        assert!(b[0] > 0.99);
    }

    #[test]
    fn gibbs_symmetric() {
        let b = gibbs_normalize(&[0.4, 0.4, 0.4], t(1.0)).unwrap();
        for p in b {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gibbs_zero_temperature_point_mass_and_ties() {
        assert_eq!(gibbs_normalize(&[5.0, 1.0], Temperature::ZERO).unwrap(), vec![1.0, 0.0]);
        assert_eq!(
            gibbs_normalize(&[2.0, 2.0, 0.0], Temperature::ZERO).unwrap(),
            vec![0.5, 0.5, 0.0]
        );
    }

    #[test]
    fn entropy_values() {
        let h = entropy(&[0.25; 4]).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let h = entropy(&[0.25, 0.75]).unwrap();
        assert!((h - 0.562_335_144_618_808_4).abs() < 1e-15);
        assert!(matches!(
            entropy(&[-0.1, 1.1]),
            Err(NumericsError::NegativeProbability { index: 0, .. })
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    fn table() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-20.0f64..20.0, 1..12)
    }

    proptest! {
        #[test]
        fn smooth_max_sandwich(v in table(), temp in 1e-4f64..5.0) {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = eps_log_sum_exp(&v, t(temp)).unwrap();
            prop_assert!(s >= m);
            prop_assert!(s <= m + temp * (v.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn shift_covariance(v in table(), temp in 0.0f64..5.0, a in -50.0f64..50.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + a).collect();
            let lhs = eps_log_sum_exp(&shifted, t(temp)).unwrap();
            let rhs = eps_log_sum_exp(&v, t(temp)).unwrap() + a;
            prop_assert!((lhs - rhs).abs() < 1e-10);
            if temp > 0.0 {
                let b1 = gibbs_normalize(&shifted, t(temp)).unwrap();
                let b2 = gibbs_normalize(&v, t(temp)).unwrap();
                for (x, y) in b1.iter().zip(&b2) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn gibbs_sums_to_one(v in table(), temp in 0.0f64..5.0) {
            let b = gibbs_normalize(&v, t(temp)).unwrap();
            let s: f64 = b.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(b.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn gradient_is_gibbs(v in prop::collection::vec(-3.0f64..3.0, 1..8), temp in 0.1f64..3.0) {
            let b = gibbs_normalize(&v, t(temp)).unwrap();
            let h = 1e-5;
            for i in 0..v.len() {
                let mut up = v.clone();
                let mut dn = v.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (eps_log_sum_exp(&up, t(temp)).unwrap()
                    - eps_log_sum_exp(&dn, t(temp)).unwrap()) / (2.0 * h);
                prop_assert!((fd - b[i]).abs() <= 1e-6 * b[i].abs().max(1e-3), "{} vs {}", fd, b[i]);
            }
        }
    }
}
