//! Nonnegative quantities carried as natural logarithms.
//!
//! Spanning-tree totals overflow `f64` long before the graphs get large
//! (T(K_200) is about 10^455), so determinants and tree weights are kept in
//! the log domain with an explicit marker for zero.

use serde::{Serialize, Serializer};
use std::fmt;
use std::ops::{Div, Mul};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogWeight {
    ln: Option<f64>,
}

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight { ln: None };
    pub const ONE: LogWeight = LogWeight { ln: Some(0.0) };

    pub fn from_ln(ln: f64) -> Self {
        if ln == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            debug_assert!(ln.is_finite(), "log-weight must be finite, got {ln}");
            LogWeight { ln: Some(ln) }
        }
    }

    pub fn from_linear(x: f64) -> Self {
        assert!(x >= 0.0, "log-weight of a negative quantity {x}");
        if x == 0.0 {
            Self::ZERO
        } else {
            Self::from_ln(x.ln())
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ln.is_none()
    }

    /// Natural log, `-inf` for zero.
    pub fn ln(&self) -> f64 {
        self.ln.unwrap_or(f64::NEG_INFINITY)
    }

    pub fn ln_opt(&self) -> Option<f64> {
        self.ln
    }

    /// Linear value; saturates to `inf` above `exp(709)`.
    pub fn to_linear(&self) -> f64 {
        self.ln.map_or(0.0, f64::exp)
    }

    /// `self / other` as a linear number, without materializing either side.
    pub fn ratio(&self, other: &LogWeight) -> f64 {
        match (self.ln, other.ln) {
            (None, _) => 0.0,
            (Some(_), None) => f64::INFINITY,
            (Some(a), Some(b)) => (a - b).exp(),
        }
    }

    /// Stable `ln(Σ exp(x_i))` over a sequence of log-weights.
    pub fn sum<I: IntoIterator<Item = LogWeight>>(items: I) -> LogWeight {
        let logs: Vec<f64> = items.into_iter().filter_map(|w| w.ln).collect();
        LogWeight {
            ln: log_sum_exp(&logs),
        }
    }
}

pub(crate) fn log_sum_exp(logs: &[f64]) -> Option<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let s: f64 = logs.iter().map(|x| (x - max).exp()).sum();
    Some(max + s.ln())
}

impl Mul for LogWeight {
    type Output = LogWeight;
    fn mul(self, rhs: LogWeight) -> LogWeight {
        match (self.ln, rhs.ln) {
            (Some(a), Some(b)) => LogWeight { ln: Some(a + b) },
            _ => LogWeight::ZERO,
        }
    }
}

impl Div for LogWeight {
    type Output = LogWeight;
    fn div(self, rhs: LogWeight) -> LogWeight {
        match (self.ln, rhs.ln) {
            (Some(a), Some(b)) => LogWeight { ln: Some(a - b) },
            (None, Some(_)) => LogWeight::ZERO,
            (_, None) => panic!("division by a zero log-weight"),
        }
    }
}

impl fmt::Display for LogWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ln {
            Some(x) => write!(f, "{x}"),
            None => f.write_str("zero"),
        }
    }
}

/// Serialized as the log value, or the string `"zero"`.
impl Serialize for LogWeight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.ln {
            Some(x) => s.serialize_f64(x),
            None => s.serialize_str("zero"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_stay_in_log_domain() {
        let big = LogWeight::from_ln(800.0);
        let prod = big * big;
        assert_eq!(prod.ln(), 1600.0);
        assert!((prod / big).ln() == 800.0);
        assert_eq!((big * LogWeight::ZERO), LogWeight::ZERO);
        assert!((LogWeight::from_ln(801.0).ratio(&big) - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn sum_handles_overflowing_terms() {
        let s = LogWeight::sum([LogWeight::from_ln(1000.0), LogWeight::from_ln(1000.0)]);
        assert!((s.ln() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(LogWeight::sum([LogWeight::ZERO]).is_zero());
    }

    #[test]
    fn serializes_zero_marker() {
        assert_eq!(serde_json::to_string(&LogWeight::ZERO).unwrap(), "\"zero\"");
        assert_eq!(serde_json::to_string(&LogWeight::from_ln(0.5)).unwrap(), "0.5");
    }
}
