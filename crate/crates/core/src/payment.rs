//! Owner payment schemes: non-decreasing maps from privacy loss to money,
//! plus their closed-form inverses.
//!
//! Type A is logarithmic and pays conservative (small ε̂) owners well early
//! on; type B is sublinear, saturating at `8/√500`, and rewards liberal
//! owners at larger ε. The constant `log(30)` in the type A formula is taken
//! as base 10.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Monetary amount in dollars.
pub type Money = f64;

/// Tolerance for every monetary comparison.
pub const MONEY_TOL: Money = 1e-9;

/// `log10(30)`.
pub const LOG10_30: f64 = 1.477_121_254_719_662_4;

/// Supremum of the type B scheme, `8/√500`. Payments at or above it have no
/// preimage.
pub const TYPE_B_SATURATION: Money = 0.357_770_876_399_966_35;

const SQRT_500: f64 = 22.360_679_774_997_898;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PaymentScheme {
    #[serde(rename = "A")]
    TypeA,
    #[serde(rename = "B")]
    TypeB,
}

impl PaymentScheme {
    pub fn tag(self) -> &'static str {
        match self {
            PaymentScheme::TypeA => "A",
            PaymentScheme::TypeB => "B",
        }
    }

    /// Formula evaluation without argument checks. Callers guarantee `eps >= 0`.
    pub(crate) fn eval(self, eps: f64) -> Money {
        match self {
            PaymentScheme::TypeA => LOG10_30 * (9000.0 * eps).ln_1p() / 130.0,
            PaymentScheme::TypeB => 8.0 * eps / (1100.0 + 500.0 * eps * eps).sqrt(),
        }
    }

    /// Inverse without argument checks. Callers guarantee the payment lies in
    /// the scheme's range.
    pub(crate) fn invert(self, payment: Money) -> f64 {
        match self {
            PaymentScheme::TypeA => (130.0 * payment / LOG10_30).exp_m1() / 9000.0,
            PaymentScheme::TypeB => {
                // 64 - 500 p² factored to avoid cancellation near saturation
                let scaled = SQRT_500 * payment;
                let denom = (8.0 - scaled) * (8.0 + scaled);
                payment * (1100.0 / denom).sqrt()
            }
        }
    }
}

impl fmt::Display for PaymentScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PaymentScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(PaymentScheme::TypeA),
            "B" | "b" => Ok(PaymentScheme::TypeB),
            other => Err(Error::Parse(format!("unknown payment scheme {other:?}"))),
        }
    }
}

/// Compensation owed for a privacy loss of `eps`.
pub fn price_of(scheme: PaymentScheme, eps: f64) -> Result<Money> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::domain(format!("privacy loss must be non-negative, got {eps}")));
    }
    Ok(scheme.eval(eps))
}

/// Privacy loss purchased by `payment`; exact inverse of [`price_of`].
pub fn epsilon_of(scheme: PaymentScheme, payment: Money) -> Result<f64> {
    if payment.is_nan() || payment < 0.0 {
        return Err(Error::domain(format!("payment must be non-negative, got {payment}")));
    }
    if scheme == PaymentScheme::TypeB && payment >= TYPE_B_SATURATION {
        return Err(Error::domain(format!(
            "payment {payment} is at or above the type B saturation level {TYPE_B_SATURATION}"
        )));
    }
    Ok(scheme.invert(payment))
}
