//! Regime-indexed piecewise closed-form value functions.
//!
//! Each regime has one continuation interval `[lo, hi]` carrying
//! `particular(x) + c1 e^{theta1 (x - a1)} + c2 e^{theta2 (x - a2)}`.
//! Outside it the value is either pegged to an interior target (an impulse
//! lands there) or delegated to the other regime (a switch fires).
//! At a knot the continuation-side formula is used.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Particular, Regime, RegimeFundamentals};
use crate::strategy::Threshold;

/// Closed-form solution of the continuation ODE.
///
/// The exponentials are anchored so that `theta1` decays leftward from the
/// upper knot and `theta2` decays rightward from the lower knot, which keeps
/// the coefficients well scaled for wide bands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analytic {
    pub particular: Particular,
    pub theta1: f64,
    pub theta2: f64,
    pub c1: f64,
    pub c2: f64,
    pub anchor1: f64,
    pub anchor2: f64,
}

impl Analytic {
    pub fn basis(&self, x: f64) -> [f64; 2] {
        [
            (self.theta1 * (x - self.anchor1)).exp(),
            (self.theta2 * (x - self.anchor2)).exp(),
        ]
    }

    fn hom(&self, x: f64, k: i32) -> f64 {
        let [e1, e2] = self.basis(x);
        let t = if self.c1 == 0.0 { 0.0 } else { self.c1 * self.theta1.powi(k) * e1 };
        let s = if self.c2 == 0.0 { 0.0 } else { self.c2 * self.theta2.powi(k) * e2 };
        t + s
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.particular.eval(x) + self.hom(x, 0)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.particular.d1(x) + self.hom(x, 1)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.particular.d2() + self.hom(x, 2)
    }
}

/// What the value does beyond a knot of the continuation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extension {
    /// `v(x) = v(target) - fixed - proportional |x - target|`.
    Peg {
        target: f64,
        fixed: f64,
        proportional: f64,
    },
    /// `v(x) = v_other(x) - cost`.
    Delegate { cost: f64 },
    /// The interval is unbounded on this side.
    Unbounded,
}

/// Value function of one regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseValue {
    pub regime: Regime,
    pub lo: Threshold,
    pub hi: Threshold,
    pub core: Analytic,
    pub left: Extension,
    pub right: Extension,
    /// Whether C1 holds at `lo` / `hi` (free boundaries chosen by this player).
    pub smooth_lo: bool,
    pub smooth_hi: bool,
    pub fundamentals: RegimeFundamentals,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Zone {
    Left,
    Core,
    Right,
}

impl PiecewiseValue {
    fn zone(&self, x: f64) -> Zone {
        if let Threshold::Finite(a) = self.lo {
            if x < a {
                return Zone::Left;
            }
        }
        if let Threshold::Finite(b) = self.hi {
            if x > b {
                return Zone::Right;
            }
        }
        Zone::Core
    }

    /// Finite knots in increasing order.
    pub fn knots(&self) -> Vec<f64> {
        [self.lo, self.hi].iter().filter_map(|t| t.finite()).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.zone(x) == Zone::Core
    }

    /// Whether `x` is strictly inside the continuation interval.
    pub fn is_interior(&self, x: f64) -> bool {
        self.lo.finite().map_or(true, |a| x > a) && self.hi.finite().map_or(true, |b| x < b)
    }

    /// Evaluates without access to the other regime; delegating zones error.
    pub fn eval_alone(&self, x: f64, k: u8) -> Result<f64> {
        self.eval_with(None, x, k)
    }

    fn eval_with(&self, other: Option<&PiecewiseValue>, x: f64, k: u8) -> Result<f64> {
        let ext = match self.zone(x) {
            Zone::Core => {
                return Ok(match k {
                    0 => self.core.eval(x),
                    1 => self.core.d1(x),
                    _ => self.core.d2(x),
                })
            }
            Zone::Left => self.left,
            Zone::Right => self.right,
        };
        match ext {
            Extension::Peg {
                target,
                fixed,
                proportional,
            } => Ok(match k {
                0 => self.core.eval(target) - fixed - proportional * (x - target).abs(),
                1 => proportional * (target - x).signum(),
                _ => 0.0,
            }),
            Extension::Delegate { cost } => {
                let o = other.ok_or_else(|| {
                    Error::Eval(format!(
                        "{} value delegates at x={x} but no other regime is available",
                        self.regime.label()
                    ))
                })?;
                let v = o.eval_with(None, x, k)?;
                Ok(if k == 0 { v - cost } else { v })
            }
            Extension::Unbounded => Err(Error::Eval(format!(
                "x={x} lies outside an unbounded interval"
            ))),
        }
    }

    /// `-beta v + mu v' + sigma^2/2 v'' + pi(x)` on the continuation interval.
    pub fn ode_residual(&self, x: f64) -> Result<f64> {
        if !self.is_interior(x) {
            return Err(Error::Eval(format!(
                "ODE residual requested at x={x}, outside the open continuation interval"
            )));
        }
        let c = &self.core;
        Ok(self.fundamentals.residual(x, c.eval(x), c.d1(x), c.d2(x)))
    }
}

/// Value functions of one player in both regimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuePair {
    pub plus: PiecewiseValue,
    pub minus: PiecewiseValue,
    /// Which solver built the pair.
    pub provenance: String,
}

impl ValuePair {
    pub fn new(plus: PiecewiseValue, minus: PiecewiseValue, provenance: impl Into<String>) -> Result<Self> {
        let pair = ValuePair {
            plus,
            minus,
            provenance: provenance.into(),
        };
        // A delegation must land on a non-delegating zone of the other regime.
        for r in Regime::BOTH {
            let v = pair.get(r);
            let o = pair.get(r.other());
            for (side, ext) in [(v.lo, v.left), (v.hi, v.right)] {
                if let (Extension::Delegate { .. }, Threshold::Finite(k)) = (ext, side) {
                    let probe = if side == v.lo { k - 1e-9 } else { k + 1e-9 };
                    let oz = o.zone(probe);
                    let back = match oz {
                        Zone::Left => matches!(o.left, Extension::Delegate { .. }),
                        Zone::Right => matches!(o.right, Extension::Delegate { .. }),
                        Zone::Core => false,
                    };
                    if back {
                        return Err(Error::Eval(format!(
                            "delegation cycle between regimes near x={k}"
                        )));
                    }
                }
            }
        }
        Ok(pair)
    }

    pub fn get(&self, regime: Regime) -> &PiecewiseValue {
        match regime {
            Regime::Plus => &self.plus,
            Regime::Minus => &self.minus,
        }
    }

    fn eval_k(&self, regime: Regime, x: f64, k: u8) -> f64 {
        self.get(regime)
            .eval_with(Some(self.get(regime.other())), x, k)
            .unwrap_or(f64::NAN)
    }

    pub fn eval(&self, regime: Regime, x: f64) -> f64 {
        self.eval_k(regime, x, 0)
    }

    pub fn deriv(&self, regime: Regime, x: f64) -> f64 {
        self.eval_k(regime, x, 1)
    }

    pub fn deriv2(&self, regime: Regime, x: f64) -> f64 {
        self.eval_k(regime, x, 2)
    }

    pub fn ode_residual(&self, regime: Regime, x: f64) -> Result<f64> {
        self.get(regime).ode_residual(x)
    }

    /// Value just outside the knot, i.e. the extension formula at the knot.
    pub fn outer_limit(&self, regime: Regime, at_lo: bool) -> Option<(f64, f64)> {
        let v = self.get(regime);
        let (knot, ext) = if at_lo { (v.lo, v.left) } else { (v.hi, v.right) };
        let k = knot.finite()?;
        let (val, slope) = match ext {
            Extension::Peg {
                target,
                fixed,
                proportional,
            } => (
                v.core.eval(target) - fixed - proportional * (k - target).abs(),
                proportional * (target - k).signum(),
            ),
            Extension::Delegate { cost } => {
                let o = self.get(regime.other());
                (
                    o.eval_with(None, k, 0).ok()? - cost,
                    o.eval_with(None, k, 1).ok()?,
                )
            }
            Extension::Unbounded => return None,
        };
        Some((val, slope))
    }
}
