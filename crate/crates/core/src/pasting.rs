//! Linear part of every best-response system.
//!
//! Given the knots of each regime's continuation interval, the exponential
//! coefficients follow from one linear equation per knot:
//! an impulse knot pegs `v(at) = v(target) - K`, a switch knot pegs
//! `v(at) = v_other(at) - cost`, and an unbounded side kills the exponential
//! that explodes there. Free-boundary locations are found by the nonlinear
//! solvers in `consumer` and `producer`, which call into this module.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Regime, RegimeFundamentals};
use crate::numerics::solve_dense;
use crate::piecewise::{Analytic, Extension, PiecewiseValue, ValuePair};
use crate::strategy::Threshold;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Side {
    /// An impulse fires at `at` and moves the price to `target`.
    Impulse {
        at: f64,
        target: f64,
        fixed: f64,
        proportional: f64,
        smooth: bool,
    },
    /// The regime switches at `at`; `cost` is paid by the value's owner.
    Switch { at: f64, cost: f64, smooth: bool },
    /// No boundary on this side.
    Open,
}

impl Side {
    fn position(&self) -> Option<f64> {
        match *self {
            Side::Impulse { at, .. } | Side::Switch { at, .. } => Some(at),
            Side::Open => None,
        }
    }

    fn smooth(&self) -> bool {
        match *self {
            Side::Impulse { smooth, .. } | Side::Switch { smooth, .. } => smooth,
            Side::Open => false,
        }
    }

    fn extension(&self) -> Extension {
        match *self {
            Side::Impulse {
                target,
                fixed,
                proportional,
                ..
            } => Extension::Peg {
                target,
                fixed,
                proportional,
            },
            Side::Switch { cost, .. } => Extension::Delegate { cost },
            Side::Open => Extension::Unbounded,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RegimeProblem {
    pub fund: RegimeFundamentals,
    pub lo: Side,
    pub hi: Side,
}

#[derive(Clone, Debug)]
pub enum Spec {
    Solve(RegimeProblem),
    Fixed(PiecewiseValue),
}

impl Spec {
    fn interval(&self) -> (f64, f64) {
        match self {
            Spec::Solve(p) => (
                p.lo.position().unwrap_or(f64::NEG_INFINITY),
                p.hi.position().unwrap_or(f64::INFINITY),
            ),
            Spec::Fixed(v) => (
                v.lo.finite().unwrap_or(f64::NEG_INFINITY),
                v.hi.finite().unwrap_or(f64::INFINITY),
            ),
        }
    }
}

struct Layout {
    lo: f64,
    hi: f64,
    anchor1: f64,
    anchor2: f64,
}

fn layout(p: &RegimeProblem) -> Result<Layout> {
    let lo = p.lo.position().unwrap_or(f64::NEG_INFINITY);
    let hi = p.hi.position().unwrap_or(f64::INFINITY);
    if !(lo < hi) {
        return Err(Error::Eval(format!("empty continuation interval [{lo}, {hi}]")));
    }
    for side in [p.lo, p.hi] {
        if let Side::Impulse { target, .. } = side {
            if !(target > lo && target < hi) {
                return Err(Error::Eval(format!(
                    "impulse target {target} outside continuation interval ({lo}, {hi})"
                )));
            }
        }
    }
    let anchor1 = if hi.is_finite() { hi } else if lo.is_finite() { lo } else { 0.0 };
    let anchor2 = if lo.is_finite() { lo } else if hi.is_finite() { hi } else { 0.0 };
    Ok(Layout {
        lo,
        hi,
        anchor1,
        anchor2,
    })
}

fn basis(f: &RegimeFundamentals, l: &Layout, x: f64) -> [f64; 2] {
    [
        (f.theta1 * (x - l.anchor1)).exp(),
        (f.theta2 * (x - l.anchor2)).exp(),
    ]
}

/// An open side kills its exploding mode exactly rather than to roundoff.
fn open_or(side: Side, c: f64) -> f64 {
    if matches!(side, Side::Open) {
        0.0
    } else {
        c
    }
}

/// Solves for the exponential coefficients of every `Spec::Solve` regime.
pub fn solve_pair(plus: Spec, minus: Spec, provenance: &str) -> Result<ValuePair> {
    let specs = [plus, minus];
    let regimes = [Regime::Plus, Regime::Minus];
    let mut col = [None, None];
    let mut n = 0;
    let mut layouts = [None, None];
    for i in 0..2 {
        if let Spec::Solve(p) = &specs[i] {
            if p.fund.regime != regimes[i] {
                return Err(Error::Eval("regime problem passed in the wrong slot".into()));
            }
            col[i] = Some(n);
            n += 2;
            layouts[i] = Some(layout(p)?);
        }
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let mut row = 0;
    for i in 0..2 {
        let (p, l, c) = match (&specs[i], &layouts[i], col[i]) {
            (Spec::Solve(p), Some(l), Some(c)) => (p, l, c),
            _ => continue,
        };
        let q = p.fund.particular;
        for (side, is_lo) in [(p.lo, true), (p.hi, false)] {
            match side {
                Side::Open => {
                    // theta2 < 0 explodes at -inf, theta1 > 0 at +inf.
                    a[(row, c + if is_lo { 1 } else { 0 })] = 1.0;
                }
                Side::Impulse {
                    at,
                    target,
                    fixed,
                    proportional,
                    ..
                } => {
                    let ea = basis(&p.fund, l, at);
                    let et = basis(&p.fund, l, target);
                    a[(row, c)] = ea[0] - et[0];
                    a[(row, c + 1)] = ea[1] - et[1];
                    b[row] = q.eval(target) - q.eval(at) - fixed - proportional * (at - target).abs();
                }
                Side::Switch { at, cost, .. } => {
                    let e = basis(&p.fund, l, at);
                    a[(row, c)] = e[0];
                    a[(row, c + 1)] = e[1];
                    let j = 1 - i;
                    let (olo, ohi) = specs[j].interval();
                    match (&specs[j], &layouts[j], col[j]) {
                        (Spec::Solve(op), Some(ol), Some(oc)) => {
                            if at >= olo && at <= ohi {
                                let eo = basis(&op.fund, ol, at);
                                a[(row, oc)] = -eo[0];
                                a[(row, oc + 1)] = -eo[1];
                                b[row] = op.fund.particular.eval(at) - q.eval(at) - cost;
                            } else {
                                // The other regime acts at once: follow its impulse.
                                let outer = if at < olo { op.lo } else { op.hi };
                                let Side::Impulse {
                                    target,
                                    fixed,
                                    proportional,
                                    ..
                                } = outer
                                else {
                                    return Err(Error::Eval(format!(
                                        "switch at {at} lands where the other regime switches back"
                                    )));
                                };
                                let eo = basis(&op.fund, ol, target);
                                a[(row, oc)] = -eo[0];
                                a[(row, oc + 1)] = -eo[1];
                                b[row] = op.fund.particular.eval(target)
                                    - fixed
                                    - proportional * (at - target).abs()
                                    - q.eval(at)
                                    - cost;
                            }
                        }
                        (Spec::Fixed(v), _, _) => {
                            b[row] = v.eval_alone(at, 0)? - q.eval(at) - cost;
                        }
                        _ => unreachable!(),
                    }
                }
            }
            row += 1;
        }
    }
    let coef = solve_dense(a, b)?;
    let mut out: Vec<PiecewiseValue> = Vec::with_capacity(2);
    for (i, spec) in specs.into_iter().enumerate() {
        out.push(match spec {
            Spec::Fixed(v) => v,
            Spec::Solve(p) => {
                let l = layouts[i].as_ref().unwrap();
                let c = col[i].unwrap();
                PiecewiseValue {
                    regime: regimes[i],
                    lo: Threshold::from_f64(l.lo),
                    hi: Threshold::from_f64(l.hi),
                    core: Analytic {
                        particular: p.fund.particular,
                        theta1: p.fund.theta1,
                        theta2: p.fund.theta2,
                        c1: open_or(p.hi, coef[c]),
                        c2: open_or(p.lo, coef[c + 1]),
                        anchor1: l.anchor1,
                        anchor2: l.anchor2,
                    },
                    left: p.lo.extension(),
                    right: p.hi.extension(),
                    smooth_lo: p.lo.smooth(),
                    smooth_hi: p.hi.smooth(),
                    fundamentals: p.fund,
                }
            }
        });
    }
    let minus = out.pop().unwrap();
    let plus = out.pop().unwrap();
    ValuePair::new(plus, minus, provenance)
}

/// Solves one regime on its own (no switch sides).
pub fn solve_single(p: RegimeProblem, provenance: &str) -> Result<PiecewiseValue> {
    for s in [p.lo, p.hi] {
        if let Side::Switch { .. } = s {
            return Err(Error::Eval("single-regime solve cannot contain a switch".into()));
        }
    }
    let l = layout(&p)?;
    let mut a = DMatrix::<f64>::zeros(2, 2);
    let mut b = DVector::<f64>::zeros(2);
    let q = p.fund.particular;
    for (row, (side, is_lo)) in [(p.lo, true), (p.hi, false)].into_iter().enumerate() {
        match side {
            Side::Open => a[(row, if is_lo { 1 } else { 0 })] = 1.0,
            Side::Impulse {
                at,
                target,
                fixed,
                proportional,
                ..
            } => {
                let ea = basis(&p.fund, &l, at);
                let et = basis(&p.fund, &l, target);
                a[(row, 0)] = ea[0] - et[0];
                a[(row, 1)] = ea[1] - et[1];
                b[row] = q.eval(target) - q.eval(at) - fixed - proportional * (at - target).abs();
            }
            Side::Switch { .. } => unreachable!(),
        }
    }
    let _ = provenance;
    let coef = solve_dense(a, b)?;
    Ok(PiecewiseValue {
        regime: p.fund.regime,
        lo: Threshold::from_f64(l.lo),
        hi: Threshold::from_f64(l.hi),
        core: Analytic {
            particular: q,
            theta1: p.fund.theta1,
            theta2: p.fund.theta2,
            c1: open_or(p.hi, coef[0]),
            c2: open_or(p.lo, coef[1]),
            anchor1: l.anchor1,
            anchor2: l.anchor2,
        },
        left: p.lo.extension(),
        right: p.hi.extension(),
        smooth_lo: p.lo.smooth(),
        smooth_hi: p.hi.smooth(),
        fundamentals: p.fund,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelParams, Player};

    fn imp(at: f64, target: f64, fixed: f64) -> Side {
        Side::Impulse {
            at,
            target,
            fixed,
            proportional: 0.0,
            smooth: false,
        }
    }

    #[test]
    fn impulse_pegs_hold() {
        let m = Model::new(ModelParams::stylized()).unwrap();
        let f = m.fundamentals(Player::Producer, Regime::Minus);
        let v = solve_single(
            RegimeProblem {
                fund: f,
                lo: imp(2.4, 4.5, 3.0),
                hi: imp(6.1, 4.5, 3.0),
            },
            "test",
        )
        .unwrap();
        let at = |x| v.eval_alone(x, 0).unwrap();
        assert!((at(2.4) - (at(4.5) - 3.0)).abs() < 1e-10);
        assert!((at(6.1) - (at(4.5) - 3.0)).abs() < 1e-10);
    }

    #[test]
    fn coupled_switches_are_continuous() {
        let m = Model::new(ModelParams::stylized()).unwrap();
        let fp = m.fundamentals(Player::Consumer, Regime::Plus);
        let fm = m.fundamentals(Player::Consumer, Regime::Minus);
        let sw = |at, cost| Side::Switch {
            at,
            cost,
            smooth: true,
        };
        let pair = solve_pair(
            Spec::Solve(RegimeProblem {
                fund: fp,
                lo: Side::Open,
                hi: sw(4.3, 10.0),
            }),
            Spec::Solve(RegimeProblem {
                fund: fm,
                lo: sw(1.7, 10.0),
                hi: Side::Open,
            }),
            "test",
        )
        .unwrap();
        let g = pair.eval(Regime::Plus, 4.3) - (pair.eval(Regime::Minus, 4.3) - 10.0);
        let h = pair.eval(Regime::Minus, 1.7) - (pair.eval(Regime::Plus, 1.7) - 10.0);
        assert!(g.abs() < 1e-9 && h.abs() < 1e-9);
        assert_eq!(pair.plus.core.c2, 0.0);
        assert_eq!(pair.minus.core.c1, 0.0);
        // Delegation beyond the switch.
        let x = 5.0;
        assert!((pair.eval(Regime::Plus, x) - (pair.eval(Regime::Minus, x) - 10.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_impulse_is_singular() {
        let m = Model::new(ModelParams::stylized()).unwrap();
        let f = m.fundamentals(Player::Consumer, Regime::Minus);
        // Threshold equal to its target (zero impulse).
        let r = solve_single(
            RegimeProblem {
                fund: f,
                lo: Side::Open,
                hi: imp(6.1, 6.1 - 1e-15, 0.0),
            },
            "test",
        );
        assert!(r.is_err());
    }
}
