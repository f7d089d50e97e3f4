//! Consumer value functions and best responses to a fixed producer strategy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, Player, Regime};
use crate::numerics::{newton, scan_roots, NewtonOptions};
use crate::pasting::{solve_pair, solve_single, RegimeProblem, Side, Spec};
use crate::piecewise::{PiecewiseValue, ValuePair};
use crate::strategy::{ConsumerStrategy, ProducerRow, ProducerStrategy, Threshold};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumerKind {
    NoSwitch,
    SingleSwitchToPlus,
    SingleSwitchToMinus,
    DoubleSwitch,
    Alone,
}

impl ConsumerKind {
    pub fn switches(self) -> usize {
        match self {
            ConsumerKind::NoSwitch => 0,
            ConsumerKind::SingleSwitchToPlus | ConsumerKind::SingleSwitchToMinus => 1,
            ConsumerKind::DoubleSwitch | ConsumerKind::Alone => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConsumerKind::NoSwitch => "no_switch",
            ConsumerKind::SingleSwitchToPlus => "single_switch_to_plus",
            ConsumerKind::SingleSwitchToMinus => "single_switch_to_minus",
            ConsumerKind::DoubleSwitch => "double_switch",
            ConsumerKind::Alone => "alone",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Largest smooth-pasting residual at the returned thresholds.
    pub residual: f64,
    pub iterations: usize,
    /// Smallest obstacle margin (value minus switching payoff) on the band.
    pub vi_margin: f64,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumerBR {
    pub kind: ConsumerKind,
    pub strategy: ConsumerStrategy,
    pub values: ValuePair,
    pub diagnostics: SolveDiagnostics,
}

const SWITCH_NAME: &str = "consumer best response";

fn lower_side(row: &ProducerRow) -> Side {
    match row.lower() {
        Some((at, target)) => Side::Impulse {
            at,
            target,
            fixed: 0.0,
            proportional: 0.0,
            smooth: false,
        },
        None => Side::Open,
    }
}

fn upper_side(row: &ProducerRow) -> Side {
    match row.upper() {
        Some((at, target)) => Side::Impulse {
            at,
            target,
            fixed: 0.0,
            proportional: 0.0,
            smooth: false,
        },
        None => Side::Open,
    }
}

fn switch(at: f64, cost: f64) -> Side {
    Side::Switch {
        at,
        cost,
        smooth: true,
    }
}

/// Value of a consumer who never switches, in `regime`, against row `regime` of `cp`.
pub fn no_switch_value(model: &Model, cp: &ProducerStrategy, regime: Regime) -> Result<PiecewiseValue> {
    let row = cp.row(regime);
    solve_single(
        RegimeProblem {
            fund: model.fundamentals(Player::Consumer, regime),
            lo: lower_side(row),
            hi: upper_side(row),
        },
        "consumer no_switch",
    )
}

pub fn no_switch(model: &Model, cp: &ProducerStrategy) -> Result<ConsumerBR> {
    let plus = no_switch_value(model, cp, Regime::Plus)?;
    let minus = no_switch_value(model, cp, Regime::Minus)?;
    let values = ValuePair::new(plus, minus, "consumer no_switch")?;
    Ok(ConsumerBR {
        kind: ConsumerKind::NoSwitch,
        strategy: ConsumerStrategy::never(),
        diagnostics: SolveDiagnostics {
            vi_margin: vi_margin(model, &values, &comparison_window(model, cp)),
            ..Default::default()
        },
        values,
    })
}

/// Window on which candidates are compared and obstacles checked.
pub fn comparison_window(model: &Model, cp: &ProducerStrategy) -> (f64, f64) {
    let lows: Vec<f64> = [cp.plus.xl, cp.minus.xl].iter().filter_map(|t| t.finite()).collect();
    let highs: Vec<f64> = [cp.plus.xh, cp.minus.xh].iter().filter_map(|t| t.finite()).collect();
    let (dlo, dhi) = (model.consumer.x1, model.consumer.x2);
    let lo = lows.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = highs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (
        if lo.is_finite() { lo } else { dlo.min(hi - (dhi - dlo)) },
        if hi.is_finite() { hi } else { dhi.max(lo + (dhi - dlo)) },
    )
}

pub fn grid(window: (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| window.0 + (window.1 - window.0) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Smallest obstacle margin `w_r - (w_other - h_into_other)` over points
/// where regime `r` continues.
pub fn vi_margin(model: &Model, values: &ValuePair, window: &(f64, f64)) -> f64 {
    let mut m = f64::INFINITY;
    for x in grid(*window, 401) {
        for r in Regime::BOTH {
            let v = values.get(r);
            if !v.is_interior(x) {
                continue;
            }
            let gap = values.eval(r, x) - (values.eval(r.other(), x) - model.params.switch_cost(r.other()));
            if gap.is_finite() {
                m = m.min(gap);
            }
        }
    }
    m
}

/// Single switch into the absorbing regime `into`.
///
/// With `ignore_own_side` the producer threshold on the switching side of the
/// departing regime is dropped (used when that threshold is pinned to the
/// switching level by a preemptive producer).
pub fn single_switch_br(
    model: &Model,
    cp: &ProducerStrategy,
    into: Regime,
    ignore_own_side: bool,
) -> Result<ConsumerBR> {
    let from = into.other();
    let fixed = no_switch_value(model, cp, into)?;
    let row = cp.row(from);
    let cost = model.params.switch_cost(into);
    let fund = model.fundamentals(Player::Consumer, from);
    let (dlo, dhi) = model.domain();
    // Switch up out of expansion, or down out of contraction.
    let (lo_b, hi_b) = match from {
        Regime::Plus => {
            let lo = row.xl.finite().unwrap_or(dlo);
            let hi = if ignore_own_side { dhi } else { row.xh.finite().unwrap_or(dhi) };
            (lo, hi)
        }
        Regime::Minus => {
            let lo = if ignore_own_side { dlo } else { row.xl.finite().unwrap_or(dlo) };
            let hi = row.xh.finite().unwrap_or(dhi);
            (lo, hi)
        }
    };
    let build = |y: f64| -> Result<ValuePair> {
        let problem = match from {
            Regime::Plus => RegimeProblem {
                fund,
                lo: lower_side(row),
                hi: switch(y, cost),
            },
            Regime::Minus => RegimeProblem {
                fund,
                lo: switch(y, cost),
                hi: upper_side(row),
            },
        };
        match from {
            Regime::Plus => solve_pair(Spec::Solve(problem), Spec::Fixed(fixed.clone()), "consumer single_switch"),
            Regime::Minus => solve_pair(Spec::Fixed(fixed.clone()), Spec::Solve(problem), "consumer single_switch"),
        }
    };
    let residual = |y: f64| -> Option<f64> {
        let v = build(y).ok()?;
        Some(v.get(from).core.d1(y) - fixed.eval_alone(y, 1).ok()?)
    };
    // Targets of the departing regime's impulses must stay inside the band.
    let mut lo = lo_b;
    let mut hi = hi_b;
    if let (Regime::Plus, Some((_, t))) = (from, row.lower()) {
        lo = lo.max(t);
    }
    if let (Regime::Minus, Some((_, t))) = (from, row.upper()) {
        hi = hi.min(t);
    }
    let eps = 1e-9 * (hi - lo).abs().max(1.0);
    let roots = scan_roots(residual, lo + eps, hi - eps, 400, 1e-7);
    let window = comparison_window(model, cp);
    let mut best: Option<(f64, ConsumerBR)> = None;
    for y in roots {
        let values = match build(y) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let margin = vi_margin(model, &values, &window);
        let score: f64 = grid(window, 101).iter().map(|&x| values.eval(from, x)).sum();
        let res = residual(y).unwrap_or(f64::NAN).abs();
        let ok = margin > -1e-7;
        let rank = if ok { score } else { score - 1e12 };
        if best.as_ref().map_or(true, |(s, _)| rank > *s) {
            let strategy = match into {
                Regime::Minus => ConsumerStrategy {
                    yl: Threshold::NegInf,
                    yh: Threshold::Finite(y),
                },
                Regime::Plus => ConsumerStrategy {
                    yl: Threshold::Finite(y),
                    yh: Threshold::PosInf,
                },
            };
            let mut notes = vec![];
            if !ok {
                notes.push(format!("obstacle violated (margin {margin:.3e})"));
            }
            best = Some((
                rank,
                ConsumerBR {
                    kind: match into {
                        Regime::Minus => ConsumerKind::SingleSwitchToMinus,
                        Regime::Plus => ConsumerKind::SingleSwitchToPlus,
                    },
                    strategy,
                    values,
                    diagnostics: SolveDiagnostics {
                        residual: res,
                        iterations: 0,
                        vi_margin: margin,
                        notes,
                    },
                },
            ));
        }
    }
    best.map(|(_, b)| b).ok_or_else(|| {
        Error::no_solution(
            "single-switch best response",
            format!("C1 residual has no root on ({lo:.4}, {hi:.4})"),
        )
    })
}

/// Both regimes coupled through switches at `(yl, yh)`; shared by the
/// double-switch response and the consumer-alone benchmark.
struct TwoSwitch<'a> {
    model: &'a Model,
    plus_lo: Side,
    minus_hi: Side,
    /// Admissible `yl > yl_min`, `yh < yh_max`.
    yl_min: f64,
    yh_max: f64,
}

impl TwoSwitch<'_> {
    fn build(&self, yl: f64, yh: f64) -> Result<ValuePair> {
        let p = &self.model.params;
        solve_pair(
            Spec::Solve(RegimeProblem {
                fund: self.model.fundamentals(Player::Consumer, Regime::Plus),
                lo: self.plus_lo,
                hi: switch(yh, p.h_minus),
            }),
            Spec::Solve(RegimeProblem {
                fund: self.model.fundamentals(Player::Consumer, Regime::Minus),
                lo: switch(yl, p.h_plus),
                hi: self.minus_hi,
            }),
            "consumer double_switch",
        )
    }

    fn residual(&self, y: &[f64]) -> Option<Vec<f64>> {
        if !(y[0] < y[1]) {
            return None;
        }
        let v = self.build(y[0], y[1]).ok()?;
        Some(vec![
            v.plus.core.d1(y[0]) - v.minus.core.d1(y[0]),
            v.plus.core.d1(y[1]) - v.minus.core.d1(y[1]),
        ])
    }

    fn solve(&self, seeds: &[(f64, f64)], window: (f64, f64)) -> Result<(f64, f64, ValuePair, SolveDiagnostics)> {
        let span = (self.yh_max - self.yl_min).max(1e-6);
        let gap = 1e-6 * span;
        let (yl_min, yh_max) = (self.yl_min, self.yh_max);
        let project = move |y: &mut [f64]| {
            y[0] = y[0].max(yl_min + gap);
            y[1] = y[1].min(yh_max - gap);
            if y[0] > y[1] - gap {
                let m = 0.5 * (y[0] + y[1]);
                y[0] = m - gap;
                y[1] = m + gap;
            }
        };
        let f = |y: &[f64]| self.residual(y);
        let mut starts: Vec<(f64, f64)> = seeds.to_vec();
        let mut tried_grid = false;
        let mut best: Option<(f64, f64, f64, ValuePair, SolveDiagnostics)> = None;
        let mut last_norm = f64::INFINITY;
        loop {
            for &(a, b) in &starts {
                let out = newton(f, &[a, b], project, NewtonOptions::default());
                last_norm = last_norm.min(out.norm);
                if !(out.norm < 1e-8) {
                    continue;
                }
                let (yl, yh) = (out.x[0], out.x[1]);
                if !(yl > yl_min && yh < yh_max && yl < yh) {
                    continue;
                }
                let values = match self.build(yl, yh) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                let margin = vi_margin(self.model, &values, &window);
                let score: f64 = grid(window, 101)
                    .iter()
                    .map(|&x| values.eval(Regime::Plus, x) + values.eval(Regime::Minus, x))
                    .sum();
                let rank = if margin > -1e-7 { score } else { score - 1e12 };
                let diag = SolveDiagnostics {
                    residual: out.norm,
                    iterations: out.iterations,
                    vi_margin: margin,
                    notes: if margin > -1e-7 {
                        vec![]
                    } else {
                        vec![format!("obstacle violated (margin {margin:.3e})")]
                    },
                };
                if best.as_ref().map_or(true, |b| rank > b.0) {
                    best = Some((rank, yl, yh, values, diag));
                }
            }
            if best.as_ref().map_or(false, |b| b.0 > -1e11) || tried_grid {
                break;
            }
            // Multi-start from the best residual norms on a coarse grid.
            tried_grid = true;
            let n = 16;
            let mut cand: Vec<(f64, f64, f64)> = vec![];
            for i in 1..n {
                for j in 1..n {
                    let yl = yl_min + span * i as f64 / n as f64;
                    let yh = yl_min + span * j as f64 / n as f64;
                    if yl >= yh {
                        continue;
                    }
                    if let Some(r) = self.residual(&[yl, yh]) {
                        cand.push((r[0].abs().max(r[1].abs()), yl, yh));
                    }
                }
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0));
            starts = cand.iter().take(10).map(|c| (c.1, c.2)).collect();
        }
        best.map(|(_, yl, yh, v, d)| (yl, yh, v, d)).ok_or_else(|| {
            Error::no_solution(
                "double-switch best response",
                format!(
                    "no admissible root in ({yl_min:.4}, {yh_max:.4}); best residual norm {last_norm:.3e}"
                ),
            )
        })
    }
}

/// Switches into contraction at `yh` and back into expansion at `yl`.
///
/// With `ignore_own_side` the producer's expansion upper and contraction lower
/// thresholds are left out, as in a generic equilibrium where they are absent.
pub fn double_switch_br(
    model: &Model,
    cp: &ProducerStrategy,
    guess: Option<(f64, f64)>,
    ignore_own_side: bool,
) -> Result<ConsumerBR> {
    let (dlo, dhi) = model.domain();
    let mut yl_min = dlo;
    let mut yh_max = dhi;
    let (lows, highs) = if ignore_own_side {
        (vec![cp.plus.xl], vec![cp.minus.xh])
    } else {
        (vec![cp.plus.xl, cp.minus.xl], vec![cp.plus.xh, cp.minus.xh])
    };
    for t in lows {
        if let Some(v) = t.finite() {
            yl_min = yl_min.max(v);
        }
    }
    for t in highs {
        if let Some(v) = t.finite() {
            yh_max = yh_max.min(v);
        }
    }
    if !(yl_min < yh_max) {
        return Err(Error::no_solution(
            "double-switch best response",
            format!("empty admissible band ({yl_min}, {yh_max})"),
        ));
    }
    let solver = TwoSwitch {
        model,
        plus_lo: lower_side(&cp.plus),
        minus_hi: upper_side(&cp.minus),
        yl_min,
        yh_max,
    };
    let xc = model.consumer.xbar;
    let mut seeds = vec![];
    if let Some(g) = guess {
        seeds.push(g);
    }
    seeds.push((xc - 0.5, xc + 0.5));
    let w = (model.consumer.x2 - model.consumer.x1) / 4.0;
    seeds.push((xc - w, xc + w));
    let window = comparison_window(model, cp);
    let (yl, yh, values, diagnostics) = solver.solve(&seeds, window)?;
    Ok(ConsumerBR {
        kind: ConsumerKind::DoubleSwitch,
        strategy: ConsumerStrategy::new(yl, yh),
        values,
        diagnostics,
    })
}

/// The consumer controlling the market alone (no producer interventions).
pub fn consumer_alone(model: &Model) -> Result<ConsumerBR> {
    let (dlo, dhi) = model.domain();
    let solver = TwoSwitch {
        model,
        plus_lo: Side::Open,
        minus_hi: Side::Open,
        yl_min: dlo,
        yh_max: dhi,
    };
    let xc = model.consumer.xbar;
    let w = (model.consumer.x2 - model.consumer.x1) / 4.0;
    let window = (model.consumer.x1, model.consumer.x2);
    let (yl, yh, values, diagnostics) = solver.solve(&[(xc - 0.5, xc + 0.5), (xc - w, xc + w)], window)?;
    Ok(ConsumerBR {
        kind: ConsumerKind::Alone,
        strategy: ConsumerStrategy::new(yl, yh),
        values,
        diagnostics,
    })
}

/// Which candidates a best-response search may return.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerCandidates {
    pub no_switch: bool,
    pub to_plus: bool,
    pub to_minus: bool,
    pub double: bool,
    /// Drop the producer thresholds on the switching sides.
    pub ignore_own_side: bool,
    /// Solve the other candidates only if the double switch fails; they then
    /// see every producer threshold.
    pub others_on_failure: bool,
}

impl ConsumerCandidates {
    pub fn all() -> Self {
        ConsumerCandidates {
            no_switch: true,
            to_plus: true,
            to_minus: true,
            double: true,
            ignore_own_side: false,
            others_on_failure: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub kind: String,
    pub outcome: std::result::Result<String, String>,
    pub dominates_all: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumerSelection {
    pub chosen: ConsumerBR,
    pub candidates: Vec<CandidateRecord>,
    /// Set when no candidate dominates the others on the whole grid.
    pub crossing: Option<String>,
}

/// Largest `v_j - v_i` over the grid, i.e. how far `i` falls short of `j`.
fn shortfall(a: &ValuePair, b: &ValuePair, xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        for r in Regime::BOTH {
            let d = b.eval(r, x) - a.eval(r, x);
            if d.is_finite() {
                m = m.max(d);
            }
        }
    }
    m
}

/// Index of the pointwise-dominant candidate (fewest switches on ties).
///
/// Without a dominant candidate the one with the largest value at
/// `reference` wins and the crossing is described.
pub fn select_dominant(
    values: &[&ValuePair],
    switches: &[usize],
    xs: &[f64],
    reference: (Regime, f64),
) -> (usize, Vec<bool>, Option<String>) {
    let n = values.len();
    let scale = values
        .iter()
        .flat_map(|v| xs.iter().map(move |&x| v.eval(Regime::Plus, x).abs()))
        .filter(|v| v.is_finite())
        .fold(1.0_f64, f64::max);
    let tol = 1e-9 * scale;
    let dominates: Vec<bool> = (0..n)
        .map(|i| (0..n).all(|j| i == j || shortfall(values[i], values[j], xs) <= tol))
        .collect();
    let mut best: Option<usize> = None;
    for i in 0..n {
        if dominates[i] && best.map_or(true, |b| switches[i] < switches[b]) {
            best = Some(i);
        }
    }
    if let Some(b) = best {
        return (b, dominates, None);
    }
    let (r, x) = reference;
    let mut b = 0;
    for i in 1..n {
        if values[i].eval(r, x) > values[b].eval(r, x) {
            b = i;
        }
    }
    (
        b,
        dominates,
        Some(format!(
            "no candidate dominates on the grid; picked by value at ({}, {x:.4})",
            r.label()
        )),
    )
}

/// Best response among the allowed candidates.
pub fn consumer_best_response(
    model: &Model,
    cp: &ProducerStrategy,
    allowed: ConsumerCandidates,
    guess: Option<(f64, f64)>,
) -> Result<ConsumerSelection> {
    let mut results: Vec<(ConsumerKind, Result<ConsumerBR>)> = vec![];
    let mut ignore = allowed.ignore_own_side;
    if allowed.others_on_failure && allowed.double {
        let first = double_switch_br(model, cp, guess, ignore);
        let failed = first.is_err();
        results.push((ConsumerKind::DoubleSwitch, first));
        if !failed {
            return select(model, cp, results);
        }
        ignore = false;
    }
    if allowed.no_switch {
        results.push((ConsumerKind::NoSwitch, no_switch(model, cp)));
    }
    if allowed.to_minus {
        results.push((
            ConsumerKind::SingleSwitchToMinus,
            single_switch_br(model, cp, Regime::Minus, ignore),
        ));
    }
    if allowed.to_plus {
        results.push((
            ConsumerKind::SingleSwitchToPlus,
            single_switch_br(model, cp, Regime::Plus, ignore),
        ));
    }
    if allowed.double && !allowed.others_on_failure {
        results.push((ConsumerKind::DoubleSwitch, double_switch_br(model, cp, guess, ignore)));
    }
    select(model, cp, results)
}

fn select(model: &Model, cp: &ProducerStrategy, results: Vec<(ConsumerKind, Result<ConsumerBR>)>) -> Result<ConsumerSelection> {
    let ok: Vec<&ConsumerBR> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    if ok.is_empty() {
        let detail = results
            .iter()
            .map(|(k, r)| format!("{}: {}", k.label(), r.as_ref().err().map(|e| e.to_string()).unwrap_or_default()))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::no_solution(SWITCH_NAME, detail));
    }
    let xs = grid(comparison_window(model, cp), 401);
    let vals: Vec<&ValuePair> = ok.iter().map(|b| &b.values).collect();
    let sw: Vec<usize> = ok.iter().map(|b| b.kind.switches()).collect();
    let (idx, dom, crossing) = select_dominant(&vals, &sw, &xs, (Regime::Plus, model.consumer.xbar));
    let mut candidates = vec![];
    let mut k = 0;
    for (kind, r) in &results {
        candidates.push(match r {
            Ok(b) => {
                let rec = CandidateRecord {
                    kind: kind.label().into(),
                    outcome: Ok(format!("yl={} yh={}", b.strategy.yl, b.strategy.yh)),
                    dominates_all: dom[k],
                };
                k += 1;
                rec
            }
            Err(e) => CandidateRecord {
                kind: kind.label().into(),
                outcome: Err(e.to_string()),
                dominates_all: false,
            },
        });
    }
    Ok(ConsumerSelection {
        chosen: ok[idx].clone(),
        candidates,
        crossing,
    })
}
