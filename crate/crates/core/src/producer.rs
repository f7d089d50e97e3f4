//! Producer value functions and best responses to a fixed consumer strategy.
//!
//! Each regime is described by what happens at its two knots: a consumer
//! switch (fixed location), an optimized impulse (threshold and target free),
//! a pinned impulse (threshold fixed, target free), or nothing. Thresholds
//! get C1 conditions `v'(x_l) = kappa1`, `v'(x_h) = -kappa1`; targets get the
//! first-order conditions with the same signs. With `kappa1 = 0` the two
//! targets of a regime coincide at the maximizer of `v`.

use serde::{Deserialize, Serialize};

use crate::consumer::{grid, select_dominant};
use crate::error::{Error, Result};
use crate::model::{impulse_cost, Model, Player, Regime};
use crate::numerics::{newton, NewtonOptions};
use crate::pasting::{solve_pair, solve_single, RegimeProblem, Side, Spec};
use crate::piecewise::{PiecewiseValue, ValuePair};
use crate::strategy::{ConsumerStrategy, ProducerRow, ProducerStrategy, Threshold};

pub use crate::model::impulse_cost as cost_of_impulse;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProducerKind {
    Monopoly,
    NonPreemptive,
    PreemptivePlus,
    PreemptiveMinus,
}

impl ProducerKind {
    pub fn label(self) -> &'static str {
        match self {
            ProducerKind::Monopoly => "monopoly",
            ProducerKind::NonPreemptive => "non_preemptive",
            ProducerKind::PreemptivePlus => "preemptive_plus",
            ProducerKind::PreemptiveMinus => "preemptive_minus",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProducerBR {
    pub kind: ProducerKind,
    pub strategy: ProducerStrategy,
    pub values: ValuePair,
    /// `(regime, target, v'')` at every impulse target.
    pub soc: Vec<(Regime, f64, f64)>,
    pub residual: f64,
    pub iterations: usize,
    pub notes: Vec<String>,
}

impl ProducerBR {
    pub fn soc_holds(&self) -> bool {
        self.soc.iter().all(|s| s.2 < 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Knot {
    Switch(f64),
    Optimized,
    Pinned(f64),
}

impl Knot {
    fn is_impulse(self) -> bool {
        matches!(self, Knot::Optimized | Knot::Pinned(_))
    }
}

/// Unknowns of one regime, in increasing price order:
/// `[x_l?] [x_l* | x*]? [x_h*]? [x_h?]`.
#[derive(Clone, Copy, Debug)]
struct Block {
    regime: Regime,
    lo: Knot,
    hi: Knot,
    shared: bool,
}

impl Block {
    fn new(regime: Regime, lo: Knot, hi: Knot, kappa1: f64) -> Self {
        Block {
            regime,
            lo,
            hi,
            shared: kappa1 == 0.0 && lo.is_impulse() && hi.is_impulse(),
        }
    }

    fn nvars(&self) -> usize {
        let mut n = 0;
        if self.lo == Knot::Optimized {
            n += 1;
        }
        if self.hi == Knot::Optimized {
            n += 1;
        }
        n += match (self.lo.is_impulse(), self.hi.is_impulse(), self.shared) {
            (true, true, true) => 1,
            (a, b, _) => a as usize + b as usize,
        };
        n
    }

    /// `(x_l, x_l*, x_h*, x_h)` decoded from the variable slice.
    fn decode(&self, v: &[f64]) -> [Option<f64>; 4] {
        let mut i = 0;
        let mut next = || {
            let x = v[i];
            i += 1;
            x
        };
        let xl = match self.lo {
            Knot::Optimized => Some(next()),
            Knot::Pinned(p) => Some(p),
            _ => None,
        };
        let tl = if self.lo.is_impulse() { Some(next()) } else { None };
        let th = if self.hi.is_impulse() {
            if self.shared {
                tl
            } else {
                Some(next())
            }
        } else {
            None
        };
        let xh = match self.hi {
            Knot::Optimized => Some(next()),
            Knot::Pinned(p) => Some(p),
            _ => None,
        };
        [xl, tl, th, xh]
    }

    fn encode(&self, row: [f64; 4]) -> Vec<f64> {
        let mut out = vec![];
        if self.lo == Knot::Optimized {
            out.push(row[0]);
        }
        if self.lo.is_impulse() {
            out.push(row[1]);
        }
        if self.hi.is_impulse() && !(self.shared && self.lo.is_impulse()) {
            out.push(row[2]);
        }
        if self.hi == Knot::Optimized {
            out.push(row[3]);
        }
        out
    }

    fn sides(&self, v: &[f64], kappa0: f64, kappa1: f64) -> (Side, Side) {
        let [xl, tl, th, xh] = self.decode(v);
        let lo = match self.lo {
            Knot::Switch(y) => Side::Switch {
                at: y,
                cost: 0.0,
                smooth: false,
            },
            k => Side::Impulse {
                at: xl.unwrap(),
                target: tl.unwrap(),
                fixed: kappa0,
                proportional: kappa1,
                smooth: k == Knot::Optimized,
            },
        };
        let hi = match self.hi {
            Knot::Switch(y) => Side::Switch {
                at: y,
                cost: 0.0,
                smooth: false,
            },
            k => Side::Impulse {
                at: xh.unwrap(),
                target: th.unwrap(),
                fixed: kappa0,
                proportional: kappa1,
                smooth: k == Knot::Optimized,
            },
        };
        (lo, hi)
    }

    fn residuals(&self, v: &[f64], value: &PiecewiseValue, kappa1: f64) -> Vec<f64> {
        let [xl, tl, th, xh] = self.decode(v);
        let d = |x: f64| value.core.d1(x);
        let mut r = vec![];
        if self.lo == Knot::Optimized {
            r.push(d(xl.unwrap()) - kappa1);
        }
        if self.lo.is_impulse() {
            r.push(d(tl.unwrap()) - kappa1);
        }
        if self.hi.is_impulse() && !(self.shared && self.lo.is_impulse()) {
            r.push(d(th.unwrap()) + kappa1);
        }
        if self.hi == Knot::Optimized {
            r.push(d(xh.unwrap()) + kappa1);
        }
        r
    }

    /// Keeps variables strictly increasing and between the fixed knots.
    fn project(&self, v: &mut [f64], bounds: (f64, f64)) {
        let lo = match self.lo {
            Knot::Switch(y) | Knot::Pinned(y) => y,
            _ => bounds.0,
        };
        let hi = match self.hi {
            Knot::Switch(y) | Knot::Pinned(y) => y,
            _ => bounds.1,
        };
        let n = v.len();
        let gap = 1e-7 * (hi - lo).abs().max(1.0);
        let mut prev = lo;
        for i in 0..n {
            let room = hi - gap * (n - i) as f64;
            v[i] = v[i].max(prev + gap).min(room);
            prev = v[i];
        }
    }

    fn row(&self, v: &[f64]) -> ProducerRow {
        let [xl, tl, th, xh] = self.decode(v);
        ProducerRow {
            xl: xl.map_or(Threshold::NegInf, Threshold::Finite),
            xl_star: tl.map_or(Threshold::Absent, Threshold::Finite),
            xh_star: th.map_or(Threshold::Absent, Threshold::Finite),
            xh: xh.map_or(Threshold::PosInf, Threshold::Finite),
        }
    }
}

struct Fit {
    rows: [Option<ProducerRow>; 2],
    values: Vec<PiecewiseValue>,
    residual: f64,
    iterations: usize,
}

fn default_row(model: &Model, regime: Regime) -> [f64; 4] {
    let f = model.fundamentals(Player::Producer, regime);
    let q = f.particular;
    let center = -q.q1 / (2.0 * q.q2);
    let w = (model.params.kappa0 / q.q2.abs()).sqrt().max(1e-3);
    [center - w, center, center, center + w]
}

/// Fits one regime without switch knots, or several coupled ones.
fn fit(model: &Model, blocks: &[Block], fixed: Option<&PiecewiseValue>, guesses: &[[f64; 4]]) -> Result<Fit> {
    let p = &model.params;
    let (k0, k1) = (p.kappa0, p.kappa1);
    let sizes: Vec<usize> = blocks.iter().map(|b| b.nvars()).collect();
    let offsets: Vec<usize> = sizes.iter().scan(0, |s, &n| {
        let o = *s;
        *s += n;
        Some(o)
    }).collect();
    let total: usize = sizes.iter().sum();
    let bounds = model.domain();
    let build = |v: &[f64]| -> Result<Vec<PiecewiseValue>> {
        let problems: Vec<RegimeProblem> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let (lo, hi) = b.sides(&v[offsets[i]..offsets[i] + sizes[i]], k0, k1);
                RegimeProblem {
                    fund: model.fundamentals(Player::Producer, b.regime),
                    lo,
                    hi,
                }
            })
            .collect();
        let has_switch = blocks
            .iter()
            .any(|b| matches!(b.lo, Knot::Switch(_)) || matches!(b.hi, Knot::Switch(_)));
        if !has_switch {
            return problems.into_iter().map(|pr| solve_single(pr, "producer")).collect();
        }
        let spec_for = |r: Regime| -> Result<Spec> {
            if let Some(i) = blocks.iter().position(|b| b.regime == r) {
                Ok(Spec::Solve(problems[i]))
            } else {
                fixed
                    .cloned()
                    .map(Spec::Fixed)
                    .ok_or_else(|| Error::Eval("switch knot without the other regime".into()))
            }
        };
        let pair = solve_pair(spec_for(Regime::Plus)?, spec_for(Regime::Minus)?, "producer")?;
        Ok(blocks.iter().map(|b| pair.get(b.regime).clone()).collect())
    };
    let residual = |v: &[f64]| -> Option<Vec<f64>> {
        let vals = build(v).ok()?;
        let mut r = Vec::with_capacity(total);
        for (i, b) in blocks.iter().enumerate() {
            r.extend(b.residuals(&v[offsets[i]..offsets[i] + sizes[i]], &vals[i], k1));
        }
        Some(r)
    };
    let project = |v: &mut [f64]| {
        for (i, b) in blocks.iter().enumerate() {
            b.project(&mut v[offsets[i]..offsets[i] + sizes[i]], bounds);
        }
    };
    let start = |g: &[[f64; 4]]| -> Vec<f64> {
        blocks
            .iter()
            .enumerate()
            .flat_map(|(i, b)| b.encode(g[i]))
            .collect()
    };
    // Widen and shift the guess until Newton lands.
    let mut best_norm = f64::INFINITY;
    let mut attempts: Vec<Vec<[f64; 4]>> = vec![guesses.to_vec()];
    for &scale in &[1.5, 0.7, 2.2, 0.45, 3.0] {
        attempts.push(
            guesses
                .iter()
                .map(|g| {
                    let c = 0.5 * (g[1] + g[2]);
                    [
                        c - scale * (c - g[0]),
                        c - scale * (c - g[1]),
                        c + scale * (g[2] - c),
                        c + scale * (g[3] - c),
                    ]
                })
                .collect(),
        );
    }
    for g in attempts {
        let out = newton(residual, &start(&g), project, NewtonOptions::default());
        best_norm = best_norm.min(out.norm);
        if out.norm < 1e-8 {
            let vals = build(&out.x)?;
            let mut rows = [None, None];
            for (i, b) in blocks.iter().enumerate() {
                rows[b.regime.index()] = Some(b.row(&out.x[offsets[i]..offsets[i] + sizes[i]]));
            }
            return Ok(Fit {
                rows,
                values: vals,
                residual: out.norm,
                iterations: out.iterations,
            });
        }
    }
    Err(Error::no_solution(
        "producer best response",
        format!("pasting/FOC system did not converge (best residual {best_norm:.3e})"),
    ))
}

fn soc_of(values: &ValuePair, strategy: &ProducerStrategy) -> Vec<(Regime, f64, f64)> {
    let mut out = vec![];
    for r in Regime::BOTH {
        let row = strategy.row(r);
        let mut targets: Vec<f64> = [row.xl_star, row.xh_star].iter().filter_map(|t| t.finite()).collect();
        targets.dedup();
        for t in targets {
            out.push((r, t, values.get(r).core.d2(t)));
        }
    }
    out
}

fn assemble(kind: ProducerKind, plus: (ProducerRow, PiecewiseValue), minus: (ProducerRow, PiecewiseValue), residual: f64, iterations: usize) -> Result<ProducerBR> {
    let strategy = ProducerStrategy {
        plus: plus.0,
        minus: minus.0,
    };
    let values = ValuePair::new(plus.1, minus.1, format!("producer {}", kind.label()))?;
    let soc = soc_of(&values, &strategy);
    let mut notes = vec![];
    for s in &soc {
        if !(s.2 < 0.0) {
            notes.push(format!("SOC fails at {} target {:.4} (v''={:.3e})", s.0.label(), s.1, s.2));
        }
    }
    Ok(ProducerBR {
        kind,
        strategy,
        values,
        soc,
        residual,
        iterations,
        notes,
    })
}

fn monopoly_regime(model: &Model, regime: Regime, guess: Option<[f64; 4]>) -> Result<(ProducerRow, PiecewiseValue, f64, usize)> {
    let b = Block::new(regime, Knot::Optimized, Knot::Optimized, model.params.kappa1);
    let g = guess.unwrap_or_else(|| default_row(model, regime));
    let f = fit(model, &[b], None, &[g])?;
    Ok((f.rows[regime.index()].unwrap(), f.values[0].clone(), f.residual, f.iterations))
}

/// The producer alone in both regimes: two uncoupled two-sided impulse bands.
pub fn monopoly_two_sided(model: &Model) -> Result<ProducerBR> {
    let (rp, vp, ep, ip) = monopoly_regime(model, Regime::Plus, None)?;
    let (rm, vm, em, im) = monopoly_regime(model, Regime::Minus, None)?;
    let br = assemble(ProducerKind::Monopoly, (rp, vp), (rm, vm), ep.max(em), ip + im)?;
    if !br.soc_holds() {
        return Err(Error::no_solution("monopoly impulse band", br.notes.join("; ")));
    }
    Ok(br)
}

fn guess_from(row: Option<&ProducerRow>, fallback: [f64; 4]) -> [f64; 4] {
    let Some(row) = row else { return fallback };
    let pick = |t: Threshold, d: f64| t.finite().unwrap_or(d);
    let mut g = [
        pick(row.xl, fallback[0]),
        pick(row.xl_star, fallback[1]),
        pick(row.xh_star, fallback[2]),
        pick(row.xh, fallback[3]),
    ];
    if !(g[0] < g[1]) {
        g[0] = fallback[0].min(g[1] - 0.1 * (fallback[3] - fallback[0]).abs());
    }
    if !(g[2] < g[3]) {
        g[3] = fallback[3].max(g[2] + 0.1 * (fallback[3] - fallback[0]).abs());
    }
    g
}

/// Solves one regime given what the consumer does there, with the other
/// regime either solved jointly or supplied.
fn respond(
    model: &Model,
    cc: &ConsumerStrategy,
    kind: ProducerKind,
    guess: Option<&ProducerStrategy>,
) -> Result<ProducerBR> {
    let k1 = model.params.kappa1;
    let yl = cc.yl.finite();
    let yh = cc.yh.finite();
    // Knots per regime.
    let (plus_lo, plus_hi, minus_lo, minus_hi) = match kind {
        ProducerKind::NonPreemptive | ProducerKind::Monopoly => (
            Knot::Optimized,
            yh.map_or(Knot::Optimized, Knot::Switch),
            yl.map_or(Knot::Optimized, Knot::Switch),
            Knot::Optimized,
        ),
        ProducerKind::PreemptivePlus => {
            let y = yh.ok_or_else(|| Error::no_solution("preemptive response", "y_h is not finite"))?;
            (Knot::Optimized, Knot::Pinned(y), yl.map_or(Knot::Optimized, Knot::Switch), Knot::Optimized)
        }
        ProducerKind::PreemptiveMinus => {
            let y = yl.ok_or_else(|| Error::no_solution("preemptive response", "y_l is not finite"))?;
            (Knot::Optimized, yh.map_or(Knot::Optimized, Knot::Switch), Knot::Pinned(y), Knot::Optimized)
        }
    };
    let bp = Block::new(Regime::Plus, plus_lo, plus_hi, k1);
    let bm = Block::new(Regime::Minus, minus_lo, minus_hi, k1);
    let gp = guess_from(guess.map(|g| &g.plus), default_row(model, Regime::Plus));
    let gm = guess_from(guess.map(|g| &g.minus), default_row(model, Regime::Minus));
    let plus_switches = matches!(plus_hi, Knot::Switch(_));
    let minus_switches = matches!(minus_lo, Knot::Switch(_));
    let (rows, vals, res, its) = match (plus_switches, minus_switches) {
        (true, true) => {
            let f = fit(model, &[bp, bm], None, &[gp, gm])?;
            (f.rows, f.values, f.residual, f.iterations)
        }
        (false, false) => {
            let a = fit(model, &[bp], None, &[gp])?;
            let b = fit(model, &[bm], None, &[gm])?;
            (
                [a.rows[0], b.rows[1]],
                vec![a.values[0].clone(), b.values[0].clone()],
                a.residual.max(b.residual),
                a.iterations + b.iterations,
            )
        }
        (true, false) => {
            let b = fit(model, &[bm], None, &[gm])?;
            let a = fit(model, &[bp], Some(&b.values[0]), &[gp])?;
            (
                [a.rows[0], b.rows[1]],
                vec![a.values[0].clone(), b.values[0].clone()],
                a.residual.max(b.residual),
                a.iterations + b.iterations,
            )
        }
        (false, true) => {
            let a = fit(model, &[bp], None, &[gp])?;
            let b = fit(model, &[bm], Some(&a.values[0]), &[gm])?;
            (
                [a.rows[0], b.rows[1]],
                vec![a.values[0].clone(), b.values[0].clone()],
                a.residual.max(b.residual),
                a.iterations + b.iterations,
            )
        }
    };
    let rp = rows[0].unwrap();
    let rm = rows[1].unwrap();
    let br = assemble(kind, (rp, vals[0].clone()), (rm, vals[1].clone()), res, its)?;
    if !br.soc_holds() {
        return Err(Error::no_solution(
            "producer best response",
            format!("{}: {}", kind.label(), br.notes.join("; ")),
        ));
    }
    Ok(br)
}

/// Non-preemptive response: the producer lets the consumer switch.
///
/// An equilibrium needs `x_l+ < y_l` and `y_h < x_h-`; a response that
/// breaks this (as happens on the way to a fixed point) carries a note.
pub fn nonpreemptive_br(model: &Model, cc: &ConsumerStrategy, guess: Option<&ProducerStrategy>) -> Result<ProducerBR> {
    let mut br = respond(model, cc, ProducerKind::NonPreemptive, guess)?;
    if let (Some(yl), Some(xl)) = (cc.yl.finite(), br.strategy.plus.xl.finite()) {
        if !(xl < yl) {
            br.notes.push(format!("x_l+ = {xl:.4} >= y_l = {yl:.4}"));
        }
    }
    if let (Some(yh), Some(xh)) = (cc.yh.finite(), br.strategy.minus.xh.finite()) {
        if !(yh < xh) {
            br.notes.push(format!("x_h- = {xh:.4} <= y_h = {yh:.4}"));
        }
    }
    Ok(br)
}

/// Preemptive response in `regime`: impulse at the consumer's switching level.
pub fn preemptive_br(model: &Model, cc: &ConsumerStrategy, regime: Regime, guess: Option<&ProducerStrategy>) -> Result<ProducerBR> {
    let kind = match regime {
        Regime::Plus => ProducerKind::PreemptivePlus,
        Regime::Minus => ProducerKind::PreemptiveMinus,
    };
    respond(model, cc, kind, guess)
}

/// Monopoly rows are a valid response only when the consumer never gets to act.
pub fn monopoly_if_unconstrained(model: &Model, cc: &ConsumerStrategy) -> Result<ProducerBR> {
    let m = monopoly_two_sided(model)?;
    let plus_ok = cc.yh.finite().map_or(true, |y| m.strategy.plus.xh.finite().map_or(false, |x| x <= y));
    let minus_ok = cc.yl.finite().map_or(true, |y| m.strategy.minus.xl.finite().map_or(false, |x| x >= y));
    if plus_ok && minus_ok {
        Ok(m)
    } else {
        Err(Error::no_solution(
            "monopoly response",
            "consumer switches inside the monopoly bands",
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProducerCandidates {
    pub monopoly: bool,
    pub non_preemptive: bool,
    pub preemptive_plus: bool,
    pub preemptive_minus: bool,
    /// Solve the preemptive candidates when the non-preemptive one fails.
    pub preempt_on_failure: bool,
}

impl ProducerCandidates {
    pub fn generic() -> Self {
        ProducerCandidates {
            monopoly: true,
            non_preemptive: true,
            preemptive_plus: false,
            preemptive_minus: false,
            preempt_on_failure: true,
        }
    }

    pub fn all() -> Self {
        ProducerCandidates {
            monopoly: true,
            non_preemptive: true,
            preemptive_plus: true,
            preemptive_minus: true,
            preempt_on_failure: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProducerSelection {
    pub chosen: ProducerBR,
    pub candidates: Vec<crate::consumer::CandidateRecord>,
    pub crossing: Option<String>,
}

/// Comparison window for producer candidates.
fn producer_window(model: &Model, brs: &[&ProducerBR]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in brs {
        for r in Regime::BOTH {
            for t in b.strategy.row(r).entries() {
                if let Some(v) = t.finite() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
    }
    if lo < hi {
        (lo, hi)
    } else {
        (model.producer.x1, model.producer.x2)
    }
}

pub fn producer_best_response(
    model: &Model,
    cc: &ConsumerStrategy,
    allowed: ProducerCandidates,
    guess: Option<&ProducerStrategy>,
    reference: Option<(Regime, f64)>,
) -> Result<ProducerSelection> {
    let mut results: Vec<(ProducerKind, Result<ProducerBR>)> = vec![];
    if allowed.non_preemptive {
        results.push((ProducerKind::NonPreemptive, nonpreemptive_br(model, cc, guess)));
    }
    if allowed.monopoly {
        results.push((ProducerKind::Monopoly, monopoly_if_unconstrained(model, cc)));
    }
    let np_failed = allowed.non_preemptive && results[0].1.is_err();
    let do_pre = |flag: bool| flag || (allowed.preempt_on_failure && np_failed);
    if do_pre(allowed.preemptive_plus) && cc.yh.is_finite() {
        results.push((ProducerKind::PreemptivePlus, preemptive_br(model, cc, Regime::Plus, guess)));
    }
    if do_pre(allowed.preemptive_minus) && cc.yl.is_finite() {
        results.push((ProducerKind::PreemptiveMinus, preemptive_br(model, cc, Regime::Minus, guess)));
    }
    let ok: Vec<&ProducerBR> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    if ok.is_empty() {
        let detail = results
            .iter()
            .map(|(k, r)| format!("{}: {}", k.label(), r.as_ref().err().map(|e| e.to_string()).unwrap_or_default()))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::no_solution("producer best response", detail));
    }
    let xs = grid(producer_window(model, &ok), 401);
    let vals: Vec<&ValuePair> = ok.iter().map(|b| &b.values).collect();
    let rank: Vec<usize> = ok
        .iter()
        .map(|b| match b.kind {
            ProducerKind::Monopoly => 0,
            ProducerKind::NonPreemptive => 1,
            _ => 2,
        })
        .collect();
    let reference = reference.unwrap_or((Regime::Plus, model.producer.xbar));
    let (idx, dom, crossing) = select_dominant(&vals, &rank, &xs, reference);
    let mut candidates = vec![];
    let mut k = 0;
    for (kind, r) in &results {
        candidates.push(match r {
            Ok(b) => {
                let rec = crate::consumer::CandidateRecord {
                    kind: kind.label().into(),
                    outcome: Ok(format!(
                        "plus=[{}, {}, {}, {}] minus=[{}, {}, {}, {}]",
                        b.strategy.plus.xl,
                        b.strategy.plus.xl_star,
                        b.strategy.plus.xh_star,
                        b.strategy.plus.xh,
                        b.strategy.minus.xl,
                        b.strategy.minus.xl_star,
                        b.strategy.minus.xh_star,
                        b.strategy.minus.xh
                    )),
                    dominates_all: dom[k],
                };
                k += 1;
                rec
            }
            Err(e) => crate::consumer::CandidateRecord {
                kind: kind.label().into(),
                outcome: Err(e.to_string()),
                dominates_all: false,
            },
        });
    }
    Ok(ProducerSelection {
        chosen: ok[idx].clone(),
        candidates,
        crossing,
    })
}

/// Largest violation of `v(x) >= max_y { v(y) - K(|x - y|) }` over the grid,
/// taken where the regime continues (positive means the obstacle is violated).
pub fn impulse_obstacle_violation(model: &Model, values: &ValuePair, window: (f64, f64)) -> f64 {
    let xs = grid(window, 401);
    let p = &model.params;
    let mut worst = f64::NEG_INFINITY;
    for r in Regime::BOTH {
        let v = values.get(r);
        let vals: Vec<f64> = xs.iter().map(|&y| values.eval(r, y)).collect();
        for (i, &x) in xs.iter().enumerate() {
            if !v.is_interior(x) {
                continue;
            }
            let best = xs
                .iter()
                .zip(vals.iter())
                .map(|(&y, &vy)| vy - impulse_cost(p.kappa0, p.kappa1, x - y))
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(best - vals[i]);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn model() -> Model {
        Model::new(ModelParams::stylized()).unwrap()
    }

    fn close(t: Threshold, v: f64, tol: f64) -> bool {
        t.finite().map_or(false, |x| (x - v).abs() < tol)
    }

    #[test]
    fn impulse_cost_formula() {
        assert_eq!(impulse_cost(3.0, 0.0, 0.0), 3.0);
        assert_eq!(impulse_cost(3.0, 0.0, 17.0), 3.0);
        assert_eq!(impulse_cost(3.0, 0.5, -2.0), 4.0);
    }

    #[test]
    fn monopoly_rows() {
        let br = monopoly_two_sided(&model()).unwrap();
        let s = br.strategy;
        for (t, v) in s.plus.entries().iter().zip([1.9, 3.5, 3.5, 5.6]) {
            assert!(close(*t, v, 0.05), "{s}");
        }
        for (t, v) in s.minus.entries().iter().zip([2.4, 4.5, 4.5, 6.1]) {
            assert!(close(*t, v, 0.05), "{s}");
        }
        assert!(br.residual < 1e-8 && br.soc_holds());
    }

    #[test]
    fn proportional_cost_splits_targets() {
        let mut p = ModelParams::stylized();
        p.kappa1 = 0.3;
        let m = Model::new(p).unwrap();
        let br = monopoly_two_sided(&m).unwrap();
        for r in Regime::BOTH {
            let row = br.strategy.row(r);
            let (a, ta) = row.lower().unwrap();
            let (b, tb) = row.upper().unwrap();
            assert!(a < ta && ta < tb && tb < b, "{:?}", row);
            let v = &br.values;
            assert!((v.deriv(r, ta) - 0.3).abs() < 1e-8);
            assert!((v.deriv(r, tb) + 0.3).abs() < 1e-8);
            let gap = v.eval(r, b) - (v.eval(r, tb) - 3.0 - 0.3 * (b - tb));
            assert!(gap.abs() < 1e-8);
        }
    }

    #[test]
    fn huge_fixed_cost_never_intervenes() {
        let mut p = ModelParams::stylized();
        p.kappa0 = 1e7;
        let m = Model::new(p).unwrap();
        assert!(monopoly_two_sided(&m).is_err());
    }

    #[test]
    fn nonpreemptive_against_type_one_consumer() {
        let br = nonpreemptive_br(&model(), &ConsumerStrategy::new(2.2, 4.4), None).unwrap();
        let s = br.strategy;
        assert!(close(s.plus.xl, 2.0, 0.06) && close(s.plus.xl_star, 3.6, 0.06), "{s}");
        assert!(close(s.minus.xh_star, 4.5, 0.06) && close(s.minus.xh, 6.1, 0.06), "{s}");
        assert_eq!(s.plus.xh, Threshold::PosInf);
        assert_eq!(s.minus.xl, Threshold::NegInf);
    }

    #[test]
    fn consumer_outside_band_gives_monopoly() {
        let m = model();
        let sel = producer_best_response(&m, &ConsumerStrategy::new(-50.0, 50.0), ProducerCandidates::generic(), None, None).unwrap();
        assert_eq!(sel.chosen.kind, ProducerKind::Monopoly);
    }

    #[test]
    fn preemptive_row() {
        let br = preemptive_br(&model(), &ConsumerStrategy::new(f64::NEG_INFINITY, 4.3), Regime::Plus, None).unwrap();
        let s = br.strategy.plus;
        assert!(close(s.xl, 1.7, 0.06) && close(s.xl_star, 3.1, 0.06) && close(s.xh, 4.3, 1e-12), "{:?}", s);
        assert!(br.soc_holds());
    }
}
