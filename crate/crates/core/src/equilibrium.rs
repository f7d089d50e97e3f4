//! Fixed points of the two best-response maps and their verification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::consumer::{
    comparison_window, consumer_alone, consumer_best_response, grid, vi_margin, ConsumerBR, ConsumerCandidates,
};
use crate::error::{Error, Result};
use crate::model::{Model, Player, Regime};
use crate::piecewise::{Extension, PiecewiseValue, ValuePair};
use crate::producer::{impulse_obstacle_violation, monopoly_two_sided, producer_best_response, ProducerBR, ProducerCandidates};
use crate::strategy::{ConsumerStrategy, StrategyPair, Threshold};

/// Restricts the candidate sets of both best-response selectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Generic,
    TransitoryPlus,
    TransitoryMinus,
    PreemptivePlus,
    PreemptiveMinus,
}

impl Branch {
    pub const ALL: [Branch; 5] = [
        Branch::Generic,
        Branch::TransitoryPlus,
        Branch::TransitoryMinus,
        Branch::PreemptivePlus,
        Branch::PreemptiveMinus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Branch::Generic => "generic",
            Branch::TransitoryPlus => "transitory-plus",
            Branch::TransitoryMinus => "transitory-minus",
            Branch::PreemptivePlus => "preemptive-plus",
            Branch::PreemptiveMinus => "preemptive-minus",
        }
    }

    pub fn consumer_candidates(self) -> ConsumerCandidates {
        let only = |to_plus, to_minus, ignore_own_side| ConsumerCandidates {
            no_switch: false,
            to_plus,
            to_minus,
            double: false,
            ignore_own_side,
            others_on_failure: false,
        };
        match self {
            // Type I form first; the rest only if no double switch exists.
            Branch::Generic => ConsumerCandidates {
                ignore_own_side: true,
                others_on_failure: true,
                ..ConsumerCandidates::all()
            },
            Branch::TransitoryPlus => only(true, false, false),
            Branch::TransitoryMinus => only(false, true, false),
            Branch::PreemptivePlus => only(false, true, true),
            Branch::PreemptiveMinus => only(true, false, true),
        }
    }

    pub fn producer_candidates(self) -> ProducerCandidates {
        let none = ProducerCandidates {
            monopoly: false,
            non_preemptive: false,
            preemptive_plus: false,
            preemptive_minus: false,
            preempt_on_failure: false,
        };
        match self {
            Branch::Generic => ProducerCandidates::generic(),
            Branch::TransitoryPlus | Branch::TransitoryMinus => ProducerCandidates {
                monopoly: true,
                non_preemptive: true,
                ..none
            },
            Branch::PreemptivePlus => ProducerCandidates {
                preemptive_plus: true,
                ..none
            },
            Branch::PreemptiveMinus => ProducerCandidates {
                preemptive_minus: true,
                ..none
            },
        }
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Branch::ALL
            .into_iter()
            .find(|b| b.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown branch '{s}'")))
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sync,
    Async,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sync" => Ok(Mode::Sync),
            "async" => Ok(Mode::Async),
            _ => Err(Error::Config(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeTag {
    I,
    IIToPlus,
    IIToMinus,
    IIIPlus,
    IIIMinus,
    Unclassified,
}

impl TypeTag {
    pub fn label(self) -> &'static str {
        match self {
            TypeTag::I => "I",
            TypeTag::IIToPlus => "II_to_plus",
            TypeTag::IIToMinus => "II_to_minus",
            TypeTag::IIIPlus => "III_plus",
            TypeTag::IIIMinus => "III_minus",
            TypeTag::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Tolerance for a producer threshold sitting on a consumer threshold.
const COINCIDE: f64 = 1e-8;

fn coincide(a: Threshold, b: Threshold) -> bool {
    match (a.finite(), b.finite()) {
        (Some(x), Some(y)) => (x - y).abs() <= COINCIDE * x.abs().max(1.0),
        _ => false,
    }
}

/// Type of a threshold pattern: preemption first, then the transitory and
/// generic patterns.
pub fn classify(s: &StrategyPair) -> TypeTag {
    let (p, c) = (&s.producer, &s.consumer);
    if coincide(p.plus.xh, c.yh) {
        return TypeTag::IIIPlus;
    }
    if coincide(p.minus.xl, c.yl) {
        return TypeTag::IIIMinus;
    }
    match (c.yl.is_finite(), c.yh.is_finite()) {
        (false, true) if c.yl == Threshold::NegInf => return TypeTag::IIToMinus,
        (true, false) if c.yh == Threshold::PosInf => return TypeTag::IIToPlus,
        _ => {}
    }
    if let (Some(yl), Some(yh), Some(xhm), Some(xlp)) = (c.yl.finite(), c.yh.finite(), p.minus.xh.finite(), p.plus.xl.finite()) {
        if yl <= xhm && xlp <= yh {
            return TypeTag::I;
        }
    }
    TypeTag::Unclassified
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TatonnementOptions {
    pub mode: Mode,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TatonnementOptions {
    fn default() -> Self {
        TatonnementOptions {
            mode: Mode::Async,
            max_iter: 200,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub strategies: StrategyPair,
    /// Sup-norm change of the finite thresholds; infinite on a pattern change.
    pub delta: f64,
    pub consumer_kind: String,
    pub producer_kind: String,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity; compared against `tol` in the direction of the check.
    pub margin: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub checks: Vec<Check>,
}

impl Diagnostics {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn at_most(&mut self, name: impl Into<String>, value: f64, tol: f64) {
        self.checks.push(Check {
            name: name.into(),
            passed: value <= tol,
            margin: value,
            tol,
        });
    }

    fn holds(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push(Check {
            name: name.into(),
            passed: ok,
            margin: if ok { 0.0 } else { 1.0 },
            tol: 0.0,
        });
    }

    pub fn max_margin(&self, prefix: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .map(|c| c.margin)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub strategies: StrategyPair,
    pub type_tag: TypeTag,
    pub branch: Branch,
    pub mode: Mode,
    pub producer: ProducerBR,
    pub consumer: ConsumerBR,
    pub iterations: usize,
    pub converged: bool,
    /// Largest threshold move under one more application of both maps.
    pub fixed_point_delta: f64,
    pub history: Vec<IterationRecord>,
    /// Both points of a detected period-2 cycle.
    pub cycle: Option<(StrategyPair, StrategyPair)>,
    pub diagnostics: Diagnostics,
}

impl EquilibriumResult {
    pub fn deltas(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.delta).collect()
    }

    pub fn producer_values(&self) -> &ValuePair {
        &self.producer.values
    }

    pub fn consumer_values(&self) -> &ValuePair {
        &self.consumer.values
    }
}

/// Monopoly bands for the producer and the consumer's stand-alone switching
/// rule, or "never switch" when switching alone does not pay.
pub fn default_seed(model: &Model) -> Result<StrategyPair> {
    let p = monopoly_two_sided(model)?;
    let consumer = match consumer_alone(model) {
        Ok(c) => c.strategy,
        Err(Error::NoSolution { .. }) => ConsumerStrategy::never(),
        Err(e) => return Err(e),
    };
    Ok(StrategyPair {
        producer: p.strategy,
        consumer,
    })
}

fn delta(a: &StrategyPair, b: &StrategyPair) -> f64 {
    a.distance(b).unwrap_or(f64::INFINITY)
}

fn consumer_step(model: &Model, s: &StrategyPair, branch: Branch) -> Result<(ConsumerBR, Vec<String>)> {
    let guess = match (s.consumer.yl.finite(), s.consumer.yh.finite()) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let sel = consumer_best_response(model, &s.producer, branch.consumer_candidates(), guess)?;
    Ok((sel.chosen, sel.crossing.into_iter().collect()))
}

fn producer_step(model: &Model, s: &StrategyPair, branch: Branch) -> Result<(ProducerBR, Vec<String>)> {
    let sel = producer_best_response(model, &s.consumer, branch.producer_candidates(), Some(&s.producer), None)?;
    Ok((sel.chosen, sel.crossing.into_iter().collect()))
}

/// Both maps applied to `s` in the given mode.
fn apply(model: &Model, s: &StrategyPair, branch: Branch, mode: Mode) -> Result<(StrategyPair, ConsumerBR, ProducerBR, Vec<String>)> {
    let (c, mut notes) = consumer_step(model, s, branch)?;
    let p_input = match mode {
        Mode::Sync => *s,
        Mode::Async => StrategyPair {
            producer: s.producer,
            consumer: c.strategy,
        },
    };
    let (p, n2) = producer_step(model, &p_input, branch)?;
    notes.extend(n2);
    let next = StrategyPair {
        producer: p.strategy,
        consumer: c.strategy,
    };
    Ok((next, c, p, notes))
}

/// Iterates the best-response maps from `init` until the thresholds settle.
pub fn tatonnement(model: &Model, init: &StrategyPair, branch: Branch, opts: TatonnementOptions) -> Result<EquilibriumResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let mut s = *init;
    let mut history: Vec<IterationRecord> = vec![];
    let mut prev: Option<StrategyPair> = None;
    let mut converged = false;
    let mut cycle = None;
    let mut last = None;
    for it in 1..=opts.max_iter.max(1) {
        let (next, c, p, notes) = apply(model, &s, branch, opts.mode).map_err(|e| match e {
            Error::NoSolution { what, detail } => Error::NoSolution {
                what,
                detail: format!("{detail} (iteration {it}, from {s})"),
            },
            e => e,
        })?;
        let d = delta(&s, &next);
        history.push(IterationRecord {
            iteration: it,
            strategies: next,
            delta: d,
            consumer_kind: c.kind.label().into(),
            producer_kind: p.kind.label().into(),
            notes,
        });
        last = Some((c, p));
        if d < opts.tol {
            converged = true;
            s = next;
            break;
        }
        if let Some(pp) = prev {
            if delta(&pp, &next) < opts.tol {
                cycle = Some((s, next));
                s = next;
                break;
            }
        }
        prev = Some(s);
        s = next;
    }
    let (consumer, producer) = last.expect("at least one iteration");
    let mut res = EquilibriumResult {
        strategies: s,
        type_tag: classify(&s),
        branch,
        mode: opts.mode,
        iterations: history.len(),
        producer,
        consumer,
        converged,
        fixed_point_delta: f64::NAN,
        history,
        cycle,
        diagnostics: Diagnostics::default(),
    };
    if converged {
        // Re-solve both players against the final pair so the reported values
        // belong to the reported strategies.
        let (c, _) = consumer_step(model, &s, branch)?;
        let (p, _) = producer_step(model, &s, branch)?;
        let again = StrategyPair {
            producer: p.strategy,
            consumer: c.strategy,
        };
        res.fixed_point_delta = delta(&s, &again);
        res.consumer = c;
        res.producer = p;
    }
    res.diagnostics = verify(model, &res);
    Ok(res)
}

/// Tâtonnement from the default seed.
pub fn solve_equilibrium(model: &Model, branch: Branch, opts: TatonnementOptions) -> Result<EquilibriumResult> {
    let seed = default_seed(model)?;
    tatonnement(model, &seed, branch, opts)
}

fn finite_window(values: &PiecewiseValue, domain: (f64, f64)) -> (f64, f64) {
    let lo = values.lo.finite().unwrap_or(domain.0);
    let hi = values.hi.finite().unwrap_or(domain.1);
    (lo, hi)
}

/// ODE residuals on every analytic piece and C0/C1/FOC residuals at every knot.
pub fn value_checks(d: &mut Diagnostics, model: &Model, who: &str, values: &ValuePair, player: Player) {
    let domain = model.domain();
    for r in Regime::BOTH {
        let v = values.get(r);
        let (lo, hi) = finite_window(v, domain);
        let mut ode = 0.0_f64;
        if lo < hi {
            for i in 1..50 {
                let x = lo + (hi - lo) * i as f64 / 50.0;
                match v.ode_residual(x) {
                    Ok(e) => ode = ode.max(e.abs()),
                    Err(_) => ode = f64::INFINITY,
                }
            }
        }
        d.at_most(format!("ode {who} {}", r.label()), ode, 1e-8);
        for at_lo in [true, false] {
            let knot = if at_lo { v.lo } else { v.hi };
            let Some(k) = knot.finite() else { continue };
            let side = if at_lo { "lo" } else { "hi" };
            let Some((outer, slope)) = values.outer_limit(r, at_lo) else {
                continue;
            };
            let tag = format!("{who} {} {side}={k:.4}", r.label());
            d.at_most(format!("C0 {tag}"), (v.core.eval(k) - outer).abs(), 1e-7);
            let smooth = if at_lo { v.smooth_lo } else { v.smooth_hi };
            if smooth {
                d.at_most(format!("C1 {tag}"), (v.core.d1(k) - slope).abs(), 1e-7);
            }
            let ext = if at_lo { v.left } else { v.right };
            if let (Player::Producer, Extension::Peg { target, .. }) = (player, ext) {
                d.at_most(format!("FOC {tag} target={target:.4}"), (v.core.d1(target) - slope).abs(), 1e-7);
            }
        }
    }
}

/// Re-evaluates every equilibrium condition on a result.
pub fn verify(model: &Model, eqm: &EquilibriumResult) -> Diagnostics {
    verify_parts(model, &eqm.strategies, &eqm.producer, &eqm.consumer)
}

/// Checks on an explicit strategy pair with the values solved for it.
pub fn verify_parts(model: &Model, s: &StrategyPair, producer: &ProducerBR, consumer: &ConsumerBR) -> Diagnostics {
    let mut d = Diagnostics::default();
    value_checks(&mut d, model, "producer", &producer.values, Player::Producer);
    value_checks(&mut d, model, "consumer", &consumer.values, Player::Consumer);
    let (p, c) = (&s.producer, &s.consumer);
    d.holds("order producer plus row", p.plus.is_ordered());
    d.holds("order producer minus row", p.minus.is_ordered());
    d.holds("order y_l < y_h", c.is_ordered());
    let lt = |a: Threshold, b: Threshold| match (a.finite(), b.finite()) {
        (Some(x), Some(y)) => x < y,
        _ => true,
    };
    let preempt_plus = coincide(p.plus.xh, c.yh);
    let preempt_minus = coincide(p.minus.xl, c.yl);
    if !preempt_plus {
        d.holds("order x_l+ < y_l", lt(p.plus.xl, c.yl));
        d.holds("order x_l+* < y_h", lt(p.plus.xl_star, c.yh));
    }
    if !preempt_minus {
        d.holds("order y_h < x_h-", lt(c.yh, p.minus.xh));
        d.holds("order y_l < x_h-*", lt(c.yl, p.minus.xh_star));
    }
    for (r, target, v2) in &producer.soc {
        d.at_most(format!("SOC producer {} target={target:.4}", r.label()), *v2, 0.0);
    }
    let window = comparison_window(model, p);
    d.at_most("VI consumer switch obstacle", -vi_margin(model, &consumer.values, &window), 1e-7);
    d.at_most(
        "VI producer impulse obstacle",
        impulse_obstacle_violation(model, &producer.values, window),
        1e-7,
    );
    d
}

/// Smallest `a - b` of two value pairs over a grid, in the given regimes.
pub fn dominance_margin(a: &ValuePair, b: &ValuePair, regimes: &[Regime], window: (f64, f64), n: usize) -> f64 {
    let xs = grid(window, n);
    let mut m = f64::INFINITY;
    for &r in regimes {
        for &x in &xs {
            m = m.min(a.eval(r, x) - b.eval(r, x));
        }
    }
    m
}

/// Price window covering every finite threshold of the given equilibria.
pub fn common_window(results: &[&EquilibriumResult]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in results {
        for t in r.strategies.entries() {
            if let Some(x) = t.finite() {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::strategy::{ConsumerStrategy, ProducerRow, ProducerStrategy};

    fn pair(p: [[f64; 4]; 2], c: [f64; 2]) -> StrategyPair {
        let row = |r: [f64; 4]| ProducerRow::from_entries(r.map(Threshold::from_f64));
        StrategyPair {
            producer: ProducerStrategy {
                plus: row(p[0]),
                minus: row(p[1]),
            },
            consumer: ConsumerStrategy {
                yl: Threshold::from_f64(c[0]),
                yh: Threshold::from_f64(c[1]),
            },
        }
    }

    #[test]
    fn classify_patterns() {
        let ni = f64::NEG_INFINITY;
        let pi = f64::INFINITY;
        let na = f64::NAN;
        let t1 = pair([[2.0, 3.6, na, pi], [ni, na, 4.5, 6.1]], [2.2, 4.4]);
        assert_eq!(classify(&t1), TypeTag::I);
        let t2 = pair([[1.9, 3.6, na, pi], [2.4, 4.5, 4.5, 6.1]], [ni, 4.3]);
        assert_eq!(classify(&t2), TypeTag::IIToMinus);
        let t3 = pair([[1.7, 3.1, 3.1, 4.3], [2.4, 4.5, 4.5, 6.1]], [ni, 4.3]);
        assert_eq!(classify(&t3), TypeTag::IIIPlus);
        let t2p = pair([[1.9, 3.5, 3.5, 5.6], [ni, na, 4.5, 6.1]], [2.2, pi]);
        assert_eq!(classify(&t2p), TypeTag::IIToPlus);
        let none = pair([[1.9, 3.5, 3.5, 5.6], [2.4, 4.5, 4.5, 6.1]], [ni, pi]);
        assert_eq!(classify(&none), TypeTag::Unclassified);
    }

    #[test]
    fn branch_names_round_trip() {
        for b in Branch::ALL {
            assert_eq!(b.label().parse::<Branch>().unwrap(), b);
        }
        assert!("sideways".parse::<Branch>().is_err());
    }

    #[test]
    fn generic_converges_to_type_one() {
        let m = Model::new(ModelParams::stylized()).unwrap();
        let r = solve_equilibrium(&m, Branch::Generic, TatonnementOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.deltas());
        assert_eq!(r.type_tag, TypeTag::I, "{}", r.strategies);
        assert!(r.fixed_point_delta < 1e-6);
        let failed: Vec<_> = r.diagnostics.failed().collect();
        assert!(failed.is_empty(), "{failed:?}");
    }

    #[test]
    fn restart_at_fixed_point_is_immediate() {
        let m = Model::new(ModelParams::stylized()).unwrap();
        let r = solve_equilibrium(&m, Branch::Generic, TatonnementOptions::default()).unwrap();
        let again = tatonnement(&m, &r.strategies, Branch::Generic, TatonnementOptions::default()).unwrap();
        assert_eq!(again.iterations, 1);
        assert!(again.history[0].delta < 1e-8);
    }

    #[test]
    fn corrupted_ordering_is_named() {
        let m = Model::new(ModelParams::stylized()).unwrap();
        let r = solve_equilibrium(&m, Branch::Generic, TatonnementOptions::default()).unwrap();
        let mut s = r.strategies;
        s.producer.plus.xl = Threshold::Finite(s.consumer.yl.as_f64() + 0.1);
        let d = verify_parts(&m, &s, &r.producer, &r.consumer);
        let names: Vec<_> = d.failed().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"order x_l+ < y_l"), "{names:?}");
    }

    #[test]
    fn pinned_branches_reach_other_types() {
        let m = Model::new(ModelParams::stylized()).unwrap();
        for (b, tag) in [
            (Branch::TransitoryMinus, TypeTag::IIToMinus),
            (Branch::PreemptivePlus, TypeTag::IIIPlus),
        ] {
            let r = solve_equilibrium(&m, b, TatonnementOptions::default()).unwrap();
            eprintln!("{b}: {} its={} {:?}", r.strategies, r.iterations, r.diagnostics.failed().collect::<Vec<_>>());
            assert!(r.converged);
            assert_eq!(r.type_tag, tag);
            assert!(r.diagnostics.all_pass());
        }
    }

    #[test]
    fn sync_and_async_agree() {
        let m = Model::new(ModelParams::stylized()).unwrap();
        let a = solve_equilibrium(&m, Branch::Generic, TatonnementOptions::default()).unwrap();
        let opts = TatonnementOptions {
            mode: Mode::Sync,
            ..Default::default()
        };
        let s = solve_equilibrium(&m, Branch::Generic, opts).unwrap();
        eprintln!("async {} its={}; sync {} its={}", a.strategies, a.iterations, s.strategies, s.iterations);
        assert!(a.strategies.distance(&s.strategies).unwrap() < 1e-5);
    }
}
