//! Equilibrium price dynamics: Brownian exit quantities, path simulation,
//! long-run statistics and the embedded jump chain of interventions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{impulse_cost, Model, Regime};
use crate::numerics::solve_dense;
use crate::strategy::StrategyPair;

/// Probability that `x + mu t + sigma W_t` hits `a` before `b`.
pub fn hitting_prob(x: f64, a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    if x <= a {
        return 1.0;
    }
    if x >= b {
        return 0.0;
    }
    let k = 2.0 * mu / (sigma * sigma);
    let (u, l) = (x - a, b - a);
    if (k * l).abs() < 1e-12 {
        return (b - x) / l;
    }
    if k > 0.0 {
        // (e^{-ku} - e^{-kL}) / (1 - e^{-kL}), all exponents non-positive.
        let num = -(-k * u).exp() * (-k * (l - u)).exp_m1();
        let den = -(-k * l).exp_m1();
        num / den
    } else {
        (k * (l - u)).exp_m1() / (k * l).exp_m1()
    }
}

/// Expected time for `x + mu t + sigma W_t` to leave `(a, b)`.
pub fn expected_exit_time(x: f64, a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    if x <= a || x >= b {
        return 0.0;
    }
    let s2 = sigma * sigma;
    let k = 2.0 * mu / s2;
    let (u, l) = (x - a, b - a);
    if (k * l).abs() < 1e-5 {
        // Driftless value with its first-order correction in k.
        return u * (l - u) / s2 * (1.0 + k * (l - 2.0 * u) / 6.0);
    }
    let pa = hitting_prob(x, a, b, mu, sigma);
    ((1.0 - pa) * l - u) / mu
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ImpulseUp,
    ImpulseDown,
    SwitchToPlus,
    SwitchToMinus,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::ImpulseUp => "impulse_up",
            EventKind::ImpulseDown => "impulse_down",
            EventKind::SwitchToPlus => "switch_to_plus",
            EventKind::SwitchToMinus => "switch_to_minus",
        }
    }

    pub fn is_switch(self) -> bool {
        matches!(self, EventKind::SwitchToPlus | EventKind::SwitchToMinus)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub pre: f64,
    pub post: f64,
}

/// Active thresholds of one regime.
#[derive(Clone, Copy, Debug, PartialEq)]
struct RegimeControls {
    mu: f64,
    lower: Option<(f64, f64)>,
    upper: Option<(f64, f64)>,
    /// Consumer exit level: up out of expansion, down out of contraction.
    switch: Option<f64>,
}

/// Feedback controls of an equilibrium, ready for simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Controls {
    plus: RegimeControls,
    minus: RegimeControls,
    sigma: f64,
}

impl Controls {
    pub fn new(model: &Model, s: &StrategyPair) -> Self {
        let rc = |r: Regime| {
            let row = s.producer.row(r);
            RegimeControls {
                mu: model.params.mu(r),
                lower: row.lower(),
                upper: row.upper(),
                switch: s.consumer.exit(r).finite(),
            }
        };
        Controls {
            plus: rc(Regime::Plus),
            minus: rc(Regime::Minus),
            sigma: model.params.sigma,
        }
    }

    fn get(&self, r: Regime) -> &RegimeControls {
        match r {
            Regime::Plus => &self.plus,
            Regime::Minus => &self.minus,
        }
    }

    /// Continuation band `(lo, hi)` of a regime; infinite where nothing acts.
    pub fn band(&self, r: Regime) -> (f64, f64) {
        let c = self.get(r);
        let mut lo = c.lower.map_or(f64::NEG_INFINITY, |l| l.0);
        let mut hi = c.upper.map_or(f64::INFINITY, |u| u.0);
        if let Some(y) = c.switch {
            match r {
                Regime::Plus => hi = hi.min(y),
                Regime::Minus => lo = lo.max(y),
            }
        }
        (lo, hi)
    }

    /// Moves `x` onto the band edge when the bridge from `prev` crossed it.
    fn bridge_step(&self, prev: f64, x: &mut f64, r: Regime, var: f64, rng: &mut ChaCha8Rng) {
        let (lo, hi) = self.band(r);
        if let Some(edge) = bridge_crossing(prev, *x, lo, hi, var, rng) {
            *x = edge;
        }
    }

    /// Applies every event triggered at `x`, producer first. With `clamp`
    /// an overshoot is moved back to the crossed threshold first.
    fn resolve(&self, t: f64, x: &mut f64, regime: &mut Regime, clamp: bool, events: &mut Vec<Event>) {
        for _ in 0..8 {
            let c = self.get(*regime);
            if let Some((at, target)) = c.lower {
                if *x <= at {
                    let pre = if clamp { at } else { *x };
                    events.push(Event {
                        t,
                        kind: EventKind::ImpulseUp,
                        pre,
                        post: target,
                    });
                    *x = target;
                    continue;
                }
            }
            if let Some((at, target)) = c.upper {
                if *x >= at {
                    let pre = if clamp { at } else { *x };
                    events.push(Event {
                        t,
                        kind: EventKind::ImpulseDown,
                        pre,
                        post: target,
                    });
                    *x = target;
                    continue;
                }
            }
            if let Some(y) = c.switch {
                let fire = match regime {
                    Regime::Plus => *x >= y,
                    Regime::Minus => *x <= y,
                };
                if fire {
                    if clamp {
                        *x = y;
                    }
                    events.push(Event {
                        t,
                        kind: match regime {
                            Regime::Plus => EventKind::SwitchToMinus,
                            Regime::Minus => EventKind::SwitchToPlus,
                        },
                        pre: *x,
                        post: *x,
                    });
                    *regime = regime.other();
                    continue;
                }
            }
            break;
        }
    }
}

/// Per-path random stream: same `(seed, path)` gives the same draws on any thread.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub regimes: Vec<Regime>,
    pub events: Vec<Event>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Brownian-bridge crossing detection, as in `StationaryConfig`.
    #[serde(default)]
    pub bridge: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 100.0,
            dt: 1.0 / 3650.0,
            seed: 1,
            bridge: false,
        }
    }
}

fn coarse_step_warning(controls: &Controls, dt: f64) -> Option<String> {
    let mut narrow = f64::INFINITY;
    for r in Regime::BOTH {
        let (lo, hi) = controls.band(r);
        if (hi - lo).is_finite() {
            narrow = narrow.min(hi - lo);
        }
    }
    let step = controls.sigma * dt.sqrt();
    (step > 0.1 * narrow).then(|| {
        format!("dt={dt} is coarse: per-step diffusion {step:.4} exceeds 10% of the narrowest band {narrow:.4}")
    })
}

/// One Euler path. Prices and regimes are stored every `stride` steps.
pub fn simulate_path(
    model: &Model,
    strategies: &StrategyPair,
    x0: f64,
    regime0: Regime,
    cfg: SimConfig,
    stride: usize,
) -> PathRecord {
    let controls = Controls::new(model, strategies);
    let mut rng = path_rng(cfg.seed, 0);
    let n = (cfg.horizon / cfg.dt).round() as usize;
    let sq = controls.sigma * cfg.dt.sqrt();
    let stride = stride.max(1);
    let mut rec = PathRecord {
        times: vec![],
        prices: vec![],
        regimes: vec![],
        events: vec![],
        warnings: coarse_step_warning(&controls, cfg.dt).into_iter().collect(),
    };
    let (mut x, mut r) = (x0, regime0);
    controls.resolve(0.0, &mut x, &mut r, false, &mut rec.events);
    rec.times.push(0.0);
    rec.prices.push(x);
    rec.regimes.push(r);
    for k in 1..=n {
        let t = k as f64 * cfg.dt;
        let z: f64 = StandardNormal.sample(&mut rng);
        let prev = x;
        x += controls.get(r).mu * cfg.dt + sq * z;
        if cfg.bridge {
            controls.bridge_step(prev, &mut x, r, sq * sq, &mut rng);
        }
        controls.resolve(t, &mut x, &mut r, true, &mut rec.events);
        if k % stride == 0 {
            rec.times.push(t);
            rec.prices.push(x);
            rec.regimes.push(r);
        }
    }
    rec
}

/// Discounted realized payoffs of both players along one path.
fn discounted_path(model: &Model, controls: &Controls, x0: f64, regime0: Regime, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (horizon, dt) = (cfg.horizon, cfg.dt);
    let p = &model.params;
    let n = (horizon / dt).round() as usize;
    let sq = controls.sigma * dt.sqrt();
    let decay = (-p.beta * dt).exp();
    let mut events = Vec::with_capacity(4);
    let (mut x, mut r) = (x0, regime0);
    let charge = |events: &[Event], disc: f64, vp: &mut f64, vc: &mut f64| {
        for e in events {
            if e.kind.is_switch() {
                let into = if e.kind == EventKind::SwitchToPlus { Regime::Plus } else { Regime::Minus };
                *vc -= disc * p.switch_cost(into);
            } else {
                *vp -= disc * impulse_cost(p.kappa0, p.kappa1, e.post - e.pre);
            }
        }
    };
    let (mut vp, mut vc) = (0.0, 0.0);
    controls.resolve(0.0, &mut x, &mut r, false, &mut events);
    charge(&events, 1.0, &mut vp, &mut vc);
    let mut disc = 1.0;
    // Midpoint discounting of the running profit over each step.
    let half = (-0.5 * p.beta * dt).exp();
    for _ in 0..n {
        let (pp, pc) = (model.producer.eval(x), model.consumer.eval(x));
        vp += disc * half * pp * dt;
        vc += disc * half * pc * dt;
        let z: f64 = StandardNormal.sample(rng);
        let prev = x;
        x += controls.get(r).mu * dt + sq * z;
        if cfg.bridge {
            controls.bridge_step(prev, &mut x, r, sq * sq, rng);
        }
        disc *= decay;
        events.clear();
        controls.resolve(0.0, &mut x, &mut r, true, &mut events);
        if !events.is_empty() {
            charge(&events, disc, &mut vp, &mut vc);
        }
    }
    (vp, vc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub producer: f64,
    pub producer_se: f64,
    pub consumer: f64,
    pub consumer_se: f64,
    pub paths: usize,
}

/// Monte Carlo estimate of both players' discounted payoffs from `(x0, regime0)`.
pub fn discounted_payoff(
    model: &Model,
    strategies: &StrategyPair,
    x0: f64,
    regime0: Regime,
    paths: usize,
    cfg: SimConfig,
) -> PayoffEstimate {
    let controls = Controls::new(model, strategies);
    let draws: Vec<(f64, f64)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i as u64);
            discounted_path(model, &controls, x0, regime0, &cfg, &mut rng)
        })
        .collect();
    let n = paths as f64;
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| draws.iter().map(f).sum::<f64>() / n;
    let mp = mean(&|d| d.0);
    let mc = mean(&|d| d.1);
    let vp = draws.iter().map(|d| (d.0 - mp).powi(2)).sum::<f64>() / (n - 1.0);
    let vc = draws.iter().map(|d| (d.1 - mc).powi(2)).sum::<f64>() / (n - 1.0);
    PayoffEstimate {
        producer: mp,
        producer_se: (vp / n).sqrt(),
        consumer: mc,
        consumer_se: (vc / n).sqrt(),
        paths,
    }
}

/// Time-averaged moments of one or more long paths after burn-in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub years: f64,
    pub years_plus: f64,
    pub sum_x: f64,
    pub sum_x2: f64,
    pub sum_pp: f64,
    pub sum_pc: f64,
    pub sum_pp2: f64,
    pub sum_pc2: f64,
    pub sum_ppc: f64,
    pub switches: u64,
    pub impulses: u64,
    pub hist_plus: Vec<f64>,
    pub hist_minus: Vec<f64>,
}

impl Accumulator {
    fn new(bins: usize) -> Self {
        Accumulator {
            hist_plus: vec![0.0; bins],
            hist_minus: vec![0.0; bins],
            ..Default::default()
        }
    }

    fn merge(&mut self, o: &Accumulator) {
        self.years += o.years;
        self.years_plus += o.years_plus;
        self.sum_x += o.sum_x;
        self.sum_x2 += o.sum_x2;
        self.sum_pp += o.sum_pp;
        self.sum_pc += o.sum_pc;
        self.sum_pp2 += o.sum_pp2;
        self.sum_pc2 += o.sum_pc2;
        self.sum_ppc += o.sum_ppc;
        self.switches += o.switches;
        self.impulses += o.impulses;
        for (a, b) in self.hist_plus.iter_mut().zip(&o.hist_plus) {
            *a += b;
        }
        for (a, b) in self.hist_minus.iter_mut().zip(&o.hist_minus) {
            *a += b;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryConfig {
    pub paths: usize,
    /// Simulated years per path after burn-in.
    pub horizon: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub bins: usize,
    pub seed: u64,
    /// Detect threshold crossings inside a step from the Brownian bridge
    /// between its endpoints, which allows much coarser steps.
    #[serde(default)]
    pub bridge: bool,
}

impl StationaryConfig {
    pub fn for_model(model: &Model) -> Self {
        StationaryConfig {
            paths: 64,
            horizon: 2000.0,
            burn_in: 50.0 / model.params.beta,
            dt: 1.0 / 3650.0,
            bins: 100,
            seed: 1,
            bridge: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub edges: Vec<f64>,
    /// Probability mass per bin (overall, and jointly with each regime).
    pub mass: Vec<f64>,
    pub mass_plus: Vec<f64>,
    pub mass_minus: Vec<f64>,
    /// Gaussian-kernel smoothed density values at bin centres.
    pub smoothed: Vec<f64>,
}

impl Density {
    pub fn support(masses: &[f64], edges: &[f64]) -> Option<(f64, f64)> {
        let first = masses.iter().position(|&m| m > 0.0)?;
        let last = masses.iter().rposition(|&m| m > 0.0)?;
        Some((edges[first], edges[last + 1]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRunStats {
    pub mean: f64,
    pub var: f64,
    pub std: f64,
    pub mean_pi_p: f64,
    pub mean_pi_c: f64,
    pub var_pi_p: f64,
    pub var_pi_c: f64,
    pub cov_pi: f64,
    /// Average profit as a fraction of the peak profit rate.
    pub apoo_p: f64,
    pub apoo_c: f64,
    pub switches_per_year: f64,
    pub impulses_per_year: f64,
    pub rho_plus: f64,
    pub years: f64,
    pub density: Density,
}

/// Price window used for histograms: the union of the finite bands.
pub fn histogram_range(controls: &Controls) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in Regime::BOTH {
        let (a, b) = controls.band(r);
        if a.is_finite() {
            lo = lo.min(a);
        }
        if b.is_finite() {
            hi = hi.max(b);
        }
    }
    if !(lo < hi) {
        return Err(Error::InvalidParams("equilibrium has no finite price band".into()));
    }
    let pad = 0.02 * (hi - lo);
    Ok((lo - pad, hi + pad))
}

/// Midpoint of the first regime (expansion first) with a bounded band.
pub fn default_start(model: &Model, strategies: &StrategyPair) -> Result<(f64, Regime)> {
    let controls = Controls::new(model, strategies);
    Regime::BOTH
        .into_iter()
        .find_map(|r| {
            let (lo, hi) = controls.band(r);
            (lo.is_finite() && hi.is_finite() && lo < hi).then(|| (0.5 * (lo + hi), r))
        })
        .ok_or_else(|| Error::InvalidParams("no regime has a bounded continuation band".into()))
}

/// Estimates the long-run law of the controlled price by time averages.
pub fn long_run_stats(model: &Model, strategies: &StrategyPair, x0: f64, regime0: Regime, cfg: StationaryConfig) -> Result<LongRunStats> {
    let controls = Controls::new(model, strategies);
    let (r0, r1) = controls.band(regime0);
    if !(r0.is_finite() || r1.is_finite()) {
        return Err(Error::InvalidParams("starting regime has no finite band".into()));
    }
    let (hlo, hhi) = histogram_range(&controls)?;
    let bins = cfg.bins.max(1);
    let width = (hhi - hlo) / bins as f64;
    let n_burn = (cfg.burn_in / cfg.dt).round() as usize;
    let n_keep = (cfg.horizon / cfg.dt).round() as usize;
    let sq = controls.sigma * cfg.dt.sqrt();
    let per_path: Vec<Accumulator> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i as u64);
            let mut acc = Accumulator::new(bins);
            let mut events = Vec::with_capacity(4);
            let (mut x, mut r) = (x0, regime0);
            controls.resolve(0.0, &mut x, &mut r, false, &mut events);
            for k in 0..n_burn + n_keep {
                let z: f64 = StandardNormal.sample(&mut rng);
                let prev = x;
                x += controls.get(r).mu * cfg.dt + sq * z;
                if cfg.bridge {
                    controls.bridge_step(prev, &mut x, r, sq * sq, &mut rng);
                }
                events.clear();
                controls.resolve(0.0, &mut x, &mut r, true, &mut events);
                if k < n_burn {
                    continue;
                }
                for e in &events {
                    if e.kind.is_switch() {
                        acc.switches += 1;
                    } else {
                        acc.impulses += 1;
                    }
                }
                let pp = model.producer.eval(x);
                let pc = model.consumer.eval(x);
                acc.sum_x += x;
                acc.sum_x2 += x * x;
                acc.sum_pp += pp;
                acc.sum_pc += pc;
                acc.sum_pp2 += pp * pp;
                acc.sum_pc2 += pc * pc;
                acc.sum_ppc += pp * pc;
                let b = (((x - hlo) / width).floor().max(0.0) as usize).min(bins - 1);
                match r {
                    Regime::Plus => {
                        acc.hist_plus[b] += 1.0;
                        acc.years_plus += 1.0;
                    }
                    Regime::Minus => acc.hist_minus[b] += 1.0,
                }
                acc.years += 1.0;
            }
            acc
        })
        .collect();
    let mut tot = Accumulator::new(bins);
    for a in &per_path {
        tot.merge(a);
    }
    let n = tot.years;
    let years = n * cfg.dt;
    let mean = tot.sum_x / n;
    let var = tot.sum_x2 / n - mean * mean;
    let mean_pi_p = tot.sum_pp / n;
    let mean_pi_c = tot.sum_pc / n;
    let edges: Vec<f64> = (0..=bins).map(|i| hlo + width * i as f64).collect();
    let mass_plus: Vec<f64> = tot.hist_plus.iter().map(|c| c / n).collect();
    let mass_minus: Vec<f64> = tot.hist_minus.iter().map(|c| c / n).collect();
    let mass: Vec<f64> = mass_plus.iter().zip(&mass_minus).map(|(a, b)| a + b).collect();
    let smoothed = kernel_smooth(&edges, &mass, var.max(0.0).sqrt(), n);
    Ok(LongRunStats {
        mean,
        var,
        std: var.max(0.0).sqrt(),
        mean_pi_p,
        mean_pi_c,
        var_pi_p: tot.sum_pp2 / n - mean_pi_p * mean_pi_p,
        var_pi_c: tot.sum_pc2 / n - mean_pi_c * mean_pi_c,
        cov_pi: tot.sum_ppc / n - mean_pi_p * mean_pi_c,
        apoo_p: mean_pi_p / model.producer.peak,
        apoo_c: mean_pi_c / model.consumer.peak,
        switches_per_year: tot.switches as f64 / years,
        impulses_per_year: tot.impulses as f64 / years,
        rho_plus: tot.years_plus / n,
        years,
        density: Density {
            edges,
            mass,
            mass_plus,
            mass_minus,
            smoothed,
        },
    })
}

/// Barrier hit by the Brownian bridge from `a` to `b` over one step of
/// variance `var`, if any. Endpoints already outside are left to the caller.
fn bridge_crossing(a: f64, b: f64, lo: f64, hi: f64, var: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    if b <= lo || b >= hi {
        return None;
    }
    // P(max of the bridge > hi) = exp(-2 (hi - a)(hi - b) / var), same below.
    let p_hi = if hi.is_finite() { (-2.0 * (hi - a) * (hi - b) / var).exp() } else { 0.0 };
    let p_lo = if lo.is_finite() { (-2.0 * (a - lo) * (b - lo) / var).exp() } else { 0.0 };
    if p_hi < 1e-12 && p_lo < 1e-12 {
        return None;
    }
    let u: f64 = rng.random();
    if u < p_lo {
        Some(lo)
    } else if u < p_lo + p_hi {
        Some(hi)
    } else {
        None
    }
}

/// Gaussian kernel smoothing of binned masses with Silverman's bandwidth.
fn kernel_smooth(edges: &[f64], mass: &[f64], std: f64, n: f64) -> Vec<f64> {
    let centres: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let width = edges[1] - edges[0];
    let h = (1.06 * std * n.powf(-0.2)).max(width);
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    centres
        .iter()
        .map(|&c| {
            centres
                .iter()
                .zip(mass)
                .map(|(&y, &m)| m * norm * (-0.5 * ((c - y) / h).powi(2)).exp())
                .sum()
        })
        .collect()
}

/// States of the embedded chain of interventions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainState {
    SPlus,
    SMinus,
    IlMinus,
    IhMinus,
    IlPlus,
    IhPlus,
}

impl ChainState {
    pub const ALL: [ChainState; 6] = [
        ChainState::SPlus,
        ChainState::SMinus,
        ChainState::IlMinus,
        ChainState::IhMinus,
        ChainState::IlPlus,
        ChainState::IhPlus,
    ];

    pub fn index(self) -> usize {
        ChainState::ALL.iter().position(|s| *s == self).unwrap()
    }

    pub fn regime(self) -> Regime {
        match self {
            ChainState::SPlus | ChainState::IlPlus | ChainState::IhPlus => Regime::Plus,
            _ => Regime::Minus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ChainState::SPlus => "S+",
            ChainState::SMinus => "S-",
            ChainState::IlMinus => "I_l-",
            ChainState::IhMinus => "I_h-",
            ChainState::IlPlus => "I_l+",
            ChainState::IhPlus => "I_h+",
        }
    }

    /// The chain state entered by a simulated event in regime `from`.
    pub fn of_event(kind: EventKind, from: Regime) -> ChainState {
        match (kind, from) {
            (EventKind::SwitchToPlus, _) => ChainState::SPlus,
            (EventKind::SwitchToMinus, _) => ChainState::SMinus,
            (EventKind::ImpulseUp, Regime::Plus) => ChainState::IlPlus,
            (EventKind::ImpulseUp, Regime::Minus) => ChainState::IlMinus,
            (EventKind::ImpulseDown, Regime::Plus) => ChainState::IhPlus,
            (EventKind::ImpulseDown, Regime::Minus) => ChainState::IhMinus,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpChain {
    pub states: Vec<ChainState>,
    pub p: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    /// Expected sojourn time (yr) after entering each state.
    pub zeta: Vec<f64>,
    /// Entry point of each state, when the state can occur.
    pub entry: Vec<Option<f64>>,
    pub recurrent: Vec<bool>,
}

struct ExitMap {
    lo: f64,
    hi: f64,
    lo_state: ChainState,
    hi_state: ChainState,
    mu: f64,
}

fn exit_map(controls: &Controls, r: Regime) -> Result<ExitMap> {
    let c = controls.get(r);
    let (lo, hi) = controls.band(r);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "{} regime band ({lo}, {hi}) is not bounded; the chain is undefined",
            r.label()
        )));
    }
    let (lo_state, hi_state) = match r {
        Regime::Plus => {
            let hi_state = match (c.upper, c.switch) {
                (Some((b, _)), Some(y)) if b <= y => ChainState::IhPlus,
                (Some(_), None) => ChainState::IhPlus,
                _ => ChainState::SMinus,
            };
            (ChainState::IlPlus, hi_state)
        }
        Regime::Minus => {
            let lo_state = match (c.lower, c.switch) {
                (Some((a, _)), Some(y)) if a >= y => ChainState::IlMinus,
                (Some(_), None) => ChainState::IlMinus,
                _ => ChainState::SPlus,
            };
            (lo_state, ChainState::IhMinus)
        }
    };
    Ok(ExitMap {
        lo,
        hi,
        lo_state,
        hi_state,
        mu: c.mu,
    })
}

/// Builds the 6-state chain from closed-form Brownian exit quantities.
///
/// `start` picks the regime whose recurrent class carries the invariant law
/// when the chain has more than one closed class.
pub fn build_jump_chain(model: &Model, strategies: &StrategyPair, start: Regime) -> Result<JumpChain> {
    let controls = Controls::new(model, strategies);
    let sigma = model.params.sigma;
    let maps = [exit_map(&controls, Regime::Plus), exit_map(&controls, Regime::Minus)];
    let entry_of = |s: ChainState| -> Option<f64> {
        let row = strategies.producer.row(s.regime());
        let x = match s {
            ChainState::SPlus => strategies.consumer.yl.finite(),
            ChainState::SMinus => strategies.consumer.yh.finite(),
            ChainState::IlPlus | ChainState::IlMinus => row.xl_star.finite(),
            ChainState::IhPlus | ChainState::IhMinus => row.xh_star.finite(),
        }?;
        let m = maps[s.regime().index()].as_ref().ok()?;
        (x > m.lo && x < m.hi || (x >= m.lo && x <= m.hi && matches!(s, ChainState::SPlus | ChainState::SMinus)))
            .then_some(x)
    };
    let n = 6;
    let entry: Vec<Option<f64>> = ChainState::ALL.iter().map(|&s| entry_of(s)).collect();
    let mut p = vec![vec![0.0; n]; n];
    let mut zeta = vec![0.0; n];
    let mut defined = vec![false; n];
    for (i, &s) in ChainState::ALL.iter().enumerate() {
        let Some(x) = entry[i] else { continue };
        let m = maps[s.regime().index()].as_ref().map_err(|e| Error::InvalidParams(e.to_string()))?;
        let pl = hitting_prob(x, m.lo, m.hi, m.mu, sigma);
        p[i][m.lo_state.index()] += pl;
        p[i][m.hi_state.index()] += 1.0 - pl;
        zeta[i] = expected_exit_time(x, m.lo, m.hi, m.mu, sigma);
        defined[i] = true;
    }
    if !defined.iter().any(|d| *d) {
        return Err(Error::InvalidParams("no chain state can occur".into()));
    }
    // States that cannot occur copy a defined state of the same regime.
    for i in 0..n {
        if defined[i] {
            continue;
        }
        let reg = ChainState::ALL[i].regime();
        let donor = (0..n)
            .find(|&j| defined[j] && ChainState::ALL[j].regime() == reg)
            .or_else(|| (0..n).find(|&j| defined[j]))
            .unwrap();
        p[i] = p[donor].clone();
        zeta[i] = zeta[donor];
    }
    // Reachability closure.
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        reach[i][i] = true;
        for j in 0..n {
            if p[i][j] > 0.0 {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let recurrent: Vec<bool> = (0..n).map(|i| (0..n).all(|j| !reach[i][j] || reach[j][i])).collect();
    let origins: Vec<usize> = (0..n)
        .filter(|&i| defined[i] && ChainState::ALL[i].regime() == start)
        .collect();
    let origins = if origins.is_empty() { (0..n).filter(|&i| defined[i]).collect() } else { origins };
    // The closed class reached from the starting regime.
    let class: Vec<usize> = (0..n)
        .filter(|&j| recurrent[j] && origins.iter().any(|&o| reach[o][j]))
        .collect();
    let first = *class.first().ok_or_else(|| Error::InvalidParams("no recurrent class".into()))?;
    let class: Vec<usize> = class.into_iter().filter(|&j| reach[first][j] && reach[j][first]).collect();
    let m = class.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (ri, &i) in class.iter().enumerate() {
        for (ci, &j) in class.iter().enumerate() {
            a[(ri, ci)] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for ci in 0..m {
        a[(m - 1, ci)] = 1.0;
    }
    b[m - 1] = 1.0;
    let sol = solve_dense(a, b)?;
    let mut pi = vec![0.0; n];
    for (k, &i) in class.iter().enumerate() {
        pi[i] = sol[k].max(0.0);
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    let recurrent_flags = (0..n).map(|i| class.contains(&i)).collect();
    Ok(JumpChain {
        states: ChainState::ALL.to_vec(),
        p,
        pi,
        zeta,
        entry,
        recurrent: recurrent_flags,
    })
}

impl JumpChain {
    /// Residual `max |Pi P - Pi|`.
    pub fn invariance_residual(&self) -> f64 {
        (0..6)
            .map(|j| ((0..6).map(|i| self.pi[i] * self.p[i][j]).sum::<f64>() - self.pi[j]).abs())
            .fold(0.0, f64::max)
    }
}

/// Long-run fractions of time with expansion and contraction drift.
pub fn regime_occupation(chain: &JumpChain) -> (f64, f64) {
    let total: f64 = (0..6).map(|i| chain.pi[i] * chain.zeta[i]).sum();
    let plus: f64 = [ChainState::SPlus, ChainState::IlPlus, ChainState::IhPlus]
        .iter()
        .map(|s| chain.pi[s.index()] * chain.zeta[s.index()])
        .sum();
    let rho = plus / total;
    (rho, 1.0 - rho)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchTime {
    /// First-step analysis on the chain.
    pub first_step: f64,
    /// Closed formula with the lower-impulse state in the denominator.
    pub formula_lower: f64,
    /// Closed formula read literally, upper-impulse state in the denominator.
    pub formula_upper: f64,
}

/// Expected time until the consumer first switches into contraction,
/// starting from `x0` in expansion.
pub fn expected_switch_time(model: &Model, strategies: &StrategyPair, x0: f64) -> Result<SwitchTime> {
    let chain = build_jump_chain(model, strategies, Regime::Plus)?;
    let controls = Controls::new(model, strategies);
    let m = exit_map(&controls, Regime::Plus)?;
    let sigma = model.params.sigma;
    if x0 >= m.hi && m.hi_state == ChainState::SMinus {
        return Ok(SwitchTime {
            first_step: 0.0,
            formula_lower: 0.0,
            formula_upper: 0.0,
        });
    }
    // T_i = zeta_i + sum_j P_ij T_j over expansion states, T(S-) = 0.
    let plus: Vec<usize> = [ChainState::SPlus, ChainState::IlPlus, ChainState::IhPlus]
        .iter()
        .map(|s| s.index())
        .collect();
    let k = plus.len();
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for (ri, &i) in plus.iter().enumerate() {
        for (ci, &j) in plus.iter().enumerate() {
            a[(ri, ci)] = if i == j { 1.0 } else { 0.0 } - chain.p[i][j];
        }
        b[ri] = chain.zeta[i];
    }
    let t = solve_dense(a, b).map_err(|_| {
        Error::no_solution("expected switch time", "contraction is never reached from expansion")
    })?;
    let pl = hitting_prob(x0, m.lo, m.hi, m.mu, sigma);
    let exit = expected_exit_time(x0, m.lo, m.hi, m.mu, sigma);
    let tx = |s: ChainState| t[plus.iter().position(|&i| i == s.index()).unwrap()];
    let first_step = exit + pl * tx(m.lo_state) + (1.0 - pl) * if m.hi_state == ChainState::SMinus { 0.0 } else { tx(m.hi_state) };
    let il = ChainState::IlPlus.index();
    let ih = ChainState::IhPlus.index();
    let sm = ChainState::SMinus.index();
    let formula = |den: f64| exit + pl / den * chain.zeta[il];
    Ok(SwitchTime {
        first_step,
        formula_lower: formula(chain.p[il][sm]),
        formula_upper: formula(chain.p[ih][sm]),
    })
}
