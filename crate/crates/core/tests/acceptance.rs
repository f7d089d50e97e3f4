//! Acceptance run: one PASS/FAIL line per criterion, details indented below.
//!
//! Failing criteria are reported, not hidden; the process exits non-zero on
//! a failure only when `ACCEPTANCE_STRICT` is set.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use commodity_game::cli;
use commodity_game::consumer::{consumer_alone, no_switch};
use commodity_game::dynamics::{
    build_jump_chain, discounted_payoff, hitting_prob, expected_exit_time, long_run_stats, regime_occupation, simulate_path,
    ChainState, Controls, SimConfig, StationaryConfig,
};
use commodity_game::equilibrium::{common_window, dominance_margin, value_checks, Branch, Diagnostics, EquilibriumResult};
use commodity_game::producer::monopoly_two_sided;
use commodity_game::{ConsumerStrategy, Model, Player, Regime, StrategyPair, Threshold, ValuePair};

use common::{mc_exit, renewal_type_one, solve, stylized, with_sigma};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

#[derive(Clone, Copy)]
enum Want {
    V(f64),
    NegInf,
    PosInf,
    Any,
}

use Want::{Any, NegInf, PosInf, V};

const NAMES: [&str; 10] = StrategyPair::ENTRY_NAMES;

/// Compares entries against reference values; returns (all ok, worst error, lines).
fn compare(got: &[Threshold], want: &[Want], names: &[&str], tol: f64) -> (bool, f64, Vec<String>) {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut lines = vec![];
    for ((g, w), n) in got.iter().zip(want).zip(names) {
        let (fine, note) = match (w, g) {
            (V(v), Threshold::Finite(x)) => {
                let e = (x - v).abs();
                worst = worst.max(e);
                (e <= tol, format!("{x:.4} vs {v} (err {e:.4})"))
            }
            (NegInf, Threshold::NegInf) | (PosInf, Threshold::PosInf) => (true, format!("{g}")),
            (Any, _) => (true, format!("{g} (not compared)")),
            _ => (false, format!("{g} has the wrong form")),
        };
        ok &= fine;
        lines.push(format!("{} {n}: {note}", if fine { "ok  " } else { "MISS" }));
    }
    (ok, worst, lines)
}

fn row_names(r: Regime) -> [&'static str; 4] {
    match r {
        Regime::Plus => [NAMES[0], NAMES[1], NAMES[2], NAMES[3]],
        Regime::Minus => [NAMES[4], NAMES[5], NAMES[6], NAMES[7]],
    }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let eq = solve(&stylized(), Branch::Generic);
    let el = t0.elapsed();
    let want = [V(2.0), V(3.6), Any, PosInf, NegInf, Any, V(4.5), V(6.1), V(2.2), V(4.4)];
    let (ok, worst, mut details) = compare(&eq.strategies.entries(), &want, &NAMES, 0.05);
    details.push(format!("type {}, {} iterations, verified {}", eq.type_tag.label(), eq.iterations, eq.diagnostics.all_pass()));
    Outcome {
        pass: ok && el < Duration::from_secs(10),
        summary: format!("max error {worst:.4} (tol 0.05), runtime {:.2} s (limit 10 s)", el.as_secs_f64()),
        details,
    }
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let m = stylized();
    let mono = monopoly_two_sided(&m).unwrap();
    let alone = consumer_alone(&m).unwrap();
    let el = t0.elapsed();
    let mut details = vec![];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let rows = [
        (Regime::Plus, [V(1.9), V(3.5), V(3.5), V(5.6)]),
        (Regime::Minus, [V(2.4), V(4.5), V(4.5), V(6.1)]),
    ];
    for (r, want) in rows {
        let (o, w, l) = compare(&mono.strategy.row(r).entries(), &want, &row_names(r), 0.05);
        ok &= o;
        worst = worst.max(w);
        details.extend(l);
    }
    let c = alone.strategy;
    let (o, w, l) = compare(&[c.yl, c.yh], &[V(1.7), V(4.3)], &["yl", "yh"], 0.05);
    ok &= o;
    worst = worst.max(w);
    details.extend(l);
    Outcome {
        pass: ok && el < Duration::from_secs(5),
        summary: format!("max error {worst:.4} (tol 0.05), runtime {:.2} s (limit 5 s)", el.as_secs_f64()),
        details,
    }
}

fn criterion_3() -> Outcome {
    let m = stylized();
    let two = solve(&m, Branch::TransitoryMinus);
    let three = solve(&m, Branch::PreemptivePlus);
    let mut details = vec![format!("Type II via transitory-minus: tagged {}", two.type_tag.label())];
    let want2 = [V(1.9), V(3.6), Any, PosInf, V(2.4), V(4.5), V(4.5), V(6.1), NegInf, V(4.3)];
    let (ok2, w2, l2) = compare(&two.strategies.entries(), &want2, &NAMES, 0.05);
    details.extend(l2);
    details.push(format!("Type III via preemptive-plus: tagged {}", three.type_tag.label()));
    let want3 = [V(1.7), V(3.1), V(3.1), V(4.3), Any, Any, Any, Any, Any, V(4.3)];
    let (ok3, w3, l3) = compare(&three.strategies.entries(), &want3, &NAMES, 0.05);
    details.extend(l3);
    let tags = two.type_tag.label() == "II_to_minus" && three.type_tag.label() == "III_plus";
    Outcome {
        pass: ok2 && ok3 && tags,
        summary: format!("Type II max error {w2:.4}, Type III max error {w3:.4} (tol 0.05)"),
        details,
    }
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    // Reference rows: sigma, E[X], Var, E[pi_p], E[pi_c], switches per year.
    let table = [
        (0.25, 3.52, 0.73, 0.81, 2.4, 0.021),
        (0.3, 3.62, 0.80, 0.80, 2.2, 0.021),
        (0.4, 3.77, 0.94, 0.76, 1.90, 0.020),
    ];
    let mut ok = true;
    let mut details = vec![];
    let mut years_total = 0.0;
    for (sigma, mx, vx, pp, pc, sw) in table {
        let m = with_sigma(sigma);
        let eq = solve(&m, Branch::Generic);
        let cfg = StationaryConfig {
            paths: 16,
            horizon: 1.25e6,
            burn_in: 50.0 / m.params.beta,
            dt: 0.05,
            bins: 100,
            seed: 20_240_401,
            bridge: true,
        };
        let x0 = 0.5 * (eq.strategies.consumer.yl.as_f64() + eq.strategies.consumer.yh.as_f64());
        let st = long_run_stats(&m, &eq.strategies, x0, Regime::Plus, cfg).unwrap();
        years_total += st.years;
        let checks = [
            ("E[X]", st.mean, mx, 0.05),
            ("Var[X]", st.var, vx, 0.05),
            ("E[pi_p]", st.mean_pi_p, pp, 0.05),
            ("E[pi_c]", st.mean_pi_c, pc, 0.05),
            ("switches/yr", st.switches_per_year, sw, 0.005),
        ];
        let mut line = format!("Type I sigma={sigma} ({:.1e} yr):", st.years);
        for (name, got, want, tol) in checks {
            let fine = (got - want).abs() <= tol;
            ok &= fine;
            line += &format!(" {name} {got:.4} vs {want} [{}]", if fine { "ok" } else { "MISS" });
        }
        details.push(line);
        let o = renewal_type_one(&m, &eq.strategies);
        details.push(format!(
            "  renewal oracle: E[X] {:.4}, Var {:.4}, E[pi_p] {:.4}, E[pi_c] {:.4}, switches/yr {:.4}, impulses/yr {:.4} (simulated impulses/yr {:.4})",
            o.mean, o.var, o.mean_pi_p, o.mean_pi_c, o.switch_rate, o.impulse_rate, st.impulses_per_year
        ));
    }
    for sigma in [0.25, 0.3, 0.4] {
        let m = with_sigma(sigma);
        let eq = solve(&m, Branch::PreemptivePlus);
        let cfg = StationaryConfig {
            paths: 4,
            horizon: 25_000.0,
            burn_in: 50.0 / m.params.beta,
            dt: 0.05,
            bins: 50,
            seed: 7,
            bridge: true,
        };
        let (lo, hi) = Controls::new(&m, &eq.strategies).band(Regime::Plus);
        let st = long_run_stats(&m, &eq.strategies, 0.5 * (lo + hi), Regime::Plus, cfg).unwrap();
        let fine = st.switches_per_year == 0.0;
        ok &= fine;
        details.push(format!(
            "Type III sigma={sigma}: switches/yr {} [{}], E[X] {:.4}, Var {:.4}",
            st.switches_per_year,
            if fine { "ok" } else { "MISS" },
            st.mean,
            st.var
        ));
    }
    let el = t0.elapsed();
    Outcome {
        pass: ok && el < Duration::from_secs(300),
        summary: format!(
            "{:.1e} simulated years for the Type I rows, runtime {:.0} s (limit 300 s)",
            years_total,
            el.as_secs_f64()
        ),
        details,
    }
}

fn criterion_5() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/crude_oil.toml");
    let params = commodity_game::config::load_config(&path).unwrap();
    let m = Model::new(params.clone()).unwrap();
    let mut details = vec![];
    let kappa = 2.0 * m.producer.peak;
    // The habitat is printed to whole dollars.
    let ids = (kappa - 24.5).abs() < 1e-12 && m.consumer.x1.round() == 11.0 && m.consumer.x2.round() == 82.0;
    details.push(format!(
        "2 pi_p(Xbar_p) = {kappa}, configured kappa0 = {}; consumer habitat ({:.4}, {:.4})",
        params.kappa0, m.consumer.x1, m.consumer.x2
    ));
    let want = [V(26.0), V(62.0), Any, PosInf, NegInf, Any, V(69.0), V(104.0), V(22.5), V(87.0)];
    let (ok, worst, lines) = match commodity_game::equilibrium::solve_equilibrium(&m, Branch::Generic, Default::default()) {
        Ok(eq) => {
            details.push(format!("generic solve: {} ({}), {}", eq.type_tag.label(), eq.converged, eq.strategies));
            compare(&eq.strategies.entries(), &want, &NAMES, 1.0)
        }
        Err(e) => (false, f64::INFINITY, vec![format!("solve failed: {e}")]),
    };
    details.extend(lines);
    Outcome {
        pass: ids && ok && params.kappa0 == kappa,
        summary: format!("identities {}, threshold max error {worst:.2} (tol 1)", if ids { "exact" } else { "wrong" }),
        details,
    }
}

struct Solved {
    one: EquilibriumResult,
    two: EquilibriumResult,
    three: EquilibriumResult,
}

fn solved() -> Solved {
    let m = stylized();
    Solved {
        one: solve(&m, Branch::Generic),
        two: solve(&m, Branch::TransitoryMinus),
        three: solve(&m, Branch::PreemptivePlus),
    }
}

fn all_value_checks(m: &Model, s: &Solved) -> Diagnostics {
    let mut d = Diagnostics::default();
    for (tag, eq) in [("I", &s.one), ("II", &s.two), ("III", &s.three)] {
        value_checks(&mut d, m, &format!("{tag} producer"), &eq.producer.values, Player::Producer);
        value_checks(&mut d, m, &format!("{tag} consumer"), &eq.consumer.values, Player::Consumer);
    }
    let mono = monopoly_two_sided(m).unwrap();
    value_checks(&mut d, m, "monopoly", &mono.values, Player::Producer);
    let alone = consumer_alone(m).unwrap();
    value_checks(&mut d, m, "consumer alone", &alone.values, Player::Consumer);
    let idle = no_switch(m, &s.one.strategies.producer).unwrap();
    value_checks(&mut d, m, "no switch", &idle.values, Player::Consumer);
    d
}

fn criterion_6a(m: &Model, d: &Diagnostics) -> Outcome {
    let _ = m;
    let ode: Vec<_> = d.checks.iter().filter(|c| c.name.starts_with("ode")).collect();
    let worst = ode.iter().map(|c| c.margin).fold(0.0, f64::max);
    Outcome {
        pass: worst < 1e-8,
        summary: format!("{} pieces, max ODE residual {worst:.2e} (limit 1e-8)", ode.len()),
        details: vec![],
    }
}

fn criterion_6b(d: &Diagnostics) -> Outcome {
    let knots: Vec<_> = d
        .checks
        .iter()
        .filter(|c| ["C0", "C1", "FOC"].iter().any(|p| c.name.starts_with(p)))
        .collect();
    let worst = knots.iter().map(|c| c.margin).fold(0.0, f64::max);
    let details = knots.iter().filter(|c| c.margin >= 1e-7).map(|c| format!("MISS {}: {:.2e}", c.name, c.margin)).collect();
    Outcome {
        pass: worst < 1e-7,
        summary: format!("{} knot conditions, max residual {worst:.2e} (limit 1e-7)", knots.len()),
        details,
    }
}

/// Five interior points of the continuation band of `r`.
fn interior_points(m: &Model, s: &StrategyPair, r: Regime) -> Vec<f64> {
    let (mut lo, mut hi) = Controls::new(m, s).band(r);
    if !lo.is_finite() {
        lo = hi - 3.0;
    }
    if !hi.is_finite() {
        hi = lo + 3.0;
    }
    (1..=5).map(|i| lo + (hi - lo) * i as f64 / 6.0).collect()
}

fn criterion_6c(m: &Model, s: &Solved) -> Outcome {
    let never = ConsumerStrategy::never();
    let mono = monopoly_two_sided(m).unwrap();
    let idle = no_switch(m, &s.one.strategies.producer).unwrap();
    let with_consumer = |p: &StrategyPair, c: ConsumerStrategy| StrategyPair { producer: p.producer, consumer: c };
    let cases: Vec<(&str, Player, &ValuePair, StrategyPair, Vec<Regime>)> = vec![
        ("consumer no_switch", Player::Consumer, &idle.values, with_consumer(&s.one.strategies, never), Regime::BOTH.to_vec()),
        ("consumer single_switch", Player::Consumer, &s.two.consumer.values, s.two.strategies, Regime::BOTH.to_vec()),
        ("consumer double_switch", Player::Consumer, &s.one.consumer.values, s.one.strategies, Regime::BOTH.to_vec()),
        (
            "producer monopoly",
            Player::Producer,
            &mono.values,
            StrategyPair { producer: mono.strategy, consumer: never },
            Regime::BOTH.to_vec(),
        ),
        ("producer non_preemptive", Player::Producer, &s.one.producer.values, s.one.strategies, Regime::BOTH.to_vec()),
        ("producer preemptive", Player::Producer, &s.three.producer.values, s.three.strategies, Regime::BOTH.to_vec()),
    ];
    let cfg = SimConfig {
        horizon: 15.0 / m.params.beta,
        dt: 0.01,
        seed: 99,
        bridge: true,
    };
    let mut ok = true;
    let mut details = vec![];
    let mut n = 0;
    let mut worst: f64 = 0.0;
    for (label, who, values, pair, regimes) in cases {
        let mut misses = 0;
        let mut case_worst: f64 = 0.0;
        for r in regimes {
            for x in interior_points(m, &pair, r) {
                let est = discounted_payoff(m, &pair, x, r, 1000, cfg);
                let (mc, se) = match who {
                    Player::Producer => (est.producer, est.producer_se),
                    Player::Consumer => (est.consumer, est.consumer_se),
                };
                let z = (values.eval(r, x) - mc).abs() / se;
                case_worst = case_worst.max(z);
                n += 1;
                if z > 3.0 {
                    misses += 1;
                    details.push(format!("MISS {label} {} x={x:.3}: analytic {:.4}, MC {mc:.4} (se {se:.4})", r.label(), values.eval(r, x)));
                }
            }
        }
        ok &= misses == 0;
        worst = worst.max(case_worst);
        details.push(format!("{label}: worst |z| {case_worst:.2}"));
    }
    Outcome {
        pass: ok,
        summary: format!("{n} points, worst |analytic - MC| = {worst:.2} SE (limit 3)"),
        details,
    }
}

fn criterion_6d() -> Outcome {
    let bands = [(2.0, 4.4), (1.0, 5.0), (-1.0, 1.0), (0.0, 3.0), (2.2, 6.1)];
    let combos = [(0.1, 0.25, 0.4167), (0.0, 0.25, 0.5), (-0.2, 0.4, 0.3), (0.4, 0.6, 0.75)];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut details = vec![];
    let mut seed = 1;
    for (a, b) in bands {
        for (mu, sigma, frac) in combos {
            let x = a + (b - a) * frac;
            let est = mc_exit(x, a, b, mu, sigma, 4000, seed);
            seed += 1;
            let p = hitting_prob(x, a, b, mu, sigma);
            let t = expected_exit_time(x, a, b, mu, sigma);
            let zp = (p - est.p_lower).abs() / est.p_se;
            let zt = (t - est.time).abs() / est.time_se;
            worst = worst.max(zp).max(zt);
            let fine = zp <= 3.0 && zt <= 3.0;
            ok &= fine;
            if !fine {
                details.push(format!(
                    "MISS x={x:.3} ({a}, {b}) mu={mu} sigma={sigma}: P {p:.4} vs {:.4}, T {t:.4} vs {:.4}",
                    est.p_lower, est.time
                ));
            }
        }
    }
    let spec = hitting_prob(3.0, 2.0, 4.4, 0.1, 0.25);
    details.push(format!("hitting_prob(3; 2, 4.4, mu=0.1, sigma=0.25) = {spec:.4}"));
    Outcome {
        pass: ok,
        summary: format!("20 cases, worst |closed form - MC| = {worst:.2} SE (limit 3)"),
        details,
    }
}

fn criterion_6e(m: &Model, s: &Solved) -> Outcome {
    let eq = &s.one;
    let chain = build_jump_chain(m, &eq.strategies, Regime::Plus).unwrap();
    let resid = chain.invariance_residual();
    let (rho, _) = regime_occupation(&chain);
    let cfg = SimConfig {
        horizon: 3.0e6,
        dt: 0.05,
        seed: 4242,
        bridge: true,
    };
    let x0 = 0.5 * (eq.strategies.consumer.yl.as_f64() + eq.strategies.consumer.yh.as_f64());
    let rec = simulate_path(m, &eq.strategies, x0, Regime::Plus, cfg, 20);
    let mut regime = Regime::Plus;
    let mut seq = Vec::with_capacity(rec.events.len());
    for e in &rec.events {
        seq.push(ChainState::of_event(e.kind, regime).index());
        if e.kind.is_switch() {
            regime = regime.other();
        }
    }
    let batches = 100;
    let per = seq.len() / batches;
    let mut ok = resid <= 1e-10;
    let mut details = vec![format!("{} events, Pi P - Pi residual {resid:.2e}", seq.len())];
    for (i, st) in ChainState::ALL.iter().enumerate() {
        let freqs: Vec<f64> = (0..batches)
            .map(|b| seq[b * per..(b + 1) * per].iter().filter(|&&j| j == i).count() as f64 / per as f64)
            .collect();
        let f = freqs.iter().sum::<f64>() / batches as f64;
        let sd = (freqs.iter().map(|v| (v - f) * (v - f)).sum::<f64>() / (batches - 1) as f64).sqrt();
        let se = sd / (batches as f64).sqrt();
        let fine = (f - chain.pi[i]).abs() <= 3.0 * se || (se == 0.0 && f == chain.pi[i]);
        ok &= fine;
        details.push(format!(
            "{} {}: empirical {f:.4} (se {se:.4}) vs Pi {:.4}",
            if fine { "ok  " } else { "MISS" },
            st.label(),
            chain.pi[i]
        ));
    }
    let emp = rec.regimes.iter().filter(|r| **r == Regime::Plus).count() as f64 / rec.regimes.len() as f64;
    let rel = (emp - rho).abs() / rho;
    ok &= rel <= 0.01;
    details.push(format!("rho_plus {rho:.4} vs empirical {emp:.4} (relative {rel:.4}, limit 0.01)"));
    Outcome {
        pass: ok,
        summary: format!("invariance {resid:.1e}, rho_plus off by {:.2}%", 100.0 * rel),
        details,
    }
}

fn pv(e: &EquilibriumResult) -> &ValuePair {
    &e.producer.values
}

fn cw(e: &EquilibriumResult) -> &ValuePair {
    &e.consumer.values
}

fn criterion_6f(m: &Model, s: &Solved) -> Outcome {
    let window = common_window(&[&s.one, &s.two, &s.three]);
    // The consumer's plus value is on-path only inside the Type III plus band;
    // beyond it both values reduce to the minus value less the switching cost.
    let band = Controls::new(m, &s.three.strategies).band(Regime::Plus);
    let both = [Regime::Plus, Regime::Minus];
    let plus = [Regime::Plus];
    let checks = [
        ("producer v_I over v_II", window, dominance_margin(pv(&s.one), pv(&s.two), &both, window, 401), None),
        ("producer v_I over v_III", window, dominance_margin(pv(&s.one), pv(&s.three), &plus, window, 401), None),
        (
            "consumer w_III over w_I",
            band,
            dominance_margin(cw(&s.three), cw(&s.one), &plus, band, 401),
            Some(dominance_margin(cw(&s.three), cw(&s.one), &plus, window, 401)),
        ),
        (
            "consumer w_III over w_II",
            band,
            dominance_margin(cw(&s.three), cw(&s.two), &plus, band, 401),
            Some(dominance_margin(cw(&s.three), cw(&s.two), &plus, window, 401)),
        ),
    ];
    let mut ok = true;
    let mut details = vec![];
    for (name, (lo, hi), margin, wide) in checks {
        // Weak dominance: the values meet where both players act at once.
        let fine = margin >= -1e-9;
        ok &= fine;
        let mut line = format!("{} {name}: min difference {margin:.3e} (limit -1e-9) on 401 points of [{lo:.4}, {hi:.4}]", if fine { "ok  " } else { "MISS" });
        if let Some(w) = wide {
            line += &format!(" (over [{:.4}, {:.4}]: {w:.4})", window.0, window.1);
        }
        details.push(line);
    }
    Outcome {
        pass: ok,
        summary: "producer prefers Type I, consumer prefers Type III".into(),
        details,
    }
}

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/stylized.toml")
}

fn run_all(out: &Path, threads: usize) -> Vec<i32> {
    let cfg = config_path();
    let cfg = cfg.to_str().unwrap();
    let out = out.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["solve", "--dump-history", "--dump-value"],
        vec!["stationary", "--seed", "11", "--paths", "6", "--horizon", "300", "--dt", "0.01"],
        vec!["simulate", "--seed", "11", "--horizon", "60", "--paths", "24"],
        vec!["chain"],
        vec!["sweep", "--param", "sigma", "--grid", "0.25,0.3", "--stats", "--paths", "4", "--horizon", "100", "--dt", "0.01"],
    ];
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        commands
            .iter()
            .map(|c| {
                let mut args = vec!["commodity-game"];
                args.extend(c);
                args.extend(["--config", cfg, "--out", out]);
                cli::main_with(args)
            })
            .collect()
    })
}

fn criterion_7() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = run_all(a.path(), 1);
    let cb = run_all(b.path(), 4);
    let mut ok = ca.iter().all(|c| *c == 0) && ca == cb;
    let mut details = vec![format!("exit codes {ca:?} (1 worker) and {cb:?} (4 workers)")];
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for n in &names {
        let x = std::fs::read(a.path().join(n)).unwrap();
        let same = std::fs::read(b.path().join(n)).map(|y| y == x).unwrap_or(false);
        ok &= same;
        details.push(format!("{} {n} ({} bytes)", if same { "same" } else { "DIFF" }, x.len()));
    }
    Outcome {
        pass: ok && names.iter().filter(|n| n.ends_with(".csv")).count() >= 8,
        summary: format!("{} artifacts compared across worker counts", names.len()),
        details,
    }
}

fn run(id: &str, title: &str, f: impl FnOnce() -> Outcome, failures: &mut Vec<String>) {
    let t0 = Instant::now();
    let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| Outcome {
        pass: false,
        summary: format!(
            "panicked: {}",
            e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
        ),
        details: vec![],
    });
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {id:<3} {tag}  {title}: {} [{:.1} s]", o.summary, t0.elapsed().as_secs_f64());
    for d in &o.details {
        println!("        {d}");
    }
    if !o.pass {
        failures.push(id.to_string());
    }
}

fn main() {
    let mut failures = vec![];
    run("1", "Type I equilibrium", criterion_1, &mut failures);
    run("2", "monopoly benchmarks", criterion_2, &mut failures);
    run("3", "Type II and Type III", criterion_3, &mut failures);
    run("4", "long-run statistics table", criterion_4, &mut failures);
    run("5", "crude oil case study", criterion_5, &mut failures);
    let m = stylized();
    let s = solved();
    let d = all_value_checks(&m, &s);
    run("6a", "ODE residuals", || criterion_6a(&m, &d), &mut failures);
    run("6b", "pasting residuals", || criterion_6b(&d), &mut failures);
    run("6c", "payoff vs Monte Carlo", || criterion_6c(&m, &s), &mut failures);
    run("6d", "hitting quantities vs Monte Carlo", criterion_6d, &mut failures);
    run("6e", "jump chain vs simulation", || criterion_6e(&m, &s), &mut failures);
    run("6f", "cross-equilibrium dominance", || criterion_6f(&m, &s), &mut failures);
    run("7", "determinism", criterion_7, &mut failures);
    if failures.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {}", failures.join(", "));
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
