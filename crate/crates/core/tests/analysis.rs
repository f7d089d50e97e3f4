mod common;

use commodity_game::analysis::{integration_study, run_sweep, IntegrationSpec, SweepParam, SweepSpec};
use commodity_game::dynamics::StationaryConfig;
use commodity_game::equilibrium::{Branch, TatonnementOptions};
use commodity_game::{ModelParams, Threshold};

fn stats(seed: u64) -> StationaryConfig {
    StationaryConfig {
        paths: 4,
        horizon: 50_000.0,
        burn_in: 500.0,
        dt: 0.05,
        bins: 40,
        seed,
        bridge: true,
    }
}

#[test]
fn volatility_sweep_trends() {
    let mut spec = SweepSpec::new(SweepParam::Sigma, vec![0.25, 0.3, 0.4], Branch::Generic).unwrap();
    spec.stats = Some(stats(21));
    let rows = run_sweep(&ModelParams::stylized(), &spec);
    let points: Vec<_> = rows.iter().map(|r| r.outcome.as_ref().unwrap()).collect();
    for p in &points {
        assert_eq!(p.type_tag, "I");
        assert!(p.converged && p.verified);
    }
    let s: Vec<_> = points.iter().map(|p| p.stats.as_ref().unwrap()).collect();
    assert!(s[0].mean < s[1].mean && s[1].mean < s[2].mean);
    assert!(s[0].mean_pi_c > s[1].mean_pi_c && s[1].mean_pi_c > s[2].mean_pi_c);
}

#[test]
fn double_switch_vanishes_for_costly_switching() {
    let spec = SweepSpec::new(SweepParam::H0, vec![5.0, 10.0, 20.0, 40.0], Branch::Generic).unwrap();
    let rows = run_sweep(&ModelParams::stylized(), &spec);
    let kinds: Vec<_> = rows.iter().map(|r| r.outcome.as_ref().unwrap().consumer_kind.clone()).collect();
    assert_eq!(kinds[0], "double_switch");
    assert_ne!(kinds[3], "double_switch", "{kinds:?}");
    let last = &rows[3].outcome.as_ref().unwrap().strategies.consumer;
    assert!(matches!(last.yl, Threshold::NegInf) || matches!(last.yh, Threshold::PosInf));
}

#[test]
fn integration_shifts_toward_production_as_margin_rises() {
    let spec = IntegrationSpec {
        p1_grid: vec![1.1, 1.14, 1.18],
        lambdas: vec![0.0, 0.5, 1.0],
        branch: Branch::Generic,
        tatonnement: TatonnementOptions::default(),
        stats: Some(stats(22)),
    };
    let base = commodity_game::config::load_config(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/crude_oil.toml"),
    )
    .unwrap();
    let points = integration_study(&base, &spec).unwrap();
    let stars: Vec<f64> = points.iter().map(|p| p.outcome.as_ref().unwrap().lambda_star).collect();
    assert!(stars[0] > stars[1] && stars[1] > stars[2], "{stars:?}");
    for p in &points {
        let c = p.outcome.as_ref().unwrap();
        let m = &c.moments;
        assert_eq!(c.means[0], m.mean_p);
        assert_eq!(c.means[2], m.mean_c);
        assert!((c.means[1] - 0.5 * (m.mean_p + m.mean_c)).abs() < 1e-12);
    }
}

#[test]
fn pass_through_resolves_each_point() {
    let base = commodity_game::config::load_config(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/crude_oil.toml"),
    )
    .unwrap();
    let a = SweepParam::P1.apply(&base, 1.1).unwrap();
    let b = SweepParam::P1.apply(&base, 1.18).unwrap();
    assert_ne!(a, b);
    let spec = SweepSpec::new(SweepParam::P1, vec![1.1, 1.18], Branch::Generic).unwrap();
    let rows = run_sweep(&base, &spec);
    assert!(rows.iter().all(|r| r.outcome.is_ok()));
}
