//! Parameter sweeps and the vertical-integration risk/return study.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{default_start, long_run_stats, simulate_path, LongRunStats, SimConfig, StationaryConfig};
use crate::equilibrium::{solve_equilibrium, Branch, EquilibriumResult, TatonnementOptions};
use crate::error::{Error, Result};
use crate::io::{stats_record, STATS_HEADER};
use crate::model::{ConsumerSpec, Model, ModelParams};
use crate::strategy::StrategyPair;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Sigma,
    H0,
    P1,
    Kappa0,
    MuPlus,
    MuMinus,
}

impl SweepParam {
    pub const ALL: [SweepParam; 6] = [
        SweepParam::Sigma,
        SweepParam::H0,
        SweepParam::P1,
        SweepParam::Kappa0,
        SweepParam::MuPlus,
        SweepParam::MuMinus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::H0 => "h0",
            SweepParam::P1 => "p1",
            SweepParam::Kappa0 => "kappa0",
            SweepParam::MuPlus => "mu_plus",
            SweepParam::MuMinus => "mu_minus",
        }
    }

    /// Copy of `base` with the parameter set to `v`, validated.
    pub fn apply(self, base: &ModelParams, v: f64) -> Result<ModelParams> {
        let mut p = base.clone();
        match self {
            SweepParam::Sigma => p.sigma = v,
            SweepParam::H0 => p.set_h0(v),
            SweepParam::Kappa0 => p.kappa0 = v,
            SweepParam::MuPlus => p.mu_plus = v,
            SweepParam::MuMinus => p.mu_minus = v,
            SweepParam::P1 => match &mut p.consumer {
                ConsumerSpec::Structural { p1, .. } => *p1 = v,
                ConsumerSpec::Direct { .. } => {
                    return Err(Error::InvalidParams(
                        "p1 sweeps need a structural consumer profit".into(),
                    ))
                }
            },
        }
        p.validate()?;
        Ok(p)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepParam::ALL.iter().map(|p| p.label()).collect();
                Error::Config(format!("unknown sweep parameter '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub branch: Branch,
    pub tatonnement: TatonnementOptions,
    /// Long-run statistics per point; `None` skips the simulation.
    pub stats: Option<StationaryConfig>,
}

impl SweepSpec {
    pub fn new(param: SweepParam, grid: Vec<f64>, branch: Branch) -> Result<Self> {
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep grid values must be finite".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("sweep grid must be strictly increasing".into()));
        }
        Ok(SweepSpec {
            param,
            grid,
            branch,
            tatonnement: TatonnementOptions::default(),
            stats: None,
        })
    }
}

/// Parses `a,b,c` or `start:stop:count` (inclusive, evenly spaced).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = |m: String| Error::Config(format!("grid '{s}': {m}"));
    let s = s.trim();
    if s.is_empty() {
        return Ok(vec![]);
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| bad(format!("'{t}': {e}")));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("range form is start:stop:count".into()));
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2].trim().parse().map_err(|e| bad(format!("count: {e}")))?;
        return Ok(match n {
            0 => vec![],
            1 => vec![a],
            _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        });
    }
    s.split(',').map(num).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub strategies: StrategyPair,
    pub type_tag: String,
    pub converged: bool,
    pub verified: bool,
    pub iterations: usize,
    pub consumer_kind: String,
    pub producer_kind: String,
    pub stats: Option<LongRunStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: std::result::Result<SweepPoint, String>,
}

fn solve_point(base: &ModelParams, spec: &SweepSpec, v: f64) -> Result<SweepPoint> {
    let params = spec.param.apply(base, v)?;
    let model = Model::new(params)?;
    let eq = solve_equilibrium(&model, spec.branch, spec.tatonnement)?;
    let stats = match (spec.stats, eq.converged) {
        (Some(cfg), true) => {
            let (x0, r0) = default_start(&model, &eq.strategies)?;
            Some(long_run_stats(&model, &eq.strategies, x0, r0, cfg)?)
        }
        _ => None,
    };
    Ok(SweepPoint {
        strategies: eq.strategies,
        type_tag: eq.type_tag.label().into(),
        converged: eq.converged,
        verified: eq.diagnostics.all_pass(),
        iterations: eq.iterations,
        consumer_kind: eq.consumer.kind.label().into(),
        producer_kind: eq.producer.kind.label().into(),
        stats,
    })
}

/// Solves every grid point in parallel; rows come back in grid order.
pub fn run_sweep(base: &ModelParams, spec: &SweepSpec) -> Vec<SweepRow> {
    spec.grid
        .par_iter()
        .map(|&v| SweepRow {
            value: v,
            outcome: solve_point(base, spec, v).map_err(|e| e.to_string()),
        })
        .collect()
}

pub fn sweep_header(param: SweepParam) -> Vec<String> {
    let mut h = vec![
        param.label().to_string(),
        "status".into(),
        "failure".into(),
        "type".into(),
        "iterations".into(),
        "verified".into(),
        "consumer_kind".into(),
        "producer_kind".into(),
    ];
    h.extend(StrategyPair::ENTRY_NAMES.iter().map(|n| format!("{n} (USD)")));
    h.extend(STATS_HEADER.iter().skip(1).map(|s| s.to_string()));
    h
}

pub fn write_sweep(path: &Path, param: SweepParam, rows: &[SweepRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(sweep_header(param))?;
    let blank_stats = STATS_HEADER.len() - 1;
    for row in rows {
        let mut rec = vec![row.value.to_string()];
        match &row.outcome {
            Ok(p) => {
                let status = if p.converged { "ok" } else { "not_converged" };
                rec.extend([
                    status.to_string(),
                    String::new(),
                    p.type_tag.clone(),
                    p.iterations.to_string(),
                    p.verified.to_string(),
                    p.consumer_kind.clone(),
                    p.producer_kind.clone(),
                ]);
                rec.extend(p.strategies.entries().iter().map(|t| t.to_token()));
                match &p.stats {
                    Some(s) => rec.extend(stats_record("", s).into_iter().skip(1)),
                    None => rec.extend(std::iter::repeat_n(String::new(), blank_stats)),
                }
            }
            Err(msg) => {
                rec.extend(["failed".to_string(), msg.clone()]);
                rec.extend(std::iter::repeat_n(String::new(), 5 + StrategyPair::ENTRY_NAMES.len() + blank_stats));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// First and second moments of the two profit rates under the long-run law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfitMoments {
    pub mean_p: f64,
    pub mean_c: f64,
    pub var_p: f64,
    pub var_c: f64,
    pub cov: f64,
}

impl ProfitMoments {
    pub fn of_stats(s: &LongRunStats) -> Self {
        ProfitMoments {
            mean_p: s.mean_pi_p,
            mean_c: s.mean_pi_c,
            var_p: s.var_pi_p,
            var_c: s.var_pi_c,
            cov: s.cov_pi,
        }
    }

    /// Population moments of paired samples `(pi_p, pi_c)`.
    pub fn of_samples(samples: &[(f64, f64)]) -> Self {
        let n = samples.len() as f64;
        let mean_p = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let mean_c = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let (mut vp, mut vc, mut cv) = (0.0, 0.0, 0.0);
        for &(p, c) in samples {
            vp += (p - mean_p) * (p - mean_p);
            vc += (c - mean_c) * (c - mean_c);
            cv += (p - mean_p) * (c - mean_c);
        }
        ProfitMoments {
            mean_p,
            mean_c,
            var_p: vp / n,
            var_c: vc / n,
            cov: cv / n,
        }
    }

    /// `E[pi_lambda]` with `pi_lambda = lambda pi_c + (1 - lambda) pi_p`.
    pub fn mean(&self, lambda: f64) -> f64 {
        lambda * self.mean_c + (1.0 - lambda) * self.mean_p
    }

    pub fn variance(&self, lambda: f64) -> f64 {
        let m = 1.0 - lambda;
        (m * m * self.var_p + lambda * lambda * self.var_c + 2.0 * lambda * m * self.cov).max(0.0)
    }

    /// Minimizer of the variance over `[0, 1]`.
    pub fn lambda_star(&self) -> f64 {
        let den = self.var_p + self.var_c - 2.0 * self.cov;
        if den <= 0.0 {
            // Flat or concave in lambda: an endpoint wins.
            return if self.var_c < self.var_p { 1.0 } else { 0.0 };
        }
        ((self.var_p - self.cov) / den).clamp(0.0, 1.0)
    }
}

/// Variance of `pi_lambda` computed directly from the samples.
pub fn direct_variance(samples: &[(f64, f64)], lambda: f64) -> f64 {
    let n = samples.len() as f64;
    let mix: Vec<f64> = samples.iter().map(|&(p, c)| lambda * c + (1.0 - lambda) * p).collect();
    let m = mix.iter().sum::<f64>() / n;
    mix.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Profit-rate pairs along one simulated path after `burn_in` years.
pub fn profit_samples(model: &Model, s: &StrategyPair, cfg: SimConfig, burn_in: f64, stride: usize) -> Result<Vec<(f64, f64)>> {
    let (x0, r0) = default_start(model, s)?;
    let rec = simulate_path(model, s, x0, r0, cfg, stride);
    Ok(rec
        .times
        .iter()
        .zip(&rec.prices)
        .filter(|(t, _)| **t >= burn_in)
        .map(|(_, &x)| (model.producer.eval(x), model.consumer.eval(x)))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationCurve {
    pub p1: f64,
    pub type_tag: String,
    pub strategies: StrategyPair,
    pub moments: ProfitMoments,
    pub lambdas: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub lambda_star: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationPoint {
    pub p1: f64,
    pub outcome: std::result::Result<IntegrationCurve, String>,
}

pub struct IntegrationSpec {
    pub p1_grid: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub branch: Branch,
    pub tatonnement: TatonnementOptions,
    pub stats: Option<StationaryConfig>,
}

fn integration_point(base: &ModelParams, spec: &IntegrationSpec, p1: f64) -> Result<IntegrationCurve> {
    let model = Model::new(SweepParam::P1.apply(base, p1)?)?;
    let eq: EquilibriumResult = solve_equilibrium(&model, spec.branch, spec.tatonnement)?;
    if !eq.converged {
        return Err(Error::NoSolution {
            what: "equilibrium",
            detail: format!("tatonnement did not converge at p1={p1}"),
        });
    }
    let cfg = spec.stats.unwrap_or_else(|| StationaryConfig::for_model(&model));
    let (x0, r0) = default_start(&model, &eq.strategies)?;
    let stats = long_run_stats(&model, &eq.strategies, x0, r0, cfg)?;
    let moments = ProfitMoments::of_stats(&stats);
    Ok(IntegrationCurve {
        p1,
        type_tag: eq.type_tag.label().into(),
        strategies: eq.strategies,
        moments,
        means: spec.lambdas.iter().map(|&l| moments.mean(l)).collect(),
        stds: spec.lambdas.iter().map(|&l| moments.variance(l).sqrt()).collect(),
        lambdas: spec.lambdas.clone(),
        lambda_star: moments.lambda_star(),
    })
}

/// Re-solves the equilibrium at every `p1` and builds the risk/return curve.
pub fn integration_study(base: &ModelParams, spec: &IntegrationSpec) -> Result<Vec<IntegrationPoint>> {
    if spec.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::Config("lambda grid must lie in [0, 1]".into()));
    }
    if spec.p1_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("p1 grid must be strictly increasing".into()));
    }
    Ok(spec
        .p1_grid
        .par_iter()
        .map(|&p1| IntegrationPoint {
            p1,
            outcome: integration_point(base, spec, p1).map_err(|e| e.to_string()),
        })
        .collect())
}

/// Curve rows: lambda weights `pi_c`, so 0 is the `pi_p` end and 1 the `pi_c` end.
pub fn write_integration_curves(path: &Path, points: &[IntegrationPoint]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record([
        "p1",
        "lambda (0=pi_p_end 1=pi_c_end)",
        "E[pi_lambda] (USD/yr)",
        "sigma(pi_lambda) (USD/yr)",
    ])?;
    for pt in points {
        if let Ok(c) = &pt.outcome {
            for i in 0..c.lambdas.len() {
                w.write_record([c.p1.to_string(), c.lambdas[i].to_string(), c.means[i].to_string(), c.stds[i].to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lambda_star(path: &Path, points: &[IntegrationPoint]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record([
        "p1",
        "status",
        "failure",
        "type",
        "E[pi_p_end] (USD/yr)",
        "sigma(pi_p_end) (USD/yr)",
        "E[pi_c_end] (USD/yr)",
        "sigma(pi_c_end) (USD/yr)",
        "Cov[pi_p,pi_c] (USD^2/yr^2)",
        "lambda_star",
        "E[pi_lambda_star] (USD/yr)",
        "sigma(pi_lambda_star) (USD/yr)",
    ])?;
    for pt in points {
        let rec: Vec<String> = match &pt.outcome {
            Ok(c) => {
                let m = &c.moments;
                let l = c.lambda_star;
                vec![
                    pt.p1.to_string(),
                    "ok".into(),
                    String::new(),
                    c.type_tag.clone(),
                    m.mean_p.to_string(),
                    m.var_p.sqrt().to_string(),
                    m.mean_c.to_string(),
                    m.var_c.sqrt().to_string(),
                    m.cov.to_string(),
                    l.to_string(),
                    m.mean(l).to_string(),
                    m.variance(l).sqrt().to_string(),
                ]
            }
            Err(msg) => {
                let mut r = vec![pt.p1.to_string(), "failed".into(), msg.clone()];
                r.extend(std::iter::repeat_n(String::new(), 9));
                r
            }
        };
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments() -> ProfitMoments {
        ProfitMoments {
            mean_p: 0.8,
            mean_c: 2.4,
            var_p: 0.09,
            var_c: 0.5,
            cov: -0.12,
        }
    }

    #[test]
    fn lambda_star_matches_grid_minimum() {
        for m in [
            moments(),
            ProfitMoments { cov: 0.2, ..moments() },
            ProfitMoments { var_p: 0.6, cov: 0.05, ..moments() },
        ] {
            let ls = m.lambda_star();
            let (best, _) = (0..=100_000)
                .map(|i| i as f64 / 100_000.0)
                .map(|l| (l, m.variance(l)))
                .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            assert!((ls - best).abs() < 2e-5, "{ls} vs {best}");
            assert!(m.variance(ls) <= m.variance(best) + 1e-15);
        }
    }

    #[test]
    fn endpoints_are_pure_moments() {
        let m = moments();
        assert_eq!(m.mean(0.0), m.mean_p);
        assert_eq!(m.mean(1.0), m.mean_c);
        assert_eq!(m.variance(0.0), m.var_p);
        assert_eq!(m.variance(1.0), m.var_c);
    }

    #[test]
    fn mixture_variance_two_ways() {
        let samples: Vec<(f64, f64)> = (0..500)
            .map(|i| {
                let t = i as f64 * 0.37;
                (t.sin() + 0.2 * t.cos(), 2.0 - 0.7 * t.sin() + 0.1 * (3.0 * t).cos())
            })
            .collect();
        let m = ProfitMoments::of_samples(&samples);
        for l in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let (a, b) = (m.variance(l), direct_variance(&samples, l));
            assert!((a - b).abs() <= 1e-10 * b.abs(), "{l}: {a} vs {b}");
        }
    }

    #[test]
    fn grids_parse_and_validate() {
        assert_eq!(parse_grid("0.25,0.3,0.4").unwrap(), vec![0.25, 0.3, 0.4]);
        assert_eq!(parse_grid("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(parse_grid("").unwrap().is_empty());
        assert!(SweepSpec::new(SweepParam::Sigma, vec![0.3, 0.25], Branch::Generic).is_err());
        assert!(SweepSpec::new(SweepParam::Sigma, vec![0.3, 0.3], Branch::Generic).is_err());
        assert_eq!("mu_plus".parse::<SweepParam>().unwrap(), SweepParam::MuPlus);
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn p1_needs_structural_consumer() {
        assert!(SweepParam::P1.apply(&ModelParams::stylized(), 1.1).is_err());
        let p = SweepParam::P1.apply(&ModelParams::crude_oil(), 1.15).unwrap();
        assert!(matches!(p.consumer, ConsumerSpec::Structural { p1, .. } if p1 == 1.15));
        assert!(SweepParam::Sigma.apply(&ModelParams::stylized(), -1.0).is_err());
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let spec = SweepSpec::new(SweepParam::Sigma, vec![], Branch::Generic).unwrap();
        let rows = run_sweep(&ModelParams::stylized(), &spec);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_sweep(&p, spec.param, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("sigma,status,failure,type"));
    }

    #[test]
    fn failed_points_are_kept() {
        let spec = SweepSpec::new(SweepParam::Sigma, vec![-0.1, 0.25], Branch::Generic).unwrap();
        let rows = run_sweep(&ModelParams::stylized(), &spec);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].outcome.as_ref().unwrap_err().contains("sigma"));
        assert_eq!(rows[1].outcome.as_ref().unwrap().type_tag, "I");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_sweep(&p, spec.param, &rows).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        let width = r.headers().unwrap().len();
        let recs: Vec<_> = r.records().map(|x| x.unwrap()).collect();
        assert!(recs.iter().all(|x| x.len() == width));
        assert_eq!(&recs[0][1], "failed");
    }
}
