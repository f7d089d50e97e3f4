//! CSV and JSON artifacts. Every CSV has a header row; units in parentheses.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ChainState, Density, Event, JumpChain, LongRunStats, PathRecord};
use crate::equilibrium::{Diagnostics, EquilibriumResult, IterationRecord};
use crate::error::{Error, Result};
use crate::model::Regime;
use crate::piecewise::ValuePair;
use crate::strategy::{StrategyPair, Threshold};

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Shortest round-trip text; exponent form for very small or large values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub const THRESHOLD_HEADER: [&str; 2] = ["entry", "value (USD)"];

/// One row per entry of `C_p` and `C_c`; sentinels `-inf`, `+inf`, `NA`.
pub fn write_thresholds(path: &Path, s: &StrategyPair) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(THRESHOLD_HEADER)?;
    for (name, t) in StrategyPair::ENTRY_NAMES.iter().zip(s.entries()) {
        w.write_record([name.to_string(), t.to_token()])?;
    }
    finish(w, path)
}

pub fn read_thresholds(path: &Path) -> Result<StrategyPair> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let mut entries = [Threshold::Absent; 10];
    let mut seen = [false; 10];
    for rec in r.records() {
        let rec = rec?;
        let (name, value) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        let i = StrategyPair::ENTRY_NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::Config(format!("{}: unknown threshold entry '{name}'", path.display())))?;
        entries[i] = Threshold::parse_token(value)
            .ok_or_else(|| Error::Config(format!("{}: bad value '{value}' for {name}", path.display())))?;
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Config(format!(
            "{}: missing threshold entry {}",
            path.display(),
            StrategyPair::ENTRY_NAMES[i]
        )));
    }
    Ok(StrategyPair::from_entries(entries))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueSample {
    pub x: f64,
    pub producer_plus: f64,
    pub producer_minus: f64,
    pub consumer_plus: f64,
    pub consumer_minus: f64,
}

/// Closed-form pieces of both players' values plus samples on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueDump {
    pub producer: ValuePair,
    pub consumer: ValuePair,
    pub samples: Vec<ValueSample>,
}

impl ValueDump {
    pub fn new(producer: &ValuePair, consumer: &ValuePair, window: (f64, f64), n: usize) -> Self {
        let samples = (0..n)
            .map(|i| {
                let x = window.0 + (window.1 - window.0) * i as f64 / (n.max(2) - 1) as f64;
                ValueSample {
                    x,
                    producer_plus: producer.eval(Regime::Plus, x),
                    producer_minus: producer.eval(Regime::Minus, x),
                    consumer_plus: consumer.eval(Regime::Plus, x),
                    consumer_minus: consumer.eval(Regime::Minus, x),
                }
            })
            .collect();
        ValueDump {
            producer: producer.clone(),
            consumer: consumer.clone(),
            samples,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

pub fn write_value_samples(path: &Path, dump: &ValueDump) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "x (USD)",
        "v_plus (USD)",
        "v_minus (USD)",
        "w_plus (USD)",
        "w_minus (USD)",
    ])?;
    for s in &dump.samples {
        w.write_record([
            num(s.x),
            num(s.producer_plus),
            num(s.producer_minus),
            num(s.consumer_plus),
            num(s.consumer_minus),
        ])?;
    }
    finish(w, path)
}

pub fn write_checks(path: &Path, d: &Diagnostics) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["check", "passed", "margin", "tolerance"])?;
    for c in &d.checks {
        w.write_record([c.name.clone(), c.passed.to_string(), num(c.margin), num(c.tol)])?;
    }
    finish(w, path)
}

pub fn write_history(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["iteration".to_string(), "delta (USD)".to_string()];
    header.extend(StrategyPair::ENTRY_NAMES.iter().map(|n| format!("{n} (USD)")));
    header.push("consumer_kind".into());
    header.push("producer_kind".into());
    w.write_record(&header)?;
    for h in history {
        let mut row = vec![h.iteration.to_string(), num(h.delta)];
        row.extend(h.strategies.entries().iter().map(|t| t.to_token()));
        row.push(h.consumer_kind.clone());
        row.push(h.producer_kind.clone());
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Headline facts of a solve, read back by the report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SolveSummary {
    pub type_tag: String,
    pub branch: String,
    pub mode: String,
    pub converged: bool,
    pub iterations: usize,
    pub fixed_point_delta: f64,
    pub verified: bool,
    pub failed_checks: Vec<String>,
    pub strategies: String,
    pub consumer_kind: String,
    pub producer_kind: String,
    pub cycle: Option<(String, String)>,
}

impl SolveSummary {
    pub fn of(r: &EquilibriumResult) -> Self {
        SolveSummary {
            type_tag: r.type_tag.label().into(),
            branch: r.branch.label().into(),
            mode: format!("{:?}", r.mode).to_lowercase(),
            converged: r.converged,
            iterations: r.iterations,
            fixed_point_delta: r.fixed_point_delta,
            verified: r.diagnostics.all_pass(),
            failed_checks: r.diagnostics.failed().map(|c| c.name.clone()).collect(),
            strategies: r.strategies.to_string(),
            consumer_kind: r.consumer.kind.label().into(),
            producer_kind: r.producer.kind.label().into(),
            cycle: r.cycle.map(|(a, b)| (a.to_string(), b.to_string())),
        }
    }
}

pub fn write_density(path: &Path, d: &Density) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "bin_left (USD)",
        "bin_right (USD)",
        "mass",
        "mass_plus",
        "mass_minus",
        "smoothed (1/USD)",
    ])?;
    for i in 0..d.mass.len() {
        w.write_record([
            num(d.edges[i]),
            num(d.edges[i + 1]),
            num(d.mass[i]),
            num(d.mass_plus[i]),
            num(d.mass_minus[i]),
            num(d.smoothed[i]),
        ])?;
    }
    finish(w, path)
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t (yr)", "kind", "pre (USD)", "post (USD)"])?;
    for e in events {
        w.write_record([num(e.t), e.kind.label().to_string(), num(e.pre), num(e.post)])?;
    }
    finish(w, path)
}

pub fn write_path(path: &Path, rec: &PathRecord) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t (yr)", "price (USD)", "regime"])?;
    for i in 0..rec.times.len() {
        w.write_record([num(rec.times[i]), num(rec.prices[i]), rec.regimes[i].label().to_string()])?;
    }
    finish(w, path)
}

pub fn write_chain(path: &Path, c: &JumpChain) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["state".to_string(), "entry (USD)".into(), "pi".into(), "zeta (yr)".into(), "recurrent".into()];
    header.extend(ChainState::ALL.iter().map(|s| format!("P_to_{}", s.label())));
    w.write_record(&header)?;
    for (i, s) in c.states.iter().enumerate() {
        let mut row = vec![
            s.label().to_string(),
            c.entry[i].map_or("NA".into(), num),
            num(c.pi[i]),
            num(c.zeta[i]),
            c.recurrent[i].to_string(),
        ];
        row.extend(c.p[i].iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub const STATS_HEADER: [&str; 14] = [
    "label",
    "E[X] (USD)",
    "Var[X] (USD^2)",
    "Std[X] (USD)",
    "E[pi_p] (USD/yr)",
    "APOO_p",
    "E[pi_c] (USD/yr)",
    "APOO_c",
    "switches (1/yr)",
    "impulses (1/yr)",
    "rho_plus",
    "Var[pi_p] (USD^2/yr^2)",
    "Var[pi_c] (USD^2/yr^2)",
    "Cov[pi_p,pi_c] (USD^2/yr^2)",
];

pub fn stats_record(label: &str, s: &LongRunStats) -> Vec<String> {
    vec![
        label.to_string(),
        num(s.mean),
        num(s.var),
        num(s.std),
        num(s.mean_pi_p),
        num(s.apoo_p),
        num(s.mean_pi_c),
        num(s.apoo_c),
        num(s.switches_per_year),
        num(s.impulses_per_year),
        num(s.rho_plus),
        num(s.var_pi_p),
        num(s.var_pi_c),
        num(s.cov_pi),
    ]
}

pub fn write_stats(path: &Path, rows: &[(String, LongRunStats)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(STATS_HEADER)?;
    for (label, s) in rows {
        w.write_record(stats_record(label, s))?;
    }
    finish(w, path)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{ConsumerStrategy, ProducerRow, ProducerStrategy};

    #[test]
    fn thresholds_round_trip_bit_exact() {
        let s = StrategyPair {
            producer: ProducerStrategy {
                plus: ProducerRow::lower_only(1.9910041234567891, 3.647200000000001),
                minus: ProducerRow::upper_only(4.495213, 6.073900000000002),
            },
            consumer: ConsumerStrategy::new(0.1 + 0.2, 4.387_912_345_678_9),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_thresholds(&p, &s).unwrap();
        let back = read_thresholds(&p).unwrap();
        assert_eq!(back, s);
        for (a, b) in back.entries().iter().zip(s.entries()) {
            if let (Some(x), Some(y)) = (a.finite(), b.finite()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn missing_entry_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "entry,value (USD)\nxl_plus,1.0\n").unwrap();
        let e = read_thresholds(&p).unwrap_err().to_string();
        assert!(e.contains("xl_star_plus"), "{e}");
    }
}
