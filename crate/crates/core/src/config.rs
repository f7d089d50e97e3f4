//! TOML configuration: `[market]`, `[producer]`, `[consumer]`, `[costs]`.
//!
//! Keys mirror the `ModelParams` field names. `h0` sets both switching costs.
//! The profit form of each player is given by `form = "direct"` or
//! `form = "structural"`, or inferred from the keys present.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{ConsumerSpec, ModelParams, ProducerSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    market: Option<RawMarket>,
    producer: Option<RawProducer>,
    consumer: Option<RawConsumer>,
    costs: Option<RawCosts>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    beta: Option<f64>,
    sigma: Option<f64>,
    mu_plus: Option<f64>,
    mu_minus: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProducer {
    form: Option<String>,
    c_p: Option<f64>,
    d0: Option<f64>,
    d1: Option<f64>,
    a_p: Option<f64>,
    x1_p: Option<f64>,
    x2_p: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConsumer {
    form: Option<String>,
    d0_c: Option<f64>,
    d1_c: Option<f64>,
    p0: Option<f64>,
    p1: Option<f64>,
    alpha: Option<f64>,
    c_c: Option<f64>,
    a_c: Option<f64>,
    x1_c: Option<f64>,
    x2_c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCosts {
    h0: Option<f64>,
    h_plus: Option<f64>,
    h_minus: Option<f64>,
    kappa0: Option<f64>,
    kappa1: Option<f64>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, if present.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Ctx<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Ctx<'_> {
    fn missing(&self, section: &str, key: &str) -> Error {
        Error::Config(format!("{}: missing key [{section}].{key}", self.origin))
    }

    fn bad(&self, section: &str, key: &str, msg: &str) -> Error {
        let at = key_line(self.text, section, key).map_or(String::new(), |l| format!(" line {l}:"));
        Error::Config(format!("{}:{at} [{section}].{key} {msg}", self.origin))
    }

    fn need(&self, v: Option<f64>, section: &str, key: &str) -> Result<f64> {
        v.ok_or_else(|| self.missing(section, key))
    }

    /// Picks the profit form from `form` or from which keys are set.
    fn form(&self, section: &str, form: &Option<String>, structural: &[(&str, bool)], direct: &[(&str, bool)]) -> Result<bool> {
        let any_s = structural.iter().find(|k| k.1);
        let any_d = direct.iter().find(|k| k.1);
        let is_structural = match form.as_deref() {
            Some("structural") => true,
            Some("direct") => false,
            Some(other) => return Err(self.bad(section, "form", &format!("must be \"structural\" or \"direct\", got \"{other}\""))),
            None => match (any_s, any_d) {
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => return Err(self.missing(section, "form")),
                (Some(_), Some(d)) => return Err(self.bad(section, d.0, "mixes direct and structural keys")),
            },
        };
        let stray = if is_structural { any_d } else { any_s };
        if let Some(k) = stray {
            let which = if is_structural { "structural" } else { "direct" };
            return Err(self.bad(section, k.0, &format!("does not belong to the {which} form")));
        }
        Ok(is_structural)
    }
}

/// Parses a config document; `origin` names it in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<ModelParams> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let at = e.span().map_or(String::new(), |s| format!(" line {}:", line_of(text, s.start)));
        Error::Config(format!("{origin}:{at} {}", e.message()))
    })?;
    let cx = Ctx { text, origin };
    let m = raw.market.unwrap_or_default();
    let p = raw.producer.unwrap_or_default();
    let c = raw.consumer.unwrap_or_default();
    let k = raw.costs.unwrap_or_default();

    let producer = if cx.form(
        "producer",
        &p.form,
        &[("c_p", p.c_p.is_some()), ("d0", p.d0.is_some()), ("d1", p.d1.is_some())],
        &[("a_p", p.a_p.is_some()), ("x1_p", p.x1_p.is_some()), ("x2_p", p.x2_p.is_some())],
    )? {
        ProducerSpec::Structural {
            c_p: cx.need(p.c_p, "producer", "c_p")?,
            d0: cx.need(p.d0, "producer", "d0")?,
            d1: cx.need(p.d1, "producer", "d1")?,
        }
    } else {
        ProducerSpec::Direct {
            a_p: cx.need(p.a_p, "producer", "a_p")?,
            x1_p: cx.need(p.x1_p, "producer", "x1_p")?,
            x2_p: cx.need(p.x2_p, "producer", "x2_p")?,
        }
    };
    let consumer = if cx.form(
        "consumer",
        &c.form,
        &[
            ("d0_c", c.d0_c.is_some()),
            ("d1_c", c.d1_c.is_some()),
            ("p0", c.p0.is_some()),
            ("p1", c.p1.is_some()),
            ("alpha", c.alpha.is_some()),
            ("c_c", c.c_c.is_some()),
        ],
        &[("a_c", c.a_c.is_some()), ("x1_c", c.x1_c.is_some()), ("x2_c", c.x2_c.is_some())],
    )? {
        ConsumerSpec::Structural {
            d0_c: cx.need(c.d0_c, "consumer", "d0_c")?,
            d1_c: cx.need(c.d1_c, "consumer", "d1_c")?,
            p0: cx.need(c.p0, "consumer", "p0")?,
            p1: cx.need(c.p1, "consumer", "p1")?,
            alpha: cx.need(c.alpha, "consumer", "alpha")?,
            c_c: cx.need(c.c_c, "consumer", "c_c")?,
        }
    } else {
        ConsumerSpec::Direct {
            a_c: cx.need(c.a_c, "consumer", "a_c")?,
            x1_c: cx.need(c.x1_c, "consumer", "x1_c")?,
            x2_c: cx.need(c.x2_c, "consumer", "x2_c")?,
        }
    };
    let (h_plus, h_minus) = match (k.h0, k.h_plus, k.h_minus) {
        (Some(h), None, None) => (h, h),
        (None, Some(a), Some(b)) => (a, b),
        (Some(_), _, _) => return Err(cx.bad("costs", "h0", "conflicts with h_plus/h_minus")),
        (None, None, _) => return Err(cx.missing("costs", "h_plus")),
        (None, _, None) => return Err(cx.missing("costs", "h_minus")),
    };
    let params = ModelParams {
        beta: cx.need(m.beta, "market", "beta")?,
        sigma: cx.need(m.sigma, "market", "sigma")?,
        mu_plus: cx.need(m.mu_plus, "market", "mu_plus")?,
        mu_minus: cx.need(m.mu_minus, "market", "mu_minus")?,
        producer,
        consumer,
        h_plus,
        h_minus,
        kappa0: cx.need(k.kappa0, "costs", "kappa0")?,
        kappa1: k.kappa1.unwrap_or(0.0),
    };
    params
        .validate()
        .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    Ok(params)
}

pub fn load_config(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

/// Renders parameters in the config layout (round-trips through `parse_config`).
pub fn to_toml(p: &ModelParams) -> String {
    let mut s = String::new();
    s += &format!(
        "[market]\nbeta = {:?}\nsigma = {:?}\nmu_plus = {:?}\nmu_minus = {:?}\n\n",
        p.beta, p.sigma, p.mu_plus, p.mu_minus
    );
    s += &match &p.producer {
        ProducerSpec::Structural { c_p, d0, d1 } => {
            format!("[producer]\nform = \"structural\"\nc_p = {c_p:?}\nd0 = {d0:?}\nd1 = {d1:?}\n\n")
        }
        ProducerSpec::Direct { a_p, x1_p, x2_p } => {
            format!("[producer]\nform = \"direct\"\na_p = {a_p:?}\nx1_p = {x1_p:?}\nx2_p = {x2_p:?}\n\n")
        }
    };
    s += &match &p.consumer {
        ConsumerSpec::Structural {
            d0_c,
            d1_c,
            p0,
            p1,
            alpha,
            c_c,
        } => format!(
            "[consumer]\nform = \"structural\"\nd0_c = {d0_c:?}\nd1_c = {d1_c:?}\np0 = {p0:?}\np1 = {p1:?}\nalpha = {alpha:?}\nc_c = {c_c:?}\n\n"
        ),
        ConsumerSpec::Direct { a_c, x1_c, x2_c } => {
            format!("[consumer]\nform = \"direct\"\na_c = {a_c:?}\nx1_c = {x1_c:?}\nx2_c = {x2_c:?}\n\n")
        }
    };
    s += &format!(
        "[costs]\nh_plus = {:?}\nh_minus = {:?}\nkappa0 = {:?}\nkappa1 = {:?}\n",
        p.h_plus, p.h_minus, p.kappa0, p.kappa1
    );
    s
}
