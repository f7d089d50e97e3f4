//! Model constants, quadratic profit rates and the per-regime ODE fundamentals.
//!
//! Between interventions the price follows `dX = mu dt + sigma dW` and a
//! player's value solves `-beta w + mu w' + sigma^2/2 w'' + pi(x) = 0`.
//! Every solution is a particular quadratic plus two exponentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Demand regime set by the consumer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Plus,
    Minus,
}

impl Regime {
    pub const BOTH: [Regime; 2] = [Regime::Plus, Regime::Minus];

    pub fn other(self) -> Regime {
        match self {
            Regime::Plus => Regime::Minus,
            Regime::Minus => Regime::Plus,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Regime::Plus => 0,
            Regime::Minus => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Plus => "plus",
            Regime::Minus => "minus",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Producer,
    Consumer,
}

/// Producer profit `(x - c_p)(d0 - d1 x)` or `a_p (x - x1_p)(x2_p - x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum ProducerSpec {
    Structural { c_p: f64, d0: f64, d1: f64 },
    Direct { a_p: f64, x1_p: f64, x2_p: f64 },
}

/// Consumer profit from the retail pass-through `P(x) = p0 + p1 x`,
/// demand `d0_c - d1_c P` and conversion rate `alpha`, or given directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum ConsumerSpec {
    Structural {
        d0_c: f64,
        d1_c: f64,
        p0: f64,
        p1: f64,
        alpha: f64,
        c_c: f64,
    },
    Direct { a_c: f64, x1_c: f64, x2_c: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Discount rate (1/yr).
    pub beta: f64,
    /// Price volatility (USD/yr^0.5).
    pub sigma: f64,
    /// Expansion drift (USD/yr).
    pub mu_plus: f64,
    /// Contraction drift (USD/yr).
    pub mu_minus: f64,
    pub producer: ProducerSpec,
    pub consumer: ConsumerSpec,
    /// Cost of a switch into expansion (USD).
    pub h_plus: f64,
    /// Cost of a switch into contraction (USD).
    pub h_minus: f64,
    /// Fixed impulse cost (USD).
    pub kappa0: f64,
    /// Proportional impulse cost (USD per unit of impulse).
    pub kappa1: f64,
}

impl ModelParams {
    /// The stylized parameter set used for the three equilibrium types.
    pub fn stylized() -> Self {
        ModelParams {
            beta: 0.1,
            sigma: 0.25,
            mu_plus: 0.1,
            mu_minus: -0.1,
            producer: ProducerSpec::Direct {
                a_p: 0.25,
                x1_p: 2.0,
                x2_p: 6.0,
            },
            consumer: ConsumerSpec::Direct {
                a_c: 0.75,
                x1_c: 1.0,
                x2_c: 5.0,
            },
            h_plus: 10.0,
            h_minus: 10.0,
            kappa0: 3.0,
            kappa1: 0.0,
        }
    }

    /// Crude oil case study. The refining cost is 10 (the value that gives
    /// the consumer habitat {11, 82}); switching cost as tabulated.
    pub fn crude_oil() -> Self {
        ModelParams {
            beta: 0.1,
            sigma: 10.0,
            mu_plus: 0.15,
            mu_minus: -0.15,
            producer: ProducerSpec::Structural {
                c_p: 30.0,
                d0: 1.0,
                d1: 0.01,
            },
            consumer: ConsumerSpec::Structural {
                d0_c: 5.0,
                d1_c: 0.05,
                p0: 10.0,
                p1: 1.1,
                alpha: 0.95,
                c_c: 10.0,
            },
            h_plus: 29.0,
            h_minus: 29.0,
            kappa0: 24.5,
            kappa1: 0.0,
        }
    }

    pub fn mu(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Plus => self.mu_plus,
            Regime::Minus => self.mu_minus,
        }
    }

    /// Cost the consumer pays to enter `regime`.
    pub fn switch_cost(&self, into: Regime) -> f64 {
        match into {
            Regime::Plus => self.h_plus,
            Regime::Minus => self.h_minus,
        }
    }

    pub fn impulse_cost(&self, xi: f64) -> f64 {
        impulse_cost(self.kappa0, self.kappa1, xi)
    }

    pub fn set_h0(&mut self, h0: f64) {
        self.h_plus = h0;
        self.h_minus = h0;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        let all = [
            self.beta,
            self.sigma,
            self.mu_plus,
            self.mu_minus,
            self.h_plus,
            self.h_minus,
            self.kappa0,
            self.kappa1,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all constants must be finite");
        }
        if self.beta <= 0.0 {
            return bad("beta must be positive");
        }
        if self.sigma <= 0.0 {
            return bad("sigma must be positive");
        }
        if !(self.mu_minus < 0.0 && 0.0 < self.mu_plus) {
            return bad("drifts must satisfy mu_minus < 0 < mu_plus");
        }
        if self.h_plus < 0.0 || self.h_minus < 0.0 {
            return bad("switching costs must be non-negative");
        }
        if self.kappa0 <= 0.0 {
            return bad("kappa0 must be positive");
        }
        if self.kappa1 < 0.0 {
            return bad("kappa1 must be non-negative");
        }
        Ok(())
    }
}

/// `K_p(xi) = kappa0 + kappa1 |xi|`.
pub fn impulse_cost(kappa0: f64, kappa1: f64, xi: f64) -> f64 {
    kappa0 + kappa1 * xi.abs()
}

/// Concave quadratic profit rate `g0 + g1 x + g2 x^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadProfit {
    pub g0: f64,
    pub g1: f64,
    pub g2: f64,
    pub x1: f64,
    pub x2: f64,
    pub xbar: f64,
    pub peak: f64,
}

impl QuadProfit {
    /// `a (x - x1)(x2 - x)`.
    pub fn from_roots(a: f64, x1: f64, x2: f64) -> Result<Self> {
        if !(a > 0.0) || !(x1 < x2) {
            return Err(Error::InvalidParams(format!(
                "direct profit needs a > 0 and x1 < x2 (got a={a}, x1={x1}, x2={x2})"
            )));
        }
        Self::from_coefficients(-a * x1 * x2, a * (x1 + x2), -a)
    }

    pub fn from_coefficients(g0: f64, g1: f64, g2: f64) -> Result<Self> {
        if !(g2 < 0.0) {
            return Err(Error::InvalidParams(format!(
                "profit must be strictly concave (g2 = {g2})"
            )));
        }
        let disc = g1 * g1 - 4.0 * g0 * g2;
        if !(disc > 0.0) {
            return Err(Error::InvalidParams(
                "profit rate is never positive (empty habitat)".into(),
            ));
        }
        // Stable quadratic roots.
        let q = -0.5 * (g1 + g1.signum() * disc.sqrt());
        let (r1, r2) = if q == 0.0 {
            let r = (-g0 / g2).sqrt();
            (-r, r)
        } else {
            (q / g2, g0 / q)
        };
        let (x1, x2) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let xbar = -g1 / (2.0 * g2);
        let peak = g0 + g1 * xbar + g2 * xbar * xbar;
        Ok(QuadProfit {
            g0,
            g1,
            g2,
            x1,
            x2,
            xbar,
            peak,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.g0 + x * (self.g1 + x * self.g2)
    }
}

/// Expands both profit specifications into quadratics `(producer, consumer)`.
pub fn build_profits(params: &ModelParams) -> Result<(QuadProfit, QuadProfit)> {
    let producer = match params.producer {
        ProducerSpec::Structural { c_p, d0, d1 } => {
            if !(d1 > 0.0) || !(d0 / d1 > c_p) {
                return Err(Error::InvalidParams(format!(
                    "producer needs d1 > 0 and d0/d1 > c_p (got c_p={c_p}, d0={d0}, d1={d1})"
                )));
            }
            QuadProfit::from_roots(d1, c_p, d0 / d1)?
        }
        ProducerSpec::Direct { a_p, x1_p, x2_p } => QuadProfit::from_roots(a_p, x1_p, x2_p)?,
    };
    let consumer = match params.consumer {
        ConsumerSpec::Structural {
            d0_c,
            d1_c,
            p0,
            p1,
            alpha,
            c_c,
        } => {
            if !(alpha > 0.0) {
                return Err(Error::InvalidParams("alpha must be positive".into()));
            }
            let inv_alpha = 1.0 / alpha;
            let g2 = d1_c * p1 * (inv_alpha - p1);
            if !(g2 < 0.0) {
                return Err(Error::Concavity { p1, inv_alpha });
            }
            let demand0 = d0_c - d1_c * p0;
            let margin0 = p0 - c_c / alpha;
            let g0 = demand0 * margin0;
            let g1 = demand0 * (p1 - inv_alpha) - d1_c * p1 * margin0;
            QuadProfit::from_coefficients(g0, g1, g2)?
        }
        ConsumerSpec::Direct { a_c, x1_c, x2_c } => QuadProfit::from_roots(a_c, x1_c, x2_c)?,
    };
    Ok((producer, consumer))
}

/// Roots `(theta1 > 0, theta2 < 0)` of `-beta + mu z + sigma^2/2 z^2 = 0`.
pub fn char_roots(mu: f64, beta: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let d = (mu * mu + 2.0 * beta * s2).sqrt();
    // Avoid cancellation in the root whose sign differs from -mu.
    if mu >= 0.0 {
        let t2 = (-mu - d) / s2;
        (-2.0 * beta / (s2 * t2), t2)
    } else {
        let t1 = (-mu + d) / s2;
        (t1, -2.0 * beta / (s2 * t1))
    }
}

/// Particular quadratic `q2 x^2 + q1 x + q0` of the inhomogeneous ODE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particular {
    pub q2: f64,
    pub q1: f64,
    pub q0: f64,
}

impl Particular {
    pub fn eval(&self, x: f64) -> f64 {
        self.q0 + x * (self.q1 + x * self.q2)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.q1 + 2.0 * self.q2 * x
    }

    pub fn d2(&self) -> f64 {
        2.0 * self.q2
    }
}

pub fn particular_solution(profit: &QuadProfit, mu: f64, beta: f64, sigma: f64) -> Particular {
    let q2 = profit.g2 / beta;
    let q1 = (profit.g1 + 2.0 * mu * q2) / beta;
    let q0 = (profit.g0 + sigma * sigma * q2 + mu * q1) / beta;
    Particular { q2, q1, q0 }
}

/// Everything a solver needs about one (player, regime) continuation ODE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeFundamentals {
    pub regime: Regime,
    pub beta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub particular: Particular,
    pub profit: QuadProfit,
}

impl RegimeFundamentals {
    pub fn new(profit: QuadProfit, regime: Regime, params: &ModelParams) -> Self {
        let mu = params.mu(regime);
        let (theta1, theta2) = char_roots(mu, params.beta, params.sigma);
        RegimeFundamentals {
            regime,
            beta: params.beta,
            sigma: params.sigma,
            mu,
            theta1,
            theta2,
            particular: particular_solution(&profit, mu, params.beta, params.sigma),
            profit,
        }
    }

    /// `-beta w + mu w' + sigma^2/2 w'' + pi(x)` for given derivatives.
    pub fn residual(&self, x: f64, w: f64, w1: f64, w2: f64) -> f64 {
        -self.beta * w + self.mu * w1 + 0.5 * self.sigma * self.sigma * w2 + self.profit.eval(x)
    }
}

/// Validated parameters together with the derived quadratics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: ModelParams,
    pub producer: QuadProfit,
    pub consumer: QuadProfit,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let (producer, consumer) = build_profits(&params)?;
        Ok(Model {
            params,
            producer,
            consumer,
        })
    }

    pub fn profit(&self, player: Player) -> &QuadProfit {
        match player {
            Player::Producer => &self.producer,
            Player::Consumer => &self.consumer,
        }
    }

    pub fn fundamentals(&self, player: Player, regime: Regime) -> RegimeFundamentals {
        RegimeFundamentals::new(*self.profit(player), regime, &self.params)
    }

    /// A price window wide enough to contain every threshold of interest.
    pub fn domain(&self) -> (f64, f64) {
        let lo = self.producer.x1.min(self.consumer.x1);
        let hi = self.producer.x2.max(self.consumer.x2);
        let pad = 0.5 * (hi - lo);
        (lo - pad, hi + pad)
    }
}
