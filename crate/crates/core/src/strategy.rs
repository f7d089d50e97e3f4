//! Threshold strategies: the producer's 2x4 matrix and the consumer's pair.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::Regime;

/// A threshold entry. Infinite and absent entries are explicit variants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Finite(f64),
    NegInf,
    PosInf,
    Absent,
}

impl Threshold {
    pub fn finite(self) -> Option<f64> {
        match self {
            Threshold::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Threshold::Finite(_))
    }

    /// Numeric view: infinities map to `f64` infinities, absent to NaN.
    pub fn as_f64(self) -> f64 {
        match self {
            Threshold::Finite(v) => v,
            Threshold::NegInf => f64::NEG_INFINITY,
            Threshold::PosInf => f64::INFINITY,
            Threshold::Absent => f64::NAN,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            Threshold::Absent
        } else if v == f64::INFINITY {
            Threshold::PosInf
        } else if v == f64::NEG_INFINITY {
            Threshold::NegInf
        } else {
            Threshold::Finite(v)
        }
    }

    /// Text form used in CSV files: 17 significant digits or a sentinel.
    pub fn to_token(self) -> String {
        match self {
            Threshold::Finite(v) => format!("{v:.16e}"),
            Threshold::NegInf => "-inf".into(),
            Threshold::PosInf => "+inf".into(),
            Threshold::Absent => "NA".into(),
        }
    }

    pub fn parse_token(s: &str) -> Option<Self> {
        match s.trim() {
            "-inf" => Some(Threshold::NegInf),
            "+inf" | "inf" => Some(Threshold::PosInf),
            "NA" | "-" | "" => Some(Threshold::Absent),
            t => t.parse::<f64>().ok().filter(|v| v.is_finite()).map(Threshold::Finite),
        }
    }

    /// Whether two entries share the same pattern (both finite, or the same sentinel).
    pub fn same_kind(self, other: Threshold) -> bool {
        std::mem::discriminant(&self) == std::mem::discriminant(&other)
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Finite(v) => write!(f, "{v:.4}"),
            Threshold::NegInf => f.write_str("-inf"),
            Threshold::PosInf => f.write_str("+inf"),
            Threshold::Absent => f.write_str("-"),
        }
    }
}

/// One row of the producer matrix: `(x_l, x_l*, x_h*, x_h)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProducerRow {
    pub xl: Threshold,
    pub xl_star: Threshold,
    pub xh_star: Threshold,
    pub xh: Threshold,
}

impl ProducerRow {
    pub fn two_sided(xl: f64, xl_star: f64, xh_star: f64, xh: f64) -> Self {
        ProducerRow {
            xl: Threshold::Finite(xl),
            xl_star: Threshold::Finite(xl_star),
            xh_star: Threshold::Finite(xh_star),
            xh: Threshold::Finite(xh),
        }
    }

    /// Only impulses up from `xl` to `xl_star`.
    pub fn lower_only(xl: f64, xl_star: f64) -> Self {
        ProducerRow {
            xl: Threshold::Finite(xl),
            xl_star: Threshold::Finite(xl_star),
            xh_star: Threshold::Absent,
            xh: Threshold::PosInf,
        }
    }

    /// Only impulses down from `xh` to `xh_star`.
    pub fn upper_only(xh_star: f64, xh: f64) -> Self {
        ProducerRow {
            xl: Threshold::NegInf,
            xl_star: Threshold::Absent,
            xh_star: Threshold::Finite(xh_star),
            xh: Threshold::Finite(xh),
        }
    }

    pub fn inactive() -> Self {
        ProducerRow {
            xl: Threshold::NegInf,
            xl_star: Threshold::Absent,
            xh_star: Threshold::Absent,
            xh: Threshold::PosInf,
        }
    }

    /// `(threshold, target)` of the lower impulse, when both are finite.
    pub fn lower(&self) -> Option<(f64, f64)> {
        Some((self.xl.finite()?, self.xl_star.finite()?))
    }

    pub fn upper(&self) -> Option<(f64, f64)> {
        Some((self.xh.finite()?, self.xh_star.finite()?))
    }

    pub fn entries(&self) -> [Threshold; 4] {
        [self.xl, self.xl_star, self.xh_star, self.xh]
    }

    pub fn from_entries(e: [Threshold; 4]) -> Self {
        ProducerRow {
            xl: e[0],
            xl_star: e[1],
            xh_star: e[2],
            xh: e[3],
        }
    }

    /// Natural ordering `x_l < x_l*` and `x_h* < x_h` on present entries.
    pub fn is_ordered(&self) -> bool {
        let lower_ok = self.lower().map_or(true, |(a, t)| a < t);
        let upper_ok = self.upper().map_or(true, |(b, t)| t < b);
        let band_ok = match (self.xl.finite(), self.xh.finite()) {
            (Some(a), Some(b)) => a < b,
            _ => true,
        };
        lower_ok && upper_ok && band_ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProducerStrategy {
    pub plus: ProducerRow,
    pub minus: ProducerRow,
}

impl ProducerStrategy {
    pub fn row(&self, regime: Regime) -> &ProducerRow {
        match regime {
            Regime::Plus => &self.plus,
            Regime::Minus => &self.minus,
        }
    }

    pub fn row_mut(&mut self, regime: Regime) -> &mut ProducerRow {
        match regime {
            Regime::Plus => &mut self.plus,
            Regime::Minus => &mut self.minus,
        }
    }
}

/// Consumer switching thresholds: into contraction at `yh` (from expansion),
/// into expansion at `yl` (from contraction).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumerStrategy {
    pub yl: Threshold,
    pub yh: Threshold,
}

impl ConsumerStrategy {
    pub fn new(yl: f64, yh: f64) -> Self {
        ConsumerStrategy {
            yl: Threshold::from_f64(yl),
            yh: Threshold::from_f64(yh),
        }
    }

    pub fn never() -> Self {
        ConsumerStrategy {
            yl: Threshold::NegInf,
            yh: Threshold::PosInf,
        }
    }

    /// The threshold at which the consumer leaves `regime`.
    pub fn exit(&self, regime: Regime) -> Threshold {
        match regime {
            Regime::Plus => self.yh,
            Regime::Minus => self.yl,
        }
    }

    pub fn is_ordered(&self) -> bool {
        match (self.yl.finite(), self.yh.finite()) {
            (Some(l), Some(h)) => l < h,
            _ => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyPair {
    pub producer: ProducerStrategy,
    pub consumer: ConsumerStrategy,
}

impl StrategyPair {
    /// Entries in a fixed order: producer plus row, minus row, then `yl, yh`.
    pub fn entries(&self) -> [Threshold; 10] {
        let p = self.producer.plus.entries();
        let m = self.producer.minus.entries();
        [
            p[0], p[1], p[2], p[3], m[0], m[1], m[2], m[3], self.consumer.yl, self.consumer.yh,
        ]
    }

    pub fn from_entries(e: [Threshold; 10]) -> Self {
        StrategyPair {
            producer: ProducerStrategy {
                plus: ProducerRow::from_entries([e[0], e[1], e[2], e[3]]),
                minus: ProducerRow::from_entries([e[4], e[5], e[6], e[7]]),
            },
            consumer: ConsumerStrategy {
                yl: e[8],
                yh: e[9],
            },
        }
    }

    pub const ENTRY_NAMES: [&'static str; 10] = [
        "xl_plus",
        "xl_star_plus",
        "xh_star_plus",
        "xh_plus",
        "xl_minus",
        "xl_star_minus",
        "xh_star_minus",
        "xh_minus",
        "yl",
        "yh",
    ];

    /// Sup-norm distance over finite entries; `None` if patterns differ.
    pub fn distance(&self, other: &StrategyPair) -> Option<f64> {
        let mut d: f64 = 0.0;
        for (a, b) in self.entries().iter().zip(other.entries().iter()) {
            match (a, b) {
                (Threshold::Finite(x), Threshold::Finite(y)) => d = d.max((x - y).abs()),
                _ if a.same_kind(*b) => {}
                _ => return None,
            }
        }
        Some(d)
    }
}

impl fmt::Display for ProducerStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, m) = (&self.plus, &self.minus);
        write!(
            f,
            "[{}, {}, {}, {}; {}, {}, {}, {}]",
            p.xl, p.xl_star, p.xh_star, p.xh, m.xl, m.xl_star, m.xh_star, m.xh
        )
    }
}

impl fmt::Display for ConsumerStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.yl, self.yh)
    }
}

impl fmt::Display for StrategyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C_p = {}  C_c = {}", self.producer, self.consumer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_round_trip() {
        for t in [
            Threshold::Finite(3.6472000000000002),
            Threshold::Finite(-1e-300),
            Threshold::NegInf,
            Threshold::PosInf,
            Threshold::Absent,
        ] {
            assert_eq!(Threshold::parse_token(&t.to_token()), Some(t));
        }
    }

    #[test]
    fn distance_requires_same_pattern() {
        let a = StrategyPair {
            producer: ProducerStrategy {
                plus: ProducerRow::lower_only(2.0, 3.6),
                minus: ProducerRow::upper_only(4.5, 6.1),
            },
            consumer: ConsumerStrategy::new(2.2, 4.4),
        };
        let mut b = a;
        b.consumer.yh = Threshold::Finite(4.5);
        assert!((a.distance(&b).unwrap() - 0.1).abs() < 1e-12);
        b.consumer.yl = Threshold::NegInf;
        assert!(a.distance(&b).is_none());
    }

    #[test]
    fn ordering_checks() {
        assert!(ProducerRow::two_sided(1.9, 3.5, 3.5, 5.6).is_ordered());
        assert!(!ProducerRow::two_sided(3.6, 3.5, 3.5, 5.6).is_ordered());
        assert!(!ConsumerStrategy::new(4.4, 2.2).is_ordered());
    }
}
