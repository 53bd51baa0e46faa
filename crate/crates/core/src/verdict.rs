//! Pass/fail judgements against numeric targets.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Indeterminate,
    Fail,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Outcome::Pass => "pass",
            Outcome::Indeterminate => "indeterminate",
            Outcome::Fail => "fail",
        })
    }
}

/// How `measured` is compared with `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `|measured − target| ≤ tolerance`.
    Within,
    /// `measured ≥ target`.
    AtLeast,
    /// `measured ≤ target`.
    AtMost,
    /// `measured > target`.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    #[serde(with = "float_repr")]
    pub measured: f64,
    #[serde(with = "float_repr")]
    pub target: f64,
    #[serde(with = "float_repr")]
    pub tolerance: f64,
    pub rule: Rule,
    pub outcome: Outcome,
}

impl Verdict {
    pub fn new(name: impl Into<String>, measured: f64, target: f64, tolerance: f64, rule: Rule) -> Self {
        let outcome = if measured.is_nan() || target.is_nan() || tolerance.is_nan() {
            Outcome::Indeterminate
        } else {
            let ok = match rule {
                Rule::Within => (measured - target).abs() <= tolerance,
                Rule::AtLeast => measured >= target,
                Rule::AtMost => measured <= target,
                Rule::Above => measured > target,
            };
            if ok {
                Outcome::Pass
            } else {
                Outcome::Fail
            }
        };
        Self {
            name: name.into(),
            measured,
            target,
            tolerance,
            rule,
            outcome,
        }
    }

    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, measured, target, tolerance, Rule::Within)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, 0.0, Rule::AtLeast)
    }

    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, 0.0, Rule::AtMost)
    }

    pub fn above(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, 0.0, Rule::Above)
    }

    /// A target that could not be measured.
    pub fn indeterminate(name: impl Into<String>, target: f64, tolerance: f64, rule: Rule) -> Self {
        Self::new(name, f64::NAN, target, tolerance, rule)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (t, tol) = (short(self.target), short(self.tolerance));
        let cmp = match self.rule {
            Rule::Within => format!("target {t} ± {tol}"),
            Rule::AtLeast => format!("target ≥ {t}"),
            Rule::AtMost => format!("target ≤ {t}"),
            Rule::Above => format!("target > {t}"),
        };
        write!(f, "{:<13} {}: measured {} ({cmp})", self.outcome, self.name, short(self.measured))
    }
}

fn short(x: f64) -> String {
    if x != 0.0 && x.is_finite() && !(1e-3..1e6).contains(&x.abs()) {
        format!("{x:.4e}")
    } else {
        format!("{}", (x * 1e6).round() / 1e6)
    }
}

/// Worst outcome wins: any failure fails the run.
pub fn overall(verdicts: &[Verdict]) -> Outcome {
    verdicts.iter().map(|v| v.outcome).max().unwrap_or(Outcome::Pass)
}

/// JSON has no NaN or infinity, so those are written as strings.
pub(crate) mod float_repr {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&crate::table::fmt_f64(*x))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(D::Error::custom(format!("not a number: {s}"))),
            },
        }
    }
}
