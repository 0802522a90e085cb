use std::fmt;

use serde::{Deserialize, Serialize};

/// A rate or ratio that may be undefined (empty denominator). Undefined
/// values are carried explicitly so they never leak into averages as zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Value(f64),
    Undefined(String),
}

impl Metric {
    pub fn ratio(num: f64, den: f64, why: &str) -> Metric {
        if den == 0.0 {
            Metric::Undefined(why.to_string())
        } else {
            Metric::Value(num / den)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Undefined(_) => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Metric::Value(_))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v:.4}"),
            Metric::Undefined(_) => f.write_str(""),
        }
    }
}

/// Mean of the defined values, or undefined if there are none.
pub fn mean_defined<'a>(values: impl IntoIterator<Item = &'a Metric>) -> Metric {
    let v: Vec<f64> = values.into_iter().filter_map(Metric::value).collect();
    if v.is_empty() {
        Metric::Undefined("no defined values".into())
    } else {
        Metric::Value(v.iter().sum::<f64>() / v.len() as f64)
    }
}
