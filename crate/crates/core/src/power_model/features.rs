//! Feature terms and the built-in OS × mode feature lists.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsSample;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Os {
    Windows,
    Ubuntu,
}

impl Os {
    pub const ALL: [Os; 2] = [Os::Windows, Os::Ubuntu];

    pub fn as_str(self) -> &'static str {
        match self {
            Os::Windows => "windows",
            Os::Ubuntu => "ubuntu",
        }
    }
}

impl fmt::Display for Os {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Os {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "windows" => Ok(Os::Windows),
            "ubuntu" => Ok(Os::Ubuntu),
            other => Err(ModelError::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    Normal,
    Save,
}

impl PowerMode {
    pub const ALL: [PowerMode; 2] = [PowerMode::Normal, PowerMode::Save];

    pub fn as_str(self) -> &'static str {
        match self {
            PowerMode::Normal => "normal",
            PowerMode::Save => "save",
        }
    }
}

impl fmt::Display for PowerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PowerMode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(PowerMode::Normal),
            "save" => Ok(PowerMode::Save),
            other => Err(ModelError::UnknownName(other.to_string())),
        }
    }
}

/// A logged utilization metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Cpu,
    Brightness,
    BattRate,
    Charging,
    BattRemaining,
    Mem,
    DiskReq,
    DiskKb,
    NetKb,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Cpu,
        Metric::Brightness,
        Metric::BattRate,
        Metric::Charging,
        Metric::BattRemaining,
        Metric::Mem,
        Metric::DiskReq,
        Metric::DiskKb,
        Metric::NetKb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cpu => "cpu",
            Metric::Brightness => "brightness",
            Metric::BattRate => "batt_rate",
            Metric::Charging => "charging",
            Metric::BattRemaining => "batt_remaining",
            Metric::Mem => "mem",
            Metric::DiskReq => "disk_req",
            Metric::DiskKb => "disk_kb",
            Metric::NetKb => "net_kb",
        }
    }

    /// Reads the metric from a sample; `charging` is encoded 1.0 / 0.0.
    pub fn value(self, s: &MetricsSample) -> f64 {
        match self {
            Metric::Cpu => s.cpu,
            Metric::Brightness => s.brightness,
            Metric::BattRate => s.batt_rate,
            Metric::Charging => {
                if s.charging {
                    1.0
                } else {
                    0.0
                }
            }
            Metric::BattRemaining => s.batt_remaining,
            Metric::Mem => s.mem,
            Metric::DiskReq => s.disk_req,
            Metric::DiskKb => s.disk_kb,
            Metric::NetKb => s.net_kb,
        }
    }
}

impl FromStr for Metric {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ModelError::UnknownName(s.to_string()))
    }
}

/// One regressor column. Serialized as `cpu`, `batt_rate^2` or
/// `batt_rate:brightness`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    Raw(Metric),
    Squared(Metric),
    Interaction(Metric, Metric),
}

impl Term {
    pub fn value(self, s: &MetricsSample) -> f64 {
        match self {
            Term::Raw(m) => m.value(s),
            Term::Squared(m) => {
                let v = m.value(s);
                v * v
            }
            Term::Interaction(a, b) => a.value(s) * b.value(s),
        }
    }

    /// The bare charging flag is a bounded indicator and is not standardized.
    pub fn is_indicator(self) -> bool {
        matches!(self, Term::Raw(Metric::Charging))
    }

    fn same_column(self, other: Term) -> bool {
        match (self, other) {
            (Term::Interaction(a, b), Term::Interaction(c, d)) => (a, b) == (c, d) || (a, b) == (d, c),
            _ => self == other,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Raw(m) => write!(f, "{}", m.name()),
            Term::Squared(m) => write!(f, "{}^2", m.name()),
            Term::Interaction(a, b) => write!(f, "{}:{}", a.name(), b.name()),
        }
    }
}

impl FromStr for Term {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(base) = s.strip_suffix("^2") {
            return Ok(Term::Squared(base.parse()?));
        }
        if let Some((a, b)) = s.split_once(':') {
            return Ok(Term::Interaction(a.parse()?, b.parse()?));
        }
        Ok(Term::Raw(s.parse()?))
    }
}

impl TryFrom<String> for Term {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureSpec")]
pub struct FeatureSpec {
    pub os: Os,
    pub mode: PowerMode,
    terms: Vec<Term>,
}

#[derive(Deserialize)]
struct RawFeatureSpec {
    os: Os,
    mode: PowerMode,
    terms: Vec<Term>,
}

impl TryFrom<RawFeatureSpec> for FeatureSpec {
    type Error = ModelError;
    fn try_from(r: RawFeatureSpec) -> Result<Self, Self::Error> {
        FeatureSpec::new(r.os, r.mode, r.terms)
    }
}

impl FeatureSpec {
    pub fn new(os: Os, mode: PowerMode, terms: Vec<Term>) -> Result<Self, ModelError> {
        if terms.is_empty() {
            return Err(ModelError::InvalidSpec("no feature terms".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].iter().any(|u| u.same_column(*t)) {
                return Err(ModelError::InvalidSpec(format!("duplicate term {t}")));
            }
        }
        Ok(Self { os, mode, terms })
    }

    /// The feature list selected for `os` (identical for both modes).
    pub fn builtin(os: Os, mode: PowerMode) -> Self {
        use Metric::*;
        let mut terms = vec![
            Term::Raw(BattRate),
            Term::Squared(BattRate),
            Term::Interaction(BattRate, Brightness),
            Term::Interaction(BattRate, BattRemaining),
            Term::Raw(Charging),
            Term::Raw(Cpu),
            Term::Raw(Mem),
            Term::Raw(BattRemaining),
            Term::Raw(NetKb),
            Term::Raw(DiskReq),
        ];
        if os == Os::Ubuntu {
            terms.remove(2);
        }
        Self { os, mode, terms }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Raw (unstandardized) feature vector ordered as `spec.terms()`.
pub fn build_features(sample: &MetricsSample, spec: &FeatureSpec) -> Vec<f64> {
    spec.terms().iter().map(|t| t.value(sample)).collect()
}
