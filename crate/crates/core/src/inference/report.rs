use serde::{Deserialize, Serialize};

/// Inference method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Splitting,
    CdfSov,
    MleSov,
    HitAndRun,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Splitting => "splitting",
            Self::CdfSov => "cdf-sov",
            Self::MleSov => "mle-sov",
            Self::HitAndRun => "hit-and-run",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "splitting" => Ok(Self::Splitting),
            "cdf-sov" => Ok(Self::CdfSov),
            "mle-sov" => Ok(Self::MleSov),
            "hit-and-run" => Ok(Self::HitAndRun),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

/// Inference for one selected coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateInference {
    /// Column index in the design.
    pub index: usize,
    pub estimate: f64,
    /// Two-sided p-value for a zero coefficient.
    pub pvalue: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Monte Carlo standard error of the p-values at the interval ends.
    pub stderr: f64,
    /// Smallest effective sample size behind the interval.
    pub min_ess: Option<f64>,
    /// Set when the importance weights degenerate or the CDF is not monotone.
    pub flagged: bool,
}

impl CoordinateInference {
    pub fn length(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub method: Method,
    pub entries: Vec<CoordinateInference>,
}
