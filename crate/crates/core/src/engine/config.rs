use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{MixtureParams, VARIANCE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ml,
    Ridge,
    LtItr,
    LtHkp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ml, Method::Ridge, Method::LtHkp, Method::LtItr];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::Ridge => "ridge",
            Method::LtItr => "lt-itr",
            Method::LtHkp => "lt-hkp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Em,
    Cem,
    Sem,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Em, Engine::Cem, Engine::Sem];

    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Em => "em",
            Engine::Cem => "cem",
            Engine::Sem => "sem",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?} (expected ml, ridge, lt-itr, lt-hkp)")))
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown engine {s:?} (expected em, cem, sem)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Uniform random assignment followed by one partitioned ML M-step.
    RandomPartition,
    /// 1-D k-means on pooled OLS residuals followed by one partitioned ML M-step.
    KMeansLike,
    Supplied(MixtureParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub method: Method,
    pub engine: Engine,
    pub n_components: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub seed: u64,
    pub variance_floor: f64,
    pub penalize_intercept: bool,
    pub init: Init,
    /// Use σ̂ instead of σ̂² in the LT(HKP) k rule.
    pub hkp_uses_sd: bool,
    /// Use the literal d̂ display instead of the ridge-plug-in optimum.
    pub dj_literal: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: Method::Ml,
            engine: Engine::Em,
            n_components: 2,
            tol: 1e-6,
            max_iter: 500,
            n_starts: 5,
            seed: 0,
            variance_floor: VARIANCE_FLOOR,
            penalize_intercept: true,
            init: Init::RandomPartition,
            hkp_uses_sd: false,
            dj_literal: false,
        }
    }
}

impl FitConfig {
    pub fn new(method: Method, engine: Engine, n_components: usize) -> Self {
        Self {
            method,
            engine,
            n_components,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_components < 1 {
            problems.push("n_components must be >= 1".to_string());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            problems.push(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter < 1 {
            problems.push("max_iter must be >= 1".to_string());
        }
        if self.n_starts < 1 {
            problems.push("n_starts must be >= 1".to_string());
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            problems.push(format!("variance_floor must be positive, got {}", self.variance_floor));
        }
        if let Init::Supplied(p) = &self.init {
            if p.n_components() != self.n_components {
                problems.push(format!(
                    "supplied init has {} components but n_components = {}",
                    p.n_components(),
                    self.n_components
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.method, self.engine)
    }
}
