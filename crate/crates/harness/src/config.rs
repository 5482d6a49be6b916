//! Experiment configuration: flat `key = value` files plus CLI overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ewkit_core::{ConvexDomain, Flavor};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Kt,
    EgPm,
    Gd,
    StronglyConvex,
    Ons,
    IProd,
    Squint,
    CoinBetting,
    Bandit,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Kt,
        Algorithm::EgPm,
        Algorithm::Gd,
        Algorithm::StronglyConvex,
        Algorithm::Ons,
        Algorithm::IProd,
        Algorithm::Squint,
        Algorithm::CoinBetting,
        Algorithm::Bandit,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Kt => "kt",
            Algorithm::EgPm => "egpm",
            Algorithm::Gd => "gd",
            Algorithm::StronglyConvex => "strongly-convex",
            Algorithm::Ons => "ons",
            Algorithm::IProd => "iprod",
            Algorithm::Squint => "squint",
            Algorithm::CoinBetting => "coin-betting",
            Algorithm::Bandit => "bandit",
        }
    }

    pub fn is_experts(self) -> bool {
        matches!(self, Algorithm::IProd | Algorithm::Squint | Algorithm::CoinBetting)
    }

    fn default_adversary(self) -> AdversaryKind {
        match self {
            Algorithm::Kt => AdversaryKind::LogLossBernoulli,
            Algorithm::EgPm | Algorithm::Gd => AdversaryKind::IidLinear,
            Algorithm::StronglyConvex => AdversaryKind::StronglyConvexQuadratic,
            Algorithm::Ons => AdversaryKind::ExpConcave,
            Algorithm::IProd | Algorithm::Squint | Algorithm::CoinBetting => AdversaryKind::ExpertsBounded,
            Algorithm::Bandit => AdversaryKind::BanditLinear,
        }
    }

    fn compatible(self, adversary: AdversaryKind) -> bool {
        use AdversaryKind::*;
        match self {
            Algorithm::Kt => adversary == LogLossBernoulli,
            Algorithm::EgPm | Algorithm::Gd => matches!(adversary, IidLinear | AdaptiveLinear | Zero),
            Algorithm::StronglyConvex => adversary == StronglyConvexQuadratic,
            Algorithm::Ons => adversary == ExpConcave,
            Algorithm::IProd | Algorithm::Squint | Algorithm::CoinBetting => {
                matches!(adversary, ExpertsBounded | ExpertsLowVariance | Zero)
            }
            Algorithm::Bandit => matches!(adversary, BanditLinear | Zero),
        }
    }

    fn default_dim(self) -> usize {
        match self {
            Algorithm::Kt => 1,
            Algorithm::EgPm | Algorithm::Bandit => 2,
            Algorithm::Gd | Algorithm::StronglyConvex | Algorithm::Ons => 5,
            Algorithm::IProd | Algorithm::Squint | Algorithm::CoinBetting => 10,
        }
    }

    fn default_horizon(self) -> usize {
        match self {
            Algorithm::StronglyConvex | Algorithm::Ons => 2000,
            Algorithm::Bandit => 10_000,
            _ => 1000,
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdversaryKind {
    IidLinear,
    AdaptiveLinear,
    StronglyConvexQuadratic,
    LogLossBernoulli,
    /// `f(w) = -ln(1 + <w, x>)`, 1-exp-concave.
    ExpConcave,
    ExpertsBounded,
    ExpertsLowVariance,
    BanditLinear,
    Zero,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 9] = [
        AdversaryKind::IidLinear,
        AdversaryKind::AdaptiveLinear,
        AdversaryKind::StronglyConvexQuadratic,
        AdversaryKind::LogLossBernoulli,
        AdversaryKind::ExpConcave,
        AdversaryKind::ExpertsBounded,
        AdversaryKind::ExpertsLowVariance,
        AdversaryKind::BanditLinear,
        AdversaryKind::Zero,
    ];

    pub fn id(self) -> &'static str {
        match self {
            AdversaryKind::IidLinear => "iid-linear",
            AdversaryKind::AdaptiveLinear => "adaptive-linear",
            AdversaryKind::StronglyConvexQuadratic => "strongly-convex-quadratic",
            AdversaryKind::LogLossBernoulli => "log-loss-bernoulli",
            AdversaryKind::ExpConcave => "exp-concave",
            AdversaryKind::ExpertsBounded => "experts-bounded",
            AdversaryKind::ExpertsLowVariance => "experts-low-variance",
            AdversaryKind::BanditLinear => "bandit-linear",
            AdversaryKind::Zero => "zero",
        }
    }
}

impl FromStr for AdversaryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AdversaryKind::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| format!("unknown adversary `{s}`"))
    }
}

/// Action set for the vector-valued algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Ball,
    /// Centered box `[-radius, radius]^d`.
    Box,
}

/// Learning-rate choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSpec {
    /// The algorithm's own tuning for the configured horizon.
    Tuned,
    Constant(f64),
    /// `eta_t = c / sqrt(t)`.
    InverseSqrt(f64),
}

impl FromStr for EtaSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "tuned" {
            return Ok(EtaSpec::Tuned);
        }
        let positive = |v: &str| -> std::result::Result<f64, String> {
            let x: f64 = v.parse().map_err(|_| format!("bad learning rate `{s}`"))?;
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(format!("learning rate `{s}` must be positive"))
            }
        };
        match s.strip_prefix("sqrt:") {
            Some(c) => positive(c).map(EtaSpec::InverseSqrt),
            None => positive(s).map(EtaSpec::Constant),
        }
    }
}

impl fmt::Display for EtaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaSpec::Tuned => f.write_str("tuned"),
            EtaSpec::Constant(x) => write!(f, "{x}"),
            EtaSpec::InverseSqrt(c) => write!(f, "sqrt:{c}"),
        }
    }
}

pub const KEYS: [&str; 20] = [
    "algo",
    "adversary",
    "dim",
    "horizon",
    "seed",
    "replicates",
    "domain",
    "radius",
    "grad_bound",
    "scale",
    "alpha",
    "diameter",
    "sigma2",
    "eta",
    "flavor",
    "nu",
    "moment_samples",
    "exact_moment",
    "clip_regrets",
    "out",
];

/// One experiment. Unset optional fields take algorithm-dependent defaults
/// through the accessor methods.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub adversary: Option<AdversaryKind>,
    pub dim: Option<usize>,
    pub horizon: Option<usize>,
    pub seed: u64,
    pub replicates: usize,
    pub domain: DomainKind,
    /// Ball radius or box half-width.
    pub radius: f64,
    /// Declared gradient bound `G`.
    pub grad_bound: Option<f64>,
    /// `M` for EG+-.
    pub scale: f64,
    pub alpha: Option<f64>,
    /// Declared diameter `B`.
    pub diameter: Option<f64>,
    pub sigma2: f64,
    pub eta: EtaSpec,
    pub flavor: Flavor,
    pub nu: Option<f64>,
    pub moment_samples: usize,
    pub exact_moment: bool,
    pub clip_regrets: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_algorithm(Algorithm::Gd)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(config_err(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            adversary: None,
            dim: None,
            horizon: None,
            seed: 0,
            replicates: 1,
            domain: DomainKind::Ball,
            radius: 1.0,
            grad_bound: None,
            scale: 1.0,
            alpha: None,
            diameter: None,
            sigma2: 1.0,
            eta: EtaSpec::Tuned,
            flavor: Flavor::Greedy,
            nu: None,
            moment_samples: 4096,
            exact_moment: false,
            clip_regrets: false,
            out: None,
        }
    }

    /// Parses a config file body. Later lines override earlier ones.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", n + 1)))?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        // the algorithm fixes defaults, so it is applied first
        let mut config = match pairs.iter().rev().find(|(k, _)| k == "algo") {
            Some((_, v)) => Self::for_algorithm(parse("algo", v)?),
            None => Self::default(),
        };
        for (k, v) in &pairs {
            config.set(k, v)?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "algo" => self.algorithm = parse(key, value)?,
            "adversary" => self.adversary = Some(value.parse().map_err(config_err)?),
            "dim" => self.dim = Some(parse(key, value)?),
            "horizon" => self.horizon = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            "replicates" => self.replicates = parse(key, value)?,
            "domain" => {
                self.domain = match value {
                    "ball" => DomainKind::Ball,
                    "box" => DomainKind::Box,
                    _ => return Err(config_err(format!("unknown domain `{value}`"))),
                }
            }
            "radius" => self.radius = parse(key, value)?,
            "grad_bound" => self.grad_bound = Some(parse(key, value)?),
            "scale" => self.scale = parse(key, value)?,
            "alpha" => self.alpha = Some(parse(key, value)?),
            "diameter" => self.diameter = Some(parse(key, value)?),
            "sigma2" => self.sigma2 = parse(key, value)?,
            "eta" => self.eta = value.parse().map_err(config_err)?,
            "flavor" => {
                self.flavor = match value {
                    "lazy" => Flavor::Lazy,
                    "greedy" => Flavor::Greedy,
                    _ => return Err(config_err(format!("unknown flavor `{value}`"))),
                }
            }
            "nu" => self.nu = Some(parse(key, value)?),
            "moment_samples" => self.moment_samples = parse(key, value)?,
            "exact_moment" => self.exact_moment = parse_bool(key, value)?,
            "clip_regrets" => self.clip_regrets = parse_bool(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(config_err(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn adversary(&self) -> AdversaryKind {
        self.adversary.unwrap_or(self.algorithm.default_adversary())
    }

    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(self.algorithm.default_dim())
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(self.algorithm.default_horizon())
    }

    pub fn action_domain(&self) -> Result<ConvexDomain> {
        let domain = match self.domain {
            DomainKind::Ball => ConvexDomain::ball(self.radius),
            DomainKind::Box => ConvexDomain::centered_box(self.dim(), self.radius),
        };
        domain.map_err(|e| config_err(e.to_string()))
    }

    /// `D = max |w|_2` over the action domain.
    pub fn max_norm(&self) -> f64 {
        match self.domain {
            DomainKind::Ball => self.radius,
            DomainKind::Box => self.radius * (self.dim() as f64).sqrt(),
        }
    }

    /// Declared diameter `B`, defaulting to the domain's.
    pub fn diameter(&self) -> f64 {
        self.diameter.unwrap_or(2.0 * self.max_norm())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(1.0)
    }

    /// Declared gradient bound, defaulting to what the adversary can emit.
    pub fn grad_bound(&self) -> f64 {
        self.grad_bound.unwrap_or(match self.adversary() {
            AdversaryKind::StronglyConvexQuadratic => 2.0 * self.alpha() * self.max_norm(),
            AdversaryKind::ExpConcave => 1.0 / self.max_norm(),
            _ => 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let adversary = self.adversary();
        if !self.algorithm.compatible(adversary) {
            return Err(config_err(format!(
                "adversary `{}` does not fit algorithm `{}`",
                adversary.id(),
                self.algorithm
            )));
        }
        if self.horizon() == 0 {
            return Err(config_err("horizon must be at least 1"));
        }
        if self.dim() == 0 {
            return Err(config_err("dim must be at least 1"));
        }
        if self.algorithm == Algorithm::Kt && self.dim() != 1 {
            return Err(config_err("kt is one-dimensional"));
        }
        if self.replicates == 0 {
            return Err(config_err("replicates must be at least 1"));
        }
        for (name, x) in [
            ("radius", self.radius),
            ("scale", self.scale),
            ("sigma2", self.sigma2),
            ("grad_bound", self.grad_bound()),
            ("alpha", self.alpha()),
            ("diameter", self.diameter()),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(config_err(format!("`{name}` must be positive and finite")));
            }
        }
        if self.diameter() < 2.0 * self.max_norm() * (1.0 - 1e-12) {
            return Err(config_err(format!(
                "declared diameter {} is below the domain's {}",
                self.diameter(),
                2.0 * self.max_norm()
            )));
        }
        if adversary == AdversaryKind::ExpConcave && self.alpha() > 1.0 {
            return Err(config_err("the exp-concave adversary is only 1-exp-concave"));
        }
        let needs_constant = matches!(self.algorithm, Algorithm::StronglyConvex | Algorithm::Ons);
        if needs_constant && matches!(self.eta, EtaSpec::InverseSqrt(_)) {
            return Err(config_err("quadratic surrogates need a constant learning rate"));
        }
        if self.algorithm == Algorithm::Bandit {
            if self.horizon() < 2 {
                return Err(config_err("bandit tuning needs horizon >= 2"));
            }
            if !self.exact_moment && self.moment_samples < 1000 {
                return Err(config_err("moment_samples must be at least 1000"));
            }
            if let Some(nu) = self.nu {
                if !(nu > 0.0) {
                    return Err(config_err("nu must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Flat `key = value` rendering that parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("algo", self.algorithm.id().into());
        line("adversary", self.adversary().id().into());
        line("dim", self.dim().to_string());
        line("horizon", self.horizon().to_string());
        line("seed", self.seed.to_string());
        line("replicates", self.replicates.to_string());
        line(
            "domain",
            match self.domain {
                DomainKind::Ball => "ball".into(),
                DomainKind::Box => "box".into(),
            },
        );
        line("radius", format!("{:?}", self.radius));
        line("grad_bound", format!("{:?}", self.grad_bound()));
        line("scale", format!("{:?}", self.scale));
        line("alpha", format!("{:?}", self.alpha()));
        line("diameter", format!("{:?}", self.diameter()));
        line("sigma2", format!("{:?}", self.sigma2));
        line("eta", self.eta.to_string());
        line("flavor", self.flavor.name().into());
        if let Some(nu) = self.nu {
            line("nu", format!("{nu:?}"));
        }
        line("moment_samples", self.moment_samples.to_string());
        line("exact_moment", self.exact_moment.to_string());
        line("clip_regrets", self.clip_regrets.to_string());
        if let Some(out) = &self.out {
            line("out", out.display().to_string());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_comments() {
        let c = ExperimentConfig::parse_str(
            "# header\nalgo = kt\nhorizon = 100 # short run\n\nseed=7\n",
        )
        .unwrap();
        assert_eq!(c.algorithm, Algorithm::Kt);
        assert_eq!(c.horizon(), 100);
        assert_eq!(c.seed, 7);
        assert_eq!(c.adversary(), AdversaryKind::LogLossBernoulli);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(ExperimentConfig::parse_str("colour = red").is_err());
        assert!(ExperimentConfig::parse_str("algo = nope").is_err());
        assert!(ExperimentConfig::parse_str("eta = -1").is_err());
        assert!(ExperimentConfig::parse_str("no equals sign").is_err());
    }

    #[test]
    fn rejects_incompatible_adversary() {
        let c = ExperimentConfig::parse_str("algo = kt\nadversary = iid-linear").unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let c = ExperimentConfig::parse_str("algo = ons\neta = sqrt:0.5").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::for_algorithm(Algorithm::Bandit);
        c.set("eta", "sqrt:0.25").unwrap();
        c.set("domain", "box").unwrap();
        c.set("nu", "3").unwrap();
        let back = ExperimentConfig::parse_str(&c.to_text()).unwrap();
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn eta_specs() {
        assert_eq!("tuned".parse::<EtaSpec>().unwrap(), EtaSpec::Tuned);
        assert_eq!("0.5".parse::<EtaSpec>().unwrap(), EtaSpec::Constant(0.5));
        assert_eq!("sqrt:2".parse::<EtaSpec>().unwrap(), EtaSpec::InverseSqrt(2.0));
        assert!("sqrt:0".parse::<EtaSpec>().is_err());
    }
}
