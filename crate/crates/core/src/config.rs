//! XML model assembly.
//!
//! A configuration names one block of each kind — run settings, random
//! number generator, excess-demand calculator, price calculator, output — and
//! one or more agent blocks:
//!
//! ```xml
//! <simulation>
//!   <settings>
//!     <numSteps>10000</numSteps> <deltaT>4e-5</deltaT> <startPrice>1</startPrice>
//!     <repetitions>20</repetitions> <seed>42</seed>
//!   </settings>
//!   <randomNumberGenerator><mode>pooled</mode><poolSize>65536</poolSize></randomNumberGenerator>
//!   <agents>
//!     <AgentCross><count>1000</count><A1>0.1</A1><A2>0.3</A2><b1>25</b1><b2>100</b2></AgentCross>
//!   </agents>
//!   <excessDemandCalculatorSettings>
//!     <excessDemandCalculatorClass>ExcessDemandCalculatorMean</excessDemandCalculatorClass>
//!   </excessDemandCalculatorSettings>
//!   <priceCalculatorSettings>
//!     <priceCalculatorClass>PriceCalculatorCross</priceCalculatorClass>
//!     <theta>0</theta><marketDepth>0.2</marketDepth>
//!   </priceCalculatorSettings>
//!   <output><format>csv</format><directory>out</directory></output>
//! </simulation>
//! ```
//!
//! The full element reference lives in the repository README.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use roxmltree::{Document, Node};
use thiserror::Error;

use crate::agents::{
    CrossParams, HarrasParams, LlsGroup, LlsParams, MemoryScaling, OpinionVariant, ReturnDenominator, WealthExtension,
};
use crate::market::{BisectionSettings, Diffusion, Drift, ExcessDemandCalculator, PriceRule};
use crate::rng::{Algorithm, GenerationMode, GeneratorSpec};

/// Environment variable overriding the configured master seed.
pub const SEED_ENV: &str = "SABCEMM_SEED";
pub const DEFAULT_POOL_SIZE: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("{path}: unknown element")]
    UnknownElement { path: String },
    #[error("{path}: unknown class `{class}`")]
    UnknownClass { path: String, class: String },
    #[error("{path}: missing required element")]
    MissingKey { path: String },
    #[error("{path}: expected {expected}, found `{value}`")]
    TypeMismatch { path: String, value: String, expected: &'static str },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("invalid assembly: {0}")]
    Structure(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("sweep: {0}")]
    Sweep(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentBlock {
    Cross { count: usize, params: CrossParams },
    Lls { params: LlsParams },
    Harras { count: usize, params: HarrasParams },
}

impl AgentBlock {
    pub fn class_name(&self) -> &'static str {
        match self {
            AgentBlock::Cross { .. } => "AgentCross",
            AgentBlock::Lls { .. } => "AgentLLS",
            AgentBlock::Harras { .. } => "AgentHarras",
        }
    }

    /// Capability tag: can the block re-evaluate itself at a candidate price?
    pub fn bisection_capable(&self) -> bool {
        matches!(self, AgentBlock::Lls { .. })
    }

    pub fn agent_count(&self) -> usize {
        match self {
            AgentBlock::Cross { count, .. } | AgentBlock::Harras { count, .. } => *count,
            AgentBlock::Lls { params } => params.groups.iter().map(|g| g.count).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub num_steps: usize,
    pub delta_t: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub initial_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    /// One directory of CSV files per run.
    #[default]
    Csv,
    /// One HDF5 container per run.
    Container,
}

impl FromStr for OutputFormat {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "hdf5" | "container" => Ok(OutputFormat::Container),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub format: OutputFormat,
    pub directory: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { format: OutputFormat::Csv, directory: PathBuf::from("output") }
    }
}

/// Verbatim configuration text; ignored by equality so that a parsed
/// configuration compares equal to its re-serialisation.
#[derive(Debug, Clone, Default)]
pub struct SourceText(pub Option<String>);

impl PartialEq for SourceText {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub run: RunPlan,
    pub rng: GeneratorSpec,
    pub agents: Vec<AgentBlock>,
    pub ed_calculator: ExcessDemandCalculator,
    pub price_rule: PriceRule,
    pub output: OutputSpec,
    /// Observables to record; `None` records all.
    pub record: Option<Vec<String>>,
    pub source: SourceText,
}

impl SimulationConfig {
    /// Structural checks, see [`validate_assembly`].
    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_assembly(self)
    }

    /// Verbatim input when parsed from text, the canonical XML otherwise.
    pub fn source_text(&self) -> String {
        self.source.0.clone().unwrap_or_else(|| to_xml(self))
    }

    pub fn agent_count(&self) -> usize {
        self.agents.iter().map(AgentBlock::agent_count).sum()
    }

    /// Cross base model: 1000 agents, 10⁴ steps of `Δt = 4·10⁻⁵`, `θ = 0`,
    /// `κ = 0.2`, pooled generator.
    pub fn cross_basic() -> Self {
        Self {
            run: RunPlan { num_steps: 10_000, delta_t: 4e-5, repetitions: 1, seed: 20160601, initial_price: 1.0 },
            rng: GeneratorSpec::pooled(20160601, DEFAULT_POOL_SIZE),
            agents: vec![AgentBlock::Cross { count: 1000, params: CrossParams::basic() }],
            ed_calculator: ExcessDemandCalculator::Mean,
            price_rule: PriceRule::CrossExponential { theta: 0.0, kappa: 0.2 },
            output: OutputSpec::default(),
            record: None,
            source: SourceText(None),
        }
    }

    /// Single-group LLS model (100 investors, memory 15, 200 steps) cleared
    /// by bisection with bounds relative to the previous price.
    pub fn lls_basic(sigma_gamma: f64) -> Self {
        let mut params = LlsParams::basic(sigma_gamma);
        params.denominator = ReturnDenominator::Previous;
        Self {
            run: RunPlan { num_steps: 200, delta_t: 1.0, repetitions: 1, seed: 20160601, initial_price: 4.0 },
            agents: vec![AgentBlock::Lls { params }],
            price_rule: PriceRule::Bisection(BisectionSettings {
                epsilon: 0.1,
                max_iterations: 10_000,
                lower_bound: 1e-6,
                upper_bound: 1e6,
                relative_bounds: true,
            }),
            ..Self::cross_basic()
        }
    }

    /// Harras model on a 50×50 lattice, 10⁴ steps, `C1 = 0`.
    pub fn harras_basic() -> Self {
        let params = HarrasParams::basic();
        Self {
            run: RunPlan { num_steps: 10_000, delta_t: 1.0, repetitions: 1, seed: 20160601, initial_price: 1.0 },
            agents: vec![AgentBlock::Harras { count: 2500, params }],
            ed_calculator: ExcessDemandCalculator::Harras { lambda: params.lambda },
            price_rule: PriceRule::HarrasLog,
            ..Self::cross_basic()
        }
    }

    /// Resizes a single-block model to `n` agents. LLS groups are filled
    /// evenly, earlier groups taking the remainder. The verbatim source is
    /// dropped since it no longer describes the model.
    pub fn set_agent_count(&mut self, n: usize) -> Result<(), ConfigError> {
        let [block] = self.agents.as_mut_slice() else {
            return Err(ConfigError::Structure("resizing needs exactly one agent block".into()));
        };
        match block {
            AgentBlock::Cross { count, .. } | AgentBlock::Harras { count, .. } => *count = n,
            AgentBlock::Lls { params } => {
                let k = params.groups.len();
                for (i, g) in params.groups.iter_mut().enumerate() {
                    g.count = n / k + usize::from(i < n % k);
                }
            }
        }
        self.source = SourceText(None);
        validate_assembly(self)
    }
}

/// Structural validation: block combinations and parameter domains. Whether
/// a combination is a scientifically sensible model is left to the user.
pub fn validate_assembly(config: &SimulationConfig) -> Result<(), ConfigError> {
    let structure = |m: String| Err(ConfigError::Structure(m));
    if config.agents.is_empty() {
        return structure("at least one agent block is required".into());
    }
    if config.price_rule.is_rational() {
        if let Some(b) = config.agents.iter().find(|b| !b.bisection_capable()) {
            return structure(format!(
                "PriceCalculatorBisection needs bisection-capable agents, but {} is not",
                b.class_name()
            ));
        }
    }
    let run = &config.run;
    if !(run.delta_t > 0.0) || !run.delta_t.is_finite() {
        return structure(format!("deltaT must be positive, got {}", run.delta_t));
    }
    if !(run.initial_price > 0.0) || !run.initial_price.is_finite() {
        return structure(format!("startPrice must be positive, got {}", run.initial_price));
    }
    if run.repetitions == 0 {
        return structure("repetitions must be at least 1".into());
    }
    config.rng.validate().map_err(|e| ConfigError::Structure(e.to_string()))?;
    match config.ed_calculator {
        ExcessDemandCalculator::Harras { lambda } if !(lambda > 0.0) => {
            return structure(format!("marketDepth of the excess demand calculator must be positive, got {lambda}"));
        }
        _ => {}
    }
    match config.price_rule {
        PriceRule::CrossExponential { theta, kappa } => {
            if !(theta >= 0.0) || !(kappa > 0.0) {
                return structure("PriceCalculatorCross needs theta >= 0 and marketDepth > 0".into());
            }
        }
        PriceRule::GeneralSde { drift, diffusion } => {
            if let Drift::EdDerivative { market_depth } = drift {
                if !(market_depth > 0.0) {
                    return structure(format!("PriceCalculatorGeneral needs marketDepth > 0, got {market_depth}"));
                }
            }
            if let Diffusion::CrossHeteroskedastic { theta } = diffusion {
                if !(theta >= 0.0) {
                    return structure("PriceCalculatorGeneral needs theta >= 0".into());
                }
            }
        }
        PriceRule::Bisection(b) => {
            if !(b.epsilon > 0.0) || b.max_iterations == 0 {
                return structure("bisection needs epsilon > 0 and maxIterations >= 1".into());
            }
            if !(b.lower_bound > 0.0 && b.lower_bound < b.upper_bound) {
                return structure(format!(
                    "bisection bounds need 0 < lowerBound < upperBound, got [{}, {}]",
                    b.lower_bound, b.upper_bound
                ));
            }
        }
        _ => {}
    }
    for (i, block) in config.agents.iter().enumerate() {
        let checked = match block {
            AgentBlock::Cross { count, params } => {
                if *count == 0 {
                    return structure(format!("agent block {i}: count must be at least 1"));
                }
                params.validate()
            }
            AgentBlock::Lls { params } => params.validate(run.delta_t),
            AgentBlock::Harras { count, params } => {
                let side = (*count as f64).sqrt().round() as usize;
                if *count == 0 || side * side != *count {
                    return structure(format!("agent block {i}: AgentHarras count {count} is not a perfect square"));
                }
                params.validate()
            }
        };
        checked.map_err(|e| ConfigError::Structure(format!("agent block {i} ({}): {e}", block.class_name())))?;
    }
    Ok(())
}

/// Reads and parses a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<SimulationConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config_str(&text)
}

/// [`parse_config`] followed by the [`SEED_ENV`] override.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimulationConfig, ConfigError> {
    let mut config = parse_config(path)?;
    apply_seed_override(&mut config, std::env::var(SEED_ENV).ok().as_deref())?;
    Ok(config)
}

pub fn apply_seed_override(config: &mut SimulationConfig, value: Option<&str>) -> Result<(), ConfigError> {
    if let Some(v) = value {
        config.run.seed = v.trim().parse().map_err(|_| ConfigError::TypeMismatch {
            path: SEED_ENV.into(),
            value: v.into(),
            expected: "unsigned 64-bit integer",
        })?;
    }
    Ok(())
}

/// Element with its slash-separated path, for diagnostics.
#[derive(Clone, Copy)]
struct Element<'a, 'input> {
    node: Node<'a, 'input>,
}

fn element_path(node: Node) -> String {
    let mut parts: Vec<&str> = node.ancestors().filter(|n| n.is_element()).map(|n| n.tag_name().name()).collect();
    parts.reverse();
    parts.join("/")
}

impl<'a, 'input> Element<'a, 'input> {
    fn path(&self) -> String {
        element_path(self.node)
    }

    fn children(&self) -> impl Iterator<Item = Node<'a, 'input>> {
        self.node.children().filter(|n| n.is_element())
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for child in self.children() {
            if !allowed.contains(&child.tag_name().name()) {
                return Err(ConfigError::UnknownElement { path: element_path(child) });
            }
        }
        Ok(())
    }

    fn child(&self, name: &str) -> Option<Element<'a, 'input>> {
        self.children().find(|n| n.tag_name().name() == name).map(|node| Element { node })
    }

    fn required_child(&self, name: &str) -> Result<Element<'a, 'input>, ConfigError> {
        self.child(name).ok_or_else(|| ConfigError::MissingKey { path: format!("{}/{name}", self.path()) })
    }

    fn text(&self) -> String {
        self.node.children().filter(|n| n.is_text()).filter_map(|n| n.text()).collect::<String>().trim().to_string()
    }

    fn parse<T: FromStr>(&self, expected: &'static str) -> Result<T, ConfigError> {
        let value = self.text();
        value.parse().map_err(|_| ConfigError::TypeMismatch { path: self.path(), value, expected })
    }

    fn req<T: ConfigValue>(&self, name: &str) -> Result<T, ConfigError> {
        self.required_child(name)?.parse(T::EXPECTED)
    }

    fn opt<T: ConfigValue>(&self, name: &str, default: T) -> Result<T, ConfigError> {
        match self.child(name) {
            Some(c) => c.parse(T::EXPECTED),
            None => Ok(default),
        }
    }

    fn opt_choice<T: Copy>(&self, name: &str, default: T, choices: &[(&str, T)]) -> Result<T, ConfigError> {
        let Some(c) = self.child(name) else { return Ok(default) };
        let value = c.text();
        choices.iter().find(|(k, _)| *k == value).map(|(_, v)| *v).ok_or_else(|| ConfigError::TypeMismatch {
            path: c.path(),
            value,
            expected: "one of the documented choices",
        })
    }
}

trait ConfigValue: FromStr {
    const EXPECTED: &'static str;
}
impl ConfigValue for f64 {
    const EXPECTED: &'static str = "a real number";
}
impl ConfigValue for usize {
    const EXPECTED: &'static str = "a non-negative integer";
}
impl ConfigValue for u64 {
    const EXPECTED: &'static str = "an unsigned 64-bit integer";
}
impl ConfigValue for bool {
    const EXPECTED: &'static str = "true or false";
}

/// Parses configuration text; the text is kept verbatim in the result.
pub fn parse_config_str(text: &str) -> Result<SimulationConfig, ConfigError> {
    let doc = Document::parse(text).map_err(|e| ConfigError::Xml(e.to_string()))?;
    let root = Element { node: doc.root_element() };
    if root.node.tag_name().name() != "simulation" {
        return Err(ConfigError::UnknownElement { path: root.path() });
    }
    root.check_keys(&[
        "settings",
        "randomNumberGenerator",
        "agents",
        "excessDemandCalculatorSettings",
        "priceCalculatorSettings",
        "output",
        "record",
    ])?;

    let settings = root.required_child("settings")?;
    settings.check_keys(&["numSteps", "deltaT", "startPrice", "repetitions", "seed"])?;
    let run = RunPlan {
        num_steps: settings.req("numSteps")?,
        delta_t: settings.req("deltaT")?,
        initial_price: settings.req("startPrice")?,
        repetitions: settings.opt("repetitions", 1)?,
        seed: settings.opt("seed", 0)?,
    };

    let rng = match root.child("randomNumberGenerator") {
        None => GeneratorSpec::on_the_fly(run.seed),
        Some(r) => {
            r.check_keys(&["algorithm", "mode", "poolSize"])?;
            let algorithm = r.opt_choice(
                "algorithm",
                Algorithm::Mt19937_64,
                &[("mt19937_64", Algorithm::Mt19937_64), ("mersenne-twister-19937-64", Algorithm::Mt19937_64)],
            )?;
            let pooled = r.opt_choice("mode", false, &[("on-the-fly", false), ("pooled", true)])?;
            let pool_size = r.opt("poolSize", DEFAULT_POOL_SIZE)?;
            let mode = if pooled { GenerationMode::Pooled { pool_size } } else { GenerationMode::OnTheFly };
            GeneratorSpec { algorithm, seed: run.seed, mode }
        }
    };

    let agents_el = root.required_child("agents")?;
    agents_el.check_keys(&["AgentCross", "AgentLLS", "AgentHarras"])?;
    let agents = agents_el.children().map(|node| parse_agent(Element { node })).collect::<Result<Vec<_>, _>>()?;

    let ed_calculator = match root.child("excessDemandCalculatorSettings") {
        None => ExcessDemandCalculator::Mean,
        Some(e) => {
            e.check_keys(&["excessDemandCalculatorClass", "marketDepth"])?;
            let class_el = e.required_child("excessDemandCalculatorClass")?;
            match class_el.text().as_str() {
                "ExcessDemandCalculatorMean" => ExcessDemandCalculator::Mean,
                "ExcessDemandCalculatorHarras" => ExcessDemandCalculator::Harras { lambda: e.req("marketDepth")? },
                other => return Err(ConfigError::UnknownClass { path: class_el.path(), class: other.into() }),
            }
        }
    };

    let price_rule = parse_price(root.required_child("priceCalculatorSettings")?)?;

    let output = match root.child("output") {
        None => OutputSpec::default(),
        Some(o) => {
            o.check_keys(&["format", "directory"])?;
            let format = o.opt_choice(
                "format",
                OutputFormat::Csv,
                &[
                    ("csv", OutputFormat::Csv),
                    ("hdf5", OutputFormat::Container),
                    ("container", OutputFormat::Container),
                ],
            )?;
            let directory = o.child("directory").map(|d| PathBuf::from(d.text())).unwrap_or_else(|| "output".into());
            OutputSpec { format, directory }
        }
    };

    let record = root.child("record").map(|r| {
        r.text().split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(String::from).collect()
    });

    let config = SimulationConfig {
        run,
        rng,
        agents,
        ed_calculator,
        price_rule,
        output,
        record,
        source: SourceText(Some(text.to_string())),
    };
    validate_assembly(&config)?;
    Ok(config)
}

fn parse_agent(block: Element) -> Result<AgentBlock, ConfigError> {
    match block.node.tag_name().name() {
        "AgentCross" => {
            block.check_keys(&["count", "A1", "A2", "b1", "b2", "wealth"])?;
            let wealth = match block.child("wealth") {
                None => None,
                Some(w) => {
                    w.check_keys(&["r", "gamma", "initialWealth"])?;
                    Some(WealthExtension {
                        interest_rate: w.req("r")?,
                        stock_fraction: w.req("gamma")?,
                        initial_wealth: w.opt("initialWealth", 1.0)?,
                    })
                }
            };
            let basic = CrossParams::basic();
            Ok(AgentBlock::Cross {
                count: block.req("count")?,
                params: CrossParams {
                    a1: block.opt("A1", basic.a1)?,
                    a2: block.opt("A2", basic.a2)?,
                    b1: block.opt("b1", basic.b1)?,
                    b2: block.opt("b2", basic.b2)?,
                    wealth,
                },
            })
        }
        "AgentLLS" => {
            block.check_keys(&[
                "group",
                "sigmaGamma",
                "r",
                "z1",
                "z2",
                "muH",
                "sigmaH",
                "initialWealth",
                "initialShares",
                "initialGamma",
                "initialDividend",
                "scalingMode",
                "returnDenominator",
                "noiseTruncation",
                "candidateReturnInWindow",
            ])?;
            let mut groups = Vec::new();
            for node in block.children().filter(|n| n.tag_name().name() == "group") {
                let g = Element { node };
                g.check_keys(&["count", "memory"])?;
                groups.push(LlsGroup { count: g.req("count")?, memory: g.req("memory")? });
            }
            if groups.is_empty() {
                return Err(ConfigError::MissingKey { path: format!("{}/group", block.path()) });
            }
            let d = LlsParams::basic(0.0);
            Ok(AgentBlock::Lls {
                params: LlsParams {
                    groups,
                    sigma_gamma: block.req("sigmaGamma")?,
                    interest_rate: block.req("r")?,
                    z1: block.req("z1")?,
                    z2: block.req("z2")?,
                    mu_h: block.opt("muH", d.mu_h)?,
                    sigma_h: block.opt("sigmaH", d.sigma_h)?,
                    initial_wealth: block.opt("initialWealth", d.initial_wealth)?,
                    initial_shares: block.opt("initialShares", d.initial_shares)?,
                    initial_gamma: block.opt("initialGamma", d.initial_gamma)?,
                    initial_dividend: block.req("initialDividend")?,
                    scaling: block.opt_choice(
                        "scalingMode",
                        MemoryScaling::Scaled,
                        &[("scaled", MemoryScaling::Scaled), ("fixed", MemoryScaling::Fixed)],
                    )?,
                    denominator: block.opt_choice(
                        "returnDenominator",
                        ReturnDenominator::Current,
                        &[("current", ReturnDenominator::Current), ("previous", ReturnDenominator::Previous)],
                    )?,
                    noise_truncation: block.opt("noiseTruncation", d.noise_truncation)?,
                    include_candidate_return: block.opt("candidateReturnInWindow", false)?,
                },
            })
        }
        "AgentHarras" => {
            block.check_keys(&[
                "count",
                "C1",
                "C2",
                "C3",
                "Omega",
                "g",
                "alpha",
                "lambda",
                "opinionVariant",
                "initialCash",
                "initialShares",
                "initialVariance",
            ])?;
            let d = HarrasParams::basic();
            Ok(AgentBlock::Harras {
                count: block.req("count")?,
                params: HarrasParams {
                    c1: block.opt("C1", d.c1)?,
                    c2: block.opt("C2", d.c2)?,
                    c3: block.opt("C3", d.c3)?,
                    omega: block.opt("Omega", d.omega)?,
                    g: block.opt("g", d.g)?,
                    alpha: block.opt("alpha", d.alpha)?,
                    lambda: block.opt("lambda", d.lambda)?,
                    initial_cash: block.opt("initialCash", d.initial_cash)?,
                    initial_shares: block.opt("initialShares", d.initial_shares)?,
                    initial_variance: block.opt("initialVariance", d.initial_variance)?,
                    opinion: block.opt_choice(
                        "opinionVariant",
                        OpinionVariant::NormalizedQuarter,
                        &[
                            ("normalized-quarter", OpinionVariant::NormalizedQuarter),
                            ("paper-eq", OpinionVariant::PaperEq),
                        ],
                    )?,
                },
            })
        }
        _ => Err(ConfigError::UnknownElement { path: block.path() }),
    }
}

fn parse_price(p: Element) -> Result<PriceRule, ConfigError> {
    p.check_keys(&[
        "priceCalculatorClass",
        "theta",
        "marketDepth",
        "drift",
        "diffusion",
        "epsilon",
        "maxIterations",
        "lowerBound",
        "upperBound",
        "relativeBounds",
    ])?;
    let class_el = p.required_child("priceCalculatorClass")?;
    Ok(match class_el.text().as_str() {
        "PriceCalculatorCross" => {
            PriceRule::CrossExponential { theta: p.opt("theta", 0.0)?, kappa: p.req("marketDepth")? }
        }
        "PriceCalculatorGeneral" => {
            let market_depth = p.opt("marketDepth", 1.0)?;
            let f1 = Drift::EdDerivative { market_depth };
            let drift = p.opt_choice("drift", f1, &[("F1", f1), ("F2", Drift::EdLevel)])?;
            let theta = p.opt("theta", 0.0)?;
            let diffusion = p.opt_choice(
                "diffusion",
                Diffusion::CrossHeteroskedastic { theta },
                &[("cross-heteroskedastic", Diffusion::CrossHeteroskedastic { theta }), ("zero", Diffusion::Zero)],
            )?;
            PriceRule::GeneralSde { drift, diffusion }
        }
        "PriceCalculatorHarras" => PriceRule::HarrasLog,
        "PriceCalculatorBisection" => PriceRule::Bisection(BisectionSettings {
            epsilon: p.req("epsilon")?,
            max_iterations: p.req("maxIterations")?,
            lower_bound: p.req("lowerBound")?,
            upper_bound: p.req("upperBound")?,
            relative_bounds: p.opt("relativeBounds", false)?,
        }),
        other => return Err(ConfigError::UnknownClass { path: class_el.path(), class: other.into() }),
    })
}

/// Canonical XML for a configuration; parses back to an equal value.
pub fn to_xml(c: &SimulationConfig) -> String {
    let mut s = String::new();
    let r = &c.run;
    s.push_str("<simulation>\n  <settings>\n");
    let _ = writeln!(s, "    <numSteps>{}</numSteps>", r.num_steps);
    let _ = writeln!(s, "    <deltaT>{:?}</deltaT>", r.delta_t);
    let _ = writeln!(s, "    <startPrice>{:?}</startPrice>", r.initial_price);
    let _ = writeln!(s, "    <repetitions>{}</repetitions>", r.repetitions);
    let _ = writeln!(s, "    <seed>{}</seed>", r.seed);
    s.push_str("  </settings>\n  <randomNumberGenerator>\n");
    let _ = writeln!(s, "    <algorithm>{}</algorithm>", c.rng.algorithm.name());
    match c.rng.mode {
        GenerationMode::OnTheFly => s.push_str("    <mode>on-the-fly</mode>\n"),
        GenerationMode::Pooled { pool_size } => {
            let _ = writeln!(s, "    <mode>pooled</mode>\n    <poolSize>{pool_size}</poolSize>");
        }
    }
    s.push_str("  </randomNumberGenerator>\n  <agents>\n");
    for block in &c.agents {
        match block {
            AgentBlock::Cross { count, params } => {
                let _ = writeln!(
                    s,
                    "    <AgentCross>\n      <count>{count}</count>\n      <A1>{:?}</A1>\n      <A2>{:?}</A2>\n      <b1>{:?}</b1>\n      <b2>{:?}</b2>",
                    params.a1, params.a2, params.b1, params.b2
                );
                if let Some(w) = params.wealth {
                    let _ = writeln!(
                        s,
                        "      <wealth><r>{:?}</r><gamma>{:?}</gamma><initialWealth>{:?}</initialWealth></wealth>",
                        w.interest_rate, w.stock_fraction, w.initial_wealth
                    );
                }
                s.push_str("    </AgentCross>\n");
            }
            AgentBlock::Lls { params: p } => {
                s.push_str("    <AgentLLS>\n");
                for g in &p.groups {
                    let _ = writeln!(s, "      <group><count>{}</count><memory>{}</memory></group>", g.count, g.memory);
                }
                let fields = [
                    ("sigmaGamma", p.sigma_gamma),
                    ("r", p.interest_rate),
                    ("z1", p.z1),
                    ("z2", p.z2),
                    ("muH", p.mu_h),
                    ("sigmaH", p.sigma_h),
                    ("initialWealth", p.initial_wealth),
                    ("initialShares", p.initial_shares),
                    ("initialGamma", p.initial_gamma),
                    ("initialDividend", p.initial_dividend),
                    ("noiseTruncation", p.noise_truncation),
                ];
                for (k, v) in fields {
                    let _ = writeln!(s, "      <{k}>{v:?}</{k}>");
                }
                let scaling = match p.scaling {
                    MemoryScaling::Scaled => "scaled",
                    MemoryScaling::Fixed => "fixed",
                };
                let denominator = match p.denominator {
                    ReturnDenominator::Current => "current",
                    ReturnDenominator::Previous => "previous",
                };
                let _ = writeln!(s, "      <scalingMode>{scaling}</scalingMode>");
                let _ = writeln!(s, "      <returnDenominator>{denominator}</returnDenominator>");
                let _ = writeln!(
                    s,
                    "      <candidateReturnInWindow>{}</candidateReturnInWindow>",
                    p.include_candidate_return
                );
                s.push_str("    </AgentLLS>\n");
            }
            AgentBlock::Harras { count, params: p } => {
                let _ = writeln!(s, "    <AgentHarras>\n      <count>{count}</count>");
                let fields = [
                    ("C1", p.c1),
                    ("C2", p.c2),
                    ("C3", p.c3),
                    ("Omega", p.omega),
                    ("g", p.g),
                    ("alpha", p.alpha),
                    ("lambda", p.lambda),
                    ("initialCash", p.initial_cash),
                    ("initialShares", p.initial_shares),
                    ("initialVariance", p.initial_variance),
                ];
                for (k, v) in fields {
                    let _ = writeln!(s, "      <{k}>{v:?}</{k}>");
                }
                let variant = match p.opinion {
                    OpinionVariant::NormalizedQuarter => "normalized-quarter",
                    OpinionVariant::PaperEq => "paper-eq",
                };
                let _ = writeln!(s, "      <opinionVariant>{variant}</opinionVariant>\n    </AgentHarras>");
            }
        }
    }
    s.push_str("  </agents>\n  <excessDemandCalculatorSettings>\n");
    match c.ed_calculator {
        ExcessDemandCalculator::Mean => {
            s.push_str("    <excessDemandCalculatorClass>ExcessDemandCalculatorMean</excessDemandCalculatorClass>\n")
        }
        ExcessDemandCalculator::Harras { lambda } => {
            let _ = writeln!(
                s,
                "    <excessDemandCalculatorClass>ExcessDemandCalculatorHarras</excessDemandCalculatorClass>\n    <marketDepth>{lambda:?}</marketDepth>"
            );
        }
    }
    s.push_str("  </excessDemandCalculatorSettings>\n  <priceCalculatorSettings>\n");
    match c.price_rule {
        PriceRule::CrossExponential { theta, kappa } => {
            let _ = writeln!(
                s,
                "    <priceCalculatorClass>PriceCalculatorCross</priceCalculatorClass>\n    <theta>{theta:?}</theta>\n    <marketDepth>{kappa:?}</marketDepth>"
            );
        }
        PriceRule::GeneralSde { drift, diffusion } => {
            s.push_str("    <priceCalculatorClass>PriceCalculatorGeneral</priceCalculatorClass>\n");
            match drift {
                Drift::EdDerivative { market_depth } => {
                    let _ = writeln!(s, "    <drift>F1</drift>\n    <marketDepth>{market_depth:?}</marketDepth>");
                }
                Drift::EdLevel => s.push_str("    <drift>F2</drift>\n"),
            }
            match diffusion {
                Diffusion::CrossHeteroskedastic { theta } => {
                    let _ =
                        writeln!(s, "    <diffusion>cross-heteroskedastic</diffusion>\n    <theta>{theta:?}</theta>");
                }
                Diffusion::Zero => s.push_str("    <diffusion>zero</diffusion>\n"),
            }
        }
        PriceRule::HarrasLog => s.push_str("    <priceCalculatorClass>PriceCalculatorHarras</priceCalculatorClass>\n"),
        PriceRule::Bisection(b) => {
            let _ = writeln!(
                s,
                "    <priceCalculatorClass>PriceCalculatorBisection</priceCalculatorClass>\n    <epsilon>{:?}</epsilon>\n    <maxIterations>{}</maxIterations>\n    <lowerBound>{:?}</lowerBound>\n    <upperBound>{:?}</upperBound>\n    <relativeBounds>{}</relativeBounds>",
                b.epsilon, b.max_iterations, b.lower_bound, b.upper_bound, b.relative_bounds
            );
        }
    }
    s.push_str("  </priceCalculatorSettings>\n  <output>\n");
    let format = match c.output.format {
        OutputFormat::Csv => "csv",
        OutputFormat::Container => "hdf5",
    };
    let _ = writeln!(s, "    <format>{format}</format>");
    let _ = writeln!(s, "    <directory>{}</directory>", xml_escape(&c.output.directory.display().to_string()));
    s.push_str("  </output>\n");
    if let Some(rec) = &c.record {
        let _ = writeln!(s, "  <record>{}</record>", xml_escape(&rec.join(",")));
    }
    s.push_str("</simulation>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One sweep axis: an element path below the root and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<String>,
}

impl FromStr for SweepAxis {
    type Err = ConfigError;

    /// `path=v1,v2,...`
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let (path, values) =
            s.split_once('=').ok_or_else(|| ConfigError::Sweep(format!("expected path=v1,v2,... in `{s}`")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if path.trim().is_empty() || values.is_empty() {
            return Err(ConfigError::Sweep(format!("expected path=v1,v2,... in `{s}`")));
        }
        Ok(Self { path: path.trim().to_string(), values })
    }
}

/// One point of a sweep: its label and configuration text.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub xml: String,
}

/// Cartesian expansion of `axes` over the configuration text. Points are
/// ordered like an odometer whose first axis turns slowest; every point is
/// parsed and validated.
///
/// Paths are element names below `<simulation>` joined by `/`; a repeated
/// element is selected with `[i]`, e.g. `agents/AgentCross[1]/b1`.
pub fn expand_sweep(source: &str, axes: &[SweepAxis]) -> Result<Vec<SweepPoint>, ConfigError> {
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut picks = vec![0; axes.len()];
        for (i, axis) in axes.iter().enumerate().rev() {
            picks[i] = rem % axis.values.len();
            rem /= axis.values.len();
        }
        let mut xml = source.to_string();
        let mut label = Vec::new();
        for (axis, &pick) in axes.iter().zip(&picks) {
            let value = &axis.values[pick];
            xml = replace_element_text(&xml, &axis.path, value)?;
            label.push(format!("{}={}", axis.path, value));
        }
        parse_config_str(&xml)?;
        out.push(SweepPoint { label: label.join(";"), xml });
    }
    Ok(out)
}

fn replace_element_text(xml: &str, path: &str, value: &str) -> Result<String, ConfigError> {
    let doc = Document::parse(xml).map_err(|e| ConfigError::Xml(e.to_string()))?;
    let mut node = doc.root_element();
    for part in path.split('/').filter(|p| !p.is_empty()) {
        let (name, index) = match part.split_once('[') {
            Some((n, rest)) => {
                let idx = rest
                    .trim_end_matches(']')
                    .parse::<usize>()
                    .map_err(|_| ConfigError::Sweep(format!("bad index in `{part}`")))?;
                (n, idx)
            }
            None => (part, 0),
        };
        node = node
            .children()
            .filter(|n| n.is_element() && n.tag_name().name() == name)
            .nth(index)
            .ok_or_else(|| ConfigError::Sweep(format!("no element `{path}` (at `{part}`)")))?;
    }
    if node.children().any(|n| n.is_element()) {
        return Err(ConfigError::Sweep(format!("`{path}` is not a leaf element")));
    }
    let range = node.range();
    let tag = node.tag_name().name();
    let mut replaced = String::with_capacity(xml.len() + value.len());
    replaced.push_str(&xml[..range.start]);
    let _ = write!(replaced, "<{tag}>{}</{tag}>", xml_escape(value));
    replaced.push_str(&xml[range.end..]);
    Ok(replaced)
}
