//! JSON run configuration: the single input format of the command line tool.
//!
//! The schema is strict: unknown keys are rejected everywhere, probabilities
//! and map coefficients are exact "p/q" strings, and parse errors carry the
//! JSON path of the offending field. A parsed config is shape-valid; the
//! numeric preconditions of each module are checked by the module itself when
//! the command runs.

use std::path::PathBuf;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homeo::{MapError, MonotoneMap, Piece, PlMap, SinPerturbMap};
use crate::measure::{Case2Params, Case3Params, Case4Params, ClassifyGate, StoppingFunction};
use crate::monster::{self, Variant};
use crate::rational::{ratio_serde, ratio_vec_serde};
use crate::system::{RandomSystem, SystemError};
use crate::walk::SimParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config error at {path}: {source}")]
    Schema {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("config error: {0}")]
    Invalid(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Complete description of one tool invocation.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form run name, echoed into reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// The random system to study. Required by every command except
    /// `monster`, which carries its own generator family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    pub command: CommandConfig,
    pub master_seed: u64,
    /// Worker threads; results never depend on this. Defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Where reports land; the CLI flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Serialized random system: tagged maps plus exact probabilities.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub maps: Vec<MapConfig>,
    #[serde(with = "ratio_vec_serde")]
    pub probs: Vec<BigRational>,
}

/// One map, tagged by kind. Only the exactly serializable kinds exist here;
/// custom callables are a library-only construction.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapConfig {
    Affine(AffineConfig),
    PiecewiseLinear(PlConfig),
    SinPerturbation(SinConfig),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AffineConfig {
    #[serde(with = "ratio_serde")]
    pub slope: BigRational,
    #[serde(with = "ratio_serde")]
    pub intercept: BigRational,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlConfig {
    #[serde(with = "ratio_vec_serde")]
    pub breakpoints: Vec<BigRational>,
    /// One piece per interval, left to right; one more piece than breakpoints.
    pub pieces: Vec<PieceConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    #[serde(with = "ratio_serde")]
    pub slope: BigRational,
    #[serde(with = "ratio_serde")]
    pub intercept: BigRational,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SinConfig {
    #[serde(with = "ratio_serde")]
    pub amplitude: BigRational,
}

impl MapConfig {
    pub fn build(&self) -> Result<MonotoneMap, MapError> {
        match self {
            MapConfig::Affine(a) => MonotoneMap::affine(a.slope.clone(), a.intercept.clone()),
            MapConfig::PiecewiseLinear(p) => {
                let pieces = p
                    .pieces
                    .iter()
                    .map(|c| Piece { slope: c.slope.clone(), intercept: c.intercept.clone() })
                    .collect();
                Ok(MonotoneMap::PiecewiseLinear(PlMap::new(p.breakpoints.clone(), pieces)?))
            }
            MapConfig::SinPerturbation(s) => {
                Ok(MonotoneMap::SinPerturb(SinPerturbMap::new(s.amplitude.clone())?))
            }
        }
    }
}

impl SystemConfig {
    pub fn build(&self) -> Result<RandomSystem, ConfigError> {
        let maps = self.maps.iter().map(MapConfig::build).collect::<Result<Vec<_>, _>>()?;
        let label = self.label.clone().unwrap_or_else(|| "system".into());
        Ok(RandomSystem::new(label, maps, self.probs.clone())?)
    }
}

/// The command to run, tagged by name, parameters inline.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CommandConfig {
    /// Validate the system definition and report its structural properties.
    Check,
    /// Estimate escape probabilities at probe points.
    Phi(PhiConfig),
    /// Classify forward and inverse behavior.
    Classify(ClassifyConfig),
    /// Construct and check a stationary measure.
    Measure(MeasureConfig),
    /// Simulate the tower-exponential walk.
    Monster(MonsterConfig),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Check => "check",
            CommandConfig::Phi(_) => "phi",
            CommandConfig::Classify(_) => "classify",
            CommandConfig::Measure(_) => "measure",
            CommandConfig::Monster(_) => "monster",
        }
    }
}

/// Overrides for the shared simulation knobs; absent fields keep defaults.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confine_fraction: Option<f64>,
}

impl SimConfig {
    /// Applies the overrides to a base parameter set.
    pub fn apply(&self, mut base: SimParams) -> SimParams {
        if let Some(t) = self.trials {
            base.trials = t;
        }
        if let Some(h) = self.horizon {
            base.horizon = h;
        }
        if let Some(e) = self.escape_threshold {
            base.escape_threshold = e;
        }
        if let Some(c) = self.confine_fraction {
            base.confine_fraction = c;
        }
        base
    }

    pub fn build(&self, master_seed: u64, workers: usize) -> SimParams {
        self.apply(SimParams { master_seed, workers, ..SimParams::default() })
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    pub probes: Vec<f64>,
    #[serde(default)]
    pub sim: SimConfig,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub sim: SimConfig,
}

impl ClassifyConfig {
    pub fn gate(&self, master_seed: u64, workers: usize) -> ClassifyGate {
        let mut gate = ClassifyGate::standard(master_seed);
        gate.sim = self.sim.apply(SimParams { workers, ..gate.sim });
        if let Some(p) = &self.probes {
            gate.probes = p.clone();
        }
        if let Some(t) = self.tau {
            gate.tau = t;
        }
        gate
    }
}

/// Which stationary-measure construction to run, tagged by case.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum MeasureConfig {
    /// Stationary probability measure of a direction-split system.
    Probability(ProbabilityMeasureConfig),
    /// Semi-infinite measure of a one-sided escaping system.
    SemiInfinite(SemiInfiniteMeasureConfig),
    /// Locally finite occupation measure of a recurrent system.
    Occupation(OccupationMeasureConfig),
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProbabilityMeasureConfig {
    /// Stationarity-check tolerance; the run refuses above it. Default 0.02.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    pub sim: SimConfig,
    pub gate: ClassifyConfig,
}

impl ProbabilityMeasureConfig {
    pub fn build(&self, master_seed: u64, workers: usize) -> Case4Params {
        let mut p = Case4Params::standard(master_seed);
        p.gate = self.gate.gate(master_seed, workers);
        p.sim = self.sim.apply(SimParams { workers, ..p.sim });
        if let Some(w) = self.window {
            p.window = w;
        }
        if let Some(g) = self.grid_points {
            p.grid_points = g;
        }
        p
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SemiInfiniteMeasureConfig {
    /// The depth orbits must reach; the measure lives above it.
    pub level: f64,
    /// Stationarity-check tolerance; the run refuses above it. Default 0.03.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub gate: ClassifyConfig,
}

impl SemiInfiniteMeasureConfig {
    pub fn build(&self, master_seed: u64, workers: usize) -> Case2Params {
        let mut p = Case2Params::standard(master_seed);
        p.gate = self.gate.gate(master_seed, workers);
        p.sim = self.sim.apply(SimParams { workers, ..p.sim });
        if let Some(w) = self.window {
            p.window = w;
        }
        if let Some(g) = self.grid_points {
            p.grid_points = g;
        }
        p
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OccupationMeasureConfig {
    /// Stationarity-check tolerance; the run refuses above it. Default 0.05.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    /// Plateau half-widths of the stopping ladder, smallest first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateaus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta_iters: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency_tol: Option<f64>,
    pub sim: SimConfig,
    pub gate: ClassifyConfig,
}

impl OccupationMeasureConfig {
    pub fn build(&self, master_seed: u64, workers: usize) -> Case3Params {
        let mut p = Case3Params::standard(master_seed);
        p.gate = self.gate.gate(master_seed, workers);
        p.sim = self.sim.apply(SimParams { workers, ..p.sim });
        if let Some(halfwidths) = &self.plateaus {
            p.ladder = halfwidths.iter().map(|&l| StoppingFunction::tent(l)).collect();
        }
        if let Some(m) = self.meta_iters {
            p.meta_iters = m;
        }
        if let Some(w) = self.bin_width {
            p.bin_width = w;
        }
        if let Some(t) = self.consistency_tol {
            p.consistency_tol = t;
        }
        p
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MonsterConfig {
    pub variant: MonsterVariant,
    pub steps: u64,
    /// Independent trajectories; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<u64>,
    /// Target interval watched for visits; defaults to [-10, 10].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    /// Per-step drift bound of the perturbed family; defaults to 0 (exact).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MonsterVariant {
    Alternating,
    Symmetric,
}

impl MonsterConfig {
    pub fn variant(&self) -> Variant {
        match self.variant {
            MonsterVariant::Alternating => Variant::Alternating,
            MonsterVariant::Symmetric => Variant::Symmetric,
        }
    }

    pub fn seeds(&self) -> u64 {
        self.seeds.unwrap_or(1)
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval.unwrap_or((-10.0, 10.0))
    }

    pub fn perturbation(&self) -> f64 {
        self.perturbation.unwrap_or(0.0)
    }
}

impl RunConfig {
    /// Shape-level validation beyond what the schema can express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.command {
            CommandConfig::Monster(m) => {
                if self.system.is_some() {
                    return Err(ConfigError::Invalid(
                        "the monster command carries its own generator family; \
                         remove the system block"
                            .into(),
                    ));
                }
                if m.steps == 0 || m.steps > monster::MAX_STEPS {
                    return Err(ConfigError::Invalid(format!(
                        "monster steps must lie in 1..={}",
                        monster::MAX_STEPS
                    )));
                }
                if m.seeds() == 0 {
                    return Err(ConfigError::Invalid("monster needs at least one seed".into()));
                }
            }
            cmd => {
                if self.system.is_none() {
                    return Err(ConfigError::Invalid(format!(
                        "the {} command needs a system block",
                        cmd.name()
                    )));
                }
                if let CommandConfig::Phi(p) = cmd {
                    if p.probes.is_empty() {
                        return Err(ConfigError::Invalid("phi needs at least one probe".into()));
                    }
                    if p.probes.iter().any(|x| !x.is_finite()) {
                        return Err(ConfigError::Invalid("phi probes must be finite".into()));
                    }
                }
            }
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// The configured system, built with exact arithmetic.
    pub fn build_system(&self) -> Result<Option<RandomSystem>, ConfigError> {
        self.system.as_ref().map(SystemConfig::build).transpose()
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }
}

/// Parses and shape-validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema { path, source: e.into_inner() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::parse_ratio;

    fn minimal_walk() -> &'static str {
        r#"{
            "master_seed": 7,
            "system": {
                "maps": [
                    {"kind": "affine", "slope": "1", "intercept": "1"},
                    {"kind": "affine", "slope": "1", "intercept": "-1"}
                ],
                "probs": ["1/2", "1/2"]
            },
            "command": {"name": "classify"}
        }"#
    }

    #[test]
    fn minimal_walk_config_parses_to_two_translations() {
        let cfg = parse_config(minimal_walk()).unwrap();
        assert_eq!(cfg.master_seed, 7);
        let sys = cfg.build_system().unwrap().unwrap();
        assert_eq!(sys.len(), 2);
        assert_eq!(sys.probs()[0], parse_ratio("1/2").unwrap());
        let x = parse_ratio("3/7").unwrap();
        let up = sys.maps()[0].eval_exact(&x).unwrap();
        assert_eq!(up - x, parse_ratio("1").unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_path() {
        let bad = minimal_walk().replace("\"master_seed\": 7,", "\"master_seed\": 7, \"tpyo\": 1,");
        let err = parse_config(&bad).unwrap_err();
        assert!(matches!(err, ConfigError::Schema { .. }), "{err}");
        let nested = minimal_walk().replace(
            r#"{"kind": "affine", "slope": "1", "intercept": "1"}"#,
            r#"{"kind": "affine", "slope": "1", "intercept": "1", "shift": "2"}"#,
        );
        let err = parse_config(&nested).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("maps"), "path missing from: {msg}");
    }

    #[test]
    fn bad_probability_sums_name_the_sum() {
        let bad = minimal_walk().replace(r#"["1/2", "1/2"]"#, r#"["1/2", "1/3"]"#);
        let cfg = parse_config(&bad).unwrap();
        let err = cfg.build_system().unwrap_err();
        assert!(err.to_string().contains("probabilities sum to 5/6"), "{err}");
    }

    #[test]
    fn doubling_config_reproduces_the_class2_fixture() {
        let text = r#"{
            "master_seed": 1,
            "system": {
                "label": "doubling_escape",
                "maps": [
                    {"kind": "piecewise-linear",
                     "breakpoints": ["0"],
                     "pieces": [{"slope": "1", "intercept": "1"},
                                {"slope": "2", "intercept": "1"}]},
                    {"kind": "affine", "slope": "1", "intercept": "-1"}
                ],
                "probs": ["1/2", "1/2"]
            },
            "command": {"name": "measure", "case": "semi_infinite", "level": -20.0}
        }"#;
        let cfg = parse_config(text).unwrap();
        let sys = cfg.build_system().unwrap().unwrap();
        assert_eq!(sys, fixtures::doubling_escape());
        match cfg.command {
            CommandConfig::Measure(MeasureConfig::SemiInfinite(ref s)) => {
                assert_eq!(s.level, -20.0);
                let params = s.build(cfg.master_seed, 2);
                assert_eq!(params.sim.trials, 200_000);
                assert_eq!(params.sim.workers, 2);
            }
            ref other => panic!("wrong command: {other:?}"),
        }
    }

    #[test]
    fn monster_configs_reject_a_system_block() {
        let text = r#"{
            "master_seed": 3,
            "command": {"name": "monster", "variant": "symmetric", "steps": 1000}
        }"#;
        let cfg = parse_config(text).unwrap();
        match &cfg.command {
            CommandConfig::Monster(m) => {
                assert_eq!(m.variant(), Variant::Symmetric);
                assert_eq!(m.interval(), (-10.0, 10.0));
                assert_eq!(m.seeds(), 1);
            }
            other => panic!("wrong command: {other:?}"),
        }
        let with_system = text.replace(
            "\"master_seed\": 3,",
            r#""master_seed": 3,
               "system": {"maps": [{"kind": "affine", "slope": "1", "intercept": "1"}],
                          "probs": ["1"]},"#,
        );
        let err = parse_config(&with_system).unwrap_err();
        assert!(err.to_string().contains("own generator family"), "{err}");
    }

    #[test]
    fn sim_overrides_land_in_params() {
        let text = r#"{
            "master_seed": 11,
            "workers": 4,
            "system": {
                "maps": [{"kind": "sin-perturbation", "amplitude": "1/10"},
                         {"kind": "affine", "slope": "1", "intercept": "-1"},
                         {"kind": "affine", "slope": "1", "intercept": "1"}],
                "probs": ["1/3", "1/3", "1/3"]
            },
            "command": {"name": "phi", "probes": [0.0, 5.0],
                        "sim": {"trials": 500, "horizon": 2000}}
        }"#;
        let cfg = parse_config(text).unwrap();
        match &cfg.command {
            CommandConfig::Phi(p) => {
                let sim = p.sim.build(cfg.master_seed, cfg.workers());
                assert_eq!(sim.trials, 500);
                assert_eq!(sim.horizon, 2000);
                assert_eq!(sim.master_seed, 11);
                assert_eq!(sim.workers, 4);
                assert_eq!(sim.escape_threshold, SimParams::default().escape_threshold);
            }
            other => panic!("wrong command: {other:?}"),
        }
    }

    #[test]
    fn configs_round_trip_through_serde() {
        for text in [minimal_walk()] {
            let cfg = parse_config(text).unwrap();
            let json = serde_json::to_string(&cfg).unwrap();
            let back = parse_config(&json).unwrap();
            assert_eq!(cfg, back);
        }
    }
}
