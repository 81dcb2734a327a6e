//! Benchmark descriptions and their TOML form.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bcevo::cem::{Bounds, CemConfig};
use bcevo::centroid::Temperature;
use bcevo::mpc::{Circle, InitialPlans, MpcConfig, RolloutEnv, WarmStart};
use bcevo::trust_region::SamplerKind;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    SyntheticMultimodal,
    Quadratic,
    Navigation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Vanilla,
    Decent,
    BcEvocem,
}

impl Optimizer {
    pub const ALL: [Optimizer; 3] = [Optimizer::Vanilla, Optimizer::Decent, Optimizer::BcEvocem];

    pub fn id(self) -> &'static str {
        match self {
            Optimizer::Vanilla => "vanilla",
            Optimizer::Decent => "decent",
            Optimizer::BcEvocem => "bc-evocem",
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Optimizer {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Optimizer::ALL
            .into_iter()
            .find(|o| o.id() == s)
            .ok_or_else(|| BenchError::Spec(vec![format!("unknown optimizer `{s}` (expected vanilla, decent or bc-evocem)")]))
    }
}

/// Temperature as written in a config: a number or `"adaptive"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemperatureSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerSetting {
    Auto,
    Exact,
    Proxy,
    DiagBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemSettings {
    pub population_size: usize,
    pub elite_fraction: f64,
    pub smoothing: f64,
    pub init_variance: f64,
    pub freeze_variance: bool,
    pub iterations: usize,
    pub variance_floor: f64,
    pub trust_radius: f64,
    pub replace_per_iteration: usize,
    pub temperature: TemperatureSetting,
    pub temperature_scale: f64,
    pub sampler: SamplerSetting,
}

impl Default for CemSettings {
    fn default() -> Self {
        let cfg = CemConfig::default();
        Self {
            population_size: cfg.population_size,
            elite_fraction: cfg.elite_fraction,
            smoothing: cfg.smoothing,
            init_variance: cfg.init_variance,
            freeze_variance: cfg.freeze_variance,
            iterations: cfg.max_iterations,
            variance_floor: cfg.variance_floor,
            trust_radius: cfg.trust_radius,
            replace_per_iteration: cfg.replace_per_iteration,
            temperature: TemperatureSetting::Named("adaptive".into()),
            temperature_scale: 1.0,
            sampler: SamplerSetting::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSetting {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavigationSettings {
    pub horizon: usize,
    pub task_horizon: usize,
    pub dt: f64,
    pub perturb_factor: f64,
    /// Control steps between replacements; 0 disables replacement.
    pub replace_period: usize,
    pub action_bound: f64,
    pub random_initial_plans: bool,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    /// Empty keeps the built-in cluttered layout.
    pub obstacles: Vec<ObstacleSetting>,
    pub snapshot_every: usize,
}

impl Default for NavigationSettings {
    fn default() -> Self {
        let m = MpcConfig::default();
        Self {
            horizon: m.horizon,
            task_horizon: m.task_horizon,
            dt: 0.2,
            perturb_factor: m.perturb_factor,
            replace_period: m.replace_period.unwrap_or(0),
            action_bound: 1.0,
            random_initial_plans: m.initial_plans == InitialPlans::UniformInBounds,
            start: [0.0, 0.0],
            goal: [10.0, 10.0],
            obstacles: Vec::new(),
            snapshot_every: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub csv: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Everything needed to reproduce one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub name: String,
    pub objective: Objective,
    pub dimension: usize,
    pub seeds: Vec<u64>,
    pub optimizer: Optimizer,
    pub workers: usize,
    /// Initial worker means are drawn uniformly from `[init_low, init_high]^d`.
    pub init_low: f64,
    pub init_high: f64,
    /// Iteration whose information radius the summary reports.
    pub probe_iteration: usize,
    /// Fill `wall_ms` with measured time instead of 0. Breaks byte-identical
    /// reruns.
    pub record_timing: bool,
    pub cem: CemSettings,
    pub navigation: NavigationSettings,
    pub output: OutputSettings,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            objective: Objective::SyntheticMultimodal,
            dimension: 2,
            seeds: (0..50).collect(),
            optimizer: Optimizer::BcEvocem,
            workers: 5,
            init_low: -3.0,
            init_high: 3.0,
            probe_iteration: 25,
            record_timing: false,
            cem: CemSettings::default(),
            navigation: NavigationSettings::default(),
            output: OutputSettings::default(),
        }
    }
}

impl BenchmarkSpec {
    /// The synthetic multimodal benchmark: fixed `N(θ, 0.5²I)` workers,
    /// `T = 25`.
    pub fn synthetic() -> Self {
        Self {
            cem: CemSettings {
                init_variance: 0.25,
                freeze_variance: true,
                iterations: 25,
                ..CemSettings::default()
            },
            ..Self::default()
        }
    }

    /// Cluttered point-mass navigation, 20 seeds.
    pub fn navigation() -> Self {
        Self {
            name: "navigation".into(),
            objective: Objective::Navigation,
            seeds: (0..20).collect(),
            cem: CemSettings {
                sampler: SamplerSetting::Proxy,
                ..CemSettings::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| BenchError::Spec(vec![e.to_string()]))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.seeds.is_empty() {
            problems.push("seeds: must not be empty".to_string());
        }
        if self.workers == 0 {
            problems.push("workers: must be >= 1".to_string());
        }
        if self.optimizer == Optimizer::BcEvocem && self.workers < 2 {
            problems.push("workers: bc-evocem needs at least 2".to_string());
        }
        if self.optimizer == Optimizer::BcEvocem && self.cem.replace_per_iteration >= self.workers {
            problems.push("cem.replace_per_iteration: must be below workers".to_string());
        }
        match self.objective {
            Objective::SyntheticMultimodal if self.dimension != 2 => {
                problems.push(format!("dimension: synthetic-multimodal is 2-D, got {}", self.dimension))
            }
            Objective::Quadratic if self.dimension == 0 => problems.push("dimension: must be >= 1".to_string()),
            _ => {}
        }
        if !(self.init_low <= self.init_high) || !self.init_low.is_finite() || !self.init_high.is_finite() {
            problems.push(format!("init_low/init_high: need a finite interval, got [{}, {}]", self.init_low, self.init_high));
        }
        if self.probe_iteration == 0 {
            problems.push("probe_iteration: must be >= 1".to_string());
        }
        if let TemperatureSetting::Named(s) = &self.cem.temperature {
            if s != "adaptive" {
                problems.push(format!("cem.temperature: expected a number or \"adaptive\", got \"{s}\""));
            }
        }
        if let Err(e) = self.cem_config().validate() {
            problems.push(format!("cem: {e}"));
        }
        if self.objective == Objective::Navigation {
            let n = &self.navigation;
            if n.horizon == 0 || n.task_horizon == 0 {
                problems.push("navigation: horizon and task_horizon must be >= 1".to_string());
            }
            if !(n.dt > 0.0) {
                problems.push(format!("navigation.dt: must be positive, got {}", n.dt));
            }
            if !(n.action_bound > 0.0) {
                problems.push(format!("navigation.action_bound: must be positive, got {}", n.action_bound));
            }
            if n.obstacles.iter().any(|o| !(o.radius > 0.0)) {
                problems.push("navigation.obstacles: radii must be positive".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(BenchError::Spec(problems))
        }
    }

    pub fn temperature(&self) -> Temperature {
        match self.cem.temperature {
            TemperatureSetting::Fixed(t) => Temperature::Fixed(t),
            TemperatureSetting::Named(_) => Temperature::Adaptive(self.cem.temperature_scale),
        }
    }

    pub fn cem_config(&self) -> CemConfig {
        let c = &self.cem;
        CemConfig {
            population_size: c.population_size,
            elite_fraction: c.elite_fraction,
            smoothing: c.smoothing,
            init_variance: c.init_variance,
            freeze_variance: c.freeze_variance,
            max_iterations: c.iterations,
            variance_floor: c.variance_floor,
            trust_radius: c.trust_radius,
            replace_per_iteration: c.replace_per_iteration,
            temperature: self.temperature(),
            sampler: match c.sampler {
                SamplerSetting::Auto => None,
                SamplerSetting::Exact => Some(SamplerKind::Exact),
                SamplerSetting::Proxy => Some(SamplerKind::Proxy),
                SamplerSetting::DiagBox => Some(SamplerKind::DiagBox),
            },
        }
    }

    pub fn init_box(&self) -> Result<Bounds> {
        Bounds::uniform(self.dimension, self.init_low, self.init_high).map_err(BenchError::from)
    }

    pub fn environment(&self) -> Result<RolloutEnv> {
        let n = &self.navigation;
        let mut env = RolloutEnv::cluttered(n.dt);
        env.start = n.start.to_vec();
        env.goal = n.goal.to_vec();
        env.action_bounds = Bounds::uniform(2, -n.action_bound, n.action_bound)?;
        if !n.obstacles.is_empty() {
            env.obstacles = n
                .obstacles
                .iter()
                .map(|o| Circle {
                    center: o.center,
                    radius: o.radius,
                })
                .collect();
        }
        env.validate()?;
        Ok(env)
    }

    /// Controller settings for `optimizer` on the navigation task.
    pub fn mpc_config(&self, optimizer: Optimizer) -> MpcConfig {
        let n = &self.navigation;
        let guided = MpcConfig {
            cem: self.cem_config(),
            n_workers: self.workers,
            horizon: n.horizon,
            task_horizon: n.task_horizon,
            replace_period: (n.replace_period > 0).then_some(n.replace_period),
            warm_start: WarmStart::Centroid,
            perturb_factor: n.perturb_factor,
            initial_plans: if n.random_initial_plans {
                InitialPlans::UniformInBounds
            } else {
                InitialPlans::Zero
            },
            snapshot_every: (n.snapshot_every > 0).then_some(n.snapshot_every),
        };
        match optimizer {
            Optimizer::BcEvocem => guided,
            Optimizer::Decent => guided.decentralized(),
            Optimizer::Vanilla => MpcConfig {
                n_workers: 1,
                ..guided.decentralized()
            },
        }
    }
}
