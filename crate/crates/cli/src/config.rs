use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use ioss_core::checks::{Battery, EstimateSpec, FalsifyTol, Witness};
use ioss_core::comparison::ComparisonFn;
use ioss_core::dynamics::{fixture, Signal, SimOptions, SystemModel};
use ioss_core::linear::{LinearSystem, Mat};
use ioss_core::lyapunov::{DecayTerm, Gradient, LyapCandidate};

/// Reference to the system under study: a registered fixture or an inline
/// linear model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearBlock>,
}

/// Row-major matrices of an LTI model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBlock {
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub c: Option<Vec<Vec<f64>>>,
}

impl SystemRef {
    pub fn label(&self) -> String {
        match (&self.fixture, &self.linear) {
            (Some(name), _) => name.clone(),
            (None, Some(_)) => "inline-linear".into(),
            _ => "unspecified".into(),
        }
    }

    pub fn resolve(&self) -> Result<SystemModel> {
        match (&self.fixture, &self.linear) {
            (Some(name), None) => Ok(fixture(name)?),
            (None, Some(block)) => Ok(block.to_linear()?.to_model("inline-linear")?),
            (Some(_), Some(_)) => bail!("system: give either `fixture` or `linear`, not both"),
            (None, None) => bail!("system: missing `fixture` or `linear`"),
        }
    }

    pub fn resolve_linear(&self) -> Result<LinearSystem> {
        match &self.linear {
            Some(block) => block.to_linear(),
            None => match self.fixture.as_deref() {
                Some("linear-double-integrator") => Ok(LinearSystem::new(
                    Mat::from_rows(vec![vec![0.0, 1.0], vec![0.0, 0.0]])?,
                    Mat::column(vec![0.0, 1.0]),
                    Mat::from_rows(vec![vec![1.0, 0.0]])?,
                )?),
                _ => bail!("system: the linear task needs `system.linear` matrices"),
            },
        }
    }
}

impl LinearBlock {
    pub fn to_linear(&self) -> Result<LinearSystem> {
        let a = Mat::from_rows(self.a.clone()).context("system.linear.a")?;
        let n = a.rows;
        let b = match &self.b {
            Some(rows) => Mat::from_rows(rows.clone()).context("system.linear.b")?,
            None => Mat::zeros(n, 1),
        };
        let c = match &self.c {
            Some(rows) => Mat::from_rows(rows.clone()).context("system.linear.c")?,
            None => Mat::zeros(1, n),
        };
        Ok(LinearSystem::new(a, b, c)?)
    }
}

/// Signal block in configs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalBlock {
    Constant { value: Vec<f64> },
    PiecewiseConstant {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl SignalBlock {
    pub fn to_signal(&self) -> Result<Signal> {
        Ok(match self {
            SignalBlock::Constant { value } => Signal::constant(value.clone()),
            SignalBlock::PiecewiseConstant { times, values } => {
                Signal::piecewise(times.clone(), values.clone())?
            }
        })
    }
}

/// Battery block; the seed is mandatory so random batteries are always
/// reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BatteryBlock {
    pub seed: u64,
    pub trajectories: usize,
    pub horizon: f64,
    #[serde(default)]
    pub shells: Option<Vec<f64>>,
    #[serde(default)]
    pub u_amplitude: Option<f64>,
    #[serde(default)]
    pub max_switches: Option<usize>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
}

impl BatteryBlock {
    pub fn to_battery(&self, seed_override: Option<u64>, tol_override: Option<f64>) -> Battery {
        let mut battery = Battery {
            seed: seed_override.unwrap_or(self.seed),
            trajectories: self.trajectories,
            horizon: self.horizon,
            ..Battery::default()
        };
        if let Some(shells) = &self.shells {
            battery.shells = shells.clone();
        }
        if let Some(amp) = self.u_amplitude {
            battery.u_amplitude = amp;
        }
        if let Some(ms) = self.max_switches {
            battery.max_switches = ms;
        }
        if let Some(rt) = self.rel_tol {
            battery.sim.rel_tol = rt;
        }
        if let Some(at) = self.abs_tol {
            battery.sim.abs_tol = at;
        }
        if let Some(t) = tol_override {
            battery.sim.rel_tol = t;
            battery.sim.abs_tol = t * 1e-2;
        }
        battery
    }
}

/// Candidate block: an inline quadratic form or a registered evaluator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CandidateBlock {
    #[serde(default)]
    pub quadratic: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub name: Option<String>,
    pub alpha1: ComparisonFn,
    pub alpha2: ComparisonFn,
    #[serde(default)]
    pub alpha: Option<ComparisonFn>,
    #[serde(default)]
    pub exponential: bool,
    #[serde(default)]
    pub sigma1: Option<ComparisonFn>,
    #[serde(default)]
    pub sigma2: Option<ComparisonFn>,
}

impl CandidateBlock {
    pub fn to_candidate(&self) -> Result<LyapCandidate> {
        let decay = if self.exponential {
            DecayTerm::Value
        } else {
            DecayTerm::StateGain(
                self.alpha
                    .clone()
                    .ok_or_else(|| anyhow!("candidate: give `alpha` or set `exponential`"))?,
            )
        };
        match (&self.quadratic, &self.name) {
            (Some(rows), None) => Ok(LyapCandidate::quadratic(
                "config-quadratic",
                rows.clone(),
                self.alpha1.clone(),
                self.alpha2.clone(),
                decay,
                self.sigma1.clone(),
                self.sigma2.clone(),
            )),
            (None, Some(name)) => {
                let (v, grad): (
                    ioss_core::lyapunov::ScalarFn,
                    ioss_core::lyapunov::GradFn,
                ) = match name.as_str() {
                    "scalar-square-half" => (
                        Arc::new(|x: &[f64]| 0.5 * x[0] * x[0]),
                        Arc::new(|x: &[f64]| vec![x[0]]),
                    ),
                    "norm-squared" => (
                        Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
                        Arc::new(|x: &[f64]| x.iter().map(|v| 2.0 * v).collect()),
                    ),
                    other => bail!("candidate: unknown registered evaluator {other:?}"),
                };
                Ok(LyapCandidate::new(
                    name.clone(),
                    v,
                    Gradient::ClosedForm(grad),
                    self.alpha1.clone(),
                    self.alpha2.clone(),
                    decay,
                    self.sigma1.clone(),
                    self.sigma2.clone(),
                ))
            }
            _ => bail!("candidate: give exactly one of `quadratic` or `name`"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateTask {
    pub x0: Vec<f64>,
    pub horizon: f64,
    #[serde(default)]
    pub u: Option<SignalBlock>,
    #[serde(default)]
    pub w: Option<SignalBlock>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default)]
    pub blowup: Option<f64>,
}

impl SimulateTask {
    pub fn sim_options(&self, tol_override: Option<f64>) -> SimOptions {
        let mut opts = SimOptions::default();
        if let Some(rt) = self.rel_tol {
            opts.rel_tol = rt;
        }
        if let Some(at) = self.abs_tol {
            opts.abs_tol = at;
        }
        if let Some(b) = self.blowup {
            opts.blowup = b;
        }
        if let Some(t) = tol_override {
            opts.rel_tol = t;
            opts.abs_tol = t * 1e-2;
        }
        opts
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CheckTask {
    pub spec: EstimateSpec,
    pub battery: BatteryBlock,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LyapunovTask {
    pub candidate: CandidateBlock,
    pub grid: GridBlock,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GridBlock {
    pub radius: f64,
    pub x_points: usize,
    #[serde(default)]
    pub u_max: Option<f64>,
    #[serde(default)]
    pub u_points: Option<usize>,
}

impl GridBlock {
    pub fn to_grid(&self, n: usize) -> ioss_core::lyapunov::GridSpec {
        let mut grid = ioss_core::lyapunov::GridSpec::centered(self.radius, n, self.x_points);
        if let (Some(um), Some(up)) = (self.u_max, self.u_points) {
            grid = grid.with_controls(um, up);
        }
        grid
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LinearTask {
    /// "hurwitz" | "certificate" | "detectability"
    pub mode: String,
    #[serde(default)]
    pub l: Option<Vec<Vec<f64>>>,
    /// Matrix for hurwitz mode (defaults to the system's A).
    #[serde(default)]
    pub m: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ObserveTask {
    pub candidate: CandidateBlock,
    /// Rescale a state-gain candidate into exponential form first.
    #[serde(default)]
    pub rescale: bool,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub zeta0: f64,
    pub horizon: f64,
    #[serde(default)]
    pub u: Option<SignalBlock>,
    #[serde(default)]
    pub w: Option<SignalBlock>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ValuefnTask {
    pub rho: ComparisonFn,
    pub xi: ComparisonFn,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub dims: Vec<usize>,
    pub time_step: f64,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_sweeps: Option<usize>,
    #[serde(default)]
    pub mixture_mode: bool,
    /// Optional inf-convolution pass parameter.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Optional dissipation-check span battery (seeded).
    #[serde(default)]
    pub dissipation: Option<DissipationBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DissipationBlock {
    pub seed: u64,
    pub spans: usize,
    pub horizon: f64,
}

/// Witness bundle written next to a falsified report; self-contained for
/// replays.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct WitnessBundle {
    pub system: SystemRef,
    pub spec: EstimateSpec,
    pub battery: BatteryBlock,
    pub falsify_tol: FalsifyTol,
    pub witness: Witness,
}

/// Top-level run configuration: one system, exactly one task section.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemRef,
    #[serde(default)]
    pub simulate: Option<SimulateTask>,
    #[serde(default)]
    pub check: Option<CheckTask>,
    #[serde(default)]
    pub lyapunov: Option<LyapunovTask>,
    #[serde(default)]
    pub linear: Option<LinearTask>,
    #[serde(default)]
    pub observe: Option<ObserveTask>,
    #[serde(default)]
    pub valuefn: Option<ValuefnTask>,
    #[serde(default)]
    pub output: Option<OutputBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub dir: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        let tasks = [
            config.simulate.is_some(),
            config.check.is_some(),
            config.lyapunov.is_some(),
            config.linear.is_some(),
            config.observe.is_some(),
            config.valuefn.is_some(),
        ];
        let count = tasks.iter().filter(|&&t| t).count();
        if count != 1 {
            bail!("config must contain exactly one task section, found {count}");
        }
        if let Some(check) = &config.check {
            check.spec.validate_named()?;
        }
        Ok(config)
    }

    pub fn task_name(&self) -> &'static str {
        if self.simulate.is_some() {
            "simulate"
        } else if self.check.is_some() {
            "check"
        } else if self.lyapunov.is_some() {
            "lyapunov"
        } else if self.linear.is_some() {
            "linear"
        } else if self.observe.is_some() {
            "observe"
        } else {
            "valuefn"
        }
    }
}

trait SpecValidate {
    fn validate_named(&self) -> Result<()>;
}

impl SpecValidate for EstimateSpec {
    fn validate_named(&self) -> Result<()> {
        // named KL forms must resolve before any evaluation
        let kl = |b: &ioss_core::comparison::KLFn| -> Result<()> {
            b.validate()?;
            Ok(())
        };
        match self {
            EstimateSpec::Uioss { beta, .. }
            | EstimateSpec::Uoss { beta, .. }
            | EstimateSpec::IntegralUioss { beta, .. }
            | EstimateSpec::MixedIntegralUioss { beta, .. }
            | EstimateSpec::IncrementalUioss { beta, .. } => kl(beta),
            EstimateSpec::Gasmo { lambda, .. } => kl(lambda),
            EstimateSpec::IiUoss { .. } | EstimateSpec::Uo { .. } => Ok(()),
        }
    }
}
