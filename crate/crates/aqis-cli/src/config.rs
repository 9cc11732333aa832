//! Run configuration: one TOML file per run, with nested sections for the
//! model, protocol, initial state, and per-metric options. Unknown keys are
//! rejected so that typos surface as config errors.

use aqis::model::ModelSpec;
use aqis::propagation::{EvolutionControls, QuadratureControls, RampProtocol};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Figure preset tag (fig1..fig7); controls plot-script emission.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<String>,
    pub model: ModelCfg,
    pub protocol: ProtocolCfg,
    #[serde(default)]
    pub state: Option<StateCfg>,
    pub metrics: MetricsCfg,
    #[serde(default)]
    pub quadrature: QuadratureCfg,
    #[serde(default)]
    pub evolve: EvolveCfg,
    #[serde(default)]
    pub tau_sweep: TauSweepCfg,
    #[serde(default)]
    pub echo: EchoCfg,
    #[serde(default)]
    pub otoc: OtocCfg,
    #[serde(default)]
    pub uniformity: UniformityCfg,
    #[serde(default)]
    pub order_parameter: OrderParameterCfg,
    #[serde(default)]
    pub distributions: DistributionsCfg,
    #[serde(default)]
    pub spectrum_flow: SpectrumFlowCfg,
    #[serde(default)]
    pub dos: DosCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepCfg>,
    #[serde(default)]
    pub output: OutputCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCfg {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolCfg {
    pub g0: f64,
    pub g1: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateCfg {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_mc: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_im: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsCfg {
    pub list: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureCfg {
    pub base_nodes: usize,
    pub refine_tolerance: f64,
    pub max_nodes: usize,
    pub esqpt_density_factor: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracked_levels: Option<usize>,
}

impl Default for QuadratureCfg {
    fn default() -> Self {
        let d = QuadratureControls::default();
        QuadratureCfg {
            base_nodes: d.base_nodes,
            refine_tolerance: d.refine_tolerance,
            max_nodes: d.max_nodes,
            esqpt_density_factor: d.esqpt_density_factor,
            tracked_levels: None,
        }
    }
}

impl QuadratureCfg {
    pub fn controls(&self) -> QuadratureControls {
        QuadratureControls {
            base_nodes: self.base_nodes,
            refine_tolerance: self.refine_tolerance,
            max_nodes: self.max_nodes,
            esqpt_density_factor: self.esqpt_density_factor,
            tracked_levels: self.tracked_levels,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveCfg {
    pub step_norm_product: f64,
    pub convergence_tol: f64,
    pub norm_drift_tol: f64,
    pub sample_target: usize,
}

impl Default for EvolveCfg {
    fn default() -> Self {
        let d = EvolutionControls::default();
        EvolveCfg {
            step_norm_product: d.step_norm_product,
            convergence_tol: d.convergence_tol,
            norm_drift_tol: d.norm_drift_tol,
            sample_target: d.sample_target,
        }
    }
}

impl EvolveCfg {
    pub fn controls(&self) -> EvolutionControls {
        EvolutionControls {
            step_norm_product: self.step_norm_product,
            convergence_tol: self.convergence_tol,
            norm_drift_tol: self.norm_drift_tol,
            sample_target: self.sample_target,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauSweepCfg {
    pub tau0: f64,
    pub tau1: f64,
    pub samples: usize,
    /// Emit one series per microcanonical size instead of the configured
    /// state (collective spin model only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub n_mc_series: Vec<usize>,
    /// Emit one series per turning coupling instead of the configured g1.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub g1_series: Vec<f64>,
}

impl Default for TauSweepCfg {
    fn default() -> Self {
        TauSweepCfg {
            tau0: 1e3,
            tau1: 1e4,
            samples: 256,
            n_mc_series: Vec::new(),
            g1_series: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoCfg {
    pub dt_min: f64,
    pub dt_max: f64,
    pub points: usize,
    /// "phase-rate" (default) or "hold-at-g0".
    pub interpretation: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub n_mc_series: Vec<usize>,
}

impl Default for EchoCfg {
    fn default() -> Self {
        EchoCfg {
            dt_min: 1e-4,
            dt_max: 1e2,
            points: 481,
            interpretation: "phase-rate".into(),
            n_mc_series: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OtocCfg {
    pub samples: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub n_mc_series: Vec<usize>,
}

impl Default for OtocCfg {
    fn default() -> Self {
        OtocCfg {
            samples: 64,
            n_mc_series: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniformityCfg {
    /// Number of leading doublets entering the uniformity sample.
    pub doublets: usize,
}

impl Default for UniformityCfg {
    fn default() -> Self {
        UniformityCfg { doublets: 200 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrderParameterCfg {
    pub g1_values: Vec<f64>,
}

impl Default for OrderParameterCfg {
    fn default() -> Self {
        OrderParameterCfg { g1_values: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionsCfg {
    /// Final-state source for the paired distributions: "adiabatic",
    /// "exact", or "none".
    pub final_state: String,
}

impl Default for DistributionsCfg {
    fn default() -> Self {
        DistributionsCfg {
            final_state: "adiabatic".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumFlowCfg {
    pub g_min: f64,
    pub g_max: f64,
    pub points: usize,
    /// Keep levels with excitation energy E_k - E_0 below this cap.
    pub delta_cap: f64,
}

impl Default for SpectrumFlowCfg {
    fn default() -> Self {
        SpectrumFlowCfg {
            g_min: 0.0,
            g_max: 1.25,
            points: 126,
            delta_cap: 75.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DosCfg {
    pub bins: usize,
}

impl Default for DosCfg {
    fn default() -> Self {
        DosCfg { bins: 201 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCfg {
    /// One of: tau, n_mc, g1, n, beta, alpha.
    pub axis: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputCfg {
    pub dir: String,
}

impl Default for OutputCfg {
    fn default() -> Self {
        OutputCfg { dir: "out".into() }
    }
}

/// Executable metrics, in their fixed execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Spectrum,
    SpectrumFlow,
    Dos,
    Phases,
    Uniformity,
    Trajectory,
    OrderDistribution,
    EnergyDistribution,
    TauSweep,
    Echo,
    Otoc,
    OrderParameter,
    Sweep,
}

impl MetricKind {
    pub fn parse(name: &str) -> Option<MetricKind> {
        Some(match name {
            "spectrum" => MetricKind::Spectrum,
            "spectrum_flow" => MetricKind::SpectrumFlow,
            "dos" => MetricKind::Dos,
            "phases" => MetricKind::Phases,
            "uniformity" => MetricKind::Uniformity,
            "trajectory" => MetricKind::Trajectory,
            "order_distribution" => MetricKind::OrderDistribution,
            "energy_distribution" => MetricKind::EnergyDistribution,
            "tau_sweep" => MetricKind::TauSweep,
            "echo" => MetricKind::Echo,
            "otoc" => MetricKind::Otoc,
            "order_parameter" => MetricKind::OrderParameter,
            "sweep" => MetricKind::Sweep,
            _ => return None,
        })
    }

    /// True when the metric needs eigenvectors (not just eigenvalues).
    pub fn needs_vectors(&self) -> bool {
        !matches!(
            self,
            MetricKind::Spectrum
                | MetricKind::SpectrumFlow
                | MetricKind::Dos
                | MetricKind::Phases
                | MetricKind::Uniformity
        )
    }

    pub fn needs_state(&self) -> bool {
        matches!(
            self,
            MetricKind::Trajectory
                | MetricKind::OrderDistribution
                | MetricKind::EnergyDistribution
                | MetricKind::TauSweep
                | MetricKind::Echo
                | MetricKind::Otoc
                | MetricKind::OrderParameter
                | MetricKind::Sweep
        )
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let config: Config =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model()?;
        self.protocol()?;
        let metrics = self.metric_list()?;
        if metrics.is_empty() {
            return Err(CliError::Config(
                "metrics.list: at least one metric is required".into(),
            ));
        }
        for metric in &metrics {
            if metric.needs_state() && self.state.is_none() {
                return Err(CliError::Config(format!(
                    "state: section required by metric {metric:?}"
                )));
            }
        }
        if let Some(state) = &self.state {
            self.validate_state(state)?;
        }
        if metrics.contains(&MetricKind::Sweep) {
            let sweep = self.sweep.as_ref().ok_or_else(|| {
                CliError::Config("sweep: section required by the sweep metric".into())
            })?;
            if sweep.values.is_empty() {
                return Err(CliError::Config("sweep.values: must be non-empty".into()));
            }
            if !sweep.values.iter().all(|v| v.is_finite()) {
                return Err(CliError::Config("sweep.values: must be finite".into()));
            }
            let monotone = sweep.values.windows(2).all(|w| w[1] > w[0])
                || sweep.values.windows(2).all(|w| w[1] < w[0]);
            if sweep.values.len() > 1 && !monotone {
                return Err(CliError::Config(
                    "sweep.values: must be strictly monotone".into(),
                ));
            }
            let axis = sweep.axis.as_str();
            if !["tau", "n_mc", "g1", "n", "beta", "alpha"].contains(&axis) {
                return Err(CliError::Config(format!("sweep.axis: unknown axis {axis:?}")));
            }
        }
        if self.tau_sweep.samples < 2 {
            return Err(CliError::Config("tau_sweep.samples: need at least 2".into()));
        }
        if !(self.tau_sweep.tau0 <= self.tau_sweep.tau1) {
            return Err(CliError::Config("tau_sweep: tau0 must not exceed tau1".into()));
        }
        match self.echo.interpretation.as_str() {
            "phase-rate" | "hold-at-g0" => {}
            other => {
                return Err(CliError::Config(format!(
                    "echo.interpretation: unknown value {other:?}"
                )))
            }
        }
        if self.echo.points < 2 || self.echo.dt_min <= 0.0 || self.echo.dt_min >= self.echo.dt_max {
            return Err(CliError::Config("echo: invalid dt grid".into()));
        }
        if self.dos.bins < 10 {
            return Err(CliError::Config("dos.bins: need at least 10".into()));
        }
        if self.quadrature.base_nodes < 5 {
            return Err(CliError::Config("quadrature.base_nodes: need at least 5".into()));
        }
        if self.evolve.step_norm_product > 0.05 {
            return Err(CliError::Config(
                "evolve.step_norm_product: must stay at or below 0.05".into(),
            ));
        }
        Ok(())
    }

    fn validate_state(&self, state: &StateCfg) -> Result<(), CliError> {
        match state.kind.as_str() {
            "microcanonical" => {
                let n_mc = state
                    .n_mc
                    .ok_or_else(|| CliError::Config("state.n_mc: required".into()))?;
                if n_mc == 0 {
                    return Err(CliError::Config("state.n_mc: must be positive".into()));
                }
            }
            "thermal" => {
                let beta = state
                    .beta
                    .ok_or_else(|| CliError::Config("state.beta: required".into()))?;
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(CliError::Config("state.beta: must be positive".into()));
                }
            }
            "coherent" => {
                if state.alpha_re.is_none() && state.alpha_im.is_none() {
                    return Err(CliError::Config("state.alpha_re: required".into()));
                }
                if !matches!(self.model()?, ModelSpec::Qrm { .. }) {
                    return Err(CliError::Config(
                        "state.kind: coherent states need the qrm model".into(),
                    ));
                }
            }
            other => {
                return Err(CliError::Config(format!("state.kind: unknown kind {other:?}")));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        match self.model.kind.as_str() {
            "lmg" => {
                let spins = self
                    .model
                    .spins
                    .ok_or_else(|| CliError::Config("model.spins: required for lmg".into()))?;
                ModelSpec::lmg(spins).map_err(|e| CliError::Config(format!("model.spins: {e}")))
            }
            "qrm" => {
                let ratio = self
                    .model
                    .ratio
                    .ok_or_else(|| CliError::Config("model.ratio: required for qrm".into()))?;
                let n_max = self
                    .model
                    .n_max
                    .ok_or_else(|| CliError::Config("model.n_max: required for qrm".into()))?;
                ModelSpec::qrm(ratio, n_max).map_err(|e| CliError::Config(format!("model: {e}")))
            }
            other => Err(CliError::Config(format!("model.kind: unknown kind {other:?}"))),
        }
    }

    pub fn protocol(&self) -> Result<RampProtocol, CliError> {
        RampProtocol::new(self.protocol.g0, self.protocol.g1, self.protocol.tau)
            .map_err(|e| CliError::Config(format!("protocol: {e}")))
    }

    pub fn metric_list(&self) -> Result<Vec<MetricKind>, CliError> {
        self.metrics
            .list
            .iter()
            .map(|name| {
                MetricKind::parse(name)
                    .ok_or_else(|| CliError::Config(format!("metrics.list: unknown metric {name:?}")))
            })
            .collect()
    }

    /// Content hash of the run configuration (output location excluded, so
    /// moving a run does not change its identity).
    pub fn run_id(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputCfg { dir: String::new() };
        let text = toml::to_string(&canonical).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
    }
}
