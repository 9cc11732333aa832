//! Pipeline execution: builds the spectral artifacts a run needs, executes
//! the declared metrics in a fixed order, and persists CSVs plus a JSON
//! manifest. Sweeps flush row by row and resume by skipping rows already on
//! disk for the same run id.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aqis::io::{fmt_f64, write_csv, Cell};
use aqis::metrics::{
    self, ks_uniform_statistic, loschmidt_adiabatic, loschmidt_hold_form, otoc_adiabatic_series,
    scaling_fit, tau_sweep, CycleObservable, SumMode,
};
use aqis::model::{observable_matrix, ModelSpec, ObservableKind, Parity};
use aqis::propagation::{
    adiabatic_cycle, evolve_exact, phase_table, wrap_phase_positive, PhaseTable, RampProtocol,
    Trajectory,
};
use aqis::spectral::{
    density_of_states, doublet_pairing, observable_in_eigenbasis, sector_energies,
    spectral_decomposition, DoubletTable, EigenObservable, SpectralDecomposition,
};
use aqis::state::{
    expand_in_eigenbasis, microcanonical_sb, observable_distribution, qrm_coherent, thermal_sb,
    to_physical, MixedState, PureState, State,
};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{Config, MetricKind};
use crate::plots;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure: Option<String>,
    pub worker_count: usize,
    pub output_dir: String,
    pub metrics: Vec<String>,
    pub config: Config,
    pub results: BTreeMap<String, serde_json::Value>,
}

pub struct Pipeline<'a> {
    config: &'a Config,
    out: PathBuf,
    model: ModelSpec,
    protocol: RampProtocol,
    decomp: Option<SpectralDecomposition>,
    doublets: Option<DoubletTable>,
    eigen_obs: Option<EigenObservable>,
    rates: Option<PhaseTable>,
    state: Option<State>,
    trajectory: Option<Trajectory>,
    results: BTreeMap<String, serde_json::Value>,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a Config, out: &Path) -> Result<Self, CliError> {
        Ok(Pipeline {
            config,
            out: out.to_path_buf(),
            model: config.model()?,
            protocol: config.protocol()?,
            decomp: None,
            doublets: None,
            eigen_obs: None,
            rates: None,
            state: None,
            trajectory: None,
            results: BTreeMap::new(),
        })
    }

    fn record(&mut self, key: &str, value: impl Serialize) {
        self.results
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable"));
    }

    fn order_observable(&self) -> Result<aqis::model::ObservableMatrix, CliError> {
        Ok(observable_matrix(&self.model, self.model.order_parameter_kind())?)
    }

    fn decomp(&mut self) -> Result<&SpectralDecomposition, CliError> {
        if self.decomp.is_none() {
            self.decomp = Some(spectral_decomposition(&self.model, self.protocol.g0)?);
        }
        Ok(self.decomp.as_ref().unwrap())
    }

    fn doublets(&mut self) -> Result<&DoubletTable, CliError> {
        if self.doublets.is_none() {
            let obs = self.order_observable()?;
            self.decomp()?;
            self.doublets = Some(doublet_pairing(self.decomp.as_ref().unwrap(), &obs)?);
        }
        Ok(self.doublets.as_ref().unwrap())
    }

    fn eigen_obs(&mut self) -> Result<&EigenObservable, CliError> {
        if self.eigen_obs.is_none() {
            let obs = self.order_observable()?;
            self.decomp()?;
            self.eigen_obs = Some(observable_in_eigenbasis(
                self.decomp.as_ref().unwrap(),
                &obs,
            )?);
        }
        Ok(self.eigen_obs.as_ref().unwrap())
    }

    fn rates(&mut self) -> Result<&PhaseTable, CliError> {
        if self.rates.is_none() {
            self.rates = Some(phase_table(
                &self.model,
                &self.protocol,
                &self.config.quadrature.controls(),
            )?);
        }
        Ok(self.rates.as_ref().unwrap())
    }

    /// The configured initial state, expanded in the eigenbasis at g0.
    fn state(&mut self) -> Result<&State, CliError> {
        if self.state.is_none() {
            let built = self.build_state_with(None, None, None)?;
            self.state = Some(built);
        }
        Ok(self.state.as_ref().unwrap())
    }

    /// Builds the configured state recipe, optionally overriding one knob.
    fn build_state_with(
        &mut self,
        n_mc: Option<usize>,
        beta: Option<f64>,
        alpha: Option<Complex64>,
    ) -> Result<State, CliError> {
        let recipe = self
            .config
            .state
            .clone()
            .ok_or_else(|| CliError::Config("state: section required".into()))?;
        match recipe.kind.as_str() {
            "microcanonical" => {
                let n = n_mc.or(recipe.n_mc).unwrap();
                self.doublets()?;
                let psi = microcanonical_sb(
                    self.decomp.as_ref().unwrap(),
                    self.doublets.as_ref().unwrap(),
                    n,
                )?;
                Ok(State::Pure(psi))
            }
            "thermal" => {
                let b = beta.or(recipe.beta).unwrap();
                self.doublets()?;
                let thermal = thermal_sb(
                    self.decomp.as_ref().unwrap(),
                    self.doublets.as_ref().unwrap(),
                    b,
                )?;
                if thermal.discarded_weight > 0.0 {
                    self.record("thermal_discarded_weight", thermal.discarded_weight);
                }
                Ok(State::Mixed(thermal.state))
            }
            "coherent" => {
                let a = alpha.unwrap_or(Complex64::new(
                    recipe.alpha_re.unwrap_or(0.0),
                    recipe.alpha_im.unwrap_or(0.0),
                ));
                let phys = qrm_coherent(&self.model, a, self.protocol.g0)?;
                self.decomp()?;
                let eigen = expand_in_eigenbasis(&phys, self.decomp.as_ref().unwrap())?;
                Ok(State::Pure(eigen))
            }
            other => Err(CliError::Config(format!("state.kind: unknown kind {other:?}"))),
        }
    }

    fn pure_state(&mut self) -> Result<PureState, CliError> {
        match self.state()? {
            State::Pure(p) => Ok(p.clone()),
            State::Mixed(_) => Err(CliError::Config(
                "state: this metric needs a pure state (microcanonical or coherent)".into(),
            )),
        }
    }

    fn state_to_physical(&mut self, state: &State) -> Result<State, CliError> {
        self.decomp()?;
        let decomp = self.decomp.as_ref().unwrap();
        Ok(state.map_members(|m| to_physical(m, decomp))?)
    }

    fn trajectory(&mut self) -> Result<&Trajectory, CliError> {
        if self.trajectory.is_none() {
            let state = self.state()?.clone();
            let physical = match self.state_to_physical(&state)? {
                State::Pure(p) => p,
                State::Mixed(_) => {
                    return Err(CliError::Config(
                        "trajectory: exact propagation needs a pure state".into(),
                    ))
                }
            };
            let traj = evolve_exact(&physical, &self.protocol, &self.config.evolve.controls())?;
            self.record("trajectory_halving_difference", traj.halving_difference);
            self.record("trajectory_steps", traj.steps);
            self.trajectory = Some(traj);
        }
        Ok(self.trajectory.as_ref().unwrap())
    }

    fn csv(&self, name: &str, header: &[&str], rows: Vec<Vec<Cell>>) -> Result<(), CliError> {
        write_csv(self.out.join(name), header, rows)?;
        Ok(())
    }

    pub fn execute(&mut self, metrics: &[MetricKind]) -> Result<(), CliError> {
        for metric in metrics {
            match metric {
                MetricKind::Spectrum => self.run_spectrum()?,
                MetricKind::SpectrumFlow => self.run_spectrum_flow()?,
                MetricKind::Dos => self.run_dos()?,
                MetricKind::Phases => self.run_phases()?,
                MetricKind::Uniformity => self.run_uniformity()?,
                MetricKind::Trajectory => self.run_trajectory()?,
                MetricKind::OrderDistribution => self.run_order_distribution()?,
                MetricKind::EnergyDistribution => self.run_energy_distribution()?,
                MetricKind::TauSweep => self.run_tau_sweep()?,
                MetricKind::Echo => self.run_echo()?,
                MetricKind::Otoc => self.run_otoc()?,
                MetricKind::OrderParameter => self.run_order_parameter()?,
                MetricKind::Sweep => self.run_sweep()?,
            }
        }
        Ok(())
    }

    pub fn into_manifest(self, workers: usize, metrics: &[String]) -> RunManifest {
        RunManifest {
            run_id: self.config.run_id(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            figure: self.config.figure.clone(),
            worker_count: workers,
            output_dir: self.out.display().to_string(),
            metrics: metrics.to_vec(),
            config: self.config.clone(),
            results: self.results,
        }
    }

    // -- individual metrics ------------------------------------------------

    fn run_spectrum(&mut self) -> Result<(), CliError> {
        self.decomp()?;
        let decomp = self.decomp.as_ref().unwrap();
        let mut rows = Vec::with_capacity(decomp.dim());
        for (sector, parity) in [(&decomp.even, "even"), (&decomp.odd, "odd")] {
            for (k, &e) in sector.energies.iter().enumerate() {
                rows.push(vec![Cell::from(k), Cell::from(parity), Cell::from(e)]);
            }
        }
        self.csv("spectrum.csv", &["k", "parity", "energy"], rows)
    }

    fn run_spectrum_flow(&mut self) -> Result<(), CliError> {
        use rayon::prelude::*;
        let cfg = &self.config.spectrum_flow;
        let grid: Vec<f64> = (0..cfg.points)
            .map(|i| cfg.g_min + (cfg.g_max - cfg.g_min) * i as f64 / (cfg.points - 1).max(1) as f64)
            .collect();
        let model = self.model;
        let spectra: Vec<(f64, (Vec<f64>, Vec<f64>))> = grid
            .par_iter()
            .map(|&g| Ok((g, sector_energies(&model, g)?)))
            .collect::<Result<Vec<_>, aqis::Error>>()?;
        let mut rows = Vec::new();
        for (g, (even, odd)) in &spectra {
            let ground = even[0].min(odd[0]);
            for (parity, energies) in [("even", even), ("odd", odd)] {
                for (k, &e) in energies.iter().enumerate() {
                    let delta = e - ground;
                    if delta <= self.config.spectrum_flow.delta_cap {
                        rows.push(vec![
                            Cell::from(*g),
                            Cell::from(k),
                            Cell::from(parity),
                            Cell::from(delta),
                        ]);
                    }
                }
            }
        }
        self.csv("spectrum_flow.csv", &["g", "k", "parity", "delta_e"], rows)
    }

    fn run_dos(&mut self) -> Result<(), CliError> {
        let bins = self.config.dos.bins;
        self.decomp()?;
        let dos = density_of_states(self.decomp.as_ref().unwrap(), bins)?;
        let rows = dos
            .support
            .iter()
            .zip(&dos.probabilities)
            .map(|(s, p)| vec![Cell::from(*s), Cell::from(*p)])
            .collect();
        self.csv("dos.csv", &["support_value", "probability"], rows)
    }

    fn run_phases(&mut self) -> Result<(), CliError> {
        self.rates()?;
        let rates = self.rates.as_ref().unwrap();
        let pairs = rates.doublet_count();
        let mut rows = Vec::new();
        for (parity, tag, levels) in [
            (Parity::Even, "even", rates.rates_even.len()),
            (Parity::Odd, "odd", rates.rates_odd.len()),
        ] {
            for k in 0..levels {
                let delta = if k < pairs {
                    Cell::from(wrap_phase_positive(rates.delta_phi(k)))
                } else {
                    Cell::from("nan")
                };
                rows.push(vec![
                    Cell::from(k),
                    Cell::from(tag),
                    Cell::from(rates.phase(parity, k)),
                    Cell::from(rates.rate(parity, k)),
                    delta,
                ]);
            }
        }
        self.record("phase_nodes", self.rates.as_ref().unwrap().node_count);
        self.record(
            "phase_estimated_error",
            self.rates.as_ref().unwrap().estimated_error,
        );
        self.csv(
            "phases.csv",
            &["k", "parity", "phase_rad", "phase_rate", "delta_phi_mod_2pi"],
            rows,
        )
    }

    fn run_uniformity(&mut self) -> Result<(), CliError> {
        let doublets = self.config.uniformity.doublets;
        self.rates()?;
        let rates = self.rates.as_ref().unwrap();
        let count = doublets.min(rates.doublet_count());
        let report = metrics::phase_uniformity(rates, 0..count)?;
        let rows = report
            .deltas
            .iter()
            .enumerate()
            .map(|(k, d)| vec![Cell::from(k + report.k_first), Cell::from(*d)])
            .collect();
        self.record("ks_statistic", report.ks_statistic);
        self.record("uniformity_sample_size", report.deltas.len());
        self.csv("uniformity.csv", &["k", "delta_phi_mod_2pi"], rows)
    }

    fn run_trajectory(&mut self) -> Result<(), CliError> {
        self.trajectory()?;
        let traj = self.trajectory.as_ref().unwrap();
        let rows = (0..traj.times.len())
            .map(|i| {
                vec![
                    Cell::from(traj.times[i]),
                    Cell::from(traj.couplings[i]),
                    Cell::from(traj.order_parameter[i]),
                    Cell::from(traj.inversion[i]),
                    Cell::from(traj.energy[i]),
                    Cell::from(traj.norms[i]),
                ]
            })
            .collect();
        self.csv(
            "trajectory.csv",
            &["t", "g", "obs_sx_or_x", "obs_sz_or_sigmaz", "energy", "norm"],
            rows,
        )
    }

    /// The final state according to `[distributions].final_state`.
    fn final_state(&mut self) -> Result<Option<State>, CliError> {
        match self.config.distributions.final_state.as_str() {
            "none" => Ok(None),
            "exact" => {
                self.trajectory()?;
                let final_state = self.trajectory.as_ref().unwrap().final_state.clone();
                Ok(Some(State::Pure(final_state)))
            }
            "adiabatic" => {
                let state = self.state()?.clone();
                self.rates()?;
                let cycled = adiabatic_cycle(&state, self.rates.as_ref().unwrap())?;
                Ok(Some(self.state_to_physical(&cycled)?))
            }
            other => Err(CliError::Config(format!(
                "distributions.final_state: unknown value {other:?}"
            ))),
        }
    }

    fn write_distribution(
        &self,
        name: &str,
        dist: &aqis::state::Distribution,
    ) -> Result<(), CliError> {
        let rows = dist
            .support
            .iter()
            .zip(&dist.probabilities)
            .map(|(s, p)| vec![Cell::from(*s), Cell::from(*p)])
            .collect();
        self.csv(name, &["support_value", "probability"], rows)
    }

    fn run_order_distribution(&mut self) -> Result<(), CliError> {
        let obs = self.order_observable()?;
        let state = self.state()?.clone();
        let initial_phys = self.state_to_physical(&state)?;
        let initial = observable_distribution(&initial_phys, &obs)?;
        self.record("order_parameter_initial", {
            let decomp = self.decomp.as_ref().unwrap();
            aqis::state::expectation(&state, &obs, Some(decomp))?
        });
        self.write_distribution("order_distribution_initial.csv", &initial)?;
        if let Some(final_state) = self.final_state()? {
            let physical = match final_state.basis() {
                aqis::state::StateBasis::Physical => final_state,
                _ => self.state_to_physical(&final_state)?,
            };
            let dist = observable_distribution(&physical, &obs)?;
            self.write_distribution("order_distribution_final.csv", &dist)?;
        }
        Ok(())
    }

    fn run_energy_distribution(&mut self) -> Result<(), CliError> {
        let state = self.state()?.clone();
        self.decomp()?;
        let initial =
            aqis::state::energy_distribution(&state, self.decomp.as_ref().unwrap())?;
        self.write_distribution("energy_distribution_initial.csv", &initial)?;
        match self.config.distributions.final_state.as_str() {
            "none" => {}
            "exact" => {
                self.trajectory()?;
                let final_state = self.trajectory.as_ref().unwrap().final_state.clone();
                let eigen = expand_in_eigenbasis(&final_state, self.decomp.as_ref().unwrap())?;
                let dist = aqis::state::energy_distribution(
                    &State::Pure(eigen),
                    self.decomp.as_ref().unwrap(),
                )?;
                self.write_distribution("energy_distribution_final.csv", &dist)?;
            }
            _ => {
                // The adiabatic propagator preserves populations exactly.
                self.rates()?;
                let cycled = adiabatic_cycle(&state, self.rates.as_ref().unwrap())?;
                let dist = aqis::state::energy_distribution(
                    &cycled,
                    self.decomp.as_ref().unwrap(),
                )?;
                self.write_distribution("energy_distribution_final.csv", &dist)?;
            }
        }
        Ok(())
    }

    fn tau_grid_cfg(&self) -> (f64, f64, usize) {
        let cfg = &self.config.tau_sweep;
        (cfg.tau0, cfg.tau1, cfg.samples)
    }

    fn write_tau_series(
        &self,
        name: &str,
        series: &metrics::TauSweepSeries,
    ) -> Result<(), CliError> {
        let rows = series
            .taus
            .iter()
            .zip(&series.values)
            .map(|(t, v)| vec![Cell::from(*t), Cell::from(*v)])
            .collect();
        self.csv(name, &["tau", "expectation"], rows)
    }

    fn run_tau_sweep(&mut self) -> Result<(), CliError> {
        let (tau0, tau1, samples) = self.tau_grid_cfg();
        let n_mc_series = self.config.tau_sweep.n_mc_series.clone();
        let g1_series = self.config.tau_sweep.g1_series.clone();
        if !n_mc_series.is_empty() {
            for n_mc in n_mc_series {
                let state = self.build_state_with(Some(n_mc), None, None)?;
                self.eigen_obs()?;
                self.rates()?;
                let series = tau_sweep(
                    &state,
                    self.eigen_obs.as_ref().unwrap(),
                    self.rates.as_ref().unwrap(),
                    tau0,
                    tau1,
                    samples,
                    SumMode::Full,
                )?;
                self.record(&format!("sigma_nmc{n_mc}"), metrics::scrambling_sigma(&series));
                self.write_tau_series(&format!("tau_sweep_nmc{n_mc}.csv"), &series)?;
            }
            return Ok(());
        }
        if !g1_series.is_empty() {
            let state = self.state()?.clone();
            self.eigen_obs()?;
            for g1 in g1_series {
                let protocol = RampProtocol::new(self.protocol.g0, g1, tau0)?;
                let rates =
                    phase_table(&self.model, &protocol, &self.config.quadrature.controls())?;
                let series = tau_sweep(
                    &state,
                    self.eigen_obs.as_ref().unwrap(),
                    &rates,
                    tau0,
                    tau1,
                    samples,
                    SumMode::Full,
                )?;
                self.write_tau_series(&format!("tau_sweep_g1_{g1}.csv"), &series)?;
            }
            return Ok(());
        }
        let state = self.state()?.clone();
        self.eigen_obs()?;
        self.rates()?;
        let series = tau_sweep(
            &state,
            self.eigen_obs.as_ref().unwrap(),
            self.rates.as_ref().unwrap(),
            tau0,
            tau1,
            samples,
            SumMode::Full,
        )?;
        self.record("sigma", metrics::scrambling_sigma(&series));
        self.record("tau_sweep_mean", series.mean);
        self.write_tau_series("tau_sweep.csv", &series)
    }

    fn echo_grid(&self) -> Vec<f64> {
        let cfg = &self.config.echo;
        let (la, lb) = (cfg.dt_min.ln(), cfg.dt_max.ln());
        (0..cfg.points)
            .map(|i| (la + (lb - la) * i as f64 / (cfg.points - 1) as f64).exp())
            .collect()
    }

    fn write_echo(&self, name: &str, curve: &metrics::EchoCurve) -> Result<(), CliError> {
        let rows = curve
            .delta_t
            .iter()
            .zip(&curve.values)
            .map(|(t, v)| vec![Cell::from(*t), Cell::from(*v)])
            .collect();
        self.csv(name, &["dt", "L"], rows)
    }

    fn echo_curve(&mut self, state: &PureState) -> Result<metrics::EchoCurve, CliError> {
        let grid = self.echo_grid();
        match self.config.echo.interpretation.as_str() {
            "hold-at-g0" => {
                self.decomp()?;
                Ok(loschmidt_hold_form(state, self.decomp.as_ref().unwrap(), &grid)?)
            }
            _ => {
                self.rates()?;
                Ok(loschmidt_adiabatic(state, self.rates.as_ref().unwrap(), &grid)?)
            }
        }
    }

    fn run_echo(&mut self) -> Result<(), CliError> {
        let n_mc_series = self.config.echo.n_mc_series.clone();
        if !n_mc_series.is_empty() {
            for n_mc in n_mc_series {
                let state = self.build_state_with(Some(n_mc), None, None)?;
                let pure = match state {
                    State::Pure(p) => p,
                    State::Mixed(_) => unreachable!("microcanonical states are pure"),
                };
                let curve = self.echo_curve(&pure)?;
                self.write_echo(&format!("echo_nmc{n_mc}.csv"), &curve)?;
            }
            return Ok(());
        }
        let pure = self.pure_state()?;
        let curve = self.echo_curve(&pure)?;
        self.write_echo("echo.csv", &curve)
    }

    fn write_otoc(&self, name: &str, series: &metrics::OtocSeries) -> Result<(), CliError> {
        let rows = (0..series.taus.len())
            .map(|i| {
                vec![
                    Cell::from(series.taus[i]),
                    Cell::from(series.values[i].re),
                    Cell::from(series.values[i].im),
                    Cell::from(series.rescaled[i]),
                ]
            })
            .collect();
        self.csv(name, &["tau", "re", "im", "rescaled"], rows)
    }

    fn run_otoc(&mut self) -> Result<(), CliError> {
        let (tau0, tau1, _) = self.tau_grid_cfg();
        let samples = self.config.otoc.samples.max(2);
        let taus: Vec<f64> = (0..samples)
            .map(|i| tau0 + (tau1 - tau0) * i as f64 / (samples - 1) as f64)
            .collect();
        let n_mc_series = self.config.otoc.n_mc_series.clone();
        if !n_mc_series.is_empty() {
            for n_mc in n_mc_series {
                let state = self.build_state_with(Some(n_mc), None, None)?;
                let pure = match state {
                    State::Pure(p) => p,
                    State::Mixed(_) => unreachable!("microcanonical states are pure"),
                };
                self.eigen_obs()?;
                self.rates()?;
                let series = otoc_adiabatic_series(
                    &pure,
                    self.eigen_obs.as_ref().unwrap(),
                    self.rates.as_ref().unwrap(),
                    &taus,
                )?;
                self.write_otoc(&format!("otoc_nmc{n_mc}.csv"), &series)?;
            }
            return Ok(());
        }
        let pure = self.pure_state()?;
        self.eigen_obs()?;
        self.rates()?;
        let series = otoc_adiabatic_series(
            &pure,
            self.eigen_obs.as_ref().unwrap(),
            self.rates.as_ref().unwrap(),
            &taus,
        )?;
        self.record("otoc_normalization", series.normalization);
        self.write_otoc("otoc.csv", &series)
    }

    fn run_order_parameter(&mut self) -> Result<(), CliError> {
        let g1_values = self.config.order_parameter.g1_values.clone();
        if g1_values.is_empty() {
            return Err(CliError::Config(
                "order_parameter.g1_values: required by the order_parameter metric".into(),
            ));
        }
        let (tau0, tau1, samples) = self.tau_grid_cfg();
        let state = self.state()?.clone();
        self.eigen_obs()?;
        let curve = metrics::order_parameter_curve(
            &state,
            self.eigen_obs.as_ref().unwrap(),
            &self.model,
            self.protocol.g0,
            &g1_values,
            (tau0, tau1),
            samples,
            &self.config.quadrature.controls(),
        )?;
        let rows = curve
            .iter()
            .map(|p| vec![Cell::from(p.g1), Cell::from(p.mean), Cell::from(p.std_dev)])
            .collect();
        self.csv("order_parameter.csv", &["g1", "mean", "std"], rows)
    }

    // -- sweep ---------------------------------------------------------------

    fn sweep_point(&mut self, axis: &str, value: f64) -> Result<(f64, f64), CliError> {
        let (tau0, tau1, samples) = self.tau_grid_cfg();
        match axis {
            "tau" => {
                let state = self.state()?.clone();
                self.eigen_obs()?;
                self.rates()?;
                let cycle = CycleObservable::new(&state, self.eigen_obs.as_ref().unwrap())?;
                let v = cycle.expectation(
                    &self.rates.as_ref().unwrap().with_tau(value),
                    SumMode::Full,
                )?;
                Ok((v, 0.0))
            }
            "n_mc" => {
                let state = self.build_state_with(Some(value as usize), None, None)?;
                self.eigen_obs()?;
                self.rates()?;
                let series = tau_sweep(
                    &state,
                    self.eigen_obs.as_ref().unwrap(),
                    self.rates.as_ref().unwrap(),
                    tau0,
                    tau1,
                    samples,
                    SumMode::Full,
                )?;
                Ok((series.mean, metrics::scrambling_sigma(&series)))
            }
            "g1" => {
                let state = self.state()?.clone();
                self.eigen_obs()?;
                let protocol = RampProtocol::new(self.protocol.g0, value, tau0)?;
                let rates =
                    phase_table(&self.model, &protocol, &self.config.quadrature.controls())?;
                let series = tau_sweep(
                    &state,
                    self.eigen_obs.as_ref().unwrap(),
                    &rates,
                    tau0,
                    tau1,
                    samples,
                    SumMode::Full,
                )?;
                Ok((series.mean, metrics::scrambling_sigma(&series)))
            }
            "beta" => {
                let state = self.build_state_with(None, Some(value), None)?;
                self.eigen_obs()?;
                self.rates()?;
                let series = tau_sweep(
                    &state,
                    self.eigen_obs.as_ref().unwrap(),
                    self.rates.as_ref().unwrap(),
                    tau0,
                    tau1,
                    samples,
                    SumMode::Full,
                )?;
                Ok((series.mean, metrics::scrambling_sigma(&series)))
            }
            "alpha" => {
                let state =
                    self.build_state_with(None, None, Some(Complex64::new(value, 0.0)))?;
                self.eigen_obs()?;
                self.rates()?;
                let series = tau_sweep(
                    &state,
                    self.eigen_obs.as_ref().unwrap(),
                    self.rates.as_ref().unwrap(),
                    tau0,
                    tau1,
                    samples,
                    SumMode::Full,
                )?;
                Ok((series.mean, metrics::scrambling_sigma(&series)))
            }
            "n" => {
                // Full rebuild at a different system size.
                let spins = value as usize;
                let model = ModelSpec::lmg(spins).map_err(CliError::Numeric)?;
                let obs = observable_matrix(&model, model.order_parameter_kind())?;
                let decomp = spectral_decomposition(&model, self.protocol.g0)?;
                let doublets = doublet_pairing(&decomp, &obs)?;
                let eigen_obs = observable_in_eigenbasis(&decomp, &obs)?;
                let recipe = self
                    .config
                    .state
                    .clone()
                    .ok_or_else(|| CliError::Config("state: section required".into()))?;
                let state = match recipe.kind.as_str() {
                    "microcanonical" => {
                        State::Pure(microcanonical_sb(&decomp, &doublets, recipe.n_mc.unwrap())?)
                    }
                    "thermal" => {
                        State::Mixed(thermal_sb(&decomp, &doublets, recipe.beta.unwrap())?.state)
                    }
                    other => {
                        return Err(CliError::Config(format!(
                            "sweep.axis = n: unsupported state kind {other:?}"
                        )))
                    }
                };
                let protocol = RampProtocol::new(self.protocol.g0, self.protocol.g1, tau0)?;
                let rates =
                    phase_table(&model, &protocol, &self.config.quadrature.controls())?;
                let series = tau_sweep(
                    &state,
                    &eigen_obs,
                    &rates,
                    tau0,
                    tau1,
                    samples,
                    SumMode::Full,
                )?;
                Ok((series.mean, metrics::scrambling_sigma(&series)))
            }
            other => Err(CliError::Config(format!("sweep.axis: unknown axis {other:?}"))),
        }
    }

    fn run_sweep(&mut self) -> Result<(), CliError> {
        let sweep = self
            .config
            .sweep
            .clone()
            .ok_or_else(|| CliError::Config("sweep: section required".into()))?;
        let path = self.out.join("sweep.csv");
        let done = read_sweep_rows(&path);
        let mut rows: Vec<(String, String)> = Vec::new();
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        if done.is_empty() {
            // Fresh file: truncate and write the header.
            file = fs::File::create(&path)?;
            writeln!(file, "value,mean,std,error")?;
        }
        for &value in &sweep.values {
            let key = fmt_f64(value);
            if let Some(row) = done.iter().find(|(v, _)| *v == key) {
                rows.push(row.clone());
                continue;
            }
            let line = match self.sweep_point(&sweep.axis, value) {
                Ok((mean, std)) => format!("{},{},", fmt_f64(mean), fmt_f64(std)),
                Err(CliError::Config(msg)) => return Err(CliError::Config(msg)),
                Err(err) => format!(",,{}", err.to_string().replace([',', '\n'], ";")),
            };
            writeln!(file, "{key},{line}")?;
            file.flush()?;
            rows.push((key, line));
        }
        drop(file);

        // A scaling fit accompanies population-size sweeps.
        if sweep.axis == "n_mc" {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|(v, line)| {
                    let mut parts = line.split(',');
                    let _mean = parts.next()?;
                    let std: f64 = parts.next()?.parse().ok()?;
                    let value: f64 = v.parse().ok()?;
                    (std > 0.0).then_some((value, std))
                })
                .collect();
            if points.len() >= 4 {
                let fit = scaling_fit(&points)?;
                self.record("fit_exponent", fit.exponent);
                self.csv(
                    "fit.csv",
                    &["exponent", "prefactor", "residual"],
                    vec![vec![
                        Cell::from(fit.exponent),
                        Cell::from(fit.prefactor),
                        Cell::from(fit.residual),
                    ]],
                )?;
            }
        }
        Ok(())
    }
}

fn read_sweep_rows(path: &Path) -> Vec<(String, String)> {
    let Ok(text) = fs::read_to_string(path) else {
        return Vec::new();
    };
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let (value, rest) = line.split_once(',')?;
            Some((value.to_string(), rest.to_string()))
        })
        .collect()
}

/// Executes a full run: pipeline, manifest, plot scripts.
pub fn run_from_config(
    config: &Config,
    out_dir: &Path,
    workers: usize,
) -> Result<RunManifest, CliError> {
    let metrics = config.metric_list()?;
    fs::create_dir_all(out_dir)?;

    // Resume bookkeeping: a sweep may only continue into a directory whose
    // manifest carries the same run id.
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() {
        let previous: Option<serde_json::Value> = fs::read_to_string(&manifest_path)
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok());
        let same_run = previous
            .and_then(|v| v.get("run_id").and_then(|id| id.as_str().map(String::from)))
            .map(|id| id == config.run_id())
            .unwrap_or(false);
        if !same_run {
            let sweep_path = out_dir.join("sweep.csv");
            if sweep_path.exists() {
                fs::remove_file(&sweep_path)?;
            }
        }
    }

    let mut pipeline = Pipeline::new(config, out_dir)?;
    pipeline.execute(&metrics)?;
    let manifest = pipeline.into_manifest(workers, &config.metrics.list);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    plots::emit_plot_scripts(config, out_dir)?;
    Ok(manifest)
}

/// Writes the oracle validation report and returns whether everything passed.
pub fn run_validation(out_dir: &Path) -> Result<bool, CliError> {
    fs::create_dir_all(out_dir)?;
    let reports = aqis::oracle::run_validation_suite();
    let mut all_pass = true;
    let rows: Vec<Vec<Cell>> = reports
        .iter()
        .map(|r| {
            all_pass &= r.pass;
            println!(
                "{:6} {} (deviation {:.3e}, tolerance {:.3e})",
                if r.pass { "PASS" } else { "FAIL" },
                r.check,
                r.deviation,
                r.tolerance
            );
            vec![
                Cell::from(r.check.as_str()),
                Cell::from(r.deviation),
                Cell::from(r.tolerance),
                Cell::from(if r.pass { "true" } else { "false" }),
            ]
        })
        .collect();
    write_csv(
        out_dir.join("validate.csv"),
        &["check", "deviation", "tolerance", "pass"],
        rows,
    )?;
    Ok(all_pass)
}

