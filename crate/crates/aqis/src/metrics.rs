//! Scrambling diagnostics: post-cycle order parameter, tau-sweep statistics
//! and their scaling fit, Loschmidt echo (adiabatic closed forms plus an
//! exact small-system cross-check), the adiabatic OTOC, and the
//! phase-uniformity test.

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Parity};
use crate::propagation::{
    evolve_exact, wrap_phase_positive, EvolutionControls, PhaseTable, QuadratureControls,
    RampProtocol,
};
use crate::spectral::{EigenObservable, SpectralDecomposition};
use crate::state::{expand_in_eigenbasis, PureState, State};
use num_complex::Complex64;
use rayon::prelude::*;

/// Which bilinear sum evaluates the post-cycle expectation value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumMode {
    /// All pairs of opposite-parity eigenstates (the exact adiabatic value).
    Full,
    /// Doublet-diagonal approximation: only equal-`k` pairs contribute.
    DoubletDiagonal,
}

/// The tau-independent part of the post-cycle expectation value: the
/// observable's eigenbasis cross block weighted by the state's coherences.
/// Evaluating one protocol then costs a single complex matrix-vector product.
#[derive(Debug, Clone)]
pub struct CycleObservable {
    n_even: usize,
    n_odd: usize,
    /// Column-major `G[k, k'] = X[k, k'] * sum_j w_j conj(c^j_{k,+}) c^j_{k',-}`.
    weighted: Vec<Complex64>,
}

impl CycleObservable {
    pub fn new(state: &State, x: &EigenObservable) -> Result<Self> {
        let (n_even, n_odd) = state.model().sector_dims();
        if x.n_even != n_even || x.n_odd != n_odd {
            return Err(Error::DimensionMismatch(
                "eigenbasis observable does not match the state's sectors".into(),
            ));
        }
        let mut weighted = vec![Complex64::new(0.0, 0.0); n_even * n_odd];
        for (w, member) in state.components() {
            let (even, odd) = member.eigen_split()?;
            let even_support: Vec<usize> = (0..n_even).filter(|&k| even[k].norm_sqr() > 0.0).collect();
            for (ko, co) in odd.iter().enumerate() {
                if co.norm_sqr() == 0.0 {
                    continue;
                }
                let col = x.column(ko);
                let out = &mut weighted[ko * n_even..(ko + 1) * n_even];
                for &ke in &even_support {
                    out[ke] += w * even[ke].conj() * co * col[ke];
                }
            }
        }
        Ok(CycleObservable {
            n_even,
            n_odd,
            weighted,
        })
    }

    /// Expectation value after the adiabatic cycle with the given phases.
    pub fn expectation(&self, phases: &PhaseTable, mode: SumMode) -> Result<f64> {
        if phases.rates_even.len() != self.n_even || phases.rates_odd.len() != self.n_odd {
            return Err(Error::DimensionMismatch(
                "phase table does not match the observable's sectors".into(),
            ));
        }
        match mode {
            SumMode::Full => {
                let mut tmp = vec![Complex64::new(0.0, 0.0); self.n_even];
                for ko in 0..self.n_odd {
                    let factor = Complex64::from_polar(1.0, -phases.phase(Parity::Odd, ko));
                    let col = &self.weighted[ko * self.n_even..(ko + 1) * self.n_even];
                    for (acc, gkk) in tmp.iter_mut().zip(col) {
                        *acc += gkk * factor;
                    }
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for (ke, t) in tmp.iter().enumerate() {
                    acc += Complex64::from_polar(1.0, phases.phase(Parity::Even, ke)) * t;
                }
                Ok(2.0 * acc.re)
            }
            SumMode::DoubletDiagonal => {
                let pairs = self.n_even.min(self.n_odd);
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..pairs {
                    acc += self.weighted[k * self.n_even + k]
                        * Complex64::from_polar(1.0, phases.delta_phi(k));
                }
                Ok(2.0 * acc.re)
            }
        }
    }

    /// Expectation value before the cycle (all phases zero).
    pub fn initial(&self, mode: SumMode) -> f64 {
        match mode {
            SumMode::Full => 2.0 * self.weighted.iter().sum::<Complex64>().re,
            SumMode::DoubletDiagonal => {
                let pairs = self.n_even.min(self.n_odd);
                2.0 * (0..pairs)
                    .map(|k| self.weighted[k * self.n_even + k])
                    .sum::<Complex64>()
                    .re
            }
        }
    }
}

/// Post-cycle expectation value of the symmetry-breaking observable under
/// the adiabatic propagator.
pub fn post_cycle_expectation(
    state: &State,
    phases: &PhaseTable,
    x: &EigenObservable,
    mode: SumMode,
) -> Result<f64> {
    CycleObservable::new(state, x)?.expectation(phases, mode)
}

// ---------------------------------------------------------------------------
// Tau sweeps
// ---------------------------------------------------------------------------

/// Adiabaticity is assumed from this half-cycle duration on.
pub const TAU_ADIABATIC_MIN: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct TauSweepSeries {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population variance of the series around its mean.
    pub variance: f64,
}

impl TauSweepSeries {
    fn from_values(taus: Vec<f64>, values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        TauSweepSeries {
            taus,
            values,
            mean,
            variance,
        }
    }
}

/// Post-cycle expectation over an equally spaced grid of half-cycle
/// durations. The phase rates are tau-independent, so one quadrature (the
/// `rates` table) serves the entire sweep.
pub fn tau_sweep(
    state: &State,
    x: &EigenObservable,
    rates: &PhaseTable,
    tau0: f64,
    tau1: f64,
    samples: usize,
    mode: SumMode,
) -> Result<TauSweepSeries> {
    if samples < 2 {
        return Err(Error::invalid("a tau sweep needs at least 2 samples"));
    }
    if !(tau0.is_finite() && tau1.is_finite()) || tau0 > tau1 {
        return Err(Error::invalid("invalid tau interval"));
    }
    if tau0 < TAU_ADIABATIC_MIN {
        return Err(Error::invalid(format!(
            "tau0 = {tau0} is below the adiabatic regime (>= {TAU_ADIABATIC_MIN})"
        )));
    }
    let cycle = CycleObservable::new(state, x)?;
    let taus: Vec<f64> = (0..samples)
        .map(|i| tau0 + (tau1 - tau0) * i as f64 / (samples - 1) as f64)
        .collect();
    let values: Vec<f64> = taus
        .par_iter()
        .map(|&tau| cycle.expectation(&rates.with_tau(tau), mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(TauSweepSeries::from_values(taus, values))
}

/// Scrambling effectiveness: the standard deviation of the sweep series.
pub fn scrambling_sigma(series: &TauSweepSeries) -> f64 {
    series.variance.sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct ScalingFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// Root-mean-square residual in log-log coordinates.
    pub residual: f64,
}

/// Least-squares power-law fit `sigma = prefactor * x^exponent` in log-log
/// coordinates.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::invalid("scaling fit needs at least 4 points"));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::invalid("scaling fit needs positive data"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::invalid("degenerate abscissae in scaling fit"));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residual = (logs
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ScalingFit {
        exponent: slope,
        prefactor: intercept.exp(),
        residual,
    })
}

// ---------------------------------------------------------------------------
// Loschmidt echo
// ---------------------------------------------------------------------------

/// Which frequencies enter the adiabatic echo exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoInterpretation {
    /// Path-averaged energies (phase rates); tau-independent by construction.
    PhaseRate,
    /// Instantaneous energies at the cycle base point, matching a protocol
    /// that holds `g = g0` beyond the cycle.
    HoldAtG0,
    /// Exact propagation (no adiabatic approximation).
    Exact,
}

#[derive(Debug, Clone)]
pub struct EchoCurve {
    pub delta_t: Vec<f64>,
    pub values: Vec<f64>,
    pub interpretation: EchoInterpretation,
}

fn echo_from_frequencies(
    populations_even: &[f64],
    populations_odd: &[f64],
    freq_even: &[f64],
    freq_odd: &[f64],
    grid: &[f64],
    interpretation: EchoInterpretation,
) -> EchoCurve {
    let total: f64 = populations_even.iter().chain(populations_odd).sum();
    let values: Vec<f64> = grid
        .iter()
        .map(|&dt| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, w) in populations_even.iter().zip(freq_even) {
                if *p > 0.0 {
                    acc += p * Complex64::from_polar(1.0, dt * w);
                }
            }
            for (p, w) in populations_odd.iter().zip(freq_odd) {
                if *p > 0.0 {
                    acc += p * Complex64::from_polar(1.0, dt * w);
                }
            }
            (acc.norm() / total).min(1.0)
        })
        .collect();
    EchoCurve {
        delta_t: grid.to_vec(),
        values,
        interpretation,
    }
}

fn populations(state: &PureState) -> Result<(Vec<f64>, Vec<f64>)> {
    let (even, odd) = state.eigen_split()?;
    Ok((
        even.iter().map(|c| c.norm_sqr()).collect(),
        odd.iter().map(|c| c.norm_sqr()).collect(),
    ))
}

/// Adiabatic echo `L(dt) = |sum |c_{k,p}|^2 e^{i dt w_{k,p}}|` with the
/// phase-rate reading of the exponent (dimensionally consistent and
/// tau-independent). `L(0) = 1` exactly.
pub fn loschmidt_adiabatic(
    state: &PureState,
    rates: &PhaseTable,
    grid: &[f64],
) -> Result<EchoCurve> {
    let (pe, po) = populations(state)?;
    if pe.len() != rates.rates_even.len() || po.len() != rates.rates_odd.len() {
        return Err(Error::DimensionMismatch(
            "phase table does not match the state's sectors".into(),
        ));
    }
    Ok(echo_from_frequencies(
        &pe,
        &po,
        &rates.rates_even,
        &rates.rates_odd,
        grid,
        EchoInterpretation::PhaseRate,
    ))
}

/// Adiabatic echo under the alternate reading: the exponent carries the
/// instantaneous energies at `g0` (protocol held fixed after the cycle).
pub fn loschmidt_hold_form(
    state: &PureState,
    decomp: &SpectralDecomposition,
    grid: &[f64],
) -> Result<EchoCurve> {
    if state.eigen_coupling()? != decomp.g {
        return Err(Error::BasisMismatch(
            "state and decomposition disagree on the eigenbasis".into(),
        ));
    }
    let (pe, po) = populations(state)?;
    Ok(echo_from_frequencies(
        &pe,
        &po,
        &decomp.even.energies,
        &decomp.odd.energies,
        grid,
        EchoInterpretation::HoldAtG0,
    ))
}

/// Exact echo for small systems: one exact propagation through the cycle,
/// then the overlap against the same state freely evolved at `g0` for each
/// time mismatch (`U(2 tau + dt) = hold(dt) U(2 tau)` by convention).
pub fn loschmidt_exact_small(
    state: &PureState,
    protocol: &RampProtocol,
    decomp: &SpectralDecomposition,
    controls: &EvolutionControls,
    grid: &[f64],
) -> Result<EchoCurve> {
    const EXACT_ECHO_DIM_CAP: usize = 256;
    if state.model.dim() > EXACT_ECHO_DIM_CAP {
        return Err(Error::invalid(format!(
            "exact echo is limited to dimension {EXACT_ECHO_DIM_CAP}"
        )));
    }
    if decomp.g != protocol.g0 {
        return Err(Error::BasisMismatch(
            "the echo decomposition must live at the protocol base point".into(),
        ));
    }
    let trajectory = evolve_exact(state, protocol, controls)?;
    let evolved = expand_in_eigenbasis(&trajectory.final_state, decomp)?;
    let (pe, po) = populations(&evolved)?;
    Ok(echo_from_frequencies(
        &pe,
        &po,
        &decomp.even.energies,
        &decomp.odd.energies,
        grid,
        EchoInterpretation::Exact,
    ))
}

/// Single-mismatch exact echo.
pub fn loschmidt_exact_small_at(
    state: &PureState,
    protocol: &RampProtocol,
    decomp: &SpectralDecomposition,
    controls: &EvolutionControls,
    delta_t: f64,
) -> Result<f64> {
    Ok(loschmidt_exact_small(state, protocol, decomp, controls, &[delta_t])?.values[0])
}

// ---------------------------------------------------------------------------
// OTOC
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OtocSeries {
    pub taus: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Equal-time fourth moment `<psi_0| O^4 |psi_0>`.
    pub normalization: f64,
    /// `|O(2 tau)| / O(0)`.
    pub rescaled: Vec<f64>,
}

struct EigenVector {
    even: Vec<Complex64>,
    odd: Vec<Complex64>,
}

impl EigenVector {
    fn from_state(state: &PureState) -> Result<Self> {
        let (even, odd) = state.eigen_split()?;
        Ok(EigenVector {
            even: even.to_vec(),
            odd: odd.to_vec(),
        })
    }

    fn apply_observable(&self, x: &EigenObservable) -> EigenVector {
        let mut even = vec![Complex64::new(0.0, 0.0); self.even.len()];
        let mut odd = vec![Complex64::new(0.0, 0.0); self.odd.len()];
        x.apply(&self.even, &self.odd, &mut even, &mut odd);
        EigenVector { even, odd }
    }

    fn apply_phases(&mut self, phases: &PhaseTable, sign: f64) {
        for (k, c) in self.even.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, sign * phases.phase(Parity::Even, k));
        }
        for (k, c) in self.odd.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, sign * phases.phase(Parity::Odd, k));
        }
    }

    fn inner(&self, other: &EigenVector) -> Complex64 {
        let e: Complex64 = self.even.iter().zip(&other.even).map(|(a, b)| a.conj() * b).sum();
        let o: Complex64 = self.odd.iter().zip(&other.odd).map(|(a, b)| a.conj() * b).sum();
        e + o
    }
}

/// Four-point adiabatic OTOC `<psi_0| P' V P V P' V P V |psi_0>` with
/// `P = diag(e^{-i phi})` and `V` the observable in the eigenbasis, evaluated
/// right-to-left as four matrix-vector products.
pub fn otoc_adiabatic(
    state: &PureState,
    x: &EigenObservable,
    phases: &PhaseTable,
) -> Result<Complex64> {
    let psi0 = EigenVector::from_state(state)?;
    if psi0.even.len() != x.n_even || psi0.odd.len() != x.n_odd {
        return Err(Error::DimensionMismatch(
            "eigenbasis observable does not match the state's sectors".into(),
        ));
    }
    let mut v = psi0.apply_observable(x);
    v.apply_phases(phases, -1.0);
    v = v.apply_observable(x);
    v.apply_phases(phases, 1.0);
    v = v.apply_observable(x);
    v.apply_phases(phases, -1.0);
    v = v.apply_observable(x);
    v.apply_phases(phases, 1.0);
    Ok(psi0.inner(&v))
}

/// Equal-time fourth moment through the same eigenbasis products.
pub fn otoc_equal_time(state: &PureState, x: &EigenObservable) -> Result<f64> {
    let psi0 = EigenVector::from_state(state)?;
    let mut v = psi0.apply_observable(x);
    for _ in 0..3 {
        v = v.apply_observable(x);
    }
    Ok(psi0.inner(&v).re)
}

/// Adiabatic OTOC over a tau grid, rescaled by the equal-time value.
pub fn otoc_adiabatic_series(
    state: &PureState,
    x: &EigenObservable,
    rates: &PhaseTable,
    taus: &[f64],
) -> Result<OtocSeries> {
    let normalization = otoc_equal_time(state, x)?;
    let values: Vec<Complex64> = taus
        .par_iter()
        .map(|&tau| otoc_adiabatic(state, x, &rates.with_tau(tau)))
        .collect::<Result<Vec<_>>>()?;
    let rescaled = values.iter().map(|v| v.norm() / normalization).collect();
    Ok(OtocSeries {
        taus: taus.to_vec(),
        values,
        normalization,
        rescaled,
    })
}

// ---------------------------------------------------------------------------
// Phase uniformity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct UniformityReport {
    /// First doublet index of the sample.
    pub k_first: usize,
    /// `delta phi_k mod 2 pi`, in doublet order.
    pub deltas: Vec<f64>,
    /// One-sample Kolmogorov-Smirnov statistic against uniform on [0, 2 pi).
    pub ks_statistic: f64,
}

/// One-sample Kolmogorov-Smirnov statistic of `sample` (values in
/// `[0, period)`) against the uniform distribution on that interval.
pub fn ks_uniform_statistic(sample: &[f64], period: f64) -> f64 {
    let mut u: Vec<f64> = sample.iter().map(|x| x / period).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = u.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in u.iter().enumerate() {
        d = d.max((i as f64 + 1.0) / n - x).max(x - i as f64 / n);
    }
    d
}

/// Wrapped doublet phase differences over a range of doublets, with their
/// uniformity statistic.
pub fn phase_uniformity(
    phases: &PhaseTable,
    k_range: std::ops::Range<usize>,
) -> Result<UniformityReport> {
    if k_range.is_empty() {
        return Err(Error::invalid("empty doublet range"));
    }
    if k_range.end > phases.doublet_count() {
        return Err(Error::invalid(format!(
            "doublet range end {} exceeds table size {}",
            k_range.end,
            phases.doublet_count()
        )));
    }
    let deltas: Vec<f64> = k_range
        .clone()
        .map(|k| wrap_phase_positive(phases.delta_phi(k)))
        .collect();
    let ks_statistic = ks_uniform_statistic(&deltas, std::f64::consts::TAU);
    Ok(UniformityReport {
        k_first: k_range.start,
        deltas,
        ks_statistic,
    })
}

// ---------------------------------------------------------------------------
// Order-parameter curve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct OrderParameterPoint {
    pub g1: f64,
    pub mean: f64,
    pub std_dev: f64,
}

/// Tau-averaged post-cycle expectation value as a function of the turning
/// coupling `g1`, with one-standard-deviation error bars.
#[allow(clippy::too_many_arguments)]
pub fn order_parameter_curve(
    state: &State,
    x: &EigenObservable,
    model: &ModelSpec,
    g0: f64,
    g1_values: &[f64],
    tau_range: (f64, f64),
    tau_samples: usize,
    quadrature: &QuadratureControls,
) -> Result<Vec<OrderParameterPoint>> {
    let cycle = CycleObservable::new(state, x)?;
    let (tau0, tau1) = tau_range;
    let mut points = Vec::with_capacity(g1_values.len());
    for &g1 in g1_values {
        // One quadrature per leg, converged at tau0 and reused upward; the
        // residual phase error grows only linearly in tau.
        let protocol = RampProtocol::new(g0, g1, tau0)?;
        let rates = crate::propagation::phase_table(model, &protocol, quadrature)?;
        let taus: Vec<f64> = (0..tau_samples)
            .map(|i| tau0 + (tau1 - tau0) * i as f64 / (tau_samples - 1).max(1) as f64)
            .collect();
        let values: Vec<f64> = taus
            .par_iter()
            .map(|&tau| cycle.expectation(&rates.with_tau(tau), SumMode::Full))
            .collect::<Result<Vec<_>>>()?;
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        points.push(OrderParameterPoint {
            g1,
            mean,
            std_dev: var.sqrt(),
        });
    }
    Ok(points)
}
