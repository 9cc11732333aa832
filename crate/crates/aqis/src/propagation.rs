//! Time-dependent protocols: the triangular coupling ramp, exact RK4
//! Schrödinger propagation (the adiabaticity oracle), and the adiabatic
//! propagator realized through accumulated dynamical phases.
//!
//! The Hamiltonians are real symmetric with a real gauge-fixed eigenbasis, so
//! no geometric phase arises along the ramp; the adiabatic propagator is a
//! pure phase `exp(-i phi_{k,p})` per eigenstate, with
//! `phi_{k,p} = 2 tau / (g1 - g0) * Int E_{k,p}(g) dg` over one leg.

use crate::error::{Error, Result};
use crate::model::{hamiltonian, hamiltonian_parts, BandedMatrix, ModelSpec, Parity};
use crate::spectral::{critical_energy, sector_energies, SpectralDecomposition};
use crate::state::{PureState, State, StateBasis};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;

// ---------------------------------------------------------------------------
// Ramp protocol
// ---------------------------------------------------------------------------

/// Triangular ramp: linear from `g0` to `g1` over `tau`, then mirrored back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampProtocol {
    pub g0: f64,
    pub g1: f64,
    pub tau: f64,
}

impl RampProtocol {
    pub fn new(g0: f64, g1: f64, tau: f64) -> Result<Self> {
        crate::model::validate_coupling(g0)?;
        crate::model::validate_coupling(g1)?;
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        Ok(RampProtocol { g0, g1, tau })
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.tau
    }

    /// g(t) on the closed cycle `[0, 2 tau]`.
    pub fn value(&self, t: f64) -> Result<f64> {
        let slack = 1e-9 * self.duration();
        if t < -slack || t > self.duration() + slack {
            return Err(Error::invalid(format!(
                "t = {t} outside the protocol window [0, {}]",
                self.duration()
            )));
        }
        let t = t.clamp(0.0, self.duration());
        if t <= self.tau {
            Ok(self.g0 + (self.g1 - self.g0) * (t / self.tau))
        } else {
            Ok(self.g1 + (self.g0 - self.g1) * ((t - self.tau) / self.tau))
        }
    }
}

// ---------------------------------------------------------------------------
// Accumulated phases
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct QuadratureControls {
    /// Nodes of the base Simpson grid (refinement doubles the density).
    pub base_nodes: usize,
    /// Refinement stops once no accumulated phase moves by more than this
    /// (radians, after wrapping to (-pi, pi]).
    pub refine_tolerance: f64,
    /// Hard cap on the total node count.
    pub max_nodes: usize,
    /// Density multiplier inside the window where levels cross the critical
    /// energy, where level velocities vary fastest.
    pub esqpt_density_factor: usize,
    /// Restrict the convergence criterion (and crossing detection) to the
    /// lowest `k` levels per sector. The table still carries every level;
    /// this only stops the refinement from chasing levels far above the
    /// populated band (for instance Fock-cutoff artifacts). `None` tracks
    /// all levels.
    pub tracked_levels: Option<usize>,
}

impl Default for QuadratureControls {
    fn default() -> Self {
        QuadratureControls {
            base_nodes: 1025,
            refine_tolerance: 1e-3,
            max_nodes: 300_000,
            esqpt_density_factor: 4,
            tracked_levels: None,
        }
    }
}

/// Accumulated phases for one protocol: path-averaged energies (phase rates)
/// per eigenstate, with `phi_{k,p} = 2 tau * rate_{k,p}` exactly by
/// construction.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    pub protocol: RampProtocol,
    pub rates_even: Vec<f64>,
    pub rates_odd: Vec<f64>,
    /// Total quadrature nodes used at convergence.
    pub node_count: usize,
    /// Largest wrapped phase change in the final refinement step.
    pub estimated_error: f64,
}

impl PhaseTable {
    /// Builds a table directly from phase rates (used by sweeps and tests).
    pub fn from_rates(protocol: RampProtocol, rates_even: Vec<f64>, rates_odd: Vec<f64>) -> Self {
        PhaseTable {
            protocol,
            rates_even,
            rates_odd,
            node_count: 0,
            estimated_error: 0.0,
        }
    }

    /// Reuses the (tau-independent) phase rates for a different half-cycle
    /// duration.
    pub fn with_tau(&self, tau: f64) -> PhaseTable {
        let mut out = self.clone();
        out.protocol.tau = tau;
        out
    }

    pub fn rate(&self, p: Parity, k: usize) -> f64 {
        match p {
            Parity::Even => self.rates_even[k],
            Parity::Odd => self.rates_odd[k],
        }
    }

    pub fn phase(&self, p: Parity, k: usize) -> f64 {
        2.0 * self.protocol.tau * self.rate(p, k)
    }

    pub fn doublet_count(&self) -> usize {
        self.rates_even.len().min(self.rates_odd.len())
    }

    /// Phase difference of doublet `k` over the cycle.
    pub fn delta_phi(&self, k: usize) -> f64 {
        self.phase(Parity::Even, k) - self.phase(Parity::Odd, k)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_phase(phi: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = phi % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Wraps an angle into [0, 2 pi).
pub fn wrap_phase_positive(phi: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = phi % two_pi;
    if r < 0.0 {
        r += two_pi;
    }
    r
}

/// Composite Simpson quadrature of every eigenvalue branch over the ramp leg,
/// with within-sector ascending order as the adiabatic labeling (valid since
/// unreduced tridiagonal blocks cannot cross within a sector).
///
/// The leg is split into segments, with extra density where levels cross the
/// critical energy (level velocities vary fastest there). Refinement doubles
/// the density of a segment until its own phase contribution is stable, and
/// the table is accepted once the accumulated phases move by less than the
/// tolerance (wrapped, at this protocol's `tau`) between rounds.
pub fn phase_table(
    model: &ModelSpec,
    protocol: &RampProtocol,
    controls: &QuadratureControls,
) -> Result<PhaseTable> {
    model.validate()?;
    if controls.base_nodes < 5 {
        return Err(Error::invalid("quadrature needs at least 5 base nodes"));
    }
    if protocol.g0 == protocol.g1 {
        // Static protocol: the phase is 2 tau E(g0) directly.
        let (even, odd) = sector_energies(model, protocol.g0)?;
        return Ok(PhaseTable {
            protocol: *protocol,
            rates_even: even,
            rates_odd: odd,
            node_count: 1,
            estimated_error: 0.0,
        });
    }
    let a = protocol.g0.min(protocol.g1);
    let b = protocol.g0.max(protocol.g1);

    let mut cache: HashMap<u64, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let evaluate =
        |gs: &[f64], cache: &mut HashMap<u64, (Vec<f64>, Vec<f64>)>| -> Result<()> {
            let missing: Vec<f64> = {
                let mut seen: Vec<f64> = Vec::new();
                for &g in gs {
                    if !cache.contains_key(&g.to_bits()) && !seen.iter().any(|&x| x == g) {
                        seen.push(g);
                    }
                }
                seen
            };
            let computed: Vec<(u64, (Vec<f64>, Vec<f64>))> = missing
                .par_iter()
                .map(|&g| sector_energies(model, g).map(|e| (g.to_bits(), e)))
                .collect::<Result<Vec<_>>>()?;
            cache.extend(computed);
            Ok(())
        };

    // Base scan for the critical-energy crossing window.
    let base_grid = uniform_grid(a, b, controls.base_nodes);
    evaluate(&base_grid, &mut cache)?;
    let tracked = controls.tracked_levels.unwrap_or(usize::MAX);
    let window = crossing_window(model, &base_grid, &cache, tracked);
    let mut segments = build_segments(a, b, window, controls);

    // Per-segment convergence budget: the frozen segments together may move
    // the total by at most a quarter of the tolerance.
    let seg_tol = 0.25 * controls.refine_tolerance / segments.len() as f64;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    loop {
        let mut node_total = 0usize;
        for seg in segments.iter_mut() {
            let nodes = seg.node_count(controls.base_nodes, a, b);
            node_total += nodes;
            if seg.converged {
                continue;
            }
            let grid = uniform_grid(seg.lo, seg.hi, nodes);
            evaluate(&grid, &mut cache)?;
            let integrals = simpson_sector_integrals(&grid, &cache);
            if let Some((pe, po)) = &seg.integrals {
                let scale = 2.0 * protocol.tau / (b - a);
                let delta = pe
                    .iter()
                    .zip(&integrals.0)
                    .take(tracked)
                    .chain(po.iter().zip(&integrals.1).take(tracked))
                    .map(|(o, n)| wrap_phase(scale * (n - o)).abs())
                    .fold(0.0, f64::max);
                if delta < seg_tol {
                    seg.converged = true;
                }
            }
            seg.integrals = Some(integrals);
            if !seg.converged {
                seg.density *= 2;
            }
        }
        if node_total > controls.max_nodes {
            return Err(Error::Quadrature(format!(
                "phase quadrature did not converge within {} nodes for the \
                 {:?} leg [{a}, {b}] at tau = {}",
                controls.max_nodes, model, protocol.tau
            )));
        }

        let mut rates_even: Vec<f64> = Vec::new();
        let mut rates_odd: Vec<f64> = Vec::new();
        for seg in &segments {
            let (se, so) = seg.integrals.as_ref().expect("segment integrated");
            accumulate(&mut rates_even, se);
            accumulate(&mut rates_odd, so);
        }
        let inv_len = 1.0 / (b - a);
        for r in rates_even.iter_mut().chain(rates_odd.iter_mut()) {
            *r *= inv_len;
        }

        if let Some((pe, po)) = &previous {
            let err = phase_change(pe, &rates_even, protocol.tau, tracked)
                .max(phase_change(po, &rates_odd, protocol.tau, tracked));
            if err < controls.refine_tolerance {
                return Ok(PhaseTable {
                    protocol: *protocol,
                    rates_even,
                    rates_odd,
                    node_count: node_total,
                    estimated_error: err,
                });
            }
        }
        previous = Some((rates_even, rates_odd));
    }
}

fn phase_change(old: &[f64], new: &[f64], tau: f64, tracked: usize) -> f64 {
    old.iter()
        .zip(new)
        .take(tracked)
        .map(|(o, n)| wrap_phase(2.0 * tau * (n - o)).abs())
        .fold(0.0, f64::max)
}

fn accumulate(acc: &mut Vec<f64>, inc: &[f64]) {
    if acc.is_empty() {
        acc.extend_from_slice(inc);
    } else {
        for (a, i) in acc.iter_mut().zip(inc) {
            *a += i;
        }
    }
}

fn uniform_grid(lo: f64, hi: f64, nodes: usize) -> Vec<f64> {
    let panels = (nodes - 1) as f64;
    (0..nodes)
        .map(|i| {
            if i == nodes - 1 {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / panels)
            }
        })
        .collect()
}

/// Simpson integral of every eigenvalue branch over one uniform grid.
fn simpson_sector_integrals(
    grid: &[f64],
    cache: &HashMap<u64, (Vec<f64>, Vec<f64>)>,
) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    let (first_even, first_odd) = &cache[&grid[0].to_bits()];
    let mut even = vec![0.0; first_even.len()];
    let mut odd = vec![0.0; first_odd.len()];
    for (i, g) in grid.iter().enumerate() {
        let w = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let (es, os) = &cache[&g.to_bits()];
        for (acc, e) in even.iter_mut().zip(es) {
            *acc += w * e;
        }
        for (acc, e) in odd.iter_mut().zip(os) {
            *acc += w * e;
        }
    }
    let scale = h / 3.0;
    for v in even.iter_mut().chain(odd.iter_mut()) {
        *v *= scale;
    }
    (even, odd)
}

/// The coupling window (snapped to base-grid nodes) in which any level
/// crosses the critical excitation energy.
fn crossing_window(
    model: &ModelSpec,
    grid: &[f64],
    cache: &HashMap<u64, (Vec<f64>, Vec<f64>)>,
    tracked: usize,
) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for pair in grid.windows(2) {
        let (ga, gb) = (pair[0], pair[1]);
        let (Some(ea), Some(eb)) = (critical_energy(model, ga), critical_energy(model, gb)) else {
            continue;
        };
        let (le, lo_) = &cache[&ga.to_bits()];
        let (re, ro_) = &cache[&gb.to_bits()];
        let crossing = le
            .iter()
            .zip(re)
            .take(tracked)
            .chain(lo_.iter().zip(ro_).take(tracked))
            .any(|(x, y)| (x - ea).signum() != (y - eb).signum());
        if crossing {
            lo = lo.min(ga);
            hi = hi.max(gb);
        }
    }
    (lo < hi).then_some((lo, hi))
}

#[derive(Debug, Clone)]
struct Segment {
    lo: f64,
    hi: f64,
    /// Current density multiplier over the base grid (doubles on refinement).
    density: usize,
    converged: bool,
    /// Simpson integrals of every level over this segment, (even, odd).
    integrals: Option<(Vec<f64>, Vec<f64>)>,
}

impl Segment {
    fn node_count(&self, base_nodes: usize, a: f64, b: f64) -> usize {
        let base_panels = (base_nodes - 1) as f64;
        let fraction = (self.hi - self.lo) / (b - a);
        let panels = (base_panels * fraction * self.density as f64).ceil() as usize;
        let panels = panels.max(2) + panels % 2;
        panels + 1
    }
}

/// Splits the leg into uniform slices; slices intersecting the
/// critical-energy crossing window start at boosted density.
fn build_segments(
    a: f64,
    b: f64,
    window: Option<(f64, f64)>,
    controls: &QuadratureControls,
) -> Vec<Segment> {
    const SLICES: usize = 16;
    let width = (b - a) / SLICES as f64;
    (0..SLICES)
        .map(|i| {
            let lo = a + i as f64 * width;
            let hi = if i == SLICES - 1 { b } else { a + (i + 1) as f64 * width };
            let boosted = window.map_or(false, |(wl, wh)| hi > wl && lo < wh);
            Segment {
                lo,
                hi,
                density: if boosted {
                    controls.esqpt_density_factor.max(1)
                } else {
                    1
                },
                converged: false,
                integrals: None,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Exact propagation (RK4)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct EvolutionControls {
    /// Target for `||H|| dt`; must stay at or below 0.05.
    pub step_norm_product: f64,
    /// Gate on the final-state difference between the dt and dt/2 runs.
    pub convergence_tol: f64,
    /// Norm drift that aborts the run.
    pub norm_drift_tol: f64,
    /// Approximate number of trajectory samples to record.
    pub sample_target: usize,
}

impl Default for EvolutionControls {
    fn default() -> Self {
        EvolutionControls {
            step_norm_product: 0.01,
            convergence_tol: 1e-6,
            norm_drift_tol: 1e-6,
            sample_target: 1024,
        }
    }
}

/// Sampled exact evolution through one full cycle.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub couplings: Vec<f64>,
    /// Order parameter along the cycle (`S_x` or `x`).
    pub order_parameter: Vec<f64>,
    /// `S_z` or `sigma_z`.
    pub inversion: Vec<f64>,
    pub energy: Vec<f64>,
    pub norms: Vec<f64>,
    pub final_state: PureState,
    pub dt: f64,
    pub steps: usize,
    /// Final-state difference between the dt and dt/2 runs.
    pub halving_difference: f64,
}

struct Rk4Workspace {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    stage: Vec<Complex64>,
}

impl Rk4Workspace {
    fn new(dim: usize) -> Self {
        let zero = vec![Complex64::new(0.0, 0.0); dim];
        Rk4Workspace {
            k1: zero.clone(),
            k2: zero.clone(),
            k3: zero.clone(),
            k4: zero.clone(),
            stage: zero,
        }
    }
}

/// out = -i (statics + g coupling) x
fn schrodinger_rhs(
    statics: &BandedMatrix,
    coupling: &BandedMatrix,
    g: f64,
    x: &[Complex64],
    out: &mut [Complex64],
) {
    out.fill(Complex64::new(0.0, 0.0));
    statics.apply_complex_scaled(1.0, x, out);
    coupling.apply_complex_scaled(g, x, out);
    for v in out.iter_mut() {
        *v = Complex64::new(v.im, -v.re);
    }
}

#[allow(clippy::too_many_arguments)]
fn rk4_run(
    psi0: &[Complex64],
    statics: &BandedMatrix,
    coupling: &BandedMatrix,
    g_of_t: &dyn Fn(f64) -> f64,
    t0: f64,
    steps: usize,
    dt: f64,
    mut on_step: impl FnMut(usize, f64, &[Complex64]),
) -> Vec<Complex64> {
    let dim = psi0.len();
    let mut psi = psi0.to_vec();
    let mut ws = Rk4Workspace::new(dim);
    on_step(0, t0, &psi);
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        let g_mid = g_of_t(t + 0.5 * dt);
        schrodinger_rhs(statics, coupling, g_of_t(t), &psi, &mut ws.k1);
        for i in 0..dim {
            ws.stage[i] = psi[i] + 0.5 * dt * ws.k1[i];
        }
        schrodinger_rhs(statics, coupling, g_mid, &ws.stage, &mut ws.k2);
        for i in 0..dim {
            ws.stage[i] = psi[i] + 0.5 * dt * ws.k2[i];
        }
        schrodinger_rhs(statics, coupling, g_mid, &ws.stage, &mut ws.k3);
        for i in 0..dim {
            ws.stage[i] = psi[i] + dt * ws.k3[i];
        }
        schrodinger_rhs(statics, coupling, g_of_t(t + dt), &ws.stage, &mut ws.k4);
        let scale = dt / 6.0;
        for i in 0..dim {
            psi[i] += scale * (ws.k1[i] + 2.0 * (ws.k2[i] + ws.k3[i]) + ws.k4[i]);
        }
        on_step(step + 1, t + dt, &psi);
    }
    psi
}

/// Exact Schrödinger propagation of a physical-basis state through the ramp,
/// with a mandatory step-halving convergence gate.
pub fn evolve_exact(
    state: &PureState,
    protocol: &RampProtocol,
    controls: &EvolutionControls,
) -> Result<Trajectory> {
    if state.basis != StateBasis::Physical {
        return Err(Error::BasisMismatch(
            "exact propagation expects a physical-basis state".into(),
        ));
    }
    if controls.step_norm_product > 0.05 {
        return Err(Error::Integrator(format!(
            "step control ||H|| dt = {} violates the 0.05 bound",
            controls.step_norm_product
        )));
    }
    let model = state.model;
    let (statics, coupling) = hamiltonian_parts(&model)?;
    let hnorm = hamiltonian(&model, protocol.g0)?
        .norm_bound()
        .max(hamiltonian(&model, protocol.g1)?.norm_bound());
    let duration = protocol.duration();
    let steps = ((duration * hnorm / controls.step_norm_product).ceil() as usize).max(2);
    let dt = duration / steps as f64;
    let stride = (steps / controls.sample_target.max(1)).max(1);

    let g_of_t = |t: f64| protocol.value(t).expect("t inside protocol window");

    let order_obs = crate::model::observable_matrix(&model, model.order_parameter_kind())?;
    let inversion_obs = crate::model::observable_matrix(
        &model,
        match model {
            ModelSpec::Lmg { .. } => crate::model::ObservableKind::Sz,
            ModelSpec::Qrm { .. } => crate::model::ObservableKind::SigmaZ,
        },
    )?;

    let mut times = Vec::new();
    let mut couplings = Vec::new();
    let mut order_parameter = Vec::new();
    let mut inversion = Vec::new();
    let mut energy = Vec::new();
    let mut norms = Vec::new();
    let mut drift_error: Option<f64> = None;

    let coarse = rk4_run(
        &state.coeffs,
        &statics,
        &coupling,
        &g_of_t,
        0.0,
        steps,
        dt,
        |step, t, psi| {
            if step % stride != 0 && step != steps {
                return;
            }
            let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > controls.norm_drift_tol && drift_error.is_none() {
                drift_error = Some(norm);
            }
            let g = g_of_t(t);
            times.push(t);
            couplings.push(g);
            order_parameter.push(order_obs.matrix.expectation(psi));
            inversion.push(inversion_obs.matrix.expectation(psi));
            energy.push(statics.expectation(psi) + g * coupling.expectation(psi));
            norms.push(norm);
        },
    );
    if let Some(norm) = drift_error {
        return Err(Error::Integrator(format!(
            "norm drifted to {norm}; reduce the step size"
        )));
    }

    // Convergence gate: halve the step and require agreement.
    let fine = rk4_run(
        &state.coeffs,
        &statics,
        &coupling,
        &g_of_t,
        0.0,
        2 * steps,
        0.5 * dt,
        |_, _, _| {},
    );
    let halving_difference = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if halving_difference > controls.convergence_tol {
        return Err(Error::Integrator(format!(
            "step-halving check failed: final states differ by {halving_difference:.3e} \
             (tolerance {:.3e})",
            controls.convergence_tol
        )));
    }

    Ok(Trajectory {
        times,
        couplings,
        order_parameter,
        inversion,
        energy,
        norms,
        final_state: PureState {
            model,
            basis: StateBasis::Physical,
            coeffs: fine,
        },
        dt,
        steps,
        halving_difference,
    })
}

/// RK4 propagation through an explicit piecewise-constant schedule of
/// `(coupling, duration)` segments; steps never straddle a jump.
pub fn evolve_piecewise_constant(
    state: &PureState,
    schedule: &[(f64, f64)],
    controls: &EvolutionControls,
) -> Result<PureState> {
    if state.basis != StateBasis::Physical {
        return Err(Error::BasisMismatch(
            "exact propagation expects a physical-basis state".into(),
        ));
    }
    let model = state.model;
    let (statics, coupling) = hamiltonian_parts(&model)?;
    let mut psi = state.coeffs.clone();
    for &(g, duration) in schedule {
        if duration <= 0.0 {
            return Err(Error::invalid("segment durations must be positive"));
        }
        let hnorm = hamiltonian(&model, g)?.norm_bound();
        let steps = ((duration * hnorm / controls.step_norm_product).ceil() as usize).max(2);
        let dt = duration / steps as f64;
        psi = rk4_run(&psi, &statics, &coupling, &|_| g, 0.0, steps, dt, |_, _, _| {});
    }
    Ok(PureState {
        model,
        basis: StateBasis::Physical,
        coeffs: psi,
    })
}

// ---------------------------------------------------------------------------
// Adiabatic propagation
// ---------------------------------------------------------------------------

/// Applies the adiabatic cycle propagator: every eigenbasis coefficient picks
/// up `exp(-i phi_{k,p})` while populations stay exactly constant.
pub fn adiabatic_cycle(state: &State, phases: &PhaseTable) -> Result<State> {
    let (n_even, n_odd) = state.model().sector_dims();
    if phases.rates_even.len() != n_even || phases.rates_odd.len() != n_odd {
        return Err(Error::DimensionMismatch(
            "phase table does not match the model's sector sizes".into(),
        ));
    }
    state.map_members(|member| {
        let g = member.eigen_coupling()?;
        if g != phases.protocol.g0 {
            return Err(Error::BasisMismatch(format!(
                "state is expanded at g = {g}, protocol starts at g = {}",
                phases.protocol.g0
            )));
        }
        let mut out = member.clone();
        let (even, odd) = out.coeffs.split_at_mut(n_even);
        for (k, c) in even.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, -phases.phase(Parity::Even, k));
        }
        for (k, c) in odd.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, -phases.phase(Parity::Odd, k));
        }
        Ok(out)
    })
}

/// Free evolution at fixed coupling: `c_{k,p} -> c_{k,p} e^{-i E_{k,p} dt}`.
pub fn hold_evolution(
    state: &PureState,
    decomp: &SpectralDecomposition,
    dt: f64,
) -> Result<PureState> {
    if dt < 0.0 {
        return Err(Error::invalid("hold duration must be non-negative"));
    }
    let g = state.eigen_coupling()?;
    if g != decomp.g || state.model != decomp.model {
        return Err(Error::BasisMismatch(
            "state and decomposition disagree on the eigenbasis".into(),
        ));
    }
    let (n_even, _) = state.model.sector_dims();
    let mut out = state.clone();
    let (even, odd) = out.coeffs.split_at_mut(n_even);
    for (k, c) in even.iter_mut().enumerate() {
        *c *= Complex64::from_polar(1.0, -decomp.even.energies[k] * dt);
    }
    for (k, c) in odd.iter_mut().enumerate() {
        *c *= Complex64::from_polar(1.0, -decomp.odd.energies[k] * dt);
    }
    Ok(out)
}
