//! Quantum states and their observable statistics: the initial-state
//! factories, basis changes between the physical and instantaneous
//! eigenbasis, and probability distributions over observables and energies.
//!
//! Mixed states are stored as weighted ensembles of pure states rather than
//! density matrices; every protocol here is unitary, so ensemble evolution is
//! exact and linear in the member count.

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ObservableKind, ObservableMatrix, ParityCharacter};
use crate::spectral::{DoubletTable, SpectralDecomposition};
use crate::tridiag::{self, SymTridiagonal, TridiagEigen};
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

const NORM_TOL: f64 = 1e-10;
const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Relative Boltzmann weight below which a doublet is dropped from the
/// symmetry-breaking thermal ensemble.
const THERMAL_WEIGHT_CUTOFF: f64 = 1e-12;
/// A doublet whose symmetry-breaking matrix element is this small (relative
/// to the largest one) has no well-defined branch sign.
const GAUGE_AMBIGUITY_REL_TOL: f64 = 1e-8;

/// Which basis a coefficient vector lives in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateBasis {
    Physical,
    /// Instantaneous eigenbasis of `H(g)`: all even-sector coefficients
    /// (ascending k) followed by all odd-sector coefficients.
    Eigen { g: f64 },
}

#[derive(Debug, Clone)]
pub struct PureState {
    pub model: ModelSpec,
    pub basis: StateBasis,
    pub coeffs: Vec<Complex64>,
}

impl PureState {
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Even- and odd-sector views of an eigenbasis coefficient vector.
    pub fn eigen_split(&self) -> Result<(&[Complex64], &[Complex64])> {
        match self.basis {
            StateBasis::Eigen { .. } => {
                let (n_even, _) = self.model.sector_dims();
                Ok(self.coeffs.split_at(n_even))
            }
            StateBasis::Physical => Err(Error::BasisMismatch(
                "expected an eigenbasis state".into(),
            )),
        }
    }

    pub fn eigen_coupling(&self) -> Result<f64> {
        match self.basis {
            StateBasis::Eigen { g } => Ok(g),
            StateBasis::Physical => Err(Error::BasisMismatch(
                "expected an eigenbasis state".into(),
            )),
        }
    }

    fn expect_physical(&self) -> Result<()> {
        if self.basis != StateBasis::Physical {
            return Err(Error::BasisMismatch("expected a physical-basis state".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MixedState {
    members: Vec<(f64, PureState)>,
}

impl MixedState {
    pub fn new(members: Vec<(f64, PureState)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::StateConstruction("empty ensemble".into()));
        }
        let total: f64 = members.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::StateConstruction(format!(
                "ensemble weights sum to {total}, expected 1"
            )));
        }
        let (model, basis) = (members[0].1.model, members[0].1.basis);
        for (w, m) in &members {
            if *w <= 0.0 {
                return Err(Error::StateConstruction("non-positive ensemble weight".into()));
            }
            if m.model != model || m.basis != basis {
                return Err(Error::BasisMismatch(
                    "ensemble members live in different bases".into(),
                ));
            }
            if (m.norm_sqr() - 1.0).abs() > NORM_TOL {
                return Err(Error::StateConstruction("ensemble member is not normalized".into()));
            }
        }
        Ok(MixedState { members })
    }

    pub fn members(&self) -> &[(f64, PureState)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A pure state or a weighted ensemble; most diagnostics accept either.
#[derive(Debug, Clone)]
pub enum State {
    Pure(PureState),
    Mixed(MixedState),
}

impl State {
    pub fn model(&self) -> ModelSpec {
        match self {
            State::Pure(p) => p.model,
            State::Mixed(m) => m.members[0].1.model,
        }
    }

    pub fn basis(&self) -> StateBasis {
        match self {
            State::Pure(p) => p.basis,
            State::Mixed(m) => m.members[0].1.basis,
        }
    }

    /// `(weight, member)` pairs; a pure state is a single unit-weight member.
    pub fn components(&self) -> Vec<(f64, &PureState)> {
        match self {
            State::Pure(p) => vec![(1.0, p)],
            State::Mixed(m) => m.members.iter().map(|(w, s)| (*w, s)).collect(),
        }
    }

    pub fn map_members(&self, f: impl Fn(&PureState) -> Result<PureState>) -> Result<State> {
        match self {
            State::Pure(p) => Ok(State::Pure(f(p)?)),
            State::Mixed(m) => {
                let members = m
                    .members
                    .iter()
                    .map(|(w, s)| Ok((*w, f(s)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(State::Mixed(MixedState { members }))
            }
        }
    }
}

impl From<PureState> for State {
    fn from(p: PureState) -> Self {
        State::Pure(p)
    }
}

impl From<MixedState> for State {
    fn from(m: MixedState) -> Self {
        State::Mixed(m)
    }
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

/// Discrete probability distribution over a strictly sorted real support.
#[derive(Debug, Clone)]
pub struct Distribution {
    pub support: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl Distribution {
    pub fn new(support: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        Distribution::with_merge_tolerance(support, probabilities, 0.0)
    }

    /// Builds a distribution, merging support points closer than `tol`
    /// (probabilities summed, support averaged with probability weights).
    pub fn with_merge_tolerance(
        support: Vec<f64>,
        probabilities: Vec<f64>,
        tol: f64,
    ) -> Result<Self> {
        if support.len() != probabilities.len() || support.is_empty() {
            return Err(Error::DimensionMismatch(
                "support and probabilities must be equal-length and non-empty".into(),
            ));
        }
        let mut order: Vec<usize> = (0..support.len()).collect();
        order.sort_by(|&a, &b| {
            support[a]
                .partial_cmp(&support[b])
                .expect("non-finite support value")
        });
        let mut s = Vec::with_capacity(support.len());
        let mut p = Vec::with_capacity(support.len());
        for idx in order {
            let (x, q) = (support[idx], probabilities[idx]);
            if q < -1e-15 {
                return Err(Error::invalid(format!("negative probability {q}")));
            }
            let q = q.max(0.0);
            match s.last_mut() {
                Some(last) if x - *last <= tol => {
                    let pl: &mut f64 = p.last_mut().unwrap();
                    let total = *pl + q;
                    if total > 0.0 {
                        *last = (*last * *pl + x * q) / total;
                    }
                    *pl = total;
                }
                _ => {
                    s.push(x);
                    p.push(q);
                }
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::StateConstruction(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
        Ok(Distribution {
            support: s,
            probabilities: p,
        })
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probabilities)
            .map(|(x, p)| x * p)
            .sum()
    }

    /// Probability mass on support points satisfying the predicate.
    pub fn mass_where(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.support
            .iter()
            .zip(&self.probabilities)
            .filter(|(x, _)| pred(**x))
            .map(|(_, p)| p)
            .sum()
    }

    /// Largest single-point probability on the matching part of the support.
    pub fn max_mass_where(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.support
            .iter()
            .zip(&self.probabilities)
            .filter(|(x, _)| pred(**x))
            .map(|(_, p)| *p)
            .fold(0.0, f64::max)
    }

    /// Total-variation distance; both distributions must share a support.
    pub fn total_variation(&self, other: &Distribution) -> Result<f64> {
        if self.support.len() != other.support.len() {
            return Err(Error::DimensionMismatch(
                "total variation needs a common support".into(),
            ));
        }
        let scale = self.support.last().unwrap().abs().max(1.0);
        for (a, b) in self.support.iter().zip(&other.support) {
            if (a - b).abs() > 1e-9 * scale {
                return Err(Error::DimensionMismatch(
                    "total variation needs a common support".into(),
                ));
            }
        }
        Ok(0.5
            * self
                .probabilities
                .iter()
                .zip(&other.probabilities)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>())
    }
}

// ---------------------------------------------------------------------------
// Initial-state factories
// ---------------------------------------------------------------------------

fn branch_signs(doublets: &DoubletTable, count: usize) -> Result<Vec<f64>> {
    let scale = doublets
        .records
        .iter()
        .take(count)
        .map(|r| r.matrix_element.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    doublets
        .records
        .iter()
        .take(count)
        .map(|r| {
            if r.matrix_element.abs() < GAUGE_AMBIGUITY_REL_TOL * scale {
                Err(Error::StateConstruction(format!(
                    "doublet {} has a vanishing symmetry-breaking matrix element \
                     ({:.3e}); the branch sign is undefined",
                    r.k, r.matrix_element
                )))
            } else {
                Ok(r.matrix_element.signum())
            }
        })
        .collect()
}

/// Microcanonical-like state uniformly populating the first `n_mc` doublets,
/// with each odd partner signed so the symmetry-breaking expectation value is
/// positive and the observable distribution sits on a single branch.
pub fn microcanonical_sb(
    decomp: &SpectralDecomposition,
    doublets: &DoubletTable,
    n_mc: usize,
) -> Result<PureState> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be positive"));
    }
    if n_mc > doublets.len() {
        return Err(Error::StateConstruction(format!(
            "n_mc = {n_mc} exceeds the {} available doublets",
            doublets.len()
        )));
    }
    if let Some(bad) = doublets.records[..n_mc].iter().find(|r| !r.degenerate) {
        return Err(Error::StateConstruction(format!(
            "doublet {} (gap {:.3e}) is not degenerate; the requested band \
             crosses the critical energy",
            bad.k, bad.gap
        )));
    }
    let signs = branch_signs(doublets, n_mc)?;
    let (n_even, n_odd) = decomp.model.sector_dims();
    let amp = 1.0 / ((2 * n_mc) as f64).sqrt();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n_even + n_odd];
    for k in 0..n_mc {
        coeffs[k] = Complex64::new(amp, 0.0);
        coeffs[n_even + k] = Complex64::new(signs[k] * amp, 0.0);
    }
    Ok(PureState {
        model: decomp.model,
        basis: StateBasis::Eigen { g: decomp.g },
        coeffs,
    })
}

/// Symmetry-breaking thermal ensemble and the relative Boltzmann weight it
/// discarded below the cutoff.
#[derive(Debug, Clone)]
pub struct ThermalSbState {
    pub state: MixedState,
    pub discarded_weight: f64,
}

/// Thermal mixture of maximally symmetry-broken doublet combinations,
/// restricted to degenerate doublets. A non-degenerate doublet that would
/// carry relative weight above the cutoff means the temperature pushes the
/// ensemble past the critical energy, which is an error.
pub fn thermal_sb(
    decomp: &SpectralDecomposition,
    doublets: &DoubletTable,
    beta: f64,
) -> Result<ThermalSbState> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if doublets.is_empty() {
        return Err(Error::StateConstruction("no doublets to populate".into()));
    }
    let energies: Vec<f64> = (0..doublets.len()).map(|k| decomp.doublet_energy(k)).collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let rel = |k: usize| (-(beta * (energies[k] - e_min))).exp();

    let mut leaked = 0.0;
    for rec in &doublets.records {
        if !rec.degenerate && rel(rec.k) >= THERMAL_WEIGHT_CUTOFF {
            leaked += rel(rec.k);
        }
    }
    if leaked > 0.0 {
        return Err(Error::StateConstruction(format!(
            "thermal state leaks past the critical energy: non-degenerate \
             doublets would carry relative weight {leaked:.3e}"
        )));
    }

    let kept: Vec<usize> = doublets
        .records
        .iter()
        .filter(|r| r.degenerate && rel(r.k) >= THERMAL_WEIGHT_CUTOFF)
        .map(|r| r.k)
        .collect();
    if kept.is_empty() {
        return Err(Error::StateConstruction("all Boltzmann weights truncated".into()));
    }
    let discarded: f64 = doublets
        .records
        .iter()
        .filter(|r| r.degenerate && rel(r.k) < THERMAL_WEIGHT_CUTOFF)
        .map(|r| rel(r.k))
        .sum();
    let max_k = kept.iter().copied().max().unwrap();
    let signs = branch_signs(doublets, max_k + 1)?;

    let z: f64 = kept.iter().map(|&k| rel(k)).sum();
    let (n_even, n_odd) = decomp.model.sector_dims();
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let members: Vec<(f64, PureState)> = kept
        .iter()
        .map(|&k| {
            let mut coeffs = vec![Complex64::new(0.0, 0.0); n_even + n_odd];
            coeffs[k] = Complex64::new(amp, 0.0);
            coeffs[n_even + k] = Complex64::new(signs[k] * amp, 0.0);
            (
                rel(k) / z,
                PureState {
                    model: decomp.model,
                    basis: StateBasis::Eigen { g: decomp.g },
                    coeffs,
                },
            )
        })
        .collect();
    Ok(ThermalSbState {
        state: MixedState::new(members)?,
        discarded_weight: discarded / (z + discarded),
    })
}

/// Coherent mode state `|alpha>` with the qubit in the ground state of its
/// mean-field Hamiltonian at the coherent displacement `<a + a^dag> = 2 Re
/// alpha` and coupling `g`. At `g * Re alpha = 0` this reduces to the bare
/// spin-down product state.
pub fn qrm_coherent(model: &ModelSpec, alpha: Complex64, g: f64) -> Result<PureState> {
    let (ratio, n_max) = match *model {
        ModelSpec::Qrm { ratio, n_max } => (ratio, n_max),
        ModelSpec::Lmg { .. } => {
            return Err(Error::invalid("coherent states are defined for the Rabi model"))
        }
    };
    crate::model::validate_coupling(g)?;
    let mean_n = alpha.norm_sqr();
    if mean_n > 0.5 * n_max as f64 {
        return Err(Error::StateConstruction(format!(
            "coherent amplitude |alpha|^2 = {mean_n} is too large for cutoff {n_max}"
        )));
    }
    // Fock amplitudes a_n = e^{-|alpha|^2/2} alpha^n / sqrt(n!), iteratively.
    let mut fock = Vec::with_capacity(n_max + 1);
    let mut a = Complex64::new((-0.5 * mean_n).exp(), 0.0);
    let mut total = 0.0;
    for n in 0..=n_max {
        fock.push(a);
        total += a.norm_sqr();
        a = a * alpha / ((n + 1) as f64).sqrt();
    }
    if 1.0 - total > NORM_TOL {
        return Err(Error::StateConstruction(format!(
            "Fock cutoff {n_max} truncates weight {:.3e}",
            1.0 - total
        )));
    }
    if fock[n_max].norm_sqr() >= 1e-10 {
        return Err(Error::StateConstruction(format!(
            "highest Fock state carries population {:.3e}; raise the cutoff",
            fock[n_max].norm_sqr()
        )));
    }
    // Qubit ground spinor of (ratio/2) sigma_z + h_x sigma_x.
    let h_x = g * crate::model::qrm_lambda_critical(ratio) * 2.0 * alpha.re;
    let theta = h_x.atan2(ratio / 2.0);
    let chi_up = -(0.5 * theta).sin();
    let chi_down = (0.5 * theta).cos();

    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * (n_max + 1)];
    for (n, an) in fock.iter().enumerate() {
        coeffs[2 * n] = an * chi_down;
        coeffs[2 * n + 1] = an * chi_up;
    }
    Ok(PureState {
        model: *model,
        basis: StateBasis::Physical,
        coeffs,
    })
}

// ---------------------------------------------------------------------------
// Basis changes
// ---------------------------------------------------------------------------

/// Expands a physical-basis state over the eigenbasis of `decomp`.
pub fn expand_in_eigenbasis(
    state: &PureState,
    decomp: &SpectralDecomposition,
) -> Result<PureState> {
    state.expect_physical()?;
    if state.model != decomp.model {
        return Err(Error::BasisMismatch("state and decomposition model differ".into()));
    }
    let (n_even, n_odd) = decomp.model.sector_dims();
    let mut coeffs = Vec::with_capacity(n_even + n_odd);
    for k in 0..n_even {
        coeffs.push(decomp.even.project(k, &state.coeffs));
    }
    for k in 0..n_odd {
        coeffs.push(decomp.odd.project(k, &state.coeffs));
    }
    let out = PureState {
        model: state.model,
        basis: StateBasis::Eigen { g: decomp.g },
        coeffs,
    };
    if (out.norm_sqr() - state.norm_sqr()).abs() > NORM_TOL {
        return Err(Error::StateConstruction(format!(
            "eigenbasis expansion lost norm: {} -> {}",
            state.norm_sqr(),
            out.norm_sqr()
        )));
    }
    Ok(out)
}

/// Reconstructs the physical-basis coefficients from an eigenbasis state.
pub fn to_physical(state: &PureState, decomp: &SpectralDecomposition) -> Result<PureState> {
    let g = state.eigen_coupling()?;
    if state.model != decomp.model || g != decomp.g {
        return Err(Error::BasisMismatch(format!(
            "state was expanded at g = {g}, decomposition is at g = {}",
            decomp.g
        )));
    }
    let (even, odd) = state.eigen_split()?;
    let dim = state.model.dim();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); dim];
    for (sector, amps) in [(&decomp.even, even), (&decomp.odd, odd)] {
        for (k, amp) in amps.iter().enumerate() {
            if amp.re == 0.0 && amp.im == 0.0 {
                continue;
            }
            for (slot, &i) in sector.indices.iter().enumerate() {
                coeffs[i] += sector.vector(k)[slot] * amp;
            }
        }
    }
    Ok(PureState {
        model: state.model,
        basis: StateBasis::Physical,
        coeffs,
    })
}

// ---------------------------------------------------------------------------
// Observable distributions and expectation values
// ---------------------------------------------------------------------------

/// Eigensystem of an observable, reduced to what distribution projection
/// needs. Computed once per (model size, observable) and cached.
enum ObsEigensystem {
    /// Diagonal observable: basis state `i` maps to support slot `map[i]`.
    Diagonal { support: Vec<f64>, map: Vec<usize> },
    /// Dense eigenvectors over the full physical basis (collective spin).
    FullBasis {
        support: Vec<f64>,
        map: Vec<usize>,
        eig: TridiagEigen,
    },
    /// Mode-only eigenvectors, identical for both spin components (Rabi).
    ModeBasis {
        support: Vec<f64>,
        map: Vec<usize>,
        eig: TridiagEigen,
    },
}

type ObsKey = (ObservableKind, usize, u64, usize);

fn obs_key(model: &ModelSpec, kind: ObservableKind) -> ObsKey {
    match *model {
        ModelSpec::Lmg { spins } => (kind, spins + 1, 0, 0),
        ModelSpec::Qrm { ratio, n_max } => (kind, 0, ratio.to_bits(), n_max),
    }
}

fn obs_eigensystem(model: &ModelSpec, kind: ObservableKind) -> Result<Arc<ObsEigensystem>> {
    static CACHE: OnceLock<Mutex<HashMap<ObsKey, Arc<ObsEigensystem>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&obs_key(model, kind)) {
        return Ok(hit.clone());
    }
    let built = Arc::new(build_obs_eigensystem(model, kind)?);
    cache
        .lock()
        .unwrap()
        .insert(obs_key(model, kind), built.clone());
    Ok(built)
}

fn merged_support(values: &[f64], tol: f64) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut support: Vec<f64> = Vec::new();
    let mut map = vec![0usize; values.len()];
    for idx in order {
        match support.last() {
            Some(&last) if values[idx] - last <= tol => {}
            _ => support.push(values[idx]),
        }
        map[idx] = support.len() - 1;
    }
    (support, map)
}

fn build_obs_eigensystem(model: &ModelSpec, kind: ObservableKind) -> Result<ObsEigensystem> {
    match (model, kind) {
        (ModelSpec::Lmg { spins }, ObservableKind::Sz) => {
            let j = *spins as f64 / 2.0;
            let values: Vec<f64> = (0..spins + 1).map(|i| i as f64 - j).collect();
            let map = (0..spins + 1).collect();
            Ok(ObsEigensystem::Diagonal { support: values, map })
        }
        (ModelSpec::Lmg { .. }, ObservableKind::Sx) => {
            let obs = crate::model::observable_matrix(model, kind)?;
            let dim = model.dim();
            let band1 = obs.matrix.bands.iter().find(|(k, _)| *k == 1).unwrap().1.clone();
            let t = SymTridiagonal::new(vec![0.0; dim], band1);
            let eig = tridiag::eigen_decomposition(&t)?;
            let support = eig.values.clone();
            let map = (0..dim).collect();
            Ok(ObsEigensystem::FullBasis { support, map, eig })
        }
        (ModelSpec::Lmg { .. }, ObservableKind::SxSquared) => {
            // Shares the S_x eigenbasis; eigenvalues fold to m^2.
            let obs = crate::model::observable_matrix(model, ObservableKind::Sx)?;
            let dim = model.dim();
            let band1 = obs.matrix.bands.iter().find(|(k, _)| *k == 1).unwrap().1.clone();
            let t = SymTridiagonal::new(vec![0.0; dim], band1);
            let eig = tridiag::eigen_decomposition(&t)?;
            let squared: Vec<f64> = eig.values.iter().map(|v| v * v).collect();
            let scale = squared.iter().cloned().fold(1.0f64, f64::max);
            let (support, map) = merged_support(&squared, 1e-9 * scale);
            Ok(ObsEigensystem::FullBasis { support, map, eig })
        }
        (ModelSpec::Qrm { n_max, .. }, ObservableKind::PhotonNumber) => {
            let support: Vec<f64> = (0..=*n_max).map(|n| n as f64).collect();
            let map: Vec<usize> = (0..2 * (n_max + 1)).map(|i| i / 2).collect();
            Ok(ObsEigensystem::Diagonal { support, map })
        }
        (ModelSpec::Qrm { n_max, .. }, ObservableKind::SigmaZ) => {
            let support = vec![-1.0, 1.0];
            let map: Vec<usize> = (0..2 * (n_max + 1)).map(|i| i % 2).collect();
            Ok(ObsEigensystem::Diagonal { support, map })
        }
        (ModelSpec::Qrm { n_max, .. }, ObservableKind::Position) => {
            // x acts on the mode alone: diagonalize the Fock-space tridiagonal
            // once and reuse it for both spin components.
            let nm = n_max + 1;
            let off: Vec<f64> = (0..*n_max).map(|n| ((n + 1) as f64 / 2.0).sqrt()).collect();
            let t = SymTridiagonal::new(vec![0.0; nm], off);
            let eig = tridiag::eigen_decomposition(&t)?;
            let support = eig.values.clone();
            let map = (0..nm).collect();
            Ok(ObsEigensystem::ModeBasis { support, map, eig })
        }
        _ => Err(Error::invalid(format!(
            "observable {kind:?} has no eigensystem for model {model:?}"
        ))),
    }
}

fn pure_distribution_weights(state: &PureState, sys: &ObsEigensystem) -> Vec<f64> {
    match sys {
        ObsEigensystem::Diagonal { support, map } => {
            let mut p = vec![0.0; support.len()];
            for (i, c) in state.coeffs.iter().enumerate() {
                p[map[i]] += c.norm_sqr();
            }
            p
        }
        ObsEigensystem::FullBasis { support, map, eig } => {
            let mut p = vec![0.0; support.len()];
            for j in 0..eig.dim() {
                let amp: Complex64 = eig
                    .vector(j)
                    .iter()
                    .zip(&state.coeffs)
                    .map(|(v, c)| v * c)
                    .sum();
                p[map[j]] += amp.norm_sqr();
            }
            p
        }
        ObsEigensystem::ModeBasis { support, map, eig } => {
            let mut p = vec![0.0; support.len()];
            let nm = eig.dim();
            for j in 0..nm {
                let v = eig.vector(j);
                for s in 0..2 {
                    let amp: Complex64 = (0..nm).map(|n| v[n] * state.coeffs[2 * n + s]).sum();
                    p[map[j]] += amp.norm_sqr();
                }
            }
            p
        }
    }
}

/// Probability distribution of the observable's eigenvalues in the given
/// state (physical basis; ensembles are averaged member by member).
pub fn observable_distribution(state: &State, obs: &ObservableMatrix) -> Result<Distribution> {
    if state.model() != obs.model {
        return Err(Error::DimensionMismatch(
            "state and observable belong to different models".into(),
        ));
    }
    if state.basis() != StateBasis::Physical {
        return Err(Error::BasisMismatch(
            "observable distributions are computed in the physical basis".into(),
        ));
    }
    let sys = obs_eigensystem(&obs.model, obs.kind)?;
    let support = match &*sys {
        ObsEigensystem::Diagonal { support, .. } => support.clone(),
        ObsEigensystem::FullBasis { support, .. } => support.clone(),
        ObsEigensystem::ModeBasis { support, .. } => support.clone(),
    };
    let mut probs = vec![0.0; support.len()];
    for (w, member) in state.components() {
        let p = pure_distribution_weights(member, &sys);
        for (acc, q) in probs.iter_mut().zip(&p) {
            *acc += w * q;
        }
    }
    // Normalize by the state's total weight so that residual norm drift
    // (bounded elsewhere) cannot show up as missing probability.
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        for p in probs.iter_mut() {
            *p /= total;
        }
    }
    Distribution::new(support, probs)
}

/// Energy probability distribution: per-doublet energies with the parity
/// weights summed, so it carries no symmetry-breaking information.
pub fn energy_distribution(state: &State, decomp: &SpectralDecomposition) -> Result<Distribution> {
    let n_pairs = decomp.doublet_count();
    let (n_even, _) = decomp.model.sector_dims();
    let mut support: Vec<f64> = (0..n_pairs).map(|k| decomp.doublet_energy(k)).collect();
    support.extend_from_slice(&decomp.even.energies[n_pairs..]);
    let mut probs = vec![0.0; support.len()];
    for (w, member) in state.components() {
        let g = member.eigen_coupling()?;
        if g != decomp.g || member.model != decomp.model {
            return Err(Error::BasisMismatch(
                "state is not expanded in this decomposition's eigenbasis".into(),
            ));
        }
        let (even, odd) = member.eigen_split()?;
        for k in 0..n_pairs {
            probs[k] += w * (even[k].norm_sqr() + odd[k].norm_sqr());
        }
        for k in n_pairs..n_even {
            probs[k] += w * even[k].norm_sqr();
        }
    }
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        for p in probs.iter_mut() {
            *p /= total;
        }
    }
    Distribution::new(support, probs)
}

/// `<O>` in the given state. Eigenbasis states need the decomposition that
/// defines their basis.
pub fn expectation(
    state: &State,
    obs: &ObservableMatrix,
    decomp: Option<&SpectralDecomposition>,
) -> Result<f64> {
    if state.model() != obs.model {
        return Err(Error::DimensionMismatch(
            "state and observable belong to different models".into(),
        ));
    }
    let mut acc = 0.0;
    for (w, member) in state.components() {
        let value = match member.basis {
            StateBasis::Physical => obs.matrix.expectation(&member.coeffs),
            StateBasis::Eigen { .. } => {
                let decomp = decomp.ok_or_else(|| {
                    Error::BasisMismatch(
                        "eigenbasis state needs its spectral decomposition".into(),
                    )
                })?;
                let physical = to_physical(member, decomp)?;
                obs.matrix.expectation(&physical.coeffs)
            }
        };
        acc += w * value;
    }
    Ok(acc)
}

/// Checks that parity-even / parity-odd classification matches the state's
/// distribution symmetry; exposed mainly for tests and the validation suite.
pub fn is_parity_odd(obs: &ObservableMatrix) -> bool {
    obs.character == ParityCharacter::Odd
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{observable_matrix, ObservableKind};
    use crate::spectral::{doublet_pairing, spectral_decomposition};

    fn lmg_setup(n: usize, g: f64) -> (SpectralDecomposition, DoubletTable, ObservableMatrix) {
        let model = ModelSpec::lmg(n).unwrap();
        let d = spectral_decomposition(&model, g).unwrap();
        let sx = observable_matrix(&model, ObservableKind::Sx).unwrap();
        let t = doublet_pairing(&d, &sx).unwrap();
        (d, t, sx)
    }

    #[test]
    fn microcanonical_single_doublet_expectation() {
        let (d, t, sx) = lmg_setup(100, 0.0);
        let psi = microcanonical_sb(&d, &t, 1).unwrap();
        let phys = to_physical(&psi, &d).unwrap();
        let val = sx.matrix.expectation(&phys.coeffs);
        assert!((val - 50.0).abs() < 1e-8, "got {val}");
    }

    #[test]
    fn microcanonical_uniform_energy_weights() {
        let (d, t, _) = lmg_setup(40, 0.0);
        let psi = microcanonical_sb(&d, &t, 10).unwrap();
        let pe = energy_distribution(&State::Pure(psi), &d).unwrap();
        let populated: Vec<f64> = pe
            .probabilities
            .iter()
            .cloned()
            .filter(|p| *p > 1e-12)
            .collect();
        assert_eq!(populated.len(), 10);
        for p in populated {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn microcanonical_single_branch_support() {
        let (d, t, sx) = lmg_setup(100, 0.0);
        let psi = microcanonical_sb(&d, &t, 10).unwrap();
        let phys = to_physical(&psi, &d).unwrap();
        let dist = observable_distribution(&State::Pure(phys), &sx).unwrap();
        assert!(dist.max_mass_where(|x| x < 0.0) < 1e-6);
        assert!(dist.mass_where(|x| x > 0.0) > 0.99);
        let total: f64 = dist.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn microcanonical_rejects_crossing_the_critical_energy() {
        let (d, t, _) = lmg_setup(40, 0.0);
        // All 20 doublets are degenerate at g = 0, so ask for more.
        assert!(microcanonical_sb(&d, &t, 21).is_err());
        // In the normal phase nothing is degenerate.
        let (d2, t2, _) = lmg_setup(40, 1.25);
        let err = microcanonical_sb(&d2, &t2, 2).unwrap_err();
        assert!(matches!(err, Error::StateConstruction(_)));
    }

    #[test]
    fn thermal_concentrates_at_low_temperature() {
        let (d, t, sx) = lmg_setup(100, 0.0);
        let thermal = thermal_sb(&d, &t, 1e3).unwrap();
        assert_eq!(thermal.state.len(), 1);
        let val = expectation(&State::Mixed(thermal.state.clone()), &sx, Some(&d)).unwrap();
        assert!((val - 50.0).abs() < 1e-6, "got {val}");
    }

    #[test]
    fn thermal_weights_decay_exponentially() {
        let (d, t, sx) = lmg_setup(60, 0.0);
        let beta = 0.05;
        let thermal = thermal_sb(&d, &t, beta).unwrap();
        let pe = energy_distribution(&State::Mixed(thermal.state.clone()), &d).unwrap();
        // Ratio of successive populated weights follows the Boltzmann factor.
        let populated: Vec<(f64, f64)> = pe
            .support
            .iter()
            .zip(&pe.probabilities)
            .filter(|(_, p)| **p > 1e-9)
            .map(|(e, p)| (*e, *p))
            .collect();
        for pair in populated.windows(2) {
            let expect = (-(beta * (pair[1].0 - pair[0].0))).exp();
            let got = pair[1].1 / pair[0].1;
            assert!((got - expect).abs() < 1e-6 * expect.max(1e-3));
        }
        // Maximally broken: positive expectation, one-branch distribution.
        let val = expectation(&State::Mixed(thermal.state.clone()), &sx, Some(&d)).unwrap();
        assert!(val > 0.0);
    }

    #[test]
    fn coherent_state_moments() {
        let model = ModelSpec::qrm(100.0, 200).unwrap();
        let alpha = Complex64::new(5.0, 0.0);
        let psi = qrm_coherent(&model, alpha, 0.0).unwrap();
        let n_phot = observable_matrix(&model, ObservableKind::PhotonNumber).unwrap();
        let x = observable_matrix(&model, ObservableKind::Position).unwrap();
        assert!((n_phot.matrix.expectation(&psi.coeffs) - 25.0).abs() < 1e-8);
        let expect_x = 2.0_f64.sqrt() * 5.0;
        assert!((x.matrix.expectation(&psi.coeffs) - expect_x).abs() < 1e-8);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coherent_vacuum_energy() {
        let model = ModelSpec::qrm(100.0, 20).unwrap();
        let psi = qrm_coherent(&model, Complex64::new(0.0, 0.0), 0.0).unwrap();
        let h = crate::model::hamiltonian(&model, 0.0).unwrap();
        assert!((h.expectation(&psi.coeffs) + 50.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_cutoff_guard() {
        let model = ModelSpec::qrm(100.0, 30).unwrap();
        assert!(qrm_coherent(&model, Complex64::new(5.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn eigenbasis_round_trip() {
        let model = ModelSpec::lmg(24).unwrap();
        let d = spectral_decomposition(&model, 0.8).unwrap();
        let dim = model.dim();
        let raw: Vec<Complex64> = (0..dim)
            .map(|i| Complex64::new((0.3 * i as f64).sin(), (0.11 * i as f64).cos()))
            .collect();
        let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let psi = PureState {
            model,
            basis: StateBasis::Physical,
            coeffs: raw.into_iter().map(|c| c / norm).collect(),
        };
        let eigen = expand_in_eigenbasis(&psi, &d).unwrap();
        assert!((eigen.norm_sqr() - 1.0).abs() < 1e-10);
        let back = to_physical(&eigen, &d).unwrap();
        for (a, b) in psi.coeffs.iter().zip(&back.coeffs) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn eigenstate_expands_to_unit_coefficient() {
        let model = ModelSpec::lmg(16).unwrap();
        let d = spectral_decomposition(&model, 0.5).unwrap();
        let dim = model.dim();
        let mut phys = vec![Complex64::new(0.0, 0.0); dim];
        let mut buf = vec![0.0; dim];
        d.even.scatter(3, &mut buf);
        for (p, v) in phys.iter_mut().zip(&buf) {
            *p = Complex64::new(*v, 0.0);
        }
        let psi = PureState {
            model,
            basis: StateBasis::Physical,
            coeffs: phys,
        };
        let eigen = expand_in_eigenbasis(&psi, &d).unwrap();
        let (even, odd) = eigen.eigen_split().unwrap();
        assert!((even[3].re - 1.0).abs() < 1e-10);
        for (k, c) in even.iter().enumerate() {
            if k != 3 {
                assert!(c.norm() < 1e-10);
            }
        }
        for c in odd {
            assert!(c.norm() < 1e-10);
        }
    }

    #[test]
    fn symmetric_state_has_symmetric_distribution() {
        // A single parity eigenstate: P(gamma) = P(-gamma).
        let model = ModelSpec::lmg(30).unwrap();
        let d = spectral_decomposition(&model, 0.5).unwrap();
        let sx = observable_matrix(&model, ObservableKind::Sx).unwrap();
        let dim = model.dim();
        let mut buf = vec![0.0; dim];
        d.even.scatter(0, &mut buf);
        let psi = PureState {
            model,
            basis: StateBasis::Physical,
            coeffs: buf.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        };
        let dist = observable_distribution(&State::Pure(psi.clone()), &sx).unwrap();
        let n = dist.support.len();
        for i in 0..n / 2 {
            assert!(
                (dist.probabilities[i] - dist.probabilities[n - 1 - i]).abs() < 1e-10,
                "asymmetry at {i}"
            );
        }
        // And the parity-odd expectation vanishes.
        let val = sx.matrix.expectation(&psi.coeffs);
        assert!(val.abs() < 1e-10);
    }

    #[test]
    fn energy_distribution_invariant_under_branch_flip() {
        let (d, t, _) = lmg_setup(40, 0.0);
        let psi = microcanonical_sb(&d, &t, 8).unwrap();
        let mut flipped = psi.clone();
        let (n_even, _) = d.model.sector_dims();
        for c in flipped.coeffs[n_even..].iter_mut() {
            *c = -*c;
        }
        let a = energy_distribution(&State::Pure(psi), &d).unwrap();
        let b = energy_distribution(&State::Pure(flipped), &d).unwrap();
        // Exact equality: populations are untouched by the sign flip.
        assert_eq!(a.probabilities, b.probabilities);
    }

    #[test]
    fn mixed_expectation_is_weighted_sum() {
        let (d, t, sx) = lmg_setup(30, 0.0);
        let a = microcanonical_sb(&d, &t, 1).unwrap();
        let b = microcanonical_sb(&d, &t, 5).unwrap();
        let va = expectation(&State::Pure(a.clone()), &sx, Some(&d)).unwrap();
        let vb = expectation(&State::Pure(b.clone()), &sx, Some(&d)).unwrap();
        let mixed = MixedState::new(vec![(0.3, a), (0.7, b)]).unwrap();
        let vm = expectation(&State::Mixed(mixed), &sx, Some(&d)).unwrap();
        assert!((vm - (0.3 * va + 0.7 * vb)).abs() < 1e-12);
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![0.0, 1.0], vec![0.6, 0.5]).is_err());
        assert!(Distribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_ok());
        let merged = Distribution::with_merge_tolerance(
            vec![0.0, 1.0, 1.0 + 1e-12],
            vec![0.25, 0.5, 0.25],
            1e-9,
        )
        .unwrap();
        assert_eq!(merged.support.len(), 2);
        assert!((merged.probabilities[1] - 0.75).abs() < 1e-15);
    }
}
