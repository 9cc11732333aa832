//! Parity-resolved spectral decompositions and derived structure: doublet
//! pairing, density of states, critical energies, and observables expressed
//! in the eigenbasis.

use crate::error::{Error, Result};
use crate::model::{
    build_parity_blocks, ModelSpec, ObservableMatrix, Parity, ParityCharacter,
};
use crate::state::Distribution;
use crate::tridiag;
use num_complex::Complex64;
use rayon::prelude::*;

/// Eigenvalues below the critical excitation energy pair into quasi-degenerate
/// doublets; a gap below this fraction of the mean level spacing flags a
/// doublet as degenerate.
pub const DOUBLET_GAP_REL_THRESHOLD: f64 = 1e-6;

/// One parity sector of a spectral decomposition. Eigenvectors are stored
/// column-major in the block basis; `indices` maps block slots to
/// physical-basis indices.
#[derive(Debug, Clone)]
pub struct SectorEigen {
    pub parity: Parity,
    pub energies: Vec<f64>,
    pub indices: Vec<usize>,
    vectors: Vec<f64>,
}

impl SectorEigen {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Eigenvector `k` in the block basis.
    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.indices.len();
        &self.vectors[k * n..(k + 1) * n]
    }

    /// Writes eigenvector `k` into a physical-basis buffer (zero elsewhere).
    pub fn scatter(&self, k: usize, out: &mut [f64]) {
        out.fill(0.0);
        for (slot, &i) in self.indices.iter().enumerate() {
            out[i] = self.vector(k)[slot];
        }
    }

    /// Inner product of eigenvector `k` with a physical-basis complex vector.
    pub fn project(&self, k: usize, physical: &[Complex64]) -> Complex64 {
        self.vector(k)
            .iter()
            .zip(&self.indices)
            .map(|(v, &i)| v * physical[i])
            .sum()
    }
}

/// Gauge-fixed, parity-labeled eigendecomposition of `H(g)`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub model: ModelSpec,
    pub g: f64,
    pub even: SectorEigen,
    pub odd: SectorEigen,
}

impl SpectralDecomposition {
    pub fn sector(&self, p: Parity) -> &SectorEigen {
        match p {
            Parity::Even => &self.even,
            Parity::Odd => &self.odd,
        }
    }

    pub fn dim(&self) -> usize {
        self.even.len() + self.odd.len()
    }

    /// Number of (even, odd) index pairs.
    pub fn doublet_count(&self) -> usize {
        self.even.len().min(self.odd.len())
    }

    /// Energy label of doublet `k`: the mean of the pair while both partners
    /// exist, the bare even energy afterwards.
    pub fn doublet_energy(&self, k: usize) -> f64 {
        if k < self.doublet_count() {
            0.5 * (self.even.energies[k] + self.odd.energies[k])
        } else {
            self.even.energies[k]
        }
    }

    /// Mean level spacing across the full spectrum.
    pub fn mean_level_spacing(&self) -> f64 {
        let (lo, hi) = self.energy_range();
        (hi - lo) / (self.dim() - 1).max(1) as f64
    }

    pub fn energy_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for e in self.even.energies.iter().chain(&self.odd.energies) {
            lo = lo.min(*e);
            hi = hi.max(*e);
        }
        (lo, hi)
    }
}

/// Per-sector eigenvalues only (ascending); the workhorse of the phase
/// quadrature, which never needs eigenvectors.
pub fn sector_energies(model: &ModelSpec, g: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let blocks = build_parity_blocks(model, g)?;
    let even = tridiag::eigenvalues(&blocks.even.matrix).map_err(|e| tag_g(e, g))?;
    let odd = tridiag::eigenvalues(&blocks.odd.matrix).map_err(|e| tag_g(e, g))?;
    Ok((even, odd))
}

fn tag_g(e: Error, g: f64) -> Error {
    match e {
        Error::EigensolverFailure { size, detail, .. } => {
            Error::EigensolverFailure { size, g, detail }
        }
        other => other,
    }
}

/// Full decomposition with gauge-fixed eigenvectors.
///
/// Gauge: each eigenvector is real with its largest-magnitude physical-basis
/// component positive (ties broken by the lowest index), which makes every
/// downstream coefficient reproducible across runs and platforms.
pub fn spectral_decomposition(model: &ModelSpec, g: f64) -> Result<SpectralDecomposition> {
    let blocks = build_parity_blocks(model, g)?;
    let solve = |block: &crate::model::ParityBlock| -> Result<SectorEigen> {
        let eig = tridiag::eigen_decomposition(&block.matrix).map_err(|e| tag_g(e, g))?;
        let n = block.matrix.dim();
        let mut vectors = vec![0.0; n * n];
        for k in 0..n {
            let src = eig.vector(k);
            let dst = &mut vectors[k * n..(k + 1) * n];
            dst.copy_from_slice(src);
            gauge_fix(dst);
        }
        Ok(SectorEigen {
            parity: block.parity,
            energies: eig.values,
            indices: block.indices.clone(),
            vectors,
        })
    };
    let (even, odd) = rayon::join(|| solve(&blocks.even), || solve(&blocks.odd));
    Ok(SpectralDecomposition {
        model: *model,
        g,
        even: even?,
        odd: odd?,
    })
}

/// Largest-magnitude component positive; first occurrence wins ties, and
/// block slots appear in increasing physical-index order.
fn gauge_fix(v: &mut [f64]) {
    let mut best = 0;
    let mut best_mag = v[0].abs();
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x.abs() > best_mag {
            best = i;
            best_mag = x.abs();
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

// ---------------------------------------------------------------------------
// Doublet pairing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DoubletRecord {
    pub k: usize,
    pub energy_even: f64,
    pub energy_odd: f64,
    pub gap: f64,
    /// `<phi_{k,+} | O | phi_{k,->` for the parity-odd observable.
    pub matrix_element: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct DoubletTable {
    pub records: Vec<DoubletRecord>,
    /// States left in the longer sector after pairing.
    pub unpaired: usize,
    pub gap_threshold: f64,
}

impl DoubletTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn degenerate_count(&self) -> usize {
        self.records.iter().filter(|r| r.degenerate).count()
    }

    /// Length of the leading run of degenerate doublets.
    pub fn leading_degenerate(&self) -> usize {
        self.records.iter().take_while(|r| r.degenerate).count()
    }
}

/// Pairs the k-th even-parity with the k-th odd-parity state and records the
/// gap and symmetry-breaking matrix element of each pair.
pub fn doublet_pairing(
    decomp: &SpectralDecomposition,
    obs: &ObservableMatrix,
) -> Result<DoubletTable> {
    if obs.character != ParityCharacter::Odd {
        return Err(Error::invalid(format!(
            "doublet pairing needs a parity-odd observable, got {:?}",
            obs.kind
        )));
    }
    if obs.model != decomp.model {
        return Err(Error::DimensionMismatch(
            "observable and decomposition belong to different models".into(),
        ));
    }
    let pairs = decomp.doublet_count();
    let threshold = DOUBLET_GAP_REL_THRESHOLD * decomp.mean_level_spacing();
    let dim = decomp.model.dim();
    let records: Vec<DoubletRecord> = (0..pairs)
        .into_par_iter()
        .map_init(
            || (vec![0.0; dim], vec![0.0; dim]),
            |(buf, applied), k| {
                decomp.odd.scatter(k, buf);
                obs.matrix.apply(buf, applied);
                let m: f64 = decomp
                    .even
                    .vector(k)
                    .iter()
                    .zip(&decomp.even.indices)
                    .map(|(v, &i)| v * applied[i])
                    .sum();
                let e_even = decomp.even.energies[k];
                let e_odd = decomp.odd.energies[k];
                let gap = (e_even - e_odd).abs();
                DoubletRecord {
                    k,
                    energy_even: e_even,
                    energy_odd: e_odd,
                    gap,
                    matrix_element: m,
                    degenerate: gap < threshold,
                }
            },
        )
        .collect();
    Ok(DoubletTable {
        records,
        unpaired: decomp.dim() - 2 * pairs,
        gap_threshold: threshold,
    })
}

// ---------------------------------------------------------------------------
// Density of states and critical energy
// ---------------------------------------------------------------------------

/// Normalized histogram of all eigenvalues; the excited-state transition
/// shows up as a sharp peak at the critical energy.
pub fn density_of_states(decomp: &SpectralDecomposition, bin_count: usize) -> Result<Distribution> {
    if bin_count < 10 {
        return Err(Error::invalid("density of states needs at least 10 bins"));
    }
    let (lo, hi) = decomp.energy_range();
    let total = decomp.dim() as f64;
    if hi <= lo {
        return Distribution::new(vec![lo], vec![1.0]);
    }
    let width = (hi - lo) / bin_count as f64;
    let mut counts = vec![0usize; bin_count];
    for &e in decomp.even.energies.iter().chain(&decomp.odd.energies) {
        let idx = (((e - lo) / width) as usize).min(bin_count - 1);
        counts[idx] += 1;
    }
    let support: Vec<f64> = (0..bin_count).map(|i| lo + (i as f64 + 0.5) * width).collect();
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    Distribution::new(support, probs)
}

/// Critical excitation energy separating the degenerate and normal parts of
/// the spectrum, where the symmetry-breaking phase exists: for the collective
/// spin model the classical saddle `-g N / 2` (valid for g < 1), for the Rabi
/// model `-Omega/2` (valid for g > 1). `None` outside those ranges.
pub fn critical_energy(model: &ModelSpec, g: f64) -> Option<f64> {
    match *model {
        ModelSpec::Lmg { spins } => (g < 1.0).then(|| -g * spins as f64 / 2.0),
        ModelSpec::Qrm { ratio, .. } => (g > 1.0).then(|| -ratio / 2.0),
    }
}

// ---------------------------------------------------------------------------
// Observables in the eigenbasis
// ---------------------------------------------------------------------------

/// A parity-odd observable expressed in the eigenbasis at fixed coupling.
/// Only the even-odd cross block is nonzero; it is stored column-major
/// (`n_even` rows by `n_odd` columns).
#[derive(Debug, Clone)]
pub struct EigenObservable {
    pub kind: crate::model::ObservableKind,
    pub n_even: usize,
    pub n_odd: usize,
    cross: Vec<f64>,
}

impl EigenObservable {
    /// `<phi_{k,+} | O | phi_{k',-}>`
    pub fn cross(&self, k_even: usize, k_odd: usize) -> f64 {
        self.cross[k_odd * self.n_even + k_even]
    }

    pub fn column(&self, k_odd: usize) -> &[f64] {
        &self.cross[k_odd * self.n_even..(k_odd + 1) * self.n_even]
    }

    /// Applies the full eigenbasis matrix to `(even, odd)` coefficient blocks.
    pub fn apply(
        &self,
        even_in: &[Complex64],
        odd_in: &[Complex64],
        even_out: &mut [Complex64],
        odd_out: &mut [Complex64],
    ) {
        even_out.fill(Complex64::new(0.0, 0.0));
        for (ko, amp) in odd_in.iter().enumerate() {
            if amp.re == 0.0 && amp.im == 0.0 {
                continue;
            }
            let col = self.column(ko);
            for (out, c) in even_out.iter_mut().zip(col) {
                *out += c * amp;
            }
        }
        for (ko, out) in odd_out.iter_mut().enumerate() {
            let col = self.column(ko);
            *out = col.iter().zip(even_in).map(|(c, a)| c * a).sum();
        }
    }
}

/// Transforms a parity-odd banded observable into the eigenbasis (dense cross
/// block, computed once per decomposition).
pub fn observable_in_eigenbasis(
    decomp: &SpectralDecomposition,
    obs: &ObservableMatrix,
) -> Result<EigenObservable> {
    if obs.character != ParityCharacter::Odd {
        return Err(Error::invalid(
            "eigenbasis transform is only needed for parity-odd observables",
        ));
    }
    if obs.model != decomp.model {
        return Err(Error::DimensionMismatch(
            "observable and decomposition belong to different models".into(),
        ));
    }
    let n_even = decomp.even.len();
    let n_odd = decomp.odd.len();
    let dim = decomp.model.dim();
    let cross: Vec<f64> = (0..n_odd)
        .into_par_iter()
        .map_init(
            || (vec![0.0; dim], vec![0.0; dim]),
            |(buf, applied), ko| {
                decomp.odd.scatter(ko, buf);
                obs.matrix.apply(buf, applied);
                let mut col = vec![0.0; n_even];
                for (ke, out) in col.iter_mut().enumerate() {
                    *out = decomp
                        .even
                        .vector(ke)
                        .iter()
                        .zip(&decomp.even.indices)
                        .map(|(v, &i)| v * applied[i])
                        .sum();
                }
                col
            },
        )
        .flatten()
        .collect();
    Ok(EigenObservable {
        kind: obs.kind,
        n_even,
        n_odd,
        cross,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hamiltonian, observable_matrix, ObservableKind};

    #[test]
    fn lmg_n2_spectrum_at_g0() {
        let model = ModelSpec::lmg(2).unwrap();
        let d = spectral_decomposition(&model, 0.0).unwrap();
        assert_eq!(d.even.len(), 2);
        assert_eq!(d.odd.len(), 1);
        assert!((d.even.energies[0] + 0.5).abs() < 1e-14);
        assert!(d.even.energies[1].abs() < 1e-14);
        assert!((d.odd.energies[0] + 0.5).abs() < 1e-14);
        // Ground doublet exactly degenerate.
        let gap = (d.even.energies[0] - d.odd.energies[0]).abs();
        assert!(gap < 1e-12);
    }

    #[test]
    fn qrm_decoupled_spectrum() {
        let model = ModelSpec::qrm(100.0, 8).unwrap();
        let d = spectral_decomposition(&model, 0.0).unwrap();
        // Ground state is the vacuum with spin down, in the even sector.
        assert_eq!(d.even.energies[0], -50.0);
        // Union of sector energies must be {n - 50} and {n + 50}.
        let mut all: Vec<f64> = d.even.energies.iter().chain(&d.odd.energies).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect: Vec<f64> = (0..=8).flat_map(|n| [n as f64 - 50.0, n as f64 + 50.0]).collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in all.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_and_orthonormality() {
        for (model, g) in [
            (ModelSpec::lmg(64).unwrap(), 0.5),
            (ModelSpec::qrm(100.0, 32).unwrap(), 2.0),
        ] {
            let d = spectral_decomposition(&model, g).unwrap();
            let h = hamiltonian(&model, g).unwrap();
            let dim = model.dim();
            let norm = h.norm_bound();
            let mut buf = vec![0.0; dim];
            let mut applied = vec![0.0; dim];
            for sector in [&d.even, &d.odd] {
                for k in 0..sector.len() {
                    sector.scatter(k, &mut buf);
                    h.apply(&buf, &mut applied);
                    let resid: f64 = applied
                        .iter()
                        .zip(&buf)
                        .map(|(hv, v)| (hv - sector.energies[k] * v).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(resid <= 1e-10 * norm, "residual {resid} at k={k}");
                }
                // Orthonormality within the block.
                for k in 0..sector.len() {
                    for l in 0..=k {
                        let dot: f64 = sector
                            .vector(k)
                            .iter()
                            .zip(sector.vector(l))
                            .map(|(a, b)| a * b)
                            .sum();
                        let expect = if k == l { 1.0 } else { 0.0 };
                        assert!((dot - expect).abs() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn gauge_is_positive_and_deterministic() {
        let model = ModelSpec::lmg(32).unwrap();
        let a = spectral_decomposition(&model, 0.75).unwrap();
        let b = spectral_decomposition(&model, 0.75).unwrap();
        for (sa, sb) in [(&a.even, &b.even), (&a.odd, &b.odd)] {
            for k in 0..sa.len() {
                let v = sa.vector(k);
                let max = v.iter().cloned().fold(0.0f64, |m, x| m.max(x.abs()));
                let first_max = v.iter().find(|x| x.abs() == max).unwrap();
                assert!(*first_max > 0.0, "gauge sign at k={k}");
                assert_eq!(v, sb.vector(k), "bitwise reproducibility at k={k}");
            }
        }
    }

    #[test]
    fn parity_odd_observables_have_zero_diagonal() {
        for (model, g, kind) in [
            (ModelSpec::lmg(64).unwrap(), 0.5, ObservableKind::Sx),
            (ModelSpec::qrm(100.0, 32).unwrap(), 2.0, ObservableKind::Position),
        ] {
            let d = spectral_decomposition(&model, g).unwrap();
            let obs = observable_matrix(&model, kind).unwrap();
            let dim = model.dim();
            let mut buf = vec![0.0; dim];
            let mut applied = vec![0.0; dim];
            let mut worst = 0.0f64;
            for sector in [&d.even, &d.odd] {
                for k in 0..sector.len() {
                    sector.scatter(k, &mut buf);
                    obs.matrix.apply(&buf, &mut applied);
                    let diag: f64 = buf.iter().zip(&applied).map(|(a, b)| a * b).sum();
                    worst = worst.max(diag.abs());
                }
            }
            assert!(worst <= 1e-10, "{kind:?} diagonal {worst}");
        }
    }

    #[test]
    fn doublet_table_n2() {
        let model = ModelSpec::lmg(2).unwrap();
        let d = spectral_decomposition(&model, 0.0).unwrap();
        let sx = observable_matrix(&model, ObservableKind::Sx).unwrap();
        let t = doublet_pairing(&d, &sx).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.unpaired, 1);
        let rec = &t.records[0];
        assert!(rec.gap < 1e-12);
        assert!(rec.degenerate);
        // |<phi_+|S_x|phi_->| = J = 1.
        assert!((rec.matrix_element.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_doublets_below_margin_at_n100() {
        let model = ModelSpec::lmg(100).unwrap();
        let d = spectral_decomposition(&model, 0.0).unwrap();
        let sx = observable_matrix(&model, ObservableKind::Sx).unwrap();
        let t = doublet_pairing(&d, &sx).unwrap();
        // Margin keeps clear of the critical energy E_c(0) = 0.
        let margin = 0.05 * 100.0 / 4.0;
        for rec in &t.records {
            if rec.energy_even.max(rec.energy_odd) < -margin {
                assert!(rec.gap < 1e-6, "gap {} at k={}", rec.gap, rec.k);
                assert!(rec.degenerate);
            }
        }
        // Deep doublets split exponentially small.
        assert!(t.records[0].gap < 1e-8);
        assert!(t.records[1].gap < 1e-8);
    }

    #[test]
    fn no_degenerate_doublets_in_normal_phase() {
        let model = ModelSpec::lmg(300).unwrap();
        let d = spectral_decomposition(&model, 1.25).unwrap();
        let sx = observable_matrix(&model, ObservableKind::Sx).unwrap();
        let t = doublet_pairing(&d, &sx).unwrap();
        assert_eq!(t.degenerate_count(), 0);
    }

    #[test]
    fn half_spectrum_degenerate_at_g0() {
        // At g = 0 the spin Hamiltonian is -S_x^2/N: every |m_x| > 0 pair is
        // exactly degenerate, the single m_x = 0 state is unpaired.
        let model = ModelSpec::lmg(16).unwrap();
        let d = spectral_decomposition(&model, 0.0).unwrap();
        let sx = observable_matrix(&model, ObservableKind::Sx).unwrap();
        let t = doublet_pairing(&d, &sx).unwrap();
        assert_eq!(t.len(), 8);
        assert_eq!(t.degenerate_count(), 8);
        assert_eq!(t.unpaired, 1);
        assert!(critical_energy(&model, 0.0).unwrap().abs() < 1e-15);
        for rec in &t.records {
            assert!(rec.energy_even < 0.0);
        }
    }

    #[test]
    fn critical_energies() {
        let lmg = ModelSpec::lmg(1000).unwrap();
        assert_eq!(critical_energy(&lmg, 0.5), Some(-250.0));
        assert_eq!(critical_energy(&lmg, 0.0), Some(0.0));
        assert_eq!(critical_energy(&lmg, 1.25), None);
        let qrm = ModelSpec::qrm(100.0, 100).unwrap();
        assert_eq!(critical_energy(&qrm, 2.0), Some(-50.0));
        assert_eq!(critical_energy(&qrm, 0.5), None);
    }

    #[test]
    fn dos_peak_sits_at_the_critical_energy() {
        // Collective spin model, N = 2000, g = 0.5: saddle at -500.
        let model = ModelSpec::lmg(2000).unwrap();
        let decomp = {
            // Eigenvalues suffice for the histogram; wrap them in a
            // decomposition-shaped value via the public API.
            spectral_decomposition_energies_only(&model, 0.5)
        };
        let dos = density_of_states(&decomp, 101).unwrap();
        let peak = dos
            .probabilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let ec = critical_energy(&model, 0.5).unwrap();
        let width = dos.support[1] - dos.support[0];
        assert!(
            (dos.support[peak] - ec).abs() <= 0.5 * width,
            "peak bin center {} vs E_c {ec}",
            dos.support[peak]
        );
        let total: f64 = dos.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn qrm_dos_peak_near_critical_energy() {
        let model = ModelSpec::qrm(100.0, 300).unwrap();
        let decomp = spectral_decomposition_energies_only(&model, 2.0);
        let dos = density_of_states(&decomp, 201).unwrap();
        let peak = dos
            .probabilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let width = dos.support[1] - dos.support[0];
        assert!(
            (dos.support[peak] + 50.0).abs() <= 2.0 * width,
            "peak bin center {} vs -50",
            dos.support[peak]
        );
    }

    /// Decomposition stub carrying only energies (tests that need no vectors).
    fn spectral_decomposition_energies_only(model: &ModelSpec, g: f64) -> SpectralDecomposition {
        let (even, odd) = sector_energies(model, g).unwrap();
        let blocks = build_parity_blocks(model, g).unwrap();
        SpectralDecomposition {
            model: *model,
            g,
            even: SectorEigen {
                parity: Parity::Even,
                energies: even,
                indices: blocks.even.indices,
                vectors: Vec::new(),
            },
            odd: SectorEigen {
                parity: Parity::Odd,
                energies: odd,
                indices: blocks.odd.indices,
                vectors: Vec::new(),
            },
        }
    }

    #[test]
    fn eigen_observable_matches_doublet_elements() {
        let model = ModelSpec::lmg(24).unwrap();
        let d = spectral_decomposition(&model, 0.4).unwrap();
        let sx = observable_matrix(&model, ObservableKind::Sx).unwrap();
        let table = doublet_pairing(&d, &sx).unwrap();
        let eo = observable_in_eigenbasis(&d, &sx).unwrap();
        for rec in &table.records {
            assert!((eo.cross(rec.k, rec.k) - rec.matrix_element).abs() < 1e-12);
        }
    }
}
