//! Brute-force oracle: the same interaction on the full tensor product of N
//! three-level qubits and a truncated cavity Fock space, with no
//! single-excitation restriction. Dense matrices throughout; the dimension
//! guard keeps them harmless.
//!
//! Basis ordering: qubit digits first (base 3, qubit 1 most significant,
//! digit 0/1/2 for |0>/|1>/|e>), cavity Fock index last:
//!
//! ```text
//! index = (sum_j digit_j 3^(N-j)) * (n_max + 1) + n_cav
//! ```

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::dynamics::{metrics, IntegratorConfig, Rk4, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PulseShape, StateVector};

/// Largest full-space dimension the oracle will build.
pub const DIMENSION_LIMIT: usize = 2048;

/// Full-space simulation setup.
#[derive(Debug, Clone)]
pub struct FullSpaceConfig {
    pub params: ModelParams,
    pub pulse: PulseShape,
    /// Highest retained Fock state of the cavity.
    pub cavity_truncation: usize,
}

impl FullSpaceConfig {
    pub fn new(params: ModelParams, pulse: PulseShape, cavity_truncation: usize) -> Result<Self> {
        if params.n_qubits() > 4 {
            return Err(Error::InvalidInput(format!(
                "the oracle is limited to 4 qubits, got {}",
                params.n_qubits()
            )));
        }
        if cavity_truncation < 1 {
            return Err(Error::InvalidInput(
                "cavity truncation must retain at least the one-photon state".into(),
            ));
        }
        pulse.validate()?;
        let dim = 3usize.pow(params.n_qubits() as u32) * (cavity_truncation + 1);
        if dim > DIMENSION_LIMIT {
            return Err(Error::DimensionGuard {
                dim,
                limit: DIMENSION_LIMIT,
            });
        }
        Ok(Self {
            params,
            pulse,
            cavity_truncation,
        })
    }

    pub fn dim(&self) -> usize {
        3usize.pow(self.params.n_qubits() as u32) * (self.cavity_truncation + 1)
    }

    fn fock_states(&self) -> usize {
        self.cavity_truncation + 1
    }

    /// Digits (qubit states, 1-based position) and Fock index of a basis index.
    fn decompose(&self, index: usize) -> (Vec<u8>, usize) {
        let fock = self.fock_states();
        let n_cav = index % fock;
        let mut q = index / fock;
        let n = self.params.n_qubits();
        let mut digits = vec![0u8; n];
        for j in (0..n).rev() {
            digits[j] = (q % 3) as u8;
            q /= 3;
        }
        (digits, n_cav)
    }

    fn compose(&self, digits: &[u8], n_cav: usize) -> usize {
        let mut q = 0usize;
        for &d in digits {
            q = q * 3 + d as usize;
        }
        q * self.fock_states() + n_cav
    }

    /// Conserved excitation number of a basis index: photons plus qubit
    /// population outside |0>.
    pub fn excitation_number(&self, index: usize) -> u32 {
        let (digits, n_cav) = self.decompose(index);
        n_cav as u32 + digits.iter().filter(|d| **d != 0).count() as u32
    }

    /// Full-space index of each reduced basis index (cavity state, |1>_j
    /// states, |e>_j states, absorbing vacuum).
    pub fn reduced_index_map(&self) -> Vec<usize> {
        let n = self.params.n_qubits();
        let mut map = Vec::with_capacity(2 * n + 2);
        map.push(self.compose(&vec![0u8; n], 1));
        for j in 1..=n {
            let mut digits = vec![0u8; n];
            digits[j - 1] = 1;
            map.push(self.compose(&digits, 0));
        }
        for j in 1..=n {
            let mut digits = vec![0u8; n];
            digits[j - 1] = 2;
            map.push(self.compose(&digits, 0));
        }
        map.push(self.compose(&vec![0u8; n], 0));
        map
    }

    /// Embed a reduced-basis state into the full space.
    pub fn embed(&self, reduced: &StateVector) -> Result<StateVector> {
        let map = self.reduced_index_map();
        if reduced.dim() != map.len() {
            return Err(Error::InvalidInput(format!(
                "reduced state dimension {} does not match 2N+2 = {}",
                reduced.dim(),
                map.len()
            )));
        }
        let mut full = StateVector::zeros(self.dim());
        for (k, &f) in map.iter().enumerate() {
            full.amplitudes_mut()[f] = reduced.amplitudes()[k];
        }
        Ok(full)
    }

    fn label(&self, index: usize) -> String {
        let (digits, n_cav) = self.decompose(index);
        let qubits: String = digits
            .iter()
            .map(|d| match d {
                0 => '0',
                1 => '1',
                _ => 'e',
            })
            .collect();
        format!("{qubits}_n{n_cav}")
    }

    /// Dense operators: the drive-independent coupling block, the drive block
    /// (to be scaled by the envelope), and the decay diagonal.
    fn build_operators(&self) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
        let dim = self.dim();
        let n = self.params.n_qubits();
        let fock = self.fock_states();
        let inv_k = 1.0 / self.params.dark_k;
        let mut h_static: Array2<f64> = Array2::zeros((dim, dim));
        let mut h_drive: Array2<f64> = Array2::zeros((dim, dim));
        let mut decay = vec![0.0; dim];

        for index in 0..dim {
            let (digits, n_cav) = self.decompose(index);
            decay[index] = 0.5 * self.params.kappa * n_cav as f64
                + 0.5 * self.params.gamma * digits.iter().filter(|d| **d == 2).count() as f64;
            for j in 1..=n {
                let g = self.params.couplings()[j - 1];
                if digits[j - 1] == 2 {
                    // a^dagger |0><e|_j : |e, n> -> |0, n+1>
                    if n_cav + 1 < fock {
                        let mut to = digits.clone();
                        to[j - 1] = 0;
                        let target = self.compose(&to, n_cav + 1);
                        let element = g * ((n_cav + 1) as f64).sqrt();
                        h_static[[target, index]] += element;
                        h_static[[index, target]] += element;
                    }
                    // |1><e|_j at fixed photon number, scaled by the envelope.
                    let mut to = digits.clone();
                    to[j - 1] = 1;
                    let target = self.compose(&to, n_cav);
                    let element = g * inv_k;
                    h_drive[[target, index]] += element;
                    h_drive[[index, target]] += element;
                }
            }
        }
        (h_static, h_drive, decay)
    }
}

/// Integrate the conditioned trajectory on the full space, identically to
/// the reduced integrator (same method, same step policy, same sampling).
pub fn full_space_evolve(
    cfg: &FullSpaceConfig,
    psi0: &StateVector,
    t_span: (f64, f64),
    integrator: &IntegratorConfig,
    target: &StateVector,
) -> Result<TrajectoryRecord> {
    integrator.validate()?;
    if let Some(width) = cfg.pulse.gaussian_width() {
        if integrator.dt > width / 100.0 {
            return Err(Error::StepResolution(format!(
                "dt = {} exceeds tau/100 = {} for the Gaussian pulse",
                integrator.dt,
                width / 100.0
            )));
        }
    }
    let dim = cfg.dim();
    if psi0.dim() != dim || target.dim() != dim {
        return Err(Error::InvalidInput(format!(
            "state dimensions ({}, {}) do not match the full space dimension {dim}",
            psi0.dim(),
            target.dim()
        )));
    }
    let n2 = psi0.norm_sqr();
    if (n2 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "initial state must be normalized, norm^2 = {n2}"
        )));
    }
    if !(t_span.1 > t_span.0) {
        return Err(Error::InvalidInput("need t_end > t_start".into()));
    }

    let (h_static, h_drive, decay) = cfg.build_operators();
    let pulse = &cfg.pulse;
    let rhs = |t: f64, y: &[C64], out: &mut [C64]| {
        let envelope = pulse.value(t);
        for i in 0..dim {
            let mut acc = C64::ZERO;
            let rs = h_static.row(i);
            let rd = h_drive.row(i);
            for j in 0..dim {
                let coeff = rs[j] + envelope * rd[j];
                if coeff != 0.0 {
                    acc += coeff * y[j];
                }
            }
            out[i] = C64::new(acc.im, -acc.re) - decay[i] * y[i];
        }
    };

    let (t_start, t_end) = t_span;
    let span = t_end - t_start;
    let n_steps = (span / integrator.dt).ceil().max(1.0) as usize;
    let h = span / n_steps as f64;

    let mut stepper = Rk4::new(dim);
    let mut psi: Vec<C64> = psi0.amplitudes().to_vec();
    let mut record = TrajectoryRecord {
        times: Vec::new(),
        amplitudes: Vec::new(),
        success_probability: Vec::new(),
        fidelity: Vec::new(),
        labels: (0..dim).map(|i| cfg.label(i)).collect(),
    };
    let push = |t: f64, psi: &[C64], record: &mut TrajectoryRecord| -> Result<()> {
        let m = metrics(&StateVector::new(psi.to_vec()), target)?;
        record.times.push(t);
        record.amplitudes.push(psi.to_vec());
        record.success_probability.push(m.success_probability);
        record.fidelity.push(m.fidelity);
        Ok(())
    };
    push(t_start, &psi, &mut record)?;
    for step in 0..n_steps {
        let t = t_start + step as f64 * h;
        stepper.step(&rhs, t, h, &mut psi);
        if (step + 1) % integrator.sample_every == 0 || step + 1 == n_steps {
            push(t_start + (step + 1) as f64 * h, &psi, &mut record)?;
        }
    }
    Ok(record)
}

/// Worst-case differences between a full-space record and a reduced record,
/// after aligning bases through `index_map` (reduced index -> full index).
/// Full-space amplitude on any index outside the map counts as amplitude
/// deviation too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationReport {
    pub max_success_probability: f64,
    pub max_fidelity: f64,
    pub max_amplitude: f64,
}

impl DeviationReport {
    pub fn within(&self, tolerance: f64) -> bool {
        self.max_success_probability <= tolerance
            && self.max_fidelity <= tolerance
            && self.max_amplitude <= tolerance
    }
}

impl std::fmt::Display for DeviationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max |dP_s| = {:.3e}, max |dF| = {:.3e}, max amplitude deviation = {:.3e}",
            self.max_success_probability, self.max_fidelity, self.max_amplitude
        )
    }
}

/// Compare a full-space record against a reduced one sample by sample.
pub fn compare_subspace(
    full: &TrajectoryRecord,
    reduced: &TrajectoryRecord,
    index_map: &[usize],
) -> Result<DeviationReport> {
    if full.len() != reduced.len() {
        return Err(Error::SampleMismatch(format!(
            "{} full samples vs {} reduced samples",
            full.len(),
            reduced.len()
        )));
    }
    if reduced.dim() != index_map.len() {
        return Err(Error::InvalidInput(format!(
            "index map length {} does not match the reduced dimension {}",
            index_map.len(),
            reduced.dim()
        )));
    }
    for (tf, tr) in full.times.iter().zip(&reduced.times) {
        if (tf - tr).abs() > 1e-12 * tf.abs().max(1.0) {
            return Err(Error::SampleMismatch(format!(
                "sample times differ: {tf} vs {tr}"
            )));
        }
    }

    let mut report = DeviationReport {
        max_success_probability: 0.0,
        max_fidelity: 0.0,
        max_amplitude: 0.0,
    };
    let mut in_map = vec![false; full.dim()];
    for &f in index_map {
        in_map[f] = true;
    }
    for s in 0..full.len() {
        report.max_success_probability = report
            .max_success_probability
            .max((full.success_probability[s] - reduced.success_probability[s]).abs());
        report.max_fidelity = report
            .max_fidelity
            .max((full.fidelity[s] - reduced.fidelity[s]).abs());
        for (k, &f) in index_map.iter().enumerate() {
            let d = (full.amplitudes[s][f] - reduced.amplitudes[s][k]).norm();
            report.max_amplitude = report.max_amplitude.max(d);
        }
        for (i, amp) in full.amplitudes[s].iter().enumerate() {
            if !in_map[i] {
                report.max_amplitude = report.max_amplitude.max(amp.norm());
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve_conditional, reference_pulse, reference_rates};
    use crate::model::{w_target, Basis};

    fn paper_config(n: usize, truncation: usize) -> FullSpaceConfig {
        let (gamma, kappa) = reference_rates();
        FullSpaceConfig::new(
            ModelParams::uniform(n, gamma, kappa).unwrap(),
            reference_pulse(),
            truncation,
        )
        .unwrap()
    }

    #[test]
    fn dimension_guard_trips() {
        let params = ModelParams::uniform(4, 0.0, 0.0).unwrap();
        match FullSpaceConfig::new(params, reference_pulse(), 30) {
            Err(Error::DimensionGuard { dim, .. }) => assert_eq!(dim, 81 * 31),
            other => panic!("expected DimensionGuard, got {other:?}"),
        }
        let params = ModelParams::uniform(5, 0.0, 0.0).unwrap();
        assert!(FullSpaceConfig::new(params, reference_pulse(), 1).is_err());
    }

    #[test]
    fn index_map_round_trips_and_counts_excitations() {
        let cfg = paper_config(3, 2);
        let map = cfg.reduced_index_map();
        assert_eq!(map.len(), 8);
        // Reduced indices 0..2N carry one excitation, the absorbing one zero.
        for (k, &f) in map.iter().enumerate() {
            let expected = if k == map.len() - 1 { 0 } else { 1 };
            assert_eq!(cfg.excitation_number(f), expected, "reduced index {k}");
        }
        // All map targets are distinct.
        let mut sorted = map.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), map.len());
    }

    #[test]
    fn single_excitation_sector_is_exactly_conserved() {
        let params = ModelParams::uniform(2, 0.0, 0.0).unwrap();
        let cfg = FullSpaceConfig::new(params, reference_pulse(), 2).unwrap();
        let reduced0 = StateVector::basis_state(6, Basis::CAVITY);
        let psi0 = cfg.embed(&reduced0).unwrap();
        let target = cfg.embed(&w_target(2)).unwrap();
        let record = full_space_evolve(
            &cfg,
            &psi0,
            (0.0, 5.0),
            &IntegratorConfig::default(),
            &target,
        )
        .unwrap();
        for s in 0..record.len() {
            for (i, amp) in record.amplitudes[s].iter().enumerate() {
                if cfg.excitation_number(i) != 1 {
                    assert!(amp.norm() <= 1e-12, "leak at index {i}: {amp}");
                }
            }
        }
    }

    #[test]
    fn two_qubit_full_space_matches_the_reduced_model() {
        let cfg = paper_config(2, 2);
        let reduced0 = StateVector::basis_state(6, Basis::CAVITY);
        let integrator = IntegratorConfig::default();
        let reduced = evolve_conditional(
            &cfg.params,
            &cfg.pulse,
            &reduced0,
            (0.0, 25.0),
            &integrator,
            &w_target(2),
        )
        .unwrap();
        let full = full_space_evolve(
            &cfg,
            &cfg.embed(&reduced0).unwrap(),
            (0.0, 25.0),
            &integrator,
            &cfg.embed(&w_target(2)).unwrap(),
        )
        .unwrap();
        let report = compare_subspace(&full, &reduced, &cfg.reduced_index_map()).unwrap();
        assert!(report.within(1e-6), "{report}");
    }

    #[test]
    fn truncation_is_irrelevant_in_the_single_excitation_sector() {
        let one = paper_config(2, 1);
        let two = paper_config(2, 2);
        let reduced0 = StateVector::basis_state(6, Basis::CAVITY);
        let integrator = IntegratorConfig::default();
        let run = |cfg: &FullSpaceConfig| {
            full_space_evolve(
                cfg,
                &cfg.embed(&reduced0).unwrap(),
                (0.0, 10.0),
                &integrator,
                &cfg.embed(&w_target(2)).unwrap(),
            )
            .unwrap()
        };
        let record_one = run(&one);
        let record_two = run(&two);
        let map_one = one.reduced_index_map();
        let map_two = two.reduced_index_map();
        for s in 0..record_one.len() {
            assert!(
                (record_one.success_probability[s] - record_two.success_probability[s]).abs()
                    <= 1e-12
            );
            assert!((record_one.fidelity[s] - record_two.fidelity[s]).abs() <= 1e-12);
            for k in 0..map_one.len() {
                let a = record_one.amplitudes[s][map_one[k]];
                let b = record_two.amplitudes[s][map_two[k]];
                assert!((a - b).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn comparison_detects_perturbed_couplings() {
        let cfg = paper_config(2, 2);
        let reduced0 = StateVector::basis_state(6, Basis::CAVITY);
        let integrator = IntegratorConfig::default();
        let full = full_space_evolve(
            &cfg,
            &cfg.embed(&reduced0).unwrap(),
            (0.0, 10.0),
            &integrator,
            &cfg.embed(&w_target(2)).unwrap(),
        )
        .unwrap();

        let identical = evolve_conditional(
            &cfg.params,
            &cfg.pulse,
            &reduced0,
            (0.0, 10.0),
            &integrator,
            &w_target(2),
        )
        .unwrap();
        let report = compare_subspace(&full, &identical, &cfg.reduced_index_map()).unwrap();
        assert!(report.within(1e-9), "identical physics: {report}");

        let (gamma, kappa) = reference_rates();
        let perturbed_params = ModelParams::new(vec![1.0 + 1e-3, 1.0], gamma, kappa, 1.0).unwrap();
        let perturbed = evolve_conditional(
            &perturbed_params,
            &cfg.pulse,
            &reduced0,
            (0.0, 10.0),
            &integrator,
            &w_target(2),
        )
        .unwrap();
        let report = compare_subspace(&full, &perturbed, &cfg.reduced_index_map()).unwrap();
        assert!(
            report.max_amplitude > 1e-6,
            "perturbation should be visible: {report}"
        );
    }

    #[test]
    fn sample_mismatch_is_an_error() {
        let cfg = paper_config(2, 1);
        let reduced0 = StateVector::basis_state(6, Basis::CAVITY);
        let integrator = IntegratorConfig::default();
        let full = full_space_evolve(
            &cfg,
            &cfg.embed(&reduced0).unwrap(),
            (0.0, 5.0),
            &integrator,
            &cfg.embed(&w_target(2)).unwrap(),
        )
        .unwrap();
        let reduced = evolve_conditional(
            &cfg.params,
            &cfg.pulse,
            &reduced0,
            (0.0, 4.0),
            &integrator,
            &w_target(2),
        )
        .unwrap();
        match compare_subspace(&full, &reduced, &cfg.reduced_index_map()) {
            Err(Error::SampleMismatch(_)) => {}
            other => panic!("expected SampleMismatch, got {other:?}"),
        }
    }
}
