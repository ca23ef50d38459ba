//! Single-excitation model of N three-level rf-SQUIDs in a cavity.
//!
//! Everything here is dimensionless: energies and rates in units of the
//! reference coupling g, times in 1/g. SI conversion happens at the CLI
//! boundary only.
//!
//! The basis packs the conserved-excitation sector plus one absorbing level:
//!
//! ```text
//! index 0        |0...0> |1_cav>
//! index j        |1>_j, rest |0>, |0_cav>     (j = 1..N)
//! index N+j      |e>_j, rest |0>, |0_cav>
//! index 2N+1     |0...0> |0_cav>              (absorbing failure state)
//! ```

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Index bookkeeping for the 2N+2 dimensional state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    n: usize,
}

impl Basis {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits < 1 {
            return Err(Error::InvalidInput("need at least one qubit".into()));
        }
        Ok(Self { n: n_qubits })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 2
    }

    /// All qubits ground, one cavity photon.
    pub const CAVITY: usize = 0;

    /// Qubit `j` (1-based) in state |1>, cavity empty.
    pub fn one_index(&self, j: usize) -> usize {
        debug_assert!(1 <= j && j <= self.n);
        j
    }

    /// Qubit `j` (1-based) in state |e>, cavity empty.
    pub fn excited_index(&self, j: usize) -> usize {
        debug_assert!(1 <= j && j <= self.n);
        self.n + j
    }

    /// Absorbing zero-excitation state reached only by a quantum jump.
    pub fn absorbing_index(&self) -> usize {
        2 * self.n + 1
    }

    /// Eigenvalue of the conserved excitation number on basis index `i`.
    pub fn excitation_number(&self, i: usize) -> u32 {
        if i == self.absorbing_index() {
            0
        } else {
            1
        }
    }

    /// Human-readable label, used for CSV headers.
    pub fn label(&self, i: usize) -> String {
        if i == Self::CAVITY {
            "cavity".into()
        } else if i <= self.n {
            format!("1_{i}")
        } else if i <= 2 * self.n {
            format!("e_{}", i - self.n)
        } else {
            "absorbed".into()
        }
    }
}

/// Dimensionless model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    n: usize,
    /// Per-qubit cavity couplings g_j in units of the reference g.
    couplings: Vec<f64>,
    /// Excited-level spontaneous emission rate (units of g).
    pub gamma: f64,
    /// Cavity decay rate (units of g).
    pub kappa: f64,
    /// Dark-state constant K: the collinear drive fixes
    /// Omega_j(t) = g_j * drive(t) / K.
    pub dark_k: f64,
}

impl ModelParams {
    pub fn new(couplings: Vec<f64>, gamma: f64, kappa: f64, dark_k: f64) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::InvalidInput("need at least one qubit".into()));
        }
        // Zero couplings are admitted so decay-only scenarios stay
        // expressible; negative ones are not.
        if couplings.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "couplings must be non-negative, got {couplings:?}"
            )));
        }
        if !(gamma >= 0.0) || !(kappa >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "decay rates must be non-negative, got gamma = {gamma}, kappa = {kappa}"
            )));
        }
        if !(dark_k > 0.0) {
            return Err(Error::InvalidInput(format!(
                "the dark-state constant K must be positive, got {dark_k}"
            )));
        }
        Ok(Self {
            n: couplings.len(),
            couplings,
            gamma,
            kappa,
            dark_k,
        })
    }

    /// Equal couplings g_j = 1, K = 1.
    pub fn uniform(n_qubits: usize, gamma: f64, kappa: f64) -> Result<Self> {
        Self::new(vec![1.0; n_qubits], gamma, kappa, 1.0)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> Basis {
        Basis { n: self.n }
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// Rabi frequency Omega_j(t) for a drive envelope value.
    pub fn drive_strength(&self, j: usize, envelope: f64) -> f64 {
        self.couplings[j - 1] * envelope / self.dark_k
    }
}

/// Time-dependent drive envelope (units of g; time in 1/g).
#[derive(Debug, Clone, PartialEq)]
pub enum PulseShape {
    /// A exp(-(t - t0)^2 / 2 tau^2)
    Gaussian {
        amplitude: f64,
        width: f64,
        center: f64,
    },
    /// Linear interpolation between (t, value) knots; clamped outside.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl PulseShape {
    pub fn gaussian(amplitude: f64, width: f64, center: f64) -> Result<Self> {
        let pulse = Self::Gaussian {
            amplitude,
            width,
            center,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        let pulse = Self::PiecewiseLinear { knots };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian {
                amplitude, width, ..
            } => {
                if !(*amplitude >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "Gaussian amplitude must be non-negative, got {amplitude}"
                    )));
                }
                if !(*width > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "Gaussian width must be positive, got {width}"
                    )));
                }
            }
            Self::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(Error::InvalidInput(
                        "piecewise pulse needs at least one knot".into(),
                    ));
                }
                for pair in knots.windows(2) {
                    if !(pair[0].0 < pair[1].0) {
                        return Err(Error::InvalidInput(
                            "piecewise pulse knots must have strictly increasing times".into(),
                        ));
                    }
                }
                if knots.iter().any(|(_, v)| !(*v >= 0.0)) {
                    return Err(Error::InvalidInput(
                        "piecewise pulse values must be non-negative".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Envelope value at time `t`; total and non-negative.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Gaussian {
                amplitude,
                width,
                center,
            } => {
                let z = (t - center) / width;
                amplitude * (-0.5 * z * z).exp()
            }
            Self::PiecewiseLinear { knots } => {
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                if t >= knots[knots.len() - 1].0 {
                    return knots[knots.len() - 1].1;
                }
                let idx = knots.partition_point(|(tk, _)| *tk <= t);
                let (t0, v0) = knots[idx - 1];
                let (t1, v1) = knots[idx];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Peak amplitude (Gaussian) or the largest knot value.
    pub fn peak(&self) -> f64 {
        match self {
            Self::Gaussian { amplitude, .. } => *amplitude,
            Self::PiecewiseLinear { knots } => knots.iter().map(|(_, v)| *v).fold(0.0, f64::max),
        }
    }

    /// Gaussian width, if this is a Gaussian (resolution guard input).
    pub fn gaussian_width(&self) -> Option<f64> {
        match self {
            Self::Gaussian { width, .. } => Some(*width),
            Self::PiecewiseLinear { .. } => None,
        }
    }
}

/// Complex amplitudes over a [`Basis`]; conditioned states carry norm < 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            amps: vec![C64::ZERO; dim],
        }
    }

    /// Unit amplitude on one basis index.
    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut amps = vec![C64::ZERO; dim];
        amps[index] = C64::ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &Self) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Rescaled copy with unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 < 1e-15 {
            return Err(Error::ZeroNorm { norm_sqr: n2 });
        }
        let inv = 1.0 / n2.sqrt();
        Ok(Self {
            amps: self.amps.iter().map(|a| a * inv).collect(),
        })
    }
}

/// Interaction Hamiltonian H_I(t) over the basis, in units of g: the cavity
/// couples |0...0>|1_cav> to each |e>_j with strength g_j, and the collinear
/// drive couples |1>_j to |e>_j with Omega_j(t) = g_j drive(t) / K. The
/// absorbing row and column are identically zero; Hermitian by construction.
pub fn hamiltonian(params: &ModelParams, pulse: &PulseShape, t: f64) -> Array2<C64> {
    let basis = params.basis();
    let dim = basis.dim();
    let envelope = pulse.value(t);
    let mut h: Array2<C64> = Array2::zeros((dim, dim));
    for j in 1..=params.n_qubits() {
        let g = params.couplings()[j - 1];
        let omega = params.drive_strength(j, envelope);
        let e = basis.excited_index(j);
        h[[Basis::CAVITY, e]] = C64::from(g);
        h[[e, Basis::CAVITY]] = C64::from(g);
        h[[basis.one_index(j), e]] = C64::from(omega);
        h[[e, basis.one_index(j)]] = C64::from(omega);
    }
    h
}

/// Non-Hermitian no-jump generator H_eff(t) = H_I(t) - i kappa/2 P_cav
/// - i Gamma/2 sum_j P_e,j.
pub fn effective_hamiltonian(params: &ModelParams, pulse: &PulseShape, t: f64) -> Array2<C64> {
    let basis = params.basis();
    let mut h = hamiltonian(params, pulse, t);
    h[[Basis::CAVITY, Basis::CAVITY]] -= C64::new(0.0, 0.5 * params.kappa);
    for j in 1..=params.n_qubits() {
        let e = basis.excited_index(j);
        h[[e, e]] -= C64::new(0.0, 0.5 * params.gamma);
    }
    h
}

/// Instantaneous dark state of the interaction: with the collinear
/// constraint every coefficient g_j / Omega_j(t) collapses to K / drive(t),
/// so the state depends only on K and the envelope,
///
/// ```text
/// |D(t)>  ~  |0...0>|1_cav> - (K/drive) sum_j |1_j>|0_cav>,
/// ```
///
/// normalized, with zero amplitude on every excited and absorbing index.
pub fn dark_state(params: &ModelParams, pulse: &PulseShape, t: f64) -> Result<StateVector> {
    let envelope = pulse.value(t);
    if envelope <= 0.0 {
        return Err(Error::DriveZero { t });
    }
    let basis = params.basis();
    let n = params.n_qubits() as f64;
    let ratio = params.dark_k / envelope;
    let norm = (1.0 + n * ratio * ratio).sqrt();
    let mut state = StateVector::zeros(basis.dim());
    state.amps[Basis::CAVITY] = C64::from(1.0 / norm);
    for j in 1..=params.n_qubits() {
        state.amps[basis.one_index(j)] = C64::from(-ratio / norm);
    }
    Ok(state)
}

/// The target W state: amplitude 1/sqrt(N) on every |1>_j index.
pub fn w_target(n_qubits: usize) -> StateVector {
    let basis = Basis { n: n_qubits };
    let mut state = StateVector::zeros(basis.dim());
    let amp = C64::from(1.0 / (n_qubits as f64).sqrt());
    for j in 1..=n_qubits {
        state.amps[basis.one_index(j)] = amp;
    }
    state
}
