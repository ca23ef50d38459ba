//! rf-SQUID level structure: the flux Hamiltonian
//!
//! ```text
//! H = Q^2/2C + (Phi - Phi_x)^2/2L - E_J cos(2 pi Phi / Phi_0)
//! ```
//!
//! is diagonalized on a uniform flux grid with a second-order finite
//! difference stencil, and the cavity / microwave coupling strengths are
//! derived from the flux matrix elements of the three working levels.
//!
//! Accuracy comes from grid doubling: every solve is repeated on a grid with
//! twice the number of points, the pair certifies convergence, and the
//! returned eigenvalues and matrix elements are the h^2-extrapolation of the
//! two solves. Retained wavefunctions come from the finer grid.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::linalg::SymTridiag;

/// Planck constant (J s).
pub const PLANCK_H: f64 = 6.62607015e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054571817e-34;
/// Magnetic flux quantum h/2e (Wb).
pub const FLUX_QUANTUM: f64 = 2.0678338484619295e-15;
/// Vacuum permeability (H/m).
pub const VACUUM_PERMEABILITY: f64 = 1.25663706212e-6;

/// Device parameters of a single rf-SQUID.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquidSpec {
    /// Junction capacitance (F).
    pub capacitance: f64,
    /// Loop inductance (H).
    pub inductance: f64,
    /// Josephson energy (J).
    pub josephson_energy: f64,
    /// Externally applied bias flux (Wb).
    pub bias_flux: f64,
}

impl SquidSpec {
    /// Build from the Josephson energy.
    pub fn new(
        capacitance: f64,
        inductance: f64,
        josephson_energy: f64,
        bias_flux: f64,
    ) -> Result<Self> {
        if !(capacitance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "capacitance must be positive, got {capacitance}"
            )));
        }
        if !(inductance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "inductance must be positive, got {inductance}"
            )));
        }
        if !(josephson_energy >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "Josephson energy must be non-negative, got {josephson_energy}"
            )));
        }
        if !bias_flux.is_finite() {
            return Err(Error::InvalidInput("bias flux must be finite".into()));
        }
        Ok(Self {
            capacitance,
            inductance,
            josephson_energy,
            bias_flux,
        })
    }

    /// Build from the junction critical current, E_J = I_c Phi_0 / 2 pi.
    pub fn from_critical_current(
        capacitance: f64,
        inductance: f64,
        critical_current: f64,
        bias_flux: f64,
    ) -> Result<Self> {
        if !(critical_current >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "critical current must be non-negative, got {critical_current}"
            )));
        }
        let josephson_energy = critical_current * FLUX_QUANTUM / std::f64::consts::TAU;
        Self::new(capacitance, inductance, josephson_energy, bias_flux)
    }

    /// Build with both E_J and I_c given; they must agree to 1 part in 1e9.
    pub fn from_both(
        capacitance: f64,
        inductance: f64,
        josephson_energy: f64,
        critical_current: f64,
        bias_flux: f64,
    ) -> Result<Self> {
        let from_ic = critical_current * FLUX_QUANTUM / std::f64::consts::TAU;
        let scale = josephson_energy.abs().max(from_ic.abs());
        if scale > 0.0 && (josephson_energy - from_ic).abs() > 1e-9 * scale {
            return Err(Error::InvalidInput(format!(
                "josephson_energy {josephson_energy:e} and critical_current {critical_current:e} \
                 disagree beyond 1e-9 relative (I_c Phi_0 / 2 pi = {from_ic:e})"
            )));
        }
        Self::new(capacitance, inductance, josephson_energy, bias_flux)
    }

    /// Critical current corresponding to the stored Josephson energy.
    pub fn critical_current(&self) -> f64 {
        self.josephson_energy * std::f64::consts::TAU / FLUX_QUANTUM
    }

    /// Dimensionless nonlinearity beta_L = 2 pi L I_c / Phi_0; above 1 the
    /// flux potential develops a double well.
    pub fn beta_l(&self) -> f64 {
        std::f64::consts::TAU * self.inductance * self.critical_current() / FLUX_QUANTUM
    }

    /// Bare LC frequency 1/sqrt(LC) (rad/s).
    pub fn lc_frequency(&self) -> f64 {
        1.0 / (self.inductance * self.capacitance).sqrt()
    }

    /// Flux potential V(Phi) (J).
    pub fn potential(&self, phi: f64) -> f64 {
        let d = phi - self.bias_flux;
        d * d / (2.0 * self.inductance)
            - self.josephson_energy * (std::f64::consts::TAU * phi / FLUX_QUANTUM).cos()
    }
}

/// Uniform discretization of the flux coordinate, endpoints included,
/// with hard-wall (Dirichlet) boundaries just outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxGrid {
    pub phi_min: f64,
    pub phi_max: f64,
    pub num_points: usize,
}

impl FluxGrid {
    pub fn new(phi_min: f64, phi_max: f64, num_points: usize) -> Result<Self> {
        if num_points < 64 {
            return Err(Error::InvalidInput(format!(
                "flux grid needs at least 64 points, got {num_points}"
            )));
        }
        if !(phi_min < phi_max) {
            return Err(Error::InvalidInput(format!(
                "flux grid needs phi_min < phi_max, got [{phi_min}, {phi_max}]"
            )));
        }
        Ok(Self {
            phi_min,
            phi_max,
            num_points,
        })
    }

    pub fn step(&self) -> f64 {
        (self.phi_max - self.phi_min) / (self.num_points as f64 - 1.0)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.phi_min + i as f64 * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.num_points).map(|i| self.point(i)).collect()
    }

    /// Same span with twice the number of points.
    pub fn doubled(&self) -> Self {
        Self {
            phi_min: self.phi_min,
            phi_max: self.phi_max,
            num_points: 2 * self.num_points,
        }
    }
}

/// Scalar geometry stand-ins for the cavity and microwave field overlaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingGeometry {
    /// Cavity mode frequency (rad/s).
    pub cavity_frequency: f64,
    /// Spatial overlap integral of the cavity magnetic mode with the loop,
    /// per unit mode amplitude (T m^2).
    pub cavity_overlap: f64,
    /// Ratio of the microwave overlap to the cavity overlap; 1.0 for a drive
    /// injected collinearly with the cavity mode.
    pub drive_overlap_ratio: f64,
}

impl CouplingGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.cavity_frequency > 0.0) || !self.cavity_frequency.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cavity frequency must be positive and finite, got {}",
                self.cavity_frequency
            )));
        }
        if !self.cavity_overlap.is_finite() || !self.drive_overlap_ratio.is_finite() {
            return Err(Error::InvalidInput(
                "coupling overlaps must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Retained eigenfunctions on the fine grid, L2-normalized with the grid
/// weight: sum(psi^2) dx = 1.
#[derive(Debug, Clone)]
pub struct Wavefunctions {
    pub phi: Vec<f64>,
    pub step: f64,
    /// One amplitude vector per computed level, lowest first.
    pub amplitudes: Vec<Vec<f64>>,
}

/// Eigenvalues and flux matrix elements of the working levels.
#[derive(Debug, Clone)]
pub struct LevelStructure {
    /// Lowest `num_levels` eigenenergies (J), ascending, h^2-extrapolated.
    pub energies: Vec<f64>,
    /// `<0|Phi|e>` (Wb) between the selected ground and excited levels.
    pub flux_matrix_element_0e: f64,
    /// `<1|Phi|e>` (Wb) between the selected first and excited levels.
    pub flux_matrix_element_1e: f64,
    /// Which eigenstates play (|0>, |1>, |e>); defaults to (0, 1, 2).
    pub lambda_indices: (usize, usize, usize),
    /// Fine-grid eigenfunctions, if retained.
    pub wavefunctions: Option<Wavefunctions>,
    /// Extrapolated `<i|Phi|j>` for all computed pairs, row-major k x k.
    flux_elements: Vec<f64>,
    num_computed: usize,
}

impl LevelStructure {
    /// Extrapolated flux matrix element `<i|Phi|j>` (Wb) for any pair of
    /// computed levels.
    pub fn flux_matrix_element(&self, i: usize, j: usize) -> Option<f64> {
        if i < self.num_computed && j < self.num_computed {
            Some(self.flux_elements[i * self.num_computed + j])
        } else {
            None
        }
    }

    /// CSV of (phi, potential, psi_0, ..., psi_{k-1}) for plotting. Requires
    /// retained wavefunctions.
    pub fn write_wavefunctions_csv<W: Write>(
        &self,
        spec: &SquidSpec,
        mut out: W,
    ) -> io::Result<()> {
        let wf = self.wavefunctions.as_ref().ok_or_else(|| {
            io::Error::new(
                io::ErrorKind::InvalidInput,
                "wavefunctions were not retained by the solve",
            )
        })?;
        write!(out, "phi,potential")?;
        for k in 0..wf.amplitudes.len() {
            write!(out, ",psi_{k}")?;
        }
        writeln!(out)?;
        for (i, &phi) in wf.phi.iter().enumerate() {
            write!(out, "{:.16e},{:.16e}", phi, spec.potential(phi))?;
            for amp in &wf.amplitudes {
                write!(out, ",{:.16e}", amp[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Knobs for [`solve_flux_levels_with`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Eigenstate indices used as (|0>, |1>, |e>).
    pub lambda_indices: (usize, usize, usize),
    /// Grid-doubling convergence tolerance on the raw (unextrapolated)
    /// eigenvalues, relative to max(|E|, hbar / sqrt(LC)). The extrapolated
    /// output is an order of magnitude better than this certificate.
    pub convergence_tol: f64,
    /// Maximum relative eigenfunction amplitude allowed at the grid edges.
    pub edge_decay_tol: f64,
    /// Keep the fine-grid eigenfunctions in the result.
    pub retain_wavefunctions: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            lambda_indices: (0, 1, 2),
            convergence_tol: 1e-5,
            edge_decay_tol: 1e-8,
            retain_wavefunctions: true,
        }
    }
}

struct GridSolution {
    step: f64,
    energies: Vec<f64>,
    /// Grid-weight-normalized eigenfunctions with the sign convention applied.
    vectors: Vec<Vec<f64>>,
    phi: Vec<f64>,
}

fn solve_on_grid(spec: &SquidSpec, grid: &FluxGrid, k: usize) -> GridSolution {
    let n = grid.num_points;
    let dx = grid.step();
    let kinetic = HBAR * HBAR / (2.0 * spec.capacitance * dx * dx);
    let phi = grid.points();
    let diag: Vec<f64> = phi
        .iter()
        .map(|&p| 2.0 * kinetic + spec.potential(p))
        .collect();
    let off = vec![-kinetic; n - 1];
    let tri = SymTridiag::new(diag, off);
    let (energies, mut vectors) = tri.lowest_eigenpairs(k);
    let weight = dx.sqrt();
    for v in &mut vectors {
        // Fix the global phase: the largest-magnitude amplitude is positive.
        let mut peak = 0usize;
        for (i, a) in v.iter().enumerate() {
            if a.abs() > v[peak].abs() {
                peak = i;
            }
        }
        let sign = if v[peak] < 0.0 { -1.0 } else { 1.0 };
        for a in v.iter_mut() {
            *a *= sign / weight;
        }
    }
    GridSolution {
        step: dx,
        energies,
        vectors,
        phi,
    }
}

/// `<i|f(Phi)|j>` by grid quadrature on one solution.
fn quadrature(sol: &GridSolution, i: usize, j: usize, f: impl Fn(f64) -> f64) -> f64 {
    sol.vectors[i]
        .iter()
        .zip(&sol.vectors[j])
        .zip(&sol.phi)
        .map(|((a, b), &p)| a * b * f(p))
        .sum::<f64>()
        * sol.step
}

/// Relative sign of the same physical eigenstate on the coarse and fine
/// grids (the per-grid convention can in principle disagree between grids).
fn grid_alignment(coarse: &GridSolution, fine: &GridSolution, level: usize) -> f64 {
    let ratio = (fine.phi.len() - 1) as f64 / (coarse.phi.len() - 1) as f64;
    let dot: f64 = coarse.vectors[level]
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let j = ((i as f64 * ratio).round() as usize).min(fine.phi.len() - 1);
            a * fine.vectors[level][j]
        })
        .sum();
    if dot < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Richardson-extrapolate the pair of second-order values (v1 at step h1,
/// v2 at step h2 < h1) to h -> 0.
fn extrapolate(v1: f64, h1: f64, v2: f64, h2: f64) -> f64 {
    v2 + (v2 - v1) * h2 * h2 / (h1 * h1 - h2 * h2)
}

/// Lowest `num_levels` eigenpairs of the flux Hamiltonian with default
/// [`SolveOptions`].
pub fn solve_flux_levels(
    spec: &SquidSpec,
    grid: &FluxGrid,
    num_levels: usize,
) -> Result<LevelStructure> {
    solve_flux_levels_with(spec, grid, num_levels, &SolveOptions::default())
}

/// Lowest `num_levels` eigenpairs of the flux Hamiltonian.
///
/// The solve runs on `grid` and on its doubling; disagreement beyond the
/// convergence tolerance is an error, and the returned energies and matrix
/// elements are the extrapolation of the pair.
pub fn solve_flux_levels_with(
    spec: &SquidSpec,
    grid: &FluxGrid,
    num_levels: usize,
    options: &SolveOptions,
) -> Result<LevelStructure> {
    if num_levels < 3 {
        return Err(Error::InvalidInput(format!(
            "num_levels must be at least 3, got {num_levels}"
        )));
    }
    if !(grid.phi_min < spec.bias_flux && spec.bias_flux < grid.phi_max) {
        return Err(Error::InvalidInput(format!(
            "bias flux {:e} must lie strictly inside the grid [{:e}, {:e}]",
            spec.bias_flux, grid.phi_min, grid.phi_max
        )));
    }
    let (i0, i1, ie) = options.lambda_indices;
    if !(i0 < i1 && i1 < ie) {
        return Err(Error::InvalidInput(format!(
            "lambda indices must be strictly increasing, got ({i0}, {i1}, {ie})"
        )));
    }
    let k = num_levels.max(ie + 1);
    if k >= grid.num_points {
        return Err(Error::InvalidInput(format!(
            "cannot compute {k} levels on a {}-point grid",
            grid.num_points
        )));
    }

    let coarse = solve_on_grid(spec, grid, k);
    let fine = solve_on_grid(spec, &grid.doubled(), k);

    // Edge decay, checked on both grids.
    for sol in [&coarse, &fine] {
        for (level, v) in sol.vectors.iter().enumerate() {
            let peak = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            let edge = v[0].abs().max(v[v.len() - 1].abs());
            if edge > options.edge_decay_tol * peak {
                return Err(Error::GridTooNarrow {
                    level,
                    edge_amplitude: edge / peak,
                    tolerance: options.edge_decay_tol,
                });
            }
        }
    }

    // Convergence under doubling, relative to max(|E|, hbar omega_LC).
    let energy_scale = HBAR * spec.lc_frequency();
    for level in 0..k {
        let denom = fine.energies[level].abs().max(energy_scale);
        let delta = (fine.energies[level] - coarse.energies[level]).abs() / denom;
        if delta > options.convergence_tol {
            return Err(Error::NotConverged {
                level,
                delta,
                tolerance: options.convergence_tol,
            });
        }
    }

    let energies: Vec<f64> = (0..num_levels)
        .map(|l| extrapolate(coarse.energies[l], coarse.step, fine.energies[l], fine.step))
        .collect();

    let align: Vec<f64> = (0..k).map(|l| grid_alignment(&coarse, &fine, l)).collect();
    let mut flux_elements = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let mc = quadrature(&coarse, i, j, |p| p) * align[i] * align[j];
            let mf = quadrature(&fine, i, j, |p| p);
            let m = extrapolate(mc, coarse.step, mf, fine.step);
            flux_elements[i * k + j] = m;
            flux_elements[j * k + i] = m;
        }
    }

    let wavefunctions = options.retain_wavefunctions.then(|| Wavefunctions {
        phi: fine.phi.clone(),
        step: fine.step,
        amplitudes: fine.vectors.clone(),
    });

    Ok(LevelStructure {
        flux_matrix_element_0e: flux_elements[i0 * k + ie],
        flux_matrix_element_1e: flux_elements[i1 * k + ie],
        energies,
        lambda_indices: (i0, i1, ie),
        wavefunctions,
        flux_elements,
        num_computed: k,
    })
}

/// Derived coupling strengths (rad/s); `omega_scale` is per unit drive
/// amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub g: f64,
    pub omega_scale: f64,
}

/// Cavity coupling g and drive scale from the level structure and the scalar
/// overlap geometry:
///
/// ```text
/// g           = (1/L) sqrt(omega_c / 2 mu_0 hbar) <0|Phi|e> S_c
/// omega_scale = (1/L hbar) <1|Phi|e> ratio S_c
/// ```
///
/// The mode-normalization convention folds into the product with `S_c`; signs
/// follow the matrix-element phase convention.
pub fn coupling_constants(
    levels: &LevelStructure,
    geometry: &CouplingGeometry,
    spec: &SquidSpec,
) -> Result<Coupling> {
    geometry.validate()?;
    let prefactor = (geometry.cavity_frequency / (2.0 * VACUUM_PERMEABILITY * HBAR)).sqrt();
    let g = prefactor * levels.flux_matrix_element_0e * geometry.cavity_overlap / spec.inductance;
    let omega_scale =
        levels.flux_matrix_element_1e * geometry.drive_overlap_ratio * geometry.cavity_overlap
            / (spec.inductance * HBAR);
    Ok(Coupling { g, omega_scale })
}

/// Cavity overlap S_c (T m^2) that reproduces a target coupling g for a given
/// level structure; inverse of [`coupling_constants`].
pub fn overlap_for_coupling(
    levels: &LevelStructure,
    geometry: &CouplingGeometry,
    spec: &SquidSpec,
    g_target: f64,
) -> Result<f64> {
    geometry.validate()?;
    let prefactor = (geometry.cavity_frequency / (2.0 * VACUUM_PERMEABILITY * HBAR)).sqrt();
    let denom = prefactor * levels.flux_matrix_element_0e / spec.inductance;
    if denom == 0.0 {
        return Err(Error::InvalidInput(
            "the 0-e transition is forbidden; no overlap reproduces a nonzero g".into(),
        ));
    }
    Ok(g_target / denom)
}

/// Illustrative lambda-configuration device used by the demos and golden
/// tests: beta_L = 1.1 with the bias a little off the symmetry point, which
/// puts the two lowest levels in opposite wells and the third just above the
/// barrier where it couples to both. The dynamics modules take rates
/// directly and do not depend on these values.
pub fn reference_spec() -> SquidSpec {
    let critical_current = 1.1 * FLUX_QUANTUM / (std::f64::consts::TAU * 1.0e-10);
    SquidSpec::from_critical_current(1.0e-13, 1.0e-10, critical_current, 0.5002 * FLUX_QUANTUM)
        .expect("reference spec is valid")
}

/// Grid wide enough for the lowest few levels of [`reference_spec`].
pub fn reference_grid(num_points: usize) -> FluxGrid {
    FluxGrid::new(0.05 * FLUX_QUANTUM, 0.95 * FLUX_QUANTUM, num_points)
        .expect("reference grid is valid")
}
