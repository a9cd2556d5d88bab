//! Initial-state construction: Gaussian wavepackets, harmonic-oscillator
//! eigenstates, amplitude-loading circuits, and Boltzmann-weighted reactant
//! ensembles.
//!
//! Builders validate against the grid before touching amplitudes — a packet
//! narrower than two cells, leaning on a domain wall, or carrying momentum
//! near the band edge is rejected rather than silently aliased.  The thermal
//! sampler works relative to the lowest internal level so its weights stay
//! representable at any temperature.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{init_wavefunction, GridError, GridSpec, GridWavefunction};
use crate::qsim::{Gate, Register};

/// Widest register `amplitude_load_circuit` will materialize; the gate count
/// is Θ(2ⁿ) so anything beyond this is a scenario mistake.
pub const MAX_LOAD_QUBITS: usize = 20;

/// Highest vibrational quantum number the eigenstate builder accepts.
pub const MAX_QUANTUM_NUMBER: usize = 64;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("packet width {width} is narrower than two grid cells of {dx}")]
    WidthUnresolvable { width: f64, dx: f64 },
    #[error("packet support [{lo}, {hi}] reaches outside the axis domain")]
    PacketNearBoundary { lo: f64, hi: f64 },
    #[error("momentum {momentum} leaves no room under the band edge {nyquist}")]
    MomentumAliased { momentum: f64, nyquist: f64 },
    #[error("grid has {axes} axes but {got} packet specs were given")]
    SpecCount { axes: usize, got: usize },
    #[error("harmonic wells are one-dimensional; grid has {axes} axes")]
    NotOneDimensional { axes: usize },
    #[error("well parameters must be positive and finite (omega {omega}, mass {mass})")]
    BadWell { omega: f64, mass: f64 },
    #[error("quantum number {v} above the supported maximum {max}")]
    QuantumNumberTooLarge { v: usize, max: usize },
    #[error("level {v} is unresolvable here (ground width {sigma}, cell {dx})")]
    EigenstateUnresolvable { v: usize, sigma: f64, dx: f64 },
    #[error("eigenstate envelope [{lo}, {hi}] reaches outside the axis domain")]
    EigenstateClipped { lo: f64, hi: f64 },
    #[error("register of {width} qubits exceeds the {max}-qubit loading limit")]
    RegisterTooWide { width: usize, max: usize },
    #[error("target distribution has {got} entries, register addresses {expected}")]
    TargetLength { expected: usize, got: usize },
    #[error("target mass at index {index} is {value}; masses must be finite and nonnegative")]
    BadMass { index: usize, value: f64 },
    #[error("target distribution has no mass")]
    ZeroMass,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("energy grid must have positive step and finite cutoff (step {de}, cutoff {e_max})")]
    BadEnergyGrid { de: f64, e_max: f64 },
    #[error("reactant level list is empty")]
    EmptyLevels,
    #[error("level energy at index {0} is not finite")]
    NonFiniteLevel(usize),
    #[error("no (level, energy) bin is accessible below the cutoff {e_max}")]
    NoAccessibleLevels { e_max: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// One-dimensional Gaussian packet: center, carrier momentum, and position
/// standard deviation.  Momentum spread is `1/(2·width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavepacketSpec {
    pub center: f64,
    pub momentum: f64,
    pub width: f64,
}

impl WavepacketSpec {
    fn validate(&self, grid: &GridSpec, axis: usize) -> Result<(), PrepError> {
        let dx = grid.dx(axis);
        if !(self.width.is_finite() && self.width >= 2.0 * dx) {
            return Err(PrepError::WidthUnresolvable { width: self.width, dx });
        }
        let (lo, hi) = (self.center - 5.0 * self.width, self.center + 5.0 * self.width);
        let ext = grid.extent(axis);
        if !(lo.is_finite() && hi.is_finite()) || lo < ext.min || hi > ext.max {
            return Err(PrepError::PacketNearBoundary { lo, hi });
        }
        // Keep three momentum sigmas inside the band, or the periodic grid
        // wraps the fast tail to the opposite momentum sign.
        let nyquist = PI / dx;
        if !self.momentum.is_finite() || self.momentum.abs() + 1.5 / self.width > nyquist {
            return Err(PrepError::MomentumAliased { momentum: self.momentum, nyquist });
        }
        Ok(())
    }
}

/// Normalized product of per-axis Gaussians e^{−(x−x₀)²/4σ²}·e^{ip₀x}.
pub fn gaussian_packet(
    specs: &[WavepacketSpec],
    grid: &GridSpec,
) -> Result<GridWavefunction, PrepError> {
    if specs.len() != grid.axes() {
        return Err(PrepError::SpecCount { axes: grid.axes(), got: specs.len() });
    }
    for (axis, spec) in specs.iter().enumerate() {
        spec.validate(grid, axis)?;
    }
    Ok(init_wavefunction(grid, |x| {
        let mut amp = Complex64::new(1.0, 0.0);
        for (spec, &xa) in specs.iter().zip(x) {
            let d = xa - spec.center;
            let mag = (-d * d / (4.0 * spec.width * spec.width)).exp();
            amp *= Complex64::from_polar(mag, spec.momentum * xa);
        }
        amp
    })?)
}

/// Harmonic well V(x) = ½mω²(x−c)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicWell {
    pub omega: f64,
    pub mass: f64,
    pub center: f64,
}

impl HarmonicWell {
    /// Position standard deviation of the ground state, 1/√(2mω).
    pub fn ground_width(&self) -> f64 {
        1.0 / (2.0 * self.mass * self.omega).sqrt()
    }

    pub fn level_energy(&self, v: usize) -> f64 {
        self.omega * (v as f64 + 0.5)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn potential(&self, x: f64) -> f64 {
        let d = x - self.center;
        0.5 * self.mass * self.omega * self.omega * d * d
    }
}

/// Normalized v-th eigenstate of `well` sampled on a one-axis grid.
///
/// Uses the orthonormal Hermite-function recurrence
/// h_{k+1} = ξ√(2/(k+1))·h_k − √(k/(k+1))·h_{k−1}, which never forms the
/// factorially large raw polynomials.
pub fn harmonic_eigenstate(
    v: usize,
    well: &HarmonicWell,
    grid: &GridSpec,
) -> Result<GridWavefunction, PrepError> {
    if grid.axes() != 1 {
        return Err(PrepError::NotOneDimensional { axes: grid.axes() });
    }
    if !(well.omega.is_finite() && well.omega > 0.0 && well.mass.is_finite() && well.mass > 0.0) {
        return Err(PrepError::BadWell { omega: well.omega, mass: well.mass });
    }
    if v > MAX_QUANTUM_NUMBER {
        return Err(PrepError::QuantumNumberTooLarge { v, max: MAX_QUANTUM_NUMBER });
    }
    let dx = grid.dx(0);
    let sigma0 = well.ground_width();
    // The fastest momentum component is √(mω(2v+1)); require it well inside
    // the band and the envelope at least two cells wide.
    let p_max = (well.mass * well.omega * (2.0 * v as f64 + 1.0)).sqrt();
    if sigma0 < 2.0 * dx || p_max * dx > FRAC_PI_2 {
        return Err(PrepError::EigenstateUnresolvable { v, sigma: sigma0, dx });
    }
    let reach = 5.0 * sigma0 * (2.0 * v as f64 + 1.0).sqrt();
    let ext = grid.extent(0);
    let (lo, hi) = (well.center - reach, well.center + reach);
    if lo < ext.min || hi > ext.max {
        return Err(PrepError::EigenstateClipped { lo, hi });
    }
    let scale = (well.mass * well.omega).sqrt();
    let norm0 = PI.powf(-0.25);
    let amps: Vec<Complex64> = (0..grid.total_points())
        .map(|j| {
            let xi = scale * (grid.coordinate(0, j) - well.center);
            let mut below = 0.0;
            let mut h = norm0 * (-xi * xi / 2.0).exp();
            for k in 0..v {
                let kf = k as f64;
                let next = xi * (2.0 / (kf + 1.0)).sqrt() * h - (kf / (kf + 1.0)).sqrt() * below;
                below = h;
                h = next;
            }
            Complex64::new(h, 0.0)
        })
        .collect();
    Ok(GridWavefunction::from_amplitudes(grid.clone(), amps)?)
}

/// In-place Walsh–Hadamard transform: out[m] = Σ_c (−1)^{⟨m,c⟩} in[c].
fn walsh_hadamard(values: &mut [f64]) {
    let mut half = 1;
    while half < values.len() {
        for chunk in values.chunks_mut(2 * half) {
            for i in 0..half {
                let (a, b) = (chunk[i], chunk[i + half]);
                chunk[i] = a + b;
                chunk[i + half] = a - b;
            }
        }
        half *= 2;
    }
}

/// Exact Ry(θ) as [P(−π/2), H, P(θ), H, P(π/2)], which equals e^{iθ/2}·Ry(θ);
/// callers cancel the accumulated phase once via [`global_phase_gates`].
fn ry_gates(target: usize, angle: f64, gates: &mut Vec<Gate>) {
    gates.push(Gate::Phase(target, -FRAC_PI_2));
    gates.push(Gate::H(target));
    gates.push(Gate::Phase(target, angle));
    gates.push(Gate::H(target));
    gates.push(Gate::Phase(target, FRAC_PI_2));
}

/// X·P(φ)·X·P(φ) = e^{iφ}·I — a pure global phase from diagonal gates.
fn global_phase_gates(qubit: usize, phase: f64, gates: &mut Vec<Gate>) {
    gates.push(Gate::X(qubit));
    gates.push(Gate::Phase(qubit, phase));
    gates.push(Gate::X(qubit));
    gates.push(Gate::Phase(qubit, phase));
}

/// Circuit preparing Σ√(target_j/Σtarget)|j⟩ on `register` from |0…0⟩.
///
/// Classic bisection loading: level k rotates qubit k-from-the-top by the
/// conditional mass split of each length-k prefix, realized as a uniformly
/// controlled rotation in Gray-code order so every multiplexed branch costs
/// one rotation and one CNOT.  Rotations that solve to exactly zero are
/// skipped, so uniform targets collapse to one rotation per level.
pub fn amplitude_load_circuit(
    target: &[f64],
    register: &Register,
) -> Result<Vec<Gate>, PrepError> {
    let n = register.width;
    if n > MAX_LOAD_QUBITS {
        return Err(PrepError::RegisterTooWide { width: n, max: MAX_LOAD_QUBITS });
    }
    if target.len() != 1 << n {
        return Err(PrepError::TargetLength { expected: 1 << n, got: target.len() });
    }
    for (index, &value) in target.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(PrepError::BadMass { index, value });
        }
    }
    if target.iter().sum::<f64>() <= 0.0 {
        return Err(PrepError::ZeroMass);
    }

    // masses[k][c] = Σ target over indices whose top k bits equal c.
    let mut masses: Vec<Vec<f64>> = vec![target.to_vec()];
    for _ in 0..n {
        let coarser: Vec<f64> =
            masses.last().unwrap().chunks(2).map(|pair| pair[0] + pair[1]).collect();
        masses.push(coarser);
    }
    masses.reverse();

    let mut gates = Vec::new();
    for k in 0..n {
        let children = &masses[k + 1];
        // Per-prefix angle θ_c = 2·atan2(√right, √left); a zero-mass prefix
        // carries no amplitude, so its angle is arbitrary and set to zero.
        let mut phi: Vec<f64> = (0..1usize << k)
            .map(|c| {
                let (left, right) = (children[2 * c], children[2 * c + 1]);
                if left + right <= 0.0 { 0.0 } else { 2.0 * right.sqrt().atan2(left.sqrt()) }
            })
            .collect();
        // Gray-code multiplexing: rotation i sees the target conjugated by
        // CNOTs with accumulated mask g(i) = i^(i>>1), so the per-slot angles
        // are the Walsh transform of θ read out in Gray order.
        walsh_hadamard(&mut phi);
        let scale = 1.0 / (1usize << k) as f64;
        let target_q = register.qubit(n - 1 - k);
        let control_q = |bit: usize| register.qubit(n - k + bit);
        let mut mask = 0usize;
        let mut turned = 0.0;
        for i in 0..1usize << k {
            let gray = i ^ (i >> 1);
            let angle = phi[gray] * scale;
            if angle == 0.0 {
                continue;
            }
            let mut flip = mask ^ gray;
            while flip != 0 {
                gates.push(Gate::CNot(control_q(flip.trailing_zeros() as usize), target_q));
                flip &= flip - 1;
            }
            mask = gray;
            ry_gates(target_q, angle, &mut gates);
            turned += angle;
        }
        let mut flip = mask;
        while flip != 0 {
            gates.push(Gate::CNot(control_q(flip.trailing_zeros() as usize), target_q));
            flip &= flip - 1;
        }
        if turned != 0.0 {
            global_phase_gates(target_q, -turned / 2.0, &mut gates);
        }
    }
    Ok(gates)
}

/// Temperature is in energy units (k_B ≡ 1, ħ ≡ 1).  The level list gives
/// internal-state energies; the index is the level label.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSpec {
    pub temperature: f64,
    pub e_max: f64,
    pub de: f64,
    pub levels: Vec<f64>,
}

/// One (level, total energy) cell of the reactant ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalBin {
    pub level: usize,
    pub e_level: f64,
    pub energy: f64,
    /// Boltzmann line weight Γ² = e^{−E/T}·ΔE/(2π·Q(T)).
    pub weight: f64,
}

impl ThermalBin {
    /// Translational share of the bin energy, ≥ 0 by construction.
    pub fn kinetic_energy(&self) -> f64 {
        self.energy - self.e_level
    }

    /// Incoming Gaussian carrying the bin's translational energy; negate the
    /// momentum to launch it the other way.
    pub fn packet_spec(&self, mass: f64, center: f64, width: f64) -> WavepacketSpec {
        WavepacketSpec {
            center,
            momentum: (2.0 * mass * self.kinetic_energy()).sqrt(),
            width,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThermalEnsemble {
    pub bins: Vec<ThermalBin>,
    /// Partition function over the level list, evaluated relative to the
    /// lowest level so it cannot underflow; weights built from it equal the
    /// unshifted ones identically.
    pub partition: f64,
    /// ΣΓ² over all bins; the normalization C² is its reciprocal.
    pub total_weight: f64,
    /// Drawn bin indices, deterministic for a given seed.
    pub samples: Vec<usize>,
}

impl ThermalEnsemble {
    /// C² with C²·ΣΓ² = 1.
    pub fn normalization(&self) -> f64 {
        1.0 / self.total_weight
    }

    pub fn sampled_bins(&self) -> impl Iterator<Item = &ThermalBin> + '_ {
        self.samples.iter().map(move |&i| &self.bins[i])
    }
}

/// Draws `count` (level, energy) bins with probability ∝ Γ(E,T)².
///
/// The energy grid is E_j = j·ΔE clipped to [min level energy, e_max]; a bin
/// exists wherever E_j covers the level's internal energy, so every sample
/// has nonnegative translational energy.
pub fn thermal_sample(
    spec: &ThermalSpec,
    seed: u64,
    count: usize,
) -> Result<ThermalEnsemble, PrepError> {
    if !(spec.temperature.is_finite() && spec.temperature > 0.0) {
        return Err(PrepError::BadTemperature(spec.temperature));
    }
    if !(spec.de.is_finite() && spec.de > 0.0 && spec.e_max.is_finite()) {
        return Err(PrepError::BadEnergyGrid { de: spec.de, e_max: spec.e_max });
    }
    if spec.levels.is_empty() {
        return Err(PrepError::EmptyLevels);
    }
    for (i, &e) in spec.levels.iter().enumerate() {
        if !e.is_finite() {
            return Err(PrepError::NonFiniteLevel(i));
        }
    }
    let e_floor = spec.levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let partition: f64 =
        spec.levels.iter().map(|&e| (-(e - e_floor) / spec.temperature).exp()).sum();

    let j_max = (spec.e_max / spec.de).floor() as i64;
    let line = spec.de / (2.0 * PI * partition);
    let mut bins = Vec::new();
    for (level, &e_level) in spec.levels.iter().enumerate() {
        let j_lo = (e_level / spec.de).ceil() as i64;
        for j in j_lo..=j_max {
            let energy = j as f64 * spec.de;
            let weight = (-(energy - e_floor) / spec.temperature).exp() * line;
            bins.push(ThermalBin { level, e_level, energy, weight });
        }
    }
    if bins.is_empty() {
        return Err(PrepError::NoAccessibleLevels { e_max: spec.e_max });
    }
    let total_weight: f64 = bins.iter().map(|b| b.weight).sum();
    let chooser = WeightedIndex::new(bins.iter().map(|b| b.weight))
        .map_err(|_| PrepError::NoAccessibleLevels { e_max: spec.e_max })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count).map(|_| chooser.sample(&mut rng)).collect();
    Ok(ThermalEnsemble { bins, partition, total_weight, samples })
}
