//! Chemical observables: region-labeled reaction probabilities, thermal rate
//! constants assembled from the reactant ensemble, eigenphase extraction via
//! phase estimation, and vibrational state-to-state populations.
//!
//! Everything exposes both the shot-sampled estimate a hardware run would
//! produce and the exact grid sum the simulator can compute directly, so the
//! sampling path is always checkable against its own oracle.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{propagate, GridError, GridSpec, GridWavefunction};
use crate::kickback::{KickbackError, StepCircuit};
use crate::prep::{gaussian_packet, harmonic_eigenstate, thermal_sample, HarmonicWell, PrepError,
    ThermalBin, ThermalSpec};
use crate::qsim::{iqft_gates, CircuitError, CircuitState, Gate, Measurement, Register};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("grid point {point} belongs to regions {first} and {second}")]
    RegionOverlap { point: usize, first: usize, second: usize },
    #[error("default label {default} is not one of the {regions} region labels")]
    BadDefaultLabel { default: usize, regions: usize },
    #[error("region map needs at least one region")]
    NoRegions,
    #[error("wavefunction grid does not match the region map grid")]
    SpecMismatch,
    #[error("product label {label} is not one of the {regions} region labels")]
    BadProductLabel { label: usize, regions: usize },
    #[error("product label {0} listed twice")]
    DuplicateProductLabel(usize),
    #[error("register {name} has {got} qubits, needs {expected}")]
    RegisterWidth { name: String, expected: usize, got: usize },
    #[error("at least one shot is required")]
    NoShots,
    #[error("at least one Monte Carlo sample is required")]
    NoSamples,
    #[error("potential table has {got} entries, grid has {expected}")]
    PotentialLength { expected: usize, got: usize },
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("packet direction must be a finite nonzero sign, got {0}")]
    BadDirection(f64),
    #[error("no thermal bin fits on the grid; widen it or lower the cutoff")]
    NoRepresentableBins,
    #[error("gave up resampling after {attempts} rejected draws for one sample")]
    ResampleBudget { attempts: usize },
    #[error("phase estimation needs at least one readout qubit")]
    BadReadout,
    #[error("system statevector length {0} is not a power of two ≥ 2")]
    SystemLength(usize),
    #[error("unitary touches qubit {qubit}, but the system has {system} qubits")]
    UnitaryOutOfRange { qubit: usize, system: usize },
    #[error("coordinate map must be invertible and finite (scale {scale}, offset {offset})")]
    BadMap { scale: f64, offset: f64 },
    #[error("resampling and projection are one-dimensional; grid has {axes} axes")]
    NotOneDimensional { axes: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Kickback(#[from] KickbackError),
}

// --- regions -------------------------------------------------------------------

/// Axis-aligned box, half-open per axis: lo ≤ x < hi. Infinite bounds make
/// half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.lo.len()
            && point.len() == self.hi.len()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&lo, &hi))| lo <= x && x < hi)
    }
}

/// Disjoint labeling of every grid point: each label owns a union of boxes,
/// uncovered points fall back to `default`.
#[derive(Debug, Clone)]
pub struct RegionMap {
    spec: GridSpec,
    labels: Vec<usize>,
    count: usize,
}

impl RegionMap {
    pub fn build(
        spec: &GridSpec,
        regions: &[Vec<BoxRegion>],
        default: usize,
    ) -> Result<Self, MeasureError> {
        if regions.is_empty() {
            return Err(MeasureError::NoRegions);
        }
        if default >= regions.len() {
            return Err(MeasureError::BadDefaultLabel { default, regions: regions.len() });
        }
        let mut labels = Vec::with_capacity(spec.total_points());
        for g in 0..spec.total_points() {
            let point = spec.point(g);
            let mut owner = None;
            for (label, boxes) in regions.iter().enumerate() {
                if boxes.iter().any(|b| b.contains(&point)) {
                    if let Some(first) = owner {
                        return Err(MeasureError::RegionOverlap { point: g, first, second: label });
                    }
                    owner = Some(label);
                }
            }
            labels.push(owner.unwrap_or(default));
        }
        Ok(Self { spec: spec.clone(), labels, count: regions.len() })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn label(&self, g: usize) -> usize {
        self.labels[g]
    }

    /// Qubits needed to hold a label.
    pub fn label_bits(&self) -> usize {
        usize::BITS as usize - (self.count - 1).max(1).leading_zeros() as usize
    }

    /// The labeling as an integer table, ready for a reversible table-add.
    pub fn label_table(&self) -> Vec<u64> {
        self.labels.iter().map(|&l| l as u64).collect()
    }

    /// Exact probability per label, Σᵢ Pᵢ = ‖ψ‖².
    pub fn probabilities(&self, wf: &GridWavefunction) -> Result<Vec<f64>, MeasureError> {
        if *wf.spec() != self.spec {
            return Err(MeasureError::SpecMismatch);
        }
        let mut probs = vec![0.0; self.count];
        for (a, &label) in wf.amplitudes().iter().zip(&self.labels) {
            probs[label] += a.norm_sqr();
        }
        Ok(probs)
    }
}

/// Reversible labeling |x⟩|y⟩ → |x⟩|y + R(x) mod 2^w⟩; on a zeroed ancilla
/// the label register ends up holding R(x) outright.
pub fn attach_region_register(
    state: &mut CircuitState,
    position: &Register,
    label: &Register,
    map: &RegionMap,
) -> Result<(), MeasureError> {
    let grid_bits = map.spec.qubits_per_axis() * map.spec.axes();
    if position.width != grid_bits {
        return Err(MeasureError::RegisterWidth {
            name: position.name.clone(),
            expected: grid_bits,
            got: position.width,
        });
    }
    if label.width < map.label_bits() {
        return Err(MeasureError::RegisterWidth {
            name: label.name.clone(),
            expected: map.label_bits(),
            got: label.width,
        });
    }
    state.apply_table_add(position, label, &map.label_table(), None)?;
    Ok(())
}

// --- reaction probability --------------------------------------------------------

/// Product-region probability: the exact grid sum next to the shot-sampled
/// estimate a finite experiment would report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactionProbability {
    pub exact: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub shots: usize,
    pub seed: u64,
}

fn product_mask(labels: &[usize], count: usize) -> Result<Vec<bool>, MeasureError> {
    let mut mask = vec![false; count];
    for &label in labels {
        if label >= count {
            return Err(MeasureError::BadProductLabel { label, regions: count });
        }
        if mask[label] {
            return Err(MeasureError::DuplicateProductLabel(label));
        }
        mask[label] = true;
    }
    Ok(mask)
}

pub fn reaction_probability(
    wf: &GridWavefunction,
    map: &RegionMap,
    product_labels: &[usize],
    shots: usize,
    seed: u64,
) -> Result<ReactionProbability, MeasureError> {
    if shots == 0 {
        return Err(MeasureError::NoShots);
    }
    let mask = product_mask(product_labels, map.count())?;
    let probs = map.probabilities(wf)?;
    let exact: f64 = probs.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| p).sum();
    let chooser = WeightedIndex::new(&probs).map_err(|_| MeasureError::SpecMismatch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..shots).filter(|_| mask[chooser.sample(&mut rng)]).count();
    let estimate = hits as f64 / shots as f64;
    let stderr = (estimate * (1.0 - estimate) / shots as f64).sqrt();
    Ok(ReactionProbability { exact, estimate, stderr, shots, seed })
}

// --- thermal rate constant --------------------------------------------------------

/// Geometry of the incoming translational packet; each thermal bin sets its
/// momentum magnitude, `direction` its sign.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IncomingPacket {
    pub center: f64,
    pub width: f64,
    pub direction: f64,
}

/// Everything a thermal rate run needs. The region map's grid is the
/// propagation grid; `masses` and `potential` follow its layout.
#[derive(Debug, Clone)]
pub struct RateJob {
    pub thermal: ThermalSpec,
    pub map: RegionMap,
    pub product_labels: Vec<usize>,
    pub potential: Vec<f64>,
    pub masses: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub packet: IncomingPacket,
    pub samples: usize,
    pub seed: u64,
}

/// k(T) with its Monte Carlo error bar, plus the raw reaction probability the
/// ancilla measurement would report before the Γ² normalization is unfolded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Mean product probability over sampled bins (the raw C²k(T) signal).
    pub mean_probability: f64,
    /// ΣΓ² over bins whose packets the grid can represent.
    pub accessible_weight: f64,
    /// ΣΓ² over bins rejected by packet validation (logged, resampled).
    pub skipped_weight: f64,
    pub samples: usize,
    pub rejected: usize,
}

fn validate_rate_job(job: &RateJob) -> Result<Vec<bool>, MeasureError> {
    let grid = job.map.spec();
    if job.potential.len() != grid.total_points() {
        return Err(MeasureError::PotentialLength {
            expected: grid.total_points(),
            got: job.potential.len(),
        });
    }
    if !(job.dt.is_finite() && job.dt > 0.0) {
        return Err(MeasureError::BadTimeStep(job.dt));
    }
    if !(job.packet.direction.is_finite() && job.packet.direction != 0.0) {
        return Err(MeasureError::BadDirection(job.packet.direction));
    }
    crate::grid::kinetic_energies(grid, &job.masses)?;
    product_mask(&job.product_labels, job.map.count())
}

/// The incoming product state for one bin, or None when the grid cannot hold
/// it (too fast, too wide, or too close to a wall).
fn bin_packet(job: &RateJob, bin: &ThermalBin) -> Result<Option<GridWavefunction>, MeasureError> {
    let mut spec = bin.packet_spec(job.masses[0], job.packet.center, job.packet.width);
    spec.momentum *= job.packet.direction.signum();
    match gaussian_packet(&[spec], job.map.spec()) {
        Ok(wf) => Ok(Some(wf)),
        Err(
            PrepError::WidthUnresolvable { .. }
            | PrepError::PacketNearBoundary { .. }
            | PrepError::MomentumAliased { .. },
        ) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Product probability after propagating one bin's packet, memoized per bin.
fn bin_probability(
    job: &RateJob,
    bin: &ThermalBin,
    mask: &[bool],
) -> Result<Option<f64>, MeasureError> {
    let Some(mut wf) = bin_packet(job, bin)? else {
        return Ok(None);
    };
    propagate(&mut wf, &job.potential, &job.masses, job.dt, job.steps)?;
    let probs = job.map.probabilities(&wf)?;
    Ok(Some(probs.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).sum()))
}

fn bin_weights(
    job: &RateJob,
    bins: &[ThermalBin],
) -> Result<(f64, f64), MeasureError> {
    let mut accessible = 0.0;
    let mut skipped = 0.0;
    for bin in bins {
        if bin_packet(job, bin)?.is_some() {
            accessible += bin.weight;
        } else {
            skipped += bin.weight;
        }
    }
    if accessible == 0.0 {
        return Err(MeasureError::NoRepresentableBins);
    }
    Ok((accessible, skipped))
}

/// Deterministic quadrature over every representable (level, energy) bin:
/// k(T) = Σ Γ²(E,T)·P_product(ζ,E). The oracle the Monte Carlo estimator is
/// regression-tested against.
pub fn rate_quadrature(job: &RateJob) -> Result<RateEstimate, MeasureError> {
    let mask = validate_rate_job(job)?;
    let ensemble = thermal_sample(&job.thermal, job.seed, 0)?;
    let (accessible_weight, skipped_weight) = bin_weights(job, &ensemble.bins)?;
    // Bins propagate independently; summing in bin order afterwards keeps the
    // result bit-identical regardless of thread count.
    let terms: Vec<Option<f64>> = ensemble
        .bins
        .par_iter()
        .map(|bin| Ok(bin_probability(job, bin, &mask)?.map(|p| bin.weight * p)))
        .collect::<Result<_, MeasureError>>()?;
    let value: f64 = terms.into_iter().flatten().sum();
    Ok(RateEstimate {
        value,
        stderr: 0.0,
        mean_probability: value / accessible_weight,
        accessible_weight,
        skipped_weight,
        samples: 0,
        rejected: 0,
    })
}

/// Monte Carlo k(T): draws bins ∝ Γ², propagates each sampled packet, and
/// averages the product probability; the Γ² total is unfolded so the result
/// is k(T) itself, not the raw ancilla probability. Bins the grid cannot
/// represent are logged, resampled, and counted. Distinct bins are propagated
/// once and memoized — repeated draws reuse the stored probability.
pub fn rate_constant(job: &RateJob) -> Result<RateEstimate, MeasureError> {
    if job.samples == 0 {
        return Err(MeasureError::NoSamples);
    }
    let mask = validate_rate_job(job)?;
    let ensemble = thermal_sample(&job.thermal, job.seed, 0)?;
    let (accessible_weight, skipped_weight) = bin_weights(job, &ensemble.bins)?;
    let chooser = WeightedIndex::new(ensemble.bins.iter().map(|b| b.weight))
        .map_err(|_| MeasureError::NoRepresentableBins)?;
    let mut cache: HashMap<usize, Option<f64>> = HashMap::new();
    let mut rejected = 0usize;
    let mut values = Vec::with_capacity(job.samples);
    for i in 0..job.samples {
        // Per-sample seeds keep samples independent of each other's rejection
        // history (and trivially parallelizable).
        let mut rng =
            ChaCha8Rng::seed_from_u64(job.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut attempts = 0usize;
        let p = loop {
            let pick = chooser.sample(&mut rng);
            let entry = match cache.get(&pick) {
                Some(&e) => e,
                None => {
                    let e = bin_probability(job, &ensemble.bins[pick], &mask)?;
                    cache.insert(pick, e);
                    e
                }
            };
            match entry {
                Some(p) => break p,
                None => {
                    rejected += 1;
                    attempts += 1;
                    if attempts > 10_000 {
                        return Err(MeasureError::ResampleBudget { attempts });
                    }
                }
            }
        };
        values.push(p);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
    } else {
        0.0
    };
    Ok(RateEstimate {
        value: accessible_weight * mean,
        stderr: accessible_weight * (variance / values.len() as f64).sqrt(),
        mean_probability: mean,
        accessible_weight,
        skipped_weight,
        samples: job.samples,
        rejected,
    })
}

// --- phase estimation ---------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct PhaseEstimationJob {
    pub readout_bits: usize,
    pub shots: usize,
    pub seed: u64,
}

/// The unitary whose eigenphases are read out: a plain gate list, or one
/// split-propagation step with its oracle table-adds.
#[derive(Debug, Clone, Copy)]
pub enum PhaseUnitary<'a> {
    Gates(&'a [Gate]),
    Step(&'a StepCircuit),
}

impl PhaseUnitary<'_> {
    fn max_qubit(&self) -> usize {
        match self {
            PhaseUnitary::Gates(gates) => gates
                .iter()
                .flat_map(|g| g.targets())
                .max()
                .unwrap_or(0),
            PhaseUnitary::Step(step) => step
                .ops
                .iter()
                .map(|op| match op {
                    crate::kickback::StepOp::Gates(gates) => gates
                        .iter()
                        .flat_map(|g| g.targets())
                        .max()
                        .unwrap_or(0),
                    crate::kickback::StepOp::TableAdd { source, target, .. } => {
                        (source.start + source.width).max(target.start + target.width) - 1
                    }
                })
                .max()
                .unwrap_or(0),
        }
    }

    fn apply_controlled(
        &self,
        state: &mut CircuitState,
        control: usize,
    ) -> Result<(), MeasureError> {
        match self {
            PhaseUnitary::Gates(gates) => state.apply_circuit_controlled(gates, control)?,
            PhaseUnitary::Step(step) => step.apply_controlled(state, control)?,
        }
        Ok(())
    }
}

/// Readout histogram of a phase-estimation run; bin y estimates an eigenphase
/// of y/2^t turns.
#[derive(Debug, Clone)]
pub struct PhaseEstimate {
    pub readout_bits: usize,
    pub measurement: Measurement,
}

impl PhaseEstimate {
    /// Phase (in turns) that a histogram bin stands for.
    pub fn bin_phase(&self, bin: usize) -> f64 {
        bin as f64 / (1u64 << self.readout_bits) as f64
    }

    pub fn modal_phase(&self) -> f64 {
        self.bin_phase(self.measurement.modal_value())
    }
}

/// Smallest circular distance between two phases in turns, in [0, 0.5].
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Textbook phase estimation: t readout qubits Hadamarded, controlled-U^{2^k}
/// off qubit k, inverse QFT, repeated measurement of the readout register.
/// `system` is the initial statevector of the qubits U acts on; for an
/// eigenstate it concentrates ≥ 4/π² of the shots within one bin of the true
/// phase.
pub fn phase_estimate(
    job: &PhaseEstimationJob,
    unitary: PhaseUnitary,
    system: &[Complex64],
    cap: usize,
) -> Result<PhaseEstimate, MeasureError> {
    if job.readout_bits == 0 {
        return Err(MeasureError::BadReadout);
    }
    if job.shots == 0 {
        return Err(MeasureError::NoShots);
    }
    if !system.len().is_power_of_two() || system.len() < 2 {
        return Err(MeasureError::SystemLength(system.len()));
    }
    let system_bits = system.len().trailing_zeros() as usize;
    let reach = unitary.max_qubit();
    if reach >= system_bits {
        return Err(MeasureError::UnitaryOutOfRange { qubit: reach, system: system_bits });
    }
    let mut state = CircuitState::with_cap(system_bits + job.readout_bits, cap)?;
    state.set_amplitudes(system)?;
    let readout =
        Register { name: "readout".into(), start: system_bits, width: job.readout_bits };
    for q in readout.qubits() {
        state.apply_gate(&Gate::H(q))?;
    }
    for k in 0..job.readout_bits {
        let control = readout.qubit(k);
        for _ in 0..1usize << k {
            unitary.apply_controlled(&mut state, control)?;
        }
    }
    state.apply_circuit(&iqft_gates(&readout.qubits()))?;
    let measurement = state.measure_register(&readout, job.shots, job.seed)?;
    Ok(PhaseEstimate { readout_bits: job.readout_bits, measurement })
}

// --- state-to-state populations ---------------------------------------------------

/// Product-frame coordinate map x′ = scale·x + offset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AffineMap1D {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap1D {
    pub fn identity() -> Self {
        Self { scale: 1.0, offset: 0.0 }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }
}

/// Re-expresses a one-dimensional state on `target` through the coordinate
/// map, evaluating the band-limited (trigonometric) interpolant of the source
/// amplitudes at each mapped point, then renormalizing. Exact at identity.
pub fn resample_affine(
    wf: &GridWavefunction,
    map: &AffineMap1D,
    target: &GridSpec,
) -> Result<GridWavefunction, MeasureError> {
    if wf.spec().axes() != 1 {
        return Err(MeasureError::NotOneDimensional { axes: wf.spec().axes() });
    }
    if target.axes() != 1 {
        return Err(MeasureError::NotOneDimensional { axes: target.axes() });
    }
    if !(map.scale.is_finite() && map.scale != 0.0 && map.offset.is_finite()) {
        return Err(MeasureError::BadMap { scale: map.scale, offset: map.offset });
    }
    let mut momentum = wf.clone();
    momentum.to_momentum();
    let source = wf.spec();
    let indexing = source.momentum_indexing(0);
    let origin = source.extent(0).min;
    let scale = 1.0 / (source.total_points() as f64).sqrt();
    let amps: Vec<Complex64> = (0..target.total_points())
        .map(|j| {
            let x = map.invert(target.coordinate(0, j)) - origin;
            let sum: Complex64 = momentum
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(k, b)| b * Complex64::from_polar(1.0, indexing.momentum(k) * x))
                .sum();
            sum * scale
        })
        .collect();
    Ok(GridWavefunction::from_amplitudes(target.clone(), amps)?)
}

/// Vibrational populations |⟨ξ_v|Ψ′⟩|² in the product well, v = 0..=max_v,
/// plus the probability mass the basis does not account for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateToState {
    pub populations: Vec<f64>,
    /// ‖Ψ′ − Σ α_v ξ_v‖² — computed from the remainder vector, so
    /// completeness (Σ populations + residual = 1) is a real check on the
    /// basis, not an identity.
    pub residual: f64,
}

pub fn state_to_state(
    wf: &GridWavefunction,
    map: &AffineMap1D,
    well: &HarmonicWell,
    product_grid: &GridSpec,
    max_v: usize,
) -> Result<StateToState, MeasureError> {
    let product_state = resample_affine(wf, map, product_grid)?;
    let mut remainder: Vec<Complex64> = product_state.amplitudes().to_vec();
    let mut populations = Vec::with_capacity(max_v + 1);
    for v in 0..=max_v {
        let basis = harmonic_eigenstate(v, well, product_grid)?;
        let alpha = basis.overlap(&product_state);
        populations.push(alpha.norm_sqr());
        for (r, b) in remainder.iter_mut().zip(basis.amplitudes()) {
            *r -= alpha * b;
        }
    }
    let residual = remainder.iter().map(|c| c.norm_sqr()).sum();
    Ok(StateToState { populations, residual })
}

// --- fragment separation -----------------------------------------------------------

/// Probability moved between regions from one snapshot to the next.
pub fn region_flux(before: &[f64], after: &[f64]) -> f64 {
    before.iter().zip(after).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}

/// Fragments count as separated once the last `window` consecutive snapshot
/// pairs each moved less than `threshold` probability between regions.
pub fn fragments_separated(history: &[Vec<f64>], threshold: f64, window: usize) -> bool {
    if window == 0 || history.len() < window + 1 {
        return false;
    }
    history
        .windows(2)
        .rev()
        .take(window)
        .all(|pair| region_flux(&pair[0], &pair[1]) < threshold)
}

// --- result records ----------------------------------------------------------------

/// One reported observable, in the shape the run manifests embed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub observable: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Hash of the scenario configuration that produced the value.
    pub scenario: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kickback::{prepare, quantize_potential, KickbackPlan, KineticSource,
        PotentialSource, QuantizeMode};
    use crate::prep::WavepacketSpec;
    use crate::qsim::{load_grid_state, RegisterLayout};
    use std::f64::consts::PI;

    fn half_split_map(spec: &GridSpec, boundary: f64) -> RegionMap {
        let reactant = BoxRegion { lo: vec![f64::NEG_INFINITY], hi: vec![boundary] };
        let product = BoxRegion { lo: vec![boundary], hi: vec![f64::INFINITY] };
        RegionMap::build(spec, &[vec![reactant], vec![product]], 0).unwrap()
    }

    #[test]
    fn region_probabilities_split_symmetric_gaussian_evenly() {
        let spec = GridSpec::line(5, -4.0, 4.0).unwrap();
        let map = half_split_map(&spec, 0.0);
        let wf = gaussian_packet(
            &[WavepacketSpec { center: 0.0, momentum: 0.0, width: 0.7 }],
            &spec,
        )
        .unwrap();
        let probs = map.probabilities(&wf).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let cell_max = wf.amplitudes().iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
        for p in &probs {
            assert!((p - 0.5).abs() <= cell_max, "p={p}, bound {cell_max}");
        }

        // One region covering everything is deterministic.
        let all = RegionMap::build(
            &spec,
            &[vec![BoxRegion { lo: vec![f64::NEG_INFINITY], hi: vec![f64::INFINITY] }]],
            0,
        )
        .unwrap();
        let total = all.probabilities(&wf).unwrap();
        assert_eq!(total.len(), 1);
        assert!((total[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_regions_are_rejected_at_build() {
        let spec = GridSpec::line(4, -2.0, 2.0).unwrap();
        let a = BoxRegion { lo: vec![-2.0], hi: vec![0.5] };
        let b = BoxRegion { lo: vec![0.0], hi: vec![2.0] };
        let err = RegionMap::build(&spec, &[vec![a], vec![b]], 0).unwrap_err();
        assert!(matches!(err, MeasureError::RegionOverlap { first: 0, second: 1, .. }));

        let c = BoxRegion { lo: vec![-2.0], hi: vec![0.0] };
        assert!(matches!(
            RegionMap::build(&spec, &[vec![c]], 3),
            Err(MeasureError::BadDefaultLabel { default: 3, regions: 1 })
        ));
    }

    #[test]
    fn region_register_labels_superpositions_reversibly() {
        let spec = GridSpec::line(5, -4.0, 4.0).unwrap();
        let map = half_split_map(&spec, 0.25);
        let wf = gaussian_packet(
            &[WavepacketSpec { center: 0.0, momentum: 0.0, width: 0.7 }],
            &spec,
        )
        .unwrap();
        let mut layout = RegisterLayout::new();
        let pos = layout.add("x0", 5);
        let lab = layout.add("region", 1);
        let mut state = load_grid_state(&layout, &[pos], &wf, 26).unwrap();
        let (pos_reg, lab_reg) = (layout.get(pos).clone(), layout.get(lab).clone());
        attach_region_register(&mut state, &pos_reg, &lab_reg, &map).unwrap();
        let marginal = state.register_distribution(&lab_reg).unwrap();
        let exact = map.probabilities(&wf).unwrap();
        for (got, want) in marginal.iter().zip(&exact) {
            assert!((got - want).abs() < 1e-12);
        }
        // A second add cancels the first mod 2: the ancilla disentangles.
        attach_region_register(&mut state, &pos_reg, &lab_reg, &map).unwrap();
        let cleared = state.register_distribution(&lab_reg).unwrap();
        assert!((cleared[0] - 1.0).abs() < 1e-12);

        let narrow = Register { name: "tiny".into(), start: 5, width: 0 };
        assert!(matches!(
            attach_region_register(&mut state, &pos_reg, &narrow, &map),
            Err(MeasureError::RegisterWidth { .. })
        ));
    }

    #[test]
    fn sampled_region_histogram_matches_grid_sum() {
        let spec = GridSpec::line(5, -4.0, 4.0).unwrap();
        let map = half_split_map(&spec, 0.5);
        let wf = gaussian_packet(
            &[WavepacketSpec { center: 0.0, momentum: 0.0, width: 0.7 }],
            &spec,
        )
        .unwrap();
        let shots = 10_000;
        let result = reaction_probability(&wf, &map, &[1], shots, 11).unwrap();
        let sigma = (result.exact * (1.0 - result.exact) / shots as f64).sqrt();
        assert!(
            (result.estimate - result.exact).abs() <= 4.0 * sigma,
            "estimate {} vs exact {}",
            result.estimate,
            result.exact
        );
        assert!(result.stderr > 0.0 && result.stderr < 0.01);
    }

    #[test]
    fn contained_packet_reacts_with_certainty_and_stderr_scales() {
        let spec = GridSpec::line(6, -8.0, 8.0).unwrap();
        let map = half_split_map(&spec, 0.0);
        let wf = gaussian_packet(
            &[WavepacketSpec { center: 4.0, momentum: 0.0, width: 0.7 }],
            &spec,
        )
        .unwrap();
        let fine = reaction_probability(&wf, &map, &[1], 40_000, 3).unwrap();
        assert!(fine.exact > 1.0 - 1e-6, "exact {}", fine.exact);
        // Compare stderr scaling on a genuinely stochastic split.
        let split = gaussian_packet(
            &[WavepacketSpec { center: 0.0, momentum: 0.0, width: 0.7 }],
            &spec,
        )
        .unwrap();
        let coarse = reaction_probability(&split, &map, &[1], 10_000, 3).unwrap();
        let dense = reaction_probability(&split, &map, &[1], 40_000, 3).unwrap();
        let ratio = dense.stderr / coarse.stderr;
        assert!((ratio - 0.5).abs() < 0.1, "stderr ratio {ratio}");

        assert!(matches!(
            reaction_probability(&wf, &map, &[2], 10, 0),
            Err(MeasureError::BadProductLabel { label: 2, regions: 2 })
        ));
        assert!(matches!(
            reaction_probability(&wf, &map, &[1, 1], 10, 0),
            Err(MeasureError::DuplicateProductLabel(1))
        ));
    }

    /// Thermal flux against a Gaussian barrier. Geometry keeps the periodic
    /// grid honest: the transmitted path (start → product boundary) is short,
    /// while a reflected packet would have to travel past the far edge to
    /// wrap into the product region — farther than the fastest thermal
    /// component moves in `steps` steps.
    fn barrier_job(samples: usize, seed: u64) -> RateJob {
        let spec = GridSpec::line(7, -48.0, 48.0).unwrap();
        let map = half_split_map(&spec, 6.0);
        let potential: Vec<f64> = (0..spec.total_points())
            .map(|g| {
                let x = spec.coordinate(0, g);
                0.4 * (-x * x / 4.0).exp()
            })
            .collect();
        RateJob {
            thermal: ThermalSpec {
                temperature: 0.25,
                e_max: 1.0,
                de: 0.05,
                levels: vec![0.0],
            },
            map,
            product_labels: vec![1],
            potential,
            masses: vec![1.0],
            dt: 0.1,
            steps: 150,
            packet: IncomingPacket { center: -12.0, width: 2.0, direction: 1.0 },
            samples,
            seed,
        }
    }

    #[test]
    fn monte_carlo_rate_agrees_with_bin_quadrature() {
        let job = barrier_job(400, 17);
        let quad = rate_quadrature(&job).unwrap();
        let mc = rate_constant(&job).unwrap();
        assert_eq!(mc.rejected, 0);
        assert_eq!(mc.skipped_weight, 0.0);
        assert!(mc.stderr > 0.0);
        assert!(
            (mc.value - quad.value).abs() <= 3.0 * mc.stderr,
            "mc {} vs quadrature {} (stderr {})",
            mc.value,
            quad.value,
            mc.stderr
        );
        // The rate is a genuine thermal average: some flux reacts, most does
        // not at k_B·T well under the barrier.
        assert!(quad.value > 0.0 && quad.mean_probability < 0.9);
    }

    #[test]
    fn raising_the_barrier_closes_the_channel() {
        let open = rate_quadrature(&barrier_job(1, 5)).unwrap();
        // Same barrier shape, 20× the height: every thermal bin sits far
        // below it, so only tunneling remains. Height is kept modest enough
        // that per-step phases stay below π (no sampling artifacts).
        let mut job = barrier_job(1, 5);
        for (g, v) in job.potential.iter_mut().enumerate() {
            let x = job.map.spec().coordinate(0, g);
            *v = 8.0 * (-x * x / 4.0).exp();
        }
        let blocked = rate_quadrature(&job).unwrap();
        assert!(blocked.value < 1e-8, "leaked {}", blocked.value);
        assert!(
            blocked.value < 1e-4 * open.value,
            "blocked {} vs open {}",
            blocked.value,
            open.value
        );
    }

    #[test]
    fn representable_phase_reads_out_exactly() {
        let job = PhaseEstimationJob { readout_bits: 3, shots: 200, seed: 9 };
        let gates = [Gate::Phase(0, 2.0 * PI * 3.0 / 8.0)];
        let system = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let est = phase_estimate(&job, PhaseUnitary::Gates(&gates), &system, 26).unwrap();
        assert!((est.measurement.probabilities[3] - 1.0).abs() < 1e-10);
        assert_eq!(est.measurement.counts[3], 200);
        assert!((est.modal_phase() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn superposed_eigenstates_split_the_histogram_evenly() {
        let job = PhaseEstimationJob { readout_bits: 3, shots: 10_000, seed: 21 };
        let gates = [Gate::Phase(0, 2.0 * PI * 3.0 / 8.0)];
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let system = [Complex64::new(amp, 0.0), Complex64::new(amp, 0.0)];
        let est = phase_estimate(&job, PhaseUnitary::Gates(&gates), &system, 26).unwrap();
        let sigma = (0.25f64 / 10_000.0).sqrt();
        for bin in [0usize, 3] {
            assert!((est.measurement.probabilities[bin] - 0.5).abs() < 1e-10);
            let frac = est.measurement.counts[bin] as f64 / 10_000.0;
            assert!((frac - 0.5).abs() <= 4.0 * sigma, "bin {bin}: {frac}");
        }
    }

    #[test]
    fn split_step_eigenphase_gap_matches_level_spacing() {
        let grid = GridSpec::line(6, -10.0, 10.0).unwrap();
        let well = HarmonicWell { omega: 0.5, mass: 1.0, center: 0.0 };
        let dt = 1.6;
        let m = 8;
        let v_values: Vec<f64> =
            (0..grid.total_points()).map(|g| well.potential(grid.coordinate(0, g))).collect();
        let t_values = crate::grid::kinetic_energies(&grid, &[well.mass]).unwrap();
        let vq = quantize_potential(&v_values, m, QuantizeMode::FixedStepPeriodic(dt)).unwrap();
        let tq = quantize_potential(&t_values, m, QuantizeMode::FixedStepPeriodic(dt)).unwrap();
        let plan = KickbackPlan {
            spec: grid.clone(),
            ancilla_bits: m,
            potential: PotentialSource::Table(vq.table),
            kinetic: Some(KineticSource::Table(tq.table)),
            cap: 26,
        };
        let prepared = prepare(&plan).unwrap();
        let job = PhaseEstimationJob { readout_bits: 4, shots: 500, seed: 2 };
        let mut phases = Vec::new();
        for v in 0..2 {
            let eigen = harmonic_eigenstate(v, &well, &grid).unwrap();
            let system = prepared.initial_state(&eigen, 26).unwrap().amplitudes().to_vec();
            let est =
                phase_estimate(&job, PhaseUnitary::Step(&prepared.step), &system, 26).unwrap();
            phases.push(est.modal_phase());
        }
        // One split step multiplies |v⟩ by ≈ e^{−iE_v·dt} (plus a level-
        // independent offset), so the circular gap is ω·dt/2π turns.
        let gap = (phases[0] - phases[1]).rem_euclid(1.0);
        let expect = well.omega * dt / (2.0 * PI);
        let bin = (16.0f64).recip();
        assert!(
            phase_distance(gap, expect) <= bin,
            "gap {gap} turns, expected {expect} ± {bin}"
        );
    }

    #[test]
    fn phase_estimation_validates_inputs() {
        let gates = [Gate::Phase(0, 1.0)];
        let one = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let job = PhaseEstimationJob { readout_bits: 0, shots: 10, seed: 0 };
        assert!(matches!(
            phase_estimate(&job, PhaseUnitary::Gates(&gates), &one, 26),
            Err(MeasureError::BadReadout)
        ));
        let job = PhaseEstimationJob { readout_bits: 20, shots: 10, seed: 0 };
        assert!(matches!(
            phase_estimate(&job, PhaseUnitary::Gates(&gates), &one, 12),
            Err(MeasureError::Circuit(CircuitError::CapExceeded { .. }))
        ));
        let job = PhaseEstimationJob { readout_bits: 2, shots: 10, seed: 0 };
        let wide = [Gate::Phase(5, 1.0)];
        assert!(matches!(
            phase_estimate(&job, PhaseUnitary::Gates(&wide), &one, 26),
            Err(MeasureError::UnitaryOutOfRange { qubit: 5, system: 1 })
        ));
        assert!(matches!(
            phase_estimate(&job, PhaseUnitary::Gates(&gates), &one[..1], 26),
            Err(MeasureError::SystemLength(1))
        ));
    }

    #[test]
    fn pure_eigenstate_projects_onto_itself() {
        let grid = GridSpec::line(7, -12.0, 12.0).unwrap();
        let well = HarmonicWell { omega: 1.0, mass: 1.0, center: 0.0 };
        let pure = harmonic_eigenstate(2, &well, &grid).unwrap();
        let result =
            state_to_state(&pure, &AffineMap1D::identity(), &well, &grid, 5).unwrap();
        for (v, p) in result.populations.iter().enumerate() {
            let expect = if v == 2 { 1.0 } else { 0.0 };
            assert!((p - expect).abs() < 1e-8, "v={v} p={p}");
        }
        assert!(result.residual < 1e-8);
    }

    #[test]
    fn translated_mixture_resolves_through_the_coordinate_map() {
        let source_grid = GridSpec::line(7, -10.0, 14.0).unwrap();
        let product_grid = GridSpec::line(7, -12.0, 12.0).unwrap();
        let shift = 1.45;
        let shifted_well = HarmonicWell { omega: 1.0, mass: 1.0, center: shift };
        let v0 = harmonic_eigenstate(0, &shifted_well, &source_grid).unwrap();
        let v1 = harmonic_eigenstate(1, &shifted_well, &source_grid).unwrap();
        let amps: Vec<Complex64> = v0
            .amplitudes()
            .iter()
            .zip(v1.amplitudes())
            .map(|(a, b)| 0.6f64.sqrt() * a + 0.4f64.sqrt() * b)
            .collect();
        let mixed = GridWavefunction::from_amplitudes(source_grid.clone(), amps).unwrap();

        let map = AffineMap1D { scale: 1.0, offset: -shift };
        let well = HarmonicWell { omega: 1.0, mass: 1.0, center: 0.0 };
        let result = state_to_state(&mixed, &map, &well, &product_grid, 4).unwrap();
        assert!((result.populations[0] - 0.6).abs() < 1e-6, "P0 {}", result.populations[0]);
        assert!((result.populations[1] - 0.4).abs() < 1e-6, "P1 {}", result.populations[1]);
        for p in &result.populations[2..] {
            assert!(*p < 1e-6);
        }
        assert!(result.residual < 1e-6);
    }

    #[test]
    fn completeness_holds_with_an_independent_residual() {
        let grid = GridSpec::line(7, -14.0, 14.0).unwrap();
        let well = HarmonicWell { omega: 1.0, mass: 1.0, center: 0.0 };
        // Displaced, boosted packet: populated well beyond v=6.
        let packet = gaussian_packet(
            &[WavepacketSpec { center: 1.8, momentum: 1.1, width: 0.9 }],
            &grid,
        )
        .unwrap();
        let result =
            state_to_state(&packet, &AffineMap1D::identity(), &well, &grid, 6).unwrap();
        let total: f64 = result.populations.iter().sum::<f64>() + result.residual;
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
        assert!(result.residual > 1e-3, "expected real residual, got {}", result.residual);
    }

    #[test]
    fn separation_criterion_requires_a_quiet_window() {
        let moving = vec![
            vec![0.9, 0.1],
            vec![0.7, 0.3],
            vec![0.5, 0.5],
            vec![0.5 - 1e-9, 0.5 + 1e-9],
            vec![0.5 - 2e-9, 0.5 + 2e-9],
        ];
        assert!(fragments_separated(&moving, 1e-6, 2));
        assert!(!fragments_separated(&moving, 1e-6, 3));
        assert!(!fragments_separated(&moving[..2].to_vec(), 1e-6, 2));
        assert!(!fragments_separated(&moving, 1e-6, 0));
    }

    #[test]
    fn observable_records_serialize_cleanly() {
        let record = ObservableRecord {
            observable: "reaction_probability".into(),
            value: 0.25,
            stderr: Some(0.004),
            shots: Some(10_000),
            seed: Some(7),
            scenario: "ab12".into(),
        };
        let json = serde_json::to_string(&record).unwrap();
        let back: ObservableRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.observable, record.observable);
        assert_eq!(back.shots, Some(10_000));
        let bare = ObservableRecord {
            observable: "rate".into(),
            value: 1.0,
            stderr: None,
            shots: None,
            seed: None,
            scenario: "cd34".into(),
        };
        assert!(!serde_json::to_string(&bare).unwrap().contains("stderr"));
    }
}
