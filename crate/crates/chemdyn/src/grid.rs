//! Position-space grids and the classical split-operator propagator.
//!
//! A `d`-dimensional grid uses `n` qubits per axis (N = 2^n points) with
//! periodic boundaries. Amplitudes are stored axis-major: the flattened index
//! is `g = Σ_a x_a · N^a`, so axis 0 occupies the least significant `n` bits
//! and, within an axis, the least significant bit distinguishes adjacent grid
//! points. This matches the circuit simulator's register layout bit for bit.
//!
//! One first-order split step applies `exp(-i V δt)` pointwise in position
//! space, transforms to momentum space, applies `exp(-i p²/2M δt)` per axis,
//! and transforms back. The position→momentum transform is the forward DFT
//! normalized by 1/√N (negative exponent), which is exactly what an inverse
//! QFT does to a position register.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least one axis and one qubit per axis")]
    EmptyGrid,
    #[error("axis {axis} extent is empty or not finite (min {min}, max {max})")]
    BadExtent { axis: usize, min: f64, max: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("wavefunction has zero norm after sampling")]
    ZeroNorm,
    #[error("non-finite amplitude at index {0}")]
    NonFinite(usize),
    #[error("masses must be positive and finite")]
    BadMass,
    #[error("binary snapshot malformed: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Extent of one axis: points sit at `min + j·Δx`, `j = 0..N-1`, with
/// periodic wraparound at `max = min + N·Δx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisExtent {
    pub min: f64,
    pub max: f64,
}

/// Grid geometry shared by wavefunctions and circuits: `n` qubits per axis,
/// one extent per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n: usize,
    axes: Vec<AxisExtent>,
}

impl GridSpec {
    pub fn new(n: usize, axes: Vec<AxisExtent>) -> Result<Self, GridError> {
        if n == 0 || axes.is_empty() {
            return Err(GridError::EmptyGrid);
        }
        for (axis, e) in axes.iter().enumerate() {
            if !(e.min.is_finite() && e.max.is_finite() && e.max > e.min) {
                return Err(GridError::BadExtent {
                    axis,
                    min: e.min,
                    max: e.max,
                });
            }
        }
        Ok(Self { n, axes })
    }

    /// 1D convenience constructor.
    pub fn line(n: usize, min: f64, max: f64) -> Result<Self, GridError> {
        Self::new(n, vec![AxisExtent { min, max }])
    }

    pub fn qubits_per_axis(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> usize {
        self.axes.len()
    }

    pub fn extent(&self, axis: usize) -> AxisExtent {
        self.axes[axis]
    }

    /// Points per axis, N = 2^n.
    pub fn points_per_axis(&self) -> usize {
        1 << self.n
    }

    pub fn total_points(&self) -> usize {
        1 << (self.n * self.axes.len())
    }

    pub fn dx(&self, axis: usize) -> f64 {
        let e = self.axes[axis];
        (e.max - e.min) / self.points_per_axis() as f64
    }

    /// Coordinate of grid index `j` along `axis`.
    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        self.axes[axis].min + self.dx(axis) * j as f64
    }

    /// Splits a flattened index into per-axis indices (axis-major order).
    pub fn unflatten(&self, g: usize) -> Vec<usize> {
        let mask = self.points_per_axis() - 1;
        (0..self.axes()).map(|a| (g >> (a * self.n)) & mask).collect()
    }

    pub fn flatten(&self, per_axis: &[usize]) -> usize {
        per_axis
            .iter()
            .enumerate()
            .fold(0, |g, (a, &j)| g | (j << (a * self.n)))
    }

    /// Coordinates of flattened index `g`, one entry per axis.
    pub fn point(&self, g: usize) -> Vec<f64> {
        self.unflatten(g)
            .iter()
            .enumerate()
            .map(|(a, &j)| self.coordinate(a, j))
            .collect()
    }

    pub fn momentum_indexing(&self, axis: usize) -> MomentumIndexing {
        MomentumIndexing {
            n: self.n,
            dx: self.dx(axis),
        }
    }
}

/// Maps an FFT bin to its physical momentum: `p = 2πk/(NΔx)` for `k < N/2`
/// and `p = 2π(k−N)/(NΔx)` for `k ≥ N/2`, so the Nyquist bin carries the
/// negative extreme.
#[derive(Debug, Clone, Copy)]
pub struct MomentumIndexing {
    n: usize,
    dx: f64,
}

impl MomentumIndexing {
    pub fn points(&self) -> usize {
        1 << self.n
    }

    /// Signed integer index: `k` for the lower half, `k − N` otherwise.
    pub fn signed_index(&self, k: usize) -> i64 {
        let np = self.points() as i64;
        let k = k as i64;
        if k < np / 2 {
            k
        } else {
            k - np
        }
    }

    pub fn momentum(&self, k: usize) -> f64 {
        2.0 * PI * self.signed_index(k) as f64 / (self.points() as f64 * self.dx)
    }
}

/// Wavefunction sampled on a grid, unit L² norm under the counting measure
/// (Σ|a|² = 1; physical densities divide by Δx when needed).
#[derive(Debug, Clone)]
pub struct GridWavefunction {
    spec: GridSpec,
    amps: Vec<Complex64>,
}

/// Samples `f` on every grid point and normalizes.
pub fn init_wavefunction<F>(spec: &GridSpec, f: F) -> Result<GridWavefunction, GridError>
where
    F: Fn(&[f64]) -> Complex64,
{
    let amps: Vec<Complex64> = (0..spec.total_points()).map(|g| f(&spec.point(g))).collect();
    GridWavefunction::from_amplitudes(spec.clone(), amps)
}

impl GridWavefunction {
    /// Wraps raw amplitudes, checking finiteness and normalizing.
    pub fn from_amplitudes(spec: GridSpec, mut amps: Vec<Complex64>) -> Result<Self, GridError> {
        if amps.len() != spec.total_points() {
            return Err(GridError::LengthMismatch {
                expected: spec.total_points(),
                got: amps.len(),
            });
        }
        let mut norm2 = 0.0;
        for (i, a) in amps.iter().enumerate() {
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(GridError::NonFinite(i));
            }
            norm2 += a.norm_sqr();
        }
        if norm2 <= 0.0 || !norm2.is_finite() {
            return Err(GridError::ZeroNorm);
        }
        let scale = 1.0 / norm2.sqrt();
        for a in &mut amps {
            *a *= scale;
        }
        Ok(Self { spec, amps })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩ with the conjugate on `self`.
    pub fn overlap(&self, other: &GridWavefunction) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// ⟨x̂⟩ along `axis`.
    pub fn position_expectation(&self, axis: usize) -> f64 {
        let n = self.spec.n;
        let mask = self.spec.points_per_axis() - 1;
        self.amps
            .iter()
            .enumerate()
            .map(|(g, a)| a.norm_sqr() * self.spec.coordinate(axis, (g >> (axis * n)) & mask))
            .sum()
    }

    /// ⟨x̂²⟩ − ⟨x̂⟩² along `axis`.
    pub fn position_variance(&self, axis: usize) -> f64 {
        let n = self.spec.n;
        let mask = self.spec.points_per_axis() - 1;
        let mean = self.position_expectation(axis);
        self.amps
            .iter()
            .enumerate()
            .map(|(g, a)| {
                let x = self.spec.coordinate(axis, (g >> (axis * n)) & mask);
                a.norm_sqr() * (x - mean) * (x - mean)
            })
            .sum()
    }

    /// Total probability in the half-open box `[lo_a, hi_a)` per axis.
    /// ⟨p⟩ along one axis, evaluated in the momentum representation.
    pub fn momentum_expectation(&self, axis: usize) -> f64 {
        self.momentum_moment(axis, |p, w| p * w)
    }

    /// Var(p) along one axis.
    pub fn momentum_variance(&self, axis: usize) -> f64 {
        let mean = self.momentum_expectation(axis);
        self.momentum_moment(axis, |p, w| (p - mean) * (p - mean) * w)
    }

    fn momentum_moment(&self, axis: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut mom = self.clone();
        mom.to_momentum();
        let idx = self.spec.momentum_indexing(axis);
        let np = self.spec.points_per_axis();
        let mask = np - 1;
        mom.amps
            .iter()
            .enumerate()
            .map(|(g, a)| {
                let k = (g >> (axis * self.spec.n)) & mask;
                f(idx.momentum(k), a.norm_sqr())
            })
            .sum()
    }

    pub fn probability_in_box(&self, lo: &[f64], hi: &[f64]) -> Result<f64, GridError> {
        if lo.len() != self.spec.axes() || hi.len() != self.spec.axes() {
            return Err(GridError::LengthMismatch {
                expected: self.spec.axes(),
                got: lo.len().min(hi.len()),
            });
        }
        let mut p = 0.0;
        'outer: for (g, a) in self.amps.iter().enumerate() {
            let pt = self.spec.point(g);
            for (axis, &x) in pt.iter().enumerate() {
                if x < lo[axis] || x >= hi[axis] {
                    continue 'outer;
                }
            }
            p += a.norm_sqr();
        }
        Ok(p)
    }

    /// Probability within `cells` grid points of any axis boundary. Used to
    /// warn when a packet is about to wrap around.
    pub fn boundary_probability(&self, cells: usize) -> f64 {
        let np = self.spec.points_per_axis();
        let n = self.spec.n;
        let mask = np - 1;
        self.amps
            .iter()
            .enumerate()
            .filter(|(g, _)| {
                (0..self.spec.axes()).any(|a| {
                    let j = (g >> (a * n)) & mask;
                    j < cells || j >= np - cells
                })
            })
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Per-axis forward DFT / √N: position → momentum representation.
    /// Bin `k` of each axis then carries momentum `MomentumIndexing::momentum(k)`.
    pub fn to_momentum(&mut self) {
        self.transform(FftDirection::Forward);
    }

    /// Per-axis inverse DFT / √N: momentum → position representation.
    pub fn to_position(&mut self) {
        self.transform(FftDirection::Inverse);
    }

    fn transform(&mut self, dir: FftDirection) {
        let np = self.spec.points_per_axis();
        let d = self.spec.axes();
        let mut planner = FftPlanner::new();
        let fft = match dir {
            FftDirection::Forward => planner.plan_fft_forward(np),
            FftDirection::Inverse => planner.plan_fft_inverse(np),
        };
        let scale = 1.0 / (np as f64).sqrt();
        let mut line = vec![Complex64::new(0.0, 0.0); np];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = 1usize << (axis * self.spec.n);
            let block = stride * np;
            let total = self.amps.len();
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for k in 0..np {
                        line[k] = self.amps[base + k * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..np {
                        self.amps[base + k * stride] = line[k] * scale;
                    }
                }
            }
        }
    }

    /// One first-order split step with precomputed phase factors:
    /// `pos_phase` multiplies in position space, then `mom_phase` in momentum
    /// space. Both must cover every flattened index.
    pub fn split_step_phases(
        &mut self,
        pos_phase: &[Complex64],
        mom_phase: &[Complex64],
    ) -> Result<(), GridError> {
        let total = self.spec.total_points();
        if pos_phase.len() != total || mom_phase.len() != total {
            return Err(GridError::LengthMismatch {
                expected: total,
                got: pos_phase.len().min(mom_phase.len()),
            });
        }
        for (a, ph) in self.amps.iter_mut().zip(pos_phase) {
            *a *= ph;
        }
        self.to_momentum();
        for (a, ph) in self.amps.iter_mut().zip(mom_phase) {
            *a *= ph;
        }
        self.to_position();
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum FftDirection {
    Forward,
    Inverse,
}

/// Samples a potential on every grid point.
pub fn sample_potential<F>(spec: &GridSpec, v: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    (0..spec.total_points()).map(|g| v(&spec.point(g))).collect()
}

/// Position-space phase factors `exp(-i v[g] δt)`.
pub fn potential_phases(v: &[f64], dt: f64) -> Vec<Complex64> {
    v.iter().map(|&v| Complex64::from_polar(1.0, -v * dt)).collect()
}

/// Kinetic energy `Σ_a p_a²/(2 M_a)` at every flattened momentum index.
pub fn kinetic_energies(spec: &GridSpec, masses: &[f64]) -> Result<Vec<f64>, GridError> {
    if masses.len() != spec.axes() {
        return Err(GridError::LengthMismatch {
            expected: spec.axes(),
            got: masses.len(),
        });
    }
    if masses.iter().any(|&m| !(m.is_finite() && m > 0.0)) {
        return Err(GridError::BadMass);
    }
    let np = spec.points_per_axis();
    let mask = np - 1;
    let per_axis: Vec<Vec<f64>> = (0..spec.axes())
        .map(|a| {
            let idx = spec.momentum_indexing(a);
            (0..np).map(|k| idx.momentum(k).powi(2) / (2.0 * masses[a])).collect()
        })
        .collect();
    Ok((0..spec.total_points())
        .map(|g| {
            (0..spec.axes())
                .map(|a| per_axis[a][(g >> (a * spec.qubits_per_axis())) & mask])
                .sum()
        })
        .collect())
}

/// Momentum-space phase factors `exp(-i Σ_a p_a²/(2 M_a) δt)`.
pub fn kinetic_phases(spec: &GridSpec, masses: &[f64], dt: f64) -> Result<Vec<Complex64>, GridError> {
    Ok(kinetic_energies(spec, masses)?
        .into_iter()
        .map(|t| Complex64::from_polar(1.0, -t * dt))
        .collect())
}

/// One first-order split-operator step `exp(-iT δt)·exp(-iV δt)` with the
/// potential sampled on the grid. Error per step is O(δt²); global error over
/// a fixed interval is O(δt).
pub fn classical_split_step(
    wf: &mut GridWavefunction,
    v: &[f64],
    masses: &[f64],
    dt: f64,
) -> Result<(), GridError> {
    let total = wf.spec().total_points();
    if v.len() != total {
        return Err(GridError::LengthMismatch {
            expected: total,
            got: v.len(),
        });
    }
    let pos = potential_phases(v, dt);
    let mom = kinetic_phases(wf.spec(), masses, dt)?;
    wf.split_step_phases(&pos, &mom)
}

/// Propagates `steps` split steps with fixed phase tables (cheaper than
/// recomputing phases every step).
pub fn propagate(
    wf: &mut GridWavefunction,
    v: &[f64],
    masses: &[f64],
    dt: f64,
    steps: usize,
) -> Result<(), GridError> {
    let pos = potential_phases(v, dt);
    let mom = kinetic_phases(wf.spec(), masses, dt)?;
    if pos.len() != wf.spec().total_points() {
        return Err(GridError::LengthMismatch {
            expected: wf.spec().total_points(),
            got: pos.len(),
        });
    }
    for _ in 0..steps {
        wf.split_step_phases(&pos, &mom)?;
    }
    Ok(())
}

/// Phase factors `exp(-2πi table[g] / 2^m)` from an integer table — the exact
/// phases an m-qubit kickback ancilla imprints. Shared by the table-driven
/// classical reference and by tests against the circuit path.
pub fn table_phases(table: &[u64], m: usize) -> Vec<Complex64> {
    let modulus = (1u64 << m) as f64;
    table
        .iter()
        .map(|&t| Complex64::from_polar(1.0, -2.0 * PI * t as f64 / modulus))
        .collect()
}

// --- snapshot formats -------------------------------------------------------

/// CSV snapshot: one row per amplitude (`index`, coordinates, `re`, `im`).
pub fn write_csv<W: Write>(wf: &GridWavefunction, mut w: W) -> Result<(), GridError> {
    let d = wf.spec().axes();
    let header: Vec<String> = std::iter::once("index".to_string())
        .chain((0..d).map(|a| format!("x{a}")))
        .chain(["re".to_string(), "im".to_string()])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (g, a) in wf.amplitudes().iter().enumerate() {
        let coords: Vec<String> = wf.spec().point(g).iter().map(|x| format!("{x:.17e}")).collect();
        writeln!(w, "{g},{},{:.17e},{:.17e}", coords.join(","), a.re, a.im)?;
    }
    Ok(())
}

/// Raw binary snapshot: 8-byte header (`n` and `d` as little-endian u32),
/// then 2^(n·d) little-endian (re, im) f64 pairs.
pub fn write_binary<W: Write>(wf: &GridWavefunction, mut w: W) -> Result<(), GridError> {
    w.write_all(&(wf.spec().qubits_per_axis() as u32).to_le_bytes())?;
    w.write_all(&(wf.spec().axes() as u32).to_le_bytes())?;
    for a in wf.amplitudes() {
        w.write_all(&a.re.to_le_bytes())?;
        w.write_all(&a.im.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a binary snapshot back; extents are not stored in the format, so the
/// caller supplies the `GridSpec` and the header is checked against it.
pub fn read_binary<R: Read>(spec: &GridSpec, mut r: R) -> Result<GridWavefunction, GridError> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    let n = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    if n != spec.qubits_per_axis() || d != spec.axes() {
        return Err(GridError::Format(format!(
            "header says n={n}, d={d}; spec has n={}, d={}",
            spec.qubits_per_axis(),
            spec.axes()
        )));
    }
    let total = spec.total_points();
    let mut amps = Vec::with_capacity(total);
    let mut buf = [0u8; 16];
    for _ in 0..total {
        r.read_exact(&mut buf)?;
        amps.push(Complex64::new(
            f64::from_le_bytes(buf[0..8].try_into().unwrap()),
            f64::from_le_bytes(buf[8..16].try_into().unwrap()),
        ));
    }
    GridWavefunction::from_amplitudes(spec.clone(), amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gaussian(x: f64, x0: f64, sigma: f64, p0: f64) -> Complex64 {
        Complex64::from_polar((-((x - x0) * (x - x0)) / (4.0 * sigma * sigma)).exp(), p0 * x)
    }

    #[test]
    fn axis_major_ordering() {
        let spec = GridSpec::new(
            2,
            vec![AxisExtent { min: 0.0, max: 4.0 }, AxisExtent { min: 10.0, max: 14.0 }],
        )
        .unwrap();
        // g = x0 + 4·x1: axis 0 in the low bits.
        assert_eq!(spec.flatten(&[3, 2]), 3 + 4 * 2);
        assert_eq!(spec.unflatten(11), vec![3, 2]);
        assert_eq!(spec.point(11), vec![3.0, 12.0]);
        assert_eq!(spec.dx(0), 1.0);
    }

    #[test]
    fn momentum_indexing_signs_and_nyquist() {
        let spec = GridSpec::line(3, 0.0, 8.0).unwrap();
        let idx = spec.momentum_indexing(0);
        // N=8, Δx=1: k=1 → 2π/8, k=4 (Nyquist) → −π, k=7 → −2π/8.
        assert_abs_diff_eq!(idx.momentum(1), 2.0 * PI / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(idx.momentum(4), -PI, epsilon = 1e-15);
        assert_abs_diff_eq!(idx.momentum(7), -2.0 * PI / 8.0, epsilon = 1e-15);
        assert_eq!(idx.signed_index(4), -4);
    }

    #[test]
    fn init_normalizes_and_rejects_zero() {
        let spec = GridSpec::line(5, -8.0, 8.0).unwrap();
        let wf = init_wavefunction(&spec, |x| gaussian(x[0], 0.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(wf.norm_sqr(), 1.0, epsilon = 1e-14);
        assert!(matches!(
            init_wavefunction(&spec, |_| Complex64::new(0.0, 0.0)),
            Err(GridError::ZeroNorm)
        ));
    }

    #[test]
    fn fft_round_trip_preserves_state() {
        let spec = GridSpec::new(
            3,
            vec![AxisExtent { min: -4.0, max: 4.0 }, AxisExtent { min: -4.0, max: 4.0 }],
        )
        .unwrap();
        let wf = init_wavefunction(&spec, |x| {
            gaussian(x[0], 0.5, 1.0, 0.3) * gaussian(x[1], -0.5, 0.8, -0.2)
        })
        .unwrap();
        let mut round = wf.clone();
        round.to_momentum();
        assert_abs_diff_eq!(round.norm_sqr(), 1.0, epsilon = 1e-13);
        round.to_position();
        let fidelity = wf.overlap(&round).norm();
        assert!((fidelity - 1.0).abs() < 1e-13);
    }

    #[test]
    fn plane_wave_picks_up_exact_kinetic_phase() {
        // A plane wave at grid momentum k0 is an exact eigenstate of the split
        // step when V = 0; the step multiplies it by exp(-i p² δt / 2M).
        let n = 4;
        let spec = GridSpec::line(n, 0.0, 16.0).unwrap();
        let k0 = 3usize;
        let p = spec.momentum_indexing(0).momentum(k0);
        let wf0 = init_wavefunction(&spec, |x| Complex64::from_polar(1.0, p * x[0])).unwrap();
        let mut wf = wf0.clone();
        let dt = 0.37;
        let mass = 2.0;
        let v = vec![0.0; spec.total_points()];
        classical_split_step(&mut wf, &v, &[mass], dt).unwrap();
        let expected = Complex64::from_polar(1.0, -p * p / (2.0 * mass) * dt);
        for (a, b) in wf0.amplitudes().iter().zip(wf.amplitudes()) {
            assert!((b - a * expected).norm() < 1e-12);
        }
    }

    #[test]
    fn norm_preserved_over_thousand_steps() {
        let spec = GridSpec::line(6, -10.0, 10.0).unwrap();
        let mut wf = init_wavefunction(&spec, |x| gaussian(x[0], 1.0, 0.8, 0.5)).unwrap();
        let v = sample_potential(&spec, |x| 0.5 * x[0] * x[0]);
        propagate(&mut wf, &v, &[1.0], 0.01, 1000).unwrap();
        assert_abs_diff_eq!(wf.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_ground_state_survival() {
        // Analytic ground state of V = ½ω²x² (mass 1): survival stays above
        // 1 − 1e−4 across 1000 steps at δt = 0.01/ω.
        let omega = 1.0;
        let spec = GridSpec::line(7, -10.0, 10.0).unwrap();
        let wf0 = init_wavefunction(&spec, |x| {
            Complex64::new((-0.5 * omega * x[0] * x[0]).exp(), 0.0)
        })
        .unwrap();
        let v = sample_potential(&spec, |x| 0.5 * omega * omega * x[0] * x[0]);
        let mut wf = wf0.clone();
        propagate(&mut wf, &v, &[1.0], 0.01 / omega, 1000).unwrap();
        let survival = wf0.overlap(&wf).norm_sqr();
        assert!(survival >= 1.0 - 1e-4, "survival {survival}");
    }

    #[test]
    fn coherent_state_tracks_classical_trajectory() {
        // Ehrenfest: in a harmonic well a displaced ground state's ⟨x⟩ follows
        // x₀·cos(ωt) to within 1% of x₀ over one period.
        let omega = 1.0;
        let x0 = 2.0;
        let spec = GridSpec::line(7, -12.0, 12.0).unwrap();
        let mut wf = init_wavefunction(&spec, |x| {
            Complex64::new((-0.5 * omega * (x[0] - x0) * (x[0] - x0)).exp(), 0.0)
        })
        .unwrap();
        let v = sample_potential(&spec, |x| 0.5 * omega * omega * x[0] * x[0]);
        let steps = 628;
        let dt = 2.0 * PI / omega / steps as f64;
        let pos = potential_phases(&v, dt);
        let mom = kinetic_phases(&spec, &[1.0], dt).unwrap();
        let mut worst: f64 = 0.0;
        for s in 0..steps {
            wf.split_step_phases(&pos, &mom).unwrap();
            let t = (s + 1) as f64 * dt;
            let dev = (wf.position_expectation(0) - x0 * (omega * t).cos()).abs();
            worst = worst.max(dev);
        }
        assert!(worst <= 0.01 * x0, "max deviation {worst}");
    }

    #[test]
    fn free_gaussian_spreads_analytically() {
        // σ(t)² = σ₀²·(1 + (t/(2Mσ₀²))²) for a free packet (ħ = 1).
        let sigma0 = 1.0;
        let mass = 1.0;
        let spec = GridSpec::line(8, -24.0, 24.0).unwrap();
        let mut wf = init_wavefunction(&spec, |x| gaussian(x[0], 0.0, sigma0, 0.0)).unwrap();
        let v = vec![0.0; spec.total_points()];
        let dt = 0.02;
        let steps = 150;
        propagate(&mut wf, &v, &[mass], dt, steps).unwrap();
        let t = dt * steps as f64;
        let expected = sigma0 * sigma0 * (1.0 + (t / (2.0 * mass * sigma0 * sigma0)).powi(2));
        let measured = wf.position_variance(0);
        assert!(
            (measured - expected).abs() / expected < 5e-3,
            "variance {measured} vs {expected}"
        );
    }

    #[test]
    fn half_box_probability_of_centered_gaussian() {
        let spec = GridSpec::line(7, -8.0, 8.0).unwrap();
        let wf = init_wavefunction(&spec, |x| gaussian(x[0], 0.0, 1.0, 0.0)).unwrap();
        let p = wf.probability_in_box(&[-8.0], &[0.0]).unwrap();
        // Grid sum splits the point at x=0 asymmetrically; tolerance is one
        // cell of peak density.
        let peak = wf.amplitudes().iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
        assert!((p - 0.5).abs() <= peak, "p {p}");
    }

    #[test]
    fn diagonal_only_steps_compose_exactly() {
        // With identity momentum phases, n small steps equal one big step.
        let spec = GridSpec::line(5, -4.0, 4.0).unwrap();
        let wf0 = init_wavefunction(&spec, |x| gaussian(x[0], 0.3, 0.7, 1.1)).unwrap();
        let v = sample_potential(&spec, |x| x[0].sin() + 0.5 * x[0] * x[0]);
        let ident = vec![Complex64::new(1.0, 0.0); spec.total_points()];
        let dt = 0.05;
        let mut many = wf0.clone();
        let pos_small = potential_phases(&v, dt);
        for _ in 0..8 {
            many.split_step_phases(&pos_small, &ident).unwrap();
        }
        let mut one = wf0.clone();
        let pos_big = potential_phases(&v, dt * 8.0);
        one.split_step_phases(&pos_big, &ident).unwrap();
        for (a, b) in many.amplitudes().iter().zip(one.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn boundary_probability_flags_wraparound_risk() {
        let spec = GridSpec::line(6, -8.0, 8.0).unwrap();
        let centered = init_wavefunction(&spec, |x| gaussian(x[0], 0.0, 1.0, 0.0)).unwrap();
        assert!(centered.boundary_probability(2) < 1e-12);
        let edge = init_wavefunction(&spec, |x| gaussian(x[0], -7.8, 1.0, 0.0)).unwrap();
        assert!(edge.boundary_probability(2) > 0.1);
    }

    #[test]
    fn snapshot_round_trips() {
        let spec = GridSpec::line(4, -2.0, 2.0).unwrap();
        let wf = init_wavefunction(&spec, |x| gaussian(x[0], 0.1, 0.5, 2.0)).unwrap();
        let mut bin = Vec::new();
        write_binary(&wf, &mut bin).unwrap();
        assert_eq!(bin.len(), 8 + 16 * spec.total_points());
        let back = read_binary(&spec, bin.as_slice()).unwrap();
        for (a, b) in wf.amplitudes().iter().zip(back.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
        let mut csv_buf = Vec::new();
        write_csv(&wf, &mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        assert!(text.starts_with("index,x0,re,im\n"));
        assert_eq!(text.lines().count(), 1 + spec.total_points());
    }

    #[test]
    fn wrong_header_rejected() {
        let spec = GridSpec::line(4, -2.0, 2.0).unwrap();
        let wf = init_wavefunction(&spec, |x| gaussian(x[0], 0.0, 0.5, 0.0)).unwrap();
        let mut bin = Vec::new();
        write_binary(&wf, &mut bin).unwrap();
        let other = GridSpec::line(5, -2.0, 2.0).unwrap();
        assert!(matches!(read_binary(&other, bin.as_slice()), Err(GridError::Format(_))));
    }
}
