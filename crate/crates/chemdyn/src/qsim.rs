//! Statevector circuit simulator with gate accounting.
//!
//! Basis convention: qubit `q` is bit `q` of the basis-state index, so a
//! register occupying qubits `[s, s+w)` holds the integer `Σ bit_i·2^i` with
//! its least significant bit at qubit `s`. Loading a grid wavefunction into
//! position registers laid out in axis order reproduces the grid's axis-major
//! flattening bit for bit.
//!
//! Gate set: `H`, `X`, `phase(θ)`, `CNOT`, controlled-phase, doubly-controlled
//! phase, and `swap`. The tally keeps one counter per class. Rotation-class
//! cost (used by the arithmetic audits) counts controlled phases and CNOTs at
//! 1 and doubly-controlled phases at 5 (two CNOTs plus three controlled
//! rotations); single-qubit gates and the QFT's bit-reversal swaps are
//! tallied separately and excluded. Operations beyond the gate set (integer
//! table oracles, controlled application of a whole subcircuit) are counted
//! as `oracle_ops`, never as elementary gates.
//!
//! QFT convention: `qft` maps `|j⟩ → Σ_y exp(+2πi·jy/2^k)|y⟩/√2^k` with
//! bit reversal materialized as explicit swaps, so `iqft` on a position
//! register equals the grid propagator's position→momentum transform,
//! including bin order.

use crate::grid::{GridSpec, GridWavefunction};
use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

/// Default ceiling on simulator width; ~1 GiB of amplitudes.
pub const DEFAULT_QUBIT_CAP: usize = 26;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("{required} qubits requested, cap is {cap}")]
    CapExceeded { required: usize, cap: usize },
    #[error("qubit {qubit} out of range for {qubits}-qubit state")]
    QubitOutOfRange { qubit: usize, qubits: usize },
    #[error("gate targets must be distinct: {0:?}")]
    DuplicateTarget(Vec<usize>),
    #[error("register {0:?} not found in layout")]
    UnknownRegister(String),
    #[error("register width {width} too wide to enumerate outcomes")]
    RegisterTooWide { width: usize },
    #[error("state is not |0…0⟩; load requires a fresh state")]
    NotFreshState,
    #[error("layout/grid mismatch: {0}")]
    LayoutMismatch(String),
    #[error("state does not factor over the requested split (deviation {deviation:.3e})")]
    NotProductState { deviation: f64 },
    #[error("table length {got} does not match register domain {expected}")]
    TableLength { expected: usize, got: usize },
    #[error("cannot sample: total probability is zero")]
    ZeroProbability,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

// --- gates -------------------------------------------------------------------

/// Elementary gate on simulator qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    /// diag(1, e^{iθ}) on one qubit.
    Phase(usize, f64),
    /// Control, target.
    CNot(usize, usize),
    /// Symmetric in its two qubits.
    CPhase(usize, usize, f64),
    /// Symmetric in its three qubits.
    CCPhase(usize, usize, usize, f64),
    Swap(usize, usize),
}

impl Gate {
    pub fn targets(&self) -> Vec<usize> {
        match *self {
            Gate::H(q) | Gate::X(q) | Gate::Phase(q, _) => vec![q],
            Gate::CNot(a, b) | Gate::CPhase(a, b, _) | Gate::Swap(a, b) => vec![a, b],
            Gate::CCPhase(a, b, c, _) => vec![a, b, c],
        }
    }

    /// Inverse gate (phases negate; the rest are involutions).
    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Phase(q, t) => Gate::Phase(q, -t),
            Gate::CPhase(a, b, t) => Gate::CPhase(a, b, -t),
            Gate::CCPhase(a, b, c, t) => Gate::CCPhase(a, b, c, -t),
            g => g,
        }
    }
}

/// Reverses a circuit: inverse gates in reverse order.
pub fn inverse_circuit(gates: &[Gate]) -> Vec<Gate> {
    gates.iter().rev().map(Gate::inverse).collect()
}

/// Per-class gate counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GateTally {
    pub single_qubit: u64,
    pub cnot: u64,
    pub controlled_phase: u64,
    pub doubly_controlled_phase: u64,
    pub swap: u64,
    /// Black-box simulator operations (table oracles, controlled subcircuit
    /// application); not elementary gates.
    pub oracle_ops: u64,
}

impl GateTally {
    pub fn record(&mut self, gate: &Gate) {
        match gate {
            Gate::H(_) | Gate::X(_) | Gate::Phase(..) => self.single_qubit += 1,
            Gate::CNot(..) => self.cnot += 1,
            Gate::CPhase(..) => self.controlled_phase += 1,
            Gate::CCPhase(..) => self.doubly_controlled_phase += 1,
            Gate::Swap(..) => self.swap += 1,
        }
    }

    /// Controlled rotations and CNOTs at cost 1, doubly-controlled phases at
    /// cost 5. Single-qubit gates and swaps are excluded.
    pub fn rotation_class(&self) -> u64 {
        self.cnot + self.controlled_phase + 5 * self.doubly_controlled_phase
    }

    /// Every elementary gate, with doubly-controlled phases decomposed to 5
    /// and swaps to 3 CNOTs.
    pub fn total_elementary(&self) -> u64 {
        self.single_qubit + self.cnot + self.controlled_phase
            + 5 * self.doubly_controlled_phase
            + 3 * self.swap
    }

    pub fn add(&mut self, other: &GateTally) {
        self.single_qubit += other.single_qubit;
        self.cnot += other.cnot;
        self.controlled_phase += other.controlled_phase;
        self.doubly_controlled_phase += other.doubly_controlled_phase;
        self.swap += other.swap;
        self.oracle_ops += other.oracle_ops;
    }
}

/// Tally of a circuit without executing it.
pub fn tally_circuit(gates: &[Gate]) -> GateTally {
    let mut t = GateTally::default();
    for g in gates {
        t.record(g);
    }
    t
}

// --- registers ---------------------------------------------------------------

/// Named register: contiguous qubits `[start, start+width)`, LSB first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    pub name: String,
    pub start: usize,
    pub width: usize,
}

impl Register {
    pub fn qubit(&self, bit: usize) -> usize {
        debug_assert!(bit < self.width);
        self.start + bit
    }

    pub fn qubits(&self) -> Vec<usize> {
        (self.start..self.start + self.width).collect()
    }
}

/// Ordered set of named registers packed from qubit 0 upward.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegisterLayout {
    regs: Vec<Register>,
}

impl RegisterLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, width: usize) -> usize {
        let start = self.total_qubits();
        self.regs.push(Register {
            name: name.to_string(),
            start,
            width,
        });
        self.regs.len() - 1
    }

    pub fn get(&self, id: usize) -> &Register {
        &self.regs[id]
    }

    pub fn find(&self, name: &str) -> Result<&Register, CircuitError> {
        self.regs
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| CircuitError::UnknownRegister(name.to_string()))
    }

    pub fn total_qubits(&self) -> usize {
        self.regs.last().map(|r| r.start + r.width).unwrap_or(0)
    }

    pub fn registers(&self) -> &[Register] {
        &self.regs
    }
}

// --- statevector -------------------------------------------------------------

/// Full statevector over `qubits` qubits with a running gate tally.
#[derive(Debug, Clone)]
pub struct CircuitState {
    amps: Vec<Complex64>,
    qubits: usize,
    tally: GateTally,
}

impl CircuitState {
    /// Fresh |0…0⟩ state under the default qubit cap.
    pub fn new(qubits: usize) -> Result<Self, CircuitError> {
        Self::with_cap(qubits, DEFAULT_QUBIT_CAP)
    }

    pub fn with_cap(qubits: usize, cap: usize) -> Result<Self, CircuitError> {
        if qubits > cap {
            return Err(CircuitError::CapExceeded {
                required: qubits,
                cap,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amps,
            qubits,
            tally: GateTally::default(),
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn tally(&self) -> &GateTally {
        &self.tally
    }

    pub fn reset_tally(&mut self) {
        self.tally = GateTally::default();
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Overwrites the state with a basis state.
    pub fn set_basis(&mut self, index: usize) {
        self.amps.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        self.amps[index] = Complex64::new(1.0, 0.0);
    }

    /// Overwrites the low-index block with `amps` (normalized) and zeros the
    /// rest: qubits above log₂(amps.len()) end up in |0⟩. Length must be a
    /// power of two that fits the state.
    pub fn set_amplitudes(&mut self, amps: &[Complex64]) -> Result<(), CircuitError> {
        if !amps.len().is_power_of_two() || amps.len() > self.amps.len() {
            return Err(CircuitError::LayoutMismatch(format!(
                "{} amplitudes into a {}-qubit state",
                amps.len(),
                self.qubits
            )));
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !(norm2.is_finite() && norm2 > 0.0) {
            return Err(CircuitError::ZeroProbability);
        }
        let scale = 1.0 / norm2.sqrt();
        self.amps.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        for (dst, src) in self.amps.iter_mut().zip(amps) {
            *dst = src * scale;
        }
        Ok(())
    }

    /// Dominant basis index and its probability (diagnostics).
    pub fn modal_basis(&self) -> (usize, f64) {
        let mut best = (0usize, -1.0f64);
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > best.1 {
                best = (i, p);
            }
        }
        best
    }

    fn check_targets(&self, targets: &[usize]) -> Result<(), CircuitError> {
        for &q in targets {
            if q >= self.qubits {
                return Err(CircuitError::QubitOutOfRange {
                    qubit: q,
                    qubits: self.qubits,
                });
            }
        }
        for i in 0..targets.len() {
            for j in i + 1..targets.len() {
                if targets[i] == targets[j] {
                    return Err(CircuitError::DuplicateTarget(targets.to_vec()));
                }
            }
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<(), CircuitError> {
        self.apply_gate_filtered(gate, 0)?;
        self.tally.record(gate);
        Ok(())
    }

    pub fn apply_circuit(&mut self, gates: &[Gate]) -> Result<(), CircuitError> {
        for g in gates {
            self.apply_gate(g)?;
        }
        Ok(())
    }

    /// Applies a whole subcircuit conditioned on `control` being |1⟩ — the
    /// simulator-level controlled-U used by phase estimation. Counted as one
    /// oracle op plus the inner gates' own tally.
    pub fn apply_circuit_controlled(
        &mut self,
        gates: &[Gate],
        control: usize,
    ) -> Result<(), CircuitError> {
        self.check_targets(&[control])?;
        for g in gates {
            if g.targets().contains(&control) {
                return Err(CircuitError::DuplicateTarget(g.targets()));
            }
            self.apply_gate_filtered(g, 1usize << control)?;
            self.tally.record(g);
        }
        self.tally.oracle_ops += 1;
        Ok(())
    }

    /// Gate kernel; `filter` is a bit mask that must be set for an index to
    /// participate (0 = unconditional).
    fn apply_gate_filtered(&mut self, gate: &Gate, filter: usize) -> Result<(), CircuitError> {
        self.check_targets(&gate.targets())?;
        if filter != 0 {
            for &q in &gate.targets() {
                if filter & (1usize << q) != 0 {
                    return Err(CircuitError::DuplicateTarget(gate.targets()));
                }
            }
        }
        let dim = self.amps.len();
        match *gate {
            Gate::H(q) => {
                let bit = 1usize << q;
                let inv = std::f64::consts::FRAC_1_SQRT_2;
                let mut base = 0;
                while base < dim {
                    for off in 0..bit {
                        let i = base + off;
                        if i & filter == filter {
                            let j = i + bit;
                            let (a, b) = (self.amps[i], self.amps[j]);
                            self.amps[i] = (a + b) * inv;
                            self.amps[j] = (a - b) * inv;
                        }
                    }
                    base += bit << 1;
                }
            }
            Gate::X(q) => {
                let bit = 1usize << q;
                let mut base = 0;
                while base < dim {
                    for off in 0..bit {
                        let i = base + off;
                        if i & filter == filter {
                            self.amps.swap(i, i + bit);
                        }
                    }
                    base += bit << 1;
                }
            }
            Gate::Phase(q, theta) => {
                let mask = (1usize << q) | filter;
                let ph = Complex64::from_polar(1.0, theta);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *a *= ph;
                    }
                }
            }
            Gate::CNot(c, t) => {
                let cb = 1usize << c;
                let tb = 1usize << t;
                let want = cb | filter;
                for i in 0..dim {
                    if i & (want | tb) == want {
                        self.amps.swap(i, i | tb);
                    }
                }
            }
            Gate::CPhase(a, b, theta) => {
                let mask = (1usize << a) | (1usize << b) | filter;
                let ph = Complex64::from_polar(1.0, theta);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp *= ph;
                    }
                }
            }
            Gate::CCPhase(a, b, c, theta) => {
                let mask = (1usize << a) | (1usize << b) | (1usize << c) | filter;
                let ph = Complex64::from_polar(1.0, theta);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp *= ph;
                    }
                }
            }
            Gate::Swap(a, b) => {
                let ab = 1usize << a;
                let bb = 1usize << b;
                for i in 0..dim {
                    if i & ab != 0 && i & bb == 0 && i & filter == filter {
                        self.amps.swap(i, (i & !ab) | bb);
                    }
                }
            }
        }
        Ok(())
    }

    /// |x⟩|y⟩ → |x⟩|y ⊕ table[x]⟩ with ⊕ addition mod 2^w on the target
    /// register — a black-box integer oracle applied as a basis permutation.
    /// `control`, when set, conditions the whole oracle on one qubit.
    pub fn apply_table_add(
        &mut self,
        source: &Register,
        target: &Register,
        table: &[u64],
        control: Option<usize>,
    ) -> Result<(), CircuitError> {
        let src_dim = 1usize << source.width;
        if table.len() != src_dim {
            return Err(CircuitError::TableLength {
                expected: src_dim,
                got: table.len(),
            });
        }
        let mut touched: Vec<usize> = source.qubits();
        touched.extend(target.qubits());
        if let Some(c) = control {
            touched.push(c);
        }
        self.check_targets(&touched)?;

        let tgt_dim = 1usize << target.width;
        let src_mask = (src_dim - 1) << source.start;
        let tgt_mask = (tgt_dim - 1) << target.start;
        let ctrl_mask = control.map(|c| 1usize << c).unwrap_or(0);
        let dim = self.amps.len();
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for (i, &a) in self.amps.iter().enumerate() {
            if ctrl_mask != 0 && i & ctrl_mask != ctrl_mask {
                out[i] += a;
                continue;
            }
            let x = (i & src_mask) >> source.start;
            let y = (i & tgt_mask) >> target.start;
            let y2 = (y + table[x] as usize) & (tgt_dim - 1);
            let j = (i & !tgt_mask) | (y2 << target.start);
            out[j] += a;
        }
        self.amps = out;
        self.tally.oracle_ops += 1;
        Ok(())
    }

    /// Exact marginal distribution over a register's values.
    pub fn register_distribution(&self, reg: &Register) -> Result<Vec<f64>, CircuitError> {
        if reg.width > 24 {
            return Err(CircuitError::RegisterTooWide { width: reg.width });
        }
        self.check_targets(&reg.qubits())?;
        let mask = ((1usize << reg.width) - 1) << reg.start;
        let mut probs = vec![0.0f64; 1 << reg.width];
        for (i, a) in self.amps.iter().enumerate() {
            probs[(i & mask) >> reg.start] += a.norm_sqr();
        }
        Ok(probs)
    }

    /// Samples `shots` measurement outcomes of one register without
    /// collapsing the state. Deterministic for a given seed.
    pub fn measure_register(
        &self,
        reg: &Register,
        shots: usize,
        seed: u64,
    ) -> Result<Measurement, CircuitError> {
        let probabilities = self.register_distribution(reg)?;
        let dist =
            WeightedIndex::new(&probabilities).map_err(|_| CircuitError::ZeroProbability)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; probabilities.len()];
        for _ in 0..shots {
            counts[dist.sample(&mut rng)] += 1;
        }
        Ok(Measurement {
            probabilities,
            counts,
            shots,
        })
    }
}

/// Outcome of sampling one register.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub probabilities: Vec<f64>,
    pub counts: Vec<u64>,
    pub shots: usize,
}

impl Measurement {
    pub fn modal_value(&self) -> usize {
        self.counts
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

// --- QFT ---------------------------------------------------------------------

/// QFT circuit on the given qubits (`qubits[0]` = least significant bit):
/// `|j⟩ → Σ_y exp(+2πi jy/2^k)|y⟩/√2^k`. Emits k Hadamards, k(k−1)/2
/// controlled phases, and ⌊k/2⌋ bit-reversal swaps.
pub fn qft_gates(qubits: &[usize]) -> Vec<Gate> {
    let k = qubits.len();
    let mut gates = Vec::with_capacity(k * (k + 1) / 2 + k / 2);
    for t in (0..k).rev() {
        gates.push(Gate::H(qubits[t]));
        for c in (0..t).rev() {
            // Contributes exp(2πi j_c j_t / 2^{t-c+1}) toward exp(2πi j/2^{t+1}).
            let theta = 2.0 * PI / (1u64 << (t - c + 1)) as f64;
            gates.push(Gate::CPhase(qubits[c], qubits[t], theta));
        }
    }
    for i in 0..k / 2 {
        gates.push(Gate::Swap(qubits[i], qubits[k - 1 - i]));
    }
    gates
}

/// Inverse QFT: `|j⟩ → Σ_y exp(−2πi jy/2^k)|y⟩/√2^k`. On a position register
/// this is the position→momentum transform.
pub fn iqft_gates(qubits: &[usize]) -> Vec<Gate> {
    inverse_circuit(&qft_gates(qubits))
}

// --- grid I/O ----------------------------------------------------------------

/// Builds a fresh state whose position registers (one per grid axis, in axis
/// order) hold `wf`, with every other register in |0⟩.
pub fn load_grid_state(
    layout: &RegisterLayout,
    position_regs: &[usize],
    wf: &GridWavefunction,
    cap: usize,
) -> Result<CircuitState, CircuitError> {
    let spec = wf.spec();
    if position_regs.len() != spec.axes() {
        return Err(CircuitError::LayoutMismatch(format!(
            "{} position registers for {} axes",
            position_regs.len(),
            spec.axes()
        )));
    }
    for (&id, axis) in position_regs.iter().zip(0..) {
        let reg = layout.get(id);
        if reg.width != spec.qubits_per_axis() {
            return Err(CircuitError::LayoutMismatch(format!(
                "register {} has width {}, axis {} needs {}",
                reg.name,
                reg.width,
                axis,
                spec.qubits_per_axis()
            )));
        }
    }
    let mut state = CircuitState::with_cap(layout.total_qubits(), cap)?;
    state.amps[0] = Complex64::new(0.0, 0.0);
    let n = spec.qubits_per_axis();
    let axis_mask = spec.points_per_axis() - 1;
    for (g, &a) in wf.amplitudes().iter().enumerate() {
        let mut idx = 0usize;
        for (axis, &id) in position_regs.iter().enumerate() {
            let j = (g >> (axis * n)) & axis_mask;
            idx |= j << layout.get(id).start;
        }
        state.amps[idx] = a;
    }
    Ok(state)
}

/// Result of factoring a state into (position registers) ⊗ (everything else).
#[derive(Debug, Clone)]
pub struct ExtractedState {
    pub wavefunction: GridWavefunction,
    /// Probability mass outside the best rank-1 product approximation
    /// (Σ of squared Schmidt coefficients beyond the first, as a fraction of
    /// the total); 0 for an exact product state. Quoted as mass, not
    /// amplitude, so float roundoff on a genuinely separable state stays at
    /// machine scale instead of its square root.
    pub deviation: f64,
}

/// Extracts the position-register wavefunction as long as the state factors
/// as (position) ⊗ (rest) to within `tolerance`; global phase is arbitrary.
pub fn extract_grid_state(
    state: &CircuitState,
    layout: &RegisterLayout,
    position_regs: &[usize],
    spec: &GridSpec,
    tolerance: f64,
) -> Result<ExtractedState, CircuitError> {
    let n = spec.qubits_per_axis();
    if position_regs.len() != spec.axes() {
        return Err(CircuitError::LayoutMismatch(format!(
            "{} position registers for {} axes",
            position_regs.len(),
            spec.axes()
        )));
    }
    let pos_bits = n * spec.axes();
    let anc_bits = state.qubits() - pos_bits;
    let pos_dim = 1usize << pos_bits;
    let anc_dim = 1usize << anc_bits;

    // Map each full index to (grid index x, ancilla index y).
    let mut pos_sources: Vec<(usize, usize)> = Vec::new(); // (qubit, grid bit)
    for (axis, &id) in position_regs.iter().enumerate() {
        let reg = layout.get(id);
        for b in 0..n {
            pos_sources.push((reg.qubit(b), axis * n + b));
        }
    }
    let pos_qubit_mask: usize = pos_sources.iter().map(|&(q, _)| 1usize << q).sum();
    let mut anc_sources: Vec<(usize, usize)> = Vec::new();
    let mut ab = 0;
    for q in 0..state.qubits() {
        if pos_qubit_mask & (1usize << q) == 0 {
            anc_sources.push((q, ab));
            ab += 1;
        }
    }
    let split = |i: usize| -> (usize, usize) {
        let mut x = 0usize;
        for &(q, b) in &pos_sources {
            x |= ((i >> q) & 1) << b;
        }
        let mut y = 0usize;
        for &(q, b) in &anc_sources {
            y |= ((i >> q) & 1) << b;
        }
        (x, y)
    };

    // Rank-1 factor via two rounds of power iteration on A = u·v†, starting
    // from the heaviest ancilla column.
    let amps = state.amplitudes();
    let mut col_norm = vec![0.0f64; anc_dim];
    for (i, a) in amps.iter().enumerate() {
        let (_, y) = split(i);
        col_norm[y] += a.norm_sqr();
    }
    let y0 = col_norm
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut u = vec![Complex64::new(0.0, 0.0); pos_dim];
    for (i, a) in amps.iter().enumerate() {
        let (x, y) = split(i);
        if y == y0 {
            u[x] = *a;
        }
    }
    let mut sigma2 = 0.0;
    for _ in 0..2 {
        let un: f64 = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if un == 0.0 {
            return Err(CircuitError::NotProductState { deviation: 1.0 });
        }
        u.iter_mut().for_each(|c| *c /= un);
        // v = A† u, then u ← A v.
        let mut v = vec![Complex64::new(0.0, 0.0); anc_dim];
        for (i, a) in amps.iter().enumerate() {
            let (x, y) = split(i);
            v[y] += u[x].conj() * a;
        }
        let vn: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if vn == 0.0 {
            return Err(CircuitError::NotProductState { deviation: 1.0 });
        }
        v.iter_mut().for_each(|c| *c /= vn);
        let mut u2 = vec![Complex64::new(0.0, 0.0); pos_dim];
        for (i, a) in amps.iter().enumerate() {
            let (x, y) = split(i);
            u2[x] += a * v[y].conj();
        }
        sigma2 = u2.iter().map(|c| c.norm_sqr()).sum();
        u = u2;
    }
    let total: f64 = state.norm_sqr();
    let deviation = ((total - sigma2) / total).max(0.0);
    if deviation > tolerance {
        return Err(CircuitError::NotProductState { deviation });
    }
    let norm: f64 = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    u.iter_mut().for_each(|c| *c /= norm);
    let wavefunction = GridWavefunction::from_amplitudes(spec.clone(), u)
        .map_err(|e| CircuitError::LayoutMismatch(e.to_string()))?;
    Ok(ExtractedState {
        wavefunction,
        deviation,
    })
}

// --- text format --------------------------------------------------------------

/// One gate per line: lower-case name, qubit indices, then the angle for
/// phase-type gates (`h 3`, `cnot 1 4`, `cphase 0 3 0.7853981633974483`).
pub fn circuit_to_text(gates: &[Gate]) -> String {
    let mut s = String::new();
    for g in gates {
        match *g {
            Gate::H(q) => writeln!(s, "h {q}").unwrap(),
            Gate::X(q) => writeln!(s, "x {q}").unwrap(),
            Gate::Phase(q, t) => writeln!(s, "phase {q} {t:.17e}").unwrap(),
            Gate::CNot(c, t) => writeln!(s, "cnot {c} {t}").unwrap(),
            Gate::CPhase(a, b, t) => writeln!(s, "cphase {a} {b} {t:.17e}").unwrap(),
            Gate::CCPhase(a, b, c, t) => writeln!(s, "ccphase {a} {b} {c} {t:.17e}").unwrap(),
            Gate::Swap(a, b) => writeln!(s, "swap {a} {b}").unwrap(),
        }
    }
    s
}

pub fn circuit_from_text(text: &str) -> Result<Vec<Gate>, CircuitError> {
    let mut gates = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: &str| CircuitError::Parse {
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let q = |i: usize| -> Result<usize, CircuitError> {
            parts
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad qubit index"))
        };
        let angle = |i: usize| -> Result<f64, CircuitError> {
            parts
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad angle"))
        };
        let want = |n: usize| -> Result<(), CircuitError> {
            if parts.len() != n + 1 {
                Err(parse_err("wrong argument count"))
            } else {
                Ok(())
            }
        };
        let gate = match parts[0] {
            "h" => {
                want(1)?;
                Gate::H(q(1)?)
            }
            "x" => {
                want(1)?;
                Gate::X(q(1)?)
            }
            "phase" => {
                want(2)?;
                Gate::Phase(q(1)?, angle(2)?)
            }
            "cnot" => {
                want(2)?;
                Gate::CNot(q(1)?, q(2)?)
            }
            "cphase" => {
                want(3)?;
                Gate::CPhase(q(1)?, q(2)?, angle(3)?)
            }
            "ccphase" => {
                want(4)?;
                Gate::CCPhase(q(1)?, q(2)?, q(3)?, angle(4)?)
            }
            "swap" => {
                want(2)?;
                Gate::Swap(q(1)?, q(2)?)
            }
            other => return Err(parse_err(&format!("unknown gate {other}"))),
        };
        gates.push(gate);
    }
    Ok(gates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{init_wavefunction, GridSpec};
    use proptest::prelude::*;
    use rand::Rng;

    // Independent dense oracle: builds the 2^Q×2^Q matrix of a gate from its
    // definition and multiplies, exercising none of the kernel bit tricks.
    fn gate_matrix(g: &Gate, qubits: usize) -> Vec<Vec<Complex64>> {
        let dim = 1usize << qubits;
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let mut m = vec![vec![zero; dim]; dim];
        for s in 0..dim {
            match *g {
                Gate::H(q) => {
                    let inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                    let b = (s >> q) & 1;
                    m[s & !(1 << q)][s] += inv;
                    m[s | (1 << q)][s] += if b == 0 { inv } else { -inv };
                }
                Gate::X(q) => m[s ^ (1 << q)][s] = one,
                Gate::Phase(q, t) => {
                    m[s][s] = if (s >> q) & 1 == 1 {
                        Complex64::from_polar(1.0, t)
                    } else {
                        one
                    }
                }
                Gate::CNot(c, t) => {
                    let d = if (s >> c) & 1 == 1 { s ^ (1 << t) } else { s };
                    m[d][s] = one;
                }
                Gate::CPhase(a, b, t) => {
                    m[s][s] = if (s >> a) & 1 == 1 && (s >> b) & 1 == 1 {
                        Complex64::from_polar(1.0, t)
                    } else {
                        one
                    }
                }
                Gate::CCPhase(a, b, c, t) => {
                    m[s][s] = if (s >> a) & 1 == 1 && (s >> b) & 1 == 1 && (s >> c) & 1 == 1 {
                        Complex64::from_polar(1.0, t)
                    } else {
                        one
                    }
                }
                Gate::Swap(a, b) => {
                    let (ba, bb) = ((s >> a) & 1, (s >> b) & 1);
                    let d = (s & !(1 << a) & !(1 << b)) | (bb << a) | (ba << b);
                    m[d][s] = one;
                }
            }
        }
        m
    }

    fn mat_vec(m: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
        (0..m.len())
            .map(|r| (0..v.len()).map(|c| m[r][c] * v[c]).sum())
            .collect()
    }

    fn random_state(qubits: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<Complex64> = (0..1usize << qubits)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let n: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|c| *c /= n);
        v
    }

    fn arb_gate(qubits: usize) -> impl Strategy<Value = Gate> {
        let q = 0..qubits;
        let theta = -6.3f64..6.3f64;
        prop_oneof![
            q.clone().prop_map(Gate::H),
            q.clone().prop_map(Gate::X),
            (q.clone(), theta.clone()).prop_map(|(q, t)| Gate::Phase(q, t)),
            (0..qubits, 0..qubits)
                .prop_filter("distinct", |(a, b)| a != b)
                .prop_map(|(a, b)| Gate::CNot(a, b)),
            (0..qubits, 0..qubits, theta.clone())
                .prop_filter("distinct", |(a, b, _)| a != b)
                .prop_map(|(a, b, t)| Gate::CPhase(a, b, t)),
            (0..qubits, 0..qubits, 0..qubits, theta)
                .prop_filter("distinct", |(a, b, c, _)| a != b && b != c && a != c)
                .prop_map(|(a, b, c, t)| Gate::CCPhase(a, b, c, t)),
            (0..qubits, 0..qubits)
                .prop_filter("distinct", |(a, b)| a != b)
                .prop_map(|(a, b)| Gate::Swap(a, b)),
        ]
    }

    proptest! {
        #[test]
        fn kernels_match_dense_oracle(gates in prop::collection::vec(arb_gate(4), 1..12), seed in 0u64..1000) {
            let mut state = CircuitState::new(4).unwrap();
            state.amps = random_state(4, seed);
            let mut dense = state.amps.clone();
            for g in &gates {
                state.apply_gate(g).unwrap();
                dense = mat_vec(&gate_matrix(g, 4), &dense);
            }
            for (a, b) in state.amps.iter().zip(&dense) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn circuits_invert(gates in prop::collection::vec(arb_gate(5), 1..20), seed in 0u64..1000) {
            let mut state = CircuitState::new(5).unwrap();
            state.amps = random_state(5, seed);
            let orig = state.amps.clone();
            state.apply_circuit(&gates).unwrap();
            state.apply_circuit(&inverse_circuit(&gates)).unwrap();
            for (a, b) in state.amps.iter().zip(&orig) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn qft_on_zero_is_uniform_positive() {
        let mut state = CircuitState::new(3).unwrap();
        state.apply_circuit(&qft_gates(&[0, 1, 2])).unwrap();
        let want = 1.0 / (8.0f64).sqrt();
        for a in state.amplitudes() {
            assert!((a.re - want).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    #[test]
    fn qft_matches_dft_matrix_on_all_basis_states() {
        // qft|j⟩ must equal the 8×8 inverse-DFT column exp(+2πi jy/8)/√8.
        let n = 3;
        let dim = 1 << n;
        let gates = qft_gates(&[0, 1, 2]);
        for j in 0..dim {
            let mut state = CircuitState::new(n).unwrap();
            state.set_basis(j);
            state.apply_circuit(&gates).unwrap();
            for y in 0..dim {
                let want = Complex64::from_polar(
                    1.0 / (dim as f64).sqrt(),
                    2.0 * PI * (j * y) as f64 / dim as f64,
                );
                assert!(
                    (state.amplitudes()[y] - want).norm() < 1e-12,
                    "j={j} y={y}"
                );
            }
        }
    }

    #[test]
    fn qft_gate_counts() {
        for k in 1..=6 {
            let qubits: Vec<usize> = (0..k).collect();
            let t = tally_circuit(&qft_gates(&qubits));
            assert_eq!(t.single_qubit, k as u64);
            assert_eq!(t.controlled_phase, (k * (k - 1) / 2) as u64);
            assert_eq!(t.swap, (k / 2) as u64);
            assert_eq!(
                t.single_qubit + t.controlled_phase,
                (k * (k + 1) / 2) as u64
            );
        }
    }

    #[test]
    fn iqft_undoes_qft() {
        let qubits: Vec<usize> = (0..5).collect();
        let mut state = CircuitState::new(5).unwrap();
        state.amps = random_state(5, 7);
        let orig = state.amps.clone();
        state.apply_circuit(&qft_gates(&qubits)).unwrap();
        state.apply_circuit(&iqft_gates(&qubits)).unwrap();
        for (a, b) in state.amps.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn iqft_equals_grid_momentum_transform() {
        // Loading a grid state and running iqft on the position register must
        // reproduce to_momentum() bin for bin.
        let spec = GridSpec::line(5, -6.0, 6.0).unwrap();
        let wf = init_wavefunction(&spec, |x| {
            Complex64::from_polar((-0.3 * x[0] * x[0]).exp(), 0.8 * x[0])
        })
        .unwrap();
        let mut layout = RegisterLayout::new();
        let pos = layout.add("pos", 5);
        let mut state = load_grid_state(&layout, &[pos], &wf, DEFAULT_QUBIT_CAP).unwrap();
        state
            .apply_circuit(&iqft_gates(&layout.get(pos).qubits()))
            .unwrap();
        let mut reference = wf.clone();
        reference.to_momentum();
        for (a, b) in state.amplitudes().iter().zip(reference.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn load_extract_round_trip_and_entangled_reject() {
        let spec = GridSpec::line(4, -2.0, 2.0).unwrap();
        let wf = init_wavefunction(&spec, |x| {
            Complex64::from_polar((-x[0] * x[0]).exp(), 0.4 * x[0])
        })
        .unwrap();
        let mut layout = RegisterLayout::new();
        let pos = layout.add("pos", 4);
        let _anc = layout.add("anc", 2);
        let mut state = load_grid_state(&layout, &[pos], &wf, DEFAULT_QUBIT_CAP).unwrap();
        // Put the ancilla in a superposition (still product).
        state.apply_gate(&Gate::H(layout.get(_anc).qubit(0))).unwrap();
        let got = extract_grid_state(&state, &layout, &[pos], &spec, 1e-8).unwrap();
        assert!(got.deviation < 1e-12);
        let fidelity = wf.overlap(&got.wavefunction).norm();
        assert!((fidelity - 1.0).abs() < 1e-12);

        // Entangle ancilla with position: extraction must reject.
        state
            .apply_gate(&Gate::CNot(layout.get(pos).qubit(0), layout.get(_anc).qubit(1)))
            .unwrap();
        match extract_grid_state(&state, &layout, &[pos], &spec, 1e-8) {
            Err(CircuitError::NotProductState { deviation }) => assert!(deviation > 1e-3),
            other => panic!("expected reject, got {other:?}"),
        }
    }

    #[test]
    fn uniform_two_qubit_measurement_statistics() {
        let mut state = CircuitState::new(2).unwrap();
        state.apply_gate(&Gate::H(0)).unwrap();
        state.apply_gate(&Gate::H(1)).unwrap();
        let mut layout = RegisterLayout::new();
        let r = layout.add("r", 2);
        let m = state.measure_register(layout.get(r), 100_000, 42).unwrap();
        for v in 0..4 {
            assert!((m.probabilities[v] - 0.25).abs() < 1e-12);
            let freq = m.counts[v] as f64 / m.shots as f64;
            assert!((freq - 0.25).abs() < 0.01, "freq {freq}");
        }
        // Same seed reproduces counts exactly.
        let m2 = state.measure_register(layout.get(r), 100_000, 42).unwrap();
        assert_eq!(m.counts, m2.counts);
    }

    #[test]
    fn table_add_permutes_and_kicks_back() {
        // |x⟩|y⟩ → |x⟩|y + t[x] mod 8⟩ on basis states.
        let mut layout = RegisterLayout::new();
        let src = layout.add("x", 2);
        let tgt = layout.add("y", 3);
        let table = vec![3u64, 5, 0, 7];
        for x in 0..4usize {
            for y in 0..8usize {
                let mut state = CircuitState::new(5).unwrap();
                state.set_basis(x | (y << 2));
                state
                    .apply_table_add(layout.get(src), layout.get(tgt), &table, None)
                    .unwrap();
                let want = x | (((y + table[x] as usize) & 7) << 2);
                let (idx, p) = state.modal_basis();
                assert_eq!(idx, want);
                assert!((p - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn controlled_subcircuit_acts_on_control_one_half() {
        let gates = vec![Gate::H(0), Gate::Phase(0, 0.7), Gate::X(1)];
        let mut state = CircuitState::new(3).unwrap();
        state.amps = random_state(3, 11);
        let orig = state.amps.clone();
        state.apply_circuit_controlled(&gates, 2).unwrap();
        // Control-0 half untouched.
        for i in 0..4 {
            assert!((state.amps[i] - orig[i]).norm() < 1e-15);
        }
        // Control-1 half transformed like the bare circuit on a 2-qubit state.
        let mut half = CircuitState::new(2).unwrap();
        half.amps = orig[4..8].to_vec();
        let pre_norm: f64 = half.norm_sqr();
        half.apply_circuit(&gates).unwrap();
        assert!((half.norm_sqr() - pre_norm).abs() < 1e-12);
        for i in 0..4 {
            assert!((state.amps[4 + i] - half.amps[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn tally_classes_and_rotation_weights() {
        let mut state = CircuitState::new(4).unwrap();
        state.apply_gate(&Gate::H(0)).unwrap();
        state.apply_gate(&Gate::X(1)).unwrap();
        state.apply_gate(&Gate::CNot(0, 1)).unwrap();
        state.apply_gate(&Gate::CPhase(1, 2, 0.3)).unwrap();
        state.apply_gate(&Gate::CCPhase(0, 1, 3, 0.2)).unwrap();
        state.apply_gate(&Gate::Swap(2, 3)).unwrap();
        let t = state.tally();
        assert_eq!(t.single_qubit, 2);
        assert_eq!(t.cnot, 1);
        assert_eq!(t.controlled_phase, 1);
        assert_eq!(t.doubly_controlled_phase, 1);
        assert_eq!(t.swap, 1);
        assert_eq!(t.rotation_class(), 1 + 1 + 5);
        assert_eq!(t.total_elementary(), 2 + 1 + 1 + 5 + 3);
    }

    #[test]
    fn qubit_cap_enforced() {
        assert!(matches!(
            CircuitState::with_cap(10, 8),
            Err(CircuitError::CapExceeded { required: 10, cap: 8 })
        ));
    }

    #[test]
    fn text_round_trip_and_golden_form() {
        let gates = vec![
            Gate::H(0),
            Gate::CPhase(0, 1, PI / 4.0),
            Gate::CNot(1, 2),
            Gate::CCPhase(0, 1, 2, PI),
            Gate::Swap(0, 2),
            Gate::X(1),
            Gate::Phase(2, -PI / 8.0),
        ];
        let text = circuit_to_text(&gates);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "h 0");
        assert_eq!(lines[1], "cphase 0 1 7.85398163397448279e-1");
        assert_eq!(lines[2], "cnot 1 2");
        assert_eq!(lines[4], "swap 0 2");
        let back = circuit_from_text(&text).unwrap();
        assert_eq!(back, gates);
        assert!(matches!(
            circuit_from_text("h 0\nbogus 1\n"),
            Err(CircuitError::Parse { line: 2, .. })
        ));
    }
}
