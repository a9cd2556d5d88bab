//! Split-operator time steps realized as phase kickback through an ancilla.
//!
//! The position registers never receive value-dependent phase gates. Instead
//! an m-qubit ancilla is prepared in the Fourier eigenstate of addition,
//! Σ_y e^{2πi y/M}|y⟩/√M with M = 2^m, and each diagonal factor e^{−iV δt}
//! is realized by *adding* an integer potential value into the ancilla:
//! adding q multiplies the whole state by e^{−2πi q/M}. One step is
//!
//!   V-kick → per-axis inverse QFT (position → momentum) → T-kick →
//!   per-axis QFT (momentum → position)
//!
//! which reproduces the classical split-operator reference built from the
//! same integer tables, up to float roundoff. The added value comes either
//! from a precomputed table (an opaque oracle op on the simulator) or from
//! the live reversible-arithmetic oracles, whose scratch registers are
//! shared across pairs/axes and restored by each kick. The ancilla must be
//! separable from the position registers after every step; `evolve` asserts
//! this with a product-state extraction at each snapshot.

use crate::arith::{self, ArithError};
use crate::grid::{self, GridError, GridSpec, GridWavefunction};
use crate::qsim::{
    iqft_gates, load_grid_state, qft_gates, tally_circuit, CircuitError, CircuitState, Gate,
    GateTally, Register, RegisterLayout,
};
use std::f64::consts::PI;
use thiserror::Error;

/// Largest deviation tolerated when factoring (positions) ⊗ (ancilla &
/// scratch) at a snapshot.
pub const SEPARABILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum KickbackError {
    #[error("plan needs {required} qubits, cap is {cap}")]
    Cap { required: usize, cap: usize },
    #[error("table has {got} entries, grid has {expected} points")]
    TableLength { expected: usize, got: usize },
    #[error("table entry {value} at index {index} does not fit {m} ancilla bits")]
    TableValue { index: usize, value: u64, m: usize },
    #[error("potential is not finite at grid point {index}")]
    NotFinite { index: usize },
    #[error("quantized potential needs {needed} bits at this time step, ancilla has {m}")]
    TableOverflow { needed: usize, m: usize },
    #[error("ancilla width {0} outside 1..=32")]
    BadAncilla(usize),
    #[error("{axes} axes cannot be split into particles of {dims} dimensions")]
    BadParticleSplit { axes: usize, dims: usize },
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("ancilla left entangled after step {step} (deviation {deviation:.3e})")]
    Separability { step: usize, deviation: f64 },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

// --- potential quantization ---------------------------------------------------

/// How the energy→counts scale is chosen.
#[derive(Debug, Clone, Copy)]
pub enum QuantizeMode {
    /// Physical time step given; scale = δt·M/2π. Errors if the range does
    /// not fit the ancilla.
    FixedStep(f64),
    /// Physical time step given, counts wrapped mod 2^m. Legitimate whenever
    /// the table only ever drives phases — those are modular anyway — so the
    /// reported error is pure rounding; the wrap is exact.
    FixedStepPeriodic(f64),
    /// Spend the full ancilla range: the potential span maps to 2^m − 1 and
    /// the implied time step is reported.
    MaxResolution,
}

/// Integer potential table plus the bookkeeping linking it back to energies.
#[derive(Debug, Clone)]
pub struct QuantizedPotential {
    pub table: Vec<u64>,
    /// Lowest sampled value; dropped as a global phase.
    pub v_min: f64,
    /// Counts per unit energy: table[g] = round((V(g) − v_min)·counts_per_unit).
    pub counts_per_unit: f64,
    /// Time step the table realizes: phase per step is 2π·table[g]/2^m ≡ V·δt.
    pub dt: f64,
    /// Worst |reconstructed − sampled| potential, in energy units.
    pub max_abs_error: f64,
}

impl QuantizedPotential {
    /// Worst-case per-step phase error of the table (radians).
    pub fn max_phase_error(&self) -> f64 {
        self.max_abs_error * self.dt
    }
}

/// Rounds sampled potential values onto the ancilla's integer range. The
/// minimum is subtracted first — it only ever contributes a global phase.
pub fn quantize_potential(
    values: &[f64],
    m: usize,
    mode: QuantizeMode,
) -> Result<QuantizedPotential, KickbackError> {
    if !(1..=32).contains(&m) {
        return Err(KickbackError::BadAncilla(m));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(KickbackError::NotFinite { index });
    }
    if values.is_empty() {
        return Err(KickbackError::TableLength {
            expected: 1,
            got: 0,
        });
    }
    let v_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = v_max - v_min;
    let modulus = (1u64 << m) as f64;
    let top = modulus - 1.0;
    let (counts_per_unit, dt) = match mode {
        QuantizeMode::FixedStep(dt) => {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(KickbackError::BadStep(dt));
            }
            let s = dt * modulus / (2.0 * PI);
            if (span * s).round() > top {
                let needed = ((span * s).round() + 1.0).log2().ceil() as usize;
                return Err(KickbackError::TableOverflow { needed, m });
            }
            (s, dt)
        }
        QuantizeMode::FixedStepPeriodic(dt) => {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(KickbackError::BadStep(dt));
            }
            let s = dt * modulus / (2.0 * PI);
            if span * s > (1u64 << 62) as f64 {
                return Err(KickbackError::TableOverflow { needed: 63, m });
            }
            (s, dt)
        }
        QuantizeMode::MaxResolution => {
            if span == 0.0 {
                // Constant potential: all-zero table; report the scaled-unit
                // default step δt = 2π/M.
                (0.0, 2.0 * PI / modulus)
            } else {
                let s = top / span;
                (s, 2.0 * PI * s / modulus)
            }
        }
    };
    let wrap = matches!(mode, QuantizeMode::FixedStepPeriodic(_));
    let table: Vec<u64> = values
        .iter()
        .map(|&v| {
            let rounded = ((v - v_min) * counts_per_unit).round();
            if wrap {
                (rounded as i64).rem_euclid(1i64 << m) as u64
            } else {
                rounded.min(top) as u64
            }
        })
        .collect();
    let max_abs_error = if counts_per_unit > 0.0 {
        if wrap {
            values
                .iter()
                .map(|&v| {
                    let scaled = (v - v_min) * counts_per_unit;
                    (scaled.round() - scaled).abs() / counts_per_unit
                })
                .fold(0.0, f64::max)
        } else {
            values
                .iter()
                .zip(&table)
                .map(|(&v, &t)| (t as f64 / counts_per_unit - (v - v_min)).abs())
                .fold(0.0, f64::max)
        }
    } else {
        0.0
    };
    Ok(QuantizedPotential {
        table,
        v_min,
        counts_per_unit,
        dt,
        max_abs_error,
    })
}

// --- plans ---------------------------------------------------------------------

/// Where the potential-energy integers come from.
#[derive(Debug, Clone)]
pub enum PotentialSource {
    /// Precomputed table over the flattened grid index; values < 2^m.
    Table(Vec<u64>),
    /// Live pairwise-Coulomb oracle run on the position registers themselves
    /// (oracle word width = qubits per axis). `constant` folds charges and
    /// output scaling into the writer; `window` is the squaring window.
    Coulomb {
        dims: usize,
        constant: u128,
        constant_width: u32,
        window: u32,
    },
}

/// Where the kinetic-energy integers come from (applied in momentum space).
#[derive(Debug, Clone)]
pub enum KineticSource {
    /// Precomputed table over the flattened momentum index (FFT bin order).
    Table(Vec<u64>),
    /// Live magnitude-square-scale oracle, one axis at a time; `scale` folds
    /// 1/(2·mass) and unit conversions into a classical constant.
    Square { scale: u128, scale_width: u32 },
}

/// Everything needed to build one split-operator kickback step.
#[derive(Debug, Clone)]
pub struct KickbackPlan {
    pub spec: GridSpec,
    pub ancilla_bits: usize,
    pub potential: PotentialSource,
    /// `None` skips the momentum half entirely (pure potential kick).
    pub kinetic: Option<KineticSource>,
    pub cap: usize,
}

/// One operation of a step: either plain gates or an integer-table addition
/// (an opaque oracle op at simulator level).
#[derive(Debug, Clone)]
pub enum StepOp {
    Gates(Vec<Gate>),
    TableAdd {
        source: Register,
        target: Register,
        table: Vec<u64>,
    },
}

/// A fully-lowered step, reusable across applications.
#[derive(Debug, Clone)]
pub struct StepCircuit {
    pub ops: Vec<StepOp>,
}

impl StepCircuit {
    pub fn apply(&self, state: &mut CircuitState) -> Result<(), KickbackError> {
        for op in &self.ops {
            match op {
                StepOp::Gates(gates) => state.apply_circuit(gates)?,
                StepOp::TableAdd {
                    source,
                    target,
                    table,
                } => state.apply_table_add(source, target, table, None)?,
            }
        }
        Ok(())
    }

    /// Applies the step only on the `control` qubit's |1⟩ half, as phase
    /// estimation requires.
    pub fn apply_controlled(
        &self,
        state: &mut CircuitState,
        control: usize,
    ) -> Result<(), KickbackError> {
        for op in &self.ops {
            match op {
                StepOp::Gates(gates) => state.apply_circuit_controlled(gates, control)?,
                StepOp::TableAdd {
                    source,
                    target,
                    table,
                } => state.apply_table_add(source, target, table, Some(control))?,
            }
        }
        Ok(())
    }

    /// Gate census of one step (pure function of the construction).
    pub fn tally(&self) -> GateTally {
        let mut t = GateTally::default();
        for op in &self.ops {
            match op {
                StepOp::Gates(gates) => t.add(&tally_circuit(gates)),
                StepOp::TableAdd { .. } => t.oracle_ops += 1,
            }
        }
        t
    }
}

/// A plan lowered onto a concrete register layout.
#[derive(Debug, Clone)]
pub struct PreparedPlan {
    pub layout: RegisterLayout,
    /// Position register ids, axis order, contiguous from qubit 0.
    pub positions: Vec<usize>,
    pub ancilla: usize,
    pub step: StepCircuit,
}

/// X on the low bit then QFT: |0⟩ → |1⟩ → Σ_y e^{2πi y/M}|y⟩/√M, the
/// eigenstate of addition with eigenvalue e^{−2πi q/M} for adding q.
pub fn prepare_ancilla_gates(anc: &Register) -> Vec<Gate> {
    let mut gates = vec![Gate::X(anc.qubit(0))];
    gates.extend(qft_gates(&anc.qubits()));
    gates
}

/// Synthetic register spanning all position registers; valid because they
/// are laid out contiguously from qubit 0 in axis order, so its value is the
/// flattened grid index.
fn joint_position_register(layout: &RegisterLayout, positions: &[usize]) -> Register {
    let first = layout.get(positions[0]);
    let width: usize = positions.iter().map(|&id| layout.get(id).width).sum();
    Register {
        name: "positions".into(),
        start: first.start,
        width,
    }
}

fn check_table(table: &[u64], expected: usize, m: usize) -> Result<(), KickbackError> {
    if table.len() != expected {
        return Err(KickbackError::TableLength {
            expected,
            got: table.len(),
        });
    }
    let top = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    if let Some((index, &value)) = table.iter().enumerate().find(|(_, &v)| v > top) {
        return Err(KickbackError::TableValue { index, value, m });
    }
    Ok(())
}

/// Builds the layout and lowers one step. No statevector is allocated, so
/// over-cap plans can still be tallied; `evolve` enforces the cap.
pub fn prepare(plan: &KickbackPlan) -> Result<PreparedPlan, KickbackError> {
    let spec = &plan.spec;
    let n = spec.qubits_per_axis();
    let m = plan.ancilla_bits;
    if !(1..=32).contains(&m) {
        return Err(KickbackError::BadAncilla(m));
    }

    let mut layout = RegisterLayout::new();
    let positions: Vec<usize> = (0..spec.axes())
        .map(|a| layout.add(&format!("x{a}"), n))
        .collect();
    let anc = layout.add("anc", m);
    let anc_reg = layout.get(anc).clone();
    let joint = joint_position_register(&layout, &positions);

    let mut ops = Vec::new();

    match &plan.potential {
        PotentialSource::Table(table) => {
            check_table(table, spec.total_points(), m)?;
            ops.push(StepOp::TableAdd {
                source: joint.clone(),
                target: anc_reg.clone(),
                table: table.clone(),
            });
        }
        PotentialSource::Coulomb {
            dims,
            constant,
            constant_width,
            window,
        } => {
            let dims = *dims;
            if dims == 0 || spec.axes() % dims != 0 || spec.axes() / dims < 2 {
                return Err(KickbackError::BadParticleSplit {
                    axes: spec.axes(),
                    dims,
                });
            }
            let particles = spec.axes() / dims;
            let (probe, regs) =
                arith::coulomb_pair_circuit(n, dims, *window, Some((*constant, *constant_width, m)))?;
            // Shared scratch, one set for all pairs (each pair restores it).
            let mut map = vec![usize::MAX; probe.layout.registers().len()];
            for &id in regs
                .x
                .iter()
                .chain(regs.scratch.iter())
                .chain(std::iter::once(&regs.r2))
            {
                let r = probe.layout.get(id);
                map[id] = layout.add(&format!("o_{}", r.name), r.width);
            }
            map[regs.acc.expect("writer requested")] = anc;
            for i in 0..particles {
                for j in i + 1..particles {
                    for k in 0..dims {
                        map[regs.pos_a[k]] = positions[i * dims + k];
                        map[regs.pos_b[k]] = positions[j * dims + k];
                    }
                    let stages = arith::remap_stages(&probe.stages, &map);
                    ops.push(StepOp::Gates(arith::lower::lower_stages(&stages, &layout)?));
                }
            }
        }
    }

    if let Some(kinetic) = &plan.kinetic {
        let mut to_momentum = Vec::new();
        let mut to_position = Vec::new();
        for &id in &positions {
            let qubits = layout.get(id).qubits();
            to_momentum.extend(iqft_gates(&qubits));
            to_position.extend(qft_gates(&qubits));
        }
        ops.push(StepOp::Gates(to_momentum));
        match kinetic {
            KineticSource::Table(table) => {
                check_table(table, spec.total_points(), m)?;
                ops.push(StepOp::TableAdd {
                    source: joint,
                    target: anc_reg,
                    table: table.clone(),
                });
            }
            KineticSource::Square { scale, scale_width } => {
                let (probe, regs) = arith::kinetic_circuit(n, m, *scale, *scale_width)?;
                let mut map = vec![usize::MAX; probe.layout.registers().len()];
                for &id in [regs.magnitude, regs.square].iter() {
                    let r = probe.layout.get(id);
                    map[id] = layout.add(&format!("k_{}", r.name), r.width);
                }
                map[regs.acc] = anc;
                for &pos in &positions {
                    map[regs.momentum] = pos;
                    let stages = arith::remap_stages(&probe.stages, &map);
                    ops.push(StepOp::Gates(arith::lower::lower_stages(&stages, &layout)?));
                }
            }
        }
        ops.push(StepOp::Gates(to_position));
    }

    Ok(PreparedPlan {
        layout,
        positions,
        ancilla: anc,
        step: StepCircuit { ops },
    })
}

impl PreparedPlan {
    pub fn required_qubits(&self) -> usize {
        self.layout.total_qubits()
    }

    /// Loads ψ₀ into the position registers and puts the ancilla into its
    /// addition eigenstate. Scratch registers stay |0⟩.
    pub fn initial_state(
        &self,
        psi0: &GridWavefunction,
        cap: usize,
    ) -> Result<CircuitState, KickbackError> {
        let mut state = load_grid_state(&self.layout, &self.positions, psi0, cap)?;
        state.apply_circuit(&prepare_ancilla_gates(self.layout.get(self.ancilla)))?;
        Ok(state)
    }
}

// --- integer reference tables ---------------------------------------------------

/// The integer potential the step actually applies, per flattened grid index
/// — a table source verbatim, or the arithmetic oracle mirrored classically.
pub fn potential_table(plan: &KickbackPlan) -> Result<Vec<u64>, KickbackError> {
    let spec = &plan.spec;
    let n = spec.qubits_per_axis();
    let m = plan.ancilla_bits;
    match &plan.potential {
        PotentialSource::Table(t) => {
            check_table(t, spec.total_points(), m)?;
            Ok(t.clone())
        }
        PotentialSource::Coulomb {
            dims,
            constant,
            constant_width,
            window,
        } => {
            let particles = spec.axes() / dims;
            let mask = (spec.points_per_axis() - 1) as u128;
            let modulus = 1u128 << m;
            Ok((0..spec.total_points())
                .map(|g| {
                    let coord = |p: usize, k: usize| {
                        ((g >> ((p * dims + k) * n)) as u128) & mask
                    };
                    let mut acc = 0u128;
                    for i in 0..particles {
                        for j in i + 1..particles {
                            let mut xa: Vec<u128> = (0..*dims).map(|k| coord(i, k)).collect();
                            let xb: Vec<u128> = (0..*dims).map(|k| coord(j, k)).collect();
                            acc = (acc
                                + arith::oracle::coulomb_acc(
                                    &mut xa,
                                    &xb,
                                    n,
                                    *window,
                                    *constant,
                                    *constant_width,
                                    m,
                                ))
                                % modulus;
                        }
                    }
                    acc as u64
                })
                .collect())
        }
    }
}

/// The integer kinetic table the step applies in momentum space, if any.
pub fn kinetic_table(plan: &KickbackPlan) -> Result<Option<Vec<u64>>, KickbackError> {
    let spec = &plan.spec;
    let n = spec.qubits_per_axis();
    let m = plan.ancilla_bits;
    match &plan.kinetic {
        None => Ok(None),
        Some(KineticSource::Table(t)) => {
            check_table(t, spec.total_points(), m)?;
            Ok(Some(t.clone()))
        }
        Some(KineticSource::Square { scale, scale_width }) => {
            let mask = (spec.points_per_axis() - 1) as u128;
            let modulus = 1u128 << m;
            Ok(Some(
                (0..spec.total_points())
                    .map(|g| {
                        let mut acc = 0u128;
                        for a in 0..spec.axes() {
                            let k = ((g >> (a * n)) as u128) & mask;
                            acc = (acc
                                + arith::oracle::kinetic_value(k, n, *scale, *scale_width, m))
                                % modulus;
                        }
                        acc as u64
                    })
                    .collect(),
            ))
        }
    }
}

/// Classical split-operator propagation with the *same* integer tables the
/// circuit adds — the reference every fidelity claim is measured against.
pub fn classical_reference(
    plan: &KickbackPlan,
    psi0: &GridWavefunction,
    steps: usize,
) -> Result<GridWavefunction, KickbackError> {
    let m = plan.ancilla_bits;
    let pos = grid::table_phases(&potential_table(plan)?, m);
    let mom = kinetic_table(plan)?.map(|t| grid::table_phases(&t, m));
    let mut wf = psi0.clone();
    for _ in 0..steps {
        match &mom {
            Some(mom) => wf.split_step_phases(&pos, mom)?,
            None => {
                for (a, ph) in wf.amplitudes_mut().iter_mut().zip(&pos) {
                    *a *= ph;
                }
            }
        }
    }
    Ok(wf)
}

/// |⟨a|b⟩|².
pub fn fidelity(a: &GridWavefunction, b: &GridWavefunction) -> f64 {
    a.overlap(b).norm_sqr()
}

// --- evolution -------------------------------------------------------------------

/// Result of a circuit-level propagation.
#[derive(Debug, Clone)]
pub struct Evolution {
    /// (step index, extracted state) at each stride multiple and at the end.
    pub snapshots: Vec<(usize, GridWavefunction)>,
    pub final_state: GridWavefunction,
    /// Worst product-state deviation seen at any snapshot.
    pub worst_deviation: f64,
    /// Total gate census over all steps.
    pub tally: GateTally,
}

/// Runs `steps` kickback steps at the gate level. Snapshots (with ancilla
/// separability asserted) are taken every `snapshot_stride` steps when the
/// stride is nonzero, and always after the final step.
pub fn evolve(
    plan: &KickbackPlan,
    psi0: &GridWavefunction,
    steps: usize,
    snapshot_stride: usize,
) -> Result<Evolution, KickbackError> {
    let prepared = prepare(plan)?;
    let required = prepared.required_qubits();
    if required > plan.cap {
        return Err(KickbackError::Cap {
            required,
            cap: plan.cap,
        });
    }
    let mut state = prepared.initial_state(psi0, plan.cap)?;
    let mut snapshots = Vec::new();
    let mut worst = 0.0f64;
    let mut extract = |state: &CircuitState, step: usize| -> Result<GridWavefunction, KickbackError> {
        match crate::qsim::extract_grid_state(
            state,
            &prepared.layout,
            &prepared.positions,
            &plan.spec,
            SEPARABILITY_TOLERANCE,
        ) {
            Ok(ex) => {
                worst = worst.max(ex.deviation);
                Ok(ex.wavefunction)
            }
            Err(CircuitError::NotProductState { deviation }) => {
                Err(KickbackError::Separability { step, deviation })
            }
            Err(e) => Err(e.into()),
        }
    };
    let mut final_state = None;
    for s in 1..=steps {
        prepared.step.apply(&mut state)?;
        let wanted = snapshot_stride != 0 && s % snapshot_stride == 0;
        if wanted || s == steps {
            let wf = extract(&state, s)?;
            if wanted {
                snapshots.push((s, wf.clone()));
            }
            if s == steps {
                final_state = Some(wf);
            }
        }
    }
    let final_state = match final_state {
        Some(wf) => wf,
        // Zero steps: the "final" state is the input.
        None => psi0.clone(),
    };
    Ok(Evolution {
        snapshots,
        final_state,
        worst_deviation: worst,
        tally: state.tally().clone(),
    })
}
