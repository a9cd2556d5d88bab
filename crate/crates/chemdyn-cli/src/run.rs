//! Scenario runners. Every runner computes its full result first and only
//! then writes files, so a failed run (bad config, cap breach, broken
//! contract) leaves no partial output directory. Manifests carry no
//! timestamps; the same config and seed produce byte-identical output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use chemdyn::arith::audit::{audit_circuit, audit_csv, AuditKind, AuditRow};
use chemdyn::grid::{self, kinetic_energies, propagate, GridSpec, GridWavefunction};
use chemdyn::kickback::{
    classical_reference, evolve, fidelity, prepare, quantize_potential, KickbackPlan,
    KineticSource, PotentialSource, QuantizeMode,
};
use chemdyn::measure::{
    phase_estimate, rate_constant, rate_quadrature, state_to_state, AffineMap1D, BoxRegion,
    IncomingPacket, ObservableRecord, PhaseEstimationJob, PhaseUnitary, RateEstimate, RateJob,
    RegionMap,
};
use chemdyn::prep::{harmonic_eigenstate, thermal_sample, HarmonicWell};
use chemdyn::qsim::GateTally;
use chemdyn::resources::{
    bo_gates_per_nuclear_step, crossover_atoms, feasibility_report, write_crossover_curves,
    write_gate_curve, write_qubit_curve, FeasibilityReport,
};

use crate::config::{
    hash_value, AuditCfg, CompareCfg, PhaseEstimateCfg, PropagateCfg, RateCfg, ResourcesCfg,
    Scenario, ScenarioKind, StateToStateCfg,
};
use crate::{map_kickback, map_measure, CliError};

// --- manifest ---------------------------------------------------------------------

pub const MANIFEST_SCHEMA: u32 = 1;

/// The run record written next to every output file.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub kind: String,
    pub tool_version: &'static str,
    pub seed: u64,
    pub config_hash: String,
    /// Effective configuration, defaults folded in.
    pub config: Value,
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<ObservableRecord>,
    pub outputs: Vec<String>,
}

/// What a runner produces besides files.
#[derive(Debug, Default)]
struct RunOutput {
    metrics: BTreeMap<String, f64>,
    counts: BTreeMap<String, u64>,
    observables: Vec<ObservableRecord>,
}

/// Files staged in memory until the whole run has succeeded.
#[derive(Debug, Default)]
struct Staging {
    files: Vec<(String, Vec<u8>)>,
}

impl Staging {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_csv(&mut self, name: &str, writer: csv::Writer<Vec<u8>>) -> Result<(), CliError> {
        let bytes = writer
            .into_inner()
            .map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
        self.add(name, bytes);
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    fn flush(self, out: &Path) -> Result<(), CliError> {
        fs::create_dir_all(out)?;
        for (name, bytes) in self.files {
            fs::write(out.join(&name), bytes)?;
        }
        Ok(())
    }
}

fn tally_counts(prefix: &str, tally: &GateTally, counts: &mut BTreeMap<String, u64>) {
    counts.insert(format!("{prefix}gates_single_qubit"), tally.single_qubit);
    counts.insert(format!("{prefix}gates_cnot"), tally.cnot);
    counts.insert(format!("{prefix}gates_controlled_phase"), tally.controlled_phase);
    counts.insert(format!("{prefix}gates_doubly_controlled_phase"), tally.doubly_controlled_phase);
    counts.insert(format!("{prefix}gates_swap"), tally.swap);
    counts.insert(format!("{prefix}oracle_ops"), tally.oracle_ops);
}

// --- entry points -----------------------------------------------------------------

/// Builds everything cheap (grids, potentials, tables, plans) without
/// propagating; the checks behind exit code 2.
pub fn validate_scenario(sc: &Scenario) -> Result<(), CliError> {
    match &sc.kind {
        ScenarioKind::ArithmeticAudit(cfg) => validate_audit(cfg),
        ScenarioKind::Compare(cfg) => build_compare(cfg, sc).map(|_| ()),
        ScenarioKind::PhaseEstimate(cfg) => build_phase(cfg, sc).map(|_| ()),
        ScenarioKind::Propagate(cfg) => build_propagate(cfg).map(|_| ()),
        ScenarioKind::Rate(cfg) => build_rate(cfg, sc).map(|_| ()),
        ScenarioKind::Resources(cfg) => validate_resources(cfg),
        ScenarioKind::StateToState(cfg) => build_state_to_state(cfg).map(|_| ()),
    }
}

/// Runs the scenario and writes its outputs plus `manifest.json` under
/// `out`.
pub fn run_scenario(sc: &Scenario, out: &Path) -> Result<Manifest, CliError> {
    let mut stage = Staging::default();
    let result = match &sc.kind {
        ScenarioKind::ArithmeticAudit(cfg) => run_audit(cfg, &mut stage),
        ScenarioKind::Compare(cfg) => run_compare(cfg, sc, &mut stage),
        ScenarioKind::PhaseEstimate(cfg) => run_phase(cfg, sc, &mut stage),
        ScenarioKind::Propagate(cfg) => run_propagate(cfg, &mut stage),
        ScenarioKind::Rate(cfg) => run_rate(cfg, sc, &mut stage),
        ScenarioKind::Resources(cfg) => run_resources(cfg, &mut stage),
        ScenarioKind::StateToState(cfg) => run_state_to_state(cfg, sc, &mut stage),
    }?;
    let mut outputs = stage.names();
    outputs.push("manifest.json".to_string());
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        kind: sc.kind.name().to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: sc.seed,
        config_hash: sc.hash.clone(),
        config: sc.canonical.clone(),
        metrics: result.metrics,
        counts: result.counts,
        observables: result.observables,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    stage.add("manifest.json", text.into_bytes());
    stage.flush(out)?;
    Ok(manifest)
}

// --- propagate ---------------------------------------------------------------------

struct BuiltPropagate {
    spec: GridSpec,
    values: Vec<f64>,
    masses: Vec<f64>,
    psi0: GridWavefunction,
    regions: Option<(RegionMap, Vec<String>)>,
}

fn build_regions(
    spec: &GridSpec,
    regions: &[crate::config::RegionCfg],
    path: &str,
) -> Result<(RegionMap, Vec<String>), CliError> {
    let mut labels: Vec<String> = Vec::new();
    let mut boxes: Vec<Vec<BoxRegion>> = Vec::new();
    for (i, r) in regions.iter().enumerate() {
        let p = format!("{path}[{i}]");
        if r.lo.len() != spec.axes() || r.hi.len() != spec.axes() {
            return Err(CliError::validation(
                &p,
                format!("lo/hi need one bound per axis ({})", spec.axes()),
            ));
        }
        for (a, (&lo, &hi)) in r.lo.iter().zip(&r.hi).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CliError::validation(
                    &format!("{p}.lo[{a}]"),
                    format!("need finite lo < hi, got [{lo}, {hi})"),
                ));
            }
        }
        if labels.contains(&r.label) {
            return Err(CliError::validation(&p, format!("duplicate label {:?}", r.label)));
        }
        labels.push(r.label.clone());
        boxes.push(vec![BoxRegion { lo: r.lo.clone(), hi: r.hi.clone() }]);
    }
    // Uncovered points fall into an implicit catch-all region.
    labels.push("elsewhere".to_string());
    boxes.push(Vec::new());
    let map = RegionMap::build(spec, &boxes, boxes.len() - 1).map_err(map_measure)?;
    Ok((map, labels))
}

fn build_propagate(cfg: &PropagateCfg) -> Result<BuiltPropagate, CliError> {
    let spec = cfg.grid.build("grid")?;
    crate::config::require_positive("dt", cfg.dt)?;
    if cfg.steps == 0 {
        return Err(CliError::validation("steps", "need at least one step"));
    }
    let values = cfg.potential.values("potential", &spec)?;
    let masses = crate::config::build_masses(&cfg.masses, spec.axes(), "masses")?;
    let psi0 = cfg.initial.build(&spec, "initial")?;
    let regions = if cfg.regions.is_empty() {
        None
    } else {
        Some(build_regions(&spec, &cfg.regions, "regions")?)
    };
    Ok(BuiltPropagate { spec, values, masses, psi0, regions })
}

fn run_propagate(cfg: &PropagateCfg, stage: &mut Staging) -> Result<RunOutput, CliError> {
    let built = build_propagate(cfg)?;
    let BuiltPropagate { spec, values, masses, psi0, regions } = built;

    let mut header: Vec<String> = vec!["step".into(), "time".into(), "norm".into()];
    for a in 0..spec.axes() {
        header.push(format!("x{a}"));
        header.push(format!("p{a}"));
    }
    if let Some((_, labels)) = &regions {
        for label in labels {
            header.push(format!("prob_{label}"));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut wf = psi0;
    let record = |w: &mut csv::Writer<Vec<u8>>,
                  stage: &mut Staging,
                  step: usize,
                  wf: &GridWavefunction|
     -> Result<(), CliError> {
        let mut row: Vec<f64> = vec![step as f64, step as f64 * cfg.dt, wf.norm_sqr()];
        for a in 0..wf.spec().axes() {
            row.push(wf.position_expectation(a));
            row.push(wf.momentum_expectation(a));
        }
        if let Some((map, _)) = &regions {
            row.extend(map.probabilities(wf).map_err(map_measure)?);
        }
        let text: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        w.write_record(&text).map_err(|e| CliError::Runtime(e.to_string()))?;
        if cfg.write_wavefunctions {
            let mut buf = Vec::new();
            grid::write_csv(wf, &mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
            stage.add(&format!("wavefunction_step{step:06}.csv"), buf);
        }
        Ok(())
    };

    record(&mut w, stage, 0, &wf)?;
    let mut snapshots = 1u64;
    let mut done = 0usize;
    while done < cfg.steps {
        let chunk = if cfg.snapshot_stride == 0 {
            cfg.steps - done
        } else {
            cfg.snapshot_stride.min(cfg.steps - done)
        };
        propagate(&mut wf, &values, &masses, cfg.dt, chunk)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        done += chunk;
        record(&mut w, stage, done, &wf)?;
        snapshots += 1;
    }
    stage.add_csv("observables.csv", w)?;

    let mut out = RunOutput::default();
    out.metrics.insert("final_norm".into(), wf.norm_sqr());
    for a in 0..spec.axes() {
        out.metrics.insert(format!("final_x{a}"), wf.position_expectation(a));
        out.metrics.insert(format!("final_p{a}"), wf.momentum_expectation(a));
    }
    if let Some((map, labels)) = &regions {
        let probs = map.probabilities(&wf).map_err(map_measure)?;
        for (label, p) in labels.iter().zip(&probs) {
            out.metrics.insert(format!("final_prob_{label}"), *p);
        }
    }
    out.counts.insert("steps".into(), cfg.steps as u64);
    out.counts.insert("snapshots".into(), snapshots);
    Ok(out)
}

// --- compare -----------------------------------------------------------------------

struct BuiltCompare {
    plan: KickbackPlan,
    psi0: GridWavefunction,
    /// Worst per-point potential rounding (energy units); zero for user
    /// tables, which are exact by definition.
    potential_error: f64,
    /// Step the tables realize (= configured dt except for max-resolution).
    dt_effective: f64,
}

fn build_compare(cfg: &CompareCfg, sc: &Scenario) -> Result<BuiltCompare, CliError> {
    let spec = cfg.grid.build("grid")?;
    crate::config::require_positive("dt", cfg.dt)?;
    if cfg.steps == 0 {
        return Err(CliError::validation("steps", "need at least one step"));
    }
    let m = cfg.ancilla_bits;
    if !(1..=32).contains(&m) {
        return Err(CliError::validation("ancilla_bits", "must be between 1 and 32"));
    }
    let masses = crate::config::build_masses(&cfg.masses, spec.axes(), "masses")?;
    let psi0 = cfg.initial.build(&spec, "initial")?;

    let (potential, potential_error, dt_effective) = if cfg.potential.name == "table" {
        let table = cfg.potential.oracle_table("potential", &spec, m, &sc.base_dir)?;
        (PotentialSource::Table(table), 0.0, cfg.dt)
    } else {
        let values = cfg.potential.values("potential", &spec)?;
        let q = quantize_potential(&values, m, cfg.quantize.mode(cfg.dt)).map_err(map_kickback)?;
        (PotentialSource::Table(q.table.clone()), q.max_abs_error, q.dt)
    };

    let kinetic = if cfg.kinetic {
        let t_values = kinetic_energies(&spec, &masses)
            .map_err(|e| CliError::validation("masses", e))?;
        // The kinetic table must realize the same physical step as the
        // potential table or the split step simulates a different dt.
        let mode = match cfg.quantize.mode(cfg.dt) {
            QuantizeMode::FixedStepPeriodic(_) => QuantizeMode::FixedStepPeriodic(dt_effective),
            _ => QuantizeMode::FixedStep(dt_effective),
        };
        let q = quantize_potential(&t_values, m, mode).map_err(map_kickback)?;
        Some(KineticSource::Table(q.table))
    } else {
        None
    };

    let plan = KickbackPlan {
        spec,
        ancilla_bits: m,
        potential,
        kinetic,
        cap: sc.qubit_cap,
    };
    Ok(BuiltCompare { plan, psi0, potential_error, dt_effective })
}

fn run_compare(cfg: &CompareCfg, sc: &Scenario, stage: &mut Staging) -> Result<RunOutput, CliError> {
    let built = build_compare(cfg, sc)?;
    let evolution = evolve(&built.plan, &built.psi0, cfg.steps, cfg.snapshot_stride)
        .map_err(map_kickback)?;

    // Snapshot steps plus the final step, deduplicated when the stride lands
    // on it.
    let mut checkpoints: Vec<(usize, &GridWavefunction)> =
        evolution.snapshots.iter().map(|(s, wf)| (*s, wf)).collect();
    if checkpoints.last().map(|(s, _)| *s) != Some(cfg.steps) {
        checkpoints.push((cfg.steps, &evolution.final_state));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "fidelity", "max_deviation"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut final_fidelity = 1.0;
    let mut final_deviation = 0.0;
    for (s, circuit_wf) in &checkpoints {
        let reference = classical_reference(&built.plan, &built.psi0, *s).map_err(map_kickback)?;
        let f = fidelity(circuit_wf, &reference);
        let dev = circuit_wf
            .amplitudes()
            .iter()
            .zip(reference.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        w.write_record([s.to_string(), format!("{f:.15}"), format!("{dev:.6e}")])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        if *s == cfg.steps {
            final_fidelity = f;
            final_deviation = dev;
        }
    }
    stage.add_csv("fidelity.csv", w)?;

    if let Some(min) = cfg.min_fidelity {
        if final_fidelity < min {
            return Err(CliError::Contract(format!(
                "final fidelity {final_fidelity:.9} fell below the configured minimum {min}"
            )));
        }
    }

    let mut out = RunOutput::default();
    out.metrics.insert("fidelity".into(), final_fidelity);
    out.metrics.insert("max_deviation".into(), final_deviation);
    out.metrics.insert("worst_separability_deviation".into(), evolution.worst_deviation);
    out.metrics.insert("potential_rounding_error".into(), built.potential_error);
    out.metrics.insert("dt_effective".into(), built.dt_effective);
    tally_counts("", &evolution.tally, &mut out.counts);
    out.counts.insert("steps".into(), cfg.steps as u64);
    Ok(out)
}

// --- arithmetic audit ----------------------------------------------------------------

fn audit_widths(cfg: &AuditCfg) -> Result<Vec<(AuditKind, usize)>, CliError> {
    let mut jobs = Vec::new();
    for (field, widths, kinds) in [
        (
            "widths",
            &cfg.widths,
            &[AuditKind::Add, AuditKind::ControlledAdd, AuditKind::Multiply][..],
        ),
        ("coulomb_widths", &cfg.coulomb_widths, &[AuditKind::CoulombPair][..]),
    ] {
        for &m in widths {
            if !(2..=64).contains(&m) {
                return Err(CliError::validation(
                    field,
                    format!("register width {m} out of range (2..=64)"),
                ));
            }
            for &kind in kinds {
                jobs.push((kind, m));
            }
        }
    }
    if jobs.is_empty() {
        return Err(CliError::validation("widths", "nothing to audit"));
    }
    Ok(jobs)
}

fn validate_audit(cfg: &AuditCfg) -> Result<(), CliError> {
    audit_widths(cfg).map(|_| ())
}

fn run_audit(cfg: &AuditCfg, stage: &mut Staging) -> Result<RunOutput, CliError> {
    let jobs = audit_widths(cfg)?;
    let mut rows: Vec<AuditRow> = Vec::with_capacity(jobs.len());
    for (kind, m) in jobs {
        rows.push(audit_circuit(kind, m).map_err(|e| CliError::Validation(e.to_string()))?);
    }
    stage.add("audit.csv", audit_csv(&rows).into_bytes());

    let mut out = RunOutput::default();
    let mut worst = 0.0f64;
    for row in &rows {
        out.metrics
            .insert(format!("ratio_{}_m{}", row.kind.name(), row.m), row.ratio());
        worst = worst.max((row.ratio() - 1.0).abs());
    }
    out.metrics.insert("worst_ratio_error".into(), worst);
    out.counts.insert("rows".into(), rows.len() as u64);
    Ok(out)
}

// --- resources -----------------------------------------------------------------------

fn validate_resources(cfg: &ResourcesCfg) -> Result<(), CliError> {
    let map = |e: chemdyn::resources::ResourceError| CliError::Validation(e.to_string());
    // One row of each artifact exercises every parameter check.
    feasibility_report(cfg.gate_budget, cfg.qubit_budget, cfg.grid_qubits, cfg.precision_bits, cfg.steps)
        .map(|_| ())
        .map_err(map)?;
    if cfg.particles_max < 2 {
        return Err(CliError::validation("particles_max", "need at least two particles"));
    }
    if let Some(cx) = &cfg.crossover {
        if cx.atoms_max < 3 {
            return Err(CliError::validation("crossover.atoms_max", "need at least three atoms"));
        }
        bo_gates_per_nuclear_step(cx.degree, 3, cx.precision_bits).map(|_| ()).map_err(map)?;
        for &z in &cx.atomic_numbers {
            crossover_atoms(z, cx.degree, cx.precision_bits, cx.step_ratio).map(|_| ()).map_err(map)?;
        }
    }
    Ok(())
}

fn feasibility_csv(report: &FeasibilityReport) -> Vec<u8> {
    let mut s = String::from("particles,qubits,gates_total,fits_qubits,fits_gates\n");
    for row in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            row.particles,
            row.qubits,
            row.total_gates.decimal(),
            row.fits_qubits,
            row.fits_gates
        ));
    }
    s.into_bytes()
}

fn run_resources(cfg: &ResourcesCfg, stage: &mut Staging) -> Result<RunOutput, CliError> {
    validate_resources(cfg)?;
    let map = |e: chemdyn::resources::ResourceError| CliError::Validation(e.to_string());

    let report = feasibility_report(
        cfg.gate_budget,
        cfg.qubit_budget,
        cfg.grid_qubits,
        cfg.precision_bits,
        cfg.steps,
    )
    .map_err(map)?;
    stage.add("feasibility.csv", feasibility_csv(&report));

    let particles = 2..=cfg.particles_max;
    let mut buf = Vec::new();
    write_qubit_curve(&mut buf, cfg.grid_qubits, cfg.precision_bits, particles.clone())
        .map_err(map)?;
    stage.add("qubits.csv", buf);
    let mut buf = Vec::new();
    write_gate_curve(&mut buf, cfg.precision_bits, cfg.steps, particles).map_err(map)?;
    stage.add("gates.csv", buf);

    let mut out = RunOutput::default();
    out.counts.insert("max_particles".into(), report.max_particles);
    out.counts.insert("frontier_rows".into(), report.rows.len() as u64);
    out.metrics.insert("max_particles".into(), report.max_particles as f64);

    if let Some(cx) = &cfg.crossover {
        let mut buf = Vec::new();
        write_crossover_curves(
            &mut buf,
            cx.degree,
            cx.precision_bits,
            cx.step_ratio,
            &cx.atomic_numbers,
            3..=cx.atoms_max,
        )
        .map_err(map)?;
        stage.add("crossover.csv", buf);
        for &z in &cx.atomic_numbers {
            let atoms = crossover_atoms(z, cx.degree, cx.precision_bits, cx.step_ratio).map_err(map)?;
            out.metrics.insert(format!("crossover_atoms_z{z}"), atoms as f64);
            out.counts.insert(format!("crossover_atoms_z{z}"), atoms);
        }
    }
    Ok(out)
}

// --- rate -----------------------------------------------------------------------------

fn build_rate(cfg: &RateCfg, sc: &Scenario) -> Result<RateJob, CliError> {
    let spec = cfg.grid.build("grid")?;
    if spec.axes() != 1 {
        return Err(CliError::validation("grid.axes", "rate scenarios are one-dimensional"));
    }
    crate::config::require_positive("dt", cfg.dt)?;
    crate::config::require_positive("mass", cfg.mass)?;
    if cfg.steps == 0 {
        return Err(CliError::validation("steps", "need at least one step"));
    }
    let ext = spec.extent(0);
    if !(cfg.product_boundary.is_finite()
        && cfg.product_boundary > ext.min
        && cfg.product_boundary < ext.max)
    {
        return Err(CliError::validation(
            "product_boundary",
            format!("must lie inside the grid ({}, {})", ext.min, ext.max),
        ));
    }
    let values = cfg.potential.values("potential", &spec)?;
    let regions = vec![
        vec![BoxRegion { lo: vec![ext.min], hi: vec![cfg.product_boundary] }],
        vec![BoxRegion { lo: vec![cfg.product_boundary], hi: vec![ext.max] }],
    ];
    let map = RegionMap::build(&spec, &regions, 0).map_err(map_measure)?;
    let job = RateJob {
        thermal: cfg.thermal.build(),
        map,
        product_labels: vec![1],
        potential: values,
        masses: vec![cfg.mass],
        dt: cfg.dt,
        steps: cfg.steps,
        packet: IncomingPacket {
            center: cfg.packet.center,
            width: cfg.packet.width,
            direction: cfg.packet.direction,
        },
        samples: cfg.samples.max(1),
        seed: sc.seed,
    };
    // A zero-step quadrature surfaces thermal-spec and packet problems
    // (aliasing, boundary clipping) without paying for propagation.
    rate_quadrature(&RateJob { steps: 0, ..job.clone() }).map_err(map_measure)?;
    Ok(job)
}

fn rate_record(name: &str, est: &RateEstimate, job: &RateJob, hash: &str) -> ObservableRecord {
    ObservableRecord {
        observable: name.to_string(),
        value: est.value,
        stderr: (est.stderr > 0.0).then_some(est.stderr),
        shots: (est.samples > 0).then_some(est.samples),
        seed: (est.samples > 0).then_some(job.seed),
        scenario: hash.to_string(),
    }
}

fn run_rate(cfg: &RateCfg, sc: &Scenario, stage: &mut Staging) -> Result<RunOutput, CliError> {
    let job = build_rate(cfg, sc)?;

    let ensemble = thermal_sample(&job.thermal, sc.seed, 0)
        .map_err(|e| CliError::validation("thermal", e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "e_level", "energy", "kinetic_energy", "weight"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for bin in &ensemble.bins {
        w.write_record([
            bin.level.to_string(),
            format!("{:.12e}", bin.e_level),
            format!("{:.12e}", bin.energy),
            format!("{:.12e}", bin.kinetic_energy()),
            format!("{:.12e}", bin.weight),
        ])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    stage.add_csv("bins.csv", w)?;

    let quad = rate_quadrature(&job).map_err(map_measure)?;
    let mut out = RunOutput::default();
    out.metrics.insert("k_quadrature".into(), quad.value);
    out.metrics.insert("mean_probability".into(), quad.mean_probability);
    out.metrics.insert("accessible_weight".into(), quad.accessible_weight);
    out.metrics.insert("skipped_weight".into(), quad.skipped_weight);
    out.counts.insert("bins".into(), ensemble.bins.len() as u64);
    out.counts.insert("steps".into(), cfg.steps as u64);
    out.observables.push(rate_record("rate_constant_quadrature", &quad, &job, &sc.hash));

    if cfg.samples > 0 {
        let mc = rate_constant(&job).map_err(map_measure)?;
        out.metrics.insert("k_monte_carlo".into(), mc.value);
        out.metrics.insert("k_monte_carlo_stderr".into(), mc.stderr);
        out.counts.insert("samples".into(), mc.samples as u64);
        out.counts.insert("rejected_samples".into(), mc.rejected as u64);
        out.observables.push(rate_record("rate_constant_monte_carlo", &mc, &job, &sc.hash));
    }
    Ok(out)
}

// --- state-to-state ---------------------------------------------------------------------

struct BuiltStateToState {
    psi: GridWavefunction,
    map: AffineMap1D,
    product_well: HarmonicWell,
    product_grid: GridSpec,
}

fn build_state_to_state(cfg: &StateToStateCfg) -> Result<BuiltStateToState, CliError> {
    let source_grid = cfg.source.grid.build("source.grid")?;
    if source_grid.axes() != 1 {
        return Err(CliError::validation("source.grid.axes", "state-to-state is one-dimensional"));
    }
    let source_well = cfg.source.well.build("source.well")?;
    if cfg.mixture.is_empty() {
        return Err(CliError::validation("mixture", "need at least one component"));
    }
    let mut total = 0.0;
    let mut seen = Vec::new();
    for (i, c) in cfg.mixture.iter().enumerate() {
        crate::config::require_positive(&format!("mixture[{i}].weight"), c.weight)?;
        if seen.contains(&c.level) {
            return Err(CliError::validation(
                &format!("mixture[{i}].level"),
                format!("level {} appears twice", c.level),
            ));
        }
        seen.push(c.level);
        total += c.weight;
    }

    let mut amps = Vec::new();
    for (i, c) in cfg.mixture.iter().enumerate() {
        let basis = harmonic_eigenstate(c.level, &source_well, &source_grid)
            .map_err(|e| CliError::validation(&format!("mixture[{i}]"), e))?;
        let coeff = (c.weight / total).sqrt();
        if amps.is_empty() {
            amps = basis.amplitudes().iter().map(|b| coeff * b).collect();
        } else {
            for (a, b) in amps.iter_mut().zip(basis.amplitudes()) {
                *a += coeff * b;
            }
        }
    }
    let psi = GridWavefunction::from_amplitudes(source_grid, amps)
        .map_err(|e| CliError::validation("mixture", e))?;

    let map = match &cfg.map {
        None => AffineMap1D::identity(),
        Some(m) => {
            crate::config::require_finite("map.offset", m.offset)?;
            if !(m.scale.is_finite() && m.scale != 0.0) {
                return Err(CliError::validation("map.scale", "must be finite and nonzero"));
            }
            AffineMap1D { scale: m.scale, offset: m.offset }
        }
    };

    let product_grid = cfg.product.grid.build("product.grid")?;
    if product_grid.axes() != 1 {
        return Err(CliError::validation("product.grid.axes", "state-to-state is one-dimensional"));
    }
    let product_well = cfg.product.well.build("product.well")?;
    // Probe the highest requested level so basis problems surface at
    // validation time with the right path.
    harmonic_eigenstate(cfg.max_level, &product_well, &product_grid)
        .map_err(|e| CliError::validation("max_level", e))?;
    Ok(BuiltStateToState { psi, map, product_well, product_grid })
}

fn run_state_to_state(
    cfg: &StateToStateCfg,
    sc: &Scenario,
    stage: &mut Staging,
) -> Result<RunOutput, CliError> {
    let built = build_state_to_state(cfg)?;
    let st = state_to_state(
        &built.psi,
        &built.map,
        &built.product_well,
        &built.product_grid,
        cfg.max_level,
    )
    .map_err(map_measure)?;

    if let Some(max) = cfg.max_residual {
        if st.residual > max {
            return Err(CliError::Contract(format!(
                "unassigned probability {:.3e} exceeds the configured maximum {max:.3e}",
                st.residual
            )));
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "population"]).map_err(|e| CliError::Runtime(e.to_string()))?;
    for (v, p) in st.populations.iter().enumerate() {
        w.write_record([v.to_string(), format!("{p:.15e}")])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    stage.add_csv("populations.csv", w)?;

    let total: f64 = st.populations.iter().sum();
    let mut out = RunOutput::default();
    for (v, p) in st.populations.iter().enumerate() {
        out.metrics.insert(format!("population_{v}"), *p);
    }
    out.metrics.insert("residual".into(), st.residual);
    out.metrics.insert("completeness".into(), total + st.residual);
    out.counts.insert("levels".into(), st.populations.len() as u64);
    let _ = sc;
    Ok(out)
}

// --- phase estimate ---------------------------------------------------------------------

struct BuiltPhase {
    plan: KickbackPlan,
    well: HarmonicWell,
    grid: GridSpec,
}

fn build_phase(cfg: &PhaseEstimateCfg, sc: &Scenario) -> Result<BuiltPhase, CliError> {
    let grid = cfg.grid.build("grid")?;
    if grid.axes() != 1 {
        return Err(CliError::validation("grid.axes", "phase estimation runs one-dimensional"));
    }
    let well = cfg.well.build("well")?;
    crate::config::require_positive("dt", cfg.dt)?;
    let m = cfg.ancilla_bits;
    if !(1..=32).contains(&m) {
        return Err(CliError::validation("ancilla_bits", "must be between 1 and 32"));
    }
    if cfg.readout_bits == 0 {
        return Err(CliError::validation("readout_bits", "need at least one readout qubit"));
    }
    if cfg.shots == 0 {
        return Err(CliError::validation("shots", "need at least one shot"));
    }
    if cfg.levels.is_empty() {
        return Err(CliError::validation("levels", "need at least one level"));
    }
    for (i, &v) in cfg.levels.iter().enumerate() {
        harmonic_eigenstate(v, &well, &grid)
            .map_err(|e| CliError::validation(&format!("levels[{i}]"), e))?;
    }

    let v_values: Vec<f64> =
        (0..grid.total_points()).map(|g| well.potential(grid.coordinate(0, g))).collect();
    let t_values = kinetic_energies(&grid, &[well.mass])
        .map_err(|e| CliError::validation("well.mass", e))?;
    // Periodic quantization keeps the eigenphases exact per table entry even
    // when energies wrap the ancilla range — phases are modular anyway.
    let vq = quantize_potential(&v_values, m, QuantizeMode::FixedStepPeriodic(cfg.dt))
        .map_err(map_kickback)?;
    let tq = quantize_potential(&t_values, m, QuantizeMode::FixedStepPeriodic(cfg.dt))
        .map_err(map_kickback)?;
    let plan = KickbackPlan {
        spec: grid.clone(),
        ancilla_bits: m,
        potential: PotentialSource::Table(vq.table),
        kinetic: Some(KineticSource::Table(tq.table)),
        cap: sc.qubit_cap,
    };
    Ok(BuiltPhase { plan, well, grid })
}

fn run_phase(cfg: &PhaseEstimateCfg, sc: &Scenario, stage: &mut Staging) -> Result<RunOutput, CliError> {
    let built = build_phase(cfg, sc)?;
    let prepared = prepare(&built.plan).map_err(map_kickback)?;
    let required = prepared.required_qubits() + cfg.readout_bits;
    if required > sc.qubit_cap {
        return Err(CliError::ResourceCap(format!(
            "{required} qubits requested (step registers plus readout), cap is {}",
            sc.qubit_cap
        )));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "bin", "phase", "count", "probability"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut out = RunOutput::default();
    let mut phases = Vec::new();
    for (i, &v) in cfg.levels.iter().enumerate() {
        let eigen = harmonic_eigenstate(v, &built.well, &built.grid)
            .map_err(|e| CliError::validation(&format!("levels[{i}]"), e))?;
        let system = prepared
            .initial_state(&eigen, sc.qubit_cap)
            .map_err(map_kickback)?
            .amplitudes()
            .to_vec();
        let job = PhaseEstimationJob {
            readout_bits: cfg.readout_bits,
            shots: cfg.shots,
            // Decorrelates levels while staying reproducible per scenario.
            seed: sc.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        };
        let est = phase_estimate(&job, PhaseUnitary::Step(&prepared.step), &system, sc.qubit_cap)
            .map_err(map_measure)?;
        for (bin, &count) in est.measurement.counts.iter().enumerate() {
            w.write_record([
                v.to_string(),
                bin.to_string(),
                format!("{:.12}", est.bin_phase(bin)),
                count.to_string(),
                format!("{:.12e}", est.measurement.probabilities[bin]),
            ])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        let phase = est.modal_phase();
        out.metrics.insert(format!("phase_level_{v}"), phase);
        phases.push((v, phase));
    }
    stage.add_csv("histogram.csv", w)?;

    // One split step advances level v by phase −E_v·dt/2π (mod 1), so the
    // circular gap between levels tracks their energy spacing.
    let per_quantum = built.well.omega * cfg.dt / (2.0 * std::f64::consts::PI);
    for pair in phases.windows(2) {
        let ((va, pa), (vb, pb)) = (pair[0], pair[1]);
        let gap = (pa - pb).rem_euclid(1.0);
        out.metrics.insert(format!("gap_level_{va}_{vb}"), gap);
        let quanta = vb.abs_diff(va) as f64;
        out.metrics
            .insert(format!("expected_gap_level_{va}_{vb}"), (quanta * per_quantum).rem_euclid(1.0));
    }
    out.metrics
        .insert("bin_width".into(), 1.0 / (1u64 << cfg.readout_bits) as f64);
    tally_counts("step_", &prepared.step.tally(), &mut out.counts);
    out.counts.insert("shots_per_level".into(), cfg.shots as u64);
    out.counts.insert("levels".into(), cfg.levels.len() as u64);
    Ok(out)
}

// --- reference figures --------------------------------------------------------------

/// Writes the standard resource-analysis tables (qubit and gate scaling at
/// 10 and 20 precision bits, the feasibility frontier for a 10^9-gate,
/// 300-qubit machine, and the explicit-vs-surface crossover curves).
pub fn emit_figures(out: &Path) -> Result<Manifest, CliError> {
    let n = 10usize;
    let steps = 1000u64;
    let particles = || 2u64..=12;
    let config = json!({
        "version": 1,
        "kind": "figures",
        "seed": 0,
        "units": "atomic",
        "grid_qubits": n,
        "precision_bits": [10, 20],
        "gate_budget": 1_000_000_000u64,
        "qubit_budget": 300,
        "steps": steps,
        "particles_max": 12,
        "crossover": {
            "degree": 15,
            "precision_bits": 20,
            "step_ratio": 1000,
            "atomic_numbers": [1, 10, 50, 100],
            "atoms_max": 8
        }
    });
    let map = |e: chemdyn::resources::ResourceError| CliError::Runtime(e.to_string());

    let mut stage = Staging::default();
    for m in [10usize, 20] {
        let mut buf = Vec::new();
        write_qubit_curve(&mut buf, n, m, particles()).map_err(map)?;
        stage.add(&format!("qubits_m{m}.csv"), buf);
        let mut buf = Vec::new();
        write_gate_curve(&mut buf, m, steps, particles()).map_err(map)?;
        stage.add(&format!("gates_m{m}.csv"), buf);
    }
    let mut buf = Vec::new();
    write_crossover_curves(&mut buf, 15, 20, 1000, &[1, 10, 50, 100], 3..=8).map_err(map)?;
    stage.add("crossover_m20.csv", buf);
    let report = feasibility_report(1_000_000_000, 300, n, 10, steps).map_err(map)?;
    stage.add("feasibility_m10.csv", feasibility_csv(&report));

    let mut metrics = BTreeMap::new();
    let mut counts = BTreeMap::new();
    metrics.insert("max_particles_m10".to_string(), report.max_particles as f64);
    counts.insert("max_particles_m10".to_string(), report.max_particles);
    for z in [1u64, 10, 50, 100] {
        let atoms = crossover_atoms(z, 15, 20, 1000).map_err(map)?;
        metrics.insert(format!("crossover_atoms_z{z}"), atoms as f64);
        counts.insert(format!("crossover_atoms_z{z}"), atoms);
    }

    let mut outputs = stage.names();
    outputs.push("manifest.json".to_string());
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        kind: "figures".to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: 0,
        config_hash: hash_value(&config),
        config,
        metrics,
        counts,
        observables: Vec::new(),
        outputs,
    };
    let mut text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    stage.add("manifest.json", text.into_bytes());
    stage.flush(out)?;
    Ok(manifest)
}
