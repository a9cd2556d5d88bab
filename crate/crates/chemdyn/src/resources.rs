//! Closed-form resource estimates for the pairwise-Coulomb propagator and
//! its interpolated-surface alternative: gate counts, qubit counts, the
//! feasibility frontier for a fixed machine budget, and the atom count where
//! evaluating the full Coulomb sum beats interpolating a fitted surface.
//!
//! Every count is exact integer (or exact rational) arithmetic over
//! arbitrary-precision integers; floats appear only in CSV rendering for
//! plots. The base unit is the *quarter gate* — the smallest increment the
//! arithmetic formulas produce — so odd precisions stay exact.

use std::io::Write;

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("precision must be at least 2 bits, got {0}")]
    PrecisionTooSmall(usize),
    #[error("pairwise costs need at least 2 particles, got {0}")]
    TooFewParticles(u64),
    #[error("the reduced-coordinate qubit count needs at least 3 particles, got {0}; \
             use qubit_count_with_dof for smaller systems")]
    NoInternalDegrees(u64),
    #[error("interpolation degree must be at least 2, got {0}")]
    BadInterpolation(u64),
    #[error("surface dimension must be at least 1, got {0}")]
    BadDimension(u64),
    #[error("atomic number must be at least 1")]
    BadAtomicNumber,
    #[error("electronic-to-nuclear step ratio must be at least 1")]
    BadStepRatio,
    #[error("no crossover found up to {cap} atoms")]
    CrossoverNotFound { cap: u64 },
    #[error("budgets, grid size, and step count must all be positive")]
    EmptyBudget,
    #[error("qubit count overflows a machine word")]
    QubitOverflow,
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

// --- exact gate counts -------------------------------------------------------------

fn gcd(mut a: BigUint, mut b: BigUint) -> BigUint {
    let zero = BigUint::from(0u32);
    while b != zero {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

/// An exact gate count: a reduced fraction of quarter gates. Ordering and
/// equality are exact (cross-multiplied); nothing is ever rounded until a
/// caller explicitly asks for a float.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateCost {
    quarters_num: BigUint,
    quarters_den: BigUint,
}

impl GateCost {
    pub fn from_quarter_gates(quarters: BigUint) -> Self {
        Self { quarters_num: quarters, quarters_den: BigUint::from(1u32) }
    }

    /// quarters = num/den, reduced.
    pub fn from_quarter_ratio(num: BigUint, den: BigUint) -> Self {
        assert!(den != BigUint::from(0u32), "zero denominator");
        let g = gcd(num.clone(), den.clone());
        Self { quarters_num: num / &g, quarters_den: den / &g }
    }

    pub fn quarter_gates(&self) -> (&BigUint, &BigUint) {
        (&self.quarters_num, &self.quarters_den)
    }

    /// Exact whole-gate count, when the quarters divide out evenly.
    pub fn whole_gates(&self) -> Option<BigUint> {
        let four_den = &self.quarters_den * 4u32;
        if (&self.quarters_num % &four_den) == BigUint::from(0u32) {
            Some(self.quarters_num.clone() / four_den)
        } else {
            None
        }
    }

    pub fn scaled(&self, factor: &BigUint) -> Self {
        Self::from_quarter_ratio(&self.quarters_num * factor, self.quarters_den.clone())
    }

    /// Gate count as a float, for plotting only.
    pub fn gates_f64(&self) -> f64 {
        let num: f64 = self.quarters_num.to_string().parse().unwrap_or(f64::INFINITY);
        let den: f64 = self.quarters_den.to_string().parse().unwrap_or(f64::INFINITY);
        num / (4.0 * den)
    }

    /// Exact decimal when whole, scientific float otherwise (CSV rendering).
    pub fn decimal(&self) -> String {
        match self.whole_gates() {
            Some(w) => w.to_string(),
            None => format!("{:e}", self.gates_f64()),
        }
    }
}

impl PartialOrd for GateCost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GateCost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.quarters_num * &other.quarters_den).cmp(&(&other.quarters_num * &self.quarters_den))
    }
}

// --- pairwise Coulomb costs -----------------------------------------------------

/// Gates to evaluate one pairwise 1/r term to m fixed-point bits:
/// 75/4·m³ + 51/2·m² (three squarings, two adds, one inverse square root,
/// one accumulate), exact in quarter gates as 75m³ + 102m².
pub fn coulomb_gates_per_pair(m: usize) -> Result<GateCost, ResourceError> {
    if m < 2 {
        return Err(ResourceError::PrecisionTooSmall(m));
    }
    let m = BigUint::from(m);
    let m2 = &m * &m;
    let quarters = &m2 * &m * 75u32 + &m2 * 102u32;
    Ok(GateCost::from_quarter_gates(quarters))
}

/// Full potential evaluation for one step of a B-particle system: one
/// pairwise term per unordered pair, B(B−1)/2 of them.
pub fn coulomb_gates_per_step(b: u64, m: usize) -> Result<GateCost, ResourceError> {
    if b < 2 {
        return Err(ResourceError::TooFewParticles(b));
    }
    let pairs = BigUint::from(b) * BigUint::from(b - 1) / 2u32;
    Ok(coulomb_gates_per_pair(m)?.scaled(&pairs))
}

// --- qubit counts ------------------------------------------------------------------

/// Qubits for an explicit dof count: n per grid axis plus 4m of arithmetic
/// workspace (two m-bit operands, an m-bit accumulator, and m bits of
/// scratch).
pub fn qubit_count_with_dof(dof: u64, n: usize, m: usize) -> Result<u64, ResourceError> {
    let total = (n as u128) * (dof as u128) + 4 * m as u128;
    u64::try_from(total).map_err(|_| ResourceError::QubitOverflow)
}

/// Qubits for B particles after removing center-of-mass and rigid rotations:
/// n(3B−6) + 4m. Valid from B = 3 up; smaller systems keep more degrees of
/// freedom per particle and must state their dof explicitly.
pub fn qubit_count(b: u64, n: usize, m: usize) -> Result<u64, ResourceError> {
    if b < 3 {
        return Err(ResourceError::NoInternalDegrees(b));
    }
    qubit_count_with_dof(3 * b - 6, n, m)
}

// --- interpolated-surface costs ---------------------------------------------------

/// Cost of one potential evaluation through a degree-K, d-dimensional
/// interpolating polynomial (nested single-variable evaluations, innermost
/// axis first).
#[derive(Debug, Clone)]
pub struct SurfaceCost {
    /// K^{d+1}/(K−1) polynomial-chain evaluations at 5/4·m³ + 5/2·m² gates
    /// each — the exact rational count.
    pub exact: GateCost,
    /// Large-K form K^d·(5/4·m³ + 5/2·m²), exact in quarter gates.
    pub approx: GateCost,
    /// Scratch registers holding intermediate polynomial values:
    /// ⌈K^{d−1}/(K−1)⌉.
    pub temp_registers: BigUint,
}

/// Per-step cost of evaluating a fitted potential surface instead of the
/// pairwise sum (the Born-Oppenheimer route: d nuclear dof, electronic
/// structure folded into the fitted coefficients).
pub fn bo_gates_per_nuclear_step(k: u64, d: u64, m: usize) -> Result<SurfaceCost, ResourceError> {
    if k < 2 {
        return Err(ResourceError::BadInterpolation(k));
    }
    if d < 1 {
        return Err(ResourceError::BadDimension(d));
    }
    if m < 2 {
        return Err(ResourceError::PrecisionTooSmall(m));
    }
    let mb = BigUint::from(m);
    let m2 = &mb * &mb;
    // 5/4·m³ + 5/2·m² per polynomial evaluation → 5m³ + 10m² quarter gates.
    let per_poly_quarters = &m2 * &mb * 5u32 + &m2 * 10u32;
    let kb = BigUint::from(k);
    let d32 = u32::try_from(d).map_err(|_| ResourceError::BadDimension(d))?;
    let exact = GateCost::from_quarter_ratio(
        kb.pow(d32 + 1) * &per_poly_quarters,
        BigUint::from(k - 1),
    );
    let approx = GateCost::from_quarter_gates(kb.pow(d32) * &per_poly_quarters);
    // K^{d−1} ≡ 1 (mod K−1), so the ceiling is the geometric sum plus one.
    let temp_registers = if d == 1 {
        BigUint::from(1u32)
    } else {
        (kb.pow(d32 - 1) - 1u32) / BigUint::from(k - 1) + 1u32
    };
    Ok(SurfaceCost { exact, approx, temp_registers })
}

// --- crossover ---------------------------------------------------------------------

const CROSSOVER_SCAN_CAP: u64 = 64;

fn crossover_costs(
    n_a: u64,
    z: u64,
    k: u64,
    m: usize,
    step_ratio: u64,
) -> Result<(GateCost, GateCost), ResourceError> {
    let b = n_a * (z + 1);
    let diabatic =
        coulomb_gates_per_step(b, m)?.scaled(&BigUint::from(step_ratio));
    let d = 3 * n_a - 6;
    let surface = bo_gates_per_nuclear_step(k, d, m)?;
    Ok((diabatic, surface.approx))
}

/// Smallest atom count where evolving all particles explicitly (at
/// `step_ratio` electronic steps per nuclear step) costs no more per nuclear
/// step than evaluating a degree-K fitted surface. Model: N_a identical
/// atoms of atomic number Z, so B = N_a(Z+1) particles and d = 3N_a − 6
/// surface dimensions; the surface side uses the standard large-K count.
pub fn crossover_atoms(
    z: u64,
    k: u64,
    m: usize,
    step_ratio: u64,
) -> Result<u64, ResourceError> {
    if z < 1 {
        return Err(ResourceError::BadAtomicNumber);
    }
    if step_ratio < 1 {
        return Err(ResourceError::BadStepRatio);
    }
    for n_a in 3..=CROSSOVER_SCAN_CAP {
        let (diabatic, surface) = crossover_costs(n_a, z, k, m, step_ratio)?;
        if diabatic <= surface {
            return Ok(n_a);
        }
    }
    Err(ResourceError::CrossoverNotFound { cap: CROSSOVER_SCAN_CAP })
}

// --- feasibility -------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FeasibilityRow {
    pub particles: u64,
    pub qubits: u64,
    /// Gates for the whole run: steps × per-step Coulomb cost.
    pub total_gates: GateCost,
    pub fits_qubits: bool,
    pub fits_gates: bool,
}

/// Largest particle count a fixed machine runs for a full simulation, with
/// the per-B frontier rows up to the first failure.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// 0 when not even a single pair fits.
    pub max_particles: u64,
    pub rows: Vec<FeasibilityRow>,
}

impl FeasibilityReport {
    pub fn infeasible(&self) -> bool {
        self.max_particles == 0
    }
}

/// Internal dof per particle count: 3B−6 from three particles up; a lone
/// pair keeps its three relative coordinates.
fn reduced_dof(b: u64) -> u64 {
    if b >= 3 { 3 * b - 6 } else { 3 }
}

pub fn feasibility_report(
    gate_budget: u64,
    qubit_budget: u64,
    n: usize,
    m: usize,
    steps: u64,
) -> Result<FeasibilityReport, ResourceError> {
    if gate_budget == 0 || qubit_budget == 0 || n == 0 || steps == 0 {
        return Err(ResourceError::EmptyBudget);
    }
    if m < 2 {
        return Err(ResourceError::PrecisionTooSmall(m));
    }
    let budget = GateCost::from_quarter_gates(BigUint::from(gate_budget) * 4u32);
    let mut rows = Vec::new();
    let mut max_particles = 0;
    for b in 2.. {
        let qubits = qubit_count_with_dof(reduced_dof(b), n, m)?;
        let total_gates = coulomb_gates_per_step(b, m)?.scaled(&BigUint::from(steps));
        let fits_qubits = qubits <= qubit_budget;
        let fits_gates = total_gates <= budget;
        let fits = fits_qubits && fits_gates;
        rows.push(FeasibilityRow { particles: b, qubits, total_gates, fits_qubits, fits_gates });
        if !fits {
            break;
        }
        max_particles = b;
    }
    Ok(FeasibilityReport { max_particles, rows })
}

// --- CSV curves -------------------------------------------------------------------

/// Qubit requirement vs particle count at fixed grid and precision.
pub fn write_qubit_curve<W: Write>(
    mut w: W,
    n: usize,
    m: usize,
    particles: impl IntoIterator<Item = u64>,
) -> Result<(), ResourceError> {
    writeln!(w, "particles,qubits")?;
    for b in particles {
        writeln!(w, "{},{}", b, qubit_count_with_dof(reduced_dof(b), n, m)?)?;
    }
    Ok(())
}

/// Per-step and whole-run gate cost vs particle count.
pub fn write_gate_curve<W: Write>(
    mut w: W,
    m: usize,
    steps: u64,
    particles: impl IntoIterator<Item = u64>,
) -> Result<(), ResourceError> {
    writeln!(w, "particles,gates_per_step,gates_total")?;
    for b in particles {
        let per_step = coulomb_gates_per_step(b, m)?;
        let total = per_step.scaled(&BigUint::from(steps));
        writeln!(w, "{},{},{}", b, per_step.decimal(), total.decimal())?;
    }
    Ok(())
}

/// Explicit-evolution vs fitted-surface cost per nuclear step, one curve
/// pair per atomic number.
pub fn write_crossover_curves<W: Write>(
    mut w: W,
    k: u64,
    m: usize,
    step_ratio: u64,
    atomic_numbers: &[u64],
    atoms: impl IntoIterator<Item = u64> + Clone,
) -> Result<(), ResourceError> {
    writeln!(w, "z,atoms,diabatic_gates,surface_gates")?;
    for &z in atomic_numbers {
        if z < 1 {
            return Err(ResourceError::BadAtomicNumber);
        }
        for n_a in atoms.clone() {
            if n_a < 3 {
                return Err(ResourceError::BadDimension(0));
            }
            let (diabatic, surface) = crossover_costs(n_a, z, k, m, step_ratio)?;
            writeln!(w, "{},{},{},{}", z, n_a, diabatic.decimal(), surface.decimal())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn pair_cost_matches_closed_form_at_reference_precisions() {
        let c10 = coulomb_gates_per_pair(10).unwrap();
        assert_eq!(c10.whole_gates().unwrap(), big(21_300));
        assert_eq!(c10.quarter_gates(), (&big(85_200), &big(1)));
        let c20 = coulomb_gates_per_pair(20).unwrap();
        assert_eq!(c20.whole_gates().unwrap(), big(160_200));
        // Odd precision stays exact in quarters even though gates are
        // fractional.
        let c3 = coulomb_gates_per_pair(3).unwrap();
        assert_eq!(c3.quarter_gates(), (&big(75 * 27 + 102 * 9), &big(1)));
        assert!(c3.whole_gates().is_none());
        assert!(matches!(coulomb_gates_per_pair(1), Err(ResourceError::PrecisionTooSmall(1))));
    }

    #[test]
    fn step_cost_scales_with_the_pair_count() {
        let pair = coulomb_gates_per_pair(10).unwrap();
        assert_eq!(coulomb_gates_per_step(2, 10).unwrap(), pair);
        let five = coulomb_gates_per_step(5, 10).unwrap();
        assert_eq!(five.whole_gates().unwrap(), big(10 * 21_300));
        assert!(matches!(coulomb_gates_per_step(1, 10), Err(ResourceError::TooFewParticles(1))));
    }

    #[test]
    fn qubit_counts_match_reference_systems() {
        assert_eq!(qubit_count(4, 10, 10).unwrap(), 100);
        assert_eq!(qubit_count(10, 10, 10).unwrap(), 280);
        assert_eq!(qubit_count(3, 10, 10).unwrap(), 70);
        for b in 3..20 {
            for m in 2..12 {
                let base = qubit_count(b, 10, m).unwrap();
                assert_eq!(qubit_count(b, 10, m + 1).unwrap(), base + 4);
            }
        }
        assert!(matches!(qubit_count(2, 10, 10), Err(ResourceError::NoInternalDegrees(2))));
        assert_eq!(qubit_count_with_dof(3, 10, 10).unwrap(), 70);
    }

    #[test]
    fn surface_cost_matches_closed_forms() {
        // K=15, d=9, m=20: per-polynomial factor 5/4·8000 + 5/2·400 = 11000.
        let cost = bo_gates_per_nuclear_step(15, 9, 20).unwrap();
        let expect_approx = big(15).pow(9) * big(11_000);
        assert_eq!(cost.approx.whole_gates().unwrap(), expect_approx);
        assert_eq!(
            cost.exact,
            GateCost::from_quarter_ratio(big(15).pow(10) * big(44_000), big(14))
        );
        assert!(cost.exact > cost.approx);
        assert_eq!(cost.temp_registers, (big(15).pow(8) - 1u32) / big(14) + 1u32);

        // K=2: the exact and large-K forms differ by exactly K/(K−1) = 2.
        let k2 = bo_gates_per_nuclear_step(2, 2, 4).unwrap();
        assert_eq!(k2.exact.whole_gates().unwrap(), big(960));
        assert_eq!(k2.approx.whole_gates().unwrap(), big(480));

        // d=1: single-axis chain, K²/(K−1) polynomial-evaluation units.
        let d1 = bo_gates_per_nuclear_step(5, 1, 4).unwrap();
        assert_eq!(d1.exact, GateCost::from_quarter_ratio(big(25) * big(480), big(4)));
        assert_eq!(d1.temp_registers, big(1));

        assert!(matches!(bo_gates_per_nuclear_step(1, 2, 4), Err(ResourceError::BadInterpolation(1))));
        assert!(matches!(bo_gates_per_nuclear_step(2, 0, 4), Err(ResourceError::BadDimension(0))));
    }

    #[test]
    fn crossover_sits_at_five_atoms_for_heavy_elements() {
        assert_eq!(crossover_atoms(100, 15, 20, 1000).unwrap(), 5);
        // The comparison the scan makes at the crossover, in plain numbers.
        let (diabatic, surface) = crossover_costs(5, 100, 15, 20, 1000).unwrap();
        assert!(diabatic <= surface);
        assert!((diabatic.gates_f64() / 2.04e13 - 1.0).abs() < 5e-3);
        assert!((surface.gates_f64() / 4.23e14 - 1.0).abs() < 5e-3);
        let (d4, s4) = crossover_costs(4, 100, 15, 20, 1000).unwrap();
        assert!(d4 > s4);
    }

    #[test]
    fn crossover_is_monotone_in_degree_and_stable_in_precision() {
        let mut last = u64::MAX;
        for k in [2u64, 3, 5, 10, 15, 25, 50] {
            let at = crossover_atoms(100, k, 20, 1000).unwrap();
            assert!(at <= last, "K={k}: {at} > {last}");
            last = at;
        }
        for z in 1..=100u64 {
            assert_eq!(
                crossover_atoms(z, 15, 10, 1000).unwrap(),
                crossover_atoms(z, 15, 20, 1000).unwrap(),
                "z={z}"
            );
        }
    }

    #[test]
    fn budget_scan_finds_the_ten_particle_frontier() {
        let report = feasibility_report(1_000_000_000, 300, 10, 10, 1000).unwrap();
        assert_eq!(report.max_particles, 10);
        assert!(!report.infeasible());
        let frontier = report.rows.last().unwrap();
        assert_eq!(frontier.particles, 11);
        assert!(!frontier.fits_qubits && !frontier.fits_gates);
        let ten = &report.rows[report.rows.len() - 2];
        assert_eq!(ten.qubits, 280);
        assert_eq!(
            ten.total_gates.whole_gates().unwrap(),
            big(1000) * big(45) * big(21_300)
        );
    }

    #[test]
    fn starved_budget_is_flagged_infeasible() {
        let report = feasibility_report(10_000, 300, 10, 10, 1000).unwrap();
        assert!(report.infeasible());
        assert_eq!(report.max_particles, 0);
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].fits_qubits && !report.rows[0].fits_gates);
        assert!(matches!(
            feasibility_report(0, 300, 10, 10, 1000),
            Err(ResourceError::EmptyBudget)
        ));
    }

    #[test]
    fn cost_ordering_is_exact_across_representations() {
        let a = GateCost::from_quarter_ratio(big(1), big(3));
        let b = GateCost::from_quarter_ratio(big(2), big(6));
        assert_eq!(a, b);
        let c = GateCost::from_quarter_ratio(big(1_000_000_000_001u64), big(3_000_000_000_000u64));
        assert!(c > a);
        assert!(GateCost::from_quarter_gates(big(5)) < GateCost::from_quarter_gates(big(6)));
        assert_eq!(GateCost::from_quarter_gates(big(85_200)).gates_f64(), 21_300.0);
    }

    #[test]
    fn curve_emitters_write_consistent_tables() {
        let mut out = Vec::new();
        write_qubit_curve(&mut out, 10, 10, 2..=12).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "particles,qubits");
        assert_eq!(lines.len(), 12);
        assert!(lines.contains(&"10,280"));
        assert!(lines.contains(&"2,70"));

        let mut out = Vec::new();
        write_gate_curve(&mut out, 10, 1000, [2, 10]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.lines().any(|l| l == "2,21300,21300000"));
        assert!(text.lines().any(|l| l == &format!("10,{},{}", 45 * 21_300, 45_000 * 21_300)));

        let mut out = Vec::new();
        write_crossover_curves(&mut out, 15, 20, 1000, &[1, 100], 3..=6).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("z,atoms,diabatic_gates,surface_gates"));
    }
}
