//! Reversible fixed-point arithmetic circuits with exact cost bookkeeping.
//!
//! Circuits are built as sequences of typed *stages* — Fourier transforms on
//! registers, phase-rotation ladders, constant ladders, and controlled bit
//! flips — rather than flat gate lists. Three consumers interpret the same
//! stage sequence:
//!
//! * [`lower`] turns stages into elementary gates for the statevector
//!   simulator (and for raw gate censuses),
//! * [`tracker`] executes the stages on classical integer registers, giving a
//!   fast stage-semantic path that must agree bit for bit with the
//!   statevector,
//! * [`audit`] sums each stage's *booked* cost.
//!
//! Booked costs follow the accounting used for the molecular-scale estimates:
//! an addition ladder on m-qubit registers is booked at m²/2 controlled
//! rotations, a singly-controlled ladder at m²/2 doubly-controlled rotations
//! (×5 elementary), and each of a multiplication's m controlled ladders at
//! half rate because on average half the control bits are clear. Booked
//! values are *budgets*, not gate counts — the raw census of an addition
//! ladder is m(m+1)/2 gates, for example — and the two are reported side by
//! side. Stages that restore operands or uncompute intermediates are booked
//! under `Housekeeping`; rounding and sign-correction gates under
//! `Correction`; phase writes into an evolution accumulator under `Writer`.
//! Only `Audited` stages enter the budget that the audit compares against the
//! closed-form per-operation costs.
//!
//! Fourier-form registers use no bit-reversal swaps: after a forward
//! transform, logical Fourier coefficient k lives on qubit (w−1−k), and every
//! ladder indexes through that reversal. All booked costs are stored in
//! quarter-rotation units (`u128`) so odd widths stay exact.

pub mod audit;
pub mod lower;
pub mod oracle;
pub mod tracker;

use crate::qsim::RegisterLayout;
use thiserror::Error;

/// Newton–Raphson refinement count for inverse square roots; the error
/// analysis and gate budgets assume exactly this many.
pub const NR_ITERATIONS: usize = 4;

#[derive(Debug, Error)]
pub enum ArithError {
    #[error("register width {0} unsupported (need 2..=64)")]
    BadWidth(usize),
    #[error("stage {index}: {msg}")]
    Stage { index: usize, msg: String },
    #[error("register {reg} expected {expected} Fourier form")]
    FourierForm { reg: usize, expected: &'static str },
    #[error("input {got:#x} does not fit register of width {width}")]
    InputRange { got: u128, width: usize },
}

/// One control bit: register, bit index, required value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtrlBit {
    pub reg: usize,
    pub bit: usize,
    pub value: bool,
}

/// Cost class of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostClass {
    /// Enters the audited budget compared against closed-form costs.
    Audited,
    /// Operand restores and uncomputation.
    Housekeeping,
    /// Phase accumulation into an evolution register.
    Writer,
    /// Rounding and two's-complement sign corrections.
    Correction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Booking {
    pub class: CostClass,
    /// Quarter-rotations (controlled-phase equivalents ×4).
    pub quarters: u128,
}

/// Truncation rule for multiplier partial products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    /// Partial s contributes ⌊a·2^{s−W}⌋.
    Floor,
    /// Partial s contributes ⌊a·2^{s−W} + ½⌋, via correction gates.
    Nearest,
}

/// One typed circuit stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    /// Swapless Fourier transform of one register.
    Fourier {
        reg: usize,
        inverse: bool,
        book: Booking,
    },
    /// tgt ± = ⌊src·2^shift⌋ (mod 2^w) with tgt in Fourier form, optionally
    /// under one control bit. `src` may double as the control register.
    Ladder {
        src: usize,
        tgt: usize,
        shift: i32,
        negate: bool,
        control: Option<CtrlBit>,
        book: Booking,
    },
    /// tgt ± = value (mod 2^w) with tgt in Fourier form, under zero, one, or
    /// two control bits.
    ConstLadder {
        tgt: usize,
        value: u128,
        negate: bool,
        controls: Vec<CtrlBit>,
        book: Booking,
    },
    /// tgt ^= mask (computational basis), under polarized controls.
    BitFlips {
        tgt: usize,
        mask: u128,
        controls: Vec<CtrlBit>,
        book: Booking,
    },
}

impl Stage {
    pub fn booking(&self) -> Booking {
        match self {
            Stage::Fourier { book, .. }
            | Stage::Ladder { book, .. }
            | Stage::ConstLadder { book, .. }
            | Stage::BitFlips { book, .. } => *book,
        }
    }

    fn book_mut(&mut self) -> &mut Booking {
        match self {
            Stage::Fourier { book, .. }
            | Stage::Ladder { book, .. }
            | Stage::ConstLadder { book, .. }
            | Stage::BitFlips { book, .. } => book,
        }
    }

    /// Inverse stage (same booking).
    pub fn inverse(&self) -> Stage {
        match self.clone() {
            Stage::Fourier { reg, inverse, book } => Stage::Fourier {
                reg,
                inverse: !inverse,
                book,
            },
            Stage::Ladder {
                src,
                tgt,
                shift,
                negate,
                control,
                book,
            } => Stage::Ladder {
                src,
                tgt,
                shift,
                negate: !negate,
                control,
                book,
            },
            Stage::ConstLadder {
                tgt,
                value,
                negate,
                controls,
                book,
            } => Stage::ConstLadder {
                tgt,
                value,
                negate: !negate,
                controls,
                book,
            },
            s @ Stage::BitFlips { .. } => s,
        }
    }
}

/// Re-points every register id in `stages` through `map` (old id → new id),
/// so a standalone circuit can be embedded into a larger layout whose
/// registers have the same widths.
pub fn remap_stages(stages: &[Stage], map: &[usize]) -> Vec<Stage> {
    let remap_ctrl = |c: &CtrlBit| CtrlBit {
        reg: map[c.reg],
        bit: c.bit,
        value: c.value,
    };
    stages
        .iter()
        .map(|s| match s {
            Stage::Fourier { reg, inverse, book } => Stage::Fourier {
                reg: map[*reg],
                inverse: *inverse,
                book: *book,
            },
            Stage::Ladder {
                src,
                tgt,
                shift,
                negate,
                control,
                book,
            } => Stage::Ladder {
                src: map[*src],
                tgt: map[*tgt],
                shift: *shift,
                negate: *negate,
                control: control.as_ref().map(remap_ctrl),
                book: *book,
            },
            Stage::ConstLadder {
                tgt,
                value,
                negate,
                controls,
                book,
            } => Stage::ConstLadder {
                tgt: map[*tgt],
                value: *value,
                negate: *negate,
                controls: controls.iter().map(remap_ctrl).collect(),
                book: *book,
            },
            Stage::BitFlips {
                tgt,
                mask,
                controls,
                book,
            } => Stage::BitFlips {
                tgt: map[*tgt],
                mask: *mask,
                controls: controls.iter().map(remap_ctrl).collect(),
                book: *book,
            },
        })
        .collect()
}

/// Reversed, inverted copy of a stage list, re-booked under `class`.
pub fn inverse_stages(stages: &[Stage], class: CostClass) -> Vec<Stage> {
    stages
        .iter()
        .rev()
        .map(|s| {
            let mut inv = s.inverse();
            inv.book_mut().class = class;
            inv
        })
        .collect()
}

/// Booked cost by class, in quarter-rotations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Budget {
    pub audited_q: u128,
    pub housekeeping_q: u128,
    pub writer_q: u128,
    pub correction_q: u128,
}

impl Budget {
    pub fn of(stages: &[Stage]) -> Budget {
        let mut b = Budget::default();
        for s in stages {
            let Booking { class, quarters } = s.booking();
            match class {
                CostClass::Audited => b.audited_q += quarters,
                CostClass::Housekeeping => b.housekeeping_q += quarters,
                CostClass::Writer => b.writer_q += quarters,
                CostClass::Correction => b.correction_q += quarters,
            }
        }
        b
    }

    /// Audited rotations (quarters / 4).
    pub fn audited_rotations(&self) -> f64 {
        self.audited_q as f64 / 4.0
    }
}

/// A built arithmetic circuit: named registers plus its stage sequence.
#[derive(Debug, Clone)]
pub struct ArithCircuit {
    pub layout: RegisterLayout,
    pub stages: Vec<Stage>,
}

impl ArithCircuit {
    pub fn budget(&self) -> Budget {
        Budget::of(&self.stages)
    }

    pub fn qubits(&self) -> usize {
        self.layout.total_qubits()
    }
}

// --- fixed-point format for inverse square roots -------------------------------

/// Fixed-point layout of the Newton–Raphson inverse-square-root pipeline on
/// m-bit registers. The input S is a plain integer; results are accurate for
/// S in the top two octaves [2^{m−2}, 2^m), where the seed table is
/// calibrated. Scales:
///
/// * X (iterates): 2^{−fx} with fx = ⌊(3m−4)/2⌋, so 1/√S ≈ X/2^fx,
/// * A = x²: 2^{−(2m−3)},
/// * B = S·A and T = 3 − B: 2^{−(m−2)} (the constant 3 loads as 3·2^{m−2}),
/// * the x·T multiply shifts by m−1, absorbing the ½ of x(3−Sx²)/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvSqrtFormat {
    pub m: usize,
}

impl InvSqrtFormat {
    pub fn new(m: usize) -> Result<Self, ArithError> {
        if !(2..=64).contains(&m) {
            return Err(ArithError::BadWidth(m));
        }
        Ok(InvSqrtFormat { m })
    }

    /// Fraction bits of the iterate registers.
    pub fn x_frac_bits(&self) -> u32 {
        ((3 * self.m - 4) / 2) as u32
    }

    /// Window of the A ← x² squaring.
    pub fn w_square(&self) -> u32 {
        2 * self.x_frac_bits() - (2 * self.m as u32 - 3)
    }

    /// Window of the B ← S·A multiply.
    pub fn w_bmul(&self) -> u32 {
        self.m as u32 - 1
    }

    /// Window of the X ← x·T multiply (includes the halving).
    pub fn w_xmul(&self) -> u32 {
        self.m as u32 - 1
    }

    /// The constant 3 at T's scale.
    pub fn three(&self) -> u128 {
        3u128 << (self.m - 2)
    }

    /// Converts an iterate register value to a real reciprocal square root.
    pub fn x_to_real(&self, x: u128) -> f64 {
        x as f64 / (self.x_frac_bits() as f64).exp2()
    }
}

/// Seed-table domain for key (e, b): S ∈ [lo, hi).
pub fn seed_range(m: usize, e: usize, b: Option<bool>) -> (u128, u128) {
    debug_assert!(e == m - 1 || e == m - 2);
    match b {
        None => (1u128 << e, 1u128 << (e + 1)),
        Some(bv) => {
            let half = 1u128 << (e - 1);
            let lo = (1u128 << e) + if bv { half } else { 0 };
            (lo, lo + half)
        }
    }
}

/// Minimax constant seed for 1/√S over [lo, hi), truncated to the iterate
/// scale: x₀ = 2/(√lo + √hi) keeps the relative error within ±0.11 on a
/// half-octave and within ±0.125 on the e=0 full octave.
pub fn seed_constant(m: usize, e: usize, b: Option<bool>) -> u128 {
    let fmt = InvSqrtFormat { m };
    let (lo, hi) = seed_range(m, e, b);
    let x0 = 2.0 / ((lo as f64).sqrt() + (hi as f64).sqrt());
    let v = (x0 * (fmt.x_frac_bits() as f64).exp2()).floor() as u128;
    v.max(1)
}

/// One seed-table entry: its selector controls on the S register and the
/// constant it loads into X₀.
#[derive(Debug, Clone)]
pub struct SeedCombo {
    pub e: usize,
    pub b: Option<bool>,
    pub constant: u128,
}

/// The complete, mutually exclusive seed table for width m: keyed on S's top
/// bit (octave) and the next bit down (half-octave) where one exists.
pub fn seed_combos(m: usize) -> Vec<SeedCombo> {
    let mut combos = Vec::new();
    for e in [m - 1, m - 2] {
        if e >= 1 {
            for b in [false, true] {
                combos.push(SeedCombo {
                    e,
                    b: Some(b),
                    constant: seed_constant(m, e, Some(b)),
                });
            }
        } else {
            combos.push(SeedCombo {
                e,
                b: None,
                constant: seed_constant(m, e, None),
            });
        }
    }
    combos
}

// --- assembler -----------------------------------------------------------------

/// Incremental circuit builder: owns the register layout and stage list and
/// assigns each stage its booked cost.
pub struct Assembler {
    layout: RegisterLayout,
    stages: Vec<Stage>,
}

impl Default for Assembler {
    fn default() -> Self {
        Self::new()
    }
}

impl Assembler {
    pub fn new() -> Self {
        Assembler {
            layout: RegisterLayout::new(),
            stages: Vec::new(),
        }
    }

    pub fn reg(&mut self, name: &str, width: usize) -> usize {
        self.layout.add(name, width)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn finish(self) -> ArithCircuit {
        ArithCircuit {
            layout: self.layout,
            stages: self.stages,
        }
    }

    pub fn push(&mut self, stage: Stage) {
        self.stages.push(stage);
    }

    pub fn extend(&mut self, stages: Vec<Stage>) {
        self.stages.extend(stages);
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    fn width(&self, reg: usize) -> u128 {
        self.layout.get(reg).width as u128
    }

    /// Raw rotation-class quarters of a stage, from its lowered gates — used
    /// to book stages with no closed-form assessment.
    fn raw_quarters(&self, stage: &Stage) -> u128 {
        let gates =
            lower::lower_stage(stage, &self.layout, &mut lower::LowerState::permissive())
                .expect("stage lowering for booking");
        4 * crate::qsim::tally_circuit(&gates).rotation_class() as u128
    }

    pub fn fourier(&mut self, reg: usize, inverse: bool, class: CostClass) {
        let w = self.width(reg);
        self.push(Stage::Fourier {
            reg,
            inverse,
            book: Booking {
                class,
                quarters: 2 * w * w,
            },
        });
    }

    /// Plain ladder: tgt ±= src (booked at w²/2 controlled rotations).
    pub fn add_ladder(&mut self, src: usize, tgt: usize, negate: bool, class: CostClass) {
        let q = 2 * self.width(src) * self.width(tgt);
        self.push(Stage::Ladder {
            src,
            tgt,
            shift: 0,
            negate,
            control: None,
            book: Booking { class, quarters: q },
        });
    }

    /// Singly-controlled ladder booked at the standalone rate of w²/2
    /// doubly-controlled rotations (×5).
    pub fn controlled_add_ladder(
        &mut self,
        src: usize,
        tgt: usize,
        negate: bool,
        control: CtrlBit,
        class: CostClass,
    ) {
        let q = 10 * self.width(src) * self.width(tgt);
        self.push(Stage::Ladder {
            src,
            tgt,
            shift: 0,
            negate,
            control: Some(control),
            book: Booking { class, quarters: q },
        });
    }

    /// Full in-place addition tgt ±= src: Fourier pair plus ladder, booked at
    /// 3/2·w² controlled rotations total.
    pub fn draper_add(&mut self, src: usize, tgt: usize, negate: bool, class: CostClass) {
        self.fourier(tgt, false, class);
        self.add_ladder(src, tgt, negate, class);
        self.fourier(tgt, true, class);
    }

    /// Multiplier core: tgt ±= Σ_s ctrl_s · src·2^{s−window}, each partial's
    /// ladder booked at half the standalone controlled rate. `Nearest`
    /// rounding emits per-partial +1 corrections controlled on the dropped
    /// guard bit. The target must already be in Fourier form.
    pub fn multiply_ladders(
        &mut self,
        src: usize,
        ctrl: usize,
        tgt: usize,
        window: u32,
        negate: bool,
        rounding: Rounding,
        class: CostClass,
    ) {
        let w_src = self.layout.get(src).width;
        let w_ctrl = self.layout.get(ctrl).width;
        let half_q = 5 * self.width(src) * self.width(tgt);
        for s in 0..w_ctrl {
            let control = CtrlBit {
                reg: ctrl,
                bit: s,
                value: true,
            };
            self.push(Stage::Ladder {
                src,
                tgt,
                shift: s as i32 - window as i32,
                negate,
                control: Some(control),
                book: Booking {
                    class,
                    quarters: half_q,
                },
            });
            // Half-up rounding: +1 exactly when bit (window−s−1) of src is
            // set, i.e. when the discarded fraction is ≥ ½.
            if rounding == Rounding::Nearest && (s as i32) < window as i32 {
                let guard = (window - 1 - s as u32) as usize;
                if guard < w_src {
                    let mut controls = vec![control];
                    let guard_ctrl = CtrlBit {
                        reg: src,
                        bit: guard,
                        value: true,
                    };
                    if guard_ctrl != control {
                        controls.push(guard_ctrl);
                    }
                    let stage = Stage::ConstLadder {
                        tgt,
                        value: 1,
                        negate,
                        controls,
                        book: Booking {
                            class: CostClass::Correction,
                            quarters: 0,
                        },
                    };
                    let q = self.raw_quarters(&stage);
                    let mut stage = stage;
                    stage.book_mut().quarters = q;
                    self.push(stage);
                }
            }
        }
    }

    /// Squaring core: tgt ±= Σ_s src_s · src·2^{s−window}, optionally with
    /// the two's-complement corrections tgt ∓= sign·src·2^{w+1−window} and
    /// tgt ±= sign·2^{2w−window} that make the result equal the square of the
    /// signed value. The target must already be in Fourier form.
    pub fn square_ladders(
        &mut self,
        src: usize,
        tgt: usize,
        window: u32,
        negate: bool,
        signed: bool,
        rounding: Rounding,
        class: CostClass,
    ) {
        self.multiply_ladders(src, src, tgt, window, negate, rounding, class);
        if signed {
            let w_src = self.layout.get(src).width as u32;
            let w_tgt = self.layout.get(tgt).width as u32;
            let sign = CtrlBit {
                reg: src,
                bit: w_src as usize - 1,
                value: true,
            };
            debug_assert!(window <= w_src + 1, "sign correction must stay integral");
            let corr = Stage::Ladder {
                src,
                tgt,
                shift: (w_src + 1 - window) as i32,
                negate: !negate,
                control: Some(sign),
                book: Booking {
                    class: CostClass::Correction,
                    quarters: 0,
                },
            };
            let q = self.raw_quarters(&corr);
            let mut corr = corr;
            corr.book_mut().quarters = q;
            self.push(corr);
            if 2 * w_src >= window && 2 * w_src - window < w_tgt {
                let stage = Stage::ConstLadder {
                    tgt,
                    value: 1u128 << (2 * w_src - window),
                    negate,
                    controls: vec![sign],
                    book: Booking {
                        class: CostClass::Correction,
                        quarters: 0,
                    },
                };
                let q = self.raw_quarters(&stage);
                let mut stage = stage;
                stage.book_mut().quarters = q;
                self.push(stage);
            }
        }
    }

    /// Self-contained multiply: Fourier pair around the partial ladders,
    /// booked at 5/4·w³ + w² total for uniform widths.
    pub fn multiply_into(
        &mut self,
        src: usize,
        ctrl: usize,
        tgt: usize,
        window: u32,
        negate: bool,
        rounding: Rounding,
        class: CostClass,
    ) {
        self.fourier(tgt, false, class);
        self.multiply_ladders(src, ctrl, tgt, window, negate, rounding, class);
        self.fourier(tgt, true, class);
    }

    /// Self-contained square with the same booking as a multiply.
    pub fn square_into(
        &mut self,
        src: usize,
        tgt: usize,
        window: u32,
        negate: bool,
        signed: bool,
        rounding: Rounding,
        class: CostClass,
    ) {
        self.fourier(tgt, false, class);
        self.square_ladders(src, tgt, window, negate, signed, rounding, class);
        self.fourier(tgt, true, class);
    }

    /// tgt ^= mask under polarized controls, booked at its raw census.
    pub fn bit_flips(&mut self, tgt: usize, mask: u128, controls: Vec<CtrlBit>, class: CostClass) {
        // Contradictory controls (same bit, both polarities) select nothing.
        for i in 0..controls.len() {
            for j in i + 1..controls.len() {
                if controls[i].reg == controls[j].reg
                    && controls[i].bit == controls[j].bit
                    && controls[i].value != controls[j].value
                {
                    return;
                }
            }
        }
        let mut dedup: Vec<CtrlBit> = Vec::new();
        for c in controls {
            if !dedup.contains(&c) {
                dedup.push(c);
            }
        }
        let stage = Stage::BitFlips {
            tgt,
            mask,
            controls: dedup,
            book: Booking {
                class,
                quarters: 0,
            },
        };
        let q = self.raw_quarters(&stage);
        let mut stage = stage;
        stage.book_mut().quarters = q;
        self.push(stage);
    }

    /// Seed-table load X₀ ^= table(S), then the four Newton–Raphson
    /// iterations X_{i+1} = X_i·(3 − S·X_i²)/2 through the scratch registers
    /// A, B, T, clearing the scratch between iterations (housekeeping). The
    /// result lands in `x[4]`; scratch from the last iteration stays dirty
    /// for the caller to uncompute.
    #[allow(clippy::too_many_arguments)]
    pub fn inv_sqrt_chain(
        &mut self,
        s: usize,
        x: &[usize; 5],
        a: usize,
        b: usize,
        t: usize,
        fmt: InvSqrtFormat,
    ) {
        let m = fmt.m;
        for combo in seed_combos(m) {
            let mut controls = vec![CtrlBit {
                reg: s,
                bit: m - 1,
                value: combo.e == m - 1,
            }];
            if let Some(bv) = combo.b {
                controls.push(CtrlBit {
                    reg: s,
                    bit: combo.e - 1,
                    value: bv,
                });
            }
            self.bit_flips(x[0], combo.constant, controls, CostClass::Audited);
        }
        for i in 0..NR_ITERATIONS {
            let iter_start = self.stages.len();
            self.square_into(
                x[i],
                a,
                fmt.w_square(),
                false,
                false,
                Rounding::Nearest,
                CostClass::Audited,
            );
            self.multiply_into(
                s,
                a,
                b,
                fmt.w_bmul(),
                false,
                Rounding::Nearest,
                CostClass::Audited,
            );
            self.bit_flips(t, fmt.three(), vec![], CostClass::Audited);
            self.draper_add(b, t, true, CostClass::Audited);
            let scratch_end = self.stages.len();
            self.multiply_into(
                x[i],
                t,
                x[i + 1],
                fmt.w_xmul(),
                false,
                Rounding::Nearest,
                CostClass::Audited,
            );
            if i + 1 < NR_ITERATIONS {
                let scratch: Vec<Stage> = self.stages[iter_start..scratch_end].to_vec();
                self.extend(inverse_stages(&scratch, CostClass::Housekeeping));
            }
        }
    }
}

// --- public circuit constructors -----------------------------------------------

/// In-place addition `tgt += src` (or subtraction) on two m-bit registers.
/// Booked cost: 3/2·m² controlled rotations.
pub fn add_circuit(m: usize, negate: bool) -> Result<ArithCircuit, ArithError> {
    check_width(m)?;
    let mut asm = Assembler::new();
    let src = asm.reg("src", m);
    let tgt = asm.reg("tgt", m);
    asm.draper_add(src, tgt, negate, CostClass::Audited);
    Ok(asm.finish())
}

/// Controlled addition ladder `tgt += src if ctrl` on m-bit registers, with
/// the target register entering and leaving Fourier form around it (the
/// Fourier pair is the caller's, booked as housekeeping; the audited cost is
/// the ladder's 5/2·m²).
pub fn controlled_add_circuit(m: usize) -> Result<ArithCircuit, ArithError> {
    check_width(m)?;
    let mut asm = Assembler::new();
    let ctrl = asm.reg("ctrl", 1);
    let src = asm.reg("src", m);
    let tgt = asm.reg("tgt", m);
    asm.fourier(tgt, false, CostClass::Housekeeping);
    asm.controlled_add_ladder(
        src,
        tgt,
        false,
        CtrlBit {
            reg: ctrl,
            bit: 0,
            value: true,
        },
        CostClass::Audited,
    );
    asm.fourier(tgt, true, CostClass::Housekeeping);
    Ok(asm.finish())
}

/// Multiply-accumulate `acc += Σ_s b_s·⌊a·2^{s−window}⌋ mod 2^m`. With
/// window = 0 this is plain `acc += a·b mod 2^m`. Booked cost:
/// 5/4·m³ + m² controlled rotations.
pub fn multiply_circuit(
    m: usize,
    window: u32,
    rounding: Rounding,
) -> Result<ArithCircuit, ArithError> {
    check_width(m)?;
    let mut asm = Assembler::new();
    let a = asm.reg("a", m);
    let b = asm.reg("b", m);
    let acc = asm.reg("acc", m);
    asm.multiply_into(a, b, acc, window, false, rounding, CostClass::Audited);
    Ok(asm.finish())
}

/// Square-accumulate `acc += ⌊x²·2^{−window}⌋ mod 2^m`, treating x as
/// two's-complement when `signed`. Booked like a multiply.
pub fn square_circuit(
    m: usize,
    window: u32,
    signed: bool,
    rounding: Rounding,
) -> Result<ArithCircuit, ArithError> {
    check_width(m)?;
    let mut asm = Assembler::new();
    let x = asm.reg("x", m);
    let acc = asm.reg("acc", m);
    asm.square_into(x, acc, window, false, signed, rounding, CostClass::Audited);
    Ok(asm.finish())
}

/// Squared distance of two points whose coordinates sit in m-bit registers:
/// per axis, the difference is formed in place on the first point's register
/// (two's complement) and its signed square accumulates into `acc`. The
/// differences are left in place for the caller to consume and restore.
/// Booked cost for `axes` = 3: 15/4·m³ + 15/2·m². Valid when every
/// |difference| < 2^{m−1}.
pub fn r_squared_circuit(m: usize, axes: usize, window: u32) -> Result<ArithCircuit, ArithError> {
    check_width(m)?;
    let mut asm = Assembler::new();
    let xa: Vec<usize> = (0..axes).map(|i| asm.reg(&format!("xa{i}"), m)).collect();
    let xb: Vec<usize> = (0..axes).map(|i| asm.reg(&format!("xb{i}"), m)).collect();
    let acc = asm.reg("acc", m);
    for i in 0..axes {
        asm.draper_add(xb[i], xa[i], true, CostClass::Audited);
    }
    for i in 0..axes {
        asm.square_into(
            xa[i],
            acc,
            window,
            false,
            true,
            Rounding::Floor,
            CostClass::Audited,
        );
    }
    Ok(asm.finish())
}

/// Forward-only reciprocal square root: X₄ ≈ 2^fx/√S for S in the top two
/// octaves of an m-bit register. Booked cost: 15·m³ + 18·m² plus the seed
/// table's raw census. Register order: S, X0..X4, A, B, T.
pub fn inv_sqrt_circuit(m: usize) -> Result<ArithCircuit, ArithError> {
    let fmt = InvSqrtFormat::new(m)?;
    let mut asm = Assembler::new();
    let s = asm.reg("s", m);
    let x = [
        asm.reg("x0", m),
        asm.reg("x1", m),
        asm.reg("x2", m),
        asm.reg("x3", m),
        asm.reg("x4", m),
    ];
    let a = asm.reg("a", m);
    let b = asm.reg("b", m);
    let t = asm.reg("t", m);
    asm.inv_sqrt_chain(s, &x, a, b, t, fmt);
    Ok(asm.finish())
}

/// Register roles of [`coulomb_pair_circuit`].
#[derive(Debug, Clone)]
pub struct CoulombRegs {
    pub pos_a: Vec<usize>,
    pub pos_b: Vec<usize>,
    pub r2: usize,
    pub x: [usize; 5],
    pub scratch: [usize; 3],
    /// Present only when a writer constant was given.
    pub acc: Option<usize>,
}

/// One pair's Coulomb contribution: squared distance, reciprocal square
/// root, then (optionally) a writer that accumulates X₄ scaled by the
/// classical constant `c` into an accumulator register of width `acc_width`,
/// followed by full uncomputation of every intermediate, restoring the
/// position registers. Audited cost: 75/4·m³ + 51/2·m² (+ seed census) per
/// the per-pair operation budget; the writer and the uncomputation are booked
/// under their own classes.
pub fn coulomb_pair_circuit(
    m: usize,
    axes: usize,
    window: u32,
    writer: Option<(u128, u32, usize)>,
) -> Result<(ArithCircuit, CoulombRegs), ArithError> {
    let fmt = InvSqrtFormat::new(m)?;
    let mut asm = Assembler::new();
    let pos_a: Vec<usize> = (0..axes).map(|i| asm.reg(&format!("xa{i}"), m)).collect();
    let pos_b: Vec<usize> = (0..axes).map(|i| asm.reg(&format!("xb{i}"), m)).collect();
    let r2 = asm.reg("r2", m);
    let x = [
        asm.reg("x0", m),
        asm.reg("x1", m),
        asm.reg("x2", m),
        asm.reg("x3", m),
        asm.reg("x4", m),
    ];
    let a = asm.reg("a", m);
    let b = asm.reg("b", m);
    let t = asm.reg("t", m);
    let acc = writer.map(|(_, _, acc_width)| asm.reg("acc", acc_width));

    let fwd_start = asm.stages.len();
    for i in 0..axes {
        asm.draper_add(pos_b[i], pos_a[i], true, CostClass::Audited);
    }
    for i in 0..axes {
        asm.square_into(
            pos_a[i],
            r2,
            window,
            false,
            true,
            Rounding::Floor,
            CostClass::Audited,
        );
    }
    asm.inv_sqrt_chain(r2, &x, a, b, t, fmt);
    let fwd_end = asm.stages.len();

    if let (Some((c, w_c, _)), Some(acc)) = (writer, acc) {
        let w_acc = asm.layout.get(acc).width as u32;
        asm.fourier(acc, false, CostClass::Writer);
        let mut s_bit = 0u32;
        let mut c_left = c;
        while c_left != 0 {
            if c_left & 1 == 1 {
                let shift = s_bit as i32 - w_c as i32;
                if shift + (asm.layout.get(x[4]).width as i32) > 0 {
                    let q = 2 * asm.width(x[4]) * w_acc as u128;
                    asm.push(Stage::Ladder {
                        src: x[4],
                        tgt: acc,
                        shift,
                        negate: false,
                        control: None,
                        book: Booking {
                            class: CostClass::Writer,
                            quarters: q,
                        },
                    });
                }
            }
            c_left >>= 1;
            s_bit += 1;
        }
        asm.fourier(acc, true, CostClass::Writer);
    }

    let fwd: Vec<Stage> = asm.stages[fwd_start..fwd_end].to_vec();
    asm.extend(inverse_stages(&fwd, CostClass::Housekeeping));

    let regs = CoulombRegs {
        pos_a,
        pos_b,
        r2,
        x,
        scratch: [a, b, t],
        acc,
    };
    Ok((asm.finish(), regs))
}

/// Register roles of [`kinetic_circuit`].
#[derive(Debug, Clone)]
pub struct KineticRegs {
    pub momentum: usize,
    pub magnitude: usize,
    pub square: usize,
    pub acc: usize,
}

/// Kinetic-energy phase value from a signed momentum index: the magnitude of
/// the n-bit two's-complement momentum is formed in a fresh register, squared
/// exactly into a (2n−1)-bit register, scaled by the classical constant
/// `scale` (windowed by `w_scale`, floor) into the m-bit accumulator, and the
/// intermediates are uncomputed.
pub fn kinetic_circuit(
    n: usize,
    m: usize,
    scale: u128,
    w_scale: u32,
) -> Result<(ArithCircuit, KineticRegs), ArithError> {
    check_width(n)?;
    check_width(m)?;
    let mut asm = Assembler::new();
    let momentum = asm.reg("p", n);
    let magnitude = asm.reg("mag", n);
    let square = asm.reg("sq", 2 * n - 1);
    let acc = asm.reg("acc", m);

    let fwd_start = asm.stages.len();
    asm.fourier(magnitude, false, CostClass::Audited);
    asm.controlled_add_ladder(
        momentum,
        magnitude,
        false,
        CtrlBit {
            reg: momentum,
            bit: n - 1,
            value: false,
        },
        CostClass::Audited,
    );
    asm.controlled_add_ladder(
        momentum,
        magnitude,
        true,
        CtrlBit {
            reg: momentum,
            bit: n - 1,
            value: true,
        },
        CostClass::Audited,
    );
    asm.fourier(magnitude, true, CostClass::Audited);
    asm.square_into(
        magnitude,
        square,
        0,
        false,
        false,
        Rounding::Floor,
        CostClass::Audited,
    );
    let fwd_end = asm.stages.len();

    asm.fourier(acc, false, CostClass::Writer);
    let mut s_bit = 0u32;
    let mut left = scale;
    while left != 0 {
        if left & 1 == 1 {
            let shift = s_bit as i32 - w_scale as i32;
            if shift + (asm.layout.get(square).width as i32) > 0 {
                let q = 2 * asm.width(square) * asm.width(acc);
                asm.push(Stage::Ladder {
                    src: square,
                    tgt: acc,
                    shift,
                    negate: false,
                    control: None,
                    book: Booking {
                        class: CostClass::Writer,
                        quarters: q,
                    },
                });
            }
        }
        left >>= 1;
        s_bit += 1;
    }
    asm.fourier(acc, true, CostClass::Writer);

    let fwd: Vec<Stage> = asm.stages[fwd_start..fwd_end].to_vec();
    asm.extend(inverse_stages(&fwd, CostClass::Housekeeping));

    let regs = KineticRegs {
        momentum,
        magnitude,
        square,
        acc,
    };
    Ok((asm.finish(), regs))
}

fn check_width(m: usize) -> Result<(), ArithError> {
    if (2..=64).contains(&m) {
        Ok(())
    } else {
        Err(ArithError::BadWidth(m))
    }
}

#[cfg(test)]
mod tests {
    use super::tracker::{basis_index, values_from_index, Tracker};
    use super::*;
    use crate::qsim::CircuitState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Runs the lowered gates on a basis state and reads the final basis
    /// state back, asserting the output stayed computational.
    fn run_statevector(circuit: &ArithCircuit, inputs: &[u128]) -> Vec<u128> {
        let gates = lower::lower_stages(&circuit.stages, &circuit.layout).unwrap();
        let mut st = CircuitState::with_cap(circuit.qubits(), 26).unwrap();
        st.set_basis(basis_index(&circuit.layout, inputs));
        st.apply_circuit(&gates).unwrap();
        let (idx, p) = st.modal_basis();
        assert!(p > 1.0 - 1e-9, "output not a basis state: p={p}");
        values_from_index(&circuit.layout, idx)
    }

    fn run_tracker(circuit: &ArithCircuit, inputs: &[u128]) -> Vec<u128> {
        let mut tr = Tracker::new(&circuit.layout);
        for (reg, &v) in inputs.iter().enumerate() {
            tr.set(reg, v, &circuit.layout).unwrap();
        }
        tr.run(&circuit.stages, &circuit.layout).unwrap();
        tr.values().to_vec()
    }

    /// Both execution paths, asserted equal.
    fn run_both(circuit: &ArithCircuit, inputs: &[u128]) -> Vec<u128> {
        let sv = run_statevector(circuit, inputs);
        let tr = run_tracker(circuit, inputs);
        assert_eq!(sv, tr, "statevector and tracker disagree for {inputs:?}");
        sv
    }

    #[test]
    fn add_exhaustive_m3() {
        for negate in [false, true] {
            let c = add_circuit(3, negate).unwrap();
            for a in 0..8u128 {
                for b in 0..8u128 {
                    let out = run_both(&c, &[a, b]);
                    let want = if negate {
                        oracle::sub(b, a, 3)
                    } else {
                        oracle::add(a, b, 3)
                    };
                    assert_eq!(out, vec![a, want]);
                }
            }
        }
    }

    #[test]
    fn controlled_add_exhaustive_m3() {
        let c = controlled_add_circuit(3).unwrap();
        for ctrl in 0..2u128 {
            for a in 0..8u128 {
                for b in 0..8u128 {
                    let out = run_both(&c, &[ctrl, a, b]);
                    let want = if ctrl == 1 { oracle::add(a, b, 3) } else { b };
                    assert_eq!(out, vec![ctrl, a, want]);
                }
            }
        }
    }

    #[test]
    fn multiply_exhaustive_m3_plain_and_windowed() {
        for (window, rounding) in [
            (0u32, Rounding::Floor),
            (2, Rounding::Floor),
            (2, Rounding::Nearest),
        ] {
            let c = multiply_circuit(3, window, rounding).unwrap();
            for a in 0..8u128 {
                for b in 0..8u128 {
                    for acc in [0u128, 5] {
                        let out = run_both(&c, &[a, b, acc]);
                        let want = oracle::multiply_acc(acc, a, b, 3, window, 3, rounding);
                        assert_eq!(out, vec![a, b, want], "w={window} {rounding:?} a={a} b={b}");
                    }
                }
            }
        }
    }

    #[test]
    fn square_exhaustive_m3_signed_and_unsigned() {
        for signed in [false, true] {
            for window in [0u32, 1, 3] {
                let c = square_circuit(3, window, signed, Rounding::Floor).unwrap();
                for x in 0..8u128 {
                    for acc in [0u128, 3] {
                        let out = run_both(&c, &[x, acc]);
                        let want =
                            oracle::square_acc(acc, x, 3, window, 3, signed, Rounding::Floor);
                        assert_eq!(out, vec![x, want], "signed={signed} w={window} x={x}");
                    }
                }
            }
        }
    }

    #[test]
    fn r_squared_exhaustive_m3_one_axis() {
        let c = r_squared_circuit(3, 1, 1).unwrap();
        for xa in 0..8u128 {
            for xb in 0..8u128 {
                let out = run_both(&c, &[xa, xb, 0]);
                let mut regs = [xa];
                let want = oracle::r_squared(&mut regs, &[xb], 3, 1);
                assert_eq!(out, vec![regs[0], xb, want]);
            }
        }
    }

    #[test]
    fn kinetic_exhaustive_small() {
        let (c, regs) = kinetic_circuit(3, 6, 0b101, 2).unwrap();
        for k in 0..8u128 {
            let out = run_both(&c, &[k, 0, 0, 0]);
            let want = oracle::kinetic_value(k, 3, 0b101, 2, 6);
            assert_eq!(out[regs.momentum], k);
            assert_eq!(out[regs.magnitude], 0, "magnitude not uncomputed");
            assert_eq!(out[regs.square], 0, "square not uncomputed");
            assert_eq!(out[regs.acc], want, "k={k}");
        }
    }

    #[test]
    fn inv_sqrt_statevector_exhaustive_m2() {
        let c = inv_sqrt_circuit(2).unwrap();
        for s in 0..4u128 {
            let out = run_both(&c, &[s, 0, 0, 0, 0, 0, 0, 0, 0]);
            let x = oracle::inv_sqrt_iterates(s, 2);
            assert_eq!(&out[1..6], &x[..], "s={s}");
            // Scratch from the final iteration: A = x3², B = S·A, T = 3 − B.
            let fmt = InvSqrtFormat::new(2).unwrap();
            let a = oracle::square_acc(0, x[3], 2, fmt.w_square(), 2, false, Rounding::Nearest);
            let b = oracle::multiply_acc(0, s, a, 2, fmt.w_bmul(), 2, Rounding::Nearest);
            let t = oracle::sub(fmt.three(), b, 2);
            assert_eq!(&out[6..9], &[a, b, t]);
        }
    }

    #[test]
    fn inv_sqrt_tracker_exhaustive_small_widths() {
        for m in [3usize, 4, 5] {
            let c = inv_sqrt_circuit(m).unwrap();
            for s in 0..1u128 << m {
                let out = run_tracker(&c, &[s, 0, 0, 0, 0, 0, 0, 0, 0]);
                let x = oracle::inv_sqrt_iterates(s, m);
                assert_eq!(&out[1..6], &x[..], "m={m} s={s}");
            }
        }
    }

    #[test]
    fn multiply_random_m5_statevector() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let plain = multiply_circuit(5, 0, Rounding::Floor).unwrap();
        let windowed = multiply_circuit(5, 3, Rounding::Nearest).unwrap();
        for _ in 0..40 {
            let (a, b, acc) = (
                rng.gen_range(0..32u128),
                rng.gen_range(0..32u128),
                rng.gen_range(0..32u128),
            );
            let out = run_both(&plain, &[a, b, acc]);
            assert_eq!(out[2], oracle::multiply_acc(acc, a, b, 5, 0, 5, Rounding::Floor));
            let out = run_both(&windowed, &[a, b, acc]);
            assert_eq!(
                out[2],
                oracle::multiply_acc(acc, a, b, 5, 3, 5, Rounding::Nearest)
            );
        }
    }

    #[test]
    fn coulomb_tracker_matches_oracle_and_uncomputes() {
        let m = 3;
        let (c, regs) = coulomb_pair_circuit(m, 1, 1, Some((0b101, 2, 3))).unwrap();
        for xa in 0..8u128 {
            for xb in 0..8u128 {
                let mut inputs = vec![0u128; c.layout.registers().len()];
                inputs[regs.pos_a[0]] = xa;
                inputs[regs.pos_b[0]] = xb;
                let out = run_tracker(&c, &inputs);
                let mut coords = [xa];
                let want = oracle::coulomb_acc(&mut coords, &[xb], m, 1, 0b101, 2, 3);
                assert_eq!(out[regs.acc.unwrap()], want, "xa={xa} xb={xb}");
                // Everything else restored.
                assert_eq!(out[regs.pos_a[0]], xa);
                assert_eq!(out[regs.pos_b[0]], xb);
                assert_eq!(out[regs.r2], 0);
                for &x in &regs.x {
                    assert_eq!(out[x], 0);
                }
                for &sc in &regs.scratch {
                    assert_eq!(out[sc], 0);
                }
            }
        }
    }

    #[test]
    fn coulomb_tracker_three_axes_random_m5() {
        let m = 5;
        let (c, regs) = coulomb_pair_circuit(m, 3, 3, Some((0b1101, 4, 6))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        for _ in 0..500 {
            let xa: Vec<u128> = (0..3).map(|_| rng.gen_range(0..32u128)).collect();
            let xb: Vec<u128> = (0..3).map(|_| rng.gen_range(0..32u128)).collect();
            let mut inputs = vec![0u128; c.layout.registers().len()];
            for i in 0..3 {
                inputs[regs.pos_a[i]] = xa[i];
                inputs[regs.pos_b[i]] = xb[i];
            }
            let out = run_tracker(&c, &inputs);
            let mut coords = xa.clone();
            let want = oracle::coulomb_acc(&mut coords, &xb, m, 3, 0b1101, 4, 6);
            assert_eq!(out[regs.acc.unwrap()], want);
            for i in 0..3 {
                assert_eq!(out[regs.pos_a[i]], xa[i]);
            }
        }
    }

    #[test]
    fn audited_budgets_match_formulas_exactly() {
        use super::audit::{audit_circuit, AuditKind};
        for kind in [AuditKind::Add, AuditKind::ControlledAdd, AuditKind::Multiply] {
            for m in [2usize, 4, 8] {
                let row = audit_circuit(kind, m).unwrap();
                assert_eq!(
                    row.measured_q, row.formula_q,
                    "{} m={m}: {} vs {}",
                    kind.name(),
                    row.measured_q,
                    row.formula_q
                );
            }
        }
        let row = audit_circuit(AuditKind::CoulombPair, 16).unwrap();
        let ratio = row.ratio();
        assert!(
            (0.98..=1.02).contains(&ratio),
            "coulomb ratio {ratio} out of band"
        );
        // The seed census puts the measured cost strictly above the formula.
        assert!(row.measured_q > row.formula_q);
    }

    #[test]
    fn raw_census_of_add_ladder() {
        let c = add_circuit(5, false).unwrap();
        let t = lower::raw_census(&c.stages, &c.layout).unwrap();
        // Fourier pair: 2·(5·4/2) controlled phases; ladder: 5·6/2.
        assert_eq!(t.controlled_phase, 20 + 15);
        assert_eq!(t.single_qubit, 10);
        assert_eq!(t.swap, 0);
    }

    #[test]
    fn forward_then_inverse_restores_everything() {
        let c = multiply_circuit(4, 2, Rounding::Nearest).unwrap();
        let mut stages = c.stages.clone();
        stages.extend(inverse_stages(&c.stages, CostClass::Housekeeping));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let inputs: Vec<u128> = (0..3).map(|_| rng.gen_range(0..16u128)).collect();
            let mut tr = Tracker::new(&c.layout);
            for (reg, &v) in inputs.iter().enumerate() {
                tr.set(reg, v, &c.layout).unwrap();
            }
            tr.run(&stages, &c.layout).unwrap();
            assert_eq!(tr.values(), &inputs[..]);
        }
    }

    #[test]
    fn bare_ladder_outside_fourier_form_is_rejected() {
        let mut asm = Assembler::new();
        let a = asm.reg("a", 3);
        let b = asm.reg("b", 3);
        asm.add_ladder(a, b, false, CostClass::Audited);
        let c = asm.finish();
        assert!(lower::lower_stages(&c.stages, &c.layout).is_err());
        let mut tr = Tracker::new(&c.layout);
        assert!(tr.run(&c.stages, &c.layout).is_err());
    }

    #[test]
    fn seed_constants_fit_registers() {
        for m in 2..=20 {
            for combo in seed_combos(m) {
                assert!(combo.constant < 1u128 << m, "m={m} {combo:?}");
                assert!(combo.constant >= 1);
            }
        }
    }
}
