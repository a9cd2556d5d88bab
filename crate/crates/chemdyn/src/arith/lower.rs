//! Lowering typed stages to elementary gates.
//!
//! Registers in Fourier form keep their logical coefficient k on qubit
//! (w−1−k) — the swapless transform leaves bits reversed, and every ladder
//! indexes through that reversal rather than paying ⌊w/2⌋ swaps. Negated
//! controls are X-conjugated around the stage; a control that coincides with
//! a ladder's active source bit degenerates to a single-controlled rotation
//! (matching polarity) or drops the partial entirely (contradiction).

use super::{ArithError, Stage};
use crate::qsim::{tally_circuit, Gate, GateTally, RegisterLayout};
use std::collections::HashSet;
use std::f64::consts::PI;

/// Which registers are currently in Fourier form.
#[derive(Debug, Default, Clone)]
pub struct LowerState {
    fourier: HashSet<usize>,
    permissive: bool,
}

impl LowerState {
    /// Census mode: ladders lower without an enclosing Fourier pair (the gate
    /// structure is position-independent), for booking stages in isolation.
    pub fn permissive() -> Self {
        LowerState {
            fourier: HashSet::new(),
            permissive: true,
        }
    }

    fn require(&self, reg: usize, in_fourier: bool, index: usize) -> Result<(), ArithError> {
        if self.permissive || self.fourier.contains(&reg) == in_fourier {
            Ok(())
        } else {
            Err(ArithError::Stage {
                index,
                msg: format!(
                    "register {reg} must be {} Fourier form",
                    if in_fourier { "in" } else { "out of" }
                ),
            })
        }
    }
}

/// Lowers one stage, updating the Fourier-form bookkeeping.
pub fn lower_stage(
    stage: &Stage,
    layout: &RegisterLayout,
    state: &mut LowerState,
) -> Result<Vec<Gate>, ArithError> {
    lower_stage_at(stage, layout, state, 0)
}

fn lower_stage_at(
    stage: &Stage,
    layout: &RegisterLayout,
    state: &mut LowerState,
    index: usize,
) -> Result<Vec<Gate>, ArithError> {
    let mut gates = Vec::new();
    match stage {
        Stage::Fourier { reg, inverse, .. } => {
            state.require(*reg, *inverse, index)?;
            let r = layout.get(*reg);
            let (q0, w) = (r.start, r.width);
            if !*inverse {
                for t in (0..w).rev() {
                    gates.push(Gate::H(q0 + t));
                    for c in (0..t).rev() {
                        let theta = 2.0 * PI * (-((t - c + 1) as f64)).exp2();
                        gates.push(Gate::CPhase(q0 + c, q0 + t, theta));
                    }
                }
                state.fourier.insert(*reg);
            } else {
                for t in 0..w {
                    for c in 0..t {
                        let theta = -2.0 * PI * (-((t - c + 1) as f64)).exp2();
                        gates.push(Gate::CPhase(q0 + c, q0 + t, theta));
                    }
                    gates.push(Gate::H(q0 + t));
                }
                state.fourier.remove(reg);
            }
        }
        Stage::Ladder {
            src,
            tgt,
            shift,
            negate,
            control,
            ..
        } => {
            state.require(*tgt, true, index)?;
            state.require(*src, false, index)?;
            if let Some(c) = control {
                state.require(c.reg, false, index)?;
            }
            let sr = layout.get(*src);
            let tr = layout.get(*tgt);
            debug_assert_ne!(src, tgt);
            let sgn = if *negate { -1.0 } else { 1.0 };
            // A negated control is X-conjugated around the stage. When it
            // lives on the source register, its own partial is skipped below,
            // so the flip never corrupts a bit that feeds a kept partial.
            let conj = control
                .as_ref()
                .filter(|c| !c.value)
                .map(|c| layout.get(c.reg).qubit(c.bit));
            let mut body = Vec::new();
            for j in 0..sr.width {
                let eff = j as i64 + *shift as i64;
                if eff < 0 || eff as usize >= tr.width {
                    continue;
                }
                let eff = eff as usize;
                let src_q = sr.qubit(j);
                let mut extra: Option<usize> = None;
                if let Some(c) = control {
                    if c.reg == *src && c.bit == j {
                        if !c.value {
                            continue; // contradiction: partial never fires
                        } // else the control IS the source bit: degenerate
                    } else {
                        extra = Some(layout.get(c.reg).qubit(c.bit));
                    }
                }
                for k in 0..tr.width - eff {
                    let theta = sgn * 2.0 * PI * ((eff + k) as f64 - tr.width as f64).exp2();
                    let tq = tr.qubit(tr.width - 1 - k);
                    body.push(match extra {
                        None => Gate::CPhase(src_q, tq, theta),
                        Some(cq) => Gate::CCPhase(cq, src_q, tq, theta),
                    });
                }
            }
            if let Some(cq) = conj {
                gates.push(Gate::X(cq));
                gates.extend(body);
                gates.push(Gate::X(cq));
            } else {
                gates.extend(body);
            }
        }
        Stage::ConstLadder {
            tgt,
            value,
            negate,
            controls,
            ..
        } => {
            state.require(*tgt, true, index)?;
            let tr = layout.get(*tgt);
            let w = tr.width;
            let sgn = if *negate { -1.0 } else { 1.0 };
            let modulus = 1u128 << w;
            let v = *value & (modulus - 1);
            let ctrl_qubits: Vec<usize> = controls
                .iter()
                .map(|c| layout.get(c.reg).qubit(c.bit))
                .collect();
            let conj: Vec<usize> = controls
                .iter()
                .filter(|c| !c.value)
                .map(|c| layout.get(c.reg).qubit(c.bit))
                .collect();
            let mut body = Vec::new();
            for k in 0..w {
                let units = (v << k) & (modulus - 1);
                if units == 0 {
                    continue;
                }
                let theta = sgn * 2.0 * PI * units as f64 / modulus as f64;
                let tq = tr.qubit(w - 1 - k);
                body.push(match ctrl_qubits.len() {
                    0 => Gate::Phase(tq, theta),
                    1 => Gate::CPhase(ctrl_qubits[0], tq, theta),
                    2 => Gate::CCPhase(ctrl_qubits[0], ctrl_qubits[1], tq, theta),
                    n => {
                        return Err(ArithError::Stage {
                            index,
                            msg: format!("constant ladder with {n} controls"),
                        })
                    }
                });
            }
            for &q in &conj {
                gates.push(Gate::X(q));
            }
            gates.extend(body);
            for &q in &conj {
                gates.push(Gate::X(q));
            }
        }
        Stage::BitFlips {
            tgt,
            mask,
            controls,
            ..
        } => {
            state.require(*tgt, false, index)?;
            for c in controls {
                state.require(c.reg, false, index)?;
            }
            let tr = layout.get(*tgt);
            let ctrl_qubits: Vec<usize> = controls
                .iter()
                .map(|c| layout.get(c.reg).qubit(c.bit))
                .collect();
            let conj: Vec<usize> = controls
                .iter()
                .filter(|c| !c.value)
                .map(|c| layout.get(c.reg).qubit(c.bit))
                .collect();
            let mut body = Vec::new();
            for i in 0..tr.width {
                if mask >> i & 1 == 0 {
                    continue;
                }
                let tq = tr.qubit(i);
                debug_assert!(!ctrl_qubits.contains(&tq));
                match ctrl_qubits.len() {
                    0 => body.push(Gate::X(tq)),
                    1 => body.push(Gate::CNot(ctrl_qubits[0], tq)),
                    2 => {
                        // Doubly-controlled X as H·CCZ·H on the target.
                        body.push(Gate::H(tq));
                        body.push(Gate::CCPhase(ctrl_qubits[0], ctrl_qubits[1], tq, PI));
                        body.push(Gate::H(tq));
                    }
                    n => {
                        return Err(ArithError::Stage {
                            index,
                            msg: format!("bit flips with {n} controls"),
                        })
                    }
                }
            }
            for &q in &conj {
                gates.push(Gate::X(q));
            }
            gates.extend(body);
            for &q in &conj {
                gates.push(Gate::X(q));
            }
        }
    }
    Ok(gates)
}

/// Lowers a stage list with strict Fourier-form checking.
pub fn lower_stages(stages: &[Stage], layout: &RegisterLayout) -> Result<Vec<Gate>, ArithError> {
    let mut state = LowerState::default();
    let mut gates = Vec::new();
    for (i, s) in stages.iter().enumerate() {
        gates.extend(lower_stage_at(s, layout, &mut state, i)?);
    }
    Ok(gates)
}

/// Raw gate census of a stage list.
pub fn raw_census(stages: &[Stage], layout: &RegisterLayout) -> Result<GateTally, ArithError> {
    let mut state = LowerState::permissive();
    let mut tally = GateTally::default();
    for (i, s) in stages.iter().enumerate() {
        let gates = lower_stage_at(s, layout, &mut state, i)?;
        let mut t = tally_circuit(&gates);
        t.oracle_ops = 0;
        tally.add(&t);
    }
    Ok(tally)
}
