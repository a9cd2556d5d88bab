//! Stage-semantic integer execution.
//!
//! Interprets a stage list directly on classical register values — Fourier
//! stages toggle a per-register form flag, ladders add shifted values,
//! constant ladders add constants, bit flips XOR — giving a fast third
//! execution path that must agree bit for bit with both the statevector
//! simulation of the lowered gates and the value-wise oracle. Strict form
//! checking here is what catches a ladder emitted outside its Fourier pair.

use super::{oracle, ArithError, CtrlBit, Stage};
use crate::qsim::RegisterLayout;

/// Classical register values plus Fourier-form flags.
#[derive(Debug, Clone)]
pub struct Tracker {
    values: Vec<u128>,
    fourier: Vec<bool>,
}

impl Tracker {
    pub fn new(layout: &RegisterLayout) -> Self {
        let n = layout.registers().len();
        Tracker {
            values: vec![0; n],
            fourier: vec![false; n],
        }
    }

    pub fn set(&mut self, reg: usize, value: u128, layout: &RegisterLayout) -> Result<(), ArithError> {
        let w = layout.get(reg).width;
        if value >> w != 0 {
            return Err(ArithError::InputRange {
                got: value,
                width: w,
            });
        }
        self.values[reg] = value;
        Ok(())
    }

    pub fn get(&self, reg: usize) -> u128 {
        self.values[reg]
    }

    pub fn values(&self) -> &[u128] {
        &self.values
    }

    fn passes(&self, controls: &[CtrlBit], index: usize) -> Result<bool, ArithError> {
        for c in controls {
            if self.fourier[c.reg] {
                return Err(ArithError::Stage {
                    index,
                    msg: format!("control on Fourier-form register {}", c.reg),
                });
            }
        }
        Ok(controls
            .iter()
            .all(|c| (self.values[c.reg] >> c.bit & 1 == 1) == c.value))
    }

    fn require(&self, reg: usize, in_fourier: bool, index: usize) -> Result<(), ArithError> {
        if self.fourier[reg] == in_fourier {
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

    /// Executes the stages in order.
    pub fn run(&mut self, stages: &[Stage], layout: &RegisterLayout) -> Result<(), ArithError> {
        for (index, stage) in stages.iter().enumerate() {
            match stage {
                Stage::Fourier { reg, inverse, .. } => {
                    self.require(*reg, *inverse, index)?;
                    self.fourier[*reg] = !*inverse;
                }
                Stage::Ladder {
                    src,
                    tgt,
                    shift,
                    negate,
                    control,
                    ..
                } => {
                    self.require(*tgt, true, index)?;
                    self.require(*src, false, index)?;
                    let ctrls: Vec<CtrlBit> = control.iter().copied().collect();
                    if self.passes(&ctrls, index)? {
                        let w = layout.get(*tgt).width;
                        let delta = oracle::shift_floor(self.values[*src], *shift);
                        self.values[*tgt] = if *negate {
                            oracle::sub(self.values[*tgt], delta, w)
                        } else {
                            oracle::add(self.values[*tgt], delta & oracle::mask(w), w)
                        };
                    }
                }
                Stage::ConstLadder {
                    tgt,
                    value,
                    negate,
                    controls,
                    ..
                } => {
                    self.require(*tgt, true, index)?;
                    if self.passes(controls, index)? {
                        let w = layout.get(*tgt).width;
                        let v = *value & oracle::mask(w);
                        self.values[*tgt] = if *negate {
                            oracle::sub(self.values[*tgt], v, w)
                        } else {
                            oracle::add(self.values[*tgt], v, w)
                        };
                    }
                }
                Stage::BitFlips {
                    tgt,
                    mask,
                    controls,
                    ..
                } => {
                    self.require(*tgt, false, index)?;
                    if self.passes(controls, index)? {
                        let w = layout.get(*tgt).width;
                        self.values[*tgt] ^= mask & oracle::mask(w);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Basis-state index with each register holding its value.
pub fn basis_index(layout: &RegisterLayout, values: &[u128]) -> usize {
    debug_assert_eq!(values.len(), layout.registers().len());
    let mut idx = 0usize;
    for (reg, &v) in layout.registers().iter().zip(values) {
        debug_assert!(v >> reg.width == 0);
        idx |= (v as usize) << reg.start;
    }
    idx
}

/// Per-register values of a basis-state index.
pub fn values_from_index(layout: &RegisterLayout, index: usize) -> Vec<u128> {
    layout
        .registers()
        .iter()
        .map(|r| ((index >> r.start) as u128) & oracle::mask(r.width))
        .collect()
}
