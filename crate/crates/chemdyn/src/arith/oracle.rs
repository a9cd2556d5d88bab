//! Classical fixed-point oracle for every arithmetic circuit.
//!
//! Each function here computes, with plain integer arithmetic, exactly what
//! the corresponding circuit leaves in its registers — including every
//! truncation, rounding carry, two's-complement correction, and modular
//! wraparound. Tests hold circuits to these values bit for bit, so the rules
//! live in one place and are deliberately written value-wise (shifts and
//! masks on whole numbers) rather than stage-wise.

use super::{seed_combos, InvSqrtFormat, Rounding, NR_ITERATIONS};

/// Low-w-bit mask.
pub fn mask(w: usize) -> u128 {
    debug_assert!(w < 128);
    (1u128 << w) - 1
}

/// ⌊v·2^sh⌋ with saturation to zero on deep right shifts.
pub fn shift_floor(v: u128, sh: i32) -> u128 {
    if sh >= 0 {
        if sh >= 128 {
            0
        } else {
            v.wrapping_shl(sh as u32)
        }
    } else {
        let r = -sh;
        if r >= 128 {
            0
        } else {
            v >> r
        }
    }
}

pub fn add(a: u128, b: u128, w: usize) -> u128 {
    (a + b) & mask(w)
}

pub fn sub(a: u128, b: u128, w: usize) -> u128 {
    (a.wrapping_sub(b)) & mask(w)
}

/// Two's-complement value of a w-bit register.
pub fn signed_value(u: u128, w: usize) -> i128 {
    if u >> (w - 1) & 1 == 1 {
        u as i128 - (1i128 << w)
    } else {
        u as i128
    }
}

/// Multiply-accumulate exactly as the circuit performs it:
/// `acc + Σ_{s: bit s of b set} partial(a, s − window) mod 2^w`, where a
/// partial is ⌊a·2^{s−window}⌋, plus the guard bit of `a` at position
/// window−s−1 under `Nearest` rounding (half-up).
pub fn multiply_acc(
    acc: u128,
    a: u128,
    b: u128,
    w_b: usize,
    window: u32,
    w: usize,
    rounding: Rounding,
) -> u128 {
    let mut out = acc & mask(w);
    for s in 0..w_b {
        if b >> s & 1 == 0 {
            continue;
        }
        let sh = s as i32 - window as i32;
        let mut term = shift_floor(a, sh);
        if rounding == Rounding::Nearest && sh < 0 {
            let guard = (-sh - 1) as u32;
            if guard < 128 {
                term += a >> guard & 1;
            }
        }
        out = (out + term) & mask(w);
    }
    out
}

/// Square-accumulate; with `signed`, the source is read as a w_x-bit
/// two's-complement value and the corrections −sign·⌊x·2^{w_x+1−window}⌋ and
/// +sign·2^{2w_x−window} make the accumulated value equal the signed square.
#[allow(clippy::too_many_arguments)]
pub fn square_acc(
    acc: u128,
    x: u128,
    w_x: usize,
    window: u32,
    w: usize,
    signed: bool,
    rounding: Rounding,
) -> u128 {
    let mut out = multiply_acc(acc, x, x, w_x, window, w, rounding);
    if signed && x >> (w_x - 1) & 1 == 1 {
        debug_assert!(window <= w_x as u32 + 1);
        let corr = shift_floor(x, (w_x as u32 + 1 - window) as i32);
        out = sub(out, corr, w);
        out = add(out, shift_floor(1, (2 * w_x) as i32 - window as i32) & mask(w), w);
    }
    out
}

/// In-place coordinate differences (two's complement on the first point's
/// registers) followed by the signed squares accumulating into the returned
/// value. Mirrors the squared-distance circuit; physically meaningful when
/// every |difference| < 2^{m−1}.
pub fn r_squared(xa: &mut [u128], xb: &[u128], m: usize, window: u32) -> u128 {
    let mut acc = 0u128;
    for (a, &b) in xa.iter_mut().zip(xb) {
        *a = sub(*a, b, m);
        acc = square_acc(acc, *a, m, window, m, true, Rounding::Floor);
    }
    acc
}

/// Seed-table lookup: XOR of every matching entry (entries are mutually
/// exclusive, so exactly one applies).
pub fn nr_seed(s: u128, m: usize) -> u128 {
    let mut x0 = 0u128;
    for combo in seed_combos(m) {
        let top_match = (s >> (m - 1) & 1 == 1) == (combo.e == m - 1);
        let b_match = match combo.b {
            None => true,
            Some(bv) => (s >> (combo.e - 1) & 1 == 1) == bv,
        };
        if top_match && b_match {
            x0 ^= combo.constant;
        }
    }
    x0
}

/// All five Newton–Raphson iterates, X₀ through X₄, exactly as the circuit
/// computes them.
pub fn inv_sqrt_iterates(s: u128, m: usize) -> [u128; NR_ITERATIONS + 1] {
    let fmt = InvSqrtFormat { m };
    let mut x = [0u128; NR_ITERATIONS + 1];
    x[0] = nr_seed(s, m);
    for i in 0..NR_ITERATIONS {
        let a = square_acc(0, x[i], m, fmt.w_square(), m, false, Rounding::Nearest);
        let b = multiply_acc(0, s, a, m, fmt.w_bmul(), m, Rounding::Nearest);
        let t = sub(fmt.three(), b, m);
        x[i + 1] = multiply_acc(0, x[i], t, m, fmt.w_xmul(), m, Rounding::Nearest);
    }
    x
}

/// Final inverse-square-root iterate: X₄ ≈ 2^fx/√S on the calibrated domain
/// S ∈ [2^{m−2}, 2^m).
pub fn inv_sqrt(s: u128, m: usize) -> u128 {
    inv_sqrt_iterates(s, m)[NR_ITERATIONS]
}

/// Accumulator increment of one pair's Coulomb circuit: squared distance of
/// the (mutated-in-place) coordinates, reciprocal square root, then the
/// writer's constant multiply ⌊X₄·2^{s−w_c}⌋ summed over set bits of c.
#[allow(clippy::too_many_arguments)]
pub fn coulomb_acc(
    xa: &mut [u128],
    xb: &[u128],
    m: usize,
    window: u32,
    c: u128,
    w_c: u32,
    w_acc: usize,
) -> u128 {
    let r2 = r_squared(xa, xb, m, window);
    let x4 = inv_sqrt(r2, m);
    let mut acc = 0u128;
    let mut s = 0u32;
    let mut left = c;
    while left != 0 {
        if left & 1 == 1 {
            acc = (acc + shift_floor(x4, s as i32 - w_c as i32)) & mask(w_acc);
        }
        left >>= 1;
        s += 1;
    }
    acc
}

/// Kinetic phase value for one momentum index: magnitude of the n-bit
/// two's-complement momentum, exact square, then the classical scale constant
/// applied with floor truncation into the m-bit accumulator.
pub fn kinetic_value(k: u128, n: usize, scale: u128, w_scale: u32, m: usize) -> u128 {
    let sign = k >> (n - 1) & 1 == 1;
    let magnitude = if sign { sub(0, k, n) } else { k };
    let sq = square_acc(0, magnitude, n, 0, 2 * n - 1, false, Rounding::Floor);
    let mut acc = 0u128;
    let mut s = 0u32;
    let mut left = scale;
    while left != 0 {
        if left & 1 == 1 {
            acc = (acc + shift_floor(sq, s as i32 - w_scale as i32)) & mask(m);
        }
        left >>= 1;
        s += 1;
    }
    acc
}
