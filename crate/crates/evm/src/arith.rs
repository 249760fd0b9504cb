//! 256-bit EVM arithmetic on concrete words.

use ruint::aliases::U256;

use crate::opcode::Opcode;

fn is_negative(x: U256) -> bool {
    x.bit(255)
}

fn negate(x: U256) -> U256 {
    U256::ZERO.wrapping_sub(x)
}

fn abs(x: U256) -> U256 {
    if is_negative(x) {
        negate(x)
    } else {
        x
    }
}

pub fn sdiv(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::ZERO;
    }
    let q = abs(a) / abs(b);
    if is_negative(a) != is_negative(b) {
        negate(q)
    } else {
        q
    }
}

pub fn smod(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::ZERO;
    }
    let r = abs(a) % abs(b);
    if is_negative(a) {
        negate(r)
    } else {
        r
    }
}

pub fn slt(a: U256, b: U256) -> bool {
    match (is_negative(a), is_negative(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

pub fn sar(shift: U256, value: U256) -> U256 {
    let neg = is_negative(value);
    if shift >= U256::from(256) {
        return if neg { U256::MAX } else { U256::ZERO };
    }
    let s = shift.to::<usize>();
    if s == 0 {
        return value;
    }
    let shifted = value >> s;
    if neg {
        shifted | (U256::MAX << (256 - s))
    } else {
        shifted
    }
}

pub fn signextend(byte_index: U256, value: U256) -> U256 {
    if byte_index >= U256::from(31) {
        return value;
    }
    let bit = byte_index.to::<usize>() * 8 + 7;
    let mask = (U256::from(1) << bit) - U256::from(1);
    if value.bit(bit) {
        value | !mask
    } else {
        value & mask
    }
}

/// `BYTE(i, x)`: the i-th byte of x counting from the most significant.
pub fn byte(index: U256, value: U256) -> U256 {
    if index >= U256::from(32) {
        return U256::ZERO;
    }
    let i = index.to::<usize>();
    U256::from(value.to_be_bytes::<32>()[i])
}

pub fn shl(shift: U256, value: U256) -> U256 {
    if shift >= U256::from(256) {
        U256::ZERO
    } else {
        value << shift.to::<usize>()
    }
}

pub fn shr(shift: U256, value: U256) -> U256 {
    if shift >= U256::from(256) {
        U256::ZERO
    } else {
        value >> shift.to::<usize>()
    }
}

pub fn exp(base: U256, exponent: U256) -> U256 {
    base.wrapping_pow(exponent)
}

fn bool_word(b: bool) -> U256 {
    if b {
        U256::from(1)
    } else {
        U256::ZERO
    }
}

/// Evaluates a pure stack opcode over concrete operands (top of stack
/// first). Returns `None` for opcodes that are not pure word functions.
pub fn eval_pure(op: Opcode, args: &[U256]) -> Option<U256> {
    let a = |i: usize| args.get(i).copied();
    Some(match op.0 {
        0x01 => a(0)?.wrapping_add(a(1)?),
        0x02 => a(0)?.wrapping_mul(a(1)?),
        0x03 => a(0)?.wrapping_sub(a(1)?),
        0x04 => a(0)?.checked_div(a(1)?).unwrap_or(U256::ZERO),
        0x05 => sdiv(a(0)?, a(1)?),
        0x06 => a(0)?.checked_rem(a(1)?).unwrap_or(U256::ZERO),
        0x07 => smod(a(0)?, a(1)?),
        0x08 => a(0)?.add_mod(a(1)?, a(2)?),
        0x09 => a(0)?.mul_mod(a(1)?, a(2)?),
        0x0a => exp(a(0)?, a(1)?),
        0x0b => signextend(a(0)?, a(1)?),
        0x10 => bool_word(a(0)? < a(1)?),
        0x11 => bool_word(a(0)? > a(1)?),
        0x12 => bool_word(slt(a(0)?, a(1)?)),
        0x13 => bool_word(slt(a(1)?, a(0)?)),
        0x14 => bool_word(a(0)? == a(1)?),
        0x15 => bool_word(a(0)?.is_zero()),
        0x16 => a(0)? & a(1)?,
        0x17 => a(0)? | a(1)?,
        0x18 => a(0)? ^ a(1)?,
        0x19 => !a(0)?,
        0x1a => byte(a(0)?, a(1)?),
        0x1b => shl(a(0)?, a(1)?),
        0x1c => shr(a(0)?, a(1)?),
        0x1d => sar(a(0)?, a(1)?),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(x: u64) -> U256 {
        U256::from(x)
    }

    #[test]
    fn signed_ops() {
        let minus_one = U256::MAX;
        let minus_two = negate(w(2));
        assert_eq!(sdiv(w(4), minus_two), minus_two);
        assert_eq!(smod(negate(w(7)), w(3)), minus_one);
        assert!(slt(minus_one, w(0)));
        assert!(!slt(w(0), minus_one));
        assert_eq!(sar(w(1), minus_two), minus_one);
        assert_eq!(sar(w(300), minus_two), U256::MAX);
        assert_eq!(signextend(w(0), w(0xff)), U256::MAX);
        assert_eq!(signextend(w(0), w(0x7f)), w(0x7f));
    }

    #[test]
    fn shifts_and_bytes() {
        assert_eq!(shl(w(8), w(1)), w(256));
        assert_eq!(shr(w(256), U256::MAX), U256::ZERO);
        assert_eq!(byte(w(31), w(0xab)), w(0xab));
        assert_eq!(byte(w(40), w(0xab)), U256::ZERO);
    }

    #[test]
    fn pure_eval_uses_stack_order() {
        // SUB: a - b with a on top
        assert_eq!(eval_pure(Opcode::SUB, &[w(5), w(3)]), Some(w(2)));
        assert_eq!(eval_pure(Opcode::LT, &[w(1), w(2)]), Some(w(1)));
        assert_eq!(eval_pure(Opcode::DIV, &[w(1), w(0)]), Some(w(0)));
        assert_eq!(eval_pure(Opcode::SLOAD, &[w(1)]), None);
    }
}
