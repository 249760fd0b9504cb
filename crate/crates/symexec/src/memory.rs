//! Byte-addressed symbolic memory and call data.

use std::collections::BTreeMap;

use ceiscan_evm::{Opcode, U256};

use crate::term::{app, konst, low_mask, word, Term, T};

/// One byte: a constant, or byte `i` (0 = most significant) of a word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ByteVal {
    Const(u8),
    Of(T, u8),
}

pub fn word_bytes(t: &T) -> Vec<ByteVal> {
    match t.as_const() {
        Some(v) => v.to_be_bytes::<32>().iter().map(|b| ByteVal::Const(*b)).collect(),
        None => (0..32).map(|i| ByteVal::Of(t.clone(), i)).collect(),
    }
}

fn positions_mask(p: usize, n: usize) -> U256 {
    low_mask(8 * (32 - p)) & !low_mask(8 * (32 - p - n))
}

/// Reassembles a 32-byte big-endian word.
pub fn assemble(bytes: &[ByteVal]) -> T {
    debug_assert_eq!(bytes.len(), 32);
    if let Some(ByteVal::Of(w, 0)) = bytes.first() {
        if bytes
            .iter()
            .enumerate()
            .all(|(k, b)| matches!(b, ByteVal::Of(x, i) if x == w && *i as usize == k))
        {
            return w.clone();
        }
    }
    let mut constant = [0u8; 32];
    let mut parts: Vec<T> = Vec::new();
    let mut k = 0;
    while k < 32 {
        match &bytes[k] {
            ByteVal::Const(c) => {
                constant[k] = *c;
                k += 1;
            }
            ByteVal::Of(w, i0) => {
                let (p, i0) = (k, *i0 as usize);
                let mut n = 1;
                while p + n < 32 && matches!(&bytes[p + n], ByteVal::Of(x, i) if x == w && *i as usize == i0 + n) {
                    n += 1;
                }
                let shifted = if i0 > p {
                    app(Opcode::SHL, vec![word(8 * (i0 - p) as u64), w.clone()])
                } else if p > i0 {
                    app(Opcode::SHR, vec![word(8 * (p - i0) as u64), w.clone()])
                } else {
                    w.clone()
                };
                // after the shift, position q holds byte q + i0 - p when in range
                let garbage_before = p >= 1 && i0 >= 1;
                let garbage_after = p + n < 32 && i0 + n < 32;
                let part = if garbage_before || garbage_after {
                    app(Opcode::AND, vec![konst(positions_mask(p, n)), shifted])
                } else {
                    shifted
                };
                parts.push(part);
                k = p + n;
            }
        }
    }
    let mut acc = konst(U256::from_be_bytes(constant));
    for p in parts {
        acc = app(Opcode::OR, vec![acc, p]);
    }
    acc
}

/// The byte at big-endian position `i` of `t`, as a term.
pub fn byte_term(b: &ByteVal) -> T {
    match b {
        ByteVal::Const(c) => word(*c as u64),
        ByteVal::Of(w, i) => app(Opcode::BYTE, vec![word(*i as u64), w.clone()]),
    }
}

pub fn load_word(data: &[ByteVal], offset: usize) -> T {
    let bytes: Vec<ByteVal> = (0..32)
        .map(|k| data.get(offset + k).cloned().unwrap_or(ByteVal::Const(0)))
        .collect();
    assemble(&bytes)
}

#[derive(Clone, Debug, Default)]
pub struct Memory {
    bytes: BTreeMap<usize, ByteVal>,
    /// Highest touched offset, rounded up to a word.
    pub size: usize,
}

impl Memory {
    fn touch(&mut self, offset: usize, len: usize) {
        if len > 0 {
            self.size = self.size.max((offset + len).div_ceil(32) * 32);
        }
    }

    pub fn read(&mut self, offset: usize, len: usize) -> Vec<ByteVal> {
        self.touch(offset, len);
        (offset..offset + len)
            .map(|k| self.bytes.get(&k).cloned().unwrap_or(ByteVal::Const(0)))
            .collect()
    }

    pub fn write(&mut self, offset: usize, data: &[ByteVal]) {
        self.touch(offset, data.len());
        for (k, b) in data.iter().enumerate() {
            match b {
                ByteVal::Const(0) => {
                    self.bytes.remove(&(offset + k));
                }
                other => {
                    self.bytes.insert(offset + k, other.clone());
                }
            }
        }
    }

    pub fn load(&mut self, offset: usize) -> T {
        let bytes = self.read(offset, 32);
        assemble(&bytes)
    }

    pub fn store(&mut self, offset: usize, value: &T) {
        self.write(offset, &word_bytes(value));
    }

    pub fn store8(&mut self, offset: usize, value: &T) {
        let b = match value.as_const() {
            Some(v) => ByteVal::Const(v.byte(0)),
            None => ByteVal::Of(value.clone(), 31),
        };
        self.write(offset, &[b]);
    }
}

/// Whether every byte is known, for hashing concrete regions.
pub fn all_const(bytes: &[ByteVal]) -> Option<Vec<u8>> {
    bytes
        .iter()
        .map(|b| match b {
            ByteVal::Const(c) => Some(*c),
            ByteVal::Of(w, i) => match &**w {
                Term::Const(v) => Some(v.byte(31 - *i as usize)),
                _ => None,
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::term::var;

    fn env() -> BTreeMap<String, U256> {
        BTreeMap::from([
            ("a".to_string(), U256::from_be_bytes([0x11u8; 32]) + U256::from(0x0102)),
            ("b".to_string(), U256::MAX - U256::from(77)),
        ])
    }

    /// Byte-by-byte reference: the concrete value of each byte, assembled.
    fn reference(bytes: &[ByteVal], env: &BTreeMap<String, U256>) -> U256 {
        let mut out = [0u8; 32];
        for (k, b) in bytes.iter().enumerate() {
            out[k] = match b {
                ByteVal::Const(c) => *c,
                ByteVal::Of(w, i) => w.eval(env).byte(31 - *i as usize),
            };
        }
        U256::from_be_bytes(out)
    }

    #[test]
    fn word_roundtrip_is_syntactic() {
        let a = var("a", 256);
        let mut m = Memory::default();
        m.store(64, &a);
        assert_eq!(m.load(64), a);
        assert_eq!(m.size, 96);
    }

    #[test]
    fn unaligned_loads_match_bytewise_reference() {
        let (a, b) = (var("a", 256), var("b", 256));
        let env = env();
        for shift in [0usize, 1, 4, 13, 31] {
            for gap in [0usize, 3] {
                let mut m = Memory::default();
                m.store(0, &a);
                m.store(32 + gap, &b);
                m.store8(5, &konst(U256::from(0xab)));
                for off in [0, shift, 32 - shift.min(31), 32 + gap] {
                    let got = m.load(off).eval(&env);
                    let bytes = m.read(off, 32);
                    assert_eq!(got, reference(&bytes, &env), "shift {shift} gap {gap} off {off}");
                }
            }
        }
    }

    #[test]
    fn calldata_argument_after_selector() {
        let mut data: Vec<ByteVal> = [0x2e, 0x1a, 0x7d, 0x4d].iter().map(|b| ByteVal::Const(*b)).collect();
        let arg = var("arg0", 256);
        data.extend(word_bytes(&arg));
        assert_eq!(load_word(&data, 4), arg);
        let first = load_word(&data, 0);
        let sel = app(Opcode::SHR, vec![word(224), first]);
        assert_eq!(sel.as_const(), Some(U256::from(0x2e1a7d4du64)));
    }
}
