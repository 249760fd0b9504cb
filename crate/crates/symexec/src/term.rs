//! 256-bit symbolic words.
//!
//! Terms are immutable trees shared through `Rc`. Constructors fold
//! constants and apply a few width-based rewrites so that ABI selector
//! extraction and address masking collapse to the underlying value, which
//! keeps storage keys syntactically comparable.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use ceiscan_evm::arith::eval_pure;
use ceiscan_evm::{Opcode, U256};
use tiny_keccak::{Hasher, Keccak};

pub type T = Rc<Term>;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(U256),
    /// Free variable known to fit in `bits` bits.
    Var(Rc<str>, u16),
    /// Pure word operation; operands in stack order, top first.
    App(Opcode, Vec<T>),
    /// Hash of the concatenation of 32-byte words.
    Keccak(Vec<T>),
}

pub fn konst(v: U256) -> T {
    Rc::new(Term::Const(v))
}

pub fn word(v: u64) -> T {
    konst(U256::from(v))
}

pub fn var(name: &str, bits: u16) -> T {
    Rc::new(Term::Var(name.into(), bits))
}

pub fn low_mask(bits: usize) -> U256 {
    if bits >= 256 {
        U256::MAX
    } else {
        (U256::from(1u8) << bits) - U256::from(1u8)
    }
}

pub fn keccak_bytes(data: &[u8]) -> U256 {
    let mut k = Keccak::v256();
    k.update(data);
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    U256::from_be_bytes(out)
}

fn keccak_words(words: &[U256]) -> U256 {
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_be_bytes::<32>()).collect();
    keccak_bytes(&bytes)
}

impl Term {
    pub fn as_const(&self) -> Option<U256> {
        match self {
            Term::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Upper bound on the number of significant bits.
    pub fn width(&self) -> usize {
        match self {
            Term::Const(v) => v.bit_len(),
            Term::Var(_, bits) => *bits as usize,
            Term::Keccak(_) => 256,
            Term::App(op, a) => match *op {
                Opcode::LT | Opcode::GT | Opcode::SLT | Opcode::SGT | Opcode::EQ | Opcode::ISZERO => 1,
                Opcode::AND => a[0].width().min(a[1].width()),
                Opcode::OR | Opcode::XOR => a[0].width().max(a[1].width()),
                Opcode::BYTE => 8,
                Opcode::SHR => match a[0].as_const() {
                    Some(k) if k < U256::from(256) => a[1].width().saturating_sub(k.to::<usize>()),
                    Some(_) => 0,
                    None => 256,
                },
                Opcode::SHL => match a[0].as_const() {
                    Some(k) if k < U256::from(256) => (a[1].width() + k.to::<usize>()).min(256),
                    _ => 256,
                },
                Opcode::DIV => a[0].width(),
                Opcode::MOD => a[1].width(),
                _ => 256,
            },
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Term::Const(_))
    }

    pub fn vars(&self, out: &mut BTreeMap<Rc<str>, u16>) {
        match self {
            Term::Const(_) => {}
            Term::Var(n, b) => {
                out.insert(n.clone(), *b);
            }
            Term::App(_, a) | Term::Keccak(a) => a.iter().for_each(|t| t.vars(out)),
        }
    }

    pub fn mentions(&self, pred: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Term::Const(_) => false,
            Term::Var(n, _) => pred(n),
            Term::App(_, a) | Term::Keccak(a) => a.iter().any(|t| t.mentions(pred)),
        }
    }

    /// Concrete value under an assignment; unassigned variables are zero.
    /// Hashes are computed for real.
    pub fn eval(&self, env: &BTreeMap<String, U256>) -> U256 {
        match self {
            Term::Const(v) => *v,
            Term::Var(n, _) => env.get(&**n).copied().unwrap_or(U256::ZERO),
            Term::App(op, a) => {
                let args: Vec<U256> = a.iter().map(|t| t.eval(env)).collect();
                eval_pure(*op, &args).expect("only pure opcodes are built")
            }
            Term::Keccak(a) => keccak_words(&a.iter().map(|t| t.eval(env)).collect::<Vec<_>>()),
        }
    }
}

/// Whether `op` can be represented by [`app`].
pub fn is_pure(op: Opcode) -> bool {
    eval_pure(op, &[U256::ZERO; 3]).is_some()
}

/// Builds `op(args)` with folding and light rewriting.
pub fn app(op: Opcode, args: Vec<T>) -> T {
    if let Some(vals) = args.iter().map(|a| a.as_const()).collect::<Option<Vec<_>>>() {
        if let Some(v) = eval_pure(op, &vals) {
            return konst(v);
        }
    }
    let c = |i: usize| args[i].as_const();
    let zero = Some(U256::ZERO);
    match op {
        Opcode::ADD => {
            if c(0) == zero {
                return args[1].clone();
            }
            if c(1) == zero {
                return args[0].clone();
            }
        }
        Opcode::SUB if c(1) == zero => return args[0].clone(),
        Opcode::MUL => {
            if c(0) == zero || c(1) == zero {
                return word(0);
            }
            if c(0) == Some(U256::from(1)) {
                return args[1].clone();
            }
            if c(1) == Some(U256::from(1)) {
                return args[0].clone();
            }
        }
        Opcode::AND => {
            for (m, x) in [(0, 1), (1, 0)] {
                if let Some(mask) = c(m) {
                    if mask.is_zero() {
                        return word(0);
                    }
                    let bits = mask.bit_len();
                    if mask == low_mask(bits) && args[x].width() <= bits {
                        return args[x].clone();
                    }
                }
            }
            if args[0] == args[1] {
                return args[0].clone();
            }
        }
        Opcode::OR | Opcode::XOR => {
            if c(0) == zero {
                return args[1].clone();
            }
            if c(1) == zero {
                return args[0].clone();
            }
        }
        Opcode::SHR => {
            if let Some(k) = c(0) {
                if k.is_zero() {
                    return args[1].clone();
                }
                if k >= U256::from(256) || args[1].width() <= k.to::<usize>() {
                    return word(0);
                }
                if let Term::App(Opcode::OR, parts) = &*args[1] {
                    return app(
                        Opcode::OR,
                        vec![
                            app(Opcode::SHR, vec![args[0].clone(), parts[0].clone()]),
                            app(Opcode::SHR, vec![args[0].clone(), parts[1].clone()]),
                        ],
                    );
                }
            }
        }
        Opcode::SHL => {
            if let Some(k) = c(0) {
                if k.is_zero() {
                    return args[1].clone();
                }
                if k >= U256::from(256) {
                    return word(0);
                }
            }
        }
        Opcode::EQ if args[0] == args[1] => return word(1),
        Opcode::ISZERO => {
            // iszero(iszero(b)) == b for 0/1 values
            if let Term::App(Opcode::ISZERO, inner) = &*args[0] {
                if inner[0].width() <= 1 {
                    return inner[0].clone();
                }
            }
        }
        _ => {}
    }
    Rc::new(Term::App(op, args))
}

pub fn keccak(words: Vec<T>) -> T {
    if let Some(vals) = words.iter().map(|w| w.as_const()).collect::<Option<Vec<_>>>() {
        return konst(keccak_words(&vals));
    }
    Rc::new(Term::Keccak(words))
}

/// The slot a storage key is derived from: the slot itself, the slot
/// inside (nested) mapping hashes, or the hashed base of an array element.
/// Hashed bases come back as the hash value, since constant preimages fold.
pub fn slot_root(key: &Term) -> Option<U256> {
    match key {
        Term::Const(v) => Some(*v),
        Term::Keccak(parts) if parts.len() == 2 => slot_root(&parts[1]),
        Term::Keccak(parts) if parts.len() == 1 => slot_root(&parts[0]),
        Term::App(Opcode::ADD, a) => match (&*a[0], &*a[1]) {
            (Term::Const(v), other) | (other, Term::Const(v)) if !other.is_const() => {
                if matches!(other, Term::Keccak(_)) {
                    slot_root(other)
                } else {
                    Some(*v)
                }
            }
            (Term::Keccak(_), _) => slot_root(&a[0]),
            (_, Term::Keccak(_)) => slot_root(&a[1]),
            _ => None,
        },
        _ => None,
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(v) if *v < U256::from(1u64 << 32) => write!(f, "{v}"),
            Term::Const(v) => write!(f, "{v:#x}"),
            Term::Var(n, _) => write!(f, "{n}"),
            Term::App(op, a) => {
                write!(f, "{}(", op.name().to_lowercase())?;
                for (i, t) in a.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t:?}")?;
                }
                write!(f, ")")
            }
            Term::Keccak(a) => write!(f, "keccak{a:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_extraction_folds() {
        // calldataload(0) with a concrete selector followed by a symbolic word
        let arg = var("arg0", 256);
        let word0 = app(
            Opcode::OR,
            vec![
                konst(U256::from(0x2e1a7d4du64) << 224),
                app(Opcode::SHR, vec![word(32), arg]),
            ],
        );
        let sel = app(Opcode::SHR, vec![word(224), word0]);
        assert_eq!(sel.as_const(), Some(U256::from(0x2e1a7d4du64)));
    }

    #[test]
    fn address_masks_disappear_on_narrow_values() {
        let caller = var("caller", 160);
        let masked = app(Opcode::AND, vec![konst(low_mask(160)), caller.clone()]);
        assert_eq!(masked, caller);
        let wide = var("x", 256);
        assert!(!app(Opcode::AND, vec![konst(low_mask(160)), wide]).is_const());
    }

    #[test]
    fn constants_fold_through_the_shared_evaluator() {
        assert_eq!(app(Opcode::SUB, vec![word(3), word(5)]).as_const(), Some(U256::MAX - U256::from(1)));
        assert_eq!(
            keccak(vec![word(0), word(0)]).as_const(),
            Some(keccak_bytes(&[0u8; 64]))
        );
    }

    #[test]
    fn slot_roots() {
        let k = keccak(vec![var("caller", 160), word(3)]);
        assert_eq!(slot_root(&k), Some(U256::from(3)));
        let nested = keccak(vec![var("a", 160), k.clone()]);
        assert_eq!(slot_root(&nested), Some(U256::from(3)));
        let elem = app(Opcode::ADD, vec![keccak(vec![word(5)]), var("i", 256)]);
        assert_eq!(slot_root(&elem), Some(keccak_bytes(&U256::from(5).to_be_bytes::<32>())));
        assert_eq!(slot_root(&var("x", 256)), None);
    }

    #[test]
    fn eval_matches_folding() {
        let t = app(Opcode::ADD, vec![var("x", 256), word(7)]);
        let env = BTreeMap::from([("x".to_string(), U256::from(5))]);
        assert_eq!(t.eval(&env), U256::from(12));
    }
}
