//! Linear-sweep disassembly of runtime bytecode.

use std::fmt;

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

use crate::opcode::Opcode;

#[derive(Debug, thiserror::Error)]
pub enum HexError {
    #[error("bytecode hex has odd length {0}")]
    OddLength(usize),
    #[error("invalid hex in bytecode: {0}")]
    Invalid(#[from] hex::FromHexError),
}

/// Decodes hex-encoded bytecode. Accepts an optional `0x` prefix and
/// surrounding whitespace.
pub fn decode_hex(text: &str) -> Result<Vec<u8>, HexError> {
    let text = text.trim();
    let text = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if !cleaned.len().is_multiple_of(2) {
        return Err(HexError::OddLength(cleaned.len()));
    }
    Ok(hex::decode(cleaned)?)
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub offset: usize,
    pub opcode: Opcode,
    /// Present iff `opcode` is a PUSH variant (empty for `PUSH0`).
    pub immediate: Option<Vec<u8>>,
}

impl Instruction {
    /// Encoded size in bytes.
    pub fn size(&self) -> usize {
        1 + self.immediate.as_ref().map_or(0, Vec::len)
    }

    pub fn next_offset(&self) -> usize {
        self.offset + self.size()
    }

    pub fn push_value(&self) -> Option<U256> {
        self.immediate
            .as_ref()
            .map(|bytes| U256::try_from_be_slice(bytes).expect("at most 32 bytes"))
    }
}

impl fmt::Debug for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}: {}", self.offset, self.opcode)?;
        if let Some(imm) = &self.immediate {
            if !imm.is_empty() {
                write!(f, " 0x{}", hex::encode(imm))?;
            }
        }
        Ok(())
    }
}

/// Disassembles raw bytecode. Total: undefined bytes keep their value and
/// behave as `INVALID`; a PUSH whose immediate runs past the end of the code
/// becomes a trailing `INVALID` instruction.
pub fn disassemble(code: &[u8]) -> Vec<Instruction> {
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < code.len() {
        let opcode = Opcode(code[pc]);
        let width = opcode.push_width();
        if opcode.is_push() {
            let end = pc + 1 + width;
            if end > code.len() {
                out.push(Instruction {
                    offset: pc,
                    opcode: Opcode::INVALID,
                    immediate: None,
                });
                break;
            }
            out.push(Instruction {
                offset: pc,
                opcode,
                immediate: Some(code[pc + 1..end].to_vec()),
            });
            pc = end;
        } else {
            out.push(Instruction {
                offset: pc,
                opcode,
                immediate: None,
            });
            pc += 1;
        }
    }
    out
}

/// Re-encodes a disassembly.
pub fn assemble(instructions: &[Instruction]) -> Vec<u8> {
    let mut out = Vec::with_capacity(instructions.len() * 2);
    for ins in instructions {
        out.push(ins.opcode.0);
        if let Some(imm) = &ins.immediate {
            out.extend_from_slice(imm);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ops(code: &[u8]) -> Vec<(usize, &'static str, Option<u64>)> {
        disassemble(code)
            .iter()
            .map(|i| {
                (
                    i.offset,
                    i.opcode.name(),
                    i.push_value().map(|v| v.to::<u64>()),
                )
            })
            .collect()
    }

    #[test]
    fn empty_code() {
        assert!(disassemble(&[]).is_empty());
    }

    #[test]
    fn push_jump_jumpdest() {
        assert_eq!(
            ops(&[0x60, 0x01, 0x56, 0x5b]),
            vec![
                (0, "PUSH1", Some(1)),
                (2, "JUMP", None),
                (3, "JUMPDEST", None)
            ]
        );
    }

    #[test]
    fn solc_prologue() {
        // Independently checked against the Yellow Paper opcode table:
        // 0x60 PUSH1, 0x52 MSTORE, 0x34 CALLVALUE.
        assert_eq!(
            ops(&[0x60, 0x80, 0x60, 0x40, 0x52, 0x34]),
            vec![
                (0, "PUSH1", Some(0x80)),
                (2, "PUSH1", Some(0x40)),
                (4, "MSTORE", None),
                (5, "CALLVALUE", None)
            ]
        );
    }

    #[test]
    fn truncated_push_is_invalid() {
        let d = disassemble(&[0x00, 0x61, 0xff]);
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].opcode, Opcode::INVALID);
        assert_eq!(d[1].offset, 1);
        assert!(d[1].immediate.is_none());
    }

    #[test]
    fn push0_has_empty_immediate() {
        let d = disassemble(&[0x5f, 0x56]);
        assert_eq!(d[0].immediate.as_deref(), Some(&[][..]));
        assert_eq!(d[0].push_value(), Some(U256::ZERO));
        assert_eq!(d[1].offset, 1);
    }

    #[test]
    fn hex_decoding() {
        assert_eq!(decode_hex("0x6001").unwrap(), vec![0x60, 0x01]);
        assert_eq!(decode_hex(" 6001\n").unwrap(), vec![0x60, 0x01]);
        assert!(matches!(decode_hex("0x600"), Err(HexError::OddLength(3))));
        assert!(decode_hex("zz").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_and_offsets(code in proptest::collection::vec(any::<u8>(), 0..256)) {
            let d = disassemble(&code);
            // offsets chain exactly
            let mut expected = 0;
            for ins in &d {
                prop_assert_eq!(ins.offset, expected);
                expected = ins.next_offset();
                if let Some(imm) = &ins.immediate {
                    prop_assert_eq!(imm.len(), ins.opcode.push_width());
                }
            }
            let truncated = d.last().is_some_and(|last| {
                last.opcode == Opcode::INVALID && code[last.offset] != 0xfe
            });
            if truncated {
                let tail = d.last().unwrap().offset;
                prop_assert_eq!(assemble(&d[..d.len() - 1]), code[..tail].to_vec());
            } else {
                prop_assert_eq!(assemble(&d), code);
            }
        }
    }
}
