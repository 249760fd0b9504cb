//! Compiler source maps: one `s:l:f:j:m` entry per instruction, with empty
//! fields inheriting from the previous entry.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrcMapEntry {
    pub start: i64,
    pub length: i64,
    /// Source index; -1 for compiler-generated code.
    pub file: i64,
    pub jump: char,
}

impl SrcMapEntry {
    pub fn is_generated(&self) -> bool {
        self.file < 0
    }
}

/// Decodes a compressed source map into one entry per instruction index.
pub fn decode(map: &str) -> Vec<SrcMapEntry> {
    let mut out = Vec::new();
    if map.is_empty() {
        return out;
    }
    let mut cur = SrcMapEntry {
        start: -1,
        length: -1,
        file: -1,
        jump: '-',
    };
    for item in map.split(';') {
        let fields: Vec<&str> = item.split(':').collect();
        let num = |i: usize| fields.get(i).filter(|f| !f.is_empty()).and_then(|f| f.parse::<i64>().ok());
        if let Some(v) = num(0) {
            cur.start = v;
        }
        if let Some(v) = num(1) {
            cur.length = v;
        }
        if let Some(v) = num(2) {
            cur.file = v;
        }
        if let Some(j) = fields.get(3).and_then(|f| f.chars().next()) {
            cur.jump = j;
        }
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inherits_empty_fields() {
        let d = decode("0:313:0:-:0;;;47:264;:::i;132:10:1");
        assert_eq!(d.len(), 6);
        assert_eq!((d[1].start, d[1].length, d[1].file), (0, 313, 0));
        assert_eq!((d[3].start, d[3].length, d[3].file, d[3].jump), (47, 264, 0, '-'));
        assert_eq!(d[4].jump, 'i');
        assert_eq!((d[5].start, d[5].length, d[5].file, d[5].jump), (132, 10, 1, 'i'));
    }

    #[test]
    fn generated_code() {
        let d = decode("5:1:-1");
        assert!(d[0].is_generated());
        assert!(decode("").is_empty());
    }
}
