//! Flow-insensitive address taint: who can choose a value.
//!
//! Each local, parameter and temporary gets the join of the sources assigned
//! to it anywhere; parameters of externally callable functions and
//! `msg.sender`/`tx.origin` are user input; internal parameters join over
//! their call sites.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::Taint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Fixed(Taint),
    Var(i64),
}

#[derive(Debug, Default)]
pub struct TaintFacts {
    flows: BTreeMap<i64, BTreeSet<Source>>,
}

impl TaintFacts {
    pub fn assign(&mut self, decl: i64, sources: impl IntoIterator<Item = Source>) {
        self.flows.entry(decl).or_default().extend(sources);
    }

    /// Least fixed point; variables with no sources are constant.
    pub fn solve(&self) -> BTreeMap<i64, Taint> {
        let mut taint: BTreeMap<i64, Taint> = self.flows.keys().map(|d| (*d, Taint::Constant)).collect();
        loop {
            let mut changed = false;
            for (decl, sources) in &self.flows {
                let t = sources
                    .iter()
                    .map(|s| match s {
                        Source::Fixed(t) => *t,
                        Source::Var(v) => taint.get(v).copied().unwrap_or(Taint::Constant),
                    })
                    .max()
                    .unwrap_or(Taint::Constant);
                if t > taint[decl] {
                    taint.insert(*decl, t);
                    changed = true;
                }
            }
            if !changed {
                return taint;
            }
        }
    }
}

pub fn evaluate(sources: &BTreeSet<Source>, solved: &BTreeMap<i64, Taint>) -> Taint {
    sources
        .iter()
        .map(|s| match s {
            Source::Fixed(t) => *t,
            Source::Var(v) => solved.get(v).copied().unwrap_or(Taint::Constant),
        })
        .max()
        .unwrap_or(Taint::Constant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joins_through_chains_and_cycles() {
        let mut f = TaintFacts::default();
        f.assign(1, [Source::Var(2)]);
        f.assign(2, [Source::Var(1), Source::Var(3)]);
        f.assign(3, [Source::Fixed(Taint::UserInput)]);
        f.assign(4, [Source::Fixed(Taint::StateVariable), Source::Var(5)]);
        f.assign(5, [Source::Var(4)]);
        let s = f.solve();
        assert_eq!(s[&1], Taint::UserInput);
        assert_eq!(s[&2], Taint::UserInput);
        assert_eq!(s[&4], Taint::StateVariable);
        assert_eq!(s[&5], Taint::StateVariable);
        assert_eq!(evaluate(&BTreeSet::new(), &s), Taint::Constant);
    }
}
