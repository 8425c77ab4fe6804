//! Geometric concept programs.
//!
//! A program is an ordered list of object statements. Each statement
//! declares a line segment or a circle from two point expressions:
//!
//! ```text
//! c1* = circle(p1(), p2())       # invisible guide circle
//! l1  = line(p3(c1), p4(c1))     # chord: both endpoints on c1
//! l2  = line(p3, p5(l1, c1))     # p3 reused, p5 at an intersection
//! ```
//!
//! A point with no references is free, one reference puts it on that
//! object's locus, two put it at an intersection. Each `(point, object)`
//! reference is one relational constraint.

mod library;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StimRng;

pub use library::{
    default_library, load_library, parse_library, validate_library, LibraryError,
    DEFAULT_LIBRARY_SOURCE, LIBRARY_SIZE,
};
pub use parser::parse_concept;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Elements,
    Constraints,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Elements => "elements",
            Family::Constraints => "constraints",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Line,
    Circle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSpec {
    pub id: String,
    /// 0 = free, 1 = on that object, 2 = at an intersection.
    pub refs: Vec<String>,
    /// The identifier names a point declared by an earlier statement.
    pub reuse: bool,
}

impl PointSpec {
    pub fn free(id: &str) -> Self {
        PointSpec {
            id: id.to_string(),
            refs: Vec::new(),
            reuse: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectStatement {
    pub id: String,
    pub kind: ObjectKind,
    /// Line start, or circle center.
    pub p1: PointSpec,
    /// Line end, or a point the circle passes through.
    pub p2: PointSpec,
    pub visible: bool,
}

impl ObjectStatement {
    pub fn points(&self) -> [&PointSpec; 2] {
        [&self.p1, &self.p2]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptProgram {
    pub name: String,
    pub family: Family,
    pub statements: Vec<ObjectStatement>,
}

/// One `(point, object)` relational constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstraintPair {
    pub point: String,
    pub object: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("reference error at {line}:{col}: `{ident}` {problem}")]
    Reference {
        line: usize,
        col: usize,
        ident: String,
        problem: RefProblem,
    },
    #[error("arity error at {line}:{col}: point `{point}` has {count} references (at most 2)")]
    Arity {
        line: usize,
        col: usize,
        point: String,
        count: usize,
    },
    #[error("cannot relax {requested} constraints: program has only {available}")]
    InsufficientConstraints { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefProblem {
    /// Declared by a later statement.
    Forward,
    Undeclared,
    Duplicate,
    /// Used as an object but names a point, or vice versa.
    WrongKind,
    /// Both endpoints of one statement are the same point.
    SameEndpoints,
}

impl fmt::Display for RefProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RefProblem::Forward => "is referenced before its declaration",
            RefProblem::Undeclared => "is not declared",
            RefProblem::Duplicate => "is declared more than once",
            RefProblem::WrongKind => "has the wrong kind for this position",
            RefProblem::SameEndpoints => "is used for both endpoints of one object",
        };
        f.write_str(s)
    }
}

impl ConceptProgram {
    pub fn mdl(&self) -> usize {
        compute_mdl(self)
    }

    /// All `(point, object)` constraint pairs in statement order. Reused
    /// points never carry references, so every pair belongs to the
    /// statement that declares its point.
    pub fn constraint_pairs(&self) -> Vec<ConstraintPair> {
        self.statements
            .iter()
            .flat_map(|s| s.points())
            .filter(|p| !p.reuse)
            .flat_map(|p| {
                p.refs.iter().map(move |r| ConstraintPair {
                    point: p.id.clone(),
                    object: r.clone(),
                })
            })
            .collect()
    }

    pub fn statement(&self, id: &str) -> Option<&ObjectStatement> {
        self.statements.iter().find(|s| s.id == id)
    }

    /// Declared point identifiers in declaration order.
    pub fn point_ids(&self) -> Vec<&str> {
        self.statements
            .iter()
            .flat_map(|s| s.points())
            .filter(|p| !p.reuse)
            .map(|p| p.id.as_str())
            .collect()
    }

    /// Statements only, one per line, in the concrete grammar.
    pub fn format_statements(&self) -> String {
        let mut out = String::new();
        for s in &self.statements {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }

    /// A complete library block.
    pub fn format_block(&self) -> String {
        let mut out = format!("concept {} {} {{\n", self.name, self.family.as_str());
        for s in &self.statements {
            out.push_str("  ");
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Display for PointSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.reuse {
            return f.write_str(&self.id);
        }
        write!(f, "{}({})", self.id, self.refs.join(", "))
    }
}

impl fmt::Display for ObjectStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ObjectKind::Line => "line",
            ObjectKind::Circle => "circle",
        };
        let star = if self.visible { "" } else { "*" };
        write!(f, "{}{} = {}({}, {})", self.id, star, kind, self.p1, self.p2)
    }
}

/// Description length: every object statement counts, visible or not.
pub fn compute_mdl(program: &ConceptProgram) -> usize {
    program.statements.len()
}

/// Delete `k` distinct constraint pairs chosen uniformly without
/// replacement. Object statements, visibility and all other points are
/// untouched; a point that loses its last reference becomes free.
///
/// The removed pairs are returned in program order.
pub fn relax_constraints(
    program: &ConceptProgram,
    k: usize,
    rng: &mut StimRng,
) -> Result<(ConceptProgram, Vec<ConstraintPair>), DslError> {
    let pairs = program.constraint_pairs();
    if pairs.len() < k {
        return Err(DslError::InsufficientConstraints {
            requested: k,
            available: pairs.len(),
        });
    }
    let chosen: Vec<ConstraintPair> = rng
        .sample_indices(pairs.len(), k)
        .into_iter()
        .map(|i| pairs[i].clone())
        .collect();
    Ok((remove_pairs(program, &chosen), chosen))
}

/// Copy of `program` with the given constraint pairs deleted. Pairs that
/// do not occur in the program are ignored.
pub fn remove_pairs(program: &ConceptProgram, pairs: &[ConstraintPair]) -> ConceptProgram {
    let mut relaxed = program.clone();
    for stmt in &mut relaxed.statements {
        for p in [&mut stmt.p1, &mut stmt.p2] {
            if p.reuse {
                continue;
            }
            p.refs
                .retain(|r| !pairs.iter().any(|c| c.point == p.id && &c.object == r));
        }
    }
    relaxed
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHORD: &str = "c1* = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))";

    #[test]
    fn mdl_counts_invisible_statements() {
        let p = parse_concept("l1 = line(p1(), p2())").unwrap();
        assert_eq!(compute_mdl(&p), 1);
        let p = parse_concept(
            "c1* = circle(p1(), p2())
             l1 = line(p1, p3(c1))
             l2 = line(p3, p4(c1))
             l3 = line(p4, p5(c1))",
        )
        .unwrap();
        assert_eq!(p.statements.iter().filter(|s| s.visible).count(), 3);
        assert_eq!(compute_mdl(&p), 4);
    }

    #[test]
    fn relax_exactly_all_pairs_frees_points() {
        let p = parse_concept(CHORD).unwrap();
        let mut rng = StimRng::new(1);
        let (r, removed) = relax_constraints(&p, 2, &mut rng).unwrap();
        assert_eq!(removed.len(), 2);
        assert!(r.constraint_pairs().is_empty());
        assert_eq!(r.statements.len(), p.statements.len());
        assert_eq!(r.mdl(), p.mdl());
    }

    #[test]
    fn relax_zero_is_identity() {
        let p = parse_concept(CHORD).unwrap();
        let (r, removed) = relax_constraints(&p, 0, &mut StimRng::new(5)).unwrap();
        assert_eq!(r, p);
        assert!(removed.is_empty());
    }

    #[test]
    fn relax_is_deterministic() {
        let lib = default_library().unwrap();
        for c in &lib {
            let a = relax_constraints(c, 2, &mut StimRng::new(77)).unwrap();
            let b = relax_constraints(c, 2, &mut StimRng::new(77)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn relax_too_many() {
        let p = parse_concept(CHORD).unwrap();
        let err = relax_constraints(&p, 3, &mut StimRng::new(0)).unwrap_err();
        assert_eq!(
            err,
            DslError::InsufficientConstraints {
                requested: 3,
                available: 2
            }
        );
    }

    #[test]
    fn relax_only_touches_chosen_pairs() {
        let p = parse_concept(
            "c1 = circle(p1(), p2())
             c2 = circle(p2, p1)
             l1 = line(p3(c1, c2), p4(c1))",
        )
        .unwrap();
        for seed in 0..50 {
            let (r, removed) = relax_constraints(&p, 2, &mut StimRng::new(seed)).unwrap();
            let before = p.constraint_pairs();
            let after = r.constraint_pairs();
            assert_eq!(after.len(), before.len() - 2);
            for pair in &before {
                assert_eq!(after.contains(pair), !removed.contains(pair));
            }
            for (a, b) in p.statements.iter().zip(&r.statements) {
                assert_eq!((a.id.as_str(), a.kind, a.visible), (b.id.as_str(), b.kind, b.visible));
            }
        }
    }

    #[test]
    fn display_round_trip() {
        let p = parse_concept(CHORD).unwrap();
        let text = p.format_statements();
        assert_eq!(text, "c1* = circle(p1(), p2())\nl1 = line(p3(c1), p4(c1))\n");
        assert_eq!(parse_concept(&text).unwrap(), p);
    }
}
