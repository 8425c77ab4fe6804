//! Concept library files: `concept <name> <family> { <statements> }` blocks.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use super::parser::{tokenize, Parser, Tok};
use super::{ConceptProgram, DslError, Family};

/// Number of concepts a library must contain.
pub const LIBRARY_SIZE: usize = 37;

/// Relaxing this many constraints must always be legal.
const MIN_CONSTRAINT_PAIRS: usize = 2;
const MAX_MDL: usize = 4;

pub const DEFAULT_LIBRARY_SOURCE: &str = include_str!("../../data/concepts.txt");

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("reading concept library: {0}")]
    Io(#[from] std::io::Error),
    #[error("in concept `{concept}`: {source}")]
    Parse {
        concept: String,
        #[source]
        source: DslError,
    },
    #[error(transparent)]
    Syntax(DslError),
    #[error("library has {found} concepts, expected {expected}")]
    Count { found: usize, expected: usize },
    #[error("concept `{concept}` is invalid: {reason}")]
    Validation { concept: String, reason: String },
}

/// Parse library text without validating its size.
pub fn parse_library(source: &str) -> Result<Vec<ConceptProgram>, LibraryError> {
    let mut p = Parser::new(tokenize(source).map_err(LibraryError::Syntax)?);
    let mut out = Vec::new();
    while !p.at_eof() {
        match &p.peek().tok {
            Tok::Ident(k) if k == "concept" => {}
            _ => return Err(LibraryError::Syntax(p.syntax("`concept`"))),
        }
        p.ident("`concept`").map_err(LibraryError::Syntax)?;
        let name_tok = p.ident("concept name").map_err(LibraryError::Syntax)?;
        let name = match name_tok.tok {
            Tok::Ident(n) => n,
            _ => unreachable!(),
        };
        let family = match &p.peek().tok {
            Tok::Ident(f) if f == "elements" => Family::Elements,
            Tok::Ident(f) if f == "constraints" => Family::Constraints,
            _ => {
                return Err(LibraryError::Syntax(
                    p.syntax("`elements` or `constraints`"),
                ))
            }
        };
        p.ident("family").map_err(LibraryError::Syntax)?;
        p.expect(Tok::LBrace).map_err(LibraryError::Syntax)?;
        let statements = p.statements().map_err(|source| LibraryError::Parse {
            concept: name.clone(),
            source,
        })?;
        p.expect(Tok::RBrace).map_err(LibraryError::Syntax)?;
        out.push(ConceptProgram {
            name,
            family,
            statements,
        });
    }
    Ok(out)
}

/// Check the library-level contract: exact size, unique names, both
/// families present, MDL in range, and enough constraints per concept
/// for oddball construction.
pub fn validate_library(concepts: &[ConceptProgram]) -> Result<(), LibraryError> {
    if concepts.len() != LIBRARY_SIZE {
        return Err(LibraryError::Count {
            found: concepts.len(),
            expected: LIBRARY_SIZE,
        });
    }
    let mut names = HashSet::new();
    for c in concepts {
        let invalid = |reason: String| LibraryError::Validation {
            concept: c.name.clone(),
            reason,
        };
        if !names.insert(c.name.as_str()) {
            return Err(invalid("duplicate concept name".into()));
        }
        let mdl = c.mdl();
        if !(1..=MAX_MDL).contains(&mdl) {
            return Err(invalid(format!("MDL {mdl} outside 1..={MAX_MDL}")));
        }
        let pairs = c.constraint_pairs().len();
        if pairs < MIN_CONSTRAINT_PAIRS {
            return Err(invalid(format!(
                "{pairs} constraint pair(s); at least {MIN_CONSTRAINT_PAIRS} needed"
            )));
        }
        if !c.statements.iter().any(|s| s.visible) {
            return Err(invalid("no visible objects".into()));
        }
    }
    for fam in [Family::Elements, Family::Constraints] {
        if !concepts.iter().any(|c| c.family == fam) {
            return Err(LibraryError::Validation {
                concept: "*".into(),
                reason: format!("no `{}` concepts", fam.as_str()),
            });
        }
    }
    Ok(())
}

pub fn load_library(path: impl AsRef<Path>) -> Result<Vec<ConceptProgram>, LibraryError> {
    let text = std::fs::read_to_string(path)?;
    let lib = parse_library(&text)?;
    validate_library(&lib)?;
    Ok(lib)
}

/// The shipped 37-concept library.
pub fn default_library() -> Result<Vec<ConceptProgram>, LibraryError> {
    let lib = parse_library(DEFAULT_LIBRARY_SOURCE)?;
    validate_library(&lib)?;
    Ok(lib)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_library_has_37_valid_concepts() {
        let lib = default_library().unwrap();
        assert_eq!(lib.len(), 37);
        assert!(lib.iter().all(|c| (1..=4).contains(&c.mdl())));
        assert!(lib.iter().all(|c| c.constraint_pairs().len() >= 2));
        for fam in [Family::Elements, Family::Constraints] {
            assert!(lib.iter().any(|c| c.family == fam));
        }
    }

    #[test]
    fn library_round_trips_through_block_format() {
        let lib = default_library().unwrap();
        let text: String = lib.iter().map(|c| c.format_block()).collect();
        assert_eq!(parse_library(&text).unwrap(), lib);
    }

    #[test]
    fn empty_file_is_count_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            load_library(&path),
            Err(LibraryError::Count { found: 0, .. })
        ));
    }

    #[test]
    fn under_constrained_concept_fails_validation() {
        let mut lib = default_library().unwrap();
        lib[0] = super::super::parse_concept(
            "c1 = circle(p1(), p2())\nl1 = line(p1, p3(c1))",
        )
        .unwrap();
        assert_eq!(lib[0].constraint_pairs().len(), 1);
        assert!(matches!(
            validate_library(&lib),
            Err(LibraryError::Validation { .. })
        ));
    }

    #[test]
    fn parse_errors_name_the_concept() {
        let err = parse_library("concept bad elements {\n  l1 = line(p1(l9), p2())\n}").unwrap_err();
        match err {
            LibraryError::Parse { concept, .. } => assert_eq!(concept, "bad"),
            e => panic!("{e:?}"),
        }
        assert!(parse_library("concept x weird { }").is_err());
        assert!(parse_library("notaconcept").is_err());
    }
}
