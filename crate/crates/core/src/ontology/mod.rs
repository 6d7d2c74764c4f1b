//! Ontology-based label integration.
//!
//! An [`OntologyGraph`] is an is-a DAG of terms loaded from a term table.
//! Gene-family labels are resolved to terms through an [`OntologyLookup`]
//! and then lifted to a fixed depth with [`OntologyGraph::ancestor_at_level`];
//! mechanism and drug-class labels go through flat consolidation tables.

mod lookup;
mod mapping;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::BufRead;

use thiserror::Error;

pub use lookup::{normalize_label, LocalLookup, OntologyLookup};
#[cfg(feature = "remote-lookup")]
pub use lookup::{RemoteLookup, RemoteLookupConfig, ONTOLOGY_URL_ENV};
pub use mapping::{
    apply_mapping, build_gene_family_mapping, ClassMapping, MappingAudit, UnmappedPolicy, DEFAULT_DRUG_CLASS_TABLE,
    DEFAULT_MECHANISM_TABLE, OTHER_BUCKET,
};

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("ontology contains a cycle through term '{0}'")]
    CyclicOntology(String),
    #[error("term '{term}' lists unknown parent '{parent}'")]
    DanglingParent { term: String, parent: String },
    #[error("ontology parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("unknown term '{0}'")]
    UnknownTerm(String),
    #[error("ontology lookup service unavailable: {0}")]
    LookupUnavailable(String),
    #[error("mapping is for axis {mapping}, target axis is {target}")]
    AxisMismatch { mapping: crate::LabelAxis, target: crate::LabelAxis },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyTerm {
    pub term_id: String,
    pub name: String,
    pub parent_ids: BTreeSet<String>,
    pub synonyms: Vec<String>,
}

/// Immutable is-a DAG with precomputed minimum depths.
#[derive(Debug, Clone)]
pub struct OntologyGraph {
    terms: Vec<OntologyTerm>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    roots: BTreeSet<String>,
}

impl OntologyGraph {
    /// Builds and validates a graph: every parent must exist and the
    /// parent relation must be acyclic.
    pub fn from_terms(terms: Vec<OntologyTerm>) -> Result<Self, OntologyError> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.term_id.clone(), i).is_some() {
                return Err(OntologyError::ParseError { line: i + 1, reason: format!("duplicate term id '{}'", t.term_id) });
            }
        }
        let mut parents = vec![Vec::new(); terms.len()];
        let mut children = vec![Vec::new(); terms.len()];
        for (i, t) in terms.iter().enumerate() {
            for p in &t.parent_ids {
                if *p == t.term_id {
                    return Err(OntologyError::CyclicOntology(t.term_id.clone()));
                }
                let &pi = index.get(p).ok_or_else(|| OntologyError::DanglingParent {
                    term: t.term_id.clone(),
                    parent: p.clone(),
                })?;
                parents[i].push(pi);
                children[pi].push(i);
            }
        }

        // Kahn's algorithm from the roots downwards; whatever is left over
        // sits on or below a cycle. The same pass yields minimum depths since
        // a node's depth is 1 + min over parent depths.
        let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut depth = vec![usize::MAX; terms.len()];
        let mut queue: VecDeque<usize> = (0..terms.len()).filter(|&i| pending[i] == 0).collect();
        for &r in &queue {
            depth[r] = 0;
        }
        let mut visited = 0;
        while let Some(n) = queue.pop_front() {
            visited += 1;
            for &c in &children[n] {
                depth[c] = depth[c].min(depth[n] + 1);
                pending[c] -= 1;
                if pending[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if visited != terms.len() {
            let stuck = (0..terms.len()).filter(|&i| pending[i] > 0).map(|i| terms[i].term_id.clone()).min();
            return Err(OntologyError::CyclicOntology(stuck.unwrap_or_default()));
        }
        let roots = terms.iter().filter(|t| t.parent_ids.is_empty()).map(|t| t.term_id.clone()).collect();
        Ok(OntologyGraph { terms, index, parents, children, depth, roots })
    }

    /// Reads the tab-separated term table: `term_id, name, parents, synonyms`
    /// with pipe-joined parents and synonyms (either may be empty). Lines
    /// starting with '#' are comments.
    pub fn load<R: BufRead>(reader: R) -> Result<Self, OntologyError> {
        let mut terms = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !(2..=4).contains(&cols.len()) {
                return Err(OntologyError::ParseError {
                    line: line_no,
                    reason: format!("expected 2 to 4 tab-separated columns, found {}", cols.len()),
                });
            }
            let term_id = cols[0].trim();
            let name = cols[1].trim();
            if term_id.is_empty() || name.is_empty() {
                return Err(OntologyError::ParseError { line: line_no, reason: "empty term id or name".into() });
            }
            let split = |s: Option<&&str>| -> Vec<String> {
                s.map(|s| s.split('|').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect())
                    .unwrap_or_default()
            };
            terms.push(OntologyTerm {
                term_id: term_id.to_string(),
                name: name.to_string(),
                parent_ids: split(cols.get(2)).into_iter().collect(),
                synonyms: split(cols.get(3)),
            });
        }
        if terms.is_empty() {
            return Err(OntologyError::ParseError { line: 0, reason: "no terms".into() });
        }
        OntologyGraph::from_terms(terms)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn root_ids(&self) -> &BTreeSet<String> {
        &self.roots
    }

    pub fn term(&self, term_id: &str) -> Option<&OntologyTerm> {
        self.index.get(term_id).map(|&i| &self.terms[i])
    }

    pub fn terms(&self) -> impl Iterator<Item = &OntologyTerm> {
        self.terms.iter()
    }

    fn idx(&self, term_id: &str) -> Result<usize, OntologyError> {
        self.index.get(term_id).copied().ok_or_else(|| OntologyError::UnknownTerm(term_id.to_string()))
    }

    /// Minimum number of parent edges from any root (roots have depth 0).
    pub fn depth_of(&self, term_id: &str) -> Result<usize, OntologyError> {
        Ok(self.depth[self.idx(term_id)?])
    }

    /// All ancestors of a term including itself.
    pub fn ancestors_or_self(&self, term_id: &str) -> Result<BTreeSet<&str>, OntologyError> {
        let start = self.idx(term_id)?;
        let mut seen = vec![false; self.terms.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut out = BTreeSet::new();
        while let Some(n) = stack.pop() {
            out.insert(self.terms[n].term_id.as_str());
            for &p in &self.parents[n] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        Ok(out)
    }

    /// The lexicographically smallest ancestor-or-self at exactly `level`;
    /// the term itself when it is shallower than `level`.
    pub fn ancestor_at_level(&self, term_id: &str, level: usize) -> Result<&str, OntologyError> {
        let i = self.idx(term_id)?;
        if self.depth[i] <= level {
            return Ok(&self.terms[i].term_id);
        }
        let best = self
            .ancestors_or_self(term_id)?
            .into_iter()
            .find(|a| self.depth[self.index[*a]] == level)
            .expect("a term deeper than `level` has an ancestor at `level` on its shortest root path");
        Ok(&self.terms[self.index[best]].term_id)
    }

    pub fn children_of(&self, term_id: &str) -> Result<Vec<&str>, OntologyError> {
        Ok(self.children[self.idx(term_id)?].iter().map(|&c| self.terms[c].term_id.as_str()).collect())
    }
}
