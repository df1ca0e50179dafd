//! Finite-trace evaluation.
//!
//! A formula is flattened into post-order nodes; evaluation fills one truth
//! column per node, right to left over positions, so each trace costs
//! O(|formula| × |trace|).

use std::collections::HashMap;

use super::Formula;

#[derive(Debug, Clone, Copy)]
enum Node {
    True,
    False,
    Atom(usize),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Implies(usize, usize),
    Next(usize),
    Eventually(usize),
    Globally(usize),
    Until(usize, usize),
}

/// A formula compiled for repeated evaluation over traces.
#[derive(Debug, Clone)]
pub struct CompiledFormula {
    nodes: Vec<Node>,
    atoms: Vec<String>,
}

impl CompiledFormula {
    pub fn new(formula: &Formula) -> Self {
        let mut c = CompiledFormula {
            nodes: Vec::new(),
            atoms: Vec::new(),
        };
        let mut interned = HashMap::new();
        c.push(formula, &mut interned);
        c
    }

    fn push(&mut self, f: &Formula, interned: &mut HashMap<String, usize>) -> usize {
        let node = match f {
            Formula::True => Node::True,
            Formula::False => Node::False,
            Formula::Atom(a) => {
                let next = interned.len();
                let id = *interned.entry(a.clone()).or_insert_with(|| {
                    self.atoms.push(a.clone());
                    next
                });
                Node::Atom(id)
            }
            Formula::Not(x) => Node::Not(self.push(x, interned)),
            Formula::Next(x) => Node::Next(self.push(x, interned)),
            Formula::Eventually(x) => Node::Eventually(self.push(x, interned)),
            Formula::Globally(x) => Node::Globally(self.push(x, interned)),
            Formula::And(a, b) => {
                let (a, b) = (self.push(a, interned), self.push(b, interned));
                Node::And(a, b)
            }
            Formula::Or(a, b) => {
                let (a, b) = (self.push(a, interned), self.push(b, interned));
                Node::Or(a, b)
            }
            Formula::Implies(a, b) => {
                let (a, b) = (self.push(a, interned), self.push(b, interned));
                Node::Implies(a, b)
            }
            Formula::Until(a, b) => {
                let (a, b) = (self.push(a, interned), self.push(b, interned));
                Node::Until(a, b)
            }
        };
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Truth value of the formula at every position of the trace.
    pub fn positions<S: AsRef<str>>(&self, trace: &[S]) -> Vec<bool> {
        let n = trace.len();
        let atom_of: Vec<Option<usize>> = trace
            .iter()
            .map(|a| self.atoms.iter().position(|x| x == a.as_ref()))
            .collect();
        let mut cols: Vec<Vec<bool>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let mut col = vec![false; n];
            match *node {
                Node::True => col.fill(true),
                Node::False => {}
                Node::Atom(id) => {
                    for (c, a) in col.iter_mut().zip(&atom_of) {
                        *c = *a == Some(id);
                    }
                }
                Node::Not(x) => {
                    for (c, v) in col.iter_mut().zip(&cols[x]) {
                        *c = !v;
                    }
                }
                Node::And(a, b) => {
                    for i in 0..n {
                        col[i] = cols[a][i] && cols[b][i];
                    }
                }
                Node::Or(a, b) => {
                    for i in 0..n {
                        col[i] = cols[a][i] || cols[b][i];
                    }
                }
                Node::Implies(a, b) => {
                    for i in 0..n {
                        col[i] = !cols[a][i] || cols[b][i];
                    }
                }
                Node::Next(x) => {
                    if n > 1 {
                        col[..n - 1].copy_from_slice(&cols[x][1..]);
                    }
                }
                Node::Eventually(x) => {
                    let mut acc = false;
                    for i in (0..n).rev() {
                        acc |= cols[x][i];
                        col[i] = acc;
                    }
                }
                Node::Globally(x) => {
                    let mut acc = true;
                    for i in (0..n).rev() {
                        acc &= cols[x][i];
                        col[i] = acc;
                    }
                }
                Node::Until(a, b) => {
                    let mut acc = false;
                    for i in (0..n).rev() {
                        acc = cols[b][i] || (cols[a][i] && acc);
                        col[i] = acc;
                    }
                }
            }
            cols.push(col);
        }
        cols.pop().unwrap_or_default()
    }

    /// Evaluates at the first position. An empty trace satisfies nothing.
    pub fn evaluate<S: AsRef<str>>(&self, trace: &[S]) -> bool {
        self.positions(trace).first().copied().unwrap_or(false)
    }
}

/// Evaluates `formula` over a sequence of activity labels at the first position.
pub fn evaluate<S: AsRef<str>>(formula: &Formula, trace: &[S]) -> bool {
    CompiledFormula::new(formula).evaluate(trace)
}

#[cfg(test)]
mod tests {
    use super::super::parse_formula;
    use super::*;

    fn eval(text: &str, trace: &[&str]) -> bool {
        evaluate(&parse_formula(text).unwrap(), trace)
    }

    #[test]
    fn eventually_finds_later_event() {
        assert!(eval("F(b)", &["a", "b", "c"]));
        assert!(!eval("F(d)", &["a", "b", "c"]));
    }

    #[test]
    fn response_fails_without_later_target() {
        assert!(!eval("G(a -> F(c))", &["a", "c", "a"]));
        assert!(eval("G(a -> F(c))", &["a", "c", "a", "c"]));
    }

    #[test]
    fn until_semantics() {
        assert!(eval("(!a) U b", &["c", "b"]));
        assert!(!eval("(!a) U b", &["a", "b"]));
        assert!(!eval("a U b", &["a", "a"]));
    }

    #[test]
    fn strong_next_fails_at_end() {
        assert!(!eval("X(true)", &["a"]));
        assert!(eval("X(b)", &["a", "b"]));
        assert!(eval("!X(true)", &["a"]));
    }

    #[test]
    fn atoms_are_case_sensitive() {
        assert!(!eval("F(A)", &["a"]));
        assert!(eval(
            r#"F("Accept Loan Application")"#,
            &["x", "Accept Loan Application"]
        ));
    }

    #[test]
    fn empty_trace_is_false() {
        assert!(!eval("true", &[]));
    }
}
