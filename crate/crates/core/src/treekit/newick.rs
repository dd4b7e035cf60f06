use super::{NodeId, PhyloTree, TreeError, Validation};
use std::fmt::Write as _;

/// Parses a Newick string with mandatory branch lengths and integer leaf
/// names.  A top-level node with two children yields a rooted tree, three
/// children an unrooted one.
pub fn newick_parse(text: &str) -> Result<PhyloTree, TreeError> {
    newick_parse_with(text, Validation::default())
}

/// [`newick_parse`] with an explicit validation policy.
pub fn newick_parse_with(text: &str, validation: Validation) -> Result<PhyloTree, TreeError> {
    let mut p = Parser { s: text.as_bytes(), pos: 0, edges: Vec::new(), labels: Vec::new(), next: 0 };
    let top = p.node()?;
    p.skip_ws();
    if p.peek() == Some(b':') {
        // a length on the top node carries no information; accept and drop it
        p.pos += 1;
        p.number()?;
        p.skip_ws();
    }
    match p.peek() {
        Some(b';') => p.pos += 1,
        _ => return Err(p.syntax("expected ';'")),
    }
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.syntax("trailing characters after ';'"));
    }
    let n_nodes = p.next;
    let top_degree = p.edges.iter().filter(|e| e.0 == top || e.1 == top).count();
    let root = if top_degree == 2 { Some(top) } else { None };
    PhyloTree::from_edges(n_nodes, &p.edges, &p.labels, root, validation)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    edges: Vec<(NodeId, NodeId, f64)>,
    labels: Vec<(NodeId, u32)>,
    next: NodeId,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn syntax(&self, message: &str) -> TreeError {
        TreeError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn fresh(&mut self) -> NodeId {
        self.next += 1;
        self.next - 1
    }

    fn node(&mut self) -> Result<NodeId, TreeError> {
        self.skip_ws();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let me = self.fresh();
            loop {
                let child = self.node()?;
                self.skip_ws();
                if self.peek() != Some(b':') {
                    return Err(TreeError::MissingBranchLength { offset: self.pos });
                }
                self.pos += 1;
                let len = self.number()?;
                self.edges.push((me, child, len));
                self.skip_ws();
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    None => return Err(self.syntax("unexpected end of input, expected ',' or ')'")),
                    Some(_) => return Err(self.syntax("expected ',' or ')'")),
                }
            }
            // optional internal node name, ignored
            self.name();
            Ok(me)
        } else {
            let start = self.pos;
            let name = self.name();
            if name.is_empty() {
                return Err(self.syntax("expected a leaf name or '('"));
            }
            let label: u32 = name
                .parse()
                .ok()
                .filter(|&l| l > 0)
                .ok_or(TreeError::Syntax { offset: start, message: format!("leaf name '{name}' is not a positive integer") })?;
            let me = self.fresh();
            self.labels.push((me, label));
            Ok(me)
        }
    }

    fn name(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() || b"(),:;".contains(&c) {
                break;
            }
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.s[start..self.pos]).into_owned()
    }

    fn number(&mut self) -> Result<f64, TreeError> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || b"+-.eE".contains(&c)) {
            self.pos += 1;
        }
        let tok = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        if tok.is_empty() {
            return Err(TreeError::MissingBranchLength { offset: start });
        }
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or(TreeError::Syntax { offset: start, message: format!("bad branch length '{tok}'") })
    }
}

/// Writes the tree in canonical Newick form.
///
/// Rooted trees are written from their root; unrooted trees from the internal
/// neighbour of leaf 1 as a top-level trifurcation.  Children appear in order
/// of their smallest descendant leaf label.  Lengths use the shortest decimal
/// representation that parses back to the same `f64`.
pub fn newick_write(tree: &PhyloTree) -> String {
    let lay = tree.rooted_layout();
    let mut out = String::new();
    // iterative post-order emission keeps deep caterpillars off the call stack
    enum Step {
        Open(NodeId),
        Close(NodeId),
        Comma,
    }
    let mut stack = vec![Step::Open(lay.root)];
    while let Some(step) = stack.pop() {
        match step {
            Step::Comma => out.push(','),
            Step::Open(x) => {
                if let Some(l) = tree.label(x) {
                    write!(out, "{l}").unwrap();
                    if x != lay.root {
                        write!(out, ":{}", lay.parent_len[x]).unwrap();
                    }
                } else {
                    out.push('(');
                    stack.push(Step::Close(x));
                    for (i, &c) in lay.children[x].iter().enumerate().rev() {
                        stack.push(Step::Open(c));
                        if i > 0 {
                            stack.push(Step::Comma);
                        }
                    }
                }
            }
            Step::Close(x) => {
                out.push(')');
                if x != lay.root {
                    write!(out, ":{}", lay.parent_len[x]).unwrap();
                }
            }
        }
    }
    out.push(';');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treekit::rf_distance;

    #[test]
    fn parses_two_leaf_tree() {
        let t = newick_parse("(1:0.1,2:0.1);").unwrap();
        assert_eq!(t.n_leaves(), 2);
        assert!(t.root().is_some());
        assert_eq!(newick_write(&t), "(1:0.1,2:0.1);");
    }

    #[test]
    fn parses_unrooted_quartet() {
        let t = newick_parse("((1:0.1,2:0.1):0.05,3:0.1,4:0.1);").unwrap();
        assert_eq!(t.n_leaves(), 4);
        assert!(t.root().is_none());
        let lay = t.rooted_layout();
        // top node is adjacent to leaf 1; its subtrees are {1}, {2}, {3,4}
        let internal_len: Vec<f64> = (0..t.n_nodes())
            .filter(|&x| !t.is_leaf(x) && lay.parent[x].is_some())
            .map(|x| lay.parent_len[x])
            .collect();
        assert_eq!(internal_len, vec![0.05]);
        assert_eq!(newick_write(&t), "(1:0.1,2:0.1,(3:0.1,4:0.1):0.05);");
    }

    #[test]
    fn reports_unbalanced_parenthesis_offset() {
        match newick_parse("(1:0.1,2:0.1") {
            Err(TreeError::Syntax { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_missing_branch_length() {
        assert!(matches!(newick_parse("(1,2:0.1);"), Err(TreeError::MissingBranchLength { offset: 2 })));
    }

    #[test]
    fn rejects_non_binary_unless_permissive() {
        let s = "(1:0.1,2:0.1,3:0.1,4:0.1);";
        assert!(matches!(newick_parse(s), Err(TreeError::NonBinary { .. })));
        let t = newick_parse_with(s, Validation { allow_multifurcation: true, ..Default::default() }).unwrap();
        assert_eq!(t.n_leaves(), 4);
    }

    #[test]
    fn canonical_writer_is_order_independent() {
        let a = newick_parse("((4:0.2,3:0.1):0.05,(2:0.3,1:0.1):0.07);").unwrap();
        let b = newick_parse("((1:0.1,2:0.3):0.07,(3:0.1,4:0.2):0.05);").unwrap();
        assert_eq!(newick_write(&a), newick_write(&b));
        let back = newick_parse(&newick_write(&a)).unwrap();
        assert_eq!(rf_distance(&a, &back).unwrap(), 0);
    }

    #[test]
    fn awkward_decimals_round_trip_exactly() {
        let t = newick_parse("(1:0.1000000000000000055511151231257827,2:1e-3,3:0.30000000000000004);").unwrap();
        let back = newick_parse(&newick_write(&t)).unwrap();
        assert_eq!(t.edges().iter().map(|e| e.2.to_bits()).collect::<Vec<_>>().len(), 3);
        let mut a: Vec<u64> = t.edges().iter().map(|e| e.2.to_bits()).collect();
        let mut b: Vec<u64> = back.edges().iter().map(|e| e.2.to_bits()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
