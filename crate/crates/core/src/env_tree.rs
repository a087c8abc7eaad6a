//! Rooted environment trees.
//!
//! Environments are the nodes of a directed tree and each parent→child arc
//! carries one row of the mutation matrix. Node ids are assigned in
//! breadth-first order from the root (so the root is always `EnvId(0)`) and
//! arcs are numbered in the same breadth-first order, children in insertion
//! order. That makes row `a` of a mutation matrix mean the same thing across
//! runs and across serializations.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TbrError};

/// Dense node index; the root is always 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvId(pub usize);

/// Dense arc index in canonical (breadth-first) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcId(pub usize);

impl EnvId {
    pub const ROOT: EnvId = EnvId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl ArcId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// A directed rooted tree of environments. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvTree {
    parent: Vec<Option<EnvId>>,
    parent_arc: Vec<Option<ArcId>>,
    children: Vec<Vec<EnvId>>,
    arcs: Vec<(EnvId, EnvId)>,
    node_depth: Vec<usize>,
    labels: Vec<String>,
    leaves: Vec<EnvId>,
}

impl EnvTree {
    /// Full binary tree with `2^depth` leaves.
    pub fn build_balanced_binary(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(TbrError::InvalidTree(
                "balanced tree needs depth >= 1 (a single node has no arcs)".into(),
            ));
        }
        if depth > 24 {
            return Err(TbrError::InvalidTree(format!("depth {depth} is too large")));
        }
        let n = (1usize << (depth + 1)) - 1;
        // Heap layout is already breadth-first: children of i are 2i+1, 2i+2.
        let edges: Vec<(usize, usize)> = (1..n).map(|c| ((c - 1) / 2, c)).collect();
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::from_indexed(n, &edges, labels)
    }

    /// Builds a tree from labelled `(parent, child)` pairs. Labels are remapped
    /// to dense ids; the root is the unique label that never appears as a child.
    pub fn from_edge_list<S: AsRef<str>>(edges: &[(S, S)]) -> Result<Self> {
        if edges.is_empty() {
            return Err(TbrError::InvalidTree("edge list is empty".into()));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut names: Vec<&str> = Vec::new();
        let mut raw: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (p, c) in edges {
            let (p, c) = (p.as_ref(), c.as_ref());
            let pi = *index.entry(p).or_insert_with(|| {
                names.push(p);
                names.len() - 1
            });
            let ci = *index.entry(c).or_insert_with(|| {
                names.push(c);
                names.len() - 1
            });
            raw.push((pi, ci));
        }
        let n = names.len();

        let mut parent_of = vec![None; n];
        for &(p, c) in &raw {
            if p == c {
                return Err(TbrError::InvalidTree(format!("self-loop at {:?}", names[p])));
            }
            if parent_of[c].replace(p).is_some() {
                return Err(TbrError::InvalidTree(format!(
                    "node {:?} has more than one parent",
                    names[c]
                )));
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parent_of[i].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(TbrError::InvalidTree("no root: edges contain a cycle".into())),
            many => {
                return Err(TbrError::InvalidTree(format!(
                    "multiple roots: {:?}",
                    many.iter().map(|&i| names[i]).collect::<Vec<_>>()
                )))
            }
        };

        // Re-index breadth-first from the root, children in insertion order.
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(p, c) in &raw {
            kids[p].push(c);
        }
        let mut order = Vec::with_capacity(n);
        let mut new_id = vec![usize::MAX; n];
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            new_id[u] = order.len();
            order.push(u);
            queue.extend(kids[u].iter().copied());
        }
        if order.len() != n {
            let stray = (0..n).find(|&i| new_id[i] == usize::MAX).unwrap();
            return Err(TbrError::InvalidTree(format!(
                "node {:?} is not reachable from root {:?} (cycle or disconnected component)",
                names[stray], names[root]
            )));
        }
        let edges: Vec<(usize, usize)> = order
            .iter()
            .skip(1)
            .map(|&old| (new_id[parent_of[old].unwrap()], new_id[old]))
            .collect();
        let labels = order.iter().map(|&old| names[old].to_string()).collect();
        Self::from_indexed(n, &edges, labels)
    }

    /// `edges` must already be breadth-first: edge `i` has child `i + 1`.
    fn from_indexed(n: usize, edges: &[(usize, usize)], labels: Vec<String>) -> Result<Self> {
        let mut parent = vec![None; n];
        let mut parent_arc = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut node_depth = vec![0usize; n];
        let mut arcs = Vec::with_capacity(edges.len());
        for (a, &(p, c)) in edges.iter().enumerate() {
            debug_assert_eq!(c, a + 1);
            parent[c] = Some(EnvId(p));
            parent_arc[c] = Some(ArcId(a));
            children[p].push(EnvId(c));
            node_depth[c] = node_depth[p] + 1;
            arcs.push((EnvId(p), EnvId(c)));
        }
        let leaves = (0..n)
            .filter(|&i| children[i].is_empty())
            .map(EnvId)
            .collect();
        Ok(Self {
            parent,
            parent_arc,
            children,
            arcs,
            node_depth,
            labels,
            leaves,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn root(&self) -> EnvId {
        EnvId::ROOT
    }

    /// Maximum node depth.
    pub fn depth(&self) -> usize {
        self.node_depth.iter().copied().max().unwrap_or(0)
    }

    pub fn depth_of(&self, env: EnvId) -> Result<usize> {
        self.check(env)?;
        Ok(self.node_depth[env.0])
    }

    pub fn parent(&self, env: EnvId) -> Option<EnvId> {
        self.parent.get(env.0).copied().flatten()
    }

    /// Arc entering `env` from its parent; `None` for the root.
    pub fn parent_arc(&self, env: EnvId) -> Option<ArcId> {
        self.parent_arc.get(env.0).copied().flatten()
    }

    pub fn children(&self, env: EnvId) -> &[EnvId] {
        &self.children[env.0]
    }

    pub fn leaves(&self) -> &[EnvId] {
        &self.leaves
    }

    pub fn is_leaf(&self, env: EnvId) -> bool {
        self.children.get(env.0).is_some_and(|c| c.is_empty())
    }

    /// Endpoints `(parent, child)` of an arc.
    pub fn arc(&self, arc: ArcId) -> (EnvId, EnvId) {
        self.arcs[arc.0]
    }

    /// Arc id of the `(parent, child)` pair, if it is an arc of the tree.
    pub fn arc_of(&self, parent: EnvId, child: EnvId) -> Option<ArcId> {
        match (self.parent(child), self.parent_arc(child)) {
            (Some(p), Some(a)) if p == parent => Some(a),
            _ => None,
        }
    }

    pub fn label(&self, env: EnvId) -> &str {
        &self.labels[env.0]
    }

    pub fn find_label(&self, label: &str) -> Option<EnvId> {
        self.labels.iter().position(|l| l == label).map(EnvId)
    }

    /// Node ids in breadth-first order (which is also id order).
    pub fn nodes(&self) -> impl DoubleEndedIterator<Item = EnvId> + ExactSizeIterator {
        (0..self.num_nodes()).map(EnvId)
    }

    pub fn non_root_nodes(&self) -> impl Iterator<Item = EnvId> {
        (1..self.num_nodes()).map(EnvId)
    }

    /// Arcs on the root→`env` path, root first. Empty for the root.
    pub fn path_to_root(&self, env: EnvId) -> Result<Vec<ArcId>> {
        self.check(env)?;
        let mut path = Vec::with_capacity(self.node_depth[env.0]);
        let mut cur = env;
        while let Some(a) = self.parent_arc(cur) {
            path.push(a);
            cur = self.arcs[a.0].0;
        }
        path.reverse();
        Ok(path)
    }

    /// Arcs of the tree as labelled pairs in canonical order.
    pub fn to_edge_list(&self) -> Vec<(String, String)> {
        self.arcs
            .iter()
            .map(|&(p, c)| (self.labels[p.0].clone(), self.labels[c.0].clone()))
            .collect()
    }

    /// Writes one `parent<TAB>child` line per arc.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (p, c) in self.to_edge_list() {
            writeln!(out, "{p}\t{c}")?;
        }
        Ok(())
    }

    pub fn to_edge_list_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("labels are UTF-8")
    }

    /// Parses the `parent<TAB>child` text format. Blank lines are ignored.
    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(p), Some(c), None) if !p.is_empty() && !c.is_empty() => {
                    edges.push((p.to_string(), c.to_string()))
                }
                _ => {
                    return Err(TbrError::Format(format!(
                        "edge list line {}: expected `parent<TAB>child`, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_edge_list(&edges)
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        Self::read_edge_list(text.as_bytes())
    }

    /// Stable content hash of the serialized edge list (hex SHA-256).
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_edge_list_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Structural equality ignoring labels.
    pub fn same_shape(&self, other: &EnvTree) -> bool {
        self.parent == other.parent && self.arcs == other.arcs
    }

    fn check(&self, env: EnvId) -> Result<()> {
        if env.0 < self.num_nodes() {
            Ok(())
        } else {
            Err(TbrError::UnknownEnv(env.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parent_walk(tree: &EnvTree, env: EnvId) -> Vec<ArcId> {
        let mut out = Vec::new();
        let mut cur = env;
        while let Some(p) = tree.parent(cur) {
            out.push(tree.arc_of(p, cur).unwrap());
            cur = p;
        }
        out.into_iter().rev().collect()
    }

    #[test]
    fn balanced_sizes() {
        let t = EnvTree::build_balanced_binary(1).unwrap();
        assert_eq!((t.num_nodes(), t.leaves().len(), t.num_arcs()), (3, 2, 2));

        let t = EnvTree::build_balanced_binary(7).unwrap();
        assert_eq!(t.num_nodes(), 255);
        assert_eq!(t.leaves().len(), 128);

        let t = EnvTree::build_balanced_binary(3).unwrap();
        let internals = t.nodes().filter(|&e| !t.is_leaf(e)).count();
        assert_eq!(t.num_nodes(), 15);
        assert_eq!(t.leaves().len() + internals, 15);
    }

    #[test]
    fn depth_zero_rejected() {
        assert!(matches!(
            EnvTree::build_balanced_binary(0),
            Err(TbrError::InvalidTree(_))
        ));
    }

    #[test]
    fn paths() {
        let t = EnvTree::build_balanced_binary(7).unwrap();
        assert!(t.path_to_root(EnvId::ROOT).unwrap().is_empty());
        let t1 = EnvTree::build_balanced_binary(1).unwrap();
        assert_eq!(t1.path_to_root(EnvId(2)).unwrap(), vec![ArcId(1)]);
        for &leaf in t.leaves() {
            let p = t.path_to_root(leaf).unwrap();
            assert_eq!(p.len(), 7);
            assert_eq!(p, parent_walk(&t, leaf));
        }
        assert!(matches!(t.path_to_root(EnvId(255)), Err(TbrError::UnknownEnv(255))));
    }

    #[test]
    fn path_prefix_property() {
        let t = EnvTree::build_balanced_binary(5).unwrap();
        for e in t.non_root_nodes() {
            let p = t.parent(e).unwrap();
            let mut expected = t.path_to_root(p).unwrap();
            expected.push(t.arc_of(p, e).unwrap());
            let path = t.path_to_root(e).unwrap();
            assert_eq!(path, expected);
            assert_eq!(path.len(), t.depth_of(e).unwrap());
        }
    }

    #[test]
    fn leaf_path_length_sum() {
        for d in 1..=8 {
            let t = EnvTree::build_balanced_binary(d).unwrap();
            let total: usize = t
                .leaves()
                .iter()
                .map(|&l| t.path_to_root(l).unwrap().len())
                .sum();
            assert_eq!(total, d * (1 << d));
        }
    }

    #[test]
    fn edge_list_small() {
        let t = EnvTree::from_edge_list(&[("r", "a"), ("r", "b")]).unwrap();
        assert_eq!(t.num_nodes(), 3);
        let leaves: Vec<&str> = t.leaves().iter().map(|&e| t.label(e)).collect();
        assert_eq!(leaves, vec!["a", "b"]);
        assert_eq!(t.label(EnvId::ROOT), "r");
    }

    #[test]
    fn edge_list_root_detected_anywhere() {
        // Root appears only as a parent, listed after its descendants.
        let t = EnvTree::from_edge_list(&[("a", "x"), ("r", "a"), ("r", "b")]).unwrap();
        assert_eq!(t.label(EnvId::ROOT), "r");
        assert_eq!(t.label(EnvId(1)), "a");
        assert_eq!(t.label(EnvId(2)), "b");
        assert_eq!(t.label(EnvId(3)), "x");
        assert_eq!(t.arc_of(EnvId(1), EnvId(3)), Some(ArcId(2)));
    }

    #[test]
    fn edge_list_errors() {
        let cyc = EnvTree::from_edge_list(&[("a", "b"), ("b", "c"), ("c", "a")]);
        assert!(matches!(cyc, Err(TbrError::InvalidTree(_))));
        // Root exists but a separate cycle is unreachable.
        let cyc2 = EnvTree::from_edge_list(&[("r", "a"), ("x", "y"), ("y", "x")]);
        assert!(matches!(cyc2, Err(TbrError::InvalidTree(_))));
        let multi = EnvTree::from_edge_list(&[("r", "a"), ("s", "b")]);
        assert!(matches!(multi, Err(TbrError::InvalidTree(m)) if m.contains("multiple roots")));
        let dup = EnvTree::from_edge_list(&[("r", "a"), ("r", "b"), ("b", "a")]);
        assert!(matches!(dup, Err(TbrError::InvalidTree(m)) if m.contains("more than one parent")));
        let selfloop = EnvTree::from_edge_list(&[("r", "r")]);
        assert!(selfloop.is_err());
        let empty: [(&str, &str); 0] = [];
        assert!(EnvTree::from_edge_list(&empty).is_err());
    }

    #[test]
    fn serialized_balanced_round_trips() {
        let t = EnvTree::build_balanced_binary(7).unwrap();
        let text = t.to_edge_list_string();
        assert_eq!(text.lines().count(), 255 - 1);
        let back = EnvTree::parse_edge_list(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.fingerprint(), t.fingerprint());
    }

    #[test]
    fn relabelled_tree_is_isomorphic() {
        let t = EnvTree::build_balanced_binary(4).unwrap();
        let renamed: Vec<(String, String)> = t
            .to_edge_list()
            .into_iter()
            .map(|(p, c)| (format!("node-{p}"), format!("node-{c}")))
            .collect();
        let back = EnvTree::from_edge_list(&renamed).unwrap();
        assert!(back.same_shape(&t));
        assert_ne!(back.fingerprint(), t.fingerprint());
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            EnvTree::parse_edge_list("a\tb\nbroken line\n"),
            Err(TbrError::Format(_))
        ));
        assert!(EnvTree::parse_edge_list("a\tb\tc\n").is_err());
        let t = EnvTree::parse_edge_list("root\tleft\r\n\nroot\tright\n").unwrap();
        assert_eq!(t.num_nodes(), 3);
    }

    #[test]
    fn non_binary_arity() {
        let t = EnvTree::from_edge_list(&[("r", "a"), ("r", "b"), ("r", "c"), ("a", "d")]).unwrap();
        assert_eq!(t.children(EnvId::ROOT).len(), 3);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.path_to_root(t.find_label("d").unwrap()).unwrap().len(), 2);
    }
}
