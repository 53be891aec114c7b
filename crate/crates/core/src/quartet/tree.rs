use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::Rng;

use super::QuartetError;

/// Unrooted tree whose `n` leaves carry labels and whose `n - 2` internal
/// nodes all have degree 3.
///
/// Nodes `0..n` are the leaves, in label order of `labels`; nodes
/// `n..2n-2` are internal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrootedTernaryTree {
    labels: Vec<String>,
    pub(crate) adj: Vec<Vec<usize>>,
}

impl UnrootedTernaryTree {
    /// Validating constructor.
    pub fn from_adjacency(labels: Vec<String>, adj: Vec<Vec<usize>>) -> Result<Self, QuartetError> {
        let t = Self { labels, adj };
        t.validate()?;
        Ok(t)
    }

    /// Star on three leaves; the seed for stepwise construction.
    pub(crate) fn triple(labels: Vec<String>) -> Self {
        let n = labels.len();
        debug_assert!(n >= 3);
        let mut adj = vec![Vec::with_capacity(3); 2 * n - 2];
        let c = n;
        for leaf in 0..3 {
            adj[leaf].push(c);
            adj[c].push(leaf);
        }
        Self { labels, adj }
    }

    /// Inserts leaf `leaf` on edge `(a, b)` using internal node `mid`.
    pub(crate) fn insert_leaf(&mut self, leaf: usize, mid: usize, a: usize, b: usize) {
        replace(&mut self.adj[a], b, mid);
        replace(&mut self.adj[b], a, mid);
        self.adj[mid] = vec![a, b, leaf];
        self.adj[leaf] = vec![mid];
    }

    /// The node that `insert_leaf` uses when adding leaf `k` (k >= 3).
    pub(crate) fn internal_for(&self, k: usize) -> usize {
        self.labels.len() + k - 2
    }

    /// Edges among nodes already attached (nonempty adjacency), `a < b`.
    pub(crate) fn attached_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ns) in self.adj.iter().enumerate() {
            for &b in ns {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Uniform random topology by random stepwise leaf addition.
    pub fn random<R: Rng + ?Sized>(labels: Vec<String>, rng: &mut R) -> Result<Self, QuartetError> {
        let n = labels.len();
        if n < 4 {
            return Err(QuartetError::TooFewLeaves(n));
        }
        let mut t = Self::triple(labels);
        for k in 3..n {
            let edges = t.attached_edges();
            let (a, b) = edges[rng.gen_range(0..edges.len())];
            let mid = t.internal_for(k);
            t.insert_leaf(k, mid, a, b);
        }
        Ok(t)
    }

    /// Leaves attached in order along a spine.
    pub fn caterpillar(labels: Vec<String>) -> Result<Self, QuartetError> {
        let n = labels.len();
        if n < 4 {
            return Err(QuartetError::TooFewLeaves(n));
        }
        let mut t = Self::triple(labels);
        for k in 3..n {
            let mid = t.internal_for(k);
            let prev = t.adj[k - 1][0];
            t.insert_leaf(k, mid, k - 1, prev);
        }
        Ok(t)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn leaf_count(&self) -> usize {
        self.labels.len()
    }

    pub fn internal_count(&self) -> usize {
        self.adj.len() - self.labels.len()
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.labels.len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.attached_edges()
    }

    pub fn leaf_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn validate(&self) -> Result<(), QuartetError> {
        let n = self.labels.len();
        let bad = |msg: String| Err(QuartetError::Malformed(msg));
        if n < 4 {
            return Err(QuartetError::TooFewLeaves(n));
        }
        if self.adj.len() != 2 * n - 2 {
            return bad(format!("{} nodes for {n} leaves, expected {}", self.adj.len(), 2 * n - 2));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.labels {
            if !seen.insert(l) {
                return Err(QuartetError::DuplicateLabel(l.clone()));
            }
        }
        for (v, ns) in self.adj.iter().enumerate() {
            let want = if v < n { 1 } else { 3 };
            if ns.len() != want {
                return bad(format!("node {v} has degree {}, expected {want}", ns.len()));
            }
            for &u in ns {
                if u >= self.adj.len() || u == v || !self.adj[u].contains(&v) {
                    return bad(format!("edge {v}-{u} is not mutual"));
                }
            }
        }
        let edges = self.adj.iter().map(Vec::len).sum::<usize>() / 2;
        if edges != self.adj.len() - 1 || self.bfs(0).contains(&u32::MAX) {
            return bad("not a connected acyclic graph".into());
        }
        Ok(())
    }

    fn bfs(&self, from: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.adj.len()];
        let mut queue = VecDeque::from([from]);
        dist[from] = 0;
        while let Some(v) = queue.pop_front() {
            for &u in &self.adj[v] {
                if dist[u] == u32::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Path lengths in edges between leaves, row-major `n x n`.
    pub fn leaf_distances(&self) -> Vec<u32> {
        let n = self.labels.len();
        let mut out = vec![0; n * n];
        self.leaf_distances_into(&mut out, &mut Vec::new());
        out
    }

    pub(crate) fn leaf_distances_into(&self, out: &mut [u32], queue: &mut Vec<usize>) {
        let n = self.labels.len();
        let mut dist = vec![u32::MAX; self.adj.len()];
        for leaf in 0..n {
            dist.iter_mut().for_each(|d| *d = u32::MAX);
            queue.clear();
            queue.push(leaf);
            dist[leaf] = 0;
            let mut head = 0;
            while head < queue.len() {
                let v = queue[head];
                head += 1;
                for &u in &self.adj[v] {
                    if dist[u] == u32::MAX {
                        dist[u] = dist[v] + 1;
                        queue.push(u);
                    }
                }
            }
            out[leaf * n..(leaf + 1) * n].copy_from_slice(&dist[..n]);
        }
    }

    /// Same topology with leaves renumbered to follow `order` (a permutation
    /// of this tree's labels).
    pub fn reindexed(&self, order: &[String]) -> Result<Self, QuartetError> {
        let n = self.labels.len();
        if order.len() != n {
            return Err(QuartetError::LabelMismatch(format!(
                "tree has {n} leaves, label list has {}",
                order.len()
            )));
        }
        let mut map = vec![usize::MAX; self.adj.len()];
        for (new, l) in order.iter().enumerate() {
            let old = self
                .leaf_index(l)
                .ok_or_else(|| QuartetError::LabelMismatch(format!("`{l}` is not a leaf")))?;
            map[old] = new;
        }
        for (v, slot) in map.iter_mut().enumerate().skip(n) {
            *slot = v;
        }
        if map[..n].contains(&usize::MAX) {
            return Err(QuartetError::LabelMismatch("label list is not a permutation".into()));
        }
        let mut adj = vec![Vec::new(); self.adj.len()];
        for (v, ns) in self.adj.iter().enumerate() {
            adj[map[v]] = ns.iter().map(|&u| map[u]).collect();
        }
        Ok(Self { labels: order.to_vec(), adj })
    }

    /// Canonical Newick: rooted at the internal node adjacent to the
    /// smallest leaf label, children ordered by their smallest descendant
    /// label.
    pub fn to_newick(&self) -> String {
        let smallest = (0..self.labels.len())
            .min_by(|&a, &b| self.labels[a].cmp(&self.labels[b]))
            .expect("tree has leaves");
        let root = self.adj[smallest][0];
        let mut out = String::new();
        self.write_subtree(root, usize::MAX, &mut out);
        out.push(';');
        out
    }

    fn min_label(&self, node: usize, parent: usize) -> &str {
        if self.is_leaf(node) {
            return &self.labels[node];
        }
        self.adj[node]
            .iter()
            .filter(|&&c| c != parent)
            .map(|&c| self.min_label(c, node))
            .min()
            .expect("internal node has children")
    }

    fn write_subtree(&self, node: usize, parent: usize, out: &mut String) {
        if self.is_leaf(node) {
            out.push_str(&quote_label(&self.labels[node]));
            return;
        }
        let mut children: Vec<(&str, usize)> = self.adj[node]
            .iter()
            .filter(|&&c| c != parent)
            .map(|&c| (self.min_label(c, node), c))
            .collect();
        children.sort();
        out.push('(');
        for (i, (_, c)) in children.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.write_subtree(*c, node, out);
        }
        out.push(')');
    }

    /// Parses Newick text describing a fully resolved tree. Branch lengths
    /// and internal labels are ignored; a bifurcating root is suppressed.
    pub fn from_newick(text: &str) -> Result<Self, QuartetError> {
        let mut p = NewickParser { chars: text.trim().chars().collect(), pos: 0 };
        let root = p.subtree()?;
        p.skip_ws();
        if p.peek() == Some(';') {
            p.pos += 1;
        }
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(p.error("trailing characters"));
        }
        build_from_rooted(root)
    }
}

impl fmt::Display for UnrootedTernaryTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_newick())
    }
}

fn replace(ns: &mut [usize], from: usize, to: usize) {
    let slot = ns.iter_mut().find(|v| **v == from).expect("edge endpoint present");
    *slot = to;
}

pub(crate) fn replace_neighbor(adj: &mut [Vec<usize>], node: usize, from: usize, to: usize) {
    replace(&mut adj[node], from, to);
}

fn needs_quotes(label: &str) -> bool {
    label.is_empty()
        || label.chars().any(|c| c.is_whitespace() || "()[]':;,".contains(c))
}

pub fn quote_label(label: &str) -> String {
    if needs_quotes(label) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

enum Node {
    Leaf(String),
    Inner(Vec<Node>),
}

struct NewickParser {
    chars: Vec<char>,
    pos: usize,
}

impl NewickParser {
    fn error(&self, msg: &str) -> QuartetError {
        QuartetError::Newick { pos: self.pos, msg: msg.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn subtree(&mut self) -> Result<Node, QuartetError> {
        self.skip_ws();
        let node = if self.peek() == Some('(') {
            self.pos += 1;
            let mut children = vec![self.subtree()?];
            loop {
                self.skip_ws();
                match self.peek() {
                    Some(',') => {
                        self.pos += 1;
                        children.push(self.subtree()?);
                    }
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected `,` or `)`")),
                }
            }
            self.label()?;
            Node::Inner(children)
        } else {
            let label = self.label()?;
            if label.is_empty() {
                return Err(self.error("expected a leaf label"));
            }
            Node::Leaf(label)
        };
        self.skip_ws();
        if self.peek() == Some(':') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit() || "+-.eE".contains(c)) {
                self.pos += 1;
            }
            let s: String = self.chars[start..self.pos].iter().collect();
            s.parse::<f64>().map_err(|_| self.error("bad branch length"))?;
        }
        Ok(node)
    }

    fn label(&mut self) -> Result<String, QuartetError> {
        self.skip_ws();
        let mut out = String::new();
        if self.peek() == Some('\'') {
            self.pos += 1;
            loop {
                match self.peek() {
                    None => return Err(self.error("unterminated quoted label")),
                    Some('\'') if self.chars.get(self.pos + 1) == Some(&'\'') => {
                        out.push('\'');
                        self.pos += 2;
                    }
                    Some('\'') => {
                        self.pos += 1;
                        return Ok(out);
                    }
                    Some(c) => {
                        out.push(c);
                        self.pos += 1;
                    }
                }
            }
        }
        while let Some(c) = self.peek() {
            if c.is_whitespace() || "()[]':;,".contains(c) {
                break;
            }
            out.push(c);
            self.pos += 1;
        }
        Ok(out)
    }
}

fn build_from_rooted(root: Node) -> Result<UnrootedTernaryTree, QuartetError> {
    let mut labels = Vec::new();
    collect_leaves(&root, &mut labels);
    let n = labels.len();
    if n < 4 {
        return Err(QuartetError::TooFewLeaves(n));
    }
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    if index.len() != n {
        let mut seen = std::collections::HashSet::new();
        let dup = labels.iter().find(|l| !seen.insert(*l)).expect("duplicate exists");
        return Err(QuartetError::DuplicateLabel(dup.clone()));
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let root_children = match &root {
        Node::Inner(c) => c,
        Node::Leaf(_) => unreachable!("n >= 4"),
    };
    let not_ternary = || QuartetError::Malformed("tree is not fully resolved (ternary)".into());
    match root_children.len() {
        3 => {
            let r = new_node(&mut adj);
            for c in root_children {
                let v = attach(c, &mut adj, &index)?;
                link(&mut adj, r, v);
            }
        }
        2 => {
            let a = attach(&root_children[0], &mut adj, &index)?;
            let b = attach(&root_children[1], &mut adj, &index)?;
            link(&mut adj, a, b);
        }
        _ => return Err(not_ternary()),
    }
    UnrootedTernaryTree::from_adjacency(labels, adj).map_err(|e| match e {
        QuartetError::Malformed(_) => not_ternary(),
        other => other,
    })
}

fn collect_leaves(node: &Node, out: &mut Vec<String>) {
    match node {
        Node::Leaf(l) => out.push(l.clone()),
        Node::Inner(cs) => cs.iter().for_each(|c| collect_leaves(c, out)),
    }
}

fn new_node(adj: &mut Vec<Vec<usize>>) -> usize {
    adj.push(Vec::new());
    adj.len() - 1
}

fn link(adj: &mut [Vec<usize>], a: usize, b: usize) {
    adj[a].push(b);
    adj[b].push(a);
}

/// Adds the subtree below a non-root node; such nodes need two children.
fn attach(
    node: &Node,
    adj: &mut Vec<Vec<usize>>,
    index: &HashMap<&str, usize>,
) -> Result<usize, QuartetError> {
    match node {
        Node::Leaf(l) => Ok(index[l.as_str()]),
        Node::Inner(cs) if cs.len() == 2 => {
            let v = new_node(adj);
            for c in cs {
                let u = attach(c, adj, index)?;
                link(adj, v, u);
            }
            Ok(v)
        }
        Node::Inner(_) => Err(QuartetError::Malformed("tree is not fully resolved (ternary)".into())),
    }
}
