use std::collections::HashMap;

use crate::simplex::{ClassId, Distribution, Word};

pub type NodeId = usize;
pub type LeafId = usize;

#[derive(Debug, Clone)]
enum Node {
    Inner { dis: Word, children: HashMap<ClassId, NodeId> },
    Leaf(LeafId),
}

/// A leaf: an access string with its stored membership answer.
///
/// `dist` is `None` only for the ZERO leaf, which collects undefined strings
/// under the root when the teacher reports them.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub access: Word,
    pub dist: Option<Distribution>,
    node: NodeId,
}

/// Classification tree whose inner nodes carry distinguishing strings and
/// whose arcs are keyed by the class of `access · dis`.
///
/// The root is the inner node `λ` and leaf 0 has access string `λ`.
#[derive(Debug, Clone)]
pub struct ClassificationTree {
    nodes: Vec<Node>,
    parent: Vec<Option<(NodeId, ClassId)>>,
    depth: Vec<usize>,
    leaves: Vec<Leaf>,
    max_depth: usize,
}

impl ClassificationTree {
    /// Root `λ` with the leaves `λ` and `other`; the keys must differ.
    pub(crate) fn new(
        root_key: ClassId,
        root_dist: Option<Distribution>,
        other_key: ClassId,
        other_access: Word,
        other_dist: Option<Distribution>,
    ) -> Self {
        assert_ne!(root_key, other_key, "root children need distinct keys");
        let mut tree = ClassificationTree {
            nodes: vec![Node::Inner { dis: Vec::new(), children: HashMap::new() }],
            parent: vec![None],
            depth: vec![0],
            leaves: Vec::new(),
            max_depth: 0,
        };
        tree.add_leaf(0, root_key, Vec::new(), root_dist);
        tree.add_leaf(0, other_key, other_access, other_dist);
        tree
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn num_inner(&self) -> usize {
        self.nodes.len() - self.leaves.len()
    }

    pub fn leaf(&self, l: LeafId) -> &Leaf {
        &self.leaves[l]
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    /// Leaves that become hypothesis states.
    pub fn is_state(&self, l: LeafId) -> bool {
        self.leaves[l].dist.is_some()
    }

    /// Depth of the deepest leaf.
    pub fn depth(&self) -> usize {
        self.max_depth
    }

    pub fn leaf_depth(&self, l: LeafId) -> usize {
        self.depth[self.leaves[l].node]
    }

    /// `Some(dis)` for inner nodes.
    pub fn dis(&self, node: NodeId) -> Option<&Word> {
        match &self.nodes[node] {
            Node::Inner { dis, .. } => Some(dis),
            Node::Leaf(_) => None,
        }
    }

    pub fn leaf_at(&self, node: NodeId) -> Option<LeafId> {
        match self.nodes[node] {
            Node::Leaf(l) => Some(l),
            Node::Inner { .. } => None,
        }
    }

    pub fn child(&self, node: NodeId, key: &ClassId) -> Option<NodeId> {
        match &self.nodes[node] {
            Node::Inner { children, .. } => children.get(key).copied(),
            Node::Leaf(_) => None,
        }
    }

    pub fn num_children(&self, node: NodeId) -> usize {
        match &self.nodes[node] {
            Node::Inner { children, .. } => children.len(),
            Node::Leaf(_) => 0,
        }
    }

    /// Inner nodes from the root down to `l`, each with the key of the arc taken.
    pub fn path(&self, l: LeafId) -> Vec<(NodeId, ClassId)> {
        let mut path = Vec::new();
        let mut node = self.leaves[l].node;
        while let Some((p, key)) = &self.parent[node] {
            path.push((*p, key.clone()));
            node = *p;
        }
        path.reverse();
        path
    }

    /// Deepest common inner ancestor of two distinct leaves.
    pub fn lca(&self, a: LeafId, b: LeafId) -> NodeId {
        let (pa, pb) = (self.path(a), self.path(b));
        let mut last = self.root();
        for ((na, ka), (nb, kb)) in pa.iter().zip(&pb) {
            if na != nb {
                break;
            }
            last = *na;
            if ka != kb {
                break;
            }
        }
        last
    }

    fn push_node(&mut self, node: Node, parent: Option<(NodeId, ClassId)>) -> NodeId {
        let depth = parent.as_ref().map_or(0, |(p, _)| self.depth[*p] + 1);
        self.nodes.push(node);
        self.parent.push(parent);
        self.depth.push(depth);
        self.nodes.len() - 1
    }

    /// Attaches a new leaf under the inner node `at`; `key` must be fresh there.
    pub(crate) fn add_leaf(&mut self, at: NodeId, key: ClassId, access: Word, dist: Option<Distribution>) -> LeafId {
        let l = self.leaves.len();
        let node = self.push_node(Node::Leaf(l), Some((at, key.clone())));
        match &mut self.nodes[at] {
            Node::Inner { children, .. } => {
                let previous = children.insert(key, node);
                assert!(previous.is_none(), "arc keys are pairwise distinct");
            }
            Node::Leaf(_) => panic!("leaves have no children"),
        }
        self.max_depth = self.max_depth.max(self.depth[node]);
        self.leaves.push(Leaf { access, dist, node });
        l
    }

    /// Replaces leaf `l` by an inner node `dis` with children `l` (under
    /// `old_key`) and a new leaf `access` (under `new_key`).
    pub(crate) fn split(
        &mut self,
        l: LeafId,
        dis: Word,
        old_key: ClassId,
        new_key: ClassId,
        access: Word,
        dist: Option<Distribution>,
    ) -> LeafId {
        assert_ne!(old_key, new_key, "split keys must differ");
        let at = self.leaves[l].node;
        // the old leaf node becomes the inner node; the old leaf moves one level down
        let moved = self.push_node(Node::Leaf(l), Some((at, old_key.clone())));
        self.nodes[at] = Node::Inner { dis, children: HashMap::from([(old_key, moved)]) };
        self.leaves[l].node = moved;
        self.max_depth = self.max_depth.max(self.depth[moved]);
        self.add_leaf(at, new_key, access, dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{Partitioner, Symbol};

    fn key(p: &[f64]) -> ClassId {
        Partitioner::Exact.label(&Distribution::new(p.to_vec()).unwrap())
    }

    #[test]
    fn construction_and_split() {
        let mut t = ClassificationTree::new(key(&[0.5, 0.5]), None, key(&[1.0, 0.0]), vec![Symbol(0)], None);
        assert_eq!((t.num_leaves(), t.depth()), (2, 1));
        assert_eq!(t.leaf(0).access, Vec::<Symbol>::new());
        let new = t.split(1, vec![Symbol(0)], key(&[0.5, 0.5]), key(&[0.0, 1.0]), vec![Symbol(0), Symbol(0)], None);
        assert_eq!(new, 2);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.leaf_depth(1), 2);
        assert_eq!(t.leaf_depth(0), 1);
        assert_eq!(t.num_inner(), 2);
        assert_eq!(t.lca(1, 2), t.path(1)[1].0);
        assert_eq!(t.lca(0, 2), t.root());
        assert_eq!(t.path(2).len(), 2);
        assert_eq!(t.dis(t.path(2)[1].0), Some(&vec![Symbol(0)]));
    }

    #[test]
    #[should_panic(expected = "pairwise distinct")]
    fn duplicate_keys_are_rejected() {
        let mut t = ClassificationTree::new(key(&[0.5, 0.5]), None, key(&[1.0, 0.0]), vec![Symbol(0)], None);
        t.add_leaf(0, key(&[1.0, 0.0]), vec![Symbol(1)], None);
    }
}
