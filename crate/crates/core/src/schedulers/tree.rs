//! Arena-backed search tree with UCB selection, discounted backpropagation
//! and the visit-count discard rule.

use serde::{Deserialize, Serialize};

use crate::sim::Decision;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

pub const ROOT: NodeId = NodeId(0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    /// `None` only for the root.
    pub decision: Option<Decision>,
    /// Immediate reward of the one-interval simulation ending at this node.
    pub q: f64,
    /// Long-term value estimate.
    pub v: f64,
    /// Visit count; starts at 1.
    pub n: u32,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    pub expanded: bool,
}

impl SearchNode {
    fn new(decision: Option<Decision>, q: f64, parent: Option<NodeId>) -> Self {
        Self {
            decision,
            q,
            v: 0.0,
            n: 1,
            children: Vec::new(),
            parent,
            expanded: false,
        }
    }

    /// Visits beyond the initialization count.
    pub fn real_visits(&self) -> u32 {
        self.n - 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl Default for SearchTree {
    fn default() -> Self {
        Self::new()
    }
}

impl SearchTree {
    pub fn new() -> Self {
        Self {
            nodes: vec![SearchNode::new(None, 0.0, None)],
        }
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut SearchNode {
        &mut self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[ROOT.0]
    }

    pub fn add_child(&mut self, parent: NodeId, decision: Decision, q: f64) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(SearchNode::new(Some(decision), q, Some(parent)));
        self.nodes[parent.0].children.push(id);
        id
    }

    /// Node ids from the root down to `node`, inclusive.
    pub fn path(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur.0].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn path_decisions(&self, node: NodeId) -> Vec<Decision> {
        self.path(node).into_iter().filter_map(|id| self.nodes[id.0].decision).collect()
    }

    pub fn ucb(&self, child: NodeId, parent_visits: u32, c: f64) -> f64 {
        let node = &self.nodes[child.0];
        node.v + (c * (parent_visits as f64).ln() / node.n as f64).sqrt()
    }

    /// The child maximizing UCB; ties go to the earlier-created child.
    pub fn best_ucb_child(&self, parent: NodeId, c: f64) -> Option<NodeId> {
        let p = &self.nodes[parent.0];
        let mut best: Option<(NodeId, f64)> = None;
        for &child in &p.children {
            let score = self.ucb(child, p.n, c);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((child, score));
            }
        }
        best.map(|(id, _)| id)
    }

    /// Descends by UCB until reaching a node that is unexpanded or terminal.
    pub fn select_leaf(&self, c: f64) -> NodeId {
        let mut cur = ROOT;
        loop {
            let node = &self.nodes[cur.0];
            if !node.expanded {
                return cur;
            }
            match self.best_ucb_child(cur, c) {
                Some(next) => cur = next,
                None => return cur,
            }
        }
    }

    /// Updates every node from the root to `leaf` with the discounted value
    /// of `rewards` as one more sample of an incremental mean.
    pub fn backpropagate(&mut self, leaf: NodeId, rewards: &[f64], lambda: f64) -> f64 {
        let value = discounted_value(rewards, lambda);
        for id in self.path(leaf) {
            let node = &mut self.nodes[id.0];
            node.n += 1;
            node.v += (value - node.v) / node.n as f64;
        }
        value
    }

    /// A depth-1 child whose real visits exceed `⌊m_iter / 2⌋`. No sibling can
    /// catch up within the remaining budget once this holds.
    pub fn discard_check(&self, m_iter: u32) -> Option<NodeId> {
        let threshold = m_iter / 2;
        self.root()
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c.0].real_visits() > threshold)
    }

    /// Most-visited depth-1 child; ties by higher `v`, then lower task id,
    /// then lower host id.
    pub fn most_visited_child(&self) -> Option<NodeId> {
        let mut best: Option<NodeId> = None;
        for &c in &self.root().children {
            let Some(b) = best else {
                best = Some(c);
                continue;
            };
            let (cn, bn) = (&self.nodes[c.0], &self.nodes[b.0]);
            let (cd, bd) = (cn.decision.expect("child"), bn.decision.expect("child"));
            let better = cn.n > bn.n
                || (cn.n == bn.n
                    && (cn.v > bn.v
                        || (cn.v == bn.v && (cd.task, cd.host) < (bd.task, bd.host))));
            if better {
                best = Some(c);
            }
        }
        best
    }
}

/// `Σ λ^d q_d / Σ λ^d` over the reward sequence.
pub fn discounted_value(rewards: &[f64], lambda: f64) -> f64 {
    let mut weight = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for q in rewards {
        num += weight * q;
        den += weight;
        weight *= lambda;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infra::HostId;
    use crate::workflow::TaskId;

    fn d(task: u64, host: u32) -> Decision {
        Decision::new(TaskId(task), HostId(host))
    }

    fn tree_with_children(stats: &[(f64, u32)], root_n: u32) -> SearchTree {
        let mut t = SearchTree::new();
        t.node_mut(ROOT).expanded = true;
        t.node_mut(ROOT).n = root_n;
        for (i, (v, n)) in stats.iter().enumerate() {
            let id = t.add_child(ROOT, d(i as u64, 0), 0.0);
            t.node_mut(id).v = *v;
            t.node_mut(id).n = *n;
        }
        t
    }

    #[test]
    fn fresh_root_is_selected() {
        assert_eq!(SearchTree::new().select_leaf(0.5), ROOT);
    }

    #[test]
    fn fewer_visits_wins_on_equal_value() {
        let t = tree_with_children(&[(0.5, 2), (0.5, 1)], 3);
        assert_eq!(t.select_leaf(0.5), NodeId(2));
    }

    #[test]
    fn single_child_selected() {
        let t = tree_with_children(&[(0.1, 5)], 6);
        assert_eq!(t.select_leaf(0.5), NodeId(1));
    }

    #[test]
    fn ucb_hand_values() {
        let t = tree_with_children(&[(0.9, 3), (0.1, 1)], 4);
        let a = t.ucb(NodeId(1), 4, 0.5);
        let b = t.ucb(NodeId(2), 4, 0.5);
        assert!((a - 1.381).abs() < 5e-4, "{a}");
        assert!((b - 0.933).abs() < 5e-4, "{b}");
        assert_eq!(t.select_leaf(0.5), NodeId(1));
    }

    #[test]
    fn ties_break_by_creation_order() {
        let t = tree_with_children(&[(0.3, 2), (0.3, 2)], 5);
        assert_eq!(t.select_leaf(0.5), NodeId(1));
    }

    #[test]
    fn expanded_childless_node_is_terminal() {
        let mut t = tree_with_children(&[(0.5, 1)], 2);
        t.node_mut(NodeId(1)).expanded = true;
        assert_eq!(t.select_leaf(0.5), NodeId(1));
    }

    #[test]
    fn discounted_value_examples() {
        assert!((discounted_value(&[0.8; 8], 0.9) - 0.8).abs() < 1e-12);
        assert!((discounted_value(&[0.8; 3], 0.3) - 0.8).abs() < 1e-12);
        assert!((discounted_value(&[1.0, 0.0], 0.5) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn backpropagate_incremental_mean_with_zero_prior() {
        let mut t = SearchTree::new();
        t.node_mut(ROOT).expanded = true;
        let leaf = t.add_child(ROOT, d(1, 0), 0.8);
        let r = t.backpropagate(leaf, &[0.8; 8], 0.9);
        assert!((r - 0.8).abs() < 1e-12);
        let node = t.node(leaf);
        assert_eq!(node.n, 2);
        assert!((node.v - 0.4).abs() < 1e-12);
        assert_eq!(t.root().n, 2);
    }

    #[test]
    fn discard_boundary() {
        let mut t = tree_with_children(&[(0.5, 6), (0.5, 3)], 9);
        // Real visits 5 do not exceed ⌊10/2⌋.
        assert_eq!(t.discard_check(10), None);
        t.node_mut(NodeId(1)).n = 7;
        assert_eq!(t.discard_check(10), Some(NodeId(1)));
    }

    #[test]
    fn discard_with_single_iteration_budget() {
        // ⌊1/2⌋ = 0, so the first real visit already triggers.
        let mut t = SearchTree::new();
        t.node_mut(ROOT).expanded = true;
        let a = t.add_child(ROOT, d(1, 0), 0.5);
        t.add_child(ROOT, d(1, 1), 0.5);
        assert_eq!(t.discard_check(1), None);
        t.backpropagate(a, &[0.5], 0.9);
        assert_eq!(t.discard_check(1), Some(a));
    }

    #[test]
    fn most_visited_tie_breaks() {
        let mut t = SearchTree::new();
        let a = t.add_child(ROOT, d(2, 1), 0.0);
        let b = t.add_child(ROOT, d(1, 3), 0.0);
        let c = t.add_child(ROOT, d(1, 2), 0.0);
        for id in [a, b, c] {
            t.node_mut(id).n = 3;
            t.node_mut(id).v = 0.5;
        }
        assert_eq!(t.most_visited_child(), Some(c));
        t.node_mut(a).v = 0.6;
        assert_eq!(t.most_visited_child(), Some(a));
        t.node_mut(b).n = 4;
        assert_eq!(t.most_visited_child(), Some(b));
    }

    #[test]
    fn path_decisions_skip_root() {
        let mut t = SearchTree::new();
        let a = t.add_child(ROOT, d(1, 0), 0.0);
        let b = t.add_child(a, d(2, 1), 0.0);
        assert_eq!(t.path(b), vec![ROOT, a, b]);
        assert_eq!(t.path_decisions(b), vec![d(1, 0), d(2, 1)]);
    }
}
