use super::CutGrid;

pub(crate) const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf { mu: f64 },
    Split { var: u32, cut: u32, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    node: Node,
    parent: u32,
    depth: u32,
    alive: bool,
}

/// Binary decision tree stored in an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    slots: Vec<Slot>,
    free: Vec<u32>,
}

impl DecisionTree {
    pub fn stump(mu: f64) -> Self {
        Self {
            slots: vec![Slot {
                node: Node::Leaf { mu },
                parent: NONE,
                depth: 0,
                alive: true,
            }],
            free: Vec::new(),
        }
    }

    /// Slot capacity; node ids are always below this.
    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn node(&self, id: u32) -> Node {
        self.slots[id as usize].node
    }

    pub fn parent(&self, id: u32) -> Option<u32> {
        let p = self.slots[id as usize].parent;
        (p != NONE).then_some(p)
    }

    pub fn depth(&self, id: u32) -> usize {
        self.slots[id as usize].depth as usize
    }

    pub fn is_leaf(&self, id: u32) -> bool {
        matches!(self.slots[id as usize].node, Node::Leaf { .. })
    }

    #[inline]
    pub fn mu(&self, id: u32) -> f64 {
        match self.slots[id as usize].node {
            Node::Leaf { mu } => mu,
            Node::Split { .. } => f64::NAN,
        }
    }

    pub fn set_mu(&mut self, id: u32, value: f64) {
        if let Node::Leaf { mu } = &mut self.slots[id as usize].node {
            *mu = value;
        }
    }

    fn alive(&self) -> impl Iterator<Item = u32> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.alive)
            .map(|(i, _)| i as u32)
    }

    pub fn leaves(&self) -> Vec<u32> {
        self.alive().filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn internal_nodes(&self) -> Vec<u32> {
        self.alive().filter(|&i| !self.is_leaf(i)).collect()
    }

    /// Internal nodes whose children are both leaves.
    pub fn nog_nodes(&self) -> Vec<u32> {
        self.alive()
            .filter(|&i| match self.node(i) {
                Node::Split { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
                Node::Leaf { .. } => false,
            })
            .collect()
    }

    /// Internal non-root nodes whose parent is internal (swap candidates).
    pub fn swap_candidates(&self) -> Vec<u32> {
        self.alive()
            .filter(|&i| !self.is_leaf(i) && self.parent(i).is_some())
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.alive().filter(|&i| self.is_leaf(i)).count()
    }

    pub fn max_depth(&self) -> usize {
        self.alive().map(|i| self.depth(i)).max().unwrap_or(0)
    }

    fn alloc(&mut self, slot: Slot) -> u32 {
        match self.free.pop() {
            Some(id) => {
                self.slots[id as usize] = slot;
                id
            }
            None => {
                self.slots.push(slot);
                (self.slots.len() - 1) as u32
            }
        }
    }

    /// Splits `leaf` on `(var, cut)`; returns the new (left, right) children.
    pub fn grow(&mut self, leaf: u32, var: usize, cut: usize, mu_left: f64, mu_right: f64) -> (u32, u32) {
        debug_assert!(self.is_leaf(leaf));
        let depth = self.slots[leaf as usize].depth + 1;
        let mk = |mu| Slot {
            node: Node::Leaf { mu },
            parent: leaf,
            depth,
            alive: true,
        };
        let left = self.alloc(mk(mu_left));
        let right = self.alloc(mk(mu_right));
        self.slots[leaf as usize].node = Node::Split {
            var: var as u32,
            cut: cut as u32,
            left,
            right,
        };
        (left, right)
    }

    /// Collapses a node whose children are leaves back into a leaf.
    pub fn prune(&mut self, node: u32, mu: f64) {
        if let Node::Split { left, right, .. } = self.node(node) {
            debug_assert!(self.is_leaf(left) && self.is_leaf(right));
            for c in [left, right] {
                self.slots[c as usize].alive = false;
                self.free.push(c);
            }
            self.slots[node as usize].node = Node::Leaf { mu };
        }
    }

    pub fn rule(&self, node: u32) -> Option<(usize, usize)> {
        match self.node(node) {
            Node::Split { var, cut, .. } => Some((var as usize, cut as usize)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn set_rule(&mut self, node: u32, var: usize, cut: usize) {
        if let Node::Split { var: v, cut: c, .. } = &mut self.slots[node as usize].node {
            *v = var as u32;
            *c = cut as u32;
        }
    }

    pub fn children(&self, node: u32) -> Option<(u32, u32)> {
        match self.node(node) {
            Node::Split { left, right, .. } => Some((left, right)),
            Node::Leaf { .. } => None,
        }
    }

    /// All nodes in the subtree rooted at `node` (preorder).
    pub fn subtree(&self, node: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some((l, r)) = self.children(id) {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    /// Inclusive bin range `[lo, hi]` reachable at `node` for each variable.
    /// A split on `var` at `node` is logically possible iff `hi > lo`, with
    /// cuts `lo..hi` available.
    pub fn bin_ranges(&self, node: u32, grid: &CutGrid) -> Vec<(u32, u32)> {
        let mut ranges: Vec<(u32, u32)> = (0..grid.p()).map(|v| (0, grid.n_cuts(v) as u32)).collect();
        let mut child = node;
        while let Some(parent) = self.parent(child) {
            if let Node::Split { var, cut, left, .. } = self.node(parent) {
                let r = &mut ranges[var as usize];
                if child == left {
                    r.1 = r.1.min(cut);
                } else {
                    r.0 = r.0.max(cut + 1);
                }
            }
            child = parent;
        }
        ranges
    }

    /// Inclusive bin range reachable at `node` for one variable.
    pub fn var_range(&self, node: u32, var: usize, grid: &CutGrid) -> (u32, u32) {
        let mut r = (0, grid.n_cuts(var) as u32);
        let mut child = node;
        while let Some(parent) = self.parent(child) {
            if let Node::Split { var: v, cut, left, .. } = self.node(parent) {
                if v as usize == var {
                    if child == left {
                        r.1 = r.1.min(cut);
                    } else {
                        r.0 = r.0.max(cut + 1);
                    }
                }
            }
            child = parent;
        }
        r
    }

    /// Whether any split is still possible at `node`.
    pub fn has_cut(&self, node: u32, grid: &CutGrid) -> bool {
        (0..grid.p()).any(|v| {
            let (lo, hi) = self.var_range(node, v, grid);
            hi > lo
        })
    }

    /// Alive node ids in slot order.
    pub fn alive_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.alive()
    }

    #[inline]
    pub fn leaf_for_bins(&self, bins: &[u16]) -> u32 {
        self.descend_bins(0, bins)
    }

    #[inline]
    pub fn descend_bins(&self, from: u32, bins: &[u16]) -> u32 {
        let mut id = from;
        loop {
            match self.slots[id as usize].node {
                Node::Leaf { .. } => return id,
                Node::Split { var, cut, left, right } => {
                    id = if (bins[var as usize] as u32) <= cut { left } else { right };
                }
            }
        }
    }

    /// Leaf reached by raw covariate values.
    pub fn leaf_for_values(&self, row: &[f64], grid: &CutGrid) -> u32 {
        let mut id = 0u32;
        loop {
            match self.slots[id as usize].node {
                Node::Leaf { .. } => return id,
                Node::Split { var, cut, left, right } => {
                    id = if row[var as usize] < grid.cut(var as usize, cut as usize) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn predict_values(&self, row: &[f64], grid: &CutGrid) -> f64 {
        self.mu(self.leaf_for_values(row, grid))
    }

    /// True when every split's cut lies in the range its ancestors allow.
    pub fn is_satisfiable(&self, grid: &CutGrid) -> bool {
        self.internal_nodes().into_iter().all(|id| {
            let (var, cut) = self.rule(id).expect("internal");
            let (lo, hi) = self.bin_ranges(id, grid)[var];
            (cut as u32) >= lo && (cut as u32) < hi
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> CutGrid {
        CutGrid::from_cuts(vec![vec![1.0, 2.0, 3.0], vec![0.5]])
    }

    #[test]
    fn grow_prune_and_ranges() {
        let g = grid();
        let mut t = DecisionTree::stump(0.0);
        let (l, r) = t.grow(0, 0, 1, -1.0, 1.0);
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.bin_ranges(l, &g)[0], (0, 1));
        assert_eq!(t.bin_ranges(r, &g)[0], (2, 3));
        assert_eq!(t.bin_ranges(r, &g)[1], (0, 1));
        assert_eq!(t.predict_values(&[1.5, 0.0], &g), -1.0);
        assert_eq!(t.predict_values(&[2.0, 0.0], &g), 1.0);
        assert_eq!(t.nog_nodes(), vec![0]);
        let (rl, _) = t.grow(r, 1, 0, 5.0, 6.0);
        assert_eq!(t.depth(rl), 2);
        assert_eq!(t.nog_nodes(), vec![r]);
        assert_eq!(t.swap_candidates(), vec![r]);
        assert!(t.is_satisfiable(&g));
        t.set_rule(r, 0, 0);
        assert!(!t.is_satisfiable(&g));
        t.set_rule(r, 1, 0);
        t.prune(r, 2.0);
        t.prune(0, 0.0);
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict_values(&[9.0, 9.0], &g), 0.0);
    }

    #[test]
    fn bins_and_values_route_identically() {
        let g = grid();
        let mut t = DecisionTree::stump(0.0);
        let (_, r) = t.grow(0, 0, 0, 1.0, 2.0);
        t.grow(r, 0, 2, 3.0, 4.0);
        for &x in &[0.0, 1.0, 1.5, 2.9, 3.0, 4.0] {
            let bins = [g.bin(0, x), 0];
            assert_eq!(t.leaf_for_bins(&bins), t.leaf_for_values(&[x, 0.0], &g));
        }
    }
}
