use std::io::Write;

use rand::Rng;

use super::tree::{DecisionTree, Node};
use super::{BartHyperParams, BinnedRows, CutGrid, Design};
use crate::error::{Error, Result};
use crate::stats::{self, std_normal};

const SIGMA2_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Continuous,
    Probit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Grow = 0,
    Prune = 1,
    Change = 2,
    Swap = 3,
}

/// Which moves a tree currently admits, with the counts the proposal
/// probabilities depend on.
#[derive(Debug, Clone, Copy)]
struct MoveAvail {
    growable: usize,
    nog: usize,
    internal: usize,
    swappable: usize,
}

fn split_prob(depth: usize, has_cut: bool, hyper: &BartHyperParams) -> f64 {
    if !has_cut || hyper.max_depth.is_some_and(|m| depth >= m) {
        0.0
    } else {
        hyper.alpha * (1.0 + depth as f64).powf(-hyper.beta)
    }
}

fn node_split_prob(tree: &DecisionTree, node: u32, grid: &CutGrid, hyper: &BartHyperParams) -> f64 {
    if hyper.max_depth.is_some_and(|m| tree.depth(node) >= m) {
        return 0.0;
    }
    split_prob(tree.depth(node), tree.has_cut(node, grid), hyper)
}

impl MoveAvail {
    fn of(tree: &DecisionTree, grid: &CutGrid, hyper: &BartHyperParams) -> Self {
        let mut out = Self { growable: 0, nog: 0, internal: 0, swappable: 0 };
        for id in tree.alive_ids() {
            match tree.node(id) {
                Node::Leaf { .. } => out.growable += (node_split_prob(tree, id, grid, hyper) > 0.0) as usize,
                Node::Split { left, right, .. } => {
                    out.internal += 1;
                    out.nog += (tree.is_leaf(left) && tree.is_leaf(right)) as usize;
                    out.swappable += tree.parent(id).is_some() as usize;
                }
            }
        }
        out
    }

    fn weights(&self, hyper: &BartHyperParams) -> [f64; 4] {
        let m = &hyper.moves;
        [
            if self.growable > 0 { m.grow } else { 0.0 },
            if self.internal > 0 { m.prune } else { 0.0 },
            if self.internal > 0 { m.change } else { 0.0 },
            if self.swappable > 0 { m.swap } else { 0.0 },
        ]
    }

    fn ln_prob(&self, mv: Move, hyper: &BartHyperParams) -> f64 {
        let w = self.weights(hyper);
        (w[mv as usize] / w.iter().sum::<f64>()).ln()
    }
}

/// Log prior of the subtree rooted at `node`: split/stop probabilities and
/// the uniform rule prior at each split. `-inf` if a rule is unreachable.
fn subtree_log_prior(tree: &DecisionTree, node: u32, grid: &CutGrid, hyper: &BartHyperParams) -> f64 {
    let mut total = 0.0;
    for id in tree.subtree(node) {
        let ranges = tree.bin_ranges(id, grid);
        let n_vars = ranges.iter().filter(|(lo, hi)| hi > lo).count();
        let p = split_prob(tree.depth(id), n_vars > 0, hyper);
        match tree.node(id) {
            Node::Leaf { .. } => total += (1.0 - p).ln(),
            Node::Split { var, cut, .. } => {
                let (lo, hi) = ranges[var as usize];
                if p == 0.0 || cut < lo || cut >= hi {
                    return f64::NEG_INFINITY;
                }
                total += p.ln() - (n_vars as f64).ln() - ((hi - lo) as f64).ln();
            }
        }
    }
    total
}

#[derive(Debug, Default, Clone)]
struct Scratch {
    cnt: Vec<u32>,
    sum: Vec<f64>,
    new_cnt: Vec<u32>,
    new_sum: Vec<f64>,
    members: Vec<u32>,
    routed: Vec<u32>,
    in_sub: Vec<bool>,
    mu_tab: Vec<f64>,
    mu_next: Vec<f64>,
}

struct TreeCtx<'a> {
    grid: &'a CutGrid,
    bins: &'a BinnedRows,
    hyper: &'a BartHyperParams,
    /// Partial residual of the tree being updated.
    resid: &'a [f64],
    sigma2: f64,
    sigma_mu2: f64,
}

impl TreeCtx<'_> {
    #[inline]
    fn leaf_ll(&self, n: u32, s: f64) -> f64 {
        let d = self.sigma2 + n as f64 * self.sigma_mu2;
        0.5 * (self.sigma2 / d).ln() + self.sigma_mu2 * s * s / (2.0 * self.sigma2 * d)
    }

    fn pick<R: Rng + ?Sized, T: Copy>(items: &[T], rng: &mut R) -> T {
        items[rng.random_range(0..items.len())]
    }

    /// Uniform rule among the cuts reachable at `node`.
    fn draw_rule<R: Rng + ?Sized>(&self, tree: &DecisionTree, node: u32, rng: &mut R) -> Option<(usize, usize)> {
        let ranges = tree.bin_ranges(node, self.grid);
        let vars: Vec<usize> = (0..ranges.len()).filter(|&v| ranges[v].1 > ranges[v].0).collect();
        if vars.is_empty() {
            return None;
        }
        let v = Self::pick(&vars, rng);
        let (lo, hi) = ranges[v];
        Some((v, rng.random_range(lo..hi) as usize))
    }

    fn grow<R: Rng + ?Sized>(
        &self,
        tree: &mut DecisionTree,
        leaf_of: &mut [u32],
        sc: &mut Scratch,
        avail: &MoveAvail,
        rng: &mut R,
    ) -> bool {
        let growable: Vec<u32> = tree
            .leaves()
            .into_iter()
            .filter(|&l| node_split_prob(tree, l, self.grid, self.hyper) > 0.0)
            .collect();
        let leaf = Self::pick(&growable, rng);
        let (var, cut) = self.draw_rule(tree, leaf, rng).expect("growable leaf has a rule");
        sc.members.clear();
        let (mut n_left, mut s_left) = (0u32, 0.0);
        for (i, &l) in leaf_of.iter().enumerate() {
            if l == leaf {
                sc.members.push(i as u32);
            }
        }
        for &i in &sc.members {
            if self.bins.get(i as usize, var) as usize <= cut {
                n_left += 1;
                s_left += self.resid[i as usize];
            }
        }
        let n_all = sc.cnt[leaf as usize];
        let s_all = sc.sum[leaf as usize];
        let (n_right, s_right) = (n_all - n_left, s_all - s_left);
        let min = self.hyper.min_leaf as u32;
        if n_left < min || n_right < min {
            return false;
        }
        let mut proposal = tree.clone();
        let (l, r) = proposal.grow(leaf, var, cut, 0.0, 0.0);
        let p_node = node_split_prob(tree, leaf, self.grid, self.hyper);
        let p_l = node_split_prob(&proposal, l, self.grid, self.hyper);
        let p_r = node_split_prob(&proposal, r, self.grid, self.hyper);
        let log_lik = self.leaf_ll(n_left, s_left) + self.leaf_ll(n_right, s_right) - self.leaf_ll(n_all, s_all);
        let log_prior = p_node.ln() - (1.0 - p_node).ln() + (1.0 - p_l).ln() + (1.0 - p_r).ln();
        let avail2 = MoveAvail::of(&proposal, self.grid, self.hyper);
        let log_prop = avail2.ln_prob(Move::Prune, self.hyper) - (avail2.nog as f64).ln()
            - (avail.ln_prob(Move::Grow, self.hyper) - (avail.growable as f64).ln());
        if rng.random::<f64>().ln() >= log_lik + log_prior + log_prop {
            return false;
        }
        *tree = proposal;
        sc.ensure(tree.capacity());
        for &i in &sc.members {
            leaf_of[i as usize] = if self.bins.get(i as usize, var) as usize <= cut { l } else { r };
        }
        sc.cnt[l as usize] = n_left;
        sc.sum[l as usize] = s_left;
        sc.cnt[r as usize] = n_right;
        sc.sum[r as usize] = s_right;
        true
    }

    fn prune<R: Rng + ?Sized>(
        &self,
        tree: &mut DecisionTree,
        leaf_of: &mut [u32],
        sc: &mut Scratch,
        avail: &MoveAvail,
        rng: &mut R,
    ) -> bool {
        let nogs = tree.nog_nodes();
        let node = Self::pick(&nogs, rng);
        let (l, r) = tree.children(node).expect("nog node has children");
        let (nl, sl) = (sc.cnt[l as usize], sc.sum[l as usize]);
        let (nr, sr) = (sc.cnt[r as usize], sc.sum[r as usize]);
        let log_lik = self.leaf_ll(nl + nr, sl + sr) - self.leaf_ll(nl, sl) - self.leaf_ll(nr, sr);
        let p_node = node_split_prob(tree, node, self.grid, self.hyper);
        let p_l = node_split_prob(tree, l, self.grid, self.hyper);
        let p_r = node_split_prob(tree, r, self.grid, self.hyper);
        let log_prior = -(p_node.ln() - (1.0 - p_node).ln() + (1.0 - p_l).ln() + (1.0 - p_r).ln());
        let mut proposal = tree.clone();
        proposal.prune(node, 0.0);
        let avail2 = MoveAvail::of(&proposal, self.grid, self.hyper);
        let log_prop = avail2.ln_prob(Move::Grow, self.hyper) - (avail2.growable as f64).ln()
            - (avail.ln_prob(Move::Prune, self.hyper) - (nogs.len() as f64).ln());
        if rng.random::<f64>().ln() >= log_lik + log_prior + log_prop {
            return false;
        }
        *tree = proposal;
        for v in leaf_of.iter_mut() {
            if *v == l || *v == r {
                *v = node;
            }
        }
        sc.cnt[node as usize] = nl + nr;
        sc.sum[node as usize] = sl + sr;
        true
    }

    /// Shared tail of change and swap: re-route the units below `root`
    /// through `proposal` and accept by the marginal-likelihood ratio.
    #[allow(clippy::too_many_arguments)]
    fn reroute<R: Rng + ?Sized>(
        &self,
        tree: &mut DecisionTree,
        proposal: DecisionTree,
        root: u32,
        mv: Move,
        leaf_of: &mut [u32],
        sc: &mut Scratch,
        avail: &MoveAvail,
        rng: &mut R,
    ) -> bool {
        let new_prior = subtree_log_prior(&proposal, root, self.grid, self.hyper);
        if new_prior == f64::NEG_INFINITY {
            return false;
        }
        let old_prior = subtree_log_prior(tree, root, self.grid, self.hyper);
        let sub = tree.subtree(root);
        sc.in_sub.clear();
        sc.in_sub.resize(tree.capacity(), false);
        for &id in &sub {
            sc.in_sub[id as usize] = true;
        }
        sc.members.clear();
        sc.routed.clear();
        for (i, &l) in leaf_of.iter().enumerate() {
            if sc.in_sub[l as usize] {
                sc.members.push(i as u32);
                sc.routed.push(proposal.descend_bins(root, self.bins.row(i)));
            }
        }
        let cap = tree.capacity();
        sc.new_cnt.clear();
        sc.new_cnt.resize(cap, 0);
        sc.new_sum.clear();
        sc.new_sum.resize(cap, 0.0);
        for (k, &i) in sc.members.iter().enumerate() {
            let leaf = sc.routed[k] as usize;
            sc.new_cnt[leaf] += 1;
            sc.new_sum[leaf] += self.resid[i as usize];
        }
        let min = self.hyper.min_leaf as u32;
        let mut log_lik = 0.0;
        for &id in &sub {
            if tree.is_leaf(id) {
                let n_new = sc.new_cnt[id as usize];
                if n_new < min {
                    return false;
                }
                log_lik += self.leaf_ll(n_new, sc.new_sum[id as usize])
                    - self.leaf_ll(sc.cnt[id as usize], sc.sum[id as usize]);
            }
        }
        let avail2 = MoveAvail::of(&proposal, self.grid, self.hyper);
        let log_prop = avail2.ln_prob(mv, self.hyper) - avail.ln_prob(mv, self.hyper);
        if rng.random::<f64>().ln() >= log_lik + new_prior - old_prior + log_prop {
            return false;
        }
        *tree = proposal;
        for (k, &i) in sc.members.iter().enumerate() {
            leaf_of[i as usize] = sc.routed[k];
        }
        for &id in &sub {
            if tree.is_leaf(id) {
                sc.cnt[id as usize] = sc.new_cnt[id as usize];
                sc.sum[id as usize] = sc.new_sum[id as usize];
            }
        }
        true
    }

    fn change<R: Rng + ?Sized>(
        &self,
        tree: &mut DecisionTree,
        leaf_of: &mut [u32],
        sc: &mut Scratch,
        avail: &MoveAvail,
        rng: &mut R,
    ) -> bool {
        let internal = tree.internal_nodes();
        let node = Self::pick(&internal, rng);
        let (var, cut) = self.draw_rule(tree, node, rng).expect("internal node has a rule");
        if tree.rule(node) == Some((var, cut)) {
            return true;
        }
        let mut proposal = tree.clone();
        proposal.set_rule(node, var, cut);
        self.reroute(tree, proposal, node, Move::Change, leaf_of, sc, avail, rng)
    }

    fn swap<R: Rng + ?Sized>(
        &self,
        tree: &mut DecisionTree,
        leaf_of: &mut [u32],
        sc: &mut Scratch,
        avail: &MoveAvail,
        rng: &mut R,
    ) -> bool {
        let candidates = tree.swap_candidates();
        let child = Self::pick(&candidates, rng);
        let parent = tree.parent(child).expect("swap candidate has a parent");
        let parent_rule = tree.rule(parent).expect("internal");
        let child_rule = tree.rule(child).expect("internal");
        if parent_rule == child_rule {
            return true;
        }
        let mut proposal = tree.clone();
        proposal.set_rule(parent, child_rule.0, child_rule.1);
        proposal.set_rule(child, parent_rule.0, parent_rule.1);
        let (l, r) = tree.children(parent).expect("internal");
        let sibling = if l == child { r } else { l };
        if tree.rule(sibling) == Some(child_rule) {
            proposal.set_rule(sibling, parent_rule.0, parent_rule.1);
        }
        self.reroute(tree, proposal, parent, Move::Swap, leaf_of, sc, avail, rng)
    }
}

impl Scratch {
    fn ensure(&mut self, cap: usize) {
        if self.cnt.len() < cap {
            self.cnt.resize(cap, 0);
            self.sum.resize(cap, 0.0);
        }
    }
}

fn fill_mu_table(tree: &DecisionTree, table: &mut Vec<f64>) {
    table.clear();
    table.resize(tree.capacity(), 0.0);
    for leaf in tree.leaves() {
        table[leaf as usize] = tree.mu(leaf);
    }
}

/// State of one backfitting chain.
#[derive(Debug, Clone)]
pub struct BartSampler {
    hyper: BartHyperParams,
    kind: ResponseKind,
    design: Design,
    grid: CutGrid,
    bins: BinnedRows,
    response: Vec<f64>,
    /// Working response: rescaled outcome, or latent utility minus offset.
    target: Vec<f64>,
    center: f64,
    scale: f64,
    offset: f64,
    trees: Vec<DecisionTree>,
    /// Leaf id of every training unit in every tree, tree-major.
    leaf_of: Vec<u32>,
    /// `target - sum of all trees` at training rows.
    resid: Vec<f64>,
    sigma2: f64,
    sigma_mu: f64,
    nu_lambda: f64,
    scratch: Scratch,
    proposed: [u64; 4],
    accepted: [u64; 4],
    tracked: Option<Tracked>,
}

/// Extra rows whose sum-of-trees fit is maintained incrementally.
#[derive(Debug, Clone)]
struct Tracked {
    bins: BinnedRows,
    /// Leaf id per tree and row, tree-major.
    leaf: Vec<u32>,
    /// Working-scale fit.
    fit: Vec<f64>,
}

impl BartSampler {
    /// Initializes `J` stumps whose leaf means sum to the working-response mean.
    pub fn new(design: &Design, response: &[f64], hyper: &BartHyperParams, kind: ResponseKind) -> Result<Self> {
        hyper.validate()?;
        let n = design.n();
        if n == 0 || design.p() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if response.len() != n {
            return Err(Error::LengthMismatch {
                column: "response".into(),
                expected: n,
                found: response.len(),
            });
        }
        let grid = CutGrid::from_design(design, hyper.max_cuts);
        let bins = grid.bin_design(design)?;
        let j = hyper.trees as f64;
        let (target, center, scale, offset, sigma_mu, sigma2, nu_lambda);
        match kind {
            ResponseKind::Continuous => {
                let lo = response.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = response.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                center = 0.5 * (lo + hi);
                scale = if hi > lo { hi - lo } else { 1.0 };
                target = response.iter().map(|y| (y - center) / scale).collect::<Vec<_>>();
                offset = 0.0;
                sigma_mu = 0.5 / (hyper.k * j.sqrt());
                let sigma_hat2 = if design.p() + 1 < n {
                    crate::linalg::ols_residual_variance(design.columns(), &target)
                } else {
                    None
                }
                .unwrap_or_else(|| if n > 1 { stats::variance(&target) } else { 0.0 });
                let lambda = sigma_hat2 * stats::chi_squared_quantile(1.0 - hyper.q, hyper.nu) / hyper.nu;
                nu_lambda = hyper.nu * lambda;
                sigma2 = hyper.fixed_sigma2.unwrap_or(sigma_hat2.max(SIGMA2_FLOOR));
            }
            ResponseKind::Probit => {
                if let Some(i) = response.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::NotBinary {
                        column: "response".into(),
                        row: i,
                        value: response[i],
                    });
                }
                let rate = stats::mean(response).clamp(0.5 / n as f64, 1.0 - 0.5 / n as f64);
                offset = stats::normal_quantile(rate);
                center = 0.0;
                scale = 1.0;
                target = response.iter().map(|&v| if v == 1.0 { 1.0 } else { -1.0 }).collect();
                sigma_mu = 3.0 / (hyper.k * j.sqrt());
                sigma2 = 1.0;
                nu_lambda = 0.0;
            }
        }
        let mean = stats::mean(&target);
        let trees = vec![DecisionTree::stump(mean / j); hyper.trees];
        let resid = target.iter().map(|t| t - mean).collect();
        Ok(Self {
            hyper: hyper.clone(),
            kind,
            design: design.clone(),
            grid,
            bins,
            response: response.to_vec(),
            target,
            center,
            scale,
            offset,
            trees,
            leaf_of: vec![0; hyper.trees * n],
            resid,
            sigma2,
            sigma_mu,
            nu_lambda,
            scratch: Scratch::default(),
            proposed: [0; 4],
            accepted: [0; 4],
            tracked: None,
        })
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn grid(&self) -> &CutGrid {
        &self.grid
    }

    pub fn hyper(&self) -> &BartHyperParams {
        &self.hyper
    }

    /// Residual variance on the outcome scale (1 for probit).
    pub fn sigma2(&self) -> f64 {
        self.sigma2 * self.scale * self.scale
    }

    /// Acceptance rates for grow, prune, change, swap.
    pub fn acceptance_rates(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for k in 0..4 {
            if self.proposed[k] > 0 {
                out[k] = self.accepted[k] as f64 / self.proposed[k] as f64;
            }
        }
        out
    }

    /// One full backfitting sweep: (probit) latent redraw, one MH move and a
    /// leaf-mean redraw per tree, then (continuous) the residual variance.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.n();
        if self.kind == ResponseKind::Probit {
            for i in 0..n {
                let fit = self.target[i] - self.resid[i];
                let z = stats::latent_utility(self.offset + fit, self.response[i] == 1.0, rng);
                self.target[i] = z - self.offset;
                self.resid[i] = self.target[i] - fit;
            }
        }
        let n_trees = self.trees.len();
        self.absorb_tree(0);
        for j in 0..n_trees {
            self.update_tree(j, rng);
            self.shift_tree(j, (j + 1 < n_trees).then_some(j + 1));
        }
        if self.kind == ResponseKind::Continuous && self.hyper.fixed_sigma2.is_none() {
            let ssr: f64 = self.resid.iter().map(|r| r * r).sum();
            let shape = 0.5 * (self.hyper.nu + n as f64);
            let scale = 0.5 * (self.nu_lambda + ssr);
            self.sigma2 = stats::inverse_gamma(shape, scale, rng).max(SIGMA2_FLOOR);
        }
    }

    /// Adds tree `j` back into the residual and tallies its leaf statistics.
    fn absorb_tree(&mut self, j: usize) {
        let n = self.n();
        let tree = &self.trees[j];
        let leaf_of = &self.leaf_of[j * n..(j + 1) * n];
        let sc = &mut self.scratch;
        fill_mu_table(tree, &mut sc.mu_tab);
        let cap = tree.capacity();
        sc.cnt.clear();
        sc.cnt.resize(cap, 0);
        sc.sum.clear();
        sc.sum.resize(cap, 0.0);
        for (r, &l) in self.resid.iter_mut().zip(leaf_of) {
            let l = l as usize;
            *r += sc.mu_tab[l];
            sc.cnt[l] += 1;
            sc.sum[l] += *r;
        }
    }

    /// Removes tree `out` from the residual and, in the same pass, absorbs
    /// tree `into`.
    fn shift_tree(&mut self, out: usize, into: Option<usize>) {
        let n = self.n();
        let sc = &mut self.scratch;
        fill_mu_table(&self.trees[out], &mut sc.mu_tab);
        let leaf_out = &self.leaf_of[out * n..(out + 1) * n];
        let Some(j) = into else {
            for (r, &l) in self.resid.iter_mut().zip(leaf_out) {
                *r -= sc.mu_tab[l as usize];
            }
            return;
        };
        let tree = &self.trees[j];
        fill_mu_table(tree, &mut sc.mu_next);
        let cap = tree.capacity();
        sc.cnt.clear();
        sc.cnt.resize(cap, 0);
        sc.sum.clear();
        sc.sum.resize(cap, 0.0);
        let leaf_in = &self.leaf_of[j * n..(j + 1) * n];
        for ((r, &lo), &li) in self.resid.iter_mut().zip(leaf_out).zip(leaf_in) {
            let li = li as usize;
            *r = *r - sc.mu_tab[lo as usize] + sc.mu_next[li];
            sc.cnt[li] += 1;
            sc.sum[li] += *r;
        }
    }

    /// Starts maintaining the fit at `design`'s rows through every later
    /// sweep; read it back with [`BartSampler::tracked_prediction`].
    pub fn track(&mut self, design: &Design) -> Result<()> {
        let bins = self.grid.bin_design(design)?;
        let m = bins.n();
        let mut leaf = Vec::with_capacity(self.trees.len() * m);
        let mut fit = vec![0.0; m];
        for tree in &self.trees {
            for (i, f) in fit.iter_mut().enumerate() {
                let l = tree.leaf_for_bins(bins.row(i));
                leaf.push(l);
                *f += tree.mu(l);
            }
        }
        self.tracked = Some(Tracked { bins, leaf, fit });
        Ok(())
    }

    /// Current fit at the tracked rows, on the outcome scale (latent scale
    /// for probit).
    pub fn tracked_prediction(&self) -> Option<Vec<f64>> {
        self.tracked.as_ref().map(|t| t.fit.iter().map(|&w| self.to_outcome(w)).collect())
    }

    /// One MH structure move and a leaf-mean redraw for tree `j`, which
    /// must currently be absorbed into the residual.
    fn update_tree<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) {
        let n = self.n();
        let tree = &mut self.trees[j];
        let leaf_of = &mut self.leaf_of[j * n..(j + 1) * n];
        let sc = &mut self.scratch;
        let ctx = TreeCtx {
            grid: &self.grid,
            bins: &self.bins,
            hyper: &self.hyper,
            resid: &self.resid,
            sigma2: self.sigma2,
            sigma_mu2: self.sigma_mu * self.sigma_mu,
        };
        if self.tracked.is_some() {
            fill_mu_table(tree, &mut sc.mu_next);
        }
        let avail = MoveAvail::of(tree, &self.grid, &self.hyper);
        let weights = avail.weights(&self.hyper);
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut mv = Move::Grow;
        for (k, m) in [Move::Grow, Move::Prune, Move::Change, Move::Swap].into_iter().enumerate() {
            if weights[k] > 0.0 {
                mv = m;
                if u < weights[k] {
                    break;
                }
                u -= weights[k];
            }
        }
        let mut moved = false;
        if total > 0.0 {
            let ok = match mv {
                Move::Grow => ctx.grow(tree, leaf_of, sc, &avail, rng),
                Move::Prune => ctx.prune(tree, leaf_of, sc, &avail, rng),
                Move::Change => ctx.change(tree, leaf_of, sc, &avail, rng),
                Move::Swap => ctx.swap(tree, leaf_of, sc, &avail, rng),
            };
            self.proposed[mv as usize] += 1;
            self.accepted[mv as usize] += ok as u64;
            moved = ok;
        }
        sc.ensure(tree.capacity());
        let s2 = ctx.sigma2;
        let m2 = ctx.sigma_mu2;
        for leaf in tree.leaves() {
            let cnt = sc.cnt[leaf as usize] as f64;
            let d = s2 + cnt * m2;
            let mean = m2 * sc.sum[leaf as usize] / d;
            let sd = (s2 * m2 / d).sqrt();
            tree.set_mu(leaf, mean + sd * std_normal(rng));
        }
        if let Some(t) = &mut self.tracked {
            let m = t.fit.len();
            let old = &sc.mu_next;
            let ids = &mut t.leaf[j * m..(j + 1) * m];
            for (i, (f, id)) in t.fit.iter_mut().zip(ids.iter_mut()).enumerate() {
                let before = old[*id as usize];
                if moved {
                    *id = tree.leaf_for_bins(t.bins.row(i));
                }
                *f += tree.mu(*id) - before;
            }
        }
    }

    fn to_outcome(&self, working: f64) -> f64 {
        match self.kind {
            ResponseKind::Continuous => working * self.scale + self.center,
            ResponseKind::Probit => working + self.offset,
        }
    }

    pub fn bin_rows(&self, design: &Design) -> Result<BinnedRows> {
        self.grid.bin_design(design)
    }

    /// Sum of trees at pre-binned rows, on the outcome scale (latent scale
    /// for probit).
    pub fn predict_binned(&self, rows: &BinnedRows) -> Vec<f64> {
        let mut out = vec![0.0; rows.n()];
        for tree in &self.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += tree.mu(tree.leaf_for_bins(rows.row(i)));
            }
        }
        out.into_iter().map(|w| self.to_outcome(w)).collect()
    }

    pub fn predict(&self, design: &Design) -> Result<Vec<f64>> {
        Ok(self.predict_binned(&self.bin_rows(design)?))
    }

    /// Posterior predictive draw: adds N(0, sigma^2) noise (continuous) or
    /// maps through the normal CDF (probit).
    pub fn predict_draw<R: Rng + ?Sized>(&self, design: &Design, rng: &mut R) -> Result<Vec<f64>> {
        let point = self.predict(design)?;
        Ok(match self.kind {
            ResponseKind::Continuous => {
                let sd = self.sigma2().sqrt();
                point.into_iter().map(|f| f + sd * std_normal(rng)).collect()
            }
            ResponseKind::Probit => point.into_iter().map(stats::normal_cdf).collect(),
        })
    }

    /// Current fit at the training rows.
    pub fn fitted(&self) -> Vec<f64> {
        self.target
            .iter()
            .zip(&self.resid)
            .map(|(t, r)| self.to_outcome(t - r))
            .collect()
    }

    /// Largest deviation between the cached partial residuals and a
    /// from-scratch recomputation through the raw covariate values.
    pub fn cache_error(&self) -> f64 {
        let n = self.n();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| self.design.row(i)).collect();
        let per_tree: Vec<Vec<f64>> = self
            .trees
            .iter()
            .map(|t| rows.iter().map(|r| t.predict_values(r, &self.grid)).collect())
            .collect();
        let total: Vec<f64> = (0..n).map(|i| per_tree.iter().map(|f| f[i]).sum()).collect();
        let mut worst: f64 = 0.0;
        for (j, tree) in self.trees.iter().enumerate() {
            for i in 0..n {
                let cached = self.resid[i] + tree.mu(self.leaf_of[j * n + i]);
                let fresh = self.target[i] - (total[i] - per_tree[j][i]);
                worst = worst.max((cached - fresh).abs());
            }
        }
        worst
    }

    /// Smallest number of training units in any leaf of any tree.
    pub fn min_leaf_count(&self) -> usize {
        let n = self.n();
        let mut min = usize::MAX;
        for (j, tree) in self.trees.iter().enumerate() {
            let mut counts = vec![0usize; tree.capacity()];
            for &l in &self.leaf_of[j * n..(j + 1) * n] {
                counts[l as usize] += 1;
            }
            for leaf in tree.leaves() {
                min = min.min(counts[leaf as usize]);
            }
        }
        min
    }

    /// Runs `burn_in` sweeps, then `draws` kept sweeps, returning the point
    /// prediction at `rows` after each kept sweep.
    pub fn collect_draws<R: Rng + ?Sized>(&mut self, rows: &Design, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let binned = self.bin_rows(rows)?;
        for _ in 0..self.hyper.burn_in {
            self.sweep(rng);
        }
        let mut out = Vec::with_capacity(self.hyper.draws);
        for _ in 0..self.hyper.draws {
            self.sweep(rng);
            out.push(self.predict_binned(&binned));
        }
        Ok(out)
    }
}

/// Writes kept forest predictions as `draw,unit,prediction` CSV rows, one
/// block per draw.
pub fn write_draw_blocks<W: Write>(mut out: W, draws: &[Vec<f64>]) -> std::io::Result<()> {
    writeln!(out, "draw,unit,prediction")?;
    for (m, draw) in draws.iter().enumerate() {
        for (i, v) in draw.iter().enumerate() {
            writeln!(out, "{m},{i},{v}")?;
        }
    }
    Ok(())
}
