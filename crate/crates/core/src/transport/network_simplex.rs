//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Sources `0..n_src` ship their supply to sinks `0..n_tgt` over an arc set
//! that may grow between solves (column generation). The initial basis hangs
//! every node from an artificial root through an artificial arc. Artificial
//! arcs are priced with a symbolic big-M: every cost and potential is a pair
//! `(M-multiple, finite part)` compared lexicographically, so no concrete
//! penalty value ever mixes with the real costs.
//!
//! The spanning tree is kept strongly feasible (leaving-arc tie-breaking as
//! in LEMON), which rules out cycling on degenerate pivots. Entering arcs are
//! chosen by deterministic block search.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Price {
    big: i64,
    fin: f64,
}

impl Price {
    #[inline]
    fn less(self, other: Price) -> bool {
        self.big < other.big || (self.big == other.big && self.fin < other.fin)
    }
}

#[derive(Debug)]
pub(crate) struct TransportSimplex {
    n_src: usize,
    n_nodes: usize,
    // Arcs: index k < n_nodes is the artificial arc of node k.
    src: Vec<usize>,
    tgt: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    // Nodes, root = n_nodes.
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    pi_big: Vec<i64>,
    pi_fin: Vec<f64>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    next_arc: usize,
    stack: Vec<usize>,
    pub(crate) pivots: usize,
}

impl TransportSimplex {
    pub(crate) fn new(supply: &[f64], demand: &[f64]) -> Self {
        let n_src = supply.len();
        let n_nodes = n_src + demand.len();
        let root = n_nodes;
        let mut s = Self {
            n_src,
            n_nodes,
            src: Vec::with_capacity(n_nodes),
            tgt: Vec::with_capacity(n_nodes),
            cost: Vec::with_capacity(n_nodes),
            flow: Vec::with_capacity(n_nodes),
            in_tree: Vec::with_capacity(n_nodes),
            parent: vec![NONE; n_nodes + 1],
            pred: vec![NONE; n_nodes + 1],
            up: vec![false; n_nodes + 1],
            depth: vec![1; n_nodes + 1],
            pi_big: vec![0; n_nodes + 1],
            pi_fin: vec![0.0; n_nodes + 1],
            first_child: vec![NONE; n_nodes + 1],
            next_sib: vec![NONE; n_nodes + 1],
            prev_sib: vec![NONE; n_nodes + 1],
            next_arc: 0,
            stack: Vec::new(),
            pivots: 0,
        };
        s.depth[root] = 0;
        for v in 0..n_nodes {
            let is_source = v < n_src;
            let (a, b, amount) = if is_source {
                (v, root, supply[v])
            } else {
                (root, v, demand[v - n_src])
            };
            s.src.push(a);
            s.tgt.push(b);
            s.cost.push(0.0);
            s.flow.push(amount);
            s.in_tree.push(true);
            s.pred[v] = v;
            s.up[v] = is_source;
            s.pi_big[v] = if is_source { -1 } else { 1 };
            s.attach(v, root);
        }
        s
    }

    pub(crate) fn n_real_arcs(&self) -> usize {
        self.src.len() - self.n_nodes
    }

    /// Adds the arc `source i → sink j`; returns its real-arc index.
    pub(crate) fn add_arc(&mut self, i: usize, j: usize, cost: f64) -> usize {
        self.src.push(i);
        self.tgt.push(self.n_src + j);
        self.cost.push(cost);
        self.flow.push(0.0);
        self.in_tree.push(false);
        self.n_real_arcs() - 1
    }

    pub(crate) fn real_arc(&self, r: usize) -> (usize, usize, f64) {
        let a = self.n_nodes + r;
        (self.src[a], self.tgt[a] - self.n_src, self.flow[a])
    }

    pub(crate) fn artificial_flow(&self) -> f64 {
        self.flow[..self.n_nodes].iter().sum()
    }

    /// Dual prices of source `i` and sink `j`, split as (M-multiple, finite).
    pub(crate) fn source_price(&self, i: usize) -> (i64, f64) {
        (self.pi_big[i], self.pi_fin[i])
    }

    pub(crate) fn sink_price(&self, j: usize) -> (i64, f64) {
        let v = self.n_src + j;
        (self.pi_big[v], self.pi_fin[v])
    }

    #[inline]
    fn reduced(&self, a: usize) -> Price {
        let s = self.src[a];
        let t = self.tgt[a];
        Price {
            big: i64::from(a < self.n_nodes) + self.pi_big[s] - self.pi_big[t],
            fin: self.cost[a] + self.pi_fin[s] - self.pi_fin[t],
        }
    }

    fn detach(&mut self, v: usize) {
        let p = self.parent[v];
        let (prev, next) = (self.prev_sib[v], self.next_sib[v]);
        if prev != NONE {
            self.next_sib[prev] = next;
        } else {
            self.first_child[p] = next;
        }
        if next != NONE {
            self.prev_sib[next] = prev;
        }
    }

    fn attach(&mut self, v: usize, p: usize) {
        self.parent[v] = p;
        self.prev_sib[v] = NONE;
        let head = self.first_child[p];
        self.next_sib[v] = head;
        if head != NONE {
            self.prev_sib[head] = v;
        }
        self.first_child[p] = v;
    }

    fn find_entering(&mut self, eps: f64) -> Option<usize> {
        let m = self.n_real_arcs();
        if m == 0 {
            return None;
        }
        let block = ((m as f64).sqrt().ceil() as usize).max(10);
        let threshold = Price { big: 0, fin: -eps };
        let mut best: Option<(usize, Price)> = None;
        let mut left = block;
        let mut pos = self.next_arc;
        for _ in 0..m {
            let a = self.n_nodes + pos;
            if !self.in_tree[a] {
                let rc = self.reduced(a);
                let bar = best.map_or(threshold, |(_, p)| p);
                if rc.less(bar) {
                    best = Some((a, rc));
                }
            }
            pos += 1;
            if pos == m {
                pos = 0;
            }
            left -= 1;
            if left == 0 {
                if best.is_some() {
                    break;
                }
                left = block;
            }
        }
        self.next_arc = pos;
        best.map(|(a, _)| a)
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] > self.depth[v] {
                u = self.parent[u];
            } else if self.depth[v] > self.depth[u] {
                v = self.parent[v];
            } else {
                u = self.parent[u];
                v = self.parent[v];
            }
        }
        u
    }

    fn pivot(&mut self, entering: usize) -> Result<()> {
        let first = self.src[entering];
        let second = self.tgt[entering];
        let join = self.join(first, second);

        // Leaving arc: a blocking arc of the cycle; ties resolved towards the
        // second side so the tree stays strongly feasible.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut on_first = true;
        let mut u = first;
        while u != join {
            if self.up[u] {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    on_first = true;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            if !self.up[u] {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    on_first = false;
                }
            }
            u = self.parent[u];
        }
        if u_out == NONE {
            return Err(Error::Unsupported("transport LP is unbounded".into()));
        }

        if delta > 0.0 {
            self.flow[entering] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let e = self.pred[u];
                if self.up[u] {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                u = self.parent[u];
            }
        }

        let rc = self.reduced(entering);
        let leaving = self.pred[u_out];
        let (u_in, v_in) = if on_first { (first, second) } else { (second, first) };

        // Re-hang the cut subtree: reverse the path u_in → u_out.
        let mut child = u_in;
        let mut new_parent = v_in;
        let mut new_pred = entering;
        let mut new_up = self.src[entering] == u_in;
        loop {
            let old_parent = self.parent[child];
            let old_pred = self.pred[child];
            let old_up = self.up[child];
            self.detach(child);
            self.attach(child, new_parent);
            self.pred[child] = new_pred;
            self.up[child] = new_up;
            if child == u_out {
                break;
            }
            new_parent = child;
            new_pred = old_pred;
            new_up = !old_up;
            child = old_parent;
        }
        self.in_tree[leaving] = false;
        self.in_tree[entering] = true;

        // Restore zero reduced cost on the entering arc by shifting the subtree.
        let (shift_big, shift_fin) = if u_in == self.tgt[entering] {
            (rc.big, rc.fin)
        } else {
            (-rc.big, -rc.fin)
        };
        let mut stack = std::mem::take(&mut self.stack);
        stack.clear();
        stack.push(u_in);
        while let Some(v) = stack.pop() {
            self.pi_big[v] += shift_big;
            self.pi_fin[v] += shift_fin;
            self.depth[v] = self.depth[self.parent[v]] + 1;
            let mut c = self.first_child[v];
            while c != NONE {
                stack.push(c);
                c = self.next_sib[c];
            }
        }
        self.stack = stack;
        self.pivots += 1;
        Ok(())
    }

    /// Pivots until no arc has reduced cost below `-eps`.
    pub(crate) fn solve(&mut self, eps: f64, max_pivots: usize) -> Result<()> {
        let start = self.pivots;
        while let Some(a) = self.find_entering(eps) {
            if self.pivots - start >= max_pivots {
                return Err(Error::NoConvergence {
                    solver: "network simplex",
                    iterations: max_pivots,
                    residual: self.reduced(a).fin,
                });
            }
            self.pivot(a)?;
        }
        Ok(())
    }
}
