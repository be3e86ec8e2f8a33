//! Exact s-t maximum flow (blocking-flow augmentation on BFS level graphs
//! with per-node arc pointers).

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
    /// Index of the paired arc running the other way.
    pub reverse: usize,
}

/// A directed network with paired residual arcs.
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    nodes: usize,
    source: usize,
    sink: usize,
    arcs: Vec<FlowArc>,
    outgoing: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= nodes || sink >= nodes || source == sink {
            return Err(Error::Argument(format!(
                "invalid terminals s={source}, t={sink} for {nodes} nodes"
            )));
        }
        Ok(FlowNetwork {
            nodes,
            source,
            sink,
            arcs: Vec::new(),
            outgoing: vec![Vec::new(); nodes],
        })
    }

    /// Adds the arc pair `from -> to` (capacity `capacity`) and
    /// `to -> from` (capacity `reverse_capacity`). Returns the forward arc
    /// index.
    pub fn add_edge(&mut self, from: usize, to: usize, capacity: f64, reverse_capacity: f64) -> Result<usize> {
        if from >= self.nodes || to >= self.nodes || from == to {
            return Err(Error::Argument(format!("invalid arc {from} -> {to}")));
        }
        for c in [capacity, reverse_capacity] {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Argument(format!("arc capacity {c} must be finite and >= 0")));
            }
        }
        let id = self.arcs.len();
        self.arcs.push(FlowArc {
            from,
            to,
            capacity,
            reverse: id + 1,
        });
        self.arcs.push(FlowArc {
            from: to,
            to: from,
            capacity: reverse_capacity,
            reverse: id,
        });
        self.outgoing[from].push(id);
        self.outgoing[to].push(id + 1);
        Ok(id)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn arcs(&self) -> &[FlowArc] {
        &self.arcs
    }

    /// Total capacity of arcs leaving the node set marked `true`.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        self.arcs
            .iter()
            .filter(|a| source_side[a.from] && !source_side[a.to])
            .map(|a| a.capacity)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// `true` for nodes reachable from the source in the final residual
    /// network (the smallest source set of a minimum cut).
    pub source_side: Vec<bool>,
    /// `true` for nodes that can still reach the sink in the final residual
    /// network (the smallest sink set of a minimum cut).
    pub sink_side: Vec<bool>,
}

/// Maximum flow value and a minimum cut of `network`.
pub fn max_flow_min_cut(network: &FlowNetwork) -> MinCut {
    let n = network.nodes;
    let (s, t) = (network.source, network.sink);
    let arcs = &network.arcs;
    let mut residual: Vec<f64> = arcs.iter().map(|a| a.capacity).collect();
    let max_cap = residual.iter().copied().fold(0.0, f64::max);
    // Residuals at or below this are treated as saturated.
    let eps = max_cap * 1e-14;

    let mut level = vec![usize::MAX; n];
    let mut next_arc = vec![0usize; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut path: Vec<usize> = Vec::new();
    let mut flow = 0.0;

    loop {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        level[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &a in &network.outgoing[u] {
                let v = arcs[a].to;
                if residual[a] > eps && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if level[t] == usize::MAX {
            break;
        }

        next_arc.iter_mut().for_each(|i| *i = 0);
        path.clear();
        let mut u = s;
        loop {
            if u == t {
                let bottleneck = path.iter().map(|&a| residual[a]).fold(f64::INFINITY, f64::min);
                let mut first_saturated = path.len();
                for (i, &a) in path.iter().enumerate() {
                    residual[a] -= bottleneck;
                    residual[arcs[a].reverse] += bottleneck;
                    if residual[a] <= eps && first_saturated == path.len() {
                        first_saturated = i;
                    }
                }
                flow += bottleneck;
                path.truncate(first_saturated);
                u = path.last().map_or(s, |&a| arcs[a].to);
                continue;
            }
            let out = &network.outgoing[u];
            let mut advanced = false;
            while next_arc[u] < out.len() {
                let a = out[next_arc[u]];
                let v = arcs[a].to;
                if residual[a] > eps && level[v] == level[u] + 1 {
                    path.push(a);
                    u = v;
                    advanced = true;
                    break;
                }
                next_arc[u] += 1;
            }
            if advanced {
                continue;
            }
            if u == s {
                break;
            }
            // dead end: drop the node from this phase and retreat
            level[u] = usize::MAX;
            let a = path.pop().expect("non-source node on path");
            u = arcs[a].from;
            next_arc[u] += 1;
        }
    }

    let mut source_side = vec![false; n];
    source_side[s] = true;
    queue.clear();
    queue.push_back(s);
    while let Some(u) = queue.pop_front() {
        for &a in &network.outgoing[u] {
            let v = arcs[a].to;
            if residual[a] > eps && !source_side[v] {
                source_side[v] = true;
                queue.push_back(v);
            }
        }
    }
    let mut sink_side = vec![false; n];
    sink_side[t] = true;
    queue.clear();
    queue.push_back(t);
    while let Some(v) = queue.pop_front() {
        for &a in &network.outgoing[v] {
            let u = arcs[a].to;
            if residual[arcs[a].reverse] > eps && !sink_side[u] {
                sink_side[u] = true;
                queue.push_back(u);
            }
        }
    }
    MinCut {
        flow,
        source_side,
        sink_side,
    }
}
