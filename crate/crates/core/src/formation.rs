//! Formation graph, feedback gains and the desired force-shape law.
//!
//! Every edge behaves like a virtual spring and dashpot: composing
//! [`desired_force_shape`] with [`crate::amff::allocate_pair`] and
//! [`crate::amff::approx_avg_force`] yields `−m α ((r − d) + β v)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::em_model::{Vec3, C0, MIN_SEPARATION};
use crate::error::{Error, Result};

/// Gains and target of one undirected edge, stored in the orientation
/// `(lo, hi)` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGains {
    /// Spring gain `α`, 1/s². Positive on every edge.
    pub alpha: f64,
    /// Integral gain `ρ`, 1/s². Zero disables integral action.
    pub rho: f64,
    /// Authority weight `γ_lo,hi`; the other end uses `1/γ`.
    pub gamma: f64,
    /// Desired relative position `d_lo,hi = r_lo − r_hi`, m.
    pub desired: Vec3,
}

impl EdgeGains {
    pub fn spring(alpha: f64, desired: Vec3) -> Self {
        Self {
            alpha,
            rho: 0.0,
            gamma: 1.0,
            desired,
        }
    }
}

/// Undirected, connected control graph over satellites `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    n: usize,
    beta: f64,
    edges: BTreeMap<(usize, usize), EdgeGains>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

impl FormationGraph {
    /// `edges` may list a pair in either orientation; gains given for `(j, i)`
    /// with `j > i` are flipped into `(i, j)` form.
    pub fn new(n: usize, beta: f64, edges: impl IntoIterator<Item = ((usize, usize), EdgeGains)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((i, j), mut gains) in edges {
            if i == j {
                return Err(Error::invalid("formation graph", format!("self-loop on satellite {i}")));
            }
            if i > j {
                gains.gamma = 1.0 / gains.gamma;
                gains.desired = -gains.desired;
            }
            if map.insert(key(i, j), gains).is_some() {
                return Err(Error::invalid("formation graph", format!("edge ({i}, {j}) listed twice")));
            }
        }
        let graph = Self { n, beta, edges: map };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("formation graph", "needs at least one satellite"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("formation graph", format!("beta must be > 0, got {}", self.beta)));
        }
        for (&(i, j), g) in &self.edges {
            if j >= self.n {
                return Err(Error::invalid(
                    "formation graph",
                    format!("edge ({i}, {j}) references a satellite outside 0..{}", self.n),
                ));
            }
            if !(g.alpha > 0.0 && g.alpha.is_finite()) {
                return Err(Error::invalid(
                    "formation graph",
                    format!("alpha on edge ({i}, {j}) must be > 0, got {}", g.alpha),
                ));
            }
            if !(g.rho >= 0.0 && g.rho.is_finite()) {
                return Err(Error::invalid(
                    "formation graph",
                    format!("rho on edge ({i}, {j}) must be >= 0, got {}", g.rho),
                ));
            }
            if !(g.gamma > 0.0 && g.gamma.is_finite()) {
                return Err(Error::invalid(
                    "formation graph",
                    format!("gamma on edge ({i}, {j}) must be > 0, got {}", g.gamma),
                ));
            }
            if !g.desired.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid("formation graph", format!("desired offset on edge ({i}, {j}) is not finite")));
            }
        }
        if !self.is_connected() {
            return Err(Error::invalid("formation graph", "graph is not connected"));
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&key(i, j))
    }

    /// Unordered edges `(lo, hi)` with their gains.
    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), &EdgeGains)> + '_ {
        self.edges.iter().map(|(&k, g)| (k, g))
    }

    /// Both orientations of every edge, sorted.
    pub fn ordered_pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self.edges.keys().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
        out.sort_unstable();
        out
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.keys().filter_map(move |&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
    }

    /// `α_ij`; zero for non-edges.
    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.edges.get(&key(i, j)).map_or(0.0, |g| g.alpha)
    }

    /// `ρ_ij`; zero for non-edges.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.edges.get(&key(i, j)).map_or(0.0, |g| g.rho)
    }

    /// `γ_ij`, with `γ_ji = 1/γ_ij`.
    pub fn gamma(&self, i: usize, j: usize) -> Option<f64> {
        let g = self.edges.get(&key(i, j))?;
        Some(if i < j { g.gamma } else { 1.0 / g.gamma })
    }

    /// `d_ij`, with `d_ji = −d_ij`.
    pub fn desired(&self, i: usize, j: usize) -> Option<Vec3> {
        let g = self.edges.get(&key(i, j))?;
        Some(if i < j { g.desired } else { -g.desired })
    }

    /// Replace the target of an existing edge; `d` is given in `(i, j)` orientation.
    pub fn set_desired(&mut self, i: usize, j: usize, d: Vec3) -> Result<()> {
        let g = self
            .edges
            .get_mut(&key(i, j))
            .ok_or_else(|| Error::Contract(format!("({i}, {j}) is not an edge")))?;
        g.desired = if i < j { d } else { -d };
        Ok(())
    }
}

/// Neighbor set `N_i`, sorted. A satellite's control loop may only read the
/// relative measurements of these pairs.
pub fn neighbor_views(graph: &FormationGraph, i: usize) -> Result<Vec<usize>> {
    if i >= graph.n {
        return Err(Error::Contract(format!("satellite {i} is not in a graph of {}", graph.n)));
    }
    let set: BTreeSet<usize> = graph.neighbors(i).collect();
    Ok(set.into_iter().collect())
}

/// `N_i ∩ N_j`, sorted.
pub fn common_neighbors(graph: &FormationGraph, i: usize, j: usize) -> Result<Vec<usize>> {
    let ni = neighbor_views(graph, i)?;
    let nj: BTreeSet<usize> = neighbor_views(graph, j)?.into_iter().collect();
    Ok(ni.into_iter().filter(|g| nj.contains(g)).collect())
}

/// Desired force shape `−(2 m |r|^4 / c0) α ((r − d) + β v)`.
pub fn desired_force_shape(r: &Vec3, v: &Vec3, d: &Vec3, alpha: f64, beta: f64, m_sat: f64) -> Result<Vec3> {
    let rn = r.norm();
    if !(rn >= MIN_SEPARATION) {
        return Err(Error::SingularSeparation {
            separation: rn,
            min: MIN_SEPARATION,
        });
    }
    let scale = -(2.0 * m_sat * rn.powi(4) / C0) * alpha;
    Ok(((r - d) + v * beta) * scale)
}
