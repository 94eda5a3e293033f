//! Directed acyclic graphs over a handful of named variables.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest node count accepted by [`enumerate_dags`].
pub const MAX_ENUM_NODES: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dag {
    names: Vec<String>,
    adj: Vec<bool>,
}

fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

/// `true` iff the square boolean matrix (row-major, `adj[i*d + j]` meaning
/// `i → j`) admits a topological order. Self-loops are an error.
pub fn is_acyclic(adj: &[bool], d: usize) -> Result<bool> {
    if adj.len() != d * d {
        return Err(Error::Precondition(format!("adjacency has {} entries, expected {d}x{d}", adj.len())));
    }
    if (0..d).any(|i| adj[i * d + i]) {
        return Err(Error::Precondition("adjacency has a self-loop".into()));
    }
    Ok(topological_order(adj, d).is_some())
}

/// Kahn's algorithm; smallest available index first.
fn topological_order(adj: &[bool], d: usize) -> Option<Vec<usize>> {
    let mut indeg: Vec<usize> = (0..d).map(|j| (0..d).filter(|&i| adj[i * d + j]).count()).collect();
    let mut done = vec![false; d];
    let mut order = Vec::with_capacity(d);
    for _ in 0..d {
        let next = (0..d).find(|&j| !done[j] && indeg[j] == 0)?;
        done[next] = true;
        order.push(next);
        for j in 0..d {
            if adj[next * d + j] {
                indeg[j] -= 1;
            }
        }
    }
    Some(order)
}

impl Dag {
    pub fn empty(d: usize) -> Self {
        Dag { names: default_names(d), adj: vec![false; d * d] }
    }

    pub fn from_adjacency(adj: Vec<bool>, d: usize) -> Result<Self> {
        if !is_acyclic(&adj, d)? {
            return Err(Error::Precondition("graph has a directed cycle".into()));
        }
        Ok(Dag { names: default_names(d), adj })
    }

    /// Build from 0-based `(src, dst)` pairs.
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![false; d * d];
        for &(i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::Precondition(format!("edge {i}->{j} out of range for d={d}")));
            }
            adj[i * d + j] = true;
        }
        Self::from_adjacency(adj, d)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::LengthMismatch(names.len(), self.d()));
        }
        self.names = names;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.d() + j]
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adj
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.d();
        (0..d * d).filter(|&k| self.adj[k]).map(|k| (k / d, k % d)).collect()
    }

    pub fn parents(&self, j: usize) -> Result<Vec<usize>> {
        let d = self.d();
        if j >= d {
            return Err(Error::Precondition(format!("node {j} out of range for d={d}")));
        }
        Ok((0..d).filter(|&i| self.adj[i * d + j]).collect())
    }

    /// Bitmask of the parents of `j`.
    pub fn parent_mask(&self, j: usize) -> u32 {
        let d = self.d();
        (0..d).filter(|&i| self.adj[i * d + j]).fold(0, |m, i| m | (1 << i))
    }

    pub fn topological_order(&self) -> Vec<usize> {
        topological_order(&self.adj, self.d()).expect("Dag is acyclic by construction")
    }

    /// Edge list as `"src->dst"` strings, using the node names.
    pub fn edge_strings(&self) -> Vec<String> {
        self.edges().into_iter().map(|(i, j)| format!("{}->{}", self.names[i], self.names[j])).collect()
    }

    /// Parse `"a->b"` strings against the given node names.
    pub fn from_edge_strings(names: Vec<String>, edges: &[String]) -> Result<Self> {
        let d = names.len();
        let find = |s: &str| {
            names
                .iter()
                .position(|n| n == s.trim())
                .ok_or_else(|| Error::InvalidSpec(format!("unknown node '{}'", s.trim())))
        };
        let mut pairs = Vec::new();
        for e in edges {
            let (a, b) = e
                .split_once("->")
                .ok_or_else(|| Error::InvalidSpec(format!("edge '{e}' is not of the form src->dst")))?;
            pairs.push((find(a)?, find(b)?));
        }
        Dag::from_edges(d, &pairs)?.with_names(names)
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.edge_strings();
        if e.is_empty() {
            write!(f, "(empty)")
        } else {
            write!(f, "{}", e.join(", "))
        }
    }
}

impl Serialize for Dag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.edge_strings().serialize(s)
    }
}

/// Deserialises an edge list; node names are taken in order of first
/// appearance, so isolated nodes cannot be represented this way.
impl<'de> Deserialize<'de> for Dag {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let edges = Vec::<String>::deserialize(de)?;
        let mut names: Vec<String> = Vec::new();
        for e in &edges {
            for part in e.split("->") {
                let p = part.trim().to_string();
                if !names.contains(&p) {
                    names.push(p);
                }
            }
        }
        Dag::from_edge_strings(names, &edges).map_err(serde::de::Error::custom)
    }
}

/// Iterator over every labelled DAG on `d` nodes, in ascending order of the
/// off-diagonal adjacency bits (row-major, first off-diagonal entry is the
/// least significant bit).
pub struct DagIter {
    d: usize,
    next: u64,
    end: u64,
}

impl Iterator for DagIter {
    type Item = Dag;

    fn next(&mut self) -> Option<Dag> {
        while self.next < self.end {
            let bits = self.next;
            self.next += 1;
            let adj = bits_to_adjacency(bits, self.d);
            if topological_order(&adj, self.d).is_some() {
                return Some(Dag { names: default_names(self.d), adj });
            }
        }
        None
    }
}

fn bits_to_adjacency(bits: u64, d: usize) -> Vec<bool> {
    let mut adj = vec![false; d * d];
    let mut k = 0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                adj[i * d + j] = bits >> k & 1 == 1;
                k += 1;
            }
        }
    }
    adj
}

pub fn enumerate_dags(d: usize) -> Result<DagIter> {
    if d == 0 {
        return Err(Error::Precondition("need at least one node".into()));
    }
    if d > MAX_ENUM_NODES {
        return Err(Error::Capacity(format!(
            "exhaustive DAG enumeration is limited to d <= {MAX_ENUM_NODES}; the number of DAGs grows \
             super-exponentially (d=6 already has 3,781,503)"
        )));
    }
    Ok(DagIter { d, next: 0, end: 1u64 << (d * (d - 1)) })
}
