//! Layer 2: m_e-bounded graphs over detection events, components, and the
//! interlaced window geometry used for parallel decoding.

use crate::error::{Error, Result};
use crate::lattice::{l1, CellCoord, LatticeDims, LatticeKind};
use crate::octree::OctreeIndex;
use serde::{Deserialize, Serialize};

/// Event-to-event and event-to-boundary edges of weight at most `m_e`.
///
/// Nodes `0..events.len()` are events. Each entry of `boundary` adds one
/// virtual node owned by a single event, so boundary access never joins
/// otherwise separate components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchGraph {
    pub m_e: u32,
    pub events: Vec<CellCoord>,
    /// `(u, v, w)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize, u32)>,
    /// `(owner, w)`: distance from the owner to the nearest lattice face,
    /// sorted by owner.
    pub boundary: Vec<(usize, u32)>,
}

impl MatchGraph {
    pub fn num_virtual(&self) -> usize {
        self.boundary.len()
    }

    /// Adjacency lists over event nodes.
    pub fn adjacency(&self) -> Vec<Vec<(usize, u32)>> {
        let mut adj = vec![Vec::new(); self.events.len()];
        for &(u, v, w) in &self.edges {
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
        adj
    }

    /// The self-contained matching problem induced by one component.
    pub fn problem(&self, comp: &Component) -> MatchProblem {
        let mut events: Vec<(CellCoord, usize)> = comp.nodes.iter().map(|&k| (self.events[k], k)).collect();
        events.sort();
        let mut local = std::collections::HashMap::with_capacity(events.len());
        for (pos, &(_, k)) in events.iter().enumerate() {
            local.insert(k, pos);
        }
        let mut boundary = vec![None; events.len()];
        let mut edges = Vec::new();
        for &u in &comp.nodes {
            let pu = local[&u];
            if let Ok(k) = self.boundary.binary_search_by_key(&u, |b| b.0) {
                boundary[pu] = Some(self.boundary[k].1);
            }
            let from = self.edges.partition_point(|e| e.0 < u);
            for &(_, v, w) in self.edges[from..].iter().take_while(|e| e.0 == u) {
                if let Some(&pv) = local.get(&v) {
                    edges.push((pu.min(pv), pu.max(pv), w));
                }
            }
        }
        edges.sort_unstable();
        MatchProblem { events: events.into_iter().map(|(c, _)| c).collect(), edges, boundary }
    }
}

/// Input to the matcher: events sorted by coordinate, local indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchProblem {
    pub events: Vec<CellCoord>,
    pub edges: Vec<(usize, usize, u32)>,
    pub boundary: Vec<Option<u32>>,
}

/// Build the bounded graph over events of a single lattice kind.
pub fn build_bounded_graph(dims: &LatticeDims, events: &[CellCoord], m_e: u32) -> Result<MatchGraph> {
    if m_e < 1 {
        return Err(Error::InvalidConfig("m_e must be at least 1".into()));
    }
    if events.windows(2).any(|w| w[0].kind != w[1].kind) {
        return Err(Error::MixedKinds);
    }
    let points: Vec<_> = events.iter().map(CellCoord::index).collect();
    let tree = OctreeIndex::build(&points);
    let r = m_e as i32;
    let mut edges = Vec::new();
    let mut near = Vec::new();
    for (u, c) in events.iter().enumerate() {
        let p = points[u];
        near.clear();
        tree.range_into(p.map(|v| v - r), p.map(|v| v + r), &mut near);
        for &v in &near {
            if v > u {
                let w = l1(c, &events[v]);
                if w <= m_e {
                    edges.push((u, v, w));
                }
            }
        }
    }
    edges.sort_unstable();
    let boundary = events
        .iter()
        .enumerate()
        .filter_map(|(u, c)| {
            let w = dims.boundary_distance(c);
            (w <= m_e).then_some((u, w))
        })
        .collect();
    Ok(MatchGraph { m_e, events: events.to_vec(), edges, boundary })
}

/// A maximal set of events joined by event-event edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Component {
    /// Event node ids, ascending.
    pub nodes: Vec<usize>,
}

/// Components ordered by their smallest node id.
pub fn connected_components(g: &MatchGraph) -> Vec<Component> {
    let n = g.events.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(u, v, _) in &g.edges {
        let (a, b) = (root(&mut parent, u), root(&mut parent, v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut out: Vec<Component> = Vec::new();
    for u in 0..n {
        let r = root(&mut parent, u);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Component { nodes: Vec::new() });
        }
        out[slot[r]].nodes.push(u);
    }
    out
}

/// Largest coordinate span over the three axes.
pub fn component_extent(g: &MatchGraph, comp: &Component) -> Result<u32> {
    extent_of(comp.nodes.iter().map(|&k| g.events[k]))
}

pub fn extent_of(cells: impl IntoIterator<Item = CellCoord>) -> Result<u32> {
    let mut lo = [i32::MAX; 3];
    let mut hi = [i32::MIN; 3];
    let mut any = false;
    for c in cells {
        any = true;
        let p = c.index();
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if !any {
        return Err(Error::EmptyComponent);
    }
    Ok((0..3).map(|a| (hi[a] - lo[a]) as u32).max().unwrap())
}

/// Half-open box `[lo, hi)` in cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellBox {
    pub lo: [i32; 3],
    pub hi: [i32; 3],
}

impl CellBox {
    pub fn contains(&self, c: &CellCoord) -> bool {
        let p = c.index();
        (0..3).all(|a| self.lo[a] <= p[a] && p[a] < self.hi[a])
    }
}

/// One interlaced processing region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowTask {
    pub inner: CellBox,
    pub outer: CellBox,
    /// Outer faces that coincide with the lattice edge, per axis `(low, high)`.
    pub clipped: [(bool, bool); 3],
    /// Indices into the partitioned event list, ascending.
    pub payload: Vec<usize>,
}

impl WindowTask {
    /// Whether a cell of this window could have a neighbour within `m_e`
    /// that lies beyond an unclipped outer face.
    pub fn near_open_face(&self, c: &CellCoord, m_e: u32) -> bool {
        let p = c.index();
        let r = m_e as i32;
        (0..3).any(|a| {
            (!self.clipped[a].0 && p[a] - self.outer.lo[a] < r) || (!self.clipped[a].1 && self.outer.hi[a] - 1 - p[a] < r)
        })
    }
}

/// Tile the lattice with inner boxes of edge `n`, each inside an outer box
/// extending `n` beyond every face, clipped to the lattice.
pub fn window_partition(events: &[CellCoord], dims: &LatticeDims, n: i32) -> Result<Vec<WindowTask>> {
    if n < 1 {
        return Err(Error::WindowTooSmall(n));
    }
    if n > dims.min_extent() {
        return Err(Error::WindowTooLarge { n, min_dim: dims.min_extent() });
    }
    let ext = dims.extents();
    let tiles = ext.map(|e| (e + n - 1) / n);
    let points: Vec<_> = events.iter().map(CellCoord::index).collect();
    let tree = OctreeIndex::build(&points);
    let mut out = Vec::with_capacity((tiles[0] * tiles[1] * tiles[2]) as usize);
    for ti in 0..tiles[0] {
        for tj in 0..tiles[1] {
            for tt in 0..tiles[2] {
                let t = [ti, tj, tt];
                let lo = [0, 1, 2].map(|a| t[a] * n);
                let hi = [0, 1, 2].map(|a| ((t[a] + 1) * n).min(ext[a]));
                let olo = [0, 1, 2].map(|a| (lo[a] - n).max(0));
                let ohi = [0, 1, 2].map(|a| (hi[a] + n).min(ext[a]));
                let clipped = [0, 1, 2].map(|a| (olo[a] == 0, ohi[a] == ext[a]));
                let payload = tree.range(olo, ohi.map(|v| v - 1));
                out.push(WindowTask { inner: CellBox { lo, hi }, outer: CellBox { lo: olo, hi: ohi }, clipped, payload });
            }
        }
    }
    Ok(out)
}

/// Events of one kind, in input order.
pub fn events_of_kind(cells: impl IntoIterator<Item = CellCoord>, kind: LatticeKind) -> Vec<CellCoord> {
    cells.into_iter().filter(|c| c.kind == kind).collect()
}
