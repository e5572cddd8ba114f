//! Cell parities, loss supercells and detection events.

use crate::error::{Error, Result};
use crate::errorsim::{Baseline, DetectorFrame, ErrorConfiguration};
use crate::lattice::{cell_faces, CellCoord, LatticeDims, LatticeKind, Neighbor, QubitSite};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, VecDeque};

/// A (super)cell whose parity differs from its recorded baseline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub cell: CellCoord,
    /// All merged cells, sorted, when heralded loss formed a supercell.
    pub supercell_members: Option<Vec<CellCoord>>,
}

impl DetectionEvent {
    pub fn single(cell: CellCoord) -> Self {
        Self { cell, supercell_members: None }
    }

    /// Key giving the order in which the streaming front-end emits events.
    pub fn stream_key(&self) -> (i32, bool, i32, i32) {
        stream_key(&self.cell)
    }
}

/// Dual cells of index `t` finalize one sheet before primal cells of index `t`.
fn stream_key(c: &CellCoord) -> (i32, bool, i32, i32) {
    (c.t, c.kind == LatticeKind::Primal, c.i, c.j)
}

/// Cell standing in for a supercell: the latest member in time, then the
/// smallest `(i, j)`.
fn representative(members: &[CellCoord]) -> CellCoord {
    *members.iter().max_by_key(|c| (c.t, Reverse(c.i), Reverse(c.j))).expect("nonempty supercell")
}

enum Face {
    Bit(u8),
    Lost,
}

fn read_face(frames: [&DetectorFrame; 3], cell: &CellCoord, q: &QubitSite) -> Result<Face> {
    let zc = cell.centre()[2];
    let f = frames[(q.z - zc + 1) as usize];
    if f.t != q.z {
        return Err(Error::MissingFrame { cell: *cell, frame: q.z });
    }
    match f.bit(q.x, q.y) {
        Some(b) => Ok(Face::Bit(b)),
        None if f.is_lost(q.x, q.y) => Ok(Face::Lost),
        None => Err(Error::MissingFrame { cell: *cell, frame: q.z }),
    }
}

/// Mod-2 sum of the six face outcomes of `cell`, read from the frames at
/// the cell's centre sheet minus one, the centre sheet, and plus one.
pub fn cell_parity(frames: [&DetectorFrame; 3], cell: &CellCoord) -> Result<u8> {
    let mut parity = 0;
    for q in cell_faces(cell) {
        match read_face(frames, cell, &q)? {
            Face::Bit(b) => parity ^= b,
            Face::Lost => return Err(Error::LostConstituent(q)),
        }
    }
    Ok(parity)
}

/// Merged check around one or more heralded losses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Supercell {
    pub cells: Vec<CellCoord>,
    /// Symmetric difference of the members' face sets.
    pub sites: Vec<QubitSite>,
    /// A lost face lies on the lattice boundary, so the check is open.
    pub touches_boundary: bool,
}

/// Grow the supercell containing `lost_site` through every lost face.
pub fn form_supercell(dims: &LatticeDims, losses: &BTreeSet<QubitSite>, lost_site: &QubitSite) -> Result<Supercell> {
    if !losses.contains(lost_site) {
        return Err(Error::NotLost(*lost_site));
    }
    let (first, _) = dims.qubit_adjacent_cells(lost_site)?;
    let mut seen = BTreeSet::from([first]);
    let mut queue = VecDeque::from([first]);
    let mut touches_boundary = false;
    while let Some(c) = queue.pop_front() {
        for q in cell_faces(&c) {
            if !losses.contains(&q) {
                continue;
            }
            let (a, b) = dims.qubit_adjacent_cells(&q)?;
            let other = if a == c { b } else { Neighbor::Cell(a) };
            match other {
                Neighbor::Boundary => touches_boundary = true,
                Neighbor::Cell(o) => {
                    if seen.insert(o) {
                        queue.push_back(o);
                    }
                }
            }
        }
    }
    let cells: Vec<_> = seen.into_iter().collect();
    if spans_lattice(dims, &cells) {
        return Err(Error::LossPercolation);
    }
    let mut count: HashMap<QubitSite, u8> = HashMap::new();
    for c in &cells {
        for q in cell_faces(c) {
            *count.entry(q).or_default() ^= 1;
        }
    }
    let mut sites: Vec<_> = count.into_iter().filter(|&(_, v)| v == 1).map(|(q, _)| q).collect();
    sites.sort();
    Ok(Supercell { cells, sites, touches_boundary })
}

fn spans_lattice(dims: &LatticeDims, cells: &[CellCoord]) -> bool {
    let Some(first) = cells.first() else { return false };
    (0..3).any(|a| {
        let (lo, hi) = dims.cell_range(first.kind, a);
        let min = cells.iter().map(|c| c.index()[a]).min().unwrap();
        let max = cells.iter().map(|c| c.index()[a]).max().unwrap();
        min == lo && max == hi
    })
}

struct Node {
    parent: usize,
    parity: u8,
    baseline: u8,
    open: i32,
    boundary: bool,
    members: Vec<CellCoord>,
}

/// Streaming layer-1 processor.
///
/// Frames must be pushed in increasing `t` starting at 0. A cell is
/// finalized once the frame after its centre sheet arrives; cells with lost
/// faces wait in a pending supercell until every lost face has both sides
/// finalized.
pub struct ParityAccumulator {
    dims: LatticeDims,
    baseline: Baseline,
    ring: VecDeque<DetectorFrame>,
    next_t: i32,
    nodes: Vec<Node>,
    pending: HashMap<CellCoord, usize>,
}

impl ParityAccumulator {
    pub fn new(dims: &LatticeDims, baseline: Baseline) -> Self {
        Self {
            dims: *dims,
            baseline,
            ring: VecDeque::with_capacity(3),
            next_t: 0,
            nodes: Vec::new(),
            pending: HashMap::new(),
        }
    }

    /// Admit the next frame; returns the events finalized by it.
    pub fn push(&mut self, frame: DetectorFrame) -> Result<Vec<DetectionEvent>> {
        if frame.t != self.next_t || frame.t > 2 * self.dims.nt {
            return Err(Error::MalformedRecord {
                line: 0,
                reason: format!("expected frame {}, got {}", self.next_t, frame.t),
            });
        }
        self.next_t += 1;
        if self.ring.len() == 3 {
            self.ring.pop_front();
        }
        self.ring.push_back(frame);
        if self.ring.len() < 3 {
            return Ok(Vec::new());
        }
        self.finalize_layer()
    }

    /// Check that the stream was complete.
    pub fn finish(self) -> Result<()> {
        if self.next_t != 2 * self.dims.nt + 1 {
            return Err(Error::MalformedRecord {
                line: 0,
                reason: format!("stream ended after {} of {} frames", self.next_t, 2 * self.dims.nt + 1),
            });
        }
        debug_assert!(self.pending.is_empty());
        Ok(())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.nodes[x].parent != x {
            let gp = self.nodes[self.nodes[x].parent].parent;
            self.nodes[x].parent = gp;
            x = gp;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (big, small) = if self.nodes[ra].members.len() >= self.nodes[rb].members.len() { (ra, rb) } else { (rb, ra) };
        let moved = std::mem::take(&mut self.nodes[small].members);
        let s = &self.nodes[small];
        let (p, b0, o, bd) = (s.parity, s.baseline, s.open, s.boundary);
        let n = &mut self.nodes[big];
        n.members.extend(moved);
        n.parity ^= p;
        n.baseline ^= b0;
        n.open += o;
        n.boundary |= bd;
        self.nodes[small].parent = big;
        big
    }

    fn finalize_layer(&mut self) -> Result<Vec<DetectionEvent>> {
        let zc = self.ring[1].t;
        let kind = if zc % 2 == 1 { LatticeKind::Primal } else { LatticeKind::Dual };
        let t = zc.div_euclid(2);
        let (t_lo, t_hi) = self.dims.cell_range(kind, 2);
        if !(t_lo..=t_hi).contains(&t) {
            return Ok(Vec::new());
        }
        let (i_lo, i_hi) = self.dims.cell_range(kind, 0);
        let (j_lo, j_hi) = self.dims.cell_range(kind, 1);
        let mut out = Vec::new();
        let mut touched = Vec::new();
        for i in i_lo..=i_hi {
            for j in j_lo..=j_hi {
                let cell = CellCoord::new(kind, i, j, t);
                let frames = [&self.ring[0], &self.ring[1], &self.ring[2]];
                let mut parity = 0u8;
                let mut lost = [QubitSite::new(0, 0, 0); 6];
                let mut n_lost = 0;
                for q in cell_faces(&cell) {
                    match read_face(frames, &cell, &q)? {
                        Face::Bit(b) => parity ^= b,
                        Face::Lost => {
                            lost[n_lost] = q;
                            n_lost += 1;
                        }
                    }
                }
                let base = self.baseline.parity(&cell);
                if n_lost == 0 {
                    if parity != base {
                        out.push(DetectionEvent::single(cell));
                    }
                    continue;
                }
                let mut links = Vec::new();
                let mut open = 0;
                let mut boundary = false;
                for q in &lost[..n_lost] {
                    let (a, b) = self.dims.qubit_adjacent_cells(q)?;
                    match if a == cell { b } else { Neighbor::Cell(a) } {
                        Neighbor::Boundary => boundary = true,
                        Neighbor::Cell(o) => match self.pending.get(&o) {
                            Some(&id) => links.push(id),
                            None => open += 1,
                        },
                    }
                }
                let id = self.nodes.len();
                self.nodes.push(Node { parent: id, parity, baseline: base, open, boundary, members: vec![cell] });
                for other in links {
                    let r = self.union(id, other);
                    self.nodes[r].open -= 1;
                }
                self.pending.insert(cell, id);
                touched.push(id);
            }
        }
        for id in touched {
            let r = self.find(id);
            if self.nodes[r].open != 0 || self.nodes[r].members.is_empty() {
                continue;
            }
            let mut members = std::mem::take(&mut self.nodes[r].members);
            for m in &members {
                self.pending.remove(m);
            }
            if spans_lattice(&self.dims, &members) {
                return Err(Error::LossPercolation);
            }
            let node = &self.nodes[r];
            if !node.boundary && node.parity != node.baseline {
                members.sort();
                out.push(DetectionEvent { cell: representative(&members), supercell_members: Some(members) });
            }
        }
        out.sort_by_key(DetectionEvent::stream_key);
        Ok(out)
    }
}

/// Run the streaming front-end over a complete sequence of frames.
pub fn extract_detection_events(
    dims: &LatticeDims,
    baseline: Baseline,
    frames: impl IntoIterator<Item = DetectorFrame>,
) -> Result<Vec<DetectionEvent>> {
    let mut acc = ParityAccumulator::new(dims, baseline);
    let mut events = Vec::new();
    for f in frames {
        events.extend(acc.push(f)?);
    }
    acc.finish()?;
    Ok(events)
}

/// Detection events computed directly from an error configuration.
///
/// Produces the same list as the streaming path for any baseline; used by
/// the Monte Carlo driver where generating outcome bits would be wasted work.
pub fn events_from_errors(dims: &LatticeDims, errors: &ErrorConfiguration) -> Result<Vec<DetectionEvent>> {
    let mut flips: HashMap<CellCoord, u8> = HashMap::new();
    for q in &errors.z_errors {
        let (a, b) = dims.qubit_adjacent_cells(q)?;
        *flips.entry(a).or_default() ^= 1;
        if let Neighbor::Cell(b) = b {
            *flips.entry(b).or_default() ^= 1;
        }
    }
    let mut out = Vec::new();
    if errors.losses.is_empty() {
        out.extend(flips.into_iter().filter(|&(_, v)| v == 1).map(|(c, _)| DetectionEvent::single(c)));
        out.sort_by_key(DetectionEvent::stream_key);
        return Ok(out);
    }

    let mut index: HashMap<CellCoord, usize> = HashMap::new();
    let mut cells = Vec::new();
    let mut parent = Vec::new();
    let mut boundary = Vec::new();
    let mut id_of = |c: CellCoord, cells: &mut Vec<CellCoord>, parent: &mut Vec<usize>, boundary: &mut Vec<bool>| {
        *index.entry(c).or_insert_with(|| {
            cells.push(c);
            parent.push(parent.len());
            boundary.push(false);
            cells.len() - 1
        })
    };
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for q in &errors.losses {
        let (a, b) = dims.qubit_adjacent_cells(q)?;
        let ia = id_of(a, &mut cells, &mut parent, &mut boundary);
        match b {
            Neighbor::Boundary => boundary[ia] = true,
            Neighbor::Cell(b) => {
                let ib = id_of(b, &mut cells, &mut parent, &mut boundary);
                let (ra, rb) = (root(&mut parent, ia), root(&mut parent, ib));
                parent[ra] = rb;
            }
        }
    }
    let mut groups: HashMap<usize, (Vec<CellCoord>, bool)> = HashMap::new();
    for k in 0..cells.len() {
        let r = root(&mut parent, k);
        let g = groups.entry(r).or_default();
        g.0.push(cells[k]);
        g.1 |= boundary[k];
    }
    let mut merged: BTreeSet<CellCoord> = BTreeSet::new();
    for (mut members, touches) in groups.into_values() {
        if spans_lattice(dims, &members) {
            return Err(Error::LossPercolation);
        }
        let parity = members.iter().fold(0, |p, c| p ^ flips.get(c).copied().unwrap_or(0));
        merged.extend(members.iter().copied());
        if !touches && parity == 1 {
            members.sort();
            out.push(DetectionEvent { cell: representative(&members), supercell_members: Some(members) });
        }
    }
    out.extend(
        flips
            .into_iter()
            .filter(|(c, v)| *v == 1 && !merged.contains(c))
            .map(|(c, _)| DetectionEvent::single(c)),
    );
    out.sort_by_key(DetectionEvent::stream_key);
    Ok(out)
}

/// Split events by lattice kind, keeping order.
pub fn split_by_kind(events: &[DetectionEvent]) -> (Vec<DetectionEvent>, Vec<DetectionEvent>) {
    events.iter().cloned().partition(|e| e.cell.kind == LatticeKind::Primal)
}
