//! Geometry of the 3D cluster in doubled coordinates.
//!
//! A lattice of `nx * ny * nt` primal cells occupies the doubled box
//! `[0, 2nx] x [0, 2ny] x [0, 2nt]`. Primal cell `(i, j, t)` is centred at
//! `(2i+1, 2j+1, 2t+1)`, dual cell `(i, j, t)` at `(2i, 2j, 2t)`. Qubits sit
//! on cell faces: sites with exactly one even coordinate are primal faces,
//! sites with exactly two even coordinates are dual faces.
//!
//! Every face of the lattice is rough. For the primal lattice this means the
//! outermost primal faces (even coordinate `0` or `2n`) border a single cell.
//! The dual lattice mirrors that one half-cell inwards: dual cells have
//! indices `1..n` on each axis, dual sites live in `[1, 2n-1]^3`, and the
//! dual faces at odd coordinate `1` or `2n-1` border a single dual cell.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which of the two interpenetrating cell lattices a cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LatticeKind {
    Primal,
    Dual,
}

impl LatticeKind {
    pub const BOTH: [LatticeKind; 2] = [LatticeKind::Primal, LatticeKind::Dual];

    /// Single-letter tag used by the text formats.
    pub fn tag(self) -> char {
        match self {
            LatticeKind::Primal => 'P',
            LatticeKind::Dual => 'D',
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "P" => Some(LatticeKind::Primal),
            "D" => Some(LatticeKind::Dual),
            _ => None,
        }
    }

    /// Parity of a cell centre coordinate for this kind.
    fn centre_offset(self) -> i32 {
        match self {
            LatticeKind::Primal => 1,
            LatticeKind::Dual => 0,
        }
    }
}

/// A primal or dual cell addressed by integer cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellCoord {
    pub kind: LatticeKind,
    pub i: i32,
    pub j: i32,
    pub t: i32,
}

impl CellCoord {
    pub const fn new(kind: LatticeKind, i: i32, j: i32, t: i32) -> Self {
        Self { kind, i, j, t }
    }

    pub const fn primal(i: i32, j: i32, t: i32) -> Self {
        Self::new(LatticeKind::Primal, i, j, t)
    }

    pub const fn dual(i: i32, j: i32, t: i32) -> Self {
        Self::new(LatticeKind::Dual, i, j, t)
    }

    pub fn index(&self) -> [i32; 3] {
        [self.i, self.j, self.t]
    }

    pub fn with_index(kind: LatticeKind, idx: [i32; 3]) -> Self {
        Self::new(kind, idx[0], idx[1], idx[2])
    }

    /// Centre of the cell in doubled coordinates.
    pub fn centre(&self) -> [i32; 3] {
        let off = self.kind.centre_offset();
        [2 * self.i + off, 2 * self.j + off, 2 * self.t + off]
    }

    fn from_centre(kind: LatticeKind, c: [i32; 3]) -> Self {
        let off = kind.centre_offset();
        Self::with_index(kind, c.map(|v| (v - off).div_euclid(2)))
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{},{})", self.kind.tag(), self.i, self.j, self.t)
    }
}

/// A physical qubit in doubled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QubitSite {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl QubitSite {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn coords(&self) -> [i32; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_coords(c: [i32; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    /// Lattice whose cells this site is a face of, from its parity class alone.
    pub fn class(&self) -> Option<LatticeKind> {
        let evens = self.coords().iter().filter(|c| c.rem_euclid(2) == 0).count();
        match evens {
            1 => Some(LatticeKind::Primal),
            2 => Some(LatticeKind::Dual),
            _ => None,
        }
    }

    /// The axis along which the two cells sharing this face are separated.
    pub(crate) fn normal_axis(&self, kind: LatticeKind) -> usize {
        let c = self.coords();
        let want_even = kind == LatticeKind::Primal;
        (0..3)
            .find(|&a| (c[a].rem_euclid(2) == 0) == want_even)
            .expect("site class checked by caller")
    }
}

impl fmt::Display for QubitSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

/// The second cell sharing a face, or the lattice boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Neighbor {
    Cell(CellCoord),
    Boundary,
}

/// A run of qubit sites along a row of a sheet: `x = x0, x0 + 2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteRun {
    pub x0: i32,
    pub count: i32,
}

/// Number of primal cells along each axis; the third axis is simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeDims {
    pub nx: i32,
    pub ny: i32,
    pub nt: i32,
}

impl LatticeDims {
    pub fn new(nx: i32, ny: i32, nt: i32) -> Result<Self> {
        if nx < 2 || ny < 2 || nt < 2 {
            return Err(Error::InvalidDims { nx, ny, nt });
        }
        Ok(Self { nx, ny, nt })
    }

    pub fn cube(n: i32) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn extents(&self) -> [i32; 3] {
        [self.nx, self.ny, self.nt]
    }

    pub fn min_extent(&self) -> i32 {
        self.nx.min(self.ny).min(self.nt)
    }

    /// Inclusive range of cell indices of `kind` along `axis`.
    pub fn cell_range(&self, kind: LatticeKind, axis: usize) -> (i32, i32) {
        let n = self.extents()[axis];
        match kind {
            LatticeKind::Primal => (0, n - 1),
            LatticeKind::Dual => (1, n - 1),
        }
    }

    pub fn contains_cell(&self, cell: &CellCoord) -> bool {
        let idx = cell.index();
        (0..3).all(|a| {
            let (lo, hi) = self.cell_range(cell.kind, a);
            (lo..=hi).contains(&idx[a])
        })
    }

    pub fn num_cells(&self, kind: LatticeKind) -> usize {
        (0..3)
            .map(|a| {
                let (lo, hi) = self.cell_range(kind, a);
                (hi - lo + 1) as usize
            })
            .product()
    }

    /// All cells of one kind, ordered by `(i, j, t)`.
    pub fn cells(&self, kind: LatticeKind) -> impl Iterator<Item = CellCoord> + '_ {
        let (i0, i1) = self.cell_range(kind, 0);
        let (j0, j1) = self.cell_range(kind, 1);
        let (t0, t1) = self.cell_range(kind, 2);
        (i0..=i1).flat_map(move |i| {
            (j0..=j1).flat_map(move |j| (t0..=t1).map(move |t| CellCoord::new(kind, i, j, t)))
        })
    }

    /// Class of `q` if it is a qubit site of this lattice.
    pub fn site_class(&self, q: &QubitSite) -> Option<LatticeKind> {
        let kind = q.class()?;
        let c = q.coords();
        let ext = self.extents();
        let inside = match kind {
            LatticeKind::Primal => (0..3).all(|a| (0..=2 * ext[a]).contains(&c[a])),
            LatticeKind::Dual => (0..3).all(|a| (1..2 * ext[a]).contains(&c[a])),
        };
        inside.then_some(kind)
    }

    pub fn contains_site(&self, q: &QubitSite) -> bool {
        self.site_class(q).is_some()
    }

    fn check_cell(&self, cell: &CellCoord) -> Result<()> {
        if self.contains_cell(cell) {
            Ok(())
        } else {
            Err(Error::CellOutOfRange(*cell))
        }
    }

    /// The six face sites of `cell`, ordered `-x, +x, -y, +y, -t, +t`.
    pub fn cell_face_qubits(&self, cell: &CellCoord) -> Result<[QubitSite; 6]> {
        self.check_cell(cell)?;
        Ok(cell_faces(cell))
    }

    /// The cells sharing face `q`, lower cell first. A face on the lattice
    /// boundary reports its single cell and [`Neighbor::Boundary`].
    pub fn qubit_adjacent_cells(&self, q: &QubitSite) -> Result<(CellCoord, Neighbor)> {
        let kind = self.site_class(q).ok_or(Error::InvalidSite(*q))?;
        let axis = q.normal_axis(kind);
        let mut lo = q.coords();
        let mut hi = q.coords();
        lo[axis] -= 1;
        hi[axis] += 1;
        let lo = CellCoord::from_centre(kind, lo);
        let hi = CellCoord::from_centre(kind, hi);
        match (self.contains_cell(&lo), self.contains_cell(&hi)) {
            (true, true) => Ok((lo, Neighbor::Cell(hi))),
            (true, false) => Ok((lo, Neighbor::Boundary)),
            (false, true) => Ok((hi, Neighbor::Boundary)),
            (false, false) => unreachable!("every site in the domain borders a cell"),
        }
    }

    /// Length of the shortest face chain from `cell` to any lattice face.
    pub fn boundary_distance(&self, cell: &CellCoord) -> u32 {
        let idx = cell.index();
        (0..3)
            .map(|a| {
                let (lo, hi) = self.cell_range(cell.kind, a);
                (idx[a] - lo + 1).min(hi - idx[a] + 1)
            })
            .min()
            .unwrap() as u32
    }

    /// Total number of qubit sites.
    pub fn num_sites(&self) -> usize {
        let [nx, ny, nt] = self.extents().map(|v| v as usize);
        let primal = (nx + 1) * ny * nt + nx * (ny + 1) * nt + nx * ny * (nt + 1);
        let dual = nx * (ny - 1) * (nt - 1) + (nx - 1) * ny * (nt - 1) + (nx - 1) * (ny - 1) * nt;
        primal + dual
    }

    /// Runs of sites along row `y` of sheet `z`, at most one per kind.
    pub fn row_runs(&self, y: i32, z: i32) -> [Option<(LatticeKind, SiteRun)>; 2] {
        let [nx, ny, nt] = self.extents();
        if !(0..=2 * ny).contains(&y) || !(0..=2 * nt).contains(&z) {
            return [None, None];
        }
        let y_even = y % 2 == 0;
        let z_even = z % 2 == 0;
        let dual_ok = |v: i32, n: i32| (1..2 * n).contains(&v);
        match (y_even, z_even) {
            (false, false) => [
                Some((LatticeKind::Primal, SiteRun { x0: 0, count: nx + 1 })),
                None,
            ],
            (true, true) => {
                let dual = (dual_ok(y, ny) && dual_ok(z, nt))
                    .then_some((LatticeKind::Dual, SiteRun { x0: 1, count: nx }));
                [None, dual]
            }
            _ => {
                let dual = (dual_ok(y, ny) && dual_ok(z, nt))
                    .then_some((LatticeKind::Dual, SiteRun { x0: 2, count: nx - 1 }));
                [Some((LatticeKind::Primal, SiteRun { x0: 1, count: nx })), dual]
            }
        }
    }

    /// All sites of sheet `z`, row by row.
    pub fn sheet_sites(&self, z: i32) -> impl Iterator<Item = QubitSite> + '_ {
        (0..=2 * self.ny).flat_map(move |y| {
            self.row_runs(y, z)
                .into_iter()
                .flatten()
                .flat_map(move |(_, run)| (0..run.count).map(move |k| QubitSite::new(run.x0 + 2 * k, y, z)))
        })
    }

    /// Every qubit site, sheet by sheet.
    pub fn sites(&self) -> impl Iterator<Item = QubitSite> + '_ {
        (0..=2 * self.nt).flat_map(move |z| self.sheet_sites(z))
    }
}

pub(crate) fn cell_faces(cell: &CellCoord) -> [QubitSite; 6] {
    let c = cell.centre();
    let mut out = [QubitSite::new(0, 0, 0); 6];
    for axis in 0..3 {
        for (k, d) in [-1, 1].into_iter().enumerate() {
            let mut s = c;
            s[axis] += d;
            out[2 * axis + k] = QubitSite::from_coords(s);
        }
    }
    out
}

/// Face shared by two cells one index apart along a single axis.
pub(crate) fn shared_face(a: &CellCoord, b: &CellCoord) -> QubitSite {
    let ca = a.centre();
    let cb = b.centre();
    QubitSite::from_coords([0, 1, 2].map(|k| (ca[k] + cb[k]) / 2))
}

/// Manhattan distance between two cells of the same kind, in cell indices.
pub fn cell_distance(a: &CellCoord, b: &CellCoord) -> Result<u32> {
    if a.kind != b.kind {
        return Err(Error::MixedKinds);
    }
    Ok(l1(a, b))
}

#[inline]
pub(crate) fn l1(a: &CellCoord, b: &CellCoord) -> u32 {
    (a.i - b.i).unsigned_abs() + (a.j - b.j).unsigned_abs() + (a.t - b.t).unsigned_abs()
}
