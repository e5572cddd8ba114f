//! Stochastic error sampling and the detector stream the front-end sees.

use crate::error::{Error, Result};
use crate::lattice::{CellCoord, LatticeDims, LatticeKind, QubitSite};
use crate::rng::{keyed, keyed_rng, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Independent phase-flip and heralded-loss channel on every qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub p_z: f64,
    pub p_loss: f64,
    pub seed: u64,
}

impl ErrorModel {
    pub fn new(p_z: f64, p_loss: f64, seed: u64) -> Result<Self> {
        let m = Self { p_z, p_loss, seed };
        m.validate()?;
        Ok(m)
    }

    pub fn phase_only(p_z: f64, seed: u64) -> Result<Self> {
        Self::new(p_z, 0.0, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !ok(self.p_z) || !ok(self.p_loss) {
            return Err(Error::InvalidModel(format!(
                "probabilities must lie in [0, 1], got p_z={} p_loss={}",
                self.p_z, self.p_loss
            )));
        }
        if self.p_z + self.p_loss > 1.0 + 1e-12 {
            return Err(Error::InvalidModel(format!(
                "p_z + p_loss must not exceed 1, got {}",
                self.p_z + self.p_loss
            )));
        }
        Ok(())
    }
}

/// Phase-erred and lost sites of one trial.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrorConfiguration {
    pub z_errors: BTreeSet<QubitSite>,
    pub losses: BTreeSet<QubitSite>,
}

impl ErrorConfiguration {
    pub fn with_z_errors(sites: impl IntoIterator<Item = QubitSite>) -> Self {
        Self { z_errors: sites.into_iter().collect(), losses: BTreeSet::new() }
    }

    pub fn with_losses(sites: impl IntoIterator<Item = QubitSite>) -> Self {
        Self { z_errors: BTreeSet::new(), losses: sites.into_iter().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.z_errors.is_empty() && self.losses.is_empty()
    }

    pub fn validate(&self, dims: &LatticeDims) -> Result<()> {
        for q in self.z_errors.iter().chain(&self.losses) {
            if !dims.contains_site(q) {
                return Err(Error::InvalidSite(*q));
            }
        }
        if let Some(q) = self.z_errors.intersection(&self.losses).next() {
            return Err(Error::InvalidModel(format!("site {q} is both erred and lost")));
        }
        Ok(())
    }

    /// Symmetric difference of the phase errors; losses are unioned.
    pub fn xor(&self, other: &Self) -> Self {
        Self {
            z_errors: self.z_errors.symmetric_difference(&other.z_errors).copied().collect(),
            losses: self.losses.union(&other.losses).copied().collect(),
        }
    }
}

/// Sample an error configuration.
///
/// Each sheet of constant doubled time coordinate draws from its own keyed
/// stream and places hits by geometric skipping, so the result depends only
/// on `(seed, sheet)` and costs time proportional to the number of hits.
pub fn sample_errors(dims: &LatticeDims, model: &ErrorModel) -> Result<ErrorConfiguration> {
    model.validate()?;
    let mut out = ErrorConfiguration::default();
    let p_any = model.p_z + model.p_loss;
    if p_any <= 0.0 {
        return Ok(out);
    }
    let loss_share = model.p_loss / p_any;
    let log_q = (1.0 - p_any).ln();
    for z in 0..=2 * dims.nt {
        let mut rng = keyed_rng(model.seed, Stream::ErrorSheet, [z as i64, 0, 0, 0]);
        let draw_skip = |rng: &mut rand_chacha::ChaCha8Rng| -> u64 {
            if p_any >= 1.0 {
                return 0;
            }
            let u: f64 = 1.0 - rng.gen::<f64>();
            let s = (u.ln() / log_q).floor();
            if s >= u64::MAX as f64 { u64::MAX } else { s as u64 }
        };
        let mut skip = draw_skip(&mut rng);
        for y in 0..=2 * dims.ny {
            for (_, run) in dims.row_runs(y, z).into_iter().flatten() {
                let mut k = 0u64;
                let count = run.count as u64;
                loop {
                    if skip >= count - k {
                        skip -= count - k;
                        break;
                    }
                    k += skip;
                    let site = QubitSite::new(run.x0 + 2 * k as i32, y, z);
                    if rng.gen::<f64>() < loss_share {
                        out.losses.insert(site);
                    } else {
                        out.z_errors.insert(site);
                    }
                    k += 1;
                    skip = draw_skip(&mut rng);
                }
            }
        }
    }
    Ok(out)
}

/// How the preparation network's initial cell parities are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    AllEven,
    Random,
}

impl BaselineMode {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::AllEven => "all-even",
            BaselineMode::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all-even" => Some(BaselineMode::AllEven),
            "random" => Some(BaselineMode::Random),
            _ => None,
        }
    }
}

/// Recorded initial parity of every cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Baseline {
    pub mode: BaselineMode,
    pub seed: u64,
}

impl Baseline {
    pub fn all_even(seed: u64) -> Self {
        Self { mode: BaselineMode::AllEven, seed }
    }

    pub fn random(seed: u64) -> Self {
        Self { mode: BaselineMode::Random, seed }
    }

    pub fn parity(&self, cell: &CellCoord) -> u8 {
        match self.mode {
            BaselineMode::AllEven => 0,
            BaselineMode::Random => {
                let kind = (cell.kind == LatticeKind::Dual) as i64;
                (keyed(self.seed, Stream::Baseline, [kind, cell.i as i64, cell.j as i64, cell.t as i64]) & 1)
                    as u8
            }
        }
    }

    /// Uniform "raw" outcome bit before the parity constraints are imposed.
    #[inline]
    fn raw_bit(&self, x: i32, y: i32, z: i32) -> u8 {
        let word = keyed(self.seed, Stream::Outcome, [(x >> 6) as i64, y as i64, z as i64, 0]);
        ((word >> (x & 63)) & 1) as u8
    }
}

/// Detector outcomes for one sheet of constant doubled time coordinate.
///
/// Addresses `(i, j)` are the doubled `(x, y)` coordinates of the sheet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorFrame {
    pub t: i32,
    width: i32,
    height: i32,
    cells: Vec<u8>,
}

const LOST: u8 = 2;
const ABSENT: u8 = 3;

impl DetectorFrame {
    /// An empty frame for sheet `t`; every address starts without a qubit.
    pub fn empty(dims: &LatticeDims, t: i32) -> Self {
        let width = 2 * dims.nx + 1;
        let height = 2 * dims.ny + 1;
        Self { t, width, height, cells: vec![ABSENT; (width * height) as usize] }
    }

    #[inline]
    fn slot(&self, i: i32, j: i32) -> Option<usize> {
        ((0..self.width).contains(&i) && (0..self.height).contains(&j)).then(|| (j * self.width + i) as usize)
    }

    /// Outcome at `(i, j)`, or `None` if lost or not a qubit.
    #[inline]
    pub fn bit(&self, i: i32, j: i32) -> Option<u8> {
        self.slot(i, j).map(|s| self.cells[s]).filter(|&v| v <= 1)
    }

    pub fn is_lost(&self, i: i32, j: i32) -> bool {
        self.slot(i, j).map(|s| self.cells[s] == LOST).unwrap_or(false)
    }

    pub fn set_bit(&mut self, i: i32, j: i32, v: u8) {
        let s = self.slot(i, j).expect("address inside the cross-section");
        self.cells[s] = v & 1;
    }

    pub fn set_lost(&mut self, i: i32, j: i32) {
        let s = self.slot(i, j).expect("address inside the cross-section");
        self.cells[s] = LOST;
    }

    /// Recorded bits in row-major order: `((i, j), v)`.
    pub fn bits(&self) -> impl Iterator<Item = ((i32, i32), u8)> + '_ {
        self.entries().filter_map(|(a, v)| (v <= 1).then_some((a, v)))
    }

    /// Addresses with no detector click.
    pub fn loss_flags(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        self.entries().filter_map(|(a, v)| (v == LOST).then_some(a))
    }

    /// Every populated address with its raw code (0/1 bit, 2 lost).
    pub(crate) fn entries(&self) -> impl Iterator<Item = ((i32, i32), u8)> + '_ {
        self.cells.iter().enumerate().filter(|(_, &v)| v != ABSENT).map(move |(s, &v)| {
            let s = s as i32;
            ((s % self.width, s / self.width), v)
        })
    }

    pub(crate) fn set_code(&mut self, i: i32, j: i32, code: u8) {
        let s = self.slot(i, j).expect("address inside the cross-section");
        self.cells[s] = code;
    }
}

/// Lazily emits the detector frames of a trial in increasing `t`.
///
/// Individual outcomes are uniformly random; each cell's six-face parity
/// equals its baseline parity flipped by the phase errors on its faces.
/// The constraint is imposed by flipping a chain of x-faces from every
/// cell whose raw parity is wrong down to the low-x boundary, which keeps
/// the result uniform over all consistent outcome assignments.
pub struct MeasurementStream {
    dims: LatticeDims,
    baseline: Baseline,
    errors: BTreeMap<i32, Vec<(i32, i32)>>,
    losses: BTreeMap<i32, Vec<(i32, i32)>>,
    next: i32,
}

pub fn measurement_stream(dims: &LatticeDims, errors: &ErrorConfiguration, baseline: Baseline) -> MeasurementStream {
    let group = |set: &BTreeSet<QubitSite>| {
        let mut m: BTreeMap<i32, Vec<(i32, i32)>> = BTreeMap::new();
        for q in set {
            m.entry(q.z).or_default().push((q.x, q.y));
        }
        m
    };
    MeasurementStream {
        dims: *dims,
        baseline,
        errors: group(&errors.z_errors),
        losses: group(&errors.losses),
        next: 0,
    }
}

impl MeasurementStream {
    /// Generate the frame for sheet `z` in isolation.
    pub fn frame(&self, z: i32) -> DetectorFrame {
        let dims = &self.dims;
        let mut frame = DetectorFrame::empty(dims, z);
        for y in 0..=2 * dims.ny {
            for (_, run) in dims.row_runs(y, z).into_iter().flatten() {
                for k in 0..run.count {
                    let x = run.x0 + 2 * k;
                    frame.set_bit(x, y, self.baseline.raw_bit(x, y, z));
                }
            }
        }
        self.impose_parities(&mut frame);
        for &(x, y) in self.errors.get(&z).into_iter().flatten() {
            let v = frame.bit(x, y).expect("error site present");
            frame.set_bit(x, y, v ^ 1);
        }
        for &(x, y) in self.losses.get(&z).into_iter().flatten() {
            frame.set_lost(x, y);
        }
        frame
    }

    fn impose_parities(&self, frame: &mut DetectorFrame) {
        let z = frame.t;
        let kind = if z % 2 == 1 { LatticeKind::Primal } else { LatticeKind::Dual };
        let t = if kind == LatticeKind::Primal { (z - 1) / 2 } else { z / 2 };
        let (t_lo, t_hi) = self.dims.cell_range(kind, 2);
        if !(t_lo..=t_hi).contains(&t) {
            return;
        }
        let (i_lo, i_hi) = self.dims.cell_range(kind, 0);
        let (j_lo, j_hi) = self.dims.cell_range(kind, 1);
        for j in j_lo..=j_hi {
            let mut carry = 0u8;
            for i in (i_lo..=i_hi).rev() {
                let cell = CellCoord::new(kind, i, j, t);
                let [cx, cy, cz] = cell.centre();
                let raw = self.baseline.raw_bit(cx, cy, cz - 1)
                    ^ self.baseline.raw_bit(cx, cy, cz + 1)
                    ^ frame.bit(cx - 1, cy).unwrap()
                    ^ frame.bit(cx + 1, cy).unwrap()
                    ^ frame.bit(cx, cy - 1).unwrap()
                    ^ frame.bit(cx, cy + 1).unwrap();
                // The +x face was already flipped by carry when i+1 was
                // processed; undo that to read the raw parity.
                let raw = raw ^ carry;
                carry ^= raw ^ self.baseline.parity(&cell);
                if carry == 1 {
                    let v = frame.bit(cx - 1, cy).unwrap();
                    frame.set_bit(cx - 1, cy, v ^ 1);
                }
            }
        }
    }
}

impl Iterator for MeasurementStream {
    type Item = DetectorFrame;

    fn next(&mut self) -> Option<DetectorFrame> {
        if self.next > 2 * self.dims.nt {
            return None;
        }
        let f = self.frame(self.next);
        self.next += 1;
        Some(f)
    }
}
