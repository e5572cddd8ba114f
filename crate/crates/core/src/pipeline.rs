//! Layer 4: decoding orchestration, Pauli frame, failure accounting and the
//! Monte Carlo driver.

use crate::analysis::table_region_size;
use crate::error::{Error, Result};
use crate::errorsim::{measurement_stream, sample_errors, Baseline, BaselineMode, ErrorConfiguration, ErrorModel};
use crate::lattice::{shared_face, CellCoord, LatticeDims, LatticeKind, Neighbor, QubitSite};
use crate::matcher::{minimum_weight_matching, MatchNode, Matching};
use crate::matchprep::{
    build_bounded_graph, component_extent, connected_components, events_of_kind, window_partition, Component,
    MatchGraph, MatchProblem,
};
use crate::rng::trial_seed;
use crate::syndrome::{events_from_errors, extract_detection_events, DetectionEvent};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

/// One matched pair, in lattice terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Correction {
    /// Two events joined by a chain, smaller cell first.
    Pair(CellCoord, CellCoord),
    /// An event joined to the nearest lattice face.
    Boundary(CellCoord),
}

pub type CorrectionSet = BTreeSet<Correction>;

/// Translate a component matching into corrections; virtual-virtual pairs vanish.
pub fn corrections_of(problem: &MatchProblem, m: &Matching) -> Vec<Correction> {
    m.pairs
        .iter()
        .filter_map(|&(a, b)| match (a, b) {
            (MatchNode::Event(x), MatchNode::Event(y)) => {
                let (p, q) = (problem.events[x], problem.events[y]);
                Some(Correction::Pair(p.min(q), p.max(q)))
            }
            (MatchNode::Event(x), _) => Some(Correction::Boundary(problem.events[x])),
            _ => None,
        })
        .collect()
}

fn match_component(g: &MatchGraph, comp: &Component) -> Result<Vec<Correction>> {
    let problem = g.problem(comp);
    let m = minimum_weight_matching(&problem)?;
    Ok(corrections_of(&problem, &m))
}

fn kind_cells(events: &[DetectionEvent], kind: LatticeKind) -> Vec<CellCoord> {
    events_of_kind(events.iter().map(|e| e.cell), kind)
}

/// One exact matching per component of the full-volume bounded graph.
pub fn decode_global(dims: &LatticeDims, events: &[DetectionEvent], m_e: u32) -> Result<CorrectionSet> {
    let mut out = CorrectionSet::new();
    for kind in LatticeKind::BOTH {
        let g = build_bounded_graph(dims, &kind_cells(events, kind), m_e)?;
        for comp in connected_components(&g) {
            out.extend(match_component(&g, &comp)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelDecode {
    pub corrections: CorrectionSet,
    pub tasks: usize,
    /// Components not provably contained in the outer box of some window
    /// that owns them; these were decoded over the full volume.
    pub fallbacks: usize,
}

/// Window-parallel decode: each task matches the components of its outer-box
/// subgraph that reach its inner box, and the results are merged as a set.
pub fn decode_parallel(dims: &LatticeDims, events: &[DetectionEvent], m_e: u32, n: i32) -> Result<ParallelDecode> {
    let mut corrections = CorrectionSet::new();
    let mut tasks = 0;
    let mut fallbacks = 0;
    for kind in LatticeKind::BOTH {
        let cells = kind_cells(events, kind);
        let windows = window_partition(&cells, dims, n)?;
        tasks += windows.len();
        let results: Vec<Result<(Vec<Correction>, Vec<usize>)>> = windows
            .par_iter()
            .map(|w| {
                let local: Vec<CellCoord> = w.payload.iter().map(|&k| cells[k]).collect();
                let g = build_bounded_graph(dims, &local, m_e)?;
                let mut found = Vec::new();
                let mut flagged = Vec::new();
                for comp in connected_components(&g) {
                    if !comp.nodes.iter().any(|&k| w.inner.contains(&g.events[k])) {
                        continue;
                    }
                    if comp.nodes.iter().any(|&k| w.near_open_face(&g.events[k], m_e)) {
                        flagged.extend(comp.nodes.iter().map(|&k| w.payload[k]));
                        continue;
                    }
                    found.extend(match_component(&g, &comp)?);
                }
                Ok((found, flagged))
            })
            .collect();
        let mut flagged = BTreeSet::new();
        for r in results {
            let (found, f) = r?;
            corrections.extend(found);
            flagged.extend(f);
        }
        if flagged.is_empty() {
            continue;
        }
        let g = build_bounded_graph(dims, &cells, m_e)?;
        for comp in connected_components(&g) {
            if comp.nodes.iter().any(|k| flagged.contains(k)) {
                fallbacks += 1;
                corrections.extend(match_component(&g, &comp)?);
            }
        }
    }
    Ok(ParallelDecode { corrections, tasks, fallbacks })
}

/// Accumulated corrections as a set of flipped sites.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PauliFrame {
    sites: BTreeSet<QubitSite>,
}

impl PauliFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn toggle(&mut self, q: QubitSite) {
        if !self.sites.remove(&q) {
            self.sites.insert(q);
        }
    }

    pub fn contains(&self, q: &QubitSite) -> bool {
        self.sites.contains(q)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> impl Iterator<Item = &QubitSite> + '_ {
        self.sites.iter()
    }
}

/// Axis order used when walking between two cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathOrder {
    #[default]
    Ijt,
    Tji,
}

impl PathOrder {
    fn axes(self) -> [usize; 3] {
        match self {
            PathOrder::Ijt => [0, 1, 2],
            PathOrder::Tji => [2, 1, 0],
        }
    }
}

/// The nearest face of `cell` as `(axis, high side, distance)`; ties go to
/// the earlier axis, low side first.
pub fn nearest_face(dims: &LatticeDims, cell: &CellCoord) -> (usize, bool, u32) {
    let idx = cell.index();
    let mut best = (0, false, u32::MAX);
    for (a, &x) in idx.iter().enumerate() {
        let (lo, hi) = dims.cell_range(cell.kind, a);
        for (high, d) in [(false, x - lo + 1), (true, hi - x + 1)] {
            if (d as u32) < best.2 {
                best = (a, high, d as u32);
            }
        }
    }
    best
}

/// Sites flipped by one correction.
pub fn correction_path(dims: &LatticeDims, c: &Correction, order: PathOrder) -> Vec<QubitSite> {
    match *c {
        Correction::Pair(a, b) => {
            let target = b.index();
            let mut cur = a;
            let mut out = Vec::new();
            for axis in order.axes() {
                loop {
                    let p = cur.index();
                    if p[axis] == target[axis] {
                        break;
                    }
                    let mut q = p;
                    q[axis] += (target[axis] - p[axis]).signum();
                    let next = CellCoord::with_index(cur.kind, q);
                    out.push(shared_face(&cur, &next));
                    cur = next;
                }
            }
            out
        }
        Correction::Boundary(a) => {
            let (axis, high, d) = nearest_face(dims, &a);
            let step = if high { 1 } else { -1 };
            let mut s = a.centre();
            (0..d)
                .map(|_| {
                    s[axis] += step;
                    let q = QubitSite::from_coords(s);
                    s[axis] += step;
                    q
                })
                .collect()
        }
    }
}

/// Flip `frame` along the canonical path of every correction.
pub fn apply_correction(frame: &PauliFrame, corrections: &CorrectionSet, dims: &LatticeDims) -> PauliFrame {
    apply_correction_with(frame, corrections, dims, PathOrder::Ijt)
}

pub fn apply_correction_with(
    frame: &PauliFrame,
    corrections: &CorrectionSet,
    dims: &LatticeDims,
    order: PathOrder,
) -> PauliFrame {
    let mut out = frame.clone();
    for c in corrections {
        for q in correction_path(dims, c, order) {
            out.toggle(q);
        }
    }
    out
}

/// Failure flags indexed `[axis][kind]` with primal first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalFailure {
    pub flags: [[bool; 2]; 3],
}

impl LogicalFailure {
    pub fn get(&self, axis: usize, kind: LatticeKind) -> bool {
        self.flags[axis][kind_slot(kind)]
    }

    pub fn any(&self) -> bool {
        self.flags.iter().flatten().any(|&f| f)
    }
}

fn kind_slot(kind: LatticeKind) -> usize {
    match kind {
        LatticeKind::Primal => 0,
        LatticeKind::Dual => 1,
    }
}

/// Doubled coordinate of the mid-lattice cut plane normal to `axis`.
pub fn cut_plane(dims: &LatticeDims, kind: LatticeKind, axis: usize) -> i32 {
    let half = 2 * (dims.extents()[axis] / 2);
    match kind {
        LatticeKind::Primal => half,
        LatticeKind::Dual => half - 1,
    }
}

fn residual(errors: &ErrorConfiguration, frame: &PauliFrame) -> Vec<QubitSite> {
    errors.z_errors.symmetric_difference(&frame.sites).copied().collect()
}

/// Residual `z_errors ⊕ frame`: fails along an axis for a kind when it
/// crosses that kind's mid-lattice cut plane an odd number of times.
pub fn check_logical_failure(errors: &ErrorConfiguration, frame: &PauliFrame, dims: &LatticeDims) -> LogicalFailure {
    let mut out = LogicalFailure::default();
    for q in residual(errors, frame) {
        let kind = dims.site_class(&q).expect("residual sites lie in the lattice");
        let axis = q.normal_axis(kind);
        if q.coords()[axis] == cut_plane(dims, kind, axis) {
            let f = &mut out.flags[axis][kind_slot(kind)];
            *f = !*f;
        }
    }
    out
}

/// Stricter diagnostic: some face-connected cluster of the residual touches
/// both lattice faces normal to the axis. Unlike the cut test this depends on
/// how corrections are routed, so it is not used for verdicts.
pub fn spanning_failure(errors: &ErrorConfiguration, frame: &PauliFrame, dims: &LatticeDims) -> LogicalFailure {
    let residual = residual(errors, frame);
    let mut parent: Vec<usize> = (0..residual.len()).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut owner: HashMap<CellCoord, usize> = HashMap::new();
    let mut info = Vec::with_capacity(residual.len());
    for (k, q) in residual.iter().enumerate() {
        let (a, b) = dims.qubit_adjacent_cells(q).expect("residual sites lie in the lattice");
        let cells = match b {
            Neighbor::Cell(b) => vec![a, b],
            Neighbor::Boundary => vec![a],
        };
        for c in cells {
            match owner.get(&c) {
                Some(&o) => {
                    let (x, y) = (root(&mut parent, o), root(&mut parent, k));
                    parent[x.max(y)] = x.min(y);
                }
                None => {
                    owner.insert(c, k);
                }
            }
        }
        info.push((a.kind, q.normal_axis(a.kind), b == Neighbor::Boundary));
    }
    // Per cluster root: low and high face reached, per axis.
    let mut clusters: HashMap<usize, (LatticeKind, [(bool, bool); 3])> = HashMap::new();
    for (k, q) in residual.iter().enumerate() {
        let (kind, axis, boundary) = info[k];
        let r = root(&mut parent, k);
        let entry = clusters.entry(r).or_insert((kind, [(false, false); 3]));
        if boundary {
            if q.coords()[axis] < dims.extents()[axis] {
                entry.1[axis].0 = true;
            } else {
                entry.1[axis].1 = true;
            }
        }
    }
    let mut out = LogicalFailure::default();
    for (kind, axes) in clusters.values() {
        for (a, &(lo, hi)) in axes.iter().enumerate() {
            out.flags[a][kind_slot(*kind)] |= lo && hi;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeMode {
    Global,
    Parallel,
    Both,
}

impl DecodeMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "global" => Some(Self::Global),
            "parallel" => Some(Self::Parallel),
            "both" => Some(Self::Both),
            _ => None,
        }
    }

    fn global(self) -> bool {
        self != Self::Parallel
    }

    fn parallel(self) -> bool {
        self != Self::Global
    }
}

/// How detection events are obtained from sampled errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Extraction {
    /// Directly from the error configuration.
    #[default]
    Batch,
    /// Through the simulated detector stream and the streaming accumulator.
    Stream(BaselineMode),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub dims: LatticeDims,
    pub p_z: f64,
    pub p_loss: f64,
    pub m_e: u32,
    /// Window edge for parallel decoding; the table value for `m_e` if unset.
    pub n: Option<i32>,
    pub trials: u64,
    pub seed: u64,
    pub mode: DecodeMode,
    pub extraction: Extraction,
}

impl TrialConfig {
    pub fn new(dims: LatticeDims, p_z: f64, m_e: u32, trials: u64, seed: u64) -> Self {
        Self { dims, p_z, p_loss: 0.0, m_e, n: None, trials, seed, mode: DecodeMode::Global, extraction: Extraction::Batch }
    }

    pub fn window(&self) -> Option<i32> {
        self.n.or_else(|| table_region_size(self.m_e))
    }

    pub fn validate(&self) -> Result<()> {
        ErrorModel::new(self.p_z, self.p_loss, 0)?;
        if self.m_e < 1 {
            return Err(Error::InvalidConfig("m_e must be at least 1".into()));
        }
        if self.mode.parallel() {
            let n = self
                .window()
                .ok_or_else(|| Error::InvalidConfig(format!("no default window edge for m_e = {}", self.m_e)))?;
            if n < 1 {
                return Err(Error::WindowTooSmall(n));
            }
            if n > self.dims.min_extent() {
                return Err(Error::WindowTooLarge { n, min_dim: self.dims.min_extent() });
            }
        }
        Ok(())
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub sample: f64,
    pub extract: f64,
    /// Spatial index, bounded graph and components.
    pub tree: f64,
    pub matching: f64,
    /// Whole window-parallel decode, including its own trees.
    pub parallel: f64,
    pub frame: f64,
}

impl StageTimes {
    fn add(&mut self, o: &StageTimes) {
        self.sample += o.sample;
        self.extract += o.extract;
        self.tree += o.tree;
        self.matching += o.matching;
        self.parallel += o.parallel;
        self.frame += o.frame;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: u64,
    pub seed: u64,
    pub errors: usize,
    pub losses: usize,
    pub events: usize,
    pub components: usize,
    /// Components whose extent exceeds the window edge.
    pub oversize: usize,
    pub max_extent: u32,
    /// Parallel components that needed the global fallback.
    pub fallbacks: usize,
    /// Decoding gave up: loss percolation or an unmatchable component.
    pub gave_up: bool,
    /// Verdict from the global decode; `None` when it did not run or gave up.
    pub failure: Option<LogicalFailure>,
    pub parallel_failure: Option<LogicalFailure>,
    /// Both decoders ran and produced identical corrections.
    pub agree: Option<bool>,
    pub times: StageTimes,
}

impl TrialReport {
    /// An empty report for trial `trial` run with `seed`.
    pub fn new(trial: u64, seed: u64) -> Self {
        Self {
            trial,
            seed,
            errors: 0,
            losses: 0,
            events: 0,
            components: 0,
            oversize: 0,
            max_extent: 0,
            fallbacks: 0,
            gave_up: false,
            failure: None,
            parallel_failure: None,
            agree: None,
            times: StageTimes::default(),
        }
    }

    /// Every component was decoded without leaving its window.
    pub fn bounded(&self) -> bool {
        self.fallbacks == 0 && !self.gave_up
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: u64,
    pub events: u64,
    pub components: u64,
    pub oversize: u64,
    pub fallbacks: u64,
    pub gave_up: u64,
    /// Trials with any failure flag set.
    pub failed: u64,
    pub failures: [[u64; 2]; 3],
    pub compared: u64,
    pub agreed: u64,
    pub times: StageTimes,
}

impl Aggregate {
    pub fn from_reports(reports: &[TrialReport]) -> Self {
        let mut a = Aggregate::default();
        for r in reports {
            a.trials += 1;
            a.events += r.events as u64;
            a.components += r.components as u64;
            a.oversize += r.oversize as u64;
            a.fallbacks += r.fallbacks as u64;
            a.gave_up += r.gave_up as u64;
            if let Some(f) = r.failure.or(r.parallel_failure) {
                a.failed += f.any() as u64;
                for (acc, row) in a.failures.iter_mut().zip(f.flags) {
                    for (x, v) in acc.iter_mut().zip(row) {
                        *x += v as u64;
                    }
                }
            }
            if r.bounded() {
                if let Some(ok) = r.agree {
                    a.compared += 1;
                    a.agreed += ok as u64;
                }
            }
            a.times.add(&r.times);
        }
        a
    }

    pub fn failure_rate(&self) -> f64 {
        let done = self.trials - self.gave_up;
        if done == 0 {
            0.0
        } else {
            self.failed as f64 / done as f64
        }
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// One Monte Carlo trial with its own derived seed.
pub fn run_trial(config: &TrialConfig, trial: u64) -> Result<TrialReport> {
    let dims = &config.dims;
    let seed = trial_seed(config.seed, trial);
    let mut report = TrialReport::new(trial, seed);

    let t = Instant::now();
    let errors = sample_errors(dims, &ErrorModel::new(config.p_z, config.p_loss, seed)?)?;
    report.times.sample = secs(t);
    report.errors = errors.z_errors.len();
    report.losses = errors.losses.len();

    let t = Instant::now();
    let events = match config.extraction {
        Extraction::Batch => events_from_errors(dims, &errors),
        Extraction::Stream(mode) => {
            let baseline = Baseline { mode, seed: seed ^ 0x5eed };
            extract_detection_events(dims, baseline, measurement_stream(dims, &errors, baseline))
        }
    };
    report.times.extract = secs(t);
    let events = match events {
        Ok(e) => e,
        Err(Error::LossPercolation) => {
            report.gave_up = true;
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    decode_events(config, &events, Some(&errors), &mut report)?;
    Ok(report)
}

/// Corrections from each decoder that ran; `None` where it gave up or did not run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decoded {
    pub global: Option<CorrectionSet>,
    pub parallel: Option<CorrectionSet>,
}

/// Decode `events` with the decoders selected by `config.mode`, filling the
/// decode fields and stage times of `report`. Failure verdicts need the
/// sampled errors and stay unset without them.
pub fn decode_events(
    config: &TrialConfig,
    events: &[DetectionEvent],
    errors: Option<&ErrorConfiguration>,
    report: &mut TrialReport,
) -> Result<Decoded> {
    let dims = &config.dims;
    let times = &mut report.times;
    report.events = events.len();

    let window = config.window().unwrap_or(i32::MAX);
    let mut global: Option<CorrectionSet> = Some(CorrectionSet::new());
    for kind in LatticeKind::BOTH {
        let t = Instant::now();
        let g = build_bounded_graph(dims, &kind_cells(events, kind), config.m_e)?;
        let comps = connected_components(&g);
        times.tree += secs(t);
        report.components += comps.len();
        for c in &comps {
            let e = component_extent(&g, c)?;
            report.max_extent = report.max_extent.max(e);
            report.oversize += (e as i64 > window as i64) as usize;
        }
        if !config.mode.global() {
            continue;
        }
        let t = Instant::now();
        for c in &comps {
            let Some(set) = global.as_mut() else { break };
            match match_component(&g, c) {
                Ok(found) => set.extend(found),
                Err(Error::Unmatchable { .. }) => global = None,
                Err(e) => return Err(e),
            }
        }
        times.matching += secs(t);
    }
    if !config.mode.global() {
        global = None;
    }

    let mut parallel = None;
    if config.mode.parallel() {
        let t = Instant::now();
        match decode_parallel(dims, events, config.m_e, window) {
            Ok(p) => {
                report.fallbacks = p.fallbacks;
                parallel = Some(p.corrections);
            }
            Err(Error::Unmatchable { .. }) => {}
            Err(e) => return Err(e),
        }
        times.parallel = secs(t);
    }

    let t = Instant::now();
    if let Some(errors) = errors {
        let verdict =
            |c: &CorrectionSet| check_logical_failure(errors, &apply_correction(&PauliFrame::new(), c, dims), dims);
        report.failure = global.as_ref().map(verdict);
        report.parallel_failure = parallel.as_ref().map(verdict);
    }
    report.gave_up |= (config.mode.global() && global.is_none()) || (config.mode.parallel() && parallel.is_none());
    if let (DecodeMode::Both, Some(g), Some(p)) = (config.mode, &global, &parallel) {
        report.agree = Some(g == p);
    }
    times.frame = secs(t);
    Ok(Decoded { global, parallel })
}

/// Run all trials in parallel; reports come back in trial order.
pub fn run_trials(config: &TrialConfig) -> Result<(Vec<TrialReport>, Aggregate)> {
    config.validate()?;
    let reports = (0..config.trials).into_par_iter().map(|k| run_trial(config, k)).collect::<Result<Vec<_>>>()?;
    let agg = Aggregate::from_reports(&reports);
    Ok((reports, agg))
}
