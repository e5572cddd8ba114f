//! Sizing mathematics: failure model, component statistics, window size,
//! clock-cycle and instance-count estimates, and stage benchmarks.

use crate::error::{Error, Result};
use crate::errorsim::{sample_errors, ErrorModel};
use crate::lattice::{LatticeDims, LatticeKind};
use crate::matcher::minimum_weight_matching;
use crate::matchprep::{build_bounded_graph, component_extent, connected_components, events_of_kind};
use crate::rng::{instance_seed, trial_seed};
use crate::syndrome::events_from_errors;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::time::Instant;

pub const DEFAULT_P_TH: f64 = 0.0061;

/// Reference window edges for `m_e = 4..=10`.
const TABLE_REGION_SIZE: [i32; 7] = [10, 15, 23, 32, 44, 62, 81];

pub fn table_region_size(m_e: u32) -> Option<i32> {
    (4..=10).contains(&m_e).then(|| TABLE_REGION_SIZE[m_e as usize - 4])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApproxMode {
    /// `Ω = 10^(-2 m_e)`, with `p / p_th` rounded to `1/100`.
    Rounded,
    /// `Ω = (p / p_th)^m_e`.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    pub p: f64,
    pub p_th: f64,
    pub m_e: u32,
    pub mode: ApproxMode,
}

impl FailureModel {
    pub fn new(p: f64, m_e: u32, mode: ApproxMode) -> Result<Self> {
        let m = Self { p, p_th: DEFAULT_P_TH, m_e, mode };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < self.p_th) {
            return Err(Error::InvalidConfig(format!("need 0 < p < p_th, got p = {} p_th = {}", self.p, self.p_th)));
        }
        if self.m_e < 1 {
            return Err(Error::InvalidConfig("m_e must be at least 1".into()));
        }
        Ok(())
    }

    /// Failure probability of one layer of one logical qubit.
    pub fn omega(&self) -> f64 {
        match self.mode {
            ApproxMode::Rounded => 10f64.powi(-2 * self.m_e as i32),
            ApproxMode::Exact => (self.p / self.p_th).powi(self.m_e as i32),
        }
    }

    /// Layers consumed by one logical CNOT.
    pub fn lambda(&self) -> f64 {
        20.0 * self.m_e as f64
    }

    /// Cells in the volume of one logical CNOT.
    pub fn cnot_volume(&self) -> f64 {
        250.0 * (self.m_e as f64).powi(3)
    }
}

/// `1 - (1 - Ω)^λ`, accurate for tiny `Ω`.
pub fn failure_from(omega: f64, lambda: f64) -> f64 {
    -(lambda * (-omega).ln_1p()).exp_m1()
}

pub fn logical_cnot_failure(model: &FailureModel) -> f64 {
    failure_from(model.omega(), model.lambda())
}

/// Decimal exponent of `p` written in scientific notation to three
/// significant figures.
pub fn order_of_magnitude(p: f64) -> i32 {
    let s = format!("{p:.2e}");
    s[s.find('e').unwrap() + 1..].parse().unwrap()
}

/// Counts indexed by component extent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn add(&mut self, extent: u32) {
        let e = extent as usize;
        if self.counts.len() <= e {
            self.counts.resize(e + 1, 0);
        }
        self.counts[e] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Extent of the most populated bin, the smallest on ties.
    pub fn peak(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap())
    }

    /// Frequencies relative to the peak bin.
    pub fn relative(&self) -> Vec<f64> {
        let top = self.peak().map_or(0, |k| self.counts[k]);
        self.counts.iter().map(|&c| if top == 0 { 0.0 } else { c as f64 / top as f64 }).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("extent,count,relative\n");
        for (e, (c, r)) in self.counts.iter().zip(self.relative()).enumerate() {
            writeln!(s, "{e},{c},{r:.6e}").unwrap();
        }
        s
    }
}

/// `P(n) ≈ α exp(-β n)` over the decay region of a histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub alpha: f64,
    pub beta: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r2: f64,
    /// Inclusive range of extents used.
    pub first: usize,
    pub last: usize,
}

pub const MIN_TAIL_COUNT: u64 = 5;

/// Least squares on `ln P` over the decay region: from the largest bin past
/// the main peak up to the first bin with fewer than `min_count` entries.
pub fn fit_tail(hist: &Histogram, min_count: u64) -> Result<TailFit> {
    let Some(peak) = hist.peak() else { return Err(Error::InsufficientTail { bins: 0 }) };
    let rel = hist.relative();
    let tail = &hist.counts[peak + 1..];
    let Some(top) = tail.iter().max().map(|&m| peak + 1 + tail.iter().position(|&c| c == m).unwrap()) else {
        return Err(Error::InsufficientTail { bins: 0 });
    };
    let pts: Vec<(f64, f64)> = (top..hist.counts.len())
        .take_while(|&e| hist.counts[e] >= min_count)
        .map(|e| (e as f64, rel[e].ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientTail { bins: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(TailFit { alpha: icpt.exp(), beta: -slope, r2, first: top, last: top + pts.len() - 1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDistribution {
    pub histogram: Histogram,
    pub fit: Option<TailFit>,
    pub components: u64,
    pub trials: u64,
}

/// Extent histogram of all bounded-graph components, both lattice kinds,
/// pooled over `trials` independent error samples.
pub fn component_distribution(dims: &LatticeDims, p: f64, m_e: u32, trials: u64, seed: u64) -> Result<ComponentDistribution> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    ErrorModel::phase_only(p, 0)?;
    let histogram = (0..trials)
        .into_par_iter()
        .map(|k| -> Result<Histogram> {
            let errors = sample_errors(dims, &ErrorModel::phase_only(p, trial_seed(seed, k))?)?;
            let events = events_from_errors(dims, &errors)?;
            let mut h = Histogram::default();
            for kind in LatticeKind::BOTH {
                let g = build_bounded_graph(dims, &events_of_kind(events.iter().map(|e| e.cell), kind), m_e)?;
                for c in connected_components(&g) {
                    h.add(component_extent(&g, &c)?);
                }
            }
            Ok(h)
        })
        .try_reduce(Histogram::default, |mut a, b| {
            a.merge(&b);
            Ok(a)
        })?;
    let fit = fit_tail(&histogram, MIN_TAIL_COUNT).ok();
    Ok(ComponentDistribution { components: histogram.total(), histogram, fit, trials })
}

/// Largest shortest-path distance between two nodes of a connected weighted
/// graph given as `(u, v, w)` edges over `0..n`.
pub fn max_graph_diameter(n: usize, edges: &[(usize, usize, u32)]) -> Result<u64> {
    if n == 0 {
        return Err(Error::EmptyComponent);
    }
    const INF: u64 = u64::MAX / 4;
    let mut d = vec![INF; n * n];
    for u in 0..n {
        d[u * n + u] = 0;
    }
    for &(u, v, w) in edges {
        let w = w as u64;
        if w < d[u * n + v] {
            d[u * n + v] = w;
            d[v * n + u] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == INF {
                continue;
            }
            for j in 0..n {
                let via = dik + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    let max = *d.iter().max().unwrap();
    if max >= INF {
        return Err(Error::Disconnected);
    }
    Ok(max)
}

/// Scale factor in front of `P(n)` when solving for the window edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RegionForm {
    /// `6 p · 250 m_e³`: expected isolated errors in one CNOT volume.
    #[default]
    Full,
    /// `1500 p`, the closed form without the `m_e³` factor.
    Constant,
}

/// Real-valued solution of `scale · α · exp(-β n) = p_L`.
pub fn region_size_real(model: &FailureModel, fit: &TailFit, form: RegionForm) -> Result<f64> {
    if !(fit.beta > 0.0 && fit.alpha > 0.0) {
        return Err(Error::RegionSize(format!("fit must have positive α and β, got α = {} β = {}", fit.alpha, fit.beta)));
    }
    let scale = match form {
        RegionForm::Full => 6.0 * model.p * model.cnot_volume(),
        RegionForm::Constant => 1500.0 * model.p,
    };
    let p_l = logical_cnot_failure(model);
    if p_l <= 0.0 {
        return Err(Error::RegionSize("logical failure probability is zero".into()));
    }
    let arg = p_l / (scale * fit.alpha);
    if arg >= 1.0 {
        return Err(Error::RegionSize(format!("p_L = {p_l:e} exceeds the fitted scale {:e}", scale * fit.alpha)));
    }
    Ok(-arg.ln() / fit.beta)
}

pub fn solve_region_size(model: &FailureModel, fit: &TailFit, form: RegionForm) -> Result<i32> {
    Ok(region_size_real(model, fit, form)?.ceil() as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Tree,
    Matching,
}

/// Processing time per stage as a function of volume edge length.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingCurve {
    /// Ascending edge lengths.
    pub edges: Vec<f64>,
    pub tree: Vec<f64>,
    pub matching: Vec<f64>,
}

impl TimingCurve {
    pub fn new(mut points: Vec<(f64, f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            edges: points.iter().map(|p| p.0).collect(),
            tree: points.iter().map(|p| p.1).collect(),
            matching: points.iter().map(|p| p.2).collect(),
        }
    }

    fn series(&self, s: Stage) -> &[f64] {
        match s {
            Stage::Tree => &self.tree,
            Stage::Matching => &self.matching,
        }
    }

    /// Piecewise-linear value at `edge`; `extrapolate` extends the end segments.
    pub fn eval(&self, s: Stage, edge: f64, extrapolate: bool) -> Result<f64> {
        let (xs, ys) = (&self.edges, self.series(s));
        let (Some(&min), Some(&max)) = (xs.first(), xs.last()) else {
            return Err(Error::Extrapolation { edge, min: f64::NAN, max: f64::NAN });
        };
        let outside = edge < min || edge > max;
        if outside && (!extrapolate || xs.len() < 2) {
            return Err(Error::Extrapolation { edge, min, max });
        }
        if xs.len() == 1 {
            return Ok(ys[0]);
        }
        let k = xs.partition_point(|&x| x <= edge).clamp(1, xs.len() - 1);
        let (x0, x1, y0, y1) = (xs[k - 1], xs[k], ys[k - 1], ys[k]);
        Ok(y0 + (y1 - y0) * (edge - x0) / (x1 - x0))
    }

    pub fn is_monotone(&self, s: Stage) -> bool {
        self.series(s).windows(2).all(|w| w[0] <= w[1])
    }
}

/// `t(3n) / 2n` on the slower stage.
pub fn min_clock_cycle(curve: &TimingCurve, n: i32) -> Result<f64> {
    clock_cycle(curve, n, false)
}

/// As [`min_clock_cycle`], extrapolating linearly when `3n` is off the curve;
/// the flag reports whether that happened.
pub fn min_clock_cycle_flagged(curve: &TimingCurve, n: i32) -> Result<(f64, bool)> {
    let edge = 3.0 * n as f64;
    let outside = curve.edges.first().is_none_or(|&lo| edge < lo) || curve.edges.last().is_none_or(|&hi| edge > hi);
    Ok((clock_cycle(curve, n, true)?, outside))
}

fn clock_cycle(curve: &TimingCurve, n: i32, extrapolate: bool) -> Result<f64> {
    let edge = 3.0 * n as f64;
    let t = curve.eval(Stage::Tree, edge, extrapolate)?.max(curve.eval(Stage::Matching, edge, extrapolate)?);
    Ok(t / (2.0 * n as f64))
}

/// Classical processing instances needed per logical qubit.
pub fn instances_per_qubit(m_e: u32, n: i32) -> f64 {
    let d = 2.0 * m_e as f64;
    4.0 * (2.0 * d + d / 2.0) * (d + d / 4.0) / (n as f64).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub edges: Vec<i32>,
    pub m_e: Vec<u32>,
    pub p: f64,
    pub trials: u64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { edges: (35..=155).step_by(20).collect(), m_e: (4..=10).collect(), p: 1e-4, trials: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub m_e: u32,
    pub edge: i32,
    /// Mean seconds per volume.
    pub tree: f64,
    pub matching: f64,
    pub events: f64,
}

/// Time tree creation and matching on single full volumes, serially. Every
/// `m_e` is timed on the same error samples, interleaved per sample.
pub fn benchmark_stages(config: &BenchConfig) -> Result<Vec<BenchPoint>> {
    if config.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let mut out = Vec::new();
    for &edge in &config.edges {
        let dims = LatticeDims::cube(edge)?;
        let mut tree = vec![0.0; config.m_e.len()];
        let mut matching = vec![0.0; config.m_e.len()];
        let mut events = 0usize;
        for k in 0..config.trials {
            let seed = instance_seed(config.seed ^ edge as u64, k);
            let errors = sample_errors(&dims, &ErrorModel::phase_only(config.p, seed)?)?;
            let evs = events_from_errors(&dims, &errors)?;
            events += evs.len();
            let by_kind = LatticeKind::BOTH.map(|kind| events_of_kind(evs.iter().map(|e| e.cell), kind));
            for (slot, &m_e) in config.m_e.iter().enumerate() {
                for cells in &by_kind {
                    let t = Instant::now();
                    let g = build_bounded_graph(&dims, cells, m_e)?;
                    let comps = connected_components(&g);
                    tree[slot] += t.elapsed().as_secs_f64();
                    let t = Instant::now();
                    for c in &comps {
                        match minimum_weight_matching(&g.problem(c)) {
                            Ok(_) | Err(Error::Unmatchable { .. }) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    matching[slot] += t.elapsed().as_secs_f64();
                }
            }
        }
        let n = config.trials as f64;
        for (slot, &m_e) in config.m_e.iter().enumerate() {
            out.push(BenchPoint { m_e, edge, tree: tree[slot] / n, matching: matching[slot] / n, events: events as f64 / n });
        }
    }
    out.sort_by_key(|p| (p.m_e, p.edge));
    Ok(out)
}

/// Curve for one `m_e` from benchmark points.
pub fn curve_for(points: &[BenchPoint], m_e: u32) -> TimingCurve {
    TimingCurve::new(points.iter().filter(|p| p.m_e == m_e).map(|p| (p.edge as f64, p.tree, p.matching)).collect())
}

pub fn bench_csv(points: &[BenchPoint]) -> String {
    let mut s = String::from("m_e,edge,volume,events,tree_s,matching_s\n");
    for p in points {
        writeln!(s, "{},{},{},{:.2},{:.6e},{:.6e}", p.m_e, p.edge, (p.edge as i64).pow(3), p.events, p.tree, p.matching)
            .unwrap();
    }
    s
}

/// One row of the sizing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub m_e: u32,
    pub d: u32,
    pub p_l: f64,
    pub p_l_exponent: i32,
    pub n: i32,
    /// Window edge solved from a tail fit, when one was given.
    pub n_solved: Option<f64>,
    pub instances: f64,
    /// Window depth `2n` in cells.
    pub window_cells: i32,
    pub t_min: Option<f64>,
    pub t_min_extrapolated: bool,
    /// `2n · T_min` in seconds.
    pub window_secs: Option<f64>,
}

pub fn plan_row(
    model: &FailureModel,
    n: Option<i32>,
    fit: Option<&TailFit>,
    form: RegionForm,
    curve: Option<&TimingCurve>,
) -> Result<PlanRow> {
    model.validate()?;
    let p_l = logical_cnot_failure(model);
    let n_solved = fit.map(|f| region_size_real(model, f, form)).transpose()?;
    let n = match (n, n_solved, table_region_size(model.m_e)) {
        (Some(n), _, _) => n,
        (None, Some(x), _) => x.ceil() as i32,
        (None, None, Some(n)) => n,
        _ => return Err(Error::InvalidConfig(format!("no window edge for m_e = {}", model.m_e))),
    };
    let clock = curve.map(|c| min_clock_cycle_flagged(c, n)).transpose()?;
    Ok(PlanRow {
        m_e: model.m_e,
        d: 2 * model.m_e,
        p_l,
        p_l_exponent: order_of_magnitude(p_l),
        n,
        n_solved,
        instances: instances_per_qubit(model.m_e, n),
        window_cells: 2 * n,
        t_min: clock.map(|c| c.0),
        t_min_extrapolated: clock.is_some_and(|c| c.1),
        window_secs: clock.map(|c| c.0 * 2.0 * n as f64),
    })
}

pub fn plan_csv(rows: &[PlanRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6e}"));
    let mut s = String::from("m_e,d,p_L,p_L_exponent,n,n_solved,instances,window_cells,t_min_s,t_min_extrapolated,window_s\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{:.3e},{},{},{},{:.4},{},{},{},{}",
            r.m_e,
            r.d,
            r.p_l,
            r.p_l_exponent,
            r.n,
            r.n_solved.map_or(String::new(), |x| format!("{x:.3}")),
            r.instances,
            r.window_cells,
            opt(r.t_min),
            r.t_min_extrapolated,
            opt(r.window_secs)
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rounded(m_e: u32) -> FailureModel {
        FailureModel::new(1e-4, m_e, ApproxMode::Rounded).unwrap()
    }

    #[test]
    fn cnot_failure_examples() {
        assert!((logical_cnot_failure(&rounded(4)) - 8.0e-7).abs() < 1e-12);
        assert!((logical_cnot_failure(&rounded(10)) / 2.0e-18 - 1.0).abs() < 1e-9);
        assert_eq!(failure_from(0.0, 80.0), 0.0);
        // Naive evaluation agrees where it is still accurate.
        let naive = 1.0 - (1.0f64 - 1e-3).powf(40.0);
        assert!((failure_from(1e-3, 40.0) - naive).abs() < 1e-14);
    }

    #[test]
    fn exponents_by_m_e() {
        let want = [-7, -8, -10, -12, -14, -16, -18];
        for (m_e, w) in (4..=10).zip(want) {
            assert_eq!(order_of_magnitude(logical_cnot_failure(&rounded(m_e))), w, "m_e {m_e}");
        }
    }

    #[test]
    fn exact_mode_uses_threshold_ratio() {
        let m = FailureModel::new(6.1e-4, 3, ApproxMode::Exact).unwrap();
        assert!((m.omega() - 1e-3).abs() < 1e-15);
        assert!(FailureModel::new(0.01, 3, ApproxMode::Exact).is_err());
        assert!(FailureModel::new(1e-4, 0, ApproxMode::Rounded).is_err());
    }

    proptest! {
        #[test]
        fn failure_increases_in_omega_and_lambda(o in 1e-12f64..1e-2, l in 1.0f64..500.0, f in 1.01f64..3.0) {
            prop_assert!(failure_from(o * f, l) > failure_from(o, l));
            prop_assert!(failure_from(o, l * f) > failure_from(o, l));
        }
    }

    #[test]
    fn instance_counts() {
        assert!((instances_per_qubit(6, 23) - 1800.0 / 529.0).abs() < 1e-12);
        assert!((instances_per_qubit(6, 23) - 3.40).abs() < 0.005);
        assert!((instances_per_qubit(10, 81) - 0.762).abs() < 0.0005);
        assert!((instances_per_qubit(4, 10) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn table_lookup() {
        assert_eq!(table_region_size(6), Some(23));
        assert_eq!(table_region_size(3), None);
        assert_eq!(table_region_size(11), None);
    }

    fn exp_hist(alpha: f64, beta: f64, top: f64) -> Histogram {
        let mut h = Histogram::default();
        h.counts.push(top as u64 / 10);
        h.counts.push(top as u64);
        for e in 2..12 {
            h.counts.push((top * alpha * (-beta * e as f64).exp()).round() as u64);
        }
        h
    }

    #[test]
    fn fit_recovers_exponential() {
        let h = exp_hist(0.5, 0.7, 1e9);
        assert_eq!(h.peak(), Some(1));
        let f = fit_tail(&h, 5).unwrap();
        assert!((f.beta - 0.7).abs() < 1e-3, "{f:?}");
        assert!((f.alpha - 0.5).abs() < 1e-2, "{f:?}");
        assert!(f.r2 > 0.9999);
        assert_eq!(f.first, 2);
    }

    #[test]
    fn fit_starts_at_the_tail_maximum() {
        let mut h = exp_hist(0.5, 0.7, 1e9);
        h.counts[2] /= 4;
        let f = fit_tail(&h, 5).unwrap();
        assert_eq!(f.first, 3);
        assert!((f.beta - 0.7).abs() < 1e-3, "{f:?}");
    }

    #[test]
    fn short_tail_is_rejected() {
        let mut h = Histogram::default();
        for e in [0, 1, 1, 1, 2, 2] {
            h.add(e);
        }
        assert!(matches!(fit_tail(&h, 1), Err(Error::InsufficientTail { bins: 1 })));
        assert!(matches!(fit_tail(&Histogram::default(), 1), Err(Error::InsufficientTail { bins: 0 })));
    }

    #[test]
    fn histogram_merge_is_order_free() {
        let mut a = Histogram::default();
        let mut b = Histogram::default();
        [3, 1, 1].into_iter().for_each(|e| a.add(e));
        [0, 5].into_iter().for_each(|e| b.add(e));
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.counts, vec![1, 2, 0, 1, 0, 1]);
    }

    #[test]
    fn sparse_limit_is_mostly_pairs() {
        let d = LatticeDims::cube(20).unwrap();
        let cd = component_distribution(&d, 1e-5, 4, 200, 3).unwrap();
        let h = &cd.histogram;
        let small = h.counts.iter().take(2).sum::<u64>();
        assert!(cd.components > 50);
        assert!(small as f64 >= 0.95 * cd.components as f64, "{h:?}");
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(max_graph_diameter(1, &[]).unwrap(), 0);
        assert_eq!(max_graph_diameter(3, &[(0, 1, 1), (1, 2, 1)]).unwrap(), 2);
        assert_eq!(max_graph_diameter(3, &[(0, 1, 4), (1, 2, 1), (0, 2, 2)]).unwrap(), 3);
        assert!(matches!(max_graph_diameter(3, &[(0, 1, 1)]), Err(Error::Disconnected)));
        assert!(matches!(max_graph_diameter(0, &[]), Err(Error::EmptyComponent)));
    }

    /// Dijkstra-free oracle: Bellman-Ford from every source.
    fn diameter_oracle(n: usize, edges: &[(usize, usize, u32)]) -> Option<u64> {
        let mut best = 0;
        for s in 0..n {
            let mut d = vec![u64::MAX; n];
            d[s] = 0;
            for _ in 0..n {
                for &(u, v, w) in edges {
                    for (a, b) in [(u, v), (v, u)] {
                        if d[a] != u64::MAX && d[a] + (w as u64) < d[b] {
                            d[b] = d[a] + w as u64;
                        }
                    }
                }
            }
            best = best.max(*d.iter().max().unwrap());
        }
        (best != u64::MAX).then_some(best)
    }

    proptest! {
        #[test]
        fn diameter_matches_oracle(n in 1usize..9, raw in prop::collection::vec((0usize..9, 0usize..9, 1u32..7), 0..20)) {
            let edges: Vec<_> = raw.into_iter().filter(|e| e.0 < n && e.1 < n && e.0 != e.1).collect();
            let got = max_graph_diameter(n, &edges).ok();
            prop_assert_eq!(got, diameter_oracle(n, &edges));
        }

        #[test]
        fn diameter_dominates_extent(seed in any::<u64>()) {
            let d = LatticeDims::cube(10).unwrap();
            let e = sample_errors(&d, &ErrorModel::phase_only(0.01, seed).unwrap()).unwrap();
            let evs = events_from_errors(&d, &e).unwrap();
            for kind in LatticeKind::BOTH {
                let g = build_bounded_graph(&d, &events_of_kind(evs.iter().map(|e| e.cell), kind), 3).unwrap();
                for c in connected_components(&g) {
                    let p = g.problem(&c);
                    let diam = max_graph_diameter(p.events.len(), &p.edges).unwrap();
                    prop_assert!(diam >= component_extent(&g, &c).unwrap() as u64);
                }
            }
        }
    }

    #[test]
    fn region_size_scaling() {
        let m = rounded(6);
        let fit = TailFit { alpha: 0.3, beta: 0.8, r2: 1.0, first: 2, last: 9 };
        let n1 = region_size_real(&m, &fit, RegionForm::Full).unwrap();
        let n2 = region_size_real(&m, &TailFit { beta: 1.6, ..fit }, RegionForm::Full).unwrap();
        assert!((n1 / n2 - 2.0).abs() < 1e-12);
        // 6 p 250 m_e^3 α e^{-βn} = p_L at the solution.
        let back = 6.0 * 1e-4 * 250.0 * 216.0 * 0.3 * (-0.8 * n1).exp();
        assert!((back / logical_cnot_failure(&m) - 1.0).abs() < 1e-9);
        assert_eq!(solve_region_size(&m, &fit, RegionForm::Full).unwrap(), n1.ceil() as i32);
        let constant = region_size_real(&m, &fit, RegionForm::Constant).unwrap();
        assert!(constant < n1);
        let huge = TailFit { alpha: 1e-20, ..fit };
        assert!(matches!(solve_region_size(&m, &huge, RegionForm::Full), Err(Error::RegionSize(_))));
    }

    #[test]
    fn clock_cycle_examples() {
        // t(3n) = 2n microseconds.
        let curve = TimingCurve::new((1..=40).map(|e| (e as f64 * 3.0, e as f64 * 2e-6, e as f64 * 1e-6)).collect());
        for n in [5, 10, 23] {
            assert!((min_clock_cycle(&curve, n).unwrap() - 1e-6).abs() < 1e-15);
        }
        let half = TimingCurve::new(vec![(0.0, 0.0, 0.0), (300.0, 1e-4, 5e-5)]);
        assert!((min_clock_cycle(&half, 10).unwrap() - 1e-5 / 20.0).abs() < 1e-18);
        assert!(matches!(min_clock_cycle(&half, 101), Err(Error::Extrapolation { .. })));
        let (t, flagged) = min_clock_cycle_flagged(&half, 200).unwrap();
        assert!(flagged);
        assert!((t - 2e-4 / 400.0).abs() < 1e-15);
        assert!(!min_clock_cycle_flagged(&half, 50).unwrap().1);
    }

    #[test]
    fn plan_row_columns() {
        let r = plan_row(&rounded(6), None, None, RegionForm::Full, None).unwrap();
        assert_eq!((r.n, r.window_cells, r.p_l_exponent), (23, 46, -10));
        assert!((r.instances - 3.40).abs() < 0.005);
        let csv = plan_csv(&[r]);
        assert_eq!(csv.lines().count(), 2);
        assert!(plan_row(&rounded(3), None, None, RegionForm::Full, None).is_err());
    }

    #[test]
    fn benchmark_runs_small() {
        let cfg = BenchConfig { edges: vec![6, 10], m_e: vec![2], p: 0.01, trials: 3, seed: 1 };
        let pts = benchmark_stages(&cfg).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| p.tree >= 0.0 && p.matching >= 0.0 && p.events > 0.0));
        assert_eq!(bench_csv(&pts).lines().count(), 3);
    }
}
