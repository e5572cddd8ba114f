//! End-to-end acceptance checks. Each test prints a single `PASS`/`FAIL`
//! line; run with `--nocapture` to see them.

use cluster_qec::analysis::{
    benchmark_stages, component_distribution, curve_for, instances_per_qubit, logical_cnot_failure, order_of_magnitude,
    solve_region_size, ApproxMode, BenchConfig, FailureModel, RegionForm, Stage,
};
use cluster_qec::errorsim::{measurement_stream, Baseline, ErrorConfiguration, ErrorModel};
use cluster_qec::lattice::{cell_distance, CellCoord, LatticeDims, LatticeKind, Neighbor, QubitSite};
use cluster_qec::matcher::{brute_force_matching, minimum_weight_matching};
use cluster_qec::matchprep::{build_bounded_graph, Component};
use cluster_qec::pipeline::{
    apply_correction, decode_global, spanning_failure, DecodeMode, PauliFrame, TrialConfig,
};
use cluster_qec::syndrome::{events_from_errors, extract_detection_events, form_supercell, DetectionEvent};
use cluster_qec::{errorsim, pipeline, Error};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::Instant;

/// Criteria run one at a time so the timing benchmark sees an idle machine.
static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("[criterion {id:>2}] {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn stream_events(dims: &LatticeDims, errors: &ErrorConfiguration, baseline: Baseline) -> Vec<DetectionEvent> {
    extract_detection_events(dims, baseline, measurement_stream(dims, errors, baseline)).unwrap()
}

fn interior_sites(dims: &LatticeDims) -> Vec<QubitSite> {
    dims.sites().filter(|q| matches!(dims.qubit_adjacent_cells(q).unwrap().1, Neighbor::Cell(_))).collect()
}

#[test]
fn c01_parity_conservation() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let dims = LatticeDims::cube(20).unwrap();
    let none = ErrorConfiguration::default();
    let events: usize = (0..10_000u64)
        .into_par_iter()
        .map(|k| {
            let b = if k % 2 == 0 { Baseline::all_even(k) } else { Baseline::random(k) };
            stream_events(&dims, &none, b).len()
        })
        .sum();
    let secs = t.elapsed().as_secs_f64();
    report(1, "parity conservation", events == 0, format!("{events} events over 10^4 error-free trials in {secs:.1}s"));
}

#[test]
fn c02_single_error_locality() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dims = LatticeDims::cube(6).unwrap();
    let sites = interior_sites(&dims);
    let bad: Vec<QubitSite> = sites
        .par_iter()
        .filter(|q| {
            let e = ErrorConfiguration::with_z_errors([**q]);
            let evs = stream_events(&dims, &e, Baseline::random(q.x as u64 * 131 + q.y as u64 * 17 + q.z as u64));
            let kind = dims.site_class(q).unwrap();
            !(evs.len() == 2
                && evs.iter().all(|e| e.cell.kind == kind && e.supercell_members.is_none())
                && cell_distance(&evs[0].cell, &evs[1].cell) == Ok(1))
        })
        .copied()
        .collect();
    report(2, "single-error locality", bad.is_empty(), format!("{} interior sites, {} violations", sites.len(), bad.len()));
}

#[test]
fn c03_chain_endpoints() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dims = LatticeDims::cube(12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for k in 0..1000u64 {
        let kind = *LatticeKind::BOTH.choose(&mut rng).unwrap();
        let axis = rng.gen_range(0..3);
        let len = rng.gen_range(2..=6);
        let mut start = [0; 3];
        for (a, s) in start.iter_mut().enumerate() {
            let (lo, hi) = dims.cell_range(kind, a);
            *s = if a == axis { rng.gen_range(lo..=hi - len) } else { rng.gen_range(lo..=hi) };
        }
        let cells: Vec<CellCoord> = (0..=len)
            .map(|s| {
                let mut p = start;
                p[axis] += s;
                CellCoord::with_index(kind, p)
            })
            .collect();
        let faces = cells.windows(2).map(|w| {
            let (a, b) = (w[0].centre(), w[1].centre());
            QubitSite::from_coords([0, 1, 2].map(|i| (a[i] + b[i]) / 2))
        });
        let e = ErrorConfiguration::with_z_errors(faces);
        let evs = stream_events(&dims, &e, Baseline::random(k));
        let got: BTreeSet<_> = evs.iter().map(|e| e.cell).collect();
        let want: BTreeSet<_> = [cells[0], cells[len as usize]].into_iter().collect();
        let dist_ok = evs.len() == 2 && cell_distance(&evs[0].cell, &evs[1].cell) == Ok(len as u32);
        if !(got == want && dist_ok) {
            bad += 1;
        }
    }
    report(3, "chain endpoints", bad == 0, format!("1000 chains, {bad} violations"));
}

#[test]
fn c04_loss_supercell() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dims = LatticeDims::cube(6).unwrap();
    let sites = interior_sites(&dims);
    let bad: Vec<QubitSite> = sites
        .par_iter()
        .filter(|q| {
            let e = ErrorConfiguration::with_losses([**q]);
            let sc = form_supercell(&dims, &e.losses, q).unwrap();
            let stream = measurement_stream(&dims, &e, Baseline::all_even(1));
            let parity = sc.sites.iter().fold(0u8, |acc, s| acc ^ stream.frame(s.z).bit(s.x, s.y).unwrap());
            let random = Baseline::random(q.x as u64 ^ (q.z as u64) << 8);
            let ok = sc.sites.len() == 10
                && sc.cells.len() == 2
                && !sc.sites.contains(q)
                && parity == 0
                && stream_events(&dims, &e, Baseline::all_even(1)).is_empty()
                && stream_events(&dims, &e, random).is_empty();
            !ok
        })
        .copied()
        .collect();
    report(4, "loss supercell", bad.is_empty(), format!("{} interior losses, {} violations", sites.len(), bad.len()));
}

#[test]
fn c05_matcher_exactness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let dims = LatticeDims::cube(10).unwrap();
    let all: Vec<CellCoord> = dims.cells(LatticeKind::Primal).collect();
    let results: Vec<(bool, bool)> = (0..10_000u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let m_e = [4, 6, 10][(k % 3) as usize];
            let n = rng.gen_range(4..=12);
            let cells: Vec<CellCoord> = all.choose_multiple(&mut rng, n).copied().collect();
            let g = build_bounded_graph(&dims, &cells, m_e).unwrap();
            let problem = g.problem(&Component { nodes: (0..n).collect() });
            match (minimum_weight_matching(&problem), brute_force_matching(&problem)) {
                (Ok(a), Ok(b)) => (a.total_weight == b.total_weight, true),
                (Err(Error::Unmatchable { .. }), Err(Error::Unmatchable { .. })) => (true, false),
                _ => (false, false),
            }
        })
        .collect();
    let agree = results.iter().filter(|r| r.0).count();
    let matched = results.iter().filter(|r| r.1).count();
    let secs = t.elapsed().as_secs_f64();
    report(
        5,
        "matcher exactness",
        agree == results.len(),
        format!("{agree}/{} agree ({matched} matchable) in {secs:.1}s", results.len()),
    );
}

#[test]
fn c06_parallel_equals_global() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut cfg = TrialConfig::new(LatticeDims::cube(60).unwrap(), 1e-4, 6, 1000, 6);
    cfg.n = Some(23);
    cfg.mode = DecodeMode::Both;
    let (reports, agg) = pipeline::run_trials(&cfg).unwrap();
    let bounded = reports.iter().filter(|r| r.bounded()).count();
    let pass = agg.compared == bounded as u64 && agg.agreed == agg.compared && agg.oversize == 0;
    report(
        6,
        "parallel equals global",
        pass,
        format!(
            "{}/{} bounded trials identical; {} oversize components, {} fallbacks, {} components",
            agg.agreed, agg.compared, agg.oversize, agg.fallbacks, agg.components
        ),
    );
}

/// Wilson score interval at 95%.
fn wilson(k: u64, n: u64) -> (f64, f64) {
    let z = 1.959_963_984_540_054f64;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let den = 1.0 + z * z / n;
    let mid = (p + z * z / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / den;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

#[test]
fn c07_sub_threshold_scaling() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    const TRIALS: u64 = 100_000;
    let mut rows = Vec::new();
    for d in [4, 6, 8] {
        let m_e = d as u32 / 2;
        // A slab of thickness d whose volume is one CNOT volume, 250 m_e^3.
        let side = (250.0 * (m_e as f64).powi(3) / d as f64).sqrt().round() as i32;
        let dims = LatticeDims::new(d, side, side).unwrap();
        let (failed, spanning, gave_up) = (0..TRIALS)
            .into_par_iter()
            .map(|k| {
                let seed = cluster_qec::rng::trial_seed(70 + d as u64, k);
                let e = errorsim::sample_errors(&dims, &ErrorModel::phase_only(1e-3, seed).unwrap()).unwrap();
                let evs = events_from_errors(&dims, &e).unwrap();
                match decode_global(&dims, &evs, m_e) {
                    Ok(c) => {
                        let frame = apply_correction(&PauliFrame::new(), &c, &dims);
                        let f = pipeline::check_logical_failure(&e, &frame, &dims);
                        let s = spanning_failure(&e, &frame, &dims);
                        ((f.flags[0][0] || f.flags[0][1]) as u64, (s.flags[0][0] || s.flags[0][1]) as u64, 0)
                    }
                    Err(_) => (0, 0, 1),
                }
            })
            .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        let n = TRIALS - gave_up;
        rows.push((d, dims, failed, spanning, n, wilson(failed, n)));
    }
    let mut pass = true;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        pass &= (b.2 as f64 / b.4 as f64) < (a.2 as f64 / a.4 as f64) && b.5 .1 < a.5 .0;
    }
    let detail = rows
        .iter()
        .map(|(d, dims, f, s, n, ci)| {
            format!("d={d} {}x{}x{}: {f}/{n} cut [{:.2e},{:.2e}] spanning {s}", dims.nx, dims.ny, dims.nt, ci.0, ci.1)
        })
        .collect::<Vec<_>>()
        .join("; ");
    let secs = t.elapsed().as_secs_f64();
    report(7, "sub-threshold scaling", pass, format!("{detail} ({secs:.0}s)"));
}

fn pooled(dims: &LatticeDims, min_components: u64, seed: u64) -> cluster_qec::analysis::ComponentDistribution {
    let per_trial = 2.0 * dims.num_sites() as f64 * 1e-4;
    let trials = (min_components as f64 / per_trial * 1.1).ceil() as u64;
    let mut cd = component_distribution(dims, 1e-4, 6, trials, seed).unwrap();
    let mut k = 1;
    while cd.components < min_components {
        let more = component_distribution(dims, 1e-4, 6, trials / 10 + 1, seed + k).unwrap();
        cd.histogram.merge(&more.histogram);
        cd.trials += more.trials;
        cd.components = cd.histogram.total();
        k += 1;
    }
    cd.fit = cluster_qec::analysis::fit_tail(&cd.histogram, cluster_qec::analysis::MIN_TAIL_COUNT).ok();
    cd
}

#[test]
fn c08_component_tail() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let small = pooled(&LatticeDims::cube(50).unwrap(), 1_000_000, 80);
    let large = pooled(&LatticeDims::cube(100).unwrap(), 1_000_000, 81);
    let model = FailureModel::new(1e-4, 6, ApproxMode::Rounded).unwrap();
    let (Some(fs), Some(fl)) = (small.fit, large.fit) else {
        report(8, "component tail", false, format!("no fit: {:?} / {:?}", small.histogram, large.histogram));
        return;
    };
    let n = solve_region_size(&model, &fs, RegionForm::Full);
    let ratio = fs.beta.max(fl.beta) / fs.beta.min(fl.beta);
    let n_ok = matches!(n, Ok(n) if (15..=33).contains(&n));
    let pass = fs.r2 >= 0.9 && n_ok && ratio <= 2.0;
    let secs = t.elapsed().as_secs_f64();
    report(
        8,
        "component tail",
        pass,
        format!(
            "50^3: {} components, fit extents {}..={} alpha {:.3e} beta {:.3} R2 {:.3}; n(6) = {:?}; \
             100^3: {} components beta {:.3}; beta ratio {:.2}; counts {:?} ({secs:.0}s)",
            small.components,
            fs.first,
            fs.last,
            fs.alpha,
            fs.beta,
            fs.r2,
            n,
            large.components,
            fl.beta,
            ratio,
            small.histogram.counts
        ),
    );
}

#[test]
fn c09_failure_model_table() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let want = [-7, -8, -10, -12, -14, -16, -18];
    let got: Vec<i32> = (4..=10)
        .map(|m_e| order_of_magnitude(logical_cnot_failure(&FailureModel::new(1e-4, m_e, ApproxMode::Rounded).unwrap())))
        .collect();
    report(9, "failure-model table", got == want, format!("exponents {got:?}"));
}

#[test]
fn c10_instance_count() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let table = [(6, 23, 3.4), (7, 32, 2.4), (8, 44, 1.7), (9, 62, 1.0), (10, 81, 0.77)];
    let mut worst: f64 = 0.0;
    let mut vals = Vec::new();
    for (m_e, n, want) in table {
        let got = instances_per_qubit(m_e, n);
        worst = worst.max((got / want - 1.0).abs());
        vals.push(format!("{m_e}:{got:.3}"));
    }
    report(10, "instance count", worst <= 0.10, format!("{} worst deviation {:.1}%", vals.join(" "), worst * 100.0));
}

#[test]
fn c11_benchmark_shape() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let cfg = BenchConfig { trials: 100, seed: 11, ..BenchConfig::default() };
    let points = benchmark_stages(&cfg).unwrap();
    let mut problems = Vec::new();
    for &m_e in &cfg.m_e {
        let c = curve_for(&points, m_e);
        for s in [Stage::Tree, Stage::Matching] {
            if !c.is_monotone(s) {
                problems.push(format!("m_e {m_e} {s:?} not monotone"));
            }
        }
    }
    for p in &points {
        let r = p.tree / p.matching;
        if !(0.1..=10.0).contains(&r) {
            problems.push(format!("m_e {} edge {} ratio {r:.2}", p.m_e, p.edge));
        }
    }
    for &edge in &cfg.edges {
        let at: Vec<_> = points.iter().filter(|p| p.edge == edge).collect();
        for (s, f) in [("tree", (|p: &&cluster_qec::analysis::BenchPoint| p.tree) as fn(&&_) -> f64), ("matching", |p| p.matching)] {
            let hi = at.iter().map(f).fold(f64::MIN, f64::max);
            let lo = at.iter().map(f).fold(f64::MAX, f64::min);
            if hi > 2.0 * lo {
                problems.push(format!("edge {edge} {s} varies {:.2}x across m_e", hi / lo));
            }
        }
    }
    let span = |e: i32| {
        let p: Vec<_> = points.iter().filter(|p| p.edge == e).collect();
        format!("edge {e}: tree {:.2e}s matching {:.2e}s", p[0].tree, p[0].matching)
    };
    let secs = t.elapsed().as_secs_f64();
    report(
        11,
        "benchmark shape",
        problems.is_empty(),
        format!("{} ; {} ; issues {:?} ({secs:.0}s)", span(35), span(155), problems),
    );
}
