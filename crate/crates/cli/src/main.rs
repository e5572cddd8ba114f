mod config;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cluster_qec::analysis::{
    bench_csv, benchmark_stages, component_distribution, curve_for, plan_csv, plan_row, table_region_size,
    ApproxMode, BenchConfig, BenchPoint, ComponentDistribution, FailureModel, RegionForm, TailFit,
};
use cluster_qec::errorsim::{sample_errors, Baseline, ErrorModel};
use cluster_qec::matcher::{brute_force_matching, minimum_weight_matching, BRUTE_FORCE_MAX};
use cluster_qec::matchprep::{build_bounded_graph, component_extent, connected_components, events_of_kind};
use cluster_qec::pipeline::{decode_events, run_trials, Aggregate, Correction, CorrectionSet, TrialReport};
use cluster_qec::rng::trial_seed;
use cluster_qec::syndrome::events_from_errors;
use cluster_qec::textio::{format_events, parse_events, EventRecord, StreamHeader};
use cluster_qec::{Error, LatticeKind};
use config::{Common, Format, RunConfig};
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Decoding experiments on 3D topological cluster states.
#[derive(Parser, Debug)]
#[command(name = "cqec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample one error configuration and write its detection events.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Decode an event file, or run Monte Carlo trials when no file is given.
    Decode {
        #[command(flatten)]
        common: Common,
        /// Event file written by `simulate`; `-` reads standard input.
        input: Option<PathBuf>,
        /// Write the JSON summary here as well.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Write the corrections of an event-file decode here.
        #[arg(long)]
        corrections: Option<PathBuf>,
    },
    /// Compare window-parallel against global decoding, and the matcher against
    /// exhaustive search on small components.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Number of small components to check against exhaustive search.
        #[arg(long, default_value_t = 1000)]
        oracle: u64,
    },
    /// Component extent histogram and its tail fit.
    Components {
        #[command(flatten)]
        common: Common,
        /// List the components of a single sample instead.
        #[arg(long)]
        dump: bool,
    },
    /// Time tree creation and matching against lattice volume.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Cube edges to time.
        #[arg(long, value_delimiter = ',')]
        edges: Option<Vec<i32>>,
        /// Edge cutoffs to time; `--me` alone selects a single one.
        #[arg(long, value_delimiter = ',')]
        mes: Option<Vec<u32>>,
    },
    /// Failure probability, window edge and resource table.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "rounded")]
        approx: Approx,
        #[arg(long, value_enum, default_value = "full")]
        form: Form,
        /// Threshold error rate.
        #[arg(long)]
        p_th: Option<f64>,
        /// Tail fit from `components --format json` output.
        #[arg(long, conflicts_with_all = ["alpha", "beta"])]
        fit_from: Option<PathBuf>,
        #[arg(long, requires = "beta")]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        beta: Option<f64>,
        /// Benchmark CSV from `bench`, for the clock-cycle columns.
        #[arg(long)]
        bench: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Approx {
    Rounded,
    Exact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Form {
    Full,
    Constant,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("cqec: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = setup(&common, "simulate", 1)?;
            if cfg.format == Format::Json {
                bail!("simulate writes the line-oriented event format only");
            }
            emit(&common.out, &simulate(&cfg)?)
        }
        Command::Decode { common, input, summary, corrections } => {
            let cfg = setup(&common, "decode", 100)?;
            match input {
                Some(path) => decode_file(&cfg, &common.out, &path, summary.as_deref(), corrections.as_deref()),
                None => {
                    if corrections.is_some() {
                        bail!("--corrections needs an event file");
                    }
                    decode_trials(&cfg, &common.out, summary.as_deref())
                }
            }
        }
        Command::Verify { common, oracle } => {
            let cfg = setup(&common, "verify", 1000)?;
            emit(&common.out, &verify(&cfg, oracle)?)
        }
        Command::Components { common, dump } => {
            let cfg = setup(&common, "components", 100)?;
            emit(&common.out, &if dump { dump_components(&cfg)? } else { components(&cfg)? })
        }
        Command::Bench { common, edges, mes } => {
            let cfg = setup(&common, "bench", 10)?;
            let mut bc = BenchConfig { p: cfg.p, trials: cfg.trials, seed: cfg.seed, ..Default::default() };
            if let Some(e) = edges {
                bc.edges = e;
            }
            match (mes, common.me) {
                (Some(m), _) => bc.m_e = m,
                (None, Some(_)) => bc.m_e = vec![cfg.me],
                _ => {}
            }
            emit(&common.out, &bench(&cfg, &bc)?)
        }
        Command::Plan { common, approx, form, p_th, fit_from, alpha, beta, bench } => {
            let cfg = setup(&common, "plan", 1)?;
            let fit = match (fit_from, alpha, beta) {
                (Some(path), _, _) => Some(read_fit(&path)?),
                (None, Some(alpha), Some(beta)) => {
                    Some(TailFit { alpha, beta, r2: f64::NAN, first: 0, last: 0 })
                }
                _ => None,
            };
            let points = bench.as_deref().map(read_bench).transpose()?;
            let mes = if common.me.is_some() || common.d.is_some() { vec![cfg.me] } else { (4..=10).collect() };
            let opts = PlanOptions {
                approx: match approx {
                    Approx::Rounded => ApproxMode::Rounded,
                    Approx::Exact => ApproxMode::Exact,
                },
                form: match form {
                    Form::Full => RegionForm::Full,
                    Form::Constant => RegionForm::Constant,
                },
                p_th,
            };
            emit(&common.out, &plan(&cfg, &mes, &opts, fit.as_ref(), points.as_deref())?)
        }
    }
}

fn setup(common: &Common, command: &'static str, default_trials: u64) -> Result<RunConfig> {
    let cfg = common.resolve(command, default_trials)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().context("starting worker pool")?;
    }
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn header_comment(cfg: &RunConfig) -> String {
    format!("# cqec {}\n", cfg.echo())
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialise");
    s.push('\n');
    s
}

fn simulate(cfg: &RunConfig) -> Result<String> {
    let dims = cfg.lattice();
    let header = StreamHeader {
        dims,
        model: ErrorModel::new(cfg.p, cfg.ploss, cfg.seed)?,
        baseline: Baseline::all_even(cfg.seed),
    };
    let errors = sample_errors(&dims, &header.model)?;
    let record = match events_from_errors(&dims, &errors) {
        Ok(events) => EventRecord::Events(events),
        Err(Error::LossPercolation) => EventRecord::Percolation,
        Err(e) => return Err(e.into()),
    };
    Ok(format_events(&header, &record))
}

const REPORT_COLUMNS: &str = "trial,seed,errors,losses,events,components,oversize,max_extent,fallbacks,gave_up,\
failure,parallel_failure,agree,sample_s,extract_s,tree_s,matching_s,parallel_s,frame_s";

/// Failure flags as a bit mask, bit `2 · axis + kind` with primal = 0.
fn failure_cell(f: Option<cluster_qec::pipeline::LogicalFailure>) -> String {
    f.map_or(String::new(), |f| {
        let mut mask = 0u32;
        for axis in 0..3 {
            for (b, kind) in LatticeKind::BOTH.into_iter().enumerate() {
                mask |= (f.get(axis, kind) as u32) << (2 * axis + b);
            }
        }
        mask.to_string()
    })
}

fn report_row(r: &TrialReport) -> String {
    let t = &r.times;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e}\n",
        r.trial,
        r.seed,
        r.errors,
        r.losses,
        r.events,
        r.components,
        r.oversize,
        r.max_extent,
        r.fallbacks,
        r.gave_up as u8,
        failure_cell(r.failure),
        failure_cell(r.parallel_failure),
        r.agree.map_or(String::new(), |a| (a as u8).to_string()),
        t.sample,
        t.extract,
        t.tree,
        t.matching,
        t.parallel,
        t.frame
    )
}

fn reports_output(cfg: &RunConfig, reports: &[TrialReport], agg: &Aggregate, extra: serde_json::Value) -> String {
    match cfg.format {
        Format::Csv => {
            let mut s = header_comment(cfg);
            s.push_str(REPORT_COLUMNS);
            s.push('\n');
            for r in reports {
                s.push_str(&report_row(r));
            }
            s
        }
        Format::Json => to_json(&json!({ "config": cfg, "summary": agg, "extra": extra, "reports": reports })),
    }
}

fn summary_json(cfg: &RunConfig, agg: &Aggregate, extra: &serde_json::Value) -> String {
    to_json(&json!({ "config": cfg, "summary": agg, "failure_rate": agg.failure_rate(), "extra": extra }))
}

fn decode_trials(cfg: &RunConfig, out: &Option<PathBuf>, summary: Option<&Path>) -> Result<()> {
    let (reports, agg) = run_trials(&cfg.trial_config()?)?;
    emit(out, &reports_output(cfg, &reports, &agg, serde_json::Value::Null))?;
    if let Some(path) = summary {
        emit(&Some(path.to_path_buf()), &summary_json(cfg, &agg, &serde_json::Value::Null))?;
    }
    Ok(())
}

fn read_input(path: &Path) -> Result<String> {
    let mut text = String::new();
    if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut text).context("reading standard input")?;
    } else {
        text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(text)
}

fn decode_file(
    cfg: &RunConfig,
    out: &Option<PathBuf>,
    path: &Path,
    summary: Option<&Path>,
    corrections: Option<&Path>,
) -> Result<()> {
    let (header, record) = parse_events(&read_input(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let mut tc = cfg.trial_config()?;
    tc.dims = header.dims;
    tc.p_z = header.model.p_z;
    tc.p_loss = header.model.p_loss;
    tc.seed = header.model.seed;
    tc.trials = 1;
    tc.validate()?;
    let mut cfg = cfg.clone();
    cfg.dims = header.dims.extents();
    cfg.p = header.model.p_z;
    cfg.ploss = header.model.p_loss;
    cfg.seed = header.model.seed;
    cfg.trials = 1;

    let mut report = TrialReport::new(0, header.model.seed);
    let mut decoded = None;
    let mut verdict_source = "none";
    match record {
        EventRecord::Percolation => report.gave_up = true,
        EventRecord::Events(events) => {
            // Verdicts need the errors; regenerate them from the header and
            // use them only if they reproduce the file's events exactly.
            let errors = sample_errors(&header.dims, &header.model)?;
            let regenerated = events_from_errors(&header.dims, &errors).ok();
            let matches = regenerated.is_some_and(|r| r == events);
            if matches {
                verdict_source = "regenerated";
                report.errors = errors.z_errors.len();
                report.losses = errors.losses.len();
            }
            decoded = Some(decode_events(&tc, &events, matches.then_some(&errors), &mut report)?);
        }
    }
    let reports = [report];
    let agg = Aggregate::from_reports(&reports);
    let extra = json!({ "input": path.display().to_string(), "verdict": verdict_source });
    emit(out, &reports_output(&cfg, &reports, &agg, extra.clone()))?;
    if let Some(p) = summary {
        emit(&Some(p.to_path_buf()), &summary_json(&cfg, &agg, &extra))?;
    }
    if let Some(p) = corrections {
        let set = decoded.and_then(|d| d.global.or(d.parallel)).unwrap_or_default();
        emit(&Some(p.to_path_buf()), &corrections_text(&cfg, &set))?;
    }
    Ok(())
}

/// `C K i j t i j t` for a chain between two events, `B K i j t` for a chain
/// to the nearest face.
fn corrections_text(cfg: &RunConfig, set: &CorrectionSet) -> String {
    let mut s = header_comment(cfg);
    for c in set {
        match c {
            Correction::Pair(a, b) => {
                writeln!(s, "C {} {} {} {} {} {} {}", a.kind.tag(), a.i, a.j, a.t, b.i, b.j, b.t).unwrap()
            }
            Correction::Boundary(a) => writeln!(s, "B {} {} {} {}", a.kind.tag(), a.i, a.j, a.t).unwrap(),
        }
    }
    s
}

#[derive(Debug, Default, Serialize)]
struct OracleCheck {
    checked: u64,
    equal: u64,
    samples: u64,
}

/// Blossom against exhaustive search on components drawn from fresh samples.
fn oracle_check(cfg: &RunConfig, target: u64) -> Result<OracleCheck> {
    let dims = cfg.lattice();
    let mut out = OracleCheck::default();
    let mut k = 0;
    while out.checked < target && k < cfg.trials.max(target) {
        let errors = sample_errors(&dims, &ErrorModel::phase_only(cfg.p, trial_seed(cfg.seed ^ 0x0AC1E, k))?)?;
        k += 1;
        out.samples += 1;
        let events = events_from_errors(&dims, &errors)?;
        for kind in LatticeKind::BOTH {
            let g = build_bounded_graph(&dims, &events_of_kind(events.iter().map(|e| e.cell), kind), cfg.me)?;
            for c in connected_components(&g) {
                if out.checked >= target || c.nodes.len() > BRUTE_FORCE_MAX {
                    continue;
                }
                let problem = g.problem(&c);
                let fast = minimum_weight_matching(&problem);
                let slow = brute_force_matching(&problem);
                out.checked += 1;
                out.equal += match (fast, slow) {
                    (Ok(a), Ok(b)) => (a.total_weight == b.total_weight) as u64,
                    (Err(Error::Unmatchable { .. }), Err(Error::Unmatchable { .. })) => 1,
                    _ => 0,
                };
            }
        }
    }
    Ok(out)
}

fn verify(cfg: &RunConfig, oracle: u64) -> Result<String> {
    let mut cfg = cfg.clone();
    cfg.mode = config::Mode::Both;
    let (_, agg) = run_trials(&cfg.trial_config()?)?;
    let check = oracle_check(&cfg, oracle)?;
    let fraction = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let agreement = fraction(agg.agreed, agg.compared);
    let matcher = fraction(check.equal, check.checked);
    Ok(match cfg.format {
        Format::Csv => {
            let mut s = header_comment(&cfg);
            s.push_str("check,compared,agreed,fraction,oversize,fallbacks,gave_up\n");
            writeln!(
                s,
                "parallel_vs_global,{},{},{agreement:.3},{},{},{}",
                agg.compared, agg.agreed, agg.oversize, agg.fallbacks, agg.gave_up
            )
            .unwrap();
            writeln!(s, "matcher_vs_exhaustive,{},{},{matcher:.3},,,", check.checked, check.equal).unwrap();
            s
        }
        Format::Json => to_json(&json!({
            "config": cfg,
            "parallel_vs_global": { "summary": agg, "fraction": agreement },
            "matcher_vs_exhaustive": { "check": check, "fraction": matcher },
        })),
    })
}

fn components(cfg: &RunConfig) -> Result<String> {
    let dist = component_distribution(&cfg.lattice(), cfg.p, cfg.me, cfg.trials, cfg.seed)?;
    Ok(match cfg.format {
        Format::Csv => {
            let mut s = header_comment(cfg);
            writeln!(s, "# components {} trials {}", dist.components, dist.trials).unwrap();
            match &dist.fit {
                Some(f) => writeln!(
                    s,
                    "# fit alpha {:.6e} beta {:.6e} r2 {:.4} extents {}..={}",
                    f.alpha, f.beta, f.r2, f.first, f.last
                )
                .unwrap(),
                None => s.push_str("# fit none\n"),
            }
            s.push_str(&dist.histogram.to_csv());
            s
        }
        Format::Json => to_json(&json!({ "config": cfg, "distribution": dist })),
    })
}

/// Every component of one sample: id, kind, event count, extent and members.
fn dump_components(cfg: &RunConfig) -> Result<String> {
    let dims = cfg.lattice();
    let errors = sample_errors(&dims, &ErrorModel::phase_only(cfg.p, cfg.seed)?)?;
    let events = events_from_errors(&dims, &errors)?;
    let mut rows = Vec::new();
    for kind in LatticeKind::BOTH {
        let g = build_bounded_graph(&dims, &events_of_kind(events.iter().map(|e| e.cell), kind), cfg.me)?;
        for c in connected_components(&g) {
            let members: Vec<_> = c.nodes.iter().map(|&v| g.events[v].index()).collect();
            rows.push((kind, c.nodes.len(), component_extent(&g, &c)?, members));
        }
    }
    Ok(match cfg.format {
        Format::Csv => {
            let mut s = header_comment(cfg);
            s.push_str("component,kind,size,extent,members\n");
            for (id, (kind, size, extent, members)) in rows.iter().enumerate() {
                let m: Vec<_> = members.iter().map(|[i, j, t]| format!("{i}:{j}:{t}")).collect();
                writeln!(s, "{id},{},{size},{extent},{}", kind.tag(), m.join(";")).unwrap();
            }
            s
        }
        Format::Json => {
            let list: Vec<_> = rows
                .iter()
                .enumerate()
                .map(|(id, (kind, size, extent, members))| {
                    json!({ "component": id, "kind": kind.tag().to_string(), "size": size, "extent": extent, "members": members })
                })
                .collect();
            to_json(&json!({ "config": cfg, "components": list }))
        }
    })
}

fn bench(cfg: &RunConfig, bc: &BenchConfig) -> Result<String> {
    let points = benchmark_stages(bc)?;
    Ok(match cfg.format {
        Format::Csv => {
            let mut s = header_comment(cfg);
            writeln!(s, "# bench {}", serde_json::to_string(bc)?).unwrap();
            s.push_str(&bench_csv(&points));
            s
        }
        Format::Json => to_json(&json!({ "config": cfg, "bench": bc, "points": points })),
    })
}

fn read_fit(path: &Path) -> Result<TailFit> {
    #[derive(serde::Deserialize)]
    struct Doc {
        distribution: ComponentDistribution,
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Doc = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    doc.distribution.fit.with_context(|| format!("{} holds no tail fit", path.display()))
}

fn read_bench(path: &Path) -> Result<Vec<BenchPoint>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("m_e") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<_> = line.split(',').collect();
        let bad = || format!("{}:{}: expected m_e,edge,volume,events,tree_s,matching_s", path.display(), k + 1);
        if f.len() != 6 {
            bail!(bad());
        }
        points.push(BenchPoint {
            m_e: f[0].parse().with_context(bad)?,
            edge: f[1].parse().with_context(bad)?,
            events: f[3].parse().with_context(bad)?,
            tree: f[4].parse().with_context(bad)?,
            matching: f[5].parse().with_context(bad)?,
        });
    }
    Ok(points)
}

struct PlanOptions {
    approx: ApproxMode,
    form: RegionForm,
    p_th: Option<f64>,
}

fn plan(
    cfg: &RunConfig,
    mes: &[u32],
    opts: &PlanOptions,
    fit: Option<&TailFit>,
    points: Option<&[BenchPoint]>,
) -> Result<String> {
    let mut rows = Vec::new();
    for &m_e in mes {
        let mut model = FailureModel::new(cfg.p, m_e, opts.approx)?;
        if let Some(p_th) = opts.p_th {
            model.p_th = p_th;
        }
        let n = cfg.n.or(if fit.is_some() { None } else { table_region_size(m_e) });
        let curve = points.map(|p| curve_for(p, m_e)).filter(|c| !c.edges.is_empty());
        let row = plan_row(&model, n, fit, opts.form, curve.as_ref()).with_context(|| format!("m_e = {m_e}"))?;
        rows.push(row);
    }
    Ok(match cfg.format {
        Format::Csv => header_comment(cfg) + &plan_csv(&rows),
        Format::Json => to_json(&json!({ "config": cfg, "rows": rows })),
    })
}
