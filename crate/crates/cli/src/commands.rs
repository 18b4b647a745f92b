use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rand_distr::{Distribution, Uniform};

use railcrowd::desttable::build_destination_table;
use railcrowd::engine::{events_from_records, run_snapshots, snapshot_times, CrowdEngine, CrowdednessSnapshot};
use railcrowd::estimator::{
    estimate_action_times, ActionTimeModel, ModelFile, MseReport, SolverRegistry, WalkMoments, WlsOptions,
    DEFAULT_RIDGE,
};
use railcrowd::ingest::{parse_afc_records, write_afc_records, AfcRecord, SECONDS_PER_DAY};
use railcrowd::loctable::{build_all_tables, TableParams};
use railcrowd::network::{enumerate_walk_variables, load_topology, Topology};
use railcrowd::render::{read_snapshot_csv, Frame, RenderInput, RendererRegistry};
use railcrowd::sampling::rng_for;
use railcrowd::simgen::{generate_day, DemandProfile, GroundTruthTrace, SimParams};
use railcrowd::store::{load_archive, save_archive, ArchiveMeta, TableArchive};

use crate::args::{BuildTablesArgs, Cli, Command, EstimateArgs, InferArgs, RenderArgs, RenderKind, SimulateArgs};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Stream id used to seed the generated truth model, distinct from any day index.
const TRUTH_STREAM: u64 = u64::MAX;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::BuildTables(a) => build_tables(a),
        Command::Infer(a) => infer(a),
        Command::Render(a) => render(a),
    }
}

fn read_input(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("input file not found: {}", path.display())));
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(CliError::internal)
}

fn load_topo(path: &Path) -> Result<Topology> {
    let text = read_input(path)?;
    load_topology(&text).with_context(|| format!("topology {}", path.display())).map_err(CliError::data)
}

fn load_records(path: &Path, topo: &Topology) -> Result<Vec<AfcRecord>> {
    let text = read_input(path)?;
    let (records, rejected) = parse_afc_records(text.as_bytes(), topo)
        .with_context(|| format!("records {}", path.display()))
        .map_err(CliError::data)?;
    if !rejected.is_empty() {
        eprintln!("warning: {} rows of {} rejected", rejected.len(), path.display());
        for r in rejected.iter().take(10) {
            eprintln!("  line {}: {}", r.line, r.reason);
        }
        if rejected.len() > 10 {
            eprintln!("  ...");
        }
    }
    Ok(records)
}

fn load_model(path: &Path, topo: &Topology) -> Result<ActionTimeModel> {
    let text = read_input(path)?;
    ModelFile::from_json(&text)
        .and_then(|f| f.to_model(topo))
        .with_context(|| format!("model {}", path.display()))
        .map_err(CliError::data)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(CliError::internal)
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::internal)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(CliError::internal)
}

/// `HH:MM`, `HH:MM:SS` or plain seconds.
pub fn parse_clock(s: &str) -> std::result::Result<i64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("invalid time '{s}': expected HH:MM[:SS] or seconds"));
    }
    let mut total = 0;
    for (i, p) in parts.iter().enumerate() {
        let v: i64 = p.parse().map_err(|_| format!("invalid time '{s}'"))?;
        if v < 0 || (i > 0 && v >= 60) {
            return Err(format!("invalid time '{s}'"));
        }
        total += v * [3600, 60, 1][i];
    }
    Ok(total)
}

fn generated_truth(topo: &Topology, a: &SimulateArgs) -> Result<ActionTimeModel> {
    if !(a.walk_mean_min > 0.0 && a.walk_mean_min <= a.walk_mean_max && a.walk_variance >= 0.0) {
        return Err(CliError::Usage("walk mean range must be positive and ordered, variance non-negative".into()));
    }
    let walks = enumerate_walk_variables(topo);
    let dist = Uniform::new_inclusive(a.walk_mean_min, a.walk_mean_max).map_err(CliError::internal)?;
    let mut rng = rng_for(a.seed, &[TRUTH_STREAM]);
    let moments =
        (0..walks.len()).map(|_| WalkMoments { mean: dist.sample(&mut rng), variance: a.walk_variance }).collect();
    ActionTimeModel::new(walks, moments).map_err(CliError::data)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let topo = load_topo(&a.topology)?;
    let demand_text = read_input(&a.demand)?;
    let demand = DemandProfile::from_toml(&demand_text, &topo)
        .with_context(|| format!("demand {}", a.demand.display()))
        .map_err(CliError::data)?;
    let truth = match &a.model {
        Some(p) => load_model(p, &topo)?,
        None => generated_truth(&topo, &a)?,
    };
    create_dir(&a.out)?;

    let mut records = Vec::new();
    let mut trace = GroundTruthTrace::default();
    for day in a.day_offset..a.day_offset + a.days {
        let params = SimParams { seed: a.seed, day, ..SimParams::default() };
        let sim = generate_day(&topo, &truth, &demand, &params).map_err(CliError::data)?;
        eprintln!("day {day}: {} trips", sim.records.len());
        records.extend(sim.records);
        trace.trips.extend(sim.trace.trips);
    }

    write_afc_records(create_file(&a.out.join("afc.csv"))?, &topo, &records).map_err(CliError::internal)?;
    trace.write_csv(&topo, create_file(&a.out.join("trace.csv"))?).map_err(CliError::internal)?;
    write_text(&a.out.join("truth_model.json"), &ModelFile::from_model(&truth, None).to_json())?;
    println!("{} trips over {} days written to {}", records.len(), a.days, a.out.display());
    Ok(())
}

fn residuals_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    out.with_file_name(format!("{stem}.residuals.csv"))
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let topo = load_topo(&a.topology)?;
    let records = load_records(&a.history, &topo)?;
    let truth = a.truth.as_deref().map(|p| load_model(p, &topo)).transpose()?;
    let registry = SolverRegistry::builtin();
    let solver = registry.get(&a.solver).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = WlsOptions { n_min: a.nmin, ridge: DEFAULT_RIDGE, solver };
    let outcome = estimate_action_times(&topo, &records, &opts).map_err(CliError::data)?;

    let mut file = ModelFile::from_model(&outcome.model, Some(outcome.diagnostics.clone()));
    if let Some(t) = &truth {
        let (mean, variance) = outcome.model.mse_against(t);
        file.mse_vs_truth = Some(MseReport { mean, variance });
        println!("mse vs truth: mean {mean:.6} s^2, variance {variance:.6} s^4");
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(&a.out, &file.to_json())?;

    let res_path = residuals_path(&a.out);
    let mut w = csv::Writer::from_writer(create_file(&res_path)?);
    let header =
        ["origin", "destination", "count", "observed_mean", "fitted_mean", "observed_variance", "fitted_variance"];
    w.write_record(header).map_err(CliError::internal)?;
    for r in outcome.residuals(a.nmin) {
        w.write_record([
            topo.station(r.origin).id.clone(),
            topo.station(r.destination).id.clone(),
            r.count.to_string(),
            r.observed_mean.to_string(),
            r.fitted_mean.to_string(),
            r.observed_variance.to_string(),
            r.fitted_variance.to_string(),
        ])
        .map_err(CliError::internal)?;
    }
    w.flush().map_err(CliError::internal)?;

    let d = &outcome.diagnostics;
    println!(
        "{} walk variables from {} pairs ({} excluded, {} untouched) -> {}",
        outcome.model.len(),
        d.pairs_used,
        d.pairs_excluded,
        d.untouched.len(),
        a.out.display()
    );
    Ok(())
}

fn build_timestamp() -> Result<i64> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("SOURCE_DATE_EPOCH is not an integer: '{v}'"))),
        Err(_) => Ok(std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)),
    }
}

fn build_tables(a: BuildTablesArgs) -> Result<()> {
    if a.bin_width <= 0 {
        return Err(CliError::Usage("--bin-width must be positive".into()));
    }
    let topo = load_topo(&a.topology)?;
    let model = load_model(&a.model, &topo)?;
    let records = load_records(&a.history, &topo)?;
    let params =
        TableParams { delta: a.delta, i_max: a.imax, horizon: a.horizon, seed: a.seed, ..TableParams::default() };
    let routes = model.routes(&topo).map_err(CliError::data)?;
    let locations = build_all_tables(&topo, &routes, &model, &params).map_err(CliError::data)?;
    let destinations = build_destination_table(topo.n_stations(), topo.fingerprint(), &records, a.bin_width);
    if destinations.is_empty() {
        eprintln!("warning: no completed trips in history; destinations will be uniform");
    }
    let meta = ArchiveMeta {
        fingerprint: topo.fingerprint(),
        built_at: build_timestamp()?,
        delta: a.delta,
        i_max: a.imax,
        horizon: a.horizon.unwrap_or(0),
        bin_width: a.bin_width,
        seed: a.seed,
    };
    let archive = TableArchive { meta, model, locations, destinations };
    if let Some(dir) = a.archive.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let summary = save_archive(&a.archive, &archive).map_err(CliError::internal)?;
    println!("{summary} -> {}", a.archive.display());
    Ok(())
}

fn snapshot_file(t: i64) -> String {
    format!("snapshot_{t}.csv")
}

/// Renderers to run, dropping SVG with a warning when the topology has no layout.
fn renderer_names(kind: RenderKind, topo: &Topology) -> Vec<&'static str> {
    let mut names: Vec<&'static str> = kind.names().to_vec();
    if !topo.has_layout() && names.contains(&"svg") {
        eprintln!("warning: topology has no station coordinates; writing CSV output instead of SVG");
        names.retain(|n| *n != "svg");
        if !names.contains(&"csv") {
            names.push("csv");
        }
    }
    names
}

fn render_frames(topo: &Topology, frames: &[Frame], fold: bool, kind: RenderKind, out: &Path) -> Result<Vec<PathBuf>> {
    let registry = RendererRegistry::builtin();
    let input = RenderInput { topo, frames, fold_transfers: fold };
    let mut written = Vec::new();
    for name in renderer_names(kind, topo) {
        let renderer = registry.get(name).map_err(CliError::internal)?;
        written.extend(renderer.render(&input, out).map_err(CliError::internal)?);
    }
    Ok(written)
}

fn infer(a: InferArgs) -> Result<()> {
    if a.cadence <= 0 {
        return Err(CliError::Usage("--cadence must be positive".into()));
    }
    let from = parse_clock(&a.from).map_err(CliError::Usage)?;
    let to = parse_clock(&a.to).map_err(CliError::Usage)?;
    if to < from {
        return Err(CliError::Usage("--to is earlier than --from".into()));
    }
    let topo = load_topo(&a.topology)?;
    if !a.archive.is_file() {
        return Err(CliError::Usage(format!("input file not found: {}", a.archive.display())));
    }
    let archive = load_archive(&a.archive, &topo)
        .with_context(|| format!("archive {}", a.archive.display()))
        .map_err(CliError::data)?;
    let records = load_records(&a.events, &topo)?;
    let events = events_from_records(&records);
    let day = a.day.unwrap_or_else(|| events.first().map(|e| e.ts().div_euclid(SECONDS_PER_DAY)).unwrap_or(0));
    let base = day * SECONDS_PER_DAY;
    let times = snapshot_times(base + from, base + to, a.cadence);

    let engine = CrowdEngine::new(&topo, &archive.locations, &archive.destinations).map_err(CliError::data)?;
    let (snapshots, rejected) = run_snapshots(&engine, &events, &times).map_err(CliError::data)?;
    if !rejected.is_empty() {
        eprintln!("warning: {} events rejected", rejected.len());
        for e in rejected.iter().take(10) {
            eprintln!("  {e}");
        }
    }

    create_dir(&a.out)?;
    let mut totals = csv::Writer::from_writer(create_file(&a.out.join("totals.csv"))?);
    totals.write_record(["t_now", "active", "expected_total"]).map_err(CliError::internal)?;
    for s in &snapshots {
        s.write_csv(&topo, a.fold_transfers, create_file(&a.out.join(snapshot_file(s.t_now)))?)
            .map_err(CliError::internal)?;
        totals
            .write_record([s.t_now.to_string(), s.active.to_string(), s.total().to_string()])
            .map_err(CliError::internal)?;
    }
    totals.flush().map_err(CliError::internal)?;

    if let Some(kind) = a.render {
        let frames: Vec<Frame> = snapshots.iter().map(|s| Frame::from_snapshot(s, &topo, a.fold_transfers)).collect();
        render_frames(&topo, &frames, a.fold_transfers, kind, &a.out)?;
    }
    let peak = snapshots.iter().map(CrowdednessSnapshot::total).fold(0.0, f64::max);
    println!("{} snapshots written to {} (peak expected load {peak:.1})", snapshots.len(), a.out.display());
    Ok(())
}

fn collect_snapshots(dir: &Path, topo: &Topology) -> Result<Vec<Frame>> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("snapshot directory not found: {}", dir.display())));
    }
    let entries =
        fs::read_dir(dir).with_context(|| format!("listing {}", dir.display())).map_err(CliError::internal)?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(CliError::internal)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(t) =
            name.strip_prefix("snapshot_").and_then(|r| r.strip_suffix(".csv")).and_then(|t| t.parse::<i64>().ok())
        {
            found.push((t, path));
        }
    }
    if found.is_empty() {
        return Err(CliError::data(anyhow!("no snapshot_<t>.csv files in {}", dir.display())));
    }
    found.sort();
    found
        .into_iter()
        .map(|(t, path)| {
            let f = fs::File::open(&path)
                .with_context(|| format!("opening {}", path.display()))
                .map_err(CliError::internal)?;
            read_snapshot_csv(topo, t, f)
                .with_context(|| format!("snapshot {}", path.display()))
                .map_err(CliError::data)
        })
        .collect()
}

fn render(a: RenderArgs) -> Result<()> {
    let topo = load_topo(&a.topology)?;
    let frames = collect_snapshots(&a.snapshots, &topo)?;
    create_dir(&a.out)?;
    let written = render_frames(&topo, &frames, a.fold_transfers, a.render, &a.out)?;
    println!("{} frames rendered into {} files in {}", frames.len(), written.len(), a.out.display());
    Ok(())
}
