//! Output of snapshot series as network maps (SVG) and time series (CSV).
//!
//! Renderers are strategies registered by name; the CLI picks them with
//! `--render`. Colours come from a five-bin scale whose edges are the
//! 20/40/60/80% quantiles of every component value in the series.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::engine::CrowdednessSnapshot;
use crate::network::{Component, ComponentKind, Topology};

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("render output: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("topology has no station coordinates; SVG output needs x and y for every station")]
    MissingLayout,
    #[error("unknown renderer '{name}' (available: {known})")]
    UnknownRenderer { name: String, known: String },
    #[error("snapshot file: {0}")]
    Snapshot(String),
}

/// Component values at one instant, indexed by component id.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t_now: i64,
    pub values: Vec<f64>,
}

impl Frame {
    pub fn from_snapshot(snap: &CrowdednessSnapshot, topo: &Topology, fold_transfers: bool) -> Self {
        let values = if fold_transfers { snap.folded(topo) } else { snap.components.clone() };
        Frame { t_now: snap.t_now, values }
    }
}

/// Reads a snapshot CSV (`component_id,kind,expected_count`). The `total`
/// line and missing components are ignored.
pub fn read_snapshot_csv<R: Read>(topo: &Topology, t_now: i64, input: R) -> Result<Frame, RenderError> {
    let names: HashMap<String, usize> =
        topo.catalog().components().iter().enumerate().map(|(k, c)| (topo.component_name(*c), k)).collect();
    let mut values = vec![0.0; names.len()];
    let mut rdr = csv::Reader::from_reader(input);
    for row in rdr.records() {
        let row = row?;
        let (Some(id), Some(kind), Some(v)) = (row.get(0), row.get(1), row.get(2)) else {
            return Err(RenderError::Snapshot(format!("short row {:?}", row)));
        };
        if kind == "system" {
            continue;
        }
        let k = *names.get(id).ok_or_else(|| RenderError::Snapshot(format!("unknown component '{id}'")))?;
        values[k] = v.parse().map_err(|_| RenderError::Snapshot(format!("bad count '{v}' for '{id}'")))?;
    }
    Ok(Frame { t_now, values })
}

/// Five-bin colour scale with fixed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorScale {
    pub edges: [f64; 4],
}

pub const PALETTE: [&str; 5] = ["#ffffcc", "#a1dab4", "#41b6c4", "#2c7fb8", "#253494"];

impl ColorScale {
    /// Edges at the 20/40/60/80% quantiles (nearest rank) of `values`.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return ColorScale { edges: [0.0; 4] };
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        ColorScale { edges: [q(0.2), q(0.4), q(0.6), q(0.8)] }
    }

    /// Bin 0..=4; a value equal to an edge stays in the lower bin.
    pub fn bin(&self, v: f64) -> usize {
        self.edges.iter().filter(|&&e| v > e).count()
    }

    pub fn color(&self, v: f64) -> &'static str {
        PALETTE[self.bin(v)]
    }

    pub fn label(&self, bin: usize) -> String {
        match bin {
            0 => format!("≤ {:.1}", self.edges[0]),
            4 => format!("> {:.1}", self.edges[3]),
            b => format!("{:.1} – {:.1}", self.edges[b - 1], self.edges[b]),
        }
    }
}

pub struct RenderInput<'a> {
    pub topo: &'a Topology,
    pub frames: &'a [Frame],
    /// Transfer points have been merged into stations and are not drawn.
    pub fold_transfers: bool,
}

impl RenderInput<'_> {
    pub fn scale(&self) -> ColorScale {
        let kinds: Vec<ComponentKind> =
            self.topo.catalog().components().iter().map(|c| Topology::component_kind(*c)).collect();
        let fold = self.fold_transfers;
        ColorScale::from_values(self.frames.iter().flat_map(|f| {
            f.values.iter().zip(&kinds).filter(move |(_, k)| !(fold && **k == ComponentKind::Transfer)).map(|(v, _)| *v)
        }))
    }
}

pub trait Renderer: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Writes output files into `out_dir` and returns their paths.
    fn render(&self, input: &RenderInput<'_>, out_dir: &Path) -> Result<Vec<PathBuf>, RenderError>;
}

/// `HH:MM` of a timestamp, with a `dN ` prefix after the first day.
pub fn clock_label(t: i64) -> String {
    let day = t.div_euclid(86_400);
    let s = t.rem_euclid(86_400);
    let hm = format!("{:02}:{:02}", s / 3600, (s % 3600) / 60);
    if day == 0 {
        hm
    } else {
        format!("d{day} {hm}")
    }
}

/// One wide CSV: a row per frame, a column per component, plus the total.
#[derive(Debug, Default, Clone, Copy)]
pub struct CsvSeriesRenderer;

impl Renderer for CsvSeriesRenderer {
    fn name(&self) -> &'static str {
        "csv"
    }

    fn description(&self) -> &'static str {
        "per-component time series, one row per snapshot"
    }

    fn render(&self, input: &RenderInput<'_>, out_dir: &Path) -> Result<Vec<PathBuf>, RenderError> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join("series.csv");
        let comps: Vec<(usize, Component)> = input
            .topo
            .catalog()
            .components()
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, c)| !(input.fold_transfers && Topology::component_kind(*c) == ComponentKind::Transfer))
            .collect();
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["t_now".to_string(), "clock".to_string()];
        header.extend(comps.iter().map(|(_, c)| input.topo.component_name(*c)));
        header.push("total".into());
        w.write_record(&header)?;
        for f in input.frames {
            let mut row = vec![f.t_now.to_string(), clock_label(f.t_now)];
            row.extend(comps.iter().map(|(k, _)| f.values[*k].to_string()));
            row.push(f.values.iter().sum::<f64>().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(vec![path])
    }
}

/// One SVG map per frame with stations, segments and transfer points
/// coloured by expected count.
#[derive(Debug, Default, Clone, Copy)]
pub struct SvgMapRenderer;

const WIDTH: f64 = 960.0;
const MAP_HEIGHT: f64 = 560.0;
const MARGIN: f64 = 60.0;
const LEGEND_HEIGHT: f64 = 70.0;

impl SvgMapRenderer {
    fn project(topo: &Topology) -> Vec<(f64, f64)> {
        let pos: Vec<(f64, f64)> = topo.stations().iter().map(|s| s.position.expect("layout checked")).collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &pos {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let sx = (WIDTH - 2.0 * MARGIN) / (x1 - x0).max(1e-9);
        let sy = (MAP_HEIGHT - 2.0 * MARGIN) / (y1 - y0).max(1e-9);
        let s = sx.min(sy);
        // y grows upwards in the layout
        pos.iter().map(|&(x, y)| (MARGIN + (x - x0) * s, MARGIN + (y1 - y) * s)).collect()
    }

    pub fn frame_svg(&self, input: &RenderInput<'_>, scale: &ColorScale, frame: &Frame) -> String {
        let topo = input.topo;
        let catalog = topo.catalog();
        let xy = Self::project(topo);
        let comp_index: BTreeMap<Component, usize> =
            catalog.components().iter().enumerate().map(|(k, c)| (*c, k)).collect();
        let n_lines = topo.lines().len() as f64;
        let mut svg = String::new();
        let height = MAP_HEIGHT + LEGEND_HEIGHT;
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
        );
        let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="30" font-size="18">Expected passengers at {}</text>"#,
            clock_label(frame.t_now)
        );

        for (g, seg) in topo.segments().iter().enumerate() {
            let k = comp_index[&Component::Segment(crate::network::SegmentIdx(g as u32))];
            let v = frame.values[k];
            let (ax, ay) = xy[seg.a.index()];
            let (bx, by) = xy[seg.b.index()];
            let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt().max(1e-9);
            // parallel segments of different lines are drawn side by side
            let off = (seg.line.index() as f64 - (n_lines - 1.0) / 2.0) * 7.0;
            let (nx, ny) = (-(by - ay) / len * off, (bx - ax) / len * off);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="6" stroke-linecap="round"><title>{} {:.2}</title></line>"##,
                ax + nx,
                ay + ny,
                bx + nx,
                by + ny,
                scale.color(v),
                seg.id,
                v
            );
        }
        for (s, station) in topo.stations().iter().enumerate() {
            let st = crate::network::StationIdx(s as u32);
            let v = frame.values[comp_index[&Component::Station(st)]];
            let (x, y) = xy[s];
            let _ = writeln!(
                svg,
                r##"<circle cx="{x:.1}" cy="{y:.1}" r="9" fill="{}" stroke="#333333" stroke-width="1.5"><title>{} {v:.2}</title></circle>"##,
                scale.color(v),
                station.id
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
                x,
                y - 14.0,
                station.id
            );
            if !input.fold_transfers {
                if let Some(&k) = comp_index.get(&Component::TransferPoint(st)) {
                    let tv = frame.values[k];
                    let name = topo.component_name(Component::TransferPoint(st));
                    let _ = writeln!(
                        svg,
                        r##"<rect x="{:.1}" y="{:.1}" width="16" height="16" fill="{}" stroke="#333333" stroke-width="1.5"><title>{name} {tv:.2}</title></rect>"##,
                        x + 6.0,
                        y + 10.0,
                        scale.color(tv)
                    );
                    let _ =
                        writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="10">{name}</text>"#, x + 25.0, y + 23.0);
                }
            }
        }

        let ly = MAP_HEIGHT + 15.0;
        let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{:.1}" font-size="12">Expected count</text>"#, ly - 2.0);
        for (b, color) in PALETTE.iter().enumerate() {
            let x = MARGIN + b as f64 * 150.0;
            let _ = writeln!(
                svg,
                r##"<rect x="{x:.1}" y="{:.1}" width="24" height="16" fill="{color}" stroke="#333333"/>"##,
                ly + 8.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
                x + 30.0,
                ly + 21.0,
                scale.label(b)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

impl Renderer for SvgMapRenderer {
    fn name(&self) -> &'static str {
        "svg"
    }

    fn description(&self) -> &'static str {
        "network map per snapshot with a five-bin colour legend"
    }

    fn render(&self, input: &RenderInput<'_>, out_dir: &Path) -> Result<Vec<PathBuf>, RenderError> {
        if !input.topo.has_layout() {
            return Err(RenderError::MissingLayout);
        }
        fs::create_dir_all(out_dir)?;
        let scale = input.scale();
        let mut paths = Vec::with_capacity(input.frames.len());
        for f in input.frames {
            let path = out_dir.join(format!("map_{}.svg", f.t_now));
            fs::write(&path, self.frame_svg(input, &scale, f))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Named renderers, selected at run time.
pub struct RendererRegistry {
    entries: BTreeMap<&'static str, Box<dyn Renderer>>,
}

impl RendererRegistry {
    pub fn empty() -> Self {
        RendererRegistry { entries: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SvgMapRenderer));
        r.register(Box::new(CsvSeriesRenderer));
        r
    }

    pub fn register(&mut self, renderer: Box<dyn Renderer>) {
        self.entries.insert(renderer.name(), renderer);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Renderer, RenderError> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| RenderError::UnknownRenderer { name: name.into(), known: self.names().join(", ") })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

impl Default for RendererRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::load_topology;

    const SIX_STATION: &str = include_str!("../../../data/six_station.toml");

    fn frames(topo: &Topology, n: usize) -> Vec<Frame> {
        let k = topo.catalog().components().len();
        (0..n)
            .map(|i| Frame { t_now: 8 * 3600 + 600 * i as i64, values: (0..k).map(|c| (c * (i + 1)) as f64).collect() })
            .collect()
    }

    #[test]
    fn quantile_edges_and_bins() {
        let s = ColorScale::from_values((1..=10).map(|v| v as f64));
        assert_eq!(s.edges, [2.0, 4.0, 6.0, 8.0]);
        assert_eq!(s.bin(0.0), 0);
        assert_eq!(s.bin(2.0), 0);
        assert_eq!(s.bin(2.5), 1);
        assert_eq!(s.bin(100.0), 4);
    }

    #[test]
    fn all_zero_is_the_lowest_bin() {
        let s = ColorScale::from_values(vec![0.0; 20]);
        assert_eq!(s.bin(0.0), 0);
        let topo = load_topology(SIX_STATION).unwrap();
        let zero = vec![Frame { t_now: 0, values: vec![0.0; topo.catalog().components().len()] }];
        let input = RenderInput { topo: &topo, frames: &zero, fold_transfers: false };
        let svg = SvgMapRenderer.frame_svg(&input, &input.scale(), &zero[0]);
        // higher bins appear only in the legend
        for color in &PALETTE[1..] {
            assert_eq!(svg.matches(color).count(), 1, "{color}");
        }
    }

    #[test]
    fn one_svg_per_frame_with_legend_and_transfer_block() {
        let topo = load_topology(SIX_STATION).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let fr = frames(&topo, 1);
        let input = RenderInput { topo: &topo, frames: &fr, fold_transfers: false };
        let paths = SvgMapRenderer.render(&input, dir.path()).unwrap();
        assert_eq!(paths.len(), 1);
        let svg = fs::read_to_string(&paths[0]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("E/Trans"));
        assert!(svg.contains("Expected count"));
        assert!(svg.contains("08:00"));
        for color in PALETTE {
            assert!(svg.contains(color));
        }
        let folded = RenderInput { fold_transfers: true, ..input };
        assert!(!SvgMapRenderer.frame_svg(&folded, &folded.scale(), &fr[0]).contains("E/Trans"));
    }

    #[test]
    fn svg_needs_a_layout() {
        let doc = SIX_STATION
            .lines()
            .filter(|l| !l.starts_with("x =") && !l.starts_with("y ="))
            .collect::<Vec<_>>()
            .join("\n");
        let topo = load_topology(&doc).unwrap();
        let fr = frames(&topo, 1);
        let input = RenderInput { topo: &topo, frames: &fr, fold_transfers: false };
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(SvgMapRenderer.render(&input, dir.path()), Err(RenderError::MissingLayout)));
        assert_eq!(CsvSeriesRenderer.render(&input, dir.path()).unwrap().len(), 1);
    }

    #[test]
    fn series_csv_has_a_row_per_frame() {
        let topo = load_topology(SIX_STATION).unwrap();
        let fr = frames(&topo, 3);
        let dir = tempfile::tempdir().unwrap();
        let input = RenderInput { topo: &topo, frames: &fr, fold_transfers: false };
        let path = &CsvSeriesRenderer.render(&input, dir.path()).unwrap()[0];
        let text = fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("t_now,clock,A,"));
        assert!(lines[0].ends_with(",E/Trans,total"));
        assert!(lines[2].starts_with("29400,08:10,"));
    }

    #[test]
    fn snapshot_csv_reads_back() {
        let topo = load_topology(SIX_STATION).unwrap();
        let names: Vec<String> = topo.catalog().components().iter().map(|c| topo.component_name(*c)).collect();
        let mut text = String::from("component_id,kind,expected_count\n");
        text.push_str(&format!("{},segment,2.5\n", names[7]));
        text.push_str("total,system,2.5\n");
        let f = read_snapshot_csv(&topo, 60, text.as_bytes()).unwrap();
        assert_eq!(f.values[7], 2.5);
        assert_eq!(f.values.iter().sum::<f64>(), 2.5);
        let bad = "component_id,kind,expected_count\nQQ,station,1\n";
        assert!(read_snapshot_csv(&topo, 0, bad.as_bytes()).is_err());
    }

    #[test]
    fn registry_names() {
        let r = RendererRegistry::builtin();
        assert_eq!(r.names(), vec!["csv", "svg"]);
        assert!(r.get("png").err().unwrap().to_string().contains("csv, svg"));
    }

    #[test]
    fn clock_labels() {
        assert_eq!(clock_label(8 * 3600 + 600), "08:10");
        assert_eq!(clock_label(86_400 * 6 + 20 * 3600), "d6 20:00");
    }
}
