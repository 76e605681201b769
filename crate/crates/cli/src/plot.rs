use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use swarmcvt::gcvt::TessellationFile;
use swarmcvt::sim::TracePoint;

use crate::error::{CliError, CliResult};
use crate::run::{
    read_csv, read_json, write_text, GraphFile, SequenceRow, GRAPH_FILE, SCENARIO_FILE, SEQUENCE_FILE,
    TESSELLATION_FILE, TRACES_FILE,
};
use crate::scenario::Scenario;

/// Chi-square quantile with two degrees of freedom at 95%.
pub const CHI2_95: f64 = 5.991;

/// Pixels per km.
const SCALE: f64 = 40.0;
const MARGIN: f64 = 20.0;

pub const TESSELLATION_SVG: &str = "tessellation.svg";
pub const GRAPH_SVG: &str = "graph.svg";
pub const TRAJECTORIES_SVG: &str = "trajectories.svg";

/// Semi-axes (km) and rotation (degrees) of the 95% ellipse of `[Σxx, Σxy, Σyy]`.
pub fn ellipse_axes(cov: [f64; 3]) -> (f64, f64, f64) {
    let [a, b, c] = cov;
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
    let (l1, l2) = (mid + rad, (mid - rad).max(0.0));
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    ((CHI2_95 * l1).sqrt(), (CHI2_95 * l2).sqrt(), angle.to_degrees())
}

struct Canvas {
    height_km: f64,
    body: String,
    width_px: f64,
    height_px: f64,
}

impl Canvas {
    fn new(width_km: f64, height_km: f64) -> Self {
        Self {
            height_km,
            body: String::new(),
            width_px: width_km * SCALE + 2.0 * MARGIN,
            height_px: height_km * SCALE + 2.0 * MARGIN,
        }
    }

    fn x(&self, x: f64) -> f64 {
        MARGIN + x * SCALE
    }

    fn y(&self, y: f64) -> f64 {
        MARGIN + (self.height_km - y) * SCALE
    }

    fn push(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    fn frame(&mut self, scenario: &Scenario) {
        let (w, h) = (scenario.workspace.width, scenario.workspace.height);
        let s = format!(
            r#"<rect class="roi" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="white" stroke="black"/>"#,
            self.x(0.0),
            self.y(h),
            w * SCALE,
            h * SCALE
        );
        self.push(&s);
        for poly in &scenario.workspace.obstacles {
            let pts = poly.vertices.iter().fold(String::new(), |mut acc, v| {
                let _ = write!(acc, "{:.3},{:.3} ", self.x(v[0]), self.y(v[1]));
                acc
            });
            let s = format!(r#"<polygon class="obstacle" points="{}" fill="gray"/>"#, pts.trim_end());
            self.push(&s);
        }
    }

    fn ellipse(&mut self, class: &str, mean: [f64; 2], cov: [f64; 3], stroke: &str) {
        let (a, b, deg) = ellipse_axes(cov);
        let (cx, cy) = (self.x(mean[0]), self.y(mean[1]));
        let s = format!(
            r#"<ellipse class="{class}" cx="{cx:.3}" cy="{cy:.3}" rx="{:.3}" ry="{:.3}" transform="rotate({:.3} {cx:.3} {cy:.3})" fill="none" stroke="{stroke}"/>"#,
            a * SCALE,
            b * SCALE,
            -deg
        );
        self.push(&s);
    }

    fn dot(&mut self, class: &str, p: [f64; 2], r: f64, fill: &str) {
        let s = format!(
            r#"<circle class="{class}" cx="{:.3}" cy="{:.3}" r="{r:.2}" fill="{fill}"/>"#,
            self.x(p[0]),
            self.y(p[1])
        );
        self.push(&s);
    }

    fn triangle(&mut self, class: &str, p: [f64; 2], r: f64, fill: &str) {
        let (cx, cy) = (self.x(p[0]), self.y(p[1]));
        let s = format!(
            r#"<polygon class="{class}" points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="{fill}"/>"#,
            cx,
            cy - r,
            cx - r,
            cy + r,
            cx + r,
            cy + r
        );
        self.push(&s);
    }

    fn line(&mut self, class: &str, a: [f64; 2], b: [f64; 2], stroke: &str) {
        let s = format!(
            r#"<line class="{class}" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{stroke}"/>"#,
            self.x(a[0]),
            self.y(a[1]),
            self.x(b[0]),
            self.y(b[1])
        );
        self.push(&s);
    }

    fn polyline(&mut self, class: &str, pts: &[[f64; 2]], stroke: &str) {
        let p = pts.iter().fold(String::new(), |mut acc, v| {
            let _ = write!(acc, "{:.3},{:.3} ", self.x(v[0]), self.y(v[1]));
            acc
        });
        let s = format!(r#"<polyline class="{class}" points="{}" fill="none" stroke="{stroke}"/>"#, p.trim_end());
        self.push(&s);
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n{}</svg>\n",
            self.width_px, self.height_px, self.width_px, self.height_px, self.body
        )
    }
}

/// Generator means and 95% ellipses over the obstacle map.
pub fn tessellation_svg(scenario: &Scenario, t: &TessellationFile) -> String {
    let mut c = Canvas::new(scenario.workspace.width, scenario.workspace.height);
    c.frame(scenario);
    for g in &t.generators {
        c.ellipse("generator", g.mean, g.cov, "blue");
        c.dot("mean", g.mean, 1.5, "blue");
    }
    c.finish()
}

/// Graph nodes (collocation, start, goal) and edges.
pub fn graph_svg(scenario: &Scenario, g: &GraphFile) -> String {
    let mut c = Canvas::new(scenario.workspace.width, scenario.workspace.height);
    c.frame(scenario);
    for e in &g.edges {
        c.line("edge", g.nodes[e.a].mean, g.nodes[e.b].mean, "lightsteelblue");
    }
    for (i, n) in g.nodes.iter().enumerate() {
        let fill = if i < g.n_collocation {
            "black"
        } else if i < g.n_collocation + g.n_start {
            "green"
        } else {
            "red"
        };
        c.dot("node", n.mean, 2.0, fill);
    }
    c.finish()
}

/// Component mean paths of the mixture sequence, with robot start
/// positions as circles and final positions as triangles.
pub fn trajectories_svg(scenario: &Scenario, seq: &[SequenceRow], traces: &[TracePoint]) -> String {
    let mut c = Canvas::new(scenario.workspace.width, scenario.workspace.height);
    c.frame(scenario);
    let n_comp = seq.iter().map(|r| r.component + 1).max().unwrap_or(0);
    for comp in 0..n_comp {
        let pts: Vec<[f64; 2]> = seq.iter().filter(|r| r.component == comp).map(|r| [r.mean_x, r.mean_y]).collect();
        c.polyline("gc-path", &pts, "purple");
        if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
            c.dot("gc-start", *first, 3.0, "green");
            c.triangle("gc-goal", *last, 3.5, "red");
        }
    }
    let last_k = traces.iter().map(|t| t.k).max().unwrap_or(0);
    for t in traces.iter().filter(|t| t.k == 0) {
        c.dot("robot-start", [t.x, t.y], 1.0, "darkgreen");
    }
    for t in traces.iter().filter(|t| t.k == last_k && last_k > 0) {
        c.triangle("robot-goal", [t.x, t.y], 1.2, "darkred");
    }
    c.finish()
}

/// Writes every plot whose source files are present in `dir`; returns
/// the written paths. A directory without a scenario copy or without any
/// plottable file is an IO error.
pub fn emit_plots(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let scenario_path = dir.join(SCENARIO_FILE);
    if !scenario_path.is_file() {
        return Err(missing(&scenario_path));
    }
    let scenario = Scenario::load(&scenario_path)?;
    let mut written = Vec::new();
    let tess = dir.join(TESSELLATION_FILE);
    if tess.is_file() {
        let text = std::fs::read_to_string(&tess).map_err(|e| CliError::io(&tess, e))?;
        let t = TessellationFile::from_json(&text)?;
        let out = dir.join(TESSELLATION_SVG);
        write_text(&out, &tessellation_svg(&scenario, &t))?;
        written.push(out);
    }
    let graph = dir.join(GRAPH_FILE);
    if graph.is_file() {
        let g: GraphFile = read_json(&graph)?;
        let out = dir.join(GRAPH_SVG);
        write_text(&out, &graph_svg(&scenario, &g))?;
        written.push(out);
    }
    let seq = dir.join(SEQUENCE_FILE);
    if seq.is_file() {
        let rows: Vec<SequenceRow> = read_csv(&seq)?;
        let traces_path = dir.join(TRACES_FILE);
        let traces: Vec<TracePoint> = if traces_path.is_file() { read_csv(&traces_path)? } else { Vec::new() };
        let out = dir.join(TRAJECTORIES_SVG);
        write_text(&out, &trajectories_svg(&scenario, &rows, &traces))?;
        written.push(out);
    }
    if written.is_empty() {
        return Err(missing(&dir.join(TESSELLATION_FILE)));
    }
    Ok(written)
}

/// Plots `dir` itself if it is a run directory, otherwise every run
/// directory directly below it.
pub fn emit_plots_recursive(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if dir.join(SCENARIO_FILE).is_file() {
        return emit_plots(dir);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SCENARIO_FILE).is_file())
        .collect();
    if subdirs.is_empty() {
        return Err(missing(&dir.join(SCENARIO_FILE)));
    }
    subdirs.sort();
    let mut written = Vec::new();
    for d in subdirs {
        written.extend(emit_plots(&d)?);
    }
    Ok(written)
}

fn missing(path: &Path) -> CliError {
    CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "results file missing"))
}
