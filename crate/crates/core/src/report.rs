//! Episode artifacts: static SVG plots and the CSV/JSON/TOML file set.
//!
//! The plots are written directly as SVG strings — a polyline chart needs no
//! plotting dependency and the files stay diffable. Four figures cover an
//! episode: the XY ground track, the parameter estimates with their ±2σ
//! credible bands, the goal-error norm, and the information weight γ.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::EpisodeLog;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot plot an empty episode log")]
    EmptyLog,
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialising summary: {0}")]
    Summary(#[from] serde_json::Error),
}

/// Write the full artifact set for one episode into `outdir`:
/// `episode.csv`, `summary.json`, `scenario.toml` and the four SVG plots.
/// Returns the paths written, in that order.
pub fn write_episode_artifacts(
    log: &EpisodeLog,
    outdir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    if log.rows.is_empty() {
        return Err(ReportError::EmptyLog);
    }
    fs::create_dir_all(outdir).map_err(|source| ReportError::Io {
        path: outdir.to_path_buf(),
        source,
    })?;

    let summary = serde_json::to_string_pretty(&log.summary())?;
    let scenario = log.config.to_toml_string();
    let files = [
        ("episode.csv", log.to_csv()),
        ("summary.json", summary + "\n"),
        ("scenario.toml", scenario),
        ("trajectory_xy.svg", trajectory_svg(log)),
        ("parameter_estimates.svg", estimates_svg(log)),
        ("error_norm.svg", error_norm_svg(log)),
        ("gamma.svg", gamma_svg(log)),
    ];

    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = outdir.join(name);
        fs::write(&path, contents).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

/// Write just the four SVG plots, returning their paths.
pub fn emit_plots(log: &EpisodeLog, outdir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if log.rows.is_empty() {
        return Err(ReportError::EmptyLog);
    }
    fs::create_dir_all(outdir).map_err(|source| ReportError::Io {
        path: outdir.to_path_buf(),
        source,
    })?;
    let files = [
        ("trajectory_xy.svg", trajectory_svg(log)),
        ("parameter_estimates.svg", estimates_svg(log)),
        ("error_norm.svg", error_norm_svg(log)),
        ("gamma.svg", gamma_svg(log)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = outdir.join(name);
        fs::write(&path, contents).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

// --- individual figures ---

/// Ground track in the XY plane with start and goal markers, equal aspect.
pub fn trajectory_svg(log: &EpisodeLog) -> String {
    let xs: Vec<f64> = log.rows.iter().map(|r| r.x_true.r.x).collect();
    let ys: Vec<f64> = log.rows.iter().map(|r| r.x_true.r.y).collect();
    let goal = log.config.goal();
    let (gx, gy) = (goal.state.r.x, goal.state.r.y);

    let mut c = Chart::new(640.0, 440.0, &log.titled("ground track"), "x [m]", "y [m]");
    c.include(&xs);
    c.include(&ys);
    c.include(&[gx, gy]);
    c.equal_aspect();

    let mut body = String::new();
    c.polyline(&mut body, &xs, &ys, "#1f77b4", 1.6, Some("track"));
    c.marker(&mut body, xs[0], ys[0], "#1f77b4", MarkerShape::Circle);
    c.marker(&mut body, gx, gy, "#d62728", MarkerShape::Cross);
    c.label_near(&mut body, xs[0], ys[0], "start");
    c.label_near(&mut body, gx, gy, "goal");
    c.render(body)
}

/// The four inertial-parameter estimates against time, each with the
/// `exp(ln θ̂ ± 2σ)` band from the log-space covariance diagonal and a dashed
/// line at the true value.
pub fn estimates_svg(log: &EpisodeLog) -> String {
    let t: Vec<f64> = log.rows.iter().map(|r| r.t).collect();
    let truth = log.config.true_params().to_vec();
    let names = ["mass [kg]", "ixx [kg m²]", "iyy [kg m²]", "izz [kg m²]"];

    let (w, h) = (880.0, 620.0);
    let mut out = svg_open(w, h);
    let _ = write!(
        out,
        "<text x=\"{:.0}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\" \
         font-family=\"sans-serif\">{}</text>",
        w / 2.0,
        escape_xml(&log.titled("parameter estimates, ±2σ bands"))
    );

    for (i, name) in names.iter().enumerate() {
        let est: Vec<f64> = log.rows.iter().map(|r| r.theta_est.to_vec()[i]).collect();
        let (lo, hi): (Vec<f64>, Vec<f64>) = log
            .rows
            .iter()
            .map(|r| {
                let sigma = r.cov_log_diag[i].max(0.0).sqrt();
                let e = r.theta_est.to_vec()[i];
                (e * (-2.0 * sigma).exp(), e * (2.0 * sigma).exp())
            })
            .unzip();

        let mut c = Chart::sub(430.0, 295.0, name, "t [s]", "");
        c.origin(10.0 + 430.0 * (i % 2) as f64, 30.0 + 295.0 * (i / 2) as f64);
        c.include(&t);
        c.include_y(&lo);
        c.include_y(&hi);
        c.include_y(&[truth[i]]);
        c.pad();

        let mut body = String::new();
        c.band(&mut body, &t, &lo, &hi, "#1f77b4");
        c.hline(&mut body, truth[i], "#d62728", "4 3");
        c.polyline(&mut body, &t, &est, "#1f77b4", 1.6, None);
        out.push_str(&c.render_into(body));
    }
    out.push_str("</svg>\n");
    out
}

/// Norm of the 12-dimensional goal error against time, with the arrival
/// tolerance marked.
pub fn error_norm_svg(log: &EpisodeLog) -> String {
    let t: Vec<f64> = log.rows.iter().map(|r| r.t).collect();
    let e: Vec<f64> = log.rows.iter().map(|r| r.error_norm).collect();

    let mut c = Chart::new(640.0, 400.0, &log.titled("goal error"), "t [s]", "‖error‖");
    c.include(&t);
    c.include_y(&e);
    c.include_y(&[0.0, log.config.goal_tolerance]);
    c.pad();

    let mut body = String::new();
    c.hline(&mut body, log.config.goal_tolerance, "#7f7f7f", "4 3");
    c.polyline(&mut body, &t, &e, "#1f77b4", 1.6, Some("error-norm"));
    c.render(body)
}

/// Information weight γ against time; identically zero when information
/// weighting is disabled.
pub fn gamma_svg(log: &EpisodeLog) -> String {
    let t: Vec<f64> = log.rows.iter().map(|r| r.t).collect();
    let g: Vec<f64> = log.rows.iter().map(|r| r.gamma).collect();

    let mut c = Chart::new(640.0, 400.0, &log.titled("information weight"), "t [s]", "γ");
    c.include(&t);
    c.include_y(&g);
    c.include_y(&[0.0]);
    c.pad();

    let mut body = String::new();
    c.polyline(&mut body, &t, &g, "#2ca02c", 1.6, Some("gamma-series"));
    c.render(body)
}

// --- minimal XML well-formedness check ---

/// Validate that `doc` is a single well-formed XML element tree (prolog and
/// comments allowed). This is a structural tag-nesting check, not a schema
/// validation; it is what the artifact tests and the selftest run over the
/// emitted SVGs.
pub fn check_xml_well_formed(doc: &str) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    let mut roots = 0usize;
    let mut rest = doc;

    while let Some(open) = rest.find('<') {
        rest = &rest[open + 1..];
        if let Some(r) = rest.strip_prefix("!--") {
            let end = r.find("-->").ok_or("unterminated comment")?;
            rest = &r[end + 3..];
            continue;
        }
        if rest.starts_with('?') {
            let end = rest.find("?>").ok_or("unterminated prolog")?;
            rest = &rest[end + 2..];
            continue;
        }
        let end = rest.find('>').ok_or("unterminated tag")?;
        let tag = &rest[..end];
        rest = &rest[end + 1..];

        if let Some(name) = tag.strip_prefix('/') {
            let name = name.trim();
            match stack.pop() {
                Some(top) if top == name => {}
                Some(top) => return Err(format!("</{name}> closes <{top}>")),
                None => return Err(format!("</{name}> with nothing open")),
            }
        } else {
            let self_closing = tag.ends_with('/');
            let body = tag.trim_end_matches('/');
            let name = body
                .split_whitespace()
                .next()
                .ok_or("empty tag name")?
                .to_string();
            if stack.is_empty() {
                roots += 1;
            }
            if !self_closing {
                stack.push(name);
            }
        }
    }

    if let Some(top) = stack.pop() {
        return Err(format!("<{top}> never closed"));
    }
    match roots {
        0 => Err("no root element".into()),
        1 => Ok(()),
        n => Err(format!("{n} root elements")),
    }
}

// --- chart plumbing ---

enum MarkerShape {
    Circle,
    Cross,
}

/// A single axes rectangle with linear x/y mapping and basic decorations.
struct Chart {
    w: f64,
    h: f64,
    ox: f64,
    oy: f64,
    ml: f64,
    mr: f64,
    mt: f64,
    mb: f64,
    title: String,
    xlabel: String,
    ylabel: String,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    standalone: bool,
}

impl Chart {
    fn new(w: f64, h: f64, title: &str, xlabel: &str, ylabel: &str) -> Self {
        Chart {
            w,
            h,
            ox: 0.0,
            oy: 0.0,
            ml: 62.0,
            mr: 16.0,
            mt: 34.0,
            mb: 44.0,
            title: title.to_string(),
            xlabel: xlabel.to_string(),
            ylabel: ylabel.to_string(),
            xmin: f64::INFINITY,
            xmax: f64::NEG_INFINITY,
            ymin: f64::INFINITY,
            ymax: f64::NEG_INFINITY,
            standalone: true,
        }
    }

    /// A subplot cell that renders inside an already-open `<svg>`.
    fn sub(w: f64, h: f64, title: &str, xlabel: &str, ylabel: &str) -> Self {
        let mut c = Self::new(w, h, title, xlabel, ylabel);
        c.standalone = false;
        c
    }

    fn origin(&mut self, ox: f64, oy: f64) {
        self.ox = ox;
        self.oy = oy;
    }

    fn include(&mut self, xs: &[f64]) {
        for &v in xs.iter().filter(|v| v.is_finite()) {
            self.xmin = self.xmin.min(v);
            self.xmax = self.xmax.max(v);
        }
    }

    fn include_y(&mut self, ys: &[f64]) {
        for &v in ys.iter().filter(|v| v.is_finite()) {
            self.ymin = self.ymin.min(v);
            self.ymax = self.ymax.max(v);
        }
    }

    /// For XY tracks both axes share the include() pool; force equal scale.
    fn equal_aspect(&mut self) {
        self.ymin = self.xmin;
        self.ymax = self.xmax;
        self.pad();
        let (pw, ph) = (self.w - self.ml - self.mr, self.h - self.mt - self.mb);
        let sx = (self.xmax - self.xmin) / pw;
        let sy = (self.ymax - self.ymin) / ph;
        let s = sx.max(sy);
        let (cx, cy) = (
            0.5 * (self.xmin + self.xmax),
            0.5 * (self.ymin + self.ymax),
        );
        self.xmin = cx - 0.5 * s * pw;
        self.xmax = cx + 0.5 * s * pw;
        self.ymin = cy - 0.5 * s * ph;
        self.ymax = cy + 0.5 * s * ph;
    }

    fn pad(&mut self) {
        if !self.xmin.is_finite() {
            self.xmin = 0.0;
            self.xmax = 1.0;
        }
        if !self.ymin.is_finite() {
            self.ymin = 0.0;
            self.ymax = 1.0;
        }
        let xr = (self.xmax - self.xmin).max(1e-9);
        let yr = (self.ymax - self.ymin).max(1e-9);
        self.xmin -= 0.05 * xr;
        self.xmax += 0.05 * xr;
        self.ymin -= 0.08 * yr;
        self.ymax += 0.08 * yr;
    }

    fn mx(&self, x: f64) -> f64 {
        self.ox + self.ml + (x - self.xmin) / (self.xmax - self.xmin) * (self.w - self.ml - self.mr)
    }

    fn my(&self, y: f64) -> f64 {
        self.oy + self.h - self.mb
            - (y - self.ymin) / (self.ymax - self.ymin) * (self.h - self.mt - self.mb)
    }

    fn polyline(
        &self,
        out: &mut String,
        xs: &[f64],
        ys: &[f64],
        color: &str,
        width: f64,
        id: Option<&str>,
    ) {
        let mut pts = String::new();
        for (x, y) in xs.iter().zip(ys) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", self.mx(*x), self.my(*y));
            }
        }
        let id_attr = id.map(|i| format!(" id=\"{i}\"")).unwrap_or_default();
        let _ = write!(
            out,
            "<polyline{id_attr} fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" \
             points=\"{}\"/>",
            pts.trim_end()
        );
    }

    /// Shaded region between `lo` and `hi` as a closed polygon.
    fn band(&self, out: &mut String, xs: &[f64], lo: &[f64], hi: &[f64], color: &str) {
        let mut pts = String::new();
        for (x, y) in xs.iter().zip(hi) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", self.mx(*x), self.my(*y));
            }
        }
        for (x, y) in xs.iter().rev().zip(lo.iter().rev()) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", self.mx(*x), self.my(*y));
            }
        }
        let _ = write!(
            out,
            "<polygon fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\" points=\"{}\"/>",
            pts.trim_end()
        );
    }

    fn hline(&self, out: &mut String, y: f64, color: &str, dash: &str) {
        if !y.is_finite() {
            return;
        }
        let _ = write!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" \
             stroke-width=\"1\" stroke-dasharray=\"{dash}\"/>",
            self.ox + self.ml,
            self.my(y),
            self.ox + self.w - self.mr,
            self.my(y)
        );
    }

    fn marker(&self, out: &mut String, x: f64, y: f64, color: &str, shape: MarkerShape) {
        let (cx, cy) = (self.mx(x), self.my(y));
        match shape {
            MarkerShape::Circle => {
                let _ = write!(
                    out,
                    "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"4\" fill=\"{color}\"/>"
                );
            }
            MarkerShape::Cross => {
                let _ = write!(
                    out,
                    "<path d=\"M {x0:.2} {y0:.2} L {x1:.2} {y1:.2} M {x0:.2} {y1:.2} L {x1:.2} {y0:.2}\" \
                     stroke=\"{color}\" stroke-width=\"2\" fill=\"none\"/>",
                    x0 = cx - 5.0,
                    y0 = cy - 5.0,
                    x1 = cx + 5.0,
                    y1 = cy + 5.0,
                );
            }
        }
    }

    fn label_near(&self, out: &mut String, x: f64, y: f64, text: &str) {
        let _ = write!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" font-family=\"sans-serif\" \
             fill=\"#444\">{}</text>",
            self.mx(x) + 7.0,
            self.my(y) - 7.0,
            escape_xml(text)
        );
    }

    fn frame_and_axes(&self) -> String {
        let mut s = String::new();
        let (x0, y0) = (self.ox + self.ml, self.oy + self.mt);
        let (pw, ph) = (self.w - self.ml - self.mr, self.h - self.mt - self.mb);
        let _ = write!(
            s,
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" \
             fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>"
        );
        for i in 0..=4 {
            let fx = self.xmin + (self.xmax - self.xmin) * f64::from(i) / 4.0;
            let px = self.mx(fx);
            let _ = write!(
                s,
                "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" \
                 stroke=\"#333\" stroke-width=\"1\"/>\
                 <text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\" \
                 font-family=\"sans-serif\">{}</text>",
                y0 + ph,
                y0 + ph + 4.0,
                y0 + ph + 16.0,
                fmt_tick(fx)
            );
            let fy = self.ymin + (self.ymax - self.ymin) * f64::from(i) / 4.0;
            let py = self.my(fy);
            let _ = write!(
                s,
                "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0:.2}\" y2=\"{py:.2}\" \
                 stroke=\"#333\" stroke-width=\"1\"/>\
                 <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"10\" \
                 font-family=\"sans-serif\">{}</text>",
                x0 - 4.0,
                x0 - 7.0,
                py + 3.5,
                fmt_tick(fy)
            );
        }
        let _ = write!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" \
             font-family=\"sans-serif\">{}</text>\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" \
             font-family=\"sans-serif\" transform=\"rotate(-90 {:.2} {:.2})\">{}</text>\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\" \
             font-family=\"sans-serif\">{}</text>",
            x0 + pw / 2.0,
            y0 + ph + 34.0,
            escape_xml(&self.xlabel),
            self.ox + 16.0,
            y0 + ph / 2.0,
            self.ox + 16.0,
            y0 + ph / 2.0,
            escape_xml(&self.ylabel),
            x0 + pw / 2.0,
            self.oy + 18.0,
            escape_xml(&self.title)
        );
        s
    }

    /// Finish a standalone chart: draw the frame behind `body` and close.
    /// The range must already be fixed ([`Self::pad`] or
    /// [`Self::equal_aspect`]) before any drawing call.
    fn render(self, body: String) -> String {
        if self.standalone {
            let mut out = svg_open(self.w, self.h);
            out.push_str(&self.frame_and_axes());
            out.push_str(&body);
            out.push_str("</svg>\n");
            out
        } else {
            self.render_into(body)
        }
    }

    /// Finish a subplot cell (no `<svg>` wrapper of its own).
    fn render_into(&self, body: String) -> String {
        let mut out = self.frame_and_axes();
        out.push_str(&body);
        out
    }
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" \
         viewBox=\"0 0 {w:.0} {h:.0}\">\
         <rect x=\"0\" y=\"0\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>"
    )
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(0.01..10000.0).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl EpisodeLog {
    fn titled(&self, what: &str) -> String {
        format!("{} — {}", self.config.name, what)
    }
}
