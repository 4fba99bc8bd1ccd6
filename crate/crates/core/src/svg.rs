//! Minimal path-based line charts.

use std::fmt::Write;

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    /// Draw as a right-continuous step function instead of straight segments.
    pub step: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, color: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            color: color.into(),
            points,
            step: false,
        }
    }

    pub fn stepped(mut self) -> Self {
        self.step = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
    /// Optional vertical marker, e.g. the end of the pAUC range.
    pub x_marker: Option<f64>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            series: Vec::new(),
            x_marker: None,
        }
    }

    /// Fits both ranges to the data, padding a degenerate range by ±0.5.
    pub fn fit_ranges(&mut self) {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return;
        }
        let pad = |lo: f64, hi: f64| if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        self.x_range = pad(x0, x1);
        self.y_range = pad(y0, y1);
    }

    fn px(&self, x: f64) -> f64 {
        let (a, b) = self.x_range;
        LEFT + (x.clamp(a, b) - a) / (b - a) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let (a, b) = self.y_range;
        H - BOTTOM - (y.clamp(a, b) - a) / (b - a) * (H - TOP - BOTTOM)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            (LEFT + W - RIGHT) / 2.0,
            escape(&self.title)
        );
        let (x0, x1) = (self.px(self.x_range.0), self.px(self.x_range.1));
        let (y0, y1) = (self.py(self.y_range.0), self.py(self.y_range.1));
        let _ = writeln!(
            out,
            r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" stroke="black" fill="none"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
            let yv = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            let (tx, ty) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r#"<path d="M{tx:.2},{y0:.2} L{tx:.2},{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                y0 + 4.0,
                y0 + 18.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<path d="M{:.2},{ty:.2} L{x0:.2},{ty:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                x0 - 6.0,
                ty + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
        if let Some(m) = self.x_marker {
            let mx = self.px(m);
            let _ = writeln!(
                out,
                r#"<path d="M{mx:.2},{y0:.2} L{mx:.2},{y1:.2}" stroke="gray" stroke-dasharray="4,3"/>"#
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let d = self.path(s);
            if !d.is_empty() {
                let _ = writeln!(
                    out,
                    r#"<path d="{d}" stroke="{}" stroke-width="1.6" fill="none"/>"#,
                    escape(&s.color)
                );
            }
            let ly = TOP + 10.0 + 18.0 * k as f64;
            let lx = W - RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<path d="M{lx:.2},{ly:.2} L{:.2},{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 20.0,
                escape(&s.color),
                lx + 26.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }

    fn path(&self, s: &Series) -> String {
        let mut d = String::new();
        let mut prev: Option<(f64, f64)> = None;
        for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let (sx, sy) = (self.px(x), self.py(y));
            match prev {
                None => {
                    let _ = write!(d, "M{sx:.2},{sy:.2}");
                }
                Some((_, py)) if s.step => {
                    let _ = write!(d, " L{sx:.2},{py:.2} L{sx:.2},{sy:.2}");
                }
                Some(_) => {
                    let _ = write!(d, " L{sx:.2},{sy:.2}");
                }
            }
            prev = Some((sx, sy));
        }
        d
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_path_per_series() {
        let mut c = LineChart::new("EDC <fnmr>", "discard", "FNMR");
        c.series.push(Series::new("model", "#1f77b4", vec![(0.0, 0.4), (0.5, 0.2), (1.0, 0.0)]).stepped());
        c.series.push(Series::new("ideal", "black", vec![(0.0, 0.4), (0.4, 0.0)]));
        c.x_marker = Some(0.7);
        let svg = c.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("EDC &lt;fnmr&gt;"));
        assert_eq!(svg.matches("stroke-width=\"1.6\"").count(), 2);
    }

    #[test]
    fn fit_ranges_pads_flat_data() {
        let mut c = LineChart::new("t", "x", "y");
        c.series.push(Series::new("a", "red", vec![(1.0, 2.0), (3.0, 2.0)]));
        c.fit_ranges();
        assert_eq!(c.x_range, (1.0, 3.0));
        assert_eq!(c.y_range, (1.5, 2.5));
    }
}
