//! Minimal SVG charts: scatter, line and histogram panels.

use std::fmt::Write;

/// Line from one point to another with a stroke weight.
pub type Segment = ((f64, f64), (f64, f64), f64);

pub const BLUE: &str = "#1f77b4";
pub const RED: &str = "#d62728";
pub const GREEN: &str = "#2ca02c";
pub const ORANGE: &str = "#ff7f0e";
pub const GREY: &str = "#7f7f7f";
pub const PURPLE: &str = "#9467bd";

const W: f64 = 420.0;
const H: f64 = 320.0;
const PAD_L: f64 = 56.0;
const PAD_R: f64 = 14.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 40.0;

#[derive(Debug, Clone)]
pub struct ScatterLayer {
    pub label: String,
    pub color: &'static str,
    pub radius: f64,
    /// Draw a cross instead of a disc.
    pub cross: bool,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LineSeries {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bounds {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Bounds {
    fn from_points<'a>(pts: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut b = Bounds {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y);
        }
        if !b.x0.is_finite() {
            return Bounds {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        let widen = |lo: f64, hi: f64| {
            let span = hi - lo;
            let m = if span > 0.0 { 0.05 * span } else { 0.5 };
            (lo - m, hi + m)
        };
        (b.x0, b.x1) = widen(b.x0, b.x1);
        (b.y0, b.y1) = widen(b.y0, b.y1);
        b
    }

    fn px(&self, x: f64) -> f64 {
        PAD_L + (x - self.x0) / (self.x1 - self.x0) * (W - PAD_L - PAD_R)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD_B - (y - self.y0) / (self.y1 - self.y0) * (H - PAD_T - PAD_B)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn num(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn frame(out: &mut String, b: &Bounds, title: &str, xl: &str, yl: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let (l, r, t, bt) = (PAD_L, W - PAD_R, PAD_T, H - PAD_B);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black" stroke-width="0.8"/>"#,
        r - l,
        bt - t
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = b.x0 + f * (b.x1 - b.x0);
        let yv = b.y0 + f * (b.y1 - b.y0);
        let (x, y) = (b.px(xv), b.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{bt}" x2="{0}" y2="{1}" stroke="black" stroke-width="0.8"/><text x="{0}" y="{2}" font-size="9" text-anchor="middle" font-family="sans-serif">{3}</text>"#,
            num(x),
            bt + 4.0,
            bt + 14.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{l}" y1="{0}" x2="{1}" y2="{0}" stroke="black" stroke-width="0.8"/><text x="{2}" y="{3}" font-size="9" text-anchor="end" font-family="sans-serif">{4}</text>"#,
            num(y),
            l - 4.0,
            l - 6.0,
            num(y + 3.0),
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        (l + r) / 2.0,
        H - 6.0,
        esc(xl)
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{0}" font-size="11" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 12 {0})">{1}</text>"#,
        (t + bt) / 2.0,
        esc(yl)
    );
}

fn legend(out: &mut String, items: &[(&str, &str)]) {
    for (i, (label, color)) in items.iter().enumerate() {
        let y = PAD_T + 12.0 + 13.0 * i as f64;
        let x = W - PAD_R - 110.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="9" height="9" fill="{color}"/><text x="{}" y="{}" font-size="10" font-family="sans-serif">{}</text>"#,
            y - 8.0,
            x + 13.0,
            y,
            esc(label)
        );
    }
}

fn wrap(body: String) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n{body}</svg>\n"
    )
}

/// Scatter panel with optional line segments drawn underneath
/// (`(from, to, opacity)`).
pub fn scatter(
    title: &str,
    layers: &[ScatterLayer],
    segments: &[Segment],
    trails: &[Vec<(f64, f64)>],
) -> String {
    let all = layers
        .iter()
        .flat_map(|l| l.points.iter())
        .chain(trails.iter().flatten());
    let b = Bounds::from_points(all);
    let mut out = String::new();
    frame(&mut out, &b, title, "x", "y");
    for t in trails {
        if t.len() < 2 {
            continue;
        }
        let pts: Vec<String> = t
            .iter()
            .map(|&(x, y)| format!("{},{}", num(b.px(x)), num(b.py(y))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{GREY}" stroke-width="0.7"/>"#,
            pts.join(" ")
        );
    }
    for &((x0, y0), (x1, y1), a) in segments {
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-opacity="{}" stroke-width="1"/>"#,
            num(b.px(x0)),
            num(b.py(y0)),
            num(b.px(x1)),
            num(b.py(y1)),
            num(a.clamp(0.05, 1.0))
        );
    }
    for l in layers {
        for &(x, y) in &l.points {
            let (cx, cy) = (b.px(x), b.py(y));
            if l.cross {
                let r = l.radius;
                let _ = writeln!(
                    out,
                    r#"<path d="M{} {}L{} {}M{} {}L{} {}" stroke="{}" stroke-width="1.5"/>"#,
                    num(cx - r),
                    num(cy - r),
                    num(cx + r),
                    num(cy + r),
                    num(cx - r),
                    num(cy + r),
                    num(cx + r),
                    num(cy - r),
                    l.color
                );
            } else {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="{}" fill="{}" fill-opacity="0.7"/>"#,
                    num(cx),
                    num(cy),
                    l.radius,
                    l.color
                );
            }
        }
    }
    let items: Vec<(&str, &str)> = layers.iter().map(|l| (l.label.as_str(), l.color)).collect();
    legend(&mut out, &items);
    wrap(out)
}

/// Line panel; `log_y` plots `log10` of positive values and drops the rest.
pub fn lines(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[LineSeries],
    log_y: bool,
) -> String {
    let tf = |y: f64| if log_y { y.log10() } else { y };
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(_, y)| !log_y || *y > 0.0)
                .map(|&(x, y)| (x, tf(y)))
                .collect()
        })
        .collect();
    let b = Bounds::from_points(mapped.iter().flatten());
    let mut out = String::new();
    let yl = if log_y {
        format!("log10 {y_label}")
    } else {
        y_label.to_string()
    };
    frame(&mut out, &b, title, x_label, &yl);
    for (s, pts) in series.iter().zip(&mapped) {
        if pts.is_empty() {
            continue;
        }
        let p: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{},{}", num(b.px(x)), num(b.py(y))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.3"/>"#,
            p.join(" "),
            s.color
        );
    }
    let items: Vec<(&str, &str)> = series.iter().map(|s| (s.label.as_str(), s.color)).collect();
    legend(&mut out, &items);
    wrap(out)
}

/// Histogram panel from `(lo, hi, count)` bins.
pub fn histogram(title: &str, x_label: &str, bins: &[(f64, f64, usize)]) -> String {
    let corners: Vec<(f64, f64)> = bins
        .iter()
        .flat_map(|&(lo, hi, c)| [(lo, 0.0), (hi, c as f64)])
        .collect();
    let b = Bounds::from_points(corners.iter());
    let mut out = String::new();
    frame(&mut out, &b, title, x_label, "count");
    for &(lo, hi, c) in bins {
        let (x0, x1) = (b.px(lo), b.px(hi));
        let (y0, y1) = (b.py(c as f64), b.py(0.0));
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{BLUE}" stroke="white" stroke-width="0.5"/>"#,
            num(x0),
            num(y0),
            num((x1 - x0).max(0.0)),
            num((y1 - y0).max(0.0))
        );
    }
    wrap(out)
}

/// Lays complete panels out on a grid with `cols` columns.
pub fn grid(panels: &[String], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let (tw, th) = (W * cols as f64, H * rows as f64);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{tw}\" height=\"{th}\" viewBox=\"0 0 {tw} {th}\">\n"
    );
    for (i, p) in panels.iter().enumerate() {
        let (x, y) = (W * (i % cols) as f64, H * (i / cols) as f64);
        let inner = p.replacen("<svg ", &format!("<svg x=\"{x}\" y=\"{y}\" "), 1);
        out.push_str(&inner);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_is_wellformed() {
        let s = scatter(
            "a < b",
            &[ScatterLayer {
                label: "pts".into(),
                color: BLUE,
                radius: 2.0,
                cross: false,
                points: vec![(0.0, 0.0), (1.0, 2.0)],
            }],
            &[((0.0, 0.0), (1.0, 2.0), 0.5)],
            &[vec![(0.0, 0.0), (0.5, 0.5)]],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 2);
        assert!(s.contains("a &lt; b"));
    }

    #[test]
    fn degenerate_inputs() {
        let h = histogram("h", "d", &[]);
        assert!(h.contains("</svg>"));
        let l = lines(
            "l",
            "x",
            "y",
            &[LineSeries {
                label: "s".into(),
                color: RED,
                points: vec![(0.0, 0.0), (1.0, -1.0)],
            }],
            true,
        );
        assert!(!l.contains("NaN") && !l.contains("inf"));
        let g = grid(&[h.clone(), h], 2);
        assert_eq!(g.matches("<svg").count(), 3);
    }
}
