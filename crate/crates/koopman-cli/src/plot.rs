//! Deterministic SVG plots.
//!
//! Plots are presentation-only: every number they show also lives in a CSV
//! result file, and each SVG carries a provenance comment naming that CSV and
//! its content hash. [`provenance`] reads the comment back, which is what the
//! round-trip checks use.

use nalgebra::Complex;

type C64 = Complex<f64>;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 40.0;

/// Residual heat map over a plane grid: one cell per evaluation point.
pub fn heat_map_svg(
    points: &[C64],
    residuals: &[f64],
    spacing: f64,
    source_file: &str,
    source_sha256: &str,
) -> String {
    let mut svg = header(source_file, source_sha256);
    if points.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let bounds = Bounds::around(points, spacing);
    let max_res = residuals.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
    let cell = (spacing / bounds.span * plot_span()).max(1.0);
    for (z, &r) in points.iter().zip(residuals) {
        let (x, y) = bounds.to_pixels(z);
        let (red, green, blue) = color_ramp((r / max_res).clamp(0.0, 1.0));
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({red},{green},{blue})\"/>\n",
            x - cell / 2.0,
            y - cell / 2.0,
            cell,
            cell,
        ));
    }
    frame(&mut svg, &bounds);
    svg.push_str("</svg>\n");
    svg
}

/// Spectral scatter: unit circle for reference plus one marker per point.
pub fn scatter_svg(points: &[C64], source_file: &str, source_sha256: &str) -> String {
    let mut svg = header(source_file, source_sha256);
    let mut all: Vec<C64> = points.to_vec();
    all.push(C64::new(1.2, 1.2));
    all.push(C64::new(-1.2, -1.2));
    let bounds = Bounds::around(&all, 0.0);
    let (cx, cy) = bounds.to_pixels(&C64::new(0.0, 0.0));
    let radius = plot_span() / bounds.span;
    svg.push_str(&format!(
        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{radius:.2}\" fill=\"none\" stroke=\"#999999\" stroke-width=\"1\"/>\n"
    ));
    for z in points {
        let (x, y) = bounds.to_pixels(z);
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"#1a4f8b\"/>\n"
        ));
    }
    frame(&mut svg, &bounds);
    svg.push_str("</svg>\n");
    svg
}

/// Extracts `(file, sha256)` from a plot's provenance comment.
pub fn provenance(svg: &str) -> Option<(String, String)> {
    let start = svg.find("<!-- source file=")?;
    let rest = &svg[start + "<!-- source file=".len()..];
    let (file, rest) = rest.split_once(" sha256=")?;
    let (sha, _) = rest.split_once(" -->")?;
    Some((file.to_string(), sha.to_string()))
}

struct Bounds {
    re0: f64,
    im0: f64,
    span: f64,
}

impl Bounds {
    fn around(points: &[C64], pad: f64) -> Bounds {
        let mut re0 = f64::INFINITY;
        let mut re1 = f64::NEG_INFINITY;
        let mut im0 = f64::INFINITY;
        let mut im1 = f64::NEG_INFINITY;
        for z in points {
            re0 = re0.min(z.re);
            re1 = re1.max(z.re);
            im0 = im0.min(z.im);
            im1 = im1.max(z.im);
        }
        let span = ((re1 - re0).max(im1 - im0) + 2.0 * pad).max(1e-9);
        let re_mid = (re0 + re1) / 2.0;
        let im_mid = (im0 + im1) / 2.0;
        Bounds { re0: re_mid - span / 2.0, im0: im_mid - span / 2.0, span }
    }

    fn to_pixels(&self, z: &C64) -> (f64, f64) {
        let x = MARGIN + (z.re - self.re0) / self.span * plot_span();
        let y = MARGIN + (1.0 - (z.im - self.im0) / self.span) * plot_span();
        (x, y)
    }
}

fn plot_span() -> f64 {
    SIZE - 2.0 * MARGIN
}

fn header(source_file: &str, source_sha256: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" viewBox=\"0 0 {s} {s}\">\n<!-- source file={source_file} sha256={source_sha256} -->\n<rect width=\"{s}\" height=\"{s}\" fill=\"#ffffff\"/>\n",
        s = SIZE as u32
    )
}

fn frame(svg: &mut String, bounds: &Bounds) {
    svg.push_str(&format!(
        "<rect x=\"{m:.2}\" y=\"{m:.2}\" width=\"{w:.2}\" height=\"{w:.2}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        w = plot_span(),
    ));
    let label = |v: f64| format!("{v:.3}");
    svg.push_str(&format!(
        "<text x=\"{m:.2}\" y=\"{y:.2}\" font-size=\"12\" fill=\"#333333\">re {a} .. {b}, im {c} .. {d}</text>\n",
        m = MARGIN,
        y = SIZE - MARGIN / 2.0,
        a = label(bounds.re0),
        b = label(bounds.re0 + bounds.span),
        c = label(bounds.im0),
        d = label(bounds.im0 + bounds.span),
    ));
}

fn color_ramp(t: f64) -> (u8, u8, u8) {
    let lerp = |a: u8, b: u8, u: f64| -> u8 { (a as f64 + (b as f64 - a as f64) * u).round() as u8 };
    if t < 0.5 {
        let u = 2.0 * t;
        (lerp(13, 204, u), lerp(8, 71, u), lerp(135, 120, u))
    } else {
        let u = 2.0 * t - 1.0;
        (lerp(204, 240, u), lerp(71, 249, u), lerp(120, 33, u))
    }
}
