//! Acceptance rate against particle count as a standalone SVG.

use std::fmt::Write;

use crate::config::SamplerKind;
use crate::grid::{Aggregate, Reference};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn colour(sampler: SamplerKind) -> &'static str {
    match sampler {
        SamplerKind::Pmmh => "#1f77b4",
        SamplerKind::Pgibbs => "#2ca02c",
        SamplerKind::Mpgibbs => "#d62728",
        SamplerKind::IdealMh => "#555555",
        SamplerKind::IdealBarker => "#999999",
    }
}

/// Lines of mean acceptance against `log2 N` for every sampler with
/// particles, and horizontal dashed (MH) and dotted (Barker) reference lines.
pub fn render(aggregates: &[Aggregate], reference: Option<&Reference>) -> String {
    let points: Vec<&Aggregate> = aggregates.iter().filter(|a| a.sampler.uses_particles() && a.n > 0).collect();
    let (mut lo, mut hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
        let x = (a.n as f64).log2();
        (lo.min(x), hi.max(x))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1.0 {
        hi = lo + 1.0;
    }
    let (lo, hi) = (lo - 0.25, hi + 0.25);
    let mut top = points.iter().map(|a| a.acceptance_mean).fold(0.0f64, f64::max);
    if let Some(r) = reference {
        top = top.max(r.ideal_mh).max(r.ideal_barker);
    }
    let y_max = ((top * 1.15) * 10.0).ceil().max(1.0) / 10.0;
    let y_max = y_max.min(1.0);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - lo) / (hi - lo) * plot_w;
    let sy = |y: f64| TOP + (1.0 - y / y_max) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // axes
    let (x0, x1, y0, y1) = (sx(lo), sx(hi), sy(0.0), sy(y_max));
    let _ = writeln!(s, r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#);
    let mut x = lo.ceil();
    while x <= hi + 1e-9 {
        let px = sx(x);
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 20.0, 2f64.powf(x).round());
        x += 1.0;
    }
    let steps = (y_max / 0.1).round() as usize;
    for i in 0..=steps {
        let v = i as f64 * 0.1;
        let py = sy(v);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, x0 - 8.0, py + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">number of particles N</text>"#, (x0 + x1) / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">acceptance rate</text>"#,
        (y0 + y1) / 2.0
    );

    let mut legend = Vec::new();
    if let Some(r) = reference {
        for (rate, dash, label) in [(r.ideal_mh, "8,4", "ideal MH"), (r.ideal_barker, "2,3", "ideal Barker")] {
            let py = sy(rate);
            let _ = writeln!(
                s,
                r#"<line x1="{x0:.1}" y1="{py:.1}" x2="{x1:.1}" y2="{py:.1}" stroke="black" stroke-dasharray="{dash}"/>"#
            );
            legend.push((format!("{label} ({rate:.3})"), "black", dash));
        }
    }
    let mut samplers: Vec<SamplerKind> = Vec::new();
    for a in &points {
        if !samplers.contains(&a.sampler) {
            samplers.push(a.sampler);
        }
    }
    for sampler in samplers {
        let c = colour(sampler);
        let mut series: Vec<&&Aggregate> = points.iter().filter(|a| a.sampler == sampler).collect();
        series.sort_by_key(|a| a.n);
        let path: Vec<String> = series
            .iter()
            .map(|a| format!("{:.1},{:.1}", sx((a.n as f64).log2()), sy(a.acceptance_mean)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, path.join(" "));
        for a in &series {
            let (px, py) = (sx((a.n as f64).log2()), sy(a.acceptance_mean));
            let _ = writeln!(s, r#"<circle cx="{px:.1}" cy="{py:.1}" r="3.5" fill="{c}"/>"#);
            if a.acceptance_sd > 0.0 {
                let (ya, yb) = (sy((a.acceptance_mean - a.acceptance_sd).max(0.0)), sy(a.acceptance_mean + a.acceptance_sd));
                let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{ya:.1}" x2="{px:.1}" y2="{yb:.1}" stroke="{c}"/>"#);
            }
        }
        legend.push((sampler.name().to_string(), c, ""));
    }
    for (i, (label, c, dash)) in legend.iter().enumerate() {
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{c}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
            lx + 25.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{label}</text>"#, lx + 32.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}
