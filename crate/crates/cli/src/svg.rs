//! Deterministic SVG charts: reliability diagrams and sweep curves.

use std::fmt::Write;

use texcal_core::io::SweepRow;
use texcal_core::metrics::ReliabilityReport;

const PLOT: f64 = 320.0;
const LEFT: f64 = 64.0;
const TOP: f64 = 40.0;
const WIDTH: f64 = LEFT + PLOT + 24.0;
const HEIGHT: f64 = TOP + PLOT + 64.0;

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + PLOT / 2.0,
        escape(title)
    );
}

/// Frame plus y ticks at 0, 0.2, ..., 1 and axis captions.
fn axes(out: &mut String, x_caption: &str, y_caption: &str) {
    let _ = writeln!(
        out,
        r##"<rect class="frame" x="{LEFT}" y="{TOP}" width="{PLOT}" height="{PLOT}" fill="none" stroke="#333"/>"##
    );
    let mut ticks = String::new();
    for i in 0..=5 {
        let v = f64::from(i) / 5.0;
        let y = TOP + PLOT * (1.0 - v);
        let _ = write!(ticks, "M{:.2} {y:.2}h-5", LEFT);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(out, r##"<path class="ticks" d="{ticks}" stroke="#333"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + PLOT / 2.0,
        TOP + PLOT + 36.0,
        escape(x_caption)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + PLOT / 2.0,
        TOP + PLOT / 2.0,
        escape(y_caption)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One accuracy bar per confidence bin (empty bins get a zero-height bar),
/// shaded gaps to the bin's mean confidence, and the identity diagonal.
pub fn reliability_svg(report: &ReliabilityReport, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "confidence", "accuracy");
    let w = PLOT / report.m as f64;
    for b in &report.bins {
        let x = LEFT + w * b.bin_index as f64;
        let h = PLOT * b.accuracy;
        let _ = writeln!(
            out,
            r##"<rect class="bar" x="{x:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="#4a78b5" stroke="#1f3f66"/>"##,
            TOP + PLOT - h
        );
    }
    for b in report.bins.iter().filter(|b| !b.is_empty()) {
        let x = LEFT + w * b.bin_index as f64;
        let (lo, hi) = (b.accuracy.min(b.confidence), b.accuracy.max(b.confidence));
        let _ = writeln!(
            out,
            r##"<rect class="gap" x="{x:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="#d9534f" fill-opacity="0.35"/>"##,
            TOP + PLOT * (1.0 - hi),
            PLOT * (hi - lo)
        );
    }
    let _ = writeln!(
        out,
        r##"<line class="diagonal" x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{TOP}" stroke="#666" stroke-dasharray="6 4"/>"##,
        TOP + PLOT,
        LEFT + PLOT
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">ECE {:.4}  MCE {:.4}  ACE {:.4}</text>"#,
        LEFT,
        TOP + PLOT + 54.0,
        report.ece,
        report.mce,
        report.ace
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">accuracy {:.3}  avg confidence {:.3}</text>"#,
        LEFT + 6.0,
        TOP + 16.0,
        report.accuracy,
        report.avg_confidence
    );
    out.push_str("</svg>\n");
    out
}

/// Accuracy and average confidence against sigma. `log_x` spaces sigma
/// logarithmically (blur); otherwise linearly (noise).
pub fn sweep_svg(rows: &[SweepRow], title: &str, x_caption: &str, log_x: bool) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x_caption, "accuracy / confidence");
    let scale = |s: f64| if log_x { s.log2() } else { s };
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(scale(r.sigma)), hi.max(scale(r.sigma)))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |s: f64| LEFT + PLOT * (scale(s) - lo) / span;
    let py = |v: f64| TOP + PLOT * (1.0 - v);
    for r in rows {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(r.sigma),
            TOP + PLOT + 16.0,
            r.sigma
        );
    }
    let series: [(&str, &str, fn(&SweepRow) -> f64); 2] = [
        ("accuracy", "#1f77b4", |r| r.accuracy),
        ("confidence", "#d62728", |r| r.avg_confidence),
    ];
    for (i, (name, color, value)) in series.iter().enumerate() {
        let points: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.sigma), py(value(r))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="{name}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for r in rows {
            let _ = writeln!(
                out,
                r#"<circle class="{name}" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(r.sigma),
                py(value(r))
            );
        }
        let ly = TOP + PLOT + 54.0;
        let lx = LEFT + 150.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="4" fill="{color}"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 6.0,
            lx + 20.0,
            if *name == "confidence" { "avg confidence" } else { name }
        );
    }
    out.push_str("</svg>\n");
    out
}
