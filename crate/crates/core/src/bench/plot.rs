//! Hand-written SVG plots of sweep results.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use super::TrialRecord;
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

const TIME_LABEL: &str = "Time taken (s)";

fn ok_records(records: &[TrialRecord]) -> Result<Vec<&TrialRecord>> {
    let ok: Vec<_> = records.iter().filter(|r| r.is_ok()).collect();
    if ok.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(ok)
}

/// Dark for the smallest DH size, lighter as sizes grow.
fn shade(rank: usize, count: usize) -> String {
    let t = if count <= 1 { 0.0 } else { rank as f64 / (count - 1) as f64 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(8.0, 158.0), lerp(48.0, 202.0), lerp(107.0, 225.0))
}

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= v {
            return step * mag;
        }
    }
    10.0 * mag
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        title
    );
}

fn axes(svg: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
    let _ = writeln!(svg, r#"<line class="axis x-axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line class="axis y-axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(
        svg,
        r#"<text class="axis-label x-label" x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 22.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis-label y-label" x="22" y="{y}" text-anchor="middle" transform="rotate(-90 22 {y})">{y_label}</text>"#,
        y = (y0 + y1) / 2.0
    );
}

fn y_ticks(svg: &mut String, max: f64, label_fmt: impl Fn(f64) -> String) {
    for i in 0..=5 {
        let v = max * i as f64 / 5.0;
        let y = HEIGHT - BOTTOM - (HEIGHT - BOTTOM - TOP) * i as f64 / 5.0;
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            label_fmt(v)
        );
    }
}

fn legend_entry(svg: &mut String, index: usize, color: &str, label: &str, marker: &str) {
    let x = WIDTH - RIGHT + 20.0;
    let y = TOP + 10.0 + 22.0 * index as f64;
    let shape = if marker == "circle" {
        format!(r#"<circle cx="{}" cy="{}" r="5" fill="{color}"/>"#, x + 5.0, y)
    } else {
        format!(r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/>"#, y - 5.0)
    };
    let _ =
        writeln!(svg, r#"<g class="legend-entry">{shape}<text x="{}" y="{}">{label}</text></g>"#, x + 16.0, y + 4.0);
}

/// Scatter of total time against HMAC key size, one colour per DH size.
pub fn emit_scatter(records: &[TrialRecord], out: &mut dyn Write) -> Result<()> {
    let ok = ok_records(records)?;
    let dh_sizes: Vec<u32> = ok.iter().map(|r| r.dh_bits).collect::<BTreeSet<_>>().into_iter().collect();
    let hmac_sizes: Vec<u32> = ok.iter().map(|r| r.hmac_bits).collect::<BTreeSet<_>>().into_iter().collect();
    let y_max = nice_max(ok.iter().map(|r| r.t_total).fold(0.0, f64::max) * 1.05);

    let (hmac_lo, hmac_hi) = (hmac_sizes[0] as f64, *hmac_sizes.last().unwrap() as f64);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let pad = 40.0;
    let x_of = |hmac: u32| {
        if hmac_hi == hmac_lo {
            LEFT + plot_w / 2.0
        } else {
            LEFT + pad + (plot_w - 2.0 * pad) * (hmac as f64 - hmac_lo) / (hmac_hi - hmac_lo)
        }
    };

    let mut svg = String::new();
    header(&mut svg, "Session time by key size");
    axes(&mut svg, "HMAC key size (bits)", TIME_LABEL);
    y_ticks(&mut svg, y_max, |v| format!("{v:.3}"));
    for &h in &hmac_sizes {
        let x = x_of(h);
        let y = HEIGHT - BOTTOM;
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y}" x2="{x}" y2="{}" stroke="black"/>"#, y + 5.0);
        let _ = writeln!(svg, r#"<text class="tick" x="{x}" y="{}" text-anchor="middle">{h}</text>"#, y + 20.0);
    }

    let _ = writeln!(svg, r#"<g class="points">"#);
    for r in &ok {
        let rank = dh_sizes.iter().position(|&d| d == r.dh_bits).unwrap();
        // spread DH sizes sideways so they don't overlap at one HMAC size
        let offset = (rank as f64 - (dh_sizes.len() - 1) as f64 / 2.0) * 7.0;
        let cx = x_of(r.hmac_bits) + offset;
        let cy = HEIGHT - BOTTOM - plot_h * r.t_total / y_max;
        let _ = writeln!(
            svg,
            r#"<circle class="point" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{}" fill-opacity="0.85" data-trial-id="{}" data-dh-bits="{}" data-hmac-bits="{}" data-t-total="{:.6}"/>"#,
            shade(rank, dh_sizes.len()),
            r.trial_id,
            r.dh_bits,
            r.hmac_bits,
            r.t_total
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, dh) in dh_sizes.iter().enumerate() {
        legend_entry(&mut svg, i, &shade(i, dh_sizes.len()), &format!("DH {dh} bits"), "circle");
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    out.write_all(svg.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Histogram of total time over all successful trials (Sturges bins).
pub fn emit_histogram(records: &[TrialRecord], out: &mut dyn Write) -> Result<()> {
    let ok = ok_records(records)?;
    let times: Vec<f64> = ok.iter().map(|r| r.t_total).collect();
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = if hi > lo { ((times.len() as f64).log2().ceil() as usize + 1).max(1) } else { 1 };
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 0.0 };
    let mut counts = vec![0usize; bins];
    for &t in &times {
        let i = if width > 0.0 { (((t - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[i] += 1;
    }
    let y_max = nice_max(*counts.iter().max().unwrap() as f64);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let bar_w = plot_w / bins as f64;
    let color = shade(0, 1);

    let mut svg = String::new();
    header(&mut svg, "Distribution of session time");
    axes(&mut svg, TIME_LABEL, "Trials");
    y_ticks(&mut svg, y_max, |v| format!("{v:.0}"));

    let _ = writeln!(svg, r#"<g class="bars">"#);
    for (i, &count) in counts.iter().enumerate() {
        let (start, end) = if width > 0.0 { (lo + width * i as f64, lo + width * (i + 1) as f64) } else { (lo, hi) };
        let h = plot_h * count as f64 / y_max;
        let x = LEFT + bar_w * i as f64;
        let y = HEIGHT - BOTTOM - h;
        let _ = writeln!(
            svg,
            r#"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="{color}" stroke="white" data-count="{count}" data-start="{start:.6}" data-end="{end:.6}"/>"#,
            bar_w
        );
    }
    let _ = writeln!(svg, "</g>");
    for (i, edge) in [lo, hi].into_iter().enumerate() {
        let x = LEFT + plot_w * i as f64;
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{x}" y="{}" text-anchor="middle">{edge:.3}</text>"#,
            HEIGHT - BOTTOM + 20.0
        );
    }

    let _ = writeln!(svg, r#"<g class="legend">"#);
    legend_entry(&mut svg, 0, &color, &format!("t_total ({} trials)", times.len()), "rect");
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    out.write_all(svg.as_bytes())?;
    out.flush()?;
    Ok(())
}
