use std::fmt::Write as _;

use super::ResultTable;
use crate::data::Dataset;
use crate::error::{Error, Result};

const PANEL_W: f64 = 400.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000",
];

fn xy(ds: &Dataset) -> Vec<(f64, f64)> {
    ds.samples
        .iter()
        .flat_map(|s| s.fixations.iter().map(|f| (f.x, f.y)))
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Two x/y fixation panels side by side on shared axes: the union bounding
/// box padded by 5% on each side. Screen convention, y grows downwards.
pub fn render_scatter(left: &Dataset, left_title: &str, right: &Dataset, right_title: &str) -> Result<String> {
    let (a, b) = (xy(left), xy(right));
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let all = a.iter().chain(&b);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |lo: f64, hi: f64| {
        let span = if hi > lo { hi - lo } else { 1.0 };
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);

    let width = 2.0 * PANEL_W + 3.0 * MARGIN;
    let height = PANEL_H + 2.0 * MARGIN;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();
    for (k, (title, pts)) in [(left_title, &a), (right_title, &b)].into_iter().enumerate() {
        let ox = MARGIN + k as f64 * (PANEL_W + MARGIN);
        let oy = MARGIN;
        writeln!(s, r#"<g class="panel" id="panel-{k}">"#).unwrap();
        writeln!(
            s,
            r#"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{} ({} fixations)</text>"#,
            ox + PANEL_W / 2.0,
            oy - 12.0,
            escape(title),
            pts.len()
        )
        .unwrap();
        writeln!(s, r#"<text x="{ox}" y="{}">{x0:.0}</text>"#, oy + PANEL_H + 14.0).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{x1:.0}</text>"#,
            ox + PANEL_W,
            oy + PANEL_H + 14.0
        )
        .unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y0:.0}</text>"#, ox - 4.0, oy + 10.0).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{y1:.0}</text>"#,
            ox - 4.0,
            oy + PANEL_H
        )
        .unwrap();
        writeln!(s, r#"<g fill="{}" fill-opacity="0.5">"#, PALETTE[k]).unwrap();
        for &(x, y) in pts.iter() {
            let px = ox + (x - x0) / (x1 - x0) * PANEL_W;
            let py = oy + (y - y0) / (y1 - y0) * PANEL_H;
            writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.5"/>"#).unwrap();
        }
        s.push_str("</g>\n</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Grouped bars of mean accuracy (one group per decoder, one bar per
/// augmentation size) with ±std error bars; one panel per generator.
pub fn render_bars(table: &ResultTable) -> String {
    let mut generators: Vec<&str> = Vec::new();
    for c in &table.cells {
        if !generators.contains(&c.generator.as_str()) {
            generators.push(&c.generator);
        }
    }
    let decoders = &table.config.decoders;
    let sizes = &table.config.sizes;
    let panel_w = (decoders.len().max(1) * (sizes.len().max(1) * 14 + 20)) as f64 + 60.0;
    let panel_h = 220.0;
    let width = panel_w.max(360.0) + 2.0 * MARGIN;
    let legend_h = 20.0;
    let height = generators.len().max(1) as f64 * (panel_h + MARGIN) + MARGIN + legend_h;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();
    for (i, &size) in sizes.iter().enumerate() {
        let lx = MARGIN + i as f64 * 90.0;
        writeln!(
            s,
            r#"<rect x="{lx}" y="8" width="10" height="10" fill="{}"/><text x="{}" y="17">+{size} synthetic</text>"#,
            PALETTE[i % PALETTE.len()],
            lx + 14.0
        )
        .unwrap();
    }
    for (gi, g) in generators.iter().enumerate() {
        let oy = legend_h + MARGIN + gi as f64 * (panel_h + MARGIN);
        let ox = MARGIN + 30.0;
        let base = oy + panel_h;
        writeln!(s, r#"<g class="panel" id="{}">"#, escape(g)).unwrap();
        writeln!(s, r#"<text x="{ox}" y="{}">{}</text>"#, oy - 6.0, escape(g)).unwrap();
        writeln!(
            s,
            r#"<line x1="{ox}" y1="{base}" x2="{}" y2="{base}" stroke="black"/><line x1="{ox}" y1="{oy}" x2="{ox}" y2="{base}" stroke="black"/>"#,
            ox + panel_w - 40.0
        )
        .unwrap();
        for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let ty = base - tick * panel_h;
            writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{:.0}%</text>"#,
                ox - 4.0,
                ty + 4.0,
                tick * 100.0
            )
            .unwrap();
        }
        let mut x = ox + 10.0;
        for d in decoders {
            let group_start = x;
            for (i, &size) in sizes.iter().enumerate() {
                if let Some(c) = table.cell(g, size, *d) {
                    let h = c.mean * panel_h;
                    writeln!(
                        s,
                        r#"<rect x="{x:.2}" y="{:.2}" width="12" height="{h:.2}" fill="{}"><title>{} {} +{}: {}</title></rect>"#,
                        base - h,
                        PALETTE[i % PALETTE.len()],
                        escape(g),
                        d.label(),
                        size,
                        super::format_cell(c.mean, c.std)
                    )
                    .unwrap();
                    let cx = x + 6.0;
                    let (lo, hi) = ((c.mean - c.std).max(0.0), (c.mean + c.std).min(1.0));
                    writeln!(
                        s,
                        r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                        base - lo * panel_h,
                        base - hi * panel_h
                    )
                    .unwrap();
                }
                x += 14.0;
            }
            writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                (group_start + x - 2.0) / 2.0,
                base + 14.0,
                d.label()
            )
            .unwrap();
            x += 20.0;
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
