//! Score dumps: a CSV of `(frame_index, s, mixed, selected)` and an SVG bar chart.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::scores::{CorrelationScores, KeyFrameSelection};
use crate::error::Result;

#[derive(Serialize)]
struct Row {
    frame_index: usize,
    s: f64,
    mixed: f64,
    selected: u8,
}

pub fn write_scores_csv<W: Write>(out: W, scores: &CorrelationScores, sel: &KeyFrameSelection) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, (&s, &mixed)) in scores.s.iter().zip(&scores.mixed).enumerate() {
        w.serialize(Row { frame_index: i, s, mixed, selected: u8::from(sel.indices.contains(&i)) })?;
    }
    w.flush()?;
    Ok(())
}

/// Bars of `s` per frame; selected frames are drawn in a second color.
pub fn scores_svg(scores: &CorrelationScores, sel: &KeyFrameSelection, title: &str) -> String {
    let (w, h, pad) = (800.0f64, 240.0f64, 30.0f64);
    let n = scores.s.len().max(1) as f64;
    let max = scores.s.iter().copied().fold(1e-12, f64::max);
    let bw = (w - 2.0 * pad) / n;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<text x="{pad}" y="18" font-family="sans-serif" font-size="13">{}</text>"#, escape(title));
    for (i, &s) in scores.s.iter().enumerate() {
        let bh = (h - 2.0 * pad) * s / max;
        let x = pad + i as f64 * bw;
        let y = h - pad - bh;
        let fill = if sel.indices.contains(&i) { "#d9534f" } else { "#5b8fd9" };
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{bh:.2}" fill="{fill}"><title>frame {i}: {s:.4}</title></rect>"#,
            (bw * 0.9).max(0.5)
        );
    }
    let _ = writeln!(svg, r##"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="#333"/>"##, h - pad, w - pad);
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointerkit::scores::score_and_select;

    #[test]
    fn csv_has_one_row_per_frame() {
        let (scores, sel) = score_and_select(vec![0.5, 0.3, 0.2], 1, 0.0).unwrap();
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &scores, &sel).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "frame_index,s,mixed,selected");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",1"));
        let svg = scores_svg(&scores, &sel, "a < b");
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(svg.contains("a &lt; b"));
    }
}
