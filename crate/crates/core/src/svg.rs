//! Minimal SVG plots: one square panel per projection, drawn side by side.

const PANEL: f64 = 320.0;
const PAD: f64 = 24.0;

/// `(title, points, as_polyline)`; points are scaled to fit.
pub(crate) type Panel<'a> = (&'a str, &'a [(f64, f64)], bool);

pub(crate) fn panels(panels: &[Panel]) -> String {
    let width = PANEL * panels.len().max(1) as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n",
        w = width,
        h = PANEL
    );
    for (i, (title, pts, polyline)) in panels.iter().enumerate() {
        let x0 = i as f64 * PANEL;
        out.push_str(&format!(
            "<g><rect x=\"{x0:.0}\" y=\"0\" width=\"{PANEL:.0}\" height=\"{PANEL:.0}\" fill=\"white\" stroke=\"#999\"/>\n<text x=\"{:.0}\" y=\"16\" font-size=\"12\">{title}</text>\n",
            x0 + 6.0
        ));
        if !pts.is_empty() {
            let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for &(u, v) in pts.iter() {
                lo_u = lo_u.min(u);
                hi_u = hi_u.max(u);
                lo_v = lo_v.min(v);
                hi_v = hi_v.max(v);
            }
            let span = (hi_u - lo_u).max(hi_v - lo_v).max(1e-9);
            let scale = (PANEL - 2.0 * PAD) / span;
            let map = |u: f64, v: f64| (x0 + PAD + (u - lo_u) * scale, PANEL - PAD - (v - lo_v) * scale);
            if *polyline {
                let coords: Vec<String> = pts
                    .iter()
                    .map(|&(u, v)| {
                        let (x, y) = map(u, v);
                        format!("{x:.3},{y:.3}")
                    })
                    .collect();
                out.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1\" points=\"{}\"/>\n",
                    coords.join(" ")
                ));
            } else {
                for &(u, v) in pts.iter() {
                    let (x, y) = map(u, v);
                    out.push_str(&format!("<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"1.5\" fill=\"#1f5fa8\"/>\n"));
                }
            }
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
