//! Self-contained SVG error-bar plot of a [`ResultTable`].

use std::fmt::Write as _;

use crate::results::ResultTable;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#444444"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Mean accuracy per variant against the sweep value, with ±1 std error
/// bars. Each point carries a `<title>` of the form
/// `variant @ x: mean ± std` with three decimals.
///
/// Output depends only on the table, so equal tables give equal bytes.
pub fn emit_plot(table: &ResultTable) -> String {
    let agg = table.aggregate();
    let xs: Vec<f64> = agg.iter().map(|a| a.sweep_value).collect();
    let (mut x_lo, mut x_hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if xs.is_empty() {
        (x_lo, x_hi) = (0.0, 1.0);
    } else if x_hi == x_lo {
        (x_lo, x_hi) = (x_lo - 0.5, x_hi + 0.5);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    // axes
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="ticks" text-anchor="middle">"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, x0 - 7.0, y + 4.0);
    }
    let mut ticks = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for &v in &ticks {
        let x = px(v);
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>"#, y0 + 4.0);
        let _ = writeln!(s, r#"<text x="{x}" y="{}">{v}</text>"#, y0 + 18.0);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(&table.sweep)
    );
    let _ = writeln!(
        s,
        r#"<text class="ylabel" x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">word accuracy</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let mut variants: Vec<&str> = Vec::new();
    for a in &agg {
        if !variants.contains(&a.variant.as_str()) {
            variants.push(&a.variant);
        }
    }
    for (i, variant) in variants.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points: Vec<_> = agg.iter().filter(|a| a.variant == *variant).collect();
        points.sort_by(|a, b| a.sweep_value.total_cmp(&b.sweep_value));
        let _ = writeln!(s, r#"<g class="series" data-variant="{}" stroke="{color}" fill="{color}">"#, escape(variant));
        let path: Vec<String> = points.iter().map(|a| format!("{},{}", px(a.sweep_value), py(a.acc_mean))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" points="{}"/>"#, path.join(" "));
        for a in &points {
            let (x, y) = (px(a.sweep_value), py(a.acc_mean));
            let (lo, hi) = (py(a.acc_mean - a.acc_std), py(a.acc_mean + a.acc_std));
            let _ = writeln!(s, r#"<g class="point">"#);
            let _ = writeln!(
                s,
                "<title>{} @ {}: {:.3} ± {:.3}</title>",
                escape(variant),
                a.sweep_value,
                a.acc_mean,
                a.acc_std
            );
            let _ = writeln!(s, r#"<line x1="{x}" y1="{lo}" x2="{x}" y2="{hi}"/>"#);
            let _ = writeln!(s, r#"<line x1="{}" y1="{lo}" x2="{}" y2="{lo}"/>"#, x - 4.0, x + 4.0);
            let _ = writeln!(s, r#"<line x1="{}" y1="{hi}" x2="{}" y2="{hi}"/>"#, x - 4.0, x + 4.0);
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3"/>"#);
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(s, "</g>");
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><rect x="{lx}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text></g>"#,
            ly - 9.0,
            lx + 15.0,
            ly,
            escape(variant)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::ResultRow;

    #[test]
    fn empty_table_gives_axes_only() {
        let svg = emit_plot(&ResultTable::new("sigma"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("class=\"axes\""));
        assert!(!svg.contains("class=\"series\""));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn single_value_sweep_has_finite_coordinates() {
        let mut t = ResultTable::new("k");
        t.push(ResultRow {
            variant: "full".into(),
            sweep_value: 2.0,
            trial: 0,
            word_acc: 0.5,
            cer: 0.1,
        })
        .unwrap();
        let svg = emit_plot(&t);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert!(svg.contains("<title>full @ 2: 0.500 ± 0.000</title>"));
    }
}
