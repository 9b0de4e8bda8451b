//! Self-contained SVG: ROC curve beside clean vs poisoned rank trajectories.

use std::fmt::Write;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 48.0;

struct Panel {
    x0: f64,
    y0: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.x0 + MARGIN + x / self.xmax * PANEL
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.ymax - self.ymin).max(f64::MIN_POSITIVE);
        self.y0 + MARGIN + PANEL - (y - self.ymin) / span * PANEL
    }

    fn frame(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, t) = (self.x0 + MARGIN, self.y0 + MARGIN);
        let _ = writeln!(
            svg,
            r#"<rect x="{l}" y="{t}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#,
            l + PANEL / 2.0,
            t - 12.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{xlabel}</text>"#,
            l + PANEL / 2.0,
            t + PANEL + 32.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 {} {})">{ylabel}</text>"#,
            l - 30.0,
            t + PANEL / 2.0,
            l - 30.0,
            t + PANEL / 2.0
        );
        for (v, label) in [(self.ymin, self.ymin), (self.ymax, self.ymax)] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
                l - 4.0,
                self.py(v) + 4.0,
                fmt_tick(label)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
            l + PANEL,
            t + PANEL + 14.0,
            fmt_tick(self.xmax)
        );
    }

    fn polyline(&self, svg: &mut String, points: &[(f64, f64)], style: &str) {
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" {style}/>"#, pts.join(" "));
    }

    fn band(&self, svg: &mut String, upper: &[(f64, f64)], lower: &[(f64, f64)], fill: &str) {
        let pts: Vec<String> = upper
            .iter()
            .chain(lower.iter().rev())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="0.2" stroke="none"/>"#,
            pts.join(" ")
        );
    }
}

fn fmt_tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Per-layer mean and standard deviation.
fn mean_std(trajectories: &[&[usize]], layers: usize) -> Vec<(f64, f64)> {
    (0..layers)
        .map(|l| {
            let n = trajectories.len() as f64;
            let mean = trajectories.iter().map(|t| t[l] as f64).sum::<f64>() / n;
            let var = trajectories.iter().map(|t| (t[l] as f64 - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

/// Renders both panels. Trajectories with missing ranks are left out.
pub fn render(
    roc: &[(f64, f64)],
    auroc: f64,
    layers: &[String],
    trajectories: &[Vec<usize>],
    is_poisoned: &[bool],
) -> String {
    let width = 2.0 * (PANEL + 2.0 * MARGIN);
    let height = PANEL + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let left = Panel {
        x0: 0.0,
        y0: 0.0,
        xmax: 1.0,
        ymin: 0.0,
        ymax: 1.0,
    };
    left.frame(
        &mut svg,
        &format!("ROC (AUROC {auroc:.4})"),
        "false positive rate",
        "true positive rate",
    );
    left.polyline(
        &mut svg,
        &[(0.0, 0.0), (1.0, 1.0)],
        r##"stroke="#999999" stroke-dasharray="4 4""##,
    );
    left.polyline(&mut svg, roc, r##"stroke="#1f4e9c" stroke-width="2""##);

    let l = layers.len();
    let complete: Vec<(&[usize], bool)> = trajectories
        .iter()
        .zip(is_poisoned)
        .filter(|(t, _)| t.len() == l)
        .map(|(t, &p)| (t.as_slice(), p))
        .collect();
    let ymax = complete
        .iter()
        .flat_map(|(t, _)| t.iter())
        .copied()
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let right = Panel {
        x0: PANEL + 2.0 * MARGIN,
        y0: 0.0,
        xmax: (l.max(2) - 1) as f64,
        ymin: 1.0,
        ymax,
    };
    right.frame(&mut svg, "rank trajectories (mean \u{b1} sd)", "layer", "rank");
    for (poisoned, colour, name) in [(false, "#2a7d2a", "clean"), (true, "#b22222", "poisoned")] {
        let group: Vec<&[usize]> = complete
            .iter()
            .filter(|(_, p)| *p == poisoned)
            .map(|(t, _)| *t)
            .collect();
        if group.is_empty() || l == 0 {
            continue;
        }
        let stats = mean_std(&group, l);
        let clamp = |y: f64| y.clamp(1.0, ymax);
        let mean: Vec<(f64, f64)> = stats.iter().enumerate().map(|(i, s)| (i as f64, s.0)).collect();
        let upper: Vec<(f64, f64)> = stats
            .iter()
            .enumerate()
            .map(|(i, s)| (i as f64, clamp(s.0 + s.1)))
            .collect();
        let lower: Vec<(f64, f64)> = stats
            .iter()
            .enumerate()
            .map(|(i, s)| (i as f64, clamp(s.0 - s.1)))
            .collect();
        right.band(&mut svg, &upper, &lower, colour);
        right.polyline(&mut svg, &mean, &format!(r#"stroke="{colour}" stroke-width="2""#));
        let ly = if poisoned { 20.0 } else { 36.0 };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{name} (n={})</text>"#,
            right.x0 + MARGIN + 8.0,
            right.y0 + MARGIN + ly,
            group.len()
        );
    }
    svg.push_str("</svg>\n");
    svg
}
