//! Minimal SVG rendering of improvement-vs-N curves with confidence bands,
//! one file per (family, distribution or covariance).

use super::config::MethodName;
use super::records::{write_file, ImprovementRecord};
use super::HarnessError;
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;

fn color(method: MethodName) -> &'static str {
    match method {
        MethodName::Saa => "#6b7280",
        MethodName::Bagging => "#1f77b4",
        MethodName::Kernel => "#d62728",
        MethodName::Mle => "#2ca02c",
        MethodName::Bayes => "#9467bd",
    }
}

/// Writes the improvement-over-SAA chart for the records of one
/// (family, distribution) group. Records must share a distribution id.
pub fn emit_plot(records: &[ImprovementRecord], path: &Path) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }

    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let methods: Vec<MethodName> = MethodName::ALL
        .into_iter()
        .filter(|m| records.iter().any(|r| r.method == *m))
        .collect();

    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for r in records {
        lo = lo.min(r.ci_low);
        hi = hi.max(r.ci_high);
    }
    let pad = 0.08 * (hi - lo).max(1e-12);
    let (lo, hi) = (lo - pad, hi + pad);

    let (x0, x1) = (*ns.first().unwrap() as f64, *ns.last().unwrap() as f64);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |n: f64| {
        if x1 > x0 {
            MARGIN_L + (n - x0) / (x1 - x0) * plot_w
        } else {
            MARGIN_L + plot_w / 2.0
        }
    };
    let sy = |v: f64| MARGIN_T + (hi - v) / (hi - lo) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );

    // Axes and ticks.
    let _ = write!(
        svg,
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    );
    for &n in &ns {
        let x = sx(n as f64);
        let _ = write!(
            svg,
            "<line x1=\"{x}\" y1=\"{b}\" x2=\"{x}\" y2=\"{b2}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"middle\">{n}</text>\n",
            b = HEIGHT - MARGIN_B,
            b2 = HEIGHT - MARGIN_B + 5.0,
            ty = HEIGHT - MARGIN_B + 18.0
        );
    }
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = sy(v);
        let _ = write!(
            svg,
            "<line x1=\"{x2}\" y1=\"{y}\" x2=\"{l}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" font-size=\"11\" text-anchor=\"end\">{v:.2e}</text>\n",
            x2 = MARGIN_L - 5.0,
            l = MARGIN_L,
            tx = MARGIN_L - 8.0,
            ty = y + 4.0
        );
    }
    // Zero reference.
    if lo < 0.0 && hi > 0.0 {
        let y = sy(0.0);
        let _ = write!(
            svg,
            "<line x1=\"{l}\" y1=\"{y}\" x2=\"{r}\" y2=\"{y}\" stroke=\"#9ca3af\" stroke-dasharray=\"4 3\"/>\n",
            l = MARGIN_L,
            r = WIDTH - MARGIN_R
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{cx}\" y=\"{cy}\" font-size=\"13\" text-anchor=\"middle\">N</text>\n\
         <text x=\"16\" y=\"{my}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {my})\">improvement over SAA</text>\n",
        cx = MARGIN_L + plot_w / 2.0,
        cy = HEIGHT - 12.0,
        my = MARGIN_T + plot_h / 2.0
    );

    // One band + line per method.
    for method in &methods {
        let mut pts: Vec<&ImprovementRecord> =
            records.iter().filter(|r| r.method == *method).collect();
        pts.sort_by_key(|r| r.n);
        if pts.is_empty() {
            continue;
        }
        let c = color(*method);
        let mut band = String::new();
        for r in &pts {
            let _ = write!(band, "{:.2},{:.2} ", sx(r.n as f64), sy(r.ci_high));
        }
        for r in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(r.n as f64), sy(r.ci_low));
        }
        let _ = write!(
            svg,
            "<polygon points=\"{}\" fill=\"{c}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
            band.trim_end()
        );
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.n as f64), sy(r.mean_improvement)))
            .collect();
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"2\"/>\n",
            line.join(" ")
        );
        for r in &pts {
            let _ = write!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{c}\"/>\n",
                sx(r.n as f64),
                sy(r.mean_improvement)
            );
        }
    }

    // Legend.
    for (i, method) in methods.iter().enumerate() {
        let y = MARGIN_T + 16.0 + 20.0 * i as f64;
        let _ = write!(
            svg,
            "<rect x=\"{x}\" y=\"{ry}\" width=\"14\" height=\"14\" fill=\"{c}\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" font-size=\"13\">{name}</text>\n",
            x = WIDTH - MARGIN_R + 16.0,
            ry = y - 11.0,
            c = color(*method),
            tx = WIDTH - MARGIN_R + 36.0,
            ty = y,
            name = method.as_str()
        );
    }

    svg.push_str("</svg>\n");
    write_file(path, svg.as_bytes())
}
