//! Layered SVG diagram of a network. Every edge is a group
//! `edge-{l}-{j}-{i}` holding its connector, a sparkline of the activation
//! over its grid domain and, when locked, the symbol name.

use std::fmt::Write;

use kanlab_core::simplify::transparency;
use kanlab_core::train::activation_l1;
use kanlab_core::{ForwardTrace, KanNetwork};

const COLUMN: f64 = 220.0;
const ROW: f64 = 90.0;
const MARGIN: f64 = 40.0;
const SPARK_W: f64 = 44.0;
const SPARK_H: f64 = 26.0;
const SPARK_POINTS: usize = 32;

fn node_y(n: usize, i: usize, height: f64) -> f64 {
    height * (i as f64 + 1.0) / (n as f64 + 1.0)
}

fn sparkline(xs: &[f64], ys: &[f64], cx: f64, cy: f64) -> String {
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let span = hi - lo;
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let mut points = String::new();
    for (&x, &y) in xs.iter().zip(ys) {
        let u = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.5 };
        let v = if span > 0.0 && span.is_finite() { (y - lo) / span } else { 0.5 };
        let px = cx - SPARK_W / 2.0 + u * SPARK_W;
        let py = cy + SPARK_H / 2.0 - v * SPARK_H;
        let _ = write!(points, "{px:.2},{py:.2} ");
    }
    points.trim_end().to_string()
}

/// SVG for `net`, with edge magnitudes taken from `trace`.
pub fn render_diagram(net: &KanNetwork, trace: &ForwardTrace, beta: f64) -> String {
    let shape = net.shape();
    let tallest = shape.iter().copied().max().unwrap_or(1);
    let height = ROW * (tallest as f64 + 1.0);
    let width = 2.0 * MARGIN + COLUMN * (shape.len() - 1) as f64;
    let x_of = |l: usize| MARGIN + COLUMN * l as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    for ((l, i, j), edge) in net.iter_edges() {
        let (x_in, y_in) = (x_of(l), node_y(shape[l], i, height));
        let (x_out, y_out) = (x_of(l + 1), node_y(shape[l + 1], j, height));
        let opacity = transparency(activation_l1(trace, l, j, i), beta);
        let g = edge.curve.grid();
        let xs: Vec<f64> = (0..SPARK_POINTS)
            .map(|q| g.a() + (g.b() - g.a()) * q as f64 / (SPARK_POINTS - 1) as f64)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&x| edge.eval(x)).collect();
        let (cx, cy) = ((x_in + x_out) / 2.0, (y_in + y_out) / 2.0);
        let _ = writeln!(svg, r#"  <g id="edge-{l}-{j}-{i}" class="edge" opacity="{opacity:.4}">"#);
        let _ = writeln!(
            svg,
            r#"    <line x1="{x_in:.2}" y1="{y_in:.2}" x2="{x_out:.2}" y2="{y_out:.2}" stroke="black" stroke-width="1"/>"#
        );
        let _ = writeln!(
            svg,
            r#"    <rect x="{:.2}" y="{:.2}" width="{SPARK_W}" height="{SPARK_H}" fill="white" stroke="gray"/>"#,
            cx - SPARK_W / 2.0,
            cy - SPARK_H / 2.0
        );
        let _ = writeln!(
            svg,
            r#"    <polyline class="sparkline" points="{}" fill="none" stroke="black"/>"#,
            sparkline(&xs, &ys, cx, cy)
        );
        if let Some(lock) = edge.lock {
            let _ = writeln!(
                svg,
                r#"    <text class="symbol" x="{cx:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                cy - SPARK_H / 2.0 - 3.0,
                escape(lock.function.name())
            );
        }
        svg.push_str("  </g>\n");
    }
    for (l, &n) in shape.iter().enumerate() {
        for i in 0..n {
            let _ = writeln!(
                svg,
                r#"  <circle id="node-{l}-{i}" class="node" cx="{:.2}" cy="{:.2}" r="5" fill="black"/>"#,
                x_of(l),
                node_y(n, i, height)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
