//! Static SVG figures: recovery bands, coverage curves, marginal posterior
//! histograms, trace plots, and growth-curve families.
//!
//! The emitted markup is deliberately plain (paths, polygons, rects,
//! circles with stable class names) so tests can assert on structure.

use anyhow::{bail, Result};
use biphasic::growth::{solve_analytic, GroupParams, GrowthParams, InitialState};
use biphasic::predictive::{CoverageCurve, LevelBand};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 44.0;

/// Data-to-pixel mapping over the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |a: f64, b: f64| if a == b { (a - 0.5, b + 0.5) } else { (a, b) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    fn path(&self, points: impl Iterator<Item = (f64, f64)>, class: &str, extra: &str) -> String {
        let mut d = String::new();
        for (i, (x, y)) in points.enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            d.push_str(&format!("{cmd}{:.2},{:.2} ", self.px(x), self.py(y)));
        }
        format!("<path class=\"{class}\" {extra} fill=\"none\" d=\"{}\"/>\n", d.trim_end())
    }

    fn axes(&self, x_label: &str, y_label: &str) -> String {
        let mut out = String::new();
        let (left, right) = (MARGIN_L, WIDTH - MARGIN_R);
        let (top, bottom) = (MARGIN_T, HEIGHT - MARGIN_B);
        out.push_str(&format!(
            "<line class=\"axis\" x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
        ));
        out.push_str(&format!(
            "<line class=\"axis\" x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
        ));
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * f64::from(i) / 4.0;
            let fy = self.y0 + (self.y1 - self.y0) * f64::from(i) / 4.0;
            out.push_str(&format!(
                "<text class=\"tick\" x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>\n",
                self.px(fx),
                bottom + 14.0,
                fx
            ));
            out.push_str(&format!(
                "<text class=\"tick\" x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>\n",
                left - 4.0,
                self.py(fy) + 3.0,
                fy
            ));
        }
        out.push_str(&format!(
            "<text class=\"label\" x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
            (left + right) / 2.0,
            HEIGHT - 8.0
        ));
        out.push_str(&format!(
            "<text class=\"label\" x=\"14\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{y_label}</text>\n",
            (top + bottom) / 2.0,
            (top + bottom) / 2.0
        ));
        out
    }
}

fn document(title: &str, header_comment: &str, body: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n{header_comment}<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<title>{title}</title>\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Family of sigmoid recovery curves for a range of shape parameters, one
/// `<path class="curve">` per value.
pub fn growth_curves_svg(
    k: f64,
    alpha: f64,
    c0: f64,
    gammas: &[f64],
    t_max: f64,
    header_comment: &str,
) -> Result<String> {
    if gammas.is_empty() {
        bail!("at least one gamma value is required");
    }
    let n_pts = 200;
    let times: Vec<f64> = (0..=n_pts).map(|i| t_max * f64::from(i) / f64::from(n_pts)).collect();
    let init = InitialState::new(0.0, vec![c0])?;
    let frame = Frame::new(0.0, t_max, 0.0, k * 1.05);
    let mut body = frame.axes("time (years)", "cover (%)");
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    for (i, &gamma) in gammas.iter().enumerate() {
        let params = GrowthParams::single(GroupParams::new(alpha, gamma, 0.0, 1.0)?, k)?;
        let sol = solve_analytic(&params, &init, &times)?;
        let color = palette[i % palette.len()];
        body.push_str(&frame.path(
            times.iter().enumerate().map(|(j, &t)| (t, sol.value(j, 0))),
            "curve",
            &format!("stroke=\"{color}\" data-gamma=\"{gamma}\""),
        ));
    }
    Ok(document("recovery curve family", header_comment, &body))
}

/// Posterior predictive bands for one trajectory and group, innermost level
/// drawn last, with the observations on top.
pub fn bands_svg(
    title: &str,
    times: &[f64],
    group: usize,
    bands: &[LevelBand],
    obs: &[f64],
    header_comment: &str,
) -> Result<String> {
    if times.is_empty() || bands.is_empty() {
        bail!("bands plot needs at least one time and one level");
    }
    let mut y_max: f64 = 1.0;
    for b in bands {
        for t in 0..times.len() {
            y_max = y_max.max(b.hi[t][group]);
        }
    }
    for &o in obs {
        y_max = y_max.max(o);
    }
    let frame = Frame::new(times[0], *times.last().unwrap(), 0.0, y_max * 1.05);
    let mut body = frame.axes("time (years)", "cover (%)");
    let shades = ["#c6dbef", "#9ecae1", "#6baed6", "#3182bd"];
    let mut sorted: Vec<&LevelBand> = bands.iter().collect();
    sorted.sort_by(|a, b| b.level.cmp(&a.level)); // widest first, underneath
    for (i, band) in sorted.iter().enumerate() {
        let mut points = String::new();
        for (j, &t) in times.iter().enumerate() {
            points.push_str(&format!("{:.2},{:.2} ", frame.px(t), frame.py(band.lo[j][group])));
        }
        for (j, &t) in times.iter().enumerate().rev() {
            points.push_str(&format!("{:.2},{:.2} ", frame.px(t), frame.py(band.hi[j][group])));
        }
        body.push_str(&format!(
            "<polygon class=\"band level-{}\" fill=\"{}\" fill-opacity=\"0.8\" stroke=\"none\" points=\"{}\"/>\n",
            band.level,
            shades[i % shades.len()],
            points.trim_end()
        ));
    }
    for (j, &t) in times.iter().enumerate() {
        body.push_str(&format!(
            "<circle class=\"obs\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"black\"/>\n",
            frame.px(t),
            frame.py(obs[j])
        ));
    }
    Ok(document(title, header_comment, &body))
}

/// Coverage curve with its diagonal reference and 95% error bars.
pub fn coverage_svg(curve: &CoverageCurve, header_comment: &str) -> Result<String> {
    let frame = Frame::new(0.0, 100.0, 0.0, 1.0);
    let mut body = frame.axes("credible level (%)", "proportion inside");
    body.push_str(&frame.path(
        [(0.0, 0.0), (100.0, 1.0)].into_iter(),
        "reference",
        "stroke=\"#d62728\" stroke-dasharray=\"4 3\"",
    ));
    for (i, &b) in curve.beta_grid.iter().enumerate() {
        let x = f64::from(b);
        let half = 1.959963984540054 * curve.s_hat[i];
        let lo = (curve.p_hat[i] - half).max(0.0);
        let hi = (curve.p_hat[i] + half).min(1.0);
        body.push_str(&format!(
            "<line class=\"err\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888888\"/>\n",
            frame.px(x),
            frame.py(lo),
            frame.px(x),
            frame.py(hi)
        ));
    }
    body.push_str(&frame.path(
        curve.beta_grid.iter().enumerate().map(|(i, &b)| (f64::from(b), curve.p_hat[i])),
        "coverage",
        "stroke=\"black\"",
    ));
    Ok(document("posterior predictive coverage", header_comment, &body))
}

/// Marginal posterior histogram for one parameter.
pub fn histogram_svg(
    title: &str,
    draws: &[f64],
    n_bins: usize,
    header_comment: &str,
) -> Result<String> {
    if draws.is_empty() || n_bins == 0 {
        bail!("histogram needs draws and at least one bin");
    }
    let lo = draws.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &d in draws {
        let idx = (((d - lo) / width) as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    let peak = *counts.iter().max().unwrap() as f64;
    let frame = Frame::new(lo, hi, 0.0, peak / (draws.len() as f64 * width));
    let mut body = frame.axes(title, "density");
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x_left = lo + width * i as f64;
        let density = c as f64 / (draws.len() as f64 * width);
        let px = frame.px(x_left);
        let pw = frame.px(x_left + width) - px;
        let py = frame.py(density);
        let ph = frame.py(0.0) - py;
        body.push_str(&format!(
            "<rect class=\"bar\" x=\"{px:.2}\" y=\"{py:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"#2ca02c\" fill-opacity=\"0.7\"/>\n"
        ));
    }
    Ok(document(title, header_comment, &body))
}

/// Trace plot: one `<path class="trace chain-i">` per chain.
pub fn traces_svg(
    title: &str,
    chains: &[Vec<f64>],
    header_comment: &str,
) -> Result<String> {
    if chains.is_empty() || chains.iter().any(|c| c.is_empty()) {
        bail!("trace plot needs non-empty chains");
    }
    let n = chains.iter().map(|c| c.len()).max().unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in chains {
        for &v in c {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let frame = Frame::new(0.0, n as f64, lo, hi);
    let mut body = frame.axes("kept iteration", title);
    let palette = ["#2ca02c", "#ff7f0e", "#9467bd", "#d62728", "#1f77b4", "#8c564b"];
    for (i, chain) in chains.iter().enumerate() {
        // cap the polyline at ~2000 segments to keep files small
        let stride = (chain.len() / 2000).max(1);
        body.push_str(&frame.path(
            chain.iter().step_by(stride).enumerate().map(|(j, &v)| ((j * stride) as f64, v)),
            &format!("trace chain-{i}"),
            &format!("stroke=\"{}\" stroke-opacity=\"0.8\"", palette[i % palette.len()]),
        ));
    }
    Ok(document(title, header_comment, &body))
}
