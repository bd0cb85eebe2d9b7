//! Minimal SVG emission for sweep results: MM and ILC suboptimality gaps
//! against the sweep parameter, mirroring the usual two-curve comparison
//! figures. No plotting dependency; the files are small hand-built SVG.

use lqr_lab::sweep::{RowFlag, SweepRow};

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Axes {
    Linear,
    LogLog,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;

struct Scale {
    min: f64,
    max: f64,
    log: bool,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if log && v <= 0.0 {
                continue;
            }
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() || !max.is_finite() {
            min = if log { 1e-12 } else { 0.0 };
            max = 1.0;
        }
        if min == max {
            max = min + 1.0;
        }
        Self { min, max, log }
    }

    fn fraction(&self, v: f64) -> Option<f64> {
        if self.log {
            if v <= 0.0 {
                return None;
            }
            Some((v.ln() - self.min.ln()) / (self.max.ln() - self.min.ln()))
        } else {
            Some((v - self.min) / (self.max - self.min))
        }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = 5;
        (0..=n)
            .map(|i| {
                let f = i as f64 / n as f64;
                if self.log {
                    (self.min.ln() + f * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + f * (self.max - self.min)
                }
            })
            .collect()
    }
}

pub fn sweep_svg(rows: &[SweepRow], axes: Axes, x_label: &str) -> String {
    let log = axes == Axes::LogLog;
    let usable = |flag: RowFlag| flag == RowFlag::Ok || flag == RowFlag::Nonconverged;

    let xs = Scale::new(rows.iter().map(|r| r.param), log);
    let ys = Scale::new(
        rows.iter().flat_map(|r| {
            let mut vals = Vec::new();
            if usable(r.flag_mm) {
                vals.push(r.gap_mm);
            }
            if usable(r.flag_ilc) {
                vals.push(r.gap_ilc);
            }
            vals
        }),
        log,
    );

    let to_px = |xf: f64, yf: f64| {
        (
            MARGIN_L + xf * (WIDTH - MARGIN_L - MARGIN_R),
            HEIGHT - MARGIN_B - yf * (HEIGHT - MARGIN_T - MARGIN_B),
        )
    };

    let polyline = |select: &dyn Fn(&SweepRow) -> Option<f64>| -> String {
        let mut points = Vec::new();
        for row in rows {
            let Some(y) = select(row) else { continue };
            let (Some(xf), Some(yf)) = (xs.fraction(row.param), ys.fraction(y)) else {
                continue;
            };
            let (px, py) = to_px(xf.clamp(0.0, 1.0), yf.clamp(0.0, 1.0));
            points.push(format!("{px:.1},{py:.1}"));
        }
        points.join(" ")
    };

    let mm_line = polyline(&|r| usable(r.flag_mm).then_some(r.gap_mm));
    let ilc_line = polyline(&|r| usable(r.flag_ilc).then_some(r.gap_ilc));

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));

    // frame
    let (x0, y0) = to_px(0.0, 0.0);
    let (x1, y1) = to_px(1.0, 1.0);
    svg.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#444\"/>\n",
        MARGIN_L,
        MARGIN_T,
        x1 - x0,
        y0 - y1
    ));

    for t in xs.ticks() {
        if let Some(f) = xs.fraction(t) {
            let (px, _) = to_px(f, 0.0);
            svg.push_str(&format!(
                "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
                y0,
                y0 + 5.0
            ));
            svg.push_str(&format!(
                "<text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                y0 + 18.0,
                tick_label(t)
            ));
        }
    }
    for t in ys.ticks() {
        if let Some(f) = ys.fraction(t) {
            let (_, py) = to_px(0.0, f);
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" stroke=\"#444\"/>\n",
                MARGIN_L - 5.0,
                MARGIN_L
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                MARGIN_L - 8.0,
                py + 4.0,
                tick_label(t)
            ));
        }
    }

    svg.push_str(&format!(
        "<polyline points=\"{mm_line}\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.8\"/>\n"
    ));
    svg.push_str(&format!(
        "<polyline points=\"{ilc_line}\" fill=\"none\" stroke=\"#2462a8\" stroke-width=\"1.8\"/>\n"
    ));

    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">suboptimality gap</text>\n",
        (HEIGHT - MARGIN_B + MARGIN_T) / 2.0,
        (HEIGHT - MARGIN_B + MARGIN_T) / 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#c0392b\">MM</text>\n",
        WIDTH - 90.0,
        MARGIN_T + 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#2462a8\">ILC</text>\n",
        WIDTH - 90.0,
        MARGIN_T + 32.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.1e}")
    }
}
