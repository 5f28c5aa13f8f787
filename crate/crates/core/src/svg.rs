//! Plot-ready SVG emission: simple per-DGP line charts of a summary metric
//! against sample size, one polyline per estimator.

use crate::harness::{CellSummary, Estimator};
use crate::num::Scalar;

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 340.0;
const MARGIN: f64 = 50.0;

const COLORS: [(&str, Estimator); 4] = [
    ("#1f77b4", Estimator::Hal),
    ("#ff7f0e", Estimator::RelaxedHal),
    ("#2ca02c", Estimator::Tmle),
    ("#d62728", Estimator::SpTmle),
];

fn metric<S: Scalar>(s: &CellSummary<S>, name: &str) -> Option<f64> {
    match name {
        "bias" => s.bias.map(|v| v.to_f64_lossy()),
        "variance" => s.variance.map(|v| v.to_f64_lossy()),
        "mse" => s.mse.map(|v| v.to_f64_lossy()),
        "coverage" => s.coverage.map(|v| v.to_f64_lossy()),
        _ => None,
    }
}

/// Renders one chart of `metric_name` vs n for the summaries of one DGP.
pub fn render_metric_chart<S: Scalar>(
    summaries: &[&CellSummary<S>],
    metric_name: &str,
    title: &str,
) -> String {
    let mut ns: Vec<usize> = summaries.iter().map(|s| s.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut points: Vec<(Estimator, Vec<(f64, f64)>)> = Vec::new();
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for &(_, est) in &COLORS {
        let mut series = Vec::new();
        for &n in &ns {
            if let Some(s) = summaries.iter().find(|s| s.estimator == est && s.n == n) {
                if let Some(v) = metric(s, metric_name) {
                    series.push((n as f64, v));
                    ymin = ymin.min(v);
                    ymax = ymax.max(v);
                }
            }
        }
        if !series.is_empty() {
            points.push((est, series));
        }
    }
    if !ymin.is_finite() {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (ymax - ymin).abs() < 1e-12 {
        ymax = ymin + 1.0;
    }
    let xmin = *ns.first().unwrap_or(&1) as f64;
    let xmax = *ns.last().unwrap_or(&2) as f64;
    let sx = |x: f64| {
        MARGIN + (x.ln() - xmin.ln()) / (xmax.ln() - xmin.ln() + 1e-12) * (WIDTH - 2.0 * MARGIN)
    };
    let sy = |y: f64| HEIGHT - MARGIN - (y - ymin) / (ymax - ymin) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        WIDTH / 2.0
    );
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    for &n in &ns {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{n}</text>\n",
            sx(n as f64),
            HEIGHT - MARGIN + 15.0
        ));
    }
    for k in 0..=4 {
        let v = ymin + (ymax - ymin) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{v:.3}</text>\n",
            MARGIN - 5.0,
            sy(v) + 3.0
        ));
    }
    for (est, series) in &points {
        let color = COLORS
            .iter()
            .find(|(_, e)| e == est)
            .map(|(c, _)| *c)
            .unwrap_or("black");
        let path: Vec<String> = series
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
    }
    // legend
    for (k, (est, _)) in points.iter().enumerate() {
        let color = COLORS
            .iter()
            .find(|(_, e)| e == est)
            .map(|(c, _)| *c)
            .unwrap_or("black");
        let y = MARGIN + 14.0 * k as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"10\">{est}</text>\n",
            WIDTH - MARGIN - 110.0,
            y,
            WIDTH - MARGIN - 95.0,
            y + 9.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::TreatmentMechanism;

    #[test]
    fn renders_valid_svg() {
        let summaries = [
            CellSummary::<f64> {
                estimator: Estimator::Tmle,
                dgp: TreatmentMechanism::Linear,
                n: 50,
                bias: Some(0.01),
                variance: Some(0.02),
                mse: Some(0.0201),
                coverage: Some(0.93),
                n_failed: 0,
            },
            CellSummary::<f64> {
                estimator: Estimator::Tmle,
                dgp: TreatmentMechanism::Linear,
                n: 100,
                bias: Some(0.005),
                variance: Some(0.01),
                mse: Some(0.010025),
                coverage: Some(0.94),
                n_failed: 0,
            },
        ];
        let refs: Vec<&CellSummary<f64>> = summaries.iter().collect();
        let svg = render_metric_chart(&refs, "bias", "bias vs n (linear)");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
