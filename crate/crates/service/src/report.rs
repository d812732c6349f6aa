//! Self-contained HTML diagnosis report: inline CSS, inline SVG charts and
//! the raw series as embedded JSON. Nothing is loaded from elsewhere.

use std::fmt::Write;

use serde::Serialize;

use crate::api::DiagnosisResult;

/// One cube's section of the report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportItem {
    pub filename: String,
    pub uploaded_at: String,
    pub result: DiagnosisResult,
    pub wavelengths_nm: Vec<f64>,
    pub reflectance: Vec<f64>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Polyline chart of reflectance against wavelength.
fn spectrum_svg(x: &[f64], y: &[f64]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 200.0;
    const PAD: f64 = 30.0;
    let finite = |v: &&f64| v.is_finite();
    let (x0, x1) = (x.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min), x.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max));
    let y1 = y.iter().filter(finite).cloned().fold(0.0, f64::max).max(1e-6);
    let sx = |v: f64| PAD + (v - x0) / (x1 - x0).max(1e-9) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - v / y1 * (H - 2.0 * PAD);
    let points: Vec<String> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| format!("{:.1},{:.1}", sx(a), sy(b)))
        .collect();
    format!(
        concat!(
            r##"<svg class="spectrum" viewBox="0 0 {w} {h}" width="{w}" height="{h}" role="img">"##,
            r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#fff" stroke="#ccc"/>"##,
            r##"<polyline fill="none" stroke="#2a7" stroke-width="1.5" points="{pts}"/>"##,
            r##"<text x="{pad}" y="{hb}" font-size="10">{x0:.1} nm</text>"##,
            r##"<text x="{xr}" y="{hb}" font-size="10" text-anchor="end">{x1:.1} nm</text>"##,
            r##"<text x="4" y="{pad}" font-size="10">{y1:.3}</text>"##,
            "</svg>"
        ),
        w = W,
        h = H,
        pad = PAD,
        hb = H - 8.0,
        xr = W - PAD,
        pts = points.join(" "),
        x0 = x0,
        x1 = x1,
        y1 = y1,
    )
}

pub fn render(items: &[ReportItem], model_kind: &str, generated_at: &str) -> String {
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str("<title>SDS leaf diagnosis report</title>\n<style>\n");
    html.push_str(concat!(
        "body{font-family:sans-serif;margin:2em;color:#222}",
        "section.result{border:1px solid #ccc;border-radius:6px;padding:1em;margin:1em 0}",
        ".infected{color:#b22}.healthy{color:#275}",
        "table{border-collapse:collapse}td,th{padding:2px 8px;text-align:left}\n"
    ));
    html.push_str("</style>\n</head>\n<body>\n<h1>SDS leaf diagnosis report</h1>\n");
    let _ = writeln!(
        html,
        "<p>Generated <time class=\"generated\">{}</time> by sdsleaf {} using classifier {}.</p>",
        escape(generated_at),
        escape(sds_core::VERSION),
        escape(model_kind)
    );
    for (i, item) in items.iter().enumerate() {
        let r = &item.result;
        let class = if r.label == "Healthy" { "healthy" } else { "infected" };
        let _ = writeln!(html, "<section class=\"result\" id=\"cube-{i}\">");
        let _ = writeln!(html, "<h2>{}</h2>", escape(&item.filename));
        let _ = writeln!(html, "<p class=\"verdict {class}\">{}</p>", escape(&r.label));
        html.push_str("<table>\n");
        let rows = [
            ("Cube id", escape(&r.cube_id)),
            ("Model", escape(&r.model_id)),
            ("Uploaded", escape(&item.uploaded_at)),
            ("P(healthy)", format!("{:.4}", r.probabilities.healthy)),
            ("P(infected)", format!("{:.4}", r.probabilities.infected)),
            (
                "Bands (nm)",
                r.wavelengths_nm.iter().map(|w| format!("{w:.1}")).collect::<Vec<_>>().join(", "),
            ),
        ];
        for (k, v) in rows {
            let _ = writeln!(html, "<tr><th>{k}</th><td>{v}</td></tr>");
        }
        let _ = writeln!(html, "<tr><th>Classified</th><td><time class=\"classified\">{}</time></td></tr>", escape(&r.classified_at));
        html.push_str("</table>\n");
        html.push_str(&spectrum_svg(&item.wavelengths_nm, &item.reflectance));
        let data = serde_json::json!({ "wavelengths_nm": item.wavelengths_nm, "reflectance": item.reflectance });
        // `</` cannot appear in JSON numbers, but escape it anyway for safety.
        let _ = writeln!(
            html,
            "\n<script type=\"application/json\" class=\"spectrum-data\">{}</script>",
            data.to_string().replace("</", "<\\/")
        );
        html.push_str("</section>\n");
    }
    html.push_str("</body>\n</html>\n");
    html
}
