//! File formats: CSV tables, JSON reports, SVG log-log plots and the binary
//! cache encoding.
//!
//! CSV columns:
//!
//! | writer | columns |
//! |---|---|
//! | [`write_field_csv`] (Cauchy) | `x,t,value` |
//! | [`write_field_csv`] (static) | `x,lambda,value` |
//! | [`write_table_csv`] | `p_or_v,value` |
//! | [`write_curve_csv`] | `t,x` |
//! | [`write_errors_csv`] | `eps,t,lambda,regime,error,gap,tol,status` |
//!
//! Reals are printed in shortest round-trip form, so equal inputs give
//! byte-identical files.

use std::fmt::Write as _;
use std::io::Write;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::metric::DiscreteCurve;
use crate::problem::FunctionTable1D;
use crate::rates::{CellStatus, Regime, RateReport, TolPolicy};
use crate::solvers::ValueField;
use crate::{Error, Result, ARTIFACT_VERSION};

const CACHE_MAGIC: &[u8; 4] = b"HJLC";

pub fn write_field_csv(field: &ValueField, mut w: impl Write) -> Result<()> {
    let xs = field.grid.xs();
    match field.lambda {
        Some(lambda) => {
            writeln!(w, "x,lambda,value")?;
            for (x, v) in xs.iter().zip(field.final_slice()) {
                writeln!(w, "{x},{lambda},{v}")?;
            }
        }
        None => {
            writeln!(w, "x,t,value")?;
            for (t, row) in field.times.iter().zip(&field.values) {
                for (x, v) in xs.iter().zip(row) {
                    writeln!(w, "{x},{t},{v}")?;
                }
            }
        }
    }
    Ok(())
}

pub fn write_table_csv(table: &FunctionTable1D, mut w: impl Write) -> Result<()> {
    writeln!(w, "p_or_v,value")?;
    for (p, v) in table.nodes().zip(&table.values) {
        writeln!(w, "{p},{v}")?;
    }
    Ok(())
}

pub fn write_curve_csv(curve: &DiscreteCurve, mut w: impl Write) -> Result<()> {
    writeln!(w, "t,x")?;
    for (t, x) in curve.times().iter().zip(&curve.nodes) {
        writeln!(w, "{t},{x}")?;
    }
    Ok(())
}

/// One row per cell; skipped cells keep empty numeric fields.
pub fn write_errors_csv(report: &RateReport, policy: TolPolicy, mut w: impl Write) -> Result<()> {
    writeln!(w, "eps,t,lambda,regime,error,gap,tol,status")?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for c in &report.cells {
        let (tol, status) = match &c.status {
            CellStatus::Ok => (c.tol(policy).to_string(), "ok"),
            CellStatus::Skipped { .. } => (String::new(), "skipped"),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            c.eps,
            opt(c.t),
            opt(c.lambda),
            regime_id(c.regime),
            opt(c.error()),
            opt(c.gap()),
            tol,
            status
        )?;
    }
    Ok(())
}

fn regime_id(r: Regime) -> &'static str {
    match r {
        Regime::LongTime => "long_time",
        Regime::ShortTime => "short_time",
        Regime::Static => "static",
        Regime::Mixed => "mixed",
    }
}

/// Pretty JSON of `value` with every `runtime_s` member removed; timings go
/// to run manifests so that reports stay reproducible.
pub fn deterministic_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Numerical(e.to_string()))?;
    strip_key(&mut v, "runtime_s");
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn strip_key(v: &mut serde_json::Value, key: &str) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove(key);
            map.values_mut().for_each(|x| strip_key(x, key));
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(|x| strip_key(x, key)),
        _ => {}
    }
}

/// Report JSON with the schema `{spec, regime, eps_list, cells[], fit, verdicts[]}`.
pub fn report_json(report: &RateReport) -> Result<String> {
    deterministic_json(report)
}

/// Exponent of `ε` in the bound a regime is checked against.
pub fn reference_slope(regime: Regime) -> Option<f64> {
    match regime {
        Regime::LongTime | Regime::Static => Some(0.5),
        Regime::ShortTime => Some(1.0),
        Regime::Mixed => None,
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    fit: Option<(f64, f64)>,
    slope: Option<f64>,
}

/// Log-log plot of error against `ε`, one series per horizon or discount,
/// with the fitted power law (solid) and the reference slope of the series'
/// regime (dashed, through the geometric mean of the points). `config_hash` goes into `<metadata>`.
pub fn loglog_svg(report: &RateReport, config_hash: &str) -> String {
    let series: Vec<Series> = report
        .fit
        .iter()
        .map(|entry| {
            let cells: Vec<_> = report
                .cells
                .iter()
                .filter(|c| c.t == entry.t && c.lambda == entry.lambda)
                .collect();
            let points = cells
                .iter()
                .filter_map(|c| c.error().filter(|e| *e > 0.0).map(|e| (c.eps, e)))
                .collect();
            let regime = match cells.first() {
                Some(first) if cells.iter().all(|c| c.regime == first.regime) => first.regime,
                _ => Regime::Mixed,
            };
            let label = match (entry.t, entry.lambda) {
                (Some(t), _) => format!("t = {t}"),
                (_, Some(l)) => format!("λ = {l}"),
                _ => String::from("sweep"),
            };
            Series {
                label,
                points,
                fit: entry.fit.map(|f| (f.alpha, f.c_hat)),
                slope: reference_slope(regime),
            }
        })
        .collect();
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (w, h) = (640.0, 440.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        "<metadata>{{\"config_hash\":\"{}\",\"spec\":\"{}\",\"regime\":\"{}\",\"version\":\"{}\"}}</metadata>",
        xml_escape(config_hash),
        xml_escape(&report.spec),
        regime_id(report.regime),
        ARTIFACT_VERSION
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle">{} ({}): sup error vs ε</text>"#,
        w / 2.0,
        xml_escape(&report.spec),
        regime_id(report.regime)
    );
    if all.is_empty() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, w / 2.0, h / 2.0);
        svg.push_str("</svg>\n");
        return svg;
    }

    let lx: Vec<f64> = all.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = all.iter().map(|p| p.1.log10()).collect();
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(0.5);
        let mid = 0.5 * (lo + hi);
        (mid - 0.55 * span, mid + 0.55 * span)
    };
    let (x0, x1) = pad(min(&lx), max(&lx));
    let (y0, y1) = pad(min(&ly), max(&ly));
    let px = |lv: f64| left + (lv - x0) / (x1 - x0) * (w - left - right);
    let py = |lv: f64| h - bottom - (lv - y0) / (y1 - y0) * (h - top - bottom);

    let _ = writeln!(
        svg,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        w - left - right,
        h - top - bottom
    );
    for (lv, label) in log_ticks(x0, x1) {
        let x = px(lv);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{top}\" stroke=\"#ddd\"/><text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
            h - bottom,
            h - bottom + 16.0
        );
    }
    for (lv, label) in log_ticks(y0, y1) {
        let y = py(lv);
        let _ = writeln!(
            svg,
            "<line x1=\"{left}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>",
            w - right,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">ε</text><text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">error</text>"#,
        (left + w - right) / 2.0,
        h - 12.0,
        h / 2.0,
        h / 2.0
    );

    let segment = |svg: &mut String, a: (f64, f64), b: (f64, f64), color: &str, dash: bool| {
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"{}/>"#,
            px(a.0),
            py(a.1),
            px(b.0),
            py(b.1),
            if dash { r#" stroke-dasharray="6 4""# } else { "" }
        );
    };
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if s.points.is_empty() {
            continue;
        }
        let sx: Vec<f64> = s.points.iter().map(|p| p.0.log10()).collect();
        let sy: Vec<f64> = s.points.iter().map(|p| p.1.log10()).collect();
        let (a, b) = (min(&sx), max(&sx));
        if let Some((alpha, c_hat)) = s.fit {
            let f = |lx: f64| c_hat.log10() + alpha * lx;
            segment(&mut svg, (a, f(a)), (b, f(b)), color, false);
        }
        if let Some(q) = s.slope {
            let mx = sx.iter().sum::<f64>() / sx.len() as f64;
            let my = sy.iter().sum::<f64>() / sy.len() as f64;
            let g = |lx: f64| my + q * (lx - mx);
            segment(&mut svg, (a, g(a)), (b, g(b)), color, true);
        }
        for (lx, ly) in sx.iter().zip(&sy) {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                px(*lx),
                py(*ly)
            );
        }
        let mut legend = s.label.clone();
        if let Some((alpha, _)) = s.fit {
            legend += &format!(", α = {alpha:.3}");
        }
        if let Some(q) = s.slope {
            legend += &format!(", reference {q}");
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            left + 10.0,
            top + 16.0 * (k as f64 + 1.0),
            xml_escape(&legend)
        );
    }
    if series.iter().any(|s| s.slope.is_some()) {
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" text-anchor="end" fill="#444">dashed: reference slope</text>"##,
            w - right - 8.0,
            h - bottom - 8.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Tick positions (log10) and labels on `[lo, hi]`: decades, plus 2 and 5
/// multiples when fewer than three decades are visible.
fn log_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let mults: &[f64] = if hi - lo < 3.0 { &[1.0, 2.0, 5.0] } else { &[1.0] };
    let mut out = Vec::new();
    for k in (lo.floor() as i32)..=(hi.ceil() as i32) {
        for &m in mults {
            let lv = m.log10() + k as f64;
            if lv >= lo && lv <= hi {
                let label = if m == 1.0 { format!("1e{k}") } else { format!("{m}e{k}") };
                out.push((lv, label));
            }
        }
    }
    out
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Cache payload: magic, artifact version, then the bincode encoding of `value`.
pub fn encode_cache<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    let version = ARTIFACT_VERSION.as_bytes();
    out.extend_from_slice(&(version.len() as u32).to_le_bytes());
    out.extend_from_slice(version);
    bincode::serialize_into(&mut out, value).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(out)
}

/// Inverse of [`encode_cache`]; `Ok(None)` when the payload was written by a
/// different artifact version or is not a cache file.
pub fn decode_cache<T: DeserializeOwned>(bytes: &[u8]) -> Result<Option<T>> {
    let Some(rest) = bytes.strip_prefix(CACHE_MAGIC.as_slice()) else {
        return Ok(None);
    };
    if rest.len() < 4 {
        return Ok(None);
    }
    let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let rest = &rest[4..];
    if rest.len() < len || &rest[..len] != ARTIFACT_VERSION.as_bytes() {
        return Ok(None);
    }
    bincode::deserialize(&rest[len..])
        .map(Some)
        .map_err(|e| Error::Numerical(format!("corrupt cache entry: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::rates::{fit_exponent, Cell, FitEntry, PairMeasure, Status, Verdict};
    use crate::solvers::Method;

    fn field() -> ValueField {
        ValueField {
            method: Method::LaxOleinikDp,
            grid: Grid::symmetric(0.5, 0.25).unwrap(),
            times: vec![0.0, 0.5],
            lambda: None,
            values: vec![vec![0.0, 0.1, 0.2, 0.1, 0.0], vec![1.0, 1.5, 2.0, 1.5, 1.0]],
            dt: 0.5,
            steps: 1,
            saturated_fraction: 0.0,
        }
    }

    fn report() -> RateReport {
        let eps_list = vec![0.2, 0.1, 0.05];
        let errors: Vec<f64> = eps_list.iter().map(|e: &f64| 0.3 * e.sqrt()).collect();
        let cells = eps_list
            .iter()
            .zip(&errors)
            .map(|(&eps, &error)| {
                let m = PairMeasure {
                    error,
                    gap: error,
                    u_eps_origin: 0.0,
                    u_bar_origin: 0.0,
                    h: eps / 32.0,
                    dt: eps / 4.0,
                };
                Cell {
                    eps,
                    t: Some(1.0),
                    lambda: None,
                    regime: Regime::LongTime,
                    status: CellStatus::Ok,
                    primary: Some(m),
                    cross: None,
                    refined: None,
                    tol_cross: None,
                    tol_refine: None,
                    apriori_value: None,
                    apriori_bound: None,
                    runtime_s: 1.25,
                }
            })
            .collect();
        RateReport {
            spec: "prop43_cauchy".into(),
            regime: Regime::LongTime,
            fit: vec![FitEntry {
                t: Some(1.0),
                lambda: None,
                fit: Some(fit_exponent(&eps_list, &errors).unwrap()),
                note: None,
            }],
            eps_list,
            cells,
            verdicts: vec![Verdict::new("thm_main", true, "band 1.0").expecting(Status::Pass)],
            runtime_s: 3.5,
        }
    }

    #[test]
    fn field_csv_lists_every_snapshot() {
        let mut buf = Vec::new();
        write_field_csv(&field(), &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x,t,value");
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[8], "0,0.5,2");
    }

    #[test]
    fn static_field_csv_has_lambda_column() {
        let mut f = field();
        f.lambda = Some(0.25);
        f.times.clear();
        f.values.remove(0);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,lambda,value\n-0.5,0.25,1\n"));
    }

    #[test]
    fn errors_csv_round_trips_numbers() {
        let r = report();
        let mut buf = Vec::new();
        write_errors_csv(&r, TolPolicy::Cross, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        for (line, cell) in s.lines().skip(1).zip(&r.cells) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 8);
            assert_eq!(cols[0].parse::<f64>().unwrap(), cell.eps);
            assert_eq!(cols[4].parse::<f64>().unwrap(), cell.error().unwrap());
            assert_eq!(cols[3], "long_time");
        }
    }

    #[test]
    fn report_json_has_schema_keys_and_no_timings() {
        let s = report_json(&report()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["spec", "regime", "cells", "fit", "verdicts"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(!s.contains("runtime_s"));
    }

    #[test]
    fn svg_embeds_hash_and_both_lines() {
        let s = loglog_svg(&report(), "abc123");
        assert!(s.starts_with("<svg"));
        assert!(s.contains("\"config_hash\":\"abc123\""));
        assert!(s.contains("stroke-dasharray"));
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(s.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn svg_of_empty_report_is_valid() {
        let mut r = report();
        r.cells.clear();
        let s = loglog_svg(&r, "x");
        assert!(s.contains("no data"));
    }

    #[test]
    fn cache_round_trip_and_version_guard() {
        let f = field();
        let bytes = encode_cache(&f).unwrap();
        let back: ValueField = decode_cache(&bytes).unwrap().unwrap();
        assert_eq!(back, f);

        let mut stale = bytes.clone();
        stale[8] ^= 0x20;
        assert!(decode_cache::<ValueField>(&stale).unwrap().is_none());
        assert!(decode_cache::<ValueField>(b"nope").unwrap().is_none());
        assert!(decode_cache::<ValueField>(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn ticks_cover_short_ranges() {
        let t = log_ticks(-1.8, -0.6);
        let labels: Vec<&str> = t.iter().map(|x| x.1.as_str()).collect();
        assert_eq!(labels, ["2e-2", "5e-2", "1e-1", "2e-1"]);
        assert_eq!(log_ticks(-6.0, 0.0).len(), 7);
    }

    #[test]
    fn reference_slopes() {
        assert_eq!(reference_slope(Regime::LongTime), Some(0.5));
        assert_eq!(reference_slope(Regime::ShortTime), Some(1.0));
        assert_eq!(reference_slope(Regime::Mixed), None);
    }
}
