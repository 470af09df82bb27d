//! File writers for reports, curves and plots.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::profile::DecileProfile;
use super::stratify::Stratification;
use crate::error::{Error, Result};
use crate::survival::{write_km_csv, KmCurve};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::io(path, e.into()))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_stratification_km(path: &Path, s: &Stratification) -> Result<()> {
    let mut out = create(path)?;
    write_km_csv(&mut out, &[("high", &s.km_high), ("low", &s.km_low)])
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_profile_csv(path: &Path, profile: &DecileProfile) -> Result<()> {
    let mut out = create(path)?;
    profile
        .write_csv(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

fn step_path(
    curve: &KmCurve,
    x: impl Fn(f64) -> f64,
    y: impl Fn(f64) -> f64,
    t_end: f64,
) -> String {
    let mut d = format!("M{:.2},{:.2}", x(0.0), y(1.0));
    let mut s = 1.0;
    for (&t, &next) in curve.event_times.iter().zip(&curve.survival) {
        let _ = write!(d, " H{:.2} V{:.2}", x(t), y(next));
        s = next;
    }
    let _ = write!(d, " H{:.2}", x(t_end));
    let _ = s;
    d
}

/// Kaplan-Meier plot of the high and low groups as a standalone SVG.
pub fn km_svg(s: &Stratification, title: &str, t_max: f64) -> String {
    let t_end = if t_max > 0.0 && t_max.is_finite() {
        t_max
    } else {
        s.km_high
            .event_times
            .iter()
            .chain(&s.km_low.event_times)
            .fold(1.0_f64, |a, &b| a.max(b))
    };
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |t: f64| MARGIN_L + pw * (t / t_end).min(1.0);
    let y = |p: f64| MARGIN_T + ph * (1.0 - p);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{l},{t} V{b} H{r}" stroke="black" fill="none"/>"#,
        l = MARGIN_L,
        t = MARGIN_T,
        b = MARGIN_T + ph,
        r = MARGIN_L + pw
    );
    for i in 0..=4 {
        let p = i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{p:.2}</text>"#,
            MARGIN_L - 6.0,
            y(p) + 4.0
        );
        let t = t_end * p;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.2}</text>"#,
            x(t),
            MARGIN_T + ph + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Time</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">Survival probability</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    );
    for (curve, colour, name) in [
        (&s.km_high, "#c0392b", "High risk"),
        (&s.km_low, "#2471a3", "Low risk"),
    ] {
        if curve.n_subjects == 0 {
            continue;
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" stroke="{colour}" stroke-width="2" fill="none"><title>{name} (n={})</title></path>"#,
            step_path(curve, x, y, t_end),
            curve.n_subjects
        );
    }
    let legend_x = MARGIN_L + pw - 150.0;
    for (i, (colour, name, n)) in [
        ("#c0392b", "High risk", s.km_high.n_subjects),
        ("#2471a3", "Low risk", s.km_low.n_subjects),
    ]
    .into_iter()
    .enumerate()
    {
        let ly = MARGIN_T + 15.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{legend_x:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name} (n={n})</text>"#,
            legend_x + 20.0,
            legend_x + 26.0,
            ly + 4.0
        );
    }
    let annotation = match &s.logrank {
        Some(lr) => format!("log-rank p = {}", format_p(lr.p_value)),
        None => "log-rank test not available".to_string(),
    };
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}">{annotation}</text>"#,
        legend_x,
        MARGIN_T + 60.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn format_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
