//! Spectrum plots as standalone SVG, with the plotted values alongside as CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use scoredim_core::estimator::{write_spectra_csv, Spectrum};
use scoredim_core::{Error, Result};

use crate::plan::io_error;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
/// Smallest value shown on a log axis, relative to the largest.
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct PlotOptions {
    /// Divide each spectrum by its largest value.
    pub normalized: bool,
    pub log_scale: bool,
    pub title: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes an SVG with one polyline per spectrum (vertex i at rank i) to
/// `path`, and the raw spectra to `path` with a `.csv` extension.
pub fn export_spectrum_plot(spectra: &[Spectrum], path: &Path, opts: &PlotOptions) -> Result<()> {
    if spectra.is_empty() {
        return Err(Error::Parameter("no spectra to plot".into()));
    }
    let series: Vec<Vec<f64>> = spectra
        .iter()
        .map(|s| if opts.normalized { s.normalized() } else { s.singular_values.clone() })
        .collect();
    let max_len = series.iter().map(Vec::len).max().unwrap_or(0).max(2);
    let top = series.iter().flatten().copied().fold(0.0_f64, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    let (lo, hi) = if opts.log_scale { ((top * LOG_FLOOR).log10(), top.log10()) } else { (0.0, top) };
    let y_of = |v: f64| {
        let v = if opts.log_scale { v.max(top * LOG_FLOOR).log10() } else { v };
        HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN)
    };
    let x_of = |i: usize| MARGIN + i as f64 / (max_len - 1) as f64 * (WIDTH - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(svg, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&opts.title));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">rank i</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    let ylabel = match (opts.normalized, opts.log_scale) {
        (true, true) => "log10 s_i/s_1",
        (true, false) => "s_i/s_1",
        (false, true) => "log10 s_i",
        (false, false) => "s_i",
    };
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">{ylabel}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (label, v) in [(format!("{hi:.3}"), hi), (format!("{lo:.3}"), lo)] {
        let y = if opts.log_scale { y_of(10f64.powf(v)) } else { y_of(v) };
        let _ = writeln!(svg, r#"<text x="{}" y="{y:.2}" font-size="10" text-anchor="end">{label}</text>"#, MARGIN - 4.0);
    }
    for s in &series {
        let pts: Vec<String> = s.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="steelblue" stroke-opacity="0.6" points="{}"/>"#, pts.join(" "));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| io_error(path, e))?;
    write_spectra_csv(spectra, &path.with_extension("csv"))
}

/// Reads spectra back from the CSV written next to a plot.
pub fn read_spectra_csv(path: &Path) -> Result<Vec<Spectrum>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let bad = |line: usize, why: &str| Error::Format { path: path.to_path_buf(), reason: format!("line {line}: {why}") };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "point_index,rank,s,s_over_s1")) => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    let mut order = Vec::new();
    let mut by_point: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(i + 1, "expected 4 fields"));
        }
        let point: usize = f[0].parse().map_err(|_| bad(i + 1, "bad point index"))?;
        let s: f64 = f[2].parse().map_err(|_| bad(i + 1, "bad value"))?;
        let values = by_point.entry(point).or_insert_with(|| {
            order.push(point);
            Vec::new()
        });
        values.push(s);
    }
    Ok(order
        .into_iter()
        .map(|p| Spectrum { singular_values: by_point.remove(&p).unwrap_or_default(), base_point: Some(p), t0: None, samples: 0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(values: &[f64], point: usize) -> Spectrum {
        Spectrum { singular_values: values.to_vec(), base_point: Some(point), t0: None, samples: 0 }
    }

    fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
                pts.split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn one_polyline_with_one_vertex_per_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.svg");
        let values: Vec<f64> = (0..30).map(|i| 30.0 - i as f64).collect();
        export_spectrum_plot(&[spectrum(&values, 0)], &path, &PlotOptions::default()).unwrap();
        let lines = polylines(&fs::read_to_string(&path).unwrap());
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 30);
    }

    #[test]
    fn normalized_polylines_start_at_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.svg");
        let spectra = [spectrum(&[4.0, 2.0, 0.1], 0), spectrum(&[9.0, 1.0, 0.5], 1)];
        let opts = PlotOptions { normalized: true, ..Default::default() };
        export_spectrum_plot(&spectra, &path, &opts).unwrap();
        let lines = polylines(&fs::read_to_string(&path).unwrap());
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| (l[0].1 - MARGIN).abs() < 1e-9));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.svg");
        let spectra = vec![spectrum(&[1.0 / 3.0, 1e-17, 0.0], 7), spectrum(&[std::f64::consts::PI, 2.5e-300, 0.0], 2)];
        let opts = PlotOptions { log_scale: true, ..Default::default() };
        export_spectrum_plot(&spectra, &path, &opts).unwrap();
        let back = read_spectra_csv(&path.with_extension("csv")).unwrap();
        assert_eq!(back, spectra);
    }

    #[test]
    fn empty_input_and_bad_path_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(export_spectrum_plot(&[], &dir.path().join("x.svg"), &PlotOptions::default()).is_err());
        let missing = dir.path().join("no/such/dir/x.svg");
        let res = export_spectrum_plot(&[spectrum(&[1.0, 0.5], 0)], &missing, &PlotOptions::default());
        assert!(matches!(res, Err(Error::Io { .. })));
    }
}
