use std::fmt::Write as _;
use std::path::Path;

use super::table::{ColumnData, SweepTable};
use crate::error::{Error, Result};

const SIGNIFICANT_DIGITS: i32 = 9;

/// `v` with nine significant digits; fixed notation for moderate
/// magnitudes, exponent notation otherwise. `NaN` prints as an empty field.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// The CSV text of `table`: a header row of `name (unit)` labels, then one
/// row per record, LF line endings.
pub fn csv_string(table: &SweepTable) -> String {
    let mut out = String::new();
    let header: Vec<String> = table.columns.iter().map(|c| quote(&c.header())).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in 0..table.len() {
        let fields: Vec<String> = table
            .columns
            .iter()
            .map(|c| match &c.data {
                ColumnData::Number(v) => format_value(v[row]),
                ColumnData::Text(v) => quote(&v[row]),
            })
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<usize> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.len())
}

/// Writes `table` as CSV to `path`, returning the byte count.
pub fn emit_csv(table: &SweepTable, path: &Path) -> Result<usize> {
    if table.is_empty() {
        return Err(Error::Domain("cannot emit an empty table".into()));
    }
    write_file(path, &csv_string(table))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick positions covering `[lo, hi]` at a 1-2-5 spacing.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|i| i as f64 * step).collect(), step)
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{:.*}", decimals, v);
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        s
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// SVG line plot of `y_columns` against `x_column`: axes, tick labels, a
/// legend and one polyline per y column. Missing values are skipped.
pub fn svg_string(table: &SweepTable, x_column: &str, y_columns: &[&str]) -> Result<String> {
    let x = table.values(x_column)?;
    let ys = y_columns
        .iter()
        .map(|&name| Ok((table.column(name)?, table.values(name)?)))
        .collect::<Result<Vec<_>>>()?;
    if y_columns.is_empty() {
        return Err(Error::Usage(format!(
            "no y column given; available columns: {}",
            table.column_names().join(", ")
        )));
    }
    if table.len() < 2 {
        return Err(Error::Domain("a plot needs at least two records".into()));
    }
    let xc = table.column(x_column)?;
    let (x0, x1) = padded_range(x.iter().copied());
    let (y0, y1) = padded_range(ys.iter().flat_map(|(_, v)| v.iter().copied()));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
    let sy = |v: f64| TOP + ph - (v - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&table.title)
    );

    let (xt, xstep) = ticks(x0, x1);
    let (yt, ystep) = ticks(y0, y1);
    let _ = writeln!(s, r##"<g stroke="#dddddd" stroke-width="1">"##);
    for &t in &xt {
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}"/>"#, sx(t), TOP, TOP + ph);
    }
    for &t in &yt {
        let _ = writeln!(s, r#"<line x1="{1:.2}" y1="{0:.2}" x2="{2:.2}" y2="{0:.2}"/>"#, sy(t), LEFT, LEFT + pw);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for &t in &xt {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(t),
            TOP + ph + 18.0,
            tick_label(t, xstep)
        );
    }
    for &t in &yt {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LEFT - 6.0,
            sy(t),
            tick_label(t, ystep)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(&xc.header())
    );
    let y_unit = ys[0].0.unit.clone();
    if ys.iter().all(|(c, _)| c.unit == y_unit) && !y_unit.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&format!("({y_unit})"))
        );
    }

    for (k, (col, vals)) in ys.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = x
            .iter()
            .zip(vals.iter())
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| format!("{:.2},{:.2}", sx(a), sy(b)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" dominant-baseline="middle">{}</text>"#,
            lx + 30.0,
            escape(&col.header())
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes the plot from [`svg_string`] to `path`, returning the byte count.
pub fn emit_svg_plot(table: &SweepTable, x_column: &str, y_columns: &[&str], path: &Path) -> Result<usize> {
    let text = svg_string(table, x_column, y_columns)?;
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::table::Column;

    fn table() -> SweepTable {
        SweepTable::new(
            "demo, \"quoted\"",
            vec![
                Column::number("force", "N", vec![0.0, 10.0, 20.0]),
                Column::number("torque", "N·m", vec![0.0, 1.5, f64::NAN]),
                Column::text("note", vec!["a".into(), "b,c".into(), "say \"hi\"".into()]),
            ],
            "force",
            &["torque"],
        )
    }

    #[test]
    fn value_formatting() {
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(-0.0), "0");
        assert_eq!(format_value(1.5), "1.5");
        assert_eq!(format_value(-141.0), "-141");
        assert_eq!(format_value(0.1 + 0.2), "0.3");
        assert_eq!(format_value(std::f64::consts::PI), "3.14159265");
        assert_eq!(format_value(123456789.4), "123456789");
        assert_eq!(format_value(1.0e-7), "1e-7");
        assert_eq!(format_value(-2.5e12), "-2.5e12");
        assert_eq!(format_value(f64::NAN), "");
    }

    #[test]
    fn csv_layout() {
        let text = csv_string(&table());
        let lines: Vec<&str> = text.split_terminator('\n').collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "force (N),torque (N·m),note");
        assert_eq!(lines[2], "10,1.5,\"b,c\"");
        assert_eq!(lines[3], "20,,\"say \"\"hi\"\"\"");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn svg_structure() {
        let t = table();
        let svg = svg_string(&t, "force", &["torque"]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("&quot;quoted&quot;"));
        assert_eq!(svg, svg_string(&t, "force", &["torque"]).unwrap());
        let e = svg_string(&t, "force", &["nope"]).unwrap_err().to_string();
        assert!(e.contains("force, torque, note"), "{e}");
    }

    #[test]
    fn tick_spacing() {
        let (t, step) = ticks(-141.0, -39.5);
        assert_eq!(step, 20.0);
        assert_eq!(t.first(), Some(&-140.0));
        assert_eq!(t.last(), Some(&-40.0));
        assert_eq!(tick_label(0.25, 0.05), "0.25");
    }
}
