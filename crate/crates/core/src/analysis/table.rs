use crate::error::{Error, Result};

/// Values of one table column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    /// Numeric samples; `NaN` marks a missing value.
    Number(Vec<f64>),
    Text(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    /// Unit label printed in the CSV header, `-` for dimensionless.
    pub unit: String,
    pub data: ColumnData,
}

impl Column {
    pub fn number(name: &str, unit: &str, values: Vec<f64>) -> Column {
        Column {
            name: name.to_string(),
            unit: unit.to_string(),
            data: ColumnData::Number(values),
        }
    }

    pub fn text(name: &str, values: Vec<String>) -> Column {
        Column {
            name: name.to_string(),
            unit: String::new(),
            data: ColumnData::Text(values),
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Number(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn header(&self) -> String {
        if self.unit.is_empty() {
            self.name.clone()
        } else {
            format!("{} ({})", self.name, self.unit)
        }
    }

    pub fn numbers(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Number(v) => Some(v),
            ColumnData::Text(_) => None,
        }
    }
}

/// Column-oriented result of a sweep, one record per requested sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub title: String,
    pub columns: Vec<Column>,
    /// Column plotted on the x axis by default.
    pub x_column: String,
    /// Columns plotted on the y axis by default.
    pub y_columns: Vec<String>,
    /// `J(open) / J(closed) - 1` read off the first fully opened record of a
    /// ratio sweep; `None` when no record reached every end stop.
    pub ratio_step: Option<f64>,
}

impl SweepTable {
    pub fn new(title: &str, columns: Vec<Column>, x_column: &str, y_columns: &[&str]) -> SweepTable {
        debug_assert!(columns.windows(2).all(|w| w[0].len() == w[1].len()));
        SweepTable {
            title: title.to_string(),
            columns,
            x_column: x_column.to_string(),
            y_columns: y_columns.iter().map(|s| s.to_string()).collect(),
            ratio_step: None,
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns.iter().find(|c| c.name == name).ok_or_else(|| {
            Error::Usage(format!(
                "unknown column `{name}`; available columns: {}",
                self.column_names().join(", ")
            ))
        })
    }

    /// Numeric column by name.
    pub fn values(&self, name: &str) -> Result<&[f64]> {
        self.column(name)?
            .numbers()
            .ok_or_else(|| Error::Usage(format!("column `{name}` is not numeric")))
    }

    /// Text column by name.
    pub fn labels(&self, name: &str) -> Result<&[String]> {
        match &self.column(name)?.data {
            ColumnData::Text(v) => Ok(v),
            ColumnData::Number(_) => Err(Error::Usage(format!("column `{name}` is not text"))),
        }
    }

    /// Appends a natural cubic spline of `y` against `x`, resampled with
    /// `subdivisions` points per sample interval, as a new table. Infeasible
    /// (`NaN`) samples are skipped; the spline never extends past the data.
    pub fn spline_resample(&self, x: &str, y: &str, subdivisions: usize) -> Result<SweepTable> {
        let xs = self.values(x)?;
        let ys = self.values(y)?;
        let (px, py): (Vec<f64>, Vec<f64>) = xs
            .iter()
            .zip(ys)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| (a, b))
            .unzip();
        let spline = NaturalSpline::fit(&px, &py)?;
        let sub = subdivisions.max(1);
        let mut grid = Vec::with_capacity((px.len() - 1) * sub + 1);
        for w in px.windows(2) {
            for j in 0..sub {
                grid.push(w[0] + (w[1] - w[0]) * j as f64 / sub as f64);
            }
        }
        grid.push(px[px.len() - 1]);
        let values = grid.iter().map(|&g| spline.eval(g).unwrap_or(f64::NAN)).collect();
        let xc = self.column(x)?;
        let yc = self.column(y)?;
        let name = format!("{y}_spline");
        Ok(SweepTable::new(
            &format!("{} (spline)", self.title),
            vec![
                Column::number(x, &xc.unit, grid),
                Column::number(&name, &yc.unit, values),
            ],
            x,
            &[&name],
        ))
    }
}

/// Natural cubic spline through strictly increasing knots.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<NaturalSpline> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::Domain("a spline needs at least two samples".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("spline knots must be strictly increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior knots.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(NaturalSpline { x: x.to_vec(), y: y.to_vec(), m })
    }

    /// Value at `t`, or `None` outside the knot range.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let n = self.x.len();
        if !(t >= self.x[0] && t <= self.x[n - 1]) {
            return None;
        }
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        Some(
            a * self.y[i]
                + b * self.y[i + 1]
                + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0,
        )
    }
}

/// Sample grid from `from` to `to` at `step`.
///
/// Points are `from + i * step`. When the last grid point falls short of `to`
/// by less than half a step it is moved onto `to`, so a range that is not a
/// whole number of steps still ends on its endpoint. A step longer than the
/// range gives the single sample `from`.
pub fn sample_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from.is_finite() && to.is_finite()) {
        return Err(Error::Domain("sweep bounds must be finite".into()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("sweep step must be positive, got {step}")));
    }
    if to < from {
        return Err(Error::Domain(format!("sweep range is empty: {from} > {to}")));
    }
    let span = to - from;
    let tol = 1e-9 * step.max(span);
    let n = ((span + tol) / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| from + i as f64 * step).collect();
    let gap = to - grid[n];
    if gap.abs() <= tol || (n > 0 && gap < 0.5 * step) {
        grid[n] = to;
    }
    Ok(grid)
}
