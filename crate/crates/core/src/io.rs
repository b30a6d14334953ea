//! CSV ingestion and emission. Floats are written in shortest round-trip
//! form, so reading a written file back is lossless.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::inference::VolSeries;
use crate::premium::{VarSwapQuote, VarSwapQuoteSet};

/// Day count for quote tenors.
pub const TENOR_DAY_COUNT: f64 = 365.0;

/// A non-fatal observation made while reading input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notice(pub String);

impl std::fmt::Display for Notice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Records with their 1-based file line, after checking the header.
fn records(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(format!("cannot open {}", path.display()), e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(parse_err(path, 1, format!("expected header '{}', found '{}'", header.join(","), got.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| parse_err(path, line, format!("missing field '{name}'")))?;
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {name} '{raw}'")))
}

/// Reads `date,value` rows, sorting by date and rejecting duplicates.
fn dated_positive(path: &Path, header: [&str; 2]) -> Result<(Vec<NaiveDate>, Vec<f64>, Vec<Notice>)> {
    let mut rows = Vec::new();
    let mut notices = Vec::new();
    for (line, rec) in records(path, &header)? {
        let date: NaiveDate = field(path, line, &rec, 0, "date")?;
        let x: f64 = field(path, line, &rec, 1, header[1])?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(parse_err(path, line, format!("{} must be positive, got {x}", header[1])));
        }
        rows.push((date, x, line));
    }
    if rows.windows(2).any(|w| w[0].0 > w[1].0) {
        notices.push(Notice(format!("{}: dates out of order, rows sorted", path.display())));
        rows.sort_by_key(|r| r.0);
    }
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(path, w[1].2, format!("duplicate date {}", w[1].0)));
    }
    let (dates, values) = rows.into_iter().map(|(d, x, _)| (d, x)).unzip();
    Ok((dates, values, notices))
}

/// `date,rv` with ISO-8601 dates and decimal annualised volatility.
pub fn read_vol_series(path: &Path) -> Result<(VolSeries, Vec<Notice>)> {
    let (dates, rv, notices) = dated_positive(path, ["date", "rv"])?;
    Ok((VolSeries::new(dates, rv)?, notices))
}

/// `date,close`.
pub fn read_closes(path: &Path) -> Result<(Vec<NaiveDate>, Vec<f64>, Vec<Notice>)> {
    dated_positive(path, ["date", "close"])
}

/// `date,tenor_days,strike_vol`, grouped by date with tenors in years.
pub fn read_varswap_quotes(path: &Path) -> Result<(Vec<VarSwapQuoteSet>, Vec<Notice>)> {
    let mut by_date: BTreeMap<NaiveDate, BTreeMap<u32, (f64, usize)>> = BTreeMap::new();
    for (line, rec) in records(path, &["date", "tenor_days", "strike_vol"])? {
        let date: NaiveDate = field(path, line, &rec, 0, "date")?;
        let days: u32 = field(path, line, &rec, 1, "tenor_days")?;
        let vol: f64 = field(path, line, &rec, 2, "strike_vol")?;
        if days == 0 {
            return Err(parse_err(path, line, "tenor_days must be positive"));
        }
        if !(vol > 0.0 && vol.is_finite()) {
            return Err(parse_err(path, line, format!("strike_vol must be positive, got {vol}")));
        }
        if by_date.entry(date).or_default().insert(days, (vol, line)).is_some() {
            return Err(parse_err(path, line, format!("duplicate quote for {date} at {days} days")));
        }
    }
    let mut notices = Vec::new();
    if by_date.is_empty() {
        notices.push(Notice(format!("{}: no quotes", path.display())));
    }
    let sets = by_date
        .into_iter()
        .map(|(date, q)| {
            let quotes = q
                .into_iter()
                .map(|(days, (strike_vol, _))| VarSwapQuote {
                    tenor: days as f64 / TENOR_DAY_COUNT,
                    strike_vol,
                })
                .collect();
            VarSwapQuoteSet::new(date, quotes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((sets, notices))
}

/// Tenor in whole days, as read.
pub fn tenor_days(tenor: f64) -> u32 {
    (tenor * TENOR_DAY_COUNT).round() as u32
}

/// One CSV cell.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// In-memory CSV table written in one go with LF endings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::io("csv buffer", e.into_error()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = File::create(path).map_err(|e| Error::io(format!("cannot create {}", path.display()), e))?;
        f.write_all(&bytes)
            .map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
    }

    /// Writes to stdout when `path` is None.
    pub fn emit(&self, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => self.write(p),
            None => std::io::stdout()
                .write_all(&self.to_bytes()?)
                .map_err(|e| Error::io("stdout", e)),
        }
    }
}

/// Creates `dir` if needed and returns `dir/name`.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("cannot create {}", dir.display()), e))?;
    Ok(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_a_small_vol_series() {
        let f = file("date,rv\n2024-01-02,0.2\n2024-01-03,0.21\n2024-01-04,0.19\n");
        let (s, n) = read_vol_series(f.path()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(n.is_empty());
    }

    #[test]
    fn sorts_out_of_order_dates_with_a_notice() {
        let f = file("date,rv\n2024-01-03,0.2\n2024-01-02,0.21\n");
        let (s, n) = read_vol_series(f.path()).unwrap();
        assert_eq!(s.values(), &[0.21, 0.2]);
        assert_eq!(n.len(), 1);
    }

    #[test]
    fn zero_rv_cites_its_line() {
        let rows: String = (1..=5).map(|d| format!("2024-01-0{d},0.2\n")).collect();
        let f = file(&format!("date,rv\n{rows}2024-01-06,0\n"));
        match read_vol_series(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 7),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_dates_are_rejected() {
        let f = file("date,rv\n2024-01-02,0.2\n2024-01-02,0.21\n");
        assert!(read_vol_series(f.path()).is_err());
    }

    #[test]
    fn groups_quotes_by_date() {
        let f = file("date,tenor_days,strike_vol\n2024-01-02,365,0.2\n2024-01-02,30,0.18\n2024-01-02,91,0.19\n2024-01-02,730,0.21\n2024-01-02,182,0.2\n");
        let (sets, _) = read_varswap_quotes(f.path()).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].quotes.len(), 5);
        assert_eq!(sets[0].quotes[0].tenor, 30.0 / 365.0);
        assert!(sets[0].tenors().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_quote_file_warns() {
        let f = file("date,tenor_days,strike_vol\n");
        let (sets, notices) = read_varswap_quotes(f.path()).unwrap();
        assert!(sets.is_empty());
        assert_eq!(notices.len(), 1);
    }

    #[test]
    fn bad_quotes_are_rejected() {
        let neg = file("date,tenor_days,strike_vol\n2024-01-02,30,-0.1\n");
        assert!(read_varswap_quotes(neg.path()).is_err());
        let dup = file("date,tenor_days,strike_vol\n2024-01-02,30,0.1\n2024-01-02,30,0.2\n");
        assert!(read_varswap_quotes(dup.path()).is_err());
        let hdr = file("day,tenor,vol\n");
        assert!(read_varswap_quotes(hdr.path()).is_err());
    }

    #[test]
    fn tables_use_lf() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        assert_eq!(t.to_bytes().unwrap(), b"a,b\n1,0.5\n");
    }

    proptest! {
        #[test]
        fn floats_round_trip_through_csv(xs in prop::collection::vec(1e-300f64..1e300, 1..20)) {
            let mut t = Table::new(&["date", "rv"]);
            let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
            for (i, x) in xs.iter().enumerate() {
                t.push(vec![(start + chrono::Days::new(i as u64)).to_string(), fmt_f64(*x)]);
            }
            let f = tempfile::NamedTempFile::new().unwrap();
            t.write(f.path()).unwrap();
            let (s, _) = read_vol_series(f.path()).unwrap();
            prop_assert_eq!(s.values(), &xs[..]);
        }
    }
}
