//! Row-by-row diff of two CSV files with the same header.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("headers differ:\n  left:  {left}\n  right: {right}")]
    SchemaMismatch { left: String, right: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown key column `{0}`")]
    UnknownKey(String),
    #[error("bad trend `{0}`, expected column:up|down|same")]
    BadTrend(String),
}

/// Columns that identify a row when no key is given.
pub const IDENTITY: [&str; 12] = [
    "scenario", "variant", "protocol", "seed", "chain", "request", "attempt", "relayer", "job", "service", "metric",
    "op",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    Same,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trend {
    pub column: String,
    pub direction: Direction,
}

impl std::str::FromStr for Trend {
    type Err = CompareError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, d) = s.split_once(':').ok_or_else(|| CompareError::BadTrend(s.into()))?;
        let direction = match d {
            "up" => Direction::Up,
            "down" => Direction::Down,
            "same" => Direction::Same,
            _ => return Err(CompareError::BadTrend(s.into())),
        };
        Ok(Trend { column: c.to_string(), direction })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Delta {
    pub key: String,
    pub column: String,
    pub left: f64,
    pub right: f64,
}

impl Delta {
    pub fn delta(&self) -> f64 {
        self.right - self.left
    }

    pub fn change_pct(&self) -> Option<f64> {
        (self.left != 0.0).then(|| 100.0 * (self.right - self.left) / self.left)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diff {
    pub key_columns: Vec<String>,
    /// Differing numeric cells of rows present on both sides.
    pub deltas: Vec<Delta>,
    /// Every numeric cell of matched rows, differing or not.
    pub matched: Vec<Delta>,
    pub only_left: Vec<String>,
    pub only_right: Vec<String>,
    /// Non-numeric cells that differ.
    pub text_changes: Vec<(String, String, String, String)>,
}

impl Diff {
    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
            && self.only_left.is_empty()
            && self.only_right.is_empty()
            && self.text_changes.is_empty()
    }

    /// Whether every matched row moves `column` in the given direction.
    /// Vacuously false when no row carries the column.
    pub fn holds(&self, t: &Trend) -> bool {
        let cells: Vec<&Delta> = self.matched.iter().filter(|d| d.column == t.column).collect();
        !cells.is_empty()
            && cells.iter().all(|d| match t.direction {
                Direction::Up => d.right > d.left,
                Direction::Down => d.right < d.left,
                Direction::Same => d.right == d.left,
            })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record(["key", "column", "left", "right", "delta", "change_pct"]);
        for d in &self.deltas {
            let pct = d.change_pct().map(|p| format!("{p:.2}")).unwrap_or_default();
            let _ = w.write_record([
                d.key.clone(),
                d.column.clone(),
                d.left.to_string(),
                d.right.to_string(),
                d.delta().to_string(),
                pct,
            ]);
        }
        for k in &self.only_left {
            let _ = w.write_record([k.as_str(), "(row)", "present", "missing", "", ""]);
        }
        for k in &self.only_right {
            let _ = w.write_record([k.as_str(), "(row)", "missing", "present", "", ""]);
        }
        for (k, c, l, r) in &self.text_changes {
            let _ = w.write_record([k.as_str(), c, l, r, "", ""]);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read(text: &str) -> Result<Table, CompareError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}

fn keyed(rows: &[Vec<String>], key: &[usize]) -> BTreeMap<String, Vec<String>> {
    let mut out = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in rows {
        let base = key.iter().map(|&i| r[i].as_str()).collect::<Vec<_>>().join("|");
        let n = counts.entry(base.clone()).or_default();
        let k = if *n == 0 { base.clone() } else { format!("{base}#{n}") };
        *n += 1;
        out.insert(k, r.clone());
    }
    out
}

pub fn compare(left: &str, right: &str, key: Option<&[String]>) -> Result<Diff, CompareError> {
    let (lh, lrows) = read(left)?;
    let (rh, rrows) = read(right)?;
    if lh != rh {
        return Err(CompareError::SchemaMismatch { left: lh.join(","), right: rh.join(",") });
    }
    let key_columns: Vec<String> = match key {
        Some(k) => {
            for c in k {
                if !lh.contains(c) {
                    return Err(CompareError::UnknownKey(c.clone()));
                }
            }
            k.to_vec()
        }
        None => lh.iter().filter(|c| IDENTITY.contains(&c.as_str())).cloned().collect(),
    };
    let key_idx: Vec<usize> = key_columns.iter().map(|c| lh.iter().position(|h| h == c).unwrap_or(0)).collect();
    let numeric = |i: usize| {
        lrows.iter().chain(&rrows).all(|r| r[i].is_empty() || r[i].parse::<f64>().is_ok())
            && lrows.iter().chain(&rrows).any(|r| !r[i].is_empty())
    };
    let value_cols: Vec<usize> = (0..lh.len()).filter(|i| !key_idx.contains(i)).collect();
    let is_num: Vec<bool> = value_cols.iter().map(|&i| numeric(i)).collect();
    let l = keyed(&lrows, &key_idx);
    let r = keyed(&rrows, &key_idx);
    let mut diff = Diff { key_columns, ..Diff::default() };
    for (k, lrow) in &l {
        let Some(rrow) = r.get(k) else {
            diff.only_left.push(k.clone());
            continue;
        };
        for (j, &i) in value_cols.iter().enumerate() {
            if is_num[j] {
                let a = lrow[i].parse().unwrap_or(0.0);
                let b = rrow[i].parse().unwrap_or(0.0);
                let d = Delta { key: k.clone(), column: lh[i].clone(), left: a, right: b };
                if lrow[i] != rrow[i] {
                    diff.deltas.push(d.clone());
                }
                diff.matched.push(d);
            } else if lrow[i] != rrow[i] {
                diff.text_changes.push((k.clone(), lh[i].clone(), lrow[i].clone(), rrow[i].clone()));
            }
        }
    }
    diff.only_right = r.keys().filter(|k| !l.contains_key(*k)).cloned().collect();
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "scenario,variant,latency\nx,a,10\nx,b,20\n";

    #[test]
    fn identical_files_have_no_diff() {
        assert!(compare(A, A, None).unwrap().is_empty());
    }

    #[test]
    fn header_mismatch_is_an_error() {
        let b = "scenario,variant,rounds\nx,a,10\n";
        assert!(matches!(compare(A, b, None), Err(CompareError::SchemaMismatch { .. })));
    }

    #[test]
    fn trends_are_checked_per_row() {
        let b = "scenario,variant,latency\nx,a,15\nx,b,25\n";
        let d = compare(A, b, None).unwrap();
        assert_eq!(d.deltas.len(), 2);
        assert!(d.holds(&"latency:up".parse().unwrap()));
        assert!(!d.holds(&"latency:down".parse().unwrap()));
        let c = "scenario,variant,latency\nx,a,15\nx,b,5\n";
        assert!(!compare(A, c, None).unwrap().holds(&"latency:up".parse().unwrap()));
    }

    #[test]
    fn custom_key_pairs_rows_across_protocols() {
        let l = "protocol,variant,latency\nintegratex,d=4,50\n";
        let r = "protocol,variant,latency\nbaseline,d=4,105\n";
        let d = compare(l, r, Some(&["variant".to_string()])).unwrap();
        assert_eq!(d.text_changes.len(), 1);
        assert!(d.holds(&"latency:up".parse().unwrap()));
    }
}
