//! Loading yearly CSV panels and the variable dictionary, merging them into a
//! [`FeatureTable`], and dropping sparse features and rows.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io;
use crate::table::{Category, Dtype, FeatureMeta, FeatureTable, RowKey};

pub const DEFAULT_ID_COLUMN: &str = "UNITID";
pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.70;

/// Cells treated as missing regardless of column type.
pub const SENTINELS: [&str; 2] = ["PrivacySuppressed", "NULL"];

pub fn is_sentinel(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || SENTINELS.contains(&c)
}

/// One yearly file, unparsed.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub year: i32,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>, year: i32) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != header.len() {
                return Err(Error::RaggedRow {
                    path: "<memory>".into(),
                    row: i,
                    expected: header.len(),
                    found: r.len(),
                });
            }
        }
        Ok(RawTable { header, rows, year })
    }
}

/// Reads a `name,category[,dtype]` dictionary.
pub fn load_dictionary(path: &Path) -> Result<Vec<FeatureMeta>> {
    let mut rdr = io::csv_reader(path)?;
    let mut metas = Vec::new();
    let mut seen = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io::csv_err(path, e))?;
        if rec.len() < 2 {
            return Err(Error::Dictionary {
                row,
                message: format!("expected at least 2 columns, found {}", rec.len()),
            });
        }
        let name = rec[0].trim().to_string();
        if name.is_empty() {
            return Err(Error::Dictionary {
                row,
                message: "empty variable name".into(),
            });
        }
        let category: Category = rec[1]
            .parse()
            .map_err(|message| Error::Dictionary { row, message })?;
        let dtype: Dtype = rec
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|message| Error::Dictionary { row, message })?;
        if !seen.insert(name.clone()) {
            return Err(Error::Duplicate(name));
        }
        metas.push(match dtype {
            Dtype::Numeric => FeatureMeta::numeric(name, category),
            Dtype::Categorical => FeatureMeta::categorical(name, category, Vec::new()),
        });
    }
    Ok(metas)
}

/// Reads a CSV file verbatim. Ragged rows are rejected with their 0-based
/// data-row index.
pub fn load_csv(path: &Path, year: i32) -> Result<RawTable> {
    let mut rdr = io::csv_reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| io::csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io::csv_err(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                path: path.into(),
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows, year })
}

/// Loads several yearly files concurrently, preserving input order.
pub fn load_many(inputs: &[(i32, std::path::PathBuf)]) -> Result<Vec<RawTable>> {
    inputs
        .par_iter()
        .map(|(year, path)| load_csv(path, *year))
        .collect()
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Stacks yearly tables into one institution-year panel restricted to the
/// dictionary's variables.
///
/// Tables are processed in ascending year order, so the result does not
/// depend on the order of `tables`. Numeric columns whose every non-sentinel
/// cell fails to parse are text and get dropped; isolated unparseable cells
/// become missing.
pub fn merge_years(
    tables: &[RawTable],
    dictionary: &[FeatureMeta],
    id_column: &str,
) -> Result<FeatureTable> {
    let mut order: Vec<&RawTable> = tables.iter().collect();
    order.sort_by_key(|t| t.year);

    let mut id_idx = Vec::with_capacity(order.len());
    let mut lookups: Vec<HashMap<&str, usize>> = Vec::with_capacity(order.len());
    for t in &order {
        let idx = t.header.iter().position(|h| h == id_column).ok_or_else(|| {
            Error::Schema(format!(
                "table for year {} has no `{id_column}` column",
                t.year
            ))
        })?;
        id_idx.push(idx);
        lookups.push(t.header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect());
    }

    let row_keys: Vec<RowKey> = order
        .iter()
        .zip(&id_idx)
        .flat_map(|(t, &idx)| t.rows.iter().map(move |r| RowKey::new(r[idx].trim(), t.year)))
        .collect();
    let n = row_keys.len();

    let mut metas = Vec::new();
    let mut columns: Vec<(Vec<f64>, Vec<bool>)> = Vec::new();
    for meta in dictionary {
        if meta.name == id_column {
            continue;
        }
        let sources: Vec<Option<usize>> = lookups
            .iter()
            .map(|l| l.get(meta.name.as_str()).copied())
            .collect();
        if sources.iter().all(Option::is_none) {
            continue;
        }
        let cells = order.iter().zip(&sources).flat_map(|(t, src)| {
            t.rows
                .iter()
                .map(move |r| src.map(|j| r[j].as_str()).unwrap_or(""))
        });

        let mut vals = Vec::with_capacity(n);
        let mut miss = Vec::with_capacity(n);
        match meta.dtype {
            Dtype::Numeric => {
                let mut present = 0usize;
                let mut parsed = 0usize;
                for cell in cells {
                    if is_sentinel(cell) {
                        vals.push(0.0);
                        miss.push(true);
                        continue;
                    }
                    present += 1;
                    match parse_number(cell) {
                        Some(v) => {
                            parsed += 1;
                            vals.push(v);
                            miss.push(false);
                        }
                        None => {
                            vals.push(0.0);
                            miss.push(true);
                        }
                    }
                }
                if present > 0 && parsed == 0 {
                    continue;
                }
                metas.push(meta.clone());
            }
            Dtype::Categorical => {
                let mut levels: Vec<String> = Vec::new();
                let mut codes: HashMap<String, usize> = HashMap::new();
                for cell in cells {
                    if is_sentinel(cell) {
                        vals.push(0.0);
                        miss.push(true);
                        continue;
                    }
                    let level = cell.trim();
                    let code = match codes.get(level) {
                        Some(&c) => c,
                        None => {
                            levels.push(level.to_string());
                            codes.insert(level.to_string(), levels.len() - 1);
                            levels.len() - 1
                        }
                    };
                    vals.push(code as f64);
                    miss.push(false);
                }
                metas.push(FeatureMeta::categorical(meta.name.clone(), meta.category, levels));
            }
        }
        columns.push((vals, miss));
    }

    if metas.is_empty() {
        return Err(Error::EmptySchema);
    }
    let p = metas.len();
    let values = DMatrix::from_fn(n, p, |i, j| columns[j].0[i]);
    let missing = DMatrix::from_fn(n, p, |i, j| columns[j].1[i]);
    FeatureTable::new(values, missing, metas, row_keys)
}

/// Drops features, then rows, whose missing fraction strictly exceeds
/// `threshold`, repeating until nothing else is dropped.
pub fn filter_missing(table: &FeatureTable, threshold: f64) -> Result<FeatureTable> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "missing threshold {threshold} outside [0, 1]"
        )));
    }
    let mask = table.missing();
    let mut rows: Vec<usize> = (0..table.n_rows()).collect();
    let mut cols: Vec<usize> = (0..table.n_cols()).collect();
    loop {
        if rows.is_empty() {
            return Err(Error::EmptyTable("every row was dropped".into()));
        }
        let n = rows.len() as f64;
        let kept_cols: Vec<usize> = cols
            .iter()
            .copied()
            .filter(|&j| rows.iter().filter(|&&i| mask[(i, j)]).count() as f64 / n <= threshold)
            .collect();
        if kept_cols.is_empty() {
            return Err(Error::EmptyTable("every feature was dropped".into()));
        }
        let p = kept_cols.len() as f64;
        let kept_rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| kept_cols.iter().filter(|&&j| mask[(i, j)]).count() as f64 / p <= threshold)
            .collect();
        let stable = kept_cols.len() == cols.len() && kept_rows.len() == rows.len();
        cols = kept_cols;
        rows = kept_rows;
        if stable {
            break;
        }
    }
    table.select_columns(&cols)?.select_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    fn raw(year: i32, header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable::new(
            header.iter().map(|s| s.to_string()).collect(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
            year,
        )
        .unwrap()
    }

    #[test]
    fn dictionary_counts_per_category() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("name,category\n");
        for i in 0..131 {
            text.push_str(&format!("RPY_{i},Repayment\n"));
        }
        for i in 0..170 {
            text.push_str(&format!("SCH_{i},school\n"));
        }
        let metas = load_dictionary(&write_tmp(&dir, "d.csv", &text)).unwrap();
        let count = |c| metas.iter().filter(|m| m.category == c).count();
        assert_eq!(count(Category::Repayment), 131);
        assert_eq!(count(Category::School), 170);
    }

    #[test]
    fn dictionary_edge_cases() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dictionary(&write_tmp(&dir, "a.csv", "name,category\n")).unwrap().is_empty());

        let metas = load_dictionary(&write_tmp(&dir, "b.csv", "name,category\nUGDS_BLACK,student\n")).unwrap();
        assert_eq!(metas, vec![FeatureMeta::numeric("UGDS_BLACK", Category::Student)]);

        let err = load_dictionary(&write_tmp(&dir, "c.csv", "name,category\nA,School\nB,Sports\n")).unwrap_err();
        assert!(matches!(err, Error::Dictionary { row: 1, .. }), "{err}");

        let err = load_dictionary(&write_tmp(&dir, "d.csv", "name,category\nA,School\nA,Cost\n")).unwrap_err();
        assert!(matches!(err, Error::Duplicate(ref n) if n == "A"));

        let metas = load_dictionary(&write_tmp(&dir, "e.csv", "name,category,dtype\nC,School,categorical\n")).unwrap();
        assert_eq!(metas[0].encoding, Some(vec![]));
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let t = load_csv(&write_tmp(&dir, "a.csv", "a,b,c,d\n1,2,3,4\n5,6,7,8\n9,10,11,12\n"), 2007).unwrap();
        assert_eq!(t.header.len(), 4);
        assert_eq!(t.rows.len(), 3);

        let err = load_csv(&write_tmp(&dir, "b.csv", "a,b,c,d\n1,2,3,4\n5,6,7\n"), 2007).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 1, found: 3, .. }), "{err}");

        assert!(matches!(load_csv(&dir.path().join("nope.csv"), 2007), Err(Error::Io { .. })));
    }

    #[test]
    fn csv_cells_match_raw_bytes() {
        // unquoted fixture, so splitting the raw text on ',' is an independent oracle
        let text = "UNITID,RPY_1YR_RT,NAME\n100,PrivacySuppressed,Alpha College\n200,0.52,NULL\n300,,Gamma U\n";
        let dir = tempfile::tempdir().unwrap();
        let t = load_csv(&write_tmp(&dir, "a.csv", text), 2010).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(t.header, header);
        for (row, line) in t.rows.iter().zip(lines) {
            assert_eq!(row, &line.split(',').collect::<Vec<_>>());
        }
        assert_eq!(t.rows[0][1], "PrivacySuppressed");
    }

    #[test]
    fn merge_stacks_years_and_flags_sentinels() {
        let dict = vec![
            FeatureMeta::numeric("X", Category::Cost),
            FeatureMeta::numeric("NAME", Category::School),
            FeatureMeta::categorical("CTRL", Category::School, vec![]),
        ];
        let a = raw(2008, &["UNITID", "X", "NAME", "CTRL", "EXTRA"], &[&["1", "PrivacySuppressed", "Alpha", "Public", "z"]]);
        let b = raw(2007, &["UNITID", "X", "NAME", "CTRL"], &[&["1", "2.5", "Alpha", "Private"]]);
        let t = merge_years(&[a, b], &dict, "UNITID").unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.row_keys(), &[RowKey::new("1", 2007), RowKey::new("1", 2008)]);
        // NAME is text: dropped; EXTRA is not in the dictionary
        assert_eq!(t.names(), vec!["X", "CTRL"]);
        assert!(t.missing()[(1, 0)]);
        assert_eq!(t.values()[(1, 0)], 0.0);
        assert_eq!(t.values()[(0, 0)], 2.5);
    }

    #[test]
    fn categorical_first_appearance_codes() {
        let dict = vec![FeatureMeta::categorical("CTRL", Category::School, vec![])];
        let t = merge_years(
            &[raw(2007, &["UNITID", "CTRL"], &[&["1", "Public"], &["2", "Private"], &["3", "Public"]])],
            &dict,
            "UNITID",
        )
        .unwrap();
        let codes: Vec<f64> = t.values().column(0).iter().copied().collect();
        assert_eq!(codes, vec![0.0, 1.0, 0.0]);
        assert_eq!(t.metas()[0].encoding.as_deref(), Some(&["Public".to_string(), "Private".to_string()][..]));
        assert_eq!(t.metas()[0].decode(1.0), Some("Private"));
    }

    #[test]
    fn merge_errors() {
        let dict = vec![FeatureMeta::numeric("X", Category::Cost)];
        let t = raw(2007, &["ID", "X"], &[&["1", "2"]]);
        assert!(matches!(merge_years(&[t], &dict, "UNITID"), Err(Error::Schema(_))));
        let t = raw(2007, &["UNITID", "Y"], &[&["1", "2"]]);
        assert!(matches!(merge_years(&[t], &dict, "UNITID"), Err(Error::EmptySchema)));
        let t = raw(2007, &["UNITID", "X"], &[&["1", "2"], &["1", "3"]]);
        assert!(merge_years(&[t], &dict, "UNITID").is_err());
    }

    fn masked(n: usize, p: usize, miss: &[(usize, usize)]) -> FeatureTable {
        let mut m = DMatrix::from_element(n, p, false);
        for &(i, j) in miss {
            m[(i, j)] = true;
        }
        let metas = (0..p).map(|j| FeatureMeta::numeric(format!("f{j}"), Category::Cost)).collect();
        let keys = (0..n).map(|i| RowKey::new(i.to_string(), 2010)).collect();
        FeatureTable::new(DMatrix::from_element(n, p, 1.0), m, metas, keys).unwrap()
    }

    #[test]
    fn missing_threshold_is_strict() {
        let t = masked(10, 2, &(0..8).map(|i| (i, 0)).collect::<Vec<_>>());
        assert_eq!(filter_missing(&t, 0.7).unwrap().names(), vec!["f1"]);
        let t = masked(10, 2, &(0..7).map(|i| (i, 0)).collect::<Vec<_>>());
        let f = filter_missing(&t, 0.7).unwrap();
        assert_eq!(f.names(), vec!["f0", "f1"]);
        assert_eq!(f.n_rows(), 10);
    }

    #[test]
    fn filter_matches_hand_enumeration() {
        // 6 rows x 5 features, threshold 0.5:
        // f0 misses 5/6 -> dropped; f1 misses exactly 3/6 -> kept.
        // row 2 misses f1, f3, f4 (3 of 4 survivors) -> dropped.
        let miss = [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (0, 1), (1, 1), (2, 1), (0, 2), (2, 3), (2, 4)];
        let t = masked(6, 5, &miss);
        let f = filter_missing(&t, 0.5).unwrap();

        // brute force: recompute fractions from the mask directly
        let frac_col = |j: usize, rows: &[usize]| rows.iter().filter(|&&i| miss.contains(&(i, j))).count() as f64 / rows.len() as f64;
        let all_rows: Vec<usize> = (0..6).collect();
        let cols: Vec<usize> = (0..5).filter(|&j| frac_col(j, &all_rows) <= 0.5).collect();
        let rows: Vec<usize> = (0..6)
            .filter(|&i| cols.iter().filter(|&&j| miss.contains(&(i, j))).count() as f64 / cols.len() as f64 <= 0.5)
            .collect();
        assert_eq!(cols, vec![1, 2, 3, 4]);
        assert_eq!(rows, vec![0, 1, 3, 4, 5]);
        assert_eq!(f.names(), cols.iter().map(|j| format!("f{j}")).collect::<Vec<_>>());
        assert_eq!(
            f.row_keys().iter().map(|k| k.id.parse::<usize>().unwrap()).collect::<Vec<_>>(),
            rows
        );
    }

    #[test]
    fn filter_errors() {
        let t = masked(2, 1, &[(0, 0), (1, 0)]);
        assert!(matches!(filter_missing(&t, 0.7), Err(Error::EmptyTable(_))));
        assert!(filter_missing(&t, 1.5).is_err());
    }
}
