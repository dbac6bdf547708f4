use std::path::Path;

use super::{CellScores, ResultRow, ResultTable};
use crate::error::{Error, Result};
use crate::image::{histogram, Image, ImageStack, HISTOGRAM_BINS};

pub const CSV_HEADER: [&str; 14] = [
    "scene",
    "repetition",
    "calibrator",
    "reference",
    "status",
    "psnr_before",
    "psnr_after",
    "perceptual_before",
    "perceptual_after",
    "hist_spread_before",
    "hist_spread_after",
    "delta_psnr",
    "delta_perceptual",
    "error",
];

fn fixed3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes one row per cell, numbers with three decimals. Failed cells keep
/// their key, leave the numeric fields empty and carry the error message.
pub fn emit_csv(table: &ResultTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(CSV_HEADER)?;
    for row in &table.rows {
        let mut record = vec![
            row.scene.clone(),
            row.repetition.to_string(),
            row.calibrator.clone(),
            row.reference.clone(),
        ];
        match &row.outcome {
            Ok(s) => {
                record.push("ok".into());
                record.extend(s.values().iter().map(|&v| fixed3(v)));
                record.push(String::new());
            }
            Err(e) => {
                record.push("failed".into());
                record.extend(std::iter::repeat_n(String::new(), 8));
                record.push(e.clone());
            }
        }
        w.write_record(&record)?;
    }
    finish(w, path)
}

/// Reads a file written by [`emit_csv`].
pub fn parse_csv(path: impl AsRef<Path>) -> Result<ResultTable> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("{}: unexpected header", path.display())));
    }
    let bad = |what: &str| Error::Config(format!("{}: {what}", path.display()));
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record?;
        let repetition = r[1].parse().map_err(|_| bad("bad repetition"))?;
        let outcome = match &r[4] {
            "ok" => {
                let mut v = [0.0; 8];
                for (k, slot) in v.iter_mut().enumerate() {
                    *slot = r[5 + k].parse().map_err(|_| bad("bad number"))?;
                }
                Ok(CellScores {
                    psnr_before: v[0],
                    psnr_after: v[1],
                    perceptual_before: v[2],
                    perceptual_after: v[3],
                    hist_spread_before: v[4],
                    hist_spread_after: v[5],
                    delta_psnr: v[6],
                    delta_perceptual: v[7],
                })
            }
            "failed" => Err(r[13].to_string()),
            _ => return Err(bad("bad status")),
        };
        rows.push(ResultRow {
            scene: r[0].to_string(),
            repetition,
            calibrator: r[2].to_string(),
            reference: r[3].to_string(),
            outcome,
        });
    }
    Ok(ResultTable { rows })
}

/// Means over the successful repetitions of one (scene, reference,
/// calibrator) group; `scene` is `pooled` for the all-scene mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scene: String,
    pub reference: String,
    pub calibrator: String,
    pub runs: usize,
    pub failures: usize,
    pub mean: [f64; 8],
}

pub fn summarize(table: &ResultTable) -> Vec<SummaryRow> {
    fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
        let mut out: Vec<&str> = Vec::new();
        for s in it {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }
    let scenes = first_seen(table.rows.iter().map(|r| r.scene.as_str()));
    let refs = first_seen(table.rows.iter().map(|r| r.reference.as_str()));
    let cals = first_seen(table.rows.iter().map(|r| r.calibrator.as_str()));
    let mut out = Vec::new();
    let groups = scenes.iter().map(|s| Some(*s)).chain([None]);
    for scene in groups {
        for &reference in &refs {
            for &calibrator in &cals {
                let rows: Vec<&ResultRow> = table
                    .rows
                    .iter()
                    .filter(|r| {
                        scene.is_none_or(|s| r.scene == s)
                            && r.reference == reference
                            && r.calibrator == calibrator
                    })
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                let ok: Vec<[f64; 8]> = rows.iter().filter_map(|r| r.scores()).map(|s| s.values()).collect();
                let mut mean = [f64::NAN; 8];
                if !ok.is_empty() {
                    for (k, m) in mean.iter_mut().enumerate() {
                        *m = ok.iter().map(|v| v[k]).sum::<f64>() / ok.len() as f64;
                    }
                }
                out.push(SummaryRow {
                    scene: scene.unwrap_or("pooled").to_string(),
                    reference: reference.to_string(),
                    calibrator: calibrator.to_string(),
                    runs: ok.len(),
                    failures: rows.len() - ok.len(),
                    mean,
                });
            }
        }
    }
    out
}

pub fn emit_summary(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let mut header = vec!["scene", "reference", "calibrator", "runs", "failures"];
    header.extend(&CSV_HEADER[5..13]);
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.scene.clone(),
            r.reference.clone(),
            r.calibrator.clone(),
            r.runs.to_string(),
            r.failures.to_string(),
        ];
        record.extend(r.mean.iter().map(|&v| if v.is_nan() { String::new() } else { fixed3(v) }));
        w.write_record(&record)?;
    }
    finish(w, path)
}

fn channel_names(channels: usize) -> &'static [&'static str] {
    if channels == 1 {
        &["l"]
    } else {
        &["r", "g", "b"]
    }
}

/// Bin counts, 256 rows: one column per camera and channel, then the
/// reference's channels.
pub fn emit_histograms(stack: &ImageStack, reference: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h, c) = stack.shape();
    if reference.shape() != (w, h, c) {
        return Err(Error::ShapeMismatch(format!(
            "reference {:?} vs stack {:?}",
            reference.shape(),
            (w, h, c)
        )));
    }
    let names = channel_names(c);
    let mut hists: Vec<_> = stack.images().iter().map(histogram).collect();
    hists.push(histogram(reference));
    let mut header: Vec<String> = Vec::with_capacity(hists.len() * c);
    for n in 0..stack.len() {
        header.extend(names.iter().map(|ch| format!("cam{n:02}_{ch}")));
    }
    header.extend(names.iter().map(|ch| format!("reference_{ch}")));
    let mut wr = writer(path)?;
    wr.write_record(&header)?;
    for k in 0..HISTOGRAM_BINS {
        let row = hists
            .iter()
            .flat_map(|hist| (0..c).map(move |ch| hist.channel(ch)[k].to_string()));
        wr.write_record(row)?;
    }
    finish(wr, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scene: &str, rep: usize, reference: &str, v: f64) -> ResultRow {
        ResultRow {
            scene: scene.into(),
            repetition: rep,
            calibrator: "linear".into(),
            reference: reference.into(),
            outcome: Ok(CellScores {
                psnr_before: 20.0 + v,
                psnr_after: 25.123456 + v,
                perceptual_before: 10.0,
                perceptual_after: 4.5,
                hist_spread_before: 0.75,
                hist_spread_after: 0.125,
                delta_psnr: 5.123456,
                delta_perceptual: -5.5,
            }),
        }
    }

    fn lines(path: &Path) -> Vec<String> {
        std::fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_csv(&ResultTable::default(), &path).unwrap();
        assert_eq!(lines(&path), vec![CSV_HEADER.join(",")]);
    }

    #[test]
    fn one_row_has_eight_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let table = ResultTable {
            rows: vec![row("a", 0, "median", 0.0)],
        };
        emit_csv(&table, &path).unwrap();
        let l = lines(&path);
        assert_eq!(l.len(), 2);
        let fields: Vec<&str> = l[1].split(',').collect();
        let numeric = fields.iter().filter(|f| f.parse::<f64>().is_ok()).count();
        // repetition is the ninth
        assert_eq!(numeric, 9);
        assert_eq!(fields[6], "25.123");
        assert!(fields[5..13].iter().all(|f| f.split('.').nth(1).map(str::len) == Some(3)));
    }

    #[test]
    fn reparse_reproduces_three_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("r.csv");
        let mut table = ResultTable {
            rows: (0..6).map(|i| row("s, \"quoted\"", i, "random", i as f64 * 0.3337)).collect(),
        };
        table.rows.push(ResultRow {
            outcome: Err("singular fit, camera 3".into()),
            ..row("b", 0, "mean", 0.0)
        });
        emit_csv(&table, &path).unwrap();
        let back = parse_csv(&path).unwrap();
        assert_eq!(back.rows.len(), table.rows.len());
        for (a, b) in table.rows.iter().zip(&back.rows) {
            assert_eq!((&a.scene, a.repetition, &a.calibrator, &a.reference), (&b.scene, b.repetition, &b.calibrator, &b.reference));
            match (&a.outcome, &b.outcome) {
                (Ok(x), Ok(y)) => {
                    for (u, v) in x.values().iter().zip(y.values()) {
                        assert_eq!(fixed3(*u), fixed3(v));
                        assert!((u - v).abs() <= 0.0005 + 1e-12);
                    }
                }
                (Err(x), Err(y)) => assert_eq!(x, y),
                _ => panic!("status changed"),
            }
        }
    }

    #[test]
    fn summary_pools_scenes() {
        let table = ResultTable {
            rows: vec![
                row("a", 0, "median", 0.0),
                row("a", 1, "median", 2.0),
                row("b", 0, "median", 4.0),
                ResultRow {
                    outcome: Err("x".into()),
                    ..row("b", 1, "median", 0.0)
                },
            ],
        };
        let s = summarize(&table);
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].scene.as_str(), s[0].runs, s[0].mean[0]), ("a", 2, 21.0));
        assert_eq!((s[1].scene.as_str(), s[1].runs, s[1].failures), ("b", 1, 1));
        assert_eq!((s[2].scene.as_str(), s[2].runs, s[2].mean[0]), ("pooled", 3, 22.0));
    }

    #[test]
    fn histogram_file_shape_and_conservation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let img = Image::from_fn(7, 5, 3, |x, y, c| ((x * 31 + y * 17 + c * 5) % 256) as f64 / 255.0).unwrap();
        let stack = ImageStack::new("s", vec![img.clone(); 4]).unwrap();
        emit_histograms(&stack, &img, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        assert_eq!(reader.headers().unwrap().len(), 4 * 3 + 3);
        let rows: Vec<Vec<u64>> = reader
            .records()
            .map(|r| r.unwrap().iter().map(|f| f.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 256);
        for col in 0..15 {
            assert_eq!(rows.iter().map(|r| r[col]).sum::<u64>(), 35);
            // identical cameras give identical columns
            assert!(rows.iter().all(|r| r[col] == r[col % 3]));
        }

        let gray = Image::filled(3, 3, 1, 0.5).unwrap();
        let stack = ImageStack::new("g", vec![gray.clone(); 2]).unwrap();
        emit_histograms(&stack, &gray, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), ["cam00_l", "cam01_l", "reference_l"]);
    }
}
