//! Per-sample score CSV: `index,resolved_class,error,flagged,rank_<layer>...`.
//!
//! A sample that could not be scored keeps its row with an empty class,
//! `NaN` error, `false` flag and empty rank cells.

use std::io::{Read, Write};

use tubescreen::ScoreReport;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub index: usize,
    pub resolved_class: Option<usize>,
    pub error: f64,
    pub flagged: bool,
    pub ranks: Vec<usize>,
}

pub fn write_scores<W: Write>(reports: &[ScoreReport], layer_names: &[String], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "index".to_string(),
        "resolved_class".into(),
        "error".into(),
        "flagged".into(),
    ];
    header.extend(layer_names.iter().map(|n| format!("rank_{n}")));
    w.write_record(&header)?;
    for r in reports {
        let mut rec = vec![r.index.to_string()];
        match &r.outcome {
            Ok(s) => {
                rec.push(s.resolved_class().to_string());
                rec.push(s.error.to_string());
                rec.push(s.flagged.to_string());
                rec.extend(s.trajectory.ranks.iter().map(usize::to_string));
            }
            Err(_) => {
                rec.extend(["".to_string(), "NaN".into(), "false".into()]);
                rec.extend(layer_names.iter().map(|_| String::new()));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores<R: Read>(input: R) -> Result<(Vec<String>, Vec<ScoreRow>), String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let fixed = ["index", "resolved_class", "error", "flagged"];
    if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h != f) {
        return Err(format!("scores header must start with {}", fixed.join(",")));
    }
    let layers: Vec<String> = header
        .iter()
        .skip(fixed.len())
        .map(|h| h.strip_prefix("rank_").unwrap_or(h).to_string())
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let ctx = |what: &str, v: &str| format!("scores row {line}: bad {what} {v:?}");
        let index = rec[0].parse().map_err(|_| ctx("index", &rec[0]))?;
        let resolved_class = match &rec[1] {
            "" => None,
            v => Some(v.parse().map_err(|_| ctx("resolved_class", v))?),
        };
        let error: f64 = rec[2].parse().map_err(|_| ctx("error", &rec[2]))?;
        let flagged = rec[3].parse().map_err(|_| ctx("flagged", &rec[3]))?;
        let ranks = rec
            .iter()
            .skip(fixed.len())
            .filter(|v| !v.is_empty())
            .map(|v| v.parse().map_err(|_| ctx("rank", v)))
            .collect::<Result<Vec<usize>, _>>()?;
        rows.push(ScoreRow {
            index,
            resolved_class,
            error,
            flagged,
            ranks,
        });
    }
    Ok((layers, rows))
}
