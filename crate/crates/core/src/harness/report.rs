//! CSV emitters. Every writer takes any `io::Write`.

use std::io::Write;

use super::{GeneralisationMatrix, ResultsTable};
use crate::error::{Error, Result};

fn w<W: Write>(out: W) -> csv::Writer<W> {
    csv::Writer::from_writer(out)
}

fn err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_races<W: Write>(table: &ResultsTable, out: W) -> Result<()> {
    let mut wr = w(out);
    wr.write_record([
        "model", "track", "race", "seed", "finish", "failed", "pits", "reward", "strategy",
    ])
    .map_err(err)?;
    for r in &table.races {
        wr.write_record([
            r.model.clone(),
            r.track.to_string(),
            r.race.to_string(),
            r.seed.to_string(),
            r.finish.to_string(),
            r.failed.to_string(),
            r.pits.to_string(),
            r.reward.to_string(),
            r.strategy.clone(),
        ])
        .map_err(err)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_aggregate<W: Write>(table: &ResultsTable, out: W) -> Result<()> {
    let mut wr = w(out);
    wr.write_record([
        "model",
        "track",
        "seen",
        "n",
        "mean_finish",
        "std_finish",
        "median_finish",
        "failure_rate",
        "mean_pits",
        "mean_reward",
    ])
    .map_err(err)?;
    for r in &table.rows {
        let m = &r.metrics;
        wr.write_record([
            r.model.clone(),
            r.track.to_string(),
            r.seen.map(|s| s.to_string()).unwrap_or_default(),
            m.n.to_string(),
            m.mean_finish.to_string(),
            m.std_finish.to_string(),
            m.median_finish.to_string(),
            m.failure_rate.to_string(),
            m.mean_pits.to_string(),
            m.mean_reward.to_string(),
        ])
        .map_err(err)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))
}

/// Finish-position histogram, one row per (model, track, position).
pub fn write_histogram<W: Write>(table: &ResultsTable, out: W) -> Result<()> {
    let mut wr = w(out);
    wr.write_record(["model", "track", "position", "count"])
        .map_err(err)?;
    for r in &table.rows {
        for (p, c) in r.metrics.distribution.iter().enumerate() {
            wr.write_record([
                r.model.clone(),
                r.track.to_string(),
                (p + 1).to_string(),
                c.to_string(),
            ])
            .map_err(err)?;
        }
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_matrix<W: Write>(m: &GeneralisationMatrix, out: W) -> Result<()> {
    let mut wr = w(out);
    let mut header = vec!["model".to_string()];
    header.extend(m.tracks.iter().map(|t| t.to_string()));
    header.push("seen_avg".into());
    header.push("unseen_avg".into());
    wr.write_record(&header).map_err(err)?;
    for r in &m.rows {
        let mut row = vec![r.model.clone()];
        row.extend(r.means.iter().map(|v| v.to_string()));
        row.push(opt(r.seen_avg));
        row.push(opt(r.unseen_avg));
        wr.write_record(&row).map_err(err)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))
}
