//! Per-lap race trace export.

use std::io::{Read, Write};

use super::state::LapRecord;
use crate::error::Result;

pub const TRACE_HEADER: [&str; 9] = [
    "lap",
    "car",
    "position",
    "compound",
    "tyre_age",
    "lap_time",
    "cumulative_time",
    "sc_status",
    "action",
];

/// Writes records as CSV with the columns in [`TRACE_HEADER`].
pub fn write_trace<W: Write>(out: W, records: &[LapRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.lap.to_string(),
            r.car.to_string(),
            r.position.to_string(),
            r.compound.to_string(),
            r.tyre_age.to_string(),
            format!("{}", r.lap_time),
            format!("{}", r.cumulative_time),
            r.sc_status.to_string(),
            r.action.code().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| crate::error::Error::io("<trace>", e))?;
    Ok(())
}

pub fn trace_to_string(records: &[LapRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<LapRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let field = |i: usize| row.get(i).unwrap_or("").trim().to_string();
        let bad = |what: &str| crate::error::Error::Format(format!("bad trace {what}: {:?}", row));
        let compound = match field(3).as_str() {
            "Soft" => crate::sim::Compound::Soft,
            "Medium" => crate::sim::Compound::Medium,
            "Hard" => crate::sim::Compound::Hard,
            _ => return Err(bad("compound")),
        };
        let sc_status = match field(7).as_str() {
            "Full" => crate::sim::SafetyCar::Full,
            "Virtual" => crate::sim::SafetyCar::Virtual,
            "None" => crate::sim::SafetyCar::None,
            _ => return Err(bad("sc_status")),
        };
        out.push(LapRecord {
            lap: field(0).parse().map_err(|_| bad("lap"))?,
            car: field(1).parse().map_err(|_| bad("car"))?,
            position: field(2).parse().map_err(|_| bad("position"))?,
            compound,
            tyre_age: field(4).parse().map_err(|_| bad("tyre_age"))?,
            lap_time: field(5).parse().map_err(|_| bad("lap_time"))?,
            cumulative_time: field(6).parse().map_err(|_| bad("cumulative_time"))?,
            sc_status,
            action: field(8).parse().map_err(|_| bad("action"))?,
        });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Format(format!("csv: {e}"))
}
