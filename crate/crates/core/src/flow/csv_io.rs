use std::io::{Read, Write};

use thiserror::Error;

use super::DisplacementField;
use crate::model::{Point, Vec2};

pub const FIELD_HEADER: [&str; 7] = ["frame_pair", "point_id", "x", "y", "dx", "dy", "valid"];

#[derive(Debug, Error)]
pub enum FieldCsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {detail}")]
    Schema { line: u64, detail: String },
}

/// Writes `# comment` lines, the header, then one row per point. Floats use the
/// shortest representation that parses back to the same bits.
pub fn write_field_csv<W: Write>(
    mut out: W,
    field: &DisplacementField,
    comments: &[String],
) -> Result<(), FieldCsvError> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIELD_HEADER)?;
    let pair = format!("{}-{}", field.frame_pair.0, field.frame_pair.1);
    for (j, ((p, d), ok)) in field
        .points
        .iter()
        .zip(&field.displacements)
        .zip(&field.valid)
        .enumerate()
    {
        w.write_record([
            pair.clone(),
            j.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            d.x.to_string(),
            d.y.to_string(),
            if *ok { "1".into() } else { "0".into() },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_csv<R: Read>(input: R) -> Result<DisplacementField, FieldCsvError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(FIELD_HEADER.iter().copied()) {
        return Err(FieldCsvError::Schema {
            line: 1,
            detail: format!("expected header {}", FIELD_HEADER.join(",")),
        });
    }
    let mut pair = None;
    let mut points = Vec::new();
    let mut displacements = Vec::new();
    let mut valid = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |detail: String| FieldCsvError::Schema { line, detail };
        let this_pair = parse_pair(&rec[0]).ok_or_else(|| bad(format!("bad frame_pair `{}`", &rec[0])))?;
        if *pair.get_or_insert(this_pair) != this_pair {
            return Err(bad("frame_pair changes within one file".into()));
        }
        let id: usize = rec[1].parse().map_err(|_| bad(format!("bad point_id `{}`", &rec[1])))?;
        if id != points.len() {
            return Err(bad(format!("point_id {id} out of order")));
        }
        let num = |i: usize| -> Result<f64, FieldCsvError> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad {} `{}`", FIELD_HEADER[i], &rec[i])))
        };
        points.push(Point::new(num(2)?, num(3)?));
        displacements.push(Vec2::new(num(4)?, num(5)?));
        valid.push(match &rec[6] {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("bad valid flag `{other}`"))),
        });
    }
    let frame_pair = pair.ok_or(FieldCsvError::Schema {
        line: 1,
        detail: "no rows".into(),
    })?;
    DisplacementField::new(frame_pair, points, displacements, valid).map_err(|e| {
        FieldCsvError::Schema {
            line: 0,
            detail: e.to_string(),
        }
    })
}

fn parse_pair(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once('-')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}
