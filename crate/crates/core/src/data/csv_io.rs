use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Activity, LabeledRecording};
use crate::error::{Error, Result};
use crate::signal::{RawSeries, CHANNELS};

pub const CSV_HEADER: &str = "t,ax,ay,az,gx,gy,gz,activity,subject,session";

/// Loads recordings from a dataset CSV file.
pub fn load_csv(path: impl AsRef<Path>, sample_rate_hz: f64) -> Result<Vec<LabeledRecording>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, sample_rate_hz)
}

struct Group {
    activity: Activity,
    subject: String,
    session: u32,
    last_t: f64,
    frames: Vec<[f64; CHANNELS]>,
}

/// Parses dataset CSV. Each contiguous run of rows sharing
/// `(subject, activity, session)` becomes one recording.
pub fn read_csv(reader: impl Read, sample_rate_hz: f64) -> Result<Vec<LabeledRecording>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => {
            let header = header.map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?;
            let joined = header.iter().collect::<Vec<_>>().join(",");
            if joined != CSV_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `{CSV_HEADER}`, found `{joined}`"),
                });
            }
        }
    }

    let mut out = Vec::new();
    let mut current: Option<Group> = None;
    let finish = |g: Group, out: &mut Vec<LabeledRecording>| -> Result<()> {
        let series = RawSeries::from_frames(&g.frames, sample_rate_hz)?;
        out.push(LabeledRecording {
            id: out.len(),
            series,
            activity: g.activity,
            subject_id: g.subject,
            session: g.session,
        });
        Ok(())
    };

    for record in records {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 10 {
            return Err(Error::Parse {
                line,
                message: format!("expected 10 fields, found {}", record.len()),
            });
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            let field = &record[i];
            field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column `{name}`: `{field}` is not a finite number"),
                })
        };
        let t = num(0, "t")?;
        let names = ["ax", "ay", "az", "gx", "gy", "gz"];
        let mut values = [0.0; CHANNELS];
        for (c, v) in values.iter_mut().enumerate() {
            *v = num(c + 1, names[c])?;
        }
        let activity: Activity = record[7].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("column `activity`: unknown code `{}`", &record[7]),
        })?;
        let subject = record[8].trim().to_string();
        let session: u32 = record[9].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("column `session`: `{}` is not an integer", &record[9]),
        })?;

        let same = current.as_ref().is_some_and(|g| {
            g.activity == activity && g.subject == subject && g.session == session
        });
        if same {
            let g = current.as_mut().expect("group exists");
            if t <= g.last_t {
                return Err(Error::Validation {
                    line,
                    message: format!("timestamp {t} does not increase (previous {})", g.last_t),
                });
            }
            g.last_t = t;
            g.frames.push(values);
        } else {
            if let Some(g) = current.take() {
                finish(g, &mut out)?;
            }
            current = Some(Group {
                activity,
                subject,
                session,
                last_t: t,
                frames: vec![values],
            });
        }
    }
    if let Some(g) = current.take() {
        finish(g, &mut out)?;
    }
    Ok(out)
}

/// Writes recordings in dataset CSV form. Timestamps restart at 0 for every
/// recording; sensor values are written with four decimals.
pub fn write_csv(mut writer: impl Write, recordings: &[LabeledRecording]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(&mut writer);
    w.write_record(CSV_HEADER.split(','))?;
    for rec in recordings {
        let fs = rec.series.sample_rate_hz();
        let session = rec.session.to_string();
        for (i, f) in rec.series.frames().enumerate() {
            let t = i as f64 / fs;
            let mut row: Vec<String> = Vec::with_capacity(10);
            row.push(format!("{t}"));
            row.extend(f.iter().map(|v| format!("{v:.4}")));
            row.push(rec.activity.code().to_string());
            row.push(rec.subject_id.clone());
            row.push(session.clone());
            w.write_record(&row)?;
        }
    }
    w.flush()
}
