//! CSV form of a [`MeasurementSet`]: header `pulse_id,y1,y2,xi1,xi2,z,value`,
//! one row per sample. Profiles are not stored; the reader asks the caller
//! to rebuild each pulse from its origin and direction.

use std::io::{BufRead, Write};

use super::measure::{MeasurementSet, ZGrid};
use super::pulse::PulseSpec;
use crate::error::{Error, Result};
use crate::mesh_fem::Point;

pub const HEADER: &str = "pulse_id,y1,y2,xi1,xi2,z,value";

pub fn write_measurements<W: Write>(set: &MeasurementSet, mut w: W) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    for (p, (pulse, curve)) in set.pulses.iter().zip(&set.curves).enumerate() {
        let [y1, y2] = pulse.origin;
        let [x1, x2] = pulse.direction;
        for (k, v) in curve.iter().enumerate() {
            writeln!(w, "{p},{y1:?},{y2:?},{x1:?},{x2:?},{:?},{v:?}", set.grid.z(k))?;
        }
    }
    Ok(())
}

pub fn measurements_to_string(set: &MeasurementSet) -> String {
    let mut buf = Vec::new();
    write_measurements(set, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

struct Row {
    pulse: usize,
    origin: Point,
    direction: [f64; 2],
    z: f64,
    value: f64,
}

fn parse_row(line: &str, lineno: usize) -> Result<Row> {
    let err = |message: String| Error::Parse { line: lineno, message };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(err(format!("expected 7 fields, found {}", fields.len())));
    }
    let num = |i: usize| -> Result<f64> {
        fields[i].parse::<f64>().map_err(|e| err(format!("field {}: {e}", i + 1)))
    };
    let pulse = fields[0].parse::<usize>().map_err(|e| err(format!("pulse_id: {e}")))?;
    Ok(Row {
        pulse,
        origin: [num(1)?, num(2)?],
        direction: [num(3)?, num(4)?],
        z: num(5)?,
        value: num(6)?,
    })
}

/// Reads a measurement CSV. Pulse ids must run `0, 1, …` in order, every
/// pulse must have the same uniform grid `z_k = (k+1)Δz`.
pub fn read_measurements<R: BufRead>(
    reader: R,
    mut make_pulse: impl FnMut(Point, [f64; 2]) -> Result<PulseSpec>,
) -> Result<MeasurementSet> {
    let mut lines = reader.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).transpose()?;
    if header.as_deref().map(str::trim) != Some(HEADER) {
        return Err(Error::Parse { line: 1, message: format!("expected header `{HEADER}`") });
    }
    let mut pulses: Vec<PulseSpec> = Vec::new();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(&line, lineno)?;
        if row.pulse == pulses.len() {
            pulses.push(make_pulse(row.origin, row.direction)?);
            curves.push(Vec::new());
        } else if row.pulse + 1 != pulses.len() {
            return Err(Error::Parse { line: lineno, message: format!("unexpected pulse_id {}", row.pulse) });
        }
        let curve = curves.last_mut().expect("pulse pushed");
        if row.pulse == 0 {
            zs.push(row.z);
        } else if zs.get(curve.len()).is_none_or(|&z| z != row.z) {
            return Err(Error::Parse { line: lineno, message: "z grid differs between pulses".into() });
        }
        curve.push(row.value);
    }
    if zs.is_empty() {
        return Err(Error::Parse { line: 1, message: "no samples".into() });
    }
    let dz = zs[0];
    for (k, &z) in zs.iter().enumerate() {
        if (z - (k + 1) as f64 * dz).abs() > 1e-9 * z.abs().max(dz) {
            return Err(Error::validation(format!("z sample {k} is off the uniform grid")));
        }
    }
    MeasurementSet::new(pulses, ZGrid::new(dz, zs.len())?, curves, 0.0)
}
