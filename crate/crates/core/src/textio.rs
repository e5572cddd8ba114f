//! Line-oriented text formats for detector streams and detection events.
//!
//! ```text
//! H nx ny nt p_z p_loss seed baseline_mode baseline_seed
//! B t i j v        detector bit
//! L t i j          detector with no click
//! E K i j t [i,j,t ...]   detection event of kind K (P or D), with supercell members
//! F percolation    the trial was abandoned because loss spans the lattice
//! ```

use crate::error::{Error, Result};
use crate::errorsim::{Baseline, BaselineMode, DetectorFrame, ErrorModel};
use crate::lattice::{CellCoord, LatticeDims, LatticeKind};
use crate::syndrome::DetectionEvent;
use std::fmt::Write;

/// Everything needed to regenerate a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    pub dims: LatticeDims,
    pub model: ErrorModel,
    pub baseline: Baseline,
}

impl StreamHeader {
    pub fn line(&self) -> String {
        let d = &self.dims;
        format!(
            "H {} {} {} {} {} {} {} {}",
            d.nx,
            d.ny,
            d.nt,
            self.model.p_z,
            self.model.p_loss,
            self.model.seed,
            self.baseline.mode.name(),
            self.baseline.seed
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let bad = |reason: String| Error::MalformedRecord { line: lineno, reason };
        let tok: Vec<_> = line.split_whitespace().collect();
        if tok.len() != 9 || tok[0] != "H" {
            return Err(bad("expected header `H nx ny nt p_z p_loss seed mode baseline_seed`".into()));
        }
        let int = |s: &str| s.parse::<i32>().map_err(|e| bad(format!("{s}: {e}")));
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
        let uint = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("{s}: {e}")));
        let dims = LatticeDims::new(int(tok[1])?, int(tok[2])?, int(tok[3])?)?;
        let model = ErrorModel::new(float(tok[4])?, float(tok[5])?, uint(tok[6])?)?;
        let mode = BaselineMode::parse(tok[7]).ok_or_else(|| bad(format!("unknown baseline mode {}", tok[7])))?;
        Ok(Self { dims, model, baseline: Baseline { mode, seed: uint(tok[8])? } })
    }
}

/// Serialise a detector stream; frames are written in the order given.
pub fn format_measurements(header: &StreamHeader, frames: impl IntoIterator<Item = DetectorFrame>) -> String {
    let mut s = header.line();
    s.push('\n');
    for f in frames {
        for ((i, j), code) in f.entries() {
            match code {
                0 | 1 => writeln!(s, "B {} {i} {j} {code}", f.t),
                _ => writeln!(s, "L {} {i} {j}", f.t),
            }
            .unwrap();
        }
    }
    s
}

fn parse_ints<const N: usize>(tok: &[&str], lineno: usize) -> Result<[i32; N]> {
    let mut out = [0; N];
    if tok.len() != N {
        return Err(Error::MalformedRecord { line: lineno, reason: format!("expected {N} fields, got {}", tok.len()) });
    }
    for (o, t) in out.iter_mut().zip(tok) {
        *o = t.parse().map_err(|e| Error::MalformedRecord { line: lineno, reason: format!("{t}: {e}") })?;
    }
    Ok(out)
}

/// Parse a detector stream back into frames.
pub fn parse_measurements(text: &str) -> Result<(StreamHeader, Vec<DetectorFrame>)> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (n0, first) = lines.next().ok_or(Error::MalformedRecord { line: 1, reason: "empty stream".into() })?;
    let header = StreamHeader::parse(first, n0)?;
    let dims = header.dims;
    let mut frames: Vec<DetectorFrame> = (0..=2 * dims.nt).map(|t| DetectorFrame::empty(&dims, t)).collect();
    for (n, line) in lines {
        let tok: Vec<_> = line.split_whitespace().collect();
        let bad = |reason: &str| Error::MalformedRecord { line: n, reason: reason.into() };
        let (code, [t, i, j]) = match tok[0] {
            "B" => {
                let [t, i, j, v] = parse_ints::<4>(&tok[1..], n)?;
                if v != 0 && v != 1 {
                    return Err(bad("bit must be 0 or 1"));
                }
                (v as u8, [t, i, j])
            }
            "L" => (2, parse_ints::<3>(&tok[1..], n)?),
            _ => return Err(bad("unknown record type")),
        };
        let site = crate::lattice::QubitSite::new(i, j, t);
        if !dims.contains_site(&site) {
            return Err(bad("address is not a qubit site"));
        }
        frames[t as usize].set_code(i, j, code);
    }
    for f in &frames {
        let expected = dims.sheet_sites(f.t).count();
        if f.entries().count() != expected {
            return Err(Error::MalformedRecord { line: 0, reason: format!("frame {} is incomplete", f.t) });
        }
    }
    Ok((header, frames))
}

/// Outcome of layer-1 processing for one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventRecord {
    Events(Vec<DetectionEvent>),
    Percolation,
}

pub fn format_events(header: &StreamHeader, record: &EventRecord) -> String {
    let mut s = header.line();
    s.push('\n');
    match record {
        EventRecord::Percolation => s.push_str("F percolation\n"),
        EventRecord::Events(evs) => {
            for e in evs {
                let c = e.cell;
                write!(s, "E {} {} {} {}", c.kind.tag(), c.i, c.j, c.t).unwrap();
                for m in e.supercell_members.iter().flatten() {
                    write!(s, " {},{},{}", m.i, m.j, m.t).unwrap();
                }
                s.push('\n');
            }
        }
    }
    s
}

pub fn parse_events(text: &str) -> Result<(StreamHeader, EventRecord)> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (n0, first) = lines.next().ok_or(Error::MalformedRecord { line: 1, reason: "empty event file".into() })?;
    let header = StreamHeader::parse(first, n0)?;
    let mut events = Vec::new();
    for (n, line) in lines {
        let tok: Vec<_> = line.split_whitespace().collect();
        let bad = |reason: String| Error::MalformedRecord { line: n, reason };
        match tok[0] {
            "F" if tok.get(1) == Some(&"percolation") => return Ok((header, EventRecord::Percolation)),
            "E" if tok.len() >= 5 => {
                let kind = LatticeKind::from_tag(tok[1]).ok_or_else(|| bad(format!("unknown kind {}", tok[1])))?;
                let [i, j, t] = parse_ints::<3>(&tok[2..5], n)?;
                let cell = CellCoord::new(kind, i, j, t);
                if !header.dims.contains_cell(&cell) {
                    return Err(bad(format!("{cell} outside lattice")));
                }
                let members = if tok.len() > 5 {
                    let mut m = Vec::new();
                    for t in &tok[5..] {
                        let parts: Vec<_> = t.split(',').collect();
                        m.push(CellCoord::with_index(kind, parse_ints::<3>(&parts, n)?));
                    }
                    Some(m)
                } else {
                    None
                };
                events.push(DetectionEvent { cell, supercell_members: members });
            }
            _ => return Err(bad("unknown record".into())),
        }
    }
    Ok((header, EventRecord::Events(events)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::errorsim::{measurement_stream, sample_errors};
    use crate::syndrome::events_from_errors;

    fn header(seed: u64) -> StreamHeader {
        StreamHeader {
            dims: LatticeDims::new(4, 3, 5).unwrap(),
            model: ErrorModel::new(0.02, 0.01, seed).unwrap(),
            baseline: Baseline::random(seed ^ 7),
        }
    }

    #[test]
    fn measurement_round_trip_is_exact() {
        for seed in 0..5 {
            let h = header(seed);
            let e = sample_errors(&h.dims, &h.model).unwrap();
            let frames: Vec<_> = measurement_stream(&h.dims, &e, h.baseline).collect();
            let text = format_measurements(&h, frames.clone());
            let (h2, f2) = parse_measurements(&text).unwrap();
            assert_eq!(h2, h);
            assert_eq!(f2, frames);
            assert_eq!(format_measurements(&h2, f2), text);
        }
    }

    #[test]
    fn event_round_trip() {
        let h = header(3);
        let e = sample_errors(&h.dims, &ErrorModel::new(0.05, 0.03, 1).unwrap()).unwrap();
        let rec = match events_from_errors(&h.dims, &e) {
            Ok(v) => EventRecord::Events(v),
            Err(_) => EventRecord::Percolation,
        };
        let text = format_events(&h, &rec);
        assert_eq!(parse_events(&text).unwrap(), (h, rec));
        let perc = format_events(&h, &EventRecord::Percolation);
        assert_eq!(parse_events(&perc).unwrap().1, EventRecord::Percolation);
    }

    #[test]
    fn malformed_records_report_line() {
        let h = header(1).line();
        let err = parse_events(&format!("{h}\nE X 1 1 1\n")).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 2, .. }));
        let err = parse_measurements(&format!("{h}\nB 0 1 1 7\n")).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 2, .. }));
        assert!(parse_measurements(&format!("{h}\n")).is_err());
        assert!(parse_events("H 1 2\n").is_err());
    }
}
