//! MGF spectrum parsing and PSM table output.
//!
//! MGF records are framed by `BEGIN IONS` / `END IONS`. Inside a record,
//! `KEY=value` lines are headers (`TITLE`, `PEPMASS`, `CHARGE` are used,
//! the rest ignored) and every other non-blank line is a peak `mz intensity`.

use std::io::{self, BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::oms_search::{Psm, SearchMode};

pub const DEFAULT_DECOY_PREFIX: &str = "DECOY_";

pub const MAX_CHARGE: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub mz: f64,
    pub intensity: f64,
}

impl Peak {
    pub fn new(mz: f64, intensity: f64) -> Self {
        Self { mz, intensity }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub id: u32,
    pub title: String,
    pub precursor_mz: f64,
    pub charge: u8,
    /// Sorted ascending by m/z, no duplicate m/z values.
    pub peaks: Vec<Peak>,
    pub is_decoy: bool,
}

impl Spectrum {
    pub fn max_intensity(&self) -> f64 {
        self.peaks.iter().map(|p| p.intensity).fold(0.0, f64::max)
    }
}

/// Whether `title` marks a decoy. An empty prefix marks nothing.
pub fn is_decoy_title(title: &str, decoy_prefix: &str) -> bool {
    !decoy_prefix.is_empty() && title.starts_with(decoy_prefix)
}

#[derive(Debug, Default)]
pub struct MgfParse {
    pub spectra: Vec<Spectrum>,
    /// Records dropped because CHARGE was absent or not a usable charge state.
    pub skipped_no_charge: usize,
}

#[derive(Default)]
struct PendingRecord {
    start_line: usize,
    title: Option<String>,
    pepmass: Option<f64>,
    charge: Option<u8>,
    peaks: Vec<Peak>,
}

/// Parses an MGF charge field: `2+`, `2`, `+2`. Anything else (negative,
/// multiple charges, zero, above [`MAX_CHARGE`]) yields `None`.
pub fn parse_charge(field: &str) -> Option<u8> {
    let s = field.trim();
    let digits = s
        .strip_suffix('+')
        .or_else(|| s.strip_prefix('+'))
        .unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let z: u32 = digits.parse().ok()?;
    (1..=MAX_CHARGE as u32).contains(&z).then_some(z as u8)
}

fn parse_f64(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Sorts peaks by m/z and merges equal m/z values by summing intensity.
pub(crate) fn normalize_peaks(peaks: &mut Vec<Peak>) {
    peaks.sort_by(|a, b| a.mz.total_cmp(&b.mz));
    peaks.dedup_by(|next, kept| {
        if next.mz == kept.mz {
            kept.intensity += next.intensity;
            true
        } else {
            false
        }
    });
}

pub fn parse_mgf<R: Read>(reader: R, decoy_prefix: &str) -> Result<MgfParse> {
    let reader = BufReader::new(reader);
    let mut out = MgfParse::default();
    let mut current: Option<PendingRecord> = None;
    let mut line_no = 0;

    for line in reader.lines() {
        line_no += 1;
        let line = match line {
            Ok(l) => l,
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                return Err(Error::parse(line_no, "input is not valid UTF-8"))
            }
            Err(e) => return Err(e.into()),
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }

        if line.eq_ignore_ascii_case("BEGIN IONS") {
            if let Some(rec) = &current {
                return Err(Error::parse(
                    line_no,
                    format!(
                        "BEGIN IONS before END IONS of block opened at line {}",
                        rec.start_line
                    ),
                ));
            }
            current = Some(PendingRecord {
                start_line: line_no,
                ..Default::default()
            });
            continue;
        }

        if line.eq_ignore_ascii_case("END IONS") {
            let Some(mut rec) = current.take() else {
                return Err(Error::parse(
                    line_no,
                    "END IONS without matching BEGIN IONS",
                ));
            };
            let Some(precursor_mz) = rec.pepmass else {
                return Err(Error::parse(line_no, "record has no usable PEPMASS"));
            };
            let Some(charge) = rec.charge else {
                out.skipped_no_charge += 1;
                continue;
            };
            normalize_peaks(&mut rec.peaks);
            let title = rec.title.unwrap_or_default();
            out.spectra.push(Spectrum {
                id: out.spectra.len() as u32,
                is_decoy: is_decoy_title(&title, decoy_prefix),
                title,
                precursor_mz,
                charge,
                peaks: rec.peaks,
            });
            continue;
        }

        let Some(rec) = current.as_mut() else {
            // Global parameters and comments between records carry nothing we use.
            if line.contains('=') || line.starts_with(['#', ';', '!', '/']) {
                continue;
            }
            return Err(Error::parse(line_no, "content outside BEGIN IONS/END IONS"));
        };

        if line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            if let Some((key, value)) = line.split_once('=') {
                match key.trim().to_ascii_uppercase().as_str() {
                    "TITLE" => rec.title = Some(value.to_string()),
                    "PEPMASS" => {
                        rec.pepmass = value
                            .split_whitespace()
                            .next()
                            .and_then(parse_f64)
                            .filter(|&mz| mz > 0.0);
                        if rec.pepmass.is_none() {
                            return Err(Error::parse(line_no, format!("bad PEPMASS {value:?}")));
                        }
                    }
                    "CHARGE" => rec.charge = parse_charge(value),
                    _ => {}
                }
                continue;
            }
        }

        let mut toks = line.split_whitespace();
        let mz = toks.next().and_then(parse_f64);
        let intensity = toks.next().and_then(parse_f64);
        match (mz, intensity) {
            (Some(mz), Some(intensity)) if mz > 0.0 && intensity >= 0.0 => {
                rec.peaks.push(Peak { mz, intensity })
            }
            (Some(_), Some(_)) => {
                return Err(Error::parse(
                    line_no,
                    "peak m/z must be > 0 and intensity >= 0",
                ))
            }
            _ => {
                return Err(Error::parse(
                    line_no,
                    format!("unparsable peak line {line:?}"),
                ))
            }
        }
    }

    if let Some(rec) = current {
        return Err(Error::parse(
            rec.start_line,
            "unterminated BEGIN IONS block at end of input",
        ));
    }
    Ok(out)
}

/// Writes spectra as MGF. Floats use shortest round-trip formatting, so
/// parsing the output reproduces every field.
pub fn write_mgf<W: Write>(spectra: &[Spectrum], mut w: W) -> io::Result<()> {
    for s in spectra {
        writeln!(w, "BEGIN IONS")?;
        writeln!(w, "TITLE={}", s.title)?;
        writeln!(w, "PEPMASS={}", s.precursor_mz)?;
        writeln!(w, "CHARGE={}+", s.charge)?;
        for p in &s.peaks {
            writeln!(w, "{} {}", p.mz, p.intensity)?;
        }
        writeln!(w, "END IONS")?;
        writeln!(w)?;
    }
    w.flush()
}

pub const PSM_HEADER: &str =
    "query_id\tquery_title\tref_id\tref_title\tmode\tscore\tprecursor_mass_diff\tis_decoy";

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

struct CountingWriter<W> {
    inner: W,
    written: usize,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.written += n;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Writes PSMs as TSV ordered by query id, standard before open.
/// Returns the number of bytes written.
pub fn write_psms<W: Write>(psms: &[Psm], sink: W) -> io::Result<usize> {
    let mut ordered: Vec<&Psm> = psms.iter().collect();
    ordered.sort_by_key(|p| (p.query_id, p.mode, p.ref_id));

    let mut w = CountingWriter {
        inner: sink,
        written: 0,
    };
    writeln!(w, "{PSM_HEADER}")?;
    for p in ordered {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.query_id,
            escape_field(&p.query_title),
            p.ref_id,
            escape_field(&p.ref_title),
            p.mode,
            p.score,
            p.mass_diff,
            u8::from(p.is_decoy),
        )?;
    }
    w.flush()?;
    Ok(w.written)
}

/// Reads a PSM table produced by [`write_psms`].
pub fn read_psms<R: Read>(reader: R) -> Result<Vec<Psm>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line_no == 1 {
            if line != PSM_HEADER {
                return Err(Error::parse(1, "missing PSM header row"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(Error::parse(
                line_no,
                format!("expected 8 columns, found {}", cols.len()),
            ));
        }
        let bad = |what: &str| Error::parse(line_no, format!("bad {what}"));
        out.push(Psm {
            query_id: cols[0].parse().map_err(|_| bad("query_id"))?,
            query_title: unescape_field(cols[1]),
            ref_id: cols[2].parse().map_err(|_| bad("ref_id"))?,
            ref_title: unescape_field(cols[3]),
            mode: cols[4].parse().map_err(|_| bad("mode"))?,
            score: cols[5].parse().map_err(|_| bad("score"))?,
            mass_diff: cols[6].parse().map_err(|_| bad("precursor_mass_diff"))?,
            is_decoy: match cols[7] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("is_decoy")),
            },
        });
    }
    Ok(out)
}

impl std::str::FromStr for SearchMode {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "standard" => Ok(SearchMode::Standard),
            "open" => Ok(SearchMode::Open),
            _ => Err(()),
        }
    }
}
