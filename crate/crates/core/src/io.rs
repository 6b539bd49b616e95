//! File formats: delimited-text event and pair files, the binary raw block
//! capture, and the run manifest that ties outputs to their settings.
//!
//! Every text output starts with a `# manifest=<hash>` line so any file can
//! be traced back to the exact configuration and seed that produced it.
//! Floats are written in shortest-roundtrip form except `mjd`, which is
//! fixed at 9 decimal places (0.1 ms, well under the 0.27 s epoch spacing).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::firstlevel::PulseEvent;
use crate::secondlevel::PulsePair;
use crate::simulator::IqBlock;
use crate::{Element, Error, Result, BLOCK_LEN};

pub const EVENT_HEADER: &str =
    "mjd,element,rf_freq_hz,snr_db,phase_rad,seg_noise_db,band50_db,segment_index,bin_index";

pub const PAIR_HEADER: &str = "mjd,lst_hr,ra_bin,f0_hz,df_hz,snr_e0_db,snr_w0_db,snr_edf_db,\
     snr_wdf_db,dphi0_rad,dphidf_rad,ddfdphi_rad,llsnr_pair,segnoise_e0_db,segnoise_w0_db,\
     segnoise_edf_db,segnoise_wdf_db,band50_e_db,band50_w_db";

const RAW_MAGIC: &[u8; 8] = b"IQBLOCK1";

fn open_with_path(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn create_with_path(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Streaming writer for first-level event files.
pub struct EventWriter {
    w: BufWriter<File>,
    rows: u64,
}

impl EventWriter {
    pub fn create(path: &Path, manifest_hash: &str) -> Result<EventWriter> {
        let mut w = BufWriter::new(create_with_path(path)?);
        writeln!(w, "# manifest={manifest_hash}")?;
        writeln!(w, "{EVENT_HEADER}")?;
        Ok(EventWriter { w, rows: 0 })
    }

    pub fn write(&mut self, e: &PulseEvent) -> Result<()> {
        writeln!(
            self.w,
            "{:.9},{},{},{},{},{},{},{},{}",
            e.mjd,
            e.element.tag(),
            e.rf_freq_hz,
            e.snr_db,
            e.phase_rad,
            e.seg_noise_db,
            e.band50_db,
            e.segment_index,
            e.bin_index
        )?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<u64> {
        self.w.flush()?;
        Ok(self.rows)
    }
}

pub fn write_events(path: &Path, events: &[PulseEvent], manifest_hash: &str) -> Result<()> {
    let mut w = EventWriter::create(path, manifest_hash)?;
    for e in events {
        w.write(e)?;
    }
    w.finish()?;
    Ok(())
}

/// Streaming reader for event files; yields rows in file order.
#[derive(Debug)]
pub struct EventReader {
    lines: std::io::Lines<BufReader<File>>,
    manifest_hash: Option<String>,
    lineno: usize,
}

impl EventReader {
    pub fn open(path: &Path) -> Result<EventReader> {
        let mut lines = BufReader::new(open_with_path(path)?).lines();
        let mut manifest_hash = None;
        let mut lineno = 0;
        loop {
            lineno += 1;
            let line = lines.next().transpose()?.ok_or_else(|| {
                Error::Schema(format!("{}: missing header row", path.display()))
            })?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(h) = rest.trim().strip_prefix("manifest=") {
                    manifest_hash = Some(h.to_string());
                }
                continue;
            }
            if line != EVENT_HEADER {
                return Err(Error::Schema(format!(
                    "line {lineno}: header `{line}` does not match `{EVENT_HEADER}`"
                )));
            }
            break;
        }
        Ok(EventReader {
            lines,
            manifest_hash,
            lineno,
        })
    }

    pub fn manifest_hash(&self) -> Option<&str> {
        self.manifest_hash.as_deref()
    }
}

impl Iterator for EventReader {
    type Item = Result<PulseEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.lineno += 1;
            match self.lines.next()? {
                Err(e) => return Some(Err(e.into())),
                Ok(line) => {
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    return Some(parse_event_row(&line, self.lineno));
                }
            }
        }
    }
}

pub fn read_events(path: &Path) -> Result<Vec<PulseEvent>> {
    EventReader::open(path)?.collect()
}

const EVENT_COLUMNS: [&str; 9] = [
    "mjd",
    "element",
    "rf_freq_hz",
    "snr_db",
    "phase_rad",
    "seg_noise_db",
    "band50_db",
    "segment_index",
    "bin_index",
];

fn parse_event_row(line: &str, lineno: usize) -> Result<PulseEvent> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != EVENT_COLUMNS.len() {
        return Err(Error::Schema(format!(
            "line {lineno}: expected {} columns, found {}",
            EVENT_COLUMNS.len(),
            cells.len()
        )));
    }
    let f = |i: usize| -> Result<f64> {
        cells[i].parse().map_err(|_| {
            Error::Schema(format!(
                "line {lineno}: column `{}`: `{}` is not a number",
                EVENT_COLUMNS[i], cells[i]
            ))
        })
    };
    let u = |i: usize| -> Result<u32> {
        cells[i].parse().map_err(|_| {
            Error::Schema(format!(
                "line {lineno}: column `{}`: `{}` is not an unsigned integer",
                EVENT_COLUMNS[i], cells[i]
            ))
        })
    };
    let element = Element::from_tag(cells[1]).ok_or_else(|| {
        Error::Schema(format!(
            "line {lineno}: column `element`: `{}` is not E or W",
            cells[1]
        ))
    })?;
    Ok(PulseEvent {
        mjd: f(0)?,
        element,
        rf_freq_hz: f(2)?,
        snr_db: f(3)?,
        phase_rad: f(4)?,
        seg_noise_db: f(5)?,
        band50_db: f(6)?,
        segment_index: u(7)?,
        bin_index: u(8)?,
    })
}

pub fn write_pairs(path: &Path, pairs: &[PulsePair], manifest_hash: &str) -> Result<()> {
    let mut w = BufWriter::new(create_with_path(path)?);
    writeln!(w, "# manifest={manifest_hash}")?;
    writeln!(w, "{PAIR_HEADER}")?;
    for p in pairs {
        writeln!(
            w,
            "{:.9},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.mjd,
            p.lst_hr,
            p.ra_bin,
            p.f0_hz,
            p.df_hz,
            p.snr_e0_db,
            p.snr_w0_db,
            p.snr_edf_db,
            p.snr_wdf_db,
            p.dphi0_rad,
            p.dphidf_rad,
            p.ddfdphi_rad,
            p.llsnr_pair,
            p.segnoise_e0_db,
            p.segnoise_w0_db,
            p.segnoise_edf_db,
            p.segnoise_wdf_db,
            p.band50_e_db,
            p.band50_w_db
        )?;
    }
    w.flush()?;
    Ok(())
}

const PAIR_COLUMNS: [&str; 19] = [
    "mjd",
    "lst_hr",
    "ra_bin",
    "f0_hz",
    "df_hz",
    "snr_e0_db",
    "snr_w0_db",
    "snr_edf_db",
    "snr_wdf_db",
    "dphi0_rad",
    "dphidf_rad",
    "ddfdphi_rad",
    "llsnr_pair",
    "segnoise_e0_db",
    "segnoise_w0_db",
    "segnoise_edf_db",
    "segnoise_wdf_db",
    "band50_e_db",
    "band50_w_db",
];

/// Read a pair file; returns the pairs and the manifest hash if present.
pub fn read_pairs(path: &Path) -> Result<(Vec<PulsePair>, Option<String>)> {
    let reader = BufReader::new(open_with_path(path)?);
    let mut manifest_hash = None;
    let mut saw_header = false;
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(h) = rest.trim().strip_prefix("manifest=") {
                manifest_hash = Some(h.to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != PAIR_HEADER {
                return Err(Error::Schema(format!(
                    "line {lineno}: header `{line}` does not match `{PAIR_HEADER}`"
                )));
            }
            saw_header = true;
            continue;
        }
        pairs.push(parse_pair_row(&line, lineno)?);
    }
    if !saw_header {
        return Err(Error::Schema(format!(
            "{}: missing header row",
            path.display()
        )));
    }
    Ok((pairs, manifest_hash))
}

fn parse_pair_row(line: &str, lineno: usize) -> Result<PulsePair> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != PAIR_COLUMNS.len() {
        return Err(Error::Schema(format!(
            "line {lineno}: expected {} columns, found {}",
            PAIR_COLUMNS.len(),
            cells.len()
        )));
    }
    let f = |i: usize| -> Result<f64> {
        cells[i].parse().map_err(|_| {
            Error::Schema(format!(
                "line {lineno}: column `{}`: `{}` is not a number",
                PAIR_COLUMNS[i], cells[i]
            ))
        })
    };
    let ra_bin: u32 = cells[2].parse().map_err(|_| {
        Error::Schema(format!(
            "line {lineno}: column `ra_bin`: `{}` is not an unsigned integer",
            cells[2]
        ))
    })?;
    Ok(PulsePair {
        mjd: f(0)?,
        lst_hr: f(1)?,
        ra_bin,
        f0_hz: f(3)?,
        df_hz: f(4)?,
        snr_e0_db: f(5)?,
        snr_w0_db: f(6)?,
        snr_edf_db: f(7)?,
        snr_wdf_db: f(8)?,
        dphi0_rad: f(9)?,
        dphidf_rad: f(10)?,
        ddfdphi_rad: f(11)?,
        llsnr_pair: f(12)?,
        segnoise_e0_db: f(13)?,
        segnoise_w0_db: f(14)?,
        segnoise_edf_db: f(15)?,
        segnoise_wdf_db: f(16)?,
        band50_e_db: f(17)?,
        band50_w_db: f(18)?,
    })
}

/// Streaming writer for the raw capture format: an 8-byte magic, the
/// manifest hash, then fixed-size records of block metadata followed by 256
/// interleaved 32-bit float I/Q samples.
pub struct RawBlockWriter {
    w: BufWriter<File>,
}

impl RawBlockWriter {
    pub fn create(path: &Path, manifest_hash: &str) -> Result<RawBlockWriter> {
        let mut w = BufWriter::new(create_with_path(path)?);
        w.write_all(RAW_MAGIC)?;
        let hash = manifest_hash.as_bytes();
        w.write_all(&(hash.len() as u32).to_le_bytes())?;
        w.write_all(hash)?;
        Ok(RawBlockWriter { w })
    }

    pub fn write(&mut self, block: &IqBlock) -> Result<()> {
        if block.samples.len() != BLOCK_LEN {
            return Err(Error::Shape(format!(
                "raw block has {} samples, expected {BLOCK_LEN}",
                block.samples.len()
            )));
        }
        self.w.write_all(&block.mjd.to_le_bytes())?;
        self.w.write_all(&[block.element.index() as u8])?;
        self.w.write_all(&block.segment_index.to_le_bytes())?;
        self.w
            .write_all(&block.segment_center_mhz.to_le_bytes())?;
        for s in &block.samples {
            self.w.write_all(&(s.re as f32).to_le_bytes())?;
            self.w.write_all(&(s.im as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Read a raw capture back; returns the blocks and the stored manifest hash.
pub fn read_raw_blocks(path: &Path) -> Result<(Vec<IqBlock>, String)> {
    let mut r = BufReader::new(open_with_path(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Schema(format!("{}: truncated raw header", path.display())))?;
    if &magic != RAW_MAGIC {
        return Err(Error::Schema(format!(
            "{}: not a raw block capture",
            path.display()
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut hash = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut hash)?;
    let hash = String::from_utf8(hash)
        .map_err(|_| Error::Schema("raw header hash is not UTF-8".into()))?;

    let mut blocks = Vec::new();
    loop {
        let mut mjd = [0u8; 8];
        match r.read_exact(&mut mjd) {
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            other => other?,
        }
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        let element = match byte[0] {
            0 => Element::East,
            1 => Element::West,
            other => {
                return Err(Error::Schema(format!(
                    "raw block {}: bad element byte {other}",
                    blocks.len()
                )))
            }
        };
        let mut seg = [0u8; 4];
        r.read_exact(&mut seg)?;
        let mut center = [0u8; 8];
        r.read_exact(&mut center)?;
        let mut samples = Vec::with_capacity(BLOCK_LEN);
        let mut iq = [0u8; 8];
        for _ in 0..BLOCK_LEN {
            r.read_exact(&mut iq).map_err(|_| {
                Error::Schema(format!("raw block {}: truncated samples", blocks.len()))
            })?;
            let re = f32::from_le_bytes(iq[0..4].try_into().expect("4 bytes")) as f64;
            let im = f32::from_le_bytes(iq[4..8].try_into().expect("4 bytes")) as f64;
            samples.push(Complex64::new(re, im));
        }
        blocks.push(IqBlock {
            element,
            mjd: f64::from_le_bytes(mjd),
            segment_index: u32::from_le_bytes(seg),
            segment_center_mhz: f64::from_le_bytes(center),
            samples,
        });
    }
    Ok((blocks, hash))
}

/// Provenance record written alongside every output. Timestamps are the
/// data's own MJD coverage, not wall-clock time, so reruns stay
/// byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub stage_versions: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// First and last MJD covered by the data.
    pub mjd_range: (f64, f64),
}

impl RunManifest {
    pub fn render(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        writeln!(s, "config_hash = {}", self.config_hash).expect("string write");
        writeln!(s, "seed = {}", self.seed).expect("string write");
        writeln!(s, "stage_versions = {}", self.stage_versions).expect("string write");
        for p in &self.inputs {
            writeln!(s, "input = {p}").expect("string write");
        }
        for p in &self.outputs {
            writeln!(s, "output = {p}").expect("string write");
        }
        writeln!(s, "mjd_first = {:.9}", self.mjd_range.0).expect("string write");
        writeln!(s, "mjd_last = {:.9}", self.mjd_range.1).expect("string write");
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = create_with_path(path)?;
        f.write_all(self.render().as_bytes())?;
        Ok(())
    }
}

/// The conventional manifest path for an output file: `<file>.manifest`.
pub fn manifest_path_for(out: &Path) -> std::path::PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    out.with_file_name(name)
}
