//! Dataset files.
//!
//! Text (v1):
//!
//! ```text
//! csi-src v1; subcarriers=N; bandwidth_mhz=B; center_mhz=F
//! label,seq,snr_db,re_1,im_1,...,re_N,im_N
//! ```
//!
//! Binary (v1): magic `CSIS`, `u32` version, `u32` sub-carrier count,
//! `f64` bandwidth (MHz), `f64` centre (MHz), then records of `u64` class
//! index, `u64` seq, `f64` snr_db and `2N` `f64` values (re, im interleaved).
//! All integers and floats little-endian.
//!
//! Records are numbered from 1; the header is record 0.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivityClass, BandDescriptor, CsiVector, LabeledSample, Sample};

pub const TEXT_MAGIC: &str = "csi-src v1";
pub const BINARY_MAGIC: &[u8; 4] = b"CSIS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Text,
    Binary,
}

impl DatasetFormat {
    /// `.bin` selects binary, anything else text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => DatasetFormat::Binary,
            _ => DatasetFormat::Text,
        }
    }
}

/// Samples plus the band they were recorded on.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub band: BandDescriptor,
    pub samples: Vec<LabeledSample>,
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<LabeledSample>> {
    Ok(read_dataset_file(path, format)?.samples)
}

pub fn read_dataset_file(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    match format {
        DatasetFormat::Text => read_text(reader),
        DatasetFormat::Binary => read_binary(reader),
    }
}

pub fn save_dataset(
    path: &Path,
    band: &BandDescriptor,
    samples: &[LabeledSample],
    format: DatasetFormat,
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    match format {
        DatasetFormat::Text => write_text(&mut writer, band, samples)?,
        DatasetFormat::Binary => write_binary(&mut writer, band, samples)?,
    }
    writer.flush()?;
    Ok(())
}

fn check_band(band: &BandDescriptor, samples: &[LabeledSample]) -> Result<()> {
    for s in samples {
        if s.sample.csi.len() != band.num_subcarriers {
            return Err(Error::Dimension {
                expected: band.num_subcarriers,
                found: s.sample.csi.len(),
            });
        }
    }
    Ok(())
}

pub fn write_text<W: Write>(w: &mut W, band: &BandDescriptor, samples: &[LabeledSample]) -> Result<()> {
    check_band(band, samples)?;
    writeln!(
        w,
        "{TEXT_MAGIC}; subcarriers={}; bandwidth_mhz={}; center_mhz={}",
        band.num_subcarriers, band.total_bandwidth_mhz, band.center_freq_mhz
    )?;
    let mut line = String::new();
    for s in samples {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{},{},{}", s.label, s.sample.seq, s.sample.snr_db);
        for v in s.sample.csi.values() {
            let _ = write!(line, ",{},{}", v.re, v.im);
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn parse_header(line: &str) -> Result<BandDescriptor> {
    let bad = |message: String| Error::Parse { record: 0, message };
    let mut parts = line.trim_end().split(';').map(str::trim);
    if parts.next() != Some(TEXT_MAGIC) {
        return Err(bad(format!("expected header starting with '{TEXT_MAGIC}'")));
    }
    let (mut n, mut bw, mut center) = (None, None, None);
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field '{part}'")))?;
        match key {
            "subcarriers" => n = value.parse::<usize>().ok(),
            "bandwidth_mhz" => bw = value.parse::<f64>().ok(),
            "center_mhz" => center = value.parse::<f64>().ok(),
            other => return Err(bad(format!("unknown header field '{other}'"))),
        }
    }
    match (n, bw, center) {
        (Some(n), Some(bw), Some(center)) => {
            BandDescriptor::new(center, bw, n).map_err(|e| bad(e.to_string()))
        }
        _ => Err(bad("header must define subcarriers, bandwidth_mhz and center_mhz".into())),
    }
}

fn parse_finite(field: &str, record: usize, what: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        record,
        message: format!("invalid {what} '{field}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            record,
            message: format!("non-finite {what} '{field}'"),
        });
    }
    Ok(v)
}

pub fn read_text<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(Error::Parse {
                record: 0,
                message: "missing header".into(),
            })
        }
    };
    let band = parse_header(&header)?;
    let n = band.num_subcarriers;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let record = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + 2 * n {
            return Err(Error::Dimension {
                expected: 3 + 2 * n,
                found: fields.len(),
            });
        }
        let label: ActivityClass = fields[0].trim().parse().map_err(|_| Error::Parse {
            record,
            message: format!("unknown label '{}'", fields[0]),
        })?;
        let seq: u64 = fields[1].trim().parse().map_err(|_| Error::Parse {
            record,
            message: format!("invalid seq '{}'", fields[1]),
        })?;
        let snr_db = parse_finite(fields[2], record, "snr_db")?;
        let values = fields[3..]
            .chunks_exact(2)
            .map(|p| {
                Ok(Complex64::new(
                    parse_finite(p[0], record, "real part")?,
                    parse_finite(p[1], record, "imaginary part")?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let csi = CsiVector::new(values, band)?;
        samples.push(LabeledSample {
            sample: Sample::new(csi, snr_db, seq)?,
            label,
        });
    }
    Ok(Dataset { band, samples })
}

pub fn write_binary<W: Write>(w: &mut W, band: &BandDescriptor, samples: &[LabeledSample]) -> Result<()> {
    check_band(band, samples)?;
    let n = u32::try_from(band.num_subcarriers)
        .map_err(|_| Error::Range("too many sub-carriers for binary format".into()))?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&band.total_bandwidth_mhz.to_le_bytes())?;
    w.write_all(&band.center_freq_mhz.to_le_bytes())?;
    let mut buf = Vec::with_capacity(24 + 16 * band.num_subcarriers);
    for s in samples {
        buf.clear();
        buf.extend_from_slice(&(s.label.index() as u64).to_le_bytes());
        buf.extend_from_slice(&s.sample.seq.to_le_bytes());
        buf.extend_from_slice(&s.sample.snr_db.to_le_bytes());
        for v in s.sample.csi.values() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Fills `buf` completely, or returns `false` on a clean end of input.
fn read_record<R: Read>(r: &mut R, buf: &mut [u8], record: usize) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 if filled == 0 => return Ok(false),
            0 => {
                return Err(Error::Parse {
                    record,
                    message: format!("truncated record ({filled} of {} bytes)", buf.len()),
                })
            }
            k => filled += k,
        }
    }
    Ok(true)
}

fn f64_at(buf: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(buf[offset..offset + 8].try_into().unwrap())
}

fn u64_at(buf: &[u8], offset: usize) -> u64 {
    u64::from_le_bytes(buf[offset..offset + 8].try_into().unwrap())
}

pub fn read_binary<R: Read>(mut reader: R) -> Result<Dataset> {
    let mut header = [0u8; 28];
    if !read_record(&mut reader, &mut header, 0)? {
        return Err(Error::Parse {
            record: 0,
            message: "missing header".into(),
        });
    }
    if &header[..4] != BINARY_MAGIC {
        return Err(Error::Parse {
            record: 0,
            message: "bad magic bytes".into(),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            record: 0,
            message: format!("unsupported version {version}"),
        });
    }
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let band = BandDescriptor::new(f64_at(&header, 20), f64_at(&header, 12), n).map_err(|e| Error::Parse {
        record: 0,
        message: e.to_string(),
    })?;

    let mut samples = Vec::new();
    let mut buf = vec![0u8; 24 + 16 * n];
    let mut record = 1;
    while read_record(&mut reader, &mut buf, record)? {
        let parse_err = |message: String| Error::Parse { record, message };
        let label = usize::try_from(u64_at(&buf, 0))
            .ok()
            .and_then(ActivityClass::from_index)
            .ok_or_else(|| parse_err("invalid class index".into()))?;
        let seq = u64_at(&buf, 8);
        let snr_db = f64_at(&buf, 16);
        if !snr_db.is_finite() {
            return Err(parse_err("non-finite snr_db".into()));
        }
        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            let v = Complex64::new(f64_at(&buf, 24 + 16 * k), f64_at(&buf, 32 + 16 * k));
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(parse_err(format!("non-finite value at sub-carrier {k}")));
            }
            values.push(v);
        }
        samples.push(LabeledSample {
            sample: Sample::new(CsiVector::new(values, band)?, snr_db, seq)?,
            label,
        });
        record += 1;
    }
    Ok(Dataset { band, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_set() -> (BandDescriptor, Vec<LabeledSample>) {
        let band = BandDescriptor::new(5800.0, 20.0, 4).unwrap();
        let samples = (0..3)
            .map(|i| {
                let values = (0..4)
                    .map(|k| Complex64::new(0.1 * (i * 4 + k) as f64 - 0.7, 1.0 / (k as f64 + 3.0)))
                    .collect();
                LabeledSample {
                    sample: Sample::new(CsiVector::new(values, band).unwrap(), 24.5 - i as f64 / 3.0, i as u64)
                        .unwrap(),
                    label: ActivityClass::ALL[i * 3],
                }
            })
            .collect();
        (band, samples)
    }

    #[test]
    fn empty_file_gives_empty_sequence() {
        let text = "csi-src v1; subcarriers=4; bandwidth_mhz=20; center_mhz=5800\n";
        let ds = read_text(Cursor::new(text)).unwrap();
        assert!(ds.samples.is_empty());
        assert_eq!(ds.band.num_subcarriers, 4);
    }

    #[test]
    fn three_rows_round_trip_through_text_and_binary() {
        let (band, samples) = sample_set();
        let mut text = Vec::new();
        write_text(&mut text, &band, &samples).unwrap();
        let back = read_text(Cursor::new(&text)).unwrap();
        assert_eq!(back.samples.len(), 3);
        assert!(back.samples.iter().all(|s| s.sample.csi.len() == 4));
        assert_eq!(back.samples, samples);

        let mut bin = Vec::new();
        write_binary(&mut bin, &band, &samples).unwrap();
        assert_eq!(&bin[..4], b"CSIS");
        assert_eq!(read_binary(Cursor::new(&bin)).unwrap().samples, samples);
    }

    #[test]
    fn nan_real_part_is_a_parse_error_at_that_row() {
        let text = "csi-src v1; subcarriers=1; bandwidth_mhz=20; center_mhz=5800\n\
                    E,0,20,1,0\n\
                    L,1,20,NaN,0\n";
        match read_text(Cursor::new(text)) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_field_count_is_a_dimension_error() {
        let text = "csi-src v1; subcarriers=2; bandwidth_mhz=20; center_mhz=5800\nE,0,20,1,0\n";
        assert!(matches!(read_text(Cursor::new(text)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn bad_header_and_truncated_binary_are_rejected() {
        assert!(matches!(
            read_text(Cursor::new("hello\n")),
            Err(Error::Parse { record: 0, .. })
        ));
        let (band, samples) = sample_set();
        let mut bin = Vec::new();
        write_binary(&mut bin, &band, &samples).unwrap();
        bin.truncate(bin.len() - 5);
        assert!(matches!(read_binary(Cursor::new(&bin)), Err(Error::Parse { record: 3, .. })));
    }
}
