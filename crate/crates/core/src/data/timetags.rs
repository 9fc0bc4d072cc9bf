//! Photon time-tag records.
//!
//! Timestamps are integer picoseconds. Binning and correlation windows are
//! computed on the integers, so results do not drift over long streams.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use crate::error::{invalid, Error, Result};

/// Ticks per second of the integer time base.
pub const TICKS_PER_SECOND: f64 = 1e12;
/// Ticks per nanosecond.
pub const TICKS_PER_NS: u64 = 1000;

const MAGIC: &[u8; 4] = b"PTT1";

/// Ordered photon detection times from one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeTagStream {
    timestamps: Vec<u64>,
    duration: u64,
    channel: u32,
}

impl TimeTagStream {
    /// Builds a stream from strictly increasing picosecond timestamps that
    /// all fall inside `[0, duration]`.
    pub fn new(timestamps: Vec<u64>, duration: u64, channel: u32) -> Result<Self> {
        if let Some(w) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "timestamps must be strictly increasing (index {})",
                w + 1
            )));
        }
        if let Some(&last) = timestamps.last() {
            if last > duration {
                return Err(invalid(format!(
                    "timestamp {last} ps exceeds duration {duration} ps"
                )));
            }
        }
        Ok(Self {
            timestamps,
            duration,
            channel,
        })
    }

    pub fn empty(duration: u64) -> Self {
        Self {
            timestamps: Vec::new(),
            duration,
            channel: 0,
        }
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    /// Acquisition time in picoseconds.
    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn duration_s(&self) -> f64 {
        self.duration as f64 / TICKS_PER_SECOND
    }

    pub fn channel(&self) -> u32 {
        self.channel
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Mean detection rate in counts per second.
    pub fn mean_rate(&self) -> f64 {
        if self.duration == 0 {
            0.0
        } else {
            self.len() as f64 / self.duration_s()
        }
    }

    /// Writes the binary form: `PTT1`, u32 channel, u64 count, then one u64
    /// per timestamp, all little-endian. The header does not carry the
    /// duration, so [`read_binary`](Self::read_binary) takes it explicitly.
    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        w.write_all(MAGIC)?;
        w.write_all(&self.channel.to_le_bytes())?;
        w.write_all(&(self.timestamps.len() as u64).to_le_bytes())?;
        for t in &self.timestamps {
            w.write_all(&t.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the binary form. When `duration` is `None` the last timestamp
    /// is used.
    pub fn read_binary<R: Read>(input: R, duration: Option<u64>) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[0..4] != MAGIC {
            return Err(Error::Format("missing PTT1 magic".into()));
        }
        let channel = u32::from_le_bytes(header[4..8].try_into().unwrap());
        let count = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let mut timestamps = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for i in 0..count {
            r.read_exact(&mut buf).map_err(|e| {
                Error::Format(format!("truncated stream at record {i} of {count}: {e}"))
            })?;
            timestamps.push(u64::from_le_bytes(buf));
        }
        let duration = duration.unwrap_or_else(|| timestamps.last().copied().unwrap_or(0));
        Self::new(timestamps, duration, channel)
    }

    /// One timestamp per line with a `timestamp_ps` header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "timestamp_ps")?;
        for t in &self.timestamps {
            writeln!(w, "{t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, duration: Option<u64>, channel: u32) -> Result<Self> {
        let mut timestamps = Vec::new();
        for (lineno, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            let field = line.trim();
            if field.is_empty() || (lineno == 0 && field.parse::<u64>().is_err()) {
                continue;
            }
            let t = field.parse::<u64>().map_err(|e| {
                Error::Format(format!("line {}: {e}", lineno + 1))
            })?;
            timestamps.push(t);
        }
        let duration = duration.unwrap_or_else(|| timestamps.last().copied().unwrap_or(0));
        Self::new(timestamps, duration, channel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        assert!(TimeTagStream::new(vec![5, 5], 10, 0).is_err());
        assert!(TimeTagStream::new(vec![3, 2], 10, 0).is_err());
        assert!(TimeTagStream::new(vec![1, 11], 10, 0).is_err());
        assert!(TimeTagStream::new(vec![], 10, 0).is_ok());
    }

    #[test]
    fn binary_layout_is_fixed() {
        let s = TimeTagStream::new(vec![1, 258], 1000, 7).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 16);
        assert_eq!(&buf[0..4], b"PTT1");
        assert_eq!(&buf[4..8], &[7, 0, 0, 0]);
        assert_eq!(&buf[8..16], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&buf[24..32], &[2, 1, 0, 0, 0, 0, 0, 0]);
        let back = TimeTagStream::read_binary(&buf[..], Some(1000)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_binary_is_a_format_error() {
        let s = TimeTagStream::new(vec![1, 2, 3], 10, 0).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            TimeTagStream::read_binary(&buf[..], None),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let s = TimeTagStream::new(vec![10, 20, 35], 100, 0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = TimeTagStream::read_csv(&buf[..], Some(100), 0).unwrap();
        assert_eq!(back, s);
    }
}
