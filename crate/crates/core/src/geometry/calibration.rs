//! Calibrated projection as a monotone θ → r lookup table.
//!
//! The table stores radii (millimetres on the sensor) sampled at a uniform
//! angular step starting at θ = 0. Forward lookup interpolates linearly
//! between neighbouring rows; the inverse binary-searches the radius column
//! and interpolates the bracketing pair.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Header line required at the top of a calibration file.
pub const CALIBRATION_HEADER: &str = "theta_deg,r_mm";

const STEP_TOLERANCE_DEG: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("cannot read calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("calibration file must start with the header `{CALIBRATION_HEADER}`")]
    MissingHeader,
    #[error("calibration table needs at least two rows, got {0}")]
    TooShort(usize),
    #[error("calibration table must start at theta = 0, r = 0")]
    BadOrigin,
    #[error("calibration table step is not uniform at row {row}")]
    NonUniformStep { row: usize },
    #[error("calibration radius is not strictly increasing at row {row}")]
    NotMonotone { row: usize },
}

/// Sampled θ → r projection of a calibrated lens.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    step_deg: f64,
    radii_mm: Vec<f64>,
}

impl CalibrationTable {
    /// Builds a table from `(theta_deg, r_mm)` rows, checking origin, step
    /// uniformity and strict monotonicity.
    pub fn from_entries(entries: &[(f64, f64)]) -> Result<Self, CalibrationError> {
        if entries.len() < 2 {
            return Err(CalibrationError::TooShort(entries.len()));
        }
        let (t0, r0) = entries[0];
        if t0 != 0.0 || r0 != 0.0 {
            return Err(CalibrationError::BadOrigin);
        }
        let n = entries.len();
        let step_deg = entries[n - 1].0 / (n - 1) as f64;
        if !(step_deg > 0.0) || !step_deg.is_finite() {
            return Err(CalibrationError::NonUniformStep { row: 1 });
        }
        for (i, &(theta, _)) in entries.iter().enumerate() {
            if (theta - i as f64 * step_deg).abs() > STEP_TOLERANCE_DEG {
                return Err(CalibrationError::NonUniformStep { row: i });
            }
        }
        for i in 1..n {
            let (prev, cur) = (entries[i - 1].1, entries[i].1);
            if !cur.is_finite() || cur <= prev {
                return Err(CalibrationError::NotMonotone { row: i });
            }
        }
        Ok(Self {
            step_deg,
            radii_mm: entries.iter().map(|e| e.1).collect(),
        })
    }

    /// Samples `radius_mm(theta_rad)` at `step_deg` from 0 up to and including
    /// `max_deg` (rounded to the nearest whole number of steps).
    pub fn sample<F>(step_deg: f64, max_deg: f64, radius_mm: F) -> Result<Self, CalibrationError>
    where
        F: Fn(f64) -> f64,
    {
        let steps = (max_deg / step_deg).round() as usize;
        let entries: Vec<(f64, f64)> = (0..=steps)
            .map(|i| {
                let deg = i as f64 * step_deg;
                (deg, radius_mm(deg.to_radians()))
            })
            .collect();
        Self::from_entries(&entries)
    }

    pub fn step_deg(&self) -> f64 {
        self.step_deg
    }

    pub fn len(&self) -> usize {
        self.radii_mm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii_mm.is_empty()
    }

    /// Largest tabulated incident angle in degrees.
    pub fn max_theta_deg(&self) -> f64 {
        (self.radii_mm.len() - 1) as f64 * self.step_deg
    }

    pub fn max_radius_mm(&self) -> f64 {
        *self.radii_mm.last().expect("table has at least two rows")
    }

    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.radii_mm
            .iter()
            .enumerate()
            .map(move |(i, &r)| (i as f64 * self.step_deg, r))
    }

    /// Radius in millimetres at `theta_deg`, or `None` outside the table.
    pub fn radius_mm(&self, theta_deg: f64) -> Option<f64> {
        let last = self.radii_mm.len() - 1;
        let pos = theta_deg / self.step_deg;
        if !(pos >= 0.0) || pos > last as f64 + 1e-9 {
            return None;
        }
        let i = (pos.floor() as usize).min(last - 1);
        let t = pos - i as f64;
        let (a, b) = (self.radii_mm[i], self.radii_mm[i + 1]);
        Some(a + t * (b - a))
    }

    /// Incident angle in degrees for a radius in millimetres, or `None` when
    /// the radius lies outside the tabulated range.
    pub fn theta_deg(&self, r_mm: f64) -> Option<f64> {
        let last = self.radii_mm.len() - 1;
        if !(r_mm >= 0.0) || r_mm > self.radii_mm[last] * (1.0 + 1e-12) {
            return None;
        }
        let upper = self.radii_mm.partition_point(|&x| x <= r_mm);
        let i = upper.saturating_sub(1).min(last - 1);
        let (a, b) = (self.radii_mm[i], self.radii_mm[i + 1]);
        let t = (r_mm - a) / (b - a);
        Some((i as f64 + t) * self.step_deg)
    }

    /// Serializes the table in the calibration file format.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.radii_mm.len() * 24);
        out.push_str(CALIBRATION_HEADER);
        out.push('\n');
        for (theta, r) in self.entries() {
            let _ = writeln!(out, "{theta},{r}");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the calibration file format from a string.
    pub fn parse(text: &str) -> Result<Self, CalibrationError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        match records.next() {
            Some(Ok(header))
                if header.len() == 2 && &header[0] == "theta_deg" && &header[1] == "r_mm" => {}
            Some(Err(e)) => {
                return Err(CalibrationError::Parse {
                    line: 1,
                    message: e.to_string(),
                })
            }
            _ => return Err(CalibrationError::MissingHeader),
        }
        let mut entries = Vec::new();
        for (i, rec) in records.enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| CalibrationError::Parse {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != 2 {
                return Err(CalibrationError::Parse {
                    line,
                    message: format!("expected 2 fields, found {}", rec.len()),
                });
            }
            let field = |k: usize| {
                rec[k].parse::<f64>().map_err(|e| CalibrationError::Parse {
                    line,
                    message: format!("`{}`: {e}", &rec[k]),
                })
            };
            entries.push((field(0)?, field(1)?));
        }
        Self::from_entries(&entries)
    }
}

/// Reads a calibration lookup table from disk.
pub fn load_calibration(path: impl AsRef<Path>) -> Result<CalibrationTable, CalibrationError> {
    let text = std::fs::read_to_string(path)?;
    CalibrationTable::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equisolid_mm(theta: f64) -> f64 {
        2.0 * 1.8 * (theta / 2.0).sin()
    }

    #[test]
    fn sampled_equisolid_has_expected_rows() {
        let table = CalibrationTable::sample(0.01, 92.5, equisolid_mm).unwrap();
        assert_eq!(table.len(), 9251);
        assert!((table.max_theta_deg() - 92.5).abs() < 1e-9);
    }

    #[test]
    fn lookup_is_exact_at_nodes() {
        let table = CalibrationTable::sample(0.5, 90.0, equisolid_mm).unwrap();
        let r = table.radius_mm(45.0).unwrap();
        assert_eq!(r, equisolid_mm(45f64.to_radians()));
        assert_eq!(table.theta_deg(r).unwrap(), 45.0);
    }

    #[test]
    fn lookup_outside_table_is_none() {
        let table = CalibrationTable::sample(1.0, 10.0, equisolid_mm).unwrap();
        assert!(table.radius_mm(10.5).is_none());
        assert!(table.radius_mm(-0.1).is_none());
        assert!(table.theta_deg(table.max_radius_mm() * 1.01).is_none());
    }

    #[test]
    fn parse_round_trip() {
        let table = CalibrationTable::sample(0.25, 20.0, equisolid_mm).unwrap();
        let back = CalibrationTable::parse(&table.to_csv()).unwrap();
        assert_eq!(back.len(), table.len());
        for ((ta, ra), (tb, rb)) in table.entries().zip(back.entries()) {
            assert!((ta - tb).abs() < 1e-12);
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(
            CalibrationTable::parse(""),
            Err(CalibrationError::MissingHeader)
        ));
        assert!(matches!(
            CalibrationTable::parse("theta_deg,r_mm\n"),
            Err(CalibrationError::TooShort(0))
        ));
    }

    #[test]
    fn decreasing_radius_is_rejected() {
        let text = "theta_deg,r_mm\n0,0\n1,0.5\n2,0.4\n3,0.9\n";
        assert!(matches!(
            CalibrationTable::parse(text),
            Err(CalibrationError::NotMonotone { row: 2 })
        ));
    }

    #[test]
    fn non_uniform_step_is_rejected() {
        let text = "theta_deg,r_mm\n0,0\n1,0.5\n2.5,0.9\n3,1.0\n";
        assert!(matches!(
            CalibrationTable::parse(text),
            Err(CalibrationError::NonUniformStep { .. })
        ));
    }

    #[test]
    fn garbage_is_a_parse_error() {
        let text = "theta_deg,r_mm\n0,0\n1,abc\n";
        assert!(matches!(
            CalibrationTable::parse(text),
            Err(CalibrationError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn missing_origin_is_rejected() {
        let text = "theta_deg,r_mm\n0,0.1\n1,0.5\n";
        assert!(matches!(
            CalibrationTable::parse(text),
            Err(CalibrationError::BadOrigin)
        ));
    }
}
