//! Core domain types: CSI vectors, band geometry, activity labels and the
//! SRC dictionary.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency layout of a CSI measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDescriptor {
    pub center_freq_mhz: f64,
    pub total_bandwidth_mhz: f64,
    pub num_subcarriers: usize,
}

impl BandDescriptor {
    pub fn new(center_freq_mhz: f64, total_bandwidth_mhz: f64, num_subcarriers: usize) -> Result<Self> {
        let band = Self {
            center_freq_mhz,
            total_bandwidth_mhz,
            num_subcarriers,
        };
        band.validate()?;
        Ok(band)
    }

    /// 320 sub-carriers over 125 MHz centred at 5.8 GHz.
    pub fn wasp_5800() -> Self {
        Self {
            center_freq_mhz: 5800.0,
            total_bandwidth_mhz: 125.0,
            num_subcarriers: 320,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers == 0 {
            return Err(Error::Config("band must have at least one sub-carrier".into()));
        }
        if !(self.total_bandwidth_mhz.is_finite() && self.total_bandwidth_mhz > 0.0) {
            return Err(Error::Config(format!(
                "band width must be positive, got {}",
                self.total_bandwidth_mhz
            )));
        }
        if !self.center_freq_mhz.is_finite() {
            return Err(Error::Config("band centre frequency must be finite".into()));
        }
        Ok(())
    }

    pub fn spacing_mhz(&self) -> f64 {
        self.total_bandwidth_mhz / self.num_subcarriers as f64
    }

    pub fn lower_edge_mhz(&self) -> f64 {
        self.center_freq_mhz - self.total_bandwidth_mhz / 2.0
    }

    /// Centre frequency of sub-carrier `k`.
    pub fn subcarrier_freq_mhz(&self, k: usize) -> f64 {
        self.lower_edge_mhz() + (k as f64 + 0.5) * self.spacing_mhz()
    }
}

/// One packet's complex channel response, one value per sub-carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiVector {
    values: Vec<Complex64>,
    band: BandDescriptor,
}

impl CsiVector {
    pub fn new(values: Vec<Complex64>, band: BandDescriptor) -> Result<Self> {
        band.validate()?;
        if values.len() != band.num_subcarriers {
            return Err(Error::Dimension {
                expected: band.num_subcarriers,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Range(format!("non-finite CSI value at sub-carrier {i}")));
        }
        Ok(Self { values, band })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn band(&self) -> &BandDescriptor {
        &self.band
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub csi: CsiVector,
    pub snr_db: f64,
    pub seq: u64,
}

impl Sample {
    pub fn new(csi: CsiVector, snr_db: f64, seq: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::Range(format!("SNR must be finite, got {snr_db}")));
        }
        Ok(Self { csi, snr_db, seq })
    }
}

/// Location-oriented activity classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityClass {
    /// Empty room.
    E,
    /// Lying on the bed (bedroom).
    L,
    /// Sitting in the bedroom.
    SiB,
    /// Sitting in the living room.
    SiL,
    /// Standing in the bedroom.
    StB,
    /// Standing in the living room.
    StL,
    /// Walking in the bedroom.
    WB,
    /// Walking in the living room.
    WL,
}

impl ActivityClass {
    /// All classes in the fixed order used for dictionary layout and tie-breaks.
    pub const ALL: [ActivityClass; 8] = [
        ActivityClass::E,
        ActivityClass::L,
        ActivityClass::SiB,
        ActivityClass::SiL,
        ActivityClass::StB,
        ActivityClass::StL,
        ActivityClass::WB,
        ActivityClass::WL,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            ActivityClass::E => "E",
            ActivityClass::L => "L",
            ActivityClass::SiB => "SiB",
            ActivityClass::SiL => "SiL",
            ActivityClass::StB => "StB",
            ActivityClass::StL => "StL",
            ActivityClass::WB => "WB",
            ActivityClass::WL => "WL",
        }
    }

    pub fn is_walking(self) -> bool {
        matches!(self, ActivityClass::WB | ActivityClass::WL)
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ActivityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown activity class '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub sample: Sample,
    pub label: ActivityClass,
}

/// Contiguous column range of one class inside a [`Dictionary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBlock {
    pub class: ActivityClass,
    pub start: usize,
    pub count: usize,
}

impl ClassBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.count
    }
}

/// Training vectors as columns, grouped by class in [`ActivityClass::ALL`] order.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: DMatrix<Complex64>,
    blocks: Vec<ClassBlock>,
}

impl Dictionary {
    /// Builds a dictionary from labelled column vectors.
    ///
    /// Columns keep their relative input order within each class. With
    /// `normalize`, every column is scaled to unit Euclidean norm and a
    /// zero column is rejected.
    pub fn from_columns(columns: &[(ActivityClass, Vec<Complex64>)], normalize: bool) -> Result<Self> {
        let rows = match columns.first() {
            Some((_, v)) => v.len(),
            None => return Err(Error::EmptyInput("no training vectors".into())),
        };
        if rows == 0 {
            return Err(Error::EmptyInput("training vectors have no entries".into()));
        }
        if let Some((_, v)) = columns.iter().find(|(_, v)| v.len() != rows) {
            return Err(Error::Dimension {
                expected: rows,
                found: v.len(),
            });
        }

        let mut atoms = DMatrix::<Complex64>::zeros(rows, columns.len());
        let mut blocks = Vec::new();
        let mut col = 0;
        for class in ActivityClass::ALL {
            let start = col;
            for (index, (_, values)) in columns.iter().enumerate().filter(|(_, (c, _))| *c == class) {
                let mut column = DVector::from_column_slice(values);
                if normalize {
                    let norm = column.norm();
                    if norm == 0.0 {
                        return Err(Error::DegenerateAtom { index });
                    }
                    column.unscale_mut(norm);
                }
                atoms.set_column(col, &column);
                col += 1;
            }
            if col > start {
                blocks.push(ClassBlock {
                    class,
                    start,
                    count: col - start,
                });
            }
        }
        Ok(Self { atoms, blocks })
    }

    pub fn atoms(&self) -> &DMatrix<Complex64> {
        &self.atoms
    }

    pub fn blocks(&self) -> &[ClassBlock] {
        &self.blocks
    }

    pub fn classes(&self) -> Vec<ActivityClass> {
        self.blocks.iter().map(|b| b.class).collect()
    }

    pub fn rows(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn columns(&self) -> usize {
        self.atoms.ncols()
    }
}

/// Dictionary over the raw CSI values of `training`.
pub fn build_dictionary(training: &[LabeledSample], normalize: bool) -> Result<Dictionary> {
    let columns: Vec<_> = training
        .iter()
        .map(|s| (s.label, s.sample.csi.values().to_vec()))
        .collect();
    Dictionary::from_columns(&columns, normalize)
}

/// Solution of the sparse coding problem, one coefficient per dictionary column.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(pub DVector<Complex64>);

impl CoefficientVector {
    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sum of coefficient moduli.
    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm()).sum()
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    /// Copy with every coefficient outside `block` set to zero.
    pub fn masked(&self, block: &ClassBlock) -> Self {
        let mut out = DVector::zeros(self.0.len());
        for j in block.range() {
            out[j] = self.0[j];
        }
        Self(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_classes_two_samples_give_contiguous_offsets() {
        let cols = vec![
            (ActivityClass::WB, vec![c(1.0, 0.0), c(0.0, 1.0)]),
            (ActivityClass::E, vec![c(2.0, 0.0), c(0.0, 0.0)]),
            (ActivityClass::WB, vec![c(0.0, 3.0), c(4.0, 0.0)]),
            (ActivityClass::E, vec![c(0.0, 0.0), c(1.0, 1.0)]),
        ];
        let d = Dictionary::from_columns(&cols, true).unwrap();
        assert_eq!(d.columns(), 4);
        assert_eq!(
            d.blocks(),
            &[
                ClassBlock { class: ActivityClass::E, start: 0, count: 2 },
                ClassBlock { class: ActivityClass::WB, start: 2, count: 2 },
            ]
        );
        // E columns first, in input order
        assert!((d.atoms()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((d.atoms()[(0, 3)] - c(0.0, 0.6)).norm() < 1e-15);
        for j in 0..4 {
            assert!((d.atoms().column(j).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_vector_is_degenerate_when_normalizing() {
        let cols = vec![(ActivityClass::E, vec![c(0.0, 0.0); 3])];
        assert!(matches!(
            Dictionary::from_columns(&cols, true),
            Err(Error::DegenerateAtom { index: 0 })
        ));
        assert!(Dictionary::from_columns(&cols, false).is_ok());
    }

    #[test]
    fn empty_training_is_rejected() {
        assert!(matches!(Dictionary::from_columns(&[], true), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let cols = vec![
            (ActivityClass::E, vec![c(1.0, 0.0); 3]),
            (ActivityClass::L, vec![c(1.0, 0.0); 2]),
        ];
        assert!(matches!(
            Dictionary::from_columns(&cols, true),
            Err(Error::Dimension { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn class_labels_round_trip_and_walking_predicate() {
        for class in ActivityClass::ALL {
            assert_eq!(class.label().parse::<ActivityClass>().unwrap(), class);
            assert_eq!(ActivityClass::from_index(class.index()), Some(class));
        }
        let walking: Vec<_> = ActivityClass::ALL.iter().filter(|c| c.is_walking()).collect();
        assert_eq!(walking, vec![&ActivityClass::WB, &ActivityClass::WL]);
    }

    #[test]
    fn csi_vector_rejects_non_finite_and_wrong_length() {
        let band = BandDescriptor::new(5800.0, 20.0, 2).unwrap();
        assert!(CsiVector::new(vec![c(f64::NAN, 0.0), c(1.0, 0.0)], band).is_err());
        assert!(CsiVector::new(vec![c(1.0, 0.0)], band).is_err());
        assert!(BandDescriptor::new(5800.0, 0.0, 2).is_err());
        assert!(BandDescriptor::new(5800.0, 20.0, 0).is_err());
    }
}
