//! Study records and dataset validation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;

/// One study: an observed effect vector and its reported covariance.
#[derive(Clone, Debug)]
pub struct StudyObservation {
    pub x: DVector<f64>,
    pub u: SpdMatrix,
}

/// An ordered collection of study observations sharing a dimension.
///
/// Requires `n >= 2` and `n >= p`; the latter keeps residual scatter matrices
/// positive definite almost surely, which the Psi proposal relies on.
#[derive(Clone, Debug)]
pub struct Dataset {
    p: usize,
    studies: Vec<StudyObservation>,
}

impl Dataset {
    pub fn new(studies: Vec<StudyObservation>) -> Result<Self> {
        if studies.len() < 2 {
            return Err(Error::TooFewStudies {
                min: 2,
                got: studies.len(),
            });
        }
        let p = studies[0].x.len();
        for (i, s) in studies.iter().enumerate() {
            if s.x.len() != p || s.u.dim() != p {
                return Err(Error::DimensionMismatch(format!(
                    "study {} has dimension {}x{}, expected {p}",
                    i + 1,
                    s.x.len(),
                    s.u.dim()
                )));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "study {} has a non-finite observation",
                    i + 1
                )));
            }
        }
        if studies.len() < p {
            return Err(Error::TooFewStudies {
                min: p,
                got: studies.len(),
            });
        }
        Ok(Dataset { p, studies })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.studies.len()
    }

    pub fn studies(&self) -> &[StudyObservation] {
        &self.studies
    }

    /// Arithmetic mean of the observation vectors.
    pub fn sample_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.p);
        for s in &self.studies {
            m += &s.x;
        }
        m / self.n() as f64
    }
}

/// Within-study covariance as parsed from an input record.
#[derive(Clone, Debug)]
pub enum RawCovariance {
    /// Bivariate standard-deviation/correlation triple `(sd1, rho, sd2)`.
    SdCorr { sd1: f64, rho: f64, sd2: f64 },
    /// Lower triangle of the covariance, row-major: `u11, u21, u22, u31, ...`.
    LowerTriangle(Vec<f64>),
}

/// One parsed input record before validation.
#[derive(Clone, Debug)]
pub struct RawRecord {
    pub label: String,
    pub x: Vec<f64>,
    pub cov: RawCovariance,
}

/// Validate parsed records into a `Dataset`.
///
/// Checks symmetry/positive definiteness of every covariance and dimensional
/// consistency across studies. The SD/correlation form expands with
/// `u12 = rho * sd1 * sd2`.
pub fn validate_dataset(raw: &[RawRecord]) -> Result<Dataset> {
    if raw.is_empty() {
        return Err(Error::TooFewStudies { min: 2, got: 0 });
    }
    let mut studies = Vec::with_capacity(raw.len());
    for (i, rec) in raw.iter().enumerate() {
        let p = rec.x.len();
        let cov = match &rec.cov {
            RawCovariance::SdCorr { sd1, rho, sd2 } => {
                if p != 2 {
                    return Err(Error::DimensionMismatch(format!(
                        "record {}: sd/correlation form requires 2 effects, got {p}",
                        i + 1
                    )));
                }
                let c = rho * sd1 * sd2;
                DMatrix::from_row_slice(2, 2, &[sd1 * sd1, c, c, sd2 * sd2])
            }
            RawCovariance::LowerTriangle(tri) => {
                if tri.len() != p * (p + 1) / 2 {
                    return Err(Error::DimensionMismatch(format!(
                        "record {}: expected {} covariance entries for p={p}, got {}",
                        i + 1,
                        p * (p + 1) / 2,
                        tri.len()
                    )));
                }
                let mut m = DMatrix::zeros(p, p);
                let mut k = 0;
                for r in 0..p {
                    for c in 0..=r {
                        m[(r, c)] = tri[k];
                        m[(c, r)] = tri[k];
                        k += 1;
                    }
                }
                m
            }
        };
        let u = SpdMatrix::from_matrix(cov).map_err(|e| match e {
            Error::NonPositiveDefinite { .. } => Error::NonPositiveDefinite { index: Some(i + 1) },
            other => other,
        })?;
        studies.push(StudyObservation {
            x: DVector::from_row_slice(&rec.x),
            u,
        });
    }
    Dataset::new(studies)
}

/// Ten studies of hypertension treatment effects on systolic and diastolic
/// blood pressure, with reported within-study covariances. Bundled as the
/// standard worked example; the same records ship as `data/hypertension.csv`.
pub fn hypertension() -> Dataset {
    let rows: [(f64, f64, f64, f64, f64); 10] = [
        (-6.66, -2.99, 0.72, 0.78, 0.27),
        (-14.17, -7.87, 4.73, 0.45, 1.44),
        (-12.88, -6.01, 10.31, 0.59, 1.77),
        (-8.71, -5.11, 0.30, 0.77, 0.10),
        (-8.70, -4.64, 0.14, 0.66, 0.05),
        (-10.60, -5.56, 0.58, 0.49, 0.18),
        (-11.36, -3.98, 0.30, 0.50, 0.27),
        (-17.93, -6.54, 5.82, 0.61, 1.31),
        (-6.55, -2.08, 0.41, 0.45, 0.11),
        (-10.26, -3.49, 0.20, 0.51, 0.04),
    ];
    let raw: Vec<RawRecord> = rows
        .iter()
        .enumerate()
        .map(|(i, &(x1, x2, sd1, rho, sd2))| RawRecord {
            label: format!("{}", i + 1),
            x: vec![x1, x2],
            cov: RawCovariance::SdCorr { sd1, rho, sd2 },
        })
        .collect();
    validate_dataset(&raw).expect("bundled dataset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hypertension_shape_and_first_covariance() {
        let d = hypertension();
        assert_eq!(d.n(), 10);
        assert_eq!(d.p(), 2);
        let u1 = d.studies()[0].u.matrix();
        assert_abs_diff_eq!(u1[(0, 0)], 0.5184, epsilon = 1e-12);
        assert_abs_diff_eq!(u1[(0, 1)], 0.78 * 0.72 * 0.27, epsilon = 1e-12);
        assert_eq!(u1[(0, 1)], u1[(1, 0)]);
    }

    #[test]
    fn single_record_is_too_few() {
        let raw = vec![RawRecord {
            label: "1".into(),
            x: vec![0.0, 0.0],
            cov: RawCovariance::LowerTriangle(vec![1.0, 0.0, 1.0]),
        }];
        assert!(matches!(
            validate_dataset(&raw),
            Err(Error::TooFewStudies { min: 2, got: 1 })
        ));
    }

    #[test]
    fn correlation_out_of_range_is_not_pd() {
        let mut raw = Vec::new();
        for _ in 0..2 {
            raw.push(RawRecord {
                label: "s".into(),
                x: vec![0.0, 0.0],
                cov: RawCovariance::SdCorr {
                    sd1: 1.0,
                    rho: 1.5,
                    sd2: 1.0,
                },
            });
        }
        assert!(matches!(
            validate_dataset(&raw),
            Err(Error::NonPositiveDefinite { index: Some(1) })
        ));
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let raw = vec![
            RawRecord {
                label: "1".into(),
                x: vec![0.0, 0.0],
                cov: RawCovariance::LowerTriangle(vec![1.0, 0.0, 1.0]),
            },
            RawRecord {
                label: "2".into(),
                x: vec![0.0],
                cov: RawCovariance::LowerTriangle(vec![1.0]),
            },
        ];
        assert!(matches!(
            validate_dataset(&raw),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn fewer_studies_than_dimension_rejected() {
        // p = 3 with n = 2
        let tri = vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let raw: Vec<RawRecord> = (0..2)
            .map(|i| RawRecord {
                label: format!("{i}"),
                x: vec![0.0, 1.0, 2.0],
                cov: RawCovariance::LowerTriangle(tri.clone()),
            })
            .collect();
        assert!(matches!(
            validate_dataset(&raw),
            Err(Error::TooFewStudies { min: 3, got: 2 })
        ));
    }
}
