//! Unit-variance noise families.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean-zero, variance-one error law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseFamily {
    Normal,
    /// Student t with `dof > 2` degrees of freedom, rescaled by `sqrt((k-2)/k)`.
    StudentT { dof: f64 },
    /// `Exp(1) - 1`.
    CenteredExponential,
}

impl NoiseFamily {
    pub fn student_t(dof: f64) -> Result<Self> {
        if !(dof > 2.0) {
            return Err(Error::InvalidArgument(format!(
                "Student t needs more than 2 degrees of freedom, got {dof}"
            )));
        }
        Ok(NoiseFamily::StudentT { dof })
    }

    /// One draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseFamily::Normal => rng.sample(StandardNormal),
            NoiseFamily::StudentT { dof } => {
                let z: f64 = rng.sample(StandardNormal);
                let chi = ChiSquared::new(dof).expect("dof > 2").sample(rng);
                z / (chi / dof).sqrt() * ((dof - 2.0) / dof).sqrt()
            }
            NoiseFamily::CenteredExponential => {
                let u: f64 = rng.random();
                -(1.0 - u).ln() - 1.0
            }
        }
    }

    pub fn sample_vec<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| self.sample(rng))
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseFamily::Normal => write!(f, "normal"),
            NoiseFamily::StudentT { dof } => write!(f, "t{dof}"),
            NoiseFamily::CenteredExponential => write!(f, "exp"),
        }
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    /// Accepts `normal`, `exp`, and `t<k>` such as `t4` or `t8`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" | "gaussian" => Ok(NoiseFamily::Normal),
            "exp" | "exponential" => Ok(NoiseFamily::CenteredExponential),
            _ => match s.strip_prefix('t').map(str::parse::<f64>) {
                Some(Ok(dof)) => NoiseFamily::student_t(dof),
                _ => Err(Error::InvalidArgument(format!("unknown noise family '{s}'"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn moments(family: NoiseFamily, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = substream(seed, 0);
        let draws = family.sample_vec(n, &mut rng);
        let mean = draws.mean().unwrap();
        let var = draws.mapv(|v| (v - mean).powi(2)).sum() / n as f64;
        (mean, var)
    }

    #[test]
    fn unit_moments_for_every_family() {
        let n = 100_000;
        for family in [
            NoiseFamily::Normal,
            NoiseFamily::student_t(4.0).unwrap(),
            NoiseFamily::student_t(8.0).unwrap(),
            NoiseFamily::CenteredExponential,
        ] {
            let (mean, var) = moments(family, n, 11);
            assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "{family}: mean {mean}");
            assert!((var - 1.0).abs() <= 0.05, "{family}: var {var}");
        }
    }

    #[test]
    fn parses_family_names() {
        assert_eq!("normal".parse::<NoiseFamily>().unwrap(), NoiseFamily::Normal);
        assert_eq!("t4".parse::<NoiseFamily>().unwrap(), NoiseFamily::StudentT { dof: 4.0 });
        assert_eq!("exp".parse::<NoiseFamily>().unwrap(), NoiseFamily::CenteredExponential);
        assert!("t2".parse::<NoiseFamily>().is_err());
        assert!("cauchy".parse::<NoiseFamily>().is_err());
    }
}
