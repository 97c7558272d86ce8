//! Piecewise-constant anisotropic conductivity.

use nalgebra::Matrix2;

use crate::error::{FemError, Result};
use crate::mesh::Subdomain;

/// Conductivity `K_i` and resistivity `Lambda_i = K_i^{-1}` on the two
/// subdomains, plus the global scaling scalars of the stabilized forms.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    pub conductivity: [Matrix2<f64>; 2],
    pub resistivity: [Matrix2<f64>; 2],
    /// Induced infinity norm (max absolute row sum) over both subdomains.
    pub k_inf: f64,
    /// `1 / k_inf`.
    pub lambda: f64,
    /// Discontinuity strength; 1 for fields not built from the Crumpton family.
    pub gamma: f64,
}

fn check_spd(k: &Matrix2<f64>, which: &str) -> Result<()> {
    if !k.iter().all(|v| v.is_finite()) {
        return Err(FemError::InvalidMaterial(format!("{which} has non-finite entries")));
    }
    if (k[(0, 1)] - k[(1, 0)]).abs() > 1e-14 * k.abs().max() {
        return Err(FemError::InvalidMaterial(format!("{which} is not symmetric")));
    }
    if k[(0, 0)] <= 0.0 || k.determinant() <= 0.0 {
        return Err(FemError::InvalidMaterial(format!(
            "{which} is not positive definite"
        )));
    }
    Ok(())
}

fn row_sum_norm(k: &Matrix2<f64>) -> f64 {
    (k[(0, 0)].abs() + k[(0, 1)].abs()).max(k[(1, 0)].abs() + k[(1, 1)].abs())
}

impl MaterialField {
    pub fn new(k1: Matrix2<f64>, k2: Matrix2<f64>) -> Result<Self> {
        check_spd(&k1, "K1")?;
        check_spd(&k2, "K2")?;
        let inv = |k: &Matrix2<f64>| {
            k.try_inverse()
                .ok_or_else(|| FemError::InvalidMaterial("singular conductivity".into()))
        };
        let resistivity = [inv(&k1)?, inv(&k2)?];
        let k_inf = row_sum_norm(&k1).max(row_sum_norm(&k2));
        Ok(MaterialField {
            conductivity: [k1, k2],
            resistivity,
            k_inf,
            lambda: 1.0 / k_inf,
            gamma: 1.0,
        })
    }

    pub fn homogeneous(k: Matrix2<f64>) -> Result<Self> {
        Self::new(k, k)
    }

    pub fn identity() -> Self {
        Self::homogeneous(Matrix2::identity()).expect("identity is SPD")
    }

    pub fn tensors_at(&self, subdomain: Subdomain) -> (&Matrix2<f64>, &Matrix2<f64>) {
        let i = subdomain.index();
        (&self.conductivity[i], &self.resistivity[i])
    }

    pub fn is_homogeneous(&self) -> bool {
        self.conductivity[0] == self.conductivity[1]
    }
}

/// `K = I` for `x < 0` and `K = gamma [[2, 1], [1, 2]]` for `x > 0`.
pub fn crumpton_material(gamma: f64) -> Result<MaterialField> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(FemError::InvalidMaterial(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let mut field = MaterialField::new(
        Matrix2::identity(),
        Matrix2::new(2.0, 1.0, 1.0, 2.0) * gamma,
    )?;
    field.gamma = gamma;
    Ok(field)
}
