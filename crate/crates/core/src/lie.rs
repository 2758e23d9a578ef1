//! Minimal matrix Lie group layer: `R^n`, `SO(2)`, `SE(2)`, `SO(3)` and `SE(3)`.
//!
//! All perturbations are applied on the left, `X <- exp(xi^) X`, and tangent
//! vectors of the special Euclidean groups are ordered rotation first,
//! `xi = [xi_phi; xi_r]`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DVector, Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Tangent-space coordinates of a [`ManifoldElement`].
pub type Tangent = DVector<f64>;

/// Below this angle the exp/log coefficient functions switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-7;

/// Rotations whose angle is within this distance of pi have no unique logarithm.
const PI_MARGIN: f64 = 1e-9;

/// Tolerance used when validating rotation matrices handed in by callers.
const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    RealVector(usize),
    SO2,
    SE2,
    SO3,
    SE3,
}

impl ManifoldKind {
    pub fn tangent_dim(self) -> usize {
        match self {
            ManifoldKind::RealVector(n) => n,
            ManifoldKind::SO2 => 1,
            ManifoldKind::SE2 | ManifoldKind::SO3 => 3,
            ManifoldKind::SE3 => 6,
        }
    }

    /// Size of the rotation block of the tangent vector (0 for `R^n`).
    pub fn rotation_dim(self) -> usize {
        match self {
            ManifoldKind::RealVector(_) => 0,
            ManifoldKind::SO2 | ManifoldKind::SE2 => 1,
            ManifoldKind::SO3 | ManifoldKind::SE3 => 3,
        }
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldKind::RealVector(n) => write!(f, "R^{n}"),
            ManifoldKind::SO2 => f.write_str("SO(2)"),
            ManifoldKind::SE2 => f.write_str("SE(2)"),
            ManifoldKind::SO3 => f.write_str("SO(3)"),
            ManifoldKind::SE3 => f.write_str("SE(3)"),
        }
    }
}

/// A state living on `R^n` or on one of the rotation/rigid-body groups.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldElement {
    RealVector(DVector<f64>),
    SO2(Matrix2<f64>),
    SE2 {
        rotation: Matrix2<f64>,
        translation: Vector2<f64>,
    },
    SO3(Matrix3<f64>),
    SE3 {
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    },
}

/// `phi^` for a planar rotation rate.
pub fn hat2(phi: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, -phi, phi, 0.0)
}

/// Skew-symmetric cross-product matrix.
pub fn hat3(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

fn so2_exp(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn so2_log(c: &Matrix2<f64>) -> Result<f64> {
    let theta = c[(1, 0)].atan2(c[(0, 0)]);
    if PI - theta.abs() < PI_MARGIN {
        return Err(Error::LogSingularity { angle: theta });
    }
    Ok(theta)
}

fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (
            theta.sin() / theta,
            (2.0 * (0.5 * theta).sin().powi(2)) / theta2,
        )
    };
    let k = hat3(phi);
    Matrix3::identity() + k * a + k * k * b
}

fn so3_log(c: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let skew = vee3(&(c - c.transpose()));
    let sin_theta = 0.5 * skew.norm();
    let cos_theta = 0.5 * (c.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if PI - theta < PI_MARGIN {
        return Err(Error::LogSingularity { angle: theta });
    }
    let scale = if theta < SMALL_ANGLE {
        0.5 * (1.0 + theta * theta / 6.0)
    } else {
        theta / (2.0 * theta.sin())
    };
    Ok(skew * scale)
}

/// Left Jacobian of SO(3) and its inverse.
fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (b, c) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (2.0 * (0.5 * theta).sin().powi(2)) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let k = hat3(phi);
    Matrix3::identity() + k * b + k * k * c
}

fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let d = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let k = hat3(phi);
    Matrix3::identity() - k * 0.5 + k * k * d
}

/// The `V` matrix of SE(2): `r = V(theta) rho`.
fn se2_v(theta: f64) -> Matrix2<f64> {
    let (a, b) = if theta.abs() < SMALL_ANGLE {
        (
            1.0 - theta * theta / 6.0,
            0.5 * theta - theta.powi(3) / 24.0,
        )
    } else {
        (
            theta.sin() / theta,
            (2.0 * (0.5 * theta).sin().powi(2)) / theta,
        )
    };
    Matrix2::new(a, -b, b, a)
}

fn check_rotation<const N: usize>(c: &nalgebra::SMatrix<f64, N, N>) -> Result<()>
where
    nalgebra::Const<N>: nalgebra::DimMin<nalgebra::Const<N>, Output = nalgebra::Const<N>>,
{
    let ortho = (c.transpose() * c - nalgebra::SMatrix::<f64, N, N>::identity()).norm();
    let det = c.determinant();
    if !ortho.is_finite() || ortho > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::InvalidRotation(format!(
            "|C^T C - I|_F = {ortho:e}, det = {det}"
        )));
    }
    Ok(())
}

fn check_len(xi: &Tangent, expected: usize) -> Result<()> {
    if xi.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: xi.len(),
        });
    }
    Ok(())
}

impl ManifoldElement {
    pub fn real(coords: &[f64]) -> Self {
        ManifoldElement::RealVector(DVector::from_column_slice(coords))
    }

    pub fn so2(rotation: Matrix2<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(ManifoldElement::SO2(rotation))
    }

    pub fn se2(rotation: Matrix2<f64>, translation: Vector2<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(ManifoldElement::SE2 {
            rotation,
            translation,
        })
    }

    pub fn so3(rotation: Matrix3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(ManifoldElement::SO3(rotation))
    }

    pub fn se3(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(ManifoldElement::SE3 {
            rotation,
            translation,
        })
    }

    pub fn identity(kind: ManifoldKind) -> Self {
        match kind {
            ManifoldKind::RealVector(n) => ManifoldElement::RealVector(DVector::zeros(n)),
            ManifoldKind::SO2 => ManifoldElement::SO2(Matrix2::identity()),
            ManifoldKind::SE2 => ManifoldElement::SE2 {
                rotation: Matrix2::identity(),
                translation: Vector2::zeros(),
            },
            ManifoldKind::SO3 => ManifoldElement::SO3(Matrix3::identity()),
            ManifoldKind::SE3 => ManifoldElement::SE3 {
                rotation: Matrix3::identity(),
                translation: Vector3::zeros(),
            },
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            ManifoldElement::RealVector(v) => ManifoldKind::RealVector(v.len()),
            ManifoldElement::SO2(_) => ManifoldKind::SO2,
            ManifoldElement::SE2 { .. } => ManifoldKind::SE2,
            ManifoldElement::SO3(_) => ManifoldKind::SO3,
            ManifoldElement::SE3 { .. } => ManifoldKind::SE3,
        }
    }

    pub fn tangent_dim(&self) -> usize {
        self.kind().tangent_dim()
    }

    /// Coordinates of a `R^n` element, `None` for group elements.
    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            ManifoldElement::RealVector(v) => Some(v),
            _ => None,
        }
    }

    /// Exponential map `exp(xi^)`; for `R^n` this is `xi` itself.
    pub fn exp(kind: ManifoldKind, xi: &Tangent) -> Result<Self> {
        check_len(xi, kind.tangent_dim())?;
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite tangent vector".into()));
        }
        Ok(match kind {
            ManifoldKind::RealVector(_) => ManifoldElement::RealVector(xi.clone()),
            ManifoldKind::SO2 => ManifoldElement::SO2(so2_exp(xi[0])),
            ManifoldKind::SE2 => {
                let rho = Vector2::new(xi[1], xi[2]);
                ManifoldElement::SE2 {
                    rotation: so2_exp(xi[0]),
                    translation: se2_v(xi[0]) * rho,
                }
            }
            ManifoldKind::SO3 => ManifoldElement::SO3(so3_exp(&Vector3::new(xi[0], xi[1], xi[2]))),
            ManifoldKind::SE3 => {
                let phi = Vector3::new(xi[0], xi[1], xi[2]);
                let rho = Vector3::new(xi[3], xi[4], xi[5]);
                ManifoldElement::SE3 {
                    rotation: so3_exp(&phi),
                    translation: so3_left_jacobian(&phi) * rho,
                }
            }
        })
    }

    /// Logarithm map, the inverse of [`ManifoldElement::exp`].
    pub fn log(&self) -> Result<Tangent> {
        Ok(match self {
            ManifoldElement::RealVector(v) => v.clone(),
            ManifoldElement::SO2(c) => DVector::from_element(1, so2_log(c)?),
            ManifoldElement::SE2 {
                rotation,
                translation,
            } => {
                let theta = so2_log(rotation)?;
                let rho = se2_v(theta)
                    .try_inverse()
                    .expect("SE(2) V matrix is invertible for |theta| < pi")
                    * translation;
                DVector::from_column_slice(&[theta, rho.x, rho.y])
            }
            ManifoldElement::SO3(c) => {
                let phi = so3_log(c)?;
                DVector::from_column_slice(phi.as_slice())
            }
            ManifoldElement::SE3 {
                rotation,
                translation,
            } => {
                let phi = so3_log(rotation)?;
                let rho = so3_left_jacobian_inv(&phi) * translation;
                DVector::from_iterator(6, phi.iter().chain(rho.iter()).copied())
            }
        })
    }

    fn same_kind(&self, other: &Self) -> Result<()> {
        if self.kind() != other.kind() {
            return Err(Error::KindMismatch(
                self.kind().to_string(),
                other.kind().to_string(),
            ));
        }
        Ok(())
    }

    /// Group product `self * other` (vector addition for `R^n`).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.same_kind(other)?;
        Ok(match (self, other) {
            (ManifoldElement::RealVector(a), ManifoldElement::RealVector(b)) => {
                ManifoldElement::RealVector(a + b)
            }
            (ManifoldElement::SO2(a), ManifoldElement::SO2(b)) => ManifoldElement::SO2(a * b),
            (
                ManifoldElement::SE2 {
                    rotation: ca,
                    translation: ra,
                },
                ManifoldElement::SE2 {
                    rotation: cb,
                    translation: rb,
                },
            ) => ManifoldElement::SE2 {
                rotation: ca * cb,
                translation: ca * rb + ra,
            },
            (ManifoldElement::SO3(a), ManifoldElement::SO3(b)) => ManifoldElement::SO3(a * b),
            (
                ManifoldElement::SE3 {
                    rotation: ca,
                    translation: ra,
                },
                ManifoldElement::SE3 {
                    rotation: cb,
                    translation: rb,
                },
            ) => ManifoldElement::SE3 {
                rotation: ca * cb,
                translation: ca * rb + ra,
            },
            _ => unreachable!("kinds checked above"),
        })
    }

    pub fn inverse(&self) -> Self {
        match self {
            ManifoldElement::RealVector(v) => ManifoldElement::RealVector(-v),
            ManifoldElement::SO2(c) => ManifoldElement::SO2(c.transpose()),
            ManifoldElement::SE2 {
                rotation,
                translation,
            } => ManifoldElement::SE2 {
                rotation: rotation.transpose(),
                translation: -(rotation.transpose() * translation),
            },
            ManifoldElement::SO3(c) => ManifoldElement::SO3(c.transpose()),
            ManifoldElement::SE3 {
                rotation,
                translation,
            } => ManifoldElement::SE3 {
                rotation: rotation.transpose(),
                translation: -(rotation.transpose() * translation),
            },
        }
    }

    /// Left perturbation `exp(xi^) * self`; `self + xi` on `R^n`.
    pub fn oplus(&self, xi: &Tangent) -> Result<Self> {
        let delta = Self::exp(self.kind(), xi)?;
        delta.compose(self)
    }

    /// `log(self * other^-1)`, so that `other.oplus(self.ominus(other)) == self`.
    pub fn ominus(&self, other: &Self) -> Result<Tangent> {
        self.same_kind(other)?;
        self.compose(&other.inverse())?.log()
    }

    /// Deviation of the rotation block from orthonormality, `|C^T C - I|_F`
    /// and `|det C - 1|`; both zero for `R^n`.
    pub fn orthonormality_error(&self) -> (f64, f64) {
        fn err<const N: usize>(c: &nalgebra::SMatrix<f64, N, N>) -> (f64, f64)
        where
            nalgebra::Const<N>: nalgebra::DimMin<nalgebra::Const<N>, Output = nalgebra::Const<N>>,
        {
            (
                (c.transpose() * c - nalgebra::SMatrix::<f64, N, N>::identity()).norm(),
                (c.determinant() - 1.0).abs(),
            )
        }
        match self {
            ManifoldElement::RealVector(_) => (0.0, 0.0),
            ManifoldElement::SO2(c) | ManifoldElement::SE2 { rotation: c, .. } => err(c),
            ManifoldElement::SO3(c) | ManifoldElement::SE3 { rotation: c, .. } => err(c),
        }
    }
}

/// A value that can be perturbed along its tangent space.
///
/// Implemented for single elements, stacked states and plain vectors so the
/// finite-difference oracles and the solver can share the same retraction.
pub trait Retract: Clone {
    fn tangent_dim(&self) -> usize;
    fn retract(&self, delta: &Tangent) -> Result<Self>;
}

impl Retract for ManifoldElement {
    fn tangent_dim(&self) -> usize {
        ManifoldElement::tangent_dim(self)
    }

    fn retract(&self, delta: &Tangent) -> Result<Self> {
        self.oplus(delta)
    }
}

impl Retract for Vec<ManifoldElement> {
    fn tangent_dim(&self) -> usize {
        self.iter().map(|x| x.tangent_dim()).sum()
    }

    fn retract(&self, delta: &Tangent) -> Result<Self> {
        check_len(delta, Retract::tangent_dim(self))?;
        let mut offset = 0;
        self.iter()
            .map(|x| {
                let d = x.tangent_dim();
                let out = x.oplus(&delta.rows(offset, d).into_owned());
                offset += d;
                out
            })
            .collect()
    }
}

impl Retract for DVector<f64> {
    fn tangent_dim(&self) -> usize {
        self.len()
    }

    fn retract(&self, delta: &Tangent) -> Result<Self> {
        check_len(delta, self.len())?;
        Ok(self + delta)
    }
}
