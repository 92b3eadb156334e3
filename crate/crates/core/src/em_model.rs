//! Far-field magnetic dipole interaction and translational n-body dynamics.
//!
//! Each satellite is a point mass carrying a magnetic moment `u_i`. The force
//! that satellite `j` exerts on satellite `i` is
//!
//! ```text
//! F_ij = c0 / |r_ij|^4 * f(r_ij, u_i, u_j),     c0 = 3 mu0 / (4 pi)
//! ```
//!
//! where `f` is the dipole *shape function* computed by [`force_shape`]. The
//! shape depends on `r_ij` only through its direction, is bilinear in the two
//! moments and odd under `(r, u_i, u_j) -> (-r, u_j, u_i)`, which is what makes
//! the intersatellite forces equal and opposite.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Physical vector resolved in the inertial frame.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Vacuum permeability, N/A².
pub const MU0: f64 = 4.0 * PI * 1e-7;

/// Dipole force constant `3 mu0 / (4 pi)`, N/A² (equal to 3e-7 up to rounding).
pub const C0: f64 = 3.0 * MU0 / (4.0 * PI);

/// Separations below this are rejected instead of producing unbounded forces.
pub const MIN_SEPARATION: f64 = 1e-6;

/// The two electromagnetic constants used by the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConsts {
    pub mu0: f64,
    pub c0: f64,
}

impl Default for PhysConsts {
    fn default() -> Self {
        Self { mu0: MU0, c0: C0 }
    }
}

/// Translational state of one satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteBody {
    /// kg
    pub mass: f64,
    /// m
    pub position: Vec3,
    /// m/s
    pub velocity: Vec3,
    /// Linear damping coefficient, N·s/m. Models rail friction on the testbed.
    pub damping: f64,
}

impl SatelliteBody {
    pub fn new(mass: f64, position: Vec3, velocity: Vec3, damping: f64) -> Result<Self> {
        let body = Self {
            mass,
            position,
            velocity,
            damping,
        };
        body.validate()?;
        Ok(body)
    }

    /// A body at rest with no damping.
    pub fn at_rest(mass: f64, position: Vec3) -> Result<Self> {
        Self::new(mass, position, Vec3::zeros(), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::invalid("satellite body", format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::invalid(
                "satellite body",
                format!("damping must be >= 0, got {}", self.damping),
            ));
        }
        Ok(())
    }

    pub fn momentum(&self) -> Vec3 {
        self.velocity * self.mass
    }
}

fn unit(r: &Vec3) -> Result<(Vec3, f64)> {
    let norm = r.norm();
    if !(norm >= MIN_SEPARATION) {
        return Err(Error::SingularSeparation {
            separation: norm,
            min: MIN_SEPARATION,
        });
    }
    Ok((r / norm, norm))
}

/// Dipole force shape `f(r, u_i, u_j)`.
///
/// `(u_j·r̂) u_i + (u_i·r̂) u_j + [(u_i·u_j) − 5 (u_i·r̂)(u_j·r̂)] r̂`
pub fn force_shape(r: &Vec3, ui: &Vec3, uj: &Vec3) -> Result<Vec3> {
    let (rhat, _) = unit(r)?;
    Ok(shape_unchecked(&rhat, ui, uj))
}

#[inline]
fn shape_unchecked(rhat: &Vec3, ui: &Vec3, uj: &Vec3) -> Vec3 {
    let ai = ui.dot(rhat);
    let aj = uj.dot(rhat);
    ui * aj + uj * ai + rhat * (ui.dot(uj) - 5.0 * ai * aj)
}

/// Force (N) on satellite `i` from satellite `j` separated by `r = r_i − r_j`.
pub fn intersat_force(r: &Vec3, ui: &Vec3, uj: &Vec3) -> Result<Vec3> {
    let (rhat, norm) = unit(r)?;
    Ok(shape_unchecked(&rhat, ui, uj) * (C0 / norm.powi(4)))
}

/// Acceleration of satellite `i` under the instantaneous dipole forces from
/// every other satellite, plus its own linear damping.
///
/// All pairs couple physically, whether or not they share a control edge.
pub fn acceleration(i: usize, bodies: &[SatelliteBody], moments: &[Vec3]) -> Result<Vec3> {
    if i >= bodies.len() {
        return Err(Error::Contract(format!(
            "satellite index {i} out of range for {} bodies",
            bodies.len()
        )));
    }
    if moments.len() != bodies.len() {
        return Err(Error::Contract(format!(
            "{} moments supplied for {} bodies",
            moments.len(),
            bodies.len()
        )));
    }
    let me = &bodies[i];
    let mut force = Vec3::zeros();
    for (j, other) in bodies.iter().enumerate() {
        if j == i {
            continue;
        }
        force += intersat_force(&(me.position - other.position), &moments[i], &moments[j])?;
    }
    Ok((force - me.velocity * me.damping) / me.mass)
}

/// Accelerations of all bodies at once.
///
/// Each unordered pair is evaluated a single time and applied with opposite
/// signs, so `Σ m_i a_i` cancels to rounding when damping is zero.
pub(crate) fn accelerations_into(
    positions: &[Vec3],
    velocities: &[Vec3],
    masses: &[f64],
    damping: &[f64],
    moments: &[Vec3],
    out: &mut [Vec3],
) -> std::result::Result<(), (usize, usize, f64)> {
    let n = positions.len();
    for (k, o) in out.iter_mut().enumerate() {
        *o = -velocities[k] * damping[k];
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let r = positions[i] - positions[j];
            let norm = r.norm();
            if !(norm >= MIN_SEPARATION) {
                return Err((i, j, norm));
            }
            let f = shape_unchecked(&(r / norm), &moments[i], &moments[j]) * (C0 / norm.powi(4));
            out[i] += f;
            out[j] -= f;
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        *o /= masses[k];
    }
    Ok(())
}
