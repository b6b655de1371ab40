//! Critical-plane search for a thin-walled tube under in-phase or
//! out-of-phase sinusoidal tension-torsion.
//!
//! Every strain and stress component on a plane at angle `theta` is a
//! linear combination of `sin(wt)` and `sin(wt - phi)`, so each is a
//! sinusoid of the same frequency. Its amplitude over a cycle is the
//! modulus of the combined phasor, which is what the sweep evaluates.

use super::MaterialProperties;

/// Surface load amplitudes. Strains are fractions, stresses MPa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadState {
    pub eps_a: f64,
    pub gamma_a: f64,
    pub sigma_a: f64,
    pub tau_a: f64,
    pub phase_deg: f64,
}

impl LoadState {
    /// Same load with every strain and stress amplitude multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        LoadState {
            eps_a: self.eps_a * k,
            gamma_a: self.gamma_a * k,
            sigma_a: self.sigma_a * k,
            tau_a: self.tau_a * k,
            phase_deg: self.phase_deg,
        }
    }

    /// Strain amplitudes multiplied by `k`, stresses unchanged.
    pub fn strains_scaled(&self, k: f64) -> Self {
        LoadState { eps_a: self.eps_a * k, gamma_a: self.gamma_a * k, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPlaneResult {
    /// Engineering shear strain amplitude on the critical plane.
    pub max_shear_amp: f64,
    /// Normal strain range on the critical plane.
    pub normal_strain_range: f64,
    /// Peak normal stress on the critical plane, MPa.
    pub max_normal_stress: f64,
    pub plane_angle_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneResolution {
    pub step_deg: f64,
    /// Subdivisions of one sweep step used to refine the best plane.
    pub refine: usize,
}

impl Default for PlaneResolution {
    fn default() -> Self {
        PlaneResolution { step_deg: 0.5, refine: 1000 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Phasor {
    re: f64,
    im: f64,
}

impl Phasor {
    /// `a sin(wt) + b sin(wt - phi)`
    fn mix(a: f64, b: f64, phi: f64) -> Self {
        Phasor { re: a + b * phi.cos(), im: -b * phi.sin() }
    }

    fn amp(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Damage drivers on the plane at `theta_deg`.
pub fn plane_quantities(load: &LoadState, nu: f64, theta_deg: f64) -> CriticalPlaneResult {
    let phi = load.phase_deg.to_radians();
    let t2 = 2.0 * theta_deg.to_radians();
    let (s2, c2) = t2.sin_cos();
    let shear = Phasor::mix(-(1.0 + nu) * load.eps_a * s2, load.gamma_a * c2, phi);
    let normal = Phasor::mix(load.eps_a * ((1.0 - nu) / 2.0 + (1.0 + nu) / 2.0 * c2), load.gamma_a / 2.0 * s2, phi);
    let stress = Phasor::mix(load.sigma_a * (1.0 + c2) / 2.0, load.tau_a * s2, phi);
    CriticalPlaneResult {
        max_shear_amp: shear.amp(),
        normal_strain_range: 2.0 * normal.amp(),
        max_normal_stress: stress.amp(),
        plane_angle_deg: theta_deg.rem_euclid(180.0),
    }
}

/// `a` beats `b`: larger shear amplitude, ties toward larger normal strain
/// range.
fn better(a: &CriticalPlaneResult, b: &CriticalPlaneResult) -> bool {
    let tol = 1e-12 * a.max_shear_amp.max(b.max_shear_amp);
    if (a.max_shear_amp - b.max_shear_amp).abs() > tol {
        return a.max_shear_amp > b.max_shear_amp;
    }
    a.normal_strain_range > b.normal_strain_range * (1.0 + 1e-12)
}

/// The plane of maximum shear strain amplitude, using the elastic Poisson
/// ratio for the transverse strains.
pub fn critical_plane(load: &LoadState, mat: &MaterialProperties, res: PlaneResolution) -> CriticalPlaneResult {
    critical_plane_with_nu(load, mat.nu_e, res)
}

pub fn critical_plane_with_nu(load: &LoadState, nu: f64, res: PlaneResolution) -> CriticalPlaneResult {
    let n = (180.0 / res.step_deg).round().max(1.0) as usize;
    let step = 180.0 / n as f64;
    let mut best = plane_quantities(load, nu, 0.0);
    for i in 1..n {
        let q = plane_quantities(load, nu, i as f64 * step);
        if better(&q, &best) {
            best = q;
        }
    }
    if res.refine > 1 {
        let center = best.plane_angle_deg;
        let fine = step / res.refine as f64;
        let r = res.refine as i64;
        for j in -r..=r {
            let q = plane_quantities(load, nu, center + j as f64 * fine);
            if better(&q, &best) {
                best = q;
            }
        }
    }
    best
}
