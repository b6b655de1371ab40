use std::path::Path;

use serde::Deserialize;

use super::BaselineError;

/// Monotonic, uniaxial and torsional fatigue properties of one material at
/// one temperature. Moduli in GPa, stresses in MPa, strains as fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialProperties {
    pub name: String,
    pub e_gpa: f64,
    pub g_gpa: f64,
    pub sigma_y: f64,
    pub nu_e: f64,
    pub nu_p: f64,
    pub sigma_f_prime: f64,
    pub b: f64,
    pub eps_f_prime: f64,
    pub c: f64,
    pub tau_f_prime: f64,
    pub b0: f64,
    pub gamma_f_prime: f64,
    pub c0: f64,
    /// True when any torsional constant was estimated from the uniaxial ones.
    pub torsion_estimated: bool,
    pub cyclic: CyclicProperties,
}

/// Ramberg-Osgood style parameters; carried for completeness, unused.
#[derive(Debug, Clone, Default, PartialEq)]
#[allow(non_snake_case)]
pub struct CyclicProperties {
    pub K1: Option<f64>,
    pub n1: Option<f64>,
    pub K_prime: Option<f64>,
    pub n_prime: Option<f64>,
    pub K1_prime: Option<f64>,
    pub n1_prime: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct MaterialFile {
    name: String,
    E: f64,
    G: f64,
    sigma_y: f64,
    nu_e: f64,
    #[serde(default = "default_nu_p")]
    nu_p: f64,
    sigma_f_prime: f64,
    b: f64,
    eps_f_prime: f64,
    c: f64,
    tau_f_prime: Option<f64>,
    b0: Option<f64>,
    gamma_f_prime: Option<f64>,
    c0: Option<f64>,
    K1: Option<f64>,
    n1: Option<f64>,
    K_prime: Option<f64>,
    n_prime: Option<f64>,
    K1_prime: Option<f64>,
    n1_prime: Option<f64>,
}

fn default_nu_p() -> f64 {
    0.5
}

const BUNDLED: [(&str, &str); 3] = [
    ("GH4169_25C", include_str!("../../data/GH4169_25C.toml")),
    ("TC4_25C", include_str!("../../data/TC4_25C.toml")),
    ("GH4169_650C", include_str!("../../data/GH4169_650C.toml")),
];

impl MaterialProperties {
    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    pub fn bundled(name: &str) -> Result<Self, BaselineError> {
        let (_, text) = BUNDLED.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).ok_or_else(|| {
            BaselineError::UnknownMaterial { name: name.to_string(), known: Self::bundled_names().join(", ") }
        })?;
        Self::from_toml_str(text)
    }

    /// A bundled name, or a path to a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self, BaselineError> {
        let path = Path::new(name_or_path);
        if path.is_file() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BaselineError::InvalidMaterial(format!("{}: {e}", path.display())))?;
            return Self::from_toml_str(&text);
        }
        Self::bundled(name_or_path)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, BaselineError> {
        let f: MaterialFile = toml::from_str(text).map_err(|e| BaselineError::InvalidMaterial(e.to_string()))?;
        let estimated =
            f.tau_f_prime.is_none() || f.gamma_f_prime.is_none() || f.b0.is_none() || f.c0.is_none();
        let sqrt3 = 3f64.sqrt();
        let m = MaterialProperties {
            name: f.name,
            e_gpa: f.E,
            g_gpa: f.G,
            sigma_y: f.sigma_y,
            nu_e: f.nu_e,
            nu_p: f.nu_p,
            sigma_f_prime: f.sigma_f_prime,
            b: f.b,
            eps_f_prime: f.eps_f_prime,
            c: f.c,
            tau_f_prime: f.tau_f_prime.unwrap_or(f.sigma_f_prime / sqrt3),
            b0: f.b0.unwrap_or(f.b),
            gamma_f_prime: f.gamma_f_prime.unwrap_or(sqrt3 * f.eps_f_prime),
            c0: f.c0.unwrap_or(f.c),
            torsion_estimated: estimated,
            cyclic: CyclicProperties {
                K1: f.K1,
                n1: f.n1,
                K_prime: f.K_prime,
                n_prime: f.n_prime,
                K1_prime: f.K1_prime,
                n1_prime: f.n1_prime,
            },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let positive = [
            ("E", self.e_gpa),
            ("G", self.g_gpa),
            ("sigma_y", self.sigma_y),
            ("sigma_f_prime", self.sigma_f_prime),
            ("eps_f_prime", self.eps_f_prime),
            ("tau_f_prime", self.tau_f_prime),
            ("gamma_f_prime", self.gamma_f_prime),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(BaselineError::InvalidMaterial(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("b", self.b), ("c", self.c), ("b0", self.b0), ("c0", self.c0)] {
            if !(v.is_finite() && v < 0.0) {
                return Err(BaselineError::InvalidMaterial(format!("{name} must be negative, got {v}")));
            }
        }
        for (name, v) in [("nu_e", self.nu_e), ("nu_p", self.nu_p)] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(BaselineError::InvalidMaterial(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn e_mpa(&self) -> f64 {
        self.e_gpa * 1000.0
    }

    pub fn g_mpa(&self) -> f64 {
        self.g_gpa * 1000.0
    }

    /// Uniaxial strain-life curve at `x = 2N_f` reversals, split into its
    /// elastic and plastic parts.
    pub fn axial_terms(&self, x: f64) -> (f64, f64) {
        (self.sigma_f_prime / self.e_mpa() * x.powf(self.b), self.eps_f_prime * x.powf(self.c))
    }

    /// Torsional strain-life curve at `x = 2N_f`.
    pub fn shear_curve(&self, x: f64) -> f64 {
        self.tau_f_prime / self.g_mpa() * x.powf(self.b0) + self.gamma_f_prime * x.powf(self.c0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_values() {
        let m = MaterialProperties::bundled("GH4169_25C").unwrap();
        assert_eq!(m.e_gpa, 198.5);
        assert_eq!(m.g_gpa, 67.0);
        assert_eq!(m.tau_f_prime, 1091.6);
        assert_eq!(m.c0, -0.77);
        assert_eq!(m.nu_p, 0.5);
        assert!(!m.torsion_estimated);
        assert_eq!(m.cyclic.K_prime, Some(1892.3));
        let m = MaterialProperties::bundled("gh4169_650c").unwrap();
        assert_eq!(m.g_gpa, 62.0);
        assert_eq!(m.cyclic, CyclicProperties::default());
        assert_eq!(MaterialProperties::bundled("TC4_25C").unwrap().sigma_y, 942.5);
    }

    #[test]
    fn torsional_estimates_fill_missing_fields() {
        let text = r#"
            name = "X"
            E = 200.0
            G = 77.0
            sigma_y = 500.0
            nu_e = 0.3
            sigma_f_prime = 900.0
            b = -0.09
            eps_f_prime = 0.3
            c = -0.6
        "#;
        let m = MaterialProperties::from_toml_str(text).unwrap();
        assert!(m.torsion_estimated);
        assert!((m.tau_f_prime - 900.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((m.gamma_f_prime - 0.3 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!((m.b0, m.c0), (-0.09, -0.6));
    }

    #[test]
    fn rejects_bad_values() {
        let text = include_str!("../../data/GH4169_25C.toml").replace("b = -0.06", "b = 0.06");
        assert!(matches!(MaterialProperties::from_toml_str(&text), Err(BaselineError::InvalidMaterial(_))));
        let text = include_str!("../../data/GH4169_25C.toml").replace("E = 198.5", "Young = 198.5");
        assert!(MaterialProperties::from_toml_str(&text).is_err());
        assert!(matches!(MaterialProperties::load("steel"), Err(BaselineError::UnknownMaterial { .. })));
    }
}
