//! Reference life formulas that ship with the crate: one structure with
//! constants fitted per material and temperature.

use crate::symlib::{Expression, Library, SymError};

/// Prefix form of the shared structure, in the default library.
pub const REFERENCE_STRUCTURE: &str = "add C div C add add eps_a gamma_a div C add mul tau_over_G add eps_a C C";

/// `(name, material, constants)`. The formula predicts `ln(N_f)` from
/// inputs in mixed units.
pub const REFERENCE_FORMULAS: [(&str, &str, [f64; 5]); 3] = [
    ("gh4169_25c", "GH4169_25C", [3.148, 7.171, -0.003, -0.785, 2.74]),
    ("gh4169_650c", "GH4169_650C", [0.302, 11.625, 1202.181, 297.975, 185.977]),
    ("tc4_25c", "TC4_25C", [-17.544, 56.092, 1216.551, 196.205, -45.141]),
];

pub fn reference_names() -> Vec<&'static str> {
    REFERENCE_FORMULAS.iter().map(|(n, _, _)| *n).collect()
}

/// Material name paired with a reference formula.
pub fn reference_material(name: &str) -> Option<&'static str> {
    REFERENCE_FORMULAS.iter().find(|(n, _, _)| n.eq_ignore_ascii_case(name)).map(|(_, m, _)| *m)
}

/// The reference formula `name`, with its constants, in `lib`.
pub fn reference_formula(name: &str, lib: &Library) -> Result<Option<Expression>, SymError> {
    let Some((_, _, c)) = REFERENCE_FORMULAS.iter().find(|(n, _, _)| n.eq_ignore_ascii_case(name)) else {
        return Ok(None);
    };
    Expression::from_symbols(lib, REFERENCE_STRUCTURE, c.to_vec()).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{compute_metrics, load_dataset, Dataset, Units};
    use crate::fatigue_baselines::MaterialProperties;
    use crate::symlib::evaluate;

    #[test]
    fn all_formulas_build() {
        let lib = Library::fatigue_default();
        for n in reference_names() {
            let e = reference_formula(n, &lib).unwrap().unwrap();
            assert_eq!(e.constants.len(), 5);
            assert!(MaterialProperties::bundled(reference_material(n).unwrap()).is_ok());
        }
        assert!(reference_formula("steel", &lib).unwrap().is_none());
    }

    #[test]
    fn printed_constants_track_data1() {
        let lib = Library::fatigue_default();
        let e = reference_formula("GH4169_25C", &lib).unwrap().unwrap();
        let mat = MaterialProperties::bundled("GH4169_25C").unwrap();
        let d = Dataset::from_records(&load_dataset("data1").unwrap(), &mat, Units::Mixed);
        let pred: Vec<f64> = evaluate(&e, &lib, &d.features).unwrap().into_iter().map(f64::exp).collect();
        let m = compute_metrics(&d.observed, &pred).unwrap();
        assert!(m.r2 > 0.9, "{m:?}");
    }
}
