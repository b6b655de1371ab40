//! Shared fixtures for the benchmarks in `benches/`.

use rsl_core::catalog::reference_formula;
use rsl_core::{load_dataset, Dataset, Expression, FatigueRecord, Library, MaterialProperties, Units};

pub struct Fixture {
    pub lib: Library,
    pub records: Vec<FatigueRecord>,
    pub material: MaterialProperties,
    pub data: Dataset,
    pub formula: Expression,
}

/// Data 1 with the 25 C reference formula.
pub fn fixture() -> Fixture {
    let lib = Library::fatigue_default();
    let records = load_dataset("data1").expect("bundled dataset");
    let material = MaterialProperties::bundled("GH4169_25C").expect("bundled material");
    let data = Dataset::from_records(&records, &material, Units::Mixed);
    let formula = reference_formula("gh4169_25c", &lib).expect("parse").expect("known name");
    Fixture { lib, records, material, data, formula }
}
