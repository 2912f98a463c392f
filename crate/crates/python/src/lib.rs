use pyo3::prelude::*;

#[pymodule]
fn mixpert_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
