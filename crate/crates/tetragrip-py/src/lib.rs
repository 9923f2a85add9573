use pyo3::prelude::*;

#[pymodule]
fn tetragrip(_py: Python, _m: &Bound<PyModule>) -> PyResult<()> {
    Ok(())
}
