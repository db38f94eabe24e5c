use std::path::Path;

use crate::fields::{dwp_velocity, write_gridded_field, FieldError, GriddedField};
use crate::geometry::Domain;

/// Samples the double-well velocity on an `nx × ny` node lattice over
/// `[−4, 4]²` at each of `times` and writes it as a dataset directory.
pub fn generate_dwp_dataset(nx: usize, ny: usize, times: &[f64], path: impl AsRef<Path>) -> Result<GriddedField, FieldError> {
    let field = GriddedField::from_fn(Domain::double_well(), nx, ny, times.to_vec(), dwp_velocity)?;
    write_gridded_field(path, &field)?;
    Ok(field)
}

/// `t0, t0 + step, …` up to and including `t1`.
pub fn time_range(t0: f64, t1: f64, step: f64) -> Option<Vec<f64>> {
    if !(step > 0.0) || !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return None;
    }
    let count = ((t1 - t0) / step + 1e-9).floor() as usize;
    Some((0..=count).map(|k| t0 + k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{load_gridded_field, VelocityField};

    #[test]
    fn minimal_dataset_loads() {
        let dir = tempfile::tempdir().unwrap();
        generate_dwp_dataset(2, 2, &[0.0], dir.path()).unwrap();
        let f = load_gridded_field(dir.path()).unwrap();
        assert_eq!((f.nx(), f.ny(), f.times().len()), (2, 2, 1));
    }

    #[test]
    fn nodes_reproduce_the_model() {
        let dir = tempfile::tempdir().unwrap();
        let times = time_range(0.0, 4.0, 1.0).unwrap();
        generate_dwp_dataset(9, 7, &times, dir.path()).unwrap();
        let f = load_gridded_field(dir.path()).unwrap();
        for &t in &times {
            for j in 0..7 {
                for i in 0..9 {
                    let p = f.node(i, j);
                    assert_eq!(f.velocity(p, t), dwp_velocity(p, t));
                }
            }
        }
    }

    #[test]
    fn time_ranges() {
        assert_eq!(time_range(0.0, 1.0, 0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(time_range(2.0, 2.0, 1.0).unwrap(), vec![2.0]);
        assert!(time_range(0.0, 1.0, 0.0).is_none());
        assert!(time_range(1.0, 0.0, 1.0).is_none());
    }
}
