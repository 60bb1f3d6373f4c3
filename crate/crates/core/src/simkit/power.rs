//! Multi-area power system frequency model.
//!
//! Each area contributes four states `(Δθ, Δω, ΔP_m, ΔP_v)` and one agent
//! measuring `Δθ` and `ΔP_v`. Tie-line slopes `P_ij` couple the areas.

use serde::{Deserialize, Serialize};

use crate::digraph::{self, SwitchingSchedule};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::sysdecomp::Plant;

/// States per area.
pub const AREA_STATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerAreaParams {
    /// Inertia constant `M`.
    pub m: f64,
    /// Speed regulation `R`.
    pub r: f64,
    /// Load damping `D`.
    pub d: f64,
    /// Prime-mover time constant (s).
    pub t_t: f64,
    /// Governor time constant (s).
    pub t_g: f64,
}

impl PowerAreaParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m", self.m),
            ("r", self.r),
            ("d", self.d),
            ("t_t", self.t_t),
            ("t_g", self.t_g),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config {
                    key: name.into(),
                    message: format!("area parameter must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }
}

const fn area(m: f64, r: f64, d: f64, t_t: f64) -> PowerAreaParams {
    PowerAreaParams { m, r, d, t_t, t_g: 0.1 }
}

/// Four-area parameter table.
pub fn table1() -> Vec<PowerAreaParams> {
    vec![
        area(12.0, 0.05, 0.7, 0.65),
        area(10.0, 0.0625, 0.9, 0.4),
        area(8.0, 0.08, 0.9, 0.3),
        area(8.0, 0.08, 0.7, 0.6),
    ]
}

/// Eight-area table: areas 5–8 repeat areas 1–4.
pub fn table2() -> Vec<PowerAreaParams> {
    let mut t = table1();
    t.extend(table1());
    t
}

/// Symmetric `P_ij = value` between areas adjacent in the schedule's union graph.
pub fn schedule_adjacent_coupling(s: &SwitchingSchedule, value: f64) -> Mat {
    let u = digraph::union_graph(s);
    let n = u.n();
    Mat::from_fn(n, n, |i, j| {
        if i != j && (u.has_arc(i, j) || u.has_arc(j, i)) {
            value
        } else {
            0.0
        }
    })
}

/// The system matrix alone (no observability check).
pub fn power_matrix(params: &[PowerAreaParams], p: &Mat) -> Result<Mat> {
    let n_a = params.len();
    if n_a == 0 {
        return Err(Error::Dimension("at least one area required".into()));
    }
    if p.shape() != (n_a, n_a) {
        return Err(Error::Dimension(format!("P must be {n_a}x{n_a}, got {:?}", p.shape())));
    }
    for (i, a) in params.iter().enumerate() {
        a.validate().map_err(|e| match e {
            Error::Config { key, message } => Error::Config {
                key: format!("areas[{i}].{key}"),
                message,
            },
            other => other,
        })?;
    }
    for i in 0..n_a {
        if p[(i, i)] != 0.0 {
            return Err(Error::Dimension("P must have a zero diagonal".into()));
        }
        for j in 0..n_a {
            if p[(i, j)] < 0.0 || (p[(i, j)] - p[(j, i)]).abs() > 1e-12 || !p[(i, j)].is_finite() {
                return Err(Error::Dimension("P must be symmetric and nonnegative".into()));
            }
        }
    }
    let n = AREA_STATES * n_a;
    let mut a = Mat::zeros(n, n);
    for (i, ar) in params.iter().enumerate() {
        let o = AREA_STATES * i;
        let psum: f64 = p.row(i).iter().sum();
        a[(o, o + 1)] = 1.0;
        a[(o + 1, o)] = -psum / (2.0 * ar.m);
        a[(o + 1, o + 1)] = -ar.d / (2.0 * ar.m);
        a[(o + 1, o + 2)] = 1.0 / (2.0 * ar.m);
        a[(o + 2, o + 2)] = -1.0 / ar.t_t;
        a[(o + 3, o + 1)] = -1.0 / (ar.r * ar.t_g);
        a[(o + 3, o + 3)] = -1.0 / ar.t_g;
        for j in 0..n_a {
            if j != i {
                a[(o + 1, AREA_STATES * j)] = p[(i, j)] / (2.0 * ar.m);
            }
        }
    }
    Ok(a)
}

/// Output map of area `i`: rows selecting `Δθ_i` and `ΔP_{v,i}`.
pub fn area_output(i: usize, n_areas: usize) -> Mat {
    let mut c = Mat::zeros(2, AREA_STATES * n_areas);
    c[(0, AREA_STATES * i)] = 1.0;
    c[(1, AREA_STATES * i + 3)] = 1.0;
    c
}

pub fn build_power_system(params: &[PowerAreaParams], p: &Mat) -> Result<Plant> {
    let a = power_matrix(params, p)?;
    let c = (0..params.len()).map(|i| area_output(i, params.len())).collect();
    Plant::new(a, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn area_one_row() {
        let a = power_matrix(&table1(), &Mat::zeros(4, 4)).unwrap();
        let row: Vec<f64> = a.row(1).iter().take(4).copied().collect();
        assert!((row[1] + 0.029167).abs() < 1e-6);
        assert!((row[2] - 0.041667).abs() < 1e-6);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[3], 0.0);
    }

    #[test]
    fn area_one_spectrum() {
        let a = power_matrix(&table1(), &Mat::zeros(4, 4)).unwrap();
        let block = a.view((0, 0), (4, 4)).into_owned();
        let ev = linalg::eigenvalues(&block);
        let want = [-10.0, -1.0 / 0.65, -0.7 / 24.0, 0.0];
        for (z, w) in ev.iter().zip(want) {
            assert!((z.re - w).abs() < 1e-9 && z.im.abs() < 1e-9);
        }
    }

    #[test]
    fn outputs_and_coupling() {
        let c = area_output(0, 4);
        assert_eq!(
            c.row(0).iter().take(4).copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            c.row(1).iter().take(4).copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, 0.0, 1.0]
        );
        let mut p = Mat::zeros(4, 4);
        p[(0, 1)] = 0.1;
        p[(1, 0)] = 0.1;
        let a = power_matrix(&table1(), &p).unwrap();
        assert!((a[(1, 4)] - 0.1 / 24.0).abs() < 1e-15);
        assert!((a[(1, 0)] + 0.1 / 24.0).abs() < 1e-15);
        assert!(power_matrix(&table1(), &Mat::zeros(3, 3)).is_err());
        p[(0, 1)] = 0.2;
        assert!(power_matrix(&table1(), &p).is_err());
    }

    #[test]
    fn plants_are_observable() {
        build_power_system(&table1(), &Mat::zeros(4, 4)).unwrap();
        build_power_system(&table2(), &Mat::zeros(8, 8)).unwrap();
    }
}
