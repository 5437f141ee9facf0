//! Least-squares position and clock solution.

pub mod geodesy;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rectifier::PseudorangeSet;
use crate::signal::SPEED_OF_LIGHT;

pub use geodesy::{to_utm, Utm};
use geodesy::{norm, sub};

const MAX_ITERATIONS: usize = 20;
const CONVERGED_STEP: f64 = 1e-3;
const MAX_GDOP: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvtSolution {
    /// ECEF meters.
    pub position: [f64; 3],
    /// Receiver clock bias, seconds.
    pub clock_bias: f64,
    pub residual_rms: f64,
    /// `None` outside UTM coverage.
    pub utm: Option<Utm>,
    /// Receiver time of the measurement epoch, seconds.
    pub time: f64,
    pub satellites: Vec<u8>,
    pub gdop: f64,
    pub iterations: usize,
}

/// One range observation for [`solve_ranges`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeObservation {
    pub prn: u8,
    pub satellite: [f64; 3],
    pub pseudorange: f64,
}

/// Solves from a pseudorange set and satellite positions at transmission.
pub fn solve(pr: &PseudorangeSet, sat_positions: &BTreeMap<u8, [f64; 3]>) -> Result<PvtSolution> {
    let mut obs = Vec::with_capacity(pr.entries.len());
    for e in &pr.entries {
        let sat = sat_positions.get(&e.prn).ok_or_else(|| {
            Error::Solver(format!("no satellite position for PRN {}", e.prn))
        })?;
        obs.push(RangeObservation {
            prn: e.prn,
            satellite: *sat,
            pseudorange: e.pseudorange,
        });
    }
    let mut sol = solve_ranges(&obs)?;
    sol.time = pr.t_rx;
    Ok(sol)
}

/// Gauss-Newton on `rho_i = |x - s_i| + c b`, starting at the Earth's center.
pub fn solve_ranges(obs: &[RangeObservation]) -> Result<PvtSolution> {
    if obs.len() < 4 {
        return Err(Error::InsufficientSatellites {
            have: obs.len(),
            need: 4,
        });
    }
    if obs.iter().any(|o| !o.pseudorange.is_finite()) {
        return Err(Error::Solver("non-finite pseudorange".into()));
    }
    let m = obs.len();
    let mut x = Vector4::<f64>::zeros();
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    let mut gdop = f64::NAN;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut h = DMatrix::<f64>::zeros(m, 4);
        let mut r = DVector::<f64>::zeros(m);
        for (i, o) in obs.iter().enumerate() {
            let d = sub([x[0], x[1], x[2]], o.satellite);
            let range = norm(d);
            if range == 0.0 {
                return Err(Error::Solver("receiver coincides with a satellite".into()));
            }
            for k in 0..3 {
                h[(i, k)] = d[k] / range;
            }
            h[(i, 3)] = 1.0;
            r[i] = o.pseudorange - (range + x[3]);
        }
        let hth: Matrix4<f64> = (h.transpose() * &h).fixed_view::<4, 4>(0, 0).into_owned();
        let Some(cov) = hth.try_inverse() else {
            return Err(Error::Solver(format!(
                "singular geometry with {m} satellites (normal matrix not invertible)"
            )));
        };
        gdop = cov.trace().sqrt();
        if !gdop.is_finite() || gdop > MAX_GDOP {
            return Err(Error::Solver(format!("degenerate geometry: GDOP {gdop:.3e}")));
        }
        let htr = h.transpose() * &r;
        let dx = cov * Vector4::new(htr[0], htr[1], htr[2], htr[3]);
        x += dx;
        last_step = (dx[0].powi(2) + dx[1].powi(2) + dx[2].powi(2)).sqrt();
        if last_step < CONVERGED_STEP {
            break;
        }
    }
    if !(last_step < 1.0) {
        return Err(Error::Solver(format!(
            "no convergence after {iterations} iterations (last step {last_step:.3e} m)"
        )));
    }
    let position = [x[0], x[1], x[2]];
    let ss: f64 = obs
        .iter()
        .map(|o| (o.pseudorange - norm(sub(position, o.satellite)) - x[3]).powi(2))
        .sum();
    Ok(PvtSolution {
        position,
        clock_bias: x[3] / SPEED_OF_LIGHT,
        residual_rms: (ss / m as f64).sqrt(),
        utm: to_utm(position).ok(),
        time: 0.0,
        satellites: obs.iter().map(|o| o.prn).collect(),
        gdop,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::geodesy::*;
    use super::*;
    use crate::rectifier::Pseudorange;

    fn scene() -> ([f64; 3], Vec<[f64; 3]>) {
        let g = Geodetic {
            lat_deg: 37.7749,
            lon_deg: -122.4194,
            height: 15.0,
        };
        let rx = geodetic_to_ecef(g);
        let sats = [(0.0, 30.0), (90.0, 70.0), (180.0, 40.0), (270.0, 25.0), (45.0, 60.0)]
            .iter()
            .map(|&(az, el)| {
                let d = direction_from_az_el(g, az, el);
                [0, 1, 2].map(|i| rx[i] + 2.2e7 * d[i])
            })
            .collect();
        (rx, sats)
    }

    fn observations(rx: [f64; 3], sats: &[[f64; 3]], bias_m: f64) -> Vec<RangeObservation> {
        sats.iter()
            .enumerate()
            .map(|(i, s)| RangeObservation {
                prn: i as u8 + 1,
                satellite: *s,
                pseudorange: norm(sub(rx, *s)) + bias_m,
            })
            .collect()
    }

    #[test]
    fn noiseless_inverse_problem() {
        let (rx, sats) = scene();
        let sol = solve_ranges(&observations(rx, &sats, 0.0)).unwrap();
        assert!(norm(sub(sol.position, rx)) < 1e-2);
        assert!(sol.residual_rms < 1e-2);
        assert!(sol.clock_bias.abs() < 1e-10);
    }

    #[test]
    fn common_bias_goes_to_clock() {
        let (rx, sats) = scene();
        let base = solve_ranges(&observations(rx, &sats, 0.0)).unwrap();
        let shifted = solve_ranges(&observations(rx, &sats, SPEED_OF_LIGHT * 1e-6)).unwrap();
        assert!(norm(sub(base.position, shifted.position)) < 1e-2);
        assert!((shifted.clock_bias - base.clock_bias - 1e-6).abs() < 1e-11);
    }

    #[test]
    fn too_few_and_degenerate() {
        let (rx, sats) = scene();
        assert!(matches!(
            solve_ranges(&observations(rx, &sats[..3], 0.0)),
            Err(Error::InsufficientSatellites { have: 3, need: 4 })
        ));
        let same = vec![sats[0]; 5];
        assert!(matches!(
            solve_ranges(&observations(rx, &same, 0.0)),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn translation_equivariance() {
        let (rx, sats) = scene();
        let shift = [1234.5, -987.0, 55.5];
        let moved: Vec<_> = sats.iter().map(|s| [0, 1, 2].map(|i| s[i] + shift[i])).collect();
        let rx2 = [0, 1, 2].map(|i| rx[i] + shift[i]);
        let a = solve_ranges(&observations(rx, &sats, 0.0)).unwrap();
        let b = solve_ranges(&observations(rx2, &moved, 0.0)).unwrap();
        let d = [0, 1, 2].map(|i| b.position[i] - a.position[i] - shift[i]);
        assert!(norm(d) < 1e-2);
    }

    #[test]
    fn residual_grows_with_noise() {
        let (rx, sats) = scene();
        let noise = [0.7, -1.1, 0.4, 0.9, -0.6];
        let mut prev = 0.0;
        for scale in [0.0, 1.0, 2.0, 4.0] {
            let mut obs = observations(rx, &sats, 0.0);
            for (o, n) in obs.iter_mut().zip(noise) {
                o.pseudorange += scale * n;
            }
            let r = solve_ranges(&obs).unwrap().residual_rms;
            assert!(r >= prev);
            prev = r;
        }
        assert!(prev > 0.1);
    }

    #[test]
    fn solve_uses_set_and_positions() {
        let (rx, sats) = scene();
        let entries = observations(rx, &sats, 300.0)
            .iter()
            .map(|o| Pseudorange {
                prn: o.prn,
                pseudorange: o.pseudorange,
                rectified: false,
                transmit_time: 0.0,
            })
            .collect();
        let set = PseudorangeSet {
            entries,
            t_ref: 0.07,
            t_rx: 12.5,
            sample_counter: 0,
            t_ref_warning: false,
        };
        let map: BTreeMap<u8, [f64; 3]> =
            sats.iter().enumerate().map(|(i, s)| (i as u8 + 1, *s)).collect();
        let sol = solve(&set, &map).unwrap();
        assert!(norm(sub(sol.position, rx)) < 1e-2);
        assert_eq!(sol.time, 12.5);
        assert!(sol.utm.is_some());
        let mut missing = map.clone();
        missing.remove(&3);
        assert!(solve(&set, &missing).is_err());
    }
}
