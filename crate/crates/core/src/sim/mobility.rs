use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
}

/// Waypoint traces per vehicle. A vehicle exists between its first and last
/// waypoint and moves linearly between consecutive ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    vehicles: BTreeMap<VehicleId, Vec<Waypoint>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("vehicle {0}: trace has no waypoints")]
    Empty(VehicleId),
    #[error("vehicle {0}: time {1} does not increase strictly")]
    NotIncreasing(VehicleId, f64),
    #[error("vehicle {0}: non-finite waypoint")]
    NonFinite(VehicleId),
}

impl Traces {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, v: VehicleId, points: Vec<Waypoint>) -> Result<(), TraceError> {
        if points.is_empty() {
            return Err(TraceError::Empty(v));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.time_s.is_finite() && p.x_m.is_finite() && p.y_m.is_finite()) {
                return Err(TraceError::NonFinite(v));
            }
            if i > 0 && p.time_s <= points[i - 1].time_s {
                return Err(TraceError::NotIncreasing(v, p.time_s));
            }
        }
        self.vehicles.insert(v, points);
        Ok(())
    }

    /// Vehicle parked at one spot for `[0, until_s]`.
    pub fn insert_static(&mut self, v: VehicleId, pos: (f64, f64), until_s: f64) {
        let p = |t| Waypoint {
            time_s: t,
            x_m: pos.0,
            y_m: pos.1,
        };
        self.vehicles.insert(v, vec![p(0.0), p(until_s.max(1e-9))]);
    }

    pub fn get(&self, v: VehicleId) -> Option<&[Waypoint]> {
        self.vehicles.get(&v).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VehicleId, &[Waypoint])> {
        self.vehicles.iter().map(|(v, w)| (*v, w.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Time span in which the vehicle exists.
    pub fn span(&self, v: VehicleId) -> Option<(f64, f64)> {
        let w = self.vehicles.get(&v)?;
        Some((w[0].time_s, w[w.len() - 1].time_s))
    }

    /// Interpolated position, or `None` outside the vehicle's span.
    pub fn position(&self, v: VehicleId, t_s: f64) -> Option<(f64, f64)> {
        let w = self.vehicles.get(&v)?;
        let first = w[0];
        let last = w[w.len() - 1];
        if t_s < first.time_s || t_s > last.time_s {
            return None;
        }
        let i = w.partition_point(|p| p.time_s <= t_s);
        if i == w.len() {
            return Some((last.x_m, last.y_m));
        }
        let (a, b) = (w[i - 1], w[i]);
        let f = (t_s - a.time_s) / (b.time_s - a.time_s);
        Some((a.x_m + f * (b.x_m - a.x_m), a.y_m + f * (b.y_m - a.y_m)))
    }
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(t: f64, x: f64, y: f64) -> Waypoint {
        Waypoint {
            time_s: t,
            x_m: x,
            y_m: y,
        }
    }

    #[test]
    fn interpolation() {
        let mut tr = Traces::new();
        tr.insert(
            VehicleId(1),
            vec![
                wp(0.0, 0.0, 0.0),
                wp(10.0, 100.0, 50.0),
                wp(20.0, 100.0, 150.0),
            ],
        )
        .unwrap();
        assert_eq!(tr.position(VehicleId(1), 5.0), Some((50.0, 25.0)));
        assert_eq!(tr.position(VehicleId(1), 10.0), Some((100.0, 50.0)));
        assert_eq!(tr.position(VehicleId(1), 15.0), Some((100.0, 100.0)));
        assert_eq!(tr.position(VehicleId(1), 20.0), Some((100.0, 150.0)));
        assert_eq!(tr.position(VehicleId(1), 20.5), None);
        assert_eq!(tr.position(VehicleId(2), 1.0), None);
        assert_eq!(tr.span(VehicleId(1)), Some((0.0, 20.0)));
    }

    #[test]
    fn rejects_bad_traces() {
        let mut tr = Traces::new();
        assert!(tr.insert(VehicleId(1), vec![]).is_err());
        assert!(tr
            .insert(VehicleId(1), vec![wp(1.0, 0.0, 0.0), wp(1.0, 1.0, 0.0)])
            .is_err());
        assert!(tr
            .insert(VehicleId(1), vec![wp(0.0, f64::NAN, 0.0)])
            .is_err());
    }

    #[test]
    fn static_vehicle() {
        let mut tr = Traces::new();
        tr.insert_static(VehicleId(3), (5.0, 6.0), 60.0);
        assert_eq!(tr.position(VehicleId(3), 33.3), Some((5.0, 6.0)));
        assert_eq!(distance((0.0, 0.0), (3.0, 4.0)), 5.0);
    }
}
