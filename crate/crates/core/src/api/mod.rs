//! Adversarial peak identification by maneuver and dead-reckoning comparison.

mod maneuver;
pub(crate) mod trajectory;

pub use maneuver::{
    correlate_tracks, generate_maneuver, monte_carlo, simulate_flight, AttackerModel,
    FlightConfig, ImuModel, LabelRates, ManeuverConstraints, ManeuverPlan, PeakLabel, Segment,
    SpoofState, DEFAULT_THRESHOLD,
};
pub use trajectory::{TrackPoint, Trajectory};
