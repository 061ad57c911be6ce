use super::Airport;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine great-circle distance in kilometres.
pub fn route_distance(origin: &Airport, destination: &Airport) -> f64 {
    let (lat1, lon1) = (origin.latitude.to_radians(), origin.longitude.to_radians());
    let (lat2, lon2) = (destination.latitude.to_radians(), destination.longitude.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    // rounding can push `a` a hair past 1 for antipodal points
    let a = a.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * a.sqrt().asin()
}
