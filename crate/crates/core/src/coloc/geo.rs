use crate::circular::wrap_signed_deg;

/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance in km on a sphere of radius [`EARTH_RADIUS_KM`].
/// Arguments are `(lat, lon)` in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lat2) = (a.0.to_radians(), b.0.to_radians());
    let dlat = lat2 - lat1;
    // sin² of the half-difference is 360°-periodic, so no wrap is needed
    let dlon = (b.1 - a.1).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.min(1.0).sqrt().asin()
}

/// Longitude difference `b - a` wrapped into `(-180, 180]`.
pub fn delta_lon_deg(a_lon: f64, b_lon: f64) -> f64 {
    wrap_signed_deg(b_lon - a_lon)
}

fn unit_vector(lat: f64, lon: f64) -> [f64; 3] {
    let (sl, cl) = lat.to_radians().sin_cos();
    let (so, co) = lon.to_radians().sin_cos();
    [cl * co, cl * so, sl]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `(east, north)` offset in km of `point` in the plane tangent to the
/// sphere at `center` (gnomonic projection). `None` for points on the far
/// hemisphere.
pub fn tangent_plane_offset_km(center: (f64, f64), point: (f64, f64)) -> Option<(f64, f64)> {
    let u = unit_vector(center.0, center.1);
    let p = unit_vector(point.0, point.1);
    let (slat, clat) = center.0.to_radians().sin_cos();
    let (slon, clon) = center.1.to_radians().sin_cos();
    let east = [-slon, clon, 0.0];
    let north = [-slat * clon, -slat * slon, clat];
    let up = dot(p, u);
    if up <= 0.0 {
        return None;
    }
    Some((EARTH_RADIUS_KM * dot(p, east) / up, EARTH_RADIUS_KM * dot(p, north) / up))
}
