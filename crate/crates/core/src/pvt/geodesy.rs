//! WGS-84 conversions: ECEF, geodetic, local ENU/NED and UTM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
const UTM_K0: f64 = 0.9996;
const UTM_E0: f64 = 500_000.0;
const UTM_N0_SOUTH: f64 = 10_000_000.0;

fn e2() -> f64 {
    WGS84_F * (2.0 - WGS84_F)
}

/// Geodetic latitude/longitude in degrees and height in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geodetic {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
}

pub fn geodetic_to_ecef(g: Geodetic) -> [f64; 3] {
    let (lat, lon) = (g.lat_deg.to_radians(), g.lon_deg.to_radians());
    let n = WGS84_A / (1.0 - e2() * lat.sin().powi(2)).sqrt();
    [
        (n + g.height) * lat.cos() * lon.cos(),
        (n + g.height) * lat.cos() * lon.sin(),
        (n * (1.0 - e2()) + g.height) * lat.sin(),
    ]
}

pub fn ecef_to_geodetic(p: [f64; 3]) -> Geodetic {
    let [x, y, z] = p;
    let lon = y.atan2(x);
    let r = x.hypot(y);
    let e2 = e2();
    let mut lat = z.atan2(r * (1.0 - e2));
    let mut h = 0.0;
    for _ in 0..10 {
        let n = WGS84_A / (1.0 - e2 * lat.sin().powi(2)).sqrt();
        h = if lat.cos().abs() > 1e-9 {
            r / lat.cos() - n
        } else {
            z.abs() - n * (1.0 - e2)
        };
        let next = z.atan2(r * (1.0 - e2 * n / (n + h)));
        if (next - lat).abs() < 1e-14 {
            lat = next;
            break;
        }
        lat = next;
    }
    Geodetic {
        lat_deg: lat.to_degrees(),
        lon_deg: lon.to_degrees(),
        height: h,
    }
}

/// East, north and up unit vectors at a geodetic point.
pub fn enu_basis(lat_deg: f64, lon_deg: f64) -> [[f64; 3]; 3] {
    let (sl, cl) = lat_deg.to_radians().sin_cos();
    let (so, co) = lon_deg.to_radians().sin_cos();
    [
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ]
}

/// ECEF direction for azimuth (from north, clockwise) and elevation.
pub fn direction_from_az_el(origin: Geodetic, az_deg: f64, el_deg: f64) -> [f64; 3] {
    let [e, n, u] = enu_basis(origin.lat_deg, origin.lon_deg);
    let (sa, ca) = az_deg.to_radians().sin_cos();
    let (se, ce) = el_deg.to_radians().sin_cos();
    let (de, dn, du) = (ce * sa, ce * ca, se);
    [0, 1, 2].map(|i| de * e[i] + dn * n[i] + du * u[i])
}

pub fn ecef_to_enu(origin: [f64; 3], p: [f64; 3]) -> [f64; 3] {
    let g = ecef_to_geodetic(origin);
    let b = enu_basis(g.lat_deg, g.lon_deg);
    let d = sub(p, origin);
    b.map(|axis| dot(axis, d))
}

pub fn enu_to_ecef(origin: [f64; 3], enu: [f64; 3]) -> [f64; 3] {
    let g = ecef_to_geodetic(origin);
    let [e, n, u] = enu_basis(g.lat_deg, g.lon_deg);
    [0, 1, 2].map(|i| origin[i] + enu[0] * e[i] + enu[1] * n[i] + enu[2] * u[i])
}

/// Local north-east-down offset to ECEF.
pub fn ned_to_ecef(origin: [f64; 3], ned: [f64; 3]) -> [f64; 3] {
    enu_to_ecef(origin, [ned[1], ned[0], -ned[2]])
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// UTM grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utm {
    pub easting: f64,
    pub northing: f64,
    pub zone: u8,
    pub north: bool,
}

struct Series {
    a_rect: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
    delta: [f64; 6],
    ecc: f64,
}

fn series() -> Series {
    let n = WGS84_F / (2.0 - WGS84_F);
    let (n2, n3, n4, n5, n6) = (n * n, n.powi(3), n.powi(4), n.powi(5), n.powi(6));
    Series {
        a_rect: WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0),
        alpha: [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
                + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1_983_433.0 * n6 / 1_935_360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
                + 167_603.0 * n6 / 181_440.0,
            49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
            34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
            212_378_941.0 * n6 / 319_334_400.0,
        ],
        beta: [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
                + 96199.0 * n6 / 604_800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
                - 1_118_711.0 * n6 / 3_870_720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
            4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
            20_648_693.0 * n6 / 638_668_800.0,
        ],
        delta: [
            2.0 * n - 2.0 * n2 / 3.0 - 2.0 * n3 + 116.0 * n4 / 45.0 + 26.0 * n5 / 45.0
                - 2854.0 * n6 / 675.0,
            7.0 * n2 / 3.0 - 8.0 * n3 / 5.0 - 227.0 * n4 / 45.0 + 2704.0 * n5 / 315.0
                + 2323.0 * n6 / 945.0,
            56.0 * n3 / 15.0 - 136.0 * n4 / 35.0 - 1262.0 * n5 / 105.0 + 73814.0 * n6 / 2835.0,
            4279.0 * n4 / 630.0 - 332.0 * n5 / 35.0 - 399_572.0 * n6 / 14175.0,
            4174.0 * n5 / 315.0 - 144_838.0 * n6 / 6237.0,
            601_676.0 * n6 / 22275.0,
        ],
        ecc: 2.0 * n.sqrt() / (1.0 + n),
    }
}

/// Standard 6-degree zone for a longitude (no Norway/Svalbard exceptions).
pub fn utm_zone(lon_deg: f64) -> u8 {
    let lon = (lon_deg + 180.0).rem_euclid(360.0);
    ((lon / 6.0).floor() as u8).min(59) + 1
}

fn central_meridian(zone: u8) -> f64 {
    (zone as f64 - 1.0) * 6.0 - 180.0 + 3.0
}

pub fn geodetic_to_utm(lat_deg: f64, lon_deg: f64) -> Result<Utm> {
    let zone = utm_zone(lon_deg);
    geodetic_to_utm_zone(lat_deg, lon_deg, zone)
}

/// Projects into a given zone (useful for comparing points across a zone edge).
pub fn geodetic_to_utm_zone(lat_deg: f64, lon_deg: f64, zone: u8) -> Result<Utm> {
    if !(-80.0..=84.0).contains(&lat_deg) || !lat_deg.is_finite() {
        return Err(Error::UnsupportedZone { lat_deg });
    }
    let s = series();
    let phi = lat_deg.to_radians();
    let lam = (lon_deg - central_meridian(zone)).to_radians();
    let lam = (lam + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    let t = (phi.sin().atanh() - s.ecc * (s.ecc * phi.sin()).atanh()).sinh();
    let xi_p = t.atan2(lam.cos());
    let eta_p = (lam.sin() / (1.0 + t * t).sqrt()).atanh();
    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    let north = lat_deg >= 0.0;
    Ok(Utm {
        easting: UTM_E0 + UTM_K0 * s.a_rect * eta,
        northing: if north { 0.0 } else { UTM_N0_SOUTH } + UTM_K0 * s.a_rect * xi,
        zone,
        north,
    })
}

/// Inverse projection to latitude/longitude in degrees.
pub fn utm_to_geodetic(u: Utm) -> (f64, f64) {
    let s = series();
    let xi = (u.northing - if u.north { 0.0 } else { UTM_N0_SOUTH }) / (UTM_K0 * s.a_rect);
    let eta = (u.easting - UTM_E0) / (UTM_K0 * s.a_rect);
    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let chi = (xi_p.sin() / eta_p.cosh()).asin();
    let mut phi = chi;
    for (j, d) in s.delta.iter().enumerate() {
        phi += d * (2.0 * (j + 1) as f64 * chi).sin();
    }
    let lam = eta_p.sinh().atan2(xi_p.cos());
    (phi.to_degrees(), central_meridian(u.zone) + lam.to_degrees())
}

/// UTM coordinate of an ECEF position.
pub fn to_utm(ecef: [f64; 3]) -> Result<Utm> {
    let g = ecef_to_geodetic(ecef);
    geodetic_to_utm(g.lat_deg, g.lon_deg)
}

/// ECEF position of a UTM coordinate at the given ellipsoidal height.
pub fn utm_to_ecef(u: Utm, height: f64) -> [f64; 3] {
    let (lat_deg, lon_deg) = utm_to_geodetic(u);
    geodetic_to_ecef(Geodetic {
        lat_deg,
        lon_deg,
        height,
    })
}
