//! Hierarchical hexagonal geocoding of WGS84 coordinates into short code
//! strings, used as the marketplace's spatial query key.
//!
//! The grid is the GeoHex v3 scheme: a hexagonal tiling of the Web Mercator
//! plane that subdivides by a factor of three per level. Codes are two head
//! characters packing the three most significant base-9 digits, followed by
//! one character per remaining digit, so a level-L code is L+2 characters
//! long and never exceeds 17. Encoding is pure integer/string output; no
//! floating point leaves this module except as cell center coordinates.

use std::fmt;

use thiserror::Error;

/// Symbol table for the two head characters (first 30 entries) shared with
/// the published GeoHex v3 key string.
const KEY: &[u8; 62] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// Half the Web Mercator world width in meters.
const BASE: f64 = 20037508.34;

/// tan(30 degrees); the skew factor of the hexagonal lattice axes.
const K: f64 = 0.5773502691896257;

/// Maximum grid level. A level-15 code is 17 characters.
pub const MAX_LEVEL: u8 = 15;

/// Latitude bound for caller-supplied points. Beyond this the Mercator
/// projection is not usable and device data is considered bad.
pub const MAX_LAT: f64 = 85.0511;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeoHexError {
    #[error("level out of range (0..=15)")]
    LevelOutOfRange,
    #[error("point out of bounds")]
    PointOutOfBounds,
    #[error("malformed geo code")]
    MalformedCode,
    #[error("coarse level exceeds fine level")]
    LevelOrderViolation,
}

/// A WGS84 coordinate pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }

    fn in_bounds(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && self.lat.abs() <= MAX_LAT
            && self.lon >= -180.0
            && self.lon < 180.0
    }
}

/// A validated GeoHex code string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeoCode(String);

impl GeoCode {
    /// Validates syntax: length 2..=17, head characters from the 30-symbol
    /// head alphabet, tail characters base-9 digits, head digits base-9.
    pub fn parse(s: &str) -> Result<GeoCode, GeoHexError> {
        let bytes = s.as_bytes();
        if bytes.len() < 2 || bytes.len() > 17 {
            return Err(GeoHexError::MalformedCode);
        }
        let a = head_index(bytes[0])?;
        let b = head_index(bytes[1])?;
        let head = a * 30 + b;
        if head / 100 > 8 || (head / 10) % 10 > 8 || head % 10 > 8 {
            return Err(GeoHexError::MalformedCode);
        }
        if !bytes[2..].iter().all(|c| (b'0'..=b'8').contains(c)) {
            return Err(GeoHexError::MalformedCode);
        }
        Ok(GeoCode(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Grid level; always `len() - 2`.
    pub fn level(&self) -> u8 {
        (self.0.len() - 2) as u8
    }
}

impl fmt::Display for GeoCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn head_index(c: u8) -> Result<usize, GeoHexError> {
    match KEY.iter().position(|&k| k == c) {
        Some(i) if i < 30 => Ok(i),
        _ => Err(GeoHexError::MalformedCode),
    }
}

/// One hexagonal grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Cell center. Centers of cells in the top and bottom grid rows can
    /// lie slightly beyond [`MAX_LAT`].
    pub center: GeoPoint,
    pub level: u8,
    pub code: GeoCode,
}

/// Encodes a point at the given level.
pub fn encode(p: GeoPoint, level: u8) -> Result<GeoCode, GeoHexError> {
    if level > MAX_LEVEL {
        return Err(GeoHexError::LevelOutOfRange);
    }
    if !p.in_bounds() {
        return Err(GeoHexError::PointOutOfBounds);
    }
    Ok(encode_raw(p.lat, p.lon, level)?)
}

/// Encodes without the latitude bound check. Cell centers in the extreme
/// grid rows re-encode through this path; the Mercator math itself is fine
/// for any finite latitude strictly inside +/-90.
pub fn encode_raw(lat: f64, lon: f64, level: u8) -> Result<GeoCode, GeoHexError> {
    if level > MAX_LEVEL {
        return Err(GeoHexError::LevelOutOfRange);
    }
    if !lat.is_finite() || !lon.is_finite() || lat.abs() >= 90.0 {
        return Err(GeoHexError::PointOutOfBounds);
    }
    let (x, y) = cell_of_point(lat, lon, level);
    Ok(zone_of_cell(x, y, level).2)
}

/// Decodes a code into its cell.
///
/// The dateline normalisation rewrites the leading base-9 digit of seam
/// cells (7 to 5, 3 to 1), so a code has up to two candidate digit
/// readings; the one whose canonical code round-trips to the input is the
/// cell. Syntactically valid strings that no point encodes to are rejected.
pub fn decode(code: &GeoCode) -> Result<Cell, GeoHexError> {
    let level = code.level();
    let digits = digits_of(code);
    for cand in candidate_digit_readings(&digits) {
        let (x, y) = cell_from_digits(&cand, level);
        let (lat, lon, canonical) = zone_of_cell(x, y, level);
        if canonical == *code {
            return Ok(Cell {
                center: GeoPoint::new(lat, lon),
                level,
                code: canonical,
            });
        }
    }
    Err(GeoHexError::MalformedCode)
}

/// True iff the center of `fine`'s cell, re-encoded at `coarse`'s level,
/// equals `coarse`.
pub fn contains(coarse: &GeoCode, fine: &GeoCode) -> Result<bool, GeoHexError> {
    if coarse.level() > fine.level() {
        return Err(GeoHexError::LevelOrderViolation);
    }
    let cell = decode(fine)?;
    let again = encode_raw(cell.center.lat, cell.center.lon, coarse.level())?;
    Ok(again == *coarse)
}

/// Keeps exactly the candidates contained in the query cell, in their
/// original order.
pub fn spatial_filter(
    query: &GeoCode,
    candidates: &[GeoCode],
) -> Result<Vec<GeoCode>, GeoHexError> {
    if candidates.iter().any(|c| c.level() < query.level()) {
        return Err(GeoHexError::LevelOrderViolation);
    }
    let mut kept = Vec::new();
    for cand in candidates {
        if contains(query, cand)? {
            kept.push(cand.clone());
        }
    }
    Ok(kept)
}

/// Corner coordinates of a cell's hexagon, counter-clockwise. Useful for
/// rendering; not part of the query surface.
pub fn cell_polygon(cell: &Cell) -> [GeoPoint; 6] {
    let size = hex_size(cell.level);
    let (cx, cy) = loc_to_xy(cell.center.lon, cell.center.lat);
    let mut out = [GeoPoint::new(0.0, 0.0); 6];
    for (i, corner) in out.iter_mut().enumerate() {
        let angle = std::f64::consts::PI / 3.0 * i as f64;
        let (x, y) = (cx + 2.0 * size * angle.cos(), cy + 2.0 * size * angle.sin());
        let (lon, lat) = xy_to_loc(x, y);
        *corner = GeoPoint::new(lat, lon);
    }
    out
}

fn hex_size(level: u8) -> f64 {
    BASE / 3f64.powi(level as i32 + 3)
}

fn loc_to_xy(lon: f64, lat: f64) -> (f64, f64) {
    let x = lon * BASE / 180.0;
    let y = ((90.0 + lat) * std::f64::consts::PI / 360.0).tan().ln() / (std::f64::consts::PI / 180.0);
    (x, y * BASE / 180.0)
}

fn xy_to_loc(x: f64, y: f64) -> (f64, f64) {
    let lon = (x / BASE) * 180.0;
    let lat = (y / BASE) * 180.0;
    let lat = 180.0 / std::f64::consts::PI
        * (2.0 * (lat * std::f64::consts::PI / 180.0).exp().atan() - std::f64::consts::PI / 2.0);
    (lon, lat)
}

/// JavaScript-style rounding: half-up toward positive infinity.
fn jround(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

fn pow3(e: u8) -> i64 {
    3i64.pow(e as u32)
}

/// Hex-lattice cell assignment for a point, in skewed grid coordinates.
fn cell_of_point(lat: f64, lon: f64, level: u8) -> (i64, i64) {
    let size = hex_size(level);
    let (x, y) = loc_to_xy(lon, lat);
    let unit_x = 6.0 * size;
    let unit_y = 6.0 * size * K;
    let pos_x = (x + y / K) / unit_x;
    let pos_y = (y - K * x) / unit_y;
    let x0 = pos_x.floor() as i64;
    let y0 = pos_y.floor() as i64;
    let xq = pos_x - pos_x.floor();
    let yq = pos_y - pos_y.floor();
    let mut hx = jround(pos_x);
    let mut hy = jround(pos_y);
    if yq > -xq + 1.0 {
        if yq < 2.0 * xq && yq > 0.5 * xq {
            hx = x0 + 1;
            hy = y0 + 1;
        }
    } else if yq < -xq + 1.0 && yq > (2.0 * xq) - 1.0 && yq < (0.5 * xq) + 0.5 {
        hx = x0;
        hy = y0;
    }
    adjust_cell(hx, hy, level)
}

/// Normalizes cell coordinates that step across the dateline seam.
fn adjust_cell(mut x: i64, mut y: i64, level: u8) -> (i64, i64) {
    let max_hsteps = pow3(level + 2);
    let hsteps = (x - y).abs();
    if hsteps == max_hsteps && x > y {
        std::mem::swap(&mut x, &mut y);
    } else if hsteps > max_hsteps {
        let dif = hsteps - max_hsteps;
        let dif_x = dif / 2;
        let dif_y = dif - dif_x;
        if x > y {
            let edge_x = y + dif_y;
            let edge_y = x - dif_x;
            x = edge_x + dif_x;
            y = edge_y - dif_y;
        } else {
            let edge_y = x + dif_y;
            let edge_x = y - dif_x;
            y = edge_y + dif_x;
            x = edge_x - dif_y;
        }
    }
    (x, y)
}

/// Center coordinates and canonical code of a cell.
fn zone_of_cell(x: i64, y: i64, level: u8) -> (f64, f64, GeoCode) {
    let size = hex_size(level);
    let unit_x = 6.0 * size;
    let unit_y = 6.0 * size * K;
    let mut hx = x;
    let mut hy = y;
    let cy = (K * hx as f64 * unit_x + hy as f64 * unit_y) / 2.0;
    let cx = (cy - hy as f64 * unit_y) / K;
    let (mut lon, lat) = xy_to_loc(cx, cy);

    let max_hsteps = pow3(level + 2);
    if (hx - hy).abs() == max_hsteps {
        if hx > hy {
            std::mem::swap(&mut hx, &mut hy);
        }
        lon = -180.0;
    }

    let digit_count = level as usize + 3;
    let mut code3_x = [0i8; 18];
    let mut code3_y = [0i8; 18];
    let mut mod_x = hx;
    let mut mod_y = hy;
    for i in 0..digit_count {
        let h_pow = pow3(level + 2 - i as u8);
        let half = (h_pow + 1) / 2;
        if mod_x >= half {
            code3_x[i] = 2;
            mod_x -= h_pow;
        } else if mod_x <= -half {
            code3_x[i] = 0;
            mod_x += h_pow;
        } else {
            code3_x[i] = 1;
        }
        if mod_y >= half {
            code3_y[i] = 2;
            mod_y -= h_pow;
        } else if mod_y <= -half {
            code3_y[i] = 0;
            mod_y += h_pow;
        } else {
            code3_y[i] = 1;
        }
        if i == 2 && (lon == -180.0 || lon >= 0.0) {
            if code3_x[0] == 2
                && code3_y[0] == 1
                && code3_x[1] == code3_y[1]
                && code3_x[2] == code3_y[2]
            {
                code3_x[0] = 1;
                code3_y[0] = 2;
            } else if code3_x[0] == 1
                && code3_y[0] == 0
                && code3_x[1] == code3_y[1]
                && code3_x[2] == code3_y[2]
            {
                code3_x[0] = 0;
                code3_y[0] = 1;
            }
        }
    }

    let mut digits = [0u8; 18];
    for i in 0..digit_count {
        digits[i] = (code3_x[i] * 3 + code3_y[i]) as u8;
    }
    let head = digits[0] as usize * 100 + digits[1] as usize * 10 + digits[2] as usize;
    let mut code = String::with_capacity(level as usize + 2);
    code.push(KEY[head / 30] as char);
    code.push(KEY[head % 30] as char);
    for &d in &digits[3..digit_count] {
        code.push((b'0' + d) as char);
    }
    (lat, lon, GeoCode(code))
}

fn digits_of(code: &GeoCode) -> Vec<u8> {
    let bytes = code.0.as_bytes();
    let a = head_index(bytes[0]).expect("validated head");
    let b = head_index(bytes[1]).expect("validated head");
    let head = a * 30 + b;
    let mut digits = vec![(head / 100) as u8, ((head / 10) % 10) as u8, (head % 10) as u8];
    digits.extend(bytes[2..].iter().map(|c| c - b'0'));
    digits
}

fn candidate_digit_readings(digits: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![digits.to_vec()];
    if (digits[0] == 5 || digits[0] == 1)
        && matches!(digits[1], 0 | 4 | 8)
        && matches!(digits[2], 0 | 4 | 8)
    {
        let mut alt = digits.to_vec();
        alt[0] = if digits[0] == 5 { 7 } else { 3 };
        out.push(alt);
    }
    out
}

fn cell_from_digits(digits: &[u8], level: u8) -> (i64, i64) {
    let mut x = 0i64;
    let mut y = 0i64;
    for (i, &d) in digits.iter().enumerate() {
        let h_pow = pow3(level + 2 - i as u8);
        match d / 3 {
            0 => x -= h_pow,
            2 => x += h_pow,
            _ => {}
        }
        match d % 3 {
            0 => y -= h_pow,
            2 => y += h_pow,
            _ => {}
        }
    }
    adjust_cell(x, y, level)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon)
    }

    #[test]
    fn code_length_is_level_plus_two() {
        let p = pt(35.658581, 139.745433);
        assert_eq!(encode(p, 0).unwrap().as_str().len(), 2);
        assert_eq!(encode(p, 7).unwrap().as_str().len(), 9);
        assert_eq!(encode(p, 15).unwrap().as_str().len(), 17);
    }

    #[test]
    fn level_out_of_range() {
        assert_eq!(
            encode(pt(0.0, 0.0), 16).unwrap_err(),
            GeoHexError::LevelOutOfRange
        );
    }

    #[test]
    fn point_out_of_bounds() {
        assert_eq!(
            encode(pt(86.0, 0.0), 3).unwrap_err(),
            GeoHexError::PointOutOfBounds
        );
        assert_eq!(
            encode(pt(0.0, 180.0), 3).unwrap_err(),
            GeoHexError::PointOutOfBounds
        );
        assert!(encode(pt(0.0, -180.0), 3).is_ok());
    }

    #[test]
    fn decode_is_fixed_point_of_encode() {
        for &(lat, lon, level) in &[
            (35.658581, 139.745433, 7u8),
            (0.0, 0.0, 0),
            (-45.0, 179.5, 2),
            (-82.876664, -37.345725, 1),
            (85.0511, 0.0, 4),
        ] {
            let code = encode(pt(lat, lon), level).unwrap();
            let cell = decode(&code).unwrap();
            assert_eq!(cell.code, code);
            assert_eq!(cell.level, level);
            let again = encode_raw(cell.center.lat, cell.center.lon, level).unwrap();
            assert_eq!(again, code);
        }
    }

    #[test]
    fn malformed_codes_rejected() {
        assert_eq!(GeoCode::parse("X").unwrap_err(), GeoHexError::MalformedCode);
        assert_eq!(GeoCode::parse("!!").unwrap_err(), GeoHexError::MalformedCode);
        assert_eq!(
            GeoCode::parse("XM9").unwrap_err(),
            GeoHexError::MalformedCode
        );
        assert_eq!(
            GeoCode::parse("XM48854450000000000").unwrap_err(),
            GeoHexError::MalformedCode
        );
        // 'z' is in the published key string but can never head a code.
        assert_eq!(GeoCode::parse("zz").unwrap_err(), GeoHexError::MalformedCode);
    }

    #[test]
    fn contains_is_reflexive_and_nests_interior_points() {
        let p = pt(35.658581, 139.745433);
        let c3 = encode(p, 3).unwrap();
        let c9 = encode(p, 9).unwrap();
        assert!(contains(&c3, &c3).unwrap());
        assert!(contains(&c3, &c9).unwrap());
    }

    #[test]
    fn contains_rejects_antipodal_cells() {
        let a = encode(pt(35.0, 139.0), 3).unwrap();
        let b = encode(pt(-35.0, -41.0), 3).unwrap();
        assert!(!contains(&a, &b).unwrap());
    }

    #[test]
    fn contains_level_order() {
        let coarse = encode(pt(10.0, 10.0), 5).unwrap();
        let fine = encode(pt(10.0, 10.0), 9).unwrap();
        assert_eq!(
            contains(&fine, &coarse).unwrap_err(),
            GeoHexError::LevelOrderViolation
        );
    }

    #[test]
    fn spatial_filter_preserves_order_and_same_level_is_equality() {
        let q = encode(pt(10.0, 10.0), 15).unwrap();
        let same = q.clone();
        let other = encode(pt(-10.0, -10.0), 15).unwrap();
        let out = spatial_filter(&q, &[other.clone(), same.clone(), other]).unwrap();
        assert_eq!(out, vec![same]);
        assert!(spatial_filter(&q, &[]).unwrap().is_empty());
    }

    #[test]
    fn filter_returns_points_derived_from_query_center() {
        let q = encode(pt(48.2, 16.37), 5).unwrap();
        let center = decode(&q).unwrap().center;
        let mut cands = Vec::new();
        for i in 0..8 {
            let d = 1e-4 * i as f64;
            cands.push(encode(pt(center.lat + d, center.lon + d), 9).unwrap());
        }
        let kept = spatial_filter(&q, &cands).unwrap();
        assert_eq!(kept.len(), cands.len());
    }

    #[test]
    fn polygon_corners_reencode_near_cell() {
        let code = encode(pt(35.658581, 139.745433), 6).unwrap();
        let cell = decode(&code).unwrap();
        for corner in cell_polygon(&cell) {
            assert!(corner.lat.is_finite() && corner.lon.is_finite());
        }
    }
}
