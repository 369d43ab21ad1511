//! Equirectangular tile pyramid. Zoom `z` has `2^(z+1)` columns in ra and
//! `2^z` rows in dec; row 0 touches the north pole.

use crate::htm::{ConvexRegion, Halfspace, UnitVector};
use crate::store::{CatalogState, TableName, ViewFilter};

pub const TILE_SIZE: u32 = 256;
pub const MAX_ZOOM: u8 = 3;

const BRIGHT_MAG: f64 = 14.0;
const FAINT_MAG: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileAddress {
    pub zoom: u8,
    pub tx: u32,
    pub ty: u32,
}

impl TileAddress {
    pub fn new(zoom: u8, tx: u32, ty: u32) -> Option<Self> {
        (zoom <= MAX_ZOOM && tx < 2 << zoom && ty < 1 << zoom).then_some(Self { zoom, tx, ty })
    }

    pub fn all(zoom: u8) -> impl Iterator<Item = TileAddress> {
        (0..1u32 << zoom).flat_map(move |ty| (0..2u32 << zoom).map(move |tx| TileAddress { zoom, tx, ty }))
    }

    fn width(&self) -> f64 {
        360.0 / f64::from(2u32 << self.zoom)
    }

    fn height(&self) -> f64 {
        180.0 / f64::from(1u32 << self.zoom)
    }

    /// `(ra_min, ra_max, dec_min, dec_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let (w, h) = (self.width(), self.height());
        let top = 90.0 - f64::from(self.ty) * h;
        (f64::from(self.tx) * w, f64::from(self.tx + 1) * w, top - h, top)
    }

    /// Half-open in both axes, except that the top row also owns dec = 90.
    pub fn contains(&self, ra: f64, dec: f64) -> bool {
        let (r0, r1, d0, d1) = self.bounds();
        ra >= r0 && ra < r1 && dec >= d0 && (dec < d1 || (self.ty == 0 && dec == 90.0))
    }

    /// The tile owning a position; `ra` in [0, 360), `dec` in [-90, 90].
    pub fn containing(zoom: u8, ra: f64, dec: f64) -> Option<Self> {
        let probe = TileAddress { zoom, tx: 0, ty: 0 };
        let tx = ((ra / probe.width()).floor() as i64).clamp(0, (2i64 << zoom) - 1) as u32;
        let rows = 1i64 << zoom;
        let guess = ((90.0 - dec) / probe.height()).floor() as i64;
        // a row boundary belongs to the row above it, which floor does not give
        [guess - 1, guess, guess + 1]
            .into_iter()
            .filter(|ty| (0..rows).contains(ty))
            .map(|ty| TileAddress { zoom, tx, ty: ty as u32 })
            .find(|t| t.contains(ra, dec))
    }

    /// Pixel of a position inside this tile, x east-to-west in ra, y north-down.
    pub fn pixel(&self, ra: f64, dec: f64) -> (u32, u32) {
        let (r0, _, _, d1) = self.bounds();
        let s = f64::from(TILE_SIZE);
        let x = ((ra - r0) / self.width() * s).floor().clamp(0.0, s - 1.0);
        let y = ((d1 - dec) / self.height() * s).floor().clamp(0.0, s - 1.0);
        (x as u32, y as u32)
    }

    /// A slightly padded convex region around the tile, for index pruning.
    fn region(&self) -> Option<ConvexRegion> {
        if self.zoom == 0 {
            return None;
        }
        let pad = 1e-9;
        let (r0, r1, d0, d1) = self.bounds();
        let (a, b) = (r0.to_radians(), r1.to_radians());
        let mut hs = vec![
            Halfspace::new(UnitVector::new_unchecked(-a.sin(), a.cos(), 0.0), -pad).ok()?,
            Halfspace::new(UnitVector::new_unchecked(b.sin(), -b.cos(), 0.0), -pad).ok()?,
        ];
        if d0 > -90.0 {
            hs.push(Halfspace::new(UnitVector::new_unchecked(0.0, 0.0, 1.0), d0.to_radians().sin() - pad).ok()?);
        }
        if d1 < 90.0 {
            hs.push(Halfspace::new(UnitVector::new_unchecked(0.0, 0.0, -1.0), -d1.to_radians().sin() - pad).ok()?);
        }
        ConvexRegion::new(hs).ok()
    }
}

/// PhotoObj rows of primary objects owned by the tile, in storage order.
pub fn tile_rows(state: &CatalogState, addr: TileAddress) -> Vec<usize> {
    let photo = state.table(TableName::PhotoObj);
    let (ra, dec) = (photo.floats("ra"), photo.floats("dec"));
    let keep = |r: usize| ViewFilter::Primary.matches(photo, r) && addr.contains(ra[r], dec[r]);
    match addr.region().and_then(|reg| crate::query::region_cover(&reg).ok()) {
        Some(ranges) => {
            let mut rows = Vec::new();
            state.range_scan(&ranges, |r| {
                if keep(r) {
                    rows.push(r);
                }
            });
            rows.sort_unstable();
            rows
        }
        None => (0..photo.len()).filter(|r| keep(*r)).collect(),
    }
}

/// Square-root stretch of the r magnitude onto 0..=255.
pub fn intensity(r_mag: f64) -> f64 {
    let t = ((FAINT_MAG - r_mag) / (FAINT_MAG - BRIGHT_MAG)).clamp(0.0, 1.0);
    if t.is_nan() {
        return 0.0;
    }
    255.0 * t.sqrt()
}

/// Channel weights by g-r color.
pub fn hue(g_minus_r: f64) -> [f64; 3] {
    if g_minus_r <= 0.4 {
        [0.75, 0.85, 1.0]
    } else if g_minus_r <= 0.8 {
        [1.0, 0.9, 0.35]
    } else {
        [1.0, 0.4, 0.3]
    }
}

/// RGB pixels of a tile, row-major.
pub fn render_pixels(state: &CatalogState, addr: TileAddress) -> Vec<u8> {
    let n = TILE_SIZE as usize;
    let mut px = vec![0u8; n * n * 3];
    let photo = state.table(TableName::PhotoObj);
    let (ra, dec) = (photo.floats("ra"), photo.floats("dec"));
    let (g, r) = (photo.floats("modelMag_g"), photo.floats("modelMag_r"));
    for row in tile_rows(state, addr) {
        let i = intensity(r[row]);
        let color = hue(g[row] - r[row]).map(|w| w * i);
        let (x, y) = addr.pixel(ra[row], dec[row]);
        let mut plot = |dx: i64, dy: i64, scale: f64| {
            let (xx, yy) = (i64::from(x) + dx, i64::from(y) + dy);
            if xx < 0 || yy < 0 || xx >= n as i64 || yy >= n as i64 {
                return;
            }
            let at = (yy as usize * n + xx as usize) * 3;
            for (c, v) in color.iter().enumerate() {
                px[at + c] = px[at + c].max((v * scale).round() as u8);
            }
        };
        plot(0, 0, 1.0);
        for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            plot(dx, dy, 0.5);
        }
    }
    px
}

/// PNG-encoded tile.
pub fn render_tile(state: &CatalogState, addr: TileAddress) -> Vec<u8> {
    let pixels = render_pixels(state, addr);
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, TILE_SIZE, TILE_SIZE);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().expect("in-memory png header");
    w.write_image_data(&pixels).expect("in-memory png data");
    w.finish().expect("in-memory png finish");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addresses_and_bounds() {
        assert!(TileAddress::new(0, 1, 0).is_some());
        assert!(TileAddress::new(0, 2, 0).is_none());
        assert!(TileAddress::new(3, 15, 7).is_some());
        assert!(TileAddress::new(3, 16, 7).is_none());
        assert!(TileAddress::new(4, 0, 0).is_none());
        assert_eq!(TileAddress::new(1, 1, 1).unwrap().bounds(), (90.0, 180.0, -90.0, 0.0));
        assert_eq!(TileAddress::all(2).count(), 32);
    }

    #[test]
    fn boundaries_belong_to_one_tile() {
        for z in 0..=MAX_ZOOM {
            for (ra, dec) in [(0.0, 90.0), (0.0, -90.0), (90.0, 0.0), (359.999_999, 45.0), (180.0, -22.5)] {
                let owners: Vec<_> = TileAddress::all(z).filter(|t| t.contains(ra, dec)).collect();
                assert_eq!(owners.len(), 1, "z{z} ({ra}, {dec})");
                assert_eq!(TileAddress::containing(z, ra, dec), Some(owners[0]));
            }
        }
    }

    #[test]
    fn stretch_and_hue() {
        assert_eq!(intensity(14.0), 255.0);
        assert_eq!(intensity(24.0), 0.0);
        assert_eq!(intensity(30.0), 0.0);
        assert!((intensity(21.5) - 255.0 * 0.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(intensity(f64::NAN), 0.0);
        assert_eq!(hue(0.4), [0.75, 0.85, 1.0]);
        assert_eq!(hue(0.8)[2], 0.35);
        assert_eq!(hue(0.81)[1], 0.4);
    }
}
