use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Adu;
use crate::error::{Error, Result};

/// Input pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Sample positions along one axis: `(low, high, delta)` where `low` and
/// `high` are the floor/ceil neighbours of `idx · in_len / out_len`, clamped
/// to the last valid index, and `delta` is the fractional part.
pub(crate) fn axis_neighbors(in_len: usize, out_len: usize, idx: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let pos = idx as f64 * scale;
    let floor = pos.floor();
    let last = in_len - 1;
    let low = (floor as usize).min(last);
    let high = (pos.ceil() as usize).min(last);
    (low, high, pos - floor)
}

/// Grouping of input pixels into 4-pixel tiles, one per output pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileMap {
    /// `(height, width)` of the input image.
    pub in_dims: (usize, usize),
    /// `(height, width)` of the output image.
    pub out_dims: (usize, usize),
    /// Per output pixel, in row-major output order: `(x1,y1), (x2,y1), (x1,y2), (x2,y2)`.
    pub order: Vec<[Coord; 4]>,
    /// Input pixels no tile references, in row-major order.
    pub skip_set: Vec<Coord>,
}

impl TileMap {
    pub fn tile(&self, out_row: usize, out_col: usize) -> &[Coord; 4] {
        &self.order[out_row * self.out_dims.1 + out_col]
    }

    /// Bytes one tile occupies in a tile-major stream.
    pub fn tile_bytes(&self, channels: usize) -> usize {
        4 * channels
    }
}

pub fn build_tile_map(in_dims: (usize, usize), out_dims: (usize, usize)) -> Result<TileMap> {
    let (in_h, in_w) = in_dims;
    let (out_h, out_w) = out_dims;
    if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::BadDims(format!("tile map {in_dims:?} -> {out_dims:?}")));
    }
    let cols: Vec<_> = (0..out_w).map(|x| axis_neighbors(in_w, out_w, x)).collect();
    let mut order = Vec::with_capacity(out_h * out_w);
    let mut referenced = vec![false; in_h * in_w];
    for y in 0..out_h {
        let (y1, y2, _) = axis_neighbors(in_h, out_h, y);
        for &(x1, x2, _) in &cols {
            let tile = [Coord::new(y1, x1), Coord::new(y1, x2), Coord::new(y2, x1), Coord::new(y2, x2)];
            for c in &tile {
                referenced[c.row * in_w + c.col] = true;
            }
            order.push(tile);
        }
    }
    let skip_set =
        referenced.iter().enumerate().filter(|(_, &r)| !r).map(|(i, _)| Coord::new(i / in_w, i % in_w)).collect();
    Ok(TileMap { in_dims, out_dims, order, skip_set })
}

/// Emits the image tile by tile. Coordinates repeated within a tile are
/// re-sent; pixels in the skip set never appear.
pub fn serialize_tile_major(image: &Adu, map: &TileMap) -> Result<Vec<u8>> {
    let (h, w, c) = image.image_dims()?;
    if (h, w) != map.in_dims {
        return Err(Error::MapMismatch(format!("image is {h}x{w}, map expects {:?}", map.in_dims)));
    }
    let px = image.payload();
    let mut out = Vec::with_capacity(map.order.len() * 4 * c);
    for tile in &map.order {
        for coord in tile {
            let base = (coord.row * w + coord.col) * c;
            out.extend_from_slice(&px[base..base + c]);
        }
    }
    Ok(out)
}

/// Referenced input coordinates, for checks against the skip set.
pub fn referenced_coords(map: &TileMap) -> BTreeSet<Coord> {
    map.order.iter().flat_map(|t| t.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_scale_maps_to_self() {
        let map = build_tile_map((4, 4), (4, 4)).unwrap();
        assert!(map.skip_set.is_empty());
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(map.tile(y, x), &[Coord::new(y, x); 4]);
            }
        }
    }

    #[test]
    fn downscale_two_to_one() {
        let map = build_tile_map((2, 2), (1, 1)).unwrap();
        assert_eq!(map.order, vec![[Coord::new(0, 0); 4]]);
        assert_eq!(map.skip_set, vec![Coord::new(0, 1), Coord::new(1, 0), Coord::new(1, 1)]);
    }

    #[test]
    fn hd_to_224_skips_pixels() {
        let map = build_tile_map((720, 1280), (224, 224)).unwrap();
        // brute force: mark every referenced pixel independently of the map's own bookkeeping
        let mut seen = vec![false; 720 * 1280];
        for y in 0..224 {
            let yin = y as f64 * 720.0 / 224.0;
            for x in 0..224 {
                let xin = x as f64 * 1280.0 / 224.0;
                for r in [yin.floor(), yin.ceil()] {
                    for c in [xin.floor(), xin.ceil()] {
                        seen[(r as usize).min(719) * 1280 + (c as usize).min(1279)] = true;
                    }
                }
            }
        }
        let unseen = seen.iter().filter(|s| !**s).count();
        assert!(unseen > 0);
        assert_eq!(map.skip_set.len(), unseen);
        let referenced = referenced_coords(&map);
        assert!(map.skip_set.iter().all(|c| !referenced.contains(c)));
        assert_eq!(referenced.len() + map.skip_set.len(), 720 * 1280);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(build_tile_map((0, 2), (1, 1)), Err(Error::BadDims(_))));
        assert!(matches!(build_tile_map((2, 2), (1, 0)), Err(Error::BadDims(_))));
    }

    #[test]
    fn edge_neighbors_clamp() {
        // upscale: last output column lands past the last input pixel
        let (lo, hi, d) = axis_neighbors(2, 3, 2);
        assert_eq!((lo, hi), (1, 1));
        assert!((d - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tile_major_identity_repeats_pixels() {
        let img = Adu::image(2, 2, 1, vec![10, 11, 12, 13]).unwrap();
        let map = build_tile_map((2, 2), (2, 2)).unwrap();
        let bytes = serialize_tile_major(&img, &map).unwrap();
        assert_eq!(bytes, vec![10, 10, 10, 10, 11, 11, 11, 11, 12, 12, 12, 12, 13, 13, 13, 13]);
        assert_eq!(bytes.len(), 4 * img.payload().len());
    }

    #[test]
    fn tile_major_downscale_sends_four_bytes() {
        let img = Adu::image(2, 2, 1, vec![42, 1, 2, 3]).unwrap();
        let map = build_tile_map((2, 2), (1, 1)).unwrap();
        assert_eq!(serialize_tile_major(&img, &map).unwrap(), vec![42; 4]);
    }

    #[test]
    fn tile_major_map_mismatch() {
        let img = Adu::image(3, 2, 1, vec![0; 6]).unwrap();
        let map = build_tile_map((2, 2), (1, 1)).unwrap();
        assert!(matches!(serialize_tile_major(&img, &map), Err(Error::MapMismatch(_))));
    }
}
