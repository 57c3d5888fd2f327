//! 8-bit rasters with binary PGM/PPM I/O and the 2x up/down rescaling used
//! by the zoom patch makers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{PatchRegion, Scale};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Range(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::Range(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        Raster::new(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn channels(&self) -> u8 {
        self.channels
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn idx(&self, x: u32, y: u32, c: u8) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize
    }

    #[inline]
    pub fn sample(&self, x: u32, y: u32, c: u8) -> u8 {
        self.data[self.idx(x, y, c)]
    }

    fn row_bytes(&self) -> usize {
        self.width as usize * self.channels as usize
    }

    /// Encodes as binary PGM (1 channel) or PPM (3 channels), maxval 255.
    pub fn to_pnm_bytes(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_pnm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = HeaderCursor { bytes, pos: 0 };
        let magic = cur.token("magic")?;
        let channels = match magic {
            b"P5" => 1,
            b"P6" => 3,
            other => {
                return Err(Error::RasterParse {
                    field: "magic",
                    reason: format!(
                        "expected P5 or P6, got {:?}",
                        String::from_utf8_lossy(other)
                    ),
                })
            }
        };
        let width = cur.number("width")?;
        let height = cur.number("height")?;
        let maxval = cur.number("maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::RasterParse {
                field: if width == 0 { "width" } else { "height" },
                reason: "must be positive".into(),
            });
        }
        if maxval != 255 {
            return Err(Error::RasterParse {
                field: "maxval",
                reason: format!("only 255 is supported, got {maxval}"),
            });
        }
        // exactly one whitespace byte separates the header from the payload
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(Error::RasterParse {
                    field: "maxval",
                    reason: "missing whitespace before payload".into(),
                })
            }
        }
        let expected = width as usize * height as usize * channels as usize;
        let payload = &bytes[cur.pos..];
        if payload.len() < expected {
            return Err(Error::RasterParse {
                field: "payload",
                reason: format!(
                    "truncated: expected {expected} bytes, found {}",
                    payload.len()
                ),
            });
        }
        Raster::new(width, height, channels, payload[..expected].to_vec())
    }

    /// Copies a sub-rectangle. The region must lie inside the raster.
    pub fn crop(&self, region: &PatchRegion) -> Result<Raster> {
        let x1 = u64::from(region.x0) + u64::from(region.w);
        let y1 = u64::from(region.y0) + u64::from(region.h);
        if region.w == 0
            || region.h == 0
            || x1 > u64::from(self.width)
            || y1 > u64::from(self.height)
        {
            return Err(Error::Range(format!(
                "region {},{} {}x{} outside {}x{} raster",
                region.x0, region.y0, region.w, region.h, self.width, self.height
            )));
        }
        let ch = self.channels as usize;
        let mut data = Vec::with_capacity(region.w as usize * region.h as usize * ch);
        for y in region.y0..region.y0 + region.h {
            let start = self.idx(region.x0, y, 0);
            data.extend_from_slice(&self.data[start..start + region.w as usize * ch]);
        }
        Raster::new(region.w, region.h, self.channels, data)
    }

    /// Extends the raster to `width x height` by replicating the last column
    /// and row.
    pub fn pad_edge(&self, width: u32, height: u32) -> Result<Raster> {
        if width < self.width || height < self.height {
            return Err(Error::Range(format!(
                "cannot pad {}x{} down to {width}x{height}",
                self.width, self.height
            )));
        }
        let ch = self.channels as usize;
        let mut data = Vec::with_capacity(width as usize * height as usize * ch);
        for y in 0..height {
            let sy = y.min(self.height - 1);
            let start = self.idx(0, sy, 0);
            let row = &self.data[start..start + self.row_bytes()];
            data.extend_from_slice(row);
            let last = &row[row.len() - ch..];
            for _ in self.width..width {
                data.extend_from_slice(last);
            }
        }
        Raster::new(width, height, self.channels, data)
    }

    /// Rescales by 1/2 (2x2 box average) or 2 (bilinear, clamped edges).
    /// Results are rounded half away from zero.
    pub fn rescale(&self, factor: Scale) -> Result<Raster> {
        match factor {
            Scale::One => Ok(self.clone()),
            Scale::Half => self.downscale_half(),
            Scale::Two => Ok(self.upscale_double()),
        }
    }

    fn downscale_half(&self) -> Result<Raster> {
        if !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return Err(Error::Rescale(format!(
                "1/2 rescale needs even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w as usize * h as usize * self.channels as usize);
        for y in 0..h {
            for x in 0..w {
                for c in 0..self.channels {
                    let sum = u32::from(self.sample(2 * x, 2 * y, c))
                        + u32::from(self.sample(2 * x + 1, 2 * y, c))
                        + u32::from(self.sample(2 * x, 2 * y + 1, c))
                        + u32::from(self.sample(2 * x + 1, 2 * y + 1, c));
                    data.push(((sum + 2) / 4) as u8);
                }
            }
        }
        Raster::new(w, h, self.channels, data)
    }

    fn upscale_double(&self) -> Raster {
        // Pixel centres map as src = (dst + 0.5) / 2 - 0.5, so every output
        // sample blends two neighbours per axis with weights 3/4 and 1/4.
        let taps = |dst: u32, len: u32| -> (u32, u32) {
            let i = dst / 2;
            if dst.is_multiple_of(2) {
                (i.saturating_sub(1), i) // 1/4 on the first, 3/4 on the second
            } else {
                (i, (i + 1).min(len - 1)) // 3/4 on the first, 1/4 on the second
            }
        };
        let weights = |dst: u32| -> (u32, u32) {
            if dst.is_multiple_of(2) {
                (1, 3)
            } else {
                (3, 1)
            }
        };
        let (w, h) = (self.width * 2, self.height * 2);
        let mut data = Vec::with_capacity(w as usize * h as usize * self.channels as usize);
        for y in 0..h {
            let (ya, yb) = taps(y, self.height);
            let (wya, wyb) = weights(y);
            for x in 0..w {
                let (xa, xb) = taps(x, self.width);
                let (wxa, wxb) = weights(x);
                for c in 0..self.channels {
                    let s = |sx, sy| u32::from(self.sample(sx, sy, c));
                    let acc = wya * (wxa * s(xa, ya) + wxb * s(xb, ya))
                        + wyb * (wxa * s(xa, yb) + wxb * s(xb, yb));
                    data.push(((acc + 8) / 16) as u8);
                }
            }
        }
        Raster {
            width: w,
            height: h,
            channels: self.channels,
            data,
        }
    }
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Raster::from_pnm_bytes(&bytes)
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<()> {
    crate::manifest::write_atomic(path, &raster.to_pnm_bytes())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self, field: &'static str) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::RasterParse {
                field,
                reason: "missing".into(),
            });
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, field: &'static str) -> Result<u32> {
        let tok = self.token(field)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| Error::RasterParse {
                field,
                reason: format!("not a number: {:?}", String::from_utf8_lossy(tok)),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: u32, h: u32, data: Vec<u8>) -> Raster {
        Raster::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn reads_p5() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 64, 128, 255]);
        let r = Raster::from_pnm_bytes(&bytes).unwrap();
        assert_eq!(r, gray(2, 2, vec![0, 64, 128, 255]));
    }

    #[test]
    fn reads_p6_with_comment() {
        let mut bytes = b"P6 # rgb\n3 1\n255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 255, 0, 0, 0, 255]);
        let r = Raster::from_pnm_bytes(&bytes).unwrap();
        assert_eq!(r.channels(), 3);
        assert_eq!(r.data(), &[255, 0, 0, 0, 255, 0, 0, 0, 255]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend([0u8; 15]);
        match Raster::from_pnm_bytes(&bytes) {
            Err(Error::RasterParse { field, .. }) => assert_eq!(field, "payload"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors_name_the_field() {
        let field = |b: &[u8]| match Raster::from_pnm_bytes(b) {
            Err(Error::RasterParse { field, .. }) => field,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(field(b"P3\n1 1\n255\n0"), "magic");
        assert_eq!(field(b"P5\nx 1\n255\n0"), "width");
        assert_eq!(field(b"P5\n1 1\n65535\n00"), "maxval");
        assert_eq!(field(b"P5\n1"), "height");
    }

    #[test]
    fn crop_cases() {
        let r = gray(4, 2, (0..8).collect());
        assert_eq!(
            r.crop(&PatchRegion::new(0, 0, 4, 2, Scale::One)).unwrap(),
            r
        );
        assert_eq!(
            r.crop(&PatchRegion::new(0, 0, 1, 1, Scale::One))
                .unwrap()
                .data(),
            &[0]
        );
        // right half: columns 2..3 of each row
        let expected: Vec<u8> = (0..2u8)
            .flat_map(|y| (2..4u8).map(move |x| y * 4 + x))
            .collect();
        assert_eq!(
            r.crop(&PatchRegion::new(2, 0, 2, 2, Scale::One))
                .unwrap()
                .data(),
            &expected[..]
        );
        assert!(r.crop(&PatchRegion::new(3, 0, 2, 2, Scale::One)).is_err());
    }

    #[test]
    fn rescale_examples() {
        let c = Raster::filled(6, 4, 3, 77).unwrap();
        assert_eq!(
            c.rescale(Scale::Half).unwrap(),
            Raster::filled(3, 2, 3, 77).unwrap()
        );
        assert_eq!(
            c.rescale(Scale::Two).unwrap(),
            Raster::filled(12, 8, 3, 77).unwrap()
        );

        let blocks = gray(2, 2, vec![10, 10, 30, 30]);
        assert_eq!(blocks.rescale(Scale::Half).unwrap().data(), &[20]);

        let one = gray(1, 1, vec![9]);
        assert_eq!(one.rescale(Scale::Two).unwrap(), gray(2, 2, vec![9; 4]));

        assert!(gray(3, 2, vec![0; 6]).rescale(Scale::Half).is_err());
    }

    #[test]
    fn downscale_rounds_half_up() {
        // sum 2 -> 0.5 -> 1; sum 5 -> 1.25 -> 1; sum 6 -> 1.5 -> 2
        assert_eq!(
            gray(2, 2, vec![1, 1, 0, 0])
                .rescale(Scale::Half)
                .unwrap()
                .data(),
            &[1]
        );
        assert_eq!(
            gray(2, 2, vec![2, 1, 1, 1])
                .rescale(Scale::Half)
                .unwrap()
                .data(),
            &[1]
        );
        assert_eq!(
            gray(2, 2, vec![2, 2, 1, 1])
                .rescale(Scale::Half)
                .unwrap()
                .data(),
            &[2]
        );
    }

    #[test]
    fn upscale_bilinear_weights() {
        // 1D ramp [0, 100]: outputs at src positions -0.25, 0.25, 0.75, 1.25
        let r = gray(2, 1, vec![0, 100]);
        let up = r.rescale(Scale::Two).unwrap();
        assert_eq!(up.data()[..4], [0, 25, 75, 100]);
        assert_eq!(up.data()[..4], up.data()[4..]);
    }

    #[test]
    fn pad_replicates_edges() {
        let r = gray(2, 1, vec![1, 2]);
        let p = r.pad_edge(3, 2).unwrap();
        assert_eq!(p.data(), &[1, 2, 2, 1, 2, 2]);
    }

    fn raster_strategy() -> impl Strategy<Value = Raster> {
        (1u32..9, 1u32..9, prop_oneof![Just(1u8), Just(3u8)]).prop_flat_map(|(w, h, c)| {
            proptest::collection::vec(any::<u8>(), (w * h * c as u32) as usize)
                .prop_map(move |d| Raster::new(w, h, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pnm_round_trip(r in raster_strategy()) {
            let bytes = r.to_pnm_bytes();
            let back = Raster::from_pnm_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_pnm_bytes(), bytes);
            prop_assert_eq!(back, r);
        }

        #[test]
        fn downscale_preserves_mean(
            (w, h, data) in (1u32..8, 1u32..8).prop_flat_map(|(hw, hh)| {
                (Just(hw * 2), Just(hh * 2), proptest::collection::vec(any::<u8>(), (4 * hw * hh) as usize))
            })
        ) {
            let r = gray(w, h, data);
            let d = r.rescale(Scale::Half).unwrap();
            let mean = |x: &Raster| x.data().iter().map(|&v| f64::from(v)).sum::<f64>() / x.data().len() as f64;
            prop_assert!((mean(&r) - mean(&d)).abs() <= 0.5);
        }

        #[test]
        fn tiled_crops_cover_every_sample(r in raster_strategy(), tw in 1u32..5, th in 1u32..5) {
            let mut seen = vec![0u32; r.data().len()];
            let mut y = 0;
            while y < r.height() {
                let mut x = 0;
                let h = th.min(r.height() - y);
                while x < r.width() {
                    let w = tw.min(r.width() - x);
                    let c = r.crop(&PatchRegion::new(x, y, w, h, Scale::One)).unwrap();
                    for cy in 0..h {
                        for cx in 0..w {
                            for ch in 0..r.channels() {
                                prop_assert_eq!(c.sample(cx, cy, ch), r.sample(x + cx, y + cy, ch));
                                seen[r.idx(x + cx, y + cy, ch)] += 1;
                            }
                        }
                    }
                    x += w;
                }
                y += h;
            }
            prop_assert!(seen.iter().all(|&n| n == 1));
        }
    }
}
