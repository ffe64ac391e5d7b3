//! Run-length encoded binary masks.
//!
//! Counts alternate between runs of 0s and 1s in column-major scan order
//! (down each column, then left to right), starting with a run of 0s that may
//! be empty. Pixel `(row, col)` has linear index `col * height + row`.
//! Areas and intersections are computed directly on runs in integer
//! arithmetic.

use crate::bbox::BBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    pub height: u32,
    pub width: u32,
    pub counts: Vec<u32>,
}

/// Dense binary grid stored column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    height: u32,
    width: u32,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(height: u32, width: u32) -> Self {
        Self {
            height,
            width,
            data: vec![false; height as usize * width as usize],
        }
    }

    /// Builds from a column-major pixel vector.
    pub fn from_column_major(height: u32, width: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != height as usize * width as usize {
            return Err(Error::DimensionMismatch(format!(
                "bitmap has {} pixels, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[col as usize * self.height as usize + row as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.data[col as usize * self.height as usize + row as usize] = value;
    }

    pub fn as_column_major(&self) -> &[bool] {
        &self.data
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|&&p| p).count() as u64
    }
}

impl RleMask {
    pub fn empty(height: u32, width: u32) -> Self {
        Self {
            height,
            width,
            counts: vec![height * width],
        }
    }

    pub fn pixel_count(&self) -> u64 {
        self.height as u64 * self.width as u64
    }

    /// Checks the count invariants: the sum matches the grid size and only
    /// the first run may be empty.
    pub fn validate(&self) -> Result<()> {
        let sum: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if sum != self.pixel_count() {
            return Err(Error::CountsMismatch {
                sum,
                expected: self.pixel_count(),
            });
        }
        if self.counts.iter().skip(1).any(|&c| c == 0) {
            return Err(Error::InvalidCounts("counts has an internal zero entry".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn same_dims(&self, other: &RleMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Half-open linear index intervals covered by foreground runs.
    pub fn foreground_runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1 && c > 0).then_some((start, pos))
        })
    }

    /// Rebuilds a mask from sorted, non-overlapping foreground intervals.
    pub fn from_runs(height: u32, width: u32, runs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let total = height as u64 * width as u64;
        let mut counts = Vec::new();
        let mut pos = 0u64;
        let mut pending: Option<(u64, u64)> = None;
        let flush = |counts: &mut Vec<u32>, pos: &mut u64, (s, e): (u64, u64)| {
            counts.push((s - *pos) as u32);
            counts.push((e - s) as u32);
            *pos = e;
        };
        for (s, e) in runs {
            if s >= e {
                continue;
            }
            match pending {
                Some((ps, pe)) if s <= pe => pending = Some((ps, pe.max(e))),
                Some(p) => {
                    flush(&mut counts, &mut pos, p);
                    pending = Some((s, e));
                }
                None => pending = Some((s, e)),
            }
        }
        if let Some(p) = pending {
            flush(&mut counts, &mut pos, p);
        }
        if pos < total || counts.is_empty() {
            counts.push((total - pos) as u32);
        }
        Self { height, width, counts }
    }

    /// Tight pixel bounds of the foreground as a box, `None` when empty.
    pub fn bbox(&self) -> Option<BBox> {
        let h = self.height as u64;
        let (mut r0, mut r1, mut c0, mut c1) = (u64::MAX, 0u64, u64::MAX, 0u64);
        let mut any = false;
        for (s, e) in self.foreground_runs() {
            any = true;
            let (cs, ce) = (s / h, (e - 1) / h);
            let (rs, re) = if cs == ce { (s % h, (e - 1) % h) } else { (0, h - 1) };
            r0 = r0.min(rs);
            r1 = r1.max(re);
            c0 = c0.min(cs);
            c1 = c1.max(ce);
        }
        any.then(|| BBox {
            x: c0 as f64,
            y: r0 as f64,
            w: (c1 - c0 + 1) as f64,
            h: (r1 - r0 + 1) as f64,
        })
    }

    /// Extracts the `w`×`h` window whose top-left pixel is `(y0, x0)`.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<RleMask> {
        if x0 as u64 + w as u64 > self.width as u64 || y0 as u64 + h as u64 > self.height as u64 {
            return Err(Error::DimensionMismatch(format!(
                "crop window ({x0},{y0},{w},{h}) exceeds mask {}x{}",
                self.width, self.height
            )));
        }
        let src_h = self.height as u64;
        let (x0, y0, w, h) = (x0 as u64, y0 as u64, w as u64, h as u64);
        let mut out = Vec::new();
        for (s, e) in self.foreground_runs() {
            let mut col = s / src_h;
            while col * src_h < e {
                let col_start = col * src_h;
                if col >= x0 + w {
                    break;
                }
                if col >= x0 {
                    let lo = s.max(col_start + y0);
                    let hi = e.min(col_start + y0 + h);
                    if lo < hi {
                        let base = (col - x0) * h;
                        out.push((base + lo - col_start - y0, base + hi - col_start - y0));
                    }
                }
                col += 1;
            }
        }
        Ok(RleMask::from_runs(h as u32, w as u32, out))
    }

    /// Decodes a COCO compressed counts string (the LEB128-like text form).
    pub fn from_coco_string(height: u32, width: u32, s: &str) -> Result<RleMask> {
        let bytes = s.as_bytes();
        let mut counts: Vec<i64> = Vec::new();
        let mut p = 0;
        while p < bytes.len() {
            let mut x: i64 = 0;
            let mut k = 0;
            loop {
                let Some(&byte) = bytes.get(p) else {
                    return Err(Error::InvalidCounts("truncated compressed counts".into()));
                };
                if !(48..48 + 64).contains(&byte) || k > 12 {
                    return Err(Error::InvalidCounts("malformed compressed counts".into()));
                }
                let c = (byte - 48) as i64;
                x |= (c & 0x1f) << (5 * k);
                p += 1;
                k += 1;
                if c & 0x20 == 0 {
                    if c & 0x10 != 0 {
                        x |= -1i64 << (5 * k);
                    }
                    break;
                }
            }
            if counts.len() > 2 {
                x += counts[counts.len() - 2];
            }
            counts.push(x);
        }
        let counts = counts
            .into_iter()
            .map(|c| u32::try_from(c).map_err(|_| Error::InvalidCounts("negative run length".into())))
            .collect::<Result<Vec<_>>>()?;
        let mask = RleMask { height, width, counts };
        mask.validate()?;
        Ok(mask)
    }

    /// Encodes counts in the COCO compressed string form.
    pub fn to_coco_string(&self) -> String {
        let mut out = String::new();
        for (i, &c) in self.counts.iter().enumerate() {
            let mut x = c as i64;
            if i > 2 {
                x -= self.counts[i - 2] as i64;
            }
            loop {
                let mut c = x & 0x1f;
                x >>= 5;
                let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
                if more {
                    c |= 0x20;
                }
                out.push((c as u8 + 48) as char);
                if !more {
                    break;
                }
            }
        }
        out
    }
}

pub fn rle_encode(bitmap: &Bitmap) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &p in &bitmap.data {
        if p != current {
            counts.push(run);
            run = 0;
            current = p;
        }
        run += 1;
    }
    counts.push(run);
    RleMask {
        height: bitmap.height,
        width: bitmap.width,
        counts,
    }
}

pub fn rle_decode(mask: &RleMask) -> Result<Bitmap> {
    mask.validate()?;
    let mut bitmap = Bitmap::new(mask.height, mask.width);
    for (s, e) in mask.foreground_runs() {
        bitmap.data[s as usize..e as usize].fill(true);
    }
    Ok(bitmap)
}

/// Foreground pixels shared by both masks.
pub fn intersection_area(a: &RleMask, b: &RleMask) -> Result<u64> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "masks {}x{} and {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    let mut ra = a.foreground_runs().peekable();
    let mut rb = b.foreground_runs().peekable();
    let mut total = 0u64;
    while let (Some(&(sa, ea)), Some(&(sb, eb))) = (ra.peek(), rb.peek()) {
        let lo = sa.max(sb);
        let hi = ea.min(eb);
        if lo < hi {
            total += hi - lo;
        }
        if ea <= eb {
            ra.next();
        } else {
            rb.next();
        }
    }
    Ok(total)
}

/// `|A ∩ B| / |A ∪ B|`, with two empty masks scoring 1.0.
pub fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    let inter = intersection_area(a, b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}
