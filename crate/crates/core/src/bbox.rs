use crate::error::{Error, Result};

/// Axis-aligned box in pixels: top-left corner plus width and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox("coordinates must be finite".into()));
        }
        if self.w < 0.0 || self.h < 0.0 {
            return Err(Error::InvalidBox(format!(
                "width and height must be non-negative (w={}, h={})",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Overlap of two boxes; `None` when they do not overlap with positive area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then_some(BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }
}

/// Generalized IoU: `IoU - (|C| - |A ∪ B|) / |C|` with `C` the smallest
/// enclosing box.
pub fn box_giou(a: &BBox, b: &BBox) -> Result<f64> {
    // Spans come from corners everywhere so identical boxes give exactly 1.
    let span_area = |r: &BBox| (r.right() - r.x) * (r.bottom() - r.y);
    let inter = a.intersection_area(b);
    let union = span_area(a) + span_area(b) - inter;
    if union <= 0.0 {
        return Err(Error::DegenerateBox);
    }
    let cw = a.right().max(b.right()) - a.x.min(b.x);
    let ch = a.bottom().max(b.bottom()) - a.y.min(b.y);
    let enclosure = cw * ch;
    Ok(inter / union - (enclosure - union) / enclosure)
}
