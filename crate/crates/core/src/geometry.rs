//! Axis-aligned box arithmetic.
//!
//! Boxes are stored in corner form with real-valued (sub-pixel) coordinates.
//! Area is the plain coordinate product, without any `+1` pixel-inclusive
//! correction. External files use top-left-size quadruples and the set loss
//! uses image-normalized center-size quadruples; [`BoxFormat`] converts
//! between the three.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box with `x_min <= x_max`, `y_min <= y_max` and finite
/// coordinates. Zero-area boxes are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

/// Quadruple layouts accepted by [`BoundingBox::from_format`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxFormat {
    /// `(x_min, y_min, x_max, y_max)` in pixels.
    Corner,
    /// `(x, y, w, h)` in pixels, `(x, y)` being the top-left corner.
    TopLeftSize,
    /// `(cx, cy, w, h)` as fractions of the image width and height.
    CenterSizeNormalized,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::validation(format!(
                "box coordinates must be finite: ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::validation(format!(
                "inverted box: ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Top-left-size constructor. Negative sizes are rejected.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if w < 0.0 || h < 0.0 {
            return Err(Error::validation(format!(
                "negative box size: w={w}, h={h}"
            )));
        }
        Self::new(x, y, x + w, y + h)
    }

    pub fn from_format(
        format: BoxFormat,
        values: [f64; 4],
        image_size: Option<(f64, f64)>,
    ) -> Result<Self> {
        let [a, b, c, d] = values;
        match format {
            BoxFormat::Corner => Self::new(a, b, c, d),
            BoxFormat::TopLeftSize => Self::from_xywh(a, b, c, d),
            BoxFormat::CenterSizeNormalized => {
                let (img_w, img_h) = image_size.ok_or_else(|| {
                    Error::validation("normalized boxes need the image dimensions")
                })?;
                check_image_dims(img_w, img_h)?;
                let (w, h) = (c * img_w, d * img_h);
                let (cx, cy) = (a * img_w, b * img_h);
                Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
            }
        }
    }

    pub fn to_format(&self, format: BoxFormat, image_size: Option<(f64, f64)>) -> Result<[f64; 4]> {
        match format {
            BoxFormat::Corner => Ok(self.corners()),
            BoxFormat::TopLeftSize => Ok(self.to_xywh()),
            BoxFormat::CenterSizeNormalized => {
                let (w, h) = image_size.ok_or_else(|| {
                    Error::validation("normalized boxes need the image dimensions")
                })?;
                self.to_cxcywh_normalized(w, h)
            }
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Top-left-size quadruple. The extents are chosen so that `x + w` and
    /// `y + h` reproduce `x_max` and `y_max` bit-for-bit whenever such a
    /// representable extent exists, which keeps corner coordinates exact
    /// through an xywh file round trip.
    pub fn to_xywh(&self) -> [f64; 4] {
        [
            self.x_min,
            self.y_min,
            exact_extent(self.x_min, self.x_max),
            exact_extent(self.y_min, self.y_max),
        ]
    }

    pub fn to_cxcywh_normalized(&self, img_w: f64, img_h: f64) -> Result<[f64; 4]> {
        check_image_dims(img_w, img_h)?;
        Ok([
            (self.x_min + self.x_max) / 2.0 / img_w,
            (self.y_min + self.y_max) / 2.0 / img_h,
            self.width() / img_w,
            self.height() / img_h,
        ])
    }

    pub fn is_degenerate(&self) -> bool {
        area(self) == 0.0
    }

    /// Clamps the box into `[0, width] x [0, height]`. Returns the clamped
    /// box and whether anything changed.
    pub fn clamp_to(&self, width: f64, height: f64) -> (Self, bool) {
        let c = |v: f64, hi: f64| v.max(0.0).min(hi);
        let clamped = Self {
            x_min: c(self.x_min, width),
            y_min: c(self.y_min, height),
            x_max: c(self.x_max, width),
            y_max: c(self.y_max, height),
        };
        (clamped, clamped != *self)
    }

    /// Multiplies every coordinate by `s` (which must be positive and finite).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::validation(format!(
                "scale must be positive, got {s}"
            )));
        }
        Self::new(
            self.x_min * s,
            self.y_min * s,
            self.x_max * s,
            self.y_max * s,
        )
    }
}

fn check_image_dims(img_w: f64, img_h: f64) -> Result<()> {
    if img_w > 0.0 && img_h > 0.0 && img_w.is_finite() && img_h.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "image dimensions must be positive, got {img_w}x{img_h}"
        )))
    }
}

/// Extent `e` with `start + e == end` if one exists near `end - start`.
fn exact_extent(start: f64, end: f64) -> f64 {
    let naive = end - start;
    if start + naive == end {
        return naive;
    }
    let (mut up, mut down) = (naive, naive);
    for _ in 0..4 {
        up = up.next_up();
        down = down.next_down();
        if start + up == end {
            return up;
        }
        if down >= 0.0 && start + down == end {
            return down;
        }
    }
    naive
}

pub fn area(b: &BoundingBox) -> f64 {
    b.width() * b.height()
}

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    w * h
}

fn enclosing_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.x_max.max(b.x_max) - a.x_min.min(b.x_min);
    let h = a.y_max.max(b.y_max) - a.y_min.min(b.y_min);
    w * h
}

/// Intersection over union. Zero when the union has zero area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: `iou - |C \ (A u B)| / |C|` with `C` the tightest
/// enclosing box. Undefined when both boxes have zero area.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    if a.is_degenerate() && b.is_degenerate() {
        return Err(Error::UndefinedInput(
            "generalized IoU of two zero-area boxes".into(),
        ));
    }
    let inter = intersection_area(a, b);
    let union = area(a) + area(b) - inter;
    let enclosing = enclosing_area(a, b);
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    // C covers A u B; rounding can leave `union` a hair above `enclosing`.
    Ok(iou - (enclosing - union).max(0.0) / enclosing)
}

/// Sum of absolute differences of the normalized `(cx, cy, w, h)` vectors.
pub fn l1_box_distance(a: &BoundingBox, b: &BoundingBox, img_w: f64, img_h: f64) -> Result<f64> {
    let p = a.to_cxcywh_normalized(img_w, img_h)?;
    let q = b.to_cxcywh_normalized(img_w, img_h)?;
    Ok(p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&bx(0.0, 0.0, 1.0, 1.0)), 1.0);
        assert_eq!(area(&bx(0.0, 0.0, 0.0, 5.0)), 0.0);
        assert_eq!(area(&bx(2.0, 3.0, 5.0, 7.0)), 12.0);
    }

    #[test]
    fn iou_examples() {
        let unit = bx(0.0, 0.0, 1.0, 1.0);
        assert_eq!(iou(&unit, &unit), 1.0);
        assert_eq!(iou(&unit, &bx(2.0, 0.0, 3.0, 1.0)), 0.0);
        let v = iou(&bx(0.0, 0.0, 2.0, 2.0), &bx(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn iou_of_degenerate_boxes_is_zero() {
        let line = bx(1.0, 1.0, 1.0, 4.0);
        assert_eq!(iou(&line, &line), 0.0);
        assert_eq!(iou(&line, &bx(0.0, 0.0, 5.0, 5.0)), 0.0);
    }

    #[test]
    fn giou_examples() {
        let unit = bx(0.0, 0.0, 1.0, 1.0);
        assert_eq!(giou(&unit, &unit).unwrap(), 1.0);
        let v = giou(&unit, &bx(2.0, 0.0, 3.0, 1.0)).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-15);
        let v = giou(&bx(0.0, 0.0, 2.0, 2.0), &unit).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn giou_of_two_degenerate_boxes_is_an_error() {
        let p = bx(1.0, 1.0, 1.0, 1.0);
        let q = bx(2.0, 2.0, 2.0, 3.0);
        assert!(matches!(giou(&p, &q), Err(Error::UndefinedInput(_))));
        // One degenerate box is fine.
        assert!(giou(&p, &bx(0.0, 0.0, 2.0, 2.0)).is_ok());
    }

    #[test]
    fn l1_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(l1_box_distance(&a, &a, 100.0, 100.0).unwrap(), 0.0);
        let d = l1_box_distance(&a, &bx(0.0, 0.0, 20.0, 10.0), 100.0, 100.0).unwrap();
        assert!((d - 0.15).abs() < 1e-15);
        let d = l1_box_distance(&a, &bx(10.0, 0.0, 20.0, 10.0), 100.0, 100.0).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
        assert!(l1_box_distance(&a, &a, 0.0, 100.0).is_err());
        assert!(l1_box_distance(&a, &a, 100.0, -1.0).is_err());
    }

    #[test]
    fn construction_rejects_bad_boxes() {
        assert!(BoundingBox::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
        assert!(BoundingBox::from_xywh(0.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn clamp_reports_changes() {
        let (c, changed) = bx(-5.0, 2.0, 120.0, 50.0).clamp_to(100.0, 80.0);
        assert!(changed);
        assert_eq!(c.corners(), [0.0, 2.0, 100.0, 50.0]);
        let (_, changed) = bx(1.0, 2.0, 3.0, 4.0).clamp_to(100.0, 80.0);
        assert!(!changed);
    }

    #[test]
    fn normalized_conversion_needs_dims() {
        assert!(BoundingBox::from_format(BoxFormat::CenterSizeNormalized, [0.5; 4], None).is_err());
        let b = BoundingBox::from_format(
            BoxFormat::CenterSizeNormalized,
            [0.5, 0.5, 0.2, 0.4],
            Some((100.0, 50.0)),
        )
        .unwrap();
        assert_eq!(b.corners(), [40.0, 15.0, 60.0, 35.0]);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..500.0f64, 0.0..500.0f64, 0.0..300.0f64, 0.0..300.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::from_xywh(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn format_conversions_round_trip(b in arb_box(), w in 1.0..2000.0f64, h in 1.0..2000.0f64) {
            let dims = Some((w, h));
            for fmt in [BoxFormat::Corner, BoxFormat::TopLeftSize, BoxFormat::CenterSizeNormalized] {
                let q = b.to_format(fmt, dims).unwrap();
                let back = BoundingBox::from_format(fmt, q, dims).unwrap();
                for (x, y) in back.corners().iter().zip(b.corners()) {
                    prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
                }
            }
        }

        #[test]
        fn xywh_round_trip_is_exact(b in arb_box()) {
            let [x, y, w, h] = b.to_xywh();
            let back = BoundingBox::from_xywh(x, y, w, h).unwrap();
            prop_assert_eq!(back, b);
        }

        #[test]
        fn iou_giou_symmetric_and_ordered(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            if let Ok(g) = giou(&a, &b) {
                prop_assert_eq!(g, giou(&b, &a).unwrap());
                prop_assert!(g > -1.0 && g <= 1.0);
                prop_assert!(g <= v);
            }
        }
    }
}
