//! Box conversions and overlap measures.
use fruitbench::geometry::{area, giou, iou, l1_box_distance, BoundingBox};

fn main() -> fruitbench::Result<()> {
    let a = BoundingBox::from_xywh(10.0, 10.0, 40.0, 30.0)?;
    let b = BoundingBox::new(30.0, 20.0, 70.0, 60.0)?;
    let far = BoundingBox::new(200.0, 200.0, 220.0, 240.0)?;

    println!("a corners    {:?}", a.corners());
    println!("a xywh       {:?}", a.to_xywh());
    println!("a cxcywh/img {:?}", a.to_cxcywh_normalized(320.0, 240.0)?);
    println!("area(a) = {}, area(b) = {}", area(&a), area(&b));
    println!("iou(a, b)    = {:.4}", iou(&a, &b));
    println!("giou(a, b)   = {:.4}", giou(&a, &b)?);
    println!("giou(a, far) = {:.4}", giou(&a, &far)?);
    println!(
        "l1(a, b)     = {:.4}",
        l1_box_distance(&a, &b, 320.0, 240.0)?
    );

    let (clamped, changed) = BoundingBox::new(-5.0, 0.0, 330.0, 100.0)?.clamp_to(320.0, 240.0);
    println!("clamped {:?} (changed: {changed})", clamped.corners());
    Ok(())
}
