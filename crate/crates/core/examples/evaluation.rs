//! Average precision by hand: match ranked boxes to ground truth, then score
//! a small classification problem.

use partforge::eval::{average_precision, evaluate_classification, match_detections, ScoredInstance};
use partforge::{BBox, InstanceRef};

fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2).expect("valid box")
}

fn main() -> partforge::Result<()> {
    let gts = [
        b(0.0, 0.0, 10.0, 10.0),
        b(20.0, 20.0, 30.0, 30.0),
        b(50.0, 0.0, 60.0, 10.0),
    ];
    // Already sorted by descending score.
    let ranked = [
        b(0.5, 0.0, 10.0, 10.5),
        b(1.0, 1.0, 11.0, 11.0),
        b(19.0, 21.0, 29.0, 31.0),
        b(80.0, 80.0, 90.0, 90.0),
    ];
    for sigma in [0.3, 0.5, 0.7] {
        let flags = match_detections(&ranked, &gts, sigma);
        let ap = average_precision(&flags, gts.len())?;
        println!("sigma {sigma}: hits {flags:?}, AP {:.3}", ap);
    }

    let classes = vec!["wave".to_string(), "sit".to_string()];
    let items: Vec<ScoredInstance> = [
        ([2.0, -1.0], [true, false]),
        ([0.5, 0.3], [false, true]),
        ([-0.2, 1.5], [false, true]),
        ([1.0, 0.9], [true, false]),
        ([-1.0, -0.5], [false, false]),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (s, l))| ScoredInstance {
        key: InstanceRef::new(i as u32, 0),
        scores: s.to_vec(),
        labels: l.iter().map(|v| Some(*v)).collect(),
    })
    .collect();
    let res = evaluate_classification(&items, &classes)?;
    for (name, ap) in &res.per_class {
        println!("{name}: AP {:?}", ap);
    }
    println!("mAP {:.3}", res.map);
    Ok(())
}
