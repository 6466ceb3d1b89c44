//! Build a feature pyramid for one synthetic image and score a filter over it.

use partforge::detect::score_pyramid;
use partforge::features::{build_pyramid, region_descriptor, FeatureExtractorSpec, PyramidConfig};
use partforge::svm::{LinearModel, ModelKind};
use partforge::synth::{generate_image, DatasetConfig, Split};

fn main() -> partforge::Result<()> {
    let config = DatasetConfig::default();
    let img = generate_image(&config, Split::Train, 3, false)?;
    let spec = FeatureExtractorSpec::default();
    let pyr = build_pyramid(&img.image.raster, img.id, &spec, &PyramidConfig::default())?;
    println!(
        "image {} ({}x{}), {} levels",
        img.id,
        pyr.image_width,
        pyr.image_height,
        pyr.num_levels()
    );
    for (l, m) in pyr.levels.iter().enumerate() {
        println!(
            "  level {l:>2}  scale {:.3}  {}x{}x{}",
            pyr.scales[l],
            m.rows(),
            m.cols(),
            m.channels()
        );
    }

    // A crude vertical-edge filter, just to have something to score.
    let c = spec.channels;
    let w: Vec<f32> = (0..8 * 8 * c).map(|i| if i % c == 0 { 1.0 } else { 0.0 }).collect();
    let filter = LinearModel::new(ModelKind::Part, [8, 8, c], w, 0.0)?;
    let maps = score_pyramid(&pyr, &filter)?;
    let best = maps
        .iter()
        .enumerate()
        .flat_map(|(l, m)| m.data.iter().map(move |s| (l, f64::from(*s))))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    println!("best response {:.3} at level {}", best.1, best.0);

    for inst in &img.image.instances {
        let d = region_descriptor(&img.image.raster, &inst.bbox, &spec)?;
        let norm: f32 = d.iter().map(|v| v * v).sum::<f32>().sqrt();
        println!(
            "person {:?}: descriptor of {} values, norm {:.3}",
            inst.bbox.to_array(),
            d.len(),
            norm
        );
    }
    Ok(())
}
