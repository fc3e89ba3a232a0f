use rayon::prelude::*;

use super::confusion::{ConfusionMatrix, EvalReport};
use crate::data::{class_color, Dataset};
use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};
use crate::model::{model_forward, ModelConfig, ModelParams, NUM_STAGES};
use crate::ops::{upsample_bilinear2x, BnMode};
use crate::tensor::{Scalar, Tensor4};

const EVAL_BATCH: usize = 10;

/// Per-pixel channel argmax for every sample; ties go to the lowest class.
pub fn argmax_labels<T: Scalar>(scores: &Tensor4<T>) -> Result<Vec<LabelMap>> {
    let d = scores.dims();
    if d.c == 0 || d.c > IGNORE as usize {
        return Err(Error::dim(format!("cannot take argmax over {} channels", d.c)));
    }
    let plane = d.plane();
    (0..d.n)
        .map(|n| {
            let mut out = vec![0u8; plane];
            for c in 1..d.c {
                let best = scores.plane(n, c);
                for (i, o) in out.iter_mut().enumerate() {
                    if best[i] > scores.plane(n, *o as usize)[i] {
                        *o = c as u8;
                    }
                }
            }
            LabelMap::from_vec(d.h, d.w, out)
        })
        .collect()
}

/// Brings a label map up to `(h, w)` by repeated 2x bilinear steps.
pub fn upsample_to<T: Scalar>(scores: &Tensor4<T>, h: usize, w: usize) -> Result<Tensor4<T>> {
    let mut cur = scores.clone();
    while cur.dims().h < h || cur.dims().w < w {
        cur = upsample_bilinear2x(&cur);
    }
    if (cur.dims().h, cur.dims().w) != (h, w) {
        return Err(Error::dim(format!(
            "{}x{} does not reach {h}x{w} by doubling",
            scores.dims().h,
            scores.dims().w
        )));
    }
    Ok(cur)
}

fn check_dataset(config: &ModelConfig, dataset: &Dataset) -> Result<()> {
    if dataset.num_classes != config.num_classes {
        return Err(Error::dim(format!(
            "dataset has {} classes, model {}",
            dataset.num_classes, config.num_classes
        )));
    }
    if let Some(size) = dataset.image_size() {
        if size != (config.input_h, config.input_w) {
            return Err(Error::dim(format!(
                "dataset images are {}x{}, model expects {}x{}",
                size.0, size.1, config.input_h, config.input_w
            )));
        }
    }
    Ok(())
}

/// Full-resolution predictions (stage 6) for an already mean-subtracted batch.
pub fn predict_labels(
    params: &ModelParams<f32>,
    config: &ModelConfig,
    image: &Tensor4<f32>,
) -> Result<Vec<LabelMap>> {
    let pass = model_forward(params, config, image, BnMode::Infer)?;
    argmax_labels(&pass.outputs.s[NUM_STAGES - 1])
}

/// One confusion matrix per stage over the whole dataset, every stage
/// upsampled to input resolution before the argmax.
pub fn stage_confusions(
    params: &ModelParams<f32>,
    config: &ModelConfig,
    dataset: &Dataset,
    mean_pixel: &[f32; 3],
) -> Result<Vec<ConfusionMatrix>> {
    check_dataset(config, dataset)?;
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let per_batch = idx
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let (images, labels) = dataset.batch(chunk, mean_pixel)?;
            let pass = model_forward(params, config, &images, BnMode::Infer)?;
            let mut cms = Vec::with_capacity(NUM_STAGES);
            for s in &pass.outputs.s {
                let full = upsample_to(s, config.input_h, config.input_w)?;
                let mut cm = ConfusionMatrix::new(config.num_classes);
                for (pred, gt) in argmax_labels(&full)?.iter().zip(&labels) {
                    cm.accumulate(pred, gt)?;
                }
                cms.push(cm);
            }
            Ok(cms)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![ConfusionMatrix::new(config.num_classes); NUM_STAGES];
    for cms in &per_batch {
        for (t, c) in total.iter_mut().zip(cms) {
            t.merge(c)?;
        }
    }
    Ok(total)
}

/// Stage-6 report; with `stagewise` it also carries the mean IoU of every
/// stage.
pub fn evaluate(
    params: &ModelParams<f32>,
    config: &ModelConfig,
    dataset: &Dataset,
    mean_pixel: &[f32; 3],
    stagewise: bool,
) -> Result<EvalReport> {
    let cms = stage_confusions(params, config, dataset, mean_pixel)?;
    let mut report = cms[NUM_STAGES - 1].report()?;
    if stagewise {
        let mut miou = [0.0; NUM_STAGES];
        for (m, cm) in miou.iter_mut().zip(&cms) {
            *m = cm.report()?.mean_iou;
        }
        report.stage_miou = Some(miou);
    }
    Ok(report)
}

/// Mean IoU of every stage.
pub fn stagewise_eval(
    params: &ModelParams<f32>,
    config: &ModelConfig,
    dataset: &Dataset,
    mean_pixel: &[f32; 3],
) -> Result<[f64; NUM_STAGES]> {
    Ok(evaluate(params, config, dataset, mean_pixel, true)?
        .stage_miou
        .expect("stagewise report"))
}

/// Gray for the background, then the synthetic shape colours.
pub fn default_palette(num_classes: usize) -> Vec<[u8; 3]> {
    (0..num_classes)
        .map(|c| {
            if c == 0 {
                [128, 128, 128]
            } else {
                class_color(c).map(|v| (v * 255.0).round() as u8)
            }
        })
        .collect()
}

/// RGB rendering of a label map in `[0, 1]`; ignored pixels are black.
pub fn render_prediction(labels: &LabelMap, palette: &[[u8; 3]]) -> Result<Tensor4<f32>> {
    let (h, w) = (labels.height(), labels.width());
    let mut out = Tensor4::zeros(crate::tensor::Dims::new(1, 3, h, w));
    let plane = h * w;
    let data = out.data_mut();
    for (i, &l) in labels.data().iter().enumerate() {
        if l == IGNORE {
            continue;
        }
        let color = palette.get(l as usize).ok_or_else(|| {
            Error::data(format!("palette has {} colours, label {l}", palette.len()))
        })?;
        for (c, &v) in color.iter().enumerate() {
            data[c * plane + i] = v as f32 / 255.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{read_ppm, write_ppm};
    use crate::model::init_params;
    use crate::tensor::Dims;

    #[test]
    fn argmax_ties_pick_lowest() {
        let t = Tensor4::from_vec(Dims::new(1, 3, 1, 3), vec![1.0f32, 0.0, 2.0, 1.0, 5.0, 2.0, 0.5, 5.0, 2.0])
            .unwrap();
        assert_eq!(argmax_labels(&t).unwrap()[0].data(), &[0, 1, 0]);
    }

    #[test]
    fn solid_render() {
        let pal = default_palette(3);
        let img = render_prediction(&LabelMap::filled(2, 2, 0), &pal).unwrap();
        assert!(img.data().iter().all(|&v| v == 128.0 / 255.0));
        let img = render_prediction(&LabelMap::filled(1, 1, IGNORE), &pal).unwrap();
        assert_eq!(img.data(), &[0.0; 3]);
        assert!(render_prediction(&LabelMap::filled(1, 1, 3), &pal).is_err());
    }

    #[test]
    fn render_roundtrips_through_colour_lookup() {
        let pal = default_palette(8);
        for (i, a) in pal.iter().enumerate() {
            for b in &pal[i + 1..] {
                assert_ne!(a, b);
            }
        }
        let labels = LabelMap::from_vec(2, 4, vec![0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let bytes = write_ppm(&render_prediction(&labels, &pal).unwrap()).unwrap();
        let img = read_ppm(&bytes).unwrap();
        let back: Vec<u8> = (0..8)
            .map(|i| {
                let px = [0, 1, 2].map(|c| (img.data()[c * 8 + i] * 255.0).round() as u8);
                pal.iter().position(|p| *p == px).unwrap() as u8
            })
            .collect();
        assert_eq!(back, labels.data());
    }

    #[test]
    fn upsample_to_full_resolution() {
        let t = Tensor4::full(Dims::new(1, 2, 2, 2), 0.5f32);
        let up = upsample_to(&t, 16, 16).unwrap();
        assert_eq!(up.dims(), Dims::new(1, 2, 16, 16));
        assert!(up.data().iter().all(|&v| v == 0.5));
        assert!(upsample_to(&t, 12, 12).is_err());
    }

    #[test]
    fn stage_six_matches_plain_prediction() {
        let cfg = ModelConfig {
            num_classes: 3,
            input_h: 32,
            input_w: 32,
            encoder_channels: [2; 5],
            convs_per_stage: 1,
            ..ModelConfig::default()
        };
        let params = init_params::<f32>(&cfg, 4).unwrap();
        let gen = crate::data::GenConfig { size: 32, num_classes: 3, ..Default::default() };
        let (images, labels): (Vec<_>, Vec<_>) =
            (0..3).map(|i| crate::data::generate_indexed(&gen, i).unwrap()).unzip();
        let ds = Dataset { num_classes: 3, images, labels };
        let mean = ds.mean_pixel().unwrap();
        let cms = stage_confusions(&params, &cfg, &ds, &mean).unwrap();
        let mut direct = ConfusionMatrix::new(3);
        for i in 0..3 {
            let (img, gt) = ds.batch(&[i], &mean).unwrap();
            direct.accumulate(&predict_labels(&params, &cfg, &img).unwrap()[0], &gt[0]).unwrap();
        }
        assert_eq!(cms[5], direct);
    }
}
