use std::collections::HashSet;

use plrefine::scenegen::{make_domain, sample_prompt, DomainPreset, Lighting, Weather, CLASS_COUNT, PERSON, POLE};
use plrefine::{ClassCatalog, ImageBuf, LabelMap, RngStream};

#[test]
fn prompts_cover_every_condition_and_class() {
    let catalog = ClassCatalog::urban();
    let mut rng = RngStream::new(3).fork("prompts");
    let mut conditions = HashSet::new();
    let mut classes = HashSet::new();
    for _ in 0..1000 {
        let spec = sample_prompt(&catalog, &mut rng);
        assert!(!spec.subjects.is_empty() && spec.subjects.len() <= 4);
        conditions.insert((spec.condition.lighting, spec.condition.weather));
        classes.extend(spec.subjects.iter().map(|s| s.class));
    }
    for lighting in Lighting::ALL {
        for weather in Weather::ALL {
            assert!(conditions.contains(&(lighting, weather)), "{lighting:?} {weather:?} never drawn");
        }
    }
    // Background is the canvas, never a subject.
    for class in 1..CLASS_COUNT as u8 {
        assert!(classes.contains(&class), "class {class} never drawn");
    }
}

fn has(labels: &LabelMap, class: u8) -> bool {
    labels.labels().contains(&class)
}

fn person_pole_rate(preset: DomainPreset, n: usize) -> f64 {
    let gen = make_domain(preset, &RngStream::new(11), 32, 32).unwrap();
    let hits = gen.take(n).filter(|s| has(&s.labels, PERSON) && has(&s.labels, POLE)).count();
    hits as f64 / n as f64
}

#[test]
fn target_content_has_person_pole_cooccurrence() {
    assert_eq!(person_pole_rate(DomainPreset::Source, 500), 0.0);
    assert!(person_pole_rate(DomainPreset::TargetContent, 500) > 0.0);
}

struct Stats {
    channel_mean: [f64; 3],
    class_freq: [f64; CLASS_COUNT],
}

fn stats(preset: DomainPreset, n: usize) -> Stats {
    let gen = make_domain(preset, &RngStream::new(21), 32, 32).unwrap();
    let mut channel_mean = [0.0; 3];
    let mut class_freq = [0.0; CLASS_COUNT];
    let mut pixels = 0.0;
    for s in gen.take(n) {
        add_image(&s.image, &mut channel_mean);
        for &l in s.labels.labels() {
            class_freq[l as usize] += 1.0;
        }
        pixels += s.labels.len() as f64;
    }
    channel_mean.iter_mut().for_each(|v| *v /= pixels);
    class_freq.iter_mut().for_each(|v| *v /= pixels);
    Stats { channel_mean, class_freq }
}

fn add_image(image: &ImageBuf, acc: &mut [f64; 3]) {
    for y in 0..image.height() {
        for x in 0..image.width() {
            for (c, a) in acc.iter_mut().enumerate() {
                *a += image.get(x, y, c) as f64;
            }
        }
    }
}

/// Half the L1 distance between two histograms.
fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

#[test]
fn target_both_shifts_pixels_and_layouts() {
    let n = 300;
    let source = stats(DomainPreset::Source, n);
    let both = stats(DomainPreset::TargetBoth, n);
    let style = stats(DomainPreset::TargetStyle, n);
    let pixel_shift = source.channel_mean.iter().zip(&both.channel_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(pixel_shift > 0.02, "channel means moved by only {pixel_shift}");
    let layout_shift = total_variation(&source.class_freq, &both.class_freq);
    // Style alone shares the layout distribution, which calibrates sampling noise.
    let noise = total_variation(&source.class_freq, &style.class_freq);
    assert!(layout_shift > 0.02 && layout_shift > 3.0 * noise, "layout shift {layout_shift} vs noise {noise}");
}

#[test]
fn style_presets_share_labels_with_their_content_twin() {
    let a = make_domain(DomainPreset::Source, &RngStream::new(5), 32, 32).unwrap();
    let b = make_domain(DomainPreset::TargetStyle, &RngStream::new(5), 32, 32).unwrap();
    for (s, t) in a.take(20).zip(b.take(20)) {
        assert_eq!(s.labels, t.labels);
        assert_ne!(s.image, t.image);
    }
}
