//! Deterministic per-domain renderers. Every sample is a pure function of
//! (domain, seed); styles are tuned so domains stay linearly separable on
//! raw pixels while the per-domain tasks keep enough noise to need learning.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::{DomainLabel, Sample, IMG_PIXELS, IMG_SIZE};
use crate::error::{MixpertError, Result};
use crate::nncore::Tensor;

/// Bumped whenever any renderer changes observable output.
pub const GEN_VERSION: u32 = 1;

/// SplitMix64-based mixing used to derive per-sample RNG streams.
pub fn mix64(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e3779b97f4a7c15;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        h = z ^ (z >> 31);
    }
    h
}

fn rng_for(domain: DomainLabel, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(&[seed, domain.code() as u64 + 1]))
}

/// Renders the pure style for a domain. Deterministic in (domain, seed).
pub fn generate(domain: DomainLabel, seed: u64) -> Sample {
    let mut rng = rng_for(domain, seed);
    let (pixels, label) = match domain {
        DomainLabel::Chart => render_chart(&mut rng),
        DomainLabel::Doc => render_doc(&mut rng),
        DomainLabel::Math => render_math(&mut rng),
        DomainLabel::Ocr => render_ocr(&mut rng),
        DomainLabel::General => render_general(&mut rng),
    };
    Sample {
        image: Tensor::new(vec![1, IMG_SIZE, IMG_SIZE], pixels).expect("renderer output is 32x32"),
        domain,
        task_label: label,
        ambiguity: 0.0,
    }
}

/// Pixelwise blend of two pure styles. The sample keeps `domain_a`'s label
/// (the nominally dominant domain) and records the mix as its ambiguity.
/// Used only for routing evaluation, never for expert training.
pub fn generate_ambiguous(
    domain_a: DomainLabel,
    domain_b: DomainLabel,
    mix: f32,
    seed: u64,
) -> Result<Sample> {
    if domain_a == domain_b {
        return Err(MixpertError::Contract(
            "ambiguous blend requires two distinct domains".into(),
        ));
    }
    if !(mix > 0.0 && mix < 1.0) {
        return Err(MixpertError::Contract(format!(
            "blend mix must lie in (0, 1), got {mix}"
        )));
    }
    let a = generate(domain_a, seed);
    let b = generate(domain_b, mix64(&[seed, 0xab1e]));
    let pixels: Vec<f32> = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&pa, &pb)| (1.0 - mix) * pa + mix * pb)
        .collect();
    Ok(Sample {
        image: Tensor::new(vec![1, IMG_SIZE, IMG_SIZE], pixels).expect("blend keeps shape"),
        domain: domain_a,
        task_label: a.task_label,
        ambiguity: mix,
    })
}

// -- drawing helpers ---------------------------------------------------------

fn put(img: &mut [f32], x: i32, y: i32, v: f32) {
    if (0..IMG_SIZE as i32).contains(&x) && (0..IMG_SIZE as i32).contains(&y) {
        img[y as usize * IMG_SIZE + x as usize] = v;
    }
}

fn fill_rect(img: &mut [f32], x0: i32, y0: i32, x1: i32, y1: i32, v: f32) {
    for y in y0.max(0)..y1.min(IMG_SIZE as i32) {
        for x in x0.max(0)..x1.min(IMG_SIZE as i32) {
            img[y as usize * IMG_SIZE + x as usize] = v;
        }
    }
}

fn draw_line(img: &mut [f32], x0: f32, y0: f32, x1: f32, y1: f32, v: f32) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()) * 2.0).ceil() as usize + 1;
    for s in 0..=steps {
        let t = s as f32 / steps as f32;
        let x = x0 + (x1 - x0) * t;
        let y = y0 + (y1 - y0) * t;
        put(img, x.round() as i32, y.round() as i32, v);
    }
}

fn finish(img: &mut [f32], rng: &mut ChaCha8Rng, noise: f32) {
    let contrast: f32 = rng.random_range(0.85..1.1);
    for p in img.iter_mut() {
        let jitter: f32 = rng.random_range(-noise..noise);
        *p = (0.5 + (*p - 0.5) * contrast + jitter).clamp(0.0, 1.0);
    }
}

// -- per-domain renderers ----------------------------------------------------

/// Light background, dark baseline near the bottom, k vertical bars.
/// Task: bar count, classes 0..5 for 2..=6 bars.
fn render_chart(rng: &mut ChaCha8Rng) -> (Vec<f32>, u16) {
    let bg: f32 = rng.random_range(0.74..0.9);
    let mut img = vec![bg; IMG_PIXELS];
    let ink: f32 = rng.random_range(0.08..0.3);
    fill_rect(&mut img, 1, 28, 31, 29, ink);
    let bars = rng.random_range(2..=6u16);
    let slot = 30.0 / bars as f32;
    for b in 0..bars {
        let x0 = 1.0 + b as f32 * slot + rng.random_range(0.0..(slot - 2.0).max(0.1));
        let w = rng.random_range(2..=3.min(slot as i32 - 1).max(2));
        let h = rng.random_range(5..=20);
        fill_rect(
            &mut img,
            x0 as i32,
            28 - h,
            x0 as i32 + w,
            28,
            rng.random_range(0.05..0.35),
        );
    }
    let noise = rng.random_range(0.05..0.1);
    finish(&mut img, rng, noise);
    (img, bars - 2)
}

/// Light background with m horizontal text-line stripes broken by word gaps.
/// Task: line count, classes 0..6 for 3..=8 lines.
fn render_doc(rng: &mut ChaCha8Rng) -> (Vec<f32>, u16) {
    let bg: f32 = rng.random_range(0.8..0.92);
    let mut img = vec![bg; IMG_PIXELS];
    let lines = rng.random_range(3..=8u16);
    let left = rng.random_range(2..4);
    let right = rng.random_range(28..31);
    let top = rng.random_range(2..5) as f32;
    let spacing = (29.0 - top) / lines as f32;
    for l in 0..lines {
        let y = (top + l as f32 * spacing + rng.random_range(-0.4..0.4)).round() as i32;
        let thick = if spacing > 3.5 && rng.random_bool(0.4) { 2 } else { 1 };
        let ink: f32 = rng.random_range(0.1..0.35);
        fill_rect(&mut img, left, y, right, y + thick, ink);
        // word gaps
        for _ in 0..rng.random_range(2..5) {
            let gx = rng.random_range(left + 2..right - 1);
            fill_rect(&mut img, gx, y, gx + rng.random_range(1..3), y + thick, bg);
        }
    }
    let noise = rng.random_range(0.04..0.09);
    finish(&mut img, rng, noise);
    (img, lines - 3)
}

/// Light background, one outlined shape plus stray diagonal strokes.
/// Task: shape type (0 circle, 1 square, 2 triangle, 3 cross).
fn render_math(rng: &mut ChaCha8Rng) -> (Vec<f32>, u16) {
    let bg: f32 = rng.random_range(0.78..0.9);
    let mut img = vec![bg; IMG_PIXELS];
    let ink: f32 = rng.random_range(0.05..0.3);
    let cx = rng.random_range(12.0..20.0f32);
    let cy = rng.random_range(12.0..20.0f32);
    let r = rng.random_range(6.0..11.0f32);
    let shape = rng.random_range(0..4u16);
    match shape {
        0 => {
            for y in 0..IMG_SIZE {
                for x in 0..IMG_SIZE {
                    let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                    if (d - r).abs() < 0.8 {
                        img[y * IMG_SIZE + x] = ink;
                    }
                }
            }
        }
        1 => {
            let (x0, y0, x1, y1) = (cx - r, cy - r, cx + r, cy + r);
            draw_line(&mut img, x0, y0, x1, y0, ink);
            draw_line(&mut img, x1, y0, x1, y1, ink);
            draw_line(&mut img, x1, y1, x0, y1, ink);
            draw_line(&mut img, x0, y1, x0, y0, ink);
        }
        2 => {
            let (ax, ay) = (cx, cy - r);
            let (bx, by) = (cx - r, cy + r * 0.8);
            let (dx, dy) = (cx + r, cy + r * 0.8);
            draw_line(&mut img, ax, ay, bx, by, ink);
            draw_line(&mut img, bx, by, dx, dy, ink);
            draw_line(&mut img, dx, dy, ax, ay, ink);
        }
        _ => {
            draw_line(&mut img, cx - r, cy - r, cx + r, cy + r, ink);
            draw_line(&mut img, cx - r, cy + r, cx + r, cy - r, ink);
        }
    }
    for _ in 0..rng.random_range(1..4) {
        let sx = rng.random_range(2.0..28.0f32);
        let sy = rng.random_range(2.0..28.0f32);
        let len = rng.random_range(3.0..6.0f32);
        draw_line(&mut img, sx, sy, sx + len, sy + len, ink);
    }
    let noise = rng.random_range(0.04..0.09);
    finish(&mut img, rng, noise);
    (img, shape)
}

/// Dark background with bright glyph blobs on a loose grid.
/// Task: glyph count parity (0 even, 1 odd).
fn render_ocr(rng: &mut ChaCha8Rng) -> (Vec<f32>, u16) {
    let bg: f32 = rng.random_range(0.05..0.18);
    let mut img = vec![bg; IMG_PIXELS];
    let glyphs = rng.random_range(3..=9u16);
    let mut cells: Vec<(i32, i32)> = (0..25).map(|i| (i % 5, i / 5)).collect();
    for i in (1..cells.len()).rev() {
        let j = rng.random_range(0..=i);
        cells.swap(i, j);
    }
    for &(gx, gy) in cells.iter().take(glyphs as usize) {
        let x0 = 1 + gx * 6 + rng.random_range(0..2);
        let y0 = 1 + gy * 6 + rng.random_range(0..2);
        let bright: f32 = rng.random_range(0.75..1.0);
        for dy in 0..4 {
            for dx in 0..4 {
                if rng.random_bool(0.6) {
                    put(&mut img, x0 + dx, y0 + dy, bright);
                }
            }
        }
    }
    let noise = rng.random_range(0.03..0.07);
    finish(&mut img, rng, noise);
    (img, glyphs % 2)
}

/// Mid-gray smooth field of Gaussian blobs. Task: quadrant with the
/// largest deviation energy, computed from the finished image so the
/// label is true by construction.
fn render_general(rng: &mut ChaCha8Rng) -> (Vec<f32>, u16) {
    let mut img = vec![0.5f32; IMG_PIXELS];
    let blobs = rng.random_range(4..8);
    let mut params = Vec::new();
    for _ in 0..blobs {
        params.push((
            rng.random_range(0.0..32.0f32),
            rng.random_range(0.0..32.0f32),
            rng.random_range(2.5..6.5f32),
            rng.random_range(0.18..0.5f32) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        ));
    }
    for y in 0..IMG_SIZE {
        for x in 0..IMG_SIZE {
            let mut v = 0.5;
            for &(bx, by, sigma, amp) in &params {
                let d2 = (x as f32 - bx).powi(2) + (y as f32 - by).powi(2);
                v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            img[y * IMG_SIZE + x] = v.clamp(0.0, 1.0);
        }
    }
    let noise = rng.random_range(0.02..0.05);
    finish(&mut img, rng, noise);
    let mut energy = [0.0f64; 4];
    for y in 0..IMG_SIZE {
        for x in 0..IMG_SIZE {
            let q = (y / 16) * 2 + (x / 16);
            energy[q] += ((img[y * IMG_SIZE + x] - 0.5).abs()) as f64;
        }
    }
    let label = energy
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("energies are finite"))
        .map(|(i, _)| i as u16)
        .unwrap_or(0);
    (img, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        for domain in DomainLabel::ALL {
            let a = generate(domain, 42);
            let b = generate(domain, 42);
            assert_eq!(a, b, "{domain:?} not deterministic");
            let c = generate(domain, 43);
            assert_ne!(a.image, c.image, "{domain:?} ignores seed");
        }
    }

    #[test]
    fn pixel_values_stay_in_unit_range() {
        for domain in DomainLabel::ALL {
            for seed in 0..50 {
                let s = generate(domain, seed);
                assert!(s.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
                assert!((s.task_label as usize) < domain.task_classes());
            }
        }
    }

    #[test]
    fn chart_label_marginal_covers_all_classes() {
        let mut counts = [0usize; 5];
        for seed in 0..1000 {
            counts[generate(DomainLabel::Chart, seed).task_label as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "counts {counts:?}");
    }

    #[test]
    fn every_domain_covers_all_classes() {
        for domain in DomainLabel::ALL {
            let k = domain.task_classes();
            let mut counts = vec![0usize; k];
            for seed in 0..1000 {
                counts[generate(domain, seed).task_label as usize] += 1;
            }
            assert!(
                counts.iter().all(|&c| c > 0),
                "{domain:?}: counts {counts:?}"
            );
        }
    }

    #[test]
    fn doc_vs_general_separable_with_two_threshold_features() {
        // Feature 1: mean absolute vertical gradient (stripes score high).
        // Feature 2: fraction of pixels darker than 0.45.
        fn features(pixels: &[f32]) -> (f32, f32) {
            let mut grad = 0.0f32;
            for y in 1..IMG_SIZE {
                for x in 0..IMG_SIZE {
                    grad += (pixels[y * IMG_SIZE + x] - pixels[(y - 1) * IMG_SIZE + x]).abs();
                }
            }
            let dark = pixels.iter().filter(|&&p| p < 0.45).count() as f32
                / pixels.len() as f32;
            (grad / ((IMG_SIZE - 1) * IMG_SIZE) as f32, dark)
        }
        // Fit a single threshold on feature 1 over a training bag.
        let train: Vec<(f32, bool)> = (0..200)
            .map(|s| (features(generate(DomainLabel::Doc, s).pixels()).0, true))
            .chain((0..200).map(|s| {
                (
                    features(generate(DomainLabel::General, 10_000 + s).pixels()).0,
                    false,
                )
            }))
            .collect();
        let mut best = (0.0f32, 0usize);
        for i in 0..train.len() {
            let t = train[i].0;
            let correct = train
                .iter()
                .filter(|(f, is_doc)| (*f >= t) == *is_doc)
                .count();
            if correct > best.1 {
                best = (t, correct);
            }
        }
        let threshold = best.0;
        let mut correct = 0usize;
        let total = 2000usize;
        for s in 0..1000u64 {
            if features(generate(DomainLabel::Doc, 50_000 + s).pixels()).0 >= threshold {
                correct += 1;
            }
            if features(generate(DomainLabel::General, 60_000 + s).pixels()).0 < threshold {
                correct += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.99, "doc/general separability {acc}");
    }

    #[test]
    fn ambiguous_blend_near_zero_matches_pure() {
        let pure = generate(DomainLabel::Chart, 7);
        let blend = generate_ambiguous(DomainLabel::Chart, DomainLabel::Doc, 1e-4, 7).unwrap();
        for (a, b) in pure.pixels().iter().zip(blend.pixels()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
        assert_eq!(blend.task_label, pure.task_label);
        assert_eq!(blend.domain, DomainLabel::Chart);
    }

    #[test]
    fn ambiguous_blend_is_deterministic_in_all_arguments() {
        let a = generate_ambiguous(DomainLabel::Chart, DomainLabel::Doc, 0.5, 9).unwrap();
        let b = generate_ambiguous(DomainLabel::Chart, DomainLabel::Doc, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_ambiguous(DomainLabel::Chart, DomainLabel::Math, 0.5, 9).unwrap();
        assert_ne!(a.image, c.image);
        let d = generate_ambiguous(DomainLabel::Chart, DomainLabel::Doc, 0.4, 9).unwrap();
        assert_ne!(a.image, d.image);
        let e = generate_ambiguous(DomainLabel::Chart, DomainLabel::Doc, 0.5, 10).unwrap();
        assert_ne!(a.image, e.image);
    }

    #[test]
    fn ambiguous_blend_contract_errors() {
        assert!(generate_ambiguous(DomainLabel::Chart, DomainLabel::Chart, 0.5, 1).is_err());
        assert!(generate_ambiguous(DomainLabel::Chart, DomainLabel::Doc, 0.0, 1).is_err());
        assert!(generate_ambiguous(DomainLabel::Chart, DomainLabel::Doc, 1.0, 1).is_err());
        assert!(generate_ambiguous(DomainLabel::Chart, DomainLabel::Doc, -0.1, 1).is_err());
    }
}
