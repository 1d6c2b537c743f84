//! Flat-colour images handed to the vision-language model: semantic views,
//! the labelled panorama strip and action-marker annotations.

use image::{Rgb, RgbImage};

use crate::geometry::DepthImage;
use crate::simulator::Observation;

pub const LABEL_BAND: u32 = 28;

/// Describes the colour coding of rendered views.
pub const LEGEND: &str = "Colour legend: bed = red, sofa = blue, toilet = purple, tv = yellow, \
plant = green, chair = orange, other objects = cyan. Floor and walls are grey, brighter when closer; \
black means nothing within range.";

pub fn category_color(id: u8) -> [u8; 3] {
    match id {
        1 => [220, 50, 50],
        2 => [50, 110, 220],
        3 => [150, 70, 200],
        4 => [235, 200, 40],
        5 => [40, 170, 70],
        6 => [235, 130, 30],
        _ => [40, 200, 200],
    }
}

fn shade(color: [u8; 3], range: f64) -> Rgb<u8> {
    let k = (1.0 - range / 12.0).clamp(0.25, 1.0);
    Rgb(color.map(|c| (c as f64 * k).round() as u8))
}

/// Colours a rendered view by semantic id, shaded by depth.
pub fn colorize(obs: &Observation) -> RgbImage {
    let (w, h) = (obs.width(), obs.height());
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (col, row) = (x as usize, y as usize);
        let range = obs.depth.get(col, row);
        if !DepthImage::is_valid(range) {
            return Rgb([0, 0, 0]);
        }
        match obs.semantic_at(col, row) {
            0 => shade([200, 200, 200], range),
            id => shade(category_color(id), range),
        }
    })
}

const GLYPHS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b001, 0b001, 0b001],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// Width in pixels of `text` drawn by [`draw_digits`].
pub fn digits_width(text: &str, scale: u32) -> u32 {
    let n = text.chars().filter(char::is_ascii_digit).count() as u32;
    if n == 0 {
        0
    } else {
        n * 4 * scale - scale
    }
}

/// Draws the decimal digits of `text`; other characters are skipped.
pub fn draw_digits(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>, scale: u32) {
    let mut cx = x;
    for ch in text.chars() {
        let Some(d) = ch.to_digit(10) else { continue };
        for (gy, bits) in GLYPHS[d as usize].iter().enumerate() {
            for gx in 0..3 {
                if bits & (0b100 >> gx) == 0 {
                    continue;
                }
                for sy in 0..scale as i64 {
                    for sx in 0..scale as i64 {
                        put(img, cx + gx * scale as i64 + sx, y + gy as i64 * scale as i64 + sy, color);
                    }
                }
            }
        }
        cx += 4 * scale as i64;
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

pub fn fill_circle(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
    let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
    let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                put(img, x, y, color);
            }
        }
    }
}

/// Concatenates views left to right under a band carrying each label.
pub fn compose_panorama(views: &[&RgbImage], labels: &[String]) -> RgbImage {
    let h = views.iter().map(|v| v.height()).max().unwrap_or(0);
    let w: u32 = views.iter().map(|v| v.width()).sum();
    let mut out = RgbImage::from_pixel(w, h + LABEL_BAND, Rgb([255, 255, 255]));
    let mut x0 = 0u32;
    for (i, v) in views.iter().enumerate() {
        image::imageops::replace(&mut out, *v, x0 as i64, LABEL_BAND as i64);
        if let Some(label) = labels.get(i) {
            let tw = digits_width(label, 4);
            draw_digits(&mut out, (x0 + v.width() / 2) as i64 - tw as i64 / 2, 4, label, Rgb([0, 0, 0]), 4);
        }
        // separator
        for y in 0..out.height() {
            if x0 > 0 {
                out.put_pixel(x0, y, Rgb([255, 255, 255]));
            }
        }
        x0 += v.width();
    }
    out
}

/// Draws numbered markers at the given pixel positions.
pub fn annotate_markers(base: &RgbImage, markers: &[(f64, f64, usize)]) -> RgbImage {
    let mut img = base.clone();
    let (w, h) = (img.width() as f64, img.height() as f64);
    for &(u, v, number) in markers {
        let (cx, cy) = (u.clamp(12.0, w - 12.0), v.clamp(12.0, h - 12.0));
        fill_circle(&mut img, cx, cy, 12.0, Rgb([0, 0, 0]));
        fill_circle(&mut img, cx, cy, 10.0, Rgb([255, 255, 255]));
        let label = number.to_string();
        let tw = digits_width(&label, 2) as f64;
        draw_digits(&mut img, (cx - tw / 2.0).round() as i64, (cy - 5.0).round() as i64, &label, Rgb([0, 0, 0]), 2);
    }
    img
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).expect("in-memory PNG encoding");
    buf.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_are_drawn_in_place() {
        let mut img = RgbImage::new(20, 10);
        draw_digits(&mut img, 1, 1, "1", Rgb([255, 0, 0]), 1);
        // glyph "1" has its stem in the middle column
        assert_eq!(img.get_pixel(2, 1), &Rgb([255, 0, 0]));
        assert_eq!(img.get_pixel(1, 1), &Rgb([0, 0, 0]));
        assert_eq!(digits_width("12", 1), 7);
    }

    #[test]
    fn panorama_has_all_strips() {
        let a = RgbImage::from_pixel(4, 3, Rgb([1, 2, 3]));
        let b = RgbImage::from_pixel(4, 3, Rgb([9, 9, 9]));
        let p = compose_panorama(&[&a, &b], &["30".into(), "90".into()]);
        assert_eq!(p.dimensions(), (8, 3 + LABEL_BAND));
        assert_eq!(p.get_pixel(1, LABEL_BAND + 1), &Rgb([1, 2, 3]));
        assert_eq!(p.get_pixel(6, LABEL_BAND + 1), &Rgb([9, 9, 9]));
    }

    #[test]
    fn png_encoding_has_signature() {
        let png = encode_png(&RgbImage::new(2, 2));
        assert_eq!(&png[..4], &[0x89, b'P', b'N', b'G']);
    }
}
