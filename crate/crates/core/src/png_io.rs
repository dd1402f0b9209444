//! Minimal PNG helpers: header inspection and RGB encoding.

use std::io::Cursor;

/// Width and height from a PNG header. Fails on anything that is not a
/// readable PNG or that declares a zero-sized image.
pub fn png_dimensions(bytes: &[u8]) -> Result<(u32, u32), String> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let reader = decoder.read_info().map_err(|e| format!("not a readable PNG: {e}"))?;
    let info = reader.info();
    if info.width == 0 || info.height == 0 {
        return Err(format!("PNG has zero dimension ({}x{})", info.width, info.height));
    }
    Ok((info.width, info.height))
}

/// Encodes 8-bit RGB pixel data (`width * height * 3` bytes) as PNG.
pub fn encode_rgb8(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width as usize * height as usize * 3, "pixel buffer size");
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Fast);
        let mut writer = encoder.write_header().expect("in-memory PNG header");
        writer.write_image_data(rgb).expect("in-memory PNG data");
    }
    out
}

/// A solid-colour PNG with `seed` written into the first pixels, so distinct
/// seeds give distinct bytes.
pub fn synthetic_png(width: u32, height: u32, seed: u64) -> Vec<u8> {
    let mut rgb = vec![0u8; width as usize * height as usize * 3];
    let shade = (seed % 200) as u8 + 40;
    for px in rgb.chunks_exact_mut(3) {
        px.copy_from_slice(&[shade, shade / 2, 255 - shade]);
    }
    for (i, b) in seed.to_le_bytes().iter().enumerate() {
        if i < rgb.len() {
            rgb[i] = *b;
        }
    }
    encode_rgb8(width, height, &rgb)
}
