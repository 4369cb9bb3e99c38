use super::{ImagingError, Mask};

/// Euclidean distance from `p` to the segment `a`–`b`.
pub(crate) fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// Sets every pixel whose centre lies within `thickness / 2` of a polyline.
///
/// Points are `[x, y]` in pixel coordinates. A single-point polyline draws a dot.
pub fn rasterize_strokes(
    polylines: &[Vec<[f64; 2]>],
    height: usize,
    width: usize,
    thickness: f64,
) -> Result<Mask, ImagingError> {
    if polylines.iter().all(|p| p.is_empty()) {
        return Err(ImagingError::EmptyStrokes);
    }
    for &[x, y] in polylines.iter().flatten() {
        if !(0.0..=(width as f64 - 1.0)).contains(&x) || !(0.0..=(height as f64 - 1.0)).contains(&y) {
            return Err(ImagingError::OutOfExtents {
                x,
                y,
                width,
                height,
            });
        }
    }
    let radius = thickness / 2.0;
    let mut mask = Mask::new(height, width);
    for line in polylines.iter().filter(|l| !l.is_empty()) {
        let segments: Vec<([f64; 2], [f64; 2])> = if line.len() == 1 {
            vec![(line[0], line[0])]
        } else {
            line.windows(2).map(|w| (w[0], w[1])).collect()
        };
        for (a, b) in segments {
            let x0 = (a[0].min(b[0]) - radius).floor().max(0.0) as usize;
            let x1 = ((a[0].max(b[0]) + radius).ceil() as usize).min(width - 1);
            let y0 = (a[1].min(b[1]) - radius).floor().max(0.0) as usize;
            let y1 = ((a[1].max(b[1]) + radius).ceil() as usize).min(height - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if segment_distance([x as f64, y as f64], a, b) <= radius + 1e-9 {
                        mask.set(y, x, true);
                    }
                }
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_segment_widths() {
        let line = vec![vec![[2.0, 5.0], [10.0, 5.0]]];
        let thin = rasterize_strokes(&line, 11, 13, 1.0).unwrap();
        for y in 0..11 {
            for x in 0..13 {
                assert_eq!(thin.get(y, x), y == 5 && (2..=10).contains(&x));
            }
        }
        let thick = rasterize_strokes(&line, 11, 13, 3.0).unwrap();
        for y in 0..11 {
            let expected = (4..=6).contains(&y);
            assert_eq!(thick.get(y, 6), expected, "row {y}");
        }
    }

    #[test]
    fn diagonal_coverage_matches_per_pixel_oracle() {
        let strokes = vec![vec![[1.3, 2.2], [17.8, 12.6], [4.0, 14.5]]];
        for thickness in [1.0, 2.0, 3.5] {
            let mask = rasterize_strokes(&strokes, 16, 20, thickness).unwrap();
            for y in 0..16 {
                for x in 0..20 {
                    // independent closed-form distance to each segment
                    let p = (x as f64, y as f64);
                    let near = strokes[0].windows(2).any(|w| {
                        let (a, b) = (w[0], w[1]);
                        let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
                        let t = (((p.0 - a[0]) * vx + (p.1 - a[1]) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
                        let d = ((p.0 - a[0] - t * vx).powi(2) + (p.1 - a[1] - t * vy).powi(2)).sqrt();
                        d <= thickness / 2.0
                    });
                    assert_eq!(mask.get(y, x), near, "({x},{y}) thickness {thickness}");
                }
            }
        }
    }

    #[test]
    fn empty_and_out_of_range_input() {
        assert!(matches!(rasterize_strokes(&[], 4, 4, 1.0), Err(ImagingError::EmptyStrokes)));
        let outside = vec![vec![[0.0, 0.0], [4.5, 1.0]]];
        assert!(matches!(
            rasterize_strokes(&outside, 4, 4, 1.0),
            Err(ImagingError::OutOfExtents { .. })
        ));
    }
}
