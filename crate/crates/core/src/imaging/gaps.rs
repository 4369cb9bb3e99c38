use std::ops::Range;

use super::{GrayImage, ImagingError, Mask};

/// Runs of empty columns lying strictly between the first and last occupied
/// column of `mask`.
pub fn gap_runs(mask: &Mask) -> Vec<Range<usize>> {
    let occupied: Vec<bool> = (0..mask.width()).map(|x| mask.column_occupied(x)).collect();
    let (Some(first), Some(last)) = (
        occupied.iter().position(|&o| o),
        occupied.iter().rposition(|&o| o),
    ) else {
        return Vec::new();
    };
    let mut runs = Vec::new();
    let mut x = first;
    while x < last {
        if occupied[x] {
            x += 1;
            continue;
        }
        let start = x;
        while !occupied[x] {
            x += 1;
        }
        runs.push(start..x);
    }
    runs
}

fn validate(gaps: &[Range<usize>], width: usize) -> Result<(), ImagingError> {
    let ok = gaps.iter().all(|g| g.start < g.end && g.end <= width)
        && gaps.windows(2).all(|w| w[0].end <= w[1].start);
    if ok {
        Ok(())
    } else {
        Err(ImagingError::BadGaps(gaps.to_vec()))
    }
}

/// Rebuilds `image` with each gap column run resampled (nearest column) to
/// the matching entry of `widths`; every other column is copied verbatim.
///
/// With `out_width`, the result is cropped on the right or padded by
/// repeating its last column.
pub fn resize_gaps(
    image: &GrayImage,
    gaps: &[Range<usize>],
    widths: &[usize],
    out_width: Option<usize>,
) -> Result<GrayImage, ImagingError> {
    validate(gaps, image.width())?;
    if gaps.len() != widths.len() {
        return Err(ImagingError::GapCount {
            gaps: gaps.len(),
            widths: widths.len(),
        });
    }
    let mut columns = Vec::with_capacity(image.width());
    let mut x = 0;
    for (gap, &new_len) in gaps.iter().zip(widths) {
        columns.extend(x..gap.start);
        let len = gap.len();
        columns.extend((0..new_len).map(|j| gap.start + ((2 * j + 1) * len) / (2 * new_len)));
        x = gap.end;
    }
    columns.extend(x..image.width());
    if let Some(target) = out_width {
        let filler = *columns.last().unwrap_or(&0);
        columns.resize(target, filler);
    }
    let h = image.height();
    let mut data = Vec::with_capacity(h * columns.len());
    for y in 0..h {
        data.extend(columns.iter().map(|&c| image.get(y, c)));
    }
    GrayImage::new(h, columns.len(), data)
}

/// Widens (or narrows) every gap run by `factor`, keeping the image width.
pub fn stretch_gaps(image: &GrayImage, gaps: &[Range<usize>], factor: f64) -> Result<GrayImage, ImagingError> {
    let widths: Vec<usize> = gaps.iter().map(|g| (g.len() as f64 * factor).round() as usize).collect();
    resize_gaps(image, gaps, &widths, Some(image.width()))
}

#[cfg(test)]
mod tests {
    use super::*;

    // ink = high values; characters at columns 2..5, 15..18 and 25..27
    fn striped() -> GrayImage {
        let chars = [2..5, 15..18, 25..27];
        GrayImage::from_fn(4, 40, |y, x| {
            if chars.iter().any(|c| c.contains(&x)) {
                0.6 + 0.01 * (x + 40 * y) as f64 / 4.0
            } else {
                0.1
            }
        })
    }

    #[test]
    fn factor_one_is_identity() {
        let img = striped();
        let gaps = gap_runs(&img.threshold(0.5));
        assert_eq!(gaps, vec![5..15, 18..25]);
        assert_eq!(stretch_gaps(&img, &gaps, 1.0).unwrap(), img);
    }

    #[test]
    fn gap_grows_by_factor_and_characters_are_untouched() {
        let img = striped();
        let out = stretch_gaps(&img, &[5..15], 1.5).unwrap();
        assert_eq!(out.width(), 40);
        for y in 0..4 {
            for x in 2..5 {
                assert_eq!(out.get(y, x), img.get(y, x));
            }
            for x in 15..18 {
                assert_eq!(out.get(y, x + 5), img.get(y, x));
            }
        }
        assert_eq!(gap_runs(&out.threshold(0.5)), vec![5..20, 23..30]);
    }

    #[test]
    fn shrinking_pads_on_the_right() {
        let img = striped();
        let out = stretch_gaps(&img, &[5..15], 0.5).unwrap();
        assert_eq!(out.width(), 40);
        assert_eq!(gap_runs(&out.threshold(0.5)), vec![5..10, 13..20]);
        assert_eq!(out.get(0, 39), img.get(0, 39));
    }

    #[test]
    fn overlapping_or_unsorted_gaps_are_rejected() {
        let img = striped();
        assert!(matches!(stretch_gaps(&img, &[5..15, 10..20], 2.0), Err(ImagingError::BadGaps(_))));
        assert!(matches!(stretch_gaps(&img, &[18..25, 5..15], 2.0), Err(ImagingError::BadGaps(_))));
        assert!(matches!(
            resize_gaps(&img, &[5..15], &[1, 2], None),
            Err(ImagingError::GapCount { .. })
        ));
    }
}
