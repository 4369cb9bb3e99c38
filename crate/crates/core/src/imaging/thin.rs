use super::Mask;

/// Neighbours P2..P9, clockwise from north.
const RING: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

/// Two-subiteration morphological thinning (Zhang–Suen) run to a fixed point.
///
/// The result is 8-connected and one pixel wide away from junctions; running
/// it again on its own output changes nothing.
pub fn skeletonize(mask: &Mask) -> Mask {
    let mut current = mask.clone();
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            doomed.clear();
            for y in 0..current.height() {
                for x in 0..current.width() {
                    if current.get(y, x) && removable(&current, y as isize, x as isize, pass) {
                        doomed.push((y, x));
                    }
                }
            }
            for &(y, x) in &doomed {
                current.set(y, x, false);
            }
            changed |= !doomed.is_empty();
        }
        if !changed {
            return current;
        }
    }
}

fn removable(m: &Mask, y: isize, x: isize, pass: usize) -> bool {
    let p: [bool; 8] = RING.map(|(dy, dx)| m.get_signed(y + dy, x + dx));
    let neighbours = p.iter().filter(|&&b| b).count();
    if !(2..=6).contains(&neighbours) {
        return false;
    }
    let transitions = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    if transitions != 1 {
        return false;
    }
    // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
    let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
    if pass == 0 {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        let data = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Mask::from_data(h, w, data).unwrap()
    }

    #[test]
    fn thin_line_is_unchanged() {
        let m = mask_from(&["..........", ".########.", ".........."]);
        assert_eq!(skeletonize(&m), m);
    }

    #[test]
    fn solid_bar_thins_to_centre_row() {
        let m = mask_from(&[
            "............",
            ".##########.",
            ".##########.",
            ".##########.",
            "............",
        ]);
        let s = skeletonize(&m);
        // The middle row survives; each end may erode by up to two pixels.
        for y in [0, 1, 3, 4] {
            assert!((0..12).all(|x| !s.get(y, x)), "row {y} should be empty");
        }
        let kept: Vec<usize> = (0..12).filter(|&x| s.get(2, x)).collect();
        assert!(*kept.first().unwrap() <= 3 && *kept.last().unwrap() >= 8, "{kept:?}");
        assert_eq!(kept.len(), kept.last().unwrap() - kept.first().unwrap() + 1);
        assert_eq!(s.components(), 1);
    }

    #[test]
    fn empty_mask_stays_empty() {
        let m = Mask::new(5, 5);
        assert_eq!(skeletonize(&m), m);
    }
}
