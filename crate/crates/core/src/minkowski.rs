//! Discrete 2D Minkowski functionals of binary regions.
//!
//! Every functional is accumulated from 2x2 pixel neighbourhoods ("bit quads")
//! centred on the vertices of the pixel grid, with everything outside the
//! region treated as background:
//!
//! * area: each pixel sits in four quads, so `area = sum(popcount) / 4`;
//! * boundary: each unit edge is seen by the two quads at its endpoints, so
//!   `boundary = sum(differing 4-neighbour pairs) / 2`;
//! * Euler characteristic (Gray's bit-quad formula): `(Q1 - Q3 - 2 QD) / 4`
//!   for 8-connected foreground, `(Q1 - Q3 + 2 QD) / 4` for 4-connected.
//!
//! With 8-connected foreground the Euler characteristic equals `V - E + F` of
//! the union of closed unit squares.
//!
//! [`WindowFunctionals`] evaluates the same quantities for any square window
//! of a label image in O(1) per phase, using prefix sums of the quad
//! contributions; the window border counts as background.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Mask;
use crate::sampling::Window;
use crate::segmentation::SegmentedImage;

/// Foreground connectivity used for the Euler characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Scaling applied to the integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Pixel count, boundary-edge count, Euler characteristic.
    #[default]
    Raw,
    /// Boundary scaled by `1/(2 pi)` and Euler characteristic by `1/pi`.
    Scaled,
}

impl Normalization {
    /// Per-functional multipliers for `(m0, m1, m2)`.
    pub fn scales(&self) -> [f64; 3] {
        match self {
            Normalization::Raw => [1.0, 1.0, 1.0],
            Normalization::Scaled => [1.0, 1.0 / (2.0 * PI), 1.0 / PI],
        }
    }
}

/// Exact integer counts for one binary region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RawCounts {
    pub area: i64,
    pub boundary: i64,
    pub euler: i64,
}

impl RawCounts {
    pub fn to_triple(self, normalization: Normalization) -> MinkowskiTriple {
        let [s0, s1, s2] = normalization.scales();
        MinkowskiTriple {
            m0: self.area as f64 * s0,
            m1: self.boundary as f64 * s1,
            m2: self.euler as f64 * s2,
            normalization,
        }
    }
}

/// Area, boundary measure and Euler characteristic of a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinkowskiTriple {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub normalization: Normalization,
}

impl MinkowskiTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.m0, self.m1, self.m2]
    }
}

/// Quad contribution `[4 * area, 2 * boundary, 4 * euler]` for a 2x2 pattern.
/// Bits: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
const fn quad_entry(pattern: u8, conn: Connectivity) -> [i64; 3] {
    let a = (pattern & 1) as i64;
    let b = ((pattern >> 1) & 1) as i64;
    let c = ((pattern >> 2) & 1) as i64;
    let d = ((pattern >> 3) & 1) as i64;
    let area4 = a + b + c + d;
    let perim2 = (a ^ b) + (c ^ d) + (a ^ c) + (b ^ d);
    let diagonal = pattern == 0b1001 || pattern == 0b0110;
    let euler4 = match area4 {
        1 => 1,
        3 => -1,
        2 if diagonal => match conn {
            Connectivity::Eight => -2,
            Connectivity::Four => 2,
        },
        _ => 0,
    };
    [area4, perim2, euler4]
}

const fn build_lut(conn: Connectivity) -> [[i64; 3]; 16] {
    let mut lut = [[0; 3]; 16];
    let mut p = 0;
    while p < 16 {
        lut[p] = quad_entry(p as u8, conn);
        p += 1;
    }
    lut
}

const LUT8: [[i64; 3]; 16] = build_lut(Connectivity::Eight);
const LUT4: [[i64; 3]; 16] = build_lut(Connectivity::Four);

fn lut(conn: Connectivity) -> &'static [[i64; 3]; 16] {
    match conn {
        Connectivity::Eight => &LUT8,
        Connectivity::Four => &LUT4,
    }
}

fn finish(sum: [i64; 3]) -> RawCounts {
    debug_assert!(sum[0] % 4 == 0 && sum[1] % 2 == 0 && sum[2] % 4 == 0, "{sum:?}");
    RawCounts {
        area: sum[0] / 4,
        boundary: sum[1] / 2,
        euler: sum[2] / 4,
    }
}

/// Integer functionals of the `true` pixels of a `width x height` grid given
/// by `inside(y, x)`. Pixels outside the grid are background.
pub fn raw_counts_by(
    width: usize,
    height: usize,
    conn: Connectivity,
    inside: impl Fn(usize, usize) -> bool,
) -> RawCounts {
    let table = lut(conn);
    let at = |y: isize, x: isize| -> u8 {
        if y < 0 || x < 0 || y >= height as isize || x >= width as isize {
            0
        } else {
            inside(y as usize, x as usize) as u8
        }
    };
    let mut sum = [0i64; 3];
    for vy in 0..=height as isize {
        for vx in 0..=width as isize {
            let pattern = at(vy - 1, vx - 1)
                | at(vy - 1, vx) << 1
                | at(vy, vx - 1) << 2
                | at(vy, vx) << 3;
            let e = &table[pattern as usize];
            sum[0] += e[0];
            sum[1] += e[1];
            sum[2] += e[2];
        }
    }
    finish(sum)
}

pub fn raw_counts(m: &Mask, conn: Connectivity) -> RawCounts {
    raw_counts_by(m.width(), m.height(), conn, |y, x| m.get(y, x))
}

/// Minkowski functionals of a mask with 8-connected foreground.
pub fn functionals(m: &Mask, normalization: Normalization) -> MinkowskiTriple {
    raw_counts(m, Connectivity::Eight).to_triple(normalization)
}

/// Functionals of `{label == phase}` inside window `w`, border as background.
/// Direct evaluation; see [`WindowFunctionals`] for the fast path.
pub fn functionals_window(
    s: &SegmentedImage,
    w: &Window,
    phase: u8,
    normalization: Normalization,
) -> Result<MinkowskiTriple> {
    check_window(s, w)?;
    check_phase(s, phase)?;
    Ok(raw_counts_by(w.n, w.n, Connectivity::Eight, |y, x| {
        s.label(w.y + y, w.x + x) == phase
    })
    .to_triple(normalization))
}

fn check_window(s: &SegmentedImage, w: &Window) -> Result<()> {
    if w.n == 0 || w.x + w.n > s.width() || w.y + w.n > s.height() {
        return Err(Error::OutOfBounds(format!(
            "window ({}, {}, n={}) outside {}x{} image",
            w.x,
            w.y,
            w.n,
            s.width(),
            s.height()
        )));
    }
    Ok(())
}

fn check_phase(s: &SegmentedImage, phase: u8) -> Result<()> {
    if phase as usize >= s.phi() {
        return Err(Error::InvalidArgument(format!(
            "phase {phase} out of range for phi = {}",
            s.phi()
        )));
    }
    Ok(())
}

/// Prefix-sum tables giving windowed functionals of every phase in O(phi).
///
/// For a window the vertex quads split into interior quads (all four cells in
/// the window), edge quads (two cells in the window, the other two are
/// background) and the four corner quads (one cell). Interior quads are summed
/// from a 2D prefix table over the image's interior vertices; edge quads only
/// depend on a horizontal or vertical pixel pair and are summed from 1D prefix
/// tables along rows and columns.
#[derive(Debug, Clone)]
pub struct WindowFunctionals {
    width: usize,
    height: usize,
    phi: usize,
    labels: Vec<u8>,
    /// `(height + 1) x (width + 1) x phi`, sum over vertices `Y' < Y, X' < X`.
    quad_prefix: Vec<[i64; 3]>,
    /// `height x (width + 1) x phi`, along each row of horizontal pairs.
    hpair_prefix: Vec<[i64; 3]>,
    /// `(height + 1) x width x phi`, along each column of vertical pairs.
    vpair_prefix: Vec<[i64; 3]>,
}

/// Contribution of an edge quad whose two window cells are `u` and `v`.
#[inline]
fn pair_entry(u: bool, v: bool) -> [i64; 3] {
    let (u, v) = (u as i64, v as i64);
    [u + v, (u ^ v) + u + v, u ^ v]
}

const SINGLE: [i64; 3] = [1, 2, 1];

#[inline]
fn add(a: &mut [i64; 3], b: &[i64; 3]) {
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
}

#[inline]
fn sub(a: &mut [i64; 3], b: &[i64; 3]) {
    a[0] -= b[0];
    a[1] -= b[1];
    a[2] -= b[2];
}

impl WindowFunctionals {
    pub fn new(s: &SegmentedImage, conn: Connectivity) -> Self {
        let (w, h, phi) = (s.width(), s.height(), s.phi());
        let labels = s.labels().to_vec();
        let table = lut(conn);
        let lab = |y: usize, x: usize| labels[y * w + x];

        let qidx = |y: usize, x: usize| (y * (w + 1) + x) * phi;
        let mut quad_prefix = vec![[0i64; 3]; (h + 1) * (w + 1) * phi];
        let mut row_acc = vec![[0i64; 3]; phi];
        for yv in 1..=h {
            row_acc.iter_mut().for_each(|r| *r = [0; 3]);
            for xv in 1..=w {
                // interior vertex (yv - 1, xv - 1) exists when both are >= 1
                let (vy, vx) = (yv - 1, xv - 1);
                if vy >= 1 && vx >= 1 {
                    let cells = [lab(vy - 1, vx - 1), lab(vy - 1, vx), lab(vy, vx - 1), lab(vy, vx)];
                    for (bit, &l) in cells.iter().enumerate() {
                        // each distinct label is handled at its first occurrence
                        if cells[..bit].contains(&l) {
                            continue;
                        }
                        let pattern = cells
                            .iter()
                            .enumerate()
                            .fold(0u8, |p, (b, &c)| p | ((c == l) as u8) << b);
                        add(&mut row_acc[l as usize], &table[pattern as usize]);
                    }
                }
                for p in 0..phi {
                    let mut v = quad_prefix[qidx(yv - 1, xv) + p];
                    add(&mut v, &row_acc[p]);
                    quad_prefix[qidx(yv, xv) + p] = v;
                }
            }
        }

        let hidx = |y: usize, x: usize| (y * (w + 1) + x) * phi;
        let mut hpair_prefix = vec![[0i64; 3]; h * (w + 1) * phi];
        for y in 0..h {
            for x in 1..=w {
                for p in 0..phi {
                    let mut v = hpair_prefix[hidx(y, x - 1) + p];
                    // pair (x - 2, x - 1) for the vertex column x - 1
                    if x >= 2 {
                        let pl = p as u8;
                        add(&mut v, &pair_entry(lab(y, x - 2) == pl, lab(y, x - 1) == pl));
                    }
                    hpair_prefix[hidx(y, x) + p] = v;
                }
            }
        }

        let vidx = |y: usize, x: usize| (y * w + x) * phi;
        let mut vpair_prefix = vec![[0i64; 3]; (h + 1) * w * phi];
        for y in 1..=h {
            for x in 0..w {
                for p in 0..phi {
                    let mut v = vpair_prefix[vidx(y - 1, x) + p];
                    if y >= 2 {
                        let pl = p as u8;
                        add(&mut v, &pair_entry(lab(y - 2, x) == pl, lab(y - 1, x) == pl));
                    }
                    vpair_prefix[vidx(y, x) + p] = v;
                }
            }
        }

        Self {
            width: w,
            height: h,
            phi,
            labels,
            quad_prefix,
            hpair_prefix,
            vpair_prefix,
        }
    }

    pub fn phi(&self) -> usize {
        self.phi
    }

    /// Raw counts of every phase in window `win`, written to `out[phase]`.
    pub fn window_into(&self, win: &Window, out: &mut [RawCounts]) {
        let (w, phi) = (self.width, self.phi);
        let (x, y, n) = (win.x, win.y, win.n);
        debug_assert!(n >= 1 && x + n <= w && y + n <= self.height);
        debug_assert_eq!(out.len(), phi);
        let q = |yy: usize, xx: usize| (yy * (w + 1) + xx) * phi;
        let hq = |yy: usize, xx: usize| (yy * (w + 1) + xx) * phi;
        let vq = |yy: usize, xx: usize| (yy * w + xx) * phi;
        let (y1, yn, x1, xn) = (y + 1, y + n, x + 1, x + n);
        let corners = [
            self.labels[y * w + x],
            self.labels[y * w + x + n - 1],
            self.labels[(y + n - 1) * w + x],
            self.labels[(y + n - 1) * w + x + n - 1],
        ];
        for (p, slot) in out.iter_mut().enumerate() {
            let mut s = self.quad_prefix[q(yn, xn) + p];
            sub(&mut s, &self.quad_prefix[q(y1, xn) + p]);
            sub(&mut s, &self.quad_prefix[q(yn, x1) + p]);
            add(&mut s, &self.quad_prefix[q(y1, x1) + p]);
            for row in [y, y + n - 1] {
                add(&mut s, &self.hpair_prefix[hq(row, xn) + p]);
                sub(&mut s, &self.hpair_prefix[hq(row, x1) + p]);
            }
            for col in [x, x + n - 1] {
                add(&mut s, &self.vpair_prefix[vq(yn, col) + p]);
                sub(&mut s, &self.vpair_prefix[vq(y1, col) + p]);
            }
            let k = corners.iter().filter(|&&l| l as usize == p).count() as i64;
            s[0] += k * SINGLE[0];
            s[1] += k * SINGLE[1];
            s[2] += k * SINGLE[2];
            *slot = finish(s);
        }
    }

    pub fn window(&self, win: &Window) -> Vec<RawCounts> {
        let mut out = vec![RawCounts::default(); self.phi];
        self.window_into(win, &mut out);
        out
    }
}


#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use crate::segmentation::SegmentedImage;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(rows: &[&str]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        Mask::from_fn(w, h, |y, x| rows[y].as_bytes()[x] == b'#')
    }

    fn raw(m: &Mask) -> (i64, i64, i64) {
        let c = raw_counts(m, Connectivity::Eight);
        (c.area, c.boundary, c.euler)
    }

    #[test]
    fn worked_examples() {
        assert_eq!(raw(&mask(&["#"])), (1, 4, 1));
        assert_eq!(raw(&Mask::from_fn(4, 4, |_, _| true)), (16, 16, 1));
        assert_eq!(raw(&mask(&["###", "#.#", "###"])), (8, 16, 0));
        assert_eq!(raw(&mask(&["#..", "...", "..#"])).2, 2);
        assert_eq!(raw(&Mask::empty(3, 3)), (0, 0, 0));
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = mask(&["#.", ".#"]);
        assert_eq!(raw_counts(&m, Connectivity::Eight).euler, 1);
        assert_eq!(raw_counts(&m, Connectivity::Four).euler, 2);
    }

    #[test]
    fn scaled_normalization_scales() {
        let t = functionals(&mask(&["#"]), Normalization::Scaled);
        assert_eq!(t.m0, 1.0);
        assert!((t.m1 - 4.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((t.m2 - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn all_3x3_masks_match_complex_and_flood_fill() {
        for bits in 0u32..512 {
            let m = Mask::from_fn(3, 3, |y, x| bits >> (y * 3 + x) & 1 == 1);
            assert_eq!(raw(&m), complex_counts(&m), "mask {bits:09b}");
            assert_eq!(raw(&m).2, components_minus_holes(&m, true), "mask {bits:09b}");
            assert_eq!(
                raw_counts(&m, Connectivity::Four).euler,
                components_minus_holes(&m, false),
                "mask {bits:09b}"
            );
        }
    }

    #[test]
    fn translation_invariance() {
        let m = mask(&["##.", "#.#", ".##"]);
        let padded = Mask::from_fn(9, 7, |y, x| {
            (2..5).contains(&y) && (4..7).contains(&x) && m.get(y - 2, x - 4)
        });
        assert_eq!(raw(&m), raw(&padded));
    }

    #[test]
    fn additivity_over_separated_components() {
        let a = mask(&["##", "#."]);
        let b = mask(&["###", "#.#", "###"]);
        let both = Mask::from_fn(8, 3, |y, x| {
            if x < 2 {
                y < 2 && a.get(y, x)
            } else if x >= 5 {
                b.get(y, x - 5)
            } else {
                false
            }
        });
        let (ra, rb, rboth) = (raw(&a), raw(&b), raw(&both));
        assert_eq!(rboth.0, ra.0 + rb.0);
        assert_eq!(rboth.2, ra.2 + rb.2);
    }

    fn random_labels(w: usize, h: usize, phi: u8, seed: u64) -> SegmentedImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = (0..w * h).map(|_| rng.random_range(0..phi)).collect();
        SegmentedImage::from_labels(w, h, phi as usize, labels).unwrap()
    }

    #[test]
    fn window_examples() {
        let s = SegmentedImage::from_labels(6, 6, 2, vec![1; 36]).unwrap();
        let w = Window { x: 1, y: 2, n: 3 };
        let t = functionals_window(&s, &w, 1, Normalization::Raw).unwrap();
        assert_eq!(t.as_array(), [9.0, 12.0, 1.0]);
        let t = functionals_window(&s, &w, 0, Normalization::Raw).unwrap();
        assert_eq!(t.as_array(), [0.0, 0.0, 0.0]);
        assert!(functionals_window(&s, &Window { x: 4, y: 0, n: 3 }, 0, Normalization::Raw).is_err());
        assert!(functionals_window(&s, &w, 2, Normalization::Raw).is_err());
    }

    #[test]
    fn fast_windows_match_extracted_submasks() {
        for seed in 0..20 {
            let s = random_labels(6, 6, 3, seed);
            let fast = WindowFunctionals::new(&s, Connectivity::Eight);
            for n in 1..=6 {
                for y in 0..=6 - n {
                    for x in 0..=6 - n {
                        let win = Window { x, y, n };
                        let got = fast.window(&win);
                        for p in 0..3u8 {
                            let sub = Mask::from_fn(n, n, |yy, xx| s.label(y + yy, x + xx) == p);
                            let c = complex_counts(&sub);
                            let g = got[p as usize];
                            assert_eq!((g.area, g.boundary, g.euler), c, "seed {seed} win {win:?} phase {p}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fast_windows_four_connectivity() {
        let s = random_labels(7, 5, 2, 99);
        let fast = WindowFunctionals::new(&s, Connectivity::Four);
        for n in 1..=5 {
            for y in 0..=5 - n {
                for x in 0..=7 - n {
                    let got = fast.window(&Window { x, y, n });
                    for p in 0..2u8 {
                        let sub = Mask::from_fn(n, n, |yy, xx| s.label(y + yy, x + xx) == p);
                        assert_eq!(got[p as usize].euler, components_minus_holes(&sub, false));
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn random_8x8_matches_complex(bits in any::<u64>()) {
            let m = Mask::from_fn(8, 8, |y, x| bits >> (y * 8 + x) & 1 == 1);
            prop_assert_eq!(raw(&m), complex_counts(&m));
        }

        #[test]
        fn invariants_hold(bits in any::<u64>(), w in 1usize..9, h in 1usize..9) {
            let m = Mask::from_fn(w, h, |y, x| bits >> ((y * 8 + x) % 64) & 1 == 1);
            let (a, b, _) = raw(&m);
            prop_assert!(a >= 0 && b >= 0);
            if a == 0 {
                prop_assert_eq!(raw(&m), (0, 0, 0));
            }
        }
    }
}
