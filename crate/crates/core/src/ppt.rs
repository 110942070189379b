//! Pulse phase thermography: per-pixel DFT along the time axis.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{AxisKind, Frame, Sequence};

/// Relative tolerance on the spacing of time samples.
pub const UNIFORM_TOL: f64 = 1e-6;

/// Amplitude and phase stacks on the one-sided frequency axis.
///
/// The first frame is the DC term; its phase carries no information.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub amplitude: Sequence,
    pub phase: Sequence,
    pub frequencies: Vec<f64>,
}

/// `(1/N) sum_n x[n] exp(-2 pi i u n / N)` by direct summation.
pub fn dft_direct(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let twiddle: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64))
        .collect();
    (0..n)
        .map(|u| {
            let s: Complex64 = x.iter().enumerate().map(|(k, &v)| twiddle[(u * k) % n] * v).sum();
            s / n as f64
        })
        .collect()
}

/// Same transform through an FFT plan.
pub fn dft_fft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf.iter_mut().for_each(|c| *c /= n as f64);
    buf
}

/// Four-quadrant phase in `(-pi, pi]`, zero for a vanishing coefficient.
pub fn phase_of(c: Complex64) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        return 0.0;
    }
    let p = c.im.atan2(c.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Sampling rate of a uniformly sampled time axis.
pub fn frame_rate(axis: &[f64]) -> Result<f64> {
    let n = axis.len();
    if n < 2 {
        return Err(Error::InvalidArgument("at least 2 frames are needed".into()));
    }
    let dt = (axis[n - 1] - axis[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("time axis does not increase".into()));
    }
    for (i, w) in axis.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > UNIFORM_TOL * dt {
            return Err(Error::InvalidArgument(format!(
                "time axis is not uniform at frame {i}: step {} vs {dt}",
                w[1] - w[0]
            )));
        }
    }
    Ok(1.0 / dt)
}

/// One-sided complex spectra of every pixel, `(N/2 + 1) x pixels`, frequency-major.
pub fn pixel_spectra(seq: &Sequence) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    if seq.axis_kind() != AxisKind::Time {
        return Err(Error::InvalidArgument(format!(
            "PPT needs a time sequence, got {}",
            seq.axis_kind().as_str()
        )));
    }
    let n = seq.len();
    let fs = frame_rate(seq.axis_values())?;
    let half = n / 2 + 1;
    let pixels = seq.width() * seq.height();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);

    const CHUNK: usize = 256;
    let chunks: Vec<Vec<Vec<Complex64>>> = (0..pixels.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let (p0, p1) = (c * CHUNK, ((c + 1) * CHUNK).min(pixels));
            let mut buf = vec![Complex64::default(); n];
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            (p0..p1)
                .map(|p| {
                    for (t, b) in buf.iter_mut().enumerate() {
                        *b = Complex64::new(seq.frame(t).values()[p], 0.0);
                    }
                    fft.process_with_scratch(&mut buf, &mut scratch);
                    buf[..half].iter().map(|c| c / n as f64).collect()
                })
                .collect()
        })
        .collect();
    let mut spectra = vec![vec![Complex64::default(); pixels]; half];
    for (p, s) in chunks.into_iter().flatten().enumerate() {
        for (u, c) in s.into_iter().enumerate() {
            spectra[u][p] = c;
        }
    }
    let freqs = (0..half).map(|u| u as f64 * fs / n as f64).collect();
    Ok((freqs, spectra))
}

pub fn ppt_transform(seq: &Sequence) -> Result<SpectralPair> {
    let (freqs, spectra) = pixel_spectra(seq)?;
    let (w, h) = (seq.width(), seq.height());
    let mut amp = Vec::with_capacity(spectra.len());
    let mut ph = Vec::with_capacity(spectra.len());
    for s in &spectra {
        amp.push(Frame::new(w, h, s.iter().map(|c| c.norm()).collect())?);
        ph.push(Frame::new(w, h, s.iter().map(|&c| phase_of(c)).collect())?);
    }
    Ok(SpectralPair {
        amplitude: Sequence::new(amp, AxisKind::Frequency, freqs.clone())?,
        phase: Sequence::new(ph, AxisKind::Frequency, freqs.clone())?,
        frequencies: freqs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn time_seq(signals: &[Vec<f64>], dt: f64) -> Sequence {
        let n = signals[0].len();
        let frames = (0..n)
            .map(|t| Frame::new(signals.len(), 1, signals.iter().map(|s| s[t]).collect()).unwrap())
            .collect();
        Sequence::new(frames, AxisKind::Time, (0..n).map(|i| i as f64 * dt).collect()).unwrap()
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
        num / den.max(f64::MIN_POSITIVE)
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let seq = time_seq(&[vec![3.5; 16]], 0.1);
        let p = ppt_transform(&seq).unwrap();
        assert_eq!(p.frequencies.len(), 9);
        assert!((p.amplitude.frame(0).get(0, 0) - 3.5).abs() < 1e-12);
        for u in 1..9 {
            assert!(p.amplitude.frame(u).get(0, 0) < 1e-12);
        }
        assert!((p.frequencies[1] - 10.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn single_cosine_line() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * k as f64 * 5.0 / n as f64).cos()).collect();
        let direct = dft_direct(&x);
        assert!((direct[5].norm() - 0.5).abs() < 1e-12);
        let p = ppt_transform(&time_seq(&[x], 1.0)).unwrap();
        for u in 0..=n / 2 {
            let a = p.amplitude.frame(u).get(0, 0);
            if u == 5 {
                assert!((a - 0.5).abs() < 1e-9);
                assert!(p.phase.frame(u).get(0, 0).abs() < 1e-9);
            } else {
                assert!(a < 1e-9, "u {u}: {a}");
            }
        }
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [2, 3, 7, 16, 60, 97, 128, 250] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(rel_err(&dft_fft(&x), &dft_direct(&x)) < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [16, 33, 100] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lhs: f64 = dft_fft(&x).iter().map(|c| c.norm_sqr()).sum();
            let rhs = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
            assert!((lhs - rhs).abs() < 1e-9 * rhs);
        }
    }

    #[test]
    fn even_signal_phase_is_zero_or_pi() {
        let n = 32;
        let x: Vec<f64> = (0..n).map(|k| 1.0 + ((k.min(n - k)) as f64).powi(2)).collect();
        let p = ppt_transform(&time_seq(&[x], 0.5)).unwrap();
        for u in 0..=n / 2 {
            let ph = p.phase.frame(u).get(0, 0);
            assert!(ph.abs() < 1e-9 || (ph.abs() - PI).abs() < 1e-9, "u {u}: {ph}");
            assert!(ph > -PI && ph <= PI);
        }
    }

    #[test]
    fn phase_convention() {
        assert_eq!(phase_of(Complex64::new(0.0, 0.0)), 0.0);
        assert_eq!(phase_of(Complex64::new(-1.0, -0.0)), PI);
        assert_eq!(phase_of(Complex64::new(-1.0, 0.0)), PI);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = Frame::constant(1, 1, 0.0).unwrap();
        let irregular = Sequence::new(vec![f.clone(), f.clone(), f.clone()], AxisKind::Time, vec![0.0, 1.0, 3.0]).unwrap();
        assert!(ppt_transform(&irregular).is_err());
        let freq = Sequence::new(vec![f.clone(), f.clone()], AxisKind::Frequency, vec![0.0, 1.0]).unwrap();
        assert!(ppt_transform(&freq).is_err());
        let single = Sequence::new(vec![f], AxisKind::Time, vec![0.0]).unwrap();
        assert!(ppt_transform(&single).is_err());
    }

    proptest! {
        #[test]
        fn linear(a in prop::collection::vec(-1.0f64..1.0, 24), b in prop::collection::vec(-1.0f64..1.0, 24),
                  alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let (fa, fb, fm) = (dft_fft(&a), dft_fft(&b), dft_fft(&mix));
            for u in 0..24 {
                let want = fa[u] * alpha + fb[u] * beta;
                prop_assert!((fm[u] - want).norm() < 1e-12);
            }
        }

        #[test]
        fn shift_rotates_phase(x in prop::collection::vec(-1.0f64..1.0, 40), m in 0usize..40) {
            let n = x.len();
            let shifted: Vec<f64> = (0..n).map(|k| x[(k + n - m) % n]).collect();
            let seq = time_seq(&[x, shifted], 0.25);
            let p = ppt_transform(&seq).unwrap();
            for u in 1..=n / 2 {
                let (a0, a1) = (p.amplitude.frame(u).get(0, 0), p.amplitude.frame(u).get(0, 1));
                prop_assert!((a0 - a1).abs() < 1e-9);
                if a0 > 1e-6 {
                    let d = p.phase.frame(u).get(0, 1) - p.phase.frame(u).get(0, 0);
                    let want = -2.0 * PI * (u * m) as f64 / n as f64;
                    let r = (d - want).rem_euclid(2.0 * PI);
                    prop_assert!(r.min(2.0 * PI - r) < 1e-9, "u {} diff {}", u, r);
                }
            }
        }
    }
}
