//! Latent-space arithmetic: linear interpolation between codes, constant
//! offset transfer across a sequence, and causal exponential smoothing.
//! Pure vector math; decoding stays in the caller's hands.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("latent dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("io error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

/// Ordered list of latent codes with a uniform dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    codes: Vec<Vec<f64>>,
}

impl LatentSequence {
    pub fn new(codes: Vec<Vec<f64>>) -> Result<Self, LatentError> {
        if let Some(first) = codes.first() {
            let dim = first.len();
            for c in &codes {
                if c.len() != dim {
                    return Err(LatentError::DimensionMismatch {
                        expected: dim,
                        got: c.len(),
                    });
                }
            }
        }
        Ok(LatentSequence { codes })
    }

    pub fn codes(&self) -> &[Vec<f64>] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.codes.first().map(|c| c.len())
    }

    /// Reads one code per row from CSV. Blank lines are skipped.
    pub fn from_csv_file<P: AsRef<Path>>(path: P) -> Result<Self, LatentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LatentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut codes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| LatentError::Format {
                    path: path.to_path_buf(),
                    msg: format!("line {}: bad number {:?}", lineno + 1, field.trim()),
                })?;
                row.push(v);
            }
            codes.push(row);
        }
        LatentSequence::new(codes).map_err(|e| LatentError::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn to_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<(), LatentError> {
        let path = path.as_ref();
        let mut text = String::new();
        for code in &self.codes {
            let row: Vec<String> = code.iter().map(|v| format!("{v:.17e}")).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|source| LatentError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn check_alpha(alpha: f64) -> Result<(), LatentError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LatentError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// I(α) = (1−α)·S + α·T, elementwise. Endpoints are exact.
pub fn interpolate(source: &[f64], target: &[f64], alpha: f64) -> Result<Vec<f64>, LatentError> {
    if source.len() != target.len() {
        return Err(LatentError::DimensionMismatch {
            expected: source.len(),
            got: target.len(),
        });
    }
    check_alpha(alpha)?;
    Ok(source
        .iter()
        .zip(target)
        .map(|(&s, &t)| (1.0 - alpha) * s + alpha * t)
        .collect())
}

/// Applies the constant identity offset d = M′₀ − M₀ to the whole sequence.
/// The caller guarantees M₀ and M′₀ describe the same pose; the first output
/// equals M′₀ exactly.
pub fn transfer(
    sequence: &LatentSequence,
    target_first: &[f64],
) -> Result<LatentSequence, LatentError> {
    let first = sequence.codes.first().ok_or(LatentError::EmptySequence)?;
    if first.len() != target_first.len() {
        return Err(LatentError::DimensionMismatch {
            expected: first.len(),
            got: target_first.len(),
        });
    }
    let d: Vec<f64> = target_first
        .iter()
        .zip(first)
        .map(|(&tp, &m0)| tp - m0)
        .collect();
    let mut out = Vec::with_capacity(sequence.len());
    out.push(target_first.to_vec());
    for code in &sequence.codes[1..] {
        out.push(code.iter().zip(&d).map(|(&m, &dd)| m + dd).collect());
    }
    LatentSequence::new(out)
}

/// Causal exponential average D′₀ = D₀, D′_i = α·D_i + (1−α)·D′_{i−1}.
pub fn smooth(sequence: &LatentSequence, alpha: f64) -> Result<LatentSequence, LatentError> {
    if sequence.is_empty() {
        return Err(LatentError::EmptySequence);
    }
    check_alpha(alpha)?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(sequence.len());
    out.push(sequence.codes[0].clone());
    for code in &sequence.codes[1..] {
        let prev = out.last().expect("nonempty");
        out.push(
            code.iter()
                .zip(prev)
                .map(|(&d, &p)| alpha * d + (1.0 - alpha) * p)
                .collect(),
        );
    }
    LatentSequence::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_codes(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn interpolation_endpoints_are_exact() {
        let codes = random_codes(2, 8, 1);
        let (s, t) = (&codes[0], &codes[1]);
        assert_eq!(&interpolate(s, t, 0.0).unwrap(), s);
        assert_eq!(&interpolate(s, t, 1.0).unwrap(), t);
    }

    #[test]
    fn midpoint_matches_scalar_loop() {
        let codes = random_codes(2, 8, 2);
        let (s, t) = (&codes[0], &codes[1]);
        let mid = interpolate(s, t, 0.5).unwrap();
        for i in 0..s.len() {
            let expect = 0.5 * s[i] + 0.5 * t[i];
            assert!((mid[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn complementary_weights_sum_to_the_endpoints() {
        let codes = random_codes(2, 16, 3);
        let (s, t) = (&codes[0], &codes[1]);
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            // I(α) + I(1−α) = S + T, equivalently swapping the endpoints at
            // the same α.
            let a = interpolate(s, t, alpha).unwrap();
            let b = interpolate(s, t, 1.0 - alpha).unwrap();
            let swapped = interpolate(t, s, alpha).unwrap();
            for i in 0..s.len() {
                assert!((a[i] + b[i] - (s[i] + t[i])).abs() < 1e-12);
                assert!((a[i] + swapped[i] - (s[i] + t[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_checks_dimensions_and_alpha() {
        assert!(matches!(
            interpolate(&[0.0; 4], &[0.0; 5], 0.5),
            Err(LatentError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            interpolate(&[0.0; 4], &[0.0; 4], 1.5),
            Err(LatentError::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn transfer_applies_a_constant_offset() {
        let seq = LatentSequence::new(random_codes(6, 8, 4)).unwrap();
        let target_first: Vec<f64> = random_codes(1, 8, 5).remove(0);
        let out = transfer(&seq, &target_first).unwrap();
        assert_eq!(out.len(), seq.len());
        assert_eq!(out.codes()[0], target_first, "first frame must be exact");
        let d0: Vec<f64> = out.codes()[0]
            .iter()
            .zip(&seq.codes()[0])
            .map(|(a, b)| a - b)
            .collect();
        for i in 1..seq.len() {
            for j in 0..8 {
                let di = out.codes()[i][j] - seq.codes()[i][j];
                assert!((di - d0[j]).abs() < 1e-12, "offset drifts at frame {i}");
            }
        }
    }

    #[test]
    fn transfer_with_identical_first_frame_is_identity() {
        let seq = LatentSequence::new(random_codes(5, 6, 6)).unwrap();
        let out = transfer(&seq, &seq.codes()[0].clone()).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn transfer_of_single_element_sequence() {
        let seq = LatentSequence::new(random_codes(1, 6, 7)).unwrap();
        let target: Vec<f64> = random_codes(1, 6, 8).remove(0);
        let out = transfer(&seq, &target).unwrap();
        assert_eq!(out.codes(), &[target]);
    }

    #[test]
    fn transfer_rejects_empty_and_mismatched() {
        let empty = LatentSequence::new(vec![]).unwrap();
        assert!(matches!(
            transfer(&empty, &[0.0; 4]),
            Err(LatentError::EmptySequence)
        ));
        let seq = LatentSequence::new(random_codes(3, 4, 9)).unwrap();
        assert!(matches!(
            transfer(&seq, &[0.0; 5]),
            Err(LatentError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn smoothing_with_alpha_one_is_identity() {
        let seq = LatentSequence::new(random_codes(7, 5, 10)).unwrap();
        assert_eq!(smooth(&seq, 1.0).unwrap(), seq);
    }

    #[test]
    fn smoothing_with_alpha_zero_repeats_the_first_frame() {
        let seq = LatentSequence::new(random_codes(7, 5, 11)).unwrap();
        let out = smooth(&seq, 0.0).unwrap();
        for code in out.codes() {
            assert_eq!(code, &seq.codes()[0]);
        }
    }

    #[test]
    fn smoothing_fixes_constant_sequences() {
        let code: Vec<f64> = random_codes(1, 6, 12).remove(0);
        let seq = LatentSequence::new(vec![code.clone(); 5]).unwrap();
        for alpha in [0.0, 0.3, 0.7, 1.0] {
            let out = smooth(&seq, alpha).unwrap();
            for c in out.codes() {
                for (a, b) in c.iter().zip(&code) {
                    assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn smoothing_stays_in_the_running_envelope() {
        let seq = LatentSequence::new(random_codes(10, 4, 13)).unwrap();
        let out = smooth(&seq, 0.37).unwrap();
        for j in 0..4 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..seq.len() {
                lo = lo.min(seq.codes()[i][j]);
                hi = hi.max(seq.codes()[i][j]);
                let v = out.codes()[i][j];
                assert!(
                    v >= lo - 1e-12 && v <= hi + 1e-12,
                    "frame {i} coord {j} escapes [{lo}, {hi}]"
                );
            }
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.csv");
        let seq = LatentSequence::new(random_codes(4, 8, 14)).unwrap();
        seq.to_csv_file(&path).unwrap();
        let back = LatentSequence::from_csv_file(&path).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn csv_rejects_ragged_and_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "1.0,2.0\n3.0\n").unwrap();
        assert!(matches!(
            LatentSequence::from_csv_file(&ragged),
            Err(LatentError::Format { .. })
        ));
        let garbage = dir.path().join("garbage.csv");
        std::fs::write(&garbage, "1.0,zap\n").unwrap();
        assert!(matches!(
            LatentSequence::from_csv_file(&garbage),
            Err(LatentError::Format { .. })
        ));
    }

    #[test]
    fn sequence_enforces_uniform_dimension() {
        assert!(matches!(
            LatentSequence::new(vec![vec![1.0, 2.0], vec![3.0]]),
            Err(LatentError::DimensionMismatch { .. })
        ));
    }
}
