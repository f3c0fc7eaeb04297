use super::gmm::{check_mixture, interval_mass};
use crate::error::CoderError;

/// Precision of the frequency tables.
pub const TOTAL_BITS: u32 = 16;
/// Sum of every table's frequencies.
pub const TOTAL: u32 = 1 << TOTAL_BITS;
/// Largest alphabet a table can hold while giving each symbol frequency ≥ 1.
pub const MAX_ALPHABET: usize = 1 << 15;

/// Quantized CDF over the integer alphabet `[min, max]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolDistribution {
    min: i32,
    /// `cum[0] = 0`, `cum[M] = TOTAL`, strictly increasing.
    cum: Vec<u32>,
}

impl SymbolDistribution {
    /// Quantizes the discretized mixture on `[lo, hi]`. Mass beyond the bounds
    /// is folded into the edge symbols; every symbol gets frequency ≥ 1 and the
    /// rounding remainder goes to the most probable symbol.
    pub fn from_mixture(w: &[f64], mu: &[f64], sigma: &[f64], (lo, hi): (i32, i32)) -> Result<Self, CoderError> {
        check_mixture(w, mu, sigma)?;
        let m = alphabet_size(lo, hi)?;
        let mut probs = Vec::with_capacity(m);
        for j in 0..m {
            let s = lo as f64 + j as f64;
            let a = if j == 0 { f64::NEG_INFINITY } else { s - 0.5 };
            let b = if j + 1 == m { f64::INFINITY } else { s + 0.5 };
            probs.push(interval_mass(a, b, w, mu, sigma).max(0.0));
        }
        Self::from_probabilities(lo, &probs)
    }

    /// Quantizes arbitrary non-negative weights over `[min, min + len)`.
    pub fn from_probabilities(min: i32, probs: &[f64]) -> Result<Self, CoderError> {
        let m = probs.len();
        if m == 0 || m > MAX_ALPHABET {
            return Err(CoderError::AlphabetTooLarge(m));
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) || !total.is_finite() || probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(CoderError::Domain(format!("probabilities sum to {total}")));
        }
        let spare = (TOTAL as usize - m) as f64;
        let mut freqs: Vec<i64> = probs
            .iter()
            .map(|&p| 1 + ((p / total) * spare).floor() as i64)
            .collect();
        let sum: i64 = freqs.iter().sum();
        let argmax = probs
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
        freqs[argmax] += TOTAL as i64 - sum;
        if freqs[argmax] < 1 {
            return Err(CoderError::Domain("frequency table cannot be normalized".into()));
        }
        let mut cum = Vec::with_capacity(m + 1);
        cum.push(0u32);
        let mut acc = 0u32;
        for f in freqs {
            acc += f as u32;
            cum.push(acc);
        }
        debug_assert_eq!(acc, TOTAL);
        Ok(SymbolDistribution { min, cum })
    }

    /// Builds from explicit frequencies, which must be ≥ 1 and sum to [`TOTAL`].
    pub fn from_frequencies(min: i32, freqs: &[u32]) -> Result<Self, CoderError> {
        if freqs.is_empty() || freqs.len() > MAX_ALPHABET {
            return Err(CoderError::AlphabetTooLarge(freqs.len()));
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        cum.push(0u32);
        let mut acc = 0u64;
        for &f in freqs {
            if f == 0 {
                return Err(CoderError::Domain("zero frequency".into()));
            }
            acc += f as u64;
            if acc > TOTAL as u64 {
                return Err(CoderError::Domain("frequencies exceed the table total".into()));
            }
            cum.push(acc as u32);
        }
        if acc != TOTAL as u64 {
            return Err(CoderError::Domain(format!("frequencies sum to {acc}, expected {TOTAL}")));
        }
        Ok(SymbolDistribution { min, cum })
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.min + self.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    fn index(&self, symbol: i32) -> Result<usize, CoderError> {
        if symbol < self.min || symbol > self.max() {
            return Err(CoderError::SymbolOutOfRange {
                symbol,
                min: self.min,
                max: self.max(),
            });
        }
        Ok((symbol - self.min) as usize)
    }

    /// `(cumulative start, frequency)` of `symbol`.
    pub fn interval(&self, symbol: i32) -> Result<(u32, u32), CoderError> {
        let i = self.index(symbol)?;
        Ok((self.cum[i], self.cum[i + 1] - self.cum[i]))
    }

    pub fn frequency(&self, symbol: i32) -> Result<u32, CoderError> {
        Ok(self.interval(symbol)?.1)
    }

    pub fn probability(&self, symbol: i32) -> Result<f64, CoderError> {
        Ok(self.frequency(symbol)? as f64 / TOTAL as f64)
    }

    /// Ideal code length of `symbol` under this table, in bits.
    pub fn cost_bits(&self, symbol: i32) -> Result<f64, CoderError> {
        Ok(TOTAL_BITS as f64 - (self.frequency(symbol)? as f64).log2())
    }

    /// Symbol whose interval contains `target < TOTAL`.
    pub fn lookup(&self, target: u32) -> (i32, u32, u32) {
        let i = self.cum.partition_point(|&c| c <= target) - 1;
        (self.min + i as i32, self.cum[i], self.cum[i + 1] - self.cum[i])
    }
}

pub(crate) fn alphabet_size(lo: i32, hi: i32) -> Result<usize, CoderError> {
    if hi < lo {
        return Err(CoderError::Domain(format!("empty alphabet [{lo}, {hi}]")));
    }
    let m = (hi as i64 - lo as i64 + 1) as usize;
    if m > MAX_ALPHABET {
        return Err(CoderError::AlphabetTooLarge(m));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_and_floor() {
        let d = SymbolDistribution::from_mixture(&[1.0], &[0.0], &[0.3], (-20, 20)).unwrap();
        assert_eq!(*d.cumulative().last().unwrap(), TOTAL);
        assert!(d.cumulative().windows(2).all(|p| p[1] > p[0]));
        // far tail has true mass far below 2^-16
        assert_eq!(d.frequency(15).unwrap(), 1);
    }

    #[test]
    fn single_symbol_alphabet() {
        let d = SymbolDistribution::from_mixture(&[1.0], &[5.0], &[1.0], (0, 0)).unwrap();
        assert_eq!(d.interval(0).unwrap(), (0, TOTAL));
    }

    #[test]
    fn alphabet_limits() {
        assert!(matches!(
            SymbolDistribution::from_mixture(&[1.0], &[0.0], &[1.0], (0, MAX_ALPHABET as i32)),
            Err(CoderError::AlphabetTooLarge(_))
        ));
        SymbolDistribution::from_mixture(&[1.0], &[0.0], &[1.0], (0, MAX_ALPHABET as i32 - 1)).unwrap();
    }

    #[test]
    fn lookup_inverts_interval() {
        let d = SymbolDistribution::from_mixture(&[0.3, 0.7], &[-2.0, 1.5], &[0.8, 2.0], (-6, 7)).unwrap();
        for s in -6..=7 {
            let (start, f) = d.interval(s).unwrap();
            for t in [start, start + f / 2, start + f - 1] {
                assert_eq!(d.lookup(t), (s, start, f));
            }
        }
        assert!(d.interval(8).is_err());
    }

    #[test]
    fn explicit_frequencies_validated() {
        assert!(SymbolDistribution::from_frequencies(0, &[TOTAL / 2, TOTAL / 2]).is_ok());
        assert!(SymbolDistribution::from_frequencies(0, &[TOTAL / 2, TOTAL / 2 - 1]).is_err());
        assert!(SymbolDistribution::from_frequencies(0, &[0, TOTAL]).is_err());
    }
}
