use rand::Rng;
use rand_distr::Exp1;

/// Multinomial resampling: `n` ancestor indices drawn iid from normalized
/// `weights`. Uses sorted uniforms generated from exponential spacings so the
/// walk over the cumulative weights is linear.
pub fn multinomial_ancestors<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R, out: &mut Vec<usize>) {
    out.clear();
    if n == 0 || weights.is_empty() {
        return;
    }
    let mut spacings: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = spacings.iter().sum();
    let mut acc = 0.0;
    for s in spacings.iter_mut() {
        acc += *s;
        *s = acc / total;
    }
    let last = weights.len() - 1;
    let mut j = 0;
    let mut cum = weights[0];
    for &u in &spacings[..n] {
        while u > cum && j < last {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
}
