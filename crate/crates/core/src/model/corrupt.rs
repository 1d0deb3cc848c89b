use rand::Rng;

use super::vocab::{sentinel, N_SENTINELS};

/// Span-corrupted input and its denoising target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corruption {
    pub input: Vec<String>,
    /// `<extra_id_0> span0 <extra_id_1> span1 ...`
    pub target: Vec<String>,
}

fn random_partition<R: Rng + ?Sized>(rng: &mut R, total: usize, parts: usize) -> Vec<usize> {
    // `parts` positive integers summing to `total`, uniform over compositions
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, total - 1, parts - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Replace contiguous spans covering `round(density · n)` tokens with
/// indexed sentinels. The number of spans is `round(noise / mean_span_len)`,
/// at least one when any token is corrupted; spans never touch.
pub fn corrupt_for_lm<S: AsRef<str>, R: Rng + ?Sized>(
    tokens: &[S],
    density: f64,
    mean_span_len: f64,
    rng: &mut R,
) -> Corruption {
    let n = tokens.len();
    let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let noise = ((n as f64 * density).round() as usize).min(n.saturating_sub(1));
    if noise == 0 {
        return Corruption {
            input: tokens,
            target: Vec::new(),
        };
    }
    let keep = n - noise;
    let spans = ((noise as f64 / mean_span_len).round() as usize)
        .max(1)
        .min(noise)
        .min(keep + 1)
        .min(N_SENTINELS);
    let span_lens = random_partition(rng, noise, spans);
    // gaps: before the first span, between spans (each >= 1), after the last
    let interior = spans - 1;
    let free = keep - interior;
    let mut gaps = random_partition(rng, free + spans + 1, spans + 1);
    gaps.iter_mut().for_each(|g| *g -= 1);
    for g in gaps.iter_mut().take(spans).skip(1) {
        *g += 1;
    }
    let mut input = Vec::with_capacity(keep + spans);
    let mut target = Vec::with_capacity(noise + spans);
    let mut pos = 0;
    for s in 0..spans {
        input.extend_from_slice(&tokens[pos..pos + gaps[s]]);
        pos += gaps[s];
        input.push(sentinel(s));
        target.push(sentinel(s));
        target.extend_from_slice(&tokens[pos..pos + span_lens[s]]);
        pos += span_lens[s];
    }
    input.extend_from_slice(&tokens[pos..]);
    Corruption { input, target }
}

/// Put the target spans back into the corrupted input.
pub fn splice(c: &Corruption) -> Vec<String> {
    let mut spans: Vec<Vec<String>> = Vec::new();
    for t in &c.target {
        if t.starts_with("<extra_id_") {
            spans.push(Vec::new());
        } else if let Some(s) = spans.last_mut() {
            s.push(t.clone());
        }
    }
    let mut out = Vec::new();
    for t in &c.input {
        match t
            .strip_prefix("<extra_id_")
            .and_then(|r| r.strip_suffix('>'))
            .and_then(|k| k.parse::<usize>().ok())
        {
            Some(k) if k < spans.len() => out.extend(spans[k].iter().cloned()),
            _ => out.push(t.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let c = corrupt_for_lm(&toks(10), 0.0, 3.0, &mut r);
        assert_eq!(c.input, toks(10));
        assert!(c.target.is_empty());
    }

    #[test]
    fn ten_tokens_get_one_or_two_spans() {
        for seed in 0..200 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let c = corrupt_for_lm(&toks(10), 0.15, 3.0, &mut r);
            let spans = c.input.iter().filter(|t| t.starts_with("<extra_id_")).count();
            assert!((1..=2).contains(&spans));
            assert_eq!(c.target.len() - spans, 2);
        }
    }

    #[test]
    fn splice_restores_original() {
        for seed in 0..300 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (seed as usize % 60);
            let c = corrupt_for_lm(&toks(n), 0.15 + (seed % 5) as f64 * 0.1, 2.0, &mut r);
            assert_eq!(splice(&c), toks(n));
            let sentinels = c.input.iter().filter(|t| t.starts_with("<extra_id_")).count();
            let adjacent = c
                .input
                .windows(2)
                .any(|w| w[0].starts_with("<extra_id_") && w[1].starts_with("<extra_id_"));
            assert!(!adjacent);
            assert_eq!(sentinels, c.target.iter().filter(|t| t.starts_with("<extra_id_")).count());
        }
    }
}
