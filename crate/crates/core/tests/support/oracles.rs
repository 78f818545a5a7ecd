//! Naive metric reimplementations written straight from the formulas, with
//! no shared code with the library. Quadratic or exponential on purpose.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Seq = Vec<u32>;

fn grams(s: &[u32], n: usize) -> Vec<Vec<u32>> {
    if s.len() < n {
        return vec![];
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

fn count(list: &[Vec<u32>], g: &[u32]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

fn distinct(list: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![];
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

pub fn bleu(cands: &[Seq], refs: &[Vec<Seq>]) -> [f64; 4] {
    let mut clip = [0.0f64; 4];
    let mut tot = [0.0f64; 4];
    let mut c = 0.0;
    let mut r = 0.0;
    for (cand, rs) in cands.iter().zip(refs) {
        c += cand.len() as f64;
        let mut best = rs[0].len();
        for x in rs {
            let d = (x.len() as i64 - cand.len() as i64).abs();
            let bd = (best as i64 - cand.len() as i64).abs();
            if d < bd || (d == bd && x.len() < best) {
                best = x.len();
            }
        }
        r += best as f64;
        for n in 1..=4 {
            let cg = grams(cand, n);
            tot[n - 1] += cg.len() as f64;
            for g in distinct(&cg) {
                let mx = rs.iter().map(|x| count(&grams(x, n), &g)).max().unwrap();
                clip[n - 1] += count(&cg, &g).min(mx) as f64;
            }
        }
    }
    let bp = if c == 0.0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r / c).exp()
    };
    let mut out = [0.0; 4];
    for k in 1..=4 {
        let ps: Vec<f64> = (0..k).map(|i| if tot[i] == 0.0 { 0.0 } else { clip[i] / tot[i] }).collect();
        if ps.iter().any(|p| *p == 0.0) {
            out[k - 1] = 0.0;
        } else {
            out[k - 1] = bp * ps.iter().product::<f64>().powf(1.0 / k as f64);
        }
    }
    out
}

pub fn sentence_bleu2(cand: &[u32], refs: &[Seq]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut prod = 1.0;
    for n in 1..=2 {
        let cg = grams(cand, n);
        let mut clipped = 0.0;
        for g in distinct(&cg) {
            let mx = refs.iter().map(|x| count(&grams(x, n), &g)).max().unwrap();
            clipped += count(&cg, &g).min(mx) as f64;
        }
        let num = if clipped == 0.0 { 0.1 } else { clipped };
        prod *= num / (cg.len().max(1) as f64);
    }
    let c = cand.len() as f64;
    let mut r = refs[0].len();
    for x in refs {
        let d = (x.len() as f64 - c).abs();
        let bd = (r as f64 - c).abs();
        if d < bd || (d == bd && x.len() < r) {
            r = x.len();
        }
    }
    let bp = if c > r as f64 { 1.0 } else { (1.0 - r as f64 / c).exp() };
    bp * prod.sqrt()
}

/// LCS by subsequence enumeration of the shorter side.
fn lcs(a: &[u32], b: &[u32]) -> usize {
    let (a, b) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1u32 << a.len()) {
        let sub: Vec<u32> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
        let mut pos = 0;
        let mut ok = true;
        for x in &sub {
            match b[pos..].iter().position(|y| y == x) {
                Some(p) => pos += p + 1,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && sub.len() > best {
            best = sub.len();
        }
    }
    best
}

pub fn rouge(cands: &[Seq], refs: &[Vec<Seq>]) -> f64 {
    let b2 = 1.2f64 * 1.2;
    let mut sum = 0.0;
    for (cand, rs) in cands.iter().zip(refs) {
        let mut best = 0.0f64;
        for x in rs {
            let l = lcs(cand, x) as f64;
            if l == 0.0 {
                continue;
            }
            let p = l / cand.len() as f64;
            let r = l / x.len() as f64;
            best = best.max((1.0 + b2) * p * r / (r + b2 * p));
        }
        sum += best;
    }
    sum / cands.len() as f64
}

pub fn cider(cands: &[Seq], refs: &[Vec<Seq>]) -> f64 {
    let docs = refs.len() as f64;
    let df = |g: &[u32]| -> f64 {
        refs.iter()
            .filter(|set| set.iter().any(|x| count(&grams(x, g.len()), g) > 0))
            .count() as f64
    };
    let vecs = |s: &[u32], n: usize| -> Vec<(Vec<u32>, f64)> {
        let gs = grams(s, n);
        distinct(&gs)
            .into_iter()
            .map(|g| {
                let w = count(&gs, &g) as f64 * (docs.ln() - df(&g).max(1.0).ln());
                (g, w)
            })
            .collect()
    };
    let mut total = 0.0;
    for (cand, rs) in cands.iter().zip(refs) {
        let mut img = 0.0;
        for x in rs {
            let delta = cand.len() as f64 - x.len() as f64;
            let pen = (-delta * delta / 72.0).exp();
            let mut acc = 0.0;
            for n in 1..=4 {
                let cv = vecs(cand, n);
                let rv = vecs(x, n);
                let cn = cv.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
                let rn = rv.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
                let mut dot = 0.0;
                for (g, cw) in &cv {
                    if let Some((_, rw)) = rv.iter().find(|(h, _)| h == g) {
                        dot += cw.min(*rw) * rw;
                    }
                }
                let cos = if cn == 0.0 || rn == 0.0 { 0.0 } else { dot / (cn * rn) };
                acc += cos * pen;
            }
            img += acc / 4.0;
        }
        total += 10.0 * img / rs.len() as f64;
    }
    total / cands.len() as f64
}

pub fn meteor(cands: &[Seq], refs: &[Vec<Seq>]) -> f64 {
    let mut sum = 0.0;
    for (cand, rs) in cands.iter().zip(refs) {
        let mut best = 0.0f64;
        for x in rs {
            let mut taken = vec![false; x.len()];
            let mut pairs = vec![];
            for (i, t) in cand.iter().enumerate() {
                for j in 0..x.len() {
                    if !taken[j] && x[j] == *t {
                        taken[j] = true;
                        pairs.push((i, j));
                        break;
                    }
                }
            }
            let m = pairs.len();
            if m == 0 {
                continue;
            }
            let mut chunks = 1;
            for w in pairs.windows(2) {
                if !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1) {
                    chunks += 1;
                }
            }
            let p = m as f64 / cand.len() as f64;
            let r = m as f64 / x.len() as f64;
            let f = p * r / (0.9 * p + 0.1 * r);
            let s = f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3));
            best = best.max(s);
        }
        sum += best;
    }
    sum / cands.len() as f64
}

/// Small random corpus over a tiny vocabulary so n-grams collide often.
pub fn random_corpus(seed: u64) -> (Vec<Seq>, Vec<Vec<Seq>>) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let items = rng.random_range(2..6);
    let vocab = rng.random_range(3..7);
    let seq = |rng: &mut Xoshiro256PlusPlus, lo: usize| -> Seq {
        let len = rng.random_range(lo..9);
        (0..len).map(|_| rng.random_range(0..vocab)).collect()
    };
    let mut cands = vec![];
    let mut refs = vec![];
    for _ in 0..items {
        cands.push(seq(&mut rng, 1));
        let nrefs = rng.random_range(1..4);
        let mut set: Vec<Seq> = (0..nrefs).map(|_| seq(&mut rng, 1)).collect();
        if rng.random_bool(0.3) {
            set.push(cands.last().unwrap().clone());
        }
        refs.push(set);
    }
    (cands, refs)
}
