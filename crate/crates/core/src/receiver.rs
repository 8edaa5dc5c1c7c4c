//! MMSE filtering with max-SINR successive interference cancellation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::GroupChannel;
use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
    }
    Ok(())
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `Hᴴ(HHᴴ + σ²I)⁻¹`, evaluated as `R⁻¹Q₁ᴴ` from the QR factorization of the
/// stacked matrix `[H; σI] = [Q₁; Q₂]R`. This avoids forming `HᴴH`, whose
/// condition number is the square of the stacked one.
pub fn mmse_filter(h: &CMat, sigma2: f64) -> Result<CMat> {
    check_sigma2(sigma2)?;
    let (s, l) = h.shape();
    let mut stacked = CMat::zeros(s + l, l);
    stacked.rows_mut(0, s).copy_from(h);
    for i in 0..l {
        stacked[(s + i, i)] = c(sigma2.sqrt());
    }
    let qr = stacked.qr();
    let mut f = qr.q().rows(0, s).adjoint();
    if !qr.r().solve_upper_triangular_mut(&mut f) {
        return Err(Error::Domain("singular triangular factor in MMSE filter".into()));
    }
    Ok(f)
}

/// Diagonal of `(I + W)⁻¹` for Hermitian positive semidefinite `W`.
fn inverse_diagonal(w: &CMat) -> Result<Vec<f64>> {
    let n = w.nrows();
    let mut m = w.clone();
    for i in 0..n {
        m[(i, i)] += c(1.0);
    }
    let l = m
        .cholesky()
        .ok_or_else(|| Error::Domain("I + W is not positive definite".into()))?
        .l();
    let mut linv = CMat::identity(n, n);
    if !l.solve_lower_triangular_mut(&mut linv) {
        return Err(Error::Domain("singular Cholesky factor".into()));
    }
    Ok((0..n).map(|j| linv.column(j).iter().map(|z| z.norm_sqr()).sum()).collect())
}

/// Per-stream SINR from the normalized Gram matrix `W = HᴴH/σ²`.
pub fn sinr_from_gram(w: &CMat) -> Result<Vec<f64>> {
    Ok(inverse_diagonal(w)?.into_iter().map(|d| (1.0 / d - 1.0).max(0.0)).collect())
}

/// `1/(σ²[(σ²I + HᴴH)⁻¹]_ℓℓ) − 1` for every column ℓ.
pub fn sinr_per_stream(h: &CMat, sigma2: f64) -> Result<Vec<f64>> {
    check_sigma2(sigma2)?;
    sinr_from_gram(&(h.adjoint() * h / c(sigma2)))
}

/// `log2 det(I + HᴴH/σ²)`, equal to `log2 det(I + HHᴴ/σ²)`.
pub fn log_det_rate(h: &CMat, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    log_det_from_gram(&(h.adjoint() * h / c(sigma2)))
}

pub fn log_det_from_gram(w: &CMat) -> Result<f64> {
    let mut m = w.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += c(1.0);
    }
    let l = m
        .cholesky()
        .ok_or_else(|| Error::Domain("I + W is not positive definite".into()))?
        .l();
    Ok(2.0 * l.diagonal().iter().map(|d| d.re.log2()).sum::<f64>())
}

fn sub_gram(w: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(idx.len(), idx.len(), |a, b| w[(idx[a], idx[b])])
}

/// Decode order and stage SINRs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SicTrace {
    /// Column positions in decode order.
    pub order: Vec<usize>,
    /// SINR of the stream decoded at each stage.
    pub sinrs: Vec<f64>,
    #[serde(skip)]
    pub filters: Option<Vec<CMat>>,
}

/// Genie-aided SIC on the normalized Gram matrix. With `order = None` the
/// strongest remaining stream is taken at each stage, lowest index on ties.
pub fn sic_from_gram(w: &CMat, order: Option<&[usize]>) -> Result<SicTrace> {
    let n = w.nrows();
    if let Some(o) = order {
        let mut seen = vec![false; n];
        if o.len() != n || o.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Shape(format!("decode order {o:?} is not a permutation of 0..{n}")));
        }
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut trace = SicTrace { order: Vec::with_capacity(n), sinrs: Vec::with_capacity(n), filters: None };
    for m in 0..n {
        let sinr = sinr_from_gram(&sub_gram(w, &remaining))?;
        let pos = match order {
            Some(o) => remaining.iter().position(|&r| r == o[m]).expect("validated permutation"),
            None => argmax(&sinr),
        };
        trace.order.push(remaining[pos]);
        trace.sinrs.push(sinr[pos]);
        remaining.remove(pos);
    }
    Ok(trace)
}

// Values within a relative 1e-12 count as tied so that rounding cannot
// reorder symmetric streams.
fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] + 1e-12 * x[best].abs() {
            best = i;
        }
    }
    best
}

fn columns(h: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(h.nrows(), idx.len(), |r, k| h[(r, idx[k])])
}

/// Max-SINR SIC on `H`, optionally keeping each stage's MMSE filter.
pub fn sic_order(h: &CMat, sigma2: f64, keep_filters: bool) -> Result<SicTrace> {
    check_sigma2(sigma2)?;
    let mut trace = sic_from_gram(&(h.adjoint() * h / c(sigma2)), None)?;
    if keep_filters {
        trace.filters = Some(stage_filters(h, sigma2, &trace.order)?);
    }
    Ok(trace)
}

/// Stage SINRs for an arbitrary decode order.
pub fn sic_sinrs_in_order(h: &CMat, sigma2: f64, order: &[usize]) -> Result<Vec<f64>> {
    check_sigma2(sigma2)?;
    Ok(sic_from_gram(&(h.adjoint() * h / c(sigma2)), Some(order))?.sinrs)
}

fn remaining_sets(order: &[usize]) -> Vec<Vec<usize>> {
    let mut rem: Vec<usize> = order.to_vec();
    rem.sort_unstable();
    let mut out = Vec::with_capacity(order.len());
    for &o in order {
        out.push(rem.clone());
        rem.retain(|&r| r != o);
    }
    out
}

fn stage_filters(h: &CMat, sigma2: f64, order: &[usize]) -> Result<Vec<CMat>> {
    remaining_sets(order).iter().map(|rem| mmse_filter(&columns(h, rem), sigma2)).collect()
}

/// Time-invariant stage filters followed by per-interval Doppler compensation.
#[derive(Clone, Debug)]
pub struct DecomposedFilter {
    pub trace: SicTrace,
    /// Columns still present at each stage, ascending.
    pub remaining: Vec<Vec<usize>>,
    /// MMSE filter of the reduced static channel at each stage.
    pub stage_filters: Vec<CMat>,
    nus: Vec<f64>,
    s: usize,
}

impl DecomposedFilter {
    /// Stage-`m` filter at symbol interval `u`: `E^(m)[u]* · F^(m)`.
    pub fn at(&self, m: usize, u: i64) -> CMat {
        let mut f = self.stage_filters[m].clone();
        for (row, &col) in self.remaining[m].iter().enumerate() {
            let e = Complex64::from_polar(1.0, -2.0 * PI * self.s as f64 * self.nus[col] * u as f64);
            for x in f.row_mut(row).iter_mut() {
                *x *= e;
            }
        }
        f
    }
}

pub fn decomposed_filter(gc: &GroupChannel, sigma2: f64) -> Result<DecomposedFilter> {
    let h = gc.h();
    let trace = sic_order(&h, sigma2, false)?;
    let remaining = remaining_sets(&trace.order);
    let stage_filters = stage_filters(&h, sigma2, &trace.order)?;
    Ok(DecomposedFilter { trace, remaining, stage_filters, nus: gc.nus.clone(), s: gc.v.nrows() })
}

/// Stage-`m` MMSE filter built directly from the time-varying channel at `u`.
pub fn direct_filter(gc: &GroupChannel, sigma2: f64, remaining: &[usize], u: i64) -> Result<CMat> {
    mmse_filter(&columns(&gc.h_at(u), remaining), sigma2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alphabet {
    Qpsk,
    Qam16,
    /// Circular complex Gaussian symbols; the slicer passes estimates through.
    Gaussian,
}

impl Alphabet {
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Complex64 {
        match self {
            Alphabet::Qpsk => {
                let re = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let im = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Complex64::new(re, im) * FRAC_1_SQRT_2
            }
            Alphabet::Qam16 => {
                const LV: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
                let s = 10f64.sqrt();
                Complex64::new(LV[rng.random_range(0..4)] / s, LV[rng.random_range(0..4)] / s)
            }
            Alphabet::Gaussian => gaussian(rng, 1.0),
        }
    }

    /// Minimum-distance decision.
    pub fn slice(&self, z: Complex64) -> Complex64 {
        match self {
            Alphabet::Qpsk => Complex64::new(z.re.signum(), z.im.signum()) * FRAC_1_SQRT_2,
            Alphabet::Qam16 => {
                let s = 10f64.sqrt();
                let q = |x: f64| (((x * s + 3.0) / 2.0).round().clamp(0.0, 3.0) * 2.0 - 3.0) / s;
                Complex64::new(q(z.re), q(z.im))
            }
            Alphabet::Gaussian => z,
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Transmitted symbols, one row per group member and one column per interval.
#[derive(Clone, Debug)]
pub struct SymbolFrame {
    pub b: CMat,
    pub alphabet: Alphabet,
}

impl SymbolFrame {
    pub fn random<R: Rng>(alphabet: Alphabet, members: usize, n0: usize, rng: &mut R) -> Self {
        let mut b = CMat::zeros(members, n0);
        for u in 0..n0 {
            for l in 0..members {
                b[(l, u)] = alphabet.draw(rng);
            }
        }
        Self { b, alphabet }
    }
}

#[derive(Clone, Debug)]
pub struct Transmission {
    pub symbols: SymbolFrame,
    /// Whitened received blocks, one S-sample column per interval.
    pub received: CMat,
}

/// `r[u] = H·E[u]·b[u] + w[u]` with white circular noise of variance `σ²`.
pub fn simulate_group_transmission(
    gc: &GroupChannel,
    sigma2: f64,
    n0: usize,
    alphabet: Alphabet,
    seed: u64,
) -> Result<Transmission> {
    if n0 == 0 {
        return Err(Error::Domain("need at least one symbol interval".into()));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::Domain(format!("noise variance must be nonnegative, got {sigma2}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = SymbolFrame::random(alphabet, gc.len(), n0, &mut rng);
    let s = gc.v.nrows();
    let h = gc.h();
    let mut received = CMat::zeros(s, n0);
    for u in 0..n0 {
        let ramp = gc.phase_ramp(u as i64);
        for l in 0..gc.len() {
            let x = ramp[l] * symbols.b[(l, u)];
            for r in 0..s {
                received[(r, u)] += h[(r, l)] * x;
            }
        }
        if sigma2 > 0.0 {
            for r in 0..s {
                received[(r, u)] += gaussian(&mut rng, sigma2);
            }
        }
    }
    Ok(Transmission { symbols, received })
}

/// Slicer-based SIC over every interval using the decomposed filters.
/// Returns decisions in member order and the decode trace.
pub fn sic_detect(received: &CMat, gc: &GroupChannel, sigma2: f64, alphabet: Alphabet) -> Result<(CMat, SicTrace)> {
    let s = gc.v.nrows();
    if received.nrows() != s {
        return Err(Error::Shape(format!("received blocks have {} rows, channel has {s}", received.nrows())));
    }
    let df = decomposed_filter(gc, sigma2)?;
    let h = gc.h();
    // Effective gain f·h per stage, removed before slicing.
    let gains: Vec<Complex64> = (0..gc.len())
        .map(|m| {
            let k = df.trace.order[m];
            let row = df.remaining[m].iter().position(|&r| r == k).expect("decoded column is present");
            (df.stage_filters[m].row(row) * h.column(k))[(0, 0)]
        })
        .collect();
    let n0 = received.ncols();
    let mut decisions = CMat::zeros(gc.len(), n0);
    for u in 0..n0 {
        let mut r = received.column(u).into_owned();
        let ramp = gc.phase_ramp(u as i64);
        for m in 0..gc.len() {
            let k = df.trace.order[m];
            let row = df.remaining[m].iter().position(|&x| x == k).expect("decoded column is present");
            let f = df.at(m, u as i64);
            let z = (f.row(row) * &r)[(0, 0)] / gains[m];
            let bh = alphabet.slice(z);
            decisions[(k, u)] = bh;
            let coef = ramp[k] * bh;
            for i in 0..s {
                r[i] -= h[(i, k)] * coef;
            }
        }
    }
    Ok((decisions, df.trace))
}

/// Fraction of decisions differing from the transmitted symbols, per member.
pub fn symbol_error_rates(sent: &CMat, decided: &CMat) -> Vec<f64> {
    (0..sent.nrows())
        .map(|l| {
            let errs = (0..sent.ncols()).filter(|&u| (sent[(l, u)] - decided[(l, u)]).norm() > 1e-9).count();
            errs as f64 / sent.ncols() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_pulse, group_channel, LinkParams, PulseShape};

    fn rand_h(rng: &mut ChaCha8Rng, s: usize, m: usize) -> CMat {
        CMat::from_fn(s, m, |_, _| gaussian(rng, 1.0))
    }

    fn cmax(a: &CMat, b: &CMat) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let h = rand_h(&mut rng, 8, 3);
            let s2 = rng.random_range(0.01..2.0);
            let f = mmse_filter(&h, s2).unwrap();
            let mut hh = &h * h.adjoint();
            for i in 0..8 {
                hh[(i, i)] += c(s2);
            }
            assert!(cmax(&(&f * hh), &h.adjoint()) < 1e-10);
        }
        assert!(mmse_filter(&rand_h(&mut rng, 4, 2), 0.0).is_err());
    }

    #[test]
    fn scalar_wiener() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = rand_h(&mut rng, 6, 1);
        let s2 = 0.3;
        let f = mmse_filter(&h, s2).unwrap();
        let want = h.adjoint() / c(h.norm_squared() + s2);
        assert!(cmax(&f, &want) < 1e-12);
        let sinr = sinr_per_stream(&h, s2).unwrap();
        assert!((sinr[0] - h.norm_squared() / s2).abs() < 1e-10 * sinr[0]);
    }

    #[test]
    fn matched_filter_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = rand_h(&mut rng, 5, 2);
        let s2 = 1e8;
        let f = mmse_filter(&h, s2).unwrap();
        let want = h.adjoint() / c(s2);
        assert!(cmax(&f, &want) / want.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-6);
    }

    #[test]
    fn zero_forcing_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = rand_h(&mut rng, 8, 3);
        let f = mmse_filter(&h, 1e-12).unwrap();
        assert!(cmax(&(&f * &h), &CMat::identity(3, 3)) < 1e-9);
    }

    #[test]
    fn orthogonal_columns_sinr() {
        let s = 8;
        let nus = [0.0, 0.125, 0.5];
        let amps = [1.0, 0.5, 2.0];
        let h = CMat::from_fn(s, 3, |r, k| Complex64::from_polar(amps[k], 2.0 * PI * nus[k] * r as f64));
        let s2 = 0.1;
        let sinr = sinr_per_stream(&h, s2).unwrap();
        for k in 0..3 {
            let want = s as f64 * amps[k] * amps[k] / s2;
            assert!((sinr[k] - want).abs() < 1e-9 * want);
        }
    }

    #[test]
    fn chain_rule_any_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = rng.random_range(2..=10);
            let m = rng.random_range(1..=s);
            let h = rand_h(&mut rng, s, m);
            let s2 = rng.random_range(0.01..1.0);
            let ld = log_det_rate(&h, s2).unwrap();
            let mut order: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let sum: f64 = sic_sinrs_in_order(&h, s2, &order).unwrap().iter().map(|x| (1.0 + x).log2()).sum();
            assert!((sum - ld).abs() < 1e-9);
        }
    }

    #[test]
    fn max_sinr_property_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = rand_h(&mut rng, 6, 4);
        let tr = sic_order(&h, 0.2, true).unwrap();
        let mut rem: Vec<usize> = (0..4).collect();
        for m in 0..4 {
            let sinr = sinr_per_stream(&columns(&h, &rem), 0.2).unwrap();
            let chosen = rem.iter().position(|&r| r == tr.order[m]).unwrap();
            assert!(sinr.iter().all(|&x| x <= sinr[chosen]));
            rem.remove(chosen);
        }
        assert_eq!(tr.filters.as_ref().unwrap().len(), 4);
        // identical columns tie; the lower index is decoded first
        let col = rand_h(&mut rng, 4, 1);
        let twin = CMat::from_fn(4, 2, |r, _| col[(r, 0)]);
        assert_eq!(sic_order(&twin, 0.5, false).unwrap().order, vec![0, 1]);
        assert!(sic_sinrs_in_order(&twin, 0.5, &[0, 0]).is_err());
    }

    #[test]
    fn genie_cancellation_removes_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = rand_h(&mut rng, 6, 3);
        let b = rand_h(&mut rng, 3, 1);
        let mut r = &h * &b;
        let tr = sic_order(&h, 0.1, false).unwrap();
        let k = tr.order[0];
        r -= h.column(k) * b[(k, 0)];
        let rest: Vec<usize> = (0..3).filter(|&x| x != k).collect();
        let reduced = columns(&h, &rest) * CMat::from_fn(2, 1, |i, _| b[(rest[i], 0)]);
        assert!(cmax(&r, &reduced) < 1e-12);
    }

    fn group(nus: &[f64], amps: &[f64], s: usize) -> GroupChannel {
        let pm = build_pulse(s, 1.0, PulseShape::Triangular, 0.5 / s as f64).unwrap();
        let links: Vec<LinkParams> =
            nus.iter().zip(amps).map(|(&n, &a)| LinkParams::with_nu(Complex64::from_polar(a, n * 7.0), n)).collect();
        group_channel(&pm, &links, 1.0).unwrap()
    }

    #[test]
    fn decomposed_equals_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let l = rng.random_range(1..=6);
            let nus: Vec<f64> = (0..l).map(|_| rng.random()).collect();
            let amps: Vec<f64> = (0..l).map(|_| rng.random_range(0.3..2.0)).collect();
            let gc = group(&nus, &amps, 8);
            let s2 = rng.random_range(0.01..1.0);
            let df = decomposed_filter(&gc, s2).unwrap();
            for _ in 0..5 {
                let u = rng.random_range(-40..40);
                for m in 0..l {
                    let direct = direct_filter(&gc, s2, &df.remaining[m], u).unwrap();
                    assert!(cmax(&df.at(m, u), &direct) < 1e-12);
                }
                let sinr_u = sinr_per_stream(&gc.h_at(u), s2).unwrap();
                let sinr_0 = sinr_per_stream(&gc.h(), s2).unwrap();
                for (a, b) in sinr_u.iter().zip(&sinr_0) {
                    assert!((a - b).abs() < 1e-10 * b.max(1.0));
                }
            }
            let zero = direct_filter(&gc, s2, &df.remaining[0], 0).unwrap();
            assert!(cmax(&df.at(0, 0), &zero) < 1e-15);
        }
    }

    #[test]
    fn noiseless_detection_is_exact() {
        for alphabet in [Alphabet::Qpsk, Alphabet::Qam16] {
            let gc = group(&[0.05, 0.4, 0.77], &[1.0, 0.7, 1.3], 8);
            let tx = simulate_group_transmission(&gc, 0.0, 200, alphabet, 1).unwrap();
            let (dec, tr) = sic_detect(&tx.received, &gc, 1e-9, alphabet).unwrap();
            assert!(symbol_error_rates(&tx.symbols.b, &dec).iter().all(|&e| e == 0.0));
            assert_eq!(tr.order, sic_order(&gc.h(), 1e-9, false).unwrap().order);
        }
        let gc = group(&[0.2], &[1.0], 4);
        let tx = simulate_group_transmission(&gc, 0.0, 50, Alphabet::Qpsk, 2).unwrap();
        let (dec, tr) = sic_detect(&tx.received, &gc, 1e-6, Alphabet::Qpsk).unwrap();
        assert_eq!(tr.order, vec![0]);
        assert!(symbol_error_rates(&tx.symbols.b, &dec)[0] == 0.0);
    }

    #[test]
    fn noiseless_residual_is_zero() {
        let gc = group(&[0.1, 0.6], &[1.0, 2.0], 4);
        let tx = simulate_group_transmission(&gc, 0.0, 30, Alphabet::Gaussian, 3).unwrap();
        for u in 0..30 {
            let mut r = tx.received.column(u).into_owned();
            let hu = gc.h_at(u as i64);
            r -= &hu * tx.symbols.b.column(u);
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn noise_statistics() {
        let gc = group(&[0.3], &[1e-9], 2);
        let s2 = 0.7;
        let n0 = 100_000;
        let tx = simulate_group_transmission(&gc, s2, n0, Alphabet::Gaussian, 4).unwrap();
        let cov = &tx.received * tx.received.adjoint() / c(n0 as f64);
        assert!(cmax(&cov, &(CMat::identity(2, 2) * c(s2))) < 0.02 * s2);
        let energy = tx.symbols.b.iter().map(|z| z.norm_sqr()).sum::<f64>() / n0 as f64;
        assert!((energy - 1.0).abs() < 0.01);
        for alphabet in [Alphabet::Qpsk, Alphabet::Qam16] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let f = SymbolFrame::random(alphabet, 1, n0, &mut rng);
            let e = f.b.iter().map(|z| z.norm_sqr()).sum::<f64>() / n0 as f64;
            assert!((e - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn shape_errors() {
        let gc = group(&[0.3, 0.1], &[1.0, 1.0], 4);
        assert!(matches!(sic_detect(&CMat::zeros(3, 5), &gc, 0.1, Alphabet::Qpsk), Err(Error::Shape(_))));
        assert!(simulate_group_transmission(&gc, 0.1, 0, Alphabet::Qpsk, 0).is_err());
    }

    #[test]
    fn slicers() {
        assert_eq!(Alphabet::Qpsk.slice(Complex64::new(0.2, -3.0)), Complex64::new(1.0, -1.0) * FRAC_1_SQRT_2);
        let s = 10f64.sqrt();
        assert_eq!(Alphabet::Qam16.slice(Complex64::new(9.0, -0.1)), Complex64::new(3.0 / s, -1.0 / s));
        assert_eq!(Alphabet::Gaussian.slice(Complex64::new(0.3, 0.4)), Complex64::new(0.3, 0.4));
    }

    #[test]
    fn collision_hurts_the_first_decoded_stream() {
        // Equal amplitudes and SNR; only the Doppler separation differs.
        let snr_sigma2 = 0.05;
        let run = |nus: &[f64]| {
            let gc = group(nus, &[1.0, 1.0], 8);
            let tx = simulate_group_transmission(&gc, snr_sigma2, 50_000, Alphabet::Qpsk, 10).unwrap();
            let (dec, tr) = sic_detect(&tx.received, &gc, snr_sigma2, Alphabet::Qpsk).unwrap();
            let ser = symbol_error_rates(&tx.symbols.b, &dec);
            ser[tr.order[0]]
        };
        let colliding = run(&[0.3, 0.3]);
        let separated = run(&[0.3, 0.8]);
        assert!(colliding > separated + 0.05, "{colliding} vs {separated}");
    }
}
