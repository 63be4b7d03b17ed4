//! Multiuser extensions of the null-space precoder.
//!
//! Two settings share the machinery:
//!
//! * K+1-user broadcast: K confidential messages for the first K receivers
//!   plus one common message, all confidential streams hidden from an
//!   external eavesdropper. One L-dimensional null basis of T(g) is
//!   partitioned into disjoint per-user column blocks, so every subset of
//!   users keeps full aggregate rank at its own receiver.
//! * Two-user broadcast with two confidential messages: each user's block
//!   sits in the null space of the *other* user's channel. V1 and V2 are
//!   not mutually orthogonal in general; only the common block V0 is
//!   orthogonal to both, with M = N+L - rank([V1 V2]) columns.
//!
//! Both come with integer stream-count (s.d.o.f.) region enumerators whose
//! achievability the equal-power rate evaluators verify end to end.

use crate::channel::{make_toeplitz, ChannelVector, ToeplitzChannel};
use crate::error::{Error, Result};
use crate::linalg::{
    self, adjoint, frobenius_norm, identity, null_space, orthogonal_complement,
    rank_from_singular_values, sandwich, singular_values, CMat,
};
use crate::precoder::{certify_rank, RankCertificate, VandermondePrecoder};
use crate::rates::RateTuple;

/// Integer stream counts (l0, l1, ..., lK) of a d.o.f./s.d.o.f. point.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DofTuple {
    pub streams: Vec<usize>,
}

impl DofTuple {
    pub fn new(streams: Vec<usize>) -> Self {
        Self { streams }
    }

    /// Normalized coordinates r_k = l_k / (N + L).
    pub fn normalized(&self, n: usize, l: usize) -> Vec<f64> {
        let dim = (n + l) as f64;
        self.streams.iter().map(|&s| s as f64 / dim).collect()
    }

    pub fn common(&self) -> usize {
        self.streams[0]
    }

    pub fn confidential(&self) -> &[usize] {
        &self.streams[1..]
    }
}

/// A K+1-user instance: K legitimate receivers and one eavesdropper, all
/// channel vectors pairwise linearly independent.
#[derive(Debug, Clone)]
pub struct MultiuserInstance {
    eavesdropper: ChannelVector,
    users: Vec<ChannelVector>,
    block_len: usize,
}

impl MultiuserInstance {
    pub fn new(
        eavesdropper: ChannelVector,
        users: Vec<ChannelVector>,
        block_len: usize,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidArgument("need at least one user".into()));
        }
        if block_len == 0 {
            return Err(Error::InvalidArgument("block length must be >= 1".into()));
        }
        let l = eavesdropper.delay_spread();
        if users.iter().any(|u| u.delay_spread() != l) {
            return Err(Error::DimensionMismatch(
                "all channels must share the delay spread".into(),
            ));
        }
        // stacked (K+1) x (L+1) tap matrix must have full row rank
        let mut stacked = linalg::zeros(users.len() + 1, l + 1);
        for (j, tap) in eavesdropper.taps().iter().enumerate() {
            stacked[[0, j]] = *tap;
        }
        for (i, u) in users.iter().enumerate() {
            for (j, tap) in u.taps().iter().enumerate() {
                stacked[[i + 1, j]] = *tap;
            }
        }
        let s = singular_values(&stacked)?;
        let smax = s.first().copied().unwrap_or(0.0);
        if s.len() < users.len() + 1 || s[users.len()] <= 1e-8 * smax {
            return Err(Error::DegenerateChannel(
                "channel vectors are (numerically) linearly dependent".into(),
            ));
        }
        Ok(Self { eavesdropper, users, block_len })
    }

    pub fn eavesdropper(&self) -> &ChannelVector {
        &self.eavesdropper
    }

    pub fn users(&self) -> &[ChannelVector] {
        &self.users
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn delay_spread(&self) -> usize {
        self.eavesdropper.delay_spread()
    }
}

/// Partitions one null basis of T(g) into disjoint per-user blocks of the
/// requested sizes, assigning basis columns round-robin by index.
fn partition_columns(basis: &CMat, sizes: &[usize]) -> Vec<CMat> {
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    let mut col = 0;
    loop {
        let mut progressed = false;
        for (user, &quota) in sizes.iter().enumerate() {
            if assignments[user].len() < quota {
                assignments[user].push(col);
                col += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    assignments
        .into_iter()
        .map(|cols| {
            let mut block = linalg::zeros(basis.nrows(), cols.len());
            for (j, &c) in cols.iter().enumerate() {
                block
                    .slice_mut(ndarray::s![.., j])
                    .assign(&basis.slice(ndarray::s![.., c]));
            }
            block
        })
        .collect()
}

fn sum_projectors(blocks: &[&CMat], dim: usize) -> CMat {
    let mut acc = linalg::zeros(dim, dim);
    for b in blocks {
        if b.ncols() > 0 {
            acc = acc + b.dot(&adjoint(b));
        }
    }
    acc
}

/// Builds the K+1-user precoder: disjoint user blocks inside the null space
/// of T(g), plus the unitary completion V0. Certifies the subset-rank
/// property rank(T(h_k) (sum_{j in K} V_j V_j^H) T(h_k)^H) = sum_{j in K} l_j
/// for every user subset (exhaustively up to three users, sampled beyond).
pub fn kuser_precoder(
    inst: &MultiuserInstance,
    stream_counts: &[usize],
) -> Result<(VandermondePrecoder, Vec<RankCertificate>)> {
    let k = inst.user_count();
    if stream_counts.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "expected {k} stream counts, got {}",
            stream_counts.len()
        )));
    }
    let l = inst.delay_spread();
    let total: usize = stream_counts.iter().sum();
    if total > l {
        return Err(Error::DimensionMismatch(format!(
            "confidential streams {total} exceed the delay spread {l}"
        )));
    }
    let n = inst.block_len();
    let tg = make_toeplitz(inst.eavesdropper(), n)?;
    let basis = null_space(tg.matrix())?;
    if basis.ncols() != l {
        return Err(Error::DegenerateChannel(format!(
            "null space of T(g) has dimension {}, expected {l}",
            basis.ncols()
        )));
    }
    let user_blocks = partition_columns(&basis, stream_counts);
    let used = {
        let refs: Vec<&CMat> = user_blocks.iter().collect();
        let mut m = linalg::zeros(n + l, total);
        let mut j = 0;
        for b in refs {
            for c in 0..b.ncols() {
                m.slice_mut(ndarray::s![.., j]).assign(&b.slice(ndarray::s![.., c]));
                j += 1;
            }
        }
        m
    };
    let v0 = if total > 0 { orthogonal_complement(&used)? } else { identity(n + l) };

    // subset-rank certificates
    let channels: Vec<ToeplitzChannel> = inst
        .users()
        .iter()
        .map(|h| make_toeplitz(h, n))
        .collect::<Result<_>>()?;
    let subsets = user_subsets(k);
    let mut certificates = Vec::new();
    for subset in &subsets {
        let expected: usize = subset.iter().map(|&j| stream_counts[j]).sum::<usize>().min(n);
        if expected == 0 {
            continue;
        }
        let blocks: Vec<&CMat> = subset.iter().map(|&j| &user_blocks[j]).collect();
        let proj = sum_projectors(&blocks, n + l);
        for th in &channels {
            let product = sandwich(th.matrix(), &proj);
            certificates.push(certify_rank(&product, expected)?);
        }
    }

    let mut all_blocks = vec![v0];
    all_blocks.extend(user_blocks);
    let prec = VandermondePrecoder::new(all_blocks, n + l)?;
    Ok((prec, certificates))
}

/// All non-empty subsets for K <= 3; beyond that, singletons, the full set
/// and adjacent pairs keep the certificate cost linear.
fn user_subsets(k: usize) -> Vec<Vec<usize>> {
    if k <= 3 {
        let mut out = Vec::new();
        for mask in 1u32..(1 << k) {
            out.push((0..k).filter(|&j| mask & (1 << j) != 0).collect());
        }
        out
    } else {
        let mut out: Vec<Vec<usize>> = (0..k).map(|j| vec![j]).collect();
        out.extend((0..k - 1).map(|j| vec![j, j + 1]));
        out.push((0..k).collect());
        out
    }
}

/// Equal-power rates of the K+1-user precoder: the common rate is the
/// minimum over the eavesdropper's and every user's common-message term,
/// each confidential rate is the log-det quotient with the other users'
/// confidential blocks as interference.
pub fn kuser_equal_power_rates(
    inst: &MultiuserInstance,
    prec: &VandermondePrecoder,
    p: f64,
) -> Result<RateTuple> {
    if !(p >= 0.0) {
        return Err(Error::InvalidArgument("per-stream power must be >= 0".into()));
    }
    let k = inst.user_count();
    if prec.blocks().len() != k + 1 {
        return Err(Error::DimensionMismatch(format!(
            "precoder has {} blocks, expected {}",
            prec.blocks().len(),
            k + 1
        )));
    }
    let n = inst.block_len();
    let dim = prec.dimension() as f64;
    let tg = make_toeplitz(inst.eavesdropper(), n)?;
    let v0 = prec.common_block();
    let confidential = prec.confidential_blocks();

    let log2_sandwich = |t: &ToeplitzChannel, proj: &CMat| -> Result<f64> {
        linalg::log2_det_i_plus(&linalg::scale(&sandwich(t.matrix(), proj), p))
    };

    // I(U; Z): the eavesdropper sees only the common block
    let proj0 = v0.dot(&adjoint(v0));
    let mut common_terms = vec![log2_sandwich(&tg, &proj0)? / dim];

    let all_conf: Vec<&CMat> = confidential.iter().collect();
    let conf_proj = sum_projectors(&all_conf, prec.dimension());
    let full_proj = &proj0 + &conf_proj;

    let mut rates = vec![0.0; k + 1];
    for (idx, h) in inst.users().iter().enumerate() {
        let th = make_toeplitz(h, n)?;
        let numer_common = log2_sandwich(&th, &full_proj)?;
        let denom_common = log2_sandwich(&th, &conf_proj)?;
        common_terms.push(((numer_common - denom_common) / dim).max(0.0));

        let others: Vec<&CMat> = confidential
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, b)| b)
            .collect();
        let interf_proj = sum_projectors(&others, prec.dimension());
        let numer = log2_sandwich(&th, &conf_proj)?;
        let denom = log2_sandwich(&th, &interf_proj)?;
        rates[idx + 1] = ((numer - denom) / dim).max(0.0);
    }
    rates[0] = common_terms.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    RateTuple::new(rates)
}

/// Confidential leakage of the K-user scheme at the eavesdropper:
/// 1/(N+L) log2 det(I + p T(g) (sum_k V_k V_k^H) T(g)^H).
pub fn kuser_leakage(
    inst: &MultiuserInstance,
    prec: &VandermondePrecoder,
    p: f64,
) -> Result<f64> {
    let tg = make_toeplitz(inst.eavesdropper(), inst.block_len())?;
    let conf: Vec<&CMat> = prec.confidential_blocks().iter().collect();
    let proj = sum_projectors(&conf, prec.dimension());
    let val = linalg::log2_det_i_plus(&linalg::scale(&sandwich(tg.matrix(), &proj), p))?;
    Ok(val.max(0.0) / prec.dimension() as f64)
}

/// Enumerates the K+1-user s.d.o.f. region: non-negative integer tuples
/// (l0, l1, ..., lK) with sum_k l_k <= L and l0 + sum_k l_k <= N.
/// Lexicographically sorted.
pub fn kuser_dof_region(n: usize, l: usize, k: usize) -> Result<Vec<DofTuple>> {
    if n <= l {
        return Err(Error::InvalidArgument(format!(
            "region enumeration requires N > L, got N = {n}, L = {l}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one user".into()));
    }
    let mut out = Vec::new();
    let mut current = vec![0usize; k];
    enumerate_confidential(&mut current, 0, l, &mut |conf| {
        let used: usize = conf.iter().sum();
        for l0 in 0..=(n - used) {
            let mut streams = vec![l0];
            streams.extend_from_slice(conf);
            out.push(DofTuple::new(streams));
        }
    });
    out.sort();
    Ok(out)
}

fn enumerate_confidential(
    current: &mut Vec<usize>,
    idx: usize,
    remaining: usize,
    emit: &mut impl FnMut(&[usize]),
) {
    if idx == current.len() {
        emit(current);
        return;
    }
    for v in 0..=remaining {
        current[idx] = v;
        enumerate_confidential(current, idx + 1, remaining - v, emit);
    }
    current[idx] = 0;
}

/// Builds the two-user two-confidential-message precoder: V1 spans l1
/// null directions of T(h2), V2 spans l2 null directions of T(h1), and V0
/// spans the orthogonal complement of [V1 V2] with
/// M = N+L - rank([V1 V2]) columns. V1 and V2 are *not* mutually orthogonal
/// in general; cross-channel nulling and per-user rank are certified.
pub fn two_user_precoder(
    h1: &ChannelVector,
    h2: &ChannelVector,
    n: usize,
    l1: usize,
    l2: usize,
) -> Result<(VandermondePrecoder, Vec<RankCertificate>)> {
    if h1.delay_spread() != h2.delay_spread() {
        return Err(Error::DimensionMismatch(
            "h1 and h2 must share the delay spread".into(),
        ));
    }
    let l = h1.delay_spread();
    if l1 > l || l2 > l {
        return Err(Error::DimensionMismatch(format!(
            "per-user streams ({l1}, {l2}) must not exceed the delay spread {l}"
        )));
    }
    // independence check on the stacked 2 x (L+1) tap matrix
    let mut stacked = linalg::zeros(2, l + 1);
    for (j, t) in h1.taps().iter().enumerate() {
        stacked[[0, j]] = *t;
    }
    for (j, t) in h2.taps().iter().enumerate() {
        stacked[[1, j]] = *t;
    }
    let s = singular_values(&stacked)?;
    if s.len() < 2 || s[1] <= 1e-8 * s[0] {
        return Err(Error::DegenerateChannel(
            "h1 and h2 are (numerically) linearly dependent".into(),
        ));
    }

    let t1 = make_toeplitz(h1, n)?;
    let t2 = make_toeplitz(h2, n)?;
    let take = |basis: CMat, count: usize| basis.slice(ndarray::s![.., ..count]).to_owned();
    let v1 = take(null_space(t2.matrix())?, l1);
    let v2 = take(null_space(t1.matrix())?, l2);
    let joint = {
        let mut m = linalg::zeros(n + l, l1 + l2);
        for j in 0..l1 {
            m.slice_mut(ndarray::s![.., j]).assign(&v1.slice(ndarray::s![.., j]));
        }
        for j in 0..l2 {
            m.slice_mut(ndarray::s![.., l1 + j]).assign(&v2.slice(ndarray::s![.., j]));
        }
        m
    };
    let v0 = if l1 + l2 > 0 { orthogonal_complement(&joint)? } else { identity(n + l) };

    let mut certificates = Vec::new();
    if l1 > 0 {
        certificates.push(certify_rank(&t1.matrix().dot(&v1), l1.min(n))?);
    }
    if l2 > 0 {
        certificates.push(certify_rank(&t2.matrix().dot(&v2), l2.min(n))?);
    }
    // cross-channel nulling residuals
    let cross: [(&ToeplitzChannel, &CMat, &str); 2] =
        [(&t2, &v1, "T(h2)V1"), (&t1, &v2, "T(h1)V2")];
    for (t, v, label) in cross {
        if v.ncols() == 0 {
            continue;
        }
        let resid = frobenius_norm(&t.matrix().dot(v));
        let bound = 1e-10 * frobenius_norm(t.matrix()).max(1.0);
        if resid > bound {
            return Err(Error::PropertyViolation(format!(
                "cross-channel leakage {label}: residual {resid:.3e} exceeds {bound:.3e}"
            )));
        }
    }

    let prec = VandermondePrecoder::new(vec![v0, v1, v2], n + l)?;
    Ok((prec, certificates))
}

/// rank([V1 V2]) and the common-block dimension M = N+L - rank.
pub fn two_user_overlap(prec: &VandermondePrecoder) -> Result<(usize, usize)> {
    let conf = prec.confidential_blocks();
    if conf.len() != 2 {
        return Err(Error::InvalidArgument("expected a two-user precoder".into()));
    }
    let total = conf[0].ncols() + conf[1].ncols();
    if total == 0 {
        return Ok((0, prec.dimension()));
    }
    let mut joint = linalg::zeros(prec.dimension(), total);
    let mut j = 0;
    for b in conf {
        for c in 0..b.ncols() {
            joint
                .slice_mut(ndarray::s![.., j])
                .assign(&b.slice(ndarray::s![.., c]));
            j += 1;
        }
    }
    let s = singular_values(&joint)?;
    let (rank, _) = rank_from_singular_values(&s);
    Ok((rank, prec.dimension() - rank))
}

/// Equal-power rates of the two-user scheme with per-stream power
/// p = (N+L) P / (M + l1 + l2): R0 is the worse of the two common-message
/// quotients, R_k the per-user confidential log-det.
pub fn two_user_rates(
    h1: &ChannelVector,
    h2: &ChannelVector,
    prec: &VandermondePrecoder,
    total_power_per_symbol: f64,
) -> Result<RateTuple> {
    if !(total_power_per_symbol >= 0.0) {
        return Err(Error::InvalidArgument("power must be >= 0".into()));
    }
    let conf = prec.confidential_blocks();
    if conf.len() != 2 {
        return Err(Error::InvalidArgument("expected a two-user precoder".into()));
    }
    let dim = prec.dimension();
    let (l1, l2) = (conf[0].ncols(), conf[1].ncols());
    let (_, m) = two_user_overlap(prec)?;
    let streams = m + l1 + l2;
    let p = if streams > 0 {
        dim as f64 * total_power_per_symbol / streams as f64
    } else {
        0.0
    };
    let n = dim - h1.delay_spread();
    let v0 = prec.common_block();
    let proj0 = v0.dot(&adjoint(v0));

    let mut rates = vec![0.0; 3];
    let mut common = f64::INFINITY;
    for (idx, h) in [h1, h2].into_iter().enumerate() {
        let th = make_toeplitz(h, n)?;
        let vk = &conf[idx];
        let projk = if vk.ncols() > 0 {
            vk.dot(&adjoint(vk))
        } else {
            linalg::zeros(dim, dim)
        };
        let own = linalg::log2_det_i_plus(&linalg::scale(&sandwich(th.matrix(), &projk), p))?;
        let both = linalg::log2_det_i_plus(&linalg::scale(
            &sandwich(th.matrix(), &(&proj0 + &projk)),
            p,
        ))?;
        rates[idx + 1] = (own / dim as f64).max(0.0);
        common = common.min(((both - own) / dim as f64).max(0.0));
    }
    rates[0] = if common.is_finite() { common } else { 0.0 };
    RateTuple::new(rates)
}

/// Worst cross-channel confidential leakage of the two-user scheme:
/// max_k 1/(N+L) log2 det(I + p T(h_k) V_j V_j^H T(h_k)^H) for j != k.
pub fn two_user_leakage(
    h1: &ChannelVector,
    h2: &ChannelVector,
    prec: &VandermondePrecoder,
    p: f64,
) -> Result<f64> {
    let conf = prec.confidential_blocks();
    let dim = prec.dimension() as f64;
    let n = prec.dimension() - h1.delay_spread();
    let mut worst = 0.0f64;
    for (h, v) in [(h2, &conf[0]), (h1, &conf[1])] {
        if v.ncols() == 0 {
            continue;
        }
        let th = make_toeplitz(h, n)?;
        let proj = v.dot(&adjoint(v));
        let val = linalg::log2_det_i_plus(&linalg::scale(&sandwich(th.matrix(), &proj), p))?;
        worst = worst.max(val.max(0.0) / dim);
    }
    Ok(worst)
}

/// Enumerates the two-user (two confidential messages) s.d.o.f. region:
/// tuples (l0, l1, l2) with l_k <= L and l0 + l_k <= N for k = 1, 2.
pub fn two_user_dof_region(n: usize, l: usize) -> Result<Vec<DofTuple>> {
    if n <= l {
        return Err(Error::InvalidArgument(format!(
            "region enumeration requires N > L, got N = {n}, L = {l}"
        )));
    }
    let mut out = Vec::new();
    for l1 in 0..=l {
        for l2 in 0..=l {
            let cap = n - l1.max(l2);
            for l0 in 0..=cap {
                out.push(DofTuple::new(vec![l0, l1, l2]));
            }
        }
    }
    out.sort();
    Ok(out)
}
