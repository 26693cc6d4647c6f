"""Compiled inner loops.

Everything here works on plain numpy arrays so that the Python-level objects
(:class:`~edalab.stats.RngStream`, fitness functions, EDA states) can hand
their buffers straight to numba. All run loops are resumable: the full state
lives in the arrays passed in, and a loop may return after ``max_gens``
generations and be called again without changing the outcome.

Random draws come from xoshiro256** 1.0. A uniform double is the top 53 bits
of one 64-bit output scaled by 2**-53, so it lies in [0, 1).
"""

import math

import numpy as np
from numba import njit, uint32, uint64

# fitness codes
ONEMAX = 0
LEADINGONES = 1
BINVAL = 2
NEEDLE = 3
CONSTANT = 4

# noise kinds
NOISE_NONE = 0
NOISE_GAUSS = 1
NOISE_PRIOR = 2

# algorithm codes for the n-Bernoulli-lambda family
UMDA = 0
PBIL = 1
MMAS_IB = 2
CGA = 3

# loop status
PAUSED = 0
HIT = 1
BUDGET = 2

# counters layout shared by all run loops
C_EVALS = 0
C_STARTED = 1  # sampling rounds begun, including a final partial one
C_UPDATES = 2  # completed generations (t)
C_BORDER_HITS = 3
C_ABSORPTIONS = 4
C_HIT = 5
N_COUNTERS = 6

SNAP_TOL = 1e-9
_NEVER = np.int64(1) << np.int64(62)
_MASK32 = np.int64(0xFFFFFFFF)

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_ONE = np.uint64(1)
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)


# ---------------------------------------------------------------------------
# generator


@njit(inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(nogil=True, cache=True)
def next_u64(s):
    result = _rotl(s[1] * uint64(5), 7) * uint64(9)
    t = s[1] << uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(inline="always")
def _step(s0, s1, s2, s3):
    """One xoshiro256** step on unpacked state words."""
    result = _rotl(s1 * uint64(5), 7) * uint64(9)
    t = s1 << uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    return result, s0, s1, s2, s3


@njit(nogil=True, cache=True)
def next_double(s):
    return (next_u64(s) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(nogil=True, cache=True)
def next_normal(s):
    # Box-Muller, cosine branch only: exactly two draws per normal
    u1 = 1.0 - next_double(s)
    u2 = next_double(s)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(nogil=True, cache=True)
def next_below(s, k):
    return int(next_double(s) * k)


@njit(nogil=True, cache=True)
def fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = next_u64(s)


@njit(nogil=True, cache=True)
def fill_double(s, out):
    for i in range(out.shape[0]):
        out[i] = next_double(s)


@njit(nogil=True, cache=True)
def fill_normal(s, out):
    for i in range(out.shape[0]):
        out[i] = next_normal(s)


# ---------------------------------------------------------------------------
# sampling


@njit(nogil=True, cache=True)
def sample_into(p, s, out):
    """One individual: draw i decides bit i, in index order."""
    s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
    ones = 0
    for i in range(p.shape[0]):
        r, s0, s1, s2, s3 = _step(s0, s1, s2, s3)
        if (r >> uint64(11)) * (1.0 / 9007199254740992.0) < p[i]:
            out[i] = 1
            ones += 1
        else:
            out[i] = 0
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return ones


@njit(nogil=True, cache=True)
def sample_rows(p, s, out):
    for j in range(out.shape[0]):
        sample_into(p, s, out[j])


# ---------------------------------------------------------------------------
# fitness


@njit(nogil=True, cache=True)
def agreement_count(x, target):
    c = 0
    for i in range(x.shape[0]):
        if x[i] == target[i]:
            c += 1
    return c


@njit(nogil=True, cache=True)
def true_value(code, x, target, perm):
    """Noise-free value as a float; BinVal only exact for n <= 53."""
    n = x.shape[0]
    if code == ONEMAX:
        return float(agreement_count(x, target))
    if code == LEADINGONES:
        c = 0
        for i in range(n):
            j = perm[i]
            if x[j] != target[j]:
                break
            c += 1
        return float(c)
    if code == NEEDLE:
        return 1.0 if agreement_count(x, target) == n else 0.0
    if code == BINVAL:
        v = 0.0
        for i in range(n):
            v = 2.0 * v + (1.0 if x[i] == target[i] else 0.0)
        return v
    return 0.0


@njit(nogil=True, cache=True)
def is_optimal(code, x, target):
    if code == CONSTANT:
        return False
    return agreement_count(x, target) == x.shape[0]


@njit(nogil=True, cache=True)
def noisy_value(code, x, target, perm, kind, param, ns, scratch):
    if kind == NOISE_GAUSS:
        return true_value(code, x, target, perm) + param * next_normal(ns)
    if kind == NOISE_PRIOR:
        n = x.shape[0]
        for i in range(n):
            scratch[i] = x[i]
        if next_double(ns) < param:
            k = next_below(ns, n)
            scratch[k] = 1 - scratch[k]
        return true_value(code, scratch, target, perm)
    return true_value(code, x, target, perm)


@njit(nogil=True, cache=True)
def binval_compare(a, b, target):
    """Sign of BinVal(a) - BinVal(b) on agreement vectors (lexicographic)."""
    for i in range(a.shape[0]):
        ea = a[i] == target[i]
        eb = b[i] == target[i]
        if ea != eb:
            return 1 if ea else -1
    return 0


# ---------------------------------------------------------------------------
# selection


@njit(nogil=True, cache=True)
def order_by_value(fit, keys):
    """Indices sorted by fitness descending, ties by key ascending."""
    perm = np.argsort(keys, kind="mergesort")
    neg = np.empty(fit.shape[0])
    for j in range(fit.shape[0]):
        neg[j] = -fit[perm[j]]
    inner = np.argsort(neg, kind="mergesort")
    out = np.empty(fit.shape[0], np.int64)
    for j in range(fit.shape[0]):
        out[j] = perm[inner[j]]
    return out


@njit(nogil=True, cache=True)
def order_binval(pop, target, keys):
    lam = pop.shape[0]
    out = np.empty(lam, np.int64)
    for j in range(lam):
        out[j] = j
    # insertion sort; lambda is small wherever BinVal is used
    for a in range(1, lam):
        cur = out[a]
        b = a - 1
        while b >= 0:
            other = out[b]
            c = binval_compare(pop[cur], pop[other], target)
            if c > 0 or (c == 0 and keys[cur] < keys[other]):
                out[b + 1] = other
                b -= 1
            else:
                break
        out[b + 1] = cur
    return out


# ---------------------------------------------------------------------------
# n-Bernoulli-lambda family


@njit(nogil=True, cache=True)
def sample_agree(p, s, out, target):
    """Like :func:`sample_into`; returns the number of bits agreeing with target."""
    s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
    agree = 0
    for i in range(p.shape[0]):
        r, s0, s1, s2, s3 = _step(s0, s1, s2, s3)
        b = np.uint8((r >> uint64(11)) * (1.0 / 9007199254740992.0) < p[i])
        out[i] = b
        agree += b == target[i]
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return agree


@njit(nogil=True, cache=True)
def _evaluate_member(code, row, target, perm, agree, lex, kind, param, ns, scratch):
    """Returns (noisy or true fitness, optimal?)."""
    opt = code != CONSTANT and agree == row.shape[0]
    if kind == NOISE_NONE:
        if code == ONEMAX:
            return float(agree), opt
        if lex:
            return 0.0, opt  # ranked by binval_compare instead
        if code == NEEDLE:
            return 1.0 if opt else 0.0, opt
    return noisy_value(code, row, target, perm, kind, param, ns, scratch), opt


@njit(nogil=True, cache=True)
def bernoulli_generations(
    algo, lam, mu, rho, K, margin,
    code, target, perm, kind, param,
    p, s, ns, pop, fit, keys, cnt, scratch, counters,
    max_evals, max_gens,
):
    """Run UMDA / PBIL / MMAS_ib / cGA generations in place.

    ``margin < 0`` means borderless. Returns PAUSED, HIT or BUDGET.
    """
    n = p.shape[0]
    lo = margin
    hi = 1.0 - margin
    use_lex = code == BINVAL and kind == NOISE_NONE
    done = 0
    while True:
        if done >= max_gens:
            return PAUSED
        if counters[C_EVALS] >= max_evals:
            return BUDGET
        counters[C_STARTED] += 1
        for j in range(lam):
            if counters[C_EVALS] >= max_evals:
                return BUDGET
            agree = sample_agree(p, s, pop[j], target)
            value, opt = _evaluate_member(
                code, pop[j], target, perm, agree, use_lex, kind, param, ns, scratch
            )
            fit[j] = value
            counters[C_EVALS] += 1
            if opt:
                counters[C_HIT] = 1
                return HIT
        fill_u64(s, keys)
        if use_lex:
            order = order_binval(pop, target, keys)
        else:
            order = order_by_value(fit, keys)

        if algo == CGA:
            a = pop[order[0]]
            b = pop[order[1]]
            for i in range(n):
                if a[i] == b[i]:
                    cnt[i] = p[i]
                    continue
                v = p[i] + (float(a[i]) - float(b[i])) / K
                if abs(v) < SNAP_TOL:
                    v = 0.0
                elif abs(v - 1.0) < SNAP_TOL:
                    v = 1.0
                if margin > 0.0:
                    if abs(v - lo) < SNAP_TOL:
                        v = lo
                    elif abs(v - hi) < SNAP_TOL:
                        v = hi
                cnt[i] = max(0.0, min(1.0, v))
        else:
            for i in range(n):
                cnt[i] = 0.0
            for k in range(mu):
                row = pop[order[k]]
                for i in range(n):
                    cnt[i] += row[i]
            for i in range(n):
                if algo == UMDA:
                    cnt[i] = cnt[i] / mu
                elif algo == PBIL:
                    cnt[i] = (1.0 - rho) * p[i] + rho * (cnt[i] / mu)
                else:
                    cnt[i] = (1.0 - rho) * p[i] + rho * cnt[i]

        for i in range(n):
            v = cnt[i]
            if margin > 0.0:
                v = max(lo, min(hi, v))
                if v == lo and p[i] > lo:
                    counters[C_BORDER_HITS] += 1
            elif v == 0.0 and p[i] > 0.0:
                counters[C_ABSORPTIONS] += 1
            p[i] = v
        counters[C_UPDATES] += 1
        done += 1


# ---------------------------------------------------------------------------
# sig-cGA


@njit(inline="always")
def _popcount(x):
    x = x - ((x >> uint64(1)) & _M1)
    x = (x & _M2) + ((x >> uint64(2)) & _M2)
    x = (x + (x >> uint64(4))) & _M4
    return int((x * _H01) >> uint64(56))


@njit(inline="always")
def _count_range(hist, c, a, b):
    """Ones among bit indices [a, b) of packed column ``c``."""
    if a >= b:
        return 0
    wa = a >> 6
    wb = (b - 1) >> 6
    ba = a & 63
    bb = ((b - 1) & 63) + 1
    if wa == wb:
        w = hist[wa, c] >> uint64(ba)
        if bb - ba < 64:
            w &= (_ONE << uint64(bb - ba)) - _ONE
        return _popcount(w)
    total = _popcount(hist[wa, c] >> uint64(ba))
    for w in range(wa + 1, wb):
        total += _popcount(hist[w, c])
    last = hist[wb, c]
    if bb < 64:
        last &= (_ONE << uint64(bb)) - _ONE
    total += _popcount(last)
    return total


@njit(inline="always")
def window_ones(hist, c, t, ell, cap):
    """Ones among ring entries ``t - ell .. t - 1`` of column ``c``."""
    start = (t - ell) & (cap - 1)
    end = start + ell
    if end <= cap:
        return _count_range(hist, c, start, end)
    return _count_range(hist, c, start, cap) + _count_range(hist, c, 0, end - cap)


@njit(inline="always")
def suffix_ones(hist, cum, c, total, block_bits, t, ell, cap):
    """Ones among the last ``ell`` entries of column ``c``, in constant time.

    ``cum[b mod nb, c]`` holds the column's running count of ones (modulo
    2**32) at the end of the global block ``b`` and ``total`` the count at
    ``t``. Only the block containing the window start is counted bit-wise.
    """
    start = t - ell
    b = start // block_bits
    end = (b + 1) * block_bits
    if end >= t:
        return window_ones(hist, c, t, ell, cap)
    nb = cap // block_bits
    before_end = np.int64(cum[b & (nb - 1), c])
    inside = window_ones(hist, c, end, end - start, cap)
    return ((total - before_end) & _MASK32) + inside


@njit(nogil=True, cache=True)
def sig_threshold(ell, pv, eps, lnn):
    return ell * pv + eps * max(math.sqrt(ell * pv * (1.0 - pv) * lnn), lnn)


@njit(nogil=True, cache=True)
def _need_table(values, windows, eps, lnn):
    """``out[v, k]``: fewest ones that make a window of ``2**k`` significant
    at rate ``values[v]``, or ``_NEVER`` when the window is too short."""
    out = np.empty((values.shape[0], windows), dtype=np.int64)
    for v in range(values.shape[0]):
        for k in range(windows):
            ell = np.int64(1) << k
            need = np.int64(math.floor(sig_threshold(float(ell), values[v], eps, lnn))) + 1
            out[v, k] = need if need <= ell else _NEVER
    return out


@njit(nogil=True, cache=True)
def _significance(i, level, up, down, need1, need0, hist, cum, total, block_bits, t, h, cap):
    """(+1, -1 or 0, history length at which position i is next examined).

    ``h`` is the length of the position's history, which ends at ring time
    ``t``.
    Windows are scanned shortest first, ones before zeros, as in the plain
    rule. A count grows by at most one per appended bit, so a quiet window
    cannot become significant before its count has covered the remaining gap;
    a window longer than the history is first due when the history reaches it.
    """
    due = _NEVER
    for k in range(need1.shape[1]):
        ell = np.int64(1) << k
        n1 = need1[level, k] if up else _NEVER
        n0 = need0[level, k] if down else _NEVER
        if n1 == _NEVER and n0 == _NEVER:
            continue
        if ell > h:
            if ell < due:
                due = ell
            break
        ones = suffix_ones(hist, cum, i, total, block_bits, t, ell, cap)
        if ones >= n1:
            return 1, due
        if ell - ones >= n0:
            return -1, due
        gap = min(n1 - ones, n0 - (ell - ones))
        if h + gap < due:
            due = h + gap
    return 0, due


@njit(nogil=True, cache=True)
def sigcga_generations(
    eps, code, target, perm, kind, param,
    p, s, ns, pop, fit, keys, scratch, counters,
    hist, cum, cap, block_bits, born, total, due,
    max_evals, max_gens,
):
    """sig-cGA generations.

    Histories share a time-major ring: bit ``t mod cap`` of column ``i`` is
    the winner's bit of position i in generation ``t``, so one generation
    writes a single contiguous row. Position i's history is the part written
    since generation ``born[i]``; ``total[i]`` is its count of ones and
    ``cum`` records that count at every completed block of ``block_bits``
    generations. ``due[i]`` is the history length at which position i is
    next examined. ``cap`` and ``block_bits`` are powers of two.
    """
    n = p.shape[0]
    lo = 1.0 / n
    hi = 1.0 - 1.0 / n
    lnn = math.log(n)
    nb = cap // block_bits
    windows = 0
    while (np.int64(1) << windows) <= cap:
        windows += 1
    rates = np.array([lo, 0.5, hi])
    need1 = _need_table(rates, windows, eps, lnn)
    need0 = _need_table(1.0 - rates, windows, eps, lnn)
    use_lex = code == BINVAL and kind == NOISE_NONE
    done = 0
    while True:
        if done >= max_gens:
            return PAUSED
        if counters[C_EVALS] >= max_evals:
            return BUDGET
        counters[C_STARTED] += 1
        for j in range(2):
            if counters[C_EVALS] >= max_evals:
                return BUDGET
            agree = sample_agree(p, s, pop[j], target)
            value, opt = _evaluate_member(
                code, pop[j], target, perm, agree, use_lex, kind, param, ns, scratch
            )
            fit[j] = value
            counters[C_EVALS] += 1
            if opt:
                counters[C_HIT] = 1
                return HIT
        fill_u64(s, keys)
        if use_lex:
            order = order_binval(pop, target, keys)
        else:
            order = order_by_value(fit, keys)
        win = pop[order[0]]
        t = counters[C_UPDATES]
        idx = t & (cap - 1)
        row = hist[idx >> 6]
        shift = uint64(idx & 63)
        keep = ~(_ONE << shift)
        for i in range(n):
            b = win[i]
            row[i] = (row[i] & keep) | (uint64(b) << shift)
            total[i] += b
        t += 1
        if (t & (block_bits - 1)) == 0:
            crow = cum[((t - 1) // block_bits) & (nb - 1)]
            for i in range(n):
                crow[i] = uint32(total[i] & _MASK32)
        for i in range(n):
            h = t - born[i]
            if h < due[i]:
                continue
            old = p[i]
            level = 0 if old == lo else (2 if old == hi else 1)
            d, nxt = _significance(
                i, level, old < hi, old > lo, need1, need0, hist, cum, total[i], block_bits, t, h, cap
            )
            due[i] = nxt
            if d != 0:
                p[i] = hi if d == 1 else lo
                if d == -1 and old > lo:
                    counters[C_BORDER_HITS] += 1
                born[i] = t
                total[i] = 0
                due[i] = 1
        counters[C_UPDATES] += 1
        done += 1


# ---------------------------------------------------------------------------
# (1+1) EA


@njit(nogil=True, cache=True)
def _mutate(x, y, rate, s):
    """Standard bit mutation via geometric gaps; returns number of flips."""
    n = x.shape[0]
    for i in range(n):
        y[i] = x[i]
    log_q = math.log1p(-rate) if rate < 1.0 else -np.inf
    pos = -1
    flips = 0
    while True:
        u = 1.0 - next_double(s)
        gap = math.floor(math.log(u) / log_q)
        if gap >= n:
            break
        pos += int(gap) + 1
        if pos >= n:
            break
        y[pos] = 1 - y[pos]
        flips += 1
    return flips


@njit(nogil=True, cache=True)
def ea_run(rate, code, target, perm, kind, param, x, y, s, ns, scratch, counters, max_evals):
    """(1+1) EA: accept the offspring iff its (noisy) fitness is not worse.

    Under noise the parent is re-evaluated every iteration, and that
    evaluation is charged to the budget.
    """
    n = x.shape[0]
    noisy = kind != NOISE_NONE
    lex = code == BINVAL and not noisy
    for i in range(n):
        x[i] = 1 if next_double(s) < 0.5 else 0
    counters[C_EVALS] = 1
    counters[C_STARTED] = 1
    if is_optimal(code, x, target):
        counters[C_HIT] = 1
        return HIT
    fx = true_value(code, x, target, perm)
    fast = code == ONEMAX and not noisy
    parent = 0.0
    while True:
        flips = _mutate(x, y, rate, s)
        if noisy:
            if counters[C_EVALS] >= max_evals:
                return BUDGET
            parent = noisy_value(code, x, target, perm, kind, param, ns, scratch)
            counters[C_EVALS] += 1
        if counters[C_EVALS] >= max_evals:
            return BUDGET
        counters[C_STARTED] += 1
        counters[C_EVALS] += 1
        if flips == 0:
            # offspring equals parent: accepted, nothing changes
            if noisy:
                noisy_value(code, y, target, perm, kind, param, ns, scratch)
            continue
        if is_optimal(code, y, target):
            counters[C_HIT] = 1
            return HIT
        if fast:
            fy = float(agreement_count(y, target))
            accept = fy >= fx
        elif lex:
            accept = binval_compare(y, x, target) >= 0
            fy = 0.0
        else:
            fy = true_value(code, y, target, perm)
            if noisy:
                accept = noisy_value(code, y, target, perm, kind, param, ns, scratch) >= parent
            else:
                accept = fy >= fx
        if accept:
            for i in range(n):
                x[i] = y[i]
            fx = fy
