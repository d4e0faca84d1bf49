"""Hot loops: the sparse solver's quartic objective, its gradient and the
support-restricted damped Gauss-Newton iteration, the batched power
iteration and rank-one projection step, and the elementwise passes of the
alternating-projection loops (framing, magnitude replacement, overlap-add).

Every kernel exists twice: a numba ``@njit`` version and a numpy version with
identical semantics. Set ``STFTPR_DISABLE_NUMBA=1`` (before import) to force
the numpy path. The numba path compiles on first call and caches to disk.

Arrays are passed as the real and imaginary parts of the *transposed*
measurement matrix (D x P, C-contiguous) so a support column is a
contiguous row.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("STFTPR_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrapper(f):
            return f

        return wrapper

BACKEND = "numba" if HAVE_NUMBA else "numpy"

MAX_HALVINGS = 20
STEP_TOL = 1e-10


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True, fastmath=True)
def _model_nb(Atr, Ati, idx, s_sub, u, v):
    P = Atr.shape[1]
    for i in range(P):
        u[i] = 0.0
        v[i] = 0.0
    for j in range(idx.shape[0]):
        c = s_sub[j]
        if c == 0.0:
            continue
        rr = Atr[idx[j]]
        ri = Ati[idx[j]]
        for i in range(P):
            u[i] += c * rr[i]
            v[i] += c * ri[i]


@njit(cache=True, fastmath=True)
def _objective_nb(Atr, Ati, y, idx, s_sub):
    P = Atr.shape[1]
    u = np.empty(P)
    v = np.empty(P)
    _model_nb(Atr, Ati, idx, s_sub, u, v)
    f = 0.0
    for i in range(P):
        r = y[i] - (u[i] * u[i] + v[i] * v[i])
        f += r * r
    return f


@njit(cache=True, fastmath=True)
def _gradient_nb(Atr, Ati, y, idx, s_sub):
    D, P = Atr.shape
    u = np.empty(P)
    v = np.empty(P)
    _model_nb(Atr, Ati, idx, s_sub, u, v)
    w_r = np.empty(P)
    w_i = np.empty(P)
    for i in range(P):
        r = y[i] - (u[i] * u[i] + v[i] * v[i])
        w_r[i] = -4.0 * r * u[i]
        w_i[i] = -4.0 * r * v[i]
    g = np.empty(D)
    for d in range(D):
        acc = 0.0
        rr = Atr[d]
        ri = Ati[d]
        for i in range(P):
            acc += w_r[i] * rr[i] + w_i[i] * ri[i]
        g[d] = acc
    return g


@njit(cache=True, fastmath=True)
def _cholesky_solve_nb(H, b, out):
    """Cholesky solve of H out = b; False when H is not numerically positive definite."""
    n = H.shape[0]
    Lm = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            acc = H[i, j]
            for p in range(j):
                acc -= Lm[i, p] * Lm[j, p]
            if i == j:
                if not acc > 0.0:
                    return False
                Lm[i, i] = np.sqrt(acc)
            else:
                Lm[i, j] = acc / Lm[j, j]
    z = np.empty(n)
    for i in range(n):
        acc = b[i]
        for p in range(i):
            acc -= Lm[i, p] * z[p]
        z[i] = acc / Lm[i, i]
    for i in range(n - 1, -1, -1):
        acc = z[i]
        for p in range(i + 1, n):
            acc -= Lm[p, i] * out[p]
        out[i] = acc / Lm[i, i]
    return True


@njit(cache=True, fastmath=True)
def _dgn_nb(Atr, Ati, y, idx, s0, max_iters, floor, stall, trace):
    """Damped Gauss-Newton on the coordinates ``idx``.

    Returns (s_sub, objective, accepted_steps). ``trace[0..accepted]`` holds the
    objective after each accepted step (trace[0] is the start value).
    """
    k = idx.shape[0]
    P = Atr.shape[1]
    s = s0.copy()
    u = np.empty(P)
    v = np.empty(P)
    r = np.empty(P)
    J = np.empty((k, P))
    H = np.empty((k, k))
    b = np.empty(k)
    step = np.empty(k)
    trial = np.empty(k)
    _model_nb(Atr, Ati, idx, s, u, v)
    f = 0.0
    for i in range(P):
        r[i] = y[i] - (u[i] * u[i] + v[i] * v[i])
        f += r[i] * r[i]
    trace[0] = f
    n_acc = 0
    for it in range(max_iters):
        if f <= floor:
            break
        for j in range(k):
            rr = Atr[idx[j]]
            ri = Ati[idx[j]]
            for i in range(P):
                J[j, i] = 2.0 * (u[i] * rr[i] + v[i] * ri[i])
        trace_h = 0.0
        for a in range(k):
            acc = 0.0
            for i in range(P):
                acc += J[a, i] * r[i]
            b[a] = acc
            for c in range(a + 1):
                acc = 0.0
                for i in range(P):
                    acc += J[a, i] * J[c, i]
                H[a, c] = acc
                H[c, a] = acc
            trace_h += H[a, a]
        if trace_h <= 0.0:
            break
        if not _cholesky_solve_nb(H, b, step):
            lam = 1e-12 * trace_h / k
            while True:
                for a in range(k):
                    H[a, a] += lam
                if _cholesky_solve_nb(H, b, step):
                    break
                lam *= 10.0
        t = 1.0
        accepted = False
        f_new = f
        for h in range(MAX_HALVINGS + 1):
            for a in range(k):
                trial[a] = s[a] + t * step[a]
            f_new = _objective_nb(Atr, Ati, y, idx, trial)
            if f_new < f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        snorm = 0.0
        for a in range(k):
            snorm += (t * step[a]) ** 2
            s[a] = trial[a]
        decrease = f - f_new
        f = f_new
        n_acc += 1
        trace[n_acc] = f
        if np.sqrt(snorm) < STEP_TOL or decrease <= stall * (f + decrease):
            break
        _model_nb(Atr, Ati, idx, s, u, v)
        for i in range(P):
            r[i] = y[i] - (u[i] * u[i] + v[i] * v[i])
    return s, f, n_acc


@njit(cache=True, fastmath=True)
def _dominant_eigvec_nb(C, u0, max_steps, tol):
    """Power iteration on each Hermitian PSD matrix C[r] from the start u0[r]."""
    R, W, _ = C.shape
    out = u0.copy()
    tmp = np.empty(W, dtype=np.complex128)
    for r in range(R):
        u = out[r]
        nrm = 0.0
        for a in range(W):
            nrm += u[a].real ** 2 + u[a].imag ** 2
        if nrm == 0.0:
            continue
        nrm = np.sqrt(nrm)
        for a in range(W):
            u[a] /= nrm
        for _ in range(max_steps):
            nrm = 0.0
            for a in range(W):
                acc = 0.0 + 0.0j
                for b in range(W):
                    acc += C[r, a, b] * u[b]
                tmp[a] = acc
                nrm += acc.real ** 2 + acc.imag ** 2
            if nrm == 0.0:
                break
            nrm = np.sqrt(nrm)
            overlap = 0.0 + 0.0j
            for a in range(W):
                tmp[a] /= nrm
                overlap += np.conj(u[a]) * tmp[a]
                u[a] = tmp[a]
            if 1.0 - abs(overlap) < tol:
                break
    return out


@njit(cache=True, fastmath=True)
def _rank_one_nb(T, g, u0, max_steps, tol):
    """Per batch entry: dominant left singular vector u of T[r] (warm start u0[r])
    and the signal factor (g^H u)(u^H T[r]) / |g|^2."""
    R, W, N = T.shape
    # real and imaginary planes keep the Gram loop vectorizable
    Tr = np.empty((W, N))
    Ti = np.empty((W, N))
    C = np.empty((R, W, W), dtype=np.complex128)
    for r in range(R):
        for a in range(W):
            for n in range(N):
                Tr[a, n] = T[r, a, n].real
                Ti[a, n] = T[r, a, n].imag
        for a in range(W):
            for b in range(a + 1):
                sr = 0.0
                si = 0.0
                for n in range(N):
                    sr += Tr[a, n] * Tr[b, n] + Ti[a, n] * Ti[b, n]
                    si += Ti[a, n] * Tr[b, n] - Tr[a, n] * Ti[b, n]
                C[r, a, b] = complex(sr, si)
                C[r, b, a] = complex(sr, -si)
    u = _dominant_eigvec_nb(C, u0, max_steps, tol)
    gg = 0.0
    for a in range(W):
        gg += g[a].real ** 2 + g[a].imag ** 2
    x = np.zeros((R, N), dtype=np.complex128)
    for r in range(R):
        gu = 0.0 + 0.0j
        for a in range(W):
            gu += np.conj(g[a]) * u[r, a]
        scale = gu / gg
        for a in range(W):
            c = np.conj(u[r, a]) * scale
            for n in range(N):
                x[r, n] += c * T[r, a, n]
    return x, u


# -- spectrogram iteration helpers (batched over restarts) ------------------


@njit(cache=True, fastmath=True)
def _frame_nb(x, sample_index, taps, out):
    """out[r, m, j] = x[r, sample_index[m, j]] * taps[j]; out is zero past column W."""
    R = x.shape[0]
    M, W = sample_index.shape
    for r in range(R):
        for m in range(M):
            for j in range(W):
                out[r, m, j] = x[r, sample_index[m, j]] * taps[j]


@njit(cache=True, fastmath=True)
def _residual_nb(F, sqrt_y):
    """sum over (m, k) of (sqrt_y - |F|)^2 for each r."""
    R, M, K = F.shape
    out = np.empty(R)
    for r in range(R):
        acc = 0.0
        for m in range(M):
            for k in range(K):
                v = F[r, m, k]
                d = sqrt_y[m, k] - np.sqrt(v.real * v.real + v.imag * v.imag)
                acc += d * d
        out[r] = acc
    return out


@njit(cache=True, fastmath=True)
def _magnitude_step_nb(F, sqrt_y, cramp, zero, out):
    """Keep the phase of F, impose sqrt_y; where |F| < zero use sqrt_y * cramp.

    F are raw section DFTs (STFT values without the unit ramp). The ramp
    would be undone before the inverse DFT anyway, so only the phase-1
    fallback (phase 1 for the STFT value) needs it.
    """
    R, M, K = F.shape
    for r in range(R):
        for m in range(M):
            for k in range(K):
                v = F[r, m, k]
                a = np.sqrt(v.real * v.real + v.imag * v.imag)
                if a >= zero:
                    out[r, m, k] = v * (sqrt_y[m, k] / a)
                else:
                    out[r, m, k] = sqrt_y[m, k] * cramp[k]


@njit(cache=True, fastmath=True)
def _overlap_add_nb(S, sample_index, ctaps, coverage, out):
    R = S.shape[0]
    M, W = sample_index.shape
    N = out.shape[1]
    for r in range(R):
        for n in range(N):
            out[r, n] = 0.0
        for m in range(M):
            for j in range(W):
                out[r, sample_index[m, j]] += S[r, m, j] * ctaps[j]
        for n in range(N):
            out[r, n] /= coverage[n]


@njit(cache=True, fastmath=True)
def _align_nb(x, S, sample_index, taps, T):
    """T[r, j, n] = taps[j] x[r, n], then T[r, j, sample_index[m, j]] = S[r, m, j]."""
    R, N = x.shape
    M, W = sample_index.shape
    for r in range(R):
        for j in range(W):
            for n in range(N):
                T[r, j, n] = taps[j] * x[r, n]
        for m in range(M):
            for j in range(W):
                T[r, j, sample_index[m, j]] = S[r, m, j]


# ---------------------------------------------------------------------------
# numpy fallbacks


def _objective_np(Atr, Ati, y, idx, s_sub):
    u = s_sub @ Atr[idx]
    v = s_sub @ Ati[idx]
    r = y - (u * u + v * v)
    return float(r @ r)


def _gradient_np(Atr, Ati, y, idx, s_sub):
    u = s_sub @ Atr[idx]
    v = s_sub @ Ati[idx]
    r = y - (u * u + v * v)
    return Atr @ (-4.0 * r * u) + Ati @ (-4.0 * r * v)


def _dgn_np(Atr, Ati, y, idx, s0, max_iters, floor, stall, trace):
    Ar = Atr[idx]
    Ai = Ati[idx]
    k = idx.shape[0]
    s = np.array(s0, dtype=float)
    u, v = s @ Ar, s @ Ai
    r = y - (u * u + v * v)
    f = float(r @ r)
    trace[0] = f
    n_acc = 0
    for _ in range(max_iters):
        if f <= floor:
            break
        J = 2.0 * (Ar * u + Ai * v)
        H = J @ J.T
        b = J @ r
        tr = float(np.trace(H))
        if tr <= 0.0:
            break
        try:
            C = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            lam = 1e-12 * tr / k
            while True:
                H = H + lam * np.eye(k)
                try:
                    C = np.linalg.cholesky(H)
                    break
                except np.linalg.LinAlgError:
                    lam *= 10.0
        step = np.linalg.solve(C.T, np.linalg.solve(C, b))
        t = 1.0
        accepted = False
        for _h in range(MAX_HALVINGS + 1):
            trial = s + t * step
            tu, tv = trial @ Ar, trial @ Ai
            tr_res = y - (tu * tu + tv * tv)
            f_new = float(tr_res @ tr_res)
            if f_new < f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        snorm = float(np.linalg.norm(t * step))
        decrease = f - f_new
        s, u, v, r, f = trial, tu, tv, tr_res, f_new
        n_acc += 1
        trace[n_acc] = f
        if snorm < STEP_TOL or decrease <= stall * (f + decrease):
            break
    return s, f, n_acc


def _dominant_eigvec_np(C, u0, max_steps, tol):
    u = np.array(u0, dtype=complex)
    nrm = np.linalg.norm(u, axis=-1)
    live = nrm > 0
    u[live] /= nrm[live, None]
    for _ in range(max_steps):
        if not live.any():
            break
        v = np.einsum("rab,rb->ra", C[live], u[live])
        vn = np.linalg.norm(v, axis=-1)
        ok = vn > 0
        idx = np.flatnonzero(live)
        v[ok] /= vn[ok, None]
        overlap = np.abs(np.einsum("ra,ra->r", np.conj(u[idx[ok]]), v[ok]))
        u[idx[ok]] = v[ok]
        done = np.zeros(idx.size, dtype=bool)
        done[~ok] = True
        done[np.flatnonzero(ok)[1.0 - overlap < tol]] = True
        live[idx[done]] = False
    return u


def _rank_one_np(T, g, u0, max_steps, tol):
    C = T @ np.conj(np.swapaxes(T, -1, -2))
    u = _dominant_eigvec_np(C, u0, max_steps, tol)
    row = np.einsum("rj,rjn->rn", np.conj(u), T)
    gu = u @ np.conj(g)
    return (gu / np.vdot(g, g).real)[:, None] * row, u


def _frame_np(x, sample_index, taps, out):
    out[..., : sample_index.shape[1]] = x[:, sample_index] * taps


def _residual_np(F, sqrt_y):
    return np.sum((sqrt_y - np.abs(F)) ** 2, axis=(-2, -1))


def _magnitude_step_np(F, sqrt_y, cramp, zero, out):
    a = np.abs(F)
    np.divide(F, a, out=out, where=a >= zero)
    out[...] = np.where(a >= zero, out, cramp)
    out *= sqrt_y


def _overlap_add_np(S, sample_index, ctaps, coverage, out):
    R, N = out.shape
    w = (S[..., : sample_index.shape[1]] * ctaps).reshape(R, -1)
    bins = (sample_index.ravel()[None, :] + N * np.arange(R)[:, None]).ravel()
    re = np.bincount(bins, weights=w.real.ravel(), minlength=R * N)
    im = np.bincount(bins, weights=w.imag.ravel(), minlength=R * N)
    out[:] = (re + 1j * im).reshape(R, N) / coverage


def _align_np(x, S, sample_index, taps, T):
    T[:] = taps[:, None] * x[:, None, :]
    j = np.broadcast_to(np.arange(sample_index.shape[1]), sample_index.shape)
    T[:, j, sample_index] = S[..., : sample_index.shape[1]]


_NAMES = ("objective", "gradient", "dgn", "dominant_eigvec", "rank_one", "frame", "residual",
          "magnitude_step", "overlap_add", "align")
# both variants, for benchmarks and cross-checks
NUMPY_KERNELS = {n: globals()[f"_{n}_np"] for n in _NAMES}
NUMBA_KERNELS = {n: globals()[f"_{n}_nb"] for n in _NAMES} if HAVE_NUMBA else None

_active = NUMBA_KERNELS if HAVE_NUMBA else NUMPY_KERNELS
objective_sub = _active["objective"]
gradient_sub = _active["gradient"]
dgn_sub = _active["dgn"]
dominant_eigvec = _active["dominant_eigvec"]
rank_one = _active["rank_one"]
frame = _active["frame"]
residual = _active["residual"]
magnitude_step = _active["magnitude_step"]
overlap_add = _active["overlap_add"]
align = _active["align"]
