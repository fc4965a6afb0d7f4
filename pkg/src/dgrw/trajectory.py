"""Monte Carlo trajectories of the jump process for Gaussian states.

The engine works in scaled units (hbar = r_c = lambda = 1, mass = 1/eps_hat)
and keeps the Gaussian parameters as five real arrays

    ar, ai  real and imaginary part of alpha
    b       beta
    gr, gi  real and imaginary part of gamma

so that a whole chunk of trajectories advances in lockstep over the jump
index.  Only +, -, *, / and sqrt touch the state, which keeps every result
bit-identical between the scalar path, the vectorized path and any number
of worker threads.

Random streams: trajectory i uses ``SeedSequence(base_seed + i).spawn(2)``,
the first child for waiting times and the second for jump positions.
Waiting times are therefore shared with the position-free fast path.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams
from .gaussian import GaussianState, Observables, to_scaled, from_scaled

CHUNK = 256
OBSERVABLES = ("mean_x", "mean_p", "energy", "var_x_psi", "var_x_rho", "var_traj_mean_x")
UNIT_KIND = {
    "mean_x": "length",
    "mean_p": "momentum",
    "energy": "energy",
    "var_x_psi": "variance",
    "var_x_rho": "variance",
    "var_traj_mean_x": "variance",
}


def default_threads():
    env = os.environ.get("DGRW_THREADS")
    if env:
        return max(1, int(env))
    return 1


# -- random streams ----------------------------------------------------------------

def _streams(seed):
    times_ss, pos_ss = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.Generator(np.random.PCG64(times_ss)), np.random.Generator(np.random.PCG64(pos_ss))


def jump_times(rng, horizon):
    """Poisson(1) arrival times up to ``horizon`` (scaled time)."""
    if horizon <= 0:
        return np.empty(0)
    block = int(horizon + 5.0 * math.sqrt(horizon) + 16)
    draws = rng.standard_exponential(block)
    times = np.cumsum(draws)
    while times[-1] <= horizon:
        draws = np.concatenate([draws, rng.standard_exponential(block)])
        times = np.cumsum(draws)
    return times[: np.searchsorted(times, horizon, side="right")]


# -- scaled kernels ----------------------------------------------------------------

@dataclass
class _State:
    ar: np.ndarray
    ai: np.ndarray
    b: np.ndarray
    gr: np.ndarray
    gi: np.ndarray

    @classmethod
    def from_gaussian(cls, s: GaussianState, n=1):
        full = np.full
        return cls(full(n, np.real(s.alpha)), full(n, np.imag(s.alpha)), full(n, float(s.beta)),
                   full(n, np.real(s.gamma)), full(n, np.imag(s.gamma)))

    def to_gaussian(self, i=0):
        return GaussianState(complex(self.ar[i], self.ai[i]), self.b[i], complex(self.gr[i], self.gi[i]))

    def take(self, idx):
        return _State(self.ar[idx], self.ai[idx], self.b[idx], self.gr[idx], self.gi[idx])


class _Kernel:
    def __init__(self, k, eps_hat, hamiltonian=True):
        if not 0.0 <= k < 1.0:
            raise ValueError(f"k = {k!r} outside [0, 1)")
        self.k = k
        self.eps_hat = eps_hat if hamiltonian else 0.0
        self.a = (1.0 - k) / (1.0 + k)
        self.a2 = self.a * self.a
        self.inv_s2 = 1.0 / ((1.0 + k) * (1.0 + k))
        self.jump_var_extra = 0.5 * (1.0 - k) * (1.0 - k)

    def free(self, st: _State, dt):
        st.ar = st.ar + st.b * self.eps_hat * dt
        st.gi = st.gi + self.eps_hat * dt

    def free_copy(self, st: _State, dt):
        return _State(st.ar + st.b * self.eps_hat * dt, st.ai, st.b, st.gr, st.gi + self.eps_hat * dt)

    def gamma_jump(self, gr, gi):
        den = gr * gr + gi * gi
        cr = gr / den
        ci = -gi / den
        nr = self.a2 * cr + self.inv_s2
        ni = self.a2 * ci
        d2 = nr * nr + ni * ni
        return cr, ci, nr, ni, d2

    def jump_density(self, st: _State):
        mean = st.ar + st.gi / st.gr * st.ai
        var = (st.gr * st.gr + st.gi * st.gi) / (2.0 * st.gr) + self.jump_var_extra
        return mean, var

    def jump(self, st: _State, y):
        cr, ci, nr, ni, d2 = self.gamma_jump(st.gr, st.gi)
        g_re = self.a * (cr * nr + ci * ni) / d2
        g_im = self.a * (ci * nr - cr * ni) / d2
        dr = st.ar - y
        di = st.ai
        st.ar = y + g_re * dr - g_im * di
        st.ai = g_re * di + g_im * dr
        st.b = self.a * st.b
        st.gr = nr / d2
        st.gi = -ni / d2

    def width_jump(self, st: _State):
        _, _, nr, ni, d2 = self.gamma_jump(st.gr, st.gi)
        st.gr = nr / d2
        st.gi = -ni / d2

    def observables(self, st: _State):
        mean_x = st.ar + st.gi / st.gr * st.ai
        var_x = (st.gr * st.gr + st.gi * st.gi) / (2.0 * st.gr)
        mean_p = st.b + st.ai / st.gr
        var_p = 1.0 / (2.0 * st.gr)
        return mean_x, var_x, mean_p, var_p


def _kernel_for(params: ModelParams, hamiltonian=True):
    return _Kernel(params.k, params.eps_hat, hamiltonian)


def _to_si_observables(params: ModelParams, mean_x, var_x, mean_p, var_p):
    r, hb = params.r_c, params.hbar
    pu = hb / r
    mp = mean_p * pu
    vp = var_p * pu * pu
    return Observables(mean_x * r, var_x * r * r, mp, vp, (vp + mp * mp) / (2.0 * params.mass))


# -- single trajectories -----------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    """Jump events of one trajectory.

    Times and positions are stored in scaled units (1/lambda and r_c) so
    that replaying a record reproduces the simulated state exactly.
    """

    times_scaled: np.ndarray
    positions_scaled: np.ndarray
    t_final: float
    seed: int
    r_c: float = 1.0
    lambda_rate: float = 1.0

    @property
    def times(self):
        return self.times_scaled / self.lambda_rate

    @property
    def positions(self):
        return self.positions_scaled * self.r_c

    @property
    def events(self):
        return list(zip(self.times.tolist(), self.positions.tolist()))

    @property
    def n_jumps(self):
        return int(self.times_scaled.size)

    def truncated(self, t):
        """Record of the events strictly before ``t`` (seconds), ending at ``t``.

        Matches the ensemble engine, which reports the state on a grid time
        before any jump that lands exactly on it.
        """
        m = int(np.searchsorted(self.times_scaled, t * self.lambda_rate, side="left"))
        return TrajectoryRecord(self.times_scaled[:m], self.positions_scaled[:m], float(t),
                                self.seed, self.r_c, self.lambda_rate)


def sample_trajectory(params: ModelParams, s0: GaussianState, t_final, seed, hamiltonian=True):
    """Simulate one trajectory up to ``t_final``.

    Returns the record and the post-jump observables of every event.  With
    ``hamiltonian=False`` the free evolution between jumps is switched off.
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    kern = _kernel_for(params, hamiltonian)
    t_rng, y_rng = _streams(seed)
    horizon = t_final * params.lambda_rate
    times = jump_times(t_rng, horizon)
    z = y_rng.standard_normal(times.size)
    st = _State.from_gaussian(to_scaled(s0, params))
    ys = np.empty(times.size)
    per_event = []
    tcur = 0.0
    for j in range(times.size):
        kern.free(st, times[j] - tcur)
        tcur = times[j]
        mean, var = kern.jump_density(st)
        y = mean + np.sqrt(var) * z[j]
        ys[j] = y[0]
        kern.jump(st, y)
        per_event.append(_to_si_observables(params, *(v[0] for v in kern.observables(st))))
    rec = TrajectoryRecord(times, ys, float(t_final), int(seed), params.r_c, params.lambda_rate)
    return rec, per_event


def resolve_trajectory(record: TrajectoryRecord, s0: GaussianState, params: ModelParams,
                       t=None, hamiltonian=True) -> GaussianState:
    """Replay the jumps of ``record`` on ``s0`` and free-evolve to ``t`` (default t_final)."""
    ts = np.asarray(record.times_scaled, dtype=float)
    ys = np.asarray(record.positions_scaled, dtype=float)
    if ts.shape != ys.shape:
        raise ValueError("times and positions differ in length")
    if ts.size and (np.any(np.diff(ts) <= 0) or ts[0] < 0):
        raise ValueError("events are not strictly increasing")
    t_end = (record.t_final if t is None else t) * params.lambda_rate
    if ts.size and ts[-1] > t_end:
        raise ValueError("events beyond the requested time")
    kern = _kernel_for(params, hamiltonian)
    st = _State.from_gaussian(to_scaled(s0, params))
    tcur = 0.0
    for j in range(ts.size):
        kern.free(st, ts[j] - tcur)
        tcur = ts[j]
        kern.jump(st, ys[j:j + 1])
    kern.free(st, t_end - tcur)
    return from_scaled(st.to_gaussian(), params)


# -- closed forms along a record -------------------------------------------------------

def gamma_nested(record: TrajectoryRecord, gamma0: complex, params: ModelParams, t=None):
    """Width at time t from composing the per-interval maps G_j."""
    k = params.k
    eh = params.eps_hat
    a2 = ((1 - k) / (1 + k)) ** 2
    s2 = (1 + k) ** 2
    x = complex(gamma0) / params.r_c**2
    prev = 0.0
    for tj in record.times_scaled:
        x = 1.0 / ((x + 1j * eh * (tj - prev)) ** -1 * a2 + 1.0 / s2)
        prev = tj
    t_end = (record.t_final if t is None else t) * params.lambda_rate
    return (x + 1j * eh * (t_end - prev)) * params.r_c**2


def beta_closed_form(m, beta0, k):
    return beta0 * ((1.0 - k) / (1.0 + k)) ** m


def alpha_closed_form(record: TrajectoryRecord, s0: GaussianState, params: ModelParams, t=None):
    """alpha at time t as an explicit sum over the events.

    The momentum entering the drift after jump i is the post-jump value
    beta * a**i.
    """
    k = params.k
    eh = params.eps_hat
    a = (1 - k) / (1 + k)
    sc = to_scaled(s0, params)
    ts = record.times_scaled
    ys = record.positions_scaled
    m = ts.size
    t_end = (record.t_final if t is None else t) * params.lambda_rate
    taus = np.diff(np.concatenate([[0.0], ts]))
    # widths just before each jump, and the weights g_j
    gs = []
    x = complex(sc.gamma)
    for j in range(m):
        pre = x + 1j * eh * taus[j]
        post = 1.0 / (a * a / pre + 1.0 / (1 + k) ** 2)
        gs.append(a * post / pre)
        x = post
    beta = float(sc.beta)
    tail = t_end - (ts[-1] if m else 0.0)
    if m == 0:
        return (complex(sc.alpha) + beta * eh * tail) * params.r_c
    total = np.prod(gs) * (complex(sc.alpha) + beta * eh * taus[0])
    for i in range(1, m):
        term = (1 - gs[i - 1]) * ys[i - 1] + beta * a**i * eh * taus[i]
        total += np.prod(gs[i:]) * term
    total += (1 - gs[m - 1]) * ys[m - 1] + beta * a**m * eh * tail
    return total * params.r_c


# -- streaming moments -----------------------------------------------------------------

@dataclass
class _Moments:
    """Central sums per grid time; merged pairwise in a fixed order."""

    n: int
    mean: dict
    m2: dict
    m3x: np.ndarray
    m4x: np.ndarray
    cvx: np.ndarray
    cvxx: np.ndarray

    @classmethod
    def from_block(cls, obs):
        x, v = obs["mean_x"], obs["var_x"]
        n = x.shape[1]
        mean = {key: val.sum(axis=1) / n for key, val in obs.items()}
        dev = {key: val - mean[key][:, None] for key, val in obs.items()}
        m2 = {key: (d * d).sum(axis=1) for key, d in dev.items()}
        dx = dev["mean_x"]
        dv = dev["var_x"]
        dx2 = dx * dx
        return cls(n, mean, m2, (dx2 * dx).sum(axis=1), (dx2 * dx2).sum(axis=1),
                   (dv * dx).sum(axis=1), (dv * dx2).sum(axis=1))

    def merge(self, o: "_Moments"):
        na, nb = self.n, o.n
        n = na + nb
        dx = o.mean["mean_x"] - self.mean["mean_x"]
        dv = o.mean["var_x"] - self.mean["var_x"]
        m2x_a, m2x_b = self.m2["mean_x"], o.m2["mean_x"]
        m3 = (self.m3x + o.m3x + dx**3 * na * nb * (na - nb) / n**2
              + 3.0 * dx * (na * m2x_b - nb * m2x_a) / n)
        m4 = (self.m4x + o.m4x + dx**4 * na * nb * (na * na - na * nb + nb * nb) / n**3
              + 6.0 * dx * dx * (na * na * m2x_b + nb * nb * m2x_a) / n**2
              + 4.0 * dx * (na * o.m3x - nb * self.m3x) / n)
        # shifts of each part's means to the pooled means
        sva, sxa = nb * dv / n, nb * dx / n
        svb, sxb = -na * dv / n, -na * dx / n
        cvxx = (self.cvxx - 2.0 * sxa * self.cvx - sva * m2x_a - na * sva * sxa * sxa
                + o.cvxx - 2.0 * sxb * o.cvx - svb * m2x_b - nb * svb * sxb * sxb)
        cvx = self.cvx + o.cvx + dv * dx * na * nb / n
        mean, m2 = {}, {}
        for key in self.mean:
            d = o.mean[key] - self.mean[key]
            mean[key] = self.mean[key] + d * nb / n
            m2[key] = self.m2[key] + o.m2[key] + d * d * na * nb / n
        return _Moments(n, mean, m2, m3, m4, cvx, cvxx)


# -- ensembles -----------------------------------------------------------------------

def _chunk_paths(seeds, horizon, with_positions=True):
    times, normals = [], []
    for s in seeds:
        t_rng, y_rng = _streams(s)
        ts = jump_times(t_rng, horizon)
        times.append(ts)
        if with_positions:
            normals.append(y_rng.standard_normal(ts.size))
    return times, normals


def _pad(arrays, fill):
    width = max((a.size for a in arrays), default=0) + 1
    out = np.full((len(arrays), width), fill)
    for i, a in enumerate(arrays):
        out[i, : a.size] = a
    return out


def _run_chunk(kern: _Kernel, s0: _State, tg, seeds, horizon, positions=True):
    """Observables of every trajectory in ``seeds`` at the scaled grid ``tg``."""
    n = len(seeds)
    ng = tg.size
    times, normals = _chunk_paths(seeds, horizon, positions)
    tpad = _pad(times, np.inf)
    zpad = _pad(normals, 0.0) if positions else None
    st = s0.take(np.zeros(n, dtype=np.int64))
    tcur = np.zeros(n)
    lo = np.zeros(n, dtype=np.int64)
    names = ("mean_x", "var_x", "mean_p", "var_p")
    out = {key: np.empty((ng, n)) for key in names}
    for j in range(tpad.shape[1]):
        tj = tpad[:, j]
        hi = np.searchsorted(tg, tj, side="left")
        counts = hi - lo
        total = int(counts.sum())
        if total:
            rows = np.repeat(np.arange(n), counts)
            starts = np.cumsum(counts) - counts
            cols = lo[rows] + (np.arange(total) - starts[rows])
            snap = kern.free_copy(st.take(rows), tg[cols] - tcur[rows])
            if positions:
                vals = kern.observables(snap)
            else:
                vals = (None, (snap.gr * snap.gr + snap.gi * snap.gi) / (2.0 * snap.gr), None, None)
            for key, v in zip(names, vals):
                if v is not None:
                    out[key][cols, rows] = v
        lo = hi
        act = np.nonzero(np.isfinite(tj))[0]
        if act.size == 0:
            break
        sub = st.take(act)
        kern.free(sub, tj[act] - tcur[act])
        if positions:
            mean, var = kern.jump_density(sub)
            y = mean + np.sqrt(var) * zpad[act, j]
            kern.jump(sub, y)
        else:
            kern.width_jump(sub)
        st.ar[act], st.ai[act], st.b[act], st.gr[act], st.gi[act] = sub.ar, sub.ai, sub.b, sub.gr, sub.gi
        tcur[act] = tj[act]
    return out


def _chunks(n_traj, chunk=CHUNK):
    return [(i, min(i + chunk, n_traj)) for i in range(0, n_traj, chunk)]


def _map_chunks(fn, spans, threads):
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(spans) == 1:
        return [fn(sp) for sp in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, spans))


@dataclass
class EnsembleSeries:
    t_grid: np.ndarray
    n_traj: int
    estimate: dict = field(default_factory=dict)
    std_error: dict = field(default_factory=dict)

    def to_rows(self):
        for i, t in enumerate(self.t_grid):
            for key in self.estimate:
                yield float(t), key, float(self.estimate[key][i]), float(self.std_error[key][i])

    def to_csv(self, path=None, extra_rows=()):
        lines = ["t,observable,estimate,std_error"]
        for t, key, est, se in list(self.to_rows()) + list(extra_rows):
            lines.append(f"{t:.17g},{key},{est:.17g},{se:.17g}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _sorted_grid(t_grid):
    tg = np.asarray(t_grid, dtype=float)
    if tg.ndim != 1 or np.any(np.diff(tg) < 0) or np.any(tg < 0):
        raise ValueError("t_grid must be a sorted 1-D array of non-negative times")
    return tg


def ensemble_statistics(params: ModelParams, s0: GaussianState, t_grid, n_traj, base_seed,
                        threads=None, chunk=CHUNK, hamiltonian=True) -> EnsembleSeries:
    """Ensemble means and spreads of per-trajectory observables on ``t_grid``."""
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    tg_si = _sorted_grid(t_grid)
    tg = tg_si * params.lambda_rate
    horizon = float(tg[-1]) if tg.size else 0.0
    kern = _kernel_for(params, hamiltonian)
    st0 = _State.from_gaussian(to_scaled(s0, params))

    def work(span):
        seeds = [base_seed + i for i in range(*span)]
        o = _run_chunk(kern, st0, tg, seeds, horizon)
        energy = 0.5 * params.eps_hat * (o["var_p"] + o["mean_p"] ** 2)
        blk = {"mean_x": o["mean_x"], "var_x": o["var_x"], "mean_p": o["mean_p"], "energy": energy}
        return _Moments.from_block(blk)

    parts = _map_chunks(work, _chunks(n_traj, chunk), threads)
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    return _series_from_moments(acc, tg_si, params)


def _series_from_moments(acc: _Moments, tg_si, params: ModelParams):
    n = acc.n
    nan = np.full(tg_si.shape, np.nan)
    est, se = {}, {}

    def sample_se(m2):
        if n < 2:
            return nan.copy()
        return np.sqrt(m2 / (n - 1) / n)

    pop_var_x = acc.m2["mean_x"] / n
    est["mean_x"] = acc.mean["mean_x"]
    se["mean_x"] = sample_se(acc.m2["mean_x"])
    est["mean_p"] = acc.mean["mean_p"]
    se["mean_p"] = sample_se(acc.m2["mean_p"])
    est["energy"] = acc.mean["energy"]
    se["energy"] = sample_se(acc.m2["energy"])
    est["var_x_psi"] = acc.mean["var_x"]
    se["var_x_psi"] = sample_se(acc.m2["var_x"])
    est["var_x_rho"] = acc.mean["var_x"] + pop_var_x
    est["var_traj_mean_x"] = pop_var_x
    if n < 2:
        se["var_x_rho"] = nan.copy()
        se["var_traj_mean_x"] = nan.copy()
    else:
        var_d2 = np.maximum(acc.m4x / n - pop_var_x**2, 0.0)
        var_v = acc.m2["var_x"] / n
        cov = acc.cvxx / n
        se["var_traj_mean_x"] = np.sqrt(var_d2 / (n - 1))
        se["var_x_rho"] = np.sqrt(np.maximum(var_v + var_d2 + 2.0 * cov, 0.0) / (n - 1))
    scale = _si_scales(params)
    series = EnsembleSeries(tg_si, n)
    for key in OBSERVABLES:
        f = scale[UNIT_KIND[key]]
        series.estimate[key] = est[key] * f
        series.std_error[key] = se[key] * f
    return series


def _si_scales(params: ModelParams):
    r = params.r_c
    return {
        "length": r,
        "variance": r * r,
        "momentum": params.hbar / r,
        "energy": params.hbar * params.lambda_rate,
    }


def expected_variance_timeonly(params: ModelParams, gamma0, t_grid, n_traj, seed, threads=None,
                               chunk=CHUNK):
    """E[(Delta_psi X)^2] on ``t_grid`` sampling jump times only.

    Returns (estimate, std_error) in m^2.  Uses the same waiting-time stream
    as ``ensemble_statistics`` with the same seed.
    """
    tg_si = _sorted_grid(t_grid)
    tg = tg_si * params.lambda_rate
    horizon = float(tg[-1]) if tg.size else 0.0
    kern = _kernel_for(params)
    st0 = _State.from_gaussian(to_scaled(GaussianState(0.0, 0.0, gamma0), params))

    def work(span):
        seeds = [seed + i for i in range(*span)]
        v = _run_chunk(kern, st0, tg, seeds, horizon, positions=False)["var_x"]
        m = v.sum(axis=1) / v.shape[1]
        d = v - m[:, None]
        return v.shape[1], m, (d * d).sum(axis=1)

    parts = _map_chunks(work, _chunks(n_traj, chunk), threads)
    n, mean, m2 = parts[0]
    for nb, mb, m2b in parts[1:]:
        tot = n + nb
        d = mb - mean
        mean = mean + d * nb / tot
        m2 = m2 + m2b + d * d * n * nb / tot
        n = tot
    se = np.sqrt(m2 / (n - 1) / n) if n > 1 else np.full(tg.shape, np.nan)
    r2 = params.r_c**2
    return mean * r2, se * r2


def jump_counts(params: ModelParams, t_final, n_traj, base_seed):
    """Number of jumps up to ``t_final`` for each trajectory seed."""
    horizon = t_final * params.lambda_rate
    return np.array([jump_times(_streams(base_seed + i)[0], horizon).size for i in range(n_traj)])
