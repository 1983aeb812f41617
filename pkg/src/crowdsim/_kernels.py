"""Optional numba-jitted inner loops for the engine hot path.

Both kernels reduce in fixed ascending index order, so results are
bit-reproducible run to run. When numba is missing the engine falls back to
the equivalent vectorized numpy path in dynamics.py; both paths are checked
against the scalar force formulas by the test suite.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _hash_angle(id_a: np.int64, id_b: np.int64) -> float:
    lo = id_a if id_a <= id_b else id_b
    hi = id_b if id_a <= id_b else id_a
    mask = np.uint64(0xFFFFFFFF)
    h = (np.uint64(lo) * np.uint64(0x9E3779B1)
         + np.uint64(hi) * np.uint64(0x85EBCA77)) & mask
    h = h ^ (h >> np.uint64(13))
    h = (h * np.uint64(0xC2B2AE35)) & mask
    h = h ^ (h >> np.uint64(16))
    return 2.0 * np.pi * (float(h) / 4294967296.0)


@njit(cache=True)
def pair_forces(pos, vel, radius, e0, facing, ids,
                A_r, B_r, lam, k, kappa, cutoff, r_c):
    """All-pairs social/contact forces plus neighborhood sums.

    Pairs beyond the cutoff contribute exactly zero. Returns
    (rep, push, fric, nb_count, nb_sum_e, nb_sum_v).
    """
    n = pos.shape[0]
    rep = np.zeros((n, 2))
    push = np.zeros((n, 2))
    fric = np.zeros((n, 2))
    nb_count = np.zeros(n)
    nb_sum_e = np.zeros((n, 2))
    nb_sum_v = np.zeros((n, 2))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            d = np.sqrt(dx * dx + dy * dy)
            if d > cutoff:
                continue
            if d < 1e-12:
                ang = _hash_angle(ids[i], ids[j])
                # normal points toward i; sign follows the id order
                sign = 1.0 if ids[i] <= ids[j] else -1.0
                nx = sign * np.cos(ang)
                ny = sign * np.sin(ang)
            else:
                nx = dx / d
                ny = dy / d
            R = radius[i] + radius[j]
            cosphi = -(facing[i, 0] * nx + facing[i, 1] * ny)
            w = lam + (1.0 - lam) * (1.0 + cosphi) / 2.0
            rm = A_r * np.exp((R - d) / B_r) * w
            rep[i, 0] += rm * nx
            rep[i, 1] += rm * ny
            ov = R - d
            if ov > 0.0:
                pm = k * ov
                push[i, 0] += pm * nx
                push[i, 1] += pm * ny
                tx = -ny
                ty = nx
                dvt = (vel[j, 0] - vel[i, 0]) * tx + (vel[j, 1] - vel[i, 1]) * ty
                fm = kappa * ov * dvt
                fric[i, 0] += fm * tx
                fric[i, 1] += fm * ty
            if d <= r_c:
                nb_count[i] += 1.0
                nb_sum_e[i, 0] += e0[j, 0]
                nb_sum_e[i, 1] += e0[j, 1]
                nb_sum_v[i, 0] += vel[j, 0]
                nb_sum_v[i, 1] += vel[j, 1]
    return rep, push, fric, nb_count, nb_sum_e, nb_sum_v


@njit(cache=True)
def segment_forces(pos, vel, radius, facing, ids,
                   seg_a, seg_b, seg_attr_index, ages,
                   A_r, B_r, A_att, B_att, lam, decay_time, k, kappa,
                   wall_id_base):
    """Forces from all wall/attractor segments (nearest-point geometry).

    ages[i, a] is the time since pedestrian i first perceived attractive
    segment a (negative = never seen, attraction off). Returns
    (rep, att, push, fric).
    """
    n = pos.shape[0]
    s = seg_a.shape[0]
    rep = np.zeros((n, 2))
    att = np.zeros((n, 2))
    push = np.zeros((n, 2))
    fric = np.zeros((n, 2))
    for si in range(s):
        ax = seg_a[si, 0]
        ay = seg_a[si, 1]
        abx = seg_b[si, 0] - ax
        aby = seg_b[si, 1] - ay
        ab2 = abx * abx + aby * aby
        for i in range(n):
            u = ((pos[i, 0] - ax) * abx + (pos[i, 1] - ay) * aby) / ab2
            if u < 0.0:
                u = 0.0
            elif u > 1.0:
                u = 1.0
            qx = ax + u * abx
            qy = ay + u * aby
            dx = pos[i, 0] - qx
            dy = pos[i, 1] - qy
            d = np.sqrt(dx * dx + dy * dy)
            if d < 1e-12:
                ang = _hash_angle(ids[i], wall_id_base + si)
                nx = np.cos(ang)
                ny = np.sin(ang)
            else:
                nx = dx / d
                ny = dy / d
            cosphi = -(facing[i, 0] * nx + facing[i, 1] * ny)
            w = lam + (1.0 - lam) * (1.0 + cosphi) / 2.0
            surf = radius[i] - d
            rm = A_r * np.exp(surf / B_r) * w
            rep[i, 0] += rm * nx
            rep[i, 1] += rm * ny
            ai = seg_attr_index[si]
            if ai >= 0 and A_att > 0.0:
                age = ages[i, ai]
                if age >= 0.0:
                    am = A_att * np.exp(surf / B_att) * w * np.exp(-age / decay_time)
                    att[i, 0] -= am * nx
                    att[i, 1] -= am * ny
            if surf > 0.0:
                pm = k * surf
                push[i, 0] += pm * nx
                push[i, 1] += pm * ny
                tx = -ny
                ty = nx
                vt = vel[i, 0] * tx + vel[i, 1] * ty
                fm = -kappa * surf * vt
                fric[i, 0] += fm * tx
                fric[i, 1] += fm * ty
    return rep, att, push, fric
