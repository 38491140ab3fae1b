"""Compiled inner loop for batched integration.

The kernel mirrors the numpy reference in `solver._integrate` operation for
operation (same expressions, same evaluation order) so the two backends
produce the same trajectories; a cross-check test pins them together.
Samples are integrated one after another, which keeps per-sample results
independent of how work is chunked.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


@njit(cache=True)
def integrate_batch(
    w0,            # (B, 3, K+1) initial states
    coarse,        # (B, NT+1) inflow knots, knot j at time j*m*dt
    m,             # fine steps per coarse interval
    dt,            # uniform time increment
    n_max,         # uniform step count
    t_end,         # horizon
    dx,
    gamma,
    rho0,
    p0,
    ratio_int,     # (K-1,) A'/A at interior midpoints
    profile_int,   # (K-1,) heat spatial factor (zeros when fuel is off)
    tau,
    burst,
    uniform,       # bool: uniform vs CFL-adaptive stepping
    threshold,
    monitor_cell,
    stop_on_cross,
    record_m1,     # bool: fill m1_out[j, n] with the monitored Mach at level n
    m1_out,        # (B, n_max+1) when record_m1, else (B, 1) dummy
):
    b, _, kk1 = w0.shape
    kk = kk1 - 1
    nt = coarse.shape[1] - 1
    cfl = 0.8
    e_coeff = p0 / (gamma - 1.0)
    tiny = 1e-15 * max(t_end, dt)

    out_min = np.full(b, np.inf)
    out_crossed = np.zeros(b, np.bool_)
    out_cross_t = np.full(b, np.nan)
    out_invalid = np.zeros(b, np.bool_)
    out_invalid_t = np.full(b, np.nan)
    out_max_cfl = np.zeros(b)
    out_n = np.zeros(b, np.int64)
    w_final = np.empty_like(w0)

    u = np.empty(kk1)
    p = np.empty(kk1)
    c = np.empty(kk1)
    s = np.empty(kk1)
    f0 = np.empty(kk1)
    f1 = np.empty(kk1)
    f2 = np.empty(kk1)
    g0 = np.empty(kk)
    g1 = np.empty(kk)
    g2 = np.empty(kk)

    for j in range(b):
        w = w0[j].copy()
        wn = np.empty_like(w)
        t = 0.0
        n = 0

        ok = True
        for k in range(kk1):
            rho = w[0, k]
            u[k] = w[1, k] / rho
            p[k] = (gamma - 1.0) * (w[2, k] - 0.5 * w[1, k] * u[k])
            c[k] = np.sqrt(gamma * p[k] / rho)
            s[k] = abs(c[k] + u[k])
            if not (rho > 0.0 and p[k] > 0.0 and np.isfinite(p[k])):
                ok = False
        if not ok:
            out_invalid[j] = True
            out_invalid_t[j] = 0.0
            w_final[j] = w
            continue

        while True:
            smax = s[0]
            for k in range(1, kk1):
                if s[k] > smax:
                    smax = s[k]
            if uniform:
                if n >= n_max:
                    break
                h = dt
                # inflow at fine index n+1, exact integer weights
                idx = n + 1
                jj = idx // m
                if jj >= nt:
                    u_next = coarse[j, nt]
                else:
                    lam = (idx % m) / m
                    u_next = (1.0 - lam) * coarse[j, jj] + lam * coarse[j, jj + 1]
            else:
                h = cfl * dx / smax
                rem = t_end - t
                if rem < h:
                    h = rem
                if h < 0.0:
                    h = 0.0
                # inflow at time t+h on the same polyline
                pos = (t + h) / (m * dt)
                if pos < 0.0:
                    pos = 0.0
                elif pos > nt:
                    pos = float(nt)
                jj = int(pos)
                if jj > nt - 1:
                    jj = nt - 1
                lam = pos - jj
                u_next = (1.0 - lam) * coarse[j, jj] + lam * coarse[j, jj + 1]

            this_cfl = h * smax / dx
            if this_cfl > out_max_cfl[j]:
                out_max_cfl[j] = this_cfl

            for k in range(kk1):
                f0[k] = w[1, k]
                f1[k] = w[1, k] * u[k] + p[k]
                f2[k] = (w[2, k] + p[k]) * u[k]
            for e in range(kk):
                a = s[e] if s[e] > s[e + 1] else s[e + 1]
                g0[e] = 0.5 * ((f0[e] + f0[e + 1]) - a * (w[0, e + 1] - w[0, e]))
                g1[e] = 0.5 * ((f1[e] + f1[e + 1]) - a * (w[1, e + 1] - w[1, e]))
                g2[e] = 0.5 * ((f2[e] + f2[e + 1]) - a * (w[2, e + 1] - w[2, e]))

            fuel = 1.0 if (t % tau) < burst else 0.0
            for k in range(1, kk):
                r = ratio_int[k - 1]
                wn[0, k] = w[0, k] + h * (-r * f0[k] - (g0[k] - g0[k - 1]) / dx)
                wn[1, k] = w[1, k] + h * (r * (p[k] - f1[k]) - (g1[k] - g1[k - 1]) / dx)
                wn[2, k] = w[2, k] + h * (
                    r * -f2[k] + fuel * profile_int[k - 1] - (g2[k] - g2[k - 1]) / dx
                )
            wn[0, kk] = w[0, kk - 1]
            wn[1, kk] = w[1, kk - 1]
            wn[2, kk] = w[2, kk - 1]
            wn[0, 0] = rho0
            wn[1, 0] = rho0 * u_next
            wn[2, 0] = e_coeff + (0.5 * rho0) * u_next * u_next

            tmp = w
            w = wn
            wn = tmp
            t += h
            n += 1
            out_n[j] += 1

            ok = True
            for k in range(kk1):
                rho = w[0, k]
                u[k] = w[1, k] / rho
                p[k] = (gamma - 1.0) * (w[2, k] - 0.5 * w[1, k] * u[k])
                c[k] = np.sqrt(gamma * p[k] / rho)
                s[k] = abs(c[k] + u[k])
                if not (rho > 0.0 and p[k] > 0.0 and np.isfinite(p[k])):
                    ok = False
            if not ok:
                out_invalid[j] = True
                out_invalid_t[j] = t
                break

            m1 = u[monitor_cell] / c[monitor_cell]
            if record_m1 and n < m1_out.shape[1]:
                m1_out[j, n] = m1
            if m1 < out_min[j]:
                out_min[j] = m1
            if not out_crossed[j] and m1 <= threshold:
                out_crossed[j] = True
                out_cross_t[j] = t
                if stop_on_cross:
                    break

            if t >= t_end - tiny:
                break

        w_final[j] = w

    return (
        out_min,
        out_crossed,
        out_cross_t,
        out_invalid,
        out_invalid_t,
        out_max_cfl,
        out_n,
        w_final,
    )
