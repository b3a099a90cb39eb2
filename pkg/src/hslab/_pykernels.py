"""Pure numpy time-stepping kernel, used when the compiled extension is absent.

Same contract and arithmetic as ``hslab._ckernels.advance``.
"""
import numpy as np

ST_OK, ST_NONFINITE, ST_MAXSTEPS = 0, 1, 2
# keeps dt finite when nothing is stiff
RATE_FLOOR = 1e-8


def advance(rho, t0, t1, m_a, m_b, mf_a, mf_b, bf_a, bf_b, f_a, f_b,
            vol, aflux, h, k, safety, reg_n, vcap, max_steps, dt_fixed=0.0):
    nb, n = rho.shape
    source = np.zeros(nb)
    clamped = np.zeros(nb)
    caps = np.zeros(nb, dtype=np.int64)
    span = t1 - t0
    tol_end = 1e-14 * max(abs(t1), 1.0)
    t = t0
    steps = 0
    status = ST_OK
    last_dt = 0.0
    a_in = aflux[:-1]
    a_out = aflux[1:]
    G = np.zeros((nb, n + 1))

    while t < t1 - tol_end:
        if steps >= max_steps:
            status = ST_MAXSTEPS
            break
        s = (t - t0) / span if span > 0 else 0.0
        m = m_a + s * (m_b - m_a)
        f = f_a + s * (f_b - f_a)
        mf = mf_a + s * (mf_b - mf_a)
        bf = bf_a + s * (bf_b - bf_a)

        v = rho / m
        over = v > vcap
        if over.any():
            caps += over.sum(axis=1)
            v = np.where(over, vcap, v)
        pos = v > 0.0
        vk1 = np.where(pos, np.power(np.where(pos, v, 1.0), k - 1.0), 0.0)
        q = vk1 * v
        rate = k * vk1 / m * (a_in * mf[:-1] + a_out * mf[1:]) / (h * vol)
        rate = rate + (a_out * np.maximum(-bf[1:], 0.0) + a_in * np.maximum(bf[:-1], 0.0)) / vol
        rate = rate + np.abs(f)
        rmax = float(rate.max())
        if dt_fixed > 0.0:
            dt = dt_fixed
        else:
            dt = safety * h * h / (h * h * rmax + RATE_FLOOR)
        dt = min(dt, t1 - t)

        bi = bf[1:-1]
        up = np.where(bi > 0.0, rho[:, 1:], rho[:, :-1])
        G[:, 1:-1] = aflux[1:-1] * (mf[1:-1] * (q[:, 1:] - q[:, :-1]) / h + bi * up)
        source += dt * np.sum(vol * f * rho, axis=1)
        new = rho + dt * ((G[:, 1:] - G[:, :-1]) / vol + f * rho)
        flo = m / reg_n if reg_n > 0.0 else np.zeros(n)
        low = new < flo
        if low.any():
            clamped += np.sum(np.where(low, vol * (flo - new), 0.0), axis=1)
            new = np.where(low, flo, new)
        if not np.all(np.isfinite(new)):
            rho[:] = new
            status = ST_NONFINITE
            break
        rho[:] = new
        t += dt
        last_dt = dt
        steps += 1
    if status == ST_OK and t >= t1 - tol_end:
        t = t1
    return t, steps, status, last_dt, source, clamped, caps
