"""Pure-Python twin of ``_kernels.pyx``, used when the extension is absent.

Same signatures, same arithmetic order; roughly two orders of magnitude
slower.
"""

import math

from .gc import _log_two_branch

LOG_2PI = 1.8378770664093453


def _pot_grad(kind, param, x):
    r2 = 0.0
    for v in x:
        r2 += v * v
    if kind == 0:
        return 0.5 * param * r2, [param * v for v in x]
    return param * (0.25 * r2 * r2 - 0.5 * r2), [param * (r2 - 1.0) * v for v in x]


def _wrap(x, L):
    if L <= 0.0:
        return False
    wrapped = False
    for i, v in enumerate(x):
        if v < -L or v >= L:
            y = math.fmod(v + L, 2.0 * L)
            if y < 0.0:
                y += 2.0 * L
            y -= L
            if y >= L:
                y = -L
            x[i] = y
            wrapped = True
    return wrapped


def _sigma_eps_terms(x, e):
    u = 1.0 / (1.0 + e * x * x)
    return math.sqrt(u), u, -2.0 * e * x * u * u


def em_block(pot_kind, pot_param, diff_kind, sigma, Sigma, Sigma_inv, eps, floor, half_width,
             exact, dt, x, noise, w_out, counters):
    d = x.shape[0]
    m = noise.shape[1]
    S = Sigma.tolist()
    Si = Sigma_inv.tolist()
    sg = sigma.tolist()
    xs = x.tolist()
    _, gx = _pot_grad(pot_kind, pot_param, xs)
    try:
        for i, row in enumerate(noise.tolist()):
            if diff_kind == 0:
                dx = [0.0] * d
                for j in range(d):
                    acc = 0.0
                    for k in range(d):
                        acc = acc + S[j][k] * gx[k]
                    dx[j] = -0.5 * acc * dt
                    acc = 0.0
                    for k in range(m):
                        acc = acc + sg[j][k] * row[k]
                    dx[j] = dx[j] + acc
                y = [xs[j] + dx[j] for j in range(d)]
                if not all(math.isfinite(v) for v in y):
                    counters[2] = i
                    return 2
                if _wrap(y, half_width):
                    counters[0] += 1
                _, gy = _pot_grad(pot_kind, pot_param, y)
                if exact:
                    rf = [0.0] * d
                    rb = [0.0] * d
                    for j in range(d):
                        acc = 0.0
                        for k in range(d):
                            acc = acc + S[j][k] * gx[k]
                        rf[j] = dx[j] + 0.5 * acc * dt
                        acc = 0.0
                        for k in range(d):
                            acc = acc + S[j][k] * gy[k]
                        rb[j] = -dx[j] + 0.5 * acc * dt
                    qf = 0.0
                    qb = 0.0
                    for j in range(d):
                        for k in range(d):
                            qf = qf + rf[j] * Si[j][k] * rf[k]
                            qb = qb + rb[j] * Si[j][k] * rb[k]
                    w = -(qf - qb) / (2.0 * dt)
                else:
                    w = 0.0
                    for j in range(d):
                        w = w + dx[j] * (gx[j] + gy[j])
                    w = -0.5 * w
            else:
                sx, Sx, dSx = _sigma_eps_terms(xs[0], eps)
                if not Sx >= floor:
                    counters[2] = i
                    return 1
                bx = -0.5 * Sx * gx[0] + 0.5 * dSx
                dx0 = bx * dt + sx * row[0]
                y = [xs[0] + dx0]
                if not math.isfinite(y[0]):
                    counters[2] = i
                    return 2
                if _wrap(y, half_width):
                    counters[0] += 1
                _, gy = _pot_grad(pot_kind, pot_param, y)
                sy, Sy, dSy = _sigma_eps_terms(y[0], eps)
                if not Sy >= floor:
                    xs = y
                    counters[2] = i
                    return 1
                if exact:
                    by = -0.5 * Sy * gy[0] + 0.5 * dSy
                    rf = dx0 - bx * dt
                    rb = -dx0 - by * dt
                    w = ((-0.5 * math.log(Sx) - rf * rf / (2.0 * Sx * dt))
                         - (-0.5 * math.log(Sy) - rb * rb / (2.0 * Sy * dt)))
                else:
                    w = (-0.5 * dx0 * (gx[0] + gy[0]) + 0.5 * dx0 * (dSy / Sy + dSx / Sx)
                         + dx0 * dx0 / (2.0 * dt) * (1.0 / Sy - 1.0 / Sx))
            w_out[i] = w
            xs = y
            gx = gy
    finally:
        x[:] = xs
    return 0


def milstein_block(pot_kind, pot_param, diff_kind, sigma0, eps, floor, half_width, exact, dt,
                   x, noise, w_out, counters):
    xv = float(x[0])
    _, g = _pot_grad(pot_kind, pot_param, [xv])
    gx = g[0]
    try:
        for i, dw in enumerate(noise[:, 0].tolist()):
            if diff_kind == 0:
                sx, Sx, dSx = sigma0, sigma0 * sigma0, 0.0
            else:
                sx, Sx, dSx = _sigma_eps_terms(xv, eps)
            if not Sx >= floor:
                counters[2] = i
                return 1
            ax = -0.5 * Sx * gx + 0.25 * dSx
            dx0 = ax * dt + sx * dw + 0.25 * dSx * dw * dw
            yy = [xv + dx0]
            if not math.isfinite(yy[0]):
                counters[2] = i
                return 2
            if _wrap(yy, half_width):
                counters[0] += 1
            y = yy[0]
            _, g = _pot_grad(pot_kind, pot_param, yy)
            gy = g[0]
            if diff_kind == 0:
                sy, Sy, dSy = sigma0, sigma0 * sigma0, 0.0
            else:
                sy, Sy, dSy = _sigma_eps_terms(y, eps)
            if not Sy >= floor:
                xv = y
                counters[2] = i
                return 1
            ay = -0.5 * Sy * gy + 0.25 * dSy
            rf = dx0 - ax * dt
            Zf = Sx + dSx * rf
            rb = -dx0 - ay * dt
            Zb = Sy + dSy * rb
            if exact:
                lf = _log_two_branch(sx, Sx, dSx, rf, Zf, dt)
                lb = _log_two_branch(sy, Sy, dSy, rb, Zb, dt)
                w = math.inf if lb == -math.inf else lf - lb
            elif Zb <= 0.0:
                w = math.inf
            else:
                uf = 2.0 * rf / (sx + math.sqrt(Zf))
                ub = 2.0 * rb / (sy + math.sqrt(Zb))
                w = -0.5 * math.log(Zf / Zb) - (uf * uf - ub * ub) / (2.0 * dt)
            if not math.isfinite(w):
                counters[1] += 1
            w_out[i] = w
            xv = y
            gx = gy
    finally:
        x[0] = xv
    return 0


def bbk_block(pot_kind, pot_param, mass, gamma, sigma, beta, half_width, exact, dt,
              q, p, noise, w_out, counters):
    d = q.shape[0]
    a = gamma * dt / (2.0 * mass)
    vq = sigma * sigma * dt * dt * dt / (2.0 * mass * mass)
    vp = sigma * sigma * dt / 2.0 / ((1.0 + a) * (1.0 + a))
    qs = q.tolist()
    ps = p.tolist()
    _, g = _pot_grad(pot_kind, pot_param, qs)
    try:
        for i, row in enumerate(noise.tolist()):
            ph = [ps[j] - g[j] * (dt / 2) - (gamma / mass) * ps[j] * (dt / 2) + sigma * row[j]
                  for j in range(d)]
            dq = [v * (dt / mass) for v in ph]
            qn = [qs[j] + dq[j] for j in range(d)]
            if not all(math.isfinite(v) for v in qn):
                counters[2] = i
                return 2
            if _wrap(qn, half_width):
                counters[0] += 1
            _, gn = _pot_grad(pot_kind, pot_param, qn)
            pn = [(ph[j] - gn[j] * (dt / 2) + sigma * row[d + j]) / (1.0 + gamma * dt / (2 * mass))
                  for j in range(d)]
            if exact:
                qf = 0.0
                qb = 0.0
                for j in range(d):
                    rq = dq[j] - (dt / mass) * ((1 - a) * ps[j] - g[j] * (dt / 2))
                    rp = pn[j] - (mass * dq[j] / dt - gn[j] * (dt / 2)) / (1 + a)
                    rqb = -dq[j] - (dt / mass) * ((1 - a) * (-pn[j]) - gn[j] * (dt / 2))
                    rpb = -ps[j] - (mass * (-dq[j]) / dt - g[j] * (dt / 2)) / (1 + a)
                    qf = qf + rq * rq / (2 * vq) + rp * rp / (2 * vp)
                    qb = qb + rqb * rqb / (2 * vq) + rpb * rpb / (2 * vp)
                w = qb - qf
            else:
                t1 = 0.0
                t2 = 0.0
                t3 = 0.0
                for j in range(d):
                    t1 = t1 + (pn[j] - ps[j]) * dq[j]
                    t2 = t2 + g[j] * ps[j]
                    t3 = t3 + gn[j] * pn[j]
                w = (beta / dt) * (t1 - dt * dt / (2 * mass) * (t2 + t3))
            w_out[i] = w
            qs, ps, g = qn, pn, gn
    finally:
        q[:] = qs
        p[:] = ps
    return 0
