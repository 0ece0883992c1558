# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled chain kernels.

Each ``*_block`` function advances one chain over a block of pre-drawn
Brownian increments, updating the state in place and writing one GC
increment per step into ``w_out``.  ``counters`` accumulates
[n_wraps, n_singular, failing step].  Return status: 0 ok, 1 diffusion
below floor, 2 non-finite state.  Must stay in lockstep with _pykernels.py.
"""

from libc.math cimport sqrt, log, exp, log1p, fabs, fmod, isfinite, INFINITY

cdef double LOG_2PI = 1.8378770664093453
cdef double BRANCH_TOL = 1e-12


cdef inline double pot_grad(int kind, double param, const double* x, double* g, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i
    cdef double r2 = 0.0
    for i in range(d):
        r2 += x[i] * x[i]
    if kind == 0:
        for i in range(d):
            g[i] = param * x[i]
        return 0.5 * param * r2
    for i in range(d):
        g[i] = param * (r2 - 1.0) * x[i]
    return param * (0.25 * r2 * r2 - 0.5 * r2)


cdef inline int wrap(double* x, Py_ssize_t d, double L) noexcept nogil:
    cdef Py_ssize_t i
    cdef int wrapped = 0
    cdef double y
    if L <= 0.0:
        return 0
    for i in range(d):
        if x[i] < -L or x[i] >= L:
            y = fmod(x[i] + L, 2.0 * L)
            if y < 0.0:
                y += 2.0 * L
            y -= L
            if y >= L:
                y = -L
            x[i] = y
            wrapped = 1
    return wrapped


cdef inline void sigma_eps_terms(double x, double e, double* s, double* S, double* dS) noexcept nogil:
    cdef double u = 1.0 / (1.0 + e * x * x)
    s[0] = sqrt(u)
    S[0] = u
    dS[0] = -2.0 * e * x * u * u


cdef inline double log_two_branch(double s, double dS, double r, double Z, double dt) noexcept nogil:
    cdef double sq, u1, a1, u2, a2, lo, hi, lse
    if Z < 0.0:
        return -INFINITY
    if Z == 0.0:
        return INFINITY
    sq = sqrt(Z)
    u1 = 2.0 * r / (s + sq)
    a1 = u1 * u1 / (2.0 * dt)
    if fabs(dS) > BRANCH_TOL:
        u2 = (s + sq) / (0.5 * dS)
        a2 = u2 * u2 / (2.0 * dt)
        if a1 <= a2:
            lo = a1
            hi = a2
        else:
            lo = a2
            hi = a1
        lse = -lo + log1p(exp(lo - hi))
    else:
        lse = -a1
    return -0.5 * (LOG_2PI + log(dt * Z)) + lse


cdef int _em_block(int pot_kind, double pot_param, int diff_kind,
             const double[:, ::1] sigma, const double[:, ::1] Sigma, const double[:, ::1] Sigma_inv,
             double eps, double floor, double half_width, int exact, double dt,
             double[::1] x, const double[:, ::1] noise, double[::1] w_out, long long[::1] counters) noexcept nogil:
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t m = noise.shape[1]
    cdef Py_ssize_t n = noise.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double w, acc, qf, qb
    cdef double sx, Sx, dSx, sy, Sy, dSy, bx, by, dx0, y0, rf, rb
    cdef double[64] gx
    cdef double[64] gy
    cdef double[64] dx
    cdef double[64] y
    cdef double[64] rfv
    cdef double[64] rbv
    pot_grad(pot_kind, pot_param, &x[0], gx, d)
    for i in range(n):
        if diff_kind == 0:
            for j in range(d):
                acc = 0.0
                for k in range(d):
                    acc = acc + Sigma[j, k] * gx[k]
                dx[j] = -0.5 * acc * dt
                acc = 0.0
                for k in range(m):
                    acc = acc + sigma[j, k] * noise[i, k]
                dx[j] = dx[j] + acc
            for j in range(d):
                y[j] = x[j] + dx[j]
                if not isfinite(y[j]):
                    counters[2] = i
                    return 2
            if wrap(y, d, half_width):
                counters[0] += 1
            pot_grad(pot_kind, pot_param, y, gy, d)
            if exact:
                for j in range(d):
                    acc = 0.0
                    for k in range(d):
                        acc = acc + Sigma[j, k] * gx[k]
                    rfv[j] = dx[j] + 0.5 * acc * dt
                    acc = 0.0
                    for k in range(d):
                        acc = acc + Sigma[j, k] * gy[k]
                    rbv[j] = -dx[j] + 0.5 * acc * dt
                qf = 0.0
                qb = 0.0
                for j in range(d):
                    for k in range(d):
                        qf = qf + rfv[j] * Sigma_inv[j, k] * rfv[k]
                        qb = qb + rbv[j] * Sigma_inv[j, k] * rbv[k]
                w = -(qf - qb) / (2.0 * dt)
            else:
                w = 0.0
                for j in range(d):
                    w = w + dx[j] * (gx[j] + gy[j])
                w = -0.5 * w
        else:
            sigma_eps_terms(x[0], eps, &sx, &Sx, &dSx)
            if not Sx >= floor:
                counters[2] = i
                return 1
            bx = -0.5 * Sx * gx[0] + 0.5 * dSx
            dx0 = bx * dt + sx * noise[i, 0]
            y[0] = x[0] + dx0
            if not isfinite(y[0]):
                counters[2] = i
                return 2
            if wrap(y, 1, half_width):
                counters[0] += 1
            pot_grad(pot_kind, pot_param, y, gy, 1)
            sigma_eps_terms(y[0], eps, &sy, &Sy, &dSy)
            if not Sy >= floor:
                x[0] = y[0]
                counters[2] = i
                return 1
            if exact:
                by = -0.5 * Sy * gy[0] + 0.5 * dSy
                rf = dx0 - bx * dt
                rb = -dx0 - by * dt
                w = (-0.5 * log(Sx) - rf * rf / (2.0 * Sx * dt)) - (-0.5 * log(Sy) - rb * rb / (2.0 * Sy * dt))
            else:
                w = (-0.5 * dx0 * (gx[0] + gy[0]) + 0.5 * dx0 * (dSy / Sy + dSx / Sx)
                     + dx0 * dx0 / (2.0 * dt) * (1.0 / Sy - 1.0 / Sx))
        w_out[i] = w
        for j in range(d):
            x[j] = y[j]
            gx[j] = gy[j]
    return 0


def em_block(int pot_kind, double pot_param, int diff_kind,
             const double[:, ::1] sigma, const double[:, ::1] Sigma, const double[:, ::1] Sigma_inv,
             double eps, double floor, double half_width, int exact, double dt,
             double[::1] x, const double[:, ::1] noise, double[::1] w_out, long long[::1] counters):
    if x.shape[0] > 64:
        raise ValueError("compiled EM kernel supports d <= 64")
    cdef int status
    with nogil:
        status = _em_block(pot_kind, pot_param, diff_kind, sigma, Sigma, Sigma_inv, eps, floor, half_width, exact, dt, x, noise, w_out, counters)
    return status



cdef int _milstein_block(int pot_kind, double pot_param, int diff_kind, double sigma0,
                   double eps, double floor, double half_width, int exact, double dt,
                   double[::1] x, const double[:, ::1] noise, double[::1] w_out, long long[::1] counters) noexcept nogil:
    cdef Py_ssize_t n = noise.shape[0]
    cdef Py_ssize_t i
    cdef double sx, Sx, dSx, sy, Sy, dSy, ax, ay, dw, dx0, rf, rb, Zf, Zb, lf, lb, w, uf, ub
    cdef double gx, gy, y
    cdef double[1] g
    cdef double[1] yy
    pot_grad(pot_kind, pot_param, &x[0], g, 1)
    gx = g[0]
    for i in range(n):
        if diff_kind == 0:
            sx = sigma0
            Sx = sigma0 * sigma0
            dSx = 0.0
        else:
            sigma_eps_terms(x[0], eps, &sx, &Sx, &dSx)
        if not Sx >= floor:
            counters[2] = i
            return 1
        ax = -0.5 * Sx * gx + 0.25 * dSx
        dw = noise[i, 0]
        dx0 = ax * dt + sx * dw + 0.25 * dSx * dw * dw
        yy[0] = x[0] + dx0
        if not isfinite(yy[0]):
            counters[2] = i
            return 2
        if wrap(yy, 1, half_width):
            counters[0] += 1
        y = yy[0]
        pot_grad(pot_kind, pot_param, yy, g, 1)
        gy = g[0]
        if diff_kind == 0:
            sy = sigma0
            Sy = sigma0 * sigma0
            dSy = 0.0
        else:
            sigma_eps_terms(y, eps, &sy, &Sy, &dSy)
        if not Sy >= floor:
            x[0] = y
            counters[2] = i
            return 1
        ay = -0.5 * Sy * gy + 0.25 * dSy
        rf = dx0 - ax * dt
        Zf = Sx + dSx * rf
        rb = -dx0 - ay * dt
        Zb = Sy + dSy * rb
        if exact:
            lf = log_two_branch(sx, dSx, rf, Zf, dt)
            lb = log_two_branch(sy, dSy, rb, Zb, dt)
            if lb == -INFINITY:
                w = INFINITY
            else:
                w = lf - lb
        else:
            if Zb <= 0.0:
                w = INFINITY
            else:
                uf = 2.0 * rf / (sx + sqrt(Zf))
                ub = 2.0 * rb / (sy + sqrt(Zb))
                w = -0.5 * log(Zf / Zb) - (uf * uf - ub * ub) / (2.0 * dt)
        if not isfinite(w):
            counters[1] += 1
        w_out[i] = w
        x[0] = y
        gx = gy
    return 0


def milstein_block(int pot_kind, double pot_param, int diff_kind, double sigma0,
                   double eps, double floor, double half_width, int exact, double dt,
                   double[::1] x, const double[:, ::1] noise, double[::1] w_out, long long[::1] counters):
    cdef int status
    with nogil:
        status = _milstein_block(pot_kind, pot_param, diff_kind, sigma0, eps, floor, half_width, exact, dt, x, noise, w_out, counters)
    return status



cdef int _bbk_block(int pot_kind, double pot_param, double mass, double gamma, double sigma, double beta,
              double half_width, int exact, double dt,
              double[::1] q, double[::1] p, const double[:, ::1] noise, double[::1] w_out,
              long long[::1] counters) noexcept nogil:
    cdef Py_ssize_t d = q.shape[0]
    cdef Py_ssize_t n = noise.shape[0]
    cdef Py_ssize_t i, j
    cdef double a = gamma * dt / (2.0 * mass)
    cdef double vq = sigma * sigma * dt * dt * dt / (2.0 * mass * mass)
    cdef double vp = sigma * sigma * dt / 2.0 / ((1.0 + a) * (1.0 + a))
    cdef double w, t1, t2, t3, rq, rp, rqb, rpb, qf, qb
    cdef double[256] g
    cdef double[256] gn
    cdef double[256] ph
    cdef double[256] dq
    cdef double[256] qn
    cdef double[256] pn
    pot_grad(pot_kind, pot_param, &q[0], g, d)
    for i in range(n):
        for j in range(d):
            ph[j] = p[j] - g[j] * (dt / 2) - (gamma / mass) * p[j] * (dt / 2) + sigma * noise[i, j]
            dq[j] = ph[j] * (dt / mass)
            qn[j] = q[j] + dq[j]
            if not isfinite(qn[j]):
                counters[2] = i
                return 2
        if wrap(qn, d, half_width):
            counters[0] += 1
        pot_grad(pot_kind, pot_param, qn, gn, d)
        for j in range(d):
            pn[j] = (ph[j] - gn[j] * (dt / 2) + sigma * noise[i, d + j]) / (1.0 + gamma * dt / (2 * mass))
        if exact:
            qf = 0.0
            qb = 0.0
            for j in range(d):
                rq = dq[j] - (dt / mass) * ((1 - a) * p[j] - g[j] * (dt / 2))
                rp = pn[j] - (mass * dq[j] / dt - gn[j] * (dt / 2)) / (1 + a)
                rqb = -dq[j] - (dt / mass) * ((1 - a) * (-pn[j]) - gn[j] * (dt / 2))
                rpb = -p[j] - (mass * (-dq[j]) / dt - g[j] * (dt / 2)) / (1 + a)
                qf = qf + rq * rq / (2 * vq) + rp * rp / (2 * vp)
                qb = qb + rqb * rqb / (2 * vq) + rpb * rpb / (2 * vp)
            w = qb - qf
        else:
            t1 = 0.0
            t2 = 0.0
            t3 = 0.0
            for j in range(d):
                t1 = t1 + (pn[j] - p[j]) * dq[j]
                t2 = t2 + g[j] * p[j]
                t3 = t3 + gn[j] * pn[j]
            w = (beta / dt) * (t1 - dt * dt / (2 * mass) * (t2 + t3))
        w_out[i] = w
        for j in range(d):
            q[j] = qn[j]
            p[j] = pn[j]
            g[j] = gn[j]
    return 0


def bbk_block(int pot_kind, double pot_param, double mass, double gamma, double sigma, double beta,
              double half_width, int exact, double dt,
              double[::1] q, double[::1] p, const double[:, ::1] noise, double[::1] w_out,
              long long[::1] counters):
    if q.shape[0] > 256:
        raise ValueError("compiled BBK kernel supports N*d <= 256")
    cdef int status
    with nogil:
        status = _bbk_block(pot_kind, pot_param, mass, gamma, sigma, beta, half_width, exact, dt, q, p, noise, w_out, counters)
    return status
